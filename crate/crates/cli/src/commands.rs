use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::{info, warn};
use zshash::dataset::{load_dataset, load_model, save_dataset, save_model, synth_dataset, SynthSpec};
use zshash::maxmargin::encode;
use zshash::protocol::{
    adapt_stream, evaluate, query_split, sweep_seen_ratio, sweep_train_size, Evaluation, SweepRow,
};
use zshash::spectral::train;
use zshash::Dataset;

use crate::config::{RunConfig, DEFAULT_BITS, SWEEP_BITS};
use crate::{CliError, Command};

pub fn dispatch(command: Command, config: &RunConfig) -> Result<(), CliError> {
    match command {
        Command::Synth => synth(config),
        Command::Train => cmd_train(config),
        Command::Adapt => cmd_adapt(config),
        Command::Encode => cmd_encode(config),
        Command::Eval => cmd_eval(config),
        Command::SweepSeenRatio => cmd_sweep_seen_ratio(config),
        Command::SweepTrainSize => cmd_sweep_train_size(config),
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_data(config: &RunConfig) -> Result<Dataset, CliError> {
    let dataset = load_dataset(config.require_data()?)?;
    Ok(if config.normalize {
        dataset.normalized()
    } else {
        dataset
    })
}

fn synth(config: &RunConfig) -> Result<(), CliError> {
    let out = config.require_out()?;
    let dataset = synth_dataset(SynthSpec {
        seed: config.seed,
        ..config.synth
    })
    .map_err(|e| CliError::Usage(e.to_string()))?;
    save_dataset(&dataset, out)?;
    println!(
        "wrote {} images, {} classes ({} seen) to {}",
        dataset.len(),
        dataset.n_classes(),
        dataset.seen_classes.len(),
        out.display()
    );
    Ok(())
}

fn cmd_train(config: &RunConfig) -> Result<(), CliError> {
    let out = config.require_out()?;
    let dataset = load_data(config)?;
    let bits = config.bits_or(DEFAULT_BITS);
    let trained = train(&dataset, &config.params, bits)?;
    save_model(&trained.model, out)?;

    let log = &trained.log;
    let mut csv = String::from("stage,step,metric,value\n");
    let _ = writeln!(csv, "graph,0,sigma,{}", log.sigma);
    let _ = writeln!(csv, "graph,0,n_train,{}", log.n_train);
    for (k, e) in log.eigenvalues.iter().enumerate() {
        let _ = writeln!(csv, "spectral,{k},eigenvalue,{e}");
    }
    let _ = writeln!(csv, "spectral,0,code_objective,{}", log.code_objective);
    let _ = writeln!(csv, "spectral,0,inter_modal_loss,{}", log.inter_modal_loss);
    for (i, (h, c)) in log.hinge_objectives.iter().zip(&log.refit_changes).enumerate() {
        let _ = writeln!(csv, "maxmargin,{i},hinge_objective,{h}");
        let _ = writeln!(csv, "maxmargin,{i},relative_change,{c}");
    }
    let _ = writeln!(csv, "maxmargin,0,bit_agreement,{}", log.bit_agreement);
    write_file(out, "train_log.csv", &csv)?;

    println!(
        "trained {bits}-bit model on {} images; bit agreement {:.4}; wrote {}",
        log.n_train,
        log.bit_agreement,
        out.display()
    );
    Ok(())
}

fn cmd_adapt(config: &RunConfig) -> Result<(), CliError> {
    let out = config.require_out()?;
    let model = load_model(config.require_model()?)?;
    let dataset = load_data(config)?;
    let (adapted, batches) = adapt_stream(&model, &dataset, &config.params, config.seed)?;
    save_model(&adapted, out)?;
    let mut csv = String::from("batch,size,iterations,converged\n");
    for (i, b) in batches.iter().enumerate() {
        let _ = writeln!(csv, "{i},{},{},{}", b.size, b.iterations, b.converged);
    }
    write_file(out, "adapt_log.csv", &csv)?;
    let converged = batches.iter().filter(|b| b.converged).count();
    println!(
        "adapted over {} batches ({converged} reached a fixed point); wrote {}",
        batches.len(),
        out.display()
    );
    Ok(())
}

fn cmd_encode(config: &RunConfig) -> Result<(), CliError> {
    let out = config.require_out()?;
    let model = load_model(config.require_model()?)?;
    let dataset = load_data(config)?;
    let codes = encode(&dataset.features, &model.w_img)?;
    let mut csv = String::with_capacity(codes.len() * codes.bits() * 3);
    for i in 0..codes.len() {
        let row: Vec<&str> = codes
            .row_bits(i)
            .iter()
            .map(|&b| if b { "1" } else { "-1" })
            .collect();
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    write_file(out, "codes.csv", &csv)?;
    println!("encoded {} images with {} bits", codes.len(), codes.bits());
    Ok(())
}

fn cmd_eval(config: &RunConfig) -> Result<(), CliError> {
    let out = config.require_out()?;
    let model = load_model(config.require_model()?)?;
    let dataset = load_data(config)?;
    let split = query_split(&dataset, config.query_count, config.seed)?;
    info!("{} queries, {} database images", split.queries.len(), split.database.len());

    let mut results: Vec<(&str, Evaluation)> = Vec::new();
    if model.adapted {
        results.push(("ours-da", evaluate(&model, &dataset, &split)?));
    } else {
        results.push(("ours", evaluate(&model, &dataset, &split)?));
        if !config.no_da {
            let (adapted, _) = adapt_stream(&model, &dataset, &config.params, config.seed)?;
            results.push(("ours-da", evaluate(&adapted, &dataset, &split)?));
        }
    }

    let bits = model.bits;
    let mut map = String::from("model,bits,map\n");
    let mut pr = String::from("model,threshold,recall,precision\n");
    let mut p2 = String::from("model,bits,precision\n");
    for (name, e) in &results {
        let _ = writeln!(map, "{name},{bits},{:.6}", e.map);
        let _ = writeln!(p2, "{name},{bits},{:.6}", e.precision_r2);
        for p in &e.pr_curve {
            let _ = writeln!(pr, "{name},{},{:.6},{:.6}", p.threshold, p.recall, p.precision);
        }
        println!("{name:8} {bits:4} bits  MAP {:.4}  precision@r<=2 {:.4}", e.map, e.precision_r2);
    }
    write_file(out, "map.csv", &map)?;
    write_file(out, "pr_curve.csv", &pr)?;
    write_file(out, "precision_r2.csv", &p2)
}

fn sweep_data(config: &RunConfig) -> Result<Dataset, CliError> {
    if config.data.is_some() {
        return load_data(config);
    }
    let dataset = synth_dataset(SynthSpec {
        seed: config.seed,
        ..config.sweep_synth
    })
    .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(if config.normalize {
        dataset.normalized()
    } else {
        dataset
    })
}

fn sweep_csv(first: &str, rows: &[SweepRow]) -> String {
    let mut csv = format!("{first},n_seen,n_train,model,map,precision_r2\n");
    for r in rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{:.6},{:.6}",
            r.setting, r.n_seen_classes, r.n_train, r.variant, r.map, r.precision_r2
        );
        println!(
            "{first} {:<5} {:8} MAP {:.4}  precision@r<=2 {:.4}",
            r.setting, r.variant, r.map, r.precision_r2
        );
    }
    csv
}

fn cmd_sweep_seen_ratio(config: &RunConfig) -> Result<(), CliError> {
    let out = config.require_out()?;
    if config.ratios.is_empty() {
        return Err(CliError::Usage("ratios is empty".into()));
    }
    let dataset = sweep_data(config)?;
    let bits = config.bits_or(SWEEP_BITS);
    let rows = sweep_seen_ratio(
        &dataset,
        &config.params,
        bits,
        config.seed,
        config.query_count,
        &config.ratios,
        !config.no_da,
    )?;
    write_file(out, "seen_ratio.csv", &sweep_csv("ratio", &rows))
}

fn cmd_sweep_train_size(config: &RunConfig) -> Result<(), CliError> {
    let out = config.require_out()?;
    if config.train_sizes.is_empty() {
        return Err(CliError::Usage("train_sizes is empty".into()));
    }
    let dataset = sweep_data(config)?;
    let bits = config.bits_or(SWEEP_BITS);
    if let Some(&small) = config.train_sizes.iter().min() {
        if small < bits {
            warn!("training size {small} is below the code length {bits}");
        }
    }
    let rows = sweep_train_size(
        &dataset,
        &config.params,
        bits,
        config.seed,
        config.query_count,
        &config.train_sizes,
        !config.no_da,
    )?;
    write_file(out, "train_size.csv", &sweep_csv("size", &rows))
}
