//! Experiment protocol: query/database split, evaluation, adaptation streams
//! and the seen-ratio and training-size sweeps.

use std::collections::BTreeSet;

use log::{debug, info, warn};
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adapt::{adapt, MAX_ITERATIONS};
use crate::dataset::{Dataset, HashModel, HyperParams};
use crate::error::{Error, Result};
use crate::maxmargin::encode;
use crate::retrieval::{Labelled, PackedCodes, PrPoint};
use crate::spectral::{train, TrainLog};

pub const DEFAULT_QUERY_COUNT: usize = 2500;
pub const PRECISION_RADIUS: u32 = 2;

// Independent streams derived from the user seed.
const QUERY_STREAM: u64 = 0x0071_7565_7279;
const ADAPT_STREAM: u64 = 0x0061_6461_7074;
const SPLIT_STREAM: u64 = 0x0073_706c_6974;
const SIZE_STREAM: u64 = 0x7369_7a65;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Query and database image indices; the two are disjoint and cover the dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuerySplit {
    pub queries: Vec<usize>,
    pub database: Vec<usize>,
}

/// Samples up to `query_count` unseen images as queries, never more than half
/// of them so the database keeps examples of every unseen class. Everything
/// else, seen images included, forms the database.
pub fn query_split(dataset: &Dataset, query_count: usize, seed: u64) -> Result<QuerySplit> {
    let unseen = dataset.unseen_indices();
    let count = query_count.min(unseen.len() / 2);
    if count == 0 {
        return Err(Error::invalid(format!(
            "query set is empty ({} unseen images, query_count {query_count})",
            unseen.len()
        )));
    }
    if count < query_count {
        info!("query count capped at {count} of {} unseen images", unseen.len());
    }
    let mut picked: Vec<usize> = index::sample(&mut rng(seed, QUERY_STREAM), unseen.len(), count)
        .into_iter()
        .map(|i| unseen[i])
        .collect();
    picked.sort_unstable();
    let is_query: BTreeSet<usize> = picked.iter().copied().collect();
    let database = (0..dataset.len()).filter(|i| !is_query.contains(i)).collect();
    Ok(QuerySplit {
        queries: picked,
        database,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub map: f64,
    pub precision_r2: f64,
    pub pr_curve: Vec<PrPoint>,
}

/// Encodes every image with `model` and scores the split. Labels enter only
/// through relevance.
pub fn evaluate(model: &HashModel, dataset: &Dataset, split: &QuerySplit) -> Result<Evaluation> {
    let codes = |idx: &[usize]| -> Result<PackedCodes> {
        Ok(PackedCodes::pack(&encode(&dataset.features_of(idx), &model.w_img)?))
    };
    let labels = |idx: &[usize]| -> Vec<usize> { idx.iter().map(|&i| dataset.labels[i]).collect() };
    let (queries, db) = (codes(&split.queries)?, codes(&split.database)?);
    let (query_labels, db_labels) = (labels(&split.queries), labels(&split.database));
    let scored = Labelled {
        queries: &queries,
        query_labels: &query_labels,
        db: &db,
        db_labels: &db_labels,
    };
    Ok(Evaluation {
        map: scored.mean_average_precision()?,
        precision_r2: scored.mean_precision_at_radius(PRECISION_RADIUS)?,
        pr_curve: scored.pr_curve()?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchLog {
    pub size: usize,
    pub iterations: usize,
    pub converged: bool,
}

/// Streams every unseen image, in a seeded order, through [`adapt`] in
/// batches of `params.batch`, threading `W*` from batch to batch.
pub fn adapt_stream(
    model: &HashModel,
    dataset: &Dataset,
    params: &HyperParams,
    seed: u64,
) -> Result<(HashModel, Vec<BatchLog>)> {
    params.validate()?;
    let mut order = dataset.unseen_indices();
    if order.is_empty() {
        warn!("no unseen images to adapt to; model left unchanged");
        return Ok((model.clone(), Vec::new()));
    }
    order.shuffle(&mut rng(seed, ADAPT_STREAM));
    let classes: Vec<usize> = dataset.unseen_classes.iter().copied().collect();
    let y_nu = dataset.attributes_of(&classes);

    let mut current = model.clone();
    let mut logs = Vec::new();
    for batch in order.chunks(params.batch) {
        let out = adapt(&current, &dataset.features_of(batch), &y_nu, params)?;
        debug!("adaptation batch {}: {} iterations", logs.len(), out.iterations);
        logs.push(BatchLog {
            size: batch.len(),
            iterations: out.iterations,
            converged: out.converged,
        });
        current = out.model;
    }
    let stalled = logs.iter().filter(|l| !l.converged).count();
    if stalled > 0 {
        warn!(
            "{stalled} of {} adaptation batches stopped at {MAX_ITERATIONS} iterations without a fixed point",
            logs.len()
        );
    }
    Ok((current, logs))
}

#[derive(Debug, Clone)]
pub struct ZeroShotRun {
    pub model: HashModel,
    pub adapted: Option<HashModel>,
    pub ours: Evaluation,
    pub ours_da: Option<Evaluation>,
    pub train_log: TrainLog,
    pub batches: Vec<BatchLog>,
}

/// Train on seen classes, evaluate on unseen queries, and optionally adapt
/// and evaluate again on the same split.
pub fn run_zero_shot(
    dataset: &Dataset,
    params: &HyperParams,
    bits: usize,
    seed: u64,
    query_count: usize,
    with_adaptation: bool,
) -> Result<ZeroShotRun> {
    let split = query_split(dataset, query_count, seed)?;
    let trained = train(dataset, params, bits)?;
    let ours = evaluate(&trained.model, dataset, &split)?;
    let (adapted, ours_da, batches) = if with_adaptation {
        let (adapted, batches) = adapt_stream(&trained.model, dataset, params, seed)?;
        let eval = evaluate(&adapted, dataset, &split)?;
        (Some(adapted), Some(eval), batches)
    } else {
        (None, None, Vec::new())
    };
    Ok(ZeroShotRun {
        model: trained.model,
        adapted,
        ours,
        ours_da,
        train_log: trained.log,
        batches,
    })
}

/// One row of a sweep; `variant` is `"ours"` or `"ours-da"`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub setting: f64,
    pub n_seen_classes: usize,
    pub n_train: usize,
    pub variant: &'static str,
    pub map: f64,
    pub precision_r2: f64,
}

fn rows_for(setting: f64, n_seen_classes: usize, run: &ZeroShotRun) -> Vec<SweepRow> {
    let row = |variant, e: &Evaluation| SweepRow {
        setting,
        n_seen_classes,
        n_train: run.train_log.n_train,
        variant,
        map: e.map,
        precision_r2: e.precision_r2,
    };
    let mut rows = vec![row("ours", &run.ours)];
    if let Some(e) = &run.ours_da {
        rows.push(row("ours-da", e));
    }
    rows
}

/// Seen-class count for a ratio: `round(ratio · n_classes)`, which must
/// leave at least one seen and one unseen class.
pub fn seen_count_for_ratio(ratio: f64, n_classes: usize) -> Result<usize> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid(format!("seen ratio {ratio} is outside (0, 1)")));
    }
    let n = (ratio * n_classes as f64).round() as usize;
    if n == 0 {
        return Err(Error::invalid(format!(
            "seen ratio {ratio} yields zero seen classes out of {n_classes}"
        )));
    }
    if n >= n_classes {
        return Err(Error::invalid(format!(
            "seen ratio {ratio} leaves no unseen class out of {n_classes}"
        )));
    }
    Ok(n)
}

/// For each ratio, the seen classes are a prefix of one seeded permutation of
/// all classes, so larger ratios see supersets of smaller ones.
pub fn sweep_seen_ratio(
    dataset: &Dataset,
    params: &HyperParams,
    bits: usize,
    seed: u64,
    query_count: usize,
    ratios: &[f64],
    with_adaptation: bool,
) -> Result<Vec<SweepRow>> {
    let n_classes = dataset.n_classes();
    let counts = ratios
        .iter()
        .map(|&r| seen_count_for_ratio(r, n_classes))
        .collect::<Result<Vec<_>>>()?;
    let mut classes: Vec<usize> = (0..n_classes).collect();
    classes.shuffle(&mut rng(seed, SPLIT_STREAM));

    let mut rows = Vec::new();
    for (&ratio, &n_seen) in ratios.iter().zip(&counts) {
        let seen: BTreeSet<usize> = classes[..n_seen].iter().copied().collect();
        let unseen: BTreeSet<usize> = classes[n_seen..].iter().copied().collect();
        let split = dataset.with_split(seen, unseen)?;
        let run = run_zero_shot(&split, params, bits, seed, query_count, with_adaptation)?;
        info!("seen ratio {ratio}: {n_seen} seen classes, MAP {:.4}", run.ours.map);
        rows.extend(rows_for(ratio, n_seen, &run));
    }
    Ok(rows)
}

/// Trains on `size / n_seen` images from each seen class (a seeded choice,
/// nested across sizes) and evaluates every size on the same split.
pub fn sweep_train_size(
    dataset: &Dataset,
    params: &HyperParams,
    bits: usize,
    seed: u64,
    query_count: usize,
    sizes: &[usize],
    with_adaptation: bool,
) -> Result<Vec<SweepRow>> {
    let seen: Vec<usize> = dataset.seen_classes.iter().copied().collect();
    if seen.is_empty() {
        return Err(Error::invalid("no seen classes"));
    }
    let mut rng = rng(seed, SIZE_STREAM);
    let per_class_pool: Vec<Vec<usize>> = seen
        .iter()
        .map(|&c| {
            let mut idx = dataset.indices_of_class(c);
            idx.shuffle(&mut rng);
            idx
        })
        .collect();
    let available = per_class_pool.iter().map(Vec::len).min().unwrap_or(0);
    for &size in sizes {
        let per_class = size / seen.len();
        if per_class == 0 {
            return Err(Error::invalid(format!(
                "training size {size} is smaller than the {} seen classes",
                seen.len()
            )));
        }
        if per_class > available {
            return Err(Error::invalid(format!(
                "training size {size} needs {per_class} images per seen class, smallest class has {available}"
            )));
        }
    }

    let split = query_split(dataset, query_count, seed)?;
    let mut rows = Vec::new();
    for &size in sizes {
        let per_class = size / seen.len();
        let mut train_idx: Vec<usize> = per_class_pool.iter().flat_map(|p| p[..per_class].iter().copied()).collect();
        train_idx.sort_unstable();
        let trained = train(&dataset.subset(&train_idx)?, params, bits)?;
        let ours = evaluate(&trained.model, dataset, &split)?;
        let (ours_da, batches) = if with_adaptation {
            let (adapted, batches) = adapt_stream(&trained.model, dataset, params, seed)?;
            (Some(evaluate(&adapted, dataset, &split)?), batches)
        } else {
            (None, Vec::new())
        };
        info!("training size {size}: {per_class} per class, MAP {:.4}", ours.map);
        let run = ZeroShotRun {
            model: trained.model,
            adapted: None,
            ours,
            ours_da,
            train_log: trained.log,
            batches,
        };
        rows.extend(rows_for(size as f64, seen.len(), &run));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synth_dataset, SynthSpec};

    fn small() -> Dataset {
        synth_dataset(SynthSpec::default()).unwrap()
    }

    #[test]
    fn split_is_a_partition_of_the_dataset() {
        let d = small();
        let s = query_split(&d, 2500, 1).unwrap();
        assert_eq!(s.queries.len(), 50);
        assert!(s.queries.iter().all(|&i| d.unseen_classes.contains(&d.labels[i])));
        let mut all: Vec<usize> = s.queries.iter().chain(&s.database).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..d.len()).collect::<Vec<_>>());
        assert_eq!(query_split(&d, 10, 1).unwrap().queries.len(), 10);
        assert_eq!(s, query_split(&d, 2500, 1).unwrap());
        assert_ne!(s.queries, query_split(&d, 2500, 2).unwrap().queries);
    }

    #[test]
    fn ratio_arithmetic() {
        assert_eq!(seen_count_for_ratio(0.9, 10).unwrap(), 9);
        assert_eq!(seen_count_for_ratio(0.1, 10).unwrap(), 1);
        assert!(seen_count_for_ratio(0.1, 4).is_err());
        assert!(seen_count_for_ratio(0.9, 4).is_err());
        assert!(seen_count_for_ratio(1.0, 10).is_err());
    }

    #[test]
    fn adapt_stream_without_unseen_images_is_a_no_op() {
        let d = small();
        let trained = train(&d, &HyperParams::default(), 8).unwrap();
        let seen_only = d.subset(&d.seen_indices()).unwrap();
        let (model, logs) = adapt_stream(&trained.model, &seen_only, &HyperParams::default(), 0).unwrap();
        assert_eq!(model, trained.model);
        assert!(logs.is_empty());
    }

    #[test]
    fn single_sample_batches_still_converge() {
        let d = small();
        let params = HyperParams {
            batch: 1,
            ..HyperParams::default()
        };
        let trained = train(&d, &params, 8).unwrap();
        let (_, logs) = adapt_stream(&trained.model, &d, &params, 0).unwrap();
        assert_eq!(logs.len(), d.unseen_indices().len());
        assert!(logs.iter().all(|l| l.iterations <= crate::adapt::MAX_ITERATIONS));
    }

    #[test]
    fn zero_shot_run_reports_both_variants() {
        let run = run_zero_shot(&small(), &HyperParams::default(), 8, 0, 2500, true).unwrap();
        assert!(run.ours_da.is_some());
        assert!((0.0..=1.0).contains(&run.ours.map));
        assert_eq!(run.ours.pr_curve.len(), 9);
        assert_eq!(run.ours.pr_curve[8].recall, 1.0);
        assert_eq!(run.batches.len(), 5);
    }
}
