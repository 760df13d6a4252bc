use std::fs;
use std::path::{Path, PathBuf};

use zshash::dataset::{parse_key_values, SynthSpec};
use zshash::protocol::DEFAULT_QUERY_COUNT;
use zshash::HyperParams;

use crate::CliError;

/// Code lengths used in the published experiments. Others are accepted with a note.
pub const STANDARD_BITS: [usize; 9] = [8, 16, 32, 64, 96, 128, 192, 256, 512];

pub const DEFAULT_BITS: usize = 16;
pub const SWEEP_BITS: usize = 96;

/// Everything a command needs, after merging defaults, the config file and flags.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: HyperParams,
    /// `None` means the command's own default.
    pub bits: Option<usize>,
    pub seed: u64,
    pub normalize: bool,
    pub query_count: usize,
    pub no_da: bool,
    pub data: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub synth: SynthSpec,
    /// Dataset for the sweeps when `--data` is absent.
    pub sweep_synth: SynthSpec,
    pub ratios: Vec<f64>,
    pub train_sizes: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            params: HyperParams::default(),
            bits: None,
            seed: 0,
            normalize: false,
            query_count: DEFAULT_QUERY_COUNT,
            no_da: false,
            data: None,
            model: None,
            out: None,
            synth: SynthSpec::default(),
            sweep_synth: SynthSpec {
                n_classes: 10,
                per_class: 100,
                d_x: 16,
                d_y: 8,
                seen_count: 8,
                seed: 0,
            },
            ratios: (1..=9).map(|i| i as f64 / 10.0).collect(),
            train_sizes: vec![160, 320, 480, 640, 800],
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("{key}: cannot parse '{value}'"))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool, String> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(format!("{key}: expected true or false, got '{value}'")),
    }
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        if self.params.set(key, value)? {
            return Ok(());
        }
        match key {
            "bits" => self.bits = Some(parse(key, value)?),
            "seed" => self.seed = parse(key, value)?,
            "normalize" => self.normalize = parse_bool(key, value)?,
            "no_da" => self.no_da = parse_bool(key, value)?,
            "query_count" => self.query_count = parse(key, value)?,
            "n_classes" => self.synth.n_classes = parse(key, value)?,
            "per_class" => self.synth.per_class = parse(key, value)?,
            "d_x" => self.synth.d_x = parse(key, value)?,
            "d_y" => self.synth.d_y = parse(key, value)?,
            "seen_count" => self.synth.seen_count = parse(key, value)?,
            "sweep_n_classes" => self.sweep_synth.n_classes = parse(key, value)?,
            "sweep_per_class" => self.sweep_synth.per_class = parse(key, value)?,
            "sweep_seen_count" => self.sweep_synth.seen_count = parse(key, value)?,
            "ratios" => self.ratios = parse_list(key, value)?,
            "train_sizes" => self.train_sizes = parse_list(key, value)?,
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    /// Reads an INI-style `key = value` file on top of the current values.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let entries = parse_key_values(path, &text).map_err(|e| CliError::Usage(e.to_string()))?;
        for (line, key, value) in entries {
            self.set(&key, &value)
                .map_err(|msg| CliError::Usage(format!("{}:{line}: {msg}", path.display())))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.params
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        if self.bits == Some(0) {
            return Err(CliError::Usage("--bits must be at least 1".into()));
        }
        if self.query_count == 0 {
            return Err(CliError::Usage("query_count must be at least 1".into()));
        }
        Ok(())
    }

    pub fn bits_or(&self, default: usize) -> usize {
        let bits = self.bits.unwrap_or(default);
        if !STANDARD_BITS.contains(&bits) {
            log::warn!("{bits} bits is outside the usual code lengths {STANDARD_BITS:?}");
        }
        bits
    }

    pub fn require_data(&self) -> Result<&Path, CliError> {
        self.data
            .as_deref()
            .ok_or_else(|| CliError::Usage("--data DIR is required".into()))
    }

    pub fn require_model(&self) -> Result<&Path, CliError> {
        self.model
            .as_deref()
            .ok_or_else(|| CliError::Usage("--model DIR is required".into()))
    }

    pub fn require_out(&self) -> Result<&Path, CliError> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::Usage("--out DIR is required".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_route_to_the_right_fields() {
        let mut c = RunConfig::default();
        c.set("gamma", "3").unwrap();
        c.set("sigma", "auto").unwrap();
        c.set("bits", "32").unwrap();
        c.set("ratios", "0.2, 0.8").unwrap();
        c.set("train_sizes", "10,20").unwrap();
        c.set("normalize", "true").unwrap();
        assert_eq!(c.params.gamma, 3.0);
        assert_eq!(c.params.sigma, zshash::Bandwidth::Auto);
        assert_eq!(c.bits, Some(32));
        assert_eq!(c.ratios, vec![0.2, 0.8]);
        assert_eq!(c.train_sizes, vec![10, 20]);
        assert!(c.normalize);
        assert!(c.set("colour", "blue").is_err());
        assert!(c.set("knn", "-1").is_err());
    }

    #[test]
    fn file_values_apply_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.ini");
        fs::write(&path, "[train]\n# comment\nalpha = 0.3\nalpha = 0.4\nseed=7\n").unwrap();
        let mut c = RunConfig::default();
        c.apply_file(&path).unwrap();
        assert_eq!(c.params.alpha, 0.4);
        assert_eq!(c.seed, 7);

        fs::write(&path, "alpha = 0.3\nbogus = 1\n").unwrap();
        let err = RunConfig::default().apply_file(&path).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
    }
}
