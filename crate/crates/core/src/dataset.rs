//! Datasets, hyperparameters and hash models, plus their on-disk layout.
//!
//! A dataset directory holds
//!
//! * `features.csv`   one image per row, `d_x` comma-separated decimals,
//! * `labels.csv`     one 0-based class id per row,
//! * `attributes.csv` one class per row (row index = class id), `d_y` decimals,
//! * `split.txt`      line 1 the seen class ids, line 2 the unseen class ids.
//!
//! A model directory holds `w_img.csv` (`d_x` rows × `K`), `w_txt.csv`
//! (`d_y` rows × `K`) and `manifest.txt` with `key=value` lines.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{ensure_finite, Matrix};

/// Kernel bandwidth of the kNN affinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    Fixed(f64),
    /// σ² set to the mean squared distance to the k nearest neighbours.
    Auto,
}

impl fmt::Display for Bandwidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bandwidth::Fixed(s) => write!(f, "{s}"),
            Bandwidth::Auto => f.write_str("auto"),
        }
    }
}

impl FromStr for Bandwidth {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Bandwidth::Auto);
        }
        let v: f64 = s.parse().map_err(|_| format!("bad sigma '{s}'"))?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(format!("sigma must be positive, got {v}"));
        }
        Ok(Bandwidth::Fixed(v))
    }
}

/// Regularization weights and graph settings.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    /// Weight of the inter-class Laplacian in `L = L^S − α L^inter`.
    pub alpha: f64,
    /// Ridge weight on `W_txt`.
    pub beta: f64,
    /// Weight of the Laplacian term in `C`.
    pub gamma: f64,
    /// Hinge-loss weight of the per-bit classifiers.
    pub lambda: f64,
    /// Hinge-loss weight during adaptation.
    pub lambda1: f64,
    /// Pull of the adapted projection toward the trained one.
    pub beta1: f64,
    pub sigma: Bandwidth,
    pub knn: usize,
    /// Adaptation mini-batch size.
    pub batch: usize,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            alpha: 0.2,
            beta: 6e-6,
            gamma: 10.0,
            lambda: 0.2,
            lambda1: 0.1,
            beta1: 0.1,
            sigma: Bandwidth::Fixed(0.5),
            knn: 10,
            batch: 20,
        }
    }
}

impl HyperParams {
    pub const KEYS: [&'static str; 9] = [
        "alpha", "beta", "gamma", "lambda", "lambda1", "beta1", "sigma", "knn", "batch",
    ];

    pub fn validate(&self) -> Result<()> {
        let reals = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("lambda", self.lambda),
            ("lambda1", self.lambda1),
            ("beta1", self.beta1),
        ];
        for (name, v) in reals {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if let Bandwidth::Fixed(s) = self.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::invalid(format!("sigma must be positive, got {s}")));
            }
        }
        if self.knn == 0 {
            return Err(Error::invalid("knn must be at least 1"));
        }
        if self.batch == 0 {
            return Err(Error::invalid("batch must be at least 1"));
        }
        Ok(())
    }

    /// Sets one parameter from its textual form. Returns `Ok(false)` for unknown keys.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<bool, String> {
        fn real(key: &str, value: &str) -> std::result::Result<f64, String> {
            value
                .parse::<f64>()
                .map_err(|_| format!("{key}: expected a number, got '{value}'"))
        }
        fn count(key: &str, value: &str) -> std::result::Result<usize, String> {
            value
                .parse::<usize>()
                .map_err(|_| format!("{key}: expected a non-negative integer, got '{value}'"))
        }
        match key {
            "alpha" => self.alpha = real(key, value)?,
            "beta" => self.beta = real(key, value)?,
            "gamma" => self.gamma = real(key, value)?,
            "lambda" => self.lambda = real(key, value)?,
            "lambda1" => self.lambda1 = real(key, value)?,
            "beta1" => self.beta1 = real(key, value)?,
            "sigma" => self.sigma = value.parse()?,
            "knn" => self.knn = count(key, value)?,
            "batch" => self.batch = count(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// `key=value` lines in a fixed order.
    pub fn to_lines(&self) -> Vec<String> {
        vec![
            format!("alpha={}", self.alpha),
            format!("beta={}", self.beta),
            format!("gamma={}", self.gamma),
            format!("lambda={}", self.lambda),
            format!("lambda1={}", self.lambda1),
            format!("beta1={}", self.beta1),
            format!("sigma={}", self.sigma),
            format!("knn={}", self.knn),
            format!("batch={}", self.batch),
        ]
    }
}

/// Images with labels, per-class semantic vectors and a seen/unseen class split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `d_x × N`, column `i` is image `i`.
    pub features: Matrix,
    pub labels: Vec<usize>,
    /// `d_y × n_classes`, column `j` is class `j`.
    pub class_attributes: Matrix,
    pub seen_classes: BTreeSet<usize>,
    pub unseen_classes: BTreeSet<usize>,
}

impl Dataset {
    pub fn new(
        features: Matrix,
        labels: Vec<usize>,
        class_attributes: Matrix,
        seen_classes: BTreeSet<usize>,
        unseen_classes: BTreeSet<usize>,
    ) -> Result<Self> {
        ensure_finite(&features, "features")?;
        ensure_finite(&class_attributes, "class attributes")?;
        if labels.len() != features.ncols() {
            return Err(Error::dim(format!(
                "{} labels for {} images",
                labels.len(),
                features.ncols()
            )));
        }
        let n_classes = class_attributes.ncols();
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::invalid(format!(
                "label {bad} has no attribute row ({n_classes} classes)"
            )));
        }
        if let Some(c) = seen_classes.intersection(&unseen_classes).next() {
            return Err(Error::invalid(format!("split overlap: class {c} is both seen and unseen")));
        }
        if let Some(c) = seen_classes.union(&unseen_classes).find(|&&c| c >= n_classes) {
            return Err(Error::invalid(format!("split names class {c}, only {n_classes} classes")));
        }
        if let Some(&l) = labels
            .iter()
            .find(|l| !seen_classes.contains(l) && !unseen_classes.contains(l))
        {
            return Err(Error::invalid(format!("class {l} is in neither the seen nor the unseen split")));
        }
        Ok(Dataset {
            features,
            labels,
            class_attributes,
            seen_classes,
            unseen_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim_x(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim_y(&self) -> usize {
        self.class_attributes.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.class_attributes.ncols()
    }

    /// Per-image semantic matrix `Y` (`d_y × N`).
    pub fn semantic_matrix(&self) -> Matrix {
        self.class_attributes.select_columns(&self.labels)
    }

    /// Attributes of the given classes as columns (`d_y × |classes|`).
    pub fn attributes_of(&self, classes: &[usize]) -> Matrix {
        self.class_attributes.select_columns(classes)
    }

    pub fn seen_indices(&self) -> Vec<usize> {
        self.indices_where(|l| self.seen_classes.contains(&l))
    }

    pub fn unseen_indices(&self) -> Vec<usize> {
        self.indices_where(|l| self.unseen_classes.contains(&l))
    }

    pub fn indices_of_class(&self, class: usize) -> Vec<usize> {
        self.indices_where(|l| l == class)
    }

    fn indices_where(&self, pred: impl Fn(usize) -> bool) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| pred(l))
            .map(|(i, _)| i)
            .collect()
    }

    /// Feature columns of the given images.
    pub fn features_of(&self, indices: &[usize]) -> Matrix {
        self.features.select_columns(indices)
    }

    /// The images at `indices` (in order), keeping classes and split.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        if indices.is_empty() {
            return Err(Error::invalid("empty image subset"));
        }
        Dataset::new(
            self.features_of(indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
            self.class_attributes.clone(),
            self.seen_classes.clone(),
            self.unseen_classes.clone(),
        )
    }

    /// Same images with a different seen/unseen split.
    pub fn with_split(&self, seen: BTreeSet<usize>, unseen: BTreeSet<usize>) -> Result<Dataset> {
        Dataset::new(
            self.features.clone(),
            self.labels.clone(),
            self.class_attributes.clone(),
            seen,
            unseen,
        )
    }

    /// Unit-norm feature vectors and zero-mean attribute dimensions.
    pub fn normalized(&self) -> Dataset {
        let mut features = self.features.clone();
        for mut col in features.column_iter_mut() {
            let n = col.norm();
            if n > 0.0 {
                col /= n;
            }
        }
        let mut attrs = self.class_attributes.clone();
        for mut row in attrs.row_iter_mut() {
            let mean = row.mean();
            row.add_scalar_mut(-mean);
        }
        Dataset {
            features,
            labels: self.labels.clone(),
            class_attributes: attrs,
            seen_classes: self.seen_classes.clone(),
            unseen_classes: self.unseen_classes.clone(),
        }
    }
}

/// Learned projections `W_img` (`d_x × K`) and `W_txt` (`d_y × K`).
#[derive(Debug, Clone, PartialEq)]
pub struct HashModel {
    pub w_img: Matrix,
    pub w_txt: Matrix,
    pub bits: usize,
    pub config: HyperParams,
    /// Whether `w_img` has been through online adaptation.
    pub adapted: bool,
}

impl HashModel {
    pub fn new(w_img: Matrix, w_txt: Matrix, config: HyperParams) -> Result<Self> {
        ensure_finite(&w_img, "w_img")?;
        ensure_finite(&w_txt, "w_txt")?;
        if w_img.ncols() != w_txt.ncols() {
            return Err(Error::dim(format!(
                "w_img has {} columns but w_txt has {}",
                w_img.ncols(),
                w_txt.ncols()
            )));
        }
        let bits = w_img.ncols();
        Ok(HashModel {
            w_img,
            w_txt,
            bits,
            config,
            adapted: false,
        })
    }

    pub fn dim_x(&self) -> usize {
        self.w_img.nrows()
    }

    pub fn dim_y(&self) -> usize {
        self.w_txt.nrows()
    }
}

/// 17 significant digits, which round-trips every `f64`.
pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map_or(0, |p| p.line() as usize);
    match err.kind() {
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => Error::parse(
            path,
            line,
            format!("ragged row: {len} fields, expected {expected_len}"),
        ),
        csv::ErrorKind::Io(_) => Error::parse(path, line, format!("read error: {err}")),
        _ => Error::parse(path, line, err.to_string()),
    }
}

/// Parses `T` values from every cell of a headerless CSV, row by row.
fn read_cells<T, F>(path: &Path, parse: F) -> Result<Vec<Vec<T>>>
where
    F: Fn(&str) -> std::result::Result<T, String>,
{
    let mut rdr = csv_reader(path)?;
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(rows.len() + 1, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            return Err(Error::parse(path, line, "empty row"));
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(col, cell)| {
                parse(cell).map_err(|msg| Error::parse(path, line, format!("column {}: {msg}", col + 1)))
            })
            .collect::<Result<Vec<T>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::parse(path, 0, "file is empty"));
    }
    Ok(rows)
}

fn parse_finite(cell: &str) -> std::result::Result<f64, String> {
    let v: f64 = cell.parse().map_err(|_| format!("'{cell}' is not a number"))?;
    if !v.is_finite() {
        return Err(format!("non-finite value '{cell}'"));
    }
    Ok(v)
}

/// Reads a real CSV as a matrix with one row per CSV row.
fn read_real_csv(path: &Path) -> Result<Matrix> {
    let rows = read_cells(path, parse_finite)?;
    let cols = rows[0].len();
    Ok(Matrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn write_real_csv(path: &Path, m: &Matrix) -> Result<()> {
    let mut out = String::new();
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|&v| format_real(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    write_text(path, &out)
}

fn parse_id_list(path: &Path, line_no: usize, line: &str) -> Result<BTreeSet<usize>> {
    line.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| Error::parse(path, line_no, format!("bad class id '{s}'")))
        })
        .collect()
}

fn join_ids(ids: &BTreeSet<usize>) -> String {
    ids.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

/// Reads a dataset directory, cross-checking every count.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let features_path = dir.join("features.csv");
    let labels_path = dir.join("labels.csv");
    let attrs_path = dir.join("attributes.csv");
    let split_path = dir.join("split.txt");

    let features = read_real_csv(&features_path)?;
    let label_rows = read_cells(&labels_path, |cell| {
        cell.parse::<usize>()
            .map_err(|_| format!("'{cell}' is not a class id"))
    })?;
    if label_rows[0].len() != 1 {
        return Err(Error::parse(&labels_path, 1, "expected one label per row"));
    }
    let labels: Vec<usize> = label_rows.into_iter().map(|r| r[0]).collect();
    let attributes = read_real_csv(&attrs_path)?;

    if labels.len() != features.nrows() {
        return Err(Error::parse(
            &labels_path,
            labels.len().min(features.nrows()) + 1,
            format!(
                "{} labels but features.csv has {} rows",
                labels.len(),
                features.nrows()
            ),
        ));
    }
    let n_classes = attributes.nrows();
    if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= n_classes) {
        return Err(Error::parse(
            &labels_path,
            i + 1,
            format!("label {l} has no attribute row (attributes.csv has {n_classes} rows)"),
        ));
    }

    let split_text = read_text(&split_path)?;
    let mut lines = split_text.lines();
    let seen = parse_id_list(&split_path, 1, lines.next().unwrap_or(""))?;
    let unseen = parse_id_list(&split_path, 2, lines.next().unwrap_or(""))?;
    if let Some(c) = seen.intersection(&unseen).next() {
        return Err(Error::parse(
            &split_path,
            2,
            format!("split overlap: class {c} is both seen and unseen"),
        ));
    }
    if let Some(c) = seen.union(&unseen).find(|&&c| c >= n_classes) {
        return Err(Error::parse(
            &split_path,
            if seen.contains(c) { 1 } else { 2 },
            format!("class {c} has no attribute row"),
        ));
    }

    Dataset::new(
        features.transpose(),
        labels,
        attributes.transpose(),
        seen,
        unseen,
    )
}

/// Writes the dataset directory layout, creating `dir` if needed.
pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_real_csv(&dir.join("features.csv"), &dataset.features.transpose())?;
    let labels: String = dataset.labels.iter().map(|l| format!("{l}\n")).collect();
    write_text(&dir.join("labels.csv"), &labels)?;
    write_real_csv(&dir.join("attributes.csv"), &dataset.class_attributes.transpose())?;
    write_text(
        &dir.join("split.txt"),
        &format!(
            "{}\n{}\n",
            join_ids(&dataset.seen_classes),
            join_ids(&dataset.unseen_classes)
        ),
    )
}

/// Writes `w_img.csv`, `w_txt.csv` and `manifest.txt` into `dir`.
pub fn save_model(model: &HashModel, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_real_csv(&dir.join("w_img.csv"), &model.w_img)?;
    write_real_csv(&dir.join("w_txt.csv"), &model.w_txt)?;
    let mut lines = vec![
        format!("bits={}", model.bits),
        format!("d_x={}", model.dim_x()),
        format!("d_y={}", model.dim_y()),
        format!("adapted={}", model.adapted),
    ];
    lines.extend(model.config.to_lines());
    write_text(&dir.join("manifest.txt"), &(lines.join("\n") + "\n"))
}

/// Parses `key=value` (or `key = value`) lines, skipping blanks and `#`/`;` comments.
pub fn parse_key_values(path: &Path, text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') || line.starts_with('[') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(path, i + 1, format!("expected key=value, got '{line}'")))?;
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn load_model(dir: &Path) -> Result<HashModel> {
    let manifest_path = dir.join("manifest.txt");
    let text = read_text(&manifest_path)?;
    let entries = parse_key_values(&manifest_path, &text)?;
    if entries.is_empty() {
        return Err(Error::parse(&manifest_path, 0, "manifest is empty"));
    }

    let mut config = HyperParams::default();
    let (mut bits, mut d_x, mut d_y, mut adapted) = (None, None, None, false);
    for (line, key, value) in entries {
        let count = || {
            value
                .parse::<usize>()
                .map_err(|_| Error::parse(&manifest_path, line, format!("{key}: bad count '{value}'")))
        };
        match key.as_str() {
            "bits" => bits = Some(count()?),
            "d_x" => d_x = Some(count()?),
            "d_y" => d_y = Some(count()?),
            "adapted" => {
                adapted = value
                    .parse()
                    .map_err(|_| Error::parse(&manifest_path, line, format!("adapted: bad flag '{value}'")))?
            }
            _ => match config.set(&key, &value) {
                Ok(true) => {}
                Ok(false) => {
                    return Err(Error::parse(&manifest_path, line, format!("unknown key '{key}'")))
                }
                Err(msg) => return Err(Error::parse(&manifest_path, line, msg)),
            },
        }
    }
    config.validate()?;

    let w_img = read_real_csv(&dir.join("w_img.csv"))?;
    let w_txt = read_real_csv(&dir.join("w_txt.csv"))?;
    let mut model = HashModel::new(w_img, w_txt, config)?;
    model.adapted = adapted;
    let checks = [("bits", bits, model.bits), ("d_x", d_x, model.dim_x()), ("d_y", d_y, model.dim_y())];
    for (name, declared, actual) in checks {
        match declared {
            None => return Err(Error::parse(&manifest_path, 0, format!("missing key '{name}'"))),
            Some(d) if d != actual => {
                return Err(Error::dim(format!(
                    "manifest declares {name}={d} but the matrices give {actual}"
                )))
            }
            _ => {}
        }
    }
    Ok(model)
}

/// Parameters of [`synth_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthSpec {
    pub n_classes: usize,
    pub per_class: usize,
    pub d_x: usize,
    pub d_y: usize,
    pub seen_count: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_classes: 6,
            per_class: 50,
            d_x: 16,
            d_y: 8,
            seen_count: 4,
            seed: 0,
        }
    }
}

const CLASS_RADIUS: f64 = 5.0;
const ATTRIBUTE_NOISE: f64 = 0.1;

/// Gaussian clusters with semantics that correlate with the visual layout.
///
/// Class means lie on a sphere of radius 5 with unit isotropic noise around
/// them. The attribute vector of a class is its mean pushed through a fixed
/// random linear map plus a little noise. Images are stored class by class;
/// classes `0..seen_count` are seen, the rest unseen.
pub fn synth_dataset(spec: SynthSpec) -> Result<Dataset> {
    let SynthSpec {
        n_classes,
        per_class,
        d_x,
        d_y,
        seen_count,
        seed,
    } = spec;
    if n_classes < 2 || per_class == 0 || d_x == 0 || d_y == 0 || seen_count == 0 {
        return Err(Error::invalid(format!(
            "degenerate synthetic counts: {n_classes} classes, {per_class} per class, d_x={d_x}, d_y={d_y}, {seen_count} seen"
        )));
    }
    if seen_count >= n_classes {
        return Err(Error::invalid(format!(
            "seen_count ({seen_count}) must be below n_classes ({n_classes})"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };

    let mut means = Matrix::zeros(d_x, n_classes);
    for mut col in means.column_iter_mut() {
        loop {
            for v in col.iter_mut() {
                *v = gauss();
            }
            let n = col.norm();
            if n > 1e-12 {
                col *= CLASS_RADIUS / n;
                break;
            }
        }
    }

    let map_scale = 1.0 / (d_x as f64).sqrt();
    let map = Matrix::from_fn(d_y, d_x, |_, _| gauss() * map_scale);
    let mut attributes = &map * &means;
    for v in attributes.iter_mut() {
        *v += ATTRIBUTE_NOISE * gauss();
    }

    let n = n_classes * per_class;
    let labels: Vec<usize> = (0..n).map(|i| i / per_class).collect();
    let mut features = Matrix::zeros(d_x, n);
    for (i, &label) in labels.iter().enumerate() {
        for r in 0..d_x {
            features[(r, i)] = means[(r, label)] + gauss();
        }
    }

    Dataset::new(
        features,
        labels,
        attributes,
        (0..seen_count).collect(),
        (seen_count..n_classes).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) {
        fs::write(dir.join(name), text).unwrap();
    }

    fn toy_dir() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "features.csv", "1.0,2.0\n0.5,-1\n3,3\n");
        write(dir.path(), "labels.csv", "0\n1\n0\n");
        write(dir.path(), "attributes.csv", "1,0,0\n0,1,0\n");
        write(dir.path(), "split.txt", "0\n1\n");
        dir
    }

    #[test]
    fn loads_toy_dataset() {
        let dir = toy_dir();
        let ds = load_dataset(dir.path()).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.dim_x(), 2);
        assert_eq!(ds.dim_y(), 3);
        assert_eq!(ds.n_classes(), 2);
        assert_eq!(ds.features[(1, 1)], -1.0);
        assert_eq!(ds.seen_indices(), vec![0, 2]);
        assert_eq!(ds.unseen_indices(), vec![1]);
    }

    #[test]
    fn split_overlap_is_rejected() {
        let dir = toy_dir();
        write(dir.path(), "split.txt", "0,1\n1\n");
        let err = load_dataset(dir.path()).unwrap_err().to_string();
        assert!(err.contains("split overlap"), "{err}");
        assert!(err.contains("split.txt"), "{err}");
    }

    #[test]
    fn nan_cell_is_reported_with_position() {
        let dir = toy_dir();
        write(dir.path(), "features.csv", "1.0,2.0\n0.5,NaN\n3,3\n");
        let err = load_dataset(dir.path()).unwrap_err().to_string();
        assert!(err.contains("features.csv:2"), "{err}");
        assert!(err.contains("column 2"), "{err}");
    }

    #[test]
    fn ragged_csv_and_missing_files() {
        let dir = toy_dir();
        write(dir.path(), "features.csv", "1.0,2.0\n0.5\n3,3\n");
        let err = load_dataset(dir.path()).unwrap_err().to_string();
        assert!(err.contains("ragged"), "{err}");

        let dir = toy_dir();
        fs::remove_file(dir.path().join("labels.csv")).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Io { .. })));
    }

    #[test]
    fn label_without_attribute_row() {
        let dir = toy_dir();
        write(dir.path(), "labels.csv", "0\n2\n0\n");
        let err = load_dataset(dir.path()).unwrap_err().to_string();
        assert!(err.contains("labels.csv:2"), "{err}");
    }

    #[test]
    fn per_image_semantics_regroup_to_class_attributes() {
        let ds = synth_dataset(SynthSpec::default()).unwrap();
        let y = ds.semantic_matrix();
        for (i, &l) in ds.labels.iter().enumerate() {
            assert_eq!(y.column(i), ds.class_attributes.column(l));
        }
    }

    #[test]
    fn dataset_round_trip() {
        let ds = synth_dataset(SynthSpec {
            per_class: 5,
            ..SynthSpec::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        assert_eq!(load_dataset(dir.path()).unwrap(), ds);
    }

    #[test]
    fn synth_counts_and_determinism() {
        let spec = SynthSpec {
            n_classes: 6,
            per_class: 50,
            seen_count: 4,
            ..SynthSpec::default()
        };
        let a = synth_dataset(spec).unwrap();
        assert_eq!(a.len(), 300);
        assert_eq!(a.unseen_classes.len(), 2);
        assert_eq!(a, synth_dataset(spec).unwrap());
        let b = synth_dataset(SynthSpec { seed: 1, ..spec }).unwrap();
        assert!((&a.features - &b.features).norm() > 0.0);
    }

    #[test]
    fn synth_is_separable_by_class_means() {
        let ds = synth_dataset(SynthSpec::default()).unwrap();
        let k = ds.n_classes();
        let mut means = Matrix::zeros(ds.dim_x(), k);
        let mut counts = vec![0.0; k];
        for (i, &l) in ds.labels.iter().enumerate() {
            let mut col = means.column_mut(l);
            col += ds.features.column(i);
            counts[l] += 1.0;
        }
        for (j, c) in counts.iter().enumerate() {
            let mut col = means.column_mut(j);
            col /= *c;
        }
        let correct = (0..ds.len())
            .filter(|&i| {
                let x = ds.features.column(i);
                let best = (0..k)
                    .min_by(|&a, &b| {
                        (x - means.column(a))
                            .norm()
                            .total_cmp(&(x - means.column(b)).norm())
                    })
                    .unwrap();
                best == ds.labels[i]
            })
            .count();
        assert!(correct as f64 / ds.len() as f64 >= 0.9, "{correct}");
    }

    #[test]
    fn synth_rejects_degenerate_counts() {
        for spec in [
            SynthSpec { seen_count: 6, ..SynthSpec::default() },
            SynthSpec { per_class: 0, ..SynthSpec::default() },
            SynthSpec { seen_count: 0, ..SynthSpec::default() },
        ] {
            assert!(synth_dataset(spec).is_err());
        }
    }

    fn random_model() -> HashModel {
        let ds = synth_dataset(SynthSpec::default()).unwrap();
        let w_img = ds.features.columns(0, 5).into_owned() * 0.123_456_789;
        let w_txt = ds.class_attributes.columns(0, 5).into_owned() / 3.0;
        HashModel::new(w_img, w_txt, HyperParams::default()).unwrap()
    }

    #[test]
    fn model_round_trip_is_bit_exact() {
        let mut model = random_model();
        model.config.sigma = Bandwidth::Auto;
        model.adapted = true;
        let dir = tempfile::tempdir().unwrap();
        save_model(&model, dir.path()).unwrap();
        let back = load_model(dir.path()).unwrap();
        for (a, b) in model.w_img.iter().zip(back.w_img.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back, model);
    }

    #[test]
    fn model_with_mismatched_bits_is_rejected() {
        let model = random_model();
        let dir = tempfile::tempdir().unwrap();
        save_model(&model, dir.path()).unwrap();
        write(dir.path(), "w_txt.csv", "1,2\n3,4\n");
        assert!(matches!(load_model(dir.path()), Err(Error::Dimension(_))));
    }

    #[test]
    fn empty_model_files_are_rejected() {
        let model = random_model();
        let dir = tempfile::tempdir().unwrap();
        save_model(&model, dir.path()).unwrap();
        write(dir.path(), "w_img.csv", "");
        assert!(load_model(dir.path()).is_err());
        write(dir.path(), "manifest.txt", "");
        assert!(load_model(dir.path()).is_err());
    }

    #[test]
    fn normalization() {
        let ds = synth_dataset(SynthSpec::default()).unwrap().normalized();
        for col in ds.features.column_iter() {
            assert!((col.norm() - 1.0).abs() < 1e-12);
        }
        for row in ds.class_attributes.row_iter() {
            assert!(row.mean().abs() < 1e-12);
        }
    }

    #[test]
    fn hyperparameter_defaults() {
        let p = HyperParams::default();
        assert_eq!(
            (p.alpha, p.beta, p.gamma, p.lambda, p.lambda1, p.beta1),
            (0.2, 6e-6, 10.0, 0.2, 0.1, 0.1)
        );
        assert_eq!(p.sigma, Bandwidth::Fixed(0.5));
        assert_eq!((p.knn, p.batch), (10, 20));
        p.validate().unwrap();
    }
}
