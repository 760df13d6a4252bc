//! Browser demo: train on a synthetic dataset, adapt to the unseen classes
//! and search by clicking a point.

use wasm_bindgen::prelude::*;

use zshash::dataset::{synth_dataset, SynthSpec};
use zshash::linalg::symmetric_eig;
use zshash::maxmargin::encode;
use zshash::protocol::{adapt_stream, evaluate, query_split, QuerySplit};
use zshash::retrieval::rank;
use zshash::spectral::train;
use zshash::{Dataset, HashModel, HyperParams, PackedCodes, Result};

const QUERY_COUNT: usize = 2500;

/// Plain-Rust state behind [`Session`].
pub struct Demo {
    dataset: Dataset,
    split: QuerySplit,
    params: HyperParams,
    seed: u64,
    coords: Vec<f64>,
    model: Option<HashModel>,
    adapted: Option<HashModel>,
}

/// Projection onto the two leading principal axes, flattened as `x0, y0, x1, y1, ...`.
fn principal_plane(dataset: &Dataset) -> Result<Vec<f64>> {
    let x = &dataset.features;
    let mean = x.column_mean();
    let centred = x - &mean * nalgebra::RowDVector::from_element(x.ncols(), 1.0);
    let cov = &centred * centred.transpose();
    let eig = symmetric_eig(&cov)?;
    let d = eig.len();
    let axes = eig.eigenvectors.columns(d.saturating_sub(2), d.min(2)).into_owned();
    let proj = axes.transpose() * centred;
    let mut out = Vec::with_capacity(2 * x.ncols());
    for col in proj.column_iter() {
        out.push(col[col.len() - 1]);
        out.push(if col.len() > 1 { col[0] } else { 0.0 });
    }
    Ok(out)
}

impl Demo {
    pub fn new(seed: u64, n_classes: usize, per_class: usize, seen_count: usize) -> Result<Demo> {
        let dataset = synth_dataset(SynthSpec {
            n_classes,
            per_class,
            seen_count,
            seed,
            ..SynthSpec::default()
        })?
        .normalized();
        let split = query_split(&dataset, QUERY_COUNT, seed)?;
        let coords = principal_plane(&dataset)?;
        Ok(Demo {
            dataset,
            split,
            params: HyperParams::default(),
            seed,
            coords,
            model: None,
            adapted: None,
        })
    }

    /// Trains a `bits`-bit model and returns its MAP on the unseen queries.
    pub fn train(&mut self, bits: usize) -> Result<f64> {
        let trained = train(&self.dataset, &self.params, bits)?;
        let map = evaluate(&trained.model, &self.dataset, &self.split)?.map;
        self.model = Some(trained.model);
        self.adapted = None;
        Ok(map)
    }

    /// Adapts the trained model and returns the MAP after adaptation.
    pub fn adapt(&mut self) -> Result<f64> {
        let model = self
            .model
            .as_ref()
            .ok_or_else(|| zshash::Error::InvalidInput("train a model first".into()))?;
        let (adapted, _) = adapt_stream(model, &self.dataset, &self.params, self.seed)?;
        let map = evaluate(&adapted, &self.dataset, &self.split)?.map;
        self.adapted = Some(adapted);
        Ok(map)
    }

    /// Nearest `top` images to image `index` in Hamming space, itself excluded.
    pub fn search(&self, index: usize, top: usize, use_adapted: bool) -> Result<Vec<usize>> {
        let model = match (use_adapted, &self.adapted, &self.model) {
            (true, Some(m), _) | (_, _, Some(m)) => m,
            _ => return Err(zshash::Error::InvalidInput("train a model first".into())),
        };
        if index >= self.dataset.len() {
            return Err(zshash::Error::InvalidInput(format!("no image {index}")));
        }
        let codes = PackedCodes::pack(&encode(&self.dataset.features, &model.w_img)?);
        let ranking = rank(codes.get(index), &codes)?;
        Ok(ranking.ids.into_iter().filter(|&i| i != index).take(top).collect())
    }
}

#[wasm_bindgen]
pub struct Session(Demo);

fn js(e: zshash::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
impl Session {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, n_classes: u32, per_class: u32, seen_count: u32) -> std::result::Result<Session, JsError> {
        Demo::new(seed.into(), n_classes as usize, per_class as usize, seen_count as usize)
            .map(Session)
            .map_err(js)
    }

    pub fn len(&self) -> usize {
        self.0.dataset.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.dataset.is_empty()
    }

    pub fn coords(&self) -> Vec<f64> {
        self.0.coords.clone()
    }

    pub fn labels(&self) -> Vec<u32> {
        self.0.dataset.labels.iter().map(|&l| l as u32).collect()
    }

    /// 1 for images of seen classes.
    pub fn seen(&self) -> Vec<u8> {
        let d = &self.0.dataset;
        d.labels.iter().map(|l| d.seen_classes.contains(l) as u8).collect()
    }

    pub fn train(&mut self, bits: u32) -> std::result::Result<f64, JsError> {
        self.0.train(bits as usize).map_err(js)
    }

    pub fn adapt(&mut self) -> std::result::Result<f64, JsError> {
        self.0.adapt().map_err(js)
    }

    pub fn search(&self, index: u32, top: u32, use_adapted: bool) -> std::result::Result<Vec<u32>, JsError> {
        self.0
            .search(index as usize, top as usize, use_adapted)
            .map(|ids| ids.into_iter().map(|i| i as u32).collect())
            .map_err(js)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn train_adapt_search() {
        let mut demo = Demo::new(1, 6, 30, 4).unwrap();
        assert_eq!(demo.coords.len(), 2 * 180);
        assert!(demo.search(0, 5, false).is_err());
        assert!(demo.adapt().is_err());

        let map = demo.train(16).unwrap();
        assert!((0.0..=1.0).contains(&map));
        let hits = demo.search(150, 10, false).unwrap();
        assert_eq!(hits.len(), 10);
        assert!(!hits.contains(&150));

        let adapted = demo.adapt().unwrap();
        assert!((0.0..=1.0).contains(&adapted));
        assert_eq!(demo.search(150, 10, true).unwrap().len(), 10);
        assert!(demo.search(180, 10, true).is_err());
    }
}
