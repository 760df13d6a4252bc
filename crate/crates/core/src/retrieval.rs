//! Bit-packed Hamming retrieval and ranking metrics.

use crate::codes::CodeMatrix;
use crate::error::{Error, Result};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

const WORD: usize = 64;

/// Codes packed into `u64` words, bit `j` of item `i` set iff the entry is `+1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedCodes {
    count: usize,
    bits: usize,
    words_per_item: usize,
    words: Vec<u64>,
}

/// Borrowed view of a single packed code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodeRef<'a> {
    bits: usize,
    words: &'a [u64],
}

impl CodeRef<'_> {
    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn words(&self) -> &[u64] {
        self.words
    }
}

impl PackedCodes {
    pub fn pack(codes: &CodeMatrix) -> Self {
        let bits = codes.bits();
        let words_per_item = bits.div_ceil(WORD);
        let mut words = vec![0u64; codes.len() * words_per_item];
        for i in 0..codes.len() {
            let item = &mut words[i * words_per_item..(i + 1) * words_per_item];
            for k in 0..bits {
                if codes.get(i, k) > 0.0 {
                    item[k / WORD] |= 1 << (k % WORD);
                }
            }
        }
        PackedCodes {
            count: codes.len(),
            bits,
            words_per_item,
            words,
        }
    }

    pub fn unpack(&self) -> CodeMatrix {
        let rows: Vec<Vec<i8>> = (0..self.count)
            .map(|i| {
                let item = self.get(i);
                (0..self.bits)
                    .map(|k| if item.words[k / WORD] >> (k % WORD) & 1 == 1 { 1 } else { -1 })
                    .collect()
            })
            .collect();
        CodeMatrix::from_rows(&rows).expect("packed bits are ±1")
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    /// # Panics
    /// If `i` is out of range.
    pub fn get(&self, i: usize) -> CodeRef<'_> {
        assert!(i < self.count, "item {i} out of range for {} codes", self.count);
        CodeRef {
            bits: self.bits,
            words: &self.words[i * self.words_per_item..(i + 1) * self.words_per_item],
        }
    }
}

/// Number of differing bits.
pub fn hamming(a: CodeRef<'_>, b: CodeRef<'_>) -> Result<u32> {
    if a.bits != b.bits {
        return Err(Error::dim(format!("codes have {} and {} bits", a.bits, b.bits)));
    }
    Ok(hamming_unchecked(a, b))
}

fn hamming_unchecked(a: CodeRef<'_>, b: CodeRef<'_>) -> u32 {
    a.words.iter().zip(b.words).map(|(x, y)| (x ^ y).count_ones()).sum()
}

/// Database ids ordered by ascending Hamming distance, ties by ascending id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedResult {
    pub ids: Vec<usize>,
    pub distances: Vec<u32>,
}

impl RankedResult {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Hamming distances from `query` to every database item, in database order.
pub fn distances(query: CodeRef<'_>, db: &PackedCodes) -> Result<Vec<u32>> {
    if query.bits != db.bits {
        return Err(Error::dim(format!(
            "query has {} bits, database has {}",
            query.bits, db.bits
        )));
    }
    Ok((0..db.count).map(|j| hamming_unchecked(query, db.get(j))).collect())
}

/// Full ranking of `db` against `query`. Counting sort over the `K + 1`
/// possible distances keeps ties in id order.
pub fn rank(query: CodeRef<'_>, db: &PackedCodes) -> Result<RankedResult> {
    if db.is_empty() {
        return Err(Error::invalid("empty retrieval database"));
    }
    let dist = distances(query, db)?;
    let mut counts = vec![0usize; db.bits + 2];
    for &d in &dist {
        counts[d as usize + 1] += 1;
    }
    for t in 1..counts.len() {
        counts[t] += counts[t - 1];
    }
    let mut ids = vec![0; dist.len()];
    let mut sorted = vec![0; dist.len()];
    for (j, &d) in dist.iter().enumerate() {
        let slot = &mut counts[d as usize];
        ids[*slot] = j;
        sorted[*slot] = d;
        *slot += 1;
    }
    Ok(RankedResult {
        ids,
        distances: sorted,
    })
}

/// `(1/|R|) Σ_{p: ids[p] ∈ R} hits(p)/p` over 1-based positions `p`, or `None`
/// when no item is relevant.
pub fn average_precision(ranking: &RankedResult, relevant: impl Fn(usize) -> bool) -> Option<f64> {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (pos, &id) in ranking.ids.iter().enumerate() {
        if relevant(id) {
            hits += 1;
            sum += hits as f64 / (pos + 1) as f64;
        }
    }
    (hits > 0).then(|| sum / hits as f64)
}

/// Fraction of items within Hamming radius `r` that are relevant; 0 when none
/// are retrieved.
pub fn precision_at_radius(ranking: &RankedResult, relevant: impl Fn(usize) -> bool, r: u32) -> f64 {
    let retrieved = ranking.distances.partition_point(|&d| d <= r);
    if retrieved == 0 {
        return 0.0;
    }
    let hits = ranking.ids[..retrieved].iter().filter(|&&id| relevant(id)).count();
    hits as f64 / retrieved as f64
}

/// Relevance by class label: query label vs database labels.
#[derive(Debug, Clone, Copy)]
pub struct Labelled<'a> {
    pub queries: &'a PackedCodes,
    pub query_labels: &'a [usize],
    pub db: &'a PackedCodes,
    pub db_labels: &'a [usize],
}

impl Labelled<'_> {
    fn check(&self) -> Result<()> {
        if self.queries.len() != self.query_labels.len() || self.db.len() != self.db_labels.len() {
            return Err(Error::dim(format!(
                "{} queries with {} labels, {} database items with {} labels",
                self.queries.len(),
                self.query_labels.len(),
                self.db.len(),
                self.db_labels.len()
            )));
        }
        if self.queries.bits() != self.db.bits() {
            return Err(Error::dim(format!(
                "queries have {} bits, database has {}",
                self.queries.bits(),
                self.db.bits()
            )));
        }
        if self.queries.is_empty() {
            return Err(Error::invalid("query set is empty"));
        }
        if self.db.is_empty() {
            return Err(Error::invalid("empty retrieval database"));
        }
        Ok(())
    }

    fn per_query<T: Send>(&self, f: impl Fn(RankedResult, usize) -> T + Sync) -> Result<Vec<T>> {
        self.check()?;
        let run = |q: usize| -> Result<T> {
            let ranking = rank(self.queries.get(q), self.db)?;
            Ok(f(ranking, self.query_labels[q]))
        };
        #[cfg(feature = "parallel")]
        {
            (0..self.queries.len()).into_par_iter().map(run).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            (0..self.queries.len()).map(run).collect()
        }
    }

    /// Mean of per-query AP. Queries with no relevant database item are
    /// skipped with a warning; errors if every query is skipped.
    pub fn mean_average_precision(&self) -> Result<f64> {
        let aps = self.per_query(|ranking, label| average_precision(&ranking, |id| self.db_labels[id] == label))?;
        let skipped = aps.iter().filter(|ap| ap.is_none()).count();
        if skipped > 0 {
            log::warn!("{skipped} queries have no relevant database item and were skipped");
        }
        let defined: Vec<f64> = aps.into_iter().flatten().collect();
        if defined.is_empty() {
            return Err(Error::invalid("no query has a relevant database item"));
        }
        Ok(defined.iter().sum::<f64>() / defined.len() as f64)
    }

    /// Mean over queries of precision within Hamming radius `r`.
    pub fn mean_precision_at_radius(&self, r: u32) -> Result<f64> {
        let p = self.per_query(|ranking, label| precision_at_radius(&ranking, |id| self.db_labels[id] == label, r))?;
        Ok(p.iter().sum::<f64>() / p.len() as f64)
    }

    /// One `(recall, precision)` point per threshold `t = 0..=K`, micro-averaged:
    /// relevant-retrieved, retrieved and relevant counts are summed over
    /// queries before dividing.
    pub fn pr_curve(&self) -> Result<Vec<PrPoint>> {
        let bits = self.db.bits();
        let per = self.per_query(|ranking, label| {
            // Per-distance histograms of retrieved and relevant items.
            let mut retrieved = vec![0usize; bits + 1];
            let mut hits = vec![0usize; bits + 1];
            for (&id, &d) in ranking.ids.iter().zip(&ranking.distances) {
                retrieved[d as usize] += 1;
                if self.db_labels[id] == label {
                    hits[d as usize] += 1;
                }
            }
            (retrieved, hits)
        })?;
        let mut retrieved = vec![0usize; bits + 1];
        let mut hits = vec![0usize; bits + 1];
        for (r, h) in &per {
            for t in 0..=bits {
                retrieved[t] += r[t];
                hits[t] += h[t];
            }
        }
        let relevant: usize = hits.iter().sum();
        let (mut cum_ret, mut cum_hit) = (0usize, 0usize);
        Ok((0..=bits)
            .map(|t| {
                cum_ret += retrieved[t];
                cum_hit += hits[t];
                PrPoint {
                    threshold: t as u32,
                    recall: if relevant == 0 { 0.0 } else { cum_hit as f64 / relevant as f64 },
                    precision: if cum_ret == 0 { 0.0 } else { cum_hit as f64 / cum_ret as f64 },
                }
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub threshold: u32,
    pub recall: f64,
    pub precision: f64,
}
