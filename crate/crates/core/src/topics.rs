//! Topic sets, per-document mixtures, and the L2 geometry shared by the
//! stopping rules and the metrics.

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// K word distributions over a shared vocabulary, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSet {
    n_terms: usize,
    data: Vec<f64>,
}

impl TopicSet {
    pub fn empty(n_terms: usize) -> Self {
        Self {
            n_terms,
            data: Vec::new(),
        }
    }

    /// Builds a topic set from rows, checking shapes and non-negativity.
    /// Rows are not renormalized.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_terms = rows.first().map_or(0, Vec::len);
        let mut set = Self::empty(n_terms);
        for row in rows {
            set.push(row)?;
        }
        Ok(set)
    }

    /// Rows drawn i.i.d. from a symmetric Dirichlet(1).
    pub fn random<R: Rng + ?Sized>(rng: &mut R, k: usize, n_terms: usize) -> Self {
        let mut data = Vec::with_capacity(k * n_terms);
        for _ in 0..k {
            data.extend(rng::dirichlet(rng, 1.0, n_terms));
        }
        Self { n_terms, data }
    }

    pub fn uniform(k: usize, n_terms: usize) -> Self {
        Self {
            n_terms,
            data: vec![1.0 / n_terms as f64; k * n_terms],
        }
    }

    pub fn push(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.n_terms {
            return Err(Error::Shape(format!(
                "topic row has {} entries, vocabulary has {}",
                row.len(),
                self.n_terms
            )));
        }
        if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::Shape("topic row has a negative or non-finite entry".into()));
        }
        self.data.extend(row);
        Ok(())
    }

    pub fn n_topics(&self) -> usize {
        if self.n_terms == 0 {
            0
        } else {
            self.data.len() / self.n_terms
        }
    }

    pub fn n_terms(&self) -> usize {
        self.n_terms
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.n_terms..(k + 1) * self.n_terms]
    }

    pub fn row_mut(&mut self, k: usize) -> &mut [f64] {
        let v = self.n_terms;
        &mut self.data[k * v..(k + 1) * v]
    }

    /// p(w|z) for every topic, gathered for one word into `out`.
    #[inline]
    pub fn column_into(&self, w: u32, out: &mut [f64]) {
        let v = self.n_terms;
        for (z, o) in out.iter_mut().enumerate() {
            *o = self.data[z * v + w as usize];
        }
    }

    #[inline]
    pub fn prob(&self, k: usize, w: u32) -> f64 {
        self.data[k * self.n_terms + w as usize]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks(self.n_terms.max(1))
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    /// Raises every entry to at least `floor`, then renormalizes each row.
    pub fn apply_floor(&mut self, floor: f64) {
        if floor <= 0.0 {
            return;
        }
        for k in 0..self.n_topics() {
            let row = self.row_mut(k);
            let mut s = 0.0;
            for p in row.iter_mut() {
                if *p < floor {
                    *p = floor;
                }
                s += *p;
            }
            for p in row.iter_mut() {
                *p /= s;
            }
        }
    }

    /// Normalizes each row to unit mass; rows with no mass become uniform.
    pub(crate) fn normalize_rows(&mut self) {
        let v = self.n_terms as f64;
        for k in 0..self.n_topics() {
            let row = self.row_mut(k);
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                row.iter_mut().for_each(|p| *p /= s);
            } else {
                warn!("topic {k} received no mass; resetting to uniform");
                row.iter_mut().for_each(|p| *p = 1.0 / v);
            }
        }
    }

    /// Indices of the `n` most probable words of topic `k`, ties to the lower id.
    pub fn top_words(&self, k: usize, n: usize) -> Vec<u32> {
        let row = self.row(k);
        let mut idx: Vec<u32> = (0..row.len() as u32).collect();
        idx.sort_by(|&a, &b| {
            row[b as usize]
                .partial_cmp(&row[a as usize])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        idx.truncate(n);
        idx
    }

    /// Keeps only the listed topics, in the given order.
    pub fn select(&self, keep: &[usize]) -> Self {
        let mut data = Vec::with_capacity(keep.len() * self.n_terms);
        for &k in keep {
            data.extend_from_slice(self.row(k));
        }
        Self {
            n_terms: self.n_terms,
            data,
        }
    }

    pub fn check_simplex(&self, tol: f64) -> Result<()> {
        for (k, row) in self.rows().enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > tol || row.iter().any(|&p| p < 0.0) {
                return Err(Error::Shape(format!("topic {k} is not a distribution (sum {s})")));
            }
        }
        Ok(())
    }
}

/// Per-document topic proportions p(z|d). Vectors may be shorter than the
/// current topic count; missing entries are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocTopicMix {
    mixes: Vec<Vec<f64>>,
}

impl DocTopicMix {
    pub fn new(mixes: Vec<Vec<f64>>) -> Self {
        Self { mixes }
    }

    pub fn uniform(n_docs: usize, k: usize) -> Self {
        Self {
            mixes: vec![vec![1.0 / k as f64; k]; n_docs],
        }
    }

    pub fn n_docs(&self) -> usize {
        self.mixes.len()
    }

    pub fn get(&self, d: usize) -> &[f64] {
        &self.mixes[d]
    }

    pub fn set(&mut self, d: usize, mix: Vec<f64>) {
        self.mixes[d] = mix;
    }

    pub fn as_slice(&self) -> &[Vec<f64>] {
        &self.mixes
    }

    pub fn into_inner(self) -> Vec<Vec<f64>> {
        self.mixes
    }

    /// Zero-pads every mixture to length `k`.
    pub fn padded(&self, k: usize) -> Vec<Vec<f64>> {
        self.mixes.iter().map(|m| pad(m, k)).collect()
    }

    pub fn check_simplex(&self, tol: f64) -> Result<()> {
        for (d, m) in self.mixes.iter().enumerate() {
            let s: f64 = m.iter().sum();
            if (s - 1.0).abs() > tol || m.iter().any(|&p| p < 0.0) {
                return Err(Error::Shape(format!("mixture of document {d} sums to {s}")));
            }
        }
        Ok(())
    }
}

pub(crate) fn pad(mix: &[f64], k: usize) -> Vec<f64> {
    let mut out = mix.to_vec();
    out.resize(k.max(mix.len()), 0.0);
    out
}

/// Euclidean distance between two vectors of equal length.
pub fn l2(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
