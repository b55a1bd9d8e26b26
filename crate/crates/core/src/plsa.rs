//! Fixed-K PLSA: E-step, M-step, likelihood, fold-in, and the EM driver.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Doc};
use crate::error::{Error, Result};
use crate::rng;
use crate::topics::{DocTopicMix, TopicSet};
use crate::trace::{ms_since, Phase, RunTrace, TraceRow};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub max_iters: usize,
    /// Stop when |ΔL / L| falls below this.
    pub rel_tol: f64,
    pub seed: u64,
    /// Lower bound applied to every topic entry after each M-step.
    pub smoothing_floor: f64,
    pub fold_in_max_iters: usize,
    pub fold_in_rel_tol: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            rel_tol: 1e-5,
            seed: 0,
            smoothing_floor: 1e-9,
            fold_in_max_iters: 50,
            fold_in_rel_tol: 1e-6,
        }
    }
}

impl EmConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 || self.fold_in_max_iters < 1 {
            return Err(Error::InvalidConfig("iteration budgets must be at least 1".into()));
        }
        if !(self.rel_tol > 0.0) || !(self.fold_in_rel_tol > 0.0) {
            return Err(Error::InvalidConfig("tolerances must be positive".into()));
        }
        if !(0.0..=1e-3).contains(&self.smoothing_floor) {
            return Err(Error::InvalidConfig(format!(
                "smoothing floor {} outside [0, 1e-3]",
                self.smoothing_floor
            )));
        }
        Ok(())
    }
}

/// p(z|d,w) for each distinct word of one document, row-major
/// (`n_distinct` × `k`).
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    k: usize,
    probs: Vec<f64>,
}

impl Posterior {
    /// Every word assigned to topic `z` with certainty.
    pub fn one_hot(n_distinct: usize, k: usize, z: usize) -> Self {
        let mut probs = vec![0.0; n_distinct * k];
        for i in 0..n_distinct {
            probs[i * k + z] = 1.0;
        }
        Self { k, probs }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::Shape("ragged posterior rows".into()));
        }
        Ok(Self {
            k,
            probs: rows.into_iter().flatten().collect(),
        })
    }

    pub fn n_topics(&self) -> usize {
        self.k
    }

    pub fn n_words(&self) -> usize {
        if self.k == 0 {
            0
        } else {
            self.probs.len() / self.k
        }
    }

    pub fn word(&self, i: usize) -> &[f64] {
        &self.probs[i * self.k..(i + 1) * self.k]
    }
}

/// Evaluates Σ_z mix_z p(w|z) for each word, writing the normalized
/// posterior into `post` (when given) and returning the document
/// log-likelihood. `mix` may be shorter than K.
fn posterior_pass(
    d: usize,
    doc: Doc<'_>,
    topics: &TopicSet,
    mix: &[f64],
    mut post: Option<&mut Vec<f64>>,
) -> Result<f64> {
    let k = topics.n_topics();
    let active = mix.len().min(k);
    if let Some(p) = post.as_deref_mut() {
        p.clear();
        p.resize(doc.n_distinct() * k, 0.0);
    }
    let mut ll = 0.0;
    for (i, (w, n)) in doc.iter().enumerate() {
        let mut denom = 0.0;
        match post.as_deref_mut() {
            Some(p) => {
                let q = &mut p[i * k..i * k + k];
                for z in 0..active {
                    let v = mix[z] * topics.prob(z, w);
                    q[z] = v;
                    denom += v;
                }
                if !(denom > 0.0) {
                    return Err(Error::UnmodelableWord { doc: d, term: w });
                }
                q[..active].iter_mut().for_each(|x| *x /= denom);
            }
            None => {
                for z in 0..active {
                    denom += mix[z] * topics.prob(z, w);
                }
                if !(denom > 0.0) {
                    return Err(Error::UnmodelableWord { doc: d, term: w });
                }
            }
        }
        ll += n as f64 * denom.ln();
    }
    Ok(ll)
}

/// Posterior p(z|d,w) for every distinct word of document `d`.
pub fn e_step_doc(corpus: &Corpus, d: usize, topics: &TopicSet, mix: &[f64]) -> Result<Posterior> {
    e_step_with_loglik(d, corpus.doc(d), topics, mix).map(|(p, _)| p)
}

pub(crate) fn e_step_with_loglik(
    d: usize,
    doc: Doc<'_>,
    topics: &TopicSet,
    mix: &[f64],
) -> Result<(Posterior, f64)> {
    let mut probs = Vec::new();
    let ll = posterior_pass(d, doc, topics, mix, Some(&mut probs))?;
    Ok((
        Posterior {
            k: topics.n_topics(),
            probs,
        },
        ll,
    ))
}

/// E-step over the whole corpus; returns posteriors and L(D) at the
/// parameters used.
pub(crate) fn e_step_all(
    corpus: &Corpus,
    topics: &TopicSet,
    mixes: &DocTopicMix,
) -> Result<(Vec<Posterior>, f64)> {
    let out = (0..corpus.n_docs())
        .into_par_iter()
        .map(|d| e_step_with_loglik(d, corpus.doc(d), topics, mixes.get(d)))
        .collect::<Result<Vec<_>>>()?;
    let mut ll = 0.0;
    let posts = out
        .into_iter()
        .map(|(p, l)| {
            ll += l;
            p
        })
        .collect();
    Ok((posts, ll))
}

/// Re-estimates p(z|d) and p(w|z) from posteriors. Posteriors narrower than
/// the widest one are treated as zero on the missing topics. Topic rows are
/// floored at `floor` and renormalized.
pub fn m_step(corpus: &Corpus, posteriors: &[Posterior], floor: f64) -> Result<(TopicSet, DocTopicMix)> {
    if posteriors.len() != corpus.n_docs() {
        return Err(Error::Shape(format!(
            "{} posteriors for {} documents",
            posteriors.len(),
            corpus.n_docs()
        )));
    }
    let k = posteriors.iter().map(Posterior::n_topics).max().unwrap_or(0);
    let v = corpus.n_terms();
    let mut acc = vec![0.0; k * v];
    let mut mixes = Vec::with_capacity(corpus.n_docs());
    for (d, post) in posteriors.iter().enumerate() {
        let doc = corpus.doc(d);
        if post.n_words() != doc.n_distinct() {
            return Err(Error::Shape(format!(
                "posterior for document {d} covers {} words, document has {}",
                post.n_words(),
                doc.n_distinct()
            )));
        }
        let kd = post.n_topics();
        let mut mix = vec![0.0; k];
        for (i, (w, n)) in doc.iter().enumerate() {
            let n = n as f64;
            for (z, &q) in post.word(i).iter().enumerate() {
                let c = n * q;
                mix[z] += c;
                acc[z * v + w as usize] += c;
            }
        }
        let total: f64 = mix[..kd].iter().sum();
        mix.iter_mut().for_each(|m| *m /= total);
        mixes.push(mix);
    }
    let mut topics = TopicSet::from_rows(acc.chunks(v.max(1)).map(<[f64]>::to_vec).collect())?;
    topics.normalize_rows();
    topics.apply_floor(floor);
    Ok((topics, DocTopicMix::new(mixes)))
}

/// L(D) = Σ_d Σ_w n(d,w) log Σ_z p(z|d) p(w|z).
pub fn log_likelihood(corpus: &Corpus, topics: &TopicSet, mixes: &DocTopicMix) -> Result<f64> {
    if mixes.n_docs() != corpus.n_docs() {
        return Err(Error::Shape("one mixture per document required".into()));
    }
    let per_doc = (0..corpus.n_docs())
        .into_par_iter()
        .map(|d| posterior_pass(d, corpus.doc(d), topics, mixes.get(d), None))
        .collect::<Result<Vec<f64>>>()?;
    Ok(per_doc.into_iter().sum())
}

/// log p(w_d | mix, topics) for a single document.
pub fn doc_log_likelihood(doc: Doc<'_>, topics: &TopicSet, mix: &[f64]) -> Result<f64> {
    posterior_pass(0, doc, topics, mix, None)
}

/// Result of fitting one document's proportions to frozen topics.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldIn {
    pub mix: Vec<f64>,
    /// log p(w_d | Θ) at `mix`.
    pub log_likelihood: f64,
    pub iters: usize,
    /// Log-likelihood before each mixture update, then at the returned mix.
    pub trajectory: Vec<f64>,
}

/// Fold-in from the uniform mixture.
pub fn fold_in(doc: Doc<'_>, topics: &TopicSet, config: &EmConfig) -> Result<FoldIn> {
    let k = topics.n_topics();
    fold_in_from(doc, topics, &vec![1.0 / k as f64; k], config)
}

/// Fold-in: EM over p(z|d) alone with p(w|z) held fixed, starting at `init`.
///
/// The objective is concave in the mixture, so any strictly positive start
/// reaches the same maximum; zero entries of `init` stay zero.
pub fn fold_in_from(doc: Doc<'_>, topics: &TopicSet, init: &[f64], config: &EmConfig) -> Result<FoldIn> {
    let k = topics.n_topics();
    if k == 0 {
        return Err(Error::Shape("fold-in needs at least one topic".into()));
    }
    let mut mix = crate::topics::pad(init, k);
    mix.truncate(k);
    let s: f64 = mix.iter().sum();
    if !(s > 0.0) {
        return Err(Error::Shape("fold-in start has no mass".into()));
    }
    mix.iter_mut().for_each(|m| *m /= s);

    let n_tokens = doc.n_tokens() as f64;
    let mut col = vec![0.0; k];
    let mut next = vec![0.0; k];
    let mut trajectory = Vec::new();
    let mut prev: Option<f64> = None;
    for it in 0..config.fold_in_max_iters {
        next.iter_mut().for_each(|x| *x = 0.0);
        let mut ll = 0.0;
        for (w, n) in doc.iter() {
            topics.column_into(w, &mut col);
            let mut denom = 0.0;
            for z in 0..k {
                col[z] *= mix[z];
                denom += col[z];
            }
            if !(denom > 0.0) {
                return Err(Error::UnmodelableWord { doc: 0, term: w });
            }
            let scale = n as f64 / denom;
            for z in 0..k {
                next[z] += col[z] * scale;
            }
            ll += n as f64 * denom.ln();
        }
        trajectory.push(ll);
        if let Some(p) = prev {
            if (ll - p).abs() <= config.fold_in_rel_tol * ll.abs() {
                return Ok(FoldIn {
                    mix,
                    log_likelihood: ll,
                    iters: it,
                    trajectory,
                });
            }
        }
        prev = Some(ll);
        for z in 0..k {
            mix[z] = next[z] / n_tokens;
        }
    }
    let ll = doc_log_likelihood(doc, topics, &mix)?;
    trajectory.push(ll);
    Ok(FoldIn {
        mix,
        log_likelihood: ll,
        iters: config.fold_in_max_iters,
        trajectory,
    })
}

/// Output of a fixed-K EM run.
#[derive(Debug, Clone)]
pub struct PlsaFit {
    pub topics: TopicSet,
    pub mixes: DocTopicMix,
    pub log_likelihood: f64,
    pub trace: RunTrace,
}

/// Trains PLSA with `k` topics initialized from Dirichlet(1) rows.
pub fn train_plsa(corpus: &Corpus, k: usize, config: &EmConfig) -> Result<PlsaFit> {
    config.validate()?;
    if k < 1 {
        return Err(Error::InvalidConfig("K must be at least 1".into()));
    }
    let mut rng = rng::stream(config.seed, 0);
    let topics = TopicSet::random(&mut rng, k, corpus.n_terms());
    let mixes = DocTopicMix::uniform(corpus.n_docs(), k);
    let mut trace = RunTrace::new();
    let (topics, mixes, ll) = run_em(corpus, topics, mixes, config, &mut trace, Phase::Em)?;
    Ok(PlsaFit {
        topics,
        mixes,
        log_likelihood: ll,
        trace,
    })
}

/// EM from the given parameters until |ΔL/L| < rel_tol or `max_iters`.
/// Appends one row per iteration to `trace`, with L(D) after the M-step.
pub fn run_em(
    corpus: &Corpus,
    mut topics: TopicSet,
    mut mixes: DocTopicMix,
    config: &EmConfig,
    trace: &mut RunTrace,
    phase: Phase,
) -> Result<(TopicSet, DocTopicMix, f64)> {
    let (mut posts, mut ll) = e_step_all(corpus, &topics, &mixes)?;
    for _ in 0..config.max_iters {
        let start = Instant::now();
        let (t, m) = m_step(corpus, &posts, config.smoothing_floor)?;
        let (p, next_ll) = e_step_all(corpus, &t, &m)?;
        let mut row = TraceRow::new(trace.next_iter(), t.n_topics(), phase);
        row.loglik = Some(next_ll);
        row.wall_ms = ms_since(start);
        trace.push(row);
        let converged = (next_ll - ll).abs() <= config.rel_tol * ll.abs();
        topics = t;
        mixes = m;
        posts = p;
        ll = next_ll;
        if converged {
            break;
        }
    }
    Ok((topics, mixes, ll))
}
