//! Nonparametric PLSA: EM in which a document that the current topics fit
//! poorly (log-likelihood ratio above ε) is promoted to a new topic.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Doc};
use crate::error::{Error, Result};
use crate::plsa::{self, e_step_with_loglik, fold_in_from, m_step, EmConfig, FoldIn, Posterior};
use crate::rng;
use crate::topics::{pad, DocTopicMix, TopicSet};
use crate::trace::{ms_since, Phase, RunTrace, TraceRow};

pub const DEFAULT_TOPIC_CAP: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NplsaConfig {
    pub em: EmConfig,
    /// Fail with [`Error::TopicExplosion`] once K exceeds this.
    pub max_topics: usize,
    /// Visit documents in an order shuffled with this seed instead of
    /// corpus order. The order is fixed for the whole run.
    pub shuffle: Option<u64>,
}

impl Default for NplsaConfig {
    fn default() -> Self {
        Self {
            em: EmConfig::default(),
            max_topics: DEFAULT_TOPIC_CAP,
            shuffle: None,
        }
    }
}

impl NplsaConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            em: EmConfig::with_seed(seed),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NplsaState {
    pub topics: TopicSet,
    /// Each mixture has the length of K when its document was last fitted.
    pub mixes: DocTopicMix,
    /// T_d: the topic count each document was last fitted against.
    pub fitted: Vec<usize>,
    pub epsilon: f64,
}

impl NplsaState {
    pub fn n_topics(&self) -> usize {
        self.topics.n_topics()
    }
}

/// L(D) − ε·K.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenalizedObjective {
    pub loglik: f64,
    pub k: usize,
    pub epsilon: f64,
    pub value: f64,
}

impl PenalizedObjective {
    pub fn new(loglik: f64, k: usize, epsilon: f64) -> Self {
        Self {
            loglik,
            k,
            epsilon,
            value: loglik - epsilon * k as f64,
        }
    }
}

/// Δ(d, Θ) = log p(w_d | θ_d) − max_mix log p(w_d | Θ).
pub fn delta(doc: Doc<'_>, topics: &TopicSet, config: &EmConfig) -> Result<f64> {
    let k = topics.n_topics();
    delta_from(doc, topics, &vec![1.0 / k as f64; k], config).map(|(d, _)| d)
}

/// Δ with the fold-in started from `init`; zero entries of `init` are
/// blended with the uniform mixture so every topic stays reachable.
pub(crate) fn delta_from(
    doc: Doc<'_>,
    topics: &TopicSet,
    init: &[f64],
    config: &EmConfig,
) -> Result<(f64, FoldIn)> {
    let start = positive_start(init, topics.n_topics());
    let fit = fold_in_from(doc, topics, &start, config)?;
    Ok((doc.self_log_likelihood() - fit.log_likelihood, fit))
}

pub(crate) fn positive_start(init: &[f64], k: usize) -> Vec<f64> {
    let mut m = pad(init, k);
    m.truncate(k);
    let s: f64 = m.iter().sum();
    if s > 0.0 && m.iter().all(|&x| x > 0.0) {
        return m;
    }
    let u = 1.0 / k as f64;
    m.iter()
        .map(|&x| if s > 0.0 { 0.5 * x / s + 0.5 * u } else { u })
        .collect()
}

/// The document's unsmoothed MLE, used as a spawned topic.
pub(crate) fn doc_mle_row(doc: Doc<'_>, n_terms: usize) -> Vec<f64> {
    let n = doc.n_tokens() as f64;
    let mut row = vec![0.0; n_terms];
    for (w, c) in doc.iter() {
        row[w as usize] = c as f64 / n;
    }
    row
}

/// Evaluates the penalized objective at the state's current parameters.
/// Mixtures shorter than K count as zero on the missing topics.
pub fn penalized_objective(state: &NplsaState, corpus: &Corpus) -> Result<PenalizedObjective> {
    let ll = plsa::log_likelihood(corpus, &state.topics, &state.mixes)?;
    Ok(PenalizedObjective::new(ll, state.n_topics(), state.epsilon))
}

#[derive(Debug, Clone)]
pub struct NplsaFit {
    pub state: NplsaState,
    pub trace: RunTrace,
    /// Documents promoted to topics, in spawn order.
    pub spawned_from: Vec<usize>,
}

/// Trains nPLSA with threshold `epsilon`.
///
/// Starts from one Dirichlet(1) topic. Each sweep visits every document:
/// if Δ(d, Θ) > ε the document's MLE becomes a new topic and all its words
/// are assigned to it; otherwise the document gets a standard E-step when
/// it was last fitted against the current K, and a fold-in when topics were
/// added since. An M-step closes the sweep. Stops once a sweep spawns
/// nothing and L(D) has plateaued.
pub fn train_nplsa(corpus: &Corpus, epsilon: f64, config: &NplsaConfig) -> Result<NplsaFit> {
    config.em.validate()?;
    if !(epsilon > 0.0) {
        return Err(Error::InvalidConfig(format!("epsilon must be positive, got {epsilon}")));
    }
    let em = &config.em;
    let n_docs = corpus.n_docs();
    let mut rng = rng::stream(em.seed, 0);
    let mut topics = TopicSet::random(&mut rng, 1, corpus.n_terms());
    let mut mixes = DocTopicMix::uniform(n_docs, 1);
    let mut fitted = vec![1usize; n_docs];
    let order: Vec<usize> = match config.shuffle {
        Some(seed) => rng::permutation(&mut rng::stream(seed, 1), n_docs),
        None => (0..n_docs).collect(),
    };

    let mut trace = RunTrace::new();
    let mut spawned_from = Vec::new();
    let mut prev_ll: Option<f64> = None;
    let mut posts: Vec<Option<Posterior>> = vec![None; n_docs];

    for sweep in 1..=em.max_iters {
        let start = Instant::now();
        let mut spawned = 0usize;
        let mut delta_sum = 0.0;
        for &d in &order {
            let doc = corpus.doc(d);
            let k = topics.n_topics();
            let (delta, fit) = delta_from(doc, &topics, mixes.get(d), em)?;
            delta_sum += delta;
            if delta > epsilon {
                topics.push(doc_mle_row(doc, corpus.n_terms()))?;
                let k = topics.n_topics();
                if k > config.max_topics {
                    return Err(Error::TopicExplosion { cap: config.max_topics });
                }
                posts[d] = Some(Posterior::one_hot(doc.n_distinct(), k, k - 1));
                let mut mix = vec![0.0; k];
                mix[k - 1] = 1.0;
                mixes.set(d, mix);
                spawned += 1;
                spawned_from.push(d);
            } else if fitted[d] == k {
                let (p, _) = e_step_with_loglik(d, doc, &topics, mixes.get(d))?;
                posts[d] = Some(p);
            } else {
                let (p, _) = e_step_with_loglik(d, doc, &topics, &fit.mix)?;
                posts[d] = Some(p);
                mixes.set(d, fit.mix);
            }
            fitted[d] = topics.n_topics();
        }
        let all: Vec<Posterior> = posts.iter().map(|p| p.clone().expect("every document visited")).collect();
        let (t, m) = m_step(corpus, &all, em.smoothing_floor)?;
        topics = t;
        mixes = m;

        let ll = plsa::log_likelihood(corpus, &topics, &mixes)?;
        let objective = PenalizedObjective::new(ll, topics.n_topics(), epsilon);
        let mut row = TraceRow::new(sweep, topics.n_topics(), Phase::Sweep);
        row.loglik = Some(ll);
        row.objective = Some(objective.value);
        row.epsilon = Some(epsilon);
        row.mean_delta = Some(delta_sum / n_docs as f64);
        row.spawned = Some(spawned);
        row.wall_ms = ms_since(start);
        trace.push(row);

        let plateau = prev_ll.is_some_and(|p| (ll - p).abs() <= em.rel_tol * p.abs());
        prev_ll = Some(ll);
        if spawned == 0 && plateau {
            break;
        }
    }

    Ok(NplsaFit {
        state: NplsaState {
            topics,
            mixes,
            fitted,
            epsilon,
        },
        trace,
        spawned_from,
    })
}
