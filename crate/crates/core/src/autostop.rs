//! Parameter-free topic growth.
//!
//! Each outer iteration promotes the single worst-fit document (largest Δ)
//! to a new topic, folds every other document into the enlarged topic set,
//! and runs one M-step. A [`StopDetector`] watches either topic diversity
//! (maximized) or the distance from a query model to its nearest topic
//! (minimized). Once it fires, the topic set is rolled back to the best
//! snapshot and refined with plain EM at that K.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{background_model, Corpus, LanguageModel};
use crate::error::{Error, Result};
use crate::nplsa::{delta_from, doc_mle_row, positive_start, DEFAULT_TOPIC_CAP};
use crate::plsa::{self, e_step_with_loglik, fold_in_from, m_step, run_em, EmConfig, Posterior};
use crate::rng;
use crate::topics::{l2, DocTopicMix, TopicSet};
use crate::trace::{ms_since, Phase, RunTrace, TraceRow};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiversityScore {
    pub value: f64,
    pub k: usize,
}

/// Mean pairwise L2 distance between topics.
pub fn diversity(topics: &TopicSet) -> Result<DiversityScore> {
    diversity_by(topics, l2)
}

/// Mean pairwise distance under an arbitrary distance function.
pub fn diversity_by<F>(topics: &TopicSet, dist: F) -> Result<DiversityScore>
where
    F: Fn(&[f64], &[f64]) -> f64,
{
    let k = topics.n_topics();
    if k < 2 {
        return Err(Error::DiversityUndefined(k));
    }
    let mut sum = 0.0;
    for i in 0..k - 1 {
        for j in i + 1..k {
            sum += dist(topics.row(i), topics.row(j));
        }
    }
    Ok(DiversityScore {
        value: 2.0 * sum / ((k - 1) * k) as f64,
        k,
    })
}

/// Diversity with the K < 2 case reported as 0.
pub fn diversity_or_zero(topics: &TopicSet) -> f64 {
    diversity(topics).map_or(0.0, |s| s.value)
}

/// Distance from `theta_q` to its nearest topic and that topic's index
/// (lowest index on ties).
pub fn query_distance(theta_q: &[f64], topics: &TopicSet) -> (f64, usize) {
    let mut best = (f64::INFINITY, 0);
    for (k, row) in topics.rows().enumerate() {
        let d = l2(theta_q, row);
        if d < best.0 {
            best = (d, k);
        }
    }
    best
}

/// A query expanded into a language model by pseudo feedback.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryModel {
    pub terms: Vec<String>,
    pub theta: LanguageModel,
    pub feedback_size: usize,
}

/// Estimates θ_q from the documents containing any query term.
///
/// Each feedback document is modeled as λ·θ_q + (1−λ)·θ_C with θ_C the
/// collection model; θ_q starts at the pooled feedback model and is updated
/// by EM for at most `max_iters` iterations.
pub fn estimate_query_model<S: AsRef<str>>(
    corpus: &Corpus,
    terms: &[S],
    lambda: f64,
    max_iters: usize,
) -> Result<QueryModel> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::InvalidConfig(format!("lambda {lambda} outside (0, 1]")));
    }
    let names: Vec<String> = terms.iter().map(|t| t.as_ref().to_lowercase()).collect();
    let ids: Vec<u32> = names.iter().filter_map(|t| corpus.vocab().id(t)).collect();
    let mut pooled = vec![0.0; corpus.n_terms()];
    let mut feedback = 0;
    for doc in corpus.docs() {
        if doc.terms.iter().any(|t| ids.contains(t)) {
            feedback += 1;
            for (w, n) in doc.iter() {
                pooled[w as usize] += n as f64;
            }
        }
    }
    if feedback == 0 {
        return Err(Error::QueryNotInCorpus(names));
    }
    let background = background_model(corpus);
    let theta = feedback_em(&pooled, background.probs(), lambda, max_iters);
    Ok(QueryModel {
        terms: names,
        theta: LanguageModel::new(theta)?,
        feedback_size: feedback,
    })
}

/// EM for θ_q given pooled feedback counts and the background model.
pub(crate) fn feedback_em(counts: &[f64], background: &[f64], lambda: f64, max_iters: usize) -> Vec<f64> {
    let total: f64 = counts.iter().sum();
    let mut theta: Vec<f64> = counts.iter().map(|c| c / total).collect();
    let mut next = vec![0.0; theta.len()];
    for _ in 0..max_iters {
        let mut s = 0.0;
        for w in 0..theta.len() {
            let fg = lambda * theta[w];
            let mass = fg + (1.0 - lambda) * background[w];
            next[w] = if mass > 0.0 { counts[w] * fg / mass } else { 0.0 };
            s += next[w];
        }
        let mut change = 0.0;
        for w in 0..theta.len() {
            let v = next[w] / s;
            change += (v - theta[w]).abs();
            theta[w] = v;
        }
        if change < 1e-14 {
            break;
        }
    }
    theta
}

/// Log-likelihood of pooled feedback counts under the two-component mixture.
pub fn feedback_log_likelihood(counts: &[f64], theta_q: &[f64], background: &[f64], lambda: f64) -> f64 {
    counts
        .iter()
        .zip(theta_q.iter().zip(background))
        .filter(|(&c, _)| c > 0.0)
        .map(|(c, (q, b))| c * (lambda * q + (1.0 - lambda) * b).ln())
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopMode {
    Maximize,
    Minimize,
}

/// Tracks a score per K and fires after `patience` observations without a
/// strict improvement of the best score.
#[derive(Debug, Clone, PartialEq)]
pub struct StopDetector {
    pub mode: StopMode,
    pub patience: usize,
    pub history: Vec<(usize, f64)>,
    best: Option<(usize, f64)>,
    since_best: usize,
}

impl StopDetector {
    pub fn new(mode: StopMode, patience: usize) -> Self {
        Self {
            mode,
            patience: patience.max(1),
            history: Vec::new(),
            best: None,
            since_best: 0,
        }
    }

    /// Records a score; returns true if it is the new best.
    pub fn observe(&mut self, k: usize, score: f64) -> bool {
        self.history.push((k, score));
        let better = match self.best {
            None => true,
            Some((_, b)) => match self.mode {
                StopMode::Maximize => score > b,
                StopMode::Minimize => score < b,
            },
        };
        if better {
            self.best = Some((k, score));
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        better
    }

    pub fn fired(&self) -> bool {
        self.since_best >= self.patience
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AutoConfig {
    pub em: EmConfig,
    /// Spawns without improvement before growth stops.
    pub patience: usize,
    /// Fail with [`Error::TopicExplosion`] once K exceeds this.
    pub max_topics: usize,
    /// Stop growing (without error) once K reaches this.
    pub max_k: Option<usize>,
    /// Run EM at the selected K after rollback.
    pub refine: bool,
    /// Query-model mixture weight λ.
    pub lambda: f64,
    pub feedback_iters: usize,
}

impl Default for AutoConfig {
    fn default() -> Self {
        Self {
            em: EmConfig::default(),
            patience: 3,
            max_topics: DEFAULT_TOPIC_CAP,
            max_k: None,
            refine: true,
            lambda: 0.5,
            feedback_iters: 50,
        }
    }
}

impl AutoConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            em: EmConfig::with_seed(seed),
            ..Self::default()
        }
    }
}

/// What the detector watches.
#[derive(Debug, Clone)]
pub enum Criterion {
    Diversity,
    QueryDistance(QueryModel),
}

impl Criterion {
    fn mode(&self) -> StopMode {
        match self {
            Criterion::Diversity => StopMode::Maximize,
            Criterion::QueryDistance(_) => StopMode::Minimize,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AutoFit {
    /// Final topics (refined when enabled).
    pub topics: TopicSet,
    pub mixes: DocTopicMix,
    /// Topics exactly as they were at the detector's best K.
    pub snapshot: TopicSet,
    pub best_k: usize,
    pub best_score: f64,
    pub detector: StopDetector,
    /// Document promoted at each growth iteration.
    pub spawned_from: Vec<usize>,
    pub log_likelihood: f64,
    pub trace: RunTrace,
}

/// Farthest-first growth with the diversity stopping rule.
pub fn train_parameter_free(corpus: &Corpus, config: &AutoConfig) -> Result<AutoFit> {
    grow(corpus, &Criterion::Diversity, config)
}

/// Farthest-first growth stopping where the query model is closest to a topic.
pub fn train_weakly_supervised<S: AsRef<str>>(
    corpus: &Corpus,
    query: &[S],
    config: &AutoConfig,
) -> Result<(AutoFit, QueryModel)> {
    let qm = estimate_query_model(corpus, query, config.lambda, config.feedback_iters)?;
    let fit = grow(corpus, &Criterion::QueryDistance(qm.clone()), config)?;
    Ok((fit, qm))
}

fn annotate(row: &mut TraceRow, criterion: &Criterion, topics: &TopicSet, corpus: &Corpus) -> f64 {
    let div = diversity_or_zero(topics);
    row.diversity = Some(div);
    match criterion {
        Criterion::Diversity => div,
        Criterion::QueryDistance(qm) => {
            let (dist, k) = query_distance(qm.theta.probs(), topics);
            row.query_distance = Some(dist);
            row.closest_topic = Some(k);
            let words: Vec<&str> = topics
                .top_words(k, 5)
                .into_iter()
                .filter_map(|w| corpus.vocab().term(w))
                .collect();
            row.closest_terms = Some(words.join(" "));
            dist
        }
    }
}

/// Shared growth loop behind both stopping rules.
pub fn grow(corpus: &Corpus, criterion: &Criterion, config: &AutoConfig) -> Result<AutoFit> {
    let em = &config.em;
    em.validate()?;
    let n_docs = corpus.n_docs();
    let mut rng = rng::stream(em.seed, 0);
    let mut topics = TopicSet::random(&mut rng, 1, corpus.n_terms());
    let mut mixes = DocTopicMix::uniform(n_docs, 1);
    let mut trace = RunTrace::new();
    let mut detector = StopDetector::new(criterion.mode(), config.patience);
    let mut spawned_from = Vec::new();

    let mut row = TraceRow::new(1, 1, Phase::Grow);
    row.loglik = Some(plsa::log_likelihood(corpus, &topics, &mixes)?);
    let score = annotate(&mut row, criterion, &topics, corpus);
    trace.push(row);
    detector.observe(1, score);
    let mut snapshot = (topics.clone(), mixes.clone());

    while !detector.fired() {
        let k = topics.n_topics();
        if config.max_k.is_some_and(|m| k >= m) {
            break;
        }
        let start = Instant::now();
        let scan = (0..n_docs)
            .into_par_iter()
            .map(|d| delta_from(corpus.doc(d), &topics, mixes.get(d), em))
            .collect::<Result<Vec<_>>>()?;
        let (star, max_delta) = scan
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (d, (delta, _))| {
                if *delta > best.1 {
                    (d, *delta)
                } else {
                    best
                }
            });
        if !(max_delta > 0.0) {
            // every document is already fitted as well as its own MLE
            break;
        }
        let mean_delta = scan.iter().map(|(d, _)| d).sum::<f64>() / n_docs as f64;

        let star_doc = corpus.doc(star);
        topics.push(doc_mle_row(star_doc, corpus.n_terms()))?;
        let k = topics.n_topics();
        if k > config.max_topics {
            return Err(Error::TopicExplosion { cap: config.max_topics });
        }
        spawned_from.push(star);

        let posts = scan
            .par_iter()
            .enumerate()
            .map(|(d, (_, fit))| -> Result<Posterior> {
                let doc = corpus.doc(d);
                if d == star {
                    return Ok(Posterior::one_hot(doc.n_distinct(), k, k - 1));
                }
                let mut init = fit.mix.clone();
                init.push(0.0);
                let refit = fold_in_from(doc, &topics, &positive_start(&init, k), em)?;
                Ok(e_step_with_loglik(d, doc, &topics, &refit.mix)?.0)
            })
            .collect::<Result<Vec<_>>>()?;
        let (t, m) = m_step(corpus, &posts, em.smoothing_floor)?;
        topics = t;
        mixes = m;

        let mut row = TraceRow::new(trace.next_iter(), k, Phase::Grow);
        row.loglik = Some(plsa::log_likelihood(corpus, &topics, &mixes)?);
        row.epsilon = Some(max_delta);
        row.mean_delta = Some(mean_delta);
        row.spawned = Some(star);
        let score = annotate(&mut row, criterion, &topics, corpus);
        row.wall_ms = ms_since(start);
        trace.push(row);
        if detector.observe(k, score) {
            snapshot = (topics.clone(), mixes.clone());
        }
    }

    let (best_k, best_score) = detector.best().expect("initial state observed");
    let (topics, mixes) = snapshot;
    let snapshot_topics = topics.clone();
    let mut row = TraceRow::new(trace.next_iter(), best_k, Phase::Rollback);
    row.loglik = Some(plsa::log_likelihood(corpus, &topics, &mixes)?);
    annotate(&mut row, criterion, &topics, corpus);
    trace.push(row);

    let (topics, mixes, ll) = if config.refine {
        let (t, m, ll) = run_em(corpus, topics, mixes, em, &mut trace, Phase::Refine)?;
        (t, m, ll)
    } else {
        let ll = plsa::log_likelihood(corpus, &topics, &mixes)?;
        (topics, mixes, ll)
    };
    if let Criterion::QueryDistance(_) = criterion {
        if let Some(last) = trace.rows.last_mut().filter(|r| r.phase == Phase::Refine) {
            annotate(last, criterion, &topics, corpus);
        }
    }

    Ok(AutoFit {
        topics,
        mixes,
        snapshot: snapshot_topics,
        best_k,
        best_score,
        detector,
        spawned_from,
        log_likelihood: ll,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ingest_sparse;
    use approx::assert_abs_diff_eq;

    fn ts(rows: &[&[f64]]) -> TopicSet {
        TopicSet::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn diversity_values() {
        assert_eq!(diversity(&ts(&[&[0.3, 0.7], &[0.3, 0.7]])).unwrap().value, 0.0);
        assert_abs_diff_eq!(
            diversity(&ts(&[&[1.0, 0.0], &[0.0, 1.0]])).unwrap().value,
            2f64.sqrt(),
            epsilon = 1e-15
        );
        let three = ts(&[&[1.0, 0.0], &[0.0, 1.0], &[0.5, 0.5]]);
        assert_abs_diff_eq!(
            diversity(&three).unwrap().value,
            (2f64.sqrt() + 0.5f64.sqrt() + 0.5f64.sqrt()) / 3.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(diversity(&three).unwrap().value, 0.94281, epsilon = 1e-5);
    }

    #[test]
    fn diversity_needs_two_topics() {
        assert!(matches!(
            diversity(&ts(&[&[1.0]])),
            Err(Error::DiversityUndefined(1))
        ));
        assert_eq!(diversity_or_zero(&ts(&[&[1.0]])), 0.0);
    }

    #[test]
    fn query_distance_values() {
        let t = ts(&[&[0.2, 0.8], &[0.6, 0.4]]);
        assert_eq!(query_distance(&[0.6, 0.4], &t), (0.0, 1));
        assert_eq!(query_distance(&[1.0, 0.0], &ts(&[&[0.0, 1.0], &[1.0, 0.0]])), (0.0, 1));
        let (d, k) = query_distance(&[0.5, 0.5], &ts(&[&[1.0, 0.0]]));
        assert_abs_diff_eq!(d, 0.5f64.sqrt(), epsilon = 1e-15);
        assert_eq!(k, 0);
        // ties go to the lower index
        assert_eq!(query_distance(&[0.5, 0.5], &ts(&[&[1.0, 0.0], &[0.0, 1.0]])).1, 0);
    }

    #[test]
    fn detector_patience() {
        let mut det = StopDetector::new(StopMode::Maximize, 2);
        assert!(det.observe(1, 0.0));
        assert!(det.observe(2, 0.5));
        assert!(!det.observe(3, 0.4));
        assert!(!det.fired());
        assert!(!det.observe(4, 0.5));
        assert!(det.fired());
        assert_eq!(det.best(), Some((2, 0.5)));

        let mut det = StopDetector::new(StopMode::Minimize, 1);
        det.observe(1, 3.0);
        det.observe(2, 1.0);
        assert!(!det.fired());
        det.observe(3, 2.0);
        assert!(det.fired());
        assert_eq!(det.best(), Some((2, 1.0)));
    }

    #[test]
    fn query_model_lambda_one_is_pooled_feedback() {
        let c = ingest_sparse(vec![
            (0, "q", 1), (0, "a", 3),
            (1, "b", 5),
            (2, "q", 2), (2, "b", 2),
        ])
        .unwrap();
        let qm = estimate_query_model(&c, &["q"], 1.0, 50).unwrap();
        assert_eq!(qm.feedback_size, 2);
        let v = |t: &str| qm.theta.probs()[c.vocab().id(t).unwrap() as usize];
        assert_abs_diff_eq!(v("q"), 3.0 / 8.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v("a"), 3.0 / 8.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v("b"), 2.0 / 8.0, epsilon = 1e-15);
    }

    #[test]
    fn query_model_missing_query() {
        let c = ingest_sparse(vec![(0, "a", 1)]).unwrap();
        assert!(matches!(
            estimate_query_model(&c, &["zzz"], 0.5, 50),
            Err(Error::QueryNotInCorpus(_))
        ));
    }

    #[test]
    fn query_model_vanishing_lambda() {
        let c = ingest_sparse(vec![
            (0, "q", 1), (0, "a", 3),
            (1, "b", 5), (1, "c", 1),
            (2, "q", 2), (2, "b", 2),
        ])
        .unwrap();
        let lambda = 1e-9;
        let bg = background_model(&c);
        let mut pooled = vec![0.0; c.n_terms()];
        for d in [0, 2] {
            for (w, n) in c.doc(d).iter() {
                pooled[w as usize] += n as f64;
            }
        }
        let init: Vec<f64> = pooled.iter().map(|x| x / 8.0).collect();
        let qm = estimate_query_model(&c, &["q"], lambda, 50).unwrap();
        let before = feedback_log_likelihood(&pooled, &init, bg.probs(), lambda);
        let after = feedback_log_likelihood(&pooled, qm.theta.probs(), bg.probs(), lambda);
        assert!((after - before).abs() < 1e-6);

        // feedback set = whole collection: the pooled start is already the fixed point
        let qm = estimate_query_model(&c, &["q", "b"], lambda, 50).unwrap();
        for (a, b) in qm.theta.probs().iter().zip(bg.probs()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-6);
        }
    }
}
