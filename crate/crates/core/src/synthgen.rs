//! Synthetic corpora from the LDA generative process, with a rejection
//! filter that keeps ground-truth topics pairwise distinct.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Vocabulary};
use crate::error::{Error, Result};
use crate::rng;
use crate::topics::{l2, DocTopicMix, TopicSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_docs: usize,
    pub doc_len: usize,
    pub n_topics: usize,
    pub vocab_size: usize,
    /// Dirichlet concentration of per-document topic mixtures.
    pub alpha: f64,
    /// Dirichlet concentration of topic word distributions.
    pub beta: f64,
    /// Candidate topics closer than this (L2) to an accepted one are rejected.
    pub min_topic_dist: f64,
    pub seed: u64,
}

impl SynthConfig {
    /// 1000 documents of 200 tokens, 20 topics over 1000 words.
    pub fn paper(seed: u64) -> Self {
        Self {
            n_docs: 1000,
            doc_len: 200,
            n_topics: 20,
            vocab_size: 1000,
            alpha: 0.1,
            beta: 0.01,
            min_topic_dist: 0.5,
            seed,
        }
    }

    /// 200 documents of 100 tokens, 10 topics over 500 words.
    pub fn desk(seed: u64) -> Self {
        Self {
            n_docs: 200,
            doc_len: 100,
            n_topics: 10,
            vocab_size: 500,
            ..Self::paper(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_docs == 0 || self.doc_len == 0 || self.n_topics == 0 || self.vocab_size == 0 {
            return Err(Error::InvalidConfig("corpus dimensions must be positive".into()));
        }
        if !(self.alpha > 0.0) || !(self.beta > 0.0) {
            return Err(Error::InvalidConfig("Dirichlet parameters must be positive".into()));
        }
        if !(self.min_topic_dist >= 0.0 && self.min_topic_dist < 2f64.sqrt()) {
            return Err(Error::InvalidConfig(format!(
                "min_topic_dist {} outside [0, sqrt 2)",
                self.min_topic_dist
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTruth {
    pub topics: TopicSet,
    pub mixes: DocTopicMix,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    pub truth: SyntheticTruth,
    /// Per document, the (word, topic) pair of every generated token.
    pub assignments: Vec<Vec<(u32, u32)>>,
}

/// Vocabulary `w0 .. w{V-1}` used for generated corpora.
pub fn synthetic_vocabulary(size: usize) -> Vocabulary {
    Vocabulary::from_terms((0..size).map(|i| format!("w{i}")))
}

/// Draws topics from Dirichlet(β·1_V), keeping a candidate only if its L2
/// distance to every accepted topic exceeds `min_topic_dist`.
pub fn sample_distinct_topics(config: &SynthConfig) -> Result<Vec<Vec<f64>>> {
    config.validate()?;
    let mut rng = rng::stream(config.seed, 0);
    let limit = 10_000 * config.n_topics;
    let mut accepted: Vec<Vec<f64>> = Vec::with_capacity(config.n_topics);
    let mut rejections = 0;
    while accepted.len() < config.n_topics {
        let cand = rng::dirichlet(&mut rng, config.beta, config.vocab_size);
        if accepted.iter().all(|t| l2(t, &cand) > config.min_topic_dist) {
            accepted.push(cand);
        } else {
            rejections += 1;
            if rejections > limit {
                return Err(Error::DistinctnessUnsatisfiable {
                    rejections,
                    n_topics: config.n_topics,
                    min_dist: config.min_topic_dist,
                });
            }
        }
    }
    Ok(accepted)
}

fn cdf(probs: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    probs
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect()
}

fn draw<R: Rng + ?Sized>(rng: &mut R, cdf: &[f64]) -> usize {
    let total = *cdf.last().expect("non-empty distribution");
    let u = rng.random::<f64>() * total;
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

/// Generates documents: mixture ~ Dirichlet(α·1_K), then for each token a
/// topic from the mixture and a word from that topic. Document `d` draws
/// from its own stream `(seed, d + 1)`.
pub fn generate_corpus(config: &SynthConfig) -> Result<SyntheticCorpus> {
    let topics = sample_distinct_topics(config)?;
    let cdfs: Vec<Vec<f64>> = topics.iter().map(|t| cdf(t)).collect();
    let docs: Vec<(Vec<f64>, Vec<(u32, u32)>)> = (0..config.n_docs)
        .into_par_iter()
        .map(|d| {
            let mut rng = rng::stream(config.seed, d as u64 + 1);
            let mix = rng::dirichlet(&mut rng, config.alpha, config.n_topics);
            let mix_cdf = cdf(&mix);
            let tokens = (0..config.doc_len)
                .map(|_| {
                    let z = draw(&mut rng, &mix_cdf);
                    let w = draw(&mut rng, &cdfs[z]);
                    (w as u32, z as u32)
                })
                .collect();
            (mix, tokens)
        })
        .collect();

    let mut mixes = Vec::with_capacity(docs.len());
    let mut rows = Vec::with_capacity(docs.len());
    let mut assignments = Vec::with_capacity(docs.len());
    for (mix, tokens) in docs {
        rows.push(tokens.iter().map(|&(w, _)| (w, 1)).collect());
        mixes.push(mix);
        assignments.push(tokens);
    }
    let ids = (0..config.n_docs).map(|d| d.to_string()).collect();
    let corpus = Corpus::from_rows(synthetic_vocabulary(config.vocab_size), rows, ids)?;
    Ok(SyntheticCorpus {
        corpus,
        truth: SyntheticTruth {
            topics: TopicSet::from_rows(topics)?,
            mixes: DocTopicMix::new(mixes),
        },
        assignments,
    })
}
