//! Topic models whose number of topics is chosen during training.
//!
//! * [`plsa`]: fixed-K PLSA trained by EM, plus fold-in of unseen documents.
//! * [`nplsa`]: PLSA that promotes poorly fitted documents to new topics
//!   whenever their log-likelihood ratio exceeds a threshold ε.
//! * [`autostop`]: threshold-free growth, one farthest document at a time,
//!   stopped at peak topic diversity or at minimum distance to a query.
//! * [`synthgen`]: synthetic corpora with known topics.
//! * [`metrics`]: topic quality/coverage error, PMI coherence, perplexity.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autostop;
pub mod corpus;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nplsa;
pub mod plsa;
pub mod rng;
pub mod synthgen;
pub mod topics;
pub mod trace;

pub use autostop::{
    diversity, estimate_query_model, query_distance, train_parameter_free, train_weakly_supervised, AutoConfig,
    AutoFit, DiversityScore, QueryModel, StopDetector, StopMode,
};
pub use corpus::{
    background_model, doc_language_model, ingest_sparse, ingest_text, Corpus, Doc, DocCounts, LanguageModel,
    Vocabulary,
};
pub use error::{Error, Result};
pub use metrics::{
    perplexity, pmi_coherence, topic_coverage_error, topic_quality_error, CooccurrenceStats, MetricsReport, PmiConfig,
};
pub use nplsa::{delta, penalized_objective, train_nplsa, NplsaConfig, NplsaFit, NplsaState, PenalizedObjective};
pub use plsa::{e_step_doc, fold_in, log_likelihood, m_step, train_plsa, EmConfig, FoldIn, PlsaFit, Posterior};
pub use synthgen::{generate_corpus, sample_distinct_topics, SynthConfig, SyntheticCorpus, SyntheticTruth};
pub use topics::{l2, DocTopicMix, TopicSet};
pub use trace::{Phase, RunTrace, TraceRow};
