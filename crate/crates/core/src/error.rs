use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty corpus: every document is empty after filtering")]
    EmptyCorpus,
    #[error("invalid count on line {line}: {msg}")]
    InvalidCount { line: usize, msg: String },
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unmodelable word: term {term} has zero probability in document {doc}")]
    UnmodelableWord { doc: usize, term: u32 },
    #[error("topic explosion: K exceeded the cap of {cap} topics; try a larger epsilon")]
    TopicExplosion { cap: usize },
    #[error("diversity undefined for K = {0} (needs at least two topics)")]
    DiversityUndefined(usize),
    #[error("query not in corpus: no document contains any of {0:?}")]
    QueryNotInCorpus(Vec<String>),
    #[error("distinctness threshold unsatisfiable: {rejections} rejections while sampling {n_topics} topics at min distance {min_dist}")]
    DistinctnessUnsatisfiable {
        rejections: usize,
        n_topics: usize,
        min_dist: f64,
    },
    #[error("vocabulary mismatch: {0}")]
    VocabularyMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Failures of the algorithms themselves, as opposed to bad input.
    pub fn is_algorithmic(&self) -> bool {
        matches!(
            self,
            Error::TopicExplosion { .. } | Error::DistinctnessUnsatisfiable { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
