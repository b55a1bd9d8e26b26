//! JSON files: trained models and synthetic ground truth.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::synthgen::{SynthConfig, SyntheticTruth};
use crate::topics::{DocTopicMix, TopicSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    #[serde(rename = "K")]
    pub k: usize,
    pub seed: u64,
    pub iters: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algo: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

/// `{vocab, topics, mixes?, meta: {K, seed, iters}}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub vocab: Vec<String>,
    pub topics: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixes: Option<Vec<Vec<f64>>>,
    pub meta: ModelMeta,
}

impl ModelFile {
    pub fn new(vocab: &Vocabulary, topics: &TopicSet, mixes: Option<&DocTopicMix>, meta: ModelMeta) -> Self {
        Self {
            vocab: vocab.terms().to_vec(),
            topics: topics.to_rows(),
            mixes: mixes.map(|m| m.as_slice().to_vec()),
            meta,
        }
    }

    pub fn vocabulary(&self) -> Vocabulary {
        Vocabulary::from_terms(self.vocab.iter().cloned())
    }

    pub fn topic_set(&self) -> Result<TopicSet> {
        let set = TopicSet::from_rows(self.topics.clone())?;
        if set.n_terms() != self.vocab.len() {
            return Err(Error::VocabularyMismatch(format!(
                "model has {} terms but topics of width {}",
                self.vocab.len(),
                set.n_terms()
            )));
        }
        Ok(set)
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        write_json(path, self)
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        read_json(path)
    }
}

/// `{vocab, topics, mixes, config}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub vocab: Vec<String>,
    pub topics: Vec<Vec<f64>>,
    pub mixes: Vec<Vec<f64>>,
    pub config: SynthConfig,
}

impl TruthFile {
    pub fn new(vocab: &Vocabulary, truth: &SyntheticTruth, config: &SynthConfig) -> Self {
        Self {
            vocab: vocab.terms().to_vec(),
            topics: truth.topics.to_rows(),
            mixes: truth.mixes.as_slice().to_vec(),
            config: *config,
        }
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        write_json(path, self)
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        read_json(path)
    }
}

/// Re-indexes the columns of `topics` (over `from`) onto `to`, matching
/// terms by string. Fails if a term with probability mass is unknown to `to`.
pub fn align_topics(topics: &TopicSet, from: &Vocabulary, to: &Vocabulary) -> Result<TopicSet> {
    if from == to {
        return Ok(topics.clone());
    }
    let mut out = TopicSet::empty(to.len());
    for row in topics.rows() {
        let mut aligned = vec![0.0; to.len()];
        for (i, &p) in row.iter().enumerate() {
            match to.id(&from.terms()[i]) {
                Some(j) => aligned[j as usize] = p,
                None if p > 1e-6 => {
                    return Err(Error::VocabularyMismatch(format!(
                        "term `{}` is missing from the target vocabulary",
                        from.terms()[i]
                    )))
                }
                None => {}
            }
        }
        let s: f64 = aligned.iter().sum();
        aligned.iter_mut().for_each(|p| *p /= s);
        out.push(aligned)?;
    }
    Ok(out)
}

pub fn write_json<P: AsRef<Path>, T: Serialize>(path: P, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

pub fn read_json<P: AsRef<Path>, T: for<'de> Deserialize<'de>>(path: P) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}
