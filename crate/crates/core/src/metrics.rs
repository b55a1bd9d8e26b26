//! Evaluation: distance to ground truth, PMI coherence, held-out perplexity.

use std::collections::HashMap;
use std::io::{Read, Write};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, DocCounts};
use crate::error::{Error, Result};
use crate::plsa::{fold_in, EmConfig};
use crate::rng;
use crate::topics::{l2, TopicSet};

pub use crate::autostop::{diversity, DiversityScore};

fn check_vocab(a: &TopicSet, b: &TopicSet) -> Result<()> {
    if a.n_terms() != b.n_terms() {
        return Err(Error::VocabularyMismatch(format!(
            "{} vs {} terms",
            a.n_terms(),
            b.n_terms()
        )));
    }
    if a.n_topics() == 0 || b.n_topics() == 0 {
        return Err(Error::Shape("topic sets must be non-empty".into()));
    }
    Ok(())
}

/// Mean over `from` of the distance to the nearest topic in `to`.
fn mean_nearest(from: &TopicSet, to: &TopicSet) -> f64 {
    let total: f64 = from
        .rows()
        .map(|a| to.rows().map(|b| l2(a, b)).fold(f64::INFINITY, f64::min))
        .sum();
    total / from.n_topics() as f64
}

/// Average distance from each learned topic to its nearest true topic.
pub fn topic_quality_error(learned: &TopicSet, truth: &TopicSet) -> Result<f64> {
    check_vocab(learned, truth)?;
    Ok(mean_nearest(learned, truth))
}

/// Average distance from each true topic to its nearest learned topic.
pub fn topic_coverage_error(learned: &TopicSet, truth: &TopicSet) -> Result<f64> {
    check_vocab(learned, truth)?;
    Ok(mean_nearest(truth, learned))
}

/// Document and co-document frequencies from a reference corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CooccurrenceStats {
    pub n_docs: u64,
    pub df: Vec<u64>,
    /// Keyed by (i, j) with i < j.
    pairs: HashMap<(u32, u32), u64>,
}

pub const STATS_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct StatsFile {
    format: String,
    version: u32,
    n_docs: u64,
    df: Vec<u64>,
    pairs: Vec<(u32, u32, u64)>,
}

impl CooccurrenceStats {
    /// Counts every co-occurring pair in `reference`.
    pub fn from_corpus(reference: &Corpus) -> Self {
        Self::count(reference, None)
    }

    /// Counts only pairs whose terms are both in `terms`; document
    /// frequencies are still computed for the whole vocabulary.
    pub fn for_terms(reference: &Corpus, terms: &[u32]) -> Self {
        let mut keep = vec![false; reference.n_terms()];
        for &t in terms {
            if let Some(k) = keep.get_mut(t as usize) {
                *k = true;
            }
        }
        Self::count(reference, Some(&keep))
    }

    fn count(reference: &Corpus, keep: Option<&[bool]>) -> Self {
        let mut df = vec![0u64; reference.n_terms()];
        let mut pairs = HashMap::new();
        let mut selected = Vec::new();
        for doc in reference.docs() {
            selected.clear();
            for &t in doc.terms {
                df[t as usize] += 1;
                if keep.is_none_or(|k| k[t as usize]) {
                    selected.push(t);
                }
            }
            for (a, &i) in selected.iter().enumerate() {
                for &j in &selected[a + 1..] {
                    *pairs.entry((i.min(j), i.max(j))).or_insert(0) += 1;
                }
            }
        }
        Self {
            n_docs: reference.n_docs() as u64,
            df,
            pairs,
        }
    }

    /// Builds stats directly from counts; used for hand-made instances.
    pub fn from_counts(n_docs: u64, df: Vec<u64>, pairs: &[(u32, u32, u64)]) -> Result<Self> {
        let mut map = HashMap::new();
        for &(i, j, c) in pairs {
            if i == j || i as usize >= df.len() || j as usize >= df.len() {
                return Err(Error::Shape(format!("bad pair ({i}, {j})")));
            }
            if c > df[i as usize].min(df[j as usize]) {
                return Err(Error::Shape(format!("co-df of ({i}, {j}) exceeds a df")));
            }
            map.insert((i.min(j), i.max(j)), c);
        }
        Ok(Self {
            n_docs,
            df,
            pairs: map,
        })
    }

    pub fn co_df(&self, i: u32, j: u32) -> u64 {
        if i == j {
            return self.df.get(i as usize).copied().unwrap_or(0);
        }
        self.pairs.get(&(i.min(j), i.max(j))).copied().unwrap_or(0)
    }

    pub fn doc_freq(&self, i: u32) -> u64 {
        self.df.get(i as usize).copied().unwrap_or(0)
    }

    /// Pointwise mutual information of a pair, with zero document and
    /// co-document frequencies replaced by 0.5.
    pub fn pmi(&self, i: u32, j: u32) -> f64 {
        let n = self.n_docs as f64;
        let smooth = |c: u64| if c == 0 { 0.5 } else { c as f64 };
        let pij = smooth(self.co_df(i, j)) / n;
        let pi = smooth(self.doc_freq(i)) / n;
        let pj = smooth(self.doc_freq(j)) / n;
        (pij / (pi * pj)).ln()
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        let mut pairs: Vec<(u32, u32, u64)> = self.pairs.iter().map(|(&(i, j), &c)| (i, j, c)).collect();
        pairs.sort_unstable();
        let file = StatsFile {
            format: "nplsa-cooccurrence".into(),
            version: STATS_FORMAT_VERSION,
            n_docs: self.n_docs,
            df: self.df.clone(),
            pairs,
        };
        serde_json::to_writer(out, &file)?;
        Ok(())
    }

    pub fn read_json<R: Read>(input: R) -> Result<Self> {
        let file: StatsFile = serde_json::from_reader(input)?;
        if file.format != "nplsa-cooccurrence" || file.version != STATS_FORMAT_VERSION {
            return Err(Error::Parse {
                line: 1,
                msg: format!("unsupported stats file {} v{}", file.format, file.version),
            });
        }
        Self::from_counts(file.n_docs, file.df, &file.pairs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PmiConfig {
    pub top_n: usize,
}

impl Default for PmiConfig {
    fn default() -> Self {
        Self { top_n: 20 }
    }
}

/// Mean over topics of the average PMI of all pairs among the topic's
/// `top_n` most probable words.
pub fn pmi_coherence(topics: &TopicSet, stats: &CooccurrenceStats, cfg: &PmiConfig) -> Result<f64> {
    if cfg.top_n < 2 {
        return Err(Error::InvalidConfig("top_n must be at least 2".into()));
    }
    if topics.n_topics() == 0 {
        return Err(Error::Shape("no topics".into()));
    }
    let mut total = 0.0;
    for k in 0..topics.n_topics() {
        let words = topics.top_words(k, cfg.top_n);
        let n = words.len();
        let mut sum = 0.0;
        for a in 0..n {
            for b in a + 1..n {
                sum += stats.pmi(words[a], words[b]);
            }
        }
        total += 2.0 * sum / (n * (n - 1)) as f64;
    }
    Ok(total / topics.n_topics() as f64)
}

/// Expands a document into tokens and shuffles them with stream `(seed, d + 1)`.
pub(crate) fn shuffled_tokens(corpus: &Corpus, d: usize, seed: u64) -> Vec<u32> {
    let mut tokens: Vec<u32> = corpus
        .doc(d)
        .iter()
        .flat_map(|(w, n)| std::iter::repeat_n(w, n as usize))
        .collect();
    rng::shuffle(&mut rng::stream(seed, d as u64 + 1), &mut tokens);
    tokens
}

/// Number of observed tokens for a document of `n` tokens.
pub(crate) fn split_point(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64).round() as usize).clamp(1, n - 1)
}

/// Held-out perplexity: each document's tokens are shuffled (seeded by
/// `config.seed`), the first `split_fraction` is folded in, and the rest is
/// scored under the fitted mixture.
pub fn perplexity(held_out: &Corpus, topics: &TopicSet, split_fraction: f64, config: &EmConfig) -> Result<f64> {
    if !(split_fraction > 0.0 && split_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "split fraction {split_fraction} outside (0, 1)"
        )));
    }
    if held_out.n_terms() != topics.n_terms() {
        return Err(Error::VocabularyMismatch(format!(
            "held-out corpus has {} terms, topics have {}",
            held_out.n_terms(),
            topics.n_terms()
        )));
    }
    let mut log_prob = 0.0;
    let mut scored = 0usize;
    let mut skipped = 0usize;
    let mut col = vec![0.0; topics.n_topics()];
    for d in 0..held_out.n_docs() {
        let tokens = shuffled_tokens(held_out, d, config.seed);
        if tokens.len() < 2 {
            skipped += 1;
            continue;
        }
        let cut = split_point(tokens.len(), split_fraction);
        let observed = DocCounts::from_pairs(tokens[..cut].iter().map(|&w| (w, 1)));
        let fit = fold_in(observed.as_doc(), topics, config)?;
        for &w in &tokens[cut..] {
            topics.column_into(w, &mut col);
            let p: f64 = col.iter().zip(&fit.mix).map(|(a, b)| a * b).sum();
            log_prob += p.ln();
        }
        scored += tokens.len() - cut;
    }
    if skipped > 0 {
        warn!("perplexity skipped {skipped} documents shorter than 2 tokens");
    }
    if scored == 0 {
        return Err(Error::Shape("no held-out document has at least 2 tokens".into()));
    }
    Ok((-log_prob / scored as f64).exp())
}

/// Metrics written by `eval`; inputs that were not supplied yield `null`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tqe: Option<f64>,
    pub tce: Option<f64>,
    pub pmi: Option<f64>,
    pub perplexity: Option<f64>,
    pub diversity: Option<f64>,
    #[serde(rename = "K")]
    pub k: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ingest_sparse, ingest_text};
    use approx::assert_abs_diff_eq;

    fn ts(rows: &[&[f64]]) -> TopicSet {
        TopicSet::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn tqe_tce_hand_values() {
        let truth = ts(&[&[0.7, 0.3], &[0.1, 0.9]]);
        assert_eq!(topic_quality_error(&truth, &truth).unwrap(), 0.0);
        assert_eq!(topic_coverage_error(&truth, &truth).unwrap(), 0.0);

        let d = topic_quality_error(&ts(&[&[0.5, 0.5]]), &ts(&[&[1.0, 0.0]])).unwrap();
        assert_abs_diff_eq!(d, 0.5f64.sqrt(), epsilon = 1e-15);

        let dup = ts(&[&[0.7, 0.3], &[0.7, 0.3]]);
        let tce = topic_coverage_error(&dup, &truth).unwrap();
        assert_abs_diff_eq!(tce, l2(&[0.1, 0.9], &[0.7, 0.3]) / 2.0, epsilon = 1e-15);

        let superset = ts(&[&[0.2, 0.8], &[0.1, 0.9], &[0.7, 0.3]]);
        assert_eq!(topic_coverage_error(&superset, &truth).unwrap(), 0.0);
    }

    #[test]
    fn vocabulary_mismatch() {
        assert!(matches!(
            topic_quality_error(&ts(&[&[1.0]]), &ts(&[&[0.5, 0.5]])),
            Err(Error::VocabularyMismatch(_))
        ));
    }

    #[test]
    fn pmi_of_independent_words_is_zero() {
        // n = 100, df = 50 and 20, co-df = 10 = 100 * 0.5 * 0.2
        let stats = CooccurrenceStats::from_counts(100, vec![50, 20], &[(0, 1, 10)]).unwrap();
        let t = ts(&[&[0.6, 0.4]]);
        let pmi = pmi_coherence(&t, &stats, &PmiConfig { top_n: 2 }).unwrap();
        assert_abs_diff_eq!(pmi, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn pmi_of_inseparable_words_is_log_two() {
        let stats = CooccurrenceStats::from_counts(10, vec![5, 5], &[(0, 1, 5)]).unwrap();
        assert_abs_diff_eq!(stats.pmi(0, 1), 2f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn pmi_toy_reference_corpus() {
        // docs: {a b}, {a c}, {a b c}
        let reference = ingest_text(&["a b", "a c", "a b c"], 1, None).unwrap();
        let stats = CooccurrenceStats::from_corpus(&reference);
        assert_eq!(stats.doc_freq(0), 3);
        assert_eq!(stats.co_df(1, 2), 1);
        let topic = ts(&[&[0.5, 0.3, 0.2]]);
        let pmi = pmi_coherence(&topic, &stats, &PmiConfig { top_n: 3 }).unwrap();
        // (a,b): (2/3)/(1·2/3) = 1; (a,c): 1; (b,c): (1/3)/((2/3)(2/3)) = 3/4
        let expect = (0.0 + 0.0 + (0.75f64).ln()) / 3.0;
        assert_abs_diff_eq!(pmi, expect, epsilon = 1e-12);
    }

    #[test]
    fn pmi_smooths_zero_cooccurrence() {
        let stats = CooccurrenceStats::from_counts(4, vec![2, 2, 0], &[]).unwrap();
        assert_abs_diff_eq!(stats.pmi(0, 1), ((0.5 / 4.0) / 0.25f64).ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(
            stats.pmi(0, 2),
            ((0.5 / 4.0) / (0.5 * 0.125f64)).ln(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn stats_restricted_to_terms() {
        let reference = ingest_text(&["a b c", "a c", "b c"], 1, None).unwrap();
        let full = CooccurrenceStats::from_corpus(&reference);
        let part = CooccurrenceStats::for_terms(&reference, &[0, 2]);
        assert_eq!(part.co_df(0, 2), full.co_df(0, 2));
        assert_eq!(part.co_df(0, 1), 0);
        assert_eq!(part.df, full.df);
    }

    #[test]
    fn stats_cache_round_trip() {
        let reference = ingest_text(&["a b c", "a c", "b c d"], 1, None).unwrap();
        let stats = CooccurrenceStats::from_corpus(&reference);
        let mut buf = Vec::new();
        stats.write_json(&mut buf).unwrap();
        assert_eq!(CooccurrenceStats::read_json(&buf[..]).unwrap(), stats);
        let bad = String::from_utf8(buf).unwrap().replace("\"version\":1", "\"version\":9");
        assert!(CooccurrenceStats::read_json(bad.as_bytes()).is_err());
    }

    #[test]
    fn perplexity_of_uniform_topic_is_vocab_size() {
        let c = ingest_sparse(vec![(0, "a", 3), (0, "b", 2), (1, "c", 4), (1, "d", 1), (2, "a", 1)]).unwrap();
        let p = perplexity(&c, &TopicSet::uniform(1, 4), 0.8, &EmConfig::default()).unwrap();
        assert_abs_diff_eq!(p, 4.0, epsilon = 1e-9);
    }

    #[test]
    fn perplexity_of_perfect_topics_is_one() {
        let c = ingest_sparse(vec![(0, "a", 10), (1, "b", 10)]).unwrap();
        let mut t = ts(&[&[1.0, 0.0], &[0.0, 1.0]]);
        t.apply_floor(1e-9);
        let p = perplexity(&c, &t, 0.8, &EmConfig::default()).unwrap();
        assert!(p >= 1.0 && p < 1.0 + 1e-6, "{p}");
    }

    #[test]
    fn perplexity_split_validation() {
        let c = ingest_sparse(vec![(0, "a", 1)]).unwrap();
        let t = TopicSet::uniform(1, 1);
        assert!(perplexity(&c, &t, 1.0, &EmConfig::default()).is_err());
        // only a 1-token document: nothing to score
        assert!(perplexity(&c, &t, 0.5, &EmConfig::default()).is_err());
    }

    #[test]
    fn split_point_keeps_both_parts() {
        assert_eq!(split_point(100, 0.8), 80);
        assert_eq!(split_point(2, 0.8), 1);
        assert_eq!(split_point(2, 0.1), 1);
        assert_eq!(split_point(5, 0.99), 4);
    }
}
