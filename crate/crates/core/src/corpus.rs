//! Vocabulary-indexed sparse corpora and the language models derived from them.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense term ↔ id mapping with ids `0..len()`.
#[derive(Debug, Clone, Default)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a vocabulary in the given order. Duplicates keep their first id.
    pub fn from_terms<I, S>(terms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Self::new();
        for t in terms {
            vocab.insert(t.into());
        }
        vocab
    }

    /// Returns the id of `term`, adding it at the end if unseen.
    pub fn insert(&mut self, term: String) -> u32 {
        if let Some(&id) = self.index.get(&term) {
            return id;
        }
        let id = self.terms.len() as u32;
        self.index.insert(term.clone(), id);
        self.terms.push(term);
        id
    }

    pub fn id(&self, term: &str) -> Option<u32> {
        self.index.get(term).copied()
    }

    pub fn term(&self, id: u32) -> Option<&str> {
        self.terms.get(id as usize).map(String::as_str)
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// A borrowed sparse row: parallel slices of term ids and positive counts.
#[derive(Debug, Clone, Copy)]
pub struct Doc<'a> {
    pub terms: &'a [u32],
    pub counts: &'a [u32],
}

impl<'a> Doc<'a> {
    pub fn n_distinct(&self) -> usize {
        self.terms.len()
    }

    pub fn n_tokens(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u32)> + 'a {
        self.terms.iter().copied().zip(self.counts.iter().copied())
    }

    /// log p(w_d | θ_d) under the document's own unsmoothed MLE.
    pub fn self_log_likelihood(&self) -> f64 {
        let n = self.n_tokens() as f64;
        self.counts
            .iter()
            .map(|&c| {
                let c = c as f64;
                c * (c / n).ln()
            })
            .sum()
    }
}

/// Owned counterpart of [`Doc`], used for documents that live outside a corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocCounts {
    pub terms: Vec<u32>,
    pub counts: Vec<u32>,
}

impl DocCounts {
    /// Sums duplicate term ids and sorts by id. Zero counts are dropped.
    pub fn from_pairs<I: IntoIterator<Item = (u32, u32)>>(pairs: I) -> Self {
        let mut acc: BTreeMap<u32, u32> = BTreeMap::new();
        for (t, c) in pairs {
            if c > 0 {
                *acc.entry(t).or_insert(0) += c;
            }
        }
        let (terms, counts) = acc.into_iter().unzip();
        Self { terms, counts }
    }

    pub fn as_doc(&self) -> Doc<'_> {
        Doc {
            terms: &self.terms,
            counts: &self.counts,
        }
    }
}

/// Immutable document–term count matrix in compressed row form.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    vocab: Vocabulary,
    row_ptr: Vec<usize>,
    terms: Vec<u32>,
    counts: Vec<u32>,
    doc_ids: Vec<String>,
    dropped: Vec<String>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.terms == other.terms
    }
}

impl Corpus {
    /// Builds a corpus from per-document (term id, count) rows.
    ///
    /// Rows may contain duplicate ids (summed) and zero counts (dropped).
    /// Rows that end up empty are not kept; their ids land in [`Corpus::dropped`].
    pub fn from_rows(
        vocab: Vocabulary,
        rows: Vec<Vec<(u32, u32)>>,
        doc_ids: Vec<String>,
    ) -> Result<Self> {
        if rows.len() != doc_ids.len() {
            return Err(Error::Shape(format!(
                "{} rows but {} document ids",
                rows.len(),
                doc_ids.len()
            )));
        }
        let v = vocab.len() as u32;
        let mut corpus = Corpus {
            vocab,
            row_ptr: vec![0],
            terms: Vec::new(),
            counts: Vec::new(),
            doc_ids: Vec::new(),
            dropped: Vec::new(),
        };
        for (row, id) in rows.into_iter().zip(doc_ids) {
            if let Some(&(t, _)) = row.iter().find(|(t, _)| *t >= v) {
                return Err(Error::VocabularyMismatch(format!(
                    "term id {t} out of range for vocabulary of size {v}"
                )));
            }
            let doc = DocCounts::from_pairs(row);
            if doc.terms.is_empty() {
                corpus.dropped.push(id);
                continue;
            }
            corpus.terms.extend_from_slice(&doc.terms);
            corpus.counts.extend_from_slice(&doc.counts);
            corpus.row_ptr.push(corpus.terms.len());
            corpus.doc_ids.push(id);
        }
        if corpus.doc_ids.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        Ok(corpus)
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn n_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn n_terms(&self) -> usize {
        self.vocab.len()
    }

    pub fn nnz(&self) -> usize {
        self.terms.len()
    }

    pub fn doc(&self, d: usize) -> Doc<'_> {
        let (lo, hi) = (self.row_ptr[d], self.row_ptr[d + 1]);
        Doc {
            terms: &self.terms[lo..hi],
            counts: &self.counts[lo..hi],
        }
    }

    pub fn docs(&self) -> impl Iterator<Item = Doc<'_>> + '_ {
        (0..self.n_docs()).map(move |d| self.doc(d))
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    /// External ids of documents removed because they were empty.
    pub fn dropped(&self) -> &[String] {
        &self.dropped
    }

    pub fn total_tokens(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    /// Number of documents containing each term.
    pub fn document_frequencies(&self) -> Vec<u32> {
        let mut df = vec![0u32; self.n_terms()];
        for &t in &self.terms {
            df[t as usize] += 1;
        }
        df
    }

    /// Re-expresses this corpus over `target`, matching terms by string.
    /// Terms unknown to `target` are discarded; returns the number of
    /// discarded tokens alongside the new corpus.
    pub fn align_to(&self, target: &Vocabulary) -> Result<(Corpus, u64)> {
        let map: Vec<Option<u32>> = self.vocab.terms().iter().map(|t| target.id(t)).collect();
        let mut lost = 0u64;
        let rows = self
            .docs()
            .map(|doc| {
                doc.iter()
                    .filter_map(|(t, c)| match map[t as usize] {
                        Some(id) => Some((id, c)),
                        None => {
                            lost += c as u64;
                            None
                        }
                    })
                    .collect()
            })
            .collect();
        let corpus = Corpus::from_rows(target.clone(), rows, self.doc_ids.clone())?;
        Ok((corpus, lost))
    }

    /// Writes the sparse triple format: a `docs=D terms=V nnz=N` header, then
    /// one `doc term count` line per non-zero entry.
    pub fn write_sparse<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "docs={} terms={} nnz={}",
            self.n_docs(),
            self.n_terms(),
            self.nnz()
        )?;
        for (d, id) in self.doc_ids.iter().enumerate() {
            for (t, c) in self.doc(d).iter() {
                writeln!(out, "{} {} {}", id, self.vocab.terms[t as usize], c)?;
            }
        }
        Ok(())
    }

    pub fn save_sparse<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_sparse(&mut out)?;
        out.flush()?;
        Ok(())
    }
}

/// A probability vector over the vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageModel(Vec<f64>);

impl LanguageModel {
    /// Validates non-negativity and unit mass (within 1e-9).
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidConfig(
                "language model has a negative or non-finite entry".into(),
            ));
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "language model sums to {s}, not 1"
            )));
        }
        Ok(Self(probs))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Lowercases and splits on runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_lowercase)
}

/// Builds a corpus from raw document strings, one per entry.
///
/// Terms with document frequency below `min_df` or present in `stopwords`
/// are removed. The vocabulary is sorted lexicographically. Document ids are
/// the 0-based input positions.
pub fn ingest_text<S: AsRef<str>>(
    lines: &[S],
    min_df: usize,
    stopwords: Option<&HashSet<String>>,
) -> Result<Corpus> {
    if lines.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if min_df < 1 {
        return Err(Error::InvalidConfig("min_df must be at least 1".into()));
    }
    let tokenized: Vec<BTreeMap<String, u32>> = lines
        .iter()
        .map(|line| {
            let mut counts = BTreeMap::new();
            for tok in tokenize(line.as_ref()) {
                if stopwords.is_some_and(|s| s.contains(&tok)) {
                    continue;
                }
                *counts.entry(tok).or_insert(0u32) += 1;
            }
            counts
        })
        .collect();

    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in &tokenized {
        for term in doc.keys() {
            *df.entry(term.as_str()).or_insert(0) += 1;
        }
    }
    let kept: BTreeSet<&str> = df
        .into_iter()
        .filter(|&(_, n)| n >= min_df)
        .map(|(t, _)| t)
        .collect();
    let vocab = Vocabulary::from_terms(kept.iter().copied());

    let rows = tokenized
        .iter()
        .map(|doc| {
            doc.iter()
                .filter_map(|(t, &c)| vocab.id(t).map(|id| (id, c)))
                .collect()
        })
        .collect();
    let ids = (0..lines.len()).map(|i| i.to_string()).collect();
    let corpus = Corpus::from_rows(vocab, rows, ids)?;
    if !corpus.dropped().is_empty() {
        warn!(
            "dropped {} documents that were empty after filtering",
            corpus.dropped().len()
        );
    }
    Ok(corpus)
}

/// Builds a corpus from `(doc id, term, count)` triples.
///
/// Duplicate (doc, term) pairs are summed. Documents and terms are numbered
/// in first-appearance order. Errors carry the 1-based position of the
/// offending triple.
pub fn ingest_sparse<I, D, T>(triples: I) -> Result<Corpus>
where
    I: IntoIterator<Item = (D, T, i64)>,
    D: ToString,
    T: Into<String>,
{
    let mut builder = SparseBuilder::default();
    for (i, (doc, term, count)) in triples.into_iter().enumerate() {
        builder.push(i + 1, doc.to_string(), term.into(), count)?;
    }
    builder.finish()
}

#[derive(Default)]
struct SparseBuilder {
    vocab: Vocabulary,
    doc_index: HashMap<String, usize>,
    doc_ids: Vec<String>,
    rows: Vec<Vec<(u32, u32)>>,
}

impl SparseBuilder {
    fn push(&mut self, line: usize, doc: String, term: String, count: i64) -> Result<()> {
        if count <= 0 {
            return Err(Error::InvalidCount {
                line,
                msg: format!("count must be positive, got {count}"),
            });
        }
        let count = u32::try_from(count).map_err(|_| Error::InvalidCount {
            line,
            msg: format!("count {count} too large"),
        })?;
        let d = match self.doc_index.get(&doc) {
            Some(&d) => d,
            None => {
                let d = self.doc_ids.len();
                self.doc_index.insert(doc.clone(), d);
                self.doc_ids.push(doc);
                self.rows.push(Vec::new());
                d
            }
        };
        let t = self.vocab.insert(term);
        self.rows[d].push((t, count));
        Ok(())
    }

    fn finish(self) -> Result<Corpus> {
        Corpus::from_rows(self.vocab, self.rows, self.doc_ids)
    }
}

/// Per-document unsmoothed maximum-likelihood language model.
pub fn doc_language_model(corpus: &Corpus, d: usize) -> LanguageModel {
    let doc = corpus.doc(d);
    let n = doc.n_tokens() as f64;
    let mut probs = vec![0.0; corpus.n_terms()];
    for (t, c) in doc.iter() {
        probs[t as usize] = c as f64 / n;
    }
    LanguageModel(probs)
}

/// Pooled collection model θ_C.
pub fn background_model(corpus: &Corpus) -> LanguageModel {
    let mut probs = vec![0.0; corpus.n_terms()];
    for (&t, &c) in corpus.terms.iter().zip(&corpus.counts) {
        probs[t as usize] += c as f64;
    }
    let n = corpus.total_tokens() as f64;
    for p in probs.iter_mut() {
        *p /= n;
    }
    LanguageModel(probs)
}

pub fn read_text_corpus<P: AsRef<Path>>(
    path: P,
    min_df: usize,
    stopwords: Option<&HashSet<String>>,
) -> Result<Corpus> {
    let reader = BufReader::new(File::open(path)?);
    let lines = reader.lines().collect::<std::io::Result<Vec<_>>>()?;
    ingest_text(&lines, min_df, stopwords)
}

/// Parses the sparse triple format. The header's `docs` and `nnz` fields must
/// agree with the body; `terms` may exceed the number of distinct terms seen.
pub fn read_sparse<R: BufRead>(reader: R) -> Result<Corpus> {
    let mut lines = reader.lines();
    let header = loop {
        match lines.next() {
            Some(line) => {
                let line = line?;
                if !line.trim().is_empty() {
                    break line;
                }
            }
            None => return Err(Error::EmptyCorpus),
        }
    };
    let (docs, terms, nnz) = parse_header(&header)?;
    let mut builder = SparseBuilder::default();
    let mut entries = 0usize;
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i + 2;
        let mut fields = line.split_whitespace();
        let (doc, term, count) = match (fields.next(), fields.next(), fields.next(), fields.next()) {
            (None, ..) => continue,
            (Some(d), Some(t), Some(c), None) => (d, t, c),
            _ => {
                return Err(Error::Parse {
                    line: lineno,
                    msg: "expected `doc term count`".into(),
                })
            }
        };
        let count: i64 = count.parse().map_err(|_| Error::InvalidCount {
            line: lineno,
            msg: format!("`{count}` is not an integer"),
        })?;
        builder.push(lineno, doc.to_string(), term.to_string(), count)?;
        entries += 1;
    }
    if builder.doc_ids.len() != docs || entries != nnz || builder.vocab.len() > terms {
        return Err(Error::Parse {
            line: 1,
            msg: format!(
                "header says docs={docs} terms={terms} nnz={nnz}, body has {} docs, {} terms, {} entries",
                builder.doc_ids.len(),
                builder.vocab.len(),
                entries
            ),
        });
    }
    builder.finish()
}

fn parse_header(line: &str) -> Result<(usize, usize, usize)> {
    let bad = || Error::Parse {
        line: 1,
        msg: format!("expected header `docs=<D> terms=<V> nnz=<N>`, got `{line}`"),
    };
    let mut vals = [None; 3];
    for field in line.split_whitespace() {
        let (key, value) = field.split_once('=').ok_or_else(bad)?;
        let slot = match key {
            "docs" => 0,
            "terms" => 1,
            "nnz" => 2,
            _ => return Err(bad()),
        };
        vals[slot] = Some(value.parse::<usize>().map_err(|_| bad())?);
    }
    match vals {
        [Some(d), Some(t), Some(n)] => Ok((d, t, n)),
        _ => Err(bad()),
    }
}

pub fn read_sparse_corpus<P: AsRef<Path>>(path: P) -> Result<Corpus> {
    read_sparse(BufReader::new(File::open(path)?))
}

/// True when the first non-blank line of the file is a sparse header.
pub fn looks_sparse<P: AsRef<Path>>(path: P) -> Result<bool> {
    let reader = BufReader::new(File::open(path)?);
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            return Ok(line.trim_start().starts_with("docs="));
        }
    }
    Ok(false)
}

pub fn read_stopwords<P: AsRef<Path>>(path: P) -> Result<HashSet<String>> {
    let reader = BufReader::new(File::open(path)?);
    let mut set = HashSet::new();
    for line in reader.lines() {
        let line = line?;
        let w = line.trim();
        if !w.is_empty() {
            set.insert(w.to_lowercase());
        }
    }
    Ok(set)
}
