//! Per-iteration run records and their CSV form.

use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Which stage of a run produced a trace row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    /// Fixed-K EM iteration.
    Em,
    /// nPLSA document sweep followed by an M-step.
    Sweep,
    /// One farthest-first spawn followed by an M-step.
    Grow,
    /// Topic set restored to the detector's best snapshot.
    Rollback,
    /// EM at the selected K after growth stopped.
    Refine,
}

/// One CSV row. Fields that do not apply to an algorithm stay empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub loglik: Option<f64>,
    pub objective: Option<f64>,
    pub diversity: Option<f64>,
    /// Configured threshold for nPLSA; the largest Δ (the implicit threshold)
    /// for farthest-first growth.
    pub epsilon: Option<f64>,
    pub query_distance: Option<f64>,
    pub closest_topic: Option<usize>,
    pub closest_terms: Option<String>,
    pub mean_delta: Option<f64>,
    pub spawned: Option<usize>,
    pub phase: Phase,
    pub wall_ms: f64,
}

impl TraceRow {
    pub fn new(iter: usize, k: usize, phase: Phase) -> Self {
        Self {
            iter,
            k,
            loglik: None,
            objective: None,
            diversity: None,
            epsilon: None,
            query_distance: None,
            closest_topic: None,
            closest_terms: None,
            mean_delta: None,
            spawned: None,
            phase,
            wall_ms: 0.0,
        }
    }
}

pub const TRACE_HEADER: &str = "iter,K,loglik,objective,diversity,epsilon,query_distance,closest_topic,closest_terms,mean_delta,spawned,phase,wall_ms";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
}

impl RunTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn next_iter(&self) -> usize {
        self.rows.last().map_or(1, |r| r.iter + 1)
    }

    pub fn push(&mut self, row: TraceRow) {
        self.rows.push(row);
    }

    pub fn extend(&mut self, other: RunTrace) {
        self.rows.extend(other.rows);
    }

    pub fn phase(&self, phase: Phase) -> impl Iterator<Item = &TraceRow> + '_ {
        self.rows.iter().filter(move |r| r.phase == phase)
    }

    pub fn total_wall_ms(&self) -> f64 {
        self.rows.iter().map(|r| r.wall_ms).sum()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        if self.rows.is_empty() {
            w.write_record(TRACE_HEADER.split(','))?;
        }
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let rows = r.deserialize().collect::<std::result::Result<Vec<TraceRow>, _>>()?;
        Ok(Self { rows })
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Milliseconds elapsed since `start`.
pub(crate) fn ms_since(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_header_and_empty_fields() {
        let mut t = RunTrace::new();
        let mut row = TraceRow::new(1, 3, Phase::Em);
        row.loglik = Some(-12.5);
        t.push(row);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), TRACE_HEADER);
        assert_eq!(lines.next().unwrap(), "1,3,-12.5,,,,,,,,,em,0.0");
        let back = RunTrace::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn empty_trace_still_has_header() {
        let mut buf = Vec::new();
        RunTrace::new().write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim_end(), TRACE_HEADER);
    }
}
