//! Sentence-level detection and correction scores.
//!
//! A sentence is *flagged* when the prediction differs from the source.
//! Detection is correct when the predicted error positions equal the gold
//! error positions; correction is correct when the prediction equals the
//! gold target. Precision is over flagged sentences, recall over sentences
//! that contain gold errors.

use std::collections::HashSet;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{read_to_string, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoredSentence {
    pub id: String,
    pub source: Vec<char>,
    pub gold: Vec<char>,
    pub predicted: Vec<char>,
}

impl ScoredSentence {
    pub fn new(id: impl Into<String>, source: &str, gold: &str, predicted: &str) -> Result<Self> {
        let s = Self {
            id: id.into(),
            source: source.chars().collect(),
            gold: gold.chars().collect(),
            predicted: predicted.chars().collect(),
        };
        if s.gold.len() != s.source.len() || s.predicted.len() != s.source.len() {
            return Err(Error::record(
                &s.id,
                format!(
                    "length mismatch: source {}, gold {}, predicted {}",
                    s.source.len(),
                    s.gold.len(),
                    s.predicted.len()
                ),
            ));
        }
        Ok(s)
    }

    fn positions(&self, other: &[char]) -> Vec<usize> {
        (0..self.source.len()).filter(|&i| other[i] != self.source[i]).collect()
    }

    fn outcome(&self) -> Outcome {
        let gold_errors = self.gold != self.source;
        let flagged = self.predicted != self.source;
        let detected = flagged && self.positions(&self.predicted) == self.positions(&self.gold);
        Outcome {
            gold_errors,
            flagged,
            detected,
            corrected: flagged && self.predicted == self.gold,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Outcome {
    gold_errors: bool,
    flagged: bool,
    detected: bool,
    corrected: bool,
}

/// Validated corpus: equal lengths per triple, unique ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoredCorpus {
    sentences: Vec<ScoredSentence>,
}

impl ScoredCorpus {
    pub fn new(sentences: Vec<ScoredSentence>) -> Result<Self> {
        let mut ids = HashSet::new();
        for s in &sentences {
            if !ids.insert(s.id.as_str()) {
                return Err(Error::record(&s.id, "duplicate id"));
            }
        }
        Ok(Self { sentences })
    }

    pub fn sentences(&self) -> &[ScoredSentence] {
        &self.sentences
    }

    pub fn parse(text: &str, context: &str) -> Result<Self> {
        let mut sentences = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(Error::parse(
                    context,
                    idx + 1,
                    format!("expected 4 tab-separated fields, found {}", f.len()),
                ));
            }
            sentences.push(
                ScoredSentence::new(f[0], f[1], f[2], f[3])
                    .map_err(|e| Error::parse(context, idx + 1, e.to_string()))?,
            );
        }
        Self::new(sentences)
    }
}

pub fn load_scored_corpus(path: &Path) -> Result<ScoredCorpus> {
    let text = read_to_string(path)?;
    ScoredCorpus::parse(&text, &path.display().to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn from_counts(tp: usize, flagged: usize, gold: usize) -> Self {
        let precision = if flagged == 0 { 0.0 } else { tp as f64 / flagged as f64 };
        let recall = tp as f64 / gold as f64;
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub sentences: usize,
    pub gold_error_sentences: usize,
    pub flagged_sentences: usize,
    pub detection_tp: usize,
    pub correction_tp: usize,
    pub detection: Prf,
    pub correction: Prf,
}

impl MetricsReport {
    pub fn render_table(&self) -> String {
        let mut out = format!("{:<12} {:>10} {:>10} {:>10}\n", "level", "precision", "recall", "F1");
        for (name, m) in [("detection", self.detection), ("correction", self.correction)] {
            out.push_str(&format!(
                "{:<12} {:>10.2} {:>10.2} {:>10.2}\n",
                name,
                100.0 * m.precision,
                100.0 * m.recall,
                100.0 * m.f1
            ));
        }
        out.push_str(&format!(
            "sentences {}  with errors {}  flagged {}\n",
            self.sentences, self.gold_error_sentences, self.flagged_sentences
        ));
        out
    }
}

pub fn score(corpus: &ScoredCorpus) -> Result<MetricsReport> {
    if corpus.sentences.is_empty() {
        return Err(Error::EmptyDataset("corpus has no sentences".into()));
    }
    let outcomes: Vec<Outcome> = corpus.sentences.par_iter().map(ScoredSentence::outcome).collect();
    let count = |f: fn(&Outcome) -> bool| outcomes.iter().filter(|o| f(o)).count();
    let gold = count(|o| o.gold_errors);
    if gold == 0 {
        return Err(Error::EmptyDataset(
            "no sentence contains gold errors; recall is undefined".into(),
        ));
    }
    let flagged = count(|o| o.flagged);
    let detection_tp = count(|o| o.detected);
    let correction_tp = count(|o| o.corrected);
    Ok(MetricsReport {
        sentences: outcomes.len(),
        gold_error_sentences: gold,
        flagged_sentences: flagged,
        detection_tp,
        correction_tp,
        detection: Prf::from_counts(detection_tp, flagged, gold),
        correction: Prf::from_counts(correction_tp, flagged, gold),
    })
}
