//! Isolation correction setting.
//!
//! A correction pair is the `(wrong, right)` character type at a position
//! where source and target differ. Isolation drops every training sentence
//! containing a pair that also occurs in the test set, and keeps only the
//! first test sentence for each pair type.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{read_to_string, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentencePair {
    pub id: String,
    pub source: String,
    pub target: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CorrectionPair {
    pub wrong: char,
    pub right: char,
}

impl fmt::Display for CorrectionPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}→{}", self.wrong, self.right)
    }
}

impl SentencePair {
    pub fn new(id: impl Into<String>, source: impl Into<String>, target: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            source: source.into(),
            target: target.into(),
        }
    }

    /// Pairs in position order, duplicates kept.
    pub fn extract_pairs(&self) -> Result<Vec<CorrectionPair>> {
        let src: Vec<char> = self.source.chars().collect();
        let tgt: Vec<char> = self.target.chars().collect();
        if src.len() != tgt.len() {
            return Err(Error::record(
                &self.id,
                format!("source has {} characters, target has {}", src.len(), tgt.len()),
            ));
        }
        Ok(src
            .into_iter()
            .zip(tgt)
            .filter(|(s, t)| s != t)
            .map(|(wrong, right)| CorrectionPair { wrong, right })
            .collect())
    }
}

pub fn extract_pairs(sp: &SentencePair) -> Result<Vec<CorrectionPair>> {
    sp.extract_pairs()
}

pub fn parse_corpus(text: &str, context: &str) -> Result<Vec<SentencePair>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                context,
                idx + 1,
                format!("expected 3 tab-separated fields, found {}", fields.len()),
            ));
        }
        let sp = SentencePair::new(fields[0], fields[1], fields[2]);
        sp.extract_pairs()
            .map_err(|e| Error::parse(context, idx + 1, e.to_string()))?;
        out.push(sp);
    }
    Ok(out)
}

pub fn load_corpus(path: &Path) -> Result<Vec<SentencePair>> {
    let text = read_to_string(path)?;
    parse_corpus(&text, &path.display().to_string())
}

pub fn corpus_to_text(corpus: &[SentencePair]) -> String {
    corpus
        .iter()
        .map(|s| format!("{}\t{}\t{}\n", s.id, s.source, s.target))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsolationStats {
    pub train_sentence_count: usize,
    pub test_sentence_count: usize,
    pub train_pair_count: usize,
    pub test_pair_count: usize,
    pub overlap_pair_count: usize,
    pub union_pair_count: usize,
    pub isolated_train_pair_count: usize,
    pub isolated_test_pair_count: usize,
    pub isolated_train_sentence_count: usize,
    pub isolated_test_sentence_count: usize,
    /// Fraction of training sentences removed.
    pub removed_fraction: f64,
}

impl IsolationStats {
    pub fn render_table(&self) -> String {
        let rows = [
            ("Training Set", self.train_pair_count.to_string(), self.train_sentence_count.to_string()),
            ("Test Set", self.test_pair_count.to_string(), self.test_sentence_count.to_string()),
            ("Training ∩ Test", self.overlap_pair_count.to_string(), "-".to_string()),
            ("Training ∪ Test", self.union_pair_count.to_string(), "-".to_string()),
            (
                "Isolation Training Set",
                self.isolated_train_pair_count.to_string(),
                self.isolated_train_sentence_count.to_string(),
            ),
            (
                "Isolation Test Set",
                self.isolated_test_pair_count.to_string(),
                self.isolated_test_sentence_count.to_string(),
            ),
        ];
        let mut out = format!("{:<24} {:>12} {:>10}\n", "", "#pairs", "#sent");
        for (name, pairs, sents) in rows {
            out.push_str(&format!("{name:<24} {pairs:>12} {sents:>10}\n"));
        }
        out.push_str(&format!(
            "training sentences removed: {:.2}%\n",
            100.0 * self.removed_fraction
        ));
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Isolated {
    pub train: Vec<SentencePair>,
    pub test: Vec<SentencePair>,
    pub stats: IsolationStats,
}

fn pairs_of(corpus: &[SentencePair]) -> Result<Vec<Vec<CorrectionPair>>> {
    corpus.par_iter().map(SentencePair::extract_pairs).collect()
}

fn distinct(pairs: &[Vec<CorrectionPair>]) -> BTreeSet<CorrectionPair> {
    pairs.iter().flatten().copied().collect()
}

pub fn isolate(train: &[SentencePair], test: &[SentencePair]) -> Result<Isolated> {
    let train_pairs = pairs_of(train)?;
    let test_pairs = pairs_of(test)?;
    let train_set = distinct(&train_pairs);
    let test_set = distinct(&test_pairs);
    let overlap: HashSet<CorrectionPair> = train_set.intersection(&test_set).copied().collect();

    let mut iso_train = Vec::new();
    let mut iso_train_pairs = Vec::new();
    for (sp, pairs) in train.iter().zip(&train_pairs) {
        if pairs.iter().all(|p| !overlap.contains(p)) {
            iso_train.push(sp.clone());
            iso_train_pairs.push(pairs.clone());
        }
    }

    // A test sentence survives only if none of its pairs has been seen,
    // including repeats inside the sentence itself.
    let mut seen = HashSet::new();
    let mut iso_test = Vec::new();
    let mut iso_test_pairs = Vec::new();
    for (sp, pairs) in test.iter().zip(&test_pairs) {
        let own: HashSet<CorrectionPair> = pairs.iter().copied().collect();
        if own.len() == pairs.len() && own.iter().all(|p| !seen.contains(p)) {
            seen.extend(own);
            iso_test.push(sp.clone());
            iso_test_pairs.push(pairs.clone());
        }
    }

    let removed = train.len() - iso_train.len();
    let stats = IsolationStats {
        train_sentence_count: train.len(),
        test_sentence_count: test.len(),
        train_pair_count: train_set.len(),
        test_pair_count: test_set.len(),
        overlap_pair_count: overlap.len(),
        union_pair_count: train_set.union(&test_set).count(),
        isolated_train_pair_count: distinct(&iso_train_pairs).len(),
        isolated_test_pair_count: distinct(&iso_test_pairs).len(),
        isolated_train_sentence_count: iso_train.len(),
        isolated_test_sentence_count: iso_test.len(),
        removed_fraction: if train.is_empty() {
            0.0
        } else {
            removed as f64 / train.len() as f64
        },
    };
    Ok(Isolated {
        train: iso_train,
        test: iso_test,
        stats,
    })
}
