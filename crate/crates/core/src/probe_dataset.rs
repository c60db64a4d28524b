//! Balanced glyph and phonetic probe datasets.
//!
//! Pairs are `(left, right)` where `right` is the probed vocabulary
//! character. Train/test assignment partitions the right characters, so no
//! probed character is seen on both sides of the split. Left characters may
//! recur across splits.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;

use rand::seq::{index, IndexedRandom, SliceRandom};
use rayon::prelude::*;
use serde::Serialize;

use crate::char_knowledge::{DecompositionTable, PinyinTable, ToneMode, Vocabulary};
use crate::error::{read_to_string, single_char, Error, Result};
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeKind {
    Glyph,
    Phonetic,
}

impl fmt::Display for ProbeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProbeKind::Glyph => "glyph",
            ProbeKind::Phonetic => "phonetic",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ProbePair {
    pub left: char,
    pub right: char,
    pub positive: bool,
    pub split: Split,
}

impl ProbePair {
    pub fn label(&self) -> f64 {
        if self.positive {
            1.0
        } else {
            0.0
        }
    }

    fn sort_key(&self) -> (char, char, bool) {
        (self.right, self.left, self.positive)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeDataset {
    pub kind: ProbeKind,
    pub seed: u64,
    pub test_fraction: f64,
    pub pairs: Vec<ProbePair>,
}

impl ProbeDataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ProbePair> {
        self.pairs.iter().filter(move |p| p.split == split)
    }

    pub fn count(&self, split: Split, positive: bool) -> usize {
        self.split(split).filter(|p| p.positive == positive).count()
    }

    /// Every character referenced by any pair, sorted.
    pub fn characters(&self) -> BTreeSet<char> {
        self.pairs.iter().flat_map(|p| [p.left, p.right]).collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "#kind={}\n#seed={}\n#test_fraction={}\n",
            self.kind, self.seed, self.test_fraction
        );
        for p in &self.pairs {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                p.left,
                p.right,
                u8::from(p.positive),
                p.split
            ));
        }
        out
    }

    pub fn parse(text: &str, context: &str) -> Result<Self> {
        let mut kind = None;
        let mut seed = None;
        let mut test_fraction = None;
        let mut pairs = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('#') {
                let (key, value) = header
                    .split_once('=')
                    .ok_or_else(|| Error::parse(context, line_no, "header must be #key=value"))?;
                let bad = |what: &str| Error::parse(context, line_no, format!("bad {what}: {value:?}"));
                match key {
                    "kind" => {
                        kind = Some(match value {
                            "glyph" => ProbeKind::Glyph,
                            "phonetic" => ProbeKind::Phonetic,
                            _ => return Err(bad("kind")),
                        })
                    }
                    "seed" => seed = Some(value.parse::<u64>().map_err(|_| bad("seed"))?),
                    "test_fraction" => {
                        test_fraction = Some(value.parse::<f64>().map_err(|_| bad("test_fraction"))?)
                    }
                    _ => return Err(Error::parse(context, line_no, format!("unknown header {key:?}"))),
                }
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(Error::parse(
                    context,
                    line_no,
                    format!("expected 4 tab-separated fields, found {}", fields.len()),
                ));
            }
            let ch = |s: &str| {
                single_char(s)
                    .ok_or_else(|| Error::parse(context, line_no, format!("{s:?} is not a single character")))
            };
            let positive = match fields[2] {
                "1" => true,
                "0" => false,
                other => return Err(Error::parse(context, line_no, format!("bad label {other:?}"))),
            };
            let split = match fields[3] {
                "train" => Split::Train,
                "test" => Split::Test,
                other => return Err(Error::parse(context, line_no, format!("bad split {other:?}"))),
            };
            pairs.push(ProbePair {
                left: ch(fields[0])?,
                right: ch(fields[1])?,
                positive,
                split,
            });
        }
        let missing = |name: &str| Error::parse(context, 0, format!("missing #{name} header"));
        Ok(Self {
            kind: kind.ok_or_else(|| missing("kind"))?,
            seed: seed.ok_or_else(|| missing("seed"))?,
            test_fraction: test_fraction.ok_or_else(|| missing("test_fraction"))?,
            pairs,
        })
    }
}

pub fn load_dataset(path: &Path) -> Result<ProbeDataset> {
    let text = read_to_string(path)?;
    ProbeDataset::parse(&text, &path.display().to_string())
}

pub fn write_dataset(ds: &ProbeDataset, path: &Path) -> Result<()> {
    std::fs::write(path, ds.to_text()).map_err(|e| Error::io(path, e))
}

fn check_fraction(test_fraction: f64) -> Result<()> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "test_fraction must lie in (0,1), got {test_fraction}"
        )));
    }
    Ok(())
}

/// Shuffles the right characters with the split stream and sends the first
/// `round(n * test_fraction)` of them to the test side.
fn assign_splits(groups: Vec<(char, Vec<(char, bool)>)>, seed: u64, test_fraction: f64) -> Vec<ProbePair> {
    let mut rights: Vec<char> = groups.iter().map(|(w, _)| *w).collect();
    rights.sort_unstable();
    let mut rng = stream(seed, Purpose::Split, 0);
    rights.shuffle(&mut rng);
    let n_test = ((rights.len() as f64) * test_fraction).round() as usize;
    let test: HashSet<char> = rights[..n_test].iter().copied().collect();

    let mut pairs: Vec<ProbePair> = groups
        .into_iter()
        .flat_map(|(right, lefts)| {
            let split = if test.contains(&right) {
                Split::Test
            } else {
                Split::Train
            };
            lefts.into_iter().map(move |(left, positive)| ProbePair {
                left,
                right,
                positive,
                split,
            })
        })
        .collect();
    pairs.sort_by_key(ProbePair::sort_key);
    pairs
}

/// Draws `k` items from `pool`: distinct when the pool is large enough,
/// otherwise uniformly with replacement.
fn draw(pool: &[char], k: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<char> {
    if pool.len() >= k {
        let mut picked: Vec<char> = index::sample(rng, pool.len(), k).into_iter().map(|i| pool[i]).collect();
        picked.sort_unstable();
        picked
    } else {
        (0..k).map(|_| *pool.choose(rng).expect("nonempty pool")).collect()
    }
}

/// Glyph probe: for each vocabulary character `w` with components, one
/// positive `(u, w)` per distinct component and as many negatives drawn from
/// the table-wide component set minus `w`'s own components (and `w` itself).
pub fn build_glyph_dataset(
    decomp: &DecompositionTable,
    vocab: &Vocabulary,
    seed: u64,
    test_fraction: f64,
) -> Result<ProbeDataset> {
    check_fraction(test_fraction)?;
    let universe: Vec<char> = decomp.component_universe().into_iter().collect();

    let covered: Vec<char> = vocab.chars().iter().copied().filter(|c| decomp.contains(*c)).collect();
    let skipped = vocab.len() - covered.len();
    if skipped > 0 {
        log::warn!("glyph probe: {skipped} vocabulary characters have no decomposition and were skipped");
    }

    let groups: Vec<(char, Vec<(char, bool)>)> = covered
        .par_iter()
        .map(|&w| {
            let positives: BTreeSet<char> = decomp.components_of(w).iter().copied().collect();
            let pool: Vec<char> = universe
                .iter()
                .copied()
                .filter(|u| *u != w && !positives.contains(u))
                .collect();
            let mut lefts: Vec<(char, bool)> = positives.iter().map(|&u| (u, true)).collect();
            if pool.is_empty() {
                return (w, Vec::new());
            }
            let mut rng = stream(seed, Purpose::GlyphNegatives, w as u32);
            lefts.extend(draw(&pool, positives.len(), &mut rng).into_iter().map(|u| (u, false)));
            (w, lefts)
        })
        .filter(|(_, lefts)| !lefts.is_empty())
        .collect();

    if groups.len() < covered.len() {
        log::warn!(
            "glyph probe: {} characters had no eligible negative component and were skipped",
            covered.len() - groups.len()
        );
    }
    if groups.is_empty() {
        return Err(Error::EmptyDataset(
            "no vocabulary character has a usable decomposition".into(),
        ));
    }
    Ok(ProbeDataset {
        kind: ProbeKind::Glyph,
        seed,
        test_fraction,
        pairs: assign_splits(groups, seed, test_fraction),
    })
}

/// Phonetic probe: for each vocabulary character `w`, one positive partner
/// sharing a reading and one negative partner sharing none, both drawn from
/// the other characters of the pinyin table.
pub fn build_phonetic_dataset(
    pinyin: &PinyinTable,
    vocab: &Vocabulary,
    seed: u64,
    test_fraction: f64,
    mode: ToneMode,
) -> Result<ProbeDataset> {
    check_fraction(test_fraction)?;
    let candidates: Vec<char> = pinyin.chars().collect();

    let covered: Vec<char> = vocab.chars().iter().copied().filter(|c| pinyin.contains(*c)).collect();
    let skipped = vocab.len() - covered.len();
    if skipped > 0 {
        log::warn!("phonetic probe: {skipped} vocabulary characters have no pinyin and were skipped");
    }

    let groups: Vec<(char, Vec<(char, bool)>)> = covered
        .par_iter()
        .filter_map(|&w| {
            let mut same = Vec::new();
            let mut different = Vec::new();
            for &u in candidates.iter().filter(|u| **u != w) {
                if pinyin.same_phonetic_with(u, w, mode).expect("both in table") {
                    same.push(u);
                } else {
                    different.push(u);
                }
            }
            if same.is_empty() || different.is_empty() {
                return None;
            }
            let mut rng = stream(seed, Purpose::PhoneticPartners, w as u32);
            let pos = *same.choose(&mut rng).expect("nonempty");
            let neg = *different.choose(&mut rng).expect("nonempty");
            Some((w, vec![(pos, true), (neg, false)]))
        })
        .collect();

    if groups.len() < covered.len() {
        log::warn!(
            "phonetic probe: {} characters lacked a same- or different-reading partner and were skipped",
            covered.len() - groups.len()
        );
    }
    if groups.is_empty() {
        return Err(Error::EmptyDataset(
            "no vocabulary character has a same-phonetic partner".into(),
        ));
    }
    Ok(ProbeDataset {
        kind: ProbeKind::Phonetic,
        seed,
        test_fraction,
        pairs: assign_splits(groups, seed, test_fraction),
    })
}

/// Reference table used to re-check labels.
#[derive(Debug, Clone, Copy)]
pub enum GroundTruth<'a> {
    Glyph(&'a DecompositionTable),
    Phonetic(&'a PinyinTable, ToneMode),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub kind: ProbeKind,
    pub train_positive: usize,
    pub train_negative: usize,
    pub test_positive: usize,
    pub test_negative: usize,
    pub balanced: bool,
    /// Right characters that occur in both splits.
    pub split_violations: Vec<char>,
    /// Pairs whose label disagrees with the ground-truth table.
    pub label_violations: Vec<String>,
    pub duplicate_pairs: usize,
    pub kind_mismatch: bool,
    /// Informational: left characters shared by both splits.
    pub left_chars_in_both_splits: usize,
}

impl ValidationReport {
    pub fn violation_count(&self) -> usize {
        self.split_violations.len()
            + self.label_violations.len()
            + self.duplicate_pairs
            + usize::from(!self.balanced)
            + usize::from(self.kind_mismatch)
    }

    pub fn is_valid(&self) -> bool {
        self.violation_count() == 0
    }
}

pub fn validate_dataset(ds: &ProbeDataset, truth: GroundTruth<'_>) -> ValidationReport {
    let mut sides: BTreeMap<char, [bool; 2]> = BTreeMap::new();
    let mut left_sides: BTreeMap<char, [bool; 2]> = BTreeMap::new();
    let mut seen = HashSet::new();
    let mut duplicate_pairs = 0;
    let mut label_violations = Vec::new();

    for p in &ds.pairs {
        let side = usize::from(p.split == Split::Test);
        sides.entry(p.right).or_default()[side] = true;
        left_sides.entry(p.left).or_default()[side] = true;
        if !seen.insert((p.left, p.right, p.positive)) {
            duplicate_pairs += 1;
        }
        let actual = match truth {
            GroundTruth::Glyph(t) => Some(p.left != p.right && t.components_of(p.right).contains(&p.left)),
            GroundTruth::Phonetic(t, mode) => t.same_phonetic_with(p.left, p.right, mode).ok(),
        };
        if actual != Some(p.positive) {
            label_violations.push(format!(
                "{}\t{}\t{}\t{}",
                p.left,
                p.right,
                u8::from(p.positive),
                p.split
            ));
        }
    }

    let count = |split, positive| ds.count(split, positive);
    let (trp, trn, tep, ten) = (
        count(Split::Train, true),
        count(Split::Train, false),
        count(Split::Test, true),
        count(Split::Test, false),
    );
    let expected_kind = match truth {
        GroundTruth::Glyph(_) => ProbeKind::Glyph,
        GroundTruth::Phonetic(..) => ProbeKind::Phonetic,
    };
    ValidationReport {
        kind: ds.kind,
        train_positive: trp,
        train_negative: trn,
        test_positive: tep,
        test_negative: ten,
        balanced: trp + tep == trn + ten,
        split_violations: sides
            .iter()
            .filter(|(_, s)| s[0] && s[1])
            .map(|(c, _)| *c)
            .collect(),
        label_violations,
        duplicate_pairs,
        kind_mismatch: ds.kind != expected_kind,
        left_chars_in_both_splits: left_sides.values().filter(|s| s[0] && s[1]).count(),
    }
}
