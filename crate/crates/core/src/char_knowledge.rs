//! Ground-truth glyph and phonetic relations.
//!
//! Three plain-text inputs feed the probes:
//!
//! * decomposition table: `<char>\t<comp1> <comp2> ...`
//! * pinyin table: `<char>\t<toned1>,<toned2>,...` with tone digits 1-5
//! * vocabulary: one character per line
//!
//! Lines starting with `#` and blank lines are ignored in all three.
//! Tables are immutable once loaded.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use crate::error::{read_to_string, single_char, Error, Result};

/// Direct (single-level) component lists keyed by character.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DecompositionTable {
    entries: BTreeMap<char, Vec<char>>,
}

impl DecompositionTable {
    pub fn parse(text: &str, context: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 2 {
                return Err(Error::parse(
                    context,
                    line_no,
                    format!("expected 2 tab-separated fields, found {}", fields.len()),
                ));
            }
            let key = single_char(fields[0]).ok_or_else(|| {
                Error::parse(context, line_no, format!("{:?} is not a single character", fields[0]))
            })?;
            let mut comps = Vec::new();
            for token in fields[1].split(' ').filter(|t| !t.is_empty()) {
                let comp = single_char(token).ok_or_else(|| {
                    Error::parse(context, line_no, format!("component {token:?} is not a single character"))
                })?;
                if comp == key {
                    return Err(Error::parse(
                        context,
                        line_no,
                        format!("{key} lists itself as a component"),
                    ));
                }
                comps.push(comp);
            }
            if comps.is_empty() {
                return Err(Error::parse(context, line_no, format!("{key} has no components")));
            }
            if entries.insert(key, comps).is_some() {
                return Err(Error::DuplicateKey {
                    context: context.to_string(),
                    key,
                    line: line_no,
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn from_entries<I>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (char, Vec<char>)>,
    {
        let text: String = entries
            .into_iter()
            .map(|(k, v)| {
                let comps: Vec<String> = v.iter().map(|c| c.to_string()).collect();
                format!("{k}\t{}\n", comps.join(" "))
            })
            .collect();
        Self::parse(&text, "<memory>")
    }

    /// The stored components of `c`, or an empty slice when `c` has no entry.
    pub fn components_of(&self, c: char) -> &[char] {
        self.entries.get(&c).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn contains(&self, c: char) -> bool {
        self.entries.contains_key(&c)
    }

    /// Every character that occurs as a component anywhere in the table.
    pub fn component_universe(&self) -> BTreeSet<char> {
        self.entries.values().flatten().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (char, &[char])> {
        self.entries.iter().map(|(k, v)| (*k, v.as_slice()))
    }

    /// Canonical text form, sorted by codepoint.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push(*k);
            out.push('\t');
            let comps: Vec<String> = v.iter().map(|c| c.to_string()).collect();
            out.push_str(&comps.join(" "));
            out.push('\n');
        }
        out
    }
}

pub fn load_decomposition(path: &Path) -> Result<DecompositionTable> {
    let text = read_to_string(path)?;
    let table = DecompositionTable::parse(&text, &path.display().to_string())?;
    log::info!("{}: {} decomposition entries", path.display(), table.len());
    Ok(table)
}

/// How readings are compared by [`PinyinTable::same_phonetic_with`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ToneMode {
    /// Compare tone-stripped base syllables (`cheng1` matches `cheng2`).
    #[default]
    Insensitive,
    /// Compare full toned forms.
    Sensitive,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reading {
    /// Toned forms in file order, e.g. `cheng1`.
    pub toned: Vec<String>,
    /// Deduplicated tone-stripped syllables.
    pub bases: BTreeSet<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PinyinTable {
    entries: BTreeMap<char, Reading>,
}

fn strip_tone(toned: &str) -> &str {
    toned.trim_end_matches(|c: char| ('1'..='5').contains(&c))
}

fn valid_syllable(base: &str) -> bool {
    !base.is_empty() && base.chars().all(|c| c.is_alphabetic() && c.is_lowercase())
}

impl PinyinTable {
    pub fn parse(text: &str, context: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 2 {
                return Err(Error::parse(
                    context,
                    line_no,
                    format!("expected 2 tab-separated fields, found {}", fields.len()),
                ));
            }
            let key = single_char(fields[0]).ok_or_else(|| {
                Error::parse(context, line_no, format!("{:?} is not a single character", fields[0]))
            })?;
            let mut toned = Vec::new();
            let mut bases = BTreeSet::new();
            for form in fields[1].split(',').map(str::trim).filter(|f| !f.is_empty()) {
                let base = strip_tone(form);
                if form.len() - base.len() > 1 || !valid_syllable(base) {
                    return Err(Error::parse(context, line_no, format!("malformed pinyin {form:?}")));
                }
                toned.push(form.to_string());
                bases.insert(base.to_string());
            }
            if toned.is_empty() {
                return Err(Error::parse(context, line_no, format!("{key} has no readings")));
            }
            if entries.insert(key, Reading { toned, bases }).is_some() {
                return Err(Error::DuplicateKey {
                    context: context.to_string(),
                    key,
                    line: line_no,
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn reading(&self, c: char) -> Option<&Reading> {
        self.entries.get(&c)
    }

    pub fn contains(&self, c: char) -> bool {
        self.entries.contains_key(&c)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn chars(&self) -> impl Iterator<Item = char> + '_ {
        self.entries.keys().copied()
    }

    /// Tone-insensitive comparison; polyphonic characters match if any reading does.
    pub fn same_phonetic(&self, a: char, b: char) -> Result<bool> {
        self.same_phonetic_with(a, b, ToneMode::Insensitive)
    }

    pub fn same_phonetic_with(&self, a: char, b: char, mode: ToneMode) -> Result<bool> {
        let ra = self.reading(a).ok_or(Error::UnknownCharacter(a))?;
        let rb = self.reading(b).ok_or(Error::UnknownCharacter(b))?;
        Ok(match mode {
            ToneMode::Insensitive => !ra.bases.is_disjoint(&rb.bases),
            ToneMode::Sensitive => ra.toned.iter().any(|t| rb.toned.contains(t)),
        })
    }
}

pub fn load_pinyin(path: &Path) -> Result<PinyinTable> {
    let text = read_to_string(path)?;
    let table = PinyinTable::parse(&text, &path.display().to_string())?;
    log::info!("{}: {} pinyin entries", path.display(), table.len());
    Ok(table)
}

/// The probed character set, in file order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    chars: Vec<char>,
}

impl Vocabulary {
    pub fn parse(text: &str, context: &str) -> Result<Self> {
        let mut chars = Vec::new();
        let mut seen = HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let c = single_char(line.trim()).ok_or_else(|| {
                Error::parse(context, idx + 1, format!("{line:?} is not a single character"))
            })?;
            if !seen.insert(c) {
                return Err(Error::DuplicateKey {
                    context: context.to_string(),
                    key: c,
                    line: idx + 1,
                });
            }
            chars.push(c);
        }
        Ok(Self { chars })
    }

    /// Builds a vocabulary from `chars`, keeping the first occurrence of repeats.
    pub fn from_chars<I: IntoIterator<Item = char>>(chars: I) -> Self {
        let mut seen = HashSet::new();
        Self {
            chars: chars.into_iter().filter(|c| seen.insert(*c)).collect(),
        }
    }

    /// Drops every character listed in `stoplist`, preserving order.
    pub fn without(&self, stoplist: &Vocabulary) -> Self {
        let stop: HashSet<char> = stoplist.chars.iter().copied().collect();
        Self {
            chars: self.chars.iter().copied().filter(|c| !stop.contains(c)).collect(),
        }
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }
}

pub fn load_vocabulary(path: &Path) -> Result<Vocabulary> {
    let text = read_to_string(path)?;
    Vocabulary::parse(&text, &path.display().to_string())
}
