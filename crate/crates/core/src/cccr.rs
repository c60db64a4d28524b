//! Correction with misspelled-character coverage ratio.
//!
//! Each [`PredictionRecord`] carries the model's probabilities for the gold
//! and the misspelled ("noise") character at one error position, under two
//! inputs: the position masked, and the misspelled character in place.
//!
//! * MLM set: with the mask, noise outranks gold.
//! * Homonym set: with the misspelled character visible, gold outranks noise.
//! * CCCR = |MLM ∩ Homonym| / |MLM|.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{read_to_string, Error, Result};

/// Slack allowed when checking that two entries of one softmax sum to at most 1.
pub const SOFTMAX_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub id: String,
    pub gold_char: char,
    pub noise_char: char,
    pub p_gold_masked: f64,
    pub p_noise_masked: f64,
    pub p_gold_noisy: f64,
    pub p_noise_noisy: f64,
}

impl PredictionRecord {
    pub fn validate(&self) -> Result<()> {
        if self.gold_char == self.noise_char {
            return Err(Error::record(&self.id, "gold_char equals noise_char"));
        }
        let probs = [
            ("p_gold_masked", self.p_gold_masked),
            ("p_noise_masked", self.p_noise_masked),
            ("p_gold_noisy", self.p_gold_noisy),
            ("p_noise_noisy", self.p_noise_noisy),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::record(&self.id, format!("{name} = {p} outside [0,1]")));
            }
        }
        if self.p_gold_masked + self.p_noise_masked > 1.0 + SOFTMAX_SUM_TOLERANCE {
            return Err(Error::record(&self.id, "masked probabilities sum above 1"));
        }
        if self.p_gold_noisy + self.p_noise_noisy > 1.0 + SOFTMAX_SUM_TOLERANCE {
            return Err(Error::record(&self.id, "noisy probabilities sum above 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Membership {
    pub in_mlm: bool,
    pub in_homonym: bool,
}

/// Set membership by strict comparison; ties belong to neither set.
pub fn classify_record(rec: &PredictionRecord) -> Result<Membership> {
    rec.validate()?;
    Ok(Membership {
        in_mlm: rec.p_noise_masked > rec.p_gold_masked,
        in_homonym: rec.p_gold_noisy > rec.p_noise_noisy,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineMode {
    /// `p_noise / (1 - p_noise)` under the masked input.
    #[default]
    Printed,
    /// `p_gold / (1 - p_noise)` under the masked input.
    Renormalized,
}

impl fmt::Display for BaselineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaselineMode::Printed => "printed",
            BaselineMode::Renormalized => "renormalized",
        })
    }
}

impl std::str::FromStr for BaselineMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "printed" => Ok(BaselineMode::Printed),
            "renormalized" => Ok(BaselineMode::Renormalized),
            other => Err(format!("unknown baseline mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CccrReport {
    pub n_records: usize,
    pub n_mlm: usize,
    pub n_homonym: usize,
    pub n_intersection: usize,
    /// `None` when the MLM set is empty.
    pub cccr: Option<f64>,
    pub cccr_defined: bool,
    pub baseline_mode: BaselineMode,
    /// `None` when the MLM set is empty.
    pub baseline: Option<f64>,
    pub mlm_rate: f64,
    pub homonym_rate: f64,
}

pub fn compute_cccr(records: &[PredictionRecord]) -> Result<CccrReport> {
    compute_cccr_with(records, BaselineMode::Printed)
}

pub fn compute_cccr_with(records: &[PredictionRecord], mode: BaselineMode) -> Result<CccrReport> {
    if records.is_empty() {
        return Err(Error::EmptyDataset("no prediction records".into()));
    }
    let mut n_mlm = 0;
    let mut n_homonym = 0;
    let mut n_intersection = 0;
    for rec in records {
        let m = classify_record(rec)?;
        n_mlm += usize::from(m.in_mlm);
        n_homonym += usize::from(m.in_homonym);
        n_intersection += usize::from(m.in_mlm && m.in_homonym);
    }
    let cccr = (n_mlm > 0).then(|| n_intersection as f64 / n_mlm as f64);
    let n = records.len() as f64;
    Ok(CccrReport {
        n_records: records.len(),
        n_mlm,
        n_homonym,
        n_intersection,
        cccr,
        cccr_defined: cccr.is_some(),
        baseline_mode: mode,
        baseline: compute_baseline_with(records, mode)?,
        mlm_rate: n_mlm as f64 / n,
        homonym_rate: n_homonym as f64 / n,
    })
}

pub fn compute_baseline(records: &[PredictionRecord]) -> Result<Option<f64>> {
    compute_baseline_with(records, BaselineMode::Printed)
}

/// Random-guess baseline: the per-record guess summed over the MLM set and
/// divided by |MLM|. `None` when the MLM set is empty.
pub fn compute_baseline_with(records: &[PredictionRecord], mode: BaselineMode) -> Result<Option<f64>> {
    if records.is_empty() {
        return Err(Error::EmptyDataset("no prediction records".into()));
    }
    let mut sum = 0.0;
    let mut n_mlm = 0usize;
    for rec in records {
        if !classify_record(rec)?.in_mlm {
            continue;
        }
        if rec.p_noise_masked >= 1.0 {
            return Err(Error::record(&rec.id, "p_noise_masked = 1 makes the baseline guess undefined"));
        }
        let numerator = match mode {
            BaselineMode::Printed => rec.p_noise_masked,
            BaselineMode::Renormalized => rec.p_gold_masked,
        };
        sum += numerator / (1.0 - rec.p_noise_masked);
        n_mlm += 1;
    }
    Ok((n_mlm > 0).then(|| sum / n_mlm as f64))
}

pub fn parse_predictions(text: &str, context: &str) -> Result<Vec<PredictionRecord>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: PredictionRecord =
            serde_json::from_str(line).map_err(|e| Error::parse(context, idx + 1, e.to_string()))?;
        rec.validate()
            .map_err(|e| Error::parse(context, idx + 1, e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn load_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let text = read_to_string(path)?;
    parse_predictions(&text, &path.display().to_string())
}

/// One JSON object per line, fields in canonical order.
pub fn predictions_to_text(records: &[PredictionRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("serialisable") + "\n")
        .collect()
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{:.2}", 100.0 * x))
}

/// Aligned human-readable table, one row per labelled report, percentages.
pub fn render_table(rows: &[(String, CccrReport)]) -> String {
    let width = rows.iter().map(|(n, _)| n.chars().count()).max().unwrap_or(0).max(6);
    let mut out = format!(
        "{:<width$} {:>8} {:>8} {:>8} {:>8} {:>10} {:>9}\n",
        "source", "records", "MLM", "Homonym", "CCCR", "baseline", "(mode)"
    );
    for (name, r) in rows {
        out.push_str(&format!(
            "{:<width$} {:>8} {:>8.2} {:>8.2} {:>8} {:>10} {:>9}\n",
            name,
            r.n_records,
            100.0 * r.mlm_rate,
            100.0 * r.homonym_rate,
            pct(r.cccr),
            pct(r.baseline),
            r.baseline_mode.to_string(),
        ));
    }
    out
}
