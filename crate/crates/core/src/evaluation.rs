//! Scoring of several models on one validation set: mean CRPS tables,
//! skill against reference models, best-model counts, calibration
//! histograms and pairwise significance.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{mean_std, ForecastDataset};
use crate::error::{Error, Result};
use crate::models::Prediction;
use crate::scoring::{crps_ensemble, crpss};
use crate::verification::{
    check_same_grid, mean_crps_by_station, pairwise_significance_matrix, pit_histogram_from_values,
    rank_histogram, spread_error_ratio, HistogramResult, ModelScores, ScoreRecord, VerificationError,
    DEFAULT_DM_LAG, DEFAULT_PIT_BINS,
};

/// Name under which the unprocessed ensemble is reported.
pub const RAW_ENSEMBLE: &str = "raw-ensemble";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationOptions {
    /// Models (or [`RAW_ENSEMBLE`]) used as CRPSS references.
    pub references: Vec<String>,
    pub alpha: f64,
    pub dm_lag: usize,
    pub pit_bins: usize,
    /// Seed for tie-breaking in rank histograms.
    pub seed: u64,
}

impl Default for EvaluationOptions {
    fn default() -> Self {
        Self {
            references: Vec::new(),
            alpha: 0.05,
            dm_lag: DEFAULT_DM_LAG,
            pit_bins: DEFAULT_PIT_BINS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub name: String,
    pub mean_crps: f64,
    pub per_station: Vec<(u32, f64)>,
    pub spread_error: Option<f64>,
    pub histogram: HistogramResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillTable {
    pub reference: String,
    pub models: Vec<String>,
    /// One row per station: CRPSS of every model against the reference.
    pub rows: Vec<(u32, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// Raw ensemble first when member forecasts were available.
    pub models: Vec<ModelSummary>,
    pub skill: Vec<SkillTable>,
    /// Number of stations at which each post-processing model has the lowest mean CRPS.
    pub best_counts: Vec<(String, usize)>,
    pub significance_models: Vec<String>,
    pub significance: Vec<Vec<f64>>,
    pub alpha: f64,
    /// Wall-clock fitting time per model, when supplied by the caller.
    pub runtimes: Vec<(String, f64)>,
}

impl EvaluationReport {
    pub fn summary(&self, name: &str) -> Option<&ModelSummary> {
        self.models.iter().find(|m| m.name == name)
    }
}

/// Daily CRPS values of one forecast set on the samples of `valid`.
pub fn score_records(valid: &ForecastDataset, predictions: &[Prediction]) -> Result<Vec<ScoreRecord>> {
    if predictions.len() != valid.len() {
        return Err(VerificationError::GridMismatch.into());
    }
    Ok(valid
        .samples()
        .iter()
        .zip(predictions)
        .map(|(s, p)| ScoreRecord {
            station_id: s.station_id,
            valid_time: s.valid_time,
            score: p.crps(s.observation),
        })
        .collect())
}

fn histogram(valid: &ForecastDataset, predictions: &[Prediction], opts: &EvaluationOptions) -> Result<HistogramResult> {
    let obs = valid.observations();
    let quantiles: Vec<&[f64]> = predictions
        .iter()
        .filter_map(|p| match p {
            Prediction::Quantiles(q) => Some(q.values()),
            Prediction::Gaussian(_) => None,
        })
        .collect();
    if quantiles.len() == predictions.len() && !quantiles.is_empty() {
        return Ok(rank_histogram(&quantiles, &obs, opts.seed)?);
    }
    let pit: Vec<f64> = predictions
        .iter()
        .zip(&obs)
        .map(|(p, &y)| match p {
            Prediction::Gaussian(f) => f.cdf(y),
            Prediction::Quantiles(q) => {
                q.values().iter().filter(|v| **v <= y).count() as f64 / (q.len() + 1) as f64
            }
        })
        .collect();
    Ok(pit_histogram_from_values(&pit, opts.pit_bins)?)
}

fn summarize(name: &str, records: &[ScoreRecord], spreads: &[f64], means: &[f64], obs: &[f64], histogram: HistogramResult) -> Result<ModelSummary> {
    let by_station = mean_crps_by_station(records)?;
    let spread_error = spread_error_ratio(spreads, means, obs).ok();
    Ok(ModelSummary {
        name: name.to_string(),
        mean_crps: by_station.overall,
        per_station: by_station.per_station,
        spread_error,
        histogram,
    })
}

/// Scores every named forecast set on `valid`. Member forecasts, when
/// present, are scored as the raw ensemble.
pub fn evaluate(valid: &ForecastDataset, models: &[(String, Vec<Prediction>)], opts: &EvaluationOptions) -> Result<EvaluationReport> {
    if valid.is_empty() {
        return Err(VerificationError::Empty.into());
    }
    let obs = valid.observations();
    let mut summaries = Vec::new();
    let mut scores = Vec::new();

    if valid.member_count() > 0 {
        let mut records = Vec::with_capacity(valid.len());
        let mut spreads = Vec::with_capacity(valid.len());
        let mut means = Vec::with_capacity(valid.len());
        for s in valid.samples() {
            records.push(ScoreRecord {
                station_id: s.station_id,
                valid_time: s.valid_time,
                score: crps_ensemble(&s.members, s.observation)?,
            });
            let (m, sd) = mean_std(&s.members);
            means.push(m);
            spreads.push(sd);
        }
        let members: Vec<&[f64]> = valid.samples().iter().map(|s| s.members.as_slice()).collect();
        let hist = rank_histogram(&members, &obs, opts.seed)?;
        summaries.push(summarize(RAW_ENSEMBLE, &records, &spreads, &means, &obs, hist)?);
        scores.push(ModelScores {
            name: RAW_ENSEMBLE.to_string(),
            records,
        });
    }

    for (name, preds) in models {
        if name == RAW_ENSEMBLE || summaries.iter().any(|m: &ModelSummary| &m.name == name) {
            return Err(Error::InvalidConfig(format!("duplicate model name `{name}`")));
        }
        let records = score_records(valid, preds)?;
        let spreads: Vec<f64> = preds.iter().map(Prediction::spread).collect();
        let means: Vec<f64> = preds.iter().map(Prediction::mean).collect();
        let hist = histogram(valid, preds, opts)?;
        summaries.push(summarize(name, &records, &spreads, &means, &obs, hist)?);
        scores.push(ModelScores {
            name: name.clone(),
            records,
        });
    }
    check_same_grid(&scores)?;

    let mut skill = Vec::new();
    for reference in &opts.references {
        let r = summaries
            .iter()
            .find(|m| &m.name == reference)
            .ok_or_else(|| Error::UnknownModel(reference.clone()))?;
        let ref_means: BTreeMap<u32, f64> = r.per_station.iter().copied().collect();
        let names: Vec<String> = summaries.iter().map(|m| m.name.clone()).collect();
        let mut rows = Vec::new();
        for (station, ref_crps) in &ref_means {
            let row = summaries
                .iter()
                .map(|m| {
                    let own = m.per_station.iter().find(|(s, _)| s == station).map_or(f64::NAN, |x| x.1);
                    crpss(own, *ref_crps).unwrap_or(f64::NAN)
                })
                .collect();
            rows.push((*station, row));
        }
        skill.push(SkillTable {
            reference: reference.clone(),
            models: names,
            rows,
        });
    }

    let processed: Vec<&ModelSummary> = summaries.iter().filter(|m| m.name != RAW_ENSEMBLE).collect();
    let mut best: BTreeMap<&str, usize> = processed.iter().map(|m| (m.name.as_str(), 0)).collect();
    if let Some(first) = processed.first() {
        for (k, (_, _)) in first.per_station.iter().enumerate() {
            let winner = processed
                .iter()
                .min_by(|a, b| a.per_station[k].1.total_cmp(&b.per_station[k].1))
                .expect("non-empty");
            *best.get_mut(winner.name.as_str()).expect("listed") += 1;
        }
    }
    let best_counts = processed.iter().map(|m| (m.name.clone(), best[m.name.as_str()])).collect();

    let processed_scores: Vec<ModelScores> = scores.into_iter().filter(|s| s.name != RAW_ENSEMBLE).collect();
    let significance = pairwise_significance_matrix(&processed_scores, opts.alpha, opts.dm_lag)?;

    Ok(EvaluationReport {
        models: summaries,
        skill,
        best_counts,
        significance_models: processed_scores.iter().map(|s| s.name.clone()).collect(),
        significance,
        alpha: opts.alpha,
        runtimes: Vec::new(),
    })
}

/// A plain table that renders as aligned text or CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(headers: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            headers: headers.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.headers.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut widths: Vec<usize> = self.headers.iter().map(String::len).collect();
        for r in &self.rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.len());
            }
        }
        let line = |cells: &[String]| {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            parts.join("  ").trim_end().to_string() + "\n"
        };
        let mut s = line(&self.headers);
        for r in &self.rows {
            s.push_str(&line(r));
        }
        s
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.4}")
}

impl EvaluationReport {
    pub fn crps_table(&self) -> Table {
        let mut t = Table::new(["model", "mean_crps", "spread_error", "hist_chi2"]);
        for m in &self.models {
            t.push(vec![
                m.name.clone(),
                fmt(m.mean_crps),
                m.spread_error.map_or("NA".into(), fmt),
                format!("{:.1}", m.histogram.chi_square()),
            ]);
        }
        t
    }

    pub fn station_table(&self) -> Table {
        let mut headers = vec!["station_id".to_string()];
        headers.extend(self.models.iter().map(|m| m.name.clone()));
        let mut t = Table::new(headers);
        if let Some(first) = self.models.first() {
            for (k, (station, _)) in first.per_station.iter().enumerate() {
                let mut row = vec![station.to_string()];
                row.extend(self.models.iter().map(|m| fmt(m.per_station[k].1)));
                t.push(row);
            }
        }
        t
    }

    pub fn skill_tables(&self) -> Vec<(String, Table)> {
        self.skill
            .iter()
            .map(|s| {
                let mut headers = vec!["station_id".to_string()];
                headers.extend(s.models.iter().cloned());
                let mut t = Table::new(headers);
                for (station, vals) in &s.rows {
                    let mut row = vec![station.to_string()];
                    row.extend(vals.iter().map(|v| fmt(*v)));
                    t.push(row);
                }
                (s.reference.clone(), t)
            })
            .collect()
    }

    pub fn best_table(&self) -> Table {
        let mut t = Table::new(["model", "stations_best"]);
        for (m, c) in &self.best_counts {
            t.push(vec![m.clone(), c.to_string()]);
        }
        t
    }

    pub fn histogram_table(&self) -> Table {
        let mut t = Table::new(["model", "kind", "bin", "frequency"]);
        for m in &self.models {
            let kind = format!("{:?}", m.histogram.kind).to_lowercase();
            for (b, f) in m.histogram.frequencies().iter().enumerate() {
                t.push(vec![m.name.clone(), kind.clone(), (b + 1).to_string(), format!("{f:.5}")]);
            }
        }
        t
    }

    /// Row model significantly better than column model, % of stations.
    pub fn significance_table(&self) -> Table {
        let mut headers = vec!["better\\worse".to_string()];
        headers.extend(self.significance_models.iter().cloned());
        let mut t = Table::new(headers);
        for (name, row) in self.significance_models.iter().zip(&self.significance) {
            let mut cells = vec![name.clone()];
            cells.extend(row.iter().map(|v| format!("{v:.1}")));
            t.push(cells);
        }
        t
    }

    pub fn runtime_table(&self) -> Table {
        let mut t = Table::new(["model", "fit_seconds"]);
        for (m, s) in &self.runtimes {
            t.push(vec![m.clone(), format!("{s:.2}")]);
        }
        t
    }

    pub fn tables(&self) -> Vec<(String, Table)> {
        let mut out = vec![
            ("mean_crps".to_string(), self.crps_table()),
            ("station_crps".to_string(), self.station_table()),
            ("best_model".to_string(), self.best_table()),
            ("histograms".to_string(), self.histogram_table()),
            ("significance".to_string(), self.significance_table()),
        ];
        for (reference, t) in self.skill_tables() {
            out.push((format!("crpss_{reference}"), t));
        }
        if !self.runtimes.is_empty() {
            out.push(("runtime".to_string(), self.runtime_table()));
        }
        out
    }

    /// Writes every table as `<name>.txt` and `<name>.csv` into `dir`.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (name, table) in self.tables() {
            for (ext, body) in [("txt", table.to_text()), ("csv", table.to_csv())] {
                let path = dir.join(format!("{name}.{ext}"));
                write_atomic(&path, &body)?;
                written.push(path);
            }
        }
        Ok(written)
    }
}

pub fn write_atomic(path: &Path, body: &str) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, body)?;
    fs::rename(&tmp, path)?;
    Ok(())
}
