//! Calibration diagnostics, score aggregation and significance testing.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::scoring::{std_normal_cdf, GaussianForecast};

/// Default DM lag: 48 h lead with daily initialization.
pub const DEFAULT_DM_LAG: usize = 2;
pub const DEFAULT_PIT_BINS: usize = 20;

/// Floor applied to the long-run variance estimate before the square root.
const MIN_LONG_RUN_VARIANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerificationError {
    #[error("input lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no data")]
    Empty,
    #[error("forecast errors are all zero")]
    ZeroError,
    #[error("score differences have zero variance; forecasts are indistinguishable")]
    DegenerateVariance,
    #[error("series of length {n} too short for lag {k}")]
    SeriesTooShort { n: usize, k: usize },
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("models are not scored on the same station/day grid")]
    GridMismatch,
    #[error("ensembles must have equal, non-zero member counts")]
    RaggedEnsemble,
    #[error("bin count must be positive")]
    NoBins,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HistogramKind {
    Rank,
    Pit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramResult {
    pub kind: HistogramKind,
    pub counts: Vec<usize>,
    pub samples: usize,
}

impl HistogramResult {
    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    /// Pearson chi-square statistic against the uniform histogram.
    pub fn chi_square(&self) -> f64 {
        let expected = self.samples as f64 / self.bins() as f64;
        self.counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum()
    }

    /// Upper-tail p-value of [`Self::chi_square`] with `bins - 1` degrees of freedom.
    pub fn uniformity_p_value(&self) -> f64 {
        let dof = (self.bins() - 1).max(1) as f64;
        let dist = ChiSquared::new(dof).expect("positive dof");
        1.0 - dist.cdf(self.chi_square())
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.counts
            .iter()
            .map(|&c| c as f64 / self.samples.max(1) as f64)
            .collect()
    }
}

/// Verification-rank histogram with `m + 1` bins. Ties between the
/// observation and members are broken uniformly at random.
pub fn rank_histogram(
    ensembles: &[&[f64]],
    observations: &[f64],
    seed: u64,
) -> Result<HistogramResult, VerificationError> {
    if ensembles.len() != observations.len() {
        return Err(VerificationError::LengthMismatch(ensembles.len(), observations.len()));
    }
    let m = ensembles.first().map_or(0, |e| e.len());
    if m == 0 || ensembles.iter().any(|e| e.len() != m) {
        return Err(VerificationError::RaggedEnsemble);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0; m + 1];
    for (members, &y) in ensembles.iter().zip(observations) {
        let below = members.iter().filter(|&&x| x < y).count();
        let ties = members.iter().filter(|&&x| x == y).count();
        let extra = if ties > 0 { rng.gen_range(0..=ties) } else { 0 };
        counts[below + extra] += 1;
    }
    Ok(HistogramResult {
        kind: HistogramKind::Rank,
        counts,
        samples: observations.len(),
    })
}

/// Histogram of probability integral transforms over `bins` equal bins.
pub fn pit_histogram_from_values(pit: &[f64], bins: usize) -> Result<HistogramResult, VerificationError> {
    if bins == 0 {
        return Err(VerificationError::NoBins);
    }
    let mut counts = vec![0; bins];
    for &u in pit {
        let b = ((u * bins as f64).floor() as isize).clamp(0, bins as isize - 1) as usize;
        counts[b] += 1;
    }
    Ok(HistogramResult {
        kind: HistogramKind::Pit,
        counts,
        samples: pit.len(),
    })
}

pub fn pit_histogram(
    forecasts: &[GaussianForecast],
    observations: &[f64],
    bins: usize,
) -> Result<HistogramResult, VerificationError> {
    if forecasts.len() != observations.len() {
        return Err(VerificationError::LengthMismatch(forecasts.len(), observations.len()));
    }
    let pit: Vec<f64> = forecasts
        .iter()
        .zip(observations)
        .map(|(f, &y)| f.cdf(y))
        .collect();
    pit_histogram_from_values(&pit, bins)
}

/// Mean predictive spread over the RMSE of the predictive mean.
pub fn spread_error_ratio(spreads: &[f64], means: &[f64], observations: &[f64]) -> Result<f64, VerificationError> {
    if spreads.len() != means.len() {
        return Err(VerificationError::LengthMismatch(spreads.len(), means.len()));
    }
    if means.len() != observations.len() {
        return Err(VerificationError::LengthMismatch(means.len(), observations.len()));
    }
    if spreads.is_empty() {
        return Err(VerificationError::Empty);
    }
    let n = spreads.len() as f64;
    let mean_spread = spreads.iter().sum::<f64>() / n;
    let mse = means
        .iter()
        .zip(observations)
        .map(|(m, y)| (m - y).powi(2))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Err(VerificationError::ZeroError);
    }
    Ok(mean_spread / mse.sqrt())
}

/// One score per (station, day).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub station_id: u32,
    pub valid_time: NaiveDate,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationMeans {
    /// Station id and mean score, ordered by station id.
    pub per_station: Vec<(u32, f64)>,
    /// Mean over all samples (sample-weighted).
    pub overall: f64,
}

pub fn mean_crps_by_station(scores: &[ScoreRecord]) -> Result<StationMeans, VerificationError> {
    if scores.is_empty() {
        return Err(VerificationError::Empty);
    }
    let mut acc: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for r in scores {
        let e = acc.entry(r.station_id).or_insert((0.0, 0));
        e.0 += r.score;
        e.1 += 1;
    }
    let overall = scores.iter().map(|r| r.score).sum::<f64>() / scores.len() as f64;
    Ok(StationMeans {
        per_station: acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect(),
        overall,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmTestResult {
    /// Test statistic; negative values favor the first forecast.
    pub t_n: f64,
    pub sigma_hat: f64,
    pub n: usize,
    /// One-sided p-value Φ(t_n) for "the first forecast is better".
    pub p_value: f64,
    pub lag: usize,
}

/// Diebold–Mariano test on two aligned daily score series.
///
/// The long-run variance is the sum of sample autocovariances of the score
/// difference for lags |h| < k, clipped at 1e-12. A difference series that is
/// identically zero has no information and yields `DegenerateVariance`; a
/// constant nonzero difference hits the clip and produces a decisive
/// statistic in favor of the better forecast.
pub fn dm_test(scores_1: &[f64], scores_2: &[f64], k: usize) -> Result<DmTestResult, VerificationError> {
    if scores_1.len() != scores_2.len() {
        return Err(VerificationError::LengthMismatch(scores_1.len(), scores_2.len()));
    }
    let n = scores_1.len();
    let k = k.max(1);
    if n < 2 * k || n < 2 {
        return Err(VerificationError::SeriesTooShort { n, k });
    }
    let d: Vec<f64> = scores_1.iter().zip(scores_2).map(|(a, b)| a - b).collect();
    if d.iter().all(|&v| v == 0.0) {
        return Err(VerificationError::DegenerateVariance);
    }
    let nf = n as f64;
    let mean = d.iter().sum::<f64>() / nf;
    let autocov = |h: usize| -> f64 {
        (h..n).map(|t| (d[t] - mean) * (d[t - h] - mean)).sum::<f64>() / nf
    };
    let mut long_run = autocov(0);
    for h in 1..k {
        long_run += 2.0 * autocov(h);
    }
    let sigma_hat = long_run.max(MIN_LONG_RUN_VARIANCE).sqrt();
    let t_n = nf.sqrt() * mean / sigma_hat;
    Ok(DmTestResult {
        t_n,
        sigma_hat,
        n,
        p_value: std_normal_cdf(t_n),
        lag: k,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BhResult {
    pub alpha: f64,
    /// Largest sorted p-value under its step-up threshold, 0 when none is.
    pub threshold: f64,
    /// Rejection flag per input position.
    pub rejected: Vec<bool>,
    pub ordered_p_values: Vec<f64>,
}

impl BhResult {
    pub fn rejections(&self) -> usize {
        self.rejected.iter().filter(|&&r| r).count()
    }
}

/// Benjamini–Hochberg step-up procedure at false discovery rate `alpha`.
pub fn bh_procedure(p_values: &[f64], alpha: f64) -> Result<BhResult, VerificationError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(VerificationError::InvalidAlpha(alpha));
    }
    if p_values.is_empty() {
        return Err(VerificationError::Empty);
    }
    let s = p_values.len() as f64;
    let mut ordered = p_values.to_vec();
    ordered.sort_by(f64::total_cmp);
    let mut threshold = 0.0;
    let mut any = false;
    for (i, &p) in ordered.iter().enumerate() {
        if p <= (i + 1) as f64 / s * alpha {
            threshold = p;
            any = true;
        }
    }
    let rejected = p_values.iter().map(|&p| any && p <= threshold).collect();
    Ok(BhResult {
        alpha,
        threshold,
        rejected,
        ordered_p_values: ordered,
    })
}

/// Daily scores of one model on the evaluation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScores {
    pub name: String,
    pub records: Vec<ScoreRecord>,
}

impl ModelScores {
    fn by_station(&self) -> BTreeMap<u32, Vec<(NaiveDate, f64)>> {
        let mut out: BTreeMap<u32, Vec<(NaiveDate, f64)>> = BTreeMap::new();
        for r in &self.records {
            out.entry(r.station_id).or_default().push((r.valid_time, r.score));
        }
        for series in out.values_mut() {
            series.sort_by_key(|(d, _)| *d);
        }
        out
    }

    fn grid(&self) -> BTreeSet<(u32, NaiveDate)> {
        self.records.iter().map(|r| (r.station_id, r.valid_time)).collect()
    }
}

/// Checks that every model covers the same (station, day) keys without duplicates.
pub fn check_same_grid(models: &[ModelScores]) -> Result<(), VerificationError> {
    let Some(first) = models.first() else {
        return Ok(());
    };
    let grid = first.grid();
    for m in models {
        let g = m.grid();
        if g.len() != m.records.len() || g != grid {
            return Err(VerificationError::GridMismatch);
        }
    }
    Ok(())
}

/// Percentage of stations at which the one-sided DM test, after BH
/// correction across stations, finds model `i` significantly better than
/// model `j`. Rows index the favored model.
pub fn pairwise_significance_matrix(
    models: &[ModelScores],
    alpha: f64,
    k: usize,
) -> Result<Vec<Vec<f64>>, VerificationError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(VerificationError::InvalidAlpha(alpha));
    }
    check_same_grid(models)?;
    let series: Vec<BTreeMap<u32, Vec<(NaiveDate, f64)>>> = models.iter().map(|m| m.by_station()).collect();
    let n_models = models.len();
    let mut out = vec![vec![0.0; n_models]; n_models];
    for i in 0..n_models {
        for j in 0..n_models {
            if i == j {
                continue;
            }
            let mut p_values = Vec::new();
            for (station, a) in &series[i] {
                let b = &series[j][station];
                let sa: Vec<f64> = a.iter().map(|x| x.1).collect();
                let sb: Vec<f64> = b.iter().map(|x| x.1).collect();
                let p = match dm_test(&sa, &sb, k) {
                    Ok(r) => r.p_value,
                    // indistinguishable or too short: never significant
                    Err(_) => 1.0,
                };
                p_values.push(p);
            }
            if p_values.is_empty() {
                continue;
            }
            let bh = bh_procedure(&p_values, alpha)?;
            out[i][j] = 100.0 * bh.rejections() as f64 / p_values.len() as f64;
        }
    }
    Ok(out)
}
