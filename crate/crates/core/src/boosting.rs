//! Local EMOS with boosting-based predictor selection.
//!
//! Location and log-scale are affine in the standardized predictors:
//! mu = (1, x)·beta, sigma = exp((1, x)·gamma). Starting from all-zero
//! coefficients, each iteration moves the single coefficient whose predictor
//! correlates most strongly with the negative LogS gradient of its parameter
//! (location or log-scale). Boosting stops when the training AIC no longer
//! improves, so weak predictors keep a zero coefficient.
//!
//! Update size: `step` times the least-squares slope of the negative gradient
//! on the centered predictor, scaled by the inverse mean Fisher information of
//! the parameter (mean sigma^2 for the location, 1/2 for log-scale).
//! Intercepts are refitted in closed form every ten iterations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{FeatureSpec, ForecastDataset, StandardizationStats};
use crate::error::{Error, Result};
use crate::scoring::GaussianForecast;

pub const MIN_STATION_SAMPLES: usize = 30;
pub const LOG_SIGMA_BOUND: f64 = 10.0;
const INTERCEPT_REFIT_EVERY: usize = 10;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StoppingRule {
    Aic,
    MaxIter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostConfig {
    pub max_iter: usize,
    pub step: f64,
    pub stop: StoppingRule,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            step: 0.05,
            stop: StoppingRule::Aic,
        }
    }
}

/// Location (`beta`) and log-scale (`gamma`) coefficients, intercept first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostCoefficients {
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub iterations_used: usize,
}

impl BoostCoefficients {
    pub fn zeros(p: usize) -> Self {
        Self {
            beta: vec![0.0; p + 1],
            gamma: vec![0.0; p + 1],
            iterations_used: 0,
        }
    }

    pub fn n_predictors(&self) -> usize {
        self.beta.len() - 1
    }

    pub fn nonzero(&self) -> usize {
        self.beta.iter().chain(&self.gamma).filter(|v| **v != 0.0).count()
    }

    /// Predictor indices (0-based, intercept excluded) with nonzero location
    /// and log-scale coefficients.
    pub fn selected(&self) -> (Vec<usize>, Vec<usize>) {
        let pick = |v: &[f64]| -> Vec<usize> {
            v.iter()
                .skip(1)
                .enumerate()
                .filter(|(_, c)| **c != 0.0)
                .map(|(i, _)| i)
                .collect()
        };
        (pick(&self.beta), pick(&self.gamma))
    }
}

/// Prediction from standardized predictors.
pub fn predict_emos_boost(coeffs: &BoostCoefficients, x: &[f64]) -> Result<GaussianForecast> {
    if x.len() != coeffs.n_predictors() {
        return Err(Error::DimensionMismatch {
            expected: coeffs.n_predictors(),
            found: x.len(),
        });
    }
    let lin = |c: &[f64]| c[0] + c[1..].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    let mu = lin(&coeffs.beta);
    let log_sigma = lin(&coeffs.gamma).clamp(-LOG_SIGMA_BOUND, LOG_SIGMA_BOUND);
    Ok(GaussianForecast::clamped(mu, log_sigma.exp()))
}

/// Result of boosting on one station.
#[derive(Debug, Clone, PartialEq)]
pub struct BoostFit {
    pub coefficients: BoostCoefficients,
    /// Training mean LogS, starting with the all-zero model, then one entry
    /// per accepted iteration.
    pub log_score_path: Vec<f64>,
    pub aic_path: Vec<f64>,
}

struct State {
    mu: Vec<f64>,
    log_sigma: Vec<f64>,
}

fn mean_log_score(y: &[f64], st: &State) -> f64 {
    let n = y.len() as f64;
    y.iter()
        .zip(st.mu.iter().zip(&st.log_sigma))
        .map(|(y, (m, ls))| {
            let ls = ls.clamp(-LOG_SIGMA_BOUND, LOG_SIGMA_BOUND);
            let z = (y - m) * (-ls).exp();
            HALF_LN_2PI + ls + 0.5 * z * z
        })
        .sum::<f64>()
        / n
}

fn aic(n: usize, mean_logs: f64, coeffs: &BoostCoefficients) -> f64 {
    2.0 * n as f64 * mean_logs + 2.0 * coeffs.nonzero() as f64
}

/// Closed-form refit of both intercepts given the remaining linear terms.
fn refit_intercepts(y: &[f64], st: &mut State, coeffs: &mut BoostCoefficients) {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        let w = (-2.0 * st.log_sigma[i].clamp(-LOG_SIGMA_BOUND, LOG_SIGMA_BOUND)).exp();
        num += w * (yi - (st.mu[i] - coeffs.beta[0]));
        den += w;
    }
    if den > 0.0 && num.is_finite() {
        let b0 = num / den;
        let shift = b0 - coeffs.beta[0];
        st.mu.iter_mut().for_each(|m| *m += shift);
        coeffs.beta[0] = b0;
    }

    let n = y.len() as f64;
    let scaled_sq: f64 = y
        .iter()
        .enumerate()
        .map(|(i, yi)| {
            let base = st.log_sigma[i] - coeffs.gamma[0];
            (yi - st.mu[i]).powi(2) * (-2.0 * base).exp()
        })
        .sum::<f64>()
        / n;
    if scaled_sq > 0.0 && scaled_sq.is_finite() {
        let g0 = 0.5 * scaled_sq.ln();
        let shift = g0 - coeffs.gamma[0];
        st.log_sigma.iter_mut().for_each(|l| *l += shift);
        coeffs.gamma[0] = g0;
    }
}

fn pearson(xc: &[f64], x_ss: f64, u: &[f64]) -> f64 {
    let n = u.len() as f64;
    let u_mean = u.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut u_ss = 0.0;
    for (a, b) in xc.iter().zip(u) {
        let d = b - u_mean;
        cov += a * d;
        u_ss += d * d;
    }
    if x_ss <= 0.0 || u_ss <= 0.0 {
        0.0
    } else {
        cov / (x_ss * u_ss).sqrt()
    }
}

/// Boosting on one station. `x` holds standardized predictor rows.
pub fn fit_boost_station(x: &[Vec<f64>], y: &[f64], cfg: &BoostConfig) -> Result<BoostFit> {
    let n = y.len();
    if n < MIN_STATION_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_STATION_SAMPLES,
            found: n,
        });
    }
    if x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: x.len() });
    }
    let p = x.first().map_or(0, |r| r.len());
    if x.iter().any(|r| r.len() != p) {
        return Err(Error::DimensionMismatch { expected: p, found: 0 });
    }

    // centered columns and their sums of squares
    let nf = n as f64;
    let columns: Vec<Vec<f64>> = (0..p)
        .map(|j| {
            let mean = x.iter().map(|r| r[j]).sum::<f64>() / nf;
            x.iter().map(|r| r[j] - mean).collect()
        })
        .collect();
    let col_ss: Vec<f64> = columns.iter().map(|c| c.iter().map(|v| v * v).sum()).collect();

    let mut coeffs = BoostCoefficients::zeros(p);
    let mut st = State {
        mu: vec![0.0; n],
        log_sigma: vec![0.0; n],
    };
    let mut logs = mean_log_score(y, &st);
    if !logs.is_finite() {
        return Err(Error::NonFiniteLikelihood);
    }
    let mut current_aic = aic(n, logs, &coeffs);
    let mut log_score_path = vec![logs];
    let mut aic_path = vec![current_aic];
    let mut u_mu = vec![0.0; n];
    let mut u_ls = vec![0.0; n];

    for it in 1..=cfg.max_iter {
        let mut cand = coeffs.clone();
        let mut cand_st = State {
            mu: st.mu.clone(),
            log_sigma: st.log_sigma.clone(),
        };
        if (it - 1) % INTERCEPT_REFIT_EVERY == 0 {
            refit_intercepts(y, &mut cand_st, &mut cand);
        }

        // negative LogS gradients w.r.t. mu and log sigma
        let mut mean_var = 0.0;
        for i in 0..n {
            let ls = cand_st.log_sigma[i].clamp(-LOG_SIGMA_BOUND, LOG_SIGMA_BOUND);
            let inv_var = (-2.0 * ls).exp();
            let r = y[i] - cand_st.mu[i];
            u_mu[i] = r * inv_var;
            u_ls[i] = r * r * inv_var - 1.0;
            mean_var += inv_var;
        }
        let mu_scale = nf / mean_var;

        let mut best: Option<(f64, usize, bool)> = None;
        for j in 0..p {
            for (is_scale, u) in [(false, &u_mu), (true, &u_ls)] {
                let c = pearson(&columns[j], col_ss[j], u).abs();
                if c.is_finite() && best.map_or(true, |(bc, _, _)| c > bc) {
                    best = Some((c, j, is_scale));
                }
            }
        }

        if let Some((corr, j, is_scale)) = best.filter(|b| b.0 > 0.0) {
            let u = if is_scale { &u_ls } else { &u_mu };
            let slope = columns[j].iter().zip(u.iter()).map(|(a, b)| a * b).sum::<f64>() / col_ss[j];
            let fisher = if is_scale { 0.5 } else { mu_scale };
            let delta = cfg.step * slope * fisher;
            debug_assert!(corr > 0.0);
            let target = if is_scale { &mut cand.gamma } else { &mut cand.beta };
            target[j + 1] += delta;
            let path = if is_scale { &mut cand_st.log_sigma } else { &mut cand_st.mu };
            for (v, row) in path.iter_mut().zip(x) {
                *v += delta * row[j];
            }
        }

        let new_logs = mean_log_score(y, &cand_st);
        if !new_logs.is_finite() {
            return Err(Error::NonFiniteLikelihood);
        }
        if new_logs > logs {
            // overshooting step: no further descent available at this step size
            break;
        }
        let new_aic = aic(n, new_logs, &cand);
        if cfg.stop == StoppingRule::Aic && new_aic >= current_aic {
            break;
        }
        cand.iterations_used = it;
        coeffs = cand;
        st = cand_st;
        logs = new_logs;
        current_aic = new_aic;
        log_score_path.push(logs);
        aic_path.push(current_aic);
    }

    Ok(BoostFit {
        coefficients: coeffs,
        log_score_path,
        aic_path,
    })
}

/// Per-station boosted EMOS over all non-station predictors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostModel {
    /// Candidate predictors, a sub-spec of the training spec.
    pub candidates: FeatureSpec,
    /// Column positions of the candidates within the training spec.
    pub input_indices: Vec<usize>,
    pub standardization: StandardizationStats,
    pub config: BoostConfig,
    pub stations: BTreeMap<u32, BoostCoefficients>,
}

impl BoostModel {
    pub fn standardize(&self, predictors: &[f64]) -> Vec<f64> {
        let selected: Vec<f64> = self.input_indices.iter().map(|&j| predictors[j]).collect();
        self.standardization.apply_row(&selected)
    }

    pub fn predict(&self, station_id: u32, predictors: &[f64]) -> Result<GaussianForecast> {
        let coeffs = self
            .stations
            .get(&station_id)
            .ok_or(Error::UnknownStation(station_id))?;
        predict_emos_boost(coeffs, &self.standardize(predictors))
    }
}

pub fn fit_emos_boost(train: &ForecastDataset, cfg: &BoostConfig) -> Result<BoostModel> {
    let spec = train.feature_spec();
    let input_indices = spec.non_station_indices();
    if input_indices.is_empty() {
        return Err(Error::InvalidConfig("no non-station predictors to boost over".into()));
    }
    if !(cfg.step > 0.0 && cfg.step.is_finite()) {
        return Err(Error::InvalidConfig("boosting step must be positive".into()));
    }
    let candidates = FeatureSpec::new(input_indices.iter().map(|&j| spec.names()[j].clone()))?;
    let rows: Vec<Vec<f64>> = train
        .samples()
        .iter()
        .map(|s| input_indices.iter().map(|&j| s.predictors[j]).collect())
        .collect();
    let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
    let standardization = StandardizationStats::fit(&refs, &[]).map_err(Error::Data)?;

    let mut stations = BTreeMap::new();
    for (station, idx) in train.indices_by_station() {
        if idx.is_empty() {
            continue;
        }
        let x: Vec<Vec<f64>> = idx.iter().map(|&i| standardization.apply_row(&rows[i])).collect();
        let y: Vec<f64> = idx.iter().map(|&i| train.samples()[i].observation).collect();
        let fit = fit_boost_station(&x, &y, cfg)?;
        stations.insert(station, fit.coefficients);
    }
    Ok(BoostModel {
        candidates,
        input_indices,
        standardization,
        config: *cfg,
        stations,
    })
}
