//! Ensemble model output statistics with minimum-CRPS estimation.
//!
//! The predictive distribution is N(a + b·m, (c + d·s)^2) where m and s are
//! the raw t2m ensemble mean and standard deviation. Coefficients are
//! estimated once over a fixed training set, either pooled over all stations
//! (global) or per station (local).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{FeatureSpec, ForecastDataset, T2M_MEAN, T2M_STD};
use crate::error::{Error, Result};
use crate::scoring::{crps_normal_clamped, GaussianForecast, SIGMA_FLOOR};

pub const MIN_GLOBAL_SAMPLES: usize = 50;
pub const MIN_LOCAL_SAMPLES: usize = 30;

const GRAD_TOL: f64 = 1e-6;
const MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmosCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl EmosCoefficients {
    /// Raw ensemble taken at face value: N(m, s^2).
    pub const IDENTITY: Self = Self { a: 0.0, b: 1.0, c: 0.0, d: 1.0 };

    fn to_array(self) -> [f64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    fn from_array(v: [f64; 4]) -> Self {
        Self { a: v[0], b: v[1], c: v[2], d: v[3] }
    }
}

pub fn predict_emos(coeffs: &EmosCoefficients, x_t2m_mean: f64, x_t2m_sd: f64) -> GaussianForecast {
    let mu = coeffs.a + coeffs.b * x_t2m_mean;
    let sigma = (coeffs.c + coeffs.d * x_t2m_sd).max(SIGMA_FLOOR);
    GaussianForecast::clamped(mu, sigma)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EmosScope {
    Global,
    Local,
}

/// Outcome of a single minimum-CRPS fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmosFit {
    pub coefficients: EmosCoefficients,
    pub mean_crps: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    /// False when the iteration cap was hit before the gradient tolerance.
    pub converged: bool,
}

/// Mean CRPS over the training triples and its gradient in (a, b, c, d).
pub fn emos_objective(coeffs: &EmosCoefficients, data: &[(f64, f64, f64)]) -> (f64, [f64; 4]) {
    let n = data.len() as f64;
    let mut loss = 0.0;
    let mut grad = [0.0; 4];
    for &(m, s, y) in data {
        let mu = coeffs.a + coeffs.b * m;
        let sigma = coeffs.c + coeffs.d * s;
        let (v, dmu, dsigma) = crps_normal_clamped(mu, sigma, y);
        loss += v;
        grad[0] += dmu;
        grad[1] += dmu * m;
        grad[2] += dsigma;
        grad[3] += dsigma * s;
    }
    grad.iter_mut().for_each(|g| *g /= n);
    (loss / n, grad)
}

fn inf_norm(v: &[f64; 4]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Minimum-CRPS fit on (ensemble mean, ensemble sd, observation) triples,
/// by BFGS with Armijo backtracking from the identity coefficients.
pub fn fit_emos_triples(data: &[(f64, f64, f64)]) -> Result<EmosFit> {
    if data.len() < MIN_GLOBAL_SAMPLES.min(MIN_LOCAL_SAMPLES) {
        return Err(Error::TooFewSamples {
            needed: MIN_LOCAL_SAMPLES,
            found: data.len(),
        });
    }
    // canonical order makes the floating-point sums independent of input order
    let mut data = data.to_vec();
    data.sort_by(|p, q| {
        p.2.total_cmp(&q.2)
            .then(p.0.total_cmp(&q.0))
            .then(p.1.total_cmp(&q.1))
    });

    let mut x = EmosCoefficients::IDENTITY.to_array();
    let (mut f, mut g) = emos_objective(&EmosCoefficients::IDENTITY, &data);
    let mut h_inv = [[0.0; 4]; 4];
    for (i, row) in h_inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let mut iterations = 0;
    while iterations < MAX_ITER && inf_norm(&g) >= GRAD_TOL {
        iterations += 1;
        let mut dir = [0.0; 4];
        for i in 0..4 {
            dir[i] = -(0..4).map(|j| h_inv[i][j] * g[j]).sum::<f64>();
        }
        let mut slope: f64 = dir.iter().zip(&g).map(|(d, g)| d * g).sum();
        if slope >= 0.0 {
            // curvature information went stale; restart from steepest descent
            h_inv = [[0.0; 4]; 4];
            for i in 0..4 {
                h_inv[i][i] = 1.0;
                dir[i] = -g[i];
            }
            slope = -g.iter().map(|v| v * v).sum::<f64>();
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: [f64; 4] = std::array::from_fn(|i| x[i] + step * dir[i]);
            let (ft, gt) = emos_objective(&EmosCoefficients::from_array(trial), &data);
            if ft.is_finite() && ft <= f + 1e-4 * step * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            break;
        };

        let s: [f64; 4] = std::array::from_fn(|i| x_new[i] - x[i]);
        let yv: [f64; 4] = std::array::from_fn(|i| g_new[i] - g[i]);
        let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
        if sy > 1e-12 {
            let hy: [f64; 4] = std::array::from_fn(|i| (0..4).map(|j| h_inv[i][j] * yv[j]).sum());
            let yhy: f64 = yv.iter().zip(&hy).map(|(a, b)| a * b).sum();
            let rho = 1.0 / sy;
            for i in 0..4 {
                for j in 0..4 {
                    h_inv[i][j] += (1.0 + rho * yhy) * rho * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
        }
        x = x_new;
        f = f_new;
        g = g_new;
    }

    let gradient_norm = inf_norm(&g);
    Ok(EmosFit {
        coefficients: EmosCoefficients::from_array(x),
        mean_crps: f,
        iterations,
        gradient_norm,
        converged: gradient_norm < GRAD_TOL,
    })
}

/// Fitted global or local EMOS model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmosModel {
    pub scope: EmosScope,
    pub global: EmosCoefficients,
    pub local: BTreeMap<u32, EmosCoefficients>,
    /// Stations with too little data for a local fit; they use `global`.
    pub fallback_stations: Vec<u32>,
    /// Stations whose fit stopped at the iteration cap.
    pub unconverged_stations: Vec<u32>,
    pub global_converged: bool,
}

impl EmosModel {
    pub fn coefficients_for(&self, station_id: u32) -> &EmosCoefficients {
        match self.scope {
            EmosScope::Global => &self.global,
            EmosScope::Local => self.local.get(&station_id).unwrap_or(&self.global),
        }
    }

    pub fn predict(&self, station_id: u32, t2m_mean: f64, t2m_sd: f64) -> GaussianForecast {
        predict_emos(self.coefficients_for(station_id), t2m_mean, t2m_sd)
    }

    /// Number of stored coefficient values.
    pub fn parameter_count(&self) -> usize {
        match self.scope {
            EmosScope::Global => 4,
            EmosScope::Local => 4 * self.local.len(),
        }
    }
}

pub(crate) fn t2m_indices(spec: &FeatureSpec) -> Result<(usize, usize)> {
    let m = spec
        .index_of(T2M_MEAN)
        .ok_or_else(|| Error::Data(crate::data::DataError::MissingColumn(T2M_MEAN.into())))?;
    let s = spec
        .index_of(T2M_STD)
        .ok_or_else(|| Error::Data(crate::data::DataError::MissingColumn(T2M_STD.into())))?;
    Ok((m, s))
}

fn triples(ds: &ForecastDataset, indices: impl Iterator<Item = usize>, im: usize, is: usize) -> Vec<(f64, f64, f64)> {
    indices
        .map(|i| {
            let s = &ds.samples()[i];
            (s.predictors[im], s.predictors[is], s.observation)
        })
        .collect()
}

pub fn fit_emos(train: &ForecastDataset, scope: EmosScope) -> Result<EmosModel> {
    let (im, is) = t2m_indices(train.feature_spec())?;
    if train.len() < MIN_GLOBAL_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_GLOBAL_SAMPLES,
            found: train.len(),
        });
    }
    let global_fit = fit_emos_triples(&triples(train, 0..train.len(), im, is))?;
    if !global_fit.converged {
        log::warn!("global EMOS fit stopped at the iteration cap (|grad| = {:.2e})", global_fit.gradient_norm);
    }
    let mut model = EmosModel {
        scope,
        global: global_fit.coefficients,
        local: BTreeMap::new(),
        fallback_stations: Vec::new(),
        unconverged_stations: Vec::new(),
        global_converged: global_fit.converged,
    };
    if scope == EmosScope::Local {
        for (station, idx) in train.indices_by_station() {
            if idx.len() < MIN_LOCAL_SAMPLES {
                log::warn!("station {station}: {} samples, using global EMOS coefficients", idx.len());
                model.fallback_stations.push(station);
                continue;
            }
            let fit = fit_emos_triples(&triples(train, idx.into_iter(), im, is))?;
            if !fit.converged {
                model.unconverged_stations.push(station);
            }
            model.local.insert(station, fit.coefficients);
        }
    }
    Ok(model)
}
