//! Fully connected networks with optional station embeddings.
//!
//! Two shapes are supported: a single affine map from inputs to the two
//! distribution parameters (the FCN family) and one ReLU hidden layer
//! (the NN family). Station embeddings are learned vectors appended to the
//! inputs. Outputs are read as mu = out_0 and sigma = max(|out_1|, floor), and
//! training minimizes the closed-form Gaussian CRPS with Adam.
//!
//! All parameters live in one flat vector. The layout is, in order: the
//! dense weights (row-major, one row per output unit), the biases of the
//! same layer, the output layer when a hidden layer exists, and finally the
//! S x n_emb embedding matrix.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{mean_std, FeatureSpec, ForecastDataset, StandardizationStats, MIN_SCALE};
use crate::emos::t2m_indices;
use crate::error::{Error, Result};
use crate::scoring::{crps_normal_clamped, GaussianForecast};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;
const EMBEDDING_INIT: f64 = 0.05;
const SIGMA_BIAS_INIT: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    Fcn,
    FcnAux,
    FcnEmb,
    FcnAuxEmb,
    NnAux,
    NnAuxEmb,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Fcn,
        Variant::FcnAux,
        Variant::FcnEmb,
        Variant::FcnAuxEmb,
        Variant::NnAux,
        Variant::NnAuxEmb,
    ];

    /// Full predictor vector as input instead of t2m mean and spread.
    pub fn uses_aux(self) -> bool {
        matches!(self, Variant::FcnAux | Variant::FcnAuxEmb | Variant::NnAux | Variant::NnAuxEmb)
    }

    pub fn uses_embedding(self) -> bool {
        matches!(self, Variant::FcnEmb | Variant::FcnAuxEmb | Variant::NnAuxEmb)
    }

    pub fn has_hidden_layer(self) -> bool {
        matches!(self, Variant::NnAux | Variant::NnAuxEmb)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Fcn => "fcn",
            Variant::FcnAux => "fcn-aux",
            Variant::FcnEmb => "fcn-emb",
            Variant::FcnAuxEmb => "fcn-aux-emb",
            Variant::NnAux => "nn-aux",
            Variant::NnAuxEmb => "nn-aux-emb",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownModel(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub variant: Variant,
    /// Zero for the FCN family.
    pub hidden_nodes: usize,
    pub n_emb: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub run_count: usize,
    pub seed: u64,
    pub early_stop_fraction: f64,
    pub patience: usize,
}

impl NetworkConfig {
    /// Defaults sized for a laptop-scale run.
    pub fn desk(variant: Variant) -> Self {
        Self {
            variant,
            hidden_nodes: if variant.has_hidden_layer() { 32 } else { 0 },
            n_emb: if variant.uses_embedding() { 2 } else { 0 },
            epochs: 30,
            learning_rate: 0.01,
            batch_size: 256,
            run_count: 10,
            seed: 1,
            early_stop_fraction: 0.2,
            patience: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.variant;
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if v.has_hidden_layer() && self.hidden_nodes == 0 {
            return bad(format!("{v} needs at least one hidden node"));
        }
        if !v.has_hidden_layer() && self.hidden_nodes != 0 {
            return bad(format!("{v} has no hidden layer; hidden_nodes must be 0"));
        }
        if v.uses_embedding() && self.n_emb == 0 {
            return bad(format!("{v} needs n_emb >= 1"));
        }
        if !v.uses_embedding() && self.n_emb != 0 {
            return bad(format!("{v} has no embedding; n_emb must be 0"));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.run_count == 0 {
            return bad("epochs, batch_size and run_count must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(self.early_stop_fraction > 0.0 && self.early_stop_fraction < 1.0) {
            return bad(format!("early_stop_fraction must lie in (0, 1), got {}", self.early_stop_fraction));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub n_inputs: usize,
    pub hidden: usize,
    pub n_emb: usize,
    pub n_stations: usize,
}

impl Architecture {
    /// Width of the concatenated input (predictors then embedding).
    pub fn width(&self) -> usize {
        self.n_inputs + self.n_emb
    }

    fn dense_len(&self) -> usize {
        let d = self.width();
        if self.hidden == 0 {
            2 * d + 2
        } else {
            self.hidden * d + self.hidden + 2 * self.hidden + 2
        }
    }

    fn embedding_offset(&self) -> usize {
        self.dense_len()
    }

    pub fn param_count(&self) -> usize {
        self.dense_len() + self.n_stations * self.n_emb
    }
}

/// Number of trainable parameters of a variant with `p` predictors in the
/// full set and `stations` embedded stations.
pub fn param_count(variant: Variant, p: usize, hidden: usize, n_emb: usize, stations: usize) -> usize {
    Architecture {
        n_inputs: if variant.uses_aux() { p } else { 2 },
        hidden: if variant.has_hidden_layer() { hidden } else { 0 },
        n_emb: if variant.uses_embedding() { n_emb } else { 0 },
        n_stations: if variant.uses_embedding() { stations } else { 0 },
    }
    .param_count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub arch: Architecture,
    /// Station id of each embedding row, ascending.
    pub station_ids: Vec<u32>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Scratch {
    u: Vec<f64>,
    pre: Vec<f64>,
    act: Vec<f64>,
    du: Vec<f64>,
}

impl Scratch {
    fn new(arch: &Architecture) -> Self {
        Self {
            u: vec![0.0; arch.width()],
            pre: vec![0.0; arch.hidden],
            act: vec![0.0; arch.hidden],
            du: vec![0.0; arch.n_emb],
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl NetworkParams {
    pub fn zeros(arch: Architecture, station_ids: Vec<u32>) -> Self {
        let mut station_ids = station_ids;
        station_ids.sort_unstable();
        station_ids.dedup();
        let arch = Architecture {
            n_stations: if arch.n_emb == 0 { 0 } else { station_ids.len() },
            ..arch
        };
        let station_ids = if arch.n_emb == 0 { Vec::new() } else { station_ids };
        Self {
            values: vec![0.0; arch.param_count()],
            arch,
            station_ids,
        }
    }

    /// Weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)), embeddings U(-0.05, 0.05),
    /// biases zero except the sigma output bias.
    pub fn init<R: Rng>(arch: Architecture, station_ids: Vec<u32>, rng: &mut R) -> Self {
        let mut p = Self::zeros(arch, station_ids);
        let a = p.arch;
        let d = a.width();
        let v = &mut p.values;
        let mut fill = |v: &mut [f64], bound: f64| v.iter_mut().for_each(|w| *w = rng.gen_range(-bound..bound));
        if a.hidden == 0 {
            fill(&mut v[..2 * d], 1.0 / (d as f64).sqrt());
            v[2 * d + 1] = SIGMA_BIAS_INIT;
        } else {
            let h = a.hidden;
            fill(&mut v[..h * d], 1.0 / (d as f64).sqrt());
            let w2 = h * d + h;
            fill(&mut v[w2..w2 + 2 * h], 1.0 / (h as f64).sqrt());
            v[w2 + 2 * h + 1] = SIGMA_BIAS_INIT;
        }
        let e = a.embedding_offset();
        fill(&mut v[e..], EMBEDDING_INIT);
        p
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Embedding row of `station_id`; `None` when the network has no embedding.
    pub fn embedding_row(&self, station_id: u32) -> Result<Option<usize>> {
        if self.arch.n_emb == 0 {
            return Ok(None);
        }
        self.station_ids
            .binary_search(&station_id)
            .map(Some)
            .map_err(|_| Error::UnknownStation(station_id))
    }

    pub fn embedding(&self, row: usize) -> &[f64] {
        let k = self.arch.n_emb;
        &self.values[self.arch.embedding_offset() + row * k..][..k]
    }

    /// Raw outputs (mu, sigma_raw); fills the scratch activations.
    fn outputs(&self, x: &[f64], row: Option<usize>, s: &mut Scratch) -> (f64, f64) {
        let a = &self.arch;
        let d = a.width();
        let v = &self.values;
        s.u[..a.n_inputs].copy_from_slice(x);
        if let Some(r) = row {
            s.u[a.n_inputs..].copy_from_slice(self.embedding(r));
        }
        if a.hidden == 0 {
            (dot(&v[..d], &s.u) + v[2 * d], dot(&v[d..2 * d], &s.u) + v[2 * d + 1])
        } else {
            let h = a.hidden;
            let (w1, rest) = v.split_at(h * d);
            let (b1, rest) = rest.split_at(h);
            for k in 0..h {
                let z = dot(&w1[k * d..(k + 1) * d], &s.u) + b1[k];
                s.pre[k] = z;
                s.act[k] = z.max(0.0);
            }
            (dot(&rest[..h], &s.act) + rest[2 * h], dot(&rest[h..2 * h], &s.act) + rest[2 * h + 1])
        }
    }

    /// Adds the gradient of the sample CRPS to `grad` and returns the CRPS.
    fn accumulate(&self, x: &[f64], row: Option<usize>, y: f64, s: &mut Scratch, grad: &mut [f64]) -> f64 {
        let (mu, raw) = self.outputs(x, row, s);
        let (loss, g_mu, g_sigma) = crps_normal_clamped(mu, raw.abs(), y);
        let g_raw = if raw >= 0.0 { g_sigma } else { -g_sigma };
        let a = &self.arch;
        let d = a.width();
        let n_in = a.n_inputs;
        let v = &self.values;
        s.du.iter_mut().for_each(|g| *g = 0.0);

        if a.hidden == 0 {
            for j in 0..d {
                grad[j] += g_mu * s.u[j];
                grad[d + j] += g_raw * s.u[j];
            }
            grad[2 * d] += g_mu;
            grad[2 * d + 1] += g_raw;
            if row.is_some() {
                for (e, du) in s.du.iter_mut().enumerate() {
                    *du = g_mu * v[n_in + e] + g_raw * v[d + n_in + e];
                }
            }
        } else {
            let h = a.hidden;
            let w2 = h * d + h;
            for k in 0..h {
                grad[w2 + k] += g_mu * s.act[k];
                grad[w2 + h + k] += g_raw * s.act[k];
            }
            grad[w2 + 2 * h] += g_mu;
            grad[w2 + 2 * h + 1] += g_raw;
            for k in 0..h {
                if s.pre[k] <= 0.0 {
                    continue;
                }
                let da = g_mu * v[w2 + k] + g_raw * v[w2 + h + k];
                let row_w = &v[k * d..(k + 1) * d];
                for (g, u) in grad[k * d..(k + 1) * d].iter_mut().zip(&s.u) {
                    *g += da * u;
                }
                grad[h * d + k] += da;
                if row.is_some() {
                    for (e, du) in s.du.iter_mut().enumerate() {
                        *du += da * row_w[n_in + e];
                    }
                }
            }
        }
        if let Some(r) = row {
            let off = a.embedding_offset() + r * a.n_emb;
            for (g, du) in grad[off..off + a.n_emb].iter_mut().zip(&s.du) {
                *g += du;
            }
        }
        loss
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.arch.n_inputs {
            return Err(Error::DimensionMismatch {
                expected: self.arch.n_inputs,
                found: x.len(),
            });
        }
        Ok(())
    }
}

/// Predictive distribution for standardized inputs `x`.
pub fn forward(params: &NetworkParams, x: &[f64], station_id: u32) -> Result<GaussianForecast> {
    params.check_input(x)?;
    let row = params.embedding_row(station_id)?;
    let (mu, raw) = params.outputs(x, row, &mut Scratch::new(&params.arch));
    Ok(GaussianForecast::clamped(mu, raw.abs()))
}

/// Mean batch CRPS and its gradient with respect to every parameter.
pub fn backward(params: &NetworkParams, xs: &[&[f64]], stations: &[u32], ys: &[f64]) -> Result<(f64, Vec<f64>)> {
    if xs.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, found: 0 });
    }
    if stations.len() != xs.len() || ys.len() != xs.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            found: stations.len().min(ys.len()),
        });
    }
    let mut grad = vec![0.0; params.len()];
    let mut s = Scratch::new(&params.arch);
    let mut loss = 0.0;
    for ((x, &station), &y) in xs.iter().zip(stations).zip(ys) {
        params.check_input(x)?;
        let row = params.embedding_row(station)?;
        loss += params.accumulate(x, row, y, &mut s, &mut grad);
    }
    let n = xs.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((loss / n, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::ShapeMismatch {
            params: params.len(),
            grads: grads.len(),
        });
    }
    state.t += 1;
    let c1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
    let c2 = 1.0 - ADAM_BETA2.powi(state.t as i32);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPSILON);
    }
    Ok(())
}

/// Averages (mu, sigma) over the runs.
pub fn predict_ensemble(runs: &[NetworkParams], x: &[f64], station_id: u32) -> Result<GaussianForecast> {
    if runs.is_empty() {
        return Err(Error::InvalidConfig("empty network ensemble".into()));
    }
    let mut mu = 0.0;
    let mut sigma = 0.0;
    for p in runs {
        let f = forward(p, x, station_id)?;
        mu += f.mu();
        sigma += f.sigma();
    }
    let n = runs.len() as f64;
    Ok(GaussianForecast::clamped(mu / n, sigma / n))
}

/// Standardized training rows in one contiguous buffer.
struct Prepared {
    x: Vec<f64>,
    rows: Vec<Option<usize>>,
    y: Vec<f64>,
    d: usize,
}

impl Prepared {
    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    fn mean_crps(&self, params: &NetworkParams, idx: &[usize], s: &mut Scratch) -> f64 {
        let total: f64 = idx
            .iter()
            .map(|&i| {
                let (mu, raw) = params.outputs(self.row(i), self.rows[i], s);
                crps_normal_clamped(mu, raw.abs(), self.y[i]).0
            })
            .sum();
        total / idx.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub seed: u64,
    /// Mean holdout CRPS after each epoch, in standardized target units.
    pub holdout_crps: Vec<f64>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

fn train_run(cfg: &NetworkConfig, arch: Architecture, station_ids: &[u32], data: &Prepared, seed: u64) -> Result<(NetworkParams, RunLog)> {
    let n = data.y.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_hold = ((n as f64 * cfg.early_stop_fraction).round() as usize).clamp(1, n - 1);
    let (hold, fit) = order.split_at(n_hold);
    let hold = hold.to_vec();
    let mut fit = fit.to_vec();

    let mut params = NetworkParams::init(arch, station_ids.to_vec(), &mut rng);
    let mut adam = AdamState::new(params.len());
    let mut grad = vec![0.0; params.len()];
    let mut s = Scratch::new(&params.arch);
    let mut best = (f64::INFINITY, params.clone(), 0);
    let mut path = Vec::new();
    let mut stale = 0;

    for epoch in 1..=cfg.epochs {
        fit.shuffle(&mut rng);
        for (b, batch) in fit.chunks(cfg.batch_size).enumerate() {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut loss = 0.0;
            for &i in batch {
                loss += params.accumulate(data.row(i), data.rows[i], data.y[i], &mut s, &mut grad);
            }
            let k = batch.len() as f64;
            grad.iter_mut().for_each(|g| *g /= k);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::DivergedTraining { epoch, batch: b });
            }
            adam_step(&mut params.values, &grad, &mut adam, cfg.learning_rate)?;
            if params.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::DivergedTraining { epoch, batch: b });
            }
        }
        let score = data.mean_crps(&params, &hold, &mut s);
        if !score.is_finite() {
            return Err(Error::DivergedTraining { epoch, batch: fit.len().div_ceil(cfg.batch_size) });
        }
        path.push(score);
        if score < best.0 {
            best = (score, params.clone(), epoch);
            stale = 0;
        } else {
            stale += 1;
        }
        log::debug!("seed {seed} epoch {epoch}: holdout CRPS {score:.5}");
        if stale >= cfg.patience {
            break;
        }
    }
    Ok((
        best.1,
        RunLog {
            seed,
            holdout_crps: path,
            best_epoch: best.2,
        },
    ))
}

/// Trained network runs together with the input preprocessing they expect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub config: NetworkConfig,
    pub training_spec: FeatureSpec,
    pub input_indices: Vec<usize>,
    pub standardization: StandardizationStats,
    /// Observations are modelled as target_mean + target_scale * output.
    pub target_mean: f64,
    pub target_scale: f64,
    pub runs: Vec<NetworkParams>,
    pub logs: Vec<RunLog>,
}

impl NetworkModel {
    pub fn architecture(&self) -> Architecture {
        self.runs[0].arch
    }

    pub fn parameter_count(&self) -> usize {
        self.architecture().param_count()
    }

    pub fn standardize(&self, predictors: &[f64]) -> Result<Vec<f64>> {
        if predictors.len() != self.training_spec.len() {
            return Err(Error::DimensionMismatch {
                expected: self.training_spec.len(),
                found: predictors.len(),
            });
        }
        let selected: Vec<f64> = self.input_indices.iter().map(|&j| predictors[j]).collect();
        Ok(self.standardization.apply_row(&selected))
    }

    pub fn predict(&self, station_id: u32, predictors: &[f64]) -> Result<GaussianForecast> {
        let x = self.standardize(predictors)?;
        let f = predict_ensemble(&self.runs, &x, station_id)?;
        Ok(GaussianForecast::clamped(
            self.target_mean + self.target_scale * f.mu(),
            self.target_scale * f.sigma(),
        ))
    }
}

/// Single run seeded with `cfg.seed`.
pub fn train(cfg: &NetworkConfig, train: &ForecastDataset) -> Result<NetworkModel> {
    fit(cfg, train, &[cfg.seed])
}

/// `cfg.run_count` runs seeded with `cfg.seed + i`.
pub fn train_ensemble(cfg: &NetworkConfig, train: &ForecastDataset) -> Result<NetworkModel> {
    let seeds: Vec<u64> = (0..cfg.run_count as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
    fit(cfg, train, &seeds)
}

fn fit(cfg: &NetworkConfig, train: &ForecastDataset, seeds: &[u64]) -> Result<NetworkModel> {
    cfg.validate()?;
    let needed = 10 * cfg.batch_size;
    if train.len() < needed {
        return Err(Error::TooFewSamples {
            needed,
            found: train.len(),
        });
    }
    let spec = train.feature_spec();
    let input_indices: Vec<usize> = if cfg.variant.uses_aux() {
        (0..spec.len()).collect()
    } else {
        let (m, s) = t2m_indices(spec)?;
        vec![m, s]
    };
    let selected: Vec<Vec<f64>> = train
        .samples()
        .iter()
        .map(|s| input_indices.iter().map(|&j| s.predictors[j]).collect())
        .collect();
    let refs: Vec<&[f64]> = selected.iter().map(|r| r.as_slice()).collect();
    let standardization = StandardizationStats::fit(&refs, &[])?;

    let (target_mean, sd) = mean_std(&train.observations());
    let target_scale = if sd < MIN_SCALE { 1.0 } else { sd };

    let station_ids: Vec<u32> = train.indices_by_station().into_iter().map(|(s, _)| s).collect();
    let arch = Architecture {
        n_inputs: input_indices.len(),
        hidden: cfg.hidden_nodes,
        n_emb: cfg.n_emb,
        n_stations: if cfg.n_emb == 0 { 0 } else { station_ids.len() },
    };
    let rows = train
        .samples()
        .iter()
        .map(|s| {
            if cfg.n_emb == 0 {
                None
            } else {
                station_ids.binary_search(&s.station_id).ok()
            }
        })
        .collect();
    let mut x = Vec::with_capacity(selected.len() * arch.n_inputs);
    for r in &selected {
        x.extend(standardization.apply_row(r));
    }
    let data = Prepared {
        x,
        rows,
        y: train
            .samples()
            .iter()
            .map(|s| (s.observation - target_mean) / target_scale)
            .collect(),
        d: arch.n_inputs,
    };

    let results = run_all(cfg, arch, &station_ids, &data, seeds);
    let mut runs = Vec::with_capacity(seeds.len());
    let mut logs = Vec::with_capacity(seeds.len());
    for r in results {
        let (p, l) = r?;
        runs.push(p);
        logs.push(l);
    }
    Ok(NetworkModel {
        config: *cfg,
        training_spec: spec.clone(),
        input_indices,
        standardization,
        target_mean,
        target_scale,
        runs,
        logs,
    })
}

/// Runs are independent, so they may use separate threads; each is
/// deterministic in its own seed.
fn run_all(cfg: &NetworkConfig, arch: Architecture, station_ids: &[u32], data: &Prepared, seeds: &[u64]) -> Vec<Result<(NetworkParams, RunLog)>> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(seeds.len());
    if threads <= 1 {
        return seeds.iter().map(|&s| train_run(cfg, arch, station_ids, data, s)).collect();
    }
    let chunk = seeds.len().div_ceil(threads);
    std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|&s| train_run(cfg, arch, station_ids, data, s))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("training thread panicked"))
            .collect()
    })
}
