//! One entry point for every model family: fit by name, predict from the
//! raw predictor vector of a sample.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::boosting::{fit_emos_boost, BoostConfig, BoostModel};
use crate::data::{FeatureSpec, ForecastDataset};
use crate::emos::{fit_emos, t2m_indices, EmosModel, EmosScope};
use crate::error::{Error, Result};
use crate::network::{train_ensemble, NetworkConfig, NetworkModel, Variant};
use crate::qrf::{fit_qrf, QrfConfig, QrfModel, DEFAULT_QUANTILE_COUNT};
use crate::scoring::{equally_spaced_levels, GaussianForecast, QuantileForecast};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    EmosGlobal,
    EmosLocal,
    EmosLocalBoost,
    Qrf,
    Network(Variant),
}

impl ModelKind {
    pub const ALL: [ModelKind; 10] = [
        ModelKind::EmosGlobal,
        ModelKind::EmosLocal,
        ModelKind::EmosLocalBoost,
        ModelKind::Qrf,
        ModelKind::Network(Variant::Fcn),
        ModelKind::Network(Variant::FcnAux),
        ModelKind::Network(Variant::FcnEmb),
        ModelKind::Network(Variant::FcnAuxEmb),
        ModelKind::Network(Variant::NnAux),
        ModelKind::Network(Variant::NnAuxEmb),
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::EmosGlobal => "emos-gl",
            ModelKind::EmosLocal => "emos-loc",
            ModelKind::EmosLocalBoost => "emos-loc-bst",
            ModelKind::Qrf => "qrf",
            ModelKind::Network(v) => v.name(),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownModel(s.to_string()))
    }
}

/// Network hyperparameters shared by all six variants; hidden width and
/// embedding size are dropped for variants without them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkSettings {
    pub hidden_nodes: usize,
    pub n_emb: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub run_count: usize,
    pub early_stop_fraction: f64,
    pub patience: usize,
}

impl Default for NetworkSettings {
    fn default() -> Self {
        let d = NetworkConfig::desk(Variant::NnAuxEmb);
        Self {
            hidden_nodes: d.hidden_nodes,
            n_emb: d.n_emb,
            epochs: d.epochs,
            learning_rate: d.learning_rate,
            batch_size: d.batch_size,
            run_count: d.run_count,
            early_stop_fraction: d.early_stop_fraction,
            patience: d.patience,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    pub seed: u64,
    pub boost: BoostConfig,
    pub qrf: QrfConfig,
    pub quantile_count: usize,
    pub network: NetworkSettings,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            seed: 1,
            boost: BoostConfig::default(),
            qrf: QrfConfig::default(),
            quantile_count: DEFAULT_QUANTILE_COUNT,
            network: NetworkSettings::default(),
        }
    }
}

impl FitSettings {
    pub fn network_config(&self, variant: Variant) -> NetworkConfig {
        let n = &self.network;
        NetworkConfig {
            variant,
            hidden_nodes: if variant.has_hidden_layer() { n.hidden_nodes } else { 0 },
            n_emb: if variant.uses_embedding() { n.n_emb } else { 0 },
            epochs: n.epochs,
            learning_rate: n.learning_rate,
            batch_size: n.batch_size,
            run_count: n.run_count,
            seed: self.seed,
            early_stop_fraction: n.early_stop_fraction,
            patience: n.patience,
        }
    }

    pub fn qrf_config(&self) -> QrfConfig {
        QrfConfig {
            seed: self.seed,
            ..self.qrf
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Prediction {
    Gaussian(GaussianForecast),
    Quantiles(QuantileForecast),
}

impl Prediction {
    pub fn crps(&self, y: f64) -> f64 {
        match self {
            Prediction::Gaussian(f) => f.crps(y),
            Prediction::Quantiles(q) => q.crps(y),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Prediction::Gaussian(f) => f.mu(),
            Prediction::Quantiles(q) => q.values().iter().sum::<f64>() / q.len() as f64,
        }
    }

    /// Standard deviation; for quantiles, of the quantile values.
    pub fn spread(&self) -> f64 {
        match self {
            Prediction::Gaussian(f) => f.sigma(),
            Prediction::Quantiles(q) => crate::data::mean_std(q.values()).1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelBody {
    Emos {
        model: EmosModel,
        mean_index: usize,
        sd_index: usize,
    },
    Boost(BoostModel),
    Qrf(QrfModel),
    Network(NetworkModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub kind: ModelKind,
    pub feature_spec: FeatureSpec,
    pub body: ModelBody,
}

impl FittedModel {
    pub fn predict(&self, station_id: u32, predictors: &[f64]) -> Result<Prediction> {
        if predictors.len() != self.feature_spec.len() {
            return Err(Error::DimensionMismatch {
                expected: self.feature_spec.len(),
                found: predictors.len(),
            });
        }
        Ok(match &self.body {
            ModelBody::Emos { model, mean_index, sd_index } => {
                Prediction::Gaussian(model.predict(station_id, predictors[*mean_index], predictors[*sd_index]))
            }
            ModelBody::Boost(m) => Prediction::Gaussian(m.predict(station_id, predictors)?),
            ModelBody::Qrf(m) => Prediction::Quantiles(m.predict(station_id, predictors)?),
            ModelBody::Network(m) => Prediction::Gaussian(m.predict(station_id, predictors)?),
        })
    }

    /// Predictions for every sample of `ds`, in sample order.
    pub fn predict_dataset(&self, ds: &ForecastDataset) -> Result<Vec<Prediction>> {
        if ds.feature_spec() != &self.feature_spec {
            return Err(Error::FeatureMismatch);
        }
        ds.samples()
            .iter()
            .map(|s| self.predict(s.station_id, &s.predictors))
            .collect()
    }

    pub fn mean_crps(&self, ds: &ForecastDataset) -> Result<f64> {
        let preds = self.predict_dataset(ds)?;
        let total: f64 = preds
            .iter()
            .zip(ds.samples())
            .map(|(p, s)| p.crps(s.observation))
            .sum();
        Ok(total / ds.len().max(1) as f64)
    }

    /// Number of stored model parameters (coefficients, leaf values excluded
    /// for forests, which report their node count instead).
    pub fn parameter_count(&self) -> usize {
        match &self.body {
            ModelBody::Emos { model, .. } => model.parameter_count(),
            ModelBody::Boost(m) => m.stations.values().map(|c| 2 * (c.n_predictors() + 1)).sum(),
            ModelBody::Qrf(m) => m
                .stations
                .values()
                .flat_map(|f| f.trees.iter())
                .map(|t| t.nodes.len())
                .sum(),
            ModelBody::Network(m) => m.parameter_count() * m.runs.len(),
        }
    }
}

pub fn fit_model(kind: ModelKind, train: &ForecastDataset, settings: &FitSettings) -> Result<FittedModel> {
    let spec = train.feature_spec().clone();
    let body = match kind {
        ModelKind::EmosGlobal | ModelKind::EmosLocal => {
            let scope = if kind == ModelKind::EmosGlobal {
                EmosScope::Global
            } else {
                EmosScope::Local
            };
            let (mean_index, sd_index) = t2m_indices(&spec)?;
            ModelBody::Emos {
                model: fit_emos(train, scope)?,
                mean_index,
                sd_index,
            }
        }
        ModelKind::EmosLocalBoost => ModelBody::Boost(fit_emos_boost(train, &settings.boost)?),
        ModelKind::Qrf => ModelBody::Qrf(fit_qrf(
            train,
            &settings.qrf_config(),
            equally_spaced_levels(settings.quantile_count),
        )?),
        ModelKind::Network(v) => ModelBody::Network(train_ensemble(&settings.network_config(v), train)?),
    };
    Ok(FittedModel {
        kind,
        feature_spec: spec,
        body,
    })
}
