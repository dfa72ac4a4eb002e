//! Permutation feature importance.
//!
//! One seeded permutation of the validation samples is drawn and reused for
//! every feature: feature `v` of sample `i` is replaced by feature `v` of
//! sample `pi(i)` while all other features stay in place. The importance of
//! `v` is the resulting increase in mean CRPS.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::ForecastDataset;
use crate::error::{Error, Result};
use crate::models::FittedModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationPlan {
    pub seed: u64,
    pub permutation: Vec<usize>,
}

impl PermutationPlan {
    pub fn new(n: usize, seed: u64) -> Self {
        let mut permutation: Vec<usize> = (0..n).collect();
        permutation.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Self { seed, permutation }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            seed: 0,
            permutation: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.permutation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.permutation.is_empty()
    }

    pub fn is_bijection(&self) -> bool {
        let mut seen = vec![false; self.permutation.len()];
        for &i in &self.permutation {
            if i >= seen.len() || seen[i] {
                return false;
            }
            seen[i] = true;
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub model: String,
    pub features: Vec<String>,
    /// Mean CRPS increase per feature, in feature order.
    pub importance: Vec<f64>,
    pub baseline_crps: f64,
    pub seed: u64,
}

impl ImportanceReport {
    /// (feature, importance) pairs, largest increase first.
    pub fn ranked(&self) -> Vec<(&str, f64)> {
        let mut out: Vec<(&str, f64)> = self
            .features
            .iter()
            .map(String::as_str)
            .zip(self.importance.iter().copied())
            .collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("feature,importance\n");
        for (f, v) in self.ranked() {
            s.push_str(&format!("{f},{v}\n"));
        }
        s
    }

    pub fn to_text(&self) -> String {
        let width = self.features.iter().map(String::len).max().unwrap_or(7).max(7);
        let mut s = format!("{:<width$}  importance\n", "feature");
        for (f, v) in self.ranked() {
            s.push_str(&format!("{f:<width$}  {v:>10.5}\n"));
        }
        s
    }
}

pub fn permutation_importance(
    model: &FittedModel,
    valid: &ForecastDataset,
    plan: &PermutationPlan,
) -> Result<ImportanceReport> {
    if valid.feature_spec() != &model.feature_spec {
        return Err(Error::FeatureMismatch);
    }
    if plan.len() != valid.len() || !plan.is_bijection() {
        return Err(Error::InvalidConfig(format!(
            "permutation plan must be a bijection on {} samples",
            valid.len()
        )));
    }
    if valid.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, found: 0 });
    }
    let samples = valid.samples();
    let n = samples.len() as f64;
    let baseline = model.mean_crps(valid)?;
    let mut importance = Vec::with_capacity(model.feature_spec.len());
    let mut row = Vec::new();
    for v in 0..model.feature_spec.len() {
        let mut total = 0.0;
        for (i, s) in samples.iter().enumerate() {
            row.clear();
            row.extend_from_slice(&s.predictors);
            row[v] = samples[plan.permutation[i]].predictors[v];
            total += model.predict(s.station_id, &row)?.crps(s.observation);
        }
        importance.push(total / n - baseline);
    }
    Ok(ImportanceReport {
        model: model.kind.name().to_string(),
        features: model.feature_spec.names().to_vec(),
        importance,
        baseline_crps: baseline,
        seed: plan.seed,
    })
}
