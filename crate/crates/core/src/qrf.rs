//! Local quantile regression forests.
//!
//! Each station gets its own forest of CART trees grown on bootstrap
//! resamples with variance-reduction splits over a random feature subset.
//! Leaves keep their training observations; the predictive CDF at a new
//! input is the average of the leaf empirical CDFs it reaches, and quantiles
//! are read off with the left-continuous generalized inverse.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{FeatureSpec, ForecastDataset};
use crate::error::{Error, Result};
use crate::scoring::{validate_levels, QuantileForecast};

/// Default number of quantile levels k/52, k = 1..51.
pub const DEFAULT_QUANTILE_COUNT: usize = 51;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QrfConfig {
    pub n_trees: usize,
    pub min_leaf_size: usize,
    /// Features drawn per split; `None` means ceil(p / 2).
    pub mtry: Option<usize>,
    pub seed: u64,
    pub bootstrap: bool,
    /// Depth limit; `None` grows until the leaf-size rule stops.
    pub max_depth: Option<usize>,
}

impl Default for QrfConfig {
    fn default() -> Self {
        Self {
            n_trees: 200,
            min_leaf_size: 10,
            mtry: None,
            seed: 1,
            bootstrap: true,
            max_depth: None,
        }
    }
}

impl QrfConfig {
    pub fn resolved_mtry(&self, p: usize) -> usize {
        self.mtry.unwrap_or_else(|| p.div_ceil(2))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Internal {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Training observations reaching the leaf, sorted ascending.
    Leaf { values: Vec<f64> },
}

/// Flat tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Internal { feature, threshold, left, right } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
                TreeNode::Leaf { .. } => return i,
            }
        }
    }

    pub fn leaf_values(&self, x: &[f64]) -> &[f64] {
        match &self.nodes[self.leaf_index(x)] {
            TreeNode::Leaf { values } => values,
            TreeNode::Internal { .. } => unreachable!("leaf_index stops at leaves"),
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = &[f64]> {
        self.nodes.iter().filter_map(|n| match n {
            TreeNode::Leaf { values } => Some(values.as_slice()),
            TreeNode::Internal { .. } => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub n_trees: usize,
    pub mtry: usize,
    pub min_leaf_size: usize,
    pub seed: u64,
    pub n_features: usize,
}

fn count_le(sorted: &[f64], v: f64) -> usize {
    sorted.partition_point(|x| *x <= v)
}

impl ForestModel {
    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Combined CDF at `v`: mean over trees of the leaf empirical CDF.
    pub fn cdf(&self, x: &[f64], v: f64) -> Result<f64> {
        self.check_dim(x)?;
        let leaves: Vec<&[f64]> = self.trees.iter().map(|t| t.leaf_values(x)).collect();
        Ok(combined_cdf(&leaves, v))
    }

    pub fn predict_quantiles(&self, x: &[f64], levels: &[f64]) -> Result<QuantileForecast> {
        self.check_dim(x)?;
        validate_levels(levels)?;
        let leaves: Vec<&[f64]> = self.trees.iter().map(|t| t.leaf_values(x)).collect();

        // merged support with cumulative weights; the running sum only
        // locates candidates, the exact per-tree sum decides
        let mut support: Vec<(f64, f64)> = Vec::with_capacity(leaves.iter().map(|l| l.len()).sum());
        let t = leaves.len() as f64;
        for leaf in &leaves {
            let w = 1.0 / (leaf.len() as f64 * t);
            support.extend(leaf.iter().map(|&v| (v, w)));
        }
        support.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut values: Vec<f64> = Vec::with_capacity(support.len());
        let mut running: Vec<f64> = Vec::with_capacity(support.len());
        let mut acc = 0.0;
        for (v, w) in support {
            acc += w;
            if values.last() == Some(&v) {
                *running.last_mut().expect("parallel vectors") = acc;
            } else {
                values.push(v);
                running.push(acc);
            }
        }

        let mut out = Vec::with_capacity(levels.len());
        for &tau in levels {
            let mut k = running.partition_point(|c| *c < tau).min(values.len() - 1);
            while k + 1 < values.len() && combined_cdf(&leaves, values[k]) < tau {
                k += 1;
            }
            while k > 0 && combined_cdf(&leaves, values[k - 1]) >= tau {
                k -= 1;
            }
            out.push(values[k]);
        }
        Ok(QuantileForecast::new(levels.to_vec(), out)?)
    }
}

/// (1/T) sum_t #{leaf_t <= v} / |leaf_t|, summed in tree order.
pub fn combined_cdf(leaves: &[&[f64]], v: f64) -> f64 {
    let total: f64 = leaves
        .iter()
        .map(|leaf| count_le(leaf, v) as f64 / leaf.len() as f64)
        .sum();
    total / leaves.len() as f64
}

/// Tree growth over bootstrap slots. Each feature keeps the slots sorted by
/// that feature, and every node owns the same contiguous range in all of
/// these orderings, so splits are found by a linear scan.
struct Builder {
    /// Feature columns indexed by slot.
    cols: Vec<Vec<f64>>,
    ys: Vec<f64>,
    order: Vec<Vec<u32>>,
    goes_left: Vec<bool>,
    buffer: Vec<u32>,
    mtry: usize,
    min_leaf: usize,
    max_depth: Option<usize>,
    nodes: Vec<TreeNode>,
}

impl Builder {
    fn value(&self, slot: u32, f: usize) -> f64 {
        self.cols[f][slot as usize]
    }

    fn target(&self, slot: u32) -> f64 {
        self.ys[slot as usize]
    }

    fn leaf(&mut self, lo: usize, hi: usize) -> usize {
        let mut values: Vec<f64> = self.order[0][lo..hi].iter().map(|&k| self.target(k)).collect();
        values.sort_by(f64::total_cmp);
        self.nodes.push(TreeNode::Leaf { values });
        self.nodes.len() - 1
    }

    /// Best (feature, threshold, child SSE) over the sampled features.
    fn best_split(&self, lo: usize, hi: usize, features: &[usize]) -> Option<(usize, f64, f64)> {
        let n = hi - lo;
        let mut best: Option<(usize, f64, f64)> = None;
        for &f in features {
            let ord = &self.order[f][lo..hi];
            let total: f64 = ord.iter().map(|&k| self.target(k)).sum();
            let total_sq: f64 = ord.iter().map(|&k| self.target(k).powi(2)).sum();
            let mut left = 0.0;
            let mut left_sq = 0.0;
            for k in 0..n - 1 {
                let t = self.target(ord[k]);
                left += t;
                left_sq += t * t;
                let n_left = k + 1;
                let n_right = n - n_left;
                if n_left < self.min_leaf || n_right < self.min_leaf {
                    continue;
                }
                let (here, next) = (self.value(ord[k], f), self.value(ord[k + 1], f));
                if here == next {
                    continue;
                }
                let right = total - left;
                let right_sq = total_sq - left_sq;
                let sse = (left_sq - left * left / n_left as f64) + (right_sq - right * right / n_right as f64);
                if best.map_or(true, |b| sse < b.2) {
                    best = Some((f, 0.5 * (here + next), sse));
                }
            }
        }
        best
    }

    fn grow(&mut self, lo: usize, hi: usize, depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let first = self.target(self.order[0][lo]);
        let pure = self.order[0][lo..hi].iter().all(|&k| self.target(k) == first);
        let depth_exhausted = self.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_exhausted || hi - lo < 2 * self.min_leaf {
            return self.leaf(lo, hi);
        }
        let p = self.order.len();
        let features = sample(rng, p, self.mtry).into_vec();
        let Some((feature, threshold, _)) = self.best_split(lo, hi, &features) else {
            return self.leaf(lo, hi);
        };
        let mut n_left = 0;
        for i in lo..hi {
            let k = self.order[feature][i];
            let left = self.value(k, feature) <= threshold;
            self.goes_left[k as usize] = left;
            n_left += left as usize;
        }
        for f in 0..p {
            self.buffer.clear();
            let ord = &mut self.order[f];
            let mut w = lo;
            for i in lo..hi {
                let k = ord[i];
                if self.goes_left[k as usize] {
                    ord[w] = k;
                    w += 1;
                } else {
                    self.buffer.push(k);
                }
            }
            ord[w..hi].copy_from_slice(&self.buffer);
        }

        let slot = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { values: Vec::new() });
        let left = self.grow(lo, lo + n_left, depth + 1, rng);
        let right = self.grow(lo + n_left, hi, depth + 1, rng);
        self.nodes[slot] = TreeNode::Internal { feature, threshold, left, right };
        slot
    }
}

/// Grows one tree from explicit sample indices (duplicates allowed).
pub fn build_tree(
    x: &[Vec<f64>],
    y: &[f64],
    indices: Vec<usize>,
    mtry: usize,
    min_leaf: usize,
    max_depth: Option<usize>,
    rng: &mut ChaCha8Rng,
) -> Tree {
    let n = indices.len();
    let p = x.first().map_or(0, |r| r.len());
    let cols: Vec<Vec<f64>> = (0..p).map(|f| indices.iter().map(|&i| x[i][f]).collect()).collect();
    let order = cols
        .iter()
        .map(|col| {
            let mut o: Vec<u32> = (0..n as u32).collect();
            o.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
            o
        })
        .collect();
    let mut b = Builder {
        ys: indices.iter().map(|&i| y[i]).collect(),
        cols,
        order,
        goes_left: vec![false; n],
        buffer: Vec::with_capacity(n),
        mtry,
        min_leaf: min_leaf.max(1),
        max_depth,
        nodes: Vec::new(),
    };
    b.grow(0, n, 0, rng);
    Tree { nodes: b.nodes }
}

/// Forest on one station's rows. Tree `i` draws from the stream seeded with
/// `seed + i`; `stream` separates stations sharing a base seed.
pub fn fit_forest(x: &[Vec<f64>], y: &[f64], cfg: &QrfConfig, stream: u64) -> Result<ForestModel> {
    let n = y.len();
    if cfg.n_trees == 0 {
        return Err(Error::InvalidConfig("n_trees must be at least 1".into()));
    }
    if n < 2 * cfg.min_leaf_size.max(1) {
        return Err(Error::TooFewSamples {
            needed: 2 * cfg.min_leaf_size.max(1),
            found: n,
        });
    }
    let p = x.first().map_or(0, |r| r.len());
    let mtry = cfg.resolved_mtry(p);
    if p == 0 || mtry == 0 || mtry > p {
        return Err(Error::InvalidConfig(format!("mtry must lie in 1..={p}, got {mtry}")));
    }
    let trees = (0..cfg.n_trees)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(t as u64));
            rng.set_stream(stream);
            let indices: Vec<usize> = if cfg.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            build_tree(x, y, indices, mtry, cfg.min_leaf_size, cfg.max_depth, &mut rng)
        })
        .collect();
    Ok(ForestModel {
        trees,
        n_trees: cfg.n_trees,
        mtry,
        min_leaf_size: cfg.min_leaf_size,
        seed: cfg.seed,
        n_features: p,
    })
}

/// One forest per station over all predictors of the training spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QrfModel {
    pub feature_spec: FeatureSpec,
    pub config: QrfConfig,
    pub levels: Vec<f64>,
    pub stations: BTreeMap<u32, ForestModel>,
}

impl QrfModel {
    pub fn predict(&self, station_id: u32, predictors: &[f64]) -> Result<QuantileForecast> {
        let forest = self
            .stations
            .get(&station_id)
            .ok_or(Error::UnknownStation(station_id))?;
        forest.predict_quantiles(predictors, &self.levels)
    }
}

pub fn fit_qrf(train: &ForecastDataset, cfg: &QrfConfig, levels: Vec<f64>) -> Result<QrfModel> {
    validate_levels(&levels)?;
    let mut stations = BTreeMap::new();
    for (station, idx) in train.indices_by_station() {
        if idx.is_empty() {
            continue;
        }
        let x: Vec<Vec<f64>> = idx.iter().map(|&i| train.samples()[i].predictors.clone()).collect();
        let y: Vec<f64> = idx.iter().map(|&i| train.samples()[i].observation).collect();
        stations.insert(station, fit_forest(&x, &y, cfg, station as u64)?);
    }
    Ok(QrfModel {
        feature_spec: train.feature_spec().clone(),
        config: *cfg,
        levels,
        stations,
    })
}
