//! Proper scoring rules for Gaussian, ensemble and quantile forecasts.
//!
//! The closed-form Gaussian CRPS and its gradient are the shared loss kernel
//! for EMOS and the network models; the ensemble and quantile variants are
//! used to score the raw ensemble and quantile regression forests on the same
//! scale.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

/// Smallest admissible predictive standard deviation.
pub const SIGMA_FLOOR: f64 = 1e-3;

const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreError {
    #[error("predictive standard deviation must be positive, got {0}")]
    NonPositiveSigma(f64),
    #[error("ensemble has no members")]
    EmptyEnsemble,
    #[error("quantile values are not monotone in their levels")]
    NonMonotoneQuantiles,
    #[error("quantile levels must be strictly increasing inside (0, 1)")]
    InvalidLevels,
    #[error("levels and values differ in length ({levels} vs {values})")]
    LengthMismatch { levels: usize, values: usize },
    #[error("reference score must be positive, got {0}")]
    ZeroReference(f64),
}

/// Standard normal CDF.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * std::f64::consts::FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn std_normal_pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Gaussian predictive distribution N(mu, sigma^2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianForecast {
    mu: f64,
    sigma: f64,
}

impl GaussianForecast {
    /// Checked constructor: `sigma` must be finite and at least [`SIGMA_FLOOR`].
    pub fn new(mu: f64, sigma: f64) -> Result<Self, ScoreError> {
        if !(sigma >= SIGMA_FLOOR) || !sigma.is_finite() {
            return Err(ScoreError::NonPositiveSigma(sigma));
        }
        Ok(Self { mu, sigma })
    }

    /// Builds a forecast with `sigma` raised to the floor.
    pub fn clamped(mu: f64, sigma: f64) -> Self {
        let sigma = if sigma.is_nan() { SIGMA_FLOOR } else { sigma.max(SIGMA_FLOOR) };
        Self { mu, sigma }
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn cdf(&self, y: f64) -> f64 {
        std_normal_cdf((y - self.mu) / self.sigma)
    }

    pub fn crps(&self, y: f64) -> f64 {
        crps_normal_unchecked(self.mu, self.sigma, y)
    }
}

/// Monotone set of predictive quantiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileForecast {
    levels: Vec<f64>,
    values: Vec<f64>,
}

impl QuantileForecast {
    pub fn new(levels: Vec<f64>, values: Vec<f64>) -> Result<Self, ScoreError> {
        if levels.len() != values.len() {
            return Err(ScoreError::LengthMismatch {
                levels: levels.len(),
                values: values.len(),
            });
        }
        validate_levels(&levels)?;
        if values.iter().any(|v| !v.is_finite()) || values.windows(2).any(|w| w[1] < w[0]) {
            return Err(ScoreError::NonMonotoneQuantiles);
        }
        Ok(Self { levels, values })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// CRPS of the quantile set read as an equally weighted ensemble.
    pub fn crps(&self, y: f64) -> f64 {
        crps_ensemble(&self.values, y).unwrap_or(f64::NAN)
    }
}

/// Levels must be strictly increasing inside the open unit interval.
pub fn validate_levels(levels: &[f64]) -> Result<(), ScoreError> {
    let inside = levels.iter().all(|&l| l > 0.0 && l < 1.0);
    let increasing = levels.windows(2).all(|w| w[1] > w[0]);
    if levels.is_empty() || !inside || !increasing {
        return Err(ScoreError::InvalidLevels);
    }
    Ok(())
}

/// Equally spaced levels k/(K+1), k = 1..K.
pub fn equally_spaced_levels(k: usize) -> Vec<f64> {
    (1..=k).map(|i| i as f64 / (k + 1) as f64).collect()
}

fn crps_normal_unchecked(mu: f64, sigma: f64, y: f64) -> f64 {
    let z = (y - mu) / sigma;
    sigma * (z * (2.0 * std_normal_cdf(z) - 1.0) + 2.0 * std_normal_pdf(z) - FRAC_1_SQRT_PI)
}

/// Closed-form CRPS of N(mu, sigma^2) at observation `y`.
pub fn crps_normal(f: &GaussianForecast, y: f64) -> Result<f64, ScoreError> {
    check_sigma(f.sigma)?;
    Ok(crps_normal_unchecked(f.mu, f.sigma, y))
}

/// Partial derivatives of the Gaussian CRPS with respect to (mu, sigma).
pub fn crps_normal_grad(f: &GaussianForecast, y: f64) -> Result<(f64, f64), ScoreError> {
    check_sigma(f.sigma)?;
    Ok(crps_normal_grad_raw(f.mu, f.sigma, y))
}

/// Optimizer-facing CRPS value and gradient. `sigma` below the floor is
/// clamped, and the sigma-derivative is zero there.
pub fn crps_normal_clamped(mu: f64, sigma: f64, y: f64) -> (f64, f64, f64) {
    if sigma < SIGMA_FLOOR || sigma.is_nan() {
        let (dmu, _) = crps_normal_grad_raw(mu, SIGMA_FLOOR, y);
        return (crps_normal_unchecked(mu, SIGMA_FLOOR, y), dmu, 0.0);
    }
    let (dmu, dsigma) = crps_normal_grad_raw(mu, sigma, y);
    (crps_normal_unchecked(mu, sigma, y), dmu, dsigma)
}

fn crps_normal_grad_raw(mu: f64, sigma: f64, y: f64) -> (f64, f64) {
    let z = (y - mu) / sigma;
    let dmu = -(2.0 * std_normal_cdf(z) - 1.0);
    let dsigma = 2.0 * std_normal_pdf(z) - FRAC_1_SQRT_PI;
    (dmu, dsigma)
}

fn check_sigma(sigma: f64) -> Result<(), ScoreError> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(ScoreError::NonPositiveSigma(sigma))
    }
}

/// CRPS of the empirical CDF of `members`:
/// mean |x_i - y| - 1/(2 m^2) sum_ij |x_i - x_j|.
pub fn crps_ensemble(members: &[f64], y: f64) -> Result<f64, ScoreError> {
    if members.is_empty() {
        return Err(ScoreError::EmptyEnsemble);
    }
    let m = members.len() as f64;
    let abs_err: f64 = members.iter().map(|x| (x - y).abs()).sum::<f64>() / m;

    // sum_ij |x_i - x_j| = 2 sum_i (2i - m + 1) x_(i) over sorted members
    let mut sorted = members.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pair_sum: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * i as f64 - m + 1.0) * x)
        .sum::<f64>()
        * 2.0;
    Ok(abs_err - pair_sum / (2.0 * m * m))
}

/// Scores a quantile set as an equally weighted ensemble of its values.
pub fn crps_quantile_approx(q: &QuantileForecast, y: f64) -> Result<f64, ScoreError> {
    crps_ensemble(&q.values, y)
}

/// Negative log density of N(mu, sigma^2) at `y`.
pub fn log_score_normal(f: &GaussianForecast, y: f64) -> Result<f64, ScoreError> {
    check_sigma(f.sigma)?;
    let z = (y - f.mu) / f.sigma;
    Ok(HALF_LN_2PI + f.sigma.ln() + 0.5 * z * z)
}

/// Skill score of mean CRPS values, 1 - model / reference.
pub fn crpss(mean_crps_model: f64, mean_crps_ref: f64) -> Result<f64, ScoreError> {
    if !(mean_crps_ref > 0.0) {
        return Err(ScoreError::ZeroReference(mean_crps_ref));
    }
    Ok(1.0 - mean_crps_model / mean_crps_ref)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g(mu: f64, sigma: f64) -> GaussianForecast {
        GaussianForecast::new(mu, sigma).unwrap()
    }

    // Trapezoid integration of (F(z) - 1{y <= z})^2 over [mu - 12 sigma, mu + 12 sigma].
    // The observation is a grid node, so each panel sees a smooth integrand.
    fn crps_by_integration(mu: f64, sigma: f64, y: f64) -> f64 {
        let lo = mu - 12.0 * sigma;
        let hi = mu + 12.0 * sigma;
        let panel_sum = |a: f64, b: f64, shift: f64| -> f64 {
            if b <= a {
                return 0.0;
            }
            let n = ((b - a) / (sigma * 2e-4)).ceil() as usize;
            let h = (b - a) / n as f64;
            let f = |z: f64| (std_normal_cdf((z - mu) / sigma) - shift).powi(2);
            let inner: f64 = (1..n).map(|i| f(a + i as f64 * h)).sum();
            h * (0.5 * f(a) + inner + 0.5 * f(b))
        };
        let yc = y.clamp(lo, hi);
        let mut total = panel_sum(lo, yc, 0.0) + panel_sum(yc, hi, 1.0);
        // integrand is ~1 between the window edge and an observation outside it
        if y > hi {
            total += y - hi;
        } else if y < lo {
            total += lo - y;
        }
        total
    }

    #[test]
    fn crps_normal_reference_values() {
        assert!((crps_normal(&g(0.0, 1.0), 0.0).unwrap() - 0.233695).abs() < 1e-6);
        assert!((crps_normal(&g(0.0, 1.0), 1.0).unwrap() - 0.602441).abs() < 1e-6);
        let at_floor = crps_normal(&g(3.0, SIGMA_FLOOR), 3.0).unwrap();
        assert!((at_floor - 0.233695e-3).abs() < 1e-9);
    }

    #[test]
    fn crps_normal_matches_trapezoid_oracle() {
        for &(mu, sigma, y) in &[(0.0, 1.0, 0.0), (0.0, 1.0, 1.0), (2.5, 0.3, 1.9), (-4.0, 2.0, 3.0)] {
            let oracle = crps_by_integration(mu, sigma, y);
            let closed = crps_normal(&g(mu, sigma), y).unwrap();
            assert!((oracle - closed).abs() < 1e-6, "{mu} {sigma} {y}: {oracle} vs {closed}");
        }
        assert!((crps_by_integration(0.0, 1.0, 0.0) - 0.233695).abs() < 1e-6);
    }

    #[test]
    fn gradient_reference_values() {
        let (dmu, dsigma) = crps_normal_grad(&g(0.0, 1.0), 0.0).unwrap();
        assert_eq!(dmu, 0.0);
        assert!((dsigma - 0.233695).abs() < 1e-6);
        let (dmu, _) = crps_normal_grad(&g(0.0, 1.0), 2.0).unwrap();
        assert!((dmu + 0.954500).abs() < 1e-6);
    }

    #[test]
    fn sigma_validation() {
        assert!(matches!(GaussianForecast::new(0.0, 0.0), Err(ScoreError::NonPositiveSigma(_))));
        assert!(GaussianForecast::new(0.0, 1e-4).is_err());
        assert_eq!(GaussianForecast::clamped(1.0, -3.0).sigma(), SIGMA_FLOOR);
    }

    #[test]
    fn clamped_kernel_has_zero_sigma_gradient_below_floor() {
        let (v, dmu, ds) = crps_normal_clamped(0.0, -1.0, 0.5);
        assert_eq!(ds, 0.0);
        assert!(dmu < 0.0);
        assert!((v - crps_normal(&g(0.0, SIGMA_FLOOR), 0.5).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn ensemble_crps_examples() {
        assert_eq!(crps_ensemble(&[3.0], 1.5).unwrap(), 1.5);
        assert!((crps_ensemble(&[0.0, 2.0], 1.0).unwrap() - 0.5).abs() < 1e-15);
        // integral: 0.25 over [0, 2] plus 1 over [2, 5]
        assert!((crps_ensemble(&[0.0, 2.0], 5.0).unwrap() - 3.5).abs() < 1e-15);
        assert!((ensemble_crps_by_integration(&[0.0, 2.0], 5.0) - 3.5).abs() < 1e-15);
        assert_eq!(crps_ensemble(&[], 0.0), Err(ScoreError::EmptyEnsemble));
    }

    // Direct integration of the empirical-CDF CRPS: the integrand is piecewise
    // constant between the sorted support points.
    fn ensemble_crps_by_integration(members: &[f64], y: f64) -> f64 {
        let mut pts: Vec<f64> = members.to_vec();
        pts.push(y);
        pts.sort_by(f64::total_cmp);
        let m = members.len() as f64;
        let mut total = 0.0;
        for w in pts.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let f = members.iter().filter(|&&x| x <= mid).count() as f64 / m;
            let ind = if mid >= y { 1.0 } else { 0.0 };
            total += (f - ind).powi(2) * (w[1] - w[0]);
        }
        total
    }

    #[test]
    fn quantile_crps() {
        let q = QuantileForecast::new(vec![0.5], vec![2.0]).unwrap();
        assert_eq!(crps_quantile_approx(&q, -1.0).unwrap(), 3.0);
        let q = QuantileForecast::new(equally_spaced_levels(2), vec![0.0, 2.0]).unwrap();
        assert!((crps_quantile_approx(&q, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(
            QuantileForecast::new(vec![0.2, 0.4], vec![1.0, 0.0]),
            Err(ScoreError::NonMonotoneQuantiles)
        );
        assert_eq!(QuantileForecast::new(vec![0.4, 0.2], vec![0.0, 1.0]), Err(ScoreError::InvalidLevels));
    }

    #[test]
    fn quantile_crps_converges_to_gaussian() {
        let levels = equally_spaced_levels(999);
        let (mu, sigma) = (1.0, 2.0);
        let values: Vec<f64> = levels
            .iter()
            .map(|&p| mu + sigma * statrs::function::erf::erf_inv(2.0 * p - 1.0) * std::f64::consts::SQRT_2)
            .collect();
        let q = QuantileForecast::new(levels, values).unwrap();
        for y in [-2.0, 0.5, 1.0, 4.0] {
            let approx = crps_quantile_approx(&q, y).unwrap();
            let exact = crps_normal(&g(mu, sigma), y).unwrap();
            assert!((approx - exact).abs() < 1e-3, "{y}: {approx} vs {exact}");
        }
    }

    #[test]
    fn log_score_examples() {
        assert!((log_score_normal(&g(0.0, 1.0), 0.0).unwrap() - 0.918939).abs() < 1e-6);
        assert!((log_score_normal(&g(0.0, 1.0), 1.0).unwrap() - 1.418939).abs() < 1e-6);
        assert!((log_score_normal(&g(5.0, 2.0), 5.0).unwrap() - 1.612086).abs() < 1e-6);
    }

    #[test]
    fn skill_score() {
        assert_eq!(crpss(1.0, 1.0).unwrap(), 0.0);
        assert!((crpss(0.8, 1.0).unwrap() - 0.2).abs() < 1e-15);
        assert!((crpss(1.2, 1.0).unwrap() + 0.2).abs() < 1e-15);
        assert_eq!(crpss(1.0, 0.0), Err(ScoreError::ZeroReference(0.0)));
    }

    #[test]
    fn propriety_on_small_grid() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let (mu_star, sigma_star) = (1.0, 2.0);
        let draws: Vec<f64> = Normal::new(mu_star, sigma_star)
            .unwrap()
            .sample_iter(&mut rng)
            .take(100_000)
            .collect();
        let score = |mu: f64, sigma: f64| -> (f64, f64) {
            let f = g(mu, sigma);
            let s: Vec<f64> = draws.iter().map(|&y| f.crps(y)).collect();
            let n = s.len() as f64;
            let mean = s.iter().sum::<f64>() / n;
            let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (mean, (var / n).sqrt())
        };
        let (best, best_se) = score(mu_star, sigma_star);
        for mu in [-1.0, 0.0, 1.0, 2.0, 3.0] {
            for sigma in [1.0, 1.5, 2.0, 2.5, 3.0] {
                let (s, _) = score(mu, sigma);
                assert!(s >= best - 3.0 * best_se, "({mu},{sigma}) scored {s} < {best}");
            }
        }
    }

    proptest! {
        #[test]
        fn crps_agrees_with_integration(mu in -20.0..20.0f64, sigma in 0.05..5.0f64, zy in -4.0..4.0f64) {
            let y = mu + zy * sigma * 1.5;
            let closed = crps_normal(&g(mu, sigma), y).unwrap();
            prop_assert!((closed - crps_by_integration(mu, sigma, y)).abs() < 1e-6);
            prop_assert!(closed >= 0.0);
        }

        #[test]
        fn location_scale_equivariance(mu in -50.0..50.0f64, sigma in 0.01..10.0f64, y in -60.0..60.0f64) {
            let lhs = crps_normal(&g(mu, sigma), y).unwrap();
            let rhs = sigma * crps_normal(&g(0.0, 1.0), (y - mu) / sigma).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }

        #[test]
        fn gradient_matches_finite_differences(mu in -10.0..10.0f64, sigma in 0.05..5.0f64, y in -15.0..15.0f64) {
            let h = 1e-5;
            let (dmu, dsigma) = crps_normal_grad(&g(mu, sigma), y).unwrap();
            let c = |m: f64, s: f64| crps_normal(&g(m, s), y).unwrap();
            let fd_mu = (c(mu + h, sigma) - c(mu - h, sigma)) / (2.0 * h);
            let fd_sigma = (c(mu, sigma + h) - c(mu, sigma - h)) / (2.0 * h);
            prop_assert!((dmu - fd_mu).abs() < 1e-6);
            prop_assert!((dsigma - fd_sigma).abs() < 1e-6);
        }

        #[test]
        fn ensemble_crps_matches_integration_and_permutation(
            mut members in proptest::collection::vec(-10.0..10.0f64, 1..12),
            y in -12.0..12.0f64,
        ) {
            let a = crps_ensemble(&members, y).unwrap();
            prop_assert!((a - ensemble_crps_by_integration(&members, y)).abs() < 1e-9);
            members.reverse();
            let b = crps_ensemble(&members, y).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
