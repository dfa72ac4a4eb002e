//! Synthetic forecast archives with a known error structure.
//!
//! The generator draws a "true" temperature per station and day, corrupts an
//! ensemble forecast with a station offset, a linear bias driven by the
//! auxiliary weather state and a nonlinear bias that interacts with station
//! properties, and shrinks the member spread so the raw ensemble is
//! underdispersed. Observations add independent measurement noise.
//!
//! Latent daily drivers (cloudiness, wind, humidity, pressure, error
//! magnitude, temperature anomaly) follow a regional AR(1) process mixed with
//! station noise. Auxiliary ensemble variables are noisy functions of those
//! drivers, so they carry real signal about the forecast error.
//!
//! Forecast error decomposition for station `s`, day `t`:
//!
//! ```text
//! center  = truth + b_s + A_lin * f_lin(z) + A_nl * f_nl(z, s) + e,   e ~ N(0, sd_e^2)
//! member  = center + N(0, (u * sd_tot)^2),  sd_tot^2 = sd_e^2 + noise^2
//! obs     = truth + N(0, noise^2)
//! f_lin   = (0.6 z_cloud - 0.5 z_wind + 0.4 z_hum + 0.3 z_press) / 0.927
//! f_nl    = a_s * (relu(z_wind) - 0.4) + h_s * (z_hum^2 - 1) / sqrt(2)
//! ```
//!
//! `a_s` is a scaled station altitude (observable), `h_s` a latent station
//! sensitivity (only recoverable through station identity). With `u = 1` and
//! all amplitudes zero, members and observation are exchangeable and the raw
//! ensemble is calibrated.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{
    mean_std, DataError, FeatureSpec, ForecastDataset, Sample, Station, ENSEMBLE_VARIABLES,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub stations: usize,
    pub days: usize,
    pub seed: u64,
    /// Linear, weather-dependent bias (°C).
    pub bias_amplitude: f64,
    /// Nonlinear, station-interacting bias (°C).
    pub nonlinearity_amplitude: f64,
    /// Standard deviation of the per-station offset (°C).
    pub station_bias_scale: f64,
    /// Ratio of member spread to the true predictive spread, in (0, 1].
    pub underdispersion_factor: f64,
    /// Observation noise (°C).
    pub noise_scale: f64,
    pub members: usize,
    pub start_date: NaiveDate,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            stations: 60,
            days: 730,
            seed: 42,
            bias_amplitude: 1.0,
            nonlinearity_amplitude: 1.5,
            station_bias_scale: 1.0,
            underdispersion_factor: 0.5,
            noise_scale: 1.0,
            members: 10,
            start_date: NaiveDate::from_ymd_opt(2015, 1, 1).expect("valid date"),
        }
    }
}

impl SyntheticConfig {
    /// Configuration with every bias switched off and a calibrated ensemble.
    pub fn calibrated(seed: u64) -> Self {
        Self {
            seed,
            bias_amplitude: 0.0,
            nonlinearity_amplitude: 0.0,
            station_bias_scale: 0.0,
            underdispersion_factor: 1.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |msg: &str| Err(DataError::InvalidConfig(msg.to_string()));
        if self.stations == 0 || self.days == 0 || self.members == 0 {
            return bad("stations, days and members must be at least 1");
        }
        let amplitudes = [
            self.bias_amplitude,
            self.nonlinearity_amplitude,
            self.station_bias_scale,
            self.noise_scale,
        ];
        if amplitudes.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return bad("amplitudes must be finite and non-negative");
        }
        if !(self.underdispersion_factor > 0.0 && self.underdispersion_factor <= 1.0) {
            return bad("underdispersion_factor must lie in (0, 1]");
        }
        if self.stations > u32::MAX as usize {
            return bad("too many stations");
        }
        Ok(())
    }
}

const N_DRIVERS: usize = 6;
const CLOUD: usize = 0;
const WIND: usize = 1;
const HUM: usize = 2;
const PRESS: usize = 3;
const UNC: usize = 4;
const TEMP: usize = 5;
const AR_COEF: f64 = 0.6;

struct StationTruth {
    meta: Station,
    orog: f64,
    offset: f64,
    alt_factor: f64,
    sensitivity: f64,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Auxiliary ensemble-mean centers, one per variable after t2m, in
/// [`ENSEMBLE_VARIABLES`] order, plus their member spreads.
fn auxiliary(z: &[f64; N_DRIVERS], season: f64, anomaly: f64, rng: &mut ChaCha8Rng) -> [(f64, f64); 17] {
    let mut e = || 0.3 * normal(rng);
    let relu = |v: f64| v.max(0.0);
    [
        // cape (J/kg)
        (300.0 * relu(z[HUM] + 0.8 * season + e()), 80.0),
        // sp (hPa)
        (1000.0 + 8.0 * (z[PRESS] + e()), 1.5),
        // tcc (fraction)
        (1.0 / (1.0 + (-1.5 * (z[CLOUD] + e())).exp()), 0.1),
        // sshf (W/m^2)
        (-40.0 * (1.0 + season) * (1.0 - 0.5 * z[CLOUD] + e()), 12.0),
        // slhf
        (-50.0 - 20.0 * (z[HUM] - 0.4 * z[CLOUD] + e()), 10.0),
        // u10, v10 (m/s)
        (2.0 + 3.0 * (z[WIND] + e()), 1.0),
        (0.5 + 3.0 * (0.5 * z[WIND] + 0.6 * z[PRESS] + e()), 1.0),
        // d2m (°C)
        (2.0 + 6.0 * season + 1.5 * anomaly + 2.0 * (z[HUM] + e()), 0.8),
        // ssr (W/m^2)
        (150.0 + 120.0 * season - 60.0 * (z[CLOUD] + e()), 20.0),
        // str
        (-60.0 + 25.0 * (z[CLOUD] + e()), 6.0),
        // sm
        (0.3 + 0.05 * (z[HUM] - 0.5 * season + e()), 0.01),
        // v_pl500, u_pl500, u_pl850, v_pl850 (m/s)
        (4.0 * (0.4 * z[WIND] - 0.5 * z[PRESS] + e()), 2.0),
        (12.0 + 6.0 * (0.7 * z[WIND] + e()), 2.0),
        (6.0 + 5.0 * (0.8 * z[WIND] + e()), 1.5),
        (3.0 * (0.3 * z[WIND] + 0.4 * z[PRESS] + e()), 1.5),
        // gh_pl500 (m^2/s^2)
        (55_000.0 + 1_200.0 * (0.8 * z[PRESS] + 0.5 * season + e()), 150.0),
        // q_pl850 (g/kg)
        (4.0 + 1.5 * season + 1.2 * (z[HUM] + e()), 0.4),
    ]
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<ForecastDataset, DataError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let spec = FeatureSpec::full();

    let stations: Vec<StationTruth> = (0..cfg.stations)
        .map(|i| {
            let latitude = rng.gen_range(47.5..54.5);
            let longitude = rng.gen_range(6.0..14.5);
            let u: f64 = rng.gen();
            let altitude = 1500.0 * u * u;
            let orog = (altitude + 150.0 * normal(&mut rng)).max(0.0);
            let offset = cfg.station_bias_scale * normal(&mut rng);
            let sensitivity = rng.gen_range(-1.0..1.0);
            StationTruth {
                meta: Station {
                    id: (i + 1) as u32,
                    latitude,
                    longitude,
                    altitude,
                },
                orog,
                offset,
                alt_factor: (altitude - 500.0) / 400.0,
                sensitivity,
            }
        })
        .collect();

    let m = cfg.members;
    let mut regional = [0.0; N_DRIVERS];
    let innovation = (1.0 - AR_COEF * AR_COEF).sqrt();
    for r in regional.iter_mut() {
        *r = normal(&mut rng);
    }

    let mut samples = Vec::with_capacity(cfg.stations * cfg.days);
    let mut members = vec![0.0; m];
    let mut aux_members = vec![0.0; m];
    for day in 0..cfg.days {
        if day > 0 {
            for r in regional.iter_mut() {
                *r = AR_COEF * *r + innovation * normal(&mut rng);
            }
        }
        let date = cfg.start_date + chrono::Days::new(day as u64);
        let doy = chrono::Datelike::ordinal(&date) as f64;
        let season = (2.0 * std::f64::consts::PI * (doy - 110.0) / 365.25).sin();

        for st in &stations {
            let mut z = [0.0; N_DRIVERS];
            for (k, zk) in z.iter_mut().enumerate() {
                *zk = 0.7 * regional[k] + 0.714 * normal(&mut rng);
            }
            let anomaly = z[TEMP];
            let truth = 9.0 - 0.0065 * st.meta.altitude + 0.4 * (51.0 - st.meta.latitude)
                + 8.0 * season
                + 3.0 * anomaly
                - 1.0 * z[CLOUD] * season;

            let f_lin = (0.6 * z[CLOUD] - 0.5 * z[WIND] + 0.4 * z[HUM] + 0.3 * z[PRESS]) / 0.927;
            let f_nl = st.alt_factor * (z[WIND].max(0.0) - 0.4)
                + st.sensitivity * (z[HUM] * z[HUM] - 1.0) / std::f64::consts::SQRT_2;
            let bias = st.offset + cfg.bias_amplitude * f_lin + cfg.nonlinearity_amplitude * f_nl;

            let sd_err = (0.25 * z[UNC]).exp();
            let sd_tot = (sd_err * sd_err + cfg.noise_scale * cfg.noise_scale).sqrt();
            let center = truth + bias + sd_err * normal(&mut rng);
            let spread = cfg.underdispersion_factor * sd_tot;
            for x in members.iter_mut() {
                *x = center + spread * normal(&mut rng);
            }
            let observation = truth + cfg.noise_scale * normal(&mut rng);

            let mut predictors = Vec::with_capacity(spec.len());
            predictors.extend([st.meta.altitude, st.orog, st.meta.latitude, st.meta.longitude]);
            let (t_mean, t_sd) = mean_std(&members);
            predictors.extend([t_mean, t_sd]);
            for (aux_center, aux_spread) in auxiliary(&z, season, anomaly, &mut rng) {
                for x in aux_members.iter_mut() {
                    *x = aux_center + aux_spread * normal(&mut rng);
                }
                let (a_mean, a_sd) = mean_std(&aux_members);
                predictors.extend([a_mean, a_sd]);
            }
            debug_assert_eq!(predictors.len(), 4 + 2 * ENSEMBLE_VARIABLES.len());

            samples.push(Sample {
                station_id: st.meta.id,
                valid_time: date,
                predictors,
                observation,
                members: members.clone(),
            });
        }
    }

    ForecastDataset::new(spec, stations.into_iter().map(|s| s.meta).collect(), samples)
}
