//! Acceptance criteria, one test each. Every test writes a single
//! `criterion N: PASS|FAIL ...` line to stderr (bypassing output capture)
//! before asserting.

use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use enspost::boosting::{fit_boost_station, BoostConfig};
use enspost::data::{split_by_period, DateRange, FeatureSpec, ForecastDataset, Sample, Station};
use enspost::emos::fit_emos_triples;
use enspost::evaluation::{evaluate, EvaluationOptions, RAW_ENSEMBLE};
use enspost::importance::{permutation_importance, PermutationPlan};
use enspost::models::{fit_model, FitSettings, ModelKind, NetworkSettings};
use enspost::network::{backward, param_count, Architecture, NetworkParams, Variant};
use enspost::qrf::{fit_forest, ForestModel, QrfConfig, Tree, TreeNode};
use enspost::scoring::{crps_normal, crps_normal_grad, equally_spaced_levels, std_normal_cdf, GaussianForecast};
use enspost::synthetic::{generate_synthetic, SyntheticConfig};
use enspost::verification::{bh_procedure, dm_test, pairwise_significance_matrix, ModelScores, ScoreRecord, DEFAULT_DM_LAG};

fn report(n: u32, pass: bool, detail: String) {
    let status = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {n}: {status} {detail}");
}

fn z(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

// ---------------------------------------------------------------- 1

/// Trapezoid rule on the integral of (F(x) - 1{x >= y})^2, split at y.
fn crps_by_trapezoid(mu: f64, sigma: f64, y: f64) -> f64 {
    let lo = (mu - 12.0 * sigma).min(y - 1.0);
    let hi = (mu + 12.0 * sigma).max(y + 1.0);
    let piece = |a: f64, b: f64, above: bool| {
        let n = 200_000;
        let h = (b - a) / n as f64;
        let f = |x: f64| {
            let c = std_normal_cdf((x - mu) / sigma);
            if above {
                (c - 1.0).powi(2)
            } else {
                c * c
            }
        };
        let mut s = 0.5 * (f(a) + f(b));
        for i in 1..n {
            s += f(a + i as f64 * h);
        }
        s * h
    };
    piece(lo, y, false) + piece(y, hi, true)
}

#[test]
fn criterion_01_crps_kernel_exactness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_value: f64 = 0.0;
    let mut worst_grad: f64 = 0.0;
    for _ in 0..100 {
        let mu = rng.gen_range(-10.0..10.0);
        let sigma = rng.gen_range(0.1..5.0);
        let y = rng.gen_range(-15.0..15.0);
        let f = GaussianForecast::new(mu, sigma).unwrap();
        worst_value = worst_value.max((crps_normal(&f, y).unwrap() - crps_by_trapezoid(mu, sigma, y)).abs());

        let h = 1e-5;
        let c = |m: f64, s: f64| crps_normal(&GaussianForecast::new(m, s).unwrap(), y).unwrap();
        let fd_mu = (c(mu + h, sigma) - c(mu - h, sigma)) / (2.0 * h);
        let fd_sigma = (c(mu, sigma + h) - c(mu, sigma - h)) / (2.0 * h);
        let (g_mu, g_sigma) = crps_normal_grad(&f, y).unwrap();
        worst_grad = worst_grad.max((fd_mu - g_mu).abs()).max((fd_sigma - g_sigma).abs());
    }
    let elapsed = start.elapsed();
    let pass = worst_value <= 1e-6 && worst_grad <= 1e-6 && elapsed < Duration::from_secs(5);
    report(
        1,
        pass,
        format!("max |closed form - trapezoid| = {worst_value:.2e}, max gradient error = {worst_grad:.2e}, {:.2} s", elapsed.as_secs_f64()),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 2

fn batch_loss(p: &NetworkParams, xs: &[Vec<f64>], st: &[u32], ys: &[f64]) -> f64 {
    let refs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
    backward(p, &refs, st, ys).unwrap().0
}

#[test]
fn criterion_02_network_gradients() {
    let start = Instant::now();
    let stations = [2u32, 7, 11, 19, 23];
    let mut checked = 0usize;
    let mut refined = 0usize;
    let mut failures = Vec::new();
    for variant in Variant::ALL {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let arch = Architecture {
                n_inputs: if variant.uses_aux() { 12 } else { 2 },
                hidden: if variant.has_hidden_layer() { 16 } else { 0 },
                n_emb: if variant.uses_embedding() { 2 } else { 0 },
                n_stations: stations.len(),
            };
            let mut p = NetworkParams::init(arch, stations.to_vec(), &mut rng);
            for v in p.values.iter_mut() {
                *v += 0.2 * z(&mut rng);
            }
            let xs: Vec<Vec<f64>> = (0..8).map(|_| (0..arch.n_inputs).map(|_| z(&mut rng)).collect()).collect();
            let st: Vec<u32> = (0..8).map(|_| stations[rng.gen_range(0..stations.len())]).collect();
            let ys: Vec<f64> = (0..8).map(|_| 1.5 * z(&mut rng)).collect();
            let refs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
            let (_, grad) = backward(&p, &refs, &st, &ys).unwrap();

            for i in 0..p.len() {
                let agrees = |h: f64| {
                    let mut plus = p.clone();
                    let mut minus = p.clone();
                    plus.values[i] += h;
                    minus.values[i] -= h;
                    let fd = (batch_loss(&plus, &xs, &st, &ys) - batch_loss(&minus, &xs, &st, &ys)) / (2.0 * h);
                    (fd - grad[i]).abs() <= 1e-6_f64.max(1e-4 * fd.abs().max(grad[i].abs()))
                };
                checked += 1;
                if agrees(1e-4) {
                    continue;
                }
                // a ReLU or |.| kink inside [theta - h, theta + h]; smaller steps stay on one side
                refined += 1;
                if !(agrees(1e-6) || agrees(1e-7)) {
                    failures.push(format!("{variant}/seed {seed}/param {i}"));
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = failures.is_empty() && elapsed < Duration::from_secs(30);
    report(
        2,
        pass,
        format!(
            "{checked} parameter gradients over 6 variants x 20 seeds, {} mismatches ({refined} needed a smaller step near a kink), {:.2} s",
            failures.len(),
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass, "{failures:?}");
}

// ---------------------------------------------------------------- 3

#[test]
fn criterion_03_parameter_counts() {
    let (p, s) = (40, 537);
    let got = [
        param_count(Variant::Fcn, p, 0, 2, s),
        param_count(Variant::FcnAux, p, 0, 2, s),
        param_count(Variant::FcnEmb, p, 0, 2, s),
        param_count(Variant::FcnAuxEmb, p, 0, 2, s),
        param_count(Variant::NnAuxEmb, p, 512, 2, s),
        param_count(Variant::NnAuxEmb, p, 50, 2, s),
    ];
    let want = [6, 82, 1084, 1160, 24116, 3326];
    let pass = got == want;
    report(
        3,
        pass,
        format!("S=537, 40 predictors: fcn/fcn-aux/fcn-emb/fcn-aux-emb/nn-aux-emb(512)/nn-aux-emb(50) = {got:?}, expected {want:?}"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 4

#[test]
fn criterion_04_emos_recovery() {
    let start = Instant::now();
    let truth = [-0.5, 1.1, 0.3, 0.7];
    let mut ok = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
        let data: Vec<(f64, f64, f64)> = (0..50_000)
            .map(|_| {
                let m: f64 = rng.gen_range(-10.0..25.0);
                let s: f64 = rng.gen_range(0.2..3.0);
                (m, s, truth[0] + truth[1] * m + (truth[2] + truth[3] * s) * z(&mut rng))
            })
            .collect();
        let c = fit_emos_triples(&data).unwrap().coefficients;
        let err = [c.a - truth[0], c.b - truth[1], c.c - truth[2], c.d - truth[3]]
            .iter()
            .fold(0.0_f64, |m, e| m.max(e.abs()));
        worst = worst.max(err);
        if err <= 0.05 {
            ok += 1;
        }
    }
    let elapsed = start.elapsed();
    let pass = ok >= 9 && elapsed < Duration::from_secs(60);
    report(
        4,
        pass,
        format!("{ok}/10 seeds within 0.05 of (a,b,c,d) = {truth:?}, largest error {worst:.4}, {:.1} s", elapsed.as_secs_f64()),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 5

#[test]
fn criterion_05_boosting_sparsity() {
    let start = Instant::now();
    let (n, p) = (600, 20);
    let true_mean = [0usize, 1, 2];
    let true_scale = [3usize];
    let (mut selected, mut correct) = (0usize, 0usize);
    let mut monotone = true;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| z(&mut rng)).collect()).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|r| {
                let mu = 2.0 + 1.5 * r[0] - 1.0 * r[1] + 0.8 * r[2];
                let sigma = (0.2 + 0.4 * r[3]).exp();
                mu + sigma * z(&mut rng)
            })
            .collect();
        let fit = fit_boost_station(&x, &y, &BoostConfig::default()).unwrap();
        let (mean_sel, scale_sel) = fit.coefficients.selected();
        selected += mean_sel.len() + scale_sel.len();
        correct += mean_sel.iter().filter(|j| true_mean.contains(j)).count();
        correct += scale_sel.iter().filter(|j| true_scale.contains(j)).count();
        monotone &= fit.log_score_path.windows(2).all(|w| w[1] <= w[0]);
    }
    let precision = correct as f64 / selected.max(1) as f64;
    let elapsed = start.elapsed();
    let pass = precision >= 0.9 && monotone && elapsed < Duration::from_secs(120);
    report(
        5,
        pass,
        format!(
            "precision {precision:.3} ({correct}/{selected} selections are true drivers) over 10 seeds, training LogS non-increasing: {monotone}, {:.1} s",
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 6

/// Leaf values for `x`, found by evaluating every root-to-leaf path predicate.
fn leaf_by_enumeration<'a>(tree: &'a Tree, x: &[f64]) -> &'a [f64] {
    fn walk<'a>(tree: &'a Tree, node: usize, x: &[f64], ok: bool, hits: &mut Vec<&'a [f64]>) {
        match &tree.nodes[node] {
            TreeNode::Leaf { values } => {
                if ok {
                    hits.push(values);
                }
            }
            TreeNode::Internal { feature, threshold, left, right } => {
                walk(tree, *left, x, ok && x[*feature] <= *threshold, hits);
                walk(tree, *right, x, ok && x[*feature] > *threshold, hits);
            }
        }
    }
    let mut hits = Vec::new();
    walk(tree, 0, x, true, &mut hits);
    assert_eq!(hits.len(), 1, "leaf regions must partition the input space");
    hits[0]
}

/// Smallest candidate whose averaged leaf ECDF reaches tau.
fn naive_quantile(forest: &ForestModel, x: &[f64], tau: f64) -> f64 {
    let leaves: Vec<&[f64]> = forest.trees.iter().map(|t| leaf_by_enumeration(t, x)).collect();
    let mut candidates: Vec<f64> = leaves.iter().flat_map(|l| l.iter().copied()).collect();
    candidates.sort_by(f64::total_cmp);
    for v in &candidates {
        let mut total = 0.0;
        for leaf in &leaves {
            total += leaf.iter().filter(|w| **w <= *v).count() as f64 / leaf.len() as f64;
        }
        if total / leaves.len() as f64 >= tau {
            return *v;
        }
    }
    *candidates.last().unwrap()
}

#[test]
fn criterion_06_qrf_oracle() {
    let start = Instant::now();
    let levels = equally_spaced_levels(51);
    let mut compared = 0usize;
    let mut mismatches = 0usize;
    let mut probes = 0usize;
    let mut violations = 0usize;
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + seed);
        let n = rng.gen_range(4..=20);
        let p = rng.gen_range(1..=4);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..p).map(|_| (z(&mut rng) * 4.0).round() / 4.0).collect())
            .collect();
        let y: Vec<f64> = x.iter().map(|r| r[0] + (0.5 * z(&mut rng) * 4.0).round() / 4.0).collect();
        let cfg = QrfConfig {
            n_trees: rng.gen_range(1..=15),
            min_leaf_size: rng.gen_range(1..=2),
            mtry: None,
            seed,
            bootstrap: true,
            max_depth: None,
        };
        let forest = fit_forest(&x, &y, &cfg, seed).unwrap();
        let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for _ in 0..50 {
            let probe: Vec<f64> = (0..p).map(|_| 3.0 * z(&mut rng)).collect();
            let q = forest.predict_quantiles(&probe, &levels).unwrap();
            probes += 1;
            let values = q.values();
            if values.windows(2).any(|w| w[0] > w[1]) || values.iter().any(|v| *v < lo || *v > hi) {
                violations += 1;
            }
            for (tau, v) in levels.iter().zip(values) {
                compared += 1;
                if *v != naive_quantile(&forest, &probe, *tau) {
                    mismatches += 1;
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = mismatches == 0 && violations == 0 && probes >= 10_000 && elapsed < Duration::from_secs(60);
    report(
        6,
        pass,
        format!(
            "{mismatches} of {compared} quantiles differ from the enumeration oracle; {violations} of {probes} probes non-monotone or out of range, {:.1} s",
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 7 and 8

struct SeedOutcome {
    raw_crps: f64,
    crps: Vec<(ModelKind, f64)>,
    raw_chi2: f64,
    chi2: Vec<(ModelKind, f64)>,
    raw_spread_error: f64,
    nn_spread_error: f64,
}

impl SeedOutcome {
    fn crps_of(&self, k: ModelKind) -> f64 {
        self.crps.iter().find(|(m, _)| *m == k).unwrap().1
    }
}

struct Benchmark {
    seeds: Vec<SeedOutcome>,
    elapsed: Duration,
}

const BENCH_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn run_benchmark_seed(seed: u64) -> SeedOutcome {
    let cfg = SyntheticConfig {
        seed,
        stations: 60,
        days: 1095,
        start_date: NaiveDate::from_ymd_opt(2014, 1, 1).unwrap(),
        ..SyntheticConfig::default()
    };
    let ds = generate_synthetic(&cfg).unwrap();
    let (train, valid) = split_by_period(&ds, DateRange::years(2014, 2015), DateRange::years(2016, 2016)).unwrap();
    assert_eq!((train.len(), valid.len()), (60 * 730, 60 * 365));
    let settings = FitSettings { seed, ..FitSettings::default() };
    let mut forecasts = Vec::new();
    for kind in ModelKind::ALL {
        let model = fit_model(kind, &train, &settings).unwrap();
        forecasts.push((kind.name().to_string(), model.predict_dataset(&valid).unwrap()));
    }
    let report = evaluate(&valid, &forecasts, &EvaluationOptions { seed, ..Default::default() }).unwrap();
    let raw = report.summary(RAW_ENSEMBLE).unwrap();
    let of = |k: ModelKind| report.summary(k.name()).unwrap();
    SeedOutcome {
        raw_crps: raw.mean_crps,
        crps: ModelKind::ALL.iter().map(|&k| (k, of(k).mean_crps)).collect(),
        raw_chi2: raw.histogram.chi_square(),
        chi2: ModelKind::ALL.iter().map(|&k| (k, of(k).histogram.chi_square())).collect(),
        raw_spread_error: raw.spread_error.unwrap(),
        nn_spread_error: of(ModelKind::Network(Variant::NnAuxEmb)).spread_error.unwrap(),
    }
}

fn benchmark() -> &'static Benchmark {
    static BENCH: OnceLock<Benchmark> = OnceLock::new();
    BENCH.get_or_init(|| {
        let start = Instant::now();
        let seeds = BENCH_SEEDS.iter().map(|&s| run_benchmark_seed(s)).collect();
        Benchmark {
            seeds,
            elapsed: start.elapsed(),
        }
    })
}

#[test]
fn criterion_07_benchmark_ordering() {
    let b = benchmark();
    let n = b.seeds.len() as f64;
    let avg = |k: ModelKind| b.seeds.iter().map(|s| s.crps_of(k)).sum::<f64>() / n;
    let raw = b.seeds.iter().map(|s| s.raw_crps).sum::<f64>() / n;

    let worst_vs_raw = ModelKind::ALL.iter().map(|&k| avg(k)).fold(f64::NEG_INFINITY, f64::max);
    let every_seed_beats_raw = b.seeds.iter().all(|s| s.crps.iter().all(|(_, c)| *c < s.raw_crps));
    let a = every_seed_beats_raw && worst_vs_raw < raw;

    let fcn = avg(ModelKind::Network(Variant::Fcn));
    let gl = avg(ModelKind::EmosGlobal);
    let fcn_gap = (fcn / gl - 1.0).abs();
    let b_ok = fcn_gap <= 0.03;

    let loc = avg(ModelKind::EmosLocal);
    let fcn_emb = avg(ModelKind::Network(Variant::FcnEmb));
    let c_ok = loc < gl && fcn_emb < fcn;

    let nn = ModelKind::Network(Variant::NnAuxEmb);
    let nn_best = b
        .seeds
        .iter()
        .filter(|s| s.crps.iter().all(|(k, c)| *k == nn || s.crps_of(nn) < *c))
        .count();
    let d_ok = nn_best >= 4;

    let mut table = String::new();
    for k in ModelKind::ALL {
        table.push_str(&format!(" {}={:.4}", k.name(), avg(k)));
    }
    let pass = a && b_ok && c_ok && d_ok && b.elapsed < Duration::from_secs(15 * 60);
    report(
        7,
        pass,
        format!(
            "(a) all models beat raw {raw:.4}: {a}; (b) |fcn/emos-gl - 1| = {:.2}%: {b_ok}; (c) emos-loc {loc:.4} < emos-gl {gl:.4} and fcn-emb {fcn_emb:.4} < fcn {fcn:.4}: {c_ok}; (d) nn-aux-emb best in {nn_best}/5 seeds: {d_ok}; benchmark {:.0} s; mean CRPS:{table}",
            100.0 * fcn_gap,
            b.elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_08_calibration() {
    let b = benchmark();
    let mut chi_ok = true;
    let mut spread_ok = true;
    let mut detail = String::new();
    for (seed, s) in BENCH_SEEDS.iter().zip(&b.seeds) {
        let worst = s.chi2.iter().map(|(_, c)| *c).fold(0.0_f64, f64::max);
        let nn = s.chi2.iter().find(|(k, _)| *k == ModelKind::Network(Variant::NnAuxEmb)).unwrap().1;
        chi_ok &= worst < s.raw_chi2;
        spread_ok &= s.raw_spread_error < 0.7 && (0.85..=1.1).contains(&s.nn_spread_error);
        detail.push_str(&format!(
            " seed {seed}: raw chi2 {:.0}, nn-aux-emb chi2 {nn:.0}, largest post-processed chi2 {worst:.0}, spread/error raw {:.3} -> nn-aux-emb {:.3};",
            s.raw_chi2, s.raw_spread_error, s.nn_spread_error
        ));
    }
    let pass = chi_ok && spread_ok;
    report(8, pass, format!("chi-square below raw for every model: {chi_ok}; spread/error shift: {spread_ok};{detail}"));
    assert!(pass);
}

// ---------------------------------------------------------------- 9

#[test]
fn criterion_09_significance_machinery() {
    let start = Instant::now();
    let trials = 10_000;
    let n = 365;
    let mut rng = ChaCha8Rng::seed_from_u64(900);
    let a = GaussianForecast::new(0.3, 1.0).unwrap();
    let bf = GaussianForecast::new(-0.3, 1.0).unwrap();
    let mut rejections = 0;
    for _ in 0..trials {
        let (mut s1, mut s2) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for _ in 0..n {
            let y = z(&mut rng);
            s1.push(a.crps(y));
            s2.push(bf.crps(y));
        }
        if dm_test(&s1, &s2, DEFAULT_DM_LAG).unwrap().p_value < 0.05 {
            rejections += 1;
        }
    }
    let rate = rejections as f64 / trials as f64;
    let null_ok = (rate - 0.05).abs() <= 0.01;

    let bh = bh_procedure(&[0.01, 0.02, 0.04], 0.05).unwrap();
    let bh_ok = bh.rejected == vec![true, true, true];

    let start_date = NaiveDate::from_ymd_opt(2016, 1, 1).unwrap();
    let mut better = Vec::new();
    let mut worse = Vec::new();
    for station in 0..10u32 {
        for t in 0..200 {
            let day = start_date + chrono::Duration::days(t);
            let base = 1.0 + 0.3 * z(&mut rng);
            let rec = |score| ScoreRecord { station_id: station, valid_time: day, score };
            better.push(rec(base));
            worse.push(rec(base + 0.5 + 0.05 * z(&mut rng)));
        }
    }
    let models = [
        ModelScores { name: "better".into(), records: better },
        ModelScores { name: "worse".into(), records: worse },
    ];
    let m = pairwise_significance_matrix(&models, 0.05, DEFAULT_DM_LAG).unwrap();
    let matrix_ok = m[0][1] == 100.0 && m[1][0] == 0.0;

    let elapsed = start.elapsed();
    let pass = null_ok && bh_ok && matrix_ok && elapsed < Duration::from_secs(60);
    report(
        9,
        pass,
        format!(
            "DM null rejection rate {:.2}% over {trials} trials: {null_ok}; BH on [0.01,0.02,0.04] rejects {:?}: {bh_ok}; dominance matrix entry {:.0}% (reverse {:.0}%): {matrix_ok}; {:.1} s",
            100.0 * rate,
            bh.rejected,
            m[0][1],
            m[1][0],
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 10

/// Every predictor is independent noise except a handful of weak drivers;
/// the t2m mean carries ten times the signal of any of them.
fn dominance_dataset(seed: u64, days: usize) -> ForecastDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = FeatureSpec::full();
    let im = spec.index_of("t2m_mean").unwrap();
    let is = spec.index_of("t2m_std").unwrap();
    let weak: Vec<usize> = ["cape_mean", "sp_mean", "tcc_mean", "u10_mean"]
        .iter()
        .map(|n| spec.index_of(n).unwrap())
        .collect();
    let stations: Vec<Station> = (0..20)
        .map(|i| Station {
            id: i,
            latitude: 47.0 + 0.4 * i as f64,
            longitude: 6.0 + 0.3 * i as f64,
            altitude: 50.0 * i as f64,
        })
        .collect();
    let start = NaiveDate::from_ymd_opt(2015, 1, 1).unwrap();
    let mut samples = Vec::new();
    for t in 0..days {
        for st in &stations {
            let mut x: Vec<f64> = (0..spec.len()).map(|_| z(&mut rng)).collect();
            x[0] = st.altitude;
            x[1] = st.altitude + 20.0;
            x[2] = st.latitude;
            x[3] = st.longitude;
            x[im] = 10.0 + 8.0 * z(&mut rng);
            x[is] = rng.gen_range(0.5..2.0);
            let signal: f64 = weak.iter().map(|&j| 0.8 * x[j]).sum();
            let y = x[im] + signal + (0.5 + 0.3 * x[is]) * z(&mut rng);
            samples.push(Sample {
                station_id: st.id,
                valid_time: start + chrono::Duration::days(t as i64),
                predictors: x,
                observation: y,
                members: Vec::new(),
            });
        }
    }
    ForecastDataset::new(spec, stations, samples).unwrap()
}

#[test]
fn criterion_10_importance_sanity() {
    let start = Instant::now();
    let mut first = 0;
    let mut identity_zero = true;
    let mut tops = Vec::new();
    for seed in 0..5u64 {
        let train = dominance_dataset(1000 + seed, 300);
        let valid = dominance_dataset(2000 + seed, 60);
        let settings = FitSettings {
            seed,
            network: NetworkSettings { run_count: 3, ..NetworkSettings::default() },
            ..FitSettings::default()
        };
        let model = fit_model(ModelKind::Network(Variant::NnAuxEmb), &train, &settings).unwrap();
        let id = permutation_importance(&model, &valid, &PermutationPlan::identity(valid.len())).unwrap();
        identity_zero &= id.importance.iter().all(|v| *v == 0.0);
        let r = permutation_importance(&model, &valid, &PermutationPlan::new(valid.len(), seed)).unwrap();
        let top = r.ranked()[0];
        if top.0 == "t2m_mean" {
            first += 1;
        }
        tops.push(format!("{}={:.3}", top.0, top.1));
    }
    let elapsed = start.elapsed();
    let pass = identity_zero && first == 5;
    report(
        10,
        pass,
        format!(
            "identity permutation gives all-zero importance: {identity_zero}; t2m_mean ranked first for nn-aux-emb in {first}/5 seeds (top: {}), {:.1} s",
            tops.join(", "),
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}
