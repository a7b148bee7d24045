//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fail.

use std::process::ExitCode;
use std::time::Instant;

use dataprice::anchor::{derive_b0, AnchorDataset};
use dataprice::calibration::{fit_ols, ObservedDeal};
use dataprice::deal_model::{utility_multiplier, DealAttributes, FormulaParams};
use dataprice::engine::{estimate_mean, estimate_quantiles, semi_analytic_median, Transform, MB_PER_GB};
use dataprice::priors::{sample_governed, Bound};
use dataprice::report::run_price;
use dataprice::rng::{substream, StreamRole};
use dataprice::scenario::CASE_STUDY_B0;
use dataprice::{
    map_attributes, simulate, ConstraintSet, DealSource, MultiplierVector, NodeTable, PriorSpec, Scenario,
    SimulationPlan,
};
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

const P5: f64 = 1.6926e-4;
const P50: f64 = 3.4630e-4;
const P95: f64 = 7.0578e-4;
const VOLUME_MB: f64 = 5_368_709_120.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn case_x() -> MultiplierVector {
    map_attributes(
        &DealAttributes::case_study(),
        &NodeTable::reference(),
        &FormulaParams::default(),
    )
    .unwrap()
}

fn point_estimate() -> Outcome {
    let start = Instant::now();
    let prior = PriorSpec::degenerate(CASE_STUDY_B0, PriorSpec::case_study(CASE_STUDY_B0).mu);
    let samples = simulate(
        &SimulationPlan::new(1, 1, 1),
        &prior,
        &ConstraintSet::case_study(),
        DealSource::Fixed(case_x()),
    )
    .unwrap();
    let price = samples.prices()[0];
    let ms = start.elapsed().as_secs_f64() * 1e3;
    outcome(
        rel(price, 3.49e-4) <= 0.005,
        format!("price {price:.5e} USD/MB vs 3.49e-4 (±0.5%), {ms:.2} ms"),
    )
}

struct SeedRun {
    p5: f64,
    p50: f64,
    p95: f64,
    seconds: f64,
}

fn case_study_runs() -> Vec<SeedRun> {
    let prior = PriorSpec::case_study(CASE_STUDY_B0);
    let constraints = ConstraintSet::case_study();
    let x = case_x();
    (1..=20u64)
        .map(|seed| {
            let start = Instant::now();
            let samples =
                simulate(&SimulationPlan::case_study(seed), &prior, &constraints, DealSource::Fixed(x)).unwrap();
            let bands = samples.bands().unwrap();
            SeedRun {
                p5: bands.at(0.05).unwrap(),
                p50: bands.at(0.5).unwrap(),
                p95: bands.at(0.95).unwrap(),
                seconds: start.elapsed().as_secs_f64(),
            }
        })
        .collect()
}

fn case_study_bands(runs: &[SeedRun]) -> Outcome {
    let n = runs.len() as f64;
    let p50_ok = runs.iter().filter(|r| (3.29e-4..=3.64e-4).contains(&r.p50)).count();
    let p5_ok = runs.iter().filter(|r| rel(r.p5, P5) <= 0.12).count();
    let p95_ok = runs.iter().filter(|r| rel(r.p95, P95) <= 0.12).count();
    let slowest = runs.iter().map(|r| r.seconds).fold(0.0, f64::max);

    let median = semi_analytic_median(
        &PriorSpec::case_study(CASE_STUDY_B0),
        &ConstraintSet::case_study(),
        &case_x(),
    )
    .unwrap();
    let mean_p50 = runs.iter().map(|r| r.p50).sum::<f64>() / n;
    let sd_p50 = (runs.iter().map(|r| (r.p50 - mean_p50).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let z = (mean_p50 - median) / (sd_p50 / n.sqrt());

    let pass = p50_ok >= 18 && p5_ok >= 18 && p95_ok >= 18 && z.abs() <= 3.0 && slowest < 1.0;
    outcome(
        pass,
        format!(
            "P50 in band {p50_ok}/20, P5 {p5_ok}/20, P95 {p95_ok}/20; mean P50 {mean_p50:.4e} vs closed-form {median:.4e} (z = {z:+.2}); slowest run {slowest:.3} s"
        ),
    )
}

fn contract_totals(runs: &[SeedRun]) -> Outcome {
    let published_total = P50 * VOLUME_MB;
    let totals_ok = runs.iter().filter(|r| rel(r.p50 * VOLUME_MB, 1.859e6) <= 0.05).count();
    let gb = [P5, P50, P95].map(|p| (p * MB_PER_GB * 1000.0).round() / 1000.0);
    let gb_ok = gb == [0.173, 0.355, 0.723];
    let run = &runs[0];
    let run_gb = [run.p5, run.p50, run.p95].map(|p| p * MB_PER_GB);
    let run_gb_ok = rel(run_gb[0], 0.173) <= 0.12 && rel(run_gb[1], 0.355) <= 0.05 && rel(run_gb[2], 0.723) <= 0.12;
    outcome(
        rel(published_total, 1.859e6) < 5e-4 && totals_ok >= 18 && gb_ok && run_gb_ok,
        format!(
            "published P50 total ${:.4}M; simulated totals within 5% in {totals_ok}/20 runs; GB bands {:?} (seed 1: {:.3}/{:.3}/{:.3})",
            published_total / 1e6,
            gb,
            run_gb[0],
            run_gb[1],
            run_gb[2]
        ),
    )
}

fn round_to(value: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    (value * scale).round() / scale
}

fn multiplier_formulas() -> Outcome {
    let x = case_x();
    let printed = [(1.65, 2), (1.29189, 5), (1.21, 2), (1.56599, 5), (1.6445, 4)];
    let all_match = x
        .values()
        .iter()
        .zip(printed)
        .all(|(v, (want, d))| round_to(*v, d) == want);
    let params = FormulaParams::default();
    let util = utility_multiplier(25e6, params.utility_scale, params.utility_denominator_usd, params.utility_log_base)
        .unwrap();
    let natural = 1.0 + 0.4 * 26f64.ln();
    outcome(
        all_match && round_to(util, 5) == 1.56599 && (natural - util).abs() > 0.5,
        format!("x = {:?}; UTIL(25M) = {util:.5} (natural log would give {natural:.3})", x.values()),
    )
}

fn truncated_normal() -> Outcome {
    let mut prior = PriorSpec::degenerate(1.0, [0.0; 5]);
    prior.s[0] = 1.0;
    let mut constraints = ConstraintSet::unconstrained();
    constraints.beta_bounds[0] = Bound::new(0.0, 3.0);
    let mut rng = substream(5, 0, StreamRole::Parameters);
    let mut draw = || sample_governed(&prior, &constraints, &mut rng, 1000).unwrap().theta.beta[0];

    let phi = Normal::new(0.0, 1.0).unwrap();
    let mass = phi.cdf(3.0) - phi.cdf(0.0);
    let density = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let oracle_mean = (density(0.0) - density(3.0)) / mass;

    let n = 1_000_000;
    let mut sum = 0.0;
    let mut first = Vec::with_capacity(100_000);
    for i in 0..n {
        let v = draw();
        sum += v;
        if i < 100_000 {
            first.push(v);
        }
    }
    let mean = sum / n as f64;
    first.sort_by(f64::total_cmp);
    let m = first.len() as f64;
    let ks = first
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = (phi.cdf(v) - phi.cdf(0.0)) / mass;
            (f - i as f64 / m).abs().max(((i + 1) as f64 / m - f).abs())
        })
        .fold(0.0, f64::max);
    outcome(
        (mean - oracle_mean).abs() <= 0.005 && ks < 0.01,
        format!("mean {mean:.5} vs {oracle_mean:.5} at 1e6 draws; KS {ks:.5} at 1e5 draws"),
    )
}

/// `P = exp(alpha)` with `alpha ~ N(0, 1)`: a pure LogNormal(0, 1) sample.
fn lognormal_samples(n: usize, seed: u64) -> Vec<f64> {
    let mut prior = PriorSpec::degenerate(1.0, [0.0; 5]);
    prior.s_alpha = 1.0;
    simulate(
        &SimulationPlan::new(n, 1, seed),
        &prior,
        &ConstraintSet::unconstrained(),
        DealSource::Fixed(MultiplierVector::neutral()),
    )
    .unwrap()
    .prices()
    .to_vec()
}

fn estimator_consistency() -> Outcome {
    let start = Instant::now();
    let truth = 0.5f64.exp();
    let sizes = [100usize, 1_000, 10_000, 100_000];
    let reps = 60;
    let points: Vec<(f64, f64)> = sizes
        .iter()
        .map(|&n| {
            let mse = (0..reps)
                .map(|r| {
                    let est = estimate_mean(&lognormal_samples(n, 1000 * n as u64 + r), Transform::Identity).unwrap();
                    (est.estimate - truth).powi(2)
                })
                .sum::<f64>()
                / reps as f64;
            ((n as f64).ln(), mse.sqrt().ln())
        })
        .collect();
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let slope = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / points.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();

    let qs = [0.05, 0.5, 0.95];
    let got = estimate_quantiles(&lognormal_samples(1_000_000, 77), &qs).unwrap();
    let phi = Normal::new(0.0, 1.0).unwrap();
    let want = qs.map(|q| phi.inverse_cdf(q).exp());
    let quantiles_ok = got.iter().zip(want).all(|(g, w)| rel(*g, w) <= 0.02);
    let seconds = start.elapsed().as_secs_f64();
    outcome(
        (slope + 0.5).abs() <= 0.15 && quantiles_ok && seconds < 30.0,
        format!(
            "RMSE slope {slope:.3}; quantiles {:.4}/{:.4}/{:.4} vs {:.4}/{:.4}/{:.4}; {seconds:.1} s",
            got[0], got[1], got[2], want[0], want[1], want[2]
        ),
    )
}

/// Straight from the definition: the smallest sample value `v` with
/// `#{x <= v} / n >= q`.
fn naive_quantile(samples: &[f64], q: f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    *sorted
        .iter()
        .find(|&&v| sorted.iter().filter(|&&x| x <= v).count() as f64 / n >= q)
        .unwrap()
}

fn quantile_oracle() -> Outcome {
    let mut rng = substream(7, 0, StreamRole::Probe);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..200);
        // coarse rounding on some sets forces ties
        let grid = if rng.gen_bool(0.3) { 4.0 } else { 1e9 };
        let samples: Vec<f64> = (0..n)
            .map(|_| (rng.sample::<f64, _>(StandardNormal) * grid).round() / grid)
            .collect();
        let mut qs: Vec<f64> = (0..rng.gen_range(1..6)).map(|_| rng.gen_range(0.001..0.999)).collect();
        qs.extend([0.05, 0.5, 0.95]);
        qs.sort_by(f64::total_cmp);
        qs.dedup();
        let got = estimate_quantiles(&samples, &qs).unwrap();
        mismatches += qs
            .iter()
            .zip(&got)
            .filter(|(q, g)| naive_quantile(&samples, **q) != **g)
            .count();
    }
    outcome(mismatches == 0, format!("{mismatches} mismatches over 1000 random sets"))
}

fn anchor_table() -> Outcome {
    let data = AnchorDataset::embedded();
    let mut worst = (0, 0.0);
    for year in 2015..=2025 {
        let row = data.row(year).unwrap();
        let err = rel(row.b0().unwrap(), row.published_b0.unwrap());
        if err > worst.1 {
            worst = (year, err);
        }
    }
    let b2025 = derive_b0(6709e9, 175.0).unwrap();
    outcome(
        worst.1 <= 0.03 && (b2025 * 1e7).round() / 1e7 == 3.83e-5 && (round_to(b2025 * 1e5, 2) - 3.83).abs() < 1e-12,
        format!(
            "largest deviation {:.2}% ({}); 2025 b0 = {b2025:.4e}",
            worst.1 * 100.0,
            worst.0
        ),
    )
}

const TRUE_ALPHA: f64 = -9.8;
const TRUE_BETA: [f64; 5] = [1.1, 0.8, 1.0, 1.3, 1.2];

fn synthetic_deals(n: usize, sigma: f64, seed: u64) -> Vec<ObservedDeal> {
    let mut rng = substream(seed, 0, StreamRole::Deals);
    (0..n)
        .map(|_| {
            let x = MultiplierVector::new(std::array::from_fn(|_| rng.gen_range(1.0..2.5))).unwrap();
            let eta = sigma * rng.sample::<f64, _>(StandardNormal);
            let log_p = TRUE_ALPHA + TRUE_BETA.iter().zip(x.logs()).map(|(b, z)| b * z).sum::<f64>() + eta;
            ObservedDeal::new(x, log_p.exp()).unwrap()
        })
        .collect()
}

fn calibration_loop() -> Outcome {
    let exact = fit_ols(&synthetic_deals(40, 0.0, 1)).unwrap();
    let exact_err = (exact.alpha_hat - TRUE_ALPHA)
        .abs()
        .max(exact.beta_hat.iter().zip(TRUE_BETA).map(|(b, t)| (b - t).abs()).fold(0.0, f64::max));

    let mut worst_z: f64 = 0.0;
    let mut outside = 0;
    for rep in 0..50 {
        let fit = fit_ols(&synthetic_deals(500, 0.2, 100 + rep)).unwrap();
        let mut zs = vec![(fit.alpha_hat - TRUE_ALPHA) / fit.alpha_se];
        zs.extend((0..5).map(|j| (fit.beta_hat[j] - TRUE_BETA[j]) / fit.beta_se[j]));
        for z in zs {
            worst_z = worst_z.max(z.abs());
            if z.abs() > 4.0 {
                outside += 1;
            }
        }
    }
    outcome(
        exact_err < 1e-9 && outside == 0,
        format!("noise-free max error {exact_err:.1e}; noisy fits: {outside}/300 coefficients beyond 4 SE (max |z| {worst_z:.2})"),
    )
}

fn report_json(threads: usize) -> String {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| run_price(&Scenario::case_study(4242)).unwrap().report.to_json())
}

fn determinism() -> Outcome {
    let a = report_json(1);
    let b = report_json(4);
    let c = report_json(4);
    outcome(
        a == b && b == c,
        format!("{} byte report identical across 1, 4, 4 threads: {}", a.len(), a == b && b == c),
    )
}

fn main() -> ExitCode {
    let runs = case_study_runs();
    let results = [
        ("1 point estimate", point_estimate()),
        ("2 case-study bands", case_study_bands(&runs)),
        ("3 contract totals", contract_totals(&runs)),
        ("4 multiplier formulas", multiplier_formulas()),
        ("5 rejection-sampler exactness", truncated_normal()),
        ("6 estimator consistency", estimator_consistency()),
        ("7 quantile oracle", quantile_oracle()),
        ("8 anchor table", anchor_table()),
        ("9 calibration loop", calibration_loop()),
        ("10 determinism", determinism()),
    ];
    let mut failed = 0;
    for (name, result) in &results {
        let tag = if result.pass { "PASS" } else { "FAIL" };
        if !result.pass {
            failed += 1;
        }
        println!("[{tag}] criterion {name}: {}", result.detail);
    }
    println!("acceptance: {}/{} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
