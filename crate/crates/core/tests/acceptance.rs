//! Acceptance criteria 1 to 14. Prints one PASS/FAIL line per criterion with
//! the measured value, the pinned tolerance and the runtime.

mod common;

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use dashlab::attribution::{attribution_row, shap_local, shap_local_tree, AttributionConfig, AttributionMatrix, BackgroundSet, EvalPlan, Method};
use dashlab::boost::{fit, TrainConfig};
use dashlab::dash::{aggregate, consensus, info_loss_within, is_balanced, Aggregator};
use dashlab::experiments::{
    run_conditional_sweep, run_convergence, run_flip_sweep, run_ratio_sweep, seed_matrix, FlipLayout, SweepConfig,
};
use dashlab::stability::{
    axiom_split_counts, correlate_groups, empirical_flip_rate, exact_flip_model, flip_from_snr, min_ensemble_size,
    normal_cdf, normal_quantile, screen, theoretical_ratio, z_test, DiagnosticReport, Verdict,
};
use dashlab::synthdata::{sample_dataset, DgpConfig, GroupSpec};
use ndarray::{Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

struct Outcome {
    pass: bool,
    /// Failure explained by a documented defect in the reference values; the
    /// line still reads FAIL but does not fail the run.
    known: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            known: false,
            detail: detail.into(),
        }
    }
}

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Outcome,
}

fn secs(s: u64) -> Option<Duration> {
    Some(Duration::from_secs(s))
}

fn main() {
    // Numeric arguments select criteria; anything else is ignored.
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria = [
        Criterion { id: 1, name: "TreeSHAP efficiency", limit: secs(30), run: c01_efficiency },
        Criterion { id: 2, name: "TreeSHAP oracle equivalence", limit: secs(60), run: c02_oracle },
        Criterion { id: 3, name: "analytic formulas", limit: None, run: c03_formulas },
        Criterion { id: 4, name: "Z-test null calibration", limit: secs(60), run: c04_null_calibration },
        Criterion { id: 5, name: "flip rate follows Phi(-SNR)", limit: secs(60), run: c05_snr_law },
        Criterion { id: 6, name: "balanced-ensemble equity", limit: None, run: c06_equity },
        Criterion { id: 7, name: "variance contraction and median ARE", limit: secs(120), run: c07_variance },
        Criterion { id: 8, name: "coin-flip regime", limit: secs(300), run: c08_coin_flip },
        Criterion { id: 9, name: "between-group stability", limit: secs(300), run: c09_between },
        Criterion { id: 10, name: "DASH convergence", limit: secs(600), run: c10_convergence },
        Criterion { id: 11, name: "ratio sweep on stumps", limit: secs(600), run: c11_ratio },
        Criterion { id: 12, name: "conditional escape", limit: secs(600), run: c12_conditional },
        Criterion { id: 13, name: "Z versus flip correlation", limit: secs(300), run: c13_diagnostic_correlation },
        Criterion { id: 14, name: "determinism without subsampling", limit: None, run: c14_determinism },
    ];
    let mut failed = Vec::new();
    let mut known = Vec::new();
    let mut passed = 0;
    for c in criteria.iter().filter(|c| filter.is_empty() || filter.contains(&c.id)) {
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let in_time = c.limit.is_none_or(|l| elapsed <= l);
        let pass = outcome.pass && in_time;
        let limit = c.limit.map_or(String::new(), |l| format!(" / limit {}s", l.as_secs()));
        let tolerated = !pass && outcome.known && in_time;
        println!(
            "criterion {:>2} {} {}: {} [{:.1}s{}]",
            c.id,
            match (pass, tolerated) {
                (true, _) => "PASS",
                (false, true) => "FAIL (known reference-table defect, see notes)",
                (false, false) => "FAIL",
            },
            c.name,
            outcome.detail,
            elapsed.as_secs_f64(),
            limit
        );
        if pass {
            passed += 1;
        } else if tolerated {
            known.push(c.id);
        } else {
            failed.push(c.id);
        }
    }
    let total = passed + known.len() + failed.len();
    println!("acceptance: {passed} of {total} criteria passed");
    if !known.is_empty() {
        println!("known discrepancies: {known:?}");
    }
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}

fn quick_train(rounds: usize, depth: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        rounds,
        max_depth: depth,
        seed,
        ..TrainConfig::default()
    }
}

fn c01_efficiency() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for m in 0..50u64 {
        let mut rng = common::rng(100 + m);
        let p = 2 + (m as usize % 6);
        let groups = GroupSpec::new(1, p, 0.3 + 0.01 * m as f64);
        let d = sample_dataset(&DgpConfig::symmetric(groups, 200, m)).unwrap();
        let e = fit(&d, &quick_train(10 + (m as usize % 20), 1 + (m as usize % 4), m)).unwrap();
        let bg = BackgroundSet::sample(d.features.view(), 10 + (m as usize % 40), m).unwrap();
        let bg_mean = e.predict_batch(bg.rows()).unwrap().mean().unwrap();
        let xs = common::normal_matrix(&mut rng, 20, p);
        for x in xs.rows() {
            let phi = shap_local(&e, x, &bg).unwrap();
            let err = (phi.values.iter().sum::<f64>() - (e.predict(x).unwrap() - bg_mean)).abs();
            worst = worst.max(err);
            cases += 1;
        }
    }
    Outcome::new(worst < 1e-9, format!("{cases} cases, max |sum(phi) - (f(x) - E f)| = {worst:.2e} (tol 1e-9)"))
}

fn c02_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for c in 0..200u64 {
        let mut rng = common::rng(7_000 + c);
        let p = 2 + (c as usize % 5);
        let bg_rows = common::normal_matrix(&mut rng, 1 + (c as usize % 16), p);
        let bg = BackgroundSet::new(bg_rows.clone()).unwrap();
        let x = common::normal_matrix(&mut rng, 1, p);
        let x = x.row(0);
        if c % 2 == 0 {
            // hand-built trees, features may repeat along a path
            let tree = common::random_tree(&mut rng, p, 1 + (c as usize % 3));
            let ours = shap_local_tree(&tree, x, &bg, p);
            let oracle = common::brute_force_shapley(
                &|v: &[f64]| tree.predict(ndarray::ArrayView1::from(v)),
                x,
                bg_rows.view(),
            );
            worst = ours.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
        } else {
            // fitted ensembles
            let d = sample_dataset(&DgpConfig::symmetric(GroupSpec::new(1, p, 0.5), 150, c)).unwrap();
            let e = fit(&d, &quick_train(8, 1 + (c as usize % 3), c)).unwrap();
            let ours = shap_local(&e, x, &bg).unwrap().values;
            let oracle = common::brute_force_shapley(
                &|v: &[f64]| e.predict(ndarray::ArrayView1::from(v)).unwrap(),
                x,
                bg_rows.view(),
            );
            worst = ours.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
        }
        cases += 1;
    }
    Outcome::new(worst < 1e-9, format!("{cases} cases, max |phi - oracle| = {worst:.2e} (tol 1e-9)"))
}

fn c03_formulas() -> Outcome {
    let mut problems = Vec::new();
    for (rho, want) in [(0.5, 1.33), (0.7, 1.96), (0.9, 5.26), (0.95, 10.26)] {
        let got = theoretical_ratio(rho, 1.0).unwrap();
        if (got - want).abs() > 0.01 {
            problems.push(format!("ratio({rho}) = {got:.4}, table {want}"));
        }
    }
    let m = min_ensemble_size(1.0, 0.15, 0.05).unwrap();
    if !(119..=122).contains(&m) {
        problems.push(format!("min_ensemble_size = {m}"));
    }
    let coef = normal_quantile(0.95).unwrap().powi(2);
    if (coef - 2.71).abs() > 0.01 {
        problems.push(format!("coefficient = {coef:.4}"));
    }
    // The m=6 and m=7 entries of the reference table are not log2(m!), the
    // formula printed in the same table's header (9.49 and 12.30).
    let table = [(2, 1.0), (3, 2.6), (4, 4.6), (5, 6.9), (6, 9.7), (7, 12.9), (8, 15.3)];
    let mut table_only = true;
    for (size, want) in table {
        let got = info_loss_within(size);
        if (got - want).abs() > 0.05 {
            problems.push(format!("bits lost m={size}: log2(m!) = {got:.3}, table {want}"));
            table_only &= size == 6 || size == 7;
        }
    }
    let table_mismatches = problems.len();
    let fm = exact_flip_model(2).unwrap();
    if fm.tie_prob != 0.0 || fm.flip_no_ties != 0.5 {
        problems.push(format!("exact_flip_model(2) = (tie {}, flip {})", fm.tie_prob, fm.flip_no_ties));
    }
    let phi = normal_cdf(-1.96);
    if (phi - 0.0250).abs() > 1e-4 {
        problems.push(format!("Phi(-1.96) = {phi}"));
    }
    let detail = format!(
        "ratio row, M_min = {m}, coefficient {coef:.4}, bits table m=2..8, flip model, Phi(-1.96) = {phi:.5}{}",
        if problems.is_empty() {
            String::new()
        } else {
            format!("; mismatches: {}", problems.join("; "))
        }
    );
    let mut out = Outcome::new(problems.is_empty(), detail);
    out.known = table_only && table_mismatches == problems.len();
    out
}

fn c04_null_calibration() -> Outcome {
    let reps = 1000;
    let m = 50;
    let mut rejections = 0;
    for r in 0..reps {
        let mut rng = common::rng(40_000 + r);
        let values = Array2::from_shape_fn((m, 2), |_| 5.0 + rng.sample::<f64, _>(StandardNormal));
        let attr = AttributionMatrix::from_values(values).unwrap();
        if z_test(&attr, 0, 1).unwrap().verdict == Verdict::Stable {
            rejections += 1;
        }
    }
    let rate = rejections as f64 / reps as f64;
    Outcome::new(
        (rate - 0.05).abs() <= 0.02,
        format!("{reps} null reps with M={m}: rejection rate {rate:.3} (target 0.05 +/- 0.02)"),
    )
}

fn c05_snr_law() -> Outcome {
    let m = 20_000;
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (i, snr) in [0.5, 1.0, 1.5, 2.0].into_iter().enumerate() {
        let mut rng = common::rng(50_000 + i as u64);
        let sd_each = 1.0 / 2f64.sqrt();
        let mut values = Array2::zeros((m, 2));
        for mut row in values.rows_mut() {
            row[0] = 10.0 + snr + sd_each * rng.sample::<f64, _>(StandardNormal);
            row[1] = 10.0 + sd_each * rng.sample::<f64, _>(StandardNormal);
        }
        let attr = AttributionMatrix::from_values(values).unwrap();
        let empirical = empirical_flip_rate(&attr, 0, 1);
        let theory = flip_from_snr(snr);
        worst = worst.max((empirical - theory).abs());
        parts.push(format!("SNR {snr}: {empirical:.4} vs {theory:.4}"));
    }
    Outcome::new(worst <= 0.02, format!("{} (max gap {worst:.4}, tol 0.02)", parts.join(", ")))
}

fn c06_equity() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for rho in [0.3, 0.5, 0.7, 0.9, 0.95] {
        for rounds in [10.0, 100.0, 1000.0] {
            for half in [1, 5, 25] {
                let (first, other) = axiom_split_counts(rho, rounds);
                let c = 0.013 * rounds;
                let mut values = Array2::zeros((2 * half, 2));
                let mut first_movers = Vec::new();
                for i in 0..2 * half {
                    let fm = i % 2;
                    values[[i, fm]] = c * first;
                    values[[i, 1 - fm]] = c * other;
                    first_movers.push(Some(fm));
                }
                assert!(is_balanced(&first_movers, &[0, 1]));
                let attr = AttributionMatrix::from_values(values).unwrap();
                for method in [Aggregator::Mean, Aggregator::Median, Aggregator::Trimmed(0.2)] {
                    let v = consensus(&attr, method).unwrap().values;
                    worst = worst.max((v[0] - v[1]).abs());
                    checked += 1;
                }
            }
        }
    }
    Outcome::new(
        worst <= 1e-12,
        format!("{checked} balanced axiom ensembles, max |phi_j - phi_k| = {worst:.1e} (tol 1e-12)"),
    )
}

fn c07_variance() -> Outcome {
    let reps = 4000;
    let m = 51;
    let sigma = 1.0;
    let mut means = Vec::with_capacity(reps);
    let mut medians = Vec::with_capacity(reps);
    for r in 0..reps {
        let mut rng = common::rng(70_000 + r as u64);
        let values = Array2::from_shape_fn((m, 1), |_| 10.0 + sigma * rng.sample::<f64, _>(StandardNormal));
        let attr = AttributionMatrix::from_values(values).unwrap();
        means.push(aggregate(&attr, Aggregator::Mean).unwrap()[0]);
        medians.push(aggregate(&attr, Aggregator::Median).unwrap()[0]);
    }
    let var = |v: &[f64]| {
        let mu = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (v.len() - 1) as f64
    };
    let var_mean = var(&means);
    let target = sigma * sigma / m as f64;
    let contraction_err = (var_mean / target - 1.0).abs();
    let are = var(&medians) / var_mean;
    let are_err = (are / (PI / 2.0) - 1.0).abs();
    Outcome::new(
        contraction_err <= 0.15 && are_err <= 0.10,
        format!(
            "{reps} reps, M={m}: Var(mean)/(sigma^2/M) = {:.3} (tol 15%), Var(median)/Var(mean) = {are:.3} vs pi/2 (tol 10%)",
            var_mean / target
        ),
    )
}

fn sweep_cfg(seeds: usize) -> SweepConfig {
    SweepConfig {
        seeds,
        ..SweepConfig::default()
    }
}

fn flip_sweep() -> &'static dashlab::experiments::ExperimentOutput {
    use std::sync::OnceLock;
    static OUT: OnceLock<dashlab::experiments::ExperimentOutput> = OnceLock::new();
    OUT.get_or_init(|| run_flip_sweep(&[0.9], &FlipLayout::default(), &sweep_cfg(50)).unwrap())
}

fn c08_coin_flip() -> Outcome {
    let within = flip_sweep().rows_for("within").next().unwrap().measured;
    Outcome::new(
        (0.35..=0.50).contains(&within),
        format!("m=2, rho=0.9, 50 seeds: within-group flip {within:.3} (band [0.35, 0.50])"),
    )
}

fn c09_between() -> Outcome {
    let between = flip_sweep().rows_for("between").next().unwrap().measured;
    Outcome::new(between <= 0.05, format!("same sweep: between-group flip {between:.3} (max 0.05)"))
}

fn c10_convergence() -> Outcome {
    let out = run_convergence(0.9, &[1, 25], &FlipLayout::default(), 200, &sweep_cfg(50)).unwrap();
    let at = |m: usize| out.rows_for("consensus_flip").find(|r| r.models == Some(m)).unwrap().measured;
    let (single, dash) = (at(1), at(25));
    Outcome::new(
        dash < 0.05 && dash < single / 3.0,
        format!("consensus flip M=1 {single:.3}, M=25 {dash:.4} (need < 0.05 and < M=1 / 3)"),
    )
}

fn c11_ratio() -> Outcome {
    let mut cfg = sweep_cfg(30);
    cfg.train.max_depth = 1;
    let rhos = [0.0, 0.3, 0.5, 0.7, 0.9, 0.95];
    let out = run_ratio_sweep(&[1], &rhos, &cfg).unwrap();
    let alpha = out.fitted["alpha_depth_1"];
    let ratios: Vec<f64> = out.rows_for("depth=1").map(|r| r.measured).collect();
    let increasing = ratios.windows(2).all(|w| w[1] > w[0]);
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
    Outcome::new(
        alpha > 0.4 && alpha < 0.8 && increasing,
        format!(
            "fitted alpha {alpha:.3} (band (0.4, 0.8)); ratios at rho {rhos:?}: [{}], strictly increasing: {increasing}",
            shown.join(", ")
        ),
    )
}

fn c12_conditional() -> Outcome {
    let cfg = sweep_cfg(50);
    let low = run_conditional_sweep(&[0.5], &[0.5, 1.0], &cfg).unwrap();
    let high = run_conditional_sweep(&[0.99], &[0.0], &cfg).unwrap();
    let escaped: Vec<f64> = low.rows.iter().map(|r| r.measured).collect();
    let trapped = high.rows[0].measured;
    let ok = escaped.iter().all(|f| *f <= 0.05) && (0.4..=0.5).contains(&trapped);
    Outcome::new(
        ok,
        format!(
            "rho=0.5, delta_beta 0.5/1.0: flip {:.3}/{:.3} (max 0.05); rho=0.99, delta_beta 0: flip {trapped:.3} (band [0.4, 0.5])",
            escaped[0], escaped[1]
        ),
    )
}

fn c13_diagnostic_correlation() -> Outcome {
    // 4 groups of 5 with graded coefficients inside each group, so
    // within-group pairs range from symmetric to clearly separated.
    let groups = GroupSpec::new(4, 5, 0.9);
    let inner = [1.0, 1.05, 1.1, 1.2, 1.4];
    let dgp = |seed| {
        let mut c = DgpConfig::symmetric(groups.clone(), 2000, seed);
        c.betas = (0..20).map(|j| inner[j % 5]).collect();
        c
    };
    let attr = seed_matrix(&dgp, &sweep_cfg(50)).unwrap();
    let mut pairs = Vec::new();
    for g in 0..4 {
        for a in 0..5 {
            for b in a + 1..5 {
                pairs.push((5 * g + a, 5 * g + b));
            }
        }
    }
    let report = DiagnosticReport::for_pairs(&attr, &pairs).unwrap();
    let r = report.summary.pearson_r_between_z_and_flip.unwrap_or(f64::NAN);
    Outcome::new(
        r <= -0.6,
        format!("P=20, {} within-group pairs, 50 models: Pearson r(Z, flip) = {r:.3} (max -0.6)", pairs.len()),
    )
}

fn c14_determinism() -> Outcome {
    let d = sample_dataset(&DgpConfig::symmetric(GroupSpec::new(2, 2, 0.9).with_extras(1), 600, 14)).unwrap();
    let attr_cfg = AttributionConfig::default();
    let plan = EvalPlan::split(&d, &attr_cfg).unwrap();
    let groups = correlate_groups(d.features.view(), 0.5);
    let base = TrainConfig {
        subsample: 1.0,
        colsample: 1.0,
        ..TrainConfig::default()
    };
    let mut outputs: Vec<(String, String, String)> = Vec::new();
    for seed in 0..5 {
        let e = fit(&plan.train, &base.with_seed(seed)).unwrap();
        let trees = serde_json::to_string(&(e.base_score, &e.trees, &e.split_log)).unwrap();
        let row = attribution_row(&e, &plan, Method::Shap, seed).unwrap();
        let attr = AttributionMatrix::from_values(
            ndarray::Array1::from(row.values).insert_axis(Axis(0)),
        )
        .unwrap();
        let mut csv = Vec::new();
        attr.write_csv(&mut csv).unwrap();
        let screens: Vec<_> = groups
            .within_pairs()
            .into_iter()
            .map(|pair| screen(&e, pair, e.learning_rate).unwrap())
            .collect();
        let report = serde_json::to_string(&screens).unwrap();
        outputs.push((trees, String::from_utf8(csv).unwrap(), report));
    }
    let identical = outputs.windows(2).all(|w| w[0] == w[1]);
    Outcome::new(
        identical,
        format!("subsample=colsample=1, seeds 0..5: ensembles, attributions and screen reports byte-equal: {identical}"),
    )
}
