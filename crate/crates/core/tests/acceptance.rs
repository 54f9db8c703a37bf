//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each, and exits
//! non-zero if any failed.
//!
//! `ACCEPTANCE_TRIALS` scales the Monte Carlo trial counts (default 1000); the
//! stated tolerances are only meaningful at the default.

use std::process::ExitCode;
use std::time::Instant;

use ctrl_ransac::experiments::{
    gen_synthetic, pooled_p_values, run_trials, summarize, CovarianceKind, ExperimentKind,
    NoiseKind, SyntheticSpec, TrialOutcome, NO_INFERENCE,
};
use ctrl_ransac::inference::Method;
use ctrl_ransac::intervals::IntervalSet;
use ctrl_ransac::io::{read_csv_from, write_dataset_csv, write_json, ReportDocument};
use ctrl_ransac::linreg::{Covariance, Dataset};
use ctrl_ransac::pipeline::{Analysis, TestOptions};
use ctrl_ransac::ransac::{sample_subsets_raw, RansacConfig};
use ctrl_ransac::stats::{binomial_band, binomial_se, ks_uniform};
use ctrl_ransac::truncation::{
    brute_force_region_oracle, ctrl_ransac_region, default_search_range, dp_count_regions,
    OptimalityRule, ResidualRegionTable,
};
use ctrl_ransac::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn trials() -> usize {
    std::env::var("ACCEPTANCE_TRIALS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(1000)
}

fn paper_ransac() -> RansacConfig {
    RansacConfig::new(15, 2.0, 0)
}

fn null_spec(n: usize, seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        anomaly_count: Some(0),
        seed,
        ..SyntheticSpec::new(n, 5)
    }
}

fn rate_line(table: &ctrl_ransac::experiments::MetricsTable, method: &str) -> String {
    match table.row(method) {
        Some(r) => format!(
            "{method}={} ({}/{}, {} failed)",
            r.rate.map_or("n/a".into(), |v| format!("{v:.4}")),
            r.rejected,
            r.tested,
            r.failures
        ),
        None => format!("{method}=missing"),
    }
}

fn null_outcomes(covariance: CovarianceKind, seed: u64, methods: &[Method]) -> Result<Vec<TrialOutcome>> {
    let spec = SyntheticSpec {
        covariance,
        ..null_spec(100, seed)
    };
    run_trials(&spec, &paper_ransac(), methods, &TestOptions::default(), ExperimentKind::Fpr, trials())
}

fn criteria_1_2_3(out: &mut Vec<(u32, String, Verdict)>) -> Result<()> {
    let methods = [Method::Ctrl, Method::Naive, Method::Bonferroni];
    let outcomes = null_outcomes(CovarianceKind::Independence, 101, &methods)?;
    let table = summarize(ExperimentKind::Fpr, &outcomes, &methods, 0.05, 100, 0.0, 15);

    let ctrl = table.rate("ctrl").unwrap_or(f64::NAN);
    out.push((
        1,
        "FPR control".into(),
        verdict(
            (0.03..=0.07).contains(&ctrl),
            format!("{} over {} trials; want ctrl in [0.03, 0.07]", rate_line(&table, "ctrl"), outcomes.len()),
        ),
    ));

    let naive = table.rate("naive").unwrap_or(f64::NAN);
    let with_detection = outcomes.iter().filter(|o| !o.tested.is_empty()).count();
    let none = table.rate(NO_INFERENCE).unwrap_or(f64::NAN);
    out.push((
        2,
        "naive inflation".into(),
        verdict(
            naive >= 0.15 && none == 1.0 && with_detection > 0,
            format!(
                "{}, {} over {with_detection} trials with detections; want naive >= 0.15 and no_inference = 1",
                rate_line(&table, "naive"),
                rate_line(&table, NO_INFERENCE)
            ),
        ),
    ));

    let ind = pooled_p_values(&outcomes, Method::Ctrl);
    let (d_ind, p_ind) = ks_uniform(&ind);
    let corr_outcomes = null_outcomes(CovarianceKind::Correlation { rho: 0.5 }, 303, &[Method::Ctrl])?;
    let corr = pooled_p_values(&corr_outcomes, Method::Ctrl);
    let (d_corr, p_corr) = ks_uniform(&corr);
    out.push((
        3,
        "null uniformity".into(),
        verdict(
            ind.len() >= 1000 && corr.len() >= 1000 && p_ind > 0.01 && p_corr > 0.01,
            format!(
                "independence: {} p-values, D={d_ind:.4}, KS p={p_ind:.4}; correlation: {} p-values, D={d_corr:.4}, KS p={p_corr:.4}; want >= 1000 each, KS p > 0.01",
                ind.len(),
                corr.len()
            ),
        ),
    ));
    Ok(())
}

fn random_analysis(rng: &mut ChaCha8Rng, n: usize, p: usize, iterations: usize) -> Result<Option<Analysis>> {
    let spec = SyntheticSpec {
        delta: rng.random_range(0.0..4.0),
        seed: rng.random(),
        ..SyntheticSpec::new(n, p)
    };
    let (data, _) = gen_synthetic(&spec)?;
    let analysis = Analysis::run(&data, &RansacConfig::new(iterations, 2.0, rng.random()))?;
    let usable = !analysis.anomalies().is_empty() && !analysis.detection().no_inliers;
    Ok(usable.then_some(analysis))
}

fn criterion_4() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let opts = TestOptions::default();
    let (mut instances, mut tests, mut p_bad, mut region_bad) = (0, 0, 0, 0);
    let mut worst_p: f64 = 0.0;
    while instances < 100 {
        let n = rng.random_range(15..=60);
        let p = rng.random_range(1..=4);
        let Some(analysis) = random_analysis(&mut rng, n, p, 10)? else {
            continue;
        };
        instances += 1;
        for &i in analysis.anomalies().iter().take(3) {
            let ctx = analysis.context(i)?;
            let table = analysis.table(&ctx)?;
            let ctrl = analysis.p_value(Method::Ctrl, &ctx, &table, &opts);
            let ls = analysis.p_value(Method::LineSearch, &ctx, &table, &opts);
            tests += 1;
            match (ctrl, ls) {
                (Ok(c), Ok(l)) => {
                    let (lo, hi) = default_search_range(&ctx);
                    let window = IntervalSet::single(lo, hi);
                    if !c.region.intersect(&window).approx_eq(&l.region, 1e-8) {
                        region_bad += 1;
                    }
                    worst_p = worst_p.max((c.p_value - l.p_value).abs());
                    if (c.p_value - l.p_value).abs() > 1e-6 {
                        p_bad += 1;
                    }
                }
                _ => p_bad += 1,
            }
        }
    }
    Ok(verdict(
        p_bad == 0 && region_bad == 0,
        format!(
            "{instances} instances, {tests} anomalies: {p_bad} p-value mismatches (max |dp| = {worst_p:.2e}), {region_bad} region mismatches; want 0 and 0 at 1e-6 / 1e-8"
        ),
    ))
}

fn criterion_5() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let (mut instances, mut checked, mut disagree) = (0, 0, 0);
    while instances < 50 {
        let n = rng.random_range(10..=40);
        let p = rng.random_range(1..=3);
        let b = rng.random_range(1..=10);
        let spec = SyntheticSpec {
            delta: 3.0,
            seed: rng.random(),
            ..SyntheticSpec::new(n, p)
        };
        let (data, _) = gen_synthetic(&spec)?;
        let plan = sample_subsets_raw(n, p, b, rng.random())?;
        let fits = plan.fits(&data.x)?;
        let sets = ctrl_ransac::ransac::classify_with_fits(&data.x, &data.y, &fits, 2.0);
        let anomalies = ctrl_ransac::ransac::anomalies_of(&sets, n);
        if anomalies.is_empty() || anomalies.len() == n {
            continue;
        }
        let directions = ctrl_ransac::inference::TestDirections::new(&data.x, &anomalies)?;
        let i = anomalies[rng.random_range(0..anomalies.len())];
        let eta = directions.eta(i)?;
        let mut ctx = ctrl_ransac::inference::line_params(&data.y, &data.noise_covariance()?, &eta)?;
        ctx.anomaly = i;
        let table = ResidualRegionTable::build(&data.x, &fits, &ctx, 2.0)?;
        let region = ctrl_ransac_region(&table, &anomalies, OptimalityRule::FirstEncountered)?;
        let (z_min, z_max) = default_search_range(&ctx);
        let delta = (z_max - z_min) / 1e6;
        let grid = brute_force_region_oracle(&data.x, &fits, 2.0, &anomalies, &ctx, z_min, z_max, 1000)?;
        instances += 1;
        for (z, hit) in grid {
            let near = region
                .intervals()
                .iter()
                .any(|iv| (iv.lo - z).abs() <= delta || (iv.hi - z).abs() <= delta);
            if near {
                continue;
            }
            checked += 1;
            if region.contains(z) != hit {
                disagree += 1;
            }
        }
    }
    Ok(verdict(
        disagree == 0,
        format!("{instances} instances, {checked} grid points away from endpoints, {disagree} disagreements; want 0"),
    ))
}

fn enumerate_more_than(row: &[IntervalSet], k: usize) -> IntervalSet {
    let n = row.len();
    let mut out = IntervalSet::empty();
    for pattern in 0u32..(1 << n) {
        if (pattern.count_ones() as usize) <= k {
            continue;
        }
        let mut acc = IntervalSet::full();
        for (i, r) in row.iter().enumerate() {
            acc = if pattern >> i & 1 == 1 { acc.subtract(r) } else { acc.intersect(r) };
        }
        out = out.union(&acc);
    }
    out
}

fn criterion_6() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let (mut rows, mut comparisons, mut bad) = (0, 0, 0);
    for draw in 0..50 {
        let n = rng.random_range(2..=8);
        let p = rng.random_range(1..=2.min(n));
        let b = rng.random_range(1..=3);
        let spec = SyntheticSpec {
            delta: 3.0,
            anomaly_count: Some(rng.random_range(0..=n / 2)),
            seed: 6000 + draw,
            ..SyntheticSpec::new(n, p)
        };
        let (data, _) = gen_synthetic(&spec)?;
        let plan = sample_subsets_raw(n, p, b, rng.random())?;
        let fits = plan.fits(&data.x)?;
        // Arbitrary line through the data; every model's row gets checked.
        let dir = nalgebra::DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let ctx = ctrl_ransac::inference::TestContext {
            anomaly: 0,
            eta: dir.clone(),
            a: data.y.clone(),
            b_dir: dir,
            z_obs: 0.0,
            var: 1.0,
        };
        let table = ResidualRegionTable::build(&data.x, &fits, &ctx, 2.0)?;
        for u in 0..b {
            rows += 1;
            let dp = dp_count_regions(table.row(u), n);
            for k in 0..=n {
                comparisons += 1;
                if !dp.more_than(k as isize).approx_eq(&enumerate_more_than(table.row(u), k), 1e-9) {
                    bad += 1;
                }
            }
        }
    }
    Ok(verdict(
        bad == 0,
        format!("50 draws, {rows} model rows, {comparisons} (row, k) comparisons, {bad} mismatches; want 0"),
    ))
}

fn criteria_7_8(out: &mut Vec<(u32, String, Verdict)>) -> Result<()> {
    let spec = SyntheticSpec {
        delta: 3.0,
        seed: 707,
        ..SyntheticSpec::new(150, 5)
    };
    let methods = [Method::Ctrl, Method::Oc, Method::Bonferroni];
    let outcomes = run_trials(&spec, &paper_ransac(), &methods, &TestOptions::default(), ExperimentKind::Tpr, trials())?;
    let table = summarize(ExperimentKind::Tpr, &outcomes, &methods, 0.05, 150, 3.0, 15);
    let row = |m: &str| table.row(m).expect("row present");
    let (ctrl, oc, bonf) = (row("ctrl"), row("oc"), row("bonferroni"));
    let rate = |r: &ctrl_ransac::experiments::MetricsRow| r.rate.unwrap_or(0.0);
    let se = |r: &ctrl_ransac::experiments::MetricsRow| binomial_se(rate(r), r.tested);
    let margin_oc = 2.0 * (se(ctrl).powi(2) + se(oc).powi(2)).sqrt();
    let margin_bonf = 2.0 * (se(ctrl).powi(2) + se(bonf).powi(2)).sqrt();
    out.push((
        7,
        "TPR ordering".into(),
        verdict(
            rate(ctrl) - rate(oc) > margin_oc && rate(ctrl) - rate(bonf) > margin_bonf,
            format!(
                "{}, {}, {}; want ctrl - oc > {margin_oc:.4} and ctrl - bonferroni > {margin_bonf:.4}",
                rate_line(&table, "ctrl"),
                rate_line(&table, "oc"),
                rate_line(&table, "bonferroni")
            ),
        ),
    ));

    let median = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        if v.is_empty() { f64::NAN } else { v[v.len() / 2] }
    };
    let p_ctrl = pooled_p_values(&outcomes, Method::Ctrl);
    let p_oc = pooled_p_values(&outcomes, Method::Oc);
    let (count, m_ctrl, m_oc) = (p_ctrl.len().min(p_oc.len()), median(p_ctrl), median(p_oc));
    out.push((
        8,
        "OC dominance".into(),
        verdict(
            count >= 500 && m_ctrl <= m_oc,
            format!("{count} tested anomalies: median p ctrl = {m_ctrl:.4e}, oc = {m_oc:.4e}; want ctrl <= oc over >= 500"),
        ),
    ));
    Ok(())
}

fn criterion_9() -> Result<Verdict> {
    let spec = SyntheticSpec {
        delta: 3.0,
        seed: 909,
        ..SyntheticSpec::new(200, 5)
    };
    let methods = [Method::Ctrl, Method::LineSearch];
    let outcomes = run_trials(&spec, &paper_ransac(), &methods, &TestOptions::default(), ExperimentKind::Timing, 5)?;
    let table = summarize(ExperimentKind::Timing, &outcomes, &methods, f64::NAN, 200, 3.0, 15);
    let t = |m: &str| table.row(m).and_then(|r| r.mean_seconds).unwrap_or(f64::NAN);
    let tested = table.row("ctrl").map_or(0, |r| r.tested);
    Ok(verdict(
        t("ctrl") < t("line_search"),
        format!(
            "5 trials, {tested} anomalies: ctrl {:.3} ms, line_search {:.3} ms per anomaly; want ctrl < line_search",
            t("ctrl") * 1e3,
            t("line_search") * 1e3
        ),
    ))
}

fn criterion_10() -> Result<Verdict> {
    let alpha = 0.1;
    let mut pass = true;
    let mut parts = Vec::new();
    let cases = [
        ("estimated variance", NoiseKind::Normal, true, true),
        ("t20", NoiseKind::StudentT { df: 20.0 }, false, true),
        ("skew normal", NoiseKind::SkewNormal { shape: 10.0 }, false, true),
        ("laplace", NoiseKind::Laplace, false, false),
    ];
    for (k, (name, noise, estimate, banded)) in cases.into_iter().enumerate() {
        let spec = SyntheticSpec {
            noise,
            estimate_variance: estimate,
            ..null_spec(100, 1000 + k as u64)
        };
        let outcomes = run_trials(&spec, &paper_ransac(), &[Method::Ctrl], &TestOptions::default(), ExperimentKind::Fpr, trials())?;
        let table = summarize(ExperimentKind::Fpr, &outcomes, &[Method::Ctrl], alpha, 100, 0.0, 15);
        let row = table.row("ctrl").expect("row present");
        let fpr = row.rate.unwrap_or(f64::NAN);
        let (lo, hi) = binomial_band(alpha, row.tested);
        let ok = if banded {
            (lo..=hi).contains(&fpr) && row.failures == 0
        } else {
            row.failures == 0 && row.tested > 0
        };
        pass &= ok;
        parts.push(if banded {
            format!(
                "{name}: {fpr:.4} ({}/{}, {} failed) band [{lo:.4}, {hi:.4}] {}",
                row.rejected,
                row.tested,
                row.failures,
                if ok { "ok" } else { "OUT" }
            )
        } else {
            format!(
                "{name} (exempt from band): {fpr:.4} ({}/{}), {} numeric failures {}",
                row.rejected,
                row.tested,
                row.failures,
                if ok { "ok" } else { "FAILED" }
            )
        });
    }
    Ok(verdict(pass, parts.join("; ")))
}

fn csv_round_trip() -> Result<Verdict> {
    let spec = SyntheticSpec {
        delta: 4.0,
        seed: 1111,
        ..SyntheticSpec::new(60, 3)
    };
    let (data, truth) = gen_synthetic(&spec)?;
    let mut csv = Vec::new();
    write_dataset_csv(&mut csv, &data, &truth)?;
    let parsed = read_csv_from(csv.as_slice())?;
    let back = Dataset::new(parsed.x, parsed.y, Covariance::identity())?;
    let exact = back.x == data.x && back.y == data.y;
    let cfg = RansacConfig::new(15, 2.0, 5);
    let run = |d: &Dataset| -> Result<(Analysis, Vec<ctrl_ransac::inference::PValueReport>)> {
        let a = Analysis::run(d, &cfg)?;
        let r = a.test_all(&[Method::Ctrl, Method::Naive], &TestOptions::default())?;
        Ok((a, r))
    };
    let (a1, r1) = run(&data)?;
    let (a2, r2) = run(&back)?;
    let mut json1 = Vec::new();
    write_json(&mut json1, &ReportDocument::new(&data, a1.detection(), 2.0, 5, &r1))?;
    let mut json2 = Vec::new();
    write_json(&mut json2, &ReportDocument::new(&back, a2.detection(), 2.0, 5, &r2))?;
    let parsed: serde_json::Value = serde_json::from_slice(&json1)?;
    let p_match = parsed["reports"]
        .as_array()
        .map(|recs| {
            recs.iter()
                .zip(&r1)
                .all(|(rec, r)| rec["p_value"].as_f64() == Some(r.p_value) && rec["z_obs"].as_f64() == Some(r.z_obs))
        })
        .unwrap_or(false);
    Ok(verdict(
        exact && json1 == json2 && p_match && !r1.is_empty(),
        format!(
            "{} rows re-read bit-exact: {exact}; {} records; identical JSON: {}; p-values round-trip: {p_match}",
            data.n(),
            r1.len(),
            json1 == json2
        ),
    ))
}

fn main() -> ExitCode {
    let started = Instant::now();
    let mut results: Vec<(u32, String, Verdict)> = Vec::new();
    let record = |id: u32, name: &str, r: Result<Verdict>, results: &mut Vec<(u32, String, Verdict)>| {
        let v = r.unwrap_or_else(|e| verdict(false, format!("error: {e}")));
        results.push((id, name.to_string(), v));
    };
    if let Err(e) = criteria_1_2_3(&mut results) {
        for (id, name) in [(1, "FPR control"), (2, "naive inflation"), (3, "null uniformity")] {
            results.push((id, name.into(), verdict(false, format!("error: {e}"))));
        }
    }
    record(4, "method equivalence", criterion_4(), &mut results);
    record(5, "region oracle", criterion_5(), &mut results);
    record(6, "DP correctness", criterion_6(), &mut results);
    if let Err(e) = criteria_7_8(&mut results) {
        for (id, name) in [(7, "TPR ordering"), (8, "OC dominance")] {
            results.push((id, name.into(), verdict(false, format!("error: {e}"))));
        }
    }
    record(9, "timing trend", criterion_9(), &mut results);
    record(10, "robustness", criterion_10(), &mut results);
    record(11, "CSV round trip", csv_round_trip(), &mut results);

    results.sort_by_key(|r| r.0);
    let mut failed = 0;
    for (id, name, v) in &results {
        let tag = if v.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!v.pass);
        println!("criterion {id:>2} {tag} {name}: {}", v.detail);
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1}s (trials = {})",
        results.len() - failed,
        started.elapsed().as_secs_f64(),
        trials()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
