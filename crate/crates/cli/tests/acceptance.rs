//! Acceptance suite: one PASS/FAIL line per criterion.

mod common;

use common::*;
use stablelab::besov::{self, random_periodic_field, ThermicConfig};
use stablelab::drift::{mollification_report, DriftField, DriftKind, ShellSpec};
use stablelab::params::{check_gr, classify_integrability, DEFAULT_DEPTH};
use stablelab::parametrix::{duhamel_solve_grad, SolverGrid};
use stablelab::quad::{self, Feature};
use stablelab::rng::substream;
use stablelab::sim::{empirical_cf, estimate_marginal, euler_paths, ks_one_sample, EulerConfig, StableSampler};
use stablelab::stable_density::*;
use stablelab::verify::{cross_validate, m_stabilization, Verdict};
use stablelab::{BesovIndices, Exec, Index, StableParams};
use stablelab_cli::Context;
use std::panic::{self, AssertUnwindSafe};
use std::time::Instant;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn sp(alpha: f64) -> StableParams {
    StableParams::new(alpha, 1).unwrap()
}

fn kernel_sanity() -> Check {
    let (mut mass_err, mut ss_err, mut ck_err): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for alpha in [1.2, 1.5, 1.8] {
        let k = ExactKernel::new(&sp(alpha)).map_err(|e| e.to_string())?;
        for t in [0.1, 1.0, 10.0] {
            mass_err = mass_err.max((total_mass(&k, t) - 1.0).abs());
        }
        for t in [0.1, 0.5, 3.0] {
            for i in 0..=80 {
                let x = -20.0 + 0.5 * i as f64;
                let direct = k.eval_direct(t, x).map_err(|e| e.to_string())?;
                let scaled = t.powf(-1.0 / alpha) * k.eval_1d(1.0, x * t.powf(-1.0 / alpha));
                ss_err = ss_err.max((direct - scaled).abs() / scaled);
            }
        }
        for (s, t) in [(0.3, 1.0), (0.05, 0.4), (1.2, 2.0)] {
            for i in 0..=10 {
                let y = -5.0 + i as f64;
                let conv = quad::integrate_line(
                    |w| k.eval_1d(s, w) * k.eval_1d(t - s, y - w),
                    &[
                        Feature { center: 0.0, scale: f64::powf(s, 1.0 / alpha) },
                        Feature { center: y, scale: f64::powf(t - s, 1.0 / alpha) },
                    ],
                );
                let direct = k.eval_1d(t, y);
                ck_err = ck_err.max((conv - direct).abs() / direct);
            }
        }
    }
    let detail = format!("mass error {mass_err:.2e}, self-similarity {ss_err:.2e}, Chapman–Kolmogorov {ck_err:.2e}");
    ensure(mass_err < 1e-4 && ss_err < 1e-6 && ck_err < 1e-3, detail.clone())?;
    Ok(detail)
}

fn comparator_constants() -> Check {
    let c = c_alpha(&sp(1.5));
    let m = validate_spatial_moments(&sp(1.5), 1.0, &[0.1, 1.0, 10.0]).map_err(|e| e.to_string())?;
    let worst = m.normalized.iter().map(|(_, v)| (v - 2.0).abs()).fold(0.0, f64::max);
    let detail = format!("c_alpha = {c:.12}, moment deviation {worst:.2e}");
    ensure((c - 0.75).abs() < 1e-10 && worst < 1e-6, detail.clone())?;
    Ok(detail)
}

fn comparability_constant() -> Check {
    let s = sp(1.5);
    let e = ExactKernel::new(&s).map_err(|e| e.to_string())?;
    let p = ComparatorKernel::new(&s);
    let raw: Vec<f64> = [0.1, 1.0].iter().map(|&t| comparability(&e, &p, t, 50.0, 5001, Exec::Parallel).constant).collect();
    // the same scaled window |x| t^{-1/α} ≤ 50 at both times
    let scaled: Vec<f64> = [0.1f64, 1.0]
        .iter()
        .map(|&t| comparability(&e, &p, t, 50.0 * t.powf(1.0 / 1.5), 5001, Exec::Parallel).constant)
        .collect();
    let drift = (scaled[0] - scaled[1]).abs() / scaled[1];
    let detail = format!("C(0.1) = {:.4}, C(1) = {:.4}, rescaled change {drift:.2e}", raw[0], raw[1]);
    ensure(raw.iter().chain(&scaled).all(|c| c.is_finite() && *c >= 1.0) && drift < 0.05, detail.clone())?;
    Ok(detail)
}

fn sampler_fidelity() -> Check {
    let s = sp(1.5);
    let k = ExactKernel::new(&s).map_err(|e| e.to_string())?;
    let x = StableSampler::new(&s)
        .and_then(|z| z.sample_increment(1.0, 1_000_000, 42, Exec::Parallel))
        .map_err(|e| e.to_string())?;
    let ks = ks_one_sample(&x, |z| k.cdf_1d(1.0, z)).statistic;
    let cf = [0.5f64, 1.0, 2.0]
        .iter()
        .map(|&l| {
            let z = empirical_cf(&x, l);
            (z.re - (-l.powf(1.5)).exp()).hypot(z.im)
        })
        .fold(0.0, f64::max);
    let detail = format!("KS {ks:.2e}, CF error {cf:.2e}");
    ensure(ks < 5e-3 && cf < 3e-3, detail.clone())?;
    Ok(detail)
}

fn solver_oracles() -> Check {
    let s = sp(1.5);
    let k = ExactKernel::new(&s).map_err(|e| e.to_string())?;
    let field = |kind| DriftField::builtin(&s, BesovIndices::bounded(-0.1), 0.5, kind);
    let grid = SolverGrid::default();
    let zero = duhamel_solve_grad(&s, &field(DriftKind::Zero).unmollified(), 0.0, 0.2, 0.5, &grid, Exec::Parallel)
        .map_err(|e| e.to_string())?;
    let mut zero_err: f64 = 0.0;
    for (i, t) in zero.times.iter().enumerate() {
        for (j, y) in zero.y.points().iter().enumerate() {
            zero_err = zero_err.max((zero.density[i][j] / k.eval_1d(*t, y - 0.2) - 1.0).abs());
        }
    }
    let c = 1.3;
    let shifted = duhamel_solve_grad(&s, &field(DriftKind::Constant { value: c }).unmollified(), 0.0, 0.0, 0.5, &grid, Exec::Parallel)
        .map_err(|e| e.to_string())?;
    let mut shift_err: f64 = 0.0;
    for (i, t) in shifted.times.iter().enumerate() {
        for (j, y) in shifted.y.points().iter().enumerate() {
            let z = y - c * t;
            if z.abs() <= t.powf(1.0 / 1.5) {
                shift_err = shift_err.max((shifted.density[i][j] / k.eval_1d(*t, z) - 1.0).abs());
            }
        }
    }
    let detail = format!("b ≡ 0 error {zero_err:.2e}, b ≡ {c} error {shift_err:.2e}");
    ensure(zero_err < 1e-3 && shift_err < 1e-3, detail.clone())?;
    Ok(detail)
}

fn parametrix_vs_monte_carlo() -> Check {
    let s = sp(1.5);
    let kind = DriftKind::Smooth { amplitude: 1.0, frequency: 1.0 };
    let drift = DriftField::builtin(&s, BesovIndices::bounded(-0.1), 0.5, kind).unmollified();
    let grid = SolverGrid::default();
    let dg = duhamel_solve_grad(&s, &drift, 0.0, 0.0, 0.5, &grid, Exec::Parallel).map_err(|e| e.to_string())?;
    let cfg = EulerConfig {
        x0: 0.0,
        start: 0.0,
        horizon: 0.5,
        steps: 256,
        paths: 1_000_000,
        seed: 2024,
        keep_paths: false,
    };
    let sampler = StableSampler::new(&s).map_err(|e| e.to_string())?;
    let paths = euler_paths(&sampler, &drift, &cfg, Exec::Parallel).map_err(|e| e.to_string())?;
    let me = estimate_marginal(&paths.terminal, 0.5, &dg.y, 1.5, None).map_err(|e| e.to_string())?;
    let cv = cross_validate(&dg, &me).map_err(|e| e.to_string())?;
    let detail = format!("L1 {:.4} (error bar {:.4}), diagonal sup {:.4}", cv.l1, cv.l1_error_bar, cv.sup_diagonal);
    ensure(cv.l1 < 0.02, detail.clone())?;
    Ok(detail)
}

fn rough_field(seed: u64) -> Result<DriftField, String> {
    let spec = ShellSpec { shells: 8, ..ShellSpec::default() };
    DriftField::make(&sp(1.5), &BesovIndices::bounded(-0.1), 0.5, seed, spec).map_err(|e| e.to_string())
}

fn mollification_contract() -> Check {
    let f = rough_field(7)?;
    let levels: Vec<u32> = (1..=8).collect();
    let r = mollification_report(&f, &levels).map_err(|e| e.to_string())?;
    let detail = format!(
        "errors {:.4} → {:.4}, max relative increase {:.3}, κ′ = {:.4}",
        r.errors[0], r.errors[7], r.max_increase, r.kappa_prime
    );
    ensure(
        r.max_increase <= 0.02 && r.errors[7] < 0.1 * r.errors[0] && r.kappa_prime.is_finite(),
        detail.clone(),
    )?;
    Ok(detail)
}

fn stabilization() -> Check {
    let ctx = Context::load(&workspace_root().join("configs/reference.toml"), None, None).map_err(|e| format!("{e:?}"))?;
    let c = &ctx.config;
    let bi = c.indices().map_err(|e| format!("{e:?}"))?;
    ensure(
        c.noise.alpha == 1.5 && bi.beta == -0.1 && c.drift.horizon == 0.5 && c.rho().ok() == Some(0.15),
        "reference configuration drifted from the criterion",
    )?;
    ensure(c.verify.levels == [2, 4, 6, 8], "reference levels drifted from the criterion")?;
    let sp = c.stable_params().map_err(|e| format!("{e:?}"))?;
    let field = c.drift_field().map_err(|e| e.to_string())?;
    let r = m_stabilization(&c.name, &sp, &field, &c.verify.levels, 0.0, 0.0, &c.solver.grid, 0.15, Exec::Parallel)
        .map_err(|e| e.to_string())?;
    let finite = r.levels.iter().all(|l| l.constants.as_ref().is_some_and(|k| k.all_finite()));
    let changes: Vec<String> = r
        .relative_changes
        .iter()
        .flatten()
        .map(|v| v.map_or("n/a".to_string(), |v| format!("{:.1}%", 100.0 * v)))
        .collect();
    let detail = format!("verdict {:?}, last-level changes [{}]", r.verdict, changes.join(", "));
    ensure(finite && r.verdict == Verdict::Stable, detail.clone())?;
    Ok(detail)
}

fn integrability_threshold() -> Check {
    let s = sp(1.5);
    let bi = BesovIndices::bounded(-0.1);
    let adm = check_gr(&s, &bi).map_err(|e| e.to_string())?;
    let star = adm.gamma - bi.beta;
    let mut wrong = Vec::new();
    for k in 1..=10 {
        for rho in [star - 0.01 * k as f64, star + 0.01 * k as f64] {
            let v = classify_integrability(&s, &bi, 0.0, 1.0, rho, DEFAULT_DEPTH).map_err(|e| e.to_string())?;
            if v.finite != (rho < star) {
                wrong.push(rho);
            }
        }
    }
    let detail = format!("threshold {star:.3}, {} of 20 misclassified", wrong.len());
    ensure(wrong.is_empty(), format!("{detail}: {wrong:?}"))?;
    Ok(detail)
}

fn besov_machinery() -> Check {
    let sup = |theta| ThermicConfig::new(theta, Index::Infinite, Index::Infinite, 1.5);
    let thetas = [-0.6, -0.3, -0.1, 0.0, 0.2, 0.5, 0.9, 1.3];
    let mut violations = 0;
    for i in 0..100 {
        let mut rng = substream(31, "embedding", i);
        let decay = 1.5 * (i as f64) / 100.0;
        let f = random_periodic_field(&mut rng, 48, decay, 512);
        let norms: Vec<f64> = thetas
            .iter()
            .map(|&t| besov::thermic_norm(&f, &sup(t)).map(|n| n.thermic))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        violations += norms.windows(2).filter(|w| w[0] > w[1]).count();
    }
    let dual = ThermicConfig::new(0.3, Index::Finite(2.0), Index::Finite(2.0), 1.5);
    let (mut duality, mut product): (f64, f64) = (0.0, 0.0);
    for i in 0..100 {
        let mut rng = substream(32, "pairs", i);
        let f = random_periodic_field(&mut rng, 24, 1.0, 512);
        let g = random_periodic_field(&mut rng, 24, 1.0, 512);
        duality = duality.max(besov::validate_duality(&f, &g, &dual, &dual.dual()).map_err(|e| e.to_string())?);
        let smooth = random_periodic_field(&mut rng, 8, 2.0, 512);
        let rough = random_periodic_field(&mut rng, 64, 0.5, 512);
        product = product.max(besov::validate_product_rule(&smooth, &rough, &sup(-0.1), 0.2).map_err(|e| e.to_string())?);
    }
    let mut brackets = Vec::new();
    for beta in [-0.05, -0.1, -0.2] {
        let spec = ShellSpec { check_regularity: false, ..ShellSpec::default() };
        let field = DriftField::make(&sp(1.5), &BesovIndices::bounded(beta), 1.0, 5, spec).map_err(|e| e.to_string())?;
        brackets.push(field.regularity_bracket(0).map_err(|e| e.to_string())?.passed);
    }
    let detail = format!(
        "{violations} embedding violations, duality constant {duality:.4}, product constant {product:.4}, brackets {brackets:?}"
    );
    ensure(
        violations == 0 && duality.is_finite() && product.is_finite() && brackets.iter().all(|b| *b),
        detail.clone(),
    )?;
    Ok(detail)
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let mut snaps = Vec::new();
    for name in ["first", "second"] {
        let out = run("all", &cfg, &dir.path().join(name), &[]);
        ensure(out.status.success(), String::from_utf8_lossy(&out.stderr).into_owned())?;
        snaps.push(snapshot(&dir.path().join(name)));
    }
    let differing: Vec<&str> = snaps[0]
        .iter()
        .zip(&snaps[1])
        .filter(|(a, b)| a != b)
        .map(|(a, _)| a.0.as_str())
        .collect();
    let detail = format!("{} artifacts compared, {} differ", snaps[0].len(), differing.len());
    ensure(snaps[0].len() == snaps[1].len() && differing.is_empty(), format!("{detail}: {differing:?}"))?;
    Ok(detail)
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("stable kernel sanity", kernel_sanity),
        ("comparator constants", comparator_constants),
        ("two-sided comparability", comparability_constant),
        ("sampler fidelity", sampler_fidelity),
        ("solver exactness oracles", solver_oracles),
        ("solver vs Monte Carlo", parametrix_vs_monte_carlo),
        ("mollification contract", mollification_contract),
        ("level stabilization", stabilization),
        ("integrability threshold", integrability_threshold),
        ("Besov machinery", besov_machinery),
        ("determinism", determinism),
    ];
    let filter: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !filter.is_empty() && !filter.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {n:>2} PASS  {name}: {d} [{secs:.1} s]"),
            Err(d) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {d} [{secs:.1} s]");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
