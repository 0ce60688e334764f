use rand::Rng;
use rand_distr::StandardNormal;
use stablelab::besov::*;
use stablelab::drift::{DriftField, ShellSpec};
use stablelab::grid::UniformGrid;
use stablelab::rng::substream;
use stablelab::stable_density::{golden_max, ExactKernel};
use stablelab::{BesovIndices, Index, StableParams};
use std::f64::consts::PI;

const ALPHA: f64 = 1.5;

fn torus(n: usize) -> UniformGrid {
    UniformGrid::new(0.0, 2.0 * PI / n as f64, n)
}

/// Random periodic field with `modes` Fourier modes of algebraically decaying size.
fn random_field(seed: u64, index: u64, modes: usize) -> SampledField {
    let mut rng = substream(seed, "besov-field", index);
    let decay: f64 = rng.random_range(0.0..1.5);
    let coeffs: Vec<(f64, f64)> = (1..=modes)
        .map(|k| {
            let s = (k as f64).powf(-decay);
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            (s * a, s * b)
        })
        .collect();
    let c0: f64 = rng.sample(StandardNormal);
    SampledField::from_fn(torus(512), Boundary::Periodic, move |x| {
        c0 + coeffs
            .iter()
            .enumerate()
            .map(|(k, (a, b))| a * ((k + 1) as f64 * x).cos() + b * ((k + 1) as f64 * x).sin())
            .sum::<f64>()
    })
}

fn sup_cfg(theta: f64) -> ThermicConfig {
    ThermicConfig::new(theta, Index::Infinite, Index::Infinite, ALPHA)
}

#[test]
fn embedding_is_monotone_in_regularity() {
    let thetas = [-0.6, -0.3, -0.1, 0.0, 0.2, 0.5, 0.9, 1.3];
    for i in 0..100 {
        let f = random_field(11, i, 48);
        for ell in [Index::Infinite, Index::Finite(2.0)] {
            let norms: Vec<f64> = thetas
                .iter()
                .map(|&t| thermic_norm(&f, &ThermicConfig { ell, ..sup_cfg(t) }).unwrap().thermic)
                .collect();
            for w in norms.windows(2) {
                assert!(w[0] <= w[1], "field {i}, ℓ={ell}: {norms:?}");
            }
        }
    }
}

#[test]
fn norm_is_absolutely_homogeneous() {
    for i in 0..20 {
        let f = random_field(12, i, 32);
        for cfg in [sup_cfg(-0.1), ThermicConfig::new(0.3, Index::Finite(2.0), Index::Finite(2.0), ALPHA)] {
            let base = thermic_norm(&f, &cfg).unwrap();
            for c in [-3.5, 0.01, 7.0] {
                let n = thermic_norm(&f.scaled(c), &cfg).unwrap();
                let expected = c.abs() * base.total;
                assert!((n.total - expected).abs() <= 1e-12 * expected, "c={c}: {} vs {expected}", n.total);
            }
        }
    }
}

#[test]
fn heat_kernel_profile_follows_the_semigroup() {
    // ∂_v p_α(v,·) ⋆ p_α(1,·) = ∂_v p_α(1+v,·)
    let sp = StableParams::new(ALPHA, 1).unwrap();
    let kernel = ExactKernel::new(&sp).unwrap();
    let grid = UniformGrid::centered(0.0, 400.0, 1 << 15);
    let f = SampledField::from_fn(grid, Boundary::Decaying, |x| kernel.eval_1d(1.0, x));
    for theta in [-0.3, 0.2, 1.0] {
        let got = thermic_norm(&f, &sup_cfg(theta)).unwrap().thermic;
        let sup_x = |v: f64| {
            let mut m: f64 = 0.0;
            for k in 0..=400 {
                m = m.max(kernel.time_derivative_1d(1.0 + v, k as f64 * 0.01).abs());
            }
            m
        };
        let profile = |lv: f64| {
            let v = lv.exp();
            v.powf(1.0 - theta / ALPHA) * sup_x(v)
        };
        let lv = golden_max(profile, (1e-6f64).ln(), 0.0);
        let expected = profile(lv).max(profile(0.0));
        assert!((got - expected).abs() < 2e-3 * expected, "ϑ={theta}: {got} vs {expected}");
    }
}

#[test]
fn duality_ratios_are_bounded() {
    let cfg = ThermicConfig::new(0.3, Index::Finite(2.0), Index::Finite(2.0), ALPHA);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let f = random_field(13, 2 * i, 24);
        let g = random_field(13, 2 * i + 1, 24);
        let r = validate_duality(&f, &g, &cfg, &cfg.dual()).unwrap();
        assert!(r.is_finite());
        worst = worst.max(r);
    }
    println!("duality constant over 100 pairs: {worst:.4}");
    assert!(worst < 2.0, "{worst}");

    let sp = StableParams::new(ALPHA, 1).unwrap();
    let kernel = ExactKernel::new(&sp).unwrap();
    let grid = UniformGrid::centered(0.0, 200.0, 1 << 13);
    let p = SampledField::from_fn(grid, Boundary::Decaying, |x| kernel.eval_1d(1.0, x));
    let c = sup_cfg(0.2);
    let r = validate_duality(&p, &p, &c, &c.dual()).unwrap();
    println!("duality ratio for the heat kernel: {r:.4}");
    assert!(r.is_finite() && r > 0.0);
}

#[test]
fn product_rule_ratios_are_bounded() {
    let cfg = sup_cfg(-0.1);
    let one = SampledField::from_fn(torus(512), Boundary::Periodic, |_| 1.0);
    let g = random_field(14, 0, 32);
    let r = validate_product_rule(&one, &g, &cfg, 0.2).unwrap();
    assert!((r - 1.0).abs() < 1e-12, "{r}");

    let zero = SampledField::from_fn(torus(512), Boundary::Periodic, |_| 0.0);
    assert_eq!(validate_product_rule(&one, &zero, &cfg, 0.2).unwrap(), 0.0);

    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let f = random_field(14, 2 * i + 1, 8);
        let g = random_field(14, 2 * i + 2, 64);
        let r = validate_product_rule(&f, &g, &cfg, 0.2).unwrap();
        assert!(r.is_finite());
        worst = worst.max(r);
    }
    println!("product-rule constant over 100 pairs: {worst:.4}");
    assert!(worst < 5.0, "{worst}");

    // smooth bump against a rough shell field
    let sp = StableParams::new(ALPHA, 1).unwrap();
    let bi = BesovIndices::bounded(-0.1);
    let field = DriftField::make(&sp, &bi, 1.0, 3, ShellSpec::default()).unwrap();
    let rough = stablelab::drift::sample_slice(&field.slice(0.0).unwrap(), Boundary::Periodic);
    let bump = SampledField::from_fn(rough.grid, Boundary::Periodic, |x| (-(x - PI).powi(2)).exp());
    let r = validate_product_rule(&bump, &rough, &cfg, 0.2).unwrap();
    println!("product-rule ratio for bump × shell field: {r:.4}");
    assert!(r.is_finite() && r > 0.0);
}

#[test]
fn regularity_bracket_classifies_shell_fields() {
    let sp = StableParams::new(ALPHA, 1).unwrap();
    for beta in [-0.05, -0.1, -0.2] {
        let bi = BesovIndices::bounded(beta);
        let spec = ShellSpec {
            check_regularity: false,
            ..ShellSpec::default()
        };
        let field = DriftField::make(&sp, &bi, 1.0, 5, spec).unwrap();
        let report = field.regularity_bracket(0).unwrap();
        assert!(
            report.passed,
            "β={beta}: slopes {} / {}",
            report.below.slope, report.above.slope
        );
    }
}

#[test]
fn refinement_flag_and_boundary_mass_are_reported() {
    let f = random_field(15, 0, 16);
    let n = thermic_norm(&f, &ThermicConfig::new(0.3, Index::Finite(2.0), Index::Finite(2.0), ALPHA)).unwrap();
    assert_eq!(n.boundary_mass, 0.0);
    assert!(n.refinement_change.is_finite());
    let coarse = ThermicConfig {
        v_points: 4,
        ..ThermicConfig::new(0.3, Index::Finite(2.0), Index::Finite(2.0), ALPHA)
    };
    assert!(thermic_norm(&f, &coarse).unwrap().v_grid_flag);
    let grid = UniformGrid::centered(0.0, 1.0, 256);
    let wide = SampledField::from_fn(grid, Boundary::Decaying, |_| 1.0);
    assert!(thermic_norm(&wide, &sup_cfg(0.1)).unwrap().boundary_mass > 0.05);
}
