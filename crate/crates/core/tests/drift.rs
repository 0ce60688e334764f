use rand::Rng;
use stablelab::besov::{thermic_norm, ThermicConfig};
use stablelab::drift::*;
use stablelab::rng::substream;
use stablelab::sim::StableSampler;
use stablelab::{BesovIndices, Index, StableParams};
use std::time::Instant;

fn sp() -> StableParams {
    StableParams::new(1.5, 1).unwrap()
}

fn shells(j: u32, slices: usize, check: bool) -> ShellSpec {
    ShellSpec {
        shells: j,
        time_slices: slices,
        check_regularity: check,
        ..ShellSpec::default()
    }
}

#[test]
fn functional_of_constant_and_linear_fields() {
    let bi = BesovIndices::bounded(-0.1);
    let c = DriftField::builtin(&sp(), bi, 1.0, DriftKind::Constant { value: -1.3 });
    for (v, x, h) in [(0.0, 0.0, 1.0), (0.2, 5.0, 0.3), (0.9, -2.0, 0.1)] {
        let got = c.unmollified().eval_b(v, x, h).unwrap();
        assert!((got + 1.3 * h).abs() < 1e-13, "{got}");
    }
    let lin = DriftField::builtin(&sp(), bi, 1.0, DriftKind::LinearTest);
    for (v, x, h) in [(0.0, 0.7, 0.5), (0.3, -2.0, 0.25)] {
        let got = lin.unmollified().eval_b(v, x, h).unwrap();
        assert!((got - x * h).abs() < 1e-6 * (x * h).abs(), "{got} vs {}", x * h);
    }
    assert!(c.unmollified().eval_b(0.5, 0.0, -0.1).is_err());
    assert!(c.unmollified().eval_b(0.8, 0.0, 0.5).is_err());
}

#[test]
fn functional_of_rough_field_matches_monte_carlo() {
    let field = DriftField::make(&sp(), &BesovIndices::bounded(-0.1), 1.0, 21, shells(8, 2, false)).unwrap();
    let b = field.mollify(8);
    let sampler = StableSampler::new(&sp()).unwrap();
    let (v, h) = (0.3, 0.4);
    // two time slices, split at t = 0.5
    let cached = [b.slice(0.25).unwrap(), b.slice(0.75).unwrap()];
    for x in [0.0, 1.1] {
        let quad = b.eval_b(v, x, h).unwrap();
        // 𝔅 = h E[b(v + r, x + Z_{h−r})], r uniform on [0, h]
        let n = 200_000;
        let mut rng = substream(5, "drift-mc", (x * 10.0) as u64);
        let mut z = [0.0];
        let mut acc = 0.0;
        let mut acc2 = 0.0;
        for _ in 0..n {
            let r = h * rng.random::<f64>();
            sampler.draw(&mut rng, h - r, &mut z);
            let val = h * cached[usize::from(v + r >= 0.5)].eval(x + z[0]);
            acc += val;
            acc2 += val * val;
        }
        let mean = acc / n as f64;
        let se = ((acc2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((quad - mean).abs() < 3.0 * se, "x={x}: quadrature {quad}, MC {mean} ± {se}");
    }
}

#[test]
fn shell_fields_pass_the_regularity_bracket() {
    let f = DriftField::make(&sp(), &BesovIndices::bounded(-0.1), 1.0, 7, shells(8, 1, true)).unwrap();
    assert!(f.regularity_bracket(0).unwrap().passed);
}

#[test]
fn single_shell_field_is_smooth() {
    let f = DriftField::make(&sp(), &BesovIndices::bounded(-0.1), 1.0, 7, shells(0, 1, true)).unwrap();
    let s = sample_slice(&f.slice(0.0).unwrap(), stablelab::besov::Boundary::Periodic);
    for theta in [-0.5, 0.0, 0.5, 1.0, 1.4] {
        let n = thermic_norm(&s, &ThermicConfig::new(theta, Index::Infinite, Index::Infinite, 1.5)).unwrap();
        assert!(n.total.is_finite() && n.total > 0.0, "ϑ={theta}");
    }
}

#[test]
fn fields_are_deterministic_and_roundtrip_exactly() {
    let bi = BesovIndices::bounded(-0.1);
    let a = DriftField::make(&sp(), &bi, 0.5, 99, shells(8, 3, false)).unwrap();
    let b = DriftField::make(&sp(), &bi, 0.5, 99, shells(8, 3, false)).unwrap();
    assert_eq!(a, b);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("drift.json");
    a.save(&path).unwrap();
    let back = DriftField::load(&path).unwrap();
    assert_eq!(a, back);
    for (y, t) in [(0.1, 0.05), (2.3, 0.3), (-4.0, 0.49)] {
        assert_eq!(a.eval(t, y).to_bits(), back.eval(t, y).to_bits());
    }
}

#[test]
fn negative_controls_must_violate_the_good_relation() {
    let spec = shells(6, 1, false);
    assert!(DriftField::make_negative_control(&sp(), &BesovIndices::bounded(-0.1), 1.0, 1, spec).is_err());
    let f = DriftField::make_negative_control(&sp(), &BesovIndices::bounded(-0.4), 1.0, 1, spec).unwrap();
    assert!(f.negative_control);
}

#[test]
fn smooth_field_mollifies_at_least_linearly() {
    let f = DriftField::builtin(
        &sp(),
        BesovIndices::bounded(-0.1),
        1.0,
        DriftKind::Smooth { amplitude: 1.0, frequency: 3.0 },
    );
    let ys: Vec<f64> = (0..400).map(|i| -3.0 + i as f64 * 0.015).collect();
    let err = |m: u32| {
        let bm = f.mollify(m);
        ys.iter().fold(0.0f64, |e, &y| e.max((bm.eval(0.5, y) - f.eval(0.5, y)).abs()))
    };
    let errs: Vec<f64> = (2..=10).map(err).collect();
    let rates: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    println!("sup errors {errs:?}, observed orders {rates:?}");
    for r in &rates {
        assert!(*r >= 0.95, "{rates:?}");
    }
}

#[test]
fn mollified_values_converge_pointwise() {
    let f = DriftField::make(&sp(), &BesovIndices::bounded(-0.1), 1.0, 3, shells(8, 1, false)).unwrap();
    for y in [0.0, 0.37, 2.9] {
        let exact = f.eval(0.2, y);
        let errs: Vec<f64> = (6..=16).step_by(2).map(|m| (f.mollify(m).eval(0.2, y) - exact).abs()).collect();
        for w in errs.windows(2) {
            assert!(w[1] <= w[0] * 1.02 + 1e-12, "y={y}: {errs:?}");
        }
        assert!(errs.last().unwrap() < &1e-3, "y={y}: {errs:?}");
        let bm = f.mollify(10);
        assert!(bm.sup_bound(0.2).is_finite() && bm.derivative(0.2, y).is_finite());
    }
}

#[test]
fn mollification_contract_for_a_rough_field() {
    let start = Instant::now();
    let f = DriftField::make(&sp(), &BesovIndices::bounded(-0.1), 0.5, 7, shells(8, 1, true)).unwrap();
    let levels: Vec<u32> = (1..=8).collect();
    let rep = mollification_report(&f, &levels).unwrap();
    println!(
        "β̃ = {}, errors {:?}, max increase {:.4}, κ′ = {:.4}, {:.1?}",
        rep.beta_tilde,
        rep.errors,
        rep.max_increase,
        rep.kappa_prime,
        start.elapsed()
    );
    assert!(rep.max_increase <= 0.02, "{:?}", rep.errors);
    assert!(rep.errors[7] < 0.1 * rep.errors[0], "{:?}", rep.errors);
    assert!(rep.kappa_prime.is_finite() && rep.kappa_prime > 0.0);
}
