//! Gamma-family functions and integer-order Bessel functions.

use std::f64::consts::PI;

pub fn gamma(x: f64) -> f64 {
    statrs::function::gamma::gamma(x)
}

pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

pub fn beta(a: f64, b: f64) -> f64 {
    (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)).exp()
}

/// Surface area of the unit sphere `S^{d-1}`.
pub fn sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    2.0 * PI.powf(h) / gamma(h)
}

/// Bessel function of the first kind `J_n(x)`.
///
/// For `|x| < 25` the periodic integral `(1/2π)∫cos(nθ − x sin θ)dθ` is
/// summed with the trapezoidal rule (exponentially convergent); beyond, the
/// Hankel asymptotic expansion is used.
/// `(J_0(x), J_1(x))` from a single pass of the integral representation.
pub fn bessel_j01(x: f64) -> (f64, f64) {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    if x >= 25.0 {
        return (hankel_asymptotic(0, x), sign * hankel_asymptotic(1, x));
    }
    const M: usize = 64;
    let mut j0 = 0.0;
    let mut j1 = 0.0;
    for k in 0..M {
        let (st, ct) = (2.0 * PI * k as f64 / M as f64).sin_cos();
        let (s, c) = (x * st).sin_cos();
        j0 += c;
        j1 += ct * c + st * s;
    }
    (j0 / M as f64, sign * j1 / M as f64)
}

pub fn bessel_j(n: u32, x: f64) -> f64 {
    let sign = if x < 0.0 && n % 2 == 1 { -1.0 } else { 1.0 };
    let x = x.abs();
    let v = if x < 25.0 {
        let m = 64usize;
        let nf = n as f64;
        let mut acc = 0.0;
        for k in 0..m {
            let th = 2.0 * PI * k as f64 / m as f64;
            acc += (nf * th - x * th.sin()).cos();
        }
        acc / m as f64
    } else {
        hankel_asymptotic(n, x)
    };
    sign * v
}

fn hankel_asymptotic(n: u32, x: f64) -> f64 {
    let mu = 4.0 * (n as f64).powi(2);
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let eight_x = 8.0 * x;
    for k in 1..=20 {
        let kf = k as f64;
        term *= (mu - (2.0 * kf - 1.0).powi(2)) / (kf * eight_x);
        if term.abs() < 1e-17 {
            break;
        }
        // Terms alternate between Q (odd k) and P (even k) with signs
        // (-1)^{floor(k/2)}.
        let sgn = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 1 {
            q += sgn * term;
        } else {
            p += sgn * term;
        }
    }
    let chi = x - (n as f64 / 2.0 + 0.25) * PI;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn joint_bessel_matches_single() {
        for &x in &[0.0, 0.3, 1.0, 7.5, 24.9, 40.0, -3.0] {
            let (a, b) = bessel_j01(x);
            assert!((a - bessel_j(0, x)).abs() < 1e-14);
            assert!((b - bessel_j(1, x)).abs() < 1e-14);
        }
    }

    #[test]
    fn gamma_values() {
        assert!((gamma(0.5) - PI.sqrt()).abs() < 1e-13);
        assert!((beta(2.0, 0.5) - 4.0 / 3.0).abs() < 1e-13);
        assert!((sphere_area(1) - 2.0).abs() < 1e-14);
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-13);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn bessel_reference_values() {
        // Reference values from standard tables.
        assert!((bessel_j(0, 1.0) - 0.765_197_686_557_966_6).abs() < 1e-14);
        assert!((bessel_j(1, 1.0) - 0.440_050_585_744_933_5).abs() < 1e-14);
        assert!((bessel_j(0, 10.0) - (-0.245_935_764_451_348_3)).abs() < 1e-14);
        assert!((bessel_j(1, 10.0) - 0.043_472_746_168_861_44).abs() < 1e-14);
    }

    #[test]
    fn bessel_branches_agree_at_switch() {
        for &x in &[24.9999, 25.0001, 30.0, 40.0] {
            for n in 0..2 {
                // Compare against the trapezoidal sum with more points.
                let m = 256usize;
                let nf = n as f64;
                let direct: f64 = (0..m)
                    .map(|k| {
                        let th = 2.0 * PI * k as f64 / m as f64;
                        (nf * th - x * th.sin()).cos()
                    })
                    .sum::<f64>()
                    / m as f64;
                assert!((bessel_j(n, x) - direct).abs() < 1e-12, "n={n} x={x}");
            }
        }
    }
}
