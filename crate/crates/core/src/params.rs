//! Scalar parameter arithmetic: noise and drift indices, the admissibility
//! conditions, the parabolic gain `θ`, the gap to singularity `γ`, the range of
//! admissible Hölder exponents and the singularity weight `𝔏(u, s, t, ζ)`.

use crate::error::{LabError, Result};
use crate::quad;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::f64::consts::PI;
use std::fmt;

/// Integrability/summability index in `[1, ∞]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Index {
    Finite(f64),
    Infinite,
}

impl Index {
    /// `1/index`, which is `0` at infinity.
    pub fn recip(self) -> f64 {
        match self {
            Index::Finite(v) => 1.0 / v,
            Index::Infinite => 0.0,
        }
    }

    /// Hölder conjugate `index'` with `1/index + 1/index' = 1`.
    pub fn conjugate(self) -> Index {
        match self {
            Index::Infinite => Index::Finite(1.0),
            Index::Finite(1.0) => Index::Infinite,
            Index::Finite(v) => Index::Finite(v / (v - 1.0)),
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Index::Infinite)
    }

    pub fn value(self) -> f64 {
        match self {
            Index::Finite(v) => v,
            Index::Infinite => f64::INFINITY,
        }
    }

    pub fn validate(self, name: &str) -> Result<Index> {
        match self {
            Index::Finite(v) if !(v >= 1.0) || !v.is_finite() => Err(LabError::invalid(
                name,
                format!("must lie in [1, ∞], got {v}"),
            )),
            _ => Ok(self),
        }
    }
}

impl fmt::Display for Index {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Index::Finite(v) => write!(f, "{v}"),
            Index::Infinite => write!(f, "inf"),
        }
    }
}

impl Serialize for Index {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Index::Finite(v) => s.serialize_f64(*v),
            Index::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Index {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) if v.is_infinite() && v > 0.0 => Ok(Index::Infinite),
            Raw::Num(v) => Ok(Index::Finite(v)),
            Raw::Text(t) => match t.trim().to_ascii_lowercase().as_str() {
                "inf" | "infinity" | "∞" => Ok(Index::Infinite),
                other => other
                    .parse::<f64>()
                    .map(Index::Finite)
                    .map_err(|_| serde::de::Error::custom(format!("expected a number or \"inf\", got {t:?}"))),
            },
        }
    }
}

/// Density of the spectral measure on the unit sphere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpectralDensity {
    /// Constant density; the generator is then `-(-Δ)^{α/2}`.
    Isotropic,
    /// Planar density `1 + Σ_k a_k cos(2kθ)` (even by construction).
    Fourier2d { cos_coeffs: Vec<f64> },
}

impl SpectralDensity {
    /// Value at the direction of angle `theta` (planar case) or at either
    /// point of `S^0`.
    pub fn value(&self, theta: f64) -> f64 {
        match self {
            SpectralDensity::Isotropic => 1.0,
            SpectralDensity::Fourier2d { cos_coeffs } => {
                1.0 + cos_coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, a)| a * (2.0 * (k + 1) as f64 * theta).cos())
                    .sum::<f64>()
            }
        }
    }

    pub fn is_isotropic(&self) -> bool {
        match self {
            SpectralDensity::Isotropic => true,
            SpectralDensity::Fourier2d { cos_coeffs } => cos_coeffs.iter().all(|a| *a == 0.0),
        }
    }

    /// Infimum and supremum over a fine angular grid.
    pub fn bounds(&self) -> (f64, f64) {
        let n = 4096;
        (0..n)
            .map(|i| self.value(2.0 * PI * i as f64 / n as f64))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    }
}

/// Parameters of the driving symmetric α-stable noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StableParams {
    pub alpha: f64,
    pub dim: usize,
    pub spectral: SpectralDensity,
    /// Non-degeneracy constant of the spectral measure. Stored for reports;
    /// bound checks measure their constants instead of comparing to it.
    #[serde(default = "default_kappa")]
    pub kappa: f64,
}

fn default_kappa() -> f64 {
    1.0
}

impl StableParams {
    pub fn new(alpha: f64, dim: usize) -> Result<Self> {
        StableParams {
            alpha,
            dim,
            spectral: SpectralDensity::Isotropic,
            kappa: 1.0,
        }
        .validated()
    }

    pub fn with_spectral(alpha: f64, dim: usize, spectral: SpectralDensity) -> Result<Self> {
        StableParams {
            alpha,
            dim,
            spectral,
            kappa: 1.0,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.alpha > 1.0 && self.alpha < 2.0) {
            return Err(LabError::invalid(
                "alpha",
                format!("stability index must lie in (1, 2), got {}", self.alpha),
            ));
        }
        if self.dim == 0 {
            return Err(LabError::invalid("dim", "dimension must be at least 1"));
        }
        match &self.spectral {
            SpectralDensity::Isotropic => {}
            SpectralDensity::Fourier2d { .. } => {
                if self.dim != 2 {
                    return Err(LabError::invalid(
                        "spectral",
                        "planar Fourier spectral densities require dim = 2",
                    ));
                }
                let (lo, hi) = self.spectral.bounds();
                if !(lo > 0.0) || !hi.is_finite() {
                    return Err(LabError::invalid(
                        "spectral",
                        format!("density must be bounded away from 0 and ∞ (inf {lo}, sup {hi})"),
                    ));
                }
            }
        }
        Ok(self)
    }
}

/// Drift indices `b ∈ L^r([0,T], B^β_{p,q})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BesovIndices {
    pub beta: f64,
    pub p: Index,
    pub q: Index,
    pub r: Index,
}

impl BesovIndices {
    pub fn new(beta: f64, p: Index, q: Index, r: Index) -> Result<Self> {
        if !beta.is_finite() {
            return Err(LabError::invalid("beta", "must be finite"));
        }
        p.validate("p")?;
        q.validate("q")?;
        r.validate("r")?;
        Ok(BesovIndices { beta, p, q, r })
    }

    /// All of `p`, `q`, `r` infinite.
    pub fn bounded(beta: f64) -> Self {
        BesovIndices {
            beta,
            p: Index::Infinite,
            q: Index::Infinite,
            r: Index::Infinite,
        }
    }

    pub fn validate(&self) -> Result<()> {
        BesovIndices::new(self.beta, self.p, self.q, self.r).map(|_| ())
    }

    /// `θ = β + α − d/p − α/r`.
    pub fn theta(&self, sp: &StableParams) -> f64 {
        self.beta + sp.alpha - sp.dim as f64 * self.p.recip() - sp.alpha * self.r.recip()
    }

    /// `γ = β − (1 − α + α/r + d/p)/2`.
    pub fn gamma(&self, sp: &StableParams) -> f64 {
        self.beta
            - (1.0 - sp.alpha + sp.alpha * self.r.recip() + sp.dim as f64 * self.p.recip()) / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Admissibility {
    pub gr: bool,
    pub grd: bool,
    pub theta: f64,
    pub gamma: f64,
    /// Lower end of the admissible α-interval, `(1 + d/p)/(1 − 1/r)`.
    pub alpha_lower: f64,
    /// Lower end of the admissible β-interval under (GR).
    pub beta_lower_gr: f64,
    /// Lower end of the admissible β-interval for the dynamics.
    pub beta_lower_grd: f64,
}

/// Evaluates the good relation for the martingale problem and the stronger
/// good relation for the dynamics.
pub fn check_gr(sp: &StableParams, bi: &BesovIndices) -> Result<Admissibility> {
    if !(sp.alpha > 1.0 && sp.alpha < 2.0) {
        return Err(LabError::invalid(
            "alpha",
            format!("stability index must lie in (1, 2), got {}", sp.alpha),
        ));
    }
    bi.validate()?;
    let d = sp.dim as f64;
    let a = sp.alpha;
    let dp = d * bi.p.recip();
    let ar = a * bi.r.recip();
    let denom = 1.0 - bi.r.recip();
    let alpha_lower = if denom > 0.0 {
        (1.0 + dp) / denom
    } else {
        f64::INFINITY
    };
    let alpha_ok = a > alpha_lower && a < 2.0;
    let beta_lower_gr = (1.0 - a + dp + ar) / 2.0;
    let beta_lower_grd = (1.0 - a + 2.0 * dp + 2.0 * ar) / 2.0;
    let gr = alpha_ok && bi.beta > beta_lower_gr && bi.beta < 0.0;
    let grd = alpha_ok && bi.beta > beta_lower_grd && bi.beta < 0.0;
    Ok(Admissibility {
        gr,
        grd,
        theta: bi.theta(sp),
        gamma: bi.gamma(sp),
        alpha_lower,
        beta_lower_gr,
        beta_lower_grd,
    })
}

/// Open interval `(lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpenInterval {
    pub lo: f64,
    pub hi: f64,
}

impl OpenInterval {
    pub fn contains(&self, x: f64) -> bool {
        x > self.lo && x < self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// Hölder exponents `ρ ∈ (−β, γ − β)` for which the heat kernel estimates hold.
pub fn rho_range(bi: &BesovIndices, sp: &StableParams) -> Result<OpenInterval> {
    let adm = check_gr(sp, bi)?;
    if bi.beta >= 0.0 {
        return Err(LabError::Domain(format!(
            "β must be negative for a non-trivial Hölder range, got {}",
            bi.beta
        )));
    }
    if adm.gamma <= 0.0 {
        return Err(LabError::Domain(format!(
            "empty Hölder range: γ = {} ≤ 0",
            adm.gamma
        )));
    }
    Ok(OpenInterval {
        lo: -bi.beta,
        hi: adm.gamma - bi.beta,
    })
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// The singularity weight
/// `𝔏(u,s,t,ζ) = (t−s)^{β/α} (t−u)^{−1/α} [(t−u)^{−d/(αp)} + (u−s)^{−d/(αp)}]
///              × [(t−s)^{ζ/α}((t−u)^{−ζ/α} + (u−s)^{−ζ/α}) + 1]`.
#[derive(Debug, Clone, Copy)]
pub struct SingularityWeight {
    pub alpha: f64,
    pub dim: usize,
    pub indices: BesovIndices,
}

impl SingularityWeight {
    pub fn new(sp: &StableParams, bi: &BesovIndices) -> Self {
        SingularityWeight {
            alpha: sp.alpha,
            dim: sp.dim,
            indices: *bi,
        }
    }

    /// `ln 𝔏` from the logarithms of the three time gaps, so that the weight
    /// can be evaluated arbitrarily close to the endpoints.
    pub fn ln_eval(&self, ln_ts: f64, ln_ut: f64, ln_us: f64, zeta: f64) -> f64 {
        let a = self.alpha;
        let dpa = self.dim as f64 * self.indices.p.recip() / a;
        let first = self.indices.beta / a * ln_ts - ln_ut / a;
        let second = log_sum_exp(-dpa * ln_ut, -dpa * ln_us);
        let z = zeta / a;
        let third = log_sum_exp(log_sum_exp(z * (ln_ts - ln_ut), z * (ln_ts - ln_us)), 0.0);
        first + second + third
    }

    pub fn eval(&self, u: f64, s: f64, t: f64, zeta: f64) -> Result<f64> {
        if !(s < u && u < t) {
            return Err(LabError::Domain(format!(
                "𝔏 needs s < u < t, got s={s}, u={u}, t={t}"
            )));
        }
        let beta = self.indices.beta;
        if !(zeta > -beta && zeta <= 1.0) {
            return Err(LabError::Domain(format!(
                "ζ must lie in (−β, 1] = ({}, 1], got {zeta}",
                -beta
            )));
        }
        let v = self.ln_eval((t - s).ln(), (t - u).ln(), (u - s).ln(), zeta).exp();
        crate::error::ensure_finite(v, "𝔏")
    }
}

/// Direct evaluation of `𝔏(u, s, t, ζ)`.
pub fn eval_l(u: f64, s: f64, t: f64, zeta: f64, sp: &StableParams, bi: &BesovIndices) -> Result<f64> {
    SingularityWeight::new(sp, bi).eval(u, s, t, zeta)
}

/// Outcome of the finite-versus-divergent test for the Gronwall–Volterra
/// time integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrabilityVerdict {
    pub rho: f64,
    pub value: f64,
    pub refined_value: f64,
    pub relative_change: f64,
    pub finite: bool,
}

/// Relative change above which a doubled quadrature depth flags divergence.
pub const DIVERGENCE_CHANGE: f64 = 0.10;

/// Default truncation depth (in logarithmic distance to each endpoint).
pub const DEFAULT_DEPTH: f64 = 1000.0;

/// Quadrature of
/// `∫_s^t 𝔏(u,s,t,ρ)^{r'} (u−s)^{−ρr'/α} [(t−s)^{ρ/α}(t−u)^{−ρ/α} + 1]^{r'} du`
/// truncated at logarithmic depth `depth` from both endpoints.
///
/// With `u = s + (t−s)λ`, each half of `(0,1)` is mapped to `τ ∈ [0, depth]`
/// through `λ = e^{−τ}/2` (resp. `1−λ = e^{−τ}/2`), and the integrand is
/// evaluated in log-space so that endpoint distances far below machine
/// epsilon remain exact.
pub fn weighted_time_integral(
    sp: &StableParams,
    bi: &BesovIndices,
    s: f64,
    t: f64,
    rho: f64,
    depth: f64,
) -> Result<f64> {
    if !(s < t) {
        return Err(LabError::Domain(format!("need s < t, got s={s}, t={t}")));
    }
    let rp = match bi.r.conjugate() {
        Index::Finite(v) => v,
        Index::Infinite => {
            return Err(LabError::invalid(
                "r",
                "r = 1 makes the conjugate exponent infinite; the time integral is a supremum",
            ))
        }
    };
    let w = SingularityWeight::new(sp, bi);
    let a = sp.alpha;
    let ln_ts = (t - s).ln();
    let ln_integrand = |ln_lam: f64, ln_mu: f64| -> f64 {
        let ln_us = ln_ts + ln_lam;
        let ln_ut = ln_ts + ln_mu;
        let l = w.ln_eval(ln_ts, ln_ut, ln_us, rho);
        let bracket = log_sum_exp(rho / a * (ln_ts - ln_ut), 0.0);
        rp * l - rho * rp / a * ln_us + rp * bracket
    };
    let panels = depth.ceil().max(1.0) as usize;
    let step = depth / panels as f64;
    let gl = quad::rule();
    let mut total = 0.0;
    for half in 0..2 {
        for k in 0..panels {
            let a0 = k as f64 * step;
            total += gl.integrate(
                |tau| {
                    let ln_small = -tau - std::f64::consts::LN_2;
                    let small = ln_small.exp();
                    let ln_large = (-small).ln_1p();
                    let (ln_lam, ln_mu) = if half == 0 {
                        (ln_small, ln_large)
                    } else {
                        (ln_large, ln_small)
                    };
                    // dλ = small · dτ
                    (ln_integrand(ln_lam, ln_mu) + ln_small).exp()
                },
                a0,
                a0 + step,
            );
        }
    }
    Ok(total * (t - s))
}

/// Doubles the quadrature depth and declares divergence when the value moves
/// by more than [`DIVERGENCE_CHANGE`] (or overflows).
pub fn classify_integrability(
    sp: &StableParams,
    bi: &BesovIndices,
    s: f64,
    t: f64,
    rho: f64,
    depth: f64,
) -> Result<IntegrabilityVerdict> {
    let value = weighted_time_integral(sp, bi, s, t, rho, depth)?;
    let refined_value = weighted_time_integral(sp, bi, s, t, rho, 2.0 * depth)?;
    let relative_change = if value.is_finite() && refined_value.is_finite() && value > 0.0 {
        (refined_value - value).abs() / value
    } else {
        f64::INFINITY
    };
    Ok(IntegrabilityVerdict {
        rho,
        value,
        refined_value,
        relative_change,
        finite: relative_change <= DIVERGENCE_CHANGE,
    })
}

/// Exponent `r'(1 + d/p + 2ρ)/α` governing the singularity at `u → t`.
pub fn endpoint_exponent(sp: &StableParams, bi: &BesovIndices, rho: f64) -> f64 {
    let rp = bi.r.conjugate().value();
    rp * (1.0 + sp.dim as f64 * bi.p.recip() + 2.0 * rho) / sp.alpha
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp15() -> StableParams {
        StableParams::new(1.5, 1).unwrap()
    }

    #[test]
    fn gr_reference_case() {
        let a = check_gr(&sp15(), &BesovIndices::bounded(-0.1)).unwrap();
        assert!(a.gr);
        assert!((a.theta - 1.4).abs() < 1e-12);
        assert!((a.gamma - 0.15).abs() < 1e-12);
        assert_eq!(a.alpha_lower, 1.0);
    }

    #[test]
    fn gr_fails_below_threshold() {
        let a = check_gr(&sp15(), &BesovIndices::bounded(-0.3)).unwrap();
        assert!(!a.gr);
        assert!((a.beta_lower_gr + 0.25).abs() < 1e-12);
    }

    #[test]
    fn gr_rejects_bad_indices() {
        let bad = BesovIndices {
            beta: -0.1,
            p: Index::Finite(0.5),
            q: Index::Infinite,
            r: Index::Infinite,
        };
        assert!(check_gr(&sp15(), &bad).is_err());
        let sp = StableParams {
            alpha: 2.0,
            dim: 1,
            spectral: SpectralDensity::Isotropic,
            kappa: 1.0,
        };
        assert!(check_gr(&sp, &BesovIndices::bounded(-0.1)).is_err());
    }

    #[test]
    fn r_equal_one_closes_the_alpha_interval() {
        let bi = BesovIndices::new(-0.1, Index::Infinite, Index::Infinite, Index::Finite(1.0)).unwrap();
        let a = check_gr(&sp15(), &bi).unwrap();
        assert!(a.alpha_lower.is_infinite());
        assert!(!a.gr && !a.grd);
    }

    #[test]
    fn rho_range_reference() {
        let iv = rho_range(&BesovIndices::bounded(-0.1), &sp15()).unwrap();
        assert!((iv.lo - 0.1).abs() < 1e-12 && (iv.hi - 0.25).abs() < 1e-12);
        let eps = 1e-3;
        let iv = rho_range(&BesovIndices::bounded(-0.25 + eps), &sp15()).unwrap();
        // width equals γ = β + 1/4 here
        assert!((iv.width() - eps).abs() < 1e-12);
        assert!(rho_range(&BesovIndices::bounded(0.0), &sp15()).is_err());
        assert!(rho_range(&BesovIndices::bounded(-0.3), &sp15()).is_err());
    }

    #[test]
    fn eval_l_matches_hand_computation() {
        let bi = BesovIndices::bounded(-0.1);
        let (s, t, u, z, a): (f64, f64, f64, f64, f64) = (0.0, 1.0, 0.5, 0.2, 1.5);
        let hand = (t - s).powf(-0.1 / a) * (t - u).powf(-1.0 / a) * 2.0
            * ((t - s).powf(z / a) * ((t - u).powf(-z / a) + (u - s).powf(-z / a)) + 1.0);
        let v = eval_l(u, s, t, z, &sp15(), &bi).unwrap();
        assert!((v - hand).abs() < 1e-12 * hand, "{v} vs {hand}");
    }

    #[test]
    fn eval_l_domain_and_blowup() {
        let bi = BesovIndices::bounded(-0.1);
        assert!(eval_l(1.0, 0.0, 1.0, 0.2, &sp15(), &bi).is_err());
        assert!(eval_l(0.5, 0.0, 1.0, 0.05, &sp15(), &bi).is_err());
        let near = eval_l(1.0 - 1e-12, 0.0, 1.0, 0.2, &sp15(), &bi).unwrap();
        let mid = eval_l(0.5, 0.0, 1.0, 0.2, &sp15(), &bi).unwrap();
        assert!(near > 1e7 * mid);
    }

    #[test]
    fn integrability_follows_endpoint_exponent() {
        let bi = BesovIndices::bounded(-0.1);
        let sp = sp15();
        let ok = classify_integrability(&sp, &bi, 0.0, 1.0, 0.2, DEFAULT_DEPTH).unwrap();
        assert!(ok.finite, "{ok:?}");
        let bad = classify_integrability(&sp, &bi, 0.0, 1.0, 0.3, DEFAULT_DEPTH).unwrap();
        assert!(!bad.finite, "{bad:?}");
    }

    #[test]
    fn index_serde() {
        let v: Vec<Index> = serde_json::from_str(r#"[2.0, "inf", "3"]"#).unwrap();
        assert_eq!(v, vec![Index::Finite(2.0), Index::Infinite, Index::Finite(3.0)]);
        assert_eq!(serde_json::to_string(&Index::Infinite).unwrap(), "\"inf\"");
        assert_eq!(Index::Finite(2.0).conjugate(), Index::Finite(2.0));
        assert_eq!(Index::Infinite.conjugate(), Index::Finite(1.0));
    }
}
