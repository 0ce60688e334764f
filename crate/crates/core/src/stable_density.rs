//! The exact stable transition density `p_α`, the closed-form comparator
//! `p̄_α(v, z) = C_α v^{-d/α} (1 + |z| v^{-1/α})^{-(d+α)}`, and validators for
//! the standard kernel estimates (moments, derivative bounds, convolution,
//! Taylor–Laplace).
//!
//! `p_α` is obtained by Gauss–Legendre inversion of the characteristic
//! function. The standardized profile (`v = 1`) is tabulated on `[0, 30]`
//! together with its first two derivatives and interpolated by quintic
//! Hermite polynomials; self-similarity gives every other time. Beyond the
//! table the convergent-in-practice tail series
//! `Σ_k a_k ξ^{-(αk+d)}` is used.

use crate::error::{LabError, Result};
use crate::exec::Exec;
use crate::grid::UniformGrid;
use crate::params::{Index, SpectralDensity, StableParams};
use crate::quad::{self, Feature};
use crate::special::{bessel_j01, gamma, sphere_area};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

/// `C_α = Γ(d+α) / (|S^{d-1}| Γ(d) Γ(α))`, the constant making `p̄_α(v,·)` a
/// probability density.
pub fn c_alpha(sp: &StableParams) -> f64 {
    c_alpha_raw(sp.alpha, sp.dim)
}

fn c_alpha_raw(alpha: f64, dim: usize) -> f64 {
    let d = dim as f64;
    gamma(d + alpha) / (sphere_area(dim) * gamma(d) * gamma(alpha))
}

/// Common interface of the exact kernel and the comparator.
pub trait Kernel: Sync {
    fn alpha(&self) -> f64;
    fn dim(&self) -> usize;
    fn density(&self, v: f64, z: &[f64]) -> f64;
    fn gradient(&self, v: f64, z: &[f64]) -> Vec<f64>;
}

fn norm(z: &[f64]) -> f64 {
    z.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparatorKernel {
    pub alpha: f64,
    pub dim: usize,
    pub c_alpha: f64,
}

impl ComparatorKernel {
    pub fn new(sp: &StableParams) -> Self {
        ComparatorKernel {
            alpha: sp.alpha,
            dim: sp.dim,
            c_alpha: c_alpha(sp),
        }
    }

    /// `p̄_α(v, z)` as a function of `r = |z|`.
    #[inline]
    pub fn radial(&self, v: f64, r: f64) -> f64 {
        let d = self.dim as f64;
        let s = v.powf(-1.0 / self.alpha);
        self.c_alpha * s.powf(d) * (1.0 + r * s).powf(-(d + self.alpha))
    }

    /// Radial derivative of `p̄_α(v, ·)`.
    #[inline]
    pub fn radial_derivative(&self, v: f64, r: f64) -> f64 {
        let d = self.dim as f64;
        let s = v.powf(-1.0 / self.alpha);
        -self.c_alpha * (d + self.alpha) * s.powf(d + 1.0) * (1.0 + r * s).powf(-(d + self.alpha + 1.0))
    }

    pub fn eval(&self, v: f64, z: &[f64]) -> Result<f64> {
        if !(v > 0.0) {
            return Err(LabError::Domain(format!("p̄_α needs v > 0, got {v}")));
        }
        if z.len() != self.dim {
            return Err(LabError::Domain(format!(
                "point has dimension {}, kernel has {}",
                z.len(),
                self.dim
            )));
        }
        Ok(self.radial(v, norm(z)))
    }

    /// Closed form of `∫ p̄_α(v, y) |y|^ζ dy = C_α |S^{d-1}| B(d+ζ, α−ζ) v^{ζ/α}`.
    pub fn spatial_moment_exact(&self, v: f64, zeta: f64) -> Result<f64> {
        if zeta >= self.alpha {
            return Err(LabError::Divergence(format!(
                "the moment of order ζ = {zeta} ≥ α = {} is infinite",
                self.alpha
            )));
        }
        let d = self.dim as f64;
        Ok(self.c_alpha
            * sphere_area(self.dim)
            * crate::special::beta(d + zeta, self.alpha - zeta)
            * v.powf(zeta / self.alpha))
    }
}

impl Kernel for ComparatorKernel {
    fn alpha(&self) -> f64 {
        self.alpha
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn density(&self, v: f64, z: &[f64]) -> f64 {
        self.radial(v, norm(z))
    }
    fn gradient(&self, v: f64, z: &[f64]) -> Vec<f64> {
        let r = norm(z);
        if r == 0.0 {
            return vec![0.0; z.len()];
        }
        let g = self.radial_derivative(v, r);
        z.iter().map(|x| g * x / r).collect()
    }
}

/// Settings of the Fourier inversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InversionConfig {
    /// The frequency cutoff `K` is chosen so that `exp(-v K^α)` equals this.
    pub tail_tol: f64,
    /// Optional hard cap on the frequency cutoff.
    pub max_frequency: Option<f64>,
    /// Spacing of the tabulated standardized profile.
    pub table_step: f64,
    /// Upper end of the table; the tail series is used beyond it.
    pub table_max: f64,
}

impl Default for InversionConfig {
    fn default() -> Self {
        InversionConfig {
            tail_tol: 1e-16,
            max_frequency: None,
            table_step: 0.01,
            table_max: 30.0,
        }
    }
}

/// Scaled radius beyond which the anisotropic density uses its leading
/// power-law tail instead of polar inversion.
pub const ANISOTROPIC_POLAR_RADIUS: f64 = 200.0;

/// Largest admissible characteristic-function value at the cutoff.
pub const CUTOFF_TAIL_LIMIT: f64 = 1e-10;

/// Frequency breakpoints for `∫_0^K (…) trig(k ξ) dk`: geometric towards
/// `k = 0` (where `k^α` is not smooth) and panels no wider than a half period.
fn frequency_breaks(xi: f64, kmax: f64) -> Vec<f64> {
    let half_period = if xi > 0.0 { PI / xi } else { f64::INFINITY };
    let h = half_period.min(0.5);
    let w0 = h.min(kmax);
    let mut b = vec![0.0];
    for j in (1..=30).rev() {
        b.push(w0 * 0.5f64.powi(j));
    }
    b.push(w0);
    let n = ((kmax - w0) / h).ceil().max(0.0) as usize;
    for i in 1..=n {
        b.push(w0 + (kmax - w0) * i as f64 / n as f64);
    }
    b
}

/// Fourier moments `∫_0^K k^j e^{-v k^α} {cos, sin}(k ξ) dk` needed by the
/// one-dimensional profiles.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    c0: f64,
    s1: f64,
    c2: f64,
    /// `∫ e^{-v k^α} sin(kξ)/k dk`
    s_m1: f64,
    c1: f64,
    s2: f64,
    c3: f64,
}

fn fourier_moments(alpha: f64, v: f64, xi: f64, kmax: f64) -> Moments {
    let gl = quad::rule();
    let mut m = Moments::default();
    for w in frequency_breaks(xi, kmax).windows(2) {
        let (a, b) = (w[0], w[1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (x, wt) in gl.nodes.iter().zip(&gl.weights) {
            let k = mid + half * x;
            let e = (-v * k.powf(alpha)).exp() * wt * half;
            let (s, c) = (k * xi).sin_cos();
            m.c0 += e * c;
            m.s1 += e * k * s;
            m.c2 += e * k * k * c;
            m.s_m1 += e * if k > 0.0 { s / k } else { xi };
            m.c1 += e * k * c;
            m.s2 += e * k * k * s;
            m.c3 += e * k * k * k * c;
        }
    }
    m
}

/// Hankel-type moments for the isotropic planar profile:
/// `∫ k e^{-k^α} J0(kρ)`, `∫ k² e^{-k^α} J1(kρ)` and
/// `∫ k³ e^{-k^α} (J0(kρ) − J1(kρ)/(kρ))`.
fn hankel_moments(alpha: f64, v: f64, rho: f64, kmax: f64) -> [f64; 3] {
    let gl = quad::rule();
    let mut out = [0.0; 3];
    for w in frequency_breaks(rho, kmax).windows(2) {
        let (a, b) = (w[0], w[1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (x, wt) in gl.nodes.iter().zip(&gl.weights) {
            let k = mid + half * x;
            let e = (-v * k.powf(alpha)).exp() * wt * half;
            let kr = k * rho;
            let (j0, j1) = bessel_j01(kr);
            let j1_over = if kr > 1e-8 { j1 / kr } else { 0.5 - kr * kr / 16.0 };
            out[0] += e * k * j0;
            out[1] += e * k * k * j1;
            out[2] += e * k * k * k * (j0 - j1_over);
        }
    }
    out
}

fn cutoff(alpha: f64, v: f64, tail_tol: f64) -> f64 {
    ((1.0 / tail_tol).ln() / v).powf(1.0 / alpha)
}

/// Values and first two derivatives on a uniform grid `0, h, 2h, …`,
/// interpolated by quintic Hermite polynomials.
#[derive(Debug, Clone)]
struct Profile {
    step: f64,
    data: Vec<[f64; 3]>,
}

impl Profile {
    fn max(&self) -> f64 {
        self.step * (self.data.len() - 1) as f64
    }

    /// Value and first derivative at `x ∈ [0, max]`.
    fn eval(&self, x: f64) -> (f64, f64) {
        let h = self.step;
        let pos = x / h;
        let i = (pos.floor() as usize).min(self.data.len() - 2);
        let t = pos - i as f64;
        let [f0, d0, s0] = self.data[i];
        let [f1, d1, s1] = self.data[i + 1];
        let t2 = t * t;
        let t3 = t2 * t;
        let t4 = t3 * t;
        let t5 = t4 * t;
        let h0 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
        let h1 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
        let h2 = 0.5 * (t2 - 3.0 * t3 + 3.0 * t4 - t5);
        let h3 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
        let h4 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
        let h5 = 0.5 * (t3 - 2.0 * t4 + t5);
        let value = f0 * h0 + h * d0 * h1 + h * h * s0 * h2 + f1 * h3 + h * d1 * h4 + h * h * s1 * h5;
        let g0 = -30.0 * t2 + 60.0 * t3 - 30.0 * t4;
        let g1 = 1.0 - 18.0 * t2 + 32.0 * t3 - 15.0 * t4;
        let g2 = 0.5 * (2.0 * t - 9.0 * t2 + 12.0 * t3 - 5.0 * t4);
        let g3 = 30.0 * t2 - 60.0 * t3 + 30.0 * t4;
        let g4 = -12.0 * t2 + 28.0 * t3 - 15.0 * t4;
        let g5 = 0.5 * (3.0 * t2 - 8.0 * t3 + 5.0 * t4);
        let deriv = (f0 * g0 + f1 * g3) / h + d0 * g1 + d1 * g4 + h * (s0 * g2 + s1 * g5);
        (value, deriv)
    }
}

/// `Σ_k c_k ξ^{-e_k}`, summed until the envelope `|c_k|/|sin| ξ^{-e_k}`
/// is negligible (individual terms may vanish through the sine factor).
#[derive(Debug, Clone)]
struct TailSeries {
    coeffs: Vec<f64>,
    envelope: Vec<f64>,
    exps: Vec<f64>,
}

impl TailSeries {
    /// Returns the value and derivative at `ξ > 0`.
    fn eval(&self, xi: f64) -> (f64, f64) {
        let lx = xi.ln();
        let mut value = 0.0;
        let mut deriv = 0.0;
        for ((c, env), e) in self.coeffs.iter().zip(&self.envelope).zip(&self.exps) {
            let p = (-e * lx).exp();
            let term = c * p;
            value += term;
            deriv -= e * term / xi;
            if env * p < 1e-18 * value.abs() {
                break;
            }
        }
        (value, deriv)
    }

    /// Radial profile tail of the isotropic `d`-dimensional density.
    fn density(alpha: f64, dim: usize) -> Self {
        let d = dim as f64;
        let mut coeffs = Vec::new();
        let mut envelope = Vec::new();
        let mut exps = Vec::new();
        let mut ln_fact = 0.0;
        for k in 1..=40 {
            let kf = k as f64;
            ln_fact += kf.ln();
            let ak = alpha * kf;
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            let ln_mag = ak * 2f64.ln()
                + crate::special::ln_gamma((ak + d) / 2.0)
                + crate::special::ln_gamma(ak / 2.0 + 1.0)
                - ln_fact
                - (d / 2.0 + 1.0) * PI.ln();
            coeffs.push(sign * ln_mag.exp() * (PI * kf * alpha / 2.0).sin());
            envelope.push(ln_mag.exp());
            exps.push(ak + d);
        }
        TailSeries { coeffs, envelope, exps }
    }

    /// Tail of `1 − F(ξ)` for the one-dimensional standardized law.
    fn survival(alpha: f64) -> Self {
        let base = TailSeries::density(alpha, 1);
        let coeffs = base
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c / (alpha * (i + 1) as f64))
            .collect();
        let envelope = base
            .envelope
            .iter()
            .enumerate()
            .map(|(i, c)| c / (alpha * (i + 1) as f64))
            .collect();
        let exps = base.exps.iter().map(|e| e - 1.0).collect();
        TailSeries { coeffs, envelope, exps }
    }

    /// Tail of `Q(ξ) = ∫_0^∞ s e^{-s^α} cos(sξ) ds`.
    fn q_profile(alpha: f64) -> Self {
        let mut coeffs = vec![-1.0];
        let mut envelope = vec![1.0];
        let mut exps = vec![2.0];
        let mut ln_fact = 0.0;
        for k in 1..=40 {
            let kf = k as f64;
            ln_fact += kf.ln();
            let ak = alpha * kf;
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            let mag = (crate::special::ln_gamma(ak + 2.0) - ln_fact).exp();
            coeffs.push(sign * mag * (PI * ak / 2.0).cos());
            envelope.push(mag);
            exps.push(ak + 2.0);
        }
        TailSeries { coeffs, envelope, exps }
    }
}

/// Tabulated standardized profiles for one `(α, d)`.
#[derive(Debug)]
struct Tables {
    /// Radial density profile `P(ξ)` at `v = 1`.
    density: Profile,
    density_tail: TailSeries,
    /// One-dimensional `F(ξ) − 1/2` (d = 1 only).
    cdf: Option<Profile>,
    survival_tail: Option<TailSeries>,
    /// Directional profile `Q` (planar anisotropic only).
    q: Option<Profile>,
    q_tail: Option<TailSeries>,
}

type TableKey = (u64, usize, bool, u64, u64);

fn table_cache() -> &'static Mutex<HashMap<TableKey, Arc<Tables>>> {
    static CACHE: OnceLock<Mutex<HashMap<TableKey, Arc<Tables>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn build_tables(alpha: f64, dim: usize, anisotropic: bool, cfg: &InversionConfig) -> Result<Arc<Tables>> {
    let key = (
        alpha.to_bits(),
        dim,
        anisotropic,
        cfg.table_step.to_bits(),
        cfg.table_max.to_bits(),
    );
    if let Some(t) = table_cache().lock().unwrap().get(&key) {
        return Ok(t.clone());
    }
    if !(cfg.table_step > 0.0 && cfg.table_max > 10.0 * cfg.table_step) {
        return Err(LabError::invalid("table_step", "table must hold at least ten cells"));
    }
    let n = (cfg.table_max / cfg.table_step).round() as usize + 1;
    let step = cfg.table_max / (n - 1) as f64;
    let kmax = cutoff(alpha, 1.0, 1e-16);
    let exec = Exec::Parallel;
    let tables = match (dim, anisotropic) {
        (1, _) => {
            let rows: Vec<Moments> = exec.map(n, |i| fourier_moments(alpha, 1.0, i as f64 * step, kmax));
            let density = rows
                .iter()
                .map(|m| [m.c0 / PI, -m.s1 / PI, -m.c2 / PI])
                .collect();
            let cdf = rows
                .iter()
                .map(|m| [m.s_m1 / PI, m.c0 / PI, -m.s1 / PI])
                .collect();
            Tables {
                density: Profile { step, data: density },
                density_tail: TailSeries::density(alpha, 1),
                cdf: Some(Profile { step, data: cdf }),
                survival_tail: Some(TailSeries::survival(alpha)),
                q: None,
                q_tail: None,
            }
        }
        (2, false) => {
            let rows: Vec<[f64; 3]> = exec.map(n, |i| hankel_moments(alpha, 1.0, i as f64 * step, kmax));
            let c = 1.0 / (2.0 * PI);
            let density = rows.iter().map(|h| [c * h[0], -c * h[1], -c * h[2]]).collect();
            Tables {
                density: Profile { step, data: density },
                density_tail: TailSeries::density(alpha, 2),
                cdf: None,
                survival_tail: None,
                q: None,
                q_tail: None,
            }
        }
        (2, true) => {
            let rows: Vec<Moments> = exec.map(n, |i| fourier_moments(alpha, 1.0, i as f64 * step, kmax));
            let q = rows.iter().map(|m| [m.c1, -m.s2, -m.c3]).collect();
            Tables {
                density: Profile { step, data: vec![[0.0; 3]; 2] },
                density_tail: TailSeries::density(alpha, 2),
                cdf: None,
                survival_tail: None,
                q: Some(Profile { step, data: q }),
                q_tail: Some(TailSeries::q_profile(alpha)),
            }
        }
        _ => {
            return Err(LabError::invalid(
                "dim",
                format!("the exact kernel is implemented for d ∈ {{1, 2}}, got {dim}"),
            ))
        }
    };
    let arc = Arc::new(tables);
    table_cache().lock().unwrap().insert(key, arc.clone());
    Ok(arc)
}

/// Exact transition density of the stable noise.
#[derive(Debug, Clone)]
pub struct ExactKernel {
    params: StableParams,
    config: InversionConfig,
    tables: Arc<Tables>,
    /// Angular symbol `m(φ)` with `∫|λ·ξ|^α μ(dξ) = |λ|^α m(φ)` (anisotropic only).
    symbol_modes: Vec<f64>,
}

impl ExactKernel {
    pub fn new(sp: &StableParams) -> Result<Self> {
        Self::with_config(sp, InversionConfig::default())
    }

    pub fn with_config(sp: &StableParams, config: InversionConfig) -> Result<Self> {
        let sp = sp.clone().validated()?;
        let anisotropic = !sp.spectral.is_isotropic();
        let tables = build_tables(sp.alpha, sp.dim, anisotropic, &config)?;
        let symbol_modes = match &sp.spectral {
            SpectralDensity::Fourier2d { cos_coeffs } if anisotropic => {
                // ∫|cos u|^α cos(2ju) du / ∫|cos u|^α du = Π_{i≤j} (α/2 − i + 1)/(α/2 + i)
                let h = sp.alpha / 2.0;
                let mut ratio = 1.0;
                cos_coeffs
                    .iter()
                    .enumerate()
                    .map(|(j, a)| {
                        let i = (j + 1) as f64;
                        ratio *= (h - i + 1.0) / (h + i);
                        a * ratio
                    })
                    .collect()
            }
            _ => Vec::new(),
        };
        Ok(ExactKernel {
            params: sp,
            config,
            tables,
            symbol_modes,
        })
    }

    pub fn params(&self) -> &StableParams {
        &self.params
    }

    pub fn config(&self) -> &InversionConfig {
        &self.config
    }

    pub fn is_anisotropic(&self) -> bool {
        !self.symbol_modes.is_empty()
    }

    /// Symbol of the generator along the direction of angle `phi`,
    /// normalized to `1` in the isotropic case.
    pub fn symbol(&self, phi: f64) -> f64 {
        1.0 + self
            .symbol_modes
            .iter()
            .enumerate()
            .map(|(j, b)| b * (2.0 * (j + 1) as f64 * phi).cos())
            .sum::<f64>()
    }

    /// Standardized radial profile `P(ξ)` and `P'(ξ)`.
    fn profile(&self, xi: f64) -> (f64, f64) {
        if xi <= self.tables.density.max() {
            self.tables.density.eval(xi)
        } else {
            self.tables.density_tail.eval(xi)
        }
    }

    fn q_profile(&self, xi: f64) -> (f64, f64) {
        let q = self.tables.q.as_ref().expect("anisotropic tables");
        let a = xi.abs();
        let (v, d) = if a <= q.max() {
            q.eval(a)
        } else {
            self.tables.q_tail.as_ref().unwrap().eval(a)
        };
        (v, if xi < 0.0 { -d } else { d })
    }

    fn check_time(v: f64) -> Result<()> {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(LabError::Domain(format!("kernel time must be positive, got {v}")))
        }
    }

    /// `p_α(v, z)` in one dimension.
    #[inline]
    pub fn eval_1d(&self, v: f64, z: f64) -> f64 {
        let s = v.powf(-1.0 / self.params.alpha);
        s * self.profile(z.abs() * s).0
    }

    /// `∂_z p_α(v, z)` in one dimension.
    #[inline]
    pub fn grad_1d(&self, v: f64, z: f64) -> f64 {
        let s = v.powf(-1.0 / self.params.alpha);
        let d = s * s * self.profile(z.abs() * s).1;
        if z < 0.0 {
            -d
        } else {
            d
        }
    }

    /// `∂_v p_α(v, z) = -(1/(αv)) (d p + z·∇p)` in one dimension.
    pub fn time_derivative_1d(&self, v: f64, z: f64) -> f64 {
        -(self.eval_1d(v, z) + z * self.grad_1d(v, z)) / (self.params.alpha * v)
    }

    /// Distribution function `P(X_v ≤ z)` in one dimension.
    pub fn cdf_1d(&self, v: f64, z: f64) -> f64 {
        let xi = z.abs() * v.powf(-1.0 / self.params.alpha);
        let cdf = self.tables.cdf.as_ref().expect("one-dimensional tables");
        let upper = if xi <= cdf.max() {
            0.5 + cdf.eval(xi).0
        } else {
            1.0 - self.tables.survival_tail.as_ref().unwrap().eval(xi).0
        };
        if z >= 0.0 {
            upper
        } else {
            1.0 - upper
        }
    }

    pub fn eval(&self, v: f64, z: &[f64]) -> Result<f64> {
        Self::check_time(v)?;
        self.check_point(z)?;
        Ok(self.density(v, z))
    }

    pub fn grad(&self, v: f64, z: &[f64]) -> Result<Vec<f64>> {
        Self::check_time(v)?;
        self.check_point(z)?;
        Ok(self.gradient(v, z))
    }

    fn check_point(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.params.dim {
            return Err(LabError::Domain(format!(
                "point has dimension {}, kernel has {}",
                z.len(),
                self.params.dim
            )));
        }
        Ok(())
    }

    fn angular_nodes(&self, v: f64, r: f64) -> usize {
        let scaled = r * v.powf(-1.0 / self.params.alpha);
        ((64.0 * scaled) as usize).clamp(256, 16384)
    }

    /// Leading tail `v ν(z)` of the anisotropic density, where the Lévy
    /// density is `μ(z/|z|) |z|^{-2-α} / (K_α I_α)` with
    /// `I_α = ∫_0^∞ (1 − cos s) s^{-1-α} ds = −Γ(−α) cos(πα/2)` and
    /// `K_α = ∫_{S^1} |cos θ|^α dθ`.
    fn planar_tail(&self, v: f64, z: &[f64]) -> (f64, [f64; 2]) {
        let a = self.params.alpha;
        let r = norm(z);
        let theta = z[1].atan2(z[0]);
        let i_alpha = -gamma(-a) * (PI * a / 2.0).cos();
        let k_alpha = 4.0 * PI.sqrt() * gamma((a + 1.0) / 2.0) / gamma(a / 2.0 + 1.0) / 2.0;
        let c = v / (k_alpha * i_alpha);
        let mu = self.params.spectral.value(theta);
        let dmu = match &self.params.spectral {
            SpectralDensity::Fourier2d { cos_coeffs } => cos_coeffs
                .iter()
                .enumerate()
                .map(|(k, b)| {
                    let m = 2.0 * (k + 1) as f64;
                    -b * m * (m * theta).sin()
                })
                .sum::<f64>(),
            SpectralDensity::Isotropic => 0.0,
        };
        let p = c * mu * r.powf(-2.0 - a);
        // ∇ in polar coordinates: ∂_r e_r + (1/r) ∂_θ e_θ
        let dr = -(2.0 + a) * p / r;
        let dth = c * dmu * r.powf(-3.0 - a);
        let (st, ct) = theta.sin_cos();
        (p, [dr * ct - dth * st, dr * st + dth * ct])
    }

    /// Polar inversion `(2π)^{-2} ∫dφ (v m)^{-2/α} Q(z·ω (v m)^{-1/α})` and
    /// its gradient.
    fn planar_polar(&self, v: f64, z: &[f64]) -> (f64, [f64; 2]) {
        let a = self.params.alpha;
        let n = self.angular_nodes(v, norm(z));
        let mut p = 0.0;
        let mut g = [0.0; 2];
        // The integrand is π-periodic in φ.
        for i in 0..n {
            let phi = PI * i as f64 / n as f64;
            let (s, c) = phi.sin_cos();
            let am = v * self.symbol(phi);
            let scale = am.powf(-1.0 / a);
            let proj = z[0] * c + z[1] * s;
            let (q, dq) = self.q_profile(proj * scale);
            p += scale * scale * q;
            let gg = scale * scale * scale * dq;
            g[0] += gg * c;
            g[1] += gg * s;
        }
        let w = 2.0 * PI / n as f64 / (4.0 * PI * PI);
        (p * w, [g[0] * w, g[1] * w])
    }

    fn planar(&self, v: f64, z: &[f64]) -> (f64, [f64; 2]) {
        if norm(z) * v.powf(-1.0 / self.params.alpha) > ANISOTROPIC_POLAR_RADIUS {
            self.planar_tail(v, z)
        } else {
            self.planar_polar(v, z)
        }
    }

    /// One-dimensional density by direct inversion in the unscaled
    /// frequency variable (no table, no self-similarity).
    pub fn eval_direct(&self, v: f64, z: f64) -> Result<f64> {
        Self::check_time(v)?;
        if self.params.dim != 1 {
            return Err(LabError::Domain("direct inversion is one-dimensional".into()));
        }
        let kmax = self.direct_cutoff(v)?;
        Ok(fourier_moments(self.params.alpha, v, z.abs(), kmax).c0 / PI)
    }

    /// Planar isotropic density by direct Hankel inversion.
    pub fn eval_direct_radial(&self, v: f64, r: f64) -> Result<f64> {
        Self::check_time(v)?;
        if self.params.dim != 2 || self.is_anisotropic() {
            return Err(LabError::Domain("Hankel inversion needs an isotropic planar kernel".into()));
        }
        let kmax = self.direct_cutoff(v)?;
        Ok(hankel_moments(self.params.alpha, v, r, kmax)[0] / (2.0 * PI))
    }

    fn direct_cutoff(&self, v: f64) -> Result<f64> {
        let natural = cutoff(self.params.alpha, v, self.config.tail_tol);
        match self.config.max_frequency {
            Some(k) if k < natural => {
                let tail = (-v * k.powf(self.params.alpha)).exp();
                if tail > CUTOFF_TAIL_LIMIT {
                    return Err(LabError::Resolution(format!(
                        "frequency cutoff {k} leaves characteristic-function mass {tail:.3e} > {CUTOFF_TAIL_LIMIT:e}"
                    )));
                }
                Ok(k)
            }
            _ => Ok(natural),
        }
    }

    /// Density on a one-dimensional grid, with negative quadrature ringing
    /// floored at zero.
    pub fn grid_1d(&self, v: f64, center: f64, grid: &UniformGrid, exec: Exec) -> Result<DensitySlice> {
        Self::check_time(v)?;
        let raw = exec.map(grid.len, |j| self.eval_1d(v, grid.point(j) - center));
        Ok(DensitySlice::floored(raw, grid.step))
    }
}

impl Kernel for ExactKernel {
    fn alpha(&self) -> f64 {
        self.params.alpha
    }
    fn dim(&self) -> usize {
        self.params.dim
    }
    fn density(&self, v: f64, z: &[f64]) -> f64 {
        if self.params.dim == 1 {
            return self.eval_1d(v, z[0]);
        }
        if self.is_anisotropic() {
            return self.planar(v, z).0;
        }
        let s = v.powf(-1.0 / self.params.alpha);
        s * s * self.profile(norm(z) * s).0
    }
    fn gradient(&self, v: f64, z: &[f64]) -> Vec<f64> {
        if self.params.dim == 1 {
            return vec![self.grad_1d(v, z[0])];
        }
        if self.is_anisotropic() {
            return self.planar(v, z).1.to_vec();
        }
        let r = norm(z);
        if r == 0.0 {
            return vec![0.0; 2];
        }
        let s = v.powf(-1.0 / self.params.alpha);
        let d = s * s * s * self.profile(r * s).1;
        z.iter().map(|x| d * x / r).collect()
    }
}

/// Density values on a grid after flooring negative entries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensitySlice {
    pub values: Vec<f64>,
    /// `Σ |negative values| · cell volume` removed by the floor.
    pub floored_mass: f64,
}

impl DensitySlice {
    pub fn floored(mut values: Vec<f64>, cell: f64) -> Self {
        let mut floored_mass = 0.0;
        for v in values.iter_mut() {
            if *v < 0.0 {
                floored_mass -= *v * cell;
                *v = 0.0;
            }
        }
        DensitySlice { values, floored_mass }
    }
}

/// CSV export with columns `t, x…, value`.
pub fn grid_csv(kernel: &dyn Kernel, times: &[f64], points: &[Vec<f64>]) -> Result<String> {
    let d = kernel.dim();
    let mut header = vec!["t".to_string()];
    if d == 1 {
        header.push("x".into());
    } else {
        header.extend((1..=d).map(|i| format!("x{i}")));
    }
    header.push("value".into());
    let mut rows = Vec::with_capacity(times.len() * points.len());
    for &t in times {
        if !(t > 0.0) {
            return Err(LabError::Domain(format!("export time must be positive, got {t}")));
        }
        for p in points {
            if p.len() != d {
                return Err(LabError::Domain("export point of wrong dimension".into()));
            }
            let mut row = vec![t];
            row.extend_from_slice(p);
            row.push(kernel.density(t, p));
            rows.push(row);
        }
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    crate::io::csv_string(&header, rows)
}

/// `∫ p(v, y) dy` by radial (isotropic) or iterated (anisotropic) quadrature.
pub fn total_mass(kernel: &dyn Kernel, v: f64) -> f64 {
    let scale = v.powf(1.0 / kernel.alpha());
    match kernel.dim() {
        1 => quad::integrate_line(|y| kernel.density(v, &[y]), &[Feature { center: 0.0, scale }]),
        _ => {
            // Polar coordinates with the angular average taken on 32 directions.
            let dirs = 32;
            (0..dirs)
                .map(|i| {
                    let phi = 2.0 * PI * (i as f64 + 0.5) / dirs as f64;
                    let (s, c) = phi.sin_cos();
                    quad::integrate_radial_log(|r| r * kernel.density(v, &[r * c, r * s]), scale, 60.0)
                })
                .sum::<f64>()
                * 2.0
                * PI
                / dirs as f64
        }
    }
}

/// Measured spatial-moment constants `t^{-ζ/α} ∫ p̄_α(t,y)|y|^ζ dy`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentReport {
    pub zeta: f64,
    pub normalized: Vec<(f64, f64)>,
    /// Supremum over the tested times.
    pub constant: f64,
}

/// Quadrature depth (in `ln r`) of the moment integrals; doubling it must not
/// change the value by more than 10%.
const MOMENT_DEPTH: f64 = 300.0;

pub fn validate_spatial_moments(sp: &StableParams, zeta: f64, times: &[f64]) -> Result<MomentReport> {
    if !(zeta > 0.0) {
        return Err(LabError::invalid("zeta", format!("moment order must be positive, got {zeta}")));
    }
    let kern = ComparatorKernel::new(sp);
    let d = sp.dim as f64;
    let area = sphere_area(sp.dim);
    let mut normalized = Vec::with_capacity(times.len());
    for &t in times {
        if !(t > 0.0) {
            return Err(LabError::Domain(format!("time must be positive, got {t}")));
        }
        let scale = t.powf(1.0 / sp.alpha);
        let ln_c = kern.c_alpha.ln() - d / sp.alpha * t.ln();
        let integrand = |r: f64| {
            area * ((d - 1.0 + zeta) * r.ln() + ln_c - (d + sp.alpha) * (r / scale).ln_1p()).exp()
        };
        let coarse = quad::integrate_radial_log(integrand, scale, MOMENT_DEPTH);
        let fine = quad::integrate_radial_log(integrand, scale, 2.0 * MOMENT_DEPTH);
        if !coarse.is_finite() || !fine.is_finite() || (fine - coarse).abs() > 0.1 * coarse.abs() {
            return Err(LabError::Divergence(format!(
                "moment of order ζ = {zeta} does not converge (α = {}): {coarse:.4e} → {fine:.4e}",
                sp.alpha
            )));
        }
        normalized.push((t, fine * t.powf(-zeta / sp.alpha)));
    }
    let constant = normalized.iter().map(|x| x.1).fold(0.0, f64::max);
    Ok(MomentReport {
        zeta,
        normalized,
        constant,
    })
}

/// Ratio of `‖p̄_α(t−u, ·−y) p̄_α(u−s, x−·)‖_{L^{ℓ'}}` to
/// `[(t−u)^{-d/(αℓ)} + (u−s)^{-d/(αℓ)}] p̄_α(t−s, x−y)`.
pub fn validate_convolution_lemma(
    sp: &StableParams,
    ell: Index,
    s: f64,
    u: f64,
    t: f64,
    x: &[f64],
    y: &[f64],
) -> Result<f64> {
    if !(s < u && u < t) {
        return Err(LabError::Domain(format!("need s < u < t, got {s}, {u}, {t}")));
    }
    if x.len() != sp.dim || y.len() != sp.dim {
        return Err(LabError::Domain("points must match the dimension".into()));
    }
    let ell = ell.validate("ell")?;
    let kern = ComparatorKernel::new(sp);
    let a = sp.alpha;
    let d = sp.dim as f64;
    let (t1, t2) = (t - u, u - s);
    let dist = |p: &[f64], q: &[f64]| norm(&p.iter().zip(q).map(|(a, b)| a - b).collect::<Vec<_>>());
    let product = |z: &[f64]| kern.radial(t1, dist(z, y)) * kern.radial(t2, dist(x, z));
    let lhs = match ell.conjugate() {
        Index::Infinite => {
            // Both factors decrease radially, so the supremum lies on the segment [x, y].
            let f = |lam: f64| {
                let z: Vec<f64> = x.iter().zip(y).map(|(a, b)| a + lam * (b - a)).collect();
                product(&z)
            };
            let n = 2000;
            let (mut best, mut arg) = (0.0, 0.0);
            for i in 0..=n {
                let lam = i as f64 / n as f64;
                let v = f(lam);
                if v > best {
                    best = v;
                    arg = lam;
                }
            }
            let (lo, hi) = ((arg - 1.0 / n as f64).max(0.0), (arg + 1.0 / n as f64).min(1.0));
            best.max(f(golden_max(f, lo, hi)))
        }
        Index::Finite(lp) => {
            let feats = |i: usize| {
                [
                    Feature { center: x[i], scale: t2.powf(1.0 / a) },
                    Feature { center: y[i], scale: t1.powf(1.0 / a) },
                ]
            };
            let integral = match sp.dim {
                1 => quad::integrate_line(|z| product(&[z]).powf(lp), &feats(0)),
                2 => quad::integrate_line(
                    |z0| quad::integrate_line(|z1| product(&[z0, z1]).powf(lp), &feats(1)),
                    &feats(0),
                ),
                _ => {
                    return Err(LabError::Domain(
                        "the convolution validator supports d ∈ {1, 2}".into(),
                    ))
                }
            };
            integral.powf(1.0 / lp)
        }
    };
    let e = d * ell.recip() / a;
    let rhs = (t1.powf(-e) + t2.powf(-e)) * kern.radial(t - s, dist(x, y));
    crate::error::ensure_finite(lhs / rhs, "convolution ratio")
}

/// Golden-section maximization of a unimodal function on `[lo, hi]`.
pub fn golden_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// `|D^ℓ p(t,x−w) − D^ℓ p(t,x−z)| t^{(ℓ+ζ)/α} / (|z−w|^ζ p̄_α(t,x−w))` for
/// `|w − z| ≤ t^{1/α}`.
#[allow(clippy::too_many_arguments)]
pub fn validate_taylor_laplace(
    kernel: &dyn Kernel,
    comparator: &ComparatorKernel,
    t: f64,
    x: &[f64],
    w: &[f64],
    z: &[f64],
    ell: u32,
    zeta: f64,
) -> Result<f64> {
    if ell > 1 {
        return Err(LabError::invalid("ell", "derivative order must be 0 or 1"));
    }
    if !(zeta > 0.0 && zeta <= 1.0) {
        return Err(LabError::invalid("zeta", format!("must lie in (0, 1], got {zeta}")));
    }
    if !(t > 0.0) {
        return Err(LabError::Domain(format!("time must be positive, got {t}")));
    }
    let d = kernel.dim();
    if x.len() != d || w.len() != d || z.len() != d {
        return Err(LabError::Domain("points must match the dimension".into()));
    }
    let a = kernel.alpha();
    let gap = norm(&w.iter().zip(z).map(|(p, q)| p - q).collect::<Vec<_>>());
    if gap > t.powf(1.0 / a) * (1.0 + 1e-12) {
        return Err(LabError::Domain(format!(
            "off-regime: |w − z| = {gap} exceeds t^(1/α) = {}",
            t.powf(1.0 / a)
        )));
    }
    if gap == 0.0 {
        return Ok(0.0);
    }
    let xw: Vec<f64> = x.iter().zip(w).map(|(p, q)| p - q).collect();
    let xz: Vec<f64> = x.iter().zip(z).map(|(p, q)| p - q).collect();
    let diff = if ell == 0 {
        (kernel.density(t, &xw) - kernel.density(t, &xz)).abs()
    } else {
        let g1 = kernel.gradient(t, &xw);
        let g2 = kernel.gradient(t, &xz);
        norm(&g1.iter().zip(&g2).map(|(p, q)| p - q).collect::<Vec<_>>())
    };
    let ratio = diff * t.powf((ell as f64 + zeta) / a) / (gap.powf(zeta) * comparator.radial(t, norm(&xw)));
    crate::error::ensure_finite(ratio, "Taylor–Laplace ratio")
}

/// Two-sided comparability of the exact kernel with the comparator on
/// `|z| ≤ radius`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Comparability {
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// `max(max_ratio, 1/min_ratio)`.
    pub constant: f64,
}

pub fn comparability(
    exact: &dyn Kernel,
    comparator: &ComparatorKernel,
    t: f64,
    radius: f64,
    n: usize,
    exec: Exec,
) -> Comparability {
    let d = exact.dim();
    let ratios = exec.map(n + 1, |i| {
        let r = radius * i as f64 / n as f64;
        let mut z = vec![0.0; d];
        z[0] = r;
        exact.density(t, &z) / comparator.radial(t, r)
    });
    let min_ratio = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_ratio = ratios.iter().cloned().fold(0.0, f64::max);
    Comparability {
        min_ratio,
        max_ratio,
        constant: max_ratio.max(1.0 / min_ratio),
    }
}

/// `sup_{|z| ≤ radius} t^{1/α} |∇p(t,z)| / p̄_α(t,z)`.
pub fn gradient_bound_constant(
    exact: &dyn Kernel,
    comparator: &ComparatorKernel,
    t: f64,
    radius: f64,
    n: usize,
    exec: Exec,
) -> f64 {
    let d = exact.dim();
    let a = exact.alpha();
    exec.map(n + 1, |i| {
        let r = radius * i as f64 / n as f64;
        let mut z = vec![0.0; d];
        z[0] = r;
        t.powf(1.0 / a) * norm(&exact.gradient(t, &z)) / comparator.radial(t, r)
    })
    .into_iter()
    .fold(0.0, f64::max)
}

/// Measured constants `[c1, c2]` with `p̄_α(t,x) ∈ [c1, c2] t/|x|^{d+α}` on
/// `t^{1/α} ≤ |x| ≤ radius`.
pub fn off_diagonal_constants(comparator: &ComparatorKernel, t: f64, radius: f64, n: usize) -> (f64, f64) {
    let a = comparator.alpha;
    let d = comparator.dim as f64;
    let r0 = t.powf(1.0 / a);
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..=n {
        let r = r0 * (radius / r0).powf(i as f64 / n as f64);
        let q = comparator.radial(t, r) / (t / r.powf(d + a));
        lo = lo.min(q);
        hi = hi.max(q);
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp(alpha: f64) -> StableParams {
        StableParams::new(alpha, 1).unwrap()
    }

    #[test]
    fn c_alpha_closed_form() {
        assert!((c_alpha(&sp(1.5)) - 0.75).abs() < 1e-14);
        assert!((c_alpha(&sp(1.999_999)) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn comparator_at_origin() {
        let k = ComparatorKernel::new(&sp(1.5));
        assert!((k.eval(1.0, &[0.0]).unwrap() - 0.75).abs() < 1e-13);
        assert!(k.eval(0.0, &[0.0]).is_err());
    }

    #[test]
    fn exact_density_at_origin() {
        let k = ExactKernel::new(&sp(1.5)).unwrap();
        let expected = gamma(1.0 / 1.5) / (1.5 * PI);
        assert!((k.eval_1d(1.0, 0.0) - expected).abs() < 1e-12);
        assert!((k.eval_direct(1.0, 0.0).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn table_and_series_agree_at_the_seam() {
        let k = ExactKernel::new(&sp(1.5)).unwrap();
        let (t, _) = k.tables.density.eval(30.0);
        let (s, _) = k.tables.density_tail.eval(30.0);
        assert!(((t - s) / t).abs() < 1e-10, "{t} {s}");
    }

    #[test]
    fn cutoff_too_small_is_reported() {
        let cfg = InversionConfig {
            max_frequency: Some(2.0),
            ..InversionConfig::default()
        };
        let k = ExactKernel::with_config(&sp(1.5), cfg).unwrap();
        assert!(matches!(k.eval_direct(1.0, 0.3), Err(LabError::Resolution(_))));
    }

    #[test]
    fn cdf_is_monotone_and_symmetric() {
        let k = ExactKernel::new(&sp(1.3)).unwrap();
        let mut last = 0.0;
        for i in -400..=400 {
            let z = i as f64 * 0.25;
            let f = k.cdf_1d(1.0, z);
            assert!(f >= last - 1e-14);
            assert!((f + k.cdf_1d(1.0, -z) - 1.0).abs() < 1e-12);
            last = f;
        }
        assert!((k.cdf_1d(1.0, 0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn spatial_moment_reference() {
        let r = validate_spatial_moments(&sp(1.5), 1.0, &[1.0]).unwrap();
        assert!((r.constant - 2.0).abs() < 1e-8, "{r:?}");
        assert!(matches!(
            validate_spatial_moments(&sp(1.5), 1.5, &[1.0]),
            Err(LabError::Divergence(_))
        ));
    }

    #[test]
    fn taylor_laplace_guards() {
        let s = sp(1.5);
        let e = ExactKernel::new(&s).unwrap();
        let c = ComparatorKernel::new(&s);
        assert_eq!(validate_taylor_laplace(&e, &c, 1.0, &[0.0], &[0.2], &[0.2], 0, 1.0).unwrap(), 0.0);
        assert!(validate_taylor_laplace(&e, &c, 1.0, &[0.0], &[0.0], &[3.0], 0, 1.0).is_err());
    }

    #[test]
    fn anisotropic_tail_constant_matches_isotropic_series() {
        let a = 1.5;
        let s = StableParams::with_spectral(a, 2, SpectralDensity::Fourier2d { cos_coeffs: vec![1e-12] })
            .unwrap();
        let k = ExactKernel::new(&s).unwrap();
        let lead = TailSeries::density(a, 2).coeffs[0];
        let (p, g) = k.planar_tail(1.0, &[300.0, 400.0]);
        let expected = lead * 500f64.powf(-2.0 - a);
        assert!((p - expected).abs() < 1e-9 * expected, "{p} vs {expected}");
        let gr = -(2.0 + a) * expected / 500.0;
        assert!((g[0] - gr * 0.6).abs() < 1e-9 * gr.abs());
        // continuity with the polar inversion at the switch radius
        let z = [ANISOTROPIC_POLAR_RADIUS, 0.0];
        let (pp, _) = k.planar_polar(1.0, &z);
        let (pt, _) = k.planar_tail(1.0, &z);
        assert!((pp - pt).abs() < 2e-3 * pt, "{pp} vs {pt}");
    }

    #[test]
    fn symbol_ratio_first_mode() {
        let s = StableParams::with_spectral(
            1.5,
            2,
            SpectralDensity::Fourier2d { cos_coeffs: vec![0.3] },
        )
        .unwrap();
        let k = ExactKernel::new(&s).unwrap();
        // ∫|cos u|^α cos 2u / ∫|cos u|^α = α/(α+2)
        assert!((k.symbol_modes[0] - 0.3 * 1.5 / 3.5).abs() < 1e-15);
        // direct angular quadrature of the symbol
        let n = 20000;
        let phi = 0.4;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..n {
            let th = 2.0 * PI * (i as f64 + 0.5) / n as f64;
            num += (phi - th).cos().abs().powf(1.5) * (1.0 + 0.3 * (2.0 * th).cos());
            den += th.cos().abs().powf(1.5);
        }
        assert!((k.symbol(phi) - num / den).abs() < 1e-6);
    }
}
