//! Synthetic one-dimensional drifts `b ∈ L^r([0,T], B^β_{p,q})`, their smooth
//! approximations `b^m` and the weak-dynamics functional
//! `𝔅(v, x, h) = ∫_0^h ∫ p_α(h−r, x−y) b(v+r, y) dy dr`.
//!
//! Rough fields are `2π`-periodic sums of random-phase trigonometric modes
//! grouped in dyadic frequency shells `[2^j, 2^{j+1})`; each shell is scaled so
//! that its `L^p` norm over one period is `scale · 2^{-jβ}`.

use crate::besov::{self, Boundary, SampledField, ThermicConfig};
use crate::error::{LabError, Result};
use crate::fft;
use crate::grid::UniformGrid;
use crate::params::{check_gr, BesovIndices, Index, StableParams};
use crate::quad::{self, Feature};
use crate::rng::substream;
use crate::stable_density::ExactKernel;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

/// `a cos(ωy) + b sin(ωy)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub omega: f64,
    pub a: f64,
    pub b: f64,
}

/// A trigonometric polynomial in space.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpectralSlice {
    pub constant: f64,
    pub modes: Vec<Mode>,
}

impl SpectralSlice {
    pub fn eval(&self, y: f64) -> f64 {
        self.constant
            + self
                .modes
                .iter()
                .map(|m| {
                    let (s, c) = (m.omega * y).sin_cos();
                    m.a * c + m.b * s
                })
                .sum::<f64>()
    }

    pub fn derivative(&self, y: f64) -> f64 {
        self.modes
            .iter()
            .map(|m| {
                let (s, c) = (m.omega * y).sin_cos();
                m.omega * (m.b * c - m.a * s)
            })
            .sum()
    }

    /// Applies the Fourier multiplier `g(ω)` to every mode (`g(0)` to the constant).
    pub fn filtered<F: Fn(f64) -> f64>(&self, g: F) -> SpectralSlice {
        SpectralSlice {
            constant: self.constant * g(0.0),
            modes: self
                .modes
                .iter()
                .map(|m| {
                    let w = g(m.omega);
                    Mode {
                        omega: m.omega,
                        a: m.a * w,
                        b: m.b * w,
                    }
                })
                .collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> SpectralSlice {
        self.filtered(|_| c)
    }

    pub fn add_scaled(&mut self, other: &SpectralSlice, c: f64) {
        self.constant += c * other.constant;
        for m in &other.modes {
            match self.modes.iter_mut().find(|x| x.omega == m.omega) {
                Some(x) => {
                    x.a += c * m.a;
                    x.b += c * m.b;
                }
                None => self.modes.push(Mode {
                    omega: m.omega,
                    a: c * m.a,
                    b: c * m.b,
                }),
            }
        }
    }

    pub fn max_frequency(&self) -> f64 {
        self.modes.iter().fold(0.0, |m, x| m.max(x.omega))
    }
}

/// Construction settings for random shell fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShellSpec {
    /// Highest shell index `J` (shells `0..=J`).
    pub shells: u32,
    /// Modes per shell (capped by the shell width `2^j`).
    pub modes_per_shell: u32,
    /// `L^p` size of shell `0`.
    pub scale: f64,
    /// Number of independent time slices on `[0, T]`.
    pub time_slices: usize,
    /// Verify the regularity bracket `β ± 0.05` at construction.
    pub check_regularity: bool,
}

impl Default for ShellSpec {
    fn default() -> Self {
        ShellSpec {
            shells: 8,
            modes_per_shell: 2,
            scale: 1.0,
            time_slices: 1,
            check_regularity: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriftKind {
    Zero,
    Constant { value: f64 },
    /// `amplitude · sin(frequency · y)`.
    Smooth { amplitude: f64, frequency: f64 },
    /// `b(t, y) = y`; unbounded, only meaningful for `𝔅`.
    LinearTest,
    /// Random shell field, piecewise constant in time on equal slices.
    Shells {
        spec: ShellSpec,
        slices: Vec<SpectralSlice>,
    },
}

/// A drift together with its target indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftField {
    pub indices: BesovIndices,
    pub alpha: f64,
    pub horizon: f64,
    pub seed: u64,
    pub kind: DriftKind,
    /// Built deliberately outside the good relation; downstream solvers run
    /// it instead of rejecting it.
    #[serde(default)]
    pub negative_control: bool,
}

/// Offset used for regularity brackets and convergence measurements.
pub const BETA_OFFSET: f64 = 0.05;

/// Shell `j` holds frequencies `2^j + k`, `k < min(K, 2^j)`.
fn shell_frequencies(j: u32, per_shell: u32) -> Vec<f64> {
    let width = 1u64 << j;
    (0..(per_shell as u64).min(width)).map(|k| (width + k) as f64).collect()
}

fn periodic_grid_for(max_freq: f64) -> UniformGrid {
    let n = fft::next_len((16.0 * max_freq.max(4.0)) as usize).max(256);
    UniformGrid::new(0.0, 2.0 * PI / n as f64, n)
}

/// Heat times `2^{-jα}` at which shell `j` dominates the thermic profile.
pub fn shell_scales(alpha: f64, first: u32, last: u32) -> Vec<f64> {
    (first..=last).map(|j| 2f64.powf(-(j as f64) * alpha)).collect()
}

impl DriftField {
    pub fn zero(sp: &StableParams, bi: BesovIndices, horizon: f64) -> Self {
        Self::builtin(sp, bi, horizon, DriftKind::Zero)
    }

    pub fn builtin(sp: &StableParams, bi: BesovIndices, horizon: f64, kind: DriftKind) -> Self {
        DriftField {
            indices: bi,
            alpha: sp.alpha,
            horizon,
            seed: 0,
            kind,
            negative_control: false,
        }
    }

    /// Random shell field of target regularity `β`.
    pub fn make(sp: &StableParams, bi: &BesovIndices, horizon: f64, seed: u64, spec: ShellSpec) -> Result<Self> {
        Self::make_inner(sp, bi, horizon, seed, spec, false)
    }

    /// Shell field whose indices violate the good relation, for negative
    /// controls. Indices that satisfy it are rejected.
    pub fn make_negative_control(
        sp: &StableParams,
        bi: &BesovIndices,
        horizon: f64,
        seed: u64,
        spec: ShellSpec,
    ) -> Result<Self> {
        if check_gr(sp, bi)?.gr {
            return Err(LabError::invalid("beta", "a negative control must violate the good relation"));
        }
        Self::make_inner(sp, bi, horizon, seed, spec, true)
    }

    fn make_inner(
        sp: &StableParams,
        bi: &BesovIndices,
        horizon: f64,
        seed: u64,
        spec: ShellSpec,
        negative_control: bool,
    ) -> Result<Self> {
        if sp.dim != 1 {
            return Err(LabError::invalid("dim", "synthetic drifts are one-dimensional"));
        }
        let adm = check_gr(sp, bi)?;
        if !adm.gr && !negative_control {
            return Err(LabError::invalid(
                "beta",
                format!(
                    "indices violate the good relation (β = {}, lower bound {})",
                    bi.beta, adm.beta_lower_gr
                ),
            ));
        }
        if !(horizon > 0.0) {
            return Err(LabError::invalid("horizon", "must be positive"));
        }
        if spec.time_slices == 0 || spec.modes_per_shell == 0 {
            return Err(LabError::invalid("shells", "need at least one time slice and one mode per shell"));
        }
        if spec.shells > 14 {
            return Err(LabError::invalid("shells", "at most 14 shells are supported"));
        }
        let max_freq = 2f64.powi(spec.shells as i32 + 1);
        let grid = periodic_grid_for(max_freq);
        let mut slices = Vec::with_capacity(spec.time_slices);
        for t in 0..spec.time_slices {
            let mut slice = SpectralSlice::default();
            for j in 0..=spec.shells {
                let mut rng = substream(seed, "drift-shell", ((t as u64) << 32) | j as u64);
                let mut shell = SpectralSlice::default();
                for omega in shell_frequencies(j, spec.modes_per_shell) {
                    let phase = 2.0 * PI * rng.random::<f64>();
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    shell.modes.push(Mode {
                        omega,
                        a: sign * phase.cos(),
                        b: -sign * phase.sin(),
                    });
                }
                let values: Vec<f64> = grid.points().iter().map(|&y| shell.eval(y)).collect();
                let norm = besov::lp_norm(&values, grid.step, bi.p);
                let target = spec.scale * 2f64.powf(-(j as f64) * bi.beta);
                slice.add_scaled(&shell, target / norm);
            }
            slices.push(slice);
        }
        let field = DriftField {
            indices: *bi,
            alpha: sp.alpha,
            horizon,
            seed,
            kind: DriftKind::Shells { spec, slices },
            negative_control,
        };
        if spec.check_regularity && spec.shells >= 7 {
            for t in 0..spec.time_slices {
                let report = field.regularity_bracket(t)?;
                if !report.passed {
                    return Err(LabError::Numerical(format!(
                        "regularity bracket failed on slice {t}: growth {:.4} at β−{BETA_OFFSET}, {:.4} at β+{BETA_OFFSET}",
                        report.below.slope, report.above.slope
                    )));
                }
            }
        }
        Ok(field)
    }

    /// Regularity bracket `β ± 0.05` of one time slice.
    pub fn regularity_bracket(&self, slice: usize) -> Result<besov::BracketReport> {
        let DriftKind::Shells { spec, slices } = &self.kind else {
            return Err(LabError::invalid("kind", "regularity brackets apply to shell fields"));
        };
        let s = slices
            .get(slice)
            .ok_or_else(|| LabError::invalid("slice", "out of range"))?;
        let field = sample_slice(s, Boundary::Periodic);
        let scales = shell_scales(self.alpha, 3, spec.shells.saturating_sub(2).max(3));
        besov::regularity_bracket(&field, self.indices.beta, BETA_OFFSET, Index::Finite(2.0), self.alpha, &scales)
    }

    pub fn is_spectral(&self) -> bool {
        !matches!(self.kind, DriftKind::LinearTest)
    }

    /// Unmollified spatial profile at time `t` (spectral kinds only).
    pub fn slice(&self, t: f64) -> Option<SpectralSlice> {
        match &self.kind {
            DriftKind::Zero => Some(SpectralSlice::default()),
            DriftKind::Constant { value } => Some(SpectralSlice {
                constant: *value,
                modes: Vec::new(),
            }),
            DriftKind::Smooth { amplitude, frequency } => Some(SpectralSlice {
                constant: 0.0,
                modes: vec![Mode {
                    omega: *frequency,
                    a: 0.0,
                    b: *amplitude,
                }],
            }),
            DriftKind::LinearTest => None,
            DriftKind::Shells { slices, .. } => {
                let n = slices.len();
                let i = ((t / self.horizon * n as f64).floor().max(0.0) as usize).min(n - 1);
                Some(slices[i].clone())
            }
        }
    }

    pub fn eval(&self, t: f64, y: f64) -> f64 {
        match &self.kind {
            DriftKind::LinearTest => y,
            _ => self.slice(t).map(|s| s.eval(y)).unwrap_or(0.0),
        }
    }

    pub fn mollify(&self, level: u32) -> MollifiedDrift {
        MollifiedDrift {
            base: self.clone(),
            level: Some(level),
        }
    }

    /// The field itself seen through the mollified interface.
    pub fn unmollified(&self) -> MollifiedDrift {
        MollifiedDrift {
            base: self.clone(),
            level: None,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        crate::io::read_json(path)
    }

    /// Time slices of a shell field (one slice for the other kinds).
    pub fn time_slices(&self) -> usize {
        match &self.kind {
            DriftKind::Shells { slices, .. } => slices.len(),
            _ => 1,
        }
    }
}

/// Sampled periodic field of a spectral slice.
pub fn sample_slice(s: &SpectralSlice, boundary: Boundary) -> SampledField {
    let grid = periodic_grid_for(s.max_frequency());
    SampledField::from_fn(grid, boundary, |y| s.eval(y))
}

/// Normalized bump `ψ(x) ∝ exp(−1/(1−x²))` on `(−1, 1)`.
fn bump(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - x * x)).exp()
    }
}

fn bump_mass() -> f64 {
    static MASS: std::sync::OnceLock<f64> = std::sync::OnceLock::new();
    *MASS.get_or_init(|| quad::integrate_panels(bump, &(0..=64).map(|i| -1.0 + i as f64 / 32.0).collect::<Vec<_>>()))
}

/// Fourier transform `ψ̂(ξ) = ∫ ψ(x) cos(ξx) dx` of the normalized bump.
pub fn bump_transform(xi: f64) -> f64 {
    let panels = 64 + xi.abs().ceil() as usize;
    let breaks: Vec<f64> = (0..=panels).map(|i| i as f64 / panels as f64).collect();
    2.0 * quad::integrate_panels(|x| bump(x) * (xi * x).cos(), &breaks) / bump_mass()
}

/// `∫_{-1}^{s} ψ`.
fn bump_cdf(s: f64) -> f64 {
    if s <= -1.0 {
        return 0.0;
    }
    if s >= 1.0 {
        return 1.0;
    }
    let panels = 32;
    let breaks: Vec<f64> = (0..=panels).map(|i| -1.0 + (s + 1.0) * i as f64 / panels as f64).collect();
    quad::integrate_panels(bump, &breaks) / bump_mass()
}

/// `b^m`: spatial convolution with `ψ_{δ_m}`, `δ_m = 2^{-m}`, and, when
/// `r < ∞`, temporal convolution with the same bump.
#[derive(Debug, Clone)]
pub struct MollifiedDrift {
    pub base: DriftField,
    /// `None` means no mollification.
    pub level: Option<u32>,
}

impl MollifiedDrift {
    pub fn delta(&self) -> Option<f64> {
        self.level.map(|m| 2f64.powi(-(m as i32)))
    }

    fn time_weights(&self, t: f64) -> Vec<f64> {
        let n = self.base.time_slices();
        let smooth_time = !self.base.indices.r.is_infinite();
        match (self.delta(), smooth_time) {
            (Some(d), true) if n > 1 => {
                // slices are extended constantly outside [0, T]
                let h = self.base.horizon / n as f64;
                (0..n)
                    .map(|i| {
                        let lo = if i == 0 { f64::NEG_INFINITY } else { i as f64 * h };
                        let hi = if i == n - 1 { f64::INFINITY } else { (i + 1) as f64 * h };
                        bump_cdf((t - lo) / d) - bump_cdf((t - hi) / d)
                    })
                    .collect()
            }
            _ => {
                let i = ((t / self.base.horizon * n as f64).floor().max(0.0) as usize).min(n - 1);
                let mut w = vec![0.0; n];
                w[i] = 1.0;
                w
            }
        }
    }

    /// Spatial profile at time `t`, `None` for non-spectral drifts.
    pub fn slice(&self, t: f64) -> Option<SpectralSlice> {
        let mut acc = match &self.base.kind {
            DriftKind::Shells { slices, .. } => {
                let mut acc = SpectralSlice::default();
                for (w, s) in self.time_weights(t).iter().zip(slices) {
                    if *w != 0.0 {
                        acc.add_scaled(s, *w);
                    }
                }
                acc
            }
            _ => self.base.slice(t)?,
        };
        if let Some(d) = self.delta() {
            acc = acc.filtered(|w| if w == 0.0 { 1.0 } else { bump_transform(w * d) });
        }
        Some(acc)
    }

    pub fn eval(&self, t: f64, y: f64) -> f64 {
        match self.slice(t) {
            Some(s) => s.eval(y),
            // ψ is even, so mollification preserves affine functions
            None => self.base.eval(t, y),
        }
    }

    pub fn derivative(&self, t: f64, y: f64) -> f64 {
        match self.slice(t) {
            Some(s) => s.derivative(y),
            None => 1.0,
        }
    }

    /// `sup |b^m|` bound from the absolute coefficient sum.
    pub fn sup_bound(&self, t: f64) -> f64 {
        self.slice(t)
            .map(|s| s.constant.abs() + s.modes.iter().map(|m| m.a.hypot(m.b)).sum::<f64>())
            .unwrap_or(f64::INFINITY)
    }

    /// `𝔅(v, x, h)`.
    pub fn eval_b(&self, v: f64, x: f64, h: f64) -> Result<f64> {
        if !(h > 0.0) {
            return Err(LabError::Domain(format!("horizon h must be positive, got {h}")));
        }
        if v < 0.0 || v + h > self.base.horizon * (1.0 + 1e-12) {
            return Err(LabError::Domain(format!(
                "[v, v+h] = [{v}, {}] leaves [0, {}]",
                v + h,
                self.base.horizon
            )));
        }
        let a = self.base.alpha;
        let breaks = time_breaks(v, h, self.base.horizon, self.base.time_slices(), self.delta(), &self.base);
        match self.slice(v) {
            Some(_) => {
                // exact heat convolution of each mode: ∫p(u, x−y) cos(ωy+φ) dy = e^{−uω^α} cos(ωx+φ)
                let f = |r: f64| {
                    let s = self.slice(v + r).unwrap();
                    let u = h - r;
                    s.filtered(|w| (-u * w.powf(a)).exp()).eval(x)
                };
                Ok(quad::integrate_panels(f, &breaks))
            }
            None => {
                let sp = StableParams::new(a, 1)?;
                let kernel = ExactKernel::new(&sp)?;
                let f = |r: f64| {
                    let u = h - r;
                    quad::integrate_line(
                        |y| kernel.eval_1d(u, x - y) * self.eval(v + r, y),
                        &[Feature {
                            center: x,
                            scale: u.powf(1.0 / a),
                        }],
                    )
                };
                Ok(quad::integrate_panels(f, &breaks))
            }
        }
    }
}

/// Breakpoints in `r ∈ [0, h]`: slice boundaries and geometric grading
/// towards `r = h` where the heat kernel concentrates.
fn time_breaks(v: f64, h: f64, horizon: f64, slices: usize, delta: Option<f64>, base: &DriftField) -> Vec<f64> {
    let mut b = quad::graded_breaks(0.0, h, false, true, 4, 40);
    if slices > 1 && (delta.is_none() || base.indices.r.is_infinite()) {
        let w = horizon / slices as f64;
        for i in 1..slices {
            let r = i as f64 * w - v;
            if r > 0.0 && r < h {
                b.push(r);
            }
        }
    }
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.dedup();
    b
}

/// `‖b − b^m‖` at regularity `cfg.theta`, maximized over time slices.
pub fn mollification_error(field: &DriftField, level: u32, cfg: &ThermicConfig) -> Result<f64> {
    let m = field.mollify(level);
    let mut worst: f64 = 0.0;
    for t in slice_times(field) {
        let full = field.unmollified().slice(t).ok_or_else(not_spectral)?;
        let mut diff = full.clone();
        diff.add_scaled(&m.slice(t).unwrap(), -1.0);
        worst = worst.max(besov::thermic_norm(&sample_slice(&diff, Boundary::Periodic), cfg)?.total);
    }
    Ok(worst)
}

fn not_spectral() -> LabError {
    LabError::invalid("kind", "operation needs a spectral drift")
}

fn slice_times(field: &DriftField) -> Vec<f64> {
    let n = field.time_slices();
    (0..n).map(|i| (i as f64 + 0.5) * field.horizon / n as f64).collect()
}

/// `L^r`-in-time aggregate of per-slice Besov norms.
pub fn time_norm(field: &DriftField, level: Option<u32>, cfg: &ThermicConfig) -> Result<f64> {
    let m = MollifiedDrift {
        base: field.clone(),
        level,
    };
    let ts = slice_times(field);
    let w = field.horizon / ts.len() as f64;
    let norms = ts
        .iter()
        .map(|&t| {
            let s = m.slice(t).ok_or_else(not_spectral)?;
            Ok(besov::thermic_norm(&sample_slice(&s, Boundary::Periodic), cfg)?.total)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(match field.indices.r {
        Index::Infinite => norms.iter().cloned().fold(0.0, f64::max),
        Index::Finite(r) => (norms.iter().map(|n| n.powf(r) * w).sum::<f64>()).powf(1.0 / r),
    })
}

/// Mollification contract along a sequence of levels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MollificationReport {
    pub beta_tilde: f64,
    pub levels: Vec<u32>,
    /// `‖b − b^m‖` at regularity `β̃`.
    pub errors: Vec<f64>,
    /// Largest increase `e_{k+1}/e_k − 1` along the sequence.
    pub max_increase: f64,
    /// `sup_m ‖b^m‖_{B^β} / ‖b‖_{B^β}`.
    pub kappa_prime: f64,
}

pub fn mollification_report(field: &DriftField, levels: &[u32]) -> Result<MollificationReport> {
    let bi = field.indices;
    let beta_tilde = bi.beta - BETA_OFFSET;
    let cfg_tilde = ThermicConfig::new(beta_tilde, bi.p, bi.q, field.alpha);
    let cfg = ThermicConfig::new(bi.beta, bi.p, bi.q, field.alpha);
    let errors = levels
        .iter()
        .map(|&m| mollification_error(field, m, &cfg_tilde))
        .collect::<Result<Vec<f64>>>()?;
    let max_increase = errors
        .windows(2)
        .map(|w| w[1] / w[0] - 1.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let base = time_norm(field, None, &cfg)?;
    let mut kappa_prime: f64 = 0.0;
    for &m in levels {
        kappa_prime = kappa_prime.max(time_norm(field, Some(m), &cfg)? / base);
    }
    Ok(MollificationReport {
        beta_tilde,
        levels: levels.to_vec(),
        errors,
        max_increase,
        kappa_prime,
    })
}
