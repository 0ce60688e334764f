//! Duhamel solver for the density of the mollified one-dimensional SDE
//! `dX = b^m(t, X) dt + dZ`, `X_s = x`:
//!
//! `p(t, y) = p_α(t−s, y−x) − ∫_s^t ∫ ∂_y p_α(t−u, y−z) b^m(u, z) p(u, z) dz du`,
//!
//! and the same equation for `∇_x p` with free term `∇_x p_α`.
//!
//! The free term is kept exactly (whole line, heavy tails included); only the
//! correction `r = p − p_α` is represented, as a Fourier series on a period
//! `L = 2πM` that is a multiple of the drift period. Multiplication by a
//! trigonometric drift is then an exact shift of Fourier coefficients. The
//! time integral uses exponential product integration: the heat factor
//! `e^{−|λ|^α (t−u)}` is integrated exactly, the source from `r` is linear
//! between nodes and the source from `p_α` is integrated in closed form.
//! Nodes are uniform, with the first cell refined geometrically toward `s`.
//! The fixed point is reached by Picard sweeps in Gauss–Seidel order.

use crate::besov::{self, Boundary, SampledField, ThermicConfig};
use crate::drift::{MollifiedDrift, SpectralSlice};
use crate::error::{LabError, Result};
use crate::exec::Exec;
use crate::fft;
use crate::grid::UniformGrid;
use crate::params::{check_gr, rho_range, BesovIndices, Index, StableParams};
use crate::stable_density::{ComparatorKernel, ExactKernel};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Discretization of the solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverGrid {
    /// The periodic domain has length `2π · periods`.
    pub periods: u32,
    /// Fourier modes (power of two).
    pub points: usize,
    /// Uniform time steps on `(s, T]`.
    pub steps: usize,
    /// Geometric refinement levels of the first step.
    pub grading: u32,
    /// Output slices (must divide `steps`).
    pub outputs: usize,
    /// Half-width of the output window around `x`; default `10 (T−s)^{1/α}`.
    pub window: Option<f64>,
    /// Picard tolerance on the weighted sup difference of successive sweeps.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for SolverGrid {
    fn default() -> Self {
        SolverGrid {
            periods: 16,
            points: 1 << 14,
            steps: 200,
            grading: 12,
            outputs: 10,
            window: None,
            tol: 1e-6,
            max_sweeps: 60,
        }
    }
}

impl SolverGrid {
    pub fn validate(&self) -> Result<()> {
        if self.periods == 0 {
            return Err(LabError::invalid("periods", "must be positive"));
        }
        if !self.points.is_power_of_two() || self.points < 64 {
            return Err(LabError::invalid("points", "must be a power of two ≥ 64"));
        }
        if self.steps == 0 || self.outputs == 0 || !self.steps.is_multiple_of(self.outputs) {
            return Err(LabError::invalid("outputs", "must be positive and divide the number of steps"));
        }
        if !(self.tol > 0.0) {
            return Err(LabError::invalid("tol", "must be positive"));
        }
        if let Some(w) = self.window {
            if !(w > 0.0) {
                return Err(LabError::invalid("window", "must be positive"));
            }
        }
        Ok(())
    }

    fn length(&self) -> f64 {
        2.0 * PI * self.periods as f64
    }

    /// Largest resolved angular frequency.
    pub fn max_frequency(&self) -> f64 {
        PI * self.points as f64 / self.length()
    }

    /// Half-width of the output window in grid cells.
    fn window_cells(&self, alpha: f64, s: f64, horizon: f64) -> usize {
        let dy = self.length() / self.points as f64;
        let half = self
            .window
            .unwrap_or(10.0 * (horizon - s).powf(1.0 / alpha))
            .min(0.45 * self.length());
        (half / dy).floor() as usize
    }

    /// The output grid of a solve started at `(s, x)`.
    pub fn output_window(&self, alpha: f64, s: f64, x: f64, horizon: f64) -> UniformGrid {
        let dy = self.length() / self.points as f64;
        let k = self.window_cells(alpha, s, horizon);
        UniformGrid::new(x - k as f64 * dy, dy, 2 * k + 1)
    }
}

/// Largest admissible spectral magnitude of the final correction in the top
/// sixteenth of the band, relative to its peak.
pub const EDGE_TOLERANCE: f64 = 1e-4;

/// Converged density (and optionally gradient) on the output window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityGrid {
    pub params: StableParams,
    pub indices: BesovIndices,
    pub level: Option<u32>,
    /// Solved for a drift outside the good relation.
    pub negative_control: bool,
    pub s: f64,
    pub x: f64,
    pub horizon: f64,
    pub times: Vec<f64>,
    pub y: UniformGrid,
    /// `p^m(s, t_i, x, y_j)`.
    pub density: Vec<Vec<f64>>,
    /// `∇_x p^m(s, t_i, x, y_j)` when solved.
    pub gradient: Option<Vec<Vec<f64>>>,
    pub sweeps: usize,
    pub gradient_sweeps: usize,
    /// Weighted sup difference of successive sweeps.
    pub sweep_differences: Vec<f64>,
    /// Weighted sup of `Φ(p) − p` for the converged iterate.
    pub residual: f64,
    pub gradient_residual: f64,
    pub mass_in_window: Vec<f64>,
    /// Free-kernel mass outside the window.
    pub tail_mass: Vec<f64>,
    /// Mass of the negative part relative to the total mass, per slice.
    pub floored_fraction: Vec<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Target {
    Density,
    Gradient,
}

/// Drift coefficients of one time step in the rotated frame `y → y + x`.
struct StepDrift {
    constant: f64,
    /// `(shift in bins, ω, coefficient of f̂(λ−ω), coefficient of f̂(λ+ω))`.
    modes: Vec<(usize, f64, Complex64, Complex64)>,
}

impl StepDrift {
    fn new(slice: &SpectralSlice, x: f64, periods: u32, points: usize) -> Result<Self> {
        let mut modes = Vec::with_capacity(slice.modes.len());
        for m in &slice.modes {
            if m.omega == 0.0 {
                continue;
            }
            let bins = m.omega * periods as f64;
            if (bins - bins.round()).abs() > 1e-9 * bins.max(1.0) {
                return Err(LabError::Resolution(format!(
                    "drift frequency {} is not a multiple of 1/{periods}; increase `periods`",
                    m.omega
                )));
            }
            let shift = bins.round() as usize;
            if shift >= points / 3 {
                return Err(LabError::Resolution(format!(
                    "drift frequency {} exceeds a third of the Fourier band; increase `points`",
                    m.omega
                )));
            }
            let (s, c) = (m.omega * x).sin_cos();
            let a = m.a * c + m.b * s;
            let b = m.b * c - m.a * s;
            // a cos ωy + b sin ωy = A e^{iωy} + B e^{−iωy}
            let minus = Complex64::new(a / 2.0, -b / 2.0);
            let plus = Complex64::new(a / 2.0, b / 2.0);
            modes.push((shift, m.omega, minus, plus));
        }
        Ok(StepDrift {
            constant: slice.constant,
            modes,
        })
    }

    /// `F[b f]` on a centered spectrum (index `n/2` is λ = 0), truncated to the band.
    fn multiply(&self, f: &[Complex64], out: &mut [Complex64]) {
        let n = f.len();
        for (o, v) in out.iter_mut().zip(f) {
            *o = v * self.constant;
        }
        for &(sh, _, minus, plus) in &self.modes {
            for j in sh..n {
                out[j] += minus * f[j - sh];
            }
            for j in 0..n - sh {
                out[j] += plus * f[j + sh];
            }
        }
    }
}

/// `(1 − e^{−z})/z`.
fn phi1(z: f64) -> f64 {
    if z < 1e-4 {
        1.0 - z / 2.0 + z * z / 6.0
    } else {
        -(-z).exp_m1() / z
    }
}

/// `(e^{−z} − 1 + z)/z²`.
fn phi2(z: f64) -> f64 {
    if z < 1e-4 {
        0.5 - z / 6.0 + z * z / 24.0
    } else {
        ((-z).exp_m1() + z) / (z * z)
    }
}

struct Setup {
    alpha: f64,
    n: usize,
    length: f64,
    /// Centered frequencies.
    lambda: Vec<f64>,
    psi: Vec<f64>,
    /// Node offsets `t_i − s`, `nodes[0] = 0`.
    nodes: Vec<f64>,
    /// Indices of output nodes.
    outputs: Vec<usize>,
    drifts: Vec<StepDrift>,
    /// Output window: start index into the periodic grid and length.
    win_start: usize,
    win_len: usize,
    comparator: ComparatorKernel,
}

impl Setup {
    fn new(sp: &StableParams, drift: &MollifiedDrift, s: f64, x: f64, horizon: f64, grid: &SolverGrid) -> Result<Self> {
        grid.validate()?;
        if sp.dim != 1 {
            return Err(LabError::invalid("dim", "the Duhamel solver is one-dimensional"));
        }
        if !(horizon > s) {
            return Err(LabError::Domain(format!("need s < T, got s = {s}, T = {horizon}")));
        }
        if !drift.base.is_spectral() {
            return Err(LabError::invalid("drift", "the solver needs a bounded trigonometric drift"));
        }
        if (drift.base.alpha - sp.alpha).abs() > 1e-12 {
            return Err(LabError::Mismatch("drift and noise have different α".into()));
        }
        let adm = check_gr(sp, &drift.base.indices)?;
        if !adm.gr && !drift.base.negative_control {
            return Err(LabError::invalid("beta", "drift indices violate the good relation"));
        }
        let n = grid.points;
        let length = grid.length();
        let lambda: Vec<f64> = (0..n).map(|j| 2.0 * PI * (j as f64 - (n / 2) as f64) / length).collect();
        let psi: Vec<f64> = lambda.iter().map(|l| l.abs().powf(sp.alpha)).collect();

        let h = (horizon - s) / grid.steps as f64;
        let mut nodes = vec![0.0];
        for g in (1..=grid.grading).rev() {
            nodes.push(h * 2f64.powi(-(g as i32)));
        }
        let first_uniform = nodes.len();
        for k in 1..=grid.steps {
            nodes.push(k as f64 * h);
        }
        let stride = grid.steps / grid.outputs;
        let outputs: Vec<usize> = (1..=grid.outputs).map(|k| first_uniform - 1 + k * stride).collect();

        let drifts = (0..nodes.len() - 1)
            .map(|i| {
                let mid = s + 0.5 * (nodes[i] + nodes[i + 1]);
                let slice = drift.slice(mid).expect("spectral drift");
                StepDrift::new(&slice, x, grid.periods, n)
            })
            .collect::<Result<Vec<_>>>()?;

        let k = grid.window_cells(sp.alpha, s, horizon);
        Ok(Setup {
            alpha: sp.alpha,
            n,
            length,
            lambda,
            psi,
            nodes,
            outputs,
            drifts,
            win_start: n / 2 - k,
            win_len: 2 * k + 1,
            comparator: ComparatorKernel::new(sp),
        })
    }

    fn dy(&self) -> f64 {
        self.length / self.n as f64
    }

    /// Window points relative to `x`.
    fn window_offsets(&self) -> Vec<f64> {
        (0..self.win_len)
            .map(|i| (self.win_start + i) as f64 * self.dy() - self.length / 2.0)
            .collect()
    }

    /// Exact contribution of the free term on `[t_i, t_{i+1}]`.
    fn free_source(&self, i: usize, target: Target) -> Vec<Complex64> {
        let (tau, h) = (self.nodes[i], self.nodes[i + 1] - self.nodes[i]);
        let drift = &self.drifts[i];
        let alpha = self.alpha;
        // ∫ e^{−a(t_{i+1}−u)} e^{−c(u−s)} du over the step, c = |ξ|^α
        let term = |a: f64, xi: f64| -> Complex64 {
            let c = xi.abs().powf(alpha);
            let e = (-c * tau - a.min(c) * h).exp() * h * phi1((a - c).abs() * h);
            match target {
                Target::Density => Complex64::new(e, 0.0),
                // ∇_x of e^{−iξx} brings −iξ
                Target::Gradient => Complex64::new(0.0, -xi * e),
            }
        };
        (0..self.n)
            .map(|j| {
                let lam = self.lambda[j];
                let a = self.psi[j];
                let mut acc = term(a, lam) * drift.constant;
                for &(_, w, minus, plus) in &drift.modes {
                    acc += minus * term(a, lam - w) + plus * term(a, lam + w);
                }
                // −iλ from the spatial derivative of the kernel
                Complex64::new(0.0, -lam) * acc
            })
            .collect()
    }

    /// `−iλ F[b r]`.
    fn source(&self, i: usize, r: &[Complex64], buf: &mut [Complex64]) {
        self.drifts[i].multiply(r, buf);
        for (b, l) in buf.iter_mut().zip(&self.lambda) {
            *b *= Complex64::new(0.0, -l);
        }
    }

    /// Physical values of the correction on the window.
    fn physical(&self, r: &[Complex64]) -> Vec<f64> {
        let n = self.n;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for (j, v) in r.iter().enumerate() {
            let k = (j + n - n / 2) % n;
            // grid starts at −L/2, which contributes (−1)^k
            let sign = if (j as i64 - (n / 2) as i64) % 2 == 0 { 1.0 } else { -1.0 };
            buf[k] = v * sign;
        }
        fft::inverse(&mut buf);
        let inv_l = 1.0 / self.length;
        buf[self.win_start..self.win_start + self.win_len]
            .iter()
            .map(|c| c.re * inv_l)
            .collect()
    }

    fn weights(&self, tau: f64) -> Vec<f64> {
        self.window_offsets()
            .into_iter()
            .map(|z| 1.0 / self.comparator.radial(tau, z.abs()))
            .collect()
    }
}

struct Solution {
    /// Correction on the window at output nodes.
    corrections: Vec<Vec<f64>>,
    sweeps: usize,
    differences: Vec<f64>,
    residual: f64,
}

/// Weighted sup distance between two sets of output slices.
fn weighted_distance(a: &[Vec<f64>], b: &[Vec<f64>], weights: &[Vec<f64>]) -> f64 {
    let mut d: f64 = 0.0;
    for ((x, y), w) in a.iter().zip(b).zip(weights) {
        for ((u, v), w) in x.iter().zip(y).zip(w) {
            d = d.max((u - v).abs() * w);
        }
    }
    d
}

fn solve(setup: &Setup, target: Target, grid: &SolverGrid, exec: Exec) -> Result<Solution> {
    let n = setup.n;
    let steps = setup.nodes.len() - 1;
    let zero = Complex64::new(0.0, 0.0);
    let free: Vec<Vec<Complex64>> = exec.map(steps, |i| setup.free_source(i, target));
    // Heat factor and product weights per step.
    let factors: Vec<Vec<(f64, f64, f64)>> = exec.map(steps, |i| {
        let h = setup.nodes[i + 1] - setup.nodes[i];
        setup
            .psi
            .iter()
            .map(|&a| {
                let z = a * h;
                let w1 = h * phi2(z);
                (( -z).exp(), h * phi1(z) - w1, w1)
            })
            .collect()
    });
    let weights: Vec<Vec<f64>> = setup.outputs.iter().map(|&k| setup.weights(setup.nodes[k])).collect();
    let output_slot: Vec<Option<usize>> = {
        let mut v = vec![None; steps + 1];
        for (o, &k) in setup.outputs.iter().enumerate() {
            v[k] = Some(o);
        }
        v
    };

    // r at every node and the sources G_i(r_i) with the drift of step i and step i−1.
    let mut r: Vec<Vec<Complex64>> = vec![vec![zero; n]; steps + 1];
    let mut right_source: Vec<Vec<Complex64>> = vec![vec![zero; n]; steps];
    let mut left = vec![zero; n];
    let mut prev_out: Vec<Vec<f64>> = setup.outputs.iter().map(|_| vec![0.0; setup.win_len]).collect();
    let mut differences = Vec::new();
    let mut growth = 0usize;
    let mut sweeps = 0usize;

    // One Gauss–Seidel pass of the Duhamel recursion.
    let sweep = |r: &mut Vec<Vec<Complex64>>, right_source: &mut Vec<Vec<Complex64>>, left: &mut Vec<Complex64>| {
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(setup.outputs.len());
        let mut next_src = vec![zero; n];
        for i in 0..steps {
            setup.source(i, &r[i], left);
            let f = &factors[i];
            let mut next = vec![zero; n];
            for j in 0..n {
                let (e, w0, w1) = f[j];
                next[j] = r[i][j] * e + left[j] * w0 + right_source[i][j] * w1 + free[i][j];
            }
            setup.source(i, &next, &mut next_src);
            right_source[i].copy_from_slice(&next_src);
            if output_slot[i + 1].is_some() {
                out.push(setup.physical(&next));
            }
            r[i + 1] = next;
        }
        out
    };

    // Φ(r) with every source taken from the stored iterate.
    let jacobi_residual = |r: &Vec<Vec<Complex64>>, out_ref: &[Vec<f64>]| -> f64 {
        let mut phi = vec![zero; n];
        let mut ls = vec![zero; n];
        let mut rs = vec![zero; n];
        let mut outs = Vec::new();
        for i in 0..steps {
            setup.source(i, &r[i], &mut ls);
            setup.source(i, &r[i + 1], &mut rs);
            let f = &factors[i];
            for j in 0..n {
                let (e, w0, w1) = f[j];
                phi[j] = phi[j] * e + ls[j] * w0 + rs[j] * w1 + free[i][j];
            }
            if output_slot[i + 1].is_some() {
                outs.push(setup.physical(&phi));
            }
        }
        weighted_distance(&outs, out_ref, &weights)
    };

    loop {
        let out = sweep(&mut r, &mut right_source, &mut left);
        sweeps += 1;
        let d = weighted_distance(&out, &prev_out, &weights);
        if !d.is_finite() {
            return Err(LabError::Numerical("Picard iterate became non-finite".into()));
        }
        if let Some(&last) = differences.last() {
            if d > last {
                growth += 1;
            } else {
                growth = 0;
            }
            if growth >= 3 {
                return Err(LabError::NonContraction {
                    iterations: sweeps,
                    ratio: d / last,
                });
            }
        }
        differences.push(d);
        prev_out = out;
        if d < grid.tol {
            break;
        }
        if sweeps >= grid.max_sweeps {
            let k = differences.len();
            return Err(LabError::NonContraction {
                iterations: sweeps,
                ratio: differences[k - 1] / differences[k - 2].max(f64::MIN_POSITIVE),
            });
        }
    }
    let residual = jacobi_residual(&r, &prev_out);

    // Resolution: the final correction must be negligible at the band edge.
    let last = &r[steps];
    let peak = last.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let edge = last[..n / 16]
        .iter()
        .chain(&last[n - n / 16..])
        .map(|c| c.norm())
        .fold(0.0, f64::max);
    if peak > 0.0 && edge > EDGE_TOLERANCE * peak {
        return Err(LabError::Resolution(format!(
            "correction spectrum not resolved at the band edge (relative {:.2e}); increase `points`",
            edge / peak
        )));
    }
    Ok(Solution {
        corrections: prev_out,
        sweeps,
        differences,
        residual,
    })
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    sp: &StableParams,
    drift: &MollifiedDrift,
    s: f64,
    x: f64,
    horizon: f64,
    grid: &SolverGrid,
    with_gradient: bool,
    exec: Exec,
) -> Result<DensityGrid> {
    let setup = Setup::new(sp, drift, s, x, horizon, grid)?;
    let kernel = ExactKernel::new(sp)?;
    let sol = solve(&setup, Target::Density, grid, exec)?;
    let grad = if with_gradient {
        Some(solve(&setup, Target::Gradient, grid, exec)?)
    } else {
        None
    };
    let offsets = setup.window_offsets();
    let dy = setup.dy();
    let taus: Vec<f64> = setup.outputs.iter().map(|&k| setup.nodes[k]).collect();
    let density: Vec<Vec<f64>> = exec.map(taus.len(), |o| {
        offsets
            .iter()
            .zip(&sol.corrections[o])
            .map(|(z, c)| kernel.eval_1d(taus[o], *z) + c)
            .collect()
    });
    let gradient = grad.as_ref().map(|g| {
        exec.map(taus.len(), |o| {
            offsets
                .iter()
                .zip(&g.corrections[o])
                .map(|(z, c)| -kernel.grad_1d(taus[o], *z) + c)
                .collect::<Vec<f64>>()
        })
    });
    let (lo, hi) = (offsets[0] - 0.5 * dy, offsets[offsets.len() - 1] + 0.5 * dy);
    let mut mass_in_window = Vec::new();
    let mut tail_mass = Vec::new();
    let mut floored_fraction = Vec::new();
    for (o, slice) in density.iter().enumerate() {
        let m: f64 = slice.iter().sum::<f64>() * dy;
        let neg: f64 = slice.iter().filter(|v| **v < 0.0).map(|v| -v).sum::<f64>() * dy;
        mass_in_window.push(m);
        tail_mass.push(1.0 - (kernel.cdf_1d(taus[o], hi) - kernel.cdf_1d(taus[o], lo)));
        floored_fraction.push(neg / m.abs().max(f64::MIN_POSITIVE));
    }
    Ok(DensityGrid {
        params: sp.clone(),
        indices: drift.base.indices,
        level: drift.level,
        negative_control: drift.base.negative_control,
        s,
        x,
        horizon,
        times: taus.iter().map(|t| s + t).collect(),
        y: UniformGrid::new(x + offsets[0], dy, offsets.len()),
        density,
        gradient,
        sweeps: sol.sweeps,
        gradient_sweeps: grad.as_ref().map(|g| g.sweeps).unwrap_or(0),
        sweep_differences: sol.differences,
        residual: sol.residual,
        gradient_residual: grad.as_ref().map(|g| g.residual).unwrap_or(0.0),
        mass_in_window,
        tail_mass,
        floored_fraction,
    })
}

/// Density of the mollified SDE started at `(s, x)` on the output window.
pub fn duhamel_solve(
    sp: &StableParams,
    drift: &MollifiedDrift,
    s: f64,
    x: f64,
    horizon: f64,
    grid: &SolverGrid,
    exec: Exec,
) -> Result<DensityGrid> {
    assemble(sp, drift, s, x, horizon, grid, false, exec)
}

/// Density and its gradient in the starting point.
pub fn duhamel_solve_grad(
    sp: &StableParams,
    drift: &MollifiedDrift,
    s: f64,
    x: f64,
    horizon: f64,
    grid: &SolverGrid,
    exec: Exec,
) -> Result<DensityGrid> {
    assemble(sp, drift, s, x, horizon, grid, true, exec)
}

impl DensityGrid {
    pub fn elapsed(&self, i: usize) -> f64 {
        self.times[i] - self.s
    }

    /// `p̄_α(t_i − s, y_j − x)`.
    pub fn comparator_slice(&self, i: usize) -> Vec<f64> {
        let c = ComparatorKernel::new(&self.params);
        let tau = self.elapsed(i);
        self.y.points().iter().map(|y| c.radial(tau, (y - self.x).abs())).collect()
    }

    /// Long-format CSV: `s, t, x, y, p, grad_p`.
    pub fn to_csv(&self) -> Result<String> {
        let ys = self.y.points();
        let mut rows = Vec::with_capacity(self.times.len() * ys.len());
        for (i, t) in self.times.iter().enumerate() {
            for (j, y) in ys.iter().enumerate() {
                let g = self.gradient.as_ref().map(|g| g[i][j]).unwrap_or(f64::NAN);
                rows.push(vec![self.s, *t, self.x, *y, self.density[i][j], g]);
            }
        }
        crate::io::csv_string(&["s", "t", "x", "y", "p", "grad_p"], rows)
    }

    /// Parameters, convergence history and mass bookkeeping.
    pub fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "alpha": self.params.alpha,
            "dim": self.params.dim,
            "indices": self.indices,
            "level": self.level,
            "negative_control": self.negative_control,
            "s": self.s,
            "x": self.x,
            "horizon": self.horizon,
            "times": self.times,
            "window": [self.y.start, self.y.end()],
            "points": self.y.len,
            "sweeps": self.sweeps,
            "gradient_sweeps": self.gradient_sweeps,
            "sweep_differences": self.sweep_differences,
            "residual": self.residual,
            "gradient_residual": self.gradient_residual,
            "mass_in_window": self.mass_in_window,
            "tail_mass": self.tail_mass,
            "floored_fraction": self.floored_fraction,
        })
    }

    /// Largest `|mass + tail − 1|` over the slices.
    pub fn conservation_defect(&self) -> f64 {
        self.mass_in_window
            .iter()
            .zip(&self.tail_mass)
            .map(|(m, t)| (m + t - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Normalized ratios of the converged solution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatioDiagnostics {
    pub times: Vec<f64>,
    pub rho: f64,
    /// `h = p^m / p̄_α`.
    pub h: Vec<Vec<f64>>,
    /// `H = (t−s)^{1/α} ∇_x p^m / p̄_α`.
    pub big_h: Option<Vec<Vec<f64>>>,
    /// `g(t) = ‖h(t)‖_∞ + (t−s)^{ρ/α} 𝒯^ρ_{∞,∞}[h(t)]`.
    pub g: Vec<f64>,
    pub big_g: Option<Vec<f64>>,
    /// `(t−s)^{ρ/α} 𝒯^ρ_{∞,∞}[h(t)]`.
    pub scaled_thermic: Vec<f64>,
    pub h_min: f64,
    pub h_max: f64,
}

pub fn diagnostics(dg: &DensityGrid, rho: f64) -> Result<RatioDiagnostics> {
    let range = rho_range(&dg.indices, &dg.params)?;
    if !range.contains(rho) {
        return Err(LabError::invalid(
            "rho",
            format!("ρ = {rho} outside ({}, {})", range.lo, range.hi),
        ));
    }
    let alpha = dg.params.alpha;
    let cfg = ThermicConfig::new(rho, Index::Infinite, Index::Infinite, alpha);
    let ratio_part = |values: &[f64], tau: f64| -> Result<(f64, f64)> {
        let field = SampledField::new(dg.y, values.to_vec(), Boundary::Extend)?;
        let t = besov::thermic_norm(&field, &cfg)?;
        let sup = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let scaled = tau.powf(rho / alpha) * t.thermic;
        Ok((sup + scaled, scaled))
    };
    let mut h = Vec::new();
    let mut g = Vec::new();
    let mut scaled_thermic = Vec::new();
    let mut big_h = dg.gradient.as_ref().map(|_| Vec::new());
    let mut big_g = dg.gradient.as_ref().map(|_| Vec::new());
    let (mut h_min, mut h_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..dg.times.len() {
        let tau = dg.elapsed(i);
        let pbar = dg.comparator_slice(i);
        let hi: Vec<f64> = dg.density[i].iter().zip(&pbar).map(|(p, q)| p / q).collect();
        for v in &hi {
            h_min = h_min.min(*v);
            h_max = h_max.max(*v);
        }
        let (gi, si) = ratio_part(&hi, tau)?;
        g.push(gi);
        scaled_thermic.push(si);
        h.push(hi);
        if let (Some(grad), Some(bh), Some(bg)) = (&dg.gradient, big_h.as_mut(), big_g.as_mut()) {
            let scale = tau.powf(1.0 / alpha);
            let hh: Vec<f64> = grad[i].iter().zip(&pbar).map(|(d, q)| scale * d / q).collect();
            bg.push(ratio_part(&hh, tau)?.0);
            bh.push(hh);
        }
    }
    Ok(RatioDiagnostics {
        times: dg.times.clone(),
        rho,
        h,
        big_h,
        g,
        big_g,
        scaled_thermic,
        h_min,
        h_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_functions_are_continuous_at_the_series_switch() {
        for z in [9.9e-5, 1.01e-4] {
            assert!((phi1(z) - (1.0 - (-z).exp()) / z).abs() < 1e-9);
            assert!((phi2(z) - 0.5 + z / 6.0).abs() < 1e-8);
        }
        assert!((phi2(2.0) - ((-2f64).exp() - 1.0 + 2.0) / 4.0).abs() < 1e-15);
    }

    #[test]
    fn grid_validation() {
        let g = SolverGrid {
            outputs: 7,
            ..SolverGrid::default()
        };
        assert!(g.validate().is_err());
        let g = SolverGrid {
            points: 1000,
            ..SolverGrid::default()
        };
        assert!(g.validate().is_err());
        assert!(SolverGrid::default().validate().is_ok());
    }
}
