//! Measured-constant reports for the two-sided heat kernel bounds of the
//! mollified density, their stabilization along the mollification sequence,
//! the Besov product estimates for the kernels and cross-validation against
//! Monte Carlo.
//!
//! Constants are grid maxima over the solver's output window; the window is
//! part of every report.

use crate::besov::{self, Boundary, SampledField, ThermicConfig};
use crate::drift::DriftField;
use crate::error::{LabError, Result};
use crate::exec::Exec;
use crate::grid::UniformGrid;
use crate::params::{rho_range, BesovIndices, SingularityWeight, StableParams};
use crate::parametrix::{duhamel_solve_grad, DensityGrid, SolverGrid};
use crate::rng::substream;
use crate::sim::MarginalEstimate;
use crate::stable_density::{ComparatorKernel, ExactKernel};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Relative change between the last two levels below which a constant counts
/// as stabilized.
pub const STABILIZATION_TOLERANCE: f64 = 0.10;

pub const STABILIZATION_RULE: &str =
    "stable when every constant changes by less than 10% (relative) between the last two levels";

/// Measured constants of one converged solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    /// `min p^m / p̄_α`.
    pub lower: f64,
    /// `max p^m / p̄_α`.
    pub upper: f64,
    /// `C₁ = max(upper, 1/lower)`.
    pub two_sided: f64,
    /// `C₂ = sup (t−s)^{1/α} |∇_x p^m| / p̄_α`.
    pub gradient: Option<f64>,
    /// `C₃ = sup (t−s)^{ρ/α} |p^m(y) − p^m(y')| / (|y−y'|^ρ (p̄_α(y) + p̄_α(y')))`
    /// over pairs with `|y−y'| ≤ (t−s)^{1/α}`.
    pub holder: Option<f64>,
    /// `C₄`: as `C₃` for `∇_x p^m` with the extra factor `(t−s)^{1/α}`.
    pub gradient_holder: Option<f64>,
    /// No grid pair lies within the diagonal scale.
    pub holder_skipped: bool,
}

impl BoundConstants {
    /// `[C₁, C₂, C₃, C₄]`, missing entries as `None`.
    pub fn as_array(&self) -> [Option<f64>; 4] {
        [Some(self.two_sided), self.gradient, self.holder, self.gradient_holder]
    }

    pub fn all_finite(&self) -> bool {
        self.lower > 0.0
            && self.as_array().iter().flatten().all(|c| c.is_finite() && *c > 0.0)
    }
}

fn holder_sup(dg: &DensityGrid, values: &[Vec<f64>], rho: f64, extra: f64) -> Option<f64> {
    let alpha = dg.params.alpha;
    let dy = dg.y.step;
    let mut best: Option<f64> = None;
    for (i, slice) in values.iter().enumerate() {
        let tau = dg.elapsed(i);
        let scale = tau.powf(1.0 / alpha);
        let kmax = ((scale / dy) * (1.0 + 1e-12)).floor() as usize;
        if kmax == 0 || slice.len() < 2 {
            continue;
        }
        let pbar = dg.comparator_slice(i);
        let pre = tau.powf((rho + extra) / alpha);
        let mut m: f64 = 0.0;
        for a in 0..slice.len() {
            for k in 1..=kmax.min(slice.len() - 1 - a) {
                let b = a + k;
                let num = (slice[a] - slice[b]).abs();
                let den = (k as f64 * dy).powf(rho) * (pbar[a] + pbar[b]);
                m = m.max(num / den);
            }
        }
        best = Some(best.unwrap_or(0.0).max(pre * m));
    }
    best
}

/// Negative controls have no admissible ρ; they are measured at the ρ of the
/// admissible runs they are compared with.
fn check_rho(indices: &BesovIndices, sp: &StableParams, negative_control: bool, rho: f64) -> Result<()> {
    if negative_control {
        return if rho > 0.0 && rho < 1.0 {
            Ok(())
        } else {
            Err(LabError::invalid("rho", format!("ρ = {rho} outside (0, 1)")))
        };
    }
    let range = rho_range(indices, sp)?;
    if !range.contains(rho) {
        return Err(LabError::invalid(
            "rho",
            format!("ρ = {rho} outside ({}, {})", range.lo, range.hi),
        ));
    }
    Ok(())
}

/// The four extremal ratios of the heat kernel bounds over the grid.
pub fn check_heat_kernel_bounds(dg: &DensityGrid, rho: f64) -> Result<BoundConstants> {
    check_rho(&dg.indices, &dg.params, dg.negative_control, rho)?;
    let alpha = dg.params.alpha;
    let (mut lower, mut upper) = (f64::INFINITY, 0.0f64);
    let mut gradient = dg.gradient.as_ref().map(|_| 0.0f64);
    for i in 0..dg.times.len() {
        let pbar = dg.comparator_slice(i);
        for (p, q) in dg.density[i].iter().zip(&pbar) {
            lower = lower.min(p / q);
            upper = upper.max(p / q);
        }
        if let (Some(g), Some(gr)) = (gradient.as_mut(), dg.gradient.as_ref()) {
            let scale = dg.elapsed(i).powf(1.0 / alpha);
            for (d, q) in gr[i].iter().zip(&pbar) {
                *g = g.max(scale * d.abs() / q);
            }
        }
    }
    if !(lower > 0.0) {
        return Err(LabError::Numerical(format!(
            "density ratio is not positive on the window (min {lower:.3e})"
        )));
    }
    let holder = holder_sup(dg, &dg.density, rho, 0.0);
    let gradient_holder = dg.gradient.as_ref().and_then(|g| holder_sup(dg, g, rho, 1.0));
    Ok(BoundConstants {
        lower,
        upper,
        two_sided: upper.max(1.0 / lower),
        gradient,
        holder,
        gradient_holder,
        holder_skipped: holder.is_none(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Stable,
    Unstable,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRow {
    pub level: u32,
    pub constants: Option<BoundConstants>,
    /// Solver or measurement failure at this level.
    pub failure: Option<String>,
    /// `sup |p^{m_k} − p^{m_{k−1}}|` over the window.
    pub sup_distance: Option<f64>,
    pub sweeps: usize,
    pub residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub schema_version: u32,
    pub experiment: String,
    pub alpha: f64,
    pub dim: usize,
    pub indices: BesovIndices,
    pub rho: f64,
    pub s: f64,
    pub x: f64,
    pub horizon: f64,
    pub window: [f64; 2],
    pub rule: String,
    pub levels: Vec<LevelRow>,
    /// Relative change of `[C₁, C₂, C₃, C₄]` between the last two levels.
    pub relative_changes: Option<[Option<f64>; 4]>,
    pub verdict: Verdict,
}

impl BoundReport {
    /// Flat CSV of per-level constants.
    pub fn to_csv(&self) -> Result<String> {
        let nan = f64::NAN;
        let rows = self.levels.iter().map(|r| {
            let c = r.constants;
            let get = |f: fn(&BoundConstants) -> Option<f64>| c.as_ref().and_then(f).unwrap_or(nan);
            vec![
                r.level as f64,
                get(|c| Some(c.lower)),
                get(|c| Some(c.upper)),
                get(|c| Some(c.two_sided)),
                get(|c| c.gradient),
                get(|c| c.holder),
                get(|c| c.gradient_holder),
                r.sup_distance.unwrap_or(nan),
            ]
        });
        crate::io::csv_string(
            &["level", "lower", "upper", "c1", "c2", "c3", "c4", "sup_distance"],
            rows,
        )
    }
}

fn relative_change(prev: Option<f64>, last: Option<f64>) -> Option<f64> {
    match (prev, last) {
        (Some(a), Some(b)) => Some((b - a).abs() / a.abs().max(f64::MIN_POSITIVE)),
        _ => None,
    }
}

/// Solves at every level, measures the constants and applies the
/// stabilization rule to the last two levels.
#[allow(clippy::too_many_arguments)]
pub fn m_stabilization(
    experiment: &str,
    sp: &StableParams,
    field: &DriftField,
    levels: &[u32],
    s: f64,
    x: f64,
    grid: &SolverGrid,
    rho: f64,
    exec: Exec,
) -> Result<BoundReport> {
    if levels.len() < 3 {
        return Err(LabError::invalid("levels", "need at least three mollification levels"));
    }
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(LabError::invalid("levels", "levels must be strictly increasing"));
    }
    check_rho(&field.indices, sp, field.negative_control, rho)?;
    let mut rows = Vec::new();
    let mut prev: Option<DensityGrid> = None;
    let mut window = [f64::NAN; 2];
    for &m in levels {
        let md = field.mollify(m);
        let outcome = duhamel_solve_grad(sp, &md, s, x, field.horizon, grid, exec)
            .and_then(|dg| check_heat_kernel_bounds(&dg, rho).map(|c| (dg, c)));
        match outcome {
            Ok((dg, c)) => {
                window = [dg.y.start, dg.y.end()];
                let sup_distance = prev.as_ref().map(|p| {
                    p.density
                        .iter()
                        .flatten()
                        .zip(dg.density.iter().flatten())
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max)
                });
                rows.push(LevelRow {
                    level: m,
                    constants: Some(c),
                    failure: None,
                    sup_distance,
                    sweeps: dg.sweeps,
                    residual: Some(dg.residual),
                });
                prev = Some(dg);
            }
            Err(e) => {
                rows.push(LevelRow {
                    level: m,
                    constants: None,
                    failure: Some(e.to_string()),
                    sup_distance: None,
                    sweeps: 0,
                    residual: None,
                });
                prev = None;
            }
        }
    }
    let (relative_changes, verdict) = if rows.iter().any(|r| r.constants.is_none()) {
        (None, Verdict::Inconclusive)
    } else {
        let k = rows.len();
        let a = rows[k - 2].constants.unwrap().as_array();
        let b = rows[k - 1].constants.unwrap().as_array();
        let changes = [0, 1, 2, 3].map(|i| relative_change(a[i], b[i]));
        let stable = changes.iter().flatten().all(|c| *c < STABILIZATION_TOLERANCE)
            && rows.iter().all(|r| r.constants.unwrap().all_finite());
        (Some(changes), if stable { Verdict::Stable } else { Verdict::Unstable })
    };
    Ok(BoundReport {
        schema_version: REPORT_SCHEMA_VERSION,
        experiment: experiment.to_string(),
        alpha: sp.alpha,
        dim: sp.dim,
        indices: field.indices,
        rho,
        s,
        x,
        horizon: field.horizon,
        window,
        rule: STABILIZATION_RULE.to_string(),
        levels: rows,
        relative_changes,
        verdict,
    })
}

/// Arguments of one evaluation of the kernel product estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaPoint {
    pub s: f64,
    pub u: f64,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub zeta: f64,
    /// Derivative orders on `p̄_α` and on `p_α`.
    pub j: u32,
    pub k: u32,
}

/// Largest number of grid points used for one product field.
const LEMMA_MAX_POINTS: usize = 1 << 17;

fn lemma_grid(points: &[f64], scales: &[f64]) -> Result<UniformGrid> {
    let fine = scales.iter().cloned().fold(f64::INFINITY, f64::min);
    let wide = scales.iter().cloned().fold(0.0, f64::max);
    let lo = points.iter().cloned().fold(f64::INFINITY, f64::min) - 40.0 * wide;
    let hi = points.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 40.0 * wide;
    let step = fine / 16.0;
    let n = ((hi - lo) / step).ceil() as usize + 1;
    if n > LEMMA_MAX_POINTS {
        return Err(LabError::Resolution(format!(
            "time gaps too unbalanced for the product grid ({n} points)"
        )));
    }
    Ok(UniformGrid::new(lo, step, n))
}

fn dual_config(sp: &StableParams, bi: &BesovIndices) -> ThermicConfig {
    ThermicConfig::new(-bi.beta, bi.p.conjugate(), bi.q.conjugate(), sp.alpha)
}

fn lemma_norm(sp: &StableParams, bi: &BesovIndices, field: SampledField) -> Result<f64> {
    let n = besov::thermic_norm(&field, &dual_config(sp, bi))?;
    if n.v_grid_flag {
        return Err(LabError::Quadrature(format!(
            "thermic norm not converged in v (relative change {:.2e})",
            n.refinement_change
        )));
    }
    Ok(n.total)
}

/// Ratio of `‖∇^j p̄_α(u−s, x−·) ∇^k p_α(t−u, y−·)‖_{B^{−β}_{p',q'}}` to the
/// bound `p̄_α(t−s, x−y) (u−s)^{−j/α} (t−u)^{−k/α} (t−u)^{1/α} 𝔏(u,s,t,ζ)`
/// (one-dimensional).
pub fn validate_besov_kernel_lemma(sp: &StableParams, bi: &BesovIndices, pt: &LemmaPoint) -> Result<f64> {
    if sp.dim != 1 {
        return Err(LabError::invalid("dim", "the product estimate is checked in one dimension"));
    }
    if pt.j > 1 || pt.k > 1 {
        return Err(LabError::invalid("j,k", "derivative orders must be 0 or 1"));
    }
    let weight = SingularityWeight::new(sp, bi);
    let l = weight.eval(pt.u, pt.s, pt.t, pt.zeta)?;
    let a = sp.alpha;
    let (us, tu, ts) = (pt.u - pt.s, pt.t - pt.u, pt.t - pt.s);
    let comparator = ComparatorKernel::new(sp);
    let kernel = ExactKernel::new(sp)?;
    let grid = lemma_grid(&[pt.x, pt.y], &[us.powf(1.0 / a), tu.powf(1.0 / a)])?;
    let field = SampledField::from_fn(grid, Boundary::Decaying, |z| {
        let left = if pt.j == 0 {
            comparator.radial(us, (pt.x - z).abs())
        } else {
            // ∇_x of p̄(u−s, x−z)
            let d = pt.x - z;
            comparator.radial_derivative(us, d.abs()) * d.signum()
        };
        let right = if pt.k == 0 {
            kernel.eval_1d(tu, pt.y - z)
        } else {
            kernel.grad_1d(tu, pt.y - z)
        };
        left * right
    });
    let lhs = lemma_norm(sp, bi, field)?;
    let rhs = comparator.radial(ts, (pt.x - pt.y).abs()) * us.powf(-(pt.j as f64) / a) * tu.powf((1.0 - pt.k as f64) / a) * l;
    Ok(lhs / rhs)
}

/// Ratio for the difference variant with endpoints `w` and `y`:
/// `‖p̄_α(u−s,x−·)[∇p_α(t−u,w−·)/p̄_α(t−s,w−x) − ∇p_α(t−u,y−·)/p̄_α(t−s,y−x)]‖`
/// over `|w−y|^ζ (t−u)^{−(ζ+1)/α} (t−u)^{1/α} 𝔏(u,s,t,ζ)`.
pub fn validate_besov_kernel_difference(sp: &StableParams, bi: &BesovIndices, pt: &LemmaPoint, w: f64) -> Result<f64> {
    if sp.dim != 1 {
        return Err(LabError::invalid("dim", "the product estimate is checked in one dimension"));
    }
    if w == pt.y {
        return Err(LabError::Domain("w and y must differ".into()));
    }
    let weight = SingularityWeight::new(sp, bi);
    let l = weight.eval(pt.u, pt.s, pt.t, pt.zeta)?;
    let a = sp.alpha;
    let (us, tu, ts) = (pt.u - pt.s, pt.t - pt.u, pt.t - pt.s);
    let comparator = ComparatorKernel::new(sp);
    let kernel = ExactKernel::new(sp)?;
    let grid = lemma_grid(&[pt.x, pt.y, w], &[us.powf(1.0 / a), tu.powf(1.0 / a)])?;
    let nw = comparator.radial(ts, (w - pt.x).abs());
    let ny = comparator.radial(ts, (pt.y - pt.x).abs());
    let field = SampledField::from_fn(grid, Boundary::Decaying, |z| {
        comparator.radial(us, (pt.x - z).abs()) * (kernel.grad_1d(tu, w - z) / nw - kernel.grad_1d(tu, pt.y - z) / ny)
    });
    let lhs = lemma_norm(sp, bi, field)?;
    let rhs = (w - pt.y).abs().powf(pt.zeta) * tu.powf(-(pt.zeta + 1.0) / a) * tu.powf(1.0 / a) * l;
    Ok(lhs / rhs)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LemmaSweep {
    pub points: Vec<LemmaPoint>,
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    pub min_ratio: f64,
}

/// Random draws `s = 0`, `t ∈ [0.1, 1]`, `u/t ∈ [0.02, 0.98]`, `x = 0`,
/// `|y| ≤ 3 t^{1/α}`.
#[allow(clippy::too_many_arguments)]
pub fn kernel_lemma_sweep(
    sp: &StableParams,
    bi: &BesovIndices,
    draws: usize,
    zeta: f64,
    j: u32,
    k: u32,
    seed: u64,
    exec: Exec,
) -> Result<LemmaSweep> {
    let points: Vec<LemmaPoint> = (0..draws)
        .map(|i| {
            let mut rng = substream(seed, "kernel-lemma", i as u64);
            let t = rng.random_range(0.1..1.0);
            let u = t * rng.random_range(0.02..0.98);
            let y = rng.random_range(-3.0..3.0) * f64::powf(t, 1.0 / sp.alpha);
            LemmaPoint { s: 0.0, u, t, x: 0.0, y, zeta, j, k }
        })
        .collect();
    let ratios = exec.try_map(points.len(), |i| validate_besov_kernel_lemma(sp, bi, &points[i]))?;
    let max_ratio = ratios.iter().cloned().fold(0.0, f64::max);
    let min_ratio = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(LemmaSweep {
        points,
        ratios,
        max_ratio,
        min_ratio,
    })
}

/// Distances between a solver slice and a Monte Carlo marginal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub time: f64,
    pub l1: f64,
    /// `Σ se_j Δy`, the Monte Carlo scale of `l1`.
    pub l1_error_bar: f64,
    /// `sup |p − f̂|` on `|y − x| ≤ (t−s)^{1/α}`.
    pub sup_diagonal: f64,
    pub sup_error_bar: f64,
}

pub fn cross_validate(dg: &DensityGrid, me: &MarginalEstimate) -> Result<CrossValidation> {
    if !dg.y.same_as(&me.grid) {
        return Err(LabError::Mismatch(format!(
            "solver window [{}, {}] ({} points) differs from the estimate grid [{}, {}] ({} points)",
            dg.y.start,
            dg.y.end(),
            dg.y.len,
            me.grid.start,
            me.grid.end(),
            me.grid.len
        )));
    }
    let i = dg
        .times
        .iter()
        .position(|t| (t - me.time).abs() <= 1e-12 * t.abs().max(1.0))
        .ok_or_else(|| LabError::Mismatch(format!("no solver slice at t = {}", me.time)))?;
    let p = &dg.density[i];
    let dy = dg.y.step;
    let scale = dg.elapsed(i).powf(1.0 / dg.params.alpha);
    let (mut sup, mut sup_err) = (0.0f64, 0.0f64);
    for (j, y) in dg.y.points().iter().enumerate() {
        if (y - dg.x).abs() <= scale {
            sup = sup.max((p[j] - me.values[j]).abs());
            sup_err = sup_err.max(me.std_error[j]);
        }
    }
    Ok(CrossValidation {
        time: me.time,
        l1: crate::sim::l1_distance(p, &me.values, dy),
        l1_error_bar: me.std_error.iter().sum::<f64>() * dy,
        sup_diagonal: sup,
        sup_error_bar: sup_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_change_handles_missing_constants() {
        assert_eq!(relative_change(Some(2.0), Some(2.2)).map(|c| (c * 10.0).round()), Some(1.0));
        assert_eq!(relative_change(None, Some(1.0)), None);
    }
}
