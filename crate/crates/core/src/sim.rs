//! Monte Carlo side of the laboratory: exact stable sampling, Euler paths of
//! `dX = b^m(t, X) dt + dZ`, kernel density estimates and goodness-of-fit
//! statistics.
//!
//! Every random draw comes from a ChaCha stream keyed by `(seed, purpose)` and
//! indexed by the work item (sample chunk or path), so results do not depend
//! on the number of workers.

use crate::drift::{MollifiedDrift, SpectralSlice};
use crate::error::{LabError, Result};
use crate::exec::Exec;
use crate::fft;
use crate::grid::UniformGrid;
use crate::params::{SpectralDensity, StableParams};
use crate::rng::substream;
use crate::stable_density::c_alpha;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

/// Samples per random substream in bulk draws.
pub const SAMPLE_CHUNK: usize = 4096;

/// Directions used to discretize an anisotropic spectral measure.
pub const SPECTRAL_DIRECTIONS: usize = 256;

#[derive(Debug, Clone)]
pub struct StableSampler {
    params: StableParams,
    /// `(w_k^{1/α}, ξ_k)` for the anisotropic planar case.
    atoms: Vec<(f64, [f64; 2])>,
}

impl StableSampler {
    pub fn new(sp: &StableParams) -> Result<Self> {
        let sp = sp.clone().validated()?;
        if sp.dim > 2 {
            return Err(LabError::invalid("dim", "sampling is implemented for d ∈ {1, 2}"));
        }
        let atoms = match &sp.spectral {
            SpectralDensity::Fourier2d { .. } if !sp.spectral.is_isotropic() => {
                let a = sp.alpha;
                // K_α = ∫_0^{2π} |cos θ|^α dθ
                let k_alpha = 2.0 * PI.sqrt() * crate::special::gamma((a + 1.0) / 2.0)
                    / crate::special::gamma(a / 2.0 + 1.0);
                let n = SPECTRAL_DIRECTIONS;
                let atoms: Vec<(f64, [f64; 2])> = (0..n)
                    .map(|k| {
                        let th = PI * (k as f64 + 0.5) / n as f64;
                        // both ξ and −ξ carry mass; symmetric S_k accounts for the pair
                        let w = 2.0 * sp.spectral.value(th) * (PI / n as f64) / k_alpha;
                        let (s, c) = th.sin_cos();
                        (w.powf(1.0 / a), [c, s])
                    })
                    .collect();
                // the discrete symbol must reproduce the continuous one
                let kernel = crate::stable_density::ExactKernel::new(&sp)?;
                for i in 0..16 {
                    let phi = PI * i as f64 / 16.0;
                    let (s, c) = phi.sin_cos();
                    let discrete: f64 = atoms
                        .iter()
                        .map(|(wa, xi)| wa.powf(a) * (c * xi[0] + s * xi[1]).abs().powf(a))
                        .sum();
                    let exact = kernel.symbol(phi);
                    if (discrete - exact).abs() > 1e-3 * exact {
                        return Err(LabError::invalid(
                            "spectral",
                            format!("spectral density too irregular to discretize (symbol {exact} vs {discrete})"),
                        ));
                    }
                }
                atoms
            }
            _ => Vec::new(),
        };
        Ok(StableSampler { params: sp, atoms })
    }

    pub fn params(&self) -> &StableParams {
        &self.params
    }

    /// Symmetric stable variable with `E e^{iuS} = e^{-|u|^α}`
    /// (Chambers–Mallows–Stuck).
    #[inline]
    pub fn standard_1d<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let a = self.params.alpha;
        let v = PI * (rng.random::<f64>() - 0.5);
        let w: f64 = Exp1.sample(rng);
        (a * v).sin() / v.cos().powf(1.0 / a) * (((1.0 - a) * v).cos() / w).powf((1.0 - a) / a)
    }

    /// Positive `(α/2)`-stable variable with `E e^{-sA} = e^{-s^{α/2}}` (Kanter).
    fn positive_half<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let a = self.params.alpha / 2.0;
        let u = PI * rng.random::<f64>();
        let w: f64 = Exp1.sample(rng);
        (a * u).sin() / u.sin().powf(1.0 / a) * (((1.0 - a) * u).sin() / w).powf((1.0 - a) / a)
    }

    /// One draw of `Z_dt` written to `out` (length `d`).
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, dt: f64, out: &mut [f64]) {
        let scale = dt.powf(1.0 / self.params.alpha);
        match self.params.dim {
            1 => out[0] = scale * self.standard_1d(rng),
            _ if self.atoms.is_empty() => {
                // sub-Gaussian: √A · N(0, 2I)
                let r = (2.0 * self.positive_half(rng)).sqrt() * scale;
                for o in out.iter_mut() {
                    let g: f64 = StandardNormal.sample(rng);
                    *o = r * g;
                }
            }
            _ => {
                out[0] = 0.0;
                out[1] = 0.0;
                for (w, xi) in &self.atoms {
                    let s = w * self.standard_1d(rng);
                    out[0] += s * xi[0];
                    out[1] += s * xi[1];
                }
                out[0] *= scale;
                out[1] *= scale;
            }
        }
    }

    /// `n` i.i.d. draws of `Z_dt`, flattened row-major (`n × d`).
    pub fn sample_increment(&self, dt: f64, n: usize, seed: u64, exec: Exec) -> Result<Vec<f64>> {
        if !(dt > 0.0) {
            return Err(LabError::Domain(format!("time step must be positive, got {dt}")));
        }
        let d = self.params.dim;
        let mut out = vec![0.0; n * d];
        exec.for_each_chunk(&mut out, SAMPLE_CHUNK * d, |chunk, buf| {
            let mut rng = substream(seed, "increment", chunk as u64);
            for row in buf.chunks_mut(d) {
                self.draw(&mut rng, dt, row);
            }
        });
        Ok(out)
    }
}

/// Settings of an Euler run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerConfig {
    pub x0: f64,
    pub start: f64,
    pub horizon: f64,
    pub steps: usize,
    pub paths: usize,
    pub seed: u64,
    pub keep_paths: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EulerResult {
    /// Terminal values of the paths that stayed finite, in path order.
    pub terminal: Vec<f64>,
    pub failed: usize,
    /// Full paths (`steps + 1` values each) when requested.
    pub paths: Option<Vec<Vec<f64>>>,
}

/// Paths processed per parallel work item.
const PATH_CHUNK: usize = 1024;

/// Explicit Euler scheme `X_{k+1} = X_k + b^m(t_k, X_k) Δ + ΔZ_k` in one
/// dimension.
pub fn euler_paths(
    sampler: &StableSampler,
    drift: &MollifiedDrift,
    cfg: &EulerConfig,
    exec: Exec,
) -> Result<EulerResult> {
    if sampler.params.dim != 1 {
        return Err(LabError::invalid("dim", "Euler paths are one-dimensional"));
    }
    if cfg.steps == 0 {
        return Err(LabError::invalid("steps", "need at least one step"));
    }
    if !(cfg.horizon > 0.0) {
        return Err(LabError::invalid("horizon", "must be positive"));
    }
    let dt = cfg.horizon / cfg.steps as f64;
    let scale = dt.powf(1.0 / sampler.params.alpha);
    let slices: Vec<Option<SpectralSlice>> = (0..cfg.steps)
        .map(|k| drift.slice(cfg.start + k as f64 * dt))
        .collect();
    let chunks = cfg.paths.div_ceil(PATH_CHUNK);
    let results = exec.map(chunks, |c| {
        let lo = c * PATH_CHUNK;
        let hi = (lo + PATH_CHUNK).min(cfg.paths);
        let mut terminal = Vec::with_capacity(hi - lo);
        let mut paths = Vec::new();
        let mut failed = 0usize;
        for p in lo..hi {
            let mut rng = substream(cfg.seed, "euler", p as u64);
            let mut x = cfg.x0;
            let mut path = if cfg.keep_paths {
                Vec::with_capacity(cfg.steps + 1)
            } else {
                Vec::new()
            };
            if cfg.keep_paths {
                path.push(x);
            }
            let mut ok = true;
            for (k, slice) in slices.iter().enumerate() {
                let b = match slice {
                    Some(s) => s.eval(x),
                    None => drift.eval(cfg.start + k as f64 * dt, x),
                };
                x += b * dt + scale * sampler.standard_1d(&mut rng);
                if !x.is_finite() {
                    ok = false;
                    break;
                }
                if cfg.keep_paths {
                    path.push(x);
                }
            }
            if ok {
                terminal.push(x);
                if cfg.keep_paths {
                    paths.push(path);
                }
            } else {
                failed += 1;
            }
        }
        (terminal, paths, failed)
    });
    let mut out = EulerResult {
        terminal: Vec::with_capacity(cfg.paths),
        failed: 0,
        paths: cfg.keep_paths.then(Vec::new),
    };
    for (t, p, f) in results {
        out.terminal.extend(t);
        out.failed += f;
        if let Some(all) = out.paths.as_mut() {
            all.extend(p);
        }
    }
    Ok(out)
}

/// Kernel density estimate on a uniform grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarginalEstimate {
    pub time: f64,
    pub samples: usize,
    pub grid: UniformGrid,
    pub values: Vec<f64>,
    pub bandwidth: f64,
    /// Riemann mass of the estimate on the grid.
    pub mass_in_grid: f64,
    /// Exact kernel mass falling outside the grid.
    pub mass_outside: f64,
    /// Pointwise Monte Carlo standard error.
    pub std_error: Vec<f64>,
    /// Set when the sample has no spread (bandwidth falls back to the grid step).
    pub degenerate: bool,
}

/// Multiplier on the Silverman rule; the comparator kernel has a much wider
/// profile than a Gaussian, so the optimal bandwidth is smaller.
pub const BANDWIDTH_FACTOR: f64 = 0.35;

/// Tail-robust Silverman-type bandwidth `c · 0.9 · (IQR/1.349) · N^{-1/5}`
/// with `c = BANDWIDTH_FACTOR`.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let mut s: Vec<f64> = samples.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |p: f64| {
        let pos = p * (s.len() - 1) as f64;
        let i = pos.floor() as usize;
        let f = pos - i as f64;
        if i + 1 < s.len() {
            s[i] * (1.0 - f) + s[i + 1] * f
        } else {
            s[i]
        }
    };
    BANDWIDTH_FACTOR * 0.9 * (q(0.75) - q(0.25)) / 1.349 * (s.len() as f64).powf(-0.2)
}

/// Distribution function of the comparator kernel with unit scale.
fn comparator_cdf(c: f64, alpha: f64, z: f64) -> f64 {
    let tail = c / alpha * (1.0 + z.abs()).powf(-alpha);
    if z >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// KDE with the comparator kernel `p̄_α(h^α, ·)`; linear binning on a grid
/// extended by its own width on each side, FFT convolution.
pub fn estimate_marginal(
    samples: &[f64],
    time: f64,
    grid: &UniformGrid,
    alpha: f64,
    bandwidth: Option<f64>,
) -> Result<MarginalEstimate> {
    if samples.is_empty() {
        return Err(LabError::invalid("samples", "no samples"));
    }
    let sp = StableParams::new(alpha, 1)?;
    let mut degenerate = false;
    let h = match bandwidth {
        Some(h) if !(h > 0.0) => return Err(LabError::invalid("bandwidth", format!("must be positive, got {h}"))),
        Some(h) => h,
        None => {
            let h = silverman_bandwidth(samples);
            if h > 0.0 {
                h
            } else {
                degenerate = true;
                grid.step
            }
        }
    };
    let n = grid.len;
    let ext = UniformGrid::new(grid.start - n as f64 * grid.step, grid.step, 3 * n);
    let mut counts = vec![0.0; ext.len];
    for &x in samples {
        let pos = (x - ext.start) / ext.step;
        if pos >= 0.0 && pos < (ext.len - 1) as f64 {
            let i = pos.floor() as usize;
            let f = pos - i as f64;
            counts[i] += 1.0 - f;
            counts[i + 1] += f;
        }
    }
    let m = fft::next_len(2 * ext.len);
    let c = c_alpha(&sp);
    // cell-integrated kernel weights keep the estimate normalized for any h
    let mut k = vec![0.0; m];
    for (j, slot) in k.iter_mut().enumerate() {
        let off = if j <= m / 2 { j as f64 } else { j as f64 - m as f64 };
        let lo = (off - 0.5) * grid.step / h;
        let hi = (off + 0.5) * grid.step / h;
        *slot = (comparator_cdf(c, alpha, hi) - comparator_cdf(c, alpha, lo)) / grid.step;
    }
    let ck = fft::forward_real(&counts, m);
    let kk = fft::forward_real(&k, m);
    let prod: Vec<Complex64> = ck.iter().zip(&kk).map(|(a, b)| a * b).collect();
    let conv = fft::inverse_real(prod);
    let total = samples.len() as f64;
    let values: Vec<f64> = (0..n).map(|j| (conv[j + n] / total).max(0.0)).collect();
    let mass_in_grid = grid.integrate(&values);
    let (a, b) = (grid.start - 0.5 * grid.step, grid.end() + 0.5 * grid.step);
    let mass_outside = samples
        .iter()
        .map(|&x| comparator_cdf(c, alpha, (a - x) / h) + 1.0 - comparator_cdf(c, alpha, (b - x) / h))
        .sum::<f64>()
        / total;
    let rk = 2.0 * c * c / (1.0 + 2.0 * alpha);
    let std_error = values
        .iter()
        .map(|f| ((f * rk / h - f * f).max(0.0) / total).sqrt())
        .collect();
    Ok(MarginalEstimate {
        time,
        samples: samples.len(),
        grid: *grid,
        values,
        bandwidth: h,
        mass_in_grid,
        mass_outside,
        std_error,
        degenerate,
    })
}

impl MarginalEstimate {
    pub fn to_csv(&self) -> Result<String> {
        let rows = self
            .grid
            .points()
            .into_iter()
            .zip(&self.values)
            .zip(&self.std_error)
            .map(|((x, v), e)| vec![self.time, x, *v, *e]);
        crate::io::csv_string(&["t", "x", "density", "std_error"], rows)
    }
}

/// `Σ |a_j − b_j| Δx`.
pub fn l1_distance(a: &[f64], b: &[f64], step: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() * step
}

/// Kolmogorov distribution tail `P(K > λ)`.
pub fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample Kolmogorov–Smirnov test against the distribution function `cdf`.
pub fn ks_one_sample<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> KsResult {
    let mut s: Vec<f64> = samples.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in s.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let sn = n.sqrt();
    KsResult {
        statistic: d,
        p_value: kolmogorov_tail((sn + 0.12 + 0.11 / sn) * d),
    }
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut x: Vec<f64> = a.to_vec();
    let mut y: Vec<f64> = b.to_vec();
    x.sort_by(|p, q| p.partial_cmp(q).unwrap());
    y.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let ne = (n * m / (n + m)).sqrt();
    KsResult {
        statistic: d,
        p_value: kolmogorov_tail((ne + 0.12 + 0.11 / ne) * d),
    }
}

/// Empirical characteristic function `N^{-1} Σ e^{iλ·x}` of one-dimensional samples.
pub fn empirical_cf(samples: &[f64], lambda: f64) -> Complex64 {
    let (mut re, mut im) = (0.0, 0.0);
    for x in samples {
        let (s, c) = (lambda * x).sin_cos();
        re += c;
        im += s;
    }
    Complex64::new(re, im) / samples.len() as f64
}

/// `N^{-1} Σ |x|^ζ`.
pub fn sample_moment(samples: &[f64], zeta: f64) -> f64 {
    samples.iter().map(|x| x.abs().powf(zeta)).sum::<f64>() / samples.len() as f64
}

/// Header of a binary sample dump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DumpHeader {
    pub alpha: f64,
    pub dim: u64,
    pub horizon: f64,
    pub steps: u64,
    pub seed: u64,
    pub count: u64,
}

const DUMP_MAGIC: &[u8; 4] = b"SLSD";
const DUMP_VERSION: u32 = 1;

/// Writes samples (`count × dim`, row-major in memory) as little-endian
/// columns after a fixed header.
pub fn write_dump<W: Write>(w: &mut W, header: &DumpHeader, samples: &[f64]) -> Result<()> {
    let d = header.dim as usize;
    if samples.len() != header.count as usize * d {
        return Err(LabError::Format("sample count does not match the header".into()));
    }
    w.write_all(DUMP_MAGIC)?;
    w.write_all(&DUMP_VERSION.to_le_bytes())?;
    w.write_all(&header.alpha.to_le_bytes())?;
    w.write_all(&header.dim.to_le_bytes())?;
    w.write_all(&header.horizon.to_le_bytes())?;
    w.write_all(&header.steps.to_le_bytes())?;
    w.write_all(&header.seed.to_le_bytes())?;
    w.write_all(&header.count.to_le_bytes())?;
    for c in 0..d {
        for row in samples.chunks(d) {
            w.write_all(&row[c].to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_dump<R: Read>(r: &mut R) -> Result<(DumpHeader, Vec<f64>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != DUMP_MAGIC {
        return Err(LabError::Format("not a sample dump (bad magic)".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    if u32::from_le_bytes(b4) != DUMP_VERSION {
        return Err(LabError::Format("unsupported sample dump version".into()));
    }
    let mut b8 = [0u8; 8];
    let mut next = |r: &mut R| -> Result<[u8; 8]> {
        r.read_exact(&mut b8)?;
        Ok(b8)
    };
    let header = DumpHeader {
        alpha: f64::from_le_bytes(next(r)?),
        dim: u64::from_le_bytes(next(r)?),
        horizon: f64::from_le_bytes(next(r)?),
        steps: u64::from_le_bytes(next(r)?),
        seed: u64::from_le_bytes(next(r)?),
        count: u64::from_le_bytes(next(r)?),
    };
    let (n, d) = (header.count as usize, header.dim as usize);
    let mut samples = vec![0.0; n * d];
    for c in 0..d {
        for i in 0..n {
            samples[i * d + c] = f64::from_le_bytes(next(r)?);
        }
    }
    Ok((header, samples))
}

pub fn save_dump(path: &Path, header: &DumpHeader, samples: &[f64]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_dump(&mut w, header, samples)?;
    w.flush()?;
    Ok(())
}

pub fn load_dump(path: &Path) -> Result<(DumpHeader, Vec<f64>)> {
    read_dump(&mut std::io::BufReader::new(std::fs::File::open(path)?))
}
