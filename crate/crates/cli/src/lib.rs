//! Batch runner: reads an experiment configuration, runs one pipeline stage
//! (or all of them) and writes JSON and CSV artifacts that carry the
//! configuration hash, tool version and seed.

// `!(x > 0.0)` is the idiom for rejecting NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;

use config::{ConfigError, ExperimentConfig};
use rand::Rng;
use serde::Serialize;
use serde_json::{json, Value};
use stablelab::besov::{self, random_periodic_field, Boundary, ThermicConfig};
use stablelab::drift::{mollification_report, sample_slice, DriftField, MollifiedDrift, BETA_OFFSET};
use stablelab::params::{check_gr, rho_range};
use stablelab::parametrix::{diagnostics, duhamel_solve_grad, DensityGrid};
use stablelab::rng::{derive_seed, substream};
use stablelab::sim::{estimate_marginal, euler_paths, save_dump, DumpHeader, EulerConfig, MarginalEstimate, StableSampler};
use stablelab::stable_density::{
    c_alpha, comparability, grid_csv, gradient_bound_constant, total_mass, validate_convolution_lemma,
    validate_spatial_moments, ComparatorKernel, ExactKernel,
};
use stablelab::verify::{cross_validate, kernel_lemma_sweep, m_stabilization};
use stablelab::{Exec, Index, LabError, StableParams};
use std::fs;
use std::path::{Path, PathBuf};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Exit status for configuration errors.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status for numerical failures.
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    CheckParams,
    Density,
    Besov,
    Simulate,
    Solve,
    Verify,
    All,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::CheckParams => "check-params",
            Command::Density => "density",
            Command::Besov => "besov",
            Command::Simulate => "simulate",
            Command::Solve => "solve",
            Command::Verify => "verify",
            Command::All => "all",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Lab(LabError),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<LabError> for CliError {
    fn from(e: LabError) -> Self {
        CliError::Lab(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Lab(LabError::Io(e))
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Lab(e) if e.is_config_error() || matches!(e, LabError::Io(_)) => EXIT_CONFIG,
            CliError::Lab(_) => EXIT_NUMERICAL,
        }
    }

    /// Machine-readable error document.
    pub fn to_json(&self) -> Value {
        let kind = if self.exit_code() == EXIT_CONFIG { "config" } else { "numerical" };
        match self {
            CliError::Config(c) => json!({"error": kind, "key": c.key, "message": c.message}),
            CliError::Lab(LabError::InvalidParameter { name, reason }) => {
                json!({"error": kind, "key": name, "message": reason})
            }
            CliError::Lab(e) => json!({"error": kind, "key": Value::Null, "message": e.to_string()}),
        }
    }
}

/// A fully resolved invocation.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: ExperimentConfig,
    pub hash: String,
    pub out: PathBuf,
    pub exec: Exec,
}

impl Context {
    /// Loads the configuration at `path`, applying the command-line overrides.
    pub fn load(path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError::new("--config", format!("cannot read {}: {e}", path.display())))?;
        let mut config = ExperimentConfig::parse(&text)?;
        if let Some(s) = seed {
            config.seed = s;
        }
        Ok(Self::new(config, out))
    }

    pub fn new(config: ExperimentConfig, out: Option<PathBuf>) -> Self {
        let hash = config.hash();
        let out = out.unwrap_or_else(|| config.output.clone());
        Context {
            config,
            hash,
            out,
            exec: Exec::Parallel,
        }
    }

    fn envelope<T: Serialize>(&self, command: &str, result: T) -> Value {
        json!({
            "tool": "stablelab",
            "version": VERSION,
            "config_hash": self.hash,
            "seed": self.config.seed,
            "experiment": self.config.name,
            "command": command,
            "result": result,
        })
    }

    fn write_json<T: Serialize>(&self, file: &str, command: &str, result: T) -> Result<(), CliError> {
        let doc = self.envelope(command, result);
        let mut text = serde_json::to_string_pretty(&doc).map_err(LabError::from)?;
        text.push('\n');
        fs::write(self.out.join(file), text)?;
        Ok(())
    }

    fn csv_preamble(&self) -> String {
        format!(
            "# stablelab {VERSION} config_hash={} seed={} experiment={}\n",
            self.hash, self.config.seed, self.config.name
        )
    }

    fn write_csv(&self, file: &str, body: &str) -> Result<(), CliError> {
        fs::write(self.out.join(file), format!("{}{body}", self.csv_preamble()))?;
        Ok(())
    }
}

/// Result of one stage: a summary for stdout and an optional table.
#[derive(Debug, Clone)]
pub struct Output {
    pub summary: Value,
    pub table: Option<String>,
}

impl Output {
    /// Text printed to stdout.
    pub fn render(&self, format: Format) -> String {
        match (format, &self.table) {
            (Format::Csv, Some(t)) => t.clone(),
            (Format::Csv, None) => {
                let mut s = String::from("key,value\n");
                if let Value::Object(m) = &self.summary {
                    for (k, v) in m {
                        s.push_str(&format!("{k},{v}\n"));
                    }
                }
                s
            }
            (Format::Json, _) => {
                let mut s = serde_json::to_string_pretty(&self.summary).expect("summary serializes");
                s.push('\n');
                s
            }
        }
    }
}

pub fn run(command: Command, ctx: &Context) -> Result<Output, CliError> {
    fs::create_dir_all(&ctx.out)
        .map_err(|e| ConfigError::new("output", format!("cannot create {}: {e}", ctx.out.display())))?;
    match command {
        Command::CheckParams => check_params(ctx),
        Command::Density => density(ctx),
        Command::Besov => besov_stage(ctx),
        Command::Simulate => simulate(ctx).map(|(o, _)| o),
        Command::Solve => solve(ctx).map(|(o, _)| o),
        Command::Verify => verify(ctx),
        Command::All => all(ctx),
    }
}

fn one_dimensional(ctx: &Context, stage: &str) -> Result<StableParams, CliError> {
    let sp = ctx.config.stable_params()?;
    if sp.dim != 1 {
        return Err(ConfigError::new("noise.dim", format!("`{stage}` runs in one dimension")).into());
    }
    Ok(sp)
}

fn check_params(ctx: &Context) -> Result<Output, CliError> {
    let sp = ctx.config.stable_params()?;
    let bi = ctx.config.indices()?;
    let adm = check_gr(&sp, &bi)?;
    let range = rho_range(&bi, &sp).ok().map(|r| [r.lo, r.hi]);
    let summary = json!({
        "gr": adm.gr,
        "grd": adm.grd,
        "theta": adm.theta,
        "gamma": adm.gamma,
        "alpha_lower": adm.alpha_lower,
        "beta_lower_gr": adm.beta_lower_gr,
        "beta_lower_grd": adm.beta_lower_grd,
        "rho_range": range,
    });
    ctx.write_json("params.json", "check-params", &summary)?;
    Ok(Output { summary, table: None })
}

fn density(ctx: &Context) -> Result<Output, CliError> {
    let cfg = &ctx.config.density;
    let sp = ctx.config.stable_params()?;
    let exact = ExactKernel::new(&sp)?;
    let comparator = ComparatorKernel::new(&sp);
    let n = cfg.points;
    let points: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut p = vec![0.0; sp.dim];
            p[0] = -cfg.radius + 2.0 * cfg.radius * i as f64 / (n - 1) as f64;
            p
        })
        .collect();
    let table = grid_csv(&exact, &cfg.times, &points)?;
    let per_time: Vec<Value> = cfg
        .times
        .iter()
        .map(|&t| {
            let c = comparability(&exact, &comparator, t, cfg.radius, n, ctx.exec);
            let g = gradient_bound_constant(&exact, &comparator, t, cfg.radius, n, ctx.exec);
            json!({
                "t": t,
                "mass": total_mass(&exact, t),
                "comparability": c,
                "gradient_constant": g,
            })
        })
        .collect();
    let moments = validate_spatial_moments(&sp, cfg.moment_zeta, &cfg.times)?;
    // convolution estimate on random triples s < u < t
    let mut worst: f64 = 0.0;
    for i in 0..cfg.lemma_draws as u64 {
        let mut rng = substream(ctx.config.seed, "density-lemma", i);
        let t = rng.random_range(0.05..2.0);
        let u = t * rng.random_range(0.01..0.99);
        let x: Vec<f64> = (0..sp.dim).map(|_| rng.random_range(-5.0..5.0)).collect();
        let y: Vec<f64> = (0..sp.dim).map(|_| rng.random_range(-5.0..5.0)).collect();
        worst = worst.max(validate_convolution_lemma(&sp, Index::Infinite, 0.0, u, t, &x, &y)?);
    }
    let summary = json!({
        "c_alpha": c_alpha(&sp),
        "times": per_time,
        "moments": moments,
        "convolution_constant": (cfg.lemma_draws > 0).then_some(worst),
        "convolution_draws": cfg.lemma_draws,
    });
    ctx.write_json("density.json", "density", &summary)?;
    ctx.write_csv("density.csv", &table)?;
    Ok(Output {
        summary,
        table: Some(table),
    })
}

fn besov_stage(ctx: &Context) -> Result<Output, CliError> {
    let sp = one_dimensional(ctx, "besov")?;
    let cfg = &ctx.config.besov;
    let bi = ctx.config.indices()?;
    let field = ctx.config.drift_field()?;
    let slice = field.slice(0.0).ok_or_else(|| LabError::invalid("kind", "spectral drift required"))?;
    let sampled = sample_slice(&slice, Boundary::Periodic);
    let norms: Vec<Value> = [bi.beta - BETA_OFFSET, bi.beta, bi.beta + BETA_OFFSET]
        .iter()
        .map(|&theta| {
            let n = besov::thermic_norm_with(&sampled, &ThermicConfig::new(theta, bi.p, bi.q, sp.alpha), ctx.exec)?;
            Ok(json!({"theta": theta, "norm": n}))
        })
        .collect::<Result<_, LabError>>()?;
    let bracket = match field.kind {
        stablelab::drift::DriftKind::Shells { .. } => Some(field.regularity_bracket(0)?),
        _ => None,
    };
    let mollification = if field.slice(0.0).is_some_and(|s| !s.modes.is_empty()) {
        Some(mollification_report(&field, &cfg.levels)?)
    } else {
        None
    };
    let cfg_dual = ThermicConfig::new(0.3, Index::Finite(2.0), Index::Finite(2.0), sp.alpha);
    let beta_cfg = ThermicConfig::new(bi.beta, bi.p, bi.q, sp.alpha);
    let product_rho = cfg.product_rho.unwrap_or(0.1 - bi.beta);
    let seed = derive_seed(ctx.config.seed, "besov-pairs");
    let (mut duality, mut product): (f64, f64) = (0.0, 0.0);
    for i in 0..cfg.pairs as u64 {
        let mut rng = substream(seed, "pair", i);
        let f = random_periodic_field(&mut rng, 24, 1.0, 512);
        let g = random_periodic_field(&mut rng, 24, 1.0, 512);
        duality = duality.max(besov::validate_duality(&f, &g, &cfg_dual, &cfg_dual.dual())?);
        let smooth = random_periodic_field(&mut rng, 6, 2.0, 512);
        product = product.max(besov::validate_product_rule(&smooth, &g, &beta_cfg, product_rho)?);
    }
    let summary = json!({
        "norms": norms,
        "bracket": bracket,
        "mollification": mollification,
        "duality_constant": duality,
        "product_constant": product,
        "product_rho": product_rho,
        "pairs": cfg.pairs,
    });
    ctx.write_json("besov.json", "besov", &summary)?;
    Ok(Output { summary, table: None })
}

fn run_drift(ctx: &Context, field: &DriftField) -> MollifiedDrift {
    field.mollify(ctx.config.run_level())
}

fn simulate(ctx: &Context) -> Result<(Output, MarginalEstimate), CliError> {
    let sp = one_dimensional(ctx, "simulate")?;
    let c = &ctx.config;
    let field = c.drift_field()?;
    let drift = run_drift(ctx, &field);
    let sampler = StableSampler::new(&sp)?;
    let ecfg = EulerConfig {
        x0: c.solver.x0,
        start: c.solver.start,
        horizon: c.drift.horizon,
        steps: c.simulation.steps,
        paths: c.simulation.paths,
        seed: derive_seed(c.seed, "paths"),
        keep_paths: false,
    };
    let result = euler_paths(&sampler, &drift, &ecfg, ctx.exec)?;
    let grid = c.solver.grid.output_window(sp.alpha, c.solver.start, c.solver.x0, c.drift.horizon);
    let me = estimate_marginal(&result.terminal, c.drift.horizon, &grid, sp.alpha, c.simulation.bandwidth)?;
    if c.simulation.dump {
        let header = DumpHeader {
            alpha: sp.alpha,
            dim: 1,
            horizon: c.drift.horizon,
            steps: c.simulation.steps as u64,
            seed: ecfg.seed,
            count: result.terminal.len() as u64,
        };
        save_dump(&ctx.out.join("samples.bin"), &header, &result.terminal)?;
        // the binary layout is fixed, so provenance goes into a sidecar
        ctx.write_json("samples.bin.json", "simulate", header)?;
    }
    let table = me.to_csv()?;
    let summary = json!({
        "level": drift.level,
        "paths": c.simulation.paths,
        "failed": result.failed,
        "steps": c.simulation.steps,
        "bandwidth": me.bandwidth,
        "mass_in_grid": me.mass_in_grid,
        "mass_outside": me.mass_outside,
        "degenerate": me.degenerate,
        "window": [me.grid.start, me.grid.end()],
    });
    ctx.write_json("simulate.json", "simulate", &summary)?;
    ctx.write_csv("marginal.csv", &table)?;
    Ok((
        Output {
            summary,
            table: Some(table),
        },
        me,
    ))
}

fn solve(ctx: &Context) -> Result<(Output, DensityGrid), CliError> {
    let sp = one_dimensional(ctx, "solve")?;
    let c = &ctx.config;
    let field = c.drift_field()?;
    let drift = run_drift(ctx, &field);
    let dg = duhamel_solve_grad(&sp, &drift, c.solver.start, c.solver.x0, c.drift.horizon, &c.solver.grid, ctx.exec)?;
    let diag = diagnostics(&dg, c.rho()?).ok();
    let table = dg.to_csv()?;
    let summary = json!({
        "metadata": dg.metadata(),
        "conservation_defect": dg.conservation_defect(),
        "diagnostics": diag.map(|d| json!({"h_min": d.h_min, "h_max": d.h_max, "rho": d.rho})),
    });
    ctx.write_json("solve.json", "solve", &summary)?;
    ctx.write_csv("solution.csv", &table)?;
    Ok((
        Output {
            summary,
            table: Some(table),
        },
        dg,
    ))
}

fn verify(ctx: &Context) -> Result<Output, CliError> {
    let sp = one_dimensional(ctx, "verify")?;
    let c = &ctx.config;
    let field = c.drift_field()?;
    let bi = c.indices()?;
    let rho = c.rho()?;
    let report = m_stabilization(
        &c.name,
        &sp,
        &field,
        &c.verify.levels,
        c.solver.start,
        c.solver.x0,
        &c.solver.grid,
        rho,
        ctx.exec,
    )?;
    let lemma = if c.verify.lemma_draws > 0 && !field.negative_control {
        let seed = derive_seed(c.seed, "kernel-lemma");
        Some(kernel_lemma_sweep(&sp, &bi, c.verify.lemma_draws, c.verify.zeta, 0, 1, seed, ctx.exec)?)
    } else {
        None
    };
    let table = report.to_csv()?;
    ctx.write_json("report.json", "verify", &report)?;
    ctx.write_csv("report.csv", &table)?;
    let summary = json!({
        "verdict": report.verdict,
        "relative_changes": report.relative_changes,
        "levels": report.levels.iter().map(|r| json!({
            "level": r.level,
            "constants": r.constants,
            "failure": r.failure,
            "sup_distance": r.sup_distance,
        })).collect::<Vec<_>>(),
        "lemma_max_ratio": lemma.as_ref().map(|l| l.max_ratio),
    });
    if let Some(l) = &lemma {
        ctx.write_json("kernel_lemma.json", "verify", l)?;
    }
    Ok(Output {
        summary,
        table: Some(table),
    })
}

fn all(ctx: &Context) -> Result<Output, CliError> {
    let mut stages = serde_json::Map::new();
    stages.insert("check-params".into(), check_params(ctx)?.summary);
    stages.insert("density".into(), density(ctx)?.summary);
    if ctx.config.noise.dim == 1 {
        stages.insert("besov".into(), besov_stage(ctx)?.summary);
        let (sim, me) = simulate(ctx)?;
        stages.insert("simulate".into(), sim.summary);
        let (sol, dg) = solve(ctx)?;
        stages.insert("solve".into(), sol.summary);
        let cv = cross_validate(&dg, &me)?;
        ctx.write_json("cross_validation.json", "all", cv)?;
        stages.insert("cross_validation".into(), json!(cv));
        stages.insert("verify".into(), verify(ctx)?.summary);
    } else {
        stages.insert("skipped".into(), json!(["besov", "simulate", "solve", "verify"]));
    }
    let summary = Value::Object(stages);
    ctx.write_json("summary.json", "all", &summary)?;
    Ok(Output { summary, table: None })
}
