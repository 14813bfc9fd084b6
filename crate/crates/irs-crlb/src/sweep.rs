//! Experiment sweeps over noise variance and link-strength ratio, and CSV
//! emission of the per-point CRLB metrics.
//!
//! The noise sweep exploits the exact proportionality `CRLB ∝ sigma^2`:
//! phases are designed once at `sigma^2 = 1` and every grid point is an
//! exact rescale, which is mathematically identical to re-solving per
//! point. The link-strength sweep re-draws the scene scaling and re-designs
//! at every grid point, in parallel.

use rayon::prelude::*;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fisher::{
    assemble_full_fim, crlb, fim_alpha_alpha, fim_alpha_nu, fim_nu_nu, FimBlocks,
};
use crate::geometry::ChannelSet;
use crate::optimizer::{alternating_optimize, OptimizerConfig};
use crate::scenario::{build_scene, ScenarioConfig};
use crate::signal::{sensing_matrix, sensing_matrix_derivative, NoiseModel};

/// Which scenario family a series belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioVariant {
    NoIrs,
    /// First `n` IRS platforms of the config.
    Irs(usize),
}

impl ScenarioVariant {
    pub fn label(&self) -> String {
        match self {
            ScenarioVariant::NoIrs => "no-irs".to_string(),
            ScenarioVariant::Irs(n) => format!("{n}-irs"),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        if s == "no-irs" {
            return Ok(ScenarioVariant::NoIrs);
        }
        if let Some(prefix) = s.strip_suffix("-irs") {
            if let Ok(n) = prefix.parse::<usize>() {
                if n >= 1 {
                    return Ok(ScenarioVariant::Irs(n));
                }
            }
        }
        Err(Error::invalid(format!(
            "unknown scenario variant `{s}` (expected no-irs or <n>-irs)"
        )))
    }

    fn path_count(&self) -> usize {
        match self {
            ScenarioVariant::NoIrs => 0,
            ScenarioVariant::Irs(n) => *n,
        }
    }

    /// All variants derivable from a config: no-irs, 1-irs, ..., K-irs.
    pub fn all_for(cfg: &ScenarioConfig) -> Vec<ScenarioVariant> {
        let mut v = vec![ScenarioVariant::NoIrs];
        v.extend((1..=cfg.nlos_count()).map(ScenarioVariant::Irs));
        v
    }
}

/// Metrics recorded at one grid point.
#[derive(Debug, Clone)]
pub struct PointMetrics {
    pub trace_crlb: f64,
    pub trace_alpha_block: f64,
    pub trace_nu_block: f64,
    pub surrogate: f64,
    pub converged: bool,
    /// Optimizer diagnostics when a design ran at this point.
    pub design: Option<PointDesign>,
}

#[derive(Debug, Clone)]
pub struct PointDesign {
    pub residual: f64,
    pub iterations: usize,
    pub objective_trace: Vec<f64>,
}

/// One scenario's series over the sweep axis.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub axis_name: String,
    pub axis_values: Vec<f64>,
    pub scenario: String,
    pub points: Vec<PointMetrics>,
    pub seed: u64,
    pub config_digest: String,
}

/// Sweep-wide options.
#[derive(Debug, Clone)]
pub struct SweepOptions {
    /// Design phases per scenario (otherwise the anchor phases are kept as
    /// a random/identity baseline).
    pub optimize: bool,
    pub optimizer: OptimizerConfig,
    pub variants: Vec<ScenarioVariant>,
}

impl SweepOptions {
    pub fn for_config(cfg: &ScenarioConfig) -> Self {
        Self {
            optimize: true,
            optimizer: OptimizerConfig {
                seed: cfg.seed,
                ..OptimizerConfig::default()
            },
            variants: ScenarioVariant::all_for(cfg),
        }
    }
}

/// Evaluates the four CRLB metrics of a built scene at the given phases
/// (which may differ from the anchor phases the reflectivities were scaled
/// at).
fn metrics_at_phases(
    cfg: &ScenarioConfig,
    sigma2: f64,
    phases: Option<&[Vec<f64>]>,
) -> Result<(f64, f64, f64, f64)> {
    let scene = build_scene(cfg, None)?;
    let channels = match phases {
        None => scene.channels.clone(),
        Some(p) => {
            let scenario = scene.design_scenario(sigma2)?;
            let h = scenario.consistent_h(p)?;
            ChannelSet::new(h[0], h[1..].to_vec())?
        }
    };
    let noise = NoiseModel::white(sigma2)?;
    let a = sensing_matrix(&scene.radar, &channels, &scene.target.nu)?;
    let a_dot = sensing_matrix_derivative(&scene.radar, &channels, &scene.target.nu)?;
    let blocks = FimBlocks::new(
        fim_alpha_alpha(&a, &noise)?,
        fim_alpha_nu(&a, &a_dot, &noise, &scene.target.alpha)?,
        fim_nu_nu(&a_dot, &noise, &scene.target.alpha)?,
    )?;
    let r = crlb(&assemble_full_fim(&blocks))?;
    Ok((
        r.trace_total,
        r.trace_alpha_block,
        r.trace_nu_block,
        r.surrogate,
    ))
}

/// Builds, optionally designs, and evaluates one (variant, config) point.
fn evaluate_point(cfg: &ScenarioConfig, sigma2: f64, options: &SweepOptions) -> PointMetrics {
    let has_irs = cfg.nlos_count() > 0;
    let mut design_info = None;
    let mut converged = true;
    let phases: Option<Vec<Vec<f64>>> = if has_irs && options.optimize {
        let designed = build_scene(cfg, None)
            .and_then(|scene| scene.design_scenario(sigma2))
            .and_then(|scenario| alternating_optimize(&scenario, &options.optimizer));
        match designed {
            Ok(result) => {
                design_info = Some(PointDesign {
                    residual: result.constraint_residual,
                    iterations: result.iterations_used,
                    objective_trace: result.objective_trace.clone(),
                });
                Some(result.optimal_phases)
            }
            Err(Error::NonConvergence {
                residual,
                objective_trace,
                ..
            }) => {
                converged = false;
                design_info = Some(PointDesign {
                    residual,
                    iterations: 0,
                    objective_trace,
                });
                None
            }
            Err(_) => {
                converged = false;
                None
            }
        }
    } else {
        None
    };

    match metrics_at_phases(cfg, sigma2, phases.as_deref()) {
        Ok((total, a, n, s)) => PointMetrics {
            trace_crlb: total,
            trace_alpha_block: a,
            trace_nu_block: n,
            surrogate: s,
            converged,
            design: design_info,
        },
        Err(_) => PointMetrics {
            // singular FIM at this point: record the fact, keep sweeping
            trace_crlb: f64::INFINITY,
            trace_alpha_block: f64::INFINITY,
            trace_nu_block: f64::INFINITY,
            surrogate: f64::INFINITY,
            converged: false,
            design: design_info,
        },
    }
}

/// Noise-variance sweep: one design (at `sigma^2 = 1`) per scenario
/// variant, then exact rescaling across the grid.
pub fn run_sigma_sweep(
    cfg: &ScenarioConfig,
    sigma2_grid: &[f64],
    options: &SweepOptions,
) -> Result<Vec<SweepResult>> {
    if sigma2_grid.is_empty() {
        return Err(Error::invalid("sigma^2 grid is empty"));
    }
    if sigma2_grid.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
        return Err(Error::invalid("sigma^2 grid values must be positive"));
    }
    cfg.validate()?;
    let digest = cfg.digest();
    options
        .variants
        .par_iter()
        .map(|variant| {
            let vcfg = cfg.truncated_to(variant.path_count())?;
            let base = evaluate_point(&vcfg, 1.0, options);
            let points = sigma2_grid
                .iter()
                .map(|&s2| PointMetrics {
                    trace_crlb: base.trace_crlb * s2,
                    trace_alpha_block: base.trace_alpha_block * s2,
                    trace_nu_block: base.trace_nu_block * s2,
                    surrogate: base.surrogate * s2,
                    converged: base.converged,
                    design: base.design.clone(),
                })
                .collect();
            Ok(SweepResult {
                axis_name: "sigma2".to_string(),
                axis_values: sigma2_grid.to_vec(),
                scenario: variant.label(),
                points,
                seed: cfg.seed,
                config_digest: digest.clone(),
            })
        })
        .collect()
}

/// Link-strength-ratio sweep at fixed noise: the reflectivity scaling
/// changes per point, so each point re-draws and re-designs.
pub fn run_gamma_sweep(
    cfg: &ScenarioConfig,
    gamma_grid: &[f64],
    options: &SweepOptions,
) -> Result<Vec<SweepResult>> {
    if gamma_grid.is_empty() {
        return Err(Error::invalid("gamma grid is empty"));
    }
    if gamma_grid.iter().any(|&g| !(g.is_finite() && g > 0.0)) {
        return Err(Error::invalid("gamma grid values must be positive"));
    }
    cfg.validate()?;
    let digest = cfg.digest();
    options
        .variants
        .iter()
        .map(|variant| {
            let vcfg = cfg.truncated_to(variant.path_count())?;
            let points: Vec<PointMetrics> = gamma_grid
                .par_iter()
                .map(|&gamma| {
                    let mut pcfg = vcfg.clone();
                    pcfg.gamma = gamma;
                    evaluate_point(&pcfg, cfg.sigma2, options)
                })
                .collect();
            Ok(SweepResult {
                axis_name: "gamma".to_string(),
                axis_values: gamma_grid.to_vec(),
                scenario: variant.label(),
                points,
                seed: cfg.seed,
                config_digest: digest.clone(),
            })
        })
        .collect()
}

/// Writes the sweep results as CSV: one row per (scenario, axis value),
/// deterministic order, 17-significant-digit floats.
pub fn emit_csv(results: &[SweepResult], path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    writeln!(
        out,
        "axis,scenario,trace_crlb,trace_alpha_block,trace_nu_block,surrogate,converged,seed"
    )?;
    for result in results {
        for (axis, point) in result.axis_values.iter().zip(&result.points) {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                fmt_float(*axis),
                result.scenario,
                fmt_float(point.trace_crlb),
                fmt_float(point.trace_alpha_block),
                fmt_float(point.trace_nu_block),
                fmt_float(point.surrogate),
                point.converged,
                result.seed
            )?;
        }
    }
    out.flush()?;
    Ok(())
}

fn fmt_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.17e}")
    } else {
        format!("{v}")
    }
}

/// Parses a grid spec `start:stop:lin|log:count` into explicit values.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 4 {
        return Err(Error::invalid(format!(
            "grid `{spec}` must be start:stop:lin|log:count"
        )));
    }
    let start: f64 = parts[0]
        .parse()
        .map_err(|_| Error::invalid(format!("bad grid start `{}`", parts[0])))?;
    let stop: f64 = parts[1]
        .parse()
        .map_err(|_| Error::invalid(format!("bad grid stop `{}`", parts[1])))?;
    let count: usize = parts[3]
        .parse()
        .map_err(|_| Error::invalid(format!("bad grid count `{}`", parts[3])))?;
    if count < 2 {
        return Err(Error::invalid("grid needs at least two points"));
    }
    match parts[2] {
        "lin" => {
            let step = (stop - start) / (count - 1) as f64;
            Ok((0..count).map(|i| start + step * i as f64).collect())
        }
        "log" => {
            if start <= 0.0 || stop <= 0.0 {
                return Err(Error::invalid("log grid endpoints must be positive"));
            }
            let (l0, l1) = (start.ln(), stop.ln());
            let step = (l1 - l0) / (count - 1) as f64;
            Ok((0..count).map(|i| (l0 + step * i as f64).exp()).collect())
        }
        other => Err(Error::invalid(format!(
            "grid scale `{other}` must be lin or log"
        ))),
    }
}
