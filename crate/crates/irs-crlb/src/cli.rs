//! Command-line interface: experiment sweeps, one-off phase design, and
//! the self-check suite.

use clap::{Args, Parser, Subcommand};
use std::io::Write;
use std::path::PathBuf;

use crate::error::Error;
use crate::fisher::{
    assemble_full_fim, crlb, fim_alpha_alpha, fim_alpha_nu, fim_from_h, fim_nu_nu, fim_oracle,
    model_mean_fn, no_irs_fim, stack_zeta, FimBlocks,
};
use crate::geometry::ChannelSet;
use crate::optimizer::{alternating_optimize, OptimizerConfig};
use crate::scenario::{build_scene, load_scenario, ScenarioConfig};
use crate::signal::{sensing_matrix, sensing_matrix_derivative, NoiseModel, RadarParams};
use crate::sweep::{
    emit_csv, parse_grid, run_gamma_sweep, run_sigma_sweep, ScenarioVariant, SweepOptions,
};

#[derive(Parser)]
#[command(
    name = "irs-crlb",
    about = "CRLB analysis and IRS phase design for multi-IRS pulse-Doppler radar",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Sweep a scene parameter and emit per-scenario CRLB series as CSV.
    Sweep(SweepArgs),
    /// Design IRS phase shifts for one scene and emit them as CSV.
    Design(DesignArgs),
    /// Run the built-in oracle checks (analytic FIM vs finite differences,
    /// reformulation equivalence, closed forms, trace bound).
    Verify,
}

#[derive(Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub scene: SceneSource,
    /// Sweep axis: sigma2 or gamma.
    #[arg(long)]
    pub axis: String,
    /// Grid spec start:stop:lin|log:count, e.g. 1e-3:1e1:log:25.
    #[arg(long)]
    pub grid: String,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
    /// Scenario variants, comma separated (default: all derivable from the
    /// config, e.g. no-irs,1-irs,3-irs).
    #[arg(long, value_delimiter = ',')]
    pub scenarios: Vec<String>,
    /// Skip phase design and evaluate the identity-phase baseline.
    #[arg(long)]
    pub no_optimize: bool,
    /// Optional JSON-lines log of per-point optimizer traces.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[command(flatten)]
    pub opt: OptimizerArgs,
}

#[derive(Args)]
pub struct DesignArgs {
    #[command(flatten)]
    pub scene: SceneSource,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV path for the designed phases.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub opt: OptimizerArgs,
}

#[derive(Args)]
pub struct SceneSource {
    /// Built-in preset: paper-1irs, paper-3irs or paper-no-irs.
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    /// Scenario config file (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl SceneSource {
    pub fn load(&self) -> anyhow::Result<ScenarioConfig> {
        match (&self.preset, &self.config) {
            (Some(name), None) => Ok(ScenarioConfig::preset(name)?),
            (None, Some(path)) => Ok(load_scenario(path)?),
            (None, None) => Ok(ScenarioConfig::preset("paper-3irs")?),
            (Some(_), Some(_)) => unreachable!("clap enforces exclusivity"),
        }
    }
}

#[derive(Args)]
pub struct OptimizerArgs {
    /// Random restarts for the alternating design.
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Constraint residual target.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Alternating sweeps per penalty round.
    #[arg(long)]
    pub max_iters: Option<usize>,
}

impl OptimizerArgs {
    fn apply(&self, mut cfg: OptimizerConfig) -> OptimizerConfig {
        if let Some(r) = self.restarts {
            cfg.restarts = r;
        }
        if let Some(e) = self.eps {
            cfg.residual_eps = e;
        }
        if let Some(m) = self.max_iters {
            cfg.max_outer_iters = m;
        }
        cfg
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Sweep(args) => run_sweep(args),
        Command::Design(args) => run_design(args),
        Command::Verify => run_verify(),
    }
}

fn run_sweep(args: SweepArgs) -> anyhow::Result<()> {
    let mut cfg = args.scene.load()?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let grid = parse_grid(&args.grid)?;

    let mut options = SweepOptions::for_config(&cfg);
    options.optimize = !args.no_optimize;
    options.optimizer = args.opt.apply(options.optimizer);
    options.optimizer.seed = cfg.seed;
    if !args.scenarios.is_empty() {
        options.variants = args
            .scenarios
            .iter()
            .map(|s| ScenarioVariant::parse(s))
            .collect::<Result<Vec<_>, _>>()?;
    }

    let results = match args.axis.as_str() {
        "sigma2" => run_sigma_sweep(&cfg, &grid, &options)?,
        "gamma" => run_gamma_sweep(&cfg, &grid, &options)?,
        other => {
            return Err(Error::invalid(format!(
                "unknown sweep axis `{other}` (expected sigma2 or gamma)"
            ))
            .into())
        }
    };
    emit_csv(&results, &args.out)?;

    if let Some(trace_path) = &args.trace {
        let mut out = std::io::BufWriter::new(std::fs::File::create(trace_path)?);
        for r in &results {
            for (axis, point) in r.axis_values.iter().zip(&r.points) {
                if let Some(d) = &point.design {
                    let record = serde_json::json!({
                        "scenario": r.scenario,
                        "axis": r.axis_name,
                        "value": axis,
                        "converged": point.converged,
                        "residual": d.residual,
                        "iterations": d.iterations,
                        "objective_trace": d.objective_trace,
                    });
                    writeln!(out, "{record}")?;
                }
            }
        }
    }

    let rows: usize = results.iter().map(|r| r.points.len()).sum();
    println!(
        "wrote {} rows ({} scenarios x {} grid points) to {}",
        rows,
        results.len(),
        grid.len(),
        args.out.display()
    );
    Ok(())
}

fn run_design(args: DesignArgs) -> anyhow::Result<()> {
    let mut cfg = args.scene.load()?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if cfg.nlos_count() == 0 {
        return Err(Error::invalid("the scene has no IRS to design").into());
    }
    let opt_cfg = args.opt.apply(OptimizerConfig {
        seed: cfg.seed,
        ..OptimizerConfig::default()
    });

    let scene = build_scene(&cfg, None)?;
    let scenario = scene.design_scenario(cfg.sigma2)?;
    let result = alternating_optimize(&scenario, &opt_cfg)?;

    let mut out = std::io::BufWriter::new(std::fs::File::create(&args.out)?);
    writeln!(out, "irs,element,phase_radians")?;
    for (k, panel) in result.optimal_phases.iter().enumerate() {
        for (m, phase) in panel.iter().enumerate() {
            writeln!(out, "{},{},{:.17e}", k, m, phase)?;
        }
    }
    out.flush()?;

    println!("design converged: residual {:.3e}", result.constraint_residual);
    println!("achieved surrogate  : {:.6e}", result.achieved_surrogate);
    println!("achieved trace CRLB : {:.6e}", result.achieved_trace_crlb);
    println!("alternating sweeps  : {}", result.iterations_used);
    println!("phases written to   : {}", args.out.display());
    Ok(())
}

/// The oracle suite: the same checks the acceptance tests pin, runnable
/// from the shipped binary. Prints one line per check and fails the
/// process if any check fails.
fn run_verify() -> anyhow::Result<()> {
    let mut all_ok = true;
    let mut check = |name: &str, ok: bool, detail: String| {
        println!("{}: {name} ({detail})", if ok { "PASS" } else { "FAIL" });
        all_ok &= ok;
    };

    // 1. analytic FIM vs Slepian-Bangs finite differences
    let mut worst = 0.0f64;
    for k in [1usize, 2, 3] {
        for n in [8usize, 16] {
            for seed in 0..5u64 {
                let (scene, noise) = random_verify_scene(k, n, seed);
                let full = assemble_full_fim(&scene.blocks(&noise));
                let zeta = stack_zeta(&scene.alpha, &scene.nu);
                let oracle = fim_oracle(
                    model_mean_fn(&scene.radar, &scene.channels),
                    &noise,
                    &zeta,
                    1e-6,
                )?;
                let scale = full.amax().max(oracle.amax());
                worst = worst.max((&full - &oracle).amax() / scale);
            }
        }
    }
    check(
        "analytic FIM matches finite-difference oracle",
        worst < 1e-6,
        format!("max rel err {worst:.3e}"),
    );

    // 2. h-form equals the sensing-matrix path under white noise
    let mut worst = 0.0f64;
    for seed in 0..50u64 {
        let k = 1 + (seed as usize % 3);
        let (scene, _) = random_verify_scene(k, 16, seed);
        let sigma2 = 0.5 + 0.01 * seed as f64;
        let noise = NoiseModel::white(sigma2)?;
        let blocks = scene.blocks(&noise);
        let hf = fim_from_h(&scene.channels, &scene.radar, &scene.alpha, &scene.nu, sigma2)?;
        worst = worst
            .max((&blocks.f_aa - &hf.f_aa).amax() / blocks.f_aa.amax())
            .max((&blocks.f_nn - &hf.f_nn).amax() / blocks.f_nn.amax());
    }
    check(
        "h-parameterized FIM matches the sensing-matrix path",
        worst < 1e-10,
        format!("max rel err {worst:.3e}"),
    );

    // 3. closed no-IRS forms
    let radar8 = RadarParams::constant_waveform(8, 1.0)?;
    let radar4 = RadarParams::constant_waveform(4, 1.0)?;
    let one = num_complex::Complex64::new(1.0, 0.0);
    let (f_aa0, _) = no_irs_fim(&radar8, one, one, 0.2, 1.0)?;
    let (_, f_nn0) = no_irs_fim(&radar4, one, one, 0.2, 1.0)?;
    check(
        "no-IRS closed forms",
        f_aa0[(0, 0)] == 16.0 && f_aa0[(1, 1)] == 16.0 && f_aa0[(0, 1)] == 0.0 && f_nn0 == 28.0,
        format!("f_aa0 diag {}, f_nn0 {}", f_aa0[(0, 0)], f_nn0),
    );

    // 4. block-trace bound on nonsingular scenarios
    let mut checked = 0usize;
    let mut ok = true;
    let mut seed = 0u64;
    while checked < 100 {
        let k = 1 + (seed as usize % 3);
        let (scene, noise) = random_verify_scene(k, 16, 1000 + seed);
        seed += 1;
        let full = assemble_full_fim(&scene.blocks(&noise));
        match crlb(&full) {
            Ok(r) => {
                checked += 1;
                if r.surrogate > r.trace_total * (1.0 + 1e-9) {
                    ok = false;
                }
            }
            Err(Error::SingularFim { .. }) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    check(
        "surrogate lower-bounds Tr(CRLB) on 100 scenarios",
        ok,
        format!("{checked} nonsingular scenarios"),
    );

    if all_ok {
        println!("verify: all checks passed");
        Ok(())
    } else {
        Err(anyhow::anyhow!("verification failed"))
    }
}

struct VerifyScene {
    radar: RadarParams,
    channels: ChannelSet,
    alpha: Vec<num_complex::Complex64>,
    nu: Vec<f64>,
}

impl VerifyScene {
    fn blocks(&self, noise: &NoiseModel) -> FimBlocks {
        let a = sensing_matrix(&self.radar, &self.channels, &self.nu).expect("dims");
        let a_dot =
            sensing_matrix_derivative(&self.radar, &self.channels, &self.nu).expect("dims");
        FimBlocks::new(
            fim_alpha_alpha(&a, noise).expect("fim"),
            fim_alpha_nu(&a, &a_dot, noise, &self.alpha).expect("fim"),
            fim_nu_nu(&a_dot, noise, &self.alpha).expect("fim"),
        )
        .expect("blocks")
    }
}

fn random_verify_scene(k: usize, n: usize, seed: u64) -> (VerifyScene, NoiseModel) {
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut rand_c = |off: f64| {
        Complex64::new(
            rng.gen_range(-1.0..1.0) + off,
            rng.gen_range(-1.0..1.0),
        )
    };
    let h_nlos: Vec<Complex64> = (0..k).map(|_| rand_c(0.3) * 2.0).collect();
    let channels = ChannelSet::new(rand_c(0.2), h_nlos).expect("channels");
    let alpha: Vec<Complex64> = (0..=k).map(|_| rand_c(0.15)).collect();
    let mut rng2 = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x9e3779b97f4a7c15);
    let nu: Vec<f64> = (0..=k).map(|_| rng2.gen_range(-0.45..0.45)).collect();
    let radar = RadarParams::constant_waveform(n, 1.0).expect("radar");
    let noise = NoiseModel::white(0.7).expect("noise");
    (
        VerifyScene {
            radar,
            channels,
            alpha,
            nu,
        },
        noise,
    )
}
