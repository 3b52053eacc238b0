use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};
use log::{info, warn};
use serde_json::{json, Value};

use tgkrig::config::Paths;
use tgkrig::io;
use tgkrig::likelihood::{heuristic_gap, l_map};
use tgkrig::pipeline::{build_model, predict_rows, preprocess, run_fit, run_pod, simulate_truth};
use tgkrig::posterior::{alpha_seed, sample_theta, MapConfig, McmcConfig};
use tgkrig::sampling::gen_design;
use tgkrig::{AlphaProfile, CorrelationLengths, KrigingModel, MixturePredictor, RunConfig};

#[derive(Parser, Debug)]
#[command(
    name = "tgkrig",
    version,
    about = "Trans-Gaussian Kriging and POD curves"
)]
struct Cli {
    /// TOML configuration; defaults are used for anything left out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads, 0 for one per core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Directory that relative file paths refer to.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Maximin Latin hypercube design -> design.csv
    GenDesign,
    /// Synthetic outputs on design.csv -> observations.csv
    Simulate,
    /// Physical coordinates -> unit-cube observations.csv
    Preprocess,
    /// Pseudo-likelihoods of alpha over the grid -> alpha_profile.csv, theta draws
    FitAlpha,
    /// Posterior draws of theta at one alpha -> theta_draws_<alpha>.csv
    SampleTheta,
    /// Predictive summaries at the configured points -> predictions.csv
    Predict,
    /// POD curves -> pod_curve.csv
    Pod,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenDesign => "gen-design",
            Command::Simulate => "simulate",
            Command::Preprocess => "preprocess",
            Command::FitAlpha => "fit-alpha",
            Command::SampleTheta => "sample-theta",
            Command::Predict => "predict",
            Command::Pod => "pod",
        }
    }
}

struct RunContext {
    config: RunConfig,
    paths: Paths,
    out: PathBuf,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let config = match &cli.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => RunConfig::default(),
    };
    Ok(match cli.seed {
        Some(s) => config.with_seed(s),
        None => config,
    })
}

fn load_model(ctx: &RunContext) -> Result<(KrigingModel, Vec<f64>)> {
    let (design, z) = io::read_observations(&ctx.paths.observations)
        .with_context(|| format!("reading {}", ctx.paths.observations.display()))?;
    Ok((build_model(&ctx.config, design)?, z))
}

/// Configured alpha, else the argmax of the fitted profile.
fn resolve_alpha(ctx: &RunContext) -> Result<f64> {
    if let Some(a) = ctx.config.alpha {
        return Ok(a);
    }
    let profile = io::read_alpha_profile(&ctx.paths.alpha_profile).with_context(|| {
        format!(
            "no alpha configured and no profile at {}",
            ctx.paths.alpha_profile.display()
        )
    })?;
    let best = profile
        .argmax_log()
        .ok_or_else(|| anyhow!("profile has no L^LOG values"))?;
    Ok(profile.alphas[best])
}

fn draws_path(ctx: &RunContext, alpha: f64) -> PathBuf {
    ctx.out.join(io::theta_draws_file_name(alpha))
}

fn read_draws(ctx: &RunContext, alpha: f64) -> Result<Vec<CorrelationLengths>> {
    let path = draws_path(ctx, alpha);
    io::read_theta_draws(&path).with_context(|| format!("reading {}", path.display()))
}

fn gen_design_cmd(ctx: &RunContext) -> Result<Value> {
    let c = &ctx.config;
    let design = gen_design(c.n, c.r, c.seed)?;
    io::write_design(&ctx.paths.design, &design)?;
    Ok(json!({"n": design.n(), "r": design.r(), "file": ctx.paths.design}))
}

fn simulate_cmd(ctx: &RunContext) -> Result<Value> {
    let design = io::read_design(&ctx.paths.design)?;
    let z = simulate_truth(&design, ctx.config.basis, &ctx.config.truth)?;
    io::write_observations(&ctx.paths.observations, &design, &z)?;
    Ok(
        json!({"n": design.n(), "alpha_true": ctx.config.truth.alpha_true, "file": ctx.paths.observations}),
    )
}

fn preprocess_cmd(ctx: &RunContext) -> Result<Value> {
    let (points, z) = io::read_physical_observations(&ctx.paths.physical_observations)?;
    let unit = preprocess(&ctx.config, &points)?;
    let design = tgkrig::DesignSet::new(unit)?;
    io::write_observations(&ctx.paths.observations, &design, &z)?;
    Ok(json!({"n": design.n(), "file": ctx.paths.observations}))
}

fn fit_alpha_cmd(ctx: &RunContext) -> Result<Value> {
    let (model, z) = load_model(ctx)?;
    let fit = run_fit(&ctx.config, &model, &z).context("fitting alpha")?;
    io::write_alpha_profile(&ctx.paths.alpha_profile, &fit.profile)?;
    let mut written = 0;
    for d in fit.profile.draws.iter().flatten() {
        io::write_theta_draws(&draws_path(ctx, d.alpha), &d.draws)?;
        written += 1;
        for w in &d.warnings {
            warn!("alpha = {}: {w}", d.alpha);
        }
    }
    let missing = fit.profile.log_l_log.iter().filter(|v| v.is_none()).count();
    let gap = heuristic_gap(&fit.profile, 0.0, 1.0).ok();
    Ok(json!({
        "alpha_hat": fit.alpha_hat,
        "alpha_hat_map": fit.profile.argmax_map().map(|i| fit.profile.alphas[i]),
        "grid_points": fit.profile.len(),
        "missing_l_log": missing,
        "draw_files": written,
        "gap_mean": gap.map(|g| g.mean),
        "gap_sd": gap.map(|g| g.sd),
        "file": ctx.paths.alpha_profile,
    }))
}

fn sample_theta_cmd(ctx: &RunContext) -> Result<Value> {
    let (model, z) = load_model(ctx)?;
    let alpha = resolve_alpha(ctx)?;
    let seed = alpha_seed(ctx.config.mcmc.seed, alpha);
    // same start and seed as the chain run by fit-alpha at this alpha
    let init = if ctx.config.skip_map {
        None
    } else {
        let map = MapConfig {
            seed,
            ..ctx.config.map.clone()
        };
        match l_map(&z, alpha, &model, ctx.config.prior, &map) {
            Ok((_, theta)) => Some(theta),
            Err(e) => {
                warn!("no MAP start ({e})");
                None
            }
        }
    };
    let mcmc = McmcConfig {
        seed,
        ..ctx.config.mcmc.clone()
    };
    let draws = sample_theta(&z, alpha, &model, ctx.config.prior, &mcmc, init.as_ref())?;
    for w in &draws.warnings {
        warn!("{w}");
    }
    let path = draws_path(ctx, alpha);
    io::write_theta_draws(&path, &draws.draws)?;
    Ok(json!({
        "alpha": alpha,
        "draws": draws.draws.len(),
        "acceptance_rates": draws.acceptance_rates,
        "file": path,
    }))
}

fn predict_cmd(ctx: &RunContext) -> Result<Value> {
    let (model, z) = load_model(ctx)?;
    let alpha = resolve_alpha(ctx)?;
    let draws = read_draws(ctx, alpha)?;
    let points: Vec<Vec<f64>> = io::read_design(&ctx.paths.predict_points)?
        .points()
        .map(<[f64]>::to_vec)
        .collect();
    let predictor = MixturePredictor::from_thetas(&z, alpha, &draws, &model)?;
    let rows = predict_rows(&ctx.config, &predictor, &points)?;
    io::write_predictions(&ctx.paths.predictions, &rows)?;
    Ok(json!({"alpha": alpha, "points": rows.len(), "file": ctx.paths.predictions}))
}

/// Profile with draws attached for every grid value whose draws file exists.
fn profile_with_draws(ctx: &RunContext) -> Result<AlphaProfile> {
    let mut profile = io::read_alpha_profile(&ctx.paths.alpha_profile)?;
    for (i, &alpha) in profile.alphas.iter().enumerate() {
        if profile.log_l_log[i].is_none() {
            continue;
        }
        let draws = read_draws(ctx, alpha)?;
        profile.draws[i] = Some(tgkrig::ThetaDraws {
            alpha,
            draws,
            n_iterations: ctx.config.mcmc.n_iterations,
            thin: ctx.config.mcmc.thin,
            burn_in: ctx.config.mcmc.burn_in,
            seed: alpha_seed(ctx.config.mcmc.seed, alpha),
            acceptance_rates: Vec::new(),
            warnings: Vec::new(),
        });
    }
    Ok(profile)
}

fn integrated_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map_or("pod_curve".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}_integrated.csv"))
}

fn pod_cmd(ctx: &RunContext) -> Result<Value> {
    let (model, z) = load_model(ctx)?;
    let alpha = resolve_alpha(ctx)?;
    let draws = read_draws(ctx, alpha)?;
    let profile = if ctx.config.integrate_alpha {
        Some(profile_with_draws(ctx)?)
    } else {
        None
    };
    let out = run_pod(&ctx.config, &model, &z, alpha, &draws, profile.as_ref())?;
    io::write_pod_curve(&ctx.paths.pod_curve, &out.fixed)?;
    let mut summary = json!({
        "alpha": alpha,
        "grid_points": out.fixed.a_grid.len(),
        "n_mc": out.fixed.n_mc,
        "file": ctx.paths.pod_curve,
    });
    if let Some((curve, weights)) = out.integrated {
        let path = integrated_path(&ctx.paths.pod_curve);
        io::write_pod_curve(&path, &curve)?;
        summary["integrated_file"] = json!(path);
        summary["alpha_weights"] = json!(weights);
    }
    Ok(summary)
}

fn run(cli: &Cli) -> Result<Value> {
    let config = load_config(cli)?;
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let ctx = RunContext {
        paths: config.paths.resolve(&cli.out),
        config,
        out: cli.out.clone(),
    };
    match cli.command {
        Command::GenDesign => gen_design_cmd(&ctx),
        Command::Simulate => simulate_cmd(&ctx),
        Command::Preprocess => preprocess_cmd(&ctx),
        Command::FitAlpha => fit_alpha_cmd(&ctx),
        Command::SampleTheta => sample_theta_cmd(&ctx),
        Command::Predict => predict_cmd(&ctx),
        Command::Pod => pod_cmd(&ctx),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let start = Instant::now();
    info!("running {}", cli.command.name());
    let result = run(&cli);
    let elapsed = start.elapsed().as_secs_f64();
    match result {
        Ok(details) => {
            eprintln!(
                "{}",
                json!({"command": cli.command.name(), "status": "ok", "seconds": elapsed, "details": details})
            );
        }
        Err(e) => {
            eprintln!(
                "{}",
                json!({"command": cli.command.name(), "status": "error", "seconds": elapsed, "error": format!("{e:#}")})
            );
            std::process::exit(1);
        }
    }
}
