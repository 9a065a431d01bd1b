//! Command-line front end.
//!
//! Exit status: 0 success, 1 a requested verification failed, 2 invalid
//! configuration or model, 3 numerical or internal error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::analysis::{Lab, Selector, VerificationReport};
use crate::config::RunConfig;
use crate::cramer::solve_cramer_point;
use crate::dp::{check_tilt_identity, tv_distance};
use crate::error::{LabError, Result};
use crate::harmonic::{
    build_tables, c_harmonicity_residual, qsd_identity_residual, v_harmonicity_residual,
};
use crate::model::build_model;
use crate::report::{fmt_f64, run_id, sha256_hex, ArtifactWriter};
use crate::simulate::{is_survival, mc_survival, z_chain_replicas, McConfig, ZChain};
use crate::spectral::{qsd_sweep, truncated_kernel};
use crate::whiten::whiten;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "conelab", version, about = "Killed random walks in cones: exact DP, Monte Carlo and limit-law checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `pipeline.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `pipeline.workers`.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Overrides `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cramér point, rate c and tilted law.
    Cramer(Common),
    /// Covariance, whitening matrix, correlation and degree p.
    Whiten(Common),
    /// Builds and exports the harmonic tables V, V′, U, U′.
    Harmonic(Common),
    /// Survival series and statistics from the DP oracle.
    Dp(Common),
    /// Direct, importance-sampling and conditioned-chain Monte Carlo.
    Simulate(Common),
    /// Quasistationary distributions over the configured window radii.
    Qsd(Common),
    /// Runs one verification selector, or `all`.
    Verify {
        selector: String,
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Cramer(_) => "cramer",
            Command::Whiten(_) => "whiten",
            Command::Harmonic(_) => "harmonic",
            Command::Dp(_) => "dp",
            Command::Simulate(_) => "simulate",
            Command::Qsd(_) => "qsd",
            Command::Verify { .. } => "verify",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Cramer(c)
            | Command::Whiten(c)
            | Command::Harmonic(c)
            | Command::Dp(c)
            | Command::Simulate(c)
            | Command::Qsd(c) => c,
            Command::Verify { common, .. } => common,
        }
    }
}

struct Ctx {
    cfg: RunConfig,
    config_path: PathBuf,
    config_sha: String,
    seed: u64,
    workers: usize,
    out: ArtifactWriter,
    stdout: String,
}

impl Ctx {
    fn say(&mut self, line: impl AsRef<str>) {
        self.stdout.push_str(line.as_ref());
        self.stdout.push('\n');
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config: String,
    config_sha256: &'a str,
    seed: u64,
    workers: usize,
    version: &'static str,
    files: Vec<String>,
}

/// Parses arguments, runs the command and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok((status, text)) => {
            print!("{text}");
            status
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                EXIT_CONFIG
            } else {
                EXIT_NUMERIC
            }
        }
    }
}

fn execute(command: &Command) -> Result<(i32, String)> {
    let common = command.common();
    let (cfg, text) = RunConfig::load(&common.config)?;
    let seed = common.seed.unwrap_or(cfg.pipeline.seed);
    let workers = common.workers.unwrap_or(cfg.pipeline.workers);
    if workers == 0 {
        return Err(LabError::Config("--workers must be at least 1".into()));
    }
    let selector = match command {
        Command::Verify { selector, .. } => selector.as_str(),
        _ => "",
    };
    let id = run_id(format!("{}\n{selector}\n{seed}\n{workers}\n{text}", command.name()).as_bytes());
    let dir = common.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    let out = ArtifactWriter::new(&dir, command.name(), &id)
        .map_err(|e| LabError::Config(format!("output directory '{}': {e}", dir.display())))?;
    let mut ctx = Ctx {
        cfg,
        config_path: common.config.clone(),
        config_sha: sha256_hex(text.as_bytes()),
        seed,
        workers,
        out,
        stdout: String::new(),
    };
    let status = match command {
        Command::Cramer(_) => cmd_cramer(&mut ctx)?,
        Command::Whiten(_) => cmd_whiten(&mut ctx)?,
        Command::Harmonic(_) => cmd_harmonic(&mut ctx)?,
        Command::Dp(_) => cmd_dp(&mut ctx)?,
        Command::Simulate(_) => cmd_simulate(&mut ctx)?,
        Command::Qsd(_) => cmd_qsd(&mut ctx)?,
        Command::Verify { selector, .. } => cmd_verify(&mut ctx, selector)?,
    };
    write_manifest(&mut ctx, command.name())?;
    Ok((status, ctx.stdout))
}

fn write_manifest(ctx: &mut Ctx, command: &str) -> Result<()> {
    let files = ctx
        .out
        .written()
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    let manifest = Manifest {
        command,
        config: ctx.config_path.display().to_string(),
        config_sha256: &ctx.config_sha,
        seed: ctx.seed,
        workers: ctx.workers,
        version: env!("CARGO_PKG_VERSION"),
        files,
    };
    let path = ctx.out.write_json("_manifest.json", &manifest)?;
    let line = format!("wrote {}", display_name(&path));
    ctx.say(line);
    Ok(())
}

fn display_name(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{:.6}", x + 0.0)).collect();
    format!("({})", parts.join(", "))
}

fn lab(ctx: &Ctx) -> Result<Lab> {
    Lab::new(ctx.cfg.step_law()?, ctx.cfg.model.cone.clone(), ctx.cfg.verify_options())
}

fn cmd_cramer(ctx: &mut Ctx) -> Result<i32> {
    let law = ctx.cfg.step_law()?;
    let model = build_model(&law, &ctx.cfg.model.cone)?;
    let cd = solve_cramer_point(&law)?;
    ctx.say(format!("h = {}", fmt_vec(&cd.h)));
    ctx.say(format!("c = {:.6}", cd.c));
    ctx.say("tilted law:");
    for (z, p) in cd.tilted.iter() {
        ctx.say(format!("  {z:?}: {p:.6}"));
    }
    if let Some(period) = model.period.filter(|&p| p > 1) {
        ctx.say(format!("note: walk has period {period}"));
    }
    ctx.out
        .write_json(".json", &json!({ "model": model, "cramer": cd }))?;
    Ok(EXIT_OK)
}

fn cmd_whiten(ctx: &mut Ctx) -> Result<i32> {
    let law = ctx.cfg.step_law()?;
    build_model(&law, &ctx.cfg.model.cone)?;
    let cd = solve_cramer_point(&law)?;
    let w = whiten(&cd.tilted, &ctx.cfg.model.cone, ctx.cfg.pipeline.whitening)?;
    let d = w.cov.nrows();
    let rows = |m: &nalgebra::DMatrix<f64>| -> Vec<String> {
        (0..d)
            .map(|i| fmt_vec(&(0..d).map(|j| m[(i, j)]).collect::<Vec<_>>()))
            .collect()
    };
    ctx.say(format!("cov = [{}]", rows(&w.cov).join(", ")));
    ctx.say(format!("M = [{}]", rows(&w.m).join(", ")));
    if let Some(a) = w.alpha {
        ctx.say(format!("alpha = {a:.6}"));
    }
    match w.p.value() {
        Some(p) => ctx.say(format!("p = {p:.6}")),
        None => ctx.say("p = to be fitted"),
    }
    ctx.out.write_json(".json", &w)?;
    Ok(EXIT_OK)
}

fn cmd_harmonic(ctx: &mut Ctx) -> Result<i32> {
    let law = ctx.cfg.step_law()?;
    let cone = ctx.cfg.model.cone.clone();
    build_model(&law, &cone)?;
    let cd = solve_cramer_point(&law)?;
    let w = whiten(&cd.tilted, &cone, ctx.cfg.pipeline.whitening)?;
    let p = &ctx.cfg.pipeline;
    let t = build_tables(&cd, &w, &cone, p.harmonic_window, p.harmonic_iter)?;
    let summary = json!({
        "window": p.harmonic_window,
        "p": t.p,
        "kappa": t.kappa,
        "converged": t.converged,
        "convergence_residual": t.convergence_residual,
        "iterations": t.iterations,
        "growth_constant": t.growth_constant,
        "v_harmonicity_residual": v_harmonicity_residual(&t, &cd.tilted, &cone)?,
        "c_harmonicity_residual": c_harmonicity_residual(&t, &law, &cone, cd.c)?,
        "qsd_identity_residual": qsd_identity_residual(&t, &law, &cone, cd.c)?,
    });
    if !t.converged {
        ctx.say(format!(
            "warning: V iteration stopped at residual {:e}",
            t.convergence_residual
        ));
    }
    ctx.say(format!("kappa = {}", fmt_f64(t.kappa.unwrap_or(f64::NAN))));
    let mut csv = Vec::new();
    t.write_csv(&mut csv)?;
    let path = ctx.out.write(".csv", &csv)?;
    ctx.say(format!("wrote {}", display_name(&path)));
    ctx.out.write_json(".json", &summary)?;
    Ok(EXIT_OK)
}

fn cmd_dp(ctx: &mut Ctx) -> Result<i32> {
    let lab = lab(ctx)?;
    let s = lab.main_series()?;
    let n_hi = lab.opts.n_hi;
    let fit = lab.tail_fit()?;
    let identity = check_tilt_identity(
        &lab.law,
        &lab.cramer,
        &lab.cone,
        &lab.opts.x0,
        20.min(s.n_max),
        lab.opts.window,
    )?;
    let exit_law: Vec<_> = s
        .merged_exit_law(n_hi, lab.period())?
        .into_iter()
        .map(|(y, v)| json!({ "y": y, "prob": v }))
        .collect();
    ctx.say(format!("P(tau > 1) = {}", fmt_f64(s.raw_survival(1)?)));
    ctx.say(format!("hazard at n = {n_hi}: {:.6}", s.hazard(n_hi)?));
    ctx.say(format!(
        "tail fit: c_hat = {:.6}, exponent_hat = {:.4}",
        fit.c_hat, fit.exponent_hat
    ));
    let mut csv = Vec::new();
    s.write_csv(&mut csv)?;
    let path = ctx.out.write(".csv", &csv)?;
    ctx.say(format!("wrote {}", display_name(&path)));
    ctx.out.write_json(
        ".json",
        &json!({
            "x0": s.x0,
            "n_max": s.n_max,
            "rescale": s.rescale,
            "period": lab.period(),
            "hazard": { "n": n_hi, "value": s.hazard(n_hi)? },
            "exit_pmf_log": { "n": n_hi, "value": s.exit_pmf_log(n_hi)? },
            "max_edge_ratio": s.max_edge_ratio,
            "tilt_identity_max_error": identity,
            "tail_fit": fit,
            "exit_law": exit_law,
        }),
    )?;
    Ok(EXIT_OK)
}

fn cmd_simulate(ctx: &mut Ctx) -> Result<i32> {
    let lab = lab(ctx)?;
    let sim = ctx.cfg.simulate.clone();
    let mc = McConfig::new(sim.samples, ctx.seed, ctx.workers);
    let x0 = lab.opts.x0.clone();
    let direct = mc_survival(&lab.law, &lab.cone, &x0, sim.n, &mc)?;
    let is = is_survival(&lab.cramer, &lab.cone, &x0, sim.n, &mc)?;
    let tables = lab.tables()?;
    let chain = ZChain::new(&lab.law, &lab.cramer, &lab.cone, tables)?;
    let zcfg = McConfig::new(sim.z_paths, ctx.seed, ctx.workers);
    let (z, transience) = z_chain_replicas(&chain, &lab.cone, &x0, sim.z_steps, sim.z_early, &zcfg)?;
    let mut lines = String::new();
    for est in [&direct, &is] {
        let _ = writeln!(lines, "{}", serde_json::to_string(est).expect("estimate serializes"));
        ctx.say(format!(
            "{}: {} ± {} ({} samples)",
            est.estimator,
            fmt_f64(est.value),
            fmt_f64(est.std_error),
            est.n_samples
        ));
    }
    let zrec = json!({
        "estimator": "z_chain",
        "max_row_deviation": z.max_row_deviation,
        "stayed_in_cone": z.stayed_in_cone,
        "truncated_paths": z.truncated_paths,
        "transience": transience,
        "n_samples": z.n_paths,
        "seed": z.seed,
        "workers": z.workers,
    });
    let _ = writeln!(lines, "{zrec}");
    ctx.say(format!(
        "z chain: max row deviation {:e}, mean gain {:.4} ± {:.4}",
        z.max_row_deviation, transience.mean_gain, transience.std_error
    ));
    ctx.out.write(".jsonl", lines.as_bytes())?;
    Ok(EXIT_OK)
}

fn cmd_qsd(ctx: &mut Ctx) -> Result<i32> {
    let lab = lab(ctx)?;
    let q = &ctx.cfg.qsd;
    let results = qsd_sweep(&lab.law, &lab.cone, &q.radii, q.tol, q.max_iter)?;
    let tables = lab.tables()?;
    let mut records = Vec::new();
    for r in &results {
        let w = truncated_kernel(&lab.law, &lab.cone, r.radius)?.window().clone();
        let mut target: Vec<f64> = (0..w.len())
            .map(|i| {
                if w.is_inside(i) {
                    tables.u_prime_at(&w.point(i)).unwrap_or(0.0)
                } else {
                    0.0
                }
            })
            .collect();
        crate::dp::normalize(&mut target);
        records.push(json!({
            "result": r,
            "c": lab.cramer.c,
            "lambda_minus_c": r.lambda - lab.cramer.c,
            "tv_to_harmonic_profile": tv_distance(&r.mu, &target),
        }));
    }
    for r in &results {
        ctx.say(format!(
            "L = {}: lambda = {:.6}, residual {:e}, {} iterations",
            r.radius, r.lambda, r.residual, r.iterations
        ));
    }
    if let Some(last) = results.last() {
        let w = truncated_kernel(&lab.law, &lab.cone, last.radius)?.window().clone();
        let mut csv = Vec::new();
        last.write_csv(&w, &mut csv)?;
        ctx.out.write(".csv", &csv)?;
    }
    ctx.out.write_json(".json", &records)?;
    Ok(EXIT_OK)
}

fn cmd_verify(ctx: &mut Ctx, selector: &str) -> Result<i32> {
    let sels: Vec<Selector> = if selector == "all" {
        Selector::ALL.to_vec()
    } else {
        vec![selector.parse()?]
    };
    let lab = lab(ctx)?;
    let reports = lab.verify_many(&sels)?;
    let mut lines = String::new();
    let mut csv = String::from(VerificationReport::csv_header());
    csv.push('\n');
    for r in &reports {
        let _ = writeln!(lines, "{}", serde_json::to_string(r).expect("report serializes"));
        csv.push_str(&r.csv_row());
        csv.push('\n');
        ctx.say(format!(
            "{} {}: deviation {:.4e} (tolerance {})",
            if r.pass { "PASS" } else { "FAIL" },
            r.check,
            r.deviation,
            r.tolerance
        ));
    }
    ctx.out.write(".jsonl", lines.as_bytes())?;
    ctx.out.write(".csv", csv.as_bytes())?;
    Ok(if reports.iter().all(|r| r.pass) {
        EXIT_OK
    } else {
        EXIT_VERIFY
    })
}
