use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::acceptance::run_acceptance;
use crate::config::ExperimentConfig;
use crate::figure2::{run_figure2, write_figure2};
use crate::invert::{invert_roundtrip, write_roundtrip, ROUNDTRIP_TOLERANCE};
use crate::model::{obtain_model, train_model, write_trained};
use crate::parallel::thread_pool;
use crate::sdedit::{sdedit_sweep, write_sdedit, MIN_SPEARMAN};
use crate::CliError;

#[derive(Debug, Clone, Parser)]
#[command(
    name = "distill-lab",
    version,
    about = "Score, delta-score and posterior distillation on a 2D toy diffusion model"
)]
pub struct Cli {
    /// TOML config; defaults apply to every missing key.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Train the conditional denoiser; writes model.ckpt and train_log.csv.
    Train,
    /// Invert points and regenerate them from their latents.
    InvertRoundtrip {
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        /// Number of points; defaults to inversion.points.
        #[arg(long)]
        points: Option<usize>,
        /// Exit nonzero if any error reaches the tolerance.
        #[arg(long)]
        check: bool,
    },
    /// Run SDS, DDS and PDS from source-class samples toward the target class.
    Figure2 {
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        /// Exit nonzero if an ordering check fails.
        #[arg(long)]
        check: bool,
    },
    /// Sweep SDEdit's starting ratio and report mean displacement.
    SdeditDemo {
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        /// Exit nonzero unless displacement rises with the ratio.
        #[arg(long)]
        check: bool,
    },
    /// Run the full acceptance suite.
    Check,
}

impl Cli {
    /// The config file (or defaults) with command-line overrides applied.
    pub fn resolve_config(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output.dir = out.clone();
        }
        Ok(cfg)
    }
}

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    let cfg = cli.resolve_config()?;
    let out = cfg.output.dir.clone();
    match &cli.command {
        Command::Train => cmd_train(&cfg, &out),
        Command::InvertRoundtrip {
            checkpoint,
            points,
            check,
        } => cmd_invert_roundtrip(&cfg, checkpoint.as_deref(), *points, *check, &out),
        Command::Figure2 { checkpoint, check } => {
            cmd_figure2(&cfg, checkpoint.as_deref(), *check, &out)
        }
        Command::SdeditDemo { checkpoint, check } => {
            cmd_sdedit_demo(&cfg, checkpoint.as_deref(), *check, &out)
        }
        Command::Check => cmd_check(&cfg),
    }
}

fn cmd_train(cfg: &ExperimentConfig, out: &Path) -> anyhow::Result<()> {
    let trained = train_model(cfg)?;
    let path = write_trained(cfg, &trained, out)?;
    let (first, last) = (trained.losses.first(), trained.losses.last());
    println!("wrote {}", path.display());
    if let (Some(first), Some(last)) = (first, last) {
        println!(
            "loss {first:.6} -> {last:.6} over {} steps",
            trained.losses.len()
        );
    }
    Ok(())
}

fn cmd_invert_roundtrip(
    cfg: &ExperimentConfig,
    checkpoint: Option<&Path>,
    points: Option<usize>,
    check: bool,
    out: &Path,
) -> anyhow::Result<()> {
    let model = obtain_model(cfg, checkpoint, out)?;
    let report = invert_roundtrip(cfg, &model, points.unwrap_or(cfg.inversion.points))?;
    let path = write_roundtrip(&report, out)?;
    let verdict = if report.passed() { "pass" } else { "fail" };
    println!(
        "{} points, max abs reconstruction error {:.3e} (tolerance {ROUNDTRIP_TOLERANCE:e}): {verdict}",
        report.rows.len(),
        report.max_error()
    );
    println!("wrote {}", path.display());
    if check && !report.passed() {
        return Err(
            CliError::CheckFailed(format!("round-trip error {:.3e}", report.max_error())).into(),
        );
    }
    Ok(())
}

fn cmd_figure2(
    cfg: &ExperimentConfig,
    checkpoint: Option<&Path>,
    check: bool,
    out: &Path,
) -> anyhow::Result<()> {
    let model = obtain_model(cfg, checkpoint, out)?;
    let outcome = run_figure2(cfg, &model, &thread_pool()?)?;
    let dir = out.join("figure2");
    write_figure2(&outcome, cfg, &dir)?;

    println!("objective  runs  diverged  displacement  |signed dist|  target side");
    for s in &outcome.summary.objectives {
        println!(
            "{:<9}  {:>4}  {:>8}  {:>12.4}  {:>13.4}  {:>11.2}",
            s.objective,
            s.n_runs,
            s.n_diverged,
            s.mean_displacement,
            s.mean_abs_signed_distance,
            s.frac_target_side
        );
    }
    let checks = outcome.summary.checks();
    for c in &checks {
        println!(
            "[{}] {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    println!("wrote {}", dir.display());

    if outcome.summary.any_diverged() {
        return Err(
            CliError::Divergence("at least one run diverged; see summary.csv".into()).into(),
        );
    }
    if check {
        if checks.is_empty() {
            return Err(
                CliError::CheckFailed("ordering checks need sds, dds and pds".into()).into(),
            );
        }
        if let Some(c) = checks.iter().find(|c| !c.passed) {
            return Err(CliError::CheckFailed(c.name.clone()).into());
        }
    }
    Ok(())
}

fn cmd_sdedit_demo(
    cfg: &ExperimentConfig,
    checkpoint: Option<&Path>,
    check: bool,
    out: &Path,
) -> anyhow::Result<()> {
    let model = obtain_model(cfg, checkpoint, out)?;
    let report = sdedit_sweep(cfg, &model)?;
    let path = write_sdedit(&report, out)?;
    println!("t0_ratio  mean displacement");
    for r in &report.rows {
        println!("{:>8.4}  {:>17.6}", r.t0_ratio, r.mean_displacement);
    }
    let rho = report.spearman();
    match rho {
        Some(p) => println!("spearman rank correlation {p:.4}"),
        None => println!("spearman rank correlation undefined for this grid"),
    }
    println!("wrote {}", path.display());
    if check && !rho.is_some_and(|p| p > MIN_SPEARMAN) {
        return Err(
            CliError::CheckFailed(format!("spearman {rho:?} not above {MIN_SPEARMAN}")).into(),
        );
    }
    Ok(())
}

fn cmd_check(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    println!("acceptance suite, master seed {}", cfg.seed);
    let results = run_acceptance(cfg, |r| println!("{r}"))?;
    let failed: Vec<String> = results
        .iter()
        .filter(|r| !r.passed)
        .map(|r| r.id.to_string())
        .collect();
    println!(
        "{} of {} criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!("criteria {}", failed.join(", "))).into())
    }
}
