use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use distill_lab::denoiser::{read_checkpoint, train, write_checkpoint};
use distill_lab::{Denoiser, Error, TwoMarginalDataset};

use crate::config::{ExperimentConfig, SeedStream};
use crate::output::{create_dir, float};
use crate::CliError;

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: Denoiser,
    /// Pre-update loss of every training step.
    pub losses: Vec<f64>,
}

/// Samples the dataset and trains a fresh model, all seeded from the config.
pub fn train_model(cfg: &ExperimentConfig) -> anyhow::Result<TrainedModel> {
    let schedule = cfg.schedule()?;
    let data = TwoMarginalDataset::sample(
        cfg.dataset.n,
        &cfg.class_params()?,
        cfg.seed_for(SeedStream::Dataset),
    )?;
    let mut model = Denoiser::new(cfg.arch(), cfg.seed_for(SeedStream::ModelInit))?;
    let losses = train(&mut model, &data, &schedule, &cfg.train_config(), |_, _| {}).map_err(
        |e| match e {
            Error::TrainingDiverged { step, .. } => anyhow::Error::new(CliError::Divergence(
                format!("training diverged at step {step}"),
            )),
            other => other.into(),
        },
    )?;
    Ok(TrainedModel { model, losses })
}

/// Writes the checkpoint and the `step,loss` log into `dir`.
pub fn write_trained(
    cfg: &ExperimentConfig,
    trained: &TrainedModel,
    dir: &Path,
) -> anyhow::Result<PathBuf> {
    create_dir(dir)?;
    let schedule = cfg.schedule()?;
    let path = dir.join(CHECKPOINT_FILE);
    let mut w = BufWriter::new(
        File::create(&path).with_context(|| format!("creating {}", path.display()))?,
    );
    write_checkpoint(&mut w, &trained.model, &schedule)?;
    w.flush()?;

    let log_path = dir.join(TRAIN_LOG_FILE);
    let mut log = csv::Writer::from_path(&log_path)
        .with_context(|| format!("creating {}", log_path.display()))?;
    log.write_record(["step", "loss"])?;
    for (step, loss) in trained.losses.iter().enumerate() {
        log.write_record([step.to_string(), float(*loss)])?;
    }
    log.flush()?;
    Ok(path)
}

/// Reads a checkpoint, rejecting it unless it was trained on the config's
/// schedule.
pub fn load_checkpoint(path: &Path, cfg: &ExperimentConfig) -> anyhow::Result<Denoiser> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let (header, model) = read_checkpoint(&mut BufReader::new(file))
        .with_context(|| format!("reading {}", path.display()))?;
    header
        .check_schedule(&cfg.schedule()?)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(model)
}

/// Loads `checkpoint` when given, otherwise trains a model and saves it
/// under `out`.
pub fn obtain_model(
    cfg: &ExperimentConfig,
    checkpoint: Option<&Path>,
    out: &Path,
) -> anyhow::Result<Denoiser> {
    match checkpoint {
        Some(path) => load_checkpoint(path, cfg),
        None => {
            let trained = train_model(cfg)?;
            write_trained(cfg, &trained, out)?;
            Ok(trained.model)
        }
    }
}
