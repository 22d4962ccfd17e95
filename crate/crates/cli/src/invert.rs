use std::path::{Path, PathBuf};

use anyhow::Context;
use distill_lab::latent::{generate_with_latents, invert};
use distill_lab::{rng, Label, NoisePredictor, Vec2};

use crate::config::{ExperimentConfig, SeedStream};
use crate::output::{create_dir, float};

pub const ROUNDTRIP_TOLERANCE: f64 = 1e-8;
pub const ROUNDTRIP_FILE: &str = "invert_roundtrip.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct RoundtripRow {
    pub label: Label,
    pub x0: Vec2,
    pub reconstruction: Vec2,
    /// Max-abs coordinate error.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RoundtripReport {
    pub rows: Vec<RoundtripRow>,
}

impl RoundtripReport {
    /// 0 for an empty report.
    pub fn max_error(&self) -> f64 {
        self.rows.iter().map(|r| r.error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.error < ROUNDTRIP_TOLERANCE)
    }

    pub fn write_csv(&self, path: &Path) -> anyhow::Result<()> {
        let mut w =
            csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
        w.write_record([
            "point", "label", "x0_x", "x0_y", "recon_x", "recon_y", "abs_err",
        ])?;
        for (k, r) in self.rows.iter().enumerate() {
            w.write_record([
                k.to_string(),
                r.label.to_string(),
                float(r.x0.x),
                float(r.x0.y),
                float(r.reconstruction.x),
                float(r.reconstruction.y),
                float(r.error),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Inverts `points` dataset-distributed points (alternating class labels)
/// and regenerates each one under its own label.
pub fn invert_roundtrip<P: NoisePredictor + ?Sized>(
    cfg: &ExperimentConfig,
    model: &P,
    points: usize,
) -> anyhow::Result<RoundtripReport> {
    let schedule = cfg.schedule()?;
    let sub = cfg.subsequence(&schedule)?;
    let class_params = cfg.class_params()?;
    let omega = cfg.inversion.omega;
    let seed = cfg.seed_for(SeedStream::Inversion);
    let mut point_rng = rng::substream(seed, 0);
    let mut rows = Vec::with_capacity(points);
    for k in 0..points {
        let label = Label::Class(1 + (k % 2) as u32);
        let x0 = class_params.sample(label, &mut point_rng)?;
        let mut noise_rng = rng::substream(seed, 1 + k as u64);
        let seq = invert(x0, label, model, omega, &schedule, &sub, &mut noise_rng)?;
        let reconstruction = generate_with_latents(&seq, label, model, omega, &schedule, &sub)?;
        let d = reconstruction - x0;
        rows.push(RoundtripRow {
            label,
            x0,
            reconstruction,
            error: d.x.abs().max(d.y.abs()),
        });
    }
    Ok(RoundtripReport { rows })
}

pub fn write_roundtrip(report: &RoundtripReport, dir: &Path) -> anyhow::Result<PathBuf> {
    create_dir(dir)?;
    let path = dir.join(ROUNDTRIP_FILE);
    report.write_csv(&path)?;
    Ok(path)
}
