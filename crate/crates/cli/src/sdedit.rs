use std::path::{Path, PathBuf};

use anyhow::Context;
use distill_lab::latent::sdedit_with_steps;
use distill_lab::{rng, Label, NoisePredictor, Vec2};

use crate::config::{ExperimentConfig, SeedStream};
use crate::output::{create_dir, float, spearman};

pub const SDEDIT_FILE: &str = "sdedit.csv";
pub const MIN_SPEARMAN: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct SdeditRow {
    pub t0_ratio: f64,
    pub mean_displacement: f64,
    /// Whether every output equals its input bit-for-bit.
    pub identity: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdeditReport {
    pub rows: Vec<SdeditRow>,
}

impl SdeditReport {
    /// Rank correlation of displacement against `t0_ratio`; `None` for a
    /// single-row grid or a constant column.
    pub fn spearman(&self) -> Option<f64> {
        let r: Vec<f64> = self.rows.iter().map(|r| r.t0_ratio).collect();
        let d: Vec<f64> = self.rows.iter().map(|r| r.mean_displacement).collect();
        spearman(&r, &d)
    }

    pub fn write_csv(&self, path: &Path) -> anyhow::Result<()> {
        let mut w =
            csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
        w.write_record(["t0_ratio", "mean_displacement"])?;
        for r in &self.rows {
            w.write_record([float(r.t0_ratio), float(r.mean_displacement)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `n` evenly spaced ratios covering `[0, 1]`; `[0]` when `n == 1`.
pub fn ratio_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|k| k as f64 / (n - 1) as f64).collect(),
    }
}

/// Edits source-class points toward the target class at every grid ratio.
/// Point `k` reuses the same noise stream at each ratio, so rows differ only
/// through `t0_ratio`.
pub fn sdedit_sweep<P: NoisePredictor + ?Sized>(
    cfg: &ExperimentConfig,
    model: &P,
) -> anyhow::Result<SdeditReport> {
    let s = &cfg.sdedit;
    let schedule = cfg.schedule()?;
    let class_params = cfg.class_params()?;
    let seed = cfg.seed_for(SeedStream::Sdedit);
    let mut point_rng = rng::substream(seed, 0);
    let points: Vec<Vec2> = (0..s.points)
        .map(|_| class_params.sample(Label::Class(s.y_src), &mut point_rng))
        .collect::<Result<_, _>>()?;
    let y_tgt = Label::Class(s.y_tgt);

    let mut rows = Vec::new();
    for t0_ratio in ratio_grid(s.grid) {
        let mut total = 0.0;
        let mut identity = true;
        for (k, &x0) in points.iter().enumerate() {
            let mut noise = rng::substream(seed, 1 + k as u64);
            let x = sdedit_with_steps(
                x0, y_tgt, t0_ratio, s.steps, model, s.omega, &schedule, &mut noise,
            )?;
            identity &= x == x0;
            total += (x - x0).norm();
        }
        rows.push(SdeditRow {
            t0_ratio,
            mean_displacement: if points.is_empty() {
                0.0
            } else {
                total / points.len() as f64
            },
            identity,
        });
    }
    Ok(SdeditReport { rows })
}

pub fn write_sdedit(report: &SdeditReport, dir: &Path) -> anyhow::Result<PathBuf> {
    create_dir(dir)?;
    let path = dir.join(SDEDIT_FILE);
    report.write_csv(&path)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_shapes() {
        assert_eq!(ratio_grid(1), vec![0.0]);
        assert_eq!(ratio_grid(3), vec![0.0, 0.5, 1.0]);
        assert_eq!(ratio_grid(10).len(), 10);
    }
}
