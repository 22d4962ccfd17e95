//! Checkpoint layout:
//!
//! ```text
//! distill-lab-checkpoint v1
//! layers <in> <h1> ... <out>
//! num_classes <n>
//! t_embed_dim <d>
//! T <steps>
//! beta_start <f64>
//! beta_end <f64>
//! params <count>
//! end
//! <count little-endian f64 values>
//! ```

use std::io::{BufRead, Write};

use super::{Denoiser, DenoiserArch};
use crate::format::{self, float};
use crate::{Error, NoiseSchedule, Result};

const MAGIC: &str = "distill-lab-checkpoint v1";
const WHAT: &str = "checkpoint";

/// Header fields, available before the model is rebuilt.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointHeader {
    pub arch: DenoiserArch,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl CheckpointHeader {
    /// Fails unless the checkpoint was trained on `schedule`.
    pub fn check_schedule(&self, schedule: &NoiseSchedule) -> Result<()> {
        if self.arch.steps != schedule.steps()
            || self.beta_start != schedule.beta_start()
            || self.beta_end != schedule.beta_end()
        {
            return Err(Error::ScheduleMismatch(format!(
                "checkpoint trained with T={} beta=[{}, {}], config has T={} beta=[{}, {}]",
                self.arch.steps,
                self.beta_start,
                self.beta_end,
                schedule.steps(),
                schedule.beta_start(),
                schedule.beta_end()
            )));
        }
        Ok(())
    }
}

pub fn write_checkpoint(
    w: &mut impl Write,
    model: &Denoiser,
    schedule: &NoiseSchedule,
) -> Result<()> {
    let arch = model.arch();
    if arch.steps != schedule.steps() {
        return Err(Error::ScheduleMismatch(format!(
            "model built for T={}, schedule has T={}",
            arch.steps,
            schedule.steps()
        )));
    }
    let layers = arch
        .layer_sizes()
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(" ");
    format::write_header(
        w,
        MAGIC,
        &[
            ("layers", layers),
            ("num_classes", arch.num_classes.to_string()),
            ("t_embed_dim", arch.t_embed_dim.to_string()),
            ("T", arch.steps.to_string()),
            ("beta_start", float(schedule.beta_start())),
            ("beta_end", float(schedule.beta_end())),
            ("params", model.params().len().to_string()),
        ],
    )?;
    format::write_f64s(w, model.params())
}

pub fn read_checkpoint(r: &mut impl BufRead) -> Result<(CheckpointHeader, Denoiser)> {
    let header = format::read_header(r, MAGIC, WHAT)?;
    let layers: Vec<usize> = header
        .get("layers", WHAT)?
        .split_whitespace()
        .map(|s| s.parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Format {
            what: WHAT,
            reason: "bad layer widths".into(),
        })?;
    if layers.len() < 2 {
        return Err(Error::Format {
            what: WHAT,
            reason: "need at least input and output widths".into(),
        });
    }
    let arch = DenoiserArch {
        hidden: layers[1..layers.len() - 1].to_vec(),
        num_classes: header.parse("num_classes", WHAT)?,
        t_embed_dim: header.parse("t_embed_dim", WHAT)?,
        steps: header.parse("T", WHAT)?,
    };
    if arch.layer_sizes() != layers {
        return Err(Error::Format {
            what: WHAT,
            reason: format!("layer widths {layers:?} inconsistent with arch {arch:?}"),
        });
    }
    let count: usize = header.parse("params", WHAT)?;
    let params = format::read_f64s(r, count, WHAT)?;
    let model = Denoiser::from_params(arch.clone(), params)?;
    Ok((
        CheckpointHeader {
            arch,
            beta_start: header.parse("beta_start", WHAT)?,
            beta_end: header.parse("beta_end", WHAT)?,
        },
        model,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_schedule_check() {
        let s = NoiseSchedule::linear(40, 1e-4, 0.05).unwrap();
        let arch = DenoiserArch {
            hidden: vec![5, 3],
            num_classes: 2,
            t_embed_dim: 4,
            steps: 40,
        };
        let model = Denoiser::new(arch, 1).unwrap();
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &model, &s).unwrap();
        let text_end = bytes.windows(4).position(|w| w == b"end\n").unwrap() + 4;
        assert_eq!(bytes.len() - text_end, model.params().len() * 8);
        assert_eq!(
            &bytes[text_end..text_end + 8],
            &model.params()[0].to_le_bytes()
        );

        let (header, back) = read_checkpoint(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, model);
        header.check_schedule(&s).unwrap();
        let other = NoiseSchedule::linear(40, 1e-4, 0.04).unwrap();
        assert!(matches!(
            header.check_schedule(&other),
            Err(Error::ScheduleMismatch(_))
        ));
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_checkpoint(&mut b"not a checkpoint\n".as_slice()).is_err());
        let truncated = b"distill-lab-checkpoint v1\nlayers 9 2\nnum_classes 2\n";
        assert!(read_checkpoint(&mut truncated.as_slice()).is_err());
    }
}
