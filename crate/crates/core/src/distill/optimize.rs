use std::fmt;
use std::io::Write;
use std::str::FromStr;

use super::{dds_grad, pds_grad, sds_grad, EditProblem};
use crate::denoiser::NoisePredictor;
use crate::optim::{sgd_step, Adam, AdamConfig};
use crate::{rng, Error, NoiseSchedule, Result, SharedNoiseDraw, Vec2, Weighting};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObjectiveKind {
    Sds,
    Dds,
    Pds,
}

impl ObjectiveKind {
    pub const ALL: [ObjectiveKind; 3] =
        [ObjectiveKind::Sds, ObjectiveKind::Dds, ObjectiveKind::Pds];

    pub fn name(self) -> &'static str {
        match self {
            ObjectiveKind::Sds => "sds",
            ObjectiveKind::Dds => "dds",
            ObjectiveKind::Pds => "pds",
        }
    }
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ObjectiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sds" => Ok(ObjectiveKind::Sds),
            "dds" => Ok(ObjectiveKind::Dds),
            "pds" => Ok(ObjectiveKind::Pds),
            other => Err(Error::InvalidConfig(format!("unknown objective {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThetaOptimizer {
    Sgd { learning_rate: f64 },
    Adam(AdamConfig),
}

impl ThetaOptimizer {
    pub fn learning_rate(&self) -> f64 {
        match self {
            ThetaOptimizer::Sgd { learning_rate } => *learning_rate,
            ThetaOptimizer::Adam(c) => c.learning_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeConfig {
    pub steps: usize,
    pub optimizer: ThetaOptimizer,
    /// Timestep weighting for SDS and DDS; PDS carries its own.
    pub weighting: Weighting,
    pub seed: u64,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            steps: 300,
            optimizer: ThetaOptimizer::Sgd {
                learning_rate: 0.05,
            },
            weighting: Weighting::Unit,
            seed: 0,
        }
    }
}

impl OptimizeConfig {
    pub fn validate(&self) -> Result<()> {
        let lr = self.optimizer.learning_rate();
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {lr}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStep {
    pub step: usize,
    pub theta: Vec<f64>,
    pub x0_tgt: Vec2,
    /// Norm of the gradient that produced this state; 0 for the initial one.
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub objective: ObjectiveKind,
    pub seed: u64,
    /// Initial state at index 0, then one entry per completed update.
    pub steps: Vec<TrajectoryStep>,
    /// Set when an update produced non-finite values; `steps` stops at the
    /// last finite state.
    pub diverged: bool,
}

impl TrajectoryRecord {
    pub fn last(&self) -> &TrajectoryStep {
        self.steps
            .last()
            .expect("trajectory holds its initial state")
    }

    pub fn endpoint(&self) -> Vec2 {
        self.last().x0_tgt
    }

    /// CSV with columns `step, theta_0.., x0_tgt_x, x0_tgt_y, grad_norm`.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        let n = self.steps.first().map_or(0, |s| s.theta.len());
        let mut header = vec!["step".to_string()];
        header.extend((0..n).map(|k| format!("theta_{k}")));
        header.extend(["x0_tgt_x", "x0_tgt_y", "grad_norm"].map(String::from));
        writeln!(w, "{}", header.join(","))?;
        for s in &self.steps {
            let mut row = vec![s.step.to_string()];
            row.extend(s.theta.iter().map(|v| format!("{v:.16e}")));
            row.push(format!("{:.16e}", s.x0_tgt.x));
            row.push(format!("{:.16e}", s.x0_tgt.y));
            row.push(format!("{:.16e}", s.grad_norm));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn gradient<P: NoisePredictor + ?Sized>(
    kind: ObjectiveKind,
    prob: &EditProblem,
    draw: &SharedNoiseDraw,
    model: &P,
    weighting: Weighting,
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>> {
    match kind {
        ObjectiveKind::Sds => sds_grad(prob, draw, model, weighting, schedule),
        ObjectiveKind::Dds => dds_grad(prob, draw, model, weighting, schedule),
        ObjectiveKind::Pds => pds_grad(prob, draw, model, schedule),
    }
}

/// Runs stochastic gradient descent on the generator parameters, drawing a
/// fresh [`SharedNoiseDraw`] per step from a stream seeded by `config.seed`.
/// Runs with the same seed see the same draws whatever the objective.
pub fn optimize<P: NoisePredictor + ?Sized>(
    prob: &EditProblem,
    kind: ObjectiveKind,
    config: &OptimizeConfig,
    model: &P,
    schedule: &NoiseSchedule,
) -> Result<TrajectoryRecord> {
    config.validate()?;
    if prob.sub.total_steps() != schedule.steps() {
        return Err(Error::ScheduleMismatch(format!(
            "subsequence built for T={}, schedule has T={}",
            prob.sub.total_steps(),
            schedule.steps()
        )));
    }
    let mut rng = rng::seeded(config.seed);
    let mut prob = prob.clone();
    let mut adam = match config.optimizer {
        ThetaOptimizer::Adam(c) => Some(Adam::new(c, prob.gen.theta.len())),
        ThetaOptimizer::Sgd { .. } => None,
    };
    let mut record = TrajectoryRecord {
        objective: kind,
        seed: config.seed,
        steps: vec![TrajectoryStep {
            step: 0,
            theta: prob.gen.theta.clone(),
            x0_tgt: prob.gen.render()?,
            grad_norm: 0.0,
        }],
        diverged: false,
    };

    for step in 1..=config.steps {
        let draw = SharedNoiseDraw::sample(&prob.sub, &mut rng);
        let grad = match gradient(kind, &prob, &draw, model, config.weighting, schedule) {
            Ok(g) => g,
            Err(Error::NonFinite(_)) => {
                record.diverged = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if !grad_norm.is_finite() {
            record.diverged = true;
            break;
        }
        match (&mut adam, config.optimizer) {
            (Some(a), _) => a.step(&mut prob.gen.theta, &grad),
            (None, ThetaOptimizer::Sgd { learning_rate }) => {
                sgd_step(&mut prob.gen.theta, &grad, learning_rate)
            }
            (None, ThetaOptimizer::Adam(_)) => unreachable!("adam state is built up front"),
        }
        let x0_tgt = match prob.gen.render() {
            Ok(x) if prob.gen.theta.iter().all(|v| v.is_finite()) => x,
            Ok(_) | Err(Error::NonFinite(_)) => {
                record.diverged = true;
                break;
            }
            Err(e) => return Err(e),
        };
        record.steps.push(TrajectoryStep {
            step,
            theta: prob.gen.theta.clone(),
            x0_tgt,
            grad_norm,
        });
    }
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::{Denoiser, DenoiserArch, FnPredictor, Label};
    use crate::distill::Generator;

    fn setup() -> (NoiseSchedule, Denoiser, EditProblem) {
        let s = NoiseSchedule::default_linear();
        let m = Denoiser::new(
            DenoiserArch {
                hidden: vec![16, 16],
                num_classes: 2,
                t_embed_dim: 8,
                steps: 1000,
            },
            3,
        )
        .unwrap();
        let prob = EditProblem {
            x0_src: Vec2::new(-2.0, 0.0),
            y_src: Label::Class(1),
            gen: Generator::identity(Vec2::new(-2.0, 0.0)),
            y_tgt: Label::Class(2),
            omega: 7.5,
            sub: s.subsequence(2, 0.02, 0.98).unwrap(),
        };
        (s, m, prob)
    }

    #[test]
    fn same_seed_same_trajectory() {
        let (s, m, prob) = setup();
        let cfg = OptimizeConfig {
            steps: 20,
            seed: 11,
            ..OptimizeConfig::default()
        };
        for kind in ObjectiveKind::ALL {
            let a = optimize(&prob, kind, &cfg, &m, &s).unwrap();
            let b = optimize(&prob, kind, &cfg, &m, &s).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.steps.len(), 21);
            assert_eq!(a.steps[0].x0_tgt, prob.x0_src);
            assert!(!a.diverged);
        }
    }

    #[test]
    fn adam_runs_and_moves() {
        let (s, m, prob) = setup();
        let cfg = OptimizeConfig {
            steps: 5,
            optimizer: ThetaOptimizer::Adam(AdamConfig {
                learning_rate: 0.1,
                ..AdamConfig::default()
            }),
            ..OptimizeConfig::default()
        };
        let r = optimize(&prob, ObjectiveKind::Dds, &cfg, &m, &s).unwrap();
        assert_ne!(r.endpoint(), prob.x0_src);
    }

    #[test]
    fn blowup_flags_divergence() {
        let (s, _, prob) = setup();
        let wild = FnPredictor(|x: Vec2, _y, _t| Vec2::new((-x.x).exp(), 0.0));
        let cfg = OptimizeConfig {
            steps: 50,
            optimizer: ThetaOptimizer::Sgd { learning_rate: 1e3 },
            ..OptimizeConfig::default()
        };
        let r = optimize(&prob, ObjectiveKind::Sds, &cfg, &wild, &s).unwrap();
        assert!(r.diverged);
        assert!(r.steps.len() < 51);
        assert!(r.steps.iter().all(|st| st.x0_tgt.is_finite()));
    }

    #[test]
    fn bad_learning_rate_rejected() {
        let (s, m, prob) = setup();
        let cfg = OptimizeConfig {
            optimizer: ThetaOptimizer::Sgd {
                learning_rate: -1.0,
            },
            ..OptimizeConfig::default()
        };
        assert!(optimize(&prob, ObjectiveKind::Pds, &cfg, &m, &s).is_err());
    }

    #[test]
    fn csv_layout() {
        let (s, m, prob) = setup();
        let cfg = OptimizeConfig {
            steps: 2,
            ..OptimizeConfig::default()
        };
        let r = optimize(&prob, ObjectiveKind::Pds, &cfg, &m, &s).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "step,theta_0,theta_1,x0_tgt_x,x0_tgt_y,grad_norm");
        assert_eq!(lines.len(), 4);
        let last: Vec<f64> = lines[3].split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(last[3], r.endpoint().x);
        assert_eq!(last[5], r.last().grad_norm);
    }

    #[test]
    fn objective_names_round_trip() {
        for k in ObjectiveKind::ALL {
            assert_eq!(k.name().parse::<ObjectiveKind>().unwrap(), k);
        }
        assert!("xyz".parse::<ObjectiveKind>().is_err());
    }
}
