use rand::Rng;

use super::{Denoiser, Label, TwoMarginalDataset};
use crate::optim::{Adam, AdamConfig};
use crate::{latent, rng, Error, NoiseSchedule, Result, Vec2, Weighting};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Probability of replacing a label with [`Label::Null`].
    pub null_cond_prob: f64,
    pub weighting: Weighting,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 4000,
            batch_size: 256,
            learning_rate: 1e-3,
            null_cond_prob: 0.1,
            weighting: Weighting::Unit,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.null_cond_prob) {
            return Err(Error::InvalidConfig(format!(
                "null_cond_prob must lie in [0, 1), got {}",
                self.null_cond_prob
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// One fully specified term of the training loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainExample {
    pub x_t: Vec2,
    pub label: Label,
    pub t: usize,
    /// The injected noise the network should recover.
    pub eps: Vec2,
    pub weight: f64,
}

/// Owns the optimizer state and the random stream of a training run.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainConfig,
    optimizer: Adam,
    rng: rng::LabRng,
}

impl Trainer {
    pub fn new(denoiser: &Denoiser, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let optimizer = Adam::new(
            AdamConfig {
                learning_rate: config.learning_rate,
                ..AdamConfig::default()
            },
            denoiser.params().len(),
        );
        let rng = rng::seeded(config.seed);
        Ok(Self {
            config,
            optimizer,
            rng,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Draws `batch_size` labelled points with replacement.
    pub fn sample_batch(&mut self, data: &TwoMarginalDataset) -> Vec<(Vec2, Label)> {
        (0..self.config.batch_size)
            .map(|_| {
                let k = self.rng.random_range(0..data.len());
                (data.points[k], data.labels[k])
            })
            .collect()
    }

    /// Noises each point at a uniform timestep, drops labels with
    /// `null_cond_prob`, takes one Adam step and returns the pre-update loss.
    pub fn train_step(
        &mut self,
        denoiser: &mut Denoiser,
        batch: &[(Vec2, Label)],
        schedule: &NoiseSchedule,
    ) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::InvalidConfig("empty batch".into()));
        }
        let examples: Vec<TrainExample> = batch
            .iter()
            .map(|&(x0, y)| {
                let t = self.rng.random_range(1..=schedule.steps());
                let eps = rng::normal2(&mut self.rng);
                let label = if self.rng.random::<f64>() < self.config.null_cond_prob {
                    Label::Null
                } else {
                    y
                };
                let x_t = latent::forward_sample(x0, t, eps, schedule)?;
                Ok(TrainExample {
                    x_t,
                    label,
                    t,
                    eps,
                    weight: self.config.weighting.weight(schedule, t),
                })
            })
            .collect::<Result<_>>()?;

        let (loss, grad) = denoiser.loss_and_grad(&examples)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("training loss {loss}")));
        }
        self.optimizer.step(denoiser.params_mut(), &grad);
        Ok(loss)
    }
}

/// Runs `config.steps` training steps, reporting `(step, loss)` to `log`.
pub fn train(
    denoiser: &mut Denoiser,
    data: &TwoMarginalDataset,
    schedule: &NoiseSchedule,
    config: &TrainConfig,
    mut log: impl FnMut(usize, f64),
) -> Result<Vec<f64>> {
    if denoiser.arch().steps != schedule.steps() {
        return Err(Error::ScheduleMismatch(format!(
            "model built for T={}, schedule has T={}",
            denoiser.arch().steps,
            schedule.steps()
        )));
    }
    let mut trainer = Trainer::new(denoiser, config.clone())?;
    let mut losses = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let batch = trainer.sample_batch(data);
        let loss = trainer
            .train_step(denoiser, &batch, schedule)
            .map_err(|e| match e {
                Error::NonFinite(_) => Error::TrainingDiverged {
                    step,
                    loss: f64::NAN,
                },
                other => other,
            })?;
        log(step, loss);
        losses.push(loss);
    }
    Ok(losses)
}
