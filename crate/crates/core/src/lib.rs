//! Score distillation laboratory over a small conditional diffusion model.
//!
//! The crate is organised bottom-up:
//!
//! - [`schedule`]: variance schedules, forward-process posterior coefficients,
//!   non-consecutive timestep subsequences and the posterior-distillation
//!   coefficients built from them.
//! - [`denoiser`]: a class-conditional MLP noise predictor over 2D points with
//!   classifier-free guidance, its training loop, the two-class toy dataset and
//!   an ancestral sampler.
//! - [`latent`]: forward sampling, one-step denoised estimates, stochastic
//!   latents, DDPM inversion and SDEdit.
//! - [`distill`]: SDS, DDS and PDS gradients, parametric generators and the
//!   optimization loop that produces trajectories.
//!
//! Timesteps are 1-based throughout; `t = 0` denotes clean data.

pub mod denoiser;
pub mod distill;
pub mod error;
mod format;
pub mod latent;
pub mod optim;
pub mod rng;
pub mod schedule;
mod vec2;

pub use denoiser::{
    ClassParams, Denoiser, DenoiserArch, FnPredictor, Label, NoisePredictor, TrainConfig,
    TwoMarginalDataset,
};
pub use distill::{
    EditProblem, Generator, GeneratorKind, GuidancePreset, ObjectiveKind, OptimizeConfig,
    ThetaOptimizer, TrajectoryRecord, TrajectoryStep,
};
pub use error::{Error, Result};
pub use latent::{SharedNoiseDraw, StochasticLatentSequence};
pub use schedule::{NoiseSchedule, PdsCoeffs, PosteriorCoeffs, TimestepSubsequence, Weighting};
pub use vec2::Vec2;
