//! Distillation gradients over a parametric generator.
//!
//! Every gradient here is an x0-space residual pulled back through the
//! generator, with the noise predictor's Jacobian dropped:
//!
//! - SDS: `w(t) (eps_hat(x_t, y_tgt) - eps)`
//! - DDS: `w(t) (eps_hat(x_t^tgt, y_tgt) - eps_hat(x_t^src, y_src))`
//! - PDS: `psi(i) (x0_tgt - x0_src) + chi(i) (eps_hat^tgt - eps_hat^src)`
//!
//! Source and target always see the same [`SharedNoiseDraw`].

mod generator;
mod guidance;
mod optimize;

use crate::denoiser::{Label, NoisePredictor};
use crate::latent::{self, forward_sample, SharedNoiseDraw};
use crate::{Error, NoiseSchedule, Result, TimestepSubsequence, Vec2, Weighting};

pub use generator::{Generator, GeneratorKind};
pub use guidance::GuidancePreset;
pub use optimize::{
    optimize, ObjectiveKind, OptimizeConfig, ThetaOptimizer, TrajectoryRecord, TrajectoryStep,
};

/// Source point and prompt, target generator and prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct EditProblem {
    pub x0_src: Vec2,
    pub y_src: Label,
    pub gen: Generator,
    pub y_tgt: Label,
    pub omega: f64,
    pub sub: TimestepSubsequence,
}

fn finite(v: Vec2, what: &str) -> Result<Vec2> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// Guided predictions at `tau_i` for source and target under one draw.
struct PairedPredictions {
    t: usize,
    x0_tgt: Vec2,
    eps_tgt: Vec2,
    eps_src: Vec2,
}

fn paired_predictions<P: NoisePredictor + ?Sized>(
    prob: &EditProblem,
    draw: &SharedNoiseDraw,
    model: &P,
    schedule: &NoiseSchedule,
) -> Result<PairedPredictions> {
    prob.sub.check_index(draw.i)?;
    let t = prob.sub.tau(draw.i);
    let x0_tgt = prob.gen.render()?;
    let xt_tgt = forward_sample(x0_tgt, t, draw.eps_cur, schedule)?;
    let xt_src = forward_sample(prob.x0_src, t, draw.eps_cur, schedule)?;
    let eps_tgt = finite(
        model.cfg_predict(xt_tgt, prob.y_tgt, t, prob.omega)?,
        "target noise prediction",
    )?;
    let eps_src = finite(
        model.cfg_predict(xt_src, prob.y_src, t, prob.omega)?,
        "source noise prediction",
    )?;
    Ok(PairedPredictions {
        t,
        x0_tgt,
        eps_tgt,
        eps_src,
    })
}

pub fn sds_residual<P: NoisePredictor + ?Sized>(
    prob: &EditProblem,
    draw: &SharedNoiseDraw,
    model: &P,
    weighting: Weighting,
    schedule: &NoiseSchedule,
) -> Result<Vec2> {
    prob.sub.check_index(draw.i)?;
    let t = prob.sub.tau(draw.i);
    let x0 = prob.gen.render()?;
    let x_t = forward_sample(x0, t, draw.eps_cur, schedule)?;
    let eps_hat = finite(
        model.cfg_predict(x_t, prob.y_tgt, t, prob.omega)?,
        "noise prediction",
    )?;
    Ok(weighting.weight(schedule, t) * (eps_hat - draw.eps_cur))
}

/// Score distillation: only the target side of `prob` is used.
pub fn sds_grad<P: NoisePredictor + ?Sized>(
    prob: &EditProblem,
    draw: &SharedNoiseDraw,
    model: &P,
    weighting: Weighting,
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>> {
    Ok(prob
        .gen
        .pullback(sds_residual(prob, draw, model, weighting, schedule)?))
}

pub fn dds_residual<P: NoisePredictor + ?Sized>(
    prob: &EditProblem,
    draw: &SharedNoiseDraw,
    model: &P,
    weighting: Weighting,
    schedule: &NoiseSchedule,
) -> Result<Vec2> {
    let p = paired_predictions(prob, draw, model, schedule)?;
    Ok(weighting.weight(schedule, p.t) * (p.eps_tgt - p.eps_src))
}

pub fn dds_grad<P: NoisePredictor + ?Sized>(
    prob: &EditProblem,
    draw: &SharedNoiseDraw,
    model: &P,
    weighting: Weighting,
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>> {
    Ok(prob
        .gen
        .pullback(dds_residual(prob, draw, model, weighting, schedule)?))
}

/// Expanded posterior-distillation residual `psi dx0 + chi deps`.
/// Independent of `draw.eps_prev`, which cancels between source and target.
pub fn pds_residual<P: NoisePredictor + ?Sized>(
    prob: &EditProblem,
    draw: &SharedNoiseDraw,
    model: &P,
    schedule: &NoiseSchedule,
) -> Result<Vec2> {
    let coeffs = schedule.pds_coeffs(&prob.sub, draw.i)?;
    let p = paired_predictions(prob, draw, model, schedule)?;
    Ok(coeffs.psi * (p.x0_tgt - prob.x0_src) + coeffs.chi * (p.eps_tgt - p.eps_src))
}

pub fn pds_grad<P: NoisePredictor + ?Sized>(
    prob: &EditProblem,
    draw: &SharedNoiseDraw,
    model: &P,
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>> {
    Ok(prob
        .gen
        .pullback(pds_residual(prob, draw, model, schedule)?))
}

/// Source and target stochastic latents at `draw.i`.
fn latent_pair<P: NoisePredictor + ?Sized>(
    prob: &EditProblem,
    draw: &SharedNoiseDraw,
    model: &P,
    schedule: &NoiseSchedule,
) -> Result<(Vec2, Vec2)> {
    let x0_tgt = prob.gen.render()?;
    let z_tgt = latent::stochastic_latent(
        x0_tgt, prob.y_tgt, draw, model, prob.omega, schedule, &prob.sub,
    )?;
    let z_src = latent::stochastic_latent(
        prob.x0_src,
        prob.y_src,
        draw,
        model,
        prob.omega,
        schedule,
        &prob.sub,
    )?;
    Ok((
        finite(z_tgt, "target latent")?,
        finite(z_src, "source latent")?,
    ))
}

/// Latent-matching residual `w (z_tgt - z_src)` with `w = 2 gap / sigma`,
/// the scale at which it coincides with [`pds_residual`].
pub fn pds_residual_latent_form<P: NoisePredictor + ?Sized>(
    prob: &EditProblem,
    draw: &SharedNoiseDraw,
    model: &P,
    schedule: &NoiseSchedule,
) -> Result<Vec2> {
    let coeffs = schedule.pds_coeffs(&prob.sub, draw.i)?;
    let (z_tgt, z_src) = latent_pair(prob, draw, model, schedule)?;
    Ok(coeffs.latent_weight() * (z_tgt - z_src))
}

pub fn pds_grad_latent_form<P: NoisePredictor + ?Sized>(
    prob: &EditProblem,
    draw: &SharedNoiseDraw,
    model: &P,
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>> {
    Ok(prob
        .gen
        .pullback(pds_residual_latent_form(prob, draw, model, schedule)?))
}

/// Per-draw objective `||z_tgt - z_src||^2`.
pub fn pds_objective<P: NoisePredictor + ?Sized>(
    prob: &EditProblem,
    draw: &SharedNoiseDraw,
    model: &P,
    schedule: &NoiseSchedule,
) -> Result<f64> {
    schedule.pds_coeffs(&prob.sub, draw.i)?;
    let (z_tgt, z_src) = latent_pair(prob, draw, model, schedule)?;
    Ok((z_tgt - z_src).norm_sq())
}
