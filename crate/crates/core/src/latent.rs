//! Forward process, one-step denoised estimates and stochastic latents.
//!
//! A stochastic latent is the noise that, injected into one generative step,
//! lands exactly on a given `x_{t-1}` starting from `x_t`. Inverting a clean
//! point records one latent per subsequence step; replaying them through the
//! generative recursion reconstructs the point, and replaying them under a
//! different label edits it.

use std::io::{BufRead, Write};

use rand::Rng;

use crate::denoiser::{Label, NoisePredictor};
use crate::format::{self, float};
use crate::{rng, Error, NoiseSchedule, Result, TimestepSubsequence, Vec2};

/// Noise pair shared by source and target at one subsequence index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SharedNoiseDraw {
    pub i: usize,
    /// Noise forming `x_{tau_{i-1}}`.
    pub eps_prev: Vec2,
    /// Noise forming `x_{tau_i}`.
    pub eps_cur: Vec2,
}

impl SharedNoiseDraw {
    /// `i` uniform over the sampling range, both noises standard normal.
    pub fn sample<R: Rng + ?Sized>(sub: &TimestepSubsequence, rng: &mut R) -> Self {
        let i = rng.random_range(sub.lo_index..=sub.hi_index);
        let eps_prev = rng::normal2(rng);
        let eps_cur = rng::normal2(rng);
        Self {
            i,
            eps_prev,
            eps_cur,
        }
    }
}

/// Output of [`invert`]: the top state and one latent per generative step,
/// ordered from `i = S` down to `i = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticLatentSequence {
    pub condition: Label,
    pub omega: f64,
    pub total_steps: usize,
    pub stride: usize,
    pub x_top: Vec2,
    pub latents: Vec<Vec2>,
    pub draws: Vec<SharedNoiseDraw>,
}

/// `x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps`.
pub fn forward_sample(x0: Vec2, t: usize, eps: Vec2, schedule: &NoiseSchedule) -> Result<Vec2> {
    schedule.check_timestep(t)?;
    Ok(forward_level(x0, t, eps, schedule))
}

/// [`forward_sample`] extended to `t = 0`, where it returns `x0`.
fn forward_level(x0: Vec2, t: usize, eps: Vec2, schedule: &NoiseSchedule) -> Vec2 {
    if t == 0 {
        return x0;
    }
    let ab = schedule.alpha_bar(t);
    ab.sqrt() * x0 + (1.0 - ab).sqrt() * eps
}

/// Inverts the forward process given a noise estimate.
fn tweedie_from_eps(x_t: Vec2, t: usize, eps_hat: Vec2, schedule: &NoiseSchedule) -> Vec2 {
    let ab = schedule.alpha_bar(t);
    (x_t - (1.0 - ab).sqrt() * eps_hat) / ab.sqrt()
}

/// One-step denoised estimate `(x_t - sqrt(1 - abar_t) eps_hat) / sqrt(abar_t)`
/// with a guided noise prediction.
pub fn tweedie_estimate<P: NoisePredictor + ?Sized>(
    x_t: Vec2,
    y: Label,
    t: usize,
    model: &P,
    omega: f64,
    schedule: &NoiseSchedule,
) -> Result<Vec2> {
    schedule.check_timestep(t)?;
    let eps_hat = model.cfg_predict(x_t, y, t, omega)?;
    Ok(tweedie_from_eps(x_t, t, eps_hat, schedule))
}

/// Model posterior mean `gamma_t x0_hat + delta_t x_t`.
pub fn posterior_mean_pred<P: NoisePredictor + ?Sized>(
    x_t: Vec2,
    y: Label,
    t: usize,
    model: &P,
    omega: f64,
    schedule: &NoiseSchedule,
) -> Result<Vec2> {
    let pc = schedule.posterior_coeffs(t)?;
    let x0_hat = tweedie_estimate(x_t, y, t, model, omega, schedule)?;
    Ok(pc.gamma * x0_hat + pc.delta * x_t)
}

/// `(x_{tau_{i-1}} - mu(x_{tau_i}, y)) / sigma_{tau_i}`, both noisy points
/// formed from `x0` with the draw's noises.
pub fn stochastic_latent<P: NoisePredictor + ?Sized>(
    x0: Vec2,
    y: Label,
    draw: &SharedNoiseDraw,
    model: &P,
    omega: f64,
    schedule: &NoiseSchedule,
    sub: &TimestepSubsequence,
) -> Result<Vec2> {
    sub.check_index(draw.i)?;
    let t = sub.tau(draw.i);
    let t_prev = sub.prev_timestep(draw.i);
    let sigma = schedule.posterior_coeffs(t)?.sigma;
    if sigma <= 0.0 {
        return Err(Error::DegenerateTimestep { t });
    }
    let x_t = forward_level(x0, t, draw.eps_cur, schedule);
    let x_prev = forward_level(x0, t_prev, draw.eps_prev, schedule);
    let mu = posterior_mean_pred(x_t, y, t, model, omega, schedule)?;
    Ok((x_prev - mu) / sigma)
}

/// DDPM inversion over the whole subsequence. Each level `tau_i` gets its own
/// independent forward noise; consecutive draws share the level between them
/// so the recorded latents chain into one trajectory.
pub fn invert<P: NoisePredictor + ?Sized, R: Rng + ?Sized>(
    x0: Vec2,
    y: Label,
    model: &P,
    omega: f64,
    schedule: &NoiseSchedule,
    sub: &TimestepSubsequence,
    rng: &mut R,
) -> Result<StochasticLatentSequence> {
    check_grid(schedule, sub)?;
    let len = sub.len();
    // level_noise[i] forms x_{tau_i}; level 0 is the clean point itself.
    let mut level_noise = Vec::with_capacity(len + 1);
    level_noise.push(Vec2::ZERO);
    for _ in 0..len {
        level_noise.push(rng::normal2(rng));
    }

    let x_top = forward_level(x0, sub.tau(len), level_noise[len], schedule);
    let mut latents = Vec::with_capacity(len);
    let mut draws = Vec::with_capacity(len);
    for i in (1..=len).rev() {
        let draw = SharedNoiseDraw {
            i,
            eps_prev: level_noise[i - 1],
            eps_cur: level_noise[i],
        };
        latents.push(stochastic_latent(
            x0, y, &draw, model, omega, schedule, sub,
        )?);
        draws.push(draw);
    }
    Ok(StochasticLatentSequence {
        condition: y,
        omega,
        total_steps: schedule.steps(),
        stride: sub.stride(),
        x_top,
        latents,
        draws,
    })
}

/// Runs `x_{tau_{i-1}} = mu(x_{tau_i}, y_new) + sigma_{tau_i} z_i` from the
/// recorded top state, substituting the recorded latents for fresh noise.
pub fn generate_with_latents<P: NoisePredictor + ?Sized>(
    seq: &StochasticLatentSequence,
    y_new: Label,
    model: &P,
    omega: f64,
    schedule: &NoiseSchedule,
    sub: &TimestepSubsequence,
) -> Result<Vec2> {
    check_grid(schedule, sub)?;
    if seq.total_steps != schedule.steps()
        || seq.stride != sub.stride()
        || seq.latents.len() != sub.len()
    {
        return Err(Error::ScheduleMismatch(format!(
            "latents recorded for T={} stride={} ({} steps), replaying on T={} stride={} ({} steps)",
            seq.total_steps,
            seq.stride,
            seq.latents.len(),
            schedule.steps(),
            sub.stride(),
            sub.len()
        )));
    }
    let mut x = seq.x_top;
    for (z, i) in seq.latents.iter().zip((1..=sub.len()).rev()) {
        let t = sub.tau(i);
        let sigma = schedule.posterior_coeffs(t)?.sigma;
        let mu = posterior_mean_pred(x, y_new, t, model, omega, schedule)?;
        x = mu + sigma * *z;
        if !x.is_finite() {
            return Err(Error::NonFinite(format!("generative state at t={t}")));
        }
    }
    Ok(x)
}

fn check_grid(schedule: &NoiseSchedule, sub: &TimestepSubsequence) -> Result<()> {
    if sub.total_steps() != schedule.steps() {
        return Err(Error::ScheduleMismatch(format!(
            "subsequence cut from T={}, schedule has T={}",
            sub.total_steps(),
            schedule.steps()
        )));
    }
    Ok(())
}

/// Default length of the SDEdit denoising chain.
pub const SDEDIT_STEPS: usize = 20;

/// SDEdit with the default [`SDEDIT_STEPS`]-step chain.
pub fn sdedit<P: NoisePredictor + ?Sized, R: Rng + ?Sized>(
    x0: Vec2,
    y: Label,
    t0_ratio: f64,
    model: &P,
    omega: f64,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<Vec2> {
    sdedit_with_steps(x0, y, t0_ratio, SDEDIT_STEPS, model, omega, schedule, rng)
}

/// Noises `x0` to `t0 = round(t0_ratio * n) / n * T`, then denoises along the
/// evenly spaced `n`-step chain using jump posteriors between grid points.
#[allow(clippy::too_many_arguments)]
pub fn sdedit_with_steps<P: NoisePredictor + ?Sized, R: Rng + ?Sized>(
    x0: Vec2,
    y: Label,
    t0_ratio: f64,
    n_steps: usize,
    model: &P,
    omega: f64,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<Vec2> {
    if !(0.0..=1.0).contains(&t0_ratio) {
        return Err(Error::InvalidConfig(format!(
            "t0_ratio must lie in [0, 1], got {t0_ratio}"
        )));
    }
    if n_steps == 0 || n_steps > schedule.steps() {
        return Err(Error::InvalidConfig(format!(
            "sdedit needs 1..={} steps, got {n_steps}",
            schedule.steps()
        )));
    }
    let total = schedule.steps();
    let grid = |k: usize| ((k * total) as f64 / n_steps as f64).round() as usize;
    let start = (t0_ratio * n_steps as f64).round() as usize;
    if start == 0 {
        return Ok(x0);
    }

    let mut x = forward_level(x0, grid(start), rng::normal2(rng), schedule);
    for k in (1..=start).rev() {
        let (t, t_prev) = (grid(k), grid(k - 1));
        let pc = schedule.transition_coeffs(t_prev, t)?;
        let x0_hat = tweedie_estimate(x, y, t, model, omega, schedule)?;
        let z = rng::normal2(rng);
        x = pc.gamma * x0_hat + pc.delta * x + pc.sigma * z;
        if !x.is_finite() {
            return Err(Error::NonFinite(format!("sdedit state at t={t}")));
        }
    }
    Ok(x)
}

const LATENTS_MAGIC: &str = "distill-lab-latents v1";
const LATENTS: &str = "latent sequence";

fn label_from_str(raw: &str) -> Result<Label> {
    match raw {
        "null" => Ok(Label::Null),
        other => other.parse().map(Label::Class).map_err(|_| Error::Format {
            what: LATENTS,
            reason: format!("bad condition {other:?}"),
        }),
    }
}

impl StochasticLatentSequence {
    /// Header, then `x_top` followed by seven values per step:
    /// `i, eps_prev.x, eps_prev.y, eps_cur.x, eps_cur.y, z.x, z.y`.
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        format::write_header(
            w,
            LATENTS_MAGIC,
            &[
                ("T", self.total_steps.to_string()),
                ("stride", self.stride.to_string()),
                ("condition", self.condition.to_string()),
                ("omega", float(self.omega)),
                ("steps", self.latents.len().to_string()),
            ],
        )?;
        let mut payload = Vec::with_capacity(2 + 7 * self.latents.len());
        payload.extend(self.x_top.to_array());
        for (d, z) in self.draws.iter().zip(&self.latents) {
            payload.push(d.i as f64);
            payload.extend(d.eps_prev.to_array());
            payload.extend(d.eps_cur.to_array());
            payload.extend(z.to_array());
        }
        format::write_f64s(w, &payload)
    }

    pub fn read_from(r: &mut impl BufRead) -> Result<Self> {
        let header = format::read_header(r, LATENTS_MAGIC, LATENTS)?;
        let steps: usize = header.parse("steps", LATENTS)?;
        let payload = format::read_f64s(r, 2 + 7 * steps, LATENTS)?;
        let x_top = Vec2::new(payload[0], payload[1]);
        let mut latents = Vec::with_capacity(steps);
        let mut draws = Vec::with_capacity(steps);
        for row in payload[2..].chunks_exact(7) {
            draws.push(SharedNoiseDraw {
                i: row[0] as usize,
                eps_prev: Vec2::new(row[1], row[2]),
                eps_cur: Vec2::new(row[3], row[4]),
            });
            latents.push(Vec2::new(row[5], row[6]));
        }
        Ok(Self {
            condition: label_from_str(header.get("condition", LATENTS)?)?,
            omega: header.parse("omega", LATENTS)?,
            total_steps: header.parse("T", LATENTS)?,
            stride: header.parse("stride", LATENTS)?,
            x_top,
            latents,
            draws,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::{Denoiser, DenoiserArch, FnPredictor};
    use rand::SeedableRng;

    fn sched() -> NoiseSchedule {
        NoiseSchedule::default_linear()
    }

    /// Predicts the exact noise that maps `x0` to `x_t`.
    fn oracle(x0: Vec2, s: &NoiseSchedule) -> impl NoisePredictor + '_ {
        FnPredictor(move |x: Vec2, _y, t: usize| {
            (x - s.alpha_bar(t).sqrt() * x0) / (1.0 - s.alpha_bar(t)).sqrt()
        })
    }

    fn small_model(seed: u64) -> Denoiser {
        Denoiser::new(
            DenoiserArch {
                hidden: vec![16, 16],
                num_classes: 2,
                t_embed_dim: 8,
                steps: 1000,
            },
            seed,
        )
        .unwrap()
    }

    #[test]
    fn forward_limits() {
        let s = sched();
        let x0 = Vec2::new(1.5, -0.5);
        let eps = Vec2::new(0.7, 0.2);
        let t = 321;
        assert_eq!(
            forward_sample(x0, t, Vec2::ZERO, &s).unwrap(),
            s.alpha_bar(t).sqrt() * x0
        );
        assert_eq!(
            forward_sample(Vec2::ZERO, t, eps, &s).unwrap(),
            (1.0 - s.alpha_bar(t)).sqrt() * eps
        );
        assert!(forward_sample(x0, 0, eps, &s).is_err());
        assert!(forward_sample(x0, 1001, eps, &s).is_err());
    }

    #[test]
    fn forward_matches_duplicate_formula() {
        let s = sched();
        let beta = |k: usize| 1e-4 + (0.02 - 1e-4) * ((k - 1) as f64) / 999.0;
        let ab: f64 = (1..=500).map(|k| 1.0 - beta(k)).product();
        let want = Vec2::new(ab.sqrt() + (1.0 - ab).sqrt(), ab.sqrt() - (1.0 - ab).sqrt());
        let got = forward_sample(Vec2::new(1.0, 1.0), 500, Vec2::new(1.0, -1.0), &s).unwrap();
        assert!((got - want).norm() < 1e-12);
    }

    #[test]
    fn forward_marginals() {
        let s = sched();
        let x0 = Vec2::new(1.0, -2.0);
        let t = 300;
        let n = 100_000;
        let mut r = rng::seeded(42);
        let samples: Vec<Vec2> = (0..n)
            .map(|_| forward_sample(x0, t, rng::normal2(&mut r), &s).unwrap())
            .collect();
        let mean = samples.iter().fold(Vec2::ZERO, |a, &b| a + b) / n as f64;
        let var_x = samples.iter().map(|p| (p.x - mean.x).powi(2)).sum::<f64>() / (n - 1) as f64;
        let ab = s.alpha_bar(t);
        let sd = (1.0 - ab).sqrt();
        let se_mean = sd / (n as f64).sqrt();
        assert!((mean.x - ab.sqrt() * x0.x).abs() < 3.0 * se_mean);
        assert!((mean.y - ab.sqrt() * x0.y).abs() < 3.0 * se_mean);
        // Var of the sample variance of a Gaussian: 2 sd^4 / (n - 1).
        let se_var = (2.0 / (n - 1) as f64).sqrt() * (1.0 - ab);
        assert!((var_x - (1.0 - ab)).abs() < 3.0 * se_var);
    }

    #[test]
    fn tweedie_with_oracle_is_exact() {
        let s = sched();
        let x0 = Vec2::new(-1.0, 0.5);
        let eps = Vec2::new(0.3, -1.1);
        let x_t = forward_sample(x0, 250, eps, &s).unwrap();
        let fixed = FnPredictor(move |_x, _y, _t| eps);
        let got = tweedie_estimate(x_t, Label::Class(1), 250, &fixed, 7.5, &s).unwrap();
        assert!((got - x0).norm() < 1e-12);

        let zero = FnPredictor(|_x, _y, _t| Vec2::ZERO);
        let got = tweedie_estimate(x_t, Label::Class(1), 250, &zero, 1.0, &s).unwrap();
        assert_eq!(got, x_t / s.alpha_bar(250).sqrt());
    }

    #[test]
    fn tweedie_round_trip_on_random_points() {
        let s = sched();
        let mut r = rng::seeded(3);
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let x0 = 3.0 * rng::normal2(&mut r);
            let t = r.random_range(1..=1000);
            let x_t = forward_sample(x0, t, rng::normal2(&mut r), &s).unwrap();
            let got = tweedie_estimate(x_t, Label::Class(2), t, &oracle(x0, &s), 1.0, &s).unwrap();
            worst = worst.max((got - x0).x.abs()).max((got - x0).y.abs());
        }
        assert!(worst < 1e-10, "worst {worst}");
    }

    #[test]
    fn posterior_mean_cases() {
        let s = sched();
        let x_t = Vec2::new(0.4, 0.9);
        let model = small_model(1);
        let x0_hat = tweedie_estimate(x_t, Label::Class(1), 1, &model, 2.0, &s).unwrap();
        let mu = posterior_mean_pred(x_t, Label::Class(1), 1, &model, 2.0, &s).unwrap();
        assert_eq!(mu, x0_hat);

        // Oracle: mu = sqrt(abar_{t-1}) x0 + delta_t sqrt(1 - abar_t) eps.
        let (x0, eps, t) = (Vec2::new(1.2, -0.3), Vec2::new(-0.5, 0.8), 600);
        let x_t = forward_sample(x0, t, eps, &s).unwrap();
        let mu = posterior_mean_pred(x_t, Label::Class(1), t, &oracle(x0, &s), 1.0, &s).unwrap();
        let pc = s.posterior_coeffs(t).unwrap();
        let want = s.alpha_bar(t - 1).sqrt() * x0 + pc.delta * (1.0 - s.alpha_bar(t)).sqrt() * eps;
        assert!((mu - want).norm() < 1e-12);
    }

    #[test]
    fn posterior_mean_affine_under_linear_model() {
        let s = sched();
        let linear = FnPredictor(|x: Vec2, _y, _t| Vec2::new(0.3 * x.x - 0.1 * x.y, 0.7 * x.y));
        let base = Vec2::new(0.5, -1.5);
        let f = |a: f64| posterior_mean_pred(a * base, Label::Null, 400, &linear, 1.0, &s).unwrap();
        let (m0, m1, m2) = (f(0.0), f(1.0), f(2.0));
        assert!((m2 - m1 - (m1 - m0)).norm() < 1e-12);
    }

    #[test]
    fn stochastic_latent_with_oracle_and_zero_noise() {
        let s = sched();
        let x0 = Vec2::new(1.0, 2.0);
        for stride in [1usize, 2, 5] {
            let sub = s.subsequence(stride, 0.02, 0.98).unwrap();
            let i = sub.lo_index + 7;
            let draw = SharedNoiseDraw {
                i,
                eps_prev: Vec2::ZERO,
                eps_cur: Vec2::ZERO,
            };
            let z = stochastic_latent(x0, Label::Class(1), &draw, &oracle(x0, &s), 1.0, &s, &sub)
                .unwrap();
            let t = sub.tau(i);
            let sigma = s.posterior_coeffs(t).unwrap().sigma;
            let want =
                (s.alpha_bar(sub.prev_timestep(i)).sqrt() - s.alpha_bar(t - 1).sqrt()) * x0 / sigma;
            assert!(
                (z - want).norm() <= 1e-9 * want.norm().max(1.0),
                "stride {stride}"
            );
            if stride == 1 {
                assert!(z.norm() < 1e-6, "{z:?}");
            }
        }
    }

    #[test]
    fn stochastic_latent_affine_in_noise() {
        let s = sched();
        let sub = s.subsequence(2, 0.02, 0.98).unwrap();
        let model = FnPredictor(|x: Vec2, _y, _t| Vec2::new(0.2 * x.x + 0.1, -0.4 * x.y));
        let x0 = Vec2::new(-0.3, 0.6);
        let (ep, ec) = (Vec2::new(0.5, -1.0), Vec2::new(1.5, 0.25));
        let z_at = |a: f64| {
            let draw = SharedNoiseDraw {
                i: 100,
                eps_prev: a * ep,
                eps_cur: a * ec,
            };
            stochastic_latent(x0, Label::Class(2), &draw, &model, 3.0, &s, &sub).unwrap()
        };
        let (z0, z1, z2) = (z_at(0.0), z_at(1.0), z_at(2.0));
        let (u, v) = (z1 - z0, z2 - z0);
        assert!((u.x * v.y - u.y * v.x).abs() <= 1e-9 * u.norm() * v.norm());
        assert_eq!(z1, z_at(1.0));
    }

    #[test]
    fn degenerate_latent_step() {
        let s = sched();
        let sub = s.subsequence(1, 0.0, 1.0).unwrap();
        let draw = SharedNoiseDraw {
            i: 1,
            eps_prev: Vec2::ZERO,
            eps_cur: Vec2::ZERO,
        };
        let model = small_model(1);
        assert!(matches!(
            stochastic_latent(Vec2::ZERO, Label::Null, &draw, &model, 1.0, &s, &sub),
            Err(Error::DegenerateTimestep { t: 1 })
        ));
        let mut r = rng::seeded(0);
        assert!(invert(Vec2::ZERO, Label::Null, &model, 1.0, &s, &sub, &mut r).is_err());
    }

    #[test]
    fn inversion_round_trip_random_model() {
        let s = sched();
        let sub = s.subsequence(2, 0.02, 0.98).unwrap();
        let model = small_model(7);
        let mut r = rng::seeded(11);
        for _ in 0..5 {
            let x0 = 2.0 * rng::normal2(&mut r);
            let seq = invert(x0, Label::Class(1), &model, 3.0, &s, &sub, &mut r).unwrap();
            assert_eq!(seq.latents.len(), sub.len());
            assert_eq!(seq.draws.first().unwrap().i, sub.len());
            let back = generate_with_latents(&seq, Label::Class(1), &model, 3.0, &s, &sub).unwrap();
            assert!((back - x0).x.abs() < 1e-8 && (back - x0).y.abs() < 1e-8);
        }
    }

    #[test]
    fn inversion_is_deterministic() {
        let s = sched();
        let sub = s.subsequence(4, 0.02, 0.98).unwrap();
        let model = small_model(2);
        let run = || {
            let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(5);
            invert(
                Vec2::new(1.0, 1.0),
                Label::Class(2),
                &model,
                1.0,
                &s,
                &sub,
                &mut r,
            )
            .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn replay_checks_grid() {
        let s = sched();
        let sub2 = s.subsequence(2, 0.02, 0.98).unwrap();
        let sub4 = s.subsequence(4, 0.02, 0.98).unwrap();
        let model = small_model(2);
        let mut r = rng::seeded(1);
        let seq = invert(Vec2::ZERO, Label::Class(1), &model, 1.0, &s, &sub2, &mut r).unwrap();
        assert!(matches!(
            generate_with_latents(&seq, Label::Class(1), &model, 1.0, &s, &sub4),
            Err(Error::ScheduleMismatch(_))
        ));
    }

    #[test]
    fn zero_latents_with_oracle_give_deterministic_path() {
        let s = sched();
        let sub = s.subsequence(10, 0.02, 0.98).unwrap();
        let x0 = Vec2::new(0.5, 0.5);
        let seq = StochasticLatentSequence {
            condition: Label::Class(1),
            omega: 1.0,
            total_steps: 1000,
            stride: 10,
            x_top: Vec2::new(0.1, -0.2),
            latents: vec![Vec2::ZERO; sub.len()],
            draws: vec![],
        };
        let a =
            generate_with_latents(&seq, Label::Class(1), &oracle(x0, &s), 1.0, &s, &sub).unwrap();
        let b =
            generate_with_latents(&seq, Label::Class(1), &oracle(x0, &s), 1.0, &s, &sub).unwrap();
        assert_eq!(a, b);
        assert!(a.is_finite());
    }

    #[test]
    fn latent_sequence_serialises() {
        let s = sched();
        let sub = s.subsequence(25, 0.02, 0.98).unwrap();
        let model = small_model(3);
        let mut r = rng::seeded(9);
        let seq = invert(
            Vec2::new(-2.0, 0.1),
            Label::Class(1),
            &model,
            7.5,
            &s,
            &sub,
            &mut r,
        )
        .unwrap();
        let mut bytes = Vec::new();
        seq.write_to(&mut bytes).unwrap();
        let back = StochasticLatentSequence::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, seq);
        assert!(StochasticLatentSequence::read_from(&mut &bytes[..bytes.len() - 3]).is_err());
    }

    #[test]
    fn sdedit_zero_ratio_is_identity() {
        let s = sched();
        let model = small_model(4);
        let mut r = rng::seeded(0);
        let x0 = Vec2::new(-1.7, 0.3);
        assert_eq!(
            sdedit(x0, Label::Class(2), 0.0, &model, 7.5, &s, &mut r).unwrap(),
            x0
        );
        assert!(sdedit(x0, Label::Class(2), 1.5, &model, 7.5, &s, &mut r).is_err());
        let out = sdedit(x0, Label::Class(2), 0.2, &model, 7.5, &s, &mut r).unwrap();
        assert!(out.is_finite());
    }
}
