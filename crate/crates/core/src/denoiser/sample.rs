use rand::Rng;

use super::{Label, NoisePredictor};
use crate::{latent, rng, Error, NoiseSchedule, Result, Vec2};

/// Full-length ancestral sampling from `x_T ~ N(0, I)` down to `x_0`.
///
/// One noise vector is drawn per step, including the last one, where
/// `sigma_1 = 0` makes the transition deterministic.
pub fn ancestral_sample<P: NoisePredictor + ?Sized, R: Rng + ?Sized>(
    model: &P,
    y: Label,
    schedule: &NoiseSchedule,
    omega: f64,
    rng: &mut R,
) -> Result<Vec2> {
    let x_top = rng::normal2(rng);
    run_chain(model, y, schedule, omega, x_top, |_| rng::normal2(rng))
}

fn run_chain<P: NoisePredictor + ?Sized>(
    model: &P,
    y: Label,
    schedule: &NoiseSchedule,
    omega: f64,
    x_top: Vec2,
    mut noise: impl FnMut(usize) -> Vec2,
) -> Result<Vec2> {
    let mut x = x_top;
    for t in (1..=schedule.steps()).rev() {
        let sigma = schedule.posterior_coeffs(t)?.sigma;
        let mu = latent::posterior_mean_pred(x, y, t, model, omega, schedule)?;
        x = mu + sigma * noise(t);
        if !x.is_finite() {
            return Err(Error::NonFinite(format!("ancestral state at t={t}")));
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::FnPredictor;

    #[test]
    fn deterministic_under_seed() {
        let s = NoiseSchedule::linear(100, 1e-4, 0.2).unwrap();
        let model = FnPredictor(|x: Vec2, _y, _t| 0.5 * x);
        let a = ancestral_sample(&model, Label::Class(1), &s, 2.0, &mut rng::seeded(3)).unwrap();
        let b = ancestral_sample(&model, Label::Class(1), &s, 2.0, &mut rng::seeded(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn last_step_ignores_noise() {
        let s = NoiseSchedule::linear(10, 1e-4, 0.2).unwrap();
        let model = FnPredictor(|x: Vec2, _y, _t| 0.1 * x);
        let top = Vec2::new(0.3, -0.2);
        let run = |last: Vec2| {
            run_chain(&model, Label::Null, &s, 1.0, top, |t| {
                if t == 1 {
                    last
                } else {
                    Vec2::new(0.1 * t as f64, -0.2)
                }
            })
            .unwrap()
        };
        assert_eq!(run(Vec2::ZERO), run(Vec2::new(5.0, -5.0)));
    }
}
