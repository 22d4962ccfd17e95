//! Variance schedules and the coefficient tables derived from them.
//!
//! All timesteps are 1-based: `t = 1..=T`. The cumulative product is stored
//! with the convention `alpha_bar(0) = 1`, which makes the first posterior
//! step degenerate (`sigma_1 = 0`).

use crate::{Error, Result};

/// Linear β schedule with derived α and ᾱ tables.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    beta_start: f64,
    beta_end: f64,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    /// Length `T + 1`; index 0 holds ᾱ_0 = 1.
    alpha_bar: Vec<f64>,
    /// `1 - alpha_bar`, accumulated without cancellation.
    one_minus_alpha_bar: Vec<f64>,
}

/// Forward-process posterior `q(x_{t-1} | x_t, x_0) = N(γ x_0 + δ x_t, ·)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorCoeffs {
    pub gamma: f64,
    pub delta: f64,
    /// Posterior scale, used as the standard deviation of injected noise.
    pub sigma: f64,
}

/// Strided timestep grid `tau_i = stride * i` with the admissible index range
/// for Monte-Carlo sampling of `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimestepSubsequence {
    stride: usize,
    total_steps: usize,
    tau: Vec<usize>,
    pub lo_index: usize,
    pub hi_index: usize,
}

/// Coefficients of the expanded posterior-distillation gradient at one
/// subsequence index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdsCoeffs {
    /// Weight on the clean-point difference.
    pub psi: f64,
    /// Weight on the noise-prediction difference.
    pub chi: f64,
    /// `sqrt(abar[tau_{i-1}]) - gamma - delta * sqrt(abar[tau_i])`, the
    /// common factor of `psi` and `chi`.
    pub gap: f64,
    pub sigma: f64,
}

impl PdsCoeffs {
    /// Scale that turns the stochastic-latent difference into the expanded
    /// gradient: `psi * dx + chi * deps == latent_weight * (z_tgt - z_src)`.
    pub fn latent_weight(&self) -> f64 {
        2.0 * self.gap / self.sigma
    }
}

/// Timestep weighting `w(t)` for noise-matching losses and gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    #[default]
    Unit,
    /// `w(t) = 1 - abar_t`.
    OneMinusAlphaBar,
}

impl Weighting {
    pub fn weight(self, schedule: &NoiseSchedule, t: usize) -> f64 {
        match self {
            Weighting::Unit => 1.0,
            Weighting::OneMinusAlphaBar => 1.0 - schedule.alpha_bar(t),
        }
    }
}

impl NoiseSchedule {
    pub const DEFAULT_STEPS: usize = 1000;
    pub const DEFAULT_BETA_START: f64 = 1e-4;
    pub const DEFAULT_BETA_END: f64 = 0.02;

    /// β linearly interpolated from `beta_start` (t = 1) to `beta_end` (t = T).
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps < 2 {
            return Err(Error::InvalidSchedule(format!(
                "need at least 2 steps, got {steps}"
            )));
        }
        let in_unit = |b: f64| b > 0.0 && b < 1.0;
        if !in_unit(beta_start) || !in_unit(beta_end) {
            return Err(Error::InvalidSchedule(format!(
                "betas must lie in (0, 1), got [{beta_start}, {beta_end}]"
            )));
        }
        if beta_start > beta_end {
            return Err(Error::InvalidSchedule(format!(
                "beta_start {beta_start} exceeds beta_end {beta_end}"
            )));
        }

        let span = (steps - 1) as f64;
        let beta: Vec<f64> = (0..steps)
            .map(|k| {
                if k == steps - 1 {
                    beta_end
                } else {
                    beta_start + (beta_end - beta_start) * k as f64 / span
                }
            })
            .collect();
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(steps + 1);
        let mut one_minus_alpha_bar = Vec::with_capacity(steps + 1);
        alpha_bar.push(1.0);
        one_minus_alpha_bar.push(0.0);
        for (a, b) in alpha.iter().zip(&beta) {
            let prev = *alpha_bar.last().unwrap();
            let prev_c = *one_minus_alpha_bar.last().unwrap();
            alpha_bar.push(prev * a);
            // 1 - abar_{t-1} a_t = (1 - abar_{t-1}) + abar_{t-1} b_t
            one_minus_alpha_bar.push(prev_c + prev * b);
        }

        Ok(Self {
            beta_start,
            beta_end,
            beta,
            alpha,
            alpha_bar,
            one_minus_alpha_bar,
        })
    }

    pub fn default_linear() -> Self {
        Self::linear(
            Self::DEFAULT_STEPS,
            Self::DEFAULT_BETA_START,
            Self::DEFAULT_BETA_END,
        )
        .expect("default schedule is valid")
    }

    /// Total number of diffusion steps `T`.
    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    pub fn beta_start(&self) -> f64 {
        self.beta_start
    }

    pub fn beta_end(&self) -> f64 {
        self.beta_end
    }

    pub fn check_timestep(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(Error::TimestepOutOfRange {
                t,
                lo: 1,
                hi: self.steps(),
            });
        }
        Ok(())
    }

    /// β_t for `t` in `1..=T`.
    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    /// ᾱ_t for `t` in `0..=T`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    /// `1 - alpha_bar(t)`, accurate to a few ulps even where ᾱ_t ≈ 1.
    pub fn one_minus_alpha_bar(&self, t: usize) -> f64 {
        self.one_minus_alpha_bar[t]
    }

    /// γ_t, δ_t, σ_t of the one-step forward-process posterior.
    pub fn posterior_coeffs(&self, t: usize) -> Result<PosteriorCoeffs> {
        self.check_timestep(t)?;
        let ab_prev = self.alpha_bar(t - 1);
        let a = self.alpha(t);
        let b = self.beta(t);
        let denom = self.one_minus_alpha_bar(t);
        let prev_c = self.one_minus_alpha_bar(t - 1);
        Ok(PosteriorCoeffs {
            gamma: ab_prev.sqrt() * b / denom,
            delta: a.sqrt() * prev_c / denom,
            sigma: prev_c / denom * b,
        })
    }

    /// Posterior coefficients for a jump from `t` down to `t_prev < t`,
    /// treating the pair as a single step with `alpha = abar_t / abar_prev`.
    /// Reduces to [`posterior_coeffs`](Self::posterior_coeffs) up to rounding
    /// when `t_prev = t - 1`.
    pub fn transition_coeffs(&self, t_prev: usize, t: usize) -> Result<PosteriorCoeffs> {
        self.check_timestep(t)?;
        if t_prev >= t {
            return Err(Error::TimestepOutOfRange {
                t: t_prev,
                lo: 0,
                hi: t - 1,
            });
        }
        let ab = self.alpha_bar(t);
        let ab_prev = self.alpha_bar(t_prev);
        let a = ab / ab_prev;
        let b = 1.0 - a;
        let denom = self.one_minus_alpha_bar(t);
        let prev_c = self.one_minus_alpha_bar(t_prev);
        Ok(PosteriorCoeffs {
            gamma: ab_prev.sqrt() * b / denom,
            delta: a.sqrt() * prev_c / denom,
            sigma: prev_c / denom * b,
        })
    }

    /// `tau_i = stride * i` for `i = 1..=T/stride`, with the sampling range
    /// `[max(2, ceil(lo_ratio * S)), floor(hi_ratio * S)]`.
    pub fn subsequence(
        &self,
        stride: usize,
        lo_ratio: f64,
        hi_ratio: f64,
    ) -> Result<TimestepSubsequence> {
        if stride == 0 {
            return Err(Error::InvalidSubsequence("stride must be positive".into()));
        }
        if !(0.0..=1.0).contains(&lo_ratio) || !(0.0..=1.0).contains(&hi_ratio) {
            return Err(Error::InvalidSubsequence(format!(
                "ratios must lie in [0, 1], got [{lo_ratio}, {hi_ratio}]"
            )));
        }
        if lo_ratio >= hi_ratio {
            return Err(Error::InvalidSubsequence(format!(
                "lo_ratio {lo_ratio} must be below hi_ratio {hi_ratio}"
            )));
        }
        let len = self.steps() / stride;
        if len == 0 {
            return Err(Error::InvalidSubsequence(format!(
                "stride {stride} leaves no timesteps out of {}",
                self.steps()
            )));
        }
        let tau: Vec<usize> = (1..=len)
            .map(|i| (stride * i).clamp(1, self.steps()))
            .collect();

        // Products like 0.98 * 500 land a few ulps off the integer.
        const SLACK: f64 = 1e-9;
        let lo_index = ((lo_ratio * len as f64 - SLACK).ceil() as usize).max(2);
        let hi_index = ((hi_ratio * len as f64 + SLACK).floor() as usize).min(len);
        if lo_index >= hi_index {
            return Err(Error::InvalidSubsequence(format!(
                "empty sampling range [{lo_index}, {hi_index}] for {len} steps"
            )));
        }
        Ok(TimestepSubsequence {
            stride,
            total_steps: self.steps(),
            tau,
            lo_index,
            hi_index,
        })
    }

    /// ψ(i) and χ(i). γ, δ and σ are read on the full schedule at `tau_i`;
    /// only the leading √ᾱ term uses the coarse predecessor `tau_{i-1}`.
    ///
    /// The common factor `sqrt(abar[tau_{i-1}]) - gamma - delta sqrt(abar[tau_i])`
    /// is evaluated as `sqrt(abar[tau_{i-1}]) - sqrt(abar[tau_i - 1])`. The two
    /// are equal because `gamma_t + delta_t sqrt(abar_t) = sqrt(abar_{t-1})`;
    /// the literal form leaves a ~1e-13 residue that `1 / sigma^2` inflates.
    pub fn pds_coeffs(&self, sub: &TimestepSubsequence, i: usize) -> Result<PdsCoeffs> {
        sub.check_sampling_index(i)?;
        let t = sub.tau(i);
        let t_prev = sub.prev_timestep(i);
        let pc = self.posterior_coeffs(t)?;
        if pc.sigma <= 0.0 {
            return Err(Error::DegenerateTimestep { t });
        }
        let ab = self.alpha_bar(t);
        let gap = self.alpha_bar(t_prev).sqrt() - self.alpha_bar(t - 1).sqrt();
        let sigma_sq = pc.sigma * pc.sigma;
        Ok(PdsCoeffs {
            psi: 2.0 * gap * gap / sigma_sq,
            chi: 2.0 * gap * pc.gamma * (self.one_minus_alpha_bar(t) / ab).sqrt() / sigma_sq,
            gap,
            sigma: pc.sigma,
        })
    }
}

impl TimestepSubsequence {
    /// Number of subsequence steps `S`.
    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    /// `T` of the schedule this grid was cut from.
    pub fn total_steps(&self) -> usize {
        self.total_steps
    }

    pub fn taus(&self) -> &[usize] {
        &self.tau
    }

    /// `tau_i` for `i` in `1..=S`.
    pub fn tau(&self, i: usize) -> usize {
        self.tau[i - 1]
    }

    /// `tau_{i-1}`, with `tau_0 = 0` (clean data).
    pub fn prev_timestep(&self, i: usize) -> usize {
        if i <= 1 {
            0
        } else {
            self.tau[i - 2]
        }
    }

    pub fn check_index(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.len() {
            return Err(Error::IndexOutOfRange {
                i,
                lo: 1,
                hi: self.len(),
            });
        }
        Ok(())
    }

    pub fn check_sampling_index(&self, i: usize) -> Result<()> {
        if i < self.lo_index || i > self.hi_index {
            return Err(Error::IndexOutOfRange {
                i,
                lo: self.lo_index,
                hi: self.hi_index,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default() -> NoiseSchedule {
        NoiseSchedule::default_linear()
    }

    #[test]
    fn linear_endpoints() {
        let s = default();
        assert_eq!(s.steps(), 1000);
        assert_eq!(s.beta(1), 1e-4);
        assert_eq!(s.beta(1000), 0.02);
        assert_eq!(s.alpha_bar(0), 1.0);
        assert_eq!(s.alpha_bar(1), 0.9999);
    }

    #[test]
    fn alpha_bar_matches_independent_product() {
        // Independent route: rebuild each beta from its closed form and
        // multiply in one pass.
        let s = default();
        let mut prod = 1.0f64;
        for k in 0..1000 {
            let b = 1e-4 + (0.02 - 1e-4) * (k as f64) / 999.0;
            prod *= 1.0 - b;
        }
        let rel = (s.alpha_bar(1000) - prod).abs() / prod;
        assert!(rel < 1e-12, "rel err {rel}");
        // Value frozen from the product oracle above.
        // Frozen from a 40-digit product.
        assert!((s.alpha_bar(1000) - 4.035_829_765_375_683e-5).abs() < 1e-15);
    }

    #[test]
    fn schedule_invariants() {
        let s = default();
        for t in 1..=s.steps() {
            assert!(s.beta(t) > 0.0 && s.beta(t) < 1.0);
            if t > 1 {
                assert!(s.beta(t) >= s.beta(t - 1));
            }
            assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
            let rel = (s.alpha_bar(t) - s.alpha_bar(t - 1) * s.alpha(t)).abs() / s.alpha_bar(t);
            assert!(rel <= 1e-12);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(NoiseSchedule::linear(1, 1e-4, 0.02).is_err());
        assert!(NoiseSchedule::linear(10, 0.0, 0.02).is_err());
        assert!(NoiseSchedule::linear(10, 1e-4, 1.0).is_err());
        assert!(NoiseSchedule::linear(10, 0.03, 0.02).is_err());
    }

    #[test]
    fn first_posterior_step_is_degenerate() {
        let pc = default().posterior_coeffs(1).unwrap();
        assert_eq!(pc.gamma, 1.0);
        assert_eq!(pc.delta, 0.0);
        assert_eq!(pc.sigma, 0.0);
    }

    #[test]
    fn posterior_out_of_range() {
        let s = default();
        assert!(s.posterior_coeffs(0).is_err());
        assert!(s.posterior_coeffs(1001).is_err());
    }

    #[test]
    fn posterior_matches_duplicate_formula() {
        let s = default();
        let t = 500usize;
        // Recompute from scratch without the stored tables.
        let beta = |k: usize| 1e-4 + (0.02 - 1e-4) * ((k - 1) as f64) / 999.0;
        let abar = |k: usize| (1..=k).map(|j| 1.0 - beta(j)).product::<f64>();
        let (ab, abp, b) = (abar(t), abar(t - 1), beta(t));
        let gamma = abp.sqrt() * b / (1.0 - ab);
        let delta = (1.0 - b).sqrt() * (1.0 - abp) / (1.0 - ab);
        let sigma = (1.0 - abp) / (1.0 - ab) * b;
        let pc = s.posterior_coeffs(t).unwrap();
        assert!((pc.gamma - gamma).abs() < 1e-12 * gamma);
        assert!((pc.delta - delta).abs() < 1e-12 * delta);
        assert!((pc.sigma - sigma).abs() < 1e-12 * sigma);
    }

    #[test]
    fn consecutive_identity_holds_everywhere() {
        let s = default();
        for t in 1..=s.steps() {
            let pc = s.posterior_coeffs(t).unwrap();
            let r = pc.gamma + pc.delta * s.alpha_bar(t).sqrt() - s.alpha_bar(t - 1).sqrt();
            assert!(r.abs() < 1e-10, "t={t} residual {r}");
        }
    }

    #[test]
    fn transition_reduces_to_posterior() {
        let s = default();
        for t in [2, 10, 500, 1000] {
            let a = s.posterior_coeffs(t).unwrap();
            let b = s.transition_coeffs(t - 1, t).unwrap();
            assert!((a.gamma - b.gamma).abs() < 1e-9 * a.gamma.max(1e-3));
            assert!((a.delta - b.delta).abs() < 1e-9);
            assert!((a.sigma - b.sigma).abs() < 1e-9 * a.sigma);
        }
        assert!(s.transition_coeffs(5, 5).is_err());
    }

    #[test]
    fn default_subsequence_range() {
        let sub = default().subsequence(2, 0.02, 0.98).unwrap();
        assert_eq!(sub.len(), 500);
        assert_eq!(sub.lo_index, 10);
        assert_eq!(sub.hi_index, 490);
        assert_eq!(sub.tau(1), 2);
        assert_eq!(sub.tau(500), 1000);
        assert_eq!(sub.prev_timestep(1), 0);
    }

    #[test]
    fn identity_subsequence() {
        let sub = default().subsequence(1, 0.0, 1.0).unwrap();
        assert_eq!(sub.taus(), (1..=1000).collect::<Vec<_>>().as_slice());
        assert_eq!(sub.lo_index, 2);
        assert_eq!(sub.hi_index, 1000);
    }

    #[test]
    fn small_hand_enumerated_subsequence() {
        let s = NoiseSchedule::linear(10, 1e-4, 0.02).unwrap();
        let sub = s.subsequence(2, 0.2, 1.0).unwrap();
        assert_eq!(sub.taus(), &[2, 4, 6, 8, 10]);
        assert_eq!(sub.lo_index, 2);
        assert_eq!(sub.hi_index, 5);
    }

    #[test]
    fn subsequence_errors() {
        let s = NoiseSchedule::linear(10, 1e-4, 0.02).unwrap();
        assert!(s.subsequence(0, 0.0, 1.0).is_err());
        assert!(s.subsequence(11, 0.0, 1.0).is_err());
        assert!(s.subsequence(10, 0.0, 1.0).is_err());
        assert!(s.subsequence(2, 0.5, 0.5).is_err());
        assert!(s.subsequence(2, 0.9, 1.0).is_err());
    }

    #[test]
    fn stride_one_coefficients_vanish() {
        let s = default();
        let sub = s.subsequence(1, 0.0, 1.0).unwrap();
        for i in sub.lo_index..=sub.hi_index {
            let c = s.pds_coeffs(&sub, i).unwrap();
            assert!(c.psi.abs() < 1e-10 && c.chi.abs() < 1e-10, "i={i} {c:?}");
        }
    }

    #[test]
    fn stride_two_coefficients() {
        let s = default();
        let sub = s.subsequence(2, 0.02, 0.98).unwrap();
        let c = s.pds_coeffs(&sub, 250).unwrap();
        assert!(c.psi > 0.0);
        assert_eq!(c.chi.signum(), c.gap.signum());
        for i in sub.lo_index..=sub.hi_index {
            let c = s.pds_coeffs(&sub, i).unwrap();
            assert!(c.psi > 0.0);
            let t = sub.tau(i);
            let pc = s.posterior_coeffs(t).unwrap();
            let want = 2.0 * pc.gamma.powi(2) * (1.0 / s.alpha_bar(t) - 1.0) / pc.sigma.powi(2);
            let got = c.chi * c.chi / c.psi;
            assert!((got - want).abs() <= 1e-8 * want, "i={i}");
        }
        assert!(s.pds_coeffs(&sub, 9).is_err());
        assert!(s.pds_coeffs(&sub, 491).is_err());
    }

    #[test]
    fn coefficients_match_literal_expression() {
        let s = default();
        for stride in [2usize, 5, 10] {
            let sub = s.subsequence(stride, 0.02, 0.98).unwrap();
            for i in sub.lo_index..=sub.hi_index {
                let c = s.pds_coeffs(&sub, i).unwrap();
                let t = sub.tau(i);
                let pc = s.posterior_coeffs(t).unwrap();
                let ab = s.alpha_bar(t);
                let gap =
                    s.alpha_bar(sub.prev_timestep(i)).sqrt() - pc.gamma - pc.delta * ab.sqrt();
                let psi = 2.0 * gap * gap / pc.sigma.powi(2);
                let chi = 2.0 * gap * pc.gamma * (1.0 / ab - 1.0).sqrt() / pc.sigma.powi(2);
                assert!((c.psi - psi).abs() <= 1e-8 * psi, "stride {stride} i={i}");
                assert!(
                    (c.chi - chi).abs() <= 1e-8 * chi.abs(),
                    "stride {stride} i={i}"
                );
            }
        }
    }

    #[test]
    fn latent_weight_reproduces_psi() {
        let s = default();
        let sub = s.subsequence(5, 0.02, 0.98).unwrap();
        let c = s.pds_coeffs(&sub, 50).unwrap();
        let from_weight = c.latent_weight() * c.gap / c.sigma;
        assert!((from_weight - c.psi).abs() <= 1e-12 * c.psi);
    }
}
