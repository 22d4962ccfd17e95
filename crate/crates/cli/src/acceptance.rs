//! The acceptance suite behind `distill-lab check`.
//!
//! Every criterion draws its randomness from the config's master seed, so a
//! given config always produces the same verdicts.

use std::collections::HashMap;
use std::fmt;
use std::time::{Duration, Instant};

use distill_lab::denoiser::{ancestral_sample, TrainExample};
use distill_lab::distill::{dds_grad, pds_grad, pds_grad_latent_form, pds_objective, pds_residual};
use distill_lab::latent::forward_sample;
use distill_lab::{
    rng, Denoiser, DenoiserArch, EditProblem, Generator, Label, NoisePredictor, SharedNoiseDraw,
    Vec2, Weighting,
};
use rand::Rng;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, SeedStream};
use crate::figure2::run_figure2;
use crate::invert::invert_roundtrip;
use crate::model::train_model;
use crate::parallel::thread_pool;
use crate::sdedit::{sdedit_sweep, MIN_SPEARMAN};

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] criterion {}: {} | {} | {:.2} s",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> anyhow::Result<Outcome> {
    Ok(Outcome { passed, detail })
}

/// Runs criteria 1 through 9 in order, reporting each as it finishes.
/// A criterion that errors is reported as failed; the rest still run.
pub fn run_acceptance(
    cfg: &ExperimentConfig,
    mut report: impl FnMut(&CriterionResult),
) -> anyhow::Result<Vec<CriterionResult>> {
    let pool = thread_pool()?;
    let train_start = Instant::now();
    let trained = train_model(cfg);
    let train_time = train_start.elapsed();

    let mut results = Vec::new();
    let mut record = |id: u8,
                      name: &'static str,
                      extra: Duration,
                      f: &mut dyn FnMut() -> anyhow::Result<Outcome>| {
        let start = Instant::now();
        let out = f();
        let elapsed = start.elapsed() + extra;
        let (passed, detail) = match out {
            Ok(o) => (o.passed, o.detail),
            Err(e) => (false, format!("error: {e:#}")),
        };
        let r = CriterionResult {
            id,
            name,
            passed,
            detail,
            elapsed,
        };
        report(&r);
        results.push(r);
    };

    let model = trained
        .as_ref()
        .map(|t| &t.model)
        .map_err(|e| anyhow::anyhow!("training failed: {e:#}"));
    let need_model = || model.as_ref().map_err(|e| anyhow::anyhow!("{e}")).copied();

    record(1, "coefficient identity", Duration::ZERO, &mut || {
        coefficient_identity(cfg)
    });
    record(2, "form equivalence", Duration::ZERO, &mut || {
        form_equivalence(cfg)
    });
    record(3, "zero at identity", Duration::ZERO, &mut || {
        zero_at_identity(cfg, need_model()?)
    });
    record(4, "inversion round trip", Duration::ZERO, &mut || {
        inversion_round_trip(cfg, need_model()?)
    });
    record(5, "gradient oracles", Duration::ZERO, &mut || {
        gradient_oracles(cfg, need_model()?)
    });
    record(6, "previous-noise invariance", Duration::ZERO, &mut || {
        eps_prev_invariance(cfg, need_model()?)
    });
    record(7, "two-marginal ordering", train_time, &mut || {
        figure2_ordering(cfg, need_model()?, train_time)
    });
    record(8, "generative sanity", Duration::ZERO, &mut || {
        generative_sanity(cfg, need_model()?, &pool)
    });
    record(9, "sdedit limits", Duration::ZERO, &mut || {
        sdedit_limits(cfg, need_model()?)
    });
    Ok(results)
}

fn coefficient_identity(cfg: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let start = Instant::now();
    let s = cfg.schedule()?;
    let mut worst = 0.0f64;
    for t in 2..=s.steps() {
        let pc = s.posterior_coeffs(t)?;
        let r = pc.gamma + pc.delta * s.alpha_bar(t).sqrt() - s.alpha_bar(t - 1).sqrt();
        worst = worst.max(r.abs());
    }
    let sub = s.subsequence(1, cfg.subsequence.lo_ratio, cfg.subsequence.hi_ratio)?;
    let mut worst_coeff = 0.0f64;
    for i in sub.lo_index..=sub.hi_index {
        let c = s.pds_coeffs(&sub, i)?;
        worst_coeff = worst_coeff.max(c.psi.abs()).max(c.chi.abs());
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-10 && worst_coeff < 1e-10 && elapsed < Duration::from_secs(1),
        format!("max identity residual {worst:.3e}, max stride-1 |psi|,|chi| {worst_coeff:.3e} (< 1e-10, < 1 s)"),
    )
}

fn random_label<R: Rng + ?Sized>(r: &mut R) -> Label {
    Label::Class(r.random_range(1..=2))
}

fn form_equivalence(cfg: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let start = Instant::now();
    let s = cfg.schedule()?;
    let mut r = rng::substream(cfg.seed, 102);
    let mut worst = 0.0f64;
    for k in 0..100u64 {
        let stride = [2, 5, 10][k as usize % 3];
        let sub = s.subsequence(stride, cfg.subsequence.lo_ratio, cfg.subsequence.hi_ratio)?;
        let model = Denoiser::new(cfg.arch(), rng::derive_seed(cfg.seed, 10_000 + k))?;
        let x_src = 2.0 * rng::normal2(&mut r);
        let gen = Generator::affine(
            [
                [
                    1.0 + 0.3 * rng::normal2(&mut r).x,
                    0.3 * rng::normal2(&mut r).y,
                ],
                [0.2, 0.9],
            ],
            x_src + rng::normal2(&mut r),
            rng::normal2(&mut r),
        );
        let prob = EditProblem {
            x0_src: x_src,
            y_src: random_label(&mut r),
            gen,
            y_tgt: random_label(&mut r),
            omega: cfg.distill.omega,
            sub,
        };
        let draw = SharedNoiseDraw::sample(&prob.sub, &mut r);
        let a = pds_grad(&prob, &draw, &model, &s)?;
        let b = pds_grad_latent_form(&prob, &draw, &model, &s)?;
        worst = worst.max(rel_err(&a, &b));
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-8 && elapsed < Duration::from_secs(5),
        format!("max rel err {worst:.3e} over 100 configs (< 1e-8, < 5 s)"),
    )
}

/// `||a - b|| / max(||a||, ||b||)`, 0 when both vanish.
fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        norm(&diff)
    } else {
        norm(&diff) / scale
    }
}

fn zero_at_identity(cfg: &ExperimentConfig, model: &Denoiser) -> anyhow::Result<Outcome> {
    let s = cfg.schedule()?;
    let sub = cfg.subsequence(&s)?;
    let class_params = cfg.class_params()?;
    let mut r = rng::substream(cfg.seed, 103);
    let mut nonzero = 0;
    for _ in 0..100 {
        let y = random_label(&mut r);
        let x0 = class_params.sample(y, &mut r)?;
        let prob = EditProblem {
            x0_src: x0,
            y_src: y,
            gen: Generator::identity(x0),
            y_tgt: y,
            omega: cfg.distill.omega,
            sub: sub.clone(),
        };
        let draw = SharedNoiseDraw::sample(&sub, &mut r);
        let d = dds_grad(&prob, &draw, model, Weighting::Unit, &s)?;
        let p = pds_grad(&prob, &draw, model, &s)?;
        if d.iter().chain(&p).any(|v| *v != 0.0) {
            nonzero += 1;
        }
    }
    outcome(
        nonzero == 0,
        format!("{nonzero} of 100 draws gave a nonzero DDS or PDS gradient"),
    )
}

fn inversion_round_trip(cfg: &ExperimentConfig, model: &Denoiser) -> anyhow::Result<Outcome> {
    let start = Instant::now();
    let trained = invert_roundtrip(cfg, model, 50)?;
    let random = Denoiser::new(cfg.arch(), rng::derive_seed(cfg.seed, 104))?;
    let untrained = invert_roundtrip(cfg, &random, 50)?;
    let elapsed = start.elapsed();
    outcome(
        trained.passed() && untrained.passed() && elapsed < Duration::from_secs(30),
        format!(
            "max abs err trained {:.3e}, random {:.3e} over 50 points (< 1e-8, < 30 s)",
            trained.max_error(),
            untrained.max_error()
        ),
    )
}

/// Replays fixed noise predictions per label, whatever the input.
struct Frozen(HashMap<Label, Vec2>);

impl NoisePredictor for Frozen {
    fn predict(&self, _x_t: Vec2, y: Label, _t: usize) -> distill_lab::Result<Vec2> {
        self.0
            .get(&y)
            .copied()
            .ok_or_else(|| distill_lab::Error::InvalidLabel(y.to_string()))
    }

    fn cfg_predict(&self, x_t: Vec2, y: Label, t: usize, _omega: f64) -> distill_lab::Result<Vec2> {
        self.predict(x_t, y, t)
    }
}

fn gradient_oracles(cfg: &ExperimentConfig, model: &Denoiser) -> anyhow::Result<Outcome> {
    let s = cfg.schedule()?;
    let sub = cfg.subsequence(&s)?;
    let mut r = rng::substream(cfg.seed, 105);

    // (a) Network backprop against central differences of the loss.
    let probe = Denoiser::new(
        DenoiserArch {
            hidden: vec![16, 16],
            ..cfg.arch()
        },
        rng::derive_seed(cfg.seed, 105),
    )?;
    let examples: Vec<TrainExample> = (0..4)
        .map(|k| TrainExample {
            x_t: 2.0 * rng::normal2(&mut r),
            label: [
                Label::Null,
                Label::Class(1),
                Label::Class(2),
                Label::Class(1),
            ][k],
            t: r.random_range(1..=s.steps()),
            eps: rng::normal2(&mut r),
            weight: 1.0,
        })
        .collect();
    let (_, grad) = probe.loss_and_grad(&examples)?;
    let h = 1e-5;
    let mut worst_a = 0.0f64;
    for (k, &g) in grad.iter().enumerate() {
        let mut plus = probe.clone();
        plus.params_mut()[k] += h;
        let mut minus = probe.clone();
        minus.params_mut()[k] -= h;
        let fd = (plus.loss_and_grad(&examples)?.0 - minus.loss_and_grad(&examples)?.0) / (2.0 * h);
        let scale = fd.abs().max(g.abs()).max(1e-6);
        worst_a = worst_a.max((fd - g).abs() / scale);
    }

    // (b) PDS objective with frozen predictions against the PDS residual.
    let mut worst_b = 0.0f64;
    for _ in 0..20 {
        let prob = EditProblem {
            x0_src: cfg.class_params()?.sample(Label::Class(1), &mut r)?,
            y_src: Label::Class(1),
            gen: Generator::identity(2.0 * rng::normal2(&mut r)),
            y_tgt: Label::Class(2),
            omega: cfg.distill.omega,
            sub: sub.clone(),
        };
        let draw = SharedNoiseDraw::sample(&sub, &mut r);
        let residual = pds_residual(&prob, &draw, model, &s)?;
        let t = sub.tau(draw.i);
        let x0_tgt = prob.gen.render()?;
        let frozen = Frozen(HashMap::from([
            (
                prob.y_tgt,
                model.cfg_predict(
                    forward_sample(x0_tgt, t, draw.eps_cur, &s)?,
                    prob.y_tgt,
                    t,
                    prob.omega,
                )?,
            ),
            (
                prob.y_src,
                model.cfg_predict(
                    forward_sample(prob.x0_src, t, draw.eps_cur, &s)?,
                    prob.y_src,
                    t,
                    prob.omega,
                )?,
            ),
        ]));
        let objective_at = |x: Vec2| {
            let p = EditProblem {
                gen: Generator::identity(x),
                ..prob.clone()
            };
            pds_objective(&p, &draw, &frozen, &s)
        };
        let h = 1e-5;
        let fd = Vec2::new(
            (objective_at(x0_tgt + Vec2::new(h, 0.0))? - objective_at(x0_tgt - Vec2::new(h, 0.0))?)
                / (2.0 * h),
            (objective_at(x0_tgt + Vec2::new(0.0, h))? - objective_at(x0_tgt - Vec2::new(0.0, h))?)
                / (2.0 * h),
        );
        worst_b = worst_b.max((fd - residual).norm() / residual.norm().max(fd.norm()));
    }

    // (c) Generator pullbacks against differences of render.
    let mut worst_c = 0.0f64;
    for _ in 0..20 {
        let m = [
            [rng::normal2(&mut r).x, rng::normal2(&mut r).y],
            [rng::normal2(&mut r).x, rng::normal2(&mut r).y],
        ];
        for gen in [
            Generator::identity(rng::normal2(&mut r)),
            Generator::affine(m, rng::normal2(&mut r), rng::normal2(&mut r)),
        ] {
            let cot = rng::normal2(&mut r);
            let analytic = gen.pullback(cot);
            let h = 1e-6;
            for (k, &a) in analytic.iter().enumerate() {
                let mut plus = gen.clone();
                plus.theta[k] += h;
                let mut minus = gen.clone();
                minus.theta[k] -= h;
                let fd = (plus.render()? - minus.render()?).dot(cot) / (2.0 * h);
                let scale = fd.abs().max(a.abs()).max(1e-12);
                worst_c = worst_c.max((fd - a).abs() / scale);
            }
        }
    }

    outcome(
        worst_a < 1e-4 && worst_b < 1e-4 && worst_c < 1e-6,
        format!(
            "(a) backprop {worst_a:.3e} (< 1e-4), (b) frozen-prediction objective {worst_b:.3e} (< 1e-4), \
             (c) pullbacks {worst_c:.3e} (< 1e-6)"
        ),
    )
}

fn eps_prev_invariance(cfg: &ExperimentConfig, model: &Denoiser) -> anyhow::Result<Outcome> {
    let s = cfg.schedule()?;
    let sub = cfg.subsequence(&s)?;
    let class_params = cfg.class_params()?;
    let mut r = rng::substream(cfg.seed, 106);
    let mut changed = 0;
    for _ in 0..100 {
        let prob = EditProblem {
            x0_src: class_params.sample(Label::Class(1), &mut r)?,
            y_src: Label::Class(1),
            gen: Generator::identity(2.0 * rng::normal2(&mut r)),
            y_tgt: Label::Class(2),
            omega: cfg.distill.omega,
            sub: sub.clone(),
        };
        let draw = SharedNoiseDraw::sample(&sub, &mut r);
        let base = pds_grad(&prob, &draw, model, &s)?;
        for _ in 0..3 {
            let d = SharedNoiseDraw {
                eps_prev: 3.0 * rng::normal2(&mut r),
                ..draw
            };
            if pds_grad(&prob, &d, model, &s)? != base {
                changed += 1;
            }
        }
    }
    outcome(
        changed == 0,
        format!("{changed} of 300 perturbed draws changed the PDS gradient"),
    )
}

/// Timed on a single worker, as the runtime bound is stated for one core.
fn figure2_ordering(
    cfg: &ExperimentConfig,
    model: &Denoiser,
    train_time: Duration,
) -> anyhow::Result<Outcome> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build()?;
    let start = Instant::now();
    let out = run_figure2(cfg, model, &pool)?;
    let total = start.elapsed() + train_time;
    let checks = out.summary.checks();
    if checks.is_empty() {
        return outcome(false, "needs sds, dds and pds in distill.objectives".into());
    }
    let ordering: Vec<_> = checks.iter().take(2).collect();
    let runs = out
        .summary
        .objectives
        .iter()
        .map(|o| o.n_runs)
        .min()
        .unwrap_or(0);
    let diverged: usize = out.summary.objectives.iter().map(|o| o.n_diverged).sum();
    let mut detail: Vec<String> = checks
        .iter()
        .map(|c| {
            format!(
                "{}: {} ({})",
                c.name,
                if c.passed { "yes" } else { "no" },
                c.detail
            )
        })
        .collect();
    detail.push(format!(
        "{runs} runs per objective, {diverged} diverged, {:.1} s with training",
        total.as_secs_f64()
    ));
    outcome(
        ordering.iter().all(|c| c.passed) && runs >= 20 && total < Duration::from_secs(300),
        detail.join("; "),
    )
}

fn generative_sanity(
    cfg: &ExperimentConfig,
    model: &Denoiser,
    pool: &rayon::ThreadPool,
) -> anyhow::Result<Outcome> {
    let s = cfg.schedule()?;
    let class_params = cfg.class_params()?;
    let seed = cfg.seed_for(SeedStream::Sanity);
    let labels: Vec<Label> = pool.install(|| {
        (0..200u64)
            .into_par_iter()
            .map(|k| {
                let mut r = rng::substream(seed, k);
                let x = ancestral_sample(model, Label::Class(1), &s, 1.0, &mut r)?;
                Ok(class_params.nearest_class(x))
            })
            .collect::<distill_lab::Result<_>>()
    })?;
    let hits = labels.iter().filter(|l| **l == Label::Class(1)).count();
    outcome(
        hits >= 180,
        format!("{hits} of 200 class-1 samples land on the class-1 side (>= 90%)"),
    )
}

fn sdedit_limits(cfg: &ExperimentConfig, model: &Denoiser) -> anyhow::Result<Outcome> {
    let report = sdedit_sweep(cfg, model)?;
    let zero = report.rows.iter().find(|r| r.t0_ratio == 0.0);
    let identity = zero.is_some_and(|r| r.identity && r.mean_displacement == 0.0);
    let rho = report.spearman();
    let curve: Vec<String> = report
        .rows
        .iter()
        .map(|r| format!("{:.3}", r.mean_displacement))
        .collect();
    outcome(
        identity && rho.is_some_and(|p| p > MIN_SPEARMAN) && report.rows.len() >= 10,
        format!(
            "t0_ratio=0 identity {identity}, spearman {} over {} ratios (> {MIN_SPEARMAN}); displacement [{}]",
            rho.map_or("n/a".into(), |p| format!("{p:.4}")),
            report.rows.len(),
            curve.join(", ")
        ),
    )
}
