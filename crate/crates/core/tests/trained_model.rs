//! Oracles that need a trained denoiser. The model is trained once with the
//! default settings and shared across tests.

use std::sync::OnceLock;

use distill_lab::denoiser::train;
use distill_lab::distill::{optimize, sds_grad};
use distill_lab::{
    rng, ClassParams, Denoiser, DenoiserArch, EditProblem, Generator, Label, NoiseSchedule,
    ObjectiveKind, OptimizeConfig, SharedNoiseDraw, TrainConfig, TwoMarginalDataset, Vec2,
    Weighting,
};

fn schedule() -> &'static NoiseSchedule {
    static S: OnceLock<NoiseSchedule> = OnceLock::new();
    S.get_or_init(NoiseSchedule::default_linear)
}

fn trained() -> &'static Denoiser {
    static M: OnceLock<Denoiser> = OnceLock::new();
    M.get_or_init(|| {
        let data = TwoMarginalDataset::sample(4000, &ClassParams::default(), 1).unwrap();
        let mut d = Denoiser::new(DenoiserArch::default(), 2).unwrap();
        train(
            &mut d,
            &data,
            schedule(),
            &TrainConfig::default(),
            |_, _| {},
        )
        .unwrap();
        d
    })
}

fn problem(x0: Vec2, omega: f64) -> EditProblem {
    EditProblem {
        x0_src: x0,
        y_src: Label::Class(1),
        gen: Generator::identity(x0),
        y_tgt: Label::Class(2),
        omega,
        sub: schedule().subsequence(2, 0.02, 0.98).unwrap(),
    }
}

#[test]
fn sds_gradient_shrinks_on_distribution() {
    let mean_norm = |x0: Vec2| {
        let prob = problem(x0, 1.0);
        let mut r = rng::seeded(17);
        (0..100)
            .map(|_| {
                let draw = SharedNoiseDraw::sample(&prob.sub, &mut r);
                let g = sds_grad(&prob, &draw, trained(), Weighting::Unit, schedule()).unwrap();
                (g[0] * g[0] + g[1] * g[1]).sqrt()
            })
            .sum::<f64>()
            / 100.0
    };
    let inside = mean_norm(Vec2::new(2.0, 0.0));
    let outside = mean_norm(Vec2::new(-4.0, 3.0));
    assert!(inside < outside, "inside {inside} outside {outside}");
}

#[test]
fn zero_steps_keep_only_the_initial_state() {
    let x0 = Vec2::new(-2.0, 0.1);
    let cfg = OptimizeConfig {
        steps: 0,
        ..OptimizeConfig::default()
    };
    let r = optimize(
        &problem(x0, 7.5),
        ObjectiveKind::Pds,
        &cfg,
        trained(),
        schedule(),
    )
    .unwrap();
    assert_eq!(r.steps.len(), 1);
    assert_eq!(r.endpoint(), x0);
    assert_eq!(r.last().grad_norm, 0.0);
}

#[test]
fn pds_moves_less_than_sds_and_dds() {
    let class_params = ClassParams::default();
    let mut r = rng::seeded(5);
    let starts: Vec<Vec2> = (0..20)
        .map(|_| class_params.sample(Label::Class(1), &mut r).unwrap())
        .collect();
    let mean_displacement = |kind: ObjectiveKind| {
        starts
            .iter()
            .enumerate()
            .map(|(k, &x0)| {
                let cfg = OptimizeConfig {
                    seed: k as u64,
                    ..OptimizeConfig::default()
                };
                let rec = optimize(&problem(x0, 7.5), kind, &cfg, trained(), schedule()).unwrap();
                assert!(!rec.diverged);
                assert!(rec.steps.windows(2).all(|w| w[0].step < w[1].step));
                (rec.endpoint() - x0).norm()
            })
            .sum::<f64>()
            / starts.len() as f64
    };
    let sds = mean_displacement(ObjectiveKind::Sds);
    let dds = mean_displacement(ObjectiveKind::Dds);
    let pds = mean_displacement(ObjectiveKind::Pds);
    assert!(pds < sds.min(dds), "sds {sds} dds {dds} pds {pds}");
}
