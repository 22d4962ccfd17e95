//! Benchmark fixtures shared by the criterion targets in `benches/`.

use distill_lab::{
    rng, Denoiser, DenoiserArch, EditProblem, Generator, Label, NoiseSchedule, SharedNoiseDraw,
    Vec2,
};

/// A randomly initialised default-size denoiser. Timing does not depend on
/// the weights being trained.
pub fn model() -> Denoiser {
    Denoiser::new(DenoiserArch::default(), 3).expect("default architecture is valid")
}

pub fn problem(schedule: &NoiseSchedule) -> EditProblem {
    EditProblem {
        x0_src: Vec2::new(-2.0, 0.2),
        y_src: Label::Class(1),
        gen: Generator::identity(Vec2::new(-1.5, 0.4)),
        y_tgt: Label::Class(2),
        omega: 7.5,
        sub: schedule
            .subsequence(2, 0.02, 0.98)
            .expect("default subsequence is valid"),
    }
}

pub fn draws(prob: &EditProblem, n: usize) -> Vec<SharedNoiseDraw> {
    let mut r = rng::seeded(9);
    (0..n)
        .map(|_| SharedNoiseDraw::sample(&prob.sub, &mut r))
        .collect()
}
