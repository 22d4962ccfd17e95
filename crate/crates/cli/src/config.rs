//! Experiment configuration.
//!
//! Configs are TOML files with the sections below; every key is optional and
//! unknown keys are rejected. `docs/config.md` lists the full grammar.
//!
//! ```toml
//! seed = 0
//!
//! [schedule]
//! steps = 1000
//! beta_start = 1e-4
//! beta_end = 0.02
//!
//! [distill]
//! objectives = ["sds", "dds", "pds"]
//! omega = 7.5        # or a preset name: "toy", "nerf_low", "nerf_high", "svg"
//! ```

use std::path::{Path, PathBuf};

use distill_lab::denoiser::GaussianClass;
use distill_lab::optim::AdamConfig;
use distill_lab::{
    rng, ClassParams, DenoiserArch, GuidancePreset, Label, NoiseSchedule, ObjectiveKind,
    OptimizeConfig, ThetaOptimizer, TimestepSubsequence, TrainConfig, Vec2, Weighting,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Accepts either a number or the name of a [`GuidancePreset`].
fn guidance_weight<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Weight {
        Value(f64),
        Preset(String),
    }
    match Weight::deserialize(d)? {
        Weight::Value(v) => Ok(v),
        Weight::Preset(name) => name
            .parse::<GuidancePreset>()
            .map(GuidancePreset::omega)
            .map_err(serde::de::Error::custom),
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Master seed; every random stream is derived from it.
    pub seed: u64,
    pub schedule: ScheduleSection,
    pub subsequence: SubsequenceSection,
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub training: TrainingSection,
    pub distill: DistillSection,
    pub inversion: InversionSection,
    pub sdedit: SdeditSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self {
            steps: NoiseSchedule::DEFAULT_STEPS,
            beta_start: NoiseSchedule::DEFAULT_BETA_START,
            beta_end: NoiseSchedule::DEFAULT_BETA_END,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubsequenceSection {
    pub stride: usize,
    pub lo_ratio: f64,
    pub hi_ratio: f64,
}

impl Default for SubsequenceSection {
    fn default() -> Self {
        Self {
            stride: 2,
            lo_ratio: 0.02,
            hi_ratio: 0.98,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub n: usize,
    pub class1_mean: [f64; 2],
    pub class1_std: f64,
    pub class2_mean: [f64; 2],
    pub class2_std: f64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            n: 4000,
            class1_mean: [-2.0, 0.0],
            class1_std: 0.5,
            class2_mean: [2.0, 0.0],
            class2_std: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub hidden: Vec<usize>,
    pub t_embed_dim: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let arch = DenoiserArch::default();
        Self {
            hidden: arch.hidden,
            t_embed_dim: arch.t_embed_dim,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingName {
    #[default]
    Unit,
    OneMinusAlphaBar,
}

impl From<WeightingName> for Weighting {
    fn from(w: WeightingName) -> Self {
        match w {
            WeightingName::Unit => Weighting::Unit,
            WeightingName::OneMinusAlphaBar => Weighting::OneMinusAlphaBar,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub null_cond_prob: f64,
    pub weighting: WeightingName,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            steps: t.steps,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            null_cond_prob: t.null_cond_prob,
            weighting: WeightingName::Unit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerName {
    #[default]
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistillSection {
    pub objectives: Vec<String>,
    #[serde(deserialize_with = "guidance_weight")]
    pub omega: f64,
    /// Timestep weighting for SDS and DDS.
    pub weighting: WeightingName,
    pub steps: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerName,
    pub n_runs: usize,
    pub y_src: u32,
    pub y_tgt: u32,
}

impl Default for DistillSection {
    fn default() -> Self {
        Self {
            objectives: ObjectiveKind::ALL
                .iter()
                .map(|k| k.name().to_string())
                .collect(),
            omega: 7.5,
            weighting: WeightingName::Unit,
            steps: 300,
            learning_rate: 0.05,
            optimizer: OptimizerName::Sgd,
            n_runs: 20,
            y_src: 1,
            y_tgt: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InversionSection {
    pub points: usize,
    #[serde(deserialize_with = "guidance_weight")]
    pub omega: f64,
}

impl Default for InversionSection {
    fn default() -> Self {
        Self {
            points: 50,
            omega: 7.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SdeditSection {
    pub points: usize,
    /// Number of evenly spaced `t0_ratio` values in `[0, 1]`.
    pub grid: usize,
    /// Length of the denoising chain.
    pub steps: usize,
    #[serde(deserialize_with = "guidance_weight")]
    pub omega: f64,
    pub y_src: u32,
    pub y_tgt: u32,
}

impl Default for SdeditSection {
    fn default() -> Self {
        Self {
            points: 100,
            grid: 10,
            steps: distill_lab::latent::SDEDIT_STEPS,
            omega: 1.0,
            y_src: 1,
            y_tgt: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
        }
    }
}

/// Tags of the random streams derived from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedStream {
    Dataset,
    ModelInit,
    Training,
    Figure2Starts,
    Figure2Run(usize),
    Inversion,
    Sdedit,
    Sanity,
}

impl SeedStream {
    fn tag(self) -> u64 {
        match self {
            SeedStream::Dataset => 1,
            SeedStream::ModelInit => 2,
            SeedStream::Training => 3,
            SeedStream::Figure2Starts => 4,
            SeedStream::Inversion => 5,
            SeedStream::Sdedit => 6,
            SeedStream::Sanity => 7,
            SeedStream::Figure2Run(k) => 1_000 + k as u64,
        }
    }
}

fn config_err(key: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {e}"))
}

fn class_label(key: &str, y: u32) -> Result<Label, CliError> {
    if (1..=2).contains(&y) {
        Ok(Label::Class(y))
    } else {
        Err(config_err(
            key,
            format!("class label must be 1 or 2, got {y}"),
        ))
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("reading {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every module precondition the config feeds into.
    pub fn validate(&self) -> Result<(), CliError> {
        let schedule = self.schedule()?;
        self.subsequence(&schedule)?;
        self.class_params()?;
        if self.dataset.n < 2 || !self.dataset.n.is_multiple_of(2) {
            return Err(config_err("dataset.n", "must be even and at least 2"));
        }
        self.arch().validate().map_err(|e| config_err("model", e))?;
        self.train_config()
            .validate()
            .map_err(|e| config_err("training", e))?;
        self.objectives()?;
        for (key, omega) in [
            ("distill.omega", self.distill.omega),
            ("inversion.omega", self.inversion.omega),
            ("sdedit.omega", self.sdedit.omega),
        ] {
            if !omega.is_finite() {
                return Err(config_err(key, "must be finite"));
            }
        }
        if !(self.distill.learning_rate > 0.0 && self.distill.learning_rate.is_finite()) {
            return Err(config_err("distill.learning_rate", "must be positive"));
        }
        if self.distill.n_runs == 0 {
            return Err(config_err("distill.n_runs", "must be at least 1"));
        }
        class_label("distill.y_src", self.distill.y_src)?;
        class_label("distill.y_tgt", self.distill.y_tgt)?;
        class_label("sdedit.y_src", self.sdedit.y_src)?;
        class_label("sdedit.y_tgt", self.sdedit.y_tgt)?;
        if self.sdedit.grid == 0 {
            return Err(config_err("sdedit.grid", "must be at least 1"));
        }
        if self.sdedit.steps == 0 || self.sdedit.steps > self.schedule.steps {
            return Err(config_err(
                "sdedit.steps",
                format!("must lie in 1..={}", self.schedule.steps),
            ));
        }
        Ok(())
    }

    pub fn seed_for(&self, stream: SeedStream) -> u64 {
        rng::derive_seed(self.seed, stream.tag())
    }

    pub fn schedule(&self) -> Result<NoiseSchedule, CliError> {
        let s = &self.schedule;
        NoiseSchedule::linear(s.steps, s.beta_start, s.beta_end)
            .map_err(|e| config_err("schedule", e))
    }

    pub fn subsequence(&self, schedule: &NoiseSchedule) -> Result<TimestepSubsequence, CliError> {
        let s = &self.subsequence;
        schedule
            .subsequence(s.stride, s.lo_ratio, s.hi_ratio)
            .map_err(|e| config_err("subsequence", e))
    }

    pub fn class_params(&self) -> Result<ClassParams, CliError> {
        let d = &self.dataset;
        let params = ClassParams {
            classes: [
                GaussianClass {
                    mean: Vec2::from(d.class1_mean),
                    std: d.class1_std,
                },
                GaussianClass {
                    mean: Vec2::from(d.class2_mean),
                    std: d.class2_std,
                },
            ],
        };
        params.validate().map_err(|e| config_err("dataset", e))?;
        Ok(params)
    }

    pub fn arch(&self) -> DenoiserArch {
        DenoiserArch {
            hidden: self.model.hidden.clone(),
            num_classes: 2,
            t_embed_dim: self.model.t_embed_dim,
            steps: self.schedule.steps,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            steps: t.steps,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            null_cond_prob: t.null_cond_prob,
            weighting: t.weighting.into(),
            seed: self.seed_for(SeedStream::Training),
        }
    }

    pub fn objectives(&self) -> Result<Vec<ObjectiveKind>, CliError> {
        if self.distill.objectives.is_empty() {
            return Err(config_err(
                "distill.objectives",
                "must name at least one objective",
            ));
        }
        let mut out: Vec<ObjectiveKind> = Vec::new();
        for name in &self.distill.objectives {
            let kind = name
                .parse()
                .map_err(|e| config_err("distill.objectives", e))?;
            if out.contains(&kind) {
                return Err(config_err(
                    "distill.objectives",
                    format!("{kind} listed twice"),
                ));
            }
            out.push(kind);
        }
        Ok(out)
    }

    /// Optimizer settings for Figure-2 run `run`; every objective sees the
    /// same seed for a given run.
    pub fn optimize_config(&self, run: usize) -> OptimizeConfig {
        let d = &self.distill;
        let optimizer = match d.optimizer {
            OptimizerName::Sgd => ThetaOptimizer::Sgd {
                learning_rate: d.learning_rate,
            },
            OptimizerName::Adam => ThetaOptimizer::Adam(AdamConfig {
                learning_rate: d.learning_rate,
                ..AdamConfig::default()
            }),
        };
        OptimizeConfig {
            steps: d.steps,
            optimizer,
            weighting: d.weighting.into(),
            seed: self.seed_for(SeedStream::Figure2Run(run)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.objectives().unwrap(), ObjectiveKind::ALL.to_vec());
    }

    #[test]
    fn guidance_presets_by_name() {
        let cfg = ExperimentConfig::from_toml_str(
            "[distill]\nomega = \"nerf_low\"\n[inversion]\nomega = \"svg\"\n[sdedit]\nomega = 3\n",
        )
        .unwrap();
        assert_eq!(cfg.distill.omega, 30.0);
        assert_eq!(cfg.inversion.omega, 100.0);
        assert_eq!(cfg.sdedit.omega, 3.0);
        let err = ExperimentConfig::from_toml_str("[distill]\nomega = \"huge\"\n").unwrap_err();
        assert!(format!("{err:#}").contains("huge"), "{err:#}");
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = ExperimentConfig::default();
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = ExperimentConfig::from_toml_str("[distill]\nomgea = 3.0\n").unwrap_err();
        assert!(err.to_string().contains("omgea"), "{err}");
        let err = ExperimentConfig::from_toml_str("bogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn invalid_values_are_rejected() {
        for text in [
            "[schedule]\nbeta_end = 2.0\n",
            "[subsequence]\nstride = 0\n",
            "[dataset]\nclass1_std = 0.0\n",
            "[distill]\nobjectives = [\"sds\", \"xds\"]\n",
            "[distill]\ny_tgt = 3\n",
            "[distill]\nn_runs = 0\n",
            "[training]\nnull_cond_prob = 1.5\n",
            "[model]\nt_embed_dim = 3\n",
        ] {
            let err = ExperimentConfig::from_toml_str(text);
            assert!(matches!(err, Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn streams_are_distinct() {
        let cfg = ExperimentConfig::default();
        let seeds = [
            cfg.seed_for(SeedStream::Dataset),
            cfg.seed_for(SeedStream::ModelInit),
            cfg.seed_for(SeedStream::Training),
            cfg.seed_for(SeedStream::Figure2Run(0)),
            cfg.seed_for(SeedStream::Figure2Run(1)),
        ];
        for (a, x) in seeds.iter().enumerate() {
            for y in &seeds[a + 1..] {
                assert_ne!(x, y);
            }
        }
    }
}
