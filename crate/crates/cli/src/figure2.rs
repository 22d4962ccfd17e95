//! The two-marginal comparison: SDS, DDS and PDS started from class-1
//! samples and driven toward class 2.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::Context;
use distill_lab::distill::optimize;
use distill_lab::{
    rng, ClassParams, EditProblem, Generator, Label, NoisePredictor, ObjectiveKind,
    TrajectoryRecord, Vec2,
};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, SeedStream};
use crate::output::{create_dir, float};

pub const TRAJECTORY_DIR: &str = "trajectories";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const ENDPOINTS_FILE: &str = "endpoints.csv";
pub const PLOT_DATA_FILE: &str = "plot_data.csv";
pub const METADATA_FILE: &str = "metadata.toml";

/// Minimum target-side fraction expected of SDS and DDS endpoints.
pub const MIN_TARGET_FRACTION: f64 = 0.8;

/// Settings the reference experiment does not publish; chosen here.
const UNPUBLISHED_SETTINGS: [&str; 6] = [
    "distill.steps",
    "distill.n_runs",
    "distill.learning_rate",
    "distill.optimizer",
    "distill.omega",
    "distill.weighting",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Figure2Run {
    pub objective: ObjectiveKind,
    pub run: usize,
    pub record: TrajectoryRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunEndpoint {
    pub objective: ObjectiveKind,
    pub run: usize,
    pub start: Vec2,
    pub end: Vec2,
    pub displacement: f64,
    /// Positive on the class-2 side of the boundary.
    pub signed_distance: f64,
    pub diverged: bool,
}

impl RunEndpoint {
    fn new(
        objective: ObjectiveKind,
        run: usize,
        start: Vec2,
        end: Vec2,
        diverged: bool,
        class_params: &ClassParams,
    ) -> Self {
        Self {
            objective,
            run,
            start,
            end,
            displacement: (end - start).norm(),
            signed_distance: class_params.signed_distance(end),
            diverged,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveSummary {
    pub objective: ObjectiveKind,
    pub n_runs: usize,
    pub n_diverged: usize,
    pub mean_displacement: f64,
    pub mean_signed_distance: f64,
    pub mean_abs_signed_distance: f64,
    /// Fraction of endpoints whose nearest class is the target class.
    pub frac_target_side: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Figure2Summary {
    pub objectives: Vec<ObjectiveSummary>,
    pub endpoints: Vec<RunEndpoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Figure2Outcome {
    pub starts: Vec<Vec2>,
    pub runs: Vec<Figure2Run>,
    pub summary: Figure2Summary,
}

/// One start point per run, drawn from the source class.
pub fn figure2_starts(cfg: &ExperimentConfig) -> anyhow::Result<Vec<Vec2>> {
    let class_params = cfg.class_params()?;
    let mut r = rng::seeded(cfg.seed_for(SeedStream::Figure2Starts));
    (0..cfg.distill.n_runs)
        .map(|_| Ok(class_params.sample(Label::Class(cfg.distill.y_src), &mut r)?))
        .collect()
}

/// Runs every (objective, run) job on `pool`. Results come back in config
/// order whatever the thread count.
pub fn run_figure2<P: NoisePredictor + Sync + ?Sized>(
    cfg: &ExperimentConfig,
    model: &P,
    pool: &rayon::ThreadPool,
) -> anyhow::Result<Figure2Outcome> {
    let schedule = cfg.schedule()?;
    let sub = cfg.subsequence(&schedule)?;
    let class_params = cfg.class_params()?;
    let objectives = cfg.objectives()?;
    let starts = figure2_starts(cfg)?;
    let jobs: Vec<(ObjectiveKind, usize)> = objectives
        .iter()
        .flat_map(|&k| (0..starts.len()).map(move |run| (k, run)))
        .collect();

    let runs: Vec<Figure2Run> = pool.install(|| {
        jobs.par_iter()
            .map(|&(objective, run)| {
                let x0 = starts[run];
                let prob = EditProblem {
                    x0_src: x0,
                    y_src: Label::Class(cfg.distill.y_src),
                    gen: Generator::identity(x0),
                    y_tgt: Label::Class(cfg.distill.y_tgt),
                    omega: cfg.distill.omega,
                    sub: sub.clone(),
                };
                let record = optimize(
                    &prob,
                    objective,
                    &cfg.optimize_config(run),
                    model,
                    &schedule,
                )?;
                Ok(Figure2Run {
                    objective,
                    run,
                    record,
                })
            })
            .collect::<anyhow::Result<_>>()
    })?;

    let endpoints: Vec<RunEndpoint> = runs
        .iter()
        .map(|r| {
            RunEndpoint::new(
                r.objective,
                r.run,
                starts[r.run],
                r.record.endpoint(),
                r.record.diverged,
                &class_params,
            )
        })
        .collect();
    let summary = summarize(endpoints, &class_params, Label::Class(cfg.distill.y_tgt));
    Ok(Figure2Outcome {
        starts,
        runs,
        summary,
    })
}

/// Per-objective means, in order of first appearance.
pub fn summarize(
    endpoints: Vec<RunEndpoint>,
    class_params: &ClassParams,
    y_tgt: Label,
) -> Figure2Summary {
    let mut order: Vec<ObjectiveKind> = Vec::new();
    for e in &endpoints {
        if !order.contains(&e.objective) {
            order.push(e.objective);
        }
    }
    let objectives = order
        .into_iter()
        .map(|objective| {
            let mine: Vec<&RunEndpoint> = endpoints
                .iter()
                .filter(|e| e.objective == objective)
                .collect();
            let n = mine.len() as f64;
            let mean = |f: &dyn Fn(&RunEndpoint) -> f64| mine.iter().map(|e| f(e)).sum::<f64>() / n;
            ObjectiveSummary {
                objective,
                n_runs: mine.len(),
                n_diverged: mine.iter().filter(|e| e.diverged).count(),
                mean_displacement: mean(&|e| e.displacement),
                mean_signed_distance: mean(&|e| e.signed_distance),
                mean_abs_signed_distance: mean(&|e| e.signed_distance.abs()),
                frac_target_side: mean(&|e| {
                    f64::from(u8::from(class_params.nearest_class(e.end) == y_tgt))
                }),
            }
        })
        .collect();
    Figure2Summary {
        objectives,
        endpoints,
    }
}

impl Figure2Summary {
    pub fn get(&self, kind: ObjectiveKind) -> Option<&ObjectiveSummary> {
        self.objectives.iter().find(|s| s.objective == kind)
    }

    pub fn any_diverged(&self) -> bool {
        self.objectives.iter().any(|s| s.n_diverged > 0)
    }

    /// Ordering checks; empty unless all three objectives ran.
    pub fn checks(&self) -> Vec<Check> {
        let (Some(sds), Some(dds), Some(pds)) = (
            self.get(ObjectiveKind::Sds),
            self.get(ObjectiveKind::Dds),
            self.get(ObjectiveKind::Pds),
        ) else {
            return Vec::new();
        };
        let mut checks = vec![
            Check {
                name: "pds displacement below sds and dds".into(),
                passed: pds.mean_displacement < sds.mean_displacement.min(dds.mean_displacement),
                detail: format!(
                    "sds {:.4} dds {:.4} pds {:.4}",
                    sds.mean_displacement, dds.mean_displacement, pds.mean_displacement
                ),
            },
            Check {
                name: "pds ends nearest the boundary".into(),
                passed: pds.mean_abs_signed_distance < sds.mean_abs_signed_distance
                    && pds.mean_abs_signed_distance < dds.mean_abs_signed_distance,
                detail: format!(
                    "mean |signed distance| sds {:.4} dds {:.4} pds {:.4}",
                    sds.mean_abs_signed_distance,
                    dds.mean_abs_signed_distance,
                    pds.mean_abs_signed_distance
                ),
            },
        ];
        for s in [sds, dds] {
            checks.push(Check {
                name: format!("{} reaches the target side", s.objective),
                passed: s.frac_target_side >= MIN_TARGET_FRACTION,
                detail: format!(
                    "fraction {:.2} (need >= {MIN_TARGET_FRACTION})",
                    s.frac_target_side
                ),
            });
        }
        checks
    }

    pub fn write_summary_csv(&self, path: &Path) -> anyhow::Result<()> {
        let mut w =
            csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
        w.write_record([
            "objective",
            "n_runs",
            "n_diverged",
            "mean_displacement",
            "mean_signed_distance",
            "mean_abs_signed_distance",
            "frac_target_side",
        ])?;
        for s in &self.objectives {
            w.write_record([
                s.objective.to_string(),
                s.n_runs.to_string(),
                s.n_diverged.to_string(),
                float(s.mean_displacement),
                float(s.mean_signed_distance),
                float(s.mean_abs_signed_distance),
                float(s.frac_target_side),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_endpoints_csv(&self, path: &Path) -> anyhow::Result<()> {
        let mut w =
            csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
        w.write_record([
            "objective",
            "run",
            "start_x",
            "start_y",
            "end_x",
            "end_y",
            "displacement",
            "signed_distance",
            "diverged",
        ])?;
        for e in &self.endpoints {
            w.write_record([
                e.objective.to_string(),
                e.run.to_string(),
                float(e.start.x),
                float(e.start.y),
                float(e.end.x),
                float(e.end.y),
                float(e.displacement),
                float(e.signed_distance),
                e.diverged.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn trajectory_file_name(objective: ObjectiveKind, run: usize) -> String {
    format!("{objective}_run{run:03}.csv")
}

/// Writes trajectories, summary, endpoints, plot data and metadata under
/// `dir`.
pub fn write_figure2(
    outcome: &Figure2Outcome,
    cfg: &ExperimentConfig,
    dir: &Path,
) -> anyhow::Result<()> {
    let traj_dir = dir.join(TRAJECTORY_DIR);
    create_dir(&traj_dir)?;
    for r in &outcome.runs {
        let path = traj_dir.join(trajectory_file_name(r.objective, r.run));
        let mut w = BufWriter::new(
            File::create(&path).with_context(|| format!("creating {}", path.display()))?,
        );
        r.record.write_csv(&mut w)?;
    }
    outcome.summary.write_summary_csv(&dir.join(SUMMARY_FILE))?;
    outcome
        .summary
        .write_endpoints_csv(&dir.join(ENDPOINTS_FILE))?;
    write_plot_data(outcome, &cfg.class_params()?, &dir.join(PLOT_DATA_FILE))?;
    write_metadata(cfg, &dir.join(METADATA_FILE))?;
    Ok(())
}

/// Long-format plot data: `series, objective, run, step, x, y`.
fn write_plot_data(
    outcome: &Figure2Outcome,
    class_params: &ClassParams,
    path: &Path,
) -> anyhow::Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["series", "objective", "run", "step", "x", "y"])?;
    let mut row = |series: &str, objective: &str, run: String, step: String, p: Vec2| {
        w.write_record([series, objective, &run, &step, &float(p.x), &float(p.y)])
    };
    let n = class_params.boundary_normal();
    let tangent = Vec2::new(-n.y, n.x);
    let half = 2.0 * (class_params.classes[1].mean - class_params.classes[0].mean).norm();
    for (k, sign) in [-1.0, 1.0].into_iter().enumerate() {
        let p = class_params.boundary_point() + sign * half * tangent;
        row("boundary", "", String::new(), k.to_string(), p)?;
    }
    for (k, c) in class_params.classes.iter().enumerate() {
        row("class_mean", "", (k + 1).to_string(), String::new(), c.mean)?;
    }
    for (run, s) in outcome.starts.iter().enumerate() {
        row("start", "", run.to_string(), "0".into(), *s)?;
    }
    for r in &outcome.runs {
        let name = r.objective.to_string();
        for s in &r.record.steps {
            row(
                "trajectory",
                &name,
                r.run.to_string(),
                s.step.to_string(),
                s.x0_tgt,
            )?;
        }
        let last = r.record.last();
        row(
            "endpoint",
            &name,
            r.run.to_string(),
            last.step.to_string(),
            last.x0_tgt,
        )?;
    }
    w.flush()?;
    Ok(())
}

fn write_metadata(cfg: &ExperimentConfig, path: &Path) -> anyhow::Result<()> {
    let mut table = toml::Table::new();
    table.insert(
        "non_paper_settings".into(),
        toml::Value::Array(
            UNPUBLISHED_SETTINGS
                .iter()
                .map(|s| toml::Value::from(*s))
                .collect(),
        ),
    );
    table.insert(
        "note".into(),
        toml::Value::from(
            "Step count, start count, learning rate, optimizer, guidance weight and weighting \
             of the comparison are unpublished; the values below are this project's defaults.",
        ),
    );
    table.insert("config".into(), toml::Value::try_from(cfg)?);
    std::fs::write(path, toml::to_string(&table)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Rebuilds the summary from the per-run trajectory CSVs alone. A run whose
/// file holds fewer than `steps + 1` rows stopped early and counts as
/// diverged.
pub fn summary_from_trajectories(
    dir: &Path,
    cfg: &ExperimentConfig,
) -> anyhow::Result<Figure2Summary> {
    let class_params = cfg.class_params()?;
    let mut found: BTreeMap<(usize, usize), RunEndpoint> = BTreeMap::new();
    let order = cfg.objectives()?;
    let traj_dir = dir.join(TRAJECTORY_DIR);
    for entry in
        std::fs::read_dir(&traj_dir).with_context(|| format!("listing {}", traj_dir.display()))?
    {
        let path: PathBuf = entry?.path();
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        let Some((name, run)) = stem.split_once("_run") else {
            continue;
        };
        let objective: ObjectiveKind = name.parse()?;
        let run: usize = run
            .parse()
            .with_context(|| format!("run index in {}", path.display()))?;
        let mut reader = csv::Reader::from_path(&path)?;
        let headers = reader.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .with_context(|| format!("{} lacks column {name}", path.display()))
        };
        let (cx, cy) = (col("x0_tgt_x")?, col("x0_tgt_y")?);
        let mut points = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            points.push(Vec2::new(rec[cx].parse()?, rec[cy].parse()?));
        }
        let (Some(&start), Some(&end)) = (points.first(), points.last()) else {
            anyhow::bail!("{} has no rows", path.display());
        };
        let diverged = points.len() < cfg.distill.steps + 1;
        let slot = order
            .iter()
            .position(|k| *k == objective)
            .unwrap_or(order.len());
        found.insert(
            (slot, run),
            RunEndpoint::new(objective, run, start, end, diverged, &class_params),
        );
    }
    Ok(summarize(
        found.into_values().collect(),
        &class_params,
        Label::Class(cfg.distill.y_tgt),
    ))
}
