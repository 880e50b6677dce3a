use std::path::PathBuf;

use clap::{Args, ValueEnum};
use fooling::encodings::{Encoding, EncodingConfig};
use fooling::mapelites::EvolveConfig;
use fooling::nnet::write_model;
use fooling::retrain::{metrics_csv, retrain_loop, RetrainConfig, RetrainSchedule};
use serde::{Deserialize, Serialize};

use super::{archive_grid, load_data, load_net};
use super::train::TrainSettings;
use crate::error::CliResult;
use crate::run::{overlay, required, resolve, Common, RunDir};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 600/100 images, then 100/10 per iteration
    Desk,
    /// 6000/1000 images, then 1000/100 per iteration
    Full,
}

/// A named preset or explicit pool sizes (config file only).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Schedule {
    Preset(Preset),
    Custom(RetrainSchedule),
}

impl Schedule {
    fn resolve(self) -> RetrainSchedule {
        match self {
            Schedule::Preset(Preset::Desk) => RetrainSchedule::DESK,
            Schedule::Preset(Preset::Full) => RetrainSchedule::FULL,
            Schedule::Custom(s) => s,
        }
    }
}

impl From<Preset> for Schedule {
    fn from(p: Preset) -> Self {
        Schedule::Preset(p)
    }
}

#[derive(Args, Debug, Default)]
pub struct RetrainArgs {
    /// MNIST IDX directory
    #[arg(long, env = "FOOLING_MNIST_DIR")]
    pub data: Option<PathBuf>,
    /// Use only the first N training images
    #[arg(long)]
    pub subset: Option<usize>,
    /// Model standing in for iteration 1 (trained on plain MNIST)
    #[arg(long)]
    pub initial: Option<PathBuf>,
    /// Iterations [default: 3]
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Fooling-pool sizes [default: desk]
    #[arg(long, value_enum)]
    pub schedule: Option<Preset>,
    /// Minimum evolution runs per re-attack [default: 30]
    #[arg(long)]
    pub min_runs: Option<usize>,
    /// Generations per evolution run [default: 200]
    #[arg(long)]
    pub generations: Option<u64>,
    /// Training steps per iteration [default: 10000]
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrainSettings {
    pub data: Option<PathBuf>,
    pub subset: Option<usize>,
    pub initial: Option<PathBuf>,
    pub iterations: usize,
    pub schedule: Schedule,
    pub min_runs: usize,
    pub images_per_run: usize,
    pub encoding: Encoding,
    pub generations: u64,
    pub batch: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub base_lr: f64,
}

impl Default for RetrainSettings {
    fn default() -> Self {
        let r = RetrainConfig::mnist(3, 1);
        let t = TrainSettings::default();
        RetrainSettings {
            data: None,
            subset: None,
            initial: None,
            iterations: r.iterations,
            schedule: Schedule::Preset(Preset::Desk),
            min_runs: r.min_runs,
            images_per_run: r.images_per_run,
            encoding: Encoding::Cppn,
            generations: r.evolve.generations,
            batch: r.evolve.batch_per_generation,
            steps: t.steps,
            batch_size: t.batch_size,
            base_lr: t.base_lr,
        }
    }
}

pub fn run(common: &Common, args: &RetrainArgs) -> CliResult<()> {
    let (res, mut s) = resolve::<RetrainSettings>(common, "retrain-loop")?;
    overlay!(s, args; data, subset, initial, iterations, schedule, min_runs, generations, steps);
    let data = required(s.data.clone(), "--data (MNIST IDX directory)")?;
    let mut run = RunDir::create(common, "retrain-loop")?;
    let base = load_data(&mut run, &data, s.subset)?;
    let initial = s.initial.as_deref().map(|p| load_net(&mut run, p)).transpose()?;

    let mut cfg = RetrainConfig::mnist(s.iterations, res.seed);
    cfg.schedule = s.schedule.resolve();
    cfg.min_runs = s.min_runs;
    cfg.images_per_run = s.images_per_run;
    cfg.evolve = EvolveConfig { generations: s.generations, batch_per_generation: s.batch, encoding: EncodingConfig::mnist(s.encoding) };
    cfg.train = TrainSettings { steps: s.steps, batch_size: s.batch_size, base_lr: s.base_lr, ..TrainSettings::default() }.config(res.seed);

    let dir = run.path.clone();
    let mut written = Vec::new();
    let rows = retrain_loop(&base, &cfg, initial, &mut |out| {
        let i = out.row.iteration;
        let name = format!("model_iter_{i}.cnnw");
        write_model(&out.model, dir.join(&name))?;
        written.push(name);
        if let Some(first) = out.runs.first() {
            let grid = format!("iter_{i}_grid.png");
            archive_grid(&first.last)?.write_png(dir.join(&grid))?;
            written.push(grid);
        }
        let score = out.row.score.map(|v| format!("{:.2}%", v * 100.0)).unwrap_or_else(|| "-".into());
        println!(
            "iteration {i}: error {:.2}%, MNIST error {:.2}%, train {}, val {}, score {score}",
            out.row.error * 100.0,
            out.row.mnist_error * 100.0,
            out.row.train,
            out.row.val
        );
        Ok(())
    })?;
    for w in &written {
        run.note_output(w);
    }
    run.write("metrics.csv", metrics_csv(&rows))?;
    run.finish("retrain-loop", res, &s)
}
