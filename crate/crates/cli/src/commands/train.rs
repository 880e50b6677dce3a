use std::path::PathBuf;

use clap::Args;
use fooling::dataset::mean_image;
use fooling::nnet::{evaluate_error, train_lenet, write_model, TrainConfig};
use serde::{Deserialize, Serialize};

use super::load_data;
use crate::error::CliResult;
use crate::run::{overlay, required, resolve, Common, RunDir};

#[derive(Args, Debug, Default)]
pub struct TrainArgs {
    /// MNIST IDX directory
    #[arg(long, env = "FOOLING_MNIST_DIR")]
    pub data: Option<PathBuf>,
    /// Use only the first N training images
    #[arg(long)]
    pub subset: Option<usize>,
    /// Optimizer steps [default: 10000]
    #[arg(long)]
    pub steps: Option<usize>,
    /// Minibatch size [default: 64]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Base learning rate [default: 0.01]
    #[arg(long)]
    pub base_lr: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub data: Option<PathBuf>,
    pub subset: Option<usize>,
    pub steps: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_power: f64,
    pub lr_gamma: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSettings {
            data: None,
            subset: None,
            steps: t.max_steps,
            batch_size: t.batch_size,
            base_lr: t.base_lr,
            momentum: t.momentum,
            weight_decay: t.weight_decay,
            lr_power: t.lr_power,
            lr_gamma: t.lr_gamma,
        }
    }
}

impl TrainSettings {
    pub fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            base_lr: self.base_lr,
            momentum: self.momentum,
            batch_size: self.batch_size,
            weight_decay: self.weight_decay,
            lr_power: self.lr_power,
            lr_gamma: self.lr_gamma,
            max_steps: self.steps,
            seed,
        }
    }
}

pub fn run(common: &Common, args: &TrainArgs) -> CliResult<()> {
    let (res, mut s) = resolve::<TrainSettings>(common, "train")?;
    overlay!(s, args; data, subset, steps, batch_size, base_lr);
    let data = required(s.data.clone(), "--data (MNIST IDX directory)")?;
    let mut run = RunDir::create(common, "train")?;
    let splits = load_data(&mut run, &data, s.subset)?;
    let cfg = s.config(res.seed);
    cfg.validate()?;
    let (model, report) = train_lenet(&splits.train, &cfg, Some(&splits.validation))?;
    let error = evaluate_error(&model, &splits.validation)?;

    write_model(&model, run.file("model.cnnw"))?;
    run.note_output("model.cnnw");
    run.write_json("mean.json", &mean_image(&splits.train)?)?;
    let mut log = String::from("epoch,steps,mean_loss,validation_error\n");
    for e in &report.epochs {
        let v = e.validation_error.map(|v| v.to_string()).unwrap_or_default();
        log += &format!("{},{},{},{v}\n", e.epoch, e.steps, e.mean_loss);
    }
    run.write("train_log.csv", log)?;
    run.write_json(
        "metrics.json",
        &serde_json::json!({ "train_images": splits.train.len(), "validation_images": splits.validation.len(), "error": error }),
    )?;
    println!(
        "Error {:.2}% on {} validation images ({} training images, {} steps)",
        error * 100.0,
        splits.validation.len(),
        splits.train.len(),
        s.steps
    );
    run.finish("train", res, &s)
}
