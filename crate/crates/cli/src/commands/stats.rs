use std::path::PathBuf;

use clap::Args;
use fooling::analysis::confidence_stats;
use serde::{Deserialize, Serialize};

use super::{load_data, load_net};
use crate::error::CliResult;
use crate::run::{overlay, required, resolve, Common, RunDir};

#[derive(Args, Debug, Default)]
pub struct StatsArgs {
    /// Model file
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// MNIST IDX directory; statistics use its validation split
    #[arg(long, env = "FOOLING_MNIST_DIR")]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsSettings {
    pub model: Option<PathBuf>,
    pub data: Option<PathBuf>,
}

pub fn run(common: &Common, args: &StatsArgs) -> CliResult<()> {
    let (res, mut s) = resolve::<StatsSettings>(common, "stats")?;
    overlay!(s, args; model, data);
    let model_path = required(s.model.clone(), "--model")?;
    let data = required(s.data.clone(), "--data (MNIST IDX directory)")?;
    let mut run = RunDir::create(common, "stats")?;
    let model = load_net(&mut run, &model_path)?;
    let splits = load_data(&mut run, &data, Some(0))?;
    let st = confidence_stats(&model, &splits.validation)?;
    let pct = |v: Option<f64>| v.map(|v| format!("{:.1}%", v * 100.0)).unwrap_or_else(|| "n/a".into());
    println!(
        "median confidence: all {:.1}%, correct {}, misclassified {} ({} of {} correct)",
        st.median_all * 100.0,
        pct(st.median_correct),
        pct(st.median_misclassified),
        st.correct,
        st.count
    );
    run.write_json("stats.json", &st)?;
    run.finish("stats", res, &s)
}
