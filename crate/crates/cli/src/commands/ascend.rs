use std::path::PathBuf;

use clap::Args;
use fooling::analysis::emit_grid;
use fooling::gradascent::{ascend, AscentConfig, Variant};
use fooling::par;
use serde::{Deserialize, Serialize};

use super::{caption, load_mean, load_net};
use crate::error::{CliError, CliResult};
use crate::run::{overlay, required, resolve, Common, RunDir};

#[derive(Args, Debug, Default)]
pub struct AscendArgs {
    /// Model file
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Mean image JSON written by `train`
    #[arg(long)]
    pub mean: Option<PathBuf>,
    /// MNIST IDX directory, used for the mean image when --mean is absent
    #[arg(long, env = "FOOLING_MNIST_DIR")]
    pub data: Option<PathBuf>,
    /// Comma-separated recipes: plain, l2, blur-l1, aggressive [default: plain]
    #[arg(long, value_delimiter = ',')]
    pub variant: Option<Vec<Variant>>,
    /// Target class
    #[arg(long, conflicts_with = "all_classes")]
    pub class: Option<usize>,
    /// One image per class
    #[arg(long)]
    pub all_classes: bool,
    /// Step limit [default: 2000]
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Gradient step size; overrides the recipe's value
    #[arg(long)]
    pub learning_rate: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AscendSettings {
    pub model: Option<PathBuf>,
    pub mean: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub variant: Vec<Variant>,
    pub class: Option<usize>,
    pub all_classes: bool,
    pub max_steps: usize,
    pub learning_rate: Option<f64>,
}

impl Default for AscendSettings {
    fn default() -> Self {
        AscendSettings {
            model: None,
            mean: None,
            data: None,
            variant: vec![Variant::Plain],
            class: None,
            all_classes: false,
            max_steps: AscentConfig::default().max_steps,
            learning_rate: None,
        }
    }
}

pub fn run(common: &Common, args: &AscendArgs) -> CliResult<()> {
    let (res, mut s) = resolve::<AscendSettings>(common, "ascend")?;
    overlay!(s, args; model, mean, data, variant, class, max_steps, learning_rate);
    if args.all_classes {
        s.all_classes = true;
        s.class = None;
    } else if args.class.is_some() {
        s.all_classes = false;
    }
    let model_path = required(s.model.clone(), "--model")?;
    if s.variant.is_empty() {
        return Err(CliError::usage("--variant needs at least one recipe"));
    }
    let mut run = RunDir::create(common, "ascend")?;
    let model = load_net(&mut run, &model_path)?;
    let mean = load_mean(&mut run, s.mean.as_deref(), s.data.as_deref())?;
    let classes: Vec<usize> = match (s.all_classes, s.class) {
        (true, _) => (0..model.num_classes()).collect(),
        (false, Some(c)) => vec![c],
        (false, None) => return Err(CliError::usage("give --class or --all-classes")),
    };

    let jobs: Vec<(Variant, usize)> = s.variant.iter().flat_map(|&v| classes.iter().map(move |&c| (v, c))).collect();
    let results = par::map_slice(&jobs, |&(v, c)| {
        let mut cfg = AscentConfig::variant(v, c, res.seed);
        cfg.max_steps = s.max_steps;
        if let Some(lr) = s.learning_rate {
            cfg.learning_rate = lr;
        }
        ascend(&model, &mean, &cfg)
    });
    let mut summary = String::from("variant,class,confidence,image_confidence,steps,reached\n");
    let mut images = Vec::new();
    let mut captions = Vec::new();
    for (&(v, c), r) in jobs.iter().zip(results) {
        let r = r?;
        let stem = format!("{}_class_{c}", v.name());
        r.image.write_png(run.file(&format!("{stem}.png")))?;
        run.note_output(&format!("{stem}.png"));
        run.write(&format!("{stem}_trace.csv"), r.trace_csv())?;
        let steps = r.trace.len() - 1;
        summary += &format!("{},{c},{},{},{steps},{}\n", v.name(), r.confidence, r.image_confidence, r.reached);
        println!("{:>10} class {c}: confidence {:.6} after {steps} steps", v.name(), r.confidence);
        captions.push(caption(c, r.confidence));
        images.push(r.image);
    }
    run.write("summary.csv", summary)?;
    emit_grid(&images, &captions, classes.len())?.write_png(run.file("grid.png"))?;
    run.note_output("grid.png");
    run.finish("ascend", res, &s)
}
