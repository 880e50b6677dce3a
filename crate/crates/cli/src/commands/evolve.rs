use std::path::PathBuf;

use clap::Args;
use fooling::analysis::classes_at_least;
use fooling::encodings::{Encoding, EncodingConfig};
use fooling::mapelites::{archive_load, archive_save, evolve, trace_csv, EliteArchive, Evaluator, EvolveConfig};
use serde::{Deserialize, Serialize};

use super::{archive_grid, load_net};
use crate::error::{CliError, CliResult};
use crate::run::{overlay, resolve, Common, RunDir};

#[derive(Args, Debug, Default)]
pub struct EvolveArgs {
    /// Model file to fool
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Comma-separated model files; fitness is their mean confidence
    #[arg(long, value_delimiter = ',', conflicts_with = "model")]
    pub ensemble: Option<Vec<PathBuf>>,
    /// Genome encoding: direct or cppn [default: direct]
    #[arg(long)]
    pub encoding: Option<Encoding>,
    /// Generations to run [default: 200]
    #[arg(long)]
    pub generations: Option<u64>,
    /// Offspring per generation [default: 50]
    #[arg(long)]
    pub batch: Option<usize>,
    /// Score through ten crops of a larger rendered image
    #[arg(long)]
    pub crops: bool,
    /// Side of the rendered image when cropping [default: model input + 4]
    #[arg(long)]
    pub crop_size: Option<usize>,
    /// Comma-separated classes to evolve [default: all]
    #[arg(long, value_delimiter = ',')]
    pub targets: Option<Vec<usize>>,
    /// Archive directory to continue from
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveSettings {
    pub model: Option<PathBuf>,
    pub ensemble: Vec<PathBuf>,
    pub encoding: Encoding,
    pub generations: u64,
    pub batch: usize,
    pub crops: bool,
    pub crop_size: Option<usize>,
    pub targets: Option<Vec<usize>>,
    pub resume: Option<PathBuf>,
}

impl Default for EvolveSettings {
    fn default() -> Self {
        EvolveSettings {
            model: None,
            ensemble: Vec::new(),
            encoding: Encoding::Direct,
            generations: 200,
            batch: 50,
            crops: false,
            crop_size: None,
            targets: None,
            resume: None,
        }
    }
}

pub fn run(common: &Common, args: &EvolveArgs) -> CliResult<()> {
    let (res, mut s) = resolve::<EvolveSettings>(common, "evolve")?;
    overlay!(s, args; model, ensemble, encoding, generations, batch, crop_size, targets, resume);
    if args.model.is_some() {
        s.ensemble.clear();
    } else if args.ensemble.is_some() {
        s.model = None;
    }
    s.crops |= args.crops;
    let paths = match (&s.model, s.ensemble.is_empty()) {
        (Some(m), true) => vec![m.clone()],
        (None, false) => s.ensemble.clone(),
        (Some(_), false) => return Err(CliError::usage("give either --model or --ensemble, not both")),
        (None, true) => return Err(CliError::usage("missing --model or --ensemble")),
    };
    let mut run = RunDir::create(common, "evolve")?;
    let models = paths.iter().map(|p| load_net(&mut run, p)).collect::<CliResult<Vec<_>>>()?;
    let refs: Vec<_> = models.iter().collect();
    let input = models[0].input_shape();
    let mut ev = Evaluator::new(&refs)?;
    let (mut w, mut h) = (input.width, input.height);
    if s.crops {
        let side = s.crop_size.unwrap_or(input.width.max(input.height) + 4);
        ev = ev.with_crops(side, side)?;
        (w, h) = (side, side);
    }

    let mut archive = match &s.resume {
        Some(dir) => {
            run.input(dir)?;
            let a = archive_load(dir)?;
            s.encoding = a.encoding();
            a
        }
        None => {
            let classes = models[0].num_classes();
            let targets = s.targets.clone().unwrap_or_else(|| (0..classes).collect());
            EliteArchive::new(s.encoding, (w, h, input.channels), classes, targets, res.seed)?
        }
    };
    let (aw, ah, ac) = archive.dims();
    let cfg = EvolveConfig {
        generations: s.generations,
        batch_per_generation: s.batch,
        encoding: EncodingConfig::new(s.encoding, aw, ah, ac),
    };
    let start = archive.generation();
    let outcome = evolve(&mut archive, &ev, &cfg)?;

    archive_save(&archive, run.file("archive"))?;
    run.note_output("archive");
    run.write("trace.csv", trace_csv(&outcome.trace))?;
    archive_grid(&archive)?.write_png(run.file("grid.png"))?;
    run.note_output("grid.png");
    let first_99 = outcome.trace.iter().find(|t| t.max >= 0.99).map(|t| t.generation);
    let summary = serde_json::json!({
        "generations": [start, archive.generation()],
        "median_confidence": archive.median_confidence(),
        "classes_at_least_0.99": classes_at_least(&archive, 0.99),
        "classes_at_least_0.90": classes_at_least(&archive, 0.90),
        "first_generation_any_0.99": first_99,
        "confidences": fooling::analysis::archive_confidences(&archive),
    });
    run.write_json("summary.json", &summary)?;
    println!(
        "generations {}..{}: median champion confidence {:.4}, {} classes >= 0.99",
        start,
        archive.generation(),
        archive.median_confidence(),
        classes_at_least(&archive, 0.99)
    );
    run.finish("evolve", res, &s)
}
