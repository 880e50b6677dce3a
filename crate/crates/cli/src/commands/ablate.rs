use std::path::PathBuf;

use clap::Args;
use fooling::analysis::{ablate_region, ablation_delta, mean_fill, Region};
use fooling::dataset::Image;
use fooling::nnet::argmax;
use serde::{Deserialize, Serialize};

use super::{load_mean, load_net};
use crate::error::{CliError, CliResult};
use crate::run::{existing, overlay, required, resolve, Common, RunDir};

#[derive(Args, Debug, Default)]
pub struct AblateArgs {
    /// Model file
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// PGM or PPM image
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Class whose confidence is tracked [default: the model's top-1]
    #[arg(long)]
    pub class: Option<usize>,
    /// Region as x,y,width,height; repeatable
    #[arg(long = "region")]
    pub regions: Option<Vec<String>>,
    /// Also ablate each cell of an N×N tiling [default: 4 when no region is given]
    #[arg(long)]
    pub tiles: Option<usize>,
    /// Fill value per channel, comma-separated [default: dataset mean pixel]
    #[arg(long, value_delimiter = ',')]
    pub fill: Option<Vec<u8>>,
    /// Mean image JSON written by `train`
    #[arg(long)]
    pub mean: Option<PathBuf>,
    /// MNIST IDX directory, used for the mean when --mean is absent
    #[arg(long, env = "FOOLING_MNIST_DIR")]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateSettings {
    pub model: Option<PathBuf>,
    pub image: Option<PathBuf>,
    pub class: Option<usize>,
    pub regions: Vec<String>,
    pub tiles: Option<usize>,
    pub fill: Option<Vec<u8>>,
    pub mean: Option<PathBuf>,
    pub data: Option<PathBuf>,
}

fn parse_region(s: &str) -> CliResult<Region> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::usage(format!("region {s:?}: {e}")))?;
    match parts[..] {
        [x, y, w, h] => Ok(Region::new(x, y, w, h)),
        _ => Err(CliError::usage(format!("region {s:?} must be x,y,width,height"))),
    }
}

/// N×N cells covering the image; the last row and column take the remainder.
fn tiling(img: &Image, n: usize) -> Vec<Region> {
    let (w, h) = (img.width(), img.height());
    let edges = |len: usize, i: usize| i * len / n;
    let mut out = Vec::new();
    for ty in 0..n {
        for tx in 0..n {
            let (x0, x1) = (edges(w, tx), edges(w, tx + 1));
            let (y0, y1) = (edges(h, ty), edges(h, ty + 1));
            out.push(Region::new(x0, y0, x1 - x0, y1 - y0));
        }
    }
    out
}

pub fn run(common: &Common, args: &AblateArgs) -> CliResult<()> {
    let (res, mut s) = resolve::<AblateSettings>(common, "ablate")?;
    overlay!(s, args; model, image, class, regions, tiles, fill, mean, data);
    let model_path = required(s.model.clone(), "--model")?;
    let image_path = required(s.image.clone(), "--image")?;
    if s.tiles == Some(0) {
        return Err(CliError::usage("--tiles must be at least 1"));
    }
    let mut regions = s.regions.iter().map(|r| parse_region(r)).collect::<CliResult<Vec<_>>>()?;
    let mut run = RunDir::create(common, "ablate")?;
    let model = load_net(&mut run, &model_path)?;
    existing(&image_path, "image")?;
    run.input(&image_path)?;
    let image = Image::read_pnm(&image_path)?;
    if let Some(n) = s.tiles.or(regions.is_empty().then_some(4)) {
        regions.extend(tiling(&image, n));
    }
    let fill = match &s.fill {
        Some(f) => f.clone(),
        None => mean_fill(&load_mean(&mut run, s.mean.as_deref(), s.data.as_deref())?),
    };
    let class = match s.class {
        Some(c) => c,
        None => argmax(&model.classify(&image)?),
    };
    let base = model.classify(&image)?[class];
    let deltas = ablation_delta(&model, &image, &regions, class, &fill)?;

    let mut csv = String::from("region,x,y,width,height,delta\n");
    for (k, (r, d)) in regions.iter().zip(&deltas).enumerate() {
        csv += &format!("{k},{},{},{},{},{d}\n", r.x, r.y, r.width, r.height);
        let name = format!("ablated_{k}.png");
        ablate_region(&image, *r, &fill)?.write_png(run.file(&name))?;
        run.note_output(&name);
    }
    run.write("ablation.csv", csv)?;
    let best = deltas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    println!("class {class}: confidence {base:.6}, largest drop {best:.6} over {} regions", regions.len());
    run.finish("ablate", res, &s)
}
