pub mod ablate;
pub mod ascend;
pub mod evolve;
pub mod report;
pub mod retrain;
pub mod stats;
pub mod train;

use std::path::Path;

use fooling::analysis::emit_grid;
use fooling::dataset::{load_mnist, mean_image, Image, MeanImage, MnistSplits};
use fooling::mapelites::EliteArchive;
use fooling::nnet::{read_model, ConvNet};

use crate::error::{CliError, CliResult};
use crate::run::{existing, io_err, RunDir};

pub fn load_data(run: &mut RunDir, dir: &Path, subset: Option<usize>) -> CliResult<MnistSplits> {
    existing(dir, "data directory")?;
    let splits = load_mnist(dir, subset)?;
    run.input(dir)?;
    Ok(splits)
}

pub fn load_net(run: &mut RunDir, path: &Path) -> CliResult<ConvNet<f32>> {
    existing(path, "model")?;
    run.input(path)?;
    Ok(read_model(path)?)
}

/// Mean image from a `mean.json` written by `train`, else from the data.
pub fn load_mean(run: &mut RunDir, mean: Option<&Path>, data: Option<&Path>) -> CliResult<MeanImage> {
    match (mean, data) {
        (Some(p), _) => {
            existing(p, "mean image")?;
            run.input(p)?;
            let text = std::fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            Ok(serde_json::from_str(&text).map_err(fooling::Error::from)?)
        }
        (None, Some(d)) => Ok(mean_image(&load_data(run, d, None)?.train)?),
        (None, None) => Err(CliError::usage("need --mean or --data for the mean image")),
    }
}

pub fn caption(class: usize, confidence: f64) -> String {
    format!("{class}:{:.1}", confidence * 100.0)
}

/// One cell per class of the archive; empty slots render black.
pub fn archive_grid(archive: &EliteArchive) -> fooling::Result<Image> {
    let (w, h, c) = archive.dims();
    let mut images = Vec::new();
    let mut captions = Vec::new();
    for class in 0..archive.num_classes() {
        match archive.elite(class) {
            Some(e) => {
                images.push(e.image.clone());
                captions.push(caption(class, e.confidence));
            }
            None => {
                images.push(Image::filled(w, h, c, 0)?);
                captions.push(format!("{class}:-"));
            }
        }
    }
    emit_grid(&images, &captions, archive.num_classes())
}
