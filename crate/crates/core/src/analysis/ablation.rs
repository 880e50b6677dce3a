use serde::{Deserialize, Serialize};

use crate::dataset::{Image, MeanImage};
use crate::error::{Error, Result};
use crate::nnet::ConvNet;

/// Axis-aligned pixel rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Region {
    pub fn new(x: usize, y: usize, width: usize, height: usize) -> Self {
        Region { x, y, width, height }
    }

    pub fn whole(image: &Image) -> Self {
        Region::new(0, 0, image.width(), image.height())
    }
}

/// Per-channel average of the mean image, rounded to a byte.
pub fn mean_fill(mean: &MeanImage) -> Vec<u8> {
    let c = mean.channels;
    let plane = (mean.width * mean.height) as f64;
    (0..c)
        .map(|ch| {
            let s: f64 = mean.values.iter().skip(ch).step_by(c).sum();
            (s / plane).round().clamp(0.0, 255.0) as u8
        })
        .collect()
}

/// Copy of `image` with `region` overwritten by `fill` (one value per channel).
pub fn ablate_region(image: &Image, region: Region, fill: &[u8]) -> Result<Image> {
    if fill.len() != image.channels() {
        return Err(Error::shape(format!("fill has {} channels, image {}", fill.len(), image.channels())));
    }
    let fits = region.x.checked_add(region.width).is_some_and(|r| r <= image.width())
        && region.y.checked_add(region.height).is_some_and(|b| b <= image.height());
    if !fits {
        return Err(Error::Range(format!(
            "region {region:?} exceeds the {}x{} image",
            image.width(),
            image.height()
        )));
    }
    let mut out = image.clone();
    for y in region.y..region.y + region.height {
        for x in region.x..region.x + region.width {
            for (c, &v) in fill.iter().enumerate() {
                out.set(x, y, c, v);
            }
        }
    }
    Ok(out)
}

/// conf(original) − conf(ablated) for each region, for `class`.
pub fn ablation_delta(
    model: &ConvNet<f32>,
    image: &Image,
    regions: &[Region],
    class: usize,
    fill: &[u8],
) -> Result<Vec<f64>> {
    if class >= model.num_classes() {
        return Err(Error::Range(format!("class {class} >= {} classes", model.num_classes())));
    }
    if regions.is_empty() {
        return Ok(Vec::new());
    }
    let mut batch = vec![image.clone()];
    for r in regions {
        batch.push(ablate_region(image, *r, fill)?);
    }
    let probs = model.predict(&batch)?;
    let base = probs[0][class];
    Ok(probs[1..].iter().map(|p| base - p[class]).collect())
}
