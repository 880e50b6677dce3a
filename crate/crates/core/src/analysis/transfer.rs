use serde::{Deserialize, Serialize};

use crate::dataset::Image;
use crate::error::{Error, Result};
use crate::nnet::{argmax, ConvNet};

/// Statistics for images evolved on one model and shown to the other.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionStats {
    pub images: usize,
    pub matches: usize,
    /// Fraction of images given the same top-1 label by both models.
    pub match_rate: f64,
    /// Fraction of images matching with both confidences ≥ 0.99.
    pub match_99_rate: f64,
    /// Among matches, fraction scored at least as high by the model the
    /// image was evolved on (ties count as higher). 0 without matches.
    pub higher_on_original: f64,
}

/// Both transfer directions and their averages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    /// Model A scoring the images evolved on B.
    pub a_on_b_images: DirectionStats,
    /// Model B scoring the images evolved on A.
    pub b_on_a_images: DirectionStats,
    pub average_match_rate: f64,
    pub average_match_99_rate: f64,
    pub average_higher_on_original: f64,
}

pub const HIGH_CONFIDENCE: f64 = 0.99;

fn direction(images: &[Image], original: &ConvNet<f32>, other: &ConvNet<f32>) -> Result<DirectionStats> {
    let po = original.predict(images)?;
    let pt = other.predict(images)?;
    let mut matches = 0;
    let mut both_high = 0;
    let mut higher = 0;
    for (a, b) in po.iter().zip(&pt) {
        let (la, lb) = (argmax(a), argmax(b));
        if la != lb {
            continue;
        }
        matches += 1;
        if a[la] >= HIGH_CONFIDENCE && b[lb] >= HIGH_CONFIDENCE {
            both_high += 1;
        }
        if a[la] >= b[lb] {
            higher += 1;
        }
    }
    let n = images.len();
    let frac = |k: usize, d: usize| if d == 0 { 0.0 } else { k as f64 / d as f64 };
    Ok(DirectionStats {
        images: n,
        matches,
        match_rate: frac(matches, n),
        match_99_rate: frac(both_high, n),
        higher_on_original: frac(higher, matches),
    })
}

/// Show each model the images evolved on the other one.
pub fn cross_test(
    images_from_a: &[Image],
    images_from_b: &[Image],
    model_a: &ConvNet<f32>,
    model_b: &ConvNet<f32>,
) -> Result<TransferReport> {
    if model_a.num_classes() != model_b.num_classes() || model_a.input_shape() != model_b.input_shape() {
        return Err(Error::shape("cross-tested models differ in input shape or class count"));
    }
    let b_on_a_images = direction(images_from_a, model_a, model_b)?;
    let a_on_b_images = direction(images_from_b, model_b, model_a)?;
    let avg = |f: fn(&DirectionStats) -> f64| 0.5 * (f(&a_on_b_images) + f(&b_on_a_images));
    Ok(TransferReport {
        average_match_rate: avg(|d| d.match_rate),
        average_match_99_rate: avg(|d| d.match_99_rate),
        average_higher_on_original: avg(|d| d.higher_on_original),
        a_on_b_images,
        b_on_a_images,
    })
}

impl TransferReport {
    /// Percentages laid out as rows of metrics against the two directions.
    pub fn to_csv(&self) -> String {
        let (x, y) = (&self.a_on_b_images, &self.b_on_a_images);
        let row = |name: &str, a: f64, b: f64, avg: f64| {
            format!("{name},{:.2},{:.2},{:.2}\n", a * 100.0, b * 100.0, avg * 100.0)
        };
        let mut s = String::from("metric,DNN_A on DNN_B images,DNN_B on DNN_A images,average\n");
        s += &row("top-1 matches", x.match_rate, y.match_rate, self.average_match_rate);
        s += &row("top-1 matches scoring 99%", x.match_99_rate, y.match_99_rate, self.average_match_99_rate);
        s += &row(
            "top-1 matches scoring higher on original",
            x.higher_on_original,
            y.higher_on_original,
            self.average_higher_on_original,
        );
        s
    }
}
