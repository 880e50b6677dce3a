use serde::{Deserialize, Serialize};

use crate::dataset::{Image, LabeledDataset};
use crate::error::{Error, Result};
use crate::mapelites::EliteArchive;
use crate::nnet::{argmax, ConvNet};

use crate::mapelites::median;

/// Median top-1 confidence over a dataset, split by correctness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceStats {
    pub count: usize,
    pub correct: usize,
    pub median_all: f64,
    /// `None` when every prediction is wrong.
    pub median_correct: Option<f64>,
    /// `None` when every prediction is right.
    pub median_misclassified: Option<f64>,
}

/// Confidence statistics from precomputed probability rows.
pub fn confidence_stats_from(probs: &[Vec<f64>], labels: &[usize]) -> Result<ConfidenceStats> {
    if probs.len() != labels.len() {
        return Err(Error::shape(format!("{} probability rows for {} labels", probs.len(), labels.len())));
    }
    if probs.is_empty() {
        return Err(Error::Precondition("no samples".into()));
    }
    let mut all = Vec::with_capacity(probs.len());
    let mut right = Vec::new();
    let mut wrong = Vec::new();
    for (p, &l) in probs.iter().zip(labels) {
        let top = argmax(p);
        all.push(p[top]);
        if top == l {
            right.push(p[top]);
        } else {
            wrong.push(p[top]);
        }
    }
    let opt = |v: &[f64]| (!v.is_empty()).then(|| median(v));
    Ok(ConfidenceStats {
        count: all.len(),
        correct: right.len(),
        median_all: median(&all),
        median_correct: opt(&right),
        median_misclassified: opt(&wrong),
    })
}

pub fn confidence_stats(model: &ConvNet<f32>, ds: &LabeledDataset) -> Result<ConfidenceStats> {
    let probs = model.predict(ds.images())?;
    confidence_stats_from(&probs, ds.labels())
}

/// Per-class champion confidence of an archive; empty slots are 0.
pub fn archive_confidences(archive: &EliteArchive) -> Vec<f64> {
    (0..archive.num_classes()).map(|c| archive.confidence(c).unwrap_or(0.0)).collect()
}

/// Number of classes whose champion reaches `threshold`.
pub fn classes_at_least(archive: &EliteArchive, threshold: f64) -> usize {
    archive_confidences(archive).iter().filter(|&&v| v >= threshold).count()
}

/// Median-over-runs confidence per class, as a grayscale strip and a CSV.
#[derive(Clone, Debug)]
pub struct Heatmap {
    pub medians: Vec<f64>,
    /// `classes * scale` wide, `scale` tall; intensity = round(255 · median).
    pub image: Image,
    pub csv: String,
}

/// `per_run[r][c]` is the confidence of class `c` in run `r`.
pub fn emit_heatmap(per_run: &[Vec<f64>], scale: usize) -> Result<Heatmap> {
    let Some(first) = per_run.first() else {
        return Err(Error::Precondition("heatmap needs at least one run".into()));
    };
    let classes = first.len();
    if classes == 0 || scale == 0 {
        return Err(Error::Precondition("heatmap needs classes and a positive scale".into()));
    }
    if let Some(r) = per_run.iter().position(|r| r.len() != classes) {
        return Err(Error::shape(format!("run {r} has {} classes, expected {classes}", per_run[r].len())));
    }
    if per_run.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite confidence".into()));
    }
    let medians: Vec<f64> = (0..classes)
        .map(|c| median(&per_run.iter().map(|r| r[c]).collect::<Vec<_>>()))
        .collect();
    let w = classes * scale;
    let mut image = Image::filled(w, scale, 1, 0)?;
    for y in 0..scale {
        for x in 0..w {
            image.set(x, y, 0, (medians[x / scale].clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    let mut csv = String::from("class,median");
    for r in 0..per_run.len() {
        csv += &format!(",run_{r}");
    }
    csv.push('\n');
    for (c, m) in medians.iter().enumerate() {
        csv += &format!("{c},{m:.6}");
        for run in per_run {
            csv += &format!(",{:.6}", run[c]);
        }
        csv.push('\n');
    }
    Ok(Heatmap { medians, image, csv })
}
