//! Image containers, MNIST ingestion, the dataset mean and the "+1" fooling
//! class used by the retraining experiment.

mod idx;
mod image;

use std::path::Path;

pub use idx::{
    parse_idx_images, parse_idx_labels, read_idx_images, read_idx_labels, serialize_idx_images,
    serialize_idx_labels, IMAGE_MAGIC, LABEL_MAGIC,
};
pub use image::Image;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    images: Vec<Image>,
    labels: Vec<usize>,
    num_classes: usize,
    /// Index of the fooling class once one has been appended.
    fooling_class: Option<usize>,
}

impl LabeledDataset {
    pub fn new(images: Vec<Image>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::Data(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Data(format!("label {bad} out of range for {num_classes} classes")));
        }
        if let Some(first) = images.first() {
            if let Some(odd) = images.iter().find(|i| !i.same_dims(first)) {
                return Err(Error::shape(format!(
                    "mixed image sizes: {:?} vs {:?}",
                    first.dims(),
                    odd.dims()
                )));
            }
        }
        Ok(LabeledDataset { images, labels, num_classes, fooling_class: None })
    }

    pub fn images(&self) -> &[Image] {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn fooling_class(&self) -> Option<usize> {
        self.fooling_class
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// (width, height, channels) of the images, if any.
    pub fn dims(&self) -> Option<(usize, usize, usize)> {
        self.images.first().map(Image::dims)
    }

    /// Keep only the first `cap` samples.
    pub fn truncated(&self, cap: usize) -> LabeledDataset {
        let n = cap.min(self.len());
        LabeledDataset {
            images: self.images[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
            num_classes: self.num_classes,
            fooling_class: self.fooling_class,
        }
    }

    /// Number of samples per class.
    pub fn histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.num_classes];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }

    /// Samples whose label is one of the original (non-fooling) classes.
    pub fn without_fooling(&self) -> LabeledDataset {
        let Some(fc) = self.fooling_class else {
            return self.clone();
        };
        let (images, labels) = self
            .images
            .iter()
            .zip(&self.labels)
            .filter(|(_, &l)| l != fc)
            .map(|(i, &l)| (i.clone(), l))
            .unzip();
        LabeledDataset { images, labels, num_classes: self.num_classes, fooling_class: self.fooling_class }
    }
}

/// Per-pixel-channel mean, stored interleaved like [`Image`].
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MeanImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub values: Vec<f64>,
}

impl MeanImage {
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    /// Mean scaled to [0, 1], planar order.
    pub fn to_unit_planar(&self) -> Vec<f64> {
        let plane = self.width * self.height;
        let mut out = vec![0.0; self.values.len()];
        for p in 0..plane {
            for c in 0..self.channels {
                out[c * plane + p] = self.values[p * self.channels + c] / 255.0;
            }
        }
        out
    }

    /// Nearest-byte rendering of the mean.
    pub fn to_image(&self) -> Image {
        let data = self.values.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
        Image::new(self.width, self.height, self.channels, data).expect("mean dims are valid")
    }
}

pub fn mean_of_images(images: &[Image]) -> Result<MeanImage> {
    let first = images
        .first()
        .ok_or_else(|| Error::Precondition("mean of an empty image set".into()))?;
    let mut acc = vec![0.0f64; first.data().len()];
    for img in images {
        if !img.same_dims(first) {
            return Err(Error::shape("mixed image sizes in mean"));
        }
        for (a, &v) in acc.iter_mut().zip(img.data()) {
            *a += f64::from(v);
        }
    }
    let n = images.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(MeanImage { width: first.width(), height: first.height(), channels: first.channels(), values: acc })
}

pub fn mean_image(ds: &LabeledDataset) -> Result<MeanImage> {
    mean_of_images(&ds.images)
}

/// Append `fooling` as the extra "fooling" class. The first call creates
/// class `n` (so `num_classes` grows by one); later calls reuse it.
pub fn append_fooling_class(ds: &LabeledDataset, fooling: &[Image]) -> Result<LabeledDataset> {
    if let Some(dims) = ds.dims() {
        if let Some(bad) = fooling.iter().find(|i| i.dims() != dims) {
            return Err(Error::shape(format!(
                "fooling image {:?} does not match dataset {:?}",
                bad.dims(),
                dims
            )));
        }
    }
    let (class, num_classes) = match ds.fooling_class {
        Some(c) => (c, ds.num_classes),
        None => (ds.num_classes, ds.num_classes + 1),
    };
    let mut images = ds.images.clone();
    let mut labels = ds.labels.clone();
    images.extend_from_slice(fooling);
    labels.extend(std::iter::repeat(class).take(fooling.len()));
    Ok(LabeledDataset { images, labels, num_classes, fooling_class: Some(class) })
}

/// Training and validation splits in MNIST layout.
#[derive(Clone, Debug)]
pub struct MnistSplits {
    pub train: LabeledDataset,
    pub validation: LabeledDataset,
}

fn find_file(dir: &Path, names: &[&str]) -> Result<std::path::PathBuf> {
    names
        .iter()
        .map(|n| dir.join(n))
        .find(|p| p.is_file())
        .ok_or_else(|| Error::Io {
            path: dir.join(names[0]).display().to_string(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "IDX file not found"),
        })
}

/// Load the four standard MNIST IDX files from `dir`. `train_cap` limits the
/// training split (the validation split is always complete).
pub fn load_mnist(dir: impl AsRef<Path>, train_cap: Option<usize>) -> Result<MnistSplits> {
    let dir = dir.as_ref();
    let load = |imgs: &[&str], labels: &[&str]| -> Result<LabeledDataset> {
        let images = read_idx_images(find_file(dir, imgs)?)?;
        let labels = read_idx_labels(find_file(dir, labels)?)?;
        LabeledDataset::new(images, labels, 10)
    };
    let mut train = load(
        &["train-images-idx3-ubyte", "train-images.idx3-ubyte"],
        &["train-labels-idx1-ubyte", "train-labels.idx1-ubyte"],
    )?;
    if let Some(cap) = train_cap {
        train = train.truncated(cap);
    }
    let validation = load(
        &["t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte"],
        &["t10k-labels-idx1-ubyte", "t10k-labels.idx1-ubyte"],
    )?;
    Ok(MnistSplits { train, validation })
}
