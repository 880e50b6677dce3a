use crate::dataset::Image;
use crate::error::{Error, Result};
use crate::nnet::{argmax, ConvNet};
use crate::par;

/// Per-class confidence for one image.
#[derive(Clone, Debug, PartialEq)]
pub struct FitnessVector(pub Vec<f64>);

impl FitnessVector {
    pub fn get(&self, class: usize) -> f64 {
        self.0[class]
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn top(&self) -> (usize, f64) {
        let c = argmax(&self.0);
        (c, self.0[c])
    }
}

/// Anything that scores images per class. Implementations must be pure so
/// evolution stays deterministic.
pub trait Fitness: Sync {
    fn num_classes(&self) -> usize;

    /// (width, height, channels) of the images this fitness accepts.
    fn image_dims(&self) -> (usize, usize, usize);

    fn score_batch(&self, images: &[Image]) -> Result<Vec<FitnessVector>>;
}

const SCORE_CHUNK: usize = 16;

/// Softmax confidence of one model or the mean over an ensemble, optionally
/// averaged over ten crops (center and four corners, each also mirrored).
#[derive(Clone, Debug)]
pub struct Evaluator<'a> {
    models: Vec<&'a ConvNet<f32>>,
    crop_source: Option<(usize, usize)>,
}

impl<'a> Evaluator<'a> {
    pub fn new(models: &[&'a ConvNet<f32>]) -> Result<Self> {
        let Some(first) = models.first() else {
            return Err(Error::Precondition("an evaluator needs at least one model".into()));
        };
        for m in models {
            if m.input_shape() != first.input_shape() || m.num_classes() != first.num_classes() {
                return Err(Error::shape("ensemble models disagree on input shape or class count"));
            }
        }
        Ok(Evaluator { models: models.to_vec(), crop_source: None })
    }

    pub fn single(model: &'a ConvNet<f32>) -> Self {
        Evaluator { models: vec![model], crop_source: None }
    }

    /// Score `width × height` source images through their ten crops.
    pub fn with_crops(mut self, width: usize, height: usize) -> Result<Self> {
        let s = self.models[0].input_shape();
        if width < s.width || height < s.height {
            return Err(Error::shape(format!(
                "crop source {width}x{height} is smaller than the model input {}x{}",
                s.width, s.height
            )));
        }
        self.crop_source = Some((width, height));
        Ok(self)
    }

    pub fn models(&self) -> &[&'a ConvNet<f32>] {
        &self.models
    }

    pub fn crops_enabled(&self) -> bool {
        self.crop_source.is_some()
    }

    pub fn evaluate(&self, image: &Image) -> Result<FitnessVector> {
        Ok(self.score_batch(std::slice::from_ref(image))?.remove(0))
    }

    fn check(&self, image: &Image) -> Result<()> {
        let want = self.image_dims();
        if image.dims() != want {
            return Err(Error::shape(format!(
                "image {:?} does not match evaluator input {:?} (width, height, channels)",
                image.dims(),
                want
            )));
        }
        Ok(())
    }

    fn score_chunk(&self, images: &[Image]) -> Vec<FitnessVector> {
        let expanded: Vec<Image>;
        let inputs = if self.crop_source.is_some() {
            let s = self.models[0].input_shape();
            expanded = images.iter().flat_map(|img| ten_crops(img, s.width, s.height).expect("dims checked")).collect();
            &expanded[..]
        } else {
            images
        };
        let per_image = inputs.len() / images.len();
        let k = self.models[0].num_classes();
        let mut sums = vec![vec![0.0f64; k]; images.len()];
        for m in &self.models {
            let probs = m.predict(inputs).expect("dims checked");
            for (i, sum) in sums.iter_mut().enumerate() {
                let mut crop_mean = vec![0.0f64; k];
                for p in &probs[i * per_image..(i + 1) * per_image] {
                    for (acc, v) in crop_mean.iter_mut().zip(p) {
                        *acc += v;
                    }
                }
                for (acc, v) in sum.iter_mut().zip(&crop_mean) {
                    *acc += v / per_image as f64;
                }
            }
        }
        let n = self.models.len() as f64;
        sums.into_iter().map(|s| FitnessVector(s.into_iter().map(|v| v / n).collect())).collect()
    }
}

impl Fitness for Evaluator<'_> {
    fn num_classes(&self) -> usize {
        self.models[0].num_classes()
    }

    fn image_dims(&self) -> (usize, usize, usize) {
        let s = self.models[0].input_shape();
        match self.crop_source {
            Some((w, h)) => (w, h, s.channels),
            None => (s.width, s.height, s.channels),
        }
    }

    fn score_batch(&self, images: &[Image]) -> Result<Vec<FitnessVector>> {
        for img in images {
            self.check(img)?;
        }
        let chunks: Vec<&[Image]> = images.chunks(SCORE_CHUNK).collect();
        Ok(par::map_slice(&chunks, |c| self.score_chunk(c)).into_iter().flatten().collect())
    }
}

/// Center, then top-left, top-right, bottom-left, bottom-right; each
/// followed by its horizontal mirror.
pub fn ten_crops(image: &Image, width: usize, height: usize) -> Result<Vec<Image>> {
    if width > image.width() || height > image.height() {
        return Err(Error::shape("crop window larger than the image"));
    }
    let (dx, dy) = (image.width() - width, image.height() - height);
    let origins = [(dx / 2, dy / 2), (0, 0), (dx, 0), (0, dy), (dx, dy)];
    let mut out = Vec::with_capacity(10);
    for (x, y) in origins {
        let c = image.crop(x, y, width, height)?;
        let m = c.mirror_horizontal();
        out.push(c);
        out.push(m);
    }
    Ok(out)
}

/// Free-function form of [`Evaluator`] scoring for a single image.
pub fn evaluate(image: &Image, models: &[&ConvNet<f32>], crops: bool) -> Result<FitnessVector> {
    let mut ev = Evaluator::new(models)?;
    if crops {
        ev = ev.with_crops(image.width(), image.height())?;
    }
    ev.evaluate(image)
}
