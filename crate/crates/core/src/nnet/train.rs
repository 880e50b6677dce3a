use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ConvNet, Real, Shape3, Tensor};
use crate::dataset::{Image, LabeledDataset};
use crate::error::{Error, Result};
use crate::par;

/// Samples per gradient work unit. Fixed so that the summation order (and
/// hence the trained weights) does not depend on the number of workers.
const GRAD_CHUNK: usize = 16;
const EVAL_CHUNK: usize = 128;

/// SGD with momentum, L2 weight decay and the "inv" learning-rate policy
/// `base · (1 + gamma · t)^(−power)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub lr_power: f64,
    pub lr_gamma: f64,
    pub max_steps: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            base_lr: 0.01,
            momentum: 0.9,
            batch_size: 64,
            weight_decay: 0.0005,
            lr_power: 0.75,
            lr_gamma: 0.0001,
            max_steps: 10_000,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let rates = [self.base_lr, self.momentum, self.weight_decay, self.lr_power, self.lr_gamma];
        if rates.iter().any(|r| !r.is_finite() || *r <= 0.0) {
            return Err(Error::Precondition(format!("training rates must be positive: {self:?}")));
        }
        if self.batch_size == 0 {
            return Err(Error::Precondition("batch size must be at least 1".into()));
        }
        Ok(())
    }

    pub fn learning_rate(&self, step: usize) -> f64 {
        self.base_lr * (1.0 + self.lr_gamma * step as f64).powf(-self.lr_power)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStat {
    pub epoch: usize,
    /// Optimizer steps completed when the epoch ended.
    pub steps: usize,
    pub mean_loss: f64,
    pub validation_error: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStat>,
}

/// Copy `img` into `dst` as planar values scaled to [0, 1].
pub(crate) fn fill_planar<F: Real>(img: &Image, dst: &mut [F]) {
    let c = img.channels();
    let plane = img.width() * img.height();
    let data = img.data();
    for p in 0..plane {
        for ch in 0..c {
            dst[ch * plane + p] = F::of(f64::from(data[p * c + ch]) / 255.0);
        }
    }
}

pub(crate) fn check_image(shape: Shape3, img: &Image) -> Result<()> {
    if img.dims() != (shape.width, shape.height, shape.channels) {
        return Err(Error::shape(format!(
            "image {}x{}x{} does not match model input {}x{}x{}",
            img.width(),
            img.height(),
            img.channels(),
            shape.width,
            shape.height,
            shape.channels
        )));
    }
    Ok(())
}

/// Planar [0, 1] tensor `[n, C, H, W]` for a set of images.
pub fn images_to_tensor<F: Real>(images: &[Image]) -> Result<Tensor<F>> {
    let Some(first) = images.first() else {
        return Err(Error::shape("no images"));
    };
    let (w, h, c) = first.dims();
    let size = w * h * c;
    let mut values = vec![F::zero(); images.len() * size];
    for (img, dst) in images.iter().zip(values.chunks_exact_mut(size)) {
        if !img.same_dims(first) {
            return Err(Error::shape("mixed image sizes in batch"));
        }
        fill_planar(img, dst);
    }
    Tensor::new(vec![images.len(), c, h, w], values)
}

/// Fresh LeNet sized to `ds`, initialized and trained with `cfg.seed`.
pub fn train_lenet(
    ds: &LabeledDataset,
    cfg: &TrainConfig,
    validation: Option<&LabeledDataset>,
) -> Result<(ConvNet<f32>, TrainReport)> {
    let (w, h, c) = ds.dims().ok_or_else(|| Error::Data("empty training set".into()))?;
    let model = ConvNet::<f32>::lenet(Shape3::new(c, h, w), ds.num_classes(), cfg.seed)?;
    train(model, ds, cfg, validation)
}

impl<F: Real> ConvNet<F> {
    /// Class probabilities for each image.
    pub fn predict(&self, images: &[Image]) -> Result<Vec<Vec<f64>>> {
        let shape = self.input_shape();
        for img in images {
            check_image(shape, img)?;
        }
        let size = shape.size();
        let k = self.num_classes();
        let chunks: Vec<&[Image]> = images.chunks(EVAL_CHUNK).collect();
        let out = par::map_slice(&chunks, |chunk| {
            let mut buf = vec![F::zero(); chunk.len() * size];
            for (img, dst) in chunk.iter().zip(buf.chunks_exact_mut(size)) {
                fill_planar(img, dst);
            }
            let probs = self.probabilities_batch(&buf, chunk.len()).expect("sizes checked");
            probs.chunks_exact(k).map(|r| r.iter().map(|v| v.f64()).collect::<Vec<f64>>()).collect::<Vec<_>>()
        });
        Ok(out.into_iter().flatten().collect())
    }

    /// Probabilities for one image.
    pub fn classify(&self, img: &Image) -> Result<Vec<f64>> {
        check_image(self.input_shape(), img)?;
        let mut buf = vec![F::zero(); self.input_shape().size()];
        fill_planar(img, &mut buf);
        Ok(self.probabilities(&buf)?.into_iter().map(|v| v.f64()).collect())
    }
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Top-1 error rate in [0, 1]. An empty dataset has error 0.
pub fn evaluate_error<F: Real>(model: &ConvNet<F>, ds: &LabeledDataset) -> Result<f64> {
    if ds.is_empty() {
        return Ok(0.0);
    }
    let probs = model.predict(ds.images())?;
    let wrong = probs.iter().zip(ds.labels()).filter(|(p, &y)| argmax(p) != y).count();
    Ok(wrong as f64 / ds.len() as f64)
}

/// Train `model` on `ds`. Deterministic for a given seed, whatever the
/// worker count. When `validation` is given, the error on it is recorded
/// at the end of every epoch.
pub fn train<F: Real>(
    mut model: ConvNet<F>,
    ds: &LabeledDataset,
    cfg: &TrainConfig,
    validation: Option<&LabeledDataset>,
) -> Result<(ConvNet<F>, TrainReport)> {
    cfg.validate()?;
    if ds.num_classes() != model.num_classes() {
        return Err(Error::shape(format!(
            "dataset has {} classes, model {}",
            ds.num_classes(),
            model.num_classes()
        )));
    }
    if ds.is_empty() {
        return Err(Error::Precondition("empty training set".into()));
    }
    let shape = model.input_shape();
    check_image(shape, &ds.images()[0])?;
    let size = shape.size();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;
    let mut epoch = 0;
    let mut epoch_loss = 0.0;
    let mut epoch_batches = 0usize;
    let mut report = TrainReport::default();
    let mut velocity: Vec<Vec<F>> = model.parameters().iter().map(|t| vec![F::zero(); t.len()]).collect();
    let mut batch_idx = Vec::with_capacity(cfg.batch_size);

    for step in 0..cfg.max_steps {
        batch_idx.clear();
        while batch_idx.len() < cfg.batch_size {
            if cursor == order.len() {
                report.epochs.push(finish_epoch(&model, epoch, step, epoch_loss, epoch_batches, validation)?);
                epoch += 1;
                epoch_loss = 0.0;
                epoch_batches = 0;
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch_idx.push(order[cursor]);
            cursor += 1;
        }

        let chunks: Vec<&[usize]> = batch_idx.chunks(GRAD_CHUNK).collect();
        let net = &model;
        let parts = par::map_slice(&chunks, |chunk| {
            let mut input = vec![F::zero(); chunk.len() * size];
            for (&i, dst) in chunk.iter().zip(input.chunks_exact_mut(size)) {
                fill_planar(&ds.images()[i], dst);
            }
            let labels: Vec<usize> = chunk.iter().map(|&i| ds.labels()[i]).collect();
            let mut grads = net.zero_grads();
            let loss = net.grad_sums(&input, &labels, &mut grads);
            (grads, loss)
        });

        let mut parts = parts.into_iter();
        let (mut grads, mut loss) = parts.next().expect("at least one chunk");
        for (g, l) in parts {
            loss = loss + l;
            for (acc, part) in grads.iter_mut().zip(g) {
                acc.values_mut().iter_mut().zip(part.values()).for_each(|(a, &b)| *a = *a + b);
            }
        }
        let loss = loss.f64() / cfg.batch_size as f64;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("training loss became {loss} at step {step}")));
        }
        epoch_loss += loss;
        epoch_batches += 1;

        let lr = F::of(cfg.learning_rate(step));
        let mu = F::of(cfg.momentum);
        let wd = F::of(cfg.weight_decay);
        let inv_b = F::of(1.0 / cfg.batch_size as f64);
        for ((param, grad), vel) in model.parameters_mut().into_iter().zip(&grads).zip(&mut velocity) {
            for ((p, &g), v) in param.values_mut().iter_mut().zip(grad.values()).zip(vel.iter_mut()) {
                let g = g * inv_b + wd * *p;
                *v = mu * *v - lr * g;
                *p = *p + *v;
            }
        }
    }
    if epoch_batches > 0 {
        report.epochs.push(finish_epoch(&model, epoch, cfg.max_steps, epoch_loss, epoch_batches, validation)?);
    }
    if !model.is_finite() {
        return Err(Error::Numeric("non-finite parameters after training".into()));
    }
    Ok((model, report))
}

fn finish_epoch<F: Real>(
    model: &ConvNet<F>,
    epoch: usize,
    steps: usize,
    loss: f64,
    batches: usize,
    validation: Option<&LabeledDataset>,
) -> Result<EpochStat> {
    Ok(EpochStat {
        epoch,
        steps,
        mean_loss: if batches > 0 { loss / batches as f64 } else { 0.0 },
        validation_error: validation.map(|v| evaluate_error(model, v)).transpose()?,
    })
}
