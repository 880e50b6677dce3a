//! Pixel-space gradient ascent on one class probability, starting from the
//! dataset mean plus a little noise, with optional decay, blur, and
//! small-norm zeroing.

mod regularize;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use regularize::{gaussian_blur, gaussian_kernel, percentile_zero};

use crate::dataset::{Image, MeanImage};
use crate::error::{Error, Result};
use crate::nnet::{ConvNet, Real};
use crate::par;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AscentConfig {
    pub target: usize,
    pub learning_rate: f64,
    pub max_steps: usize,
    pub stop_confidence: f64,
    /// γ: the mean-subtracted image is scaled by 1 − γ each step.
    pub decay: f64,
    /// Gaussian σ in pixels; 0 disables blurring.
    pub blur_radius: f64,
    pub blur_every: usize,
    /// Fraction of pixels with the smallest mean-subtracted norm set to the mean.
    pub percentile: f64,
    /// Start noise σ on the [0, 1] scale.
    pub noise_sigma: f64,
    /// Step halvings tried before a gradient step is rejected.
    pub max_halvings: usize,
    pub seed: u64,
}

impl Default for AscentConfig {
    fn default() -> Self {
        AscentConfig {
            target: 0,
            learning_rate: 2.0,
            max_steps: 2000,
            stop_confidence: 0.9999,
            decay: 0.0,
            blur_radius: 0.0,
            blur_every: 1,
            percentile: 0.0,
            noise_sigma: 1.0 / 255.0,
            max_halvings: 10,
            seed: 1,
        }
    }
}

impl AscentConfig {
    pub fn validate(&self) -> Result<()> {
        let range = |ok: bool, what: &str| if ok { Ok(()) } else { Err(Error::Range(what.to_string())) };
        range((0.0..1.0).contains(&self.decay), "decay γ must lie in [0, 1)")?;
        range(self.blur_radius >= 0.0 && self.blur_radius.is_finite(), "blur radius must be ≥ 0")?;
        range(self.blur_every >= 1, "blur_every must be ≥ 1")?;
        range((0.0..1.0).contains(&self.percentile), "percentile fraction must lie in [0, 1)")?;
        range(self.stop_confidence > 0.0 && self.stop_confidence <= 1.0, "stop confidence must lie in (0, 1]")?;
        range(self.learning_rate >= 0.0 && self.learning_rate.is_finite(), "learning rate must be ≥ 0")?;
        range(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite(), "noise σ must be ≥ 0")
    }

    fn regularized(&self) -> bool {
        self.decay > 0.0 || self.blur_radius > 0.0 || self.percentile > 0.0
    }

    pub fn variant(variant: Variant, target: usize, seed: u64) -> Self {
        let base = AscentConfig { target, seed, ..AscentConfig::default() };
        match variant {
            Variant::Plain => base,
            Variant::L2 => AscentConfig { decay: 0.01, ..base },
            Variant::BlurL1 => AscentConfig { decay: 0.001, blur_radius: 0.3, percentile: 0.2, ..base },
            Variant::Aggressive => AscentConfig {
                decay: 0.001,
                blur_radius: 0.5,
                percentile: 0.2,
                learning_rate: base.learning_rate / 10.0,
                ..base
            },
        }
    }
}

/// The regularization recipes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Plain,
    /// decay γ = 0.01
    L2,
    /// decay γ = 0.001, blur radius 0.3, 20th-percentile zeroing
    BlurL1,
    /// decay γ = 0.001, blur radius 0.5, 20th-percentile zeroing, lr / 10
    Aggressive,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Plain, Variant::L2, Variant::BlurL1, Variant::Aggressive];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Plain => "plain",
            Variant::L2 => "l2",
            Variant::BlurL1 => "blur-l1",
            Variant::Aggressive => "aggressive",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Range(format!("unknown variant {s:?} (plain, l2, blur-l1, aggressive)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AscentStep {
    pub step: usize,
    pub confidence: f64,
    /// Step size actually taken; 0 when the gradient step was rejected.
    pub lr: f64,
}

#[derive(Clone, Debug)]
pub struct AscentResult {
    /// Final pixels in [0, 1], planar.
    pub pixels: Vec<f64>,
    /// Final pixels quantized to bytes.
    pub image: Image,
    /// Target confidence of `pixels`.
    pub confidence: f64,
    /// Target confidence of the quantized `image`.
    pub image_confidence: f64,
    /// Entry 0 is the start point, then one entry per step.
    pub trace: Vec<AscentStep>,
    pub reached: bool,
}

impl AscentResult {
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("step,confidence,lr\n");
        for t in &self.trace {
            s.push_str(&format!("{},{},{}\n", t.step, t.confidence, t.lr));
        }
        s
    }
}

struct Probe<'a, F: Real> {
    model: &'a ConvNet<F>,
    class: usize,
    buf: Vec<F>,
}

impl<F: Real> Probe<'_, F> {
    fn load(&mut self, x: &[f64]) {
        self.buf.iter_mut().zip(x).for_each(|(b, &v)| *b = F::of(v));
    }

    fn prob(&mut self, x: &[f64]) -> f64 {
        self.load(x);
        self.model.probabilities(&self.buf).expect("size checked")[self.class].f64()
    }

    fn grad(&mut self, x: &[f64]) -> (Vec<f64>, f64) {
        self.load(x);
        let (g, p) = self.model.input_gradient_and_prob(&self.buf, self.class).expect("size checked");
        (g.into_iter().map(|v| v.f64()).collect(), p.f64())
    }
}

fn clamp_unit(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
}

/// Maximize p(target | x) by gradient ascent from the mean image plus noise.
///
/// Each step tries `x + lr·∇p`, halving lr while the (clamped) candidate
/// scores below the current image; after `max_halvings` failures the
/// gradient move is dropped for that step. The regularizers then act on the
/// mean-subtracted image in the order decay, blur, percentile zeroing,
/// followed by a clamp to [0, 1]. Without regularizers a rejected step ends
/// the run since nothing would change afterwards.
pub fn ascend<F: Real>(model: &ConvNet<F>, mean: &MeanImage, cfg: &AscentConfig) -> Result<AscentResult> {
    cfg.validate()?;
    let s = model.input_shape();
    if mean.dims() != (s.width, s.height, s.channels) {
        return Err(Error::shape(format!(
            "mean image {:?} does not match model input {}x{}x{}",
            mean.dims(),
            s.width,
            s.height,
            s.channels
        )));
    }
    if cfg.target >= model.num_classes() {
        return Err(Error::Range(format!("target {} >= {} classes", cfg.target, model.num_classes())));
    }
    let base = mean.to_unit_planar();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut x: Vec<f64> = if cfg.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, cfg.noise_sigma).expect("σ validated");
        base.iter().map(|&m| m + noise.sample(&mut rng)).collect()
    } else {
        base.clone()
    };
    clamp_unit(&mut x);

    let mut probe = Probe { model, class: cfg.target, buf: vec![F::zero(); s.size()] };
    let mut p = probe.prob(&x);
    let mut trace = vec![AscentStep { step: 0, confidence: p, lr: 0.0 }];
    let mut candidate = vec![0.0; x.len()];
    let mut next_grad = None;
    for step in 1..=cfg.max_steps {
        if p >= cfg.stop_confidence {
            break;
        }
        let g = match next_grad.take() {
            Some(g) => g,
            None => probe.grad(&x).0,
        };
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite input gradient at step {step} (last confidence {p})"
            )));
        }
        let mut lr = cfg.learning_rate;
        let mut taken = 0.0;
        let mut candidate_p = p;
        for _ in 0..=cfg.max_halvings {
            for ((c, &xi), &gi) in candidate.iter_mut().zip(&x).zip(&g) {
                *c = (xi + lr * gi).clamp(0.0, 1.0);
            }
            candidate_p = probe.prob(&candidate);
            if candidate_p >= p {
                taken = lr;
                break;
            }
            lr *= 0.5;
        }
        if taken == 0.0 && !cfg.regularized() {
            break;
        }
        if taken > 0.0 {
            x.iter_mut().zip(&g).for_each(|(xi, &gi)| *xi += taken * gi);
        }
        if cfg.regularized() {
            regularize(&mut x, &base, s.channels, s.width, s.height, step, cfg)?;
            clamp_unit(&mut x);
            let (g, px) = probe.grad(&x);
            p = px;
            next_grad = Some(g);
        } else {
            clamp_unit(&mut x);
            p = candidate_p;
        }
        trace.push(AscentStep { step, confidence: p, lr: taken });
    }

    let image = Image::from_unit_planar(s.width, s.height, s.channels, &x)?;
    let image_confidence = probe.prob(&image.to_unit_planar());
    Ok(AscentResult { reached: p >= cfg.stop_confidence, pixels: x, image, confidence: p, image_confidence, trace })
}

fn regularize(
    x: &mut [f64],
    base: &[f64],
    channels: usize,
    width: usize,
    height: usize,
    step: usize,
    cfg: &AscentConfig,
) -> Result<()> {
    let mut centered: Vec<f64> = x.iter().zip(base).map(|(v, m)| v - m).collect();
    if cfg.decay > 0.0 {
        centered.iter_mut().for_each(|v| *v *= 1.0 - cfg.decay);
    }
    if cfg.blur_radius > 0.0 && step % cfg.blur_every == 0 {
        centered = gaussian_blur(&centered, channels, width, height, cfg.blur_radius)?;
    }
    if cfg.percentile > 0.0 {
        percentile_zero(&mut centered, channels, cfg.percentile)?;
    }
    x.iter_mut().zip(centered.iter().zip(base)).for_each(|(v, (c, m))| *v = c + m);
    Ok(())
}

/// Run the plain, L2, and blur + pseudo-L1 recipes for one class and seed.
pub fn ascend_variants<F: Real>(
    model: &ConvNet<F>,
    mean: &MeanImage,
    target: usize,
    seed: u64,
) -> Result<Vec<(Variant, AscentResult)>> {
    let variants = [Variant::Plain, Variant::L2, Variant::BlurL1];
    par::map_slice(&variants, |&v| ascend(model, mean, &AscentConfig::variant(v, target, seed)).map(|r| (v, r)))
        .into_iter()
        .collect()
}
