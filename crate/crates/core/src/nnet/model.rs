use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Real, Tensor};
use crate::error::{Error, Result};

/// One entry of the layer stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "layer", rename_all = "kebab-case")]
pub enum LayerSpec {
    /// Valid (unpadded) convolution with square kernels.
    Conv { kernel: usize, stride: usize, out_channels: usize },
    MaxPool { window: usize, stride: usize },
    /// Fully connected layer; flattens its input.
    Dense { width: usize },
    Relu,
}

/// Channels × height × width of one sample's activations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shape3 {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape3 {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Shape3 { channels, height, width }
    }

    pub const fn size(&self) -> usize {
        self.channels * self.height * self.width
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Layer<F> {
    pub(crate) spec: LayerSpec,
    pub(crate) input: Shape3,
    pub(crate) output: Shape3,
    /// (weights, bias) for conv and dense layers.
    pub(crate) params: Option<(Tensor<F>, Tensor<F>)>,
}

/// A feed-forward convolutional classifier ending in a softmax.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvNet<F> {
    input: Shape3,
    num_classes: usize,
    layers: Vec<Layer<F>>,
}

/// Activations recorded by a forward pass: `acts[i]` is the input of layer
/// `i` for the whole batch, `acts[len]` the logits.
pub(crate) struct Trace<F> {
    acts: Vec<Vec<F>>,
    argmax: Vec<Vec<u32>>,
}

impl<F> Trace<F> {
    pub(crate) fn logits(&self) -> &[F] {
        self.acts.last().expect("trace has logits")
    }
}

fn out_shape(spec: LayerSpec, s: Shape3) -> Result<Shape3> {
    let bad = |what: &str| Err(Error::shape(format!("{spec:?} does not fit input {s:?}: {what}")));
    match spec {
        LayerSpec::Conv { kernel, stride, out_channels } => {
            if kernel == 0 || stride == 0 || out_channels == 0 {
                return bad("zero-sized parameter");
            }
            if kernel > s.height || kernel > s.width {
                return bad("kernel larger than input");
            }
            Ok(Shape3::new(out_channels, (s.height - kernel) / stride + 1, (s.width - kernel) / stride + 1))
        }
        LayerSpec::MaxPool { window, stride } => {
            if window == 0 || stride == 0 {
                return bad("zero-sized parameter");
            }
            if window > s.height || window > s.width {
                return bad("window larger than input");
            }
            Ok(Shape3::new(s.channels, (s.height - window) / stride + 1, (s.width - window) / stride + 1))
        }
        LayerSpec::Dense { width } => {
            if width == 0 {
                return bad("zero width");
            }
            Ok(Shape3::new(width, 1, 1))
        }
        LayerSpec::Relu => Ok(s),
    }
}

/// Layer shapes for `specs` applied to `input`, checking that the stack ends
/// in a dense layer.
fn chain_shapes(input: Shape3, specs: &[LayerSpec]) -> Result<Vec<(Shape3, Shape3)>> {
    if input.size() == 0 {
        return Err(Error::shape("empty input shape"));
    }
    let mut s = input;
    let mut out = Vec::with_capacity(specs.len());
    for &spec in specs {
        let o = out_shape(spec, s)?;
        out.push((s, o));
        s = o;
    }
    match specs.last() {
        Some(LayerSpec::Dense { .. }) => Ok(out),
        _ => Err(Error::shape("layer stack must end in a dense layer producing the class logits")),
    }
}

impl<F: Real> ConvNet<F> {
    /// Build a network with uniform Glorot initialization
    /// (±sqrt(6 / (fan_in + fan_out))) and zero biases.
    pub fn new(input: Shape3, specs: &[LayerSpec], seed: u64) -> Result<Self> {
        let shapes = chain_shapes(input, specs)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(specs.len());
        for (&spec, &(i, o)) in specs.iter().zip(&shapes) {
            let (wshape, fan_in, fan_out) = match spec {
                LayerSpec::Conv { kernel, out_channels, .. } => (
                    vec![out_channels, i.channels, kernel, kernel],
                    i.channels * kernel * kernel,
                    out_channels * kernel * kernel,
                ),
                LayerSpec::Dense { width } => (vec![width, i.size()], i.size(), width),
                _ => {
                    layers.push(Layer { spec, input: i, output: o, params: None });
                    continue;
                }
            };
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let n: usize = wshape.iter().product();
            let w: Vec<F> = (0..n).map(|_| F::of(rng.random_range(-limit..=limit))).collect();
            let bias_len = wshape[0];
            layers.push(Layer {
                spec,
                input: i,
                output: o,
                params: Some((Tensor::new(wshape, w)?, Tensor::zeros(vec![bias_len]))),
            });
        }
        let num_classes = shapes.last().map(|(_, o)| o.channels).unwrap_or(0);
        Ok(ConvNet { input, num_classes, layers })
    }

    /// The LeNet-style digit classifier: conv 5×5×20, max-pool 2, conv 5×5×50,
    /// max-pool 2, dense 500, ReLU, dense `num_classes`.
    pub fn lenet(input: Shape3, num_classes: usize, seed: u64) -> Result<Self> {
        ConvNet::new(input, &lenet_specs(num_classes), seed)
    }

    /// Rebuild from explicit parameters (used by the weight-file loader).
    pub(crate) fn from_parts(input: Shape3, specs: &[LayerSpec], mut params: Vec<Tensor<F>>) -> Result<Self> {
        let mut net = ConvNet::<F>::new(input, specs, 0)?;
        let expected: usize = net.parameters().len();
        if params.len() != expected {
            return Err(Error::shape(format!("expected {expected} parameter tensors, got {}", params.len())));
        }
        params.reverse();
        for slot in net.parameters_mut() {
            let p = params.pop().expect("length checked");
            if p.shape() != slot.shape() {
                return Err(Error::shape(format!("parameter shape {:?}, expected {:?}", p.shape(), slot.shape())));
            }
            *slot = p;
        }
        Ok(net)
    }

    pub fn input_shape(&self) -> Shape3 {
        self.input
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    /// Parameter tensors in layer order (weights then bias per layer).
    pub fn parameters(&self) -> Vec<&Tensor<F>> {
        self.layers
            .iter()
            .filter_map(|l| l.params.as_ref())
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor<F>> {
        self.layers
            .iter_mut()
            .filter_map(|l| l.params.as_mut())
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|t| t.len()).sum()
    }

    /// Zero-filled tensors shaped like [`ConvNet::parameters`].
    pub fn zero_grads(&self) -> Vec<Tensor<F>> {
        self.parameters().iter().map(|t| Tensor::zeros(t.shape().to_vec())).collect()
    }

    pub fn cast<G: Real>(&self) -> ConvNet<G> {
        ConvNet {
            input: self.input,
            num_classes: self.num_classes,
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    spec: l.spec,
                    input: l.input,
                    output: l.output,
                    params: l.params.as_ref().map(|(w, b)| (w.cast(), b.cast())),
                })
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.parameters().iter().all(|t| t.is_finite())
    }

    /// Number of samples in `batch`, which must be `[B, C, H, W]` or `[B, C·H·W]`.
    fn batch_len(&self, batch: &Tensor<F>) -> Result<usize> {
        let s = batch.shape();
        let ok = match s.len() {
            4 => s[1] == self.input.channels && s[2] == self.input.height && s[3] == self.input.width,
            2 => s[1] == self.input.size(),
            _ => false,
        };
        if !ok {
            return Err(Error::shape(format!(
                "batch shape {s:?} does not match model input {:?}",
                self.input
            )));
        }
        Ok(s[0])
    }

    /// Class probabilities `[B, num_classes]`.
    pub fn forward(&self, batch: &Tensor<F>) -> Result<Tensor<F>> {
        let b = self.batch_len(batch)?;
        let trace = self.run(batch.values(), b);
        let mut probs = trace.logits().to_vec();
        softmax_rows(&mut probs, self.num_classes);
        Tensor::new(vec![b, self.num_classes], probs)
    }

    /// Forward a flat planar batch of `b` samples, keeping the activations.
    pub(crate) fn run(&self, input: &[F], b: usize) -> Trace<F> {
        debug_assert_eq!(input.len(), b * self.input.size());
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut argmax = Vec::with_capacity(self.layers.len());
        acts.push(input.to_vec());
        let mut cols = Vec::new();
        for layer in &self.layers {
            let x = acts.last().expect("input pushed");
            let (isz, osz) = (layer.input.size(), layer.output.size());
            let mut y = vec![F::zero(); b * osz];
            let mut idx = Vec::new();
            match layer.spec {
                LayerSpec::Conv { kernel, stride, .. } => {
                    let (w, bias) = layer.params.as_ref().expect("conv has params");
                    let p = layer.output.height * layer.output.width;
                    let ckk = layer.input.channels * kernel * kernel;
                    cols.resize(ckk * p, F::zero());
                    for s in 0..b {
                        im2col(&x[s * isz..(s + 1) * isz], layer.input, kernel, stride, layer.output, &mut cols);
                        let out = &mut y[s * osz..(s + 1) * osz];
                        F::gemm(false, false, layer.output.channels, p, ckk, F::one(), w.values(), &cols, F::zero(), out);
                        for (row, &bv) in out.chunks_exact_mut(p).zip(bias.values()) {
                            row.iter_mut().for_each(|v| *v = *v + bv);
                        }
                    }
                }
                LayerSpec::MaxPool { window, stride } => {
                    idx = vec![0u32; b * osz];
                    for s in 0..b {
                        max_pool(
                            &x[s * isz..(s + 1) * isz],
                            layer.input,
                            window,
                            stride,
                            layer.output,
                            &mut y[s * osz..(s + 1) * osz],
                            &mut idx[s * osz..(s + 1) * osz],
                        );
                    }
                }
                LayerSpec::Dense { width } => {
                    let (w, bias) = layer.params.as_ref().expect("dense has params");
                    F::gemm(false, true, b, width, isz, F::one(), x, w.values(), F::zero(), &mut y);
                    for row in y.chunks_exact_mut(width) {
                        row.iter_mut().zip(bias.values()).for_each(|(v, &bv)| *v = *v + bv);
                    }
                }
                LayerSpec::Relu => {
                    y.iter_mut().zip(x).for_each(|(o, &v)| *o = v.max(F::zero()));
                }
            }
            argmax.push(idx);
            acts.push(y);
        }
        Trace { acts, argmax }
    }

    /// Backpropagate `dlogits` (`[b, num_classes]`) through a recorded pass.
    /// Parameter gradients are added into `grads` when given; the input
    /// gradient is returned when `want_input` is set.
    pub(crate) fn backprop(
        &self,
        trace: &Trace<F>,
        b: usize,
        dlogits: Vec<F>,
        mut grads: Option<&mut [Tensor<F>]>,
        want_input: bool,
    ) -> Option<Vec<F>> {
        let mut delta = dlogits;
        let mut slot = self.layers.iter().filter(|l| l.params.is_some()).count() * 2;
        let mut cols = Vec::new();
        let mut dcols = Vec::new();
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let x = &trace.acts[li];
            let (isz, osz) = (layer.input.size(), layer.output.size());
            let need_dx = li > 0 || want_input;
            let mut dx = if need_dx { vec![F::zero(); b * isz] } else { Vec::new() };
            if layer.params.is_some() {
                slot -= 2;
            }
            match layer.spec {
                LayerSpec::Conv { kernel, stride, .. } => {
                    let (w, _) = layer.params.as_ref().expect("conv has params");
                    let oc = layer.output.channels;
                    let p = layer.output.height * layer.output.width;
                    let ckk = layer.input.channels * kernel * kernel;
                    cols.resize(ckk * p, F::zero());
                    dcols.resize(ckk * p, F::zero());
                    for s in 0..b {
                        let dout = &delta[s * osz..(s + 1) * osz];
                        if let Some(g) = grads.as_deref_mut() {
                            im2col(&x[s * isz..(s + 1) * isz], layer.input, kernel, stride, layer.output, &mut cols);
                            F::gemm(false, true, oc, ckk, p, F::one(), dout, &cols, F::one(), g[slot].values_mut());
                            for (gb, row) in g[slot + 1].values_mut().iter_mut().zip(dout.chunks_exact(p)) {
                                *gb = *gb + row.iter().copied().sum::<F>();
                            }
                        }
                        if need_dx {
                            F::gemm(true, false, ckk, p, oc, F::one(), w.values(), dout, F::zero(), &mut dcols);
                            col2im(&dcols, layer.input, kernel, stride, layer.output, &mut dx[s * isz..(s + 1) * isz]);
                        }
                    }
                }
                LayerSpec::MaxPool { .. } => {
                    if need_dx {
                        let idx = &trace.argmax[li];
                        for s in 0..b {
                            let dxs = &mut dx[s * isz..(s + 1) * isz];
                            for j in 0..osz {
                                let at = idx[s * osz + j] as usize;
                                dxs[at] = dxs[at] + delta[s * osz + j];
                            }
                        }
                    }
                }
                LayerSpec::Dense { width } => {
                    let (w, _) = layer.params.as_ref().expect("dense has params");
                    if let Some(g) = grads.as_deref_mut() {
                        F::gemm(true, false, width, isz, b, F::one(), &delta, x, F::one(), g[slot].values_mut());
                        let gb = g[slot + 1].values_mut();
                        for row in delta.chunks_exact(width) {
                            gb.iter_mut().zip(row).for_each(|(a, &d)| *a = *a + d);
                        }
                    }
                    if need_dx {
                        F::gemm(false, false, b, isz, width, F::one(), &delta, w.values(), F::zero(), &mut dx);
                    }
                }
                LayerSpec::Relu => {
                    if need_dx {
                        for ((d, &g), &v) in dx.iter_mut().zip(&delta).zip(x) {
                            *d = if v > F::zero() { g } else { F::zero() };
                        }
                    }
                }
            }
            if !need_dx {
                return None;
            }
            delta = dx;
        }
        Some(delta)
    }

    /// Which branch every piecewise-linear unit took: the max-pool winners
    /// and the sign of each ReLU input. Two inputs with the same pattern lie
    /// on the same linear piece of the network.
    pub fn activation_pattern(&self, batch: &Tensor<F>) -> Result<Vec<u32>> {
        let b = self.batch_len(batch)?;
        let trace = self.run(batch.values(), b);
        let mut out = Vec::new();
        for (li, layer) in self.layers.iter().enumerate() {
            match layer.spec {
                LayerSpec::MaxPool { .. } => out.extend_from_slice(&trace.argmax[li]),
                LayerSpec::Relu => out.extend(trace.acts[li].iter().map(|v| u32::from(*v > F::zero()))),
                _ => {}
            }
        }
        Ok(out)
    }

    /// Summed (not averaged) cross-entropy gradients and loss over a flat batch.
    pub(crate) fn grad_sums(&self, input: &[F], labels: &[usize], grads: &mut [Tensor<F>]) -> F {
        let b = labels.len();
        let trace = self.run(input, b);
        let k = self.num_classes;
        let mut probs = trace.logits().to_vec();
        softmax_rows(&mut probs, k);
        let mut loss = F::zero();
        let tiny = F::of(1e-300).max(F::min_positive_value());
        for (row, &y) in probs.chunks_exact_mut(k).zip(labels) {
            loss = loss - row[y].max(tiny).ln();
            row[y] = row[y] - F::one();
        }
        self.backprop(&trace, b, probs, Some(grads), false);
        loss
    }

    fn check_labels(&self, labels: &[usize], b: usize) -> Result<()> {
        if labels.len() != b {
            return Err(Error::shape(format!("{} labels for a batch of {b}", labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= self.num_classes) {
            return Err(Error::Range(format!("label {bad} >= {} classes", self.num_classes)));
        }
        Ok(())
    }

    /// Mean cross-entropy loss and its gradient for every parameter tensor.
    pub fn backward(&self, batch: &Tensor<F>, labels: &[usize]) -> Result<(Vec<Tensor<F>>, F)> {
        let b = self.batch_len(batch)?;
        self.check_labels(labels, b)?;
        if b == 0 {
            return Err(Error::shape("empty batch"));
        }
        let mut grads = self.zero_grads();
        let loss = self.grad_sums(batch.values(), labels, &mut grads);
        let scale = F::one() / F::of(b as f64);
        for g in &mut grads {
            g.values_mut().iter_mut().for_each(|v| *v = *v * scale);
        }
        Ok((grads, loss * scale))
    }

    /// Gradient of the softmax probability of `class` with respect to the
    /// input pixels of a single image (`[C, H, W]` or `[1, C, H, W]`).
    pub fn input_gradient(&self, image: &Tensor<F>, class: usize) -> Result<Tensor<F>> {
        let (grad, _) = self.input_gradient_and_prob(image.values(), class)?;
        Tensor::new(image.shape().to_vec(), grad)
    }

    /// Input gradient of p(class | x) together with the probability itself.
    pub fn input_gradient_and_prob(&self, pixels: &[F], class: usize) -> Result<(Vec<F>, F)> {
        if class >= self.num_classes {
            return Err(Error::Range(format!("class {class} >= {} classes", self.num_classes)));
        }
        if pixels.len() != self.input.size() {
            return Err(Error::shape(format!(
                "image has {} values, model input {:?} needs {}",
                pixels.len(),
                self.input,
                self.input.size()
            )));
        }
        let trace = self.run(pixels, 1);
        let mut probs = trace.logits().to_vec();
        softmax_rows(&mut probs, self.num_classes);
        let pc = probs[class];
        // d p_c / d z_j = p_c (δ_cj − p_j)
        let dlogits: Vec<F> = probs
            .iter()
            .enumerate()
            .map(|(j, &pj)| pc * (if j == class { F::one() } else { F::zero() } - pj))
            .collect();
        let grad = self.backprop(&trace, 1, dlogits, None, true).expect("input gradient requested");
        Ok((grad, pc))
    }

    /// Probabilities for one planar sample.
    pub fn probabilities(&self, pixels: &[F]) -> Result<Vec<F>> {
        if pixels.len() != self.input.size() {
            return Err(Error::shape(format!(
                "sample has {} values, model input {:?} needs {}",
                pixels.len(),
                self.input,
                self.input.size()
            )));
        }
        let trace = self.run(pixels, 1);
        let mut probs = trace.logits().to_vec();
        softmax_rows(&mut probs, self.num_classes);
        Ok(probs)
    }

    /// Probabilities for a flat planar batch of `b` samples.
    pub fn probabilities_batch(&self, pixels: &[F], b: usize) -> Result<Vec<F>> {
        if pixels.len() != b * self.input.size() {
            return Err(Error::shape("batch length does not match model input"));
        }
        let trace = self.run(pixels, b);
        let mut probs = trace.logits().to_vec();
        softmax_rows(&mut probs, self.num_classes);
        Ok(probs)
    }
}

pub fn lenet_specs(num_classes: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Conv { kernel: 5, stride: 1, out_channels: 20 },
        LayerSpec::MaxPool { window: 2, stride: 2 },
        LayerSpec::Conv { kernel: 5, stride: 1, out_channels: 50 },
        LayerSpec::MaxPool { window: 2, stride: 2 },
        LayerSpec::Dense { width: 500 },
        LayerSpec::Relu,
        LayerSpec::Dense { width: num_classes },
    ]
}

/// In-place numerically stable softmax over consecutive rows of width `k`.
pub fn softmax_rows<F: Real>(values: &mut [F], k: usize) {
    for row in values.chunks_exact_mut(k) {
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let mut sum = F::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum = sum + *v;
        }
        row.iter_mut().for_each(|v| *v = *v / sum);
    }
}

fn im2col<F: Real>(x: &[F], s: Shape3, k: usize, stride: usize, o: Shape3, cols: &mut [F]) {
    let p = o.height * o.width;
    for c in 0..s.channels {
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..o.height {
                    let src = &x[(c * s.height + oy * stride + ki) * s.width..];
                    let d = &mut dst[oy * o.width..(oy + 1) * o.width];
                    if stride == 1 {
                        d.copy_from_slice(&src[kj..kj + o.width]);
                    } else {
                        for (ox, v) in d.iter_mut().enumerate() {
                            *v = src[ox * stride + kj];
                        }
                    }
                }
            }
        }
    }
}

fn col2im<F: Real>(cols: &[F], s: Shape3, k: usize, stride: usize, o: Shape3, dx: &mut [F]) {
    let p = o.height * o.width;
    for c in 0..s.channels {
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..o.height {
                    let base = (c * s.height + oy * stride + ki) * s.width + kj;
                    for ox in 0..o.width {
                        let at = base + ox * stride;
                        dx[at] = dx[at] + src[oy * o.width + ox];
                    }
                }
            }
        }
    }
}

fn max_pool<F: Real>(x: &[F], s: Shape3, window: usize, stride: usize, o: Shape3, y: &mut [F], idx: &mut [u32]) {
    for c in 0..s.channels {
        for oy in 0..o.height {
            for ox in 0..o.width {
                let mut best = F::neg_infinity();
                let mut at = 0usize;
                for wy in 0..window {
                    for wx in 0..window {
                        let i = (c * s.height + oy * stride + wy) * s.width + ox * stride + wx;
                        if x[i] > best || (wy == 0 && wx == 0) {
                            best = x[i];
                            at = i;
                        }
                    }
                }
                let j = (c * o.height + oy) * o.width + ox;
                y[j] = best;
                idx[j] = at as u32;
            }
        }
    }
}
