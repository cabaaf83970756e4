use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layers::{ConvLayer, DenseLayer};
use super::softmax::{masked_nll, masked_softmax};
use super::{NetError, Scalar, Tensor3};
use crate::encoder::{pad_for_first_layer, EncodingConfig};
use crate::goboard::DEFAULT_SIZE;

/// Examples per work unit in [`Network::batch_gradient`]. Fixed so the
/// reduction order never depends on the number of threads.
const CHUNK: usize = 8;
/// Output rows per block when forming the dense weight gradient.
const ROW_BLOCK: usize = 32;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply<T: Scalar>(self, v: T) -> T {
        match self {
            Activation::Relu => v.max(T::zero()),
            Activation::Tanh => v.tanh(),
        }
    }

    #[inline]
    fn derivative_at_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - y * y,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel: usize,
}

/// Architecture: a stack of same-padded convolutions and one dense top
/// layer producing one logit per board point.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    #[serde(default = "default_board_size")]
    pub board_size: usize,
    #[serde(default)]
    pub encoding: EncodingConfig,
    pub layers: Vec<ConvSpec>,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default = "default_true")]
    pub tied: bool,
}

fn default_board_size() -> usize {
    DEFAULT_SIZE
}

fn default_true() -> bool {
    true
}

impl NetworkSpec {
    /// Four convolutions (48 7x7, then 3 x 32 5x5) and a dense top layer.
    pub fn ablation_medium() -> NetworkSpec {
        NetworkSpec {
            board_size: DEFAULT_SIZE,
            encoding: EncodingConfig::default(),
            layers: vec![
                ConvSpec { filters: 48, kernel: 7 },
                ConvSpec { filters: 32, kernel: 5 },
                ConvSpec { filters: 32, kernel: 5 },
                ConvSpec { filters: 32, kernel: 5 },
            ],
            activation: Activation::Relu,
            tied: true,
        }
    }

    /// Seven convolutions (64 7x7, 2 x 64 5x5, 2 x 48 5x5, 2 x 32 5x5) and a
    /// dense top layer.
    pub fn full_scale() -> NetworkSpec {
        let mut layers = vec![ConvSpec { filters: 64, kernel: 7 }];
        for f in [64, 64, 48, 48, 32, 32] {
            layers.push(ConvSpec { filters: f, kernel: 5 });
        }
        NetworkSpec { layers, ..NetworkSpec::ablation_medium() }
    }

    /// Scaled-down medium net for CPU training: 16 filters per layer.
    pub fn desk_medium() -> NetworkSpec {
        NetworkSpec {
            layers: vec![
                ConvSpec { filters: 16, kernel: 7 },
                ConvSpec { filters: 16, kernel: 5 },
                ConvSpec { filters: 16, kernel: 5 },
            ],
            ..NetworkSpec::ablation_medium()
        }
    }

    pub fn input_channels(&self) -> usize {
        self.encoding.channels()
    }

    pub fn points(&self) -> usize {
        self.board_size * self.board_size
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.board_size == 0 {
            return Err(NetError::InvalidSpec("board_size must be positive".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.filters == 0 {
                return Err(NetError::InvalidSpec(format!("layer {i} has no filters")));
            }
            if l.kernel % 2 == 0 {
                return Err(NetError::InvalidSpec(format!("layer {i} kernel {} is not odd", l.kernel)));
            }
        }
        Ok(())
    }
}

/// One training example, already encoded.
#[derive(Clone, Debug)]
pub struct Sample<T> {
    pub input: Tensor3<T>,
    pub mask: Vec<bool>,
    pub target: usize,
}

/// Gradients in the same layout as [`Network::tensors`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub tensors: Vec<Vec<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn scale(&mut self, s: T) {
        for t in &mut self.tensors {
            for v in t {
                *v *= s;
            }
        }
    }

    pub fn max_abs(&self) -> T {
        self.tensors.iter().flatten().fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

#[derive(Clone, Debug)]
pub struct Network<T> {
    spec: NetworkSpec,
    convs: Vec<ConvLayer<T>>,
    dense: DenseLayer<T>,
}

/// Intermediate values of one forward pass.
struct Trace<T> {
    /// Padded input of each convolution.
    padded: Vec<Vec<T>>,
    /// Post-activation output of each convolution.
    outputs: Vec<Vec<T>>,
    logits: Vec<T>,
}

/// Per-worker gradient accumulator over raw (expanded) weights.
struct Accumulator<T> {
    conv_filters: Vec<Vec<T>>,
    conv_bias: Vec<Vec<T>>,
    /// `(dense input, logit gradient)` per example; the dense weight gradient
    /// is their summed outer product, formed once per batch.
    dense_terms: Vec<(Vec<T>, Vec<T>)>,
    dense_bias: Vec<T>,
    loss: f64,
}

impl<T: Scalar> Network<T> {
    /// All parameters zero.
    pub fn new(spec: NetworkSpec) -> Result<Self, NetError> {
        spec.validate()?;
        let mut in_ch = spec.input_channels();
        let mut convs = Vec::with_capacity(spec.layers.len());
        for l in &spec.layers {
            convs.push(ConvLayer::new(in_ch, l.filters, l.kernel, spec.tied)?);
            in_ch = l.filters;
        }
        let dense = DenseLayer::new(in_ch, spec.board_size, spec.tied)?;
        Ok(Network { spec, convs, dense })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn encoding(&self) -> EncodingConfig {
        self.spec.encoding
    }

    pub fn board_size(&self) -> usize {
        self.spec.board_size
    }

    pub fn conv_layers(&self) -> &[ConvLayer<T>] {
        &self.convs
    }

    pub fn dense_layer(&self) -> &DenseLayer<T> {
        &self.dense
    }

    pub fn is_tied(&self) -> bool {
        self.spec.tied
    }

    /// Weights drawn from `N(0, std²)` per free parameter, biases zero.
    pub fn init_normal<R: Rng + ?Sized>(&mut self, rng: &mut R, std: f64) {
        let normal = Normal::new(0.0, std).expect("finite standard deviation");
        for c in &mut self.convs {
            c.weights.iter_mut().for_each(|w| *w = T::from_f64(normal.sample(rng)));
            c.bias.iter_mut().for_each(|b| *b = T::zero());
            c.refresh();
        }
        self.dense.weights.iter_mut().for_each(|w| *w = T::from_f64(normal.sample(rng)));
        self.dense.bias.iter_mut().for_each(|b| *b = T::zero());
        self.dense.refresh();
    }

    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for i in 0..self.convs.len() {
            names.push(format!("conv{i}.weight"));
            names.push(format!("conv{i}.bias"));
        }
        names.push("dense.weight".into());
        names.push("dense.bias".into());
        names
    }

    /// Free parameters, in the order of [`Network::tensor_names`].
    pub fn tensors(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        for c in &self.convs {
            out.push(&c.weights);
            out.push(&c.bias);
        }
        out.push(&self.dense.weights);
        out.push(&self.dense.bias);
        out
    }

    fn tensor_mut(&mut self, index: usize) -> Option<&mut Vec<T>> {
        let conv_tensors = 2 * self.convs.len();
        if index < conv_tensors {
            let c = &mut self.convs[index / 2];
            Some(if index.is_multiple_of(2) { &mut c.weights } else { &mut c.bias })
        } else if index == conv_tensors {
            Some(&mut self.dense.weights)
        } else if index == conv_tensors + 1 {
            Some(&mut self.dense.bias)
        } else {
            None
        }
    }

    fn refresh_tensor(&mut self, index: usize) {
        match self.convs.get_mut(index / 2) {
            Some(c) => c.refresh(),
            None => self.dense.refresh(),
        }
    }

    pub fn set_tensor(&mut self, index: usize, data: Vec<T>) -> Result<(), NetError> {
        let slot = self.tensor_mut(index).ok_or(NetError::InvalidSpec(format!("no tensor {index}")))?;
        if slot.len() != data.len() {
            return Err(NetError::Shape { what: "parameter tensor", expected: slot.len(), got: data.len() });
        }
        *slot = data;
        self.refresh_tensor(index);
        Ok(())
    }

    /// Sets one free parameter.
    pub fn set_param(&mut self, tensor: usize, index: usize, value: T) {
        self.tensor_mut(tensor).expect("tensor index")[index] = value;
        self.refresh_tensor(tensor);
    }

    pub fn free_parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Parameters an untied network of the same shape would have.
    pub fn raw_parameter_count(&self) -> usize {
        let conv: usize = self.convs.iter().map(|c| c.expanded().len() + c.bias().len()).sum();
        conv + self.dense.expanded().len() + self.dense.expanded_bias().len()
    }

    /// `params -= step * grads`.
    pub fn apply_gradient(&mut self, grads: &Gradients<T>, step: T) -> Result<(), NetError> {
        let count = self.tensors().len();
        if grads.tensors.len() != count {
            return Err(NetError::Shape { what: "gradient tensors", expected: count, got: grads.tensors.len() });
        }
        for (i, g) in grads.tensors.iter().enumerate() {
            let slot = self.tensor_mut(i).unwrap();
            if slot.len() != g.len() {
                return Err(NetError::Shape { what: "gradient tensor", expected: slot.len(), got: g.len() });
            }
            for (p, &d) in slot.iter_mut().zip(g) {
                *p -= step * d;
            }
        }
        for c in &mut self.convs {
            c.refresh();
        }
        self.dense.refresh();
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let mut net = Network::<U>::new(self.spec.clone()).expect("spec already validated");
        for (i, t) in self.tensors().iter().enumerate() {
            let data = t.iter().map(|v| U::from_f64(v.as_f64())).collect();
            net.set_tensor(i, data).expect("same layout");
        }
        net
    }

    fn check_input(&self, input: &Tensor3<T>) -> Result<(), NetError> {
        let n = self.spec.board_size;
        let c = self.spec.input_channels();
        if input.shape() != (c, n, n) {
            return Err(NetError::InputShape { expected: (c, n, n), got: input.shape() });
        }
        Ok(())
    }

    fn trace(&self, input: &Tensor3<T>) -> Result<Trace<T>, NetError> {
        self.check_input(input)?;
        let n = self.spec.board_size;
        let act = self.spec.activation;
        let mut padded = Vec::with_capacity(self.convs.len());
        let mut outputs: Vec<Vec<T>> = Vec::with_capacity(self.convs.len());
        for (l, conv) in self.convs.iter().enumerate() {
            let pin = if l == 0 {
                pad_for_first_layer(input, conv.pad(), self.spec.encoding).into_vec()
            } else {
                let prev = Tensor3::from_vec(self.convs[l - 1].out_channels(), n, n, outputs[l - 1].clone());
                prev.pad_with(conv.pad(), |_| T::zero()).into_vec()
            };
            let mut out = vec![T::zero(); conv.out_channels() * n * n];
            conv.forward_padded(&pin, n, &mut out);
            for v in &mut out {
                *v = act.apply(*v);
            }
            padded.push(pin);
            outputs.push(out);
        }
        let mut logits = vec![T::zero(); n * n];
        let dense_in = outputs.last().map(|v| v.as_slice()).unwrap_or(input.data());
        self.dense.forward(dense_in, &mut logits);
        Ok(Trace { padded, outputs, logits })
    }

    pub fn logits(&self, input: &Tensor3<T>) -> Result<Vec<T>, NetError> {
        Ok(self.trace(input)?.logits)
    }

    /// Move probabilities over the points allowed by `mask`.
    pub fn forward(&self, input: &Tensor3<T>, mask: &[bool]) -> Result<Vec<T>, NetError> {
        self.check_mask(mask)?;
        masked_softmax(&self.logits(input)?, mask)
    }

    fn check_mask(&self, mask: &[bool]) -> Result<(), NetError> {
        if mask.len() != self.spec.points() {
            return Err(NetError::Shape { what: "mask", expected: self.spec.points(), got: mask.len() });
        }
        Ok(())
    }

    fn accumulator(&self) -> Accumulator<T> {
        Accumulator {
            conv_filters: self.convs.iter().map(|c| vec![T::zero(); c.expanded().len()]).collect(),
            conv_bias: self.convs.iter().map(|c| vec![T::zero(); c.out_channels()]).collect(),
            dense_terms: Vec::new(),
            dense_bias: vec![T::zero(); self.spec.points()],
            loss: 0.0,
        }
    }

    fn accumulate(&self, sample: &Sample<T>, acc: &mut Accumulator<T>) -> Result<(), NetError> {
        self.check_mask(&sample.mask)?;
        let trace = self.trace(&sample.input)?;
        let loss = masked_nll(&trace.logits, &sample.mask, sample.target)?;
        let probs = masked_softmax(&trace.logits, &sample.mask)?;
        let mut grad_logits = probs;
        grad_logits[sample.target] -= T::one();

        let n = self.spec.board_size;
        let act = self.spec.activation;
        for (b, &g) in acc.dense_bias.iter_mut().zip(&grad_logits) {
            *b += g;
        }
        let dense_in = trace.outputs.last().cloned().unwrap_or_else(|| sample.input.data().to_vec());

        if !self.convs.is_empty() {
            let mut grad = vec![T::zero(); dense_in.len()];
            self.dense.backward_input(&grad_logits, &mut grad);
            for l in (0..self.convs.len()).rev() {
                let conv = &self.convs[l];
                for (g, &y) in grad.iter_mut().zip(&trace.outputs[l]) {
                    *g *= act.derivative_at_output(y);
                }
                if l == 0 {
                    conv.backward_padded(&trace.padded[0], &grad, n, &mut acc.conv_filters[0], &mut acc.conv_bias[0], None);
                } else {
                    let mut grad_in = vec![T::zero(); trace.padded[l].len()];
                    conv.backward_padded(
                        &trace.padded[l],
                        &grad,
                        n,
                        &mut acc.conv_filters[l],
                        &mut acc.conv_bias[l],
                        Some(&mut grad_in),
                    );
                    grad = strip_padding(&grad_in, conv.in_channels(), n, conv.pad());
                }
            }
        }
        acc.dense_terms.push((dense_in, grad_logits));
        acc.loss += loss.as_f64();
        Ok(())
    }

    fn merge(&self, mut parts: Vec<Accumulator<T>>) -> Accumulator<T> {
        let mut total = parts.remove(0);
        for part in parts {
            for (a, b) in total.conv_filters.iter_mut().zip(part.conv_filters) {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            }
            for (a, b) in total.conv_bias.iter_mut().zip(part.conv_bias) {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            }
            total.dense_bias.iter_mut().zip(part.dense_bias).for_each(|(x, y)| *x += y);
            total.dense_terms.extend(part.dense_terms);
            total.loss += part.loss;
        }
        total
    }

    fn finish(&self, acc: Accumulator<T>) -> Gradients<T> {
        let mut tensors = Vec::with_capacity(2 * self.convs.len() + 2);
        for (l, conv) in self.convs.iter().enumerate() {
            tensors.push(conv.reduce_filter_grad(&acc.conv_filters[l]));
            tensors.push(acc.conv_bias[l].clone());
        }
        let points = self.spec.points();
        let width = acc.dense_terms.first().map(|(x, _)| x.len()).unwrap_or(0);
        let mut dense_w = vec![T::zero(); self.dense.weights().len()];
        for block in (0..points).step_by(ROW_BLOCK) {
            let rows: Vec<Vec<T>> = (block..(block + ROW_BLOCK).min(points))
                .into_par_iter()
                .map(|p| {
                    let mut row = vec![T::zero(); width];
                    for (x, g) in &acc.dense_terms {
                        let s = g[p];
                        if s != T::zero() {
                            row.iter_mut().zip(x).for_each(|(r, &v)| *r += s * v);
                        }
                    }
                    row
                })
                .collect();
            for (offset, row) in rows.iter().enumerate() {
                self.dense.scatter_row(block + offset, row, &mut dense_w);
            }
        }
        tensors.push(dense_w);
        tensors.push(self.dense.reduce_bias_grad(&acc.dense_bias));
        Gradients { tensors }
    }

    /// Loss `-ln p(target)` and its gradient with respect to every free
    /// parameter, for one example. Only masked-in logits carry gradient.
    pub fn backward(&self, input: &Tensor3<T>, mask: &[bool], target: usize) -> Result<(Gradients<T>, T), NetError> {
        let sample = Sample { input: input.clone(), mask: mask.to_vec(), target };
        let mut acc = self.accumulator();
        self.accumulate(&sample, &mut acc)?;
        let loss = T::from_f64(acc.loss);
        Ok((self.finish(acc), loss))
    }

    /// Mean gradient and mean loss over `samples`. Work is split into fixed
    /// chunks and reduced in chunk order, so the result is bit-identical for
    /// any thread count.
    pub fn batch_gradient(&self, samples: &[Sample<T>]) -> Result<(Gradients<T>, T), NetError> {
        if samples.is_empty() {
            return Err(NetError::EmptyBatch);
        }
        let parts = samples
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut acc = self.accumulator();
                for s in chunk {
                    self.accumulate(s, &mut acc)?;
                }
                Ok(acc)
            })
            .collect::<Result<Vec<_>, NetError>>()?;
        let acc = self.merge(parts);
        let scale = T::from_f64(1.0 / samples.len() as f64);
        let loss = T::from_f64(acc.loss / samples.len() as f64);
        let mut grads = self.finish(acc);
        grads.scale(scale);
        Ok((grads, loss))
    }
}

fn strip_padding<T: Scalar>(padded: &[T], channels: usize, n: usize, pad: usize) -> Vec<T> {
    let wp = n + 2 * pad;
    let mut out = Vec::with_capacity(channels * n * n);
    for c in 0..channels {
        for y in 0..n {
            let start = c * wp * wp + (y + pad) * wp + pad;
            out.extend_from_slice(&padded[start..start + n]);
        }
    }
    out
}
