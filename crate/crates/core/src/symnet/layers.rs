//! Convolution and dense layers whose free parameters live on orbits.
//!
//! Both layers keep an expanded copy of their raw weights, rebuilt by
//! [`ConvLayer::refresh`] / [`DenseLayer::refresh`] whenever the free
//! parameters change. Untied layers use identity orbit maps, so the code
//! path is the same either way.

use std::sync::Arc;

use super::orbit::{build_orbit_map_conv, build_orbit_map_dense, OrbitError, OrbitMap};
use super::Scalar;

#[derive(Clone, Debug)]
pub struct ConvLayer<T> {
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    orbits: Arc<OrbitMap>,
    tied: bool,
    /// `[out][in][orbit]`
    pub(crate) weights: Vec<T>,
    /// One per output channel; already reflection invariant.
    pub(crate) bias: Vec<T>,
    /// `[out][in][ky][kx]`
    expanded: Vec<T>,
}

impl<T: Scalar> ConvLayer<T> {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, tied: bool) -> Result<Self, OrbitError> {
        let orbits = if tied {
            build_orbit_map_conv(kernel)?
        } else {
            if kernel.is_multiple_of(2) {
                return Err(OrbitError::EvenKernel(kernel));
            }
            OrbitMap::identity(vec![kernel, kernel])
        };
        let free = in_channels * out_channels * orbits.orbit_count();
        let mut layer = ConvLayer {
            in_channels,
            out_channels,
            kernel,
            orbits: Arc::new(orbits),
            tied,
            weights: vec![T::zero(); free],
            bias: vec![T::zero(); out_channels],
            expanded: Vec::new(),
        };
        layer.refresh();
        Ok(layer)
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn pad(&self) -> usize {
        (self.kernel - 1) / 2
    }

    pub fn is_tied(&self) -> bool {
        self.tied
    }

    pub fn orbits(&self) -> &OrbitMap {
        &self.orbits
    }

    /// Free spatial parameters per (output, input) channel pair.
    pub fn spatial_params(&self) -> usize {
        self.orbits.orbit_count()
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    /// Expanded `k x k` filter for one channel pair.
    pub fn filter(&self, out: usize, input: usize) -> &[T] {
        let kk = self.kernel * self.kernel;
        let base = (out * self.in_channels + input) * kk;
        &self.expanded[base..base + kk]
    }

    pub fn expanded(&self) -> &[T] {
        &self.expanded
    }

    pub fn refresh(&mut self) {
        let kk = self.kernel * self.kernel;
        let oc = self.orbits.orbit_count();
        let pairs = self.in_channels * self.out_channels;
        let mut expanded = Vec::with_capacity(pairs * kk);
        for pair in 0..pairs {
            let free = &self.weights[pair * oc..(pair + 1) * oc];
            expanded.extend(self.orbits.orbit_ids().iter().map(|&o| free[o as usize]));
        }
        self.expanded = expanded;
    }

    /// Stride-1 convolution of an already padded input
    /// (`in_channels x (n+2p) x (n+2p)`) into `out` (`out_channels x n x n`).
    pub(crate) fn forward_padded(&self, input: &[T], n: usize, out: &mut [T]) {
        let k = self.kernel;
        let wp = n + k - 1;
        debug_assert_eq!(input.len(), self.in_channels * wp * wp);
        debug_assert_eq!(out.len(), self.out_channels * n * n);
        for o in 0..self.out_channels {
            let out_o = &mut out[o * n * n..(o + 1) * n * n];
            out_o.fill(self.bias[o]);
            for i in 0..self.in_channels {
                let in_i = &input[i * wp * wp..(i + 1) * wp * wp];
                let filter = self.filter(o, i);
                for ky in 0..k {
                    for kx in 0..k {
                        let w = filter[ky * k + kx];
                        for y in 0..n {
                            let src = &in_i[(y + ky) * wp + kx..(y + ky) * wp + kx + n];
                            let dst = &mut out_o[y * n..(y + 1) * n];
                            for (d, &s) in dst.iter_mut().zip(src) {
                                *d += w * s;
                            }
                        }
                    }
                }
            }
        }
    }

    /// Accumulates raw filter and bias gradients for one example, and if
    /// `grad_input` is given, the gradient with respect to the padded input.
    pub(crate) fn backward_padded(
        &self,
        input: &[T],
        grad_out: &[T],
        n: usize,
        grad_filter: &mut [T],
        grad_bias: &mut [T],
        mut grad_input: Option<&mut [T]>,
    ) {
        let k = self.kernel;
        let wp = n + k - 1;
        for o in 0..self.out_channels {
            let g_o = &grad_out[o * n * n..(o + 1) * n * n];
            grad_bias[o] += g_o.iter().copied().sum::<T>();
            for i in 0..self.in_channels {
                let in_i = &input[i * wp * wp..(i + 1) * wp * wp];
                let base = (o * self.in_channels + i) * k * k;
                let filter = self.filter(o, i);
                for ky in 0..k {
                    for kx in 0..k {
                        let mut acc = T::zero();
                        for y in 0..n {
                            let src = &in_i[(y + ky) * wp + kx..(y + ky) * wp + kx + n];
                            let g = &g_o[y * n..(y + 1) * n];
                            for (&a, &b) in src.iter().zip(g) {
                                acc += a * b;
                            }
                        }
                        grad_filter[base + ky * k + kx] += acc;
                    }
                }
                if let Some(gi) = grad_input.as_deref_mut() {
                    let gi_i = &mut gi[i * wp * wp..(i + 1) * wp * wp];
                    for ky in 0..k {
                        for kx in 0..k {
                            let w = filter[ky * k + kx];
                            for y in 0..n {
                                let dst = &mut gi_i[(y + ky) * wp + kx..(y + ky) * wp + kx + n];
                                let g = &g_o[y * n..(y + 1) * n];
                                for (d, &b) in dst.iter_mut().zip(g) {
                                    *d += w * b;
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// Raw filter gradient folded onto the free parameters.
    pub(crate) fn reduce_filter_grad(&self, raw: &[T]) -> Vec<T> {
        let kk = self.kernel * self.kernel;
        let oc = self.orbits.orbit_count();
        let pairs = self.in_channels * self.out_channels;
        let mut out = vec![T::zero(); pairs * oc];
        for pair in 0..pairs {
            let dst = &mut out[pair * oc..(pair + 1) * oc];
            for (u, &o) in self.orbits.orbit_ids().iter().enumerate() {
                dst[o as usize] += raw[pair * kk + u];
            }
        }
        out
    }
}

/// Fully connected top layer from `in_channels x n x n` to `n x n` logits.
#[derive(Clone, Debug)]
pub struct DenseLayer<T> {
    in_channels: usize,
    side: usize,
    pair_orbits: Arc<OrbitMap>,
    output_orbits: Arc<OrbitMap>,
    tied: bool,
    /// `[in_channel][pair_orbit]`
    pub(crate) weights: Vec<T>,
    /// `[output_orbit]`
    pub(crate) bias: Vec<T>,
    /// Row-major `[out_position][in_channel * n² + in_position]`.
    expanded: Vec<T>,
    expanded_bias: Vec<T>,
}

impl<T: Scalar> DenseLayer<T> {
    pub fn new(in_channels: usize, side: usize, tied: bool) -> Result<Self, OrbitError> {
        let n2 = side * side;
        let (pairs, outputs) = if tied {
            let d = build_orbit_map_dense(side, side)?;
            (d.pairs, d.outputs)
        } else {
            (OrbitMap::identity(vec![n2, n2]), OrbitMap::identity(vec![side, side]))
        };
        let mut layer = DenseLayer {
            in_channels,
            side,
            weights: vec![T::zero(); in_channels * pairs.orbit_count()],
            bias: vec![T::zero(); outputs.orbit_count()],
            pair_orbits: Arc::new(pairs),
            output_orbits: Arc::new(outputs),
            tied,
            expanded: Vec::new(),
            expanded_bias: Vec::new(),
        };
        layer.refresh();
        Ok(layer)
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn is_tied(&self) -> bool {
        self.tied
    }

    pub fn pair_orbits(&self) -> &OrbitMap {
        &self.pair_orbits
    }

    pub fn output_orbits(&self) -> &OrbitMap {
        &self.output_orbits
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn expanded(&self) -> &[T] {
        &self.expanded
    }

    pub fn expanded_bias(&self) -> &[T] {
        &self.expanded_bias
    }

    fn input_len(&self) -> usize {
        self.in_channels * self.side * self.side
    }

    pub fn refresh(&mut self) {
        let n2 = self.side * self.side;
        let k = self.pair_orbits.orbit_count();
        let ids = self.pair_orbits.orbit_ids();
        let mut expanded = vec![T::zero(); n2 * self.input_len()];
        for (p, row) in expanded.chunks_mut(self.input_len()).enumerate() {
            let row_ids = &ids[p * n2..(p + 1) * n2];
            for c in 0..self.in_channels {
                let free = &self.weights[c * k..(c + 1) * k];
                for (dst, &o) in row[c * n2..(c + 1) * n2].iter_mut().zip(row_ids) {
                    *dst = free[o as usize];
                }
            }
        }
        self.expanded = expanded;
        self.expanded_bias = self.output_orbits.expand(&self.bias);
    }

    pub(crate) fn forward(&self, input: &[T], logits: &mut [T]) {
        debug_assert_eq!(input.len(), self.input_len());
        for ((z, row), &b) in logits.iter_mut().zip(self.expanded.chunks(self.input_len())).zip(&self.expanded_bias) {
            let mut acc = T::zero();
            for (&w, &x) in row.iter().zip(input) {
                acc += w * x;
            }
            *z = acc + b;
        }
    }

    /// Gradient with respect to the layer input.
    pub(crate) fn backward_input(&self, grad_logits: &[T], grad_input: &mut [T]) {
        for (row, &g) in self.expanded.chunks(self.input_len()).zip(grad_logits) {
            if g == T::zero() {
                continue;
            }
            for (d, &w) in grad_input.iter_mut().zip(row) {
                *d += g * w;
            }
        }
    }

    /// Free-parameter gradient for one raw output row `p`:
    /// adds `row[j]` into the orbit of `(p, j)`.
    pub(crate) fn scatter_row(&self, p: usize, row: &[T], grad_weights: &mut [T]) {
        let n2 = self.side * self.side;
        let k = self.pair_orbits.orbit_count();
        let ids = &self.pair_orbits.orbit_ids()[p * n2..(p + 1) * n2];
        for c in 0..self.in_channels {
            let dst = &mut grad_weights[c * k..(c + 1) * k];
            for (&g, &o) in row[c * n2..(c + 1) * n2].iter().zip(ids) {
                dst[o as usize] += g;
            }
        }
    }

    pub(crate) fn reduce_bias_grad(&self, raw: &[T]) -> Vec<T> {
        self.output_orbits.reduce_sum(raw)
    }
}
