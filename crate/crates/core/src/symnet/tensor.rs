use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;

use crate::symmetry::Symmetry;

/// Floating point type the network can run in: `f32` for training and play,
/// `f64` for gradient checks.
pub trait Scalar:
    Float + AddAssign + SubAssign + MulAssign + Sum + Default + Debug + Send + Sync + 'static
{
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

/// Dense `channels x height x width` array, row-major within each channel.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3<T> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> Tensor3<T> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Tensor3 { channels, height, width, data: vec![T::zero(); channels * height * width] }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), channels * height * width, "tensor data length mismatch");
        Tensor3 { channels, height, width, data }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> T {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: T) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn plane(&self, c: usize) -> &[T] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [T] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn cast<U: Scalar>(&self) -> Tensor3<U> {
        Tensor3 {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }

    /// Surrounds every plane with a ring of width `pad`, filled with
    /// `fill[c]` for channel `c`.
    pub fn pad_with(&self, pad: usize, fill: impl Fn(usize) -> T) -> Tensor3<T> {
        let (h, w) = (self.height + 2 * pad, self.width + 2 * pad);
        let mut out = Tensor3::zeros(self.channels, h, w);
        for c in 0..self.channels {
            let v = fill(c);
            let dst = out.plane_mut(c);
            if v != T::zero() {
                dst.fill(v);
            }
            let src = self.plane(c);
            for y in 0..self.height {
                let row = &src[y * self.width..(y + 1) * self.width];
                dst[(y + pad) * w + pad..(y + pad) * w + pad + self.width].copy_from_slice(row);
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Tensor3<T>) -> T {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a - *b).abs())
            .fold(T::zero(), T::max)
    }
}

/// Applies `g` to every channel's spatial layout: `out[c][g·u] = t[c][u]`.
pub fn reflect_tensor<T: Scalar>(t: &Tensor3<T>, g: Symmetry) -> Tensor3<T> {
    assert_eq!(t.height, t.width, "reflection needs a square tensor");
    let n = t.height;
    let perm = g.permutation(n);
    let mut out = Tensor3::zeros(t.channels, n, n);
    for c in 0..t.channels {
        let src = t.plane(c);
        let dst = out.plane_mut(c);
        for (i, &v) in src.iter().enumerate() {
            dst[perm[i]] = v;
        }
    }
    out
}
