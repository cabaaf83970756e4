//! Orbit maps: which raw weights share one free parameter.
//!
//! A reflection-preserving layer needs its weights to be constant on the
//! orbits of the symmetry group acting on weight coordinates. For a
//! convolution the group acts on the kernel offsets; for a dense layer laid
//! out as `out_position x in_position` it acts on both positions at once.
//! Orbit ids are assigned in order of each orbit's smallest raw index.

use thiserror::Error;

use crate::symmetry::Symmetry;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OrbitError {
    #[error("kernel size {0} must be odd and at least 1")]
    EvenKernel(usize),
    #[error("dense tying needs square maps of equal side, got {out_side}x{out_side} outputs over {in_side}x{in_side} inputs")]
    NonSquare { out_side: usize, in_side: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrbitMap {
    raw_shape: Vec<usize>,
    orbit_of: Vec<u32>,
    member_offsets: Vec<u32>,
    members: Vec<u32>,
}

impl OrbitMap {
    /// Orbits of `0..len` under the permutations produced by `act`.
    pub fn from_action(raw_shape: Vec<usize>, act: impl Fn(Symmetry, usize) -> usize) -> OrbitMap {
        let len: usize = raw_shape.iter().product();
        let mut orbit_of = vec![u32::MAX; len];
        let mut groups: Vec<Vec<u32>> = Vec::new();
        for i in 0..len {
            if orbit_of[i] != u32::MAX {
                continue;
            }
            let id = groups.len() as u32;
            let mut members = Vec::with_capacity(8);
            for g in Symmetry::ALL {
                let j = act(g, i);
                if orbit_of[j] == u32::MAX {
                    orbit_of[j] = id;
                    members.push(j as u32);
                }
            }
            members.sort_unstable();
            groups.push(members);
        }
        let mut member_offsets = Vec::with_capacity(groups.len() + 1);
        let mut flat = Vec::with_capacity(len);
        member_offsets.push(0);
        for g in groups {
            flat.extend(g);
            member_offsets.push(flat.len() as u32);
        }
        OrbitMap { raw_shape, orbit_of, member_offsets, members: flat }
    }

    /// Every raw index its own orbit; what an untied layer uses.
    pub fn identity(raw_shape: Vec<usize>) -> OrbitMap {
        let len: usize = raw_shape.iter().product();
        OrbitMap {
            raw_shape,
            orbit_of: (0..len as u32).collect(),
            member_offsets: (0..=len as u32).collect(),
            members: (0..len as u32).collect(),
        }
    }

    pub fn raw_shape(&self) -> &[usize] {
        &self.raw_shape
    }

    pub fn raw_len(&self) -> usize {
        self.orbit_of.len()
    }

    pub fn orbit_count(&self) -> usize {
        self.member_offsets.len() - 1
    }

    #[inline]
    pub fn orbit_of(&self, raw: usize) -> usize {
        self.orbit_of[raw] as usize
    }

    pub fn orbit_ids(&self) -> &[u32] {
        &self.orbit_of
    }

    pub fn members(&self, orbit: usize) -> &[u32] {
        let (a, b) = (self.member_offsets[orbit] as usize, self.member_offsets[orbit + 1] as usize);
        &self.members[a..b]
    }

    /// Raw weights from one value per orbit.
    pub fn expand<T: Copy>(&self, params: &[T]) -> Vec<T> {
        assert_eq!(params.len(), self.orbit_count());
        self.orbit_of.iter().map(|&o| params[o as usize]).collect()
    }

    /// Derivative with respect to each shared parameter: the sum of the raw
    /// gradients of its members.
    pub fn reduce_sum<T: Copy + std::ops::AddAssign + Default>(&self, raw: &[T]) -> Vec<T> {
        assert_eq!(raw.len(), self.raw_len());
        let mut out = vec![T::default(); self.orbit_count()];
        for (&o, &g) in self.orbit_of.iter().zip(raw) {
            out[o as usize] += g;
        }
        out
    }

    /// Projects raw weights onto the tied subspace by averaging each orbit.
    pub fn project_mean(&self, raw: &[f64]) -> Vec<f64> {
        let sums = self.reduce_sum(raw);
        sums.iter()
            .enumerate()
            .map(|(o, s)| s / self.members(o).len() as f64)
            .collect()
    }
}

/// Orbits of the `k x k` kernel offsets.
pub fn build_orbit_map_conv(k: usize) -> Result<OrbitMap, OrbitError> {
    if k.is_multiple_of(2) {
        return Err(OrbitError::EvenKernel(k));
    }
    Ok(OrbitMap::from_action(vec![k, k], |g, i| g.apply_index(i, k)))
}

/// Orbits for a dense layer with a square output map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DenseOrbits {
    /// Over `(out_position, in_position)` pairs of one input channel. Every
    /// input channel uses its own copy of these orbits.
    pub pairs: OrbitMap,
    /// Over output positions; ties the biases.
    pub outputs: OrbitMap,
}

pub fn build_orbit_map_dense(out_side: usize, in_side: usize) -> Result<DenseOrbits, OrbitError> {
    if out_side != in_side {
        return Err(OrbitError::NonSquare { out_side, in_side });
    }
    let n = out_side;
    let n2 = n * n;
    let pairs = OrbitMap::from_action(vec![n2, n2], |g, i| {
        let (p, q) = (i / n2, i % n2);
        g.apply_index(p, n) * n2 + g.apply_index(q, n)
    });
    let outputs = OrbitMap::from_action(vec![n, n], |g, i| g.apply_index(i, n));
    Ok(DenseOrbits { pairs, outputs })
}
