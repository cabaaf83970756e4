//! The eight symmetries of the square.
//!
//! Every element is written as `H^h V^v T^t`, applied right to left: first an
//! optional transpose about the main diagonal (`T`), then an optional flip of
//! the rows (`V`, reflection across the horizontal axis), then an optional
//! flip of the columns (`H`, reflection across the vertical axis). The three
//! generators are the reflections a Go position can undergo without changing
//! the game; together they generate the whole dihedral group of order 8.

use std::fmt;

/// One element of the symmetry group of the square.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Symmetry(u8);

const TRANSPOSE: u8 = 0b001;
const FLIP_ROWS: u8 = 0b010;
const FLIP_COLS: u8 = 0b100;

impl Symmetry {
    pub const IDENTITY: Symmetry = Symmetry(0);
    /// Reflection across the main diagonal, `(r, c) -> (c, r)`.
    pub const TRANSPOSE: Symmetry = Symmetry(TRANSPOSE);
    /// Reflection across the horizontal axis, `(r, c) -> (n-1-r, c)`.
    pub const FLIP_ROWS: Symmetry = Symmetry(FLIP_ROWS);
    /// Reflection across the vertical axis, `(r, c) -> (r, n-1-c)`.
    pub const FLIP_COLS: Symmetry = Symmetry(FLIP_COLS);

    pub const ALL: [Symmetry; 8] = [
        Symmetry(0),
        Symmetry(1),
        Symmetry(2),
        Symmetry(3),
        Symmetry(4),
        Symmetry(5),
        Symmetry(6),
        Symmetry(7),
    ];

    pub fn from_index(index: usize) -> Option<Symmetry> {
        (index < 8).then_some(Symmetry(index as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    fn has(self, bit: u8) -> bool {
        self.0 & bit != 0
    }

    /// Maps `(row, col)` on an `n x n` grid.
    #[inline]
    pub fn apply(self, row: usize, col: usize, n: usize) -> (usize, usize) {
        let (mut r, mut c) = if self.has(TRANSPOSE) { (col, row) } else { (row, col) };
        if self.has(FLIP_ROWS) {
            r = n - 1 - r;
        }
        if self.has(FLIP_COLS) {
            c = n - 1 - c;
        }
        (r, c)
    }

    /// Maps a row-major index on an `n x n` grid.
    #[inline]
    pub fn apply_index(self, index: usize, n: usize) -> usize {
        let (r, c) = self.apply(index / n, index % n, n);
        r * n + c
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(self, other: Symmetry) -> Symmetry {
        // T H = V T and T V = H T, so pushing our transpose past `other`'s
        // flips swaps which axis they act on.
        let (oh, ov) = (other.has(FLIP_COLS), other.has(FLIP_ROWS));
        let (oh, ov) = if self.has(TRANSPOSE) { (ov, oh) } else { (oh, ov) };
        let h = self.has(FLIP_COLS) ^ oh;
        let v = self.has(FLIP_ROWS) ^ ov;
        let t = self.has(TRANSPOSE) ^ other.has(TRANSPOSE);
        Symmetry(((t as u8) * TRANSPOSE) | ((v as u8) * FLIP_ROWS) | ((h as u8) * FLIP_COLS))
    }

    pub fn inverse(self) -> Symmetry {
        if self.has(TRANSPOSE) {
            let h = self.has(FLIP_ROWS);
            let v = self.has(FLIP_COLS);
            Symmetry(TRANSPOSE | ((v as u8) * FLIP_ROWS) | ((h as u8) * FLIP_COLS))
        } else {
            self
        }
    }

    /// Permutation of a row-major `n x n` grid: `perm[i] = g·i`.
    pub fn permutation(self, n: usize) -> Vec<usize> {
        (0..n * n).map(|i| self.apply_index(i, n)).collect()
    }

    /// Moves every cell of a row-major `n x n` grid: `out[g·i] = grid[i]`.
    pub fn reflect_grid<T: Copy>(self, grid: &[T], n: usize) -> Vec<T> {
        assert_eq!(grid.len(), n * n, "grid is not {n}x{n}");
        let mut out = grid.to_vec();
        for (i, &v) in grid.iter().enumerate() {
            out[self.apply_index(i, n)] = v;
        }
        out
    }
}

impl fmt::Display for Symmetry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if self.has(FLIP_COLS) {
            parts.push("flip-cols");
        }
        if self.has(FLIP_ROWS) {
            parts.push("flip-rows");
        }
        if self.has(TRANSPOSE) {
            parts.push("transpose");
        }
        if parts.is_empty() {
            write!(f, "identity")
        } else {
            write!(f, "{}", parts.join("∘"))
        }
    }
}
