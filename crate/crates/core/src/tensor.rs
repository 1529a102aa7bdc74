use std::ops::{Index, IndexMut};

use serde::{Serialize, Serializer};

/// Dense rank-3 array indexed `[upper, lower1, lower2]` throughout the crate.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(d0: usize, d1: usize, d2: usize) -> Self {
        Self { dims: [d0, d1, d2], data: vec![0.0; d0 * d1 * d2] }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    fn offset(&self, [a, b, c]: [usize; 3]) -> usize {
        debug_assert!(a < self.dims[0] && b < self.dims[1] && c < self.dims[2]);
        (a * self.dims[1] + b) * self.dims[2] + c
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest entrywise difference; `f64::INFINITY` on shape mismatch.
    pub fn max_abs_diff(&self, other: &Tensor3) -> f64 {
        if self.dims != other.dims {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Nested `Vec` view for JSON reports.
    pub fn to_nested(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.dims[0])
            .map(|a| {
                (0..self.dims[1])
                    .map(|b| (0..self.dims[2]).map(|c| self[[a, b, c]]).collect())
                    .collect()
            })
            .collect()
    }
}

/// Serialized as nested arrays `[upper][lower1][lower2]`.
impl Serialize for Tensor3 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_nested().serialize(s)
    }
}

impl Index<[usize; 3]> for Tensor3 {
    type Output = f64;
    #[inline]
    fn index(&self, idx: [usize; 3]) -> &f64 {
        &self.data[self.offset(idx)]
    }
}

impl IndexMut<[usize; 3]> for Tensor3 {
    #[inline]
    fn index_mut(&mut self, idx: [usize; 3]) -> &mut f64 {
        let o = self.offset(idx);
        &mut self.data[o]
    }
}
