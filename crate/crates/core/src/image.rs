//! Square row-major real images shared by every stage of the pipeline.

use crate::error::{Error, Result};

/// A square `side × side` image of `f64` samples, stored row-major so that
/// pixel `(p, q)` lives at linear index `p * side + q`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    side: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn zeros(side: usize) -> Self {
        Self::filled(side, 0.0)
    }

    pub fn filled(side: usize, value: f64) -> Self {
        Image {
            side,
            data: vec![value; side * side],
        }
    }

    pub fn from_vec(side: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != side * side {
            return Err(Error::size(format!(
                "{} samples cannot form a {side}x{side} image",
                data.len()
            )));
        }
        Ok(Image { side, data })
    }

    pub fn from_fn(side: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(side * side);
        for p in 0..side {
            for q in 0..side {
                data.push(f(p, q));
            }
        }
        Image { side, data }
    }

    #[inline]
    pub fn side(&self) -> usize {
        self.side
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, p: usize, q: usize) -> f64 {
        self.data[p * self.side + q]
    }

    #[inline]
    pub fn set(&mut self, p: usize, q: usize, value: f64) {
        self.data[p * self.side + q] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            side: self.side,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Largest absolute difference to `other`, or an error if the sides differ.
    pub fn max_abs_diff(&self, other: &Image) -> Result<f64> {
        self.check_same_side(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub(crate) fn check_same_side(&self, other: &Image) -> Result<()> {
        if self.side != other.side {
            return Err(Error::size(format!(
                "image sides differ: {} vs {}",
                self.side, other.side
            )));
        }
        Ok(())
    }
}

#[inline]
pub fn is_power_of_two(n: usize) -> bool {
    n != 0 && n & (n - 1) == 0
}
