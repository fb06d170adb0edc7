//! Sylvester-ordered Hadamard structure, the fast Walsh–Hadamard transform,
//! and the masked zero-shifted sensing patterns built from it.
//!
//! Everything here uses natural (Sylvester) ordering: entry `(r, c)` of
//! `H_L` is `(-1)^popcount(r & c)`, which is exactly the matrix produced by
//! repeatedly taking the Kronecker product with the order-2 base matrix.

use crate::error::{Error, Result};
use crate::image::{is_power_of_two, Image};

/// Largest order accepted by [`dense_hadamard`]; dense matrices are only
/// meant as test oracles.
pub const MAX_DENSE_ORDER_LOG2: u32 = 12;

/// Builds `H_{2^n}` by Kronecker recursion from `[[1, 1], [1, -1]]`.
pub fn dense_hadamard(order_log2: u32) -> Result<Vec<Vec<i32>>> {
    if order_log2 > MAX_DENSE_ORDER_LOG2 {
        return Err(Error::size(format!(
            "dense Hadamard order 2^{order_log2} exceeds 2^{MAX_DENSE_ORDER_LOG2}"
        )));
    }
    const BASE: [[i32; 2]; 2] = [[1, 1], [1, -1]];
    let mut h = vec![vec![1i32]];
    for _ in 0..order_log2 {
        let n = h.len();
        let mut next = vec![vec![0i32; 2 * n]; 2 * n];
        for (r, row) in h.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                for (br, base_row) in BASE.iter().enumerate() {
                    for (bc, &b) in base_row.iter().enumerate() {
                        next[2 * r + br][2 * c + bc] = v * b;
                    }
                }
            }
        }
        h = next;
    }
    Ok(h)
}

/// Sign of `H_L(row, col)` without materialising the matrix: `true` for +1.
#[inline]
pub fn hadamard_entry_positive(row: usize, col: usize) -> bool {
    (row & col).count_ones().is_multiple_of(2)
}

fn check_transform_len(len: usize) -> Result<()> {
    if !is_power_of_two(len) {
        return Err(Error::size(format!(
            "transform length {len} is not a power of two"
        )));
    }
    Ok(())
}

/// In-place unnormalised Walsh–Hadamard transform, `v <- H_L v`.
pub fn fwht_in_place(v: &mut [f64]) -> Result<()> {
    check_transform_len(v.len())?;
    let n = v.len();
    let mut half = 1;
    while half < n {
        for block in v.chunks_exact_mut(2 * half) {
            let (lo, hi) = block.split_at_mut(half);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        half *= 2;
    }
    Ok(())
}

/// Returns `H_L v` in O(L log L).
pub fn fwht(v: &[f64]) -> Result<Vec<f64>> {
    let mut out = v.to_vec();
    fwht_in_place(&mut out)?;
    Ok(out)
}

/// In-place inverse transform, `v <- (1/L) H_L v`.
pub fn iht_in_place(v: &mut [f64]) -> Result<()> {
    fwht_in_place(v)?;
    let scale = 1.0 / v.len() as f64;
    v.iter_mut().for_each(|x| *x *= scale);
    Ok(())
}

/// Inverse Hadamard transform, `(1/L) H_L v`.
pub fn iht(v: &[f64]) -> Result<Vec<f64>> {
    let mut out = v.to_vec();
    iht_in_place(&mut out)?;
    Ok(out)
}

/// Converts measurements taken under zero-shifted `{0,1}` patterns into the
/// equivalent bipolar `{+1,-1}` measurements.
///
/// With `H01 = (H + 1) / 2` we have `H x = 2 H01 x - (Σx) 1`, and `Σx` is
/// exactly the row-0 measurement because row 0 lights every marked pixel.
pub fn debias(y_raw: &[f64]) -> Result<Vec<f64>> {
    let Some(&total) = y_raw.first() else {
        return Err(Error::size("cannot debias an empty measurement vector"));
    };
    Ok(y_raw.iter().map(|&y| 2.0 * y - total).collect())
}

/// The stage-wise sensing matrix: rows of a zero-shifted `H_L` rearranged,
/// column by column, into the marked pixels of a `side × side` frame.
///
/// Marked pixel `n` (row-major) is assigned Hadamard column `n₁`, its rank
/// among marked pixels. All `L` rows are projected; columns `M..L` act as
/// zero padding.
#[derive(Debug, Clone)]
pub struct MaskedSensingPlan {
    side: usize,
    mark: Vec<bool>,
    col_of_pixel: Vec<Option<usize>>,
    pixel_of_col: Vec<usize>,
    order: usize,
}

impl MaskedSensingPlan {
    pub fn new(side: usize, mark: Vec<bool>) -> Result<Self> {
        if mark.len() != side * side {
            return Err(Error::size(format!(
                "mark of length {} does not match a {side}x{side} frame",
                mark.len()
            )));
        }
        let mut col_of_pixel = Vec::with_capacity(mark.len());
        let mut pixel_of_col = Vec::new();
        for (n, &marked) in mark.iter().enumerate() {
            if marked {
                col_of_pixel.push(Some(pixel_of_col.len()));
                pixel_of_col.push(n);
            } else {
                col_of_pixel.push(None);
            }
        }
        if pixel_of_col.is_empty() {
            return Err(Error::size("sensing plan needs at least one marked pixel"));
        }
        let order = pixel_of_col.len().next_power_of_two();
        Ok(MaskedSensingPlan {
            side,
            mark,
            col_of_pixel,
            pixel_of_col,
            order,
        })
    }

    /// Plan that marks every pixel (non-adaptive full sampling).
    pub fn full(side: usize) -> Result<Self> {
        Self::new(side, vec![true; side * side])
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn n_pixels(&self) -> usize {
        self.mark.len()
    }

    pub fn n_marked(&self) -> usize {
        self.pixel_of_col.len()
    }

    /// Number of patterns `L`, also the Hadamard order.
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn mark(&self) -> &[bool] {
        &self.mark
    }

    pub fn col_of_pixel(&self, n: usize) -> Option<usize> {
        self.col_of_pixel.get(n).copied().flatten()
    }

    /// Marked pixel indices in column order.
    pub fn marked_pixels(&self) -> &[usize] {
        &self.pixel_of_col
    }

    /// The `{0,1}` pattern for row `m`, generated lazily from the row index.
    pub fn pattern_row(&self, m: usize) -> Result<Vec<u8>> {
        if m >= self.order {
            return Err(Error::Index {
                index: m,
                len: self.order,
            });
        }
        Ok(self
            .col_of_pixel
            .iter()
            .map(|col| match col {
                Some(c) => hadamard_entry_positive(m, *c) as u8,
                None => 0,
            })
            .collect())
    }

    /// Packs the marked pixels of `img` into a length-`L` vector in column
    /// order, zero-padded past `M`.
    pub fn gather(&self, img: &Image) -> Result<Vec<f64>> {
        if img.side() != self.side {
            return Err(Error::size(format!(
                "image side {} does not match plan side {}",
                img.side(),
                self.side
            )));
        }
        let mut out = vec![0.0; self.order];
        for (slot, &n) in out.iter_mut().zip(&self.pixel_of_col) {
            *slot = img.as_slice()[n];
        }
        Ok(out)
    }

    /// Inverse of [`gather`](Self::gather): writes columns `0..M` back to
    /// their pixels, zeros elsewhere.
    pub fn scatter(&self, columns: &[f64]) -> Result<Image> {
        if columns.len() < self.n_marked() {
            return Err(Error::size(format!(
                "{} columns cannot fill {} marked pixels",
                columns.len(),
                self.n_marked()
            )));
        }
        let mut img = Image::zeros(self.side);
        let data = img.as_mut_slice();
        for (&n, &v) in self.pixel_of_col.iter().zip(columns) {
            data[n] = v;
        }
        Ok(img)
    }
}
