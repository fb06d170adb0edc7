//! One-level orthonormal Haar analysis and wavelet-tree edge prediction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// One level of an orthonormal 2D Haar decomposition. Each band is
/// `side/2 × side/2` for a parent image of side `side`.
#[derive(Debug, Clone, PartialEq)]
pub struct HaarBands {
    pub ll: Image,
    pub lh: Image,
    pub hl: Image,
    pub hh: Image,
}

impl HaarBands {
    pub fn band_side(&self) -> usize {
        self.ll.side()
    }

    /// Side of the image these bands were computed from.
    pub fn parent_side(&self) -> usize {
        2 * self.ll.side()
    }

    /// Strongest detail magnitude over the three orientations at `(p, q)`.
    #[inline]
    pub fn detail_magnitude(&self, p: usize, q: usize) -> f64 {
        self.lh
            .get(p, q)
            .abs()
            .max(self.hl.get(p, q).abs())
            .max(self.hh.get(p, q).abs())
    }
}

/// Splits every 2×2 block `(a b; c d)` into
/// `ll = (a+b+c+d)/2`, `lh = (a-b+c-d)/2`, `hl = (a+b-c-d)/2`, `hh = (a-b-c+d)/2`.
pub fn haar_analyze(img: &Image) -> Result<HaarBands> {
    let side = img.side();
    if side < 2 || !side.is_multiple_of(2) {
        return Err(Error::size(format!(
            "Haar analysis needs an even side >= 2, got {side}"
        )));
    }
    let half = side / 2;
    let mut ll = Image::zeros(half);
    let mut lh = Image::zeros(half);
    let mut hl = Image::zeros(half);
    let mut hh = Image::zeros(half);
    for p in 0..half {
        for q in 0..half {
            let a = img.get(2 * p, 2 * q);
            let b = img.get(2 * p, 2 * q + 1);
            let c = img.get(2 * p + 1, 2 * q);
            let d = img.get(2 * p + 1, 2 * q + 1);
            ll.set(p, q, (a + b + c + d) * 0.5);
            lh.set(p, q, (a - b + c - d) * 0.5);
            hl.set(p, q, (a + b - c - d) * 0.5);
            hh.set(p, q, (a - b - c + d) * 0.5);
        }
    }
    Ok(HaarBands { ll, lh, hl, hh })
}

/// Exact inverse of [`haar_analyze`].
pub fn haar_synthesize(bands: &HaarBands) -> Image {
    let half = bands.band_side();
    let mut img = Image::zeros(2 * half);
    for p in 0..half {
        for q in 0..half {
            let (s, h, v, d) = (
                bands.ll.get(p, q),
                bands.lh.get(p, q),
                bands.hl.get(p, q),
                bands.hh.get(p, q),
            );
            img.set(2 * p, 2 * q, (s + h + v + d) * 0.5);
            img.set(2 * p, 2 * q + 1, (s - h + v - d) * 0.5);
            img.set(2 * p + 1, 2 * q, (s + h - v - d) * 0.5);
            img.set(2 * p + 1, 2 * q + 1, (s - h - v + d) * 0.5);
        }
    }
    img
}

/// Replicates each pixel into a 2×2 block (`X ⊗ ones(2,2)`).
pub fn upsample2(x: &Image) -> Image {
    let side = x.side();
    Image::from_fn(2 * side, |p, q| x.get(p / 2, q / 2))
}

/// How edge regions are selected from detail magnitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkPolicy {
    /// Mark every block whose detail magnitude is `>=` the threshold.
    Threshold(f64),
    /// Mark the strongest blocks that fit in this many patterns.
    Budget(usize),
}

/// Binary per-pixel edge indicator, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkVector {
    side: usize,
    bits: Vec<bool>,
    n_marked: usize,
}

impl MarkVector {
    pub fn new(side: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != side * side {
            return Err(Error::size(format!(
                "{} mark bits cannot cover a {side}x{side} frame",
                bits.len()
            )));
        }
        let n_marked = bits.iter().filter(|&&b| b).count();
        Ok(MarkVector {
            side,
            bits,
            n_marked,
        })
    }

    pub fn empty(side: usize) -> Self {
        MarkVector {
            side,
            bits: vec![false; side * side],
            n_marked: 0,
        }
    }

    pub fn full(side: usize) -> Self {
        MarkVector {
            side,
            bits: vec![true; side * side],
            n_marked: side * side,
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn into_bits(self) -> Vec<bool> {
        self.bits
    }

    pub fn n_marked(&self) -> usize {
        self.n_marked
    }

    pub fn is_marked(&self, p: usize, q: usize) -> bool {
        self.bits[p * self.side + q]
    }

    /// The same regions at twice the resolution: each marked pixel marks
    /// its four children.
    pub fn children(&self) -> MarkVector {
        let side = 2 * self.side;
        let mut bits = Vec::with_capacity(side * side);
        for p in 0..side {
            for q in 0..side {
                bits.push(self.is_marked(p / 2, q / 2));
            }
        }
        MarkVector {
            side,
            bits,
            n_marked: 4 * self.n_marked,
        }
    }
}

/// Predicts edge regions from one level of detail coefficients.
///
/// Each coefficient position `(p, q)` owns the 2×2 block of pixels it was
/// computed from; the returned mark has side `2 * band_side`.
pub fn predict_mark(bands: &HaarBands, policy: MarkPolicy) -> Result<MarkVector> {
    let half = bands.band_side();
    let mut selected = vec![false; half * half];
    match policy {
        MarkPolicy::Threshold(threshold) => {
            if threshold.is_nan() {
                return Err(Error::Config("threshold is NaN".into()));
            }
            for p in 0..half {
                for q in 0..half {
                    selected[p * half + q] = bands.detail_magnitude(p, q) >= threshold;
                }
            }
        }
        MarkPolicy::Budget(budget) => {
            if budget < 1 {
                return Err(Error::Budget(
                    "stage pattern budget must be at least one pattern".into(),
                ));
            }
            // largest power of two that fits, four pixels per coefficient
            let patterns = 1usize << (usize::BITS - 1 - budget.leading_zeros());
            let max_blocks = patterns / 4;
            let mut candidates: Vec<(f64, usize)> = (0..half * half)
                .map(|i| (bands.detail_magnitude(i / half, i % half), i))
                .filter(|&(d, _)| d > 0.0)
                .collect();
            candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            for &(_, i) in candidates.iter().take(max_blocks) {
                selected[i] = true;
            }
        }
    }

    let side = 2 * half;
    let mut bits = Vec::with_capacity(side * side);
    for p in 0..side {
        for q in 0..side {
            bits.push(selected[(p / 2) * half + q / 2]);
        }
    }
    MarkVector::new(side, bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn avg_pool2(x: &Image) -> Image {
        Image::from_fn(x.side() / 2, |p, q| {
            (x.get(2 * p, 2 * q)
                + x.get(2 * p, 2 * q + 1)
                + x.get(2 * p + 1, 2 * q)
                + x.get(2 * p + 1, 2 * q + 1))
                / 4.0
        })
    }

    fn energy(img: &Image) -> f64 {
        img.as_slice().iter().map(|v| v * v).sum()
    }

    fn band_energy(b: &HaarBands) -> f64 {
        energy(&b.ll) + energy(&b.lh) + energy(&b.hl) + energy(&b.hh)
    }

    fn bands_with_hh(half: usize, at: (usize, usize), value: f64) -> HaarBands {
        let mut hh = Image::zeros(half);
        hh.set(at.0, at.1, value);
        HaarBands {
            ll: Image::filled(half, 5.0),
            lh: Image::zeros(half),
            hl: Image::zeros(half),
            hh,
        }
    }

    #[test]
    fn haar_constant_and_diagonal_blocks() {
        let b = haar_analyze(&Image::filled(2, 3.0)).unwrap();
        assert_eq!(b.ll.as_slice(), &[6.0]);
        assert_eq!(
            (b.lh.get(0, 0), b.hl.get(0, 0), b.hh.get(0, 0)),
            (0.0, 0.0, 0.0)
        );

        let diag = Image::from_vec(2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = haar_analyze(&diag).unwrap();
        assert_eq!(
            (
                b.ll.get(0, 0),
                b.lh.get(0, 0),
                b.hl.get(0, 0),
                b.hh.get(0, 0)
            ),
            (1.0, 0.0, 0.0, 1.0)
        );
    }

    #[test]
    fn haar_rejects_odd_side() {
        assert!(matches!(
            haar_analyze(&Image::zeros(3)),
            Err(Error::Size(_))
        ));
        assert!(matches!(
            haar_analyze(&Image::zeros(1)),
            Err(Error::Size(_))
        ));
    }

    #[test]
    fn upsample_replicates() {
        assert_eq!(upsample2(&Image::filled(1, 3.0)).as_slice(), &[3.0; 4]);
        let x = Image::from_vec(2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let up = upsample2(&x);
        #[rustfmt::skip]
        let expected = [
            1.0, 1.0, 0.0, 0.0,
            1.0, 1.0, 0.0, 0.0,
            0.0, 0.0, 1.0, 1.0,
            0.0, 0.0, 1.0, 1.0,
        ];
        assert_eq!(up.as_slice(), &expected);
    }

    #[test]
    fn predict_mark_examples() {
        let zero = bands_with_hh(4, (0, 0), 0.0);
        let m = predict_mark(&zero, MarkPolicy::Threshold(0.1)).unwrap();
        assert_eq!(m.n_marked(), 0);
        let m = predict_mark(&zero, MarkPolicy::Threshold(0.0)).unwrap();
        assert_eq!(m.n_marked(), 64);

        let one = bands_with_hh(4, (0, 0), 0.3);
        let m = predict_mark(&one, MarkPolicy::Threshold(0.2)).unwrap();
        assert_eq!(m.n_marked(), 4);
        let marked: Vec<(usize, usize)> = (0..8)
            .flat_map(|p| (0..8).map(move |q| (p, q)))
            .filter(|&(p, q)| m.is_marked(p, q))
            .collect();
        assert_eq!(marked, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
    }

    #[test]
    fn budget_policy_picks_strongest() {
        let mut bands = bands_with_hh(4, (0, 0), 0.3);
        bands.lh.set(2, 3, -0.9);
        bands.hl.set(1, 1, 0.5);
        // 11 patterns -> 8 usable -> two blocks
        let m = predict_mark(&bands, MarkPolicy::Budget(11)).unwrap();
        assert_eq!(m.n_marked(), 8);
        assert!(m.is_marked(4, 6) && m.is_marked(2, 2) && !m.is_marked(0, 0));
        assert_eq!(
            predict_mark(&bands, MarkPolicy::Budget(3))
                .unwrap()
                .n_marked(),
            0
        );
        assert!(matches!(
            predict_mark(&bands, MarkPolicy::Budget(0)),
            Err(Error::Budget(_))
        ));
    }

    #[test]
    fn children_quadruple_marks() {
        let m = MarkVector::new(2, vec![true, false, false, false]).unwrap();
        let c = m.children();
        assert_eq!(c.side(), 4);
        assert_eq!(c.n_marked(), 4);
        assert!(c.is_marked(1, 1) && !c.is_marked(2, 2));
    }

    fn arb_image() -> impl Strategy<Value = Image> {
        (1usize..=4).prop_flat_map(|k| {
            let side = 1 << k;
            prop::collection::vec(-10.0f64..10.0, side * side)
                .prop_map(move |v| Image::from_vec(side, v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn haar_preserves_energy_and_inverts(img in arb_image()) {
            let bands = haar_analyze(&img).unwrap();
            let e = energy(&img);
            prop_assert!((band_energy(&bands) - e).abs() <= 1e-9 * e.max(1.0));
            let back = haar_synthesize(&bands);
            prop_assert!(back.max_abs_diff(&img).unwrap() <= 1e-10);
        }

        #[test]
        fn avg_pool_inverts_upsample(img in arb_image()) {
            prop_assert!(avg_pool2(&upsample2(&img)).max_abs_diff(&img).unwrap() <= 1e-12);
        }

        #[test]
        fn mark_blocks_aligned(img in arb_image(), t in 0.0f64..5.0) {
            let m = predict_mark(&haar_analyze(&img).unwrap(), MarkPolicy::Threshold(t)).unwrap();
            prop_assert_eq!(m.n_marked(), m.bits().iter().filter(|&&b| b).count());
            for p in (0..m.side()).step_by(2) {
                for q in (0..m.side()).step_by(2) {
                    let v = m.is_marked(p, q);
                    prop_assert!(m.is_marked(p + 1, q) == v && m.is_marked(p, q + 1) == v && m.is_marked(p + 1, q + 1) == v);
                }
            }
        }

        #[test]
        fn band_permutation_invariant(img in arb_image(), t in 0.0f64..5.0) {
            let b = haar_analyze(&img).unwrap();
            let swapped = HaarBands { ll: b.ll.clone(), lh: b.hh.clone(), hl: b.lh.clone(), hh: b.hl.clone() };
            prop_assert_eq!(
                predict_mark(&b, MarkPolicy::Threshold(t)).unwrap(),
                predict_mark(&swapped, MarkPolicy::Threshold(t)).unwrap()
            );
        }

        #[test]
        fn threshold_monotone(img in arb_image(), t in 0.0f64..5.0, dt in 0.0f64..5.0) {
            let b = haar_analyze(&img).unwrap();
            let lo = predict_mark(&b, MarkPolicy::Threshold(t)).unwrap();
            let hi = predict_mark(&b, MarkPolicy::Threshold(t + dt)).unwrap();
            prop_assert!(hi.bits().iter().zip(lo.bits()).all(|(&h, &l)| !h || l));
        }

        #[test]
        fn budget_never_exceeded(img in arb_image(), budget in 1usize..200) {
            let m = predict_mark(&haar_analyze(&img).unwrap(), MarkPolicy::Budget(budget)).unwrap();
            if m.n_marked() >= 1 {
                prop_assert!(m.n_marked().next_power_of_two() <= budget);
            }
        }
    }
}
