//! Dense 4-D tensors in NCHW layout, the value carrier for the whole crate.
//!
//! Data is a flat row-major `Vec<f32>`: index `((b*C + c)*H + r)*W + col`.
//! Public constructors reject non-finite values; numeric kernels that can
//! produce NaN/Inf re-validate at their own boundaries.

use crate::error::{Error, Result};

/// Dense (batch, channel, row, col) tensor of `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: [usize; 4],
    data: Vec<f32>,
}

/// Inclusive rectangle in (row, col) image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub top: usize,
    pub left: usize,
    pub bottom: usize,
    pub right: usize,
}

impl Region {
    pub fn new(top: usize, left: usize, bottom: usize, right: usize) -> Self {
        Region { top, left, bottom, right }
    }

    pub fn height(&self) -> usize {
        self.bottom + 1 - self.top
    }

    pub fn width(&self) -> usize {
        self.right + 1 - self.left
    }

    pub fn area(&self) -> usize {
        self.height() * self.width()
    }

    /// Intersection, or `None` when the rectangles do not overlap.
    pub fn intersect(&self, other: &Region) -> Option<Region> {
        let top = self.top.max(other.top);
        let left = self.left.max(other.left);
        let bottom = self.bottom.min(other.bottom);
        let right = self.right.min(other.right);
        if top <= bottom && left <= right {
            Some(Region { top, left, bottom, right })
        } else {
            None
        }
    }
}

impl Tensor {
    pub fn zeros(shape: [usize; 4]) -> Tensor {
        let len = shape.iter().product();
        Tensor { shape, data: vec![0.0; len] }
    }

    pub fn filled(shape: [usize; 4], value: f32) -> Tensor {
        let len = shape.iter().product();
        Tensor { shape, data: vec![value; len] }
    }

    /// Builds a tensor from a flat row-major buffer, enforcing the length
    /// and finiteness invariants.
    pub fn from_vec(shape: [usize; 4], data: Vec<f32>) -> Result<Tensor> {
        let len: usize = shape.iter().product();
        if data.len() != len {
            return Err(Error::ShapeMismatch(format!(
                "shape {:?} needs {} values, got {}",
                shape,
                len,
                data.len()
            )));
        }
        let t = Tensor { shape, data };
        t.validate_finite("from_vec")?;
        Ok(t)
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn rows(&self) -> usize {
        self.shape[2]
    }

    pub fn cols(&self) -> usize {
        self.shape[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn idx(&self, b: usize, c: usize, r: usize, col: usize) -> usize {
        ((b * self.shape[1] + c) * self.shape[2] + r) * self.shape[3] + col
    }

    #[inline]
    pub fn at(&self, b: usize, c: usize, r: usize, col: usize) -> f32 {
        self.data[self.idx(b, c, r, col)]
    }

    #[inline]
    pub fn at_mut(&mut self, b: usize, c: usize, r: usize, col: usize) -> &mut f32 {
        let i = self.idx(b, c, r, col);
        &mut self.data[i]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Errors with `context` if any element is NaN or infinite.
    pub fn validate_finite(&self, context: &str) -> Result<()> {
        for (i, v) in self.data.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!(
                    "{context}: element {i} of shape {:?} is {v}",
                    self.shape
                )));
            }
        }
        Ok(())
    }

    /// Translates every channel by (dy, dx); vacated pixels are zero-filled.
    /// Positive dy moves content toward larger row indices.
    pub fn spatial_shift(&self, dy: i64, dx: i64) -> Tensor {
        let [b, c, h, w] = self.shape;
        let mut out = Tensor::zeros(self.shape);
        for bi in 0..b {
            for ci in 0..c {
                for r in 0..h {
                    let src_r = r as i64 - dy;
                    if src_r < 0 || src_r >= h as i64 {
                        continue;
                    }
                    for col in 0..w {
                        let src_c = col as i64 - dx;
                        if src_c < 0 || src_c >= w as i64 {
                            continue;
                        }
                        let v = self.at(bi, ci, src_r as usize, src_c as usize);
                        *out.at_mut(bi, ci, r, col) = v;
                    }
                }
            }
        }
        out
    }

    /// Clamps every element into [lo, hi] in place.
    pub fn clamp_in_place(&mut self, lo: f32, hi: f32) {
        for v in &mut self.data {
            *v = v.clamp(lo, hi);
        }
    }

    /// Root-mean-square of all elements.
    pub fn rms(&self) -> f32 {
        if self.data.is_empty() {
            return 0.0;
        }
        let sum: f64 = self.data.iter().map(|&v| (v as f64) * (v as f64)).sum();
        (sum / self.data.len() as f64).sqrt() as f32
    }
}

/// Root-mean-square difference between `a` and `b` over `region`, pooling
/// all batches and channels.
pub fn rms_distance(a: &Tensor, b: &Tensor, region: &Region) -> Result<f32> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!(
            "rms_distance: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let [nb, nc, h, w] = a.shape();
    if region.top > region.bottom || region.left > region.right {
        return Err(Error::InvalidParam("rms_distance: empty region".into()));
    }
    if region.bottom >= h || region.right >= w {
        return Err(Error::OutOfRange(format!(
            "rms_distance: region {:?} outside {}x{}",
            region, h, w
        )));
    }
    let mut sum = 0.0f64;
    let mut n = 0usize;
    for bi in 0..nb {
        for ci in 0..nc {
            for r in region.top..=region.bottom {
                for col in region.left..=region.right {
                    let d = (a.at(bi, ci, r, col) - b.at(bi, ci, r, col)) as f64;
                    sum += d * d;
                    n += 1;
                }
            }
        }
    }
    Ok((sum / n as f64).sqrt() as f32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_bad_length() {
        assert!(Tensor::from_vec([1, 1, 2, 2], vec![0.0; 3]).is_err());
    }

    #[test]
    fn from_vec_rejects_nan() {
        let err = Tensor::from_vec([1, 1, 1, 2], vec![0.0, f32::NAN]).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn shift_zero_is_identity() {
        let t = Tensor::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.spatial_shift(0, 0), t);
    }

    #[test]
    fn shift_down_by_one() {
        let t = Tensor::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let s = t.spatial_shift(1, 0);
        assert_eq!(s.data(), &[0.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn shift_by_full_height_clears() {
        let t = Tensor::filled([1, 2, 3, 3], 7.0);
        let s = t.spatial_shift(3, 0);
        assert!(s.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rms_distance_identical_is_zero() {
        let t = Tensor::filled([1, 3, 4, 4], 0.25);
        let r = Region::new(0, 0, 3, 3);
        assert_eq!(rms_distance(&t, &t, &r).unwrap(), 0.0);
    }

    #[test]
    fn rms_distance_unit_offset() {
        let a = Tensor::zeros([1, 3, 4, 4]);
        let b = Tensor::filled([1, 3, 4, 4], 1.0);
        let r = Region::new(0, 0, 3, 3);
        let d = rms_distance(&a, &b, &r).unwrap();
        assert!((d - 1.0).abs() < 1e-7);
    }

    #[test]
    fn rms_distance_matches_direct_loop() {
        // Brute-force oracle: accumulate the squared difference with explicit
        // loops over a sub-rectangle and compare.
        let mut rng = crate::rng::Rng::new(42);
        let a = crate::rng::randn_tensor(&mut rng, [2, 3, 5, 6], 0.0, 1.0).unwrap();
        let b = crate::rng::randn_tensor(&mut rng, [2, 3, 5, 6], 0.0, 1.0).unwrap();
        let region = Region::new(1, 2, 3, 4);
        let mut sum = 0.0f64;
        let mut n = 0;
        for bi in 0..2 {
            for ci in 0..3 {
                for r in 1..=3 {
                    for c in 2..=4 {
                        let d = (a.at(bi, ci, r, c) - b.at(bi, ci, r, c)) as f64;
                        sum += d * d;
                        n += 1;
                    }
                }
            }
        }
        let expect = (sum / n as f64).sqrt() as f32;
        let got = rms_distance(&a, &b, &region).unwrap();
        assert!((got - expect).abs() < 1e-7);
    }

    #[test]
    fn rms_distance_region_bounds_checked() {
        let t = Tensor::zeros([1, 1, 4, 4]);
        let r = Region::new(0, 0, 4, 3);
        assert!(rms_distance(&t, &t, &r).is_err());
    }

    #[test]
    fn region_intersect() {
        let a = Region::new(0, 0, 5, 5);
        let b = Region::new(3, 4, 9, 9);
        assert_eq!(a.intersect(&b), Some(Region::new(3, 4, 5, 5)));
        let c = Region::new(6, 6, 9, 9);
        assert_eq!(a.intersect(&c), None);
    }
}
