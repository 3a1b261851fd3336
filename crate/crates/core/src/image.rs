//! Grayscale raster images and the patch machinery shared by every
//! denoiser: extraction, accumulate-and-average placement, noise
//! injection and fidelity metrics.
//!
//! Intensities live on the nominal [0, 255] scale (noise levels like
//! sigma = 25 refer to this scale); values may leave the range during
//! processing and are only clamped when exporting 8-bit previews.

use crate::error::{Error, Result};
use crate::rng::{streams, StreamRng};
use crate::scalar::{num, Scalar};

/// Boundary handling for patch windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Indices wrap modulo the image dimensions.
    Periodic,
    /// Windows must lie fully inside the image; anything else is an error.
    Clamped,
}

/// Row-major float image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

/// A square patch window: top-left corner and side length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchIndex {
    pub row: usize,
    pub col: usize,
    pub size: usize,
}

impl PatchIndex {
    pub fn new(row: usize, col: usize, size: usize) -> Self {
        PatchIndex { row, col, size }
    }
}

impl<T: Scalar> Image<T> {
    pub fn zeros(height: usize, width: usize) -> Self {
        assert!(height >= 1 && width >= 1, "image dimensions must be >= 1");
        Image {
            height,
            width,
            data: vec![T::zero(); height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::shape(format!(
                "image data length {} != {}x{}",
                data.len(),
                height,
                width
            )));
        }
        if height == 0 || width == 0 {
            return Err(Error::invalid("image dimensions must be >= 1"));
        }
        Ok(Image {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut img = Image::zeros(height, width);
        for r in 0..height {
            for c in 0..width {
                img.data[r * width + c] = f(r, c);
            }
        }
        img
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.data[row * self.width + col] = value;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn fill(&mut self, value: T) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Image {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn dot(&self, other: &Self) -> T {
        debug_assert_eq!(self.dims(), other.dims());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a * b)
            .sum()
    }

    pub fn scale_in_place(&mut self, s: T) {
        self.data.iter_mut().for_each(|v| *v = *v * s);
    }

    pub fn add_in_place(&mut self, other: &Self) {
        debug_assert_eq!(self.dims(), other.dims());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    /// Element-wise product with another image.
    pub fn mul_in_place(&mut self, other: &Self) {
        debug_assert_eq!(self.dims(), other.dims());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a * b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Clamp every intensity into [0, peak].
    pub fn clamped(&self, peak: T) -> Self {
        self.map(|v| v.max(T::zero()).min(peak))
    }

    /// Rectangular crop; the window must fit.
    pub fn crop(&self, row: usize, col: usize, height: usize, width: usize) -> Result<Self> {
        if row + height > self.height || col + width > self.width {
            return Err(Error::OutOfRange {
                row,
                col,
                size: height.max(width),
                height: self.height,
                width: self.width,
            });
        }
        let mut out = Image::zeros(height, width);
        for r in 0..height {
            let src = (row + r) * self.width + col;
            out.data[r * width..(r + 1) * width].copy_from_slice(&self.data[src..src + width]);
        }
        Ok(out)
    }

    /// Circular shift moving pixel (r, c) to (r + dr, c + dc) mod dims.
    pub fn circular_shift(&self, dr: isize, dc: isize) -> Self {
        let h = self.height as isize;
        let w = self.width as isize;
        let mut out = Image::zeros(self.height, self.width);
        for r in 0..h {
            for c in 0..w {
                let tr = (r + dr).rem_euclid(h) as usize;
                let tc = (c + dc).rem_euclid(w) as usize;
                out.data[tr * self.width + tc] = self.data[r as usize * self.width + c as usize];
            }
        }
        out
    }

    /// Periodic extension to `(height, width)`; a no-op when the target
    /// equals the current size.
    pub fn tile_to(&self, height: usize, width: usize) -> Self {
        Image::from_fn(height, width, |r, c| {
            self.get(r % self.height, c % self.width)
        })
    }

    pub fn mean(&self) -> T {
        self.data.iter().copied().sum::<T>() / num::<T>(self.len() as f64)
    }

    pub fn variance(&self) -> T {
        let m = self.mean();
        self.data
            .iter()
            .map(|&v| (v - m) * (v - m))
            .sum::<T>()
            / num::<T>(self.len() as f64)
    }

    /// Convert the scalar type (through `f64`).
    pub fn cast<U: Scalar>(&self) -> Image<U> {
        Image {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .map(|v| U::from_f64_lit(v.to_f64().unwrap()))
                .collect(),
        }
    }
}

/// Extract the vectorized `size x size` window at `idx` (row-major within
/// the window). Periodic boundary wraps indices; clamped boundary rejects
/// windows leaving the image.
pub fn extract_patch<T: Scalar>(
    img: &Image<T>,
    idx: PatchIndex,
    boundary: Boundary,
) -> Result<Vec<T>> {
    if idx.size == 0 {
        return Err(Error::invalid("patch size must be >= 1"));
    }
    let mut out = vec![T::zero(); idx.size * idx.size];
    extract_patch_into(img, idx, boundary, &mut out)?;
    Ok(out)
}

/// Allocation-free variant of [`extract_patch`].
pub fn extract_patch_into<T: Scalar>(
    img: &Image<T>,
    idx: PatchIndex,
    boundary: Boundary,
    out: &mut [T],
) -> Result<()> {
    let n = idx.size;
    debug_assert_eq!(out.len(), n * n);
    match boundary {
        Boundary::Clamped => {
            if idx.row + n > img.height || idx.col + n > img.width {
                return Err(Error::OutOfRange {
                    row: idx.row,
                    col: idx.col,
                    size: n,
                    height: img.height,
                    width: img.width,
                });
            }
            for r in 0..n {
                let src = (idx.row + r) * img.width + idx.col;
                out[r * n..(r + 1) * n].copy_from_slice(&img.data[src..src + n]);
            }
        }
        Boundary::Periodic => {
            for r in 0..n {
                let sr = (idx.row + r) % img.height;
                let row_base = sr * img.width;
                if idx.col + n <= img.width {
                    out[r * n..(r + 1) * n]
                        .copy_from_slice(&img.data[row_base + idx.col..row_base + idx.col + n]);
                } else {
                    for c in 0..n {
                        let sc = (idx.col + c) % img.width;
                        out[r * n + c] = img.data[row_base + sc];
                    }
                }
            }
        }
    }
    Ok(())
}

/// Add `patch` into the accumulator window and bump the per-pixel weight
/// counters; dividing `img` by `weights` afterwards yields the average of
/// the overlapping placements.
pub fn place_patch_accumulate<T: Scalar>(
    img: &mut Image<T>,
    weights: &mut Image<T>,
    idx: PatchIndex,
    patch: &[T],
    boundary: Boundary,
) -> Result<()> {
    let n = idx.size;
    if n == 0 {
        return Err(Error::invalid("patch size must be >= 1"));
    }
    if patch.len() != n * n {
        return Err(Error::shape(format!(
            "patch length {} != {}^2",
            patch.len(),
            n
        )));
    }
    if img.dims() != weights.dims() {
        return Err(Error::shape("accumulator and weight dimensions differ"));
    }
    if boundary == Boundary::Clamped && (idx.row + n > img.height || idx.col + n > img.width) {
        return Err(Error::OutOfRange {
            row: idx.row,
            col: idx.col,
            size: n,
            height: img.height,
            width: img.width,
        });
    }
    let (h, w) = img.dims();
    for r in 0..n {
        let tr = (idx.row + r) % h;
        for c in 0..n {
            let tc = (idx.col + c) % w;
            let at = tr * w + tc;
            img.data[at] = img.data[at] + patch[r * n + c];
            weights.data[at] = weights.data[at] + T::one();
        }
    }
    Ok(())
}

/// Pixel-wise `img / weights`; zero-weight pixels are left unchanged.
pub fn normalize_by_weights<T: Scalar>(img: &Image<T>, weights: &Image<T>) -> Image<T> {
    debug_assert_eq!(img.dims(), weights.dims());
    let mut out = img.clone();
    for (v, &w) in out.data.iter_mut().zip(&weights.data) {
        if w > T::zero() {
            *v = *v / w;
        }
    }
    out
}

/// Additive white Gaussian noise with standard deviation `sigma`,
/// deterministic in `seed`. Pixels are perturbed in row-major order with
/// one sample each, so the output is a pure function of (image, sigma,
/// seed).
pub fn add_gaussian_noise<T: Scalar>(img: &Image<T>, sigma: T, seed: u64) -> Image<T> {
    assert!(sigma >= T::zero(), "sigma must be non-negative");
    if sigma == T::zero() {
        return img.clone();
    }
    let mut rng = StreamRng::new(seed, streams::NOISE);
    let mut out = img.clone();
    for v in out.data.iter_mut() {
        *v = *v + sigma * num::<T>(rng.normal());
    }
    out
}

/// Mean squared error between two images of equal dimensions.
pub fn mse<T: Scalar>(a: &Image<T>, b: &Image<T>) -> Result<T> {
    if a.dims() != b.dims() {
        return Err(Error::shape(format!(
            "mse dims {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    let sum: T = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum();
    Ok(sum / num::<T>(a.len() as f64))
}

/// Peak signal-to-noise ratio in dB. A perfect match returns the positive
/// infinity sentinel rather than an error.
pub fn psnr<T: Scalar>(reference: &Image<T>, estimate: &Image<T>, peak: T) -> Result<T> {
    let e = mse(reference, estimate)?;
    if e == T::zero() {
        return Ok(T::infinity());
    }
    Ok(num::<T>(10.0) * (peak * peak / e).log10())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img2x2() -> Image<f64> {
        Image::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap()
    }

    #[test]
    fn extract_full_window() {
        let p = extract_patch(&img2x2(), PatchIndex::new(0, 0, 2), Boundary::Clamped).unwrap();
        assert_eq!(p, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn extract_periodic_wraps() {
        // Window anchored at (1,1) wraps in both axes: hand enumeration of
        // indices modulo 2 gives [4, 3, 2, 1].
        let p = extract_patch(&img2x2(), PatchIndex::new(1, 1, 2), Boundary::Periodic).unwrap();
        assert_eq!(p, vec![4.0, 3.0, 2.0, 1.0]);
    }

    #[test]
    fn extract_single_pixel() {
        let img = Image::from_vec(1, 1, vec![5.0]).unwrap();
        let p = extract_patch(&img, PatchIndex::new(0, 0, 1), Boundary::Clamped).unwrap();
        assert_eq!(p, vec![5.0]);
    }

    #[test]
    fn extract_clamped_out_of_range() {
        let err = extract_patch(&img2x2(), PatchIndex::new(1, 1, 2), Boundary::Clamped);
        assert!(matches!(err, Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn place_accumulates_and_averages() {
        let mut img = Image::<f64>::zeros(2, 2);
        let mut w = Image::<f64>::zeros(2, 2);
        let patch = vec![1.0; 4];
        place_patch_accumulate(&mut img, &mut w, PatchIndex::new(0, 0, 2), &patch, Boundary::Clamped)
            .unwrap();
        assert!(img.data().iter().all(|&v| v == 1.0));
        assert!(w.data().iter().all(|&v| v == 1.0));

        place_patch_accumulate(&mut img, &mut w, PatchIndex::new(0, 0, 2), &patch, Boundary::Clamped)
            .unwrap();
        assert!(img.data().iter().all(|&v| v == 2.0));
        assert!(w.data().iter().all(|&v| v == 2.0));
        let avg = normalize_by_weights(&img, &w);
        assert!(avg.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn place_size_one_mean() {
        let mut img = Image::<f64>::zeros(2, 2);
        let mut w = Image::<f64>::zeros(2, 2);
        place_patch_accumulate(&mut img, &mut w, PatchIndex::new(0, 0, 1), &[2.0], Boundary::Clamped)
            .unwrap();
        place_patch_accumulate(&mut img, &mut w, PatchIndex::new(0, 0, 1), &[4.0], Boundary::Clamped)
            .unwrap();
        let avg = normalize_by_weights(&img, &w);
        assert_eq!(avg.get(0, 0), 3.0);
    }

    #[test]
    fn place_zero_size_rejected() {
        let mut img = Image::<f64>::zeros(2, 2);
        let mut w = Image::<f64>::zeros(2, 2);
        let err =
            place_patch_accumulate(&mut img, &mut w, PatchIndex::new(0, 0, 0), &[], Boundary::Clamped);
        assert!(err.is_err());
    }

    #[test]
    fn extract_then_place_round_trips() {
        let img = Image::from_fn(5, 7, |r, c| (3 * r + c) as f64);
        let idx = PatchIndex::new(1, 2, 3);
        let patch = extract_patch(&img, idx, Boundary::Clamped).unwrap();
        let mut acc = Image::<f64>::zeros(5, 7);
        let mut w = Image::<f64>::zeros(5, 7);
        place_patch_accumulate(&mut acc, &mut w, idx, &patch, Boundary::Clamped).unwrap();
        let avg = normalize_by_weights(&acc, &w);
        for r in 1..4 {
            for c in 2..5 {
                assert_eq!(avg.get(r, c), img.get(r, c));
            }
        }
    }

    #[test]
    fn unit_stride_periodic_weights_are_constant_n() {
        // Every pixel is covered by exactly n = size^2 windows.
        let size = 3;
        let (h, w) = (6, 5);
        let mut acc = Image::<f64>::zeros(h, w);
        let mut wts = Image::<f64>::zeros(h, w);
        let patch = vec![0.0; size * size];
        for r in 0..h {
            for c in 0..w {
                place_patch_accumulate(
                    &mut acc,
                    &mut wts,
                    PatchIndex::new(r, c, size),
                    &patch,
                    Boundary::Periodic,
                )
                .unwrap();
            }
        }
        assert!(wts.data().iter().all(|&v| v == (size * size) as f64));
    }

    #[test]
    fn noise_sigma_zero_is_identity() {
        let img = Image::from_fn(4, 4, |r, c| (r * c) as f64);
        let noisy = add_gaussian_noise(&img, 0.0, 99);
        assert_eq!(noisy, img);
    }

    #[test]
    fn noise_is_deterministic() {
        let img = Image::<f64>::zeros(16, 16);
        let a = add_gaussian_noise(&img, 25.0, 7);
        let b = add_gaussian_noise(&img, 25.0, 7);
        assert_eq!(a, b);
        let c = add_gaussian_noise(&img, 25.0, 8);
        assert_ne!(a, c);
    }

    #[test]
    fn noise_sample_std_matches_sigma() {
        // Chi-square bound at N = 65536 keeps the sample std within 4%.
        let img = Image::<f64>::zeros(256, 256);
        let noisy = add_gaussian_noise(&img, 25.0, 123);
        let std = noisy.variance().sqrt();
        assert!((24.0..=26.0).contains(&std), "sample std {std}");
    }

    #[test]
    fn noise_mean_is_unbiased_across_seeds() {
        let img = Image::from_fn(8, 8, |_, _| 100.0);
        let count = 64;
        let sigma = 10.0;
        let mut acc = Image::<f64>::zeros(8, 8);
        for seed in 0..count {
            acc.add_in_place(&add_gaussian_noise(&img, sigma, seed));
        }
        acc.scale_in_place(1.0 / count as f64);
        let bound = 5.0 * sigma / (count as f64).sqrt();
        for &v in acc.data() {
            assert!((v - 100.0).abs() < bound, "pixel mean {v}");
        }
    }

    #[test]
    fn psnr_closed_forms() {
        let reference = Image::from_fn(4, 4, |r, c| (r + c) as f64);
        assert!(psnr(&reference, &reference, 255.0).unwrap().is_infinite());

        let plus5 = reference.map(|v| v + 5.0);
        let expected = 20.0 * (255.0f64 / 5.0).log10();
        assert!((psnr(&reference, &plus5, 255.0).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 34.151).abs() < 1e-3);

        let plus255 = reference.map(|v| v + 255.0);
        assert!(psnr(&reference, &plus255, 255.0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn psnr_symmetric_and_monotone() {
        let a = Image::from_fn(3, 3, |r, c| (r * 3 + c) as f64);
        let b = a.map(|v| v + 2.0);
        assert_eq!(psnr(&a, &b, 255.0).unwrap(), psnr(&b, &a, 255.0).unwrap());
        let worse = a.map(|v| v + 4.0);
        assert!(psnr(&a, &b, 255.0).unwrap() > psnr(&a, &worse, 255.0).unwrap());
    }

    #[test]
    fn psnr_dimension_mismatch() {
        let a = Image::<f64>::zeros(2, 2);
        let b = Image::<f64>::zeros(2, 3);
        assert!(psnr(&a, &b, 255.0).is_err());
    }

    #[test]
    fn circular_shift_round_trips() {
        let img = Image::from_fn(4, 5, |r, c| (r * 5 + c) as f64);
        let back = img.circular_shift(2, 3).circular_shift(-2, -3);
        assert_eq!(img, back);
    }
}
