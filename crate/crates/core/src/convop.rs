//! The strided global convolutional dictionary as an explicit pair of
//! linear maps: synthesis (feature maps -> image, a strided transposed
//! convolution) and analysis (image -> feature maps, its exact adjoint).
//! Boundary handling is periodic throughout, which keeps the pair an
//! exact adjoint and makes the spectral utilities well-defined.

use crate::dict::LocalDictionary;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::{streams, StreamRng};
use crate::scalar::{num, Scalar};
use rayon::prelude::*;
use std::sync::Arc;

/// Sparse-code coefficients on a stride lattice: `num_maps` maps of
/// `lattice_h x lattice_w` coefficients, one lattice site per filter
/// placement. The needle at a site is the length-`num_maps` fiber across
/// maps.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMaps<T> {
    num_maps: usize,
    image_h: usize,
    image_w: usize,
    stride: usize,
    offset: (usize, usize),
    lattice_h: usize,
    lattice_w: usize,
    data: Vec<T>,
}

fn lattice_len(extent: usize, offset: usize, stride: usize) -> usize {
    debug_assert!(offset < stride || (offset == 0 && stride >= 1));
    (extent - offset).div_ceil(stride)
}

impl<T: Scalar> FeatureMaps<T> {
    pub fn zeros(
        num_maps: usize,
        image_dims: (usize, usize),
        stride: usize,
        offset: (usize, usize),
    ) -> Self {
        assert!(stride >= 1 && offset.0 < stride && offset.1 < stride);
        let (h, w) = image_dims;
        let lattice_h = lattice_len(h, offset.0, stride);
        let lattice_w = lattice_len(w, offset.1, stride);
        FeatureMaps {
            num_maps,
            image_h: h,
            image_w: w,
            stride,
            offset,
            lattice_h,
            lattice_w,
            data: vec![T::zero(); num_maps * lattice_h * lattice_w],
        }
    }

    #[inline]
    pub fn num_maps(&self) -> usize {
        self.num_maps
    }

    pub fn image_dims(&self) -> (usize, usize) {
        (self.image_h, self.image_w)
    }

    pub fn lattice_dims(&self) -> (usize, usize) {
        (self.lattice_h, self.lattice_w)
    }

    #[inline]
    pub fn stride(&self) -> usize {
        self.stride
    }

    #[inline]
    pub fn offset(&self) -> (usize, usize) {
        self.offset
    }

    pub fn num_sites(&self) -> usize {
        self.lattice_h * self.lattice_w
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn site_index(&self, lr: usize, lc: usize) -> usize {
        lr * self.lattice_w + lc
    }

    #[inline]
    pub fn get(&self, map: usize, lr: usize, lc: usize) -> T {
        self.data[map * self.num_sites() + self.site_index(lr, lc)]
    }

    #[inline]
    pub fn set(&mut self, map: usize, lr: usize, lc: usize, value: T) {
        let at = map * self.num_sites() + self.site_index(lr, lc);
        self.data[at] = value;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Pixel position of a lattice site.
    #[inline]
    pub fn site_position(&self, lr: usize, lc: usize) -> (usize, usize) {
        (
            self.offset.0 + lr * self.stride,
            self.offset.1 + lc * self.stride,
        )
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.num_maps == other.num_maps
            && self.image_dims() == other.image_dims()
            && self.stride == other.stride
            && self.offset == other.offset
    }

    pub fn fill(&mut self, value: T) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn dot(&self, other: &Self) -> T {
        debug_assert!(self.same_shape(other));
        dot(&self.data, &other.data)
    }

    pub fn norm(&self) -> T {
        dot(&self.data, &self.data).sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, &v| acc.max(v.abs()))
    }

    pub fn l1_norm(&self) -> T {
        self.data.iter().map(|&v| v.abs()).sum()
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|&&v| v != T::zero()).count()
    }

    pub fn scale_in_place(&mut self, s: T) {
        self.data.iter_mut().for_each(|v| *v = *v * s);
    }

    pub fn add_scaled(&mut self, alpha: T, other: &Self) {
        debug_assert!(self.same_shape(other));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + alpha * b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> FeatureMaps<U> {
        FeatureMaps {
            num_maps: self.num_maps,
            image_h: self.image_h,
            image_w: self.image_w,
            stride: self.stride,
            offset: self.offset,
            lattice_h: self.lattice_h,
            lattice_w: self.lattice_w,
            data: self
                .data
                .iter()
                .map(|v| U::from_f64_lit(v.to_f64().unwrap()))
                .collect(),
        }
    }
}

/// Four-accumulator dot product; breaks the float-add dependency chain so
/// the loop vectorizes.
#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let base = i * 4;
        acc[0] = acc[0] + a[base] * b[base];
        acc[1] = acc[1] + a[base + 1] * b[base + 1];
        acc[2] = acc[2] + a[base + 2] * b[base + 2];
        acc[3] = acc[3] + a[base + 3] * b[base + 3];
    }
    let mut tail = T::zero();
    for i in chunks * 4..a.len() {
        tail = tail + a[i] * b[i];
    }
    acc[0] + acc[1] + acc[2] + acc[3] + tail
}

#[inline]
pub(crate) fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

/// Linear operator between feature maps and images. Implementations must
/// form an exact adjoint pair.
pub trait ImageOp<T: Scalar>: Sync {
    fn image_dims(&self) -> (usize, usize);

    /// Zero coefficients of the shape this operator expects.
    fn zero_maps(&self) -> FeatureMaps<T>;

    fn synthesize_into(&self, gamma: &FeatureMaps<T>, out: &mut Image<T>);

    fn analyze_into(&self, img: &Image<T>, out: &mut FeatureMaps<T>);

    fn synthesize(&self, gamma: &FeatureMaps<T>) -> Image<T> {
        let (h, w) = self.image_dims();
        let mut out = Image::zeros(h, w);
        self.synthesize_into(gamma, &mut out);
        out
    }

    fn analyze(&self, img: &Image<T>) -> FeatureMaps<T> {
        let mut out = self.zero_maps();
        self.analyze_into(img, &mut out);
        out
    }
}

/// The strided convolutional dictionary `D` for one shift offset: filters
/// from a local dictionary placed at every lattice site
/// `(offset + stride * i) mod image dims`.
#[derive(Debug, Clone)]
pub struct StridedConvOp<T> {
    dict: Arc<LocalDictionary<T>>,
    stride: usize,
    offset: (usize, usize),
    image_h: usize,
    image_w: usize,
}

impl<T: Scalar> StridedConvOp<T> {
    pub fn new(
        dict: Arc<LocalDictionary<T>>,
        stride: usize,
        offset: (usize, usize),
        image_dims: (usize, usize),
    ) -> Result<Self> {
        let max_side = dict.patch_h().max(dict.patch_w());
        if stride == 0 || stride > max_side {
            return Err(Error::invalid(format!(
                "stride {stride} outside 1..={max_side}"
            )));
        }
        if offset.0 >= stride || offset.1 >= stride {
            return Err(Error::invalid(format!(
                "offset {offset:?} must lie in [0, {stride})^2"
            )));
        }
        let (h, w) = image_dims;
        if h < dict.patch_h() || w < dict.patch_w() {
            return Err(Error::invalid(format!(
                "image {h}x{w} smaller than filter support {}x{}",
                dict.patch_h(),
                dict.patch_w()
            )));
        }
        Ok(StridedConvOp {
            dict,
            stride,
            offset,
            image_h: h,
            image_w: w,
        })
    }

    pub fn dict(&self) -> &LocalDictionary<T> {
        &self.dict
    }

    pub fn dict_arc(&self) -> Arc<LocalDictionary<T>> {
        Arc::clone(&self.dict)
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn offset(&self) -> (usize, usize) {
        self.offset
    }

    pub fn lattice_dims(&self) -> (usize, usize) {
        (
            lattice_len(self.image_h, self.offset.0, self.stride),
            lattice_len(self.image_w, self.offset.1, self.stride),
        )
    }

    fn check_gamma(&self, gamma: &FeatureMaps<T>) -> Result<()> {
        let ok = gamma.num_maps() == self.dict.num_atoms()
            && gamma.image_dims() == (self.image_h, self.image_w)
            && gamma.stride() == self.stride
            && gamma.offset() == self.offset;
        if ok {
            Ok(())
        } else {
            Err(Error::shape(format!(
                "feature maps {:?}/{}m/q{}/k{:?} incompatible with operator {:?}/{}m/q{}/k{:?}",
                gamma.image_dims(),
                gamma.num_maps(),
                gamma.stride(),
                gamma.offset(),
                (self.image_h, self.image_w),
                self.dict.num_atoms(),
                self.stride,
                self.offset,
            )))
        }
    }

    fn check_image(&self, img: &Image<T>) -> Result<()> {
        if img.dims() == (self.image_h, self.image_w) {
            Ok(())
        } else {
            Err(Error::shape(format!(
                "image {:?} incompatible with operator {:?}",
                img.dims(),
                (self.image_h, self.image_w)
            )))
        }
    }

    /// Checked synthesis `D * gamma`.
    pub fn try_synthesize(&self, gamma: &FeatureMaps<T>) -> Result<Image<T>> {
        self.check_gamma(gamma)?;
        Ok(ImageOp::synthesize(self, gamma))
    }

    /// Checked analysis `D^T * img`.
    pub fn try_analyze(&self, img: &Image<T>) -> Result<FeatureMaps<T>> {
        self.check_image(img)?;
        Ok(ImageOp::analyze(self, img))
    }

    /// Per-pixel count of filter placements overlapping that pixel.
    /// Equals synthesis applied to all-ones maps with an all-ones local
    /// dictionary; used to renormalize stride-dependent overlap.
    pub fn coverage_map(&self) -> Image<T> {
        let (lh, lw) = self.lattice_dims();
        let (ph, pw) = (self.dict.patch_h(), self.dict.patch_w());
        let mut out = Image::zeros(self.image_h, self.image_w);
        for lr in 0..lh {
            let row0 = self.offset.0 + lr * self.stride;
            for lc in 0..lw {
                let col0 = self.offset.1 + lc * self.stride;
                for r in 0..ph {
                    let tr = (row0 + r) % self.image_h;
                    for c in 0..pw {
                        let tc = (col0 + c) % self.image_w;
                        let v = out.get(tr, tc);
                        out.set(tr, tc, v + T::one());
                    }
                }
            }
        }
        out
    }

    /// Synthesis restricted to an explicit list of nonzero coefficients
    /// `(map, site_lr, site_lc, value)`; used by the support-restricted
    /// solvers where most coefficients are zero.
    pub fn synthesize_sparse(
        &self,
        entries: &[(usize, usize, usize, T)],
        out: &mut Image<T>,
    ) {
        out.fill(T::zero());
        let (ph, pw) = (self.dict.patch_h(), self.dict.patch_w());
        for &(map, lr, lc, value) in entries {
            if value == T::zero() {
                continue;
            }
            let atom = self.dict.atom(map);
            let row0 = self.offset.0 + lr * self.stride;
            let col0 = self.offset.1 + lc * self.stride;
            for r in 0..ph {
                let tr = (row0 + r) % self.image_h;
                let row_base = tr * self.image_w;
                for c in 0..pw {
                    let tc = (col0 + c) % self.image_w;
                    let at = row_base + tc;
                    out.data_mut()[at] = out.data_mut()[at] + value * atom[r * pw + c];
                }
            }
        }
    }

    /// Inner product of one placed atom with an image: the `(map, site)`
    /// entry of the analysis output, computed in isolation.
    pub fn analyze_entry(&self, img: &Image<T>, map: usize, lr: usize, lc: usize) -> T {
        let (ph, pw) = (self.dict.patch_h(), self.dict.patch_w());
        let atom = self.dict.atom(map);
        let row0 = self.offset.0 + lr * self.stride;
        let col0 = self.offset.1 + lc * self.stride;
        let mut acc = T::zero();
        for r in 0..ph {
            let tr = (row0 + r) % self.image_h;
            let row = &img.data()[tr * self.image_w..(tr + 1) * self.image_w];
            if col0 + pw <= self.image_w {
                acc = acc + dot(&atom[r * pw..(r + 1) * pw], &row[col0..col0 + pw]);
            } else {
                for c in 0..pw {
                    let tc = (col0 + c) % self.image_w;
                    acc = acc + atom[r * pw + c] * row[tc];
                }
            }
        }
        acc
    }
}

impl<T: Scalar> ImageOp<T> for StridedConvOp<T> {
    fn image_dims(&self) -> (usize, usize) {
        (self.image_h, self.image_w)
    }

    fn zero_maps(&self) -> FeatureMaps<T> {
        FeatureMaps::zeros(
            self.dict.num_atoms(),
            (self.image_h, self.image_w),
            self.stride,
            self.offset,
        )
    }

    fn synthesize_into(&self, gamma: &FeatureMaps<T>, out: &mut Image<T>) {
        debug_assert!(self.check_gamma(gamma).is_ok());
        let (lh, _) = self.lattice_dims();
        if self.flops_per_apply() >= PARALLEL_FLOP_THRESHOLD && lh >= 2 {
            // Fixed four-way split with an ordered reduction keeps the
            // summation order independent of thread scheduling.
            let chunks = 4.min(lh);
            let bounds: Vec<(usize, usize)> = (0..chunks)
                .map(|i| (i * lh / chunks, (i + 1) * lh / chunks))
                .collect();
            let partials: Vec<Image<T>> = bounds
                .par_iter()
                .map(|&(lo, hi)| {
                    let mut buf = Image::zeros(self.image_h, self.image_w);
                    self.synthesize_rows(gamma, lo, hi, &mut buf);
                    buf
                })
                .collect();
            out.fill(T::zero());
            for p in &partials {
                out.add_in_place(p);
            }
        } else {
            out.fill(T::zero());
            self.synthesize_rows(gamma, 0, lh, out);
        }
    }

    fn analyze_into(&self, img: &Image<T>, out: &mut FeatureMaps<T>) {
        debug_assert!(self.check_image(img).is_ok());
        debug_assert!(self.check_gamma(out).is_ok());
        let (lh, lw) = self.lattice_dims();
        let m = self.dict.num_atoms();
        let sites = lh * lw;
        if self.flops_per_apply() >= PARALLEL_FLOP_THRESHOLD && m >= 8 {
            // Disjoint map ranges: every thread owns a contiguous block
            // of the output, so the result is schedule-independent.
            let chunk_maps = m.div_ceil(8);
            out.data_mut()
                .par_chunks_mut(chunk_maps * sites)
                .enumerate()
                .for_each(|(chunk, block)| {
                    let map0 = chunk * chunk_maps;
                    let count = block.len() / sites;
                    self.analyze_maps(img, map0, count, block);
                });
        } else {
            self.analyze_maps(img, 0, m, out.data_mut());
        }
    }
}

/// Work size above which one operator application is split across
/// threads; below it, parallelism lives at the caller level.
const PARALLEL_FLOP_THRESHOLD: usize = 1 << 22;

impl<T: Scalar> StridedConvOp<T> {
    fn flops_per_apply(&self) -> usize {
        let (lh, lw) = self.lattice_dims();
        lh * lw * self.dict.num_atoms() * self.dict.atom_len()
    }

    fn synthesize_rows(&self, gamma: &FeatureMaps<T>, lr_lo: usize, lr_hi: usize, out: &mut Image<T>) {
        let (_, lw) = self.lattice_dims();
        let (ph, pw) = (self.dict.patch_h(), self.dict.patch_w());
        let n = ph * pw;
        let m = self.dict.num_atoms();
        let sites = gamma.num_sites();
        let mut slice_buf = vec![T::zero(); n];
        for lr in lr_lo..lr_hi {
            let row0 = self.offset.0 + lr * self.stride;
            for lc in 0..lw {
                let site = lr * lw + lc;
                // Slice = local dictionary times needle, skipping zeros.
                slice_buf.iter_mut().for_each(|v| *v = T::zero());
                let mut any = false;
                for map in 0..m {
                    let g = gamma.data()[map * sites + site];
                    if g != T::zero() {
                        any = true;
                        axpy(g, self.dict.atom(map), &mut slice_buf);
                    }
                }
                if !any {
                    continue;
                }
                let col0 = self.offset.1 + lc * self.stride;
                for r in 0..ph {
                    let tr = (row0 + r) % self.image_h;
                    let row =
                        &mut out.data_mut()[tr * self.image_w..(tr + 1) * self.image_w];
                    if col0 + pw <= self.image_w {
                        axpy(T::one(), &slice_buf[r * pw..(r + 1) * pw], &mut row[col0..col0 + pw]);
                    } else {
                        for c in 0..pw {
                            let tc = (col0 + c) % self.image_w;
                            row[tc] = row[tc] + slice_buf[r * pw + c];
                        }
                    }
                }
            }
        }
    }

    /// Fill `count` maps starting at `map0`; `block` holds exactly those
    /// maps' coefficients.
    fn analyze_maps(&self, img: &Image<T>, map0: usize, count: usize, block: &mut [T]) {
        let (lh, lw) = self.lattice_dims();
        let (ph, pw) = (self.dict.patch_h(), self.dict.patch_w());
        let n = ph * pw;
        let sites = lh * lw;
        debug_assert_eq!(block.len(), count * sites);
        let mut patch_buf = vec![T::zero(); n];
        for lr in 0..lh {
            let row0 = self.offset.0 + lr * self.stride;
            for lc in 0..lw {
                let col0 = self.offset.1 + lc * self.stride;
                // Gather the window once, then one dot per atom.
                for r in 0..ph {
                    let tr = (row0 + r) % self.image_h;
                    let row = &img.data()[tr * self.image_w..(tr + 1) * self.image_w];
                    if col0 + pw <= self.image_w {
                        patch_buf[r * pw..(r + 1) * pw].copy_from_slice(&row[col0..col0 + pw]);
                    } else {
                        for c in 0..pw {
                            patch_buf[r * pw + c] = row[(col0 + c) % self.image_w];
                        }
                    }
                }
                let site = lr * lw + lc;
                for k in 0..count {
                    block[k * sites + site] = dot(self.dict.atom(map0 + k), &patch_buf);
                }
            }
        }
    }
}

/// An operator with per-pixel coverage normalization folded in: synthesis
/// divides the raw output by the coverage map, analysis divides the input
/// first (so the pair stays an exact adjoint). This realizes the
/// stride-dependent filter renormalization on the estimate side.
#[derive(Debug, Clone)]
pub struct CoverageNormalizedOp<T> {
    inner: StridedConvOp<T>,
    inv_coverage: Image<T>,
}

impl<T: Scalar> CoverageNormalizedOp<T> {
    pub fn new(inner: StridedConvOp<T>) -> Result<Self> {
        Self::with_power(inner, T::one())
    }

    /// Normalize by `coverage^power`; power 1 equalizes the summed
    /// per-pixel filter weight, power 1/2 equalizes energy.
    pub fn with_power(inner: StridedConvOp<T>, power: T) -> Result<Self> {
        let cov = inner.coverage_map();
        if cov.data().iter().any(|&v| v <= T::zero()) {
            return Err(Error::invalid(
                "coverage map has uncovered pixels; stride exceeds filter support",
            ));
        }
        let inv_coverage = cov.map(|v| T::one() / v.powf(power));
        Ok(CoverageNormalizedOp {
            inner,
            inv_coverage,
        })
    }

    pub fn inner(&self) -> &StridedConvOp<T> {
        &self.inner
    }

    pub fn inv_coverage(&self) -> &Image<T> {
        &self.inv_coverage
    }
}

impl<T: Scalar> ImageOp<T> for CoverageNormalizedOp<T> {
    fn image_dims(&self) -> (usize, usize) {
        self.inner.image_dims()
    }

    fn zero_maps(&self) -> FeatureMaps<T> {
        self.inner.zero_maps()
    }

    fn synthesize_into(&self, gamma: &FeatureMaps<T>, out: &mut Image<T>) {
        self.inner.synthesize_into(gamma, out);
        out.mul_in_place(&self.inv_coverage);
    }

    fn analyze_into(&self, img: &Image<T>, out: &mut FeatureMaps<T>) {
        let mut scaled = img.clone();
        scaled.mul_in_place(&self.inv_coverage);
        self.inner.analyze_into(&scaled, out);
    }
}

/// Largest eigenvalue of `D^T D` by power iteration on analyze∘synthesize,
/// from a fixed seeded Gaussian start. Stops when the Rayleigh quotient
/// changes by less than `tol` relatively, or after `iters` applications.
/// The returned value is a Rayleigh quotient, hence a lower bound.
pub fn spectral_norm_sq<T: Scalar, Op: ImageOp<T>>(op: &Op, iters: usize, tol: T) -> T {
    assert!(iters >= 1);
    let mut v = op.zero_maps();
    let mut rng = StreamRng::new(0x5CA1_AB1E, streams::POWER_START);
    for x in v.data_mut() {
        *x = num::<T>(rng.normal());
    }
    let norm = v.norm();
    if norm == T::zero() {
        return T::zero();
    }
    v.scale_in_place(T::one() / norm);

    let (h, w) = op.image_dims();
    let mut img = Image::zeros(h, w);
    let mut next = op.zero_maps();
    let mut lam_prev = T::zero();
    for _ in 0..iters {
        op.synthesize_into(&v, &mut img);
        op.analyze_into(&img, &mut next);
        let lam = v.dot(&next); // Rayleigh quotient, ||v|| = 1
        let norm = next.norm();
        if norm == T::zero() {
            return T::zero();
        }
        std::mem::swap(&mut v, &mut next);
        v.scale_in_place(T::one() / norm);
        if (lam - lam_prev).abs() <= tol * lam.abs() {
            return lam;
        }
        lam_prev = lam;
    }
    lam_prev
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dc_dict(n_side: usize) -> Arc<LocalDictionary<f64>> {
        let n = n_side * n_side;
        let v = 1.0 / (n as f64).sqrt();
        Arc::new(LocalDictionary::new(n_side, 1, vec![v; n]).unwrap())
    }

    #[test]
    fn synthesize_zero_is_zero() {
        let op = StridedConvOp::new(dc_dict(3), 1, (0, 0), (6, 6)).unwrap();
        let img = op.try_synthesize(&op.zero_maps()).unwrap();
        assert!(img.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn impulse_response_places_one_atom() {
        let d = Arc::new(LocalDictionary::<f64>::overcomplete_dct(3, 3).unwrap());
        let op = StridedConvOp::new(Arc::clone(&d), 3, (0, 0), (6, 6)).unwrap();
        let mut gamma = op.zero_maps();
        let j = 4;
        gamma.set(j, 1, 1, 1.0);
        let img = op.try_synthesize(&gamma).unwrap();
        for r in 0..6 {
            for c in 0..6 {
                let expect = if (3..6).contains(&r) && (3..6).contains(&c) {
                    d.atom(j)[(r - 3) * 3 + (c - 3)]
                } else {
                    0.0
                };
                assert!((img.get(r, c) - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn overlapping_dc_slices_double_up() {
        // 6x6 image, 4x4 DC atoms at stride 2: adjacent slices overlap in
        // a 2-column band where intensities add.
        let op = StridedConvOp::new(dc_dict(4), 2, (0, 0), (6, 6)).unwrap();
        let mut gamma = op.zero_maps();
        gamma.set(0, 0, 0, 1.0);
        gamma.set(0, 0, 1, 1.0);
        let img = op.try_synthesize(&gamma).unwrap();
        let v = 0.25; // DC entry of a 4x4 atom
        for r in 0..4 {
            for c in 0..6 {
                let covered = [c < 4, (2..6).contains(&c)];
                let expect = v * covered.iter().filter(|&&b| b).count() as f64;
                assert!(
                    (img.get(r, c) - expect).abs() < 1e-15,
                    "({r},{c}): {} vs {expect}",
                    img.get(r, c)
                );
            }
        }
    }

    #[test]
    fn analyze_constant_image_dc_atom() {
        let n_side = 4;
        let op = StridedConvOp::new(dc_dict(n_side), 4, (0, 0), (8, 8)).unwrap();
        let img = Image::from_fn(8, 8, |_, _| 3.0);
        let maps = op.try_analyze(&img).unwrap();
        let expect = (n_side * n_side) as f64 * 3.0 / ((n_side * n_side) as f64).sqrt();
        for lr in 0..2 {
            for lc in 0..2 {
                assert!((maps.get(0, lr, lc) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn analyze_zero_image_is_zero() {
        let op = StridedConvOp::new(dc_dict(3), 2, (1, 0), (9, 9)).unwrap();
        let maps = op.try_analyze(&Image::zeros(9, 9)).unwrap();
        assert!(maps.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adjoint_identity_random() {
        let mut rng = StreamRng::new(17, streams::GENERIC);
        let d = Arc::new(LocalDictionary::<f64>::overcomplete_dct(3, 4).unwrap());
        for &(q, h, w) in &[(1usize, 6usize, 6usize), (2, 6, 8), (3, 9, 6)] {
            for kr in 0..q.min(2) {
                let op =
                    StridedConvOp::new(Arc::clone(&d), q, (kr, q - 1 - kr.min(q - 1)), (h, w))
                        .unwrap();
                let mut gamma = op.zero_maps();
                for v in gamma.data_mut() {
                    *v = rng.normal();
                }
                let x = Image::from_fn(h, w, |_, _| rng.normal());
                let lhs = op.try_synthesize(&gamma).unwrap().dot(&x);
                let rhs = gamma.dot(&op.try_analyze(&x).unwrap());
                assert!(
                    (lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0),
                    "q={q}: {lhs} vs {rhs}"
                );
            }
        }
    }

    #[test]
    fn coverage_stride_one_is_n() {
        let op = StridedConvOp::new(dc_dict(3), 1, (0, 0), (7, 7)).unwrap();
        let cov = op.coverage_map();
        assert!(cov.data().iter().all(|&v| v == 9.0));
    }

    #[test]
    fn coverage_tiling_is_one() {
        let op = StridedConvOp::new(dc_dict(4), 4, (0, 0), (8, 8)).unwrap();
        let cov = op.coverage_map();
        assert!(cov.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn coverage_half_stride() {
        let op = StridedConvOp::new(dc_dict(4), 2, (0, 0), (8, 8)).unwrap();
        let cov = op.coverage_map();
        assert!(cov.data().iter().all(|&v| v == 4.0));
    }

    #[test]
    fn offsets_partition_all_positions() {
        let q = 3usize;
        let (h, w) = (9usize, 9usize);
        let mut hit = vec![0usize; h * w];
        for kr in 0..q {
            for kc in 0..q {
                let op = StridedConvOp::new(dc_dict(3), q, (kr, kc), (h, w)).unwrap();
                let (lh, lw) = op.lattice_dims();
                for lr in 0..lh {
                    for lc in 0..lw {
                        hit[(kr + lr * q) * w + (kc + lc * q)] += 1;
                    }
                }
            }
        }
        assert!(hit.iter().all(|&c| c == 1));
    }

    #[test]
    fn spectral_tiling_orthonormal_is_one() {
        let d = Arc::new(LocalDictionary::<f64>::overcomplete_dct(2, 2).unwrap());
        let op = StridedConvOp::new(d, 2, (0, 0), (8, 8)).unwrap();
        let lam = spectral_norm_sq(&op, 200, 1e-12);
        assert!((lam - 1.0).abs() < 1e-6, "lam = {lam}");
    }

    #[test]
    fn spectral_1d_box_filter_is_two() {
        // [1,1]/sqrt(2) at stride 1 on a length-8 signal: squared symbol
        // peaks at 2 (checked against a dense eigensolve in the
        // integration suite).
        let s = 1.0 / 2.0f64.sqrt();
        let d = Arc::new(LocalDictionary::new_1d(2, 1, vec![s, s]).unwrap());
        let op = StridedConvOp::new(d, 1, (0, 0), (1, 8)).unwrap();
        let lam = spectral_norm_sq(&op, 500, 1e-13);
        assert!((lam - 2.0).abs() < 1e-6, "lam = {lam}");
    }

    #[test]
    fn spectral_scales_quadratically() {
        let d = LocalDictionary::<f64>::overcomplete_dct(3, 4).unwrap();
        let scaled = Arc::new(d.scaled(3.0));
        let base = Arc::new(d);
        let op1 = StridedConvOp::new(base, 2, (0, 0), (6, 6)).unwrap();
        let op2 = StridedConvOp::new(scaled, 2, (0, 0), (6, 6)).unwrap();
        let l1 = spectral_norm_sq(&op1, 300, 1e-12);
        let l2 = spectral_norm_sq(&op2, 300, 1e-12);
        assert!((l2 - 9.0 * l1).abs() < 1e-6 * l2.abs());
    }

    #[test]
    fn spectral_rayleigh_lower_bound() {
        let d = Arc::new(LocalDictionary::<f64>::overcomplete_dct(3, 3).unwrap());
        let op = StridedConvOp::new(Arc::clone(&d), 2, (0, 0), (6, 6)).unwrap();
        let lam = spectral_norm_sq(&op, 400, 1e-13);
        let mut rng = StreamRng::new(5, streams::GENERIC);
        for _ in 0..20 {
            let mut gamma = op.zero_maps();
            for v in gamma.data_mut() {
                *v = rng.normal();
            }
            let ratio = op.try_synthesize(&gamma).unwrap().norm().powi(2) / gamma.norm().powi(2);
            assert!(lam >= ratio - 1e-7 * ratio, "rayleigh {ratio} > lam {lam}");
        }
    }

    #[test]
    fn coverage_normalized_is_adjoint_pair() {
        let d = Arc::new(LocalDictionary::<f64>::overcomplete_dct(3, 3).unwrap());
        let op = StridedConvOp::new(d, 2, (1, 1), (8, 8)).unwrap();
        let wrapped = CoverageNormalizedOp::new(op).unwrap();
        let mut rng = StreamRng::new(23, streams::GENERIC);
        let mut gamma = wrapped.zero_maps();
        for v in gamma.data_mut() {
            *v = rng.normal();
        }
        let x = Image::from_fn(8, 8, |_, _| rng.normal());
        let lhs = wrapped.synthesize(&gamma).dot(&x);
        let rhs = gamma.dot(&wrapped.analyze(&x));
        assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let op = StridedConvOp::new(dc_dict(3), 1, (0, 0), (6, 6)).unwrap();
        let other = FeatureMaps::<f64>::zeros(1, (6, 6), 2, (0, 0));
        assert!(op.try_synthesize(&other).is_err());
        assert!(op.try_analyze(&Image::zeros(5, 6)).is_err());
    }
}
