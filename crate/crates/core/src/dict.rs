//! Local dictionaries: the filter bank whose shifted copies form the
//! global convolutional dictionary, plus the coherence and stripe
//! sparsity diagnostics used to reason about how hard a pursuit is.

use crate::convop::FeatureMaps;
use crate::error::{Error, Result};
use crate::scalar::{num, Scalar};

/// A bank of `num_atoms` vectorized filters with support
/// `patch_h x patch_w`, stored column-major (one contiguous column per
/// atom, row-major within the patch).
///
/// Square patches are the common case; the 1D constructor exists for
/// diagnostics and tests that work with signals of height 1.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalDictionary<T> {
    patch_h: usize,
    patch_w: usize,
    num_atoms: usize,
    atoms: Vec<T>,
}

/// Options for the overcomplete DCT construction.
#[derive(Debug, Clone, Copy)]
pub struct DctOptions {
    /// Remove the mean from every non-DC column before normalizing, so the
    /// DC/texture split stays observable in the coefficients.
    pub de_mean: bool,
}

impl Default for DctOptions {
    fn default() -> Self {
        DctOptions { de_mean: true }
    }
}

impl<T: Scalar> LocalDictionary<T> {
    /// Square dictionary from a column-major atom matrix.
    pub fn new(patch_side: usize, num_atoms: usize, atoms: Vec<T>) -> Result<Self> {
        Self::with_shape(patch_side, patch_side, num_atoms, atoms)
    }

    /// 1D filter bank (patch height 1).
    pub fn new_1d(filter_len: usize, num_atoms: usize, atoms: Vec<T>) -> Result<Self> {
        Self::with_shape(1, filter_len, num_atoms, atoms)
    }

    pub fn with_shape(
        patch_h: usize,
        patch_w: usize,
        num_atoms: usize,
        atoms: Vec<T>,
    ) -> Result<Self> {
        if patch_h == 0 || patch_w == 0 || num_atoms == 0 {
            return Err(Error::invalid("dictionary dimensions must be >= 1"));
        }
        if atoms.len() != patch_h * patch_w * num_atoms {
            return Err(Error::shape(format!(
                "atom matrix length {} != {}x{}x{}",
                atoms.len(),
                patch_h,
                patch_w,
                num_atoms
            )));
        }
        Ok(LocalDictionary {
            patch_h,
            patch_w,
            num_atoms,
            atoms,
        })
    }

    /// The separable overcomplete 2D-DCT dictionary: the Kronecker product
    /// of a `patch_side x atoms_per_dim` 1D DCT frame with itself, giving
    /// `atoms_per_dim^2` unit-norm atoms. The first atom is the constant
    /// (DC) atom; with `de_mean` every other atom has zero mean.
    pub fn overcomplete_dct(patch_side: usize, atoms_per_dim: usize) -> Result<Self> {
        Self::overcomplete_dct_with(patch_side, atoms_per_dim, DctOptions::default())
    }

    pub fn overcomplete_dct_with(
        patch_side: usize,
        atoms_per_dim: usize,
        opts: DctOptions,
    ) -> Result<Self> {
        if atoms_per_dim < patch_side {
            return Err(Error::invalid(format!(
                "atoms_per_dim {atoms_per_dim} < patch_side {patch_side}"
            )));
        }
        let p = patch_side;
        let k_total = atoms_per_dim;
        // 1D frame, one column per frequency.
        let mut cols = vec![vec![T::zero(); p]; k_total];
        for (k, col) in cols.iter_mut().enumerate() {
            for (x, v) in col.iter_mut().enumerate() {
                let arg = std::f64::consts::PI * (2.0 * x as f64 + 1.0) * k as f64
                    / (2.0 * k_total as f64);
                *v = num::<T>(arg.cos());
            }
            if k > 0 && opts.de_mean {
                let mean = col.iter().copied().sum::<T>() / num::<T>(p as f64);
                col.iter_mut().for_each(|v| *v = *v - mean);
            }
            let norm = col.iter().map(|&v| v * v).sum::<T>().sqrt();
            if norm > T::zero() {
                col.iter_mut().for_each(|v| *v = *v / norm);
            }
        }
        let n = p * p;
        let m = k_total * k_total;
        let mut atoms = vec![T::zero(); n * m];
        for k_row in 0..k_total {
            for k_col in 0..k_total {
                let j = k_row * k_total + k_col;
                for x in 0..p {
                    for y in 0..p {
                        atoms[j * n + x * p + y] = cols[k_row][x] * cols[k_col][y];
                    }
                }
            }
        }
        LocalDictionary::new(p, m, atoms)
    }

    #[inline]
    pub fn patch_h(&self) -> usize {
        self.patch_h
    }

    #[inline]
    pub fn patch_w(&self) -> usize {
        self.patch_w
    }

    /// Side length for square dictionaries.
    pub fn patch_side(&self) -> usize {
        debug_assert_eq!(self.patch_h, self.patch_w, "dictionary is not square");
        self.patch_h
    }

    /// Number of pixels per atom.
    #[inline]
    pub fn atom_len(&self) -> usize {
        self.patch_h * self.patch_w
    }

    #[inline]
    pub fn num_atoms(&self) -> usize {
        self.num_atoms
    }

    #[inline]
    pub fn atom(&self, j: usize) -> &[T] {
        let n = self.atom_len();
        &self.atoms[j * n..(j + 1) * n]
    }

    pub fn atoms(&self) -> &[T] {
        &self.atoms
    }

    pub fn atoms_mut(&mut self) -> &mut [T] {
        &mut self.atoms
    }

    pub fn atom_norm(&self, j: usize) -> T {
        self.atom(j).iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    /// True when every column has unit norm within `tol`.
    pub fn is_normalized(&self, tol: T) -> bool {
        (0..self.num_atoms).all(|j| (self.atom_norm(j) - T::one()).abs() <= tol)
    }

    /// Scale every atom by `s`.
    pub fn scaled(&self, s: T) -> Self {
        let mut out = self.clone();
        out.atoms.iter_mut().for_each(|v| *v = *v * s);
        out
    }

    pub fn cast<U: Scalar>(&self) -> LocalDictionary<U> {
        LocalDictionary {
            patch_h: self.patch_h,
            patch_w: self.patch_w,
            num_atoms: self.num_atoms,
            atoms: self
                .atoms
                .iter()
                .map(|v| U::from_f64_lit(v.to_f64().unwrap()))
                .collect(),
        }
    }
}

/// Mutual coherence of the strided global dictionary built from `dict`:
/// the maximum absolute normalized inner product between two distinct
/// atom placements whose offsets differ by multiples of `q`. With
/// `shifts_2d` the offsets range over the full 2D lattice; otherwise only
/// shifts along the second (column) axis are considered, which is the 1D
/// diagnostic.
pub fn mutual_coherence<T: Scalar>(dict: &LocalDictionary<T>, q: usize, shifts_2d: bool) -> T {
    assert!(q >= 1, "stride must be >= 1");
    let ph = dict.patch_h as isize;
    let pw = dict.patch_w as isize;
    let norms: Vec<T> = (0..dict.num_atoms()).map(|j| dict.atom_norm(j)).collect();

    let row_shifts: Vec<isize> = if shifts_2d {
        lattice_offsets(ph, q as isize)
    } else {
        vec![0]
    };
    let col_shifts = lattice_offsets(pw, q as isize);

    let mut best = T::zero();
    for &dr in &row_shifts {
        for &dc in &col_shifts {
            let zero_offset = dr == 0 && dc == 0;
            for i in 0..dict.num_atoms() {
                for j in 0..dict.num_atoms() {
                    if zero_offset && i >= j {
                        continue;
                    }
                    let corr = shifted_inner(dict, i, j, dr, dc).abs();
                    let denom = norms[i] * norms[j];
                    if denom > T::zero() {
                        let val = corr / denom;
                        if val > best {
                            best = val;
                        }
                    }
                }
            }
        }
    }
    best
}

fn lattice_offsets(extent: isize, q: isize) -> Vec<isize> {
    let mut out = Vec::new();
    let mut d = -((extent - 1) / q) * q;
    while d < extent {
        out.push(d);
        d += q;
    }
    out
}

/// Inner product of atom `i` with atom `j` shifted by `(dr, dc)`.
fn shifted_inner<T: Scalar>(
    dict: &LocalDictionary<T>,
    i: usize,
    j: usize,
    dr: isize,
    dc: isize,
) -> T {
    let ph = dict.patch_h as isize;
    let pw = dict.patch_w as isize;
    let a = dict.atom(i);
    let b = dict.atom(j);
    let mut acc = T::zero();
    for r in dr.max(0)..(ph + dr).min(ph) {
        for c in dc.max(0)..(pw + dc).min(pw) {
            let av = a[(r * pw + c) as usize];
            let bv = b[((r - dr) * pw + (c - dc)) as usize];
            acc = acc + av * bv;
        }
    }
    acc
}

/// Maximum, over all patch positions, of the number of nonzero
/// coefficients among the needles whose filter supports overlap that
/// patch (the max stripe cardinality). Filter support is
/// `patch_h x patch_w`; boundary is periodic.
pub fn stripe_sparsity<T: Scalar>(gamma: &FeatureMaps<T>, patch_h: usize, patch_w: usize) -> usize {
    let (h, w) = gamma.image_dims();
    let (lh, lw) = gamma.lattice_dims();
    let q = gamma.stride() as isize;
    let (kr, kc) = gamma.offset();

    // Nonzero count per lattice site.
    let mut site_nnz = vec![0usize; lh * lw];
    for map in 0..gamma.num_maps() {
        for lr in 0..lh {
            for lc in 0..lw {
                if gamma.get(map, lr, lc) != T::zero() {
                    site_nnz[lr * lw + lc] += 1;
                }
            }
        }
    }

    let mut best = 0usize;
    let mut seen: Vec<usize> = Vec::new();
    for r in 0..h as isize {
        for c in 0..w as isize {
            seen.clear();
            let mut count = 0usize;
            for dr in -(patch_h as isize - 1)..=(patch_h as isize - 1) {
                for dc in -(patch_w as isize - 1)..=(patch_w as isize - 1) {
                    let tr = (r + dr).rem_euclid(h as isize);
                    let tc = (c + dc).rem_euclid(w as isize);
                    // Site exists when the position is on the stride lattice.
                    if (tr - kr as isize).rem_euclid(q) != 0
                        || (tc - kc as isize).rem_euclid(q) != 0
                    {
                        continue;
                    }
                    let lr = ((tr - kr as isize) / q) as usize;
                    let lc = ((tc - kc as isize) / q) as usize;
                    if lr >= lh || lc >= lw {
                        continue;
                    }
                    let idx = lr * lw + lc;
                    if seen.contains(&idx) {
                        continue;
                    }
                    seen.push(idx);
                    count += site_nnz[idx];
                }
            }
            best = best.max(count);
        }
    }
    best
}
