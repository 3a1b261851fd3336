//! Unrolled iterative-thresholding denoiser: a fixed number of
//! soft-thresholding layers with learned analysis/synthesis/decoder
//! filter banks and per-map thresholds, evaluated on every stride offset
//! and averaged. Gradients are hand-derived for this fixed graph, and a
//! small ADAM trainer drives desk-scale experiments.
//!
//! One layer computes `g <- S_tau(g + s * A(y - B g))` where `A` is the
//! analysis convolution (image to maps), `B` the transposed convolution
//! (maps to image) and `s` a learnable step scale; the estimate is
//! `C g_L` through the decoder bank, averaged over all stride offsets.

use crate::convop::{ImageOp, StridedConvOp};
use crate::dict::LocalDictionary;
use crate::error::{Error, Result};
use crate::image::{extract_patch_into, Boundary, Image, PatchIndex};
use crate::pursuit::soft_threshold;
use crate::rng::{streams, StreamRng};
use crate::scalar::{num, Scalar};
use std::fmt::Write as _;
use std::sync::Arc;

/// Learned parameters. The three banks share filter count and support;
/// thresholds are per map and tied across layers, so the parameter count
/// `3 m n^2 + m` does not grow with the unroll depth.
#[derive(Debug, Clone)]
pub struct ListaParams<T> {
    analysis: LocalDictionary<T>,
    synthesis: LocalDictionary<T>,
    decoder: LocalDictionary<T>,
    thresholds: Vec<T>,
    step_scale: T,
    stride: usize,
    layers: usize,
}

/// Gradient (or moment) record with the same layout as the parameters.
#[derive(Debug, Clone)]
pub struct ListaGrads<T> {
    pub analysis: Vec<T>,
    pub synthesis: Vec<T>,
    pub decoder: Vec<T>,
    pub thresholds: Vec<T>,
    pub step_scale: T,
}

impl<T: Scalar> ListaGrads<T> {
    fn zeros_like(params: &ListaParams<T>) -> Self {
        let bank = params.analysis.atoms().len();
        ListaGrads {
            analysis: vec![T::zero(); bank],
            synthesis: vec![T::zero(); bank],
            decoder: vec![T::zero(); bank],
            thresholds: vec![T::zero(); params.thresholds.len()],
            step_scale: T::zero(),
        }
    }

    pub fn add_scaled(&mut self, alpha: T, other: &Self) {
        for (a, &b) in self.analysis.iter_mut().zip(&other.analysis) {
            *a = *a + alpha * b;
        }
        for (a, &b) in self.synthesis.iter_mut().zip(&other.synthesis) {
            *a = *a + alpha * b;
        }
        for (a, &b) in self.decoder.iter_mut().zip(&other.decoder) {
            *a = *a + alpha * b;
        }
        for (a, &b) in self.thresholds.iter_mut().zip(&other.thresholds) {
            *a = *a + alpha * b;
        }
        self.step_scale = self.step_scale + alpha * other.step_scale;
    }

    pub fn scale(&mut self, s: T) {
        self.analysis.iter_mut().for_each(|v| *v = *v * s);
        self.synthesis.iter_mut().for_each(|v| *v = *v * s);
        self.decoder.iter_mut().for_each(|v| *v = *v * s);
        self.thresholds.iter_mut().for_each(|v| *v = *v * s);
        self.step_scale = self.step_scale * s;
    }
}

/// Forward pass output: the averaged estimate plus the final coefficient
/// maps of every stride offset (row-major offset order).
#[derive(Debug, Clone)]
pub struct ListaForward<T> {
    pub estimate: Image<T>,
    pub shift_gammas: Vec<crate::convop::FeatureMaps<T>>,
}

impl<T: Scalar> ListaParams<T> {
    /// Assemble from explicit parts (checkpoint loading, tests).
    pub fn from_parts(
        analysis: LocalDictionary<T>,
        synthesis: LocalDictionary<T>,
        decoder: LocalDictionary<T>,
        thresholds: Vec<T>,
        step_scale: T,
        stride: usize,
        layers: usize,
    ) -> Result<Self> {
        let same = analysis.patch_h() == synthesis.patch_h()
            && analysis.patch_h() == decoder.patch_h()
            && analysis.patch_w() == synthesis.patch_w()
            && analysis.patch_w() == decoder.patch_w()
            && analysis.num_atoms() == synthesis.num_atoms()
            && analysis.num_atoms() == decoder.num_atoms();
        if !same {
            return Err(Error::shape("filter banks must share count and support"));
        }
        if thresholds.len() != analysis.num_atoms() {
            return Err(Error::shape("one threshold per map required"));
        }
        if thresholds.iter().any(|&t| t < T::zero()) {
            return Err(Error::invalid("thresholds must be non-negative"));
        }
        if stride == 0 || stride > analysis.patch_side() || layers == 0 {
            return Err(Error::invalid("stride outside 1..=filter side or zero layers"));
        }
        Ok(ListaParams {
            analysis,
            synthesis,
            decoder,
            thresholds,
            step_scale,
            stride,
            layers,
        })
    }

    /// Random initialization mirroring one step of a normalized pursuit:
    /// unit-norm Gaussian filters scaled by the inverse square root of
    /// the operator's largest eigenvalue (power method), all three banks
    /// tied to the same filters, constant thresholds 0.01, step scale 1.
    pub fn init(
        seed: u64,
        num_filters: usize,
        filter_side: usize,
        stride: usize,
        layers: usize,
        image_dims: (usize, usize),
    ) -> Result<Self> {
        if num_filters == 0 || filter_side == 0 {
            return Err(Error::invalid("need at least one filter of side >= 1"));
        }
        let n = filter_side * filter_side;
        let mut rng = StreamRng::new(seed, streams::FILTER_INIT);
        let mut atoms = vec![T::zero(); n * num_filters];
        for j in 0..num_filters {
            let col = &mut atoms[j * n..(j + 1) * n];
            for v in col.iter_mut() {
                *v = num::<T>(rng.normal());
            }
            let norm = col.iter().map(|&v| v * v).sum::<T>().sqrt();
            col.iter_mut().for_each(|v| *v = *v / norm);
        }
        let bank = LocalDictionary::new(filter_side, num_filters, atoms)?;
        let op = StridedConvOp::new(Arc::new(bank.clone()), stride, (0, 0), image_dims)?;
        let lam = crate::convop::spectral_norm_sq(&op, 200, num::<T>(1e-9));
        let bank = bank.scaled(T::one() / lam.sqrt());
        ListaParams::from_parts(
            bank.clone(),
            bank.clone(),
            bank,
            vec![num::<T>(0.01); num_filters],
            T::one(),
            stride,
            layers,
        )
    }

    pub fn num_filters(&self) -> usize {
        self.analysis.num_atoms()
    }

    pub fn filter_side(&self) -> usize {
        self.analysis.patch_side()
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn analysis(&self) -> &LocalDictionary<T> {
        &self.analysis
    }

    pub fn synthesis(&self) -> &LocalDictionary<T> {
        &self.synthesis
    }

    pub fn decoder(&self) -> &LocalDictionary<T> {
        &self.decoder
    }

    pub fn thresholds(&self) -> &[T] {
        &self.thresholds
    }

    pub fn step_scale(&self) -> T {
        self.step_scale
    }

    pub fn analysis_mut(&mut self) -> &mut LocalDictionary<T> {
        &mut self.analysis
    }

    pub fn synthesis_mut(&mut self) -> &mut LocalDictionary<T> {
        &mut self.synthesis
    }

    pub fn decoder_mut(&mut self) -> &mut LocalDictionary<T> {
        &mut self.decoder
    }

    pub fn thresholds_mut(&mut self) -> &mut [T] {
        &mut self.thresholds
    }

    pub fn set_step_scale(&mut self, s: T) {
        self.step_scale = s;
    }

    /// `3 m n^2 + m`: three banks plus one threshold per map, independent
    /// of the unroll depth.
    pub fn parameter_count(&self) -> usize {
        let m = self.num_filters();
        let n = self.filter_side() * self.filter_side();
        3 * m * n + m
    }

    fn shift_offsets(&self) -> Vec<(usize, usize)> {
        let q = self.stride;
        (0..q).flat_map(|kr| (0..q).map(move |kc| (kr, kc))).collect()
    }

    fn ops_for_offset(
        &self,
        offset: (usize, usize),
        dims: (usize, usize),
    ) -> Result<(StridedConvOp<T>, StridedConvOp<T>, StridedConvOp<T>)> {
        Ok((
            StridedConvOp::new(Arc::new(self.analysis.clone()), self.stride, offset, dims)?,
            StridedConvOp::new(Arc::new(self.synthesis.clone()), self.stride, offset, dims)?,
            StridedConvOp::new(Arc::new(self.decoder.clone()), self.stride, offset, dims)?,
        ))
    }

    fn check_dims(&self, y: &Image<T>) -> Result<()> {
        let (h, w) = y.dims();
        if h % self.stride != 0 || w % self.stride != 0 {
            return Err(Error::invalid(format!(
                "image {h}x{w} not divisible by stride {}; pad or crop first",
                self.stride
            )));
        }
        Ok(())
    }

    fn run_offset(
        &self,
        y: &Image<T>,
        offset: (usize, usize),
        margin: Option<&mut T>,
    ) -> Result<(Image<T>, crate::convop::FeatureMaps<T>)> {
        let dims = y.dims();
        let (op_a, op_b, op_c) = self.ops_for_offset(offset, dims)?;
        let mut gamma = op_a.zero_maps();
        let mut res = Image::zeros(dims.0, dims.1);
        let mut synth = Image::zeros(dims.0, dims.1);
        let mut pre = op_a.zero_maps();
        let mut min_margin = T::infinity();
        for _ in 0..self.layers {
            op_b.synthesize_into(&gamma, &mut synth);
            for ((r, &yi), &si) in res.data_mut().iter_mut().zip(y.data()).zip(synth.data()) {
                *r = yi - si;
            }
            op_a.analyze_into(&res, &mut pre);
            let sites = gamma.num_sites();
            for (map, &tau) in self.thresholds.iter().enumerate() {
                let g = &mut gamma.data_mut()[map * sites..(map + 1) * sites];
                let p = &pre.data()[map * sites..(map + 1) * sites];
                for (gv, &pv) in g.iter_mut().zip(p) {
                    let u = *gv + self.step_scale * pv;
                    min_margin = min_margin.min((u.abs() - tau).abs());
                    *gv = soft_threshold(u, tau);
                }
            }
        }
        let est = op_c.synthesize(&gamma);
        if !est.is_finite() {
            return Err(Error::NonFinite("unrolled forward pass".into()));
        }
        if let Some(m) = margin {
            *m = m.min(min_margin);
        }
        Ok((est, gamma))
    }

    /// Run the recurrence for a single stride offset from zero initial
    /// coefficients; returns that offset's estimate and coefficients.
    pub fn forward_offset(
        &self,
        y: &Image<T>,
        offset: (usize, usize),
    ) -> Result<(Image<T>, crate::convop::FeatureMaps<T>)> {
        self.check_dims(y)?;
        self.run_offset(y, offset, None)
    }

    /// Run the recurrence for every stride offset from zero initial
    /// coefficients and average the per-offset estimates.
    pub fn forward(&self, y: &Image<T>) -> Result<ListaForward<T>> {
        self.check_dims(y)?;
        let dims = y.dims();
        let inv_count = T::one() / num::<T>((self.stride * self.stride) as f64);
        let mut sum = Image::zeros(dims.0, dims.1);
        let mut shift_gammas = Vec::new();
        for offset in self.shift_offsets() {
            let (est, gamma) = self.run_offset(y, offset, None)?;
            sum.add_in_place(&est);
            shift_gammas.push(gamma);
        }
        sum.scale_in_place(inv_count);
        Ok(ListaForward {
            estimate: sum,
            shift_gammas,
        })
    }

    /// Smallest distance between any pre-activation magnitude and its
    /// threshold across all offsets and layers; a stability diagnostic of
    /// the active set (gradient checks exclude configurations near the
    /// soft-threshold kink).
    pub fn min_threshold_margin(&self, y: &Image<T>) -> Result<T> {
        self.check_dims(y)?;
        let mut margin = T::infinity();
        for offset in self.shift_offsets() {
            self.run_offset(y, offset, Some(&mut margin))?;
        }
        Ok(margin)
    }

    /// Loss and exact parameter gradients of `loss_l2(forward(y), clean)`.
    /// The soft-threshold subgradient is zero on the dead zone including
    /// its boundary.
    pub fn backward(&self, y: &Image<T>, clean: &Image<T>) -> Result<(T, ListaGrads<T>)> {
        self.check_dims(y)?;
        if y.dims() != clean.dims() {
            return Err(Error::shape("noisy/clean dimensions differ"));
        }
        let dims = y.dims();
        let forward = self.forward(y)?;
        let loss = loss_l2(&forward.estimate, clean)?;

        let count = (self.stride * self.stride) as f64;
        // d loss / d estimate, already scaled by the shift average.
        let dest: Image<T> = Image::from_vec(
            dims.0,
            dims.1,
            forward
                .estimate
                .data()
                .iter()
                .zip(clean.data())
                .map(|(&e, &c)| num::<T>(2.0 / count) * (e - c))
                .collect(),
        )?;

        let mut grads = ListaGrads::zeros_like(self);
        let n_side = self.filter_side();
        let sites_of = |g: &crate::convop::FeatureMaps<T>| g.num_sites();

        for offset in self.shift_offsets() {
            let (op_a, op_b, op_c) = self.ops_for_offset(offset, dims)?;
            // Forward again, caching per layer: incoming coefficients,
            // pre-activations, the residual image and its analysis.
            let mut gamma = op_a.zero_maps();
            let mut caches = Vec::with_capacity(self.layers);
            for _ in 0..self.layers {
                let mut synth = Image::zeros(dims.0, dims.1);
                op_b.synthesize_into(&gamma, &mut synth);
                let mut res = Image::zeros(dims.0, dims.1);
                for ((r, &yi), &si) in
                    res.data_mut().iter_mut().zip(y.data()).zip(synth.data())
                {
                    *r = yi - si;
                }
                let a_res = op_a.analyze(&res);
                let mut pre = gamma.clone();
                pre.add_scaled(self.step_scale, &a_res);
                let mut next = pre.clone();
                let sites = sites_of(&next);
                for (map, &tau) in self.thresholds.iter().enumerate() {
                    for v in &mut next.data_mut()[map * sites..(map + 1) * sites] {
                        *v = soft_threshold(*v, tau);
                    }
                }
                caches.push((gamma, pre, res, a_res));
                gamma = next;
            }

            // Decoder: estimate = C gamma_L.
            accumulate_filter_grad(&op_c, &gamma, &dest, n_side, &mut grads.decoder);
            let mut dgamma = op_c.analyze(&dest);

            for (layer_gamma, pre, res, a_res) in caches.iter().rev() {
                let sites = sites_of(pre);
                // Mask by the active set and collect threshold gradients.
                let mut du = dgamma.clone();
                for (map, &tau) in self.thresholds.iter().enumerate() {
                    let pre_m = &pre.data()[map * sites..(map + 1) * sites];
                    let du_m = &mut du.data_mut()[map * sites..(map + 1) * sites];
                    let mut dtau = T::zero();
                    for (d, &u) in du_m.iter_mut().zip(pre_m) {
                        if u.abs() > tau {
                            dtau = dtau - *d * u.signum();
                        } else {
                            *d = T::zero();
                        }
                    }
                    grads.thresholds[map] = grads.thresholds[map] + dtau;
                }
                grads.step_scale = grads.step_scale + du.dot(a_res);

                // Analysis bank: pre += s * A(res).
                let mut scaled_du = du.clone();
                scaled_du.scale_in_place(self.step_scale);
                accumulate_filter_grad(&op_a, &scaled_du, res, n_side, &mut grads.analysis);
                let dres = op_a.synthesize(&scaled_du);

                // res = y - B gamma_prev.
                let mut neg = vec![T::zero(); grads.synthesis.len()];
                accumulate_filter_grad(&op_b, layer_gamma, &dres, n_side, &mut neg);
                for (g, &v) in grads.synthesis.iter_mut().zip(&neg) {
                    *g = *g - v;
                }
                let back = op_b.analyze(&dres);
                dgamma = du;
                dgamma.add_scaled(-T::one(), &back);
            }
        }

        Ok((loss, grads))
    }
}

/// Gradient of `<synthesize_bank(maps), image>` with respect to the bank:
/// for every lattice site, the extracted image window scaled by that
/// site's coefficient, accumulated per filter. The same bilinear form
/// covers analysis banks via `<analyze_bank(image), maps>`.
fn accumulate_filter_grad<T: Scalar>(
    op: &StridedConvOp<T>,
    maps: &crate::convop::FeatureMaps<T>,
    image: &Image<T>,
    n_side: usize,
    acc: &mut [T],
) {
    let (lh, lw) = op.lattice_dims();
    let n = n_side * n_side;
    let sites = lh * lw;
    let mut buf = vec![T::zero(); n];
    for lr in 0..lh {
        for lc in 0..lw {
            let (row0, col0) = (
                op.offset().0 + lr * op.stride(),
                op.offset().1 + lc * op.stride(),
            );
            extract_patch_into(
                image,
                PatchIndex::new(row0, col0, n_side),
                Boundary::Periodic,
                &mut buf,
            )
            .expect("periodic extraction cannot fail");
            let site = lr * lw + lc;
            for map in 0..maps.num_maps() {
                let coef = maps.data()[map * sites + site];
                if coef != T::zero() {
                    crate::convop::axpy(coef, &buf, &mut acc[map * n..(map + 1) * n]);
                }
            }
        }
    }
}

/// Sum of squared differences.
pub fn loss_l2<T: Scalar>(estimate: &Image<T>, clean: &Image<T>) -> Result<T> {
    if estimate.dims() != clean.dims() {
        return Err(Error::shape("loss dimensions differ"));
    }
    Ok(estimate
        .data()
        .iter()
        .zip(clean.data())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum())
}

/// Architecture of the unrolled model.
#[derive(Debug, Clone)]
pub struct ArchConfig {
    pub num_filters: usize,
    pub filter_side: usize,
    pub stride: usize,
    pub layers: usize,
}

/// Optimizer and data settings for training.
#[derive(Debug, Clone)]
pub struct TrainConfig<T> {
    pub lr: T,
    pub lr_decay: T,
    pub decay_every: usize,
    pub adam_eps: T,
    pub adam_betas: (T, T),
    pub epochs: usize,
    pub crop_size: usize,
    pub batch: usize,
    pub sigma: T,
    pub seed: u64,
}

impl<T: Scalar> TrainConfig<T> {
    fn base() -> Self {
        TrainConfig {
            lr: num(1e-4),
            lr_decay: num(0.7),
            decay_every: 50,
            adam_eps: num(1e-3),
            adam_betas: (num(0.9), num(0.999)),
            epochs: 250,
            crop_size: 128,
            batch: 1,
            sigma: num(25.0),
            seed: 0,
        }
    }
}

/// Desk-scale preset: a model small enough to train in seconds.
pub fn desk_preset<T: Scalar>() -> (ArchConfig, TrainConfig<T>) {
    let arch = ArchConfig {
        num_filters: 16,
        filter_side: 5,
        stride: 4,
        layers: 4,
    };
    let cfg = TrainConfig {
        lr: num(2e-3),
        epochs: 50,
        crop_size: 16,
        ..TrainConfig::base()
    };
    (arch, cfg)
}

/// Full-scale preset (hours of compute; shipped for completeness).
pub fn paper_preset<T: Scalar>() -> (ArchConfig, TrainConfig<T>) {
    let arch = ArchConfig {
        num_filters: 175,
        filter_side: 11,
        stride: 8,
        layers: 12,
    };
    (arch, TrainConfig::base())
}

/// ADAM moment estimates plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub m: ListaGrads<T>,
    pub v: ListaGrads<T>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ListaParams<T>) -> Self {
        AdamState {
            m: ListaGrads::zeros_like(params),
            v: ListaGrads::zeros_like(params),
            t: 0,
        }
    }
}

fn adam_update_slice<T: Scalar>(
    p: &mut [T],
    m: &mut [T],
    v: &mut [T],
    g: &[T],
    lr_t: T,
    betas: (T, T),
    eps: T,
    bias1: T,
    bias2: T,
) {
    let (b1, b2) = betas;
    for ((pi, mi), (vi, &gi)) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut().zip(g)) {
        *mi = b1 * *mi + (T::one() - b1) * gi;
        *vi = b2 * *vi + (T::one() - b2) * gi * gi;
        let m_hat = *mi / bias1;
        let v_hat = *vi / bias2;
        *pi = *pi - lr_t * m_hat / (v_hat.sqrt() + eps);
    }
}

/// One ADAM step with bias correction; the learning rate is scheduled as
/// `lr * decay^floor(epoch / decay_every)`. Thresholds are clamped at
/// zero after the update.
pub fn adam_step<T: Scalar>(
    params: &mut ListaParams<T>,
    state: &mut AdamState<T>,
    grads: &ListaGrads<T>,
    cfg: &TrainConfig<T>,
    epoch: usize,
) {
    state.t += 1;
    let (b1, b2) = cfg.adam_betas;
    let lr_t = scheduled_lr(cfg, epoch);
    let bias1 = T::one() - b1.powi(state.t as i32);
    let bias2 = T::one() - b2.powi(state.t as i32);

    adam_update_slice(
        params.analysis.atoms_mut(),
        &mut state.m.analysis,
        &mut state.v.analysis,
        &grads.analysis,
        lr_t,
        (b1, b2),
        cfg.adam_eps,
        bias1,
        bias2,
    );
    adam_update_slice(
        params.synthesis.atoms_mut(),
        &mut state.m.synthesis,
        &mut state.v.synthesis,
        &grads.synthesis,
        lr_t,
        (b1, b2),
        cfg.adam_eps,
        bias1,
        bias2,
    );
    adam_update_slice(
        params.decoder.atoms_mut(),
        &mut state.m.decoder,
        &mut state.v.decoder,
        &grads.decoder,
        lr_t,
        (b1, b2),
        cfg.adam_eps,
        bias1,
        bias2,
    );
    adam_update_slice(
        &mut params.thresholds,
        &mut state.m.thresholds,
        &mut state.v.thresholds,
        &grads.thresholds,
        lr_t,
        (b1, b2),
        cfg.adam_eps,
        bias1,
        bias2,
    );
    {
        let g = grads.step_scale;
        state.m.step_scale = b1 * state.m.step_scale + (T::one() - b1) * g;
        state.v.step_scale = b2 * state.v.step_scale + (T::one() - b2) * g * g;
        let m_hat = state.m.step_scale / bias1;
        let v_hat = state.v.step_scale / bias2;
        params.step_scale = params.step_scale - lr_t * m_hat / (v_hat.sqrt() + cfg.adam_eps);
    }
    for tau in params.thresholds.iter_mut() {
        if *tau < T::zero() {
            *tau = T::zero();
        }
    }
}

pub fn scheduled_lr<T: Scalar>(cfg: &TrainConfig<T>, epoch: usize) -> T {
    cfg.lr * cfg.lr_decay.powi((epoch / cfg.decay_every.max(1)) as i32)
}

/// Per-epoch training statistics.
#[derive(Debug, Clone, Copy)]
pub struct EpochStats<T> {
    pub epoch: usize,
    pub mean_loss: T,
    pub lr: T,
}

/// Everything needed to continue training deterministically.
#[derive(Debug, Clone)]
pub struct TrainerState<T> {
    pub params: ListaParams<T>,
    pub adam: AdamState<T>,
    pub epochs_done: usize,
}

impl<T: Scalar> TrainerState<T> {
    pub fn fresh(params: ListaParams<T>) -> Self {
        let adam = AdamState::new(&params);
        TrainerState {
            params,
            adam,
            epochs_done: 0,
        }
    }

    /// Parameter record attached to checkpoints.
    pub fn config_echo(&self, cfg: &TrainConfig<T>) -> String {
        let p = &self.params;
        let mut s = String::new();
        let _ = writeln!(s, "num_filters={}", p.num_filters());
        let _ = writeln!(s, "filter_side={}", p.filter_side());
        let _ = writeln!(s, "stride={}", p.stride());
        let _ = writeln!(s, "layers={}", p.layers());
        let _ = writeln!(s, "lr={}", cfg.lr);
        let _ = writeln!(s, "lr_decay={}", cfg.lr_decay);
        let _ = writeln!(s, "decay_every={}", cfg.decay_every);
        let _ = writeln!(s, "adam_eps={}", cfg.adam_eps);
        let _ = writeln!(s, "adam_beta1={}", cfg.adam_betas.0);
        let _ = writeln!(s, "adam_beta2={}", cfg.adam_betas.1);
        let _ = writeln!(s, "epochs={}", cfg.epochs);
        let _ = writeln!(s, "crop_size={}", cfg.crop_size);
        let _ = writeln!(s, "batch={}", cfg.batch);
        let _ = writeln!(s, "sigma={}", cfg.sigma);
        let _ = writeln!(s, "seed={}", cfg.seed);
        let _ = writeln!(s, "tau_clamped_nonnegative=true");
        s
    }
}

/// Initialize from scratch and train for `cfg.epochs` epochs.
pub fn train<T: Scalar>(
    dataset: &[Image<T>],
    arch: &ArchConfig,
    cfg: &TrainConfig<T>,
) -> Result<(TrainerState<T>, Vec<EpochStats<T>>)> {
    let params = ListaParams::init(
        cfg.seed,
        arch.num_filters,
        arch.filter_side,
        arch.stride,
        arch.layers,
        (cfg.crop_size, cfg.crop_size),
    )?;
    train_from(dataset, TrainerState::fresh(params), cfg)
}

/// Continue training up to `cfg.epochs` total epochs. Crops and noise are
/// pure functions of (seed, epoch, item), so resuming from a checkpoint
/// reproduces an uninterrupted run exactly.
pub fn train_from<T: Scalar>(
    dataset: &[Image<T>],
    mut state: TrainerState<T>,
    cfg: &TrainConfig<T>,
) -> Result<(TrainerState<T>, Vec<EpochStats<T>>)> {
    if dataset.is_empty() {
        return Err(Error::invalid("training corpus is empty"));
    }
    let crop = cfg.crop_size;
    for img in dataset {
        let (h, w) = img.dims();
        if h < crop || w < crop {
            return Err(Error::invalid(format!(
                "corpus image {h}x{w} smaller than crop {crop}"
            )));
        }
    }
    if cfg.batch == 0 {
        return Err(Error::invalid("batch must be >= 1"));
    }

    let mut history = Vec::new();
    for epoch in state.epochs_done..cfg.epochs {
        let mut loss_sum = T::zero();
        let mut items = 0usize;
        let mut step_in_epoch = 0usize;
        let indices: Vec<usize> = (0..dataset.len()).collect();
        for chunk in indices.chunks(cfg.batch) {
            let mut batch_grads: Option<ListaGrads<T>> = None;
            let mut batch_loss = T::zero();
            for &idx in chunk {
                let img = &dataset[idx];
                let (h, w) = img.dims();
                let mut crop_rng =
                    StreamRng::substream(cfg.seed, streams::CROPS, &[epoch as u64, idx as u64]);
                let r0 = crop_rng.uniform_usize(h - crop + 1);
                let c0 = crop_rng.uniform_usize(w - crop + 1);
                let clean = img.crop(r0, c0, crop, crop)?;
                let mut noise_rng =
                    StreamRng::substream(cfg.seed, streams::NOISE, &[epoch as u64, idx as u64]);
                let mut noisy = clean.clone();
                for v in noisy.data_mut() {
                    *v = *v + cfg.sigma * num::<T>(noise_rng.normal());
                }
                let (loss, grads) = state.params.backward(&noisy, &clean)?;
                if !loss.is_finite() {
                    return Err(Error::Diverged {
                        epoch,
                        step: step_in_epoch,
                    });
                }
                batch_loss = batch_loss + loss;
                match batch_grads.as_mut() {
                    Some(acc) => acc.add_scaled(T::one(), &grads),
                    None => batch_grads = Some(grads),
                }
            }
            let mut grads = batch_grads.unwrap();
            grads.scale(T::one() / num::<T>(chunk.len() as f64));
            adam_step(&mut state.params, &mut state.adam, &grads, cfg, epoch);
            loss_sum = loss_sum + batch_loss;
            items += chunk.len();
            step_in_epoch += 1;
        }
        history.push(EpochStats {
            epoch,
            mean_loss: loss_sum / num::<T>(items as f64),
            lr: scheduled_lr(cfg, epoch),
        });
        state.epochs_done = epoch + 1;
    }
    Ok((state, history))
}
