//! Sparse coding solvers for the global convolutional model: iterative
//! soft thresholding (plain and accelerated), the error-bounded basis
//! pursuit wrapper that bisects on the l1 weight, and the least-squares
//! debiasing refit on the recovered support.

use crate::convop::{FeatureMaps, ImageOp};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::{num, Scalar};

/// Scalar soft threshold `sign(y) * max(|y| - tau, 0)`.
#[inline]
pub fn soft_threshold<T: Scalar>(y: T, tau: T) -> T {
    debug_assert!(tau >= T::zero(), "threshold must be non-negative");
    let mag = y.abs() - tau;
    if mag > T::zero() {
        mag * y.signum()
    } else {
        T::zero()
    }
}

/// Element-wise soft threshold with one scalar threshold.
pub fn soft_threshold_maps<T: Scalar>(maps: &mut FeatureMaps<T>, tau: T) {
    assert!(tau >= T::zero(), "threshold must be non-negative");
    for v in maps.data_mut() {
        *v = soft_threshold(*v, tau);
    }
}

/// Element-wise soft threshold with one threshold per map.
pub fn soft_threshold_per_map<T: Scalar>(maps: &mut FeatureMaps<T>, tau: &[T]) {
    assert_eq!(tau.len(), maps.num_maps());
    assert!(tau.iter().all(|&t| t >= T::zero()));
    let sites = maps.num_sites();
    for (map, &t) in tau.iter().enumerate() {
        for v in &mut maps.data_mut()[map * sites..(map + 1) * sites] {
            *v = soft_threshold(*v, t);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Acceleration {
    Ista,
    Fista,
}

/// Solver settings. `step_c` must dominate the largest eigenvalue of
/// `D^T D`; callers usually set it from [`crate::convop::spectral_norm_sq`]
/// inflated by 1%.
#[derive(Debug, Clone)]
pub struct PursuitConfig<T> {
    pub lambda: T,
    pub max_iters: usize,
    pub rel_tol: T,
    pub step_c: T,
    pub acceleration: Acceleration,
}

impl<T: Scalar> Default for PursuitConfig<T> {
    fn default() -> Self {
        PursuitConfig {
            lambda: T::zero(),
            max_iters: 400,
            rel_tol: num(1e-5),
            step_c: T::one(),
            acceleration: Acceleration::Ista,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// Iterates stopped moving (relative change below tolerance).
    Converged,
    /// Iteration budget exhausted first.
    MaxIters,
    /// Error-bounded mode: the zero solution was already feasible.
    ZeroFeasible,
    /// Error-bounded mode: bisection budget ran out before the residual
    /// landed in the target band; the best feasible solution is returned.
    BandNotReached,
}

#[derive(Debug, Clone)]
pub struct PursuitResult<T> {
    pub gamma: FeatureMaps<T>,
    pub objective_trace: Vec<T>,
    pub iters_used: usize,
    pub residual_norm: T,
    /// The l1 weight the returned solution was solved at.
    pub lambda: T,
    pub status: SolveStatus,
}

fn residual_into<T: Scalar, Op: ImageOp<T>>(
    op: &Op,
    y: &Image<T>,
    gamma: &FeatureMaps<T>,
    synth: &mut Image<T>,
    res: &mut Image<T>,
) {
    op.synthesize_into(gamma, synth);
    for ((r, &yi), &si) in res.data_mut().iter_mut().zip(y.data()).zip(synth.data()) {
        *r = yi - si;
    }
}

/// Lagrangian objective `0.5 ||D g - y||^2 + lambda * ||g||_1`.
pub fn objective<T: Scalar, Op: ImageOp<T>>(
    op: &Op,
    y: &Image<T>,
    gamma: &FeatureMaps<T>,
    lambda: T,
) -> T {
    let mut synth = Image::zeros(op.image_dims().0, op.image_dims().1);
    let mut res = synth.clone();
    residual_into(op, y, gamma, &mut synth, &mut res);
    let half = num::<T>(0.5);
    half * res.dot(&res) + lambda * gamma.l1_norm()
}

/// Largest violation of the stationarity conditions at `gamma`, scaled by
/// `lambda`: zero coordinates must satisfy `|g_j| <= lambda`, active ones
/// `g_j = lambda * sign(gamma_j)`, where `g = D^T (y - D gamma)`.
pub fn kkt_max_violation<T: Scalar, Op: ImageOp<T>>(
    op: &Op,
    y: &Image<T>,
    gamma: &FeatureMaps<T>,
    lambda: T,
) -> T {
    let (h, w) = op.image_dims();
    let mut synth = Image::zeros(h, w);
    let mut res = synth.clone();
    residual_into(op, y, gamma, &mut synth, &mut res);
    let grad = op.analyze(&res);
    let mut worst = T::zero();
    for (&g, &x) in grad.data().iter().zip(gamma.data()) {
        let viol = if x == T::zero() {
            (g.abs() - lambda).max(T::zero())
        } else {
            (g - lambda * x.signum()).abs()
        };
        worst = worst.max(viol);
    }
    if lambda > T::zero() {
        worst / lambda
    } else {
        worst
    }
}

#[cfg(debug_assertions)]
fn debug_check_step<T: Scalar, Op: ImageOp<T>>(op: &Op, step_c: T) {
    // A couple of power iterations give a Rayleigh-quotient lower bound
    // on the largest eigenvalue; a step constant below it is a caller bug.
    let probe = crate::convop::spectral_norm_sq(op, 3, T::zero());
    debug_assert!(
        step_c >= probe * num::<T>(1.0 - 1e-9),
        "step_c {step_c} below spectral lower bound {probe}"
    );
}

/// Iterative soft thresholding for the Lagrangian basis pursuit
/// `argmin 0.5 ||D g - y||^2 + lambda ||g||_1`, warm-started from
/// `gamma0`. The FISTA variant adds Nesterov momentum and does not
/// guarantee a monotone objective trace.
pub fn ista_solve<T: Scalar, Op: ImageOp<T>>(
    op: &Op,
    y: &Image<T>,
    cfg: &PursuitConfig<T>,
    gamma0: &FeatureMaps<T>,
) -> Result<PursuitResult<T>> {
    if cfg.lambda < T::zero() {
        return Err(Error::invalid("lambda must be non-negative"));
    }
    if cfg.step_c <= T::zero() || cfg.max_iters == 0 {
        return Err(Error::invalid("step_c must be positive, max_iters >= 1"));
    }
    if y.dims() != op.image_dims() {
        return Err(Error::shape("signal dimensions do not match operator"));
    }
    #[cfg(debug_assertions)]
    debug_check_step(op, cfg.step_c);

    let inv_c = T::one() / cfg.step_c;
    let thresh = cfg.lambda * inv_c;
    let half = num::<T>(0.5);
    let tiny = num::<T>(1e-300);

    let (h, w) = op.image_dims();
    let mut gamma = gamma0.clone();
    let mut synth = Image::zeros(h, w);
    let mut res = Image::zeros(h, w);
    let mut grad = op.zero_maps();

    // FISTA state: previous iterate and its synthesis image.
    let fista = cfg.acceleration == Acceleration::Fista;
    let mut gamma_prev = if fista { Some(gamma.clone()) } else { None };
    let mut synth_prev = if fista { Some(Image::zeros(h, w)) } else { None };
    let mut momentum = T::one();

    residual_into(op, y, &gamma, &mut synth, &mut res);
    if let Some(sp) = synth_prev.as_mut() {
        sp.data_mut().copy_from_slice(synth.data());
    }
    let mut trace =
        vec![half * res.dot(&res) + cfg.lambda * gamma.l1_norm()];
    let mut iters_used = 0;
    let mut status = SolveStatus::MaxIters;

    for _ in 0..cfg.max_iters {
        if fista {
            let beta = {
                let next = (T::one() + (T::one() + num::<T>(4.0) * momentum * momentum).sqrt())
                    * half;
                let b = (momentum - T::one()) / next;
                momentum = next;
                b
            };
            // Residual at the extrapolated point, via cached syntheses:
            // D z = (1 + beta) D g_k - beta D g_{k-1}.
            let sp = synth_prev.as_ref().unwrap();
            for (((r, &yi), &sc), &sq) in res
                .data_mut()
                .iter_mut()
                .zip(y.data())
                .zip(synth.data())
                .zip(sp.data())
            {
                *r = yi - ((T::one() + beta) * sc - beta * sq);
            }
            op.analyze_into(&res, &mut grad);
            let gp = gamma_prev.as_mut().unwrap();
            let mut diff_sq = T::zero();
            let mut norm_sq = T::zero();
            for ((g, gprev), &d) in gamma
                .data_mut()
                .iter_mut()
                .zip(gp.data_mut())
                .zip(grad.data())
            {
                let z = *g + beta * (*g - *gprev);
                let next = soft_threshold(z + inv_c * d, thresh);
                let delta = next - *g;
                diff_sq = diff_sq + delta * delta;
                norm_sq = norm_sq + next * next;
                *gprev = *g;
                *g = next;
            }
            std::mem::swap(synth_prev.as_mut().unwrap(), &mut synth);
            residual_into(op, y, &gamma, &mut synth, &mut res);
            iters_used += 1;
            let obj = half * res.dot(&res) + cfg.lambda * gamma.l1_norm();
            trace.push(obj);
            if !obj.is_finite() {
                return Err(Error::NonFinite("fista iterate (step_c too small?)".into()));
            }
            if diff_sq.sqrt() < cfg.rel_tol * norm_sq.sqrt().max(tiny) {
                status = SolveStatus::Converged;
                break;
            }
        } else {
            op.analyze_into(&res, &mut grad);
            let mut diff_sq = T::zero();
            let mut norm_sq = T::zero();
            for (g, &d) in gamma.data_mut().iter_mut().zip(grad.data()) {
                let next = soft_threshold(*g + inv_c * d, thresh);
                let delta = next - *g;
                diff_sq = diff_sq + delta * delta;
                norm_sq = norm_sq + next * next;
                *g = next;
            }
            residual_into(op, y, &gamma, &mut synth, &mut res);
            iters_used += 1;
            let obj = half * res.dot(&res) + cfg.lambda * gamma.l1_norm();
            trace.push(obj);
            if !obj.is_finite() {
                return Err(Error::NonFinite("ista iterate (step_c too small?)".into()));
            }
            if diff_sq.sqrt() < cfg.rel_tol * norm_sq.sqrt().max(tiny) {
                status = SolveStatus::Converged;
                break;
            }
        }
    }

    Ok(PursuitResult {
        residual_norm: res.norm(),
        gamma,
        objective_trace: trace,
        iters_used,
        lambda: cfg.lambda,
        status,
    })
}

/// Error-bounded basis pursuit: find the sparsest-leaning solution with
/// `||D g - y|| <= epsilon` by sweeping the l1 weight. The weight is
/// expanded/shrunk geometrically to bracket the constraint boundary, then
/// bisected until the residual lands in `[0.95 eps, eps]`; each inner
/// solve warm-starts from the previous one. Returns the feasible solution
/// with the largest weight found.
pub fn bp_error_bounded<T: Scalar, Op: ImageOp<T>>(
    op: &Op,
    y: &Image<T>,
    epsilon: T,
    cfg: &PursuitConfig<T>,
) -> Result<PursuitResult<T>> {
    if epsilon <= T::zero() {
        return Err(Error::invalid("epsilon must be positive"));
    }
    let y_norm = y.norm();
    if y_norm <= epsilon {
        let gamma = op.zero_maps();
        return Ok(PursuitResult {
            gamma,
            objective_trace: vec![num::<T>(0.5) * y_norm * y_norm],
            iters_used: 0,
            residual_norm: y_norm,
            lambda: T::zero(),
            status: SolveStatus::ZeroFeasible,
        });
    }

    let band_lo = num::<T>(0.95) * epsilon;
    let corr_max = op.analyze(y).max_abs();
    let two = num::<T>(2.0);

    let mut lambda = num::<T>(0.1) * corr_max;
    let mut warm = op.zero_maps();
    let mut total_iters = 0;

    let solve = |lam: T, warm: &FeatureMaps<T>, iters: &mut usize| -> Result<PursuitResult<T>> {
        let mut local = cfg.clone();
        local.lambda = lam;
        let r = ista_solve(op, y, &local, warm)?;
        *iters += r.iters_used;
        Ok(r)
    };

    let mut current = solve(lambda, &warm, &mut total_iters)?;
    warm.data_mut().copy_from_slice(current.gamma.data());

    let mut best_feasible: Option<PursuitResult<T>> = None;
    let mut lam_lo = T::zero(); // largest weight known feasible
    let mut lam_hi = T::zero(); // smallest weight known infeasible

    let in_band = |r: T| r >= band_lo && r <= epsilon;

    // Phase 1: bracket the boundary geometrically.
    for _ in 0..60 {
        if current.residual_norm <= epsilon {
            lam_lo = lambda;
            let better = best_feasible
                .as_ref()
                .map(|b| lambda > b.lambda)
                .unwrap_or(true);
            if better {
                best_feasible = Some(current.clone());
            }
            if in_band(current.residual_norm) {
                break;
            }
            lambda = lambda * two;
        } else {
            lam_hi = lambda;
            lambda = lambda / two;
        }
        // A weight beyond the dead zone keeps the zero solution, whose
        // residual ||y|| > eps terminates the expansion via lam_hi.
        if lam_hi > T::zero() && lam_lo > T::zero() {
            break;
        }
        current = solve(lambda, &warm, &mut total_iters)?;
        warm.data_mut().copy_from_slice(current.gamma.data());
    }

    // Phase 2: bisect into the band.
    if !in_band(current.residual_norm) && lam_lo > T::zero() && lam_hi > lam_lo {
        for _ in 0..30 {
            let mid = (lam_lo + lam_hi) * num::<T>(0.5);
            current = solve(mid, &warm, &mut total_iters)?;
            warm.data_mut().copy_from_slice(current.gamma.data());
            if current.residual_norm <= epsilon {
                lam_lo = mid;
                let better = best_feasible
                    .as_ref()
                    .map(|b| mid > b.lambda)
                    .unwrap_or(true);
                if better {
                    best_feasible = Some(current.clone());
                }
                if in_band(current.residual_norm) {
                    break;
                }
            } else {
                lam_hi = mid;
            }
        }
    }

    match best_feasible {
        Some(mut r) => {
            r.iters_used = total_iters;
            r.status = if in_band(r.residual_norm) {
                SolveStatus::Converged
            } else {
                SolveStatus::BandNotReached
            };
            Ok(r)
        }
        None => {
            // Even the smallest weight tried could not reach the ball:
            // epsilon is tighter than the representable residual.
            current.iters_used = total_iters;
            current.status = SolveStatus::BandNotReached;
            Ok(current)
        }
    }
}

/// Coordinates of one coefficient inside feature maps.
#[derive(Debug, Clone, Copy)]
pub struct MapCoord {
    pub map: usize,
    pub lr: usize,
    pub lc: usize,
}

fn support_coords<T: Scalar>(gamma: &FeatureMaps<T>) -> Vec<MapCoord> {
    let sites = gamma.num_sites();
    let (_, lw) = gamma.lattice_dims();
    gamma
        .data()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != T::zero())
        .map(|(idx, _)| MapCoord {
            map: idx / sites,
            lr: (idx % sites) / lw,
            lc: (idx % sites) % lw,
        })
        .collect()
}

/// Least-squares refit of the coefficients restricted to the support of
/// `gamma` (conjugate gradient on the support-restricted normal
/// equations). Coefficients outside the support stay exactly zero.
pub fn debias<T: Scalar, Op: SupportOps<T>>(
    op: &Op,
    y: &Image<T>,
    gamma: &FeatureMaps<T>,
    cg_iters: usize,
    cg_tol: T,
) -> FeatureMaps<T> {
    let coords = support_coords(gamma);
    if coords.is_empty() {
        return gamma.clone();
    }
    let sites = gamma.num_sites();
    let (_, lw) = gamma.lattice_dims();
    let flat = |c: &MapCoord| c.map * sites + c.lr * lw + c.lc;

    let (h, w) = op.image_dims();
    let mut img_buf = Image::zeros(h, w);

    let apply = |v: &[T], img_buf: &mut Image<T>, out: &mut [T]| {
        op.synthesize_support(&coords, v, img_buf);
        op.analyze_support(img_buf, &coords, out);
    };

    // b = masked D^T y, x0 = current coefficients.
    let mut b = vec![T::zero(); coords.len()];
    op.analyze_support(y, &coords, &mut b);
    let mut x: Vec<T> = coords.iter().map(|c| gamma.data()[flat(c)]).collect();

    let mut ax = vec![T::zero(); coords.len()];
    apply(&x, &mut img_buf, &mut ax);
    let mut r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
    let b_norm = crate::convop::dot(&b, &b).sqrt();
    let tiny = num::<T>(1e-300);
    let mut rs = crate::convop::dot(&r, &r);

    if rs.sqrt() > cg_tol * b_norm.max(tiny) {
        let mut p = r.clone();
        let mut ap = vec![T::zero(); coords.len()];
        for _ in 0..cg_iters {
            apply(&p, &mut img_buf, &mut ap);
            let pap = crate::convop::dot(&p, &ap);
            if pap <= T::zero() {
                break;
            }
            let alpha = rs / pap;
            for ((xi, ri), (&pi, &api)) in
                x.iter_mut().zip(r.iter_mut()).zip(p.iter().zip(&ap))
            {
                *xi = *xi + alpha * pi;
                *ri = *ri - alpha * api;
            }
            let rs_new = crate::convop::dot(&r, &r);
            if rs_new.sqrt() <= cg_tol * b_norm.max(tiny) {
                break;
            }
            let beta = rs_new / rs;
            rs = rs_new;
            for (pi, &ri) in p.iter_mut().zip(&r) {
                *pi = ri + beta * *pi;
            }
        }
    }

    let mut out = gamma.clone();
    out.fill(T::zero());
    for (c, &v) in coords.iter().zip(&x) {
        out.data_mut()[flat(c)] = v;
    }
    out
}

/// Support-restricted applications of an operator; the debiasing solver
/// only touches coefficients on a fixed support.
pub trait SupportOps<T: Scalar>: ImageOp<T> {
    fn synthesize_support(&self, coords: &[MapCoord], values: &[T], out: &mut Image<T>);

    fn analyze_support(&self, img: &Image<T>, coords: &[MapCoord], out: &mut [T]);
}

impl<T: Scalar> SupportOps<T> for crate::convop::StridedConvOp<T> {
    fn synthesize_support(&self, coords: &[MapCoord], values: &[T], out: &mut Image<T>) {
        let entries: Vec<(usize, usize, usize, T)> = coords
            .iter()
            .zip(values)
            .map(|(c, &v)| (c.map, c.lr, c.lc, v))
            .collect();
        self.synthesize_sparse(&entries, out);
    }

    fn analyze_support(&self, img: &Image<T>, coords: &[MapCoord], out: &mut [T]) {
        for (o, c) in out.iter_mut().zip(coords) {
            *o = self.analyze_entry(img, c.map, c.lr, c.lc);
        }
    }
}

impl<T: Scalar> SupportOps<T> for crate::convop::CoverageNormalizedOp<T> {
    fn synthesize_support(&self, coords: &[MapCoord], values: &[T], out: &mut Image<T>) {
        self.inner().synthesize_support(coords, values, out);
        out.mul_in_place(self.inv_coverage());
    }

    fn analyze_support(&self, img: &Image<T>, coords: &[MapCoord], out: &mut [T]) {
        let mut scaled = img.clone();
        scaled.mul_in_place(self.inv_coverage());
        self.inner().analyze_support(&scaled, coords, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convop::StridedConvOp;
    use crate::dict::LocalDictionary;
    use crate::rng::{streams, StreamRng};
    use std::sync::Arc;

    #[test]
    fn soft_threshold_formula() {
        assert!((soft_threshold(0.5f64, 0.2) - 0.3).abs() < 1e-15);
        assert_eq!(soft_threshold(-0.1f64, 0.2), 0.0);
        assert_eq!(soft_threshold(1.25f64, 0.0), 1.25);
        assert!((soft_threshold(-0.7f64, 0.2) + 0.5).abs() < 1e-15);
    }

    fn ortho_op(h: usize, w: usize) -> StridedConvOp<f64> {
        let d = Arc::new(LocalDictionary::<f64>::overcomplete_dct(2, 2).unwrap());
        StridedConvOp::new(d, 2, (0, 0), (h, w)).unwrap()
    }

    #[test]
    fn ista_orthonormal_prox_closed_form() {
        // Non-overlapping orthonormal slices: one iteration lands on the
        // exact prox, coefficient soft-thresholded by lambda.
        let op = ortho_op(4, 4);
        let mut target = op.zero_maps();
        target.set(1, 0, 0, 0.5);
        let y = op.try_synthesize(&target).unwrap();
        let cfg = PursuitConfig {
            lambda: 0.2,
            step_c: 1.0,
            max_iters: 50,
            rel_tol: 1e-12,
            acceleration: Acceleration::Ista,
        };
        let r = ista_solve(&op, &y, &cfg, &op.zero_maps()).unwrap();
        assert!((r.gamma.get(1, 0, 0) - 0.3).abs() < 1e-10);
        for (idx, &v) in r.gamma.data().iter().enumerate() {
            if idx != r.gamma.num_sites() {
                // map 1, site 0
                assert!(v.abs() < 1e-10 || (v - 0.3).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn ista_huge_lambda_zeroes_everything() {
        let op = ortho_op(4, 4);
        let y = crate::image::Image::from_fn(4, 4, |r, c| (r + 2 * c) as f64);
        let lam = op.try_analyze(&y).unwrap().max_abs() * 1.5;
        let cfg = PursuitConfig {
            lambda: lam,
            step_c: 1.0,
            ..PursuitConfig::default()
        };
        let r = ista_solve(&op, &y, &cfg, &op.zero_maps()).unwrap();
        assert_eq!(r.gamma.count_nonzero(), 0);
        assert_eq!(r.iters_used, 1);
        assert_eq!(r.status, SolveStatus::Converged);
    }

    #[test]
    fn ista_trace_monotone() {
        let d = Arc::new(LocalDictionary::<f64>::overcomplete_dct(3, 4).unwrap());
        let op = StridedConvOp::new(d, 2, (0, 0), (6, 6)).unwrap();
        let mut rng = StreamRng::new(31, streams::GENERIC);
        let y = crate::image::Image::from_fn(6, 6, |_, _| rng.normal() * 3.0);
        let c = crate::convop::spectral_norm_sq(&op, 300, 1e-12) * 1.01;
        let cfg = PursuitConfig {
            lambda: 0.5,
            step_c: c,
            max_iters: 200,
            rel_tol: 0.0,
            acceleration: Acceleration::Ista,
        };
        let r = ista_solve(&op, &y, &cfg, &op.zero_maps()).unwrap();
        for w in r.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-10 * (1.0 + w[0].abs()), "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn fista_matches_ista_solution() {
        let d = Arc::new(LocalDictionary::<f64>::overcomplete_dct(3, 4).unwrap());
        let op = StridedConvOp::new(d, 2, (0, 0), (6, 6)).unwrap();
        let mut rng = StreamRng::new(77, streams::GENERIC);
        let y = crate::image::Image::from_fn(6, 6, |_, _| rng.normal() * 2.0);
        let c = crate::convop::spectral_norm_sq(&op, 300, 1e-12) * 1.01;
        let mk = |acc, iters| PursuitConfig {
            lambda: 0.3,
            step_c: c,
            max_iters: iters,
            rel_tol: 1e-14,
            acceleration: acc,
        };
        let a = ista_solve(&op, &y, &mk(Acceleration::Ista, 40_000), &op.zero_maps()).unwrap();
        let b = ista_solve(&op, &y, &mk(Acceleration::Fista, 5_000), &op.zero_maps()).unwrap();
        let oa = objective(&op, &y, &a.gamma, 0.3);
        let ob = objective(&op, &y, &b.gamma, 0.3);
        assert!((oa - ob).abs() < 1e-7 * (1.0 + oa.abs()), "{oa} vs {ob}");
    }

    #[test]
    fn bp_zero_feasible_short_circuit() {
        let op = ortho_op(4, 4);
        let y = crate::image::Image::from_fn(4, 4, |_, _| 0.1);
        let eps = y.norm() * 2.0;
        let r = bp_error_bounded(&op, &y, eps, &PursuitConfig::default()).unwrap();
        assert_eq!(r.status, SolveStatus::ZeroFeasible);
        assert_eq!(r.gamma.count_nonzero(), 0);
        assert!((r.residual_norm - y.norm()).abs() < 1e-12);
    }

    #[test]
    fn bp_tiny_epsilon_is_feasible_with_overcomplete_dict() {
        let d = Arc::new(LocalDictionary::<f64>::overcomplete_dct(2, 3).unwrap());
        let op = StridedConvOp::new(d, 1, (0, 0), (4, 4)).unwrap();
        let mut rng = StreamRng::new(9, streams::GENERIC);
        let y = crate::image::Image::from_fn(4, 4, |_, _| rng.normal());
        let c = crate::convop::spectral_norm_sq(&op, 400, 1e-12) * 1.01;
        let cfg = PursuitConfig {
            step_c: c,
            max_iters: 2000,
            rel_tol: 1e-10,
            ..PursuitConfig::default()
        };
        let eps = y.norm() * 1e-3;
        let r = bp_error_bounded(&op, &y, eps, &cfg).unwrap();
        assert!(r.residual_norm <= eps, "residual {} > {eps}", r.residual_norm);
    }

    #[test]
    fn debias_scalar_least_squares() {
        // One active atom: the refit coefficient is <a, y> / ||a||^2 with
        // a the placed atom.
        let op = ortho_op(4, 4);
        let mut gamma = op.zero_maps();
        gamma.set(2, 1, 1, 0.123); // wrong value on the right support
        let mut truth = op.zero_maps();
        truth.set(2, 1, 1, 1.7);
        let y = op.try_synthesize(&truth).unwrap();
        let refit = debias(&op, &y, &gamma, 50, 1e-12);
        assert!((refit.get(2, 1, 1) - 1.7).abs() < 1e-10);
        assert_eq!(refit.count_nonzero(), 1);
    }

    #[test]
    fn debias_fixed_point() {
        let op = ortho_op(4, 4);
        let mut gamma = op.zero_maps();
        gamma.set(0, 0, 1, 2.5);
        let y = op.try_synthesize(&gamma).unwrap();
        let refit = debias(&op, &y, &gamma, 50, 1e-12);
        for (a, b) in refit.data().iter().zip(gamma.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn objective_trivial_values() {
        let op = ortho_op(4, 4);
        let y = crate::image::Image::from_fn(4, 4, |r, c| (r * 4 + c) as f64);
        let zero = op.zero_maps();
        let expect = 0.5 * y.dot(&y);
        assert!((objective(&op, &y, &zero, 0.7) - expect).abs() < 1e-12);
        let y0 = crate::image::Image::zeros(4, 4);
        assert_eq!(objective(&op, &y0, &zero, 0.7), 0.0);
    }
}
