//! Independent oracles: finite-difference derivative checks and randomised
//! falsification suites for the inequalities the landscape analysis rests
//! on. Every suite is deterministic in its seed, and any single trial can be
//! replayed from `(property, seed, trial)`.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::factored::{procrustes_matrices, GroundTruth};
use crate::geometry::min_hessian_eig;
use crate::linalg::{self, spectral_norm, sym_eigen};
use crate::objectives::{
    restricted_convexity_probe, Factorization, GeneralObjective, HalfSquaredDistance, MatrixFunction, Objective,
    Regularizer, WeightedQuadratic,
};
use crate::rng::{derive_seed, gaussian_matrix, low_rank_unit, random_orthogonal, random_orthonormal, stream_rng, uniform,
    unit_sphere, StreamRng};
use crate::sensing::{gaussian_ensemble, SensingLoss};
use crate::tolerances::{fd_step_order1, fd_step_order2, DERIVED};

/// Number of random directions used by the second-order check.
const FD_DIRECTIONS: usize = 10;

/// Maximum relative error between the analytic derivatives of `obj` at `w`
/// and finite differences: central differences of the value against the
/// gradient (`order = 1`), or second differences along random directions
/// against the Hessian quadratic form (`order = 2`). Errors are normalised
/// by the largest derivative magnitude involved (floored at one).
pub fn fd_check(obj: &dyn Objective, w: &DMatrix<f64>, order: u8, seed: u64) -> Result<f64> {
    crate::error::check_shape("fd_check", w, obj.shape())?;
    fd_core(|x| obj.value(x), || obj.gradient(w), |d| obj.hessian_form(w, d), w, order, seed)
}

/// [`fd_check`] for a plugin function `f(X)` on its own.
pub fn fd_check_function(f: &dyn MatrixFunction, x: &DMatrix<f64>, order: u8, seed: u64) -> Result<f64> {
    crate::error::check_shape("fd_check_function", x, f.dims())?;
    fd_core(|y| f.value(y), || f.gradient(x), |d| f.hessian_bilinear(x, d, d), x, order, seed)
}

fn fd_core(
    value: impl Fn(&DMatrix<f64>) -> Result<f64>,
    gradient: impl Fn() -> Result<DMatrix<f64>>,
    form: impl Fn(&DMatrix<f64>) -> Result<f64>,
    w: &DMatrix<f64>,
    order: u8,
    seed: u64,
) -> Result<f64> {
    let scale = w.norm();
    match order {
        1 => {
            let h = fd_step_order1(scale);
            let grad = gradient()?;
            let mut worst = 0.0_f64;
            let mut magnitude = grad.amax();
            let mut probe = w.clone();
            for k in 0..w.len() {
                let orig = probe[k];
                probe[k] = orig + h;
                let up = value(&probe)?;
                probe[k] = orig - h;
                let down = value(&probe)?;
                probe[k] = orig;
                let fd = (up - down) / (2.0 * h);
                magnitude = magnitude.max(fd.abs());
                worst = worst.max((fd - grad[k]).abs());
            }
            Ok(worst / magnitude.max(1.0))
        }
        2 => {
            let h = fd_step_order2(scale);
            let mut rng = stream_rng(seed, 0);
            let centre = value(w)?;
            let mut worst = 0.0_f64;
            let mut magnitude = 0.0_f64;
            for _ in 0..FD_DIRECTIONS {
                let d = unit_sphere(&mut rng, w.nrows(), w.ncols());
                let exact = form(&d)?;
                let up = value(&(w + &d * h))?;
                let down = value(&(w - &d * h))?;
                let fd = (up - 2.0 * centre + down) / (h * h);
                magnitude = magnitude.max(exact.abs()).max(fd.abs());
                worst = worst.max((fd - exact).abs());
            }
            Ok(worst / magnitude.max(1.0))
        }
        other => Err(Error::Validation(format!("finite-difference order must be 1 or 2, got {other}"))),
    }
}

/// Outcome of one property over a batch of random instances.
#[derive(Clone, Debug, Serialize)]
pub struct PropertyReport {
    pub id: String,
    pub statement: String,
    pub trials: usize,
    pub failures: usize,
    /// Smallest normalised slack observed; negative beyond `-1e-10` fails.
    pub worst_margin: f64,
    /// Trial index of the worst margin; replay with [`replay`].
    pub worst_trial: usize,
    pub seed: u64,
}

impl PropertyReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// A single instance check: returns the slack of the inequality, normalised
/// by the magnitude of its sides (floored at one).
type Check = fn(&SuiteContext, &mut StreamRng) -> Result<f64>;

struct Property {
    id: &'static str,
    statement: &'static str,
    check: Check,
}

const PROPERTIES: &[Property] = &[
    Property {
        id: "balanced_energy_identity",
        statement: "W balanced: ||D_U U^T||^2 + ||D_V V^T||^2 = ||D_U V^T||^2 + ||D_V U^T||^2",
        check: balanced_energy_identity,
    },
    Property {
        id: "regularizer_hessian_psd",
        statement: "W balanced: the Hessian of the balancing regularizer is PSD",
        check: regularizer_hessian_psd,
    },
    Property {
        id: "lifted_identity",
        statement: "mu = 1/2: g(W) = 1/8 ||WW^T - W*W*^T||^2 + 1/4 ||U^T U* - V^T V*||^2",
        check: lifted_identity,
    },
    Property {
        id: "lifted_lower_bound",
        statement: "g(W) >= min(mu/4, 1/8) ||WW^T - W*W*^T||^2 for mu in {0.1, 0.5, 2}",
        check: lifted_lower_bound,
    },
    Property {
        id: "restricted_gradient_deviation",
        statement: "|<grad f(C) - grad f(D) - (C - D), H>| <= c ||C - D|| ||H|| for low-rank C, D, H",
        check: restricted_gradient_deviation,
    },
    Property {
        id: "lifted_gradient_deviation",
        statement: "||grad G(W) - grad g(W)|| <= c ||WW^T - W*W*^T|| ||W||",
        check: lifted_gradient_deviation,
    },
    Property {
        id: "lifted_hessian_deviation",
        statement: "|G''(D,D) - g''(D,D)| <= 2c ||UV^T - X*|| ||D_U D_V^T|| + c ||D_U V^T + U D_V^T||^2",
        check: lifted_hessian_deviation,
    },
    Property {
        id: "psd_trace_bounds",
        statement: "A, B PSD: sigma_min(A) tr(B) <= tr(AB) <= ||A|| tr(B)",
        check: psd_trace_bounds,
    },
    Property {
        id: "product_frobenius_bounds",
        statement: "A r x r, B n x r: sigma_r(A) ||B||_F <= ||B A||_F <= ||A|| ||B||_F",
        check: product_frobenius_bounds,
    },
    Property {
        id: "aligned_regularity",
        statement: "A^T B = B^T A PSD, ||A - B|| <= sigma_r(B)/sqrt2: <(AA^T - BB^T)A, A - B> >= (tr((A-B)^T(A-B)B^T B) + ||AA^T - BB^T||^2)/16",
        check: aligned_regularity,
    },
    Property {
        id: "aligned_residual_bound",
        statement: "A^T B = B^T A PSD: ||(A - B)A^T||^2 <= ||AA^T - BB^T||^2 / (2(sqrt2 - 1))",
        check: aligned_residual_bound,
    },
    Property {
        id: "critical_point_is_global_min",
        statement: "f restricted strongly convex with constant a, grad f(X*) = 0: f(X) - f(X*) >= (a/2) ||X - X*||^2 for rank(X) <= r",
        check: critical_point_is_global_min,
    },
];

/// Identifiers of every property, in suite order.
pub fn property_ids() -> Vec<&'static str> {
    PROPERTIES.iter().map(|p| p.id).collect()
}

/// Sensing instance shared by the deviation properties.
struct SensingInstance {
    gt: GroundTruth,
    loss: Arc<SensingLoss>,
    lifted: GeneralObjective,
    plain: Factorization,
    /// Twice the sampled deviation `max(b - 1, 1 - a)` of the Hessian of
    /// `f` from the identity; doubled because sampling under-estimates it.
    c: f64,
}

struct SuiteContext {
    sensing: Vec<SensingInstance>,
}

const SENSING_INSTANCES: usize = 4;

impl SuiteContext {
    fn build(seed: u64) -> Result<Self> {
        let sensing = (0..SENSING_INSTANCES)
            .map(|k| {
                let mut rng = stream_rng(derive_seed(seed, 0x5e45), k as u64);
                let (n, m, r) = (4 + k % 2, 3 + k / 2, 1 + k % 2);
                let gt = GroundTruth::random(&mut rng, n, m, r, r, 1.0, 2.0)?;
                let op = gaussian_ensemble(n, m, 20 * n * m, derive_seed(seed, k as u64))?;
                let loss = Arc::new(SensingLoss::from_target(Arc::new(op), gt.x_star())?.with_gram());
                let probe = restricted_convexity_probe(loss.as_ref(), r, (4 * r).min(n.min(m)), 500, seed)?;
                let lifted = GeneralObjective::sensing(loss.clone(), r, 0.5)?;
                let plain = Factorization::new(&gt, 0.5)?;
                Ok(SensingInstance { gt, loss, lifted, plain, c: 2.0 * probe.identity_deviation() })
            })
            .collect::<Result<_>>()?;
        Ok(Self { sensing })
    }

    fn pick<'a>(&'a self, rng: &mut StreamRng) -> &'a SensingInstance {
        &self.sensing[rng.random_range(0..self.sensing.len())]
    }
}

fn trial_rng(seed: u64, property: usize, trial: usize) -> StreamRng {
    stream_rng(derive_seed(seed, property as u64), trial as u64)
}

fn lookup(id: &str) -> Result<(usize, &'static Property)> {
    PROPERTIES
        .iter()
        .enumerate()
        .find(|(_, p)| p.id == id)
        .ok_or_else(|| Error::Validation(format!("unknown property {id:?}")))
}

/// Run every property over `trials` random instances each.
pub fn lemma_suite(seed: u64, trials: usize) -> Result<Vec<PropertyReport>> {
    if trials == 0 {
        return Err(Error::Validation("trials must be at least 1".into()));
    }
    let ctx = SuiteContext::build(seed)?;
    PROPERTIES
        .iter()
        .enumerate()
        .map(|(index, property)| run_property(&ctx, index, property, seed, trials))
        .collect()
}

/// Run a single property by id.
pub fn property_suite(id: &str, seed: u64, trials: usize) -> Result<PropertyReport> {
    if trials == 0 {
        return Err(Error::Validation("trials must be at least 1".into()));
    }
    let (index, property) = lookup(id)?;
    run_property(&SuiteContext::build(seed)?, index, property, seed, trials)
}

/// Recompute the margin of one trial.
pub fn replay(id: &str, seed: u64, trial: usize) -> Result<f64> {
    let (index, property) = lookup(id)?;
    let ctx = SuiteContext::build(seed)?;
    (property.check)(&ctx, &mut trial_rng(seed, index, trial))
}

fn run_property(ctx: &SuiteContext, index: usize, property: &Property, seed: u64, trials: usize) -> Result<PropertyReport> {
    let margins: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| (property.check)(ctx, &mut trial_rng(seed, index, t)))
        .collect::<Result<_>>()?;
    let (worst_trial, worst_margin) = margins
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (t, m)| if m < best.1 { (t, m) } else { best });
    Ok(PropertyReport {
        id: property.id.to_string(),
        statement: property.statement.to_string(),
        trials,
        failures: margins.iter().filter(|m| !(**m >= -DERIVED)).count(),
        worst_margin,
        worst_trial,
        seed,
    })
}

fn slack(big: f64, small: f64, scale: f64) -> f64 {
    (big - small) / scale.abs().max(1.0)
}

fn small_dims(rng: &mut StreamRng) -> (usize, usize, usize) {
    let n = rng.random_range(2..=6);
    let m = rng.random_range(2..=6);
    let r = rng.random_range(1..=n.min(m).min(3));
    (n, m, r)
}

/// `U = A S R^T`, `V = B S R^T` with orthonormal `A`, `B`: `U^T U = V^T V`.
fn balanced_point(rng: &mut StreamRng, n: usize, m: usize, r: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let a = random_orthonormal(rng, n, r);
    let b = random_orthonormal(rng, m, r);
    let s = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(r, |_, _| {
        if rng.random::<f64>() < 0.2 {
            0.0
        } else {
            uniform(rng, 0.1, 2.0)
        }
    }));
    let rot = random_orthogonal(rng, r);
    (&a * &s * rot.transpose(), &b * &s * rot.transpose())
}

fn stacked(u: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(u.nrows() + v.nrows(), u.ncols());
    w.rows_mut(0, u.nrows()).copy_from(u);
    w.rows_mut(u.nrows(), v.nrows()).copy_from(v);
    w
}

fn random_instance(rng: &mut StreamRng) -> Result<(GroundTruth, DMatrix<f64>)> {
    let (n, m, r) = small_dims(rng);
    let gt = GroundTruth::random(rng, n, m, r, r, 0.5, 3.0)?;
    let scale = uniform(rng, 0.1, 2.0);
    let w = gaussian_matrix(rng, n + m, r) * scale;
    Ok((gt, w))
}

fn balanced_energy_identity(_: &SuiteContext, rng: &mut StreamRng) -> Result<f64> {
    let (n, m, r) = small_dims(rng);
    let (u, v) = balanced_point(rng, n, m, r);
    let du = gaussian_matrix(rng, n, r);
    let dv = gaussian_matrix(rng, m, r);
    let on = (&du * u.transpose()).norm_squared() + (&dv * v.transpose()).norm_squared();
    let off = (&du * v.transpose()).norm_squared() + (&dv * u.transpose()).norm_squared();
    Ok(-(on - off).abs() / (on + off).max(1.0))
}

fn regularizer_hessian_psd(_: &SuiteContext, rng: &mut StreamRng) -> Result<f64> {
    let (n, m, r) = small_dims(rng);
    let (u, v) = balanced_point(rng, n, m, r);
    let mu = uniform(rng, 0.1, 2.0);
    let w = stacked(&u, &v);
    let lambda = min_hessian_eig(&Regularizer::new(n, m, r, mu)?, &w)?.lambda_min;
    Ok(lambda / (mu * w.norm_squared()).max(1.0))
}

fn lifted_gap(gt: &GroundTruth, w: &DMatrix<f64>) -> (f64, f64) {
    let ws = gt.w_star();
    let gram_gap = (w * w.transpose() - ws.stacked() * ws.stacked().transpose()).norm_squared();
    let n = gt.n();
    let u = w.rows(0, n);
    let v = w.rows(n, gt.m());
    let cross = (u.transpose() * ws.u() - v.transpose() * ws.v()).norm_squared();
    (gram_gap, cross)
}

fn lifted_identity(_: &SuiteContext, rng: &mut StreamRng) -> Result<f64> {
    let (gt, w) = random_instance(rng)?;
    let g = Factorization::new(&gt, 0.5)?.value(&w)?;
    let (gram_gap, cross) = lifted_gap(&gt, &w);
    Ok(-(g - (gram_gap / 8.0 + cross / 4.0)).abs() / g.max(1.0))
}

fn lifted_lower_bound(_: &SuiteContext, rng: &mut StreamRng) -> Result<f64> {
    let mu = [0.1, 0.5, 2.0][rng.random_range(0..3)];
    let (gt, w) = random_instance(rng)?;
    let g = Factorization::new(&gt, mu)?.value(&w)?;
    let (gram_gap, _) = lifted_gap(&gt, &w);
    Ok(slack(g, (mu / 4.0).min(0.125) * gram_gap, g))
}

fn scaled_low_rank(rng: &mut StreamRng, n: usize, m: usize, rank: usize) -> DMatrix<f64> {
    let scale = uniform(rng, 0.1, 3.0);
    low_rank_unit(rng, n, m, rank) * scale
}

fn restricted_gradient_deviation(ctx: &SuiteContext, rng: &mut StreamRng) -> Result<f64> {
    let inst = ctx.pick(rng);
    let (n, m, r) = (inst.gt.n(), inst.gt.m(), inst.gt.rank());
    let c_mat = scaled_low_rank(rng, n, m, r);
    let d_mat = scaled_low_rank(rng, n, m, r);
    let h = scaled_low_rank(rng, n, m, 2 * r);
    let diff = &c_mat - &d_mat;
    let dev = inst.loss.gradient(&c_mat)? - inst.loss.gradient(&d_mat)? - &diff;
    let lhs = linalg::inner(&dev, &h).abs();
    let rhs = inst.c * diff.norm() * h.norm();
    Ok(slack(rhs, lhs, rhs))
}

fn lifted_gradient_deviation(ctx: &SuiteContext, rng: &mut StreamRng) -> Result<f64> {
    let inst = ctx.pick(rng);
    let (rows, r) = (inst.gt.n() + inst.gt.m(), inst.gt.r_model());
    let w = gaussian_matrix(rng, rows, r) * uniform(rng, 0.1, 2.0);
    let lhs = (inst.lifted.gradient(&w)? - inst.plain.gradient(&w)?).norm();
    let (gram_gap, _) = lifted_gap(&inst.gt, &w);
    let rhs = inst.c * gram_gap.sqrt() * spectral_norm(&w);
    Ok(slack(rhs, lhs, rhs))
}

fn lifted_hessian_deviation(ctx: &SuiteContext, rng: &mut StreamRng) -> Result<f64> {
    let inst = ctx.pick(rng);
    let (n, m, r) = (inst.gt.n(), inst.gt.m(), inst.gt.r_model());
    let w = gaussian_matrix(rng, n + m, r) * uniform(rng, 0.1, 2.0);
    let d = gaussian_matrix(rng, n + m, r);
    let lhs = (inst.lifted.hessian_form(&w, &d)? - inst.plain.hessian_form(&w, &d)?).abs();
    let (u, v) = (w.rows(0, n), w.rows(n, m));
    let (du, dv) = (d.rows(0, n), d.rows(n, m));
    let residual = (u * v.transpose() - inst.gt.x_star()).norm();
    let cross = (du * dv.transpose()).norm();
    let lin = (du * v.transpose() + u * dv.transpose()).norm_squared();
    let rhs = 2.0 * inst.c * residual * cross + inst.c * lin;
    Ok(slack(rhs, lhs, rhs))
}

fn random_psd(rng: &mut StreamRng, n: usize) -> DMatrix<f64> {
    let k = rng.random_range(1..=n);
    let g = gaussian_matrix(rng, n, k);
    &g * g.transpose()
}

fn psd_trace_bounds(_: &SuiteContext, rng: &mut StreamRng) -> Result<f64> {
    let n = rng.random_range(1..=8);
    let a = random_psd(rng, n);
    let b = random_psd(rng, n);
    let (eig, _) = sym_eigen(&a);
    let (lo, hi) = (eig[0].max(0.0), eig[n - 1]);
    let (tr_b, tr_ab) = (b.trace(), (&a * &b).trace());
    let scale = hi * tr_b;
    Ok(slack(tr_ab, lo * tr_b, scale).min(slack(hi * tr_b, tr_ab, scale)))
}

fn product_frobenius_bounds(_: &SuiteContext, rng: &mut StreamRng) -> Result<f64> {
    let r = rng.random_range(1..=4);
    let n = rng.random_range(1..=8);
    let a = gaussian_matrix(rng, r, r);
    let b = gaussian_matrix(rng, n, r);
    let s = linalg::singular_values(&a);
    let (prod, bn) = ((&b * &a).norm(), b.norm());
    let scale = s[0] * bn;
    Ok(slack(prod, s[r - 1] * bn, scale).min(slack(s[0] * bn, prod, scale)))
}

/// Rotate `a` onto `b` so that `a^T b` is symmetric PSD.
fn align_onto(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(a * procrustes_matrices(b, a)?.rotation)
}

/// Re-check the alignment hypothesis `A^T B = B^T A ⪰ 0`.
fn check_aligned(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    let cross = a.transpose() * b;
    let scale = cross.norm().max(1.0);
    let asym = (&cross - cross.transpose()).norm();
    let (eig, _) = sym_eigen(&cross);
    if asym > 1e-10 * scale || eig[0] < -1e-10 * scale {
        return Err(Error::Sampler(format!("aligned pair violates the hypothesis (asymmetry {asym:.3e}, min eig {:.3e})", eig[0])));
    }
    Ok(())
}

const ALIGNED_PAIR_ATTEMPTS: usize = 1000;

fn aligned_regularity(_: &SuiteContext, rng: &mut StreamRng) -> Result<f64> {
    let n = rng.random_range(2..=8);
    let r = rng.random_range(1..=n.min(4));
    for _ in 0..ALIGNED_PAIR_ATTEMPTS {
        let b = gaussian_matrix(rng, n, r) * uniform(rng, 0.2, 3.0);
        let sigma_r = linalg::smallest_singular_value(&b);
        let limit = std::f64::consts::FRAC_1_SQRT_2 * sigma_r;
        let e = gaussian_matrix(rng, n, r);
        let e = &e * (rng.random::<f64>() * limit / spectral_norm(&e));
        let a = align_onto(&(&b + e), &b)?;
        if spectral_norm(&(&a - &b)) > limit {
            continue;
        }
        check_aligned(&a, &b)?;
        let diff = &a - &b;
        let gap = &a * a.transpose() - &b * b.transpose();
        let aleph1 = linalg::inner(&(&gap * &a), &diff);
        let aleph2 = (diff.transpose() * &diff * b.transpose() * &b).trace();
        let aleph3 = gap.norm_squared();
        return Ok(slack(aleph1, (aleph2 + aleph3) / 16.0, aleph1.abs() + aleph2 + aleph3));
    }
    Err(Error::Sampler(format!("no aligned pair within the norm ball after {ALIGNED_PAIR_ATTEMPTS} attempts")))
}

fn aligned_residual_bound(_: &SuiteContext, rng: &mut StreamRng) -> Result<f64> {
    let n = rng.random_range(1..=8);
    let r = rng.random_range(1..=4);
    let b = gaussian_matrix(rng, n, r) * uniform(rng, 0.2, 3.0);
    let a0 = gaussian_matrix(rng, n, r) * uniform(rng, 0.2, 3.0);
    let a = align_onto(&a0, &b)?;
    check_aligned(&a, &b)?;
    let lhs = ((&a - &b) * a.transpose()).norm_squared();
    let rhs = (&a * a.transpose() - &b * b.transpose()).norm_squared() / (2.0 * (2f64.sqrt() - 1.0));
    Ok(slack(rhs, lhs, rhs))
}

fn critical_point_is_global_min(_: &SuiteContext, rng: &mut StreamRng) -> Result<f64> {
    let (n, m, r) = small_dims(rng);
    let x_star = scaled_low_rank(rng, n, m, r);
    let (f, a): (Box<dyn MatrixFunction>, f64) = if rng.random::<bool>() {
        (Box::new(HalfSquaredDistance { x_star: x_star.clone() }), 1.0)
    } else {
        let omega = DMatrix::from_fn(n, m, |_, _| uniform(rng, 0.5, 2.0));
        let wq = WeightedQuadratic::new(&omega, x_star.clone())?;
        let a = wq.min_weight_sq();
        (Box::new(wq), a)
    };
    let rank = rng.random_range(1..=r);
    let x = scaled_low_rank(rng, n, m, rank);
    let gap = f.value(&x)? - f.value(&x_star)?;
    let bound = 0.5 * a * (&x - &x_star).norm_squared();
    Ok(slack(gap, bound, gap))
}
