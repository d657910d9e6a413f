use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::sym_eigen;
use crate::objectives::Objective;
use crate::rng::unit_sphere;
use crate::tolerances::{DENSE_HESSIAN_CAP, ITERATIVE_EIG};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EigMode {
    /// Dense when `(n+m) r <= DENSE_HESSIAN_CAP`, iterative otherwise.
    Auto,
    Exact,
    Iterative,
}

/// Smallest Hessian eigenvalue and a unit eigendirection.
#[derive(Clone, Debug)]
pub struct EigenPair {
    pub lambda_min: f64,
    pub direction: DMatrix<f64>,
    pub mode: EigMode,
}

/// Settings for the shifted power iteration.
#[derive(Clone, Copy, Debug)]
pub struct IterativeOptions {
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for IterativeOptions {
    fn default() -> Self {
        Self { max_iters: 200_000, tol: ITERATIVE_EIG, seed: 0 }
    }
}

fn basis(rows: usize, cols: usize, k: usize) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(rows, cols);
    e[k] = 1.0;
    e
}

/// Dense Hessian in column-major coordinates of the parameter, assembled
/// from the bilinear form on basis pairs.
pub fn dense_hessian(obj: &dyn Objective, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (rows, cols) = obj.shape();
    let dim = rows * cols;
    let mut h = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        let ei = basis(rows, cols, i);
        for j in i..dim {
            let v = obj.hessian_bilinear(w, &ei, &basis(rows, cols, j))?;
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    Ok(h)
}

pub fn min_hessian_eig(obj: &dyn Objective, w: &DMatrix<f64>) -> Result<EigenPair> {
    min_hessian_eig_with(obj, w, EigMode::Auto, IterativeOptions::default())
}

pub fn min_hessian_eig_with(
    obj: &dyn Objective,
    w: &DMatrix<f64>,
    mode: EigMode,
    opts: IterativeOptions,
) -> Result<EigenPair> {
    let (rows, cols) = obj.shape();
    let dim = rows * cols;
    let exact = match mode {
        EigMode::Exact => {
            if dim > DENSE_HESSIAN_CAP {
                return Err(Error::Resource(format!("dense Hessian of dimension {dim} exceeds cap {DENSE_HESSIAN_CAP}")));
            }
            true
        }
        EigMode::Iterative => false,
        EigMode::Auto => dim <= DENSE_HESSIAN_CAP,
    };
    if exact {
        let h = dense_hessian(obj, w)?;
        let (values, vectors) = sym_eigen(&h);
        let direction = DMatrix::from_column_slice(rows, cols, vectors.column(0).as_slice());
        return Ok(EigenPair { lambda_min: values[0], direction, mode: EigMode::Exact });
    }
    shifted_power(obj, w, opts)
}

fn rayleigh(obj: &dyn Objective, w: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
    let hv = obj.hessian_vector(w, v)?;
    Ok((v.dot(&hv), hv))
}

/// Power iteration on `s I - H` with `s` above the spectrum; converges to
/// the bottom eigenpair of `H`.
fn shifted_power(obj: &dyn Objective, w: &DMatrix<f64>, opts: IterativeOptions) -> Result<EigenPair> {
    let (rows, cols) = obj.shape();
    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);

    // crude bound on the spectral radius
    let mut v = unit_sphere(&mut rng, rows, cols);
    let mut radius = 0.0_f64;
    for _ in 0..100 {
        let hv = obj.hessian_vector(w, &v)?;
        let norm = hv.norm();
        if norm == 0.0 {
            break;
        }
        radius = radius.max(norm);
        v = hv / norm;
    }
    let shift = 1.1 * radius + f64::MIN_POSITIVE.sqrt();

    let mut v = unit_sphere(&mut rng, rows, cols);
    let mut best = f64::INFINITY;
    for _ in 0..opts.max_iters {
        let (rho, hv) = rayleigh(obj, w, &v)?;
        best = best.min(rho);
        let residual = (&hv - &v * rho).norm();
        if residual <= opts.tol * rho.abs().max(1.0) {
            return Ok(EigenPair { lambda_min: rho, direction: v, mode: EigMode::Iterative });
        }
        let next = &v * shift - hv;
        let norm = next.norm();
        if norm == 0.0 {
            return Ok(EigenPair { lambda_min: rho, direction: v, mode: EigMode::Iterative });
        }
        v = next / norm;
    }
    Err(Error::Convergence { iterations: opts.max_iters, estimate: best })
}
