//! Small dense helpers on top of nalgebra: gauge-fixed SVD, sorted
//! symmetric eigendecomposition, norms.

use nalgebra::{DMatrix, DVector};

/// Thin SVD `M = U diag(s) V^T` with `s` sorted nonincreasing and the sign
/// of each singular pair fixed so the largest-magnitude entry of every left
/// singular vector is positive.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub v: DMatrix<f64>,
}

pub fn svd(m: &DMatrix<f64>) -> Svd {
    let k = m.nrows().min(m.ncols());
    if k == 0 {
        return Svd {
            u: DMatrix::zeros(m.nrows(), 0),
            s: Vec::new(),
            v: DMatrix::zeros(m.ncols(), 0),
        };
    }
    let raw = m.clone().svd(true, true);
    let u_raw = raw.u.expect("left singular vectors requested");
    let v_raw = raw.v_t.expect("right singular vectors requested").transpose();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| raw.singular_values[b].total_cmp(&raw.singular_values[a]));

    let mut u = DMatrix::zeros(m.nrows(), k);
    let mut v = DMatrix::zeros(m.ncols(), k);
    let mut s = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        let mut uc = u_raw.column(src).into_owned();
        let mut vc = v_raw.column(src).into_owned();
        let pivot = uc
            .iter()
            .copied()
            .fold(0.0_f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if pivot < 0.0 {
            uc.neg_mut();
            vc.neg_mut();
        }
        u.set_column(dst, &uc);
        v.set_column(dst, &vc);
        s.push(raw.singular_values[src].max(0.0));
    }
    Svd { u, s, v }
}

impl Svd {
    /// `U diag(s) V^T`.
    pub fn recompose(&self) -> DMatrix<f64> {
        let mut scaled = self.u.clone();
        for (j, s) in self.s.iter().enumerate() {
            scaled.column_mut(j).scale_mut(*s);
        }
        scaled * self.v.transpose()
    }
}

/// Singular values sorted nonincreasing.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows().min(m.ncols()) == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Smallest of the `min(rows, cols)` singular values. For a stacked factor
/// `W` with `r` columns this is `sigma_r(W)`.
pub fn smallest_singular_value(m: &DMatrix<f64>) -> f64 {
    singular_values(m).last().copied().unwrap_or(0.0)
}

/// Eigendecomposition of a symmetric matrix, eigenvalues ascending, the
/// eigenvectors as matching columns.
pub fn sym_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Unit eigenvector of the smallest eigenvalue of a symmetric matrix.
pub fn bottom_eigenvector(m: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let (values, vectors) = sym_eigen(m);
    (values[0], vectors.column(0).into_owned())
}

/// Frobenius inner product.
pub fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.dot(b)
}

/// `||M^T M - I||_F`, the departure from orthonormal columns.
pub fn orthonormality_defect(m: &DMatrix<f64>) -> f64 {
    let k = m.ncols();
    (m.transpose() * m - DMatrix::identity(k, k)).norm()
}

pub fn is_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|x| x.is_finite())
}

/// Row-major flattening of a matrix.
pub fn to_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}
