//! Small dense helpers shared by the geometry and estimator modules.
//!
//! Stacks of `n` square `d x d` blocks are stored as one `nd x d` matrix.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub type Mat = DMatrix<f64>;

/// Largest `nd` for which operator norms use a dense symmetric eigensolve.
pub const DENSE_EIG_LIMIT: usize = 2000;

pub fn skew_part(m: &Mat) -> Mat {
    (m - m.transpose()) * 0.5
}

pub fn sym_part(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

pub fn block(stack: &Mat, i: usize, d: usize) -> Mat {
    stack.rows(i * d, d).into_owned()
}

pub fn set_block(stack: &mut Mat, i: usize, d: usize, b: &Mat) {
    stack.rows_mut(i * d, d).copy_from(b);
}

/// Max over blocks of the block Frobenius norm.
pub fn block_inf_norm(stack: &Mat, d: usize) -> f64 {
    let n = stack.nrows() / d;
    (0..n)
        .map(|i| stack.rows(i * d, d).norm())
        .fold(0.0, f64::max)
}

pub fn frob_dot(a: &Mat, b: &Mat) -> f64 {
    a.dot(b)
}

pub fn nuclear_norm(m: &Mat) -> f64 {
    m.clone().svd(false, false).singular_values.sum()
}

pub fn singular_values(m: &Mat) -> DVector<f64> {
    m.clone().svd(false, false).singular_values
}

/// Spectral norm of a symmetric matrix.
pub fn sym_op_norm(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    if m.nrows() <= DENSE_EIG_LIMIT {
        let eig = SymmetricEigen::new(m.clone());
        eig.eigenvalues.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    } else {
        power_op_norm(m, 1e-12, 5000)
    }
}

/// Power iteration on `m^2` for the spectral norm of a symmetric matrix.
pub fn power_op_norm(m: &Mat, tol: f64, max_iter: usize) -> f64 {
    let n = m.nrows();
    // fixed, non-degenerate start so results are reproducible
    let mut v = DVector::from_fn(n, |i, _| 1.0 + ((i * 7919) % 101) as f64 / 101.0);
    v.normalize_mut();
    let mut est = 0.0;
    for _ in 0..max_iter {
        let w = m * (m * &v);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = norm.sqrt();
        v = w / norm;
        if (next - est).abs() <= tol * next.max(1.0) {
            return next;
        }
        est = next;
    }
    est
}

/// Symmetric eigendecomposition with eigenvalues sorted in descending order.
pub fn sorted_sym_eigen(m: &Mat) -> (DVector<f64>, Mat) {
    let eig = SymmetricEigen::new(m.clone());
    let k = eig.eigenvalues.len();
    let mut idx: Vec<usize> = (0..k).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = DVector::from_fn(k, |i, _| eig.eigenvalues[idx[i]]);
    let vecs = Mat::from_fn(m.nrows(), k, |r, c| eig.eigenvectors[(r, idx[c])]);
    (vals, vecs)
}

/// `tr(A^T M A) - tr(B^T M B)` for symmetric `M`, computed without
/// cancellation as `tr((A - B)^T M (A + B))`.
pub fn quad_form_difference(m: &Mat, a: &Mat, b: &Mat) -> f64 {
    let diff = a - b;
    let sum = a + b;
    frob_dot(&diff, &(m * sum))
}
