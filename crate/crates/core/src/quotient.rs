//! Geometry of the quotient `O(d)^n / O(d)` for the objective
//! `f(G) = tr(G^T C G)`: gradient, Hessian, horizontal projection and
//! distances between equivalence classes.
//!
//! `S(G) = symblockdiag(C G G^T) - C` is never formed; every product with it
//! goes through `C G` and the diagonal blocks of `C G G^T`.

use crate::error::{Result, SyncError};
use crate::linalg::{block, frob_dot, nuclear_norm, skew_part, sym_part, Mat};
use crate::manifold::{
    project_orthogonal, skew_exp, skew_log, tangent_project, Group, RotationStack, SkewBlock,
    SkewStack, SKEW_TOL,
};

/// Symmetric parts of the diagonal `d x d` blocks of an `nd x nd` matrix,
/// returned stacked as `nd x d`.
pub fn symblockdiag(m: &Mat, d: usize) -> Mat {
    let n = m.nrows() / d;
    let mut out = Mat::zeros(n * d, d);
    for i in 0..n {
        let b = m.view((i * d, i * d), (d, d)).into_owned();
        out.rows_mut(i * d, d).copy_from(&sym_part(&b));
    }
    out
}

/// Diagonal blocks of `C G G^T`, symmetrized, without forming `C G G^T`.
pub fn symblockdiag_cggt(cg: &Mat, g: &RotationStack) -> Mat {
    let d = g.d();
    let mut out = Mat::zeros(g.n() * d, d);
    for i in 0..g.n() {
        let b = block(cg, i, d) * g.block(i).transpose();
        out.rows_mut(i * d, d).copy_from(&sym_part(&b));
    }
    out
}

pub fn objective(c: &Mat, g: &RotationStack) -> f64 {
    frob_dot(g.as_mat(), &(c * g.as_mat()))
}

/// `f(a) - f(b)` for same-shaped stacks, free of cancellation.
pub fn objective_difference(c: &Mat, a: &Mat, b: &Mat) -> f64 {
    crate::linalg::quad_form_difference(c, a, b)
}

/// Riemannian gradient `-2 S(G) G`; its skew coordinates are
/// `2 skew(G_i^T (C G)_i)`. Always horizontal since `G^T C G` is symmetric.
pub fn riemannian_grad(c: &Mat, g: &RotationStack) -> SkewStack {
    let cg = c * g.as_mat();
    grad_from_cg(&cg, g)
}

pub(crate) fn grad_from_cg(cg: &Mat, g: &RotationStack) -> SkewStack {
    let d = g.d();
    let mut out = Mat::zeros(g.n() * d, d);
    for i in 0..g.n() {
        let m = g.block(i).transpose() * block(cg, i, d);
        out.rows_mut(i * d, d).copy_from(&(skew_part(&m) * 2.0));
    }
    SkewStack::from_mat_unchecked(out, d, true)
}

/// `(I - G G^T / n) eta`: removes the mean of the skew coordinates.
pub fn horizontal_project(g: &RotationStack, eta: &SkewStack) -> Result<SkewStack> {
    if eta.n() != g.n() || eta.d() != g.d() {
        return Err(SyncError::Dimension("tangent vector does not match stack".into()));
    }
    let d = g.d();
    let n = g.n();
    for i in 0..n {
        let b = eta.block(i);
        let asym = (&b + b.transpose()).norm();
        if asym > SKEW_TOL * b.norm().max(1.0) {
            return Err(SyncError::Invariant(format!("block {i} is not tangent")));
        }
    }
    Ok(remove_mean(eta.as_mat(), n, d))
}

fn remove_mean(e: &Mat, n: usize, d: usize) -> SkewStack {
    let mut mean = Mat::zeros(d, d);
    for i in 0..n {
        mean += e.rows(i * d, d);
    }
    mean /= n as f64;
    let mut out = e.clone();
    for i in 0..n {
        let mut rows = out.rows_mut(i * d, d);
        rows -= &mean;
    }
    SkewStack::from_mat_unchecked(out, d, true)
}

/// Riemannian Hessian on the quotient applied to a horizontal vector:
/// `(I - G G^T / n) Proj_T(-2 S(G) H)`.
pub fn hess_vec(c: &Mat, g: &RotationStack, h: &SkewStack) -> SkewStack {
    let cg = c * g.as_mat();
    hess_vec_with_cg(c, &cg, g, h)
}

pub(crate) fn hess_vec_with_cg(c: &Mat, cg: &Mat, g: &RotationStack, h: &SkewStack) -> SkewStack {
    let d = g.d();
    let n = g.n();
    let amb = h.embed(g);
    let sym = symblockdiag_cggt(cg, g);
    let mut sh = -(c * &amb);
    for i in 0..n {
        let add = block(&sym, i, d) * block(&amb, i, d);
        let mut rows = sh.rows_mut(i * d, d);
        rows += &add;
    }
    let tangent = tangent_project(g, &(sh * -2.0));
    remove_mean(tangent.as_mat(), n, d)
}

/// `tr(H^T S(G) H) = sum_i tr(E_i^T G_i^T (C G)_i E_i) - <H, C H>`, which
/// equals `-<Hess H, H> / 2` for horizontal `H`.
pub fn hess_quadratic(c: &Mat, g: &RotationStack, h: &SkewStack) -> f64 {
    let d = g.d();
    let cg = c * g.as_mat();
    let amb = h.embed(g);
    let mut diag = 0.0;
    for i in 0..g.n() {
        let m = g.block(i).transpose() * block(&cg, i, d);
        let e = h.block(i);
        diag += (e.transpose() * m * e).trace();
    }
    diag - frob_dot(&amb, &(c * &amb))
}

/// Best global alignment `q = argmin_Q |X - Y Q|_F` over `O(d)` and the
/// resulting distances between the classes `[X]` and `[Y]`.
#[derive(Debug, Clone)]
pub struct Alignment {
    pub q: Mat,
    pub dist_f: f64,
    /// `max_i |X_i - Y_i q|_F`, an upper surrogate for the class
    /// infinity-distance.
    pub dist_inf: f64,
}

/// Works for any `nd x d` matrices, not only stacks of orthogonal blocks.
pub fn procrustes_align(x: &Mat, y: &Mat) -> Result<Alignment> {
    if x.shape() != y.shape() {
        return Err(SyncError::Dimension(format!("{:?} vs {:?}", x.shape(), y.shape())));
    }
    let d = x.ncols();
    let q = project_orthogonal(&(y.transpose() * x))?;
    let resid = x - y * &q;
    Ok(Alignment {
        dist_f: resid.norm(),
        dist_inf: crate::linalg::block_inf_norm(&resid, d),
        q,
    })
}

/// `min_Q |X - Y Q|_F` via `|X|^2 + |Y|^2 - 2 |Y^T X|_*`. Loses accuracy near
/// zero through cancellation; used as a cross-check of [`procrustes_align`].
pub fn dist_f_nuclear(x: &Mat, y: &Mat) -> f64 {
    let sq = x.norm_squared() + y.norm_squared() - 2.0 * nuclear_norm(&(y.transpose() * x));
    sq.max(0.0).sqrt()
}

pub const QUOTIENT_DIST_STEPS: usize = 50;
pub const QUOTIENT_DIST_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct QuotientDistance {
    pub value: f64,
    pub q: Mat,
    pub converged: bool,
    pub iterations: usize,
}

/// Geodesic distance between classes, `min_Q d(X Q, Y)`. The minimizer is
/// the bi-invariant mean of the relative rotations `X_i^T Y_i`; it is seeded
/// at the Procrustes alignment and refined by Riemannian gradient steps of
/// length `1/n`.
pub fn quotient_riem_dist(x: &RotationStack, y: &RotationStack) -> Result<QuotientDistance> {
    if x.n() != y.n() || x.d() != y.d() {
        return Err(SyncError::Dimension("stacks differ in shape".into()));
    }
    let n = x.n();
    let d = x.d();
    let rel: Vec<Mat> = (0..n).map(|i| x.block(i).transpose() * y.block(i)).collect();
    let sign = rel[0].determinant().signum();
    if rel.iter().any(|m| m.determinant().signum() != sign) {
        return Err(SyncError::WrongComponent(-1.0));
    }
    // Q must share the component of the relative rotations
    let seed = procrustes_align(y.as_mat(), x.as_mat())?.q;
    let mut q = if seed.determinant().signum() == sign {
        seed
    } else {
        nearest_with_det(&(x.as_mat().transpose() * y.as_mat()), sign)?
    };

    let cost = |q: &Mat| -> Result<(f64, Mat)> {
        let mut sum = Mat::zeros(d, d);
        let mut sq = 0.0;
        for m in &rel {
            let l = skew_log(&(q.transpose() * m))?.into_mat();
            sq += l.norm_squared();
            sum += l;
        }
        Ok((sq, sum))
    };

    let mut converged = false;
    let mut iterations = 0;
    let (mut sq, mut sum) = cost(&q)?;
    for _ in 0..QUOTIENT_DIST_STEPS {
        if sum.norm() / n as f64 <= QUOTIENT_DIST_TOL {
            converged = true;
            break;
        }
        let step = SkewBlock::from_skew_part(&(&sum / n as f64));
        let cand = &q * skew_exp(&step);
        let (cand_sq, cand_sum) = cost(&cand)?;
        q = cand;
        sq = cand_sq;
        sum = cand_sum;
        iterations += 1;
    }
    if !converged && sum.norm() / n as f64 <= QUOTIENT_DIST_TOL {
        converged = true;
    }
    let mut value = sq.sqrt();
    if sign > 0.0 {
        // Q = I is always a candidate within the identity component
        if let Ok(direct) = crate::manifold::riemannian_dist_stack(x, y) {
            if direct < value {
                value = direct;
                q = Mat::identity(d, d);
            }
        }
    }
    Ok(QuotientDistance { value, q, converged, iterations })
}

fn nearest_with_det(z: &Mat, sign: f64) -> Result<Mat> {
    if sign > 0.0 {
        return Group::SO.project(z);
    }
    // reflect, project onto SO(d), reflect back
    let d = z.nrows();
    let mut r = Mat::identity(d, d);
    r[(d - 1, d - 1)] = -1.0;
    Ok(Group::SO.project(&(z * &r))? * r)
}
