//! Rotation blocks, stacks of rotations, and the product-manifold geometry
//! of `O(d)^n` and `SO(d)^n`.

mod exp;
mod projection;

pub use exp::{skew_exp, skew_expm1, skew_log};
pub use projection::{project_orthogonal, project_special_orthogonal, DEGENERACY_TOL};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SyncError};
use crate::linalg::{block, skew_part, Mat};

/// Tolerance on `|B^T B - I|_F` for a block to count as orthogonal.
pub const ORTHO_TOL: f64 = 1e-10;

/// Relative tolerance accepted when wrapping a matrix as skew-symmetric.
pub const SKEW_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Group {
    O,
    SO,
}

impl Group {
    pub fn project(self, z: &Mat) -> Result<Mat> {
        match self {
            Group::O => project_orthogonal(z),
            Group::SO => project_special_orthogonal(z),
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Group::O => "O",
            Group::SO => "SO",
        }
    }

    pub fn parse(s: &str) -> Option<Group> {
        match s {
            "O" | "o" => Some(Group::O),
            "SO" | "so" => Some(Group::SO),
            _ => None,
        }
    }
}

/// A `d x d` skew-symmetric block.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewBlock(Mat);

impl SkewBlock {
    /// Accepts `m` if it is skew up to [`SKEW_TOL`] and symmetrizes it exactly.
    pub fn new(m: Mat) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(SyncError::Dimension(format!("{}x{} block", m.nrows(), m.ncols())));
        }
        let asym = (&m + m.transpose()).norm();
        if asym > SKEW_TOL * m.norm().max(1.0) {
            return Err(SyncError::Invariant(format!("block is not skew (|M + M^T| = {asym:e})")));
        }
        Ok(SkewBlock(skew_part(&m)))
    }

    pub fn from_skew_part(m: &Mat) -> Self {
        SkewBlock(skew_part(m))
    }

    pub(crate) fn from_mat_unchecked(m: Mat) -> Self {
        SkewBlock(m)
    }

    pub fn zero(d: usize) -> Self {
        SkewBlock(Mat::zeros(d, d))
    }

    pub fn as_mat(&self) -> &Mat {
        &self.0
    }

    pub fn into_mat(self) -> Mat {
        self.0
    }
}

/// `n` orthogonal blocks stacked vertically into an `nd x d` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationStack {
    mat: Mat,
    n: usize,
    d: usize,
    group: Group,
}

impl RotationStack {
    pub fn new(mat: Mat, d: usize, group: Group) -> Result<Self> {
        if d == 0 || mat.ncols() != d || mat.nrows() % d != 0 {
            return Err(SyncError::Dimension(format!(
                "{}x{} is not a stack of {d}x{d} blocks",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let n = mat.nrows() / d;
        let stack = RotationStack { mat, n, d, group };
        for i in 0..n {
            let b = stack.block(i);
            let resid = (b.transpose() * &b - Mat::identity(d, d)).norm();
            if !(resid <= ORTHO_TOL) {
                return Err(SyncError::Invariant(format!(
                    "block {i} orthogonality residual {resid:e}"
                )));
            }
            if group == Group::SO && b.determinant() < 0.0 {
                return Err(SyncError::Invariant(format!("block {i} has determinant -1")));
            }
        }
        Ok(stack)
    }

    pub fn from_blocks(blocks: &[Mat], group: Group) -> Result<Self> {
        let d = blocks
            .first()
            .map(|b| b.nrows())
            .ok_or_else(|| SyncError::InvalidArgument("empty stack".into()))?;
        let mut mat = Mat::zeros(blocks.len() * d, d);
        for (i, b) in blocks.iter().enumerate() {
            if b.shape() != (d, d) {
                return Err(SyncError::Dimension(format!("block {i} shape {:?}", b.shape())));
            }
            mat.rows_mut(i * d, d).copy_from(b);
        }
        Self::new(mat, d, group)
    }

    /// Projects each block of an arbitrary `nd x d` matrix onto the group.
    pub fn project_blocks(mat: &Mat, d: usize, group: Group) -> Result<Self> {
        let n = mat.nrows() / d;
        let mut out = Mat::zeros(n * d, d);
        for i in 0..n {
            out.rows_mut(i * d, d).copy_from(&group.project(&block(mat, i, d))?);
        }
        Self::new(out, d, group)
    }

    pub fn identity(n: usize, d: usize, group: Group) -> Self {
        let mut mat = Mat::zeros(n * d, d);
        for i in 0..n {
            mat.rows_mut(i * d, d).fill_with_identity();
        }
        RotationStack { mat, n, d, group }
    }

    pub(crate) fn from_mat_unchecked(mat: Mat, d: usize, group: Group) -> Self {
        let n = mat.nrows() / d;
        RotationStack { mat, n, d, group }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn group(&self) -> Group {
        self.group
    }

    pub fn as_mat(&self) -> &Mat {
        &self.mat
    }

    pub fn block(&self, i: usize) -> Mat {
        block(&self.mat, i, self.d)
    }

    /// Right multiplication by a common `d x d` matrix; the group tag is
    /// downgraded to `O` when `q` is a reflection.
    pub fn right_mul(&self, q: &Mat) -> RotationStack {
        let group = if self.group == Group::SO && q.determinant() < 0.0 {
            Group::O
        } else {
            self.group
        };
        RotationStack::from_mat_unchecked(&self.mat * q, self.d, group)
    }

    pub fn max_orthogonality_residual(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                let b = self.block(i);
                (b.transpose() * &b - Mat::identity(self.d, self.d)).norm()
            })
            .fold(0.0, f64::max)
    }

    /// Re-projects every block onto the group (polar factor), used to clear
    /// rounding drift after many exponential steps.
    pub fn reproject(&mut self) -> Result<()> {
        for i in 0..self.n {
            let p = project_orthogonal(&self.block(i))?;
            self.mat.rows_mut(i * self.d, self.d).copy_from(&p);
        }
        Ok(())
    }

    pub fn determinants(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.block(i).determinant()).collect()
    }
}

/// Tangent vector at a stack `G`, stored through its skew coordinates
/// `E_i = G_i^T H_i`. The trace inner product of tangent vectors equals the
/// Frobenius inner product of their skew coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewStack {
    mat: Mat,
    d: usize,
    horizontal: bool,
}

impl SkewStack {
    pub fn zeros(n: usize, d: usize) -> Self {
        SkewStack { mat: Mat::zeros(n * d, d), d, horizontal: true }
    }

    /// Takes the skew part of every block of `mat`.
    pub fn from_blocks_skew_part(mat: &Mat, d: usize) -> Self {
        let n = mat.nrows() / d;
        let mut out = Mat::zeros(n * d, d);
        for i in 0..n {
            out.rows_mut(i * d, d).copy_from(&skew_part(&block(mat, i, d)));
        }
        SkewStack { mat: out, d, horizontal: false }
    }

    pub fn from_blocks(blocks: &[SkewBlock]) -> Self {
        let d = blocks.first().map(|b| b.as_mat().nrows()).unwrap_or(0);
        let mut mat = Mat::zeros(blocks.len() * d, d);
        for (i, b) in blocks.iter().enumerate() {
            mat.rows_mut(i * d, d).copy_from(b.as_mat());
        }
        SkewStack { mat, d, horizontal: false }
    }

    pub(crate) fn from_mat_unchecked(mat: Mat, d: usize, horizontal: bool) -> Self {
        SkewStack { mat, d, horizontal }
    }

    pub fn n(&self) -> usize {
        if self.d == 0 {
            0
        } else {
            self.mat.nrows() / self.d
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn as_mat(&self) -> &Mat {
        &self.mat
    }

    pub fn block(&self, i: usize) -> Mat {
        block(&self.mat, i, self.d)
    }

    pub fn is_horizontal(&self) -> bool {
        self.horizontal
    }


    pub fn dot(&self, other: &SkewStack) -> f64 {
        self.mat.dot(&other.mat)
    }

    pub fn norm(&self) -> f64 {
        self.mat.norm()
    }

    pub fn inf_norm(&self) -> f64 {
        crate::linalg::block_inf_norm(&self.mat, self.d)
    }

    pub fn scaled(&self, s: f64) -> SkewStack {
        SkewStack { mat: &self.mat * s, d: self.d, horizontal: self.horizontal }
    }

    pub fn add(&self, other: &SkewStack) -> SkewStack {
        SkewStack {
            mat: &self.mat + &other.mat,
            d: self.d,
            horizontal: self.horizontal && other.horizontal,
        }
    }

    /// Sum of the skew coordinates; zero exactly for horizontal vectors.
    pub fn block_sum(&self) -> Mat {
        let mut s = Mat::zeros(self.d, self.d);
        for i in 0..self.n() {
            s += self.mat.rows(i * self.d, self.d);
        }
        s
    }

    /// Ambient representation `H_i = G_i E_i`.
    pub fn embed(&self, g: &RotationStack) -> Mat {
        let d = self.d;
        let mut out = Mat::zeros(self.mat.nrows(), d);
        for i in 0..self.n() {
            out.rows_mut(i * d, d).copy_from(&(g.block(i) * self.block(i)));
        }
        out
    }
}

/// Orthogonal projection of an ambient `nd x d` matrix onto the tangent space
/// at `g`: `X - symblockdiag(X G^T) G`, returned in skew coordinates.
pub fn tangent_project(g: &RotationStack, x: &Mat) -> SkewStack {
    let d = g.d();
    let mut out = Mat::zeros(g.n() * d, d);
    for i in 0..g.n() {
        let gx = g.block(i).transpose() * block(x, i, d);
        out.rows_mut(i * d, d).copy_from(&skew_part(&gx));
    }
    SkewStack::from_mat_unchecked(out, d, false)
}

/// `Exp_G(t xi)_i = G_i exp(t E_i)`.
pub fn exp_map_stack(g: &RotationStack, xi: &SkewStack, t: f64) -> RotationStack {
    exp_map_with_step(g, xi, t).0
}

/// Like [`exp_map_stack`] and also returns `Exp_G(t xi) - G` computed
/// without cancellation.
pub fn exp_map_with_step(g: &RotationStack, xi: &SkewStack, t: f64) -> (RotationStack, Mat) {
    let d = g.d();
    let mut step = Mat::zeros(g.n() * d, d);
    for i in 0..g.n() {
        let e = xi.block(i) * t;
        step.rows_mut(i * d, d).copy_from(&(g.block(i) * skew_expm1(&e)));
    }
    let next = RotationStack::from_mat_unchecked(g.as_mat() + &step, d, g.group());
    (next, step)
}

/// Geodesic distance on the product manifold:
/// `sqrt(sum_i |log(X_i^T Y_i)|_F^2)`.
pub fn riemannian_dist_stack(x: &RotationStack, y: &RotationStack) -> Result<f64> {
    if x.n() != y.n() || x.d() != y.d() {
        return Err(SyncError::Dimension("stacks differ in shape".into()));
    }
    let mut sq = 0.0;
    for i in 0..x.n() {
        let rel = x.block(i).transpose() * y.block(i);
        sq += skew_log(&rel)?.as_mat().norm_squared();
    }
    Ok(sq.sqrt())
}
