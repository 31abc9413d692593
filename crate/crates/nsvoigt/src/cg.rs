//! Preconditioned conjugate gradients over velocity and scalar fields.
//!
//! Reductions run in a fixed sequential order, so solves are bit-reproducible
//! for identical inputs.

use crate::domain::Grid;
use crate::field::{scalar_dot, vector_dot, Buf, VectorField};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct CgOptions {
    /// Absolute tolerance on the residual L2 norm.
    pub tol_abs: f64,
    /// Relative tolerance against the initial residual norm.
    pub tol_rel: f64,
    pub max_iter: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions { tol_abs: 1e-13, tol_rel: 1e-13, max_iter: 500 }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct CgStats {
    pub iterations: usize,
    pub residual: f64,
}

/// CG on the velocity space. `apply` must be symmetric positive definite and
/// `precond` symmetric positive definite as well (identity if `None`-like).
pub fn solve_vector<A, P>(
    grid: &Grid,
    apply: A,
    precond: P,
    b: &VectorField,
    x0: &VectorField,
    opts: CgOptions,
    label: &'static str,
) -> Result<(VectorField, CgStats)>
where
    A: Fn(&VectorField) -> VectorField,
    P: Fn(&VectorField) -> VectorField,
{
    let mut x = x0.clone();
    let ax = apply(&x);
    let mut r = VectorField::lin_comb(1.0, b, -1.0, &ax);
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = vector_dot(grid, &r, &z);
    let r0 = vector_dot(grid, &r, &r).sqrt();
    let target = opts.tol_abs.max(opts.tol_rel * r0);
    let mut stats = CgStats { iterations: 0, residual: r0 };
    if r0 <= target {
        return Ok((x, stats));
    }
    for it in 1..=opts.max_iter {
        let ap = apply(&p);
        let pap = vector_dot(grid, &p, &ap);
        if pap <= 0.0 {
            return Err(Error::SolverDiverged { solver: label, residual: stats.residual, iterations: it });
        }
        let alpha = rz / pap;
        x.axpy(alpha, &p);
        r.axpy(-alpha, &ap);
        let rnorm = vector_dot(grid, &r, &r).sqrt();
        stats = CgStats { iterations: it, residual: rnorm };
        if rnorm <= target {
            return Ok((x, stats));
        }
        z = precond(&r);
        let rz_new = vector_dot(grid, &r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        let mut p_new = z.clone();
        p_new.axpy(beta, &p);
        p = p_new;
    }
    Err(Error::SolverDiverged { solver: label, residual: stats.residual, iterations: opts.max_iter })
}

/// CG on cell-centred scalars.
pub fn solve_scalar<A, P>(
    grid: &Grid,
    apply: A,
    precond: P,
    b: &Buf,
    x0: &Buf,
    opts: CgOptions,
    label: &'static str,
) -> Result<(Buf, CgStats)>
where
    A: Fn(&Buf) -> Buf,
    P: Fn(&Buf) -> Buf,
{
    let mut x = x0.clone();
    let ax = apply(&x);
    let mut r = b.clone();
    r.axpy(-1.0, &ax);
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = scalar_dot(grid, &r, &z);
    let r0 = scalar_dot(grid, &r, &r).sqrt();
    let target = opts.tol_abs.max(opts.tol_rel * r0);
    let mut stats = CgStats { iterations: 0, residual: r0 };
    if r0 <= target {
        return Ok((x, stats));
    }
    for it in 1..=opts.max_iter {
        let ap = apply(&p);
        let pap = scalar_dot(grid, &p, &ap);
        if pap <= 0.0 {
            return Err(Error::SolverDiverged { solver: label, residual: stats.residual, iterations: it });
        }
        let alpha = rz / pap;
        x.axpy(alpha, &p);
        r.axpy(-alpha, &ap);
        let rnorm = scalar_dot(grid, &r, &r).sqrt();
        stats = CgStats { iterations: it, residual: rnorm };
        if rnorm <= target {
            return Ok((x, stats));
        }
        z = precond(&r);
        let rz_new = scalar_dot(grid, &r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        let mut p_new = z.clone();
        p_new.axpy(beta, &p);
        p = p_new;
    }
    Err(Error::SolverDiverged { solver: label, residual: stats.residual, iterations: opts.max_iter })
}
