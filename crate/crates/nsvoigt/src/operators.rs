//! Second-order staggered-grid operators.
//!
//! The deformation tensor `D v` and the tensor divergence are implemented so
//! that `<div s, v> = -<s, D v>` holds to round-off for every symmetric `s`
//! and every no-slip `v` (with the tensor inner product of [`crate::field`]).
//! Likewise `<G p, v> = -<p, div v>`. The Voigt operator
//! `M v = v - alpha * div(ell . D v)` inherits symmetry and positive
//! definiteness directly from that adjointness.
//!
//! Wall handling: tangential velocity components use odd ghost reflection
//! (no-slip), wall-normal components carry explicit zero dofs on the walls.

use crate::domain::{AxisBc, Grid};
use crate::field::{average_to, Buf, Layout, TensorField, VectorField};
use crate::{Error, Result};

#[inline]
fn wrap_dec(i: usize, n: usize) -> usize {
    if i == 0 {
        n - 1
    } else {
        i - 1
    }
}

#[inline]
fn wrap_inc(i: usize, n: usize) -> usize {
    if i + 1 == n {
        0
    } else {
        i + 1
    }
}

/// Backward difference of a cell-centred buffer along `axis`, evaluated at
/// the node points of `out_layout`; odd ghost reflection at walls.
fn node_diff_of_centers(
    grid: &Grid,
    src: &Buf,
    axis: usize,
    out_layout: Layout,
    out: &mut [f64],
    scale: f64,
) {
    let inv = scale / grid.spacing[axis];
    let n = grid.cells[axis];
    let periodic = grid.bc[axis] == AxisBc::Periodic;
    let mut lin = 0usize;
    for i0 in 0..out_layout.dims[0] {
        for i1 in 0..out_layout.dims[1] {
            for i2 in 0..out_layout.dims[2] {
                let idx = [i0, i1, i2];
                let i = idx[axis];
                let v = if periodic {
                    let mut hi = idx;
                    hi[axis] = i % n;
                    let mut lo = idx;
                    lo[axis] = wrap_dec(i, n);
                    src.at(hi) - src.at(lo)
                } else if i == 0 {
                    let mut hi = idx;
                    hi[axis] = 0;
                    2.0 * src.at(hi)
                } else if i == n {
                    let mut lo = idx;
                    lo[axis] = n - 1;
                    -2.0 * src.at(lo)
                } else {
                    let mut hi = idx;
                    hi[axis] = i;
                    let mut lo = idx;
                    lo[axis] = i - 1;
                    src.at(hi) - src.at(lo)
                };
                out[lin] += v * inv;
                lin += 1;
            }
        }
    }
}

/// Forward difference of a node buffer along `axis`, evaluated at the
/// cell-centred points of `out_layout`.
fn center_diff_of_nodes(
    grid: &Grid,
    src: &Buf,
    axis: usize,
    out_layout: Layout,
    out: &mut [f64],
    scale: f64,
) {
    let inv = scale / grid.spacing[axis];
    let n = grid.cells[axis];
    let periodic = grid.bc[axis] == AxisBc::Periodic;
    let mut lin = 0usize;
    for i0 in 0..out_layout.dims[0] {
        for i1 in 0..out_layout.dims[1] {
            for i2 in 0..out_layout.dims[2] {
                let idx = [i0, i1, i2];
                let i = idx[axis];
                let mut hi = idx;
                hi[axis] = if periodic { wrap_inc(i, n) } else { i + 1 };
                let mut lo = idx;
                lo[axis] = i;
                out[lin] += (src.at(hi) - src.at(lo)) * inv;
                lin += 1;
            }
        }
    }
}

/// Deformation tensor `D v = (grad v + grad v^T) / 2`.
pub fn deformation(grid: &Grid, v: &VectorField) -> Result<TensorField> {
    v.check_grid(grid)?;
    let mut out = TensorField::zeros(grid);
    for c in 0..grid.dim {
        let layout = out.diag[c].layout;
        center_diff_of_nodes(grid, &v.comp[c], c, layout, &mut out.diag[c].data, 1.0);
    }
    for (c, a, buf) in out.off.iter_mut() {
        let layout = buf.layout;
        // (1/2)(d_a v_c + d_c v_a) on the shared edge points.
        node_diff_of_centers(grid, &v.comp[*c], *a, layout, &mut buf.data, 0.5);
        node_diff_of_centers(grid, &v.comp[*a], *c, layout, &mut buf.data, 0.5);
    }
    Ok(out)
}

/// Divergence of a symmetric tensor, the exact negative adjoint of
/// [`deformation`]. Wall-normal outputs on wall faces are constrained to 0.
pub fn div_tensor(grid: &Grid, s: &TensorField) -> VectorField {
    let mut out = VectorField::zeros(grid);
    for c in 0..grid.dim {
        let layout = out.comp[c].layout;
        // d_c of the diagonal entry (cell centers -> c faces).
        {
            let src = &s.diag[c];
            let inv = 1.0 / grid.spacing[c];
            let n = grid.cells[c];
            let periodic = grid.bc[c] == AxisBc::Periodic;
            let data = &mut out.comp[c].data;
            let mut lin = 0usize;
            for i0 in 0..layout.dims[0] {
                for i1 in 0..layout.dims[1] {
                    for i2 in 0..layout.dims[2] {
                        let idx = [i0, i1, i2];
                        let i = idx[c];
                        if periodic {
                            let mut hi = idx;
                            hi[c] = i;
                            let mut lo = idx;
                            lo[c] = wrap_dec(i, n);
                            data[lin] += (src.at(hi) - src.at(lo)) * inv;
                        } else if i > 0 && i < n {
                            let mut hi = idx;
                            hi[c] = i;
                            let mut lo = idx;
                            lo[c] = i - 1;
                            data[lin] += (src.at(hi) - src.at(lo)) * inv;
                        }
                        lin += 1;
                    }
                }
            }
        }
        // d_a of the off-diagonal entries (edges -> c faces).
        for (oc, oa, buf) in &s.off {
            let a = if *oc == c {
                *oa
            } else if *oa == c {
                *oc
            } else {
                continue;
            };
            let inv = 1.0 / grid.spacing[a];
            let n = grid.cells[a];
            let periodic = grid.bc[a] == AxisBc::Periodic;
            let wall_c = grid.bc[c] == AxisBc::Wall;
            let nc = grid.cells[c];
            let data = &mut out.comp[c].data;
            let mut lin = 0usize;
            for i0 in 0..layout.dims[0] {
                for i1 in 0..layout.dims[1] {
                    for i2 in 0..layout.dims[2] {
                        let idx = [i0, i1, i2];
                        if wall_c && (idx[c] == 0 || idx[c] == nc) {
                            lin += 1;
                            continue;
                        }
                        let i = idx[a];
                        let mut hi = idx;
                        hi[a] = if periodic { wrap_inc(i, n) } else { i + 1 };
                        let mut lo = idx;
                        lo[a] = i;
                        data[lin] += (buf.at(hi) - buf.at(lo)) * inv;
                        lin += 1;
                    }
                }
            }
        }
    }
    out.solenoidal = false;
    out
}

/// Discrete divergence of a velocity field at cell centers.
pub fn divergence(grid: &Grid, v: &VectorField) -> Buf {
    let layout = Layout::cell(grid.cells);
    let mut out = Buf::zeros(layout);
    for a in 0..grid.dim {
        center_diff_of_nodes(grid, &v.comp[a], a, layout, &mut out.data, 1.0);
    }
    out
}

/// Discrete gradient of a cell-centred scalar on velocity faces; the exact
/// negative adjoint of [`divergence`]. Wall faces carry 0.
pub fn gradient(grid: &Grid, p: &Buf) -> VectorField {
    let mut out = VectorField::zeros(grid);
    for c in 0..grid.dim {
        let layout = out.comp[c].layout;
        let inv = 1.0 / grid.spacing[c];
        let n = grid.cells[c];
        let periodic = grid.bc[c] == AxisBc::Periodic;
        let data = &mut out.comp[c].data;
        let mut lin = 0usize;
        for i0 in 0..layout.dims[0] {
            for i1 in 0..layout.dims[1] {
                for i2 in 0..layout.dims[2] {
                    let idx = [i0, i1, i2];
                    let i = idx[c];
                    if periodic {
                        let mut hi = idx;
                        hi[c] = i;
                        let mut lo = idx;
                        lo[c] = wrap_dec(i, n);
                        data[lin] = (p.at(hi) - p.at(lo)) * inv;
                    } else if i > 0 && i < n {
                        let mut hi = idx;
                        hi[c] = i;
                        let mut lo = idx;
                        lo[c] = i - 1;
                        data[lin] = (p.at(hi) - p.at(lo)) * inv;
                    }
                    lin += 1;
                }
            }
        }
    }
    out.solenoidal = false;
    out
}

/// Coefficients of a scalar sampled on all tensor locations: one cell-centred
/// buffer shared by the diagonal entries plus one edge buffer per axis pair,
/// obtained by arithmetic averaging of adjacent cell values.
#[derive(Clone, Debug)]
pub struct TensorCoeff {
    pub center: Buf,
    pub off: Vec<Buf>,
}

impl TensorCoeff {
    pub fn from_centers(grid: &Grid, center: &Buf) -> Self {
        let mut off = Vec::new();
        for c in 0..grid.dim {
            for a in (c + 1)..grid.dim {
                off.push(average_to(grid, center, Layout::edge(grid, c, a)));
            }
        }
        TensorCoeff { center: center.clone(), off }
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        let mut center = Buf::zeros(Layout::cell(grid.cells));
        center.fill(value);
        Self::from_centers(grid, &center)
    }

    pub fn min(&self) -> f64 {
        let mut m = self.center.data.iter().cloned().fold(f64::INFINITY, f64::min);
        for b in &self.off {
            m = b.data.iter().cloned().fold(m, f64::min);
        }
        m
    }

    /// Mean of the cell-centred samples.
    pub fn mean(&self) -> f64 {
        self.center.mean()
    }

    /// `self + other` pointwise.
    pub fn add(&self, other: &TensorCoeff) -> TensorCoeff {
        let mut out = self.clone();
        out.center.axpy(1.0, &other.center);
        for (b, o) in out.off.iter_mut().zip(&other.off) {
            b.axpy(1.0, o);
        }
        out
    }

    pub fn scaled(&self, s: f64) -> TensorCoeff {
        let mut out = self.clone();
        out.center.scale(s);
        for b in out.off.iter_mut() {
            b.scale(s);
        }
        out
    }
}

/// Multiplies a tensor pointwise by a [`TensorCoeff`].
pub fn tensor_scale(s: &mut TensorField, coeff: &TensorCoeff) {
    for d in s.diag.iter_mut() {
        for (x, c) in d.data.iter_mut().zip(&coeff.center.data) {
            *x *= c;
        }
    }
    for ((_, _, b), w) in s.off.iter_mut().zip(&coeff.off) {
        for (x, c) in b.data.iter_mut().zip(&w.data) {
            *x *= c;
        }
    }
}

/// `div(coeff . D v)`, the building block of the Voigt and viscous terms.
pub fn div_coeff_deformation(grid: &Grid, coeff: &TensorCoeff, v: &VectorField) -> Result<VectorField> {
    let mut s = deformation(grid, v)?;
    tensor_scale(&mut s, coeff);
    Ok(div_tensor(grid, &s))
}

/// Voigt mass operator `M v = v - alpha * div(ell . D v)`.
///
/// Symmetric positive definite on the discrete no-slip space:
/// `<M v, v> = |v|^2 + alpha * |sqrt(ell) D v|^2`.
pub fn voigt_apply(grid: &Grid, ell: &TensorCoeff, alpha: f64, v: &VectorField) -> Result<VectorField> {
    if alpha < 0.0 {
        return Err(Error::InvalidParameter(format!("alpha must be >= 0, got {alpha}")));
    }
    if ell.min() < 0.0 {
        return Err(Error::InvalidParameter("mixing length must be >= 0".into()));
    }
    let mut out = v.clone();
    if alpha > 0.0 {
        let dv = div_coeff_deformation(grid, ell, v)?;
        out.axpy(-alpha, &dv);
    }
    out.solenoidal = false;
    Ok(out)
}

/// Componentwise vector Laplacian with odd ghost reflection for tangential
/// components at walls and explicit zero wall dofs for normal components.
/// This is the operator whose spectral fractional powers define the discrete
/// `H^{1/2}` norm, and the classical `alpha^2 Delta` Voigt form.
pub fn laplacian_ghost(grid: &Grid, v: &VectorField) -> VectorField {
    let mut out = VectorField::zeros(grid);
    for c in 0..grid.dim {
        let layout = v.comp[c].layout;
        let src = &v.comp[c];
        let data = &mut out.comp[c].data;
        for a in 0..grid.dim {
            let inv2 = 1.0 / (grid.spacing[a] * grid.spacing[a]);
            let n = grid.cells[a];
            let periodic = grid.bc[a] == AxisBc::Periodic;
            let node = layout.node[a];
            let wall_c = grid.bc[c] == AxisBc::Wall;
            let nc = grid.cells[c];
            let mut lin = 0usize;
            for i0 in 0..layout.dims[0] {
                for i1 in 0..layout.dims[1] {
                    for i2 in 0..layout.dims[2] {
                        let idx = [i0, i1, i2];
                        if wall_c && (idx[c] == 0 || idx[c] == nc) {
                            lin += 1;
                            continue;
                        }
                        let i = idx[a];
                        let m = layout.dims[a];
                        let val = if periodic {
                            let mut lo = idx;
                            lo[a] = wrap_dec(i, m);
                            let mut hi = idx;
                            hi[a] = wrap_inc(i, m);
                            src.at(lo) - 2.0 * src.at(idx) + src.at(hi)
                        } else if node {
                            // a == c here: interior nodes, Dirichlet at walls.
                            let mut lo = idx;
                            lo[a] = i - 1;
                            let mut hi = idx;
                            hi[a] = i + 1;
                            src.at(lo) - 2.0 * src.at(idx) + src.at(hi)
                        } else {
                            // Cell-centred along a wall axis: odd ghost.
                            if i == 0 {
                                let mut hi = idx;
                                hi[a] = 1;
                                src.at(hi) - 3.0 * src.at(idx)
                            } else if i == n - 1 {
                                let mut lo = idx;
                                lo[a] = n - 2;
                                src.at(lo) - 3.0 * src.at(idx)
                            } else {
                                let mut lo = idx;
                                lo[a] = i - 1;
                                let mut hi = idx;
                                hi[a] = i + 1;
                                src.at(lo) - 2.0 * src.at(idx) + src.at(hi)
                            }
                        };
                        data[lin] += val * inv2;
                        lin += 1;
                    }
                }
            }
        }
    }
    out.solenoidal = false;
    out
}

/// Squared discrete H1 seminorm: sum over components and axes of the squared
/// first differences, with ghost reflection at walls and trapezoidal corner
/// weights. Equals the quadratic form of [`laplacian_ghost`].
pub fn h1_seminorm_sq(grid: &Grid, v: &VectorField) -> f64 {
    let vol = grid.cell_volume();
    let mut acc = 0.0;
    for c in 0..grid.dim {
        for a in 0..grid.dim {
            if a == c {
                let layout = Layout::cell(grid.cells);
                let mut d = vec![0.0; layout.len()];
                center_diff_of_nodes(grid, &v.comp[c], c, layout, &mut d, 1.0);
                acc += d.iter().map(|x| x * x).sum::<f64>();
            } else {
                let (lo, hi) = if c < a { (c, a) } else { (a, c) };
                let layout = Layout::edge(grid, lo, hi);
                let mut d = vec![0.0; layout.len()];
                node_diff_of_centers(grid, &v.comp[c], a, layout, &mut d, 1.0);
                let mut lin = 0usize;
                for idx in layout.iter() {
                    acc += crate::field::corner_weight(grid, layout, idx) * d[lin] * d[lin];
                    lin += 1;
                }
            }
        }
    }
    acc * vol
}
