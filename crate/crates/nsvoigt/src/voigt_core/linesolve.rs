//! Line-relaxation preconditioner for the implicit midpoint operator on
//! channel grids.
//!
//! On a channel the mixing length and eddy viscosity vary strongly across
//! the wall axis, which a constant-coefficient inverse cannot capture. Here
//! the transverse axes are diagonalised spectrally and, per transverse mode,
//! the wall-axis restriction of the operator is solved directly as a
//! variable-coefficient symmetric tridiagonal system (Thomas algorithm).
//! Cross-component coupling is dropped, as in any componentwise
//! preconditioner; the coefficient profiles are transverse averages of the
//! true fields, which on a channel reproduces them exactly.
//!
//! Applicable when the grid has exactly one wall axis and it is the last
//! one; the caller falls back to the constant-coefficient inverse otherwise.

use crate::domain::{AxisBc, Grid};
use crate::field::VectorField;
use crate::operators::TensorCoeff;
use crate::spectral::{basis_1d, AxisKind, Basis1d, TensorBasis};

pub struct LinePrecond {
    line_axis: usize,
    /// Transverse basis per velocity component (identity on the line axis).
    trans: Vec<TensorBasis>,
    /// Tangential line system coefficients: identity shift, transverse
    /// weight per cell, face diffusion weights (length n+1).
    tang: LineCoeffs,
    /// Normal-component line system (node-staggered, Dirichlet walls).
    norm: LineCoeffs,
    n_line: usize,
}

struct LineCoeffs {
    /// Constant diagonal shift (1/dt).
    shift: f64,
    /// Coefficient multiplying the transverse eigenvalue, per line point.
    transverse: Vec<f64>,
    /// Diffusion weights on the dual points of the line (faces for the
    /// tangential system, cells for the normal system).
    diffusion: Vec<f64>,
}

/// Transverse average of a cell buffer along every axis except `axis`,
/// producing a profile of length `cells[axis]`.
fn profile_of(data: &crate::field::Buf, axis: usize) -> Vec<f64> {
    let dims = data.layout.dims;
    let n = dims[axis];
    let mut prof = vec![0.0; n];
    let mut count = vec![0usize; n];
    for (lin, idx) in data.layout.iter().enumerate() {
        prof[idx[axis]] += data.data[lin];
        count[idx[axis]] += 1;
    }
    for (p, c) in prof.iter_mut().zip(&count) {
        *p /= *c as f64;
    }
    prof
}

fn interp_to_faces(prof: &[f64]) -> Vec<f64> {
    let n = prof.len();
    let mut out = vec![0.0; n + 1];
    out[0] = prof[0];
    out[n] = prof[n - 1];
    for j in 1..n {
        out[j] = 0.5 * (prof[j - 1] + prof[j]);
    }
    out
}

impl LinePrecond {
    /// Builds the preconditioner; `None` when the grid layout does not fit
    /// (no wall axis, several wall axes, or the wall axis is not last).
    pub fn build(
        grid: &Grid,
        ell: &TensorCoeff,
        visc: &TensorCoeff,
        alpha: f64,
        dt: f64,
    ) -> Option<Self> {
        let walls: Vec<usize> =
            (0..grid.dim).filter(|a| grid.bc[*a] == AxisBc::Wall).collect();
        if walls.len() != 1 || walls[0] != grid.dim - 1 {
            return None;
        }
        let line_axis = walls[0];
        let n = grid.cells[line_axis];
        let dz2 = grid.spacing[line_axis] * grid.spacing[line_axis];

        let ell_prof = profile_of(&ell.center, line_axis);
        let visc_prof = profile_of(&visc.center, line_axis);
        let ell_face = interp_to_faces(&ell_prof);
        let visc_face = interp_to_faces(&visc_prof);

        // Tangential components: cell-centred along the line; the transverse
        // part carries the full coefficient, the line diffusion half of it.
        let tang = LineCoeffs {
            shift: 1.0 / dt,
            transverse: (0..n).map(|j| alpha * ell_prof[j] / dt + 0.5 * visc_prof[j]).collect(),
            diffusion: (0..=n)
                .map(|j| (0.5 * alpha * ell_face[j] / dt + 0.25 * visc_face[j]) / dz2)
                .collect(),
        };
        // Normal component: node-staggered; the roles of the halves swap.
        let norm = LineCoeffs {
            shift: 1.0 / dt,
            transverse: (0..=n)
                .map(|j| 0.5 * alpha * ell_face[j] / dt + 0.25 * visc_face[j])
                .collect(),
            diffusion: (0..n).map(|j| (alpha * ell_prof[j] / dt + 0.5 * visc_prof[j]) / dz2).collect(),
        };

        let mut trans = Vec::with_capacity(grid.dim);
        for c in 0..grid.dim {
            let mut axes = Vec::with_capacity(3);
            for a in 0..3 {
                if a >= grid.dim {
                    axes.push(Basis1d::identity(1));
                } else if a == line_axis {
                    let pts = grid.cells[a] + if a == c { 1 } else { 0 };
                    axes.push(Basis1d::identity(pts));
                } else {
                    // Transverse axes of a single-wall grid are periodic.
                    axes.push(basis_1d(AxisKind::Periodic, grid.cells[a], grid.spacing[a]));
                }
            }
            trans.push(TensorBasis { axes });
        }

        Some(LinePrecond { line_axis, trans, tang, norm, n_line: n })
    }

    pub fn apply(&self, grid: &Grid, r: &VectorField) -> VectorField {
        let mut out = r.clone();
        for c in 0..grid.dim {
            let basis = &self.trans[c];
            let mut coefs = basis.analyze(&r.comp[c].data);
            let md = basis.mode_dims();
            let npts = md[self.line_axis];
            debug_assert_eq!(md[self.line_axis + 1..].iter().product::<usize>(), 1);
            let n_lines = coefs.len() / npts;
            let normal = c == self.line_axis;
            // Eigenvalue of the transverse modes for each line.
            let mut scratch = Scratch::new(npts);
            for line in 0..n_lines {
                // Row-major decomposition of the transverse mode indices.
                let mut prefix = [0usize; 3];
                let mut rem = line;
                for a in (0..self.line_axis).rev() {
                    prefix[a] = rem % md[a];
                    rem /= md[a];
                }
                let mut lam = 0.0;
                for a in 0..self.line_axis {
                    lam += basis.axes[a].eig[prefix[a]];
                }
                let seg = &mut coefs[line * npts..(line + 1) * npts];
                if normal {
                    self.solve_normal(lam, seg, &mut scratch);
                } else {
                    self.solve_tangential(lam, seg, &mut scratch);
                }
            }
            out.comp[c].data = basis.synthesize(&coefs);
        }
        out.solenoidal = false;
        out
    }

    /// Tridiagonal solve for a cell-centred line with ghost-odd walls.
    fn solve_tangential(&self, lam: f64, seg: &mut [f64], s: &mut Scratch) {
        let n = self.n_line;
        debug_assert_eq!(seg.len(), n);
        let w = &self.tang.diffusion;
        for j in 0..n {
            let lo = if j == 0 { 2.0 * w[0] } else { w[j] };
            let hi = if j == n - 1 { 2.0 * w[n] } else { w[j + 1] };
            s.diag[j] = self.tang.shift + lam * self.tang.transverse[j] + lo + hi;
            s.lower[j] = if j == 0 { 0.0 } else { -w[j] };
            s.upper[j] = if j == n - 1 { 0.0 } else { -w[j + 1] };
        }
        thomas(&s.lower[..n], &mut s.diag[..n], &s.upper[..n], seg, &mut s.work);
    }

    /// Tridiagonal solve for a node line with Dirichlet walls.
    fn solve_normal(&self, lam: f64, seg: &mut [f64], s: &mut Scratch) {
        let n = self.n_line;
        debug_assert_eq!(seg.len(), n + 1);
        let w = &self.norm.diffusion;
        // Wall rows are identities on a zero right-hand side.
        s.diag[0] = 1.0;
        s.lower[0] = 0.0;
        s.upper[0] = 0.0;
        s.diag[n] = 1.0;
        s.lower[n] = 0.0;
        s.upper[n] = 0.0;
        for j in 1..n {
            s.diag[j] = self.norm.shift + lam * self.norm.transverse[j] + w[j - 1] + w[j];
            s.lower[j] = -w[j - 1];
            s.upper[j] = -w[j];
        }
        // Decouple the wall rows.
        s.lower[1] = if n > 1 { s.lower[1] } else { 0.0 };
        let seg0 = seg[0];
        let segn = seg[n];
        seg[0] = 0.0;
        seg[n] = 0.0;
        thomas(&s.lower[..=n], &mut s.diag[..=n], &s.upper[..=n], seg, &mut s.work);
        // Constrained dofs pass through untouched (they are zero anyway).
        seg[0] = seg0;
        seg[n] = segn;
    }
}

struct Scratch {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    work: Vec<f64>,
}

impl Scratch {
    fn new(npts: usize) -> Self {
        let n = npts + 2;
        Scratch { lower: vec![0.0; n], diag: vec![0.0; n], upper: vec![0.0; n], work: vec![0.0; n] }
    }
}

/// In-place Thomas algorithm; `diag` is consumed as workspace.
fn thomas(lower: &[f64], diag: &mut [f64], upper: &[f64], rhs: &mut [f64], work: &mut [f64]) {
    let n = rhs.len();
    work[0] = upper[0] / diag[0];
    rhs[0] /= diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * work[i - 1];
        work[i] = upper[i] / m;
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= work[i] * rhs[i + 1];
    }
}
