//! Tensor-product eigenbases of the discrete Laplacians.
//!
//! On a tensor grid every componentwise Laplacian of [`crate::operators`]
//! diagonalises in a product of 1D bases: Fourier modes on periodic axes,
//! sine modes on wall axes (shifted for cell-centred points, plain for node
//! points), cosine modes for Neumann scalars. These bases give
//!
//! * fractional powers `A^s` and with them the discrete `H^{1/2}` norm,
//! * the constant-coefficient inverses used to precondition the Voigt and
//!   Schur-complement solves.
//!
//! Transforms are dense 1D matrix applications; exact and cheap at the grid
//! sizes this crate targets.

use crate::domain::{AxisBc, Grid};
use crate::field::{Buf, VectorField};

/// One-dimensional eigenbasis of a discrete second-difference operator.
#[derive(Clone, Debug)]
pub struct Basis1d {
    pub points: usize,
    pub modes: usize,
    /// `points x modes`, column `m` is the orthonormal eigenvector `m`.
    pub b: Vec<f64>,
    /// Eigenvalues of the negative second difference, `>= 0`.
    pub eig: Vec<f64>,
    /// Marks the identity basis (axis left untransformed).
    pub identity: bool,
}

impl Basis1d {
    /// Identity basis: the axis is carried through untransformed with zero
    /// eigenvalue contribution.
    pub fn identity(n: usize) -> Self {
        let mut b = vec![0.0; n * n];
        for j in 0..n {
            b[j * n + j] = 1.0;
        }
        Basis1d { points: n, modes: n, b, eig: vec![0.0; n], identity: true }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AxisKind {
    /// Periodic in index space (any staggering).
    Periodic,
    /// Wall axis, cell-centred points, odd ghost reflection (tangential
    /// velocity, Dirichlet scalars).
    WallCenterOdd,
    /// Wall axis, node points with zero Dirichlet dofs on both walls
    /// (wall-normal velocity).
    WallNode,
    /// Wall axis, cell-centred points, even ghost reflection (pressure).
    WallCenterEven,
}

pub fn basis_1d(kind: AxisKind, n: usize, h: f64) -> Basis1d {
    let lam = |theta: f64| (2.0 - 2.0 * theta.cos()) / (h * h);
    match kind {
        AxisKind::Periodic => {
            let points = n;
            let modes = n;
            let mut b = vec![0.0; points * modes];
            let mut eig = vec![0.0; modes];
            let mut m = 0usize;
            // Constant mode.
            for j in 0..points {
                b[j * modes + m] = 1.0 / (n as f64).sqrt();
            }
            eig[m] = 0.0;
            m += 1;
            let kmax = (n - 1) / 2;
            for k in 1..=kmax {
                let theta = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                let norm = (2.0 / n as f64).sqrt();
                for j in 0..points {
                    b[j * modes + m] = norm * (theta * j as f64).cos();
                    b[j * modes + m + 1] = norm * (theta * j as f64).sin();
                }
                eig[m] = lam(theta);
                eig[m + 1] = lam(theta);
                m += 2;
            }
            if n % 2 == 0 {
                // Nyquist mode (-1)^j.
                let norm = 1.0 / (n as f64).sqrt();
                for j in 0..points {
                    b[j * modes + m] = norm * if j % 2 == 0 { 1.0 } else { -1.0 };
                }
                eig[m] = lam(std::f64::consts::PI);
                m += 1;
            }
            debug_assert_eq!(m, modes);
            Basis1d { points, modes, b, eig, identity: false }
        }
        AxisKind::WallCenterOdd => {
            let points = n;
            let modes = n;
            let mut b = vec![0.0; points * modes];
            let mut eig = vec![0.0; modes];
            for m in 1..=n {
                let theta = std::f64::consts::PI * m as f64 / n as f64;
                let norm = if m < n { (2.0 / n as f64).sqrt() } else { 1.0 / (n as f64).sqrt() };
                for j in 0..points {
                    b[j * modes + (m - 1)] = norm * ((j as f64 + 0.5) * theta).sin();
                }
                eig[m - 1] = lam(theta);
            }
            Basis1d { points, modes, b, eig, identity: false }
        }
        AxisKind::WallNode => {
            let points = n + 1;
            let modes = n - 1;
            let mut b = vec![0.0; points * modes];
            let mut eig = vec![0.0; modes];
            for m in 1..n {
                let theta = std::f64::consts::PI * m as f64 / n as f64;
                let norm = (2.0 / n as f64).sqrt();
                for j in 0..points {
                    b[j * modes + (m - 1)] = norm * (theta * j as f64).sin();
                }
                eig[m - 1] = lam(theta);
            }
            Basis1d { points, modes, b, eig, identity: false }
        }
        AxisKind::WallCenterEven => {
            let points = n;
            let modes = n;
            let mut b = vec![0.0; points * modes];
            let mut eig = vec![0.0; modes];
            for j in 0..points {
                b[j * modes] = 1.0 / (n as f64).sqrt();
            }
            for m in 1..n {
                let theta = std::f64::consts::PI * m as f64 / n as f64;
                let norm = (2.0 / n as f64).sqrt();
                for j in 0..points {
                    b[j * modes + m] = norm * ((j as f64 + 0.5) * theta).cos();
                }
                eig[m] = lam(theta);
            }
            Basis1d { points, modes, b, eig, identity: false }
        }
    }
}

/// Identity basis for padded (unused) axes.
fn trivial_basis() -> Basis1d {
    Basis1d { points: 1, modes: 1, b: vec![1.0], eig: vec![0.0], identity: true }
}

/// Tensor-product basis for one field layout.
#[derive(Clone, Debug)]
pub struct TensorBasis {
    pub axes: Vec<Basis1d>,
}

impl TensorBasis {
    /// Basis diagonalising [`crate::operators::laplacian_ghost`] on velocity
    /// component `c`.
    pub fn velocity(grid: &Grid, c: usize) -> Self {
        let mut axes = Vec::with_capacity(3);
        for a in 0..3 {
            if a >= grid.dim {
                axes.push(trivial_basis());
                continue;
            }
            let kind = match grid.bc[a] {
                AxisBc::Periodic => AxisKind::Periodic,
                AxisBc::Wall => {
                    if a == c {
                        AxisKind::WallNode
                    } else {
                        AxisKind::WallCenterOdd
                    }
                }
            };
            axes.push(basis_1d(kind, grid.cells[a], grid.spacing[a]));
        }
        TensorBasis { axes }
    }

    /// Basis for cell-centred scalars with zero-flux walls (pressure).
    pub fn scalar_neumann(grid: &Grid) -> Self {
        let mut axes = Vec::with_capacity(3);
        for a in 0..3 {
            if a >= grid.dim {
                axes.push(trivial_basis());
                continue;
            }
            let kind = match grid.bc[a] {
                AxisBc::Periodic => AxisKind::Periodic,
                AxisBc::Wall => AxisKind::WallCenterEven,
            };
            axes.push(basis_1d(kind, grid.cells[a], grid.spacing[a]));
        }
        TensorBasis { axes }
    }

    pub fn point_dims(&self) -> [usize; 3] {
        [self.axes[0].points, self.axes[1].points, self.axes[2].points]
    }

    pub fn mode_dims(&self) -> [usize; 3] {
        [self.axes[0].modes, self.axes[1].modes, self.axes[2].modes]
    }

    /// Forward transform: physical values -> modal coefficients.
    pub fn analyze(&self, data: &[f64]) -> Vec<f64> {
        let mut cur = data.to_vec();
        let mut dims = self.point_dims();
        for a in 0..3 {
            if self.axes[a].identity {
                continue;
            }
            cur = apply_axis(&cur, dims, a, &self.axes[a], true);
            dims[a] = self.axes[a].modes;
        }
        cur
    }

    /// Inverse transform: modal coefficients -> physical values.
    pub fn synthesize(&self, coefs: &[f64]) -> Vec<f64> {
        let mut cur = coefs.to_vec();
        let mut dims = self.mode_dims();
        for a in 0..3 {
            if self.axes[a].identity {
                continue;
            }
            cur = apply_axis(&cur, dims, a, &self.axes[a], false);
            dims[a] = self.axes[a].points;
        }
        cur
    }

    /// Applies `x -> g(Lambda) x` where `Lambda` is the per-mode eigenvalue
    /// sum, in place on a coefficient array.
    pub fn scale_modes(&self, coefs: &mut [f64], mut g: impl FnMut(f64) -> f64) {
        let md = self.mode_dims();
        let mut lin = 0usize;
        for m0 in 0..md[0] {
            let l0 = self.axes[0].eig[m0];
            for m1 in 0..md[1] {
                let l1 = l0 + self.axes[1].eig[m1];
                for m2 in 0..md[2] {
                    let lam = l1 + self.axes[2].eig[m2];
                    coefs[lin] *= g(lam);
                    lin += 1;
                }
            }
        }
    }

    /// `sum_m g(Lambda_m) c_m^2` over all modes.
    pub fn quad_form(&self, coefs: &[f64], mut g: impl FnMut(f64) -> f64) -> f64 {
        let md = self.mode_dims();
        let mut acc = 0.0;
        let mut lin = 0usize;
        for m0 in 0..md[0] {
            let l0 = self.axes[0].eig[m0];
            for m1 in 0..md[1] {
                let l1 = l0 + self.axes[1].eig[m1];
                for m2 in 0..md[2] {
                    let lam = l1 + self.axes[2].eig[m2];
                    acc += g(lam) * coefs[lin] * coefs[lin];
                    lin += 1;
                }
            }
        }
        acc
    }
}

/// Applies a 1D basis along `axis` of a dims-shaped array. Forward uses
/// `B^T` (points -> modes), inverse uses `B` (modes -> points).
fn apply_axis(x: &[f64], dims: [usize; 3], axis: usize, basis: &Basis1d, forward: bool) -> Vec<f64> {
    let (n_in, n_out) = if forward { (basis.points, basis.modes) } else { (basis.modes, basis.points) };
    debug_assert_eq!(dims[axis], n_in);
    let pre: usize = dims[..axis].iter().product();
    let post: usize = dims[axis + 1..].iter().product();
    let mut out = vec![0.0; pre * n_out * post];
    if post == 1 {
        // out[p, m] = sum_j w(j, m) x[p, j]: accumulate rows of the basis.
        for p in 0..pre {
            let in_block = &x[p * n_in..(p + 1) * n_in];
            let out_block = &mut out[p * n_out..(p + 1) * n_out];
            if forward {
                for (j, &xv) in in_block.iter().enumerate() {
                    let brow = &basis.b[j * basis.modes..j * basis.modes + n_out];
                    for (o, &w) in out_block.iter_mut().zip(brow) {
                        *o += w * xv;
                    }
                }
            } else {
                for (m, o) in out_block.iter_mut().enumerate() {
                    let brow = &basis.b[m * basis.modes..m * basis.modes + n_in];
                    let mut acc = 0.0;
                    for (w, xv) in brow.iter().zip(in_block) {
                        acc += w * xv;
                    }
                    *o = acc;
                }
            }
        }
    } else {
        for p in 0..pre {
            let in_block = &x[p * n_in * post..(p + 1) * n_in * post];
            let out_block = &mut out[p * n_out * post..(p + 1) * n_out * post];
            for j in 0..n_in {
                let row = &in_block[j * post..(j + 1) * post];
                for m in 0..n_out {
                    let w = if forward {
                        basis.b[j * basis.modes + m]
                    } else {
                        basis.b[m * basis.modes + j]
                    };
                    let orow = &mut out_block[m * post..(m + 1) * post];
                    for (o, xv) in orow.iter_mut().zip(row) {
                        *o += w * xv;
                    }
                }
            }
        }
    }
    out
}

/// Per-grid cache of the velocity and pressure bases.
#[derive(Clone, Debug)]
pub struct SpectralSpace {
    pub velocity: Vec<TensorBasis>,
    pub pressure: TensorBasis,
}

impl SpectralSpace {
    pub fn new(grid: &Grid) -> Self {
        let velocity = (0..grid.dim).map(|c| TensorBasis::velocity(grid, c)).collect();
        SpectralSpace { velocity, pressure: TensorBasis::scalar_neumann(grid) }
    }

    /// `<A^s v, v>` in the L2 inner product, `A` the componentwise negative
    /// vector Laplacian with the field's boundary conditions.
    pub fn fractional_quad_form(&self, grid: &Grid, v: &VectorField, s: f64) -> f64 {
        let mut acc = 0.0;
        for c in 0..grid.dim {
            let coefs = self.velocity[c].analyze(&v.comp[c].data);
            acc += self.velocity[c].quad_form(&coefs, |lam| lam.powf(s));
        }
        acc * grid.cell_volume()
    }

    /// Applies `A^s` componentwise.
    pub fn apply_fractional(&self, grid: &Grid, v: &VectorField, s: f64) -> VectorField {
        let mut out = v.clone();
        for c in 0..grid.dim {
            let basis = &self.velocity[c];
            let mut coefs = basis.analyze(&v.comp[c].data);
            basis.scale_modes(&mut coefs, |lam| lam.powf(s));
            out.comp[c].data = basis.synthesize(&coefs);
        }
        out.solenoidal = false;
        out
    }

    /// Constant-coefficient approximate inverse: applies
    /// `v -> g(Lambda)^{-1} v` componentwise (the grad-div coupling of the
    /// true constant-coefficient operator is dropped).
    pub fn helmholtz_inverse(&self, grid: &Grid, v: &VectorField, g: impl Fn(f64) -> f64) -> VectorField {
        let mut out = v.clone();
        for c in 0..grid.dim {
            let basis = &self.velocity[c];
            let mut coefs = basis.analyze(&v.comp[c].data);
            basis.scale_modes(&mut coefs, |lam| 1.0 / g(lam));
            out.comp[c].data = basis.synthesize(&coefs);
        }
        out.solenoidal = false;
        out
    }

    /// Approximate inverse of the pressure Schur complement: per pressure
    /// mode the gradient/divergence pair contributes exactly `Lambda`, so
    /// `S_hat = Lambda / g(Lambda)`; the constant mode is pinned to zero.
    pub fn schur_inverse(&self, p: &Buf, g: impl Fn(f64) -> f64) -> Buf {
        let basis = &self.pressure;
        let mut coefs = basis.analyze(&p.data);
        basis.scale_modes(&mut coefs, |lam| if lam <= 0.0 { 0.0 } else { g(lam) / lam });
        Buf { layout: p.layout, data: basis.synthesize(&coefs) }
    }
}

/// Builds one velocity-space Laplacian eigenvector (for tests and suites):
/// component `c` gets the product of 1D modes `m`, all other components 0.
/// Returns the field and its eigenvalue.
pub fn laplacian_eigenvector(grid: &Grid, space: &SpectralSpace, c: usize, m: [usize; 3]) -> (VectorField, f64) {
    let basis = &space.velocity[c];
    let md = basis.mode_dims();
    let mut coefs = vec![0.0; md[0] * md[1] * md[2]];
    let lin = (m[0] * md[1] + m[1]) * md[2] + m[2];
    coefs[lin] = 1.0;
    let lam: f64 = (0..3).map(|a| basis.axes[a].eig[m[a]]).sum();
    let mut v = VectorField::zeros(grid);
    v.comp[c].data = basis.synthesize(&coefs);
    // Normalise to unit L2 norm.
    let scale = 1.0 / grid.cell_volume().sqrt();
    v.comp[c].scale(scale);
    v.solenoidal = false;
    (v, lam)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_grid, GridSpec};
    use crate::field::{vector_dot, Layout};
    use crate::operators::laplacian_ghost;
    use crate::rng::SplitMix64;

    fn channel() -> Grid {
        build_grid(GridSpec::channel_2d(1.0, 1.0, 12, 10).unwrap()).unwrap()
    }

    fn orthonormal(basis: &Basis1d) -> bool {
        for m1 in 0..basis.modes {
            for m2 in 0..basis.modes {
                let dot: f64 =
                    (0..basis.points).map(|j| basis.b[j * basis.modes + m1] * basis.b[j * basis.modes + m2]).sum();
                let expect = if m1 == m2 { 1.0 } else { 0.0 };
                if (dot - expect).abs() > 1e-12 {
                    return false;
                }
            }
        }
        true
    }

    #[test]
    fn bases_orthonormal() {
        for kind in [AxisKind::Periodic, AxisKind::WallCenterOdd, AxisKind::WallNode, AxisKind::WallCenterEven] {
            for n in [6usize, 9, 12] {
                assert!(orthonormal(&basis_1d(kind, n, 0.1)), "{kind:?} n={n}");
            }
        }
    }

    #[test]
    fn round_trip_transform() {
        let grid = channel();
        let basis = TensorBasis::velocity(&grid, 0);
        let mut rng = SplitMix64::new(4);
        let data: Vec<f64> = (0..basis.point_dims().iter().product::<usize>()).map(|_| rng.next_sym()).collect();
        let back = basis.synthesize(&basis.analyze(&data));
        for (a, b) in data.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn eigenvectors_diagonalise_ghost_laplacian() {
        let grid = channel();
        let space = SpectralSpace::new(&grid);
        for (c, m) in [(0usize, [2usize, 3, 0]), (0, [0, 1, 0]), (1, [1, 2, 0]), (1, [5, 0, 0])] {
            let (v, lam) = laplacian_eigenvector(&grid, &space, c, m);
            let av = laplacian_ghost(&grid, &v);
            // -Delta v = lam v on the free dofs.
            let mut residual: f64 = 0.0;
            for cc in 0..grid.dim {
                for (x, y) in av.comp[cc].data.iter().zip(&v.comp[cc].data) {
                    residual = residual.max((-x - lam * y).abs());
                }
            }
            assert!(residual < 1e-9 * (1.0 + lam), "c={c} m={m:?} lam={lam}: residual {residual}");
        }
    }

    #[test]
    fn unit_eigenvector_h_half_is_quarter_power() {
        let grid = channel();
        let space = SpectralSpace::new(&grid);
        let (v, lam) = laplacian_eigenvector(&grid, &space, 0, [3, 2, 0]);
        let l2 = vector_dot(&grid, &v, &v).sqrt();
        assert!((l2 - 1.0).abs() < 1e-12);
        let q = space.fractional_quad_form(&grid, &v, 0.5);
        assert!((q.sqrt() - lam.powf(0.25)).abs() < 1e-9 * (1.0 + lam));
    }

    #[test]
    fn fractional_square_root_composes() {
        // A^{1/2} A^{1/2} v = A v for zero-bc fields.
        let grid = channel();
        let space = SpectralSpace::new(&grid);
        let mut rng = SplitMix64::new(11);
        let v = crate::field::VectorField::from_fn(&grid, |_, _| rng.next_sym());
        let half = space.apply_fractional(&grid, &v, 0.5);
        let twice = space.apply_fractional(&grid, &half, 0.5);
        let full = space.apply_fractional(&grid, &v, 1.0);
        for c in 0..grid.dim {
            for (a, b) in twice.comp[c].data.iter().zip(&full.comp[c].data) {
                assert!((a - b).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn dense_eigendecomposition_oracle() {
        // Assemble the ghost Laplacian densely on the free dofs of each
        // component, take its matrix square root by symmetric
        // eigendecomposition, and compare <A^{1/2} v, v> against the
        // transform path.
        use nalgebra::{DMatrix, DVector, SymmetricEigen};
        let grid = build_grid(GridSpec::channel_2d(1.0, 1.0, 8, 6).unwrap()).unwrap();
        let space = SpectralSpace::new(&grid);
        let mut rng = SplitMix64::new(21);
        let v = crate::field::VectorField::from_fn(&grid, |_, _| rng.next_sym());

        let mut dense_total = 0.0;
        for c in 0..grid.dim {
            let layout = v.comp[c].layout;
            // Free dofs: all stored points except constrained wall dofs.
            let free: Vec<usize> = layout
                .iter()
                .enumerate()
                .filter(|(_, idx)| {
                    !(grid.bc[c] == crate::domain::AxisBc::Wall
                        && (idx[c] == 0 || idx[c] == grid.cells[c]))
                })
                .map(|(lin, _)| lin)
                .collect();
            let nf = free.len();
            let mut a = DMatrix::<f64>::zeros(nf, nf);
            for (col, &lin) in free.iter().enumerate() {
                let mut e = crate::field::VectorField::zeros(&grid);
                e.comp[c].data[lin] = 1.0;
                let ae = laplacian_ghost(&grid, &e);
                for (row, &rlin) in free.iter().enumerate() {
                    a[(row, col)] = -ae.comp[c].data[rlin];
                }
            }
            let eig = SymmetricEigen::new(a);
            let x = DVector::from_iterator(nf, free.iter().map(|&lin| v.comp[c].data[lin]));
            let y = eig.eigenvectors.transpose() * &x;
            let q: f64 = y
                .iter()
                .zip(eig.eigenvalues.iter())
                .map(|(ci, lam)| lam.max(0.0).sqrt() * ci * ci)
                .sum();
            dense_total += q * grid.cell_volume();
        }

        let spectral = space.fractional_quad_form(&grid, &v, 0.5);
        assert!(
            (spectral - dense_total).abs() < 1e-8 * (1.0 + dense_total.abs()),
            "transform {spectral} vs dense {dense_total}"
        );
    }

    #[test]
    fn schur_inverse_pins_constant_mode() {
        let grid = channel();
        let space = SpectralSpace::new(&grid);
        let mut ones = Buf::zeros(Layout::cell(grid.cells));
        ones.fill(1.0);
        let out = space.schur_inverse(&ones, |lam| 1.0 + lam);
        assert!(out.max_abs() < 1e-12);
    }
}
