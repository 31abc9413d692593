//! Staggered (MAC) field storage.
//!
//! Every field is a flat `Vec<f64>` over a tensor-product [`Layout`]: per
//! axis it is either cell-centred or node-centred (on cell boundaries).
//! Velocity component `c` is node-centred along axis `c` and cell-centred
//! along the others; scalars live at cell centers; the off-diagonal entries
//! of symmetric tensors live on cell edges/corners (node-centred in both of
//! their axes).
//!
//! Inner products carry the uniform quadrature weight `cell_volume`, with
//! trapezoidal half-weights for tensor points lying on a wall. With these
//! weights the discrete deformation operator and the tensor divergence of
//! [`crate::operators`] are exact negative adjoints, which is what every
//! energy identity in the crate rests on.

use crate::domain::{AxisBc, Grid, GridStamp};
use crate::{Error, Result};

/// Tensor-product layout: per-axis size and staggering.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub dims: [usize; 3],
    /// `true` where points sit on cell boundaries (integer coordinates).
    pub node: [bool; 3],
}

impl Layout {
    pub fn cell(cells: [usize; 3]) -> Self {
        Layout { dims: cells, node: [false; 3] }
    }

    /// Layout of velocity component `c` on `grid`: node-staggered along `c`
    /// (with both wall faces stored on wall axes), cell-centred elsewhere.
    pub fn velocity(grid: &Grid, c: usize) -> Self {
        let mut dims = [1usize; 3];
        let mut node = [false; 3];
        for a in 0..grid.dim {
            dims[a] = grid.cells[a];
            if a == c {
                node[a] = true;
                if grid.bc[a] == AxisBc::Wall {
                    dims[a] += 1;
                }
            }
        }
        Layout { dims, node }
    }

    /// Layout of the symmetric-tensor off-diagonal entry for the axis pair
    /// `(c, a)`: node-staggered along both.
    pub fn edge(grid: &Grid, c: usize, a: usize) -> Self {
        let mut dims = [1usize; 3];
        let mut node = [false; 3];
        for d in 0..grid.dim {
            dims[d] = grid.cells[d];
            if d == c || d == a {
                node[d] = true;
                if grid.bc[d] == AxisBc::Wall {
                    dims[d] += 1;
                }
            }
        }
        Layout { dims, node }
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline(always)]
    pub fn at(&self, idx: [usize; 3]) -> usize {
        (idx[0] * self.dims[1] + idx[1]) * self.dims[2] + idx[2]
    }

    /// Iterates indices in axis-major (row-major) order, matching the linear
    /// storage order.
    pub fn iter(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let d = *self;
        (0..d.dims[0]).flat_map(move |i| {
            (0..d.dims[1]).flat_map(move |j| (0..d.dims[2]).map(move |k| [i, j, k]))
        })
    }
}

/// Flat storage over a [`Layout`].
#[derive(Clone, Debug, PartialEq)]
pub struct Buf {
    pub layout: Layout,
    pub data: Vec<f64>,
}

/// Cell-centred scalar field (pressure, mixing length, TKE, ...).
pub type ScalarField = Buf;

impl Buf {
    pub fn zeros(layout: Layout) -> Self {
        Buf { layout, data: vec![0.0; layout.len()] }
    }

    pub fn from_fn(layout: Layout, mut f: impl FnMut([usize; 3]) -> f64) -> Self {
        let mut data = Vec::with_capacity(layout.len());
        for idx in layout.iter() {
            data.push(f(idx));
        }
        Buf { layout, data }
    }

    #[inline(always)]
    pub fn get(&self, layout: Layout, idx: [usize; 3]) -> f64 {
        self.data[layout.at(idx)]
    }

    #[inline(always)]
    pub fn at(&self, idx: [usize; 3]) -> f64 {
        self.data[self.layout.at(idx)]
    }

    #[inline(always)]
    pub fn at_mut(&mut self, idx: [usize; 3]) -> &mut f64 {
        let lin = self.layout.at(idx);
        &mut self.data[lin]
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &Buf) {
        debug_assert_eq!(self.layout, x.layout);
        for (s, v) in self.data.iter_mut().zip(&x.data) {
            *s += a * v;
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.data.iter_mut().for_each(|x| *x *= a);
    }

    /// Unweighted dot product of the raw storage.
    pub fn raw_dot(&self, other: &Buf) -> f64 {
        debug_assert_eq!(self.layout, other.layout);
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.data.iter().sum::<f64>() / self.data.len() as f64
        }
    }
}

/// Velocity field on staggered faces.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub stamp: GridStamp,
    pub comp: Vec<Buf>,
    /// Set when the field has passed the discrete projection.
    pub solenoidal: bool,
}

impl VectorField {
    pub fn zeros(grid: &Grid) -> Self {
        let comp = (0..grid.dim).map(|c| Buf::zeros(Layout::velocity(grid, c))).collect();
        VectorField { stamp: grid.stamp(), comp, solenoidal: true }
    }

    pub fn from_fn(grid: &Grid, mut f: impl FnMut(usize, [usize; 3]) -> f64) -> Self {
        let mut v = Self::zeros(grid);
        for c in 0..grid.dim {
            let layout = v.comp[c].layout;
            for (lin, idx) in layout.iter().enumerate() {
                v.comp[c].data[lin] = f(c, idx);
            }
        }
        v.solenoidal = false;
        v.apply_noslip(grid);
        v
    }

    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        if self.stamp != grid.stamp() {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// Zeroes the wall-normal degrees of freedom stored on walls.
    pub fn apply_noslip(&mut self, grid: &Grid) {
        for c in 0..grid.dim {
            if grid.bc[c] != AxisBc::Wall {
                continue;
            }
            let layout = self.comp[c].layout;
            let n = layout.dims[c] - 1;
            for idx in layout.iter() {
                if idx[c] == 0 || idx[c] == n {
                    *self.comp[c].at_mut(idx) = 0.0;
                }
            }
        }
    }

    pub fn axpy(&mut self, a: f64, x: &VectorField) {
        for (s, o) in self.comp.iter_mut().zip(&x.comp) {
            s.axpy(a, o);
        }
        self.solenoidal = false;
    }

    pub fn scale(&mut self, a: f64) {
        for c in self.comp.iter_mut() {
            c.scale(a);
        }
    }

    /// Linear combination `a*x + b*y`.
    pub fn lin_comb(a: f64, x: &VectorField, b: f64, y: &VectorField) -> VectorField {
        let mut out = x.clone();
        out.scale(a);
        out.axpy(b, y);
        out.solenoidal = x.solenoidal && y.solenoidal;
        out
    }

    pub fn is_finite(&self) -> bool {
        self.comp.iter().all(|c| c.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.comp.iter().fold(0.0, |m, c| m.max(c.max_abs()))
    }
}

/// Symmetric tensor field: diagonal entries at cell centers, one buffer per
/// unordered axis pair on edges/corners. Only the upper triangle is stored.
#[derive(Clone, Debug)]
pub struct TensorField {
    pub stamp: GridStamp,
    pub diag: Vec<Buf>,
    /// `(c, a, values)` with `c < a`.
    pub off: Vec<(usize, usize, Buf)>,
}

impl TensorField {
    pub fn zeros(grid: &Grid) -> Self {
        let diag = (0..grid.dim).map(|_| Buf::zeros(Layout::cell(grid.cells))).collect();
        let mut off = Vec::new();
        for c in 0..grid.dim {
            for a in (c + 1)..grid.dim {
                off.push((c, a, Buf::zeros(Layout::edge(grid, c, a))));
            }
        }
        TensorField { stamp: grid.stamp(), diag, off }
    }

    pub fn scale(&mut self, s: f64) {
        for d in self.diag.iter_mut() {
            d.scale(s);
        }
        for (_, _, b) in self.off.iter_mut() {
            b.scale(s);
        }
    }

    /// Multiplies every entry by a scalar field sampled on the same points.
    pub fn scale_pointwise(&mut self, diag_w: &[Buf], off_w: &[Buf]) {
        for (d, w) in self.diag.iter_mut().zip(diag_w) {
            debug_assert_eq!(d.layout, w.layout);
            for (x, c) in d.data.iter_mut().zip(&w.data) {
                *x *= c;
            }
        }
        for ((_, _, b), w) in self.off.iter_mut().zip(off_w) {
            debug_assert_eq!(b.layout, w.layout);
            for (x, c) in b.data.iter_mut().zip(&w.data) {
                *x *= c;
            }
        }
    }
}

/// Quadrature weight of a tensor point: half per wall it lies on.
#[inline]
pub fn corner_weight(grid: &Grid, layout: Layout, idx: [usize; 3]) -> f64 {
    let mut w = 1.0;
    for a in 0..grid.dim {
        if layout.node[a] && grid.bc[a] == AxisBc::Wall && (idx[a] == 0 || idx[a] == layout.dims[a] - 1)
        {
            w *= 0.5;
        }
    }
    w
}

/// `integral(a * b)` over cell centers.
pub fn scalar_dot(grid: &Grid, a: &Buf, b: &Buf) -> f64 {
    a.raw_dot(b) * grid.cell_volume()
}

pub fn scalar_norm(grid: &Grid, a: &Buf) -> f64 {
    scalar_dot(grid, a, a).sqrt()
}

/// `integral(a)` over cell centers.
pub fn scalar_integral(grid: &Grid, a: &Buf) -> f64 {
    a.data.iter().sum::<f64>() * grid.cell_volume()
}

/// L2 inner product of velocity fields. Wall dofs carry value zero, so the
/// uniform weight is the trapezoidal rule.
pub fn vector_dot(grid: &Grid, a: &VectorField, b: &VectorField) -> f64 {
    let mut acc = 0.0;
    for c in 0..grid.dim {
        acc += a.comp[c].raw_dot(&b.comp[c]);
    }
    acc * grid.cell_volume()
}

pub fn vector_norm(grid: &Grid, a: &VectorField) -> f64 {
    vector_dot(grid, a, a).sqrt()
}

/// Frobenius inner product of symmetric tensors:
/// diagonal entries once, off-diagonal entries twice, wall corners at half
/// weight per wall.
pub fn tensor_dot(grid: &Grid, s: &TensorField, t: &TensorField) -> f64 {
    let vol = grid.cell_volume();
    let mut acc = 0.0;
    for c in 0..grid.dim {
        acc += s.diag[c].raw_dot(&t.diag[c]);
    }
    for ((_, _, sb), (_, _, tb)) in s.off.iter().zip(&t.off) {
        let layout = sb.layout;
        let mut part = 0.0;
        for (lin, idx) in layout.iter().enumerate() {
            part += corner_weight(grid, layout, idx) * sb.data[lin] * tb.data[lin];
        }
        acc += 2.0 * part;
    }
    acc * vol
}

pub fn tensor_norm(grid: &Grid, s: &TensorField) -> f64 {
    tensor_dot(grid, s, s).sqrt()
}

/// Averages a cell-centred field onto an arbitrary staggered layout by
/// repeated two-point means along each node axis; clamps one-sided at walls
/// and wraps on periodic axes. This is how the mixing length and eddy
/// viscosities are sampled at flux points.
pub fn average_to(grid: &Grid, center: &Buf, target: Layout) -> Buf {
    debug_assert_eq!(center.layout, Layout::cell(grid.cells));
    let mut cur = center.clone();
    for a in 0..grid.dim {
        if !target.node[a] {
            continue;
        }
        let src = cur.clone();
        let mut dims = src.layout.dims;
        dims[a] = target.dims[a];
        let mut node = src.layout.node;
        node[a] = true;
        let out_layout = Layout { dims, node };
        let mut out = Buf::zeros(out_layout);
        let n = grid.cells[a];
        for (lin, mut idx) in out_layout.iter().enumerate() {
            let i = idx[a];
            let v = match grid.bc[a] {
                AxisBc::Periodic => {
                    let im = (i + n - 1) % n;
                    let ip = i % n;
                    idx[a] = im;
                    let lo = src.at(idx);
                    idx[a] = ip;
                    0.5 * (lo + src.at(idx))
                }
                AxisBc::Wall => {
                    if i == 0 {
                        idx[a] = 0;
                        src.at(idx)
                    } else if i == n {
                        idx[a] = n - 1;
                        src.at(idx)
                    } else {
                        idx[a] = i - 1;
                        let lo = src.at(idx);
                        idx[a] = i;
                        0.5 * (lo + src.at(idx))
                    }
                }
            };
            out.data[lin] = v;
        }
        cur = out;
    }
    debug_assert_eq!(cur.layout, target);
    cur
}
