//! Computational geometry: channel slab / periodic box, wall distance and
//! mixing-length profiles.
//!
//! The geometry is a tensor-product grid, periodic or wall-bounded per axis.
//! A grid with at least one wall axis is in channel mode; an all-periodic
//! grid is in box mode. Wall-based mixing-length laws are mirrored about
//! mid-channel through the minimum wall distance.

use serde::{Deserialize, Serialize};

use crate::field::{Buf, Layout};
use crate::{Error, Result};

/// Von Karman constant bounds accepted without an explicit override.
pub const KAPPA_RANGE: (f64, f64) = (0.35, 0.42);

/// Default Von Karman constant (midpoint of the accepted interval).
pub const KAPPA_DEFAULT: f64 = 0.40;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AxisBc {
    Periodic,
    Wall,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// At least one wall axis.
    Channel,
    /// Fully periodic.
    Box,
}

/// User-facing description of the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub extents: Vec<f64>,
    pub cells: Vec<usize>,
    pub bc: Vec<AxisBc>,
}

impl GridSpec {
    pub fn new(extents: Vec<f64>, cells: Vec<usize>, bc: Vec<AxisBc>) -> Result<Self> {
        let dim = extents.len();
        if dim < 2 || dim > 3 {
            return Err(Error::InvalidGrid(format!("dim must be 2 or 3, got {dim}")));
        }
        if cells.len() != dim || bc.len() != dim {
            return Err(Error::InvalidGrid(
                "extents, cells and bc must have matching lengths".into(),
            ));
        }
        for a in 0..dim {
            if !(extents[a] > 0.0) || !extents[a].is_finite() {
                return Err(Error::InvalidGrid(format!(
                    "extent along axis {a} must be positive, got {}",
                    extents[a]
                )));
            }
            if cells[a] < 4 {
                return Err(Error::InvalidGrid(format!(
                    "need at least 4 cells per axis, got {} along axis {a}",
                    cells[a]
                )));
            }
        }
        Ok(Self { dim, extents, cells, bc })
    }

    /// 2D channel: periodic in x, walls normal to z.
    pub fn channel_2d(lx: f64, h: f64, nx: usize, nz: usize) -> Result<Self> {
        Self::new(vec![lx, h], vec![nx, nz], vec![AxisBc::Periodic, AxisBc::Wall])
    }

    /// 2D fully periodic box.
    pub fn periodic_box_2d(lx: f64, lz: f64, nx: usize, nz: usize) -> Result<Self> {
        Self::new(vec![lx, lz], vec![nx, nz], vec![AxisBc::Periodic, AxisBc::Periodic])
    }

    /// 3D channel: periodic in x, y; walls normal to z.
    pub fn channel_3d(lx: f64, ly: f64, h: f64, nx: usize, ny: usize, nz: usize) -> Result<Self> {
        Self::new(
            vec![lx, ly, h],
            vec![nx, ny, nz],
            vec![AxisBc::Periodic, AxisBc::Periodic, AxisBc::Wall],
        )
    }

    /// Channel-mode constructor; rejects specs without a wall axis.
    pub fn channel(extents: Vec<f64>, cells: Vec<usize>, bc: Vec<AxisBc>) -> Result<Self> {
        let spec = Self::new(extents, cells, bc)?;
        if spec.mode() != Mode::Channel {
            return Err(Error::InvalidGrid(
                "channel mode requires at least one wall axis".into(),
            ));
        }
        Ok(spec)
    }

    pub fn mode(&self) -> Mode {
        if self.bc.iter().any(|b| *b == AxisBc::Wall) {
            Mode::Channel
        } else {
            Mode::Box
        }
    }
}

/// Compact identity of a grid, carried by fields to detect mismatches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridStamp {
    pub dim: usize,
    pub cells: [usize; 3],
    pub bc: [AxisBc; 3],
}

/// A built grid: spacings and the wall-distance field.
#[derive(Clone, Debug)]
pub struct Grid {
    pub spec: GridSpec,
    pub dim: usize,
    /// Cell counts, padded with 1 for unused axes.
    pub cells: [usize; 3],
    /// Cell widths, padded with 1.0.
    pub spacing: [f64; 3],
    pub bc: [AxisBc; 3],
    /// Wall distance at cell centers; `f64::INFINITY` on a fully periodic box.
    pub wall_distance: Buf,
}

/// Builds the grid from a validated spec, populating spacings and the wall
/// distance on cell centers.
pub fn build_grid(spec: GridSpec) -> Result<Grid> {
    // Re-run the invariant checks so hand-constructed specs are rejected too.
    let spec = GridSpec::new(spec.extents, spec.cells, spec.bc)?;
    let dim = spec.dim;
    let mut cells = [1usize; 3];
    let mut spacing = [1.0f64; 3];
    let mut bc = [AxisBc::Periodic; 3];
    for a in 0..dim {
        cells[a] = spec.cells[a];
        spacing[a] = spec.extents[a] / spec.cells[a] as f64;
        bc[a] = spec.bc[a];
    }
    let mut grid = Grid {
        spec,
        dim,
        cells,
        spacing,
        bc,
        wall_distance: Buf::zeros(Layout::cell(cells)),
    };
    let centers = Layout::cell(cells);
    let mut rho = Buf::zeros(centers);
    for (lin, idx) in centers.iter().enumerate() {
        rho.data[lin] = grid.wall_distance_at_index(idx, [false; 3]);
    }
    grid.wall_distance = rho;
    Ok(grid)
}

impl Grid {
    pub fn stamp(&self) -> GridStamp {
        GridStamp { dim: self.dim, cells: self.cells, bc: self.bc }
    }

    pub fn mode(&self) -> Mode {
        self.spec.mode()
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing[a]).product()
    }

    pub fn domain_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spec.extents[a]).product()
    }

    /// Physical coordinate of a staggered point along one axis.
    /// `node` points sit on cell boundaries, otherwise at cell centers.
    pub fn coord(&self, axis: usize, index: usize, node: bool) -> f64 {
        if node {
            index as f64 * self.spacing[axis]
        } else {
            (index as f64 + 0.5) * self.spacing[axis]
        }
    }

    /// Minimum distance to a wall from a staggered point; infinite when the
    /// grid has no wall axis.
    pub fn wall_distance_at_index(&self, idx: [usize; 3], node: [bool; 3]) -> f64 {
        let mut rho = f64::INFINITY;
        for a in 0..self.dim {
            if self.bc[a] == AxisBc::Wall {
                let x = self.coord(a, idx[a], node[a]);
                rho = rho.min(x.min(self.spec.extents[a] - x));
            }
        }
        rho
    }

    /// Wall distance evaluated exactly on an arbitrary staggered layout.
    pub fn wall_distance_on(&self, layout: Layout) -> Buf {
        let mut out = Buf::zeros(layout);
        for (lin, idx) in layout.iter().enumerate() {
            out.data[lin] = self.wall_distance_at_index(idx, layout.node);
        }
        out
    }
}

/// Prandtl mixing-length profiles, evaluated on the wall distance and
/// mirrored about mid-channel by construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum MixingLengthProfile {
    /// `ell = kappa * rho`.
    Obukhov { kappa: f64 },
    /// `ell = kappa * rho * (1 - exp(-rho / a))`.
    VanDriest { kappa: f64, a: f64 },
    Constant { ell0: f64 },
    /// Piecewise-linear in the wall distance, clamped outside the samples.
    Tabulated { rho: Vec<f64>, ell: Vec<f64> },
}

impl MixingLengthProfile {
    pub fn obukhov(kappa: f64) -> Result<Self> {
        check_kappa(kappa, false)?;
        Ok(Self::Obukhov { kappa })
    }

    pub fn van_driest(kappa: f64, a: f64) -> Result<Self> {
        check_kappa(kappa, false)?;
        if !(a > 0.0) {
            return Err(Error::InvalidParameter(format!("Van Driest A must be > 0, got {a}")));
        }
        Ok(Self::VanDriest { kappa, a })
    }

    /// Default damping scale: the profile reaches 95% of the Obukhov value
    /// at a quarter channel height.
    pub fn van_driest_default_a(h: f64) -> f64 {
        h / (4.0 * 20.0_f64.ln())
    }

    pub fn constant(ell0: f64) -> Result<Self> {
        if !(ell0 >= 0.0) {
            return Err(Error::InvalidParameter(format!("constant ell must be >= 0, got {ell0}")));
        }
        Ok(Self::Constant { ell0 })
    }

    pub fn tabulated(rho: Vec<f64>, ell: Vec<f64>) -> Result<Self> {
        if rho.len() != ell.len() || rho.len() < 2 {
            return Err(Error::InvalidParameter(
                "tabulated profile needs at least two matching samples".into(),
            ));
        }
        if rho.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("tabulated abscissae must increase".into()));
        }
        if ell.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidParameter("tabulated values must be >= 0".into()));
        }
        Ok(Self::Tabulated { rho, ell })
    }

    /// Validates parameter ranges. `kappa_override` lifts the Von Karman
    /// interval restriction.
    pub fn validate(&self, kappa_override: bool) -> Result<()> {
        match self {
            Self::Obukhov { kappa } => check_kappa(*kappa, kappa_override),
            Self::VanDriest { kappa, a } => {
                check_kappa(*kappa, kappa_override)?;
                if !(*a > 0.0) {
                    return Err(Error::InvalidParameter("Van Driest A must be > 0".into()));
                }
                Ok(())
            }
            Self::Constant { ell0 } => {
                if !(*ell0 >= 0.0) {
                    return Err(Error::InvalidParameter("constant ell must be >= 0".into()));
                }
                Ok(())
            }
            Self::Tabulated { rho, ell } => {
                Self::tabulated(rho.clone(), ell.clone()).map(|_| ())
            }
        }
    }

    /// True for profiles defined through the wall distance.
    pub fn needs_walls(&self) -> bool {
        matches!(self, Self::Obukhov { .. } | Self::VanDriest { .. })
    }

    /// Pointwise evaluation on a wall distance.
    pub fn eval(&self, rho: f64) -> f64 {
        match self {
            Self::Obukhov { kappa } => kappa * rho,
            Self::VanDriest { kappa, a } => kappa * rho * (1.0 - (-rho / a).exp()),
            Self::Constant { ell0 } => *ell0,
            Self::Tabulated { rho: xs, ell: ys } => {
                if rho <= xs[0] {
                    return ys[0];
                }
                if rho >= *xs.last().unwrap() {
                    return *ys.last().unwrap();
                }
                let k = xs.partition_point(|x| *x <= rho) - 1;
                let t = (rho - xs[k]) / (xs[k + 1] - xs[k]);
                ys[k] + t * (ys[k + 1] - ys[k])
            }
        }
    }
}

fn check_kappa(kappa: f64, overridden: bool) -> Result<()> {
    if !(kappa > 0.0) {
        return Err(Error::InvalidParameter(format!("kappa must be > 0, got {kappa}")));
    }
    if !overridden && !(KAPPA_RANGE.0..=KAPPA_RANGE.1).contains(&kappa) {
        return Err(Error::InvalidParameter(format!(
            "kappa = {kappa} outside [{}, {}]; pass the override to allow it",
            KAPPA_RANGE.0, KAPPA_RANGE.1
        )));
    }
    Ok(())
}

/// Evaluates the mixing length on cell centers.
pub fn eval_mixing_length(profile: &MixingLengthProfile, grid: &Grid) -> Result<Buf> {
    profile.validate(true)?;
    if profile.needs_walls() && grid.mode() != Mode::Channel {
        return Err(Error::ProfileNeedsWalls);
    }
    let layout = Layout::cell(grid.cells);
    let mut out = Buf::zeros(layout);
    for (lin, idx) in layout.iter().enumerate() {
        out.data[lin] = profile.eval(grid.wall_distance_at_index(idx, [false; 3]));
    }
    Ok(out)
}

/// Boundary-layer length scale `alpha = nu / u_star`.
pub fn boundary_layer_scale(nu: f64, u_star: f64) -> Result<f64> {
    if !(nu > 0.0) {
        return Err(Error::InvalidParameter(format!("nu must be > 0, got {nu}")));
    }
    if !(u_star > 0.0) {
        return Err(Error::InvalidParameter(format!("u_star must be > 0, got {u_star}")));
    }
    Ok(nu / u_star)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn channel_16() -> Grid {
        build_grid(GridSpec::channel_2d(1.0, 1.0, 16, 16).unwrap()).unwrap()
    }

    #[test]
    fn wall_distance_at_quarter_height() {
        // H = 1, cell center at z = 0.25 sits 0.25 from the lower wall.
        let grid = build_grid(GridSpec::channel_2d(2.0, 1.0, 8, 4).unwrap()).unwrap();
        let idx = Layout::cell(grid.cells);
        let rho = grid.wall_distance.get(idx, [0, 1, 0]);
        assert_eq!(rho, 0.375); // (1 + 0.5)/4
        let rho_low = grid.wall_distance.get(idx, [0, 0, 0]);
        assert_eq!(rho_low, 0.125);
    }

    #[test]
    fn wall_distance_mirror_symmetry() {
        let grid = channel_16();
        let layout = Layout::cell(grid.cells);
        let nz = grid.cells[1];
        for i in 0..grid.cells[0] {
            for j in 0..nz {
                let a = grid.wall_distance.get(layout, [i, j, 0]);
                let b = grid.wall_distance.get(layout, [i, nz - 1 - j, 0]);
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn periodic_box_distance_is_infinite() {
        let grid = build_grid(GridSpec::periodic_box_2d(1.0, 1.0, 8, 8).unwrap()).unwrap();
        assert!(grid.wall_distance.data.iter().all(|r| r.is_infinite()));
    }

    #[test]
    fn rejects_degenerate_specs() {
        assert!(GridSpec::new(vec![0.0, 1.0], vec![8, 8], vec![AxisBc::Periodic, AxisBc::Wall]).is_err());
        assert!(GridSpec::new(vec![1.0, 1.0], vec![3, 8], vec![AxisBc::Periodic, AxisBc::Wall]).is_err());
        assert!(GridSpec::channel(
            vec![1.0, 1.0],
            vec![8, 8],
            vec![AxisBc::Periodic, AxisBc::Periodic]
        )
        .is_err());
    }

    #[test]
    fn obukhov_direct_value() {
        let p = MixingLengthProfile::obukhov(0.40).unwrap();
        assert!((p.eval(0.1) - 0.04).abs() < 1e-15);
        assert_eq!(p.eval(0.0), 0.0);
    }

    #[test]
    fn van_driest_quadratic_near_wall() {
        // ell ~ kappa rho^2 / A for rho -> 0.
        let a = 0.05;
        let p = MixingLengthProfile::van_driest(0.40, a).unwrap();
        for rho in [1e-4, 1e-5, 1e-6] {
            let expected = 0.40 * rho * rho / a;
            let got = p.eval(rho);
            assert!((got - expected).abs() < 0.40 * rho * rho * rho / (a * a));
        }
        assert_eq!(p.eval(0.0), 0.0);
    }

    #[test]
    fn van_driest_below_obukhov() {
        let grid = channel_16();
        let kappa = 0.40;
        let p = MixingLengthProfile::van_driest(kappa, 0.02).unwrap();
        let ell = eval_mixing_length(&p, &grid).unwrap();
        for (lin, idx) in Layout::cell(grid.cells).iter().enumerate() {
            let rho = grid.wall_distance_at_index(idx, [false; 3]);
            assert!(ell.data[lin] <= kappa * rho + 1e-15);
            assert!(ell.data[lin] >= 0.0);
            assert!(ell.data[lin] <= kappa * 0.5 + 1e-15); // kappa * H/2 bound
        }
    }

    #[test]
    fn constant_profile_everywhere() {
        let grid = build_grid(GridSpec::periodic_box_2d(1.0, 1.0, 8, 8).unwrap()).unwrap();
        let p = MixingLengthProfile::constant(0.02).unwrap();
        let ell = eval_mixing_length(&p, &grid).unwrap();
        assert!(ell.data.iter().all(|v| *v == 0.02));
    }

    #[test]
    fn wall_profile_rejected_on_periodic_box() {
        let grid = build_grid(GridSpec::periodic_box_2d(1.0, 1.0, 8, 8).unwrap()).unwrap();
        let p = MixingLengthProfile::obukhov(0.40).unwrap();
        assert!(matches!(eval_mixing_length(&p, &grid), Err(Error::ProfileNeedsWalls)));
    }

    #[test]
    fn interior_infimum_positive() {
        // Discrete counterpart of inf_K ell > 0 on interior sub-boxes.
        let grid = channel_16();
        let p = MixingLengthProfile::obukhov(0.40).unwrap();
        let ell = eval_mixing_length(&p, &grid).unwrap();
        let layout = Layout::cell(grid.cells);
        let mut inf = f64::INFINITY;
        for i in 2..14 {
            for j in 2..14 {
                inf = inf.min(ell.get(layout, [i, j, 0]));
            }
        }
        assert!(inf > 0.0);
    }

    #[test]
    fn mixing_length_mirror_symmetry() {
        let grid = channel_16();
        let p = MixingLengthProfile::van_driest(0.40, 0.03).unwrap();
        let ell = eval_mixing_length(&p, &grid).unwrap();
        let layout = Layout::cell(grid.cells);
        let nz = grid.cells[1];
        for i in 0..grid.cells[0] {
            for j in 0..nz {
                let a = ell.get(layout, [i, j, 0]);
                let b = ell.get(layout, [i, nz - 1 - j, 0]);
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn kappa_range_enforced_unless_overridden() {
        assert!(MixingLengthProfile::obukhov(0.50).is_err());
        let p = MixingLengthProfile::Obukhov { kappa: 0.50 };
        assert!(p.validate(false).is_err());
        assert!(p.validate(true).is_ok());
    }

    #[test]
    fn alpha_from_friction_velocity() {
        assert_eq!(boundary_layer_scale(1e-3, 0.1).unwrap(), 0.01);
        assert_eq!(boundary_layer_scale(1e-3, 1.0).unwrap(), 1e-3);
        assert!(boundary_layer_scale(1e-3, 0.0).is_err());
        assert!(boundary_layer_scale(0.0, 1.0).is_err());
    }

    #[test]
    fn tabulated_interpolates_and_clamps() {
        let p = MixingLengthProfile::tabulated(vec![0.0, 0.5, 1.0], vec![0.0, 0.1, 0.1]).unwrap();
        assert_eq!(p.eval(0.25), 0.05);
        assert_eq!(p.eval(2.0), 0.1);
        assert_eq!(p.eval(f64::INFINITY), 0.1);
    }
}
