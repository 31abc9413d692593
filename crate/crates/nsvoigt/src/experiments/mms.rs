//! Method-of-manufactured-solutions verification of the channel solver.
//!
//! The manufactured field comes from the streamfunction
//! `psi = g(t) sin(a x) sin^2(s z)` on the channel `[0, sqrt(2) H] x [0, H]`
//! (periodic in x, no-slip walls), so it is exactly divergence-free and
//! vanishes on the walls with its tangential component. The box ratio
//! `a^2 = 2 s^2` makes the off-diagonal deformation vanish on the
//! mid-channel plane, where the mirrored Van Driest profile has a slope
//! kink; the forcing stays smooth and the observed orders are clean
//! second order in both space and time.

use std::sync::Arc;

use crate::domain::{build_grid, GridSpec, MixingLengthProfile};
use crate::field::{vector_norm, VectorField};
use crate::voigt_core::{EddyViscosity, Forcing, PhysicsConfig, SchemeConfig, Stepper, VoigtForm};
use crate::Result;

/// One manufactured-solution configuration.
#[derive(Clone, Debug)]
pub struct MmsCase {
    pub name: &'static str,
    pub nu: f64,
    pub alpha: f64,
    pub profile: MixingLengthProfile,
    /// Streamfunction amplitude.
    pub amp: f64,
    /// Temporal frequency of `g(t) = g0 + g1 cos(omega t)`.
    pub omega: f64,
}

impl MmsCase {
    /// Classical Navier-Stokes limit: no Voigt term, no eddy viscosity.
    pub fn classical() -> Self {
        MmsCase {
            name: "classical",
            nu: 0.05,
            alpha: 0.0,
            profile: MixingLengthProfile::Constant { ell0: 0.0 },
            amp: 0.35,
            omega: 1.5,
        }
    }

    /// Voigt term active with the Van Driest mixing length.
    pub fn voigt_van_driest() -> Self {
        let h = 1.0;
        MmsCase {
            name: "voigt_van_driest",
            nu: 0.05,
            alpha: 0.08,
            profile: MixingLengthProfile::van_driest(
                0.40,
                MixingLengthProfile::van_driest_default_a(h),
            )
            .unwrap(),
            amp: 0.35,
            omega: 1.5,
        }
    }
}

// Channel geometry shared by all cases.
const H: f64 = 1.0;

fn lx() -> f64 {
    2.0f64.sqrt() * H
}

struct Exact {
    a: f64,
    s: f64,
    amp: f64,
    omega: f64,
    nu: f64,
    alpha: f64,
    profile: MixingLengthProfile,
}

impl Exact {
    fn new(case: &MmsCase) -> Self {
        Exact {
            a: 2.0 * std::f64::consts::PI / lx(),
            s: std::f64::consts::PI / H,
            amp: case.amp,
            omega: case.omega,
            nu: case.nu,
            alpha: case.alpha,
            profile: case.profile.clone(),
        }
    }

    fn g(&self, t: f64) -> f64 {
        self.amp * (0.6 + 0.4 * (self.omega * t).cos())
    }

    fn g_dot(&self, t: f64) -> f64 {
        -self.amp * 0.4 * self.omega * (self.omega * t).sin()
    }

    /// Spatial profile of the velocity (the factor multiplying `g`).
    fn shape(&self, x: f64, z: f64) -> (f64, f64) {
        let (a, s) = (self.a, self.s);
        let u = s * (a * x).sin() * (2.0 * s * z).sin();
        let w = -a * (a * x).cos() * (s * z).sin().powi(2);
        (u, w)
    }

    fn velocity(&self, t: f64, x: f64, z: f64) -> (f64, f64) {
        let g = self.g(t);
        let (u, w) = self.shape(x, z);
        (g * u, g * w)
    }

    /// Mixing length and its z-derivative for the mirrored wall profile.
    fn ell_and_slope(&self, z: f64) -> (f64, f64) {
        let rho = z.min(H - z);
        let sign = if z <= 0.5 * H { 1.0 } else { -1.0 };
        match &self.profile {
            MixingLengthProfile::Constant { ell0 } => (*ell0, 0.0),
            MixingLengthProfile::Obukhov { kappa } => (kappa * rho, sign * kappa),
            MixingLengthProfile::VanDriest { kappa, a } => {
                let e = (-rho / a).exp();
                (kappa * rho * (1.0 - e), sign * kappa * ((1.0 - e) + rho / a * e))
            }
            MixingLengthProfile::Tabulated { .. } => unreachable!("not used in manufactured cases"),
        }
    }

    /// Forcing that makes the manufactured pair an exact solution.
    fn forcing(&self, t: f64, x: f64, z: f64) -> (f64, f64) {
        let (a, s) = (self.a, self.s);
        let g = self.g(t);
        let gd = self.g_dot(t);
        let sin_ax = (a * x).sin();
        let cos_ax = (a * x).cos();
        let sin_2sz = (2.0 * s * z).sin();
        let cos_2sz = (2.0 * s * z).cos();
        let sin_sz2 = (s * z).sin().powi(2);

        let u1 = s * sin_ax * sin_2sz;
        let w1 = -a * cos_ax * sin_sz2;

        let u1_x = a * s * cos_ax * sin_2sz;
        let u1_z = 2.0 * s * s * sin_ax * cos_2sz;
        let w1_x = a * a * sin_ax * sin_sz2;
        let w1_z = -a * s * cos_ax * sin_2sz;

        let lap_u1 = -(a * a + 4.0 * s * s) * u1;
        let lap_w1 = -a * a * w1 - 2.0 * a * s * s * cos_ax * cos_2sz;

        // Time derivative.
        let mut fx = gd * u1;
        let mut fz = gd * w1;

        // Voigt: -alpha div(ell D v_t) with v_t = g_dot * V.
        if self.alpha > 0.0 {
            let (ell, ell_z) = self.ell_and_slope(z);
            let dxz = 0.5 * (u1_z + w1_x);
            let dzz = w1_z;
            fx -= self.alpha * gd * (0.5 * ell * lap_u1 + dxz * ell_z);
            fz -= self.alpha * gd * (0.5 * ell * lap_w1 + dzz * ell_z);
        }

        // Advection (v . grad) v = g^2 (V . grad) V.
        fx += g * g * (u1 * u1_x + w1 * u1_z);
        fz += g * g * (u1 * w1_x + w1 * w1_z);

        // Viscous term -nu Lap v.
        fx -= self.nu * g * lap_u1;
        fz -= self.nu * g * lap_w1;

        // Pressure gradient, p = g^2 sin(a x) cos(2 s z).
        fx += g * g * a * cos_ax * cos_2sz;
        fz -= g * g * 2.0 * s * sin_ax * sin_2sz;

        (fx, fz)
    }
}

fn exact_field(grid: &crate::domain::Grid, exact: &Exact, t: f64) -> VectorField {
    VectorField::from_fn(grid, |c, idx| {
        let layout = crate::field::Layout::velocity(grid, c);
        let x = grid.coord(0, idx[0], layout.node[0]);
        let z = grid.coord(1, idx[1], layout.node[1]);
        let (u, w) = exact.velocity(t, x, z);
        if c == 0 {
            u
        } else {
            w
        }
    })
}

fn make_stepper(case: &MmsCase, n: usize) -> Result<(Arc<crate::domain::Grid>, Stepper)> {
    let grid = Arc::new(build_grid(GridSpec::channel_2d(lx(), H, n, n)?)?);
    let exact = Exact::new(case);
    let forcing_fn = move |g: &crate::domain::Grid, t: f64| -> VectorField {
        VectorField::from_fn(g, |c, idx| {
            let layout = crate::field::Layout::velocity(g, c);
            let x = g.coord(0, idx[0], layout.node[0]);
            let z = g.coord(1, idx[1], layout.node[1]);
            let (fx, fz) = exact.forcing(t, x, z);
            if c == 0 {
                fx
            } else {
                fz
            }
        })
    };
    let physics = PhysicsConfig {
        nu: case.nu,
        alpha: case.alpha,
        profile: case.profile.clone(),
        forcing: Forcing::TimeFn(Arc::new(forcing_fn)),
        eddy: EddyViscosity::None,
        eddy_bound: 0.0,
        voigt_form: VoigtForm::DivEllD,
    };
    let stepper = Stepper::new(grid.clone(), physics, SchemeConfig::default())?;
    Ok((grid, stepper))
}

/// Runs one case at one resolution with the given step count over `t_end`,
/// returning the final-time L2 error against the manufactured field.
fn run_error(case: &MmsCase, n: usize, t_end: f64, steps: usize) -> Result<f64> {
    let (grid, stepper) = make_stepper(case, n)?;
    let exact = Exact::new(case);
    let mut state = stepper.initial_state(&exact_field(&grid, &exact, 0.0))?;
    let dt = t_end / steps as f64;
    for _ in 0..steps {
        state = stepper.step(&state, dt)?.0;
    }
    let mut diff = state.v.clone();
    diff.axpy(-1.0, &exact_field(&grid, &exact, state.t));
    Ok(vector_norm(&grid, &diff))
}

/// Final state on a fixed grid for the temporal Richardson study.
fn run_final_state(case: &MmsCase, n: usize, t_end: f64, steps: usize) -> Result<(Arc<crate::domain::Grid>, VectorField)> {
    let (grid, stepper) = make_stepper(case, n)?;
    let exact = Exact::new(case);
    let mut state = stepper.initial_state(&exact_field(&grid, &exact, 0.0))?;
    let dt = t_end / steps as f64;
    for _ in 0..steps {
        state = stepper.step(&state, dt)?.0;
    }
    Ok((grid, state.v))
}

#[derive(Clone, Debug)]
pub struct MmsTable {
    pub case_name: &'static str,
    pub resolutions: Vec<usize>,
    pub spatial_errors: Vec<f64>,
    pub spatial_order: f64,
    pub dts: Vec<f64>,
    pub temporal_errors: Vec<f64>,
    pub temporal_order: f64,
}

fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Observed spatial and temporal convergence orders for one case.
///
/// Spatial study: `dt` proportional to `dx`, error against the exact field
/// (both error components are second order, so the slope against `dx` is the
/// scheme order). Temporal study: fixed grid, `dt` halved twice, errors
/// against a much finer reference run on the same grid.
pub fn mms_convergence(case: &MmsCase, resolutions: &[usize]) -> Result<MmsTable> {
    let t_end = 0.25;
    let mut spatial_errors = Vec::new();
    for &n in resolutions {
        // dt = t_end / (2 n) keeps dt/dx fixed across the sweep.
        let err = run_error(case, n, t_end, 2 * n)?;
        spatial_errors.push(err);
    }
    let xs: Vec<f64> = resolutions.iter().map(|n| (1.0 / *n as f64).ln()).collect();
    let ys: Vec<f64> = spatial_errors.iter().map(|e| e.ln()).collect();
    let spatial_order = ls_slope(&xs, &ys);

    let n_t = 32;
    let base_steps = [8usize, 16, 32];
    let ref_steps = 256;
    let (grid, v_ref) = run_final_state(case, n_t, t_end, ref_steps)?;
    let mut temporal_errors = Vec::new();
    let mut dts = Vec::new();
    for &steps in &base_steps {
        let (_, v) = run_final_state(case, n_t, t_end, steps)?;
        let mut diff = v.clone();
        diff.axpy(-1.0, &v_ref);
        temporal_errors.push(vector_norm(&grid, &diff));
        dts.push(t_end / steps as f64);
    }
    let xt: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
    let yt: Vec<f64> = temporal_errors.iter().map(|e| e.ln()).collect();
    let temporal_order = ls_slope(&xt, &yt);

    Ok(MmsTable {
        case_name: case.name,
        resolutions: resolutions.to_vec(),
        spatial_errors,
        spatial_order,
        dts,
        temporal_errors,
        temporal_order,
    })
}
