//! Spectral Galerkin oracle on the 2D periodic box.
//!
//! The basis is the divergence-free trigonometric family: for each
//! half-space wavevector `kappa` the two fields
//! `sqrt(2/|O|) e(kappa) {cos, sin}(kappa . x)` with `e = kappa_perp/|kappa|`,
//! orthonormal in L2. Projecting the generalized Voigt system onto the first
//! `n` modes gives the ODE system
//!
//! ```text
//! c'_j (d_jm + a_jm) + c_j b_jm + c_j c_l g_jlm = f_m
//! ```
//!
//! assembled by rectangle-rule quadrature (exact for trigonometric
//! polynomials below the grid Nyquist). The same Crank-Nicolson/midpoint
//! scheme integrates the coefficients, giving an independent discretisation
//! to cross-validate the grid solver on matched configurations.

use nalgebra::{Cholesky, DMatrix, DVector};

use std::sync::Arc;

use crate::domain::{build_grid, Grid, GridSpec};
use crate::field::VectorField;
use crate::voigt_core::{EddyViscosity, Forcing, PhysicsConfig, SchemeConfig, Stepper, VoigtForm};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Cos,
    Sin,
}

/// One divergence-free trigonometric mode.
#[derive(Clone, Copy, Debug)]
pub struct ModeSpec {
    /// Integer wavenumbers; the physical wavevector is `2 pi m / L`.
    pub mx: i32,
    pub mz: i32,
    pub phase: Phase,
}

impl ModeSpec {
    fn wavevector(&self, lx: f64, lz: f64) -> (f64, f64) {
        (
            2.0 * std::f64::consts::PI * self.mx as f64 / lx,
            2.0 * std::f64::consts::PI * self.mz as f64 / lz,
        )
    }

    /// Velocity of the mode at a point (orthonormal in L2 over the box).
    pub fn eval(&self, lx: f64, lz: f64, x: f64, z: f64) -> (f64, f64) {
        let (kx, kz) = self.wavevector(lx, lz);
        let norm = (2.0 / (lx * lz)).sqrt() / (kx * kx + kz * kz).sqrt();
        let (ex, ez) = (-kz, kx);
        let t = kx * x + kz * z;
        let s = match self.phase {
            Phase::Cos => t.cos(),
            Phase::Sin => t.sin(),
        };
        (norm * ex * s, norm * ez * s)
    }

    /// Velocity gradient entries (d_x u, d_z u, d_x w, d_z w).
    fn grad(&self, lx: f64, lz: f64, x: f64, z: f64) -> (f64, f64, f64, f64) {
        let (kx, kz) = self.wavevector(lx, lz);
        let norm = (2.0 / (lx * lz)).sqrt() / (kx * kx + kz * kz).sqrt();
        let (ex, ez) = (-kz, kx);
        let t = kx * x + kz * z;
        let ds = match self.phase {
            Phase::Cos => -t.sin(),
            Phase::Sin => t.cos(),
        };
        (norm * ex * ds * kx, norm * ex * ds * kz, norm * ez * ds * kx, norm * ez * ds * kz)
    }
}

/// Lists the first `n` modes ordered by `|kappa|^2` (cos before sin).
pub fn mode_list(n: usize) -> Vec<ModeSpec> {
    let mut pairs = Vec::new();
    let maxm = 6i32;
    for mx in 0..=maxm {
        for mz in -maxm..=maxm {
            if mx == 0 && mz <= 0 {
                continue; // half-space selection, no zero mode
            }
            pairs.push((mx, mz));
        }
    }
    pairs.sort_by_key(|(mx, mz)| (mx * mx + mz * mz, *mx, *mz));
    let mut out = Vec::with_capacity(n);
    'outer: for (mx, mz) in pairs {
        for phase in [Phase::Cos, Phase::Sin] {
            out.push(ModeSpec { mx, mz, phase });
            if out.len() == n {
                break 'outer;
            }
        }
    }
    out
}

/// Assembled Galerkin system.
#[derive(Clone, Debug)]
pub struct GalerkinSystem {
    pub n: usize,
    pub lx: f64,
    pub lz: f64,
    pub modes: Vec<ModeSpec>,
    /// `a_jm = alpha (ell D psi_j, D psi_m)`.
    pub a: DMatrix<f64>,
    /// `b_jm = nu (grad psi_j, grad psi_m)`.
    pub b: DMatrix<f64>,
    /// `g_jlm = ((psi_j . grad) psi_l, psi_m)`, flattened `j*n*n + l*n + m`.
    pub gamma: Vec<f64>,
    /// Steady forcing coefficients `f_m`.
    pub forcing: DVector<f64>,
    /// Cholesky factor of `I + A` (existence of the factor is the
    /// invertibility check).
    pub mass_chol: Cholesky<f64, nalgebra::Dyn>,
}

/// Mixing length on the periodic box for the oracle: constant or a strictly
/// positive smooth periodic function.
#[derive(Clone)]
pub enum EllSpec {
    Constant(f64),
    PeriodicFn(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl EllSpec {
    fn eval(&self, x: f64, z: f64) -> f64 {
        match self {
            EllSpec::Constant(c) => *c,
            EllSpec::PeriodicFn(f) => f(x, z),
        }
    }
}

/// Assembles the system matrices by quadrature on an `nq x nq` grid.
pub fn build_galerkin(
    n: usize,
    alpha: f64,
    ell: &EllSpec,
    nu: f64,
    lx: f64,
    lz: f64,
    forcing: Option<&dyn Fn(f64, f64) -> (f64, f64)>,
) -> Result<GalerkinSystem> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one mode".into()));
    }
    let modes = mode_list(n);
    let maxm = modes.iter().map(|m| m.mx.abs().max(m.mz.abs())).max().unwrap() as usize;
    let nq = (4 * maxm + 4).max(16);
    let (hx, hz) = (lx / nq as f64, lz / nq as f64);
    let w = hx * hz;

    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DMatrix::<f64>::zeros(n, n);
    let mut gamma = vec![0.0; n * n * n];
    let mut f = DVector::<f64>::zeros(n);

    // Cache mode values and gradients on the quadrature grid.
    let mut vals = vec![(0.0f64, 0.0f64); n * nq * nq];
    let mut grads = vec![(0.0f64, 0.0f64, 0.0f64, 0.0f64); n * nq * nq];
    for (j, m) in modes.iter().enumerate() {
        for ix in 0..nq {
            for iz in 0..nq {
                let x = (ix as f64 + 0.5) * hx;
                let z = (iz as f64 + 0.5) * hz;
                vals[(j * nq + ix) * nq + iz] = m.eval(lx, lz, x, z);
                grads[(j * nq + ix) * nq + iz] = m.grad(lx, lz, x, z);
            }
        }
    }

    for ix in 0..nq {
        for iz in 0..nq {
            let x = (ix as f64 + 0.5) * hx;
            let z = (iz as f64 + 0.5) * hz;
            let ell_v = ell.eval(x, z);
            let fv = forcing.map(|g| g(x, z));
            for j in 0..n {
                let gj = grads[(j * nq + ix) * nq + iz];
                let vj = vals[(j * nq + ix) * nq + iz];
                // D psi entries: dxx, dxz, dzz.
                let dj = (gj.0, 0.5 * (gj.1 + gj.2), gj.3);
                if let Some((fx, fz)) = fv {
                    f[j] += w * (fx * vj.0 + fz * vj.1);
                }
                for m in 0..n {
                    let gm = grads[(m * nq + ix) * nq + iz];
                    let dm = (gm.0, 0.5 * (gm.1 + gm.2), gm.3);
                    // Frobenius product with the symmetric double count.
                    let dd = dj.0 * dm.0 + dj.2 * dm.2 + 2.0 * dj.1 * dm.1;
                    a[(j, m)] += w * alpha * ell_v * dd;
                    let gg = gj.0 * gm.0 + gj.1 * gm.1 + gj.2 * gm.2 + gj.3 * gm.3;
                    b[(j, m)] += w * nu * gg;
                    let vm = vals[(m * nq + ix) * nq + iz];
                    for l in 0..n {
                        let gl = grads[(l * nq + ix) * nq + iz];
                        // (psi_j . grad) psi_l . psi_m
                        let conv_x = vj.0 * gl.0 + vj.1 * gl.1;
                        let conv_z = vj.0 * gl.2 + vj.1 * gl.3;
                        gamma[(j * n + l) * n + m] += w * (conv_x * vm.0 + conv_z * vm.1);
                    }
                }
            }
        }
    }

    let mut mass = DMatrix::<f64>::identity(n, n);
    mass += &a;
    // Symmetrise against quadrature round-off before factoring.
    let mass = 0.5 * (&mass + mass.transpose());
    let mass_chol = Cholesky::new(mass).ok_or(Error::GalerkinNotSpd)?;
    // The viscous matrix must be SPD as well; a failure here means the
    // assembly quadrature is broken.
    Cholesky::new(0.5 * (&b + b.transpose())).ok_or(Error::GalerkinNotSpd)?;

    Ok(GalerkinSystem { n, lx, lz, modes, a, b, gamma, forcing: f, mass_chol })
}

impl GalerkinSystem {
    /// `sum_jl c_j c_l gamma_jlm` for all `m`.
    fn quadratic(&self, c: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let mut out = DVector::zeros(n);
        for j in 0..n {
            let cj = c[j];
            if cj == 0.0 {
                continue;
            }
            for l in 0..n {
                let cl = cj * c[l];
                if cl == 0.0 {
                    continue;
                }
                let base = (j * n + l) * n;
                for m in 0..n {
                    out[m] += cl * self.gamma[base + m];
                }
            }
        }
        out
    }

    /// Model energy `E = (c.c + c.Ac)/2`.
    pub fn energy(&self, c: &DVector<f64>) -> f64 {
        0.5 * (c.dot(c) + c.dot(&(&self.a * c)))
    }

    /// Synthesises the velocity field of a coefficient vector on a grid.
    pub fn synthesize(&self, grid: &Grid, c: &DVector<f64>) -> VectorField {
        VectorField::from_fn(grid, |comp, idx| {
            let layout = crate::field::Layout::velocity(grid, comp);
            let x = grid.coord(0, idx[0], layout.node[0]);
            let z = grid.coord(1, idx[1], layout.node[1]);
            let mut acc = 0.0;
            for (j, m) in self.modes.iter().enumerate() {
                let (u, w) = m.eval(self.lx, self.lz, x, z);
                acc += c[j] * if comp == 0 { u } else { w };
            }
            acc
        })
    }
}

#[derive(Clone, Debug)]
pub struct GalerkinTrajectory {
    pub times: Vec<f64>,
    pub coefs: Vec<DVector<f64>>,
    pub energies: Vec<f64>,
    /// Largest per-step energy-identity residual.
    pub max_energy_residual: f64,
}

/// Integrates the coefficient ODE with the Crank-Nicolson/midpoint scheme
/// and Picard sub-iterations; per step the discrete energy identity
/// `dE + dt c_mid.B c_mid = dt c_mid.f` holds to the Picard tolerance.
pub fn integrate_galerkin(
    sys: &GalerkinSystem,
    c0: &DVector<f64>,
    t_end: f64,
    dt: f64,
    tol_picard: f64,
) -> Result<GalerkinTrajectory> {
    if !(dt > 0.0 && t_end >= dt) {
        return Err(Error::InvalidParameter("need 0 < dt <= t_end".into()));
    }
    let n = sys.n;
    if c0.len() != n {
        return Err(Error::InvalidParameter("initial coefficients have wrong length".into()));
    }
    let steps = (t_end / dt).round() as usize;
    let mass = DMatrix::<f64>::identity(n, n) + &sys.a;
    let lhs = &mass / dt + &sys.b * 0.5;
    let lhs = 0.5 * (&lhs + lhs.transpose());
    let lhs_chol = Cholesky::new(lhs).ok_or(Error::GalerkinNotSpd)?;

    let mut times = vec![0.0];
    let mut coefs = vec![c0.clone()];
    let mut energies = vec![sys.energy(c0)];
    let mut max_res: f64 = 0.0;

    let mut c = c0.clone();
    for s in 0..steps {
        let mut c_new = c.clone();
        let mut converged = false;
        for _ in 0..60 {
            let c_mid = 0.5 * (&c + &c_new);
            let rhs = &sys.forcing - sys.quadratic(&c_mid) + &mass * (&c / dt) - &sys.b * (0.5 * &c);
            let next = lhs_chol.solve(&rhs);
            let update = (&next - &c_new).norm();
            c_new = next;
            if update < tol_picard {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::PicardDiverged { residual: f64::NAN, iterations: 60 });
        }
        let c_mid = 0.5 * (&c + &c_new);
        let e_old = sys.energy(&c);
        let e_new = sys.energy(&c_new);
        let res = e_new - e_old + dt * c_mid.dot(&(&sys.b * &c_mid)) - dt * c_mid.dot(&sys.forcing);
        max_res = max_res.max(res.abs());
        c = c_new;
        times.push((s + 1) as f64 * dt);
        coefs.push(c.clone());
        energies.push(sys.energy(&c));
    }

    Ok(GalerkinTrajectory { times, coefs, energies, max_energy_residual: max_res })
}

/// Result of the Galerkin/grid cross-validation.
#[derive(Clone, Debug)]
pub struct AgreementReport {
    pub max_energy_gap: f64,
    pub bound: f64,
    pub grid_residual: f64,
    pub galerkin_residual: f64,
    pub richardson_grid: f64,
    pub richardson_galerkin: f64,
    pub pass: bool,
}

/// Runs the `n`-mode system and the grid solver on a matched periodic
/// configuration and compares the energy series. The tolerance is the sum of
/// both solvers' energy-identity residuals plus Richardson estimates of the
/// two discretisation errors (grid refined once in space, the ODE once in
/// time and truncation order).
pub fn galerkin_grid_agreement(n_modes: usize, cells: usize, t_end: f64, dt: f64) -> Result<AgreementReport> {
    let lx = 2.0 * std::f64::consts::PI;
    let lz = 2.0 * std::f64::consts::PI;
    let nu = 2e-2;
    let alpha = 0.1;
    let ell0 = 0.15;

    let sys = build_galerkin(n_modes, alpha, &EllSpec::Constant(ell0), nu, lx, lz, None)?;
    let mut c0 = DVector::zeros(n_modes);
    c0[0] = 0.4;
    c0[1] = -0.25;
    c0[2] = 0.2;
    c0[3] = 0.15;

    let run_grid = |cells: usize| -> Result<(Vec<f64>, f64)> {
        let grid = Arc::new(build_grid(GridSpec::periodic_box_2d(lx, lz, cells, cells)?)?);
        let physics = PhysicsConfig {
            nu,
            alpha,
            profile: crate::domain::MixingLengthProfile::constant(ell0)?,
            forcing: Forcing::None,
            eddy: EddyViscosity::None,
            eddy_bound: 0.0,
            voigt_form: VoigtForm::DivEllD,
        };
        let stepper = Stepper::new(grid.clone(), physics, SchemeConfig::default())?;
        let v0 = sys.synthesize(&grid, &c0);
        let mut state = stepper.initial_state(&v0)?;
        let mut ledger = crate::voigt_core::EnergyLedger::new(stepper.energy(&state.v)?);
        let steps = (t_end / dt).round() as usize;
        let mut energies = vec![ledger.e0];
        for _ in 0..steps {
            let (next, stats) = stepper.step(&state, dt)?;
            crate::voigt_core::energy::energy_update(
                &mut ledger, &stepper, &state, &next, dt, &stats, None, false,
            )?;
            energies.push(stepper.energy(&next.v)?);
            state = next;
        }
        Ok((energies, ledger.max_step_residual() * steps as f64))
    };

    let (e_grid, grid_residual) = run_grid(cells)?;
    let (e_grid_fine, _) = run_grid(cells * 2)?;

    let tol = 1e-12;
    let traj = integrate_galerkin(&sys, &c0, t_end, dt, tol)?;
    let traj_fine_dt = integrate_galerkin(&sys, &c0, t_end, 0.5 * dt, tol)?;
    let sys_big = build_galerkin(n_modes * 2, alpha, &EllSpec::Constant(ell0), nu, lx, lz, None)?;
    let mut c0_big = DVector::zeros(n_modes * 2);
    for j in 0..n_modes {
        c0_big[j] = c0[j];
    }
    let traj_big = integrate_galerkin(&sys_big, &c0_big, t_end, dt, tol)?;

    // Richardson estimates: second order in space (4/3 factor) and the mode
    // truncation gap taken at face value.
    let mut rich_grid: f64 = 0.0;
    let mut gap: f64 = 0.0;
    let mut rich_gal_dt: f64 = 0.0;
    let mut rich_gal_n: f64 = 0.0;
    for i in 0..e_grid.len() {
        rich_grid = rich_grid.max((e_grid[i] - e_grid_fine[i]).abs() * 4.0 / 3.0);
        gap = gap.max((e_grid[i] - traj.energies[i]).abs());
        rich_gal_n = rich_gal_n.max((traj.energies[i] - traj_big.energies[i]).abs());
    }
    for i in 0..traj.energies.len() {
        rich_gal_dt = rich_gal_dt.max((traj.energies[i] - traj_fine_dt.energies[2 * i]).abs() * 4.0 / 3.0);
    }
    let galerkin_residual = traj.max_energy_residual * traj.times.len() as f64;
    let richardson_galerkin = rich_gal_dt + rich_gal_n;
    let bound = grid_residual + galerkin_residual + 1.5 * (rich_grid + richardson_galerkin);
    Ok(AgreementReport {
        max_energy_gap: gap,
        bound,
        grid_residual,
        galerkin_residual,
        richardson_grid: rich_grid,
        richardson_galerkin,
        pass: gap <= bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_orthonormal_and_divergence_free() {
        let lx = 2.0 * std::f64::consts::PI;
        let lz = lx;
        let modes = mode_list(6);
        let nq = 48;
        let h = lx / nq as f64;
        for (i, a) in modes.iter().enumerate() {
            for (j, b) in modes.iter().enumerate() {
                let mut dot = 0.0;
                for ix in 0..nq {
                    for iz in 0..nq {
                        let x = (ix as f64 + 0.5) * h;
                        let z = (iz as f64 + 0.5) * h;
                        let va = a.eval(lx, lz, x, z);
                        let vb = b.eval(lx, lz, x, z);
                        dot += (va.0 * vb.0 + va.1 * vb.1) * h * h;
                    }
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-10, "modes {i},{j}: {dot}");
            }
        }
        // Divergence-free: grad entries satisfy d_x u + d_z w = 0.
        for m in &modes {
            let g = m.grad(lx, lz, 1.234, 2.345);
            assert!((g.0 + g.3).abs() < 1e-14);
        }
    }

    #[test]
    fn single_mode_voigt_matrix_value() {
        // For one mode and constant ell: a_11 = alpha ell0 |kappa|^2 / 2
        // (the mode is L2-normalised, |D psi|^2 integrates to |kappa|^2/2).
        let lx = 2.0 * std::f64::consts::PI;
        let alpha = 0.3;
        let ell0 = 0.2;
        let sys = build_galerkin(1, alpha, &EllSpec::Constant(ell0), 1e-2, lx, lx, None).unwrap();
        let m = sys.modes[0];
        let k2 = {
            let (kx, kz) = (2.0 * std::f64::consts::PI * m.mx as f64 / lx, 2.0 * std::f64::consts::PI * m.mz as f64 / lx);
            kx * kx + kz * kz
        };
        assert!((sys.a[(0, 0)] - alpha * ell0 * k2 / 2.0).abs() < 1e-10);
    }

    #[test]
    fn gamma_skew_in_last_two_indices() {
        let lx = 2.0 * std::f64::consts::PI;
        let n = 6;
        let sys = build_galerkin(n, 0.1, &EllSpec::Constant(0.2), 1e-2, lx, lx, None).unwrap();
        for j in 0..n {
            for l in 0..n {
                for m in 0..n {
                    let g1 = sys.gamma[(j * n + l) * n + m];
                    let g2 = sys.gamma[(j * n + m) * n + l];
                    assert!((g1 + g2).abs() < 1e-10, "gamma not skew at ({j},{l},{m})");
                }
            }
        }
    }

    #[test]
    fn zero_ell_reduces_to_nse_mass() {
        let lx = 2.0 * std::f64::consts::PI;
        let sys = build_galerkin(4, 0.5, &EllSpec::Constant(0.0), 1e-2, lx, lx, None).unwrap();
        assert!(sys.a.amax() < 1e-12);
    }

    #[test]
    fn periodic_ell_stays_spd() {
        let lx = 2.0 * std::f64::consts::PI;
        let ell = EllSpec::PeriodicFn(Arc::new(move |x: f64, z: f64| 0.2 + 0.1 * (x).sin() * (z).cos()));
        assert!(build_galerkin(8, 0.3, &ell, 1e-2, lx, lx, None).is_ok());
    }

    #[test]
    fn zero_forcing_zero_state() {
        let lx = 2.0 * std::f64::consts::PI;
        let sys = build_galerkin(4, 0.1, &EllSpec::Constant(0.1), 1e-2, lx, lx, None).unwrap();
        let traj = integrate_galerkin(&sys, &DVector::zeros(4), 0.5, 0.05, 1e-12).unwrap();
        assert!(traj.coefs.last().unwrap().amax() == 0.0);
    }

    #[test]
    fn linearised_single_mode_decay_rate() {
        // With the quadratic term inert (single mode: gamma_111 = 0 by skew
        // symmetry), c(t) = c0 exp(-b11/(1+a11) t); CN matches to O(dt^2).
        let lx = 2.0 * std::f64::consts::PI;
        let sys = build_galerkin(1, 0.25, &EllSpec::Constant(0.3), 5e-2, lx, lx, None).unwrap();
        let a11 = sys.a[(0, 0)];
        let b11 = sys.b[(0, 0)];
        let c0 = DVector::from_vec(vec![0.7]);
        let t_end = 1.0;
        let dt = 0.01;
        let traj = integrate_galerkin(&sys, &c0, t_end, dt, 1e-13).unwrap();
        let exact = 0.7 * (-b11 / (1.0 + a11) * t_end).exp();
        let got = traj.coefs.last().unwrap()[0];
        assert!((got - exact).abs() < 1e-4 * exact, "{got} vs {exact}");
        assert!(traj.max_energy_residual < 1e-11);
    }
}
