//! The coupled flow/TKE system and its modelling-layer diagnostics.
//!
//! Within one time step the flow is advanced with the frozen closure
//! `nu_t(k)` and the TKE with the new velocity; the pair is iterated until
//! the combined change drops below `tol_couple` (per-step Picard). The
//! `LaggedSinglePass` mode instead performs exactly one pass with the TKE
//! advected by the previous velocity, reproducing the ordering of the
//! iterative existence scheme.

use crate::domain::Grid;
use crate::field::{scalar_dot, tensor_dot, vector_norm, Buf, Layout, TensorField, VectorField};
use crate::operators::{deformation, tensor_scale, TensorCoeff};
use crate::tke::{eddy_viscosity, tke_step, KField, TkeBudget, TkeConfig};
use crate::voigt_core::{State, StepStats, Stepper};
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CouplingMode {
    /// Iterate flow and TKE inside the step until the pair settles.
    PerStepPicard,
    /// One pass; the TKE sees the previous step's velocity.
    LaggedSinglePass,
}

#[derive(Clone, Copy, Debug)]
pub struct CouplingConfig {
    pub mode: CouplingMode,
    pub tol_couple: f64,
    pub max_couple_iters: usize,
    pub tke: TkeConfig,
    /// Freezes the TKE equation (diagnostic: degenerate coupling).
    pub freeze_k: bool,
}

impl CouplingConfig {
    pub fn default_with(tke: TkeConfig) -> Self {
        CouplingConfig {
            mode: CouplingMode::PerStepPicard,
            tol_couple: 1e-8,
            max_couple_iters: 20,
            tke,
            freeze_k: false,
        }
    }
}

/// Combined state of the coupled system.
#[derive(Clone, Debug)]
pub struct CoupledState {
    pub flow: State,
    pub k: KField,
    pub picard_iters: usize,
    pub picard_residual: f64,
    /// Velocity of the previous step, for the lagged ordering.
    pub v_prev: Option<VectorField>,
}

impl CoupledState {
    pub fn new(flow: State, k: KField) -> Self {
        CoupledState { flow, k, picard_iters: 0, picard_residual: 0.0, v_prev: None }
    }
}

#[derive(Clone, Debug)]
pub struct CoupledStepStats {
    pub flow: StepStats,
    pub tke: TkeBudget,
    pub couple_iters: usize,
    pub couple_residual: f64,
    /// False when the inner iteration hit `max_couple_iters`; the last
    /// iterate is still returned.
    pub converged: bool,
    /// The frozen eddy viscosity the accepted flow step was taken with
    /// (needed to close its energy ledger).
    pub nut: Buf,
}

/// Advances the coupled system by one step.
pub fn coupled_step(
    stepper: &Stepper,
    cs: &CoupledState,
    cfg: &CouplingConfig,
    dt: f64,
) -> Result<(CoupledState, CoupledStepStats)> {
    let grid = &*stepper.grid;
    let ell = &stepper.ell_centers;
    match cfg.mode {
        CouplingMode::PerStepPicard => {
            let mut v_work = cs.flow.v.clone();
            let mut k_work = cs.k.clone();
            let mut best: Option<(State, KField, StepStats, TkeBudget, Buf)> = None;
            let mut iters = 0usize;
            let mut residual = f64::INFINITY;
            let mut converged = false;
            for it in 1..=cfg.max_couple_iters {
                iters = it;
                let nut = eddy_viscosity(&k_work, ell, cfg.tke.n_visc);
                let (flow_new, fstats) = stepper.step_with_eddy(&cs.flow, dt, Some(&nut))?;
                let (k_new, budget) = if cfg.freeze_k {
                    (cs.k.clone(), TkeBudget { total_k: cs.k.total(grid), ..TkeBudget::default() })
                } else {
                    let dv = deformation(grid, &flow_new.v)?;
                    tke_step(grid, ell, &cs.k, &flow_new.v, &dv, &cfg.tke, dt)?
                };
                let mut dv_change = flow_new.v.clone();
                dv_change.axpy(-1.0, &v_work);
                let mut dk_change = k_new.k.clone();
                dk_change.axpy(-1.0, &k_work.k);
                residual = (vector_norm(grid, &dv_change).powi(2)
                    + scalar_dot(grid, &dk_change, &dk_change))
                .sqrt();
                v_work = flow_new.v.clone();
                k_work = k_new.clone();
                best = Some((flow_new, k_new, fstats, budget, nut));
                if residual < cfg.tol_couple {
                    converged = true;
                    break;
                }
            }
            let (flow, k, fstats, budget, nut) = best.expect("at least one sweep");
            let out = CoupledState {
                flow,
                k,
                picard_iters: iters,
                picard_residual: residual,
                v_prev: Some(cs.flow.v.clone()),
            };
            Ok((
                out,
                CoupledStepStats {
                    flow: fstats,
                    tke: budget,
                    couple_iters: iters,
                    couple_residual: residual,
                    converged,
                    nut,
                },
            ))
        }
        CouplingMode::LaggedSinglePass => {
            // k advances first, advected by the previous velocity and fed by
            // its deformation; the flow then sees nu_t of the new k.
            let v_lag = cs.v_prev.as_ref().unwrap_or(&cs.flow.v);
            let (k_new, budget) = if cfg.freeze_k {
                (cs.k.clone(), TkeBudget { total_k: cs.k.total(grid), ..TkeBudget::default() })
            } else {
                let dv = deformation(grid, v_lag)?;
                tke_step(grid, ell, &cs.k, v_lag, &dv, &cfg.tke, dt)?
            };
            let nut = eddy_viscosity(&k_new, ell, cfg.tke.n_visc);
            let (flow_new, fstats) = stepper.step_with_eddy(&cs.flow, dt, Some(&nut))?;
            let out = CoupledState {
                flow: flow_new,
                k: k_new,
                picard_iters: 1,
                picard_residual: 0.0,
                v_prev: Some(cs.flow.v.clone()),
            };
            Ok((
                out,
                CoupledStepStats {
                    flow: fstats,
                    tke: budget,
                    couple_iters: 1,
                    couple_residual: 0.0,
                    converged: true,
                    nut,
                },
            ))
        }
    }
}

/// The modelling-layer Reynolds stress
/// `r = -alpha ell D v_t - nu_t D v + (2/3) k Id`.
pub fn reynolds_stress(
    grid: &Grid,
    v_t: &VectorField,
    dv: &TensorField,
    k: &KField,
    alpha: f64,
    ell_centers: &Buf,
    nut_centers: &Buf,
) -> Result<TensorField> {
    let mut voigt_part = deformation(grid, v_t)?;
    let mut ell_coeff = TensorCoeff::from_centers(grid, ell_centers);
    ell_coeff = ell_coeff.scaled(alpha);
    tensor_scale(&mut voigt_part, &ell_coeff);

    let mut eddy_part = dv.clone();
    let nut_coeff = TensorCoeff::from_centers(grid, nut_centers);
    tensor_scale(&mut eddy_part, &nut_coeff);

    let mut out = voigt_part;
    out.scale(-1.0);
    for (o, e) in out.diag.iter_mut().zip(&eddy_part.diag) {
        o.axpy(-1.0, e);
    }
    for ((_, _, o), (_, _, e)) in out.off.iter_mut().zip(&eddy_part.off) {
        o.axpy(-1.0, e);
    }
    for d in out.diag.iter_mut() {
        for (x, kk) in d.data.iter_mut().zip(&k.k.data) {
            *x += 2.0 / 3.0 * kk;
        }
    }
    Ok(out)
}

/// Trace of a symmetric tensor at cell centers.
pub fn tensor_trace(grid: &Grid, s: &TensorField) -> Buf {
    let mut out = Buf::zeros(Layout::cell(grid.cells));
    for d in &s.diag {
        out.axpy(1.0, d);
    }
    out
}

/// Production/dissipation budget of one accepted coupled step.
#[derive(Clone, Copy, Debug)]
pub struct BudgetReport {
    /// `int nu_t(k) |D v|^2`, untruncated.
    pub production: f64,
    /// Implicit sink integral `int (ell+eta)^{-1} sqrt(k) k` of the step.
    pub dissipation: f64,
    pub total_k: f64,
    /// `production <= dissipation`: the transfer condition marking decay
    /// toward a laminar state or statistical equilibrium.
    pub transfer_ok: bool,
}

/// Budget report from the step's TKE budget (the quantities that actually
/// entered the discrete equation, so the decay implication is exact).
pub fn transfer_monitor(budget: &TkeBudget) -> BudgetReport {
    BudgetReport {
        production: budget.production_untruncated,
        dissipation: budget.dissipation,
        total_k: budget.total_k,
        transfer_ok: budget.production_untruncated <= budget.dissipation,
    }
}

/// Recorded series of a coupled run used by the closure diagnostic.
#[derive(Clone, Debug, Default)]
pub struct CoupledSeries {
    pub times: Vec<f64>,
    pub total_k: Vec<f64>,
    /// `int ell |D v|^2` in the weighted tensor quadrature.
    pub ell_dv_sq: Vec<f64>,
}

impl CoupledSeries {
    pub fn record(&mut self, grid: &Grid, ell: &TensorCoeff, cs: &CoupledState) -> Result<()> {
        let dv = deformation(grid, &cs.flow.v)?;
        let mut ldv = dv.clone();
        tensor_scale(&mut ldv, ell);
        self.times.push(cs.flow.t);
        self.total_k.push(cs.k.total(grid));
        self.ell_dv_sq.push(tensor_dot(grid, &ldv, &dv));
        Ok(())
    }
}

/// `|d/dt int k - alpha d/dt int ell |D v|^2|` by centered differences of the
/// recorded series; a diagnostic of how far the evolved TKE drifts from the
/// modelling closure. Returns one value per interior sample.
pub fn closure_consistency(series: &CoupledSeries, alpha: f64) -> Vec<f64> {
    let n = series.times.len();
    if n < 3 {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(n - 2);
    for i in 1..n - 1 {
        let dt = series.times[i + 1] - series.times[i - 1];
        let dk = (series.total_k[i + 1] - series.total_k[i - 1]) / dt;
        let dl = (series.ell_dv_sq[i + 1] - series.ell_dv_sq[i - 1]) / dt;
        out.push((dk - alpha * dl).abs());
    }
    out
}
