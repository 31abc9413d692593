//! Run driver: configuration, CSV streaming, checkpoints and summaries.

pub mod checkpoint;
pub mod config;
pub mod csv;

pub use checkpoint::{load_checkpoint, write_checkpoint};
pub use config::{echo_config, load_config, parse_config, RunConfig};
pub use csv::{CsvStream, COUPLED_HEADER, FLOW_HEADER};

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use crate::coupling::{
    closure_consistency, coupled_step, transfer_monitor, CoupledSeries, CoupledState,
    CouplingConfig, CouplingMode,
};
use crate::domain::{build_grid, Grid};
use crate::field::{Layout, VectorField};
use crate::norms::smooth_sample_field;
use crate::tke::{closure_k, KField};
use crate::voigt_core::{
    energy::energy_update, EddyViscosity, EnergyLedger, Forcing, PhysicsConfig, State, Stepper,
    VoigtForm,
};
use crate::{Error, Result};

/// Summary written at the end of every run (also on assertion failure).
#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub artifact_version: String,
    pub subcommand: String,
    pub wall_clock_sec: f64,
    pub final_time: f64,
    pub steps: u64,
    pub energy_initial: f64,
    pub energy_final: f64,
    pub dissipation_cum: f64,
    pub work_cum: f64,
    pub max_step_residual: f64,
    pub final_balance_residual: f64,
    pub max_div: f64,
    /// One entry per invariant suite executed.
    pub flags: BTreeMap<String, bool>,
    /// Observed constants and other scalar diagnostics.
    pub values: BTreeMap<String, f64>,
    /// Canonical echo of the configuration.
    pub config_echo: String,
}

impl RunSummary {
    pub fn all_pass(&self) -> bool {
        self.flags.values().all(|v| *v)
    }
}

/// Serialises the summary with write-then-rename.
pub fn write_summary(summary: &RunSummary, path: &Path) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    let text = serde_json::to_string_pretty(summary)
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    std::fs::write(&tmp, text)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Builds the stepper described by a configuration.
pub fn build_stepper(cfg: &RunConfig) -> Result<(Arc<Grid>, Stepper)> {
    let grid = Arc::new(build_grid(cfg.grid.clone())?);
    let h = grid.spec.extents[grid.dim - 1];
    let profile = cfg.profile(h)?;
    let forcing = match cfg.forcing_kind {
        config::ForcingKind::None => Forcing::None,
        config::ForcingKind::Constant => {
            let mut f = VectorField::zeros(&grid);
            for c in 0..grid.dim {
                f.comp[c].fill(cfg.forcing_values[c]);
            }
            f.apply_noslip(&grid);
            Forcing::Steady(f)
        }
    };
    let eddy = match cfg.eddy_kind {
        config::EddyKind::None => EddyViscosity::None,
        config::EddyKind::Constant => EddyViscosity::Constant(cfg.eddy_value),
    };
    let physics = PhysicsConfig {
        nu: cfg.nu,
        alpha: cfg.alpha,
        profile,
        forcing,
        eddy,
        eddy_bound: cfg.eddy_bound,
        voigt_form: match cfg.voigt_form {
            config::VoigtFormKind::DivEllD => VoigtForm::DivEllD,
            config::VoigtFormKind::AlphaSqLaplacian => VoigtForm::AlphaSqLaplacian,
        },
    };
    let stepper = Stepper::new(grid.clone(), physics, cfg.scheme)?;
    Ok((grid, stepper))
}

/// Header metadata echoed into checkpoints.
fn physics_meta(cfg: &RunConfig) -> Vec<(&'static str, String)> {
    vec![
        ("nu", cfg.nu.to_string()),
        ("alpha", cfg.alpha.to_string()),
        (
            "voigt_form",
            match cfg.voigt_form {
                config::VoigtFormKind::DivEllD => "div_ell_d".to_string(),
                config::VoigtFormKind::AlphaSqLaplacian => "alpha_sq_laplacian".to_string(),
            },
        ),
    ]
}

/// Initial velocity presets.
pub fn initial_velocity(grid: &Grid, cfg: &RunConfig) -> VectorField {
    let amp = cfg.init_amplitude;
    match cfg.init_velocity {
        config::InitVelocity::Zero => VectorField::zeros(grid),
        config::InitVelocity::TaylorGreen => VectorField::from_fn(grid, |c, idx| {
            let layout = Layout::velocity(grid, c);
            let x = grid.coord(0, idx[0], layout.node[0]);
            let z = grid.coord(grid.dim - 1, idx[grid.dim - 1], layout.node[grid.dim - 1]);
            let kx = 2.0 * std::f64::consts::PI / grid.spec.extents[0];
            let kz = 2.0 * std::f64::consts::PI / grid.spec.extents[grid.dim - 1];
            if c == 0 {
                amp * (kx * x).sin() * (kz * z).cos()
            } else if c == grid.dim - 1 {
                -amp * kx / kz * (kx * x).cos() * (kz * z).sin()
            } else {
                0.0
            }
        }),
        config::InitVelocity::ShearBump => VectorField::from_fn(grid, |c, idx| {
            // Streamfunction psi = A sin(2 pi x / Lx) sin^2(pi z / H).
            let layout = Layout::velocity(grid, c);
            let x = grid.coord(0, idx[0], layout.node[0]);
            let z = grid.coord(grid.dim - 1, idx[grid.dim - 1], layout.node[grid.dim - 1]);
            let a = 2.0 * std::f64::consts::PI / grid.spec.extents[0];
            let s = std::f64::consts::PI / grid.spec.extents[grid.dim - 1];
            if c == 0 {
                amp * s * (a * x).sin() * (2.0 * s * z).sin()
            } else if c == grid.dim - 1 {
                -amp * a * (a * x).cos() * (s * z).sin().powi(2)
            } else {
                0.0
            }
        }),
        config::InitVelocity::Random => {
            let mut v = smooth_sample_field(grid, cfg.seed, 5);
            let peak = v.max_abs().max(1e-12);
            v.scale(amp / peak);
            v
        }
    }
}

fn fmt_flow_row(row: &crate::voigt_core::LedgerRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        row.step,
        row.t,
        row.energy,
        row.dissipation_cum,
        row.work_cum,
        row.balance_residual,
        row.div_max,
        row.picard_iters
    )
}

pub struct FlowRunOutput {
    pub ledger: EnergyLedger,
    pub summary: RunSummary,
    pub final_state: State,
}

/// Runs the Voigt flow described by `cfg`, streaming the ledger to CSV and
/// writing checkpoints on the configured cadence. With diagnostics enabled a
/// sibling `<csv>.norms.csv` stream carries the per-step norm report.
pub fn run_flow(cfg: &RunConfig, subcommand: &str) -> Result<FlowRunOutput> {
    let clock = std::time::Instant::now();
    let (grid, stepper) = build_stepper(cfg)?;
    let v0 = initial_velocity(&grid, cfg);
    let mut state = stepper.initial_state(&v0)?;
    let mut ledger = EnergyLedger::new(stepper.energy(&state.v)?);
    let csv = CsvStream::create(Path::new(&cfg.csv_path), FLOW_HEADER)?;
    let norms_csv = if cfg.diagnostics {
        Some(CsvStream::create(
            Path::new(&format!("{}.norms.csv", cfg.csv_path)),
            "step,t,l2,h1_semi,h_half,weighted_sqrt_ell_d",
        )?)
    } else {
        None
    };

    let steps = (cfg.t_end / cfg.dt).round().max(1.0) as u64;
    let mut max_div: f64 = 0.0;
    let mut energy_prev = ledger.e0;
    let mut monotone_ok = true;
    let unforced = matches!(stepper.physics.forcing, Forcing::None);
    let mut run_error: Option<Error> = None;

    for s in 0..steps {
        match stepper.step(&state, cfg.dt) {
            Ok((next, stats)) => {
                energy_update(&mut ledger, &stepper, &state, &next, cfg.dt, &stats, None, cfg.diagnostics)?;
                let row = ledger.rows.last().unwrap();
                csv.row(fmt_flow_row(row))?;
                if let Some(ncsv) = &norms_csv {
                    let rep =
                        crate::norms::norms(&grid, &stepper.space, &next.v, &stepper.ell_centers)?;
                    ncsv.row(format!(
                        "{},{},{},{},{},{}",
                        row.step, row.t, rep.l2, rep.h1_semi, rep.h_half, rep.weighted_sqrt_ell_d
                    ))?;
                }
                max_div = max_div.max(stats.div_max);
                if unforced && row.energy > energy_prev * (1.0 + 1e-12) + 1e-15 {
                    monotone_ok = false;
                }
                energy_prev = row.energy;
                state = next;
                if let Some(prefix) = &cfg.checkpoint_path {
                    let due = cfg.checkpoint_every > 0 && (s + 1) % cfg.checkpoint_every as u64 == 0;
                    if due || s + 1 == steps {
                        let path = format!("{prefix}.step{:06}.ckpt", s + 1);
                        checkpoint::write_checkpoint_with_meta(
                            Path::new(&path),
                            &grid,
                            &state,
                            None,
                            &physics_meta(cfg),
                        )?;
                    }
                }
            }
            Err(e) => {
                run_error = Some(e);
                break;
            }
        }
    }
    csv.finish()?;
    if let Some(ncsv) = norms_csv {
        ncsv.finish()?;
    }

    let mut flags = BTreeMap::new();
    flags.insert("completed".into(), run_error.is_none());
    flags.insert("divergence_within_tol".into(), max_div <= stepper.scheme.tol_proj);
    flags.insert(
        "energy_identity".into(),
        ledger.max_step_residual() <= 10.0 * stepper.scheme.tol_picard,
    );
    flags.insert("fields_finite".into(), state.v.is_finite());
    if unforced {
        flags.insert("unforced_energy_monotone".into(), monotone_ok);
    }

    let mut values = BTreeMap::new();
    values.insert("max_step_residual".into(), ledger.max_step_residual());
    values.insert("final_balance_residual".into(), ledger.final_balance_residual());
    values.insert("max_div".into(), max_div);

    let summary = RunSummary {
        artifact_version: env!("CARGO_PKG_VERSION").into(),
        subcommand: subcommand.into(),
        wall_clock_sec: clock.elapsed().as_secs_f64(),
        final_time: state.t,
        steps: state.step_index,
        energy_initial: ledger.e0,
        energy_final: ledger.last_energy(),
        dissipation_cum: ledger.last_dissipation(),
        work_cum: ledger.last_work(),
        max_step_residual: ledger.max_step_residual(),
        final_balance_residual: ledger.final_balance_residual(),
        max_div,
        flags,
        values,
        config_echo: echo_config(cfg),
    };
    write_summary(&summary, Path::new(&cfg.summary_path))?;
    if let Some(e) = run_error {
        return Err(e);
    }
    Ok(FlowRunOutput { ledger, summary, final_state: state })
}

fn fmt_coupled_row(
    row: &crate::voigt_core::LedgerRow,
    budget: &crate::tke::TkeBudget,
    transfer_ok: bool,
) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{}",
        row.step,
        row.t,
        row.energy,
        row.dissipation_cum,
        row.work_cum,
        row.balance_residual,
        row.div_max,
        row.picard_iters,
        budget.total_k,
        budget.production_untruncated,
        budget.dissipation,
        budget.clipped_mass,
        transfer_ok
    )
}

pub struct CoupledRunOutput {
    pub ledger: EnergyLedger,
    pub summary: RunSummary,
    pub final_state: CoupledState,
    pub series: CoupledSeries,
    /// Per-step: (total_k, transfer_ok, clipped_mass, closure_residual, min_k).
    pub tke_rows: Vec<(f64, bool, f64, f64, f64)>,
}

/// Runs the coupled flow/TKE system described by `cfg`.
pub fn run_coupled(cfg: &RunConfig) -> Result<CoupledRunOutput> {
    let clock = std::time::Instant::now();
    if !cfg.tke_enabled {
        return Err(Error::InvalidConfig {
            path: "tke.enabled".into(),
            reason: "coupled run requires tke.enabled = true".into(),
        });
    }
    let (grid, stepper) = build_stepper(cfg)?;
    let v0 = initial_velocity(&grid, cfg);
    let flow0 = stepper.initial_state(&v0)?;
    let k0 = match cfg.tke_init {
        config::TkeInit::Constant(v) => {
            if !(v >= 0.0) {
                return Err(Error::InvalidConfig {
                    path: "tke.k0.value".into(),
                    reason: "must be >= 0".into(),
                });
            }
            KField::from_fn(&grid, |_| v)
        }
        config::TkeInit::Closure => {
            let dv = crate::operators::deformation(&grid, &flow0.v)?;
            closure_k(&grid, stepper.physics.alpha, &stepper.ell_centers, &dv)
        }
    }
    .truncated(cfg.tke.n_src);

    let ccfg = CouplingConfig {
        mode: match cfg.coupling_mode {
            config::CouplingModeKind::PerStepPicard => CouplingMode::PerStepPicard,
            config::CouplingModeKind::LaggedSinglePass => CouplingMode::LaggedSinglePass,
        },
        tol_couple: cfg.tol_couple,
        max_couple_iters: cfg.max_couple_iters,
        tke: cfg.tke,
        freeze_k: false,
    };

    let mut cs = CoupledState::new(flow0, k0);
    let mut ledger = EnergyLedger::new(stepper.energy(&cs.flow.v)?);
    let mut series = CoupledSeries::default();
    series.record(&grid, &stepper.ell, &cs)?;
    let csv = CsvStream::create(Path::new(&cfg.csv_path), COUPLED_HEADER)?;

    let steps = (cfg.t_end / cfg.dt).round().max(1.0) as u64;
    let mut max_div: f64 = 0.0;
    let mut min_k_overall = f64::INFINITY;
    let mut max_clip_frac: f64 = 0.0;
    let mut max_closure_res: f64 = 0.0;
    let mut transfer_monotone_ok = true;
    let mut transfer_seen = false;
    let mut prev_total_k = cs.k.total(&grid);
    let mut tke_rows = Vec::new();
    let mut all_converged = true;
    let mut run_error: Option<Error> = None;

    for s in 0..steps {
        match coupled_step(&stepper, &cs, &ccfg, cfg.dt) {
            Ok((next, stats)) => {
                all_converged &= stats.converged;
                energy_update(
                    &mut ledger, &stepper, &cs.flow, &next.flow, cfg.dt, &stats.flow,
                    Some(&stats.nut), cfg.diagnostics,
                )?;
                let report = transfer_monitor(&stats.tke);
                let row = ledger.rows.last().unwrap();
                csv.row(fmt_coupled_row(row, &stats.tke, report.transfer_ok))?;
                max_div = max_div.max(stats.flow.div_max);
                let min_k = next.k.min();
                min_k_overall = min_k_overall.min(min_k);
                if report.total_k > 0.0 {
                    max_clip_frac = max_clip_frac.max(stats.tke.clipped_mass / report.total_k);
                }
                max_closure_res = max_closure_res.max(stats.tke.closure_residual);
                if transfer_seen && report.total_k > prev_total_k * (1.0 + 1e-11) {
                    transfer_monotone_ok = false;
                }
                if report.transfer_ok {
                    transfer_seen = true;
                }
                prev_total_k = report.total_k;
                tke_rows.push((
                    report.total_k,
                    report.transfer_ok,
                    stats.tke.clipped_mass,
                    stats.tke.closure_residual,
                    min_k,
                ));
                cs = next;
                series.record(&grid, &stepper.ell, &cs)?;
                if let Some(prefix) = &cfg.checkpoint_path {
                    let due = cfg.checkpoint_every > 0 && (s + 1) % cfg.checkpoint_every as u64 == 0;
                    if due || s + 1 == steps {
                        let path = format!("{prefix}.step{:06}.ckpt", s + 1);
                        checkpoint::write_checkpoint_with_meta(
                            Path::new(&path),
                            &grid,
                            &cs.flow,
                            Some(&cs.k),
                            &physics_meta(cfg),
                        )?;
                    }
                }
            }
            Err(e) => {
                run_error = Some(e);
                break;
            }
        }
    }
    csv.finish()?;

    let closure_dev = closure_consistency(&series, stepper.physics.alpha);
    let max_closure_dev = closure_dev.iter().cloned().fold(0.0f64, f64::max);

    let mut flags = BTreeMap::new();
    flags.insert("completed".into(), run_error.is_none());
    flags.insert("divergence_within_tol".into(), max_div <= stepper.scheme.tol_proj);
    flags.insert(
        "energy_identity".into(),
        ledger.max_step_residual() <= 10.0 * stepper.scheme.tol_picard,
    );
    flags.insert("tke_nonnegative".into(), min_k_overall >= 0.0);
    flags.insert("tke_budget_closed".into(), max_closure_res <= 1e-10);
    flags.insert("tke_clip_small".into(), max_clip_frac <= 1e-12);
    flags.insert("coupling_converged".into(), all_converged);
    flags.insert("transfer_decay".into(), transfer_monotone_ok);

    let mut values = BTreeMap::new();
    values.insert("min_k".into(), min_k_overall.min(0.0).max(-1.0));
    values.insert("max_clip_fraction".into(), max_clip_frac);
    values.insert("max_budget_residual".into(), max_closure_res);
    values.insert("final_total_k".into(), prev_total_k);
    values.insert("max_closure_deviation".into(), max_closure_dev);

    let summary = RunSummary {
        artifact_version: env!("CARGO_PKG_VERSION").into(),
        subcommand: "nstke".into(),
        wall_clock_sec: clock.elapsed().as_secs_f64(),
        final_time: cs.flow.t,
        steps: cs.flow.step_index,
        energy_initial: ledger.e0,
        energy_final: ledger.last_energy(),
        dissipation_cum: ledger.last_dissipation(),
        work_cum: ledger.last_work(),
        max_step_residual: ledger.max_step_residual(),
        final_balance_residual: ledger.final_balance_residual(),
        max_div,
        flags,
        values,
        config_echo: echo_config(cfg),
    };
    write_summary(&summary, Path::new(&cfg.summary_path))?;
    if let Some(e) = run_error {
        return Err(e);
    }
    Ok(CoupledRunOutput { ledger, summary, final_state: cs, series, tke_rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn temp_cfg(name: &str) -> RunConfig {
        let dir = std::env::temp_dir().join("nsvoigt_runs");
        std::fs::create_dir_all(&dir).unwrap();
        let base = dir.join(name);
        let text = format!(
            r#"
grid.dim = 2
grid.extent.x = 1.0
grid.extent.z = 1.0
grid.cells.x = 12
grid.cells.z = 12
grid.bc.x = periodic
grid.bc.z = wall
physics.nu = 1e-2
physics.alpha = 0.05
physics.profile = van_driest
init.velocity = random
init.amplitude = 0.2
scheme.dt = 0.005
scheme.t_end = 0.025
output.csv = {base}.csv
output.summary = {base}.json
seed = 5
"#,
            base = base.display()
        );
        parse_config(&text).unwrap()
    }

    #[test]
    fn flow_run_writes_outputs_and_passes_flags() {
        let cfg = temp_cfg("flow_smoke");
        let out = run_flow(&cfg, "run").unwrap();
        assert!(out.summary.all_pass(), "{:?}", out.summary.flags);
        let csv = std::fs::read_to_string(&cfg.csv_path).unwrap();
        assert!(csv.lines().count() == 2 + 5);
        let json = std::fs::read_to_string(&cfg.summary_path).unwrap();
        assert!(json.contains("\"energy_identity\": true"));
    }

    #[test]
    fn identical_configs_give_identical_bytes() {
        let cfg_a = temp_cfg("det_a");
        let cfg_b = RunConfig {
            csv_path: cfg_a.csv_path.replace("det_a", "det_b"),
            summary_path: cfg_a.summary_path.replace("det_a", "det_b"),
            ..temp_cfg("det_a")
        };
        run_flow(&cfg_a, "run").unwrap();
        run_flow(&cfg_b, "run").unwrap();
        let a = std::fs::read(&cfg_a.csv_path).unwrap();
        let b = std::fs::read(&cfg_b.csv_path).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn coupled_run_smoke() {
        let mut cfg = temp_cfg("coupled_smoke");
        cfg.tke_enabled = true;
        cfg.tke_init = config::TkeInit::Constant(0.01);
        cfg.csv_path = cfg.csv_path.replace("coupled_smoke", "coupled_smoke2");
        cfg.summary_path = cfg.summary_path.replace("coupled_smoke", "coupled_smoke2");
        let out = run_coupled(&cfg).unwrap();
        assert!(out.summary.flags["tke_nonnegative"]);
        assert!(out.summary.flags["tke_budget_closed"], "{:?}", out.summary.values);
    }
}
