//! Operator and inequality verification suite backing the `verify`
//! subcommand: discrete adjointness, advection skew symmetry, Voigt
//! positivity, the spectral/stencil norm agreement, and the sampled Korn
//! and weighted-embedding constants with their refinement stability.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::domain::{build_grid, eval_mixing_length, GridSpec, MixingLengthProfile};
use crate::field::{tensor_dot, vector_dot, vector_norm, VectorField};
use crate::norms::{h_half_estimate_check, korn_check, smooth_sample_field, weighted_deformation_sq};
use crate::operators::{deformation, div_tensor, voigt_apply, TensorCoeff};
use crate::rng::SplitMix64;
use crate::spectral::SpectralSpace;
use crate::voigt_core::{advect, EddyViscosity, Forcing, PhysicsConfig, SchemeConfig, Stepper, VoigtForm};
use crate::Result;

#[derive(Clone, Debug)]
pub struct VerifyReport {
    pub flags: BTreeMap<String, bool>,
    pub values: BTreeMap<String, f64>,
}

impl VerifyReport {
    pub fn all_pass(&self) -> bool {
        self.flags.values().all(|v| *v)
    }

    /// Name of the first failed invariant, if any.
    pub fn first_failure(&self) -> Option<&str> {
        self.flags.iter().find(|(_, v)| !**v).map(|(k, _)| k.as_str())
    }
}

/// Runs the operator/norm suites on a channel of `cells`^2 and reports one
/// flag per invariant.
pub fn verify_suite(cells: usize, sample_count: usize, seed: u64) -> Result<VerifyReport> {
    let grid = Arc::new(build_grid(GridSpec::channel_2d(1.0, 1.0, cells, cells)?)?);
    let space = SpectralSpace::new(&grid);
    let profile = MixingLengthProfile::obukhov(0.40)?;
    let ell_centers = eval_mixing_length(&profile, &grid)?;
    let ell = TensorCoeff::from_centers(&grid, &ell_centers);
    let mut rng = SplitMix64::new(seed);

    let mut flags = BTreeMap::new();
    let mut values = BTreeMap::new();

    // Adjointness <div s, v> = -<s, D v>.
    let mut adj_err: f64 = 0.0;
    for _ in 0..5 {
        let v = VectorField::from_fn(&grid, |_, _| rng.next_sym());
        let mut s = crate::field::TensorField::zeros(&grid);
        for d in s.diag.iter_mut() {
            d.data.iter_mut().for_each(|x| *x = rng.next_sym());
        }
        for (_, _, b) in s.off.iter_mut() {
            b.data.iter_mut().for_each(|x| *x = rng.next_sym());
        }
        let lhs = vector_dot(&grid, &div_tensor(&grid, &s), &v);
        let rhs = -tensor_dot(&grid, &s, &deformation(&grid, &v)?);
        adj_err = adj_err.max((lhs - rhs).abs() / (1.0 + lhs.abs()));
    }
    flags.insert("adjointness".into(), adj_err < 1e-12);
    values.insert("adjointness_rel_err".into(), adj_err);

    // Skew symmetry of the advection.
    let mut skew_err: f64 = 0.0;
    for _ in 0..5 {
        let a = VectorField::from_fn(&grid, |_, _| rng.next_sym());
        let w = VectorField::from_fn(&grid, |_, _| rng.next_sym());
        let ip = vector_dot(&grid, &advect(&grid, &a, &w)?, &w);
        skew_err = skew_err.max(ip.abs() / (1.0 + vector_dot(&grid, &w, &w) * vector_norm(&grid, &a)));
    }
    flags.insert("advection_skew".into(), skew_err < 1e-12);
    values.insert("advection_skew_rel_err".into(), skew_err);

    // Voigt operator SPD: <M v, v> >= |v|^2.
    let mut spd_ok = true;
    for _ in 0..5 {
        let v = VectorField::from_fn(&grid, |_, _| rng.next_sym());
        let mv = voigt_apply(&grid, &ell, 0.07, &v)?;
        let quad = vector_dot(&grid, &mv, &v);
        let l2 = vector_dot(&grid, &v, &v);
        spd_ok &= quad >= l2 * (1.0 - 1e-12);
    }
    flags.insert("voigt_spd".into(), spd_ok);

    // Summation-by-parts identity of the Voigt operator.
    let mut sbp_err: f64 = 0.0;
    for _ in 0..3 {
        let v = VectorField::from_fn(&grid, |_, _| rng.next_sym());
        let w = VectorField::from_fn(&grid, |_, _| rng.next_sym());
        let alpha = 0.05;
        let mv = voigt_apply(&grid, &ell, alpha, &v)?;
        let lhs = vector_dot(&grid, &mv, &w);
        let mut dv = deformation(&grid, &v)?;
        crate::operators::tensor_scale(&mut dv, &ell);
        let rhs = vector_dot(&grid, &v, &w) + alpha * tensor_dot(&grid, &dv, &deformation(&grid, &w)?);
        sbp_err = sbp_err.max((lhs - rhs).abs() / (1.0 + lhs.abs()));
    }
    flags.insert("voigt_summation_by_parts".into(), sbp_err < 1e-11);
    values.insert("voigt_sbp_rel_err".into(), sbp_err);

    // Spectral h_half against the stencil H1 form on eigenvectors, plus the
    // ghost-quadrature identity.
    let v = smooth_sample_field(&grid, seed ^ 0x5a5a, 6);
    let h1_stencil = crate::operators::h1_seminorm_sq(&grid, &v);
    let h1_spectral = space.fractional_quad_form(&grid, &v, 1.0);
    let h1_gap = (h1_stencil - h1_spectral).abs() / (1.0 + h1_stencil);
    flags.insert("spectral_matches_stencil".into(), h1_gap < 1e-10);
    values.insert("spectral_h1_rel_gap".into(), h1_gap);

    // Korn and weighted-embedding constants with refinement stability.
    let korn_coarse = korn_check(&grid, sample_count, seed)?;
    let emb_coarse = h_half_estimate_check(&grid, &space, &ell_centers, sample_count, seed)?;
    let fine_cells = cells * 2;
    let grid_f = Arc::new(build_grid(GridSpec::channel_2d(1.0, 1.0, fine_cells, fine_cells)?)?);
    let space_f = SpectralSpace::new(&grid_f);
    let ell_f = eval_mixing_length(&profile, &grid_f)?;
    let korn_fine = korn_check(&grid_f, sample_count, seed)?;
    let emb_fine = h_half_estimate_check(&grid_f, &space_f, &ell_f, sample_count, seed)?;

    let korn_drift = (korn_fine.max_ratio - korn_coarse.max_ratio).abs() / korn_coarse.max_ratio;
    let emb_drift = (emb_fine.max_ratio - emb_coarse.max_ratio).abs() / emb_coarse.max_ratio;
    flags.insert("korn_finite".into(), korn_coarse.max_ratio.is_finite());
    flags.insert("korn_stable".into(), korn_drift <= 0.10);
    flags.insert("h_half_embedding_finite".into(), emb_coarse.max_ratio.is_finite());
    flags.insert("h_half_embedding_stable".into(), emb_drift <= 0.10);
    values.insert("korn_constant".into(), korn_coarse.max_ratio);
    values.insert("korn_constant_fine".into(), korn_fine.max_ratio);
    values.insert("korn_drift".into(), korn_drift);
    values.insert("h_half_constant".into(), emb_coarse.max_ratio);
    values.insert("h_half_constant_fine".into(), emb_fine.max_ratio);
    values.insert("h_half_drift".into(), emb_drift);

    // Weighted deformation norm consistency: scaling ell by 4 scales the
    // squared norm by 4.
    let w4 = {
        let mut e4 = ell_centers.clone();
        e4.scale(4.0);
        let c4 = TensorCoeff::from_centers(&grid, &e4);
        weighted_deformation_sq(&grid, &c4, &v)?
    };
    let w1 = weighted_deformation_sq(&grid, &ell, &v)?;
    flags.insert("weighted_norm_homogeneous".into(), (w4 - 4.0 * w1).abs() < 1e-10 * (1.0 + w4));

    // Uniqueness surrogate: a 1e-8 perturbation of the initial datum stays
    // within exp(Lambda t) 1e-8 for a finite observed Lambda.
    {
        let stepper = Stepper::new(
            grid.clone(),
            PhysicsConfig {
                nu: 1e-2,
                alpha: 0.05,
                profile: profile.clone(),
                forcing: Forcing::None,
                eddy: EddyViscosity::None,
                eddy_bound: 0.0,
                voigt_form: VoigtForm::DivEllD,
            },
            SchemeConfig::default(),
        )?;
        let mut v0 = smooth_sample_field(&grid, seed ^ 0x77, 4);
        v0.scale(0.3 / v0.max_abs().max(1e-12));
        let delta = 1e-8;
        let mut pert = v0.clone();
        let noise = smooth_sample_field(&grid, seed ^ 0x99, 4);
        pert.axpy(delta / vector_norm(&grid, &noise), &noise);
        let mut sa = stepper.initial_state(&v0)?;
        let mut sb = stepper.initial_state(&pert)?;
        let dt = 5e-3;
        let horizon = 10usize;
        for _ in 0..horizon {
            sa = stepper.step(&sa, dt)?.0;
            sb = stepper.step(&sb, dt)?.0;
        }
        let mut diff = sa.v.clone();
        diff.axpy(-1.0, &sb.v);
        let gap = vector_norm(&grid, &diff);
        let lambda = (gap / delta).max(1e-300).ln() / (dt * horizon as f64);
        flags.insert("perturbation_growth_bounded".into(), gap.is_finite() && lambda < 50.0);
        values.insert("perturbation_lambda".into(), lambda);
    }

    Ok(VerifyReport { flags, values })
}

/// Constant-ell equivalence: with `ell = 2 alpha` on a periodic box the
/// variable-coefficient Voigt operator and the classical `alpha^2 Lap` form
/// must produce matching trajectories.
#[derive(Clone, Copy, Debug)]
pub struct NsvReductionReport {
    pub max_l2_difference: f64,
    pub steps: usize,
    pub pass: bool,
}

pub fn reduce_nsv_check(cells: usize, steps: usize, tolerance: f64) -> Result<NsvReductionReport> {
    let grid = Arc::new(build_grid(GridSpec::periodic_box_2d(1.0, 1.0, cells, cells)?)?);
    let alpha = 0.08;
    let mk = |form: VoigtForm| -> Result<Stepper> {
        Stepper::new(
            grid.clone(),
            PhysicsConfig {
                nu: 5e-3,
                alpha,
                profile: MixingLengthProfile::constant(2.0 * alpha)?,
                forcing: Forcing::None,
                eddy: EddyViscosity::None,
                eddy_bound: 0.0,
                voigt_form: form,
            },
            SchemeConfig { tol_picard: 1e-12, ..SchemeConfig::default() },
        )
    };
    let s_var = mk(VoigtForm::DivEllD)?;
    let s_cls = mk(VoigtForm::AlphaSqLaplacian)?;
    let v0 = smooth_sample_field(&grid, 99, 5);
    let mut a = s_var.initial_state(&v0)?;
    let mut b = s_cls.initial_state(&v0)?;
    let dt = 4e-3;
    let mut max_diff: f64 = 0.0;
    for _ in 0..steps {
        a = s_var.step(&a, dt)?.0;
        b = s_cls.step(&b, dt)?.0;
        let mut diff = a.v.clone();
        diff.axpy(-1.0, &b.v);
        max_diff = max_diff.max(vector_norm(&grid, &diff));
    }
    Ok(NsvReductionReport { max_l2_difference: max_diff, steps, pass: max_diff <= tolerance })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_on_default_grid() {
        let report = verify_suite(16, 10, 3).unwrap();
        assert!(report.all_pass(), "failed: {:?}", report.flags);
    }
}
