//! Discrete realisations of the norms and inequalities used by the analysis:
//! `L^2`, the `H^1` seminorm, the spectral `H^{1/2}` norm, the weighted
//! deformation norm `|sqrt(ell) D v|` and the weighted membership norm
//! `|ell^{-1/2} v|`, plus sampled Korn and embedding constants.

use crate::domain::{Grid, Mode};
use crate::field::{average_to, tensor_dot, vector_dot, Buf, Layout, VectorField};
use crate::operators::{deformation, h1_seminorm_sq, tensor_scale, TensorCoeff};
use crate::rng::SplitMix64;
use crate::spectral::SpectralSpace;
use crate::Result;

/// All norms of one velocity field.
#[derive(Clone, Copy, Debug)]
pub struct NormReport {
    pub l2: f64,
    pub h1_semi: f64,
    /// `sqrt(<A^{1/2} v, v>) + l2` with `A` the discrete vector Laplacian.
    pub h_half: f64,
    pub weighted_sqrt_ell_d: f64,
    /// `+inf` when the field is nonzero where `ell` vanishes.
    pub weighted_ell_inv_half: f64,
}

/// `|sqrt(coeff) D v|^2` in the weighted tensor quadrature.
pub fn weighted_deformation_sq(grid: &Grid, coeff: &TensorCoeff, v: &VectorField) -> Result<f64> {
    let dv = deformation(grid, v)?;
    let mut cdv = dv.clone();
    tensor_scale(&mut cdv, coeff);
    Ok(tensor_dot(grid, &cdv, &dv))
}

/// Computes the [`NormReport`] of `v` with mixing length `ell` (cell values).
pub fn norms(grid: &Grid, space: &SpectralSpace, v: &VectorField, ell_centers: &Buf) -> Result<NormReport> {
    v.check_grid(grid)?;
    let l2 = vector_dot(grid, v, v).sqrt();
    let h1_semi = h1_seminorm_sq(grid, v).sqrt();
    let h_half = space.fractional_quad_form(grid, v, 0.5).sqrt() + l2;
    let ell = TensorCoeff::from_centers(grid, ell_centers);
    let weighted_sqrt_ell_d = weighted_deformation_sq(grid, &ell, v)?.sqrt();

    let vol = grid.cell_volume();
    let mut winv = 0.0f64;
    let mut infinite = false;
    for c in 0..grid.dim {
        let layout = Layout::velocity(grid, c);
        let ell_face = average_to(grid, ell_centers, layout);
        for (lin, _) in layout.iter().enumerate() {
            let val = v.comp[c].data[lin];
            let lf = ell_face.data[lin];
            if lf > 0.0 {
                winv += val * val / lf;
            } else if val != 0.0 {
                infinite = true;
            }
        }
    }
    let weighted_ell_inv_half = if infinite { f64::INFINITY } else { (winv * vol).sqrt() };

    Ok(NormReport { l2, h1_semi, h_half, weighted_sqrt_ell_d, weighted_ell_inv_half })
}

/// A fixed smooth zero-boundary family: random low-mode combinations whose
/// continuum shape is resolution-independent, so observed constants can be
/// compared across grids.
pub fn smooth_sample_field(grid: &Grid, seed: u64, n_modes: usize) -> VectorField {
    let mut rng = SplitMix64::new(seed);
    let dim = grid.dim;
    // (component, per-axis integer mode, per-axis cosine flag, amplitude)
    let mut modes = Vec::new();
    for _ in 0..n_modes {
        let c = (rng.next_u64() % dim as u64) as usize;
        let mut m = [0usize; 3];
        let mut cosine = [false; 3];
        for a in 0..dim {
            m[a] = 1 + (rng.next_u64() % 3) as usize;
            cosine[a] = rng.next_f64() < 0.5;
        }
        let amp = rng.next_sym();
        modes.push((c, m, cosine, amp));
    }
    let mut v = VectorField::zeros(grid);
    for c in 0..dim {
        let layout = v.comp[c].layout;
        for (lin, idx) in layout.iter().enumerate() {
            let mut acc = 0.0;
            for (mc, m, cosine, amp) in &modes {
                if *mc != c {
                    continue;
                }
                let mut shape = *amp;
                for a in 0..dim {
                    let x = grid.coord(a, idx[a], layout.node[a]);
                    let ext = grid.spec.extents[a];
                    shape *= match grid.bc[a] {
                        crate::domain::AxisBc::Wall => {
                            // Vanishes on both walls for every component.
                            (std::f64::consts::PI * m[a] as f64 * x / ext).sin()
                        }
                        crate::domain::AxisBc::Periodic => {
                            let t = 2.0 * std::f64::consts::PI * m[a] as f64 * x / ext;
                            if cosine[a] {
                                t.cos()
                            } else {
                                t.sin()
                            }
                        }
                    };
                }
                acc += shape;
            }
            v.comp[c].data[lin] = acc;
        }
    }
    v.solenoidal = false;
    v.apply_noslip(grid);
    v
}

/// Removes the component means (the discrete rigid motions of a periodic
/// box are the constants).
pub fn project_out_constants(grid: &Grid, v: &mut VectorField) {
    for c in 0..grid.dim {
        let mean = v.comp[c].mean();
        v.comp[c].data.iter_mut().for_each(|x| *x -= mean);
    }
}

#[derive(Clone, Copy, Debug)]
pub struct KornReport {
    pub max_ratio: f64,
    pub samples: usize,
    pub kernel_hits: usize,
}

/// Worst observed `|v|_{H^1} / |D v|` over the smooth sample family.
/// In box mode rigid motions (constants) are projected out first; samples
/// that still land in the kernel of `D` are reported and skipped.
pub fn korn_check(grid: &Grid, sample_count: usize, seed: u64) -> Result<KornReport> {
    let mut max_ratio: f64 = 0.0;
    let mut kernel_hits = 0usize;
    for s in 0..sample_count {
        let mut v = smooth_sample_field(grid, seed.wrapping_add(s as u64), 6);
        if grid.mode() == Mode::Box {
            project_out_constants(grid, &mut v);
        }
        let l2sq = vector_dot(grid, &v, &v);
        let h1sq = h1_seminorm_sq(grid, &v);
        let dv = deformation(grid, &v)?;
        let dnorm = tensor_dot(grid, &dv, &dv).sqrt();
        if dnorm < 1e-14 * (1.0 + l2sq.sqrt()) {
            kernel_hits += 1;
            continue;
        }
        max_ratio = max_ratio.max((l2sq + h1sq).sqrt() / dnorm);
    }
    Ok(KornReport { max_ratio, samples: sample_count, kernel_hits })
}

#[derive(Clone, Copy, Debug)]
pub struct EmbeddingReport {
    pub max_ratio: f64,
    pub samples: usize,
}

/// Worst observed `|v|_{H^{1/2}} / |sqrt(ell) D v|` over the sample family;
/// the discrete witness of the weighted embedding.
pub fn h_half_estimate_check(
    grid: &Grid,
    space: &SpectralSpace,
    ell_centers: &Buf,
    sample_count: usize,
    seed: u64,
) -> Result<EmbeddingReport> {
    let ell = TensorCoeff::from_centers(grid, ell_centers);
    let mut max_ratio: f64 = 0.0;
    for s in 0..sample_count {
        let v = smooth_sample_field(grid, seed.wrapping_add(s as u64), 6);
        let l2 = vector_dot(grid, &v, &v).sqrt();
        if l2 == 0.0 {
            continue;
        }
        let h_half = space.fractional_quad_form(grid, &v, 0.5).sqrt() + l2;
        let weighted = weighted_deformation_sq(grid, &ell, &v)?.sqrt();
        if weighted > 0.0 {
            max_ratio = max_ratio.max(h_half / weighted);
        }
    }
    Ok(EmbeddingReport { max_ratio, samples: sample_count })
}
