//! Run configuration: a flat `key = value` text format with dotted section
//! names. `load` -> `echo` -> `load` is the identity on the parsed
//! structure; unknown keys are rejected with their path.

use std::collections::BTreeMap;
use std::path::Path;

use crate::domain::{AxisBc, GridSpec, MixingLengthProfile};
use crate::tke::TkeConfig;
use crate::voigt_core::SchemeConfig;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitVelocity {
    Zero,
    /// Periodic-box vortex array.
    TaylorGreen,
    /// Channel-safe streamfunction bump.
    ShearBump,
    /// Seeded smooth random combination.
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProfileKind {
    Obukhov,
    VanDriest,
    Constant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForcingKind {
    None,
    Constant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EddyKind {
    None,
    Constant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VoigtFormKind {
    DivEllD,
    AlphaSqLaplacian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CouplingModeKind {
    PerStepPicard,
    LaggedSinglePass,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TkeInit {
    Constant(f64),
    /// `k0 = alpha ell |D v0|^2`.
    Closure,
}

/// Full experiment description.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub nu: f64,
    /// Either given directly or derived from `u_star`.
    pub alpha: f64,
    pub profile_kind: ProfileKind,
    pub kappa: f64,
    pub kappa_override: bool,
    /// `None` means the quarter-height default.
    pub van_driest_a: Option<f64>,
    pub ell0: f64,
    pub forcing_kind: ForcingKind,
    pub forcing_values: Vec<f64>,
    pub eddy_kind: EddyKind,
    pub eddy_value: f64,
    pub eddy_bound: f64,
    pub voigt_form: VoigtFormKind,
    pub init_velocity: InitVelocity,
    pub init_amplitude: f64,
    pub tke_enabled: bool,
    pub tke: TkeConfig,
    pub tke_init: TkeInit,
    pub coupling_mode: CouplingModeKind,
    pub tol_couple: f64,
    pub max_couple_iters: usize,
    pub dt: f64,
    pub t_end: f64,
    pub scheme: SchemeConfig,
    pub csv_path: String,
    pub summary_path: String,
    pub checkpoint_path: Option<String>,
    pub checkpoint_every: usize,
    /// Record the per-step norm diagnostics needed by the a-priori checks.
    pub diagnostics: bool,
    pub seed: u64,
}

impl RunConfig {
    /// Builds the mixing-length profile from the parsed fields.
    pub fn profile(&self, h: f64) -> Result<MixingLengthProfile> {
        let p = match self.profile_kind {
            ProfileKind::Obukhov => MixingLengthProfile::Obukhov { kappa: self.kappa },
            ProfileKind::VanDriest => MixingLengthProfile::VanDriest {
                kappa: self.kappa,
                a: self.van_driest_a.unwrap_or_else(|| MixingLengthProfile::van_driest_default_a(h)),
            },
            ProfileKind::Constant => MixingLengthProfile::Constant { ell0: self.ell0 },
        };
        p.validate(self.kappa_override)?;
        Ok(p)
    }
}

fn invalid(path: &str, reason: impl Into<String>) -> Error {
    Error::InvalidConfig { path: path.to_string(), reason: reason.into() }
}

struct Keys {
    map: BTreeMap<String, String>,
    used: std::cell::RefCell<std::collections::BTreeSet<String>>,
}

impl Keys {
    fn get(&self, key: &str) -> Option<&String> {
        self.used.borrow_mut().insert(key.to_string());
        self.map.get(key)
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(s) => s.parse().map_err(|_| invalid(key, format!("cannot parse '{s}'"))),
        }
    }

    fn require<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        match self.get(key) {
            None => Err(invalid(key, "missing required key")),
            Some(s) => s.parse().map_err(|_| invalid(key, format!("cannot parse '{s}'"))),
        }
    }

    fn string(&self, key: &str, default: &str) -> String {
        self.get(key).cloned().unwrap_or_else(|| default.to_string())
    }
}

/// Parses the flat key-value text.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| invalid(&format!("line {}", lineno + 1), "expected 'key = value'"))?;
        let key = key.trim().to_string();
        if map.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(invalid(&key, "duplicate key"));
        }
    }
    let keys = Keys { map, used: Default::default() };

    let dim: usize = keys.parse("grid.dim", 2)?;
    if dim != 2 && dim != 3 {
        return Err(invalid("grid.dim", "must be 2 or 3"));
    }
    let axis_names: &[&str] = if dim == 2 { &["x", "z"] } else { &["x", "y", "z"] };
    let mut extents = Vec::new();
    let mut cells = Vec::new();
    let mut bc = Vec::new();
    for name in axis_names {
        extents.push(keys.require::<f64>(&format!("grid.extent.{name}"))?);
        cells.push(keys.require::<usize>(&format!("grid.cells.{name}"))?);
        let tag = keys.string(&format!("grid.bc.{name}"), "");
        bc.push(match tag.as_str() {
            "periodic" => AxisBc::Periodic,
            "wall" => AxisBc::Wall,
            other => return Err(invalid(&format!("grid.bc.{name}"), format!("unknown tag '{other}'"))),
        });
    }
    let grid = GridSpec::new(extents, cells, bc)
        .map_err(|e| invalid("grid", e.to_string()))?;

    let nu: f64 = keys.require("physics.nu")?;
    if !(nu > 0.0) {
        return Err(invalid("physics.nu", "must be > 0"));
    }
    let alpha = match (keys.get("physics.alpha").cloned(), keys.get("physics.u_star").cloned()) {
        (Some(a), None) => a.parse().map_err(|_| invalid("physics.alpha", "cannot parse"))?,
        (None, Some(us)) => {
            let us: f64 = us.parse().map_err(|_| invalid("physics.u_star", "cannot parse"))?;
            crate::domain::boundary_layer_scale(nu, us)
                .map_err(|e| invalid("physics.u_star", e.to_string()))?
        }
        (Some(_), Some(_)) => {
            return Err(invalid("physics.alpha", "give either alpha or u_star, not both"))
        }
        (None, None) => return Err(invalid("physics.alpha", "missing (or give physics.u_star)")),
    };
    if !(alpha >= 0.0) {
        return Err(invalid("physics.alpha", "must be >= 0"));
    }

    let profile_kind = match keys.string("physics.profile", "constant").as_str() {
        "obukhov" => ProfileKind::Obukhov,
        "van_driest" => ProfileKind::VanDriest,
        "constant" => ProfileKind::Constant,
        other => return Err(invalid("physics.profile", format!("unknown profile '{other}'"))),
    };
    let kappa: f64 = keys.parse("physics.kappa", crate::domain::KAPPA_DEFAULT)?;
    let kappa_override: bool = keys.parse("physics.kappa_override", false)?;
    let van_driest_a = match keys.get("physics.van_driest_a") {
        None => None,
        Some(s) if s == "auto" => None,
        Some(s) => {
            Some(s.parse::<f64>().map_err(|_| invalid("physics.van_driest_a", "cannot parse"))?)
        }
    };
    let ell0: f64 = keys.parse("physics.ell0", 0.0)?;

    let forcing_kind = match keys.string("physics.forcing", "none").as_str() {
        "none" => ForcingKind::None,
        "constant" => ForcingKind::Constant,
        other => return Err(invalid("physics.forcing", format!("unknown forcing '{other}'"))),
    };
    let mut forcing_values = vec![0.0; dim];
    if forcing_kind == ForcingKind::Constant {
        for (i, name) in axis_names.iter().enumerate() {
            forcing_values[i] = keys.parse(&format!("physics.forcing.{name}"), 0.0)?;
        }
    }

    let eddy_kind = match keys.string("physics.eddy", "none").as_str() {
        "none" => EddyKind::None,
        "constant" => EddyKind::Constant,
        other => return Err(invalid("physics.eddy", format!("unknown eddy '{other}'"))),
    };
    let eddy_value: f64 = keys.parse("physics.eddy.value", 0.0)?;
    let eddy_bound: f64 = keys.parse("physics.eddy_bound", 0.0)?;

    let voigt_form = match keys.string("physics.voigt_form", "div_ell_d").as_str() {
        "div_ell_d" => VoigtFormKind::DivEllD,
        "alpha_sq_laplacian" => VoigtFormKind::AlphaSqLaplacian,
        other => return Err(invalid("physics.voigt_form", format!("unknown form '{other}'"))),
    };

    let init_velocity = match keys.string("init.velocity", "zero").as_str() {
        "zero" => InitVelocity::Zero,
        "taylor_green" => InitVelocity::TaylorGreen,
        "shear_bump" => InitVelocity::ShearBump,
        "random" => InitVelocity::Random,
        other => return Err(invalid("init.velocity", format!("unknown preset '{other}'"))),
    };
    let init_amplitude: f64 = keys.parse("init.amplitude", 0.1)?;

    let tke_enabled: bool = keys.parse("tke.enabled", false)?;
    let h = grid.extents[grid.dim - 1];
    let tke_defaults = TkeConfig::default_for_height(h);
    let tke = TkeConfig {
        n_visc: keys.parse("tke.n_visc", tke_defaults.n_visc)?,
        n_diff: keys.parse("tke.n_diff", tke_defaults.n_diff)?,
        c_diff: keys.parse("tke.c", tke_defaults.c_diff)?,
        eta: keys.parse("tke.eta", tke_defaults.eta)?,
        n_src: keys.parse("tke.n_src", tke_defaults.n_src)?,
    };
    if tke_enabled {
        tke.validate().map_err(|e| invalid("tke", e.to_string()))?;
    }
    let tke_init = match keys.string("tke.k0", "constant").as_str() {
        "constant" => TkeInit::Constant(keys.parse("tke.k0.value", 0.0)?),
        "closure" => TkeInit::Closure,
        other => return Err(invalid("tke.k0", format!("unknown init '{other}'"))),
    };

    let coupling_mode = match keys.string("coupling.mode", "per_step_picard").as_str() {
        "per_step_picard" => CouplingModeKind::PerStepPicard,
        "lagged_single_pass" => CouplingModeKind::LaggedSinglePass,
        other => return Err(invalid("coupling.mode", format!("unknown mode '{other}'"))),
    };
    let tol_couple: f64 = keys.parse("coupling.tol", 1e-8)?;
    let max_couple_iters: usize = keys.parse("coupling.max_iters", 20)?;

    let dt: f64 = keys.require("scheme.dt")?;
    if !(dt > 0.0) {
        return Err(invalid("scheme.dt", "must be > 0"));
    }
    let t_end: f64 = keys.require("scheme.t_end")?;
    if !(t_end >= dt) {
        return Err(invalid("scheme.t_end", "must be >= scheme.dt"));
    }
    let defaults = SchemeConfig::default();
    let scheme = SchemeConfig {
        tol_picard: keys.parse("scheme.tol_picard", defaults.tol_picard)?,
        max_picard: keys.parse("scheme.max_picard", defaults.max_picard)?,
        tol_proj: keys.parse("scheme.tol_proj", defaults.tol_proj)?,
        max_cg: keys.parse("scheme.max_cg", defaults.max_cg)?,
    };
    for (name, v) in [("scheme.tol_picard", scheme.tol_picard), ("scheme.tol_proj", scheme.tol_proj)] {
        if !(v > 0.0) {
            return Err(invalid(name, "must be > 0"));
        }
    }
    if !(tol_couple > 0.0) {
        return Err(invalid("coupling.tol", "must be > 0"));
    }

    let csv_path = keys.string("output.csv", "run.csv");
    let summary_path = keys.string("output.summary", "summary.json");
    let checkpoint_path = keys.get("output.checkpoint").cloned();
    let checkpoint_every: usize = keys.parse("output.checkpoint_every", 0)?;
    let diagnostics: bool = keys.parse("output.diagnostics", false)?;
    let seed: u64 = keys.parse("seed", 42)?;

    // Every provided key must have been consumed.
    let used = keys.used.borrow();
    for k in keys.map.keys() {
        if !used.contains(k) {
            return Err(invalid(k, "unknown key"));
        }
    }

    Ok(RunConfig {
        grid,
        nu,
        alpha,
        profile_kind,
        kappa,
        kappa_override,
        van_driest_a,
        ell0,
        forcing_kind,
        forcing_values,
        eddy_kind,
        eddy_value,
        eddy_bound,
        voigt_form,
        init_velocity,
        init_amplitude,
        tke_enabled,
        tke,
        tke_init,
        coupling_mode,
        tol_couple,
        max_couple_iters,
        dt,
        t_end,
        scheme,
        csv_path,
        summary_path,
        checkpoint_path,
        checkpoint_every,
        diagnostics,
        seed,
    })
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| invalid(&path.display().to_string(), e.to_string()))?;
    parse_config(&text)
}

/// Canonical text form; `parse(echo(cfg)) == cfg`.
pub fn echo_config(cfg: &RunConfig) -> String {
    let mut out = String::new();
    let axis_names: &[&str] = if cfg.grid.dim == 2 { &["x", "z"] } else { &["x", "y", "z"] };
    let mut push = |k: &str, v: String| {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(&v);
        out.push('\n');
    };
    push("grid.dim", cfg.grid.dim.to_string());
    for (i, name) in axis_names.iter().enumerate() {
        push(&format!("grid.extent.{name}"), cfg.grid.extents[i].to_string());
        push(&format!("grid.cells.{name}"), cfg.grid.cells[i].to_string());
        push(
            &format!("grid.bc.{name}"),
            match cfg.grid.bc[i] {
                AxisBc::Periodic => "periodic".into(),
                AxisBc::Wall => "wall".into(),
            },
        );
    }
    push("physics.nu", cfg.nu.to_string());
    push("physics.alpha", cfg.alpha.to_string());
    push(
        "physics.profile",
        match cfg.profile_kind {
            ProfileKind::Obukhov => "obukhov".into(),
            ProfileKind::VanDriest => "van_driest".into(),
            ProfileKind::Constant => "constant".into(),
        },
    );
    push("physics.kappa", cfg.kappa.to_string());
    push("physics.kappa_override", cfg.kappa_override.to_string());
    if let Some(a) = cfg.van_driest_a {
        push("physics.van_driest_a", a.to_string());
    }
    push("physics.ell0", cfg.ell0.to_string());
    push(
        "physics.forcing",
        match cfg.forcing_kind {
            ForcingKind::None => "none".into(),
            ForcingKind::Constant => "constant".into(),
        },
    );
    if cfg.forcing_kind == ForcingKind::Constant {
        for (i, name) in axis_names.iter().enumerate() {
            push(&format!("physics.forcing.{name}"), cfg.forcing_values[i].to_string());
        }
    }
    push(
        "physics.eddy",
        match cfg.eddy_kind {
            EddyKind::None => "none".into(),
            EddyKind::Constant => "constant".into(),
        },
    );
    push("physics.eddy.value", cfg.eddy_value.to_string());
    push("physics.eddy_bound", cfg.eddy_bound.to_string());
    push(
        "physics.voigt_form",
        match cfg.voigt_form {
            VoigtFormKind::DivEllD => "div_ell_d".into(),
            VoigtFormKind::AlphaSqLaplacian => "alpha_sq_laplacian".into(),
        },
    );
    push(
        "init.velocity",
        match cfg.init_velocity {
            InitVelocity::Zero => "zero".into(),
            InitVelocity::TaylorGreen => "taylor_green".into(),
            InitVelocity::ShearBump => "shear_bump".into(),
            InitVelocity::Random => "random".into(),
        },
    );
    push("init.amplitude", cfg.init_amplitude.to_string());
    push("tke.enabled", cfg.tke_enabled.to_string());
    push("tke.n_visc", cfg.tke.n_visc.to_string());
    push("tke.n_diff", cfg.tke.n_diff.to_string());
    push("tke.c", cfg.tke.c_diff.to_string());
    push("tke.eta", cfg.tke.eta.to_string());
    push("tke.n_src", cfg.tke.n_src.to_string());
    match cfg.tke_init {
        TkeInit::Constant(v) => {
            push("tke.k0", "constant".into());
            push("tke.k0.value", v.to_string());
        }
        TkeInit::Closure => push("tke.k0", "closure".into()),
    }
    push(
        "coupling.mode",
        match cfg.coupling_mode {
            CouplingModeKind::PerStepPicard => "per_step_picard".into(),
            CouplingModeKind::LaggedSinglePass => "lagged_single_pass".into(),
        },
    );
    push("coupling.tol", cfg.tol_couple.to_string());
    push("coupling.max_iters", cfg.max_couple_iters.to_string());
    push("scheme.dt", cfg.dt.to_string());
    push("scheme.t_end", cfg.t_end.to_string());
    push("scheme.tol_picard", cfg.scheme.tol_picard.to_string());
    push("scheme.max_picard", cfg.scheme.max_picard.to_string());
    push("scheme.tol_proj", cfg.scheme.tol_proj.to_string());
    push("scheme.max_cg", cfg.scheme.max_cg.to_string());
    push("output.csv", cfg.csv_path.clone());
    push("output.summary", cfg.summary_path.clone());
    if let Some(c) = &cfg.checkpoint_path {
        push("output.checkpoint", c.clone());
    }
    push("output.checkpoint_every", cfg.checkpoint_every.to_string());
    push("output.diagnostics", cfg.diagnostics.to_string());
    push("seed", cfg.seed.to_string());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SAMPLE: &str = r#"
# channel decay run
grid.dim = 2
grid.extent.x = 1.0
grid.extent.z = 1.0
grid.cells.x = 16
grid.cells.z = 16
grid.bc.x = periodic
grid.bc.z = wall
physics.nu = 1e-2
physics.u_star = 0.5
physics.profile = van_driest
physics.kappa = 0.41
init.velocity = random
init.amplitude = 0.2
scheme.dt = 0.005
scheme.t_end = 0.05
output.csv = /tmp/run.csv
output.summary = /tmp/summary.json
seed = 7
"#;

    #[test]
    fn round_trip_identity() {
        let cfg = parse_config(SAMPLE).unwrap();
        assert_eq!(cfg.alpha, 1e-2 / 0.5);
        let echoed = echo_config(&cfg);
        let cfg2 = parse_config(&echoed).unwrap();
        assert_eq!(cfg, cfg2);
        // Echo is a fixed point.
        assert_eq!(echoed, echo_config(&cfg2));
    }

    #[test]
    fn bad_values_name_the_key() {
        let bad = SAMPLE.replace("scheme.dt = 0.005", "scheme.dt = -1");
        match parse_config(&bad) {
            Err(Error::InvalidConfig { path, .. }) => assert_eq!(path, "scheme.dt"),
            other => panic!("expected config error, got {other:?}"),
        }
        let unknown = format!("{SAMPLE}\nnot.a.key = 3\n");
        match parse_config(&unknown) {
            Err(Error::InvalidConfig { path, .. }) => assert_eq!(path, "not.a.key"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn alpha_and_u_star_are_exclusive() {
        let both = SAMPLE.replace("physics.u_star = 0.5", "physics.u_star = 0.5\nphysics.alpha = 0.1");
        assert!(parse_config(&both).is_err());
    }
}
