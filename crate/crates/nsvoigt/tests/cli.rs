//! Exit-code contract and file outputs of the command-line driver.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nsvoigt"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("nsvoigt_cli_{tag}"));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &PathBuf, name: &str, dt: &str) -> PathBuf {
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
init.velocity = shear_bump
init.amplitude = 0.2
scheme.dt = {dt}
scheme.t_end = 0.02
output.csv = {base}.csv
output.summary = {base}.json
seed = 3
"#,
        base = base.display()
    );
    let path = dir.join(format!("{name}.cfg"));
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn unknown_subcommand_exits_2() {
    let status = bin().arg("frobnicate").status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn no_arguments_exits_2() {
    let status = bin().status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn missing_config_exits_2() {
    let status = bin().args(["run", "/nonexistent/path.cfg"]).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn invalid_dt_exits_2_and_names_the_key() {
    let dir = temp_dir("bad_dt");
    let cfg = write_config(&dir, "bad", "-0.5");
    let out = bin().args(["run", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("scheme.dt"), "stderr: {stderr}");
}

#[test]
fn run_succeeds_and_writes_outputs() {
    let dir = temp_dir("run_ok");
    let cfg = write_config(&dir, "ok", "0.005");
    let out = bin().args(["run", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("ok.csv")).unwrap();
    assert!(csv.starts_with("# schema=nsvoigt.csv.v1"));
    assert!(csv.lines().nth(1).unwrap().starts_with("step,t,E,"));
    let summary = std::fs::read_to_string(dir.join("ok.json")).unwrap();
    assert!(summary.contains("\"energy_identity\": true"));
}

#[test]
fn verify_small_grid_exits_0() {
    let dir = temp_dir("verify");
    let summary = dir.join("verify.json");
    let out = bin().args(["verify", "16", summary.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&summary).unwrap();
    for key in ["adjointness", "korn_finite", "h_half_embedding_finite", "advection_skew"] {
        assert!(text.contains(key), "summary missing {key}");
    }
}

#[test]
fn nstke_runs_coupled_system() {
    let dir = temp_dir("nstke");
    let base = dir.join("coupled");
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
tke.enabled = true
tke.k0 = constant
tke.k0.value = 0.01
scheme.dt = 0.004
scheme.t_end = 0.02
output.csv = {base}.csv
output.summary = {base}.json
seed = 11
"#,
        base = base.display()
    );
    let cfg = dir.join("coupled.cfg");
    std::fs::write(&cfg, text).unwrap();
    let out = bin().args(["nstke", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("coupled.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().contains("k_total,production,dissipation_k,clipped_mass,transfer_ok"));
}
