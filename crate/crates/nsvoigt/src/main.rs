//! Command-line driver.
//!
//! ```text
//! nsvoigt run <config>          Voigt flow run
//! nsvoigt nstke <config>        coupled flow + TKE run
//! nsvoigt verify [cells]        operator/norm/Korn/H1/2 suites
//! nsvoigt mms                   manufactured-solution convergence orders
//! nsvoigt compactness [family]  eddy-viscosity robustness suite
//! nsvoigt galerkin              spectral-oracle cross validation
//! nsvoigt reduce-nsv            constant-ell equivalence check
//! ```
//!
//! Exit codes: 0 all assertions pass, 1 a named assertion failed,
//! 2 usage or configuration error.

use std::path::Path;
use std::process::ExitCode;

use nsvoigt::cli_io::{self, load_config};
use nsvoigt::experiments::compactness::{run_compactness, CompactnessPlan, PerturbationFamily};
use nsvoigt::experiments::galerkin::galerkin_grid_agreement;
use nsvoigt::experiments::mms::{mms_convergence, MmsCase};
use nsvoigt::experiments::verify::{reduce_nsv_check, verify_suite};

fn usage() -> ExitCode {
    eprintln!(
        "usage: nsvoigt <run|nstke|verify|mms|compactness|galerkin|reduce-nsv> [args]\n\
         \n\
         run <config>            integrate the generalized Voigt flow\n\
         nstke <config>          integrate the coupled flow/TKE system\n\
         verify [cells]          operator and inequality suites (default 32)\n\
         mms                     convergence orders on {{16,32,64}}^2\n\
         compactness [family]    amplitude_decay | shrinking_support | oscillatory_decay\n\
         galerkin                n=8 spectral oracle vs grid solver\n\
         reduce-nsv              ell = 2 alpha operator equivalence"
    );
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(cmd) = args.first() else {
        return usage();
    };
    match cmd.as_str() {
        "run" => cmd_run(&args[1..]),
        "nstke" => cmd_nstke(&args[1..]),
        "verify" => cmd_verify(&args[1..]),
        "mms" => cmd_mms(),
        "compactness" => cmd_compactness(&args[1..]),
        "galerkin" => cmd_galerkin(),
        "reduce-nsv" => cmd_reduce_nsv(),
        _ => {
            eprintln!("unknown subcommand '{cmd}'");
            usage()
        }
    }
}

fn print_flags(flags: &std::collections::BTreeMap<String, bool>) {
    for (name, ok) in flags {
        println!("  [{}] {}", if *ok { "pass" } else { "FAIL" }, name);
    }
}

fn cmd_run(args: &[String]) -> ExitCode {
    let Some(path) = args.first() else {
        eprintln!("run: missing config path");
        return ExitCode::from(2);
    };
    let cfg = match load_config(Path::new(path)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    match cli_io::run_flow(&cfg, "run") {
        Ok(out) => {
            println!(
                "run: {} steps to t = {}, E {} -> {}, balance residual {:.3e}",
                out.summary.steps,
                out.summary.final_time,
                out.summary.energy_initial,
                out.summary.energy_final,
                out.summary.final_balance_residual
            );
            print_flags(&out.summary.flags);
            if out.summary.all_pass() {
                ExitCode::SUCCESS
            } else {
                let failed =
                    out.summary.flags.iter().find(|(_, v)| !**v).map(|(k, _)| k.clone()).unwrap();
                eprintln!("failed invariant: {failed}");
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("run failed: {e}");
            ExitCode::from(1)
        }
    }
}

fn cmd_nstke(args: &[String]) -> ExitCode {
    let Some(path) = args.first() else {
        eprintln!("nstke: missing config path");
        return ExitCode::from(2);
    };
    let mut cfg = match load_config(Path::new(path)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    cfg.tke_enabled = true;
    match cli_io::run_coupled(&cfg) {
        Ok(out) => {
            println!(
                "nstke: {} steps to t = {}, total k = {}",
                out.summary.steps, out.summary.final_time, out.summary.values["final_total_k"]
            );
            print_flags(&out.summary.flags);
            if out.summary.all_pass() {
                ExitCode::SUCCESS
            } else {
                let failed =
                    out.summary.flags.iter().find(|(_, v)| !**v).map(|(k, _)| k.clone()).unwrap();
                eprintln!("failed invariant: {failed}");
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("nstke failed: {e}");
            ExitCode::from(1)
        }
    }
}

fn cmd_verify(args: &[String]) -> ExitCode {
    let cells = match args.first().map(|s| s.parse::<usize>()) {
        None => 32,
        Some(Ok(n)) => n,
        Some(Err(_)) => {
            eprintln!("verify: cells must be an integer");
            return ExitCode::from(2);
        }
    };
    let summary_path = args.get(1).cloned().unwrap_or_else(|| "verify_summary.json".into());
    match verify_suite(cells, 100, 12345) {
        Ok(report) => {
            print_flags(&report.flags);
            for (name, v) in &report.values {
                println!("  {name} = {v:.6e}");
            }
            let summary = cli_io::RunSummary {
                artifact_version: env!("CARGO_PKG_VERSION").into(),
                subcommand: "verify".into(),
                wall_clock_sec: 0.0,
                final_time: 0.0,
                steps: 0,
                energy_initial: 0.0,
                energy_final: 0.0,
                dissipation_cum: 0.0,
                work_cum: 0.0,
                max_step_residual: 0.0,
                final_balance_residual: 0.0,
                max_div: 0.0,
                flags: report.flags.clone(),
                values: report.values.clone(),
                config_echo: format!("verify.cells = {cells}\n"),
            };
            if let Err(e) = cli_io::write_summary(&summary, Path::new(&summary_path)) {
                eprintln!("could not write summary: {e}");
            }
            if report.all_pass() {
                println!("verify: all invariants hold on {cells}x{cells}");
                ExitCode::SUCCESS
            } else {
                eprintln!("failed invariant: {}", report.first_failure().unwrap());
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("verify failed: {e}");
            ExitCode::from(1)
        }
    }
}

fn suite_summary(
    subcommand: &str,
    flags: std::collections::BTreeMap<String, bool>,
    values: std::collections::BTreeMap<String, f64>,
    path: &str,
) {
    let summary = cli_io::RunSummary {
        artifact_version: env!("CARGO_PKG_VERSION").into(),
        subcommand: subcommand.into(),
        wall_clock_sec: 0.0,
        final_time: 0.0,
        steps: 0,
        energy_initial: 0.0,
        energy_final: 0.0,
        dissipation_cum: 0.0,
        work_cum: 0.0,
        max_step_residual: 0.0,
        final_balance_residual: 0.0,
        max_div: 0.0,
        flags,
        values,
        config_echo: String::new(),
    };
    if let Err(e) = cli_io::write_summary(&summary, Path::new(path)) {
        eprintln!("could not write {path}: {e}");
    }
}

fn cmd_mms() -> ExitCode {
    let mut ok = true;
    let mut flags = std::collections::BTreeMap::new();
    let mut values = std::collections::BTreeMap::new();
    let csv = cli_io::CsvStream::create(
        Path::new("mms.csv"),
        "case,resolution,spatial_error,dt,temporal_error",
    )
    .ok();
    for case in [MmsCase::classical(), MmsCase::voigt_van_driest()] {
        match mms_convergence(&case, &[16, 32, 64]) {
            Ok(t) => {
                println!(
                    "mms {}: spatial order {:.3} (errors {:?}), temporal order {:.3}",
                    t.case_name, t.spatial_order, t.spatial_errors, t.temporal_order
                );
                let pass = t.spatial_order >= 1.9 && t.temporal_order >= 1.9;
                println!("  [{}] orders >= 1.9", if pass { "pass" } else { "FAIL" });
                if let Some(csv) = &csv {
                    for (i, n) in t.resolutions.iter().enumerate() {
                        let _ = csv.row(format!("{},{},{},,", t.case_name, n, t.spatial_errors[i]));
                    }
                    for (dt, err) in t.dts.iter().zip(&t.temporal_errors) {
                        let _ = csv.row(format!("{},,,{dt},{err}", t.case_name));
                    }
                }
                flags.insert(format!("{}_orders", t.case_name), pass);
                values.insert(format!("{}_spatial_order", t.case_name), t.spatial_order);
                values.insert(format!("{}_temporal_order", t.case_name), t.temporal_order);
                ok &= pass;
            }
            Err(e) => {
                eprintln!("mms {} failed: {e}", case.name);
                flags.insert(format!("{}_orders", case.name), false);
                ok = false;
            }
        }
    }
    if let Some(csv) = csv {
        let _ = csv.finish();
    }
    suite_summary("mms", flags, values, "mms_summary.json");
    if ok {
        ExitCode::SUCCESS
    } else {
        eprintln!("failed invariant: mms convergence order");
        ExitCode::from(1)
    }
}

fn cmd_compactness(args: &[String]) -> ExitCode {
    let family = match args.first().map(String::as_str) {
        None | Some("amplitude_decay") => PerturbationFamily::AmplitudeDecay,
        Some("shrinking_support") => PerturbationFamily::ShrinkingSupport,
        Some("oscillatory_decay") => PerturbationFamily::OscillatoryDecay,
        Some(other) => {
            eprintln!("unknown family '{other}'");
            return ExitCode::from(2);
        }
    };
    let family_name = match family {
        PerturbationFamily::AmplitudeDecay => "amplitude_decay",
        PerturbationFamily::ShrinkingSupport => "shrinking_support",
        PerturbationFamily::OscillatoryDecay => "oscillatory_decay",
    };
    let plan = CompactnessPlan::default_plan(family);
    match run_compactness(&plan) {
        Ok(table) => {
            println!("n,m_const,m_bump,w_l2,time_weighted");
            let csv = cli_io::CsvStream::create(
                Path::new(&format!("compactness_{family_name}.csv")),
                "n,phi,m_n,w_n,time_weighted",
            )
            .ok();
            for r in &table.rows {
                println!("{},{},{},{},{}", r.n, r.m_const, r.m_bump, r.w_l2, r.time_weighted);
                if let Some(csv) = &csv {
                    let _ = csv.row(format!("{},const,{},{},{}", r.n, r.m_const, r.w_l2, r.time_weighted));
                    let _ = csv.row(format!("{},bump,{},{},{}", r.n, r.m_bump, r.w_l2, r.time_weighted));
                }
            }
            if let Some(csv) = csv {
                let _ = csv.finish();
            }
            println!("limit time-weighted dissipation: {}", table.limit_time_weighted);
            let mut flags = std::collections::BTreeMap::new();
            for (name, ok) in [
                ("m_const_decay", table.m_const_ok),
                ("m_bump_decay", table.m_bump_ok),
                ("w_decay", table.w_ok),
            ] {
                println!("  [{}] {}", if ok { "pass" } else { "FAIL" }, name);
                flags.insert(name.to_string(), ok);
            }
            let mut values = std::collections::BTreeMap::new();
            if let (Some(first), Some(last)) = (table.rows.first(), table.rows.last()) {
                values.insert("m_const_final_over_initial".into(), last.m_const / first.m_const);
                values.insert("m_bump_final_over_initial".into(), last.m_bump / first.m_bump);
                values.insert("w_final_over_initial".into(), last.w_l2 / first.w_l2);
            }
            suite_summary(
                "compactness",
                flags,
                values,
                &format!("compactness_{family_name}_summary.json"),
            );
            if table.m_const_ok && table.m_bump_ok && table.w_ok {
                ExitCode::SUCCESS
            } else {
                eprintln!("failed invariant: compactness decay");
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("compactness failed: {e}");
            ExitCode::from(1)
        }
    }
}

fn cmd_galerkin() -> ExitCode {
    match galerkin_grid_agreement(8, 32, 0.5, 0.0125) {
        Ok(report) => {
            println!(
                "galerkin: max energy gap {:.3e} vs bound {:.3e} (grid residual {:.3e}, \
                 spectral residual {:.3e}, Richardson {:.3e}/{:.3e})",
                report.max_energy_gap,
                report.bound,
                report.grid_residual,
                report.galerkin_residual,
                report.richardson_grid,
                report.richardson_galerkin
            );
            println!("  [{}] energy agreement", if report.pass { "pass" } else { "FAIL" });
            let flags = std::collections::BTreeMap::from([("energy_agreement".to_string(), report.pass)]);
            let values = std::collections::BTreeMap::from([
                ("max_energy_gap".to_string(), report.max_energy_gap),
                ("bound".to_string(), report.bound),
            ]);
            suite_summary("galerkin", flags, values, "galerkin_summary.json");
            if report.pass {
                ExitCode::SUCCESS
            } else {
                eprintln!("failed invariant: galerkin agreement");
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("galerkin failed: {e}");
            ExitCode::from(1)
        }
    }
}

fn cmd_reduce_nsv() -> ExitCode {
    match reduce_nsv_check(32, 100, 1e-10) {
        Ok(report) => {
            println!(
                "reduce-nsv: max L2 trajectory difference {:.3e} over {} steps",
                report.max_l2_difference, report.steps
            );
            println!("  [{}] difference <= 1e-10", if report.pass { "pass" } else { "FAIL" });
            if report.pass {
                ExitCode::SUCCESS
            } else {
                eprintln!("failed invariant: nsv reduction");
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("reduce-nsv failed: {e}");
            ExitCode::from(1)
        }
    }
}
