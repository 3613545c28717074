//! Contract tests against the installed binary: exit codes, artifact
//! formats, determinism, and the round-trip guarantee, all exercised the
//! way a shell user would.

use std::process::{Command, Output};

use defersched_cli::Table;

fn defersched(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_defersched"))
        .args(args)
        .output()
        .expect("the binary runs")
}

fn stdout_of(output: &Output) -> String {
    String::from_utf8(output.stdout.clone()).expect("artifacts are UTF-8")
}

// ---------------------------------------------------------------------------
// Exit codes
// ---------------------------------------------------------------------------

#[test]
fn good_invocations_exit_zero() {
    for args in [
        vec!["solve", "--p", "0.5", "--psi", "2", "--d", "1"],
        vec!["solve", "--table", "1:0.25,3:0.25", "--d", "1"],
        vec!["nash", "--p", "0.85", "--psi", "2", "--d", "1", "--certificate", "--grid", "201"],
        vec!["simulate", "--p", "0.5", "--psi", "2", "--d", "1", "--horizon", "50000"],
    ] {
        let out = defersched(&args);
        assert_eq!(out.status.code(), Some(0), "{args:?} failed: {}", stdout_of(&out));
    }
}

#[test]
fn configuration_mistakes_exit_two() {
    for args in [
        // No parameter point and no demand mix.
        vec!["solve", "--d", "1"],
        // Interior-only commands fed an edge rate.
        vec!["sweep", "--p", "0,0.5", "--psi", "2", "--d", "1"],
        vec!["nash", "--p", "1", "--psi", "2", "--d", "1"],
        // Malformed demand mix.
        vec!["solve", "--table", "1|0.25", "--d", "1"],
        // Grid below the oracle's resolution floor.
        vec!["solve", "--p", "0.5", "--psi", "2", "--d", "1", "--oracle", "--grid", "50"],
        // Unknown subcommand is a usage error.
        vec!["bogus"],
    ] {
        let out = defersched(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?} should be a configuration error");
    }

    let out = Command::new(env!("CARGO_BIN_EXE_defersched"))
        .env("DEFERSCHED_THREADS", "several")
        .args(["nash", "--p", "0.5", "--psi", "2", "--d", "1"])
        .output()
        .expect("the binary runs");
    assert_eq!(out.status.code(), Some(2), "an unparseable thread cap is a config error");
}

#[test]
fn runtime_failures_exit_one() {
    // A horizon below the simulator's floor is a valid flag value that the
    // run itself rejects.
    let out = defersched(&["simulate", "--p", "0.5", "--psi", "2", "--d", "1", "--horizon", "100"]);
    assert_eq!(out.status.code(), Some(1), "a rejected run exits 1");
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("horizon"), "the failure names the horizon: {stderr}");
}

// ---------------------------------------------------------------------------
// Artifact formats
// ---------------------------------------------------------------------------

#[test]
fn csv_artifacts_survive_a_parse_and_emit_cycle() {
    let out = defersched(&[
        "sweep", "--p", "0.3,0.6", "--psi", "2", "--d", "1", "--horizon", "20000", "--seeds", "2",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout_of(&out);
    let table = Table::from_csv(text.as_bytes()).expect("the artifact parses");
    assert_eq!(
        table.columns(),
        ["p", "optimal_cost", "optimal_stderr", "nash_cost", "nash_stderr", "poa", "degenerate"]
    );
    assert_eq!(table.rows().len(), 2, "one row per arrival rate");
    assert_eq!(table.to_csv_string().unwrap(), text, "re-emission is byte-identical");
}

#[test]
fn json_artifacts_parse_and_name_their_command() {
    let out = defersched(&["nash", "--p", "0.5", "--psi", "2", "--d", "1", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let value: serde_json::Value =
        serde_json::from_str(&stdout_of(&out)).expect("the artifact is JSON");
    assert_eq!(value["command"], "nash");
    assert!(value["equilibrium"]["limits"]["a_inf"].is_number());
}

#[test]
fn artifacts_land_in_the_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("policy.csv");
    let out = defersched(&[
        "solve", "--p", "0.5", "--psi", "2", "--d", "1", "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout_of(&out).is_empty(), "redirected runs keep stdout quiet");
    let text = std::fs::read_to_string(&path).unwrap();
    let table = Table::from_csv(text.as_bytes()).unwrap();
    assert_eq!(table.rows().len(), 1, "the defer-regime policy is one affine segment");
    assert_eq!(table.to_csv_string().unwrap(), text);
}

#[test]
fn histogram_masses_sum_to_one() {
    let out = defersched(&[
        "simulate", "--p", "0.85", "--psi", "2", "--d", "1", "--mode", "nash", "--horizon",
        "50000", "--histogram",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let table = Table::from_csv(stdout_of(&out).as_bytes()).unwrap();
    assert_eq!(table.columns(), ["level", "mass"]);
    let total: f64 = table.rows().iter().map(|r| r[1].parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9, "histogram masses sum to {total}");
}

// ---------------------------------------------------------------------------
// Determinism and the validation battery
// ---------------------------------------------------------------------------

#[test]
fn simulation_artifacts_are_seed_deterministic() {
    let args =
        ["simulate", "--p", "0.6", "--psi", "2", "--d", "1", "--horizon", "50000", "--seed", "3"];
    let first = stdout_of(&defersched(&args));
    let second = stdout_of(&defersched(&args));
    assert_eq!(first, second, "one seed, one artifact");

    let other = stdout_of(&defersched(&[
        "simulate", "--p", "0.6", "--psi", "2", "--d", "1", "--horizon", "50000", "--seed", "4",
    ]));
    assert_ne!(first, other, "a new seed draws a new arrival stream");
}

#[test]
fn the_validation_battery_passes_and_emits_json_lines() {
    let out = defersched(&["validate", "--grid", "501"]);
    assert_eq!(out.status.code(), Some(0), "all checks pass at the default point");
    let text = stdout_of(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 8, "one line per check");
    for line in lines {
        let value: serde_json::Value = serde_json::from_str(line).expect("each line is JSON");
        assert!(value["check"].is_string());
        assert_eq!(value["passed"], true, "check failed: {line}");
    }
}

#[test]
fn edge_rates_simulate_but_do_not_sweep() {
    let out = defersched(&[
        "simulate", "--p", "1", "--psi", "2", "--d", "1", "--horizon", "20000",
    ]);
    assert_eq!(out.status.code(), Some(0), "p = 1 is a legal simulation");
    let table = Table::from_csv(stdout_of(&out).as_bytes()).unwrap();
    let avg: f64 = table.rows()[0][9].parse().unwrap();
    assert!((avg - 4.0).abs() < 1e-9, "every slot serves the full demand: cost psi^2");

    let out = defersched(&["sweep", "--p", "1", "--psi", "2", "--d", "1"]);
    assert_eq!(out.status.code(), Some(2), "sweeps reject the edge rates");
}
