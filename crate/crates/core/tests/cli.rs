use std::process::Command;

use dpm_solver::harness::CSV_HEADER;

fn harness() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dpm-harness"))
}

#[test]
fn convergence_writes_csv_and_order_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("conv.csv");
    let run = harness()
        .args([
            "convergence", "--oracle", "mu=1,s0=0.5", "--schedule", "vp_linear_beta", "--methods",
            "dpm_pp_2m,first_order_data", "--steps", "10,20,40,80", "--seeds", "0,1", "--tol", "1e-10", "--out",
        ])
        .arg(&out)
        .arg("--no-timing")
        .output()
        .unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let stdout = String::from_utf8(run.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("SUITE order:dpm_pp_2m PASS max_dev="), "{stdout}");
    assert!(lines[1].starts_with("SUITE order:first_order_data PASS max_dev="), "{stdout}");
    let first = std::fs::read(&out).unwrap();
    let text = String::from_utf8(first.clone()).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
    assert_eq!(text.lines().count(), 1 + 2 * 4 * 2);

    let again = dir.path().join("again.csv");
    let status = harness()
        .args([
            "convergence", "--oracle", "mu=1,s0=0.5", "--schedule", "vp_linear_beta", "--methods",
            "dpm_pp_2m,first_order_data", "--steps", "10,20,40,80", "--seeds", "0,1", "--tol", "1e-10", "--out",
        ])
        .arg(&again)
        .arg("--no-timing")
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(first, std::fs::read(&again).unwrap());
}

#[test]
fn failing_order_band_gives_nonzero_exit() {
    // uniform t leaves the multistep solver pre-asymptotic at these step counts
    let dir = tempfile::tempdir().unwrap();
    let run = harness()
        .args([
            "convergence", "--oracle", "mu=1,s0=0.5", "--schedule", "linear", "--methods", "dpm_pp_2m", "--steps",
            "10,20,40,80", "--grid", "uniform_t", "--out",
        ])
        .arg(dir.path().join("c.csv"))
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(1));
    assert!(String::from_utf8(run.stdout).unwrap().contains("SUITE order:dpm_pp_2m FAIL max_dev="));
}

#[test]
fn equivalence_reports_three_passing_suites() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eq.txt");
    let run = harness().arg("equivalence").arg("--out").arg(&out).output().unwrap();
    assert!(run.status.success());
    let stdout = String::from_utf8(run.stdout).unwrap();
    assert_eq!(stdout, std::fs::read_to_string(&out).unwrap());
    let names: Vec<&str> = stdout.lines().map(|l| l.split(' ').nth(1).unwrap()).collect();
    assert_eq!(names, ["first_order_vs_ddim", "sde_pp_1_vs_stochastic_ddim", "dpm_pp_2s_noise_form"]);
    assert!(stdout.lines().all(|l| l.split(' ').nth(2) == Some("PASS")));
}

#[test]
fn sde_stats_writes_one_row_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sde.csv");
    let run = harness()
        .args(["sde-stats", "--method", "sde_pp_2m", "--steps", "50", "--trajectories", "500", "--seeds", "3,4", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    let stdout = String::from_utf8(run.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 4, "{stdout}");
    assert!(stdout.lines().all(|l| l.starts_with("SUITE sde_")));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(1).unwrap().starts_with("sde_pp_2m,50,50,"));
}

#[test]
fn bad_arguments_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let run = harness()
        .args(["convergence", "--methods", "nope", "--steps", "10", "--out"])
        .arg(dir.path().join("x.csv"))
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(2));
    assert!(String::from_utf8(run.stderr).unwrap().contains("unknown method 'nope'"));
    let run = harness()
        .args(["sde-stats", "--method", "dpm_pp_2m", "--steps", "10", "--trajectories", "5", "--out"])
        .arg(dir.path().join("y.csv"))
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(2));
}
