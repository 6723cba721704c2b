use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use wpcn_aoi::params::SystemParams;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wpcn-aoi")).args(args).output().unwrap()
}

fn small_config(dir: &Path, es: u32) -> String {
    let mut p = SystemParams::reference(es);
    p.battery_levels = 5;
    p.aoi_max = 5;
    p.tau_max = 5;
    p.channel_levels = 4;
    let path = dir.join(format!("es{es}.conf"));
    fs::write(&path, p.to_config_string()).unwrap();
    path.to_str().unwrap().to_string()
}

fn data_lines(csv: &str) -> Vec<&str> {
    csv.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn solve_reference() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = tmp.path().join("p.conf");
    fs::write(&conf, "sampling_cost_quanta = 3\n").unwrap();
    let out = tmp.path().join("o");
    let r = cli(&["solve", "--config", conf.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(0));
    let stdout = String::from_utf8(r.stdout).unwrap();
    let rho: f64 = stdout.lines().next().unwrap().trim_start_matches("rho = ").parse().unwrap();
    assert!((1.0..=10.0).contains(&rho), "{rho}");
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("converged=true"));
    assert!(!report.contains("wall"));
}

#[test]
fn tighter_tolerance_keeps_the_policy() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = small_config(tmp.path(), 2);
    let mut policies = Vec::new();
    for (dir, tol) in [("a", "1e-6"), ("b", "1e-9")] {
        let out = tmp.path().join(dir);
        let r = cli(&["solve", "--config", &conf, "--out", out.to_str().unwrap(), "--tol", tol]);
        assert_eq!(r.status.code(), Some(0));
        let text = fs::read_to_string(out.join("policy.csv")).unwrap();
        policies.push(data_lines(&text).join("\n"));
    }
    assert_eq!(policies[0], policies[1]);
}

#[test]
fn invalid_config_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = tmp.path().join("bad.conf");
    fs::write(&conf, "sampling_cost_quanta = 3\nbattery_levels = 1\nchannel_levels = 0\n").unwrap();
    let r = cli(&["solve", "--config", conf.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    let err = String::from_utf8(r.stderr).unwrap();
    assert!(err.contains("battery_levels") && err.contains("channel_levels"), "{err}");
    let missing = cli(&["solve", "--config", "/nonexistent.conf"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn verify_passes_then_catches_corruption() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = small_config(tmp.path(), 1);
    let out = tmp.path().join("o");
    let o = out.to_str().unwrap();
    assert_eq!(cli(&["solve", "--config", &conf, "--out", o]).status.code(), Some(0));
    assert_eq!(cli(&["verify", "--config", &conf, "--out", o]).status.code(), Some(0));
    assert!(out.join("thresholds.csv").exists());

    // flip one transmit decision to idle-harvest at a higher AoI
    let path = out.join("policy.csv");
    let text = fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let rows: Vec<Vec<&str>> = lines.iter().map(|l| l.split(',').collect()).collect();
    let is_row = |c: &Vec<&str>| c.len() == 7 && c[0].parse::<usize>().is_ok();
    let first = rows.iter().position(is_row).unwrap();
    // one AoI step is tau_max * L^2 = 5 * 16 rows
    let target = (first + 80..rows.len())
        .find(|&i| rows[i][2] == "5" && rows[i][6] == "IT" && rows[i - 80][6] == "IT")
        .expect("a transmit decision at A=5 whose A=4 neighbour also transmits");
    let mut edited: Vec<String> = lines.iter().map(|s| s.to_string()).collect();
    edited[target] = edited[target].replace(",IT", ",IH");
    fs::write(&path, edited.join("\n") + "\n").unwrap();
    let r = cli(&["verify", "--config", &conf, "--out", o]);
    assert_eq!(r.status.code(), Some(1));
    let violations = fs::read_to_string(out.join("violations.csv")).unwrap();
    assert!(violations.lines().count() > 1);

    // artifacts from another configuration
    let other = small_config(tmp.path(), 2);
    assert_eq!(cli(&["verify", "--config", &other, "--out", o]).status.code(), Some(2));
}

#[test]
fn policy_grid_slices() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = small_config(tmp.path(), 1);
    let o = tmp.path().join("o");
    let o = o.to_str().unwrap();
    let r = cli(&["policy-grid", "--config", &conf, "--out", o, "--slice", "B=4,g=3,h=3"]);
    assert_eq!(r.status.code(), Some(0));
    let grid = String::from_utf8(r.stdout).unwrap();
    let rows = data_lines(&grid);
    assert_eq!(rows[0], "aoi\\tau,1,2,3,4,5");
    assert_eq!(rows.len(), 6);
    assert!(rows[1..].iter().all(|r| r.split(',').skip(1).all(|c| ["IH", "SH", "IT", "ST"].contains(&c))));

    let r = cli(&["policy-grid", "--config", &conf, "--out", o, "--slice", "B=4,A=2,tau=1,g=3,h=3", "--name", "cell.csv"]);
    assert_eq!(r.status.code(), Some(0));
    assert_eq!(data_lines(&fs::read_to_string(tmp.path().join("o/cell.csv")).unwrap()).len(), 2);

    let r = cli(&["policy-grid", "--config", &conf, "--out", o, "--slice", "B=4,g=3,h=7"]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn single_point_compare() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = small_config(tmp.path(), 1);
    let o = tmp.path().join("o");
    let r = cli(&[
        "compare", "--config", &conf, "--out", o.to_str().unwrap(), "--axis", "sampling_cost", "--values", "2",
    ]);
    assert_eq!(r.status.code(), Some(0));
    let csv = fs::read_to_string(o.join("compare.csv")).unwrap();
    let rows = data_lines(&csv);
    assert_eq!(rows.len(), 2);
    assert!(rows[1].starts_with(",2.0,"), "{}", rows[1]);
}

#[test]
fn quantizer_and_simulate() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = small_config(tmp.path(), 1);
    let o = tmp.path().join("o");
    let o = o.to_str().unwrap();
    let r = cli(&["quantizer", "--config", &conf, "--out", o, "--mode", "upper"]);
    assert_eq!(r.status.code(), Some(0));
    assert!(String::from_utf8(r.stdout).unwrap().contains("# mode=upper"));
    for extra in [&[][..], &["--baseline"][..]] {
        let mut args = vec!["simulate", "--config", &conf, "--out", o, "--slots", "5000", "--seed", "3"];
        args.extend_from_slice(extra);
        let r = cli(&args);
        assert_eq!(r.status.code(), Some(0));
    }
    assert!(tmp.path().join("o/simulation.csv").exists());
    assert!(tmp.path().join("o/simulation_baseline.csv").exists());
    assert_eq!(cli(&["simulate", "--config", &conf, "--out", o, "--slots", "10"]).status.code(), Some(2));
}
