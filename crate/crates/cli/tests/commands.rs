use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn repo(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn stockflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stockflow"))
        .args(args)
        .env(stockflow_cli::MODEL_DIR_VAR, repo("models"))
        .current_dir(std::env::temp_dir())
        .output()
        .unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8(bytes.to_vec()).unwrap()
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(i).unwrap().parse().unwrap()).collect()
}

#[test]
fn check_prints_one_line_per_element() {
    let out = stockflow(&["check", "supply_demand.sdm"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = text(&out.stdout);
    assert_eq!(stdout.lines().count(), 15);
    assert!(stdout.lines().any(|l| l.starts_with("Price_Change ") && l.ends_with("dollar/day/unit")));
    let out = stockflow(&["check", repo("models/appendix_equations.sdm").to_str().unwrap()]);
    assert_eq!(text(&out.stdout).lines().count(), 13);
}

#[test]
fn check_failures() {
    let out = stockflow(&["check", repo("tests/fixtures/broken_units.sdm").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = text(&out.stderr);
    assert!(stderr.contains("Bad") && stderr.contains("dollar/unit") && stderr.contains("dollar/day/unit"), "{stderr}");
    assert!(stderr.contains(":4:1:"), "{stderr}");
    assert_eq!(stockflow(&["check", "missing.sdm"]).status.code(), Some(3));

    let dir = tempfile::tempdir().unwrap();
    let syntax = dir.path().join("syntax.sdm");
    std::fs::write(&syntax, "aux X = (1 +\n").unwrap();
    let out = stockflow(&["check", syntax.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains(":1:"));
}

#[test]
fn run_writes_csv() {
    let out = stockflow(&["run", "supply_demand.sdm", "--stop", "100"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = text(&out.stdout);
    assert!(csv.starts_with("time,Perceived_Price_for_Supply,Quantity_Supplied,"));
    assert!(!csv.contains("Demand_Schedule") && !csv.contains('\r'));
    assert_eq!(csv.lines().count(), 402);
    let price = column(&csv, "Price");
    assert!((price.last().unwrap() - 27.5).abs() <= 0.05);
    assert_eq!(column(&csv, "time").last(), Some(&100.0));
}

#[test]
fn run_overrides_and_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("flat.csv");
    let out = stockflow(&["run", "supply_demand", "--set", "Shift_Height=0", "--out", file.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let csv = std::fs::read_to_string(&file).unwrap();
    assert!(column(&csv, "Price").iter().all(|&p| p == 25.0));

    let out = stockflow(&["run", "supply_demand.sdm", "--stop", "10", "--dt", "0.5", "--save", "1", "--method", "RK4"]);
    assert_eq!(text(&out.stdout).lines().count(), 12);
}

#[test]
fn run_fault_keeps_partial_csv() {
    let out = stockflow(&["run", repo("tests/fixtures/zero_denominator.sdm").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let csv = text(&out.stdout);
    assert_eq!(csv.lines().last(), Some("# fault at t=2: Coverage"));
    assert_eq!(column(&csv, "time").last(), Some(&1.75));
    assert!(text(&out.stderr).contains("division by zero"));
}

#[test]
fn run_usage_errors() {
    for args in [
        &["run", "supply_demand.sdm", "--dt", "0"][..],
        &["run", "supply_demand.sdm", "--set", "Price=3"],
        &["run", "supply_demand.sdm", "--set", "Nope"],
        &["run", "supply_demand.sdm", "--method", "leapfrog"],
        &["run", "supply_demand.sdm", "--save", "0.1"],
        &["run", "nope.sdm"],
        &["frobnicate"],
        &[],
    ] {
        assert_eq!(stockflow(args).status.code(), Some(3), "{args:?}");
    }
    assert_eq!(stockflow(&["--help"]).status.code(), Some(0));
}

#[test]
fn loops_command() {
    let out = stockflow(&["loops", "supply_demand.sdm"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = text(&out.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("B : ")).count(), 2);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("? : ")).count(), 1);
    assert!(stdout.lines().all(|l| l.ends_with("(delayed: yes)")));
    let acyclic = stockflow(&["loops", repo("tests/fixtures/acyclic.sdm").to_str().unwrap()]);
    assert_eq!(text(&acyclic.stdout), "no feedback loops\n");
    let growth = stockflow(&["loops", repo("tests/fixtures/growth.sdm").to_str().unwrap()]);
    assert_eq!(text(&growth.stdout), "R : Population -> Population (delayed: yes)\n");
    assert_eq!(stockflow(&["loops", repo("tests/fixtures/broken_units.sdm").to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn loops_edge_list_export() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("edges.txt");
    assert_eq!(stockflow(&["loops", "supply_demand.sdm", "--edges", file.to_str().unwrap()]).status.code(), Some(0));
    let edges = std::fs::read_to_string(file).unwrap();
    assert!(edges.lines().any(|l| l == "Price_Change -> Price [integration, +]"));
    assert!(edges.lines().any(|l| l == "Price -> Price_Change [instantaneous, 0]"));
}

#[test]
fn equilibrium_command() {
    let eq = |shift: &str| stockflow(&["equilibrium", "supply_demand.sdm", "--shift", shift]);
    assert_eq!(text(&eq("10").stdout), "P=27.5000 Q=55.0000\n");
    assert_eq!(text(&eq("0").stdout), "P=25.0000 Q=50.0000\n");
    assert_eq!(text(&eq("-10").stdout), "P=22.5000 Q=45.0000\n");
    let none = eq("-200");
    assert_eq!(none.status.code(), Some(2));
    assert!(text(&none.stderr).contains("never cross"));
    let named = stockflow(&["equilibrium", "supply_demand.sdm", "--supply", "Supply_Schedule", "--demand", "Demand_Schedule"]);
    assert_eq!(text(&named.stdout), "P=25.0000 Q=50.0000\n");
    let growth = stockflow(&["equilibrium", repo("tests/fixtures/growth.sdm").to_str().unwrap()]);
    assert_eq!(growth.status.code(), Some(1));
}

#[test]
fn in_process_entry_point() {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let path = repo("models/supply_demand.sdm");
    let status = stockflow_cli::run_cli(["stockflow", "equilibrium", path.to_str().unwrap(), "--shift", "10"], &mut out, &mut err);
    assert_eq!(status, stockflow_cli::ExitStatus::Success);
    assert_eq!(text(&out), "P=27.5000 Q=55.0000\n");
}
