use std::path::Path;
use std::process::{Command, Output};

fn bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mlp-bench")).args(args).output().unwrap()
}

fn csv_run(dir: &Path, workers: &str) -> Vec<u8> {
    let path = dir.join(format!("w{workers}.csv"));
    let out = bench(&[
        "--example", "heat-system", "--d", "10", "--n", "1..3", "--runs", "3", "--seed", "4", "--workers", workers,
        "--no-timing", "--quiet", "--csv", path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    std::fs::read(path).unwrap()
}

#[test]
fn csv_is_byte_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let one = csv_run(dir.path(), "1");
    let four = csv_run(dir.path(), "4");
    assert_eq!(one, four);
    let text = String::from_utf8(one).unwrap();
    assert!(text.starts_with("d,n,value_1,value_2,reference_1,reference_2,provenance"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn unknown_example_is_an_error() {
    let out = bench(&["--example", "burgers"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("burgers"));
}

#[test]
fn missing_fixture_fails_the_cell() {
    let out = bench(&["--example", "allen-cahn", "--d", "7", "--n", "1", "--runs", "1", "--quiet"]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn table_and_plot_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("conv.svg");
    let out = bench(&[
        "--example", "semilinear-bs", "--d", "10", "--n", "1..2", "--runs", "2", "--workers", "2",
        "--plot", svg.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("workers: 2"));
    assert!(stdout.contains("11.98736"));
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
    assert!(dir.path().join("conv.dat").exists());
}
