//! End-to-end runs of the `meanfield` binary: byte-identical output for a fixed
//! seed, exit codes, and file round trips.

use std::path::Path;
use std::process::{Command, Output};

use meanfield_cli::libsvm::read_libsvm;

fn meanfield(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_meanfield")).args(args).output().expect("binary runs")
}

fn stdout(args: &[&str]) -> Vec<u8> {
    let out = meanfield(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

#[test]
fn output_is_byte_identical_for_a_fixed_seed() {
    for args in [
        &["--seed", "4", "select", "gmm", "--n", "80", "--candidates", "1,2,3", "--evidence-samples", "2000"][..],
        &["--seed", "4", "fit", "probit", "--n", "120", "--p", "4", "--factorization", "factorized"][..],
        &["--seed", "4", "convergence", "normal", "--n", "20", "--iterations", "15"][..],
        &["--seed", "4", "--format", "json", "evidence", "sbm", "--n", "8", "--k", "2", "--samples", "3000"][..],
        &[
            "--seed",
            "4",
            "predict",
            "--n",
            "400",
            "--p",
            "8",
            "--train-size",
            "200",
            "--replicates",
            "3",
            "--max-size",
            "6",
        ][..],
    ] {
        let first = stdout(args);
        assert!(!first.is_empty());
        assert_eq!(first, stdout(args), "{args:?} is not reproducible");
    }
}

#[test]
fn different_seeds_give_different_data() {
    assert_ne!(
        stdout(&["--seed", "1", "gen", "normal", "--n", "5"]),
        stdout(&["--seed", "2", "gen", "normal", "--n", "5"])
    );
}

#[test]
fn csv_has_a_header_and_lf_line_endings() {
    let text = String::from_utf8(stdout(&["fit", "normal", "--n", "12"])).unwrap();
    assert!(text.starts_with("model,"));
    assert!(!text.contains('\r'));
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn exit_codes_distinguish_usage_numeric_and_io_errors() {
    let usage = meanfield(&["fit", "normal", "--n", "1"]);
    assert_eq!(usage.status.code(), Some(1), "{}", String::from_utf8_lossy(&usage.stderr));
    assert_eq!(meanfield(&["fit", "unknown-family"]).status.code(), Some(1));
    assert_eq!(meanfield(&["gaps", "sbm"]).status.code(), Some(1));
    let missing = meanfield(&["fit", "normal", "--input", "/nonexistent/data.csv"]);
    assert_eq!(missing.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error:"));
    assert_eq!(meanfield(&["--help"]).status.code(), Some(0));
}

#[test]
fn generated_probit_data_round_trips_through_libsvm() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("probit.svm");
    let path_str = path.to_str().unwrap();
    stdout(&["--seed", "9", "--out", path_str, "gen", "probit", "--n", "60", "--p", "5"]);
    let data = read_libsvm(Path::new(&path), Some(5)).unwrap();
    assert_eq!(data.x.shape(), (60, 5));
    assert!(data.y.iter().all(|&v| v <= 1));
    let from_file = stdout(&["--seed", "9", "fit", "probit", "--input", path_str, "--width", "5"]);
    let simulated = stdout(&["--seed", "9", "fit", "probit", "--n", "60", "--p", "5"]);
    assert_eq!(from_file, simulated);
}

#[test]
fn scalar_and_graph_files_are_read_back() {
    let dir = tempfile::tempdir().unwrap();
    for (family, extra) in [("gmm", &["--n", "50"][..]), ("sbm", &["--n", "10", "--true-k", "2"][..])] {
        let path = dir.path().join(format!("{family}.csv"));
        let path_str = path.to_str().unwrap();
        let mut args = vec!["--seed", "5", "--out", path_str, "gen", family];
        args.extend_from_slice(extra);
        stdout(&args);
        let mut fit = vec!["--seed", "5", "fit", family, "--k", "2"];
        fit.extend_from_slice(extra);
        let simulated = stdout(&fit);
        let from_file = stdout(&["--seed", "5", "fit", family, "--k", "2", "--input", path_str]);
        assert_eq!(from_file, simulated, "{family} file input differs from simulation");
    }
}
