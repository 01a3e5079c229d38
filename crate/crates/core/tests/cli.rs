use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use spectral_consistency::pose_graph::{save_g2o, save_tum, PoseGraph, PoseNode, Stamped, Trajectory};
use spectral_consistency::se3::Pose;

fn specsim(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_specsim"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Twelve nodes on a 1 m grid row.
fn row_graph(dir: &Path) {
    let nodes = (0..12)
        .map(|i| PoseNode::new(i, 0, 0, i as f64, Pose::from_translation(i as f64, 0.0, 0.0)))
        .collect();
    save_g2o(&PoseGraph::from_parts(nodes, vec![]).unwrap(), dir.join("row.g2o")).unwrap();
}

#[test]
fn eval_prints_rmse() {
    let dir = tempfile::tempdir().unwrap();
    let traj = |dy: f64| {
        Trajectory::new((0..10).map(|i| Stamped::new(i as f64, Pose::from_translation(i as f64, dy, 0.0))).collect()).unwrap()
    };
    save_tum(&traj(0.0), dir.path().join("gt.tum")).unwrap();
    save_tum(&traj(0.5), dir.path().join("est.tum")).unwrap();

    let raw = stdout(&specsim(&["eval", "est.tum", "gt.tum"], dir.path()));
    assert!(raw.starts_with("rmse 0.500000 "), "{raw}");
    assert!(raw.trim_end().ends_with("pairs 10"));
    let aligned = stdout(&specsim(&["eval", "est.tum", "gt.tum", "--align"], dir.path()));
    assert!(aligned.starts_with("rmse 0.000000 "), "{aligned}");
}

#[test]
fn spectrum_writes_weights_and_eigenvalues() {
    let dir = tempfile::tempdir().unwrap();
    row_graph(dir.path());
    let out = stdout(&specsim(&["spectrum", "row.g2o", "--radius", "1.5", "--out", "spec"], dir.path()));
    assert!(out.starts_with("12 nodes"), "{out}");

    let eig = fs::read_to_string(dir.path().join("spec/eigenvalues.csv")).unwrap();
    let values: Vec<f64> = eig.lines().skip(1).map(|l| l.split_once(',').unwrap().1.parse().unwrap()).collect();
    assert_eq!(values.len(), 12);
    assert!(values[0].abs() < 1e-10 && values[1] > 1e-6);
    assert!(values.windows(2).all(|w| w[0] <= w[1]));
    let weights = fs::read_to_string(dir.path().join("spec/weights.csv")).unwrap();
    assert_eq!(weights.lines().count(), 13);
}

#[test]
fn reduce_keeps_the_requested_count() {
    let dir = tempfile::tempdir().unwrap();
    row_graph(dir.path());
    let out = stdout(&specsim(&["reduce", "row.g2o", "--keep", "5", "--radius", "1.5"], dir.path()));
    assert!(out.starts_with("kept 5 of 12 nodes:"), "{out}");
    let weights = fs::read_to_string(dir.path().join("out/reduced_weights.csv")).unwrap();
    assert_eq!(weights.lines().count(), 6);
}

#[test]
fn run_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("s.toml"),
        "seed = 3\nduration = 60.0\n[[robots]]\npath = { kind = \"circle\", center = [0.0, 0.0], radius = 5.0, speed = 0.5 }\n",
    )
    .unwrap();
    let out = stdout(&specsim(&["run", "s.toml", "--out", "r"], dir.path()));
    assert!(out.contains("robot 0: onboard"), "{out}");
    assert!(dir.path().join("r/report.json").is_file());
}

#[test]
fn errors_exit_nonzero_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = specsim(&["eval", "missing.tum", "gt.tum"], dir.path());
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error: "), "{err}");
    assert_eq!(err.lines().count(), 1);

    fs::write(dir.path().join("bad.toml"), "duration = -1.0\n").unwrap();
    assert!(!specsim(&["run", "bad.toml"], dir.path()).status.success());
}
