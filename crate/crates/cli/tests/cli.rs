use std::path::Path;
use std::process::{Command, Output};

fn sgdd(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sgdd"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("run sgdd")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn solve_default_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", "");
    let out = sgdd(&["solve", &cfg, "--out", "res"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let res = dir.path().join("res");
    for f in ["solution.vtk", "moments.csv", "report.json"] {
        assert!(res.join(f).is_file(), "{f}");
    }
    let moments = std::fs::read_to_string(res.join("moments.csv")).unwrap();
    let config = sgdd::io::read_config_line(&moments).unwrap();
    assert_eq!(config["sigma"], 0.3);
    assert_eq!(moments.lines().nth(1), Some("x,y,mean,std"));
    assert_eq!(moments.lines().count(), 2 + 33 * 33);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(res.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["converged"], true);
    assert_eq!(report["config"]["p_out"], 3);
    let vtk = std::fs::read_to_string(res.join("solution.vtk")).unwrap();
    assert!(vtk.starts_with("# vtk DataFile Version"));
    assert!(vtk.contains("SCALARS std"));
}

#[test]
fn invalid_sigma_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "sigma = -1.0\n");
    let out = sgdd(&["solve", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("sigma"), "{}", stderr(&out));
    let cfg = write(dir.path(), "typo.toml", "sigmaa = 0.1\n");
    let out = sgdd(&["solve", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("sigmaa"));
    let out = sgdd(&["solve", "missing.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = sgdd(&["frobnicate"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn nonlinear_default_picard_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "nl.toml",
        "problem = \"nonlinear-stochastic\"\n",
    );
    let out = sgdd(
        &["solve", &cfg, "--out", "nl", "--threads", "2"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("nl/report.json")).unwrap())
            .unwrap();
    let picard = report["report"]["picard_iterations"].as_u64().unwrap();
    assert!((1..=10).contains(&picard), "{picard}");
}

#[test]
fn unconverged_solve_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "tight.toml",
        "preconditioner = \"ras1\"\nmesh_n = 16\n[tolerances]\nouter = 1e-20\ncoarse = 1e-5\npicard = 1e-6\n",
    );
    let out = sgdd(&["solve", &cfg, "--out", "t"], dir.path());
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let base = "mesh_n = 12\nM = 2\nmcs_samples = 400\n";
    let zero = write(dir.path(), "zero.toml", &format!("{base}sigma = 0.0\n"));
    let out = sgdd(&["verify", &zero, "--out", "z"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("z/verify.csv")).unwrap();
    assert!(csv.starts_with("# config: "));
    assert!(dir.path().join("z/mcs_probes.csv").is_file());

    let trunc = write(
        dir.path(),
        "trunc.toml",
        &format!("{base}sigma = 0.3\np_out = 0\n"),
    );
    let out = sgdd(&["verify", &trunc, "--out", "t"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("probe"), "{}", stderr(&out));

    let det = write(
        dir.path(),
        "det.toml",
        "problem = \"linear-deterministic\"\n",
    );
    assert_eq!(sgdd(&["verify", &det], dir.path()).status.code(), Some(2));
}

#[test]
fn study_outputs_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let ratio = write(
        dir.path(),
        "ratio.toml",
        "study = \"coarse-ratio\"\nsweep = [[4], [16], [64]]\npreconditioners = [\"2glu\"]\n\
         output = \"ratio\"\n[base]\nmesh_n = 24\nM = 2\np_out = 2\n",
    );
    let out = sgdd(&["study", &ratio], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("ratio/coarse-ratio.csv")).unwrap();
    let header: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    let col = header
        .iter()
        .position(|h| *h == "outer_iterations")
        .unwrap();
    let iters: Vec<usize> = csv
        .lines()
        .skip(2)
        .map(|l| l.split(',').nth(col).unwrap().parse().unwrap())
        .collect();
    assert_eq!(iters.len(), 3);
    assert!(iters.windows(2).all(|w| w[0] <= w[1]), "{iters:?}");
    assert!(dir.path().join("ratio/manifest.json").is_file());

    let cond = write(
        dir.path(),
        "cond.toml",
        "study = \"cond-ratio\"\nsweep = [[1], [2], [3]]\n[base]\nmesh_n = 4\n",
    );
    let out = sgdd(&["study", &cond, "--out", "cond"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("cond/cond-ratio.csv")).unwrap();
    let ratios: Vec<f64> = csv
        .lines()
        .skip(2)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert!(ratios.windows(2).all(|w| w[0] < w[1]), "{ratios:?}");

    let empty = write(dir.path(), "empty.toml", "study = \"strong\"\nsweep = []\n");
    let out = sgdd(&["study", &empty], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("sweep"));
}
