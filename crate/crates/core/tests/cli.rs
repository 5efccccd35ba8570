use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use factor_paradox::datagen::generate_sample;
use factor_paradox::efa::match_factors;
use factor_paradox::model::PopulationModel;
use nalgebra::DMatrix;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_factor-paradox"));
    c.env_remove("FACTOR_PARADOX_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn small_grid<'a>(out: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![
        "simulate",
        "--out",
        out,
        "--reps",
        "4",
        "--sample-sizes",
        "150,300",
        "--loadings",
        "0.6",
        "--factor-counts",
        "3",
    ];
    v.extend_from_slice(extra);
    v
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn verify_default_models_succeed() {
    let out = run(&["verify"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("eq8 expansion (omega retained)"));
    assert!(text.contains("random-10v-2f"));
    assert!(!text.contains("FAIL"));
}

#[test]
fn verify_perturbation_fails() {
    let out = run(&["verify", "--perturb"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn malformed_config_is_usage_error() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "this line has no separator\n").unwrap();
    assert_eq!(code(&run(&["verify", "--config", cfg.to_str().unwrap()])), 2);
    fs::write(&cfg, "sim.unknown=3\n").unwrap();
    assert_eq!(code(&run(&["verify", "--config", cfg.to_str().unwrap()])), 2);
    fs::write(&cfg, "verify.cases=lots\n").unwrap();
    assert_eq!(code(&run(&["verify", "--config", cfg.to_str().unwrap()])), 2);
}

#[test]
fn usage_errors() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(code(&run(&["simulate", "--out", out, "--reps", "0"])), 2);
    assert_eq!(code(&run(&["simulate", "--out", out, "--preset", "huge"])), 2);
    assert_eq!(code(&run(&["simulate", "--out", out, "--strategy", "guess"])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);

    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let nested = blocker.join("sub");
    assert_eq!(code(&run(&small_grid(nested.to_str().unwrap(), &[]))), 2);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn simulate_is_deterministic_and_report_reproduces_aggregates() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let out = run(&small_grid(a.to_str().unwrap(), &["--seed", "7"]));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(&small_grid(b.to_str().unwrap(), &["--seed", "7", "--threads", "3"]));
    assert_eq!(code(&out), 0);
    for f in ["runs.csv", "table2.csv", "figure2.csv", "histogram.csv", "tails.csv", "summary.txt"] {
        assert_eq!(read(&a, f), read(&b, f), "{f}");
    }

    let runs = read(&a, "runs.csv");
    let text = String::from_utf8_lossy(&runs);
    assert!(text.starts_with("n,loading,q,rep,seed,converged,heywood_count,eig1,eq12_r_f1"));
    assert_eq!(text.lines().count(), 1 + 2 * 4);

    let rep = dir.path().join("rep");
    let runs_path = a.join("runs.csv");
    let out = run(&["report", "--runs", runs_path.to_str().unwrap(), "--out", rep.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["table2.csv", "figure2.csv", "histogram.csv", "tails.csv", "summary.txt"] {
        assert_eq!(read(&a, f), read(&rep, f), "{f}");
    }
    let svg = String::from_utf8(read(&rep, "rmsc.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(String::from_utf8(read(&rep, "histogram_q3.svg")).unwrap().contains("<rect"));
    assert!(!read(&rep, "histogram.txt").is_empty());
    assert!(!read(&rep, "rmsc.txt").is_empty());

    // A second report over the same input is byte-identical.
    let rep2 = dir.path().join("rep2");
    assert_eq!(code(&run(&["report", "--runs", runs_path.to_str().unwrap(), "--out", rep2.to_str().unwrap()])), 0);
    for f in ["table2.csv", "rmsc.svg", "histogram_q3.svg", "histogram.txt", "rmsc.txt"] {
        assert_eq!(read(&rep, f), read(&rep2, f), "{f}");
    }
}

#[test]
fn seed_sources_and_precedence() {
    let dir = TempDir::new().unwrap();
    let from_env = dir.path().join("env");
    let from_flag = dir.path().join("flag");
    let from_cfg = dir.path().join("cfg");
    let default = dir.path().join("default");

    let out = bin()
        .args(small_grid(from_env.to_str().unwrap(), &[]))
        .env("FACTOR_PARADOX_SEED", "11")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert_eq!(code(&run(&small_grid(from_flag.to_str().unwrap(), &["--seed", "11"]))), 0);
    assert_eq!(code(&run(&small_grid(default.to_str().unwrap(), &[]))), 0);
    assert_eq!(read(&from_env, "runs.csv"), read(&from_flag, "runs.csv"));
    assert_ne!(read(&from_env, "runs.csv"), read(&default, "runs.csv"));

    // Config supplies the seed and the replication count; the flag wins on reps.
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, format!("seed=11\nsim.reps=2\noutput.dir={}\n", from_cfg.display())).unwrap();
    let mut args = small_grid("unused", &["--config", cfg.to_str().unwrap()]);
    args.drain(1..3);
    let out = bin().args(&args).env("FACTOR_PARADOX_SEED", "99").output().unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read(&from_cfg, "runs.csv"), read(&from_flag, "runs.csv"));

    assert_eq!(code(&bin().args(small_grid(from_env.to_str().unwrap(), &[])).env("FACTOR_PARADOX_SEED", "x").output().unwrap()), 2);
}

#[test]
fn report_rejects_missing_or_empty_runs() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let missing = dir.path().join("nope.csv");
    assert_eq!(code(&run(&["report", "--out", out, "--runs", missing.to_str().unwrap()])), 2);

    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    assert_eq!(code(&run(&["report", "--out", out, "--runs", empty.to_str().unwrap()])), 2);

    let header_only = dir.path().join("header.csv");
    fs::write(
        &header_only,
        "n,loading,q,rep,seed,converged,heywood_count,eig1,eq12_r_f1,direct_r_f1,eig1_omega,retries\n",
    )
    .unwrap();
    assert_eq!(code(&run(&["report", "--out", out, "--runs", header_only.to_str().unwrap()])), 2);

    let garbage = dir.path().join("garbage.csv");
    fs::write(&garbage, "a,b\n1,2\n").unwrap();
    assert_eq!(code(&run(&["report", "--out", out, "--runs", garbage.to_str().unwrap()])), 2);
}

fn write_sample(path: &Path, model: &PopulationModel, n: usize, seed: u64) {
    let s = generate_sample(model, n, seed).unwrap();
    let mut f = fs::File::create(path).unwrap();
    s.write_csv(&mut f).unwrap();
}

fn read_matrix(path: &Path) -> DMatrix<f64> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let rows: Vec<Vec<f64>> = rdr
        .records()
        .map(|r| r.unwrap().iter().skip(1).map(|v| v.parse().unwrap()).collect())
        .collect();
    DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
}

#[test]
fn analyze_recovers_loading_pattern() {
    let dir = TempDir::new().unwrap();
    let model = PopulationModel::simple_structure(3, 0.40, 5).unwrap();
    let data = dir.path().join("sample.csv");
    write_sample(&data, &model, 900, 5);
    let out_dir = dir.path().join("fit");
    let out = run(&["analyze", "--input", data.to_str().unwrap(), "--factors", "3", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let lambda_hat = read_matrix(&out_dir.join("loadings.csv"));
    assert_eq!(lambda_hat.shape(), (15, 3));
    let matching = match_factors(&lambda_hat, model.lambda()).unwrap();
    let aligned = matching.apply(&lambda_hat);
    let err = (aligned - model.lambda()).abs().max();
    assert!(err < 0.1, "max loading error {err}");

    let eig = read_matrix(&out_dir.join("residual_eigenvalues.csv"));
    assert_eq!(eig.nrows(), 15);
    assert!(eig.sum().abs() < 1e-10);
    let n_load = read_matrix(&out_dir.join("residual_loadings.csv"));
    assert_eq!(n_load.nrows(), 15);
    let psi = read_matrix(&out_dir.join("uniquenesses.csv"));
    assert!(psi.column(0).iter().all(|&v| v > 0.0 && v <= 1.0));
    let scores = read_matrix(&out_dir.join("component_scores.csv"));
    assert_eq!((scores.nrows(), scores.ncols()), (900, n_load.ncols()));
}

#[test]
fn analyze_error_paths() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("fit");
    let out_s = out_dir.to_str().unwrap();

    let constant = dir.path().join("constant.csv");
    let mut text = String::from("a,b,c,d,e,f\n");
    for i in 0..50 {
        let v = i as f64;
        text.push_str(&format!("{},{},{},{},{},{}\n", v.sin(), v.cos(), (2.0 * v).sin(), 3.0, (0.5 * v).cos(), (1.7 * v).sin()));
    }
    fs::write(&constant, text).unwrap();
    assert_eq!(code(&run(&["analyze", "--input", constant.to_str().unwrap(), "--factors", "1", "--out", out_s])), 1);

    let malformed = dir.path().join("bad.csv");
    fs::write(&malformed, "a,b,c\n1,2,3\n4,five,6\n7,8,9\n1,1,2\n").unwrap();
    assert_eq!(code(&run(&["analyze", "--input", malformed.to_str().unwrap(), "--factors", "1", "--out", out_s])), 2);

    let ragged = dir.path().join("ragged.csv");
    fs::write(&ragged, "a,b,c\n1,2,3\n4,5\n").unwrap();
    assert_eq!(code(&run(&["analyze", "--input", ragged.to_str().unwrap(), "--factors", "1", "--out", out_s])), 2);

    let missing = dir.path().join("missing.csv");
    assert_eq!(code(&run(&["analyze", "--input", missing.to_str().unwrap(), "--factors", "1", "--out", out_s])), 2);
    assert_eq!(code(&run(&["analyze", "--factors", "1", "--out", out_s])), 2);

    let model = PopulationModel::simple_structure(3, 0.6, 5).unwrap();
    let data = dir.path().join("sample.csv");
    write_sample(&data, &model, 200, 2);
    assert_eq!(code(&run(&["analyze", "--input", data.to_str().unwrap(), "--factors", "15", "--out", out_s])), 2);
}
