use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;

use tempfile::TempDir;

fn run(dir: &Path, sub: &str, config: &str, extra: &[&str]) -> (i32, PathBuf) {
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, config).unwrap();
    let out = dir.join("out");
    let status = Command::new(env!("CARGO_BIN_EXE_dbm-lab"))
        .arg(sub)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(extra)
        .output()
        .unwrap();
    (status.status.code().unwrap(), out)
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    (header, lines.map(|l| l.split(',').map(String::from).collect()).collect())
}

fn summary_value(out: &Path, name: &str) -> f64 {
    let (_, rows) = read_csv(&out.join("summary.csv"));
    rows.iter().find(|r| r[0] == name).unwrap_or_else(|| panic!("no {name}"))[1].parse().unwrap()
}

const UNIFORM: &str = "[measure]\nkind = \"uniform\"\nsupport = [[-1.0, 1.0]]\n";

#[test]
fn semicircle_density_matches_closed_form() {
    let dir = TempDir::new().unwrap();
    let cfg = "n = 1\nt = 1.0\n[measure]\nkind = \"semicircle\"\nparams = { variance = 1.0 }\n";
    let (code, out) = run(dir.path(), "density", cfg, &[]);
    assert_eq!(code, 0);
    let (header, rows) = read_csv(&out.join("density.csv"));
    assert_eq!(header, ["t", "x", "psi"]);
    assert_eq!(rows.len(), 201);
    for r in rows {
        let x: f64 = r[1].parse().unwrap();
        let psi: f64 = r[2].parse().unwrap();
        let exact = if x * x < 8.0 { (8.0 - x * x).sqrt() / (4.0 * PI) } else { 0.0 };
        assert!((psi - exact).abs() < 1e-8, "x = {x}: {psi} vs {exact}");
    }
}

#[test]
fn critical_times() {
    let dir = TempDir::new().unwrap();
    let power = "n = 1\nt = 0.5\n[measure]\nkind = \"power\"\nparams = { exponent = 2.0, center = 0.0 }\nsupport = [[-1.0, 1.0]]\n";
    let (code, out) = run(dir.path(), "density", power, &[]);
    assert_eq!(code, 0);
    assert!((summary_value(&out, "t_cr") - 1.0 / 3.0).abs() < 1e-8);
    let (code, out) = run(dir.path(), "density", &format!("n = 1\nt = 0.5\n{UNIFORM}"), &[]);
    assert_eq!(code, 0);
    assert_eq!(summary_value(&out, "t_cr"), 0.0);
}

#[test]
fn kernel_grid_and_metadata() {
    let dir = TempDir::new().unwrap();
    let cfg = format!("n = 20\nt = 0.5\n{UNIFORM}[window]\nextent = 1.0\nstep = 0.5\n");
    let (code, out) = run(dir.path(), "kernel", &cfg, &[]);
    assert_eq!(code, 0);
    let (header, rows) = read_csv(&out.join("kernel.csv"));
    assert_eq!(header, ["n", "t", "u", "v", "value", "a_n", "i_n", "sine", "residual"]);
    assert_eq!(rows.len(), 25);
    let diag: Vec<_> = rows.iter().filter(|r| r[2] == r[3]).collect();
    assert_eq!(diag.len(), 5);
    for r in diag {
        let v: f64 = r[4].parse().unwrap();
        assert!(v > 0.5 && v < 1.5, "diagonal {v}");
    }
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("kernel_meta.json")).unwrap()).unwrap();
    for key in ["n", "t", "x_star", "x_star_t", "c_t", "x0", "quadrature_m", "eps_split_applied"] {
        assert!(meta[0].get(key).is_some(), "{key}");
    }
    assert!(summary_value(&out, "sup_residual[n=20;t=0.5000]") > 0.0);
}

#[test]
fn validation_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let (code, _) = run(dir.path(), "sweep", &format!("n_grid = [10]\nt_grid = []\n{UNIFORM}"), &[]);
    assert_eq!(code, 2);
    let (code, _) = run(dir.path(), "kernel", &format!("n = 10\nt = 0.5\nbogus = 1\n{UNIFORM}"), &[]);
    assert_eq!(code, 2);
    let (code, _) = run(dir.path(), "gap", &format!("n = 10\nt = 0.5\n{UNIFORM}"), &[]);
    assert_eq!(code, 2);
    let (code, _) = run(dir.path(), "kernel", &format!("n = 10\nt = 0.5\n{UNIFORM}"), &["--threads", "0"]);
    assert_eq!(code, 2);
}

#[test]
fn non_convergence_exits_with_three() {
    let dir = TempDir::new().unwrap();
    // Two-node panels on long segments cannot reproduce the doubled-node check.
    let cfg = format!("n = 20\nt = 0.5\n{UNIFORM}[quadrature]\nroute = \"contour\"\npanel_nodes = 2\nmax_segment = 40.0\nverify = true\n");
    let (code, _) = run(dir.path(), "kernel", &cfg, &[]);
    assert_eq!(code, 3);
}

#[test]
fn sweep_and_gap_outputs() {
    let dir = TempDir::new().unwrap();
    let cfg = format!(
        "n_grid = [8, 12]\nt_scaling = {{ prefactor = 1.0, n_exponent = -1.0, log_exponent = 2.0 }}\n{UNIFORM}\
         [window]\nextent = 1.0\nstep = 0.5\n[gap]\nhalf_width = 0.05\n[monte_carlo]\nsamples = 500\n"
    );
    let (code, out) = run(dir.path(), "sweep", &cfg, &[]);
    assert_eq!(code, 0);
    let (header, rows) = read_csv(&out.join("sweep.csv"));
    assert_eq!(header, ["n", "t", "D", "D_rounded", "gap_probability", "gap_rounded"]);
    assert_eq!(rows.len(), 2);
    let t: f64 = rows[0][1].parse().unwrap();
    assert!((t - 8f64.ln().powi(2) / 8.0).abs() < 1e-15);

    let (code, out) = run(dir.path(), "gap", &cfg, &[]);
    assert_eq!(code, 0);
    let records: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("gap.json")).unwrap()).unwrap();
    for r in records.as_array().unwrap() {
        for key in ["interval", "m_final", "raw_det", "probability"] {
            assert!(r.get(key).is_some(), "{key}");
        }
        let exact = r["raw_det"].as_f64().unwrap();
        let mc = &r["monte_carlo"];
        let (f, se) = (mc["frequency"].as_f64().unwrap(), mc["stderr"].as_f64().unwrap());
        assert!((f - exact).abs() <= 4.0 * se.max(1e-3), "{f} +- {se} vs {exact}");
    }
}

#[test]
fn paths_start_at_the_configuration() {
    let dir = TempDir::new().unwrap();
    let cfg = "n = 5\nt_grid = [0.0, 0.5, 1.0]\n[measure]\nkind = \"uniform\"\nsupport = [[-1.0, 1.0]]\n\
               [generator]\nkind = \"equispaced\"\na = -1.0\nb = 1.0\n";
    let (code, out) = run(dir.path(), "paths", cfg, &[]);
    assert_eq!(code, 0);
    let (header, rows) = read_csv(&out.join("paths_n5_s0.csv"));
    assert_eq!(header, ["t", "lambda_1", "lambda_2", "lambda_3", "lambda_4", "lambda_5"]);
    assert_eq!(rows.len(), 3);
    let first: Vec<f64> = rows[0][1..].iter().map(|s| s.parse().unwrap()).collect();
    assert_eq!(first, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    // Kernels need t > 0.
    let (code, _) = run(dir.path(), "kernel", cfg, &[]);
    assert_eq!(code, 2);
    let cfg = cfg.replace("t_grid = [0.0, 0.5, 1.0]", "t = 1.0");
    let (code, out) = run(dir.path(), "paths", &cfg, &[]);
    assert_eq!(code, 0);
    let (_, rows) = read_csv(&out.join("paths_n5_s0.csv"));
    assert_eq!(rows.len(), 101);
    let first: Vec<f64> = rows[0][1..].iter().map(|s| s.parse().unwrap()).collect();
    assert_eq!(first, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
}

#[test]
fn reruns_are_bit_identical_and_config_mirror_round_trips() {
    let dir = TempDir::new().unwrap();
    let cfg = format!("n = 6\nt = 0.4\nseed = 9\n{UNIFORM}[monte_carlo]\nsamples = 200\n[gap]\nhalf_width = 0.1\n");
    let (code, out) = run(dir.path(), "gap", &cfg, &["--seed", "11", "--threads", "2"]);
    assert_eq!(code, 0);
    let first = std::fs::read(out.join("gap.csv")).unwrap();
    let mirror = std::fs::read_to_string(out.join("config.json")).unwrap();
    assert!(mirror.contains("\"seed\": 11"));

    let (code, out) = run(dir.path(), "gap", &cfg, &["--seed", "11"]);
    assert_eq!(code, 0);
    assert_eq!(std::fs::read(out.join("gap.csv")).unwrap(), first);

    let json = dir.path().join("mirror.json");
    std::fs::write(&json, &mirror).unwrap();
    let out2 = dir.path().join("again");
    let status = Command::new(env!("CARGO_BIN_EXE_dbm-lab"))
        .args(["gap", "--config"])
        .arg(&json)
        .arg("--out")
        .arg(&out2)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(std::fs::read(out2.join("gap.csv")).unwrap(), first);
    let again = std::fs::read_to_string(out2.join("config.json")).unwrap();
    assert_eq!(again.replace(out2.to_str().unwrap(), "OUT"), mirror.replace(out.to_str().unwrap(), "OUT"));
}
