use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const SMALL: &str = "[domain]\nmx = 2\nny = 2\n[solver]\ndt = 0.01\n";

fn kickflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kickflow"))
        .args(args)
        .env("KICKFLOW_LOG", "error")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn out_arg(dir: &Path, name: &str) -> (PathBuf, String) {
    let p = dir.join(name);
    let s = p.to_string_lossy().into_owned();
    (p, s)
}

fn error_record(o: &Output) -> Value {
    let text = String::from_utf8_lossy(&o.stderr);
    let line = text.lines().last().expect("stderr has a record");
    serde_json::from_str(line).expect("error record is json")
}

fn sha256_of(path: &Path) -> String {
    use std::fmt::Write as _;
    let digest = <sha2::Sha256 as sha2::Digest>::digest(fs::read(path).unwrap());
    digest.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[test]
fn zero_noise_simulation_decays() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &format!("{SMALL}[noise]\nB0 = 0.0\n"));
    let (out, outs) = out_arg(tmp.path(), "run");
    let o = kickflow(&[
        "simulate", "--config", &cfg, "--out", &outs, "--u0", "random:5", "--kicks", "6",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("simulate.csv")).unwrap();
    let norms: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(norms.len(), 7);
    assert!((norms[0] - 1.0).abs() < 1e-12);
    assert!(norms.windows(2).all(|w| w[1] < w[0]));
    assert!(out.join("u_final.field").exists());
}

#[test]
fn manifest_hashes_every_output() {
    let tmp = TempDir::new().unwrap();
    let (out, outs) = out_arg(tmp.path(), "spec");
    let o = kickflow(&["spectrum", "--out", &outs, "--seed", "3"]);
    assert!(o.status.success());
    let m: Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "spectrum");
    assert_eq!(m["config"]["seed"], 3);
    assert_eq!(m["status"], "completed");
    let files = m["outputs"].as_array().unwrap();
    assert_eq!(files.len(), 1);
    for f in files {
        let name = f["file"].as_str().unwrap();
        assert_eq!(f["sha256"].as_str().unwrap(), sha256_of(&out.join(name)));
    }
    let table = fs::read_to_string(out.join("spectrum.csv")).unwrap();
    assert_eq!(table.lines().count(), 56);
    assert!(table.starts_with("k,m,n,alpha,psi1,b_0,b_1\n"));
}

#[test]
fn configuration_errors_exit_with_code_2() {
    let tmp = TempDir::new().unwrap();
    let (_, outs) = out_arg(tmp.path(), "x");
    for (i, text) in [
        "[solver]\ndt = 0.3\n",
        "[domain]\nlenght = 4.0\n",
        "[noise]\nB0 = -1.0\n",
        "experiment = \"mix\"\n",
    ]
    .iter()
    .enumerate()
    {
        let cfg = write_config(tmp.path(), &format!("bad{i}.toml"), text);
        let o = kickflow(&["simulate", "--config", &cfg, "--out", &outs]);
        assert_eq!(o.status.code(), Some(2), "{text}");
        let rec = error_record(&o);
        assert_eq!(rec["error"], "config");
        assert_eq!(rec["exit_code"], 2);
    }
    let o = kickflow(&["simulate", "--out", &outs, "--u0", "random:x"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn same_seed_gives_identical_outputs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SMALL);
    let run = |name: &str, seed: &str| {
        let (out, outs) = out_arg(tmp.path(), name);
        let o = kickflow(&[
            "simulate", "--config", &cfg, "--out", &outs, "--seed", seed, "--kicks", "4",
        ]);
        assert!(o.status.success());
        fs::read(out.join("simulate.csv")).unwrap()
    };
    assert_eq!(run("a", "11"), run("b", "11"));
    assert_ne!(run("a", "11"), run("c", "12"));
}

#[test]
fn blow_up_exits_with_code_3() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "[solver]\ndt = 0.1\n");
    let mut field = String::from("KICKFLOW-FIELD v1,K=55\n");
    for k in 0..55 {
        field.push_str(if k < 8 { "1e4\n" } else { "0\n" });
    }
    let u0 = tmp.path().join("big.field");
    fs::write(&u0, field).unwrap();
    let (out, outs) = out_arg(tmp.path(), "x");
    let o = kickflow(&[
        "simulate",
        "--config",
        &cfg,
        "--out",
        &outs,
        "--u0",
        u0.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_record(&o)["error"], "diverged");
    let m: Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["status"], "failed: diverged");
}

#[test]
fn linearize_reports_operators() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SMALL);
    let (out, outs) = out_arg(tmp.path(), "lin");
    let o = kickflow(&["linearize", "--config", &cfg, "--out", &outs, "--matrices"]);
    assert!(o.status.success());
    let s: Value =
        serde_json::from_str(&fs::read_to_string(out.join("linearize.json")).unwrap()).unwrap();
    let psi1 = s["psi1_norm"].as_f64().unwrap();
    let kappa = s["kappa_bar"].as_f64().unwrap();
    assert!((psi1 - kappa).abs() < 1e-12);
    assert!(s["gram_min_eigenvalue"].as_f64().unwrap() > 0.0);
    let gram = fs::read_to_string(out.join("gram.matrix")).unwrap();
    assert!(gram.starts_with("KICKFLOW-MATRIX v1,rows=10,cols=10\n"));
}

#[test]
fn coupling_contracts_and_tuning_failure_exits_with_code_4() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SMALL);
    let (out, outs) = out_arg(tmp.path(), "cp");
    let o = kickflow(&[
        "couple", "--config", &cfg, "--out", &outs, "--steps", "8", "--pairs", "2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s: Value =
        serde_json::from_str(&fs::read_to_string(out.join("couple.json")).unwrap()).unwrap();
    assert!(s["q_geo_mean"].as_f64().unwrap() < 0.95);
    assert_eq!(s["violated"], false);
    let csv = fs::read_to_string(out.join("couple.csv")).unwrap();
    assert!(csv.starts_with("pair,k,dist,qhat,phi_norm,eps_hat\n"));
    assert_eq!(csv.lines().count(), 17);

    let bad = write_config(
        tmp.path(),
        "e.toml",
        &format!("{SMALL}[control]\nepsilon_target = 0.0\n"),
    );
    let o = kickflow(&["couple", "--config", &bad, "--out", &outs, "--steps", "2"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(error_record(&o)["best_eps"].as_f64().unwrap() > 0.0);
}

#[test]
fn noise_check_passes_at_small_sample_size() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        &format!("{SMALL}[noise_check]\ndraws = 20000\nindependence_draws = 20000\n"),
    );
    let (out, outs) = out_arg(tmp.path(), "nc");
    let o = kickflow(&["noise-check", "--config", &cfg, "--out", &outs]);
    assert!(o.status.success());
    let s: Value =
        serde_json::from_str(&fs::read_to_string(out.join("noise_check.json")).unwrap()).unwrap();
    assert_eq!(s["support_respected"], true);
    assert!((s["variance_exact"].as_f64().unwrap() - 1.0 / 7.0).abs() < 1e-15);
}

const MIX: &str = "[domain]\nmx = 2\nny = 2\n[solver]\ndt = 0.01\n[mix]\nparticles = 24\nkicks = 24\nstationary_window = 4\n";

#[test]
fn resumed_mix_equals_the_uninterrupted_run() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "m.toml", MIX);
    let (full, fulls) = out_arg(tmp.path(), "full");
    let o = kickflow(&["mix", "--config", &cfg, "--out", &fulls]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: Value =
        serde_json::from_str(&fs::read_to_string(full.join("mix.json")).unwrap()).unwrap();
    for key in ["c", "C", "r2", "k_star", "floor"] {
        assert!(summary.get(key).is_some(), "{key}");
    }

    let (part, parts) = out_arg(tmp.path(), "part");
    let o = kickflow(&[
        "mix",
        "--config",
        &cfg,
        "--out",
        &parts,
        "--stop-after",
        "9",
    ]);
    assert!(o.status.success());
    assert!(!part.join("mix.csv").exists());
    let ckpt = part.join("checkpoint.ckpt");
    let o = kickflow(&[
        "mix",
        "--config",
        &cfg,
        "--out",
        &parts,
        "--resume",
        ckpt.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    for name in ["mix.csv", "mix.json"] {
        assert_eq!(
            fs::read(full.join(name)).unwrap(),
            fs::read(part.join(name)).unwrap(),
            "{name}"
        );
    }

    let o = kickflow(&[
        "mix",
        "--config",
        &cfg,
        "--out",
        &parts,
        "--resume",
        ckpt.to_str().unwrap(),
        "--kicks",
        "30",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "m.toml", MIX);
    let (part, parts) = out_arg(tmp.path(), "part");
    let o = kickflow(&[
        "mix",
        "--config",
        &cfg,
        "--out",
        &parts,
        "--stop-after",
        "3",
    ]);
    assert!(o.status.success());
    let text = fs::read_to_string(part.join("checkpoint.ckpt")).unwrap();

    let old = tmp.path().join("v0.ckpt");
    fs::write(
        &old,
        text.replacen("KICKFLOW-CKPT v1", "KICKFLOW-CKPT v0", 1),
    )
    .unwrap();
    let o = kickflow(&[
        "mix",
        "--config",
        &cfg,
        "--out",
        &parts,
        "--resume",
        old.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_record(&o)["error"], "version_mismatch");

    let corrupt = tmp.path().join("bad.ckpt");
    let row = text.lines().nth(1).unwrap();
    fs::write(
        &corrupt,
        text.replacen(row, &row.replacen("row,0,", "row,0,1", 1), 1),
    )
    .unwrap();
    let o = kickflow(&[
        "mix",
        "--config",
        &cfg,
        "--out",
        &parts,
        "--resume",
        corrupt.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_record(&o)["error"], "checksum");
}

#[test]
fn too_short_mix_exits_with_code_6() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "m.toml", MIX);
    let (out, outs) = out_arg(tmp.path(), "short");
    let o = kickflow(&["mix", "--config", &cfg, "--out", &outs, "--kicks", "2"]);
    assert_eq!(o.status.code(), Some(6));
    assert_eq!(error_record(&o)["error"], "insufficient_data");
    assert!(out.join("mix.csv").exists());
}
