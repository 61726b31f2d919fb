use sha2::{Digest, Sha256};
use std::path::Path;
use std::process::{Command, Output};
use tempfile::TempDir;

const FLAT: &str = r#"experiment = "simulate"

[grid]
x_min = -1.0
x_max = 1.0
n = 21
boundary = "neumann"

[seed]
data = "flat"
flat_value = 1.0
"#;

fn quenchlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quenchlab"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) {
    std::fs::write(dir.join("cfg.toml"), text).unwrap();
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(k).unwrap().to_string()).collect()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn spectral_test_writes_an_orthogonal_gram_matrix() {
    let tmp = TempDir::new().unwrap();
    let o = quenchlab(tmp.path(), &["spectral-test", "--out", "out"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = read(tmp.path(), "out/hermite_orthogonality.csv");
    assert!(csv.starts_with("l,m,gram,normalized_error\n"));
    assert!(!csv.contains('\r'));
    let (ls, ms, errs) = (column(&csv, "l"), column(&csv, "m"), column(&csv, "normalized_error"));
    assert_eq!(errs.len(), 121);
    let worst = (0..errs.len()).filter(|&i| ls[i] != ms[i]).map(|i| errs[i].parse::<f64>().unwrap()).fold(0.0, f64::max);
    assert!(worst < 1e-10, "{worst}");
}

#[test]
fn manifest_hashes_every_output() {
    let tmp = TempDir::new().unwrap();
    let o = quenchlab(tmp.path(), &["profile-check", "--out", "out"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = read(tmp.path(), "out/manifest.txt");
    let names: Vec<&str> = manifest.lines().map(|l| l.split_once("  ").unwrap().1).collect();
    assert_eq!(names, ["exponents.csv", "final_profile.csv", "k_hat.csv", "profiles.csv", "theta.csv"]);
    for line in manifest.lines() {
        let (digest, name) = line.split_once("  ").unwrap();
        let bytes = std::fs::read(tmp.path().join("out").join(name)).unwrap();
        assert_eq!(format!("{:x}", Sha256::digest(&bytes)), digest, "{name}");
    }
}

#[test]
fn csv_values_carry_seventeen_significant_digits() {
    let tmp = TempDir::new().unwrap();
    assert!(quenchlab(tmp.path(), &["profile-check", "--out", "out"]).status.success());
    let csv = read(tmp.path(), "out/exponents.csv");
    for cell in csv.lines().nth(1).unwrap().split(',') {
        let mantissa = cell.split('e').next().unwrap().trim_start_matches('-').replace('.', "");
        assert_eq!(mantissa.len(), 17, "{cell}");
    }
}

#[test]
fn flat_data_quenches_at_one_half() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), FLAT);
    let o = quenchlab(tmp.path(), &["simulate", "--config", "cfg.toml", "--out", "out"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = read(tmp.path(), "out/quench_summary.csv");
    assert_eq!(column(&csv, "quenched"), ["true"]);
    let t: f64 = column(&csv, "t_est")[0].parse().unwrap();
    assert!((t - 0.5).abs() < 1e-3, "{t}");
}

#[test]
fn shoot_with_zero_levels_echoes_the_initial_audit() {
    let tmp = TempDir::new().unwrap();
    let o = quenchlab(tmp.path(), &["shoot", "--levels", "0", "--out", "out"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("initial audit at s = 6.000000"), "{stdout}");
    let audit = read(tmp.path(), "out/initial_audit.csv");
    assert!(stdout.contains(&audit));
    assert!(column(&audit, "pass").iter().all(|p| p == "true"), "{audit}");
    assert_eq!(read(tmp.path(), "out/shoot_history.csv").lines().count(), 2);
}

#[test]
fn repeated_runs_are_bit_identical() {
    let tmp = TempDir::new().unwrap();
    let args = |out: &'static str| ["shoot", "--levels", "2", "--seed-box", "-0.3,0.5,-1,1", "--out", out];
    assert!(quenchlab(tmp.path(), &args("a")).status.success());
    assert!(quenchlab(tmp.path(), &args("b")).status.success());
    let (a, b) = (read(tmp.path(), "a/manifest.txt"), read(tmp.path(), "b/manifest.txt"));
    assert_eq!(a, b);
    assert!(a.contains("corners.csv"));
}

#[test]
fn invalid_value_reports_its_line() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "[model]\nbeta = 1.0\n\n[shrinking_set]\neta0 = -1.0\n");
    let o = quenchlab(tmp.path(), &["simulate", "--config", "cfg.toml"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("cfg.toml:5") && err.contains("shrinking_set.eta0"), "{err}");
    assert!(!tmp.path().join("quenchlab-out").exists());
}

#[test]
fn unknown_keys_are_rejected() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "[grid]\nn = 101\nspacing = 0.1\n");
    let o = quenchlab(tmp.path(), &["simulate", "--config", "cfg.toml"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("cfg.toml:3") && err.contains("unknown field"), "{err}");
}

#[test]
fn invalid_override_names_the_flag() {
    let tmp = TempDir::new().unwrap();
    let o = quenchlab(tmp.path(), &["modes", "--override", "seed.T=0.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--override seed.T=0.5"), "{}", stderr(&o));
    let o = quenchlab(tmp.path(), &["shoot", "--seed-box", "0.5,-0.3,-1,1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--seed-box"), "{}", stderr(&o));
}

#[test]
fn experiment_kind_must_match_the_subcommand() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), FLAT);
    let o = quenchlab(tmp.path(), &["modes", "--config", "cfg.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("cfg.toml:1"), "{}", stderr(&o));
}

#[test]
fn missing_quench_has_its_own_exit_code() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), FLAT);
    let args = [
        "simulate",
        "--config",
        "cfg.toml",
        "--out",
        "out",
        "--override",
        "model.forcing=\"vortex\"",
        "--override",
        "model.vortex_h0=1.0",
        "--override",
        "scheme.max_steps=2000",
    ];
    let o = quenchlab(tmp.path(), &args);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert_eq!(column(&read(tmp.path(), "out/quench_summary.csv"), "quenched"), ["false"]);
    assert!(read(tmp.path(), "out/manifest.txt").contains("quench_summary.csv"));
}

#[test]
fn positivity_loss_has_its_own_exit_code() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), FLAT);
    let args = ["simulate", "--config", "cfg.toml", "--override", "scheme.c_stiff=1000", "--override", "scheme.max_halvings=0"];
    let o = quenchlab(tmp.path(), &args);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}
