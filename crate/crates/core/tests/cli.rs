use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dhflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dhflow")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn identities_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "id.toml", "preset = \"identities\"\n[identities]\nsizes = [16, 32]\n");
    let out = dir.path().join("out");
    let o = dhflow(&["identities", &cfg, "--out-dir", out.to_str().unwrap(), "--quiet"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(out.join("identities.csv")).unwrap();
    assert_eq!(table.lines().next().unwrap(), "quantity,n,value,order");
    let geo: Vec<&str> = table.lines().filter(|l| l.starts_with("geodesic_rhs_norm,")).collect();
    assert_eq!(geo.len(), 2);
    assert!(geo[1].ends_with(','));
    let phi = table.lines().find(|l| l.starts_with("bochner_phi_gap,32,")).unwrap();
    let order: f64 = phi.rsplit(',').next().unwrap().parse().unwrap();
    assert!(order > 1.5 && order < 2.5);
    assert!(out.join("conventions.txt").exists());
    assert!(out.join("config.toml").exists());
}

#[test]
fn short_run_then_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "preset = \"convergence\"\nt_end = 0.05\n");
    let out = dir.path().join("run");
    let o = dhflow(&["run", &cfg, "--out-dir", out.to_str().unwrap(), "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["run.csv", "events.json", "summary.json", "final.ckpt", "config.toml"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let echo = fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(echo.contains("seed = 3"));
    let csv = fs::read_to_string(out.join("run.csv")).unwrap();
    assert!(csv.starts_with("t,E_eps,"));
    let o = dhflow(&["inspect", out.join("final.ckpt").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("grid 32x32"));
    assert!(text.contains("eps 4"));
}

#[test]
fn config_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cases = [
        ("preset = \"convergence\"\neps = -1.0\n", "eps"),
        ("preset = \"convergence\"\nepsilonn = 1.0\n", "epsilonn"),
        ("preset = \"convergence\"\n[grid]\nnx = 7\n", "nx"),
    ];
    for (k, (body, key)) in cases.iter().enumerate() {
        let cfg = write_config(dir.path(), &format!("bad{k}.toml"), body);
        let o = dhflow(&["run", &cfg, "--out-dir", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(1));
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.starts_with("error:") && err.contains(key), "{err}");
    }
}

#[test]
fn preset_must_match_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.toml", "preset = \"epsilon_sweep\"\n");
    let o = dhflow(&["run", &cfg, "--out-dir", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("preset"));
}

#[test]
fn missing_out_dir_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "id.toml", "preset = \"identities\"\n");
    let o = dhflow(&["identities", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("out_dir"));
}

#[test]
fn damaged_checkpoint_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.ckpt");
    fs::write(&p, b"DHFLOW01\x01\x02").unwrap();
    let o = dhflow(&["inspect", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("truncated"));
}
