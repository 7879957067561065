use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn spde(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spde")).args(args).output().unwrap()
}

fn run(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![sub, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    spde(&args)
}

fn small_contraction(dir: &Path) -> PathBuf {
    let text = std::fs::read_to_string(configs().join("contract.toml"))
        .unwrap()
        .replace("n = 128", "n = 32")
        .replace("n_modes = 64", "n_modes = 16")
        .replace("horizon = 1.0", "horizon = 0.05")
        .replace("record_every = 100", "record_every = 10");
    let path = dir.join("small.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn passing_run_exits_zero_and_writes_the_bundle() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_contraction(tmp.path());
    let out = tmp.path().join("out");
    let o = run("contract", &cfg, &out, &["--paths", "8"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.lines().last().unwrap().ends_with("contraction PASS"));
    for f in ["report.json", "manifest.json", "config.toml", "run.log", "gap_l1.csv"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let csv = std::fs::read_to_string(out.join("gap_l1.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,mean,stderr"));
    let written = std::fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(written.contains("paths = 8"));
}

#[test]
fn bad_config_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "[grid]\nn = 16\nn = 17\n").unwrap();
    let o = run("contract", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3"), "{err}");

    let o = run("contract", &tmp.path().join("missing.toml"), &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn subcommand_must_match_configured_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_contraction(tmp.path());
    let o = run("energy", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("contraction"));
}

#[test]
fn ergodic_with_multiplicative_noise_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_contraction(tmp.path());
    let text = std::fs::read_to_string(&cfg).unwrap().replace("kind = \"contraction\"", "kind = \"ergodic\"");
    std::fs::write(&cfg, text).unwrap();
    let o = run("ergodic", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("additive"));
}

#[test]
fn anti_diffusion_control_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("anti_diffusion.toml")).unwrap().replace("n = 128", "n = 32")
        .replace("n_modes = 64", "n_modes = 16");
    let cfg = tmp.path().join("anti.toml");
    std::fs::write(&cfg, text).unwrap();
    let o = run("contract", &cfg, &tmp.path().join("out"), &["--paths", "4"]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("contraction FAIL"));
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_contraction(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(run("contract", &cfg, &a, &["--paths", "6", "--threads", "1", "--seed", "99"]).status.code(), Some(0));
    assert_eq!(run("contract", &cfg, &b, &["--paths", "6", "--threads", "2", "--seed", "99"]).status.code(), Some(0));
    for f in ["report.json", "manifest.json", "config.toml", "gap_l1.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn shipped_configs_parse() {
    let tmp = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("[experiment]"), "{}", path.display());
    }
    // Boundary layer has no Monte Carlo part and is quick at full size.
    let o = run("boundary-layer", &configs().join("boundary_layer.toml"), &tmp.path().join("bl"), &[]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    let o = run("validate", &configs().join("validate.toml"), &tmp.path().join("v"), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
}
