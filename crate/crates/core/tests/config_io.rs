use spde_core::config::Config;
use spde_core::experiments::representative_trajectory;
use spde_core::output;
use spde_core::profiles::Profile;

const TEXT: &str = r#"
[grid]
n = 20

[diffusion]
law = "bounded"
b0 = 1.0
b1 = 2.0

[noise]
mode = "additive"
seed = 4

[solver]
dt = 1e-3
horizon = 0.02
record_every = 5

[experiment]
kind = "contraction"
paths = 6

[output]
snapshots = true
diagnostics = true
"#;

#[test]
fn duplicate_key_reports_its_location() {
    let err = Config::parse("[grid]\nn = 16\nlength = 1.0\nn = 17\n").unwrap_err().to_string();
    assert!(err.contains("line 4"), "{err}");
}

#[test]
fn written_config_reloads_to_the_same_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = Config::parse(TEXT).unwrap();
    let path = tmp.path().join("config.toml");
    std::fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    let again = Config::from_path(&path).unwrap();
    assert_eq!(again, cfg);
    assert_eq!(again.hash().unwrap(), cfg.hash().unwrap());
}

#[test]
fn bundle_on_disk_matches_memory_and_snapshots_decode() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = Config::parse(TEXT).unwrap();
    let report = cfg.run().unwrap();
    let mut bundle = output::emit_report(&report).unwrap();
    let setup = cfg.setup().unwrap();
    let traj = representative_trajectory(&setup, &Profile::bump(1.0).sample(&setup.grid).unwrap()).unwrap();
    output::emit_trajectory(&mut bundle, &traj, true, true).unwrap();
    let (bundle, manifest) = output::finish(bundle, &report, Some(&cfg)).unwrap();
    bundle.write_to(tmp.path()).unwrap();
    for name in bundle.names() {
        assert_eq!(std::fs::read(tmp.path().join(name)).unwrap(), bundle.get(name).unwrap(), "{name}");
    }
    assert!(manifest.files.iter().any(|f| f.name == "report.json"));
    let first = std::fs::read(tmp.path().join("snapshots/000000.bin")).unwrap();
    let (t, u) = output::decode_snapshot(&first).unwrap();
    assert_eq!(t, 0.0);
    assert_eq!(u.values(), traj.snapshots[0].values());
    let lines = std::fs::read_to_string(tmp.path().join("diagnostics.jsonl")).unwrap();
    for line in lines.lines() {
        assert_json_object(line);
    }
}

fn assert_json_object(line: &str) {
    assert!(line.starts_with('{') && line.ends_with('}'), "{line}");
}
