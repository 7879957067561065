//! Result persistence: JSON report, CSV curves and tables, a manifest with a
//! file index, binary snapshots and JSON-lines diagnostics.
//!
//! Everything except `run.log` is a function of the report and configuration
//! alone, so equal manifests give equal bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::experiments::{Curve, ExperimentReport, Table};
use crate::grid::{Grid, GridFunction};
use crate::stepper::Trajectory;

pub const SNAPSHOT_MAGIC: [u8; 4] = *b"SPDE";
pub const SNAPSHOT_VERSION: u32 = 1;
const SNAPSHOT_HEADER: usize = 4 + 4 + 8 + 8 + 8;

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

/// 17 significant digits.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn curve_csv(c: &Curve) -> String {
    let mut s = String::from("t,mean,stderr\n");
    for ((t, m), e) in c.t.iter().zip(&c.mean).zip(&c.stderr) {
        let _ = writeln!(s, "{},{},{}", num(*t), num(*m), num(*e));
    }
    s
}

pub fn table_csv(t: &Table) -> String {
    let mut s = t.columns.join(",");
    s.push('\n');
    for row in &t.rows {
        s.push_str(&row.iter().map(|v| num(*v)).collect::<Vec<_>>().join(","));
        s.push('\n');
    }
    s
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

/// Content-addressed description of one run; holds no timestamps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub config_hash: Option<String>,
    pub seed: u64,
    pub kind: String,
    pub pass: bool,
    pub versions: Vec<(String, String)>,
    pub config: Option<String>,
    pub files: Vec<FileEntry>,
}

/// Files of one run held in memory, in write order.
#[derive(Debug, Default)]
pub struct Bundle {
    files: Vec<(String, Vec<u8>)>,
}

impl Bundle {
    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) -> Result<()> {
        let name = name.into();
        if self.files.iter().any(|(n, _)| *n == name) {
            return Err(Error::Io(format!("two outputs named {name}")));
        }
        self.files.push((name, bytes));
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }

    fn index(&self) -> Vec<FileEntry> {
        self.files
            .iter()
            .map(|(n, b)| FileEntry { name: n.clone(), bytes: b.len(), sha256: hex::encode(Sha256::digest(b)) })
            .collect()
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
            }
            write_file(&path, bytes)?;
        }
        Ok(())
    }
}

/// Report JSON plus one CSV per curve and table; no manifest.
pub fn emit_report(report: &ExperimentReport) -> Result<Bundle> {
    let mut b = Bundle::default();
    b.add("report.json", to_json(report)?.into_bytes())?;
    for c in &report.curves {
        b.add(format!("{}.csv", c.name), curve_csv(c).into_bytes())?;
    }
    for t in &report.tables {
        b.add(format!("{}.csv", t.name), table_csv(t).into_bytes())?;
    }
    Ok(b)
}

/// Adds snapshots and diagnostics of a representative trajectory.
pub fn emit_trajectory(bundle: &mut Bundle, traj: &Trajectory, snapshots: bool, diagnostics: bool) -> Result<()> {
    if snapshots {
        for (k, (t, u)) in traj.times.iter().zip(&traj.snapshots).enumerate() {
            bundle.add(format!("snapshots/{k:06}.bin"), encode_snapshot(*t, u))?;
        }
    }
    if diagnostics {
        let mut s = String::new();
        for d in &traj.diagnostics {
            s.push_str(&serde_json::to_string(d).map_err(|e| Error::Io(e.to_string()))?);
            s.push('\n');
        }
        bundle.add("diagnostics.jsonl", s.into_bytes())?;
    }
    Ok(())
}

/// Closes a bundle with `config.toml` and `manifest.json`.
pub fn finish(mut bundle: Bundle, report: &ExperimentReport, config: Option<&Config>) -> Result<(Bundle, RunManifest)> {
    let toml = config.map(Config::to_toml).transpose()?;
    if let Some(t) = &toml {
        bundle.add("config.toml", t.clone().into_bytes())?;
    }
    let manifest = RunManifest {
        config_hash: report.provenance.config_hash.clone(),
        seed: report.provenance.seed,
        kind: report.kind.name().to_string(),
        pass: report.pass,
        versions: vec![("spde-core".into(), env!("CARGO_PKG_VERSION").into())],
        config: toml,
        files: bundle.index(),
    };
    bundle.add("manifest.json", to_json(&manifest)?.into_bytes())?;
    Ok((bundle, manifest))
}

/// Appends a line to `run.log`; the only output that carries wall-clock time.
pub fn log_line(dir: &Path, line: &str) -> Result<()> {
    use std::io::Write;
    let path = dir.join("run.log");
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0);
    let mut f = fs::OpenOptions::new().create(true).append(true).open(&path).map_err(|e| io_err(&path, e))?;
    writeln!(f, "[{secs:.3}] {line}").map_err(|e| io_err(&path, e))
}

pub fn create_dir(dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    Ok(dir.to_path_buf())
}

/// `magic, version: u32, n: u64, length: f64, t: f64, values: [f64; n]`, little-endian.
pub fn encode_snapshot(t: f64, u: &GridFunction) -> Vec<u8> {
    let g = u.grid();
    let mut out = Vec::with_capacity(SNAPSHOT_HEADER + 8 * u.len());
    out.extend_from_slice(&SNAPSHOT_MAGIC);
    out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    out.extend_from_slice(&(g.n_interior() as u64).to_le_bytes());
    out.extend_from_slice(&g.length().to_le_bytes());
    out.extend_from_slice(&t.to_le_bytes());
    for v in u.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<(f64, GridFunction)> {
    let bad = |what: &str| Error::Io(format!("snapshot: {what}"));
    if bytes.len() < SNAPSHOT_HEADER {
        return Err(bad("truncated header"));
    }
    if bytes[..4] != SNAPSHOT_MAGIC {
        return Err(bad("bad magic"));
    }
    let word = |at: usize| -> [u8; 8] { bytes[at..at + 8].try_into().expect("length checked") };
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("length checked"));
    if version != SNAPSHOT_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(word(8)) as usize;
    let length = f64::from_le_bytes(word(16));
    let t = f64::from_le_bytes(word(24));
    if bytes.len() != SNAPSHOT_HEADER + 8 * n {
        return Err(bad("payload length does not match the header"));
    }
    let values = (0..n).map(|i| f64::from_le_bytes(word(SNAPSHOT_HEADER + 8 * i))).collect();
    Ok((t, GridFunction::new(Grid::new(length, n)?, values)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{ExperimentKind, Provenance};

    fn report() -> ExperimentReport {
        let prov = Provenance {
            config_hash: None,
            seed: 1,
            code_version: "x".into(),
            paths: 1,
            path_offset: 0,
            dt: 0.1,
            h: 0.1,
            horizon: 1.0,
            record_every: 1,
            slack: 0.0,
        };
        ExperimentReport::new(ExperimentKind::Contraction, prov)
    }

    #[test]
    fn empty_curve_set_gives_report_only() {
        let b = emit_report(&report()).unwrap();
        assert_eq!(b.names().collect::<Vec<_>>(), vec!["report.json"]);
    }

    #[test]
    fn curve_header_and_digits() {
        let c = Curve { name: "gap_l1".into(), t: vec![0.0], mean: vec![1.0 / 3.0], stderr: vec![0.0] };
        let s = curve_csv(&c);
        assert!(s.starts_with("t,mean,stderr\n"));
        let v: f64 = s.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(v, 1.0 / 3.0);
    }

    #[test]
    fn snapshot_roundtrip() {
        let g = Grid::new(2.0, 3).unwrap();
        let u = GridFunction::new(g, vec![1.0, -2.5, f64::MIN_POSITIVE]).unwrap();
        let bytes = encode_snapshot(0.25, &u);
        assert_eq!(&bytes[..4], b"SPDE");
        let (t, v) = decode_snapshot(&bytes).unwrap();
        assert_eq!(t, 0.25);
        assert_eq!(v, u);
        assert!(decode_snapshot(&bytes[..bytes.len() - 1]).is_err());
    }
}
