//! Run directories, plot-ready CSV/JSON writers and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Hex SHA-256 of the canonical JSON form of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> anyhow::Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(Sha256::digest(&bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    }))
}

/// Writes `bytes` to `path` via a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

#[derive(Debug, Serialize)]
struct Manifest<'a, C: Serialize> {
    command: &'a str,
    code_version: &'a str,
    config: &'a C,
    config_hash: &'a str,
    started: &'a str,
    finished: String,
    outputs: &'a [PathBuf],
    pass: bool,
    exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
}

/// Collects the files a command writes and records them in
/// `manifest.json`, which is always written last.
pub struct Run<C: Serialize> {
    command: &'static str,
    dir: PathBuf,
    config: C,
    hash: String,
    started: String,
    outputs: Vec<PathBuf>,
}

impl<C: Serialize> Run<C> {
    /// Uses `out` itself as the output directory.
    pub fn in_dir(command: &'static str, out: &Path, config: C) -> anyhow::Result<Self> {
        fs::create_dir_all(out)?;
        let hash = config_hash(&config)?;
        Ok(Self { command, dir: out.to_path_buf(), config, hash, started: now(), outputs: Vec::new() })
    }

    /// Creates a fresh `<timestamp>-<hash>` directory under `out`.
    pub fn fresh(command: &'static str, out: &Path, config: C) -> anyhow::Result<Self> {
        let hash = config_hash(&config)?;
        let stamp = Utc::now().format("%Y%m%dT%H%M%SZ").to_string();
        let base = format!("{stamp}-{}", &hash[..12]);
        fs::create_dir_all(out)?;
        let mut dir = out.join(&base);
        let mut i = 1;
        while dir.exists() {
            dir = out.join(format!("{base}-{i}"));
            i += 1;
        }
        fs::create_dir(&dir)?;
        Ok(Self { command, dir, config, hash, started: now(), outputs: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn config(&self) -> &C {
        &self.config
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> anyhow::Result<PathBuf> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write_file(name, &bytes)
    }

    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> anyhow::Result<PathBuf> {
        let mut text = header.join(",");
        text.push('\n');
        for row in rows {
            text.push_str(&row.join(","));
            text.push('\n');
        }
        self.write_file(name, text.as_bytes())
    }

    fn write_file(&mut self, name: &str, bytes: &[u8]) -> anyhow::Result<PathBuf> {
        let path = self.dir.join(name);
        write_atomic(&path, bytes)?;
        self.outputs.push(path.clone());
        Ok(path)
    }

    /// Writes `manifest.json` and returns its path.
    pub fn finish(self, pass: bool, exit_code: i32, error: Option<&str>) -> anyhow::Result<PathBuf> {
        let m = Manifest {
            command: self.command,
            code_version: CODE_VERSION,
            config: &self.config,
            config_hash: &self.hash,
            started: &self.started,
            finished: now(),
            outputs: &self.outputs,
            pass,
            exit_code,
            error,
        };
        let path = self.dir.join("manifest.json");
        let mut bytes = serde_json::to_vec_pretty(&m)?;
        bytes.push(b'\n');
        write_atomic(&path, &bytes)?;
        Ok(path)
    }
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, std::f64::consts::PI * 1e-300, -2.5e17, f64::MIN_POSITIVE] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = config_hash(&("x", 1.0)).unwrap();
        assert_eq!(a.len(), 64);
        assert_eq!(a, config_hash(&("x", 1.0)).unwrap());
        assert_ne!(a, config_hash(&("x", 1.5)).unwrap());
        // sha256 of `[]`
        assert_eq!(
            config_hash(&Vec::<u8>::new()).unwrap(),
            "4f53cda18c2baa0c0354bb5f9a3ecbe5ed12ab4d8e11ba873c2f11161202b945"
        );
    }

    #[test]
    fn manifest_lists_outputs_and_comes_last() {
        let tmp = tempfile::tempdir().unwrap();
        let mut run = Run::fresh("test", tmp.path(), serde_json::json!({"n": 4})).unwrap();
        let a = run.write_csv("a.csv", &["x"], &[vec![num(1.0)]]).unwrap();
        let dir = run.dir().to_path_buf();
        assert!(dir.file_name().unwrap().to_str().unwrap().contains('-'));
        let m = run.finish(true, 0, None).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&fs::read(&m).unwrap()).unwrap();
        assert_eq!(v["outputs"][0].as_str().unwrap(), a.to_str().unwrap());
        assert_eq!(v["pass"], true);
        assert!(fs::read_dir(&dir).unwrap().all(|e| !e.unwrap().file_name().to_str().unwrap().ends_with(".tmp")));
    }

    #[test]
    fn fresh_directories_never_collide() {
        let tmp = tempfile::tempdir().unwrap();
        let a = Run::fresh("t", tmp.path(), 1).unwrap();
        let b = Run::fresh("t", tmp.path(), 1).unwrap();
        assert_ne!(a.dir(), b.dir());
    }
}
