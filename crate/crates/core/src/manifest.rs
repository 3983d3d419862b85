//! Run manifests and `key=value` config files.
//!
//! A manifest lists every resolved flag of a run as `key=value` lines, with
//! the command, library version, input digests and wall time as `#`
//! comments. Since comments are ignored when reading a config, a manifest
//! can be passed back through `--config` to repeat the run.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    /// Resolved flags in a stable order, keyed by long flag name.
    pub flags: Vec<(String, String)>,
    pub seed: u64,
    pub version: String,
    /// `(path, sha256 hex)` of every input file.
    pub inputs: Vec<(PathBuf, String)>,
    pub wall_time_secs: f64,
}

impl RunManifest {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = (|| -> std::fmt::Result {
            writeln!(s, "# command={}", self.command)?;
            writeln!(s, "# version={}", self.version)?;
            for (path, digest) in &self.inputs {
                writeln!(s, "# input={} sha256={digest}", path.display())?;
            }
            writeln!(s, "# wall_time_secs={:.3}", self.wall_time_secs)?;
            for (k, v) in &self.flags {
                writeln!(s, "{k}={v}")?;
            }
            Ok(())
        })();
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Lowercase hex SHA-256 of a file's bytes.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Parses `key=value` lines. Blank lines and `#` comments are skipped; keys
/// may be written with `-` or `_`.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value", i + 1)))?;
        let k = k.trim().replace('_', "-");
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", i + 1)));
        }
        out.push((k, v.trim().to_string()));
    }
    Ok(out)
}

pub fn read_config(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_reads_back_as_config() {
        let m = RunManifest {
            command: "train".into(),
            flags: vec![
                ("lambda1".into(), "1".into()),
                ("out-dir".into(), "runs/a".into()),
            ],
            seed: 3,
            version: "0.1.0".into(),
            inputs: vec![("d.csv".into(), "ab".into())],
            wall_time_secs: 0.25,
        };
        let cfg = parse_config(&m.to_text()).unwrap();
        assert_eq!(cfg, m.flags);
    }

    #[test]
    fn config_syntax() {
        let cfg = parse_config("# c\n\nmax_outer_iters = 5\ngrid=lambda1=1,2\n").unwrap();
        assert_eq!(cfg[0], ("max-outer-iters".into(), "5".into()));
        assert_eq!(cfg[1], ("grid".into(), "lambda1=1,2".into()));
        assert!(parse_config("novalue\n").is_err());
    }

    #[test]
    fn digest_of_known_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("abc");
        fs::write(&p, "abc").unwrap();
        assert_eq!(
            file_digest(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
