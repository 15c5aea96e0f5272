//! Report files: `<name>.json`, `<name>.tsv` and `<name>.meta.json`.
//!
//! The JSON report is a pure function of the inputs, flags and seed. Anything
//! that varies between runs (timestamps, elapsed time) goes to the metadata file.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use spanqe::{Error, Result};

pub const TOOL: &str = "spanqe";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

pub fn digest(role: &str, path: &Path) -> Result<InputDigest> {
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(InputDigest {
        role: role.to_string(),
        path: path.display().to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

/// A tab-separated table. Numbers are rendered by the caller at report precision.
#[derive(Debug, Default)]
pub struct Tsv {
    lines: Vec<String>,
}

impl Tsv {
    pub fn new(header: &[&str]) -> Self {
        Self {
            lines: vec![header.join("\t")],
        }
    }

    pub fn row<S: AsRef<str>>(&mut self, cells: &[S]) {
        let cells: Vec<&str> = cells.iter().map(AsRef::as_ref).collect();
        self.lines.push(cells.join("\t"));
    }

    pub fn render(&self) -> String {
        let mut out = self.lines.join("\n");
        out.push('\n');
        out
    }
}

/// Scores and CI bounds.
pub fn f3(x: f64) -> String {
    format!("{x:.3}")
}

/// Effects in probability points.
pub fn f2(x: f64) -> String {
    format!("{x:.2}")
}

pub fn opt3(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), f3)
}

#[derive(Serialize)]
struct Envelope<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'a str,
    seed: u64,
    offset_unit: &'static str,
    config: &'a C,
    inputs: &'a [InputDigest],
    result: &'a Value,
}

#[derive(Serialize)]
struct Meta<'a> {
    subcommand: &'a str,
    started_unix_ms: u128,
    finished_unix_ms: u128,
    elapsed_ms: u128,
}

pub struct Clock {
    started: Instant,
    started_unix_ms: u128,
}

fn unix_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

impl Clock {
    pub fn start() -> Self {
        Self {
            started: Instant::now(),
            started_unix_ms: unix_ms(),
        }
    }
}

fn write(path: PathBuf, contents: &[u8]) -> Result<()> {
    fs::write(&path, contents).map_err(|source| Error::Io { path, source })
}

#[allow(clippy::too_many_arguments)]
pub fn emit<C: Serialize>(
    out: &Path,
    name: &str,
    seed: u64,
    config: &C,
    inputs: &[InputDigest],
    result: &Value,
    tsv: &Tsv,
    clock: Clock,
) -> Result<()> {
    fs::create_dir_all(out).map_err(|source| Error::Io {
        path: out.to_path_buf(),
        source,
    })?;
    let envelope = Envelope {
        tool: TOOL,
        version: VERSION,
        subcommand: name,
        seed,
        offset_unit: "unicode_scalar_value",
        config,
        inputs,
        result,
    };
    let mut json = serde_json::to_vec_pretty(&envelope).expect("report serializes");
    json.push(b'\n');
    write(out.join(format!("{name}.json")), &json)?;
    write(out.join(format!("{name}.tsv")), tsv.render().as_bytes())?;
    let finished = unix_ms();
    let meta = Meta {
        subcommand: name,
        started_unix_ms: clock.started_unix_ms,
        finished_unix_ms: finished,
        elapsed_ms: clock.started.elapsed().as_millis(),
    };
    let mut raw = serde_json::to_vec_pretty(&meta).expect("meta serializes");
    raw.push(b'\n');
    write(out.join(format!("{name}.meta.json")), &raw)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tsv_renders_rows() {
        let mut t = Tsv::new(&["a", "b"]);
        t.row(&["1", "x"]);
        assert_eq!(t.render(), "a\tb\n1\tx\n");
    }

    #[test]
    fn precision_helpers() {
        assert_eq!(f3(0.85), "0.850");
        assert_eq!(f2(-6.756), "-6.76");
        assert_eq!(opt3(None), "NA");
    }

    #[test]
    fn digest_is_hex_sha256() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x");
        fs::write(&p, b"abc").unwrap();
        let d = digest("segments", &p).unwrap();
        assert_eq!(
            d.sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
