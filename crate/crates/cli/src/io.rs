//! Deterministic artifact output and histogram ingestion.
//!
//! Every float is formatted with 17 significant digits so artifacts are
//! byte-identical across platforms; the run manifest records a SHA-256
//! digest per artifact.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use patch_antenna::{DecayHistogram, Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// 17-significant-digit decimal formatting; round-trips f64 exactly.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Collects artifacts under one output directory and digests them.
pub struct ArtifactWriter {
    dir: PathBuf,
    pub artifacts: Vec<ArtifactRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ArtifactRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl ArtifactWriter {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| {
            Error::Validation(format!("cannot create output dir {}: {e}", dir.display()))
        })?;
        Ok(ArtifactWriter {
            dir: dir.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes)
            .map_err(|e| Error::Validation(format!("cannot write {}: {e}", path.display())))?;
        let digest = Sha256::digest(bytes);
        self.artifacts.push(ArtifactRecord {
            path: name.to_string(),
            sha256: format!("{digest:x}"),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn write_csv<I: IntoIterator<Item = String>>(
        &mut self,
        name: &str,
        header: &str,
        rows: I,
    ) -> Result<()> {
        let mut buf = String::new();
        buf.push_str(header);
        buf.push('\n');
        for row in rows {
            buf.push_str(&row);
            buf.push('\n');
        }
        self.write_bytes(name, buf.as_bytes())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| Error::Validation(format!("cannot serialize {name}: {e}")))?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    /// Writes the manifest last, without digesting itself.
    pub fn finish_manifest<T: Serialize>(&self, manifest: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(manifest)
            .map_err(|e| Error::Validation(format!("cannot serialize manifest: {e}")))?;
        text.push('\n');
        let path = self.dir.join("manifest.json");
        fs::write(&path, text)
            .map_err(|e| Error::Validation(format!("cannot write {}: {e}", path.display())))?;
        Ok(())
    }
}

/// CSV row helper: joins already-formatted fields.
pub fn csv_row(fields: &[String]) -> String {
    let mut out = String::new();
    for (i, f) in fields.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{f}");
    }
    out
}

/// Parses a `time_ns, counts` CSV with a mandatory header into a histogram,
/// validating uniform bins and non-negative integer counts.
pub fn load_histogram(path: &Path) -> Result<DecayHistogram> {
    let text = fs::read_to_string(path).map_err(|e| {
        Error::Validation(format!("cannot read histogram {}: {e}", path.display()))
    })?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header))
            if header
                .to_lowercase()
                .replace(' ', "")
                .starts_with("time_ns,counts") => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: "expected header `time_ns, counts`".into(),
            })
        }
    }
    let mut bin_start_ns = Vec::new();
    let mut counts = Vec::new();
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 2 {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected 2 columns, found {}", cols.len()),
            });
        }
        let t: f64 = cols[0].parse().map_err(|e| Error::Parse {
            line: i + 1,
            message: format!("bad time `{}`: {e}", cols[0]),
        })?;
        let c: i64 = cols[1].parse().map_err(|e| Error::Parse {
            line: i + 1,
            message: format!("bad count `{}`: {e}", cols[1]),
        })?;
        if c < 0 {
            return Err(Error::Validation(format!(
                "negative count {c} at line {}",
                i + 1
            )));
        }
        bin_start_ns.push(t);
        counts.push(c as u64);
    }
    if bin_start_ns.len() < 2 {
        return Err(Error::Validation(
            "histogram needs at least two bins".into(),
        ));
    }
    let width = bin_start_ns[1] - bin_start_ns[0];
    let hist = DecayHistogram {
        window_ns: bin_start_ns[bin_start_ns.len() - 1] + width,
        bin_start_ns,
        counts,
    };
    hist.validate()?;
    Ok(hist)
}

/// Writes a histogram in the `time_ns, counts` format read by
/// [`load_histogram`].
pub fn histogram_csv(hist: &DecayHistogram) -> (String, Vec<String>) {
    let rows = hist
        .bin_start_ns
        .iter()
        .zip(&hist.counts)
        .map(|(t, c)| format!("{},{c}", fmt_float(*t)))
        .collect();
    ("time_ns,counts".to_string(), rows)
}
