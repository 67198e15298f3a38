//! CLI-only file formats: predictions, timing summaries and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use hsic::metrics::TimingSummary;
use hsic::{Error, Result};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub band: usize,
    pub label: usize,
    pub score: f64,
    pub distance: f64,
}

const PRED_HEADER: &str = "band,label,score,distance";

pub fn write_predictions(rows: &[Prediction], path: &Path) -> Result<()> {
    let mut out = format!("{PRED_HEADER}\n");
    for p in rows {
        writeln!(out, "{},{},{:.17e},{:.17e}", p.band, p.label, p.score, p.distance).expect("write to String");
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().enumerate();
    if lines.next().map(|(_, l)| l.trim()) != Some(PRED_HEADER) {
        return Err(format_err(path, 1, format!("expected header `{PRED_HEADER}`")));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.filter(|(_, l)| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = || format_err(path, i + 1, format!("malformed row `{line}`"));
        if f.len() != 4 {
            return Err(bad());
        }
        rows.push(Prediction {
            band: f[0].parse().map_err(|_| bad())?,
            label: f[1].parse().map_err(|_| bad())?,
            score: f[2].parse().map_err(|_| bad())?,
            distance: f[3].parse().map_err(|_| bad())?,
        });
    }
    Ok(rows)
}

/// Timing of the classification pass over `n_bands` bands.
#[derive(Clone, Debug, PartialEq)]
pub struct Timing {
    pub n_bands: usize,
    pub summary: TimingSummary,
}

const TIMING_HEADER: &str = "n_bands,repetitions,median_ms,mean_ms";

pub fn write_timing(t: &Timing, path: &Path) -> Result<()> {
    let s = &t.summary;
    let text = format!("{TIMING_HEADER}\n{},{},{:.6},{:.6}\n", t.n_bands, s.repetitions, s.median_ms, s.mean_ms);
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn read_timing(path: &Path) -> Result<Timing> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(TIMING_HEADER) {
        return Err(format_err(path, 1, format!("expected header `{TIMING_HEADER}`")));
    }
    let row = lines.next().ok_or_else(|| format_err(path, 2, "missing timing row"))?;
    let f: Vec<&str> = row.split(',').map(str::trim).collect();
    let bad = || format_err(path, 2, format!("malformed row `{row}`"));
    if f.len() != 4 {
        return Err(bad());
    }
    Ok(Timing {
        n_bands: f[0].parse().map_err(|_| bad())?,
        summary: TimingSummary {
            repetitions: f[1].parse().map_err(|_| bad())?,
            median_ms: f[2].parse().map_err(|_| bad())?,
            mean_ms: f[3].parse().map_err(|_| bad())?,
        },
    })
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// JSON manifest listing every artifact of a pipeline run with its checksum.
pub fn write_manifest(path: &Path, config: serde_json::Value, files: &[PathBuf]) -> Result<()> {
    let mut entries = Vec::with_capacity(files.len());
    for f in files {
        entries.push(serde_json::json!({
            "path": f.display().to_string(),
            "sha256": sha256_file(f)?,
        }));
    }
    let doc = serde_json::json!({
        "tool": "hsic",
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "files": entries,
    });
    let text = serde_json::to_string_pretty(&doc).expect("manifest serializes") + "\n";
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source }
}

fn format_err(path: &Path, line: usize, detail: impl Into<String>) -> Error {
    Error::Format { path: path.to_path_buf(), line, detail: detail.into() }
}
