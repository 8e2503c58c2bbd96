//! File formats: adjacency and signal CSVs, time-varying graph JSON,
//! observation streams and content digests.
//!
//! All indices are 0-based. Matrices are written with 17 significant
//! digits so that every value round-trips exactly.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::TimeVaryingGraph;
use crate::sampling::{ObservationSet, SamplingPlan};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, detail: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        detail: detail.into(),
    }
}

/// `x` with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Reads a headerless CSV of reals into a matrix.
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_err(path, e.to_string()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(path, e.to_string()))?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(c, v)| {
                v.parse::<f64>()
                    .map_err(|_| parse_err(path, format!("row {r}, col {c}: not a number: {v:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(r) = rows.iter().position(|row| row.len() != ncols) {
        return Err(parse_err(path, format!("row {r} has {} columns, expected {ncols}", rows[r].len())));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Writes a matrix as headerless CSV.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Writes via a temporary file in the same directory and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

#[derive(Debug, Serialize, Deserialize)]
struct GraphJson {
    n: usize,
    slots: Vec<Vec<Vec<f64>>>,
}

/// Reads a list of `N x N` matrices from `{"n": N, "slots": [...]}`.
pub fn read_matrix_list_json(path: &Path) -> Result<Vec<DMatrix<f64>>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let g: GraphJson = serde_json::from_str(&text).map_err(|e| parse_err(path, e.to_string()))?;
    g.slots
        .iter()
        .enumerate()
        .map(|(t, rows)| {
            if rows.len() != g.n || rows.iter().any(|r| r.len() != g.n) {
                return Err(parse_err(path, format!("slot {t} is not {0}x{0}", g.n)));
            }
            Ok(DMatrix::from_fn(g.n, g.n, |i, j| rows[i][j]))
        })
        .collect()
}

pub fn write_matrix_list_json(path: &Path, mats: &[DMatrix<f64>]) -> Result<()> {
    let n = mats.first().map_or(0, DMatrix::nrows);
    let g = GraphJson {
        n,
        slots: mats
            .iter()
            .map(|m| (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect())
            .collect(),
    };
    let text = serde_json::to_string(&g).map_err(|e| parse_err(path, e.to_string()))?;
    write_atomic(path, text.as_bytes())
}

/// Per-slot adjacency files `adj_0001.csv`, `adj_0002.csv`, ... in a
/// directory, in index order.
pub fn read_adjacency_dir(dir: &Path) -> Result<Vec<DMatrix<f64>>> {
    let mut files: Vec<(usize, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(idx) = name.strip_prefix("adj_").and_then(|r| r.strip_suffix(".csv")) {
            let i = idx
                .parse::<usize>()
                .map_err(|_| parse_err(&path, "expected adj_<index>.csv"))?;
            files.push((i, path));
        }
    }
    if files.is_empty() {
        return Err(parse_err(dir, "no adj_*.csv files"));
    }
    files.sort();
    if let Some(w) = files.windows(2).find(|w| w[1].0 != w[0].0 + 1) {
        return Err(parse_err(dir, format!("slot files not consecutive after index {}", w[0].0)));
    }
    files.iter().map(|(_, p)| read_matrix_csv(p)).collect()
}

/// Loads adjacency matrices from a directory of per-slot CSVs, a JSON
/// list or a single CSV.
pub fn read_matrices(path: &Path) -> Result<Vec<DMatrix<f64>>> {
    if path.is_dir() {
        read_adjacency_dir(path)
    } else if path.extension().is_some_and(|e| e == "json") {
        read_matrix_list_json(path)
    } else {
        Ok(vec![read_matrix_csv(path)?])
    }
}

/// Loads a time-varying graph. A single adjacency is repeated over
/// `horizon` slots; a sequence must have exactly `horizon` slots when a
/// horizon is given.
pub fn read_graph(path: &Path, horizon: Option<usize>) -> Result<TimeVaryingGraph> {
    let mats = read_matrices(path)?;
    let mats = match (mats.len(), horizon) {
        (1, Some(t)) => vec![mats[0].clone(); t],
        (k, Some(t)) if k != t => {
            return Err(parse_err(path, format!("graph has {k} slots, horizon is {t}")));
        }
        _ => mats,
    };
    TimeVaryingGraph::from_adjacencies(mats).map_err(|e| parse_err(path, e.to_string()))
}

/// Lowercase hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// SHA-256 of a file, or of every file (sorted by name) in a directory.
pub fn sha256_path(path: &Path) -> Result<String> {
    if path.is_dir() {
        let mut names: Vec<PathBuf> = fs::read_dir(path)
            .map_err(io_err(path))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        names.sort();
        let mut h = Sha256::new();
        for p in names {
            h.update(p.file_name().map(|n| n.as_encoded_bytes()).unwrap_or_default());
            h.update(fs::read(&p).map_err(io_err(&p))?);
        }
        Ok(hex::encode(h.finalize()))
    } else {
        Ok(sha256_hex(&fs::read(path).map_err(io_err(path))?))
    }
}

/// One line of an observation stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub t: usize,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

/// Formats `{"t":..,"estimate":[..]}` with 17-digit values.
pub fn estimate_record(t: usize, estimate: &DVector<f64>) -> String {
    let vals: Vec<String> = estimate.iter().map(|&v| fmt_f64(v)).collect();
    format!("{{\"t\":{t},\"estimate\":[{}]}}", vals.join(","))
}

/// Reads an observation stream file into a plan and observations over
/// `n` vertices and `horizon` slots. Slots without a record are empty;
/// repeated or decreasing slot indices are an error.
pub fn read_observations(path: &Path, n: usize, horizon: usize) -> Result<(SamplingPlan, ObservationSet)> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut slots = vec![Vec::new(); horizon];
    let mut values = vec![DVector::zeros(0); horizon];
    let mut last: Option<usize> = None;
    for (line_no, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let rec: SlotRecord =
            serde_json::from_str(line).map_err(|e| parse_err(path, format!("line {}: {e}", line_no + 1)))?;
        if last.is_some_and(|l| rec.t <= l) {
            return Err(parse_err(path, format!("line {}: non-monotone slot", line_no + 1)));
        }
        if rec.t >= horizon || rec.indices.len() != rec.values.len() {
            return Err(parse_err(
                path,
                format!("line {}: slot {} beyond horizon {horizon} or length mismatch", line_no + 1, rec.t),
            ));
        }
        last = Some(rec.t);
        slots[rec.t] = rec.indices;
        values[rec.t] = DVector::from_vec(rec.values);
    }
    let plan = SamplingPlan::new(n, slots).map_err(|e| parse_err(path, e.to_string()))?;
    let obs = ObservationSet::new(&plan, values).map_err(|e| parse_err(path, e.to_string()))?;
    Ok((plan, obs))
}

/// Writes observations as a stream file, one record per non-empty slot.
pub fn write_observations(path: &Path, plan: &SamplingPlan, obs: &ObservationSet) -> Result<()> {
    let mut out = Vec::new();
    for t in 0..plan.n_slots() {
        if plan.count(t) == 0 {
            continue;
        }
        let rec = SlotRecord {
            t,
            indices: plan.indices(t).to_vec(),
            values: obs.values(t).iter().copied().collect(),
        };
        serde_json::to_writer(&mut out, &rec).map_err(|e| parse_err(path, e.to_string()))?;
        out.write_all(b"\n").map_err(io_err(path))?;
    }
    write_atomic(path, &out)
}
