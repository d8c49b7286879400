//! Run artifacts: CSV series, the NDJSON summary and the run manifest.
//!
//! Column contract of `diagnostics_<n>.csv` (K solitons, `k, κ = 1..K`):
//!
//! ```text
//! t, M_k..., E_k..., Etilde_k..., h1_error, hs_error_<s>...,
//! mass_margin_<κ>..., etilde_margin_<κ>...
//! ```
//!
//! where `mass_margin_κ(t) = Σ_{k≤κ} (M^k(S_n) - M^k(t))` and likewise for
//! `Ẽ`. `modulation_<n>.csv` has `t, xtilde_<k>_<i>..., ctilde_<k>...,
//! residual_<j>..., jacobian_cond`. Floats are written with 17 significant
//! digits.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::checkpoint::Checkpoint;
use crate::construction::{ConstructionLadder, ModulationRow, Rung, RungReport};
use crate::error::{Result, ZkError};

/// `{:.16e}`, with `nan`/`inf`/`-inf` for non-finite values.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for l in lines {
        w.write_all(l.as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn diagnostics_header(k: usize, s_list: &[u32]) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for prefix in ["M", "E", "Etilde"] {
        h.extend((1..=k).map(|i| format!("{prefix}_{i}")));
    }
    h.push("h1_error".into());
    h.extend(s_list.iter().map(|s| format!("hs_error_{s}")));
    h.extend((1..=k).map(|i| format!("mass_margin_{i}")));
    h.extend((1..=k).map(|i| format!("etilde_margin_{i}")));
    h
}

/// Lines (header first) of the diagnostics series of one rung.
pub fn diagnostics_lines(rung: &Rung, k: usize, s_list: &[u32]) -> Vec<String> {
    let mut out = vec![diagnostics_header(k, s_list).join(",")];
    let Some(last) = rung.rows.last() else { return out };
    let cum = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .scan(0.0, |acc, x| {
                *acc += x;
                Some(*acc)
            })
            .collect()
    };
    let end_mass = cum(&last.budget.mass);
    let end_etilde = cum(&last.budget.etilde);
    for r in &rung.rows {
        let mut line = fmt_f64(r.t);
        let b = &r.budget;
        let mass = cum(&b.mass);
        let etilde = cum(&b.etilde);
        let margins_m = end_mass.iter().zip(&mass).map(|(e, m)| e - m);
        let margins_e = end_etilde.iter().zip(&etilde).map(|(e, m)| e - m);
        let values = b
            .mass
            .iter()
            .chain(&b.energy)
            .chain(&b.etilde)
            .copied()
            .chain(std::iter::once(r.h1_error))
            .chain(r.hs_errors.iter().copied())
            .chain(margins_m)
            .chain(margins_e);
        for v in values {
            line.push(',');
            line.push_str(&fmt_f64(v));
        }
        out.push(line);
    }
    out
}

pub fn modulation_header(k: usize, dim: usize, residuals: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for s in 1..=k {
        h.extend((1..=dim).map(|i| format!("xtilde_{s}_{i}")));
    }
    h.extend((1..=k).map(|s| format!("ctilde_{s}")));
    h.extend((1..=residuals).map(|j| format!("residual_{j}")));
    h.push("jacobian_cond".into());
    h
}

pub fn modulation_lines(rows: &[ModulationRow], k: usize, dim: usize) -> Vec<String> {
    let residuals = rows.first().map_or(k * dim, |r| r.residuals.len());
    let mut out = vec![modulation_header(k, dim, residuals).join(",")];
    for r in rows {
        let mut line = fmt_f64(r.t);
        let values = r.xtilde.iter().flatten().chain(&r.ctilde).chain(&r.residuals).chain(std::iter::once(&r.condition));
        for v in values {
            let _ = write!(line, ",{}", fmt_f64(*v));
        }
        out.push(line);
    }
    out
}

/// Summary object of one rung, tagged `"kind": "rung"`.
pub fn rung_summary(index: usize, report: &RungReport, files: &[String]) -> Result<Value> {
    let mut v = serde_json::to_value(report).map_err(|e| ZkError::Format(e.to_string()))?;
    let obj = v.as_object_mut().expect("struct serializes to an object");
    obj.insert("kind".into(), json!("rung"));
    obj.insert("index".into(), json!(index));
    obj.insert("files".into(), json!(files));
    Ok(v)
}

/// Summary object of the ladder, tagged `"kind": "ladder"`.
pub fn ladder_summary(ladder: &ConstructionLadder) -> Value {
    let cfg = &ladder.config;
    json!({
        "kind": "ladder",
        "p": cfg.p,
        "dim": cfg.grid.dim(),
        "speeds": cfg.solitons.iter().map(|s| s.c).collect::<Vec<_>>(),
        "T0": cfg.t0,
        "Sn": cfg.sn,
        "sigma0": cfg.sigma0(),
        "guaranteed_rate": crate::construction::guaranteed_rate(cfg.sigma0()),
        "cutoff_scale": ladder.l,
        "threshold_amplitude": ladder.threshold_a,
        "cauchy_l2": ladder.cauchy_l2,
        "cauchy_h1": ladder.cauchy_h1,
        "monotone_improvement": ladder.monotone_improvement,
        "fit_fraction": cfg.fit_fraction,
    })
}

/// Writes checkpoints, CSV series and `summary.ndjson` into `dir`; returns
/// the written paths relative to `dir`.
pub fn write_ladder(ladder: &ConstructionLadder, dir: &Path) -> Result<Vec<String>> {
    fs::create_dir_all(dir)?;
    let cfg = &ladder.config;
    let k = cfg.solitons.len();
    let dim = cfg.grid.dim();
    let mut written = Vec::new();
    let mut summary = Vec::new();
    for (n, (rung, report)) in ladder.rungs.iter().zip(&ladder.reports).enumerate() {
        let mut files = Vec::new();
        let diag = format!("diagnostics_{n}.csv");
        write_lines(&dir.join(&diag), &diagnostics_lines(rung, k, &cfg.s_list))?;
        files.push(diag);
        if cfg.modulate {
            let m = format!("modulation_{n}.csv");
            write_lines(&dir.join(&m), &modulation_lines(&rung.modulation, k, dim))?;
            files.push(m);
        }
        if let Some(u) = &rung.u_t0 {
            let c = format!("u_{n}_T0.zkc");
            Checkpoint { p: cfg.p, time: cfg.t0, field: u.clone() }.write_path(dir.join(&c))?;
            files.push(c);
        }
        summary.push(serde_json::to_string(&rung_summary(n, report, &files)?).expect("json value"));
        written.extend(files);
    }
    summary.push(serde_json::to_string(&ladder_summary(ladder)).expect("json value"));
    write_lines(&dir.join("summary.ndjson"), &summary)?;
    written.push("summary.ndjson".into());
    Ok(written)
}

/// Reads `summary.ndjson` back into JSON objects.
pub fn read_summary(path: impl AsRef<Path>) -> Result<Vec<Value>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| ZkError::Format(format!("summary line: {e}"))))
        .collect()
}

/// Parsed CSV: header and numeric rows.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let i = self
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ZkError::Format(format!("missing column `{name}`")))?;
        Ok(self.rows.iter().map(|r| r[i]).collect())
    }
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<CsvTable> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| ZkError::Format("empty CSV".into()))?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, l) in lines.enumerate() {
        let row: Vec<f64> = l
            .split(',')
            .map(|x| x.parse::<f64>().map_err(|e| ZkError::Format(format!("row {}: {e}", i + 1))))
            .collect::<Result<_>>()?;
        if row.len() != header.len() {
            return Err(ZkError::Format(format!("row {} has {} fields, header has {}", i + 1, row.len(), header.len())));
        }
        rows.push(row);
    }
    Ok(CsvTable { header, rows })
}

/// Writes a header plus rows of floats.
pub fn write_csv(path: impl AsRef<Path>, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut lines = vec![header.join(",")];
    lines.extend(rows.iter().map(|r| r.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(",")));
    write_lines(path.as_ref(), &lines)
}

pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    let mut f = File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    /// Path relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Record of one run, written last as `manifest.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    /// Verbatim configuration text or command line.
    pub config: String,
    pub grid_signature: Option<String>,
    pub wall_seconds: f64,
    pub steps: u64,
    pub status: String,
    pub error: Option<String>,
    pub outputs: Vec<OutputEntry>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

impl RunManifest {
    pub fn new(command: &str, config: &str) -> Self {
        RunManifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: config.into(),
            grid_signature: None,
            wall_seconds: 0.0,
            steps: 0,
            status: "ok".into(),
            error: None,
            outputs: Vec::new(),
        }
    }

    /// Digests `dir/rel` and records it.
    pub fn add_output(&mut self, dir: &Path, rel: &str) -> Result<()> {
        let path = dir.join(rel);
        let bytes = fs::metadata(&path)?.len();
        self.outputs.push(OutputEntry { path: rel.into(), sha256: sha256_file(&path)?, bytes });
        Ok(())
    }

    pub fn fail(&mut self, e: &ZkError) {
        self.status = e.kind().into();
        self.error = Some(e.to_string());
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join(MANIFEST_NAME);
        let text = serde_json::to_string_pretty(self).map_err(|e| ZkError::Format(e.to_string()))?;
        fs::write(&path, text + "\n")?;
        Ok(path)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_NAME))?;
        serde_json::from_str(&text).map_err(|e| ZkError::Format(format!("manifest: {e}")))
    }

    /// Checks that every listed output exists with the recorded digest.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for o in &self.outputs {
            let path = dir.join(&o.path);
            if !path.exists() {
                return Err(ZkError::Format(format!("manifest lists missing file {}", o.path)));
            }
            let digest = sha256_file(&path)?;
            if digest != o.sha256 {
                return Err(ZkError::Format(format!("digest mismatch for {}", o.path)));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
        assert_eq!(fmt_f64(f64::NAN), "nan");
        assert_eq!(fmt_f64(f64::NEG_INFINITY), "-inf");
    }

    #[test]
    fn headers() {
        assert_eq!(
            diagnostics_header(2, &[2, 3]).join(","),
            "t,M_1,M_2,E_1,E_2,Etilde_1,Etilde_2,h1_error,hs_error_2,hs_error_3,\
             mass_margin_1,mass_margin_2,etilde_margin_1,etilde_margin_2"
        );
        assert_eq!(
            modulation_header(2, 2, 4).join(","),
            "t,xtilde_1_1,xtilde_1_2,xtilde_2_1,xtilde_2_2,ctilde_1,ctilde_2,\
             residual_1,residual_2,residual_3,residual_4,jacobian_cond"
        );
    }
}
