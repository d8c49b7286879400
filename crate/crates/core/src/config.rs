//! TOML run configuration.
//!
//! ```toml
//! [problem]
//! dim = 2
//! p = 2
//!
//! [[solitons]]
//! c = 1.0
//! y = [0.0, 0.0]
//!
//! [[solitons]]
//! c = 2.0
//!
//! [grid]
//! n = [512, 256]
//! box = [64.0, 32.0]
//! frame = 1.5
//!
//! [evolver]
//! dt = 5e-4
//! scheme = "etdrk4"
//!
//! [ladder]
//! T0 = 2.0
//! Sn = [6.0, 8.0, 10.0]
//!
//! [diagnostics]
//! s_list = [2, 3, 4]
//! cadence = 200
//! outdir = "out"
//! ```
//!
//! Every section except `problem` and `solitons` may be omitted.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::construction::ConstructionConfig;
use crate::error::{Result, ZkError};
use crate::evolution::Scheme;
use crate::grid::Grid;
use crate::groundstate::SolitonParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub dim: usize,
    pub p: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolitonSection {
    pub c: f64,
    /// Defaults to the origin.
    pub y: Option<Vec<f64>>,
    pub sigma: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n: Option<Vec<usize>>,
    #[serde(rename = "box")]
    pub box_lengths: Option<Vec<f64>>,
    /// Comoving frame speed; defaults to the mean of the extreme speeds.
    pub frame: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolverSection {
    pub dt: Option<f64>,
    pub scheme: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderSection {
    #[serde(rename = "T0")]
    pub t0: Option<f64>,
    #[serde(rename = "Sn")]
    pub sn: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    pub s_list: Option<Vec<u32>>,
    /// Steps between observations.
    pub cadence: Option<usize>,
    pub outdir: Option<PathBuf>,
    /// Observations between field snapshots (0 disables them).
    pub snapshot_every: Option<usize>,
    pub modulate: Option<bool>,
    /// Index of the localized smoothing audit (0 disables it).
    pub hs_audit: Option<u32>,
    pub cutoff_scale: Option<f64>,
    pub fit_fraction: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    problem: ProblemSection,
    solitons: Vec<SolitonSection>,
    #[serde(default)]
    grid: GridSection,
    #[serde(default)]
    evolver: EvolverSection,
    #[serde(default)]
    ladder: LadderSection,
    #[serde(default)]
    diagnostics: DiagnosticsSection,
}

/// Validated configuration with every default applied.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dim: usize,
    pub p: u32,
    pub solitons: Vec<SolitonParams>,
    pub n: Vec<usize>,
    pub box_lengths: Vec<f64>,
    pub frame: f64,
    pub dt: f64,
    pub scheme: Scheme,
    pub t0: f64,
    pub sn: Vec<f64>,
    pub s_list: Vec<u32>,
    pub cadence: usize,
    pub outdir: PathBuf,
    pub snapshot_every: usize,
    pub modulate: bool,
    pub hs_audit: Option<u32>,
    pub cutoff_scale: Option<f64>,
    pub fit_fraction: f64,
    /// The text the configuration was parsed from.
    pub source: String,
}

pub const DEFAULT_DT: f64 = 5e-4;
pub const DEFAULT_T0: f64 = 2.0;
pub const DEFAULT_SN: [f64; 3] = [6.0, 8.0, 10.0];
pub const DEFAULT_S_LIST: [u32; 3] = [2, 3, 4];
pub const DEFAULT_CADENCE: usize = 200;
pub const DEFAULT_SNAPSHOT_EVERY: usize = 10;
pub const DEFAULT_FIT_FRACTION: f64 = 2.0 / 3.0;

fn default_points(dim: usize) -> Vec<usize> {
    if dim == 2 {
        vec![512, 256]
    } else {
        vec![128, 64, 64]
    }
}

fn default_box(dim: usize) -> Vec<f64> {
    if dim == 2 {
        vec![64.0, 32.0]
    } else {
        vec![64.0, 32.0, 32.0]
    }
}

fn config_error(msg: impl Into<String>) -> ZkError {
    ZkError::InvalidConfig(msg.into())
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| config_error(e.message().to_string()))?;
    let ProblemSection { dim, p } = raw.problem;
    if !(dim == 2 || dim == 3) {
        return Err(ZkError::UnsupportedCase(format!("dimension {dim} (only 2 and 3 are modelled)")));
    }
    if !(p == 2 || p == 3) {
        return Err(ZkError::UnsupportedCase(format!("power p = {p} (only 2 and 3 are modelled)")));
    }
    if dim == 3 && p == 3 {
        return Err(ZkError::UnsupportedCase(
            "(d, p) = (3, 3): the cubic equation in three dimensions is outside the model's scope".into(),
        ));
    }
    if raw.solitons.is_empty() {
        return Err(config_error("at least one soliton is required"));
    }
    let mut solitons = Vec::with_capacity(raw.solitons.len());
    for s in &raw.solitons {
        let params = SolitonParams::new(s.c, s.y.clone().unwrap_or_else(|| vec![0.0; dim]), s.sigma.unwrap_or(1.0));
        params.validate(dim, p).map_err(|e| config_error(e.to_string()))?;
        solitons.push(params);
    }
    for w in solitons.windows(2) {
        if w[1].c == w[0].c {
            return Err(config_error(format!("duplicate soliton speed {}", w[0].c)));
        }
        if w[1].c < w[0].c {
            return Err(config_error(format!(
                "soliton speeds must be strictly increasing, got {} before {}",
                w[0].c, w[1].c
            )));
        }
    }

    let n = raw.grid.n.unwrap_or_else(|| default_points(dim));
    let box_lengths = raw.grid.box_lengths.unwrap_or_else(|| default_box(dim));
    if n.len() != dim || box_lengths.len() != dim {
        return Err(config_error(format!("grid.n and grid.box need {dim} entries")));
    }
    let frame = raw.grid.frame.unwrap_or_else(|| 0.5 * (solitons[0].c + solitons[solitons.len() - 1].c));
    Grid::new(&box_lengths, &n, frame).map_err(|e| config_error(e.to_string()))?;

    let dt = raw.evolver.dt.unwrap_or(DEFAULT_DT);
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(config_error(format!("evolver.dt must be positive, got {dt}")));
    }
    let scheme: Scheme = match &raw.evolver.scheme {
        Some(s) => s.parse().map_err(|e: ZkError| config_error(e.to_string()))?,
        None => Scheme::Etdrk4,
    };

    let t0 = raw.ladder.t0.unwrap_or(DEFAULT_T0);
    let sn = raw.ladder.sn.unwrap_or_else(|| DEFAULT_SN.to_vec());
    if sn.is_empty() || !sn.windows(2).all(|w| w[1] > w[0]) {
        return Err(config_error("ladder.Sn must be nonempty and strictly increasing"));
    }
    if !(t0.is_finite() && t0 < sn[0]) {
        return Err(config_error(format!("ladder.T0 = {t0} must precede every final time")));
    }

    let d = raw.diagnostics;
    let cadence = d.cadence.unwrap_or(DEFAULT_CADENCE);
    if cadence == 0 {
        return Err(config_error("diagnostics.cadence must be at least one step"));
    }
    let hs_audit = match d.hs_audit {
        None => Some(4),
        Some(0) => None,
        Some(s) if s >= 4 => Some(s),
        Some(s) => return Err(config_error(format!("diagnostics.hs_audit must be 0 or >= 4, got {s}"))),
    };
    let fit_fraction = d.fit_fraction.unwrap_or(DEFAULT_FIT_FRACTION);
    if !(fit_fraction > 0.0 && fit_fraction <= 1.0) {
        return Err(config_error("diagnostics.fit_fraction must lie in (0, 1]"));
    }
    Ok(RunConfig {
        dim,
        p,
        solitons,
        n,
        box_lengths,
        frame,
        dt,
        scheme,
        t0,
        sn,
        s_list: d.s_list.unwrap_or_else(|| DEFAULT_S_LIST.to_vec()),
        cadence,
        outdir: d.outdir.unwrap_or_else(|| PathBuf::from("out")),
        snapshot_every: d.snapshot_every.unwrap_or(DEFAULT_SNAPSHOT_EVERY),
        modulate: d.modulate.unwrap_or(true),
        hs_audit,
        cutoff_scale: d.cutoff_scale,
        fit_fraction,
        source: text.to_string(),
    })
}

pub fn read_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

impl RunConfig {
    pub fn grid(&self) -> Result<Arc<Grid>> {
        Ok(Arc::new(Grid::new(&self.box_lengths, &self.n, self.frame)?))
    }

    pub fn construction(&self) -> Result<ConstructionConfig> {
        Ok(ConstructionConfig {
            p: self.p,
            solitons: self.solitons.clone(),
            grid: self.grid()?,
            dt: self.dt,
            scheme: self.scheme,
            t0: self.t0,
            sn: self.sn.clone(),
            s_list: self.s_list.clone(),
            cadence: self.cadence,
            snapshot_every: self.snapshot_every,
            modulate: self.modulate,
            hs_audit: self.hs_audit,
            cutoff_scale: self.cutoff_scale,
            fit_fraction: self.fit_fraction,
        })
    }
}
