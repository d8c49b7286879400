//! Backward construction of multi-solitons: for each final time `S_n` the
//! data `R(S_n)` is integrated back to `T_0`, the error `u_n(t) - R(t)` is
//! recorded along the way, and the family `u_n(T_0)` is checked for the
//! Cauchy property.

use std::sync::Arc;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ZkError};
use crate::evolution::{ConservationObserver, Evolver, EvolverConfig, Observer, Scheme};
use crate::functionals::{
    self, gs_from_norms, localized_budget, monotonicity_audit, select_threshold_amplitude,
    threshold_eta, uniqueness_h_functional, uniqueness_weight_h, weighted_hs_density, CutoffFamily,
    HsAuditSample, HsAuditVerdict, LocalizedBudget, MonotonicityVerdict,
};
use crate::grid::Grid;
use crate::groundstate::{linear_fit, soliton_field_with, GroundStateCache, SolitonParams};
use crate::modulation::{parameter_drift_audit, DriftSample, DriftVerdict, ModulationMode, Modulator};
use crate::spectral::{self, Field};

/// Minimum number of samples in a decay fit.
pub const MIN_FIT_SAMPLES: usize = 10;

/// Least-squares fit `value ≈ A e^{-δ t}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub label: String,
    pub rate: f64,
    pub prefactor: f64,
    /// Root-mean-square residual of `ln value`.
    pub residual: f64,
    pub samples: usize,
    pub t_min: f64,
    pub t_max: f64,
    pub decaying: bool,
}

/// Rates at or below this are reported as non-decaying.
const NON_DECAYING_RATE: f64 = 1e-8;

/// Fits `(t, value)` pairs; every value must be positive.
pub fn fit_decay(label: &str, series: &[(f64, f64)]) -> Result<DecayFit> {
    if series.len() < MIN_FIT_SAMPLES {
        return Err(ZkError::invalid(format!(
            "decay fit needs at least {MIN_FIT_SAMPLES} samples, got {}",
            series.len()
        )));
    }
    if let Some((t, v)) = series.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
        return Err(ZkError::invalid(format!("decay fit value {v} at t={t} is not positive")));
    }
    let t: Vec<f64> = series.iter().map(|x| x.0).collect();
    let y: Vec<f64> = series.iter().map(|x| x.1.ln()).collect();
    let (slope, intercept, residual) = linear_fit(&t, &y);
    let rate = -slope;
    Ok(DecayFit {
        label: label.to_string(),
        rate,
        prefactor: intercept.exp(),
        residual,
        samples: series.len(),
        t_min: t.iter().cloned().fold(f64::INFINITY, f64::min),
        t_max: t.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        decaying: rate > NON_DECAYING_RATE,
    })
}

/// Comparison of a fitted rate with the guaranteed rate `σ_0^{3/2}/8`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryComparison {
    pub guaranteed_rate: f64,
    pub fitted_rate: f64,
    /// `fitted - guaranteed`.
    pub margin: f64,
    pub meets_guarantee: bool,
    pub fit_window: (f64, f64),
    pub prefactor: f64,
    pub fit_residual: f64,
}

pub fn guaranteed_rate(sigma0: f64) -> f64 {
    sigma0.powf(1.5) / 8.0
}

pub fn theory_comparison(fit: &DecayFit, sigma0: f64) -> TheoryComparison {
    let g = guaranteed_rate(sigma0);
    TheoryComparison {
        guaranteed_rate: g,
        fitted_rate: fit.rate,
        margin: fit.rate - g,
        meets_guarantee: fit.rate >= g,
        fit_window: (fit.t_min, fit.t_max),
        prefactor: fit.prefactor,
        fit_residual: fit.residual,
    }
}

/// Everything needed to run one ladder.
#[derive(Clone, Debug)]
pub struct ConstructionConfig {
    pub p: u32,
    pub solitons: Vec<SolitonParams>,
    /// Grid in the comoving frame.
    pub grid: Arc<Grid>,
    /// Step magnitude (the runs go backward).
    pub dt: f64,
    pub scheme: Scheme,
    pub t0: f64,
    /// Strictly increasing final times.
    pub sn: Vec<f64>,
    /// Homogeneous Sobolev indices whose error norms are recorded.
    pub s_list: Vec<u32>,
    /// Observation cadence in steps.
    pub cadence: usize,
    /// Keep a field snapshot every this many observations (0: none).
    pub snapshot_every: usize,
    pub modulate: bool,
    /// Index `s ≥ 4` of the localized smoothing audit, if requested.
    pub hs_audit: Option<u32>,
    /// Cut-off scale; defaults to the smallest admissible integer.
    pub cutoff_scale: Option<f64>,
    /// Fraction of `[T_0, S_n]`, starting at `T_0`, used by the decay fits.
    pub fit_fraction: f64,
}

impl ConstructionConfig {
    pub fn validate(&self) -> Result<()> {
        crate::groundstate::check_p(self.p)?;
        functionals::check_increasing(&self.solitons)?;
        for s in &self.solitons {
            s.validate(self.grid.dim(), self.p)?;
        }
        if self.grid.dim() == 3 && self.p == 3 {
            return Err(ZkError::UnsupportedCase("(d, p) = (3, 3) is outside the model's scope".into()));
        }
        if self.sn.is_empty() {
            return Err(ZkError::invalid("the ladder needs at least one final time"));
        }
        if !self.sn.windows(2).all(|w| w[1] > w[0]) {
            return Err(ZkError::invalid("final times S_n must be strictly increasing"));
        }
        if !(self.t0 < self.sn[0]) {
            return Err(ZkError::invalid(format!("T0 = {} must precede every S_n", self.t0)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(ZkError::invalid("time step magnitude must be positive"));
        }
        if self.cadence == 0 {
            return Err(ZkError::invalid("observation cadence must be at least one step"));
        }
        if let Some(s) = self.hs_audit {
            if s < 4 {
                return Err(ZkError::invalid(format!("localized audit index must be >= 4, got {s}")));
            }
        }
        if !(self.fit_fraction > 0.0 && self.fit_fraction <= 1.0) {
            return Err(ZkError::invalid("fit fraction must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn family(&self) -> Result<CutoffFamily> {
        match self.cutoff_scale {
            Some(l) => CutoffFamily::new(self.solitons.clone(), l),
            None => CutoffFamily::with_default_scale(self.solitons.clone()),
        }
    }

    pub fn sigma0(&self) -> f64 {
        functionals::sigma0(&self.solitons.iter().map(|s| s.c).collect::<Vec<_>>())
    }

    /// Same physics and sampling (used to compare ladders).
    pub fn compatible_with(&self, other: &ConstructionConfig) -> bool {
        self.p == other.p
            && self.solitons == other.solitons
            && self.grid.as_ref() == other.grid.as_ref()
            && self.t0.to_bits() == other.t0.to_bits()
    }
}

/// Norms entering the localized smoothing audit at one sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HsNorms {
    pub weighted: f64,
    pub hs: f64,
    pub h1: f64,
    pub h3: f64,
    pub hs_minus1_sq: f64,
}

/// One observation of a backward run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub t: f64,
    pub budget: LocalizedBudget,
    /// `‖u_n(t) - R(t)‖_{H¹}`.
    pub h1_error: f64,
    /// `‖u_n(t) - R(t)‖_{Ḣ^s}` for each requested `s`.
    pub hs_errors: Vec<f64>,
    pub hs_norms: Option<HsNorms>,
}

/// Modulation parameters at one observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulationRow {
    pub t: f64,
    pub xtilde: Vec<Vec<f64>>,
    pub ctilde: Vec<f64>,
    pub residuals: Vec<f64>,
    pub condition: f64,
    /// `Σ_k |x̃^k - c^k t e_1| + ‖w‖_{H¹}` over `‖u - R‖_{H¹}`; absent when the
    /// denominator vanishes.
    pub consistency: Option<f64>,
    /// Right side of the parameter drift bound.
    pub drift_rhs: f64,
}

/// Failure of one rung, kept so partial series survive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RungFailure {
    pub kind: String,
    pub message: String,
    pub t_last_good: Option<f64>,
}

impl RungFailure {
    fn from_error(e: &ZkError) -> Self {
        let (message, t_last_good) = match e {
            ZkError::BlowUpDetected { t_last_good, reason } => (reason.clone(), Some(*t_last_good)),
            _ => (e.to_string(), None),
        };
        RungFailure { kind: e.kind().to_string(), message, t_last_good }
    }
}

/// Result of one backward run `S_n -> T_0`.
#[derive(Clone, Debug)]
pub struct Rung {
    pub sn: f64,
    /// `u_n(T_0)`; absent when the run failed.
    pub u_t0: Option<Field>,
    /// Observations in increasing time.
    pub rows: Vec<DiagnosticRow>,
    pub modulation: Vec<ModulationRow>,
    pub modulation_failure: Option<String>,
    pub snapshots: Vec<(f64, Field)>,
    pub mass_drift: f64,
    pub energy_drift: f64,
    pub steps: u64,
    pub failure: Option<RungFailure>,
}

struct RunObserver<'a> {
    cfg: &'a ConstructionConfig,
    cache: &'a GroundStateCache,
    family: &'a CutoffFamily,
    modulator: Option<&'a Modulator>,
    threshold_a: Option<f64>,
    rows: Vec<DiagnosticRow>,
    modulation: Vec<ModulationRow>,
    modulation_failure: Option<String>,
    snapshots: Vec<(f64, Field)>,
    count: usize,
}

impl RunObserver<'_> {
    fn reference(&self, t: f64) -> Result<Field> {
        let mut sum = Field::zeros(self.cfg.grid.clone());
        for s in &self.cfg.solitons {
            sum.add_scaled_in_place(1.0, &soliton_field_with(self.cache, s, self.cfg.p, t, &self.cfg.grid)?);
        }
        Ok(sum)
    }
}

impl Observer for RunObserver<'_> {
    fn observe(&mut self, t: f64, u: &Field) -> Result<()> {
        let r = self.reference(t)?;
        let v = u.sub(&r)?;
        let spec = spectral::forward(&v);
        let h1_error = spectral_norm(&spec, 1.0, false);
        let hs_errors = self.cfg.s_list.iter().map(|&s| spectral_norm(&spec, s as f64, true)).collect();
        let hs_norms = match (self.cfg.hs_audit, self.threshold_a) {
            (Some(s), Some(a)) => {
                let eta = threshold_eta(&self.cfg.grid, &self.cfg.solitons, t, a);
                Some(HsNorms {
                    weighted: weighted_hs_density(&v, &eta.eta1, s)?,
                    hs: spectral_norm(&spec, s as f64, true),
                    h1: h1_error,
                    h3: spectral_norm(&spec, 3.0, false),
                    hs_minus1_sq: spectral_norm(&spec, s as f64 - 1.0, true).powi(2),
                })
            }
            _ => None,
        };
        let budget = localized_budget(u, self.family, t, self.cfg.p);
        self.rows.push(DiagnosticRow { t, budget, h1_error, hs_errors, hs_norms });

        if let (Some(m), None) = (self.modulator, &self.modulation_failure) {
            let guess = self.modulation.last().map(|r| (r.xtilde.clone(), r.ctilde.clone()));
            let res = match &guess {
                Some((x, c)) => m.modulate(u, t, Some((x, c))),
                None => m.modulate(u, t, None),
            };
            match res {
                Ok(state) => {
                    let consistency = if h1_error > 0.0 {
                        Some(m.consistency_ratio(&state, h1_error)?)
                    } else {
                        None
                    };
                    let drift_rhs = m.drift_sample(&state)?.rhs;
                    self.modulation.push(ModulationRow {
                        t,
                        xtilde: state.xtilde,
                        ctilde: state.ctilde,
                        residuals: state.ortho_residuals,
                        condition: state.jacobian_condition,
                        consistency,
                        drift_rhs,
                    });
                }
                Err(e) => {
                    warn!("modulation stopped at t={t}: {e}");
                    self.modulation_failure = Some(format!("t={t}: {e}"));
                }
            }
        }
        if self.cfg.snapshot_every > 0 && self.count.is_multiple_of(self.cfg.snapshot_every) {
            self.snapshots.push((t, u.clone()));
        }
        self.count += 1;
        Ok(())
    }
}

fn spectral_norm(s: &spectral::SpectralField, order: f64, homogeneous: bool) -> f64 {
    spectral::spectral_norm_sq(s, spectral::sobolev_weight(order, homogeneous)).sqrt()
}

/// Runs one rung; numerical failures are recorded, not returned.
pub fn run_rung(
    cfg: &ConstructionConfig,
    cache: &GroundStateCache,
    sn: f64,
    modulator: Option<&Modulator>,
    threshold_a: Option<f64>,
) -> Result<Rung> {
    let family = cfg.family()?;
    let grid = &cfg.grid;
    let mut u_sn = Field::zeros(grid.clone());
    for s in &cfg.solitons {
        u_sn.add_scaled_in_place(1.0, &soliton_field_with(cache, s, cfg.p, sn, grid)?);
    }
    let ecfg = EvolverConfig::new(-cfg.dt).with_frame_speed(grid.comoving_speed()).with_scheme(cfg.scheme);
    let mut evolver = Evolver::new(grid.clone(), cfg.p, ecfg)?;
    let mut obs = RunObserver {
        cfg,
        cache,
        family: &family,
        modulator,
        threshold_a,
        rows: Vec::new(),
        modulation: Vec::new(),
        modulation_failure: None,
        snapshots: Vec::new(),
        count: 0,
    };
    let mut cons = ConservationObserver::new(cfg.p);
    let started = Instant::now();
    let result = evolver.evolve(&u_sn, sn, cfg.t0, cfg.cadence, &mut [&mut obs, &mut cons]);
    info!("rung S_n={sn}: {} steps in {:.1?}", evolver.steps_taken(), started.elapsed());
    let (u_t0, failure) = match result {
        Ok(u) => (Some(u), None),
        Err(e) if e.is_numerical() => (None, Some(RungFailure::from_error(&e))),
        Err(e) => return Err(e),
    };
    let (mass_drift, energy_drift) = cons.max_relative_drift();
    let mut rows = obs.rows;
    rows.reverse();
    let mut modulation = obs.modulation;
    modulation.reverse();
    let mut snapshots = obs.snapshots;
    snapshots.reverse();
    Ok(Rung {
        sn,
        u_t0,
        rows,
        modulation,
        modulation_failure: obs.modulation_failure,
        snapshots,
        mass_drift,
        energy_drift,
        steps: evolver.steps_taken(),
        failure,
    })
}

/// Per-rung analysis written to the summary.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RungReport {
    pub sn: f64,
    pub steps: u64,
    pub failure: Option<RungFailure>,
    pub h1_error_t0: Option<f64>,
    pub sup_h1_error: f64,
    pub decay_h1: Option<DecayFit>,
    pub decay_hs: Vec<(u32, Option<DecayFit>)>,
    /// Fitted `Ḣ^s` rate over the `H¹` rate, per requested `s`.
    pub hs_rate_ratios: Vec<(u32, Option<f64>)>,
    pub theory: Option<TheoryComparison>,
    pub monotonicity: Vec<MonotonicityVerdict>,
    pub hs_audit: Option<HsAuditVerdict>,
    pub drift_audit: Option<DriftVerdict>,
    /// Largest observed consistency ratio `K_1`.
    pub consistency_max: Option<f64>,
    pub modulation_failure: Option<String>,
    pub mass_drift: f64,
    pub energy_drift: f64,
    /// `‖u_n(T_0) - u_{n-1}(T_0)‖` in `L²` and `H¹` (absent on the first rung).
    pub cauchy_l2: Option<f64>,
    pub cauchy_h1: Option<f64>,
}

/// Geometric model of the Cauchy differences along a ladder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CauchyFit {
    pub differences: Vec<f64>,
    /// Fitted ratio between consecutive differences.
    pub ratio: f64,
    /// Extrapolated `Σ_{m>last} d_m = d_last r/(1-r)` (infinite if `r ≥ 1`).
    pub tail: f64,
}

/// Fits `d_n ≈ d_0 r^n` by least squares on `ln d_n`.
pub fn cauchy_fit(differences: &[f64]) -> Option<CauchyFit> {
    if differences.len() < 2 || differences.iter().any(|d| !(*d > 0.0)) {
        return None;
    }
    let x: Vec<f64> = (0..differences.len()).map(|i| i as f64).collect();
    let y: Vec<f64> = differences.iter().map(|d| d.ln()).collect();
    let (slope, _, _) = linear_fit(&x, &y);
    let ratio = slope.exp();
    let last = *differences.last().expect("nonempty");
    let tail = if ratio < 1.0 { last * ratio / (1.0 - ratio) } else { f64::INFINITY };
    Some(CauchyFit { differences: differences.to_vec(), ratio, tail })
}

/// A completed ladder with its analysis.
#[derive(Clone, Debug)]
pub struct ConstructionLadder {
    pub config: ConstructionConfig,
    pub l: f64,
    pub threshold_a: Option<f64>,
    pub rungs: Vec<Rung>,
    pub reports: Vec<RungReport>,
    pub cauchy_l2: Option<CauchyFit>,
    pub cauchy_h1: Option<CauchyFit>,
    /// Soft audit: for `m > n`, `sup ‖u_m - R‖_{H¹}` over `[T_0, S_n]` against
    /// the `u_n` supremum plus the extrapolated tail.
    pub monotone_improvement: bool,
}

impl ConstructionLadder {
    /// First rung failure, as an error.
    pub fn first_failure(&self) -> Option<ZkError> {
        self.rungs.iter().find_map(|r| {
            r.failure.as_ref().map(|f| match f.t_last_good {
                Some(t) => ZkError::BlowUpDetected { t_last_good: t, reason: f.message.clone() },
                None => ZkError::ModulationFailure(f.message.clone()),
            })
        })
    }

    /// `u_N(T_0)` of the last completed rung: the best approximation of `U_0`.
    pub fn best_approximation(&self) -> Option<&Field> {
        self.rungs.iter().rev().find_map(|r| r.u_t0.as_ref())
    }

    /// Tail of the `H¹` Cauchy differences.
    pub fn tail_h1(&self) -> f64 {
        self.cauchy_h1.as_ref().map_or(f64::INFINITY, |c| c.tail)
    }
}

/// Runs every rung (concurrently) and analyses the ladder.
pub fn construct(cfg: &ConstructionConfig, cache: &GroundStateCache) -> Result<ConstructionLadder> {
    cfg.validate()?;
    let family = cfg.family()?;
    let modulator = if cfg.modulate {
        Some(Modulator::new(cache, &cfg.solitons, cfg.p, &cfg.grid, ModulationMode::for_power(cfg.p))?)
    } else {
        None
    };
    let threshold_a = match cfg.hs_audit {
        Some(_) => Some(select_threshold_amplitude(cache, &cfg.solitons, cfg.p, &cfg.grid)?),
        None => None,
    };
    for s in &cfg.solitons {
        for t in [cfg.t0, *cfg.sn.last().expect("validated")] {
            let clearance = crate::groundstate::boundary_clearance(s, t, &cfg.grid);
            if clearance < 6.0 {
                warn!("soliton c={} sits {clearance:.2} widths from the boundary at t={t}", s.c);
            }
        }
    }
    let rungs: Vec<Rung> = cfg
        .sn
        .par_iter()
        .map(|&sn| run_rung(cfg, cache, sn, modulator.as_ref(), threshold_a))
        .collect::<Result<_>>()?;
    analyse(cfg.clone(), family.l, threshold_a, rungs)
}

/// Builds the reports of a ladder from its rungs.
pub fn analyse(
    config: ConstructionConfig,
    l: f64,
    threshold_a: Option<f64>,
    rungs: Vec<Rung>,
) -> Result<ConstructionLadder> {
    let sigma0 = config.sigma0();
    let mut reports = Vec::with_capacity(rungs.len());
    let mut d_l2 = Vec::new();
    let mut d_h1 = Vec::new();
    for (n, rung) in rungs.iter().enumerate() {
        let prev = if n > 0 { rungs[n - 1].u_t0.as_ref() } else { None };
        let (cl2, ch1) = match (prev, rung.u_t0.as_ref()) {
            (Some(a), Some(b)) => {
                let d = b.sub(a)?;
                (Some(d.l2_norm()), Some(spectral::sobolev_norm(&d, 1.0, false)?))
            }
            _ => (None, None),
        };
        if let (Some(a), Some(b)) = (cl2, ch1) {
            d_l2.push(a);
            d_h1.push(b);
        }
        reports.push(rung_report(&config, l, rung, sigma0, cl2, ch1)?);
    }
    let cauchy_l2 = cauchy_fit(&d_l2);
    let cauchy_h1 = cauchy_fit(&d_h1);
    let tail = cauchy_h1.as_ref().map_or(f64::INFINITY, |c| c.tail);
    let mut monotone_improvement = true;
    for n in 0..rungs.len() {
        for m in n + 1..rungs.len() {
            let sup = |r: &Rung, until: f64| {
                r.rows.iter().filter(|x| x.t <= until + 1e-12).fold(0.0f64, |a, x| a.max(x.h1_error))
            };
            let sn = rungs[n].sn;
            if sup(&rungs[m], sn) > sup(&rungs[n], sn) + tail {
                monotone_improvement = false;
            }
        }
    }
    Ok(ConstructionLadder {
        config,
        l,
        threshold_a,
        rungs,
        reports,
        cauchy_l2,
        cauchy_h1,
        monotone_improvement,
    })
}

fn window_series(rows: &[DiagnosticRow], t0: f64, t_end: f64, value: impl Fn(&DiagnosticRow) -> f64) -> Vec<(f64, f64)> {
    rows.iter().filter(|r| r.t >= t0 - 1e-12 && r.t <= t_end + 1e-12).map(|r| (r.t, value(r))).collect()
}

fn rung_report(
    cfg: &ConstructionConfig,
    l: f64,
    rung: &Rung,
    sigma0: f64,
    cauchy_l2: Option<f64>,
    cauchy_h1: Option<f64>,
) -> Result<RungReport> {
    let t_end = cfg.t0 + cfg.fit_fraction * (rung.sn - cfg.t0);
    let complete = rung.failure.is_none();
    let decay_h1 = if complete {
        fit_decay("H1", &window_series(&rung.rows, cfg.t0, t_end, |r| r.h1_error)).ok()
    } else {
        None
    };
    let mut decay_hs = Vec::new();
    let mut hs_rate_ratios = Vec::new();
    for (i, &s) in cfg.s_list.iter().enumerate() {
        let fit = if complete {
            fit_decay(&format!("Hdot{s}"), &window_series(&rung.rows, cfg.t0, t_end, |r| r.hs_errors[i])).ok()
        } else {
            None
        };
        let ratio = match (&fit, &decay_h1) {
            (Some(a), Some(b)) if b.rate != 0.0 => Some(a.rate / b.rate),
            _ => None,
        };
        decay_hs.push((s, fit));
        hs_rate_ratios.push((s, ratio));
    }
    let theory = decay_h1.as_ref().map(|f| theory_comparison(f, sigma0));
    let mut monotonicity = Vec::new();
    if rung.rows.len() >= 2 {
        let budgets: Vec<LocalizedBudget> = rung.rows.iter().map(|r| r.budget.clone()).collect();
        for kappa in 1..=cfg.solitons.len() {
            monotonicity.push(monotonicity_audit(&budgets, kappa, l, None)?);
        }
    }
    let hs_audit = match cfg.hs_audit {
        Some(s) if complete && rung.rows.len() >= 5 => {
            let delta1 = decay_h1.as_ref().map(|f| f.rate).filter(|r| *r > 0.0).unwrap_or(guaranteed_rate(sigma0));
            let samples: Vec<HsAuditSample> = rung
                .rows
                .iter()
                .filter_map(|r| {
                    r.hs_norms.map(|n| HsAuditSample {
                        t: r.t,
                        weighted: n.weighted,
                        gs: gs_from_norms(s, cfg.p, delta1, r.t, n.hs, n.h1, n.h3),
                        hs_minus1_sq: n.hs_minus1_sq,
                    })
                })
                .collect();
            Some(functionals::localized_hs_audit(&samples, s)?)
        }
        _ => None,
    };
    let drift_audit = if rung.modulation.len() >= 5 && rung.modulation_failure.is_none() {
        let samples: Vec<_> = rung
            .modulation
            .iter()
            .map(|m| DriftSample { t: m.t, xtilde: m.xtilde.clone(), ctilde: m.ctilde.clone(), rhs: m.drift_rhs })
            .collect();
        Some(parameter_drift_audit(&samples)?)
    } else {
        None
    };
    let consistency_max = rung
        .modulation
        .iter()
        .filter_map(|m| m.consistency)
        .fold(None, |a: Option<f64>, v| Some(a.map_or(v, |x| x.max(v))));
    Ok(RungReport {
        sn: rung.sn,
        steps: rung.steps,
        failure: rung.failure.clone(),
        h1_error_t0: if complete { rung.rows.first().map(|r| r.h1_error) } else { None },
        sup_h1_error: rung.rows.iter().fold(0.0, |a, r| a.max(r.h1_error)),
        decay_h1,
        decay_hs,
        hs_rate_ratios,
        theory,
        monotonicity,
        hs_audit,
        drift_audit,
        consistency_max,
        modulation_failure: rung.modulation_failure.clone(),
        mass_drift: rung.mass_drift,
        energy_drift: rung.energy_drift,
        cauchy_l2,
        cauchy_h1,
    })
}

/// Comparison of two ladders built for the same solitons.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub difference_h1: f64,
    pub difference_l2: f64,
    pub tail_a: f64,
    pub tail_b: f64,
    /// `10 ×` the larger extrapolated tail.
    pub threshold: f64,
    pub passed: bool,
    /// `H(t)` on the common snapshot times of the two last rungs.
    pub h_series: Vec<(f64, f64)>,
    pub h_fit: Option<DecayFit>,
}

/// Checks that two ladders approach the same `U_0`.
pub fn uniqueness_crosscheck(a: &ConstructionLadder, b: &ConstructionLadder) -> Result<UniquenessReport> {
    if !a.config.compatible_with(&b.config) {
        return Err(ZkError::invalid(
            "ladders differ in solitons, power, grid or T0 and cannot be compared",
        ));
    }
    let (ua, ub) = match (a.best_approximation(), b.best_approximation()) {
        (Some(x), Some(y)) => (x, y),
        _ => return Err(ZkError::invalid("both ladders need a completed rung")),
    };
    let d = ub.sub(ua)?;
    let difference_h1 = spectral::sobolev_norm(&d, 1.0, false)?;
    let difference_l2 = d.l2_norm();
    let tail_a = a.tail_h1();
    let tail_b = b.tail_h1();
    let threshold = 10.0 * tail_a.max(tail_b);
    let family = a.config.family()?;
    let mut h_series = Vec::new();
    if let (Some(ra), Some(rb)) = (a.rungs.iter().rev().find(|r| r.u_t0.is_some()), b.rungs.iter().rev().find(|r| r.u_t0.is_some())) {
        for (t, fa) in &ra.snapshots {
            if let Some((_, fb)) = rb.snapshots.iter().find(|(tb, _)| (tb - t).abs() < 1e-9) {
                let z = fb.sub(fa)?;
                let h = uniqueness_weight_h(&a.config.grid, &family, *t);
                h_series.push((*t, uniqueness_h_functional(&z, fa, &h, a.config.p)?));
            }
        }
    }
    let positive: Vec<(f64, f64)> = h_series.iter().copied().filter(|x| x.1 > 0.0).collect();
    let h_fit = fit_decay("H", &positive).ok();
    Ok(UniquenessReport {
        difference_h1,
        difference_l2,
        tail_a,
        tail_b,
        threshold,
        passed: difference_h1.is_finite() && difference_h1 < threshold,
        h_series,
        h_fit,
    })
}

/// `R(S_n)` for the ladder configuration: the data every rung starts from.
pub fn final_data(cfg: &ConstructionConfig, cache: &GroundStateCache, sn: f64) -> Result<Field> {
    let mut u = Field::zeros(cfg.grid.clone());
    for s in &cfg.solitons {
        u.add_scaled_in_place(1.0, &soliton_field_with(cache, s, cfg.p, sn, &cfg.grid)?);
    }
    Ok(u)
}
