//! Ground states `Q_c` of `-cQ + ΔQ + Q^p = 0` and the soliton fields built
//! from them.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, OnceLock};

use log::{debug, warn};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{Result, ZkError};
use crate::grid::Grid;
use crate::spectral::{self, spectral_map, Field, Transform};

/// Default sup-norm tolerance for profiles produced through the cache.
pub const DEFAULT_TOL: f64 = 1e-12;
const MAX_ITERATIONS: usize = 2000;
const STABILIZER_TOL: f64 = 1e-12;
const STAGNATION_WINDOW: usize = 100;

/// Tolerance used for cached profiles: [`DEFAULT_TOL`], raised to the
/// round-off floor of the spectral Laplacian on fine grids.
pub fn cache_tolerance(c: f64, p: u32, grid: &Grid) -> f64 {
    let k2: f64 = (0..grid.dim()).map(|a| grid.max_wavenumber(a).powi(2)).sum();
    let peak = 5.0 * c.powf(1.0 / (p as f64 - 1.0));
    DEFAULT_TOL.max(4.0 * f64::EPSILON * peak * k2)
}

#[derive(Clone, Debug)]
pub struct GroundState {
    pub c: f64,
    pub p: u32,
    /// Profile centered at the origin of the grid (array index `n/2` per axis).
    pub profile: Field,
    /// `‖-cQ + ΔQ + Q^p‖_∞` of the returned profile.
    pub residual_norm: f64,
    pub iterations: usize,
    /// Final Petviashvili stabilizing factor.
    pub stabilizer: f64,
}

/// Parameters `(c, y, σ)` of one soliton `σ Q_c(x - c t e_1 - y)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolitonParams {
    pub c: f64,
    pub y: Vec<f64>,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
}

fn default_sigma() -> f64 {
    1.0
}

impl SolitonParams {
    pub fn new(c: f64, y: Vec<f64>, sigma: f64) -> Self {
        SolitonParams { c, y, sigma }
    }

    pub fn centered(c: f64, dim: usize) -> Self {
        SolitonParams { c, y: vec![0.0; dim], sigma: 1.0 }
    }

    pub(crate) fn validate(&self, dim: usize, p: u32) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(ZkError::invalid(format!("soliton speed must be positive, got {}", self.c)));
        }
        if self.y.len() != dim {
            return Err(ZkError::invalid(format!(
                "soliton shift has {} components, expected {dim}",
                self.y.len()
            )));
        }
        if self.sigma != 1.0 && self.sigma != -1.0 {
            return Err(ZkError::invalid(format!("soliton sign must be ±1, got {}", self.sigma)));
        }
        if self.sigma < 0.0 && p == 2 {
            return Err(ZkError::invalid("negative solitons exist only for p = 3"));
        }
        Ok(())
    }

    /// Soliton center at time `t` in the frame coordinates of `grid`
    /// (not wrapped into the box).
    pub fn center(&self, t: f64, grid: &Grid) -> Vec<f64> {
        let mut x = self.y.clone();
        x[0] += (self.c - grid.comoving_speed()) * t;
        x
    }
}

pub(crate) fn check_p(p: u32) -> Result<()> {
    if p == 2 || p == 3 {
        Ok(())
    } else {
        Err(ZkError::UnsupportedCase(format!("nonlinearity power p = {p} (supported: 2, 3)")))
    }
}

/// Pointwise residual `-cQ + ΔQ + Q^p`.
pub fn elliptic_residual(q: &Field, c: f64, p: u32) -> Field {
    let lap = spectral::laplacian(q);
    let values = q
        .values()
        .iter()
        .zip(lap.values())
        .map(|(&u, &l)| -c * u + l + u.powi(p as i32))
        .collect();
    Field::from_raw(q.grid().clone(), values)
}

/// Computes `Q_c` by Petviashvili iteration until the sup-norm residual of
/// the elliptic equation drops below `tol`.
pub fn solve_ground_state(c: f64, p: u32, grid: Arc<Grid>, tol: f64) -> Result<GroundState> {
    check_p(p)?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(ZkError::invalid(format!("ground-state speed must be positive, got {c}")));
    }
    if !(tol > 0.0) {
        return Err(ZkError::invalid("tolerance must be positive"));
    }
    let width = 1.0 / c.sqrt();
    for a in 0..grid.dim() {
        if grid.spacing(a) > width / 8.0 + 1e-15 {
            warn!(
                "axis {} spacing {} resolves the soliton width {width:.3} with fewer than 8 points",
                a + 1,
                grid.spacing(a)
            );
        }
    }

    let gamma = p as f64 / (p as f64 - 1.0);
    let t = Transform::new(&grid);
    let symbol: Vec<f64> = spectral_map(&grid, |m| c + m.k.iter().map(|k| k * k).sum::<f64>());
    let weights: Vec<f64> = spectral_map(&grid, |m| m.weight);
    let zero = Complex64::new(0.0, 0.0);

    let mut q = Field::from_fn(grid.clone(), |x| {
        (-0.5 * c * x.iter().map(|v| v * v).sum::<f64>()).exp()
    });
    let mut q_hat = vec![zero; grid.spectral_len()];
    let mut n_hat = vec![zero; grid.spectral_len()];
    let mut scratch = vec![zero; grid.spectral_len()];
    let mut pow = vec![0.0; grid.len()];
    let mut residual = f64::INFINITY;
    let mut best = f64::INFINITY;
    let mut best_at = 0;

    for it in 0..MAX_ITERATIONS {
        for (w, &u) in pow.iter_mut().zip(q.values()) {
            *w = u.powi(p as i32);
        }
        t.forward(q.values(), &mut q_hat);
        t.forward(&pow, &mut n_hat);

        // Residual of the current iterate, evaluated in Fourier space for
        // the linear part: -(c - Δ)Q + Q^p.
        for i in 0..scratch.len() {
            scratch[i] = n_hat[i] - q_hat[i] * symbol[i];
        }
        let mut res = vec![0.0; grid.len()];
        t.inverse(&mut scratch, &mut res);
        residual = res.iter().fold(0.0, |m: f64, v| m.max(v.abs()));

        let num = spectral::pairwise_sum_by(q_hat.len(), &|i| {
            weights[i] * symbol[i] * q_hat[i].norm_sqr()
        });
        let den = spectral::pairwise_sum_by(q_hat.len(), &|i| {
            weights[i] * (q_hat[i].conj() * n_hat[i]).re
        });
        let stabilizer = num / den;
        debug!("petviashvili it={it} residual={residual:e} S-1={:e}", stabilizer - 1.0);
        if !(residual.is_finite() && stabilizer.is_finite() && stabilizer > 0.0) {
            return Err(ZkError::ConvergenceFailure {
                what: "Petviashvili iteration",
                iterations: it,
                residual,
            });
        }
        if residual < tol && (stabilizer - 1.0).abs() < STABILIZER_TOL {
            return Ok(GroundState {
                c,
                p,
                profile: q,
                residual_norm: residual,
                iterations: it,
                stabilizer,
            });
        }
        if residual < 0.99 * best {
            best = residual;
            best_at = it;
        } else if it - best_at > STAGNATION_WINDOW {
            return Err(ZkError::ConvergenceFailure {
                what: "Petviashvili iteration (stagnated)",
                iterations: it,
                residual,
            });
        }
        let factor = stabilizer.powf(gamma);
        for i in 0..scratch.len() {
            scratch[i] = n_hat[i] * (factor / symbol[i]);
        }
        let mut next = vec![0.0; grid.len()];
        t.inverse(&mut scratch, &mut next);
        q = Field::from_raw(grid.clone(), next);
    }
    Err(ZkError::ConvergenceFailure {
        what: "Petviashvili iteration",
        iterations: MAX_ITERATIONS,
        residual,
    })
}

impl GroundState {
    pub fn peak(&self) -> f64 {
        self.profile.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `∫ Q²` (twice the conserved mass).
    pub fn l2_sq(&self) -> f64 {
        spectral::inner_product(&self.profile, &self.profile).expect("same grid")
    }

    /// Largest relative deviation from evenness in each coordinate about the
    /// center.
    pub fn asymmetry(&self) -> f64 {
        let grid = self.profile.grid();
        let vals = self.profile.values();
        let peak = self.peak();
        let pts = grid.points().to_vec();
        let mut worst: f64 = 0.0;
        for axis in 0..grid.dim() {
            let strides: Vec<usize> =
                (0..pts.len()).map(|a| pts[a + 1..].iter().product()).collect();
            spectral::for_each_index(&pts, |idx| {
                let mut mirror = 0;
                let mut flat = 0;
                for a in 0..pts.len() {
                    let j = idx[a];
                    let mj = if a == axis { (pts[a] - j) % pts[a] } else { j };
                    flat += j * strides[a];
                    mirror += mj * strides[a];
                }
                worst = worst.max((vals[flat] - vals[mirror]).abs() / peak);
            });
        }
        worst
    }

    /// `Q_{c'}` sampled on the same grid, obtained from this profile through
    /// `Q_{c'}(x) = (c'/c)^{1/(p-1)} Q_c(√(c'/c) x)` and Fourier interpolation.
    pub fn rescaled(&self, c_new: f64) -> Result<Field> {
        if !(c_new > 0.0) {
            return Err(ZkError::invalid("rescaled speed must be positive"));
        }
        let ratio = c_new / self.c;
        rescale_centered(&self.profile, ratio.sqrt(), ratio.powf(1.0 / (self.p as f64 - 1.0)))
    }

    /// `∂_c Q_c` by a centered difference in `c` with step `1e-4 c`, using
    /// the scaling relation.
    pub fn scaling_generator(&self) -> Result<Field> {
        let h = 1e-4 * self.c;
        let plus = self.rescaled(self.c + h)?;
        let minus = self.rescaled(self.c - h)?;
        Ok(plus.axpy(-1.0, &minus)?.scaled(0.5 / h))
    }
}

/// `amp · f(scale · x)` for a profile centred at the origin, by Fourier
/// interpolation. Targets beyond the box are clamped to its faces, so the
/// tail is continued by its boundary value instead of a periodic image.
pub(crate) fn rescale_centered(f: &Field, scale: f64, amp: f64) -> Result<Field> {
    let grid = f.grid();
    let targets: Vec<Vec<f64>> = (0..grid.dim())
        .map(|a| {
            let half = 0.5 * grid.box_lengths()[a];
            grid.coords(a).iter().map(|&x| (scale * x).clamp(-half, half)).collect()
        })
        .collect();
    let vals = spectral::eval_tensor(f, &targets)?;
    Ok(Field::from_raw(grid.clone(), vals.into_iter().map(|v| amp * v).collect()))
}

/// Exponential tail rates of `|Q|` fitted along coordinate rays.
#[derive(Clone, Debug, Serialize)]
pub struct DecayReport {
    /// Slope of the least-squares fit of `-ln|Q|` against `r`.
    pub rate: f64,
    /// Same fit after removing the `r^{-(d-1)/2}` algebraic prefactor.
    pub rate_compensated: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub samples: usize,
    /// Root-mean-square residual of the raw log-linear fit.
    pub fit_residual: f64,
}

/// Fits the decay rate of the profile over radii `[3, 8] / √c`.
pub fn decay_audit(q: &GroundState) -> Result<DecayReport> {
    let s = q.c.sqrt();
    decay_audit_window(&q.profile, 3.0 / s, 8.0 / s)
}

/// Fits `|f| ~ A e^{-δ r}` along the positive and negative coordinate axes
/// through the grid origin, using samples with `r` in `[r_min, r_max]`.
pub fn decay_audit_window(f: &Field, r_min: f64, r_max: f64) -> Result<DecayReport> {
    let grid = f.grid();
    let dim = grid.dim();
    let pts = grid.points();
    let vals = f.values();
    let strides: Vec<usize> = (0..dim).map(|a| pts[a + 1..].iter().product()).collect();
    let center: usize = (0..dim).map(|a| (pts[a] / 2) * strides[a]).sum();
    let mut rs = Vec::new();
    let mut logs = Vec::new();
    let mut any_above = false;
    for axis in 0..dim {
        let h = grid.spacing(axis);
        let half = pts[axis] / 2;
        for j in 1..half {
            let r = j as f64 * h;
            if r < r_min || r > r_max {
                continue;
            }
            for sign in [1i64, -1] {
                let idx = center as i64 + sign * (j * strides[axis]) as i64;
                let v = vals[idx as usize].abs();
                if v > 1e-14 {
                    any_above = true;
                    rs.push(r);
                    logs.push(v.ln());
                }
            }
        }
    }
    if !any_above || rs.len() < 3 {
        return Err(ZkError::InsufficientRange(format!(
            "profile tail below 1e-14 over radii [{r_min}, {r_max}]"
        )));
    }
    let (slope, _, resid) = linear_fit(&rs, &logs);
    let comp: Vec<f64> = rs
        .iter()
        .zip(&logs)
        .map(|(r, l)| l + 0.5 * (dim as f64 - 1.0) * r.ln())
        .collect();
    let (slope_c, _, _) = linear_fit(&rs, &comp);
    Ok(DecayReport {
        rate: -slope,
        rate_compensated: -slope_c,
        r_min,
        r_max,
        samples: rs.len(),
        fit_residual: resid,
    })
}

/// Least-squares line `y ≈ a x + b`; returns `(a, b, rms residual)`.
pub(crate) fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = spectral::pairwise_sum(x) / n;
    let my = spectral::pairwise_sum(y) / n;
    let sxy = spectral::pairwise_sum_by(x.len(), &|i| (x[i] - mx) * (y[i] - my));
    let sxx = spectral::pairwise_sum_by(x.len(), &|i| (x[i] - mx) * (x[i] - mx));
    let a = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let b = my - a * mx;
    let ss = spectral::pairwise_sum_by(x.len(), &|i| (y[i] - a * x[i] - b).powi(2));
    (a, b, (ss / n).sqrt())
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct CacheKey {
    dim: usize,
    p: u32,
    c_bits: u64,
    sampling: String,
}

/// Memoizes ground states by `(d, p, c, grid sampling)`. Optionally persists
/// profiles as checkpoint files in a directory.
pub struct GroundStateCache {
    entries: Mutex<HashMap<CacheKey, Arc<GroundState>>>,
    dir: Option<PathBuf>,
    tol: f64,
}

impl GroundStateCache {
    pub fn new(dir: Option<PathBuf>) -> Self {
        GroundStateCache { entries: Mutex::new(HashMap::new()), dir, tol: DEFAULT_TOL }
    }

    /// Process-wide in-memory cache.
    pub fn global() -> &'static GroundStateCache {
        static CACHE: OnceLock<GroundStateCache> = OnceLock::new();
        CACHE.get_or_init(|| GroundStateCache::new(None))
    }

    pub fn get(&self, c: f64, p: u32, grid: &Arc<Grid>) -> Result<Arc<GroundState>> {
        let sampling = grid.with_comoving_speed(0.0);
        let key = CacheKey { dim: grid.dim(), p, c_bits: c.to_bits(), sampling: sampling.signature() };
        let mut entries = self.entries.lock().expect("ground-state cache poisoned");
        if let Some(gs) = entries.get(&key) {
            return Ok(gs.clone());
        }
        let sampling = Arc::new(sampling);
        let gs = match self.load(&key, &sampling, c, p)? {
            Some(gs) => gs,
            None => {
                let tol = self.tol.max(cache_tolerance(c, p, &sampling));
                let gs = solve_ground_state(c, p, sampling, tol)?;
                self.store(&key, &gs)?;
                gs
            }
        };
        let gs = Arc::new(gs);
        entries.insert(key, gs.clone());
        Ok(gs)
    }

    fn path(&self, key: &CacheKey) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| {
            let name = format!("q_d{}_p{}_c{:016x}_{}.zkms", key.dim, key.p, key.c_bits, key.sampling);
            d.join(name.replace(['/', ' '], "_"))
        })
    }

    fn load(&self, key: &CacheKey, grid: &Arc<Grid>, c: f64, p: u32) -> Result<Option<GroundState>> {
        let Some(path) = self.path(key) else { return Ok(None) };
        if !path.exists() {
            return Ok(None);
        }
        let ck = Checkpoint::read_path(&path)?;
        let profile = ck.field.with_grid(grid.clone())?;
        let residual_norm = elliptic_residual(&profile, c, p).max_abs();
        Ok(Some(GroundState { c, p, profile, residual_norm, iterations: 0, stabilizer: 1.0 }))
    }

    fn store(&self, key: &CacheKey, gs: &GroundState) -> Result<()> {
        let Some(path) = self.path(key) else { return Ok(()) };
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        Checkpoint { p: gs.p, time: 0.0, field: gs.profile.clone() }.write_path(&path)
    }
}

/// Distance from a soliton center to the nearest box face along each axis,
/// in units of the soliton width `1/√c`. Below 6 the periodic tail overlap
/// is no longer negligible.
pub fn boundary_clearance(params: &SolitonParams, t: f64, grid: &Grid) -> f64 {
    let center = params.center(t, grid);
    let mut worst = f64::INFINITY;
    for a in 0..grid.dim() {
        let x = grid.wrap(a, center[a]);
        let d = 0.5 * grid.box_lengths()[a] - x.abs();
        worst = worst.min(d);
    }
    worst * params.c.sqrt()
}

/// `R(t, x) = σ Q_c(x - c t e_1 - y)` sampled in the frame of `grid`.
pub fn soliton_field(params: &SolitonParams, p: u32, t: f64, grid: &Arc<Grid>) -> Result<Field> {
    soliton_field_with(GroundStateCache::global(), params, p, t, grid)
}

pub fn soliton_field_with(
    cache: &GroundStateCache,
    params: &SolitonParams,
    p: u32,
    t: f64,
    grid: &Arc<Grid>,
) -> Result<Field> {
    params.validate(grid.dim(), p)?;
    let clearance = boundary_clearance(params, t, grid);
    if clearance < 6.0 {
        warn!(
            "soliton c={} at t={t} is {clearance:.2} widths from the box boundary; tail truncation is not negligible",
            params.c
        );
    }
    let gs = cache.get(params.c, p, grid)?;
    let centered = gs.profile.with_grid(grid.clone())?;
    let center = params.center(t, grid);
    let shifted = if center.iter().all(|&x| x == 0.0) {
        centered
    } else {
        spectral::translate(&centered, &center)?
    };
    Ok(if params.sigma < 0.0 { shifted.scaled(-1.0) } else { shifted })
}

/// Sum of soliton fields `R(t) = Σ_k R^k(t)`.
pub fn multi_soliton(solitons: &[SolitonParams], p: u32, t: f64, grid: &Arc<Grid>) -> Result<Field> {
    let mut sum = Field::zeros(grid.clone());
    for s in solitons {
        sum.add_scaled_in_place(1.0, &soliton_field(s, p, t, grid)?);
    }
    Ok(sum)
}
