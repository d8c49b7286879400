//! Threshold weight `η` and the functional `G_s`.

use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{broadcast_axis1, lab_axis1, HsAuditSample};
use crate::error::{Result, ZkError};
use crate::grid::Grid;
use crate::groundstate::{GroundStateCache, SolitonParams};
use crate::spectral::{self, derivative_multiplier, pairwise_sum_by, Field};

/// `η = 1 + Σ_k (A arctan(x_1 - c^k t - y_1^k) + π/2)` and `∂_1 η`.
#[derive(Clone, Debug)]
pub struct Threshold {
    pub a: f64,
    pub eta: Field,
    pub eta1: Field,
}

pub fn threshold_eta(grid: &Arc<Grid>, solitons: &[SolitonParams], t: f64, a: f64) -> Threshold {
    let x = lab_axis1(grid, t);
    let mut eta = vec![1.0; x.len()];
    let mut eta1 = vec![0.0; x.len()];
    for s in solitons {
        for (j, &x1) in x.iter().enumerate() {
            let z = x1 - s.c * t - s.y[0];
            eta[j] += a * z.atan() + FRAC_PI_2;
            eta1[j] += a / (1.0 + z * z);
        }
    }
    Threshold { a, eta: broadcast_axis1(grid, &eta), eta1: broadcast_axis1(grid, &eta1) }
}

/// `|f|^{p-1} + |∇f|^{p-1}` pointwise.
fn domination_target(f: &Field, p: u32) -> Vec<f64> {
    let grad = spectral::gradient(f);
    let e = p as f64 - 1.0;
    (0..f.values().len())
        .map(|i| {
            let g: f64 = grad.iter().map(|g| g.values()[i].powi(2)).sum::<f64>().sqrt();
            f.values()[i].abs().powf(e) + g.powf(e)
        })
        .collect()
}

/// Smallest power of two `A` with `A/(1+x_1²) ≥ |Q_c|^{p-1} + |∇Q_c|^{p-1}`
/// at every grid point, for every soliton speed (profiles centred at the
/// origin).
pub fn select_threshold_amplitude(
    cache: &GroundStateCache,
    solitons: &[SolitonParams],
    p: u32,
    grid: &Arc<Grid>,
) -> Result<f64> {
    let x1 = grid.coords(0);
    let row: usize = grid.points()[1..].iter().product();
    let mut need: f64 = 0.0;
    for s in solitons {
        let q = cache.get(s.c, p, grid)?;
        let target = domination_target(&q.profile, p);
        for (i, v) in target.iter().enumerate() {
            let x = x1[i / row];
            need = need.max(v * (1.0 + x * x));
        }
    }
    if need == 0.0 {
        return Ok(1.0);
    }
    let mut a = 2f64.powi(need.log2().floor() as i32 - 1);
    while a < need {
        a *= 2.0;
    }
    Ok(a)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DominationReport {
    pub holds: bool,
    /// `min (η_1 - |R|^{p-1} - |∇R|^{p-1})` over the grid.
    pub worst_gap: f64,
    /// Frame coordinates of the worst point.
    pub worst_point: Vec<f64>,
}

/// Checks `η_1 ≥ |R|^{p-1} + |∇R|^{p-1}` pointwise.
pub fn check_domination(eta1: &Field, r: &Field, p: u32) -> Result<DominationReport> {
    eta1.grid().check_same(r.grid())?;
    let target = domination_target(r, p);
    let mut worst = f64::INFINITY;
    let mut at = 0;
    for (i, (&e, &v)) in eta1.values().iter().zip(&target).enumerate() {
        if e - v < worst {
            worst = e - v;
            at = i;
        }
    }
    let grid = r.grid();
    let mut point = vec![0.0; grid.dim()];
    let mut rem = at;
    for a in (0..grid.dim()).rev() {
        let n = grid.points()[a];
        point[a] = grid.coords(a)[rem % n];
        rem /= n;
    }
    Ok(DominationReport { holds: worst >= 0.0, worst_gap: worst, worst_point: point })
}

/// `G_s = e^{-δ_1 t} + ‖v‖_{Ḣ^s}^{2-1/s} ‖v‖_{H^1}^{1/s} + ‖v‖_{Ḣ^s}² ‖v‖_{H^3} (1+‖v‖_{H^1})^{p-2}`.
pub fn gs_functional(v: &Field, s: u32, p: u32, delta1: f64, t: f64) -> Result<f64> {
    if s < 4 {
        return Err(ZkError::invalid(format!("G_s requires s >= 4, got {s}")));
    }
    let spec = spectral::forward(v);
    let hs = spectral::spectral_norm_sq(&spec, spectral::sobolev_weight(s as f64, true)).sqrt();
    let h1 = spectral::spectral_norm_sq(&spec, spectral::sobolev_weight(1.0, false)).sqrt();
    let h3 = spectral::spectral_norm_sq(&spec, spectral::sobolev_weight(3.0, false)).sqrt();
    Ok(gs_from_norms(s, p, delta1, t, hs, h1, h3))
}

pub(crate) fn gs_from_norms(s: u32, p: u32, delta1: f64, t: f64, hs: f64, h1: f64, h3: f64) -> f64 {
    let sf = s as f64;
    (-delta1 * t).exp()
        + hs.powf(2.0 - 1.0 / sf) * h1.powf(1.0 / sf)
        + hs * hs * h3 * (1.0 + h1).powi(p as i32 - 2)
}

/// All multi-indices `α` with `|α| = s` in `dim` dimensions together with
/// their multinomial weights `s!/α!`.
pub(crate) fn multinomial_indices(dim: usize, s: u32) -> Vec<(Vec<u32>, f64)> {
    fn rec(dim: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == dim - 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for a in 0..=left {
            cur.push(a);
            rec(dim, left - a, cur, out);
            cur.pop();
        }
    }
    let mut all = Vec::new();
    rec(dim, s, &mut Vec::new(), &mut all);
    let fact = |n: u32| (1..=n).map(|x| x as f64).product::<f64>();
    all.into_iter()
        .map(|alpha| {
            let w = fact(s) / alpha.iter().map(|&a| fact(a)).product::<f64>();
            (alpha, w)
        })
        .collect()
}

/// `∫ Σ_{|α|=s} (s!/α!) |∂^α v|² η_1`: the sum over all ordered multi-indices
/// `(i, l)` of length `s` of `∫ |v_{il}|² η_1`.
pub fn weighted_hs_density(v: &Field, eta1: &Field, s: u32) -> Result<f64> {
    v.grid().check_same(eta1.grid())?;
    let grid = v.grid();
    let spec = spectral::forward(v);
    let mut acc = vec![0.0; grid.len()];
    for (alpha, w) in multinomial_indices(grid.dim(), s) {
        let mult = derivative_multiplier(grid, &alpha);
        let mut d = spec.clone();
        for (c, m) in d.coeffs_mut().iter_mut().zip(&mult) {
            *c *= m;
        }
        let dv = spectral::inverse(&d);
        for (a, x) in acc.iter_mut().zip(dv.values()) {
            *a += w * x * x;
        }
    }
    let e = eta1.values();
    Ok(grid.cell_volume() * pairwise_sum_by(acc.len(), &|i| acc[i] * e[i]))
}

/// Builds the audit sample for the error `v` at time `t`.
pub fn hs_audit_sample(
    v: &Field,
    eta1: &Field,
    s: u32,
    p: u32,
    delta1: f64,
    t: f64,
) -> Result<HsAuditSample> {
    let weighted = weighted_hs_density(v, eta1, s)?;
    let gs = gs_functional(v, s, p, delta1, t)?;
    let spec = spectral::forward(v);
    let hs_minus1_sq = spectral::spectral_norm_sq(&spec, spectral::sobolev_weight(s as f64 - 1.0, true));
    Ok(HsAuditSample { t, weighted, gs, hs_minus1_sq })
}

/// Audit from synchronized field series `(t, v)` and `(t, η_1)`.
pub fn localized_hs_audit_fields(
    v_series: &[(f64, Field)],
    eta1_series: &[(f64, Field)],
    s: u32,
    p: u32,
    delta1: f64,
) -> Result<super::HsAuditVerdict> {
    if v_series.len() != eta1_series.len() {
        return Err(ZkError::invalid("error and threshold series differ in length"));
    }
    let mut samples = Vec::with_capacity(v_series.len());
    for ((t, v), (te, e)) in v_series.iter().zip(eta1_series) {
        if t.to_bits() != te.to_bits() {
            return Err(ZkError::invalid(format!("series are not synchronized ({t} vs {te})")));
        }
        samples.push(hs_audit_sample(v, e, s, p, delta1, *t)?);
    }
    super::localized_hs_audit(&samples, s)
}
