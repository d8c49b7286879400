//! Audits of the almost-monotonicity and localized smoothing estimates on
//! recorded time series.

use serde::{Deserialize, Serialize};

use super::LocalizedBudget;
use crate::error::{Result, ZkError};

/// Outcome of one almost-monotonicity check
/// `D(t) = Σ_{k≤κ} (X^k(S_n) - X^k(t)) ≥ -C L e^{-σ_0 t/(4L)}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityLine {
    /// `min_t D(t)`.
    pub worst_margin: f64,
    /// Time at which the worst margin occurs.
    pub worst_time: f64,
    /// Smallest `C ≥ 0` making the inequality hold at every sample.
    pub fitted_constant: f64,
    /// Largest accepted constant.
    pub cap: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityVerdict {
    pub kappa: usize,
    pub l: f64,
    pub mass: MonotonicityLine,
    pub energy: MonotonicityLine,
}

impl MonotonicityVerdict {
    pub fn passed(&self) -> bool {
        self.mass.passed && self.energy.passed
    }
}

fn check_monotone_times(times: &[f64]) -> Result<()> {
    if times.len() < 2 {
        return Err(ZkError::invalid("audit series needs at least two samples"));
    }
    let inc = times.windows(2).all(|w| w[1] > w[0]);
    let dec = times.windows(2).all(|w| w[1] < w[0]);
    if inc || dec {
        Ok(())
    } else {
        Err(ZkError::invalid("audit series times are not strictly monotone"))
    }
}

/// Checks the almost-monotonicity of `Σ_{k≤κ} M^k` and `Σ_{k≤κ} Ẽ^k`
/// (`kappa` is 1-based). The final time `S_n` is the largest sample time.
///
/// The fitted constant passes when it does not exceed `cap`; with `cap =
/// None` the natural size `Σ_{k≤κ} (M^k(S_n) + |E^k(S_n)|)` of the audited
/// quantities is used.
pub fn monotonicity_audit(
    series: &[LocalizedBudget],
    kappa: usize,
    l: f64,
    cap: Option<f64>,
) -> Result<MonotonicityVerdict> {
    let times: Vec<f64> = series.iter().map(|b| b.t).collect();
    check_monotone_times(&times)?;
    let k_count = series[0].mass.len();
    if kappa == 0 || kappa > k_count {
        return Err(ZkError::invalid(format!("kappa must lie in 1..={k_count}, got {kappa}")));
    }
    if series.iter().any(|b| b.mass.len() != k_count) {
        return Err(ZkError::invalid("audit series mixes different soliton counts"));
    }
    let last = series
        .iter()
        .max_by(|a, b| a.t.total_cmp(&b.t))
        .expect("series is nonempty");
    let sigma0 = last.sigma0;
    let partial = |v: &[f64]| v[..kappa].iter().sum::<f64>();
    let scale = partial(&last.mass) + last.energy[..kappa].iter().map(|e| e.abs()).sum::<f64>();
    let cap = cap.unwrap_or(scale);
    let line = |pick: &dyn Fn(&LocalizedBudget) -> f64| {
        let end = pick(last);
        let mut worst = f64::INFINITY;
        let mut worst_time = last.t;
        let mut constant: f64 = 0.0;
        for b in series {
            let d = end - pick(b);
            if d < worst {
                worst = d;
                worst_time = b.t;
            }
            let envelope = l * (-sigma0 * b.t / (4.0 * l)).exp();
            constant = constant.max(-d / envelope);
        }
        MonotonicityLine {
            worst_margin: worst,
            worst_time,
            fitted_constant: constant,
            cap,
            passed: constant.is_finite() && constant <= cap,
        }
    };
    Ok(MonotonicityVerdict {
        kappa,
        l,
        mass: line(&|b| partial(&b.mass)),
        energy: line(&|b| partial(&b.etilde)),
    })
}

/// Abel-summation decomposition of `Σ_k b^k (E^k + (c^k/2) M^k)` into
/// blocks `Σ_κ α_κ Σ_{k≤κ} Ẽ^k + β_κ Σ_{k≤κ} M^k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedDecomposition {
    pub b: Vec<f64>,
    /// `α_κ = b^κ - b^{κ+1}` (with `b^{K+1} = 0`).
    pub etilde_coeffs: Vec<f64>,
    /// `β_κ = ½(b^κ c^κ - b^{κ+1} c^{κ+1}) - (σ_0/4)(b^κ - b^{κ+1})`.
    pub mass_coeffs: Vec<f64>,
    /// `Σ_k b^k (E^k + (c^k/2) M^k)` evaluated directly.
    pub direct: f64,
    /// The same quantity rebuilt from the blocks.
    pub reconstructed: f64,
}

/// Block coefficients only, for speeds `c` and weights `b`.
pub fn weighted_block_coefficients(
    c: &[f64],
    b: &[f64],
    sigma0: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let k = c.len();
    if b.len() != k || k == 0 {
        return Err(ZkError::invalid("one weight per soliton is required"));
    }
    if b.iter().any(|&x| !(x > 0.0)) {
        return Err(ZkError::invalid("weights must be positive"));
    }
    for i in 1..k {
        if !(b[i] * c[i] < b[i - 1] * c[i - 1]) {
            return Err(ZkError::invalid(format!(
                "b^k c^k must be strictly decreasing (k = {} -> {})",
                i,
                i + 1
            )));
        }
    }
    let next = |v: &[f64], i: usize| if i + 1 < k { v[i + 1] } else { 0.0 };
    let bc: Vec<f64> = b.iter().zip(c).map(|(x, y)| x * y).collect();
    let alpha: Vec<f64> = (0..k).map(|i| b[i] - next(b, i)).collect();
    let beta: Vec<f64> =
        (0..k).map(|i| 0.5 * (bc[i] - next(&bc, i)) - 0.25 * sigma0 * alpha[i]).collect();
    for (i, (&a, &m)) in alpha.iter().zip(&beta).enumerate() {
        if a < 0.0 || m < 0.0 {
            return Err(ZkError::invalid(format!(
                "block {} has a negative coefficient (Ẽ: {a}, M: {m})",
                i + 1
            )));
        }
    }
    Ok((alpha, beta))
}

/// Decomposes the weighted energy; `b = None` selects `b^k = 1/(c^k)²`.
pub fn weighted_energy_identity(
    budget: &LocalizedBudget,
    c: &[f64],
    b: Option<&[f64]>,
) -> Result<WeightedDecomposition> {
    if budget.mass.len() != c.len() {
        return Err(ZkError::invalid("budget and speed list differ in length"));
    }
    let b: Vec<f64> = match b {
        Some(b) => b.to_vec(),
        None => c.iter().map(|x| 1.0 / (x * x)).collect(),
    };
    let (alpha, beta) = weighted_block_coefficients(c, &b, budget.sigma0)?;
    let direct: f64 = (0..c.len())
        .map(|k| b[k] * (budget.energy[k] + 0.5 * c[k] * budget.mass[k]))
        .sum();
    let mut reconstructed = 0.0;
    let (mut se, mut sm) = (0.0, 0.0);
    for k in 0..c.len() {
        se += budget.etilde[k];
        sm += budget.mass[k];
        reconstructed += alpha[k] * se + beta[k] * sm;
    }
    Ok(WeightedDecomposition { b, etilde_coeffs: alpha, mass_coeffs: beta, direct, reconstructed })
}

/// Per-time scalars entering the localized `Ḣ^s` audit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HsAuditSample {
    pub t: f64,
    /// `∫ Σ_{|α|=s} (s!/α!) |∂^α v|² η_1`.
    pub weighted: f64,
    /// `G_s(t)`.
    pub gs: f64,
    /// `‖v(t)‖²_{Ḣ^{s-1}}`.
    pub hs_minus1_sq: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HsAuditVerdict {
    pub s: u32,
    /// Largest ratio LHS/RHS over the full series.
    pub constant: f64,
    /// Same, using every other sample.
    pub constant_coarse: f64,
    pub passed: bool,
}

/// Ratio `∫_t^{S_n} weighted / (∫_t^{S_n} G_s + ‖v(t)‖²_{Ḣ^{s-1}})`
/// maximized over sample times, with trapezoidal time quadrature.
fn hs_constant(samples: &[HsAuditSample]) -> f64 {
    let n = samples.len();
    let mut lhs = 0.0;
    let mut rhs_int = 0.0;
    let mut worst: f64 = 0.0;
    for j in (0..n).rev() {
        if j + 1 < n {
            let dt = (samples[j + 1].t - samples[j].t).abs();
            lhs += 0.5 * dt * (samples[j].weighted + samples[j + 1].weighted);
            rhs_int += 0.5 * dt * (samples[j].gs + samples[j + 1].gs);
        }
        let rhs = rhs_int + samples[j].hs_minus1_sq;
        if lhs > 0.0 {
            worst = worst.max(if rhs > 0.0 { lhs / rhs } else { f64::INFINITY });
        }
    }
    worst
}

/// Audits the localized smoothing estimate on a scalar series. Passes when
/// the fitted constant is finite and agrees within a factor 2 with the one
/// obtained from the series decimated by two.
pub fn localized_hs_audit(samples: &[HsAuditSample], s: u32) -> Result<HsAuditVerdict> {
    let times: Vec<f64> = samples.iter().map(|x| x.t).collect();
    check_monotone_times(&times)?;
    if samples.len() < 5 {
        return Err(ZkError::invalid("localized Hs audit needs at least five samples"));
    }
    // Order by increasing time so the integrals run towards S_n.
    let mut ordered = samples.to_vec();
    ordered.sort_by(|a, b| a.t.total_cmp(&b.t));
    let constant = hs_constant(&ordered);
    let coarse: Vec<HsAuditSample> = ordered.iter().step_by(2).copied().collect();
    let constant_coarse = hs_constant(&coarse);
    let stable = if constant == 0.0 && constant_coarse == 0.0 {
        true
    } else {
        let r = constant / constant_coarse;
        r.is_finite() && (0.5..=2.0).contains(&r)
    };
    Ok(HsAuditVerdict {
        s,
        constant,
        constant_coarse,
        passed: constant.is_finite() && stable,
    })
}
