//! Cut-off weights and localized functionals.
//!
//! Cut-offs depend only on the lab coordinate `x_1 = x_frame + V t`, so they
//! are stored as one profile along axis 1 and integrals against them reduce
//! to weighted sums of row sums.

mod audit;
mod threshold;

pub use audit::*;
pub use threshold::*;

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ZkError};
use crate::grid::Grid;
use crate::groundstate::SolitonParams;
use crate::spectral::{self, pairwise_sum, pairwise_sum_by, Field};

/// `ψ(x) = (2/π) arctan(e^{-x/L})`.
pub fn psi(x1: f64, l: f64) -> f64 {
    2.0 / PI * (-x1 / l).exp().atan()
}

/// First three derivatives of [`psi`], in closed form.
pub fn psi_derivatives(x1: f64, l: f64) -> [f64; 3] {
    let z = x1 / l;
    let sech = 1.0 / z.cosh();
    let tanh = z.tanh();
    let d1 = -sech / (PI * l);
    let d2 = sech * tanh / (PI * l * l);
    let d3 = sech * (sech * sech - tanh * tanh) / (PI * l * l * l);
    [d1, d2, d3]
}

/// `σ_0 = min(c^1, c^2 - c^1, ..., c^K - c^{K-1})`.
pub fn sigma0(speeds: &[f64]) -> f64 {
    let mut s = speeds.first().copied().unwrap_or(f64::INFINITY);
    for w in speeds.windows(2) {
        s = s.min(w[1] - w[0]);
    }
    s
}

/// Smallest integer `L ≥ 1` with `1/L² ≤ σ_0/4`.
pub fn default_cutoff_scale(sigma0: f64) -> f64 {
    let mut l = 1.0f64;
    while 1.0 / (l * l) > sigma0 / 4.0 {
        l += 1.0;
    }
    l
}

/// Cut-offs `φ^k` isolating each soliton, built from `ψ` centred at the
/// midpoints `m^k(t)` between consecutive solitons.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffFamily {
    pub l: f64,
    pub solitons: Vec<SolitonParams>,
}

impl CutoffFamily {
    pub fn new(solitons: Vec<SolitonParams>, l: f64) -> Result<Self> {
        if !(l >= 1.0 && l.is_finite()) {
            return Err(ZkError::invalid(format!("cut-off scale must be at least 1, got {l}")));
        }
        check_increasing(&solitons)?;
        Ok(CutoffFamily { l, solitons })
    }

    /// Family with the default scale derived from `σ_0`.
    pub fn with_default_scale(solitons: Vec<SolitonParams>) -> Result<Self> {
        check_increasing(&solitons)?;
        let l = default_cutoff_scale(sigma0(&speeds(&solitons)));
        CutoffFamily::new(solitons, l)
    }

    pub fn len(&self) -> usize {
        self.solitons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solitons.is_empty()
    }

    pub fn sigma0(&self) -> f64 {
        sigma0(&speeds(&self.solitons))
    }

    /// Midpoint `m^k(t)` between solitons `k` and `k+1` (0-based `k < K-1`),
    /// in lab coordinates.
    pub fn midpoint(&self, k: usize, t: f64) -> f64 {
        let (a, b) = (&self.solitons[k], &self.solitons[k + 1]);
        0.5 * (a.c + b.c) * t + 0.5 * (a.y[0] + b.y[0])
    }

    /// `φ^k(t, x_1)` at a lab coordinate (0-based `k`).
    pub fn phi_at(&self, k: usize, t: f64, x1_lab: f64) -> f64 {
        let kk = self.len();
        if kk == 1 {
            return 1.0;
        }
        let psi_k = |j: usize| psi(x1_lab - self.midpoint(j, t), self.l);
        if k == 0 {
            psi_k(0)
        } else if k == kk - 1 {
            1.0 - psi_k(kk - 2)
        } else {
            psi_k(k) - psi_k(k - 1)
        }
    }

    /// `∂_1 φ^k(t, x_1)` at a lab coordinate (0-based `k`).
    pub fn phi_derivative_at(&self, k: usize, t: f64, x1_lab: f64) -> f64 {
        let kk = self.len();
        if kk == 1 {
            return 0.0;
        }
        let dpsi = |j: usize| psi_derivatives(x1_lab - self.midpoint(j, t), self.l)[0];
        if k == 0 {
            dpsi(0)
        } else if k == kk - 1 {
            -dpsi(kk - 2)
        } else {
            dpsi(k) - dpsi(k - 1)
        }
    }

    /// Profiles of every `φ^k` along axis 1 of `grid` at time `t`.
    pub fn profiles(&self, t: f64, grid: &Grid) -> Vec<Vec<f64>> {
        let x = lab_axis1(grid, t);
        (0..self.len())
            .map(|k| x.iter().map(|&x1| self.phi_at(k, t, x1)).collect())
            .collect()
    }

    /// `φ^k` sampled as a full field.
    pub fn phi_field(&self, k: usize, t: f64, grid: &Arc<Grid>) -> Field {
        let x = lab_axis1(grid, t);
        let prof: Vec<f64> = x.iter().map(|&x1| self.phi_at(k, t, x1)).collect();
        broadcast_axis1(grid, &prof)
    }
}

fn speeds(solitons: &[SolitonParams]) -> Vec<f64> {
    solitons.iter().map(|s| s.c).collect()
}

pub(crate) fn check_increasing(solitons: &[SolitonParams]) -> Result<()> {
    if solitons.is_empty() {
        return Err(ZkError::invalid("at least one soliton is required"));
    }
    for w in solitons.windows(2) {
        if !(w[1].c > w[0].c) {
            return Err(ZkError::invalid(format!(
                "soliton speeds must be strictly increasing, got {} then {}",
                w[0].c, w[1].c
            )));
        }
    }
    Ok(())
}

/// Lab-frame coordinates of the axis-1 samples at time `t`.
pub fn lab_axis1(grid: &Grid, t: f64) -> Vec<f64> {
    let shift = grid.comoving_speed() * t;
    grid.coords(0).into_iter().map(|x| x + shift).collect()
}

/// Field equal to `profile[j]` on every sample with axis-1 index `j`.
pub fn broadcast_axis1(grid: &Arc<Grid>, profile: &[f64]) -> Field {
    let row: usize = grid.points()[1..].iter().product();
    let mut vals = Vec::with_capacity(grid.len());
    for &v in profile {
        vals.extend(std::iter::repeat_n(v, row));
    }
    Field::from_raw(grid.clone(), vals)
}

/// Pairwise sums of a field over each axis-1 slab.
pub(crate) fn slab_sums(grid: &Grid, values: &[f64]) -> Vec<f64> {
    let row: usize = grid.points()[1..].iter().product();
    values.chunks(row).map(pairwise_sum).collect()
}

/// `∫ f φ` for a profile `φ` along axis 1, given the slab sums of `f`.
pub(crate) fn weighted_integral(grid: &Grid, slabs: &[f64], profile: &[f64]) -> f64 {
    grid.cell_volume() * pairwise_sum_by(slabs.len(), &|j| slabs[j] * profile[j])
}

/// Localized masses and energies at one instant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizedBudget {
    pub t: f64,
    /// `M^k = ∫ u² φ^k`.
    pub mass: Vec<f64>,
    /// `E^k = ∫ (½|∇u|² - u^{p+1}/(p+1)) φ^k`.
    pub energy: Vec<f64>,
    /// `Ẽ^k = E^k + (σ_0/4) M^k`.
    pub etilde: Vec<f64>,
    pub sigma0: f64,
}

/// Evaluates `M^k`, `E^k`, `Ẽ^k` for `u` at time `t`.
pub fn localized_budget(u: &Field, fam: &CutoffFamily, t: f64, p: u32) -> LocalizedBudget {
    let grad = spectral::gradient(u);
    localized_budget_with_gradient(u, &grad, fam, t, p)
}

pub(crate) fn localized_budget_with_gradient(
    u: &Field,
    grad: &[Field],
    fam: &CutoffFamily,
    t: f64,
    p: u32,
) -> LocalizedBudget {
    let grid = u.grid();
    let v = u.values();
    let sq: Vec<f64> = v.iter().map(|x| x * x).collect();
    let dens: Vec<f64> = (0..v.len())
        .map(|i| {
            let g2: f64 = grad.iter().map(|g| g.values()[i] * g.values()[i]).sum();
            0.5 * g2 - v[i].powi(p as i32 + 1) / (p as f64 + 1.0)
        })
        .collect();
    let sq_slabs = slab_sums(grid, &sq);
    let e_slabs = slab_sums(grid, &dens);
    let profiles = fam.profiles(t, grid);
    let s0 = fam.sigma0();
    let mass: Vec<f64> = profiles.iter().map(|ph| weighted_integral(grid, &sq_slabs, ph)).collect();
    let energy: Vec<f64> = profiles.iter().map(|ph| weighted_integral(grid, &e_slabs, ph)).collect();
    let etilde = mass.iter().zip(&energy).map(|(m, e)| e + 0.25 * s0 * m).collect();
    LocalizedBudget { t, mass, energy, etilde, sigma0: s0 }
}

/// Uniqueness weight `h = Σ_k φ^k / c^k` sampled on the grid.
pub fn uniqueness_weight_h(grid: &Arc<Grid>, fam: &CutoffFamily, t: f64) -> Field {
    let prof = uniqueness_weight_profile(grid, fam, t);
    broadcast_axis1(grid, &prof)
}

fn uniqueness_weight_profile(grid: &Grid, fam: &CutoffFamily, t: f64) -> Vec<f64> {
    let x = lab_axis1(grid, t);
    x.iter()
        .map(|&x1| {
            (0..fam.len()).map(|k| fam.phi_at(k, t, x1) / fam.solitons[k].c).sum::<f64>()
        })
        .collect()
}

/// Largest deviation `|h - 1/c^k|` over the `k`-th plateau interval, for
/// every soliton, sampled along the lab `x_1` axis of the grid.
pub fn uniqueness_plateau_deviation(grid: &Grid, fam: &CutoffFamily, t: f64) -> Vec<f64> {
    let kk = fam.len();
    let x = lab_axis1(grid, t);
    let h = uniqueness_weight_profile(grid, fam, t);
    let center = |k: usize| fam.solitons[k].c * t + fam.solitons[k].y[0];
    (0..kk)
        .map(|k| {
            let lo = if k == 0 { f64::NEG_INFINITY } else { 0.5 * (fam.midpoint(k - 1, t) + center(k)) };
            let hi = if k == kk - 1 { f64::INFINITY } else { 0.5 * (fam.midpoint(k, t) + center(k)) };
            let target = 1.0 / fam.solitons[k].c;
            x.iter()
                .zip(&h)
                .filter(|(&x1, _)| x1 >= lo && x1 <= hi)
                .fold(0.0, |m: f64, (_, &hv)| m.max((hv - target).abs()))
        })
        .collect()
}

/// `H(t) = ∫ (|∇z|² - F(z)) h + z²` with
/// `F = 2(G(z + R*) - G(R*) - G'(R*) z)` and `G(u) = u^{p+1}/(p+1)`.
pub fn uniqueness_h_functional(z: &Field, rstar: &Field, h: &Field, p: u32) -> Result<f64> {
    z.grid().check_same(rstar.grid())?;
    z.grid().check_same(h.grid())?;
    let grad = spectral::gradient(z);
    let (zv, rv, hv) = (z.values(), rstar.values(), h.values());
    let q = p as i32 + 1;
    let pf = p as f64 + 1.0;
    let dens = |i: usize| {
        let g2: f64 = grad.iter().map(|g| g.values()[i] * g.values()[i]).sum();
        let (zi, ri) = (zv[i], rv[i]);
        // G(z+R) - G(R) - G'(R) z, expanded to avoid cancellation for small z.
        let taylor = match p {
            2 => ri * zi * zi + zi * zi * zi / 3.0,
            3 => 1.5 * ri * ri * zi * zi + ri * zi * zi * zi + 0.25 * zi.powi(4),
            _ => ((zi + ri).powi(q) - ri.powi(q)) / pf - ri.powi(p as i32) * zi,
        };
        (g2 - 2.0 * taylor) * hv[i] + zi * zi
    };
    Ok(z.grid().cell_volume() * pairwise_sum_by(zv.len(), &dens))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psi_values_and_derivatives() {
        assert!((psi(0.0, 3.0) - 0.5).abs() < 1e-16);
        assert!((psi(-1e4, 1.0) - 1.0).abs() < 1e-16);
        assert!(psi(1e4, 1.0).abs() < 1e-16);
        let l = 1.7;
        let h = 1e-4;
        for &x in &[-3.0, -0.4, 0.0, 1.1, 5.0] {
            let d = psi_derivatives(x, l);
            let fd1 = (psi(x + h, l) - psi(x - h, l)) / (2.0 * h);
            assert!((d[0] - fd1).abs() < 1e-8);
            let fd3 = (psi_derivatives(x + h, l)[1] - psi_derivatives(x - h, l)[1]) / (2.0 * h);
            assert!((d[2] - fd3).abs() < 1e-7);
        }
    }

    #[test]
    fn default_scale() {
        assert_eq!(default_cutoff_scale(1.0), 2.0);
        assert_eq!(default_cutoff_scale(4.0), 1.0);
        assert_eq!(default_cutoff_scale(0.5), 3.0);
    }

    #[test]
    fn sigma0_examples() {
        assert_eq!(sigma0(&[1.0, 2.0]), 1.0);
        assert_eq!(sigma0(&[1.0, 1.5, 4.0]), 0.5);
        assert_eq!(sigma0(&[0.3]), 0.3);
    }
}
