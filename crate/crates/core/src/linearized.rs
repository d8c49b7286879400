//! The linearized operator `L_c = -Δ + c - p Q_c^{p-1}` around a ground
//! state, its low spectrum, and the localized coercivity forms.
//!
//! Everything is matrix-free: operators act through FFTs and eigenproblems
//! are solved by preconditioned iterations on flat sample vectors with the
//! Euclidean inner product (the cell volume cancels in every Rayleigh
//! quotient).

use std::sync::Arc;

use log::debug;
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ZkError};
use crate::functionals::{broadcast_axis1, lab_axis1, CutoffFamily};
use crate::grid::Grid;
use crate::groundstate::{check_p, GroundState, GroundStateCache, SolitonParams};
use crate::spectral::{self, pairwise_sum_by, spectral_map, Field};

/// Default Rayleigh-residual tolerance for [`LinearizedOperator::ground_eigenpair`].
pub const EIGEN_TOL: f64 = 1e-10;
const MAX_INVERSE_ITERATIONS: usize = 500;
const PCG_REL_TOL: f64 = 1e-13;
const PCG_MAX_ITERATIONS: usize = 2000;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    pairwise_sum_by(a.len(), &|i| a[i] * b[i])
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Applies a real, even Fourier multiplier to raw samples.
fn apply_symbol(grid: &Arc<Grid>, symbol: &[f64], v: &[f64]) -> Vec<f64> {
    let mut s = spectral::forward(&Field::from_raw(grid.clone(), v.to_vec()));
    for (c, m) in s.coeffs_mut().iter_mut().zip(symbol) {
        *c *= m;
    }
    spectral::inverse(&s).into_values()
}

/// First derivatives of raw samples along every axis, Nyquist modes removed.
fn raw_gradient(grid: &Arc<Grid>, v: &[f64]) -> Vec<Vec<f64>> {
    spectral::gradient(&Field::from_raw(grid.clone(), v.to_vec()))
        .into_iter()
        .map(Field::into_values)
        .collect()
}

/// `Σ_a ∂_a(g ∂_a v)` for a weight `g`, with the Nyquist-free first
/// derivative on both sides so the result is the exact adjoint form.
fn weighted_div_grad(grid: &Arc<Grid>, g: &[f64], v: &[f64]) -> Vec<f64> {
    let dim = grid.dim();
    let grads = raw_gradient(grid, v);
    let mut acc = spectral::SpectralField::from_raw(
        grid.clone(),
        vec![Complex64::new(0.0, 0.0); grid.spectral_len()],
    );
    for (a, da) in grads.into_iter().enumerate() {
        let weighted: Vec<f64> = da.iter().zip(g).map(|(x, w)| x * w).collect();
        let s = spectral::forward(&Field::from_raw(grid.clone(), weighted));
        let mut orders = vec![0u32; dim];
        orders[a] = 1;
        let mult = spectral::derivative_multiplier(grid, &orders);
        for ((o, c), m) in acc.coeffs_mut().iter_mut().zip(s.coeffs()).zip(&mult) {
            *o += c * m;
        }
    }
    spectral::inverse(&acc).into_values()
}

/// `L_c = -Δ + c - V` with a nonnegative potential `V` (normally `p Q_c^{p-1}`).
#[derive(Clone, Debug)]
pub struct LinearizedOperator {
    pub c: f64,
    pub p: u32,
    pub potential: Field,
    q: Option<Field>,
    free_symbol: Vec<f64>,
}

/// Low spectrum of a linearized operator.
#[derive(Clone, Debug)]
pub struct SpectralSummary {
    /// `λ_0 > 0` with `-λ_0` the ground eigenvalue.
    pub lambda0: f64,
    /// Ground eigenfunction, `‖Z‖_{L²} = 1`, nonnegative mean.
    pub z: Field,
    /// `‖L Z + λ_0 Z‖_{L²}`.
    pub rayleigh_residual: f64,
    pub iterations: usize,
    /// `‖L ∂_i Q‖_{L²}` per axis; empty without a ground state.
    pub kernel_residuals: Vec<f64>,
}

impl LinearizedOperator {
    /// Operator around a computed ground state.
    pub fn new(gs: &GroundState) -> Self {
        let p = gs.p;
        let potential = gs.profile.map(|q| p as f64 * q.powi(p as i32 - 1));
        let free_symbol = free_symbol(gs.profile.grid(), gs.c);
        LinearizedOperator { c: gs.c, p, potential, q: Some(gs.profile.clone()), free_symbol }
    }

    /// Operator with an explicit potential, which must be nonnegative.
    pub fn from_potential(c: f64, p: u32, potential: Field) -> Result<Self> {
        check_p(p)?;
        if !(c > 0.0 && c.is_finite()) {
            return Err(ZkError::invalid(format!("speed must be positive, got {c}")));
        }
        if potential.values().iter().any(|&v| !(v >= 0.0)) {
            return Err(ZkError::invalid("potential must be nonnegative"));
        }
        let free_symbol = free_symbol(potential.grid(), c);
        Ok(LinearizedOperator { c, p, potential, q: None, free_symbol })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.potential.grid()
    }

    /// The ground state the operator was built from, if any.
    pub fn ground_state(&self) -> Option<&Field> {
        self.q.as_ref()
    }

    /// `L v = -Δv + c v - V v`.
    pub fn apply(&self, v: &Field) -> Result<Field> {
        self.grid().check_same(v.grid())?;
        Ok(Field::from_raw(v.grid().clone(), self.apply_raw(v.values())))
    }

    pub(crate) fn apply_raw(&self, v: &[f64]) -> Vec<f64> {
        let mut out = apply_symbol(self.grid(), &self.free_symbol, v);
        for ((o, x), w) in out.iter_mut().zip(v).zip(self.potential.values()) {
            *o -= w * x;
        }
        out
    }

    /// `⟨L v, v⟩`.
    pub fn quadratic_form(&self, v: &Field) -> Result<f64> {
        spectral::inner_product(&self.apply(v)?, v)
    }

    /// `(L - σ) x = b` by conjugate gradients preconditioned with
    /// `(-Δ + c - σ)^{-1}`; requires `L - σ` positive definite.
    fn solve_shifted(&self, sigma: f64, b: &[f64], x0: &[f64]) -> Result<Vec<f64>> {
        let grid = self.grid();
        let pre: Vec<f64> = self.free_symbol.iter().map(|s| 1.0 / (s - sigma)).collect();
        let op = |v: &[f64]| {
            let mut y = self.apply_raw(v);
            for (o, x) in y.iter_mut().zip(v) {
                *o -= sigma * x;
            }
            y
        };
        let bnorm = norm(b);
        if bnorm == 0.0 {
            return Ok(vec![0.0; b.len()]);
        }
        let mut x = x0.to_vec();
        let ax = op(&x);
        let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let mut z = apply_symbol(grid, &pre, &r);
        let mut d = z.clone();
        let mut rz = dot(&r, &z);
        for _ in 0..PCG_MAX_ITERATIONS {
            if norm(&r) <= PCG_REL_TOL * bnorm {
                return Ok(x);
            }
            let ad = op(&d);
            let alpha = rz / dot(&d, &ad);
            for i in 0..x.len() {
                x[i] += alpha * d[i];
                r[i] -= alpha * ad[i];
            }
            z = apply_symbol(grid, &pre, &r);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..d.len() {
                d[i] = z[i] + beta * d[i];
            }
        }
        let rel = norm(&r) / bnorm;
        // Round-off floors of strongly varying potentials sit just above the
        // target; anything that small is still a usable solve.
        if rel < 1e-10 {
            Ok(x)
        } else {
            Err(ZkError::ConvergenceFailure {
                what: "preconditioned CG",
                iterations: PCG_MAX_ITERATIONS,
                residual: rel,
            })
        }
    }

    /// `(-λ_0, Z)` by inverse iteration shifted below the spectrum.
    pub fn ground_eigenpair(&self, tol: f64) -> Result<SpectralSummary> {
        let grid = self.grid().clone();
        let vmax = self.potential.max_abs();
        let sigma = self.c - vmax - 0.1;
        let cell = grid.cell_volume();
        let start = match &self.q {
            Some(q) => q.values().to_vec(),
            None if vmax > 0.0 => self.potential.values().to_vec(),
            None => vec![1.0; grid.len()],
        };
        let unit = |v: Vec<f64>| {
            let n = (cell * dot(&v, &v)).sqrt();
            v.into_iter().map(|x| x / n).collect::<Vec<f64>>()
        };
        let mut x = unit(start);
        let mut best = f64::INFINITY;
        let mut best_at = 0;
        for it in 1..=MAX_INVERSE_ITERATIONS {
            let y = self.solve_shifted(sigma, &x, &x)?;
            x = unit(y);
            let lx = self.apply_raw(&x);
            let lambda = cell * dot(&lx, &x);
            let res: Vec<f64> = lx.iter().zip(&x).map(|(a, b)| a - lambda * b).collect();
            let residual = (cell * dot(&res, &res)).sqrt();
            if residual < tol {
                if dot(&x, &vec![1.0; x.len()]) < 0.0 {
                    x.iter_mut().for_each(|v| *v = -*v);
                }
                debug!("ground eigenpair: lambda = {lambda}, {it} iterations");
                let z = Field::from_raw(grid.clone(), x);
                let kernel_residuals = self.kernel_residuals()?;
                return Ok(SpectralSummary {
                    lambda0: -lambda,
                    z,
                    rayleigh_residual: residual,
                    iterations: it,
                    kernel_residuals,
                });
            }
            if residual < 0.5 * best {
                best = residual;
                best_at = it;
            } else if it - best_at > 50 {
                return Err(ZkError::ConvergenceFailure {
                    what: "shifted inverse iteration",
                    iterations: it,
                    residual,
                });
            }
        }
        Err(ZkError::ConvergenceFailure {
            what: "shifted inverse iteration",
            iterations: MAX_INVERSE_ITERATIONS,
            residual: best,
        })
    }

    /// `‖L ∂_i Q‖_{L²}` for every axis.
    pub fn kernel_residuals(&self) -> Result<Vec<f64>> {
        let Some(q) = &self.q else { return Ok(Vec::new()) };
        spectral::gradient(q)
            .iter()
            .map(|d| Ok(self.apply(d)?.l2_norm()))
            .collect()
    }

    /// `inf ⟨L v, v⟩/‖v‖²` over `v` orthogonal to every constraint field.
    pub fn constrained_infimum(&self, constraints: &[Field], tol: f64) -> Result<ConstrainedMinimum> {
        let grid = self.grid().clone();
        for g in constraints {
            grid.check_same(g.grid())?;
        }
        let basis = orthonormalize(constraints.iter().map(|g| g.values().to_vec()).collect());
        let pre: Vec<f64> = self.free_symbol.iter().map(|s| 1.0 / s).collect();
        let apply = |v: &[f64]| self.apply_raw(v);
        let precond = |v: &[f64]| apply_symbol(&grid, &pre, v);
        let x0 = generic_start(&grid);
        let (value, x, iterations) = lobpcg_min(&apply, Some(&precond), &basis, x0, tol)?;
        Ok(ConstrainedMinimum { value, minimizer: Field::from_raw(grid, x), iterations })
    }
}

fn free_symbol(grid: &Grid, c: f64) -> Vec<f64> {
    spectral_map(grid, |m| c + m.k.iter().map(|k| k * k).sum::<f64>())
}

/// Eigenpair of the operator around the cached ground state of speed `c`.
pub fn spectral_summary(
    cache: &GroundStateCache,
    c: f64,
    p: u32,
    grid: &Arc<Grid>,
    tol: f64,
) -> Result<SpectralSummary> {
    let gs = cache.get(c, p, grid)?;
    LinearizedOperator::new(&gs).ground_eigenpair(tol)
}

/// Result of a constrained Rayleigh-quotient minimization.
#[derive(Clone, Debug)]
pub struct ConstrainedMinimum {
    pub value: f64,
    pub minimizer: Field,
    pub iterations: usize,
}

/// Smooth, asymmetric start vector that overlaps every low mode.
fn generic_start(grid: &Grid) -> Vec<f64> {
    let scale: Vec<f64> = grid.box_lengths().iter().map(|l| l / 8.0).collect();
    let g = Arc::new(grid.clone());
    Field::from_fn(g, |x| {
        let mut r2 = 0.0;
        let mut lin = 1.0;
        for (a, &xa) in x.iter().enumerate() {
            let s = xa / scale[a] - 0.3 / (a as f64 + 1.0);
            r2 += s * s;
            lin += 0.5 * s;
        }
        lin * (-0.5 * r2).exp()
    })
    .into_values()
}

/// Modified Gram–Schmidt (two passes), dropping dependent vectors.
pub(crate) fn orthonormalize(vectors: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for mut v in vectors {
        let n0 = norm(&v);
        if n0 == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for q in &out {
                let a = dot(q, &v);
                v.iter_mut().zip(q).for_each(|(x, y)| *x -= a * y);
            }
        }
        let n = norm(&v);
        if n > 1e-10 * n0 {
            v.iter_mut().for_each(|x| *x /= n);
            out.push(v);
        }
    }
    out
}

pub(crate) fn project_out(basis: &[Vec<f64>], v: &mut [f64]) {
    for _ in 0..2 {
        for q in basis {
            let a = dot(q, v);
            v.iter_mut().zip(q).for_each(|(x, y)| *x -= a * y);
        }
    }
}

const LOBPCG_MAX_ITERATIONS: usize = 3000;

/// Smallest eigenvalue of a symmetric operator restricted to the orthogonal
/// complement of an orthonormal `basis`, by single-vector LOBPCG. Converged
/// when the projected residual of the unit iterate drops below `tol`.
pub(crate) fn lobpcg_min(
    apply: &dyn Fn(&[f64]) -> Vec<f64>,
    precond: Option<&dyn Fn(&[f64]) -> Vec<f64>>,
    basis: &[Vec<f64>],
    mut x: Vec<f64>,
    tol: f64,
) -> Result<(f64, Vec<f64>, usize)> {
    project_out(basis, &mut x);
    let n0 = norm(&x);
    if n0 == 0.0 {
        return Err(ZkError::invalid("start vector lies in the constraint span"));
    }
    x.iter_mut().for_each(|v| *v /= n0);
    let mut p: Option<Vec<f64>> = None;
    let mut last = f64::INFINITY;
    for it in 1..=LOBPCG_MAX_ITERATIONS {
        let ax = apply(&x);
        let lambda = dot(&x, &ax);
        let mut r: Vec<f64> = ax.iter().zip(&x).map(|(a, b)| a - lambda * b).collect();
        project_out(basis, &mut r);
        let rn = norm(&r);
        last = rn;
        if rn < tol {
            return Ok((lambda, x, it));
        }
        let mut w = match precond {
            Some(t) => t(&r),
            None => r,
        };
        project_out(basis, &mut w);
        let mut cols = vec![x.clone(), w];
        if let Some(p) = &p {
            cols.push(p.clone());
        }
        let q = orthonormalize(cols);
        let aq: Vec<Vec<f64>> = q.iter().map(|v| apply(v)).collect();
        let m = q.len();
        let gram = DMatrix::from_fn(m, m, |i, j| 0.5 * (dot(&q[i], &aq[j]) + dot(&q[j], &aq[i])));
        let eig = SymmetricEigen::new(gram);
        let (imin, _) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty subspace");
        let s = eig.eigenvectors.column(imin);
        let mut xn = vec![0.0; x.len()];
        let mut pn = vec![0.0; x.len()];
        for (j, qj) in q.iter().enumerate() {
            for i in 0..xn.len() {
                xn[i] += s[j] * qj[i];
                if j > 0 {
                    pn[i] += s[j] * qj[i];
                }
            }
        }
        project_out(basis, &mut xn);
        let nx = norm(&xn);
        xn.iter_mut().for_each(|v| *v /= nx);
        x = xn;
        p = Some(pn);
    }
    Err(ZkError::ConvergenceFailure {
        what: "constrained LOBPCG",
        iterations: LOBPCG_MAX_ITERATIONS,
        residual: last,
    })
}

/// `∫ w² + Σ_a ∫ (∂_a w)²` with Nyquist-free first derivatives, the norm in
/// which coercivity is measured.
pub fn coercivity_norm_sq(w: &Field) -> f64 {
    let cell = w.grid().cell_volume();
    let v = w.values();
    let mut total = dot(v, v);
    for g in raw_gradient(w.grid(), v) {
        total += dot(&g, &g);
    }
    cell * total
}

/// The weighted quadratic form `Σ_k (1/(c^k)²) H_k` with
/// `H_k = ∫ (c^k w² + |∇w|² - p R̃_k^{p-1} w²) φ^k`, frozen at one time.
#[derive(Clone, Debug)]
pub struct CoercivityForm {
    pub p: u32,
    pub t: f64,
    pub family: CutoffFamily,
    grid: Arc<Grid>,
    solitons: Vec<Field>,
    phi: Vec<Vec<f64>>,
    dphi: Vec<Vec<f64>>,
    /// `Σ_k (c^k - p R̃_k^{p-1}) φ^k / (c^k)²`.
    mass_weight: Vec<f64>,
    /// `Σ_k φ^k / (c^k)²`.
    grad_weight: Vec<f64>,
}

/// Decomposition of a field against the constraint directions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionDefects {
    /// `Σ_k (∫ R̃^k w)²`.
    pub mass: f64,
    /// `Σ_{k,i} (∫ ∂_i R̃^k w)²`.
    pub translation: f64,
}

impl CoercivityForm {
    pub fn new(
        cache: &GroundStateCache,
        solitons: &[SolitonParams],
        p: u32,
        t: f64,
        l: f64,
        grid: &Arc<Grid>,
    ) -> Result<Self> {
        let family = CutoffFamily::new(solitons.to_vec(), l)?;
        let x = lab_axis1(grid, t);
        let row: usize = grid.points()[1..].iter().product();
        let n = grid.len();
        let mut fields = Vec::with_capacity(solitons.len());
        let mut phi = Vec::with_capacity(solitons.len());
        let mut dphi = Vec::with_capacity(solitons.len());
        let mut mass_weight = vec![0.0; n];
        let mut grad_weight = vec![0.0; n];
        for (k, s) in solitons.iter().enumerate() {
            let r = crate::groundstate::soliton_field_with(cache, s, p, t, grid)?;
            let prof: Vec<f64> = x.iter().map(|&x1| family.phi_at(k, t, x1)).collect();
            let dprof: Vec<f64> = x.iter().map(|&x1| family.phi_derivative_at(k, t, x1)).collect();
            let inv_c2 = 1.0 / (s.c * s.c);
            for (i, rv) in r.values().iter().enumerate() {
                let ph = prof[i / row];
                mass_weight[i] += inv_c2 * (s.c - p as f64 * rv.powi(p as i32 - 1)) * ph;
                grad_weight[i] += inv_c2 * ph;
            }
            fields.push(r);
            phi.push(prof);
            dphi.push(dprof);
        }
        Ok(CoercivityForm {
            p,
            t,
            family,
            grid: grid.clone(),
            solitons: fields,
            phi,
            dphi,
            mass_weight,
            grad_weight,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Sampled soliton `R̃^k`.
    pub fn soliton(&self, k: usize) -> &Field {
        &self.solitons[k]
    }

    fn row(&self) -> usize {
        self.grid.points()[1..].iter().product()
    }

    /// `Σ_k (1/(c^k)²) H_k(w)`.
    pub fn value(&self, w: &Field) -> Result<f64> {
        self.grid.check_same(w.grid())?;
        let v = w.values();
        let mut total = pairwise_sum_by(v.len(), &|i| self.mass_weight[i] * v[i] * v[i]);
        for g in raw_gradient(&self.grid, v) {
            total += pairwise_sum_by(g.len(), &|i| self.grad_weight[i] * g[i] * g[i]);
        }
        Ok(self.grid.cell_volume() * total)
    }

    /// Single block `H_k(w)` (0-based `k`).
    pub fn block(&self, k: usize, w: &Field) -> Result<f64> {
        self.grid.check_same(w.grid())?;
        let c = self.family.solitons[k].c;
        let p = self.p;
        let row = self.row();
        let v = w.values();
        let r = self.solitons[k].values();
        let ph = &self.phi[k];
        let grads = raw_gradient(&self.grid, v);
        let total = pairwise_sum_by(v.len(), &|i| {
            let g2: f64 = grads.iter().map(|g| g[i] * g[i]).sum();
            (c * v[i] * v[i] + g2 - p as f64 * r[i].powi(p as i32 - 1) * v[i] * v[i]) * ph[i / row]
        });
        Ok(self.grid.cell_volume() * total)
    }

    /// The same form evaluated through `w √φ^k`:
    /// `H_k = B_k(w√φ^k) - ∫ w ∂_1 w ∂_1 φ^k - ¼ ∫ w² (∂_1 φ^k)²/φ^k`
    /// with `B_k(f) = ∫ (c^k f² + |∇f|² - p R̃_k^{p-1} f²)`.
    pub fn split_value(&self, w: &Field) -> Result<f64> {
        self.grid.check_same(w.grid())?;
        let row = self.row();
        let p = self.p;
        let v = w.values();
        let dw1 = &raw_gradient(&self.grid, v)[0];
        let mut total = 0.0;
        for (k, s) in self.family.solitons.iter().enumerate() {
            let ph = &self.phi[k];
            let dph = &self.dphi[k];
            let f: Vec<f64> = v.iter().enumerate().map(|(i, x)| x * ph[i / row].sqrt()).collect();
            let grads = raw_gradient(&self.grid, &f);
            let r = self.solitons[k].values();
            let b = pairwise_sum_by(f.len(), &|i| {
                let g2: f64 = grads.iter().map(|g| g[i] * g[i]).sum();
                (s.c - p as f64 * r[i].powi(p as i32 - 1)) * f[i] * f[i] + g2
            });
            let corr = pairwise_sum_by(v.len(), &|i| {
                let j = i / row;
                let quarter = if ph[j] > 0.0 { 0.25 * dph[j] * dph[j] / ph[j] } else { 0.0 };
                v[i] * dw1[i] * dph[j] + quarter * v[i] * v[i]
            });
            total += (b - corr) / (s.c * s.c);
        }
        Ok(self.grid.cell_volume() * total)
    }

    /// `Σ_k (∫ R̃^k w)²` and `Σ_{k,i} (∫ ∂_i R̃^k w)²`.
    pub fn projection_defects(&self, w: &Field) -> Result<ProjectionDefects> {
        self.grid.check_same(w.grid())?;
        let mut mass = 0.0;
        let mut translation = 0.0;
        for r in &self.solitons {
            mass += spectral::inner_product(r, w)?.powi(2);
            for d in spectral::gradient(r) {
                translation += spectral::inner_product(&d, w)?.powi(2);
            }
        }
        Ok(ProjectionDefects { mass, translation })
    }

    /// Constraint directions `R̃^k`, `∂_i R̃^k`, and for the critical power the
    /// translated ground eigenfunctions `Z̃^k`.
    pub fn constraint_fields(&self, cache: &GroundStateCache) -> Result<Vec<Field>> {
        let mut out = Vec::new();
        for (k, r) in self.solitons.iter().enumerate() {
            out.push(r.clone());
            out.extend(spectral::gradient(r));
            if self.p == 3 {
                out.push(self.eigenfunction(cache, k)?);
            }
        }
        Ok(out)
    }

    /// `Z̃^k`: the ground eigenfunction for speed `c^k`, moved to the soliton.
    pub fn eigenfunction(&self, cache: &GroundStateCache, k: usize) -> Result<Field> {
        let s = &self.family.solitons[k];
        let summary = spectral_summary(cache, s.c, self.p, &self.grid, EIGEN_TOL)?;
        let z = summary.z.with_grid(self.grid.clone())?;
        let center = s.center(self.t, &self.grid);
        spectral::translate(&z, &center)
    }

    /// Operator of the form in the Euclidean sample inner product.
    fn apply_raw(&self, v: &[f64]) -> Vec<f64> {
        let div = weighted_div_grad(&self.grid, &self.grad_weight, v);
        v.iter()
            .zip(&self.mass_weight)
            .zip(&div)
            .map(|((x, m), d)| m * x - d)
            .collect()
    }

    /// `C_0 = inf value(w)/‖w‖²_{H¹}` over `w` orthogonal to `constraints`,
    /// computed on `y = B^{1/2} w` with `B = 1 - Σ_a ∂_a²` (Nyquist-free),
    /// where the quotient becomes an ordinary Rayleigh quotient.
    pub fn minimum(&self, constraints: &[Field], tol: f64) -> Result<ConstrainedMinimum> {
        for g in constraints {
            self.grid.check_same(g.grid())?;
        }
        let grid = &self.grid;
        let inv_sqrt_b: Vec<f64> = spectral_map(grid, |m| {
            let k2: f64 = m.k.iter().zip(m.nyquist).map(|(k, &nq)| if nq { 0.0 } else { k * k }).sum();
            1.0 / (1.0 + k2).sqrt()
        });
        let basis = orthonormalize(
            constraints.iter().map(|g| apply_symbol(grid, &inv_sqrt_b, g.values())).collect(),
        );
        let apply = |y: &[f64]| {
            let w = apply_symbol(grid, &inv_sqrt_b, y);
            apply_symbol(grid, &inv_sqrt_b, &self.apply_raw(&w))
        };
        let x0 = generic_start(grid);
        let (value, y, iterations) = lobpcg_min(&apply, None, &basis, x0, tol)?;
        let w = apply_symbol(grid, &inv_sqrt_b, &y);
        Ok(ConstrainedMinimum { value, minimizer: Field::from_raw(grid.clone(), w), iterations })
    }
}

/// `Σ_k (1/(c^k)²) H_k(w)` at time `t` with cut-off scale `l`.
pub fn coercivity_form(
    w: &Field,
    solitons: &[SolitonParams],
    p: u32,
    t: f64,
    l: f64,
) -> Result<f64> {
    CoercivityForm::new(GroundStateCache::global(), solitons, p, t, l, w.grid())?.value(w)
}

/// Broadcast of a per-slab profile, re-exported for callers assembling
/// their own weights.
pub fn cutoff_field(family: &CutoffFamily, k: usize, t: f64, grid: &Arc<Grid>) -> Field {
    let x = lab_axis1(grid, t);
    let prof: Vec<f64> = x.iter().map(|&x1| family.phi_at(k, t, x1)).collect();
    broadcast_axis1(grid, &prof)
}

/// Random smooth field of unit `L²` norm: Gaussian bumps of random sign,
/// width in `[0.5, 2]` and offset in `[-3, 3]^d` around each of `centers`
/// (frame coordinates, wrapped into the box).
pub fn random_test_field(grid: &Arc<Grid>, centers: &[Vec<f64>], rng: &mut impl rand::Rng) -> Result<Field> {
    const BUMPS_PER_CENTER: usize = 8;
    let d = grid.dim();
    if centers.is_empty() || centers.iter().any(|c| c.len() != d) {
        return Err(ZkError::invalid("random test field needs centers matching the grid dimension"));
    }
    let mut bumps = Vec::new();
    for c in centers {
        for _ in 0..BUMPS_PER_CENTER {
            let x: Vec<f64> = c.iter().map(|ci| ci + rng.gen_range(-3.0..3.0)).collect();
            let width: f64 = rng.gen_range(0.5..2.0);
            let amp: f64 = rng.gen_range(-1.0..1.0);
            bumps.push((x, width, amp));
        }
    }
    let f = Field::from_fn(grid.clone(), |x| {
        bumps
            .iter()
            .map(|(c, w, a)| {
                let r2: f64 = (0..d).map(|i| grid.wrap(i, x[i] - c[i]).powi(2)).sum();
                a * (-0.5 * r2 / (w * w)).exp()
            })
            .sum()
    });
    let n = f.l2_norm();
    if !(n > 0.0) {
        return Err(ZkError::invalid("random test field vanished on this grid"));
    }
    Ok(f.scaled(1.0 / n))
}
