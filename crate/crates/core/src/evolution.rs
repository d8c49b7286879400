//! Pseudo-spectral time integration of `∂_t u + ∂_1(Δu + u^p) = 0`.
//!
//! Fields live in the frame of their grid, moving at `V = comoving_speed`
//! along axis 1, where the equation reads
//! `∂_t v + ∂_1(Δv + v^p) - V ∂_1 v = 0`. The linear part is diagonal in
//! Fourier space with symbol `i(ξ_1|ξ|² + V ξ_1)` and is integrated exactly.

use std::f64::consts::PI;
use std::sync::Arc;

use log::debug;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ZkError};
use crate::grid::Grid;
use crate::spectral::{self, dealias_mask, pairwise_sum_by, spectral_map, Field, Transform};

/// Integration schemes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Fourth-order exponential time differencing Runge–Kutta (Cox–Matthews).
    Etdrk4,
    /// Second-order Strang splitting with an RK4 nonlinear substep.
    Strang,
}

impl std::str::FromStr for Scheme {
    type Err = ZkError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "etdrk4" | "exponential" => Ok(Scheme::Etdrk4),
            "strang" | "splitting" => Ok(Scheme::Strang),
            other => Err(ZkError::invalid(format!("unknown scheme `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolverConfig {
    /// Step size; its magnitude is used by [`Evolver::evolve`], which takes
    /// the direction from the time interval. [`Evolver::step`] honours the sign.
    pub dt: f64,
    pub scheme: Scheme,
    pub dealias: bool,
    /// Must equal the comoving speed of the grid being evolved.
    pub frame_speed: f64,
}

impl EvolverConfig {
    pub fn new(dt: f64) -> Self {
        EvolverConfig { dt, scheme: Scheme::Etdrk4, dealias: true, frame_speed: 0.0 }
    }

    pub fn with_frame_speed(mut self, v: f64) -> Self {
        self.frame_speed = v;
        self
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }
}

/// Conserved quantities at one instant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConservationRecord {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
}

/// `M(u) = ½ ∫ u²`.
pub fn mass(u: &Field) -> f64 {
    0.5 * spectral::inner_product(u, u).expect("same grid")
}

/// `E(u) = ∫ ½|∇u|² - u^{p+1}/(p+1)`.
pub fn energy(u: &Field, p: u32) -> f64 {
    let grad_sq = spectral::spectral_norm_sq(&spectral::forward(u), |k2| k2);
    let v = u.values();
    let pot = u.grid().cell_volume() * pairwise_sum_by(v.len(), &|i| v[i].powi(p as i32 + 1));
    0.5 * grad_sq - pot / (p as f64 + 1.0)
}

/// Receives snapshots during [`Evolver::evolve`].
pub trait Observer {
    fn observe(&mut self, t: f64, u: &Field) -> Result<()>;
}

/// Records mass and energy at every observation.
#[derive(Clone, Debug, Default)]
pub struct ConservationObserver {
    pub p: u32,
    pub records: Vec<ConservationRecord>,
}

impl ConservationObserver {
    pub fn new(p: u32) -> Self {
        ConservationObserver { p, records: Vec::new() }
    }

    /// Largest relative deviation of (mass, energy) from the first record.
    pub fn max_relative_drift(&self) -> (f64, f64) {
        let Some(first) = self.records.first() else { return (0.0, 0.0) };
        let rel = |a: f64, b: f64| if b == 0.0 { a.abs() } else { (a - b).abs() / b.abs() };
        self.records.iter().fold((0.0, 0.0), |(m, e), r| {
            (f64::max(m, rel(r.mass, first.mass)), f64::max(e, rel(r.energy, first.energy)))
        })
    }
}

impl Observer for ConservationObserver {
    fn observe(&mut self, t: f64, u: &Field) -> Result<()> {
        self.records.push(ConservationRecord { t, mass: mass(u), energy: energy(u, self.p) });
        Ok(())
    }
}

/// Stability cap on `|dt| · max|ξ_1| · p · max|u|^{p-1}`.
pub const NONLINEAR_CFL_CAP: f64 = 2.5;
/// The run halts once `‖u‖_{H¹}` exceeds this multiple of its initial value.
pub const BLOWUP_FACTOR: f64 = 1e3;
const CONTOUR_POINTS: usize = 64;

struct Coefficients {
    dt: f64,
    e: Vec<Complex64>,
    e2: Vec<Complex64>,
    q: Vec<Complex64>,
    f1: Vec<Complex64>,
    f2: Vec<Complex64>,
    f3: Vec<Complex64>,
}

/// Reusable integrator bound to one grid and nonlinearity.
pub struct Evolver {
    grid: Arc<Grid>,
    p: u32,
    cfg: EvolverConfig,
    transform: Transform,
    /// Linear symbol `ξ_1|ξ|² + V ξ_1` (real; the generator is `i` times it).
    omega: Vec<f64>,
    /// Nonlinear multiplier `-i ξ_1`, de-aliased when configured.
    nl: Vec<Complex64>,
    h1_weight: Vec<f64>,
    max_k1: f64,
    coeffs: Option<Coefficients>,
    phys: Vec<f64>,
    scratch: Vec<Complex64>,
    steps_taken: u64,
}

impl Evolver {
    pub fn new(grid: Arc<Grid>, p: u32, cfg: EvolverConfig) -> Result<Self> {
        crate::groundstate::check_p(p)?;
        if !(cfg.dt.is_finite() && cfg.dt != 0.0) {
            return Err(ZkError::invalid(format!("time step must be nonzero, got {}", cfg.dt)));
        }
        if cfg.frame_speed.to_bits() != grid.comoving_speed().to_bits() {
            return Err(ZkError::invalid(format!(
                "frame speed {} differs from the grid's comoving speed {}",
                cfg.frame_speed,
                grid.comoving_speed()
            )));
        }
        let v = grid.comoving_speed();
        let omega = spectral_map(&grid, |m| {
            let k1 = if m.nyquist[0] { 0.0 } else { m.k[0] };
            let k2: f64 = m.k.iter().map(|k| k * k).sum();
            k1 * (k2 + v)
        });
        let mask = if cfg.dealias { dealias_mask(&grid) } else { vec![1.0; grid.spectral_len()] };
        let mut nl = spectral_map(&grid, |m| {
            let k1 = if m.nyquist[0] { 0.0 } else { m.k[0] };
            Complex64::new(0.0, -k1)
        });
        for (z, &w) in nl.iter_mut().zip(&mask) {
            *z *= w;
        }
        let n = grid.len() as f64;
        let scale = grid.volume() / (n * n);
        let h1_weight =
            spectral_map(&grid, |m| scale * m.weight * (1.0 + m.k.iter().map(|k| k * k).sum::<f64>()));
        let max_k1 = grid.max_wavenumber(0);
        let transform = Transform::new(&grid);
        let len = grid.len();
        let slen = grid.spectral_len();
        Ok(Evolver {
            grid,
            p,
            cfg,
            transform,
            omega,
            nl,
            h1_weight,
            max_k1,
            coeffs: None,
            phys: vec![0.0; len],
            scratch: vec![Complex64::new(0.0, 0.0); slen],
            steps_taken: 0,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn config(&self) -> &EvolverConfig {
        &self.cfg
    }

    /// Total number of steps taken by this evolver.
    pub fn steps_taken(&self) -> u64 {
        self.steps_taken
    }

    fn coefficients(&mut self, dt: f64) -> &Coefficients {
        let stale = self.coeffs.as_ref().is_none_or(|c| c.dt.to_bits() != dt.to_bits());
        if stale {
            self.coeffs = Some(build_coefficients(&self.omega, dt));
        }
        self.coeffs.as_ref().expect("just built")
    }

    /// `out = -i ξ_1 · mask · FFT(x^p)` where `x` is given by its coefficients.
    /// Returns `max |x|` over the grid.
    fn nonlinear(&mut self, x: &[Complex64], out: &mut [Complex64]) -> f64 {
        self.scratch.copy_from_slice(x);
        self.transform.inverse(&mut self.scratch, &mut self.phys);
        let mut max_abs: f64 = 0.0;
        let p = self.p as i32;
        for v in self.phys.iter_mut() {
            max_abs = max_abs.max(v.abs());
            *v = v.powi(p);
        }
        self.transform.forward(&self.phys, out);
        for (o, m) in out.iter_mut().zip(&self.nl) {
            *o *= m;
        }
        max_abs
    }

    fn h1_sq(&self, v: &[Complex64]) -> f64 {
        pairwise_sum_by(v.len(), &|i| self.h1_weight[i] * v[i].norm_sqr())
    }

    fn cfl(&self, dt: f64, max_abs: f64) -> f64 {
        dt.abs() * self.max_k1 * self.p as f64 * max_abs.powi(self.p as i32 - 1)
    }

    fn step_spectral(&mut self, v: &mut Vec<Complex64>, dt: f64) -> f64 {
        match self.cfg.scheme {
            Scheme::Etdrk4 => self.step_etdrk4(v, dt),
            Scheme::Strang => self.step_strang(v, dt),
        }
    }

    fn step_etdrk4(&mut self, v: &mut [Complex64], dt: f64) -> f64 {
        let s = v.len();
        let zero = Complex64::new(0.0, 0.0);
        let mut nv = vec![zero; s];
        let mut na = vec![zero; s];
        let mut nb = vec![zero; s];
        let mut nc = vec![zero; s];
        let mut a = vec![zero; s];
        let mut b = vec![zero; s];
        let max_abs = self.nonlinear(v, &mut nv);
        self.coefficients(dt);
        {
            let c = self.coeffs.as_ref().expect("built");
            for i in 0..s {
                a[i] = c.e2[i] * v[i] + c.q[i] * nv[i];
            }
        }
        self.nonlinear(&a, &mut na);
        {
            let c = self.coeffs.as_ref().expect("built");
            for i in 0..s {
                b[i] = c.e2[i] * v[i] + c.q[i] * na[i];
            }
        }
        self.nonlinear(&b, &mut nb);
        {
            let c = self.coeffs.as_ref().expect("built");
            // Reuse `b` for the third stage.
            for i in 0..s {
                b[i] = c.e2[i] * a[i] + c.q[i] * (2.0 * nb[i] - nv[i]);
            }
        }
        self.nonlinear(&b, &mut nc);
        let c = self.coeffs.as_ref().expect("built");
        for i in 0..s {
            v[i] = c.e[i] * v[i] + c.f1[i] * nv[i] + 2.0 * c.f2[i] * (na[i] + nb[i]) + c.f3[i] * nc[i];
        }
        max_abs
    }

    fn step_strang(&mut self, v: &mut Vec<Complex64>, dt: f64) -> f64 {
        let s = v.len();
        let zero = Complex64::new(0.0, 0.0);
        self.coefficients(dt);
        let half = |ev: &mut Evolver, v: &mut Vec<Complex64>| {
            let c = ev.coeffs.as_ref().expect("built");
            for (x, e) in v.iter_mut().zip(&c.e2) {
                *x *= e;
            }
        };
        half(self, v);
        let mut k1 = vec![zero; s];
        let mut k2 = vec![zero; s];
        let mut k3 = vec![zero; s];
        let mut k4 = vec![zero; s];
        let mut tmp = vec![zero; s];
        let max_abs = self.nonlinear(v, &mut k1);
        for i in 0..s {
            tmp[i] = v[i] + 0.5 * dt * k1[i];
        }
        self.nonlinear(&tmp, &mut k2);
        for i in 0..s {
            tmp[i] = v[i] + 0.5 * dt * k2[i];
        }
        self.nonlinear(&tmp, &mut k3);
        for i in 0..s {
            tmp[i] = v[i] + dt * k3[i];
        }
        self.nonlinear(&tmp, &mut k4);
        for i in 0..s {
            v[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        half(self, v);
        max_abs
    }

    fn check_field(&self, u: &Field) -> Result<()> {
        self.grid.check_same(u.grid())?;
        if u.grid().comoving_speed().to_bits() != self.grid.comoving_speed().to_bits() {
            return Err(ZkError::invalid("field and evolver use different frames"));
        }
        if !u.is_finite() {
            return Err(ZkError::invalid("initial field contains non-finite values"));
        }
        Ok(())
    }

    /// One step of size `cfg.dt` (sign respected).
    pub fn step(&mut self, u: &Field) -> Result<Field> {
        self.check_field(u)?;
        let dt = self.cfg.dt;
        let mut v = vec![Complex64::new(0.0, 0.0); self.grid.spectral_len()];
        self.transform.forward(u.values(), &mut v);
        let max_abs = self.step_spectral(&mut v, dt);
        if self.cfl(dt, max_abs) > NONLINEAR_CFL_CAP {
            return Err(ZkError::invalid(format!(
                "step {dt} violates the nonlinear stability cap ({:.3} > {NONLINEAR_CFL_CAP})",
                self.cfl(dt, max_abs)
            )));
        }
        self.steps_taken += 1;
        let mut out = vec![0.0; self.grid.len()];
        self.transform.inverse(&mut v, &mut out);
        if out.iter().any(|x| !x.is_finite()) {
            return Err(ZkError::BlowUpDetected { t_last_good: 0.0, reason: "non-finite values".into() });
        }
        Ok(Field::from_raw(self.grid.clone(), out))
    }

    /// Integrates from `t_from` to `t_to` with steps of magnitude `|cfg.dt|`
    /// (adjusted to land exactly on `t_to`). Observers see the initial state,
    /// every `cadence`-th step, and the final state.
    pub fn evolve(
        &mut self,
        u: &Field,
        t_from: f64,
        t_to: f64,
        cadence: usize,
        observers: &mut [&mut dyn Observer],
    ) -> Result<Field> {
        self.check_field(u)?;
        if !(t_from.is_finite() && t_to.is_finite()) || t_from == t_to {
            return Err(ZkError::invalid("evolution interval must have distinct finite endpoints"));
        }
        let cadence = cadence.max(1);
        let span = t_to - t_from;
        let n_steps = ((span.abs() / self.cfg.dt.abs()).round() as u64).max(1);
        let dt = span / n_steps as f64;
        debug!("evolve {t_from} -> {t_to}: {n_steps} steps of {dt}");

        let mut v = vec![Complex64::new(0.0, 0.0); self.grid.spectral_len()];
        self.transform.forward(u.values(), &mut v);
        for o in observers.iter_mut() {
            o.observe(t_from, u)?;
        }
        let h1_initial = self.h1_sq(&v).sqrt();
        let h1_limit = BLOWUP_FACTOR * h1_initial.max(f64::MIN_POSITIVE);
        let mut t_good = t_from;
        let mut out = vec![0.0; self.grid.len()];
        for n in 1..=n_steps {
            let max_abs = self.step_spectral(&mut v, dt);
            let cfl = self.cfl(dt, max_abs);
            if !cfl.is_finite() || cfl > NONLINEAR_CFL_CAP {
                if n == 1 && cfl.is_finite() {
                    return Err(ZkError::invalid(format!(
                        "step {dt} violates the nonlinear stability cap ({cfl:.3} > {NONLINEAR_CFL_CAP})"
                    )));
                }
                return Err(ZkError::BlowUpDetected {
                    t_last_good: t_good,
                    reason: format!("amplitude {max_abs:e} exceeds the step-size stability cap"),
                });
            }
            self.steps_taken += 1;
            let h1 = self.h1_sq(&v).sqrt();
            if !h1.is_finite() || h1 > h1_limit {
                return Err(ZkError::BlowUpDetected {
                    t_last_good: t_good,
                    reason: format!("H1 norm {h1:e} exceeds {BLOWUP_FACTOR}x its initial value {h1_initial:e}"),
                });
            }
            let t = if n == n_steps { t_to } else { t_from + n as f64 * dt };
            t_good = t;
            if n % cadence as u64 == 0 || n == n_steps {
                self.scratch.copy_from_slice(&v);
                self.transform.inverse(&mut self.scratch, &mut out);
                let snap = Field::from_raw(self.grid.clone(), out.clone());
                for o in observers.iter_mut() {
                    o.observe(t, &snap)?;
                }
            }
        }
        self.scratch.copy_from_slice(&v);
        self.transform.inverse(&mut self.scratch, &mut out);
        Ok(Field::from_raw(self.grid.clone(), out))
    }
}

/// ETDRK4 coefficients by contour averaging over a circle of radius 1
/// around each `z = i ω dt`.
fn build_coefficients(omega: &[f64], dt: f64) -> Coefficients {
    let roots: Vec<Complex64> = (0..CONTOUR_POINTS)
        .map(|j| Complex64::from_polar(1.0, PI * (2.0 * j as f64 + 1.0) / CONTOUR_POINTS as f64))
        .collect();
    let m = CONTOUR_POINTS as f64;
    let len = omega.len();
    let mut c = Coefficients {
        dt,
        e: Vec::with_capacity(len),
        e2: Vec::with_capacity(len),
        q: Vec::with_capacity(len),
        f1: Vec::with_capacity(len),
        f2: Vec::with_capacity(len),
        f3: Vec::with_capacity(len),
    };
    for &w in omega {
        let z = Complex64::new(0.0, w * dt);
        c.e.push(z.exp());
        c.e2.push((0.5 * z).exp());
        let (mut q, mut f1, mut f2, mut f3) = (Complex64::default(), Complex64::default(), Complex64::default(), Complex64::default());
        for &rt in &roots {
            let r = z + rt;
            let er = r.exp();
            let r2 = r * r;
            let r3 = r2 * r;
            q += ((0.5 * r).exp() - 1.0) / r;
            f1 += (-4.0 - r + er * (4.0 - 3.0 * r + r2)) / r3;
            f2 += (2.0 + r + er * (r - 2.0)) / r3;
            f3 += (-4.0 - 3.0 * r - r2 + er * (4.0 - r)) / r3;
        }
        c.q.push(q * (dt / m));
        c.f1.push(f1 * (dt / m));
        c.f2.push(f2 * (dt / m));
        c.f3.push(f3 * (dt / m));
    }
    c
}

/// One step of `u` with configuration `cfg`.
pub fn step(u: &Field, p: u32, cfg: &EvolverConfig) -> Result<Field> {
    Evolver::new(u.grid().clone(), p, cfg.clone())?.step(u)
}

/// Integrates `u` from `t_from` to `t_to`; see [`Evolver::evolve`].
pub fn evolve_to(
    u: &Field,
    p: u32,
    t_from: f64,
    t_to: f64,
    cfg: &EvolverConfig,
    cadence: usize,
    observers: &mut [&mut dyn Observer],
) -> Result<Field> {
    Evolver::new(u.grid().clone(), p, cfg.clone())?.evolve(u, t_from, t_to, cadence, observers)
}

/// `u(-x_1, x_⊥)` on the same grid (index map `j -> (n - j) mod n` on axis 1).
pub fn reflect_axis1(u: &Field) -> Field {
    let grid = u.grid();
    let n0 = grid.points()[0];
    let row: usize = grid.points()[1..].iter().product();
    let vals = u.values();
    let mut out = vec![0.0; vals.len()];
    for j in 0..n0 {
        let mj = (n0 - j) % n0;
        out[j * row..(j + 1) * row].copy_from_slice(&vals[mj * row..(mj + 1) * row]);
    }
    Field::from_raw(grid.clone(), out)
}
