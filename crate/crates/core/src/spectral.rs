//! Fourier machinery on periodic grids: fields, transforms, derivatives,
//! Sobolev norms and quadrature.
//!
//! Real fields are transformed with a real-to-complex FFT along the last
//! array axis and complex FFTs along the remaining axes, so spectral arrays
//! hold `n_last / 2 + 1` modes on the last axis. Coefficients are
//! unnormalized (the inverse divides by the number of samples).

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};

use crate::error::{Result, ZkError};
use crate::grid::Grid;

/// A real-valued function sampled on a grid, row-major (last axis fastest).
#[derive(Clone, Debug)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

/// Half-complex Fourier coefficients of a real field.
#[derive(Clone, Debug)]
pub struct SpectralField {
    grid: Arc<Grid>,
    coeffs: Vec<Complex64>,
}

impl Field {
    /// Wraps sampled values; rejects wrong lengths and non-finite samples.
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(ZkError::invalid(format!(
                "field has {} values but the grid has {} points",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ZkError::invalid("field contains non-finite values"));
        }
        Ok(Field { grid, values })
    }

    /// Unchecked constructor for values produced internally.
    pub(crate) fn from_raw(grid: Arc<Grid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Field { grid, values }
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        Field { grid, values: vec![0.0; n] }
    }

    /// Samples `f` at every grid point; `f` receives the coordinate vector.
    pub fn from_fn(grid: Arc<Grid>, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        let axes: Vec<Vec<f64>> = (0..grid.dim()).map(|a| grid.coords(a)).collect();
        let mut values = Vec::with_capacity(grid.len());
        let mut x = vec![0.0; grid.dim()];
        for_each_index(grid.points(), |idx| {
            for (a, &j) in idx.iter().enumerate() {
                x[a] = axes[a][j];
            }
            values.push(f(&x));
        });
        Field { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::from_raw(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn scaled(&self, a: f64) -> Field {
        self.map(|v| a * v)
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: f64, other: &Field) -> Result<Field> {
        self.grid.check_same(&other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(x, y)| x + a * y).collect();
        Ok(Field::from_raw(self.grid.clone(), values))
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.axpy(-1.0, other)
    }

    /// Pointwise product.
    pub fn mul(&self, other: &Field) -> Result<Field> {
        self.grid.check_same(&other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(x, y)| x * y).collect();
        Ok(Field::from_raw(self.grid.clone(), values))
    }

    pub(crate) fn add_scaled_in_place(&mut self, a: f64, other: &Field) {
        for (x, y) in self.values.iter_mut().zip(&other.values) {
            *x += a * y;
        }
    }

    /// Same samples reinterpreted on a grid with identical sampling (the
    /// frame speed may differ).
    pub fn with_grid(&self, grid: Arc<Grid>) -> Result<Field> {
        self.grid.check_same(&grid)?;
        Ok(Field::from_raw(grid, self.values.clone()))
    }

    pub fn l2_norm(&self) -> f64 {
        integrate_sq(&self.grid, &self.values).sqrt()
    }

    /// `∫ f dx` by the periodic trapezoidal rule.
    pub fn integral(&self) -> f64 {
        self.grid.cell_volume() * pairwise_sum(&self.values)
    }
}

impl SpectralField {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub(crate) fn from_raw(grid: Arc<Grid>, coeffs: Vec<Complex64>) -> Self {
        SpectralField { grid, coeffs }
    }
}

/// Sum with a fixed binary-tree order. Deterministic and accurate to
/// `O(log n)` rounding growth.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if xs.len() <= BLOCK {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        s
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Pairwise sum of `f(i)` for `i in 0..n` without materializing the terms.
pub(crate) fn pairwise_sum_by(n: usize, f: &impl Fn(usize) -> f64) -> f64 {
    fn rec(lo: usize, hi: usize, f: &impl Fn(usize) -> f64) -> f64 {
        if hi - lo <= 64 {
            let mut s = 0.0;
            for i in lo..hi {
                s += f(i);
            }
            s
        } else {
            let mid = lo + (hi - lo) / 2;
            rec(lo, mid, f) + rec(mid, hi, f)
        }
    }
    rec(0, n, f)
}

fn integrate_sq(grid: &Grid, v: &[f64]) -> f64 {
    grid.cell_volume() * pairwise_sum_by(v.len(), &|i| v[i] * v[i])
}

/// Visits every multi-index of `shape` in row-major order.
pub(crate) fn for_each_index(shape: &[usize], mut f: impl FnMut(&[usize])) {
    let total: usize = shape.iter().product();
    let mut idx = vec![0usize; shape.len()];
    for _ in 0..total {
        f(&idx);
        for a in (0..shape.len()).rev() {
            idx[a] += 1;
            if idx[a] < shape[a] {
                break;
            }
            idx[a] = 0;
        }
    }
}

struct LinePlans {
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

fn line_plans(n: usize) -> Arc<LinePlans> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<LinePlans>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().expect("fft plan cache poisoned");
    map.entry(n)
        .or_insert_with(|| {
            let mut real = RealFftPlanner::<f64>::new();
            let mut cplx = FftPlanner::<f64>::new();
            Arc::new(LinePlans {
                r2c: real.plan_fft_forward(n),
                c2r: real.plan_fft_inverse(n),
                forward: cplx.plan_fft_forward(n),
                inverse: cplx.plan_fft_inverse(n),
            })
        })
        .clone()
}

/// Reusable multi-dimensional real transform for one grid shape.
pub(crate) struct Transform {
    points: Vec<usize>,
    sshape: Vec<usize>,
    plans: Vec<Arc<LinePlans>>,
}

const COLUMN_BATCH: usize = 16;

impl Transform {
    pub fn new(grid: &Grid) -> Self {
        Transform {
            points: grid.points().to_vec(),
            sshape: grid.spectral_shape(),
            plans: grid.points().iter().map(|&n| line_plans(n)).collect(),
        }
    }

    fn last(&self) -> usize {
        self.points.len() - 1
    }

    pub fn forward(&self, input: &[f64], out: &mut [Complex64]) {
        let last = self.last();
        let n = self.points[last];
        let h = self.sshape[last];
        let r2c = &self.plans[last].r2c;
        out.par_chunks_mut(h).zip(input.par_chunks(n)).for_each_init(
            || (vec![0.0; n], r2c.make_scratch_vec()),
            |(buf, scratch), (orow, irow)| {
                buf.copy_from_slice(irow);
                r2c.process_with_scratch(buf, orow, scratch)
                    .expect("r2c buffer sizes are fixed by the plan");
            },
        );
        for axis in 0..last {
            self.along_axis(out, axis, true);
        }
    }

    /// Inverse transform including the `1/N` normalization. `coeffs` is
    /// used as scratch and left in an unspecified state.
    pub fn inverse(&self, coeffs: &mut [Complex64], out: &mut [f64]) {
        let last = self.last();
        for axis in 0..last {
            self.along_axis(coeffs, axis, false);
        }
        let n = self.points[last];
        let h = self.sshape[last];
        let c2r = &self.plans[last].c2r;
        let norm = 1.0 / self.points.iter().product::<usize>() as f64;
        out.par_chunks_mut(n).zip(coeffs.par_chunks_mut(h)).for_each_init(
            || c2r.make_scratch_vec(),
            |scratch, (orow, crow)| {
                // The DC and Nyquist entries of a real row must be real.
                crow[0].im = 0.0;
                crow[h - 1].im = 0.0;
                c2r.process_with_scratch(crow, orow, scratch)
                    .expect("c2r buffer sizes are fixed by the plan");
                for v in orow.iter_mut() {
                    *v *= norm;
                }
            },
        );
    }

    fn along_axis(&self, data: &mut [Complex64], axis: usize, forward: bool) {
        let n = self.sshape[axis];
        let stride: usize = self.sshape[axis + 1..].iter().product();
        let outer: usize = self.sshape[..axis].iter().product();
        let plan = if forward { &self.plans[axis].forward } else { &self.plans[axis].inverse };
        let mut buf = vec![Complex64::new(0.0, 0.0); COLUMN_BATCH * n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        for o in 0..outer {
            let base = o * n * stride;
            let mut j0 = 0;
            while j0 < stride {
                let nb = COLUMN_BATCH.min(stride - j0);
                for k in 0..n {
                    let src = &data[base + k * stride + j0..base + k * stride + j0 + nb];
                    for (b, v) in src.iter().enumerate() {
                        buf[b * n + k] = *v;
                    }
                }
                plan.process_with_scratch(&mut buf[..nb * n], &mut scratch);
                for k in 0..n {
                    let dst = &mut data[base + k * stride + j0..base + k * stride + j0 + nb];
                    for (b, v) in dst.iter_mut().enumerate() {
                        *v = buf[b * n + k];
                    }
                }
                j0 += nb;
            }
        }
    }
}

pub fn forward(f: &Field) -> SpectralField {
    let t = Transform::new(&f.grid);
    let mut coeffs = vec![Complex64::new(0.0, 0.0); f.grid.spectral_len()];
    t.forward(&f.values, &mut coeffs);
    SpectralField { grid: f.grid.clone(), coeffs }
}

pub fn inverse(s: &SpectralField) -> Field {
    let t = Transform::new(&s.grid);
    let mut scratch = s.coeffs.clone();
    let mut values = vec![0.0; s.grid.len()];
    t.inverse(&mut scratch, &mut values);
    Field::from_raw(s.grid.clone(), values)
}

/// Per-mode data handed to multiplier builders.
pub(crate) struct Mode<'a> {
    /// Angular wavenumber per axis.
    pub k: &'a [f64],
    /// Whether the mode sits on the Nyquist index of each axis.
    pub nyquist: &'a [bool],
    /// Parseval weight of the half-complex layout (1 or 2).
    pub weight: f64,
}

/// Evaluates `f` at every spectral position, in storage order.
pub(crate) fn spectral_map<T>(grid: &Grid, mut f: impl FnMut(&Mode) -> T) -> Vec<T> {
    let dim = grid.dim();
    let ks: Vec<Vec<f64>> = (0..dim).map(|a| grid.wavenumbers(a)).collect();
    let last_n = grid.points()[dim - 1];
    let mut k = vec![0.0; dim];
    let mut nyq = vec![false; dim];
    let mut out = Vec::with_capacity(grid.spectral_len());
    for_each_index(&grid.spectral_shape(), |idx| {
        for a in 0..dim {
            k[a] = ks[a][idx[a]];
            nyq[a] = idx[a] == grid.points()[a] / 2;
        }
        let j = idx[dim - 1];
        let weight = if j == 0 || j == last_n / 2 { 1.0 } else { 2.0 };
        out.push(f(&Mode { k: &k, nyquist: &nyq, weight }));
    });
    out
}

fn check_axes(grid: &Grid, axes: &[usize]) -> Result<Vec<u32>> {
    let mut orders = vec![0u32; grid.dim()];
    for &a in axes {
        if a == 0 || a > grid.dim() {
            return Err(ZkError::invalid(format!(
                "derivative axis {a} outside 1..={}",
                grid.dim()
            )));
        }
        orders[a - 1] += 1;
    }
    Ok(orders)
}

/// Fourier multiplier of `∂^α` with `α` given as derivative orders per
/// (0-based) axis. Odd derivatives annihilate the Nyquist mode.
pub(crate) fn derivative_multiplier(grid: &Grid, orders: &[u32]) -> Vec<Complex64> {
    spectral_map(grid, |m| {
        let mut z = Complex64::new(1.0, 0.0);
        for (a, &o) in orders.iter().enumerate() {
            if o == 0 {
                continue;
            }
            if m.nyquist[a] && o % 2 == 1 {
                return Complex64::new(0.0, 0.0);
            }
            z *= Complex64::new(0.0, m.k[a]).powu(o);
        }
        z
    })
}

fn apply_multiplier(f: &Field, mult: &[Complex64]) -> Field {
    let mut s = forward(f);
    for (c, m) in s.coeffs.iter_mut().zip(mult) {
        *c *= m;
    }
    inverse(&s)
}

/// Spectral derivative `∂_{i1} ... ∂_{ik} f`. Axes are 1-based; axis 1 is
/// the propagation direction.
pub fn derivative(f: &Field, axes: &[usize]) -> Result<Field> {
    let orders = check_axes(&f.grid, axes)?;
    if orders.iter().all(|&o| o == 0) {
        return Ok(f.clone());
    }
    Ok(apply_multiplier(f, &derivative_multiplier(&f.grid, &orders)))
}

/// All first derivatives `(∂_1 f, ..., ∂_d f)` from a single forward transform.
pub fn gradient(f: &Field) -> Vec<Field> {
    let s = forward(f);
    (0..f.grid.dim())
        .map(|a| {
            let mut orders = vec![0; f.grid.dim()];
            orders[a] = 1;
            let mult = derivative_multiplier(&f.grid, &orders);
            let mut d = s.clone();
            for (c, m) in d.coeffs.iter_mut().zip(&mult) {
                *c *= m;
            }
            inverse(&d)
        })
        .collect()
}

pub fn laplacian(f: &Field) -> Field {
    let mult: Vec<Complex64> =
        spectral_map(&f.grid, |m| Complex64::new(-m.k.iter().map(|k| k * k).sum::<f64>(), 0.0));
    apply_multiplier(f, &mult)
}

/// `(a - Δ)^{-1} f` for `a > 0`.
pub fn solve_helmholtz(f: &Field, a: f64) -> Field {
    let mult: Vec<Complex64> = spectral_map(&f.grid, |m| {
        Complex64::new(1.0 / (a + m.k.iter().map(|k| k * k).sum::<f64>()), 0.0)
    });
    apply_multiplier(f, &mult)
}

/// Squared Sobolev norm from spectral coefficients. `weight(|ξ|²)` is the
/// squared multiplier.
pub(crate) fn spectral_norm_sq(s: &SpectralField, weight: impl Fn(f64) -> f64) -> f64 {
    let grid = &s.grid;
    let n = grid.len() as f64;
    let scale = grid.volume() / (n * n);
    let w: Vec<f64> = spectral_map(grid, |m| m.weight * weight(m.k.iter().map(|k| k * k).sum()));
    scale * pairwise_sum_by(s.coeffs.len(), &|i| w[i] * s.coeffs[i].norm_sqr())
}

pub(crate) fn sobolev_weight(s: f64, homogeneous: bool) -> impl Fn(f64) -> f64 {
    move |k2: f64| {
        if homogeneous {
            if s == 0.0 {
                1.0
            } else {
                k2.powf(s)
            }
        } else {
            (1.0 + k2).powf(s)
        }
    }
}

/// `‖f‖_{H^s}` with multiplier `(1+|ξ|²)^{s/2}`, or `‖f‖_{Ḣ^s}` with `|ξ|^s`
/// when `homogeneous`.
pub fn sobolev_norm(f: &Field, s: f64, homogeneous: bool) -> Result<f64> {
    if !(s >= 0.0 && s.is_finite()) {
        return Err(ZkError::invalid(format!("Sobolev index must be nonnegative, got {s}")));
    }
    if !f.is_finite() {
        return Err(ZkError::invalid("Sobolev norm of a non-finite field"));
    }
    let spec = forward(f);
    Ok(spectral_norm_sq(&spec, sobolev_weight(s, homogeneous)).sqrt())
}

/// `∫ f g dx` by the periodic trapezoidal rule (spectrally exact for
/// band-limited products).
pub fn inner_product(f: &Field, g: &Field) -> Result<f64> {
    f.grid.check_same(&g.grid)?;
    let (a, b) = (&f.values, &g.values);
    Ok(f.grid.cell_volume() * pairwise_sum_by(a.len(), &|i| a[i] * b[i]))
}

/// `f(x - shift)` by a Fourier phase shift.
pub fn translate(f: &Field, shift: &[f64]) -> Result<Field> {
    if shift.len() != f.grid.dim() {
        return Err(ZkError::invalid("shift length differs from grid dimension"));
    }
    let mult = spectral_map(&f.grid, |m| {
        let mut z = Complex64::new(1.0, 0.0);
        for a in 0..shift.len() {
            let theta = m.k[a] * shift[a];
            z *= if m.nyquist[a] {
                Complex64::new(theta.cos(), 0.0)
            } else {
                Complex64::from_polar(1.0, -theta)
            };
        }
        z
    });
    Ok(apply_multiplier(f, &mult))
}

/// Evaluates the trigonometric interpolant of `f` on the tensor product of
/// per-axis target coordinates (periodic in each axis). Returns values in
/// row-major order over the target shape.
pub fn eval_tensor(f: &Field, targets: &[Vec<f64>]) -> Result<Vec<f64>> {
    let grid = &f.grid;
    let dim = grid.dim();
    if targets.len() != dim {
        return Err(ZkError::invalid("one target coordinate list per axis is required"));
    }
    let spec = forward(f);
    let mut shape = grid.spectral_shape();
    let mut data = spec.coeffs;
    for axis in 0..dim - 1 {
        let ks = grid.wavenumbers(axis);
        let half = 0.5 * grid.box_lengths()[axis];
        let nyq = grid.points()[axis] / 2;
        let m = targets[axis].len();
        let n = shape[axis];
        let basis: Vec<Complex64> = targets[axis]
            .iter()
            .flat_map(|&t| {
                ks.iter().enumerate().map(move |(j, &k)| {
                    let theta = k * (t + half);
                    if j == nyq {
                        Complex64::new(theta.cos(), 0.0)
                    } else {
                        Complex64::from_polar(1.0, theta)
                    }
                })
            })
            .collect();
        let stride: usize = shape[axis + 1..].iter().product();
        let outer: usize = shape[..axis].iter().product();
        let mut out = vec![Complex64::new(0.0, 0.0); outer * m * stride];
        for o in 0..outer {
            for mi in 0..m {
                let dst = &mut out[(o * m + mi) * stride..(o * m + mi + 1) * stride];
                for k in 0..n {
                    let e = basis[mi * n + k];
                    let src = &data[(o * n + k) * stride..(o * n + k + 1) * stride];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += e * s;
                    }
                }
            }
        }
        shape[axis] = m;
        data = out;
    }
    let last = dim - 1;
    let ks = grid.wavenumbers(last);
    let half = 0.5 * grid.box_lengths()[last];
    let n_last = grid.points()[last];
    let h = shape[last];
    let norm = 1.0 / grid.len() as f64;
    let m = targets[last].len();
    let rows: usize = shape[..last].iter().product();
    let mut result = Vec::with_capacity(rows * m);
    let phases: Vec<Complex64> = targets[last]
        .iter()
        .flat_map(|&t| {
            ks.iter().enumerate().map(move |(j, &k)| {
                let theta = k * (t + half);
                let w = if j == 0 || j == n_last / 2 { 1.0 } else { 2.0 };
                if j == n_last / 2 {
                    Complex64::new(w * theta.cos(), 0.0)
                } else {
                    Complex64::from_polar(w, theta)
                }
            })
        })
        .collect();
    for r in 0..rows {
        let row = &data[r * h..(r + 1) * h];
        for mi in 0..m {
            let ph = &phases[mi * h..(mi + 1) * h];
            let mut acc = 0.0;
            for (c, e) in row.iter().zip(ph) {
                acc += c.re * e.re - c.im * e.im;
            }
            result.push(norm * acc);
        }
    }
    Ok(result)
}

/// Mask of the 2/3 de-aliasing rule: modes with `|index| > n/3` on any axis
/// are removed.
pub(crate) fn dealias_mask(grid: &Grid) -> Vec<f64> {
    let dim = grid.dim();
    let cut: Vec<i64> = grid.points().iter().map(|&n| (n / 3) as i64).collect();
    let mut out = Vec::with_capacity(grid.spectral_len());
    for_each_index(&grid.spectral_shape(), |idx| {
        let keep = (0..dim).all(|a| grid.mode_index(a, idx[a]).abs() <= cut[a]);
        out.push(if keep { 1.0 } else { 0.0 });
    });
    out
}

/// Angular frequency of the `m`-th mode along `axis`.
pub fn mode_wavenumber(grid: &Grid, axis: usize, m: i64) -> f64 {
    2.0 * PI * m as f64 / grid.box_lengths()[axis]
}
