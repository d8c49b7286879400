//! Periodic box discretization.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ZkError};

/// A periodic box `[-L_1/2, L_1/2) x ... x [-L_d/2, L_d/2)` sampled on a
/// uniform tensor grid. Axis 1 (array axis 0) is the propagation direction.
///
/// The grid also carries the speed of the reference frame along axis 1:
/// samples live in frame coordinates `x_frame = x_lab - comoving_speed * t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    box_lengths: Vec<f64>,
    points: Vec<usize>,
    comoving_speed: f64,
}

impl Grid {
    pub fn new(box_lengths: &[f64], points: &[usize], comoving_speed: f64) -> Result<Self> {
        let dim = points.len();
        if !(dim == 2 || dim == 3) {
            return Err(ZkError::invalid(format!("grid dimension must be 2 or 3, got {dim}")));
        }
        if box_lengths.len() != dim {
            return Err(ZkError::invalid(format!(
                "{} box lengths given for a {dim}-dimensional grid",
                box_lengths.len()
            )));
        }
        if let Some(&n) = points.iter().find(|&&n| n < 16 || n % 2 != 0) {
            return Err(ZkError::invalid(format!(
                "per-axis point counts must be even and at least 16, got {n}"
            )));
        }
        if let Some(&l) = box_lengths.iter().find(|&&l| !(l.is_finite() && l > 0.0)) {
            return Err(ZkError::invalid(format!("box lengths must be positive, got {l}")));
        }
        if !comoving_speed.is_finite() {
            return Err(ZkError::invalid("comoving speed must be finite"));
        }
        Ok(Grid {
            dim,
            box_lengths: box_lengths.to_vec(),
            points: points.to_vec(),
            comoving_speed,
        })
    }

    /// Square (or cubic) box with the same length and resolution on every axis.
    pub fn uniform(dim: usize, box_length: f64, n: usize) -> Result<Self> {
        Grid::new(&vec![box_length; dim], &vec![n; dim], 0.0)
    }

    pub fn with_comoving_speed(&self, speed: f64) -> Self {
        Grid { comoving_speed: speed, ..self.clone() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn box_lengths(&self) -> &[f64] {
        &self.box_lengths
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn comoving_speed(&self) -> f64 {
        self.comoving_speed
    }

    /// Number of real samples.
    pub fn len(&self) -> usize {
        self.points.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.box_lengths[axis] / self.points[axis] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).product()
    }

    pub fn volume(&self) -> f64 {
        self.box_lengths.iter().product()
    }

    /// Sample coordinates along `axis` (0-based): `-L/2 + j h`.
    pub fn coords(&self, axis: usize) -> Vec<f64> {
        let h = self.spacing(axis);
        let half = 0.5 * self.box_lengths[axis];
        (0..self.points[axis]).map(|j| -half + j as f64 * h).collect()
    }

    /// Shape of the half-complex spectral array (last axis stores `n/2 + 1` modes).
    pub fn spectral_shape(&self) -> Vec<usize> {
        let mut shape = self.points.clone();
        let last = self.dim - 1;
        shape[last] = shape[last] / 2 + 1;
        shape
    }

    pub fn spectral_len(&self) -> usize {
        self.spectral_shape().iter().product()
    }

    /// Angular wavenumbers stored along `axis` of the spectral array, in
    /// standard FFT ordering (the last axis only holds the non-negative half).
    pub fn wavenumbers(&self, axis: usize) -> Vec<f64> {
        let n = self.points[axis];
        let scale = 2.0 * PI / self.box_lengths[axis];
        let count = if axis == self.dim - 1 { n / 2 + 1 } else { n };
        (0..count)
            .map(|j| {
                let signed = if j <= n / 2 { j as i64 } else { j as i64 - n as i64 };
                scale * signed as f64
            })
            .collect()
    }

    /// Integer mode index along `axis` for spectral position `j`.
    pub(crate) fn mode_index(&self, axis: usize, j: usize) -> i64 {
        let n = self.points[axis];
        if j <= n / 2 {
            j as i64
        } else {
            j as i64 - n as i64
        }
    }

    /// Largest angular wavenumber magnitude resolved on `axis`.
    pub fn max_wavenumber(&self, axis: usize) -> f64 {
        PI * self.points[axis] as f64 / self.box_lengths[axis]
    }

    /// Whether `other` describes the same sampling (frame speed excluded).
    pub fn same_sampling(&self, other: &Grid) -> bool {
        self.dim == other.dim
            && self.points == other.points
            && self
                .box_lengths
                .iter()
                .zip(&other.box_lengths)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    /// Exact textual key for caches and run manifests.
    pub fn signature(&self) -> String {
        let pts: Vec<String> = self.points.iter().map(|n| n.to_string()).collect();
        let lens: Vec<String> = self.box_lengths.iter().map(|l| format!("{l}")).collect();
        format!("d{}_n{}_L{}_v{}", self.dim, pts.join("x"), lens.join("x"), self.comoving_speed)
    }

    /// Map a coordinate along `axis` into the periodic window `[-L/2, L/2)`.
    pub fn wrap(&self, axis: usize, x: f64) -> f64 {
        let l = self.box_lengths[axis];
        let shifted = (x + 0.5 * l).rem_euclid(l);
        shifted - 0.5 * l
    }

    pub(crate) fn check_same(&self, other: &Grid) -> Result<()> {
        if self.same_sampling(other) {
            Ok(())
        } else {
            Err(ZkError::invalid(format!(
                "grid mismatch: {} vs {}",
                self.signature(),
                other.signature()
            )))
        }
    }
}
