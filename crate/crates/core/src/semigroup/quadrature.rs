//! Radial quadrature for L2(R^3) norms of radial Fourier data, and the
//! smooth frequency cutoff.

use crate::error::{Error, Result};

/// Nodes and composite-Simpson weights for `int_0^rmax g(r) dr`.
///
/// Below `split` the nodes are evenly spaced in `ln r` (Simpson in the log
/// variable, weights carry the Jacobian `r`); above it they are evenly
/// spaced in `r`. The interval `[0, r_min]` is dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    r_min: f64,
    split: f64,
    r_max: f64,
    log_intervals: usize,
    lin_intervals: usize,
}

pub const DEFAULT_NODES: usize = 8192;
pub const DEFAULT_R_MIN: f64 = 1e-7;

impl RadialGrid {
    pub fn new(
        r_min: f64,
        split: f64,
        r_max: f64,
        log_intervals: usize,
        lin_intervals: usize,
    ) -> Result<Self> {
        if !(0.0 < r_min && r_min < split && split < r_max && r_max.is_finite()) {
            return Err(Error::domain(format!(
                "radial grid needs 0 < r_min < split < r_max, got {r_min}, {split}, {r_max}"
            )));
        }
        if log_intervals == 0 || lin_intervals == 0 || !log_intervals.is_multiple_of(2) || !lin_intervals.is_multiple_of(2) {
            return Err(Error::domain("Simpson segments need a positive even interval count"));
        }
        let (l0, l1) = (r_min.ln(), split.ln());
        let hs = (l1 - l0) / log_intervals as f64;
        let hr = (r_max - split) / lin_intervals as f64;
        let n = log_intervals + lin_intervals + 1;
        let mut nodes = Vec::with_capacity(n);
        let mut weights = vec![0.0; n];
        for i in 0..=log_intervals {
            let r = if i == log_intervals { split } else { (l0 + hs * i as f64).exp() };
            nodes.push(r);
            weights[i] += simpson_coeff(i, log_intervals) * hs / 3.0 * r;
        }
        for j in 1..=lin_intervals {
            nodes.push(if j == lin_intervals { r_max } else { split + hr * j as f64 });
        }
        for j in 0..=lin_intervals {
            weights[log_intervals + j] += simpson_coeff(j, lin_intervals) * hr / 3.0;
        }
        Ok(Self { nodes, weights, r_min, split, r_max, log_intervals, lin_intervals })
    }

    /// `DEFAULT_NODES` intervals split evenly between the log part on
    /// `[DEFAULT_R_MIN, split]` and the linear part on `[split, r_max]`.
    pub fn with_max(r_max: f64) -> Result<Self> {
        let split = if r_max > 1.0 { 1.0 } else { 0.5 * r_max };
        Self::new(DEFAULT_R_MIN, split, r_max, DEFAULT_NODES / 2, DEFAULT_NODES / 2)
    }

    /// Grid on `[lo, hi]` for data supported away from the origin, linear
    /// spacing only (a short log segment bridges `[lo/2, lo]`).
    pub fn band(lo: f64, hi: f64, intervals: usize) -> Result<Self> {
        Self::new(0.5 * lo, lo, hi, 4, intervals)
    }

    /// Smallest radius where `r |f(r)|` stays below `tol` on a scan out to
    /// `r_hi`, used to truncate rapidly decaying profiles.
    pub fn truncation_radius<F: Fn(f64) -> f64>(f: F, r_hi: f64, tol: f64) -> f64 {
        let n = 4096;
        let mut last_big = 0.0;
        for i in 1..=n {
            let r = r_hi * i as f64 / n as f64;
            if r * f(r).abs() >= tol {
                last_big = r;
            }
        }
        (last_big + r_hi / n as f64).min(r_hi)
    }

    /// Every other node; requires interval counts divisible by four.
    pub fn coarsened(&self) -> Result<Self> {
        if !self.log_intervals.is_multiple_of(4) || !self.lin_intervals.is_multiple_of(4) {
            return Err(Error::domain("grid cannot be halved into Simpson segments"));
        }
        Self::new(self.r_min, self.split, self.r_max, self.log_intervals / 2, self.lin_intervals / 2)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    /// `int g(r) dr` with the sum reduced pairwise.
    pub fn integrate<F: Fn(usize, f64) -> f64>(&self, g: F) -> f64 {
        let terms: Vec<f64> =
            self.nodes.iter().zip(&self.weights).enumerate().map(|(i, (r, w))| w * g(i, *r)).collect();
        pairwise_sum(&terms)
    }
}

fn simpson_coeff(i: usize, n: usize) -> f64 {
    if i == 0 || i == n {
        1.0
    } else if i % 2 == 1 {
        4.0
    } else {
        2.0
    }
}

/// Fixed-shape pairwise summation, reproducible for a given length.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    if x.len() <= 16 {
        return x.iter().sum();
    }
    let mid = x.len() / 2;
    pairwise_sum(&x[..mid]) + pairwise_sum(&x[mid..])
}

/// `e^{-1/x}` for `x > 0`, zero otherwise.
fn smooth_h(x: f64) -> f64 {
    if x > 0.0 {
        (-1.0 / x).exp()
    } else {
        0.0
    }
}

/// Smooth step from 0 (x <= 0) to 1 (x >= 1).
pub fn smooth_step(x: f64) -> f64 {
    let (p, q) = (smooth_h(x), smooth_h(1.0 - x));
    p / (p + q)
}

/// Frequency cutoff: 1 on `r <= 1`, 0 on `r >= 2`, smooth in between.
pub fn cutoff(r: f64) -> f64 {
    1.0 - smooth_step(r - 1.0)
}

/// Standard mollifier `exp(-1/(1 - s^2))` on `|s| < 1`, scaled to 1 at 0.
pub fn mollifier(s: f64) -> f64 {
    if s.abs() < 1.0 {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}
