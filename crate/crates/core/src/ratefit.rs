//! Power-law and exponential envelope fits for norm time series, and the
//! time-weighted supremum functional.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordinary least-squares line `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub residual_max: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> LineFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut ss_res = 0.0;
    let mut residual_max = 0.0f64;
    for (a, b) in x.iter().zip(y) {
        let e = b - (intercept + slope * a);
        ss_res += e * e;
        residual_max = residual_max.max(e.abs());
    }
    let r_squared = if syy > 0.0 { (1.0 - ss_res / syy).clamp(0.0, 1.0) } else { 1.0 };
    LineFit { slope, intercept, r_squared, residual_max }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateModel {
    /// `amplitude * (1 + t)^exponent`
    Power,
    /// `amplitude * exp(-exponent * t)`
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub model: RateModel,
    /// Power: the log-log slope `p` (negative for decay).
    /// Exponential: the decay rate `c` (positive for decay).
    pub exponent: f64,
    pub amplitude: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    /// Largest absolute residual in log space.
    pub residual_max: f64,
    pub points: usize,
}

const MIN_POINTS: usize = 10;

fn windowed(series: &[(f64, f64)], window: (f64, f64)) -> Result<Vec<(f64, f64)>> {
    if !(window.0 <= window.1) {
        return Err(Error::domain(format!("empty fit window [{}, {}]", window.0, window.1)));
    }
    let pts: Vec<(f64, f64)> =
        series.iter().copied().filter(|(t, _)| *t >= window.0 && *t <= window.1).collect();
    if pts.len() < MIN_POINTS {
        return Err(Error::domain(format!(
            "fit window [{}, {}] holds {} points, need at least {MIN_POINTS}",
            window.0,
            window.1,
            pts.len()
        )));
    }
    if let Some((t, v)) = pts.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(Error::domain(format!("non-positive value {v} at t = {t}")));
    }
    Ok(pts)
}

pub fn fit_power(series: &[(f64, f64)], window: (f64, f64)) -> Result<RateFit> {
    let pts = windowed(series, window)?;
    let x: Vec<f64> = pts.iter().map(|(t, _)| t.ln_1p()).collect();
    let y: Vec<f64> = pts.iter().map(|(_, v)| v.ln()).collect();
    let l = linear_fit(&x, &y);
    Ok(RateFit {
        model: RateModel::Power,
        exponent: l.slope,
        amplitude: l.intercept.exp(),
        r_squared: l.r_squared,
        window,
        residual_max: l.residual_max,
        points: pts.len(),
    })
}

pub fn fit_exponential(series: &[(f64, f64)], window: (f64, f64)) -> Result<RateFit> {
    let pts = windowed(series, window)?;
    let x: Vec<f64> = pts.iter().map(|(t, _)| *t).collect();
    let y: Vec<f64> = pts.iter().map(|(_, v)| v.ln()).collect();
    let l = linear_fit(&x, &y);
    Ok(RateFit {
        model: RateModel::Exponential,
        exponent: -l.slope,
        amplitude: l.intercept.exp(),
        r_squared: l.r_squared,
        window,
        residual_max: l.residual_max,
        points: pts.len(),
    })
}

/// Which field a norm series belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Rho,
    V,
    Phi,
    /// Joint norm `||(rho, phi)||`.
    RhoPhi,
    D,
    Omega,
}

impl Field {
    pub fn name(&self) -> &'static str {
        match self {
            Field::Rho => "rho",
            Field::V => "v",
            Field::Phi => "phi",
            Field::RhoPhi => "rho_phi",
            Field::D => "d",
            Field::Omega => "omega",
        }
    }
}

/// Norm time series keyed by `(field, derivative order)`, sampled at common
/// times.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NormSeries {
    pub times: Vec<f64>,
    pub series: BTreeMap<(Field, usize), Vec<f64>>,
}

impl NormSeries {
    pub fn get(&self, field: Field, k: usize) -> Option<&[f64]> {
        self.series.get(&(field, k)).map(Vec::as_slice)
    }

    pub fn pairs(&self, field: Field, k: usize) -> Option<Vec<(f64, f64)>> {
        let s = self.get(field, k)?;
        Some(self.times.iter().copied().zip(s.iter().copied()).collect())
    }
}

/// Running supremum, evaluated at every sample time:
///
/// ```text
/// M(t) = sup_{tau <= t} [ sum_{k<=3} (1+tau)^{3/4+k/2} ||grad^k (rho, phi)||
///        + sum_{k<=2} (1+tau)^{5/4+k/2} ||grad^k v|| + (1+tau)^{9/4} ||grad^3 v|| ]
/// ```
pub fn weighted_sup(norms: &NormSeries) -> Result<Vec<f64>> {
    let n = norms.times.len();
    let mut needed = Vec::new();
    for k in 0..4 {
        needed.push((Field::RhoPhi, k));
        needed.push((Field::V, k));
    }
    for key in &needed {
        match norms.series.get(key) {
            None => {
                return Err(Error::domain(format!(
                    "missing series {}[k={}]",
                    key.0.name(),
                    key.1
                )))
            }
            Some(s) if s.len() != n => {
                return Err(Error::domain(format!(
                    "series {}[k={}] has {} samples, expected {n}",
                    key.0.name(),
                    key.1,
                    s.len()
                )))
            }
            _ => {}
        }
    }
    let mut running = 0.0f64;
    let mut out = Vec::with_capacity(n);
    for (i, &t) in norms.times.iter().enumerate() {
        let w = 1.0 + t;
        let mut total = 0.0;
        for k in 0..4 {
            let kf = k as f64;
            total += w.powf(0.75 + 0.5 * kf) * norms.series[&(Field::RhoPhi, k)][i];
            let v_weight = if k < 3 { 1.25 + 0.5 * kf } else { 2.25 };
            total += w.powf(v_weight) * norms.series[&(Field::V, k)][i];
        }
        running = running.max(total);
        out.push(running);
    }
    Ok(out)
}
