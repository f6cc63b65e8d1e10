use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::branches::build_branches_sys;
use super::{eigen_solve, eigenvalues, max_entry, SymbolMatrix, SystemCoeffs};
use crate::error::{Error, Result};
use crate::model::{classify_stability, DerivedCoeffs, ModelParams, Stability};
use crate::optimize::{golden_section_max, log_space};

/// `max_i Re lambda_i(r)`.
pub fn max_real_part(sys: &SystemCoeffs, r: f64) -> f64 {
    eigenvalues(sys, r).iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

/// Default low/high frequency thresholds `(eta1, eta2)`.
pub fn default_bands(coeffs: &DerivedCoeffs, params: &ModelParams) -> (f64, f64) {
    default_bands_sys(&SystemCoeffs::new(coeffs, params))
}

pub(crate) fn default_bands_sys(sys: &SystemCoeffs) -> (f64, f64) {
    let eta1 = 0.01 * 1f64.min(sys.alpha).min(sys.nu) / 1f64.max(sys.a).max(sys.b);
    let eta2 = 100.0 * 1f64.max(sys.a).max(sys.alpha).max(sys.nu).max((sys.nu / sys.mu).sqrt());
    (eta1, eta2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthSearch {
    pub r_min: f64,
    pub r_max: f64,
    pub coarse_n: usize,
    /// Relative tolerance in `r` for the golden-section refinement.
    pub refine_tol: f64,
}

impl GrowthSearch {
    pub fn default_for(coeffs: &DerivedCoeffs, params: &ModelParams) -> Self {
        let (_, eta2) = default_bands(coeffs, params);
        Self { r_min: 1e-4, r_max: 10.0 * eta2, coarse_n: 4096, refine_tol: 1e-10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthSummary {
    /// Supremum of `Re lambda` over the search window.
    pub theta: f64,
    /// Wavenumber at which it is attained (or approached).
    pub xi0: f64,
    /// Whether the supremum is an interior maximum (unstable regime).
    pub attained: bool,
    /// Low-frequency label (1..=3) of the attaining branch.
    pub branch_index: usize,
    pub stability: Stability,
}

pub fn find_growth_max(
    coeffs: &DerivedCoeffs,
    params: &ModelParams,
    search: &GrowthSearch,
) -> Result<GrowthSummary> {
    find_growth_max_sys(&SystemCoeffs::new(coeffs, params), classify_stability(coeffs), search)
}

pub(crate) fn find_growth_max_sys(
    sys: &SystemCoeffs,
    stability: Stability,
    search: &GrowthSearch,
) -> Result<GrowthSummary> {
    if !(search.r_min > 0.0 && search.r_max > search.r_min) {
        return Err(Error::Window(format!(
            "need 0 < r_min < r_max, got [{}, {}]",
            search.r_min, search.r_max
        )));
    }
    if search.coarse_n < 3 {
        return Err(Error::Window("coarse_n must be at least 3".into()));
    }
    let grid = log_space(search.r_min, search.r_max, search.coarse_n);
    let branches = build_branches_sys(sys, &grid)?;
    let envelope: Vec<f64> = branches
        .values
        .par_iter()
        .map(|v| v.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let (j, &best) = envelope
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .expect("non-empty grid");
    let label_at = |idx: usize| {
        let v = &branches.values[idx];
        (0..3).max_by(|&p, &q| v[p].re.total_cmp(&v[q].re)).expect("three branches") + 1
    };

    if stability != Stability::Unstable {
        return Ok(GrowthSummary {
            theta: best,
            xi0: grid[j],
            attained: false,
            branch_index: label_at(j),
            stability,
        });
    }

    let n = grid.len();
    if envelope[0] <= 0.0 {
        return Err(Error::Window(format!(
            "max Re lambda at r_min = {:.3e} is {:.3e} <= 0; decrease r_min",
            grid[0], envelope[0]
        )));
    }
    if envelope[n - 1] >= 0.0 {
        return Err(Error::Window(format!(
            "max Re lambda at r_max = {:.3e} is {:.3e} >= 0; increase r_max",
            grid[n - 1], envelope[n - 1]
        )));
    }
    if j == 0 || j == n - 1 {
        return Err(Error::Window(format!(
            "maximum attained at window endpoint r = {:.3e}; widen the window",
            grid[j]
        )));
    }
    let (xi0, theta) = golden_section_max(
        |r| max_real_part(sys, r),
        grid[j - 1],
        grid[j + 1],
        search.refine_tol,
        500,
    );
    let (xi0, theta) = if theta >= best { (xi0, theta) } else { (grid[j], best) };
    let (xi0, theta) = polish_stationary(sys, xi0, theta, search.refine_tol);
    Ok(GrowthSummary { theta, xi0, attained: true, branch_index: label_at(j), stability })
}

/// `d/dr Re lambda_max(r)` by implicit differentiation of `F(r, lambda) = 0`.
fn growth_slope(sys: &SystemCoeffs, r: f64) -> f64 {
    let l = eigenvalues(sys, r);
    let lam = l.iter().copied().max_by(|x, y| x.re.total_cmp(&y.re)).expect("three roots");
    let cubic = sys.dispersion_cubic(r);
    let (_, f_lam) = cubic.eval_with_derivative(lam);
    let a2 = sys.a * sys.a;
    let f_r = lam * lam * (2.0 * sys.mu * r)
        + lam * (2.0 * (a2 + sys.alpha * sys.mu) * r)
        + 4.0 * a2 * sys.mu * r * r * r
        + 2.0 * sys.a * sys.discriminant() * r;
    (-f_r / f_lam).re
}

/// The golden-section estimate is limited by the flatness of the peak
/// (`~sqrt(eps)` in r); bisection on the sign of the slope pins the
/// stationary point down to rounding.
fn polish_stationary(sys: &SystemCoeffs, xi0: f64, theta: f64, rel_tol: f64) -> (f64, f64) {
    let half = (1e3 * rel_tol).max(1e-9) * xi0;
    let (mut lo, mut hi) = (xi0 - half, xi0 + half);
    if !(growth_slope(sys, lo) > 0.0 && growth_slope(sys, hi) < 0.0) {
        return (xi0, theta);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if growth_slope(sys, mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = 0.5 * (lo + hi);
    let fx = max_real_part(sys, x);
    if fx >= theta - 1e-15 {
        (x, fx.max(theta))
    } else {
        (xi0, theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandBound {
    pub eta1: f64,
    pub eta2: f64,
    /// `max_{eta1 <= r <= eta2} max_i Re lambda_i`.
    pub band_max_re: f64,
    /// `-band_max_re` in the stable regime.
    pub vartheta: Option<f64>,
    /// Global growth rate in the unstable regime.
    pub theta: Option<f64>,
    /// `band_max_re <= theta + 1e-10` (unstable regime).
    pub within_theta: Option<bool>,
    /// `max_i |P_i|` (max-entry norm) over non-degenerate band points.
    pub projector_bound: f64,
    pub degenerate_points: usize,
}

const BAND_POINTS: usize = 2048;

pub fn middle_band_bound(
    coeffs: &DerivedCoeffs,
    params: &ModelParams,
    eta1: f64,
    eta2: f64,
) -> Result<BandBound> {
    if !(eta1 > 0.0 && eta2 > eta1) {
        return Err(Error::domain(format!("need 0 < eta1 < eta2, got [{eta1}, {eta2}]")));
    }
    let sys = SystemCoeffs::new(coeffs, params);
    let grid = log_space(eta1, eta2, BAND_POINTS);
    let scan: Vec<(f64, Option<f64>)> = grid
        .par_iter()
        .map(|&r| {
            let p = eigen_solve(&SymbolMatrix::new(sys, r).expect("r > 0"));
            let re = p.lambdas.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
            let norm = p.projectors.map(|ps| ps.iter().map(max_entry).fold(0.0, f64::max));
            (re, norm)
        })
        .collect();
    let band_max_re = scan.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    let projector_bound = scan.iter().filter_map(|s| s.1).fold(0.0, f64::max);
    let degenerate_points = scan.iter().filter(|s| s.1.is_none()).count();
    let stability = classify_stability(coeffs);
    let (vartheta, theta, within_theta) = match stability {
        Stability::Stable => (Some(-band_max_re), None, None),
        Stability::Unstable => {
            let g = find_growth_max_sys(&sys, stability, &GrowthSearch::default_for(coeffs, params))?;
            (None, Some(g.theta), Some(band_max_re <= g.theta + 1e-10))
        }
        Stability::Borderline => (None, None, None),
    };
    Ok(BandBound {
        eta1,
        eta2,
        band_max_re,
        vartheta,
        theta,
        within_theta,
        projector_bound,
        degenerate_points,
    })
}
