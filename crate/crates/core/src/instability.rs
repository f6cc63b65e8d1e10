//! Unstable initial data concentrated near the most unstable wavenumber,
//! the two-sided linear growth certificate and the escape-time law.

use num_complex::Complex64;
use serde::Serialize;

use crate::dispersion::{eigenvalues, match_branches, GrowthSummary, SymbolMatrix, SystemCoeffs};
use crate::error::{Error, Result};
use crate::model::Stability;
use crate::semigroup::quadrature::smooth_step;
use crate::semigroup::{mode_exp, CVec3, Component, RadialGrid, RadialProfile};

const SCAN_HALF_POINTS: usize = 2048;
const PROFILE_INTERVALS: usize = 4096;
pub const SANDWICH_SLACK: f64 = 1e-6;
const CROSS_CHECK_NODES: usize = 10;
pub const CROSS_CHECK_TOL: f64 = 1e-8;

/// The attaining eigenvalue branch `lambda_0(r)` sampled on
/// `[xi0/2, 3 xi0/2]`, tracked for continuity outward from `xi0`.
#[derive(Debug, Clone)]
pub struct AttainingBranch {
    pub sys: SystemCoeffs,
    pub xi0: f64,
    pub theta: f64,
    pub grid: Vec<f64>,
    pub lambda0: Vec<Complex64>,
}

impl AttainingBranch {
    pub fn track(sys: SystemCoeffs, growth: &GrowthSummary) -> Result<Self> {
        if growth.stability != Stability::Unstable || !growth.attained {
            return Err(Error::Regime("unstable data need an attained growth maximum".into()));
        }
        let xi0 = growth.xi0;
        let h = 0.5 * xi0 / SCAN_HALF_POINTS as f64;
        let center = eigenvalues(&sys, xi0);
        let k = (0..3)
            .min_by(|&i, &j| {
                let di = (center[i] - growth.theta).norm();
                let dj = (center[j] - growth.theta).norm();
                di.total_cmp(&dj)
            })
            .unwrap_or(0);
        let others: Vec<usize> = (0..3).filter(|&i| i != k).collect();
        let initial = [center[k], center[others[0]], center[others[1]]];
        let walk = |sign: f64| -> Vec<Complex64> {
            let roots: Vec<[Complex64; 3]> = (0..=SCAN_HALF_POINTS)
                .map(|i| eigenvalues(&sys, xi0 + sign * h * i as f64))
                .collect();
            match_branches(&roots, &initial).into_iter().map(|v| v[0]).collect()
        };
        let up = walk(1.0);
        let down = walk(-1.0);
        let mut grid = Vec::with_capacity(2 * SCAN_HALF_POINTS + 1);
        let mut lambda0 = Vec::with_capacity(2 * SCAN_HALF_POINTS + 1);
        for i in (1..=SCAN_HALF_POINTS).rev() {
            grid.push(xi0 - h * i as f64);
            lambda0.push(down[i]);
        }
        for (i, l) in up.iter().enumerate() {
            grid.push(xi0 + h * i as f64);
            lambda0.push(*l);
        }
        Ok(Self { sys, xi0, theta: growth.theta, grid, lambda0 })
    }

    /// `lambda_0(r)` for `r` inside the scanned range: the root closest to
    /// the interpolated scan value.
    pub fn eval(&self, r: f64) -> Result<Complex64> {
        let (lo, hi) = (self.grid[0], self.grid[self.grid.len() - 1]);
        if !(r >= lo && r <= hi) {
            return Err(Error::domain(format!("r = {r} outside the tracked range [{lo}, {hi}]")));
        }
        let h = self.grid[1] - self.grid[0];
        let j = (((r - lo) / h).floor() as usize).min(self.grid.len() - 2);
        let w = (r - self.grid[j]) / h;
        let guess = self.lambda0[j] * (1.0 - w) + self.lambda0[j + 1] * w;
        let roots = eigenvalues(&self.sys, r);
        Ok(roots
            .into_iter()
            .min_by(|x, y| (x - guess).norm().total_cmp(&(y - guess).norm()))
            .unwrap_or(guess))
    }

    /// Smallest `Re lambda_0` on `[xi0 - w, xi0 + w]`.
    fn min_re_within(&self, w: f64) -> Result<f64> {
        let (lo, hi) = (self.xi0 - w, self.xi0 + w);
        let mut m = self.eval(lo)?.re.min(self.eval(hi)?.re);
        for (r, l) in self.grid.iter().zip(&self.lambda0) {
            if *r >= lo && *r <= hi {
                m = m.min(l.re);
            }
        }
        Ok(m)
    }
}

/// Initial data `(rho_0, d_0, phi_0)` built on a plateau cutoff around `xi0`.
#[derive(Debug, Clone)]
pub struct BumpData {
    pub xi0: f64,
    pub theta: f64,
    pub theta_bar: f64,
    pub zeta_bar: f64,
    pub profile: RadialProfile,
    /// `lambda_0` at each profile node (zero off the support).
    pub lambda0: Vec<Complex64>,
    pub psi_norm: f64,
    /// `min Re lambda_0` over the support.
    pub min_re_on_support: f64,
    /// `inf |lambda_0| / (a r)` over the support, a lower bound for `||d_0||`.
    pub d_inf_bound: f64,
    /// `Theta / (a (xi0 + 2 zeta_bar))`.
    pub d_theta_bound: f64,
    pub sys: SystemCoeffs,
}

impl BumpData {
    pub fn initial_norm(&self, c: Component) -> f64 {
        self.profile.norm(c, 0)
    }

    /// `U(r, t) = e^{lambda_0(r) t} U_0(r)`.
    pub fn evolve(&self, t: f64) -> RadialProfile {
        let values = self
            .profile
            .values
            .iter()
            .zip(&self.lambda0)
            .map(|(v, l)| {
                let g = (l * t).exp();
                [v[0] * g, v[1] * g, v[2] * g]
            })
            .collect();
        RadialProfile { grid: self.profile.grid.clone(), values, band: self.profile.band }
    }
}

fn check_theta_bar(theta: f64, theta_bar: f64) -> Result<()> {
    if theta_bar > 0.0 && theta_bar < 0.5 * theta {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "theta_bar must lie in the open interval (0, {}), got {theta_bar}",
            0.5 * theta
        )))
    }
}

/// Largest `zeta_bar <= xi0/4` such that `Re lambda_0 >= Theta - theta_bar`
/// on `|r - xi0| <= 2 zeta_bar`, then the data on that support.
pub fn build_bump(branch: &AttainingBranch, theta_bar: f64) -> Result<BumpData> {
    check_theta_bar(branch.theta, theta_bar)?;
    let floor = branch.theta - theta_bar;
    let z_max = 0.25 * branch.xi0;
    let ok = |z: f64| -> Result<bool> { Ok(branch.min_re_within(2.0 * z)? >= floor) };
    let zeta = if ok(z_max)? {
        z_max
    } else {
        let (mut lo, mut hi) = (0.0, z_max);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if ok(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    if zeta <= 0.0 {
        return Err(Error::domain("no admissible bump radius"));
    }
    build_bump_with_radius(branch, theta_bar, zeta)
}

/// Same data for a prescribed radius (no admissibility search).
pub fn build_bump_with_radius(branch: &AttainingBranch, theta_bar: f64, zeta: f64) -> Result<BumpData> {
    check_theta_bar(branch.theta, theta_bar)?;
    if !(zeta > 0.0 && zeta <= 0.25 * branch.xi0) {
        return Err(Error::domain(format!("bump radius must lie in (0, xi0/4], got {zeta}")));
    }
    let sys = branch.sys;
    let xi0 = branch.xi0;
    let (lo, hi) = (xi0 - 2.0 * zeta, xi0 + 2.0 * zeta);
    let grid = RadialGrid::band(lo, hi, PROFILE_INTERVALS)?;
    let psi = |r: f64| 1.0 - smooth_step(((r - xi0).abs() - zeta) / zeta);
    let zero = Complex64::new(0.0, 0.0);
    let mut lambda0 = Vec::with_capacity(grid.len());
    for &r in grid.nodes() {
        lambda0.push(if r >= lo && r <= hi { branch.eval(r)? } else { zero });
    }
    let psi_sq: RadialProfile = RadialProfile::from_fn(grid.clone(), |r| {
        let p = if r >= lo && r <= hi { psi(r) } else { 0.0 };
        [Complex64::new(p, 0.0), zero, zero]
    });
    let psi_norm = psi_sq.norm(Component::Rho, 0);
    let mut values = Vec::with_capacity(grid.len());
    let mut min_re = f64::INFINITY;
    let mut d_inf = f64::INFINITY;
    for (&r, &l) in grid.nodes().iter().zip(&lambda0) {
        let p = if r >= lo && r <= hi { psi(r) } else { 0.0 };
        if p == 0.0 {
            values.push([zero; 3]);
            continue;
        }
        let denom = l + sys.nu + sys.mu * r * r;
        if denom.norm() <= 1e-12 * (sys.nu + sys.mu * r * r) {
            return Err(Error::domain(format!("phi denominator vanishes at r = {r}")));
        }
        min_re = min_re.min(l.re);
        d_inf = d_inf.min(l.norm() / (sys.a * r));
        let rho = Complex64::new(p / psi_norm, 0.0);
        values.push([rho, -l * rho / (sys.a * r), rho * sys.gamma / denom]);
    }
    let profile = RadialProfile { grid, values, band: crate::semigroup::Band::Full };
    profile.check_quadrature(0)?;
    Ok(BumpData {
        xi0,
        theta: branch.theta,
        theta_bar,
        zeta_bar: zeta,
        profile,
        lambda0,
        psi_norm,
        min_re_on_support: min_re,
        d_inf_bound: d_inf,
        d_theta_bound: branch.theta / (sys.a * (xi0 + 2.0 * zeta)),
        sys,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SandwichRow {
    pub t: f64,
    pub component: Component,
    pub norm: f64,
    pub lower: f64,
    pub upper: f64,
    /// `norm / upper`.
    pub upper_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SandwichReport {
    pub theta: f64,
    pub theta_bar: f64,
    pub xi0: f64,
    pub zeta_bar: f64,
    pub rows: Vec<SandwichRow>,
    /// `max(norm / upper, lower / norm)`; at most `1 + slack` on success.
    pub worst_ratio: f64,
    pub worst: Option<(f64, Component)>,
    /// Relative mismatch between the single-branch law and the full
    /// three-by-three propagator at a spread of support nodes.
    pub cross_check_error: f64,
    pub pass: bool,
}

pub fn sandwich_check(bump: &BumpData, times: &[f64]) -> Result<SandwichReport> {
    sandwich_check_with(bump, times, SANDWICH_SLACK)
}

pub fn sandwich_check_with(bump: &BumpData, times: &[f64], slack: f64) -> Result<SandwichReport> {
    let theta = bump.theta;
    for &t in times {
        if !(t >= 0.0 && theta * t <= 40.0) {
            return Err(Error::domain(format!("sample time {t} outside [0, 40/Theta]")));
        }
    }
    let n0: Vec<f64> = Component::ALL.iter().map(|&c| bump.initial_norm(c)).collect();
    if n0.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::domain("initial norms must be positive"));
    }
    let mut rows = Vec::new();
    let mut worst_ratio = 0.0f64;
    let mut worst = None;
    for &t in times {
        let f = bump.evolve(t);
        for (i, &c) in Component::ALL.iter().enumerate() {
            let norm = f.norm(c, 0);
            let lower = ((theta - bump.theta_bar) * t).exp() * n0[i];
            let upper = (theta * t).exp() * n0[i];
            let ratio = (norm / upper).max(lower / norm);
            if ratio > worst_ratio {
                worst_ratio = ratio;
                worst = Some((t, c));
            }
            rows.push(SandwichRow { t, component: c, norm, lower, upper, upper_ratio: norm / upper });
        }
    }
    let t_check = times.iter().copied().fold(0.0, f64::max);
    let cross_check_error = cross_check(bump, t_check)?;
    let pass = worst_ratio <= 1.0 + slack && cross_check_error <= CROSS_CHECK_TOL;
    Ok(SandwichReport {
        theta,
        theta_bar: bump.theta_bar,
        xi0: bump.xi0,
        zeta_bar: bump.zeta_bar,
        rows,
        worst_ratio,
        worst,
        cross_check_error,
        pass,
    })
}

fn cross_check(bump: &BumpData, t: f64) -> Result<f64> {
    let support: Vec<usize> = bump
        .profile
        .values
        .iter()
        .enumerate()
        .filter(|(_, v)| v[0].norm() > 0.0)
        .map(|(i, _)| i)
        .collect();
    let mut worst = 0.0f64;
    for j in 0..CROSS_CHECK_NODES {
        let idx = support[(2 * j + 1) * support.len() / (2 * CROSS_CHECK_NODES)];
        let r = bump.profile.grid.nodes()[idx];
        let v = bump.profile.values[idx];
        let u0 = CVec3::new(v[0], v[1], v[2]);
        let point = crate::dispersion::eigen_solve(&SymbolMatrix::new(bump.sys, r)?);
        let full = mode_exp(&point, t) * u0;
        let single = u0 * (bump.lambda0[idx] * t).exp();
        let scale = u0.norm() * (bump.theta * t).exp();
        worst = worst.max((full - single).norm() / scale);
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EscapePrediction {
    pub delta: f64,
    pub epsilon0: f64,
    pub theta: f64,
    pub t_delta: f64,
}

/// `T = ln(2 epsilon0 / delta) / Theta`.
pub fn predict_escape(theta: f64, epsilon0: f64, delta: f64) -> Result<EscapePrediction> {
    if !(theta > 0.0 && epsilon0 > 0.0 && delta > 0.0) {
        return Err(Error::domain("Theta, epsilon0 and delta must be positive"));
    }
    if delta >= 2.0 * epsilon0 {
        return Err(Error::domain(format!(
            "delta = {delta} must be below 2 epsilon0 = {}",
            2.0 * epsilon0
        )));
    }
    Ok(EscapePrediction { delta, epsilon0, theta, t_delta: (2.0 * epsilon0 / delta).ln() / theta })
}
