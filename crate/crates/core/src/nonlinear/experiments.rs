//! Escape-time measurements in the unstable regime and perturbation decay
//! in the stable regime.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{l2_norm, TorusField, TorusGrid};
use super::stepper::{join_velocity, split_velocity, Solver, StepperConfig, TorusNorms};
use crate::dispersion::{eigenvalues, max_real_part, GrowthSummary, SystemCoeffs};
use crate::error::{Error, Result};
use crate::instability::{build_bump, predict_escape, AttainingBranch};
use crate::model::{classify_stability, DerivedCoeffs, ModelParams, Stability};
use crate::ratefit::{fit_exponential, linear_fit, weighted_sup, Field, NormSeries, RateFit};
use crate::semigroup::{CVec3, ModePropagator};

/// Exact linear evolution of a torus state over time `t`, mode by mode.
pub fn propagate_linear(
    grid: &TorusGrid,
    sys: SystemCoeffs,
    state: &TorusField,
    t: f64,
) -> Result<TorusField> {
    let dim = grid.dim();
    let mut out = TorusField::zeros(grid);
    let mut cache = std::collections::BTreeMap::new();
    let damp = (-sys.alpha * t).exp();
    for (i, m) in grid.modes().iter().enumerate() {
        let vi: Vec<Complex64> = (0..dim).map(|j| state.v[j][i]).collect();
        let (d, mut w) = split_velocity(&m.k, m.k_abs, &vi);
        w.iter_mut().for_each(|x| *x *= damp);
        let (rho, d, phi) = if m.m_sq == 0 {
            let e = (-sys.nu * t).exp();
            let rho = state.rho[i];
            (rho, Complex64::new(0.0, 0.0), state.phi[i] * e + rho * (sys.gamma * (1.0 - e) / sys.nu))
        } else {
            if let std::collections::btree_map::Entry::Vacant(e) = cache.entry(m.m_sq) {
                e.insert(ModePropagator::new(sys, m.k_abs)?.at(t)?);
            }
            let u = cache[&m.m_sq] * CVec3::new(state.rho[i], d, state.phi[i]);
            (u[0], u[1], u[2])
        };
        out.rho[i] = rho;
        out.phi[i] = phi;
        let v = join_velocity(&m.k, m.k_abs, d, &w, dim);
        for j in 0..dim {
            out.v[j][i] = v[j];
        }
    }
    Ok(out)
}

/// Eigenvector data on lattice mode `+-mode` of a 1-D grid for the fastest
/// growing eigenvalue there, scaled so that `||rho||_{L2} = delta`.
pub fn resonant_mode(
    grid: &TorusGrid,
    sys: SystemCoeffs,
    delta: f64,
    mode: usize,
) -> Result<(TorusField, Complex64)> {
    if grid.dim() != 1 {
        return Err(Error::domain("resonant-mode data are built on 1-D grids"));
    }
    let n = grid.n();
    if mode == 0 || 3 * mode >= n {
        return Err(Error::domain(format!("mode {mode} is outside the dealiased band of n = {n}")));
    }
    let k = grid.modes()[mode].k_abs;
    let lambda = eigenvalues(&sys, k)
        .into_iter()
        .max_by(|x, y| x.re.total_cmp(&y.re))
        .unwrap_or_default();
    let c = Complex64::new(delta / (2.0 * grid.length()).sqrt(), 0.0);
    let d = -lambda * c / (sys.a * k);
    let phi = c * sys.gamma / (lambda + sys.nu + sys.mu * k * k);
    let mut f = TorusField::zeros(grid);
    for (idx, sign) in [(mode, 1.0f64), (n - mode, -1.0)] {
        let conj = |z: Complex64| if sign > 0.0 { z } else { z.conj() };
        f.rho[idx] = conj(c);
        f.phi[idx] = conj(phi);
        f.v[0][idx] = Complex64::new(0.0, -sign) * conj(d);
    }
    Ok((f, lambda))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EscapeConfig {
    pub n: usize,
    /// Box length; `None` puts the first lattice wavenumber exactly on `xi0`.
    pub length: Option<f64>,
    pub dt: f64,
    pub epsilon0: f64,
    pub deltas: Vec<f64>,
    /// Cap on simulated time; `None` uses twice the predicted escape time
    /// plus `10 / Theta`.
    pub t_max: Option<f64>,
    /// Steps between recorded norm samples.
    pub sample_every: u64,
}

impl EscapeConfig {
    pub fn default_for(params: &ModelParams) -> Self {
        Self {
            n: 1024,
            length: None,
            dt: 1e-3,
            epsilon0: 0.05 * params.rho_bar,
            deltas: vec![1e-4, 1e-5, 1e-6, 1e-7],
            t_max: None,
            sample_every: 250,
        }
    }
}

/// Fraction of `epsilon0` every component must reach at the escape time.
pub const COMPONENT_FLOOR: f64 = 0.1;
pub const ESCAPE_SLOPE_TOL: f64 = 0.1;
pub const LINEAR_PHASE_TOL: f64 = 0.05;

#[derive(Debug, Clone, Serialize)]
pub struct EscapeRun {
    pub delta: f64,
    pub crossed: bool,
    pub t_delta: Option<f64>,
    pub predicted_t: f64,
    /// `(||rho||, ||u||, ||phi||)` at the first crossing.
    pub norms_at_crossing: Option<[f64; 3]>,
    /// Largest `| ||rho(t)|| / (delta e^{Re lambda t}) - 1 |` while
    /// `||rho|| <= epsilon0 / 10`.
    pub linear_phase_deviation: f64,
    pub mean_rho_drift: f64,
    pub samples: Vec<(f64, TorusNorms)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EscapeReport {
    pub theta: f64,
    pub xi0: f64,
    pub k_star: f64,
    pub growth_rate_k_star: f64,
    pub box_length: f64,
    pub runs: Vec<EscapeRun>,
    pub slope: Option<f64>,
    pub expected_slope: f64,
    pub slope_rel_error: Option<f64>,
    pub components_above_floor: bool,
    pub linear_phase_ok: bool,
    pub inconclusive: bool,
    pub pass: bool,
}

pub fn run_escape_experiment(
    params: &ModelParams,
    coeffs: &DerivedCoeffs,
    growth: &GrowthSummary,
    cfg: &EscapeConfig,
) -> Result<EscapeReport> {
    if growth.stability != Stability::Unstable || !growth.attained {
        return Err(Error::Regime("escape experiments need the unstable regime".into()));
    }
    if cfg.deltas.len() < 2 {
        return Err(Error::domain("need at least two delta values"));
    }
    let sys = SystemCoeffs::new(coeffs, params);
    let grid = match cfg.length {
        None => TorusGrid::resonant(1, cfg.n, growth.xi0)?,
        Some(l) => TorusGrid::new(1, cfg.n, l)?,
    };
    // the lattice must reach into the support of the growing bump
    let bump = build_bump(&AttainingBranch::track(sys, growth)?, 0.25 * growth.theta)?;
    let k_star = grid.check_resonance(growth.xi0, bump.zeta_bar)?;
    let mode = (k_star * grid.length() / (2.0 * std::f64::consts::PI)).round() as usize;
    let stepper = StepperConfig::new(cfg.dt);
    stepper.validate(&grid, coeffs.a)?;
    let runs: Vec<EscapeRun> = cfg
        .deltas
        .par_iter()
        .map(|&delta| escape_run(&grid, params, coeffs, sys, growth.theta, cfg, delta, mode))
        .collect::<Result<_>>()?;
    let growth_rate_k_star = max_real_part(&sys, k_star);
    let expected_slope = 1.0 / growth.theta;
    let crossed: Vec<&EscapeRun> = runs.iter().filter(|r| r.crossed).collect();
    let inconclusive = crossed.len() < runs.len();
    let (slope, slope_rel_error) = if crossed.len() >= 2 {
        let x: Vec<f64> = crossed.iter().map(|r| (1.0 / r.delta).ln()).collect();
        let y: Vec<f64> = crossed.iter().filter_map(|r| r.t_delta).collect();
        let s = linear_fit(&x, &y).slope;
        (Some(s), Some((s / expected_slope - 1.0).abs()))
    } else {
        (None, None)
    };
    let components_above_floor = crossed.iter().all(|r| {
        r.norms_at_crossing.is_some_and(|n| n.iter().all(|&x| x >= COMPONENT_FLOOR * cfg.epsilon0))
    });
    let linear_phase_ok = runs.iter().all(|r| r.linear_phase_deviation <= LINEAR_PHASE_TOL);
    let pass = !inconclusive
        && slope_rel_error.is_some_and(|e| e <= ESCAPE_SLOPE_TOL)
        && components_above_floor
        && linear_phase_ok;
    Ok(EscapeReport {
        theta: growth.theta,
        xi0: growth.xi0,
        k_star,
        growth_rate_k_star,
        box_length: grid.length(),
        runs,
        slope,
        expected_slope,
        slope_rel_error,
        components_above_floor,
        linear_phase_ok,
        inconclusive,
        pass,
    })
}

#[allow(clippy::too_many_arguments)]
fn escape_run(
    grid: &TorusGrid,
    params: &ModelParams,
    coeffs: &DerivedCoeffs,
    sys: SystemCoeffs,
    theta: f64,
    cfg: &EscapeConfig,
    delta: f64,
    mode: usize,
) -> Result<EscapeRun> {
    let predicted_t = predict_escape(theta, cfg.epsilon0, delta)?.t_delta;
    let t_max = cfg.t_max.unwrap_or(2.0 * predicted_t + 10.0 / theta);
    let (init, lambda) = resonant_mode(grid, sys, delta, mode)?;
    let rho0 = l2_norm(grid, &init.rho, 0);
    let mean0 = init.mean_rho();
    let mut solver = Solver::new(grid.clone(), params.clone(), *coeffs, StepperConfig::new(cfg.dt), init)?;
    let u_scale = coeffs.a / params.rho_bar;
    let mut samples = vec![(0.0, solver.norms())];
    let mut deviation = 0.0f64;
    let mut prev = (0.0, rho0);
    let mut crossing = None;
    while solver.time() < t_max {
        solver.step()?;
        let t = solver.time();
        let rho = l2_norm(grid, &solver.state().rho, 0);
        if rho <= 0.1 * cfg.epsilon0 {
            deviation = deviation.max((rho / (rho0 * (lambda.re * t).exp()) - 1.0).abs());
        }
        if solver.steps() % cfg.sample_every == 0 {
            samples.push((t, solver.norms()));
        }
        if rho >= cfg.epsilon0 {
            let (t0, r0) = prev;
            let w = (cfg.epsilon0.ln() - r0.ln()) / (rho.ln() - r0.ln());
            let tc = t0 + w * (t - t0);
            let n = solver.norms();
            crossing = Some((tc, [n.rho[0], u_scale * n.v[0], n.phi[0]]));
            samples.push((t, n));
            break;
        }
        prev = (t, rho);
    }
    let mean_rho_drift = (solver.state().mean_rho() - mean0).abs();
    Ok(EscapeRun {
        delta,
        crossed: crossing.is_some(),
        t_delta: crossing.map(|c| c.0),
        predicted_t,
        norms_at_crossing: crossing.map(|c| c.1),
        linear_phase_deviation: deviation,
        mean_rho_drift,
        samples,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayConfig {
    pub dim: usize,
    pub n: usize,
    pub length: f64,
    pub dt: f64,
    pub t_max: f64,
    pub amplitude: f64,
    pub seed: u64,
    pub max_mode: i64,
    pub sample_every: u64,
}

impl DecayConfig {
    pub fn default_for(params: &ModelParams) -> Self {
        Self {
            dim: 1,
            n: 64,
            length: 8.0 * std::f64::consts::PI,
            dt: 0.02,
            t_max: 300.0,
            amplitude: 1e-3 * params.rho_bar,
            seed: 1,
            max_mode: 3,
            sample_every: 25,
        }
    }
}

pub const DECAY_RATE_TOL: f64 = 0.05;

#[derive(Debug, Clone, Serialize)]
pub struct DecayReport {
    #[serde(skip)]
    pub norms: NormSeries,
    /// Running weighted supremum at each sample time.
    pub weighted: Vec<f64>,
    pub fit: RateFit,
    /// `-max Re lambda` over the nonzero lattice modes.
    pub expected_rate: f64,
    pub rate_rel_error: f64,
    pub transient: f64,
    /// Last sample time at which `||(rho, phi)||` or `||v||` increased.
    pub last_increase: f64,
    pub growth_detected: bool,
    pub mean_rho_drift: f64,
    pub pass: bool,
}

/// Slowest decay rate among the nonzero lattice wavenumbers.
pub fn lattice_decay_rate(grid: &TorusGrid, sys: &SystemCoeffs) -> f64 {
    -grid.distinct_wavenumbers().iter().map(|&k| max_real_part(sys, k)).fold(f64::NEG_INFINITY, f64::max)
}

pub fn run_decay_experiment(params: &ModelParams, coeffs: &DerivedCoeffs, cfg: &DecayConfig) -> Result<DecayReport> {
    if classify_stability(coeffs) != Stability::Stable {
        return Err(Error::Regime("decay experiments need the stable regime".into()));
    }
    let sys = SystemCoeffs::new(coeffs, params);
    let grid = TorusGrid::new(cfg.dim, cfg.n, cfg.length)?;
    let init = TorusField::random_low_modes(&grid, cfg.amplitude, cfg.max_mode, cfg.seed);
    let mean0 = init.mean_rho();
    let mut solver = Solver::new(grid.clone(), params.clone(), *coeffs, StepperConfig::new(cfg.dt), init)?;
    let mut norms = NormSeries::default();
    solver.norms().push_into(&mut norms, 0.0);
    let total_steps = (cfg.t_max / cfg.dt).round() as u64;
    while solver.steps() < total_steps {
        solver.step()?;
        if solver.steps() % cfg.sample_every == 0 || solver.steps() == total_steps {
            solver.norms().push_into(&mut norms, solver.time());
        }
    }
    let weighted = weighted_sup(&norms)?;
    let transient = 5.0 / params.alpha;
    let series = norms.pairs(Field::RhoPhi, 0).unwrap_or_default();
    let fit = fit_exponential(&series, (transient, cfg.t_max))?;
    let expected_rate = lattice_decay_rate(&grid, &sys);
    let rate_rel_error = (fit.exponent / expected_rate - 1.0).abs();
    let mut last_increase = 0.0f64;
    for field in [Field::RhoPhi, Field::V] {
        let s = norms.get(field, 0).unwrap_or(&[]);
        for i in 1..s.len() {
            if s[i] > s[i - 1] {
                last_increase = last_increase.max(norms.times[i]);
            }
        }
    }
    let first = series.first().map(|p| p.1).unwrap_or(0.0);
    let last = series.last().map(|p| p.1).unwrap_or(0.0);
    let growth_detected = fit.exponent <= 0.0 || last > first;
    let mean_rho_drift = (solver.state().mean_rho() - mean0).abs();
    let pass = !growth_detected && rate_rel_error <= DECAY_RATE_TOL && last_increase <= transient;
    Ok(DecayReport {
        norms,
        weighted,
        fit,
        expected_rate,
        rate_rel_error,
        transient,
        last_increase,
        growth_detected,
        mean_rho_drift,
        pass,
    })
}
