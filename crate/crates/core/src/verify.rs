//! Named verification batteries behind `vspectra verify --suite`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::Serialize;

use crate::dispersion::{
    build_branches, eigen_solve, find_growth_max, high_freq_bound, low_freq_bound, verify_high_freq_expansion,
    verify_low_freq_expansion, GrowthSearch, SymbolMatrix, SystemCoeffs,
};
use crate::error::{Error, Result};
use crate::instability::{build_bump, sandwich_check, AttainingBranch};
use crate::model::{derive_coeffs, ModelParams};
use crate::nonlinear::{run_decay_experiment, run_escape_experiment, DecayConfig, EscapeConfig};
use crate::optimize::log_space;
use crate::ratefit::{fit_exponential, RateFit};
use crate::semigroup::{cutoff, decay_envelope_check, OmegaState, RadialGrid, RadialProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Asymptotics,
    Sandwich,
    Decay,
    Escape,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Asymptotics, Suite::Sandwich, Suite::Decay, Suite::Escape];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Asymptotics => "asymptotics",
            Suite::Sandwich => "sandwich",
            Suite::Decay => "decay",
            Suite::Escape => "escape",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidParameter {
                name: "suite",
                reason: format!("unknown suite '{s}' (asymptotics, sandwich, decay, escape)"),
            })
    }
}

/// One assertion: `|value - expected| <= tolerance`.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    pub fn close(name: impl Into<String>, value: f64, expected: f64, tolerance: f64) -> Self {
        let pass = (value - expected).abs() <= tolerance;
        Self { name: name.into(), value, expected, tolerance, pass }
    }

    /// `value <= bound`, reported with `expected = bound`.
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, expected: bound, tolerance: 0.0, pass: value <= bound }
    }

    pub fn flag(name: impl Into<String>, ok: bool) -> Self {
        let v = if ok { 1.0 } else { 0.0 };
        Self { name: name.into(), value: v, expected: 1.0, tolerance: 0.0, pass: ok }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl SuiteReport {
    fn new(suite: Suite, checks: Vec<Check>) -> Self {
        let pass = !checks.is_empty() && checks.iter().all(|c| c.pass);
        Self { suite, checks, pass }
    }
}

pub fn run_suite(suite: Suite, params: &ModelParams) -> Result<SuiteReport> {
    let checks = match suite {
        Suite::Asymptotics => asymptotics(params)?,
        Suite::Sandwich => sandwich(params)?,
        Suite::Decay => decay(params)?,
        Suite::Escape => escape(params)?,
    };
    Ok(SuiteReport::new(suite, checks))
}

pub const EXPANSION_REL_TOL: f64 = 0.01;
pub const VIETA_TOL: f64 = 1e-9;
pub const PROJECTOR_TOL: f64 = 1e-9;

fn asymptotics(params: &ModelParams) -> Result<Vec<Check>> {
    let coeffs = derive_coeffs(params)?;
    let sys = SystemCoeffs::new(&coeffs, params);
    let mut out = Vec::new();

    let lb = low_freq_bound(&sys);
    let low = build_branches(&coeffs, params, &log_space(1e-3 * lb, 0.5 * lb, 40))?;
    let rep = verify_low_freq_expansion(&low, &coeffs, params)?;
    for f in &rep.fits {
        let tol = EXPANSION_REL_TOL * f.predicted.abs().max(if f.predicted == 0.0 { 1.0 } else { 0.0 });
        out.push(Check::close(format!("low lambda{} {}", f.label, f.quantity), f.fitted, f.predicted, tol));
    }

    let hb = high_freq_bound(&sys);
    let high = build_branches(&coeffs, params, &log_space(hb, 50.0 * hb, 30))?;
    let h = verify_high_freq_expansion(&high, &coeffs, params)?;
    out.push(Check::close("high pair residual slope", h.pair_slope, -1.0, 0.2));
    out.push(Check::close("high diffusive residual slope", h.real_slope, -2.0, 0.2));

    let mut vieta = 0.0f64;
    let mut proj = 0.0f64;
    for r in log_space(1e-4, 1e4, 400) {
        let p = eigen_solve(&SymbolMatrix::new(sys, r)?);
        vieta = vieta.max(p.vieta_residuals().max());
        if let Some(res) = p.projector_residuals() {
            proj = proj.max(res.max());
        }
    }
    out.push(Check::at_most("vieta residual", vieta, VIETA_TOL));
    out.push(Check::at_most("projector residual", proj, PROJECTOR_TOL));
    Ok(out)
}

/// Sample times `t_i = (i / 19) * 20 / Theta`, `i = 0..=19`.
pub fn sandwich_times(theta: f64) -> Vec<f64> {
    (0..20).map(|i| i as f64 / 19.0 * 20.0 / theta).collect()
}

fn sandwich(params: &ModelParams) -> Result<Vec<Check>> {
    let coeffs = derive_coeffs(params)?;
    let sys = SystemCoeffs::new(&coeffs, params);
    let growth = find_growth_max(&coeffs, params, &GrowthSearch::default_for(&coeffs, params))?;
    let branch = AttainingBranch::track(sys, &growth)?;
    let mut out = Vec::new();
    for (label, frac) in [("Theta/10", 0.1), ("Theta/4", 0.25), ("2Theta/5", 0.4)] {
        let bump = build_bump(&branch, frac * growth.theta)?;
        let rep = sandwich_check(&bump, &sandwich_times(growth.theta))?;
        out.push(Check::at_most(format!("sandwich ratio at {label}"), rep.worst_ratio, 1.0 + crate::instability::SANDWICH_SLACK));
        out.push(Check::at_most(
            format!("single-branch cross-check at {label}"),
            rep.cross_check_error,
            crate::instability::CROSS_CHECK_TOL,
        ));
    }
    Ok(out)
}

/// Generic smooth low-frequency data used by the decay battery.
pub fn generic_profile() -> Result<RadialProfile> {
    let c = |x: f64| Complex64::new(x, 0.0);
    Ok(RadialProfile::from_fn(RadialGrid::with_max(2.0)?, |r| {
        let s = cutoff(r);
        [c(s), c(0.5 * s), c(0.3 * s)]
    }))
}

/// Exponential fit of `OmegaState` decay over `[0, 20]`.
pub fn omega_fit(alpha: f64) -> Result<RateFit> {
    let state = OmegaState { alpha, coeffs: vec![Complex64::new(1.0, -0.5), Complex64::new(0.25, 2.0)] };
    let series: Vec<(f64, f64)> =
        (0..=40).map(|i| 0.5 * i as f64).map(|t| Ok((t, state.evolve(t)?.norm()))).collect::<Result<_>>()?;
    fit_exponential(&series, (0.0, 20.0))
}

pub fn omega_rate(alpha: f64) -> Result<f64> {
    Ok(omega_fit(alpha)?.exponent)
}

fn decay(params: &ModelParams) -> Result<Vec<Check>> {
    let coeffs = derive_coeffs(params)?;
    let fits = decay_envelope_check(&coeffs, params, &generic_profile()?, &[0, 1, 2, 3], (1e2, 1e4))?;
    let mut out: Vec<Check> = fits
        .iter()
        .map(|f| {
            Check::close(
                format!("exponent {} k={}", f.component.name(), f.k),
                f.fit.exponent,
                f.expected,
                crate::semigroup::DECAY_EXPONENT_TOL,
            )
        })
        .collect();
    out.push(Check::close("omega rate", omega_rate(params.alpha)?, params.alpha, 1e-6));
    let torus = run_decay_experiment(params, &coeffs, &DecayConfig::default_for(params))?;
    out.push(Check::close(
        "torus decay rate",
        torus.fit.exponent,
        torus.expected_rate,
        crate::nonlinear::DECAY_RATE_TOL * torus.expected_rate,
    ));
    out.push(Check::flag("torus norms monotone after transient", !torus.growth_detected));
    Ok(out)
}

fn escape(params: &ModelParams) -> Result<Vec<Check>> {
    let coeffs = derive_coeffs(params)?;
    let growth = find_growth_max(&coeffs, params, &GrowthSearch::default_for(&coeffs, params))?;
    let rep = run_escape_experiment(params, &coeffs, &growth, &EscapeConfig::default_for(params))?;
    let mut out = vec![Check::flag("all runs crossed", !rep.inconclusive)];
    out.push(match rep.slope {
        Some(s) => Check::close(
            "escape slope",
            s,
            rep.expected_slope,
            crate::nonlinear::ESCAPE_SLOPE_TOL * rep.expected_slope,
        ),
        None => Check::flag("escape slope", false),
    });
    let worst_phase = rep.runs.iter().map(|r| r.linear_phase_deviation).fold(0.0, f64::max);
    out.push(Check::at_most("linear phase deviation", worst_phase, crate::nonlinear::LINEAR_PHASE_TOL));
    out.push(Check::flag("components above floor", rep.components_above_floor));
    Ok(out)
}
