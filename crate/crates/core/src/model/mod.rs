//! Model parameters, the pressure closure and the stability dichotomy.
//!
//! The linearisation about `(rho_bar, 0, gamma * rho_bar / nu)` is governed by
//! the pair `a = sqrt(P'(rho_bar))`, `b = rho_bar * beta / a`. The sign of
//! `a * nu - b * gamma` decides between decay and growth of small
//! perturbations.

mod pressure;

pub use pressure::{MonotoneCubic, PressureLaw};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical parameters of the vasculogenesis model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Drag coefficient.
    pub alpha: f64,
    /// Chemotactic response strength.
    pub beta: f64,
    /// Diffusion coefficient of the chemoattractant.
    pub mu: f64,
    /// Degradation rate of the chemoattractant.
    pub nu: f64,
    /// Release rate of the chemoattractant.
    pub gamma: f64,
    /// Equilibrium cell density.
    pub rho_bar: f64,
    pub pressure: PressureLaw,
}

impl ModelParams {
    /// Default parameter set in the stable regime (`a nu - b gamma = 1`).
    pub fn default_stable() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            mu: 1.0,
            nu: 2.0,
            gamma: 1.0,
            rho_bar: 1.0,
            pressure: PressureLaw::default(),
        }
    }

    /// Default parameter set in the unstable regime (`a nu - b gamma = -2`).
    pub fn default_unstable() -> Self {
        Self {
            alpha: 2.0,
            beta: 3.0,
            mu: 1.0,
            nu: 1.0,
            gamma: 1.0,
            rho_bar: 1.0,
            pressure: PressureLaw::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("mu", self.mu),
            ("nu", self.nu),
            ("gamma", self.gamma),
            ("rho_bar", self.rho_bar),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be finite and > 0, got {v}"),
                });
            }
        }
        self.pressure.check_monotone(0.5 * self.rho_bar, 1.5 * self.rho_bar, 64)
    }
}

/// Coefficients of the transformed linear system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedCoeffs {
    /// `sqrt(P'(rho_bar))`.
    pub a: f64,
    /// `rho_bar * beta / sqrt(P'(rho_bar))`.
    pub b: f64,
    /// `a * nu - b * gamma`.
    pub discriminant: f64,
    /// `a * nu`, the scale for the borderline tolerance.
    pub scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stability {
    Stable,
    Unstable,
    Borderline,
}

pub fn derive_coeffs(params: &ModelParams) -> Result<DerivedCoeffs> {
    params.validate()?;
    let dp = params.pressure.derivative(params.rho_bar);
    if !(dp > 0.0 && dp.is_finite()) {
        return Err(Error::InvalidPressure(format!(
            "P'(rho_bar) = {dp} must be positive"
        )));
    }
    let a = dp.sqrt();
    let b = params.rho_bar * params.beta / a;
    Ok(DerivedCoeffs {
        a,
        b,
        discriminant: a * params.nu - b * params.gamma,
        scale: a * params.nu,
    })
}

/// Relative borderline tolerance used by [`classify_stability`].
pub const BORDER_REL_TOL: f64 = 1e-12;

pub fn classify_stability(coeffs: &DerivedCoeffs) -> Stability {
    classify_stability_with(coeffs, BORDER_REL_TOL * coeffs.scale.abs())
}

pub fn classify_stability_with(coeffs: &DerivedCoeffs, tol_border: f64) -> Stability {
    if coeffs.discriminant > tol_border {
        Stability::Stable
    } else if coeffs.discriminant < -tol_border {
        Stability::Unstable
    } else {
        Stability::Borderline
    }
}
