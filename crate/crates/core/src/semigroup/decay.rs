//! Algebraic decay exponents of the linear evolution on R^3.

use num_complex::Complex64;
use serde::Serialize;

use super::{Component, LinearEvolver, RadialProfile};
use crate::dispersion::{eigen_solve, max_real_part, SymbolMatrix, SystemCoeffs};
use crate::error::{Error, Result};
use crate::model::{classify_stability, DerivedCoeffs, ModelParams, Stability};
use crate::ratefit::{fit_exponential, fit_power, RateFit};

pub const DECAY_EXPONENT_TOL: f64 = 0.05;
const SAMPLES_PER_DECADE: usize = 40;

#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    pub component: Component,
    pub k: u32,
    pub fit: RateFit,
    pub expected: f64,
    pub abs_error: f64,
    pub pass: bool,
}

/// Sample times, `SAMPLES_PER_DECADE` per decade on `[lo, hi]`.
pub fn decay_times(lo: f64, hi: f64) -> Vec<f64> {
    let decades = (hi / lo).log10();
    let n = (decades * SAMPLES_PER_DECADE as f64).round() as usize + 1;
    crate::optimize::log_space(lo, hi, n.max(2))
}

fn expected_exponent(c: Component, k: u32) -> f64 {
    let base = if c == Component::D { 1.25 } else { 0.75 };
    -(base + 0.5 * k as f64)
}

/// Fits `||grad^k f(t)||` against `(1+t)^p` on `window` for the
/// low-frequency part of `profile`; `d` is fitted for `k <= 2` only.
pub fn decay_envelope_check(
    coeffs: &DerivedCoeffs,
    params: &ModelParams,
    profile: &RadialProfile,
    orders: &[u32],
    window: (f64, f64),
) -> Result<Vec<DecayFit>> {
    if classify_stability(coeffs) != Stability::Stable {
        return Err(Error::Regime("algebraic decay needs a stable parameter set".into()));
    }
    let sys = SystemCoeffs::new(coeffs, params);
    let low = profile.low_part();
    check_excitation(&sys, &low)?;
    let times = decay_times(window.0, window.1);
    let ev = LinearEvolver::new(sys, &low)?;
    let snaps: Vec<RadialProfile> = times.iter().map(|&t| ev.at(t)).collect::<Result<_>>()?;
    let mut out = Vec::new();
    for c in Component::ALL {
        for &k in orders {
            if c == Component::D && k > 2 {
                continue;
            }
            let series: Vec<(f64, f64)> =
                times.iter().zip(&snaps).map(|(&t, s)| (t, s.norm(c, k))).collect();
            let fit = fit_power(&series, window)?;
            let expected = expected_exponent(c, k);
            let abs_error = (fit.exponent - expected).abs();
            out.push(DecayFit {
                component: c,
                k,
                fit,
                expected,
                abs_error,
                pass: abs_error <= DECAY_EXPONENT_TOL,
            });
        }
    }
    Ok(out)
}

/// The slowest branch must see the data near `r = 0`.
fn check_excitation(sys: &SystemCoeffs, low: &RadialProfile) -> Result<()> {
    let (i, r) = low
        .grid
        .nodes()
        .iter()
        .copied()
        .enumerate()
        .find(|(_, r)| *r > 0.0)
        .ok_or_else(|| Error::domain("profile grid has no positive node"))?;
    let point = eigen_solve(&SymbolMatrix::new(*sys, r)?);
    let v = low.values[i];
    let u0 = super::CVec3::new(v[0], v[1], v[2]);
    let size = u0.norm();
    let slow = match &point.projectors {
        Some(p) => (p[0] * u0).norm(),
        None => size,
    };
    if size == 0.0 || slow <= 1e-8 * size {
        return Err(Error::domain(
            "degenerate excitation: the data have no component on the slow branch near r = 0; \
             rerun with generic data",
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct HighFreqDecay {
    pub fit: RateFit,
    /// `-sup Re lambda` over the support of the high-frequency data.
    pub slowest_rate: f64,
    pub alpha_quarter: f64,
    pub monotone: bool,
}

/// Exponential decay of the high-frequency part of `profile`.
pub fn high_frequency_decay(
    coeffs: &DerivedCoeffs,
    params: &ModelParams,
    profile: &RadialProfile,
    times: &[f64],
) -> Result<HighFreqDecay> {
    let sys = SystemCoeffs::new(coeffs, params);
    let high = profile.high_part();
    let ev = LinearEvolver::new(sys, &high)?;
    let series: Vec<(f64, f64)> =
        times.iter().map(|&t| Ok((t, ev.at(t)?.total_norm(0)))).collect::<Result<_>>()?;
    let window = (times[0], times[times.len() - 1]);
    let fit = fit_exponential(&series, window)?;
    let monotone = series.windows(2).all(|w| w[1].1 <= w[0].1);
    let zero = Complex64::new(0.0, 0.0);
    let sup = high
        .grid
        .nodes()
        .iter()
        .zip(&high.values)
        .filter(|(_, v)| v.iter().any(|x| *x != zero))
        .map(|(&r, _)| max_real_part(&sys, r))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(HighFreqDecay { fit, slowest_rate: -sup, alpha_quarter: params.alpha / 4.0, monotone })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::derive_coeffs;
    use crate::semigroup::{cutoff, RadialGrid};

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    fn generic_low() -> RadialProfile {
        RadialProfile::from_fn(RadialGrid::with_max(2.0).unwrap(), |r| {
            let s = cutoff(r);
            [c(s), c(0.5 * s), c(0.3 * s)]
        })
    }

    #[test]
    fn stable_exponents() {
        let params = ModelParams::default_stable();
        let coeffs = derive_coeffs(&params).unwrap();
        let fits = decay_envelope_check(&coeffs, &params, &generic_low(), &[0, 1, 2, 3], (1e2, 1e4)).unwrap();
        assert_eq!(fits.len(), 11);
        for f in &fits {
            assert!(f.pass, "{:?} k={} got {} expected {}", f.component, f.k, f.fit.exponent, f.expected);
        }
        let rho0 = fits.iter().find(|f| f.component == Component::Rho && f.k == 0).unwrap();
        assert!((rho0.fit.exponent + 0.75).abs() < 0.05);
        let d1 = fits.iter().find(|f| f.component == Component::D && f.k == 1).unwrap();
        assert!((d1.fit.exponent + 1.75).abs() < 0.05);
    }

    #[test]
    fn unstable_regime_rejected() {
        let params = ModelParams::default_unstable();
        let coeffs = derive_coeffs(&params).unwrap();
        assert!(matches!(
            decay_envelope_check(&coeffs, &params, &generic_low(), &[0], (1e2, 1e4)),
            Err(Error::Regime(_))
        ));
    }

    #[test]
    fn degenerate_excitation_detected() {
        let params = ModelParams::default_stable();
        let coeffs = derive_coeffs(&params).unwrap();
        let z = RadialProfile::zeros(RadialGrid::with_max(2.0).unwrap());
        assert!(decay_envelope_check(&coeffs, &params, &z, &[0], (1e2, 1e4)).is_err());
    }

    #[test]
    fn high_frequency_part_decays_exponentially() {
        let params = ModelParams::default_stable();
        let coeffs = derive_coeffs(&params).unwrap();
        let grid = RadialGrid::new(0.5, 1.0, 8.0, 2, 4096).unwrap();
        let p = RadialProfile::from_fn(grid, |r| {
            let g = (-r * r / 4.0).exp();
            [c(g), c(0.5 * g), c(0.3 * g)]
        });
        let times: Vec<f64> = (0..=40).map(|i| 5.0 + i as f64).collect();
        let h = high_frequency_decay(&coeffs, &params, &p, &times).unwrap();
        assert!(h.monotone);
        assert!(h.slowest_rate > 0.0);
        assert!(h.fit.exponent >= h.slowest_rate - 1e-3, "{} vs {}", h.fit.exponent, h.slowest_rate);
    }
}
