//! Quadratic and pressure nonlinearities of the transformed system.

use num_complex::Complex64;
use rayon::prelude::*;

use super::stepper::PAR_MIN_MODES;
use super::grid::{TorusField, TorusGrid, Transformer};
use crate::error::{Error, Result};
use crate::model::{DerivedCoeffs, ModelParams};

/// Fraction of `rho_bar` at which the vacuum guard aborts.
pub const VACUUM_FRACTION: f64 = 0.01;

/// Spectral nonlinear forcing for the density and velocity equations.
#[derive(Debug, Clone, PartialEq)]
pub struct Nonlinear {
    pub n1: Vec<Complex64>,
    pub n2: Vec<Vec<Complex64>>,
}

fn times_ik(grid: &TorusGrid, c: &[Complex64], axis: usize) -> Vec<Complex64> {
    grid.modes().iter().zip(c).map(|(m, z)| z * Complex64::new(0.0, m.k[axis])).collect()
}

fn mask(grid: &TorusGrid, c: &mut [Complex64]) {
    for (m, z) in grid.modes().iter().zip(c.iter_mut()) {
        if !m.kept {
            *z = Complex64::new(0.0, 0.0);
        }
    }
}

/// `N1 = -(a/rho_bar) div(rho v)` and
/// `N2 = -(a/rho_bar) (v . grad) v - (rho_bar/a) (P'(rho+rho_bar)/(rho+rho_bar) - P'(rho_bar)/rho_bar) grad rho`,
/// products in real space, derivatives spectral, optionally masked by the
/// two-thirds rule.
pub fn nonlinear_terms(
    state: &TorusField,
    grid: &TorusGrid,
    fft: &Transformer,
    params: &ModelParams,
    coeffs: &DerivedCoeffs,
    dealias: bool,
) -> Result<Nonlinear> {
    let dim = grid.dim();
    let (a, rho_bar) = (coeffs.a, params.rho_bar);
    let rho = fft.inverse(&state.rho);
    let guard = VACUUM_FRACTION * rho_bar;
    let min_density = rho.iter().map(|r| r + rho_bar).fold(f64::INFINITY, f64::min);
    if !(min_density > guard) {
        return Err(Error::Vacuum { min_density, guard });
    }
    let v: Vec<Vec<f64>> = state.v.iter().map(|c| fft.inverse(c)).collect();
    let grad_rho: Vec<Vec<f64>> = (0..dim).map(|j| fft.inverse(&times_ik(grid, &state.rho, j))).collect();
    // dv[i][j] = d_j v_i
    let dv: Vec<Vec<Vec<f64>>> = (0..dim)
        .map(|i| (0..dim).map(|j| fft.inverse(&times_ik(grid, &state.v[i], j))).collect())
        .collect();
    let p_ref = params.pressure.derivative(rho_bar) / rho_bar;
    let factor = |r: &f64| {
        let d = r + rho_bar;
        params.pressure.derivative(d) / d - p_ref
    };
    let pressure_factor: Vec<f64> =
        if rho.len() >= PAR_MIN_MODES { rho.par_iter().map(factor).collect() } else { rho.iter().map(factor).collect() };

    let mut n1 = vec![Complex64::new(0.0, 0.0); grid.len()];
    for j in 0..dim {
        let flux: Vec<f64> = rho.iter().zip(&v[j]).map(|(r, vj)| r * vj).collect();
        let fh = times_ik(grid, &fft.forward(&flux), j);
        for (o, z) in n1.iter_mut().zip(fh) {
            *o -= z * (a / rho_bar);
        }
    }
    let mut n2 = Vec::with_capacity(dim);
    for i in 0..dim {
        let real: Vec<f64> = (0..rho.len())
            .map(|p| {
                let adv: f64 = (0..dim).map(|j| v[j][p] * dv[i][j][p]).sum();
                -(a / rho_bar) * adv - (rho_bar / a) * pressure_factor[p] * grad_rho[i][p]
            })
            .collect();
        n2.push(fft.forward(&real));
    }
    if dealias {
        mask(grid, &mut n1);
        for c in n2.iter_mut() {
            mask(grid, c);
        }
    }
    Ok(Nonlinear { n1, n2 })
}
