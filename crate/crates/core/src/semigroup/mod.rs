//! Linear evolution of the compressible subsystem mode by mode, the
//! incompressible part, L2(R^3) norms of radial data and decay-rate checks.

mod decay;
pub mod quadrature;

pub use decay::{
    decay_envelope_check, decay_times, high_frequency_decay, DecayFit, HighFreqDecay,
    DECAY_EXPONENT_TOL,
};
pub use quadrature::{cutoff, mollifier, RadialGrid};

use std::f64::consts::PI;

use nalgebra::Vector3;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dispersion::{eigen_solve, CMat3, SpectralPoint, SymbolMatrix, SystemCoeffs};
use crate::error::{Error, Result};

pub type CVec3 = Vector3<Complex64>;

/// `e^{tA}` from the spectral form `sum_i e^{lambda_i t} P_i`, or from
/// scaling and squaring when the point carries no projectors.
pub fn mode_exp(point: &SpectralPoint, t: f64) -> CMat3 {
    match &point.projectors {
        Some(p) => spectral_exp(&point.lambdas, p, t),
        None => dense_exp(point.symbol.matrix(), t),
    }
}

pub fn spectral_exp(lambdas: &[Complex64; 3], p: &[CMat3; 3], t: f64) -> CMat3 {
    p[0] * (lambdas[0] * t).exp() + p[1] * (lambdas[1] * t).exp() + p[2] * (lambdas[2] * t).exp()
}

/// Padé scaling-and-squaring exponential of `tA`.
pub fn dense_exp(a: &CMat3, t: f64) -> CMat3 {
    (a * Complex64::new(t, 0.0)).exp()
}

/// Propagator factory for one wavenumber.
#[derive(Debug, Clone)]
pub struct ModePropagator {
    point: SpectralPoint,
}

impl ModePropagator {
    pub fn new(sys: SystemCoeffs, r: f64) -> Result<Self> {
        Ok(Self { point: eigen_solve(&SymbolMatrix::new(sys, r)?) })
    }

    pub fn point(&self) -> &SpectralPoint {
        &self.point
    }

    pub fn at(&self, t: f64) -> Result<CMat3> {
        check_time(t)?;
        Ok(mode_exp(&self.point, t))
    }

    pub fn dense(&self, t: f64) -> Result<CMat3> {
        check_time(t)?;
        Ok(dense_exp(self.point.symbol.matrix(), t))
    }
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("time must be finite and >= 0, got {t}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    Rho,
    D,
    Phi,
}

impl Component {
    pub const ALL: [Component; 3] = [Component::Rho, Component::D, Component::Phi];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Component::Rho => "rho",
            Component::D => "d",
            Component::Phi => "phi",
        }
    }
}

/// Which part of the cutoff split a profile represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Full,
    Low,
    High,
}

/// Radially symmetric Fourier data `(rho, d, phi)` on a radial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    pub grid: RadialGrid,
    pub values: Vec<[Complex64; 3]>,
    pub band: Band,
}

/// Relative agreement required between a grid and its halved version.
pub const QUADRATURE_ACCEPT_TOL: f64 = 1e-6;

impl RadialProfile {
    pub fn from_fn<F: Fn(f64) -> [Complex64; 3]>(grid: RadialGrid, f: F) -> Self {
        let values = grid.nodes().iter().map(|&r| f(r)).collect();
        Self { grid, values, band: Band::Full }
    }

    pub fn zeros(grid: RadialGrid) -> Self {
        Self::from_fn(grid, |_| [Complex64::new(0.0, 0.0); 3])
    }

    /// `||grad^k f||^2 = 4 pi int |f(r)|^2 r^{2k+2} dr`.
    pub fn norm_sq(&self, c: Component, k: u32) -> f64 {
        let i = c.index();
        4.0 * PI * self.grid.integrate(|n, r| self.values[n][i].norm_sqr() * r.powi(2 * k as i32 + 2))
    }

    pub fn norm(&self, c: Component, k: u32) -> f64 {
        self.norm_sq(c, k).sqrt()
    }

    pub fn total_norm(&self, k: u32) -> f64 {
        Component::ALL.iter().map(|&c| self.norm_sq(c, k)).sum::<f64>().sqrt()
    }

    /// Largest relative difference between the norms on this grid and on
    /// the grid with every other node dropped.
    pub fn quadrature_defect(&self, k: u32) -> Result<f64> {
        let coarse = self.grid.coarsened()?;
        let mut worst = 0.0f64;
        for c in Component::ALL {
            let i = c.index();
            let fine = self.norm_sq(c, k);
            let rough = 4.0
                * PI
                * coarse.integrate(|n, r| self.values[2 * n][i].norm_sqr() * r.powi(2 * k as i32 + 2));
            if fine > 0.0 {
                worst = worst.max((fine.sqrt() / rough.sqrt() - 1.0).abs());
            } else if rough > 0.0 {
                worst = f64::INFINITY;
            }
        }
        Ok(worst)
    }

    pub fn check_quadrature(&self, k: u32) -> Result<()> {
        let d = self.quadrature_defect(k)?;
        if d <= QUADRATURE_ACCEPT_TOL {
            Ok(())
        } else {
            Err(Error::domain(format!(
                "profile under-resolved: halved grid changes the norm by {d:.3e}"
            )))
        }
    }

    pub fn low_part(&self) -> Self {
        self.weighted(cutoff, Band::Low)
    }

    pub fn high_part(&self) -> Self {
        self.weighted(|r| 1.0 - cutoff(r), Band::High)
    }

    fn weighted<F: Fn(f64) -> f64>(&self, w: F, band: Band) -> Self {
        let values = self
            .grid
            .nodes()
            .iter()
            .zip(&self.values)
            .map(|(&r, v)| {
                let s = w(r);
                [v[0] * s, v[1] * s, v[2] * s]
            })
            .collect();
        Self { grid: self.grid.clone(), values, band }
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        let values = self.values.iter().map(|v| [v[0] * c, v[1] * c, v[2] * c]).collect();
        Self { grid: self.grid.clone(), values, band: self.band }
    }
}

#[derive(Debug, Clone)]
enum NodeModes {
    /// `U(t) = sum_i e^{lambda_i t} (P_i U_0)`.
    Spectral { lambdas: [Complex64; 3], parts: [CVec3; 3] },
    Dense { a: CMat3, u0: CVec3 },
}

/// Precomputed per-node eigen-decomposition of a profile, for evaluating
/// the linear evolution at many times.
#[derive(Debug, Clone)]
pub struct LinearEvolver {
    grid: RadialGrid,
    band: Band,
    modes: Vec<NodeModes>,
}

impl LinearEvolver {
    pub fn new(sys: SystemCoeffs, profile: &RadialProfile) -> Result<Self> {
        let modes = profile
            .grid
            .nodes()
            .par_iter()
            .zip(profile.values.par_iter())
            .map(|(&r, v)| {
                let point = eigen_solve(&SymbolMatrix::new(sys, r)?);
                let u0 = CVec3::new(v[0], v[1], v[2]);
                Ok(match &point.projectors {
                    Some(p) => NodeModes::Spectral {
                        lambdas: point.lambdas,
                        parts: [p[0] * u0, p[1] * u0, p[2] * u0],
                    },
                    None => NodeModes::Dense { a: *point.symbol.matrix(), u0 },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { grid: profile.grid.clone(), band: profile.band, modes })
    }

    pub fn at(&self, t: f64) -> Result<RadialProfile> {
        check_time(t)?;
        let values = self
            .modes
            .par_iter()
            .map(|m| {
                let u = match m {
                    NodeModes::Spectral { lambdas, parts } => {
                        parts[0] * (lambdas[0] * t).exp()
                            + parts[1] * (lambdas[1] * t).exp()
                            + parts[2] * (lambdas[2] * t).exp()
                    }
                    NodeModes::Dense { a, u0 } => dense_exp(a, t) * u0,
                };
                [u[0], u[1], u[2]]
            })
            .collect();
        Ok(RadialProfile { grid: self.grid.clone(), values, band: self.band })
    }
}

/// Applies `e^{tA(r)}` node by node.
pub fn evolve_linear(sys: SystemCoeffs, profile: &RadialProfile, t: f64) -> Result<RadialProfile> {
    check_time(t)?;
    LinearEvolver::new(sys, profile)?.at(t)
}

/// `||Omega(t)|| = e^{-alpha t} ||Omega_0||` (any derivative order).
pub fn omega_decay(norm0: f64, alpha: f64, t: f64) -> Result<f64> {
    check_time(t)?;
    Ok(norm0 * (-alpha * t).exp())
}

/// Incompressible part of the velocity, Fourier coefficients per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaState {
    pub alpha: f64,
    pub coeffs: Vec<Complex64>,
}

impl OmegaState {
    pub fn evolve(&self, t: f64) -> Result<Self> {
        check_time(t)?;
        let f = (-self.alpha * t).exp();
        Ok(Self { alpha: self.alpha, coeffs: self.coeffs.iter().map(|z| z * f).collect() })
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Convolution kernel of a Duhamel bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Kernel {
    /// `(1 + t - tau)^{-exponent}`
    Algebraic { exponent: f64 },
    /// `e^{-rate (t - tau)}`
    Exponential { rate: f64 },
}

impl Kernel {
    /// Length over which the kernel changes by O(1) near lag `s`.
    fn scale(&self, s: f64) -> f64 {
        match *self {
            Kernel::Algebraic { exponent } => (1.0 + s) / exponent.max(1.0),
            Kernel::Exponential { rate } => 1.0 / rate.max(f64::MIN_POSITIVE),
        }
    }

    fn eval(&self, s: f64) -> f64 {
        match *self {
            Kernel::Algebraic { exponent } => (1.0 + s).powf(-exponent),
            Kernel::Exponential { rate } => (-rate * s).exp(),
        }
    }

    /// Algebraic kernel matching the low-frequency density estimate of
    /// derivative order `k`.
    pub fn low_frequency(k: u32) -> Self {
        Kernel::Algebraic { exponent: 0.75 + 0.5 * k as f64 }
    }
}

/// Simpson panels per kernel length scale (and minimum per sample interval).
const DUHAMEL_SUBDIV: usize = 16;
const DUHAMEL_MAX_SUBDIV: usize = 1 << 20;

/// `int_0^t K(t - tau) s(tau) dtau` with `s` linearly interpolated between
/// samples. The series must start at `tau = 0` and reach `t`.
pub fn duhamel_envelope(source: &[(f64, f64)], t: f64, kernel: Kernel) -> Result<f64> {
    check_time(t)?;
    if source.len() < 2 {
        return Err(Error::domain("source series needs at least two samples"));
    }
    if source[0].0 != 0.0 || source[source.len() - 1].0 < t {
        return Err(Error::domain(format!(
            "source series covers [{}, {}], need [0, {t}]",
            source[0].0,
            source[source.len() - 1].0
        )));
    }
    if source.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::domain("source times must be strictly increasing"));
    }
    let mut pieces = Vec::new();
    for w in source.windows(2) {
        let (t0, s0) = w[0];
        let (t1, s1) = w[1];
        if t0 >= t {
            break;
        }
        let hi = t1.min(t);
        let panels = (DUHAMEL_SUBDIV as f64 * (hi - t0) / kernel.scale(t - hi)).ceil() as usize;
        let m = panels.clamp(DUHAMEL_SUBDIV, DUHAMEL_MAX_SUBDIV).next_multiple_of(2);
        let h = (hi - t0) / m as f64;
        let mut acc = 0.0;
        for j in 0..=m {
            let tau = if j == m { hi } else { t0 + h * j as f64 };
            let s = s0 + (s1 - s0) * (tau - t0) / (t1 - t0);
            let c = if j == 0 || j == m {
                1.0
            } else if j % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += c * kernel.eval(t - tau) * s;
        }
        pieces.push(acc * h / 3.0);
    }
    Ok(quadrature::pairwise_sum(&pieces))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{derive_coeffs, ModelParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sys_of(p: &ModelParams) -> SystemCoeffs {
        SystemCoeffs::new(&derive_coeffs(p).unwrap(), p)
    }

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    fn max_diff(a: &CMat3, b: &CMat3) -> f64 {
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn identity_at_zero() {
        for r in [0.0, 0.3, 5.0, 300.0] {
            let p = ModePropagator::new(sys_of(&ModelParams::default_unstable()), r).unwrap();
            assert!(max_diff(&p.at(0.0).unwrap(), &CMat3::identity()) < 1e-12);
        }
    }

    /// Oracle: 30-term Taylor series of `e^{A(0)}`.
    #[test]
    fn zero_wavenumber_matches_series() {
        let sys = sys_of(&ModelParams::default_stable());
        let a = SymbolMatrix::new(sys, 0.0).unwrap();
        let mut term = CMat3::identity();
        let mut series = CMat3::identity();
        for n in 1..30 {
            term = term * a.matrix() / c(n as f64);
            series += term;
        }
        let got = ModePropagator::new(sys, 0.0).unwrap().at(1.0).unwrap();
        assert!(max_diff(&got, &series) < 1e-13);
        assert!((got[(0, 0)].re - 1.0).abs() < 1e-15);
        assert!((got[(1, 1)].re - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn spectral_matches_scaling_and_squaring() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for params in [ModelParams::default_stable(), ModelParams::default_unstable()] {
            let sys = sys_of(&params);
            for _ in 0..100 {
                let r = 10f64.powf(rng.gen_range(-3.0..3.0));
                let t = rng.gen_range(0.0..10.0);
                let p = ModePropagator::new(sys, r).unwrap();
                let (s, d) = (p.at(t).unwrap(), p.dense(t).unwrap());
                let scale = 1.0f64.max(max_diff(&d, &CMat3::zeros()));
                assert!(max_diff(&s, &d) < 1e-8 * scale, "r={r} t={t}: {}", max_diff(&s, &d));
            }
        }
    }

    #[test]
    fn semigroup_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let sys = sys_of(&ModelParams::default_unstable());
        for _ in 0..20 {
            let r = rng.gen_range(0.01..20.0);
            let p = ModePropagator::new(sys, r).unwrap();
            let lhs = p.at(1.0).unwrap();
            let rhs = p.at(0.3).unwrap() * p.at(0.7).unwrap();
            assert!(max_diff(&lhs, &rhs) < 1e-8 * max_diff(&lhs, &CMat3::zeros()).max(1.0));
            for (t1, t2) in [(2.5, 7.5), (10.0, 10.0)] {
                let lhs = p.at(t1 + t2).unwrap();
                let rhs = p.at(t1).unwrap() * p.at(t2).unwrap();
                assert!(max_diff(&lhs, &rhs) < 1e-8 * max_diff(&lhs, &CMat3::zeros()).max(1.0));
            }
        }
    }

    #[test]
    fn negative_time_rejected() {
        let p = ModePropagator::new(sys_of(&ModelParams::default_stable()), 1.0).unwrap();
        assert!(p.at(-1.0).is_err());
        assert!(omega_decay(1.0, 1.0, -0.5).is_err());
    }

    fn bump_profile() -> RadialProfile {
        let grid = RadialGrid::new(0.5, 1.0, 2.0, 4, 2048).unwrap();
        RadialProfile::from_fn(grid, |r| {
            let m = mollifier(2.0 * r - 3.0);
            [c(m), c(0.5 * m), c(0.3 * m)]
        })
    }

    #[test]
    fn zero_profile_stays_zero() {
        let sys = sys_of(&ModelParams::default_stable());
        let z = RadialProfile::zeros(RadialGrid::with_max(3.0).unwrap());
        let out = evolve_linear(sys, &z, 5.0).unwrap();
        assert!(out.values.iter().all(|v| v.iter().all(|x| x.norm() == 0.0)));
    }

    #[test]
    fn linearity() {
        let sys = sys_of(&ModelParams::default_unstable());
        let p = bump_profile();
        let k = Complex64::new(-2.5, 0.75);
        let a = evolve_linear(sys, &p.scaled(k), 3.0).unwrap();
        let b = evolve_linear(sys, &p, 3.0).unwrap().scaled(k);
        for (x, y) in a.values.iter().zip(&b.values) {
            for i in 0..3 {
                assert!((x[i] - y[i]).norm() <= 1e-12 * y[i].norm().max(1e-300));
            }
        }
    }

    #[test]
    fn stable_bump_decays_at_band_rate() {
        use crate::dispersion::middle_band_bound;
        let params = ModelParams::default_stable();
        let coeffs = derive_coeffs(&params).unwrap();
        let band = middle_band_bound(&coeffs, &params, 1.0, 2.0).unwrap();
        let vartheta = band.vartheta.unwrap();
        let sys = SystemCoeffs::new(&coeffs, &params);
        let p = bump_profile();
        p.check_quadrature(0).unwrap();
        let ev = LinearEvolver::new(sys, &p).unwrap();
        let n0 = p.total_norm(0);
        let mut c_est = 0.0f64;
        for t in [1.0, 5.0, 10.0, 20.0, 40.0] {
            let nt = ev.at(t).unwrap().total_norm(0);
            c_est = c_est.max(nt / ((-vartheta * t).exp() * n0));
        }
        // a bounded constant across a long time span
        assert!(c_est < 10.0, "{c_est}");
        let late = ev.at(40.0).unwrap().total_norm(0);
        assert!(late < (-0.9 * vartheta * 40.0).exp() * n0 * c_est);
    }

    #[test]
    fn omega_closed_form() {
        assert_eq!(omega_decay(3.0, 2.0, 0.0).unwrap(), 3.0);
        assert!((omega_decay(1.0, 2.0, 1.0).unwrap() - (-2.0f64).exp()).abs() < 1e-16);
        let f1 = omega_decay(1.0, 0.7, 1.3).unwrap();
        let f2 = omega_decay(1.0, 0.7, 2.6).unwrap();
        assert!((f2 - f1 * f1).abs() < 1e-15);
        let s = OmegaState { alpha: 2.0, coeffs: vec![Complex64::new(3.0, 4.0), c(1.0)] };
        let e = s.evolve(0.5).unwrap();
        assert!((e.norm() - s.norm() * (-1.0f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn duhamel_constant_source() {
        let src: Vec<(f64, f64)> = (0..=200).map(|i| (i as f64 * 0.5, 1.0)).collect();
        let got = duhamel_envelope(&src, 100.0, Kernel::low_frequency(0)).unwrap();
        let exact = 4.0 * (101f64.powf(0.25) - 1.0);
        assert!((got - exact).abs() < 1e-6, "{got} vs {exact}");
        let zero: Vec<(f64, f64)> = src.iter().map(|(t, _)| (*t, 0.0)).collect();
        assert_eq!(duhamel_envelope(&zero, 100.0, Kernel::low_frequency(0)).unwrap(), 0.0);
        let e = duhamel_envelope(&src, 10.0, Kernel::Exponential { rate: 2.0 }).unwrap();
        assert!((e - (1.0 - (-20.0f64).exp()) / 2.0).abs() < 1e-7);
    }

    #[test]
    fn duhamel_s1_s2_bound() {
        let times = crate::optimize::log_space(1e-2, 1e4, 600);
        let mut src: Vec<(f64, f64)> = vec![(0.0, 1.0)];
        src.extend(times.iter().map(|&t| (t, (1.0 + t).powi(-2))));
        let k = Kernel::Algebraic { exponent: 2.25 };
        let mut worst = 0.0f64;
        for t in [10.0, 100.0, 1000.0, 1e4] {
            let v = duhamel_envelope(&src, t, k).unwrap();
            worst = worst.max(v * (1.0 + t).powi(2));
        }
        // direct quadrature gives about 1.54 at t = 10, decreasing after
        assert!(worst < 1.6, "{worst}");
    }

    #[test]
    fn duhamel_rejects_short_series() {
        let src = vec![(0.0, 1.0), (1.0, 1.0)];
        assert!(duhamel_envelope(&src, 2.0, Kernel::low_frequency(1)).is_err());
        assert!(duhamel_envelope(&src[..1], 0.5, Kernel::low_frequency(1)).is_err());
    }
}
