//! Fourier symbol of the compressible subsystem, its eigenvalues and
//! spectral projectors, continuity-tracked eigenvalue branches, asymptotic
//! expansion checks and the growth maximum.

mod branches;
pub mod cubic;
mod expansion;
mod growth;

pub use branches::{build_branches, match_branches, SpectralBranch};
pub use expansion::{
    diffusive_residual, high_freq_bound, low_freq_bound, verify_high_freq_expansion, verify_low_freq_expansion, ExpansionFit, HighFreqReport,
    LowFreqReport,
};
pub use growth::{
    default_bands, find_growth_max, max_real_part, middle_band_bound, BandBound, GrowthSearch,
    GrowthSummary,
};

use nalgebra::{Matrix3, Schur};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DerivedCoeffs, ModelParams};
use cubic::Cubic;

pub type CMat3 = Matrix3<Complex64>;

/// Default relative eigenvalue gap below which a point is flagged degenerate.
pub const GAP_TOL: f64 = 1e-7;

/// The six scalars that enter the symbol `A(r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemCoeffs {
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub mu: f64,
    pub nu: f64,
}

impl SystemCoeffs {
    pub fn new(coeffs: &DerivedCoeffs, params: &ModelParams) -> Self {
        Self {
            a: coeffs.a,
            b: coeffs.b,
            alpha: params.alpha,
            gamma: params.gamma,
            mu: params.mu,
            nu: params.nu,
        }
    }

    /// `a nu - b gamma`.
    pub fn discriminant(&self) -> f64 {
        self.a * self.nu - self.b * self.gamma
    }

    /// Characteristic polynomial `F(r, lambda)` as a monic cubic in `lambda`.
    pub fn dispersion_cubic(&self, r: f64) -> Cubic {
        let r2 = r * r;
        Cubic {
            c2: self.mu * r2 + self.alpha + self.nu,
            c1: (self.a * self.a + self.alpha * self.mu) * r2 + self.alpha * self.nu,
            c0: self.a * self.a * self.mu * r2 * r2 + self.a * self.discriminant() * r2,
        }
    }

    pub fn real_symbol(&self, r: f64) -> Matrix3<f64> {
        let ar = self.a * r;
        Matrix3::new(
            0.0, -ar, 0.0,
            ar, -self.alpha, -self.b * r,
            self.gamma, 0.0, -(self.nu + self.mu * r * r),
        )
    }
}

/// `A(r)` at radial wavenumber `r = |xi|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymbolMatrix {
    r: f64,
    sys: SystemCoeffs,
    matrix: CMat3,
}

impl SymbolMatrix {
    pub fn new(sys: SystemCoeffs, r: f64) -> Result<Self> {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(Error::domain(format!("wavenumber must be finite and >= 0, got {r}")));
        }
        let matrix = sys.real_symbol(r).map(|x| Complex64::new(x, 0.0));
        Ok(Self { r, sys, matrix })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn coeffs(&self) -> &SystemCoeffs {
        &self.sys
    }

    pub fn matrix(&self) -> &CMat3 {
        &self.matrix
    }

    /// Entry `(row, col)`, 1-based as in the usual matrix notation.
    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.matrix[(row - 1, col - 1)].re
    }
}

pub fn symbol(coeffs: &DerivedCoeffs, params: &ModelParams, r: f64) -> Result<SymbolMatrix> {
    SymbolMatrix::new(SystemCoeffs::new(coeffs, params), r)
}

/// Eigen-data of `A(r)` at one wavenumber.
#[derive(Debug, Clone)]
pub struct SpectralPoint {
    pub r: f64,
    /// Ordered by decreasing real part, then decreasing imaginary part.
    pub lambdas: [Complex64; 3],
    /// `P_i` for each eigenvalue; `None` when the point is degenerate.
    pub projectors: Option<[CMat3; 3]>,
    pub degenerate: bool,
    pub min_gap: f64,
    pub symbol: SymbolMatrix,
}

/// Eigenvalues of `A(r)` only (no projectors).
pub fn eigenvalues(sys: &SystemCoeffs, r: f64) -> [Complex64; 3] {
    let mut lambdas = if r == 0.0 {
        [0.0, -sys.alpha, -sys.nu].map(|x| Complex64::new(x, 0.0))
    } else {
        let solved = sys.dispersion_cubic(r).solve();
        if solved.near_multiple {
            dense_eigenvalues(sys, r)
        } else {
            solved.roots
        }
    };
    sort_lambdas(&mut lambdas);
    lambdas
}

/// Fallback for near-multiple roots: real Schur form of `A(r)`.
fn dense_eigenvalues(sys: &SystemCoeffs, r: f64) -> [Complex64; 3] {
    let ev = Schur::new(sys.real_symbol(r)).complex_eigenvalues();
    let scale = ev.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let mut out = [ev[0], ev[1], ev[2]];
    for z in out.iter_mut() {
        if z.im.abs() <= 1e-14 * scale {
            z.im = 0.0;
        }
    }
    out
}

fn sort_lambdas(l: &mut [Complex64; 3]) {
    l.sort_by(|x, y| y.re.total_cmp(&x.re).then(y.im.total_cmp(&x.im)));
}

pub fn min_gap(l: &[Complex64; 3]) -> f64 {
    (l[0] - l[1]).norm().min((l[1] - l[2]).norm()).min((l[0] - l[2]).norm())
}

pub fn eigen_solve(m: &SymbolMatrix) -> SpectralPoint {
    eigen_solve_with(m, GAP_TOL)
}

pub fn eigen_solve_with(m: &SymbolMatrix, gap_tol: f64) -> SpectralPoint {
    let lambdas = eigenvalues(&m.sys, m.r);
    let gap = min_gap(&lambdas);
    let scale = lambdas.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let degenerate = gap < gap_tol * scale;
    let projectors = (!degenerate).then(|| projectors(&m.matrix, &lambdas));
    SpectralPoint { r: m.r, lambdas, projectors, degenerate, min_gap: gap, symbol: *m }
}

/// `P_i = prod_{j != i} (A - lambda_j I) / (lambda_i - lambda_j)`.
pub fn projectors(a: &CMat3, l: &[Complex64; 3]) -> [CMat3; 3] {
    let id = CMat3::identity();
    let shifted: [CMat3; 3] = [a - id * l[0], a - id * l[1], a - id * l[2]];
    let mut out = [CMat3::zeros(); 3];
    for i in 0..3 {
        let (j, k) = match i {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let denom = (l[i] - l[j]) * (l[i] - l[k]);
        out[i] = (shifted[j] * shifted[k]) / denom;
    }
    out
}

/// Max-entry norm.
pub fn max_entry(m: &CMat3) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Residuals of the three Vieta identities, each relative to the size of
/// the corresponding coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VietaResiduals {
    pub sum: f64,
    pub pair_sum: f64,
    pub product: f64,
}

impl VietaResiduals {
    pub fn max(&self) -> f64 {
        self.sum.max(self.pair_sum).max(self.product)
    }
}

/// Residuals of the projector identities in max-entry norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProjectorResiduals {
    pub completeness: f64,
    pub idempotence: f64,
    pub annihilation: f64,
    pub eigen: f64,
    pub reconstruction: f64,
}

impl ProjectorResiduals {
    pub fn max(&self) -> f64 {
        self.completeness
            .max(self.idempotence)
            .max(self.annihilation)
            .max(self.eigen)
            .max(self.reconstruction)
    }
}

impl SpectralPoint {
    pub fn vieta_residuals(&self) -> VietaResiduals {
        let sys = &self.symbol.sys;
        let r2 = self.r * self.r;
        let [l1, l2, l3] = self.lambdas;
        let sum_expected = -(sys.mu * r2 + sys.alpha + sys.nu);
        let pair_expected = (sys.a * sys.a + sys.alpha * sys.mu) * r2 + sys.alpha * sys.nu;
        let prod_expected =
            -(sys.a * sys.a * sys.mu * r2 * r2 + sys.a * sys.discriminant() * r2);
        let rel = |got: Complex64, want: f64, scale: f64| {
            let s = scale.max(f64::MIN_POSITIVE);
            (got - want).norm() / s
        };
        // Scales use sums of absolute values so that cancellation in the
        // expected value does not blow up the relative residual.
        let prod_scale = sys.a * sys.a * sys.mu * r2 * r2 + (sys.a * sys.discriminant() * r2).abs();
        let prod_scale = prod_scale.max((l1 * l2 * l3).norm());
        VietaResiduals {
            sum: rel(l1 + l2 + l3, sum_expected, sum_expected.abs()),
            pair_sum: rel(l1 * l2 + l2 * l3 + l3 * l1, pair_expected, pair_expected.abs()),
            product: if prod_scale == 0.0 {
                (l1 * l2 * l3).norm()
            } else {
                rel(l1 * l2 * l3, prod_expected, prod_scale)
            },
        }
    }

    /// `None` for degenerate points.
    pub fn projector_residuals(&self) -> Option<ProjectorResiduals> {
        let p = self.projectors.as_ref()?;
        let a = self.symbol.matrix();
        let id = CMat3::identity();
        let completeness = max_entry(&(p[0] + p[1] + p[2] - id));
        let mut idempotence = 0.0f64;
        let mut annihilation = 0.0f64;
        let mut eigen = 0.0f64;
        let mut recon = CMat3::zeros();
        for i in 0..3 {
            idempotence = idempotence.max(max_entry(&(p[i] * p[i] - p[i])));
            for j in 0..3 {
                if i != j {
                    annihilation = annihilation.max(max_entry(&(p[i] * p[j])));
                }
            }
            let scale = max_entry(a).max(1.0);
            eigen = eigen.max(max_entry(&(a * p[i] - p[i] * self.lambdas[i])) / scale);
            recon += p[i] * self.lambdas[i];
        }
        let reconstruction = max_entry(&(recon - a)) / max_entry(a).max(1.0);
        Some(ProjectorResiduals { completeness, idempotence, annihilation, eigen, reconstruction })
    }
}
