//! Periodic lattice, FFT plumbing and spectral field storage.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Per-mode lattice data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeInfo {
    pub m: [i64; 3],
    pub k: [f64; 3],
    pub k_abs: f64,
    /// `|m|^2`, the cache key for per-mode propagators.
    pub m_sq: u64,
    /// Flat index of the mode `-m`.
    pub partner: usize,
    /// Kept by the two-thirds rule on every axis.
    pub kept: bool,
}

/// `[0, L)^d` with `n` points per axis, `d` in {1, 3}.
#[derive(Debug, Clone)]
pub struct TorusGrid {
    dim: usize,
    n: usize,
    length: f64,
    modes: Vec<ModeInfo>,
}

fn signed(j: usize, n: usize) -> i64 {
    if j < n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

impl TorusGrid {
    pub fn new(dim: usize, n: usize, length: f64) -> Result<Self> {
        if dim != 1 && dim != 3 {
            return Err(Error::domain(format!("dimension must be 1 or 3, got {dim}")));
        }
        if n < 4 || !n.is_power_of_two() {
            return Err(Error::domain(format!("points per axis must be a power of two >= 4, got {n}")));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::domain(format!("box length must be positive, got {length}")));
        }
        let total = n.pow(dim as u32);
        let k0 = 2.0 * std::f64::consts::PI / length;
        let idx = |c: [usize; 3]| -> usize {
            if dim == 1 {
                c[0]
            } else {
                (c[0] * n + c[1]) * n + c[2]
            }
        };
        let modes = (0..total)
            .map(|flat| {
                let c = if dim == 1 { [flat, 0, 0] } else { [flat / (n * n), (flat / n) % n, flat % n] };
                let mut m = [0i64; 3];
                let mut pc = [0usize; 3];
                for a in 0..dim {
                    m[a] = signed(c[a], n);
                    pc[a] = (n - c[a]) % n;
                }
                let k = [k0 * m[0] as f64, k0 * m[1] as f64, k0 * m[2] as f64];
                let m_sq = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]) as u64;
                let kept = m[..dim].iter().all(|&x| 3 * x.unsigned_abs() < n as u64);
                ModeInfo {
                    m,
                    k,
                    k_abs: k0 * (m_sq as f64).sqrt(),
                    m_sq,
                    partner: idx(pc),
                    kept,
                }
            })
            .collect();
        Ok(Self { dim, n, length, modes })
    }

    /// Box length making the first lattice wavenumber equal `xi0`.
    pub fn resonant(dim: usize, n: usize, xi0: f64) -> Result<Self> {
        Self::new(dim, n, 2.0 * std::f64::consts::PI / xi0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[ModeInfo] {
        &self.modes
    }

    /// Largest lattice wavenumber along one axis.
    pub fn k_max(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.length * (self.n / 2) as f64
    }

    pub fn volume(&self) -> f64 {
        self.length.powi(self.dim as i32)
    }

    /// Lattice wavenumber magnitude closest to `r`.
    pub fn nearest_wavenumber(&self, r: f64) -> f64 {
        self.modes
            .iter()
            .map(|m| m.k_abs)
            .min_by(|x, y| (x - r).abs().total_cmp(&(y - r).abs()))
            .unwrap_or(0.0)
    }

    /// Sorted distinct nonzero `|k|` values present on the lattice.
    pub fn distinct_wavenumbers(&self) -> Vec<f64> {
        let mut keys: Vec<u64> = self.modes.iter().map(|m| m.m_sq).filter(|&s| s > 0).collect();
        keys.sort_unstable();
        keys.dedup();
        let k0 = 2.0 * std::f64::consts::PI / self.length;
        keys.into_iter().map(|s| k0 * (s as f64).sqrt()).collect()
    }

    pub fn check_resonance(&self, xi0: f64, tol: f64) -> Result<f64> {
        let k = self.nearest_wavenumber(xi0);
        if (k - xi0).abs() <= tol {
            Ok(k)
        } else {
            Err(Error::domain(format!(
                "no lattice wavenumber within {tol:.3e} of xi0 = {xi0} (nearest {k})"
            )))
        }
    }
}

/// Normalised transforms: `forward` returns Fourier coefficients `c_m`
/// with `f(x) = sum_m c_m e^{i k_m x}`.
#[derive(Clone)]
pub struct Transformer {
    dim: usize,
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Transformer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Transformer").field("dim", &self.dim).field("n", &self.n).finish()
    }
}

impl Transformer {
    pub fn new(grid: &TorusGrid) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            dim: grid.dim(),
            n: grid.n(),
            fwd: planner.plan_fft_forward(grid.n()),
            inv: planner.plan_fft_inverse(grid.n()),
        }
    }

    fn run(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        if self.dim == 1 {
            plan.process(data);
            return;
        }
        // last axis: contiguous lines
        data.par_chunks_mut(n).for_each(|line| plan.process(line));
        // middle axis: lines within each n*n slab
        data.par_chunks_mut(n * n).for_each(|slab| {
            let mut line = vec![Complex64::new(0.0, 0.0); n];
            for k in 0..n {
                for j in 0..n {
                    line[j] = slab[j * n + k];
                }
                plan.process(&mut line);
                for j in 0..n {
                    slab[j * n + k] = line[j];
                }
            }
        });
        // first axis: stride n*n
        let lines: Vec<Vec<Complex64>> = (0..n * n)
            .into_par_iter()
            .map(|jk| {
                let mut line: Vec<Complex64> = (0..n).map(|i| data[i * n * n + jk]).collect();
                plan.process(&mut line);
                line
            })
            .collect();
        for (jk, line) in lines.into_iter().enumerate() {
            for (i, z) in line.into_iter().enumerate() {
                data[i * n * n + jk] = z;
            }
        }
    }

    pub fn forward_complex(&self, data: &[Complex64]) -> Vec<Complex64> {
        let mut buf = data.to_vec();
        self.run(&mut buf, &self.fwd);
        let scale = 1.0 / buf.len() as f64;
        buf.iter_mut().for_each(|z| *z *= scale);
        buf
    }

    pub fn forward(&self, real: &[f64]) -> Vec<Complex64> {
        let buf: Vec<Complex64> = real.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward_complex(&buf)
    }

    /// Real part of the synthesis `sum_m c_m e^{i k_m x}`.
    pub fn inverse(&self, spec: &[Complex64]) -> Vec<f64> {
        let mut buf = spec.to_vec();
        self.run(&mut buf, &self.inv);
        buf.into_iter().map(|z| z.re).collect()
    }
}

/// Enforce `c_{-m} = conj(c_m)`.
pub fn symmetrize(grid: &TorusGrid, c: &mut [Complex64]) {
    for (i, mode) in grid.modes().iter().enumerate() {
        let j = mode.partner;
        if j < i {
            continue;
        }
        if j == i {
            c[i] = Complex64::new(c[i].re, 0.0);
        } else {
            let avg = 0.5 * (c[i] + c[j].conj());
            c[i] = avg;
            c[j] = avg.conj();
        }
    }
}

/// Largest `|c_{-m} - conj(c_m)|` relative to the largest coefficient.
pub fn hermitian_defect(grid: &TorusGrid, c: &[Complex64]) -> f64 {
    let scale = c.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    grid.modes()
        .iter()
        .enumerate()
        .map(|(i, m)| (c[m.partner] - c[i].conj()).norm())
        .fold(0.0, f64::max)
        / scale
}

/// Spectral state `(rho, v, phi)`; real-space values follow by synthesis.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusField {
    pub rho: Vec<Complex64>,
    pub v: Vec<Vec<Complex64>>,
    pub phi: Vec<Complex64>,
}

/// Real-space mirror of a `TorusField`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealFields {
    pub rho: Vec<f64>,
    pub v: Vec<Vec<f64>>,
    pub phi: Vec<f64>,
}

impl TorusField {
    pub fn zeros(grid: &TorusGrid) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); grid.len()];
        Self { rho: z.clone(), v: vec![z.clone(); grid.dim()], phi: z }
    }

    pub fn from_real(grid: &TorusGrid, fft: &Transformer, real: &RealFields) -> Result<Self> {
        let n = grid.len();
        if real.rho.len() != n || real.phi.len() != n || real.v.len() != grid.dim() || real.v.iter().any(|c| c.len() != n)
        {
            return Err(Error::domain("real field shapes do not match the grid"));
        }
        let mut f = Self {
            rho: fft.forward(&real.rho),
            v: real.v.iter().map(|c| fft.forward(c)).collect(),
            phi: fft.forward(&real.phi),
        };
        f.symmetrize(grid);
        Ok(f)
    }

    pub fn to_real(&self, fft: &Transformer) -> RealFields {
        RealFields {
            rho: fft.inverse(&self.rho),
            v: self.v.iter().map(|c| fft.inverse(c)).collect(),
            phi: fft.inverse(&self.phi),
        }
    }

    pub fn symmetrize(&mut self, grid: &TorusGrid) {
        symmetrize(grid, &mut self.rho);
        for c in self.v.iter_mut() {
            symmetrize(grid, c);
        }
        symmetrize(grid, &mut self.phi);
    }

    pub fn hermitian_defect(&self, grid: &TorusGrid) -> f64 {
        let mut d = hermitian_defect(grid, &self.rho).max(hermitian_defect(grid, &self.phi));
        for c in &self.v {
            d = d.max(hermitian_defect(grid, c));
        }
        d
    }

    /// Spatial mean of `rho` (the zero coefficient).
    pub fn mean_rho(&self) -> f64 {
        self.rho[0].re
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            rho: self.rho.iter().map(|z| z * s).collect(),
            v: self.v.iter().map(|c| c.iter().map(|z| z * s).collect()).collect(),
            phi: self.phi.iter().map(|z| z * s).collect(),
        }
    }

    /// Random coefficients on `0 < |m|_inf <= max_mode` for every field,
    /// zero mean, each field of L2 norm `amplitude` on the box.
    pub fn random_low_modes(grid: &TorusGrid, amplitude: f64, max_mode: i64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = Self::zeros(grid);
        let mut draw = |c: &mut Vec<Complex64>| {
            for (i, m) in grid.modes().iter().enumerate() {
                let inside = m.m_sq > 0 && m.m.iter().all(|x| x.abs() <= max_mode) && m.kept;
                if inside {
                    c[i] = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                }
            }
            symmetrize(grid, c);
            let norm = l2_norm(grid, c, 0);
            if norm > 0.0 {
                c.iter_mut().for_each(|z| *z *= amplitude / norm);
            }
        };
        draw(&mut f.rho);
        for c in f.v.iter_mut() {
            draw(c);
        }
        draw(&mut f.phi);
        f
    }
}

/// `||grad^k f||_{L2(box)} = sqrt(L^d sum |k|^{2k} |c_m|^2)`.
pub fn l2_norm(grid: &TorusGrid, c: &[Complex64], k: u32) -> f64 {
    let terms: Vec<f64> = grid
        .modes()
        .iter()
        .zip(c)
        .map(|(m, z)| z.norm_sqr() * if k == 0 { 1.0 } else { m.k_abs.powi(2 * k as i32) })
        .collect();
    (grid.volume() * crate::semigroup::quadrature::pairwise_sum(&terms)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_layout() {
        let g = TorusGrid::new(1, 8, 2.0 * std::f64::consts::PI).unwrap();
        let ms: Vec<i64> = g.modes().iter().map(|m| m.m[0]).collect();
        assert_eq!(ms, vec![0, 1, 2, 3, -4, -3, -2, -1]);
        assert_eq!(g.modes()[1].partner, 7);
        assert_eq!(g.modes()[4].partner, 4);
        let kept: Vec<bool> = g.modes().iter().map(|m| m.kept).collect();
        assert_eq!(kept, vec![true, true, true, false, false, false, true, true]);
        assert!(TorusGrid::new(2, 8, 1.0).is_err());
        assert!(TorusGrid::new(1, 12, 1.0).is_err());
        assert!(TorusGrid::new(1, 8, -1.0).is_err());
    }

    #[test]
    fn transform_round_trip_and_norm() {
        for dim in [1, 3] {
            let g = TorusGrid::new(dim, 8, 3.0).unwrap();
            let fft = Transformer::new(&g);
            let f = TorusField::random_low_modes(&g, 0.7, 2, 5);
            let back = TorusField::from_real(&g, &fft, &f.to_real(&fft)).unwrap();
            for (a, b) in f.rho.iter().zip(&back.rho) {
                assert!((a - b).norm() < 1e-14);
            }
            assert!((l2_norm(&g, &f.rho, 0) - 0.7).abs() < 1e-12);
            // Parseval against the real-space Riemann sum
            let real = fft.inverse(&f.phi);
            let cell = g.volume() / g.len() as f64;
            let direct = (real.iter().map(|x| x * x).sum::<f64>() * cell).sqrt();
            assert!((direct - 0.7).abs() < 1e-12);
            assert!(f.hermitian_defect(&g) < 1e-15);
            assert_eq!(f.mean_rho(), 0.0);
        }
    }

    #[test]
    fn single_mode_values() {
        let g = TorusGrid::new(1, 16, 2.0 * std::f64::consts::PI).unwrap();
        let fft = Transformer::new(&g);
        let x: Vec<f64> = (0..16).map(|j| 2.0 * std::f64::consts::PI * j as f64 / 16.0).collect();
        let c = fft.forward(&x.iter().map(|x| (3.0 * x).cos()).collect::<Vec<_>>());
        assert!((c[3].re - 0.5).abs() < 1e-15 && (c[13].re - 0.5).abs() < 1e-15);
        let grad: Vec<Complex64> =
            g.modes().iter().zip(&c).map(|(m, z)| z * Complex64::new(0.0, m.k[0])).collect();
        let d = fft.inverse(&grad);
        for (xi, di) in x.iter().zip(&d) {
            assert!((di + 3.0 * (3.0 * xi).sin()).abs() < 1e-13);
        }
    }

    #[test]
    fn resonant_box() {
        let g = TorusGrid::resonant(1, 64, 0.8).unwrap();
        assert!((g.check_resonance(0.8, 1e-12).unwrap() - 0.8).abs() < 1e-14);
        let off = TorusGrid::new(1, 64, 7.0).unwrap();
        assert!(off.check_resonance(0.8, 1e-3).is_err());
    }
}
