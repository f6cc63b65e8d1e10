//! Integrating-factor time stepping on the torus.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{l2_norm, TorusField, TorusGrid, Transformer};
use super::terms::{nonlinear_terms, Nonlinear};
use crate::dispersion::{CMat3, SystemCoeffs};
use crate::error::{Error, Result};
use crate::model::{DerivedCoeffs, ModelParams};
use crate::ratefit::{Field, NormSeries};
use crate::semigroup::ModePropagator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Exact linear propagator, explicit midpoint for the nonlinearity.
    IfMidpoint,
    /// Backward Euler on the linear part, forward Euler on the rest.
    ImexEuler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepperConfig {
    pub dt: f64,
    pub scheme: Scheme,
    pub dealias: bool,
    pub cfl_limit: f64,
    /// When false the nonlinear forcing is dropped (linear evolution).
    pub nonlinear: bool,
}

pub const DEFAULT_CFL: f64 = 0.5;

/// Grids smaller than this are updated on the calling thread.
pub(crate) const PAR_MIN_MODES: usize = 16_384;

impl StepperConfig {
    pub fn new(dt: f64) -> Self {
        Self { dt, scheme: Scheme::IfMidpoint, dealias: true, cfl_limit: DEFAULT_CFL, nonlinear: true }
    }

    pub fn validate(&self, grid: &TorusGrid, a: f64) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::domain(format!("dt must be positive, got {}", self.dt)));
        }
        let cfl = self.dt * a * grid.k_max();
        if cfl > self.cfl_limit {
            return Err(Error::domain(format!(
                "CFL number dt a k_max = {cfl:.4} exceeds {}; use dt <= {:.4e}",
                self.cfl_limit,
                self.cfl_limit / (a * grid.k_max())
            )));
        }
        Ok(())
    }
}

/// Linear update operators for one `|m|^2` shell.
#[derive(Debug, Clone, Copy)]
struct ShellOps {
    full: CMat3,
    half: CMat3,
}

/// Split of a velocity coefficient into the compressible amplitude
/// `d = i k.v / |k|` and the remainder orthogonal to `k`.
pub fn split_velocity(k: &[f64; 3], k_abs: f64, v: &[Complex64]) -> (Complex64, [Complex64; 3]) {
    let dim = v.len();
    let mut w = [Complex64::new(0.0, 0.0); 3];
    if k_abs == 0.0 {
        w[..dim].copy_from_slice(v);
        return (Complex64::new(0.0, 0.0), w);
    }
    let mut kv = Complex64::new(0.0, 0.0);
    for j in 0..dim {
        kv += v[j] * (k[j] / k_abs);
    }
    for j in 0..dim {
        w[j] = v[j] - kv * (k[j] / k_abs);
    }
    (Complex64::new(0.0, 1.0) * kv, w)
}

/// Inverse of `split_velocity`: `v = -i khat d + w`.
pub fn join_velocity(k: &[f64; 3], k_abs: f64, d: Complex64, w: &[Complex64; 3], dim: usize) -> [Complex64; 3] {
    let mut v = [Complex64::new(0.0, 0.0); 3];
    for j in 0..dim {
        let along = if k_abs == 0.0 { Complex64::new(0.0, 0.0) } else { -Complex64::new(0.0, 1.0) * d * (k[j] / k_abs) };
        v[j] = along + w[j];
    }
    v
}

/// Owns one simulation state.
pub struct Solver {
    grid: TorusGrid,
    fft: Transformer,
    params: ModelParams,
    coeffs: DerivedCoeffs,
    config: StepperConfig,
    /// Operators per distinct `|m|^2`, and each mode's index into them.
    ops: Vec<ShellOps>,
    shell_of: Vec<usize>,
    /// Scalar factors for the full and half step.
    factors: [StepFactors; 2],
    state: TorusField,
    t: f64,
    steps: u64,
}

impl Solver {
    pub fn new(
        grid: TorusGrid,
        params: ModelParams,
        coeffs: DerivedCoeffs,
        config: StepperConfig,
        initial: TorusField,
    ) -> Result<Self> {
        config.validate(&grid, coeffs.a)?;
        if initial.rho.len() != grid.len() || initial.v.len() != grid.dim() {
            return Err(Error::domain("initial state does not match the grid"));
        }
        let sys = SystemCoeffs::new(&coeffs, &params);
        let k0 = 2.0 * std::f64::consts::PI / grid.length();
        let mut shells: Vec<u64> = grid.modes().iter().map(|m| m.m_sq).collect();
        shells.sort_unstable();
        shells.dedup();
        let dt = config.dt;
        let built: Vec<(u64, ShellOps)> = shells
            .par_iter()
            .map(|&s| {
                let r = k0 * (s as f64).sqrt();
                let ops = match config.scheme {
                    Scheme::IfMidpoint => {
                        let p = ModePropagator::new(sys, r)?;
                        ShellOps { full: p.at(dt)?, half: p.at(0.5 * dt)? }
                    }
                    Scheme::ImexEuler => {
                        let a = sys.real_symbol(r).map(|x| Complex64::new(x, 0.0));
                        let m = CMat3::identity() - a * Complex64::new(dt, 0.0);
                        let inv = m.try_inverse().ok_or_else(|| Error::StepFailure {
                            t: 0.0,
                            reason: format!("singular implicit operator at r = {r}"),
                        })?;
                        ShellOps { full: inv, half: inv }
                    }
                };
                Ok((s, ops))
            })
            .collect::<Result<_>>()?;
        let by_shell: BTreeMap<u64, usize> = shells.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let shell_of = grid.modes().iter().map(|m| by_shell[&m.m_sq]).collect();
        let ops = built.into_iter().map(|(_, o)| o).collect();
        let fft = Transformer::new(&grid);
        let mut state = initial;
        state.symmetrize(&grid);
        let factors = [StepFactors::new(&params, config.scheme, dt), StepFactors::new(&params, config.scheme, 0.5 * dt)];
        Ok(Self { grid, fft, params, coeffs, config, ops, shell_of, factors, state, t: 0.0, steps: 0 })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn state(&self) -> &TorusField {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn transformer(&self) -> &Transformer {
        &self.fft
    }

    pub fn config(&self) -> &StepperConfig {
        &self.config
    }

    fn forcing(&self, s: &TorusField) -> Result<Nonlinear> {
        if self.config.nonlinear {
            nonlinear_terms(s, &self.grid, &self.fft, &self.params, &self.coeffs, self.config.dealias)
        } else {
            let z = vec![Complex64::new(0.0, 0.0); self.grid.len()];
            Ok(Nonlinear { n1: z.clone(), n2: vec![z; self.grid.dim()] })
        }
    }

    /// Mode `i` of `base + c F` as `(rho, d, phi, w)`.
    fn gather(&self, i: usize, base: Option<&TorusField>, force: Option<(&Nonlinear, f64)>) -> ModeState {
        let dim = self.grid.dim();
        let m = &self.grid.modes()[i];
        let zero = Complex64::new(0.0, 0.0);
        let mut u = ModeState { rho: zero, d: zero, phi: zero, w: [zero; 3] };
        let mut buf = [zero; 3];
        if let Some(s) = base {
            for j in 0..dim {
                buf[j] = s.v[j][i];
            }
            let (d, w) = split_velocity(&m.k, m.k_abs, &buf[..dim]);
            u = ModeState { rho: s.rho[i], d, phi: s.phi[i], w };
        }
        if let Some((f, c)) = force {
            for j in 0..dim {
                buf[j] = f.n2[j][i];
            }
            let (fd, fw) = split_velocity(&m.k, m.k_abs, &buf[..dim]);
            u.rho += f.n1[i] * c;
            u.d += fd * c;
            for j in 0..dim {
                u.w[j] += fw[j] * c;
            }
        }
        u
    }

    /// Applies the shell operator picked by `which` to one mode.
    fn propagate(&self, i: usize, mut u: ModeState, which: Which) -> ModeState {
        let f = match which {
            Which::Full => &self.factors[0],
            Which::Half => &self.factors[1],
        };
        for x in u.w.iter_mut() {
            *x *= f.damp;
        }
        if self.grid.modes()[i].m_sq == 0 {
            // rho is conserved; phi relaxes towards gamma rho / nu
            u.phi = u.phi * f.phi_decay + u.rho * f.phi_source;
            u.d = Complex64::new(0.0, 0.0);
        } else {
            let ops = &self.ops[self.shell_of[i]];
            let l = match which {
                Which::Full => &ops.full,
                Which::Half => &ops.half,
            };
            let x = [u.rho, u.d, u.phi];
            let row = |r: usize| l[(r, 0)] * x[0] + l[(r, 1)] * x[1] + l[(r, 2)] * x[2];
            (u.rho, u.d, u.phi) = (row(0), row(1), row(2));
        }
        u
    }

    /// Evaluates `per_mode` on every mode and assembles the field.
    fn assemble<F>(&self, per_mode: F) -> TorusField
    where
        F: Fn(usize) -> ModeState + Sync,
    {
        let n = self.grid.len();
        let updated: Vec<ModeState> =
            if n >= PAR_MIN_MODES { (0..n).into_par_iter().map(&per_mode).collect() } else { (0..n).map(&per_mode).collect() };
        let dim = self.grid.dim();
        let mut out = TorusField::zeros(&self.grid);
        for (i, u) in updated.into_iter().enumerate() {
            let m = &self.grid.modes()[i];
            let v = join_velocity(&m.k, m.k_abs, u.d, &u.w, dim);
            out.rho[i] = u.rho;
            for j in 0..dim {
                out.v[j][i] = v[j];
            }
            out.phi[i] = u.phi;
        }
        out
    }

    pub fn step(&mut self) -> Result<()> {
        let h = self.config.dt;
        let next = match self.config.scheme {
            Scheme::IfMidpoint => {
                let f0 = self.forcing(&self.state)?;
                let mut mid = self.assemble(|i| self.propagate(i, self.gather(i, Some(&self.state), Some((&f0, 0.5 * h))), Which::Half));
                mid.symmetrize(&self.grid);
                let fm = self.forcing(&mid)?;
                self.assemble(|i| {
                    let free = self.propagate(i, self.gather(i, Some(&self.state), None), Which::Full);
                    let forced = self.propagate(i, self.gather(i, None, Some((&fm, h))), Which::Half);
                    free.add(&forced)
                })
            }
            Scheme::ImexEuler => {
                let f0 = self.forcing(&self.state)?;
                self.assemble(|i| self.propagate(i, self.gather(i, Some(&self.state), Some((&f0, h))), Which::Full))
            }
        };
        let finite = next.rho.iter().chain(&next.phi).chain(next.v.iter().flatten()).all(|z| z.re.is_finite() && z.im.is_finite());
        if !finite {
            return Err(Error::StepFailure { t: self.t + h, reason: "non-finite coefficient".into() });
        }
        self.state = next;
        self.state.symmetrize(&self.grid);
        self.t = self.steps as f64 * h + h;
        self.steps += 1;
        Ok(())
    }

    pub fn run_steps(&mut self, n: u64) -> Result<()> {
        for _ in 0..n {
            self.step()?;
        }
        Ok(())
    }

    pub fn norms(&self) -> TorusNorms {
        TorusNorms::of(&self.grid, &self.state)
    }
}

/// Transverse damping and zero-mode `phi` update over one (half) step.
#[derive(Debug, Clone, Copy)]
struct StepFactors {
    damp: f64,
    phi_decay: f64,
    phi_source: f64,
}

impl StepFactors {
    fn new(params: &ModelParams, scheme: Scheme, h: f64) -> Self {
        let (alpha, nu, gamma) = (params.alpha, params.nu, params.gamma);
        match scheme {
            Scheme::IfMidpoint => {
                let e = (-nu * h).exp();
                Self { damp: (-alpha * h).exp(), phi_decay: e, phi_source: gamma * (1.0 - e) / nu }
            }
            Scheme::ImexEuler => {
                let e = 1.0 / (1.0 + nu * h);
                Self { damp: 1.0 / (1.0 + alpha * h), phi_decay: e, phi_source: gamma * h * e }
            }
        }
    }
}

/// One Fourier mode split into `(rho, d, phi)` and the transverse velocity.
#[derive(Clone, Copy)]
struct ModeState {
    rho: Complex64,
    d: Complex64,
    phi: Complex64,
    w: [Complex64; 3],
}

impl ModeState {
    fn add(&self, o: &ModeState) -> ModeState {
        let mut w = self.w;
        for (x, y) in w.iter_mut().zip(&o.w) {
            *x += y;
        }
        ModeState { rho: self.rho + o.rho, d: self.d + o.d, phi: self.phi + o.phi, w }
    }
}

#[derive(Clone, Copy)]
enum Which {
    Full,
    Half,
}

/// Spectral norms `||grad^k .||`, `k = 0..=3`, of one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TorusNorms {
    pub rho: [f64; 4],
    pub v: [f64; 4],
    pub phi: [f64; 4],
    pub rho_phi: [f64; 4],
    pub d: [f64; 4],
    pub omega: [f64; 4],
}

impl TorusNorms {
    pub fn of(grid: &TorusGrid, s: &TorusField) -> Self {
        let dim = grid.dim();
        let mut d_coef = vec![Complex64::new(0.0, 0.0); grid.len()];
        let mut w_coef: Vec<Vec<Complex64>> = vec![vec![Complex64::new(0.0, 0.0); grid.len()]; dim];
        for (i, m) in grid.modes().iter().enumerate() {
            let vi: Vec<Complex64> = (0..dim).map(|j| s.v[j][i]).collect();
            let (d, w) = split_velocity(&m.k, m.k_abs, &vi);
            d_coef[i] = d;
            for j in 0..dim {
                w_coef[j][i] = w[j];
            }
        }
        let mut out = TorusNorms {
            rho: [0.0; 4],
            v: [0.0; 4],
            phi: [0.0; 4],
            rho_phi: [0.0; 4],
            d: [0.0; 4],
            omega: [0.0; 4],
        };
        for k in 0..4u32 {
            let i = k as usize;
            out.rho[i] = l2_norm(grid, &s.rho, k);
            out.phi[i] = l2_norm(grid, &s.phi, k);
            out.rho_phi[i] = out.rho[i].hypot(out.phi[i]);
            out.v[i] = s.v.iter().map(|c| l2_norm(grid, c, k).powi(2)).sum::<f64>().sqrt();
            out.d[i] = l2_norm(grid, &d_coef, k);
            out.omega[i] = w_coef.iter().map(|c| l2_norm(grid, c, k).powi(2)).sum::<f64>().sqrt();
        }
        out
    }

    pub fn push_into(&self, series: &mut NormSeries, t: f64) {
        series.times.push(t);
        for k in 0..4 {
            for (field, arr) in [
                (Field::Rho, &self.rho),
                (Field::V, &self.v),
                (Field::Phi, &self.phi),
                (Field::RhoPhi, &self.rho_phi),
                (Field::D, &self.d),
                (Field::Omega, &self.omega),
            ] {
                series.series.entry((field, k)).or_default().push(arr[k]);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::derive_coeffs;
    use crate::nonlinear::experiments::propagate_linear;

    fn setup(params: ModelParams, dim: usize, n: usize, l: f64, dt: f64, amp: f64, seed: u64) -> Solver {
        let coeffs = derive_coeffs(&params).unwrap();
        let grid = TorusGrid::new(dim, n, l).unwrap();
        let init = TorusField::random_low_modes(&grid, amp, 3, seed);
        Solver::new(grid, params, coeffs, StepperConfig::new(dt), init).unwrap()
    }

    fn max_coef_diff(a: &TorusField, b: &TorusField) -> f64 {
        let mut m = 0.0f64;
        for (x, y) in a.rho.iter().zip(&b.rho).chain(a.phi.iter().zip(&b.phi)) {
            m = m.max((x - y).norm());
        }
        for (cx, cy) in a.v.iter().zip(&b.v) {
            for (x, y) in cx.iter().zip(cy) {
                m = m.max((x - y).norm());
            }
        }
        m
    }

    fn max_coef(a: &TorusField) -> f64 {
        a.rho.iter().chain(&a.phi).chain(a.v.iter().flatten()).map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn cfl_enforced() {
        let params = ModelParams::default_unstable();
        let coeffs = derive_coeffs(&params).unwrap();
        let grid = TorusGrid::new(1, 1024, 7.5).unwrap();
        assert!(StepperConfig::new(0.1).validate(&grid, coeffs.a).is_err());
        assert!(StepperConfig::new(1e-3).validate(&grid, coeffs.a).is_ok());
        assert!(StepperConfig::new(-1e-3).validate(&grid, coeffs.a).is_err());
    }

    #[test]
    fn split_is_orthogonal() {
        let k: [f64; 3] = [0.3, -1.2, 0.7];
        let ka = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt();
        let v = [Complex64::new(0.2, -0.4), Complex64::new(1.1, 0.3), Complex64::new(-0.5, 0.9)];
        let (d, w) = split_velocity(&k, ka, &v);
        let vn: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        let wn: f64 = w.iter().map(|z| z.norm_sqr()).sum();
        assert!((vn - d.norm_sqr() - wn).abs() < 1e-12);
        let kw: Complex64 = (0..3).map(|j| w[j] * k[j]).sum();
        assert!(kw.norm() < 1e-14);
        let back = join_velocity(&k, ka, d, &w, 3);
        for j in 0..3 {
            assert!((back[j] - v[j]).norm() < 1e-15);
        }
    }

    #[test]
    fn hermitian_and_mass_over_many_steps() {
        let s = setup(ModelParams::default_unstable(), 1, 64, 7.5, 1e-3, 0.02, 4);
        let mut st = s.state().clone();
        st.rho[0] = Complex64::new(0.01, 0.0);
        let coeffs = derive_coeffs(&ModelParams::default_unstable()).unwrap();
        let mut s = Solver::new(s.grid().clone(), ModelParams::default_unstable(), coeffs, *s.config(), st).unwrap();
        let m0 = s.state().mean_rho();
        for _ in 0..10_000 {
            s.step().unwrap();
            assert!(s.state().hermitian_defect(s.grid()) <= 1e-12);
        }
        assert!(((s.state().mean_rho() - m0) / m0).abs() < 1e-10);
    }

    /// Oracle: per-mode exact propagator from the semigroup module.
    #[test]
    fn linear_limit_matches_propagator() {
        for (params, dim, n) in [(ModelParams::default_unstable(), 1, 64), (ModelParams::default_stable(), 3, 8)] {
            let coeffs = derive_coeffs(&params).unwrap();
            let sys = SystemCoeffs::new(&coeffs, &params);
            let mut s = setup(params, dim, n, 7.5, 1e-2, 1e-12, 9);
            let init = s.state().clone();
            s.run_steps(100).unwrap();
            let reference = propagate_linear(s.grid(), sys, &init, s.time()).unwrap();
            let err = max_coef_diff(s.state(), &reference) / max_coef(&init);
            assert!(err < 1e-10, "dim {dim}: {err}");
        }
    }

    #[test]
    fn linear_limit_error_is_quadratic_in_amplitude() {
        let params = ModelParams::default_unstable();
        let coeffs = derive_coeffs(&params).unwrap();
        let sys = SystemCoeffs::new(&coeffs, &params);
        let err = |amp: f64| {
            let mut s = setup(params.clone(), 1, 64, 7.5, 1e-2, amp, 9);
            let init = s.state().clone();
            s.run_steps(100).unwrap();
            let r = propagate_linear(s.grid(), sys, &init, s.time()).unwrap();
            max_coef_diff(s.state(), &r)
        };
        let ratio = err(1e-6) / err(1e-7);
        assert!(ratio > 70.0 && ratio < 130.0, "{ratio}");
    }

    #[test]
    fn midpoint_is_second_order() {
        let params = ModelParams::default_unstable();
        let run = |dt: f64| {
            let mut s = setup(params.clone(), 1, 32, 7.5, dt, 0.05, 2);
            s.run_steps((1.0 / dt).round() as u64).unwrap();
            s.state().clone()
        };
        let reference = run(1.25e-3);
        let e1 = max_coef_diff(&run(2e-2), &reference);
        let e2 = max_coef_diff(&run(1e-2), &reference);
        let order = (e1 / e2).log2();
        assert!((order - 2.0).abs() < 0.3, "order {order}");
    }

    #[test]
    fn imex_fallback_is_first_order() {
        let params = ModelParams::default_stable();
        let coeffs = derive_coeffs(&params).unwrap();
        let grid = TorusGrid::new(1, 32, 7.5).unwrap();
        let init = TorusField::random_low_modes(&grid, 0.05, 3, 2);
        let run = |scheme: Scheme, dt: f64| {
            let mut cfg = StepperConfig::new(dt);
            cfg.scheme = scheme;
            let mut s = Solver::new(grid.clone(), params.clone(), coeffs, cfg, init.clone()).unwrap();
            s.run_steps((1.0 / dt).round() as u64).unwrap();
            s.state().clone()
        };
        let reference = run(Scheme::IfMidpoint, 1e-3);
        let e1 = max_coef_diff(&run(Scheme::ImexEuler, 2e-2), &reference);
        let e2 = max_coef_diff(&run(Scheme::ImexEuler, 1e-2), &reference);
        let order = (e1 / e2).log2();
        assert!((order - 1.0).abs() < 0.3, "order {order}");
    }

    #[test]
    fn pure_omega_decays_at_alpha() {
        let params = ModelParams::default_stable();
        let coeffs = derive_coeffs(&params).unwrap();
        let grid = TorusGrid::new(3, 8, 5.0).unwrap();
        let mut init = TorusField::zeros(&grid);
        // v = (0, 0, sin(k x)) is divergence free
        let idx = grid.modes().iter().position(|m| m.m == [1, 0, 0]).unwrap();
        let partner = grid.modes()[idx].partner;
        init.v[2][idx] = Complex64::new(0.0, -0.5);
        init.v[2][partner] = Complex64::new(0.0, 0.5);
        let mut cfg = StepperConfig::new(0.01);
        cfg.nonlinear = false;
        let mut s = Solver::new(grid, params.clone(), coeffs, cfg, init).unwrap();
        let n0 = s.norms();
        assert_eq!(n0.d[0], 0.0);
        s.run_steps(100).unwrap();
        let n1 = s.norms();
        assert!((n1.omega[0] / n0.omega[0] - (-params.alpha * 1.0f64).exp()).abs() < 1e-12);
        assert!(n1.rho[0] == 0.0 && n1.d[0] == 0.0);
    }

    #[test]
    fn norms_split_consistently() {
        let s = setup(ModelParams::default_stable(), 3, 8, 5.0, 0.01, 0.1, 3);
        let n = s.norms();
        for k in 0..4 {
            let lhs = n.v[k] * n.v[k];
            let rhs = n.d[k] * n.d[k] + n.omega[k] * n.omega[k];
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.max(1e-300));
        }
    }

    #[test]
    fn three_d_smoke() {
        let mut s = setup(ModelParams::default_unstable(), 3, 16, 7.5, 1e-2, 0.02, 6);
        let m0 = s.state().mean_rho();
        s.run_steps(10).unwrap();
        assert!((s.state().mean_rho() - m0).abs() < 1e-10);
        assert!(s.state().hermitian_defect(s.grid()) < 1e-12);
    }
}
