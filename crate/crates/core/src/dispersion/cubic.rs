//! Roots of the monic real cubic `x^3 + c2 x^2 + c1 x + c0`.
//!
//! Closed form on the depressed cubic (trigonometric form for three real
//! roots, Cardano otherwise), followed by Newton polishing on the original
//! polynomial. Near-multiple roots are reported so the caller can fall back
//! to a dense eigensolver.

use num_complex::Complex64;

/// Coefficients of the monic cubic `x^3 + c2 x^2 + c1 x + c0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cubic {
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

/// Relative size of the depressed-cubic discriminant below which the roots
/// are treated as (nearly) multiple.
pub const NEAR_MULTIPLE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
pub struct CubicRoots {
    pub roots: [Complex64; 3],
    pub near_multiple: bool,
}

impl Cubic {
    pub fn eval(&self, x: Complex64) -> Complex64 {
        ((x + self.c2) * x + self.c1) * x + self.c0
    }

    /// Value and first derivative.
    pub fn eval_with_derivative(&self, x: Complex64) -> (Complex64, Complex64) {
        let f = self.eval(x);
        let df = (x * 3.0 + 2.0 * self.c2) * x + self.c1;
        (f, df)
    }

    fn eval_real(&self, x: f64) -> (f64, f64) {
        let f = ((x + self.c2) * x + self.c1) * x + self.c0;
        let df = (3.0 * x + 2.0 * self.c2) * x + self.c1;
        (f, df)
    }

    /// Newton-polishes a real root; steps that do not reduce `|F|` are rejected.
    pub fn polish_real(&self, mut x: f64, steps: usize) -> f64 {
        let (mut f, mut df) = self.eval_real(x);
        for _ in 0..steps {
            if f == 0.0 || df == 0.0 {
                break;
            }
            let cand = x - f / df;
            let (fc, dfc) = self.eval_real(cand);
            if fc.abs() >= f.abs() {
                break;
            }
            x = cand;
            f = fc;
            df = dfc;
        }
        x
    }

    pub fn polish_complex(&self, mut x: Complex64, steps: usize) -> Complex64 {
        let (mut f, mut df) = self.eval_with_derivative(x);
        for _ in 0..steps {
            if f.norm() == 0.0 || df.norm() == 0.0 {
                break;
            }
            let cand = x - f / df;
            let (fc, dfc) = self.eval_with_derivative(cand);
            if fc.norm() >= f.norm() {
                break;
            }
            x = cand;
            f = fc;
            df = dfc;
        }
        x
    }

    pub fn solve(&self) -> CubicRoots {
        let Cubic { c2, c1, c0 } = *self;
        let shift = c2 / 3.0;
        let p = c1 - c2 * c2 / 3.0;
        let q = 2.0 * c2 * c2 * c2 / 27.0 - c2 * c1 / 3.0 + c0;
        let half_q = 0.5 * q;
        let third_p = p / 3.0;
        let disc = half_q * half_q + third_p * third_p * third_p;
        let disc_scale = half_q * half_q + third_p.abs().powi(3);
        let near_multiple = disc_scale == 0.0 || disc.abs() <= NEAR_MULTIPLE_TOL * disc_scale;

        const STEPS: usize = 4;
        let roots = if disc < 0.0 {
            // Three distinct real roots.
            let m = 2.0 * (-third_p).sqrt();
            let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
            let theta = arg.acos() / 3.0;
            let mut rs = [0.0; 3];
            for (k, r) in rs.iter_mut().enumerate() {
                let x = m * (theta - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos() - shift;
                *r = self.polish_real(x, STEPS);
            }
            rs.map(|r| Complex64::new(r, 0.0))
        } else {
            // One real root and a complex-conjugate pair.
            let sq = disc.sqrt();
            let u = (-half_q - half_q.signum() * sq).cbrt();
            let v = if u == 0.0 { 0.0 } else { -third_p / u };
            let real = self.polish_real(u + v - shift, STEPS);
            let re = -0.5 * (u + v) - shift;
            let im = 0.5 * 3f64.sqrt() * (u - v).abs();
            let upper = self.polish_complex(Complex64::new(re, im), STEPS);
            [Complex64::new(real, 0.0), upper, upper.conj()]
        };
        CubicRoots { roots, near_multiple }
    }
}
