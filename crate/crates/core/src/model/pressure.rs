//! Barotropic pressure closures `P(rho)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Monotone pressure law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PressureLaw {
    /// `P(rho) = c * rho^g`, `g >= 1`.
    PowerLaw { c: f64, g: f64 },
    /// `P(rho) = c * rho + offset`.
    Affine { c: f64, offset: f64 },
    /// Monotone cubic (Fritsch-Carlson) interpolant through tabulated samples.
    UserTable(MonotoneCubic),
}

impl Default for PressureLaw {
    fn default() -> Self {
        PressureLaw::PowerLaw { c: 1.0, g: 1.0 }
    }
}

impl PressureLaw {
    pub fn power(c: f64, g: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidPressure(format!("coefficient c = {c} must be > 0")));
        }
        if !(g >= 1.0 && g.is_finite()) {
            return Err(Error::InvalidPressure(format!("exponent g = {g} must be >= 1")));
        }
        Ok(PressureLaw::PowerLaw { c, g })
    }

    pub fn affine(c: f64, offset: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidPressure(format!("coefficient c = {c} must be > 0")));
        }
        Ok(PressureLaw::Affine { c, offset })
    }

    pub fn table(rho: Vec<f64>, pressure: Vec<f64>) -> Result<Self> {
        MonotoneCubic::new(rho, pressure).map(PressureLaw::UserTable)
    }

    pub fn pressure(&self, rho: f64) -> f64 {
        match self {
            PressureLaw::PowerLaw { c, g } => c * rho.powf(*g),
            PressureLaw::Affine { c, offset } => c * rho + offset,
            PressureLaw::UserTable(t) => t.value(rho),
        }
    }

    /// `P'(rho)`.
    pub fn derivative(&self, rho: f64) -> f64 {
        match self {
            PressureLaw::PowerLaw { c, g } => {
                if *g == 1.0 {
                    *c
                } else {
                    c * g * rho.powf(g - 1.0)
                }
            }
            PressureLaw::Affine { c, .. } => *c,
            PressureLaw::UserTable(t) => t.derivative(rho),
        }
    }

    /// Checks `P' > 0` on `n` uniformly spaced samples of `[lo, hi]`.
    pub fn check_monotone(&self, lo: f64, hi: f64, n: usize) -> Result<()> {
        let n = n.max(2);
        for i in 0..n {
            let rho = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            if rho <= 0.0 {
                continue;
            }
            let dp = self.derivative(rho);
            if !(dp > 0.0) {
                return Err(Error::InvalidPressure(format!(
                    "P'({rho:.6e}) = {dp:.6e} is not positive"
                )));
            }
        }
        Ok(())
    }

    /// Short text form used in output metadata, e.g. `power:1,1`.
    pub fn describe(&self) -> String {
        match self {
            PressureLaw::PowerLaw { c, g } => format!("power:{c},{g}"),
            PressureLaw::Affine { c, offset } => format!("affine:{c},{offset}"),
            PressureLaw::UserTable(t) => {
                let pts: Vec<String> =
                    t.x.iter().zip(&t.y).map(|(x, y)| format!("{x}:{y}")).collect();
                format!("table:{}", pts.join(";"))
            }
        }
    }
}

/// Piecewise-cubic Hermite interpolant with Fritsch-Carlson slope limiting.
///
/// Preserves monotonicity of the data, so `P' >= 0` wherever the table is
/// nondecreasing. Outside the table the end cubic is extended linearly using
/// the end slope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() || x.len() < 2 {
            return Err(Error::InvalidPressure(
                "table needs at least two (rho, P) pairs".into(),
            ));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidPressure("table rho values must increase".into()));
        }
        if y.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidPressure(
                "table pressure values must strictly increase".into(),
            ));
        }
        let n = x.len();
        let secants: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / (x[i + 1] - x[i])).collect();
        let mut slopes = vec![0.0; n];
        slopes[0] = secants[0];
        slopes[n - 1] = secants[n - 2];
        for i in 1..n - 1 {
            slopes[i] = if secants[i - 1] * secants[i] <= 0.0 {
                0.0
            } else {
                0.5 * (secants[i - 1] + secants[i])
            };
        }
        for (i, &s) in secants.iter().enumerate() {
            let alpha = slopes[i] / s;
            let beta = slopes[i + 1] / s;
            let norm = alpha * alpha + beta * beta;
            if norm > 9.0 {
                let tau = 3.0 / norm.sqrt();
                slopes[i] = tau * alpha * s;
                slopes[i + 1] = tau * beta * s;
            }
        }
        Ok(Self { x, y, slopes })
    }

    fn interval(&self, t: f64) -> usize {
        let n = self.x.len();
        match self.x.partition_point(|&xi| xi <= t) {
            0 => 0,
            i if i >= n => n - 2,
            i => i - 1,
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t <= self.x[0] {
            return self.y[0] + self.slopes[0] * (t - self.x[0]);
        }
        if t >= self.x[n - 1] {
            return self.y[n - 1] + self.slopes[n - 1] * (t - self.x[n - 1]);
        }
        let i = self.interval(t);
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        h00 * self.y[i] + h10 * h * self.slopes[i] + h01 * self.y[i + 1] + h11 * h * self.slopes[i + 1]
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t <= self.x[0] {
            return self.slopes[0];
        }
        if t >= self.x[n - 1] {
            return self.slopes[n - 1];
        }
        let i = self.interval(t);
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let d00 = 6.0 * s * (s - 1.0) / h;
        let d10 = (1.0 - s) * (1.0 - 3.0 * s);
        let d01 = -d00;
        let d11 = s * (3.0 * s - 2.0);
        d00 * self.y[i] + d10 * self.slopes[i] + d01 * self.y[i + 1] + d11 * self.slopes[i + 1]
    }
}
