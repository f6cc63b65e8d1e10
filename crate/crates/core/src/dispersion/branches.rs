use num_complex::Complex64;
use rayon::prelude::*;

use super::{eigenvalues, SystemCoeffs};
use crate::error::{Error, Result};
use crate::model::{DerivedCoeffs, ModelParams};

const PERMUTATIONS: [[usize; 3]; 6] =
    [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

/// Eigenvalue branches tracked for continuity over a wavenumber grid.
///
/// `values[j][i]` is branch `i + 1` at `grid[j]`. Labels follow the
/// low-frequency expansions at the first grid point (`1 ~ -alpha`,
/// `2 ~ -nu`, `3 ~ O(r^2)`). Continuity does not in general carry the
/// low-frequency labels onto the high-frequency ones, so the branch that is
/// the high-frequency `lambda_k` at the last grid point is recorded
/// separately in `high_labels[k - 1]` (a 0-based branch index).
#[derive(Debug, Clone)]
pub struct SpectralBranch {
    pub grid: Vec<f64>,
    pub values: Vec<[Complex64; 3]>,
    pub high_labels: [usize; 3],
    pub sys: SystemCoeffs,
}

impl SpectralBranch {
    /// Values of branch `label` (1-based, low-frequency labelling).
    pub fn branch(&self, label: usize) -> Vec<Complex64> {
        self.values.iter().map(|v| v[label - 1]).collect()
    }

    /// Values of the branch that carries the high-frequency label `label`.
    pub fn high_branch(&self, label: usize) -> Vec<Complex64> {
        let idx = self.high_labels[label - 1];
        self.values.iter().map(|v| v[idx]).collect()
    }
}

fn assignment_cost(prev: &[Complex64; 3], cur: &[Complex64; 3], perm: &[usize; 3]) -> f64 {
    (0..3).map(|i| (prev[i] - cur[perm[i]]).norm()).sum()
}

/// Permutation `perm` minimising `sum |target[i] - cur[perm[i]]|`; earlier
/// permutations (identity first) win ties.
pub(crate) fn best_assignment(target: &[Complex64; 3], cur: &[Complex64; 3]) -> [usize; 3] {
    let mut best = PERMUTATIONS[0];
    let mut best_cost = assignment_cost(target, cur, &best);
    let scale: f64 = target.iter().chain(cur.iter()).map(|z| z.norm()).sum::<f64>().max(1e-300);
    for perm in &PERMUTATIONS[1..] {
        let c = assignment_cost(target, cur, perm);
        if c < best_cost - 1e-14 * scale {
            best = *perm;
            best_cost = c;
        }
    }
    best
}

fn apply(perm: &[usize; 3], v: &[Complex64; 3]) -> [Complex64; 3] {
    [v[perm[0]], v[perm[1]], v[perm[2]]]
}

/// Low-frequency predictions for (lambda_1, lambda_2, lambda_3).
pub(crate) fn low_freq_prediction(sys: &SystemCoeffs, r: f64) -> [Complex64; 3] {
    let SystemCoeffs { a, b, alpha, gamma, mu, nu } = *sys;
    let r2 = r * r;
    if (alpha - nu).abs() <= 1e-9 * alpha.max(nu) {
        let w = (a * b * gamma / alpha).sqrt() * r;
        let re = -alpha + 0.5 * (a * (a * alpha - b * gamma) / (alpha * alpha) - mu) * r2;
        let l3 = -a * (a * alpha - b * gamma) / (alpha * alpha) * r2;
        [Complex64::new(re, w), Complex64::new(re, -w), Complex64::new(l3, 0.0)]
    } else {
        let l1 = -alpha + (a * a * (alpha - nu) + a * b * gamma) / (alpha * (alpha - nu)) * r2;
        let l2 = -nu - (mu * nu * (alpha - nu) + a * b * gamma) / (nu * (alpha - nu)) * r2;
        let l3 = -a * (a * nu - b * gamma) / (alpha * nu) * r2;
        [l1, l2, l3].map(|x| Complex64::new(x, 0.0))
    }
}

/// High-frequency predictions for (lambda_1, lambda_2, lambda_3).
pub(crate) fn high_freq_prediction(sys: &SystemCoeffs, r: f64) -> [Complex64; 3] {
    [
        Complex64::new(-0.5 * sys.alpha, sys.a * r),
        Complex64::new(-0.5 * sys.alpha, -sys.a * r),
        Complex64::new(-sys.mu * r * r - sys.nu, 0.0),
    ]
}

/// Continuity matching of raw root triples along `grid`. The first point is
/// labelled against `initial`; each later point is assigned to minimise the
/// total distance to the previous point.
pub fn match_branches(roots: &[[Complex64; 3]], initial: &[Complex64; 3]) -> Vec<[Complex64; 3]> {
    let mut out = Vec::with_capacity(roots.len());
    let Some(first) = roots.first() else {
        return out;
    };
    let mut prev = apply(&best_assignment(initial, first), first);
    out.push(prev);
    for cur in &roots[1..] {
        prev = apply(&best_assignment(&prev, cur), cur);
        out.push(prev);
    }
    out
}

pub fn build_branches(
    coeffs: &DerivedCoeffs,
    params: &ModelParams,
    grid: &[f64],
) -> Result<SpectralBranch> {
    build_branches_sys(&SystemCoeffs::new(coeffs, params), grid)
}

pub(crate) fn build_branches_sys(sys: &SystemCoeffs, grid: &[f64]) -> Result<SpectralBranch> {
    if grid.is_empty() {
        return Err(Error::domain("empty wavenumber grid"));
    }
    if grid[0] < 0.0 || !grid[0].is_finite() {
        return Err(Error::domain("grid must start at a finite r >= 0"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("grid must be strictly increasing"));
    }
    let roots: Vec<[Complex64; 3]> = grid.par_iter().map(|&r| eigenvalues(sys, r)).collect();
    let (eta1, eta2) = super::growth::default_bands_sys(sys);
    let r0 = grid[0];
    let initial = if r0 >= eta2 {
        // Grid starts in the high-frequency regime: use the low-frequency
        // label semantics via the diffusive mode (3) and the acoustic pair.
        let h = high_freq_prediction(sys, r0);
        [h[0], h[2], h[1]]
    } else if r0 <= eta1 {
        low_freq_prediction(sys, r0)
    } else {
        // Middle band: order by real part (slow mode = 3, then 1, then 2).
        let mut l = roots[0];
        l.sort_by(|x, y| y.re.total_cmp(&x.re));
        [l[1], l[2], l[0]]
    };
    let values = match_branches(&roots, &initial);
    let last = values.last().expect("non-empty");
    let high = high_freq_prediction(sys, *grid.last().expect("non-empty"));
    let perm = best_assignment(&high, last);
    Ok(SpectralBranch { grid: grid.to_vec(), values, high_labels: perm, sys: *sys })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stable() -> SystemCoeffs {
        SystemCoeffs { a: 1.0, b: 1.0, alpha: 1.0, gamma: 1.0, mu: 1.0, nu: 2.0 }
    }

    fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
    }

    #[test]
    fn low_end_branch_three_is_small_and_real() {
        let b = build_branches_sys(&stable(), &[1e-4, 2e-4]).unwrap();
        for z in b.branch(3) {
            assert_eq!(z.im, 0.0);
            assert!(z.re < 0.0 && z.re.abs() < 1e-7);
        }
        assert!((b.branch(1)[0].re + 1.0).abs() < 1e-6);
        assert!((b.branch(2)[0].re + 2.0).abs() < 1e-6);
    }

    #[test]
    fn high_end_real_branch() {
        let grid = log_grid(1e3, 1e4, 16);
        let b = build_branches_sys(&stable(), &grid).unwrap();
        let l3 = b.high_branch(3);
        for (r, z) in grid.iter().zip(&l3) {
            assert_eq!(z.im, 0.0);
            let resid = (z.re + r * r + 2.0).abs();
            assert!(resid < 10.0 / (r * r), "r={r} resid={resid}");
        }
    }

    #[test]
    fn full_range_labels_low_and_high() {
        let grid = log_grid(1e-4, 1e4, 400);
        let b = build_branches_sys(&stable(), &grid).unwrap();
        let first = b.values[0];
        assert!(first[2].re.abs() < 1e-6);
        let last = b.values.last().unwrap();
        let z = last[b.high_labels[2]];
        assert!(z.im == 0.0 && (z.re + 1e8 + 2.0).abs() < 1e-3);
    }

    #[test]
    fn matching_ignores_root_order() {
        let grid = log_grid(0.01, 10.0, 50);
        let sys = SystemCoeffs { a: 1.0, b: 3.0, alpha: 2.0, gamma: 1.0, mu: 1.0, nu: 1.0 };
        let roots: Vec<_> = grid.iter().map(|&r| eigenvalues(&sys, r)).collect();
        let init = low_freq_prediction(&sys, grid[0]);
        let reference = match_branches(&roots, &init);
        for j in [1, 17, 30, 48] {
            let mut shuffled = roots.clone();
            shuffled[j] = [roots[j][2], roots[j][0], roots[j][1]];
            assert_eq!(match_branches(&shuffled, &init), reference);
        }
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(build_branches_sys(&stable(), &[]).is_err());
        assert!(build_branches_sys(&stable(), &[0.1, 0.1]).is_err());
        assert!(build_branches_sys(&stable(), &[-1.0, 0.1]).is_err());
    }
}
