//! One-dimensional search helpers.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for the maximiser of a unimodal `f` on `[lo, hi]`.
///
/// Stops once the bracket width falls below `rel_tol * |midpoint|` (or
/// `rel_tol` when the midpoint is zero) or after `max_iter` iterations.
/// Returns `(x, f(x))` for the best point evaluated.
pub fn golden_section_max<F>(f: F, mut lo: f64, mut hi: f64, rel_tol: f64, max_iter: usize) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= rel_tol * mid.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// `n` points spaced evenly in `ln r` over `[lo, hi]`, endpoints included.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == n - 1 {
                hi
            } else {
                (llo + (lhi - llo) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_parabola_peak() {
        // a flat peak limits x to about sqrt(eps) of the value scale
        let (x, fx) = golden_section_max(|x| -(x - 0.2).powi(2) + 3.0, -1.0, 1.0, 1e-10, 500);
        assert!((x - 0.2).abs() < 1e-7);
        assert!((fx - 3.0).abs() < 1e-15);
    }

    #[test]
    fn log_space_endpoints() {
        let g = log_space(1e-4, 1e4, 9);
        assert_eq!(g[0], 1e-4);
        assert_eq!(g[8], 1e4);
        assert!((g[4] - 1.0).abs() < 1e-12);
    }
}
