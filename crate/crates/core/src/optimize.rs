//! Bounded scalar minimization on [0, 1].

const GRID_STEPS: usize = 32;
const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Minimizes `f` over [0, 1]: a uniform scan (endpoints included) brackets
/// the best sample, then golden-section search refines it to `tol`. Returns
/// the best point seen and its value. Ties keep the smaller argument.
pub fn minimize_unit_interval<F: Fn(f64) -> f64>(f: F, tol: f64) -> (f64, f64) {
    let mut best = (0.0, f(0.0));
    let mut best_i = 0;
    for i in 1..=GRID_STEPS {
        let x = i as f64 / GRID_STEPS as f64;
        let v = f(x);
        if v < best.1 {
            best = (x, v);
            best_i = i;
        }
    }
    let step = 1.0 / GRID_STEPS as f64;
    let mut lo = (best_i.saturating_sub(1)) as f64 * step;
    let mut hi = ((best_i + 1).min(GRID_STEPS)) as f64 * step;
    let tol = tol.max(1e-12);
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while hi - lo > tol {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - INV_PHI * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + INV_PHI * (hi - lo);
            fd = f(d);
        }
    }
    for (x, v) in [(c, fc), (d, fd)] {
        if v < best.1 {
            best = (x, v);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interior_quadratic() {
        let (x, v) = minimize_unit_interval(|x| (x - 0.3137).powi(2), 1e-8);
        assert!((x - 0.3137).abs() < 1e-6);
        assert!(v < 1e-12);
    }

    #[test]
    fn endpoint_minima() {
        assert_eq!(minimize_unit_interval(|x| x, 1e-6), (0.0, 0.0));
        assert_eq!(minimize_unit_interval(|x| 1.0 - x, 1e-6), (1.0, 0.0));
    }

    #[test]
    fn constant_prefers_zero() {
        assert_eq!(minimize_unit_interval(|_| 2.0, 1e-6).0, 0.0);
    }
}
