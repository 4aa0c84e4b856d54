//! Small 1-D optimization helpers: coarse grid scan followed by
//! golden-section refinement, shared by the parametric solvers.

/// Golden-section minimization of a unimodal function on [a, b] to the given
/// x-resolution. Returns (argmin, min).
pub fn golden_min(f: &dyn Fn(f64) -> f64, a: f64, b: f64, x_tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (a.min(b), a.max(b));
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a) > x_tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Golden-section maximization; returns (argmax, max).
pub fn golden_max(f: &dyn Fn(f64) -> f64, a: f64, b: f64, x_tol: f64) -> (f64, f64) {
    let (x, neg) = golden_min(&|t| -f(t), a, b, x_tol);
    (x, -neg)
}

/// Coarse grid scan (including both endpoints) followed by golden-section
/// refinement on the bracket around the best grid point.
pub fn grid_then_golden(f: &dyn Fn(f64) -> f64, a: f64, b: f64, grid_points: usize, x_tol: f64) -> (f64, f64) {
    let n = grid_points.max(2);
    let mut best_i = 0;
    let mut best = f64::INFINITY;
    let xs: Vec<f64> = (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect();
    let mut fs = Vec::with_capacity(n);
    for (i, &x) in xs.iter().enumerate() {
        let v = f(x);
        fs.push(v);
        if v < best {
            best = v;
            best_i = i;
        }
    }
    let lo = if best_i == 0 { xs[0] } else { xs[best_i - 1] };
    let hi = if best_i == n - 1 { xs[n - 1] } else { xs[best_i + 1] };
    let (x, v) = golden_min(f, lo, hi, x_tol);
    if v <= best {
        (x, v)
    } else {
        (xs[best_i], best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn golden_finds_parabola_min() {
        let f = |x: f64| (x - 1.3) * (x - 1.3) + 2.0;
        let (x, v) = golden_min(&f, 0.0, 4.0, 1e-10);
        // x-resolution near a quadratic minimum is limited to sqrt(f64 eps)
        assert_relative_eq!(x, 1.3, epsilon = 1e-6);
        assert_relative_eq!(v, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn grid_then_golden_handles_boundary_min() {
        let f = |x: f64| x; // min at the left endpoint
        let (x, _) = grid_then_golden(&f, 0.0, 1.0, 64, 1e-9);
        assert!(x < 1e-6);
    }

    #[test]
    fn golden_max_concave() {
        let f = |x: f64| -(x - 0.25) * (x - 0.25);
        let (x, v) = golden_max(&f, -1.0, 1.0, 1e-10);
        assert_relative_eq!(x, 0.25, epsilon = 1e-6);
        assert!(v.abs() < 1e-15);
    }
}
