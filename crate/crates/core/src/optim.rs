//! BFGS minimizer with backtracking line search.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Stop when the max-norm of the gradient falls below this.
    pub grad_tol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions {
            max_iter: 500,
            grad_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsResult {
    pub x: DVector<f64>,
    pub value: f64,
    pub grad: DVector<f64>,
    pub iterations: usize,
}

/// Minimizes `f`, which returns the value and writes the gradient into its second argument.
/// The returned point is never worse than `x0`.
pub fn minimize<F>(mut f: F, x0: DVector<f64>, opts: BfgsOptions) -> BfgsResult
where
    F: FnMut(&DVector<f64>, &mut DVector<f64>) -> f64,
{
    let n = x0.len();
    let mut x = x0;
    let mut g = DVector::zeros(n);
    let mut fx = f(&x, &mut g);
    if n == 0 {
        return BfgsResult {
            x,
            value: fx,
            grad: g,
            iterations: 0,
        };
    }
    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let mut g_new = DVector::zeros(n);
    let mut iterations = 0;
    let mut first = true;

    while iterations < opts.max_iter && g.amax() >= opts.grad_tol {
        iterations += 1;
        let mut dir = -(&h_inv * &g);
        let mut slope = dir.dot(&g);
        if slope >= 0.0 {
            // lost descent; restart from steepest descent
            h_inv = DMatrix::identity(n, n);
            dir = -g.clone();
            slope = dir.dot(&g);
        }
        // first step scaled so it cannot jump absurdly far
        let mut step = if first {
            (1.0 / g.amax()).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &x + step * &dir;
            let ft = f(&trial, &mut g_new);
            if ft.is_finite() && ft <= fx + 1e-4 * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            break;
        };
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if first && sy > 0.0 {
            h_inv *= sy / y.dot(&y);
        }
        first = false;
        if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let hy = &h_inv * &y;
            let yhy = y.dot(&hy);
            // H+ = H - rho (s hyT + hy sT) + (rho^2 yHy + rho) s sT
            h_inv.ger(-rho, &s, &hy, 1.0);
            h_inv.ger(-rho, &hy, &s, 1.0);
            h_inv.ger(rho * rho * yhy + rho, &s, &s, 1.0);
        }
        let progress = fx - f_new;
        x = x_new;
        fx = f_new;
        std::mem::swap(&mut g, &mut g_new);
        if progress <= f64::EPSILON * fx.abs().max(1.0) * 0.5 && g.amax() < opts.grad_tol * 1e3 {
            break;
        }
    }
    BfgsResult {
        x,
        value: fx,
        grad: g,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &DVector<f64>, g: &mut DVector<f64>| {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        };
        let r = minimize(f, DVector::from_vec(vec![-1.2, 1.0]), BfgsOptions::default());
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6, "{:?}", r.x);
    }

    #[test]
    fn quadratic_exact() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0]);
        let b = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let f = |x: &DVector<f64>, g: &mut DVector<f64>| {
            let ax = &a * x;
            g.copy_from(&(&ax - &b));
            0.5 * x.dot(&ax) - b.dot(x)
        };
        let r = minimize(f, DVector::zeros(3), BfgsOptions::default());
        let exact = a.clone().lu().solve(&b).unwrap();
        assert!((r.x - exact).amax() < 1e-8);
    }
}
