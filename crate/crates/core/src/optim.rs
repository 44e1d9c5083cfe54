//! Dense BFGS with Armijo backtracking for small unconstrained problems.
//!
//! Parameter vectors here are taste vectors (a handful of coordinates), so
//! the full inverse-Hessian approximation is cheaper than bookkeeping for a
//! limited-memory variant.

#[derive(Clone, Copy, Debug)]
pub struct BfgsOptions {
    /// Stop when the gradient infinity-norm falls to this level.
    pub grad_tol: f64,
    /// Once steps stop changing `f` at machine precision, a gradient below
    /// `grad_tol * max(1, |f|)` also counts as converged: for sums of many
    /// terms the absolute gradient cannot be resolved any further.
    pub stall_iters: usize,
    pub max_iter: usize,
    pub max_backtracks: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions {
            grad_tol: 1e-6,
            stall_iters: 3,
            max_iter: 500,
            max_backtracks: 60,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIterations,
    LineSearchFailed,
    NonFiniteStart,
}

#[derive(Clone, Debug)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
}

impl BfgsResult {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f`. The closure writes the gradient into its second argument
/// and returns the function value; non-finite values reject a trial point.
pub fn minimize<F>(mut f: F, x0: &[f64], opts: &BfgsOptions) -> BfgsResult
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return BfgsResult {
            x,
            f: fx,
            grad: g,
            iterations: 0,
            termination: Termination::NonFiniteStart,
        };
    }
    if n == 0 {
        return BfgsResult {
            x,
            f: fx,
            grad: g,
            iterations: 0,
            termination: Termination::Converged,
        };
    }

    let mut h = identity(n);
    let mut h_is_identity = true;
    let mut d = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut hy = vec![0.0; n];
    let mut stalled = 0;
    let at_floor = |g: &[f64], fx: f64| inf_norm(g) <= opts.grad_tol * fx.abs().max(1.0);

    for iter in 0..opts.max_iter {
        if inf_norm(&g) <= opts.grad_tol {
            return BfgsResult {
                x,
                f: fx,
                grad: g,
                iterations: iter,
                termination: Termination::Converged,
            };
        }

        mat_vec(&h, &g, &mut d);
        d.iter_mut().for_each(|v| *v = -*v);
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            h = identity(n);
            h_is_identity = true;
            d.iter_mut().zip(&g).for_each(|(di, gi)| *di = -gi);
            slope = dot(&g, &d);
        }

        // unit Newton step once curvature is known; otherwise cap the move
        let mut step = if h_is_identity {
            (1.0 / inf_norm(&d)).min(1.0)
        } else {
            1.0
        };
        let mut accepted = false;
        let mut f_new = f64::INFINITY;
        for _ in 0..opts.max_backtracks {
            for i in 0..n {
                x_new[i] = x[i] + step * d[i];
            }
            f_new = f(&x_new, &mut g_new);
            if f_new.is_finite()
                && g_new.iter().all(|v| v.is_finite())
                && f_new <= fx + 1e-4 * step * slope
            {
                accepted = true;
                break;
            }
            step *= 0.5;
        }

        if !accepted {
            if !h_is_identity {
                h = identity(n);
                h_is_identity = true;
                continue;
            }
            let termination = if at_floor(&g, fx) {
                Termination::Converged
            } else {
                Termination::LineSearchFailed
            };
            return BfgsResult {
                x,
                f: fx,
                grad: g,
                iterations: iter,
                termination,
            };
        }
        if fx - f_new <= 4.0 * f64::EPSILON * fx.abs().max(1.0) {
            stalled += 1;
        } else {
            stalled = 0;
        }

        for i in 0..n {
            s[i] = x_new[i] - x[i];
            y[i] = g_new[i] - g[i];
        }
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if h_is_identity {
                let scale = sy / dot(&y, &y);
                h.iter_mut().flatten().for_each(|v| *v *= scale);
            }
            // H <- (I - rho s y') H (I - rho y s') + rho s s'
            let rho = 1.0 / sy;
            mat_vec(&h, &y, &mut hy);
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j])
                        + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
            h_is_identity = false;
        }

        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        fx = f_new;
        if stalled >= opts.stall_iters && at_floor(&g, fx) {
            return BfgsResult {
                x,
                f: fx,
                grad: g,
                iterations: iter + 1,
                termination: Termination::Converged,
            };
        }
    }

    let termination = if inf_norm(&g) <= opts.grad_tol {
        Termination::Converged
    } else {
        Termination::MaxIterations
    };
    BfgsResult {
        x,
        f: fx,
        grad: g,
        iterations: opts.max_iter,
        termination,
    }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn mat_vec(m: &[Vec<f64>], v: &[f64], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(m) {
        *o = dot(row, v);
    }
}
