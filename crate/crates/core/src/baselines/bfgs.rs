//! Quasi-Newton minimisation with Armijo backtracking.

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iter: usize,
    pub gtol: f64,
    pub ftol: f64,
    /// Largest allowed coordinate change in one step.
    pub max_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iter: 300,
            gtol: 1e-6,
            ftol: 1e-12,
            max_step: 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BfgsResult<const N: usize> {
    pub x: [f64; N],
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn dot<const N: usize>(a: &[f64; N], b: &[f64; N]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn identity<const N: usize>() -> [[f64; N]; N] {
    let mut h = [[0.0; N]; N];
    for (i, row) in h.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    h
}

fn line_search<const N: usize, F>(
    obj: &mut F,
    x: &[f64; N],
    f: f64,
    g: &[f64; N],
    d: &[f64; N],
    max_step: f64,
) -> Option<([f64; N], f64, [f64; N])>
where
    F: FnMut(&[f64; N]) -> (f64, [f64; N]),
{
    let slope = dot(g, d);
    let longest = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut t = if longest > max_step { max_step / longest } else { 1.0 };
    for _ in 0..60 {
        let mut xn = *x;
        for i in 0..N {
            xn[i] += t * d[i];
        }
        let (fn_, gn) = obj(&xn);
        if fn_.is_finite() && fn_ <= f + 1e-4 * t * slope {
            return Some((xn, fn_, gn));
        }
        t *= 0.5;
    }
    None
}

/// Minimises `obj`, which returns the value and gradient.
pub fn minimize<const N: usize, F>(mut obj: F, x0: [f64; N], opts: &BfgsOptions) -> BfgsResult<N>
where
    F: FnMut(&[f64; N]) -> (f64, [f64; N]),
{
    let mut x = x0;
    let (mut f, mut g) = obj(&x);
    let mut h = identity::<N>();
    let mut fresh = true;
    for iter in 0..opts.max_iter {
        if !f.is_finite() {
            return BfgsResult {
                x,
                f,
                iterations: iter,
                converged: false,
            };
        }
        if g.iter().all(|v| v.abs() < opts.gtol) {
            return BfgsResult {
                x,
                f,
                iterations: iter,
                converged: true,
            };
        }
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = -(0..N).map(|j| h[i][j] * g[j]).sum::<f64>();
        }
        if dot(&g, &d) >= 0.0 {
            h = identity();
            fresh = true;
            d = g.map(|v| -v);
        }
        let step = match line_search(&mut obj, &x, f, &g, &d, opts.max_step) {
            Some(s) => s,
            None if !fresh => {
                h = identity();
                fresh = true;
                continue;
            }
            // No descent along the gradient: stationary up to the resolution
            // of the objective (a kink in the relaxed likelihood, say).
            None => {
                return BfgsResult {
                    x,
                    f,
                    iterations: iter,
                    converged: true,
                }
            }
        };
        let (xn, fn_, gn) = step;
        let mut s = [0.0; N];
        let mut y = [0.0; N];
        for i in 0..N {
            s[i] = xn[i] - x[i];
            y[i] = gn[i] - g[i];
        }
        let improvement = f - fn_;
        x = xn;
        f = fn_;
        g = gn;
        if improvement <= opts.ftol * (1.0 + f.abs()) {
            return BfgsResult {
                x,
                f,
                iterations: iter + 1,
                converged: true,
            };
        }
        let sy = dot(&s, &y);
        if sy > 1e-12 {
            if fresh {
                let scale = sy / dot(&y, &y);
                h = identity();
                for (i, row) in h.iter_mut().enumerate() {
                    row[i] = scale;
                }
            }
            let rho = 1.0 / sy;
            let mut hy = [0.0; N];
            for i in 0..N {
                hy[i] = (0..N).map(|j| h[i][j] * y[j]).sum();
            }
            let yhy = dot(&y, &hy);
            for i in 0..N {
                for j in 0..N {
                    h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
            fresh = false;
        }
    }
    BfgsResult {
        x,
        f,
        iterations: opts.max_iter,
        converged: false,
    }
}
