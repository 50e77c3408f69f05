//! Box-constrained quasi-Newton minimization (projected L-BFGS with Armijo
//! backtracking along the projection arc).

use std::collections::VecDeque;

#[derive(Debug, Clone)]
pub struct BoxMinimizer {
    pub max_iters: usize,
    pub memory: usize,
    pub grad_tol: f64,
    pub f_tol: f64,
    /// Largest allowed move of a single coordinate in one step.
    pub max_step: f64,
}

impl Default for BoxMinimizer {
    fn default() -> Self {
        BoxMinimizer {
            max_iters: 100,
            memory: 8,
            grad_tol: 1e-6,
            f_tol: 1e-10,
            max_step: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl BoxMinimizer {
    /// Minimizes `f` (returning value and gradient) over `[lower, upper]`.
    ///
    /// `project`, when given, runs after clipping on every trial point and may
    /// move coordinates further as long as they stay inside the box.
    pub fn minimize<F>(
        &self,
        mut f: F,
        x0: &[f64],
        lower: &[f64],
        upper: &[f64],
        project: Option<&dyn Fn(&mut [f64])>,
    ) -> MinimizeResult
    where
        F: FnMut(&[f64]) -> (f64, Vec<f64>),
    {
        let n = x0.len();
        let proj = |x: &mut [f64]| {
            for i in 0..n {
                x[i] = x[i].clamp(lower[i], upper[i]);
            }
            if let Some(p) = project {
                p(x);
            }
        };
        let mut x = x0.to_vec();
        proj(&mut x);
        let (mut fx, mut g) = f(&x);
        let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
        let mut converged = false;
        let mut iterations = 0;
        if !fx.is_finite() {
            return MinimizeResult {
                x,
                value: fx,
                iterations,
                converged,
            };
        }

        while iterations < self.max_iters {
            iterations += 1;
            let free: Vec<bool> = (0..n)
                .map(|i| {
                    let at_lo = x[i] <= lower[i] && g[i] > 0.0;
                    let at_hi = x[i] >= upper[i] && g[i] < 0.0;
                    !(at_lo || at_hi)
                })
                .collect();
            let pg: Vec<f64> = (0..n).map(|i| if free[i] { g[i] } else { 0.0 }).collect();
            let pg_norm = pg.iter().map(|v| v * v).sum::<f64>().sqrt();
            if pg_norm < self.grad_tol {
                converged = true;
                break;
            }

            let mut d = self.two_loop(&pg, &history, &free);
            if dot(&d, &pg) >= 0.0 {
                history.clear();
                d = pg.iter().map(|v| -v).collect();
            }
            let dmax = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let mut t = if dmax > self.max_step {
                self.max_step / dmax
            } else {
                1.0
            };

            let mut accepted = None;
            for _ in 0..40 {
                let mut xn: Vec<f64> = (0..n).map(|i| x[i] + t * d[i]).collect();
                proj(&mut xn);
                let step: Vec<f64> = (0..n).map(|i| xn[i] - x[i]).collect();
                if step.iter().all(|s| s.abs() < 1e-15) {
                    break;
                }
                let (fnew, gnew) = f(&xn);
                if fnew.is_finite() && fnew <= fx + 1e-4 * dot(&g, &step).min(0.0) && fnew < fx
                {
                    accepted = Some((xn, fnew, gnew, step));
                    break;
                }
                t *= 0.5;
            }
            let Some((xn, fnew, gnew, step)) = accepted else {
                // no descent along the projected path
                converged = pg_norm < 1e3 * self.grad_tol;
                break;
            };
            let y: Vec<f64> = (0..n).map(|i| gnew[i] - g[i]).collect();
            let sy = dot(&step, &y);
            if sy > 1e-12 * dot(&step, &step).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
                history.push_back((step, y, 1.0 / sy));
                if history.len() > self.memory {
                    history.pop_front();
                }
            }
            let rel = (fx - fnew).abs() / fx.abs().max(fnew.abs()).max(1.0);
            x = xn;
            fx = fnew;
            g = gnew;
            if rel < self.f_tol {
                converged = true;
                break;
            }
        }
        MinimizeResult {
            x,
            value: fx,
            iterations,
            converged,
        }
    }

    fn two_loop(
        &self,
        grad: &[f64],
        history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>,
        free: &[bool],
    ) -> Vec<f64> {
        let mask = |v: &[f64]| -> Vec<f64> {
            v.iter()
                .zip(free)
                .map(|(x, &f)| if f { *x } else { 0.0 })
                .collect()
        };
        let mut q = grad.to_vec();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let s = mask(s);
            let y = mask(y);
            let a = rho * dot(&s, &q);
            for i in 0..q.len() {
                q[i] -= a * y[i];
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let (s, y) = (mask(s), mask(y));
            let yy = dot(&y, &y);
            if yy > 0.0 {
                let gamma = dot(&s, &y) / yy;
                if gamma > 0.0 {
                    q.iter_mut().for_each(|v| *v *= gamma);
                }
            }
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let s = mask(s);
            let y = mask(y);
            let b = rho * dot(&y, &q);
            for i in 0..q.len() {
                q[i] += s[i] * (a - b);
            }
        }
        mask(&q).into_iter().map(|v| -v).collect()
    }
}

/// Central-difference gradient that falls back to one-sided differences at the box faces.
pub fn numeric_gradient<F>(mut f: F, x: &[f64], step: f64, lower: &[f64], upper: &[f64]) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut xp = x.to_vec();
    let mut g = vec![0.0; x.len()];
    let mut f0 = None;
    for i in 0..x.len() {
        let hi = (x[i] + step).min(upper[i]);
        let lo = (x[i] - step).max(lower[i]);
        let (a, b) = (hi, lo);
        if a - b <= 0.0 {
            continue;
        }
        let fa;
        let fb;
        if hi > x[i] && lo < x[i] {
            xp[i] = a;
            fa = f(&xp);
            xp[i] = b;
            fb = f(&xp);
        } else if hi > x[i] {
            xp[i] = a;
            fa = f(&xp);
            fb = *f0.get_or_insert_with(|| f(x));
        } else {
            fa = *f0.get_or_insert_with(|| f(x));
            xp[i] = b;
            fb = f(&xp);
        }
        xp[i] = x[i];
        let width = if hi > x[i] && lo < x[i] {
            a - b
        } else if hi > x[i] {
            a - x[i]
        } else {
            x[i] - b
        };
        g[i] = (fa - fb) / width;
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_rosenbrock_unconstrained() {
        let f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            ];
            (v, g)
        };
        let opt = BoxMinimizer {
            max_iters: 500,
            ..Default::default()
        };
        let r = opt.minimize(f, &[-1.2, 1.0], &[-5.0, -5.0], &[5.0, 5.0], None);
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r);
    }

    #[test]
    fn respects_active_bounds() {
        let f = |x: &[f64]| ((x[0] - 3.0).powi(2) + (x[1] + 0.5).powi(2), vec![2.0 * (x[0] - 3.0), 2.0 * (x[1] + 0.5)]);
        let r = BoxMinimizer::default().minimize(f, &[0.5, 0.5], &[0.0, 0.0], &[1.0, 1.0], None);
        assert!((r.x[0] - 1.0).abs() < 1e-12 && r.x[1].abs() < 1e-12);
    }

    #[test]
    fn numeric_gradient_matches_analytic() {
        let f = |x: &[f64]| x[0].sin() * x[1].exp();
        let x = [0.3, 0.7];
        let g = numeric_gradient(f, &x, 1e-5, &[0.0, 0.0], &[1.0, 1.0]);
        assert!((g[0] - 0.3f64.cos() * 0.7f64.exp()).abs() < 1e-8);
        assert!((g[1] - 0.3f64.sin() * 0.7f64.exp()).abs() < 1e-8);
        // one-sided at the lower face
        let g = numeric_gradient(f, &[0.0, 0.7], 1e-5, &[0.0, 0.0], &[1.0, 1.0]);
        assert!((g[0] - 0.7f64.exp()).abs() < 1e-4);
    }
}
