//! Box-constrained limited-memory quasi-Newton minimizer.
//!
//! Implements L-BFGS two-loop recursion with gradient projection onto the
//! box and a weak-Wolfe line search along the projected path. Used as the
//! inner solver by the regularized-loss and constrained attacks.

use crate::math::dot;
use std::collections::VecDeque;

/// The function being minimized. `on_iterate` sees every accepted iterate
/// (always inside the box), letting callers test candidates mid-flight.
pub trait Objective {
    /// Returns the value and gradient at `x`.
    fn evaluate(&mut self, x: &[f64]) -> (f64, Vec<f64>);

    fn on_iterate(&mut self, _x: &[f64]) {}
}

impl<F: FnMut(&[f64]) -> (f64, Vec<f64>)> Objective for F {
    fn evaluate(&mut self, x: &[f64]) -> (f64, Vec<f64>) {
        self(x)
    }
}

#[derive(Debug, Clone)]
pub struct BoxLbfgs {
    /// Number of curvature pairs kept for the two-loop recursion.
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop when the infinity norm of the projected gradient drops below.
    pub tolerance: f64,
}

impl Default for BoxLbfgs {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iterations: 150,
            tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimized {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn clip_into(x: &mut [f64], lower: f64, upper: f64) {
    for v in x.iter_mut() {
        *v = v.clamp(lower, upper);
    }
}

/// Weak-Wolfe line search on the projected path. Sufficient decrease is
/// measured against the realized (projected) displacement; the curvature
/// condition expands the step when progress along the direction is still
/// steep, which keeps the stored curvature pairs well-conditioned. Falls
/// back to the best sufficient-decrease point when curvature cannot be
/// satisfied within the trial budget.
#[allow(clippy::type_complexity)]
fn wolfe_search(
    objective: &mut dyn Objective,
    x: &[f64],
    f: f64,
    g: &[f64],
    direction: &[f64],
    lower: f64,
    upper: f64,
) -> Option<(Vec<f64>, f64, Vec<f64>, Vec<f64>)> {
    const C1: f64 = 1e-4;
    const C2: f64 = 0.9;
    let g_dot_d = dot(g, direction);
    let mut lo = 0.0_f64;
    let mut hi = f64::INFINITY;
    let mut alpha = 1.0_f64;
    let mut fallback: Option<(Vec<f64>, f64, Vec<f64>, Vec<f64>)> = None;
    for _ in 0..50 {
        let mut x_new: Vec<f64> = x
            .iter()
            .zip(direction)
            .map(|(xi, di)| xi + alpha * di)
            .collect();
        clip_into(&mut x_new, lower, upper);
        if x_new == x {
            hi = alpha;
            alpha = 0.5 * (lo + hi);
            if alpha < 1e-20 {
                break;
            }
            continue;
        }
        let (f_new, g_new) = objective.evaluate(&x_new);
        let moved: Vec<f64> = x_new.iter().zip(x).map(|(a, b)| a - b).collect();
        if f_new > f + C1 * dot(g, &moved) {
            hi = alpha; // overshoot: not enough decrease
        } else {
            let enough_curvature = dot(&g_new, direction) >= C2 * g_dot_d;
            fallback = Some((x_new, f_new, g_new, moved));
            if enough_curvature {
                return fallback;
            }
            lo = alpha; // decrease fine but still steep: go farther
        }
        alpha = if hi.is_finite() {
            0.5 * (lo + hi)
        } else {
            2.0 * alpha
        };
        if !(1e-20..=1e20).contains(&alpha) {
            break;
        }
    }
    fallback
}

/// Gradient components pointing out of the box at active bounds are zeroed.
fn projected_gradient(x: &[f64], g: &[f64], lower: f64, upper: f64) -> Vec<f64> {
    x.iter()
        .zip(g)
        .map(|(&xi, &gi)| {
            if xi <= lower {
                gi.min(0.0)
            } else if xi >= upper {
                gi.max(0.0)
            } else {
                gi
            }
        })
        .collect()
}

impl BoxLbfgs {
    /// Minimizes `objective` over the box `[lower, upper]^n` from `x0`.
    pub fn minimize(
        &self,
        lower: f64,
        upper: f64,
        x0: &[f64],
        objective: &mut dyn Objective,
    ) -> Minimized {
        let n = x0.len();
        let mut x = x0.to_vec();
        clip_into(&mut x, lower, upper);
        let (mut f, mut g) = objective.evaluate(&x);
        let mut history: VecDeque<(Vec<f64>, Vec<f64>)> = VecDeque::new();
        let mut iterations = 0;
        let mut converged = false;

        while iterations < self.max_iterations {
            let pg = projected_gradient(&x, &g, lower, upper);
            if pg.iter().all(|v| v.abs() <= self.tolerance) {
                converged = true;
                break;
            }

            let mut direction = self.two_loop(&g, &history, n);
            for d in direction.iter_mut() {
                *d = -*d;
            }
            let mut steepest = history.is_empty();
            // fall back to steepest descent if the memory produced a
            // non-descent direction
            if !steepest && dot(&direction, &g) >= 0.0 {
                history.clear();
                direction = g.iter().map(|v| -v).collect();
                steepest = true;
            }

            let mut accepted = wolfe_search(objective, &x, f, &g, &direction, lower, upper);
            if accepted.is_none() && !steepest {
                // stale curvature can defeat the line search; retry fresh
                history.clear();
                let fallback: Vec<f64> = g.iter().map(|v| -v).collect();
                accepted = wolfe_search(objective, &x, f, &g, &fallback, lower, upper);
            }
            let Some((x_new, f_new, g_new, s)) = accepted else {
                break; // line search exhausted: stationary for our purposes
            };

            let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            let s_norm = dot(&s, &s).sqrt();
            let y_norm = dot(&y, &y).sqrt();
            if sy > 1e-10 * s_norm * y_norm {
                if history.len() == self.memory {
                    history.pop_front();
                }
                history.push_back((s, y));
            } else {
                // A violated curvature condition means the stored pairs no
                // longer describe the local Hessian; stale memory produces
                // vanishing steps, so rebuild from scratch.
                history.clear();
            }

            x = x_new;
            f = f_new;
            g = g_new;
            iterations += 1;
            objective.on_iterate(&x);
        }

        Minimized {
            x,
            value: f,
            iterations,
            converged,
        }
    }

    /// H·g via the standard two-loop recursion with curvature history.
    fn two_loop(&self, g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>)>, n: usize) -> Vec<f64> {
        let mut q = g.to_vec();
        if history.is_empty() {
            return q;
        }
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y) in history.iter().rev() {
            let rho = 1.0 / dot(y, s);
            let alpha = rho * dot(s, &q);
            for i in 0..n {
                q[i] -= alpha * y[i];
            }
            alphas.push((alpha, rho));
        }
        let (s_last, y_last) = history.back().unwrap();
        let gamma = dot(s_last, y_last) / dot(y_last, y_last);
        for v in q.iter_mut() {
            *v *= gamma;
        }
        for ((s, y), (alpha, rho)) in history.iter().zip(alphas.into_iter().rev()) {
            let beta = rho * dot(y, &q);
            for i in 0..n {
                q[i] += (alpha - beta) * s[i];
            }
        }
        q
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interior_quadratic_converges_to_its_center() {
        let solver = BoxLbfgs::default();
        let center = [0.3, -0.4, 0.7];
        let mut objective = |x: &[f64]| {
            let f: f64 = x.iter().zip(&center).map(|(xi, ci)| (xi - ci).powi(2)).sum();
            let g: Vec<f64> = x.iter().zip(&center).map(|(xi, ci)| 2.0 * (xi - ci)).collect();
            (f, g)
        };
        let result = solver.minimize(-1.0, 1.0, &[0.0, 0.0, 0.0], &mut objective);
        assert!(result.converged);
        for (xi, ci) in result.x.iter().zip(&center) {
            assert!((xi - ci).abs() < 1e-7, "{xi} vs {ci}");
        }
    }

    #[test]
    fn exterior_center_lands_on_the_box_face() {
        let solver = BoxLbfgs::default();
        let center = [2.5, -3.0];
        let mut objective = |x: &[f64]| {
            let f: f64 = x.iter().zip(&center).map(|(xi, ci)| (xi - ci).powi(2)).sum();
            let g: Vec<f64> = x.iter().zip(&center).map(|(xi, ci)| 2.0 * (xi - ci)).collect();
            (f, g)
        };
        let result = solver.minimize(-1.0, 1.0, &[0.0, 0.0], &mut objective);
        assert!((result.x[0] - 1.0).abs() < 1e-9);
        assert!((result.x[1] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn rosenbrock_reaches_its_minimum_inside_the_box() {
        let solver = BoxLbfgs {
            memory: 10,
            max_iterations: 150,
            tolerance: 1e-10,
        };
        let mut objective = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            ];
            (f, g)
        };
        let result = solver.minimize(-2.0, 2.0, &[-1.2, 1.0], &mut objective);
        assert!(result.value < 1e-10, "f = {}", result.value);
        assert!((result.x[0] - 1.0).abs() < 1e-4);
        assert!((result.x[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn iterates_stay_inside_the_box() {
        struct Watcher {
            all_inside: bool,
        }
        impl Objective for Watcher {
            fn evaluate(&mut self, x: &[f64]) -> (f64, Vec<f64>) {
                let f: f64 = x.iter().map(|xi| (xi - 5.0).powi(2)).sum();
                let g: Vec<f64> = x.iter().map(|xi| 2.0 * (xi - 5.0)).collect();
                (f, g)
            }
            fn on_iterate(&mut self, x: &[f64]) {
                self.all_inside &= x.iter().all(|&v| (0.0..=1.0).contains(&v));
            }
        }
        let solver = BoxLbfgs::default();
        let mut watcher = Watcher { all_inside: true };
        let result = solver.minimize(0.0, 1.0, &[0.5, 0.2], &mut watcher);
        assert!(watcher.all_inside);
        assert!(result.x.iter().all(|&v| (v - 1.0).abs() < 1e-9));
    }

    #[test]
    fn starting_at_the_optimum_stops_immediately() {
        let solver = BoxLbfgs::default();
        let mut objective = |x: &[f64]| {
            let f: f64 = x.iter().map(|xi| xi * xi).sum();
            let g: Vec<f64> = x.iter().map(|xi| 2.0 * xi).collect();
            (f, g)
        };
        let result = solver.minimize(-1.0, 1.0, &[0.0, 0.0], &mut objective);
        assert!(result.converged);
        assert_eq!(result.iterations, 0);
    }
}
