use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::surrogate::Adam;

use super::problem::Objective;
use super::MpcError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GdmConfig {
    /// Step size on box-normalized controls.
    pub learning_rate: f64,
    pub iterations: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for GdmConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            iterations: 100,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SqpConfig {
    pub max_iterations: usize,
    /// Stop when the projected gradient infinity norm falls below this.
    pub pgtol: f64,
    /// Stop when the relative cost decrease of an accepted step falls below this.
    pub ftol: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// Smallest backtracking step before the line search gives up.
    pub min_step: f64,
}

impl Default for SqpConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            pgtol: 1e-6,
            ftol: 1e-9,
            armijo: 1e-4,
            min_step: 1e-12,
        }
    }
}

/// Outcome of one solve on a flat decision vector.
#[derive(Clone, Debug, PartialEq)]
pub struct SolveResult {
    pub plan: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
    /// Seconds.
    pub wall_time: f64,
    pub converged: bool,
    /// Best cost seen after each iteration; starts with the cost of the initial point.
    pub cost_trace: Vec<f64>,
}

fn check_finite(init: &[f64]) -> Result<(), MpcError> {
    if init.iter().any(|v| !v.is_finite()) {
        return Err(MpcError::Contract("initial plan is not finite".into()));
    }
    Ok(())
}

/// Projected Adam on box-normalized coordinates `(u - l) / (h - l)`; keeps the best iterate.
pub fn solve_gdm<O: Objective + ?Sized>(obj: &O, init: &[f64], cfg: &GdmConfig) -> Result<SolveResult, MpcError> {
    let clock = Instant::now();
    check_finite(init)?;
    if init.len() != obj.dim() {
        return Err(MpcError::Contract(format!("init has {} entries, expected {}", init.len(), obj.dim())));
    }
    let lo = obj.lower();
    let width: Vec<f64> = lo.iter().zip(obj.upper()).map(|(l, h)| (h - l).max(0.0)).collect();
    let to_u = |theta: &[f64]| -> Vec<f64> {
        theta
            .iter()
            .zip(lo.iter().zip(&width))
            .map(|(t, (l, w))| l + w * t)
            .collect()
    };
    let start = obj.clamp(init);
    let mut theta: Vec<f64> = start
        .iter()
        .zip(lo.iter().zip(&width))
        .map(|(u, (l, w))| if *w > 0.0 { (u - l) / w } else { 0.0 })
        .collect();
    let mut adam = Adam::new(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
    let mut best = (f64::INFINITY, start.clone());
    let mut trace = Vec::with_capacity(cfg.iterations + 1);

    for it in 0..=cfg.iterations {
        // iterate 0 is the (clamped) initial plan itself
        let u = if it == 0 { start.clone() } else { obj.clamp(&to_u(&theta)) };
        let (f, g) = if it < cfg.iterations {
            obj.value_grad(&u)?
        } else {
            (obj.value(&u)?, Vec::new())
        };
        if !f.is_finite() {
            return Err(MpcError::NonFinite { iteration: it });
        }
        if f < best.0 {
            best = (f, u);
        }
        trace.push(best.0);
        if it == cfg.iterations {
            break;
        }
        let g_theta: Vec<f64> = g.iter().zip(&width).map(|(gi, w)| gi * w).collect();
        adam.step(&mut [&mut theta[..]], &[&g_theta[..]]);
        for t in &mut theta {
            *t = t.clamp(0.0, 1.0);
        }
    }
    Ok(SolveResult {
        plan: best.1,
        cost: best.0,
        iterations: cfg.iterations,
        wall_time: clock.elapsed().as_secs_f64(),
        converged: true,
        cost_trace: trace,
    })
}

/// Projected gradient; zero where a bound blocks descent.
fn projected_gradient(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            if (x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0) {
                0.0
            } else {
                g[i]
            }
        })
        .collect()
}

/// Bound-constrained quasi-Newton (single-shooting SQP).
///
/// Variables on a bound whose gradient points outward are fixed; a Newton step on the
/// free variables uses a Powell-damped BFGS Hessian approximation, followed by a
/// projected backtracking Armijo search.
pub fn solve_sqp<O: Objective + ?Sized>(obj: &O, init: &[f64], cfg: &SqpConfig) -> Result<SolveResult, MpcError> {
    let clock = Instant::now();
    check_finite(init)?;
    let n = obj.dim();
    if init.len() != n {
        return Err(MpcError::Contract(format!("init has {} entries, expected {n}", init.len())));
    }
    let (lo, hi) = (obj.lower(), obj.upper());
    let mut x = obj.clamp(init);
    let (mut f, mut g) = obj.value_grad(&x)?;
    if !f.is_finite() {
        return Err(MpcError::NonFinite { iteration: 0 });
    }
    let mut b = DMatrix::<f64>::identity(n, n);
    let mut scaled = false;
    let mut trace = vec![f];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iterations {
        let pg = projected_gradient(&x, &g, lo, hi);
        if pg.iter().fold(0.0f64, |m, v| m.max(v.abs())) < cfg.pgtol {
            converged = true;
            break;
        }
        iterations += 1;
        let free: Vec<usize> = (0..n).filter(|&i| pg[i] != 0.0 || (x[i] > lo[i] && x[i] < hi[i])).collect();
        let mut d = vec![0.0; n];
        let bff = DMatrix::from_fn(free.len(), free.len(), |r, c| b[(free[r], free[c])]);
        let gf = DVector::from_iterator(free.len(), free.iter().map(|&i| -g[i]));
        match bff.cholesky() {
            Some(ch) => {
                let sol = ch.solve(&gf);
                for (k, &i) in free.iter().enumerate() {
                    d[i] = sol[k];
                }
            }
            None => {
                b = DMatrix::identity(n, n);
                for &i in &free {
                    d[i] = -g[i];
                }
            }
        }
        let mut slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            b = DMatrix::identity(n, n);
            for &i in &free {
                d[i] = -g[i];
            }
            slope = d.iter().zip(&g).map(|(a, b)| a * b).sum();
            if !(slope < 0.0) {
                converged = true;
                break;
            }
        }

        let mut alpha = 1.0;
        let accepted = loop {
            let trial: Vec<f64> = obj.clamp(&x.iter().zip(&d).map(|(xi, di)| xi + alpha * di).collect::<Vec<_>>());
            let ft = obj.value(&trial)?;
            let dec: f64 = trial.iter().zip(&x).zip(&g).map(|((t, xi), gi)| gi * (t - xi)).sum();
            if ft.is_finite() && ft <= f + cfg.armijo * dec {
                break Some((trial, ft));
            }
            alpha *= 0.5;
            if alpha < cfg.min_step {
                break None;
            }
        };
        let Some((x_new, f_new)) = accepted else {
            break;
        };
        let (_, g_new) = obj.value_grad(&x_new)?;
        let s = DVector::from_iterator(n, x_new.iter().zip(&x).map(|(a, b)| a - b));
        let y = DVector::from_iterator(n, g_new.iter().zip(&g).map(|(a, b)| a - b));
        let sy = s.dot(&y);
        if !scaled && sy > 0.0 {
            b = DMatrix::identity(n, n) * (y.dot(&y) / sy);
            scaled = true;
        }
        let bs = &b * &s;
        let sbs = s.dot(&bs);
        if sbs > 1e-14 * s.dot(&s).max(1e-300) {
            // Powell damping keeps B positive definite when the curvature condition fails
            let theta = if sy >= 0.2 * sbs { 1.0 } else { 0.8 * sbs / (sbs - sy) };
            let r = &y * theta + &bs * (1.0 - theta);
            let sr = s.dot(&r);
            if sr > 0.0 {
                b = &b - (&bs * bs.transpose()) / sbs + (&r * r.transpose()) / sr;
            }
        }
        let rel = (f - f_new) / f.abs().max(f_new.abs()).max(1.0);
        x = x_new;
        f = f_new;
        g = g_new;
        trace.push(f);
        if rel < cfg.ftol {
            converged = true;
            break;
        }
    }
    Ok(SolveResult {
        plan: x,
        cost: f,
        iterations,
        wall_time: clock.elapsed().as_secs_f64(),
        converged,
        cost_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `0.5 u'Qu - b'u` with diagonal `Q`.
    struct Quad {
        q: Vec<f64>,
        b: Vec<f64>,
        lo: Vec<f64>,
        hi: Vec<f64>,
    }

    impl Objective for Quad {
        fn dim(&self) -> usize {
            self.q.len()
        }
        fn lower(&self) -> &[f64] {
            &self.lo
        }
        fn upper(&self) -> &[f64] {
            &self.hi
        }
        fn value(&self, u: &[f64]) -> Result<f64, MpcError> {
            Ok((0..u.len()).map(|i| 0.5 * self.q[i] * u[i] * u[i] - self.b[i] * u[i]).sum())
        }
        fn value_grad(&self, u: &[f64]) -> Result<(f64, Vec<f64>), MpcError> {
            let g = (0..u.len()).map(|i| self.q[i] * u[i] - self.b[i]).collect();
            Ok((self.value(u)?, g))
        }
    }

    /// `||u - c||^2` on `[0, 1]^n`.
    fn ball(c: f64, n: usize) -> Quad {
        Quad {
            q: vec![2.0; n],
            b: vec![2.0 * c; n],
            lo: vec![0.0; n],
            hi: vec![1.0; n],
        }
    }

    #[test]
    fn gdm_finds_interior_minimum() {
        let r = solve_gdm(&ball(0.5, 3), &[0.0; 3], &GdmConfig::default()).unwrap();
        assert!(r.plan.iter().all(|u| (u - 0.5).abs() < 1e-3), "{:?}", r.plan);
        assert!(r.cost_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn gdm_stops_on_active_bound() {
        let r = solve_gdm(&ball(2.0, 2), &[0.3, 0.9], &GdmConfig::default()).unwrap();
        assert_eq!(r.plan, vec![1.0, 1.0]);
    }

    #[test]
    fn gdm_clamps_infeasible_init() {
        let r = solve_gdm(&ball(0.2, 2), &[5.0, -3.0], &GdmConfig::default()).unwrap();
        assert!(r.plan.iter().all(|u| (0.0..=1.0).contains(u)));
    }

    #[test]
    fn sqp_kkt_point_on_bounds() {
        let q = Quad {
            q: vec![2.0, 4.0],
            b: vec![2.0, 4.0],
            lo: vec![0.0; 2],
            hi: vec![1.0; 2],
        };
        let r = solve_sqp(&q, &[0.5, 0.5], &SqpConfig::default()).unwrap();
        assert_eq!(r.plan, vec![1.0, 1.0]);
        assert!(r.converged);
    }

    fn interior_cases() -> Vec<(Quad, Vec<f64>)> {
        [
            (vec![2.0, 4.0, 1.0, 8.0], vec![1.0, -1.0, 0.3, 2.0]),
            (vec![2.0, 3.0], vec![1.0, -1.0]),
            (vec![1.0, 1.5, 2.0, 2.5, 3.0], vec![0.2, -0.4, 0.6, -0.8, 1.0]),
        ]
        .into_iter()
        .map(|(q, b)| {
            let n = q.len();
            let want = q.iter().zip(&b).map(|(q, b)| b / q).collect();
            (Quad { q, b, lo: vec![-5.0; n], hi: vec![5.0; n] }, want)
        })
        .collect()
    }

    fn max_err(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn sqp_interior_quadratic() {
        // the default ftol halts a few iterations short of 1e-8, so tighten the stop
        let cfg = SqpConfig {
            ftol: 0.0,
            pgtol: 1e-9,
            ..Default::default()
        };
        for (quad, want) in interior_cases() {
            let r = solve_sqp(&quad, &vec![0.0; want.len()], &cfg).unwrap();
            assert!(max_err(&r.plan, &want) < 1e-8, "{:?} after {}", r.plan, r.iterations);
            assert!(r.iterations <= 20, "{}", r.iterations);
            assert!(r.converged);
        }
    }

    #[test]
    fn sqp_interior_quadratic_default_stop() {
        for (quad, want) in interior_cases() {
            let r = solve_sqp(&quad, &vec![0.0; want.len()], &SqpConfig::default()).unwrap();
            assert!(max_err(&r.plan, &want) < 1e-5, "{:?}", r.plan);
            assert!(r.iterations <= 20 && r.converged);
        }
    }

    #[test]
    fn sqp_monotone_and_feasible() {
        let q = Quad {
            q: vec![1.0, 3.0, 0.5],
            b: vec![-4.0, 0.2, 9.0],
            lo: vec![-1.0, 0.0, 0.0],
            hi: vec![1.0, 1.0, 2.0],
        };
        let init = [0.9, 0.9, 0.1];
        let r = solve_sqp(&q, &init, &SqpConfig::default()).unwrap();
        assert!(q.is_feasible(&r.plan));
        assert!(r.cost <= q.value(&init).unwrap());
        let want = [-1.0, 0.2 / 3.0, 2.0];
        assert!(r.plan.iter().zip(&want).all(|(p, w)| (p - w).abs() < 1e-7), "{:?}", r.plan);
        assert!(r.cost_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn non_finite_init_is_rejected() {
        assert!(solve_sqp(&ball(0.5, 2), &[f64::NAN, 0.0], &SqpConfig::default()).is_err());
        assert!(solve_gdm(&ball(0.5, 2), &[f64::NAN, 0.0], &GdmConfig::default()).is_err());
    }
}
