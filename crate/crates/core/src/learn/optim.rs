//! Unconstrained minimizers over a packed parameter vector: gradient
//! descent, BFGS, L-BFGS and a truncated Newton method, all sharing one
//! backtracking Armijo line search.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Evaluates `(f(x), ∇f(x))`.
pub trait Objective {
    fn eval(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
}

impl<F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>> Objective for F {
    fn eval(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    GD,
    BFGS,
    LBFGS,
    TNC,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::GD, Method::BFGS, Method::LBFGS, Method::TNC];

    pub fn name(self) -> &'static str {
        match self {
            Method::GD => "gd",
            Method::BFGS => "bfgs",
            Method::LBFGS => "lbfgs",
            Method::TNC => "tnc",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientTolerance,
    MaxIterations,
    /// No step satisfying the sufficient-decrease condition was found.
    LineSearchStalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeOptions {
    pub max_iter: usize,
    /// Threshold on the (projected) gradient ∞-norm.
    pub tol: f64,
    pub lbfgs_memory: usize,
    /// Per-component lower bounds; only the truncated Newton method honours them.
    pub lower: Option<Vec<f64>>,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-6,
            lbfgs_memory: 10,
            lower: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub loss_history: Vec<f64>,
    pub grad_norm_history: Vec<f64>,
    pub iterations: usize,
    pub stop: StopReason,
}

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;
/// Step halvings tolerated after singular model evaluations.
pub const MAX_SINGULAR_HALVINGS: usize = 20;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn axpy(x: &[f64], alpha: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + alpha * b).collect()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn project(x: &mut [f64], lower: Option<&[f64]>) {
    if let Some(lo) = lower {
        for (v, l) in x.iter_mut().zip(lo) {
            *v = v.max(*l);
        }
    }
}

/// Gradient with components that push into an active lower bound removed.
pub fn projected_gradient(x: &[f64], g: &[f64], lower: Option<&[f64]>) -> Vec<f64> {
    match lower {
        None => g.to_vec(),
        Some(lo) => x
            .iter()
            .zip(g)
            .zip(lo)
            .map(|((xi, gi), li)| if *xi <= *li && *gi > 0.0 { 0.0 } else { *gi })
            .collect(),
    }
}

pub(crate) struct Point {
    pub x: Vec<f64>,
    pub f: f64,
    pub g: Vec<f64>,
}

/// Backtracking search along `d` from `p`. Singular evaluations halve the
/// step like an Armijo rejection but are capped separately.
fn line_search<O: Objective + ?Sized>(
    obj: &mut O,
    p: &Point,
    d: &[f64],
    alpha0: f64,
    lower: Option<&[f64]>,
    iteration: usize,
) -> Result<Option<(Point, f64)>> {
    let mut alpha = alpha0;
    let mut singular = 0;
    for _ in 0..MAX_BACKTRACKS + MAX_SINGULAR_HALVINGS {
        let mut x = axpy(&p.x, alpha, d);
        project(&mut x, lower);
        let step = sub(&x, &p.x);
        if inf_norm(&step) == 0.0 {
            return Ok(None);
        }
        match obj.eval(&x) {
            Err(Error::SingularSystem(msg)) => {
                singular += 1;
                if singular > MAX_SINGULAR_HALVINGS {
                    return Err(Error::TrainingAborted {
                        iteration,
                        reason: format!(
                            "model singular after {MAX_SINGULAR_HALVINGS} step halvings (step {alpha:.3e}): {msg}"
                        ),
                    });
                }
            }
            Err(e) => return Err(e),
            Ok((f, g)) => {
                if f.is_finite() && f <= p.f + ARMIJO_C1 * dot(&p.g, &step) {
                    return Ok(Some((Point { x, f, g }, alpha)));
                }
            }
        }
        alpha *= 0.5;
    }
    Ok(None)
}

/// Per-method search direction state. [`Stepper::reset`] drops all
/// curvature information.
pub(crate) struct Stepper {
    method: Method,
    memory: usize,
    lower: Option<Vec<f64>>,
    inv_hessian: Option<Vec<Vec<f64>>>,
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
    gd_alpha: Option<f64>,
}

impl Stepper {
    pub fn new(method: Method, opts: &MinimizeOptions) -> Result<Self> {
        if opts.lower.is_some() && method != Method::TNC {
            return Err(Error::InvalidArgument(format!(
                "bounds are only supported by tnc, not {method}"
            )));
        }
        Ok(Self {
            method,
            memory: opts.lbfgs_memory.max(1),
            lower: opts.lower.clone(),
            inv_hessian: None,
            pairs: VecDeque::new(),
            gd_alpha: None,
        })
    }

    pub fn reset(&mut self) {
        self.inv_hessian = None;
        self.pairs.clear();
        self.gd_alpha = None;
    }

    fn lower(&self) -> Option<&[f64]> {
        self.lower.as_deref()
    }

    pub fn projected_grad_norm(&self, p: &Point) -> f64 {
        inf_norm(&projected_gradient(&p.x, &p.g, self.lower()))
    }

    /// Takes one iteration from `p`; `None` when the line search stalls.
    pub fn step<O: Objective + ?Sized>(&mut self, obj: &mut O, p: &Point, iteration: usize) -> Result<Option<Point>> {
        let (mut d, alpha0) = match self.method {
            Method::GD => {
                let a = self.gd_alpha.unwrap_or_else(|| first_step_scale(&p.g));
                (p.g.iter().map(|v| -v).collect::<Vec<_>>(), a)
            }
            Method::BFGS => (self.bfgs_direction(&p.g), 1.0),
            Method::LBFGS => (self.lbfgs_direction(&p.g), 1.0),
            Method::TNC => (self.newton_direction(obj, p)?, 1.0),
        };
        let mut alpha0 = alpha0;
        if !(dot(&d, &p.g) < 0.0) || d.iter().any(|v| !v.is_finite()) {
            self.reset();
            d = p.g.iter().map(|v| -v).collect();
            alpha0 = first_step_scale(&p.g);
        }
        let Some((next, alpha)) = line_search(obj, p, &d, alpha0, self.lower(), iteration)? else {
            return Ok(None);
        };
        if self.method == Method::GD {
            self.gd_alpha = Some(alpha * 2.0);
        }
        let s = sub(&next.x, &p.x);
        let y = sub(&next.g, &p.g);
        self.update_curvature(s, y);
        Ok(Some(next))
    }

    fn update_curvature(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        if !(sy > 1e-10 * norm(&s) * norm(&y)) {
            return;
        }
        match self.method {
            Method::BFGS => {
                let n = s.len();
                let h = self.inv_hessian.get_or_insert_with(|| {
                    let scale = sy / dot(&y, &y);
                    (0..n)
                        .map(|i| (0..n).map(|j| if i == j { scale } else { 0.0 }).collect())
                        .collect()
                });
                // H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ
                let rho = 1.0 / sy;
                let hy: Vec<f64> = h.iter().map(|row| dot(row, &y)).collect();
                let yhy = dot(&y, &hy);
                for i in 0..n {
                    for j in 0..n {
                        h[i][j] += rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
                    }
                }
            }
            Method::LBFGS => {
                if self.pairs.len() == self.memory {
                    self.pairs.pop_front();
                }
                self.pairs.push_back((s, y, 1.0 / sy));
            }
            Method::GD | Method::TNC => {}
        }
    }

    fn bfgs_direction(&self, g: &[f64]) -> Vec<f64> {
        match &self.inv_hessian {
            None => {
                let a = first_step_scale(g);
                g.iter().map(|v| -a * v).collect()
            }
            Some(h) => h.iter().map(|row| -dot(row, g)).collect(),
        }
    }

    fn lbfgs_direction(&self, g: &[f64]) -> Vec<f64> {
        let Some((s_last, y_last, _)) = self.pairs.back() else {
            let a = first_step_scale(g);
            return g.iter().map(|v| -a * v).collect();
        };
        let mut q = g.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        let gamma = dot(s_last, y_last) / dot(y_last, y_last);
        for v in q.iter_mut() {
            *v *= gamma;
        }
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        q.iter().map(|v| -v).collect()
    }

    /// Approximate Newton direction from conjugate gradients on
    /// finite-difference Hessian-vector products, restricted to the
    /// variables not held at a bound.
    fn newton_direction<O: Objective + ?Sized>(&self, obj: &mut O, p: &Point) -> Result<Vec<f64>> {
        let n = p.x.len();
        let free: Vec<bool> = match self.lower() {
            None => vec![true; n],
            Some(lo) => (0..n).map(|i| !(p.x[i] <= lo[i] && p.g[i] > 0.0)).collect(),
        };
        let mask = |v: &mut Vec<f64>| {
            for (vi, &f) in v.iter_mut().zip(&free) {
                if !f {
                    *vi = 0.0;
                }
            }
        };
        let mut r: Vec<f64> = p.g.iter().map(|v| -v).collect();
        mask(&mut r);
        let gnorm = norm(&r);
        let tol = gnorm.sqrt().min(0.5) * gnorm;
        let mut d = vec![0.0; n];
        let mut dir = r.clone();
        let mut rr = dot(&r, &r);
        let xnorm = norm(&p.x);
        for j in 0..n.clamp(1, 200) {
            let dnorm = norm(&dir);
            if dnorm == 0.0 {
                break;
            }
            let eps = f64::EPSILON.sqrt() * (1.0 + xnorm) / dnorm;
            let hd = match obj.eval(&axpy(&p.x, eps, &dir)) {
                Ok((_, g)) => {
                    let mut hd: Vec<f64> = g.iter().zip(&p.g).map(|(a, b)| (a - b) / eps).collect();
                    mask(&mut hd);
                    hd
                }
                Err(Error::SingularSystem(_)) => break,
                Err(e) => return Err(e),
            };
            let curv = dot(&dir, &hd);
            if !(curv > 1e-12 * dnorm * dnorm) {
                if j == 0 {
                    d = dir;
                }
                break;
            }
            let a = rr / curv;
            for i in 0..n {
                d[i] += a * dir[i];
                r[i] -= a * hd[i];
            }
            let rr_new = dot(&r, &r);
            if rr_new.sqrt() <= tol {
                break;
            }
            let beta = rr_new / rr;
            rr = rr_new;
            for i in 0..n {
                dir[i] = r[i] + beta * dir[i];
            }
        }
        Ok(d)
    }
}

/// Initial step for a steepest-descent move without curvature information.
fn first_step_scale(g: &[f64]) -> f64 {
    let m = inf_norm(g);
    if m > 1.0 {
        1.0 / m
    } else {
        1.0
    }
}

/// Minimizes `obj` from `x0` until the gradient ∞-norm drops to `tol`, the
/// iteration cap is reached or the line search stalls.
pub fn minimize<O: Objective + ?Sized>(
    obj: &mut O,
    x0: &[f64],
    method: Method,
    opts: &MinimizeOptions,
) -> Result<MinimizeResult> {
    let mut stepper = Stepper::new(method, opts)?;
    let mut x = x0.to_vec();
    project(&mut x, opts.lower.as_deref());
    let (f, g) = obj.eval(&x).map_err(|e| match e {
        Error::SingularSystem(msg) => Error::TrainingAborted {
            iteration: 0,
            reason: format!("singular model at the starting point: {msg}"),
        },
        e => e,
    })?;
    let mut p = Point { x, f, g };
    let mut loss_history = vec![p.f];
    let mut grad_norm_history = vec![stepper.projected_grad_norm(&p)];
    let mut iterations = 0;
    let stop = loop {
        if *grad_norm_history.last().unwrap() <= opts.tol {
            break StopReason::GradientTolerance;
        }
        if iterations >= opts.max_iter {
            break StopReason::MaxIterations;
        }
        match stepper.step(obj, &p, iterations + 1)? {
            Some(next) => p = next,
            None => break StopReason::LineSearchStalled,
        }
        iterations += 1;
        loss_history.push(p.f);
        grad_norm_history.push(stepper.projected_grad_norm(&p));
    };
    Ok(MinimizeResult {
        x: p.x,
        f: p.f,
        loss_history,
        grad_norm_history,
        iterations,
        stop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        Ok((f, g))
    }

    #[test]
    fn quasi_newton_methods_solve_rosenbrock() {
        for method in [Method::BFGS, Method::LBFGS, Method::TNC] {
            let opts = MinimizeOptions {
                max_iter: 2000,
                tol: 1e-8,
                ..Default::default()
            };
            let r = minimize(&mut rosenbrock, &[-1.2, 1.0], method, &opts).unwrap();
            assert_eq!(r.stop, StopReason::GradientTolerance, "{method}");
            assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6, "{method}: {:?}", r.x);
        }
    }

    #[test]
    fn gradient_descent_decreases_monotonically() {
        let opts = MinimizeOptions {
            max_iter: 300,
            ..Default::default()
        };
        let r = minimize(&mut rosenbrock, &[-1.2, 1.0], Method::GD, &opts).unwrap();
        assert!(r.loss_history.windows(2).all(|w| w[1] <= w[0]));
        assert!(r.f < r.loss_history[0]);
    }

    #[test]
    fn bounded_tnc_stops_at_bound() {
        // min (x - 1)² + (y + 2)² with y ≥ 0.5
        let mut obj = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            Ok((
                (x[0] - 1.0).powi(2) + (x[1] + 2.0).powi(2),
                vec![2.0 * (x[0] - 1.0), 2.0 * (x[1] + 2.0)],
            ))
        };
        let opts = MinimizeOptions {
            lower: Some(vec![f64::NEG_INFINITY, 0.5]),
            tol: 1e-12,
            ..Default::default()
        };
        let r = minimize(&mut obj, &[5.0, 5.0], Method::TNC, &opts).unwrap();
        assert_eq!(r.stop, StopReason::GradientTolerance);
        assert!((r.x[0] - 1.0).abs() < 1e-9);
        assert_eq!(r.x[1], 0.5);
        assert!(minimize(&mut obj, &[5.0, 5.0], Method::BFGS, &opts).is_err());
    }

    #[test]
    fn singular_trial_points_halve_the_step() {
        // Newton step towards 10 lands in the singular region x > 2 and is
        // halved three times to 1.25.
        let mut obj = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            if x[0] > 2.0 {
                return Err(Error::SingularSystem("test".into()));
            }
            Ok(((x[0] - 10.0).powi(2), vec![2.0 * (x[0] - 10.0)]))
        };
        let opts = MinimizeOptions {
            max_iter: 1,
            ..Default::default()
        };
        let r = minimize(&mut obj, &[0.0], Method::TNC, &opts).unwrap();
        assert!((r.x[0] - 1.25).abs() < 1e-6, "{:?}", r.x);
    }

    #[test]
    fn persistent_singularity_aborts() {
        let mut calls = 0;
        let mut obj = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            calls += 1;
            if calls > 1 {
                return Err(Error::SingularSystem("always".into()));
            }
            Ok((x[0] * x[0], vec![2.0 * x[0]]))
        };
        let r = minimize(&mut obj, &[1.0], Method::LBFGS, &MinimizeOptions::default());
        assert!(matches!(r, Err(Error::TrainingAborted { iteration: 1, .. })));
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("newton".parse::<Method>().is_err());
    }
}
