//! Minimization over nodal values with clamped nodes.
//!
//! The default method is L-BFGS with an optional preconditioner for the
//! initial inverse Hessian; plain projected gradient descent is available as
//! [`Method::GradientDescent`]. Both accept steps only through Armijo
//! backtracking, so the energy sequence is monotone.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::GridProfile;

/// Fixed nodes and the values they keep.
#[derive(Debug, Clone, PartialEq)]
pub struct ClampSpec {
    fixed_mask: Vec<bool>,
    fixed_values: Vec<f64>,
}

impl ClampSpec {
    pub fn new(fixed_mask: Vec<bool>, fixed_values: Vec<f64>) -> crate::Result<Self> {
        crate::error::ensure!(
            fixed_mask.len() == fixed_values.len(),
            "clamp mask has {} entries but {} values",
            fixed_mask.len(),
            fixed_values.len()
        );
        crate::error::ensure!(fixed_mask.iter().any(|&m| !m), "clamp leaves no free node");
        crate::error::ensure!(
            fixed_mask
                .iter()
                .zip(&fixed_values)
                .all(|(&m, v)| !m || v.is_finite()),
            "clamped values must be finite"
        );
        Ok(Self {
            fixed_mask,
            fixed_values,
        })
    }

    /// No clamped nodes.
    pub fn free(n: usize) -> Self {
        Self {
            fixed_mask: vec![false; n],
            fixed_values: vec![0.0; n],
        }
    }

    /// Clamps every node whose position satisfies `pred` to `value(x)`.
    pub fn from_fn(
        profile: &GridProfile,
        pred: impl Fn(f64) -> bool,
        value: impl Fn(f64) -> f64,
    ) -> crate::Result<Self> {
        let grid = profile.grid();
        let mask: Vec<bool> = grid.nodes().map(&pred).collect();
        let values = grid
            .nodes()
            .map(|x| if pred(x) { value(x) } else { 0.0 })
            .collect();
        Self::new(mask, values)
    }

    pub fn len(&self) -> usize {
        self.fixed_mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixed_mask.is_empty()
    }

    pub fn is_fixed(&self, i: usize) -> bool {
        self.fixed_mask[i]
    }

    pub fn fixed_mask(&self) -> &[bool] {
        &self.fixed_mask
    }

    pub fn fixed_values(&self) -> &[f64] {
        &self.fixed_values
    }

    pub fn free_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.fixed_mask[i]).collect()
    }

    /// Copies the clamped values into `values`.
    pub fn apply(&self, values: &mut [f64]) {
        for (i, v) in values.iter_mut().enumerate() {
            if self.fixed_mask[i] {
                *v = self.fixed_values[i];
            }
        }
    }

    pub fn is_satisfied_by(&self, values: &[f64]) -> bool {
        values.len() == self.len()
            && (0..self.len()).all(|i| !self.fixed_mask[i] || values[i] == self.fixed_values[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Projected steepest descent.
    GradientDescent,
    /// Limited-memory BFGS keeping `memory` correction pairs.
    Lbfgs { memory: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MinimizeOptions {
    pub grad_tol: f64,
    pub max_iters: usize,
    pub armijo_c: f64,
    pub backtrack_factor: f64,
    pub initial_step: f64,
    pub max_backtracks: usize,
    pub method: Method,
    /// Use the objective's preconditioner when it provides one.
    pub precondition: bool,
    /// Record the accepted energy after every iteration.
    pub record_history: bool,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-7,
            max_iters: 50_000,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            initial_step: 1.0,
            max_backtracks: 60,
            method: Method::Lbfgs { memory: 12 },
            precondition: true,
            record_history: false,
        }
    }
}

impl MinimizeOptions {
    pub fn validate(&self) -> crate::Result<()> {
        crate::error::ensure!(self.grad_tol > 0.0, "grad_tol must be positive");
        crate::error::ensure!(
            self.armijo_c > 0.0 && self.armijo_c < 1.0,
            "armijo_c must lie in (0, 1)"
        );
        crate::error::ensure!(
            self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0,
            "backtrack_factor must lie in (0, 1)"
        );
        crate::error::ensure!(self.initial_step > 0.0, "initial_step must be positive");
        if let Method::Lbfgs { memory } = self.method {
            crate::error::ensure!(memory >= 1, "L-BFGS memory must be at least 1");
        }
        Ok(())
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientTolerance,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeResult {
    pub profile: GridProfile,
    pub energy: f64,
    pub iterations: usize,
    /// Infinity norm of the gradient over free nodes.
    pub final_grad_norm: f64,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, Error)]
pub enum OptimizeError {
    #[error("non-finite {what} at iteration {iteration}")]
    NonFinite {
        what: &'static str,
        iteration: usize,
        /// Last iterate with finite energy and gradient.
        last_values: Vec<f64>,
        last_energy: f64,
    },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Smooth function of the free variables.
pub trait Objective {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// Writes the gradient into `grad` and returns the value.
    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64;

    /// `value(x + alpha d) - value(x)` computed without cancelling two large
    /// totals. Objectives that cannot do better return `None`.
    fn value_change(&self, _x: &[f64], _d: &[f64], _alpha: f64) -> Option<f64> {
        None
    }

    /// Symmetric positive definite approximation of the Hessian, if any.
    fn preconditioner(&self) -> Option<&dyn Preconditioner> {
        None
    }
}

pub trait Preconditioner {
    /// Solves `P out = r`.
    fn solve(&self, r: &[f64], out: &mut [f64]);
}

/// Outcome of [`minimize_objective`] in the free variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub history: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn non_finite(what: &'static str, iteration: usize, x: &[f64], f: f64) -> OptimizeError {
    OptimizeError::NonFinite {
        what,
        iteration,
        last_values: x.to_vec(),
        last_energy: f,
    }
}

/// Minimizes `obj` from `x0`.
pub fn minimize_objective(
    obj: &dyn Objective,
    x0: &[f64],
    opts: &MinimizeOptions,
) -> Result<Outcome, OptimizeError> {
    let n = obj.dim();
    if x0.len() != n {
        return Err(OptimizeError::Dimension(format!(
            "initial point has {} entries, objective expects {n}",
            x0.len()
        )));
    }
    let precond = if opts.precondition {
        obj.preconditioner()
    } else {
        None
    };
    let memory = match opts.method {
        Method::GradientDescent => 0,
        Method::Lbfgs { memory } => memory,
    };

    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut f = obj.value_and_gradient(&x, &mut g);
    if !f.is_finite() {
        return Err(non_finite("energy", 0, &x, f));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(non_finite("gradient", 0, &x, f));
    }

    let mut history = Vec::new();
    if opts.record_history {
        history.push(f);
    }
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(memory);
    let mut gamma = 1.0;
    let mut d = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut alpha = vec![0.0; memory.max(1)];
    let mut iterations = 0;
    let mut stop = StopReason::MaxIterations;

    loop {
        if inf_norm(&g) <= opts.grad_tol {
            stop = StopReason::GradientTolerance;
            break;
        }
        if iterations >= opts.max_iters {
            break;
        }

        // Two-loop recursion for d = -H g, with H0 = gamma P^{-1}.
        d.copy_from_slice(&g);
        for (idx, (s, y, rho)) in pairs.iter().enumerate().rev() {
            alpha[idx] = rho * dot(s, &d);
            for (di, yi) in d.iter_mut().zip(y) {
                *di -= alpha[idx] * yi;
            }
        }
        match precond {
            Some(p) => {
                p.solve(&d, &mut scratch);
                for (di, si) in d.iter_mut().zip(&scratch) {
                    *di = gamma * si;
                }
            }
            None => d.iter_mut().for_each(|di| *di *= gamma),
        }
        for (idx, (s, y, rho)) in pairs.iter().enumerate() {
            let beta = rho * dot(y, &d);
            for (di, si) in d.iter_mut().zip(s) {
                *di += (alpha[idx] - beta) * si;
            }
        }
        d.iter_mut().for_each(|di| *di = -*di);

        let mut slope = dot(&g, &d);
        if slope.is_nan() || slope >= 0.0 {
            // Curvature memory produced an ascent direction; fall back.
            pairs.clear();
            match precond {
                Some(p) => {
                    p.solve(&g, &mut d);
                    d.iter_mut().for_each(|di| *di = -*di);
                }
                None => d.iter_mut().zip(&g).for_each(|(di, gi)| *di = -gi),
            }
            slope = dot(&g, &d);
        }

        let mut step = if memory > 0 && pairs.is_empty() && precond.is_none() {
            opts.initial_step
                .min(1.0 / inf_norm(&g).max(f64::MIN_POSITIVE))
        } else {
            opts.initial_step
        };
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            for ((xn, xi), di) in x_new.iter_mut().zip(&x).zip(&d) {
                *xn = xi + step * di;
            }
            let change = match obj.value_change(&x, &d, step) {
                Some(c) => c,
                None => obj.value(&x_new) - f,
            };
            if change.is_finite() && change <= opts.armijo_c * step * slope {
                accepted = Some(change);
                break;
            }
            step *= opts.backtrack_factor;
        }
        let Some(change) = accepted else {
            stop = StopReason::LineSearchFailed;
            break;
        };

        let f_eval = obj.value_and_gradient(&x_new, &mut g_new);
        if !f_eval.is_finite() {
            return Err(non_finite("energy", iterations + 1, &x, f));
        }
        if g_new.iter().any(|v| !v.is_finite()) {
            return Err(non_finite("gradient", iterations + 1, &x, f));
        }
        iterations += 1;

        if memory > 0 {
            let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
                let yhy = match precond {
                    Some(p) => {
                        p.solve(&y, &mut scratch);
                        dot(&y, &scratch)
                    }
                    None => dot(&y, &y),
                };
                gamma = sy / yhy;
                if pairs.len() == memory {
                    pairs.pop_front();
                }
                pairs.push_back((s, y, 1.0 / sy));
            }
        }

        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        // Accumulating the accepted changes keeps the sequence monotone even
        // when the change is below the rounding noise of a full evaluation.
        f += change;
        if opts.record_history {
            history.push(f);
        }
    }

    Ok(Outcome {
        grad_norm: inf_norm(&g),
        converged: stop == StopReason::GradientTolerance,
        x,
        value: f,
        iterations,
        stop_reason: stop,
        history,
    })
}

/// Energy and gradient closures over full nodal vectors, restricted to the
/// free nodes of a clamp.
struct Projected<'a, E, G> {
    energy: &'a E,
    grad: &'a G,
    clamp: &'a ClampSpec,
    free: Vec<usize>,
    full: std::cell::RefCell<(Vec<f64>, Vec<f64>)>,
}

impl<E, G> Projected<'_, E, G> {
    fn scatter(&self, x: &[f64], full: &mut [f64]) {
        for (&i, &v) in self.free.iter().zip(x) {
            full[i] = v;
        }
        self.clamp.apply(full);
    }
}

impl<E, G> Objective for Projected<'_, E, G>
where
    E: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    fn dim(&self) -> usize {
        self.free.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let mut full = self.full.borrow_mut();
        self.scatter(x, &mut full.0);
        (self.energy)(&full.0)
    }

    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let mut full = self.full.borrow_mut();
        self.scatter(x, &mut full.0);
        let f = (self.energy)(&full.0);
        full.1 = (self.grad)(&full.0);
        for (gi, &i) in grad.iter_mut().zip(&self.free) {
            *gi = full.1[i];
        }
        f
    }
}

/// Minimizes `energy_fn` over nodal values with `clamp` held fixed.
///
/// `grad_fn` returns the gradient with respect to every node; entries on
/// clamped nodes are ignored.
pub fn minimize<E, G>(
    energy_fn: E,
    grad_fn: G,
    initial: &GridProfile,
    clamp: &ClampSpec,
    opts: &MinimizeOptions,
) -> crate::Result<MinimizeResult>
where
    E: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    opts.validate()?;
    let n = initial.values().len();
    crate::error::ensure!(
        clamp.len() == n,
        "clamp covers {} nodes but the profile has {n}",
        clamp.len()
    );
    crate::error::ensure!(
        clamp.is_satisfied_by(initial.values()),
        "initial profile does not respect the clamp"
    );
    let free = clamp.free_indices();
    let x0: Vec<f64> = free.iter().map(|&i| initial.values()[i]).collect();
    let obj = Projected {
        energy: &energy_fn,
        grad: &grad_fn,
        clamp,
        free: free.clone(),
        full: std::cell::RefCell::new((initial.values().to_vec(), vec![0.0; n])),
    };
    let out = minimize_objective(&obj, &x0, opts)?;
    let mut values = initial.values().to_vec();
    for (&i, &v) in free.iter().zip(&out.x) {
        values[i] = v;
    }
    clamp.apply(&mut values);
    let energy = energy_fn(&values);
    Ok(MinimizeResult {
        profile: initial.with_values(values)?,
        energy,
        iterations: out.iterations,
        final_grad_norm: out.grad_norm,
        converged: out.converged,
        stop_reason: out.stop_reason,
        history: out.history,
    })
}

/// Worst per-node discrepancy between `grad_fn` and fourth-order central
/// finite differences with step `1e-3 (1 + |u_i|)`.
///
/// Each node's error is relative to `max(|fd_i|, 1e-3 max_j |fd_j|)`, so nodes
/// whose true derivative is negligible do not dominate through round-off.
pub fn check_gradient<E, G>(energy_fn: E, grad_fn: G, point: &GridProfile) -> f64
where
    E: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let mut u = point.values().to_vec();
    let analytic = grad_fn(&u);
    let mut fd = vec![0.0; u.len()];
    for i in 0..u.len() {
        let orig = u[i];
        let h = 1e-3 * (1.0 + orig.abs());
        let mut at = |x: f64| {
            u[i] = x;
            energy_fn(&u)
        };
        let (f2p, f1p, f1m, f2m) = (
            at(orig + 2.0 * h),
            at(orig + h),
            at(orig - h),
            at(orig - 2.0 * h),
        );
        u[i] = orig;
        fd[i] = (8.0 * (f1p - f1m) - (f2p - f2m)) / (12.0 * h);
    }
    let floor = (1e-3 * inf_norm(&fd)).max(f64::MIN_POSITIVE);
    fd.iter()
        .zip(&analytic)
        .map(|(f, a)| (a - f).abs() / f.abs().max(floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::UniformGrid;
    use crate::potential::DoubleWell;

    fn grid(n: usize) -> UniformGrid {
        UniformGrid::new(0.0, 1.0, n).unwrap()
    }

    #[test]
    fn strongly_convex_quadratic_converges_to_ones() {
        let p = GridProfile::constant(grid(9), 0.0).unwrap();
        let e = |u: &[f64]| u.iter().map(|v| (v - 1.0).powi(2)).sum::<f64>();
        let g = |u: &[f64]| u.iter().map(|v| 2.0 * (v - 1.0)).collect::<Vec<_>>();
        for method in [Method::GradientDescent, Method::Lbfgs { memory: 5 }] {
            let opts = MinimizeOptions {
                method,
                ..Default::default()
            };
            let r = minimize(e, g, &p, &ClampSpec::free(10), &opts).unwrap();
            assert!(r.converged);
            assert!(r.final_grad_norm <= opts.grad_tol);
            assert!(r.profile.values().iter().all(|v| (v - 1.0).abs() < 1e-7));
        }
    }

    #[test]
    fn clamped_nodes_are_untouched_and_energy_monotone() {
        let g0 = grid(9);
        let p = GridProfile::from_fn(g0, |x| x).unwrap();
        let mut mask = vec![false; 10];
        mask[0] = true;
        mask[9] = true;
        let clamp = ClampSpec::new(mask, p.values().to_vec()).unwrap();
        let e = |u: &[f64]| {
            u.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>()
                + u.iter().map(|v| (v * v - 0.25).powi(2)).sum::<f64>()
        };
        let g = |u: &[f64]| {
            let mut out: Vec<f64> = u.iter().map(|v| 4.0 * v * (v * v - 0.25)).collect();
            for i in 0..u.len() - 1 {
                let d = 2.0 * (u[i + 1] - u[i]);
                out[i + 1] += d;
                out[i] -= d;
            }
            out
        };
        let opts = MinimizeOptions {
            record_history: true,
            ..Default::default()
        };
        let r = minimize(e, g, &p, &clamp, &opts).unwrap();
        assert!(r.converged);
        assert_eq!(r.profile.values()[0], p.values()[0]);
        assert_eq!(r.profile.values()[9], p.values()[9]);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn single_free_node_falls_into_nearest_well() {
        let w = DoubleWell::default();
        let p = GridProfile::new(grid(2), vec![1.0, 0.5, 1.0]).unwrap();
        let clamp = ClampSpec::new(vec![true, false, true], vec![1.0, 0.0, 1.0]).unwrap();
        for method in [Method::GradientDescent, Method::Lbfgs { memory: 3 }] {
            let opts = MinimizeOptions {
                method,
                ..Default::default()
            };
            let r = minimize(
                |u: &[f64]| w.value(u[1]),
                |u: &[f64]| vec![0.0, w.derivative(u[1]), 0.0],
                &p,
                &clamp,
                &opts,
            )
            .unwrap();
            assert!(r.converged);
            assert!((r.profile.values()[1] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn non_finite_energy_is_reported_with_last_state() {
        let p = GridProfile::constant(grid(2), 2.0).unwrap();
        let err = minimize(
            |u: &[f64]| if u[0] > 1.0 { f64::NAN } else { 0.0 },
            |u: &[f64]| vec![0.0; u.len()],
            &p,
            &ClampSpec::free(3),
            &MinimizeOptions::default(),
        )
        .unwrap_err();
        match err {
            crate::Error::Optimize(OptimizeError::NonFinite { last_values, .. }) => {
                assert_eq!(last_values, vec![2.0; 3]);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_infeasible_initial_profile() {
        let p = GridProfile::constant(grid(2), 0.0).unwrap();
        let clamp = ClampSpec::new(vec![true, false, false], vec![1.0, 0.0, 0.0]).unwrap();
        let r = minimize(
            |_: &[f64]| 0.0,
            |u: &[f64]| vec![0.0; u.len()],
            &p,
            &clamp,
            &MinimizeOptions::default(),
        );
        assert!(r.is_err());
    }

    #[test]
    fn gradient_check_examples() {
        let p = GridProfile::new(grid(3), vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let e = |u: &[f64]| {
            u.iter()
                .enumerate()
                .map(|(i, v)| (i as f64 + 1.0) * v * v)
                .sum::<f64>()
        };
        let g = |u: &[f64]| {
            u.iter()
                .enumerate()
                .map(|(i, v)| 2.0 * (i as f64 + 1.0) * v)
                .collect::<Vec<_>>()
        };
        assert!(check_gradient(e, g, &p) <= 1e-9);
        let bad = |u: &[f64]| g(u).into_iter().map(|v| 2.0 * v).collect::<Vec<_>>();
        let err = check_gradient(e, bad, &p);
        assert!((err - 1.0).abs() < 1e-6, "{err}");
    }

    #[test]
    fn runs_are_deterministic() {
        let p = GridProfile::from_fn(grid(20), |x| x - 0.5).unwrap();
        let w = DoubleWell::new(0.3).unwrap();
        let e = |u: &[f64]| {
            u.iter().map(|&v| w.value(v)).sum::<f64>()
                + u.windows(2).map(|d| (d[1] - d[0]).powi(2)).sum::<f64>()
        };
        let g = |u: &[f64]| {
            let mut out: Vec<f64> = u.iter().map(|&v| w.derivative(v)).collect();
            for i in 0..u.len() - 1 {
                let d = 2.0 * (u[i + 1] - u[i]);
                out[i + 1] += d;
                out[i] -= d;
            }
            out
        };
        let opts = MinimizeOptions::default();
        let a = minimize(e, g, &p, &ClampSpec::free(21), &opts).unwrap();
        let b = minimize(e, g, &p, &ClampSpec::free(21), &opts).unwrap();
        assert_eq!(a, b);
    }
}
