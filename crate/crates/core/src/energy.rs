//! Discrete energies: the scaled functional on a bounded interval, the
//! rescaled transition functional and its closed-form tails.
//!
//! Every energy has the form
//!
//! ```text
//! E(u) = c_W sum_i w_i W(u_i)
//!      + c_N [ sum_{i != j} a_ij q_ij (g_i - g_j)^2 + tail(g) ],   g = D^k u
//! ```
//!
//! with trapezoid weights `w_i`, kernel values `a_ij`, quadrature weights
//! `q_ij`, and the sum running over ordered pairs.

use faer::linalg::solvers::Solve;
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::grid::{DiffOperator, GridProfile, UniformGrid};
use crate::kernel::{KernelSpec, NodeKernel};
use crate::optimizer::{
    minimize_objective, ClampSpec, MinimizeOptions, MinimizeResult, Objective, OptimizeError,
    Preconditioner,
};
use crate::potential::DoubleWell;
use crate::quadrature::{QuadratureScheme, QuadratureWeights};

/// Checks the admissible `(k, s)` range.
pub fn validate_order(k: usize, s: f64) -> Result<()> {
    ensure!(
        k <= 2,
        "derivative order k = {k} unsupported (k must be 0, 1 or 2)"
    );
    ensure!(s > 0.0 && s < 1.0, "s must lie in (0, 1), got {s}");
    ensure!(
        !(k == 0 && s == 0.5),
        "k = 0, s = 1/2 is the excluded critical case"
    );
    ensure!(
        k as f64 + s > 0.5,
        "k + s must exceed 1/2, got k = {k}, s = {s}"
    );
    Ok(())
}

/// Order and scales of the functional `F_{eps, delta}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    pub k: usize,
    pub s: f64,
    pub eps: f64,
    pub delta: f64,
}

impl EnergyParams {
    pub fn new(k: usize, s: f64, eps: f64, delta: f64) -> Result<Self> {
        let p = Self { k, s, eps, delta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        validate_order(self.k, self.s)?;
        ensure!(
            self.eps.is_finite() && self.eps > 0.0,
            "eps must be positive, got {}",
            self.eps
        );
        ensure!(
            self.delta.is_finite() && self.delta > 0.0,
            "delta must be positive, got {}",
            self.delta
        );
        Ok(())
    }

    /// `2 (k + s)`.
    pub fn order(&self) -> f64 {
        2.0 * (self.k as f64 + self.s)
    }

    /// Coefficient `eps^{2(k+s)-1}` of the nonlocal term.
    pub fn nonlocal_coefficient(&self) -> f64 {
        self.eps.powf(self.order() - 1.0)
    }
}

/// Values the profile takes beyond the left and right grid ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailSpec {
    pub left: f64,
    pub right: f64,
}

impl TailSpec {
    pub fn new(left: f64, right: f64) -> Self {
        Self { left, right }
    }

    /// Tails of a jump from `-omega` to `omega`.
    pub fn jump(omega: f64) -> Self {
        Self {
            left: -omega,
            right: omega,
        }
    }
}

/// Energy split into its three contributions (coefficients applied).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyParts {
    pub well: f64,
    pub nonlocal: f64,
    pub tail: f64,
}

impl EnergyParts {
    pub fn total(&self) -> f64 {
        self.well + self.nonlocal + self.tail
    }
}

/// `int_{-inf}^{0} int_{gap}^{inf} |x - y|^{-1-2s} dy dx` for `s > 1/2`.
pub fn cross_tail_integral(s: f64, gap: f64) -> f64 {
    gap.powf(1.0 - 2.0 * s) / (2.0 * s * (2.0 * s - 1.0))
}

/// Per-node tail coefficients: the tail energy is
/// `sum_i tl_i (g_i - t_l)^2 + tr_i (g_i - t_r)^2 + cross`.
#[derive(Debug, Clone)]
struct TailTerms {
    left: Vec<f64>,
    right: Vec<f64>,
    target_left: f64,
    target_right: f64,
    cross: f64,
}

impl TailTerms {
    #[inline]
    fn node(&self, i: usize, g: f64) -> f64 {
        let (dl, dr) = (g - self.target_left, g - self.target_right);
        self.left[i] * dl * dl + self.right[i] * dr * dr
    }

    #[inline]
    fn node_grad(&self, i: usize, g: f64) -> f64 {
        2.0 * (self.left[i] * (g - self.target_left) + self.right[i] * (g - self.target_right))
    }

    /// `node(i, g + dg) - node(i, g)`.
    #[inline]
    fn node_change(&self, i: usize, g: f64, dg: f64) -> f64 {
        self.left[i] * dg * (2.0 * (g - self.target_left) + dg)
            + self.right[i] * dg * (2.0 * (g - self.target_right) + dg)
    }

    #[inline]
    fn node_curvature(&self, i: usize) -> f64 {
        2.0 * (self.left[i] + self.right[i])
    }
}

/// A fully assembled discrete energy on one grid.
#[derive(Debug, Clone)]
pub struct DiscreteFunctional {
    grid: UniformGrid,
    k: usize,
    s: f64,
    diff: DiffOperator,
    weights: QuadratureWeights,
    kernel: NodeKernel,
    well: DoubleWell,
    c_well: f64,
    c_nonlocal: f64,
    tail: Option<TailTerms>,
}

impl DiscreteFunctional {
    /// Assembles `c_well sum W + c_nonlocal sum a(x_i scale, x_j scale) ...`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        grid: &UniformGrid,
        k: usize,
        s: f64,
        kernel: KernelSpec,
        kernel_scale: f64,
        well: DoubleWell,
        c_well: f64,
        c_nonlocal: f64,
        scheme: QuadratureScheme,
    ) -> Result<Self> {
        validate_order(k, s)?;
        kernel.validate()?;
        ensure!(
            grid.n_nodes() >= 2 * k + 3,
            "order-{k} energies need at least {} nodes, grid has {}",
            2 * k + 3,
            grid.n_nodes()
        );
        ensure!(
            kernel_scale.is_finite() && kernel_scale > 0.0,
            "kernel scale must be positive, got {kernel_scale}"
        );
        ensure!(
            c_well >= 0.0 && c_nonlocal >= 0.0 && c_well.is_finite() && c_nonlocal.is_finite(),
            "energy coefficients must be finite and nonnegative"
        );
        Ok(Self {
            grid: *grid,
            k,
            s,
            diff: DiffOperator::new(grid, k)?,
            weights: QuadratureWeights::new(grid, s, scheme)?,
            kernel: NodeKernel::new(kernel, grid, kernel_scale),
            well,
            c_well,
            c_nonlocal,
            tail: None,
        })
    }

    /// `F_{eps, delta}` with the kernel evaluated at `(x / delta, y / delta)`.
    pub fn scaled(
        grid: &UniformGrid,
        params: &EnergyParams,
        well: DoubleWell,
        kernel: KernelSpec,
        scheme: QuadratureScheme,
    ) -> Result<Self> {
        params.validate()?;
        Self::new(
            grid,
            params.k,
            params.s,
            kernel,
            1.0 / params.delta,
            well,
            1.0 / params.eps,
            params.nonlocal_coefficient(),
            scheme,
        )
    }

    /// Unit-coefficient functional with the kernel evaluated at
    /// `(x scale, y scale)`.
    pub fn rescaled(
        grid: &UniformGrid,
        k: usize,
        s: f64,
        kernel: KernelSpec,
        kernel_scale: f64,
        well: DoubleWell,
        scheme: QuadratureScheme,
    ) -> Result<Self> {
        Self::new(grid, k, s, kernel, kernel_scale, well, 1.0, 1.0, scheme)
    }

    /// Adds the closed-form energy of pairs with at least one point outside
    /// the grid, where the profile equals `tail.left` / `tail.right`.
    ///
    /// The far variable is replaced by the row mean of the kernel. Needs
    /// `s > 1/2` when `k = 0`.
    pub fn with_tail(mut self, tail: TailSpec) -> Result<Self> {
        self.tail = Some(self.tail_terms(tail)?);
        Ok(self)
    }

    fn tail_terms(&self, tail: TailSpec) -> Result<TailTerms> {
        ensure!(
            self.k > 0 || self.s > 0.5,
            "tail corrections for k = 0 need s > 1/2, got s = {}",
            self.s
        );
        ensure!(
            tail.left.is_finite() && tail.right.is_finite(),
            "tail values must be finite"
        );
        let (b_lo, b_hi) = self.weights.represented_bounds();
        // End nodes of the corrected scheme sit on the boundary; their
        // half-cell centroid stands in for the distance.
        let min_dist = 0.25 * self.grid.h();
        let s = self.s;
        let n = self.grid.n_nodes();
        let mut left = Vec::with_capacity(n);
        let mut right = Vec::with_capacity(n);
        for i in 0..n {
            let x = self.grid.node(i);
            let base = self.weights.node_weight(i) * self.kernel.row_mean(i) / s;
            left.push(base * (x - b_lo).max(min_dist).powf(-2.0 * s));
            right.push(base * (b_hi - x).max(min_dist).powf(-2.0 * s));
        }
        let (target_left, target_right, cross) = if self.k == 0 {
            let jump = tail.right - tail.left;
            let cross = 2.0
                * jump
                * jump
                * self.kernel.spec().a_bar()
                * cross_tail_integral(s, b_hi - b_lo);
            (tail.left, tail.right, cross)
        } else {
            (0.0, 0.0, 0.0)
        };
        Ok(TailTerms {
            left,
            right,
            target_left,
            target_right,
            cross,
        })
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn diff(&self) -> &DiffOperator {
        &self.diff
    }

    pub fn weights(&self) -> &QuadratureWeights {
        &self.weights
    }

    pub fn kernel(&self) -> &NodeKernel {
        &self.kernel
    }

    pub fn well(&self) -> &DoubleWell {
        &self.well
    }

    pub fn c_well(&self) -> f64 {
        self.c_well
    }

    pub fn c_nonlocal(&self) -> f64 {
        self.c_nonlocal
    }

    pub fn has_tail(&self) -> bool {
        self.tail.is_some()
    }

    /// `a_ij q_ij`.
    #[inline]
    pub fn pair_coefficient(&self, i: usize, j: usize) -> f64 {
        self.kernel.pair(i, j) * self.weights.pair_weight(i, j)
    }

    fn check_len(&self, u: &[f64]) {
        assert_eq!(
            u.len(),
            self.grid.n_nodes(),
            "profile length does not match the functional's grid"
        );
    }

    /// `sum_{i != j} a_ij q_ij (g_i - g_j)^2` without the coefficient.
    pub fn nonlocal_sum(&self, g: &[f64]) -> f64 {
        let mut total = 0.0;
        for (i, &gi) in g.iter().enumerate() {
            let mut row = 0.0;
            for (j, &gj) in g.iter().enumerate().skip(i + 1) {
                let d = gi - gj;
                row += self.pair_coefficient(i, j) * d * d;
            }
            total += row;
        }
        2.0 * total
    }

    fn well_sum(&self, u: &[f64]) -> f64 {
        u.iter()
            .enumerate()
            .map(|(i, &v)| self.grid.trapezoid_weight(i) * self.well.value(v))
            .sum()
    }

    fn tail_sum(&self, g: &[f64]) -> f64 {
        match &self.tail {
            None => 0.0,
            Some(t) => {
                g.iter()
                    .enumerate()
                    .map(|(i, &gi)| t.node(i, gi))
                    .sum::<f64>()
                    + t.cross
            }
        }
    }

    pub fn parts(&self, u: &[f64]) -> EnergyParts {
        self.check_len(u);
        let g = self.diff.apply(u);
        EnergyParts {
            well: self.c_well * self.well_sum(u),
            nonlocal: self.c_nonlocal * self.nonlocal_sum(&g),
            tail: self.c_nonlocal * self.tail_sum(&g),
        }
    }

    pub fn value(&self, u: &[f64]) -> f64 {
        self.parts(u).total()
    }

    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; u.len()];
        self.value_and_gradient(u, &mut grad);
        grad
    }

    pub fn value_and_gradient(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        self.check_len(u);
        let n = u.len();
        let g = self.diff.apply(u);
        let mut dg = vec![0.0; n];
        let mut nonlocal = 0.0;
        for i in 0..n {
            let gi = g[i];
            let mut row = 0.0;
            let mut row_grad = 0.0;
            for j in i + 1..n {
                let d = gi - g[j];
                let c = self.pair_coefficient(i, j);
                row += c * d * d;
                let cd = 4.0 * c * d;
                row_grad += cd;
                dg[j] -= cd;
            }
            dg[i] += row_grad;
            nonlocal += row;
        }
        nonlocal *= 2.0;
        let mut tail = 0.0;
        if let Some(t) = &self.tail {
            for i in 0..n {
                tail += t.node(i, g[i]);
                dg[i] += t.node_grad(i, g[i]);
            }
            tail += t.cross;
        }
        dg.iter_mut().for_each(|v| *v *= self.c_nonlocal);
        grad.iter_mut().for_each(|v| *v = 0.0);
        self.diff.apply_transpose_add(&dg, grad);
        let mut well = 0.0;
        for i in 0..n {
            let w = self.grid.trapezoid_weight(i);
            well += w * self.well.value(u[i]);
            grad[i] += self.c_well * w * self.well.derivative(u[i]);
        }
        self.c_well * well + self.c_nonlocal * (nonlocal + tail)
    }

    /// Minimizes over the free nodes of `clamp`, starting from `initial`.
    ///
    /// The returned energy is recomputed with the full evaluator.
    pub fn minimize(
        &self,
        initial: &GridProfile,
        clamp: &ClampSpec,
        opts: &MinimizeOptions,
    ) -> Result<MinimizeResult> {
        opts.validate()?;
        ensure!(
            initial.grid() == &self.grid,
            "initial profile lives on a different grid"
        );
        ensure!(
            clamp.is_satisfied_by(initial.values()),
            "initial profile does not respect the clamp"
        );
        let mut red = self.reduced(clamp)?;
        if opts.precondition {
            red = red.with_preconditioner()?;
        }
        let x0 = red.gather(initial.values());
        let out = minimize_objective(&red, &x0, opts).map_err(|e| match e {
            OptimizeError::NonFinite {
                what,
                iteration,
                last_values,
                last_energy,
            } => OptimizeError::NonFinite {
                what,
                iteration,
                last_values: red.scatter(&last_values),
                last_energy,
            },
            other => other,
        })?;
        let values = red.scatter(&out.x);
        let energy = self.value(&values);
        if !energy.is_finite() {
            return Err(Error::Numerical(format!(
                "final energy is not finite after {} iterations",
                out.iterations
            )));
        }
        Ok(MinimizeResult {
            profile: GridProfile::new(self.grid, values)?,
            energy,
            iterations: out.iterations,
            final_grad_norm: out.grad_norm,
            converged: out.converged,
            stop_reason: out.stop_reason,
            history: out.history,
        })
    }

    /// Energy restricted to the free nodes of `clamp`, evaluated in
    /// `O(|A|^2)` where `A` is the set of nodes whose difference stencil
    /// reads a free node.
    pub fn reduced(&self, clamp: &ClampSpec) -> Result<ReducedObjective<'_>> {
        ReducedObjective::new(self, clamp)
    }
}

fn check_weights(p: &GridProfile, s: f64, weights: &QuadratureWeights) -> Result<()> {
    ensure!(
        weights.matches(p.grid(), s),
        "quadrature weights were built for a different grid or s"
    );
    Ok(())
}

/// `sum_{i != j} a(x_i/delta, x_j/delta) q_ij (g_i - g_j)^2` with `g = D^k p`.
pub fn eval_gagliardo(
    p: &GridProfile,
    k: usize,
    s: f64,
    kspec: Option<&KernelSpec>,
    weights: &QuadratureWeights,
    delta: Option<f64>,
) -> Result<f64> {
    check_weights(p, s, weights)?;
    let diff = DiffOperator::new(p.grid(), k)?;
    let kernel = kspec.copied().unwrap_or_else(KernelSpec::unit);
    kernel.validate()?;
    let scale = match delta {
        Some(d) => {
            ensure!(d.is_finite() && d > 0.0, "delta must be positive, got {d}");
            1.0 / d
        }
        None => 1.0,
    };
    let nk = NodeKernel::new(kernel, p.grid(), scale);
    let g = diff.apply(p.values());
    let n = g.len();
    let mut total = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in i + 1..n {
            let d = g[i] - g[j];
            row += nk.pair(i, j) * weights.pair_weight(i, j) * d * d;
        }
        total += row;
    }
    Ok(2.0 * total)
}

/// `F_{eps, delta}(p)` on the grid of `p`.
#[allow(non_snake_case)]
pub fn eval_F(
    p: &GridProfile,
    params: &EnergyParams,
    w: &DoubleWell,
    kspec: &KernelSpec,
    weights: &QuadratureWeights,
) -> Result<f64> {
    check_weights(p, params.s, weights)?;
    let f = DiscreteFunctional::scaled(p.grid(), params, *w, *kspec, weights.scheme())?;
    Ok(f.value(p.values()))
}

/// `Phi^a` over the grid of `p` with unit coefficients and no tails.
#[allow(non_snake_case)]
pub fn eval_Phi_T(
    p: &GridProfile,
    k: usize,
    s: f64,
    kspec: &KernelSpec,
    weights: &QuadratureWeights,
    w: &DoubleWell,
) -> Result<f64> {
    check_weights(p, s, weights)?;
    let f = DiscreteFunctional::rescaled(p.grid(), k, s, *kspec, 1.0, *w, weights.scheme())?;
    Ok(f.value(p.values()))
}

/// Closed-form nonlocal energy of pairs reaching outside the grid of `p`,
/// where the profile equals `tail_signs`.
///
/// Pairs are counted in both orders, matching [`eval_gagliardo`].
pub fn tail_correction(
    p: &GridProfile,
    k: usize,
    s: f64,
    kspec: &KernelSpec,
    tail_signs: (f64, f64),
    scheme: QuadratureScheme,
) -> Result<f64> {
    let f =
        DiscreteFunctional::rescaled(p.grid(), k, s, *kspec, 1.0, DoubleWell::default(), scheme)?
            .with_tail(TailSpec::new(tail_signs.0, tail_signs.1))?;
    Ok(f.parts(p.values()).tail)
}

/// Which functional [`grad_energy`] differentiates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnergyMode {
    /// `F_{eps, delta}`.
    Scaled(EnergyParams),
    /// `Phi^a` with unit coefficients.
    Rescaled { k: usize, s: f64 },
}

pub fn grad_energy(
    p: &GridProfile,
    mode: EnergyMode,
    w: &DoubleWell,
    kspec: &KernelSpec,
    weights: &QuadratureWeights,
) -> Result<GridProfile> {
    let f = match mode {
        EnergyMode::Scaled(params) => {
            check_weights(p, params.s, weights)?;
            DiscreteFunctional::scaled(p.grid(), &params, *w, *kspec, weights.scheme())?
        }
        EnergyMode::Rescaled { k, s } => {
            check_weights(p, s, weights)?;
            DiscreteFunctional::rescaled(p.grid(), k, s, *kspec, 1.0, *w, weights.scheme())?
        }
    };
    p.with_values(f.gradient(p.values()))
}

/// Active row `a` of `D`: `g_a = fixed + sum coeff * x[free_pos]`.
#[derive(Debug, Clone)]
struct ActiveRow {
    node: usize,
    fixed: f64,
    entries: Vec<(usize, f64)>,
}

/// A [`DiscreteFunctional`] as a function of the free nodes of a clamp.
pub struct ReducedObjective<'a> {
    f: &'a DiscreteFunctional,
    base: Vec<f64>,
    free: Vec<usize>,
    rows: Vec<ActiveRow>,
    /// Dense `a_ij q_ij` among active nodes.
    c_aa: Vec<f64>,
    /// Interaction of each active node with the frozen ones:
    /// `sum_j c_aj`, `sum_j c_aj g_j`, `sum_j c_aj g_j^2`.
    s0: Vec<f64>,
    s1: Vec<f64>,
    s2: Vec<f64>,
    /// Energy of everything not touching a free node.
    constant: f64,
    precond: Option<CholeskyPreconditioner>,
}

impl<'a> ReducedObjective<'a> {
    fn new(f: &'a DiscreteFunctional, clamp: &ClampSpec) -> Result<Self> {
        let n = f.grid.n_nodes();
        ensure!(
            clamp.len() == n,
            "clamp covers {} nodes but the grid has {n}",
            clamp.len()
        );
        let free = clamp.free_indices();
        let mut free_pos = vec![usize::MAX; n];
        for (p, &i) in free.iter().enumerate() {
            free_pos[i] = p;
        }
        let mut base = vec![0.0; n];
        clamp.apply(&mut base);

        let mut rows = Vec::new();
        let mut is_active = vec![false; n];
        for (i, active) in is_active.iter_mut().enumerate() {
            let (start, coeffs) = f.diff.row(i);
            let mut fixed = 0.0;
            let mut entries = Vec::new();
            for (off, &c) in coeffs.iter().enumerate() {
                let j = start + off;
                if clamp.is_fixed(j) {
                    fixed += c * base[j];
                } else {
                    entries.push((free_pos[j], c));
                }
            }
            if !entries.is_empty() {
                *active = true;
                rows.push(ActiveRow {
                    node: i,
                    fixed,
                    entries,
                });
            }
        }
        let frozen: Vec<usize> = (0..n).filter(|&i| !is_active[i]).collect();
        let g_base = f.diff.apply(&base);

        let na = rows.len();
        let mut c_aa = vec![0.0; na * na];
        for (p, ra) in rows.iter().enumerate() {
            for (q, rb) in rows.iter().enumerate() {
                c_aa[p * na + q] = f.pair_coefficient(ra.node, rb.node);
            }
        }
        let (mut s0, mut s1, mut s2) = (vec![0.0; na], vec![0.0; na], vec![0.0; na]);
        for (p, ra) in rows.iter().enumerate() {
            for &j in &frozen {
                let c = f.pair_coefficient(ra.node, j);
                let gj = g_base[j];
                s0[p] += c;
                s1[p] += c * gj;
                s2[p] += c * gj * gj;
            }
        }

        let mut frozen_pairs = 0.0;
        for (a, &i) in frozen.iter().enumerate() {
            let gi = g_base[i];
            let mut row = 0.0;
            for &j in &frozen[a + 1..] {
                let d = gi - g_base[j];
                if d != 0.0 {
                    row += f.pair_coefficient(i, j) * d * d;
                }
            }
            frozen_pairs += row;
        }
        let mut frozen_tail = 0.0;
        if let Some(t) = &f.tail {
            frozen_tail = frozen.iter().map(|&i| t.node(i, g_base[i])).sum::<f64>() + t.cross;
        }
        let frozen_well: f64 = (0..n)
            .filter(|&i| clamp.is_fixed(i))
            .map(|i| f.grid.trapezoid_weight(i) * f.well.value(base[i]))
            .sum();
        let constant = f.c_nonlocal * (2.0 * frozen_pairs + frozen_tail) + f.c_well * frozen_well;

        Ok(Self {
            f,
            base,
            free,
            rows,
            c_aa,
            s0,
            s1,
            s2,
            constant,
            precond: None,
        })
    }

    pub fn free_indices(&self) -> &[usize] {
        &self.free
    }

    pub fn n_active(&self) -> usize {
        self.rows.len()
    }

    /// Free-node values of a full nodal vector.
    pub fn gather(&self, u: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&i| u[i]).collect()
    }

    /// Full nodal vector with the clamped values filled in.
    pub fn scatter(&self, x: &[f64]) -> Vec<f64> {
        let mut u = self.base.clone();
        for (&i, &v) in self.free.iter().zip(x) {
            u[i] = v;
        }
        u
    }

    fn active_g(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.fixed + r.entries.iter().map(|&(p, c)| c * x[p]).sum::<f64>())
            .collect()
    }

    fn eval(&self, x: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let f = self.f;
        let g = self.active_g(x);
        let na = g.len();
        let mut dg = vec![0.0; if grad.is_some() { na } else { 0 }];
        let mut pairs = 0.0;
        let mut cross = 0.0;
        for p in 0..na {
            let gp = g[p];
            let row = &self.c_aa[p * na..(p + 1) * na];
            let mut acc = 0.0;
            let mut acc_d = 0.0;
            for (c, gq) in row.iter().zip(&g) {
                let d = gp - gq;
                acc += c * d * d;
                acc_d += c * d;
            }
            pairs += acc;
            cross += self.s0[p] * gp * gp - 2.0 * gp * self.s1[p] + self.s2[p];
            if !dg.is_empty() {
                dg[p] = 4.0 * (acc_d + self.s0[p] * gp - self.s1[p]);
            }
        }
        let mut tail = 0.0;
        if let Some(t) = &f.tail {
            for (p, r) in self.rows.iter().enumerate() {
                tail += t.node(r.node, g[p]);
                if !dg.is_empty() {
                    dg[p] += t.node_grad(r.node, g[p]);
                }
            }
        }
        let mut well = 0.0;
        for (p, &i) in self.free.iter().enumerate() {
            well += f.grid.trapezoid_weight(i) * f.well.value(x[p]);
        }
        if let Some(grad) = grad {
            for (p, &i) in self.free.iter().enumerate() {
                grad[p] = f.c_well * f.grid.trapezoid_weight(i) * f.well.derivative(x[p]);
            }
            for (r, d) in self.rows.iter().zip(&dg) {
                for &(p, c) in &r.entries {
                    grad[p] += f.c_nonlocal * c * d;
                }
            }
        }
        self.constant + f.c_well * well + f.c_nonlocal * (pairs + 2.0 * cross + tail)
    }

    /// Builds and factors the curvature model
    /// `c_N D^T H_g D + c_W mu diag(w)` over the free nodes, where `H_g` is
    /// the Hessian of the quadratic part in `g` and `mu` bounds `W''` at the wells.
    pub fn with_preconditioner(mut self) -> Result<Self> {
        let f = self.f;
        let na = self.rows.len();
        let nf = self.free.len();
        let mut h = vec![0.0; na * na];
        for p in 0..na {
            let row = &self.c_aa[p * na..(p + 1) * na];
            let mut diag = self.s0[p];
            for (q, &c) in row.iter().enumerate() {
                if q != p {
                    h[p * na + q] = -4.0 * c;
                    diag += c;
                }
            }
            h[p * na + p] = 4.0 * diag;
            if let Some(t) = &f.tail {
                h[p * na + p] += t.node_curvature(self.rows[p].node);
            }
        }
        // m = H D (na x nf), then P = D^T m.
        let mut m = vec![0.0; na * nf];
        for (q, rq) in self.rows.iter().enumerate() {
            for &(fp, c) in &rq.entries {
                for p in 0..na {
                    m[p * nf + fp] += h[p * na + q] * c;
                }
            }
        }
        let mu = f.well.well_curvature_bound();
        let mut pm = Mat::<f64>::zeros(nf, nf);
        for (p, rp) in self.rows.iter().enumerate() {
            let mrow = &m[p * nf..(p + 1) * nf];
            for &(fp, c) in &rp.entries {
                for (col, &v) in mrow.iter().enumerate() {
                    pm[(fp, col)] += f.c_nonlocal * c * v;
                }
            }
        }
        for (p, &i) in self.free.iter().enumerate() {
            pm[(p, p)] += f.c_well * mu * f.grid.trapezoid_weight(i);
        }
        // Symmetrize against accumulated round-off.
        for i in 0..nf {
            for j in 0..i {
                let v = 0.5 * (pm[(i, j)] + pm[(j, i)]);
                pm[(i, j)] = v;
                pm[(j, i)] = v;
            }
        }
        let llt = pm
            .llt(faer::Side::Lower)
            .map_err(|e| Error::Numerical(format!("preconditioner factorization failed: {e:?}")))?;
        self.precond = Some(CholeskyPreconditioner { llt });
        Ok(self)
    }
}

impl ReducedObjective<'_> {
    fn change(&self, x: &[f64], d: &[f64], alpha: f64) -> f64 {
        let f = self.f;
        let g = self.active_g(x);
        let dg: Vec<f64> = self
            .rows
            .iter()
            .map(|r| alpha * r.entries.iter().map(|&(p, c)| c * d[p]).sum::<f64>())
            .collect();
        let na = g.len();
        let mut pairs = 0.0;
        let mut cross = 0.0;
        for p in 0..na {
            let (gp, dp) = (g[p], dg[p]);
            let row = &self.c_aa[p * na..(p + 1) * na];
            let mut acc = 0.0;
            for ((c, gq), dq) in row.iter().zip(&g).zip(&dg) {
                let dd = dp - dq;
                acc += c * dd * (2.0 * (gp - gq) + dd);
            }
            pairs += acc;
            cross += self.s0[p] * dp * (2.0 * gp + dp) - 2.0 * self.s1[p] * dp;
        }
        let mut tail = 0.0;
        if let Some(t) = &f.tail {
            for (p, r) in self.rows.iter().enumerate() {
                tail += t.node_change(r.node, g[p], dg[p]);
            }
        }
        let mut well = 0.0;
        for (p, &i) in self.free.iter().enumerate() {
            well += f.grid.trapezoid_weight(i) * f.well.change(x[p], alpha * d[p]);
        }
        f.c_well * well + f.c_nonlocal * (pairs + 2.0 * cross + tail)
    }
}

impl Objective for ReducedObjective<'_> {
    fn dim(&self) -> usize {
        self.free.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x, None)
    }

    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.eval(x, Some(grad))
    }

    fn value_change(&self, x: &[f64], d: &[f64], alpha: f64) -> Option<f64> {
        Some(self.change(x, d, alpha))
    }

    fn preconditioner(&self) -> Option<&dyn Preconditioner> {
        self.precond.as_ref().map(|p| p as &dyn Preconditioner)
    }
}

/// Dense Cholesky factor of a curvature model.
pub struct CholeskyPreconditioner {
    llt: faer::linalg::solvers::Llt<f64>,
}

impl Preconditioner for CholeskyPreconditioner {
    fn solve(&self, r: &[f64], out: &mut [f64]) {
        let rhs = Mat::<f64>::from_fn(r.len(), 1, |i, _| r[i]);
        let sol = self.llt.solve(&rhs);
        for (i, o) in out.iter_mut().enumerate() {
            *o = sol[(i, 0)];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::quadrature::build_weights;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1e-300)
    }

    #[test]
    fn order_validation() {
        assert!(validate_order(0, 0.5).is_err());
        assert!(validate_order(0, 0.4).is_err());
        assert!(validate_order(0, 0.75).is_ok());
        assert!(validate_order(1, 0.1).is_ok());
        assert!(validate_order(3, 0.5).is_err());
        assert!(EnergyParams::new(1, 0.5, 0.0, 0.1).is_err());
    }

    #[test]
    fn gagliardo_examples() {
        let g = make_grid(0.0, 1.0, 2).unwrap();
        let w = build_weights(&g, 0.75).unwrap();
        let p = GridProfile::new(g, vec![0.0, 0.0, 1.0]).unwrap();
        let v = eval_gagliardo(&p, 0, 0.75, None, &w, None).unwrap();
        assert!(close(v, 3.32842712474619, 1e-13), "{v}");

        let c = GridProfile::constant(g, 0.3).unwrap();
        let k = KernelSpec::cos_sum(2.5, 1.0).unwrap();
        assert_eq!(
            eval_gagliardo(&c, 0, 0.75, Some(&k), &w, Some(0.1)).unwrap(),
            0.0
        );

        let p3 = GridProfile::new(g, vec![0.0, 0.0, 3.0]).unwrap();
        let v3 = eval_gagliardo(&p3, 0, 0.75, None, &w, None).unwrap();
        assert!(close(v3, 9.0 * v, 1e-14));
    }

    #[test]
    fn gagliardo_rejects_mismatched_weights() {
        let g = make_grid(0.0, 1.0, 4).unwrap();
        let w = build_weights(&make_grid(0.0, 1.0, 8).unwrap(), 0.75).unwrap();
        let p = GridProfile::constant(g, 0.0).unwrap();
        assert!(eval_gagliardo(&p, 0, 0.75, None, &w, None).is_err());
        let w = build_weights(&g, 0.5).unwrap();
        assert!(eval_gagliardo(&p, 0, 0.75, None, &w, None).is_err());
    }

    #[test]
    fn eval_f_examples() {
        let g = make_grid(0.0, 1.0, 16).unwrap();
        let params = EnergyParams::new(1, 0.5, 0.1, 0.05).unwrap();
        let w = DoubleWell::default();
        let k = KernelSpec::cos_sum(2.5, 1.0).unwrap();
        let q = build_weights(&g, 0.5).unwrap();
        let ones = GridProfile::constant(g, 1.0).unwrap();
        assert_eq!(eval_F(&ones, &params, &w, &k, &q).unwrap(), 0.0);
        let zeros = GridProfile::constant(g, 0.0).unwrap();
        assert!(close(
            eval_F(&zeros, &params, &w, &k, &q).unwrap(),
            10.0,
            1e-14
        ));
    }

    #[test]
    fn eval_phi_examples() {
        let g = make_grid(-1.0, 1.0, 16).unwrap();
        let q = build_weights(&g, 0.75).unwrap();
        let w = DoubleWell::default();
        let one = KernelSpec::unit();
        let ones = GridProfile::constant(g, 1.0).unwrap();
        assert_eq!(eval_Phi_T(&ones, 0, 0.75, &one, &q, &w).unwrap(), 0.0);
        let zeros = GridProfile::constant(g, 0.0).unwrap();
        assert!(close(
            eval_Phi_T(&zeros, 0, 0.75, &one, &q, &w).unwrap(),
            2.0,
            1e-14
        ));

        let p = GridProfile::from_fn(g, |x| (2.0 * x).tanh()).unwrap();
        let c = KernelSpec::constant(3.0).unwrap();
        let well_only = DiscreteFunctional::rescaled(&g, 0, 0.75, one, 1.0, w, q.scheme())
            .unwrap()
            .parts(p.values());
        let phi_c = eval_Phi_T(&p, 0, 0.75, &c, &q, &w).unwrap();
        assert!(close(
            phi_c,
            3.0 * well_only.nonlocal + well_only.well,
            1e-13
        ));
    }

    #[test]
    fn cross_tail_example() {
        let v = 4.0 * cross_tail_integral(0.75, 8.0);
        assert!(close(v, 1.8856180831641267, 1e-14), "{v}");
    }

    #[test]
    fn tail_vanishes_on_matching_constant() {
        let g = make_grid(-4.0, 4.0, 32).unwrap();
        let p = GridProfile::constant(g, 1.0).unwrap();
        for scheme in [QuadratureScheme::Plain, QuadratureScheme::Corrected] {
            for k in 0..=2 {
                let t =
                    tail_correction(&p, k, 0.75, &KernelSpec::unit(), (1.0, 1.0), scheme).unwrap();
                assert_eq!(t, 0.0);
            }
        }
        assert!(tail_correction(
            &p,
            0,
            0.5,
            &KernelSpec::unit(),
            (1.0, 1.0),
            QuadratureScheme::Plain
        )
        .is_err());
    }

    #[test]
    fn k0_tail_of_sharp_jump_is_cross_term_plus_node_terms() {
        // The exterior is +-1 and the interior is the sharp jump itself.
        let g = make_grid(-4.0, 4.0, 64).unwrap();
        let p = GridProfile::from_fn(g, |x| if x < 0.0 { -1.0 } else { 1.0 }).unwrap();
        let t = tail_correction(
            &p,
            0,
            0.75,
            &KernelSpec::unit(),
            (-1.0, 1.0),
            QuadratureScheme::Plain,
        )
        .unwrap();
        let (b_lo, b_hi) = (-4.0 - 0.0625, 4.0 + 0.0625);
        let mut expect = 2.0 * 4.0 * cross_tail_integral(0.75, b_hi - b_lo);
        for x in g.nodes() {
            let u = if x < 0.0 { -1.0 } else { 1.0 };
            expect += g.h() / 0.75
                * ((u + 1.0f64).powi(2) * (x - b_lo).powf(-1.5)
                    + (u - 1.0f64).powi(2) * (b_hi - x).powf(-1.5));
        }
        assert!(close(t, expect, 1e-13), "{t} vs {expect}");
    }

    #[test]
    fn k1_tail_decays_with_domain() {
        let s = 0.75;
        let bump = |x: f64| (x * 3.0).tanh();
        let run = |t_out: f64| {
            let g = make_grid(-t_out, t_out, (32.0 * t_out) as usize).unwrap();
            let p = GridProfile::from_fn(g, |x| {
                if x.abs() < 2.0 {
                    bump(x)
                } else {
                    bump(2.0 * x.signum())
                }
            })
            .unwrap();
            tail_correction(
                &p,
                1,
                s,
                &KernelSpec::unit(),
                (-1.0, 1.0),
                QuadratureScheme::Corrected,
            )
            .unwrap()
        };
        let (a, b) = (run(4.0), run(8.0));
        assert!(a > 0.0 && b > 0.0);
        assert!(a / b >= 2f64.powf(2.0 * s), "{a} {b}");
    }

    #[test]
    fn gradient_vanishes_at_clamped_well() {
        let g = make_grid(-2.0, 2.0, 40).unwrap();
        let f = DiscreteFunctional::rescaled(
            &g,
            1,
            0.5,
            KernelSpec::cos_sum(2.5, 1.0).unwrap(),
            1.0,
            DoubleWell::new(0.3).unwrap(),
            QuadratureScheme::Corrected,
        )
        .unwrap()
        .with_tail(TailSpec::new(1.0, 1.0))
        .unwrap();
        let grad = f.gradient(&vec![1.0; 41]);
        assert!(grad.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn reduced_matches_full_with_preconditioner() {
        let g = make_grid(-3.0, 3.0, 60).unwrap();
        for k in 0..=2 {
            let f = DiscreteFunctional::rescaled(
                &g,
                k,
                0.75,
                KernelSpec::cos_prod(1.0, 0.4).unwrap(),
                1.3,
                DoubleWell::new(0.2).unwrap(),
                QuadratureScheme::Corrected,
            )
            .unwrap()
            .with_tail(TailSpec::jump(1.0))
            .unwrap();
            let p = GridProfile::from_fn(g, |x| (1.5 * x).tanh()).unwrap();
            let clamp = ClampSpec::from_fn(&p, |x| x.abs() >= 1.0, |x| x.signum()).unwrap();
            let mut u = p.values().to_vec();
            clamp.apply(&mut u);
            let red = f.reduced(&clamp).unwrap().with_preconditioner().unwrap();
            let x = red.gather(&u);
            let mut gr = vec![0.0; x.len()];
            let v = red.value_and_gradient(&x, &mut gr);
            assert!(close(v, f.value(&u), 1e-12), "k = {k}");
            let full = f.gradient(&u);
            let scale = full.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (p, &i) in red.free_indices().iter().enumerate() {
                assert!((gr[p] - full[i]).abs() <= 1e-12 * scale, "k = {k} node {i}");
            }
            let d: Vec<f64> = (0..x.len())
                .map(|i| ((i * 7) % 5) as f64 * 0.01 - 0.02)
                .collect();
            let xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + 0.5 * b).collect();
            let direct = red.value(&xn) - red.value(&x);
            let stable = red.value_change(&x, &d, 0.5).unwrap();
            assert!(
                (direct - stable).abs() <= 1e-12 * v,
                "k = {k}: {direct} vs {stable}"
            );
            let mut out = vec![0.0; x.len()];
            red.preconditioner().unwrap().solve(&gr, &mut out);
            assert!(out.iter().all(|v| v.is_finite()));
            assert!(dot(&out, &gr) > 0.0);
        }
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }
}
