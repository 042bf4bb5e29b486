//! Uniform 1-D grids, nodal profiles, finite-difference derivatives and
//! piecewise-constant jump targets.

use crate::error::{ensure, Result};

/// Uniform partition of `[x_lo, x_hi]` into `n_cells` cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid {
    x_lo: f64,
    x_hi: f64,
    n_cells: usize,
    h: f64,
}

impl UniformGrid {
    pub fn new(x_lo: f64, x_hi: f64, n_cells: usize) -> Result<Self> {
        ensure!(
            x_lo.is_finite() && x_hi.is_finite() && x_lo < x_hi,
            "grid endpoints must be finite with x_lo < x_hi, got ({x_lo}, {x_hi})"
        );
        ensure!(n_cells >= 2, "grid needs at least 2 cells, got {n_cells}");
        Ok(Self {
            x_lo,
            x_hi,
            n_cells,
            h: (x_hi - x_lo) / n_cells as f64,
        })
    }

    /// Symmetric grid on `(-half_length, half_length)`.
    pub fn symmetric(half_length: f64, n_cells: usize) -> Result<Self> {
        Self::new(-half_length, half_length, n_cells)
    }

    pub fn x_lo(&self) -> f64 {
        self.x_lo
    }

    pub fn x_hi(&self) -> f64 {
        self.x_hi
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_nodes(&self) -> usize {
        self.n_cells + 1
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> f64 {
        self.x_hi - self.x_lo
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        self.x_lo + i as f64 * self.h
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_nodes()).map(move |i| self.node(i))
    }

    /// Trapezoid weights: `h` at interior nodes, `h/2` at both ends.
    pub fn trapezoid_weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.n_cells {
            0.5 * self.h
        } else {
            self.h
        }
    }

    /// Same node set with both endpoints divided by `lambda`.
    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        ensure!(
            lambda.is_finite() && lambda > 0.0,
            "scale factor must be positive, got {lambda}"
        );
        Self::new(self.x_lo / lambda, self.x_hi / lambda, self.n_cells)
    }
}

/// Convenience constructor mirroring [`UniformGrid::new`].
pub fn make_grid(x_lo: f64, x_hi: f64, n_cells: usize) -> Result<UniformGrid> {
    UniformGrid::new(x_lo, x_hi, n_cells)
}

/// Nodal values of an order parameter on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridProfile {
    grid: UniformGrid,
    values: Vec<f64>,
}

impl GridProfile {
    pub fn new(grid: UniformGrid, values: Vec<f64>) -> Result<Self> {
        ensure!(
            values.len() == grid.n_nodes(),
            "profile has {} values but grid has {} nodes",
            values.len(),
            grid.n_nodes()
        );
        ensure!(
            values.iter().all(|v| v.is_finite()),
            "profile values must be finite"
        );
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: UniformGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes().map(f).collect();
        Self::new(grid, values)
    }

    pub fn constant(grid: UniformGrid, value: f64) -> Result<Self> {
        Self::new(grid, vec![value; grid.n_nodes()])
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub(crate) fn from_parts_unchecked(grid: UniformGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n_nodes());
        Self { grid, values }
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.grid, values)
    }

    pub fn max_abs_diff(&self, other: &GridProfile) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Finite-difference approximation of the `k`-th derivative, `k` in `{0, 1, 2}`.
///
/// Interior nodes use second-order central stencils. The `k` nodes closest to
/// each end use second-order one-sided stencils, so linear (k = 1) and quadratic
/// (k = 2) data are reproduced exactly.
#[derive(Debug, Clone)]
pub struct DiffOperator {
    k: usize,
    n_nodes: usize,
    rows: Vec<Stencil>,
}

#[derive(Debug, Clone, Copy)]
struct Stencil {
    start: usize,
    len: usize,
    coeffs: [f64; 4],
}

impl DiffOperator {
    pub fn new(grid: &UniformGrid, k: usize) -> Result<Self> {
        ensure!(
            k <= 2,
            "derivative order k = {k} unsupported (k must be 0, 1 or 2)"
        );
        let n = grid.n_nodes();
        ensure!(
            n > 2 * k,
            "order-{k} differences need at least {} nodes, grid has {n}",
            2 * k + 1
        );
        let h = grid.h();
        let last = n - 1;
        let rows = (0..n)
            .map(|i| match k {
                0 => Stencil {
                    start: i,
                    len: 1,
                    coeffs: [1.0, 0.0, 0.0, 0.0],
                },
                1 => {
                    let c = 1.0 / (2.0 * h);
                    if i == 0 {
                        Stencil {
                            start: 0,
                            len: 3,
                            coeffs: [-3.0 * c, 4.0 * c, -c, 0.0],
                        }
                    } else if i == last {
                        Stencil {
                            start: last - 2,
                            len: 3,
                            coeffs: [c, -4.0 * c, 3.0 * c, 0.0],
                        }
                    } else {
                        Stencil {
                            start: i - 1,
                            len: 3,
                            coeffs: [-c, 0.0, c, 0.0],
                        }
                    }
                }
                _ => {
                    let c = 1.0 / (h * h);
                    if i < 2 {
                        Stencil {
                            start: i,
                            len: 4,
                            coeffs: [2.0 * c, -5.0 * c, 4.0 * c, -c],
                        }
                    } else if i + 2 > last {
                        Stencil {
                            start: i - 3,
                            len: 4,
                            coeffs: [-c, 4.0 * c, -5.0 * c, 2.0 * c],
                        }
                    } else {
                        Stencil {
                            start: i - 1,
                            len: 3,
                            coeffs: [c, -2.0 * c, c, 0.0],
                        }
                    }
                }
            })
            .collect();
        Ok(Self {
            k,
            n_nodes: n,
            rows,
        })
    }

    pub fn order(&self) -> usize {
        self.k
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Nodes read by row `i` and the matching coefficients.
    pub fn row(&self, i: usize) -> (usize, &[f64]) {
        let st = &self.rows[i];
        (st.start, &st.coeffs[..st.len])
    }

    #[inline]
    pub fn apply_row(&self, i: usize, u: &[f64]) -> f64 {
        let (start, c) = self.row(i);
        c.iter().zip(&u[start..]).map(|(a, b)| a * b).sum()
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.n_nodes);
        (0..self.n_nodes).map(|i| self.apply_row(i, u)).collect()
    }

    /// `out += D^T y`.
    pub fn apply_transpose_add(&self, y: &[f64], out: &mut [f64]) {
        for (i, &yi) in y.iter().enumerate() {
            if yi == 0.0 {
                continue;
            }
            let (start, c) = self.row(i);
            for (o, a) in out[start..].iter_mut().zip(c) {
                *o += a * yi;
            }
        }
    }

    /// Largest node distance between a row and the nodes it reads.
    pub fn reach(&self) -> usize {
        match self.k {
            0 => 0,
            1 => 2,
            _ => 3,
        }
    }
}

/// `k`-th difference of a profile; `k = 0` returns the profile unchanged.
pub fn kth_difference(p: &GridProfile, k: usize) -> Result<GridProfile> {
    let op = DiffOperator::new(p.grid(), k)?;
    Ok(GridProfile::from_parts_unchecked(
        *p.grid(),
        op.apply(p.values()),
    ))
}

/// Nodal image of `v(lambda x)`: endpoints divided by `lambda`, values kept.
pub fn resample_scaled(p: &GridProfile, lambda: f64) -> Result<GridProfile> {
    let grid = p.grid().scaled(lambda)?;
    Ok(GridProfile::from_parts_unchecked(grid, p.values().to_vec()))
}

/// Piecewise-constant `{-1, +1}` function on `(0, 1)` described by its jumps.
#[derive(Debug, Clone, PartialEq)]
pub struct BVTarget {
    jump_locations: Vec<f64>,
    jump_signs: Vec<i8>,
    left_value: i8,
}

impl BVTarget {
    /// Builds a target from `(location, sign)` pairs and the value left of the
    /// first jump. Jumps must stay inside `(0, 1)`, increase strictly, and
    /// alternate so the function only takes the values `±1`.
    pub fn new(jumps: &[(f64, i8)], left_value: i8) -> Result<Self> {
        ensure!(
            left_value == 1 || left_value == -1,
            "left value must be ±1, got {left_value}"
        );
        let mut current = left_value;
        let mut prev = 0.0;
        for (idx, &(t, sign)) in jumps.iter().enumerate() {
            ensure!(sign == 1 || sign == -1, "jump sign must be ±1, got {sign}");
            ensure!(
                t > 0.0 && t < 1.0,
                "jump location {t} is not strictly inside (0, 1)"
            );
            ensure!(
                idx == 0 || t > prev,
                "jump locations must be strictly increasing ({prev} then {t})"
            );
            ensure!(
                sign == -current,
                "jump {idx} at {t} with sign {sign:+} would leave the value {current:+} outside {{-1, +1}}"
            );
            current = -current;
            prev = t;
        }
        Ok(Self {
            jump_locations: jumps.iter().map(|j| j.0).collect(),
            jump_signs: jumps.iter().map(|j| j.1).collect(),
            left_value,
        })
    }

    pub fn jump_locations(&self) -> &[f64] {
        &self.jump_locations
    }

    pub fn jump_signs(&self) -> &[i8] {
        &self.jump_signs
    }

    pub fn left_value(&self) -> i8 {
        self.left_value
    }

    pub fn n_jumps(&self) -> usize {
        self.jump_locations.len()
    }

    /// Ascending jumps (`S^+`).
    pub fn ascending(&self) -> Vec<f64> {
        self.jumps_with_sign(1)
    }

    /// Descending jumps (`S^-`).
    pub fn descending(&self) -> Vec<f64> {
        self.jumps_with_sign(-1)
    }

    fn jumps_with_sign(&self, sign: i8) -> Vec<f64> {
        self.jump_locations
            .iter()
            .zip(&self.jump_signs)
            .filter(|(_, &s)| s == sign)
            .map(|(&t, _)| t)
            .collect()
    }

    /// Value of the target at `x`; a point exactly at a jump takes the right limit.
    pub fn value_at(&self, x: f64) -> f64 {
        let passed = self.jump_locations.iter().take_while(|&&t| t <= x).count();
        let v = if passed % 2 == 0 {
            self.left_value
        } else {
            -self.left_value
        };
        f64::from(v)
    }

    pub fn sample(&self, grid: &UniformGrid) -> GridProfile {
        let values = grid.nodes().map(|x| self.value_at(x)).collect();
        GridProfile::from_parts_unchecked(*grid, values)
    }

    /// Largest `tau` such that the intervals `(t_j - tau, t_j + tau)` are
    /// disjoint and inside `(0, 1)`.
    pub fn separation_radius(&self) -> f64 {
        let locs = &self.jump_locations;
        let inner = locs
            .windows(2)
            .map(|w| 0.5 * (w[1] - w[0]))
            .fold(f64::INFINITY, f64::min);
        match (locs.first(), locs.last()) {
            (Some(first), Some(last)) => inner.min(*first).min(1.0 - last),
            _ => f64::INFINITY,
        }
    }

    /// Midpoints between consecutive jumps, with `0` and `1` at the ends.
    pub fn interval_bounds(&self) -> Vec<f64> {
        let mut b = vec![0.0];
        b.extend(self.jump_locations.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        b.push(1.0);
        b
    }
}

/// Builds a target and its nodal sampling on `grid`.
pub fn make_bv_target(
    jumps: &[(f64, i8)],
    left_value: i8,
    grid: &UniformGrid,
) -> Result<(BVTarget, GridProfile)> {
    let target = BVTarget::new(jumps, left_value)?;
    let sampled = target.sample(grid);
    Ok((target, sampled))
}

/// Natural cubic spline through the nodes of a profile, extended by the end
/// values outside the grid.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    grid: UniformGrid,
    values: Vec<f64>,
    second: Vec<f64>,
}

impl CubicSpline {
    pub fn new(p: &GridProfile) -> Self {
        let n = p.values().len();
        let y = p.values();
        let h = p.grid().h();
        // Tridiagonal system for the second derivatives, natural end conditions.
        let mut m = vec![0.0; n];
        if n > 2 {
            let inner = n - 2;
            let mut diag = vec![4.0; inner];
            let mut rhs: Vec<f64> = (1..n - 1)
                .map(|i| 6.0 * (y[i + 1] - 2.0 * y[i] + y[i - 1]) / (h * h))
                .collect();
            for i in 1..inner {
                let w = 1.0 / diag[i - 1];
                diag[i] -= w;
                rhs[i] -= w * rhs[i - 1];
            }
            m[inner] = rhs[inner - 1] / diag[inner - 1];
            for i in (0..inner - 1).rev() {
                m[i + 1] = (rhs[i] - m[i + 2]) / diag[i];
            }
        }
        Self {
            grid: *p.grid(),
            values: y.to_vec(),
            second: m,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.values.len();
        if x <= self.grid.x_lo() {
            return self.values[0];
        }
        if x >= self.grid.x_hi() {
            return self.values[n - 1];
        }
        let h = self.grid.h();
        let t = (x - self.grid.x_lo()) / h;
        let i = (t.floor() as usize).min(n - 2);
        let a = (i + 1) as f64 - t;
        let b = t - i as f64;
        a * self.values[i]
            + b * self.values[i + 1]
            + ((a * a * a - a) * self.second[i] + (b * b * b - b) * self.second[i + 1]) * h * h
                / 6.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn grid_nodes_and_spacing() {
        let g = make_grid(0.0, 1.0, 4).unwrap();
        let nodes: Vec<f64> = g.nodes().collect();
        assert_eq!(nodes, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(g.h(), 0.25);

        let g = make_grid(-2.0, 2.0, 8).unwrap();
        assert_eq!(g.h(), 0.5);
        assert_eq!(g.n_nodes(), 9);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(make_grid(1.0, 0.0, 4).is_err());
        assert!(make_grid(0.0, 1.0, 1).is_err());
        assert!(make_grid(0.0, f64::NAN, 4).is_err());
    }

    #[test]
    fn differences_reproduce_polynomials() {
        let g = make_grid(0.0, 1.0, 10).unwrap();
        let c = GridProfile::constant(g, 3.5).unwrap();
        let d = kth_difference(&c, 1).unwrap();
        assert!(d.values().iter().all(|v| v.abs() < 1e-12));

        let lin = GridProfile::from_fn(g, |x| x).unwrap();
        let d = kth_difference(&lin, 1).unwrap();
        assert!(d.values().iter().all(|v| close(*v, 1.0, 1e-12)), "{d:?}");

        let quad = GridProfile::from_fn(g, |x| x * x).unwrap();
        let d = kth_difference(&quad, 2).unwrap();
        assert!(d.values().iter().all(|v| close(*v, 2.0, 1e-10)), "{d:?}");

        let d0 = kth_difference(&quad, 0).unwrap();
        assert_eq!(d0, quad);
    }

    #[test]
    fn differences_reject_unsupported_order() {
        let g = make_grid(0.0, 1.0, 10).unwrap();
        let p = GridProfile::constant(g, 0.0).unwrap();
        assert!(kth_difference(&p, 3).is_err());
        let small = make_grid(0.0, 1.0, 3).unwrap();
        let p = GridProfile::constant(small, 0.0).unwrap();
        assert!(kth_difference(&p, 2).is_err());
    }

    #[test]
    fn transpose_matches_dense_adjoint() {
        let g = make_grid(-1.0, 2.0, 7).unwrap();
        for k in 0..=2 {
            let op = DiffOperator::new(&g, k).unwrap();
            let n = g.n_nodes();
            let u: Vec<f64> = (0..n).map(|i| ((i * 7 + 3) % 5) as f64 - 1.7).collect();
            let y: Vec<f64> = (0..n).map(|i| ((i * 3 + 1) % 4) as f64 * 0.3).collect();
            let du = op.apply(&u);
            let mut dty = vec![0.0; n];
            op.apply_transpose_add(&y, &mut dty);
            let lhs: f64 = du.iter().zip(&y).map(|(a, b)| a * b).sum();
            let rhs: f64 = u.iter().zip(&dty).map(|(a, b)| a * b).sum();
            assert!(close(lhs, rhs, 1e-12), "k = {k}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn resample_examples() {
        let g = make_grid(-2.0, 2.0, 8).unwrap();
        let p = GridProfile::from_fn(g, |x| x.sin()).unwrap();
        assert_eq!(resample_scaled(&p, 1.0).unwrap(), p);
        let q = resample_scaled(&p, 2.0).unwrap();
        assert_eq!(q.grid().x_lo(), -1.0);
        assert_eq!(q.grid().x_hi(), 1.0);
        assert_eq!(q.values(), p.values());
        assert!(resample_scaled(&p, 0.0).is_err());
    }

    #[test]
    fn bv_target_examples() {
        let t = BVTarget::new(&[(0.5, 1)], -1).unwrap();
        assert_eq!(t.ascending(), vec![0.5]);
        assert!(t.descending().is_empty());

        let g = make_grid(0.0, 1.0, 4).unwrap();
        let (_, p) = make_bv_target(&[], 1, &g).unwrap();
        assert!(p.values().iter().all(|&v| v == 1.0));

        assert!(BVTarget::new(&[(0.3, 1), (0.6, 1)], -1).is_err());
        assert!(BVTarget::new(&[(0.6, 1), (0.3, -1)], -1).is_err());
        assert!(BVTarget::new(&[(1.0, 1)], -1).is_err());
    }

    #[test]
    fn bv_sampling_takes_right_limit_at_jump() {
        let g = make_grid(0.0, 1.0, 4).unwrap();
        let (_, p) = make_bv_target(&[(0.5, 1)], -1, &g).unwrap();
        assert_eq!(p.values(), &[-1.0, -1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn target_geometry() {
        let t = BVTarget::new(&[(0.25, 1), (0.75, -1)], -1).unwrap();
        assert!(close(t.separation_radius(), 0.25, 1e-15));
        let t = BVTarget::new(&[(0.25, 1), (0.5, -1)], -1).unwrap();
        assert!(close(t.separation_radius(), 0.125, 1e-15));
        assert_eq!(t.interval_bounds(), vec![0.0, 0.375, 1.0]);
    }

    #[test]
    fn spline_interpolates_nodes_and_cubics() {
        let g = make_grid(-1.0, 1.0, 20).unwrap();
        let p = GridProfile::from_fn(g, |x| (3.0 * x).tanh()).unwrap();
        let sp = CubicSpline::new(&p);
        for (i, x) in g.nodes().enumerate() {
            assert!(close(sp.eval(x), p.values()[i], 1e-13));
        }
        assert_eq!(sp.eval(-5.0), p.values()[0]);
        assert_eq!(sp.eval(5.0), p.values()[20]);
        // Between nodes the spline tracks the smooth function.
        let mid = sp.eval(0.05);
        assert!((mid - (0.15f64).tanh()).abs() < 1e-3);
    }
}
