use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::grid::UniformGrid;

/// How the singular double integral is discretized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureScheme {
    /// Nodal double sum `h^2 |x_i - x_j|^{-1-2s}` over `i != j`.
    Plain,
    /// Trapezoid end factors plus a nearest-neighbour term that restores the
    /// skipped diagonal band. Error `O(h^2)` instead of `O(h^{2-2s})` for
    /// smooth data.
    #[default]
    Corrected,
}

/// Kernel-free pair weights for the discrete Gagliardo double sum.
#[derive(Debug, Clone)]
pub struct QuadratureWeights {
    grid: UniformGrid,
    s: f64,
    scheme: QuadratureScheme,
    /// `h^2 (m h)^{-1-2s}` indexed by the offset `m = |i - j|`.
    offset: Vec<f64>,
    /// Neighbour correction `-zeta(2s - 1) h^{1-2s}`; zero for the plain scheme.
    near: f64,
}

impl QuadratureWeights {
    pub fn new(grid: &UniformGrid, s: f64, scheme: QuadratureScheme) -> Result<Self> {
        ensure!(s > 0.0 && s < 1.0, "s must lie in (0, 1), got {s}");
        let h = grid.h();
        let p = -1.0 - 2.0 * s;
        let offset = (0..grid.n_nodes())
            .map(|m| {
                if m == 0 {
                    0.0
                } else {
                    h * h * (m as f64 * h).powf(p)
                }
            })
            .collect();
        let near = match scheme {
            QuadratureScheme::Plain => 0.0,
            QuadratureScheme::Corrected => -zeta(2.0 * s - 1.0) * h.powf(1.0 - 2.0 * s),
        };
        Ok(Self {
            grid: *grid,
            s,
            scheme,
            offset,
            near,
        })
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn scheme(&self) -> QuadratureScheme {
        self.scheme
    }

    /// End-node factor: `1/2` at both ends for the corrected scheme.
    #[inline]
    pub fn end_factor(&self, i: usize) -> f64 {
        if self.scheme == QuadratureScheme::Corrected && (i == 0 || i == self.grid.n_cells()) {
            0.5
        } else {
            1.0
        }
    }

    #[inline]
    pub fn pair_weight(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let m = i.abs_diff(j);
        match self.scheme {
            QuadratureScheme::Plain => self.offset[m],
            QuadratureScheme::Corrected => {
                let (fi, fj) = (self.end_factor(i), self.end_factor(j));
                let mut w = fi * fj * self.offset[m];
                if m == 1 {
                    w += 0.5 * (fi + fj) * self.near;
                }
                w
            }
        }
    }

    /// Quadrature weight of node `i` in single integrals over the grid.
    pub fn node_weight(&self, i: usize) -> f64 {
        match self.scheme {
            QuadratureScheme::Plain => self.grid.h(),
            QuadratureScheme::Corrected => self.grid.trapezoid_weight(i),
        }
    }

    /// Interval represented by the nodes: cell-centred for the plain scheme,
    /// the grid itself for the corrected one.
    pub fn represented_bounds(&self) -> (f64, f64) {
        match self.scheme {
            QuadratureScheme::Plain => {
                let hh = 0.5 * self.grid.h();
                (self.grid.x_lo() - hh, self.grid.x_hi() + hh)
            }
            QuadratureScheme::Corrected => (self.grid.x_lo(), self.grid.x_hi()),
        }
    }

    pub(crate) fn matches(&self, grid: &UniformGrid, s: f64) -> bool {
        self.grid == *grid && self.s == s
    }
}

/// Plain weights `h^2 |x_i - x_j|^{-1-2s}`.
pub fn build_weights(grid: &UniformGrid, s: f64) -> Result<QuadratureWeights> {
    QuadratureWeights::new(grid, s, QuadratureScheme::Plain)
}

/// Riemann zeta function for real `x != 1` with `x > -4`, by Euler-Maclaurin
/// summation.
pub fn zeta(x: f64) -> f64 {
    // B_{2k} / (2k)!
    const B: [f64; 8] = [
        1.0 / 6.0 / 2.0,
        -1.0 / 30.0 / 24.0,
        1.0 / 42.0 / 720.0,
        -1.0 / 30.0 / 40320.0,
        5.0 / 66.0 / 3628800.0,
        -691.0 / 2730.0 / 479001600.0,
        7.0 / 6.0 / 87178291200.0,
        -3617.0 / 510.0 / 20922789888000.0,
    ];
    const N: usize = 20;
    let n = N as f64;
    let mut sum: f64 = (1..N).map(|k| (k as f64).powf(-x)).sum();
    sum += n.powf(1.0 - x) / (x - 1.0) + 0.5 * n.powf(-x);
    let mut poch = x;
    for (k, b) in B.iter().enumerate() {
        let m = 2 * k + 1;
        sum += b * poch * n.powf(-x - m as f64);
        poch *= (x + m as f64) * (x + m as f64 + 1.0);
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_weight_examples() {
        let g = UniformGrid::new(0.0, 1.0, 2).unwrap();
        let w = build_weights(&g, 0.75).unwrap();
        assert!((w.pair_weight(0, 2) - 0.25).abs() < 1e-15);
        assert!((w.pair_weight(0, 1) - std::f64::consts::SQRT_2).abs() < 1e-14);
        assert_eq!(w.pair_weight(1, 0), w.pair_weight(0, 1));
        assert_eq!(w.pair_weight(1, 1), 0.0);
    }

    #[test]
    fn zeta_reference_values() {
        assert!((zeta(0.0) + 0.5).abs() < 1e-14);
        assert!((zeta(-1.0) + 1.0 / 12.0).abs() < 1e-14);
        assert!((zeta(0.5) + 1.4603545088095868).abs() < 1e-13);
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((zeta(2.0) - pi2 / 6.0).abs() < 1e-13);
        assert!((zeta(-0.5) + 0.2078862249773545).abs() < 1e-13);
    }

    #[test]
    fn corrected_weights_are_symmetric_and_positive() {
        let g = UniformGrid::new(-1.0, 1.0, 12).unwrap();
        for s in [0.1, 0.3, 0.5, 0.75, 0.95] {
            let w = QuadratureWeights::new(&g, s, QuadratureScheme::Corrected).unwrap();
            for i in 0..g.n_nodes() {
                for j in 0..g.n_nodes() {
                    assert_eq!(w.pair_weight(i, j), w.pair_weight(j, i));
                    if i != j {
                        assert!(w.pair_weight(i, j) > 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_s_outside_unit_interval() {
        let g = UniformGrid::new(0.0, 1.0, 4).unwrap();
        assert!(build_weights(&g, 0.0).is_err());
        assert!(build_weights(&g, 1.0).is_err());
    }
}
