use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::grid::UniformGrid;

/// Symmetric, 1-periodic interaction coefficient `a(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `a = c`.
    Constant { c: f64 },
    /// `a = c0 + c1 (cos 2 pi x + cos 2 pi y)`.
    CosSum { c0: f64, c1: f64 },
    /// `a = c0 + c1 cos 2 pi x cos 2 pi y`.
    CosProd { c0: f64, c1: f64 },
}

/// Closed-form statistics of a kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelStats {
    pub a_bar: f64,
    pub a_inf: f64,
    pub alpha_a: f64,
    pub beta_a: f64,
}

impl KernelSpec {
    pub fn constant(c: f64) -> Result<Self> {
        Self::Constant { c }.validated()
    }

    pub fn cos_sum(c0: f64, c1: f64) -> Result<Self> {
        Self::CosSum { c0, c1 }.validated()
    }

    pub fn cos_prod(c0: f64, c1: f64) -> Result<Self> {
        Self::CosProd { c0, c1 }.validated()
    }

    /// The unit kernel `a = 1`.
    pub fn unit() -> Self {
        Self::Constant { c: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = match *self {
            Self::Constant { c } => c.is_finite(),
            Self::CosSum { c0, c1 } | Self::CosProd { c0, c1 } => c0.is_finite() && c1.is_finite(),
        };
        ensure!(finite, "kernel coefficients must be finite: {self:?}");
        let alpha = self.alpha_a();
        ensure!(
            alpha > 0.0,
            "kernel {self:?} is not uniformly positive (alpha_a = {alpha} <= 0)"
        );
        Ok(())
    }

    pub fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    #[inline]
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match *self {
            Self::Constant { c } => c,
            Self::CosSum { c0, c1 } => c0 + c1 * ((TAU * x).cos() + (TAU * y).cos()),
            Self::CosProd { c0, c1 } => c0 + c1 * (TAU * x).cos() * (TAU * y).cos(),
        }
    }

    pub fn alpha_a(&self) -> f64 {
        match *self {
            Self::Constant { c } => c,
            Self::CosSum { c0, c1 } => c0 - 2.0 * c1.abs(),
            Self::CosProd { c0, c1 } => c0 - c1.abs(),
        }
    }

    pub fn beta_a(&self) -> f64 {
        match *self {
            Self::Constant { c } => c,
            Self::CosSum { c0, c1 } => c0 + 2.0 * c1.abs(),
            Self::CosProd { c0, c1 } => c0 + c1.abs(),
        }
    }

    /// Mean over the unit square.
    pub fn a_bar(&self) -> f64 {
        match *self {
            Self::Constant { c } => c,
            Self::CosSum { c0, .. } | Self::CosProd { c0, .. } => c0,
        }
    }

    /// Infimum of `a(t, t)`.
    pub fn a_inf(&self) -> f64 {
        let r = self.diagonal_argmin();
        self.eval(r, r)
    }

    pub fn stats(&self) -> KernelStats {
        KernelStats {
            a_bar: self.a_bar(),
            a_inf: self.a_inf(),
            alpha_a: self.alpha_a(),
            beta_a: self.beta_a(),
        }
    }

    /// A point `r` in `[0, 1)` where `t -> a(t, t)` attains its minimum.
    pub fn diagonal_argmin(&self) -> f64 {
        match *self {
            Self::Constant { .. } => 0.0,
            Self::CosSum { c1, .. } => {
                if c1 > 0.0 {
                    0.5
                } else {
                    0.0
                }
            }
            Self::CosProd { c1, .. } => {
                if c1 > 0.0 {
                    0.25
                } else {
                    0.0
                }
            }
        }
    }

    /// Mean of `a(x, .)` over one period of the second variable.
    pub fn row_mean(&self, x: f64) -> f64 {
        match *self {
            Self::Constant { c } => c,
            Self::CosSum { c0, c1 } => c0 + c1 * (TAU * x).cos(),
            Self::CosProd { c0, .. } => c0,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Self::Constant { .. })
    }
}

pub fn eval_kernel(kspec: &KernelSpec, x: f64, y: f64) -> f64 {
    kspec.eval(x, y)
}

pub fn kernel_stats(kspec: &KernelSpec) -> KernelStats {
    kspec.stats()
}

/// Sampled search for the diagonal minimum of an arbitrary periodic kernel.
pub fn diagonal_argmin_search(kspec: &KernelSpec, samples: usize) -> f64 {
    let samples = samples.max(1);
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..samples {
        let t = i as f64 / samples as f64;
        let v = kspec.eval(t, t);
        if v < best.0 {
            best = (v, t);
        }
    }
    best.1
}

/// Kernel values `a(x_i * scale, x_j * scale)` on the nodes of a grid.
///
/// All built-in variants separate into per-node cosines, so pair values are
/// O(1) without an `N x N` cache.
#[derive(Debug, Clone)]
pub struct NodeKernel {
    spec: KernelSpec,
    scale: f64,
    cosines: Vec<f64>,
}

impl NodeKernel {
    pub fn new(spec: KernelSpec, grid: &UniformGrid, scale: f64) -> Self {
        let cosines = if spec.is_constant() {
            Vec::new()
        } else {
            grid.nodes().map(|x| (TAU * x * scale).cos()).collect()
        };
        Self {
            spec,
            scale,
            cosines,
        }
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    #[inline]
    pub fn pair(&self, i: usize, j: usize) -> f64 {
        match self.spec {
            KernelSpec::Constant { c } => c,
            KernelSpec::CosSum { c0, c1 } => c0 + c1 * (self.cosines[i] + self.cosines[j]),
            KernelSpec::CosProd { c0, c1 } => c0 + c1 * self.cosines[i] * self.cosines[j],
        }
    }

    /// Row mean of the kernel at node `i` (far variable averaged out).
    #[inline]
    pub fn row_mean(&self, i: usize) -> f64 {
        match self.spec {
            KernelSpec::Constant { c } => c,
            KernelSpec::CosSum { c0, c1 } => c0 + c1 * self.cosines[i],
            KernelSpec::CosProd { c0, .. } => c0,
        }
    }
}
