use serde::{Deserialize, Serialize};

use crate::energy::{validate_order, DiscreteFunctional, TailSpec};
use crate::error::{ensure, Result};
use crate::grid::{GridProfile, UniformGrid};
use crate::kernel::KernelSpec;
use crate::optimizer::{ClampSpec, MinimizeOptions, MinimizeResult};
use crate::potential::DoubleWell;
use crate::quadrature::QuadratureScheme;

/// Which coefficient the rescaled problem sees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum KernelMode {
    /// `a(x / lambda, y / lambda)`.
    Lambda { lambda: f64 },
    /// The constant mean `a_bar`.
    Supercritical,
    /// The constant diagonal infimum `a_inf`.
    Subcritical,
    /// `a = 1`.
    Homogeneous,
}

impl KernelMode {
    /// Kernel and coordinate scale used by the rescaled functional.
    pub fn effective(&self, kernel: &KernelSpec) -> Result<(KernelSpec, f64)> {
        Ok(match *self {
            Self::Lambda { lambda } => {
                ensure!(
                    lambda.is_finite() && lambda > 0.0,
                    "lambda must be positive, got {lambda}"
                );
                (*kernel, 1.0 / lambda)
            }
            Self::Supercritical => (KernelSpec::constant(kernel.a_bar())?, 1.0),
            Self::Subcritical => (KernelSpec::constant(kernel.a_inf())?, 1.0),
            Self::Homogeneous => (KernelSpec::unit(), 1.0),
        })
    }
}

/// Finite-length transition problem `m^omega(a, T)` on `(-t_out, t_out)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionProblem {
    pub kernel: KernelSpec,
    pub mode: KernelMode,
    /// Jump direction, `+1` or `-1`.
    pub omega: f64,
    /// Clamp half-length: `v = omega sgn(x)` for `|x| >= t`.
    pub t: f64,
    /// Grid half-length.
    pub t_out: f64,
    pub n_cells: usize,
    pub potential: DoubleWell,
    pub k: usize,
    pub s: f64,
    #[serde(default)]
    pub scheme: QuadratureScheme,
    /// Add the closed-form energy of the exterior `|x| > t_out`.
    #[serde(default = "default_true")]
    pub tails: bool,
}

fn default_true() -> bool {
    true
}

impl TransitionProblem {
    /// Problem with grid spacing close to `h` on `(-t_out, t_out)`.
    pub fn with_spacing(
        kernel: KernelSpec,
        mode: KernelMode,
        k: usize,
        s: f64,
        t: f64,
        t_out: f64,
        h: f64,
    ) -> Self {
        Self {
            kernel,
            mode,
            omega: 1.0,
            t,
            t_out,
            n_cells: (2.0 * t_out / h).round().max(2.0) as usize,
            potential: DoubleWell::default(),
            k,
            s,
            scheme: QuadratureScheme::default(),
            tails: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_order(self.k, self.s)?;
        self.kernel.validate()?;
        self.mode.effective(&self.kernel)?;
        ensure!(
            self.omega == 1.0 || self.omega == -1.0,
            "omega must be +1 or -1, got {}",
            self.omega
        );
        ensure!(
            self.t.is_finite() && self.t > 0.0,
            "clamp length T must be positive, got {}",
            self.t
        );
        ensure!(
            self.t_out > self.t && self.t_out >= 3.0 * self.t.max(1.0) - 1e-12,
            "grid half-length T_out = {} must exceed T = {} and be at least max(3T, 3)",
            self.t_out,
            self.t
        );
        let grid = self.grid()?;
        let free = grid.nodes().filter(|x| x.abs() < self.clamp_edge()).count();
        ensure!(
            free >= 1,
            "clamp T = {} leaves no free node at spacing h = {}",
            self.t,
            grid.h()
        );
        Ok(())
    }

    pub fn grid(&self) -> Result<UniformGrid> {
        UniformGrid::symmetric(self.t_out, self.n_cells)
    }

    fn clamp_edge(&self) -> f64 {
        self.t * (1.0 - 1e-12)
    }

    pub fn clamp(&self, grid: &UniformGrid) -> Result<ClampSpec> {
        let edge = self.clamp_edge();
        let omega = self.omega;
        let mask: Vec<bool> = grid.nodes().map(|x| x.abs() >= edge).collect();
        let values = grid.nodes().map(|x| omega * x.signum()).collect();
        ClampSpec::new(mask, values)
    }

    /// The ramp `omega clamp(x / T, -1, 1)`.
    pub fn initial_profile(&self, grid: &UniformGrid) -> Result<GridProfile> {
        let edge = self.clamp_edge();
        GridProfile::from_fn(*grid, |x| {
            if x.abs() >= edge {
                self.omega * x.signum()
            } else {
                self.omega * (x / self.t).clamp(-1.0, 1.0)
            }
        })
    }

    pub fn functional(&self) -> Result<DiscreteFunctional> {
        let (kernel, scale) = self.mode.effective(&self.kernel)?;
        let grid = self.grid()?;
        let f = DiscreteFunctional::rescaled(
            &grid,
            self.k,
            self.s,
            kernel,
            scale,
            self.potential,
            self.scheme,
        )?;
        if self.tails {
            f.with_tail(TailSpec::jump(self.omega))
        } else {
            Ok(f)
        }
    }

    /// Kernel seen by the rescaled problem, as a constant when the mode
    /// replaces it by one.
    pub fn effective_kernel(&self) -> Result<KernelSpec> {
        Ok(self.mode.effective(&self.kernel)?.0)
    }
}

/// Minimizes the transition problem from the scaled ramp.
pub fn transition_energy(tp: &TransitionProblem, opts: &MinimizeOptions) -> Result<MinimizeResult> {
    tp.validate()?;
    let grid = tp.grid()?;
    transition_energy_from(tp, opts, &tp.initial_profile(&grid)?)
}

/// Minimizes the transition problem from `initial`; clamped nodes of
/// `initial` are overwritten with the clamp values.
pub fn transition_energy_from(
    tp: &TransitionProblem,
    opts: &MinimizeOptions,
    initial: &GridProfile,
) -> Result<MinimizeResult> {
    tp.validate()?;
    let f = tp.functional()?;
    let clamp = tp.clamp(f.grid())?;
    ensure!(
        initial.grid() == f.grid(),
        "initial profile lives on a different grid than the problem"
    );
    let mut values = initial.values().to_vec();
    clamp.apply(&mut values);
    f.minimize(&initial.with_values(values)?, &clamp, opts)
}

/// Runs the problem from the ramp and from each extra start, keeping the
/// lowest energy.
pub fn transition_energy_multistart(
    tp: &TransitionProblem,
    opts: &MinimizeOptions,
    starts: &[&GridProfile],
) -> Result<MinimizeResult> {
    let mut best = transition_energy(tp, opts)?;
    for start in starts {
        let r = transition_energy_from(tp, opts, start)?;
        if r.energy < best.energy {
            best = r;
        }
    }
    Ok(best)
}

/// One entry of a T-curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub t: f64,
    pub m_hat: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Estimates of `m^omega(a, T)` along ascending `t_list`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionCurve {
    pub points: Vec<CurvePoint>,
    /// Last two estimates differ by less than 1 %.
    pub converged_in_t: bool,
    pub final_profile: GridProfile,
}

impl TransitionCurve {
    pub fn is_non_increasing(&self, slack: f64) -> bool {
        self.points
            .windows(2)
            .all(|w| w[1].m_hat <= w[0].m_hat + slack)
    }

    pub fn last(&self) -> f64 {
        self.points.last().map_or(f64::NAN, |p| p.m_hat)
    }
}

/// `m^omega(a, T)` for each `T` in `t_list` on one common grid of half-length
/// `t_out >= max(3 max T, 3)`.
///
/// Each run starts from the previous optimum, which stays admissible when the
/// clamp shrinks, so the discrete sequence is non-increasing by construction.
pub fn transition_energy_curve(
    template: &TransitionProblem,
    t_list: &[f64],
    opts: &MinimizeOptions,
) -> Result<TransitionCurve> {
    ensure!(!t_list.is_empty(), "T list is empty");
    ensure!(
        t_list.windows(2).all(|w| w[0] < w[1]),
        "T list must be strictly ascending"
    );
    let mut points = Vec::with_capacity(t_list.len());
    let mut prev: Option<GridProfile> = None;
    for &t in t_list {
        let tp = TransitionProblem { t, ..*template };
        let r = match &prev {
            None => transition_energy(&tp, opts)?,
            Some(p) => transition_energy_from(&tp, opts, p)?,
        };
        points.push(CurvePoint {
            t,
            m_hat: r.energy,
            converged: r.converged,
            iterations: r.iterations,
        });
        prev = Some(r.profile);
    }
    let converged_in_t = match points.as_slice() {
        [.., a, b] => (a.m_hat - b.m_hat).abs() < 0.01 * b.m_hat.abs(),
        _ => false,
    };
    Ok(TransitionCurve {
        points,
        converged_in_t,
        final_profile: prev.expect("non-empty T list"),
    })
}
