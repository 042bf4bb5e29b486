use serde::{Deserialize, Serialize};

use crate::energy::{DiscreteFunctional, EnergyParams};
use crate::error::{ensure, Error, Result};
use crate::grid::{BVTarget, CubicSpline, GridProfile, UniformGrid};
use crate::kernel::KernelSpec;
use crate::optimizer::MinimizeOptions;
use crate::potential::DoubleWell;
use crate::quadrature::QuadratureScheme;

use super::regime::{loglog_slope, Regime, TransitionResolution};
use super::transition::{transition_energy, TransitionProblem};

/// Optimal `T`-clamped transition profiles for both jump directions.
#[derive(Debug, Clone)]
pub struct RecoveryProfiles {
    pub plus: GridProfile,
    pub minus: GridProfile,
    pub t: f64,
    pub m_plus: f64,
    pub m_minus: f64,
}

impl RecoveryProfiles {
    /// Solves the transition problems whose kernel matches `regime`.
    pub fn compute(
        kernel: &KernelSpec,
        regime: &Regime,
        k: usize,
        s: f64,
        potential: DoubleWell,
        res: &TransitionResolution,
        opts: &MinimizeOptions,
    ) -> Result<Self> {
        regime.validate()?;
        let mut tp = TransitionProblem::with_spacing(
            *kernel,
            regime.kernel_mode(),
            k,
            s,
            res.t,
            res.t_out,
            res.h,
        );
        tp.potential = potential;
        let plus = transition_energy(&tp, opts)?;
        tp.omega = -1.0;
        let minus = transition_energy(&tp, opts)?;
        Ok(Self {
            plus: plus.profile,
            minus: minus.profile,
            t: res.t,
            m_plus: plus.energy,
            m_minus: minus.energy,
        })
    }

    /// `m_plus #S+ + m_minus #S-` for `target`.
    pub fn predicted(&self, target: &BVTarget) -> f64 {
        let signs = target.jump_signs();
        let up = signs.iter().filter(|&&s| s > 0).count() as f64;
        let down = signs.len() as f64 - up;
        self.m_plus * up + self.m_minus * down
    }
}

/// Shifted jump location `t^delta`.
///
/// Multiples of `delta` put the profile centre on a period of the kernel;
/// the subcritical rule adds the diagonal argmin `r`.
pub fn shifted_center(t: f64, delta: f64, regime: &Regime, r: f64) -> f64 {
    match regime {
        Regime::Subcritical => delta * ((t / delta - r).floor() + r),
        _ => delta * (t / delta).floor(),
    }
}

fn check_recovery_fit(target: &BVTarget, reach: f64) -> Result<()> {
    let locs = target.jump_locations();
    let mut pairs: Vec<(f64, f64, f64)> = locs
        .windows(2)
        .map(|w| (w[0], w[1], 0.5 * (w[1] - w[0])))
        .collect();
    if let (Some(&first), Some(&last)) = (locs.first(), locs.last()) {
        pairs.push((0.0, first, first));
        pairs.push((last, 1.0, 1.0 - last));
    }
    for (a, b, room) in pairs {
        if room <= reach {
            return Err(Error::InvalidArgument(format!(
                "eps T + delta = {reach} does not fit between points {a} and {b} (room {room})"
            )));
        }
    }
    Ok(())
}

/// Pastes the rescaled transition profiles at the shifted jumps of `target`.
///
/// On each interval `I_j` the profile is `v_j((x - t_j^delta) / eps)` with
/// `v_j` the profile matching the direction of jump `j`.
pub fn build_recovery(
    target: &BVTarget,
    profiles: &RecoveryProfiles,
    grid: &UniformGrid,
    eps: f64,
    regime: &Regime,
    kernel: &KernelSpec,
) -> Result<GridProfile> {
    regime.validate()?;
    ensure!(
        eps.is_finite() && eps > 0.0,
        "eps must be positive, got {eps}"
    );
    ensure!(target.n_jumps() > 0, "recovery target has no jumps");
    let delta = regime.delta(eps);
    check_recovery_fit(target, eps * profiles.t + delta)?;
    let r = kernel.diagonal_argmin();
    let plus = CubicSpline::new(&profiles.plus);
    let minus = CubicSpline::new(&profiles.minus);
    let bounds = target.interval_bounds();
    let centers: Vec<f64> = target
        .jump_locations()
        .iter()
        .map(|&t| shifted_center(t, delta, regime, r))
        .collect();
    let signs = target.jump_signs();
    GridProfile::from_fn(*grid, |x| {
        let j = bounds[1..bounds.len() - 1].partition_point(|&b| b <= x);
        let y = (x - centers[j]) / eps;
        if signs[j] > 0 {
            plus.eval(y)
        } else {
            minus.eval(y)
        }
    })
}

/// The physical problem a recovery sequence is evaluated in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryProblem {
    pub kernel: KernelSpec,
    pub regime: Regime,
    pub k: usize,
    pub s: f64,
    #[serde(default)]
    pub potential: DoubleWell,
    /// Cells on `(0, 1)`.
    pub n_cells: usize,
    #[serde(default)]
    pub scheme: QuadratureScheme,
}

impl RecoveryProblem {
    pub fn functional(&self, eps: f64) -> Result<DiscreteFunctional> {
        let grid = UniformGrid::new(0.0, 1.0, self.n_cells)?;
        let params = EnergyParams::new(self.k, self.s, eps, self.regime.delta(eps))?;
        DiscreteFunctional::scaled(&grid, &params, self.potential, self.kernel, self.scheme)
    }

    /// Recovery profile at `eps` and its energy `F_{eps, delta}`.
    pub fn energy(
        &self,
        target: &BVTarget,
        profiles: &RecoveryProfiles,
        eps: f64,
    ) -> Result<(GridProfile, f64)> {
        let f = self.functional(eps)?;
        let u = build_recovery(target, profiles, f.grid(), eps, &self.regime, &self.kernel)?;
        let e = f.value(u.values());
        Ok((u, e))
    }
}

/// Nonlocal energy of `u` restricted to ordered pairs in distinct intervals of
/// `target`.
pub fn cross_term(f: &DiscreteFunctional, u: &GridProfile, target: &BVTarget) -> Result<f64> {
    ensure!(
        u.grid() == f.grid(),
        "profile and functional live on different grids"
    );
    let bounds = target.interval_bounds();
    let inner = &bounds[1..bounds.len() - 1];
    let label: Vec<usize> = f
        .grid()
        .nodes()
        .map(|x| inner.partition_point(|&b| b <= x))
        .collect();
    let g = f.diff().apply(u.values());
    let n = g.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            if label[i] != label[j] {
                let d = g[i] - g[j];
                total += f.pair_coefficient(i, j) * d * d;
            }
        }
    }
    Ok(2.0 * f.c_nonlocal() * total)
}

/// Cross term of the recovery sequence at each `eps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossTermProbe {
    pub eps: Vec<f64>,
    pub cross: Vec<f64>,
    pub nonlocal: Vec<f64>,
    /// Log-log slope of `cross` against `eps`; `None` when some value is 0.
    pub slope: Option<f64>,
}

pub fn cross_term_probe(
    problem: &RecoveryProblem,
    target: &BVTarget,
    profiles: &RecoveryProfiles,
    eps_list: &[f64],
) -> Result<CrossTermProbe> {
    ensure!(!eps_list.is_empty(), "eps list is empty");
    let mut cross = Vec::with_capacity(eps_list.len());
    let mut nonlocal = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let f = problem.functional(eps)?;
        let u = build_recovery(
            target,
            profiles,
            f.grid(),
            eps,
            &problem.regime,
            &problem.kernel,
        )?;
        cross.push(cross_term(&f, &u, target)?);
        nonlocal.push(f.parts(u.values()).nonlocal);
    }
    let slope = if eps_list.len() >= 2 && cross.iter().all(|c| *c > 0.0) {
        Some(loglog_slope(eps_list, &cross)?)
    } else {
        None
    };
    Ok(CrossTermProbe {
        eps: eps_list.to_vec(),
        cross,
        nonlocal,
        slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shift_examples() {
        let sup = Regime::Supercritical;
        assert!((shifted_center(0.37, 0.1, &sup, 0.0) - 0.3).abs() < 1e-15);
        assert_eq!(shifted_center(0.5, 0.1, &sup, 0.0), 0.5);
        let t = shifted_center(0.37, 0.1, &Regime::Subcritical, 0.5);
        assert!((t - 0.35).abs() < 1e-15);
    }

    fn ramp_profiles(t: f64) -> RecoveryProfiles {
        let g = UniformGrid::symmetric(3.0 * t, 96).unwrap();
        let plus = GridProfile::from_fn(g, |x| (x / t).clamp(-1.0, 1.0)).unwrap();
        let minus = GridProfile::from_fn(g, |x| -(x / t).clamp(-1.0, 1.0)).unwrap();
        RecoveryProfiles {
            plus,
            minus,
            t,
            m_plus: 1.0,
            m_minus: 1.0,
        }
    }

    #[test]
    fn recovery_equals_target_outside_windows() {
        let target = BVTarget::new(&[(0.3, 1), (0.7, -1)], -1).unwrap();
        let profiles = ramp_profiles(2.0);
        let grid = UniformGrid::new(0.0, 1.0, 512).unwrap();
        let eps = 1.0 / 64.0;
        let regime = Regime::Critical { lambda: 1.0 };
        let u =
            build_recovery(&target, &profiles, &grid, eps, &regime, &KernelSpec::unit()).unwrap();
        let reach = eps * 2.0 + regime.delta(eps);
        for (x, &v) in grid.nodes().zip(u.values()) {
            if target
                .jump_locations()
                .iter()
                .all(|t| (x - t).abs() > reach)
            {
                assert!((v - target.value_at(x)).abs() < 1e-12, "x {x} v {v}");
            }
        }
    }

    #[test]
    fn rejects_windows_that_do_not_fit() {
        let target = BVTarget::new(&[(0.45, 1), (0.55, -1)], -1).unwrap();
        let grid = UniformGrid::new(0.0, 1.0, 64).unwrap();
        let err = build_recovery(
            &target,
            &ramp_profiles(4.0),
            &grid,
            0.02,
            &Regime::Supercritical,
            &KernelSpec::unit(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("0.45 and 0.55"), "{err}");
    }

    #[test]
    fn single_jump_has_no_cross_term() {
        let target = BVTarget::new(&[(0.5, 1)], -1).unwrap();
        let p = RecoveryProblem {
            kernel: KernelSpec::unit(),
            regime: Regime::Critical { lambda: 1.0 },
            k: 1,
            s: 0.5,
            potential: DoubleWell::default(),
            n_cells: 128,
            scheme: QuadratureScheme::Corrected,
        };
        let probe = cross_term_probe(&p, &target, &ramp_profiles(2.0), &[0.0625, 0.03125]).unwrap();
        assert_eq!(probe.cross, vec![0.0, 0.0]);
        assert!(probe.slope.is_none());
    }

    #[test]
    fn cross_term_is_bounded_by_nonlocal_energy() {
        let target = BVTarget::new(&[(0.3, 1), (0.7, -1)], -1).unwrap();
        let p = RecoveryProblem {
            kernel: KernelSpec::cos_sum(2.5, 1.0).unwrap(),
            regime: Regime::Critical { lambda: 1.0 },
            k: 1,
            s: 0.5,
            potential: DoubleWell::default(),
            n_cells: 256,
            scheme: QuadratureScheme::Corrected,
        };
        let probe =
            cross_term_probe(&p, &target, &ramp_profiles(2.0), &[0.03125, 0.015625]).unwrap();
        for (c, n) in probe.cross.iter().zip(&probe.nonlocal) {
            assert!(*c > 0.0 && c <= n);
        }
    }
}
