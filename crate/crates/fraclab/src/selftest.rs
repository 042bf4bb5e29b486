//! Small-grid invariant checks run by `fraclab selftest`.

use std::fmt::Write as _;

use fraclab_core::energy::{eval_Phi_T, DiscreteFunctional, EnergyParams};
use fraclab_core::grid::{resample_scaled, GridProfile, UniformGrid};
use fraclab_core::kernel::KernelSpec;
use fraclab_core::lab::{
    transition_energy, transition_energy_curve, transition_energy_multistart, KernelMode,
    TransitionProblem,
};
use fraclab_core::optimizer::{check_gradient, MinimizeOptions};
use fraclab_core::potential::DoubleWell;
use fraclab_core::quadrature::{QuadratureScheme, QuadratureWeights};

use crate::table::{Cell, Row};

pub const REPORT_SCHEMA: [&str; 4] = ["check", "value", "tolerance", "pass"];

/// Faults injected for negative-control tests.
#[derive(Debug, Clone, Copy, Default)]
pub struct SelftestHooks {
    /// Scale the analytic gradient by `1 + 1e-3`.
    pub corrupt_gradient: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelftestReport {
    pub checks: Vec<Check>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// Fixed-width table; identical across runs.
    pub fn table(&self) -> String {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(5);
        let mut out = format!(
            "{:<width$}  {:>10}  {:>10}  result\n",
            "check", "value", "tolerance"
        );
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{:<width$}  {:>10.3e}  {:>10.1e}  {}",
                c.name,
                c.value,
                c.tolerance,
                if c.pass { "pass" } else { "FAIL" }
            );
        }
        let failed = self.checks.iter().filter(|c| !c.pass).count();
        let _ = writeln!(out, "{} check(s), {failed} failed", self.checks.len());
        out
    }

    pub fn rows(&self) -> Vec<Row> {
        self.checks
            .iter()
            .map(|c| {
                vec![
                    Cell::Text(c.name.clone()),
                    c.value.into(),
                    c.tolerance.into(),
                    c.pass.into(),
                ]
            })
            .collect()
    }
}

fn check(name: impl Into<String>, value: f64, tolerance: f64) -> Check {
    Check {
        name: name.into(),
        value,
        tolerance,
        pass: value <= tolerance,
    }
}

fn failed(name: impl Into<String>, err: fraclab_core::Error) -> Check {
    Check {
        name: format!("{} ({err})", name.into()),
        value: f64::INFINITY,
        tolerance: 0.0,
        pass: false,
    }
}

fn run(name: &str, f: impl FnOnce() -> fraclab_core::Result<Check>) -> Check {
    f().unwrap_or_else(|e| failed(name, e))
}

fn gradient(k: usize, s: f64, hooks: SelftestHooks) -> fraclab_core::Result<Check> {
    let grid = UniformGrid::new(0.0, 1.0, 128)?;
    let params = EnergyParams::new(k, s, 0.1, 0.05)?;
    let f = DiscreteFunctional::scaled(
        &grid,
        &params,
        DoubleWell::new(0.4)?,
        KernelSpec::cos_sum(2.5, 1.0)?,
        QuadratureScheme::Corrected,
    )?;
    let p = GridProfile::from_fn(grid, |x| {
        ((x - 0.5) / 0.1).tanh() + 0.2 * (37.0 * x).sin() * (11.0 * x * x).cos()
    })?;
    let scale = if hooks.corrupt_gradient {
        1.0 + 1e-3
    } else {
        1.0
    };
    let err = check_gradient(
        |u| f.value(u),
        |u| f.gradient(u).into_iter().map(|g| g * scale).collect(),
        &p,
    );
    Ok(check(format!("gradient k={k} s={s}"), err, 1e-6))
}

fn scaling_identity() -> fraclab_core::Result<Check> {
    let (k, s, c) = (0, 0.75, 16.0f64);
    let lambda = c.powf(1.0 / (2.0 * (k as f64 + s)));
    let grid = UniformGrid::symmetric(4.0, 256)?;
    let v = GridProfile::from_fn(grid, |x| x.tanh())?;
    let w = DoubleWell::default();
    let scheme = QuadratureScheme::Corrected;
    let lhs = eval_Phi_T(
        &v,
        k,
        s,
        &KernelSpec::constant(c)?,
        &QuadratureWeights::new(&grid, s, scheme)?,
        &w,
    )?;
    let vs = resample_scaled(&v, lambda)?;
    let rhs = lambda
        * eval_Phi_T(
            &vs,
            k,
            s,
            &KernelSpec::unit(),
            &QuadratureWeights::new(vs.grid(), s, scheme)?,
            &w,
        )?;
    Ok(check(
        "scaling identity c=16",
        (lhs - rhs).abs() / rhs,
        1e-12,
    ))
}

fn small_problem(kernel: KernelSpec, mode: KernelMode, t: f64) -> TransitionProblem {
    TransitionProblem::with_spacing(kernel, mode, 0, 0.75, t, 24.0, 0.125)
}

fn monotone_curve(opts: &MinimizeOptions) -> fraclab_core::Result<Check> {
    let tp = small_problem(KernelSpec::unit(), KernelMode::Homogeneous, 2.0);
    let curve = transition_energy_curve(&tp, &[2.0, 4.0, 8.0], opts)?;
    let rise = curve
        .points
        .windows(2)
        .map(|w| w[1].m_hat - w[0].m_hat)
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0);
    Ok(check("T-curve non-increasing", rise, 1e-6))
}

fn symmetry(opts: &MinimizeOptions) -> fraclab_core::Result<Check> {
    let tp = small_problem(
        KernelSpec::cos_sum(2.5, 1.0)?,
        KernelMode::Lambda { lambda: 1.0 },
        4.0,
    );
    let plus = transition_energy(&tp, opts)?.energy;
    let minus = transition_energy(&TransitionProblem { omega: -1.0, ..tp }, opts)?.energy;
    Ok(check("jump symmetry", (plus - minus).abs() / plus, 1e-3))
}

fn sandwich(opts: &MinimizeOptions) -> fraclab_core::Result<Check> {
    let kernel = KernelSpec::cos_sum(2.5, 1.0)?;
    let pa = small_problem(kernel, KernelMode::Lambda { lambda: 1.0 }, 4.0);
    let p1 = small_problem(KernelSpec::unit(), KernelMode::Homogeneous, 4.0);
    let ra = transition_energy(&pa, opts)?;
    let r1 = transition_energy(&p1, opts)?;
    let ma = transition_energy_multistart(&pa, opts, &[&r1.profile])?.energy;
    let m1 = transition_energy_multistart(&p1, opts, &[&ra.profile])?.energy;
    let lo = kernel.alpha_a().min(1.0) * m1;
    let hi = kernel.beta_a().max(1.0) * m1;
    // Distance outside [lo, hi]; zero when sandwiched.
    let outside = (lo - ma).max(ma - hi).max(0.0);
    let positive = ma > 0.0 && m1 > 0.0;
    Ok(check(
        "sandwich bounds",
        if positive { outside } else { f64::INFINITY },
        1e-6,
    ))
}

pub fn selftest_with(hooks: SelftestHooks) -> SelftestReport {
    let opts = MinimizeOptions::default();
    let mut checks = Vec::new();
    for (k, s) in [(0, 0.75), (1, 0.5), (2, 0.3)] {
        checks.push(run("gradient", || gradient(k, s, hooks)));
    }
    checks.push(run("scaling identity", scaling_identity));
    checks.push(run("T-curve", || monotone_curve(&opts)));
    checks.push(run("jump symmetry", || symmetry(&opts)));
    checks.push(run("sandwich bounds", || sandwich(&opts)));
    SelftestReport { checks }
}

pub fn selftest() -> SelftestReport {
    selftest_with(SelftestHooks::default())
}
