use serde::{Deserialize, Serialize};

use crate::energy::{tail_correction, DiscreteFunctional, TailSpec};
use crate::error::{ensure, Result};
use crate::grid::{GridProfile, UniformGrid};
use crate::kernel::KernelSpec;
use crate::optimizer::MinimizeOptions;
use crate::potential::DoubleWell;
use crate::quadrature::QuadratureScheme;

use super::regime::{loglog_slope, TransitionResolution};
use super::transition::{transition_energy, KernelMode, TransitionProblem};

/// `Phi(v) - Phi_T(v)` for each `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailDecayProbe {
    pub t: Vec<f64>,
    pub difference: Vec<f64>,
    /// Log-log slope against `T - c'`.
    pub slope: f64,
}

/// Extends `p` by its end values to the symmetric grid `(-t, t)` with the
/// same spacing.
pub fn pad_symmetric(p: &GridProfile, t: f64) -> Result<GridProfile> {
    let g = p.grid();
    let h = g.h();
    ensure!(
        t >= g.x_hi() && -t <= g.x_lo(),
        "padding length {t} does not cover the profile grid"
    );
    let cells = 2.0 * t / h;
    let shift = (g.x_lo() + t) / h;
    ensure!(
        (cells - cells.round()).abs() < 1e-9 && (shift - shift.round()).abs() < 1e-9,
        "padding length {t} is not aligned with spacing {h}"
    );
    let padded = UniformGrid::symmetric(t, cells.round() as usize)?;
    let shift = shift.round() as usize;
    let v = p.values();
    let n = v.len();
    let values = (0..padded.n_nodes())
        .map(|i| {
            if i < shift {
                v[0]
            } else {
                v[(i - shift).min(n - 1)]
            }
        })
        .collect();
    GridProfile::new(padded, values)
}

/// Energy of a profile clamped to `±1` outside `(-c', c')` lost by truncating
/// the domain to `(-T, T)`.
#[allow(clippy::too_many_arguments)]
pub fn tail_decay_probe(
    p: &GridProfile,
    c_prime: f64,
    c_dprime: f64,
    k: usize,
    s: f64,
    kernel: &KernelSpec,
    t_list: &[f64],
    scheme: QuadratureScheme,
) -> Result<TailDecayProbe> {
    ensure!(
        c_prime > 0.0 && c_dprime > 0.0,
        "c' and c'' must be positive"
    );
    ensure!(t_list.len() >= 2, "tail probe needs at least two lengths");
    let bound = c_prime.max(3.0 * c_dprime);
    for &t in t_list {
        ensure!(t > bound, "T = {t} must exceed max(c', 3c'') = {bound}");
    }
    let v = p.values();
    let (left, right) = (v[0], v[v.len() - 1]);
    for (x, &u) in p.grid().nodes().zip(v) {
        if x.abs() >= c_prime {
            let expect = if x < 0.0 { left } else { right };
            ensure!(
                u == expect && expect.abs() == 1.0,
                "profile is not clamped to ±1 outside (-c', c') at x = {x}"
            );
        }
    }
    let mut difference = Vec::with_capacity(t_list.len());
    for &t in t_list {
        let padded = pad_symmetric(p, t)?;
        difference.push(tail_correction(
            &padded,
            k,
            s,
            kernel,
            (left, right),
            scheme,
        )?);
    }
    let shifted: Vec<f64> = t_list.iter().map(|t| t - c_prime).collect();
    let slope = loglog_slope(&shifted, &difference)?;
    Ok(TailDecayProbe {
        t: t_list.to_vec(),
        difference,
        slope,
    })
}

/// Transition energies at `lambda (1 - p)`, `lambda`, `lambda (1 + p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaProbe {
    pub lambdas: [f64; 3],
    pub m_hat: [f64; 3],
    /// `(max - min) / m_hat(lambda)`.
    pub spread: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn lambda_continuity_probe(
    kernel: &KernelSpec,
    lambda: f64,
    rel_perturbation: f64,
    k: usize,
    s: f64,
    potential: DoubleWell,
    res: &TransitionResolution,
    opts: &MinimizeOptions,
) -> Result<LambdaProbe> {
    ensure!(
        lambda.is_finite() && lambda > 0.0,
        "lambda must be positive"
    );
    ensure!(
        (0.0..1.0).contains(&rel_perturbation),
        "perturbation must lie in [0, 1)"
    );
    let lambdas = [
        lambda * (1.0 - rel_perturbation),
        lambda,
        lambda * (1.0 + rel_perturbation),
    ];
    let mut m_hat = [0.0; 3];
    for (m, &l) in m_hat.iter_mut().zip(&lambdas) {
        let mut tp = TransitionProblem::with_spacing(
            *kernel,
            KernelMode::Lambda { lambda: l },
            k,
            s,
            res.t,
            res.t_out,
            res.h,
        );
        tp.potential = potential;
        *m = transition_energy(&tp, opts)?.energy;
    }
    let hi = m_hat.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = m_hat.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(LambdaProbe {
        lambdas,
        m_hat,
        spread: (hi - lo) / m_hat[1],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

/// Rescaled functional used to score flattened profiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlattenSetup {
    pub k: usize,
    pub s: f64,
    pub kernel: KernelSpec,
    #[serde(default)]
    pub potential: DoubleWell,
    #[serde(default)]
    pub scheme: QuadratureScheme,
    /// Closeness required on the flattening window.
    pub eta: f64,
}

/// `1` below 0, `0` above 1, quintic (C^2) in between.
fn cutoff(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

fn flatten_energy(setup: &FlattenSetup, p: &GridProfile) -> Result<f64> {
    let v = p.values();
    let f = DiscreteFunctional::rescaled(
        p.grid(),
        setup.k,
        setup.s,
        setup.kernel,
        1.0,
        setup.potential,
        setup.scheme,
    )?
    .with_tail(TailSpec::new(v[0], v[v.len() - 1]))?;
    Ok(f.value(v))
}

/// Replaces the tail of `p` beyond `c'` by `target_sign`, choosing the best
/// of `n` cutoffs supported on equal subdivisions of `[c'', c']`.
///
/// Returns the flattened profile and `Phi(v) / Phi(p)`.
pub fn flatten_tail(
    p: &GridProfile,
    c_dprime: f64,
    c_prime: f64,
    n: usize,
    side: Side,
    target_sign: f64,
    setup: &FlattenSetup,
) -> Result<(GridProfile, f64)> {
    ensure!(n >= 1, "need at least one cutoff");
    ensure!(
        target_sign == 1.0 || target_sign == -1.0,
        "target sign must be ±1"
    );
    ensure!(
        c_dprime >= 0.0 && c_prime - c_dprime >= 1.0,
        "flattening window [{c_dprime}, {c_prime}] must have length at least 1"
    );
    let g = p.grid();
    ensure!(
        match side {
            Side::Right => c_prime <= g.x_hi(),
            Side::Left => -c_prime >= g.x_lo(),
        },
        "flattening window leaves the grid"
    );
    // Signed distance into the tail: positive beyond the origin on `side`.
    let depth = |x: f64| match side {
        Side::Right => x,
        Side::Left => -x,
    };
    for (x, &u) in g.nodes().zip(p.values()) {
        let d = depth(x);
        if (c_dprime..=c_prime).contains(&d) {
            ensure!(
                (u - target_sign).abs() <= setup.eta,
                "profile is not within {} of {target_sign} at x = {x}",
                setup.eta
            );
        }
    }
    let base = flatten_energy(setup, p)?;
    ensure!(base > 0.0, "profile has zero energy");
    let width = (c_prime - c_dprime) / n as f64;
    let mut best: Option<(GridProfile, f64)> = None;
    for j in 0..n {
        let a = c_dprime + width * j as f64;
        let values = g
            .nodes()
            .zip(p.values())
            .map(|(x, &u)| {
                let phi = cutoff((depth(x) - a) / width);
                if phi == 1.0 {
                    u
                } else {
                    phi * u + (1.0 - phi) * target_sign
                }
            })
            .collect();
        let v = p.with_values(values)?;
        let e = flatten_energy(setup, &v)?;
        if best.as_ref().is_none_or(|(_, b)| e < *b) {
            best = Some((v, e));
        }
    }
    let (v, e) = best.expect("n >= 1");
    Ok((v, e / base))
}
