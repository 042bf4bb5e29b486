use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::kernel::KernelSpec;
use crate::optimizer::MinimizeOptions;

use super::transition::{transition_energy, KernelMode, TransitionProblem};

/// Relation between `delta` and `eps` along a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum Regime {
    /// `delta = lambda eps`.
    Critical { lambda: f64 },
    /// `delta = eps^2`, so `delta << eps`.
    Supercritical,
    /// `delta = eps^(1/2)`, so `eps << delta`.
    Subcritical,
}

impl Regime {
    pub fn validate(&self) -> Result<()> {
        if let Self::Critical { lambda } = *self {
            ensure!(
                lambda.is_finite() && lambda > 0.0,
                "lambda must be positive, got {lambda}"
            );
        }
        Ok(())
    }

    pub fn delta(&self, eps: f64) -> f64 {
        match *self {
            Self::Critical { lambda } => lambda * eps,
            Self::Supercritical => eps * eps,
            Self::Subcritical => eps.sqrt(),
        }
    }

    /// Coefficient seen by the limiting transition problem.
    pub fn kernel_mode(&self) -> KernelMode {
        match *self {
            Self::Critical { lambda } => KernelMode::Lambda { lambda },
            Self::Supercritical => KernelMode::Supercritical,
            Self::Subcritical => KernelMode::Subcritical,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Critical { .. } => "critical",
            Self::Supercritical => "supercritical",
            Self::Subcritical => "subcritical",
        }
    }
}

/// Transition energies for ascending (`plus`) and descending (`minus`) jumps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionEnergies {
    pub plus: f64,
    pub minus: f64,
}

/// Predicted limit energy of a target with `n_plus` ascending and `n_minus`
/// descending jumps.
///
/// For the critical regime `energies` are the `m_lambda` values of the
/// kernel; otherwise they are the homogeneous (`a = 1`) values, rescaled by
/// `a_bar^{1/(2(k+s))}` or `a_inf^{1/(2(k+s))}`.
pub fn predicted_limit(
    kernel: &KernelSpec,
    regime: &Regime,
    k: usize,
    s: f64,
    energies: TransitionEnergies,
    n_plus: usize,
    n_minus: usize,
) -> f64 {
    let sum = energies.plus * n_plus as f64 + energies.minus * n_minus as f64;
    let exponent = 1.0 / (2.0 * (k as f64 + s));
    match regime {
        Regime::Critical { .. } => sum,
        Regime::Supercritical => kernel.a_bar().powf(exponent) * sum,
        Regime::Subcritical => kernel.a_inf().powf(exponent) * sum,
    }
}

/// Resolution of the transition problems behind a prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionResolution {
    pub t: f64,
    pub t_out: f64,
    pub h: f64,
}

impl Default for TransitionResolution {
    fn default() -> Self {
        Self {
            t: 8.0,
            t_out: 32.0,
            h: 1.0 / 32.0,
        }
    }
}

/// Energies entering [`predicted_limit`] for `regime`, computed at `res`.
#[allow(clippy::too_many_arguments)]
pub fn prediction_energies(
    kernel: &KernelSpec,
    regime: &Regime,
    k: usize,
    s: f64,
    potential: crate::potential::DoubleWell,
    res: &TransitionResolution,
    opts: &MinimizeOptions,
) -> Result<TransitionEnergies> {
    regime.validate()?;
    let mode = match regime {
        Regime::Critical { .. } => regime.kernel_mode(),
        _ => KernelMode::Homogeneous,
    };
    let mut tp = TransitionProblem::with_spacing(*kernel, mode, k, s, res.t, res.t_out, res.h);
    tp.potential = potential;
    let plus = transition_energy(&tp, opts)?.energy;
    tp.omega = -1.0;
    let minus = transition_energy(&tp, opts)?.energy;
    Ok(TransitionEnergies { plus, minus })
}

/// Ordinary least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    ensure!(
        xs.len() == ys.len() && xs.len() >= 2,
        "log-log fit needs at least two paired points"
    );
    ensure!(
        xs.iter().chain(ys).all(|v| *v > 0.0 && v.is_finite()),
        "log-log fit needs positive finite data"
    );
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    ensure!(sxx > 0.0, "log-log fit needs distinct x values");
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_kernel_predictions_agree_across_regimes() {
        let k = KernelSpec::unit();
        let e = TransitionEnergies {
            plus: 2.7,
            minus: 2.7,
        };
        for r in [
            Regime::Critical { lambda: 1.0 },
            Regime::Supercritical,
            Regime::Subcritical,
        ] {
            assert!((predicted_limit(&k, &r, 0, 0.75, e, 1, 0) - 2.7).abs() < 1e-15);
        }
    }

    #[test]
    fn super_over_sub_ratio() {
        let k = KernelSpec::cos_sum(2.5, 1.0).unwrap();
        let e = TransitionEnergies {
            plus: 1.0,
            minus: 1.0,
        };
        let sup = predicted_limit(&k, &Regime::Supercritical, 0, 0.75, e, 1, 0);
        let sub = predicted_limit(&k, &Regime::Subcritical, 0, 0.75, e, 1, 0);
        assert!((sub / sup - 0.2f64.powf(2.0 / 3.0)).abs() < 1e-12);
        assert!((sub / sup - 0.34199518933533946).abs() < 1e-12);
        let two = predicted_limit(&k, &Regime::Supercritical, 0, 0.75, e, 1, 1);
        assert_eq!(two, 2.0 * sup);
    }

    #[test]
    fn regime_rules() {
        assert_eq!(Regime::Critical { lambda: 2.0 }.delta(0.25), 0.5);
        assert_eq!(Regime::Supercritical.delta(0.25), 0.0625);
        assert_eq!(Regime::Subcritical.delta(0.25), 0.5);
        assert!(Regime::Critical { lambda: -1.0 }.validate().is_err());
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-1.5)).collect();
        assert!((loglog_slope(&xs, &ys).unwrap() + 1.5).abs() < 1e-12);
        assert!(loglog_slope(&[1.0], &[1.0]).is_err());
        assert!(loglog_slope(&[1.0, 2.0], &[0.0, 1.0]).is_err());
    }
}
