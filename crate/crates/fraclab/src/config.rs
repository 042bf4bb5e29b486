//! JSON experiment configurations.
//!
//! Each command reads one flat JSON object. Shape errors are reported with
//! their position; semantic problems are collected so a single run lists all
//! of them.

use std::path::{Path, PathBuf};

use fraclab_core::energy::validate_order;
use fraclab_core::kernel::KernelSpec;
use fraclab_core::lab::{
    BVTargetSpec, KernelMode, Regime, SweepSpec, TransitionProblem, TransitionResolution,
};
use fraclab_core::optimizer::MinimizeOptions;
use fraclab_core::potential::DoubleWell;
use fraclab_core::quadrature::QuadratureScheme;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Profile,
    Curve,
    Sweep,
    Recovery,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Profile => "profile",
            Self::Curve => "curve",
            Self::Sweep => "sweep",
            Self::Recovery => "recovery",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentConfig {
    Profile(ProfileConfig),
    Curve(CurveConfig),
    Sweep(SweepConfig),
    Recovery(RecoveryConfig),
}

fn default_mode() -> KernelMode {
    KernelMode::Lambda { lambda: 1.0 }
}

fn default_h() -> f64 {
    1.0 / 32.0
}

fn default_one() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

/// One transition energy `m^omega(a, T)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    pub kernel: KernelSpec,
    #[serde(default = "default_mode")]
    pub mode: KernelMode,
    pub k: usize,
    pub s: f64,
    #[serde(default)]
    pub chi: f64,
    #[serde(default = "default_one")]
    pub omega: f64,
    pub t: f64,
    /// Defaults to `max(3T, 3)`.
    #[serde(default)]
    pub t_out: Option<f64>,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default)]
    pub scheme: QuadratureScheme,
    #[serde(default = "default_true")]
    pub tails: bool,
    /// Also write the optimal profile as `x, v` rows.
    #[serde(default)]
    pub profile_out: Option<PathBuf>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub options: MinimizeOptions,
}

/// `m^omega(a, T)` along ascending clamp lengths on one grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveConfig {
    pub kernel: KernelSpec,
    #[serde(default = "default_mode")]
    pub mode: KernelMode,
    pub k: usize,
    pub s: f64,
    #[serde(default)]
    pub chi: f64,
    #[serde(default = "default_one")]
    pub omega: f64,
    pub t_list: Vec<f64>,
    /// Defaults to `max(3 max T, 3)`.
    #[serde(default)]
    pub t_out: Option<f64>,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default)]
    pub scheme: QuadratureScheme,
    #[serde(default = "default_true")]
    pub tails: bool,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub options: MinimizeOptions,
}

/// Minimal energies of `F_{eps, delta}` along an `eps` list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub kernel: KernelSpec,
    pub k: usize,
    pub s: f64,
    #[serde(default)]
    pub chi: f64,
    pub target: BVTargetSpec,
    pub regime: Regime,
    pub eps_list: Vec<f64>,
    pub n_cells: usize,
    pub t_profile: f64,
    #[serde(default = "default_one")]
    pub window_factor: f64,
    #[serde(default)]
    pub scheme: QuadratureScheme,
    /// Reference energy; computed from transition problems at `resolution`
    /// when absent.
    #[serde(default)]
    pub predicted: Option<f64>,
    #[serde(default)]
    pub resolution: TransitionResolution,
    /// Directory receiving one `x, u` file per sweep point.
    #[serde(default)]
    pub profiles_dir: Option<PathBuf>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub options: MinimizeOptions,
}

/// Energy of the pasted recovery sequence along an `eps` list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoveryConfig {
    pub kernel: KernelSpec,
    pub k: usize,
    pub s: f64,
    #[serde(default)]
    pub chi: f64,
    pub target: BVTargetSpec,
    pub regime: Regime,
    pub eps_list: Vec<f64>,
    pub n_cells: usize,
    /// Resolution of the pasted profiles and of the prediction.
    #[serde(default)]
    pub resolution: TransitionResolution,
    #[serde(default)]
    pub scheme: QuadratureScheme,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub options: MinimizeOptions,
}

/// Collects semantic violations.
#[derive(Default)]
struct Violations(Vec<String>);

impl Violations {
    fn check(&mut self, r: fraclab_core::Result<()>) -> bool {
        match r {
            Ok(()) => true,
            Err(fraclab_core::Error::InvalidArgument(m)) => {
                self.0.push(m);
                false
            }
            Err(e) => {
                self.0.push(e.to_string());
                false
            }
        }
    }

    fn require(&mut self, ok: bool, msg: impl FnOnce() -> String) -> bool {
        if !ok {
            self.0.push(msg());
        }
        ok
    }

    fn finish(self) -> Result<()> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(HarnessError::Config(self.0))
        }
    }

    fn common(
        &mut self,
        kernel: &KernelSpec,
        k: usize,
        s: f64,
        chi: f64,
        workers: Option<usize>,
    ) -> bool {
        let order = self.check(validate_order(k, s));
        let kernel = self.check(kernel.validate());
        let well = self.check(DoubleWell::new(chi).map(|_| ()));
        let workers = self.require(workers.is_none_or(|w| w >= 1), || {
            "workers must be at least 1".into()
        });
        order && kernel && well && workers
    }

    fn options(&mut self, opts: &MinimizeOptions) -> bool {
        self.check(opts.validate())
    }

    fn eps_list(&mut self, eps: &[f64]) -> bool {
        let nonempty = self.require(!eps.is_empty(), || "eps_list is empty".into());
        let range = self.require(
            eps.iter().all(|e| e.is_finite() && *e > 0.0 && *e < 1.0),
            || "eps values must lie in (0, 1)".into(),
        );
        let order = self.require(eps.windows(2).all(|w| w[0] > w[1]), || {
            "eps_list must be strictly descending".into()
        });
        nonempty && range && order
    }

    fn resolution(&mut self, res: &TransitionResolution) -> bool {
        self.require(
            res.t > 0.0 && res.h > 0.0 && res.t_out >= 3.0 * res.t.max(1.0),
            || {
                format!(
                    "resolution needs t > 0, h > 0 and t_out >= max(3t, 3), got t = {}, t_out = {}, h = {}",
                    res.t, res.t_out, res.h
                )
            },
        )
    }

    fn spacing(&mut self, h: f64) -> bool {
        self.require(h.is_finite() && h > 0.0, || {
            format!("grid spacing h must be positive, got {h}")
        })
    }
}

impl ProfileConfig {
    pub fn problem(&self) -> Result<TransitionProblem> {
        let t_out = self.t_out.unwrap_or(3.0 * self.t.max(1.0));
        let mut tp = TransitionProblem::with_spacing(
            self.kernel,
            self.mode,
            self.k,
            self.s,
            self.t,
            t_out,
            self.h,
        );
        tp.omega = self.omega;
        tp.potential = DoubleWell::new(self.chi)?;
        tp.scheme = self.scheme;
        tp.tails = self.tails;
        Ok(tp)
    }

    pub fn validate(&self) -> Result<()> {
        let mut v = Violations::default();
        let ok = v.common(&self.kernel, self.k, self.s, self.chi, self.workers)
            & v.spacing(self.h)
            & v.options(&self.options);
        if ok {
            let tp = self.problem()?;
            v.check(tp.validate());
        }
        v.finish()
    }
}

impl CurveConfig {
    pub fn template(&self) -> Result<TransitionProblem> {
        let t_max = self.t_list.iter().copied().fold(1.0, f64::max);
        let t_out = self.t_out.unwrap_or(3.0 * t_max);
        let t0 = self.t_list.first().copied().unwrap_or(1.0);
        let mut tp = TransitionProblem::with_spacing(
            self.kernel,
            self.mode,
            self.k,
            self.s,
            t0,
            t_out,
            self.h,
        );
        tp.omega = self.omega;
        tp.potential = DoubleWell::new(self.chi)?;
        tp.scheme = self.scheme;
        tp.tails = self.tails;
        Ok(tp)
    }

    pub fn validate(&self) -> Result<()> {
        let mut v = Violations::default();
        let mut ok = v.common(&self.kernel, self.k, self.s, self.chi, self.workers)
            & v.spacing(self.h)
            & v.options(&self.options);
        ok &= v.require(!self.t_list.is_empty(), || "t_list is empty".into());
        ok &= v.require(self.t_list.windows(2).all(|w| w[0] < w[1]), || {
            "t_list must be strictly ascending".into()
        });
        if ok {
            let template = self.template()?;
            for &t in &self.t_list {
                v.check(TransitionProblem { t, ..template }.validate());
            }
        }
        v.finish()
    }
}

impl SweepConfig {
    pub fn spec(&self) -> Result<SweepSpec> {
        Ok(SweepSpec {
            kernel: self.kernel,
            k: self.k,
            s: self.s,
            potential: DoubleWell::new(self.chi)?,
            target: self.target.clone(),
            regime: self.regime,
            eps_list: self.eps_list.clone(),
            n_cells: self.n_cells,
            t_profile: self.t_profile,
            window_factor: self.window_factor,
            scheme: self.scheme,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let mut v = Violations::default();
        let mut ok = v.common(&self.kernel, self.k, self.s, self.chi, self.workers)
            & v.check(self.regime.validate())
            & v.check(self.target.build().map(|_| ()))
            & v.eps_list(&self.eps_list)
            & v.resolution(&self.resolution)
            & v.options(&self.options);
        if let Some(p) = self.predicted {
            ok &= v.require(p.is_finite() && p > 0.0, || {
                format!("predicted must be positive, got {p}")
            });
        }
        if ok {
            v.check(self.spec()?.validate().map(|_| ()));
        }
        v.finish()
    }
}

impl RecoveryConfig {
    pub fn validate(&self) -> Result<()> {
        let mut v = Violations::default();
        let ok = v.common(&self.kernel, self.k, self.s, self.chi, self.workers)
            & v.check(self.regime.validate())
            & v.check(self.target.build().map(|_| ()))
            & v.eps_list(&self.eps_list)
            & v.resolution(&self.resolution)
            & v.options(&self.options)
            & v.require(self.n_cells >= 8, || {
                format!("n_cells must be at least 8, got {}", self.n_cells)
            });
        if ok {
            let target = self.target.build()?;
            let eps = self.eps_list[0];
            let reach = eps * self.resolution.t + self.regime.delta(eps);
            v.require(target.n_jumps() > 0, || {
                "recovery target has no jumps".into()
            });
            v.require(reach < target.separation_radius(), || {
                format!(
                    "eps T + delta = {reach} at eps = {eps} exceeds the target's separation radius {}",
                    target.separation_radius()
                )
            });
        }
        v.finish()
    }
}

impl ExperimentConfig {
    pub fn command(&self) -> Command {
        match self {
            Self::Profile(_) => Command::Profile,
            Self::Curve(_) => Command::Curve,
            Self::Sweep(_) => Command::Sweep,
            Self::Recovery(_) => Command::Recovery,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Profile(c) => c.validate(),
            Self::Curve(c) => c.validate(),
            Self::Sweep(c) => c.validate(),
            Self::Recovery(c) => c.validate(),
        }
    }

    pub fn out(&self) -> Option<&Path> {
        match self {
            Self::Profile(c) => c.out.as_deref(),
            Self::Curve(c) => c.out.as_deref(),
            Self::Sweep(c) => c.out.as_deref(),
            Self::Recovery(c) => c.out.as_deref(),
        }
    }

    pub fn workers(&self) -> Option<usize> {
        match self {
            Self::Profile(c) => c.workers,
            Self::Curve(c) => c.workers,
            Self::Sweep(c) => c.workers,
            Self::Recovery(c) => c.workers,
        }
    }

    /// JSON text that [`parse_config`] maps back to `self`.
    pub fn to_json(&self) -> String {
        let r = match self {
            Self::Profile(c) => serde_json::to_string_pretty(c),
            Self::Curve(c) => serde_json::to_string_pretty(c),
            Self::Sweep(c) => serde_json::to_string_pretty(c),
            Self::Recovery(c) => serde_json::to_string_pretty(c),
        };
        r.expect("configs serialize")
    }
}

fn parse<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    serde_json::from_str(text).map_err(|e| HarnessError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Parses and validates `text` as the configuration of `command`.
pub fn parse_config(text: &str, command: Command, path: &Path) -> Result<ExperimentConfig> {
    let cfg = match command {
        Command::Profile => ExperimentConfig::Profile(parse(text, path)?),
        Command::Curve => ExperimentConfig::Curve(parse(text, path)?),
        Command::Sweep => ExperimentConfig::Sweep(parse(text, path)?),
        Command::Recovery => ExperimentConfig::Recovery(parse(text, path)?),
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path, command: Command) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::io(format!("cannot read {}", path.display()), e))?;
    parse_config(&text, command, path)
}
