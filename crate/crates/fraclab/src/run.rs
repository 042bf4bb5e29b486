use std::path::{Path, PathBuf};

use fraclab_core::grid::{BVTarget, GridProfile};
use fraclab_core::lab::{
    cross_term, predicted_limit, prediction_energies, regime_sweep, transition_energy,
    transition_energy_curve, RecoveryProblem, RecoveryProfiles, SweepSpec,
};
use fraclab_core::potential::DoubleWell;

use crate::config::{CurveConfig, ExperimentConfig, ProfileConfig, RecoveryConfig, SweepConfig};
use crate::error::{HarnessError, Result};
use crate::pool::run_pool;
use crate::table::{emit_csv, Row};

pub const PROFILE_SCHEMA: [&str; 8] = [
    "omega",
    "t",
    "t_out",
    "h",
    "m_hat",
    "converged",
    "iterations",
    "final_grad_norm",
];
pub const CURVE_SCHEMA: [&str; 4] = ["t", "m_hat", "converged", "iterations"];
pub const SWEEP_SCHEMA: [&str; 6] = [
    "eps",
    "delta",
    "ratio",
    "min_energy",
    "predicted",
    "rel_gap",
];
pub const RECOVERY_SCHEMA: [&str; 6] = [
    "eps",
    "delta",
    "energy",
    "predicted",
    "excess",
    "cross_term",
];
pub const NODES_SCHEMA: [&str; 2] = ["x", "u"];

/// Command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct RunContext {
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub quiet: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub out: PathBuf,
    pub rows: usize,
}

impl RunContext {
    fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

/// Runs a validated configuration and writes its CSV.
pub fn run_experiment(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<RunSummary> {
    cfg.validate()?;
    let out = ctx
        .out
        .clone()
        .or_else(|| cfg.out().map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from(format!("{}.csv", cfg.command().name())));
    let workers = ctx.workers.or(cfg.workers()).unwrap_or(1);
    if workers == 0 {
        return Err(HarnessError::Config(vec![
            "workers must be at least 1".into()
        ]));
    }
    let rows = match cfg {
        ExperimentConfig::Profile(c) => run_profile(c, ctx)?,
        ExperimentConfig::Curve(c) => run_curve(c, ctx)?,
        ExperimentConfig::Sweep(c) => run_sweep(c, workers, ctx)?,
        ExperimentConfig::Recovery(c) => run_recovery(c, workers, ctx)?,
    };
    let schema: &[&str] = match cfg {
        ExperimentConfig::Profile(_) => &PROFILE_SCHEMA,
        ExperimentConfig::Curve(_) => &CURVE_SCHEMA,
        ExperimentConfig::Sweep(_) => &SWEEP_SCHEMA,
        ExperimentConfig::Recovery(_) => &RECOVERY_SCHEMA,
    };
    emit_csv(&rows, schema, &out)?;
    ctx.note(format!("wrote {} row(s) to {}", rows.len(), out.display()));
    Ok(RunSummary {
        out,
        rows: rows.len(),
    })
}

fn node_rows(p: &GridProfile) -> Vec<Row> {
    p.grid()
        .nodes()
        .zip(p.values())
        .map(|(x, &u)| vec![x.into(), u.into()])
        .collect()
}

fn run_profile(c: &ProfileConfig, ctx: &RunContext) -> Result<Vec<Row>> {
    let tp = c.problem()?;
    ctx.note(format!(
        "profile: {} cells on (-{}, {})",
        tp.n_cells, tp.t_out, tp.t_out
    ));
    let r = transition_energy(&tp, &c.options)?;
    if let Some(path) = &c.profile_out {
        emit_csv(&node_rows(&r.profile), &NODES_SCHEMA, path)?;
    }
    Ok(vec![vec![
        tp.omega.into(),
        tp.t.into(),
        tp.t_out.into(),
        tp.grid()?.h().into(),
        r.energy.into(),
        r.converged.into(),
        r.iterations.into(),
        r.final_grad_norm.into(),
    ]])
}

fn run_curve(c: &CurveConfig, ctx: &RunContext) -> Result<Vec<Row>> {
    let template = c.template()?;
    ctx.note(format!("curve: {} clamp lengths", c.t_list.len()));
    let curve = transition_energy_curve(&template, &c.t_list, &c.options)?;
    Ok(curve
        .points
        .iter()
        .map(|p| {
            vec![
                p.t.into(),
                p.m_hat.into(),
                p.converged.into(),
                p.iterations.into(),
            ]
        })
        .collect())
}

fn target_counts(target: &BVTarget) -> (usize, usize) {
    (target.ascending().len(), target.descending().len())
}

fn run_sweep(c: &SweepConfig, workers: usize, ctx: &RunContext) -> Result<Vec<Row>> {
    let spec = c.spec()?;
    let target = spec.validate()?;
    let predicted = match c.predicted {
        Some(p) => p,
        None => {
            ctx.note("sweep: computing the predicted limit");
            let e = prediction_energies(
                &c.kernel,
                &c.regime,
                c.k,
                c.s,
                spec.potential,
                &c.resolution,
                &c.options,
            )?;
            let (n_plus, n_minus) = target_counts(&target);
            predicted_limit(&c.kernel, &c.regime, c.k, c.s, e, n_plus, n_minus)
        }
    };
    ctx.note(format!(
        "sweep: {} eps value(s) on {} worker(s)",
        c.eps_list.len(),
        workers
    ));
    let jobs: Vec<SweepSpec> = c
        .eps_list
        .iter()
        .map(|&eps| SweepSpec {
            eps_list: vec![eps],
            ..spec.clone()
        })
        .collect();
    let results = run_pool(jobs, workers, |job| {
        regime_sweep(&job, predicted, &c.options)
    });
    let mut rows = Vec::with_capacity(results.len());
    for (idx, r) in results.into_iter().enumerate() {
        let mut pts = r?;
        let (p, profile) = pts.pop().expect("one point per job");
        if let Some(dir) = &c.profiles_dir {
            emit_csv(
                &node_rows(&profile),
                &NODES_SCHEMA,
                &dir.join(format!("sweep-{idx}.csv")),
            )?;
        }
        rows.push(vec![
            p.eps.into(),
            p.delta.into(),
            p.ratio.into(),
            p.min_energy.into(),
            p.predicted.into(),
            p.rel_gap.into(),
        ]);
    }
    Ok(rows)
}

fn run_recovery(c: &RecoveryConfig, workers: usize, ctx: &RunContext) -> Result<Vec<Row>> {
    let target = c.target.build()?;
    let potential = DoubleWell::new(c.chi)?;
    ctx.note("recovery: computing transition profiles");
    let profiles = RecoveryProfiles::compute(
        &c.kernel,
        &c.regime,
        c.k,
        c.s,
        potential,
        &c.resolution,
        &c.options,
    )?;
    let energies = prediction_energies(
        &c.kernel,
        &c.regime,
        c.k,
        c.s,
        potential,
        &c.resolution,
        &c.options,
    )?;
    let (n_plus, n_minus) = target_counts(&target);
    let predicted = predicted_limit(&c.kernel, &c.regime, c.k, c.s, energies, n_plus, n_minus);
    let problem = RecoveryProblem {
        kernel: c.kernel,
        regime: c.regime,
        k: c.k,
        s: c.s,
        potential,
        n_cells: c.n_cells,
        scheme: c.scheme,
    };
    let results = run_pool(c.eps_list.clone(), workers, |eps| -> Result<Row> {
        let (u, energy) = problem.energy(&target, &profiles, eps)?;
        let cross = cross_term(&problem.functional(eps)?, &u, &target)?;
        Ok(vec![
            eps.into(),
            c.regime.delta(eps).into(),
            energy.into(),
            predicted.into(),
            (energy / predicted - 1.0).into(),
            cross.into(),
        ])
    });
    results.into_iter().collect()
}
