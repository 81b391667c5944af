//! One runner per command; each returns a fixed-header table.

use anyhow::Result;
use fkpath::feynmankac::{estimate_propagator_bridge, estimate_propagator_girsanov, path_moments, quench_harmonic, BridgeSettings, EnsembleSettings};
use fkpath::kernels::{heat_kernel, mehler_1d, ou_kernel_1d};
use fkpath::rng::domain;
use fkpath::spde::{evolve_field, sample_q_wiener, spatial_grid};
use fkpath::verify::{run_suite, VerifyOptions};
use fkpath::wiener::Modes;
use fkpath::{DiffusionSpec, Execution, RngPolicy, TimeGrid};
use serde_json::json;

use crate::config::{
    Command, DriftConfig, ExperimentConfig, Invalid, KernelConfig, KernelKind, LatticeConfig, McConfig, PotentialConfig, QuenchConfig, SpdeConfig,
    VerifyConfig,
};
use crate::output::{Cell, Table};

pub const KERNEL_COLUMNS: &[&str] = &["t", "x", "y", "value"];
pub const MC_COLUMNS: &[&str] = &["mean", "stderr", "n_paths"];
pub const LATTICE_COLUMNS: &[&str] = &["t", "site", "mean", "stderr"];
pub const QUENCH_COLUMNS: &[&str] = &["t", "y", "value"];
pub const SPDE_COLUMNS: &[&str] = &["t", "x", "value"];
pub const VERIFY_COLUMNS: &[&str] = &["id", "name", "passed", "detail"];

/// Outcome of a run; `failed` marks a completed run whose checks did not all pass.
pub struct Outcome {
    pub table: Table,
    pub failed: bool,
}

impl From<Table> for Outcome {
    fn from(table: Table) -> Self {
        Self { table, failed: false }
    }
}

fn section<T>(section: &Option<T>, command: Command) -> Result<&T, Invalid> {
    section.as_ref().ok_or_else(|| Invalid(format!("command '{0}' needs a '{0}' section", command.name())))
}

fn grid(cfg: &ExperimentConfig) -> Result<TimeGrid> {
    Ok(TimeGrid::new(cfg.grid.t, cfg.grid.steps)?)
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    Ok(match cfg.command {
        Command::Kernel => kernel(cfg, section(&cfg.kernel, cfg.command)?)?.into(),
        Command::Mc => mc(cfg, section(&cfg.mc, cfg.command)?)?.into(),
        Command::Lattice => lattice(cfg, section(&cfg.lattice, cfg.command)?)?.into(),
        Command::Quench => quench(cfg, section(&cfg.quench, cfg.command)?)?.into(),
        Command::Spde => spde(cfg, section(&cfg.spde, cfg.command)?)?,
        Command::Verify => verify(cfg, &cfg.verify.unwrap_or_default())?,
    })
}

fn kernel(cfg: &ExperimentConfig, k: &KernelConfig) -> Result<Table> {
    let grid = grid(cfg)?;
    let ys = k.y.points()?;
    let mut table = Table::new(KERNEL_COLUMNS);
    for n in 1..=grid.steps {
        let t = grid.time(n);
        for &y in &ys {
            let value = match k.model {
                KernelKind::Heat => heat_kernel(1, t, &[k.x], &[y])?,
                KernelKind::Ou { theta } => ou_kernel_1d(theta, t, k.x, y)?,
                KernelKind::Mehler { omega } => mehler_1d(omega, t, k.x, y)?,
            };
            table.push(vec![Cell::Num(t), Cell::Num(k.x), Cell::Num(y), Cell::Num(value)]);
        }
    }
    Ok(table)
}

fn mc(cfg: &ExperimentConfig, c: &McConfig) -> Result<Table> {
    let m = c.x.len();
    if m == 0 || c.y.len() != m {
        return Err(Invalid(format!("mc.x and mc.y must be nonempty and of equal length, got {} and {}", m, c.y.len())).into());
    }
    let mut spec = DiffusionSpec::new(m);
    if let PotentialConfig::Harmonic { omega } = c.potential {
        spec = spec.with_potential(move |x| -0.5 * omega * omega * x.iter().map(|v| v * v).sum::<f64>());
    }
    if let DriftConfig::Linear { theta } = c.drift {
        spec = spec.with_drift(move |x, out| {
            for (o, v) in out.iter_mut().zip(x) {
                *o = -theta * v;
            }
        });
    }
    let s = BridgeSettings {
        t: cfg.grid.t,
        n_paths: cfg.sampling.n_paths,
        modes: cfg.sampling.modes.map_or(Modes::Full, Modes::Finite),
        quad_steps: cfg.grid.steps,
        seed: cfg.sampling.seed,
        exec: Execution::Parallel,
    };
    let est = match c.drift {
        DriftConfig::None => estimate_propagator_bridge(&spec, &c.x, &c.y, &s)?,
        DriftConfig::Linear { .. } => estimate_propagator_girsanov(&spec, &c.x, &c.y, &s, c.rule.into())?,
    };
    let mut table = Table::new(MC_COLUMNS);
    table.push(vec![Cell::Num(est.mean), Cell::Num(est.stderr), Cell::Int(est.n_paths as u64)]);
    table.extra.insert("echo".into(), serde_json::to_value(&est.echo)?);
    Ok(table)
}

fn lattice(cfg: &ExperimentConfig, c: &LatticeConfig) -> Result<Table> {
    let spec = c.model.build()?;
    let m = spec.dim();
    let x0 = match c.x0.len() {
        1 => vec![c.x0[0]; m],
        n if n == m => c.x0.clone(),
        n => return Err(Invalid(format!("lattice.x0 must have 1 or {m} entries, got {n}")).into()),
    };
    let s = EnsembleSettings { grid: grid(cfg)?, n_paths: cfg.sampling.n_paths, seed: cfg.sampling.seed, exec: Execution::Parallel };
    let moments = path_moments(&spec, &x0, &s)?;
    let mut table = Table::new(LATTICE_COLUMNS);
    for n in 0..=s.grid.steps {
        let t = s.grid.time(n);
        for j in 0..m {
            table.push(vec![Cell::Num(t), Cell::Int(j as u64), Cell::Num(moments.mean[[n, j]]), Cell::Num(moments.stderr[[n, j]])]);
        }
    }
    Ok(table)
}

fn quench(cfg: &ExperimentConfig, c: &QuenchConfig) -> Result<Table> {
    if c.axis >= c.omega.len() {
        return Err(Invalid(format!("quench.axis must be below {}, got {}", c.omega.len(), c.axis)).into());
    }
    let grid = grid(cfg)?;
    let ys = c.y.points()?;
    let mut point = vec![0.0; c.omega.len()];
    let mut table = Table::new(QUENCH_COLUMNS);
    for n in 0..=grid.steps {
        let t = grid.time(n);
        for &y in &ys {
            point[c.axis] = y;
            let value = quench_harmonic(c.quenched, &c.omega, t, &point)?;
            table.push(vec![Cell::Num(t), Cell::Num(y), Cell::Num(value)]);
        }
    }
    Ok(table)
}

fn spde(cfg: &ExperimentConfig, c: &SpdeConfig) -> Result<Outcome> {
    if c.nodes < 3 || c.every == 0 {
        return Err(Invalid(format!("spde needs nodes ≥ 3 and every ≥ 1, got {} and {}", c.nodes, c.every)).into());
    }
    let grid = grid(cfg)?;
    let xs = spatial_grid(c.half_width, c.nodes);
    let phi0: Vec<f64> = xs.iter().map(|&x| c.initial.eval(x)).collect();
    let field = if c.noise_modes == 0 {
        None
    } else {
        let mut rng = RngPolicy::new(cfg.sampling.seed).stream(domain::Q_WIENER, 0);
        Some(sample_q_wiener(&mut rng, c.half_width, &grid, c.noise_modes)?)
    };
    let history = evolve_field(c.equation, &phi0, c.half_width, field.as_ref(), &grid)?;
    let mut table = Table::new(SPDE_COLUMNS);
    for n in (0..=grid.steps).filter(|n| n % c.every == 0 || *n == grid.steps) {
        let t = grid.time(n);
        for (i, &x) in xs.iter().enumerate() {
            table.push(vec![Cell::Num(t), Cell::Num(x), Cell::Num(history[[n, i]])]);
        }
    }
    Ok(table.into())
}

fn verify(cfg: &ExperimentConfig, v: &VerifyConfig) -> Result<Outcome> {
    let opts = VerifyOptions { seed: cfg.sampling.seed, exec: Execution::Parallel, n_paths: v.n_paths };
    let checks = run_suite(v.suite, &opts)?;
    let mut table = Table::new(VERIFY_COLUMNS);
    for c in &checks {
        eprintln!("{}", c.summary());
        table.push(vec![Cell::Int(c.id as u64), Cell::Text(c.name.into()), Cell::Bool(c.passed), Cell::Text(c.detail.clone())]);
    }
    table.extra.insert("metrics".into(), json!(checks.iter().map(|c| json!({"id": c.id, "metrics": c.metrics})).collect::<Vec<_>>()));
    let failed = checks.iter().any(|c| !c.passed);
    Ok(Outcome { table, failed })
}
