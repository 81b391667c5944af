//! Monte Carlo propagators and expectation values.
//!
//! Pinned estimators draw bridges from [`BridgeSampler`] and average
//! `exp(log-weight)` with the weights shifted by their maximum. Unpinned
//! estimators run Euler–Maruyama from a fixed start. Path `i` always uses
//! stream `i` of its domain, so estimates do not depend on the worker count.

use ndarray::Array2;

use crate::diffusion::{default_step, DiffusionSpec, Path, TimeGrid};
use crate::error::{Error, Result};
use crate::integrate::{euler_maruyama_into, StepScratch};
use crate::kernels::heat_kernel;
use crate::parallel::{map_indexed, pairwise_sum, try_map_indexed, Execution};
use crate::rng::{domain, RngPolicy};
use crate::stats::{jackknife_ratio, MCEstimate, RatioEstimate, RunEcho};
use crate::transform::divergence;
use crate::wiener::{fill_increments, BridgeSampler, BridgeScratch, Modes};

/// Sampling settings shared by the pinned estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BridgeSettings {
    pub t: f64,
    pub n_paths: usize,
    pub modes: Modes,
    /// Bridge nodes minus one; also the quadrature resolution of every time integral.
    pub quad_steps: usize,
    pub seed: u64,
    pub exec: Execution,
}

impl BridgeSettings {
    fn echo(&self) -> RunEcho {
        RunEcho { horizon: self.t, steps: self.quad_steps, modes: self.modes.count(), seed: self.seed }
    }

    fn sampler(&self) -> Result<BridgeSampler> {
        if self.n_paths < 2 {
            return Err(Error::Config(format!("need at least 2 paths, got {}", self.n_paths)));
        }
        BridgeSampler::new(self.t, self.quad_steps, self.modes)
    }
}

/// Discretization of the stochastic integral in the Girsanov weight.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum StochasticIntegral {
    /// `Σ b̃(y_n)·Δy_n`.
    #[default]
    LeftPoint,
    /// `Σ b̃(ȳ_n)·Δy_n − ½∫∇·b̃ ds` at midpoints `ȳ_n`.
    Midpoint,
}

fn check_endpoints(op: &'static str, spec: &DiffusionSpec, x: &[f64], y: &[f64]) -> Result<()> {
    let m = spec.dim();
    if x.len() != m || y.len() != m {
        return Err(Error::domain(op, format!("endpoints must have length {m}, got {} and {}", x.len(), y.len())));
    }
    Ok(())
}

/// Trapezoid rule for `∫u` over the rows of a `(N+1) × M` buffer.
fn trapezoid_potential(spec: &DiffusionSpec, values: &[f64], m: usize, delta: f64) -> f64 {
    let n = values.len() / m - 1;
    let mut acc = 0.5 * (spec.potential(&values[..m]) + spec.potential(&values[n * m..]));
    for i in 1..n {
        acc += spec.potential(&values[i * m..(i + 1) * m]);
    }
    delta * acc
}

fn finite_or(point: &[f64], v: f64) -> Result<f64> {
    if v.is_nan() {
        Err(Error::NonFinite { point: point.to_vec() })
    } else {
        Ok(v)
    }
}

/// `K(y, x | t)` for `½Δ + u` as the heat kernel times the bridge average of `exp(∫u)`.
pub fn estimate_propagator_bridge(spec: &DiffusionSpec, x: &[f64], y: &[f64], s: &BridgeSettings) -> Result<MCEstimate> {
    const OP: &str = "estimate_propagator_bridge";
    if !spec.has_zero_drift() || !spec.has_unit_sigma() {
        return Err(Error::precondition(OP, "spec must have zero drift and σ = I"));
    }
    check_endpoints(OP, spec, x, y)?;
    let sampler = s.sampler()?;
    let prefactor = heat_kernel(spec.dim(), s.t, x, y)?;
    let log_weights = if spec.has_potential() {
        bridge_log_weights(spec, x, y, s, &sampler, |_, _| Ok(0.0))?
    } else {
        vec![0.0; s.n_paths]
    };
    MCEstimate::from_log_weights(&log_weights, prefactor, s.echo())
}

/// `K(y, x | t)` for a unit-diffusion spec with drift `b̃`, by Girsanov reweighting of bridges.
///
/// Log-weight `Σ b̃·Δy − ½∫|b̃|² ds + ∫u ds`, times the heat-kernel prefactor.
/// Time integrals use the trapezoid rule on the nodes, or the midpoint rule
/// alongside [`StochasticIntegral::Midpoint`].
pub fn estimate_propagator_girsanov(
    spec: &DiffusionSpec,
    x: &[f64],
    y: &[f64],
    s: &BridgeSettings,
    rule: StochasticIntegral,
) -> Result<MCEstimate> {
    const OP: &str = "estimate_propagator_girsanov";
    if !spec.has_unit_sigma() {
        return Err(Error::precondition(OP, "spec must have σ = I"));
    }
    check_endpoints(OP, spec, x, y)?;
    let sampler = s.sampler()?;
    let prefactor = heat_kernel(spec.dim(), s.t, x, y)?;
    let m = spec.dim();
    let delta = s.t / s.quad_steps as f64;
    let q = s.quad_steps;
    let drift_term = |values: &[f64], buf: &mut Vec<f64>| -> Result<f64> {
        buf.resize(2 * m, 0.0);
        let (b, mid) = buf.split_at_mut(m);
        let node = |n: usize| &values[n * m..(n + 1) * m];
        let norm2 = |b: &[f64]| b.iter().map(|v| v * v).sum::<f64>();
        let (mut dot, mut quad) = (0.0, 0.0);
        match rule {
            StochasticIntegral::LeftPoint => {
                spec.drift(node(0), b);
                quad += 0.5 * norm2(b);
                for n in 0..q {
                    let (a, c) = (node(n), node(n + 1));
                    dot += (0..m).map(|d| b[d] * (c[d] - a[d])).sum::<f64>();
                    spec.drift(c, b);
                    quad += if n + 1 < q { norm2(b) } else { 0.5 * norm2(b) };
                }
            }
            StochasticIntegral::Midpoint => {
                for n in 0..q {
                    let (a, c) = (node(n), node(n + 1));
                    for d in 0..m {
                        mid[d] = 0.5 * (a[d] + c[d]);
                    }
                    spec.drift(mid, b);
                    dot += (0..m).map(|d| b[d] * (c[d] - a[d])).sum::<f64>();
                    quad += norm2(b) + divergence(spec, mid, default_step(mid));
                }
            }
        }
        finite_or(&values[..m], dot - 0.5 * quad * delta)
    };
    let log_weights = bridge_log_weights(spec, x, y, s, &sampler, drift_term)?;
    MCEstimate::from_log_weights(&log_weights, prefactor, s.echo())
}

fn bridge_log_weights<F>(
    spec: &DiffusionSpec,
    x: &[f64],
    y: &[f64],
    s: &BridgeSettings,
    sampler: &BridgeSampler,
    extra: F,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut Vec<f64>) -> Result<f64> + Send + Sync,
{
    let m = spec.dim();
    let q = s.quad_steps;
    let delta = s.t / q as f64;
    let policy = RngPolicy::new(s.seed);
    try_map_indexed(
        s.exec,
        s.n_paths,
        || (BridgeScratch::default(), vec![0.0; (q + 1) * m], Vec::new()),
        |(scratch, values, buf), i| {
            let mut rng = policy.stream(domain::BRIDGE, i as u64);
            sampler.sample_into(&mut rng, x, y, scratch, values);
            let u = if spec.has_potential() { trapezoid_potential(spec, values, m, delta) } else { 0.0 };
            let lw = u + extra(values, buf)?;
            finite_or(x, lw)
        },
    )
}

/// Settings for unpinned Euler–Maruyama ensembles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleSettings {
    pub grid: TimeGrid,
    pub n_paths: usize,
    pub seed: u64,
    pub exec: Execution,
}

impl EnsembleSettings {
    fn echo(&self) -> RunEcho {
        RunEcho { horizon: self.grid.horizon, steps: self.grid.steps, modes: None, seed: self.seed }
    }
}

/// Runs path `i` of an ensemble into a `(N+1) × M` buffer.
fn run_member(
    spec: &DiffusionSpec,
    x0: &[f64],
    s: &EnsembleSettings,
    i: usize,
    inc: &mut Vec<f64>,
    step: &mut StepScratch,
    values: &mut Vec<f64>,
) -> Result<()> {
    let m = spec.dim();
    let n = s.grid.steps;
    inc.resize(n * m, 0.0);
    values.resize((n + 1) * m, 0.0);
    let mut rng = RngPolicy::new(s.seed).stream(domain::INCREMENTS, i as u64);
    fill_increments(&mut rng, s.grid.delta, inc);
    euler_maruyama_into(spec, x0, s.grid.delta, inc, step, values)
}

/// `E[O·e^{∫u}] / E[e^{∫u}]` over Euler–Maruyama paths from `x0`, with a jackknife error.
pub fn expectation_ratio(
    spec: &DiffusionSpec,
    x0: &[f64],
    s: &EnsembleSettings,
    observable: &(dyn Fn(&Path) -> f64 + Sync),
) -> Result<RatioEstimate> {
    let m = spec.dim();
    if x0.len() != m {
        return Err(Error::domain("expectation_ratio", format!("x0 must have length {m}, got {}", x0.len())));
    }
    let samples = try_map_indexed(
        s.exec,
        s.n_paths,
        || (Vec::new(), StepScratch::default(), Vec::new()),
        |(inc, step, values), i| {
            run_member(spec, x0, s, i, inc, step, values)?;
            let lw = if spec.has_potential() { trapezoid_potential(spec, values, m, s.grid.delta) } else { 0.0 };
            let path = Path { grid: s.grid, values: Array2::from_shape_vec((s.grid.steps + 1, m), values.clone()).expect("shape") };
            Ok::<_, Error>((observable(&path), lw))
        },
    )?;
    let (obs, lw): (Vec<f64>, Vec<f64>) = samples.into_iter().unzip();
    jackknife_ratio(&obs, &lw, s.echo())
}

/// Per-node ensemble mean and standard error of every component.
#[derive(Debug, Clone, PartialEq)]
pub struct PathMoments {
    pub grid: TimeGrid,
    pub mean: Array2<f64>,
    pub stderr: Array2<f64>,
    pub n_paths: usize,
    pub echo: RunEcho,
}

/// Simulates `n_paths` Euler–Maruyama paths and reduces them node by node.
pub fn path_moments(spec: &DiffusionSpec, x0: &[f64], s: &EnsembleSettings) -> Result<PathMoments> {
    let m = spec.dim();
    if x0.len() != m {
        return Err(Error::domain("path_moments", format!("x0 must have length {m}, got {}", x0.len())));
    }
    if s.n_paths < 2 {
        return Err(Error::Config(format!("need at least 2 paths, got {}", s.n_paths)));
    }
    let paths = try_map_indexed(
        s.exec,
        s.n_paths,
        || (Vec::new(), StepScratch::default()),
        |(inc, step), i| {
            let mut values = Vec::new();
            run_member(spec, x0, s, i, inc, step, &mut values)?;
            Ok::<_, Error>(values)
        },
    )?;
    let rows = s.grid.steps + 1;
    let cells = rows * m;
    let stats = map_indexed(s.exec, cells, Vec::new, |col: &mut Vec<f64>, c| {
        col.clear();
        col.extend(paths.iter().map(|p| p[c]));
        crate::stats::mean_stderr(col).expect("n_paths ≥ 2")
    });
    let mean = Array2::from_shape_fn((rows, m), |(r, d)| stats[r * m + d].0);
    let stderr = Array2::from_shape_fn((rows, m), |(r, d)| stats[r * m + d].1);
    Ok(PathMoments { grid: s.grid, mean, stderr, n_paths: s.n_paths, echo: s.echo() })
}

/// Uniform tensor-product window `[lo, hi]^M` with `nodes` points per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureWindow {
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
}

/// Largest tolerated integrand mass on the window boundary.
pub const BOUNDARY_MASS_LIMIT: f64 = 1e-6;

/// Evolved profile values and the truncation diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub values: Vec<f64>,
    /// Largest `Σ|K f₀| w` over boundary nodes, across all evaluation points.
    pub boundary_mass: f64,
    /// Set when `boundary_mass` exceeds [`BOUNDARY_MASS_LIMIT`].
    pub truncated: bool,
}

/// `K(y, x)` at a fixed time.
pub type PairKernel<'a> = dyn Fn(&[f64], &[f64]) -> Result<f64> + Sync + 'a;

/// `f(y, t) = ∫K(y, x | t) f₀(x) dx` by the tensor trapezoid rule, for `M ≤ 3`.
///
/// `kernel(y, x)` already carries the time argument.
pub fn evolve_profile(
    kernel: &PairKernel<'_>,
    f0: &(dyn Fn(&[f64]) -> f64 + Sync),
    points: &[Vec<f64>],
    window: &QuadratureWindow,
) -> Result<Profile> {
    let Some(m) = points.first().map(Vec::len) else {
        return Ok(Profile { values: Vec::new(), boundary_mass: 0.0, truncated: false });
    };
    if !(1..=3).contains(&m) || points.iter().any(|p| p.len() != m) {
        return Err(Error::UnsupportedParameter(format!("evolve_profile supports 1 to 3 dimensions with uniform points, got {m}")));
    }
    if window.nodes < 2 || !(window.hi > window.lo) {
        return Err(Error::Config("quadrature window needs hi > lo and at least 2 nodes".into()));
    }
    let q = window.nodes;
    let h = (window.hi - window.lo) / (q - 1) as f64;
    let axis: Vec<f64> = (0..q).map(|i| window.lo + h * i as f64).collect();
    let axis_w: Vec<f64> = (0..q).map(|i| if i == 0 || i == q - 1 { 0.5 * h } else { h }).collect();
    let total = q.pow(m as u32);
    let mut nodes = Vec::with_capacity(total);
    for flat in 0..total {
        let (mut r, mut x, mut w, mut edge) = (flat, vec![0.0; m], 1.0, false);
        for xd in x.iter_mut() {
            let i = r % q;
            r /= q;
            *xd = axis[i];
            w *= axis_w[i];
            edge |= i == 0 || i == q - 1;
        }
        let f = f0(&x);
        nodes.push((x, w * f, edge));
    }
    let mut values = Vec::with_capacity(points.len());
    let mut boundary_mass: f64 = 0.0;
    for y in points {
        let (mut terms, mut edge_mass) = (Vec::with_capacity(total), 0.0);
        for (x, wf, edge) in &nodes {
            let v = kernel(y, x)? * wf;
            if *edge {
                edge_mass += v.abs();
            }
            terms.push(v);
        }
        boundary_mass = boundary_mass.max(edge_mass);
        values.push(pairwise_sum(&terms));
    }
    Ok(Profile { values, boundary_mass, truncated: boundary_mass > BOUNDARY_MASS_LIMIT })
}

fn check_quench(op: &'static str, m: usize, omega: &[f64], t: f64) -> Result<()> {
    if m < 1 || m > omega.len() {
        return Err(Error::domain(op, format!("need 1 ≤ m ≤ {}, got {m}", omega.len())));
    }
    if let Some(w) = omega.iter().find(|w| !(**w > 0.0)) {
        return Err(Error::domain(op, format!("frequencies must be positive, got {w}")));
    }
    if !(t >= 0.0) {
        return Err(Error::domain(op, format!("time must be nonnegative, got {t}")));
    }
    Ok(())
}

/// Ground state of the first `m` oscillators, constant in the rest.
pub fn quench_initial(m: usize, omega: &[f64], x: &[f64]) -> Result<f64> {
    check_quench("quench_initial", m, omega, 0.0)?;
    Ok((-0.5 * (0..m).map(|j| omega[j] * x[j] * x[j]).sum::<f64>()).exp())
}

/// Harmonic evolution of [`quench_initial`] under `½Δ − ½ΣΩ_j²y_j²`.
///
/// Sites `j < m` stay in their ground state and decay as `e^{−tΩ_j/2}`.
/// Sites `j ≥ m` contribute `(cosh tΩ_j)^{−1/2} exp(−½Ω_j tanh(tΩ_j) y_j²)`.
pub fn quench_harmonic(m: usize, omega: &[f64], t: f64, y: &[f64]) -> Result<f64> {
    check_quench("quench_harmonic", m, omega, t)?;
    if y.len() != omega.len() {
        return Err(Error::domain("quench_harmonic", format!("y must have length {}, got {}", omega.len(), y.len())));
    }
    let mut log_f = 0.0;
    for (j, (&w, &yj)) in omega.iter().zip(y).enumerate() {
        let wt = w * t;
        if j < m {
            log_f += -0.5 * wt - 0.5 * w * yj * yj;
        } else {
            // ln cosh(a) = a + ln((1 + e^{−2a})/2)
            let ln_cosh = wt + (-2.0 * wt).exp().ln_1p() - std::f64::consts::LN_2;
            log_f += -0.5 * ln_cosh - 0.5 * w * wt.tanh() * yj * yj;
        }
    }
    Ok(log_f.exp())
}
