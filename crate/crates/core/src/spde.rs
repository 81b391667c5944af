//! Continuum-limit demonstrations on a periodic spatial grid.
//!
//! Grid nodes are `x_i = −L + i·dx`, `dx = 2L/n`, with index arithmetic mod `n`.
//! Noise enters at each node as the time increment of a sampled Q-Wiener
//! field, evaluated left-point.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::diffusion::TimeGrid;
use crate::error::{Error, Result};
use crate::rng::PathRng;
use crate::wiener::{integrate_increments, sample_increments};

/// `W(x, t) = (√L/π) Σ_n (1/n)(X⁽ⁿ⁾_t cos(nπx/L) + Y⁽ⁿ⁾_t sin(nπx/L))`.
#[derive(Debug, Clone, PartialEq)]
pub struct QWienerField {
    pub half_width: f64,
    pub grid: TimeGrid,
    pub n_modes: usize,
    /// `(N+1) × n_modes` cosine coefficient paths.
    pub cos_paths: Array2<f64>,
    /// `(N+1) × n_modes` sine coefficient paths.
    pub sin_paths: Array2<f64>,
}

/// Draws the cosine family first, then the sine family.
pub fn sample_q_wiener(rng: &mut PathRng, half_width: f64, grid: &TimeGrid, n_modes: usize) -> Result<QWienerField> {
    if !(half_width > 0.0) {
        return Err(Error::domain("sample_q_wiener", format!("half-width must be positive, got {half_width}")));
    }
    if n_modes == 0 {
        return Err(Error::Config("Q-Wiener field needs at least one mode".into()));
    }
    let cos_paths = integrate_increments(grid, &sample_increments(rng, grid, n_modes)).values;
    let sin_paths = integrate_increments(grid, &sample_increments(rng, grid, n_modes)).values;
    Ok(QWienerField { half_width, grid: *grid, n_modes, cos_paths, sin_paths })
}

impl QWienerField {
    fn mode_sum(&self, x: f64, a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
        let l = self.half_width;
        let mut acc = 0.0;
        for n in 1..=self.n_modes {
            let k = n as f64 * PI * x / l;
            acc += (a[n - 1] * k.cos() + b[n - 1] * k.sin()) / n as f64;
        }
        l.sqrt() / PI * acc
    }

    /// `W(x, t_n)`.
    pub fn value(&self, x: f64, n: usize) -> f64 {
        self.mode_sum(x, self.cos_paths.row(n), self.sin_paths.row(n))
    }

    /// `W(x, t_{n+1}) − W(x, t_n)` at every `x`.
    pub fn increment(&self, n: usize, xs: &[f64]) -> Vec<f64> {
        let da = &self.cos_paths.row(n + 1) - &self.cos_paths.row(n);
        let db = &self.sin_paths.row(n + 1) - &self.sin_paths.row(n);
        xs.iter().map(|&x| self.mode_sum(x, da.view(), db.view())).collect()
    }
}

/// `Cov(W(x, t), W(x', t)) = t (L/π²) Σ_{n ≤ K} cos(nπ(x − x')/L)/n²`.
pub fn q_wiener_covariance(half_width: f64, n_modes: usize, x: f64, xp: f64, t: f64) -> f64 {
    let l = half_width;
    let s: f64 = (1..=n_modes).map(|n| (n as f64 * PI * (x - xp) / l).cos() / (n * n) as f64).sum();
    t * l / (PI * PI) * s
}

/// Periodic grid `−L + i·2L/n`.
pub fn spatial_grid(half_width: f64, nodes: usize) -> Vec<f64> {
    let dx = 2.0 * half_width / nodes as f64;
    (0..nodes).map(|i| -half_width + dx * i as f64).collect()
}

const CFL_SLACK: f64 = 1e-12;

fn check_step(op: &'static str, phi: &[f64], dw: &[f64], dx: f64, delta: f64, limit: f64) -> Result<()> {
    if phi.len() != dw.len() || phi.len() < 3 {
        return Err(Error::domain(op, format!("field and noise need equal length ≥ 3, got {} and {}", phi.len(), dw.len())));
    }
    if !(dx > 0.0) || !(delta > 0.0) {
        return Err(Error::domain(op, "dx and δ must be positive"));
    }
    if delta > limit * (1.0 + CFL_SLACK) {
        return Err(Error::Config(format!("{op}: δ = {delta} exceeds the stability limit {limit}")));
    }
    Ok(())
}

/// Upwind step of `∂_t φ = −∂_x φ + φ Ẇ`; requires `δ ≤ dx`.
pub fn stochastic_transport_step(phi: &[f64], dx: f64, delta: f64, dw: &[f64]) -> Result<Vec<f64>> {
    check_step("stochastic_transport_step", phi, dw, dx, delta, dx)?;
    let n = phi.len();
    let c = delta / dx;
    Ok((0..n).map(|i| phi[i] - c * (phi[i] - phi[(i + n - 1) % n]) + phi[i] * dw[i]).collect())
}

/// Sign of the diffusion term in the stochastic heat stepper.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeatSign {
    /// `+½∂²_x`, the forward-stable heat flow.
    #[default]
    Wellposed,
    /// `−½∂²_x`, backward heat flow; unstable under refinement.
    Backward,
}

impl HeatSign {
    pub fn factor(self) -> f64 {
        match self {
            HeatSign::Wellposed => 1.0,
            HeatSign::Backward => -1.0,
        }
    }
}

/// Explicit step of `∂_t φ = ±½∂²_x φ + φ Ẇ`; requires `δ ≤ dx²`.
pub fn stochastic_heat_step(phi: &[f64], dx: f64, delta: f64, dw: &[f64], sign: HeatSign) -> Result<Vec<f64>> {
    check_step("stochastic_heat_step", phi, dw, dx, delta, dx * dx)?;
    let n = phi.len();
    let c = sign.factor() * 0.5 * delta / (dx * dx);
    Ok((0..n)
        .map(|i| {
            let lap = phi[(i + 1) % n] - 2.0 * phi[i] + phi[(i + n - 1) % n];
            phi[i] + c * lap + phi[i] * dw[i]
        })
        .collect())
}

/// Which stepper [`evolve_field`] drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "equation")]
pub enum SpdeEquation {
    Transport,
    Heat {
        #[serde(default)]
        sign: HeatSign,
    },
}

/// Runs `φ₀` over the field's time grid; row `n` of the result is `φ(t_n)`.
///
/// A field of `None` runs the deterministic equation.
pub fn evolve_field(equation: SpdeEquation, phi0: &[f64], half_width: f64, field: Option<&QWienerField>, grid: &TimeGrid) -> Result<Array2<f64>> {
    let nx = phi0.len();
    let xs = spatial_grid(half_width, nx);
    let dx = 2.0 * half_width / nx as f64;
    if let Some(f) = field {
        if f.grid != *grid || f.half_width != half_width {
            return Err(Error::Config("Q-Wiener field does not match the evolution grid".into()));
        }
    }
    let mut out = Array2::zeros((grid.steps + 1, nx));
    out.row_mut(0).assign(&ArrayView1::from(phi0));
    let mut phi = phi0.to_vec();
    let zeros = vec![0.0; nx];
    for n in 0..grid.steps {
        let dw = field.map_or_else(|| zeros.clone(), |f| f.increment(n, &xs));
        phi = match equation {
            SpdeEquation::Transport => stochastic_transport_step(&phi, dx, grid.delta, &dw)?,
            SpdeEquation::Heat { sign } => stochastic_heat_step(&phi, dx, grid.delta, &dw, sign)?,
        };
        if let Some(i) = phi.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { point: vec![grid.time(n + 1), xs[i]] });
        }
        out.row_mut(n + 1).assign(&ArrayView1::from(&phi));
    }
    Ok(out)
}

/// `h = log φ` and `u = ∂_x h` by periodic centered differences, row by row.
pub fn hopf_cole(history: &Array2<f64>, dx: f64) -> Result<(Array2<f64>, Array2<f64>)> {
    if let Some(((r, c), v)) = history.indexed_iter().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::domain("hopf_cole", format!("φ must be positive, got {v} at row {r}, node {c}")));
    }
    let h = history.mapv(f64::ln);
    let nx = h.ncols();
    let u = Array2::from_shape_fn(h.dim(), |(r, i)| (h[[r, (i + 1) % nx]] - h[[r, (i + nx - 1) % nx]]) / (2.0 * dx));
    Ok((h, u))
}

/// Largest `|∂_t u − s(½∂²u + u∂u)|` over interior space-time nodes `[lo, hi)`.
///
/// Time derivatives are forward differences between consecutive rows.
pub fn burgers_residual(u: &Array2<f64>, dx: f64, delta: f64, sign: HeatSign, lo: usize, hi: usize) -> f64 {
    let s = sign.factor();
    let mut worst: f64 = 0.0;
    for r in 0..u.nrows() - 1 {
        for i in lo.max(1)..hi.min(u.ncols() - 1) {
            let dt = (u[[r + 1, i]] - u[[r, i]]) / delta;
            let lap = (u[[r, i + 1]] - 2.0 * u[[r, i]] + u[[r, i - 1]]) / (dx * dx);
            let grad = (u[[r, i + 1]] - u[[r, i - 1]]) / (2.0 * dx);
            worst = worst.max((dt - s * (0.5 * lap + u[[r, i]] * grad)).abs());
        }
    }
    worst
}
