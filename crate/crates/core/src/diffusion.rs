//! SDE specifications, time grids, paths, and the generator `L₀` with its adjoint.
//!
//! A [`DiffusionSpec`] describes `dx = b(x) dt + σ(x) dw` with an optional
//! potential `u(x)`. All matrices are row-major `M × M` slices.

use std::fmt;
use std::sync::Arc;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::linalg;

pub type VectorField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
pub type MatrixField = Arc<dyn Fn(&[f64], &mut [f64]) -> Result<()> + Send + Sync>;
pub type ScalarField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Relative tolerance for the pivoted factorization of a supplied `g`.
pub const FACTOR_TOL: f64 = 1e-12;
/// Eigenvalues of `g` down to `-PSD_TOL·‖g‖` count as nonnegative.
pub const PSD_TOL: f64 = 1e-10;

/// Default finite-difference step `10⁻⁴·(1 + |x|∞)`.
pub fn default_step(x: &[f64]) -> f64 {
    1e-4 * (1.0 + linalg::max_abs(x))
}

/// An `M`-dimensional diffusion with drift `b`, factor `σ` and potential `u`.
///
/// Defaults are `b = 0`, `σ = I`, `u` absent. The flags `zero_drift` and
/// `unit_sigma` stay true only while the defaults are untouched, so
/// estimators can check their preconditions without probing.
#[derive(Clone)]
pub struct DiffusionSpec {
    dim: usize,
    name: String,
    drift: VectorField,
    sigma: MatrixField,
    potential: Option<ScalarField>,
    sigma_partials: Option<VectorField>,
    diffusion: Option<MatrixField>,
    zero_drift: bool,
    unit_sigma: bool,
    constant_sigma: bool,
}

impl fmt::Debug for DiffusionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionSpec")
            .field("dim", &self.dim)
            .field("name", &self.name)
            .field("zero_drift", &self.zero_drift)
            .field("unit_sigma", &self.unit_sigma)
            .field("has_potential", &self.potential.is_some())
            .finish()
    }
}

impl DiffusionSpec {
    /// Standard `M`-dimensional Brownian motion.
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be positive");
        Self {
            dim,
            name: String::from("wiener"),
            drift: Arc::new(|_, out| out.fill(0.0)),
            sigma: Arc::new(move |_, out| {
                out.fill(0.0);
                for i in 0..dim {
                    out[i * dim + i] = 1.0;
                }
                Ok(())
            }),
            potential: None,
            sigma_partials: None,
            diffusion: None,
            zero_drift: true,
            unit_sigma: true,
            constant_sigma: true,
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_drift(mut self, f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.drift = Arc::new(f);
        self.zero_drift = false;
        self
    }

    /// Sets a state-dependent factor `σ(x)`, written row-major.
    pub fn with_sigma(self, f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.with_fallible_sigma(move |x, out| {
            f(x, out);
            Ok(())
        })
    }

    pub fn with_fallible_sigma(
        mut self,
        f: impl Fn(&[f64], &mut [f64]) -> Result<()> + Send + Sync + 'static,
    ) -> Self {
        self.sigma = Arc::new(f);
        self.unit_sigma = false;
        self.constant_sigma = false;
        self
    }

    /// Sets a constant factor.
    pub fn with_constant_sigma(mut self, sigma: Vec<f64>) -> Self {
        assert_eq!(sigma.len(), self.dim * self.dim);
        self = self.with_sigma(move |_, out| out.copy_from_slice(&sigma));
        self.constant_sigma = true;
        self
    }

    pub fn with_potential(mut self, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.potential = Some(Arc::new(f));
        self
    }

    /// Analytic `∂σ_kj/∂x_l`, written at flat index `(k·M + j)·M + l`.
    pub fn with_sigma_partials(mut self, f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.sigma_partials = Some(Arc::new(f));
        self
    }

    /// Supplies `g(x)` directly; `σ` becomes its pivoted Cholesky factor.
    ///
    /// Used by models that define only the diffusion matrix. Evaluating `σ`
    /// at a state where `g` is indefinite yields `NonFactorizable`.
    pub fn with_diffusion_matrix(
        mut self,
        g: impl Fn(&[f64], &mut [f64]) -> Result<()> + Send + Sync + 'static,
    ) -> Self {
        let g: MatrixField = Arc::new(g);
        let dim = self.dim;
        let gf = g.clone();
        self = self.with_fallible_sigma(move |x, out| {
            let mut gm = vec![0.0; dim * dim];
            gf(x, &mut gm)?;
            let pc = linalg::pivoted_cholesky(dim, &gm, FACTOR_TOL)?;
            out.copy_from_slice(&pc.factor);
            Ok(())
        });
        self.diffusion = Some(g);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn has_zero_drift(&self) -> bool {
        self.zero_drift
    }

    pub fn has_unit_sigma(&self) -> bool {
        self.unit_sigma
    }

    pub fn has_constant_sigma(&self) -> bool {
        self.constant_sigma
    }

    pub fn has_potential(&self) -> bool {
        self.potential.is_some()
    }

    pub fn has_sigma_partials(&self) -> bool {
        self.sigma_partials.is_some()
    }

    pub fn drift(&self, x: &[f64], out: &mut [f64]) {
        (self.drift)(x, out)
    }

    pub fn sigma(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        (self.sigma)(x, out)
    }

    pub fn potential(&self, x: &[f64]) -> f64 {
        self.potential.as_ref().map_or(0.0, |u| u(x))
    }

    /// `g(x)`: the supplied diffusion matrix, or `σσᵀ`.
    pub fn diffusion(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if let Some(g) = &self.diffusion {
            return g(x, out);
        }
        let mut s = vec![0.0; self.dim * self.dim];
        (self.sigma)(x, &mut s)?;
        linalg::outer_self(self.dim, &s, out);
        Ok(())
    }

    /// `∂σ_kj/∂x_l` at flat index `(k·M + j)·M + l`; central differences when not supplied.
    pub fn sigma_partials(&self, x: &[f64], h: Option<f64>, out: &mut [f64]) -> Result<()> {
        if let Some(p) = &self.sigma_partials {
            p(x, out);
            return Ok(());
        }
        let m = self.dim;
        if self.constant_sigma {
            out.fill(0.0);
            return Ok(());
        }
        let h = h.unwrap_or_else(|| default_step(x));
        let mut xp = x.to_vec();
        let mut sp = vec![0.0; m * m];
        let mut sm = vec![0.0; m * m];
        for l in 0..m {
            xp[l] = x[l] + h;
            self.sigma(&xp, &mut sp)?;
            xp[l] = x[l] - h;
            self.sigma(&xp, &mut sm)?;
            xp[l] = x[l];
            for kj in 0..m * m {
                out[kj * m + l] = (sp[kj] - sm[kj]) / (2.0 * h);
            }
        }
        Ok(())
    }
}

/// Uniform grid `t_n = n·δ`, `n = 0..=N`, on `[0, t]`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TimeGrid {
    pub horizon: f64,
    pub steps: usize,
    pub delta: f64,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::domain("TimeGrid::new", format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::domain("TimeGrid::new", "steps must be at least 1"));
        }
        Ok(Self { horizon, steps, delta: horizon / steps as f64 })
    }

    /// `t_n`; the last node is the horizon exactly.
    pub fn time(&self, n: usize) -> f64 {
        if n >= self.steps {
            self.horizon
        } else {
            n as f64 * self.delta
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|n| self.time(n)).collect()
    }

    /// Index of the node nearest to `s`.
    pub fn nearest_index(&self, s: f64) -> usize {
        ((s / self.delta).round().max(0.0) as usize).min(self.steps)
    }

    /// The same horizon with twice the steps.
    pub fn refined(&self) -> Self {
        Self { horizon: self.horizon, steps: 2 * self.steps, delta: self.horizon / (2 * self.steps) as f64 }
    }
}

/// Values of an `M`-vector process on a [`TimeGrid`]; row `n` is the state at `t_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub grid: TimeGrid,
    pub values: Array2<f64>,
}

impl Path {
    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn at(&self, n: usize) -> &[f64] {
        let m = self.dim();
        &self.values.as_slice().expect("standard layout")[n * m..(n + 1) * m]
    }

    pub fn terminal(&self) -> &[f64] {
        self.at(self.grid.steps)
    }

    /// State at the node nearest to time `s`.
    pub fn at_time(&self, s: f64) -> &[f64] {
        self.at(self.grid.nearest_index(s))
    }
}

fn eval_checked(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> Result<f64> {
    let v = f(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite { point: x.to_vec() })
    }
}

/// Central-difference gradient and Hessian of `f` at `x` with step `h`.
fn derivatives(
    m: usize,
    x: &[f64],
    h: f64,
    f: &mut dyn FnMut(&[f64]) -> Result<()>,
) -> Result<()> {
    let mut p = x.to_vec();
    f(&p)?;
    for i in 0..m {
        for s in [1.0, -1.0] {
            p[i] = x[i] + s * h;
            f(&p)?;
        }
        p[i] = x[i];
    }
    for i in 0..m {
        for j in 0..i {
            for (si, sj) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                p[i] = x[i] + si * h;
                p[j] = x[j] + sj * h;
                f(&p)?;
            }
            p[i] = x[i];
            p[j] = x[j];
        }
    }
    Ok(())
}

/// Values of one scalar quantity on the stencil visited by [`derivatives`].
struct Stencil {
    vals: Vec<f64>,
}

impl Stencil {
    fn first(&self, i: usize, h: f64) -> f64 {
        (self.vals[1 + 2 * i] - self.vals[2 + 2 * i]) / (2.0 * h)
    }

    fn second(&self, m: usize, i: usize, j: usize, h: f64) -> f64 {
        if i == j {
            return (self.vals[1 + 2 * i] - 2.0 * self.vals[0] + self.vals[2 + 2 * i]) / (h * h);
        }
        let (i, j) = if i > j { (i, j) } else { (j, i) };
        // pairs (i, j), j < i, are enumerated row by row after the 2m axial points
        let base = 1 + 2 * m + 4 * (i * (i - 1) / 2 + j);
        let v = &self.vals[base..base + 4];
        (v[0] - v[1] - v[2] + v[3]) / (4.0 * h * h)
    }
}

/// `L₀f(x) = ½ Σ g_ij ∂_i∂_j f + Σ b_j ∂_j f` by central differences (no potential).
pub fn generator_apply(spec: &DiffusionSpec, f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: Option<f64>) -> Result<f64> {
    let m = spec.dim();
    check_point("generator_apply", m, x)?;
    let h = h.unwrap_or_else(|| default_step(x));
    let mut vals = Vec::new();
    derivatives(m, x, h, &mut |p| {
        vals.push(eval_checked(f, p)?);
        Ok(())
    })?;
    let st = Stencil { vals };
    let mut g = vec![0.0; m * m];
    spec.diffusion(x, &mut g)?;
    let mut b = vec![0.0; m];
    spec.drift(x, &mut b);
    let mut acc = 0.0;
    for i in 0..m {
        acc += b[i] * st.first(i, h);
        for j in 0..m {
            if g[i * m + j] != 0.0 {
                acc += 0.5 * g[i * m + j] * st.second(m, i, j, h);
            }
        }
    }
    Ok(acc)
}

/// `L₀†f(x) = ½ Σ ∂_i∂_j(g_ij f) − Σ ∂_j(b_j f)` by central differences on the products.
pub fn adjoint_generator_apply(
    spec: &DiffusionSpec,
    f: &dyn Fn(&[f64]) -> f64,
    x: &[f64],
    h: Option<f64>,
) -> Result<f64> {
    let m = spec.dim();
    check_point("adjoint_generator_apply", m, x)?;
    let h = h.unwrap_or_else(|| default_step(x));
    // one stencil per product g_ij·f and b_j·f
    let mut gf: Vec<Vec<f64>> = vec![Vec::new(); m * m];
    let mut bf: Vec<Vec<f64>> = vec![Vec::new(); m];
    let mut g = vec![0.0; m * m];
    let mut b = vec![0.0; m];
    derivatives(m, x, h, &mut |p| {
        let fv = eval_checked(f, p)?;
        spec.diffusion(p, &mut g)?;
        spec.drift(p, &mut b);
        for k in 0..m * m {
            gf[k].push(g[k] * fv);
        }
        for k in 0..m {
            bf[k].push(b[k] * fv);
        }
        Ok(())
    })?;
    let mut acc = 0.0;
    for (i, vals) in bf.iter_mut().enumerate() {
        acc -= Stencil { vals: std::mem::take(vals) }.first(i, h);
    }
    for i in 0..m {
        for j in 0..m {
            let st = Stencil { vals: std::mem::take(&mut gf[i * m + j]) };
            acc += 0.5 * st.second(m, i, j, h);
        }
    }
    if acc.is_finite() {
        Ok(acc)
    } else {
        Err(Error::NonFinite { point: x.to_vec() })
    }
}

fn check_point(op: &'static str, m: usize, x: &[f64]) -> Result<()> {
    if x.len() != m {
        return Err(Error::domain(op, format!("point has length {}, spec dimension is {m}", x.len())));
    }
    Ok(())
}

/// Diagnostics for one probe point.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ProbeReport {
    pub point: Vec<f64>,
    pub shape_ok: bool,
    pub finite: bool,
    pub min_eigenvalue: f64,
    pub psd: bool,
    pub singular: bool,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ValidationReport {
    pub probes: Vec<ProbeReport>,
}

impl ValidationReport {
    pub fn all_psd(&self) -> bool {
        self.probes.iter().all(|p| p.psd)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.probes.iter().map(|p| p.min_eigenvalue).fold(f64::INFINITY, f64::min)
    }

    pub fn ok(&self) -> bool {
        self.probes.iter().all(|p| p.shape_ok && p.finite && p.psd)
    }
}

/// Probes `g = σσᵀ` (or the supplied `g`) for symmetry, semidefiniteness and singularity.
pub fn validate_spec(spec: &DiffusionSpec, probes: &[Vec<f64>]) -> ValidationReport {
    let m = spec.dim();
    let probes = probes
        .iter()
        .map(|x| {
            let mut rep = ProbeReport {
                point: x.clone(),
                shape_ok: x.len() == m,
                finite: x.iter().all(|v| v.is_finite()),
                min_eigenvalue: f64::NAN,
                psd: false,
                singular: false,
            };
            if !rep.shape_ok || !rep.finite {
                return rep;
            }
            let mut g = vec![0.0; m * m];
            let mut b = vec![0.0; m];
            spec.drift(x, &mut b);
            let evaluated = spec.diffusion(x, &mut g).is_ok();
            rep.finite = evaluated && g.iter().chain(b.iter()).all(|v| v.is_finite()) && spec.potential(x).is_finite();
            if !rep.finite {
                return rep;
            }
            let norm = linalg::max_abs(&g);
            let ev = linalg::symmetric_eigenvalues(m, &g);
            rep.min_eigenvalue = ev[0];
            rep.psd = ev[0] >= -PSD_TOL * norm;
            rep.singular = ev[0].abs() <= PSD_TOL * norm.max(f64::MIN_POSITIVE) || norm == 0.0;
            rep
        })
        .collect();
    ValidationReport { probes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn ou(theta: f64) -> DiffusionSpec {
        DiffusionSpec::new(1).with_drift(move |x, out| out[0] = -theta * x[0])
    }

    #[test]
    fn generator_of_square_under_brownian_motion() {
        let spec = DiffusionSpec::new(1);
        for x in [-3.0, 0.0, 1.5] {
            let v = generator_apply(&spec, &|p| p[0] * p[0], &[x], None).unwrap();
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn generator_pure_drift() {
        let spec = DiffusionSpec::new(1).with_drift(|x, o| o[0] = x[0]).with_sigma(|_, o| o[0] = 0.0);
        let v = generator_apply(&spec, &|p| p[0], &[2.0], None).unwrap();
        assert_abs_diff_eq!(v, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn generator_has_no_cross_term_for_identity() {
        let spec = DiffusionSpec::new(2);
        let v = generator_apply(&spec, &|p| p[0] * p[1], &[1.0, 1.0], None).unwrap();
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-8);
    }

    #[test]
    fn generator_picks_up_cross_term_for_correlated_noise() {
        // σ = [[1,0],[1,1]] gives g_12 = 1, so L₀(x₁x₂) = g_12 = 1
        let spec = DiffusionSpec::new(2).with_constant_sigma(vec![1.0, 0.0, 1.0, 1.0]);
        let v = generator_apply(&spec, &|p| p[0] * p[1], &[0.3, -0.7], None).unwrap();
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-7);
    }

    #[test]
    fn adjoint_of_constant_with_constant_coefficients() {
        let spec = DiffusionSpec::new(2).with_drift(|_, o| o.copy_from_slice(&[0.4, -1.0]));
        let v = adjoint_generator_apply(&spec, &|_| 3.0, &[0.2, 0.1], None).unwrap();
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn adjoint_annihilates_stationary_ou_density() {
        let theta = 1.3;
        let spec = ou(theta);
        let rho = move |p: &[f64]| (theta / std::f64::consts::PI).sqrt() * (-theta * p[0] * p[0]).exp();
        for x in [-1.0, 0.0, 0.4, 2.0] {
            let v = adjoint_generator_apply(&spec, &rho, &[x], Some(1e-3)).unwrap();
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn non_finite_stencil_value_names_point() {
        let spec = DiffusionSpec::new(1);
        let err = generator_apply(&spec, &|p| 1.0 / p[0].max(0.0), &[0.0], Some(0.1)).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn second_order_convergence() {
        let spec = ou(0.7).with_sigma(|x, o| o[0] = 1.0 + 0.3 * x[0] * x[0]);
        let f = |p: &[f64]| p[0].sin();
        let x = 0.6_f64;
        let s = 1.0 + 0.3 * x * x;
        let exact = -0.5 * s * s * x.sin() + (-0.7 * x) * x.cos();
        let e1 = (generator_apply(&spec, &f, &[x], Some(0.02)).unwrap() - exact).abs();
        let e2 = (generator_apply(&spec, &f, &[x], Some(0.01)).unwrap() - exact).abs();
        let ratio = e1 / e2;
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn validation_flags() {
        let rep = validate_spec(&DiffusionSpec::new(3), &[vec![0.0; 3], vec![1.0, 2.0, 3.0]]);
        assert!(rep.ok());
        assert_eq!(rep.min_eigenvalue(), 1.0);

        let diag = DiffusionSpec::new(2).with_sigma(|x, o| {
            o.fill(0.0);
            o[0] = x[0];
            o[3] = x[1];
        });
        let rep = validate_spec(&diag, &[vec![0.0, 2.0]]);
        assert!(rep.probes[0].psd && rep.probes[0].singular);

        let rep = validate_spec(&diag, &[vec![1.0]]);
        assert!(!rep.probes[0].shape_ok);
    }

    #[test]
    fn grid_ends_on_horizon() {
        let g = TimeGrid::new(0.7, 3).unwrap();
        assert_eq!(g.time(3), 0.7);
        assert!(TimeGrid::new(0.0, 3).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
    }

    proptest! {
        // ⟨L₀f, φ⟩ = ⟨f, L₀†φ⟩ for bumps supported inside the window
        #[test]
        fn generator_and_adjoint_are_dual(theta in 0.2f64..2.0, c in -0.5f64..0.5) {
            let spec = DiffusionSpec::new(1)
                .with_drift(move |x, o| o[0] = -theta * x[0] + c)
                .with_sigma(|x, o| o[0] = 1.0 + 0.2 * x[0].sin());
            let f = |p: &[f64]| (-(p[0] - 0.3).powi(2) * 2.0).exp();
            let phi = |p: &[f64]| (-(p[0] + 0.2).powi(2) * 3.0).exp();
            let n = 1200;
            let (lo, hi) = (-6.0, 6.0);
            let dx = (hi - lo) / n as f64;
            let (mut lhs, mut rhs) = (0.0, 0.0);
            for i in 0..=n {
                let x = [lo + i as f64 * dx];
                lhs += generator_apply(&spec, &f, &x, Some(1e-3)).unwrap() * phi(&x) * dx;
                rhs += f(&x) * adjoint_generator_apply(&spec, &phi, &x, Some(1e-3)).unwrap() * dx;
            }
            prop_assert!((lhs - rhs).abs() < 1e-5, "{lhs} vs {rhs}");
        }
    }
}
