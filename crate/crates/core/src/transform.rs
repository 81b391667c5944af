//! The canonical (Lamperti) transform `dy = σ⁻¹(x) dx`.
//!
//! In the new frame the diffusion is the identity and the drift becomes
//!
//! ```text
//! b̃_k = Σ_j σ⁻¹_kj b_j + ½ Σ_{j,m} g_jm ∂_m σ⁻¹_kj,   ∂σ⁻¹ = −σ⁻¹ (∂σ) σ⁻¹.
//! ```
//!
//! A global chart `y(x)` is only built for diagonal `σ`, component by
//! component, by quadrature of `1/σ_j`.

use std::sync::Arc;

use crate::diffusion::{default_step, DiffusionSpec};
use crate::error::{Error, Result};
use crate::linalg;

/// Induced drift `b̃(x)` of the canonical transform.
pub fn transformed_drift(spec: &DiffusionSpec, x: &[f64]) -> Result<Vec<f64>> {
    transformed_drift_with_step(spec, x, None)
}

/// [`transformed_drift`] with an explicit finite-difference step for `∂σ`.
pub fn transformed_drift_with_step(spec: &DiffusionSpec, x: &[f64], h: Option<f64>) -> Result<Vec<f64>> {
    let m = spec.dim();
    if x.len() != m {
        return Err(Error::domain("transformed_drift", format!("point has length {}, expected {m}", x.len())));
    }
    let mut sigma = vec![0.0; m * m];
    spec.sigma(x, &mut sigma)?;
    let (inv, _) = linalg::inverse_checked(m, &sigma)?;
    let mut b = vec![0.0; m];
    spec.drift(x, &mut b);
    let mut dsig = vec![0.0; m * m * m];
    spec.sigma_partials(x, h, &mut dsig)?;
    let mut g = vec![0.0; m * m];
    linalg::outer_self(m, &sigma, &mut g);

    let mut out = vec![0.0; m];
    for k in 0..m {
        out[k] = (0..m).map(|j| inv[k * m + j] * b[j]).sum();
    }
    // ∂_l σ⁻¹ = −σ⁻¹ (∂_l σ) σ⁻¹, contracted with ½ g_jl
    let mut tmp = vec![0.0; m * m];
    for l in 0..m {
        // tmp = (∂_l σ) σ⁻¹
        for a in 0..m {
            for c in 0..m {
                tmp[a * m + c] = (0..m).map(|bb| dsig[(a * m + bb) * m + l] * inv[bb * m + c]).sum();
            }
        }
        for k in 0..m {
            for j in 0..m {
                if g[j * m + l] == 0.0 {
                    continue;
                }
                let d_inv_kj: f64 = -(0..m).map(|a| inv[k * m + a] * tmp[a * m + j]).sum::<f64>();
                out[k] += 0.5 * g[j * m + l] * d_inv_kj;
            }
        }
    }
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(Error::NonFinite { point: x.to_vec() })
    }
}

/// The transformed spec in `y = φ(x)` coordinates: drift `b̃(x(y))`, `σ = I`, potential `u(x(y))`.
///
/// `inverse` maps `y` back to `x`. Points where either step fails yield a
/// NaN drift, which steppers report as a blow-up.
pub fn canonical_spec(
    spec: &DiffusionSpec,
    inverse: impl Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
) -> DiffusionSpec {
    let inner = spec.clone();
    let inverse = Arc::new(inverse);
    let to_x = inverse.clone();
    let mut out = DiffusionSpec::new(spec.dim()).named(format!("{}-canonical", spec.name())).with_drift(move |y, o| {
        match to_x(y).and_then(|x| transformed_drift(&inner, &x)) {
            Ok(v) => o.copy_from_slice(&v),
            Err(_) => o.fill(f64::NAN),
        }
    });
    if spec.has_potential() {
        let inner = spec.clone();
        out = out.with_potential(move |y| inverse(y).map_or(f64::NAN, |x| inner.potential(&x)));
    }
    out
}

/// `V = −½|b̃|² − ½∇·b̃ + u`, or its partner `Vˢ = −½|b̃|² + ½∇·b̃ + u`.
///
/// The spec must have unit diffusion; `b̃` is its drift.
pub fn effective_potential(spec: &DiffusionSpec, y: &[f64], h: Option<f64>, partner: bool) -> Result<f64> {
    if !spec.has_unit_sigma() {
        return Err(Error::precondition("effective_potential", "spec must have σ = I"));
    }
    let m = spec.dim();
    let mut b = vec![0.0; m];
    spec.drift(y, &mut b);
    let norm2: f64 = b.iter().map(|v| v * v).sum();
    let div = divergence(spec, y, h.unwrap_or_else(|| default_step(y)));
    let sign = if partner { 0.5 } else { -0.5 };
    let v = -0.5 * norm2 + sign * div + spec.potential(y);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite { point: y.to_vec() })
    }
}

/// Central-difference divergence of the drift.
pub fn divergence(spec: &DiffusionSpec, y: &[f64], h: f64) -> f64 {
    let m = spec.dim();
    let mut p = y.to_vec();
    let (mut bp, mut bm) = (vec![0.0; m], vec![0.0; m]);
    let mut div = 0.0;
    for j in 0..m {
        p[j] = y[j] + h;
        spec.drift(&p, &mut bp);
        p[j] = y[j] - h;
        spec.drift(&p, &mut bm);
        p[j] = y[j];
        div += (bp[j] - bm[j]) / (2.0 * h);
    }
    div
}

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// One component of a diagonal Lamperti chart: `y = ∫_anchor^x dξ/σ(ξ)`.
#[derive(Clone)]
pub struct LampertiComponent {
    sigma: ScalarFn,
    lo: f64,
    hi: f64,
    anchor: f64,
    /// Knots walking away from the anchor, with cumulative integrals.
    up: Vec<(f64, f64)>,
    down: Vec<(f64, f64)>,
}

const QUAD_TOL: f64 = 1e-13;
/// Knots placed eagerly toward a finite end (halving) or an infinite one (doubling).
const KNOTS: usize = 48;
const KNOTS_UNBOUNDED: usize = 8;
/// Lazily added knots toward an infinite end stop here.
const KNOTS_MAX: usize = 4000;
/// Each knot interval starts as this many Simpson panels.
const MIN_PANELS: usize = 16;

impl LampertiComponent {
    /// `σ > 0` on the open interval `(lo, hi)`; the anchor defaults to 1 on
    /// positive domains and 0 otherwise.
    pub fn new(sigma: impl Fn(f64) -> f64 + Send + Sync + 'static, lo: f64, hi: f64, anchor: Option<f64>) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::domain("lamperti", format!("empty domain ({lo}, {hi})")));
        }
        let anchor = anchor.unwrap_or(if lo >= 0.0 { 1.0 } else { 0.0 });
        if !(lo < anchor && anchor < hi) {
            return Err(Error::domain("lamperti", format!("anchor {anchor} outside ({lo}, {hi})")));
        }
        let sigma: ScalarFn = Arc::new(sigma);
        let mut c = Self { sigma, lo, hi, anchor, up: vec![(anchor, 0.0)], down: vec![(anchor, 0.0)] };
        let count = |end: f64| if end.is_finite() { KNOTS } else { KNOTS_UNBOUNDED };
        c.up = c.walk(hi, count(hi))?;
        c.down = c.walk(lo, count(lo))?;
        Ok(c)
    }

    fn integrand(&self, xi: f64) -> Result<f64> {
        let s = (self.sigma)(xi);
        if s > 0.0 && s.is_finite() {
            Ok(1.0 / s)
        } else {
            Err(Error::domain("lamperti", format!("σ({xi}) = {s} is not positive")))
        }
    }

    fn next_knot(&self, from: f64, toward: f64) -> f64 {
        let dir = (toward - self.anchor).signum();
        if toward.is_finite() {
            from + 0.5 * (toward - from)
        } else {
            let step = (from - self.anchor).abs().max(0.25);
            from + dir * step
        }
    }

    fn walk(&self, toward: f64, count: usize) -> Result<Vec<(f64, f64)>> {
        let mut knots = vec![(self.anchor, 0.0)];
        for _ in 0..count {
            let (x, y) = *knots.last().expect("nonempty");
            let nx = self.next_knot(x, toward);
            if nx == x || nx == toward {
                break;
            }
            knots.push((nx, y + self.integrate(x, nx)?));
        }
        Ok(knots)
    }

    fn integrate(&self, a: f64, b: f64) -> Result<f64> {
        let f = |x: f64| self.integrand(x);
        let h = (b - a) / MIN_PANELS as f64;
        let mut acc = 0.0;
        let mut fa = f(a)?;
        for i in 0..MIN_PANELS {
            let lo = a + h * i as f64;
            let hi = if i + 1 == MIN_PANELS { b } else { lo + h };
            let (fm, fb) = (f(0.5 * (lo + hi))?, f(hi)?);
            let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
            acc += adaptive_simpson(&f, lo, hi, fa, fm, fb, whole, QUAD_TOL * (1.0 + whole.abs()) / MIN_PANELS as f64, 50)?;
            fa = fb;
        }
        Ok(acc)
    }

    /// Knots on the side of `up`, extended until `reached` holds for the last one.
    fn knots_until(&self, up: bool, reached: impl Fn(&(f64, f64)) -> bool) -> Result<Vec<(f64, f64)>> {
        let mut ks = if up { self.up.clone() } else { self.down.clone() };
        let toward = if up { self.hi } else { self.lo };
        while !reached(ks.last().expect("nonempty")) {
            let (x, v) = *ks.last().expect("nonempty");
            let nx = self.next_knot(x, toward);
            if ks.len() > KNOTS_MAX || nx == x || nx == toward || !nx.is_finite() {
                break;
            }
            ks.push((nx, v + self.integrate(x, nx)?));
        }
        Ok(ks)
    }

    fn check(&self, x: f64) -> Result<()> {
        if self.lo < x && x < self.hi {
            Ok(())
        } else {
            Err(Error::domain("lamperti_map", format!("{x} outside ({}, {})", self.lo, self.hi)))
        }
    }

    pub fn map(&self, x: f64) -> Result<f64> {
        self.check(x)?;
        if x == self.anchor {
            return Ok(0.0);
        }
        let up = x >= self.anchor;
        let knots = self.knots_until(up, |&(k, _)| if up { k >= x } else { k <= x })?;
        self.map_from(&knots, x)
    }

    /// `map(x)` from the nearest knot of `knots` between the anchor and `x`.
    fn map_from(&self, knots: &[(f64, f64)], x: f64) -> Result<f64> {
        if x == self.anchor {
            return Ok(0.0);
        }
        let &(kx, ky) = knots
            .iter()
            .take_while(|(k, _)| (x - k) * (x - self.anchor) >= 0.0)
            .last()
            .expect("anchor is always a knot");
        Ok(ky + self.integrate(kx, x)?)
    }

    /// Solves `map(x) = y` by safeguarded Newton inside a bracketing knot interval.
    pub fn inverse(&self, y: f64) -> Result<f64> {
        let up = y >= 0.0;
        let ks = self.knots_until(up, |&(_, v)| if up { v >= y } else { v <= y })?;
        let Some(i) = ks.iter().position(|&(_, v)| if up { v >= y } else { v <= y }) else {
            return Err(Error::Inversion(format!("value {y} not reached within the domain")));
        };
        if i == 0 {
            return Ok(self.anchor);
        }
        let (mut a, mut b) = (ks[i - 1].0, ks[i].0);
        let mut fa = ks[i - 1].1 - y;
        let mut x = 0.5 * (a + b);
        for _ in 0..200 {
            let fx = self.map_from(&ks, x)? - y;
            if fx == 0.0 {
                return Ok(x);
            }
            if (fx < 0.0) == (fa < 0.0) {
                a = x;
                fa = fx;
            } else {
                b = x;
            }
            let newton = x - fx * (self.sigma)(x);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let nx = if newton > lo && newton < hi { newton } else { 0.5 * (a + b) };
            if (nx - x).abs() <= 4.0 * f64::EPSILON * x.abs() || fx.abs() <= 1e-15 * (1.0 + y.abs()) {
                return Ok(nx);
            }
            x = nx;
        }
        Err(Error::Inversion(format!("no convergence for value {y}")))
    }
}

#[allow(clippy::too_many_arguments)]
fn adaptive_simpson(
    f: &dyn Fn(f64) -> Result<f64>,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm)?, f(rm)?);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    Ok(adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
        + adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
}

/// Component-wise chart for diagonal `σ(x) = diag(σ_j(x_j))`.
#[derive(Clone)]
pub struct DiagonalLamperti {
    pub components: Vec<LampertiComponent>,
}

impl DiagonalLamperti {
    pub fn new(components: Vec<LampertiComponent>) -> Self {
        Self { components }
    }

    pub fn map(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.components.iter().zip(x).map(|(c, &v)| c.map(v)).collect()
    }

    pub fn inverse(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.components.iter().zip(y).map(|(c, &v)| c.inverse(v)).collect()
    }
}

pub fn lamperti_map(dl: &DiagonalLamperti, x: &[f64]) -> Result<Vec<f64>> {
    dl.map(x)
}

pub fn lamperti_inverse(dl: &DiagonalLamperti, y: &[f64]) -> Result<Vec<f64>> {
    dl.inverse(y)
}

/// A spec whose factor vanishes outside a stochastic index block.
///
/// Components in `stochastic` follow `dx = b dt + σ̄ dw`; the rest follow `dx = b dt`.
#[derive(Clone, Debug)]
pub struct DegenerateSplit {
    pub spec: DiffusionSpec,
    pub stochastic: Vec<usize>,
    pub deterministic: Vec<usize>,
}

impl DegenerateSplit {
    /// Drift of the stochastic block at a full state.
    pub fn stochastic_drift(&self, x: &[f64]) -> Vec<f64> {
        let mut b = vec![0.0; self.spec.dim()];
        self.spec.drift(x, &mut b);
        self.stochastic.iter().map(|&i| b[i]).collect()
    }

    /// The ODE drift of the deterministic block at a full state.
    pub fn deterministic_drift(&self, x: &[f64]) -> Vec<f64> {
        let mut b = vec![0.0; self.spec.dim()];
        self.spec.drift(x, &mut b);
        self.deterministic.iter().map(|&i| b[i]).collect()
    }

    /// `σ̄`, the invertible `m × m` block, row-major.
    pub fn sigma_bar(&self, x: &[f64]) -> Result<Vec<f64>> {
        let m = self.spec.dim();
        let mut s = vec![0.0; m * m];
        self.spec.sigma(x, &mut s)?;
        Ok(self.stochastic.iter().flat_map(|&i| self.stochastic.iter().map(move |&j| (i, j))).map(|(i, j)| s[i * m + j]).collect())
    }

    /// Reassembles the full drift from the two blocks.
    pub fn reassembled_drift(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.spec.dim()];
        for (&i, v) in self.stochastic.iter().zip(self.stochastic_drift(x)) {
            out[i] = v;
        }
        for (&i, v) in self.deterministic.iter().zip(self.deterministic_drift(x)) {
            out[i] = v;
        }
        out
    }
}

/// Splits off the leading `m × m` block: components `m..M` become deterministic.
pub fn split_degenerate(spec: &DiffusionSpec, m: usize, probes: &[Vec<f64>]) -> Result<DegenerateSplit> {
    let dim = spec.dim();
    if m > dim {
        return Err(Error::Structure(format!("block size {m} exceeds dimension {dim}")));
    }
    split_degenerate_at(spec, &(m..dim).collect::<Vec<_>>(), probes)
}

/// Splits with an arbitrary deterministic index set, checked at every probe point.
pub fn split_degenerate_at(spec: &DiffusionSpec, deterministic: &[usize], probes: &[Vec<f64>]) -> Result<DegenerateSplit> {
    let dim = spec.dim();
    if let Some(&bad) = deterministic.iter().find(|&&i| i >= dim) {
        return Err(Error::Structure(format!("index {bad} out of range for dimension {dim}")));
    }
    let stochastic: Vec<usize> = (0..dim).filter(|i| !deterministic.contains(i)).collect();
    let deterministic: Vec<usize> = (0..dim).filter(|i| deterministic.contains(i)).collect();
    let split = DegenerateSplit { spec: spec.clone(), stochastic, deterministic };
    let mut s = vec![0.0; dim * dim];
    for x in probes {
        spec.sigma(x, &mut s)?;
        for i in 0..dim {
            for j in 0..dim {
                let inside = split.stochastic.contains(&i) && split.stochastic.contains(&j);
                if !inside && s[i * dim + j] != 0.0 {
                    return Err(Error::Structure(format!(
                        "σ[{i}][{j}] = {} lies outside the stochastic block at {x:?}",
                        s[i * dim + j]
                    )));
                }
            }
        }
        let k = split.stochastic.len();
        if k > 0 {
            linalg::inverse_checked(k, &split.sigma_bar(x)?)?;
        }
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn gbm(b: f64) -> DiffusionSpec {
        DiffusionSpec::new(1).with_drift(move |x, o| o[0] = b * x[0]).with_sigma(|x, o| o[0] = x[0])
    }

    #[test]
    fn identity_sigma_keeps_drift() {
        let spec = DiffusionSpec::new(2).with_drift(|x, o| {
            o[0] = x[0].sin();
            o[1] = x[0] * x[1];
        });
        let v = transformed_drift(&spec, &[0.4, -1.2]).unwrap();
        assert_abs_diff_eq!(v[0], 0.4f64.sin(), epsilon = 1e-15);
        assert_abs_diff_eq!(v[1], -0.48, epsilon = 1e-15);
    }

    #[test]
    fn geometric_brownian_motion_shift() {
        for x in [0.3, 1.0, 7.0] {
            assert_abs_diff_eq!(transformed_drift(&gbm(0.1), &[x]).unwrap()[0], 0.1 - 0.5, epsilon = 1e-9);
        }
    }

    #[test]
    fn canonical_spec_lives_in_log_coordinates() {
        // dx = −x log x dt + x dw has b̃(y) = −y − ½ and u(x) = x becomes e^y
        let spec = DiffusionSpec::new(1)
            .with_drift(|x, o| o[0] = -x[0] * x[0].ln())
            .with_sigma(|x, o| o[0] = x[0])
            .with_potential(|x| x[0]);
        let canon = canonical_spec(&spec, |y| Ok(y.iter().map(|v| v.exp()).collect()));
        assert!(canon.has_unit_sigma());
        for y in [-1.0, 0.0, 0.7] {
            let mut b = [0.0];
            canon.drift(&[y], &mut b);
            assert_abs_diff_eq!(b[0], -y - 0.5, epsilon = 1e-8);
            assert_abs_diff_eq!(canon.potential(&[y]), f64::exp(y), epsilon = 1e-15);
        }
        let failing = canonical_spec(&spec, |_| Err(Error::Inversion("no".into())));
        let mut b = [0.0];
        failing.drift(&[0.0], &mut b);
        assert!(b[0].is_nan());
    }

    #[test]
    fn singular_sigma_is_reported() {
        assert!(matches!(transformed_drift(&gbm(0.1), &[0.0]), Err(Error::SingularDiffusion { .. })));
    }

    #[test]
    fn analytic_and_fd_partials_agree() {
        let mk = || {
            DiffusionSpec::new(2)
                .with_drift(|x, o| {
                    o[0] = -x[0] + x[1];
                    o[1] = 0.3 * x[0];
                })
                .with_sigma(|x, o| {
                    o[0] = 1.0 + x[0] * x[0];
                    o[1] = 0.2 * x[1];
                    o[2] = 0.0;
                    o[3] = 2.0 + x[0].sin();
                })
        };
        let analytic = mk().with_sigma_partials(|x, d| {
            d.fill(0.0);
            // index (k·2 + j)·2 + l
            d[0] = 2.0 * x[0];
            d[3] = 0.2;
            d[6] = x[0].cos();
        });
        for x in [[0.3, -0.4], [1.1, 0.9]] {
            let h = 1e-4;
            let a = transformed_drift(&analytic, &x).unwrap();
            let f = transformed_drift_with_step(&mk(), &x, Some(h)).unwrap();
            for (u, v) in a.iter().zip(&f) {
                assert!((u - v).abs() <= 10.0 * h * h, "{u} vs {v}");
            }
        }
    }

    #[test]
    fn effective_potentials() {
        let zero = DiffusionSpec::new(1).with_potential(|y| y[0] * y[0]);
        assert_abs_diff_eq!(effective_potential(&zero, &[1.5], None, false).unwrap(), 2.25, epsilon = 1e-12);
        let theta = 0.8;
        let ou = DiffusionSpec::new(1).with_drift(move |y, o| o[0] = -theta * y[0]);
        for y in [-1.0, 0.0, 2.0] {
            let v = effective_potential(&ou, &[y], None, false).unwrap();
            assert_abs_diff_eq!(v, -0.5 * theta * theta * y * y + theta / 2.0, epsilon = 1e-8);
            let vs = effective_potential(&ou, &[y], None, true).unwrap();
            assert_abs_diff_eq!(v - vs, theta, epsilon = 1e-8);
        }
        assert!(matches!(effective_potential(&gbm(0.1), &[1.0], None, false), Err(Error::Precondition { .. })));
    }

    #[test]
    fn lamperti_charts() {
        let unit = LampertiComponent::new(|_| 1.0, f64::NEG_INFINITY, f64::INFINITY, None).unwrap();
        assert_abs_diff_eq!(unit.map(3.5).unwrap(), 3.5, epsilon = 1e-12);
        let log = LampertiComponent::new(|x| x, 0.0, f64::INFINITY, None).unwrap();
        for x in [1e-6, 0.2, 1.0, 3.0, 1e5] {
            assert_abs_diff_eq!(log.map(x).unwrap(), x.ln(), epsilon = 1e-10 * (1.0 + x.ln().abs()));
        }
        assert_abs_diff_eq!(log.inverse(2.0).unwrap(), 2f64.exp(), epsilon = 1e-10);
        assert_abs_diff_eq!(log.inverse(-40.0).unwrap(), (-40f64).exp(), epsilon = 1e-25);
        let sqrt = LampertiComponent::new(|x: f64| x.sqrt(), 0.0, f64::INFINITY, None).unwrap();
        for x in [0.01, 0.5, 4.0, 30.0] {
            assert_abs_diff_eq!(sqrt.map(x).unwrap(), 2.0 * (x.sqrt() - 1.0), epsilon = 1e-10);
        }
        assert!(matches!(log.map(-1.0), Err(Error::Domain { .. })));
        // y = 2(√x − 1) ≥ −2 on (0, ∞)
        assert!(matches!(sqrt.inverse(-3.0), Err(Error::Inversion(_))));
    }

    #[test]
    fn split_shapes() {
        let diag = |x: &[f64], o: &mut [f64]| {
            o.fill(0.0);
            o[0] = x[0];
            o[4] = x[1];
        };
        let spec = DiffusionSpec::new(3).with_drift(|x, o| o.copy_from_slice(&[x[1], x[2], -x[0]])).with_sigma(diag);
        let probes = vec![vec![1.0, 2.0, 3.0], vec![0.5, 0.1, -1.0]];
        let s = split_degenerate(&spec, 2, &probes).unwrap();
        assert_eq!(s.deterministic, vec![2]);
        for x in &probes {
            let mut b = vec![0.0; 3];
            spec.drift(x, &mut b);
            assert_eq!(s.reassembled_drift(x), b);
        }
        assert!(matches!(split_degenerate(&spec, 1, &probes), Err(Error::Structure(_))));
        let ode = split_degenerate(&DiffusionSpec::new(2).with_constant_sigma(vec![0.0; 4]), 0, &[vec![0.0, 0.0]]).unwrap();
        assert!(ode.stochastic.is_empty());
        let full = split_degenerate(&DiffusionSpec::new(2), 2, &[vec![0.0, 0.0]]).unwrap();
        assert!(full.deterministic.is_empty());
    }

    proptest! {
        #[test]
        fn lamperti_roundtrip(x in 1e-3f64..1e3) {
            let c = LampertiComponent::new(|v: f64| v * (1.0 + 0.5 * v.sin().powi(2)), 0.0, f64::INFINITY, None).unwrap();
            let back = c.inverse(c.map(x).unwrap()).unwrap();
            prop_assert!((back - x).abs() <= 1e-10 * (1.0 + x));
        }

        #[test]
        fn lamperti_roundtrip_real_line(x in -50.0f64..50.0) {
            let c = LampertiComponent::new(|v: f64| 1.0 + v * v, f64::NEG_INFINITY, f64::INFINITY, None).unwrap();
            assert!((c.map(x).unwrap() - x.atan()).abs() < 1e-10);
            let back = c.inverse(c.map(x).unwrap()).unwrap();
            prop_assert!((back - x).abs() <= 1e-10 * (1.0 + x.abs()));
        }
    }
}
