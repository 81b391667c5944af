//! Closed-form propagators and a finite-difference PDE residual.
//!
//! Every kernel `K(t; x, y)` is the transition density from `x` at time 0
//! to `y` at time `t`, weighted by the potential where one is present.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::diffusion::{adjoint_generator_apply, generator_apply, DiffusionSpec};
use crate::error::{Error, Result};

/// Below this `|ωt|` the hyperbolic ratios use their Taylor expansions.
const TAYLOR_GUARD: f64 = 1e-6;

fn check_time(op: &'static str, t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(op, format!("time must be positive, got {t}")))
    }
}

fn check_len(op: &'static str, m: usize, v: &[f64]) -> Result<()> {
    if v.len() == m {
        Ok(())
    } else {
        Err(Error::domain(op, format!("expected a point of length {m}, got {}", v.len())))
    }
}

/// `(2πt)^{−M/2} exp(−|x−y|²/2t)`.
pub fn heat_kernel(m: usize, t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    check_time("heat_kernel", t)?;
    check_len("heat_kernel", m, x)?;
    check_len("heat_kernel", m, y)?;
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((2.0 * PI * t).powf(-0.5 * m as f64) * (-d2 / (2.0 * t)).exp())
}

/// Transition density of `dx = −Θx dt + dw`.
pub fn ou_kernel_1d(theta: f64, t: f64, x: f64, y: f64) -> Result<f64> {
    check_time("ou_kernel_1d", t)?;
    if !(theta > 0.0) {
        return Err(Error::domain("ou_kernel_1d", format!("rate must be positive, got {theta}")));
    }
    let decay = -(-2.0 * theta * t).exp_m1();
    let mean = x * (-theta * t).exp();
    Ok((theta / (PI * decay)).sqrt() * (-theta * (y - mean).powi(2) / decay).exp())
}

/// `log(sinh z / z)` for `z ≥ 0`, stable for small and large `z`.
fn log_sinhc(z: f64) -> f64 {
    if z < TAYLOR_GUARD {
        z * z / 6.0
    } else if z < 20.0 {
        (z.sinh() / z).ln()
    } else {
        z + (-(-2.0 * z).exp()).ln_1p() - std::f64::consts::LN_2 - z.ln()
    }
}

/// `ω coth(ωt)` with the `ω → 0` limit `1/t`.
fn omega_coth(w: f64, t: f64) -> f64 {
    let z = w * t;
    if z < TAYLOR_GUARD {
        (1.0 + z * z / 3.0) / t
    } else {
        w / z.tanh()
    }
}

/// `ω / sinh(ωt)` with the `ω → 0` limit `1/t`.
fn omega_csch(w: f64, t: f64) -> f64 {
    let z = w * t;
    if z < TAYLOR_GUARD {
        (1.0 - z * z / 6.0) / t
    } else if z < 20.0 {
        w / z.sinh()
    } else {
        2.0 * w * (-z).exp() / (-(-2.0 * z).exp()).ln_1p().exp()
    }
}

/// Parameters of the multidimensional Ornstein–Uhlenbeck propagator.
///
/// Drift `b(y) = −Θy` with symmetric `Θ`, potential `u(y) = −½|Θ̂y|²`,
/// frequencies from `Ω² = ΘᵀΘ + Θ̂ᵀΘ̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct OUParams {
    pub theta: DMatrix<f64>,
    pub theta_hat: DMatrix<f64>,
    eigvecs: DMatrix<f64>,
    omegas: DVector<f64>,
}

impl OUParams {
    pub fn new(theta: DMatrix<f64>, theta_hat: DMatrix<f64>) -> Result<Self> {
        let m = theta.nrows();
        if theta.ncols() != m || theta_hat.shape() != (m, m) || m == 0 {
            return Err(Error::domain("OUParams::new", "Θ and Θ̂ must be square of equal size"));
        }
        let asym = (&theta - theta.transpose()).abs().max();
        if asym > 1e-12 * (1.0 + theta.abs().max()) {
            return Err(Error::UnsupportedParameter(format!(
                "Θ has an antisymmetric part of size {asym:e}; only symmetric Θ is supported"
            )));
        }
        let omega2 = theta.transpose() * &theta + theta_hat.transpose() * &theta_hat;
        let omega2 = (&omega2 + omega2.transpose()) * 0.5;
        let eig = SymmetricEigen::new(omega2);
        let omegas = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        Ok(Self { theta, theta_hat, eigvecs: eig.eigenvectors, omegas })
    }

    pub fn dim(&self) -> usize {
        self.theta.nrows()
    }

    /// Eigenvalues of the principal square root `Ω`.
    pub fn frequencies(&self) -> &DVector<f64> {
        &self.omegas
    }

    /// `Q diag(f(ω_i)) Qᵀ`.
    fn matrix_function(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let d = DMatrix::from_diagonal(&self.omegas.map(f));
        &self.eigvecs * d * self.eigvecs.transpose()
    }

    /// The diffusion spec this kernel solves: `b = −Θy`, `σ = I`, `u = −½|Θ̂y|²`.
    pub fn spec(&self) -> DiffusionSpec {
        let m = self.dim();
        let theta = self.theta.clone();
        let th = self.theta_hat.clone();
        DiffusionSpec::new(m)
            .named("ou")
            .with_drift(move |y, out| {
                for i in 0..m {
                    out[i] = -(0..m).map(|j| theta[(i, j)] * y[j]).sum::<f64>();
                }
            })
            .with_potential(move |y| {
                let v = &th * DVector::from_column_slice(y);
                -0.5 * v.norm_squared()
            })
    }
}

/// Multidimensional OU propagator from `x0` to `xf` over time `t`.
pub fn ou_kernel_multi(p: &OUParams, t: f64, x0: &[f64], xf: &[f64]) -> Result<f64> {
    check_time("ou_kernel_multi", t)?;
    let m = p.dim();
    check_len("ou_kernel_multi", m, x0)?;
    check_len("ou_kernel_multi", m, xf)?;
    let a = DVector::from_column_slice(x0);
    let b = DVector::from_column_slice(xf);
    let c = p.matrix_function(|w| omega_coth(w, t));
    let s = p.matrix_function(|w| omega_csch(w, t));
    let log_det: f64 = p.omegas.iter().map(|w| log_sinhc(w * t)).sum();
    let th = &p.theta;
    let exponent = -0.5 * ((b.transpose() * th * &b)[0] - (a.transpose() * th * &a)[0]) + th.trace() * t / 2.0
        - 0.5 * ((b.transpose() * &c * &b)[0] + (a.transpose() * &c * &a)[0])
        + (a.transpose() * &s * &b)[0];
    Ok((-0.5 * m as f64 * (2.0 * PI * t).ln() - 0.5 * log_det + exponent).exp())
}

/// Mehler kernel of `½∂² − ½ω²x²`.
pub fn mehler_1d(omega: f64, t: f64, x: f64, y: f64) -> Result<f64> {
    check_time("mehler_1d", t)?;
    if !(omega >= 0.0) {
        return Err(Error::domain("mehler_1d", format!("frequency must be nonnegative, got {omega}")));
    }
    let csch = omega_csch(omega, t);
    let coth = omega_coth(omega, t);
    Ok((csch / (2.0 * PI)).sqrt() * (-0.5 * (x * x + y * y) * coth + x * y * csch).exp())
}

/// Product of one-dimensional Mehler kernels over independent frequencies.
pub fn mehler_multi(omega: &[f64], t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    check_len("mehler_multi", omega.len(), x)?;
    check_len("mehler_multi", omega.len(), y)?;
    let mut k = 1.0;
    for j in 0..omega.len() {
        k *= mehler_1d(omega[j], t, x[j], y[j])?;
    }
    Ok(k)
}

/// Log-coordinate propagator of multi-asset geometric Brownian motion.
///
/// `exp(−(Δy − b̃t)ᵀ g⁻¹ (Δy − b̃t)/2t) / (|det S| (2πt)^{M/2})`, `g = SSᵀ`.
pub fn gbm_kernel(b_tilde: &[f64], s: &DMatrix<f64>, t: f64, y0: &[f64], yt: &[f64]) -> Result<f64> {
    check_time("gbm_kernel", t)?;
    let m = b_tilde.len();
    check_len("gbm_kernel", m, y0)?;
    check_len("gbm_kernel", m, yt)?;
    if s.shape() != (m, m) {
        return Err(Error::domain("gbm_kernel", "S must be M × M"));
    }
    let det = s.determinant();
    if det == 0.0 || !det.is_finite() {
        return Err(Error::SingularDiffusion { condition: f64::INFINITY });
    }
    let g = s * s.transpose();
    let d = DVector::from_iterator(m, (0..m).map(|i| yt[i] - y0[i] - b_tilde[i] * t));
    let sol = g.clone().lu().solve(&d).ok_or(Error::SingularDiffusion { condition: f64::INFINITY })?;
    let q = d.dot(&sol);
    Ok((-q / (2.0 * t)).exp() / (det.abs() * (2.0 * PI * t).powf(0.5 * m as f64)))
}

/// Which variable a PDE residual differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `∂_t K − L₀†_y K − u(y) K` in the end point.
    Forward,
    /// `∂_t K − L₀_x K − u(x) K` in the start point.
    Backward,
}

/// `K(t, x, y)`.
pub type TimeKernel<'a> = dyn Fn(f64, &[f64], &[f64]) -> Result<f64> + 'a;

/// Finite-difference residual of a kernel `K(t, x, y)` against its evolution equation.
pub fn kernel_pde_residual(
    kernel: &TimeKernel<'_>,
    spec: &DiffusionSpec,
    x: &[f64],
    y: &[f64],
    t: f64,
    h: f64,
    side: Side,
) -> Result<f64> {
    if !(t > 2.0 * h && h > 0.0) {
        return Err(Error::domain("kernel_pde_residual", format!("need t > 2h > 0, got t = {t}, h = {h}")));
    }
    let dt = (kernel(t + h, x, y)? - kernel(t - h, x, y)?) / (2.0 * h);
    // the closures swallow kernel errors as NaN, which the FD layer reports
    let (space, u) = match side {
        Side::Forward => {
            let f = |p: &[f64]| kernel(t, x, p).unwrap_or(f64::NAN);
            (adjoint_generator_apply(spec, &f, y, Some(h))?, spec.potential(y) * kernel(t, x, y)?)
        }
        Side::Backward => {
            let f = |p: &[f64]| kernel(t, p, y).unwrap_or(f64::NAN);
            (generator_apply(spec, &f, x, Some(h))?, spec.potential(x) * kernel(t, x, y)?)
        }
    };
    Ok(dt - space - u)
}
