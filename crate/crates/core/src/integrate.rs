//! Time steppers: left-point Euler–Maruyama, midpoint Heun, and the DST integrating factor.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::diffusion::{DiffusionSpec, Path, TimeGrid};
use crate::error::{Error, Result};

/// States beyond this sup-norm abort the integration.
pub const BLOW_UP: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    ItoEuler,
    StratHeun,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    pub grid: TimeGrid,
}

impl SchemeConfig {
    pub fn run(&self, spec: &DiffusionSpec, x0: &[f64], increments: &Array2<f64>) -> Result<Path> {
        match self.scheme {
            Scheme::ItoEuler => euler_maruyama(spec, x0, &self.grid, increments),
            Scheme::StratHeun => stratonovich_heun(spec, x0, &self.grid, increments),
        }
    }
}

fn check_shapes(op: &'static str, spec: &DiffusionSpec, x0: &[f64], grid: &TimeGrid, inc: &Array2<f64>) -> Result<()> {
    let m = spec.dim();
    if x0.len() != m || inc.dim() != (grid.steps, m) {
        return Err(Error::domain(
            op,
            format!("expected x0 of length {m} and {}×{m} increments, got {} and {:?}", grid.steps, x0.len(), inc.dim()),
        ));
    }
    Ok(())
}

fn guard(state: &[f64], step: usize) -> Result<()> {
    if state.iter().all(|v| v.is_finite() && v.abs() <= BLOW_UP) {
        Ok(())
    } else {
        Err(Error::BlowUp { step })
    }
}

/// Reusable buffers for the in-place steppers.
#[derive(Debug, Default, Clone)]
pub struct StepScratch {
    b: Vec<f64>,
    b2: Vec<f64>,
    s: Vec<f64>,
    s2: Vec<f64>,
    pred: Vec<f64>,
}

impl StepScratch {
    fn ensure(&mut self, m: usize) {
        self.b.resize(m, 0.0);
        self.b2.resize(m, 0.0);
        self.s.resize(m * m, 0.0);
        self.s2.resize(m * m, 0.0);
        self.pred.resize(m, 0.0);
    }
}

fn add_noise(m: usize, unit: bool, sigma: &[f64], dw: &[f64], scale: f64, out: &mut [f64]) {
    if unit {
        for i in 0..m {
            out[i] += scale * dw[i];
        }
        return;
    }
    for i in 0..m {
        let row = &sigma[i * m..(i + 1) * m];
        out[i] += scale * row.iter().zip(dw).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `x_{n+1} = x_n + δ b(x_n) + σ(x_n) Δw_n`, writing `(N+1) × M` states into `out`.
pub fn euler_maruyama_into(
    spec: &DiffusionSpec,
    x0: &[f64],
    delta: f64,
    increments: &[f64],
    scratch: &mut StepScratch,
    out: &mut [f64],
) -> Result<()> {
    let m = spec.dim();
    let n = increments.len() / m;
    scratch.ensure(m);
    out[..m].copy_from_slice(x0);
    let unit = spec.has_unit_sigma();
    let constant = spec.has_constant_sigma();
    if constant {
        spec.sigma(x0, &mut scratch.s)?;
    }
    for k in 0..n {
        let (done, rest) = out.split_at_mut((k + 1) * m);
        let x = &done[k * m..];
        let next = &mut rest[..m];
        spec.drift(x, &mut scratch.b);
        if !unit && !constant {
            spec.sigma(x, &mut scratch.s)?;
        }
        for i in 0..m {
            next[i] = x[i] + delta * scratch.b[i];
        }
        add_noise(m, unit, &scratch.s, &increments[k * m..(k + 1) * m], 1.0, next);
        guard(next, k + 1)?;
    }
    Ok(())
}

/// Left-point Euler–Maruyama.
pub fn euler_maruyama(spec: &DiffusionSpec, x0: &[f64], grid: &TimeGrid, increments: &Array2<f64>) -> Result<Path> {
    check_shapes("euler_maruyama", spec, x0, grid, increments)?;
    let mut values = Array2::zeros((grid.steps + 1, spec.dim()));
    euler_maruyama_into(
        spec,
        x0,
        grid.delta,
        increments.as_standard_layout().as_slice().expect("standard layout"),
        &mut StepScratch::default(),
        values.as_slice_mut().expect("standard layout"),
    )?;
    Ok(Path { grid: *grid, values })
}

/// Predictor–corrector Heun step: drift and noise averaged over `x_n` and the Euler predictor.
///
/// Converges to the Stratonovich solution.
pub fn stratonovich_heun_into(
    spec: &DiffusionSpec,
    x0: &[f64],
    delta: f64,
    increments: &[f64],
    scratch: &mut StepScratch,
    out: &mut [f64],
) -> Result<()> {
    let m = spec.dim();
    let n = increments.len() / m;
    scratch.ensure(m);
    out[..m].copy_from_slice(x0);
    let unit = spec.has_unit_sigma();
    for k in 0..n {
        let (done, rest) = out.split_at_mut((k + 1) * m);
        let x = &done[k * m..];
        let next = &mut rest[..m];
        let dw = &increments[k * m..(k + 1) * m];
        spec.drift(x, &mut scratch.b);
        if !unit {
            spec.sigma(x, &mut scratch.s)?;
        }
        for ((p, xi), bi) in scratch.pred.iter_mut().zip(x).zip(&scratch.b) {
            *p = xi + delta * bi;
        }
        add_noise(m, unit, &scratch.s, dw, 1.0, &mut scratch.pred);
        guard(&scratch.pred, k + 1)?;
        spec.drift(&scratch.pred, &mut scratch.b2);
        if !unit {
            spec.sigma(&scratch.pred, &mut scratch.s2)?;
        }
        for i in 0..m {
            next[i] = x[i] + 0.5 * delta * (scratch.b[i] + scratch.b2[i]);
        }
        add_noise(m, unit, &scratch.s, dw, 0.5, next);
        add_noise(m, unit, &scratch.s2, dw, 0.5, next);
        guard(next, k + 1)?;
    }
    Ok(())
}

pub fn stratonovich_heun(spec: &DiffusionSpec, x0: &[f64], grid: &TimeGrid, increments: &Array2<f64>) -> Result<Path> {
    check_shapes("stratonovich_heun", spec, x0, grid, increments)?;
    let mut values = Array2::zeros((grid.steps + 1, spec.dim()));
    stratonovich_heun_into(
        spec,
        x0,
        grid.delta,
        increments.as_standard_layout().as_slice().expect("standard layout"),
        &mut StepScratch::default(),
        values.as_slice_mut().expect("standard layout"),
    )?;
    Ok(Path { grid: *grid, values })
}

/// Drift correction `c_j = ½ Σ_{k,l} σ_lk ∂_l σ_jk` turning a Stratonovich SDE into Itô form.
pub fn ito_strat_drift_shift(spec: &DiffusionSpec, x: &[f64]) -> Result<Vec<f64>> {
    let m = spec.dim();
    let mut s = vec![0.0; m * m];
    spec.sigma(x, &mut s)?;
    let mut d = vec![0.0; m * m * m];
    spec.sigma_partials(x, None, &mut d)?;
    Ok((0..m)
        .map(|j| {
            let mut c = 0.0;
            for k in 0..m {
                for l in 0..m {
                    c += s[l * m + k] * d[(j * m + k) * m + l];
                }
            }
            0.5 * c
        })
        .collect())
}

/// The Itô spec with the same law as the Stratonovich reading of `spec`.
pub fn with_drift_shift(spec: &DiffusionSpec) -> DiffusionSpec {
    let inner = spec.clone();
    let m = spec.dim();
    let shifted = spec.clone().named(format!("{}-shifted", spec.name())).with_drift(move |x, out| {
        inner.drift(x, out);
        match ito_strat_drift_shift(&inner, x) {
            Ok(c) => out.iter_mut().zip(c).for_each(|(o, c)| *o += c),
            Err(_) => out.fill(f64::NAN),
        }
    });
    // with_drift resets nothing else; σ and its flags carry over
    debug_assert_eq!(shifted.dim(), m);
    shifted
}

/// `y ← (I + δ𝒜 + … + (δ𝒜)^order/order!) y` with `(𝒜y)_j = y_j − ℬ_j y_{j+1}` (cyclic).
fn exp_step(y: &mut [f64], coupling: &[f64], delta: f64, order: usize, term: &mut Vec<f64>, next: &mut Vec<f64>) {
    let m = y.len();
    term.clear();
    term.extend_from_slice(y);
    for k in 1..=order {
        next.clear();
        next.extend((0..m).map(|j| delta / k as f64 * (term[j] - coupling[j] * term[(j + 1) % m])));
        std::mem::swap(term, next);
        for j in 0..m {
            y[j] += term[j];
        }
    }
}

/// Solves the DST system with `c_j = 1` through the integrating factor `F_j = exp(−w_j + t/2)`.
///
/// `y = F x` obeys the random linear ODE `y' = 𝒜(t) y` with `𝒜 = I − ℬ`,
/// `ℬ_j = exp(w_{j+1} − w_j)` on the cyclic superdiagonal. Each step applies
/// the exponential of `δ𝒜(t_n)` truncated after `order` terms.
pub fn dst_integrating_factor(x0: &[f64], wiener: &Path, order: usize) -> Result<Path> {
    if order < 1 {
        return Err(Error::Config("integrating-factor order must be at least 1".into()));
    }
    let m = x0.len();
    if wiener.dim() != m {
        return Err(Error::domain("dst_integrating_factor", format!("Wiener path has {} components, expected {m}", wiener.dim())));
    }
    let grid = wiener.grid;
    let mut values = Array2::zeros((grid.steps + 1, m));
    let mut y = x0.to_vec();
    let w0 = wiener.at(0);
    for j in 0..m {
        y[j] *= (-w0[j]).exp();
    }
    let (mut coupling, mut term, mut next) = (vec![0.0; m], Vec::new(), Vec::new());
    for n in 0..=grid.steps {
        let w = wiener.at(n);
        let t = grid.time(n);
        for j in 0..m {
            values[[n, j]] = (w[j] - 0.5 * t).exp() * y[j];
        }
        guard(values.row(n).as_slice().expect("row"), n)?;
        if n == grid.steps {
            break;
        }
        for j in 0..m {
            coupling[j] = (w[(j + 1) % m] - w[j]).exp();
        }
        exp_step(&mut y, &coupling, grid.delta, order, &mut term, &mut next);
    }
    Ok(Path { grid, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{domain, RngPolicy};
    use crate::stats::mean_stderr;
    use crate::wiener::{integrate_increments, sample_increments};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn rng(i: u64) -> crate::rng::PathRng {
        RngPolicy::new(5).stream(domain::INCREMENTS, i)
    }

    fn gbm(b: f64) -> DiffusionSpec {
        DiffusionSpec::new(1).with_drift(move |x, o| o[0] = b * x[0]).with_sigma(|x, o| o[0] = x[0])
    }

    #[test]
    fn frozen_and_pure_wiener_paths() {
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let inc = sample_increments(&mut rng(0), &grid, 2);
        let frozen = DiffusionSpec::new(2).with_constant_sigma(vec![0.0; 4]);
        let p = euler_maruyama(&frozen, &[1.0, -2.0], &grid, &inc).unwrap();
        assert!(p.values.rows().into_iter().all(|r| r[0] == 1.0 && r[1] == -2.0));
        let p = euler_maruyama(&DiffusionSpec::new(2), &[0.0, 0.0], &grid, &inc).unwrap();
        assert_eq!(p.values, integrate_increments(&grid, &inc).values);
    }

    #[test]
    fn gbm_strong_error_decays_like_sqrt_delta() {
        let paths = 400;
        let fine = TimeGrid::new(1.0, 1024).unwrap();
        let mut errs = Vec::new();
        for level in [16usize, 64, 256] {
            let grid = TimeGrid::new(1.0, level).unwrap();
            let ratio = fine.steps / level;
            let mut total = 0.0;
            for i in 0..paths {
                let f = sample_increments(&mut rng(i), &fine, 1);
                let inc = Array2::from_shape_fn((level, 1), |(k, _)| (0..ratio).map(|r| f[[k * ratio + r, 0]]).sum());
                let wt: f64 = f.sum();
                let p = euler_maruyama(&gbm(0.3), &[1.0], &grid, &inc).unwrap();
                total += (p.terminal()[0] - ((0.3 - 0.5) + wt).exp()).abs();
            }
            errs.push(total / paths as f64);
        }
        // two quarterings of δ: each should halve the error
        for w in errs.windows(2) {
            let r = w[1] / w[0];
            assert!((0.35..0.7).contains(&r), "ratio {r} from {errs:?}");
        }
    }

    #[test]
    fn heun_is_rk2_without_noise() {
        let spec = DiffusionSpec::new(1).with_drift(|x, o| o[0] = -x[0]).with_constant_sigma(vec![0.0]);
        let err = |n: usize| {
            let g = TimeGrid::new(1.0, n).unwrap();
            let p = stratonovich_heun(&spec, &[1.0], &g, &Array2::zeros((n, 1))).unwrap();
            (p.terminal()[0] - (-1f64).exp()).abs()
        };
        let r = err(20) / err(40);
        assert!((3.6..4.4).contains(&r), "ratio {r}");
    }

    #[test]
    fn heun_matches_shifted_euler_pathwise() {
        // dx = x∘dw has Itô form dx = ½x dt + x dw
        let spec = DiffusionSpec::new(1).with_sigma(|x, o| o[0] = x[0]);
        let shifted = with_drift_shift(&spec);
        let fine = TimeGrid::new(1.0, 4096).unwrap();
        let f = sample_increments(&mut rng(3), &fine, 1);
        let dev = |n: usize| {
            let ratio = fine.steps / n;
            let inc = Array2::from_shape_fn((n, 1), |(k, _)| (0..ratio).map(|r| f[[k * ratio + r, 0]]).sum());
            let g = TimeGrid::new(1.0, n).unwrap();
            let a = stratonovich_heun(&spec, &[1.0], &g, &inc).unwrap();
            let b = euler_maruyama(&shifted, &[1.0], &g, &inc).unwrap();
            (a.terminal()[0] - b.terminal()[0]).abs()
        };
        assert!(dev(4096) < dev(64));
        assert!(dev(4096) < 0.05);
    }

    #[test]
    fn drift_shift_examples() {
        let c = DiffusionSpec::new(2).with_constant_sigma(vec![1.0, 0.5, 0.0, 2.0]);
        assert_eq!(ito_strat_drift_shift(&c, &[0.3, 0.4]).unwrap(), vec![0.0, 0.0]);
        assert_abs_diff_eq!(ito_strat_drift_shift(&gbm(0.0), &[1.7]).unwrap()[0], 0.85, epsilon = 1e-8);
        let diag = DiffusionSpec::new(3).with_sigma(|x, o| {
            o.fill(0.0);
            for j in 0..3 {
                o[j * 3 + j] = x[j];
            }
        });
        let v = ito_strat_drift_shift(&diag, &[1.0, -2.0, 0.5]).unwrap();
        for (a, b) in v.iter().zip([0.5, -1.0, 0.25]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-8);
        }
    }

    #[test]
    fn ou_mean_converges() {
        let spec = DiffusionSpec::new(1).with_drift(|x, o| o[0] = -x[0]);
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let xs: Vec<f64> = (0..4000)
            .map(|i| euler_maruyama(&spec, &[2.0], &grid, &sample_increments(&mut rng(i), &grid, 1)).unwrap().terminal()[0])
            .collect();
        let (m, e) = mean_stderr(&xs).unwrap();
        // EM mean is 2(1−δ)^N; bias against 2e⁻¹ is O(δ)
        let bias = (2.0 * (-1f64).exp() - 2.0 * 0.99f64.powi(100)).abs();
        assert!((m - 2.0 * (-1f64).exp()).abs() < 3.0 * e + bias);
    }

    #[test]
    fn blow_up_reports_step() {
        let spec = DiffusionSpec::new(1).with_drift(|x, o| o[0] = x[0] * x[0]).with_constant_sigma(vec![0.0]);
        let grid = TimeGrid::new(10.0, 100).unwrap();
        match euler_maruyama(&spec, &[1.0], &grid, &Array2::zeros((100, 1))) {
            Err(Error::BlowUp { step }) => assert!(step > 1 && step < 100),
            other => panic!("{other:?}"),
        }
    }

    fn dense_expm(a: &DMatrix<f64>) -> DMatrix<f64> {
        // scaling and squaring with a long Taylor series
        let s = 10;
        let b = a / 2f64.powi(s);
        let mut term = DMatrix::identity(a.nrows(), a.ncols());
        let mut sum = term.clone();
        for k in 1..30 {
            term = &term * &b / k as f64;
            sum += &term;
        }
        for _ in 0..s {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn integrating_factor_zero_noise_matches_matrix_exponential() {
        let m = 8;
        let grid = TimeGrid::new(1.0, 512).unwrap();
        let zero = Path { grid, values: Array2::zeros((513, m)) };
        let x0: Vec<f64> = (0..m).map(|j| 1.0 + 0.1 * j as f64).collect();
        let p = dst_integrating_factor(&x0, &zero, 12).unwrap();
        let mut a = DMatrix::<f64>::identity(m, m);
        for j in 0..m {
            a[(j, (j + 1) % m)] -= 1.0;
        }
        let want = dense_expm(&a) * nalgebra::DVector::from_vec(x0) * (-0.5f64).exp();
        for j in 0..m {
            assert_abs_diff_eq!(p.terminal()[j], want[j], epsilon = 1e-8);
        }
        assert!(matches!(dst_integrating_factor(&[1.0], &Path { grid, values: Array2::zeros((513, 1)) }, 0), Err(Error::Config(_))));
    }

    #[test]
    fn integrating_factor_scalar_case_is_exact() {
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let w = integrate_increments(&grid, &sample_increments(&mut rng(8), &grid, 1));
        let p = dst_integrating_factor(&[1.5], &w, 2).unwrap();
        for n in 0..=64 {
            assert_abs_diff_eq!(p.at(n)[0], 1.5 * (w.at(n)[0] - 0.5 * grid.time(n)).exp(), epsilon = 1e-12);
        }
    }

    proptest! {
        #[test]
        fn integrating_factor_is_linear(seed in 0u64..500) {
            let grid = TimeGrid::new(0.5, 32).unwrap();
            let w = integrate_increments(&grid, &sample_increments(&mut RngPolicy::new(seed).stream(domain::INCREMENTS, 0), &grid, 4));
            let x0 = [1.0, 0.5, 2.0, 0.25];
            let a = dst_integrating_factor(&x0, &w, 2).unwrap();
            let b = dst_integrating_factor(&x0.map(|v| 2.0 * v), &w, 2).unwrap();
            for (u, v) in a.values.iter().zip(b.values.iter()) {
                prop_assert_eq!(2.0 * u, *v);
            }
        }
    }
}
