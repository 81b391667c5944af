//! Wiener increments, the Fourier series of a Wiener path, and Brownian bridges.
//!
//! The series on `[0, t]` is
//!
//! ```text
//! w_s = f₀ s/√t + √(2/t) Σ_{k=1..K} f_k sin(ω_k s)/ω_k
//! ```
//!
//! with i.i.d. standard normal `f₀, f_k`. The default frequencies
//! `ω_k = kπ/t` make the sine part a bridge, so the series has covariance
//! `min(s, s')` as `K → ∞`. The bridge pinned at `x → y` replaces the linear
//! term by `x + (s/t)(y − x)` and keeps the same sine modes.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::diffusion::{Path, TimeGrid};
use crate::error::{Error, Result};
use crate::rng::PathRng;

/// Default number of series modes.
pub const DEFAULT_MODES: usize = 512;

/// `N × M` matrix of independent `Normal(0, δ)` increments, filled row by row.
pub fn sample_increments(rng: &mut PathRng, grid: &TimeGrid, dim: usize) -> Array2<f64> {
    let mut out = Array2::zeros((grid.steps, dim));
    fill_increments(rng, grid.delta, out.as_slice_mut().expect("standard layout"));
    out
}

/// Fills `out` with `Normal(0, δ)` draws.
pub fn fill_increments(rng: &mut PathRng, delta: f64, out: &mut [f64]) {
    let sd = delta.sqrt();
    for v in out.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v = sd * z;
    }
}

/// Cumulative sum of increments starting at zero: an `(N+1) × M` path.
pub fn integrate_increments(grid: &TimeGrid, increments: &Array2<f64>) -> Path {
    let (n, m) = increments.dim();
    let mut values = Array2::zeros((n + 1, m));
    for i in 0..n {
        for j in 0..m {
            values[[i + 1, j]] = values[[i, j]] + increments[[i, j]];
        }
    }
    Path { grid: *grid, values }
}

/// Row differences of a path: the increments it was built from.
pub fn path_increments(path: &Path) -> Array2<f64> {
    let v = &path.values;
    let (n1, m) = v.dim();
    Array2::from_shape_fn((n1 - 1, m), |(i, j)| v[[i + 1, j]] - v[[i, j]])
}

/// Angular frequencies of the sine modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeriesFrequency {
    /// `ω_k = kπ/t`: the sine part is a Brownian bridge.
    #[default]
    HalfPeriod,
    /// `ω_k = 2πk/t`: only even bridge modes; the covariance is not `min(s, s')`.
    FullPeriod,
}

impl SeriesFrequency {
    pub fn omega(self, k: usize, t: f64) -> f64 {
        match self {
            SeriesFrequency::HalfPeriod => k as f64 * PI / t,
            SeriesFrequency::FullPeriod => 2.0 * k as f64 * PI / t,
        }
    }
}

/// Truncated Fourier representation of an `M`-dimensional Wiener path on `[0, t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerSeries {
    pub horizon: f64,
    pub dim: usize,
    pub modes: usize,
    pub frequency: SeriesFrequency,
    pub f0: Vec<f64>,
    /// `K × M` coefficients `f_kj`.
    pub coeffs: Array2<f64>,
}

/// Draws `f₀` then the `K × M` coefficients, all standard normal.
pub fn sample_series(rng: &mut PathRng, t: f64, dim: usize, modes: usize) -> Result<WienerSeries> {
    sample_series_with(rng, t, dim, modes, SeriesFrequency::HalfPeriod)
}

pub fn sample_series_with(
    rng: &mut PathRng,
    t: f64,
    dim: usize,
    modes: usize,
    frequency: SeriesFrequency,
) -> Result<WienerSeries> {
    if modes == 0 {
        return Err(Error::Config("series needs at least one mode".into()));
    }
    if !(t > 0.0) {
        return Err(Error::domain("sample_series", format!("horizon must be positive, got {t}")));
    }
    let f0: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let coeffs = Array2::from_shape_simple_fn((modes, dim), || rng.sample(StandardNormal));
    Ok(WienerSeries { horizon: t, dim, modes, frequency, f0, coeffs })
}

fn check_time(op: &'static str, s: f64, t: f64) -> Result<()> {
    if (0.0..=t).contains(&s) {
        Ok(())
    } else {
        Err(Error::domain(op, format!("time {s} outside [0, {t}]")))
    }
}

impl WienerSeries {
    /// `w_s`; exactly zero at `s = 0` and exactly `√t f₀` at `s = t`.
    pub fn eval(&self, s: f64) -> Result<Vec<f64>> {
        let t = self.horizon;
        check_time("eval_series", s, t)?;
        if s == 0.0 {
            return Ok(vec![0.0; self.dim]);
        }
        if s == t {
            return Ok(self.f0.iter().map(|f| t.sqrt() * f).collect());
        }
        let mut out: Vec<f64> = self.f0.iter().map(|f| f * s / t.sqrt()).collect();
        let c = (2.0 / t).sqrt();
        for k in 1..=self.modes {
            let w = self.frequency.omega(k, t);
            let a = c * (w * s).sin() / w;
            for (o, f) in out.iter_mut().zip(self.coeffs.row(k - 1)) {
                *o += a * f;
            }
        }
        Ok(out)
    }

    /// The series sampled at every grid node; increments are row differences.
    pub fn to_path(&self, grid: &TimeGrid) -> Result<Path> {
        if (grid.horizon - self.horizon).abs() > 1e-12 * self.horizon {
            return Err(Error::domain("to_path", "grid horizon differs from series horizon"));
        }
        let mut values = Array2::zeros((grid.steps + 1, self.dim));
        for n in 0..=grid.steps {
            let w = self.eval(grid.time(n).min(self.horizon))?;
            values.row_mut(n).assign(&ndarray::ArrayView1::from(&w));
        }
        Ok(Path { grid: *grid, values })
    }
}

/// Bridge pinned at `x` (time 0) and `y` (time `t`), built from the sine coefficients of `series`.
pub fn bridge_eval(x: &[f64], y: &[f64], series: &WienerSeries, s: f64) -> Result<Vec<f64>> {
    let t = series.horizon;
    check_time("bridge_eval", s, t)?;
    if s == 0.0 {
        return Ok(x.to_vec());
    }
    if s == t {
        return Ok(y.to_vec());
    }
    let r = s / t;
    let mut out: Vec<f64> = x.iter().zip(y).map(|(a, b)| a + r * (b - a)).collect();
    let c = (2.0 * t).sqrt() / PI;
    for k in 1..=series.modes {
        let a = c * (k as f64 * PI * r).sin() / k as f64;
        for (o, f) in out.iter_mut().zip(series.coeffs.row(k - 1)) {
            *o += a * f;
        }
    }
    Ok(out)
}

/// Second Bernoulli polynomial `x² − x + 1/6`.
pub fn bernoulli_b2(x: f64) -> f64 {
    x * x - x + 1.0 / 6.0
}

/// Untruncated series covariance `E[w_s w_s']`.
///
/// With half-period frequencies this is `ss'/t − t(B₂((s+s')/2t) − B₂(|s−s'|/2t)) = min(s, s')`.
/// With full-period frequencies it is `ss'/t − (t/4)(B₂((s+s')/t) − B₂(|s−s'|/t))`.
pub fn series_covariance_exact(s: f64, sp: f64, t: f64, frequency: SeriesFrequency) -> f64 {
    let lin = s * sp / t;
    match frequency {
        SeriesFrequency::HalfPeriod => lin - t * (bernoulli_b2((s + sp) / (2.0 * t)) - bernoulli_b2((s - sp).abs() / (2.0 * t))),
        SeriesFrequency::FullPeriod => {
            let periodic = |x: f64| bernoulli_b2(x - x.floor());
            lin - 0.25 * t * (periodic((s + sp) / t) - periodic((s - sp).abs() / t))
        }
    }
}

/// The `K`-mode analytic covariance `ss'/t + (2/t) Σ sin(ω_k s) sin(ω_k s')/ω_k²`.
pub fn series_covariance_truncated(s: f64, sp: f64, t: f64, modes: usize, frequency: SeriesFrequency) -> f64 {
    let mut acc = 0.0;
    for k in (1..=modes).rev() {
        let w = frequency.omega(k, t);
        acc += (w * s).sin() * (w * sp).sin() / (w * w);
    }
    s * sp / t + 2.0 / t * acc
}

/// Bound on `|min(s,s') − truncated covariance|`: `(2t/π²) Σ_{k>K} 1/k²`.
pub fn truncation_tail_bound(t: f64, modes: usize) -> f64 {
    // Σ_{k>K} 1/k² < 1/K
    2.0 * t / (PI * PI) / modes as f64
}

/// Number of sine modes used by a [`BridgeSampler`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Modes {
    Finite(usize),
    /// The limit `K → ∞`: the exact Brownian bridge at the nodes.
    Full,
}

impl Modes {
    pub fn count(self) -> Option<usize> {
        match self {
            Modes::Finite(k) => Some(k),
            Modes::Full => None,
        }
    }
}

/// Above this many nodes the sine synthesis goes through an FFT.
const TABLE_LIMIT: usize = 128;

/// Samples bridge paths at `Q + 1` uniform nodes, distributed exactly as the `K`-mode series.
///
/// At node `i` the mode `k` contributes `sin(kπi/Q)`, which aliases onto mode
/// `j ∈ 1..Q` with a sign, or vanishes when `Q | k`. Folding the independent
/// coefficients of each alias class leaves one Gaussian per `j`, with variance
/// `v_j = Σ 1/k²` over the class. For `K = ∞`,
/// `v_j = π²/(4Q² sin²(jπ/2Q))`.
#[derive(Clone)]
pub struct BridgeSampler {
    horizon: f64,
    nodes: usize,
    modes: Modes,
    scale: Vec<f64>,
    synth: Synthesis,
}

#[derive(Clone)]
enum Synthesis {
    Table(Vec<f64>),
    Fft(Arc<dyn Fft<f64>>),
}

/// Per-worker buffers for [`BridgeSampler::sample_into`].
#[derive(Default)]
pub struct BridgeScratch {
    coeffs: Vec<f64>,
    fft: Vec<Complex<f64>>,
    fft_work: Vec<Complex<f64>>,
}

impl std::fmt::Debug for BridgeSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BridgeSampler").field("horizon", &self.horizon).field("nodes", &self.nodes).field("modes", &self.modes).finish()
    }
}

impl BridgeSampler {
    pub fn new(horizon: f64, steps: usize, modes: Modes) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(Error::domain("BridgeSampler::new", format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::Config("bridge needs at least one step".into()));
        }
        if modes == Modes::Finite(0) {
            return Err(Error::Config("bridge needs at least one mode".into()));
        }
        let q = steps;
        let variances: Vec<f64> = match modes {
            Modes::Full => (1..q)
                .map(|j| {
                    let s = (j as f64 * PI / (2.0 * q as f64)).sin();
                    PI * PI / (4.0 * (q * q) as f64 * s * s)
                })
                .collect(),
            Modes::Finite(k) => {
                let mut v = vec![0.0; q.saturating_sub(1)];
                for m in (1..=k).rev() {
                    let r = m % (2 * q);
                    let j = if r < q { r } else { 2 * q - r };
                    if j != 0 && j != q {
                        v[j - 1] += 1.0 / (m * m) as f64;
                    }
                }
                v
            }
        };
        let c = (2.0 * horizon).sqrt() / PI;
        let scale = variances.iter().map(|v| c * v.sqrt()).collect();
        let synth = if q <= TABLE_LIMIT {
            let mut table = vec![0.0; (q + 1) * q.saturating_sub(1)];
            for i in 0..=q {
                for j in 1..q {
                    // reduce jπi/Q exactly before taking the sine
                    let r = (i * j) % (2 * q);
                    table[i * (q - 1) + (j - 1)] = (PI * r as f64 / q as f64).sin();
                }
            }
            Synthesis::Table(table)
        } else {
            Synthesis::Fft(FftPlanner::new().plan_fft_forward(2 * q))
        };
        Ok(Self { horizon, nodes: q, modes, scale, synth })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.nodes
    }

    pub fn modes(&self) -> Modes {
        self.modes
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid::new(self.horizon, self.nodes).expect("validated at construction")
    }

    /// Writes the bridge `x → y` into `out`, an `(Q+1) × M` row-major buffer.
    pub fn sample_into(&self, rng: &mut PathRng, x: &[f64], y: &[f64], scratch: &mut BridgeScratch, out: &mut [f64]) {
        let m = x.len();
        let q = self.nodes;
        debug_assert_eq!(out.len(), (q + 1) * m);
        for i in 0..=q {
            let r = i as f64 / q as f64;
            for d in 0..m {
                out[i * m + d] = x[d] + r * (y[d] - x[d]);
            }
        }
        if q < 2 {
            return;
        }
        scratch.coeffs.resize(q - 1, 0.0);
        for d in 0..m {
            for (c, s) in scratch.coeffs.iter_mut().zip(&self.scale) {
                let z: f64 = rng.sample(StandardNormal);
                *c = s * z;
            }
            match &self.synth {
                Synthesis::Table(table) => {
                    for i in 1..q {
                        let row = &table[i * (q - 1)..(i + 1) * (q - 1)];
                        let s: f64 = row.iter().zip(&scratch.coeffs).map(|(a, b)| a * b).sum();
                        out[i * m + d] += s;
                    }
                }
                Synthesis::Fft(fft) => {
                    let n = 2 * q;
                    scratch.fft.clear();
                    scratch.fft.resize(n, Complex::new(0.0, 0.0));
                    for j in 1..q {
                        scratch.fft[j].re = scratch.coeffs[j - 1];
                        scratch.fft[n - j].re = -scratch.coeffs[j - 1];
                    }
                    scratch.fft_work.resize(fft.get_inplace_scratch_len(), Complex::new(0.0, 0.0));
                    fft.process_with_scratch(&mut scratch.fft, &mut scratch.fft_work);
                    // X_i = −2i Σ c_j sin(πij/Q)
                    for i in 1..q {
                        out[i * m + d] += -0.5 * scratch.fft[i].im;
                    }
                }
            }
        }
    }

    /// Convenience wrapper returning a [`Path`].
    pub fn sample(&self, rng: &mut PathRng, x: &[f64], y: &[f64]) -> Path {
        let mut out = vec![0.0; (self.nodes + 1) * x.len()];
        self.sample_into(rng, x, y, &mut BridgeScratch::default(), &mut out);
        Path { grid: self.grid(), values: Array2::from_shape_vec((self.nodes + 1, x.len()), out).expect("shape") }
    }
}
