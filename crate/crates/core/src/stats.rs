//! Monte Carlo summaries with deterministic reductions.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::parallel::pairwise_sum;

/// Settings echoed alongside an estimate.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunEcho {
    pub horizon: f64,
    pub steps: usize,
    /// Bridge or series modes; `None` means the untruncated sampler.
    pub modes: Option<usize>,
    pub seed: u64,
}

/// Mean and standard error of `n_paths` samples; `stderr = std/√n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub echo: RunEcho,
}

impl MCEstimate {
    /// Estimate from plain samples.
    pub fn from_samples(samples: &[f64], echo: RunEcho) -> Result<Self> {
        let (mean, stderr) = mean_stderr(samples)?;
        Ok(Self { mean, stderr, n_paths: samples.len(), echo })
    }

    /// Estimate of `scale · E[exp(L)]` from log-weights `L`, shifted by their maximum.
    pub fn from_log_weights(log_weights: &[f64], scale: f64, echo: RunEcho) -> Result<Self> {
        let shift = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !shift.is_finite() {
            return Err(Error::DegenerateWeight(format!("maximum log-weight is {shift}")));
        }
        let w: Vec<f64> = log_weights.iter().map(|l| (l - shift).exp()).collect();
        let (m, s) = mean_stderr(&w)?;
        let factor = scale * shift.exp();
        let (mean, stderr) = (m * factor, s * factor);
        if !mean.is_finite() || !stderr.is_finite() {
            return Err(Error::NonFinite { point: vec![shift] });
        }
        Ok(Self { mean, stderr, n_paths: w.len(), echo })
    }

    /// |mean − target| in units of stderr (0 when both vanish).
    pub fn z_score(&self, target: f64) -> f64 {
        let d = (self.mean - target).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.stderr
        }
    }
}

/// Sample mean and `std/√n` with the unbiased variance.
pub fn mean_stderr(x: &[f64]) -> Result<(f64, f64)> {
    let n = x.len();
    if n < 2 {
        return Err(Error::Config(format!("need at least 2 samples, got {n}")));
    }
    let mean = pairwise_sum(x) / n as f64;
    let dev: Vec<f64> = x.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    Ok((mean, (var / n as f64).sqrt()))
}

/// Unbiased sample covariance of two equally long samples.
pub fn covariance(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let ma = pairwise_sum(a) / n as f64;
    let mb = pairwise_sum(b) / n as f64;
    let prod: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).collect();
    pairwise_sum(&prod) / (n - 1) as f64
}

/// Self-normalized ratio `Σ oᵢwᵢ / Σ wᵢ` with a leave-one-out jackknife error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub echo: RunEcho,
}

/// Ratio estimate from observables and log-weights (max-shifted before exponentiation).
pub fn jackknife_ratio(observables: &[f64], log_weights: &[f64], echo: RunEcho) -> Result<RatioEstimate> {
    let n = observables.len();
    if n != log_weights.len() || n < 2 {
        return Err(Error::Config(format!("ratio needs matching samples, got {n} and {}", log_weights.len())));
    }
    let shift = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Err(Error::DegenerateWeight(format!("maximum log-weight is {shift}")));
    }
    let w: Vec<f64> = log_weights.iter().map(|l| (l - shift).exp()).collect();
    let ow: Vec<f64> = observables.iter().zip(&w).map(|(o, w)| o * w).collect();
    let sw = pairwise_sum(&w);
    let sow = pairwise_sum(&ow);
    if !(sw > 0.0) {
        return Err(Error::DegenerateWeight("weights sum to zero".into()));
    }
    let value = sow / sw;
    let loo: Vec<f64> = (0..n)
        .map(|i| {
            let d = sw - w[i];
            if d > 0.0 {
                (sow - ow[i]) / d
            } else {
                value
            }
        })
        .collect();
    let mean_loo = pairwise_sum(&loo) / n as f64;
    let dev: Vec<f64> = loo.iter().map(|r| (r - mean_loo) * (r - mean_loo)).collect();
    let stderr = ((n - 1) as f64 / n as f64 * pairwise_sum(&dev)).sqrt();
    if !value.is_finite() {
        return Err(Error::DegenerateWeight(format!("ratio is {value}")));
    }
    Ok(RatioEstimate { value, stderr, n_paths: n, echo })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_samples_have_zero_error() {
        let e = MCEstimate::from_samples(&[2.5; 10], RunEcho::default()).unwrap();
        assert_eq!((e.mean, e.stderr, e.n_paths), (2.5, 0.0, 10));
    }

    #[test]
    fn shifted_weights_survive_underflow() {
        // e^-1000 underflows, the shifted weights 1 and 3 do not
        let r = jackknife_ratio(&[1.0, 2.0], &[-1000.0, -1000.0 + 3f64.ln()], RunEcho::default()).unwrap();
        assert!((r.value - 1.75).abs() < 1e-12);
        let e = MCEstimate::from_log_weights(&[700.0, 700.0], 1e-300, RunEcho::default()).unwrap();
        assert!((e.mean / (700f64.exp() * 1e-300) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stderr_matches_formula() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let (m, s) = mean_stderr(&x).unwrap();
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert!(mean_stderr(&[1.0]).is_err());
    }

    #[test]
    fn ratio_with_equal_weights_is_mean() {
        let o = [1.0, 2.0, 3.0, 6.0];
        let r = jackknife_ratio(&o, &[0.0; 4], RunEcho::default()).unwrap();
        assert!((r.value - 3.0).abs() < 1e-15);
        // with equal weights the jackknife error equals std/√n
        let (_, s) = mean_stderr(&o).unwrap();
        assert!((r.stderr - s).abs() < 1e-12);
    }

    #[test]
    fn ratio_rejects_degenerate_weights() {
        assert!(matches!(
            jackknife_ratio(&[1.0, 2.0], &[f64::NEG_INFINITY; 2], RunEcho::default()),
            Err(Error::DegenerateWeight(_))
        ));
    }
}
