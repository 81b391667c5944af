//! Diffusion specs of integrable lattice models.
//!
//! Sites are 0-based. DST, DNLS and XXZ chains are periodic; the Ising
//! chain is open. Models that only define `g` get `σ` from a pivoted
//! Cholesky factorization at each state.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::diffusion::{generator_apply, adjoint_generator_apply, DiffusionSpec, Path};
use crate::error::{Error, Result};

fn check_sites(op: &'static str, m: usize, min: usize) -> Result<()> {
    if m >= min {
        Ok(())
    } else {
        Err(Error::Config(format!("{op} needs at least {min} sites, got {m}")))
    }
}

/// Broadcasts a length-1 parameter vector to `m` sites.
fn per_site(op: &'static str, name: &str, v: &[f64], m: usize) -> Result<Vec<f64>> {
    match v.len() {
        1 => Ok(vec![v[0]; m]),
        n if n == m => Ok(v.to_vec()),
        n => Err(Error::Config(format!("{op}: {name} has {n} entries, expected 1 or {m}"))),
    }
}

fn diagonal_sigma(m: usize) -> impl Fn(&[f64], &mut [f64]) + Send + Sync {
    move |x, o| {
        o.fill(0.0);
        for j in 0..m {
            o[j * m + j] = x[j];
        }
    }
}

fn diagonal_partials(m: usize) -> impl Fn(&[f64], &mut [f64]) + Send + Sync {
    move |_, d| {
        d.fill(0.0);
        for j in 0..m {
            d[(j * m + j) * m + j] = 1.0;
        }
    }
}

/// `dx_j = (c_j x_j − x_{j+1}) dt + x_j dw_j`.
pub fn dst_spec(m: usize, c: &[f64]) -> Result<DiffusionSpec> {
    check_sites("dst_spec", m, 2)?;
    let c = per_site("dst_spec", "c", c, m)?;
    Ok(DiffusionSpec::new(m)
        .named("dst")
        .with_drift(move |x, o| {
            for j in 0..m {
                o[j] = c[j] * x[j] - x[(j + 1) % m];
            }
        })
        .with_sigma(diagonal_sigma(m))
        .with_sigma_partials(diagonal_partials(m)))
}

/// `dy_j = (C_j + B_j e^{y_{j+1} − y_j}) dt + dw_j`.
pub fn dst_transformed_spec(m: usize, big_c: &[f64], big_b: &[f64]) -> Result<DiffusionSpec> {
    check_sites("dst_transformed_spec", m, 2)?;
    let cc = per_site("dst_transformed_spec", "C", big_c, m)?;
    let bb = per_site("dst_transformed_spec", "B", big_b, m)?;
    Ok(DiffusionSpec::new(m).named("dst-transformed").with_drift(move |y, o| {
        for j in 0..m {
            o[j] = cc[j] + bb[j] * (y[(j + 1) % m] - y[j]).exp();
        }
    }))
}

/// Residual of the symmetric part of the transformed DST generator against
/// `½Σ∂² + ½Σ B_j e^{y_{j+1} − y_j}` applied to `f` at `y`.
///
/// The constant drifts `C_j` cancel between the generator and its adjoint.
pub fn toda_check(m: usize, big_b: &[f64], y: &[f64], f: &dyn Fn(&[f64]) -> f64, h: f64) -> Result<f64> {
    toda_residual(m, big_b, y, f, h, &toda_coefficients(m, big_b)?)
}

/// Coefficients `½B_j` of the exponential interaction in the symmetric part.
pub fn toda_coefficients(m: usize, big_b: &[f64]) -> Result<Vec<f64>> {
    Ok(per_site("toda_check", "B", big_b, m)?.into_iter().map(|b| 0.5 * b).collect())
}

/// `|½(H + H†)f − (½Δf + Σ k_j e^{y_{j+1} − y_j} f)|` for given interaction coefficients `k`.
pub fn toda_residual(m: usize, big_b: &[f64], y: &[f64], f: &dyn Fn(&[f64]) -> f64, h: f64, k: &[f64]) -> Result<f64> {
    let spec = dst_transformed_spec(m, &[0.0], big_b)?;
    let hf = generator_apply(&spec, f, y, Some(h))?;
    let hdf = adjoint_generator_apply(&spec, f, y, Some(h))?;
    let lap = generator_apply(&DiffusionSpec::new(m), f, y, Some(h))?;
    let inter: f64 = (0..m).map(|j| k[j] * (y[(j + 1) % m] - y[j]).exp()).sum();
    Ok((0.5 * (hf + hdf) - (lap + inter * f(y))).abs())
}

/// DNLS diffusion matrix: `g_jj = x_j(x_{j+1} − x_j)`, `g_{j,j+1} = x_{j+1}²`, periodic.
pub fn dnls_diffusion(m: usize, x: &[f64], g: &mut [f64]) {
    g.fill(0.0);
    for j in 0..m {
        let n = (j + 1) % m;
        g[j * m + j] = x[j] * (x[n] - x[j]);
        g[j * m + n] = x[n] * x[n];
        g[n * m + j] = x[n] * x[n];
    }
}

/// DNLS: drift `−½(x_j − 2x_{j+1} + x_{j+2})`, `g` from [`dnls_diffusion`].
pub fn dnls_spec(m: usize) -> Result<DiffusionSpec> {
    check_sites("dnls_spec", m, 3)?;
    Ok(DiffusionSpec::new(m)
        .named("dnls")
        .with_drift(move |x, o| {
            for j in 0..m {
                o[j] = -0.5 * (x[j] - 2.0 * x[(j + 1) % m] + x[(j + 2) % m]);
            }
        })
        .with_diffusion_matrix(move |x, g| {
            dnls_diffusion(m, x, g);
            Ok(())
        }))
}

fn check_poles(x: &[f64]) -> Result<()> {
    match x.iter().position(|&v| v == 0.0) {
        Some(site) => Err(Error::Pole { site }),
        None => Ok(()),
    }
}

/// XXZ diffusion matrix; each distinct bond is counted once.
pub fn xxz_diffusion(m: usize, delta: f64, xi: f64, x: &[f64], g: &mut [f64]) {
    g.fill(0.0);
    for j in 0..m {
        g[j * m + j] = xi * x[j] * x[j];
    }
    let bonds = if m == 2 { 1 } else { m };
    for j in 0..bonds {
        let n = (j + 1) % m;
        let v = 0.5 * (x[n] * x[n] + x[j] * x[j] - 2.0 * delta * x[j] * x[n]);
        g[j * m + n] = v;
        g[n * m + j] = v;
    }
}

/// XXZ diffusion-reaction spec with anisotropy `Δ` and on-site coefficient `ξ`.
///
/// Drift `¼(x_j²(x_{j+1}⁻¹ + x_{j−1}⁻¹) − (x_{j+1} + x_{j−1})) + (ξ/2)x_j`,
/// potential `−⅛Σ(x_j/x_{j+1} + x_{j+1}/x_j)`. The constant `ξ/8` shift of the
/// spin Hamiltonian is left out; it rescales the propagator by `e^{ξt/8}`.
pub fn xxz_spec(m: usize, delta: f64, xi: f64) -> Result<DiffusionSpec> {
    check_sites("xxz_spec", m, 2)?;
    Ok(DiffusionSpec::new(m)
        .named("xxz")
        .with_drift(move |x, o| {
            for j in 0..m {
                let (n, p) = (x[(j + 1) % m], x[(j + m - 1) % m]);
                o[j] = 0.25 * (x[j] * x[j] * (1.0 / n + 1.0 / p) - (n + p)) + 0.5 * xi * x[j];
            }
        })
        .with_potential(move |x| {
            -0.125 * (0..m).map(|j| {
                let n = x[(j + 1) % m];
                x[j] / n + n / x[j]
            }).sum::<f64>()
        })
        .with_diffusion_matrix(move |x, g| {
            check_poles(x)?;
            xxz_diffusion(m, delta, xi, x, g);
            Ok(())
        }))
}

/// `ξ̂ = (a² + 1)/a`.
pub fn ising_xi_hat(a: f64) -> f64 {
    (a * a + 1.0) / a
}

fn ising_sigma(m: usize, a: f64) -> Vec<f64> {
    let s = 1.0 / a.sqrt();
    let mut sigma = vec![0.0; m * m];
    for j in 0..m {
        sigma[j * m + j] = s * a;
        if j + 1 < m {
            sigma[j * m + j + 1] = s;
        }
    }
    sigma
}

/// Open Ising chain: constant `σ = (aI + superdiagonal)/√a`, drift `ξ̂/2` on every site.
pub fn ising_spec(m: usize, a: f64) -> Result<DiffusionSpec> {
    check_sites("ising_spec", m, 2)?;
    if !(a > 0.0) {
        return Err(Error::domain("ising_spec", format!("a must be positive, got {a}")));
    }
    let half = 0.5 * ising_xi_hat(a);
    Ok(DiffusionSpec::new(m).named("ising").with_drift(move |_, o| o.fill(half)).with_constant_sigma(ising_sigma(m, a)))
}

/// Closed-form Ising state at time `s` given the Wiener value `w_s`.
///
/// The last site has no right neighbour; its noise coefficient is `√a`.
pub fn ising_solution(a: f64, y0: &[f64], w: &[f64], s: f64) -> Result<Vec<f64>> {
    if !(a > 0.0) {
        return Err(Error::domain("ising_solution", format!("a must be positive, got {a}")));
    }
    let m = y0.len();
    let (half, ra) = (0.5 * ising_xi_hat(a), a.sqrt());
    Ok((0..m)
        .map(|j| {
            let noise = if j + 1 < m { (a * w[j] + w[j + 1]) / ra } else { ra * w[j] };
            y0[j] + half * s + noise
        })
        .collect())
}

/// [`ising_solution`] at every node of a Wiener path.
pub fn ising_solution_path(a: f64, y0: &[f64], wiener: &Path) -> Result<Path> {
    let mut values = wiener.values.clone();
    for n in 0..=wiener.grid.steps {
        let y = ising_solution(a, y0, wiener.at(n), wiener.grid.time(n))?;
        values.row_mut(n).assign(&ndarray::ArrayView1::from(&y));
    }
    Ok(Path { grid: wiener.grid, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DefectVariant {
    Lax,
    Algebraic,
}

/// DST chain with a defect at site `m` (0-based, `1 ≤ m ≤ M−2`).
///
/// Lax: site `m` is deterministic, `σ_mm = 0`. Algebraic: sites `m−1, m`
/// share noise through `√2 x_m` cross terms and `σ` stays invertible.
pub fn defect_dst_spec(sites: usize, m: usize, variant: DefectVariant, spin: f64, c: &[f64]) -> Result<DiffusionSpec> {
    check_sites("defect_dst_spec", sites, 3)?;
    if m < 1 || m + 2 > sites {
        return Err(Error::Config(format!("defect site {m} must lie in 1..={}", sites - 2)));
    }
    let c = per_site("defect_dst_spec", "c", c, sites)?;
    let n = sites;
    let p = m - 1;
    let drift = move |x: &[f64], o: &mut [f64]| {
        for j in 0..n {
            o[j] = c[j] * x[j] - x[(j + 1) % n];
        }
        match variant {
            DefectVariant::Lax => {
                o[p] = c[p] * x[p] + 0.5 * (x[m + 1] - x[m]);
                o[m] = -0.5 * (x[m + 1] + x[m]);
            }
            DefectVariant::Algebraic => {
                o[p] = c[p] * x[p] - x[m + 1] - spin * x[m];
                o[m] = 0.5 * x[m] - x[m + 1];
            }
        }
    };
    let sigma = move |x: &[f64], o: &mut [f64]| {
        diagonal_sigma(n)(x, o);
        match variant {
            DefectVariant::Lax => o[m * n + m] = 0.0,
            DefectVariant::Algebraic => {
                o[p * n + m] = SQRT_2 * x[m];
                o[m * n + p] = SQRT_2 * x[m];
            }
        }
    };
    let name = match variant {
        DefectVariant::Lax => "defect-dst-lax",
        DefectVariant::Algebraic => "defect-dst-algebraic",
    };
    Ok(DiffusionSpec::new(n).named(name).with_drift(drift).with_sigma(sigma))
}

/// Darboux defect entries `(β, γ, α²)` with `β = z − z̃`, `γ = Z̃ − Z`, `α² = ζ − βγ`.
pub fn darboux_defect_entries(z: f64, z_tilde: f64, big_z: f64, big_z_tilde: f64, zeta: f64) -> (f64, f64, f64) {
    let beta = z - z_tilde;
    let gamma = big_z_tilde - big_z;
    (beta, gamma, zeta - beta * gamma)
}

/// Parameters selecting one lattice model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LatticeParams {
    Dst {
        sites: usize,
        c: Vec<f64>,
    },
    DstTransformed {
        sites: usize,
        #[serde(rename = "C")]
        big_c: Vec<f64>,
        #[serde(rename = "B")]
        big_b: Vec<f64>,
    },
    Dnls {
        sites: usize,
    },
    Xxz {
        sites: usize,
        delta: f64,
        xi: f64,
    },
    Ising {
        sites: usize,
        a: f64,
    },
    DefectDst {
        sites: usize,
        site: usize,
        defect: DefectVariant,
        #[serde(default)]
        spin: f64,
        #[serde(default)]
        zeta: f64,
        c: Vec<f64>,
    },
}

impl LatticeParams {
    pub fn sites(&self) -> usize {
        match *self {
            LatticeParams::Dst { sites, .. }
            | LatticeParams::DstTransformed { sites, .. }
            | LatticeParams::Dnls { sites }
            | LatticeParams::Xxz { sites, .. }
            | LatticeParams::Ising { sites, .. }
            | LatticeParams::DefectDst { sites, .. } => sites,
        }
    }

    pub fn build(&self) -> Result<DiffusionSpec> {
        match self {
            LatticeParams::Dst { sites, c } => dst_spec(*sites, c),
            LatticeParams::DstTransformed { sites, big_c, big_b } => dst_transformed_spec(*sites, big_c, big_b),
            LatticeParams::Dnls { sites } => dnls_spec(*sites),
            LatticeParams::Xxz { sites, delta, xi } => xxz_spec(*sites, *delta, *xi),
            LatticeParams::Ising { sites, a } => ising_spec(*sites, *a),
            LatticeParams::DefectDst { sites, site, defect, spin, c, .. } => defect_dst_spec(*sites, *site, *defect, *spin, c),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::validate_spec;
    use crate::linalg::symmetric_eigenvalues;
    use crate::transform::{split_degenerate_at, transformed_drift};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn drift(spec: &DiffusionSpec, x: &[f64]) -> Vec<f64> {
        let mut o = vec![0.0; spec.dim()];
        spec.drift(x, &mut o);
        o
    }

    #[test]
    fn dst_examples() {
        let spec = dst_spec(4, &[1.0]).unwrap();
        assert_eq!(drift(&spec, &[1.0; 4]), vec![0.0; 4]);
        let two = dst_spec(2, &[1.0]).unwrap();
        let mut s = vec![0.0; 4];
        two.sigma(&[2.0, 3.0], &mut s).unwrap();
        assert_eq!(s, vec![2.0, 0.0, 0.0, 3.0]);
        let x = [0.5, 1.5, -2.0];
        let v = generator_apply(&dst_spec(3, &[0.7, 1.0, 2.0]).unwrap(), &|p| p[0], &x, None).unwrap();
        assert_abs_diff_eq!(v, 0.7 * 0.5 - 1.5, epsilon = 1e-9);
        assert_eq!(drift(&spec, &[0.0; 4]), vec![0.0; 4]);
    }

    #[test]
    fn transformed_dst_examples() {
        let spec = dst_transformed_spec(3, &[0.5, -1.0, 2.0], &[0.0]).unwrap();
        assert_eq!(drift(&spec, &[0.3, 7.0, -2.0]), vec![0.5, -1.0, 2.0]);
        let spec = dst_transformed_spec(3, &[0.5], &[-1.0, 2.0, 3.0]).unwrap();
        assert_eq!(drift(&spec, &[0.4; 3]), vec![-0.5, 2.5, 3.5]);
    }

    #[test]
    fn canonical_transform_of_dst() {
        let c = [1.0, 0.3, 2.0, -0.5];
        let dst = dst_spec(4, &c).unwrap();
        let target = dst_transformed_spec(4, &c.map(|v| v - 0.5), &[-1.0]).unwrap();
        for y in [[0.0, 0.2, -0.3, 1.0], [1.0, -1.0, 0.5, 0.1]] {
            let x: Vec<f64> = y.iter().map(|v: &f64| v.exp()).collect();
            let got = transformed_drift(&dst, &x).unwrap();
            for (a, b) in got.iter().zip(drift(&target, &y)) {
                assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn toda_symmetric_part() {
        let b = [-1.0, 0.5, 2.0, -0.3];
        let h = 1e-3;
        let y = [0.1, -0.4, 0.3, 0.2];
        assert!(toda_check(4, &b, &y, &|_| 1.0, h).unwrap() <= 10.0 * h * h);
        assert!(toda_check(4, &b, &y, &|p| p[0], h).unwrap() <= 10.0 * h * h);
        let smooth = |p: &[f64]| (p[0] * p[1]).sin() + p[2] * p[3] * p[3];
        assert!(toda_check(4, &b, &y, &smooth, h).unwrap() < 1e-5);
        // the differenced coefficients B_j − B_{j−1} and a bare Laplacian both miss the interaction
        let bt: Vec<f64> = (0..4).map(|j| b[j] - b[(j + 3) % 4]).collect();
        assert!(toda_residual(4, &b, &y, &|_| 1.0, h, &bt).unwrap() > 1e-2);
        assert!(toda_residual(4, &[1.0], &y, &|_| 1.0, h, &[0.0; 4]).unwrap() > 1e-2);
    }

    #[test]
    fn dnls_domain() {
        let spec = dnls_spec(5).unwrap();
        let mut s = vec![0.0; 25];
        match spec.sigma(&[1.0; 5], &mut s) {
            Err(Error::NonFactorizable { min_eigenvalue }) => {
                // cyclic zero-diagonal tridiagonal: 2cos(2πk/5), minimum 2cos(4π/5)
                assert_abs_diff_eq!(min_eigenvalue, 2.0 * (4.0 * std::f64::consts::PI / 5.0).cos(), epsilon = 1e-12)
            }
            other => panic!("{other:?}"),
        }
        let rep = validate_spec(&spec, &[vec![1.0; 5]]);
        assert!(!rep.probes[0].psd);
        assert_eq!(drift(&dnls_spec(3).unwrap(), &[1.0; 3]), vec![0.0; 3]);
        let x = [1.0, 2.0, 4.0, 8.0];
        let mut g = vec![0.0; 16];
        dnls_diffusion(4, &x, &mut g);
        let rep = validate_spec(&dnls_spec(4).unwrap(), &[x.to_vec()]);
        assert_abs_diff_eq!(rep.probes[0].min_eigenvalue, symmetric_eigenvalues(4, &g)[0], epsilon = 1e-12);
        assert!(dnls_spec(2).is_err());
    }

    #[test]
    fn xxz_examples() {
        let spec = xxz_spec(4, 1.0, 0.6).unwrap();
        let mut g = vec![0.0; 16];
        spec.diffusion(&[2.0; 4], &mut g).unwrap();
        assert_eq!(g[1], 0.0);
        assert_eq!(drift(&spec, &[2.0; 4]), vec![0.6; 4]);
        assert_abs_diff_eq!(spec.potential(&[3.7; 4]), -1.0, epsilon = 1e-15);
        let two = xxz_spec(2, 0.0, 0.0).unwrap();
        let mut g = vec![0.0; 4];
        two.diffusion(&[1.0, 1.0], &mut g).unwrap();
        assert_eq!(g[1], 1.0);
        let mut s = vec![0.0; 16];
        assert!(matches!(spec.sigma(&[1.0, 0.0, 1.0, 1.0], &mut s), Err(Error::Pole { site: 1 })));
    }

    #[test]
    fn ising_examples() {
        assert_eq!(ising_xi_hat(1.0), 2.0);
        let spec = ising_spec(3, 1.0).unwrap();
        assert_eq!(drift(&spec, &[0.0; 3]), vec![1.0; 3]);
        let y = ising_solution(2.0, &[1.0, 2.0], &[0.0, 0.0], 0.5).unwrap();
        assert_eq!(y, vec![1.0 + 0.625, 2.0 + 0.625]);
        assert!(ising_spec(3, 0.0).is_err());
    }

    #[test]
    fn defect_structure() {
        let (m, sites) = (2, 5);
        let lax = defect_dst_spec(sites, m, DefectVariant::Lax, 0.0, &[1.0]).unwrap();
        let probes = vec![vec![1.0, 2.0, 0.5, 1.5, 3.0], vec![0.3, 0.7, 1.1, 2.2, 0.9]];
        let split = split_degenerate_at(&lax, &[m], &probes).unwrap();
        assert_eq!(split.deterministic, vec![m]);
        assert!(split_degenerate_at(&lax, &[], &probes).is_err());

        let alg = defect_dst_spec(sites, m, DefectVariant::Algebraic, 0.5, &[1.0]).unwrap();
        let mut g = vec![0.0; 25];
        alg.diffusion(&probes[1], &mut g).unwrap();
        assert!(g[(m - 1) * sites + m].abs() > 1e-3);
        // S = 0 and x_m = 0: the coupled site reverts to the bulk form
        let alg0 = defect_dst_spec(sites, m, DefectVariant::Algebraic, 0.0, &[1.3]).unwrap();
        let x = [0.4, 0.9, 0.0, 1.7, 0.2];
        assert_abs_diff_eq!(drift(&alg0, &x)[m - 1], 1.3 * 0.9 - 1.7, epsilon = 1e-15);
        assert!(defect_dst_spec(sites, 0, DefectVariant::Lax, 0.0, &[1.0]).is_err());
        assert!(defect_dst_spec(sites, 4, DefectVariant::Lax, 0.0, &[1.0]).is_err());
    }

    #[test]
    fn darboux_examples() {
        assert_eq!(darboux_defect_entries(1.5, 1.5, 0.2, 0.2, 3.0), (0.0, 0.0, 3.0));
        assert_eq!(darboux_defect_entries(2.0, 1.0, 0.0, 1.0, 3.0), (1.0, 1.0, 2.0));
    }

    #[test]
    fn params_roundtrip_and_reject_unknown_keys() {
        let p: LatticeParams = serde_json::from_str(r#"{"variant":"ising","sites":4,"a":1.0}"#).unwrap();
        assert_eq!(p, LatticeParams::Ising { sites: 4, a: 1.0 });
        assert!(serde_json::from_str::<LatticeParams>(r#"{"variant":"ising","sites":4,"a":1.0,"b":2}"#).is_err());
        let d: LatticeParams = serde_json::from_str(r#"{"variant":"dst-transformed","sites":3,"C":[0.5],"B":[-1]}"#).unwrap();
        assert_eq!(d.build().unwrap().dim(), 3);
    }

    proptest! {
        #[test]
        fn darboux_sign_flip_invariant(z in -5.0f64..5.0, zt in -5.0f64..5.0, a in -5.0f64..5.0, at in -5.0f64..5.0, zeta in -5.0f64..5.0) {
            let (b1, g1, a1) = darboux_defect_entries(z, zt, a, at, zeta);
            let (b2, g2, a2) = darboux_defect_entries(zt, z, at, a, zeta);
            prop_assert_eq!((b1, g1), (-b2, -g2));
            prop_assert_eq!(a1, a2);
        }
    }
}
