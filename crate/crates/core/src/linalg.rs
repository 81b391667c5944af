//! Small dense linear-algebra helpers on row-major slices.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Condition number above which a diffusion factor counts as singular.
pub const CONDITION_LIMIT: f64 = 1e12;

pub fn to_matrix(m: usize, flat: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(m, m, flat)
}

pub fn to_flat(a: &DMatrix<f64>) -> Vec<f64> {
    let (r, c) = a.shape();
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            out.push(a[(i, j)]);
        }
    }
    out
}

/// `g = σσᵀ` written into `g` (both row-major, `m × m`).
pub fn outer_self(m: usize, sigma: &[f64], g: &mut [f64]) {
    for i in 0..m {
        for j in 0..=i {
            let mut s = 0.0;
            for k in 0..m {
                s += sigma[i * m + k] * sigma[j * m + k];
            }
            g[i * m + j] = s;
            g[j * m + i] = s;
        }
    }
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Ascending eigenvalues of a symmetric row-major matrix.
pub fn symmetric_eigenvalues(m: usize, a: &[f64]) -> Vec<f64> {
    if m == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(to_matrix(m, a)).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Result of a pivoted Cholesky factorization `g ≈ L Lᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PivotedCholesky {
    /// Row-major `m × m` factor in the original ordering; columns past `rank` are zero.
    pub factor: Vec<f64>,
    pub rank: usize,
    pub permutation: Vec<usize>,
}

/// Diagonal-pivoted Cholesky of a symmetric positive semidefinite matrix.
///
/// Elimination stops once the largest remaining pivot is at most `tol·‖g‖`.
/// The untouched Schur complement must then vanish to the same tolerance,
/// otherwise the matrix is indefinite and `NonFactorizable` carries its
/// most negative eigenvalue.
pub fn pivoted_cholesky(m: usize, g: &[f64], rel_tol: f64) -> Result<PivotedCholesky> {
    let scale = max_abs(g);
    let tol = rel_tol * scale.max(f64::MIN_POSITIVE);
    let mut a = g.to_vec();
    let mut perm: Vec<usize> = (0..m).collect();
    let mut l = vec![0.0; m * m];
    let mut rank = 0;

    let indefinite = |g: &[f64]| Error::NonFactorizable {
        min_eigenvalue: symmetric_eigenvalues(m, g).first().copied().unwrap_or(0.0),
    };

    for k in 0..m {
        // a holds the permuted Schur complement in rows/cols k..m
        let (mut piv, mut best) = (k, a[k * m + k]);
        for i in k + 1..m {
            if a[i * m + i] > best {
                best = a[i * m + i];
                piv = i;
            }
        }
        if best <= tol {
            break;
        }
        if piv != k {
            perm.swap(k, piv);
            for c in 0..m {
                a.swap(k * m + c, piv * m + c);
            }
            for r in 0..m {
                a.swap(r * m + k, r * m + piv);
            }
            for c in 0..k {
                l.swap(k * m + c, piv * m + c);
            }
        }
        let d = a[k * m + k].sqrt();
        l[k * m + k] = d;
        for i in k + 1..m {
            l[i * m + k] = a[i * m + k] / d;
        }
        for i in k + 1..m {
            for j in k + 1..=i {
                let v = a[i * m + j] - l[i * m + k] * l[j * m + k];
                a[i * m + j] = v;
                a[j * m + i] = v;
            }
        }
        rank += 1;
    }

    for i in rank..m {
        for j in rank..m {
            if a[i * m + j].abs() > tol.max(1e-10 * scale) {
                return Err(indefinite(g));
            }
        }
    }

    // undo the permutation on rows: row perm[i] of the original is row i of l
    let mut factor = vec![0.0; m * m];
    for i in 0..m {
        for c in 0..m {
            factor[perm[i] * m + c] = l[i * m + c];
        }
    }
    Ok(PivotedCholesky { factor, rank, permutation: perm })
}

/// Inverse of a square row-major matrix together with its 2-norm condition number.
///
/// Fails with `SingularDiffusion` when the condition number exceeds [`CONDITION_LIMIT`].
pub fn inverse_checked(m: usize, a: &[f64]) -> Result<(Vec<f64>, f64)> {
    let mat = to_matrix(m, a);
    let sv = mat.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= CONDITION_LIMIT) {
        return Err(Error::SingularDiffusion { condition });
    }
    let inv = mat.try_inverse().ok_or(Error::SingularDiffusion { condition })?;
    Ok((to_flat(&inv), condition))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reconstruct(m: usize, l: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; m * m];
        outer_self(m, l, &mut g);
        g
    }

    #[test]
    fn factors_rank_deficient_psd() {
        // rank one: v vᵀ with v = (1, 2, 0)
        let g = [1.0, 2.0, 0.0, 2.0, 4.0, 0.0, 0.0, 0.0, 0.0];
        let pc = pivoted_cholesky(3, &g, 1e-12).unwrap();
        assert_eq!(pc.rank, 1);
        let back = reconstruct(3, &pc.factor);
        for (a, b) in back.iter().zip(g.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_indefinite_with_zero_diagonal() {
        let g = [0.0, 1.0, 1.0, 0.0];
        match pivoted_cholesky(2, &g, 1e-12) {
            Err(Error::NonFactorizable { min_eigenvalue }) => assert!((min_eigenvalue + 1.0).abs() < 1e-12),
            other => panic!("expected NonFactorizable, got {other:?}"),
        }
    }

    #[test]
    fn inverse_flags_singular() {
        assert!(matches!(inverse_checked(2, &[1.0, 0.0, 0.0, 0.0]), Err(Error::SingularDiffusion { .. })));
        let (inv, cond) = inverse_checked(2, &[2.0, 0.0, 0.0, 4.0]).unwrap();
        assert_eq!(inv, vec![0.5, 0.0, 0.0, 0.25]);
        assert!((cond - 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn cholesky_reconstructs_random_gram(entries in prop::collection::vec(-2.0f64..2.0, 12)) {
            // B is 4×3, so g = B Bᵀ has rank ≤ 3
            let m = 4;
            let mut g = vec![0.0; m * m];
            for i in 0..m {
                for j in 0..m {
                    g[i * m + j] = (0..3).map(|k| entries[i * 3 + k] * entries[j * 3 + k]).sum();
                }
            }
            let pc = pivoted_cholesky(m, &g, 1e-12).unwrap();
            prop_assert!(pc.rank <= 3);
            let back = reconstruct(m, &pc.factor);
            let scale = max_abs(&g).max(1.0);
            for (a, b) in back.iter().zip(g.iter()) {
                prop_assert!((a - b).abs() <= 1e-9 * scale);
            }
        }
    }
}
