//! Dense helpers on row-major `&[f64]` matrices.

use nalgebra::{DMatrix, SymmetricEigen};

/// Eigenvalues of the shifted matrix below this are treated as zero.
pub const EIG_CLAMP: f64 = 1e-12;
/// How far below zero `σσ* − λ0² I` may dip before λ0 is rejected.
pub const EIG_SLACK: f64 = 1e-10;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// out = M v for an r×c row-major matrix.
#[inline]
pub fn matvec(m: &[f64], cols: usize, v: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let row = &m[i * cols..(i + 1) * cols];
        *o = dot(row, v);
    }
}

/// M Mᵀ for a d×m row-major matrix.
pub fn gram(s: &[f64], d: usize, m: usize) -> Vec<f64> {
    let mut a = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let v = dot(&s[i * m..(i + 1) * m], &s[j * m..(j + 1) * m]);
            a[i * d + j] = v;
            a[j * d + i] = v;
        }
    }
    a
}

pub fn frobenius_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(u, v)| u - v).collect()
}

/// Symmetric eigen-decomposition of a d×d row-major matrix (symmetrized).
pub fn sym_eigen(a: &[f64], d: usize) -> SymmetricEigen<f64, nalgebra::Dyn> {
    let m = DMatrix::from_fn(d, d, |i, j| 0.5 * (a[i * d + j] + a[j * d + i]));
    SymmetricEigen::new(m)
}

pub fn min_eigenvalue(a: &[f64], d: usize) -> f64 {
    if d == 1 {
        return a[0];
    }
    sym_eigen(a, d).eigenvalues.min()
}

/// Largest singular value (operator 2-norm) of a symmetric matrix.
pub fn sym_operator_norm(a: &[f64], d: usize) -> f64 {
    if d == 1 {
        return a[0].abs();
    }
    sym_eigen(a, d).eigenvalues.amax()
}

/// The shifted matrix `a − shift·I` has eigenvalue `min_eig` < −[`EIG_SLACK`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Indefinite {
    pub min_eig: f64,
}

/// PSD square root of `a − shift·I` by eigendecomposition. Eigenvalues
/// below [`EIG_CLAMP`] are set to zero; a materially negative eigenvalue is
/// an error.
pub fn shifted_sqrt(a: &[f64], d: usize, shift: f64) -> Result<Vec<f64>, Indefinite> {
    if d == 1 {
        let v = a[0] - shift;
        if v < -EIG_SLACK {
            return Err(Indefinite { min_eig: v });
        }
        return Ok(vec![if v < EIG_CLAMP { 0.0 } else { v.sqrt() }]);
    }
    let mut shifted = a.to_vec();
    for i in 0..d {
        shifted[i * d + i] -= shift;
    }
    let eig = sym_eigen(&shifted, d);
    let min = eig.eigenvalues.min();
    if min < -EIG_SLACK {
        return Err(Indefinite { min_eig: min });
    }
    let roots: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&l| if l < EIG_CLAMP { 0.0 } else { l.sqrt() })
        .collect();
    let q = &eig.eigenvectors;
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] = (0..d).map(|k| q[(i, k)] * roots[k] * q[(j, k)]).sum();
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_shifted_sqrt() {
        let s = shifted_sqrt(&[4.0, 0.0, 0.0, 1.0], 2, 1.0).unwrap();
        assert!((s[0] - 3f64.sqrt()).abs() < 1e-14);
        assert!(s[1].abs() < 1e-14 && s[2].abs() < 1e-14 && s[3].abs() < 1e-14);
        assert_eq!(shifted_sqrt(&[1.0], 1, 1.0).unwrap(), vec![0.0]);
        assert!(shifted_sqrt(&[1.0, 0.0, 0.0, 0.5], 2, 1.0).is_err());
    }

    #[test]
    fn gram_and_norms() {
        let s = [1.0, 2.0, 0.0, 3.0];
        assert_eq!(gram(&s, 2, 2), vec![5.0, 6.0, 6.0, 9.0]);
        assert!((sym_operator_norm(&[2.0, 0.0, 0.0, -3.0], 2) - 3.0).abs() < 1e-14);
        assert!((min_eigenvalue(&[2.0, 1.0, 1.0, 2.0], 2) - 1.0).abs() < 1e-14);
    }
}
