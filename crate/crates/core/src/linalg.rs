//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub(crate) fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|v| c(v, 0.0))
}

/// 2-norm condition number from singular values.
pub fn condition_number(m: &CMatrix) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Right singular vector of the smallest singular value.
pub fn null_vector(m: &CMatrix) -> CVector {
    let n = m.ncols();
    // pad to square so the SVD returns a full V
    let mut sq = CMatrix::zeros(m.nrows().max(n), n);
    sq.rows_mut(0, m.nrows()).copy_from(m);
    let svd = sq.svd(false, true);
    let vt = svd.v_t.expect("requested V");
    let (imin, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, s)| if *s < acc.1 { (i, *s) } else { acc });
    vt.row(imin).adjoint().into_owned()
}

/// Eigenpairs of a real square matrix. Eigenvectors have unit norm and a
/// real, non-negative first nonzero component.
pub fn real_eigen(a: &DMatrix<f64>) -> Result<(Vec<Complex64>, CMatrix)> {
    let n = a.nrows();
    if n != a.ncols() || n == 0 {
        return Err(Error::arg("eigendecomposition needs a nonempty square matrix"));
    }
    let vals: Vec<Complex64> = a.complex_eigenvalues().iter().copied().collect();
    let ac = to_complex(a);
    let mut vecs = CMatrix::zeros(n, n);
    for (j, lam) in vals.iter().enumerate() {
        let shifted = &ac - CMatrix::identity(n, n) * *lam;
        let mut v = null_vector(&shifted);
        if let Some(p) = v.iter().find(|z| z.norm() > 1e-12).copied() {
            v *= p.conj() / p.norm();
        }
        v /= c(v.norm(), 0.0);
        vecs.set_column(j, &v);
    }
    Ok((vals, vecs))
}

/// Least-squares solution of `a x = b` through a thin SVD; singular values
/// below `rtol * max` are discarded. Also returns the numerical rank.
pub fn lstsq<T>(a: &DMatrix<T>, b: &DMatrix<T>, rtol: f64) -> (DMatrix<T>, usize)
where
    T: nalgebra::ComplexField<RealField = f64>,
{
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let eps = (rtol * smax).max(f64::MIN_POSITIVE);
    let rank = svd.singular_values.iter().filter(|s| **s > eps).count();
    let x = svd.solve(b, eps).expect("U and V were requested");
    (x, rank)
}

/// Complex matrices serialize as row lists of `[re, im]` pairs.
pub fn cmatrix_to_json(m: &CMatrix) -> serde_json::Value {
    serde_json::Value::Array(
        (0..m.nrows())
            .map(|i| serde_json::json!((0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect::<Vec<_>>()))
            .collect(),
    )
}

pub fn cmatrix_from_json(v: &serde_json::Value) -> Result<CMatrix> {
    let rows: Vec<Vec<[f64; 2]>> =
        serde_json::from_value(v.clone()).map_err(|e| Error::Parse(format!("complex matrix: {e}")))?;
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Parse("ragged complex matrix".into()));
    }
    Ok(CMatrix::from_fn(nrows, ncols, |i, j| c(rows[i][j][0], rows[i][j][1])))
}

pub fn cvec_to_json(v: &[Complex64]) -> serde_json::Value {
    serde_json::json!(v.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>())
}

pub fn cvec_from_json(v: &serde_json::Value) -> Result<Vec<Complex64>> {
    let pairs: Vec<[f64; 2]> =
        serde_json::from_value(v.clone()).map_err(|e| Error::Parse(format!("complex vector: {e}")))?;
    Ok(pairs.into_iter().map(|p| c(p[0], p[1])).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_of_damped_rotation() {
        let a = DMatrix::from_row_slice(2, 2, &[-0.1, -1.0, 1.0, -0.1]);
        let (vals, vecs) = real_eigen(&a).unwrap();
        let ac = to_complex(&a);
        for j in 0..2 {
            assert!((vals[j].re + 0.1).abs() < 1e-12);
            assert!((vals[j].im.abs() - 1.0).abs() < 1e-12);
            let r = &ac * vecs.column(j) - vecs.column(j) * vals[j];
            assert!(r.norm() < 1e-12);
        }
    }

    #[test]
    fn lstsq_recovers_exact_solution() {
        let a = DMatrix::from_fn(20, 3, |i, j| ((i + 1) as f64).powi(j as i32) * 0.1);
        let x = DMatrix::from_column_slice(3, 1, &[1.0, -2.0, 0.5]);
        let b = &a * &x;
        let (sol, rank) = lstsq(&a, &b, 1e-13);
        assert_eq!(rank, 3);
        assert!((sol - x).norm() < 1e-9);
    }

    #[test]
    fn complex_json_round_trip() {
        let m = CMatrix::from_fn(2, 3, |i, j| c(i as f64 + 0.1, -(j as f64) / 3.0));
        assert_eq!(cmatrix_from_json(&cmatrix_to_json(&m)).unwrap(), m);
        let v = vec![c(1.0, -2.5), c(0.0, 1e-300)];
        assert_eq!(cvec_from_json(&cvec_to_json(&v)).unwrap(), v);
    }
}
