//! Multivariate monomial bookkeeping.
//!
//! Monomials are ordered graded-lexicographically: every order-`j` column
//! precedes every order-`j+1` column, and within one order the exponent
//! vectors are sorted in descending lexicographic order with the first
//! variable most significant. For two variables and orders 2..=3 this gives
//! `x², xy, y², x³, x²y, xy², y³`. Every coefficient matrix in the crate
//! indexes its columns by this ordering.

mod series;

pub use series::Series;

use std::collections::HashMap;
use std::ops::{Add, Mul};

use nalgebra::DMatrix;
use num_traits::{One, Zero};

use crate::error::{check_dim, Error, Result};

/// Scalars that monomials can be evaluated over (real and complex).
pub trait Scalar: Copy + Zero + One + Add<Output = Self> + Mul<Output = Self> {}

impl<T> Scalar for T where T: Copy + Zero + One + Add<Output = T> + Mul<Output = T> {}

#[derive(Clone, Debug)]
pub struct ExponentMatrix {
    dims: usize,
    min_order: usize,
    max_order: usize,
    /// Column-major: monomial `k` occupies `exponents[k * dims..(k + 1) * dims]`.
    exponents: Vec<u32>,
    index: HashMap<Vec<u32>, usize>,
}

impl PartialEq for ExponentMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.dims == other.dims
            && self.min_order == other.min_order
            && self.max_order == other.max_order
    }
}

/// Number of monomials of exactly `order` in `dims` variables, C(dims + order - 1, order).
pub fn monomial_count(dims: usize, order: usize) -> usize {
    let mut c: u128 = 1;
    for i in 0..order as u128 {
        c = c * (dims as u128 + i) / (i + 1);
    }
    c as usize
}

fn push_block(dims: usize, order: u32, prefix: &mut Vec<u32>, out: &mut Vec<u32>) {
    if prefix.len() + 1 == dims {
        prefix.push(order);
        out.extend_from_slice(prefix);
        prefix.pop();
        return;
    }
    for e in (0..=order).rev() {
        prefix.push(e);
        push_block(dims, order - e, prefix, out);
        prefix.pop();
    }
}

impl ExponentMatrix {
    pub fn new(dims: usize, min_order: usize, max_order: usize) -> Result<Self> {
        if dims == 0 {
            return Err(Error::arg("exponent matrix needs at least one variable"));
        }
        if min_order < 1 || min_order > max_order {
            return Err(Error::arg(format!(
                "invalid order range {min_order}..={max_order}"
            )));
        }
        let mut exponents = Vec::new();
        let mut prefix = Vec::with_capacity(dims);
        for order in min_order..=max_order {
            push_block(dims, order as u32, &mut prefix, &mut exponents);
        }
        let index = exponents
            .chunks(dims)
            .enumerate()
            .map(|(k, e)| (e.to_vec(), k))
            .collect();
        Ok(ExponentMatrix {
            dims,
            min_order,
            max_order,
            exponents,
            index,
        })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn min_order(&self) -> usize {
        self.min_order
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn len(&self) -> usize {
        self.exponents.len() / self.dims
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn column(&self, k: usize) -> &[u32] {
        &self.exponents[k * self.dims..(k + 1) * self.dims]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[u32]> {
        self.exponents.chunks(self.dims)
    }

    pub fn order_of(&self, k: usize) -> usize {
        self.column(k).iter().sum::<u32>() as usize
    }

    pub fn index_of(&self, exponent: &[u32]) -> Option<usize> {
        self.index.get(exponent).copied()
    }

    /// Column range holding the monomials of exactly `order`.
    pub fn order_range(&self, order: usize) -> std::ops::Range<usize> {
        assert!(order >= self.min_order && order <= self.max_order);
        let start: usize = (self.min_order..order)
            .map(|j| monomial_count(self.dims, j))
            .sum();
        start..start + monomial_count(self.dims, order)
    }

    /// Exponents as a `dims x len` integer matrix.
    pub fn to_matrix(&self) -> DMatrix<i64> {
        DMatrix::from_fn(self.dims, self.len(), |i, k| self.column(k)[i] as i64)
    }

    /// Column permutation induced by a permutation of the variables: column
    /// `k` maps to the column whose exponent is `e[perm[i]]` in slot `i`.
    pub fn permuted_columns(&self, perm: &[usize]) -> Vec<usize> {
        let mut buf = vec![0u32; self.dims];
        self.columns()
            .map(|e| {
                for (i, p) in perm.iter().enumerate() {
                    buf[i] = e[*p];
                }
                self.index[&buf]
            })
            .collect()
    }

    pub fn eval<T: Scalar>(&self, point: &[T]) -> Result<Vec<T>> {
        check_dim(self.dims, point.len())?;
        let mut out = vec![T::zero(); self.len()];
        self.eval_into(point, &mut out);
        Ok(out)
    }

    /// Unchecked evaluation into a caller buffer of length `len()`.
    pub fn eval_into<T: Scalar>(&self, point: &[T], out: &mut [T]) {
        for (k, e) in self.columns().enumerate() {
            let mut v = T::one();
            for (x, &p) in point.iter().zip(e) {
                for _ in 0..p {
                    v = v * *x;
                }
            }
            out[k] = v;
        }
    }

    /// Jacobian, entry `(k, i)` = d(monomial k)/d(point[i]).
    pub fn jacobian<T: Scalar>(&self, point: &[T]) -> Result<DMatrix<T>>
    where
        T: nalgebra::Scalar,
    {
        check_dim(self.dims, point.len())?;
        let mut jac = DMatrix::from_element(self.len(), self.dims, T::zero());
        self.jacobian_into(point, |k, i, v| jac[(k, i)] = v);
        Ok(jac)
    }

    pub(crate) fn jacobian_into<T: Scalar>(&self, point: &[T], mut put: impl FnMut(usize, usize, T)) {
        for (k, e) in self.columns().enumerate() {
            for i in 0..self.dims {
                if e[i] == 0 {
                    continue;
                }
                let mut v = T::zero();
                for _ in 0..e[i] {
                    v = v + T::one();
                }
                for (j, (x, &p)) in point.iter().zip(e).enumerate() {
                    let p = if j == i { p - 1 } else { p };
                    for _ in 0..p {
                        v = v * *x;
                    }
                }
                put(k, i, v);
            }
        }
    }
}

/// Evaluates every monomial of `exps` at each column of `points` (`dims x P`),
/// returning a `len x P` matrix.
pub fn eval_columns<T>(exps: &ExponentMatrix, points: &DMatrix<T>) -> Result<DMatrix<T>>
where
    T: Scalar + nalgebra::Scalar,
{
    check_dim(exps.dims(), points.nrows())?;
    let mut out = DMatrix::from_element(exps.len(), points.ncols(), T::zero());
    let mut buf = vec![T::zero(); exps.len()];
    for c in 0..points.ncols() {
        let col: Vec<T> = points.column(c).iter().copied().collect();
        exps.eval_into(&col, &mut buf);
        out.column_mut(c).copy_from_slice(&buf);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn graded_lex_two_variables() {
        let e = ExponentMatrix::new(2, 2, 3).unwrap();
        let m = e.to_matrix();
        let expected = [[2, 1, 0, 3, 2, 1, 0], [0, 1, 2, 0, 1, 2, 3]];
        for (i, row) in expected.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                assert_eq!(m[(i, k)], *v);
            }
        }
    }

    #[test]
    fn quadratic_block_four_variables() {
        let e = ExponentMatrix::new(4, 2, 2).unwrap();
        let expected = [
            [2, 1, 1, 1, 0, 0, 0, 0, 0, 0],
            [0, 1, 0, 0, 2, 1, 1, 0, 0, 0],
            [0, 0, 1, 0, 0, 1, 0, 2, 1, 0],
            [0, 0, 0, 1, 0, 0, 1, 0, 1, 2],
        ];
        let m = e.to_matrix();
        assert_eq!(m.ncols(), 10);
        for (i, row) in expected.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                assert_eq!(m[(i, k)], *v);
            }
        }
    }

    #[test]
    fn single_variable_single_order() {
        let e = ExponentMatrix::new(1, 1, 1).unwrap();
        assert_eq!(e.len(), 1);
        assert_eq!(e.column(0), &[1]);
    }

    #[test]
    fn invalid_ranges() {
        assert!(ExponentMatrix::new(0, 1, 2).is_err());
        assert!(ExponentMatrix::new(2, 0, 2).is_err());
        assert!(ExponentMatrix::new(2, 3, 2).is_err());
    }

    #[test]
    fn evaluation_examples() {
        let e = ExponentMatrix::new(2, 2, 3).unwrap();
        assert_eq!(
            e.eval(&[2.0, 3.0]).unwrap(),
            vec![4.0, 6.0, 9.0, 8.0, 12.0, 18.0, 27.0]
        );
        assert!(e.eval(&[0.0, 0.0]).unwrap().iter().all(|v| *v == 0.0));
        let lin = ExponentMatrix::new(2, 1, 1).unwrap();
        assert_eq!(lin.eval(&[1.5, -0.25]).unwrap(), vec![1.5, -0.25]);
        assert!(e.eval(&[1.0]).is_err());
    }

    #[test]
    fn complex_evaluation() {
        let e = ExponentMatrix::new(2, 2, 2).unwrap();
        let z = Complex64::new(0.3, 0.4);
        let v = e.eval(&[z, z.conj()]).unwrap();
        assert!((v[1] - Complex64::new(0.25, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn jacobian_by_hand() {
        let e = ExponentMatrix::new(2, 2, 2).unwrap();
        let j = e.jacobian(&[1.0, 1.0]).unwrap();
        let expected = [[2.0, 0.0], [1.0, 1.0], [0.0, 2.0]];
        for k in 0..3 {
            for i in 0..2 {
                assert_eq!(j[(k, i)], expected[k][i]);
            }
        }
        let z = e.jacobian(&[0.0, 0.0]).unwrap();
        assert!(z.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn order_ranges() {
        let e = ExponentMatrix::new(3, 2, 4).unwrap();
        assert_eq!(e.order_range(2), 0..6);
        assert_eq!(e.order_range(3), 6..16);
        assert_eq!(e.order_range(4), 16..31);
        assert_eq!(e.len(), 31);
    }

    #[test]
    fn conjugate_permutation_swaps_pairs() {
        let e = ExponentMatrix::new(2, 2, 3).unwrap();
        let perm = e.permuted_columns(&[1, 0]);
        assert_eq!(perm, vec![2, 1, 0, 6, 5, 4, 3]);
    }
}
