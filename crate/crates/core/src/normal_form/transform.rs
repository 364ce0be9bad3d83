use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::ReducedModel;
use crate::error::{check_dim, Result};
use crate::linalg::{CMatrix, CVector};
use crate::poly::ExponentMatrix;

fn monomials(exps: &ExponentMatrix, z: &CVector) -> CVector {
    let mut out = CVector::zeros(exps.len());
    exps.eval_into(z.as_slice(), out.as_mut_slice());
    out
}

/// `z = h^{-1}(eta) = q + H* q^{2:N}`, `q = B^{-1} eta`.
pub fn to_normal_coordinates(model: &ReducedModel, eta: &DVector<f64>) -> Result<CVector> {
    check_dim(model.dim(), eta.len())?;
    let q = &model.linear.b_inv * eta.map(|v| Complex64::new(v, 0.0));
    let m = monomials(&model.structure.exps, &q);
    Ok(&q + &model.hstar * m)
}

/// `eta = h(z) = B (z + H z^{2:N})`; the imaginary residue is dropped.
pub fn to_reduced_coordinates(model: &ReducedModel, z: &CVector) -> Result<DVector<f64>> {
    check_dim(model.dim(), z.len())?;
    let m = monomials(&model.structure.exps, z);
    let eta = &model.linear.b * (z + &model.h * m);
    Ok(eta.map(|c| c.re))
}

pub fn normal_form_rhs(model: &ReducedModel, z: &CVector) -> CVector {
    rhs(&model.linear.lambda, &model.structure.exps, &model.ncoef, z)
}

fn rhs(lambda: &[Complex64], exps: &ExponentMatrix, n: &CMatrix, z: &CVector) -> CVector {
    let mut out = n * monomials(exps, z);
    for (i, l) in lambda.iter().enumerate() {
        out[i] += l * z[i];
    }
    out
}

pub(crate) fn rk4_complex(lambda: &[Complex64], exps: &ExponentMatrix, n: &CMatrix, z: &CVector, h: f64) -> CVector {
    let hc = Complex64::new(h, 0.0);
    let k1 = rhs(lambda, exps, n, z);
    let k2 = rhs(lambda, exps, n, &(z + &k1 * (hc * 0.5)));
    let k3 = rhs(lambda, exps, n, &(z + &k2 * (hc * 0.5)));
    let k4 = rhs(lambda, exps, n, &(z + &k3 * hc));
    z + (k1 + k2 * Complex64::new(2.0, 0.0) + k3 * Complex64::new(2.0, 0.0) + k4) * (hc / 6.0)
}

/// RK4 trajectory of the normal form, `steps + 1` columns including `z0`.
/// Each output interval `dt` is split into `substeps` RK4 steps.
pub fn simulate_normal_form(model: &ReducedModel, z0: &CVector, steps: usize, dt: f64, substeps: usize) -> CMatrix {
    let sub = substeps.max(1);
    let h = dt / sub as f64;
    let mut out = CMatrix::zeros(model.dim(), steps + 1);
    let mut z = z0.clone();
    out.set_column(0, &z);
    for s in 0..steps {
        for _ in 0..sub {
            z = rk4_complex(&model.linear.lambda, &model.structure.exps, &model.ncoef, &z, h);
        }
        out.set_column(s + 1, &z);
    }
    out
}

/// Predicted reduced trajectory from `eta0`: map to normal coordinates,
/// integrate the normal form, map back.
pub fn predict_reduced(model: &ReducedModel, eta0: &DVector<f64>, steps: usize, dt: f64) -> Result<DMatrix<f64>> {
    let z0 = to_normal_coordinates(model, eta0)?;
    let speed = model.linear.lambda.iter().map(|l| l.norm()).fold(0.0, f64::max);
    let sub = ((speed * dt) / 0.05).ceil().max(1.0) as usize;
    let zs = simulate_normal_form(model, &z0, steps, dt, sub);
    let mut out = DMatrix::zeros(model.dim(), steps + 1);
    for j in 0..=steps {
        let eta = to_reduced_coordinates(model, &zs.column(j).into_owned())?;
        out.set_column(j, &eta);
    }
    Ok(out)
}
