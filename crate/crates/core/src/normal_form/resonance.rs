use nalgebra::DMatrix;

use super::{LinearPart, ResonanceStructure};
use crate::error::{Error, Result};
use crate::poly::ExponentMatrix;

/// `Delta[j, k] = Im lambda_j - sum_s Im lambda_s E[s, k]` over the monomials
/// of orders `2..=order`; entries with `|Delta| <= delta` are near-resonant.
pub fn resonance_structure(linear: &LinearPart, order: usize, delta: f64) -> Result<ResonanceStructure> {
    if order < 2 {
        return Err(Error::arg("normal-form order must be at least 2"));
    }
    let d = linear.dim();
    let exps = ExponentMatrix::new(d, 2, order)?;
    let im: Vec<f64> = linear.lambda.iter().map(|l| l.im).collect();
    let delta_matrix = DMatrix::from_fn(d, exps.len(), |j, k| {
        let e = exps.column(k);
        im[j] - e.iter().zip(&im).map(|(p, w)| *p as f64 * w).sum::<f64>()
    });
    let mut resonant = Vec::new();
    for j in 0..d {
        for k in 0..exps.len() {
            if delta_matrix[(j, k)].abs() <= delta {
                resonant.push((j, k));
            }
        }
    }
    Ok(ResonanceStructure {
        order,
        delta,
        exps,
        delta_matrix,
        resonant,
    })
}
