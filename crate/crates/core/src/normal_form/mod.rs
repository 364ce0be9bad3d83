//! Extended normal forms of reduced dynamics learned from data.
//!
//! With `q = B^{-1} eta`, the reduced dynamics are conjugated to
//! `z' = Lambda z + N z^{2:N}` through `z = h^{-1}(eta) = q + H* q^{2:N}`.
//! Coefficients of `N` live only on near-resonant entries; `H*` is zero there.

mod fit;
mod gauge;
mod io;
mod linear;
mod polar;
mod resonance;
mod transform;

pub use gauge::{observable_gauge, GaugedNormalForm};
pub use fit::{conjugacy_error, fit_normal_form, FitMode, NormalFormOptions};
pub use linear::{estimate_linear_part, linear_part_from_jacobian, LinearOptions};
pub use polar::{polar_from_coefficients, to_polar};
pub use resonance::resonance_structure;
pub use transform::{
    normal_form_rhs, predict_reduced, simulate_normal_form, to_normal_coordinates,
    to_reduced_coordinates,
};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::linalg::CMatrix;
use crate::poly::ExponentMatrix;

#[derive(Clone, Debug)]
pub struct LinearPart {
    pub jacobian: DMatrix<f64>,
    /// Columns are eigenvectors; conjugate pairs sit in adjacent columns.
    pub b: CMatrix,
    pub b_inv: CMatrix,
    pub lambda: Vec<Complex64>,
}

impl LinearPart {
    pub fn dim(&self) -> usize {
        self.lambda.len()
    }

    /// Variable involution swapping each conjugate pair; real modes are fixed.
    pub fn conjugation(&self) -> Vec<usize> {
        conjugation(&self.lambda)
    }
}

/// Pairing of adjacent conjugate eigenvalues.
pub fn conjugation(lambda: &[Complex64]) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..lambda.len()).collect();
    let mut i = 0;
    while i < lambda.len() {
        if lambda[i].im != 0.0 && i + 1 < lambda.len() {
            perm[i] = i + 1;
            perm[i + 1] = i;
            i += 2;
        } else {
            i += 1;
        }
    }
    perm
}

#[derive(Clone, Debug)]
pub struct ResonanceStructure {
    pub order: usize,
    pub delta: f64,
    pub exps: ExponentMatrix,
    /// rows x monomials
    pub delta_matrix: DMatrix<f64>,
    /// Near-resonant `(row, monomial)` pairs, sorted.
    pub resonant: Vec<(usize, usize)>,
}

impl ResonanceStructure {
    pub fn is_resonant(&self, row: usize, col: usize) -> bool {
        self.resonant.binary_search(&(row, col)).is_ok()
    }
}

#[derive(Clone, Debug)]
pub struct ReducedModel {
    pub linear: LinearPart,
    pub structure: ResonanceStructure,
    /// Normal-form coefficients, nonzero only on resonant entries.
    pub ncoef: CMatrix,
    /// Coefficients of `h^{-1}`, zero on resonant entries.
    pub hstar: CMatrix,
    /// Coefficients of `h`, zero on resonant entries.
    pub h: CMatrix,
    /// Sum of squared conjugacy residuals over the training points.
    pub conjugacy_residual: f64,
    /// The same, divided by the number of points.
    pub mean_residual: f64,
    pub iterations: usize,
    pub mode: FitMode,
    /// True when some retained eigenvalue has negligible real part.
    pub nonhyperbolic: bool,
}

impl ReducedModel {
    pub fn dim(&self) -> usize {
        self.linear.dim()
    }

    pub fn order(&self) -> usize {
        self.structure.order
    }
}
