use num_complex::Complex64;

use super::{conjugation, ReducedModel};
use crate::error::{Error, Result};
use crate::forced::{PolarCoupling, PolarMode, PolarModel};
use crate::linalg::CMatrix;
use crate::poly::ExponentMatrix;

/// Polar form of a product-of-oscillators normal form. Row `2j` monomials of
/// the form `z_j * prod_i |z_i|^{2 p_i}` become `(alpha + i omega)` terms in
/// `rho_i^{2 p_i}`.
pub fn to_polar(model: &ReducedModel) -> Result<PolarModel> {
    polar_from_coefficients(
        &model.linear.lambda,
        &model.structure.exps,
        &model.ncoef,
        &model.structure.resonant,
    )
}

pub fn polar_from_coefficients(
    lambda: &[Complex64],
    exps: &ExponentMatrix,
    ncoef: &CMatrix,
    resonant: &[(usize, usize)],
) -> Result<PolarModel> {
    let d = lambda.len();
    let perm = conjugation(lambda);
    if d % 2 != 0 || (0..d).step_by(2).any(|i| perm[i] != i + 1) || lambda.iter().step_by(2).any(|l| l.im <= 0.0) {
        return Err(Error::Unsupported(
            "polar form needs conjugate pairs with positive frequency first".into(),
        ));
    }
    let m = d / 2;
    let mut modes: Vec<PolarMode> = (0..m)
        .map(|j| PolarMode {
            alpha_coeffs: vec![lambda[2 * j].re],
            omega_coeffs: vec![lambda[2 * j].im],
            couplings: Vec::new(),
        })
        .collect();
    for &(r, k) in resonant {
        if r % 2 == 1 {
            continue;
        }
        let j = r / 2;
        let e = exps.column(k);
        let mut powers = vec![0u32; m];
        for i in 0..m {
            let (a, b) = (e[2 * i], e[2 * i + 1]);
            let ok = if i == j { a == b + 1 } else { a == b };
            if !ok {
                return Err(Error::Unsupported(format!(
                    "resonant monomial {e:?} in row {r} couples phases; polar reduction needs a product-of-oscillators normal form"
                )));
            }
            powers[i] = b;
        }
        let c = ncoef[(r, k)];
        let own = powers[j] as usize;
        if powers.iter().enumerate().all(|(i, p)| i == j || *p == 0) {
            let mode = &mut modes[j];
            if mode.alpha_coeffs.len() <= own {
                mode.alpha_coeffs.resize(own + 1, 0.0);
                mode.omega_coeffs.resize(own + 1, 0.0);
            }
            mode.alpha_coeffs[own] += c.re;
            mode.omega_coeffs[own] += c.im;
        } else {
            modes[j].couplings.push(PolarCoupling {
                powers,
                alpha: c.re,
                omega: c.im,
            });
        }
    }
    Ok(PolarModel {
        modes,
        max_training_amplitude: None,
    })
}
