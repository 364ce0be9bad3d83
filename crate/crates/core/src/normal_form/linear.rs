use nalgebra::DMatrix;
use num_complex::Complex64;

use super::LinearPart;
use crate::error::{Error, Result};
use crate::linalg::{condition_number, real_eigen, CMatrix};
use crate::poly::{eval_columns, ExponentMatrix};

#[derive(Clone, Debug)]
pub struct LinearOptions {
    /// Polynomial order of the regression whose linear block is kept as the
    /// Jacobian. One is the plain linear fit; higher orders soak up the
    /// nonlinearity still present below the cutoff.
    pub regression_order: usize,
    /// Eigenvector condition number above which the linear part is treated
    /// as defective.
    pub max_condition: f64,
}

impl Default for LinearOptions {
    fn default() -> Self {
        LinearOptions {
            regression_order: 1,
            max_condition: 1e8,
        }
    }
}

pub fn estimate_linear_part(
    states: &DMatrix<f64>,
    derivatives: &DMatrix<f64>,
    amplitude_cutoff: f64,
    opts: &LinearOptions,
) -> Result<LinearPart> {
    let d = states.nrows();
    if derivatives.shape() != states.shape() {
        return Err(Error::arg("states and derivatives must have the same shape"));
    }
    if d == 0 {
        return Err(Error::arg("empty state dimension"));
    }
    let keep: Vec<usize> = (0..states.ncols())
        .filter(|&j| states.column(j).norm() <= amplitude_cutoff)
        .collect();
    let need = 10 * d * d;
    if keep.len() < need {
        return Err(Error::TooFewSamples {
            cutoff: amplitude_cutoff,
            have: keep.len(),
            need,
        });
    }
    let x = states.select_columns(&keep);
    let dx = derivatives.select_columns(&keep);
    let exps = ExponentMatrix::new(d, 1, opts.regression_order.max(1))?;
    let design = eval_columns(&exps, &x)?;
    let (coef, rank) = crate::linalg::lstsq(&design.transpose(), &dx.transpose(), 1e-13);
    if rank < exps.len() {
        return Err(Error::SingularFit {
            order: 1,
            detail: format!("linear regression rank {rank} < {}", exps.len()),
        });
    }
    let jacobian = coef.transpose().columns(0, d).into_owned();
    linear_part_from_jacobian(jacobian, opts.max_condition)
}

/// Eigendecomposition with decreasing real parts, each conjugate pair adjacent
/// and the positive imaginary part first.
pub fn linear_part_from_jacobian(jacobian: DMatrix<f64>, max_condition: f64) -> Result<LinearPart> {
    let d = jacobian.nrows();
    let (vals, vecs) = real_eigen(&jacobian)?;
    let scale = vals.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
    let tol = 1e-10 * scale;
    let mut used = vec![false; d];
    let mut groups: Vec<Vec<(Complex64, nalgebra::DVector<Complex64>)>> = Vec::new();
    for i in 0..d {
        if used[i] {
            continue;
        }
        used[i] = true;
        let l = vals[i];
        if l.im.abs() <= tol {
            let mut v = vecs.column(i).into_owned();
            // real eigenvector up to phase
            let phase = v.iter().max_by(|a, b| a.norm().total_cmp(&b.norm())).copied().unwrap();
            v *= phase.conj() / phase.norm();
            let v = v.map(|z| Complex64::new(z.re, 0.0));
            let n = v.norm();
            groups.push(vec![(Complex64::new(l.re, 0.0), v / Complex64::new(n, 0.0))]);
            continue;
        }
        let partner = (0..d)
            .filter(|&k| !used[k])
            .min_by(|&a, &b| (vals[a] - l.conj()).norm().total_cmp(&(vals[b] - l.conj()).norm()))
            .ok_or_else(|| Error::arg("complex eigenvalue without conjugate partner"))?;
        used[partner] = true;
        let (_, vp) = if l.im > 0.0 {
            (l, vecs.column(i).into_owned())
        } else {
            (vals[partner], vecs.column(partner).into_owned())
        };
        // enforce exact conjugacy of the pair
        let lp = Complex64::new(
            0.5 * (l.re + vals[partner].re),
            0.5 * (l.im.abs() + vals[partner].im.abs()),
        );
        let vc = vp.map(|z| z.conj());
        groups.push(vec![(lp, vp), (lp.conj(), vc)]);
    }
    groups.sort_by(|a, b| b[0].0.re.total_cmp(&a[0].0.re).then(b[0].0.im.total_cmp(&a[0].0.im)));
    let mut lambda = Vec::with_capacity(d);
    let mut b = CMatrix::zeros(d, d);
    for g in groups {
        for (l, v) in g {
            b.set_column(lambda.len(), &v);
            lambda.push(l);
        }
    }
    let cond = condition_number(&b);
    if !(cond < max_condition) {
        return Err(Error::DefectiveLinearPart { condition: cond });
    }
    let b_inv = b
        .clone()
        .try_inverse()
        .ok_or(Error::DefectiveLinearPart { condition: f64::INFINITY })?;
    Ok(LinearPart {
        jacobian,
        b,
        b_inv,
        lambda,
    })
}

impl LinearPart {
    /// Rescales eigenvectors so that the linear observable `row . eta` reads
    /// `Re z_j` for an oscillatory mode `z_j` (so `|z_j|` is the observable's
    /// linear amplitude), and `z_j` itself for a real mode.
    pub fn normalize_to_observable(&mut self, row: &[f64]) -> crate::Result<()> {
        let d = self.dim();
        crate::error::check_dim(d, row.len())?;
        let perm = self.conjugation();
        for j in 0..d {
            if perm[j] < j {
                continue;
            }
            let col = self.b.column(j).into_owned();
            let s: Complex64 = row.iter().zip(col.iter()).map(|(r, v)| v * *r).sum();
            if s.norm() < 1e-10 * col.norm() {
                log::warn!("mode {j} is invisible in the observable; keeping unit normalization");
                continue;
            }
            let target = if perm[j] == j { 1.0 } else { 0.5 };
            let scaled = col * (Complex64::new(target, 0.0) / s);
            self.b.set_column(j, &scaled);
            if perm[j] != j {
                self.b.set_column(perm[j], &scaled.map(|z| z.conj()));
            }
        }
        self.b_inv = self
            .b
            .clone()
            .try_inverse()
            .ok_or(Error::DefectiveLinearPart { condition: f64::INFINITY })?;
        Ok(())
    }
}
