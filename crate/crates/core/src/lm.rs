//! Levenberg–Marquardt for dense nonlinear least squares.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub trait LeastSquaresProblem {
    fn residuals(&self, x: &DVector<f64>) -> DVector<f64>;
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;

    /// `J^T J`, `J^T r` and `|r|^2`. Override when the Jacobian is too large
    /// to materialize.
    fn normal_equations(&self, x: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>, f64) {
        let r = self.residuals(x);
        let j = self.jacobian(x);
        (j.tr_mul(&j), j.tr_mul(&r), r.norm_squared())
    }

    fn cost(&self, x: &DVector<f64>) -> f64 {
        self.residuals(x).norm_squared()
    }
}

#[derive(Clone, Debug)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop when an accepted step changes the cost by less than this fraction.
    pub rel_tol: f64,
    pub initial_damping: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iterations: 500,
            rel_tol: 1e-9,
            initial_damping: 1e-6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LmReport {
    pub x: DVector<f64>,
    pub cost: f64,
    pub iterations: usize,
}

pub fn minimize<P: LeastSquaresProblem>(problem: &P, x0: DVector<f64>, opts: &LmOptions) -> Result<LmReport> {
    let mut x = x0;
    let (mut jtj, mut jtr, mut cost) = problem.normal_equations(&x);
    let mut mu = opts.initial_damping;
    let n = x.len();
    if n == 0 {
        return Ok(LmReport { x, cost, iterations: 0 });
    }
    for it in 1..=opts.max_iterations {
        if jtr.amax() == 0.0 || cost == 0.0 {
            return Ok(LmReport { x, cost, iterations: it - 1 });
        }
        let mut accepted = false;
        while mu < 1e16 {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += mu * jtj[(i, i)].max(1e-12);
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&(-&jtr)),
                None => {
                    mu *= 10.0;
                    continue;
                }
            };
            let trial = &x + &step;
            let tc = problem.cost(&trial);
            if tc.is_finite() && tc <= cost {
                let rel = (cost - tc) / cost.max(f64::MIN_POSITIVE);
                let small_step = step.norm() <= 1e-14 * (x.norm() + 1e-14);
                x = trial;
                mu = (mu / 3.0).max(1e-15);
                let ne = problem.normal_equations(&x);
                jtj = ne.0;
                jtr = ne.1;
                cost = ne.2;
                if rel < opts.rel_tol || small_step {
                    return Ok(LmReport { x, cost, iterations: it });
                }
                accepted = true;
                break;
            }
            mu *= 10.0;
        }
        if !accepted {
            // no descent direction left at machine precision
            return Ok(LmReport { x, cost, iterations: it });
        }
    }
    Err(Error::NotConverged {
        iterations: opts.max_iterations,
        cost,
        best: x.iter().copied().collect(),
    })
}

/// Central-difference Jacobian of a residual map.
pub fn numeric_jacobian(f: impl Fn(&DVector<f64>) -> DVector<f64>, x: &DVector<f64>) -> DMatrix<f64> {
    let r0 = f(x);
    let mut j = DMatrix::zeros(r0.len(), x.len());
    for k in 0..x.len() {
        let h = 1e-6 * (1.0 + x[k].abs());
        let mut xp = x.clone();
        xp[k] += h;
        let mut xm = x.clone();
        xm[k] -= h;
        j.set_column(k, &((f(&xp) - f(&xm)) / (2.0 * h)));
    }
    j
}
