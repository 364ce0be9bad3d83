//! Resonant coordinate changes. Away from exact (real-part) resonance the
//! normal form is unique only up to near-identity changes built from
//! resonant monomials, and they shift the nonlinear damping coefficients
//! by multiples of the linear decay rate. Fixing the harmonic content of one
//! observable removes the freedom: in the returned coordinates the
//! observable reads `Re w_j + (non-resonant terms)`, so `|w_j|` is the
//! observable's first-harmonic amplitude.

use num_complex::Complex64;

use super::{conjugation, polar_from_coefficients, ReducedModel};
use crate::error::{Error, Result};
use crate::forced::PolarModel;
use crate::linalg::CMatrix;
use crate::poly::{ExponentMatrix, Series};

#[derive(Clone, Debug)]
pub struct GaugedNormalForm {
    pub lambda: Vec<Complex64>,
    /// `w' = F(w)` per row, linear part included.
    pub rhs: Vec<Series>,
    /// `z = P(w)` into the original normal-form coordinates.
    pub transform: Vec<Series>,
    pub exps: ExponentMatrix,
    pub resonant: Vec<(usize, usize)>,
    /// Largest non-resonant coefficient the change produced in `F`; these are
    /// dropped and are zero under exact frequency resonance.
    pub dropped: f64,
}

impl GaugedNormalForm {
    pub fn ncoef(&self) -> CMatrix {
        CMatrix::from_fn(self.rhs.len(), self.exps.len(), |r, k| self.rhs[r].coeff(self.exps.column(k)))
    }

    pub fn to_polar(&self) -> Result<PolarModel> {
        polar_from_coefficients(&self.lambda, &self.exps, &self.ncoef(), &self.resonant)
    }
}

/// Conjugates `z' = rhs(z)` by `z = P(w)`, where `P` is a diagonal scaling
/// plus resonant terms chosen order by order so that `observable(P(w))` has
/// linear coefficients `1/2` (`1` for real modes) and no resonant terms.
pub fn observable_gauge(
    lambda: &[Complex64],
    rhs: &[Series],
    observable: &Series,
    resonant: impl Fn(usize, &[u32]) -> bool,
) -> Result<GaugedNormalForm> {
    let d = lambda.len();
    if rhs.len() != d || observable.nvars() != d {
        return Err(Error::Dimension {
            expected: d,
            got: rhs.len(),
        });
    }
    let trunc = rhs[0].trunc();
    let perm = conjugation(lambda);
    let unit = |i: usize| -> Vec<u32> {
        let mut e = vec![0; d];
        e[i] = 1;
        e
    };
    let mut scale = vec![0.0; d];
    for r in 0..d {
        let a = observable.coeff(&unit(r));
        if a.norm() < 1e-12 * observable.max_abs().max(1e-300) {
            return Err(Error::Unsupported(format!("mode {r} is invisible in the observable")));
        }
        scale[r] = if perm[r] == r { 1.0 / a.re } else { 0.5 / a.norm() };
    }
    let mut p: Vec<Series> = (0..d).map(|r| Series::var(d, trunc, r).scale(Complex64::new(scale[r], 0.0))).collect();
    let lin: Vec<Complex64> = (0..d).map(|r| observable.coeff(&unit(r)) * scale[r]).collect();
    let exps = ExponentMatrix::new(d, 2, trunc.max(2))?;
    let mut res_list = Vec::new();
    for k in 0..exps.len() {
        for r in 0..d {
            if resonant(r, exps.column(k)) {
                res_list.push((r, k));
            }
        }
    }
    res_list.sort_unstable();
    for order in 2..=trunc {
        let g = observable.substitute(&p);
        for col in exps.order_range(order) {
            let e = exps.column(col);
            let rows: Vec<usize> = (0..d).filter(|&r| resonant(r, e)).collect();
            if rows.is_empty() {
                continue;
            }
            let ge = g.coeff(e);
            let norm: f64 = rows.iter().map(|&r| lin[r].norm_sqr()).sum();
            for &r in &rows {
                p[r].add_term(e.to_vec(), -ge * lin[r].conj() / norm);
            }
        }
    }
    // F(P(w)) = DP(w) w', solved order by order: w' = S^-1 (F(P) - Dphi w')
    let fp: Vec<Series> = rhs.iter().map(|f| f.substitute(&p)).collect();
    let dphi: Vec<Vec<Series>> = (0..d)
        .map(|r| {
            let mut phi = p[r].clone();
            phi.set(unit(r), Complex64::default());
            (0..d).map(|i| phi.deriv(i)).collect()
        })
        .collect();
    let mut w: Vec<Series> = fp.iter().zip(&scale).map(|(f, s)| f.scale(Complex64::new(1.0 / s, 0.0))).collect();
    for _ in 1..trunc {
        w = (0..d)
            .map(|r| {
                let mut acc = fp[r].clone();
                for i in 0..d {
                    acc = &acc - &(&dphi[r][i] * &w[i]);
                }
                acc.scale(Complex64::new(1.0 / scale[r], 0.0))
            })
            .collect();
    }
    let mut dropped = 0.0f64;
    for (r, f) in w.iter_mut().enumerate() {
        let stray: Vec<(Vec<u32>, Complex64)> = f
            .terms()
            .filter(|(e, _)| {
                let ord: u32 = e.iter().sum();
                (ord >= 2 && !resonant(r, e)) || (ord < 2 && **e != unit(r)[..])
            })
            .map(|(e, c)| (e.to_vec(), c))
            .collect();
        for (e, c) in stray {
            dropped = dropped.max(c.norm());
            f.set(e, Complex64::default());
        }
    }
    if dropped > 0.0 {
        log::debug!("observable gauge dropped non-resonant terms up to {dropped:.3e}");
    }
    Ok(GaugedNormalForm {
        lambda: lambda.to_vec(),
        rhs: w,
        transform: p,
        exps,
        resonant: res_list,
        dropped,
    })
}

impl ReducedModel {
    /// Right-hand side `Lambda z + N(z)` as series.
    pub fn rhs_series(&self) -> Vec<Series> {
        let d = self.dim();
        let trunc = self.order();
        (0..d)
            .map(|r| {
                let mut s = Series::var(d, trunc, r).scale(self.linear.lambda[r]);
                for (k, e) in self.structure.exps.columns().enumerate() {
                    s.add_term(e.to_vec(), self.ncoef[(r, k)]);
                }
                s
            })
            .collect()
    }

    /// Reduced coordinates `eta = B q(z)` as series in `z`, with `q` the
    /// exact series inverse of `z = q + H* q^{2:N}`. The fitted `H` cannot
    /// serve here: the inverse has resonant terms that `H` omits.
    pub fn eta_series(&self) -> Vec<Series> {
        let d = self.dim();
        let trunc = self.order();
        let hstar: Vec<Series> = (0..d)
            .map(|j| {
                let mut s = Series::zero(d, trunc);
                for (k, e) in self.structure.exps.columns().enumerate() {
                    s.add_term(e.to_vec(), self.hstar[(j, k)]);
                }
                s
            })
            .collect();
        let z: Vec<Series> = (0..d).map(|j| Series::var(d, trunc, j)).collect();
        // q = z - H*(q); each pass fixes one more order
        let mut inner = z.clone();
        for _ in 1..trunc {
            inner = (0..d).map(|j| &z[j] - &hstar[j].substitute(&inner)).collect();
        }
        (0..d)
            .map(|i| {
                let mut acc = Series::zero(d, trunc);
                for (j, s) in inner.iter().enumerate() {
                    acc = &acc + &s.scale(self.linear.b[(i, j)]);
                }
                acc
            })
            .collect()
    }

    /// Gauge fixed by a real polynomial observable of the reduced
    /// coordinates, given as a series in `eta`.
    pub fn observable_gauge(&self, observable_of_eta: &Series) -> Result<GaugedNormalForm> {
        let g = observable_of_eta.substitute(&self.eta_series());
        let structure = &self.structure;
        observable_gauge(&self.linear.lambda, &self.rhs_series(), &g, |r, e| {
            structure.exps.index_of(e).is_some_and(|k| structure.is_resonant(r, k))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    // Stuart-Landau in complex form with a resonant coordinate change applied
    fn sl_rhs(lam: Complex64, b: Complex64, trunc: usize) -> Vec<Series> {
        let mut z = Series::var(2, trunc, 0).scale(lam);
        z.add_term(vec![2, 1], b);
        let mut zb = Series::var(2, trunc, 1).scale(lam.conj());
        zb.add_term(vec![1, 2], b.conj());
        vec![z, zb]
    }

    fn res(r: usize, e: &[u32]) -> bool {
        let (a, b) = (e[0] as i64, e[1] as i64);
        if r == 0 {
            a - b == 1
        } else {
            b - a == 1
        }
    }

    #[test]
    fn clean_observable_is_a_fixed_point() {
        let lam = c(-0.06, 7.8);
        let b = c(-0.05, -1.7);
        let rhs = sl_rhs(lam, b, 5);
        let mut obs = Series::zero(2, 5);
        obs.add_term(vec![1, 0], c(0.5, 0.0));
        obs.add_term(vec![0, 1], c(0.5, 0.0));
        obs.add_term(vec![3, 0], c(0.3, 0.0));
        obs.add_term(vec![0, 3], c(0.3, 0.0));
        let g = observable_gauge(&[lam, lam.conj()], &rhs, &obs, res).unwrap();
        assert!((g.rhs[0].coeff(&[2, 1]) - b).norm() < 1e-14);
        assert_eq!(g.dropped, 0.0);
    }

    #[test]
    fn resonant_coordinate_change_is_undone() {
        // z = w + c w^2 wbar shifts the cubic coefficient by -2 Re(lambda) c
        let lam = c(-0.06, 7.8);
        let b = c(-0.05, -1.7);
        let cc = c(0.2, -0.1);
        let trunc = 3;
        let mut fwd = Series::var(2, trunc, 0);
        fwd.add_term(vec![2, 1], cc);
        let mut fwdb = Series::var(2, trunc, 1);
        fwdb.add_term(vec![1, 2], cc.conj());
        // observable Re z in the original coordinate, written in w
        let obs = &fwd.scale(c(0.5, 0.0)) + &fwdb.scale(c(0.5, 0.0));
        let shifted = b - cc * (2.0 * lam.re);
        let rhs = sl_rhs(lam, shifted, trunc);
        let g = observable_gauge(&[lam, lam.conj()], &rhs, &obs, res).unwrap();
        assert!((g.rhs[0].coeff(&[2, 1]) - b).norm() < 1e-12, "{:?}", g.rhs[0]);
        let pol = g.to_polar().unwrap();
        assert!((pol.modes[0].alpha_coeffs[1] - b.re).abs() < 1e-12);
    }

    #[test]
    fn scaling_normalizes_amplitude() {
        let lam = c(-0.1, 2.0);
        let b = c(-0.4, 0.3);
        let rhs = sl_rhs(lam, b, 3);
        // observable 2 Re z: amplitude rho_obs = 2 |z|
        let mut obs = Series::zero(2, 3);
        obs.add_term(vec![1, 0], c(1.0, 0.0));
        obs.add_term(vec![0, 1], c(1.0, 0.0));
        let g = observable_gauge(&[lam, lam.conj()], &rhs, &obs, res).unwrap();
        assert!((g.rhs[0].coeff(&[2, 1]) - b / 4.0).norm() < 1e-14);
    }
}
