//! Equation-driven SSM and extended normal form of a known polynomial vector
//! field in modal coordinates, `q' = Lambda q + g0(q)`.
//!
//! The parametrization `q = W(z)` and reduced dynamics `z' = N(z)` solve
//! `DW(z) N(z) = Lambda W(z) + g0(W(z))` order by order. At order `k`, for
//! row `r` and monomial `z^e`,
//!
//! ```text
//! (lambda_r - <e, lambda_E>) W[r, e] = B[r, e] + N[r, e]   (N only for r in E)
//! ```
//!
//! where `B` collects everything known from lower orders. Near-resonant
//! in-block entries go to `N`, all others to `W`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde_json::json;

use crate::error::{check_dim, Error, Result};
use crate::forced::{ForcingSpec, Harmonic, HarmonicSign, PolarModel};
use crate::linalg::{c, cmatrix_from_json, cmatrix_to_json, cvec_from_json, cvec_to_json, CMatrix, CVector};
use crate::normal_form::{conjugation, observable_gauge, polar_from_coefficients, GaugedNormalForm};
use crate::poly::{ExponentMatrix, Series};
use crate::synth::{GroundTruth, VectorField};

/// Largest order the recursion accepts.
pub const MAX_ORDER: usize = 15;

#[derive(Clone, Debug)]
pub struct ModalSystem {
    pub lambda: Vec<Complex64>,
    /// `g0[j - 2]` holds the order-`j` coefficients, `n x monomial_count(n, j)`.
    pub g0: Vec<CMatrix>,
    /// Modal-to-physical map, `x = T q`.
    pub t: CMatrix,
    t_inv: CMatrix,
    exps: Vec<ExponentMatrix>,
}

fn is_zero_c(z: Complex64) -> bool {
    z == Complex64::default()
}

impl ModalSystem {
    /// Linear system with eigenvalues `lambda`; complex eigenvalues must come
    /// in adjacent conjugate pairs.
    pub fn new(lambda: Vec<Complex64>, t: CMatrix) -> Result<Self> {
        Self::build(lambda, t, true)
    }

    fn build(lambda: Vec<Complex64>, t: CMatrix, real_basis: bool) -> Result<Self> {
        let n = lambda.len();
        if t.shape() != (n, n) {
            return Err(Error::arg(format!("T must be {n}x{n}")));
        }
        let perm = conjugation(&lambda);
        for (i, l) in lambda.iter().enumerate() {
            let p = perm[i];
            if (lambda[p] - l.conj()).norm() > 1e-12 * l.norm().max(1.0) {
                return Err(Error::arg(format!("eigenvalue {l} lacks an adjacent conjugate")));
            }
            if real_basis && (0..n).any(|r| (t[(r, p)] - t[(r, i)].conj()).norm() > 1e-12) {
                return Err(Error::arg(format!("columns {i} and {p} of T are not conjugate")));
            }
        }
        let t_inv = t
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::arg("T is singular"))?;
        Ok(ModalSystem {
            lambda,
            g0: Vec::new(),
            t,
            t_inv,
            exps: Vec::new(),
        })
    }

    /// System in modal coordinates, `T = I`. Conjugate pairs then show up
    /// as complex physical states; use [`ModalSystem::new`] with a real
    /// basis for simulation.
    pub fn modal(lambda: Vec<Complex64>) -> Result<Self> {
        let n = lambda.len();
        Self::build(lambda, CMatrix::identity(n, n), false)
    }

    pub fn dim(&self) -> usize {
        self.lambda.len()
    }

    pub fn nonlinear_order(&self) -> usize {
        self.g0.len() + 1
    }

    fn ensure_order(&mut self, order: usize) -> Result<()> {
        let n = self.dim();
        while self.g0.len() + 1 < order {
            let j = self.g0.len() + 2;
            let e = ExponentMatrix::new(n, j, j)?;
            self.g0.push(CMatrix::zeros(n, e.len()));
            self.exps.push(e);
        }
        Ok(())
    }

    /// Adds `c q^e` to row `row` together with its conjugate term so the
    /// physical field stays real.
    pub fn with_term(mut self, row: usize, e: &[u32], coeff: Complex64) -> Result<Self> {
        let n = self.dim();
        check_dim(n, e.len())?;
        if row >= n {
            return Err(Error::arg(format!("row {row} out of range")));
        }
        let order = e.iter().sum::<u32>() as usize;
        if order < 2 || order > MAX_ORDER {
            return Err(Error::arg(format!("term order {order} outside 2..={MAX_ORDER}")));
        }
        self.ensure_order(order)?;
        let perm = conjugation(&self.lambda);
        let ex = &self.exps[order - 2];
        let k = ex.index_of(e).expect("order matches");
        let mut ec = vec![0u32; n];
        for (i, p) in e.iter().enumerate() {
            ec[perm[i]] = *p;
        }
        let kc = ex.index_of(&ec).expect("same order");
        let rc = perm[row];
        let g = &mut self.g0[order - 2];
        if rc == row && kc == k {
            if coeff.im.abs() > 1e-14 * coeff.norm() {
                return Err(Error::arg("self-conjugate term needs a real coefficient"));
            }
            g[(row, k)] += c(coeff.re, 0.0);
        } else {
            g[(row, k)] += coeff;
            g[(rc, kc)] += coeff.conj();
        }
        Ok(self)
    }

    /// Raw coefficient blocks; checked for conjugate closure.
    pub fn with_g0(mut self, g0: Vec<CMatrix>) -> Result<Self> {
        let n = self.dim();
        self.g0.clear();
        self.exps.clear();
        self.ensure_order(g0.len() + 1)?;
        let perm = conjugation(&self.lambda);
        for (idx, g) in g0.into_iter().enumerate() {
            let ex = &self.exps[idx];
            if g.shape() != (n, ex.len()) {
                return Err(Error::Dimension {
                    expected: ex.len(),
                    got: g.ncols(),
                });
            }
            let cols = ex.permuted_columns(&perm);
            for r in 0..n {
                for k in 0..ex.len() {
                    if (g[(perm[r], cols[k])] - g[(r, k)].conj()).norm() > 1e-12 * (1.0 + g[(r, k)].norm()) {
                        return Err(Error::arg(format!(
                            "coefficient ({r}, {:?}) has no conjugate partner",
                            ex.column(k)
                        )));
                    }
                }
            }
            self.g0[idx] = g;
        }
        Ok(self)
    }

    /// `Lambda q + g0(q)`.
    pub fn modal_rhs(&self, q: &[Complex64]) -> CVector {
        let n = self.dim();
        let mut out = CVector::from_fn(n, |i, _| self.lambda[i] * q[i]);
        for (g, ex) in self.g0.iter().zip(&self.exps) {
            let mut m = vec![Complex64::default(); ex.len()];
            ex.eval_into(q, &mut m);
            out += g * CVector::from_vec(m);
        }
        out
    }

    pub fn to_modal(&self, x: &[f64]) -> CVector {
        &self.t_inv * CVector::from_iterator(x.len(), x.iter().map(|v| c(*v, 0.0)))
    }

    pub fn to_physical(&self, q: &CVector) -> Vec<f64> {
        (&self.t * q).iter().map(|z| z.re).collect()
    }

    fn g0_series(&self, w: &[Series]) -> Vec<Series> {
        let n = self.dim();
        let mut out: Vec<Series> = (0..n).map(|_| Series::zero(w[0].nvars(), w[0].trunc())).collect();
        for (g, ex) in self.g0.iter().zip(&self.exps) {
            for (r, acc) in out.iter_mut().enumerate() {
                let row: Vec<Complex64> = g.row(r).iter().copied().collect();
                if row.iter().all(|z| is_zero_c(*z)) {
                    continue;
                }
                *acc = &*acc + &Series::compose(ex, &row, w);
            }
        }
        out
    }
}

impl VectorField for ModalSystem {
    fn dim(&self) -> usize {
        self.lambda.len()
    }
    fn eval(&self, _t: f64, x: &[f64], dx: &mut [f64]) {
        let q = self.to_modal(x);
        let f = &self.t * self.modal_rhs(q.as_slice());
        for (d, v) in dx.iter_mut().zip(f.iter()) {
            *d = v.re;
        }
    }
    fn truth(&self) -> GroundTruth {
        GroundTruth {
            eigenvalues: self.lambda.clone(),
            ..Default::default()
        }
    }
}

/// Leading-order response to one forcing harmonic `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicResponse {
    pub k: Vec<i32>,
    pub w_plus: CVector,
    pub w_minus: CVector,
    pub n_plus: CVector,
    pub n_minus: CVector,
}

#[derive(Clone, Debug)]
pub struct OracleModel {
    /// Number of mode pairs (or real modes counted by two) in the SSM: the
    /// first `2m` eigenvalues.
    pub m: usize,
    pub order: usize,
    pub delta: f64,
    pub lambda_m: Vec<Complex64>,
    /// `q = W(z)`, one series per full-space coordinate.
    pub w: Vec<Series>,
    /// `z' = N(z)`, one series per reduced coordinate.
    pub n: Vec<Series>,
    /// In-block near-resonant `(row, column)` pairs over `exps(2m, 2..=order)`.
    pub resonant: Vec<(usize, usize)>,
    pub omega: Vec<f64>,
    pub harmonics: Vec<HarmonicResponse>,
}

impl OracleModel {
    pub fn reduced_dim(&self) -> usize {
        self.lambda_m.len()
    }

    pub fn exponents(&self) -> ExponentMatrix {
        ExponentMatrix::new(self.reduced_dim(), 2, self.order).expect("order >= 2")
    }

    fn coeff_matrix(series: &[Series], exps: &ExponentMatrix, k: usize) -> CMatrix {
        let range = exps.order_range(k);
        CMatrix::from_fn(series.len(), range.len(), |r, j| series[r].coeff(exps.column(range.start + j)))
    }

    /// Order-`k` block of `W` over the graded-lex monomials of order `k`.
    pub fn w_matrix(&self, k: usize) -> CMatrix {
        let ex = ExponentMatrix::new(self.reduced_dim(), k, k).expect("valid order");
        Self::coeff_matrix(&self.w, &ex, k)
    }

    pub fn n_matrix(&self, k: usize) -> CMatrix {
        let ex = ExponentMatrix::new(self.reduced_dim(), k, k).expect("valid order");
        Self::coeff_matrix(&self.n, &ex, k)
    }

    /// Nonlinear normal-form coefficients over `exps(2m, 2..=order)`.
    pub fn ncoef(&self) -> CMatrix {
        let ex = self.exponents();
        CMatrix::from_fn(self.reduced_dim(), ex.len(), |r, k| self.n[r].coeff(ex.column(k)))
    }

    pub fn to_polar(&self) -> Result<PolarModel> {
        polar_from_coefficients(&self.lambda_m, &self.exponents(), &self.ncoef(), &self.resonant)
    }

    /// Normal form in the gauge where physical coordinate `row` reads
    /// `Re w_j` plus non-resonant terms.
    pub fn observable_gauge(&self, system: &ModalSystem, row: usize) -> Result<GaugedNormalForm> {
        check_dim(system.dim(), self.w.len())?;
        if row >= system.dim() {
            return Err(Error::arg(format!("row {row} out of range")));
        }
        let d = self.reduced_dim();
        let mut obs = Series::zero(d, self.order.max(1));
        for (j, w) in self.w.iter().enumerate() {
            obs = &obs + &w.scale(system.t[(row, j)]);
        }
        let exps = self.exponents();
        observable_gauge(&self.lambda_m, &self.n, &obs, |r, e| {
            exps.index_of(e).is_some_and(|k| self.resonant.binary_search(&(r, k)).is_ok())
        })
    }

    /// Polar forcing of the reduced dynamics for forcing amplitude `eps`:
    /// `eps n e^{i<k,Omega>t}` on `z_j` becomes `f = eps |n|`,
    /// `phi = arg n - pi/2`.
    pub fn forcing_spec(&self, eps: f64) -> ForcingSpec {
        let mut spec = ForcingSpec {
            omega: self.omega.clone(),
            harmonics: Vec::new(),
        };
        for h in &self.harmonics {
            for j in 0..self.reduced_dim() / 2 {
                for (n, sign) in [(h.n_plus[2 * j], HarmonicSign::Plus), (h.n_minus[2 * j], HarmonicSign::Minus)] {
                    if n.norm() > 0.0 {
                        spec.harmonics.push(Harmonic {
                            mode: j,
                            k: h.k.clone(),
                            f: eps * n.norm(),
                            phi: n.arg() - std::f64::consts::FRAC_PI_2,
                            sign,
                        });
                    }
                }
            }
        }
        spec
    }

    pub fn to_json(&self) -> serde_json::Value {
        let w: Vec<_> = (2..=self.order).map(|k| cmatrix_to_json(&self.w_matrix(k))).collect();
        let n: Vec<_> = (2..=self.order).map(|k| cmatrix_to_json(&self.n_matrix(k))).collect();
        let harmonics: Vec<_> = self
            .harmonics
            .iter()
            .map(|h| {
                json!({
                    "k": h.k,
                    "w_plus": cvec_to_json(h.w_plus.as_slice()),
                    "w_minus": cvec_to_json(h.w_minus.as_slice()),
                    "n_plus": cvec_to_json(h.n_plus.as_slice()),
                    "n_minus": cvec_to_json(h.n_minus.as_slice()),
                })
            })
            .collect();
        json!({
            "m": self.m,
            "order": self.order,
            "delta": self.delta,
            "full_dim": self.w.len(),
            "lambda_m": cvec_to_json(&self.lambda_m),
            "ordering": "graded-lex",
            "W": w,
            "N": n,
            "resonant": self.resonant,
            "Omega": self.omega,
            "harmonics": harmonics,
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let get = |k: &str| v.get(k).ok_or_else(|| Error::Parse(format!("oracle model: missing '{k}'")));
        let num = |k: &str| -> Result<usize> {
            get(k)?
                .as_u64()
                .map(|x| x as usize)
                .ok_or_else(|| Error::Parse(format!("oracle model: '{k}' is not an integer")))
        };
        let m = num("m")?;
        let order = num("order")?;
        let full = num("full_dim")?;
        let delta = get("delta")?.as_f64().unwrap_or(0.0);
        let lambda_m = cvec_from_json(get("lambda_m")?)?;
        let d = lambda_m.len();
        let mut w: Vec<Series> = (0..full).map(|_| Series::zero(d, order)).collect();
        let mut n: Vec<Series> = (0..d).map(|_| Series::zero(d, order)).collect();
        for (r, l) in lambda_m.iter().enumerate() {
            let mut e = vec![0; d];
            e[r] = 1;
            w[r].set(e.clone(), c(1.0, 0.0));
            n[r].set(e, *l);
        }
        let blocks = |key: &str, target: &mut [Series]| -> Result<()> {
            let arr = get(key)?
                .as_array()
                .ok_or_else(|| Error::Parse(format!("oracle model: '{key}' is not a list")))?;
            for (i, b) in arr.iter().enumerate() {
                let k = i + 2;
                let ex = ExponentMatrix::new(d, k, k)?;
                let mat = cmatrix_from_json(b)?;
                if mat.shape() != (target.len(), ex.len()) {
                    return Err(Error::Parse(format!("oracle model: '{key}' block {k} has wrong shape")));
                }
                for (r, s) in target.iter_mut().enumerate() {
                    for j in 0..ex.len() {
                        s.set(ex.column(j).to_vec(), mat[(r, j)]);
                    }
                }
            }
            Ok(())
        };
        blocks("W", &mut w)?;
        blocks("N", &mut n)?;
        let resonant: Vec<(usize, usize)> =
            serde_json::from_value(get("resonant")?.clone()).map_err(|e| Error::Parse(e.to_string()))?;
        let omega: Vec<f64> = serde_json::from_value(get("Omega")?.clone()).map_err(|e| Error::Parse(e.to_string()))?;
        let mut harmonics = Vec::new();
        for h in get("harmonics")?.as_array().cloned().unwrap_or_default() {
            let vec = |key: &str| -> Result<CVector> {
                Ok(CVector::from_vec(cvec_from_json(
                    h.get(key).ok_or_else(|| Error::Parse(format!("harmonic: missing '{key}'")))?,
                )?))
            };
            harmonics.push(HarmonicResponse {
                k: serde_json::from_value(h.get("k").cloned().unwrap_or_default())
                    .map_err(|e| Error::Parse(e.to_string()))?,
                w_plus: vec("w_plus")?,
                w_minus: vec("w_minus")?,
                n_plus: vec("n_plus")?,
                n_minus: vec("n_minus")?,
            });
        }
        Ok(OracleModel {
            m,
            order,
            delta,
            lambda_m,
            w,
            n,
            resonant,
            omega,
            harmonics,
        })
    }
}

/// `DW N - Lambda W - g0(W)`, one series per full-space row.
fn invariance_defect(system: &ModalSystem, w: &[Series], n: &[Series]) -> Vec<Series> {
    let g = system.g0_series(w);
    w.iter()
        .enumerate()
        .map(|(r, wr)| {
            let mut acc = Series::zero(wr.nvars(), wr.trunc());
            for (i, ni) in n.iter().enumerate() {
                let d = wr.deriv(i);
                if !d.is_zero() {
                    acc = &acc + &(&d * ni);
                }
            }
            let lin = wr.scale(system.lambda[r]);
            &(&acc - &lin) - &g[r]
        })
        .collect()
}

pub fn solve_autonomous_ssm(system: &ModalSystem, m: usize, order: usize, delta: f64) -> Result<OracleModel> {
    let n_full = system.dim();
    let d = 2 * m;
    if m == 0 || d > n_full {
        return Err(Error::arg(format!("SSM of {m} pairs does not fit a {n_full}-dimensional system")));
    }
    if order < 1 || order > MAX_ORDER {
        return Err(Error::arg(format!("order {order} outside 1..={MAX_ORDER}")));
    }
    let lambda_m: Vec<Complex64> = system.lambda[..d].to_vec();
    let perm = conjugation(&system.lambda);
    if (0..d).any(|i| perm[i] >= d) {
        return Err(Error::arg("the first 2m eigenvalues must be closed under conjugation"));
    }
    let trunc = order.max(1);
    let mut w: Vec<Series> = (0..n_full).map(|_| Series::zero(d, trunc)).collect();
    let mut n: Vec<Series> = (0..d).map(|_| Series::zero(d, trunc)).collect();
    for r in 0..d {
        w[r] = Series::var(d, trunc, r);
        n[r] = Series::var(d, trunc, r).scale(lambda_m[r]);
    }
    let exps = ExponentMatrix::new(d, 2, order.max(2))?;
    let scale = system.lambda.iter().map(|l| l.norm()).fold(1e-300, f64::max);
    let mut resonant = Vec::new();
    for k in 2..=order {
        let defect = invariance_defect(system, &w, &n);
        for r in 0..n_full {
            let b = defect[r].part(k);
            for col in exps.order_range(k) {
                let e = exps.column(col);
                let lam_e: Complex64 = e.iter().zip(&lambda_m).map(|(p, l)| l * *p as f64).sum();
                let den = system.lambda[r] - lam_e;
                let bv = b.coeff(e);
                if r < d && (den.im).abs() <= delta {
                    resonant.push((r, col));
                    n[r].set(e.to_vec(), -bv);
                    continue;
                }
                if den.norm() <= 1e-13 * scale {
                    return Err(Error::Resonance {
                        row: r,
                        monomial: col,
                        order: k,
                        denominator: den.norm(),
                    });
                }
                if !is_zero_c(bv) {
                    w[r].set(e.to_vec(), bv / den);
                }
            }
        }
    }
    resonant.sort_unstable();
    Ok(OracleModel {
        m,
        order,
        delta,
        lambda_m,
        w,
        n,
        resonant,
        omega: Vec::new(),
        harmonics: Vec::new(),
    })
}

/// Max-abs coefficient of the invariance defect at each order `1..=order`.
pub fn invariance_residual(model: &OracleModel, system: &ModalSystem) -> Vec<f64> {
    let defect = invariance_defect(system, &model.w, &model.n);
    (1..=model.order)
        .map(|k| defect.iter().map(|s| s.part(k).max_abs()).fold(0.0, f64::max))
        .collect()
}

/// Forcing harmonic `eps (g_plus e^{i<k,Omega>t} + g_minus e^{-i<k,Omega>t})`
/// in modal coordinates.
#[derive(Clone, Debug)]
pub struct ModalForcing {
    pub k: Vec<i32>,
    pub g_plus: CVector,
    pub g_minus: CVector,
}

/// Leading-order (`eps z^0`) non-autonomous terms for each forcing harmonic.
pub fn solve_nonautonomous_leading(
    model: &OracleModel,
    system: &ModalSystem,
    forcing: &[ModalForcing],
    omega: &[f64],
    delta: f64,
) -> Result<OracleModel> {
    let n_full = system.dim();
    let d = model.reduced_dim();
    let scale = system.lambda.iter().map(|l| l.norm()).fold(1e-300, f64::max);
    let mut out = model.clone();
    out.omega = omega.to_vec();
    out.harmonics.clear();
    for (hi, h) in forcing.iter().enumerate() {
        check_dim(omega.len(), h.k.len())?;
        check_dim(n_full, h.g_plus.len())?;
        check_dim(n_full, h.g_minus.len())?;
        let rate: f64 = h.k.iter().zip(omega).map(|(k, w)| *k as f64 * w).sum();
        let mut resp = HarmonicResponse {
            k: h.k.clone(),
            w_plus: CVector::zeros(n_full),
            w_minus: CVector::zeros(n_full),
            n_plus: CVector::zeros(d),
            n_minus: CVector::zeros(d),
        };
        for (sgn, g) in [(1.0, &h.g_plus), (-1.0, &h.g_minus)] {
            for r in 0..n_full {
                let lam = system.lambda[r];
                let den = lam - c(0.0, sgn * rate);
                let gr = g[r];
                let (wv, nv) = if r < d && (lam.im - sgn * rate).abs() <= delta {
                    (Complex64::default(), gr)
                } else {
                    if den.norm() <= 1e-13 * scale {
                        if is_zero_c(gr) {
                            continue;
                        }
                        return Err(Error::Resonance {
                            row: r,
                            monomial: hi,
                            order: 0,
                            denominator: den.norm(),
                        });
                    }
                    (-gr / den, Complex64::default())
                };
                if sgn > 0.0 {
                    resp.w_plus[r] = wv;
                    if r < d {
                        resp.n_plus[r] = nv;
                    }
                } else {
                    resp.w_minus[r] = wv;
                    if r < d {
                        resp.n_minus[r] = nv;
                    }
                }
            }
        }
        out.harmonics.push(resp);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralQuotients {
    /// Integer part of `max |Re lambda| / min_{E} |Re lambda|` over the whole spectrum.
    pub absolute: u64,
    /// Same ratio restricted to eigenvalues outside `E`; 0 when `E` is everything.
    pub relative: u64,
    pub absolute_ratio: f64,
    pub relative_ratio: f64,
    pub outer_empty: bool,
}

pub fn spectral_quotients(lambda: &[Complex64], e_indices: &[usize]) -> Result<SpectralQuotients> {
    if e_indices.is_empty() || e_indices.iter().any(|&i| i >= lambda.len()) {
        return Err(Error::arg("spectral subspace indices out of range"));
    }
    let min_in = e_indices
        .iter()
        .map(|&i| lambda[i].re.abs())
        .fold(f64::INFINITY, f64::min);
    if min_in == 0.0 {
        return Err(Error::UndefinedQuotient(
            "an eigenvalue in the spectral subspace has zero real part".into(),
        ));
    }
    let max_all = lambda.iter().map(|l| l.re.abs()).fold(0.0, f64::max);
    let outer: Vec<f64> = (0..lambda.len())
        .filter(|i| !e_indices.contains(i))
        .map(|i| lambda[i].re.abs())
        .collect();
    let absolute_ratio = max_all / min_in;
    let (relative_ratio, outer_empty) = if outer.is_empty() {
        (0.0, true)
    } else {
        (outer.iter().copied().fold(0.0, f64::max) / min_in, false)
    };
    let int = |x: f64| (x + 1e-12 * x).floor() as u64;
    Ok(SpectralQuotients {
        absolute: int(absolute_ratio),
        relative: int(relative_ratio),
        absolute_ratio,
        relative_ratio,
        outer_empty,
    })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NonresonanceReport {
    /// `(m, k)` with `sum m_j Re lambda_j = Re lambda_k`.
    pub real_part: Vec<(Vec<u32>, usize)>,
    /// `(m, k)` with `sum m_j lambda_j = lambda_k`.
    pub complex: Vec<(Vec<u32>, usize)>,
}

impl NonresonanceReport {
    pub fn is_clean(&self) -> bool {
        self.real_part.is_empty() && self.complex.is_empty()
    }
}

/// Brute-force outer resonance check over multi-indices on `E` of order
/// `2..=order_cap`. Resonances among eigenvalues inside `E` are not checked.
pub fn check_nonresonance(lambda: &[Complex64], e_indices: &[usize], order_cap: usize) -> NonresonanceReport {
    let mut report = NonresonanceReport::default();
    let dim = e_indices.len();
    if dim == 0 || order_cap < 2 {
        return report;
    }
    let scale = lambda.iter().map(|l| l.norm()).fold(1e-300, f64::max);
    let tol = 1e-10 * scale;
    let outer: Vec<usize> = (0..lambda.len()).filter(|i| !e_indices.contains(i)).collect();
    let exps = match ExponentMatrix::new(dim, 2, order_cap) {
        Ok(e) => e,
        Err(_) => return report,
    };
    for mcol in exps.columns() {
        let s: Complex64 = mcol.iter().zip(e_indices).map(|(p, &i)| lambda[i] * *p as f64).sum();
        for &k in &outer {
            if (s.re - lambda[k].re).abs() <= tol {
                report.real_part.push((mcol.to_vec(), k));
            }
            if (s - lambda[k]).norm() <= tol {
                report.complex.push((mcol.to_vec(), k));
            }
        }
    }
    report
}

/// Lifts a path of normal coordinates (`2m x T`) to the physical space,
/// `x = Re T W(z)`.
pub fn lift_and_sample(model: &OracleModel, system: &ModalSystem, z_path: &CMatrix) -> Result<DMatrix<f64>> {
    lift_impl(model, system, z_path, None)
}

/// As [`lift_and_sample`] plus the leading forced correction
/// `eps sum_k (w_k+ e^{i<k,Omega>t} + w_k- e^{-i<k,Omega>t})`.
pub fn lift_and_sample_forced(
    model: &OracleModel,
    system: &ModalSystem,
    z_path: &CMatrix,
    eps: f64,
    times: &[f64],
) -> Result<DMatrix<f64>> {
    check_dim(z_path.ncols(), times.len())?;
    lift_impl(model, system, z_path, Some((eps, times)))
}

fn lift_impl(model: &OracleModel, system: &ModalSystem, z_path: &CMatrix, forced: Option<(f64, &[f64])>) -> Result<DMatrix<f64>> {
    check_dim(model.reduced_dim(), z_path.nrows())?;
    check_dim(system.dim(), model.w.len())?;
    let n = system.dim();
    let mut out = DMatrix::zeros(n, z_path.ncols());
    for j in 0..z_path.ncols() {
        let z: Vec<Complex64> = z_path.column(j).iter().copied().collect();
        let mut q = CVector::from_fn(n, |r, _| model.w[r].eval(&z));
        if let Some((eps, times)) = forced {
            for h in &model.harmonics {
                let rate: f64 = h.k.iter().zip(&model.omega).map(|(k, w)| *k as f64 * w).sum();
                let e = Complex64::from_polar(1.0, rate * times[j]);
                q += (&h.w_plus * e + &h.w_minus * e.conj()) * c(eps, 0.0);
            }
        }
        for (r, v) in system.to_physical(&q).into_iter().enumerate() {
            out[(r, j)] = v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(re: f64, im: f64) -> [Complex64; 2] {
        [c(re, im), c(re, -im)]
    }

    #[test]
    fn linear_system_has_trivial_ssm() {
        let mut l = pair(-0.1, 1.0).to_vec();
        l.extend(pair(-1.0, 3.0));
        let sys = ModalSystem::modal(l).unwrap();
        let om = solve_autonomous_ssm(&sys, 1, 5, 1e-8).unwrap();
        for k in 2..=5 {
            assert_eq!(om.w_matrix(k).norm(), 0.0);
            assert_eq!(om.n_matrix(k).norm(), 0.0);
        }
    }

    #[test]
    fn normal_form_input_is_fixed_point() {
        let cc = c(-0.3, 0.8);
        let sys = ModalSystem::modal(pair(-0.05, 1.0).to_vec())
            .unwrap()
            .with_term(0, &[2, 1], cc)
            .unwrap();
        let om = solve_autonomous_ssm(&sys, 1, 5, 1e-8).unwrap();
        for k in 2..=5 {
            assert!(om.w_matrix(k).norm() < 1e-15);
        }
        let ex = ExponentMatrix::new(2, 3, 3).unwrap();
        assert_eq!(om.n_matrix(3)[(0, ex.index_of(&[2, 1]).unwrap())], cc);
        assert_eq!(om.n_matrix(3)[(1, ex.index_of(&[1, 2]).unwrap())], cc.conj());
        let p = om.to_polar().unwrap();
        assert_eq!(p.modes[0].alpha_coeffs[1], -0.3);
    }

    #[test]
    fn quadratic_feed_into_fast_mode() {
        let lam = c(-0.1, 1.0);
        let mu = -5.0;
        let cq = 0.7;
        let mut l = pair(lam.re, lam.im).to_vec();
        l.push(c(mu, 0.0));
        // real fast mode needs a term closed under conjugation
        let sys = ModalSystem::modal(l)
            .unwrap()
            .with_term(2, &[1, 1, 0], c(cq, 0.0))
            .unwrap();
        let om = solve_autonomous_ssm(&sys, 1, 3, 1e-8).unwrap();
        let ex = ExponentMatrix::new(2, 2, 2).unwrap();
        let w = om.w_matrix(2)[(2, ex.index_of(&[1, 1]).unwrap())];
        let expect = c(cq, 0.0) / (lam + lam.conj() - c(mu, 0.0));
        assert!((w - expect).norm() < 1e-15);

        // z1^2 on a complex fast pair
        let mut l = pair(lam.re, lam.im).to_vec();
        l.extend(pair(-3.0, 5.0));
        let sys = ModalSystem::modal(l).unwrap().with_term(2, &[2, 0, 0, 0], c(cq, 0.0)).unwrap();
        let om = solve_autonomous_ssm(&sys, 1, 3, 1e-8).unwrap();
        let w = om.w_matrix(2)[(2, ex.index_of(&[2, 0]).unwrap())];
        assert!((w - c(cq, 0.0) / (lam * 2.0 - c(-3.0, 5.0))).norm() < 1e-15);
        let res = invariance_residual(&om, &sys);
        assert!(res.iter().all(|r| *r < 1e-12), "{res:?}");
    }

    #[test]
    fn exact_outer_resonance_is_named() {
        let mut l = pair(-0.1, 1.0).to_vec();
        l.extend(pair(-0.2, 2.0));
        let sys = ModalSystem::modal(l).unwrap().with_term(2, &[2, 0, 0, 0], c(1.0, 0.0)).unwrap();
        match solve_autonomous_ssm(&sys, 1, 3, 1e-8) {
            Err(Error::Resonance { row, order, .. }) => {
                assert_eq!((row, order), (2, 2));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn random_systems_satisfy_invariance() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..4 {
            let mut l = pair(-0.1, 1.0).to_vec();
            l.extend(pair(-0.7, 2.7));
            l.push(c(-4.0, 0.0));
            let mut sys = ModalSystem::modal(l).unwrap();
            let ex = ExponentMatrix::new(5, 2, 3).unwrap();
            for _ in 0..8 {
                let col = rng.random_range(0..ex.len());
                let row = rng.random_range(0..5);
                let v = c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                let e = ex.column(col).to_vec();
                let self_conj = row == 4 && e[0] == e[1] && e[2] == e[3];
                sys = sys.with_term(row, &e, if self_conj { c(v.re, 0.0) } else { v }).unwrap();
            }
            let om = solve_autonomous_ssm(&sys, 1, 7, 1e-8).unwrap();
            let res = invariance_residual(&om, &sys);
            assert!(res.iter().all(|r| *r < 1e-10), "{res:?}");
            // mask discipline
            let ex2 = om.exponents();
            for r in 0..2 {
                for k in 0..ex2.len() {
                    let e = ex2.column(k);
                    let inmask = om.resonant.binary_search(&(r, k)).is_ok();
                    if inmask {
                        assert_eq!(om.w[r].coeff(e), Complex64::default());
                    } else {
                        assert_eq!(om.n[r].coeff(e), Complex64::default());
                    }
                }
            }
        }
    }

    #[test]
    fn physical_field_is_real_and_consistent() {
        let l = pair(-0.1, 2.0).to_vec();
        let t = CMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.5, 0.0), c(0.0, -0.5), c(0.0, 0.5)]);
        let sys = ModalSystem::new(l, t).unwrap().with_term(0, &[2, 1], c(-1.0, 0.3)).unwrap();
        let j = crate::synth::numeric_jacobian(&sys, &[0.0, 0.0]);
        let (vals, _) = crate::linalg::real_eigen(&j).unwrap();
        assert!(vals.iter().all(|v| (v.re + 0.1).abs() < 1e-6 && (v.im.abs() - 2.0).abs() < 1e-6));
        let mut dx = [0.0; 2];
        sys.eval(0.0, &[0.3, -0.2], &mut dx);
        let q = sys.to_modal(&[0.3, -0.2]);
        let f = sys.modal_rhs(q.as_slice());
        assert!((f[1] - f[0].conj()).norm() < 1e-14);
    }

    #[test]
    fn forcing_routes() {
        let lam = pair(-0.05, 1.0).to_vec();
        let sys = ModalSystem::modal(lam.clone()).unwrap();
        let om = solve_autonomous_ssm(&sys, 1, 3, 1e-8).unwrap();
        let g = CVector::from_vec(vec![c(0.01, 0.0), c(0.0, 0.0)]);
        let gm = CVector::from_vec(vec![c(0.0, 0.0), c(0.01, 0.0)]);
        let forcing = [ModalForcing {
            k: vec![1],
            g_plus: g.clone(),
            g_minus: gm.clone(),
        }];
        let off = solve_nonautonomous_leading(&om, &sys, &forcing, &[3.0], 1e-8).unwrap();
        let h = &off.harmonics[0];
        assert_eq!(h.n_plus.norm(), 0.0);
        assert!((h.w_plus[0] + g[0] / (lam[0] - c(0.0, 3.0))).norm() < 1e-15);
        let on = solve_nonautonomous_leading(&om, &sys, &forcing, &[1.0], 1e-8).unwrap();
        let h = &on.harmonics[0];
        assert_eq!(h.n_plus[0], g[0]);
        assert_eq!(h.n_minus[1], gm[1]);
        assert_eq!(h.w_plus[0], Complex64::default());
        let spec = on.forcing_spec(1.0);
        assert_eq!(spec.harmonics.len(), 1);
        assert!((spec.harmonics[0].f - 0.01).abs() < 1e-15);
        let zero = [ModalForcing {
            k: vec![1],
            g_plus: CVector::zeros(2),
            g_minus: CVector::zeros(2),
        }];
        let z = solve_nonautonomous_leading(&om, &sys, &zero, &[1.0], 1e-8).unwrap();
        assert_eq!(z.harmonics[0].w_plus.norm() + z.harmonics[0].n_plus.norm(), 0.0);
    }

    #[test]
    fn quotients() {
        let l = [c(-3.09, 1.0), c(-3.09, -1.0), c(-21.6, 5.0), c(-21.6, -5.0)];
        let q = spectral_quotients(&l, &[0, 1]).unwrap();
        assert_eq!(q.absolute, 6);
        assert_eq!(q.relative, 6);
        let l = [c(-1.0, 1.0), c(-1.0, -1.0), c(-5.0, 0.0)];
        let q = spectral_quotients(&l, &[0, 1]).unwrap();
        assert_eq!((q.absolute, q.relative), (5, 5));
        let q = spectral_quotients(&l, &[0, 1, 2]).unwrap();
        assert!(q.outer_empty && q.relative == 0);
        let l = [c(0.0, 1.0), c(0.0, -1.0)];
        assert!(matches!(spectral_quotients(&l, &[0, 1]), Err(Error::UndefinedQuotient(_))));
    }

    #[test]
    fn nonresonance_enumeration() {
        let l = [c(-1.0, 1.0), c(-1.0, -1.0), c(-7.0, 0.0)];
        assert!(check_nonresonance(&l, &[0, 1], 6).is_clean());
        let l = [c(-1.0, 1.0), c(-1.0, -1.0), c(-3.0, 0.0)];
        let r = check_nonresonance(&l, &[0, 1], 6);
        assert!(r.real_part.contains(&(vec![3, 0], 2)));
        assert!(r.complex.is_empty());
        let l = [c(-1.0, 1.0), c(-1.0, 1.0 + 1e-13), c(-3.0, 0.0)];
        let r = check_nonresonance(&l, &[0, 1], 2);
        assert!(r.real_part.is_empty() && r.complex.is_empty());
    }

    #[test]
    fn lifting() {
        let mut l = pair(-0.1, 1.0).to_vec();
        l.extend(pair(-1.0, 3.0));
        let sys = ModalSystem::modal(l).unwrap();
        let om = solve_autonomous_ssm(&sys, 1, 3, 1e-8).unwrap();
        let z = CMatrix::zeros(2, 4);
        assert_eq!(lift_and_sample(&om, &sys, &z).unwrap().norm(), 0.0);
        let z = CMatrix::from_row_slice(2, 1, &[c(0.3, 0.1), c(0.3, -0.1)]);
        let x = lift_and_sample(&om, &sys, &z).unwrap();
        assert_eq!(x[(0, 0)], 0.3);
        assert_eq!(x[(2, 0)], 0.0);
    }

    #[test]
    fn json_round_trip() {
        let mut l = pair(-0.1, 1.0).to_vec();
        l.extend(pair(-1.0, 3.0));
        let sys = ModalSystem::modal(l)
            .unwrap()
            .with_term(2, &[2, 0, 0, 0], c(0.4, 0.1))
            .unwrap()
            .with_term(0, &[2, 1, 0, 0], c(-0.2, 0.1))
            .unwrap();
        let om = solve_autonomous_ssm(&sys, 1, 5, 1e-8).unwrap();
        let back = OracleModel::from_json(&om.to_json()).unwrap();
        assert_eq!(back.w, om.w);
        assert_eq!(back.n, om.n);
        assert_eq!(back.resonant, om.resonant);
    }
}
