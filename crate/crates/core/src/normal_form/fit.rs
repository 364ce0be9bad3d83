use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{LinearPart, ReducedModel, ResonanceStructure};
use crate::error::{Error, Result};
use crate::linalg::{lstsq, to_complex, CMatrix, CVector};
use crate::lm::{minimize, numeric_jacobian, LeastSquaresProblem, LmOptions};
use crate::poly::ExponentMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FitMode {
    /// Conjugacy error on finite-difference derivatives.
    #[default]
    Derivative,
    /// One-step prediction error of the normal-form flow map, for coarsely
    /// sampled data. Consecutive columns must be one timestep apart.
    Map,
}

#[derive(Clone, Debug)]
pub struct NormalFormOptions<'a> {
    pub mode: FitMode,
    pub max_iterations: usize,
    pub rel_tol: f64,
    /// Sampling interval, required in map mode.
    pub dt: f64,
    /// Column indices where a new trajectory starts (map mode skips the pair
    /// straddling each break).
    pub breaks: Vec<usize>,
    /// Start from the coefficients of a previous (typically lower-order) fit
    /// instead of zero.
    pub warm_start: Option<&'a ReducedModel>,
}

impl Default for NormalFormOptions<'_> {
    fn default() -> Self {
        NormalFormOptions {
            mode: FitMode::Derivative,
            max_iterations: 500,
            rel_tol: 1e-9,
            dt: 0.0,
            breaks: Vec::new(),
            warm_start: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Kind {
    HStar,
    Normal,
}

#[derive(Clone, Debug)]
struct Param {
    kind: Kind,
    r: usize,
    k: usize,
    pr: usize,
    pk: usize,
    real: bool,
    offset: usize,
}

/// Free coefficients modulo conjugate symmetry `C[pi r, pi k] = conj C[r, k]`.
#[derive(Clone, Debug)]
struct Layout {
    d: usize,
    k: usize,
    params: Vec<Param>,
    nx: usize,
}

impl Layout {
    fn new(linear: &LinearPart, s: &ResonanceStructure) -> Self {
        let d = linear.dim();
        let rows = linear.conjugation();
        let cols = s.exps.permuted_columns(&rows);
        let k = s.exps.len();
        let mut params = Vec::new();
        let mut nx = 0;
        for r in 0..d {
            for c in 0..k {
                let (pr, pk) = (rows[r], cols[c]);
                if (pr, pk) < (r, c) {
                    continue;
                }
                let real = (pr, pk) == (r, c);
                let kind = if s.is_resonant(r, c) { Kind::Normal } else { Kind::HStar };
                params.push(Param {
                    kind,
                    r,
                    k: c,
                    pr,
                    pk,
                    real,
                    offset: nx,
                });
                nx += if real { 1 } else { 2 };
            }
        }
        Layout { d, k, params, nx }
    }

    fn unpack(&self, x: &DVector<f64>) -> (CMatrix, CMatrix) {
        let mut h = CMatrix::zeros(self.d, self.k);
        let mut n = CMatrix::zeros(self.d, self.k);
        for p in &self.params {
            let v = if p.real {
                Complex64::new(x[p.offset], 0.0)
            } else {
                Complex64::new(x[p.offset], x[p.offset + 1])
            };
            let m = match p.kind {
                Kind::HStar => &mut h,
                Kind::Normal => &mut n,
            };
            m[(p.r, p.k)] = v;
            m[(p.pr, p.pk)] = v.conj();
        }
        (h, n)
    }

    fn pack(&self, h: &CMatrix, n: &CMatrix) -> DVector<f64> {
        let mut x = DVector::zeros(self.nx);
        for p in &self.params {
            let v = match p.kind {
                Kind::HStar => h[(p.r, p.k)],
                Kind::Normal => n[(p.r, p.k)],
            };
            x[p.offset] = v.re;
            if !p.real {
                x[p.offset + 1] = v.im;
            }
        }
        x
    }
}

/// Conjugacy residual `R = (I + H* Dm(q)) q' - Lambda zeta - N m(zeta)` with
/// `q = B^{-1} eta` and `zeta = q + H* m(q)`.
struct ConjugacyProblem<'a> {
    layout: Layout,
    exps: &'a ExponentMatrix,
    lambda: Vec<Complex64>,
    q: CMatrix,
    mq: CMatrix,
    mdot: CMatrix,
    qdot: CMatrix,
}

const CHUNK: usize = 256;

impl<'a> ConjugacyProblem<'a> {
    fn new(linear: &LinearPart, s: &'a ResonanceStructure, states: &DMatrix<f64>, derivs: &DMatrix<f64>) -> Result<Self> {
        let q = &linear.b_inv * to_complex(states);
        let qdot = &linear.b_inv * to_complex(derivs);
        let exps = &s.exps;
        let npts = q.ncols();
        let mut mq = CMatrix::zeros(exps.len(), npts);
        let mut mdot = CMatrix::zeros(exps.len(), npts);
        let mut buf = vec![Complex64::default(); exps.len()];
        for j in 0..npts {
            let qj: Vec<Complex64> = q.column(j).iter().copied().collect();
            exps.eval_into(&qj, &mut buf);
            mq.column_mut(j).copy_from_slice(&buf);
            let mut col = vec![Complex64::default(); exps.len()];
            exps.jacobian_into(&qj, |k, i, v| col[k] += v * qdot[(i, j)]);
            mdot.column_mut(j).copy_from_slice(&col);
        }
        Ok(ConjugacyProblem {
            layout: Layout::new(linear, s),
            exps,
            lambda: linear.lambda.clone(),
            q,
            mq,
            mdot,
            qdot,
        })
    }

    fn zeta(&self, h: &CMatrix) -> CMatrix {
        &self.q + h * &self.mq
    }

    fn residual_matrix(&self, h: &CMatrix, n: &CMatrix) -> CMatrix {
        let zeta = self.zeta(h);
        let mz = crate::poly::eval_columns(self.exps, &zeta).expect("dimensions agree");
        let mut r = &self.qdot + h * &self.mdot - n * mz;
        for (i, l) in self.lambda.iter().enumerate() {
            let row = zeta.row(i) * *l;
            let mut ri = r.row_mut(i);
            ri -= row;
        }
        r
    }

    fn total_cost(&self, h: &CMatrix, n: &CMatrix) -> f64 {
        self.residual_matrix(h, n).norm_squared()
    }
}

impl LeastSquaresProblem for ConjugacyProblem<'_> {
    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        let (h, n) = self.layout.unpack(x);
        let r = self.residual_matrix(&h, &n);
        DVector::from_iterator(2 * r.len(), r.iter().flat_map(|z| [z.re, z.im]))
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let npts = self.q.ncols();
        let d = self.layout.d;
        let mut j = DMatrix::zeros(2 * d * npts, self.layout.nx);
        let (h, n) = self.layout.unpack(x);
        for p in 0..npts {
            let block = self.point_jacobian(&h, &n, p);
            for row in 0..d {
                for c in 0..self.layout.nx {
                    let g = block[(row, c)];
                    j[(2 * (p * d + row), c)] = g.re;
                    j[(2 * (p * d + row) + 1, c)] = g.im;
                }
            }
        }
        j
    }

    fn normal_equations(&self, x: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>, f64) {
        let (h, n) = self.layout.unpack(x);
        let r = self.residual_matrix(&h, &n);
        let d = self.layout.d;
        let nx = self.layout.nx;
        let npts = self.q.ncols();
        let mut jtj = DMatrix::zeros(nx, nx);
        let mut jtr = DVector::zeros(nx);
        let mut start = 0;
        while start < npts {
            let len = CHUNK.min(npts - start);
            let mut jr = DMatrix::zeros(2 * d * len, nx);
            let mut rr = DVector::zeros(2 * d * len);
            for p in 0..len {
                let block = self.point_jacobian(&h, &n, start + p);
                for row in 0..d {
                    let base = 2 * (p * d + row);
                    let res = r[(row, start + p)];
                    rr[base] = res.re;
                    rr[base + 1] = res.im;
                    for c in 0..nx {
                        jr[(base, c)] = block[(row, c)].re;
                        jr[(base + 1, c)] = block[(row, c)].im;
                    }
                }
            }
            jtj.gemm_tr(1.0, &jr, &jr, 1.0);
            jtr.gemv_tr(1.0, &jr, &rr, 1.0);
            start += len;
        }
        (jtj, jtr, r.norm_squared())
    }

    fn cost(&self, x: &DVector<f64>) -> f64 {
        let (h, n) = self.layout.unpack(x);
        self.total_cost(&h, &n)
    }
}

impl ConjugacyProblem<'_> {
    /// `dR/dx` at one point, one column per real parameter.
    fn point_jacobian(&self, h: &CMatrix, n: &CMatrix, p: usize) -> CMatrix {
        let d = self.layout.d;
        let k = self.layout.k;
        let mq = self.mq.column(p);
        let zeta: Vec<Complex64> = (&self.q.column(p) + h * mq).iter().copied().collect();
        let mut mz = vec![Complex64::default(); k];
        self.exps.eval_into(&zeta, &mut mz);
        // N Dm(zeta), d x d
        let mut nj = CMatrix::zeros(d, d);
        self.exps.jacobian_into(&zeta, |kk, i, v| {
            for r in 0..d {
                nj[(r, i)] += n[(r, kk)] * v;
            }
        });
        let g1 = |kind: Kind, a: usize, b: usize| -> CVector {
            match kind {
                Kind::HStar => {
                    let mut v = nj.column(a) * (-mq[b]);
                    v[a] += self.mdot[(b, p)] - self.lambda[a] * mq[b];
                    v
                }
                Kind::Normal => {
                    let mut v = CVector::zeros(d);
                    v[a] = -mz[b];
                    v
                }
            }
        };
        let mut out = CMatrix::zeros(d, self.layout.nx);
        let i = Complex64::new(0.0, 1.0);
        for prm in &self.layout.params {
            let a = g1(prm.kind, prm.r, prm.k);
            if prm.real {
                out.set_column(prm.offset, &a);
            } else {
                let b = g1(prm.kind, prm.pr, prm.pk);
                out.set_column(prm.offset, &(&a + &b));
                out.set_column(prm.offset + 1, &((&a - &b) * i));
            }
        }
        out
    }
}

/// One-step prediction residual `zeta_{j+1} - Phi_dt(zeta_j)`.
struct MapProblem<'a> {
    layout: Layout,
    exps: &'a ExponentMatrix,
    lambda: Vec<Complex64>,
    q: CMatrix,
    pairs: Vec<usize>,
    dt: f64,
    substeps: usize,
}

impl MapProblem<'_> {
    fn predict(&self, n: &CMatrix, z: &CVector) -> CVector {
        let h = self.dt / self.substeps as f64;
        let mut z = z.clone();
        for _ in 0..self.substeps {
            z = super::transform::rk4_complex(&self.lambda, self.exps, n, &z, h);
        }
        z
    }
}

impl LeastSquaresProblem for MapProblem<'_> {
    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        let (h, n) = self.layout.unpack(x);
        let mut zeta = self.q.clone();
        let mq = crate::poly::eval_columns(self.exps, &self.q).expect("dims");
        zeta += &h * mq;
        let d = self.layout.d;
        let mut out = DVector::zeros(2 * d * self.pairs.len());
        for (i, &j) in self.pairs.iter().enumerate() {
            let pred = self.predict(&n, &zeta.column(j).into_owned());
            for r in 0..d {
                let e = zeta[(r, j + 1)] - pred[r];
                out[2 * (i * d + r)] = e.re;
                out[2 * (i * d + r) + 1] = e.im;
            }
        }
        out
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        numeric_jacobian(|y| self.residuals(y), x)
    }
}

fn warm_vector(layout: &Layout, s: &ResonanceStructure, prev: &ReducedModel) -> DVector<f64> {
    let mut h = CMatrix::zeros(layout.d, layout.k);
    let mut n = CMatrix::zeros(layout.d, layout.k);
    for p in &layout.params {
        let e = s.exps.column(p.k);
        let Some(old) = prev.structure.exps.index_of(e) else {
            continue;
        };
        match p.kind {
            Kind::HStar => h[(p.r, p.k)] = prev.hstar[(p.r, old)],
            Kind::Normal => n[(p.r, p.k)] = prev.ncoef[(p.r, old)],
        }
    }
    layout.pack(&h, &n)
}

/// Regresses `q - zeta = H m(zeta)` row by row, keeping `H` zero on the
/// resonant entries.
fn fit_h(q: &CMatrix, zeta: &CMatrix, linear: &LinearPart, s: &ResonanceStructure) -> Result<CMatrix> {
    let d = linear.dim();
    let k = s.exps.len();
    let rows = linear.conjugation();
    let cols = s.exps.permuted_columns(&rows);
    let mz = crate::poly::eval_columns(&s.exps, zeta)?.transpose();
    let mut h = CMatrix::zeros(d, k);
    for r in 0..d {
        if rows[r] < r {
            continue;
        }
        let free: Vec<usize> = (0..k).filter(|&c| !s.is_resonant(r, c)).collect();
        if free.is_empty() {
            continue;
        }
        let a = mz.select_columns(&free);
        let b = CMatrix::from_iterator(q.ncols(), 1, (q.row(r) - zeta.row(r)).iter().copied());
        let (sol, rank) = lstsq(&a, &b, 1e-13);
        if rank < free.len() {
            return Err(Error::SingularFit {
                order: s.order,
                detail: format!("transform regression for row {r} has rank {rank} < {}", free.len()),
            });
        }
        for (i, &c) in free.iter().enumerate() {
            h[(r, c)] = sol[(i, 0)];
        }
        if rows[r] != r {
            for c in 0..k {
                h[(rows[r], cols[c])] = h[(r, c)].conj();
            }
        } else {
            let row: Vec<Complex64> = (0..k).map(|c| 0.5 * (h[(r, c)] + h[(r, cols[c])].conj())).collect();
            for c in 0..k {
                h[(r, c)] = row[c];
            }
        }
    }
    Ok(h)
}

pub fn fit_normal_form(
    states: &DMatrix<f64>,
    derivatives: &DMatrix<f64>,
    linear: &LinearPart,
    structure: &ResonanceStructure,
    opts: &NormalFormOptions,
) -> Result<ReducedModel> {
    let d = linear.dim();
    if structure.exps.dims() != d || structure.delta_matrix.nrows() != d {
        return Err(Error::arg(format!(
            "resonance structure built for dimension {}, linear part has {d}",
            structure.exps.dims()
        )));
    }
    if states.nrows() != d {
        return Err(Error::Dimension {
            expected: d,
            got: states.nrows(),
        });
    }
    if opts.mode == FitMode::Derivative && derivatives.shape() != states.shape() {
        return Err(Error::arg("states and derivatives must have the same shape"));
    }
    let lm_opts = LmOptions {
        max_iterations: opts.max_iterations,
        rel_tol: opts.rel_tol,
        ..Default::default()
    };
    let layout = Layout::new(linear, structure);
    let x0 = match opts.warm_start {
        Some(prev) => warm_vector(&layout, structure, prev),
        None => DVector::zeros(layout.nx),
    };
    let (x, iterations, q, residual) = match opts.mode {
        FitMode::Derivative => {
            let prob = ConjugacyProblem::new(linear, structure, states, derivatives)?;
            let rep = minimize(&prob, x0, &lm_opts)?;
            let (hs, nc) = layout.unpack(&rep.x);
            let residual = prob.total_cost(&hs, &nc);
            (rep.x, rep.iterations, prob.q, residual)
        }
        FitMode::Map => {
            if !(opts.dt > 0.0) {
                return Err(Error::arg("map mode needs a positive sampling interval"));
            }
            let q = &linear.b_inv * to_complex(states);
            let pairs: Vec<usize> = (0..states.ncols().saturating_sub(1))
                .filter(|j| !opts.breaks.contains(&(j + 1)))
                .collect();
            let speed = linear.lambda.iter().map(|l| l.norm()).fold(0.0, f64::max);
            let substeps = ((speed * opts.dt) / 0.1).ceil().max(1.0) as usize;
            let prob = MapProblem {
                layout: layout.clone(),
                exps: &structure.exps,
                lambda: linear.lambda.clone(),
                q: q.clone(),
                pairs,
                dt: opts.dt,
                substeps,
            };
            let rep = minimize(&prob, x0, &lm_opts)?;
            let residual = rep.cost;
            (rep.x, rep.iterations, q, residual)
        }
    };
    let (hstar, ncoef) = layout.unpack(&x);
    let zeta = &q + &hstar * crate::poly::eval_columns(&structure.exps, &q)?;
    let h = fit_h(&q, &zeta, linear, structure)?;
    let npts = states.ncols().max(1);
    let nonhyperbolic = linear.lambda.iter().any(|l| l.re.abs() <= 1e-6 * l.norm().max(1e-300));
    if nonhyperbolic {
        log::warn!("linear part has a (near-)zero real part; model is flagged nonhyperbolic");
    }
    Ok(ReducedModel {
        linear: linear.clone(),
        structure: structure.clone(),
        ncoef,
        hstar,
        h,
        conjugacy_residual: residual,
        mean_residual: residual / npts as f64,
        iterations,
        mode: opts.mode,
        nonhyperbolic,
    })
}

/// Sum of squared conjugacy residuals of `model` on the given data.
pub fn conjugacy_error(model: &ReducedModel, states: &DMatrix<f64>, derivatives: &DMatrix<f64>) -> Result<f64> {
    if states.shape() != derivatives.shape() || states.nrows() != model.dim() {
        return Err(Error::arg("data shape does not match the model"));
    }
    let prob = ConjugacyProblem::new(&model.linear, &model.structure, states, derivatives)?;
    Ok(prob.total_cost(&model.hstar, &model.ncoef))
}
