//! Graph-style manifold charts over reduced coordinates `eta = U1^T y`,
//! with parametrization `y = V1 eta + V eta^{2:M}`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::lstsq;
use crate::poly::{eval_columns, ExponentMatrix};
use crate::trajectory::EmbeddedTrajectory;

#[derive(Clone, Debug)]
pub enum ChartMode {
    /// `U1 = V1` from the leading principal directions.
    Default,
    /// `U1 = V1` supplied by the caller, e.g. POD modes of a steady state.
    FixedProjection(DMatrix<f64>),
}

#[derive(Clone, Debug, Default)]
pub struct ChartOptions {
    /// Tikhonov weight on `V`; zero reproduces the plain least-squares fit.
    pub ridge: f64,
    /// Gradient steps refining `U1` on the Stiefel manifold after the PCA
    /// initialization. Zero keeps the PCA projection.
    pub refine_iterations: usize,
}

#[derive(Clone, Debug)]
pub struct SsmChart {
    pub p: usize,
    pub d: usize,
    pub order: usize,
    pub u1: DMatrix<f64>,
    pub v1: DMatrix<f64>,
    pub v: DMatrix<f64>,
    /// Mean squared reconstruction error on the fitting data.
    pub residual: f64,
    exps: Option<ExponentMatrix>,
}

fn stack(data: &[EmbeddedTrajectory]) -> Result<DMatrix<f64>> {
    let p = data
        .first()
        .ok_or_else(|| Error::arg("no trajectories supplied"))?
        .dim();
    for t in data {
        check_dim(p, t.dim())?;
    }
    let total: usize = data.iter().map(|t| t.len()).sum();
    let mut y = DMatrix::zeros(p, total);
    let mut off = 0;
    for t in data {
        y.columns_mut(off, t.len()).copy_from(&t.points);
        off += t.len();
    }
    Ok(y)
}

/// Top-`d` eigenvectors of `Y Y^T`, signs fixed so the largest entry of each
/// column is positive.
fn principal_directions(y: &DMatrix<f64>, d: usize) -> DMatrix<f64> {
    let eig = (y * y.transpose()).symmetric_eigen();
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|a, b| eig.eigenvalues[*b].total_cmp(&eig.eigenvalues[*a]));
    let mut u = DMatrix::zeros(y.nrows(), d);
    for (j, &k) in idx.iter().take(d).enumerate() {
        let mut col = eig.eigenvectors.column(k).into_owned();
        let imax = col.iamax();
        if col[imax] < 0.0 {
            col = -col;
        }
        u.set_column(j, &col);
    }
    u
}

fn orthonormalize(u: &DMatrix<f64>) -> DMatrix<f64> {
    let qr = u.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..q.ncols() {
        if r[(j, j)] < 0.0 {
            let col = -q.column(j);
            q.set_column(j, &col);
        }
    }
    q
}

struct Solved {
    v: DMatrix<f64>,
    residual: f64,
}

fn solve_nonlinear(
    y: &DMatrix<f64>,
    u1: &DMatrix<f64>,
    exps: Option<&ExponentMatrix>,
    ridge: f64,
) -> Result<Solved> {
    let eta = u1.transpose() * y;
    let r = y - u1 * &eta;
    let Some(exps) = exps else {
        let residual = r.norm_squared() / y.ncols() as f64;
        return Ok(Solved {
            v: DMatrix::zeros(y.nrows(), 0),
            residual,
        });
    };
    let m = eval_columns(exps, &eta)?;
    let k = exps.len();
    let mut a = m.transpose();
    let mut b = r.transpose();
    if ridge > 0.0 {
        let s = ridge.sqrt();
        let p = y.nrows();
        let rows = a.nrows();
        a = a.resize_vertically(rows + k, 0.0);
        b = b.resize_vertically(rows + k, 0.0);
        for i in 0..k {
            a[(y.ncols() + i, i)] = s;
        }
        debug_assert_eq!(b.ncols(), p);
    }
    let (vt, rank) = lstsq(&a, &b, 1e-12);
    if rank < k {
        // name the lowest order whose monomials are already dependent
        for order in exps.min_order()..=exps.max_order() {
            let cols = exps.order_range(order).end;
            let sub = a.columns(0, cols).into_owned();
            let (_, r) = lstsq(&sub, &DMatrix::zeros(sub.nrows(), 1), 1e-12);
            if r < cols {
                return Err(Error::SingularFit {
                    order,
                    detail: format!("monomial regression matrix has rank {r} < {cols}"),
                });
            }
        }
        return Err(Error::SingularFit {
            order: exps.max_order(),
            detail: format!("rank {rank} < {k}"),
        });
    }
    let v = vt.transpose();
    let resid = r - &v * m;
    Ok(Solved {
        v,
        residual: resid.norm_squared() / y.ncols() as f64,
    })
}

const REFINE_POINTS: usize = 3000;

pub fn fit_ssm(
    data: &[EmbeddedTrajectory],
    d: usize,
    order: usize,
    mode: &ChartMode,
    opts: &ChartOptions,
) -> Result<SsmChart> {
    if d == 0 || order == 0 {
        return Err(Error::arg("manifold dimension and order must be positive"));
    }
    let y = stack(data)?;
    let (p, total) = y.shape();
    if d > p {
        return Err(Error::arg(format!("manifold dimension {d} exceeds ambient dimension {p}")));
    }
    if p <= 2 * d {
        log::warn!("ambient dimension {p} does not exceed 2d = {}; embedding may fail", 2 * d);
    }
    let exps = if order >= 2 {
        Some(ExponentMatrix::new(d, 2, order)?)
    } else {
        None
    };
    let free = p * (d + exps.as_ref().map_or(0, |e| e.len()));
    if total < 10 * free {
        return Err(Error::arg(format!(
            "{total} points are fewer than 10x the {free} free chart coefficients"
        )));
    }
    if y.amax() == 0.0 {
        return Err(Error::SingularFit {
            order: 1,
            detail: "all data points sit at the origin".into(),
        });
    }
    let mut u1 = match mode {
        ChartMode::Default => principal_directions(&y, d),
        ChartMode::FixedProjection(u) => {
            if u.shape() != (p, d) {
                return Err(Error::arg(format!(
                    "fixed projection must be {p}x{d}, got {:?}",
                    u.shape()
                )));
            }
            orthonormalize(u)
        }
    };
    let mut sol = solve_nonlinear(&y, &u1, exps.as_ref(), opts.ridge)?;
    if matches!(mode, ChartMode::Default) && opts.refine_iterations > 0 {
        // the search runs on an evenly strided subsample; trajectories are smooth
        let stride = total.div_ceil(REFINE_POINTS).max(1);
        let ys = DMatrix::from_fn(p, total.div_ceil(stride), |i, k| y[(i, k * stride)]);
        let y = &ys;
        let mut sol = solve_nonlinear(y, &u1, exps.as_ref(), opts.ridge)?;
        let mut step = 1e-2;
        for _ in 0..opts.refine_iterations {
            let mut grad = DMatrix::zeros(p, d);
            let h = 1e-6;
            for i in 0..p {
                for j in 0..d {
                    let mut up = u1.clone();
                    up[(i, j)] += h;
                    let mut um = u1.clone();
                    um[(i, j)] -= h;
                    let fp = solve_nonlinear(&y, &orthonormalize(&up), exps.as_ref(), opts.ridge)?;
                    let fm = solve_nonlinear(&y, &orthonormalize(&um), exps.as_ref(), opts.ridge)?;
                    grad[(i, j)] = (fp.residual - fm.residual) / (2.0 * h);
                }
            }
            // project onto the tangent space of the Stiefel manifold
            let sym = u1.transpose() * &grad;
            let sym = (&sym + sym.transpose()) * 0.5;
            let g = &grad - &u1 * sym;
            if g.norm() < 1e-14 {
                break;
            }
            let mut improved = false;
            while step > 1e-12 {
                let cand = orthonormalize(&(&u1 - &g * (step / g.norm())));
                let s = solve_nonlinear(&y, &cand, exps.as_ref(), opts.ridge)?;
                if s.residual < sol.residual {
                    u1 = cand;
                    sol = s;
                    step *= 2.0;
                    improved = true;
                    break;
                }
                step *= 0.5;
            }
            if !improved {
                break;
            }
        }
    }
    if opts.refine_iterations > 0 {
        sol = solve_nonlinear(&y, &u1, exps.as_ref(), opts.ridge)?;
    }
    Ok(SsmChart {
        p,
        d,
        order,
        v1: u1.clone(),
        u1,
        v: sol.v,
        residual: sol.residual,
        exps,
    })
}

impl SsmChart {
    pub fn exponents(&self) -> Option<&ExponentMatrix> {
        self.exps.as_ref()
    }

    pub fn project(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.p, y.len())?;
        Ok(self.u1.tr_mul(y))
    }

    pub fn lift(&self, eta: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.d, eta.len())?;
        let mut y = &self.v1 * eta;
        if let Some(e) = &self.exps {
            let m = DVector::from_vec(e.eval(eta.as_slice())?);
            y += &self.v * m;
        }
        Ok(y)
    }

    pub fn project_all(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim(self.p, y.nrows())?;
        Ok(self.u1.tr_mul(y))
    }

    pub fn lift_all(&self, eta: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim(self.d, eta.nrows())?;
        let mut y = &self.v1 * eta;
        if let Some(e) = &self.exps {
            y += &self.v * eval_columns(e, eta)?;
        }
        Ok(y)
    }

    pub fn to_json(&self) -> String {
        let file = ChartFile {
            p: self.p,
            d: self.d,
            m: self.order,
            u1: rows(&self.u1),
            v1: rows(&self.v1),
            v: rows(&self.v),
            ordering: "graded-lex".into(),
            residual: self.residual,
        };
        serde_json::to_string_pretty(&file).expect("chart serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: ChartFile = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        if f.ordering != "graded-lex" {
            return Err(Error::Parse(format!("unknown monomial ordering {}", f.ordering)));
        }
        let exps = if f.m >= 2 {
            Some(ExponentMatrix::new(f.d, 2, f.m)?)
        } else {
            None
        };
        let k = exps.as_ref().map_or(0, |e| e.len());
        Ok(SsmChart {
            p: f.p,
            d: f.d,
            order: f.m,
            u1: from_rows(&f.u1, f.p, f.d)?,
            v1: from_rows(&f.v1, f.p, f.d)?,
            v: from_rows(&f.v, f.p, k)?,
            residual: f.residual,
            exps,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ChartFile {
    p: usize,
    d: usize,
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "U1")]
    u1: Vec<Vec<f64>>,
    #[serde(rename = "V1")]
    v1: Vec<Vec<f64>>,
    #[serde(rename = "V")]
    v: Vec<Vec<f64>>,
    ordering: String,
    residual: f64,
}

pub(crate) fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub(crate) fn from_rows(r: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<DMatrix<f64>> {
    if r.len() != nrows || r.iter().any(|row| row.len() != ncols) {
        return Err(Error::Parse(format!("expected a {nrows}x{ncols} matrix")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| r[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{delay_embed, nmte, max_norm_column, TimeSeries};

    fn parabola() -> EmbeddedTrajectory {
        let pts = DMatrix::from_fn(3, 200, |i, j| {
            let eta = -1.0 + 2.0 * j as f64 / 199.0;
            match i {
                0 => eta,
                1 => eta * eta,
                _ => 0.0,
            }
        });
        EmbeddedTrajectory::from_states(0.0, 1.0, pts)
    }

    #[test]
    fn recovers_parabola() {
        let chart = fit_ssm(&[parabola()], 1, 2, &ChartMode::FixedProjection(DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0])), &ChartOptions::default()).unwrap();
        assert!((chart.v[(1, 0)] - 1.0).abs() < 1e-8);
        assert!(chart.residual < 1e-12);
        let y = chart.lift(&DVector::from_vec(vec![0.5])).unwrap();
        assert!((y - DVector::from_vec(vec![0.5, 0.25, 0.0])).norm() < 1e-8);
    }

    #[test]
    fn flat_plane_has_no_curvature() {
        let a = DVector::from_vec(vec![1.0, 1.0, 0.0, 0.0]) / 2f64.sqrt();
        let b = DVector::from_vec(vec![0.0, 0.0, 0.6, 0.8]);
        let pts = DMatrix::from_fn(4, 500, |i, j| {
            let s = (j as f64 * 0.37).sin();
            let t = (j as f64 * 0.11).cos() * 0.5;
            s * a[i] + t * b[i]
        });
        let chart = fit_ssm(&[EmbeddedTrajectory::from_states(0.0, 1.0, pts)], 2, 3, &ChartMode::Default, &ChartOptions::default()).unwrap();
        assert!(chart.v.norm() < 1e-8);
        let utu = chart.u1.transpose() * &chart.u1;
        assert!((utu - DMatrix::identity(2, 2)).amax() < 1e-10);
    }

    #[test]
    fn reconstructs_decaying_oscillator() {
        let dt = 0.05;
        let s: Vec<f64> = (0..800)
            .map(|i| {
                let t = i as f64 * dt;
                (-0.05 * t).exp() * (t.cos() + 0.1 * (2.0 * t).cos() * (-0.05 * t).exp())
            })
            .collect();
        let e = delay_embed(&TimeSeries::scalar(0.0, dt, &s).unwrap(), 5, 1).unwrap();
        let chart = fit_ssm(&[e.clone()], 2, 3, &ChartMode::Default, &ChartOptions::default()).unwrap();
        let rec = chart.lift_all(&chart.project_all(&e.points).unwrap()).unwrap();
        let err = nmte(&e.points, &rec, &max_norm_column(&e.points)).unwrap();
        assert!(err < 1e-3, "{err}");
        assert!((chart.v1.transpose() * &chart.v).amax() < 1e-8);
    }

    #[test]
    fn degenerate_data_is_rejected() {
        let z = EmbeddedTrajectory::from_states(0.0, 1.0, DMatrix::zeros(3, 500));
        assert!(matches!(
            fit_ssm(&[z], 1, 2, &ChartMode::Default, &ChartOptions::default()),
            Err(Error::SingularFit { .. })
        ));
    }

    #[test]
    fn json_round_trip() {
        let chart = fit_ssm(&[parabola()], 1, 3, &ChartMode::Default, &ChartOptions::default()).unwrap();
        let back = SsmChart::from_json(&chart.to_json()).unwrap();
        assert_eq!(back.u1, chart.u1);
        assert_eq!(back.v, chart.v);
        assert_eq!(back.order, 3);
    }
}
