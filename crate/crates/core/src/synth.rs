//! Fixed-step integration and benchmark systems with known ground truth.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::poly::ExponentMatrix;
use crate::trajectory::TimeSeries;

/// Reference values a system advertises for tests.
#[derive(Clone, Debug, Default)]
pub struct GroundTruth {
    pub eigenvalues: Vec<Complex64>,
    /// `(alpha0, beta, omega0, gamma)` of a single-oscillator normal form
    /// `rho' = alpha0 rho + beta rho^3`, `theta' = omega0 + gamma rho^2`.
    pub polar: Option<(f64, f64, f64, f64)>,
    pub limit_cycle_radius: Option<f64>,
}

pub trait VectorField {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, x: &[f64], dx: &mut [f64]);
    fn truth(&self) -> GroundTruth {
        GroundTruth::default()
    }
}

impl<F: VectorField + ?Sized> VectorField for Box<F> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, t: f64, x: &[f64], dx: &mut [f64]) {
        (**self).eval(t, x, dx)
    }
    fn truth(&self) -> GroundTruth {
        (**self).truth()
    }
}

/// One classical RK4 step in place.
pub fn rk4_step<F: VectorField + ?Sized>(field: &F, t: f64, x: &mut [f64], dt: f64, work: &mut [Vec<f64>; 5]) {
    let n = x.len();
    let [k1, k2, k3, k4, tmp] = work;
    field.eval(t, x, k1);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k1[i];
    }
    field.eval(t + 0.5 * dt, tmp, k2);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k2[i];
    }
    field.eval(t + 0.5 * dt, tmp, k3);
    for i in 0..n {
        tmp[i] = x[i] + dt * k3[i];
    }
    field.eval(t + dt, tmp, k4);
    for i in 0..n {
        x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Integrates from `t_span.0` to `t_span.1` with a fixed step, recording the
/// state after every step (including the initial state).
pub fn integrate_rk4<F: VectorField + ?Sized>(field: &F, x0: &[f64], t_span: (f64, f64), dt: f64) -> Result<TimeSeries> {
    if !(dt > 0.0) {
        return Err(Error::arg("timestep must be positive"));
    }
    if x0.len() != field.dim() {
        return Err(Error::Dimension {
            expected: field.dim(),
            got: x0.len(),
        });
    }
    let steps = ((t_span.1 - t_span.0) / dt).round();
    if !(steps >= 1.0) {
        return Err(Error::arg("time span shorter than one step"));
    }
    let steps = steps as usize;
    let n = x0.len();
    let mut out = DMatrix::zeros(n, steps + 1);
    let mut x = x0.to_vec();
    let mut work: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);
    out.column_mut(0).copy_from_slice(&x);
    for s in 0..steps {
        let t = t_span.0 + s as f64 * dt;
        rk4_step(field, t, &mut x, dt, &mut work);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { time: t });
        }
        out.column_mut(s + 1).copy_from_slice(&x);
    }
    TimeSeries::new(t_span.0, dt, out)
}

fn finite(vals: &[f64]) -> Result<()> {
    if vals.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::arg("system parameters must be finite"))
    }
}

/// `x'' + c x' + k x + beta x^3 = F cos(w t)` in first-order form `(x, x')`.
#[derive(Clone, Debug)]
pub struct Duffing {
    pub damping: f64,
    pub stiffness: f64,
    pub beta: f64,
    pub forcing: Option<(f64, f64)>,
}

impl Duffing {
    pub fn new(damping: f64, stiffness: f64, beta: f64, forcing: Option<(f64, f64)>) -> Result<Self> {
        finite(&[damping, stiffness, beta])?;
        if let Some((a, w)) = forcing {
            finite(&[a, w])?;
        }
        if stiffness == 0.0 && beta == 0.0 {
            return Err(Error::arg("Duffing oscillator needs a restoring force"));
        }
        Ok(Duffing {
            damping,
            stiffness,
            beta,
            forcing,
        })
    }

    /// `x'' + x' + x + x^3 = 0`, a single hardening well.
    pub fn single_well() -> Self {
        Duffing::new(1.0, 1.0, 1.0, None).unwrap()
    }

    /// `x'' + x' - x + x^3 = 0`: wells at `x = ±1`, saddle at the origin.
    pub fn double_well() -> Self {
        Duffing::new(1.0, -1.0, 1.0, None).unwrap()
    }

    /// Nonzero equilibria `±sqrt(-k/beta)` when they exist.
    pub fn wells(&self) -> Option<f64> {
        let r = -self.stiffness / self.beta;
        (self.beta != 0.0 && r > 0.0).then(|| r.sqrt())
    }
}

impl VectorField for Duffing {
    fn dim(&self) -> usize {
        2
    }
    fn eval(&self, t: f64, x: &[f64], dx: &mut [f64]) {
        let f = self.forcing.map_or(0.0, |(a, w)| a * (w * t).cos());
        dx[0] = x[1];
        dx[1] = -self.damping * x[1] - self.stiffness * x[0] - self.beta * x[0].powi(3) + f;
    }
    fn truth(&self) -> GroundTruth {
        // roots of l^2 + c l + k
        let disc = Complex64::new(self.damping * self.damping - 4.0 * self.stiffness, 0.0).sqrt();
        let c = Complex64::new(-self.damping, 0.0);
        let mut ev = vec![(c + disc) / 2.0, (c - disc) / 2.0];
        ev.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
        GroundTruth {
            eigenvalues: ev,
            ..Default::default()
        }
    }
}

/// `z' = (alpha0 + i omega0) z + (beta + i gamma) |z|^2 z` with `z = x + i y`;
/// in polar form `rho' = alpha0 rho + beta rho^3`, `theta' = omega0 + gamma rho^2`.
#[derive(Clone, Debug)]
pub struct StuartLandau {
    pub alpha0: f64,
    pub beta: f64,
    pub gamma: f64,
    pub omega0: f64,
}

impl StuartLandau {
    pub fn new(alpha0: f64, beta: f64, gamma: f64, omega0: f64) -> Result<Self> {
        finite(&[alpha0, beta, gamma, omega0])?;
        Ok(StuartLandau {
            alpha0,
            beta,
            gamma,
            omega0,
        })
    }
}

impl VectorField for StuartLandau {
    fn dim(&self) -> usize {
        2
    }
    fn eval(&self, _t: f64, x: &[f64], dx: &mut [f64]) {
        let r2 = x[0] * x[0] + x[1] * x[1];
        let a = self.alpha0 + self.beta * r2;
        let w = self.omega0 + self.gamma * r2;
        dx[0] = a * x[0] - w * x[1];
        dx[1] = w * x[0] + a * x[1];
    }
    fn truth(&self) -> GroundTruth {
        let radius = (self.alpha0 > 0.0 && self.beta < 0.0).then(|| (-self.alpha0 / self.beta).sqrt());
        GroundTruth {
            eigenvalues: vec![
                Complex64::new(self.alpha0, self.omega0.abs()),
                Complex64::new(self.alpha0, -self.omega0.abs()),
            ],
            polar: Some((self.alpha0, self.beta, self.omega0, self.gamma)),
            limit_cycle_radius: radius,
        }
    }
}

/// Block-diagonal real linear system with prescribed eigenvalues. Complex
/// eigenvalues must appear as adjacent conjugate pairs.
#[derive(Clone, Debug)]
pub struct ModalLinear {
    pub eigenvalues: Vec<Complex64>,
    a: DMatrix<f64>,
}

impl ModalLinear {
    pub fn new(eigenvalues: Vec<Complex64>) -> Result<Self> {
        let n = eigenvalues.len();
        let mut a = DMatrix::zeros(n, n);
        let mut i = 0;
        while i < n {
            let l = eigenvalues[i];
            finite(&[l.re, l.im])?;
            if l.im == 0.0 {
                a[(i, i)] = l.re;
                i += 1;
                continue;
            }
            if i + 1 >= n || (eigenvalues[i + 1] - l.conj()).norm() > 1e-12 * l.norm() {
                return Err(Error::arg(format!("eigenvalue {l} lacks an adjacent conjugate")));
            }
            a[(i, i)] = l.re;
            a[(i + 1, i + 1)] = l.re;
            a[(i, i + 1)] = -l.im;
            a[(i + 1, i)] = l.im;
            i += 2;
        }
        Ok(ModalLinear { eigenvalues, a })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }
}

impl VectorField for ModalLinear {
    fn dim(&self) -> usize {
        self.eigenvalues.len()
    }
    fn eval(&self, _t: f64, x: &[f64], dx: &mut [f64]) {
        for (i, d) in dx.iter_mut().enumerate() {
            *d = (0..x.len()).map(|j| self.a[(i, j)] * x[j]).sum();
        }
    }
    fn truth(&self) -> GroundTruth {
        GroundTruth {
            eigenvalues: self.eigenvalues.clone(),
            ..Default::default()
        }
    }
}

/// Polynomial observable `s = C x^{1:deg}` applied sample by sample.
#[derive(Clone, Debug)]
pub struct ObservableMap {
    pub exps: ExponentMatrix,
    /// channels x monomials
    pub coeffs: DMatrix<f64>,
}

impl ObservableMap {
    pub fn new(state_dim: usize, degree: usize, coeffs: DMatrix<f64>) -> Result<Self> {
        let exps = ExponentMatrix::new(state_dim, 1, degree)?;
        if coeffs.ncols() != exps.len() {
            return Err(Error::Dimension {
                expected: exps.len(),
                got: coeffs.ncols(),
            });
        }
        Ok(ObservableMap { exps, coeffs })
    }

    /// Sets coefficients from `(channel, exponent, value)` triples.
    pub fn from_terms(state_dim: usize, degree: usize, channels: usize, terms: &[(usize, Vec<u32>, f64)]) -> Result<Self> {
        let exps = ExponentMatrix::new(state_dim, 1, degree)?;
        let mut coeffs = DMatrix::zeros(channels, exps.len());
        for (ch, e, v) in terms {
            let k = exps
                .index_of(e)
                .ok_or_else(|| Error::arg(format!("exponent {e:?} outside degree 1..={degree}")))?;
            if *ch >= channels {
                return Err(Error::arg(format!("channel {ch} out of range")));
            }
            coeffs[(*ch, k)] += v;
        }
        Ok(ObservableMap { exps, coeffs })
    }

    pub fn apply(&self, states: &TimeSeries) -> Result<TimeSeries> {
        let m = crate::poly::eval_columns(&self.exps, &states.values)?;
        TimeSeries::new(states.t0, states.dt, &self.coeffs * m)
    }
}

/// A system observed through a polynomial map.
pub struct ObservableLift<F: VectorField> {
    pub system: F,
    pub map: ObservableMap,
}

impl<F: VectorField> ObservableLift<F> {
    pub fn new(system: F, map: ObservableMap) -> Result<Self> {
        if map.exps.dims() != system.dim() {
            return Err(Error::Dimension {
                expected: system.dim(),
                got: map.exps.dims(),
            });
        }
        Ok(ObservableLift { system, map })
    }

    pub fn simulate(&self, x0: &[f64], t_span: (f64, f64), dt: f64) -> Result<TimeSeries> {
        self.map.apply(&integrate_rk4(&self.system, x0, t_span, dt)?)
    }
}

/// Central-difference Jacobian of an autonomous field at `x`.
/// Slow oscillator coupled to faster modes through quadratic and cubic
/// terms, given in modal coordinates and mapped to a real physical basis by
/// a fixed random rotation. Quadratic terms in the slow rows only couple
/// slow and fast coordinates, so the SSM is curved purely through the fast
/// directions.
#[derive(Clone, Debug)]
pub struct SlowFastSpec {
    pub slow: Complex64,
    /// Fast eigenvalues; complex ones are given with positive imaginary part
    /// and their conjugate is added.
    pub fast: Vec<Complex64>,
    /// Scale of all quadratic couplings.
    pub quadratic: f64,
    /// Coefficient of `z^2 zbar` in the slow row.
    pub cubic: Complex64,
    pub seed: u64,
}

impl Default for SlowFastSpec {
    fn default() -> Self {
        SlowFastSpec {
            slow: Complex64::new(-0.05, 1.0),
            fast: vec![Complex64::new(-0.4, 2.3), Complex64::new(-0.7, 3.7)],
            quadratic: 1.0,
            cubic: Complex64::new(-0.3, 0.4),
            seed: 11,
        }
    }
}

pub fn slow_fast_poly(spec: &SlowFastSpec) -> Result<crate::oracle::ModalSystem> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    if !(spec.slow.im > 0.0) {
        return Err(Error::arg("slow eigenvalue needs a positive frequency"));
    }
    let mut lambda = vec![spec.slow, spec.slow.conj()];
    let mut fast_rows = Vec::new();
    for f in &spec.fast {
        fast_rows.push(lambda.len());
        if f.im == 0.0 {
            lambda.push(*f);
        } else {
            let f = Complex64::new(f.re, f.im.abs());
            lambda.push(f);
            lambda.push(f.conj());
        }
    }
    let n = lambda.len();
    // real block basis: a pair (q, qbar) maps to (Re q, Im q)
    let mut p = crate::linalg::CMatrix::zeros(n, n);
    let mut i = 0;
    while i < n {
        if lambda[i].im == 0.0 {
            p[(i, i)] = Complex64::new(1.0, 0.0);
            i += 1;
        } else {
            p[(i, i)] = Complex64::new(0.5, 0.0);
            p[(i, i + 1)] = Complex64::new(0.5, 0.0);
            p[(i + 1, i)] = Complex64::new(0.0, -0.5);
            p[(i + 1, i + 1)] = Complex64::new(0.0, 0.5);
            i += 2;
        }
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(spec.seed);
    let g = DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
    let q = g.qr().q();
    let t = crate::linalg::to_complex(&q) * p;
    let mut sys = crate::oracle::ModalSystem::new(lambda.clone(), t)?;

    let e = |pairs: &[(usize, u32)]| {
        let mut v = vec![0u32; n];
        for (i, k) in pairs {
            v[*i] += k;
        }
        v
    };
    let a = spec.quadratic;
    let c = |re: f64, im: f64| Complex64::new(a * re, a * im);
    let feeds = [
        [c(0.8, 0.0), c(0.5, 0.0), c(0.0, 0.3)],
        [c(-0.4, 0.3), c(0.6, 0.0), c(0.3, 0.0)],
    ];
    let back = [[c(0.4, 0.0), c(0.2, 0.0)], [c(-0.3, 0.0), c(0.0, 0.25)]];
    for (idx, &r) in fast_rows.iter().enumerate() {
        let f = feeds[idx % 2];
        let b = back[idx % 2];
        let real_mode = lambda[r].im == 0.0;
        sys = sys.with_term(r, &e(&[(0, 1), (1, 1)]), if real_mode { Complex64::new(f[1].re, 0.0) } else { f[1] })?;
        sys = sys.with_term(r, &e(&[(0, 2)]), f[0])?;
        if !real_mode {
            sys = sys.with_term(r, &e(&[(1, 2)]), f[2])?;
        }
        sys = sys.with_term(0, &e(&[(0, 1), (r, 1)]), b[0])?;
        let partner = if real_mode { r } else { r + 1 };
        sys = sys.with_term(0, &e(&[(1, 1), (partner, 1)]), b[1])?;
    }
    sys = sys.with_term(0, &e(&[(0, 2), (1, 1)]), spec.cubic)?;
    sys = sys.with_term(0, &e(&[(0, 3)]), spec.cubic * 0.3)?;
    Ok(sys)
}

pub fn numeric_jacobian<F: VectorField + ?Sized>(field: &F, x: &[f64]) -> DMatrix<f64> {
    let n = field.dim();
    let mut j = DMatrix::zeros(n, n);
    let (mut fp, mut fm) = (vec![0.0; n], vec![0.0; n]);
    for k in 0..n {
        let h = 1e-6 * (1.0 + x[k].abs());
        let mut xp = x.to_vec();
        xp[k] += h;
        let mut xm = x.to_vec();
        xm[k] -= h;
        field.eval(0.0, &xp, &mut fp);
        field.eval(0.0, &xm, &mut fm);
        for i in 0..n {
            j[(i, k)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    j
}
