//! Forced response of polar normal forms: closed-form response curves,
//! their stability, backbone curves, forcing calibration and direct
//! simulation of the quasiperiodically forced polar equations.
//!
//! For a single mode forced at `Omega` the polar dynamics read
//!
//! ```text
//! rho' = alpha(rho) rho + f sin(psi)
//! psi' = omega(rho) - Omega + (f / rho) cos(psi),    psi = theta - Omega t - phi
//! ```
//!
//! whose fixed points give `Omega = omega(rho) ± sqrt(f^2 / rho^2 - alpha(rho)^2)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::{rk4_step, VectorField};

/// Cross-mode term `(alpha + i omega) prod_i rho_i^{2 powers_i}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarCoupling {
    pub powers: Vec<u32>,
    pub alpha: f64,
    pub omega: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarMode {
    /// Coefficients of `rho^0, rho^2, rho^4, ...` in `alpha(rho)` (1/s).
    pub alpha_coeffs: Vec<f64>,
    /// Coefficients of `rho^0, rho^2, ...` in `omega(rho)` (rad/s).
    pub omega_coeffs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub couplings: Vec<PolarCoupling>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarModel {
    pub modes: Vec<PolarMode>,
    /// Largest amplitude seen in training data; predictions beyond it are
    /// extrapolations.
    #[serde(default)]
    pub max_training_amplitude: Option<f64>,
}

fn even_poly(c: &[f64], rho: f64) -> f64 {
    let r2 = rho * rho;
    c.iter().rev().fold(0.0, |acc, v| acc * r2 + v)
}

fn even_poly_deriv(c: &[f64], rho: f64) -> f64 {
    // d/drho sum c_k rho^{2k} = sum 2k c_k rho^{2k-1}
    let mut acc = 0.0;
    let mut pw = rho;
    for (k, v) in c.iter().enumerate().skip(1) {
        acc += 2.0 * k as f64 * v * pw;
        pw *= rho * rho;
    }
    acc
}

impl PolarMode {
    fn coupling_sum(&self, rho: &[f64]) -> (f64, f64) {
        let mut a = 0.0;
        let mut w = 0.0;
        for c in &self.couplings {
            let m: f64 = c.powers.iter().zip(rho).map(|(p, r)| (r * r).powi(*p as i32)).product();
            a += c.alpha * m;
            w += c.omega * m;
        }
        (a, w)
    }
}

impl PolarModel {
    pub fn single(alpha_coeffs: Vec<f64>, omega_coeffs: Vec<f64>) -> Self {
        PolarModel {
            modes: vec![PolarMode {
                alpha_coeffs,
                omega_coeffs,
                couplings: Vec::new(),
            }],
            max_training_amplitude: None,
        }
    }

    pub fn alpha(&self, j: usize, rho: &[f64]) -> f64 {
        let m = &self.modes[j];
        even_poly(&m.alpha_coeffs, rho[j]) + m.coupling_sum(rho).0
    }

    pub fn omega(&self, j: usize, rho: &[f64]) -> f64 {
        let m = &self.modes[j];
        even_poly(&m.omega_coeffs, rho[j]) + m.coupling_sum(rho).1
    }

    /// `(alpha, omega, alpha', omega')` of a single-mode model at `rho`.
    pub fn eval1(&self, rho: f64) -> (f64, f64, f64, f64) {
        let m = &self.modes[0];
        (
            even_poly(&m.alpha_coeffs, rho),
            even_poly(&m.omega_coeffs, rho),
            even_poly_deriv(&m.alpha_coeffs, rho),
            even_poly_deriv(&m.omega_coeffs, rho),
        )
    }

    fn require_single(&self) -> Result<()> {
        if self.modes.len() != 1 {
            return Err(Error::Unsupported(format!(
                "closed-form response curves need one mode, model has {}; use simulate_polar",
                self.modes.len()
            )));
        }
        Ok(())
    }

    /// Re-expresses the model in amplitude `kappa * rho`.
    pub fn rescale_amplitude(&self, kappa: f64) -> PolarModel {
        let scale = |c: &[f64]| -> Vec<f64> {
            c.iter()
                .enumerate()
                .map(|(k, v)| v / kappa.powi(2 * k as i32))
                .collect()
        };
        PolarModel {
            modes: self
                .modes
                .iter()
                .map(|m| PolarMode {
                    alpha_coeffs: scale(&m.alpha_coeffs),
                    omega_coeffs: scale(&m.omega_coeffs),
                    couplings: m
                        .couplings
                        .iter()
                        .map(|c| {
                            let deg: i32 = c.powers.iter().map(|p| 2 * *p as i32).sum();
                            PolarCoupling {
                                powers: c.powers.clone(),
                                alpha: c.alpha / kappa.powi(deg),
                                omega: c.omega / kappa.powi(deg),
                            }
                        })
                        .collect(),
                })
                .collect(),
            max_training_amplitude: self.max_training_amplitude.map(|a| a * kappa),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrcPoint {
    pub omega: f64,
    pub rho0: f64,
    pub psi0: f64,
    pub stable: bool,
    /// Largest eigenvalue real part within 1e-10 of zero; such points are
    /// reported unstable.
    pub marginal: bool,
    /// +1 / -1 for the two roots, 0 where they merge.
    pub branch: i8,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stability {
    pub stable: bool,
    pub marginal: bool,
    pub max_real_part: f64,
}

fn fixed_point(polar: &PolarModel, f: f64, rho: f64, omega_forcing: f64, branch: i8) -> FrcPoint {
    let (a, w, _, _) = polar.eval1(rho);
    let psi0 = (-a * rho / f).atan2(-(w - omega_forcing) * rho / f);
    let mut p = FrcPoint {
        omega: omega_forcing,
        rho0: rho,
        psi0,
        stable: false,
        marginal: false,
        branch,
    };
    let s = frc_stability(polar, f, &p);
    p.stable = s.stable;
    p.marginal = s.marginal;
    p
}

fn check_grid(rho_grid: &[f64]) -> Result<()> {
    if rho_grid.iter().any(|r| !(*r > 0.0)) || rho_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::arg("amplitude grid must be positive and strictly ascending"));
    }
    Ok(())
}

/// Response curve parametrized by amplitude. Points are ordered along the
/// curve: the lower-frequency root by ascending amplitude, then the
/// higher-frequency root by descending amplitude.
pub fn frc_sweep(polar: &PolarModel, f: f64, rho_grid: &[f64]) -> Result<Vec<FrcPoint>> {
    polar.require_single()?;
    if !(f > 0.0) {
        return Err(Error::arg("forcing amplitude must be positive"));
    }
    check_grid(rho_grid)?;
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for &rho in rho_grid {
        let (a, w, _, _) = polar.eval1(rho);
        let rad = f * f / (rho * rho) - a * a;
        if rad < 0.0 {
            continue;
        }
        if rad == 0.0 {
            lower.push(fixed_point(polar, f, rho, w, 0));
            continue;
        }
        let s = rad.sqrt();
        lower.push(fixed_point(polar, f, rho, w - s, -1));
        upper.push(fixed_point(polar, f, rho, w + s, 1));
    }
    if lower.is_empty() {
        log::warn!("forcing amplitude {f} produces no response on the amplitude grid");
    }
    upper.reverse();
    lower.extend(upper);
    Ok(lower)
}

/// Linear stability of a response point from the 2x2 Jacobian of the
/// `(rho, psi)` equations.
pub fn frc_stability(polar: &PolarModel, f: f64, point: &FrcPoint) -> Stability {
    let rho = point.rho0;
    let (a, w, da, dw) = polar.eval1(rho);
    let detune = w - point.omega;
    let _ = f;
    let j11 = a + rho * da;
    let j12 = -detune * rho;
    let j21 = dw + detune / rho;
    let j22 = a;
    let tr = j11 + j22;
    let det = j11 * j22 - j12 * j21;
    let disc = tr * tr / 4.0 - det;
    let max_re = if disc >= 0.0 { tr / 2.0 + disc.sqrt() } else { tr / 2.0 };
    let marginal = max_re.abs() < 1e-10;
    Stability {
        stable: max_re < 0.0 && !marginal,
        marginal,
        max_real_part: max_re,
    }
}

/// Amplitudes responding at one forcing frequency, by bisection on
/// `rho^2 (alpha^2 + (omega - Omega)^2) - f^2` between grid points.
pub fn frc_at_frequency(polar: &PolarModel, f: f64, omega_forcing: f64, rho_grid: &[f64]) -> Result<Vec<FrcPoint>> {
    polar.require_single()?;
    check_grid(rho_grid)?;
    let g = |rho: f64| {
        let (a, w, _, _) = polar.eval1(rho);
        rho * rho * (a * a + (w - omega_forcing).powi(2)) - f * f
    };
    let mut out = Vec::new();
    for win in rho_grid.windows(2) {
        let (mut lo, mut hi) = (win[0], win[1]);
        let (glo, ghi) = (g(lo), g(hi));
        if glo == 0.0 {
            out.push(lo);
            continue;
        }
        if glo.signum() == ghi.signum() {
            continue;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid).signum() == glo.signum() {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        out.push(0.5 * (lo + hi));
    }
    Ok(out
        .into_iter()
        .map(|rho| {
            let (_, w, _, _) = polar.eval1(rho);
            let branch = if omega_forcing > w { 1 } else { -1 };
            fixed_point(polar, f, rho, omega_forcing, branch)
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Backbone {
    pub points: Vec<(f64, f64)>,
    pub max_training_amplitude: Option<f64>,
}

pub fn backbone(polar: &PolarModel, rho_grid: &[f64]) -> Result<Backbone> {
    polar.require_single()?;
    Ok(Backbone {
        points: rho_grid.iter().map(|&r| (r, polar.eval1(r).1)).collect(),
        max_training_amplitude: polar.max_training_amplitude,
    })
}

/// Forcing amplitude that places a response of amplitude `rho0` at `Omega`.
pub fn calibrate_forcing(polar: &PolarModel, omega_forcing: f64, rho0: f64) -> Result<f64> {
    polar.require_single()?;
    if !(rho0 > 0.0) {
        return Err(Error::arg("calibration amplitude must be positive"));
    }
    let (a, w, _, _) = polar.eval1(rho0);
    Ok(rho0 * ((omega_forcing - w).powi(2) + a * a).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HarmonicSign {
    /// Forcing term `e^{+i<k, Omega> t}`.
    Plus,
    /// Forcing term `e^{-i<k, Omega> t}`.
    Minus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub mode: usize,
    pub k: Vec<i32>,
    pub f: f64,
    pub phi: f64,
    pub sign: HarmonicSign,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForcingSpec {
    /// Forcing frequency vector (rad/s).
    pub omega: Vec<f64>,
    pub harmonics: Vec<Harmonic>,
}

impl ForcingSpec {
    pub fn none() -> Self {
        ForcingSpec {
            omega: Vec::new(),
            harmonics: Vec::new(),
        }
    }

    /// Primary forcing of mode 0 at a single frequency.
    pub fn primary(omega: f64, f: f64, phi: f64) -> Self {
        ForcingSpec {
            omega: vec![omega],
            harmonics: vec![Harmonic {
                mode: 0,
                k: vec![1],
                f,
                phi,
                sign: HarmonicSign::Plus,
            }],
        }
    }

    pub fn validate(&self, modes: usize) -> Result<()> {
        for (i, h) in self.harmonics.iter().enumerate() {
            if h.mode >= modes {
                return Err(Error::arg(format!("harmonic {i} targets mode {} of {modes}", h.mode)));
            }
            if h.k.len() != self.omega.len() {
                return Err(Error::arg(format!("harmonic {i}: k has wrong length")));
            }
            if !(h.f >= 0.0) {
                return Err(Error::arg(format!("harmonic {i}: negative amplitude")));
            }
            let clash = self.harmonics.iter().any(|o| o.mode == h.mode && o.k == h.k && o.sign != h.sign);
            if clash {
                return Err(Error::arg(format!(
                    "harmonic {:?} of mode {} is in both the plus and minus sets",
                    h.k, h.mode
                )));
            }
        }
        Ok(())
    }

    fn phase_rate(&self, h: &Harmonic) -> f64 {
        h.k.iter().zip(&self.omega).map(|(k, w)| *k as f64 * w).sum()
    }
}

#[derive(Clone, Debug)]
pub struct PolarTrajectory {
    pub t: Vec<f64>,
    /// modes x samples
    pub rho: nalgebra::DMatrix<f64>,
    pub theta: nalgebra::DMatrix<f64>,
    /// Set when some amplitude hit the `rho -> 0` guard.
    pub clamped: bool,
}

pub const RHO_GUARD: f64 = 1e-12;

struct PolarField<'a> {
    polar: &'a PolarModel,
    forcing: &'a ForcingSpec,
    rates: Vec<f64>,
}

impl VectorField for PolarField<'_> {
    fn dim(&self) -> usize {
        2 * self.polar.modes.len()
    }
    fn eval(&self, t: f64, x: &[f64], dx: &mut [f64]) {
        let m = self.polar.modes.len();
        let rho: Vec<f64> = x[..m].iter().map(|r| r.max(RHO_GUARD)).collect();
        for j in 0..m {
            dx[j] = self.polar.alpha(j, &rho) * rho[j];
            dx[m + j] = self.polar.omega(j, &rho);
        }
        for (h, rate) in self.forcing.harmonics.iter().zip(&self.rates) {
            let j = h.mode;
            let th = x[m + j];
            let arg = match h.sign {
                HarmonicSign::Plus => th - rate * t - h.phi,
                HarmonicSign::Minus => th + rate * t - h.phi,
            };
            dx[j] += h.f * arg.sin();
            dx[m + j] += h.f / rho[j] * arg.cos();
        }
    }
}

/// RK4 integration of the forced polar equations for any number of modes
/// and forcing frequencies.
pub fn simulate_polar(
    polar: &PolarModel,
    forcing: &ForcingSpec,
    initial: &[(f64, f64)],
    t_span: (f64, f64),
    dt: f64,
) -> Result<PolarTrajectory> {
    let m = polar.modes.len();
    if initial.len() != m {
        return Err(Error::Dimension {
            expected: m,
            got: initial.len(),
        });
    }
    forcing.validate(m)?;
    if !(dt > 0.0) {
        return Err(Error::arg("timestep must be positive"));
    }
    let rates: Vec<f64> = forcing.harmonics.iter().map(|h| forcing.phase_rate(h)).collect();
    let fastest = polar
        .modes
        .iter()
        .map(|md| md.omega_coeffs.first().copied().unwrap_or(0.0).abs())
        .chain(rates.iter().map(|r| r.abs()))
        .fold(0.0, f64::max);
    if dt * fastest >= 0.5 {
        return Err(Error::arg(format!(
            "timestep {dt} does not resolve frequency {fastest}"
        )));
    }
    let steps = ((t_span.1 - t_span.0) / dt).round().max(0.0) as usize;
    let field = PolarField {
        polar,
        forcing,
        rates,
    };
    let mut x: Vec<f64> = initial.iter().map(|p| p.0).chain(initial.iter().map(|p| p.1)).collect();
    let mut clamped = false;
    for r in x[..m].iter_mut() {
        if *r < RHO_GUARD {
            *r = RHO_GUARD;
            clamped = true;
        }
    }
    let mut rho = nalgebra::DMatrix::zeros(m, steps + 1);
    let mut theta = nalgebra::DMatrix::zeros(m, steps + 1);
    let mut t = Vec::with_capacity(steps + 1);
    let mut work: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; 2 * m]);
    for s in 0..=steps {
        let time = t_span.0 + s as f64 * dt;
        t.push(time);
        for j in 0..m {
            rho[(j, s)] = x[j];
            theta[(j, s)] = x[m + j];
        }
        if s == steps {
            break;
        }
        rk4_step(&field, time, &mut x, dt, &mut work);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { time });
        }
        for r in x[..m].iter_mut() {
            if *r < RHO_GUARD {
                *r = RHO_GUARD;
                clamped = true;
            }
        }
    }
    if clamped {
        log::warn!("amplitude reached the rho = 0 guard during polar simulation");
    }
    Ok(PolarTrajectory { t, rho, theta, clamped })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Resonances {
    pub plus: Vec<Vec<i32>>,
    pub minus: Vec<Vec<i32>>,
}

/// Harmonics `k` (max-norm at most `kmax`, first nonzero entry positive)
/// with `|omega_j(0) - <k, Omega>| <= delta` (plus set) or
/// `|omega_j(0) + <k, Omega>| <= delta` (minus set), for every mode.
pub fn resonant_harmonics(polar: &PolarModel, omega: &[f64], kmax: i32, delta: f64) -> Vec<Resonances> {
    let l = omega.len();
    let mut lattice = Vec::new();
    if l > 0 && kmax > 0 {
        let mut k = vec![-kmax; l];
        loop {
            if let Some(first) = k.iter().find(|v| **v != 0) {
                if *first > 0 {
                    lattice.push(k.clone());
                }
            }
            let mut i = l;
            loop {
                if i == 0 {
                    break;
                }
                i -= 1;
                if k[i] < kmax {
                    k[i] += 1;
                    break;
                }
                k[i] = -kmax;
            }
            if k.iter().all(|v| *v == -kmax) {
                break;
            }
        }
    }
    polar
        .modes
        .iter()
        .map(|m| {
            let w0 = m.omega_coeffs.first().copied().unwrap_or(0.0);
            let mut r = Resonances::default();
            for k in &lattice {
                let s: f64 = k.iter().zip(omega).map(|(a, b)| *a as f64 * b).sum();
                if (w0 - s).abs() <= delta {
                    r.plus.push(k.clone());
                } else if (w0 + s).abs() <= delta {
                    r.minus.push(k.clone());
                }
            }
            r
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sloshing() -> PolarModel {
        PolarModel::single(vec![-0.0628, -0.0572], vec![7.80, -1.67])
    }

    fn grid(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn linear_peak() {
        let p = PolarModel::single(vec![-0.1], vec![2.0]);
        let f = 0.05;
        let peak = f / 0.1;
        let pts = frc_sweep(&p, f, &[0.1, 0.3, peak]).unwrap();
        let top = pts.iter().find(|q| q.rho0 == peak).unwrap();
        assert_eq!(top.branch, 0);
        assert!((top.omega - 2.0).abs() < 1e-12);
        assert!(pts.iter().all(|q| q.stable));
    }

    #[test]
    fn fixed_point_residuals() {
        let p = sloshing();
        let f = 0.3 * (0.0628 + 0.0572 * 0.09);
        for q in frc_sweep(&p, f, &grid(0.01, 0.6, 300)).unwrap() {
            let (a, w, _, _) = p.eval1(q.rho0);
            let r1 = a * q.rho0 + f * q.psi0.sin();
            let r2 = w - q.omega + f / q.rho0 * q.psi0.cos();
            assert!(r1.abs() < 1e-10 && r2.abs() < 1e-10);
        }
    }

    #[test]
    fn backbone_values() {
        let b = backbone(&sloshing(), &[0.0, 0.1]).unwrap();
        assert_eq!(b.points[0].1, 7.80);
        assert!((b.points[1].1 - 7.7833).abs() < 1e-12);
    }

    #[test]
    fn calibration_inverts_sweep() {
        let p = sloshing();
        let f = calibrate_forcing(&p, 7.75, 0.2).unwrap();
        let (a, w, _, _) = p.eval1(0.2);
        let back = w + (f * f / 0.04 - a * a).sqrt();
        let back2 = w - (f * f / 0.04 - a * a).sqrt();
        assert!((back - 7.75).abs() < 1e-12 || (back2 - 7.75).abs() < 1e-12);
        let on = calibrate_forcing(&p, w, 0.2).unwrap();
        assert!((on - 0.2 * a.abs()).abs() < 1e-15);
        let lin = PolarModel::single(vec![-0.3], vec![1.0]);
        assert!((calibrate_forcing(&lin, 1.0, 2.0).unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn fixed_frequency_query_matches_sweep() {
        let p = sloshing();
        let f = calibrate_forcing(&p, 7.70, 0.4).unwrap();
        let pts = frc_at_frequency(&p, f, 7.70, &grid(0.01, 1.0, 200)).unwrap();
        assert!(pts.iter().any(|q| (q.rho0 - 0.4).abs() < 1e-10));
    }

    #[test]
    fn unforced_decay_and_limit_cycle() {
        let p = PolarModel::single(vec![-0.2], vec![3.0]);
        let tr = simulate_polar(&p, &ForcingSpec::none(), &[(0.1, 0.0)], (0.0, 20.0), 0.01).unwrap();
        let r = tr.rho.row(0);
        assert!(r.iter().zip(r.iter().skip(1)).all(|(a, b)| b < a));
        let n = tr.t.len();
        let rate = (tr.theta[(0, n - 1)] - tr.theta[(0, n - 2)]) / 0.01;
        assert!((rate - 3.0).abs() < 1e-9);
        let sl = PolarModel::single(vec![0.0584, -0.0572], vec![1.0]);
        let tr = simulate_polar(&sl, &ForcingSpec::none(), &[(0.05, 0.0)], (0.0, 600.0), 0.02).unwrap();
        let last = tr.rho[(0, tr.t.len() - 1)];
        assert!((last - (0.0584f64 / 0.0572).sqrt()).abs() < 1e-6);
    }

    #[test]
    fn resonance_sets() {
        let p = PolarModel::single(vec![-0.1], vec![1.0]);
        let r = &resonant_harmonics(&p, &[1.0], 3, 0.1)[0];
        assert_eq!(r.plus, vec![vec![1]]);
        assert!(r.minus.is_empty());
        let p3 = PolarModel::single(vec![-0.1], vec![3.0]);
        assert_eq!(resonant_harmonics(&p3, &[1.0], 3, 0.05)[0].plus, vec![vec![3]]);
        let r = &resonant_harmonics(&p, &[0.9, 0.25], 4, 0.01)[0];
        assert!(!r.plus.contains(&vec![1, 0]));
        assert!(r.plus.contains(&vec![0, 4]));
    }

    #[test]
    fn conflicting_forcing_sets_rejected() {
        let mut spec = ForcingSpec::primary(1.0, 0.1, 0.0);
        let mut h = spec.harmonics[0].clone();
        h.sign = HarmonicSign::Minus;
        spec.harmonics.push(h);
        assert!(spec.validate(1).is_err());
        let multi = PolarModel {
            modes: vec![sloshing().modes[0].clone(); 2],
            max_training_amplitude: None,
        };
        assert!(matches!(frc_sweep(&multi, 0.1, &[0.1]), Err(Error::Unsupported(_))));
    }
}
