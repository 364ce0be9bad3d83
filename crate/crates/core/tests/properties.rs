use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssm_core::forced::{PolarCoupling, PolarMode, PolarModel};
use ssm_core::geometry::{fit_ssm, ChartMode, ChartOptions, SsmChart};
use ssm_core::normal_form::{linear_part_from_jacobian, observable_gauge, resonance_structure};
use ssm_core::poly::{monomial_count, ExponentMatrix, Series};
use ssm_core::synth::{integrate_rk4, ModalLinear};
use ssm_core::trajectory::{delay_embed, finite_diff_derivative, nmte, EmbeddedTrajectory, TimeSeries};

fn binom(n: usize, k: usize) -> usize {
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128) as usize
}

fn point(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.5f64..1.5, n)
}

proptest! {
    #[test]
    fn exponent_counts_match_binomials(n in 1usize..6, lo in 1usize..4, extra in 0usize..4) {
        let hi = lo + extra;
        let e = ExponentMatrix::new(n, lo, hi).unwrap();
        let want: usize = (lo..=hi).map(|k| binom(n + k - 1, k)).sum();
        prop_assert_eq!(e.len(), want);
        for k in lo..=hi {
            prop_assert_eq!(e.order_range(k).len(), monomial_count(n, k));
        }
    }

    #[test]
    fn exponents_are_graded_lex_and_indexed(n in 1usize..5, hi in 1usize..6) {
        let e = ExponentMatrix::new(n, 1, hi).unwrap();
        for k in 0..e.len() {
            let col = e.column(k);
            prop_assert_eq!(col.iter().sum::<u32>() as usize, e.order_of(k));
            prop_assert_eq!(e.index_of(col), Some(k));
            if k + 1 < e.len() {
                let next = e.column(k + 1);
                let (a, b) = (e.order_of(k), e.order_of(k + 1));
                // same order: first variable most significant, descending
                prop_assert!(a < b || (a == b && col > next));
            }
        }
    }

    #[test]
    fn eval_is_a_product_of_powers(x in point(3), hi in 1usize..6) {
        let e = ExponentMatrix::new(3, 1, hi).unwrap();
        let v = e.eval(&x).unwrap();
        for k in 0..e.len() {
            let want: f64 = e.column(k).iter().zip(&x).map(|(p, xi)| xi.powi(*p as i32)).product();
            prop_assert!((v[k] - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
    }

    #[test]
    fn eval_is_multiplicative(x in point(3)) {
        let e = ExponentMatrix::new(3, 1, 6).unwrap();
        let v = e.eval(&x).unwrap();
        let low = e.order_range(1).start..e.order_range(3).end;
        for a in low.clone() {
            for b in low.clone() {
                let sum: Vec<u32> = e.column(a).iter().zip(e.column(b)).map(|(p, q)| p + q).collect();
                let k = e.index_of(&sum).unwrap();
                prop_assert!((v[k] - v[a] * v[b]).abs() <= 1e-12 * v[k].abs().max(1e-3));
            }
        }
    }

    #[test]
    fn jacobian_matches_central_differences(x in point(3), hi in 2usize..5) {
        let e = ExponentMatrix::new(3, 1, hi).unwrap();
        let jac = e.jacobian(&x).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let (vp, vm) = (e.eval(&xp).unwrap(), e.eval(&xm).unwrap());
            for k in 0..e.len() {
                let fd = (vp[k] - vm[k]) / (2.0 * h);
                prop_assert!((jac[(k, i)] - fd).abs() < 1e-6 * (1.0 + fd.abs()), "k {} i {}", k, i);
            }
        }
    }

    #[test]
    fn series_eval_is_a_ring_homomorphism(x in point(2), y in point(2), zr in -0.8f64..0.8, zi in -0.8f64..0.8) {
        let build = |c: &[f64]| {
            let mut s = Series::zero(2, 6);
            s.add_term(vec![1, 0], Complex64::new(c[0], 0.0));
            s.add_term(vec![1, 1], Complex64::new(c[1], 0.5));
            s
        };
        let (a, b) = (build(&x), build(&y));
        let z = [Complex64::new(zr, zi), Complex64::new(zr, -zi)];
        let prod = (&a * &b).eval(&z);
        prop_assert!((prod - a.eval(&z) * b.eval(&z)).norm() < 1e-12);
        let sum = (&a + &b).eval(&z);
        prop_assert!((sum - a.eval(&z) - b.eval(&z)).norm() < 1e-12);
    }

    #[test]
    fn delay_embedding_indexes_samples(len in 12usize..40, p in 1usize..5, shift in 1usize..3, ch in 1usize..3) {
        let vals = DMatrix::from_fn(ch, len, |i, j| (i * 1000 + j) as f64);
        let ts = TimeSeries::new(0.0, 0.1, vals.clone()).unwrap();
        let emb = delay_embed(&ts, p, shift).unwrap();
        prop_assert_eq!(emb.points.ncols(), len - (p - 1) * shift);
        prop_assert_eq!(emb.points.nrows(), ch * p);
        for c in 0..emb.points.ncols() {
            for k in 0..ch {
                for r in 0..p {
                    prop_assert_eq!(emb.points[(k * p + r, c)], vals[(k, c + r * shift)]);
                }
            }
        }
    }

    #[test]
    fn finite_differences_are_exact_on_quadratics(a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0, dt in 0.01f64..0.5) {
        let n = 9;
        let x = DMatrix::from_fn(1, n, |_, j| { let t = j as f64 * dt; a + b * t + c * t * t });
        let dx = finite_diff_derivative(&x, dt).unwrap();
        for j in 0..n {
            let t = j as f64 * dt;
            prop_assert!((dx[(0, j)] - (b + 2.0 * c * t)).abs() < 1e-9);
        }
    }

    #[test]
    fn nmte_matches_brute_force(vals in prop::collection::vec(-3.0f64..3.0, 24), noise in prop::collection::vec(-0.1f64..0.1, 24), scale in 0.1f64..10.0) {
        let a = DMatrix::from_column_slice(3, 8, &vals);
        let b = &a + DMatrix::from_column_slice(3, 8, &noise);
        let norm = DVector::from_column_slice(&vals[0..3]).add_scalar(5.0);
        let mut total = 0.0;
        for j in 0..8 {
            let mut s = 0.0;
            for i in 0..3 {
                s += (a[(i, j)] - b[(i, j)]).powi(2);
            }
            total += s.sqrt();
        }
        let brute = total / 8.0 / norm.norm();
        let got = nmte(&a, &b, &norm).unwrap();
        prop_assert!((got - brute).abs() <= 1e-12 * brute.max(1e-300));
        prop_assert_eq!(nmte(&a, &a, &norm).unwrap(), 0.0);
        // invariant under a common rescaling
        let scaled = nmte(&(&a * scale), &(&b * scale), &(&norm * scale)).unwrap();
        prop_assert!((scaled - got).abs() <= 1e-10 * got.max(1e-300));
    }

    #[test]
    fn rk4_is_fourth_order(re in -0.5f64..0.0, im in 0.5f64..3.0) {
        let sys = ModalLinear::new(vec![Complex64::new(re, im), Complex64::new(re, -im)]).unwrap();
        let t_end = 4.0;
        let err = |dt: f64| {
            let ts = integrate_rk4(&sys, &[1.0, 0.0], (0.0, t_end), dt).unwrap();
            let last = ts.values.ncols() - 1;
            let t = ts.time(last);
            let r = (re * t).exp();
            let exact = [r * (im * t).cos(), r * (im * t).sin()];
            ((ts.values[(0, last)] - exact[0]).powi(2) + (ts.values[(1, last)] - exact[1]).powi(2)).sqrt()
        };
        let dt = 0.04;
        let ratio = err(dt) / err(dt / 2.0);
        prop_assert!((12.0..20.0).contains(&ratio), "ratio {}", ratio);
    }

    #[test]
    fn chart_is_orthonormal_and_consistent(seed in 0u64..1000, order in 1usize..4) {
        // noisy points near a curved two-dimensional sheet in R^5
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts = DMatrix::zeros(5, 600);
        for c in 0..600 {
            let (u, v): (f64, f64) = (rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
            let mut jitter = || 0.01 * rng.random_range(-0.5..0.5);
            let col = [u, v, u * u + jitter(), u * v + jitter(), v * v * v + jitter()];
            pts.set_column(c, &DVector::from_row_slice(&col));
        }
        let data = [EmbeddedTrajectory::from_states(0.0, 0.1, pts.clone())];
        let chart = fit_ssm(&data, 2, order, &ChartMode::Default, &ChartOptions::default()).unwrap();
        let gram = chart.u1.transpose() * &chart.u1;
        prop_assert!((gram - DMatrix::identity(2, 2)).norm() < 1e-10);
        prop_assert!((&chart.u1 - &chart.v1).norm() == 0.0);
        if order > 1 {
            // nonlinear columns fit the part of the data the projection misses
            prop_assert!((chart.u1.transpose() * &chart.v).norm() < 1e-8 * (1.0 + chart.v.norm()));
        }
        let eta = DVector::from_vec(vec![0.1, -0.2]);
        let back = chart.project(&chart.lift(&eta).unwrap()).unwrap();
        prop_assert!((back - &eta).norm() < 1e-10);
        let restored = SsmChart::from_json(&chart.to_json()).unwrap();
        prop_assert_eq!(&restored.v, &chart.v);
        prop_assert_eq!(&restored.u1, &chart.u1);
        prop_assert_eq!(restored.order, chart.order);
    }

    #[test]
    fn resonance_mask_is_conjugation_symmetric(a in -0.3f64..-0.01, w1 in 0.5f64..3.0, b in -0.6f64..-0.01, w2 in 3.1f64..6.0, order in 3usize..6) {
        let mut jac = DMatrix::zeros(4, 4);
        for (blk, (re, im)) in [(a, w1), (b, w2)].into_iter().enumerate() {
            let o = 2 * blk;
            jac[(o, o)] = re;
            jac[(o + 1, o + 1)] = re;
            jac[(o, o + 1)] = -im;
            jac[(o + 1, o)] = im;
        }
        let lin = linear_part_from_jacobian(jac, 1e8).unwrap();
        let s = resonance_structure(&lin, order, 0.05).unwrap();
        let perm = lin.conjugation();
        let cols = s.exps.permuted_columns(&perm);
        for &(r, k) in &s.resonant {
            prop_assert!(s.is_resonant(perm[r], cols[k]));
        }
        // delta changes sign under conjugation
        for r in 0..4 {
            for k in 0..s.exps.len() {
                prop_assert!((s.delta_matrix[(r, k)] + s.delta_matrix[(perm[r], cols[k])]).abs() < 1e-12);
            }
        }
        // z^2 zbar is always resonant in its own row
        let mut e = vec![0; 4];
        e[0] = 2;
        e[1] = 1;
        prop_assert!(s.is_resonant(0, s.exps.index_of(&e).unwrap()));
    }

    #[test]
    fn gauge_undoes_resonant_changes(cr in -0.5f64..0.5, ci in -0.5f64..0.5, br in -0.5f64..0.0, bi in -2.0f64..2.0, re in -0.3f64..-0.01) {
        let lam = Complex64::new(re, 5.0);
        let b = Complex64::new(br, bi);
        let cc = Complex64::new(cr, ci);
        let trunc = 3;
        let mut fwd = Series::var(2, trunc, 0);
        fwd.add_term(vec![2, 1], cc);
        let mut fwdb = Series::var(2, trunc, 1);
        fwdb.add_term(vec![1, 2], cc.conj());
        let half = Complex64::new(0.5, 0.0);
        let obs = &fwd.scale(half) + &fwdb.scale(half);
        let shifted = b - cc * (2.0 * lam.re);
        let mut z = Series::var(2, trunc, 0).scale(lam);
        z.add_term(vec![2, 1], shifted);
        let mut zb = Series::var(2, trunc, 1).scale(lam.conj());
        zb.add_term(vec![1, 2], shifted.conj());
        let res = |r: usize, e: &[u32]| if r == 0 { e[0] == e[1] + 1 } else { e[1] == e[0] + 1 };
        let g = observable_gauge(&[lam, lam.conj()], &[z, zb], &obs, res).unwrap();
        prop_assert!((g.rhs[0].coeff(&[2, 1]) - b).norm() < 1e-10);
        // the two rows stay complex conjugates
        prop_assert!((g.rhs[1].coeff(&[1, 2]) - b.conj()).norm() < 1e-10);
        let pol = g.to_polar().unwrap();
        prop_assert!((pol.modes[0].alpha_coeffs[0] - re).abs() < 1e-12);
        prop_assert!((pol.modes[0].alpha_coeffs[1] - br).abs() < 1e-10);
        prop_assert!((pol.modes[0].omega_coeffs[1] - bi).abs() < 1e-10);
    }

    #[test]
    fn polar_model_round_trips_through_json(
        alpha in prop::collection::vec(-1.0f64..1.0, 1..4),
        omega in prop::collection::vec(-10.0f64..10.0, 1..4),
        cpl in -1.0f64..1.0,
        amp in prop::option::of(0.0f64..2.0),
    ) {
        let model = PolarModel {
            modes: vec![
                PolarMode { alpha_coeffs: alpha.clone(), omega_coeffs: omega.clone(), couplings: vec![] },
                PolarMode {
                    alpha_coeffs: omega,
                    omega_coeffs: alpha,
                    couplings: vec![PolarCoupling { powers: vec![2, 0], alpha: cpl, omega: -cpl }],
                },
            ],
            max_training_amplitude: amp,
        };
        let text = serde_json::to_string(&model).unwrap();
        let back: PolarModel = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, model);
    }

    #[test]
    fn csv_round_trip_preserves_samples(vals in prop::collection::vec(-1e3f64..1e3, 6..30), dt in 1e-3f64..1.0) {
        let n = vals.len() / 2;
        let ts = TimeSeries::new(0.0, dt, DMatrix::from_row_slice(2, n, &vals[..2 * n])).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        ts.save_csv(&path).unwrap();
        let back = TimeSeries::load_csv(&path).unwrap();
        prop_assert_eq!(&back.values, &ts.values);
        prop_assert!((back.dt - dt).abs() < 1e-9 * dt);
    }
}
