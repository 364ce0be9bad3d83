use std::collections::BTreeMap;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use super::ExponentMatrix;

/// Truncated multivariate power series with complex coefficients.
///
/// Terms above `trunc` are discarded by every operation. A `BTreeMap` keeps
/// iteration order fixed so sums are reproducible bit-for-bit.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    nvars: usize,
    trunc: usize,
    terms: BTreeMap<Vec<u32>, Complex64>,
}

fn order(e: &[u32]) -> usize {
    e.iter().sum::<u32>() as usize
}

impl Series {
    pub fn zero(nvars: usize, trunc: usize) -> Self {
        Series {
            nvars,
            trunc,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, trunc: usize, c: Complex64) -> Self {
        let mut s = Self::zero(nvars, trunc);
        s.add_term(vec![0; nvars], c);
        s
    }

    /// The coordinate function `z_i`.
    pub fn var(nvars: usize, trunc: usize, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        let mut s = Self::zero(nvars, trunc);
        s.add_term(e, Complex64::new(1.0, 0.0));
        s
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn trunc(&self) -> usize {
        self.trunc
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u32], Complex64)> {
        self.terms.iter().map(|(e, c)| (e.as_slice(), *c))
    }

    pub fn coeff(&self, e: &[u32]) -> Complex64 {
        self.terms.get(e).copied().unwrap_or_default()
    }

    pub fn add_term(&mut self, e: Vec<u32>, c: Complex64) {
        debug_assert_eq!(e.len(), self.nvars);
        if order(&e) > self.trunc || c == Complex64::default() {
            return;
        }
        let slot = self.terms.entry(e).or_default();
        *slot += c;
    }

    pub fn set(&mut self, e: Vec<u32>, c: Complex64) {
        if c == Complex64::default() {
            self.terms.remove(&e);
        } else if order(&e) <= self.trunc {
            self.terms.insert(e, c);
        }
    }

    /// Homogeneous part of exactly `k`.
    pub fn part(&self, k: usize) -> Series {
        Series {
            nvars: self.nvars,
            trunc: self.trunc,
            terms: self
                .terms
                .iter()
                .filter(|(e, _)| order(e) == k)
                .map(|(e, c)| (e.clone(), *c))
                .collect(),
        }
    }

    /// Coefficients of the order-`k` part laid out in the columns of `exps`.
    pub fn block(&self, exps: &ExponentMatrix, k: usize) -> Vec<Complex64> {
        exps.order_range(k)
            .map(|c| self.coeff(exps.column(c)))
            .collect()
    }

    pub fn scale(&self, c: Complex64) -> Series {
        let mut out = Series::zero(self.nvars, self.trunc);
        for (e, v) in &self.terms {
            out.add_term(e.clone(), v * c);
        }
        out
    }

    pub fn deriv(&self, i: usize) -> Series {
        let mut out = Series::zero(self.nvars, self.trunc);
        for (e, v) in &self.terms {
            if e[i] == 0 {
                continue;
            }
            let mut e2 = e.clone();
            e2[i] -= 1;
            out.add_term(e2, v * e[i] as f64);
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn eval(&self, z: &[Complex64]) -> Complex64 {
        let mut acc = Complex64::default();
        for (e, c) in &self.terms {
            let mut v = *c;
            for (x, p) in z.iter().zip(e) {
                for _ in 0..*p {
                    v *= x;
                }
            }
            acc += v;
        }
        acc
    }

    /// `self(args)`: every variable replaced by the matching series.
    pub fn substitute(&self, args: &[Series]) -> Series {
        assert_eq!(args.len(), self.nvars);
        let nvars = args[0].nvars;
        let trunc = args[0].trunc;
        let mut powers: Vec<Vec<Series>> = args
            .iter()
            .map(|a| vec![Series::constant(nvars, trunc, Complex64::new(1.0, 0.0)), a.clone()])
            .collect();
        let mut out = Series::zero(nvars, trunc);
        for (e, c) in &self.terms {
            let mut term = Series::constant(nvars, trunc, *c);
            for (i, &p) in e.iter().enumerate() {
                if p == 0 {
                    continue;
                }
                while powers[i].len() <= p as usize {
                    let next = &powers[i][powers[i].len() - 1] * &args[i];
                    powers[i].push(next);
                }
                term = &term * &powers[i][p as usize];
            }
            out = &out + &term;
        }
        out
    }

    /// Evaluates `sum_k coeffs[k] * args^exps[:,k]`, where the arguments are
    /// themselves series. Powers are cached per variable.
    pub fn compose(exps: &ExponentMatrix, coeffs: &[Complex64], args: &[Series]) -> Series {
        assert_eq!(args.len(), exps.dims());
        let nvars = args[0].nvars;
        let trunc = args[0].trunc;
        let mut powers: Vec<Vec<Series>> = args
            .iter()
            .map(|a| vec![Series::constant(nvars, trunc, Complex64::new(1.0, 0.0)), a.clone()])
            .collect();
        let mut out = Series::zero(nvars, trunc);
        for (k, e) in exps.columns().enumerate() {
            if coeffs[k] == Complex64::default() {
                continue;
            }
            let mut term = Series::constant(nvars, trunc, coeffs[k]);
            for (i, &p) in e.iter().enumerate() {
                if p == 0 {
                    continue;
                }
                while powers[i].len() <= p as usize {
                    let next = &powers[i][powers[i].len() - 1] * &args[i];
                    powers[i].push(next);
                }
                term = &term * &powers[i][p as usize];
            }
            out = &out + &term;
        }
        out
    }
}

impl Add for &Series {
    type Output = Series;
    fn add(self, rhs: &Series) -> Series {
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(e.clone(), *c);
        }
        out
    }
}

impl Sub for &Series {
    type Output = Series;
    fn sub(self, rhs: &Series) -> Series {
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(e.clone(), -*c);
        }
        out
    }
}

impl Mul for &Series {
    type Output = Series;
    fn mul(self, rhs: &Series) -> Series {
        let trunc = self.trunc.min(rhs.trunc);
        let mut out = Series::zero(self.nvars, trunc);
        for (ea, ca) in &self.terms {
            let oa = order(ea);
            for (eb, cb) in &rhs.terms {
                if oa + order(eb) > trunc {
                    continue;
                }
                let e: Vec<u32> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, ca * cb);
            }
        }
        out
    }
}
