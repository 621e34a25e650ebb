//! Sparse multivariate polynomials with exact rational coefficients.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Rat = BigRational;

/// Shorthand for the rational `p/q`.
pub fn rat(p: i64, q: i64) -> Rat {
    Rat::new(BigInt::from(p), BigInt::from(q))
}

/// `p/q` with `p ∈ [−9, 9]`, `q ∈ [1, 7]`.
pub fn random_rat(rng: &mut impl rand::Rng) -> Rat {
    rat(rng.gen_range(-9..=9), rng.gen_range(1..=7))
}

pub fn rat_int(p: i64) -> Rat {
    Rat::from_integer(BigInt::from(p))
}

pub fn rat_to_f64(r: &Rat) -> f64 {
    match (r.numer().to_f64(), r.denom().to_f64()) {
        (Some(n), Some(d)) if n.is_finite() && d.is_finite() => n / d,
        _ => {
            // very large numerator or denominator: scale down by bit length
            let shift = r.numer().bits().max(r.denom().bits()).saturating_sub(900) as usize;
            let n = (r.numer() >> shift).to_f64().unwrap_or(0.0);
            let d = (r.denom() >> shift).to_f64().unwrap_or(f64::INFINITY);
            n / d
        }
    }
}

pub fn factorial(n: u32) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

/// Exponent vector of a monomial.
pub type Exponents = Vec<u32>;

/// Polynomial in `nvars` variables; zero coefficients are never stored.
#[derive(Clone, PartialEq, Eq)]
pub struct Poly {
    nvars: usize,
    terms: BTreeMap<Exponents, Rat>,
}

impl Poly {
    /// Constant plus `terms` random monomials, each variable present with
    /// probability 0.35 at a degree in `1..=deg`.
    pub fn random(nvars: usize, deg: u32, terms: usize, rng: &mut impl rand::Rng) -> Self {
        let mut p = Poly::constant(nvars, random_rat(rng));
        for _ in 0..terms {
            let e: Vec<u32> = (0..nvars).map(|_| if rng.gen_bool(0.35) { rng.gen_range(1..=deg) } else { 0 }).collect();
            p.add_term(e, random_rat(rng));
        }
        p
    }

    pub fn zero(nvars: usize) -> Self {
        Poly { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: Rat) -> Self {
        let mut p = Poly::zero(nvars);
        p.add_term(vec![0; nvars], c);
        p
    }

    pub fn one(nvars: usize) -> Self {
        Poly::constant(nvars, Rat::one())
    }

    pub fn var(nvars: usize, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        Poly::monomial(e, Rat::one())
    }

    pub fn monomial(exps: Exponents, c: Rat) -> Self {
        let mut p = Poly::zero(exps.len());
        p.add_term(exps, c);
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponents, &Rat)> {
        self.terms.iter()
    }

    /// Coefficient of the given monomial (zero if absent).
    pub fn coeff(&self, exps: &[u32]) -> Rat {
        self.terms.get(exps).cloned().unwrap_or_else(Rat::zero)
    }

    /// Constant term.
    pub fn constant_term(&self) -> Rat {
        self.coeff(&vec![0; self.nvars])
    }

    pub fn add_term(&mut self, exps: Exponents, c: Rat) {
        assert_eq!(exps.len(), self.nvars, "exponent length mismatch");
        if c.is_zero() {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(exps) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn add_assign_ref(&mut self, other: &Poly) {
        assert_eq!(self.nvars, other.nvars);
        for (e, c) in &other.terms {
            self.add_term(e.clone(), c.clone());
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        out.add_assign_ref(other);
        out
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), -c.clone());
        }
        out
    }

    pub fn scale(&self, c: &Rat) -> Poly {
        if c.is_zero() {
            return Poly::zero(self.nvars);
        }
        Poly { nvars: self.nvars, terms: self.terms.iter().map(|(e, v)| (e.clone(), v * c)).collect() }
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        assert_eq!(self.nvars, other.nvars);
        let mut out = Poly::zero(self.nvars);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let e: Exponents = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, ca * cb);
            }
        }
        out
    }

    pub fn pow(&self, k: u32) -> Poly {
        let mut out = Poly::one(self.nvars);
        for _ in 0..k {
            out = out.mul(self);
        }
        out
    }

    pub fn degree_in(&self, i: usize) -> u32 {
        self.terms.keys().map(|e| e[i]).max().unwrap_or(0)
    }

    pub fn total_degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    /// Partial derivative in variable `i`.
    pub fn derivative(&self, i: usize) -> Poly {
        let mut out = Poly::zero(self.nvars);
        for (e, c) in &self.terms {
            if e[i] == 0 {
                continue;
            }
            let mut e2 = e.clone();
            let k = e2[i];
            e2[i] -= 1;
            out.add_term(e2, c * Rat::from_integer(BigInt::from(k)));
        }
        out
    }

    /// Mixed partial derivative, one derivative per listed variable (repeats allowed).
    pub fn derivative_multi(&self, vars: &[usize]) -> Poly {
        let mut counts = vec![0u32; self.nvars];
        for &v in vars {
            counts[v] += 1;
        }
        let mut out = Poly::zero(self.nvars);
        for (e, c) in &self.terms {
            if e.iter().zip(&counts).any(|(a, k)| a < k) {
                continue;
            }
            let mut factor = BigInt::one();
            let mut e2 = e.clone();
            for (a, &k) in e2.iter_mut().zip(&counts) {
                for r in 0..k {
                    factor *= BigInt::from(*a - r);
                }
                *a -= k;
            }
            out.add_term(e2, c * Rat::from_integer(factor));
        }
        out
    }

    pub fn eval(&self, point: &[Rat]) -> Rat {
        assert_eq!(point.len(), self.nvars);
        let mut acc = Rat::zero();
        for (e, c) in &self.terms {
            let mut t = c.clone();
            for (x, &k) in point.iter().zip(e) {
                if k > 0 {
                    t *= num_traits::pow(x.clone(), k as usize);
                }
            }
            acc += t;
        }
        acc
    }

    pub fn eval_f64(&self, point: &[f64]) -> f64 {
        assert_eq!(point.len(), self.nvars);
        self.terms
            .iter()
            .map(|(e, c)| {
                let mut t = rat_to_f64(c);
                for (x, &k) in point.iter().zip(e) {
                    t *= x.powi(k as i32);
                }
                t
            })
            .sum()
    }

    /// Substitutes rational values for the listed variables, keeping the variable count.
    pub fn substitute(&self, values: &[(usize, Rat)]) -> Poly {
        let mut out = Poly::zero(self.nvars);
        for (e, c) in &self.terms {
            let mut e2 = e.clone();
            let mut t = c.clone();
            for (i, v) in values {
                let k = e2[*i];
                if k > 0 {
                    t *= num_traits::pow(v.clone(), k as usize);
                    e2[*i] = 0;
                }
            }
            out.add_term(e2, t);
        }
        out
    }

    /// Rewrites the polynomial in a larger variable space: variable `i` becomes `map[i]`.
    pub fn embed(&self, nvars: usize, map: &[usize]) -> Poly {
        assert_eq!(map.len(), self.nvars);
        let mut out = Poly::zero(nvars);
        for (e, c) in &self.terms {
            let mut e2 = vec![0; nvars];
            for (i, &k) in e.iter().enumerate() {
                e2[map[i]] += k;
            }
            out.add_term(e2, c.clone());
        }
        out
    }

    /// Largest absolute coefficient, for diagnostics.
    pub fn max_abs_coeff(&self) -> Rat {
        self.terms.values().map(|c| c.abs()).max().unwrap_or_else(Rat::zero)
    }
}

impl fmt::Debug for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (e, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{}", c)?;
            for (i, &k) in e.iter().enumerate() {
                match k {
                    0 => {}
                    1 => write!(f, "·x{}", i)?,
                    _ => write!(f, "·x{}^{}", i, k)?,
                }
            }
        }
        Ok(())
    }
}
