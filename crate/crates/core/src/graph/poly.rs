//! Sparse multivariate polynomials with exact rational coefficients.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

/// Polynomial in `nvars` variables, stored as exponent vector → coefficient.
/// Zero coefficients are never stored.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Polynomial {
    nvars: usize,
    terms: BTreeMap<Vec<u32>, BigRational>,
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Polynomial { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: BigRational) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(vec![0; nvars], c);
        p
    }

    /// Exact copy of a float constant. Panics on non-finite input.
    pub fn constant_f64(nvars: usize, c: f64) -> Self {
        Self::constant(nvars, BigRational::from_float(c).expect("finite constant"))
    }

    /// The variable `x_{i+1}`.
    pub fn var(nvars: usize, i: usize) -> Self {
        assert!(i < nvars, "variable {i} out of range for {nvars} variables");
        let mut e = vec![0; nvars];
        e[i] = 1;
        let mut p = Self::zero(nvars);
        p.add_term(e, BigRational::one());
        p
    }

    /// Univariate polynomial from coefficients in ascending degree.
    pub fn univariate(coeffs: &[BigRational]) -> Self {
        let mut p = Self::zero(1);
        for (k, c) in coeffs.iter().enumerate() {
            p.add_term(vec![k as u32], c.clone());
        }
        p
    }

    /// Univariate polynomial from float coefficients in ascending degree.
    pub fn univariate_f64(coeffs: &[f64]) -> Self {
        let rs: Vec<BigRational> =
            coeffs.iter().map(|&c| BigRational::from_float(c).expect("finite coefficient")).collect();
        Self::univariate(&rs)
    }

    pub fn from_terms(
        nvars: usize,
        terms: impl IntoIterator<Item = (Vec<u32>, BigRational)>,
    ) -> Self {
        let mut p = Self::zero(nvars);
        for (e, c) in terms {
            assert_eq!(e.len(), nvars, "exponent vector length");
            p.add_term(e, c);
        }
        p
    }

    fn add_term(&mut self, exps: Vec<u32>, c: BigRational) {
        if c.is_zero() {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(exps) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                let sum = o.get() + &c;
                if sum.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = sum;
                }
            }
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u32], &BigRational)> {
        self.terms.iter().map(|(e, c)| (e.as_slice(), c))
    }

    /// Total degree; zero for the zero polynomial.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum::<u32>()).max().unwrap_or(0)
    }

    /// Largest exponent of variable `i`.
    pub fn degree_in(&self, i: usize) -> u32 {
        self.terms.keys().map(|e| e[i]).max().unwrap_or(0)
    }

    pub fn is_constant(&self) -> bool {
        self.terms.keys().all(|e| e.iter().all(|&k| k == 0))
    }

    pub fn scale(&self, c: &BigRational) -> Self {
        if c.is_zero() {
            return Self::zero(self.nvars);
        }
        Polynomial {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(e, k)| (e.clone(), k * c)).collect(),
        }
    }

    pub fn pow(&self, n: u32) -> Self {
        let mut acc = Self::constant(self.nvars, BigRational::one());
        for _ in 0..n {
            acc = &acc * self;
        }
        acc
    }

    pub fn eval(&self, x: &[BigRational]) -> BigRational {
        assert_eq!(x.len(), self.nvars, "point dimension");
        let mut acc = BigRational::zero();
        for (e, c) in &self.terms {
            let mut t = c.clone();
            for (xi, &k) in x.iter().zip(e) {
                if k > 0 {
                    t *= num_traits::pow(xi.clone(), k as usize);
                }
            }
            acc += t;
        }
        acc
    }

    /// Float evaluation; only for diagnostics.
    pub fn eval_f64(&self, x: &[f64]) -> f64 {
        use num_traits::ToPrimitive;
        self.terms
            .iter()
            .map(|(e, c)| {
                let mut t = c.to_f64().unwrap_or(f64::NAN);
                for (xi, &k) in x.iter().zip(e) {
                    t *= xi.powi(k as i32);
                }
                t
            })
            .sum()
    }

    pub fn partial(&self, i: usize) -> Self {
        let mut p = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            if e[i] == 0 {
                continue;
            }
            let mut e2 = e.clone();
            e2[i] -= 1;
            p.add_term(e2, c * BigRational::from_integer(BigInt::from(e[i])));
        }
        p
    }

    pub fn gradient(&self) -> Vec<Self> {
        (0..self.nvars).map(|i| self.partial(i)).collect()
    }

    pub fn gradient_at(&self, x: &[BigRational]) -> Vec<BigRational> {
        (0..self.nvars).map(|i| self.partial(i).eval(x)).collect()
    }

    /// Coefficients of `δ ↦ p(x + δ v)` in ascending powers of `δ`.
    pub fn along_line(&self, x: &[BigRational], v: &[BigRational]) -> Vec<BigRational> {
        assert_eq!(x.len(), self.nvars, "point dimension");
        assert_eq!(v.len(), self.nvars, "direction dimension");
        let mut out: Vec<BigRational> = vec![BigRational::zero(); self.degree() as usize + 1];
        for (e, c) in &self.terms {
            let mut acc = vec![c.clone()];
            for i in 0..self.nvars {
                if e[i] > 0 {
                    acc = uni_mul(&acc, &binomial_power(&x[i], &v[i], e[i]));
                }
            }
            for (k, a) in acc.into_iter().enumerate() {
                out[k] += a;
            }
        }
        while out.len() > 1 && out.last().is_some_and(Zero::is_zero) {
            out.pop();
        }
        out
    }

    /// Replaces each variable `x_i` by `subs[i]` (all over a common variable set).
    pub fn compose(&self, subs: &[Polynomial]) -> Self {
        assert_eq!(subs.len(), self.nvars, "substitution count");
        let n = subs.first().map_or(0, |s| s.nvars);
        let mut acc = Self::zero(n);
        for (e, c) in &self.terms {
            let mut t = Self::constant(n, c.clone());
            for (s, &k) in subs.iter().zip(e) {
                if k > 0 {
                    t = &t * &s.pow(k);
                }
            }
            acc = &acc + &t;
        }
        acc
    }
}

fn uni_mul(a: &[BigRational], b: &[BigRational]) -> Vec<BigRational> {
    let mut out = vec![BigRational::zero(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// `(x + δ v)^e` as coefficients in `δ`.
fn binomial_power(x: &BigRational, v: &BigRational, e: u32) -> Vec<BigRational> {
    let mut out = Vec::with_capacity(e as usize + 1);
    let mut binom = BigInt::one();
    for k in 0..=e {
        let term = BigRational::from_integer(binom.clone())
            * num_traits::pow(x.clone(), (e - k) as usize)
            * num_traits::pow(v.clone(), k as usize);
        out.push(term);
        binom = binom * BigInt::from(e - k) / BigInt::from(k + 1);
    }
    out
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        assert_eq!(self.nvars, rhs.nvars, "variable count");
        let mut p = self.clone();
        for (e, c) in &rhs.terms {
            p.add_term(e.clone(), c.clone());
        }
        p
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self + &(-rhs)
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        Polynomial {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(e, c)| (e.clone(), -c)).collect(),
        }
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        assert_eq!(self.nvars, rhs.nvars, "variable count");
        let mut p = Polynomial::zero(self.nvars);
        for (e1, c1) in &self.terms {
            for (e2, c2) in &rhs.terms {
                let e: Vec<u32> = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                p.add_term(e, c1 * c2);
            }
        }
        p
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut ordered: Vec<(&Vec<u32>, &BigRational)> = self.terms.iter().collect();
        ordered.sort_by(|a, b| {
            let da: u32 = a.0.iter().sum();
            let db: u32 = b.0.iter().sum();
            db.cmp(&da).then_with(|| b.0.cmp(a.0))
        });
        for (i, (e, c)) in ordered.into_iter().enumerate() {
            let neg = c.is_negative();
            let mag = c.abs();
            if i == 0 {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if neg { "-" } else { "+" })?;
            }
            let is_const = e.iter().all(|&k| k == 0);
            let mut wrote = false;
            if is_const || !mag.is_one() {
                write!(f, "{mag}")?;
                wrote = true;
            }
            for (var, &k) in e.iter().enumerate() {
                if k == 0 {
                    continue;
                }
                if wrote {
                    write!(f, "*")?;
                }
                write!(f, "x{}", var + 1)?;
                if k > 1 {
                    write!(f, "^{k}")?;
                }
                wrote = true;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(p: i64, d: i64) -> BigRational {
        BigRational::new(p.into(), d.into())
    }

    #[test]
    fn arithmetic_and_display() {
        let x = Polynomial::var(2, 0);
        let y = Polynomial::var(2, 1);
        let p = &(&x.pow(2) - &y) + &Polynomial::constant(2, q(1, 2));
        assert_eq!(p.to_string(), "x1^2 - x2 + 1/2");
        assert_eq!(p.num_terms(), 3);
        assert_eq!(p.eval(&[q(3, 1), q(1, 1)]), q(17, 2));
        let zero = &p - &p;
        assert!(zero.is_zero());
        assert_eq!(zero.to_string(), "0");
    }

    #[test]
    fn gradient_of_product() {
        let x = Polynomial::var(2, 0);
        let y = Polynomial::var(2, 1);
        let p = &x * &y;
        assert_eq!(p.gradient_at(&[q(2, 1), q(5, 1)]), vec![q(5, 1), q(2, 1)]);
    }

    #[test]
    fn along_line_expands_cubic() {
        let x = Polynomial::var(1, 0);
        let p = x.pow(3);
        // (1 + 2δ)^3 = 1 + 6δ + 12δ² + 8δ³
        let c = p.along_line(&[q(1, 1)], &[q(2, 1)]);
        assert_eq!(c, vec![q(1, 1), q(6, 1), q(12, 1), q(8, 1)]);
    }

    #[test]
    fn compose_substitutes() {
        // p(y) = y^2 - 1 composed with y = x1 + x2
        let y = Polynomial::var(1, 0);
        let p = &y.pow(2) - &Polynomial::constant(1, q(1, 1));
        let s = &Polynomial::var(2, 0) + &Polynomial::var(2, 1);
        let c = p.compose(&[s]);
        assert_eq!(c.eval(&[q(1, 1), q(2, 1)]), q(8, 1));
    }

    fn small_poly() -> impl Strategy<Value = Polynomial> {
        prop::collection::vec(((0u32..3, 0u32..3), -5i64..=5), 0..6).prop_map(|ts| {
            Polynomial::from_terms(2, ts.into_iter().map(|((a, b), c)| (vec![a, b], q(c, 1))))
        })
    }

    proptest! {
        #[test]
        fn evaluation_is_a_ring_homomorphism(
            p in small_poly(), r in small_poly(),
            a in -4i64..4, b in -4i64..4,
        ) {
            let pt = [q(a, 3), q(b, 2)];
            prop_assert_eq!((&p * &r).eval(&pt), p.eval(&pt) * r.eval(&pt));
            prop_assert_eq!((&p + &r).eval(&pt), p.eval(&pt) + r.eval(&pt));
            prop_assert!(p.terms().all(|(_, c)| !c.is_zero()));
        }

        #[test]
        fn along_line_agrees_with_substitution(
            p in small_poly(), a in -3i64..3, b in -3i64..3,
            va in -3i64..3, vb in -3i64..3, t in -5i64..5,
        ) {
            let x = [q(a, 1), q(b, 2)];
            let v = [q(va, 1), q(vb, 1)];
            let delta = q(t, 7);
            let coeffs = p.along_line(&x, &v);
            let mut acc = BigRational::zero();
            for c in coeffs.iter().rev() {
                acc = acc * &delta + c;
            }
            let pt = [&x[0] + &delta * &v[0], &x[1] + &delta * &v[1]];
            prop_assert_eq!(acc, p.eval(&pt));
        }
    }
}
