//! Sparse multivariate polynomials with rational coefficients.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::{Add, Mul, Neg, Sub};

use num_traits::{One, Zero};

use crate::scalar::{rational_to_f64, Rational};

/// `Σ c·Π x_v^{e_v}`; exponent vectors have one entry per variable and zero
/// coefficients are never stored.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Poly {
    num_vars: usize,
    terms: BTreeMap<Vec<u32>, Rational>,
}

impl Poly {
    pub fn zero(num_vars: usize) -> Self {
        Self { num_vars, terms: BTreeMap::new() }
    }

    pub fn constant(num_vars: usize, c: Rational) -> Self {
        let mut p = Self::zero(num_vars);
        p.accumulate(vec![0; num_vars], c);
        p
    }

    pub fn var(num_vars: usize, v: usize) -> Self {
        assert!(v < num_vars, "variable {v} out of range");
        let mut e = vec![0; num_vars];
        e[v] = 1;
        let mut p = Self::zero(num_vars);
        p.accumulate(e, Rational::one());
        p
    }

    /// `Σ coeffs[κ]·arg^κ`.
    pub fn compose(coeffs: &[Rational], arg: &Poly) -> Self {
        coeffs
            .iter()
            .rev()
            .fold(Self::zero(arg.num_vars), |acc, c| &(&acc * arg) + &Self::constant(arg.num_vars, c.clone()))
    }

    fn accumulate(&mut self, e: Vec<u32>, c: Rational) {
        use std::collections::btree_map::Entry;
        if c.is_zero() {
            return;
        }
        match self.terms.entry(e) {
            Entry::Vacant(slot) => {
                slot.insert(c);
            }
            Entry::Occupied(mut slot) => {
                *slot.get_mut() += c;
                if slot.get().is_zero() {
                    slot.remove();
                }
            }
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u32], &Rational)> {
        self.terms.iter().map(|(e, c)| (e.as_slice(), c))
    }

    /// Total degree; the zero polynomial has degree 0.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    /// Variables with a positive exponent in some term.
    pub fn variables(&self) -> BTreeSet<usize> {
        self.terms
            .keys()
            .flat_map(|e| e.iter().enumerate().filter(|(_, &x)| x > 0).map(|(v, _)| v))
            .collect()
    }

    pub fn scale(&self, c: &Rational) -> Self {
        let mut p = Self::zero(self.num_vars);
        for (e, x) in &self.terms {
            p.accumulate(e.clone(), x * c);
        }
        p
    }

    pub fn eval(&self, x: &[Rational]) -> Rational {
        self.terms.iter().fold(Rational::zero(), |acc, (e, c)| {
            let mono = e.iter().zip(x).fold(c.clone(), |m, (&k, xv)| m * num_traits::pow(xv.clone(), k as usize));
            acc + mono
        })
    }

    pub fn compile(&self) -> CompiledPoly {
        CompiledPoly {
            terms: self
                .terms
                .iter()
                .map(|(e, c)| {
                    let factors = e.iter().enumerate().filter(|(_, &k)| k > 0).map(|(v, &k)| (v, k as i32)).collect();
                    (rational_to_f64(c), factors)
                })
                .collect(),
        }
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.accumulate(e.clone(), c.clone());
        }
        out
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        self + &(-rhs)
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        self.scale(&-Rational::one())
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        let mut out = Poly::zero(self.num_vars.max(rhs.num_vars));
        for (ea, ca) in &self.terms {
            for (eb, cb) in &rhs.terms {
                let e = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.accumulate(e, ca * cb);
            }
        }
        out
    }
}

/// Floating-point form of a [`Poly`] for the numeric solver.
#[derive(Clone, Debug)]
pub struct CompiledPoly {
    terms: Vec<(f64, Vec<(usize, i32)>)>,
}

impl CompiledPoly {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(c, f)| f.iter().fold(*c, |m, &(v, k)| m * x[v].powi(k))).sum()
    }

    /// Value, with the gradient written into `grad` (overwritten).
    pub fn eval_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut value = 0.0;
        for (c, factors) in &self.terms {
            value += factors.iter().fold(*c, |m, &(v, k)| m * x[v].powi(k));
            for (pos, &(v, k)) in factors.iter().enumerate() {
                let partial = factors
                    .iter()
                    .enumerate()
                    .fold(*c * f64::from(k) * x[v].powi(k - 1), |m, (q, &(w, kw))| if q == pos { m } else { m * x[w].powi(kw) });
                grad[v] += partial;
            }
        }
        value
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rat;

    #[test]
    fn arithmetic_and_gradient() {
        let x = Poly::var(2, 0);
        let y = Poly::var(2, 1);
        // (x + y)(x − y) = x² − y²
        let p = &(&x + &y) * &(&x - &y);
        assert_eq!(p.degree(), 2);
        assert_eq!(p.terms().count(), 2);
        assert_eq!(p.eval(&[rat(3, 1), rat(1, 2)]), rat(35, 4));
        let mut grad = [0.0; 2];
        let v = p.compile().eval_grad(&[3.0, 0.5], &mut grad);
        assert_eq!((v, grad), (8.75, [6.0, -1.0]));
        assert!((&p - &p).is_zero());
        let composed = Poly::compose(&[rat(1, 1), rat(0, 1), rat(2, 1)], &y);
        assert_eq!(composed.eval(&[rat(0, 1), rat(3, 1)]), rat(19, 1));
        assert_eq!(composed.variables().into_iter().collect::<Vec<_>>(), vec![1]);
    }
}
