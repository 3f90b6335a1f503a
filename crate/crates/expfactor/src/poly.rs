//! Multivariate polynomials with exact rational coefficients.

use std::collections::BTreeMap;
use std::fmt;

use num::{One, Zero};

use crate::rational::{rat_to_f64, Rat};

/// A polynomial in `nvars` variables over the rationals, stored as a sparse
/// map from exponent vectors to coefficients.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Poly {
    pub nvars: usize,
    pub terms: BTreeMap<Vec<u32>, Rat>,
}

impl Poly {
    pub fn zero(nvars: usize) -> Self {
        Poly {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: Rat) -> Self {
        let mut p = Poly::zero(nvars);
        if !c.is_zero() {
            p.terms.insert(vec![0; nvars], c);
        }
        p
    }

    pub fn one(nvars: usize) -> Self {
        Poly::constant(nvars, Rat::one())
    }

    pub fn var(nvars: usize, i: usize) -> Self {
        assert!(i < nvars);
        let mut e = vec![0u32; nvars];
        e[i] = 1;
        let mut p = Poly::zero(nvars);
        p.terms.insert(e, Rat::one());
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.keys().all(|e| e.iter().all(|&x| x == 0))
    }

    pub fn constant_term(&self) -> Rat {
        self.terms
            .get(&vec![0; self.nvars])
            .cloned()
            .unwrap_or_else(Rat::zero)
    }

    fn insert(&mut self, e: Vec<u32>, c: Rat) {
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(e).or_insert_with(Rat::zero);
        *entry += c;
        if entry.is_zero() {
            // re-fetch key to remove; easiest is retain pass below
        }
        self.terms.retain(|_, v| !v.is_zero());
    }

    pub fn add(&self, other: &Poly) -> Poly {
        assert_eq!(self.nvars, other.nvars);
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.insert(e.clone(), c.clone());
        }
        out
    }

    pub fn neg(&self) -> Poly {
        let mut out = self.clone();
        for v in out.terms.values_mut() {
            *v = -v.clone();
        }
        out
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.neg())
    }

    pub fn scale(&self, c: &Rat) -> Poly {
        if c.is_zero() {
            return Poly::zero(self.nvars);
        }
        let mut out = self.clone();
        for v in out.terms.values_mut() {
            *v = &*v * c;
        }
        out
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        assert_eq!(self.nvars, other.nvars);
        let mut out = Poly::zero(self.nvars);
        for (e1, c1) in &self.terms {
            for (e2, c2) in &other.terms {
                let e: Vec<u32> = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                out.insert(e, c1 * c2);
            }
        }
        out
    }

    /// Partial derivative with respect to variable `i`.
    pub fn diff(&self, i: usize) -> Poly {
        let mut out = Poly::zero(self.nvars);
        for (e, c) in &self.terms {
            if e[i] == 0 {
                continue;
            }
            let mut e2 = e.clone();
            e2[i] -= 1;
            out.insert(e2, c * Rat::from(num::BigInt::from(e[i])));
        }
        out
    }

    /// Substitute 0 for variable `i`.
    pub fn eval_var_zero(&self, i: usize) -> Poly {
        let mut out = Poly::zero(self.nvars);
        for (e, c) in &self.terms {
            if e[i] == 0 {
                out.insert(e.clone(), c.clone());
            }
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.nvars);
        self.terms
            .iter()
            .map(|(e, c)| {
                let mut t = rat_to_f64(c);
                for (xi, &ei) in x.iter().zip(e.iter()) {
                    if ei > 0 {
                        t *= xi.powi(ei as i32);
                    }
                }
                t
            })
            .sum()
    }

    /// Total degree; 0 for the zero polynomial.
    pub fn degree(&self) -> u32 {
        self.terms
            .keys()
            .map(|e| e.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    /// Extend to `nvars_new` variables, renaming variable `i` to `map[i]`.
    pub fn map_vars(&self, nvars_new: usize, map: &[usize]) -> Poly {
        assert_eq!(map.len(), self.nvars);
        let mut out = Poly::zero(nvars_new);
        for (e, c) in &self.terms {
            let mut e2 = vec![0u32; nvars_new];
            for (i, &ei) in e.iter().enumerate() {
                e2[map[i]] += ei;
            }
            out.insert(e2, c.clone());
        }
        out
    }

    /// Sum of absolute values of coefficients, in doubles.
    pub fn coeff_l1(&self) -> f64 {
        self.terms.values().map(|c| rat_to_f64(c).abs()).sum()
    }

    pub fn display_with(&self, names: &[String]) -> String {
        if self.is_zero() {
            return "0".to_string();
        }
        let mut parts = Vec::new();
        for (e, c) in &self.terms {
            let mut s = String::new();
            let cstr = c.to_string();
            s.push_str(&cstr);
            for (i, &ei) in e.iter().enumerate() {
                if ei == 1 {
                    s.push_str(&format!("*{}", names[i]));
                } else if ei > 1 {
                    s.push_str(&format!("*{}^{}", names[i], ei));
                }
            }
            parts.push(s);
        }
        parts.join(" + ")
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = (0..self.nvars).map(|i| format!("x{}", i)).collect();
        write!(f, "{}", self.display_with(&names))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{rat, rat_i};

    #[test]
    fn arithmetic_and_diff() {
        let n = 2;
        let x = Poly::var(n, 0);
        let y = Poly::var(n, 1);
        // (x + y)^2 = x^2 + 2xy + y^2
        let s = x.add(&y);
        let sq = s.mul(&s);
        assert_eq!(sq.eval(&[2.0, 3.0]), 25.0);
        let dx = sq.diff(0); // 2x + 2y
        assert_eq!(dx.eval(&[2.0, 3.0]), 10.0);
        let c = Poly::constant(n, rat(1, 2));
        assert_eq!(c.mul(&x).eval(&[4.0, 0.0]), 2.0);
    }

    #[test]
    fn eval_var_zero_drops_terms() {
        let n = 2;
        let p = Poly::var(n, 0).mul(&Poly::var(n, 1)).add(&Poly::var(n, 1));
        let q = p.eval_var_zero(0); // only y survives
        assert_eq!(q, Poly::var(n, 1));
        assert_eq!(p.diff(0).eval_var_zero(0), Poly::var(n, 1));
        let _ = rat_i(1);
    }
}
