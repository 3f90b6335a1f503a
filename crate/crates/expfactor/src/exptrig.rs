//! Exp-trig-polynomials p(x) e^{a·x} {cos,sin}(b·x) with exact rational
//! coefficients and frequencies, differential operators with such
//! coefficients, and the symbolic exponential exp(x·B) of a rational matrix.
//!
//! The type is closed under addition, multiplication (product-to-sum for the
//! oscillatory factors) and partial differentiation; `growth_rate` certifies
//! an exponential bound |f(X)| <= C e^{rate |X|}.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use num::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poly::Poly;
use crate::rational::{crat_inverse, lift_f64, rat, rat_to_f64, CRat, Rat};

#[derive(Debug, Error)]
pub enum ExpTrigError {
    #[error("finite-difference stencil leaves the sampled window")]
    StencilOutOfWindow,
    #[error("matrix eigenvalues could not be lifted to exact values")]
    EigenLiftFailed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Phase {
    Cos,
    Sin,
}

type TermKey = (Vec<Rat>, Vec<Rat>, Phase);

/// Finite sum of terms p(x) e^{a·x} cos(b·x) or p(x) e^{a·x} sin(b·x) in
/// `dim` real variables. Keys are normalized so equal functions with equal
/// linear frequencies compare equal: the first nonzero entry of b is positive
/// (cos is even, sin odd), and sin terms with b = 0 are dropped.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "ExpTrigRepr", into = "ExpTrigRepr")]
pub struct ExpTrigPoly {
    pub dim: usize,
    pub terms: BTreeMap<TermKey, Poly>,
}

impl ExpTrigPoly {
    pub fn zero(dim: usize) -> Self {
        ExpTrigPoly {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn from_poly(p: Poly) -> Self {
        let dim = p.nvars;
        let mut out = ExpTrigPoly::zero(dim);
        out.insert_term(vec![Rat::zero(); dim], vec![Rat::zero(); dim], Phase::Cos, p);
        out
    }

    pub fn constant(dim: usize, c: Rat) -> Self {
        ExpTrigPoly::from_poly(Poly::constant(dim, c))
    }

    pub fn one(dim: usize) -> Self {
        ExpTrigPoly::constant(dim, Rat::one())
    }

    pub fn var(dim: usize, i: usize) -> Self {
        ExpTrigPoly::from_poly(Poly::var(dim, i))
    }

    /// Single term p(x) e^{a·x} phase(b·x).
    pub fn term(p: Poly, a: Vec<Rat>, b: Vec<Rat>, phase: Phase) -> Self {
        let dim = p.nvars;
        assert_eq!(a.len(), dim);
        assert_eq!(b.len(), dim);
        let mut out = ExpTrigPoly::zero(dim);
        out.insert_term(a, b, phase, p);
        out
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    fn insert_term(&mut self, a: Vec<Rat>, mut b: Vec<Rat>, phase: Phase, mut p: Poly) {
        if p.is_zero() {
            return;
        }
        match b.iter().find(|x| !x.is_zero()) {
            None => {
                if phase == Phase::Sin {
                    return; // sin(0) = 0
                }
            }
            Some(first) => {
                if first.is_negative() {
                    for x in b.iter_mut() {
                        *x = -x.clone();
                    }
                    if phase == Phase::Sin {
                        p = p.neg();
                    }
                }
            }
        }
        let key = (a, b, phase);
        let entry = self
            .terms
            .entry(key.clone())
            .or_insert_with(|| Poly::zero(self.dim));
        *entry = entry.add(&p);
        if entry.is_zero() {
            self.terms.remove(&key);
        }
    }

    pub fn add(&self, other: &ExpTrigPoly) -> ExpTrigPoly {
        assert_eq!(self.dim, other.dim);
        let mut out = self.clone();
        for ((a, b, ph), p) in &other.terms {
            out.insert_term(a.clone(), b.clone(), *ph, p.clone());
        }
        out
    }

    pub fn neg(&self) -> ExpTrigPoly {
        let mut out = self.clone();
        for p in out.terms.values_mut() {
            *p = p.neg();
        }
        out
    }

    pub fn sub(&self, other: &ExpTrigPoly) -> ExpTrigPoly {
        self.add(&other.neg())
    }

    pub fn scale(&self, c: &Rat) -> ExpTrigPoly {
        if c.is_zero() {
            return ExpTrigPoly::zero(self.dim);
        }
        let mut out = self.clone();
        for p in out.terms.values_mut() {
            *p = p.scale(c);
        }
        out
    }

    pub fn mul_poly(&self, q: &Poly) -> ExpTrigPoly {
        let mut out = ExpTrigPoly::zero(self.dim);
        for ((a, b, ph), p) in &self.terms {
            out.insert_term(a.clone(), b.clone(), *ph, p.mul(q));
        }
        out
    }

    /// Exact product; trig factors are linearized by the product-to-sum
    /// identities so the result stays inside the type.
    pub fn mul(&self, other: &ExpTrigPoly) -> ExpTrigPoly {
        assert_eq!(self.dim, other.dim);
        let half = rat(1, 2);
        let mut out = ExpTrigPoly::zero(self.dim);
        for ((a1, b1, ph1), p1) in &self.terms {
            for ((a2, b2, ph2), p2) in &other.terms {
                let p = p1.mul(p2).scale(&half);
                let a: Vec<Rat> = a1.iter().zip(a2).map(|(x, y)| x + y).collect();
                let bsum: Vec<Rat> = b1.iter().zip(b2).map(|(x, y)| x + y).collect();
                let bdif: Vec<Rat> = b1.iter().zip(b2).map(|(x, y)| x - y).collect();
                match (ph1, ph2) {
                    (Phase::Cos, Phase::Cos) => {
                        // cos A cos B = [cos(A-B) + cos(A+B)] / 2
                        out.insert_term(a.clone(), bdif, Phase::Cos, p.clone());
                        out.insert_term(a, bsum, Phase::Cos, p);
                    }
                    (Phase::Sin, Phase::Sin) => {
                        // sin A sin B = [cos(A-B) - cos(A+B)] / 2
                        out.insert_term(a.clone(), bdif, Phase::Cos, p.clone());
                        out.insert_term(a, bsum, Phase::Cos, p.neg());
                    }
                    (Phase::Sin, Phase::Cos) => {
                        // sin A cos B = [sin(A+B) + sin(A-B)] / 2
                        out.insert_term(a.clone(), bsum, Phase::Sin, p.clone());
                        out.insert_term(a, bdif, Phase::Sin, p);
                    }
                    (Phase::Cos, Phase::Sin) => {
                        // cos A sin B = [sin(A+B) - sin(A-B)] / 2
                        out.insert_term(a.clone(), bsum, Phase::Sin, p.clone());
                        out.insert_term(a, bdif, Phase::Sin, p.neg());
                    }
                }
            }
        }
        out
    }

    /// Exact partial derivative with respect to variable `i`.
    pub fn diff(&self, i: usize) -> ExpTrigPoly {
        assert!(i < self.dim);
        let mut out = ExpTrigPoly::zero(self.dim);
        for ((a, b, ph), p) in &self.terms {
            let same = p.diff(i).add(&p.scale(&a[i]));
            out.insert_term(a.clone(), b.clone(), *ph, same);
            if !b[i].is_zero() {
                match ph {
                    Phase::Cos => {
                        out.insert_term(a.clone(), b.clone(), Phase::Sin, p.scale(&(-&b[i])));
                    }
                    Phase::Sin => {
                        out.insert_term(a.clone(), b.clone(), Phase::Cos, p.scale(&b[i]));
                    }
                }
            }
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim);
        self.terms
            .iter()
            .map(|((a, b, ph), p)| {
                let ax: f64 = a.iter().zip(x).map(|(c, v)| rat_to_f64(c) * v).sum();
                let bx: f64 = b.iter().zip(x).map(|(c, v)| rat_to_f64(c) * v).sum();
                let trig = match ph {
                    Phase::Cos => bx.cos(),
                    Phase::Sin => bx.sin(),
                };
                p.eval(x) * ax.exp() * trig
            })
            .sum()
    }

    /// Certified exponential growth rate: |f(X)| <= growth_constant(R) *
    /// e^{growth_rate * |X|} for |X| <= R (and globally with R = degree bound
    /// absorbed into the exponent).
    pub fn growth_rate(&self) -> f64 {
        self.terms
            .keys()
            .map(|(a, _, _)| a.iter().map(|c| rat_to_f64(c).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Constant C with |f(X)| <= C e^{growth_rate |X|} on the ball |X| <= r.
    pub fn growth_constant(&self, r: f64) -> f64 {
        let r = r.max(1.0);
        self.terms
            .values()
            .map(|p| p.coeff_l1() * r.powi(p.degree() as i32))
            .sum()
    }

    /// Re-embed into `dim_new` variables, variable `i` becoming `map[i]`.
    pub fn map_vars(&self, dim_new: usize, map: &[usize]) -> ExpTrigPoly {
        assert_eq!(map.len(), self.dim);
        let mut out = ExpTrigPoly::zero(dim_new);
        for ((a, b, ph), p) in &self.terms {
            let mut a2 = vec![Rat::zero(); dim_new];
            let mut b2 = vec![Rat::zero(); dim_new];
            for (i, &t) in map.iter().enumerate() {
                a2[t] = &a2[t] + &a[i];
                b2[t] = &b2[t] + &b[i];
            }
            out.insert_term(a2, b2, *ph, p.map_vars(dim_new, map));
        }
        out
    }

    pub fn display_with(&self, names: &[String]) -> String {
        if self.is_zero() {
            return "0".to_string();
        }
        let lin = |v: &[Rat]| -> String {
            let mut parts = Vec::new();
            for (i, c) in v.iter().enumerate() {
                if c.is_zero() {
                    continue;
                }
                if c.is_one() {
                    parts.push(names[i].clone());
                } else {
                    parts.push(format!("{}*{}", c, names[i]));
                }
            }
            parts.join(" + ")
        };
        let mut parts = Vec::new();
        for ((a, b, ph), p) in &self.terms {
            let mut s = format!("({})", p.display_with(names));
            if a.iter().any(|c| !c.is_zero()) {
                s.push_str(&format!(" * exp({})", lin(a)));
            }
            if b.iter().any(|c| !c.is_zero()) {
                let f = match ph {
                    Phase::Cos => "cos",
                    Phase::Sin => "sin",
                };
                s.push_str(&format!(" * {}({})", f, lin(b)));
            }
            parts.push(s);
        }
        parts.join(" + ")
    }
}

impl fmt::Display for ExpTrigPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = (0..self.dim).map(|i| format!("x{}", i)).collect();
        write!(f, "{}", self.display_with(&names))
    }
}

// --- JSON shape: a plain term list with rationals as strings ---

#[derive(Serialize, Deserialize)]
struct TermRepr {
    a: Vec<String>,
    b: Vec<String>,
    phase: String,
    poly: Vec<(Vec<u32>, String)>,
}

#[derive(Serialize, Deserialize)]
struct ExpTrigRepr {
    dim: usize,
    terms: Vec<TermRepr>,
}

impl From<ExpTrigPoly> for ExpTrigRepr {
    fn from(f: ExpTrigPoly) -> Self {
        let terms = f
            .terms
            .iter()
            .map(|((a, b, ph), p)| TermRepr {
                a: a.iter().map(|c| c.to_string()).collect(),
                b: b.iter().map(|c| c.to_string()).collect(),
                phase: match ph {
                    Phase::Cos => "cos".into(),
                    Phase::Sin => "sin".into(),
                },
                poly: p
                    .terms
                    .iter()
                    .map(|(e, c)| (e.clone(), c.to_string()))
                    .collect(),
            })
            .collect();
        ExpTrigRepr { dim: f.dim, terms }
    }
}

impl From<ExpTrigRepr> for ExpTrigPoly {
    fn from(r: ExpTrigRepr) -> Self {
        let parse = |s: &str| crate::fixtures::parse_rat(s).expect("bad rational in term list");
        let mut out = ExpTrigPoly::zero(r.dim);
        for t in &r.terms {
            let mut p = Poly::zero(r.dim);
            for (e, c) in &t.poly {
                p = p.add(&Poly {
                    nvars: r.dim,
                    terms: std::iter::once((e.clone(), parse(c))).collect(),
                });
            }
            let a: Vec<Rat> = t.a.iter().map(|s| parse(s)).collect();
            let b: Vec<Rat> = t.b.iter().map(|s| parse(s)).collect();
            let ph = if t.phase == "sin" { Phase::Sin } else { Phase::Cos };
            out.insert_term(a, b, ph, p);
        }
        out
    }
}

/// A differential operator sum_alpha f_alpha(x) ∂^alpha with exp-trig
/// coefficients, stored as (coefficient, derivative multi-index) pairs.
#[derive(Clone, Debug)]
pub struct DiffOp {
    pub dim: usize,
    pub terms: Vec<(ExpTrigPoly, Vec<u32>)>,
}

impl DiffOp {
    pub fn zero(dim: usize) -> Self {
        DiffOp { dim, terms: vec![] }
    }

    pub fn identity(dim: usize) -> Self {
        DiffOp {
            dim,
            terms: vec![(ExpTrigPoly::one(dim), vec![0; dim])],
        }
    }

    pub fn partial(dim: usize, i: usize) -> Self {
        let mut alpha = vec![0u32; dim];
        alpha[i] = 1;
        DiffOp {
            dim,
            terms: vec![(ExpTrigPoly::one(dim), alpha)],
        }
    }

    /// sum_i coeffs[i] ∂_i + zeroth.
    pub fn first_order(coeffs: Vec<ExpTrigPoly>, zeroth: Option<ExpTrigPoly>) -> Self {
        let dim = coeffs.len();
        let mut terms = Vec::new();
        for (i, c) in coeffs.into_iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let mut alpha = vec![0u32; dim];
            alpha[i] = 1;
            terms.push((c, alpha));
        }
        if let Some(z) = zeroth {
            if !z.is_zero() {
                terms.push((z, vec![0; dim]));
            }
        }
        DiffOp { dim, terms }
    }

    pub fn add(&self, other: &DiffOp) -> DiffOp {
        assert_eq!(self.dim, other.dim);
        let mut out = self.clone();
        out.terms.extend(other.terms.clone());
        out.normalize()
    }

    pub fn scale(&self, c: &Rat) -> DiffOp {
        DiffOp {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .map(|(f, a)| (f.scale(c), a.clone()))
                .collect(),
        }
    }

    fn normalize(mut self) -> DiffOp {
        let mut merged: BTreeMap<Vec<u32>, ExpTrigPoly> = BTreeMap::new();
        for (f, alpha) in self.terms.drain(..) {
            let entry = merged
                .entry(alpha)
                .or_insert_with(|| ExpTrigPoly::zero(self.dim));
            *entry = entry.add(&f);
        }
        DiffOp {
            dim: self.dim,
            terms: merged
                .into_iter()
                .filter(|(_, f)| !f.is_zero())
                .map(|(a, f)| (f, a))
                .collect(),
        }
    }

    pub fn order(&self) -> u32 {
        self.terms
            .iter()
            .map(|(_, a)| a.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    /// Operator composition self ∘ other by the Leibniz rule:
    /// f ∂^α (g ∂^β u) = f Σ_{γ≤α} C(α,γ) ∂^γ(g) ∂^{α−γ+β} u.
    pub fn compose(&self, other: &DiffOp) -> DiffOp {
        assert_eq!(self.dim, other.dim);
        let mut out = DiffOp::zero(self.dim);
        for (f, alpha) in &self.terms {
            for (g, beta) in &other.terms {
                for gamma in sub_multi_indices(alpha) {
                    let coef = multi_binomial(alpha, &gamma);
                    let mut dg = g.clone();
                    for (i, &gi) in gamma.iter().enumerate() {
                        for _ in 0..gi {
                            dg = dg.diff(i);
                        }
                    }
                    if dg.is_zero() {
                        continue;
                    }
                    let coeff = f.mul(&dg).scale(&coef);
                    let idx: Vec<u32> = alpha
                        .iter()
                        .zip(&gamma)
                        .zip(beta)
                        .map(|((a, g), b)| a - g + b)
                        .collect();
                    out.terms.push((coeff, idx));
                }
            }
        }
        out.normalize()
    }

    /// Symbolic application to an exp-trig-polynomial.
    pub fn apply(&self, f: &ExpTrigPoly) -> ExpTrigPoly {
        assert_eq!(self.dim, f.dim);
        let mut out = ExpTrigPoly::zero(self.dim);
        for (c, alpha) in &self.terms {
            let mut df = f.clone();
            for (i, &ai) in alpha.iter().enumerate() {
                for _ in 0..ai {
                    df = df.diff(i);
                }
            }
            out = out.add(&c.mul(&df));
        }
        out
    }

    /// Numeric application to a sampled function at (the grid node nearest
    /// to) `point`, by iterated second-order central differences.
    pub fn apply_numeric(&self, f: &SampledFn, point: &[f64]) -> Result<f64, ExpTrigError> {
        assert_eq!(point.len(), self.dim);
        let idx = f.nearest_node(point)?;
        let x = f.node_coords(&idx);
        let mut acc = 0.0;
        for (c, alpha) in &self.terms {
            acc += c.eval(&x) * f.central_difference(&idx, alpha)?;
        }
        Ok(acc)
    }
}

fn sub_multi_indices(alpha: &[u32]) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    for &a in alpha {
        let mut next = Vec::new();
        for prefix in &out {
            for g in 0..=a {
                let mut p = prefix.clone();
                p.push(g);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

fn multi_binomial(alpha: &[u32], gamma: &[u32]) -> Rat {
    let mut acc = Rat::one();
    for (&a, &g) in alpha.iter().zip(gamma) {
        let mut c: u64 = 1;
        for i in 0..g as u64 {
            c = c * (a as u64 - i) / (i + 1);
        }
        acc *= Rat::from(num::BigInt::from(c));
    }
    acc
}

/// A function sampled on a uniform tensor grid, for finite-difference
/// application of operators.
#[derive(Clone, Debug)]
pub struct SampledFn {
    pub origin: Vec<f64>,
    pub step: Vec<f64>,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl SampledFn {
    pub fn from_fn<F: Fn(&[f64]) -> f64>(
        origin: Vec<f64>,
        step: Vec<f64>,
        shape: Vec<usize>,
        f: F,
    ) -> Self {
        let total: usize = shape.iter().product();
        let mut values = Vec::with_capacity(total);
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..total {
            let x: Vec<f64> = idx
                .iter()
                .zip(&origin)
                .zip(&step)
                .map(|((&i, o), h)| o + i as f64 * h)
                .collect();
            values.push(f(&x));
            for d in (0..shape.len()).rev() {
                idx[d] += 1;
                if idx[d] < shape[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        SampledFn {
            origin,
            step,
            shape,
            values,
        }
    }

    fn flat(&self, idx: &[i64]) -> Result<usize, ExpTrigError> {
        let mut f = 0usize;
        for (d, &i) in idx.iter().enumerate() {
            if i < 0 || i as usize >= self.shape[d] {
                return Err(ExpTrigError::StencilOutOfWindow);
            }
            f = f * self.shape[d] + i as usize;
        }
        Ok(f)
    }

    fn nearest_node(&self, point: &[f64]) -> Result<Vec<i64>, ExpTrigError> {
        point
            .iter()
            .enumerate()
            .map(|(d, &x)| {
                let i = ((x - self.origin[d]) / self.step[d]).round() as i64;
                if i < 0 || i as usize >= self.shape[d] {
                    Err(ExpTrigError::StencilOutOfWindow)
                } else {
                    Ok(i)
                }
            })
            .collect()
    }

    fn node_coords(&self, idx: &[i64]) -> Vec<f64> {
        idx.iter()
            .enumerate()
            .map(|(d, &i)| self.origin[d] + i as f64 * self.step[d])
            .collect()
    }

    fn central_difference(&self, idx: &[i64], alpha: &[u32]) -> Result<f64, ExpTrigError> {
        match alpha.iter().position(|&a| a > 0) {
            None => Ok(self.values[self.flat(idx)?]),
            Some(d) => {
                let mut lower = alpha.to_vec();
                lower[d] -= 1;
                let mut up = idx.to_vec();
                up[d] += 1;
                let mut down = idx.to_vec();
                down[d] -= 1;
                let hi = self.central_difference(&up, &lower)?;
                let lo = self.central_difference(&down, &lower)?;
                Ok((hi - lo) / (2.0 * self.step[d]))
            }
        }
    }
}

/// Symbolic exp(x·B) for an exact rational square matrix B, as a matrix of
/// one-variable exp-trig polynomials.
///
/// Nilpotent matrices get the finite Taylor series (exact). Otherwise the
/// eigenvalues are computed numerically, lifted to exact complex rationals,
/// and exp(x·B) = Σ_k f_k(x) B^k is solved from the confluent Vandermonde
/// system over the lifted spectrum; the result is verified against a numeric
/// matrix exponential before being returned.
pub fn exp_rat_matrix(b: &[Vec<Rat>], tol: f64) -> Result<Vec<Vec<ExpTrigPoly>>, ExpTrigError> {
    let n = b.len();
    if n == 0 {
        return Ok(vec![]);
    }
    // powers of B
    let mut powers: Vec<Vec<Vec<Rat>>> = vec![rat_identity(n)];
    for k in 1..=n {
        powers.push(rat_matmul(&powers[k - 1], b));
    }
    if powers[n].iter().flatten().all(|x| x.is_zero()) {
        // nilpotent: finite Taylor series
        let mut fact = Rat::one();
        let mut out = vec![vec![ExpTrigPoly::zero(1); n]; n];
        for (k, pk) in powers.iter().enumerate().take(n) {
            if k > 0 {
                fact *= Rat::from(num::BigInt::from(k as u64));
            }
            let xk = {
                let mut e = Poly::one(1);
                for _ in 0..k {
                    e = e.mul(&Poly::var(1, 0));
                }
                e.scale(&(Rat::one() / &fact))
            };
            for r in 0..n {
                for s in 0..n {
                    if !pk[r][s].is_zero() {
                        out[r][s] = out[r][s].add(&ExpTrigPoly::from_poly(xk.scale(&pk[r][s])));
                    }
                }
            }
        }
        return Ok(out);
    }

    // numeric spectrum, clustered and lifted to exact complex rationals
    let bf = DMatrix::<f64>::from_fn(n, n, |r, c| rat_to_f64(&b[r][c]));
    let eigs = bf.complex_eigenvalues();
    let mut clusters: Vec<(f64, f64, usize)> = Vec::new(); // (re, im, mult)
    for e in eigs.iter() {
        let scale = 1.0 + e.norm();
        match clusters
            .iter_mut()
            .find(|(re, im, _)| ((re - e.re).powi(2) + (im - e.im).powi(2)).sqrt() < 1e-6 * scale)
        {
            Some(c) => c.2 += 1,
            None => clusters.push((e.re, e.im, 1)),
        }
    }
    // lift, forcing exact conjugate symmetry
    let lift_tol = 1e-9;
    let mut spectrum: Vec<(CRat, usize)> = Vec::new();
    for &(re, im, mult) in &clusters {
        if im < -1e-9 {
            continue; // handled by the conjugate cluster
        }
        let a = lift_f64(re, lift_tol, 1_000_000).ok_or(ExpTrigError::EigenLiftFailed)?;
        if im.abs() <= 1e-9 {
            spectrum.push((CRat::new(a, Rat::zero()), mult));
        } else {
            let bb = lift_f64(im, lift_tol, 1_000_000).ok_or(ExpTrigError::EigenLiftFailed)?;
            let conj_mult = clusters
                .iter()
                .find(|(r2, i2, _)| {
                    ((r2 - re).powi(2) + (i2 + im).powi(2)).sqrt() < 1e-6 * (1.0 + re.abs() + im.abs())
                })
                .map(|c| c.2)
                .ok_or(ExpTrigError::EigenLiftFailed)?;
            if conj_mult != mult {
                return Err(ExpTrigError::EigenLiftFailed);
            }
            spectrum.push((CRat::new(a.clone(), bb.clone()), mult));
            spectrum.push((CRat::new(a, -bb), mult));
        }
    }
    if spectrum.iter().map(|(_, m)| m).sum::<usize>() != n {
        return Err(ExpTrigError::EigenLiftFailed);
    }

    // confluent Vandermonde rows: for eigenvalue λ with multiplicity m and
    // derivative order d < m, Σ_k f_k (k)_d λ^{k-d} = x^d e^{λx}
    let czero = CRat::new(Rat::zero(), Rat::zero());
    let cone = CRat::new(Rat::one(), Rat::zero());
    let mut rows: Vec<Vec<CRat>> = Vec::with_capacity(n);
    let mut atoms: Vec<(CRat, u32)> = Vec::with_capacity(n); // (λ, power d)
    for (lam, mult) in &spectrum {
        // λ^0..λ^{n-1}
        let mut lam_pow = vec![cone.clone()];
        for _ in 1..n {
            lam_pow.push(lam_pow.last().unwrap().clone() * lam.clone());
        }
        for d in 0..*mult {
            let mut row = vec![czero.clone(); n];
            for (k, r) in row.iter_mut().enumerate() {
                if k < d {
                    continue;
                }
                let mut falling: u64 = 1;
                for i in 0..d as u64 {
                    falling *= k as u64 - i;
                }
                let f = Rat::from(num::BigInt::from(falling));
                *r = lam_pow[k - d].clone() * CRat::new(f, Rat::zero());
            }
            rows.push(row);
            atoms.push((lam.clone(), d as u32));
        }
    }
    let vinv = crat_inverse(&rows).ok_or(ExpTrigError::EigenLiftFailed)?;

    // entry (r,s): Σ_k Σ_rows vinv[k][row] B^k[r][s] x^{d(row)} e^{λ(row) x}
    let mut out = vec![vec![ExpTrigPoly::zero(1); n]; n];
    for r in 0..n {
        for s in 0..n {
            // complex coefficient per atom (a, b, d)
            let mut accum: BTreeMap<(Rat, Rat, u32), CRat> = BTreeMap::new();
            for k in 0..n {
                if powers[k][r][s].is_zero() {
                    continue;
                }
                let scale = CRat::new(powers[k][r][s].clone(), Rat::zero());
                for (row, (lam, d)) in atoms.iter().enumerate() {
                    let c = vinv[k][row].clone() * scale.clone();
                    if c.is_zero() {
                        continue;
                    }
                    let key = (lam.re.clone(), lam.im.clone(), *d);
                    let entry = accum.entry(key).or_insert_with(|| czero.clone());
                    *entry = entry.clone() + c;
                }
            }
            let mut f = ExpTrigPoly::zero(1);
            for ((a, bb, d), c) in &accum {
                if c.is_zero() {
                    continue;
                }
                let xd = {
                    let mut e = Poly::one(1);
                    for _ in 0..*d {
                        e = e.mul(&Poly::var(1, 0));
                    }
                    e
                };
                if bb.is_zero() {
                    if !c.im.is_zero() {
                        return Err(ExpTrigError::EigenLiftFailed);
                    }
                    f = f.add(&ExpTrigPoly::term(
                        xd.scale(&c.re),
                        vec![a.clone()],
                        vec![Rat::zero()],
                        Phase::Cos,
                    ));
                } else if bb.is_positive() {
                    // pair with the conjugate atom: result is
                    // x^d e^{ax} (2 Re c cos(bx) - 2 Im c sin(bx))
                    let partner = accum
                        .get(&(a.clone(), -bb.clone(), *d))
                        .ok_or(ExpTrigError::EigenLiftFailed)?;
                    if partner.re != c.re || partner.im != -c.im.clone() {
                        return Err(ExpTrigError::EigenLiftFailed);
                    }
                    let two = Rat::from(num::BigInt::from(2));
                    f = f.add(&ExpTrigPoly::term(
                        xd.scale(&(&c.re * &two)),
                        vec![a.clone()],
                        vec![bb.clone()],
                        Phase::Cos,
                    ));
                    f = f.add(&ExpTrigPoly::term(
                        xd.scale(&(-(&c.im * &two))),
                        vec![a.clone()],
                        vec![bb.clone()],
                        Phase::Sin,
                    ));
                }
            }
            out[r][s] = f;
        }
    }

    // verify against the numeric matrix exponential
    for &x in &[0.3f64, 1.0, -0.7] {
        let num_exp = crate::numeric::expm(&(bf.clone() * x));
        for r in 0..n {
            for s in 0..n {
                let sym = out[r][s].eval(&[x]);
                if (sym - num_exp[(r, s)]).abs() > tol * (1.0 + num_exp[(r, s)].abs()) {
                    return Err(ExpTrigError::EigenLiftFailed);
                }
            }
        }
    }
    Ok(out)
}

pub fn rat_identity(n: usize) -> Vec<Vec<Rat>> {
    let mut m = vec![vec![Rat::zero(); n]; n];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = Rat::one();
    }
    m
}

pub fn rat_matmul(a: &[Vec<Rat>], b: &[Vec<Rat>]) -> Vec<Vec<Rat>> {
    let n = a.len();
    let p = b[0].len();
    let mut out = vec![vec![Rat::zero(); p]; n];
    for i in 0..n {
        for (k, aik) in a[i].iter().enumerate() {
            if aik.is_zero() {
                continue;
            }
            for j in 0..p {
                if !b[k][j].is_zero() {
                    out[i][j] = &out[i][j] + &(aik * &b[k][j]);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat_i;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t_exp_t() -> ExpTrigPoly {
        // t e^t in one variable
        ExpTrigPoly::term(
            Poly::var(1, 0),
            vec![rat_i(1)],
            vec![rat_i(0)],
            Phase::Cos,
        )
    }

    fn exp_cos() -> ExpTrigPoly {
        // e^t cos t
        ExpTrigPoly::term(Poly::one(1), vec![rat_i(1)], vec![rat_i(1)], Phase::Cos)
    }

    fn random_etp(rng: &mut ChaCha8Rng, dim: usize) -> ExpTrigPoly {
        let mut f = ExpTrigPoly::zero(dim);
        for _ in 0..rng.gen_range(1..4) {
            let mut p = Poly::zero(dim);
            for _ in 0..rng.gen_range(1..3) {
                let e: Vec<u32> = (0..dim).map(|_| rng.gen_range(0..3)).collect();
                p = p.add(&Poly {
                    nvars: dim,
                    terms: std::iter::once((e, rat(rng.gen_range(-4i64..=4), 2))).collect(),
                });
            }
            let a: Vec<Rat> = (0..dim).map(|_| rat(rng.gen_range(-2i64..=2), 2)).collect();
            let b: Vec<Rat> = (0..dim).map(|_| rat(rng.gen_range(-2i64..=2), 1)).collect();
            let ph = if rng.gen_bool(0.5) { Phase::Cos } else { Phase::Sin };
            f = f.add(&ExpTrigPoly::term(p, a, b, ph));
        }
        f
    }

    #[test]
    fn diff_product_rule() {
        // d/dt (t e^t) = (1 + t) e^t
        let d = t_exp_t().diff(0);
        let expected = ExpTrigPoly::term(
            Poly::one(1).add(&Poly::var(1, 0)),
            vec![rat_i(1)],
            vec![rat_i(0)],
            Phase::Cos,
        );
        assert_eq!(d, expected);
    }

    #[test]
    fn diff_exp_cos() {
        // d/dt (e^t cos t) = e^t (cos t - sin t)
        let d = exp_cos().diff(0);
        let expected = ExpTrigPoly::term(Poly::one(1), vec![rat_i(1)], vec![rat_i(1)], Phase::Cos)
            .add(&ExpTrigPoly::term(
                Poly::one(1).neg(),
                vec![rat_i(1)],
                vec![rat_i(1)],
                Phase::Sin,
            ));
        assert_eq!(d, expected);
    }

    #[test]
    fn diff_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let f = random_etp(&mut rng, 2);
            let df = f.diff(0);
            for _ in 0..5 {
                let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                let h = 1e-5;
                let fd = (f.eval(&[x[0] + h, x[1]]) - f.eval(&[x[0] - h, x[1]])) / (2.0 * h);
                let sym = df.eval(&x);
                assert!(
                    (fd - sym).abs() <= 1e-6 * (1.0 + sym.abs()),
                    "fd {} sym {}",
                    fd,
                    sym
                );
            }
        }
    }

    #[test]
    fn mul_linearizes_squares() {
        // (e^t cos t)^2 = e^{2t}(1 + cos 2t)/2
        let sq = exp_cos().mul(&exp_cos());
        for i in 0..50 {
            let t = -2.0 + 4.0 * i as f64 / 49.0;
            let expect = (2.0 * t).exp() * (1.0 + (2.0 * t).cos()) / 2.0;
            assert_relative_eq!(sq.eval(&[t]), expect, epsilon = 1e-10, max_relative = 1e-10);
        }
        // product-to-sum must not leave plain squares behind
        assert!(sq.terms.len() <= 2);
    }

    #[test]
    fn mul_by_one_and_growth() {
        let f = t_exp_t();
        assert_eq!(f.mul(&ExpTrigPoly::one(1)), f);
        // growth_rate(t^2 e^{3t} * e^{-t}) = 2
        let g = ExpTrigPoly::term(
            Poly::var(1, 0).mul(&Poly::var(1, 0)),
            vec![rat_i(3)],
            vec![rat_i(0)],
            Phase::Cos,
        );
        let h = ExpTrigPoly::term(Poly::one(1), vec![rat_i(-1)], vec![rat_i(0)], Phase::Cos);
        assert_eq!(g.mul(&h).growth_rate(), 2.0);
    }

    #[test]
    fn eval_is_multiplicative() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let f = random_etp(&mut rng, 2);
            let g = random_etp(&mut rng, 2);
            let fg = f.mul(&g);
            for _ in 0..20 {
                let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                let lhs = fg.eval(&x);
                let rhs = f.eval(&x) * g.eval(&x);
                assert!(
                    (lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()),
                    "lhs {} rhs {}",
                    lhs,
                    rhs
                );
            }
        }
    }

    #[test]
    fn growth_certificate() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let f = random_etp(&mut rng, 2);
            let rate = f.growth_rate();
            let c = f.growth_constant(10.0);
            for _ in 0..50 {
                let x = [rng.gen_range(-7.0..7.0), rng.gen_range(-7.0..7.0)];
                let norm = f64::sqrt(x[0] * x[0] + x[1] * x[1]);
                assert!(f.eval(&x).abs() <= c * (rate * norm).exp() * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn diff_does_not_increase_growth_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let f = random_etp(&mut rng, 2);
            assert!(f.diff(0).growth_rate() <= f.growth_rate() + 1e-15);
        }
    }

    #[test]
    fn apply_first_order() {
        // (∂_a - n ∂_n) applied to f(a, n) = n gives -n
        let op = DiffOp::first_order(
            vec![
                ExpTrigPoly::one(2),
                ExpTrigPoly::var(2, 1).neg(),
            ],
            None,
        );
        let f = ExpTrigPoly::var(2, 1);
        assert_eq!(op.apply(&f), f.neg());
        // identity operator
        let id = DiffOp::identity(2);
        assert_eq!(id.apply(&f), f);
    }

    #[test]
    fn compose_is_noncommutative_leibniz() {
        // one variable: D = ∂, M = x ∂
        let d = DiffOp::partial(1, 0);
        let m = DiffOp::first_order(vec![ExpTrigPoly::var(1, 0)], None);
        let f = ExpTrigPoly::from_poly(Poly::var(1, 0).mul(&Poly::var(1, 0)).mul(&Poly::var(1, 0)));
        // D(M f) = d/dx (x f') = f' + x f'' ; at f = x^3: 3x^2 + 6x^2 = 9x^2
        let dm = d.compose(&m).apply(&f);
        assert_relative_eq!(dm.eval(&[2.0]), 36.0, epsilon = 1e-12);
        // M(D f) = x f'' = 6x^2 ; at x = 2: 24
        let md = m.compose(&d).apply(&f);
        assert_relative_eq!(md.eval(&[2.0]), 24.0, epsilon = 1e-12);
    }

    #[test]
    fn numeric_matches_symbolic() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let op = DiffOp::first_order(
            vec![ExpTrigPoly::one(2), ExpTrigPoly::var(2, 0).neg()],
            Some(ExpTrigPoly::var(2, 1)),
        );
        let f = random_etp(&mut rng, 2);
        let symbolic = op.apply(&f);
        let h = 1e-4;
        // sample small local windows around each test point
        for _ in 0..50 {
            let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let local = SampledFn::from_fn(
                vec![x[0] - 3.0 * h, x[1] - 3.0 * h],
                vec![h, h],
                vec![7, 7],
                |y| f.eval(y),
            );
            let num = op.apply_numeric(&local, &x).unwrap();
            let sym = symbolic.eval(&x);
            assert!(
                (num - sym).abs() <= 1e-6 * (1.0 + sym.abs()),
                "num {} sym {}",
                num,
                sym
            );
        }
    }

    #[test]
    fn numeric_stencil_out_of_window() {
        let f = SampledFn::from_fn(vec![0.0], vec![0.1], vec![5], |x| x[0]);
        let op = DiffOp::partial(1, 0);
        assert!(matches!(
            op.apply_numeric(&f, &[0.0]),
            Err(ExpTrigError::StencilOutOfWindow)
        ));
        assert!(op.apply_numeric(&f, &[0.2]).is_ok());
    }

    #[test]
    fn json_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let f = random_etp(&mut rng, 2);
        let s = serde_json::to_string(&f).unwrap();
        let back: ExpTrigPoly = serde_json::from_str(&s).unwrap();
        assert_eq!(f, back);
    }

    #[test]
    fn exp_matrix_nilpotent() {
        // strictly upper triangular 3x3: exp has the x^2/2 corner
        let b = vec![
            vec![rat_i(0), rat_i(1), rat_i(0)],
            vec![rat_i(0), rat_i(0), rat_i(1)],
            vec![rat_i(0), rat_i(0), rat_i(0)],
        ];
        let e = exp_rat_matrix(&b, 1e-9).unwrap();
        assert_relative_eq!(e[0][2].eval(&[2.0]), 2.0, epsilon = 1e-12);
        assert_relative_eq!(e[0][1].eval(&[2.0]), 2.0, epsilon = 1e-12);
        assert_relative_eq!(e[0][0].eval(&[2.0]), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn exp_matrix_diagonalizable() {
        let b = vec![
            vec![rat_i(1), rat_i(0)],
            vec![rat_i(0), rat_i(-1)],
        ];
        let e = exp_rat_matrix(&b, 1e-9).unwrap();
        assert_relative_eq!(e[0][0].eval(&[1.5]), 1.5f64.exp(), epsilon = 1e-9);
        assert_relative_eq!(e[1][1].eval(&[1.5]), (-1.5f64).exp(), epsilon = 1e-9);
        assert!(e[0][1].is_zero());
    }

    #[test]
    fn exp_matrix_rotation() {
        let b = vec![
            vec![rat_i(0), rat_i(-1)],
            vec![rat_i(1), rat_i(0)],
        ];
        let e = exp_rat_matrix(&b, 1e-9).unwrap();
        for &x in &[0.0, 0.9, -2.2] {
            assert_relative_eq!(e[0][0].eval(&[x]), x.cos(), epsilon = 1e-9);
            assert_relative_eq!(e[1][0].eval(&[x]), x.sin(), epsilon = 1e-9);
            assert_relative_eq!(e[0][1].eval(&[x]), -x.sin(), epsilon = 1e-9);
        }
    }

    #[test]
    fn exp_matrix_jordan_block() {
        let b = vec![
            vec![rat_i(1), rat_i(1)],
            vec![rat_i(0), rat_i(1)],
        ];
        let e = exp_rat_matrix(&b, 1e-9).unwrap();
        for &x in &[0.4, -1.1] {
            assert_relative_eq!(e[0][0].eval(&[x]), x.exp(), epsilon = 1e-9);
            assert_relative_eq!(e[0][1].eval(&[x]), x * x.exp(), epsilon = 1e-9);
        }
    }

    #[test]
    fn exp_matrix_random_vs_expm() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        // integer-spectrum matrices via conjugation of a diagonal by a
        // unimodular integer matrix
        for _ in 0..5 {
            let d: Vec<i64> = (0..3).map(|_| rng.gen_range(-2i64..=2)).collect();
            let p = vec![
                vec![rat_i(1), rat_i(1), rat_i(0)],
                vec![rat_i(0), rat_i(1), rat_i(1)],
                vec![rat_i(0), rat_i(0), rat_i(1)],
            ];
            let pinv = vec![
                vec![rat_i(1), rat_i(-1), rat_i(1)],
                vec![rat_i(0), rat_i(1), rat_i(-1)],
                vec![rat_i(0), rat_i(0), rat_i(1)],
            ];
            let mut diag = vec![vec![rat_i(0); 3]; 3];
            for i in 0..3 {
                diag[i][i] = rat_i(d[i]);
            }
            let b = rat_matmul(&rat_matmul(&p, &diag), &pinv);
            let e = exp_rat_matrix(&b, 1e-8).unwrap();
            let bf = DMatrix::<f64>::from_fn(3, 3, |r, c| rat_to_f64(&b[r][c]));
            for &x in &[0.6, -0.8] {
                let oracle = crate::numeric::expm(&(bf.clone() * x));
                for r in 0..3 {
                    for s in 0..3 {
                        assert!(
                            (e[r][s].eval(&[x]) - oracle[(r, s)]).abs() < 1e-8,
                            "entry ({},{})",
                            r,
                            s
                        );
                    }
                }
            }
        }
    }
}
