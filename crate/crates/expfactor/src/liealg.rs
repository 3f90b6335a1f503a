//! Exact Lie-algebra arithmetic: validation of structure constants, derived
//! and lower central series, adapted (coexponential + Malcev) bases, and the
//! truncated Baker-Campbell-Hausdorff product over any coefficient ring.

use num::{One, Zero};
use thiserror::Error;

use crate::poly::Poly;
use crate::rational::{
    in_span, rat_i, rank, row_space_basis, solve_columns, vec_is_zero, Rat,
};

#[derive(Debug, Error)]
pub enum LieError {
    #[error("structure constant table has wrong shape")]
    BadShape,
    #[error("antisymmetry violated at (i={i}, j={j}, k={k})")]
    AntisymmetryViolation { i: usize, j: usize, k: usize },
    #[error("Jacobi identity violated at basis triple ({i}, {j}, {k})")]
    JacobiViolation { i: usize, j: usize, k: usize },
    #[error("derived series stabilizes above zero: algebra is not solvable")]
    NotSolvable,
    #[error("derived subalgebra [g,g] is not nilpotent")]
    DerivedNotNilpotent,
    #[error("arguments generate a non-nilpotent subalgebra")]
    NotNilpotentContext,
    #[error("element lies outside the basis span")]
    UnsupportedElement,
}

/// Coefficient ring abstraction so that brackets and BCH run both over exact
/// rationals and over polynomial coordinates.
pub trait Coeff: Clone {
    fn zero_like(&self) -> Self;
    fn is_zero(&self) -> bool;
    fn add(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn scale(&self, r: &Rat) -> Self;
}

impl Coeff for Rat {
    fn zero_like(&self) -> Self {
        Rat::zero()
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn scale(&self, r: &Rat) -> Self {
        self * r
    }
}

impl Coeff for Poly {
    fn zero_like(&self) -> Self {
        Poly::zero(self.nvars)
    }
    fn is_zero(&self) -> bool {
        Poly::is_zero(self)
    }
    fn add(&self, other: &Self) -> Self {
        Poly::add(self, other)
    }
    fn mul(&self, other: &Self) -> Self {
        Poly::mul(self, other)
    }
    fn scale(&self, r: &Rat) -> Self {
        Poly::scale(self, r)
    }
}

/// Structure constant table: `c[i][j][k]` is the `X_k` component of `[X_i, X_j]`.
pub type StructureConstants = Vec<Vec<Vec<Rat>>>;

/// A validated solvable Lie algebra with exact rational structure constants.
#[derive(Clone, Debug)]
pub struct LieAlgebra {
    pub dim: usize,
    pub basis_names: Vec<String>,
    pub c: StructureConstants,
    /// Canonical basis of the derived subalgebra n = [g, g].
    pub derived_basis: Vec<Vec<Rat>>,
    /// Nilpotency class of n (0 for abelian g).
    pub nilpotency_class_of_derived: usize,
}

/// Coexponential complement basis A plus a Malcev basis N of n = [g,g],
/// all expressed in the coordinates of the ambient algebra basis.
#[derive(Clone, Debug)]
pub struct AdaptedBasis {
    pub a_part: Vec<Vec<Rat>>,
    pub n_part: Vec<Vec<Rat>>,
}

impl AdaptedBasis {
    pub fn full(&self) -> Vec<Vec<Rat>> {
        let mut v = self.a_part.clone();
        v.extend(self.n_part.clone());
        v
    }
}

pub fn bracket_t<T: Coeff>(c: &StructureConstants, x: &[T], y: &[T]) -> Vec<T> {
    let dim = x.len();
    let proto = x[0].zero_like();
    let mut out = vec![proto; dim];
    for i in 0..dim {
        if x[i].is_zero() {
            continue;
        }
        for j in 0..dim {
            if y[j].is_zero() {
                continue;
            }
            let xy = x[i].mul(&y[j]);
            for k in 0..dim {
                if !num::Zero::is_zero(&c[i][j][k]) {
                    out[k] = out[k].add(&xy.scale(&c[i][j][k]));
                }
            }
        }
    }
    out
}

impl LieAlgebra {
    pub fn bracket(&self, x: &[Rat], y: &[Rat]) -> Vec<Rat> {
        bracket_t(&self.c, x, y)
    }

    /// Adjoint matrix of `x`: column j holds [x, e_j].
    pub fn ad_matrix(&self, x: &[Rat]) -> Vec<Vec<Rat>> {
        let d = self.dim;
        let mut m = vec![vec![Rat::zero(); d]; d];
        for j in 0..d {
            let mut ej = vec![Rat::zero(); d];
            ej[j] = Rat::one();
            let col = self.bracket(x, &ej);
            for i in 0..d {
                m[i][j] = col[i].clone();
            }
        }
        m
    }

    fn standard_basis(&self) -> Vec<Vec<Rat>> {
        (0..self.dim)
            .map(|i| {
                let mut e = vec![Rat::zero(); self.dim];
                e[i] = Rat::one();
                e
            })
            .collect()
    }

    /// Span of all brackets [u, v] for u in `left`, v in `right`.
    fn bracket_span(&self, left: &[Vec<Rat>], right: &[Vec<Rat>]) -> Vec<Vec<Rat>> {
        let mut gens = Vec::new();
        for u in left {
            for v in right {
                let b = self.bracket(u, v);
                if !vec_is_zero(&b) {
                    gens.push(b);
                }
            }
        }
        row_space_basis(&gens)
    }

    /// Derived series g ⊇ [g,g] ⊇ ... as canonical bases; ends when stable.
    pub fn derived_series(&self) -> Vec<Vec<Vec<Rat>>> {
        let mut series = vec![row_space_basis(&self.standard_basis())];
        loop {
            let last = series.last().unwrap();
            let next = self.bracket_span(last, last);
            if next.len() == last.len() {
                break;
            }
            let stop = next.is_empty();
            series.push(next);
            if stop {
                break;
            }
        }
        series
    }

    /// Lower central series of the subalgebra spanned by `basis`;
    /// `None` if the series does not reach zero (not nilpotent).
    pub fn lower_central_series(&self, basis: &[Vec<Rat>]) -> Option<Vec<Vec<Vec<Rat>>>> {
        let mut series = vec![row_space_basis(basis)];
        loop {
            let last = series.last().unwrap();
            if last.is_empty() {
                return Some(series);
            }
            let next = self.bracket_span(&series[0], last);
            if next.len() == last.len() {
                return None; // stabilized above zero
            }
            series.push(next);
        }
    }

    /// Closure of `gens` under brackets: the subalgebra they generate.
    pub fn subalgebra_closure(&self, gens: &[Vec<Rat>]) -> Vec<Vec<Rat>> {
        let mut basis = row_space_basis(gens);
        loop {
            let mut added = false;
            let snapshot = basis.clone();
            for u in &snapshot {
                for v in &snapshot {
                    let b = self.bracket(u, v);
                    if !vec_is_zero(&b) && !in_span(&basis, &b) {
                        basis.push(b);
                        basis = row_space_basis(&basis);
                        added = true;
                    }
                }
            }
            if !added {
                return basis;
            }
        }
    }

    /// Truncated BCH product of two elements that generate a nilpotent
    /// subalgebra. Exact over the rationals.
    pub fn bch(&self, x: &[Rat], y: &[Rat]) -> Result<Vec<Rat>, LieError> {
        let sub = self.subalgebra_closure(&[x.to_vec(), y.to_vec()]);
        let class = if sub.is_empty() {
            1
        } else {
            match self.lower_central_series(&sub) {
                Some(s) => s.len().saturating_sub(1).max(1),
                None => return Err(LieError::NotNilpotentContext),
            }
        };
        Ok(bch_truncated(&self.c, x, y, class))
    }

    /// Deterministic adapted basis: Malcev basis of n = [g,g] refined through
    /// its lower central series, complement A by greedy extension over the
    /// standard basis in index order.
    pub fn adapted_basis(&self) -> AdaptedBasis {
        self.adapted_basis_for_n(&self.derived_basis)
    }

    /// Adapted basis for a user-supplied nilpotent ideal n containing [g,g]
    /// (the whole algebra for nilpotent g is the common case).
    pub fn adapted_basis_for_n(&self, n_basis: &[Vec<Rat>]) -> AdaptedBasis {
        let n_part = self.malcev_basis(n_basis);
        // complement: scan the standard basis and keep vectors independent
        // from n plus the already chosen complement vectors
        let mut a_part: Vec<Vec<Rat>> = Vec::new();
        let mut span: Vec<Vec<Rat>> = n_basis.to_vec();
        for e in self.standard_basis() {
            if !in_span(&row_space_basis(&span), &e) {
                span.push(e.clone());
                a_part.push(e);
            }
            if span.len() == self.dim && rank(&span) == self.dim {
                break;
            }
        }
        AdaptedBasis { a_part, n_part }
    }

    /// Malcev basis ordered so every tail span(N_j..N_m) is an ideal of n:
    /// shallow lower-central layers first, the deepest (central) layer last.
    fn malcev_basis(&self, n_basis: &[Vec<Rat>]) -> Vec<Vec<Rat>> {
        if n_basis.is_empty() {
            return vec![];
        }
        let series = self
            .lower_central_series(n_basis)
            .expect("Malcev basis requires a nilpotent subalgebra");
        // series[0] = n ⊇ series[1] ⊇ ... ⊇ series[last] = 0
        let mut out = Vec::new();
        for w in 0..series.len().saturating_sub(1) {
            let deeper = &series[w + 1];
            let mut layer_span = deeper.clone();
            for v in &series[w] {
                if !in_span(&row_space_basis(&layer_span), v) {
                    layer_span.push(v.clone());
                    out.push(v.clone());
                }
            }
        }
        out
    }

    /// Structure constants in a new basis (rows are basis vectors in the old
    /// coordinates). The new basis must be a basis of g.
    pub fn structure_constants_in_basis(&self, basis: &[Vec<Rat>]) -> StructureConstants {
        let d = self.dim;
        assert_eq!(basis.len(), d);
        let cols: Vec<Vec<Rat>> = (0..d).map(|j| basis[j].clone()).collect();
        let mut c = vec![vec![vec![Rat::zero(); d]; d]; d];
        for i in 0..d {
            for j in 0..d {
                let b = self.bracket(&basis[i], &basis[j]);
                let coeffs =
                    solve_columns(&cols, &b).expect("basis change must be solvable exactly");
                for k in 0..d {
                    c[i][j][k] = coeffs[k].clone();
                }
            }
        }
        c
    }
}

/// Validate raw structure constants: antisymmetry, Jacobi, solvability, and
/// nilpotency of the derived subalgebra.
pub fn validate(
    dim: usize,
    basis_names: Vec<String>,
    c: StructureConstants,
) -> Result<LieAlgebra, LieError> {
    if dim == 0 || c.len() != dim || c.iter().any(|t| t.len() != dim)
        || c.iter().flatten().any(|r| r.len() != dim)
    {
        return Err(LieError::BadShape);
    }
    for i in 0..dim {
        for j in 0..dim {
            for k in 0..dim {
                if c[i][j][k] != -c[j][i][k].clone() {
                    return Err(LieError::AntisymmetryViolation { i, j, k });
                }
            }
        }
    }
    let names = if basis_names.len() == dim {
        basis_names
    } else {
        (0..dim).map(|i| format!("X{}", i + 1)).collect()
    };
    let alg = LieAlgebra {
        dim,
        basis_names: names,
        c,
        derived_basis: vec![],
        nilpotency_class_of_derived: 0,
    };
    // Jacobi over all basis triples
    for i in 0..dim {
        for j in 0..dim {
            for k in 0..dim {
                let mut ei = vec![Rat::zero(); dim];
                ei[i] = Rat::one();
                let mut ej = vec![Rat::zero(); dim];
                ej[j] = Rat::one();
                let mut ek = vec![Rat::zero(); dim];
                ek[k] = Rat::one();
                let t1 = alg.bracket(&ei, &alg.bracket(&ej, &ek));
                let t2 = alg.bracket(&ej, &alg.bracket(&ek, &ei));
                let t3 = alg.bracket(&ek, &alg.bracket(&ei, &ej));
                let mut sum = t1;
                for l in 0..dim {
                    sum[l] = &sum[l] + &t2[l] + &t3[l];
                }
                if !vec_is_zero(&sum) {
                    return Err(LieError::JacobiViolation { i, j, k });
                }
            }
        }
    }
    let series = alg.derived_series();
    if !series.last().unwrap().is_empty() {
        return Err(LieError::NotSolvable);
    }
    let derived = if series.len() > 1 {
        series[1].clone()
    } else {
        vec![]
    };
    let class = if derived.is_empty() {
        0
    } else {
        match alg.lower_central_series(&derived) {
            Some(s) => s.len() - 1,
            None => return Err(LieError::DerivedNotNilpotent),
        }
    };
    Ok(LieAlgebra {
        derived_basis: derived,
        nilpotency_class_of_derived: class,
        ..alg
    })
}

/// Dynkin's commutator series for log(exp(x) exp(y)), truncated at total
/// degree `class` (exact in any nilpotent context of that class).
pub fn bch_truncated<T: Coeff>(
    c: &StructureConstants,
    x: &[T],
    y: &[T],
    class: usize,
) -> Vec<T> {
    let proto = x[0].zero_like();
    let mut acc: Vec<T> = vec![proto; x.len()];
    // enumerate block tuples ((r_1,s_1),...,(r_q,s_q)), each != (0,0)
    let mut blocks: Vec<(usize, usize)> = Vec::new();
    enumerate_blocks(c, x, y, class, &mut blocks, &mut acc);
    acc
}

fn factorial(n: usize) -> Rat {
    let mut f = rat_i(1);
    for k in 2..=n {
        f = f * rat_i(k as i64);
    }
    f
}

fn enumerate_blocks<T: Coeff>(
    c: &StructureConstants,
    x: &[T],
    y: &[T],
    class: usize,
    blocks: &mut Vec<(usize, usize)>,
    acc: &mut Vec<T>,
) {
    let used: usize = blocks.iter().map(|(r, s)| r + s).sum();
    if !blocks.is_empty() {
        // contribute the current tuple
        let q = blocks.len();
        let degree = used;
        let mut word: Vec<bool> = Vec::with_capacity(degree); // true = x
        for &(r, s) in blocks.iter() {
            word.extend(std::iter::repeat(true).take(r));
            word.extend(std::iter::repeat(false).take(s));
        }
        // right-nested bracket of the word
        let mut val: Vec<T> = if *word.last().unwrap() {
            x.to_vec()
        } else {
            y.to_vec()
        };
        let mut vanished = false;
        for &letter in word.iter().rev().skip(1) {
            let left = if letter { x } else { y };
            val = bracket_t(c, left, &val);
            if val.iter().all(|t| t.is_zero()) {
                vanished = true;
                break;
            }
        }
        if !vanished {
            let mut denom = rat_i((degree * q) as i64);
            for &(r, s) in blocks.iter() {
                denom = denom * factorial(r) * factorial(s);
            }
            let sign = if q % 2 == 1 { rat_i(1) } else { rat_i(-1) };
            let w = sign / denom;
            for k in 0..acc.len() {
                acc[k] = acc[k].add(&val[k].scale(&w));
            }
        }
    }
    if used >= class {
        return;
    }
    let room = class - used;
    for r in 0..=room {
        for s in 0..=(room - r) {
            if r + s == 0 {
                continue;
            }
            blocks.push((r, s));
            enumerate_blocks(c, x, y, class, blocks, acc);
            blocks.pop();
        }
    }
}

/// Reorder polynomials of the Malcev factorization: exact polynomials
/// p_j^j, ..., p_m^j in (s_j, ..., s_m, r) with
/// exp(s_j N_j)...exp(s_m N_m) exp(r N_j) = exp(p_j^j N_j)...exp(p_m^j N_m).
/// Variables are indexed 0..(m-j) for s_j..s_m and m-j+1 for r.
pub fn reorder_polynomials(
    alg: &LieAlgebra,
    basis: &AdaptedBasis,
    j: usize,
) -> Result<Vec<Poly>, LieError> {
    let m = basis.n_part.len();
    assert!(j >= 1 && j <= m, "1 <= j <= m required");
    // structure constants of n in the Malcev basis
    let n_sc = nilpotent_structure_constants(alg, &basis.n_part)?;
    let class = match alg.lower_central_series(&basis.n_part) {
        Some(s) => s.len().saturating_sub(1).max(1),
        None => return Err(LieError::NotNilpotentContext),
    };
    let tail = m - j + 1; // number of s variables
    let nvars = tail + 1; // plus r
    // elements of n with polynomial coefficients, in the Malcev basis
    let mut w: Option<Vec<Poly>> = None;
    for (idx, nj) in (j - 1..m).enumerate() {
        let mut e = vec![Poly::zero(nvars); m];
        e[nj] = Poly::var(nvars, idx);
        w = Some(match w {
            None => e,
            Some(prev) => bch_truncated(&n_sc, &prev, &e, class),
        });
    }
    let mut w = w.unwrap();
    // append exp(r N_j)
    let mut er = vec![Poly::zero(nvars); m];
    er[j - 1] = Poly::var(nvars, tail);
    w = bch_truncated(&n_sc, &w, &er, class);
    // peel second-kind coordinates p_j..p_m off exp(w)
    let mut out = Vec::with_capacity(tail);
    for k in j - 1..m {
        let p = w[k].clone();
        out.push(p.clone());
        // w <- bch(-p N_k, w); the N_k component must then vanish
        let mut pe = vec![Poly::zero(nvars); m];
        pe[k] = p.neg();
        w = bch_truncated(&n_sc, &pe, &w, class);
        assert!(
            w[k].is_zero(),
            "Malcev peeling must cancel the leading coordinate exactly"
        );
    }
    Ok(out)
}

/// Structure constants of the nilpotent subalgebra spanned by `n_basis`,
/// expressed in that basis.
pub fn nilpotent_structure_constants(
    alg: &LieAlgebra,
    n_basis: &[Vec<Rat>],
) -> Result<StructureConstants, LieError> {
    let m = n_basis.len();
    let cols: Vec<Vec<Rat>> = n_basis.to_vec();
    let mut c = vec![vec![vec![Rat::zero(); m]; m]; m];
    for i in 0..m {
        for j in 0..m {
            let b = alg.bracket(&n_basis[i], &n_basis[j]);
            let coeffs = solve_columns(&cols, &b).ok_or(LieError::UnsupportedElement)?;
            for k in 0..m {
                c[i][j][k] = coeffs[k].clone();
            }
        }
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::numeric::{expm, logm_unitriangular};
    use crate::poly::Poly;
    use crate::rational::{rat, rat_to_f64};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_rat_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<Rat> {
        (0..dim)
            .map(|_| rat(rng.gen_range(-8i64..=8), rng.gen_range(1i64..=4)))
            .collect()
    }

    #[test]
    fn validate_fixtures() {
        let ab = fixtures::abelian2();
        assert_eq!(ab.alg.derived_basis.len(), 0);
        assert_eq!(ab.alg.nilpotency_class_of_derived, 0);

        let h3 = fixtures::heisenberg();
        assert_eq!(h3.alg.derived_basis.len(), 1);
        assert_eq!(h3.alg.nilpotency_class_of_derived, 1);

        let axb = fixtures::axb();
        assert_eq!(axb.alg.derived_basis.len(), 1);
    }

    #[test]
    fn so3_is_not_solvable() {
        let (d, n, c) = fixtures::so3_constants();
        match validate(d, n, c) {
            Err(LieError::NotSolvable) => {}
            other => panic!("expected NotSolvable, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn antisymmetry_and_jacobi_violations() {
        // c[0][1][2] = 1 without the antisymmetric partner
        let mut c = vec![vec![vec![Rat::zero(); 3]; 3]; 3];
        c[0][1][2] = rat_i(1);
        assert!(matches!(
            validate(3, vec![], c),
            Err(LieError::AntisymmetryViolation { .. })
        ));
        // [X,Y] = Z, [X,Z] = X violates Jacobi
        let mut c = vec![vec![vec![Rat::zero(); 3]; 3]; 3];
        c[0][1][2] = rat_i(1);
        c[1][0][2] = rat_i(-1);
        c[0][2][0] = rat_i(1);
        c[2][0][0] = rat_i(-1);
        assert!(matches!(
            validate(3, vec![], c),
            Err(LieError::JacobiViolation { .. })
        ));
    }

    #[test]
    fn adapted_bases_of_fixtures() {
        let ab = fixtures::abelian2().alg.adapted_basis();
        assert_eq!(ab.a_part.len(), 2);
        assert_eq!(ab.n_part.len(), 0);

        let h3 = fixtures::heisenberg().alg;
        let basis = h3.adapted_basis();
        assert_eq!(basis.a_part.len(), 2);
        assert_eq!(basis.n_part.len(), 1);
        // N spans Z
        assert!(!Zero::is_zero(&basis.n_part[0][2]));

        let axb = fixtures::axb().alg;
        let basis = axb.adapted_basis();
        assert_eq!(basis.a_part.len(), 1);
        assert_eq!(basis.n_part.len(), 1);
        assert!(!Zero::is_zero(&basis.a_part[0][0]));
        assert!(!Zero::is_zero(&basis.n_part[0][1]));
        // determinism
        let again = axb.adapted_basis();
        assert_eq!(basis.a_part, again.a_part);
        assert_eq!(basis.n_part, again.n_part);
    }

    #[test]
    fn adapted_basis_invariants_exact() {
        for spec in [fixtures::heisenberg(), fixtures::axb()] {
            let alg = &spec.alg;
            let basis = alg.adapted_basis();
            // direct sum
            assert_eq!(rank(&basis.full()), alg.dim);
            // Malcev ideal chain, exact over the rationals
            let m = basis.n_part.len();
            for j in 0..m {
                let tail_next: Vec<Vec<Rat>> = basis.n_part[j + 1..].to_vec();
                for x in &basis.n_part {
                    for y in &basis.n_part[j..] {
                        let b = alg.bracket(x, y);
                        assert!(in_span(&row_space_basis(&tail_next), &b));
                    }
                }
            }
        }
    }

    #[test]
    fn bch_trivial_cases() {
        let h3 = fixtures::heisenberg().alg;
        let x = vec![rat_i(1), rat_i(0), rat_i(0)];
        let zero = vec![rat_i(0); 3];
        assert_eq!(h3.bch(&x, &zero).unwrap(), x);

        let ab = fixtures::abelian2().alg;
        let u = vec![rat_i(2), rat_i(3)];
        let v = vec![rat_i(-1), rat_i(5)];
        assert_eq!(ab.bch(&u, &v).unwrap(), vec![rat_i(1), rat_i(8)]);
    }

    #[test]
    fn bch_heisenberg_half_z() {
        let h3 = fixtures::heisenberg().alg;
        let x = vec![rat_i(1), rat_i(0), rat_i(0)];
        let y = vec![rat_i(0), rat_i(1), rat_i(0)];
        let z = h3.bch(&x, &y).unwrap();
        assert_eq!(z, vec![rat_i(1), rat_i(1), rat(1, 2)]);
        // matrix-log oracle: log(exp(E12) exp(E23)) in 3x3 unitriangular
        let spec = fixtures::heisenberg();
        let mx = spec.model_of(&x).unwrap();
        let my = spec.model_of(&y).unwrap();
        let log = logm_unitriangular(&(expm(&mx) * expm(&my)));
        assert!((log[(0, 1)] - 1.0).abs() < 1e-12);
        assert!((log[(1, 2)] - 1.0).abs() < 1e-12);
        assert!((log[(0, 2)] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bch_not_nilpotent_context() {
        let axb = fixtures::axb().alg;
        let a = vec![rat_i(1), rat_i(0)];
        let n = vec![rat_i(0), rat_i(1)];
        assert!(matches!(axb.bch(&a, &n), Err(LieError::NotNilpotentContext)));
    }

    #[test]
    fn bch_matrix_oracle_random_pairs() {
        // 100 random pairs with entries in [-2, 2]
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let spec = fixtures::heisenberg();
        let alg = &spec.alg;
        for _ in 0..100 {
            let x: Vec<Rat> = (0..3)
                .map(|_| rat(rng.gen_range(-8i64..=8), 4))
                .collect();
            let y: Vec<Rat> = (0..3)
                .map(|_| rat(rng.gen_range(-8i64..=8), 4))
                .collect();
            let z = alg.bch(&x, &y).unwrap();
            let lhs = expm(&spec.model_of(&x).unwrap()) * expm(&spec.model_of(&y).unwrap());
            let rhs = expm(&spec.model_of(&z).unwrap());
            let diff: DMatrix<f64> = lhs - rhs;
            assert!(diff.amax() < 1e-10, "oracle mismatch {}", diff.amax());
        }
    }

    #[test]
    fn bch_associativity_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h3 = fixtures::heisenberg().alg;
        for _ in 0..200 {
            let x = rand_rat_vec(&mut rng, 3);
            let y = rand_rat_vec(&mut rng, 3);
            let z = rand_rat_vec(&mut rng, 3);
            let left = h3.bch(&h3.bch(&x, &y).unwrap(), &z).unwrap();
            let right = h3.bch(&x, &h3.bch(&y, &z).unwrap()).unwrap();
            assert_eq!(left, right);
        }
    }

    #[test]
    fn reorder_single_malcev_element() {
        let h3 = fixtures::heisenberg().alg;
        let basis = h3.adapted_basis();
        let p = reorder_polynomials(&h3, &basis, 1).unwrap();
        assert_eq!(p.len(), 1);
        // p_1^1 = s_1 + r (vars: 0 = s_1, 1 = r)
        let expected = Poly::var(2, 0).add(&Poly::var(2, 1));
        assert_eq!(p[0], expected);
    }

    #[test]
    fn reorder_abelian_tail() {
        let ab = fixtures::abelian2().alg;
        // treat the whole abelian algebra as n
        let basis = ab.adapted_basis_for_n(&[
            vec![rat_i(1), rat_i(0)],
            vec![rat_i(0), rat_i(1)],
        ]);
        assert_eq!(basis.a_part.len(), 0);
        let p = reorder_polynomials(&ab, &basis, 1).unwrap();
        // p_1 = s_1 + r, p_2 = s_2
        assert_eq!(p[0], Poly::var(3, 0).add(&Poly::var(3, 2)));
        assert_eq!(p[1], Poly::var(3, 1));
    }

    #[test]
    fn reorder_heisenberg_whole_as_n() {
        // G nilpotent, A = 0, N = (X, Y, Z); appending exp(r X) produces the
        // cross term -s_2 r on Z
        let h3 = fixtures::heisenberg().alg;
        let std_basis: Vec<Vec<Rat>> = (0..3)
            .map(|i| {
                let mut e = vec![rat_i(0); 3];
                e[i] = rat_i(1);
                e
            })
            .collect();
        let basis = h3.adapted_basis_for_n(&std_basis);
        assert_eq!(basis.a_part.len(), 0);
        assert_eq!(basis.n_part.len(), 3);
        let p = reorder_polynomials(&h3, &basis, 1).unwrap();
        // vars: 0 = s_1, 1 = s_2, 2 = s_3, 3 = r
        assert_eq!(p[0], Poly::var(4, 0).add(&Poly::var(4, 3)));
        assert_eq!(p[1], Poly::var(4, 1));
        let cross = Poly::var(4, 1).mul(&Poly::var(4, 3)).neg();
        assert_eq!(p[2], Poly::var(4, 2).add(&cross));
        // matrix oracle at a sample point
        let spec = fixtures::heisenberg();
        let (s1, s2, s3, r) = (0.7, -1.3, 0.4, 0.9);
        let point = [s1, s2, s3, r];
        let lhs = expm(&(spec.model_of(&std_basis[0]).unwrap() * s1))
            * expm(&(spec.model_of(&std_basis[1]).unwrap() * s2))
            * expm(&(spec.model_of(&std_basis[2]).unwrap() * s3))
            * expm(&(spec.model_of(&std_basis[0]).unwrap() * r));
        let rhs = expm(&(spec.model_of(&std_basis[0]).unwrap() * p[0].eval(&point)))
            * expm(&(spec.model_of(&std_basis[1]).unwrap() * p[1].eval(&point)))
            * expm(&(spec.model_of(&std_basis[2]).unwrap() * p[2].eval(&point)));
        assert!((lhs - rhs).amax() < 1e-12);
        let _ = rat_to_f64(&rat_i(1));
    }

    #[test]
    fn malcev_order_matters_in_reorder() {
        // permuted Malcev order (Y, X, Z) is also valid for h3
        let h3 = fixtures::heisenberg().alg;
        let basis = AdaptedBasis {
            a_part: vec![],
            n_part: vec![
                vec![rat_i(0), rat_i(1), rat_i(0)],
                vec![rat_i(1), rat_i(0), rat_i(0)],
                vec![rat_i(0), rat_i(0), rat_i(1)],
            ],
        };
        let p = reorder_polynomials(&h3, &basis, 1).unwrap();
        assert_eq!(p[0], Poly::var(4, 0).add(&Poly::var(4, 3)));
        // cross term sign flips relative to the (X, Y, Z) order
        assert_eq!(
            p[2],
            Poly::var(4, 2).add(&Poly::var(4, 1).mul(&Poly::var(4, 3)))
        );
    }
}
