//! Exact rational scalars and small dense linear algebra over the rationals.
//!
//! Everything symbolic in this crate (structure constants, BCH sums, reorder
//! polynomials, Haar determinants) is computed here exactly; floating point
//! enters only at evaluation boundaries.

use num::bigint::BigInt;
use num::rational::Ratio;
use num::{Complex, One, Signed, ToPrimitive, Zero};

pub type Rat = Ratio<BigInt>;
pub type CRat = Complex<Rat>;

pub fn rat(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

pub fn rat_i(n: i64) -> Rat {
    Rat::from(BigInt::from(n))
}

pub fn rat_to_f64(r: &Rat) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        // fall back on a quotient of approximations for very large entries
        let n = r.numer().to_f64().unwrap_or(f64::MAX);
        let d = r.denom().to_f64().unwrap_or(f64::MAX);
        n / d
    })
}

/// Best rational approximation of `x` via continued fractions, accepted only
/// if it reproduces `x` within `tol` and keeps the denominator below `max_den`.
pub fn lift_f64(x: f64, tol: f64, max_den: u64) -> Option<Rat> {
    if !x.is_finite() {
        return None;
    }
    let mut a = x;
    let (mut h0, mut h1) = (BigInt::from(1), BigInt::from(x.floor() as i64));
    let (mut k0, mut k1) = (BigInt::from(0), BigInt::from(1));
    a -= x.floor();
    for _ in 0..64 {
        let cand = Rat::new(h1.clone(), k1.clone());
        let c = rat_to_f64(&cand);
        if (c - x).abs() <= tol {
            return Some(cand);
        }
        if a.abs() < 1e-18 {
            break;
        }
        a = 1.0 / a;
        let ai = a.floor();
        let aib = BigInt::from(ai as i64);
        let h2 = &aib * &h1 + &h0;
        let k2 = &aib * &k1 + &k0;
        if k2.to_u64().map(|k| k > max_den).unwrap_or(true) {
            break;
        }
        h0 = h1;
        h1 = h2;
        k0 = k1;
        k1 = k2;
        a -= ai;
    }
    let cand = Rat::new(h1, k1);
    if (rat_to_f64(&cand) - x).abs() <= tol {
        Some(cand)
    } else {
        None
    }
}

pub fn vec_add(x: &[Rat], y: &[Rat]) -> Vec<Rat> {
    x.iter().zip(y).map(|(a, b)| a + b).collect()
}

pub fn vec_scale(x: &[Rat], c: &Rat) -> Vec<Rat> {
    x.iter().map(|a| a * c).collect()
}

pub fn vec_is_zero(x: &[Rat]) -> bool {
    x.iter().all(|a| a.is_zero())
}

/// Reduced row echelon form in place; returns the pivot columns.
pub fn rref(rows: &mut Vec<Vec<Rat>>) -> Vec<usize> {
    let nrows = rows.len();
    if nrows == 0 {
        return vec![];
    }
    let ncols = rows[0].len();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..ncols {
        let Some(p) = (r..nrows).find(|&i| !rows[i][c].is_zero()) else {
            continue;
        };
        rows.swap(r, p);
        let inv = rows[r][c].clone();
        for x in rows[r].iter_mut() {
            *x = &*x / &inv;
        }
        for i in 0..nrows {
            if i != r && !rows[i][c].is_zero() {
                let f = rows[i][c].clone();
                for j in 0..ncols {
                    let t = &rows[r][j] * &f;
                    rows[i][j] = &rows[i][j] - &t;
                }
            }
        }
        pivots.push(c);
        r += 1;
        if r == nrows {
            break;
        }
    }
    rows.retain(|row| !vec_is_zero(row));
    pivots
}

/// Canonical (rref) basis of the row space of `vectors`.
pub fn row_space_basis(vectors: &[Vec<Rat>]) -> Vec<Vec<Rat>> {
    let mut rows: Vec<Vec<Rat>> = vectors.to_vec();
    rref(&mut rows);
    rows
}

pub fn rank(vectors: &[Vec<Rat>]) -> usize {
    row_space_basis(vectors).len()
}

pub fn in_span(basis: &[Vec<Rat>], v: &[Rat]) -> bool {
    if vec_is_zero(v) {
        return true;
    }
    let mut rows = basis.to_vec();
    rows.push(v.to_vec());
    rank(&rows) == rank(basis)
}

/// Solve `A x = b` exactly (A given column-wise as `cols`); `None` if inconsistent.
pub fn solve_columns(cols: &[Vec<Rat>], b: &[Rat]) -> Option<Vec<Rat>> {
    let n = b.len();
    let m = cols.len();
    // augmented system, Gaussian elimination
    let mut aug: Vec<Vec<Rat>> = (0..n)
        .map(|i| {
            let mut row: Vec<Rat> = cols.iter().map(|c| c[i].clone()).collect();
            row.push(b[i].clone());
            row
        })
        .collect();
    let pivots = rref(&mut aug);
    if pivots.contains(&m) {
        return None; // pivot in the rhs column
    }
    let mut x = vec![Rat::zero(); m];
    for (row, &pc) in aug.iter().zip(pivots.iter()) {
        x[pc] = row[m].clone();
    }
    // verify (guards against underdetermined inconsistencies)
    for i in 0..n {
        let mut acc = Rat::zero();
        for (j, c) in cols.iter().enumerate() {
            acc += &c[i] * &x[j];
        }
        if acc != b[i] {
            return None;
        }
    }
    Some(x)
}

/// Exact inverse of a square complex-rational matrix (Gauss-Jordan).
pub fn crat_inverse(a: &[Vec<CRat>]) -> Option<Vec<Vec<CRat>>> {
    let n = a.len();
    let czero = CRat::new(Rat::zero(), Rat::zero());
    let cone = CRat::new(Rat::one(), Rat::zero());
    let mut m: Vec<Vec<CRat>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            for j in 0..n {
                r.push(if i == j { cone.clone() } else { czero.clone() });
            }
            r
        })
        .collect();
    for c in 0..n {
        let p = (c..n).find(|&i| !m[i][c].is_zero())?;
        m.swap(c, p);
        let inv = m[c][c].clone();
        for x in m[c].iter_mut() {
            *x = x.clone() / inv.clone();
        }
        for i in 0..n {
            if i != c && !m[i][c].is_zero() {
                let f = m[i][c].clone();
                for j in 0..2 * n {
                    let t = m[c][j].clone() * f.clone();
                    m[i][j] = m[i][j].clone() - t;
                }
            }
        }
    }
    Some(m.into_iter().map(|row| row[n..].to_vec()).collect())
}

/// Euclidean norm of a rational vector, evaluated in doubles.
pub fn vec_norm_f64(x: &[Rat]) -> f64 {
    x.iter().map(|a| rat_to_f64(a).powi(2)).sum::<f64>().sqrt()
}

pub fn rat_abs(r: &Rat) -> Rat {
    r.abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rref_and_rank() {
        let rows = vec![
            vec![rat_i(1), rat_i(2), rat_i(3)],
            vec![rat_i(2), rat_i(4), rat_i(6)],
            vec![rat_i(0), rat_i(1), rat_i(1)],
        ];
        assert_eq!(rank(&rows), 2);
        assert!(in_span(&rows, &[rat_i(1), rat_i(3), rat_i(4)]));
        assert!(!in_span(&rows, &[rat_i(0), rat_i(0), rat_i(1)]));
    }

    #[test]
    fn solve_exact() {
        let cols = vec![vec![rat_i(1), rat_i(0)], vec![rat_i(1), rat_i(1)]];
        let x = solve_columns(&cols, &[rat_i(3), rat_i(2)]).unwrap();
        assert_eq!(x, vec![rat_i(1), rat_i(2)]);
    }

    #[test]
    fn lift_simple() {
        assert_eq!(lift_f64(0.5, 1e-12, 1000).unwrap(), rat(1, 2));
        assert_eq!(lift_f64(1.0 / 3.0, 1e-9, 1000).unwrap(), rat(1, 3));
    }

    #[test]
    fn crat_inverse_2x2() {
        let i = CRat::new(Rat::zero(), Rat::one());
        let one = CRat::new(Rat::one(), Rat::zero());
        let a = vec![vec![one.clone(), i.clone()], vec![i.clone(), one.clone()]];
        let inv = crat_inverse(&a).unwrap();
        // a * inv = id
        for r in 0..2 {
            for c in 0..2 {
                let mut acc = CRat::new(Rat::zero(), Rat::zero());
                for k in 0..2 {
                    acc = acc + a[r][k].clone() * inv[k][c].clone();
                }
                let expect = if r == c { Rat::one() } else { Rat::zero() };
                assert_eq!(acc.re, expect);
                assert!(acc.im.is_zero());
            }
        }
    }
}
