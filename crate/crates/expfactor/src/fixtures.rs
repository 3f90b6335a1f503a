//! Built-in example algebras (abelian plane, Heisenberg, ax+b) with faithful
//! matrix models, plus TOML/JSON loading of user algebra descriptions.

use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use num::bigint::BigInt;
use serde::Deserialize;
use thiserror::Error;

use crate::liealg::{validate, LieAlgebra, LieError, StructureConstants};
use crate::rational::{rat_i, rat_to_f64, Rat};

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse: {0}")]
    Parse(String),
    #[error("algebra validation failed: {0}")]
    Lie(#[from] LieError),
}

/// A validated algebra together with an optional faithful matrix model
/// (row-major rational matrices, one per basis element).
#[derive(Clone, Debug)]
pub struct AlgebraSpec {
    pub alg: LieAlgebra,
    pub models: Option<Vec<Vec<Vec<Rat>>>>,
    pub model_dim: usize,
}

impl AlgebraSpec {
    /// Matrix model of an algebra element given by rational coordinates.
    pub fn model_of(&self, coords: &[Rat]) -> Option<DMatrix<f64>> {
        let models = self.models.as_ref()?;
        let d = self.model_dim;
        let mut m = DMatrix::<f64>::zeros(d, d);
        for (c, basis_m) in coords.iter().zip(models.iter()) {
            let cf = rat_to_f64(c);
            if cf == 0.0 {
                continue;
            }
            for r in 0..d {
                for s in 0..d {
                    m[(r, s)] += cf * rat_to_f64(&basis_m[r][s]);
                }
            }
        }
        Some(m)
    }
}

fn zero_constants(dim: usize) -> StructureConstants {
    vec![vec![vec![rat_i(0); dim]; dim]; dim]
}

/// Abelian plane; model: translations of the plane as 3x3 unitriangular
/// matrices.
pub fn abelian2() -> AlgebraSpec {
    let c = zero_constants(2);
    let alg = validate(2, vec!["E1".into(), "E2".into()], c).unwrap();
    let e13 = mat3(&[(0, 2, 1)]);
    let e23 = mat3(&[(1, 2, 1)]);
    AlgebraSpec {
        alg,
        models: Some(vec![e13, e23]),
        model_dim: 3,
    }
}

/// Heisenberg algebra h3 with [X, Y] = Z; model X=E12, Y=E23, Z=E13.
pub fn heisenberg() -> AlgebraSpec {
    let mut c = zero_constants(3);
    c[0][1][2] = rat_i(1);
    c[1][0][2] = rat_i(-1);
    let alg = validate(3, vec!["X".into(), "Y".into(), "Z".into()], c).unwrap();
    AlgebraSpec {
        alg,
        models: Some(vec![
            mat3(&[(0, 1, 1)]),
            mat3(&[(1, 2, 1)]),
            mat3(&[(0, 2, 1)]),
        ]),
        model_dim: 3,
    }
}

/// The ax+b algebra with [A, N] = N; 2x2 affine model A=E11, N=E12.
pub fn axb() -> AlgebraSpec {
    let mut c = zero_constants(2);
    c[0][1][1] = rat_i(1);
    c[1][0][1] = rat_i(-1);
    let alg = validate(2, vec!["A".into(), "N".into()], c).unwrap();
    AlgebraSpec {
        alg,
        models: Some(vec![mat2(&[(0, 0, 1)]), mat2(&[(0, 1, 1)])]),
        model_dim: 2,
    }
}

/// An so(3)-type table, used as a NotSolvable witness in tests.
pub fn so3_constants() -> (usize, Vec<String>, StructureConstants) {
    let mut c = zero_constants(3);
    c[0][1][2] = rat_i(1);
    c[1][0][2] = rat_i(-1);
    c[1][2][0] = rat_i(1);
    c[2][1][0] = rat_i(-1);
    c[2][0][1] = rat_i(1);
    c[0][2][1] = rat_i(-1);
    (3, vec!["X".into(), "Y".into(), "Z".into()], c)
}

pub fn by_name(name: &str) -> Option<AlgebraSpec> {
    match name {
        "abelian2" | "abelian" => Some(abelian2()),
        "heisenberg" | "h3" => Some(heisenberg()),
        "axb" | "ax+b" => Some(axb()),
        _ => None,
    }
}

fn mat3(entries: &[(usize, usize, i64)]) -> Vec<Vec<Rat>> {
    let mut m = vec![vec![rat_i(0); 3]; 3];
    for &(r, c, v) in entries {
        m[r][c] = rat_i(v);
    }
    m
}

fn mat2(entries: &[(usize, usize, i64)]) -> Vec<Vec<Rat>> {
    let mut m = vec![vec![rat_i(0); 2]; 2];
    for &(r, c, v) in entries {
        m[r][c] = rat_i(v);
    }
    m
}

/// Raw file schema. Bracket rows are `[i, j, k, num, den]` with 1-based
/// indices meaning [X_i, X_j] += (num/den) X_k; only i < j rows are required,
/// antisymmetric counterparts are filled in automatically.
#[derive(Debug, Deserialize)]
struct RawAlgebraFile {
    dim: usize,
    #[serde(default)]
    names: Vec<String>,
    #[serde(default)]
    brackets: Vec<[i64; 5]>,
    #[serde(default)]
    matrix_model: Option<Vec<Vec<String>>>,
    #[serde(default)]
    model_dim: Option<usize>,
}

pub fn parse_rat(s: &str) -> Result<Rat, FixtureError> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n = BigInt::from_str(n.trim()).map_err(|e| FixtureError::Parse(e.to_string()))?;
        let d = BigInt::from_str(d.trim()).map_err(|e| FixtureError::Parse(e.to_string()))?;
        Ok(Rat::new(n, d))
    } else {
        let n = BigInt::from_str(s).map_err(|e| FixtureError::Parse(e.to_string()))?;
        Ok(Rat::from(n))
    }
}

pub fn load_algebra(path: &Path) -> Result<AlgebraSpec, FixtureError> {
    let text = std::fs::read_to_string(path)?;
    let raw: RawAlgebraFile = if path.extension().map(|e| e == "json").unwrap_or(false) {
        serde_json::from_str(&text).map_err(|e| FixtureError::Parse(e.to_string()))?
    } else {
        toml::from_str(&text).map_err(|e| FixtureError::Parse(e.to_string()))?
    };
    from_raw(raw)
}

fn from_raw(raw: RawAlgebraFile) -> Result<AlgebraSpec, FixtureError> {
    let dim = raw.dim;
    let mut c = zero_constants(dim);
    for row in &raw.brackets {
        let (i, j, k) = (row[0] as usize, row[1] as usize, row[2] as usize);
        if i == 0 || j == 0 || k == 0 || i > dim || j > dim || k > dim || row[4] == 0 {
            return Err(FixtureError::Parse(format!("bad bracket row {:?}", row)));
        }
        let v = Rat::new(BigInt::from(row[3]), BigInt::from(row[4]));
        c[i - 1][j - 1][k - 1] = &c[i - 1][j - 1][k - 1] + &v;
        c[j - 1][i - 1][k - 1] = &c[j - 1][i - 1][k - 1] - &v;
    }
    let alg = validate(dim, raw.names, c)?;
    let (models, model_dim) = match raw.matrix_model {
        None => (None, 0),
        Some(rows) => {
            if rows.len() != dim {
                return Err(FixtureError::Parse(
                    "matrix_model must have one matrix per basis element".into(),
                ));
            }
            let md = raw.model_dim.unwrap_or_else(|| {
                (rows[0].len() as f64).sqrt().round() as usize
            });
            let mut models = Vec::with_capacity(dim);
            for flat in rows {
                if flat.len() != md * md {
                    return Err(FixtureError::Parse("matrix_model entry has wrong size".into()));
                }
                let mut m = vec![vec![rat_i(0); md]; md];
                for (idx, s) in flat.iter().enumerate() {
                    m[idx / md][idx % md] = parse_rat(s)?;
                }
                models.push(m);
            }
            (Some(models), md)
        }
    };
    Ok(AlgebraSpec {
        alg,
        models,
        model_dim,
    })
}
