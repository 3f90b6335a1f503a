//! The strip-budget entire multiplier Q(z) = Π_k (1 + z²/(Λ+t_k)²) built on
//! the jump sequence of a weight σ, with grid certificates: zero-freeness and
//! the e^{aσ}-type sandwich on every tested strip, Silva seminorms, the
//! mollifier family Q(0)/Q(z/n), and the polynomial-decay certificate for 1/Q
//! that funds the downstream kernel decay.

use num::complex::Complex64;
use num::Zero;
use thiserror::Error;

use crate::exec;
use crate::weights::WeightFunction;

#[derive(Debug, Error)]
pub enum EntireQError {
    #[error("strip bound certificate failed at z = {re} + {im}i: {detail}")]
    BoundCertificateFailed { re: f64, im: f64, detail: String },
}

/// Certificate for one horizontal strip |Im z| <= strip: the measured
/// envelope inf e^{-a σ(|Re z|)}|Q| (must stay positive) and
/// sup e^{-σ(|Re z|)}|Q| (recorded; finite by construction on the grid).
#[derive(Clone, Copy, Debug)]
pub struct StripCertificate {
    pub strip: f64,
    pub inf_lower: f64,
    pub sup_upper: f64,
}

/// Grid-certified decay of 1/Q: |1/Q(x+iy)| <= constant (1+|x|)^{-order} for
/// |y| <= Λ on the calibration window. The order 2K is also symbolic: Q is a
/// polynomial of degree 2K in z with nonzero leading coefficient Π r_k^{-2}.
#[derive(Clone, Copy, Debug)]
pub struct DecayCertificate {
    pub order: u32,
    pub constant: f64,
}

/// Finite product Q(z) = Π_{k<=K} (1 + z² / (Λ+t_k)²), zero-free on
/// |Im z| <= Λ because all zeros sit at |Im z| = Λ + t_k >= Λ + e.
#[derive(Clone, Debug)]
pub struct StripEntire {
    pub lambda: f64,
    /// root magnitudes r_k = Λ + t_k
    pub roots: Vec<f64>,
    pub k_order: usize,
    pub a_fit: f64,
    pub window: f64,
    pub strip_certificates: Vec<StripCertificate>,
    pub decay: DecayCertificate,
}

impl StripEntire {
    pub fn eval(&self, z: Complex64) -> Complex64 {
        let mut q = Complex64::new(1.0, 0.0);
        for &r in &self.roots {
            q *= Complex64::new(1.0, 0.0) + z * z / (r * r);
        }
        q
    }

    pub fn eval_real(&self, x: f64) -> f64 {
        self.roots.iter().map(|&r| 1.0 + x * x / (r * r)).product()
    }

    /// Coefficients q_j of Q(z) = Σ_j q_j z^{2j}, j = 0..=K.
    pub fn poly_coeffs(&self) -> Vec<f64> {
        let mut c = vec![1.0];
        for &r in &self.roots {
            let inv = 1.0 / (r * r);
            let mut next = vec![0.0; c.len() + 1];
            for (j, &cj) in c.iter().enumerate() {
                next[j] += cj;
                next[j + 1] += cj * inv;
            }
            c = next;
        }
        c
    }
}

/// Build Q from the first `k` jumps of σ (capped at the finite ones), fit the
/// lower exponent a on [0, window], and certify every strip |Im z| <= n <= Λ
/// for integer n plus Λ itself.
pub fn build_q(
    sigma: &WeightFunction,
    lambda: f64,
    k: usize,
    window: f64,
) -> Result<StripEntire, EntireQError> {
    assert!(lambda > 0.0);
    let jumps = sigma.jumps();
    let roots: Vec<f64> = jumps
        .iter()
        .take(k)
        .filter(|t| t.is_finite())
        .map(|t| lambda + t)
        .collect();
    let k_order = roots.len();
    let mut q = StripEntire {
        lambda,
        roots,
        k_order,
        a_fit: 1.0,
        window,
        strip_certificates: vec![],
        decay: DecayCertificate {
            order: 2 * k_order as u32,
            constant: 0.0,
        },
    };
    if k_order == 0 {
        // empty product: Q = 1, only valid against σ = 0
        if sigma.eval(window) > 0.0 {
            return Err(EntireQError::BoundCertificateFailed {
                re: window,
                im: 0.0,
                detail: "K = 0 requires σ = 0 on the window".into(),
            });
        }
        return Ok(q);
    }

    // a_fit: largest exponent with Q(x) >= e^{a σ(x)} on the window, i.e. the
    // pointwise infimum of log Q / σ where σ > 0, clamped into (0, 1]
    let xs: Vec<f64> = (0..=4000).map(|i| window * i as f64 / 4000.0).collect();
    let mut a = f64::INFINITY;
    for &x in &xs {
        let s = sigma.eval(x);
        if s > 1e-12 {
            a = a.min(q.eval_real(x).ln() / s);
        }
    }
    if !(a > 0.0) {
        return Err(EntireQError::BoundCertificateFailed {
            re: window,
            im: 0.0,
            detail: format!("nonpositive growth exponent {}", a),
        });
    }
    q.a_fit = (a * 0.999).min(1.0);

    // strip certificates for |Im z| <= n, integer n up to Λ, plus Λ
    let mut strips: Vec<f64> = (1..=lambda.floor() as usize).map(|n| n as f64).collect();
    if strips.last().map(|&s| s < lambda).unwrap_or(true) {
        strips.push(lambda);
    }
    let nx = 801;
    let ny = 17;
    for &s in &strips {
        let scan = exec::indexed_map_collect(nx * ny, |idx| {
            let i = idx / ny;
            let j = idx % ny;
            let x = -window + 2.0 * window * i as f64 / (nx - 1) as f64;
            let y = -s + 2.0 * s * j as f64 / (ny - 1) as f64;
            let qv = q.eval(Complex64::new(x, y)).norm();
            let sv = sigma.eval(x.abs());
            (
                (-q.a_fit * sv).exp() * qv, // lower envelope sample
                (-sv).exp() * qv,           // upper envelope sample
                qv,
                x,
                y,
            )
        });
        let mut inf_lower = f64::INFINITY;
        let mut sup_upper: f64 = 0.0;
        for &(lo, up, qv, x, y) in &scan {
            if qv == 0.0 || !qv.is_finite() {
                return Err(EntireQError::BoundCertificateFailed {
                    re: x,
                    im: y,
                    detail: "Q vanishes or overflows on the budget strip".into(),
                });
            }
            inf_lower = inf_lower.min(lo);
            sup_upper = sup_upper.max(up);
        }
        if inf_lower <= 0.0 || !sup_upper.is_finite() {
            return Err(EntireQError::BoundCertificateFailed {
                re: window,
                im: s,
                detail: "strip envelope degenerate".into(),
            });
        }
        q.strip_certificates.push(StripCertificate {
            strip: s,
            inf_lower,
            sup_upper,
        });
    }

    // decay constant for |1/Q| <= C (1+|x|)^{-2K} across the budget strip
    let order = 2 * k_order as u32;
    let constant = exec::indexed_max(nx * ny, |idx| {
        let i = idx / ny;
        let j = idx % ny;
        let x = -window + 2.0 * window * i as f64 / (nx - 1) as f64;
        let y = -lambda + 2.0 * lambda * j as f64 / (ny - 1) as f64;
        (1.0 + x.abs()).powi(order as i32) / q.eval(Complex64::new(x, y)).norm()
    });
    q.decay = DecayCertificate { order, constant };
    Ok(q)
}

/// Grid Silva seminorm: sup |ψ(z)| (1+|Re z|)^k over the strip |Im z| <= k.
pub fn silva_seminorm<F: Fn(Complex64) -> Complex64 + Sync>(
    psi: F,
    k: usize,
    grid: &[f64],
) -> f64 {
    let lines = 2 * k + 1;
    let mut sup: f64 = 0.0;
    for j in 0..lines {
        let y = -(k as f64) + 2.0 * k as f64 * j as f64 / (lines - 1).max(1) as f64;
        for &x in grid {
            let v = psi(Complex64::new(x, y)).norm() * (1.0 + x.abs()).powi(k as i32);
            sup = sup.max(v);
        }
    }
    sup
}

/// Mollifier family φ_n(z) = Q(0)/Q(z/n); φ_n(0) = 1 and φ_n -> 1 on
/// compacts as n grows.
#[derive(Clone, Debug)]
pub struct Mollifier {
    q: StripEntire,
    pub n: f64,
}

pub fn mollifier(q: &StripEntire, n: f64) -> Mollifier {
    assert!(n >= 1.0);
    Mollifier { q: q.clone(), n }
}

impl Mollifier {
    pub fn eval(&self, x: f64) -> f64 {
        1.0 / self.q.eval_real(x / self.n)
    }

    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        let q = self.q.eval(z / self.n);
        if q.is_zero() {
            Complex64::new(f64::INFINITY, 0.0)
        } else {
            q.inv()
        }
    }
}
