//! One-dimensional factorization: given a one-parameter group π(t) = exp(tM)
//! and a finite bounded family B, produce a single kernel χ with χ̂ = 1/Q and
//! companions h^v with γ_v = χ∗h^v and v = ∫χ̌(t)h^v(t)dt. The multiplier Q
//! is funded by the decay table of the split Fourier–Laplace transforms via
//! the weight σ, and χ is recovered in closed form by partial fractions.

use nalgebra::{DMatrix, DVector};
use num::complex::Complex64;
use thiserror::Error;

use crate::entireq::{self, EntireQError, StripEntire};
use crate::exec;
use crate::numeric::{self, Grid};
use crate::repmodel::{MatrixRep, Orbit, RepError};
use crate::weights::{self, Tau, WeightError, WeightFunction};

pub const K_MAX_DECAY: usize = 16;
const K_CAP: usize = 64;

#[derive(Debug, Error)]
pub enum Factor1dError {
    #[error("damped integrand keeps edge mass {edge_mass} (needs λ above the orbit type)")]
    InsufficientDamping { edge_mass: f64 },
    #[error("{which} residual {value} for vector {vector} exceeds tolerance {tol}")]
    ResidualExceeded {
        which: &'static str,
        vector: usize,
        value: f64,
        tol: f64,
    },
    #[error(transparent)]
    Certificate(#[from] EntireQError),
    #[error(transparent)]
    Weights(#[from] WeightError),
    #[error(transparent)]
    Rep(#[from] RepError),
}

/// Smooth partition step: 0 on (−∞, −1], 1 on [0, ∞), a normalized bump
/// integral in between — C^∞ with supports exact by construction.
pub fn smoothstep_plus(t: f64) -> f64 {
    if t <= -1.0 {
        return 0.0;
    }
    if t >= 0.0 {
        return 1.0;
    }
    // ∫ exp(-1/(s(1-s))) over [0, t+1], normalized; 400-point trapezoid is
    // far below f64 noise for this analytic integrand
    let bump = |s: f64| {
        if s <= 0.0 || s >= 1.0 {
            0.0
        } else {
            (-1.0 / (s * (1.0 - s))).exp()
        }
    };
    let quad = |upper: f64| {
        let n = 400;
        let h = upper / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            acc += w * bump(i as f64 * h);
        }
        acc * h
    };
    quad(t + 1.0) / quad(1.0)
}

/// φ₋ + φ₊ = 1 sampled on a grid, supp φ₋ ⊆ (−∞, 0], supp φ₊ ⊆ [−1, ∞).
#[derive(Clone, Debug)]
pub struct SplitPair {
    pub grid: Grid,
    pub phi_plus: Vec<f64>,
    pub phi_minus: Vec<f64>,
}

impl SplitPair {
    pub fn new(grid: Grid) -> SplitPair {
        let phi_plus: Vec<f64> = grid.points().iter().map(|&t| smoothstep_plus(t)).collect();
        let phi_minus = phi_plus.iter().map(|p| 1.0 - p).collect();
        SplitPair {
            grid,
            phi_plus,
            phi_minus,
        }
    }
}

/// Split Fourier–Laplace data on the two working lines Im z = ±λ plus the
/// polynomial-decay table C_k over the family.
pub struct LaplaceData {
    pub lambda: f64,
    pub grid: Grid,
    /// per vector, per component: F^v(ξ+iλ) in signed frequency order
    pub f_plus: Vec<Vec<Vec<Complex64>>>,
    /// per vector, per component: F^v(ξ−iλ)
    pub f_minus: Vec<Vec<Vec<Complex64>>>,
    /// C_k = sup over lines/family/reliable band of (1+|ξ|)^k ‖F^v‖, k = 1..
    pub c_k: Vec<f64>,
    /// C_0 = peak of ‖F^v‖, the family scale
    pub c0: f64,
    /// indices of the reliable frequency band (above the noise floor)
    pub band: (usize, usize),
}

/// Fourier transforms of the damped split orbits e^{∓λt}φ_±(t)γ_v(t) on the
/// shifted lines; fails if λ does not dominate the orbit growth.
pub fn laplace_transform(
    orbits: &[Orbit],
    lambda: f64,
    k_max: usize,
    damping_tol: f64,
) -> Result<LaplaceData, Factor1dError> {
    assert!(!orbits.is_empty());
    let grid = orbits[0].grid.clone();
    let split = SplitPair::new(grid.clone());
    let d = orbits[0].v.len();
    let n = grid.n;
    let mut f_plus = vec![];
    let mut f_minus = vec![];
    for orbit in orbits {
        // edge mass of the damped integrands: φ₊ side at +T, φ₋ side at −T
        let damp = |j: usize, sign: f64| (sign * lambda * grid.t(j)).exp();
        let edge = (orbit.samples[n - 1].norm() * split.phi_plus[n - 1] * damp(n - 1, -1.0))
            .max(orbit.samples[0].norm() * split.phi_minus[0] * damp(0, 1.0));
        if edge > damping_tol {
            return Err(Factor1dError::InsufficientDamping { edge_mass: edge });
        }
        let mut fp = vec![];
        let mut fm = vec![];
        for c in 0..d {
            let plus: Vec<Complex64> = (0..n)
                .map(|j| {
                    Complex64::new(orbit.samples[j][c] * split.phi_plus[j] * damp(j, -1.0), 0.0)
                })
                .collect();
            let minus: Vec<Complex64> = (0..n)
                .map(|j| {
                    Complex64::new(
                        -orbit.samples[j][c] * split.phi_minus[j] * damp(j, 1.0),
                        0.0,
                    )
                })
                .collect();
            fp.push(numeric::fourier_forward(&grid, &plus));
            fm.push(numeric::fourier_forward(&grid, &minus));
        }
        f_plus.push(fp);
        f_minus.push(fm);
    }
    // pointwise family sup of ‖F‖ over both lines
    let norms: Vec<f64> = (0..n)
        .map(|k| {
            let mut s: f64 = 0.0;
            for v in 0..orbits.len() {
                let np: f64 = (0..d).map(|c| f_plus[v][c][k].norm_sqr()).sum();
                let nm: f64 = (0..d).map(|c| f_minus[v][c][k].norm_sqr()).sum();
                s = s.max(np.sqrt()).max(nm.sqrt());
            }
            s
        })
        .collect();
    // reliable band: where the transforms sit above the relative noise floor
    let peak = norms.iter().cloned().fold(0.0, f64::max);
    let floor = peak * 1e-13;
    let lo = norms.iter().position(|&v| v > floor).unwrap_or(0);
    let hi = norms.iter().rposition(|&v| v > floor).unwrap_or(n - 1);
    let freqs = grid.frequencies();
    let c_k: Vec<f64> = (1..=k_max)
        .map(|k| {
            (lo..=hi)
                .map(|j| (1.0 + freqs[j].abs()).powi(k as i32) * norms[j])
                .fold(0.0, f64::max)
        })
        .collect();
    Ok(LaplaceData {
        lambda,
        grid,
        f_plus,
        f_minus,
        c_k,
        c0: peak,
        band: (lo, hi),
    })
}

/// τ from the scale-normalized table C_k/C_0, so the multiplier (and hence
/// χ) is invariant under scaling the family B.
pub fn tau_from_laplace(data: &LaplaceData) -> Tau {
    let scale = if data.c0 > 0.0 { data.c0 } else { 1.0 };
    build_tau(&data.c_k.iter().map(|c| c / scale).collect::<Vec<_>>())
}

/// τ(t) = max_{0<k<t}(k log(1+t) − log C_k) ∨ 0 from the decay table.
pub fn build_tau(c_k: &[f64]) -> Tau {
    Tau::PolyBound(c_k.iter().map(|c| c.ln()).collect())
}

/// χ in closed form by partial fractions of 1/Q: with Q(ξ) = Π(1+ξ²/r_k²),
/// χ(t) = Σ_k a_k (r_k/2) e^{−r_k|t|} and χ̂(ξ) = Σ_k a_k r_k²/(r_k²+ξ²).
/// χ is even and real, so χ̌ = χ.
#[derive(Clone, Debug, PartialEq)]
pub struct ChiKernel {
    pub roots: Vec<f64>,
    pub coeffs: Vec<f64>,
}

impl ChiKernel {
    pub fn from_q(q: &StripEntire) -> ChiKernel {
        let r = &q.roots;
        let coeffs: Vec<f64> = (0..r.len())
            .map(|k| {
                let mut a = 1.0;
                for j in 0..r.len() {
                    if j != k {
                        a /= 1.0 - (r[k] * r[k]) / (r[j] * r[j]);
                    }
                }
                a
            })
            .collect();
        ChiKernel {
            roots: r.clone(),
            coeffs,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.roots
            .iter()
            .zip(&self.coeffs)
            .map(|(&r, &a)| a * r / 2.0 * (-r * t.abs()).exp())
            .sum()
    }

    /// k-th derivative for t ≠ 0 (continuous up to order 2K−2 by the moment
    /// cancellations of the a_k; at t = 0 the two-sided limit is returned).
    pub fn deriv(&self, t: f64, k: usize) -> f64 {
        let sign = if t < 0.0 { -1.0 } else { 1.0 };
        self.roots
            .iter()
            .zip(&self.coeffs)
            .map(|(&r, &a)| {
                a * r / 2.0 * (-r * sign).powi(k as i32) * (-r * t.abs()).exp()
            })
            .sum()
    }

    /// χ̂(ξ) = 1/Q(ξ).
    pub fn hat(&self, xi: f64) -> f64 {
        self.roots
            .iter()
            .zip(&self.coeffs)
            .map(|(&r, &a)| a * r * r / (r * r + xi * xi))
            .sum()
    }

    /// sup over the window of e^{μ|t|} Σ_{k≤orders} |χ^{(k)}(t)|; finite iff
    /// μ is below the slowest root.
    pub fn decay_certificate(&self, mu: f64, t_half: f64, points: usize, orders: usize) -> f64 {
        exec::indexed_max(points, |i| {
            let t = -t_half + 2.0 * t_half * i as f64 / (points - 1) as f64;
            let total: f64 = (0..=orders).map(|k| self.deriv(t, k).abs()).sum();
            (mu * t.abs()).exp() * total
        })
    }
}

/// Output of `factorize`: the shared χ, the companions h^v on the doubled
/// window, B′ = {h^v(0)}, and the per-vector residuals.
pub struct FactorResult {
    pub lambda: f64,
    pub strip: f64,
    pub mu: f64,
    pub sigma: WeightFunction,
    pub q: StripEntire,
    pub chi: ChiKernel,
    /// doubled window grid carrying h^v and the convolution check
    pub grid: Grid,
    pub h: Vec<Vec<DVector<f64>>>,
    /// B′ = h^v(0)
    pub h0: Vec<DVector<f64>>,
    pub residual1: Vec<f64>,
    pub residual2: Vec<f64>,
    pub orbit_residual: Vec<f64>,
    pub chi_decay_constant: f64,
}

/// Q applied as an operator: Σ_j q_j (−1)^j M^{2j} = Q(−iM), so that
/// h^v(t) = π(t) Q(−iM) v has ĥ = Q·γ̂ and γ_v = χ∗h^v.
pub fn q_operator(q: &StripEntire, m: &DMatrix<f64>) -> DMatrix<f64> {
    let coeffs = q.poly_coeffs();
    let d = m.nrows();
    let neg_m2 = -(m * m);
    let mut acc = DMatrix::<f64>::zeros(d, d);
    let mut power = DMatrix::<f64>::identity(d, d);
    for (j, &c) in coeffs.iter().enumerate() {
        acc += &power * c;
        if j + 1 < coeffs.len() {
            power = &power * &neg_m2;
        }
    }
    acc
}

/// Factor B = Π(χ)(B′) for a one-parameter group: one χ for the family, h^v
/// per vector, residuals checked against `tol`.
pub fn factorize(
    rep: &MatrixRep,
    b: &[DVector<f64>],
    t_half: f64,
    n: usize,
    tol: f64,
) -> Result<FactorResult, Factor1dError> {
    let m = rep.generator().expect("factorize needs a one-parameter group");
    let grid = Grid::new(t_half, n);
    if b.is_empty() {
        let sigma = WeightFunction::from_log_jumps(vec![1.0]);
        let q = entireq::build_q(&sigma, 1.0, 0, 0.5)?;
        let chi = ChiKernel::from_q(&q);
        return Ok(FactorResult {
            lambda: 0.0,
            strip: 1.0,
            mu: 0.0,
            sigma,
            q,
            chi,
            grid,
            h: vec![],
            h0: vec![],
            residual1: vec![],
            residual2: vec![],
            orbit_residual: vec![],
            chi_decay_constant: 0.0,
        });
    }

    let orbits: Vec<Orbit> = b
        .iter()
        .map(|v| Orbit::sample(rep, v.clone(), grid.clone()))
        .collect();
    // quantize the fitted type to a coarse lattice so λ (and hence χ) is
    // invariant under rescaling the family
    let raw = orbits.iter().map(|o| o.lambda_orbit).fold(0.0, f64::max);
    let lambda = ((raw + 1.0) * 64.0).ceil() / 64.0;
    let strip = lambda + 1.0;
    let data = laplace_transform(&orbits, lambda, K_MAX_DECAY, 1e-2)?;
    let tau = tau_from_laplace(&data);
    let sigma = weights::build_sigma_auto_log(&[tau], 1e6)?;

    // doubled window: h and χ sampled on [−2T, 2T] so the convolution covers
    // the inner part of [−T, T] with exponentially small truncation
    let big = Grid::new(2.0 * t_half, 2 * n);
    let gamma_big: Vec<Orbit> = b
        .iter()
        .map(|v| Orbit::sample(rep, v.clone(), big.clone()))
        .collect();

    let mut k = 8;
    let mut last_err;
    loop {
        let q = entireq::build_q(&sigma, strip, k, t_half)?;
        let chi = ChiKernel::from_q(&q);
        let t1 = sigma.jumps()[0];
        let mu = (strip + t1) / 2.0;
        match verify(rep, m, b, &gamma_big, &big, t_half, tol, q, chi, mu) {
            Ok(mut result) => {
                result.lambda = lambda;
                result.strip = strip;
                result.sigma = sigma;
                return Ok(result);
            }
            Err(e) => last_err = e,
        }
        // doubling K only helps while σ still has unused finite jumps
        if k >= K_CAP || k >= sigma.jump_count() {
            return Err(last_err);
        }
        k *= 2;
    }
}

/// (χ∗h)(t_i) for an orbit companion h(t) = π(t)w, integrated exactly per
/// grid interval: on [s_j, s_j+Δ] the integrand factor h(t−s) equals
/// e^{−(s−s_j)M} h(t−s_j), so each root r contributes a two-sided first-order
/// recursion with the exact weights G± = (r/2)(rI±M)^{−1}(I−e^{−Δ(rI±M)}).
/// This stays accurate for roots far below the grid resolution, where plain
/// sampled convolution cannot see the kernel spike.
pub fn convolve_chi_orbit(
    chi: &ChiKernel,
    m: &DMatrix<f64>,
    h: &[DVector<f64>],
    delta: f64,
) -> Vec<DVector<f64>> {
    let d = m.nrows();
    let n = h.len();
    let id = DMatrix::<f64>::identity(d, d);
    let mut out = vec![DVector::<f64>::zeros(d); n];
    for (&r, &a) in chi.roots.iter().zip(&chi.coeffs) {
        let decay = (-r * delta).exp();
        let ap = &id * r + m;
        let am = &id * r - m;
        let gp = ap.clone().try_inverse().expect("rI+M invertible for r beyond the spectrum")
            * (&id - numeric::expm(&(&ap * (-delta))))
            * (r / 2.0);
        let gm = am.clone().try_inverse().expect("rI−M invertible for r beyond the spectrum")
            * (&id - numeric::expm(&(&am * (-delta))))
            * (r / 2.0);
        // causal sweep: P_i = ∫_0^∞ (r/2)e^{−rs} h(t_i−s) ds
        let mut p = DVector::<f64>::zeros(d);
        for i in 0..n {
            p = &gp * &h[i] + p * decay;
            out[i] += &p * a;
        }
        // anticausal sweep: Q_i = ∫_{−∞}^0 (r/2)e^{r s} h(t_i−s) ds
        let mut qv = DVector::<f64>::zeros(d);
        for i in (0..n).rev() {
            qv = &gm * &h[i] + qv * decay;
            out[i] += &qv * a;
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn verify(
    rep: &MatrixRep,
    m: &DMatrix<f64>,
    b: &[DVector<f64>],
    gamma_big: &[Orbit],
    big: &Grid,
    t_half: f64,
    tol: f64,
    q: StripEntire,
    chi: ChiKernel,
    mu: f64,
) -> Result<FactorResult, Factor1dError> {
    let q_op = q_operator(&q, m);
    let n2 = big.n;

    let mut h_all = vec![];
    let mut h0_all = vec![];
    let mut residual1 = vec![];
    let mut residual2 = vec![];
    let mut orbit_residual = vec![];
    for (vi, v) in b.iter().enumerate() {
        let h0 = &q_op * v;
        let h_orbit = Orbit::sample(rep, h0.clone(), big.clone());
        // Residual₁: γ_v = χ∗h on the inner 60% of [−T, T]
        let conv = convolve_chi_orbit(&chi, m, &h_orbit.samples, big.step());
        let mut r1: f64 = 0.0;
        for i in 0..n2 {
            if big.t(i).abs() <= 0.6 * t_half {
                r1 = r1.max((&gamma_big[vi].samples[i] - &conv[i]).norm());
            }
        }
        // Residual₂: v = ∫χ̌(t)h(t)dt = (χ∗h)(0) since χ is even
        let r2 = (v - &conv[big.zero_freq_index()]).norm();
        // orbit identity π(t)h(0) = h(t), strided over [−T, T]
        let mut ro: f64 = 0.0;
        for i in (0..n2).step_by(n2 / 128) {
            if big.t(i).abs() <= t_half {
                ro = ro.max((rep.pi_t(big.t(i)) * &h0 - &h_orbit.samples[i]).norm());
            }
        }
        h_all.push(h_orbit.samples);
        h0_all.push(h0);
        residual1.push(r1);
        residual2.push(r2);
        orbit_residual.push(ro);
    }

    let chi_decay_constant = chi.decay_certificate(mu, 8.0, 1 << 14, 2);
    let worst = |vals: &[f64]| {
        vals.iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, &v)| (i, v))
            .unwrap()
    };
    for (which, vals) in [
        ("convolution", &residual1),
        ("reconstruction", &residual2),
        ("orbit-identity", &orbit_residual),
    ] {
        let (vector, value) = worst(vals);
        if !(value <= tol) {
            return Err(Factor1dError::ResidualExceeded {
                which,
                vector,
                value,
                tol,
            });
        }
    }
    if !chi_decay_constant.is_finite() {
        return Err(Factor1dError::ResidualExceeded {
            which: "chi-decay",
            vector: 0,
            value: chi_decay_constant,
            tol: f64::INFINITY,
        });
    }
    Ok(FactorResult {
        lambda: 0.0,
        strip: 0.0,
        mu,
        sigma: WeightFunction::from_log_jumps(vec![1.0]),
        q,
        chi,
        grid: big.clone(),
        h: h_all,
        h0: h0_all,
        residual1,
        residual2,
        orbit_residual,
        chi_decay_constant,
    })
}

/// Simultaneity report: one χ served the whole family.
pub struct SimultaneityReport {
    pub max_residual: f64,
    pub bprime_bound: f64,
}

pub fn simultaneity_check(result: &FactorResult) -> SimultaneityReport {
    let max_residual = result
        .residual1
        .iter()
        .chain(&result.residual2)
        .chain(&result.orbit_residual)
        .cloned()
        .fold(0.0, f64::max);
    let bprime_bound = result.h0.iter().map(|v| v.norm()).fold(0.0, f64::max);
    SimultaneityReport {
        max_residual,
        bprime_bound,
    }
}

/// The contour form of h on the working lines, band-restricted: h(t) =
/// (e^{λt}/2π)∫Q F⁺ e^{−itξ}dξ − (e^{−λt}/2π)∫Q F⁻ e^{−itξ}dξ. Serves as an
/// independent check of the operator route on mild examples (outside the
/// reliable band the amplified noise Q·F is zeroed).
pub fn contour_h(data: &LaplaceData, q: &StripEntire, vector: usize) -> Vec<DVector<f64>> {
    let grid = &data.grid;
    let n = grid.n;
    let freqs = grid.frequencies();
    let d = data.f_plus[vector].len();
    let (lo, hi) = data.band;
    let mut per_component: Vec<Vec<Complex64>> = vec![];
    for c in 0..d {
        let mut spec_p = vec![Complex64::new(0.0, 0.0); n];
        let mut spec_m = vec![Complex64::new(0.0, 0.0); n];
        for j in lo..=hi {
            let qp = q.eval(Complex64::new(freqs[j], data.lambda));
            let qm = q.eval(Complex64::new(freqs[j], -data.lambda));
            spec_p[j] = qp * data.f_plus[vector][c][j];
            spec_m[j] = qm * data.f_minus[vector][c][j];
        }
        let hp = numeric::fourier_inverse(grid, &spec_p);
        let hm = numeric::fourier_inverse(grid, &spec_m);
        let vals: Vec<Complex64> = (0..n)
            .map(|i| {
                let t = grid.t(i);
                (data.lambda * t).exp() * hp[i] - (-data.lambda * t).exp() * hm[i]
            })
            .collect();
        per_component.push(vals);
    }
    (0..n)
        .map(|i| DVector::from_iterator(d, (0..d).map(|c| per_component[c][i].re)))
        .collect()
}
