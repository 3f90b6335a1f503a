//! Piecewise-logarithmic minorant weights: a weight σ is determined by its
//! jump sequence (t_k), with σ = 0 below t_1 = e and
//! σ(t) = n log t − Σ_{k≤n} log t_k on [t_n, t_{n+1}). Jumps are selected
//! inductively so that σ stays below every supplied majorant τ_n/n, doubles
//! slowly enough for axiom (α), and outgrows log t for axiom (γ).
//!
//! Jumps are stored as logarithms: the doubling condition makes log t_n grow
//! geometrically, so t_n itself overflows doubles after a dozen jumps.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum WeightError {
    #[error("grid exhausted after placing {placed} of {requested} jumps (T_max too small)")]
    GridExhausted { placed: usize, requested: usize },
    #[error("majorant {index} fails its growth precondition near t = {t}")]
    InvalidTau { index: usize, t: f64 },
    #[error("weight axiom ({axiom}) fails at t = {witness}")]
    AxiomFailed { axiom: char, witness: f64 },
}

/// A majorant rate function, either in closed form or as a sampled table
/// (interpolated linearly in log t, clamped at the ends).
#[derive(Clone, Debug)]
pub enum Tau {
    /// τ(t) = c t
    Linear(f64),
    /// τ(t) = c t^p
    Power(f64, f64),
    /// τ(t) = c (log t)^p
    LogPower(f64, f64),
    /// sampled (t, τ(t)) pairs with t increasing
    Table(Vec<(f64, f64)>),
    /// τ(t) = max_{0<k<t} (k log(1+t) − log C_k) ∨ 0 from a polynomial-decay
    /// table C_1..C_k (entry k−1 holds log C_k)
    PolyBound(Vec<f64>),
}

impl Tau {
    pub fn eval(&self, t: f64) -> f64 {
        self.eval_log(t.max(f64::MIN_POSITIVE).ln())
    }

    /// τ(e^u); overflow saturates to +∞, which is fine for budget checks.
    pub fn eval_log(&self, u: f64) -> f64 {
        match self {
            Tau::Linear(c) => c * u.exp(),
            Tau::Power(c, p) => c * (p * u).exp(),
            Tau::LogPower(c, p) => {
                if u <= 0.0 {
                    0.0
                } else {
                    c * u.powf(*p)
                }
            }
            Tau::Table(rows) => {
                if rows.is_empty() {
                    return 0.0;
                }
                if u <= rows[0].0.ln() {
                    return rows[0].1;
                }
                if u >= rows[rows.len() - 1].0.ln() {
                    return rows[rows.len() - 1].1;
                }
                let i = rows.partition_point(|(x, _)| x.ln() <= u) - 1;
                let (t0, v0) = rows[i];
                let (t1, v1) = rows[i + 1];
                let w = (u - t0.ln()) / (t1.ln() - t0.ln());
                v0 + w * (v1 - v0)
            }
            Tau::PolyBound(log_c) => {
                // log(1+e^u) without overflow
                let l1p = if u > 0.0 {
                    u + (-u).exp().ln_1p()
                } else {
                    u.exp().ln_1p()
                };
                let mut best: f64 = 0.0;
                for (i, &lc) in log_c.iter().enumerate() {
                    let k = (i + 1) as f64;
                    if u.exp() > k {
                        best = best.max(k * l1p - lc);
                    }
                }
                best
            }
        }
    }
}

/// σ determined by its jumps; `log_jumps[0] = 1` (t_1 = e) always.
#[derive(Clone, Debug)]
pub struct WeightFunction {
    log_jumps: Vec<f64>,
    /// cumulative sums: partial[n-1] = Σ_{k≤n} log t_k
    partial: Vec<f64>,
}

impl WeightFunction {
    pub fn from_log_jumps(log_jumps: Vec<f64>) -> Self {
        assert!(!log_jumps.is_empty());
        assert!((log_jumps[0] - 1.0).abs() < 1e-12, "t_1 = e required");
        let mut partial = Vec::with_capacity(log_jumps.len());
        let mut acc = 0.0;
        for u in &log_jumps {
            acc += u;
            partial.push(acc);
        }
        WeightFunction { log_jumps, partial }
    }

    pub fn from_jumps(jumps: Vec<f64>) -> Self {
        WeightFunction::from_log_jumps(jumps.iter().map(|t| t.ln()).collect())
    }

    /// Jump points t_k = exp(log_jumps[k]); overflows to +∞ for huge jumps.
    pub fn jumps(&self) -> Vec<f64> {
        self.log_jumps.iter().map(|u| u.exp()).collect()
    }

    pub fn log_jumps(&self) -> &[f64] {
        &self.log_jumps
    }

    pub fn jump_count(&self) -> usize {
        self.log_jumps.len()
    }

    /// Index n of the branch containing t (number of jumps ≤ t).
    pub fn branch(&self, t: f64) -> usize {
        if t <= 0.0 {
            return 0;
        }
        self.branch_log(t.ln())
    }

    pub fn branch_log(&self, u: f64) -> usize {
        self.log_jumps.partition_point(|x| *x <= u)
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        self.eval_log(t.ln())
    }

    /// σ(e^u).
    pub fn eval_log(&self, u: f64) -> f64 {
        let n = self.branch_log(u);
        if n == 0 {
            return 0.0;
        }
        n as f64 * u - self.partial[n - 1]
    }
}

/// Inductive jump selection per the minorant construction: starting from
/// t_1 = e, each t_{n+1} is the smallest grid point with
///   t_{n+1} >= 2 t_n,
///   log t_{n+1} >= max_{k<=n} 2^{n+1-k} log t_k,
///   log t_{n+1} <= (n+1)^{-2} min_{k<=n+1} τ_k(t_{n+1}).
/// τ_k for k beyond the supplied list reuses the last entry.
pub fn build_sigma(
    taus: &[Tau],
    requested: usize,
    t_max: f64,
) -> Result<WeightFunction, WeightError> {
    build_sigma_log(taus, requested, t_max.ln())
}

/// Same construction with the window given as log T_max, so jump sequences
/// whose points overflow doubles can still be represented.
pub fn build_sigma_log(
    taus: &[Tau],
    requested: usize,
    log_t_max: f64,
) -> Result<WeightFunction, WeightError> {
    assert!(requested >= 1);
    let tau = |k: usize| &taus[(k - 1).min(taus.len() - 1)];
    let steps = 1 << 14;
    let ratio = (log_t_max - 1.0) / steps as f64;
    // the majorant must dominate log t somewhere, or no jump budget exists
    let dominates = (0..=steps).any(|i| {
        let u = 1.0 + i as f64 * ratio;
        tau(1).eval_log(u) >= u
    });
    if !dominates {
        return Err(WeightError::InvalidTau {
            index: 1,
            t: std::f64::consts::E,
        });
    }
    let mut log_jumps = vec![1.0f64];
    'outer: while log_jumps.len() < requested {
        let n = log_jumps.len();
        let lower = (1..=n)
            .map(|k| 2f64.powi((n + 1 - k) as i32) * log_jumps[k - 1])
            .fold(0.0, f64::max)
            .max(log_jumps[n - 1] + std::f64::consts::LN_2);
        // geometric scan from the doubling lower bound: fine resolution near
        // the bound, coarse far out, so deep (log-huge) jumps stay reachable
        let mut u = lower;
        while u <= log_t_max {
            let budget = (1..=n + 1)
                .map(|k| tau(k).eval_log(u))
                .fold(f64::INFINITY, f64::min)
                / ((n + 1) * (n + 1)) as f64;
            if u <= budget {
                log_jumps.push(u);
                continue 'outer;
            }
            u = (u * 1.001).max(u + 1e-4);
        }
        return Err(WeightError::GridExhausted {
            placed: log_jumps.len(),
            requested,
        });
    }
    Ok(WeightFunction::from_log_jumps(log_jumps))
}

/// Place as many jumps as fit below `t_max`.
pub fn build_sigma_auto(taus: &[Tau], t_max: f64) -> Result<WeightFunction, WeightError> {
    build_sigma_auto_log(taus, t_max.ln())
}

pub fn build_sigma_auto_log(taus: &[Tau], log_t_max: f64) -> Result<WeightFunction, WeightError> {
    let mut best: Option<WeightFunction> = None;
    for count in 1.. {
        match build_sigma_log(taus, count, log_t_max) {
            Ok(w) => best = Some(w),
            Err(WeightError::GridExhausted { .. }) => break,
            Err(e) => return Err(e),
        }
    }
    best.ok_or(WeightError::GridExhausted {
        placed: 0,
        requested: 1,
    })
}

/// Axiom report: smallest empirical doubling constant and the growth margin
/// of σ/log t over the tail of the grid.
#[derive(Clone, Copy, Debug)]
pub struct WeightReport {
    pub c_alpha: f64,
    pub gamma_margin: f64,
}

/// Check σ >= 0 increasing, (α) σ(2t) <= C_α σ(t) + C_α with the smallest
/// grid-fitted C_α, and (γ) σ(t)/log t nondecreasing with positive total
/// increase for t >= gamma_from.
pub fn check_weight_axioms<F: Fn(f64) -> f64>(
    sigma: F,
    grid: &[f64],
    gamma_from: f64,
) -> Result<WeightReport, WeightError> {
    let mut c_alpha: f64 = 0.0;
    let mut prev_val = f64::NEG_INFINITY;
    let mut prev_ratio = f64::NEG_INFINITY;
    let mut first_ratio = None;
    let mut last_ratio = None;
    let t_max = grid.last().copied().unwrap_or(1.0);
    for &t in grid {
        let v = sigma(t);
        if v < -1e-12 {
            return Err(WeightError::AxiomFailed { axiom: 'm', witness: t });
        }
        if v < prev_val - 1e-9 {
            return Err(WeightError::AxiomFailed { axiom: 'm', witness: t });
        }
        prev_val = v;
        if 2.0 * t <= t_max {
            c_alpha = c_alpha.max(sigma(2.0 * t) / (v + 1.0));
        }
        if t >= gamma_from && t > 1.0 {
            let ratio = v / t.ln();
            if ratio < prev_ratio - 1e-9 {
                return Err(WeightError::AxiomFailed { axiom: 'g', witness: t });
            }
            prev_ratio = ratio;
            if first_ratio.is_none() {
                first_ratio = Some(ratio);
            }
            last_ratio = Some(ratio);
        }
    }
    let gamma_margin = match (first_ratio, last_ratio) {
        (Some(a), Some(b)) => b - a,
        _ => 0.0,
    };
    if gamma_margin <= 1e-9 {
        return Err(WeightError::AxiomFailed {
            axiom: 'g',
            witness: t_max,
        });
    }
    Ok(WeightReport {
        c_alpha,
        gamma_margin,
    })
}

/// Log-spaced grid on [lo, hi].
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (llo + (lhi - llo) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const E: f64 = std::f64::consts::E;

    #[test]
    fn sigma_zero_below_first_jump() {
        let w = build_sigma(&[Tau::Linear(1.0)], 3, 1e6).unwrap();
        assert_eq!(w.eval(0.5), 0.0);
        assert_eq!(w.eval(2.0), 0.0);
        assert!(w.eval(E + 0.01) > 0.0);
    }

    #[test]
    fn sigma_left_limit_at_second_jump() {
        let w = build_sigma(&[Tau::Linear(1.0)], 3, 1e6).unwrap();
        let t2 = w.jumps()[1];
        // on [t_1, t_2): σ(t) = log t - 1
        assert_relative_eq!(w.eval(t2 * (1.0 - 1e-9)), t2.ln() - 1.0, epsilon = 1e-6);
        // continuity across the jump
        assert_relative_eq!(w.eval(t2 * (1.0 + 1e-9)), t2.ln() - 1.0, epsilon = 1e-6);
    }

    #[test]
    fn jump_conditions_hold_exactly() {
        let w = build_sigma(&[Tau::Linear(1.0)], 4, 1e6).unwrap();
        let u = w.log_jumps();
        assert_eq!(u.len(), 4);
        for n in 1..u.len() {
            assert!(u[n] >= u[n - 1] + std::f64::consts::LN_2 - 1e-12);
            for k in 1..=n {
                assert!(u[n] >= 2f64.powi((n + 1 - k) as i32) * u[k - 1] - 1e-9);
            }
        }
    }

    #[test]
    fn too_many_jumps_exhaust_grid() {
        match build_sigma(&[Tau::Linear(1.0)], 8, 1e6) {
            Err(WeightError::GridExhausted { placed, requested }) => {
                assert_eq!(requested, 8);
                assert!(placed >= 3);
            }
            other => panic!("expected GridExhausted, got {:?}", other.map(|w| w.jumps())),
        }
        let auto = build_sigma_auto(&[Tau::Linear(1.0)], 1e6).unwrap();
        assert!(auto.jump_count() >= 4);
    }

    #[test]
    fn log_space_placement_goes_deep() {
        // linear τ never binds for large t, so jumps keep doubling in log t;
        // log-space storage admits points far beyond the double range
        let w = build_sigma_log(&[Tau::Linear(1.0)], 12, 1e5).unwrap();
        assert_eq!(w.jump_count(), 12);
        assert!(w.log_jumps()[11] > 710.0); // t_12 itself would overflow
        assert!(w.jumps()[11].is_infinite());
        // σ still evaluates through eval_log
        assert!(w.eval_log(2000.0) > 0.0);
    }

    #[test]
    fn invalid_tau_rejected() {
        // τ(t) = 0.1 log t never reaches log t
        match build_sigma(&[Tau::LogPower(0.1, 1.0)], 2, 1e6) {
            Err(WeightError::InvalidTau { index: 1, .. }) => {}
            other => panic!("expected InvalidTau, got {:?}", other.map(|w| w.jumps())),
        }
    }

    #[test]
    fn minorant_property_on_grid() {
        let tau = Tau::Linear(1.0);
        let w = build_sigma_auto(&[tau.clone()], 1e6).unwrap();
        for &t in &log_grid(1.0, 1e6, 4000) {
            let n = w.branch(t);
            if n >= 1 {
                assert!(
                    w.eval(t) <= tau.eval(t) / n as f64 + 1e-9,
                    "σ({}) = {} exceeds τ/n",
                    t,
                    w.eval(t)
                );
            }
        }
        let jumps = w.jumps();
        // σ(t)/t small beyond t_3 and below 0.05 beyond t_4
        for &t in &log_grid(jumps[2], 1e6, 500) {
            assert!(w.eval(t) / t <= 0.08);
        }
        for &t in &log_grid(jumps[3], 1e6, 500) {
            assert!(w.eval(t) / t <= 0.05);
        }
        // log-slope of σ equals the branch index: >= 3 beyond t_3
        for &t in &log_grid(jumps[2] * 1.01, 1e6 / 2.0, 100) {
            let h = 1e-4;
            let slope = (w.eval(t * (1.0 + h)) - w.eval(t)) / ((1.0 + h).ln());
            assert!(slope >= 3.0 - 1e-6);
        }
    }

    #[test]
    fn axioms_pass_for_built_sigma() {
        let w = build_sigma_auto(&[Tau::Linear(1.0)], 1e6).unwrap();
        let grid = log_grid(1.0, 1e6, 3000);
        let report = check_weight_axioms(|t| w.eval(t), &grid, w.jumps()[1]).unwrap();
        assert!(report.c_alpha.is_finite());
        assert!(report.c_alpha < 100.0);
        assert!(report.gamma_margin > 0.0);
    }

    #[test]
    fn zero_weight_fails_gamma() {
        let grid = log_grid(1.0, 1e6, 500);
        match check_weight_axioms(|_| 0.0, &grid, E) {
            Err(WeightError::AxiomFailed { axiom: 'g', .. }) => {}
            other => panic!("expected gamma failure, got {:?}", other.map(|r| r.c_alpha)),
        }
    }

    #[test]
    fn log_squared_reference_weight_passes() {
        let grid = log_grid(E, 1e6, 3000);
        let report = check_weight_axioms(
            |t| if t > 1.0 { t.ln() * t.ln() } else { 0.0 },
            &grid,
            E,
        )
        .unwrap();
        // σ(2t)/σ(t) -> 1, so C_α stays small
        assert!(report.c_alpha < 5.0);
        assert!(report.gamma_margin > 1.0);
    }

    #[test]
    fn table_tau_interpolates() {
        let rows: Vec<(f64, f64)> = log_grid(1.0, 1e6, 64).iter().map(|&t| (t, t)).collect();
        let tau = Tau::Table(rows);
        // a sampled linear majorant behaves like the closed form
        let w = build_sigma(&[tau], 3, 1e6).unwrap();
        let w2 = build_sigma(&[Tau::Linear(1.0)], 3, 1e6).unwrap();
        for (a, b) in w.log_jumps().iter().zip(w2.log_jumps()) {
            assert_relative_eq!(a, b, max_relative = 0.05);
        }
    }
}
