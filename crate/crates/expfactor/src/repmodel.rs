//! Concrete matrix representations at desk scale: one-parameter groups
//! π(t) = exp(tM), matrix-group representations through the chart, sampled
//! orbit maps γ_v, exponential-type estimation by fitting, and the smeared
//! action Π(χ)v by quadrature.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

use crate::coords::{Chart, CoordsError};
use crate::exec;
use crate::numeric::{self, Grid};

#[derive(Debug, Error)]
pub enum RepError {
    #[error("window too small for a stable exponential-type fit (rms residual {residual})")]
    WindowTooSmall { residual: f64 },
    #[error("kernel tail mass {edge_mass} exceeds the quadrature budget {budget}")]
    TailTooFat { edge_mass: f64, budget: f64 },
    #[error("homomorphism defect {defect} above tolerance")]
    NotHomomorphism { defect: f64 },
    #[error(transparent)]
    Coords(#[from] CoordsError),
}

/// A representation on E = ℝ^d: either a one-parameter group generated by M
/// or a matrix group acting by its chart model.
#[derive(Clone, Debug)]
pub enum RepKind {
    OneParam(DMatrix<f64>),
    /// π(Φ(x)) is the chart's matrix model at x
    Group(Chart),
}

#[derive(Clone, Debug)]
pub struct MatrixRep {
    pub dim: usize,
    pub kind: RepKind,
}

impl MatrixRep {
    pub fn one_param(m: DMatrix<f64>) -> MatrixRep {
        assert_eq!(m.nrows(), m.ncols());
        MatrixRep {
            dim: m.nrows(),
            kind: RepKind::OneParam(m),
        }
    }

    pub fn group(chart: Chart) -> Result<MatrixRep, RepError> {
        let g = chart.phi(&vec![0.0; chart.dim()])?;
        Ok(MatrixRep {
            dim: g.nrows(),
            kind: RepKind::Group(chart),
        })
    }

    pub fn generator(&self) -> Option<&DMatrix<f64>> {
        match &self.kind {
            RepKind::OneParam(m) => Some(m),
            RepKind::Group(_) => None,
        }
    }

    /// π(t) for the one-parameter case.
    pub fn pi_t(&self, t: f64) -> DMatrix<f64> {
        match &self.kind {
            RepKind::OneParam(m) => numeric::expm(&(m * t)),
            RepKind::Group(_) => panic!("pi_t needs a one-parameter representation"),
        }
    }

    /// π(Φ(x)) for the group case.
    pub fn pi_coords(&self, x: &[f64]) -> Result<DMatrix<f64>, RepError> {
        match &self.kind {
            RepKind::OneParam(m) => {
                assert_eq!(x.len(), 1);
                Ok(numeric::expm(&(m * x[0])))
            }
            RepKind::Group(chart) => Ok(chart.phi(x)?),
        }
    }

    /// Surrogate length |g|_G of the chart point x.
    pub fn length(&self, x: &[f64]) -> f64 {
        match &self.kind {
            RepKind::OneParam(_) => x[0].abs(),
            RepKind::Group(chart) => chart.norm_surrogate_coords(x),
        }
    }

    fn coord_dim(&self) -> usize {
        match &self.kind {
            RepKind::OneParam(_) => 1,
            RepKind::Group(chart) => chart.dim(),
        }
    }

    /// Max defect ‖π(g)π(h) − π(gh)‖ over random coordinate pairs.
    pub fn homomorphism_defect<R: Rng>(
        &self,
        pairs: usize,
        window: f64,
        rng: &mut R,
    ) -> Result<f64, RepError> {
        let d = self.coord_dim();
        let mut defect: f64 = 0.0;
        for _ in 0..pairs {
            let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-window..window)).collect();
            let y: Vec<f64> = (0..d).map(|_| rng.gen_range(-window..window)).collect();
            let gh = match &self.kind {
                RepKind::OneParam(_) => self.pi_coords(&[x[0] + y[0]])?,
                RepKind::Group(chart) => {
                    let prod = chart.phi(&x)? * chart.phi(&y)?;
                    let z = chart.phi_inv(&prod)?;
                    chart.phi(&z)?
                }
            };
            defect = defect.max((self.pi_coords(&x)? * self.pi_coords(&y)? - gh).norm());
        }
        Ok(defect)
    }

    /// Fit ‖π(g)‖ ≤ C e^{λ|g|_G} on sampled points; returns (c, lambda).
    pub fn exp_type_fit<R: Rng>(
        &self,
        samples: usize,
        window: f64,
        rng: &mut R,
    ) -> Result<(f64, f64), RepError> {
        let d = self.coord_dim();
        let mut lens = Vec::with_capacity(samples);
        let mut logs = Vec::with_capacity(samples);
        for _ in 0..samples {
            let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-window..window)).collect();
            lens.push(self.length(&x));
            logs.push(self.pi_coords(&x)?.norm().ln());
        }
        let (slope, _, _) = numeric::linear_fit(&lens, &logs);
        let lambda = slope.max(0.0) * 1.1;
        let c = lens
            .iter()
            .zip(&logs)
            .map(|(&l, &y)| (y - lambda * l).exp())
            .fold(0.0, f64::max);
        Ok((c, lambda))
    }
}

/// Sampled orbit γ_v(t) = π(t)v on a uniform grid over [−T, T].
#[derive(Clone, Debug)]
pub struct Orbit {
    pub v: DVector<f64>,
    pub grid: Grid,
    pub samples: Vec<DVector<f64>>,
    pub lambda_orbit: f64,
}

impl Orbit {
    /// Sample π(t)v by stepping with exp(hM) from t = 0 outward (exact up to
    /// one expm per direction, no error accumulation across signs).
    pub fn sample(rep: &MatrixRep, v: DVector<f64>, grid: Grid) -> Orbit {
        let m = rep.generator().expect("orbit needs a one-parameter group");
        let h = grid.step();
        let step_fwd = numeric::expm(&(m * h));
        let step_bwd = numeric::expm(&(m * (-h)));
        let n = grid.n;
        let zero = grid.zero_freq_index();
        let mut samples = vec![DVector::zeros(v.len()); n];
        samples[zero] = v.clone();
        for j in zero + 1..n {
            samples[j] = &step_fwd * &samples[j - 1];
        }
        for j in (0..zero).rev() {
            samples[j] = &step_bwd * &samples[j + 1];
        }
        let mut orbit = Orbit {
            v,
            grid,
            samples,
            lambda_orbit: 0.0,
        };
        orbit.lambda_orbit = exp_type_estimate(&orbit).unwrap_or(f64::INFINITY);
        orbit
    }

    /// γ_v^{(k)} = M^k γ_v, sampled (exact formula, no differencing).
    pub fn derivatives(&self, rep: &MatrixRep, k: usize) -> Vec<DVector<f64>> {
        let m = rep.generator().expect("derivatives need a generator");
        let mut mk = DMatrix::<f64>::identity(m.nrows(), m.ncols());
        for _ in 0..k {
            mk = m * mk;
        }
        exec::map_collect(&self.samples, |g| &mk * g)
    }

    /// Membership figure for the weighted orbit space: the max over
    /// derivative orders k ≤ k_max of sup_t ‖γ^{(k)}(t)‖ e^{−λ|t|}.
    pub fn membership_bound(&self, rep: &MatrixRep, k_max: usize, lambda: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..=k_max {
            let der = self.derivatives(rep, k);
            for (j, g) in der.iter().enumerate() {
                worst = worst.max(g.norm() * (-lambda * self.grid.t(j).abs()).exp());
            }
        }
        worst
    }
}

/// Least-squares slope of log‖γ_v(t)‖ against |t| over the outer half of the
/// window, clamped ≥ 0, with a 10% margin.
pub fn exp_type_estimate(orbit: &Orbit) -> Result<f64, RepError> {
    let cutoff = orbit.grid.t_half / 2.0;
    let mut slope_max: f64 = 0.0;
    // fit each tail against |t| on its own: growth rates may differ by sign
    for side in [-1.0, 1.0] {
        let mut xs = vec![];
        let mut ys = vec![];
        for (j, g) in orbit.samples.iter().enumerate() {
            let t = orbit.grid.t(j);
            let norm = g.norm();
            if t * side >= cutoff && norm > 1e-300 {
                xs.push(t.abs());
                ys.push(norm.ln());
            }
        }
        if xs.is_empty() {
            continue;
        }
        let (slope, _, residual) = numeric::linear_fit(&xs, &ys);
        if residual > 1.0 {
            return Err(RepError::WindowTooSmall { residual });
        }
        slope_max = slope_max.max(slope);
    }
    Ok(slope_max * 1.1)
}

/// Shared exponential-type certificate for a bounded family: λ is the max of
/// the per-orbit fits and C the max membership bound at that λ.
pub fn family_exp_type(rep: &MatrixRep, orbits: &[Orbit], k_max: usize) -> (f64, f64) {
    let lambda = orbits
        .iter()
        .map(|o| o.lambda_orbit)
        .fold(0.0, f64::max);
    let c = orbits
        .iter()
        .map(|o| o.membership_bound(rep, k_max, lambda))
        .fold(0.0, f64::max);
    (lambda, c)
}

/// Π(χ)v = ∫χ(t)π(t)v dt by trapezoid over the orbit window. The kernel must
/// be sampled on the orbit's grid and decay below the budget at the edges.
pub fn smear(orbit: &Orbit, chi: &[f64], budget: f64) -> Result<DVector<f64>, RepError> {
    assert_eq!(chi.len(), orbit.samples.len());
    let h = orbit.grid.step();
    let total: f64 = chi.iter().map(|c| c.abs()).sum::<f64>() * h;
    let edge = orbit.grid.n / 50 + 1;
    let edge_mass = chi[..edge]
        .iter()
        .chain(&chi[chi.len() - edge..])
        .map(|c| c.abs())
        .fold(0.0, f64::max)
        * orbit.grid.t_half
        * 2.0;
    if edge_mass > budget * (1.0 + total) {
        return Err(RepError::TailTooFat {
            edge_mass,
            budget: budget * (1.0 + total),
        });
    }
    let weighted = exec::indexed_map_collect(chi.len(), |j| &orbit.samples[j] * chi[j]);
    Ok(numeric::trapezoid_vec(&weighted, h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dm(rows: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, rows, data)
    }

    #[test]
    fn one_param_homomorphism() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = dm(2, &[0.3, -1.1, 0.8, 0.2]);
        let rep = MatrixRep::one_param(m);
        let defect = rep.homomorphism_defect(100, 3.0, &mut rng).unwrap();
        assert!(defect <= 1e-9, "defect = {}", defect);
    }

    #[test]
    fn group_homomorphism_axb() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let chart = Chart::new(fixtures::axb()).unwrap();
        let rep = MatrixRep::group(chart).unwrap();
        let defect = rep.homomorphism_defect(100, 1.5, &mut rng).unwrap();
        assert!(defect <= 1e-9, "defect = {}", defect);
        let (c, lambda) = rep.exp_type_fit(200, 2.0, &mut rng).unwrap();
        assert!(c.is_finite() && lambda.is_finite() && lambda >= 0.0);
    }

    #[test]
    fn exp_type_zero_generator() {
        let rep = MatrixRep::one_param(DMatrix::zeros(2, 2));
        let orbit = Orbit::sample(&rep, DVector::from_vec(vec![1.0, 2.0]), Grid::new(5.0, 256));
        assert_relative_eq!(orbit.lambda_orbit, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn exp_type_hyperbolic() {
        let rep = MatrixRep::one_param(dm(2, &[1.0, 0.0, 0.0, -1.0]));
        let orbit = Orbit::sample(&rep, DVector::from_vec(vec![1.0, 1.0]), Grid::new(5.0, 512));
        // closed-form orbit (e^t, e^{-t}): slope of log-norm vs |t| is ~1
        assert!(
            orbit.lambda_orbit >= 1.0 && orbit.lambda_orbit <= 1.2,
            "lambda = {}",
            orbit.lambda_orbit
        );
    }

    #[test]
    fn exp_type_polynomial_orbit() {
        let rep = MatrixRep::one_param(dm(2, &[0.0, 1.0, 0.0, 0.0]));
        let orbit = Orbit::sample(&rep, DVector::from_vec(vec![1.0, 1.0]), Grid::new(10.0, 512));
        // orbit (v1 + t v2, v2) grows polynomially
        assert!(orbit.lambda_orbit <= 0.2, "lambda = {}", orbit.lambda_orbit);
    }

    #[test]
    fn orbit_cocycle_on_grid() {
        let rep = MatrixRep::one_param(dm(2, &[0.1, -0.9, 0.9, 0.1]));
        let grid = Grid::new(4.0, 256);
        let orbit = Orbit::sample(&rep, DVector::from_vec(vec![0.3, -1.2]), grid.clone());
        let zero = grid.zero_freq_index();
        assert_eq!(orbit.samples[zero], orbit.v);
        // γ(t+s) = π(t)γ(s) on grid intersections
        for &(i, j) in &[(150usize, 40usize), (60, 117), (130, 200)] {
            let t = grid.t(i) - grid.t(zero);
            let lhs = &orbit.samples[i + j - zero];
            let rhs = rep.pi_t(t) * &orbit.samples[j];
            assert!((lhs - rhs).norm() <= 1e-8);
        }
    }

    #[test]
    fn derivatives_exact() {
        let rep = MatrixRep::one_param(dm(2, &[1.0, 0.0, 0.0, -1.0]));
        let grid = Grid::new(3.0, 128);
        let orbit = Orbit::sample(&rep, DVector::from_vec(vec![1.0, 2.0]), grid);
        // k = 0 is the orbit itself
        assert_eq!(orbit.derivatives(&rep, 0), orbit.samples);
        // M² = I so γ'' = γ
        let d2 = orbit.derivatives(&rep, 2);
        for (a, b) in d2.iter().zip(&orbit.samples) {
            assert!((a - b).norm() <= 1e-12);
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let rep = MatrixRep::one_param(dm(2, &[0.4, 0.7, -0.5, 0.1]));
        let grid = Grid::new(2.0, 4096);
        let orbit = Orbit::sample(&rep, DVector::from_vec(vec![1.0, -0.5]), grid.clone());
        let d1 = orbit.derivatives(&rep, 1);
        let h = grid.step();
        for j in (100..4000).step_by(311) {
            let fd = (&orbit.samples[j + 1] - &orbit.samples[j - 1]) / (2.0 * h);
            assert!((&d1[j] - fd).norm() <= 1e-6, "mismatch at node {}", j);
        }
    }

    #[test]
    fn smear_trivial_action() {
        let rep = MatrixRep::one_param(DMatrix::zeros(2, 2));
        let grid = Grid::new(10.0, 1024);
        let orbit = Orbit::sample(&rep, DVector::from_vec(vec![2.0, -3.0]), grid.clone());
        let chi: Vec<f64> = grid.points().iter().map(|&t| (-t * t).exp()).collect();
        let mass = numeric::trapezoid(&chi, grid.step());
        let out = smear(&orbit, &chi, 1e-8).unwrap();
        assert!((out - &orbit.v * mass).norm() <= 1e-10);
    }

    #[test]
    fn smear_delta_family_converges() {
        let rep = MatrixRep::one_param(dm(2, &[0.0, 1.0, -1.0, 0.0]));
        let grid = Grid::new(8.0, 8192);
        let v = DVector::from_vec(vec![1.0, 0.5]);
        let orbit = Orbit::sample(&rep, v.clone(), grid.clone());
        let err_at = |w: f64| -> f64 {
            let chi: Vec<f64> = grid
                .points()
                .iter()
                .map(|&t| (-(t / w) * (t / w) / 2.0).exp() / (w * (2.0 * std::f64::consts::PI).sqrt()))
                .collect();
            (smear(&orbit, &chi, 1e-8).unwrap() - &v).norm()
        };
        let (e1, e2) = (err_at(0.2), err_at(0.1));
        assert!(e1 < 0.05);
        // second-order convergence in the width
        assert!(e2 < e1 / 3.0, "e1 = {}, e2 = {}", e1, e2);
    }

    #[test]
    fn smear_rejects_fat_tail() {
        let rep = MatrixRep::one_param(DMatrix::zeros(2, 2));
        let grid = Grid::new(5.0, 512);
        let orbit = Orbit::sample(&rep, DVector::from_vec(vec![1.0, 0.0]), grid);
        let chi = vec![1.0; 512];
        assert!(matches!(
            smear(&orbit, &chi, 1e-8),
            Err(RepError::TailTooFat { .. })
        ));
    }

    #[test]
    fn family_shares_certificate() {
        let rep = MatrixRep::one_param(dm(2, &[1.0, 0.0, 0.0, -1.0]));
        let grid = Grid::new(5.0, 512);
        let orbits: Vec<Orbit> = [(1.0, 0.0), (0.0, 1.0), (0.6, -0.8)]
            .iter()
            .map(|&(a, b)| Orbit::sample(&rep, DVector::from_vec(vec![a, b]), grid.clone()))
            .collect();
        let (lambda, c) = family_exp_type(&rep, &orbits, 4);
        assert!(lambda >= 1.0 && lambda <= 1.3);
        assert!(c.is_finite());
        // the shared pair dominates each orbit's own membership figure
        for o in &orbits {
            assert!(o.membership_bound(&rep, 4, lambda) <= c * (1.0 + 1e-12));
        }
    }
}
