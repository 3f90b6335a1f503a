//! Floating-point helpers: dense matrix exponentials, FFT wrappers on a
//! symmetric time window, trapezoid quadrature, and least-squares fits.

use nalgebra::{DMatrix, DVector};
use num::complex::Complex64;
use rustfft::FftPlanner;

/// Matrix exponential by scaling and squaring with a Taylor core.
/// Matrices here are small (representation and adjoint matrices).
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let norm = m.amax() * n as f64;
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = m / 2f64.powi(squarings as i32);
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut acc = DMatrix::<f64>::identity(n, n);
    for k in 1..=24 {
        term = (&term * &scaled) / k as f64;
        acc += &term;
        if term.amax() < 1e-18 {
            break;
        }
    }
    for _ in 0..squarings {
        acc = &acc * &acc;
    }
    acc
}

/// Principal logarithm for matrices close enough to the identity after
/// repeated square roots are not needed at our window sizes; used only as a
/// test oracle on unitriangular matrices where the series is finite.
pub fn logm_unitriangular(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let e = m - DMatrix::<f64>::identity(n, n);
    let mut term = e.clone();
    let mut acc = e.clone();
    for k in 2..=n {
        term = &term * &e;
        let coef = if k % 2 == 0 { -1.0 } else { 1.0 } / k as f64;
        acc += &term * coef;
    }
    acc
}

/// Uniform grid t_i = -t_half + i*h, i = 0..n, spanning [-t_half, t_half].
#[derive(Clone, Copy, Debug)]
pub struct Grid {
    pub t_half: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(t_half: f64, n: usize) -> Self {
        assert!(n.is_power_of_two(), "grid size must be a power of two");
        Grid { t_half, n }
    }
    pub fn step(&self) -> f64 {
        2.0 * self.t_half / self.n as f64
    }
    pub fn t(&self, i: usize) -> f64 {
        -self.t_half + i as f64 * self.step()
    }
    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.t(i)).collect()
    }
    /// Frequencies of the length-n transform in natural (signed) order,
    /// index k corresponds to xi_k = 2*pi*(k - n/2)/(n*h).
    pub fn frequencies(&self) -> Vec<f64> {
        let h = self.step();
        let n = self.n as f64;
        (0..self.n)
            .map(|k| 2.0 * std::f64::consts::PI * (k as f64 - n / 2.0) / (n * h))
            .collect()
    }
    /// Index of frequency 0 in `frequencies()`.
    pub fn zero_freq_index(&self) -> usize {
        self.n / 2
    }
}

/// Continuous Fourier transform F(xi) = \int f(t) e^{i xi t} dt approximated
/// on the grid; output in the signed frequency order of `Grid::frequencies`.
///
/// With t_j = h(j - n/2) and xi_k = (2π/(nh))(k - n/2) the centered phases
/// reduce to alternating signs: F_k = h (-1)^k IFFT[(-1)^j f_j]_k (n a power
/// of two, so i^n = 1).
pub fn fourier_forward(grid: &Grid, samples: &[Complex64]) -> Vec<Complex64> {
    let n = grid.n;
    assert_eq!(samples.len(), n);
    let h = grid.step();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_inverse(n); // e^{+2πi jk/n}, unscaled
    let mut buf: Vec<Complex64> = samples
        .iter()
        .enumerate()
        .map(|(j, &s)| if j % 2 == 0 { s } else { -s })
        .collect();
    fft.process(&mut buf);
    buf.iter()
        .enumerate()
        .map(|(k, &v)| if k % 2 == 0 { v * h } else { -v * h })
        .collect()
}

/// Inverse transform f(t) = (1/2π) \int F(xi) e^{-i xi t} dxi on the same grid
/// layout (input in signed frequency order, output on the time grid).
pub fn fourier_inverse(grid: &Grid, spectrum: &[Complex64]) -> Vec<Complex64> {
    let n = grid.n;
    assert_eq!(spectrum.len(), n);
    let h = grid.step();
    let scale = 1.0 / (n as f64 * h);
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n); // e^{-2πi jk/n}, unscaled
    let mut buf: Vec<Complex64> = spectrum
        .iter()
        .enumerate()
        .map(|(k, &s)| if k % 2 == 0 { s } else { -s })
        .collect();
    fft.process(&mut buf);
    buf.iter()
        .enumerate()
        .map(|(j, &v)| if j % 2 == 0 { v * scale } else { -v * scale })
        .collect()
}

/// Linear (zero-padded) convolution c_k = Σ_j a_j b_{k-j} via FFT;
/// output length a.len() + b.len() - 1.
pub fn linear_convolution(a: &[f64], b: &[f64]) -> Vec<f64> {
    let out_len = a.len() + b.len() - 1;
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut fa: Vec<Complex64> = a
        .iter()
        .map(|&x| Complex64::new(x, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(n)
        .collect();
    let mut fb: Vec<Complex64> = b
        .iter()
        .map(|&x| Complex64::new(x, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(n)
        .collect();
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    inv.process(&mut fa);
    fa[..out_len].iter().map(|v| v.re / n as f64).collect()
}

/// Trapezoid rule on uniformly spaced samples.
pub fn trapezoid(samples: &[f64], h: f64) -> f64 {
    if samples.len() < 2 {
        return 0.0;
    }
    let inner: f64 = samples[1..samples.len() - 1].iter().sum();
    h * (0.5 * samples[0] + inner + 0.5 * samples[samples.len() - 1])
}

/// Trapezoid rule for vector-valued samples.
pub fn trapezoid_vec(samples: &[DVector<f64>], h: f64) -> DVector<f64> {
    let dim = samples[0].len();
    let mut acc = DVector::<f64>::zeros(dim);
    for (i, s) in samples.iter().enumerate() {
        let w = if i == 0 || i == samples.len() - 1 {
            0.5
        } else {
            1.0
        };
        acc += s * (w * h);
    }
    acc
}

/// Least-squares slope and intercept of y against x.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return (0.0, sy / n, 0.0);
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let resid = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - (slope * a + intercept)).powi(2))
        .sum::<f64>()
        .sqrt()
        / (n.sqrt());
    (slope, intercept, resid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn expm_diagonal() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let e = expm(&m);
        assert_relative_eq!(e[(0, 0)], 1f64.exp(), epsilon = 1e-12);
        assert_relative_eq!(e[(1, 1)], (-1f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn expm_nilpotent() {
        let m = DMatrix::from_row_slice(3, 3, &[0., 1., 0., 0., 0., 1., 0., 0., 0.]);
        let e = expm(&m);
        assert_relative_eq!(e[(0, 2)], 0.5, epsilon = 1e-14);
        let l = logm_unitriangular(&e);
        assert_relative_eq!(l[(0, 1)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(l[(0, 2)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn fourier_roundtrip_gaussian() {
        let grid = Grid::new(16.0, 1 << 10);
        let f: Vec<Complex64> = grid
            .points()
            .iter()
            .map(|&t| Complex64::new((-t * t / 2.0).exp(), 0.0))
            .collect();
        let spec = fourier_forward(&grid, &f);
        // F of exp(-t^2/2) with e^{+i xi t} is sqrt(2 pi) exp(-xi^2/2)
        let xi = grid.frequencies();
        let k = grid.zero_freq_index();
        assert_relative_eq!(
            spec[k].re,
            (2.0 * std::f64::consts::PI).sqrt(),
            epsilon = 1e-9
        );
        let k1 = xi.iter().position(|&x| (x - 1.0).abs() < 0.2).unwrap();
        assert_relative_eq!(
            spec[k1].re,
            (2.0 * std::f64::consts::PI).sqrt() * (-xi[k1] * xi[k1] / 2.0).exp(),
            epsilon = 1e-9
        );
        let back = fourier_inverse(&grid, &spec);
        for (a, b) in back.iter().zip(f.iter()) {
            assert_relative_eq!(a.re, b.re, epsilon = 1e-9);
            assert!(a.im.abs() < 1e-9);
        }
    }

    #[test]
    fn trapezoid_quadratic() {
        let n = 1000;
        let h = 1.0 / n as f64;
        let samples: Vec<f64> = (0..=n).map(|i| (i as f64 * h).powi(2)).collect();
        assert_relative_eq!(trapezoid(&samples, h), 1.0 / 3.0, epsilon = 1e-6);
    }
}
