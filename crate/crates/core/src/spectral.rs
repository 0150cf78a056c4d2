//! Fourier-space utilities on periodic grids: differentiation, 2/3
//! dealiasing, Gaussian random fields and Poisson inversion.
//!
//! Functions taking a [`Tensor`] act on its trailing `grid.dim()` axes, so
//! leading batch/channel axes are allowed.

use crate::error::{Error, Result};
use crate::fft;
use crate::tensor::{Complex64, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;

/// Identifier recorded in manifests for the random source.
pub const RNG_ID: &str = "chacha8";

/// Deterministic generator for stream `stream` of master seed `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Periodic grid with per-axis extents and domain lengths.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveGrid {
    extents: Vec<usize>,
    lengths: Vec<f64>,
}

impl WaveGrid {
    pub fn new(extents: &[usize], lengths: &[f64]) -> Result<Self> {
        if extents.is_empty() || extents.len() != lengths.len() {
            return Err(Error::Invalid("one length per grid axis".into()));
        }
        if extents.iter().any(|&n| n < 2) || lengths.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::Invalid(format!("bad wave grid {extents:?} / {lengths:?}")));
        }
        Ok(WaveGrid {
            extents: extents.to_vec(),
            lengths: lengths.to_vec(),
        })
    }

    /// Unit square/interval grid.
    pub fn unit(extents: &[usize]) -> Result<Self> {
        Self::new(extents, &vec![1.0; extents.len()])
    }

    pub fn dim(&self) -> usize {
        self.extents.len()
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn size(&self) -> usize {
        self.extents.iter().product()
    }

    /// Integer wavenumber of FFT index `i` along `axis`:
    /// `0, 1, …, N/2, −N/2+1, …, −1`.
    pub fn wavenumber(&self, axis: usize, i: usize) -> i64 {
        let n = self.extents[axis];
        if i <= n / 2 {
            i as i64
        } else {
            i as i64 - n as i64
        }
    }

    pub fn angular(&self, axis: usize, i: usize) -> f64 {
        2.0 * PI * self.wavenumber(axis, i) as f64 / self.lengths[axis]
    }

    fn is_nyquist(&self, axis: usize, i: usize) -> bool {
        self.extents[axis] % 2 == 0 && i == self.extents[axis] / 2
    }

    fn coords(&self, flat: usize) -> Vec<usize> {
        let mut rem = flat;
        let mut c = vec![0; self.dim()];
        for axis in (0..self.dim()).rev() {
            c[axis] = rem % self.extents[axis];
            rem /= self.extents[axis];
        }
        c
    }

    /// Multiplier `Π (i·2πk/L)^order` per mode, odd-order Nyquist zeroed.
    pub fn derivative_symbol(&self, orders: &[usize]) -> Result<Vec<Complex64>> {
        if orders.len() != self.dim() {
            return Err(Error::Invalid("one derivative order per axis".into()));
        }
        Ok((0..self.size())
            .map(|p| {
                let c = self.coords(p);
                let mut z = Complex64::new(1.0, 0.0);
                for (axis, &o) in orders.iter().enumerate() {
                    if o % 2 == 1 && self.is_nyquist(axis, c[axis]) {
                        return Complex64::new(0.0, 0.0);
                    }
                    z *= Complex64::new(0.0, self.angular(axis, c[axis])).powu(o as u32);
                }
                z
            })
            .collect())
    }

    /// `|k|² = Σ (2πk/L)²` per mode (the symbol of `−Δ`).
    pub fn laplacian_magnitude(&self) -> Vec<f64> {
        (0..self.size())
            .map(|p| {
                let c = self.coords(p);
                (0..self.dim()).map(|a| self.angular(a, c[a]).powi(2)).sum()
            })
            .collect()
    }

    /// Symbol of the Laplacian, `−|k|²`.
    pub fn laplacian_symbol(&self) -> Vec<Complex64> {
        self.laplacian_magnitude().into_iter().map(|v| Complex64::new(-v, 0.0)).collect()
    }

    /// Symbol of `(−Δ)⁻¹` with the mean mode mapped to zero.
    pub fn inverse_laplacian_symbol(&self) -> Vec<Complex64> {
        self.laplacian_magnitude()
            .into_iter()
            .map(|v| Complex64::new(if v > 0.0 { 1.0 / v } else { 0.0 }, 0.0))
            .collect()
    }

    /// 1 for modes with `|k| ≤ floor(N/3)` on every axis, 0 otherwise.
    pub fn dealias_mask(&self) -> Vec<f64> {
        (0..self.size())
            .map(|p| {
                let c = self.coords(p);
                let keep = (0..self.dim()).all(|a| self.wavenumber(a, c[a]).unsigned_abs() as usize <= self.extents[a] / 3);
                if keep {
                    1.0
                } else {
                    0.0
                }
            })
            .collect()
    }

    fn check_field(&self, shape: &[usize]) -> Result<()> {
        if shape.len() < self.dim() || shape[shape.len() - self.dim()..] != self.extents[..] {
            return Err(Error::Shape(format!(
                "field {shape:?} is not sampled on grid {:?}",
                self.extents
            )));
        }
        Ok(())
    }

    /// Applies a per-mode multiplier to a real field and returns the real
    /// part of the result.
    pub fn apply_symbol(&self, field: &Tensor, symbol: &[Complex64]) -> Result<Tensor> {
        self.check_field(field.shape())?;
        let shape = field.shape();
        let mut spec = fft::rfft_full(field.real()?, shape, self.dim())?;
        for chunk in spec.chunks_mut(self.size()) {
            chunk.iter_mut().zip(symbol).for_each(|(z, s)| *z *= s);
        }
        let out = fft::ifft_normalized(spec, shape, self.dim())?;
        Tensor::new_real(shape, out.iter().map(|z| z.re).collect())
    }
}

/// `∂^orders field` by Fourier differentiation.
pub fn spectral_derivative(field: &Tensor, orders: &[usize], grid: &WaveGrid) -> Result<Tensor> {
    grid.apply_symbol(field, &grid.derivative_symbol(orders)?)
}

/// Zeroes modes with `|k| > floor(N/3)` on any axis of a spectrum laid out
/// over the trailing `grid.dim()` axes of `spec`.
pub fn dealias_two_thirds(spec: &mut [Complex64], grid: &WaveGrid) -> Result<()> {
    if spec.len() % grid.size() != 0 {
        return Err(Error::Shape("spectrum does not tile the grid".into()));
    }
    let mask = grid.dealias_mask();
    for chunk in spec.chunks_mut(grid.size()) {
        chunk.iter_mut().zip(&mask).for_each(|(z, &m)| {
            if m == 0.0 {
                *z = Complex64::new(0.0, 0.0);
            }
        });
    }
    Ok(())
}

/// Solves `−Δψ = ω` with zero-mean `ψ`.
pub fn invert_laplacian(omega: &Tensor, grid: &WaveGrid) -> Result<Tensor> {
    grid.check_field(omega.shape())?;
    let n = grid.size();
    for chunk in omega.real()?.chunks(n) {
        let mean = chunk.iter().sum::<f64>() / n as f64;
        let scale = chunk.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if mean.abs() > 1e-12 * scale {
            return Err(Error::Invalid(format!("vorticity has non-zero mean {mean:e}")));
        }
    }
    grid.apply_symbol(omega, &grid.inverse_laplacian_symbol())
}

/// Parameters of the 1D random field with spectrum
/// `∝ ((2πk)² + τ²)^{−γ/2}`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Grf1d {
    pub tau: f64,
    pub gamma: f64,
}

impl Default for Grf1d {
    fn default() -> Self {
        Grf1d { tau: 5.0, gamma: 6.0 }
    }
}

impl Grf1d {
    fn validate(&self, n: usize) -> Result<()> {
        if !n.is_power_of_two() || n < 4 {
            return Err(Error::Invalid(format!("GRF resolution {n} must be a power of two ≥ 4")));
        }
        if !(self.tau > 0.0) || !(self.gamma > 1.0) {
            return Err(Error::Invalid("GRF needs tau > 0 and gamma > 1".into()));
        }
        Ok(())
    }

    fn spectrum(&self, k: i64) -> f64 {
        ((2.0 * PI * k as f64).powi(2) + self.tau * self.tau).powf(-self.gamma / 2.0)
    }

    /// Scale constant making the expected pointwise variance 1 on `n`
    /// points (dealiased band).
    pub fn scale(&self, n: usize) -> Result<f64> {
        self.validate(n)?;
        let kmax = (n / 3) as i64;
        let total: f64 = (1..=kmax).map(|k| 2.0 * self.spectrum(k)).sum();
        Ok(1.0 / total.sqrt())
    }

    /// Standard deviation of the white-noise amplitude on FFT index `i`.
    pub fn mode_std(&self, n: usize, i: usize) -> Result<f64> {
        let scale = self.scale(n)?;
        let k = if i <= n / 2 { i as i64 } else { i as i64 - n as i64 };
        if k == 0 || k.unsigned_abs() as usize > n / 3 {
            return Ok(0.0);
        }
        Ok(scale * self.spectrum(k).sqrt())
    }

    /// One zero-mean real periodic sample on `n` points.
    ///
    /// Noise is drawn in order of increasing `|k|`, so samples of the same
    /// stream at different resolutions share their common modes.
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Result<Vec<f64>> {
        let scale = self.scale(n)?;
        let mut spec = vec![Complex64::new(0.0, 0.0); n];
        for k in 1..=n / 3 {
            let s = scale * self.spectrum(k as i64).sqrt();
            for idx in [k, n - k] {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                spec[idx] = Complex64::new(a, b) * s;
            }
        }
        Ok(realize(spec, &[n]))
    }
}

/// Parameters of the 2D random field with coefficient scale
/// `c·τ^{α−1}(4π²|k|² + τ²)^{−α/2}`, mean mode zeroed.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Grf2d {
    pub alpha: f64,
    pub tau: f64,
    pub scale: f64,
}

impl Default for Grf2d {
    fn default() -> Self {
        Grf2d {
            alpha: 2.5,
            tau: 7.0,
            scale: 1.0,
        }
    }
}

impl Grf2d {
    pub fn mode_std(&self, n: usize, i: usize, j: usize) -> f64 {
        let k = |i: usize| if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
        let (kx, ky) = (k(i), k(j));
        if kx == 0.0 && ky == 0.0 {
            return 0.0;
        }
        let lap = 4.0 * PI * PI * (kx * kx + ky * ky);
        self.scale * self.tau.powf(self.alpha - 1.0) * (lap + self.tau * self.tau).powf(-self.alpha / 2.0)
    }

    /// One zero-mean real periodic sample on an `n × n` grid.
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Result<Vec<f64>> {
        if !n.is_power_of_two() || n < 4 {
            return Err(Error::Invalid(format!("GRF resolution {n} must be a power of two ≥ 4")));
        }
        if !(self.tau > 0.0) || !(self.alpha > 1.0) || !(self.scale > 0.0) {
            return Err(Error::Invalid("GRF needs tau > 0, alpha > 1, scale > 0".into()));
        }
        let stds: Vec<f64> = (0..n * n).map(|p| self.mode_std(n, p / n, p % n)).collect();
        Ok(synthesize(&stds, &[n, n], rng))
    }
}

// u = Re Σ_k std_k ξ_k e^{2πik·x}, ξ_k with independent N(0,1) parts
fn synthesize(stds: &[f64], shape: &[usize], rng: &mut impl Rng) -> Vec<f64> {
    let spec: Vec<Complex64> = stds
        .iter()
        .map(|&s| {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            Complex64::new(a, b) * s
        })
        .collect();
    realize(spec, shape)
}

fn realize(mut spec: Vec<Complex64>, shape: &[usize]) -> Vec<f64> {
    fft::fft_trailing(&mut spec, shape, shape.len(), true).expect("valid shape");
    let mut out: Vec<f64> = spec.iter().map(|z| z.re).collect();
    // the mean mode carries zero amplitude; remove round-off exactly
    let mean = out.iter().sum::<f64>() / out.len() as f64;
    out.iter_mut().for_each(|v| *v -= mean);
    out
}
