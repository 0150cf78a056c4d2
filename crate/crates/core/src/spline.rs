//! Hermite spline bases and coefficient-grid reconstruction.
//!
//! Each grid node carries `L + 1` coefficients per axis. The basis function
//! `h_l` is centred on the node, supported on the two adjacent cells and
//! satisfies `d^j h_l(0) = δ_jl` and `d^j h_l(±1) = 0` for `j ≤ L`.
//! Reconstruction evaluates the field (or a derivative) at `s` sample points
//! per cell: sample `p` lies in cell `i = p / s` at local offset
//! `r = (p mod s) / s` and receives contributions from nodes `i` and `i + 1`.
//! With `s = 1` the samples are the nodes themselves.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Periodic,
    Clamped,
}

/// How coefficients relate to nodal derivative data.
///
/// `Local`: `c^l = h^l ∂^l f` (derivatives in cell coordinates).
/// `Physical`: `c^l = ∂^l f` (derivatives in physical coordinates), which
/// makes a coefficient grid meaningful independently of the spacing.
/// `Scaled(ℓ)`: `c^l = ℓ^l ∂^l f`, derivatives in units of a reference
/// length `ℓ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoeffUnits {
    Local,
    Physical,
    Scaled(f64),
}

/// Piecewise polynomial Hermite basis of order `L`.
#[derive(Clone, Debug)]
pub struct HermiteBasis {
    order: usize,
    // monomial coefficients in z, per l, on [0, 1] and [-1, 0]
    right: Vec<Vec<f64>>,
    left: Vec<Vec<f64>>,
}

fn falling(k: usize, d: usize) -> f64 {
    (0..d).map(|i| (k - i) as f64).product()
}

fn poly_deriv(coeffs: &[f64], d: usize, z: f64) -> f64 {
    let mut acc = 0.0;
    for k in (d..coeffs.len()).rev() {
        acc = acc * z + coeffs[k] * falling(k, d);
    }
    acc
}

fn solve_piece(order: usize, l: usize, end: f64) -> Result<Vec<f64>> {
    let deg = 2 * order + 1;
    let n = deg + 1;
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for j in 0..=order {
        for k in j..n {
            let f = falling(k, j);
            if k == j {
                a[(j, k)] = f;
            }
            a[(order + 1 + j, k)] = f * end.powi((k - j) as i32);
        }
        b[j] = if j == l { 1.0 } else { 0.0 };
    }
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Invalid("singular Hermite condition system".into()))?;
    Ok(x.iter().copied().collect())
}

/// Sampled derivative kernels of every basis channel.
///
/// `right[l][j]` is `d^d h_l(j/s)` and `left[l][j]` is `d^d h_l(j/s − 1)`,
/// both multiplied by `h^{−d}`.
#[derive(Clone, Debug)]
pub struct DerivativeKernel {
    pub samples: usize,
    pub right: Vec<Vec<f64>>,
    pub left: Vec<Vec<f64>>,
}

impl DerivativeKernel {
    /// Kernel value of channel `l` at sample offset `q` from the node
    /// (`z = q / s`), zero outside the two adjacent cells.
    pub fn at(&self, l: usize, q: i64) -> f64 {
        let s = self.samples as i64;
        if q >= 0 && q < s {
            self.right[l][q as usize]
        } else if q < 0 && q >= -s {
            self.left[l][(q + s) as usize]
        } else {
            0.0
        }
    }
}

impl HermiteBasis {
    pub fn new(order: usize) -> Result<Self> {
        if !(1..=2).contains(&order) {
            return Err(Error::Invalid(format!("unsupported Hermite order {order}")));
        }
        let mut right = Vec::new();
        let mut left = Vec::new();
        for l in 0..=order {
            right.push(solve_piece(order, l, 1.0)?);
            left.push(solve_piece(order, l, -1.0)?);
        }
        Ok(HermiteBasis { order, right, left })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Coefficients per node along one axis.
    pub fn channels(&self) -> usize {
        self.order + 1
    }

    /// `d`-th derivative of `h_l` on the right piece, `z ∈ [0, 1]`.
    pub fn eval_right(&self, l: usize, d: usize, z: f64) -> f64 {
        poly_deriv(&self.right[l], d, z)
    }

    /// `d`-th derivative of `h_l` on the left piece, `z ∈ [−1, 0]`.
    pub fn eval_left(&self, l: usize, d: usize, z: f64) -> f64 {
        poly_deriv(&self.left[l], d, z)
    }

    /// `d`-th derivative of `h_l` at `z`; the right piece owns `z = 0`.
    pub fn eval(&self, l: usize, d: usize, z: f64) -> f64 {
        if (0.0..=1.0).contains(&z) {
            self.eval_right(l, d, z)
        } else if (-1.0..0.0).contains(&z) {
            self.eval_left(l, d, z)
        } else {
            0.0
        }
    }

    pub fn derivative_kernel(&self, d: usize, h: f64, samples: usize) -> Result<DerivativeKernel> {
        if d > 2 * self.order {
            return Err(Error::Invalid(format!(
                "derivative order {d} beyond polynomial smoothness of order {}",
                self.order
            )));
        }
        if !(h > 0.0 && h.is_finite()) || samples == 0 {
            return Err(Error::Invalid("spacing and samples per cell must be positive".into()));
        }
        let scale = h.powi(-(d as i32));
        let s = samples as f64;
        let right = (0..=self.order)
            .map(|l| (0..samples).map(|j| scale * self.eval_right(l, d, j as f64 / s)).collect())
            .collect();
        let left = (0..=self.order)
            .map(|l| (0..samples).map(|j| scale * self.eval_left(l, d, j as f64 / s - 1.0)).collect())
            .collect();
        Ok(DerivativeKernel { samples, right, left })
    }
}

/// Geometry of a coefficient grid and how it is sampled.
#[derive(Clone, Debug)]
pub struct SplineGrid {
    basis: Arc<HermiteBasis>,
    nodes: Vec<usize>,
    spacing: Vec<f64>,
    boundary: Boundary,
    samples: usize,
    units: CoeffUnits,
}

/// Coefficients on a tape together with their grid.
#[derive(Clone, Debug)]
pub struct SplineField {
    pub coeffs: Var,
    pub grid: Arc<SplineGrid>,
}

impl SplineField {
    pub fn reconstruct(&self, tape: &mut Tape, deriv: &[usize]) -> Result<Var> {
        self.grid.reconstruct_var(tape, self.coeffs, deriv)
    }
}

// out[o, p, in] = kr[j] x[o, i, in] + kl[j] x[o, i+1, in], p = i s + j
#[allow(clippy::too_many_arguments)]
fn apply_axis(
    x: &[f64],
    out: &mut [f64],
    outer: usize,
    n: usize,
    inner: usize,
    kr: &[f64],
    kl: &[f64],
    periodic: bool,
) {
    let s = kr.len();
    for o in 0..outer {
        for i in 0..n {
            let next = if i + 1 < n {
                Some(i + 1)
            } else if periodic {
                Some(0)
            } else {
                None
            };
            let xi = &x[(o * n + i) * inner..(o * n + i + 1) * inner];
            for j in 0..s {
                let p = i * s + j;
                let dst = &mut out[(o * n * s + p) * inner..(o * n * s + p + 1) * inner];
                let (r, l) = (kr[j], kl[j]);
                if r != 0.0 {
                    dst.iter_mut().zip(xi).for_each(|(d, v)| *d += r * v);
                }
                if let (Some(nx), true) = (next, l != 0.0) {
                    let xn = &x[(o * n + nx) * inner..(o * n + nx + 1) * inner];
                    dst.iter_mut().zip(xn).for_each(|(d, v)| *d += l * v);
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn apply_axis_adjoint(
    g: &[f64],
    out: &mut [f64],
    outer: usize,
    n: usize,
    inner: usize,
    kr: &[f64],
    kl: &[f64],
    periodic: bool,
) {
    let s = kr.len();
    for o in 0..outer {
        for i in 0..n {
            let next = if i + 1 < n {
                Some(i + 1)
            } else if periodic {
                Some(0)
            } else {
                None
            };
            for j in 0..s {
                let p = i * s + j;
                let src = &g[(o * n * s + p) * inner..(o * n * s + p + 1) * inner];
                let (r, l) = (kr[j], kl[j]);
                {
                    let dst = &mut out[(o * n + i) * inner..(o * n + i + 1) * inner];
                    dst.iter_mut().zip(src).for_each(|(d, v)| *d += r * v);
                }
                if let Some(nx) = next {
                    let dst = &mut out[(o * n + nx) * inner..(o * n + nx + 1) * inner];
                    dst.iter_mut().zip(src).for_each(|(d, v)| *d += l * v);
                }
            }
        }
    }
}

type AxisKernels = Vec<(Vec<f64>, Vec<f64>)>;

impl SplineGrid {
    pub fn new(
        basis: Arc<HermiteBasis>,
        nodes: &[usize],
        spacing: &[f64],
        boundary: Boundary,
        samples: usize,
        units: CoeffUnits,
    ) -> Result<Self> {
        if nodes.is_empty() || nodes.len() > 2 || nodes.len() != spacing.len() {
            return Err(Error::Invalid("spline grids are 1D or 2D with one spacing per axis".into()));
        }
        if nodes.iter().any(|&n| n < 2) {
            return Err(Error::Invalid("spline grid needs at least two nodes per axis".into()));
        }
        if spacing.iter().any(|&h| !(h > 0.0 && h.is_finite())) || samples == 0 {
            return Err(Error::Invalid("spacing and samples per cell must be positive".into()));
        }
        if let CoeffUnits::Scaled(len) = units {
            if !(len > 0.0 && len.is_finite()) {
                return Err(Error::Invalid(format!("coefficient length scale {len} must be positive")));
            }
        }
        Ok(SplineGrid {
            basis,
            nodes: nodes.to_vec(),
            spacing: spacing.to_vec(),
            boundary,
            samples,
            units,
        })
    }

    pub fn basis(&self) -> &HermiteBasis {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn units(&self) -> CoeffUnits {
        self.units
    }

    /// Coefficient channels, `(L+1)^dim`. In 2D channel `l·(L+1) + m`
    /// pairs x-order `l` with y-order `m`.
    pub fn channels(&self) -> usize {
        self.basis.channels().pow(self.dim() as u32)
    }

    /// Shape of the reconstructed sample grid.
    pub fn sample_shape(&self) -> Vec<usize> {
        self.nodes.iter().map(|&n| n * self.samples).collect()
    }

    fn axis_kernels(&self, axis: usize, d: usize) -> Result<AxisKernels> {
        let h = self.spacing[axis];
        let k = self.basis.derivative_kernel(d, h, self.samples)?;
        Ok((0..self.basis.channels())
            .map(|l| {
                let f = match self.units {
                    CoeffUnits::Local => 1.0,
                    CoeffUnits::Physical => h.powi(l as i32),
                    CoeffUnits::Scaled(len) => (h / len).powi(l as i32),
                };
                (
                    k.right[l].iter().map(|v| v * f).collect(),
                    k.left[l].iter().map(|v| v * f).collect(),
                )
            })
            .collect())
    }

    fn check_coeffs(&self, shape: &[usize]) -> Result<usize> {
        if shape.len() != 2 + self.dim() || shape[1] != self.channels() || shape[2..] != self.nodes[..] {
            return Err(Error::Shape(format!(
                "coefficients {shape:?} do not match grid with {} channels on {:?}",
                self.channels(),
                self.nodes
            )));
        }
        Ok(shape[0])
    }

    fn check_deriv(&self, deriv: &[usize]) -> Result<()> {
        if deriv.len() != self.dim() {
            return Err(Error::Invalid(format!(
                "derivative multi-index {deriv:?} for a {}D grid",
                self.dim()
            )));
        }
        Ok(())
    }

    fn forward_raw(&self, c: &[f64], batch: usize, deriv: &[usize]) -> Result<Vec<f64>> {
        let periodic = self.boundary == Boundary::Periodic;
        let s = self.samples;
        let nc = self.basis.channels();
        match self.dim() {
            1 => {
                let n = self.nodes[0];
                let kx = self.axis_kernels(0, deriv[0])?;
                let mut out = vec![0.0; batch * n * s];
                for b in 0..batch {
                    let dst = &mut out[b * n * s..(b + 1) * n * s];
                    for (l, (kr, kl)) in kx.iter().enumerate() {
                        let src = &c[(b * nc + l) * n..(b * nc + l + 1) * n];
                        apply_axis(src, dst, 1, n, 1, kr, kl, periodic);
                    }
                }
                Ok(out)
            }
            _ => {
                let (nx, ny) = (self.nodes[0], self.nodes[1]);
                let kx = self.axis_kernels(0, deriv[0])?;
                let ky = self.axis_kernels(1, deriv[1])?;
                let block = nx * ny;
                let fine = nx * s * ny * s;
                let mut out = vec![0.0; batch * fine];
                let mut tmp = vec![0.0; nx * ny * s];
                for b in 0..batch {
                    for (l, (kxr, kxl)) in kx.iter().enumerate() {
                        tmp.iter_mut().for_each(|v| *v = 0.0);
                        for (m, (kyr, kyl)) in ky.iter().enumerate() {
                            let ch = b * nc * nc + l * nc + m;
                            apply_axis(&c[ch * block..(ch + 1) * block], &mut tmp, nx, ny, 1, kyr, kyl, periodic);
                        }
                        apply_axis(&tmp, &mut out[b * fine..(b + 1) * fine], 1, nx, ny * s, kxr, kxl, periodic);
                    }
                }
                Ok(out)
            }
        }
    }

    fn adjoint_raw(&self, g: &[f64], batch: usize, deriv: &[usize]) -> Result<Vec<f64>> {
        let periodic = self.boundary == Boundary::Periodic;
        let s = self.samples;
        let nc = self.basis.channels();
        match self.dim() {
            1 => {
                let n = self.nodes[0];
                let kx = self.axis_kernels(0, deriv[0])?;
                let mut out = vec![0.0; batch * nc * n];
                for b in 0..batch {
                    let src = &g[b * n * s..(b + 1) * n * s];
                    for (l, (kr, kl)) in kx.iter().enumerate() {
                        let dst = &mut out[(b * nc + l) * n..(b * nc + l + 1) * n];
                        apply_axis_adjoint(src, dst, 1, n, 1, kr, kl, periodic);
                    }
                }
                Ok(out)
            }
            _ => {
                let (nx, ny) = (self.nodes[0], self.nodes[1]);
                let kx = self.axis_kernels(0, deriv[0])?;
                let ky = self.axis_kernels(1, deriv[1])?;
                let block = nx * ny;
                let fine = nx * s * ny * s;
                let mut out = vec![0.0; batch * nc * nc * block];
                let mut tmp = vec![0.0; nx * ny * s];
                for b in 0..batch {
                    for (l, (kxr, kxl)) in kx.iter().enumerate() {
                        tmp.iter_mut().for_each(|v| *v = 0.0);
                        apply_axis_adjoint(&g[b * fine..(b + 1) * fine], &mut tmp, 1, nx, ny * s, kxr, kxl, periodic);
                        for (m, (kyr, kyl)) in ky.iter().enumerate() {
                            let ch = b * nc * nc + l * nc + m;
                            apply_axis_adjoint(&tmp, &mut out[ch * block..(ch + 1) * block], nx, ny, 1, kyr, kyl, periodic);
                        }
                    }
                }
                Ok(out)
            }
        }
    }

    /// Field or derivative at the sample points, `[B, samples...]`.
    pub fn reconstruct(&self, coeffs: &Tensor, deriv: &[usize]) -> Result<Tensor> {
        self.check_deriv(deriv)?;
        let batch = self.check_coeffs(coeffs.shape())?;
        let out = self.forward_raw(coeffs.real()?, batch, deriv)?;
        let mut shape = vec![batch];
        shape.extend(self.sample_shape());
        Tensor::new_real(&shape, out)
    }

    /// Differentiable [`SplineGrid::reconstruct`].
    pub fn reconstruct_var(self: &Arc<Self>, tape: &mut Tape, coeffs: Var, deriv: &[usize]) -> Result<Var> {
        let value = self.reconstruct(tape.value(coeffs), deriv)?;
        let batch = value.shape()[0];
        let grid = Arc::clone(self);
        let deriv = deriv.to_vec();
        tape.custom(
            "spline_reconstruct",
            value,
            &[coeffs],
            Box::new(move |g, p| {
                let gc = grid.adjoint_raw(g.real()?, batch, &deriv)?;
                Ok(vec![Some(Tensor::new_real(p[0].shape(), gc)?)])
            }),
        )
    }

    /// Coefficients `[1, C, nodes...]` interpolating a function given its
    /// partial derivatives. `f(x, d)` returns `∂^d f` at physical point `x`
    /// (node `i` sits at `i·h`).
    pub fn coeffs_from_fn(&self, f: impl Fn(&[f64], &[usize]) -> f64) -> Result<Tensor> {
        let nc = self.basis.channels();
        let local = |axis: usize, order: usize| match self.units {
            CoeffUnits::Local => self.spacing[axis].powi(order as i32),
            CoeffUnits::Physical => 1.0,
            CoeffUnits::Scaled(len) => len.powi(order as i32),
        };
        let mut data = Vec::new();
        match self.dim() {
            1 => {
                for l in 0..nc {
                    for i in 0..self.nodes[0] {
                        data.push(local(0, l) * f(&[i as f64 * self.spacing[0]], &[l]));
                    }
                }
            }
            _ => {
                for l in 0..nc {
                    for m in 0..nc {
                        for i in 0..self.nodes[0] {
                            for j in 0..self.nodes[1] {
                                let x = [i as f64 * self.spacing[0], j as f64 * self.spacing[1]];
                                data.push(local(0, l) * local(1, m) * f(&x, &[l, m]));
                            }
                        }
                    }
                }
            }
        }
        let mut shape = vec![1, self.channels()];
        shape.extend(&self.nodes);
        Tensor::new_real(&shape, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_conditions() {
        for order in 1..=2 {
            let b = HermiteBasis::new(order).unwrap();
            for l in 0..=order {
                for j in 0..=order {
                    let want = if j == l { 1.0 } else { 0.0 };
                    assert!((b.eval_right(l, j, 0.0) - want).abs() < 1e-10);
                    assert!((b.eval_left(l, j, 0.0) - want).abs() < 1e-10);
                    assert!(b.eval_right(l, j, 1.0).abs() < 1e-10);
                    assert!(b.eval_left(l, j, -1.0).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn cubic_value_basis_midpoint() {
        let b = HermiteBasis::new(1).unwrap();
        assert!((b.eval(0, 0, 0.5) - 0.5).abs() < 1e-14);
        assert!((b.eval(0, 0, -0.5) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn rejects_unsupported_order() {
        assert!(HermiteBasis::new(0).is_err());
        assert!(HermiteBasis::new(3).is_err());
        let b = HermiteBasis::new(2).unwrap();
        assert!(b.derivative_kernel(5, 1.0, 1).is_err());
    }
}
