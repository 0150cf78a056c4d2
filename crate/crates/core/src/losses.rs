//! Boundary-band and PDE-residual objectives.
//!
//! Fields live on a uniform grid of `N` nodes per axis. The band is the set
//! of nodes (or, on a sub-sampled spline grid, the samples of cells) whose
//! index along some axis is `< w` or `≥ N − w`; the interior is everything
//! else, so band and residual terms partition the domain.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::spectral::WaveGrid;
use crate::spline::SplineField;
use crate::tensor::{Complex64, Tensor};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// How the Navier–Stokes residual obtains spatial derivatives of the
/// predicted vorticity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NsDerivatives {
    #[default]
    Spectral,
    Spline,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub boundary: f64,
    pub residual: f64,
    pub total: f64,
    pub test: Option<f64>,
}

/// `total = λ_bd · boundary + λ_res · residual`.
pub fn combine(boundary: f64, residual: f64, lambda_bd: f64, lambda_res: f64) -> Result<LossBreakdown> {
    check_weights(lambda_bd, lambda_res)?;
    Ok(LossBreakdown {
        boundary,
        residual,
        total: lambda_bd * boundary + lambda_res * residual,
        test: None,
    })
}

/// Differentiable counterpart of [`combine`].
pub fn combine_var(tape: &mut Tape, boundary: Var, residual: Var, lambda_bd: f64, lambda_res: f64) -> Result<Var> {
    check_weights(lambda_bd, lambda_res)?;
    let a = tape.scale(boundary, lambda_bd)?;
    let b = tape.scale(residual, lambda_res)?;
    tape.add(a, b)
}

fn check_weights(lambda_bd: f64, lambda_res: f64) -> Result<()> {
    if !(lambda_bd >= 0.0 && lambda_res >= 0.0) || !lambda_bd.is_finite() || !lambda_res.is_finite() {
        return Err(Error::Invalid(format!(
            "loss weights must be finite and non-negative, got ({lambda_bd}, {lambda_res})"
        )));
    }
    Ok(())
}

/// Mean squared pointwise difference.
pub fn l2_metric(u: &Tensor, u_hat: &Tensor) -> Result<f64> {
    if u.shape() != u_hat.shape() {
        return Err(Error::Shape(format!("{:?} vs {:?}", u.shape(), u_hat.shape())));
    }
    let (a, b) = (u.real()?, u_hat.real()?);
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64)
}

/// Relative L2 error `‖u − û‖ / ‖u‖`.
pub fn relative_l2(u: &Tensor, u_hat: &Tensor) -> Result<f64> {
    let mse = l2_metric(u, u_hat)?;
    let norm = u.norm_sq() / u.numel() as f64;
    if norm == 0.0 {
        return Err(Error::Invalid("relative error against a zero field".into()));
    }
    Ok((mse / norm).sqrt())
}

/// Differentiable mean squared difference against a fixed target.
pub fn l2_loss(tape: &mut Tape, pred: Var, target: &Tensor) -> Result<Var> {
    if tape.value(pred).shape() != target.shape() {
        return Err(Error::Shape(format!(
            "prediction {:?} vs target {:?}",
            tape.value(pred).shape(),
            target.shape()
        )));
    }
    let t = tape.constant(target.clone())?;
    let d = tape.sub(pred, t)?;
    tape.mean_square(d)
}

/// Band width in cells per end for a fraction of the points along one axis,
/// split between both ends.
pub fn band_cells(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64 / 2.0).round() as usize).max(1)
}

fn check_band(nodes: &[usize], width: usize) -> Result<()> {
    if width == 0 || nodes.iter().any(|&n| 4 * width > n) {
        return Err(Error::Invalid(format!("band width {width} must lie in 1..=N/4 for grid {nodes:?}")));
    }
    Ok(())
}

fn in_band(idx: &[usize], nodes: &[usize], width: usize) -> bool {
    idx.iter().zip(nodes).any(|(&i, &n)| i < width || i >= n - width)
}

fn grid_weights(nodes: &[usize], samples: usize, width: usize, band: bool) -> Vec<f64> {
    let fine: Vec<usize> = nodes.iter().map(|n| n * samples).collect();
    let total: usize = fine.iter().product();
    (0..total)
        .map(|p| {
            let idx: Vec<usize> = match fine.as_slice() {
                [_] => vec![p / samples],
                [_, ny] => vec![p / ny / samples, p % ny / samples],
                _ => unreachable!("grids are 1D or 2D"),
            };
            if in_band(&idx, nodes, width) == band { 1.0 } else { 0.0 }
        })
        .collect()
}

/// Indicator of band nodes, row-major over `nodes`.
pub fn band_weights(nodes: &[usize], width: usize) -> Result<Vec<f64>> {
    check_band(nodes, width)?;
    Ok(grid_weights(nodes, 1, width, true))
}

/// Indicator of interior samples on a grid with `samples` points per cell.
pub fn interior_weights(nodes: &[usize], samples: usize, width: usize) -> Result<Vec<f64>> {
    check_band(nodes, width)?;
    Ok(grid_weights(nodes, samples, width, false))
}

fn node_extents(shape: &[usize]) -> Result<Vec<usize>> {
    match shape.len() {
        2 | 3 => Ok(shape[1..].to_vec()),
        _ => Err(Error::Shape(format!("expected [B, N] or [B, N, N], got {shape:?}"))),
    }
}

/// Mean squared error between node values `[B, nodes...]` over the band.
pub fn boundary_band_loss(tape: &mut Tape, pred: Var, target: &Tensor, width: usize) -> Result<Var> {
    let shape = tape.value(pred).shape().to_vec();
    if shape != target.shape() {
        return Err(Error::Shape(format!("prediction {shape:?} vs target {:?}", target.shape())));
    }
    let nodes = node_extents(&shape)?;
    let w = Arc::new(band_weights(&nodes, width)?);
    let t = tape.constant(target.clone())?;
    let d = tape.sub(pred, t)?;
    tape.weighted_mean_square(d, w)
}

fn sample_weights(field: &SplineField, width: usize) -> Result<Arc<Vec<f64>>> {
    Ok(Arc::new(interior_weights(field.grid.nodes(), field.grid.samples(), width)?))
}

fn check_samples(tape: &Tape, field: &SplineField, other: &Tensor, what: &str) -> Result<()> {
    let want = field.grid.sample_shape();
    let got = other.shape();
    let batch = tape.value(field.coeffs).shape()[0];
    let ok = got[got.len().saturating_sub(want.len())..] == want[..]
        && (got.len() == want.len() || (got.len() == want.len() + 1 && got[0] == batch));
    if !ok {
        return Err(Error::Shape(format!(
            "{what} {got:?} is not sampled on the spline grid {want:?} (batch {batch})"
        )));
    }
    Ok(())
}

// a constant of shape `like`, broadcast over the batch when given unbatched
fn batched_constant(tape: &mut Tape, t: &Tensor, like: &[usize]) -> Result<Var> {
    if t.shape() == like {
        return tape.constant(t.clone());
    }
    let per = t.numel();
    let data = t.real()?;
    let full: Vec<f64> = (0..like.iter().product::<usize>()).map(|i| data[i % per]).collect();
    tape.constant(Tensor::new_real(like, full)?)
}

/// Interior mean of `|Δψ + f|²` with `Δψ` reconstructed from the spline.
/// `f` is sampled at the spline's sample points, with or without a batch axis.
pub fn poisson_residual_loss(tape: &mut Tape, psi: &SplineField, f: &Tensor, width: usize) -> Result<Var> {
    if psi.grid.dim() != 2 {
        return Err(Error::Invalid("the Poisson residual needs a 2D spline grid".into()));
    }
    check_samples(tape, psi, f, "source")?;
    let w = sample_weights(psi, width)?;
    let dxx = psi.reconstruct(tape, &[2, 0])?;
    let dyy = psi.reconstruct(tape, &[0, 2])?;
    let lap = tape.add(dxx, dyy)?;
    let shape = tape.value(lap).shape().to_vec();
    let fv = batched_constant(tape, f, &shape)?;
    let r = tape.add(lap, fv)?;
    tape.weighted_mean_square(r, w)
}

/// Interior mean of `r² = ((u − u0)/Δt + u u_x − ν u_xx)²`, with `u` and its
/// derivatives from the same coefficients. `u0` is sampled at the spline's
/// sample points.
pub fn burgers_residual_loss(
    tape: &mut Tape,
    u: &SplineField,
    u0: &Tensor,
    dt: f64,
    nu: f64,
    width: usize,
) -> Result<Var> {
    if !(dt > 0.0) || !(nu > 0.0) {
        return Err(Error::Invalid("time step and viscosity must be positive".into()));
    }
    if u.grid.dim() != 1 {
        return Err(Error::Invalid("the Burgers residual needs a 1D spline grid".into()));
    }
    check_samples(tape, u, u0, "initial state")?;
    let w = sample_weights(u, width)?;
    let uv = u.reconstruct(tape, &[0])?;
    let ux = u.reconstruct(tape, &[1])?;
    let uxx = u.reconstruct(tape, &[2])?;
    let shape = tape.value(uv).shape().to_vec();
    let u0v = batched_constant(tape, u0, &shape)?;
    let du = tape.sub(uv, u0v)?;
    let dudt = tape.scale(du, 1.0 / dt)?;
    let adv = tape.mul(uv, ux)?;
    let diff = tape.scale(uxx, nu)?;
    let r = tape.add(dudt, adv)?;
    let r = tape.sub(r, diff)?;
    tape.weighted_mean_square(r, w)
}

/// Spectral operators for residuals on a uniform periodic 2D grid.
struct NsSymbols {
    dx: Arc<Vec<Complex64>>,
    dy: Arc<Vec<Complex64>>,
    lap: Arc<Vec<Complex64>>,
    inv_lap: Arc<Vec<Complex64>>,
    mask: Arc<Vec<Complex64>>,
}

impl NsSymbols {
    fn new(extents: &[usize], lengths: &[f64]) -> Result<Self> {
        let grid = WaveGrid::new(extents, lengths)?;
        Ok(NsSymbols {
            dx: Arc::new(grid.derivative_symbol(&[1, 0])?),
            dy: Arc::new(grid.derivative_symbol(&[0, 1])?),
            lap: Arc::new(grid.laplacian_symbol()),
            inv_lap: Arc::new(grid.inverse_laplacian_symbol()),
            mask: Arc::new(grid.dealias_mask().iter().map(|&m| Complex64::new(m, 0.0)).collect()),
        })
    }

    // dealiased u·∇ω with u = (∂y ψ, −∂x ψ), ψ = Δ⁻¹ ω
    fn advection(&self, tape: &mut Tape, omega: Var, wx: Var, wy: Var) -> Result<Var> {
        let psi = tape.fourier_multiplier(omega, 2, Arc::clone(&self.inv_lap))?;
        let ux = tape.fourier_multiplier(psi, 2, Arc::clone(&self.dy))?;
        let psi_x = tape.fourier_multiplier(psi, 2, Arc::clone(&self.dx))?;
        let a = tape.mul(ux, wx)?;
        let b = tape.mul(psi_x, wy)?;
        let prod = tape.sub(a, b)?;
        tape.fourier_multiplier(prod, 2, Arc::clone(&self.mask))
    }
}

fn check_zero_mean(tape: &Tape, v: Var) -> Result<()> {
    if tape.requires_grad(v) {
        return Ok(());
    }
    let x = tape.value(v).real()?;
    let shape = tape.value(v).shape();
    let per: usize = shape[shape.len() - 2..].iter().product();
    for chunk in x.chunks(per) {
        let mean = chunk.iter().sum::<f64>() / per as f64;
        let peak = chunk.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if mean.abs() > 1e-10 * peak {
            return Err(Error::Invalid(format!("vorticity has non-zero mean {mean:e}")));
        }
    }
    Ok(())
}

fn ns_frame_residual(
    tape: &mut Tape,
    sym: &NsSymbols,
    prev: Var,
    next: Var,
    derivs: Option<(Var, Var, Var)>,
    dt: f64,
    nu: f64,
    forcing: Var,
) -> Result<Var> {
    let (wx, wy, lap) = match derivs {
        Some(d) => d,
        None => (
            tape.fourier_multiplier(next, 2, Arc::clone(&sym.dx))?,
            tape.fourier_multiplier(next, 2, Arc::clone(&sym.dy))?,
            tape.fourier_multiplier(next, 2, Arc::clone(&sym.lap))?,
        ),
    };
    let dw = tape.sub(next, prev)?;
    let dwdt = tape.scale(dw, 1.0 / dt)?;
    let adv = sym.advection(tape, next, wx, wy)?;
    let diff = tape.scale(lap, nu)?;
    let r = tape.add(dwdt, adv)?;
    let r = tape.sub(r, diff)?;
    tape.sub(r, forcing)
}

/// Mean square over space, time and batch of the vorticity residual
/// `(ω₊ − ω)/Δt + D(u₊·∇ω₊) − νΔω₊ − f` for each consecutive pair in
/// `traj`, with spatial terms at the later frame and `D` the 2/3 rule.
/// Frames are `[B, n, n]` samples on a periodic box of side `lengths`;
/// derivatives are spectral. `weights` restricts the spatial average.
pub fn ns_residual_loss(
    tape: &mut Tape,
    traj: &[Var],
    lengths: &[f64],
    dt: f64,
    nu: f64,
    forcing: &Tensor,
    weights: Option<Arc<Vec<f64>>>,
) -> Result<Var> {
    if traj.len() < 2 {
        return Err(Error::Invalid("the vorticity residual needs at least two frames".into()));
    }
    if !(dt > 0.0) || !(nu >= 0.0) {
        return Err(Error::Invalid("time step must be positive and viscosity non-negative".into()));
    }
    let shape = tape.value(traj[0]).shape().to_vec();
    if shape.len() != 3 || traj.iter().any(|&v| tape.value(v).shape() != shape) {
        return Err(Error::Shape("frames must share a [B, n, n] shape".into()));
    }
    for &v in traj {
        check_zero_mean(tape, v)?;
    }
    let sym = NsSymbols::new(&shape[1..], lengths)?;
    let f = batched_constant(tape, forcing, &shape)?;
    let w = weights.unwrap_or_else(|| Arc::new(vec![1.0; shape[1] * shape[2]]));
    let mut residuals = Vec::new();
    for pair in traj.windows(2) {
        let r = ns_frame_residual(tape, &sym, pair[0], pair[1], None, dt, nu, f)?;
        residuals.push(tape.reshape(r, &[shape[0], 1, shape[1], shape[2]])?);
    }
    let all = tape.concat_channels(&residuals)?;
    tape.weighted_mean_square(all, w)
}

/// Vorticity residual between a known frame and a spline prediction, with
/// `∇ω₊` and `Δω₊` reconstructed from the spline and the velocity from the
/// spectral stream function on the sample grid. `prev` and `forcing` are
/// sampled at the spline's sample points; the average is over the interior.
#[allow(clippy::too_many_arguments)]
pub fn ns_residual_spline(
    tape: &mut Tape,
    prev: &Tensor,
    next: &SplineField,
    lengths: &[f64],
    dt: f64,
    nu: f64,
    forcing: &Tensor,
    width: usize,
) -> Result<Var> {
    if next.grid.dim() != 2 {
        return Err(Error::Invalid("the vorticity residual needs a 2D spline grid".into()));
    }
    if !(dt > 0.0) || !(nu >= 0.0) {
        return Err(Error::Invalid("time step must be positive and viscosity non-negative".into()));
    }
    check_samples(tape, next, prev, "previous frame")?;
    check_samples(tape, next, forcing, "forcing")?;
    let w = sample_weights(next, width)?;
    let omega = next.reconstruct(tape, &[0, 0])?;
    let shape = tape.value(omega).shape().to_vec();
    let p = batched_constant(tape, prev, &shape)?;
    check_zero_mean(tape, p)?;
    let f = batched_constant(tape, forcing, &shape)?;
    let wx = next.reconstruct(tape, &[1, 0])?;
    let wy = next.reconstruct(tape, &[0, 1])?;
    let wxx = next.reconstruct(tape, &[2, 0])?;
    let wyy = next.reconstruct(tape, &[0, 2])?;
    let lap = tape.add(wxx, wyy)?;
    let sym = NsSymbols::new(&shape[1..], lengths)?;
    let r = ns_frame_residual(tape, &sym, p, omega, Some((wx, wy, lap)), dt, nu, f)?;
    tape.weighted_mean_square(r, w)
}

/// Samples a periodic node field `[.., n..]` at `factor` points per cell by
/// trigonometric interpolation.
pub fn upsample(field: &Tensor, ndim: usize, factor: usize) -> Result<Tensor> {
    if factor == 1 {
        return Ok(field.clone());
    }
    let mut tape = Tape::new();
    let v = tape.constant(field.clone())?;
    let up = tape.fourier_upsample(v, ndim, factor)?;
    Ok(tape.value(up).clone())
}
