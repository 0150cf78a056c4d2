//! 2D incompressible Navier–Stokes in vorticity form on the unit torus,
//! `ω_t + u·∇ω = νΔω + f`, with Crank–Nicolson diffusion, explicit
//! dealiased advection and `u = (ψ_y, −ψ_x)`, `−Δψ = ω`.

use super::burgers::{step_count, BLOW_UP};
use crate::error::{Error, Result};
use crate::fft;
use crate::spectral::WaveGrid;
use crate::tensor::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NsParams {
    pub nu: f64,
    pub dt: f64,
    pub t_final: f64,
    pub save_every: usize,
}

/// Saved vorticity and velocity snapshots, each `n × n` row-major with the
/// x index leading.
#[derive(Clone, Debug, PartialEq)]
pub struct NsTrajectory {
    pub times: Vec<f64>,
    pub omega: Vec<Vec<f64>>,
    pub ux: Vec<Vec<f64>>,
    pub uy: Vec<Vec<f64>>,
}

struct Operators {
    n: usize,
    dx: Vec<Complex64>,
    dy: Vec<Complex64>,
    inv_lap: Vec<Complex64>,
    lap: Vec<f64>,
    mask: Vec<f64>,
}

impl Operators {
    fn new(n: usize) -> Result<Self> {
        let g = WaveGrid::unit(&[n, n])?;
        Ok(Operators {
            n,
            dx: g.derivative_symbol(&[1, 0])?,
            dy: g.derivative_symbol(&[0, 1])?,
            inv_lap: g.inverse_laplacian_symbol(),
            lap: g.laplacian_magnitude(),
            mask: g.dealias_mask(),
        })
    }

    fn to_real(&self, spec: &[Complex64]) -> Vec<f64> {
        let n = self.n;
        fft::ifft_normalized(spec.to_vec(), &[n, n], 2)
            .expect("2D transform")
            .iter()
            .map(|z| z.re)
            .collect()
    }

    fn scaled(&self, spec: &[Complex64], sym: &[Complex64]) -> Vec<Complex64> {
        spec.iter().zip(sym).map(|(a, b)| a * b).collect()
    }

    fn velocity(&self, w: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
        let psi = self.scaled(w, &self.inv_lap);
        let ux = self.to_real(&self.scaled(&psi, &self.dy));
        let uy: Vec<f64> = self.to_real(&self.scaled(&psi, &self.dx)).iter().map(|v| -v).collect();
        (ux, uy)
    }

    // dealiased spectrum of u·∇ω
    fn advection(&self, w: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let (ux, uy) = self.velocity(w);
        let wx = self.to_real(&self.scaled(w, &self.dx));
        let wy = self.to_real(&self.scaled(w, &self.dy));
        let prod: Vec<f64> = (0..n * n).map(|p| ux[p] * wx[p] + uy[p] * wy[p]).collect();
        let mut spec = fft::rfft_full(&prod, &[n, n], 2).expect("2D transform");
        spec.iter_mut().zip(&self.mask).for_each(|(z, m)| *z *= *m);
        spec
    }
}

/// Integrates from `omega0` under `forcing` (both `n × n`).
pub fn ns_crank_nicolson(omega0: &[f64], forcing: &[f64], p: &NsParams) -> Result<NsTrajectory> {
    let n = (omega0.len() as f64).sqrt().round() as usize;
    if n * n != omega0.len() || forcing.len() != omega0.len() || n < 4 {
        return Err(Error::Shape("vorticity and forcing must share an n × n grid".into()));
    }
    if !(p.nu >= 0.0) {
        return Err(Error::Invalid("viscosity must be non-negative".into()));
    }
    let mean = omega0.iter().sum::<f64>() / omega0.len() as f64;
    if mean.abs() > 1e-12 * omega0.iter().fold(1.0f64, |m, v| m.max(v.abs())) {
        return Err(Error::Invalid(format!("initial vorticity has non-zero mean {mean:e}")));
    }
    let steps = step_count(p.t_final, p.dt, p.save_every)?;
    let ops = Operators::new(n)?;
    let mut w = fft::rfft_full(omega0, &[n, n], 2)?;
    w[0] = Complex64::new(0.0, 0.0);
    let mut f = fft::rfft_full(forcing, &[n, n], 2)?;
    f[0] = Complex64::new(0.0, 0.0);
    let half: Vec<f64> = ops.lap.iter().map(|l| 0.5 * p.dt * p.nu * l).collect();
    let mut out = NsTrajectory {
        times: vec![0.0],
        omega: Vec::new(),
        ux: Vec::new(),
        uy: Vec::new(),
    };
    let record = |w: &[Complex64], out: &mut NsTrajectory| {
        out.omega.push(ops.to_real(w));
        let (ux, uy) = ops.velocity(w);
        out.ux.push(ux);
        out.uy.push(uy);
    };
    record(&w, &mut out);
    for step in 1..=steps {
        let adv = ops.advection(&w);
        for i in 0..n * n {
            w[i] = (w[i] * (1.0 - half[i]) + (f[i] - adv[i]) * p.dt) / (1.0 + half[i]);
        }
        w[0] = Complex64::new(0.0, 0.0);
        if step % p.save_every == 0 {
            record(&w, &mut out);
            out.times.push(step as f64 * p.dt);
            let last = out.omega.last().expect("recorded");
            let peak = super::peak_abs(last);
            if !(peak <= BLOW_UP) {
                return Err(Error::BlowUp(format!("max |ω| = {peak:e} at step {step}")));
            }
        }
    }
    Ok(out)
}
