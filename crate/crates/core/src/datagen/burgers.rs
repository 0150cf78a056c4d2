//! Viscous Burgers `u_t + (u²/2)_x = ν u_xx` on a periodic interval,
//! integrated with ETDRK4 (Cox–Matthews, contour-averaged coefficients).

use crate::error::{Error, Result};
use crate::fft;
use crate::spectral::WaveGrid;
use crate::tensor::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Value above which a trajectory counts as blown up.
pub const BLOW_UP: f64 = 1e6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BurgersParams {
    pub nu: f64,
    pub length: f64,
    pub dt: f64,
    pub t_final: f64,
    /// Solver steps between saved snapshots.
    pub save_every: usize,
}

impl Default for BurgersParams {
    fn default() -> Self {
        BurgersParams {
            nu: 0.1,
            length: 2.0 * PI,
            dt: 1e-4,
            t_final: 0.1,
            save_every: 1000,
        }
    }
}

/// Saved states, one row per snapshot time.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

pub(crate) fn step_count(t_final: f64, dt: f64, save_every: usize) -> Result<usize> {
    if !(dt > 0.0) || !(t_final > 0.0) || save_every == 0 {
        return Err(Error::Invalid("time step, horizon and save interval must be positive".into()));
    }
    let steps = (t_final / dt).round();
    if ((steps * dt) - t_final).abs() > 1e-9 * t_final.max(1.0) {
        return Err(Error::Invalid(format!("horizon {t_final} is not a multiple of dt {dt}")));
    }
    let steps = steps as usize;
    if steps % save_every != 0 {
        return Err(Error::Invalid(format!(
            "{steps} steps are not a multiple of save_every {save_every}"
        )));
    }
    Ok(steps)
}

struct Coefficients {
    e: Vec<f64>,
    e2: Vec<f64>,
    q: Vec<f64>,
    f1: Vec<f64>,
    f2: Vec<f64>,
    f3: Vec<f64>,
}

fn etd_coefficients(lin: &[f64], h: f64) -> Coefficients {
    const M: usize = 32;
    let roots: Vec<Complex64> = (1..=M)
        .map(|j| Complex64::from_polar(1.0, PI * (j as f64 - 0.5) / M as f64))
        .collect();
    let mut c = Coefficients {
        e: Vec::new(),
        e2: Vec::new(),
        q: Vec::new(),
        f1: Vec::new(),
        f2: Vec::new(),
        f3: Vec::new(),
    };
    for &l in lin {
        let hl = h * l;
        c.e.push(hl.exp());
        c.e2.push((hl / 2.0).exp());
        let (mut q, mut f1, mut f2, mut f3) = (0.0, 0.0, 0.0, 0.0);
        for r in &roots {
            let z = Complex64::new(hl, 0.0) + r;
            let ez = z.exp();
            let z3 = z * z * z;
            q += (((z / 2.0).exp() - 1.0) / z).re;
            f1 += ((-4.0 - z + ez * (4.0 - 3.0 * z + z * z)) / z3).re;
            f2 += ((2.0 + z + ez * (z - 2.0)) / z3).re;
            f3 += ((-4.0 - 3.0 * z - z * z + ez * (4.0 - z)) / z3).re;
        }
        let m = M as f64;
        c.q.push(h * q / m);
        c.f1.push(h * f1 / m);
        c.f2.push(h * f2 / m);
        c.f3.push(h * f3 / m);
    }
    c
}

/// Integrates from `u0` and returns snapshots at `t = 0` and every
/// `save_every` steps.
pub fn burgers_etdrk4(u0: &[f64], p: &BurgersParams) -> Result<Trajectory> {
    let n = u0.len();
    if !(p.nu > 0.0) || !(p.length > 0.0) {
        return Err(Error::Invalid("viscosity and length must be positive".into()));
    }
    if u0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial condition".into()));
    }
    let steps = step_count(p.t_final, p.dt, p.save_every)?;
    let grid = WaveGrid::new(&[n], &[p.length])?;
    let k: Vec<f64> = (0..n).map(|i| grid.angular(0, i)).collect();
    let lin: Vec<f64> = k.iter().map(|k| -p.nu * k * k).collect();
    let mask = grid.dealias_mask();
    // N(v) = −½ i k FFT(u²), dealiased; the odd-order Nyquist factor is zero
    let g: Vec<Complex64> = (0..n)
        .map(|i| {
            if n % 2 == 0 && i == n / 2 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, -0.5 * k[i] * mask[i])
            }
        })
        .collect();
    let c = etd_coefficients(&lin, p.dt);
    let nonlinear = |v: &[Complex64]| -> Vec<Complex64> {
        let mut u = v.to_vec();
        fft::fft_trailing(&mut u, &[n], 1, true).expect("1D transform");
        let inv = 1.0 / n as f64;
        let mut sq: Vec<Complex64> = u.iter().map(|z| Complex64::new((z.re * inv).powi(2), 0.0)).collect();
        fft::fft_trailing(&mut sq, &[n], 1, false).expect("1D transform");
        sq.iter().zip(&g).map(|(a, b)| a * b).collect()
    };
    let to_real = |v: &[Complex64]| -> Vec<f64> {
        let u = fft::ifft_normalized(v.to_vec(), &[n], 1).expect("1D transform");
        u.iter().map(|z| z.re).collect()
    };
    let mut v = fft::rfft_full(u0, &[n], 1)?;
    let mut out = Trajectory {
        times: vec![0.0],
        states: vec![u0.to_vec()],
    };
    for step in 1..=steps {
        let nv = nonlinear(&v);
        let a: Vec<Complex64> = (0..n).map(|i| v[i] * c.e2[i] + nv[i] * c.q[i]).collect();
        let na = nonlinear(&a);
        let b: Vec<Complex64> = (0..n).map(|i| v[i] * c.e2[i] + na[i] * c.q[i]).collect();
        let nb = nonlinear(&b);
        let cc: Vec<Complex64> = (0..n).map(|i| a[i] * c.e2[i] + (nb[i] * 2.0 - nv[i]) * c.q[i]).collect();
        let nc = nonlinear(&cc);
        for i in 0..n {
            v[i] = v[i] * c.e[i] + nv[i] * c.f1[i] + (na[i] + nb[i]) * (2.0 * c.f2[i]) + nc[i] * c.f3[i];
        }
        if step % p.save_every == 0 {
            let u = to_real(&v);
            let peak = super::peak_abs(&u);
            if !(peak <= BLOW_UP) {
                return Err(Error::BlowUp(format!("max |u| = {peak:e} at step {step}")));
            }
            out.times.push(step as f64 * p.dt);
            out.states.push(u);
        }
    }
    Ok(out)
}
