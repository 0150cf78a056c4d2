//! Forcing fields on the unit torus and the analytic Poisson reference.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Forcing {
    /// `0.1 (sin 2π(x+y) + cos 2π(x+y))`
    TrigNs,
    /// `−4π² (sin 4πx + sin 4πy)`
    FourPi,
    /// `−n cos(2π n y)`
    Kolmogorov { n: u32 },
    None,
}

impl Forcing {
    pub fn parse(kind: &str) -> Result<Self> {
        match kind {
            "trig_ns" => Ok(Forcing::TrigNs),
            "four_pi" => Ok(Forcing::FourPi),
            "kolmogorov" => Ok(Forcing::Kolmogorov { n: 2 }),
            "none" => Ok(Forcing::None),
            other => Err(Error::Config(format!("unknown forcing kind {other:?}"))),
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match *self {
            Forcing::TrigNs => 0.1 * ((2.0 * PI * (x + y)).sin() + (2.0 * PI * (x + y)).cos()),
            Forcing::FourPi => -4.0 * PI * PI * ((4.0 * PI * x).sin() + (4.0 * PI * y).sin()),
            Forcing::Kolmogorov { n } => -(n as f64) * (2.0 * PI * n as f64 * y).cos(),
            Forcing::None => 0.0,
        }
    }
}

/// Samples `f` on the `n × n` grid `(i/n, j/n)`, x index leading.
pub fn make_forcing(kind: Forcing, n: usize) -> Vec<f64> {
    sample_unit_grid(n, |x, y| kind.eval(x, y))
}

pub fn sample_unit_grid(n: usize, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            out.push(f(i as f64 / n as f64, j as f64 / n as f64));
        }
    }
    out
}

/// `f = sin 2πx sin 2πy` and `ψ* = f / 8π²`, which satisfy `Δψ* + f = 0`.
pub fn poisson_reference(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n < 8 {
        return Err(Error::Invalid(format!("Poisson grid {n} is below 8")));
    }
    let f = sample_unit_grid(n, |x, y| (2.0 * PI * x).sin() * (2.0 * PI * y).sin());
    let psi = f.iter().map(|v| v / (8.0 * PI * PI)).collect();
    Ok((f, psi))
}
