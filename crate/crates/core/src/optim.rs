//! Adam with explicit moment state and reset diagnostics.
//!
//! Moments are stored per parameter group over the group's real scalars
//! (a complex entry contributes its real and imaginary parts), so complex
//! weights are updated componentwise.

use crate::error::{Error, Result};
use crate::operator::Param;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

/// Stand-in for an unbounded ratio when its denominator vanishes.
pub const SENTINEL: f64 = 1e300;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub bias_correction: bool,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            bias_correction: true,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |b: f64| (0.0..1.0).contains(&b);
        if !(self.lr > 0.0 && self.lr.is_finite()) || !unit(self.beta1) || !unit(self.beta2) || !(self.eps > 0.0) {
            return Err(Error::Config(format!("invalid Adam settings {self:?}")));
        }
        Ok(())
    }

    /// Closed-form magnitude of the first step from a zeroed state without
    /// bias correction, `η (1 − β1) / √(1 − β2)`.
    pub fn reset_step(&self) -> f64 {
        self.lr * (1.0 - self.beta1) / (1.0 - self.beta2).sqrt()
    }
}

#[derive(Clone, Debug)]
pub struct AdamState {
    config: AdamConfig,
    names: Vec<String>,
    shapes: Vec<Vec<usize>>,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
    lr: f64,
}

/// Per-group quantities at a stage transition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerDiagnostics {
    pub layer: String,
    /// `(1 − β2) · mean(g²)` of the first gradient under the new weights.
    pub grad_term: f64,
    /// `β2 · mean(v)` of the second moment before the transition.
    pub var_term: f64,
    pub dominance: f64,
    /// Update amplification `|Δθ_reset| / |Δθ_no-reset|`.
    pub ratio: f64,
    /// Set when a ratio denominator vanished and [`SENTINEL`] was recorded.
    pub flagged: bool,
}

fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        x.iter().sum::<f64>() / x.len() as f64
    }
}

impl AdamState {
    pub fn new(params: &[Param], config: AdamConfig) -> Result<Self> {
        config.validate()?;
        let sizes: Vec<usize> = params.iter().map(|p| p.value.real_scalar_count()).collect();
        Ok(AdamState {
            config,
            names: params.iter().map(|p| p.name.clone()).collect(),
            shapes: params.iter().map(|p| p.value.shape().to_vec()).collect(),
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
            lr: config.lr,
        })
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn group_names(&self) -> &[String] {
        &self.names
    }

    /// First moment of group `i` over its real scalars.
    pub fn m(&self, i: usize) -> &[f64] {
        &self.m[i]
    }

    /// Second moment of group `i` over its real scalars.
    pub fn v(&self, i: usize) -> &[f64] {
        &self.v[i]
    }

    /// Replaces the raw moments and step counter, e.g. when resuming.
    pub fn restore(&mut self, m: Vec<Vec<f64>>, v: Vec<Vec<f64>>, t: u64) -> Result<()> {
        let sizes_match = |x: &[Vec<f64>]| x.len() == self.m.len() && x.iter().zip(&self.m).all(|(a, b)| a.len() == b.len());
        if !sizes_match(&m) || !sizes_match(&v) {
            return Err(Error::Shape("restored moments do not match the parameter groups".into()));
        }
        if m.iter().chain(&v).flatten().any(|x| !x.is_finite()) || v.iter().flatten().any(|&x| x < 0.0) {
            return Err(Error::Invalid("moments must be finite with a non-negative second moment".into()));
        }
        self.m = m;
        self.v = v;
        self.t = t;
        Ok(())
    }

    /// Zeroes both moments and the step counter and restores the base rate.
    pub fn reset(&mut self) {
        for x in self.m.iter_mut().chain(self.v.iter_mut()) {
            x.iter_mut().for_each(|v| *v = 0.0);
        }
        self.t = 0;
        self.lr = self.config.lr;
    }

    fn check(&self, params: &[Param], grads: &[Tensor]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Invalid("parameter, gradient and state groups differ".into()));
        }
        for ((p, g), shape) in params.iter().zip(grads).zip(&self.shapes) {
            if p.value.shape() != &shape[..] || g.shape() != &shape[..] || g.dtype() != p.value.dtype() {
                return Err(Error::Shape(format!("gradient for {} does not match its parameter", p.name)));
            }
        }
        Ok(())
    }

    /// One update `θ ← θ − η m̂ / (√v̂ + ε)`. A non-finite gradient leaves
    /// parameters and state untouched and returns [`Error::NonFinite`].
    pub fn step(&mut self, params: &mut [Param], grads: &[Tensor]) -> Result<()> {
        self.check(params, grads)?;
        let flat: Vec<Vec<f64>> = grads.iter().map(|g| g.to_flat_reals()).collect();
        if let Some((i, _)) = flat.iter().enumerate().find(|(_, g)| g.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite(format!("gradient of {}", self.names[i])));
        }
        let AdamConfig {
            beta1, beta2, eps, bias_correction, ..
        } = self.config;
        self.t += 1;
        let (c1, c2) = if bias_correction {
            (1.0 - beta1.powi(self.t as i32), 1.0 - beta2.powi(self.t as i32))
        } else {
            (1.0, 1.0)
        };
        for (i, p) in params.iter_mut().enumerate() {
            let mut theta = p.value.to_flat_reals();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, &g) in flat[i].iter().enumerate() {
                m[j] = (1.0 - beta1) * g + beta1 * m[j];
                v[j] = (1.0 - beta2) * g * g + beta2 * v[j];
                theta[j] -= self.lr * (m[j] / c1) / ((v[j] / c2).sqrt() + eps);
            }
            p.value.set_from_flat_reals(&theta)?;
        }
        Ok(())
    }

    /// Mean of `|η m / (√v + ε)|` over the raw moments, overall and per group.
    pub fn effective_lr(&self) -> (f64, Vec<f64>) {
        let eps = self.config.eps;
        let mut total = 0.0;
        let mut count = 0usize;
        let per = self
            .m
            .iter()
            .zip(&self.v)
            .map(|(m, v)| {
                let s: f64 = m.iter().zip(v).map(|(m, v)| (self.lr * m / (v.sqrt() + eps)).abs()).sum();
                total += s;
                count += m.len();
                if m.is_empty() { 0.0 } else { s / m.len() as f64 }
            })
            .collect();
        (if count == 0 { 0.0 } else { total / count as f64 }, per)
    }

    /// Transition diagnostics from the current (pre-reset) raw moments and
    /// the first gradient under the new stage weights.
    pub fn stage_diagnostics(&self, g_new: &[Tensor]) -> Result<Vec<LayerDiagnostics>> {
        if g_new.len() != self.m.len() {
            return Err(Error::Invalid("gradient groups do not match the optimizer state".into()));
        }
        let AdamConfig { beta1, beta2, .. } = self.config;
        let mut out = Vec::with_capacity(g_new.len());
        for (i, g) in g_new.iter().enumerate() {
            let g = g.to_flat_reals();
            if g.len() != self.m[i].len() {
                return Err(Error::Shape(format!("gradient for {} does not match its state", self.names[i])));
            }
            let g2: Vec<f64> = g.iter().map(|x| x * x).collect();
            let grad_term = (1.0 - beta2) * mean(&g2);
            let vbar = mean(&self.v[i]);
            let var_term = beta2 * vbar;
            let no_reset: Vec<f64> = g
                .iter()
                .zip(&self.m[i])
                .map(|(g, m)| ((1.0 - beta1) * g + beta1 * m).abs())
                .collect();
            let den = (1.0 - beta2).sqrt() * mean(&no_reset);
            let num = (1.0 - beta1) * (beta2 * vbar).sqrt();
            let mut flagged = false;
            let mut guarded = |num: f64, den: f64| {
                if den > 0.0 && (num / den).is_finite() {
                    num / den
                } else {
                    flagged = true;
                    SENTINEL
                }
            };
            let ratio = guarded(num, den);
            let dominance = guarded(grad_term, var_term);
            out.push(LayerDiagnostics {
                layer: self.names[i].clone(),
                grad_term,
                var_term,
                dominance,
                ratio,
                flagged,
            });
        }
        Ok(out)
    }
}
