//! Fourier neural operators with a spline-coefficient or direct-field head.
//!
//! The model is `Q ∘ B_n ∘ … ∘ B_1 ∘ P` where `P` lifts the input channels
//! to the latent width, each block computes
//! `gelu(W v + b + Re(ifft(R ⊙ truncate(fft v))))` and `Q` is a two-layer
//! pointwise map with one activation.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::files;
use crate::spline::{SplineField, SplineGrid};
use crate::tensor::{Complex64, DType, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    /// Outputs `(L+1)^dim` Hermite spline coefficients per node.
    Spline,
    /// Outputs the field values directly.
    Direct,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorConfig {
    pub n_blocks: usize,
    /// Retained modes per spatial axis; its length is the spatial rank.
    pub modes: Vec<usize>,
    pub width: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub head: Head,
    pub spline_order: usize,
    pub proj_hidden: usize,
}

impl OperatorConfig {
    pub fn dim(&self) -> usize {
        self.modes.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() || self.modes.len() > 2 || self.modes.contains(&0) {
            return Err(Error::Config("modes must list 1 or 2 positive entries".into()));
        }
        if self.n_blocks == 0 || self.width == 0 || self.in_channels == 0 || self.out_channels == 0 || self.proj_hidden == 0
        {
            return Err(Error::Config("blocks, widths and channel counts must be positive".into()));
        }
        if self.head == Head::Spline {
            let want = (self.spline_order + 1).pow(self.dim() as u32);
            if self.out_channels != want {
                return Err(Error::Config(format!(
                    "spline head of order {} in {}D needs {want} output channels, got {}",
                    self.spline_order,
                    self.dim(),
                    self.out_channels
                )));
            }
        }
        Ok(())
    }

    /// Extents of the retained mode block, `[m]` or `[2 m_x, m_y]`.
    pub fn mode_shape(&self) -> Vec<usize> {
        match self.modes.as_slice() {
            [m] => vec![*m],
            [mx, my] => vec![2 * mx, *my],
            _ => vec![],
        }
    }

    /// Smallest admissible resolution per axis.
    pub fn min_resolution(&self) -> Vec<usize> {
        self.modes.iter().map(|m| 2 * m).collect()
    }

    /// Trainable real scalars; complex weights count twice.
    pub fn parameter_count(&self) -> usize {
        let (d, a, u, h) = (self.width, self.in_channels, self.out_channels, self.proj_hidden);
        let k: usize = self.mode_shape().iter().product();
        let lift = d * a + d;
        let block = 2 * k * d * d + d * d + d;
        let proj = h * d + h + u * h + u;
        lift + self.n_blocks * block + proj
    }

    pub(crate) fn param_specs(&self) -> Vec<(String, Vec<usize>, DType)> {
        let (d, a, u, h) = (self.width, self.in_channels, self.out_channels, self.proj_hidden);
        let mut specs = vec![
            ("lift.weight".to_string(), vec![d, a], DType::Real64),
            ("lift.bias".to_string(), vec![d], DType::Real64),
        ];
        for i in 0..self.n_blocks {
            let mut rshape = self.mode_shape();
            rshape.extend([d, d]);
            specs.push((format!("block{i}.spectral"), rshape, DType::Complex128));
            specs.push((format!("block{i}.weight"), vec![d, d], DType::Real64));
            specs.push((format!("block{i}.bias"), vec![d], DType::Real64));
        }
        specs.push(("proj1.weight".to_string(), vec![h, d], DType::Real64));
        specs.push(("proj1.bias".to_string(), vec![h], DType::Real64));
        specs.push(("proj2.weight".to_string(), vec![u, h], DType::Real64));
        specs.push(("proj2.bias".to_string(), vec![u], DType::Real64));
        specs
    }
}

/// A named trainable tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OperatorModel {
    config: OperatorConfig,
    params: Vec<Param>,
}

#[derive(Serialize, Deserialize)]
struct ParamMeta {
    name: String,
    shape: Vec<usize>,
    dtype: DType,
}

/// Checkpoint metadata stored as `meta.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointInfo {
    pub seed: u64,
    pub stage: usize,
    pub epoch: usize,
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    version: u32,
    config: OperatorConfig,
    info: CheckpointInfo,
    params: Vec<ParamMeta>,
}

impl OperatorModel {
    /// Initializes parameters from `seed`: spectral weights with real and
    /// imaginary parts uniform on `[0, 1/d²)`, every other tensor uniform on
    /// `±1/√fan_in`.
    pub fn init(config: OperatorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.width as f64;
        let mut params = Vec::new();
        for (name, shape, dtype) in config.param_specs() {
            let n: usize = shape.iter().product();
            let value = match dtype {
                DType::Complex128 => {
                    let s = 1.0 / (d * d);
                    let data = (0..n)
                        .map(|_| Complex64::new(rng.gen::<f64>() * s, rng.gen::<f64>() * s))
                        .collect();
                    Tensor::new_complex(&shape, data)?
                }
                DType::Real64 => {
                    let fan_in = if name.starts_with("lift") {
                        config.in_channels
                    } else if name.starts_with("proj2") {
                        config.proj_hidden
                    } else {
                        config.width
                    };
                    let bound = 1.0 / (fan_in as f64).sqrt();
                    Tensor::new_real(&shape, (0..n).map(|_| rng.gen_range(-bound..bound)).collect())?
                }
            };
            params.push(Param { name, value });
        }
        Ok(OperatorModel { config, params })
    }

    pub fn config(&self) -> &OperatorConfig {
        &self.config
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.value.real_scalar_count()).sum()
    }

    /// Records every parameter as a tape leaf, in [`OperatorModel::params`] order.
    pub fn bind(&self, tape: &mut Tape) -> Result<Vec<Var>> {
        self.params.iter().map(|p| tape.leaf(p.value.clone())).collect()
    }

    /// One spectral block with parameters `(R, W, b)`.
    pub fn spectral_block(&self, tape: &mut Tape, v: Var, r: Var, w: Var, b: Var) -> Result<Var> {
        let dim = self.config.dim();
        let shape = tape.value(v).shape().to_vec();
        self.check_resolution(&shape[2..])?;
        let lin = tape.channel_map(v, w, b)?;
        let f = tape.fft(v, dim)?;
        let k = tape.spectral_truncate(f, &self.config.modes)?;
        let mixed = tape.mode_mix(k, r)?;
        let full = tape.spectral_complete(mixed, &shape[2..], &self.config.modes)?;
        let back = tape.ifft(full, dim)?;
        let spec = tape.re(back)?;
        let pre = tape.add(lin, spec)?;
        tape.gelu(pre)
    }

    fn check_resolution(&self, spatial: &[usize]) -> Result<()> {
        if spatial.len() != self.config.dim() {
            return Err(Error::Shape(format!(
                "{}D model applied to spatial shape {spatial:?}",
                self.config.dim()
            )));
        }
        for (&n, &m) in spatial.iter().zip(&self.config.modes) {
            if n < 2 * m {
                return Err(Error::Invalid(format!(
                    "resolution {n} is below twice the retained modes {m}"
                )));
            }
        }
        Ok(())
    }

    /// Output `[B, out_channels, spatial...]` for input `[B, in_channels, spatial...]`.
    pub fn forward(&self, tape: &mut Tape, params: &[Var], input: Var) -> Result<Var> {
        if params.len() != self.params.len() {
            return Err(Error::Invalid("parameter vars do not match the model".into()));
        }
        let shape = tape.value(input).shape().to_vec();
        if shape.len() != 2 + self.config.dim() || shape[1] != self.config.in_channels {
            return Err(Error::Shape(format!(
                "input {shape:?} does not match {} input channels in {}D",
                self.config.in_channels,
                self.config.dim()
            )));
        }
        self.check_resolution(&shape[2..])?;
        let mut v = tape.channel_map(input, params[0], params[1])?;
        for i in 0..self.config.n_blocks {
            let base = 2 + 3 * i;
            v = self.spectral_block(tape, v, params[base], params[base + 1], params[base + 2])?;
        }
        let base = 2 + 3 * self.config.n_blocks;
        let h = tape.channel_map(v, params[base], params[base + 1])?;
        let h = tape.gelu(h)?;
        tape.channel_map(h, params[base + 2], params[base + 3])
    }

    /// Forward pass of a spline-head model wrapped on `grid`.
    pub fn forward_field(&self, tape: &mut Tape, params: &[Var], input: Var, grid: Arc<SplineGrid>) -> Result<SplineField> {
        if self.config.head != Head::Spline {
            return Err(Error::Config("forward_field needs a spline head".into()));
        }
        let coeffs = self.forward(tape, params, input)?;
        if tape.value(coeffs).shape()[2..] != grid.nodes()[..] || grid.channels() != self.config.out_channels {
            return Err(Error::Shape("spline grid does not match the model output".into()));
        }
        Ok(SplineField { coeffs, grid })
    }

    /// Constant-free evaluation without recording gradients.
    pub fn predict(&self, input: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let params: Vec<Var> = self
            .params
            .iter()
            .map(|p| tape.constant(p.value.clone()))
            .collect::<Result<_>>()?;
        let x = tape.constant(input.clone())?;
        let y = self.forward(&mut tape, &params, x)?;
        Ok(tape.value(y).clone())
    }

    /// Writes `meta.json` and one `<name>.f64` blob per parameter (complex
    /// blobs interleave real and imaginary parts).
    pub fn save(&self, dir: &Path, info: &CheckpointInfo) -> Result<()> {
        files::create_dir(dir)?;
        for p in &self.params {
            files::write_f64(&dir.join(format!("{}.f64", p.name)), &p.value.to_flat_reals())?;
        }
        let meta = CheckpointMeta {
            version: 1,
            config: self.config.clone(),
            info: info.clone(),
            params: self
                .params
                .iter()
                .map(|p| ParamMeta {
                    name: p.name.clone(),
                    shape: p.value.shape().to_vec(),
                    dtype: p.value.dtype(),
                })
                .collect(),
        };
        files::write_json(&dir.join("meta.json"), &meta)
    }

    pub fn load(dir: &Path) -> Result<(Self, CheckpointInfo)> {
        let meta: CheckpointMeta = files::read_json(&dir.join("meta.json"))?;
        meta.config.validate()?;
        let specs = meta.config.param_specs();
        if specs.len() != meta.params.len() {
            return Err(Error::Invalid("checkpoint parameter list does not match its config".into()));
        }
        let mut params = Vec::new();
        for ((name, shape, dtype), pm) in specs.into_iter().zip(&meta.params) {
            if name != pm.name || shape != pm.shape || dtype != pm.dtype {
                return Err(Error::Invalid(format!("checkpoint parameter {} is inconsistent", pm.name)));
            }
            let flat = files::read_f64(&dir.join(format!("{name}.f64")))?;
            let mut value = match dtype {
                DType::Real64 => Tensor::zeros(&shape),
                DType::Complex128 => Tensor::zeros_complex(&shape),
            };
            value.set_from_flat_reals(&flat)?;
            value.ensure_finite(&name)?;
            params.push(Param { name, value });
        }
        Ok((
            OperatorModel {
                config: meta.config,
                params,
            },
            meta.info,
        ))
    }
}

/// Appends normalized coordinate channels `x_i = i/N` per axis to a field
/// `[B, C, spatial...]`.
pub fn append_coordinates(field: &Tensor) -> Result<Tensor> {
    let shape = field.shape();
    if shape.len() < 3 || shape.len() > 4 {
        return Err(Error::Shape(format!("expected [B, C, N] or [B, C, Nx, Ny], got {shape:?}")));
    }
    let (batch, c) = (shape[0], shape[1]);
    let spatial = &shape[2..];
    let n: usize = spatial.iter().product();
    let dim = spatial.len();
    let x = field.real()?;
    let mut out = Vec::with_capacity(batch * (c + dim) * n);
    for b in 0..batch {
        out.extend_from_slice(&x[b * c * n..(b + 1) * c * n]);
        for axis in 0..dim {
            for p in 0..n {
                let idx = if dim == 1 {
                    p
                } else if axis == 0 {
                    p / spatial[1]
                } else {
                    p % spatial[1]
                };
                out.push(idx as f64 / spatial[axis] as f64);
            }
        }
    }
    let mut out_shape = shape.to_vec();
    out_shape[1] = c + dim;
    Tensor::new_real(&out_shape, out)
}
