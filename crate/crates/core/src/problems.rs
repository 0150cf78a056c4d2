//! Training objectives built from datasets: Poisson, Burgers and
//! Navier–Stokes vorticity.

use crate::autodiff::{Tape, Var};
use crate::curriculum::Objective;
use crate::datagen::{make_forcing, DataConfig, Dataset, Pde};
use crate::error::{Error, Result};
use crate::losses::{self, NsDerivatives};
use crate::operator::{append_coordinates, Head, OperatorModel};
use crate::spline::{Boundary, CoeffUnits, HermiteBasis, SplineField, SplineGrid};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

/// Problem-level settings shared by the three benchmarks. Unset fields take
/// per-problem defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProblemSettings {
    /// Spline samples per cell for residual collocation (4 in 1D, 3 in 2D).
    pub samples: Option<usize>,
    /// Band width in cells per end; overrides `band_fraction`.
    pub band_cells: Option<usize>,
    /// Fraction of points per axis in the band (0.05).
    pub band_fraction: Option<f64>,
    /// Leading samples used for training; the rest are held out.
    pub n_train: Option<usize>,
    /// Forecast step of the Burgers residual (0.1).
    pub dt: Option<f64>,
    /// Frames per Navier–Stokes training window (10).
    pub window: Option<usize>,
    pub ns_derivatives: NsDerivatives,
}

impl ProblemSettings {
    fn band(&self, n: usize) -> usize {
        self.band_cells
            .unwrap_or_else(|| losses::band_cells(n, self.band_fraction.unwrap_or(0.05)))
    }
}

/// Stacks `[1, ...]` tensors along the batch axis.
pub fn stack(parts: &[&Tensor]) -> Result<Tensor> {
    let first = parts.first().ok_or_else(|| Error::Invalid("nothing to stack".into()))?;
    let mut shape = first.shape().to_vec();
    let mut data = Vec::with_capacity(first.numel() * parts.len());
    for p in parts {
        if p.shape() != first.shape() {
            return Err(Error::Shape("stacked tensors differ in shape".into()));
        }
        data.extend_from_slice(p.real()?);
    }
    shape[0] *= parts.len();
    Tensor::new_real(&shape, data)
}

fn spline_grids(model: &OperatorModel, nodes: &[usize], lengths: &[f64], samples: usize) -> Result<(Arc<SplineGrid>, Arc<SplineGrid>)> {
    let cfg = model.config();
    if cfg.head != Head::Spline {
        return Err(Error::Config("physics-informed training needs a spline head".into()));
    }
    let basis = Arc::new(HermiteBasis::new(cfg.spline_order)?);
    let spacing: Vec<f64> = nodes.iter().zip(lengths).map(|(&n, l)| l / n as f64).collect();
    // Derivatives are measured in the domain's angular coordinate.
    let units = CoeffUnits::Scaled(lengths[0] / std::f64::consts::TAU);
    let make = |s| SplineGrid::new(Arc::clone(&basis), nodes, &spacing, Boundary::Periodic, s, units);
    Ok((Arc::new(make(samples)?), Arc::new(make(1)?)))
}

fn node_values(tape: &mut Tape, coeffs: Var, nodes: &Arc<SplineGrid>) -> Result<Var> {
    let field = SplineField { coeffs, grid: Arc::clone(nodes) };
    field.reconstruct(tape, &vec![0; nodes.dim()])
}

fn predict_nodes(model: &OperatorModel, input: &Tensor, nodes: &SplineGrid) -> Result<Tensor> {
    let coeffs = model.predict(input)?;
    nodes.reconstruct(&coeffs, &vec![0; nodes.dim()])
}

fn input_with_coords(field: &[f64], spatial: &[usize]) -> Result<Tensor> {
    let mut shape = vec![1, 1];
    shape.extend_from_slice(spatial);
    append_coordinates(&Tensor::new_real(&shape, field.to_vec())?)
}

fn expect_pde(ds: &Dataset, pde: Pde) -> Result<()> {
    if ds.manifest.pde != pde {
        return Err(Error::Config(format!(
            "dataset holds {:?} data, expected {pde:?}",
            ds.manifest.pde
        )));
    }
    Ok(())
}

/// Shared pieces of a one-step forecast problem `a ↦ u`.
struct Pairs {
    inputs: Vec<Tensor>,
    /// Previous state at the spline samples, `[1, samples...]`.
    prev: Vec<Tensor>,
    /// Target at the nodes, `[1, nodes...]`.
    target: Vec<Tensor>,
    n_train: usize,
}

impl Pairs {
    fn batch(&self, idx: &[usize], pick: impl Fn(&Self) -> &Vec<Tensor>) -> Result<Tensor> {
        let all = pick(self);
        stack(&idx.iter().map(|&i| &all[i]).collect::<Vec<_>>())
    }

    fn test_l2(&self, model: &OperatorModel, nodes: &SplineGrid) -> Result<f64> {
        let test: Vec<usize> = (self.n_train..self.inputs.len()).collect();
        if test.is_empty() {
            return Err(Error::Config("no held-out samples for the test metric".into()));
        }
        let mut total = 0.0;
        for chunk in test.chunks(8) {
            let pred = predict_nodes(model, &self.batch(chunk, |p| &p.inputs)?, nodes)?;
            let want = self.batch(chunk, |p| &p.target)?;
            total += losses::l2_metric(&want, &pred)? * chunk.len() as f64;
        }
        Ok(total / test.len() as f64)
    }

    /// Mean relative L2 error over the held-out samples.
    fn test_relative(&self, model: &OperatorModel, nodes: &SplineGrid) -> Result<f64> {
        let test = self.n_train..self.inputs.len();
        let n = test.len() as f64;
        let mut total = 0.0;
        for i in test {
            let pred = predict_nodes(model, &self.inputs[i], nodes)?;
            total += losses::relative_l2(&self.target[i], &pred)?;
        }
        Ok(total / n)
    }
}

/// Builds the objective matching the dataset's pde.
pub fn build_problem(ds: &Dataset, model: &OperatorModel, settings: &ProblemSettings) -> Result<Box<dyn Objective>> {
    Ok(match ds.manifest.pde {
        Pde::Poisson => Box::new(PoissonProblem::new(ds, model, settings)?),
        Pde::Burgers => Box::new(BurgersProblem::new(ds, model, settings)?),
        Pde::NavierStokes => Box::new(NsProblem::new(ds, model, settings)?),
    })
}

/// `Δψ + f = 0` on the periodic unit square; one source, so the test
/// metric is the error against the analytic solution.
pub struct PoissonProblem {
    input: Tensor,
    f_samples: Tensor,
    psi: Tensor,
    band: usize,
    grid: Arc<SplineGrid>,
    nodes: Arc<SplineGrid>,
}

impl PoissonProblem {
    pub fn new(ds: &Dataset, model: &OperatorModel, settings: &ProblemSettings) -> Result<Self> {
        expect_pde(ds, Pde::Poisson)?;
        let res = ds.manifest.resolution.clone();
        let s = settings.samples.unwrap_or(3);
        let (grid, nodes) = spline_grids(model, &res, &ds.manifest.domain_length, s)?;
        let f = ds.field(0, "f")?;
        let mut shape = vec![1];
        shape.extend_from_slice(&res);
        let f_nodes = Tensor::new_real(&shape, f.to_vec())?;
        Ok(PoissonProblem {
            input: input_with_coords(f, &res)?,
            f_samples: losses::upsample(&f_nodes, 2, s)?,
            psi: Tensor::new_real(&shape, ds.field(0, "psi")?.to_vec())?,
            band: settings.band(res[0]),
            grid,
            nodes,
        })
    }

    /// Interior mean of `|Δψ + f|²` for the current model.
    pub fn interior_residual(&self, model: &OperatorModel) -> Result<f64> {
        let mut tape = Tape::new();
        let coeffs = tape.constant(model.predict(&self.input)?)?;
        let field = SplineField { coeffs, grid: Arc::clone(&self.grid) };
        let r = losses::poisson_residual_loss(&mut tape, &field, &self.f_samples, self.band)?;
        tape.value(r).item()
    }

    fn forward(&self, model: &OperatorModel, tape: &mut Tape, params: &[Var]) -> Result<SplineField> {
        let x = tape.constant(self.input.clone())?;
        model.forward_field(tape, params, x, Arc::clone(&self.grid))
    }
}

impl Objective for PoissonProblem {
    fn n_train(&self) -> usize {
        1
    }

    fn losses(&self, model: &OperatorModel, tape: &mut Tape, params: &[Var], _batch: &[usize]) -> Result<(Var, Var)> {
        let field = self.forward(model, tape, params)?;
        let v = node_values(tape, field.coeffs, &self.nodes)?;
        let bd = losses::boundary_band_loss(tape, v, &self.psi, self.band)?;
        let res = losses::poisson_residual_loss(tape, &field, &self.f_samples, self.band)?;
        Ok((bd, res))
    }

    fn supervised(&self, model: &OperatorModel, tape: &mut Tape, params: &[Var], _batch: &[usize]) -> Result<Var> {
        let field = self.forward(model, tape, params)?;
        let v = node_values(tape, field.coeffs, &self.nodes)?;
        losses::l2_loss(tape, v, &self.psi)
    }

    fn test_loss(&self, model: &OperatorModel) -> Result<f64> {
        let pred = predict_nodes(model, &self.input, &self.nodes)?;
        losses::l2_metric(&self.psi, &pred)
    }

    fn metrics(&self, model: &OperatorModel) -> Result<BTreeMap<String, f64>> {
        let pred = predict_nodes(model, &self.input, &self.nodes)?;
        Ok(BTreeMap::from([
            ("interior_residual".to_string(), self.interior_residual(model)?),
            ("relative_l2".to_string(), losses::relative_l2(&self.psi, &pred)?),
        ]))
    }
}

/// One forecast step `u(·, 0) ↦ u(·, Δt)` of viscous Burgers.
pub struct BurgersProblem {
    pairs: Pairs,
    dt: f64,
    nu: f64,
    band: usize,
    grid: Arc<SplineGrid>,
    nodes: Arc<SplineGrid>,
}

impl BurgersProblem {
    pub fn new(ds: &Dataset, model: &OperatorModel, settings: &ProblemSettings) -> Result<Self> {
        expect_pde(ds, Pde::Burgers)?;
        let DataConfig::Burgers(cfg) = &ds.manifest.config else {
            return Err(Error::Config("manifest config is not a Burgers recipe".into()));
        };
        let n = ds.manifest.resolution[0];
        let dt = settings.dt.unwrap_or(0.1);
        let k = ds
            .manifest
            .times
            .iter()
            .position(|t| (t - dt).abs() < 1e-9)
            .ok_or_else(|| Error::Config(format!("dataset has no snapshot at t = {dt}")))?;
        let s = settings.samples.unwrap_or(4);
        let (grid, nodes) = spline_grids(model, &[n], &ds.manifest.domain_length, s)?;
        let mut pairs = Pairs {
            inputs: Vec::new(),
            prev: Vec::new(),
            target: Vec::new(),
            n_train: settings.n_train.unwrap_or(ds.samples.len() * 4 / 5),
        };
        for i in 0..ds.samples.len() {
            let a = ds.field(i, "a")?;
            pairs.inputs.push(input_with_coords(a, &[n])?);
            pairs.prev.push(losses::upsample(&Tensor::new_real(&[1, n], a.to_vec())?, 1, s)?);
            pairs.target.push(Tensor::new_real(&[1, n], ds.frame(i, "u", k)?.to_vec())?);
        }
        check_split(pairs.n_train, pairs.inputs.len())?;
        Ok(BurgersProblem {
            pairs,
            dt,
            nu: cfg.solver.nu,
            band: settings.band(n),
            grid,
            nodes,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.pairs.inputs.len()
    }

    /// Relative L2 error of the prediction on sample `i`.
    pub fn relative_error(&self, model: &OperatorModel, i: usize) -> Result<f64> {
        let pred = predict_nodes(model, &self.pairs.inputs[i], &self.nodes)?;
        losses::relative_l2(&self.pairs.target[i], &pred)
    }

    /// Mean relative L2 error over the held-out samples.
    pub fn test_relative_error(&self, model: &OperatorModel) -> Result<f64> {
        self.pairs.test_relative(model, &self.nodes)
    }
}

fn check_split(n_train: usize, total: usize) -> Result<()> {
    if n_train == 0 || n_train >= total {
        return Err(Error::Config(format!(
            "n_train = {n_train} must leave at least one of {total} samples for testing"
        )));
    }
    Ok(())
}

impl Objective for BurgersProblem {
    fn n_train(&self) -> usize {
        self.pairs.n_train
    }

    fn losses(&self, model: &OperatorModel, tape: &mut Tape, params: &[Var], batch: &[usize]) -> Result<(Var, Var)> {
        let x = tape.constant(self.pairs.batch(batch, |p| &p.inputs)?)?;
        let field = model.forward_field(tape, params, x, Arc::clone(&self.grid))?;
        let v = node_values(tape, field.coeffs, &self.nodes)?;
        let bd = losses::boundary_band_loss(tape, v, &self.pairs.batch(batch, |p| &p.target)?, self.band)?;
        let prev = self.pairs.batch(batch, |p| &p.prev)?;
        let res = losses::burgers_residual_loss(tape, &field, &prev, self.dt, self.nu, self.band)?;
        Ok((bd, res))
    }

    fn supervised(&self, model: &OperatorModel, tape: &mut Tape, params: &[Var], batch: &[usize]) -> Result<Var> {
        let x = tape.constant(self.pairs.batch(batch, |p| &p.inputs)?)?;
        let c = model.forward(tape, params, x)?;
        let v = node_values(tape, c, &self.nodes)?;
        losses::l2_loss(tape, v, &self.pairs.batch(batch, |p| &p.target)?)
    }

    fn test_loss(&self, model: &OperatorModel) -> Result<f64> {
        self.pairs.test_l2(model, &self.nodes)
    }

    fn metrics(&self, model: &OperatorModel) -> Result<BTreeMap<String, f64>> {
        Ok(BTreeMap::from([("relative_l2".to_string(), self.test_relative_error(model)?)]))
    }
}

/// One frame step `ω(t) ↦ ω(t + Δt)` of forced 2D vorticity, trained on
/// consecutive pairs inside fixed-length windows.
pub struct NsProblem {
    pairs: Pairs,
    dt: f64,
    nu: f64,
    band: usize,
    forcing_nodes: Tensor,
    forcing_samples: Tensor,
    prev_nodes: Vec<Tensor>,
    derivatives: NsDerivatives,
    grid: Arc<SplineGrid>,
    nodes: Arc<SplineGrid>,
    lengths: Vec<f64>,
}

impl NsProblem {
    pub fn new(ds: &Dataset, model: &OperatorModel, settings: &ProblemSettings) -> Result<Self> {
        expect_pde(ds, Pde::NavierStokes)?;
        let DataConfig::NavierStokes(cfg) = &ds.manifest.config else {
            return Err(Error::Config("manifest config is not a Navier–Stokes recipe".into()));
        };
        let res = ds.manifest.resolution.clone();
        let n = res[0];
        let dt = ds
            .manifest
            .snapshot_dt()
            .ok_or_else(|| Error::Config("vorticity dataset needs at least two frames".into()))?;
        let frames = ds.manifest.times.len();
        let window = settings.window.unwrap_or(10).min(frames);
        if window < 2 {
            return Err(Error::Config("training windows need at least two frames".into()));
        }
        let s = settings.samples.unwrap_or(3);
        let (grid, nodes) = spline_grids(model, &res, &ds.manifest.domain_length, s)?;
        let n_train_samples = settings.n_train.unwrap_or(ds.samples.len() * 4 / 5);
        check_split(n_train_samples, ds.samples.len())?;
        let mut pairs = Pairs {
            inputs: Vec::new(),
            prev: Vec::new(),
            target: Vec::new(),
            n_train: 0,
        };
        let mut prev_nodes = Vec::new();
        for i in 0..ds.samples.len() {
            if i == n_train_samples {
                pairs.n_train = pairs.inputs.len();
            }
            for start in (0..frames).step_by(window) {
                for k in start..(start + window - 1).min(frames - 1) {
                    let w = ds.frame(i, "omega", k)?;
                    let node = Tensor::new_real(&[1, n, n], w.to_vec())?;
                    pairs.inputs.push(input_with_coords(w, &res)?);
                    pairs.prev.push(losses::upsample(&node, 2, s)?);
                    prev_nodes.push(node);
                    pairs.target.push(Tensor::new_real(&[1, n, n], ds.frame(i, "omega", k + 1)?.to_vec())?);
                }
            }
        }
        let f = Tensor::new_real(&[n, n], make_forcing(cfg.forcing, n))?;
        Ok(NsProblem {
            pairs,
            dt,
            nu: cfg.nu,
            band: settings.band(n),
            forcing_samples: losses::upsample(&f, 2, s)?,
            forcing_nodes: f,
            prev_nodes,
            derivatives: settings.ns_derivatives,
            grid,
            nodes,
            lengths: ds.manifest.domain_length.clone(),
        })
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.inputs.len()
    }
}

impl Objective for NsProblem {
    fn n_train(&self) -> usize {
        self.pairs.n_train
    }

    fn losses(&self, model: &OperatorModel, tape: &mut Tape, params: &[Var], batch: &[usize]) -> Result<(Var, Var)> {
        let x = tape.constant(self.pairs.batch(batch, |p| &p.inputs)?)?;
        let field = model.forward_field(tape, params, x, Arc::clone(&self.grid))?;
        let v = node_values(tape, field.coeffs, &self.nodes)?;
        let bd = losses::boundary_band_loss(tape, v, &self.pairs.batch(batch, |p| &p.target)?, self.band)?;
        let res = match self.derivatives {
            NsDerivatives::Spectral => {
                let prev = stack(&batch.iter().map(|&i| &self.prev_nodes[i]).collect::<Vec<_>>())?;
                let prev = tape.constant(prev)?;
                let w = Arc::new(losses::interior_weights(self.nodes.nodes(), 1, self.band)?);
                losses::ns_residual_loss(tape, &[prev, v], &self.lengths, self.dt, self.nu, &self.forcing_nodes, Some(w))?
            }
            NsDerivatives::Spline => {
                let prev = self.pairs.batch(batch, |p| &p.prev)?;
                losses::ns_residual_spline(
                    tape,
                    &prev,
                    &field,
                    &self.lengths,
                    self.dt,
                    self.nu,
                    &self.forcing_samples,
                    self.band,
                )?
            }
        };
        Ok((bd, res))
    }

    fn supervised(&self, model: &OperatorModel, tape: &mut Tape, params: &[Var], batch: &[usize]) -> Result<Var> {
        let x = tape.constant(self.pairs.batch(batch, |p| &p.inputs)?)?;
        let c = model.forward(tape, params, x)?;
        let v = node_values(tape, c, &self.nodes)?;
        losses::l2_loss(tape, v, &self.pairs.batch(batch, |p| &p.target)?)
    }

    fn test_loss(&self, model: &OperatorModel) -> Result<f64> {
        self.pairs.test_l2(model, &self.nodes)
    }

    fn metrics(&self, model: &OperatorModel) -> Result<BTreeMap<String, f64>> {
        Ok(BTreeMap::from([("relative_l2".to_string(), self.pairs.test_relative(model, &self.nodes)?)]))
    }
}
