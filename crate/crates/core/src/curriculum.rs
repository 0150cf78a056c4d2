//! Staged training with optional optimizer resets.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::losses;
use crate::operator::OperatorModel;
use crate::optim::{AdamConfig, AdamState, LayerDiagnostics};
use crate::spectral::stream_rng;
use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Training loss above which a run counts as diverged.
pub const DIVERGENCE: f64 = 1e6;

const SHUFFLE_STREAM: u64 = 0x5348_5546;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub epochs: usize,
    pub lambda_bd: f64,
    pub lambda_res: f64,
    /// Reset the optimizer when this stage starts (ignored for the first
    /// stage and outside [`Mode::Ms`]).
    #[serde(default = "yes")]
    pub reset: bool,
}

fn yes() -> bool {
    true
}

impl Stage {
    pub fn new(epochs: usize, lambda_bd: f64, lambda_res: f64) -> Self {
        Stage {
            epochs,
            lambda_bd,
            lambda_res,
            reset: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSchedule {
    pub stages: Vec<Stage>,
    /// Learning-rate factor applied every `decay_every` epochs.
    #[serde(default = "default_gamma")]
    pub lr_decay: f64,
    #[serde(default = "default_decay_every")]
    pub decay_every: usize,
}

fn default_gamma() -> f64 {
    0.5
}

fn default_decay_every() -> usize {
    20
}

impl StageSchedule {
    pub fn from_weights(epochs: usize, weights: &[(f64, f64)]) -> Self {
        StageSchedule {
            stages: weights.iter().map(|&(b, r)| Stage::new(epochs, b, r)).collect(),
            lr_decay: default_gamma(),
            decay_every: default_decay_every(),
        }
    }

    /// Named schedules: `burgers` (= `burgers_l1`), `burgers_l2`,
    /// `burgers_l3`, `burgers_l4`, `poisson`, `navier_stokes`.
    pub fn preset(name: &str, epochs: usize) -> Result<Self> {
        let w: &[(f64, f64)] = match name {
            "burgers" | "burgers_l1" => &[(0.8, 0.5), (0.5, 1.0), (0.5, 1.5)],
            "burgers_l2" => &[(1.0, 0.0), (0.5, 0.5), (0.25, 0.75)],
            "burgers_l3" => &[(1.0, 0.0), (1.0, 0.5), (1.0, 1.0)],
            "burgers_l4" => &[(1.0, 0.2), (0.7, 0.8), (0.4, 1.2)],
            "poisson" => &[(1.0, 0.0), (0.8, 0.5), (0.5, 1.0)],
            "navier_stokes" => &[(1.0, 0.0), (1.0, 0.0), (0.8, 0.5), (0.5, 1.0), (0.2, 1.5)],
            _ => return Err(Error::Config(format!("unknown schedule preset {name:?}"))),
        };
        Ok(Self::from_weights(epochs, w))
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::Config("schedule has no stages".into()));
        }
        for (i, s) in self.stages.iter().enumerate() {
            if s.epochs == 0 {
                return Err(Error::Config(format!("stage {i} has no epochs")));
            }
            if !(s.lambda_bd >= 0.0 && s.lambda_res >= 0.0) {
                return Err(Error::Config(format!("stage {i} has a negative weight")));
            }
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) || self.decay_every == 0 {
            return Err(Error::Config("decay factor must lie in (0, 1] with a positive period".into()));
        }
        Ok(())
    }

    pub fn total_epochs(&self) -> usize {
        self.stages.iter().map(|s| s.epochs).sum()
    }

    /// `η₀ γ^⌊e / step⌋` for `e` epochs since the last reset.
    pub fn lr_at(&self, base: f64, epochs_since_reset: usize) -> f64 {
        base * self.lr_decay.powi((epochs_since_reset / self.decay_every) as i32)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Stages with an optimizer reset at each boundary.
    #[serde(rename = "MS")]
    Ms,
    /// Stages with optimizer state and decay carried across boundaries.
    #[serde(rename = "MS_no_reset")]
    MsNoReset,
    /// One stage of the schedule's total length with fixed weights.
    #[serde(rename = "SS")]
    Ss,
    /// One stage of full-field regression against ground truth.
    #[serde(rename = "supervised")]
    Supervised,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Ms, Mode::MsNoReset, Mode::Ss, Mode::Supervised];

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "MS" | "ms" => Ok(Mode::Ms),
            "MS_no_reset" | "ms_no_reset" => Ok(Mode::MsNoReset),
            "SS" | "ss" => Ok(Mode::Ss),
            "supervised" => Ok(Mode::Supervised),
            _ => Err(Error::Config(format!("unknown mode {s:?}"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Ms => "MS",
            Mode::MsNoReset => "MS_no_reset",
            Mode::Ss => "SS",
            Mode::Supervised => "supervised",
        }
    }
}

/// A training problem: batched losses on training samples and a held-out
/// test metric.
pub trait Objective: Sync {
    fn n_train(&self) -> usize;

    /// `(boundary, residual)` losses of the samples in `batch`.
    fn losses(&self, model: &OperatorModel, tape: &mut Tape, params: &[Var], batch: &[usize]) -> Result<(Var, Var)>;

    /// Full-field regression loss of the samples in `batch`.
    fn supervised(&self, model: &OperatorModel, tape: &mut Tape, params: &[Var], batch: &[usize]) -> Result<Var>;

    /// Test metric of the current model.
    fn test_loss(&self, model: &OperatorModel) -> Result<f64>;

    /// Extra named metrics reported in run summaries.
    fn metrics(&self, _model: &OperatorModel) -> Result<BTreeMap<String, f64>> {
        Ok(BTreeMap::new())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub mode: Mode,
    pub seed: u64,
    pub batch_size: usize,
    /// Passes over the training set per epoch.
    pub passes: usize,
    pub adam: AdamConfig,
    /// Weights of the single stage in [`Mode::Ss`].
    pub ss_weights: (f64, f64),
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            mode: Mode::Ms,
            seed: 0,
            batch_size: 4,
            passes: 1,
            adam: AdamConfig::default(),
            ss_weights: (1.0, 1.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub stage: usize,
    pub lambda_bd: f64,
    pub lambda_res: f64,
    pub lr: f64,
    pub loss_bd: f64,
    pub loss_res: f64,
    pub loss_train: f64,
    pub loss_test: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    /// Index of the stage being entered.
    pub stage: usize,
    /// First epoch of that stage.
    pub epoch: usize,
    pub reset: bool,
    pub layers: Vec<LayerDiagnostics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtaRecord {
    pub epoch: usize,
    pub stage: usize,
    pub mean: f64,
    pub layers: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub mode: Mode,
    pub log: Vec<EpochLog>,
    pub transitions: Vec<Transition>,
    pub eta_eff: Vec<EtaRecord>,
    pub layer_names: Vec<String>,
    /// Reason the divergence guard stopped the run.
    pub diverged: Option<String>,
    /// Epochs in the last stage that was run.
    pub final_stage_epochs: usize,
}

impl TrainOutcome {
    /// Mean and sample standard deviation of the test loss over the last
    /// `min(window, final stage length)` epochs.
    pub fn plateau(&self, window: usize) -> Option<(f64, f64)> {
        let n = window.min(self.final_stage_epochs).min(self.log.len());
        if n == 0 {
            return None;
        }
        let xs: Vec<f64> = self.log[self.log.len() - n..].iter().map(|r| r.loss_test).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Some((mean, var.sqrt()))
    }
}

/// The stages actually run for `mode`.
pub fn effective_stages(schedule: &StageSchedule, mode: Mode, ss_weights: (f64, f64)) -> Vec<Stage> {
    let total = schedule.total_epochs();
    match mode {
        Mode::Ms => schedule.stages.clone(),
        Mode::MsNoReset => schedule.stages.iter().map(|s| Stage { reset: false, ..*s }).collect(),
        Mode::Ss => vec![Stage::new(total, ss_weights.0, ss_weights.1)],
        Mode::Supervised => vec![Stage::new(total, 1.0, 0.0)],
    }
}

/// Trains `model` in place. Divergence stops the run early and is reported
/// in [`TrainOutcome::diverged`] rather than as an error.
pub fn run_curriculum(
    model: &mut OperatorModel,
    objective: &dyn Objective,
    schedule: &StageSchedule,
    options: &TrainOptions,
) -> Result<TrainOutcome> {
    schedule.validate()?;
    if options.batch_size == 0 || options.passes == 0 {
        return Err(Error::Config("batch size and passes must be positive".into()));
    }
    let n = objective.n_train();
    if n == 0 {
        return Err(Error::Config("no training samples".into()));
    }
    let stages = effective_stages(schedule, options.mode, options.ss_weights);
    let supervised = options.mode == Mode::Supervised;
    let mut state = AdamState::new(model.params(), options.adam)?;
    let mut rng = stream_rng(options.seed, SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..n).collect();
    let mut out = TrainOutcome {
        mode: options.mode,
        log: Vec::new(),
        transitions: Vec::new(),
        eta_eff: Vec::new(),
        layer_names: state.group_names().to_vec(),
        diverged: None,
        final_stage_epochs: 0,
    };
    let mut epoch = 0;
    let mut since_reset = 0;
    'stages: for (si, stage) in stages.iter().enumerate() {
        let reset = si > 0 && stage.reset && options.mode == Mode::Ms;
        if reset {
            since_reset = 0;
        }
        out.final_stage_epochs = stage.epochs;
        let mut first_step = si > 0;
        for _ in 0..stage.epochs {
            let lr = schedule.lr_at(options.adam.lr, since_reset);
            let (mut sum_bd, mut sum_res, mut batches) = (0.0, 0.0, 0usize);
            for _ in 0..options.passes {
                order.shuffle(&mut rng);
                for batch in order.chunks(options.batch_size) {
                    let mut tape = Tape::new();
                    let params = model.bind(&mut tape)?;
                    let (loss, bd, res) = if supervised {
                        let l = objective.supervised(model, &mut tape, &params, batch)?;
                        (l, tape.value(l).item()?, 0.0)
                    } else {
                        let (b, r) = objective.losses(model, &mut tape, &params, batch)?;
                        let (bv, rv) = (tape.value(b).item()?, tape.value(r).item()?);
                        (losses::combine_var(&mut tape, b, r, stage.lambda_bd, stage.lambda_res)?, bv, rv)
                    };
                    let value = tape.value(loss).item()?;
                    if !value.is_finite() || value > DIVERGENCE {
                        out.diverged = Some(format!("training loss {value:e} at epoch {epoch}"));
                        break 'stages;
                    }
                    let mut grads = tape.backward(loss)?;
                    let g: Vec<_> = params
                        .iter()
                        .zip(model.params())
                        .map(|(&p, m)| grads.take(p).unwrap_or_else(|| Tensor::zeros_like(&m.value)))
                        .collect();
                    if first_step {
                        out.transitions.push(Transition {
                            stage: si,
                            epoch,
                            reset,
                            layers: state.stage_diagnostics(&g)?,
                        });
                        if reset {
                            state.reset();
                        }
                        first_step = false;
                    }
                    state.set_lr(lr);
                    match state.step(model.params_mut(), &g) {
                        Ok(()) => {}
                        Err(Error::NonFinite(what)) => {
                            out.diverged = Some(format!("non-finite {what} at epoch {epoch}"));
                            break 'stages;
                        }
                        Err(e) => return Err(e),
                    }
                    sum_bd += bd;
                    sum_res += res;
                    batches += 1;
                }
            }
            let (loss_bd, loss_res) = (sum_bd / batches as f64, sum_res / batches as f64);
            let loss_train = if supervised {
                loss_bd
            } else {
                losses::combine(loss_bd, loss_res, stage.lambda_bd, stage.lambda_res)?.total
            };
            let loss_test = objective.test_loss(model)?;
            let (mean, layers) = state.effective_lr();
            out.eta_eff.push(EtaRecord {
                epoch,
                stage: si,
                mean,
                layers,
            });
            out.log.push(EpochLog {
                epoch,
                stage: si,
                lambda_bd: stage.lambda_bd,
                lambda_res: stage.lambda_res,
                lr,
                loss_bd,
                loss_res,
                loss_train,
                loss_test,
            });
            epoch += 1;
            since_reset += 1;
            if !loss_train.is_finite() || loss_train > DIVERGENCE || !loss_test.is_finite() {
                out.diverged = Some(format!("loss {loss_train:e} (test {loss_test:e}) at epoch {}", epoch - 1));
                break 'stages;
            }
        }
    }
    Ok(out)
}
