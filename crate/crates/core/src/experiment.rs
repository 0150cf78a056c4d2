//! Experiment configuration and the drivers behind the command line:
//! dataset generation, training runs, evaluation, resolution sweeps and
//! schedule ablations.
//!
//! Configs are JSON. A run starts from the per-pde defaults of
//! [`ExperimentConfig::defaults`], deep-merges the config file over them and
//! then the command-line overrides, so flags win over the file and the file
//! wins over the defaults.

use crate::curriculum::{run_curriculum, Mode, Stage, StageSchedule, TrainOptions, TrainOutcome};
use crate::datagen::{build_dataset, BurgersData, DataConfig, Dataset, Manifest, NsData, Pde, PoissonData};
use crate::error::{Error, Result};
use crate::files;
use crate::operator::{CheckpointInfo, Head, OperatorConfig, OperatorModel};
use crate::optim::{AdamConfig, LayerDiagnostics};
use crate::parallel;
use crate::problems::{build_problem, ProblemSettings};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const SUMMARY_VERSION: u32 = 1;

/// Epochs of the final stage that enter the plateau statistics.
pub const PLATEAU_WINDOW: usize = 100;

pub const LOG_HEADER: &str = "epoch,stage,lambda_bd,lambda_res,lr,loss_bd,loss_res,loss_train,loss_test";

/// Recursively merges `patch` into `base`. Objects merge key by key; any
/// other value replaces what was there.
pub fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Sets `a.b.c` in `target`, creating objects along the way.
pub fn set_path(target: &mut Value, path: &str, value: Value) -> Result<()> {
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("malformed key {path:?}")));
    }
    let mut cur = target;
    for k in &keys[..keys.len() - 1] {
        if !cur.is_object() {
            *cur = json!({});
        }
        cur = cur
            .as_object_mut()
            .expect("object")
            .entry(k.to_string())
            .or_insert_with(|| json!({}));
    }
    if !cur.is_object() {
        *cur = json!({});
    }
    cur.as_object_mut().expect("object").insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

/// Parses `key=value`, reading the value as JSON and falling back to a
/// plain string.
pub fn parse_assignment(s: &str) -> Result<(String, Value)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("expected key=value, got {s:?}")))?;
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.trim().to_string(), value))
}

fn from_value<T: DeserializeOwned>(v: Value, what: &str) -> Result<T> {
    serde_json::from_value(v).map_err(|e| Error::Config(format!("{what}: {e}")))
}

pub fn read_json_value(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Loss-weight schedule given by a preset name or explicit stages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    /// Used when `stages` is absent.
    #[serde(default)]
    pub preset: Option<String>,
    pub epochs_per_stage: usize,
    #[serde(default)]
    pub stages: Option<Vec<Stage>>,
    pub lr_decay: f64,
    pub decay_every: usize,
}

impl ScheduleSpec {
    pub fn preset(name: &str, epochs_per_stage: usize) -> Self {
        ScheduleSpec {
            preset: Some(name.to_string()),
            epochs_per_stage,
            stages: None,
            lr_decay: 0.5,
            decay_every: 20,
        }
    }

    pub fn resolve(&self) -> Result<StageSchedule> {
        let mut s = match (&self.stages, &self.preset) {
            (Some(stages), _) => StageSchedule {
                stages: stages.clone(),
                lr_decay: 0.5,
                decay_every: 20,
            },
            (None, Some(name)) => StageSchedule::preset(name, self.epochs_per_stage)?,
            (None, None) => return Err(Error::Config("schedule needs a preset or explicit stages".into())),
        };
        s.lr_decay = self.lr_decay;
        s.decay_every = self.decay_every;
        s.validate()?;
        Ok(s)
    }

    /// Preset name, or `custom`.
    pub fn label(&self) -> String {
        match (&self.stages, &self.preset) {
            (None, Some(name)) => name.clone(),
            _ => "custom".to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub pde: Pde,
    /// Dataset directory.
    #[serde(default)]
    pub data: Option<PathBuf>,
    /// Run directory.
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub mode: Mode,
    pub seeds: Vec<u64>,
    pub model: OperatorConfig,
    pub schedule: ScheduleSpec,
    pub batch_size: usize,
    /// Passes over the training set per epoch.
    pub passes: usize,
    pub adam: AdamConfig,
    /// Loss weights of the single stage in SS mode.
    pub ss_weights: (f64, f64),
    pub problem: ProblemSettings,
}

impl ExperimentConfig {
    /// Desk-scale defaults for `pde`.
    pub fn defaults(pde: Pde) -> Self {
        let spline = |n_blocks, modes: Vec<usize>, width, proj_hidden| {
            let dim = modes.len();
            OperatorConfig {
                n_blocks,
                modes,
                width,
                in_channels: 1 + dim,
                out_channels: 3usize.pow(dim as u32),
                head: Head::Spline,
                spline_order: 2,
                proj_hidden,
            }
        };
        let adam = |lr| AdamConfig { lr, ..AdamConfig::default() };
        let base = |model, preset: &str, batch_size, passes, lr| ExperimentConfig {
            pde,
            data: None,
            out: None,
            mode: Mode::Ms,
            seeds: vec![0],
            model,
            schedule: ScheduleSpec::preset(preset, 100),
            batch_size,
            passes,
            adam: adam(lr),
            ss_weights: (1.0, 1.0),
            problem: ProblemSettings::default(),
        };
        match pde {
            Pde::Poisson => {
                let mut c = base(spline(4, vec![8, 8], 16, 64), "poisson", 1, 10, 2e-3);
                c.model.spline_order = 1;
                c.model.out_channels = 4;
                c
            }
            Pde::Burgers => base(spline(4, vec![32], 64, 128), "burgers", 4, 2, 5e-4),
            Pde::NavierStokes => base(spline(4, vec![8, 8], 16, 64), "navier_stokes", 4, 1, 2e-3),
        }
    }

    /// Defaults, then `file`, then `overrides`. The pde comes from the
    /// overrides, else the file.
    pub fn resolve(file: Option<Value>, overrides: Value) -> Result<Self> {
        let pick = |v: Option<&Value>| v.and_then(|v| v.get("pde")).and_then(|p| p.as_str()).map(str::to_string);
        let pde = pick(Some(&overrides))
            .or_else(|| pick(file.as_ref()))
            .ok_or_else(|| Error::Config("no pde given".into()))?;
        let pde = Pde::parse(&pde)?;
        let mut v = serde_json::to_value(Self::defaults(pde))?;
        if let Some(f) = file {
            merge(&mut v, f);
        }
        merge(&mut v, overrides);
        // canonical spelling, whatever alias was used
        v["pde"] = serde_json::to_value(pde)?;
        let cfg: Self = from_value(v, "experiment config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.adam.validate()?;
        self.schedule.resolve()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        if self.batch_size == 0 || self.passes == 0 {
            return Err(Error::Config("batch size and passes must be positive".into()));
        }
        let dim = match self.pde {
            Pde::Burgers => 1,
            _ => 2,
        };
        if self.model.dim() != dim {
            return Err(Error::Config(format!("{:?} needs {dim} mode counts, got {:?}", self.pde, self.model.modes)));
        }
        if self.model.in_channels != 1 + dim {
            return Err(Error::Config(format!("{:?} models take {} input channels", self.pde, 1 + dim)));
        }
        Ok(())
    }

    /// Checks the dataset against the pde and the model's mode counts.
    pub fn check_manifest(&self, m: &Manifest) -> Result<()> {
        if m.pde != self.pde {
            return Err(Error::Config(format!("dataset holds {:?} data, config expects {:?}", m.pde, self.pde)));
        }
        check_resolution(&self.model, &m.resolution)
    }

    pub fn train_options(&self, seed: u64) -> TrainOptions {
        TrainOptions {
            mode: self.mode,
            seed,
            batch_size: self.batch_size,
            passes: self.passes,
            adam: self.adam,
            ss_weights: self.ss_weights,
        }
    }
}

/// Fails with a config error when some axis is below twice its mode count.
pub fn check_resolution(model: &OperatorConfig, resolution: &[usize]) -> Result<()> {
    let min = model.min_resolution();
    if resolution.len() != min.len() || resolution.iter().zip(&min).any(|(r, m)| r < m) {
        return Err(Error::Config(format!(
            "resolution {resolution:?} is below twice the retained modes {:?}",
            model.modes
        )));
    }
    Ok(())
}

/// Dataset recipe defaults, then `file`, then `overrides`.
pub fn data_config(pde: Option<Pde>, file: Option<Value>, overrides: Value) -> Result<DataConfig> {
    let from_file = file.as_ref().and_then(|f| f.get("pde")).and_then(|p| p.as_str()).map(Pde::parse).transpose()?;
    let pde = pde
        .or(from_file)
        .ok_or_else(|| Error::Config("no pde given".into()))?;
    let base = match pde {
        Pde::Burgers => DataConfig::Burgers(BurgersData::default()),
        Pde::NavierStokes => DataConfig::NavierStokes(NsData::default()),
        Pde::Poisson => DataConfig::Poisson(PoissonData { resolution: 64 }),
    };
    let mut v = serde_json::to_value(base)?;
    if let Some(f) = file {
        merge(&mut v, f);
    }
    merge(&mut v, overrides);
    v["pde"] = serde_json::to_value(pde)?;
    from_value(v, "data config")
}

/// Builds and writes a dataset.
pub fn gen_data(config: &DataConfig, out: &Path) -> Result<Manifest> {
    let ds = build_dataset(config)?;
    ds.write(out)?;
    Ok(ds.manifest)
}

/// Statistics of one seed's run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub epochs: usize,
    pub transitions: usize,
    /// Epochs averaged for the plateau.
    pub plateau_epochs: usize,
    pub plateau_mean: Option<f64>,
    pub plateau_sd: Option<f64>,
    pub final_train: Option<f64>,
    pub final_test: Option<f64>,
    /// Problem metrics of the final model; empty after divergence.
    pub metrics: BTreeMap<String, f64>,
    pub diverged: Option<String>,
}

/// Contents of `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub version: u32,
    pub pde: Pde,
    pub mode: Mode,
    pub schedule: String,
    pub seeds: Vec<SeedSummary>,
    /// Mean over converged seeds of the per-seed plateau means.
    pub plateau_mean: Option<f64>,
    /// Standard deviation of the per-seed plateau means.
    pub plateau_sd: Option<f64>,
    pub final_test: Option<f64>,
    pub metrics: BTreeMap<String, f64>,
    pub diverged_seeds: usize,
}

impl RunSummary {
    pub fn all_diverged(&self) -> bool {
        self.diverged_seeds == self.seeds.len()
    }
}

fn mean_sd(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (Some(mean), Some(sd))
}

/// `diagnostics.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsFile {
    pub layer_names: Vec<String>,
    pub transitions: Vec<crate::curriculum::Transition>,
}

/// `eta_eff.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtaFile {
    pub layer_names: Vec<String>,
    pub records: Vec<crate::curriculum::EtaRecord>,
}

/// Stored next to a checkpoint so it can be evaluated without the run
/// config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointContext {
    pub pde: Pde,
    pub data: DataConfig,
    pub problem: ProblemSettings,
}

pub const CONTEXT_FILE: &str = "context.json";

pub fn log_csv(outcome: &TrainOutcome) -> String {
    let mut s = String::from(LOG_HEADER);
    s.push('\n');
    for r in &outcome.log {
        writeln!(
            s,
            "{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            r.epoch, r.stage, r.lambda_bd, r.lambda_res, r.lr, r.loss_bd, r.loss_res, r.loss_train, r.loss_test
        )
        .expect("string write");
    }
    s
}

fn train_seed(cfg: &ExperimentConfig, ds: &Dataset, schedule: &StageSchedule, seed: u64, dir: &Path) -> Result<SeedSummary> {
    let mut model = OperatorModel::init(cfg.model.clone(), seed)?;
    let problem = build_problem(ds, &model, &cfg.problem)?;
    let outcome = run_curriculum(&mut model, problem.as_ref(), schedule, &cfg.train_options(seed))?;
    files::create_dir(dir)?;
    files::write_atomic(&dir.join("log.csv"), log_csv(&outcome).as_bytes())?;
    files::write_json(
        &dir.join("diagnostics.json"),
        &DiagnosticsFile {
            layer_names: outcome.layer_names.clone(),
            transitions: outcome.transitions.clone(),
        },
    )?;
    files::write_json(
        &dir.join("eta_eff.json"),
        &EtaFile {
            layer_names: outcome.layer_names.clone(),
            records: outcome.eta_eff.clone(),
        },
    )?;
    let last = outcome.log.last();
    let ckpt = dir.join("checkpoint");
    model.save(
        &ckpt,
        &CheckpointInfo {
            seed,
            stage: last.map_or(0, |r| r.stage),
            epoch: last.map_or(0, |r| r.epoch),
        },
    )?;
    files::write_json(
        &ckpt.join(CONTEXT_FILE),
        &CheckpointContext {
            pde: cfg.pde,
            data: ds.manifest.config.clone(),
            problem: cfg.problem.clone(),
        },
    )?;
    let metrics = if outcome.diverged.is_none() {
        problem.metrics(&model)?
    } else {
        BTreeMap::new()
    };
    let plateau = outcome.plateau(PLATEAU_WINDOW);
    let summary = SeedSummary {
        seed,
        epochs: outcome.log.len(),
        transitions: outcome.transitions.len(),
        plateau_epochs: PLATEAU_WINDOW.min(outcome.final_stage_epochs).min(outcome.log.len()),
        plateau_mean: plateau.map(|p| p.0),
        plateau_sd: plateau.map(|p| p.1),
        final_train: last.map(|r| r.loss_train),
        final_test: last.map(|r| r.loss_test),
        metrics,
        diverged: outcome.diverged.clone(),
    };
    files::write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Trains every seed of `cfg` into `<out>/seed_<s>/` and writes the run
/// summary. Diverged seeds are recorded, not raised; see
/// [`RunSummary::all_diverged`].
pub fn train(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let data = cfg.data.as_ref().ok_or_else(|| Error::Config("no dataset path given".into()))?;
    let out = cfg.out.as_ref().ok_or_else(|| Error::Config("no output directory given".into()))?;
    let ds = Dataset::read(data)?;
    train_on(cfg, &ds, out)
}

/// [`train`] with the dataset already in memory.
pub fn train_on(cfg: &ExperimentConfig, ds: &Dataset, out: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    cfg.check_manifest(&ds.manifest)?;
    let schedule = cfg.schedule.resolve()?;
    files::create_dir(out)?;
    files::write_json(&out.join("config.json"), cfg)?;
    let results = parallel::par_map(cfg.seeds.clone(), |seed| {
        train_seed(cfg, ds, &schedule, seed, &out.join(format!("seed_{seed}")))
    });
    let seeds = results.into_iter().collect::<Result<Vec<_>>>()?;
    let ok: Vec<&SeedSummary> = seeds.iter().filter(|s| s.diverged.is_none()).collect();
    let plateaus: Vec<f64> = ok.iter().filter_map(|s| s.plateau_mean).collect();
    let (plateau_mean, plateau_sd) = mean_sd(&plateaus);
    let finals: Vec<f64> = ok.iter().filter_map(|s| s.final_test).collect();
    let mut metrics = BTreeMap::new();
    if let Some(first) = ok.first() {
        for key in first.metrics.keys() {
            let xs: Vec<f64> = ok.iter().filter_map(|s| s.metrics.get(key).copied()).collect();
            if let (Some(m), _) = mean_sd(&xs) {
                metrics.insert(key.clone(), m);
            }
        }
    }
    let summary = RunSummary {
        version: SUMMARY_VERSION,
        pde: cfg.pde,
        mode: cfg.mode,
        schedule: cfg.schedule.label(),
        diverged_seeds: seeds.len() - ok.len(),
        plateau_mean,
        plateau_sd,
        final_test: mean_sd(&finals).0,
        metrics,
        seeds,
    };
    files::write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub pde: Pde,
    pub resolution: Vec<usize>,
    /// The training-time test metric.
    pub test_loss: f64,
    pub metrics: BTreeMap<String, f64>,
}

/// Loads a checkpoint with its stored context.
pub fn load_checkpoint(dir: &Path) -> Result<(OperatorModel, CheckpointInfo, CheckpointContext)> {
    let (model, info) = OperatorModel::load(dir)?;
    let ctx: CheckpointContext = files::read_json(&dir.join(CONTEXT_FILE))?;
    Ok((model, info, ctx))
}

/// Evaluates a model on the held-out part of `ds`.
pub fn evaluate(model: &OperatorModel, ds: &Dataset, settings: &ProblemSettings) -> Result<EvalReport> {
    check_resolution(model.config(), &ds.manifest.resolution)?;
    let problem = build_problem(ds, model, settings)?;
    Ok(EvalReport {
        pde: ds.manifest.pde,
        resolution: ds.manifest.resolution.clone(),
        test_loss: problem.test_loss(model)?,
        metrics: problem.metrics(model)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub resolution: usize,
    pub relative_l2: f64,
    pub test_loss: f64,
}

/// The checkpoint's dataset recipe regenerated at `resolution`.
pub fn at_resolution(config: &DataConfig, resolution: usize) -> DataConfig {
    let mut c = config.clone();
    match &mut c {
        DataConfig::Burgers(b) => b.resolution = resolution,
        DataConfig::NavierStokes(n) => n.resolution = resolution,
        DataConfig::Poisson(p) => p.resolution = resolution,
    }
    c
}

/// Evaluates a frozen model on data regenerated at each resolution.
/// Every resolution is checked before any data is generated.
pub fn resolution_sweep(
    model: &OperatorModel,
    data: &DataConfig,
    settings: &ProblemSettings,
    resolutions: &[usize],
) -> Result<Vec<SweepRow>> {
    if resolutions.is_empty() {
        return Err(Error::Config("no resolutions given".into()));
    }
    for &r in resolutions {
        check_resolution(model.config(), &vec![r; model.config().dim()])?;
    }
    resolutions
        .iter()
        .map(|&r| {
            let ds = build_dataset(&at_resolution(data, r))?;
            let report = evaluate(model, &ds, settings)?;
            let relative_l2 = *report
                .metrics
                .get("relative_l2")
                .ok_or_else(|| Error::Invalid("problem reports no relative error".into()))?;
            Ok(SweepRow {
                resolution: r,
                relative_l2,
                test_loss: report.test_loss,
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("resolution,relative_l2,test_loss\n");
    for r in rows {
        writeln!(s, "{},{:e},{:e}", r.resolution, r.relative_l2, r.test_loss).expect("string write");
    }
    s
}

/// One schedule of an ablation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub name: String,
    /// Merged over the base config's schedule.
    pub schedule: Value,
}

/// Parses a variants file: either a list of variants or
/// `{"variants": [...]}`.
pub fn parse_variants(v: Value) -> Result<Vec<Variant>> {
    let list = match v {
        Value::Object(mut o) if o.contains_key("variants") => o.remove("variants").expect("present"),
        other => other,
    };
    let variants: Vec<Variant> = from_value(list, "variants")?;
    if variants.is_empty() {
        return Err(Error::Config("no ablation variants".into()));
    }
    Ok(variants)
}

/// Variants for named presets.
pub fn preset_variants(names: &[&str]) -> Vec<Variant> {
    names
        .iter()
        .map(|n| Variant {
            name: n.to_string(),
            schedule: json!({ "preset": n, "stages": null }),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub mode: Mode,
    pub plateau_mean: Option<f64>,
    pub final_test: Option<f64>,
    pub diverged_seeds: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub version: u32,
    pub rows: Vec<AblationRow>,
}

impl AblationSummary {
    /// Final test loss of `mode` under `variant`.
    pub fn final_test(&self, variant: &str, mode: Mode) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.variant == variant && r.mode == mode)
            .and_then(|r| r.final_test)
    }
}

/// Runs MS and MS_no_reset for every variant into
/// `<out>/<variant>/<mode>/`.
pub fn ablate_on(base: &ExperimentConfig, ds: &Dataset, variants: &[Variant], out: &Path) -> Result<AblationSummary> {
    let mut arms = Vec::new();
    for v in variants {
        let mut schedule = serde_json::to_value(&base.schedule)?;
        merge(&mut schedule, v.schedule.clone());
        for mode in [Mode::Ms, Mode::MsNoReset] {
            let mut cfg = base.clone();
            cfg.schedule = from_value(schedule.clone(), &format!("schedule of variant {}", v.name))?;
            cfg.mode = mode;
            cfg.validate()?;
            arms.push((v.name.clone(), cfg));
        }
    }
    files::create_dir(out)?;
    let results = parallel::par_map(arms, |(name, cfg)| {
        let dir = out.join(&name).join(cfg.mode.as_str());
        train_on(&cfg, ds, &dir).map(|s| AblationRow {
            variant: name,
            mode: cfg.mode,
            plateau_mean: s.plateau_mean,
            final_test: s.final_test,
            diverged_seeds: s.diverged_seeds,
        })
    });
    let summary = AblationSummary {
        version: SUMMARY_VERSION,
        rows: results.into_iter().collect::<Result<_>>()?,
    };
    let mut csv = String::from("variant,mode,plateau_mean,final_test,diverged_seeds\n");
    let fmt = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v:e}"));
    for r in &summary.rows {
        writeln!(
            csv,
            "{},{},{},{},{}",
            r.variant,
            r.mode.as_str(),
            fmt(r.plateau_mean),
            fmt(r.final_test),
            r.diverged_seeds
        )
        .expect("string write");
    }
    files::write_atomic(&out.join("ablation.csv"), csv.as_bytes())?;
    files::write_json(&out.join("ablation.json"), &summary)?;
    Ok(summary)
}

/// Parsed `log.csv`.
pub fn read_log(path: &Path) -> Result<Vec<crate::curriculum::EpochLog>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(LOG_HEADER) {
        return Err(Error::Invalid(format!("{} does not start with the log header", path.display())));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let bad = || Error::Invalid(format!("malformed log row {l:?}"));
            if f.len() != 9 {
                return Err(bad());
            }
            let int = |s: &str| s.parse::<usize>().map_err(|_| bad());
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            Ok(crate::curriculum::EpochLog {
                epoch: int(f[0])?,
                stage: int(f[1])?,
                lambda_bd: num(f[2])?,
                lambda_res: num(f[3])?,
                lr: num(f[4])?,
                loss_bd: num(f[5])?,
                loss_res: num(f[6])?,
                loss_train: num(f[7])?,
                loss_test: num(f[8])?,
            })
        })
        .collect()
}

/// All layer diagnostics of a run, flattened.
pub fn transition_points(d: &DiagnosticsFile) -> Vec<(usize, &LayerDiagnostics)> {
    d.transitions
        .iter()
        .flat_map(|t| t.layers.iter().map(move |l| (t.stage, l)))
        .collect()
}
