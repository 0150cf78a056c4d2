//! The `opcurl` command line.
//!
//! Exit codes: 0 success, 2 config or usage error, 3 data generation
//! failure, 4 divergence of every seed, 1 anything else.

use crate::curriculum::Mode;
use crate::datagen::{Dataset, Pde};
use crate::error::{Error, Result};
use crate::experiment::{self, ExperimentConfig};
use crate::files;
use crate::plot;
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use std::path::PathBuf;
use std::time::Instant;

#[derive(Parser, Debug)]
#[command(name = "opcurl", version, about = "Operator learning with staged physics-informed curricula")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a reference dataset.
    GenData(GenDataArgs),
    /// Train one configuration over its seeds.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Evaluate a checkpoint on data regenerated at other resolutions.
    ResolutionSweep(SweepArgs),
    /// Run MS and MS_no_reset for several schedules.
    Ablate(AblateArgs),
    /// Render SVG figures for every run below a directory.
    Plot(PlotArgs),
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    /// JSON dataset recipe.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub pde: Option<String>,
    /// Number of samples.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Extra `key.path=value` overrides.
    #[arg(long = "set")]
    pub set: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Flags shared by `train` and `ablate`.
#[derive(Args, Debug)]
pub struct RunFlags {
    /// JSON experiment config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub pde: Option<String>,
    /// Dataset directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub epochs_per_stage: Option<usize>,
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub passes: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Extra `key.path=value` overrides, applied last.
    #[arg(long = "set")]
    pub set: Vec<String>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunFlags,
    /// MS, MS_no_reset, SS or supervised.
    #[arg(long)]
    pub mode: Option<String>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset directory; defaults to regenerating the checkpoint's recipe.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Write the report here as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Comma-separated resolutions.
    #[arg(long, value_delimiter = ',', required = true)]
    pub resolutions: Vec<usize>,
    /// CSV output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[command(flatten)]
    pub run: RunFlags,
    /// JSON list of `{name, schedule}` variants.
    #[arg(long)]
    pub variants: Option<PathBuf>,
    /// Comma-separated preset names, used when no variants file is given.
    #[arg(long, value_delimiter = ',')]
    pub presets: Option<Vec<String>>,
}

#[derive(Args, Debug)]
pub struct PlotArgs {
    pub dir: PathBuf,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Io { .. } | Error::Json(_) => 2,
        Error::BlowUp(_) => 3,
        Error::Diverged(_) => 4,
        _ => 1,
    }
}

fn overrides(set: &[String], mut base: Value) -> Result<Value> {
    for s in set {
        let (k, v) = experiment::parse_assignment(s)?;
        experiment::set_path(&mut base, &k, v)?;
    }
    Ok(base)
}

fn run_config(flags: &RunFlags, mode: Option<&str>) -> Result<ExperimentConfig> {
    let file = flags.config.as_deref().map(experiment::read_json_value).transpose()?;
    let mut v = json!({});
    if let Some(p) = &flags.pde {
        v["pde"] = json!(p);
    }
    if let Some(m) = mode {
        v["mode"] = serde_json::to_value(Mode::parse(m)?)?;
    }
    if let Some(d) = &flags.data {
        v["data"] = json!(d);
    }
    if let Some(o) = &flags.out {
        v["out"] = json!(o);
    }
    if let Some(s) = &flags.seeds {
        v["seeds"] = json!(s);
    }
    if let Some(e) = flags.epochs_per_stage {
        v["schedule"]["epochs_per_stage"] = json!(e);
    }
    if let Some(p) = &flags.preset {
        v["schedule"]["preset"] = json!(p);
        v["schedule"]["stages"] = Value::Null;
    }
    if let Some(b) = flags.batch_size {
        v["batch_size"] = json!(b);
    }
    if let Some(p) = flags.passes {
        v["passes"] = json!(p);
    }
    if let Some(lr) = flags.lr {
        v["adam"]["lr"] = json!(lr);
    }
    let v = overrides(&flags.set, v)?;
    ExperimentConfig::resolve(file, v)
}

fn fmt(x: Option<f64>) -> String {
    x.map_or("n/a".into(), |v| format!("{v:.4e}"))
}

fn gen_data(a: &GenDataArgs) -> Result<()> {
    let out = a
        .out
        .as_ref()
        .ok_or_else(|| Error::Config("gen-data needs --out <dir>".into()))?;
    let file = a.config.as_deref().map(experiment::read_json_value).transpose()?;
    let pde = a.pde.as_deref().map(Pde::parse).transpose()?;
    let mut v = json!({});
    if let Some(n) = a.n {
        v["n_samples"] = json!(n);
    }
    if let Some(r) = a.resolution {
        v["resolution"] = json!(r);
    }
    if let Some(s) = a.seed {
        v["seed"] = json!(s);
    }
    let v = overrides(&a.set, v)?;
    let cfg = experiment::data_config(pde, file, v)?;
    let m = experiment::gen_data(&cfg, out)?;
    println!(
        "{:?}: {} samples at {:?}, {} snapshots, fields {}, {} skipped -> {}",
        m.pde,
        m.n_samples,
        m.resolution,
        m.times.len(),
        m.fields.iter().map(|f| f.name.as_str()).collect::<Vec<_>>().join(","),
        m.skipped.len(),
        out.display()
    );
    Ok(())
}

fn train(a: &TrainArgs) -> Result<()> {
    let cfg = run_config(&a.run, a.mode.as_deref())?;
    let start = Instant::now();
    let s = experiment::train(&cfg)?;
    for seed in &s.seeds {
        println!(
            "seed {}: {} epochs, plateau {} ± {}, final test {}{}",
            seed.seed,
            seed.epochs,
            fmt(seed.plateau_mean),
            fmt(seed.plateau_sd),
            fmt(seed.final_test),
            seed.diverged.as_ref().map_or(String::new(), |d| format!(", diverged: {d}"))
        );
    }
    println!(
        "{} {:?}: plateau {} over {} seeds in {:.1} s",
        s.mode.as_str(),
        s.pde,
        fmt(s.plateau_mean),
        s.seeds.len() - s.diverged_seeds,
        start.elapsed().as_secs_f64()
    );
    if s.all_diverged() {
        return Err(Error::Diverged(format!("all {} seeds diverged", s.seeds.len())));
    }
    Ok(())
}

fn eval(a: &EvalArgs) -> Result<()> {
    let (model, _, ctx) = experiment::load_checkpoint(&a.checkpoint)?;
    let ds = match &a.data {
        Some(d) => Dataset::read(d)?,
        None => crate::datagen::build_dataset(&ctx.data)?,
    };
    let report = experiment::evaluate(&model, &ds, &ctx.problem)?;
    let text = serde_json::to_string_pretty(&report)?;
    println!("{text}");
    if let Some(out) = &a.out {
        files::write_json(out, &report)?;
    }
    Ok(())
}

fn sweep(a: &SweepArgs) -> Result<()> {
    let (model, _, ctx) = experiment::load_checkpoint(&a.checkpoint)?;
    let rows = experiment::resolution_sweep(&model, &ctx.data, &ctx.problem, &a.resolutions)?;
    let csv = experiment::sweep_csv(&rows);
    print!("{csv}");
    if let Some(out) = &a.out {
        files::write_atomic(out, csv.as_bytes())?;
    }
    Ok(())
}

fn ablate(a: &AblateArgs) -> Result<()> {
    let base = run_config(&a.run, None)?;
    let variants = match (&a.variants, &a.presets) {
        (Some(p), _) => experiment::parse_variants(experiment::read_json_value(p)?)?,
        (None, Some(names)) => experiment::preset_variants(&names.iter().map(String::as_str).collect::<Vec<_>>()),
        (None, None) => return Err(Error::Config("ablate needs --variants or --presets".into())),
    };
    let data = base.data.as_ref().ok_or_else(|| Error::Config("no dataset path given".into()))?;
    let out = base.out.as_ref().ok_or_else(|| Error::Config("no output directory given".into()))?;
    let ds = Dataset::read(data)?;
    let s = experiment::ablate_on(&base, &ds, &variants, out)?;
    println!("variant,mode,plateau_mean,final_test");
    for r in &s.rows {
        println!("{},{},{},{}", r.variant, r.mode.as_str(), fmt(r.plateau_mean), fmt(r.final_test));
    }
    Ok(())
}

fn plot(a: &PlotArgs) -> Result<()> {
    for r in plot::plot_tree(&a.dir)? {
        for f in &r.files {
            println!("{}", f.display());
        }
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::ResolutionSweep(a) => sweep(a),
        Command::Ablate(a) => ablate(a),
        Command::Plot(a) => plot(a),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
