//! Trains a Burgers operator at one resolution and evaluates the frozen
//! weights on data regenerated at finer grids.
//!
//! `cargo run --release --example resolution_sweep -- [epochs_per_stage]`

use opcurl::datagen::{build_dataset, BurgersData, DataConfig, Pde};
use opcurl::experiment::{load_checkpoint, resolution_sweep, sweep_csv, train_on, ExperimentConfig};

fn main() -> opcurl::Result<()> {
    let epochs: usize = std::env::args().nth(1).map_or(10, |s| s.parse().expect("epochs per stage"));
    let data = DataConfig::Burgers(BurgersData { n_samples: 10, resolution: 256, ..BurgersData::default() });
    let ds = build_dataset(&data)?;
    let mut cfg = ExperimentConfig::defaults(Pde::Burgers);
    cfg.schedule.epochs_per_stage = epochs;
    let out = std::env::temp_dir().join("opcurl_resolution_sweep");
    train_on(&cfg, &ds, &out)?;
    let (model, _, ctx) = load_checkpoint(&out.join("seed_0/checkpoint"))?;
    let rows = resolution_sweep(&model, &ctx.data, &ctx.problem, &[256, 512, 1024])?;
    print!("{}", sweep_csv(&rows));
    Ok(())
}
