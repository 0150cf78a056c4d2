//! Poisson on the periodic unit square under MS, MS_no_reset and SS.
//!
//! `cargo run --release --example train_poisson -- [epochs_per_stage] [resolution]`
//! Defaults to 20 epochs per stage; 100 is the full desk run.

use opcurl::curriculum::Mode;
use opcurl::datagen::{build_dataset, DataConfig, PoissonData};
use opcurl::experiment::{train_on, ExperimentConfig};
use opcurl::datagen::Pde;

fn main() -> opcurl::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map_or(20, |s| s.parse().expect("epochs per stage"));
    let resolution: usize = args.next().map_or(64, |s| s.parse().expect("resolution"));
    let ds = build_dataset(&DataConfig::Poisson(PoissonData { resolution }))?;
    let out = std::env::temp_dir().join("opcurl_train_poisson");
    for mode in [Mode::Ms, Mode::MsNoReset, Mode::Ss] {
        let mut cfg = ExperimentConfig::defaults(Pde::Poisson);
        cfg.mode = mode;
        cfg.schedule.epochs_per_stage = epochs;
        let s = train_on(&cfg, &ds, &out.join(mode.as_str()))?;
        println!(
            "{:12} interior residual {:.3e}  test L2 {:.3e}",
            mode.as_str(),
            s.metrics.get("interior_residual").copied().unwrap_or(f64::NAN),
            s.final_test.unwrap_or(f64::NAN)
        );
    }
    println!("runs written under {}", out.display());
    Ok(())
}
