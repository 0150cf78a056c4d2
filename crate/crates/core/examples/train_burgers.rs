//! One-step Burgers forecasting under all four training modes, with the
//! stage-transition diagnostics of the MS run.
//!
//! `cargo run --release --example train_burgers -- [epochs_per_stage] [samples]`
//! Defaults to 10 epochs per stage and 10 samples; 100 and 20 are the desk
//! benchmark.

use opcurl::curriculum::Mode;
use opcurl::datagen::{build_dataset, BurgersData, DataConfig, Pde};
use opcurl::experiment::{train_on, DiagnosticsFile, ExperimentConfig};
use opcurl::files;

fn main() -> opcurl::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map_or(10, |s| s.parse().expect("epochs per stage"));
    let n_samples: usize = args.next().map_or(10, |s| s.parse().expect("samples"));
    let ds = build_dataset(&DataConfig::Burgers(BurgersData { n_samples, ..BurgersData::default() }))?;
    let out = std::env::temp_dir().join("opcurl_train_burgers");
    for mode in Mode::ALL {
        let mut cfg = ExperimentConfig::defaults(Pde::Burgers);
        cfg.mode = mode;
        cfg.schedule.epochs_per_stage = epochs;
        let s = train_on(&cfg, &ds, &out.join(mode.as_str()))?;
        println!(
            "{:12} plateau {:.3e}  final test {:.3e}  relative L2 {:.3e}",
            mode.as_str(),
            s.plateau_mean.unwrap_or(f64::NAN),
            s.final_test.unwrap_or(f64::NAN),
            s.metrics.get("relative_l2").copied().unwrap_or(f64::NAN)
        );
    }
    let diag: DiagnosticsFile = files::read_json(&out.join("MS/seed_0/diagnostics.json"))?;
    for t in &diag.transitions {
        let dom = t.layers.iter().map(|l| l.dominance).fold(0.0, f64::max);
        let r = t.layers.iter().map(|l| l.ratio).fold(f64::INFINITY, f64::min);
        println!("entering stage {} at epoch {}: max dominance {dom:.2e}, min R {r:.1}", t.stage, t.epoch);
    }
    Ok(())
}
