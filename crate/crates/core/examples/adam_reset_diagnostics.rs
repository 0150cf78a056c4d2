//! What a reset does to Adam: the first step from zeroed moments, and the
//! dominance and amplification diagnostics for a settled state.

use opcurl::operator::Param;
use opcurl::optim::{AdamConfig, AdamState};
use opcurl::tensor::Tensor;

fn main() -> opcurl::Result<()> {
    let cfg = AdamConfig {
        lr: 1e-2,
        bias_correction: false,
        eps: 1e-12,
        ..AdamConfig::default()
    };
    let mut params = vec![Param { name: "w".into(), value: Tensor::zeros(&[4]) }];
    let mut state = AdamState::new(&params, cfg)?;
    let g = Tensor::new_real(&[4], vec![7.0, -3.0, 12.0, -20.0])?;
    state.step(&mut params, &[g.clone()])?;
    println!("closed form eta(1-b1)/sqrt(1-b2) = {:.6e}", cfg.reset_step());
    println!("first step from zero state: {:?}", params[0].value.real()?);

    // a long run with small gradients leaves a small second moment
    let small = Tensor::new_real(&[4], vec![1e-3, -2e-3, 1.5e-3, -1e-3])?;
    for _ in 0..2000 {
        state.step(&mut params, &[small.clone()])?;
    }
    for (label, g_new) in [("similar gradient", small.clone()), ("new objective", g)] {
        let d = &state.stage_diagnostics(&[g_new])?[0];
        println!("{label}: dominance {:.3e}, R {:.3}", d.dominance, d.ratio);
    }
    let (before, _) = state.effective_lr();
    state.reset();
    state.step(&mut params, &[small])?;
    let (after, _) = state.effective_lr();
    println!("mean effective rate before reset {before:.3e}, after one post-reset step {after:.3e}");
    Ok(())
}
