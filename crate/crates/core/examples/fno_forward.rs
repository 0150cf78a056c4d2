//! A spline-headed Fourier operator on a 1D field: parameter count, output
//! shape and the same weights evaluated at two resolutions.

use opcurl::operator::{append_coordinates, Head, OperatorConfig, OperatorModel};
use opcurl::spectral::{stream_rng, Grf1d};
use opcurl::spline::{Boundary, CoeffUnits, HermiteBasis, SplineGrid};
use opcurl::tensor::Tensor;
use std::f64::consts::TAU;
use std::sync::Arc;

fn main() -> opcurl::Result<()> {
    let cfg = OperatorConfig {
        n_blocks: 4,
        modes: vec![16],
        width: 32,
        in_channels: 2,
        out_channels: 3,
        head: Head::Spline,
        spline_order: 2,
        proj_hidden: 64,
    };
    let model = OperatorModel::init(cfg.clone(), 0)?;
    println!("{} parameter groups, {} real scalars", model.params().len(), model.parameter_count());
    let basis = Arc::new(HermiteBasis::new(2)?);
    for n in [256usize, 512] {
        let a = Grf1d::default().sample(n, &mut stream_rng(1, 0))?;
        let x = append_coordinates(&Tensor::new_real(&[1, 1, n], a)?)?;
        let coeffs = model.predict(&x)?;
        let grid = SplineGrid::new(Arc::clone(&basis), &[n], &[TAU / n as f64], Boundary::Periodic, 1, CoeffUnits::Physical)?;
        let u = grid.reconstruct(&coeffs, &[0])?;
        let ux = grid.reconstruct(&coeffs, &[1])?;
        let rms = |t: &Tensor| (t.real().unwrap().iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
        println!("N = {n}: coefficients {:?}, rms u {:.4}, rms u_x {:.4}", coeffs.shape(), rms(&u), rms(&ux));
    }
    Ok(())
}
