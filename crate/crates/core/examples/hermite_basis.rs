//! Hermite basis values at the nodes and spline differentiation of sin(x)
//! on refined periodic grids.

use opcurl::spline::{Boundary, CoeffUnits, HermiteBasis, SplineGrid};
use std::f64::consts::PI;
use std::sync::Arc;

fn main() -> opcurl::Result<()> {
    let basis = HermiteBasis::new(2)?;
    println!("order 2, {} channels", basis.channels());
    for l in 0..basis.channels() {
        let at0: Vec<String> = (0..3).map(|d| format!("{:+.3}", basis.eval(l, d, 0.0))).collect();
        let ends: Vec<String> = (0..3)
            .map(|d| format!("{:+.1e}", basis.eval(l, d, 1.0).abs().max(basis.eval(l, d, -1.0).abs())))
            .collect();
        println!("h_{l}: derivatives at 0 [{}], largest at ±1 [{}]", at0.join(" "), ends.join(" "));
    }

    let basis = Arc::new(basis);
    let mut prev: Option<f64> = None;
    for n in [32usize, 64, 128, 256] {
        let h = 2.0 * PI / n as f64;
        let grid = SplineGrid::new(Arc::clone(&basis), &[n], &[h], Boundary::Periodic, 4, CoeffUnits::Physical)?;
        let c = grid.coeffs_from_fn(|x, d| [x[0].sin(), x[0].cos(), -x[0].sin(), -x[0].cos()][d[0] % 4])?;
        let du = grid.reconstruct(&c, &[1])?;
        let err = du
            .real()?
            .iter()
            .enumerate()
            .map(|(p, v)| (v - (p as f64 * h / 4.0).cos()).abs())
            .fold(0.0, f64::max);
        match prev {
            Some(e) => println!("N = {n:4}  max |u' - cos| = {err:.3e}  order {:.2}", (e / err).log2()),
            None => println!("N = {n:4}  max |u' - cos| = {err:.3e}"),
        }
        prev = Some(err);
    }
    Ok(())
}
