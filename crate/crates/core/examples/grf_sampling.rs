//! Gaussian random field initial conditions: empirical mode variances
//! against the covariance, and resolution consistency of a random stream.

use opcurl::fft::fft_trailing;
use opcurl::spectral::{stream_rng, Grf1d, Grf2d};
use opcurl::tensor::Complex64;

fn main() -> opcurl::Result<()> {
    let grf = Grf1d::default();
    let n = 256;
    let draws = 2000;
    let mut var = vec![0.0; 4];
    for s in 0..draws {
        let u = grf.sample(n, &mut stream_rng(11, s))?;
        let mut spec: Vec<Complex64> = u.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft_trailing(&mut spec, &[n], 1, false)?;
        for (k, v) in var.iter_mut().enumerate() {
            *v += spec[k + 1].norm_sqr() / draws as f64;
        }
    }
    println!("1D field tau = {}, gamma = {}", grf.tau, grf.gamma);
    for k in 1..4 {
        let want = grf.mode_std(n, 1)?.powi(2) / grf.mode_std(n, k + 1)?.powi(2);
        println!("var(k=1)/var(k={}) = {:.3} (covariance {:.3})", k + 1, var[0] / var[k], want);
    }

    let coarse = grf.sample(128, &mut stream_rng(11, 0))?;
    let fine = grf.sample(512, &mut stream_rng(11, 0))?;
    let gap = coarse
        .iter()
        .enumerate()
        .map(|(i, v)| (v - fine[4 * i]).abs())
        .fold(0.0, f64::max);
    println!("same stream at 128 and 512 points: max nodal gap {gap:.2e}");

    let w = Grf2d::default().sample(64, &mut stream_rng(3, 0))?;
    let rms = (w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64).sqrt();
    println!("2D vorticity sample on 64²: rms {rms:.3}");
    Ok(())
}
