mod common;

use common::{rand_real, rng};
use opcurl::fft;
use opcurl::spectral::{
    dealias_two_thirds, invert_laplacian, spectral_derivative, stream_rng, Grf1d, Grf2d, WaveGrid,
};
use opcurl::tensor::{Complex64, Tensor};
use std::f64::consts::PI;

fn sampled(n: usize, l: f64, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::new_real(&[n], (0..n).map(|i| f(i as f64 * l / n as f64)).collect()).unwrap()
}

fn max_diff(a: &Tensor, b: &Tensor) -> f64 {
    a.real().unwrap().iter().zip(b.real().unwrap()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn derivative_examples() {
    let l = 3.0;
    let g = WaveGrid::new(&[64], &[l]).unwrap();
    let w = 2.0 * PI / l;
    let u = sampled(64, l, |x| (w * x).sin());
    let du = spectral_derivative(&u, &[1], &g).unwrap();
    assert!(max_diff(&du, &sampled(64, l, |x| w * (w * x).cos())) < 1e-10);
    let d2 = spectral_derivative(&u, &[2], &g).unwrap();
    assert!(max_diff(&d2, &sampled(64, l, |x| -w * w * (w * x).sin())) < 1e-10);
    let g2 = WaveGrid::unit(&[16, 16]).unwrap();
    let c = Tensor::new_real(&[16, 16], vec![2.5; 256]).unwrap();
    let lap = g2.apply_symbol(&c, &g2.laplacian_symbol()).unwrap();
    assert!(lap.real().unwrap().iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn derivative_is_linear_and_shift_commuting() {
    let mut r = rng(1);
    let g = WaveGrid::unit(&[32]).unwrap();
    let a = rand_real(&mut r, &[32]);
    let da = spectral_derivative(&a, &[1], &g).unwrap();
    let mut shifted = a.real().unwrap().to_vec();
    shifted.rotate_right(3);
    let ds = spectral_derivative(&Tensor::new_real(&[32], shifted).unwrap(), &[1], &g).unwrap();
    let mut want = da.real().unwrap().to_vec();
    want.rotate_right(3);
    assert!(max_diff(&ds, &Tensor::new_real(&[32], want).unwrap()) < 1e-12);
    let two = Tensor::new_real(&[32], a.real().unwrap().iter().map(|v| 2.0 * v).collect()).unwrap();
    let d2 = spectral_derivative(&two, &[1], &g).unwrap();
    let want = Tensor::new_real(&[32], da.real().unwrap().iter().map(|v| 2.0 * v).collect()).unwrap();
    assert!(max_diff(&d2, &want) < 1e-12);
}

#[test]
fn dealias_projection_properties() {
    let mut r = rng(2);
    let g = WaveGrid::unit(&[12, 12]).unwrap();
    let x = rand_real(&mut r, &[2, 12, 12]);
    let mut spec = fft::rfft_full(x.real().unwrap(), x.shape(), 2).unwrap();
    let before: f64 = spec.iter().map(|z| z.norm_sqr()).sum();
    dealias_two_thirds(&mut spec, &g).unwrap();
    let once = spec.clone();
    let after: f64 = spec.iter().map(|z| z.norm_sqr()).sum();
    assert!(after <= before);
    dealias_two_thirds(&mut spec, &g).unwrap();
    assert_eq!(once, spec);
    let mut dc = vec![Complex64::new(0.0, 0.0); 144];
    dc[0] = Complex64::new(3.0, 0.0);
    let keep = dc.clone();
    dealias_two_thirds(&mut dc, &g).unwrap();
    assert_eq!(dc, keep);
}

#[test]
fn grf_1d_statistics() {
    let p = Grf1d::default();
    let n = 64;
    let samples = 10_000;
    let mut mean0 = 0.0;
    let mut var_pt = 0.0;
    let (mut e1, mut e2) = (0.0, 0.0);
    for s in 0..samples {
        let mut rng = stream_rng(42, s);
        let u = p.sample(n, &mut rng).unwrap();
        mean0 += u[0];
        var_pt += u[5] * u[5];
        let spec = fft::rfft_full(&u, &[n], 1).unwrap();
        e1 += spec[1].norm_sqr();
        e2 += spec[2].norm_sqr();
    }
    mean0 /= samples as f64;
    var_pt /= samples as f64;
    assert!(mean0.abs() < 3.0 / 100.0, "mean {mean0}");
    assert!((var_pt - 1.0).abs() < 0.05, "pointwise variance {var_pt}");
    let tau2 = p.tau * p.tau;
    // the spectrum decays, so mode 1 carries more variance than mode 2
    let want = (((4.0 * PI).powi(2) + tau2) / ((2.0 * PI).powi(2) + tau2)).powf(p.gamma / 2.0);
    let got = e1 / e2;
    assert!((got / want - 1.0).abs() < 0.05, "ratio {got} vs {want}");
}

#[test]
fn grf_determinism_and_zero_mean() {
    let a = Grf1d::default().sample(128, &mut stream_rng(7, 3)).unwrap();
    let b = Grf1d::default().sample(128, &mut stream_rng(7, 3)).unwrap();
    assert_eq!(a, b);
    let c = Grf1d::default().sample(128, &mut stream_rng(7, 4)).unwrap();
    assert_ne!(a, c);
    let p = Grf2d::default();
    let w1 = p.sample(32, &mut stream_rng(9, 0)).unwrap();
    let w2 = p.sample(32, &mut stream_rng(9, 0)).unwrap();
    assert_eq!(w1, w2);
    assert!((w1.iter().sum::<f64>() / w1.len() as f64).abs() < 1e-15);
}

#[test]
fn grf_2d_isotropy() {
    let p = Grf2d::default();
    let n = 16;
    let (mut a, mut b) = (0.0, 0.0);
    for s in 0..10_000 {
        let w = p.sample(n, &mut stream_rng(5, s)).unwrap();
        let spec = fft::rfft_full(&w, &[n, n], 2).unwrap();
        a += spec[3 * n + 4].norm_sqr();
        b += spec[4 * n + 3].norm_sqr();
    }
    assert!((a / b - 1.0).abs() < 0.05, "ratio {}", a / b);
}

#[test]
fn laplacian_inversion() {
    let n = 32;
    let g = WaveGrid::unit(&[n, n]).unwrap();
    let field = |f: &dyn Fn(f64, f64) -> f64| {
        let mut v = Vec::new();
        for i in 0..n {
            for j in 0..n {
                v.push(f(i as f64 / n as f64, j as f64 / n as f64));
            }
        }
        Tensor::new_real(&[n, n], v).unwrap()
    };
    let s = |x: f64, y: f64| (2.0 * PI * x).sin() * (2.0 * PI * y).sin();
    let omega = field(&|x, y| 8.0 * PI * PI * s(x, y));
    let psi = invert_laplacian(&omega, &g).unwrap();
    assert!(max_diff(&psi, &field(&s)) < 1e-10);
    let zero = invert_laplacian(&Tensor::zeros(&[n, n]), &g).unwrap();
    assert!(zero.real().unwrap().iter().all(|&v| v == 0.0));
    let w = Grf2d::default().sample(n, &mut stream_rng(1, 1)).unwrap();
    let w = Tensor::new_real(&[n, n], w).unwrap();
    let psi = invert_laplacian(&w, &g).unwrap();
    let lap = g.apply_symbol(&psi, &g.laplacian_symbol()).unwrap();
    let neg: Vec<f64> = lap.real().unwrap().iter().map(|v| -v).collect();
    assert!(max_diff(&Tensor::new_real(&[n, n], neg).unwrap(), &w) < 1e-10);
    let biased = Tensor::new_real(&[n, n], vec![1.0; n * n]).unwrap();
    assert!(invert_laplacian(&biased, &g).is_err());
}
