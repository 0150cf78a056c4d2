//! Multi-axis FFT helpers over row-major complex buffers, backed by `rustfft`.
//!
//! Transforms are unnormalized in both directions; callers apply `1/N`.

use crate::error::{Error, Result};
use crate::tensor::Complex64;
use rustfft::{FftDirection, FftPlanner};
use std::cell::RefCell;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
    static SCRATCH: RefCell<(Vec<Complex64>, Vec<Complex64>)> = const { RefCell::new((Vec::new(), Vec::new())) };
}

/// Transforms `data` (row-major with `shape`) in place along each trailing
/// axis in `shape[shape.len() - ndim..]`.
pub fn fft_trailing(data: &mut [Complex64], shape: &[usize], ndim: usize, inverse: bool) -> Result<()> {
    if ndim == 0 || ndim > shape.len() {
        return Err(Error::Invalid(format!(
            "cannot transform {ndim} trailing axes of shape {shape:?}"
        )));
    }
    for axis in shape.len() - ndim..shape.len() {
        fft_axis(data, shape, axis, inverse)?;
    }
    Ok(())
}

/// Transforms `data` in place along one axis.
pub fn fft_axis(data: &mut [Complex64], shape: &[usize], axis: usize, inverse: bool) -> Result<()> {
    let len = shape[axis];
    if len == 0 {
        return Err(Error::Invalid("zero-length FFT axis".into()));
    }
    if len == 1 {
        return Ok(());
    }
    let stride: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let direction = if inverse {
        FftDirection::Inverse
    } else {
        FftDirection::Forward
    };
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft(len, direction));
    SCRATCH.with(|buffers| {
        let (scratch, line) = &mut *buffers.borrow_mut();
        scratch.resize(plan.get_inplace_scratch_len(), Complex64::new(0.0, 0.0));
        if stride == 1 {
            plan.process_with_scratch(data, scratch);
            return;
        }
        line.resize(len, Complex64::new(0.0, 0.0));
        for o in 0..outer {
            let base = o * len * stride;
            for j in 0..stride {
                for (k, slot) in line.iter_mut().enumerate() {
                    *slot = data[base + k * stride + j];
                }
                plan.process_with_scratch(line, scratch);
                for (k, value) in line.iter().enumerate() {
                    data[base + k * stride + j] = *value;
                }
            }
        }
    });
    Ok(())
}

/// Product of the trailing `ndim` extents.
pub fn transform_size(shape: &[usize], ndim: usize) -> usize {
    shape[shape.len() - ndim..].iter().product()
}

/// Like [`transform_size`] but rejects `ndim` outside `1..=shape.len()`.
pub fn transform_size_checked(shape: &[usize], ndim: usize) -> Result<usize> {
    if ndim == 0 || ndim > shape.len() {
        return Err(Error::Invalid(format!(
            "cannot transform {ndim} trailing axes of shape {shape:?}"
        )));
    }
    Ok(transform_size(shape, ndim))
}

/// Forward FFT of a real buffer over the trailing axes.
pub fn rfft_full(data: &[f64], shape: &[usize], ndim: usize) -> Result<Vec<Complex64>> {
    let mut buf: Vec<Complex64> = data.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft_trailing(&mut buf, shape, ndim, false)?;
    Ok(buf)
}

/// Normalized inverse FFT over the trailing axes.
pub fn ifft_normalized(mut spec: Vec<Complex64>, shape: &[usize], ndim: usize) -> Result<Vec<Complex64>> {
    fft_trailing(&mut spec, shape, ndim, true)?;
    let scale = 1.0 / transform_size(shape, ndim) as f64;
    spec.iter_mut().for_each(|z| *z *= scale);
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(j, v)| {
                        let ang = -2.0 * std::f64::consts::PI * (j * k) as f64 / n as f64;
                        v * Complex64::new(ang.cos(), ang.sin())
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn matches_naive_dft_1d() {
        let x: Vec<Complex64> = (0..12)
            .map(|i| Complex64::new((i as f64 * 0.7).sin(), (i as f64 * 0.3).cos()))
            .collect();
        let mut y = x.clone();
        fft_trailing(&mut y, &[12], 1, false).unwrap();
        for (a, b) in y.iter().zip(naive_dft(&x)) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn second_axis_matches_naive_on_columns() {
        let shape = [3, 4, 5];
        let x: Vec<Complex64> = (0..60)
            .map(|i| Complex64::new((i as f64 * 1.3).sin(), 0.0))
            .collect();
        let mut y = x.clone();
        fft_axis(&mut y, &shape, 1, false).unwrap();
        for o in 0..3 {
            for j in 0..5 {
                let col: Vec<Complex64> = (0..4).map(|k| x[o * 20 + k * 5 + j]).collect();
                let want = naive_dft(&col);
                for k in 0..4 {
                    assert!((y[o * 20 + k * 5 + j] - want[k]).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_axis_count() {
        let mut buf = vec![Complex64::new(0.0, 0.0); 4];
        assert!(fft_trailing(&mut buf, &[4], 2, false).is_err());
    }
}
