#![allow(dead_code)]

use opcurl::autodiff::{Tape, Var};
use opcurl::tensor::{Complex64, DType, Tensor};
use opcurl::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_real(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new_real(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

pub fn rand_complex(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    Tensor::new_complex(shape, data).unwrap()
}

/// Maps any tensor variable to a generic real scalar with non-trivial
/// first and second derivatives.
pub fn project(tape: &mut Tape, v: Var, seed: u64) -> Result<Var> {
    let mut r = rng(seed ^ 0x9e37);
    let value = tape.value(v).clone();
    let real = if value.dtype() == DType::Complex128 {
        let w = tape.constant(rand_complex(&mut r, value.shape()))?;
        let p = tape.mul(v, w)?;
        tape.re(p)?
    } else {
        v
    };
    let shape = tape.value(real).shape().to_vec();
    let c = tape.constant(rand_real(&mut r, &shape))?;
    let lin = tape.mul(real, c)?;
    let lin = tape.sum(lin)?;
    let quad = tape.mean_square(real)?;
    tape.add(lin, quad)
}

/// Relative error between an analytic and a numeric derivative. The floor
/// scales with the loss magnitude, which bounds the round-off of the
/// difference quotient.
pub fn rel_err(a: f64, n: f64, loss: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-3 * loss.abs().max(1.0))
}

/// Central finite-difference check of `f` at `inputs`. Returns the worst
/// relative error over the checked scalars. `max_checks` bounds the number
/// of perturbed scalars per input (evenly strided).
pub fn gradcheck<F>(inputs: &[Tensor], f: F, max_checks: usize) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Tensor]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x.clone()).unwrap()).collect();
        let out = f(&mut tape, &vars).unwrap();
        tape.value(out).item().unwrap()
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.leaf(x.clone()).unwrap()).collect();
    let out = f(&mut tape, &vars).unwrap();
    let loss = tape.value(out).item().unwrap();
    let grads = tape.backward(out).unwrap();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for (k, x) in inputs.iter().enumerate() {
        let analytic = grads
            .get(vars[k])
            .map(|g| g.to_flat_reals())
            .unwrap_or_else(|| vec![0.0; x.real_scalar_count()]);
        let flat = x.to_flat_reals();
        let stride = (flat.len() / max_checks.max(1)).max(1);
        for j in (0..flat.len()).step_by(stride) {
            let mut xs = inputs.to_vec();
            let mut p = flat.clone();
            p[j] += h;
            xs[k].set_from_flat_reals(&p).unwrap();
            let up = eval(&xs);
            p[j] -= 2.0 * h;
            xs[k].set_from_flat_reals(&p).unwrap();
            let down = eval(&xs);
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(rel_err(analytic[j], numeric, loss));
        }
    }
    worst
}
