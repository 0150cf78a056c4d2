//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Tape`] records every operation applied to its variables. Calling
//! [`Tape::backward`] on a real scalar sweeps the tape in reverse creation
//! order and accumulates gradients across fan-out by addition.
//!
//! Complex gradients follow the convention `G = ∂L/∂Re(z) + i ∂L/∂Im(z)` for a
//! real loss `L`. Under this convention the backward rule of a
//! complex-linear map `A` is its conjugate adjoint `Aᴴ`.
//!
//! ```
//! use opcurl::autodiff::Tape;
//! use opcurl::tensor::Tensor;
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(Tensor::new_real(&[2], vec![1.0, 2.0]).unwrap()).unwrap();
//! let sq = tape.mul(x, x).unwrap();
//! let loss = tape.sum(sq).unwrap();
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get(x).unwrap().real().unwrap(), &[2.0, 4.0]);
//! ```

use crate::error::{Error, Result};
use crate::fft;
use crate::tensor::{numel, Complex64, DType, Storage, Tensor};
use nalgebra::{DMatrixView, DMatrixViewMut};
use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::sync::Arc;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// Backward rule: receives the gradient of the node's output and the parent
/// values, returns one optional gradient per parent.
pub type BackwardFn = Box<dyn Fn(&Tensor, &[&Tensor]) -> Result<Vec<Option<Tensor>>>>;

struct Node {
    value: Tensor,
    parents: Vec<usize>,
    backward: Option<BackwardFn>,
    requires_grad: bool,
}

/// Append-only operation record. One tape per training step.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], keyed by variable.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

#[derive(Clone, Copy, Debug)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
}

trait Elem:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self> + AddAssign + 'static
{
    const ZERO: Self;
    fn conj_(self) -> Self;
    fn slice(t: &Tensor) -> Result<&[Self]>;
    fn wrap(shape: Vec<usize>, data: Vec<Self>) -> Tensor;
}

impl Elem for f64 {
    const ZERO: Self = 0.0;
    fn conj_(self) -> Self {
        self
    }
    fn slice(t: &Tensor) -> Result<&[Self]> {
        t.real()
    }
    fn wrap(shape: Vec<usize>, data: Vec<Self>) -> Tensor {
        Tensor::real_unchecked(shape, data)
    }
}

impl Elem for Complex64 {
    const ZERO: Self = Complex64 { re: 0.0, im: 0.0 };
    fn conj_(self) -> Self {
        self.conj()
    }
    fn slice(t: &Tensor) -> Result<&[Self]> {
        t.complex()
    }
    fn wrap(shape: Vec<usize>, data: Vec<Self>) -> Tensor {
        Tensor::complex_unchecked(shape, data)
    }
}

fn reduce_if_scalar<T: Elem>(grad: Vec<T>, scalar: bool, shape: &[usize]) -> Tensor {
    if scalar {
        let mut s = T::ZERO;
        for g in grad {
            s += g;
        }
        T::wrap(shape.to_vec(), vec![s])
    } else {
        T::wrap(shape.to_vec(), grad)
    }
}

fn binary_forward<T: Elem>(kind: BinaryKind, a: &[T], b: &[T], n: usize) -> Vec<T> {
    let ia = |i: usize| if a.len() == 1 { 0 } else { i };
    let ib = |i: usize| if b.len() == 1 { 0 } else { i };
    (0..n)
        .map(|i| {
            let (x, y) = (a[ia(i)], b[ib(i)]);
            match kind {
                BinaryKind::Add => x + y,
                BinaryKind::Sub => x - y,
                BinaryKind::Mul => x * y,
            }
        })
        .collect()
}

fn binary_backward<T: Elem>(
    kind: BinaryKind,
    g: &[T],
    a: &Tensor,
    b: &Tensor,
) -> Result<Vec<Option<Tensor>>> {
    let av = T::slice(a)?;
    let bv = T::slice(b)?;
    let ia = |i: usize| if av.len() == 1 { 0 } else { i };
    let ib = |i: usize| if bv.len() == 1 { 0 } else { i };
    let (ga, gb): (Vec<T>, Vec<T>) = match kind {
        BinaryKind::Add => (g.to_vec(), g.to_vec()),
        BinaryKind::Sub => (g.to_vec(), g.iter().map(|&x| -x).collect()),
        BinaryKind::Mul => (
            g.iter().enumerate().map(|(i, &x)| x * bv[ib(i)].conj_()).collect(),
            g.iter().enumerate().map(|(i, &x)| x * av[ia(i)].conj_()).collect(),
        ),
    };
    Ok(vec![
        Some(reduce_if_scalar(ga, av.len() == 1 && g.len() != 1, a.shape())),
        Some(reduce_if_scalar(gb, bv.len() == 1 && g.len() != 1, b.shape())),
    ])
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

fn as_complex_vec(t: &Tensor) -> Vec<Complex64> {
    match t.storage() {
        Storage::Real(v) => v.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        Storage::Complex(v) => v.clone(),
    }
}

/// Gradient w.r.t. a parent of the given dtype from a complex gradient.
fn cast_grad(g: Vec<Complex64>, shape: &[usize], dtype: DType) -> Tensor {
    match dtype {
        DType::Complex128 => Tensor::complex_unchecked(shape.to_vec(), g),
        DType::Real64 => Tensor::real_unchecked(shape.to_vec(), g.iter().map(|z| z.re).collect()),
    }
}

/// Flat spatial indices of the retained Fourier modes, in output order.
///
/// 1D: `k ∈ [0, m)`. 2D: `kx ∈ [0, m) ∪ [N−m, N)` (in that order) and
/// `ky ∈ [0, m)`.
pub fn retained_modes(spatial: &[usize], modes: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
    if spatial.len() != modes.len() {
        return Err(Error::Shape("modes per axis must match spatial rank".into()));
    }
    for (&n, &m) in spatial.iter().zip(modes) {
        if m == 0 || 2 * m > n {
            return Err(Error::Invalid(format!(
                "resolution {n} is below twice the retained modes {m}"
            )));
        }
    }
    match spatial.len() {
        1 => Ok(((0..modes[0]).collect(), vec![modes[0]])),
        2 => {
            let (nx, ny) = (spatial[0], spatial[1]);
            let (mx, my) = (modes[0], modes[1]);
            let kxs: Vec<usize> = (0..mx).chain(nx - mx..nx).collect();
            let mut idx = Vec::with_capacity(kxs.len() * my);
            for &kx in &kxs {
                for ky in 0..my {
                    idx.push(kx * ny + ky);
                }
            }
            Ok((idx, vec![2 * mx, my]))
        }
        r => Err(Error::Invalid(format!("unsupported spatial rank {r}"))),
    }
}

fn mirror_index(spatial: &[usize], flat: usize) -> usize {
    let mut rem = flat;
    let mut coords = vec![0usize; spatial.len()];
    for (axis, &n) in spatial.iter().enumerate().rev() {
        coords[axis] = rem % n;
        rem /= n;
    }
    let mut out = 0;
    for (axis, &n) in spatial.iter().enumerate() {
        out = out * n + (n - coords[axis]) % n;
    }
    out
}

fn last_axis_coord(spatial: &[usize], flat: usize) -> usize {
    flat % spatial[spatial.len() - 1]
}

/// Per-axis destination map used by Fourier upsampling (Nyquist split).
fn upsample_axis_map(n: usize, m: usize) -> Vec<Vec<(usize, f64)>> {
    (0..n)
        .map(|k| {
            if n % 2 == 0 && k == n / 2 {
                vec![(n / 2, 0.5), (m - n / 2, 0.5)]
            } else if k < n / 2 || (n % 2 == 1 && k <= n / 2) {
                vec![(k, 1.0)]
            } else {
                vec![(m - (n - k), 1.0)]
            }
        })
        .collect()
}

/// Sparse linear map from a coarse spectrum to a fine one: for each coarse
/// flat index, the list of (fine flat index, weight).
fn upsample_map(spatial: &[usize], factor: usize) -> Vec<Vec<(usize, f64)>> {
    let axes: Vec<Vec<Vec<(usize, f64)>>> = spatial
        .iter()
        .map(|&n| upsample_axis_map(n, n * factor))
        .collect();
    let total = numel(spatial);
    let fine: Vec<usize> = spatial.iter().map(|&n| n * factor).collect();
    let mut out = Vec::with_capacity(total);
    for flat in 0..total {
        let mut rem = flat;
        let mut coords = vec![0usize; spatial.len()];
        for (axis, &n) in spatial.iter().enumerate().rev() {
            coords[axis] = rem % n;
            rem /= n;
        }
        let mut combos: Vec<(usize, f64)> = vec![(0, 1.0)];
        for (axis, &c) in coords.iter().enumerate() {
            let mut next = Vec::new();
            for &(idx, w) in &combos {
                for &(d, dw) in &axes[axis][c] {
                    next.push((idx * fine[axis] + d, w * dw));
                }
            }
            combos = next;
        }
        out.push(combos);
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, parents: Vec<usize>, backward: Option<BackwardFn>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            parents,
            backward,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> Result<Var> {
        value.ensure_finite("leaf")?;
        Ok(self.push(value, vec![], None, true))
    }

    /// Records a non-differentiable input.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        value.ensure_finite("constant")?;
        Ok(self.push(value, vec![], None, false))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn check_var(&self, v: Var) -> Result<()> {
        if v.0 >= self.nodes.len() {
            return Err(Error::Autodiff(format!("variable {} is not on this tape", v.0)));
        }
        Ok(())
    }

    /// Records a custom operation. `backward` is dropped when no parent
    /// requires a gradient.
    pub fn custom(&mut self, name: &str, value: Tensor, parents: &[Var], backward: BackwardFn) -> Result<Var> {
        for &p in parents {
            self.check_var(p)?;
        }
        value.ensure_finite(name)?;
        let requires_grad = parents.iter().any(|&p| self.nodes[p.0].requires_grad);
        let backward = if requires_grad { Some(backward) } else { None };
        Ok(self.push(value, parents.iter().map(|p| p.0).collect(), backward, requires_grad))
    }

    /// Reverse sweep from a real scalar. Consumes the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        self.check_var(loss)?;
        let lv = &self.nodes[loss.0].value;
        if lv.numel() != 1 || lv.dtype() != DType::Real64 {
            return Err(Error::Autodiff(format!(
                "backward requires a real scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::real_unchecked(lv.shape().to_vec(), vec![1.0]));
        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(backward) = node.backward.as_ref() else {
                continue;
            };
            let Some(g) = grads[id].take() else {
                continue;
            };
            let parents: Vec<&Tensor> = node.parents.iter().map(|&p| &self.nodes[p].value).collect();
            let pgrads = backward(&g, &parents)?;
            for (&p, pg) in node.parents.iter().zip(pgrads) {
                let Some(pg) = pg else { continue };
                if !self.nodes[p].requires_grad {
                    continue;
                }
                if pg.shape() != self.nodes[p].value.shape() || pg.dtype() != self.nodes[p].value.dtype() {
                    return Err(Error::Autodiff(format!(
                        "gradient shape {:?} does not match value {:?}",
                        pg.shape(),
                        self.nodes[p].value.shape()
                    )));
                }
                match &mut grads[p] {
                    Some(acc) => acc.add_assign(&pg)?,
                    slot @ None => *slot = Some(pg),
                }
            }
        }
        Ok(Gradients { grads })
    }

    fn binary(&mut self, kind: BinaryKind, a: Var, b: Var) -> Result<Var> {
        self.check_var(a)?;
        self.check_var(b)?;
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let shape = if av.shape() == bv.shape() || bv.numel() == 1 {
            av.shape().to_vec()
        } else if av.numel() == 1 {
            bv.shape().to_vec()
        } else {
            return Err(Error::Shape(format!(
                "{kind:?}: {:?} vs {:?}",
                av.shape(),
                bv.shape()
            )));
        };
        let n = numel(&shape);
        let value = match (av.storage(), bv.storage()) {
            (Storage::Real(x), Storage::Real(y)) => Tensor::real_unchecked(shape, binary_forward(kind, x, y, n)),
            (Storage::Complex(x), Storage::Complex(y)) => {
                Tensor::complex_unchecked(shape, binary_forward(kind, x, y, n))
            }
            _ => return Err(Error::DType(format!("{kind:?} across dtypes"))),
        };
        self.custom(
            "binary",
            value,
            &[a, b],
            Box::new(move |g, p| match g.storage() {
                Storage::Real(gv) => binary_backward::<f64>(kind, gv, p[0], p[1]),
                Storage::Complex(gv) => binary_backward::<Complex64>(kind, gv, p[0], p[1]),
            }),
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Mul, a, b)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        self.check_var(a)?;
        if !factor.is_finite() {
            return Err(Error::NonFinite("scale factor".into()));
        }
        let av = &self.nodes[a.0].value;
        let value = match av.storage() {
            Storage::Real(x) => Tensor::real_unchecked(av.shape().to_vec(), x.iter().map(|v| v * factor).collect()),
            Storage::Complex(x) => {
                Tensor::complex_unchecked(av.shape().to_vec(), x.iter().map(|v| v * factor).collect())
            }
        };
        self.custom(
            "scale",
            value,
            &[a],
            Box::new(move |g, _| {
                let out = match g.storage() {
                    Storage::Real(x) => Tensor::real_unchecked(g.shape().to_vec(), x.iter().map(|v| v * factor).collect()),
                    Storage::Complex(x) => {
                        Tensor::complex_unchecked(g.shape().to_vec(), x.iter().map(|v| v * factor).collect())
                    }
                };
                Ok(vec![Some(out)])
            }),
        )
    }

    /// Gaussian-error-linear activation `x·Φ(x)`.
    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        self.check_var(a)?;
        let av = &self.nodes[a.0].value;
        let value = Tensor::real_unchecked(av.shape().to_vec(), av.real()?.iter().map(|&x| gelu(x)).collect());
        self.custom(
            "gelu",
            value,
            &[a],
            Box::new(|g, p| {
                let x = p[0].real()?;
                let gv = g.real()?;
                let out = x.iter().zip(gv).map(|(&x, &g)| g * gelu_grad(x)).collect();
                Ok(vec![Some(Tensor::real_unchecked(g.shape().to_vec(), out))])
            }),
        )
    }

    /// Sum of all entries of a real tensor, as a scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.check_var(a)?;
        let av = &self.nodes[a.0].value;
        let s: f64 = av.real()?.iter().sum();
        let shape = av.shape().to_vec();
        self.custom(
            "sum",
            Tensor::scalar(s),
            &[a],
            Box::new(move |g, _| {
                let gv = g.real()?[0];
                Ok(vec![Some(Tensor::real_unchecked(shape.clone(), vec![gv; numel(&shape)]))])
            }),
        )
    }

    /// `Σ |aᵢ|²` for a real or complex tensor, as a real scalar.
    pub fn norm_sq(&mut self, a: Var) -> Result<Var> {
        self.check_var(a)?;
        let value = Tensor::scalar(self.value(a).norm_sq());
        self.custom(
            "norm_sq",
            value,
            &[a],
            Box::new(|g, p| {
                let gv = 2.0 * g.real()?[0];
                let out = match p[0].storage() {
                    Storage::Real(x) => Tensor::real_unchecked(p[0].shape().to_vec(), x.iter().map(|v| v * gv).collect()),
                    Storage::Complex(x) => {
                        Tensor::complex_unchecked(p[0].shape().to_vec(), x.iter().map(|v| v * gv).collect())
                    }
                };
                Ok(vec![Some(out)])
            }),
        )
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).numel() as f64;
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n)
    }

    /// Mean of squared entries of a real tensor.
    pub fn mean_square(&mut self, a: Var) -> Result<Var> {
        self.check_var(a)?;
        let p = self.value(a).numel();
        self.weighted_mean_square(a, Arc::new(vec![1.0; p]))
    }

    /// `Σ wᵢ aᵢ² / (blocks · Σ w)` where `w` is applied cyclically over the
    /// trailing `w.len()` entries (one block per leading index).
    pub fn weighted_mean_square(&mut self, a: Var, weights: Arc<Vec<f64>>) -> Result<Var> {
        self.check_var(a)?;
        let av = &self.nodes[a.0].value;
        let x = av.real()?;
        let p = weights.len();
        if p == 0 || x.len() % p != 0 {
            return Err(Error::Shape(format!(
                "weight length {p} does not tile tensor of {} entries",
                x.len()
            )));
        }
        let wsum: f64 = weights.iter().sum();
        if wsum <= 0.0 || weights.iter().any(|&w| w < 0.0) {
            return Err(Error::Invalid("weights must be non-negative with positive sum".into()));
        }
        let norm = (x.len() / p) as f64 * wsum;
        let total: f64 = x.iter().enumerate().map(|(i, v)| weights[i % p] * v * v).sum::<f64>() / norm;
        let shape = av.shape().to_vec();
        self.custom(
            "weighted_mean_square",
            Tensor::scalar(total),
            &[a],
            Box::new(move |g, parents| {
                let gv = g.real()?[0];
                let x = parents[0].real()?;
                let out = x
                    .iter()
                    .enumerate()
                    .map(|(i, v)| 2.0 * weights[i % p] * v * gv / norm)
                    .collect();
                Ok(vec![Some(Tensor::real_unchecked(shape.clone(), out))])
            }),
        )
    }

    /// Pointwise channel mixing: `out[b, o, s] = bias[o] + Σᵢ W[o, i] v[b, i, s]`.
    pub fn channel_map(&mut self, v: Var, weight: Var, bias: Var) -> Result<Var> {
        for x in [v, weight, bias] {
            self.check_var(x)?;
        }
        let (vt, wt, bt) = (self.value(v), self.value(weight), self.value(bias));
        if vt.ndim() < 2 || wt.ndim() != 2 || bt.ndim() != 1 {
            return Err(Error::Shape("channel_map expects v[B,C,...], W[O,C], bias[O]".into()));
        }
        let (batch, cin) = (vt.shape()[0], vt.shape()[1]);
        let (cout, wcin) = (wt.shape()[0], wt.shape()[1]);
        if wcin != cin || bt.shape()[0] != cout {
            return Err(Error::Shape(format!(
                "channel_map: input channels {cin}, weight {:?}, bias {:?}",
                wt.shape(),
                bt.shape()
            )));
        }
        let spatial: usize = vt.shape()[2..].iter().product();
        let (x, w, bvec) = (vt.real()?, wt.real()?, bt.real()?);
        // Row-major slices are read as their column-major transposes, so
        // out[b]ᵀ = x[b]ᵀ Wᵀ.
        let wt_view = DMatrixView::from_slice(w, cin, cout);
        let mut out = vec![0.0; batch * cout * spatial];
        for b in 0..batch {
            let xt = DMatrixView::from_slice(&x[b * cin * spatial..(b + 1) * cin * spatial], spatial, cin);
            let dst = &mut out[b * cout * spatial..(b + 1) * cout * spatial];
            let mut ot = DMatrixViewMut::from_slice(dst, spatial, cout);
            ot.gemm(1.0, &xt, &wt_view, 0.0);
            for (o, col) in dst.chunks_mut(spatial).enumerate() {
                col.iter_mut().for_each(|d| *d += bvec[o]);
            }
        }
        let mut shape = vt.shape().to_vec();
        shape[1] = cout;
        self.custom(
            "channel_map",
            Tensor::real_unchecked(shape, out),
            &[v, weight, bias],
            Box::new(move |g, p| {
                let gv = g.real()?;
                let (x, w) = (p[0].real()?, p[1].real()?);
                let mut gx = vec![0.0; x.len()];
                let mut gw = vec![0.0; w.len()];
                let mut gb = vec![0.0; cout];
                let w_mat = DMatrixView::from_slice(w, cin, cout).transpose();
                for b in 0..batch {
                    let go = &gv[b * cout * spatial..(b + 1) * cout * spatial];
                    for (o, col) in go.chunks(spatial).enumerate() {
                        gb[o] += col.iter().sum::<f64>();
                    }
                    let gt = DMatrixView::from_slice(go, spatial, cout);
                    let xt = DMatrixView::from_slice(&x[b * cin * spatial..(b + 1) * cin * spatial], spatial, cin);
                    let mut gxt = DMatrixViewMut::from_slice(&mut gx[b * cin * spatial..(b + 1) * cin * spatial], spatial, cin);
                    gxt.gemm(1.0, &gt, &w_mat, 0.0);
                    let mut gwt = DMatrixViewMut::from_slice(&mut gw, cin, cout);
                    gwt.gemm(1.0, &xt.transpose(), &gt, 1.0);
                }
                Ok(vec![
                    Some(Tensor::real_unchecked(p[0].shape().to_vec(), gx)),
                    Some(Tensor::real_unchecked(p[1].shape().to_vec(), gw)),
                    Some(Tensor::real_unchecked(p[2].shape().to_vec(), gb)),
                ])
            }),
        )
    }

    /// Unnormalized forward FFT over the trailing `ndim` axes. Real inputs
    /// are promoted; the output is complex.
    pub fn fft(&mut self, a: Var, ndim: usize) -> Result<Var> {
        self.fft_impl(a, ndim, false)
    }

    /// Inverse FFT with `1/N` normalization over the trailing `ndim` axes.
    pub fn ifft(&mut self, a: Var, ndim: usize) -> Result<Var> {
        self.fft_impl(a, ndim, true)
    }

    fn fft_impl(&mut self, a: Var, ndim: usize, inverse: bool) -> Result<Var> {
        self.check_var(a)?;
        let av = self.value(a);
        let shape = av.shape().to_vec();
        let dtype = av.dtype();
        let size = fft::transform_size_checked(&shape, ndim)?;
        let mut buf = as_complex_vec(av);
        fft::fft_trailing(&mut buf, &shape, ndim, inverse)?;
        if inverse {
            let s = 1.0 / size as f64;
            buf.iter_mut().for_each(|z| *z *= s);
        }
        let out_shape = shape.clone();
        self.custom(
            if inverse { "ifft" } else { "fft" },
            Tensor::complex_unchecked(out_shape, buf),
            &[a],
            Box::new(move |g, _| {
                // forward y = F x: adjoint Fᴴ g (unnormalized inverse).
                // inverse y = Fᴴ x / N: adjoint F g / N.
                let mut buf = g.complex()?.to_vec();
                fft::fft_trailing(&mut buf, &shape, ndim, !inverse)?;
                if inverse {
                    let s = 1.0 / size as f64;
                    buf.iter_mut().for_each(|z| *z *= s);
                }
                Ok(vec![Some(cast_grad(buf, &shape, dtype))])
            }),
        )
    }

    /// Real part of a complex tensor.
    pub fn re(&mut self, a: Var) -> Result<Var> {
        self.check_var(a)?;
        let av = self.value(a);
        let value = Tensor::real_unchecked(av.shape().to_vec(), av.complex()?.iter().map(|z| z.re).collect());
        self.custom(
            "re",
            value,
            &[a],
            Box::new(|g, _| {
                let out = g.real()?.iter().map(|&x| Complex64::new(x, 0.0)).collect();
                Ok(vec![Some(Tensor::complex_unchecked(g.shape().to_vec(), out))])
            }),
        )
    }

    /// Promotes a real tensor to complex.
    pub fn to_complex(&mut self, a: Var) -> Result<Var> {
        self.check_var(a)?;
        let av = self.value(a);
        av.real()?;
        let value = av.to_complex();
        self.custom(
            "to_complex",
            value,
            &[a],
            Box::new(|g, _| {
                let out = g.complex()?.iter().map(|z| z.re).collect();
                Ok(vec![Some(Tensor::real_unchecked(g.shape().to_vec(), out))])
            }),
        )
    }

    /// Keeps the retained low modes of a complex spectrum `[B, C, N...]`,
    /// producing `[B, C, K...]` (see [`retained_modes`]).
    pub fn spectral_truncate(&mut self, a: Var, modes: &[usize]) -> Result<Var> {
        self.check_var(a)?;
        let av = self.value(a);
        let shape = av.shape().to_vec();
        if shape.len() != 2 + modes.len() {
            return Err(Error::Shape("spectral_truncate expects [B, C, spatial...]".into()));
        }
        let spatial = shape[2..].to_vec();
        let (idx, kshape) = retained_modes(&spatial, modes)?;
        let idx = Arc::new(idx);
        let (lead, full, kept) = (shape[0] * shape[1], numel(&spatial), idx.len());
        let x = av.complex()?;
        let mut out = Vec::with_capacity(lead * kept);
        for l in 0..lead {
            out.extend(idx.iter().map(|&p| x[l * full + p]));
        }
        let mut out_shape = shape[..2].to_vec();
        out_shape.extend(&kshape);
        self.custom(
            "spectral_truncate",
            Tensor::complex_unchecked(out_shape, out),
            &[a],
            Box::new(move |g, _| {
                let gv = g.complex()?;
                let mut gx = vec![Complex64::new(0.0, 0.0); lead * full];
                for l in 0..lead {
                    for (r, &p) in idx.iter().enumerate() {
                        gx[l * full + p] = gv[l * kept + r];
                    }
                }
                Ok(vec![Some(Tensor::complex_unchecked(shape.clone(), gx))])
            }),
        )
    }

    /// Hermitian completion of a truncated spectrum `[B, C, K...]` onto the
    /// full grid `spatial`, so that the inverse transform is real.
    ///
    /// Modes with a non-zero last-axis index are placed with their
    /// conjugate mirror; modes on the `k_last = 0` plane are Hermitian
    /// projected (the convention of a real inverse transform).
    pub fn spectral_complete(&mut self, a: Var, spatial: &[usize], modes: &[usize]) -> Result<Var> {
        self.check_var(a)?;
        let av = self.value(a);
        let shape = av.shape().to_vec();
        let (idx, kshape) = retained_modes(spatial, modes)?;
        if shape.len() != 2 + spatial.len() || shape[2..] != kshape[..] {
            return Err(Error::Shape(format!(
                "spectral_complete: input {shape:?} does not match retained modes {kshape:?}"
            )));
        }
        let plan: Arc<Vec<(usize, usize, f64)>> = Arc::new(
            idx.iter()
                .map(|&p| {
                    let w = if last_axis_coord(spatial, p) == 0 { 0.5 } else { 1.0 };
                    (p, mirror_index(spatial, p), w)
                })
                .collect(),
        );
        let (lead, full, kept) = (shape[0] * shape[1], numel(spatial), idx.len());
        let y = av.complex()?;
        let mut z = vec![Complex64::new(0.0, 0.0); lead * full];
        for l in 0..lead {
            for (r, &(p, q, w)) in plan.iter().enumerate() {
                let v = y[l * kept + r];
                z[l * full + p] += v * w;
                z[l * full + q] += v.conj() * w;
            }
        }
        let mut out_shape = shape[..2].to_vec();
        out_shape.extend(spatial);
        self.custom(
            "spectral_complete",
            Tensor::complex_unchecked(out_shape, z),
            &[a],
            Box::new(move |g, _| {
                let gv = g.complex()?;
                let mut gy = Vec::with_capacity(lead * kept);
                for l in 0..lead {
                    for &(p, q, w) in plan.iter() {
                        gy.push((gv[l * full + p] + gv[l * full + q].conj()) * w);
                    }
                }
                Ok(vec![Some(Tensor::complex_unchecked(shape.clone(), gy))])
            }),
        )
    }

    /// Per-mode complex channel mixing:
    /// `out[b, o, k] = Σᵢ R[k, o, i] · x[b, i, k]` with `x: [B, I, K...]`
    /// and `R: [K..., O, I]`.
    pub fn mode_mix(&mut self, x: Var, weights: Var) -> Result<Var> {
        self.check_var(x)?;
        self.check_var(weights)?;
        let (xt, rt) = (self.value(x), self.value(weights));
        let xs = xt.shape().to_vec();
        let rs = rt.shape().to_vec();
        if xs.len() < 3 || rs.len() != xs.len() || rs[..rs.len() - 2] != xs[2..] {
            return Err(Error::Shape(format!("mode_mix: x {xs:?} vs R {rs:?}")));
        }
        let (batch, cin) = (xs[0], xs[1]);
        let (cout, rin) = (rs[rs.len() - 2], rs[rs.len() - 1]);
        if rin != cin {
            return Err(Error::Shape(format!("mode_mix: {cin} input channels vs R {rs:?}")));
        }
        let k: usize = xs[2..].iter().product();
        let (xv, rv) = (xt.complex()?, rt.complex()?);
        let mut out = vec![Complex64::new(0.0, 0.0); batch * cout * k];
        let mut col = vec![Complex64::new(0.0, 0.0); cin];
        for b in 0..batch {
            for m in 0..k {
                for (i, c) in col.iter_mut().enumerate() {
                    *c = xv[(b * cin + i) * k + m];
                }
                for o in 0..cout {
                    let row = &rv[(m * cout + o) * cin..(m * cout + o + 1) * cin];
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (r, c) in row.iter().zip(&col) {
                        acc += r * c;
                    }
                    out[(b * cout + o) * k + m] = acc;
                }
            }
        }
        let mut out_shape = xs.clone();
        out_shape[1] = cout;
        self.custom(
            "mode_mix",
            Tensor::complex_unchecked(out_shape, out),
            &[x, weights],
            Box::new(move |g, p| {
                let gv = g.complex()?;
                let (xv, rv) = (p[0].complex()?, p[1].complex()?);
                let zero = Complex64::new(0.0, 0.0);
                let mut gx = vec![zero; xv.len()];
                let mut gr = vec![zero; rv.len()];
                let mut col = vec![zero; cin];
                let mut gcol = vec![zero; cout];
                for b in 0..batch {
                    for m in 0..k {
                        for (i, c) in col.iter_mut().enumerate() {
                            *c = xv[(b * cin + i) * k + m];
                        }
                        for (o, c) in gcol.iter_mut().enumerate() {
                            *c = gv[(b * cout + o) * k + m];
                        }
                        for o in 0..cout {
                            let go = gcol[o];
                            let base = (m * cout + o) * cin;
                            for i in 0..cin {
                                gr[base + i] += go * col[i].conj();
                                gx[(b * cin + i) * k + m] += rv[base + i].conj() * go;
                            }
                        }
                    }
                }
                Ok(vec![
                    Some(Tensor::complex_unchecked(p[0].shape().to_vec(), gx)),
                    Some(Tensor::complex_unchecked(p[1].shape().to_vec(), gr)),
                ])
            }),
        )
    }

    /// Applies a Fourier multiplier over the trailing `ndim` axes of a real
    /// tensor: `Re(ifft(M ⊙ fft(x)))`. `multiplier` has one entry per mode
    /// of the transform grid.
    pub fn fourier_multiplier(&mut self, a: Var, ndim: usize, multiplier: Arc<Vec<Complex64>>) -> Result<Var> {
        self.check_var(a)?;
        let av = self.value(a);
        let shape = av.shape().to_vec();
        let size = fft::transform_size_checked(&shape, ndim)?;
        if multiplier.len() != size {
            return Err(Error::Shape(format!(
                "multiplier has {} modes, transform grid has {size}",
                multiplier.len()
            )));
        }
        let spatial = shape[shape.len() - ndim..].to_vec();
        let flipped: Arc<Vec<Complex64>> =
            Arc::new((0..size).map(|p| multiplier[mirror_index(&spatial, p)]).collect());
        let apply = move |x: &[f64], m: &[Complex64]| -> Result<Vec<f64>> {
            let mut buf = fft::rfft_full(x, &shape, ndim)?;
            for chunk in buf.chunks_mut(size) {
                chunk.iter_mut().zip(m).for_each(|(z, w)| *z *= w);
            }
            Ok(fft::ifft_normalized(buf, &shape, ndim)?.iter().map(|z| z.re).collect())
        };
        let out = apply(av.real()?, &multiplier)?;
        let out_shape = av.shape().to_vec();
        let apply = Arc::new(apply);
        self.custom(
            "fourier_multiplier",
            Tensor::real_unchecked(out_shape.clone(), out),
            &[a],
            Box::new(move |g, _| {
                let gx = apply(g.real()?, &flipped)?;
                Ok(vec![Some(Tensor::real_unchecked(out_shape.clone(), gx))])
            }),
        )
    }

    /// Band-limited (trigonometric) interpolation of a real periodic field
    /// onto a grid `factor` times finer along each of the trailing `ndim` axes.
    pub fn fourier_upsample(&mut self, a: Var, ndim: usize, factor: usize) -> Result<Var> {
        self.check_var(a)?;
        if factor == 0 {
            return Err(Error::Invalid("upsample factor must be positive".into()));
        }
        let av = self.value(a);
        let shape = av.shape().to_vec();
        fft::transform_size_checked(&shape, ndim)?;
        let spatial = shape[shape.len() - ndim..].to_vec();
        let mut fine_shape = shape.clone();
        for d in fine_shape.iter_mut().rev().take(ndim) {
            *d *= factor;
        }
        let fine_spatial = fine_shape[shape.len() - ndim..].to_vec();
        let map = Arc::new(upsample_map(&spatial, factor));
        let (coarse_n, fine_n) = (numel(&spatial), numel(&fine_spatial));
        let lead = numel(&shape) / coarse_n;
        let gain = (factor as f64).powi(ndim as i32);
        let spec = fft::rfft_full(av.real()?, &shape, ndim)?;
        let mut fine = vec![Complex64::new(0.0, 0.0); lead * fine_n];
        for l in 0..lead {
            for (src, dests) in map.iter().enumerate() {
                let v = spec[l * coarse_n + src] * gain;
                for &(d, w) in dests {
                    fine[l * fine_n + d] += v * w;
                }
            }
        }
        let out: Vec<f64> = fft::ifft_normalized(fine, &fine_shape, ndim)?.iter().map(|z| z.re).collect();
        let fs = fine_shape.clone();
        self.custom(
            "fourier_upsample",
            Tensor::real_unchecked(fine_shape, out),
            &[a],
            Box::new(move |g, _| {
                let gs = fft::rfft_full(g.real()?, &fs, ndim)?;
                let mut coarse = vec![Complex64::new(0.0, 0.0); lead * coarse_n];
                for l in 0..lead {
                    for (src, dests) in map.iter().enumerate() {
                        coarse[l * coarse_n + src] = dests.iter().map(|&(d, w)| gs[l * fine_n + d] * w).sum();
                    }
                }
                let gx = fft::ifft_normalized(coarse, &shape, ndim)?.iter().map(|z| z.re).collect();
                Ok(vec![Some(Tensor::real_unchecked(shape.clone(), gx))])
            }),
        )
    }

    /// Channels `start..start+len` along axis 1.
    pub fn slice_channels(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        self.check_var(a)?;
        let av = self.value(a);
        let shape = av.shape().to_vec();
        if shape.len() < 2 || len == 0 || start + len > shape[1] {
            return Err(Error::Shape(format!("slice_channels {start}+{len} of {shape:?}")));
        }
        let x = av.real()?;
        let (batch, c) = (shape[0], shape[1]);
        let inner: usize = shape[2..].iter().product();
        let mut out = Vec::with_capacity(batch * len * inner);
        for b in 0..batch {
            out.extend_from_slice(&x[(b * c + start) * inner..(b * c + start + len) * inner]);
        }
        let mut out_shape = shape.clone();
        out_shape[1] = len;
        self.custom(
            "slice_channels",
            Tensor::real_unchecked(out_shape, out),
            &[a],
            Box::new(move |g, _| {
                let gv = g.real()?;
                let mut gx = vec![0.0; batch * c * inner];
                for b in 0..batch {
                    gx[(b * c + start) * inner..(b * c + start + len) * inner]
                        .copy_from_slice(&gv[b * len * inner..(b + 1) * len * inner]);
                }
                Ok(vec![Some(Tensor::real_unchecked(shape.clone(), gx))])
            }),
        )
    }

    /// Concatenates real tensors along axis 1.
    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Invalid("concat of nothing".into()));
        }
        for &p in parts {
            self.check_var(p)?;
        }
        let first = self.value(parts[0]).shape().to_vec();
        if first.len() < 2 {
            return Err(Error::Shape("concat_channels expects [B, C, ...]".into()));
        }
        let batch = first[0];
        let inner: usize = first[2..].iter().product();
        let mut channels = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.value(p).shape();
            if s.len() != first.len() || s[0] != batch || s[2..] != first[2..] {
                return Err(Error::Shape(format!("concat_channels {s:?} vs {first:?}")));
            }
            channels.push(s[1]);
        }
        let total: usize = channels.iter().sum();
        let mut out = vec![0.0; batch * total * inner];
        let mut offset = 0;
        for (&p, &c) in parts.iter().zip(&channels) {
            let x = self.value(p).real()?;
            for b in 0..batch {
                out[(b * total + offset) * inner..(b * total + offset + c) * inner]
                    .copy_from_slice(&x[b * c * inner..(b + 1) * c * inner]);
            }
            offset += c;
        }
        let mut out_shape = first.clone();
        out_shape[1] = total;
        let channels = Arc::new(channels);
        self.custom(
            "concat_channels",
            Tensor::real_unchecked(out_shape, out),
            parts,
            Box::new(move |g, p| {
                let gv = g.real()?;
                let mut grads = Vec::with_capacity(p.len());
                let mut offset = 0;
                for (pt, &c) in p.iter().zip(channels.iter()) {
                    let mut gx = Vec::with_capacity(batch * c * inner);
                    for b in 0..batch {
                        gx.extend_from_slice(&gv[(b * total + offset) * inner..(b * total + offset + c) * inner]);
                    }
                    offset += c;
                    grads.push(Some(Tensor::real_unchecked(pt.shape().to_vec(), gx)));
                }
                Ok(grads)
            }),
        )
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        self.check_var(a)?;
        let value = self.value(a).reshape(shape)?;
        let orig = self.value(a).shape().to_vec();
        self.custom(
            "reshape",
            value,
            &[a],
            Box::new(move |g, _| Ok(vec![Some(g.reshape(&orig)?)])),
        )
    }
}
