//! Dense row-major tensors of `f64` or `Complex64`.

use crate::error::{Error, Result};
pub use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    Real64,
    Complex128,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Storage {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

/// A dense tensor. The data length always equals the product of the shape
/// extents and every entry is finite.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    storage: Storage,
}

pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn check_shape(shape: &[usize], len: usize) -> Result<()> {
    if shape.iter().any(|&d| d == 0) {
        return Err(Error::Shape(format!("zero extent in shape {shape:?}")));
    }
    if numel(shape) != len {
        return Err(Error::Shape(format!(
            "data length {len} does not match shape {shape:?}"
        )));
    }
    Ok(())
}

impl Tensor {
    pub fn new_real(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        check_shape(shape, data.len())?;
        let t = Tensor {
            shape: shape.to_vec(),
            storage: Storage::Real(data),
        };
        t.ensure_finite("Tensor::new_real")?;
        Ok(t)
    }

    pub fn new_complex(shape: &[usize], data: Vec<Complex64>) -> Result<Self> {
        check_shape(shape, data.len())?;
        let t = Tensor {
            shape: shape.to_vec(),
            storage: Storage::Complex(data),
        };
        t.ensure_finite("Tensor::new_complex")?;
        Ok(t)
    }

    /// Builds a tensor without the finiteness scan. Callers check later.
    pub(crate) fn from_storage_unchecked(shape: Vec<usize>, storage: Storage) -> Self {
        debug_assert_eq!(
            numel(&shape),
            match &storage {
                Storage::Real(v) => v.len(),
                Storage::Complex(v) => v.len(),
            }
        );
        Tensor { shape, storage }
    }

    pub(crate) fn real_unchecked(shape: Vec<usize>, data: Vec<f64>) -> Self {
        Self::from_storage_unchecked(shape, Storage::Real(data))
    }

    pub(crate) fn complex_unchecked(shape: Vec<usize>, data: Vec<Complex64>) -> Self {
        Self::from_storage_unchecked(shape, Storage::Complex(data))
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![],
            storage: Storage::Real(vec![value]),
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            storage: Storage::Real(vec![0.0; numel(shape)]),
        }
    }

    pub fn ones(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            storage: Storage::Real(vec![1.0; numel(shape)]),
        }
    }

    pub fn zeros_complex(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            storage: Storage::Complex(vec![Complex64::new(0.0, 0.0); numel(shape)]),
        }
    }

    pub fn zeros_like(other: &Tensor) -> Self {
        match other.dtype() {
            DType::Real64 => Self::zeros(&other.shape),
            DType::Complex128 => Self::zeros_complex(&other.shape),
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Result<Self> {
        let data = (0..numel(shape)).map(&mut f).collect();
        Self::new_real(shape, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        numel(&self.shape)
    }

    pub fn dtype(&self) -> DType {
        match self.storage {
            Storage::Real(_) => DType::Real64,
            Storage::Complex(_) => DType::Complex128,
        }
    }

    pub fn storage(&self) -> &Storage {
        &self.storage
    }

    pub fn real(&self) -> Result<&[f64]> {
        match &self.storage {
            Storage::Real(v) => Ok(v),
            Storage::Complex(_) => Err(Error::DType("expected real tensor".into())),
        }
    }

    pub fn real_mut(&mut self) -> Result<&mut [f64]> {
        match &mut self.storage {
            Storage::Real(v) => Ok(v),
            Storage::Complex(_) => Err(Error::DType("expected real tensor".into())),
        }
    }

    pub fn complex(&self) -> Result<&[Complex64]> {
        match &self.storage {
            Storage::Complex(v) => Ok(v),
            Storage::Real(_) => Err(Error::DType("expected complex tensor".into())),
        }
    }

    pub fn complex_mut(&mut self) -> Result<&mut [Complex64]> {
        match &mut self.storage {
            Storage::Complex(v) => Ok(v),
            Storage::Real(_) => Err(Error::DType("expected complex tensor".into())),
        }
    }

    pub fn into_real(self) -> Result<Vec<f64>> {
        match self.storage {
            Storage::Real(v) => Ok(v),
            Storage::Complex(_) => Err(Error::DType("expected real tensor".into())),
        }
    }

    pub fn into_complex(self) -> Result<Vec<Complex64>> {
        match self.storage {
            Storage::Complex(v) => Ok(v),
            Storage::Real(_) => Err(Error::DType("expected complex tensor".into())),
        }
    }

    /// Scalar value of a single-element real tensor.
    pub fn item(&self) -> Result<f64> {
        if self.numel() != 1 {
            return Err(Error::Shape(format!(
                "item() on tensor of shape {:?}",
                self.shape
            )));
        }
        Ok(self.real()?[0])
    }

    /// Promotes a real tensor to complex; complex tensors are cloned.
    pub fn to_complex(&self) -> Tensor {
        match &self.storage {
            Storage::Real(v) => Tensor {
                shape: self.shape.clone(),
                storage: Storage::Complex(v.iter().map(|&x| Complex64::new(x, 0.0)).collect()),
            },
            Storage::Complex(_) => self.clone(),
        }
    }

    /// Real part of a complex tensor; real tensors are cloned.
    pub fn re(&self) -> Tensor {
        match &self.storage {
            Storage::Complex(v) => Tensor {
                shape: self.shape.clone(),
                storage: Storage::Real(v.iter().map(|z| z.re).collect()),
            },
            Storage::Real(_) => self.clone(),
        }
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        check_shape(shape, self.numel())?;
        Ok(Tensor {
            shape: shape.to_vec(),
            storage: self.storage.clone(),
        })
    }

    pub fn is_finite(&self) -> bool {
        match &self.storage {
            Storage::Real(v) => v.iter().all(|x| x.is_finite()),
            Storage::Complex(v) => v.iter().all(|z| z.re.is_finite() && z.im.is_finite()),
        }
    }

    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(context.to_string()))
        }
    }

    /// In-place `self += other` for tensors of identical shape and dtype.
    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "add_assign {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        match (&mut self.storage, &other.storage) {
            (Storage::Real(a), Storage::Real(b)) => a.iter_mut().zip(b).for_each(|(x, y)| *x += y),
            (Storage::Complex(a), Storage::Complex(b)) => {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y)
            }
            _ => return Err(Error::DType("add_assign across dtypes".into())),
        }
        Ok(())
    }

    /// Squared Euclidean norm of all entries.
    pub fn norm_sq(&self) -> f64 {
        match &self.storage {
            Storage::Real(v) => v.iter().map(|x| x * x).sum(),
            Storage::Complex(v) => v.iter().map(|z| z.norm_sqr()).sum(),
        }
    }

    /// View of the tensor as interleaved real scalars (complex entries
    /// contribute `re, im`). Used by the optimizer.
    pub fn to_flat_reals(&self) -> Vec<f64> {
        match &self.storage {
            Storage::Real(v) => v.clone(),
            Storage::Complex(v) => v.iter().flat_map(|z| [z.re, z.im]).collect(),
        }
    }

    /// Number of real scalars held (complex counts twice).
    pub fn real_scalar_count(&self) -> usize {
        match self.dtype() {
            DType::Real64 => self.numel(),
            DType::Complex128 => 2 * self.numel(),
        }
    }

    /// Overwrites the data from interleaved real scalars.
    pub fn set_from_flat_reals(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.real_scalar_count() {
            return Err(Error::Shape("set_from_flat_reals length".into()));
        }
        match &mut self.storage {
            Storage::Real(v) => v.copy_from_slice(flat),
            Storage::Complex(v) => {
                for (z, pair) in v.iter_mut().zip(flat.chunks_exact(2)) {
                    *z = Complex64::new(pair[0], pair[1]);
                }
            }
        }
        Ok(())
    }
}
