use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major N-dimensional array.
///
/// Values are immutable once handed to other modules; every operation
/// returns a fresh tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<E> {
    shape: Vec<usize>,
    data: Vec<E>,
}

/// Complex counterpart of [`Tensor`], produced by the forward transforms.
pub type ComplexTensor<T> = Tensor<Complex<T>>;

impl<E: Copy> Tensor<E> {
    pub fn new(shape: Vec<usize>, data: Vec<E>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::ShapeMismatch {
                context: "tensor construction",
                expected: shape,
                got: vec![data.len()],
            });
        }
        Ok(Self { shape, data })
    }

    pub fn full(shape: &[usize], value: E) -> Self {
        let numel = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![value; numel] }
    }

    /// Builds a tensor by evaluating `f` on every multi-index in row-major order.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> E) -> Self {
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..numel {
            data.push(f(&idx));
            for ax in (0..shape.len()).rev() {
                idx[ax] += 1;
                if idx[ax] < shape[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
        Self { shape: shape.to_vec(), data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[E] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [E] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<E> {
        self.data
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        Self::new(shape.to_vec(), self.data)
    }

    /// Row-major strides in elements.
    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.shape)
    }

    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        index
            .iter()
            .zip(self.strides())
            .map(|(i, s)| i * s)
            .sum()
    }

    pub fn get(&self, index: &[usize]) -> E {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: E) {
        let off = self.offset(index);
        self.data[off] = value;
    }

    /// Slice of the `c`-th block along the leading axis.
    pub fn outer(&self, c: usize) -> &[E] {
        let block = self.data.len() / self.shape[0];
        &self.data[c * block..(c + 1) * block]
    }

    pub fn outer_mut(&mut self, c: usize) -> &mut [E] {
        let block = self.data.len() / self.shape[0];
        &mut self.data[c * block..(c + 1) * block]
    }

    pub fn map<F: Copy>(&self, f: impl Fn(E) -> F) -> Tensor<F> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn zip_map<F: Copy, G: Copy>(
        &self,
        other: &Tensor<F>,
        f: impl Fn(E, F) -> G,
    ) -> Result<Tensor<G>> {
        self.expect_shape("elementwise", other.shape())?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn expect_shape(&self, context: &'static str, shape: &[usize]) -> Result<()> {
        if self.shape != shape {
            return Err(Error::ShapeMismatch {
                context,
                expected: shape.to_vec(),
                got: self.shape.clone(),
            });
        }
        Ok(())
    }

    /// Concatenates tensors along axis 0. Trailing extents must agree.
    pub fn concat(parts: &[&Tensor<E>]) -> Result<Self> {
        let first = parts.first().ok_or(Error::DegenerateExtent {
            context: "concat of zero tensors",
            extents: vec![],
        })?;
        let tail = &first.shape[1..];
        let mut lead = 0;
        let mut data = Vec::new();
        for p in parts {
            if &p.shape[1..] != tail {
                return Err(Error::ShapeMismatch {
                    context: "concat",
                    expected: first.shape.clone(),
                    got: p.shape.clone(),
                });
            }
            lead += p.shape[0];
            data.extend_from_slice(&p.data);
        }
        let mut shape = vec![lead];
        shape.extend_from_slice(tail);
        Ok(Self { shape, data })
    }
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn scalar(value: T) -> Self {
        Self { shape: vec![1], data: vec![value] }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn mean(&self) -> T {
        self.sum() / T::from_usize_lossy(self.data.len().max(1))
    }

    /// Population variance.
    pub fn variance(&self) -> T {
        let m = self.mean();
        let n = T::from_usize_lossy(self.data.len().max(1));
        self.data.iter().map(|&x| (x - m) * (x - m)).sum::<T>() / n
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &x| acc.max(x.abs()))
    }

    pub fn min(&self) -> T {
        self.data.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max(&self) -> T {
        self.data.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn l2_norm(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn scale(&self, k: T) -> Self {
        self.map(|x| x * k)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.expect_shape("accumulate", other.shape())?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// ‖self − other‖₂ / ‖other‖₂ (absolute norm when `other` is zero).
    pub fn rel_l2_error(&self, reference: &Self) -> Result<T> {
        let diff = self.sub(reference)?.l2_norm();
        let norm = reference.l2_norm();
        Ok(if norm > T::zero() { diff / norm } else { diff })
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        self.map(|x| U::lit(x.to_f64_lossy()))
    }

    pub fn to_complex(&self) -> ComplexTensor<T> {
        self.map(|x| Complex::new(x, T::zero()))
    }
}

impl<T: Scalar> ComplexTensor<T> {
    pub fn re(&self) -> Tensor<T> {
        self.map(|z| z.re)
    }

    pub fn max_abs_im(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, z| acc.max(z.im.abs()))
    }

    pub fn max_abs_re(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, z| acc.max(z.re.abs()))
    }
}

pub fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for ax in (0..shape.len().saturating_sub(1)).rev() {
        strides[ax] = strides[ax + 1] * shape[ax + 1];
    }
    strides
}
