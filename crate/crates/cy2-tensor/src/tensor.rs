use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::TensorError;
use crate::scalar::Scalar;

const TENSOR_MAGIC: &[u8; 4] = b"CY2T";

/// Dense n-dimensional array, contiguous row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self, TensorError> {
        let expect: usize = shape.iter().product();
        if data.len() != expect {
            return Err(TensorError::shape(
                "tensor",
                format!("shape {shape:?} needs {expect} elements, got {}", data.len()),
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, T::one())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn scalar(value: T) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..len).map(&mut f).collect(),
        }
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

    pub fn is_scalar(&self) -> bool {
        self.shape.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Trailing dimension (1 for scalars).
    pub fn last_dim(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    /// Number of rows when the tensor is viewed as (leading, last_dim).
    pub fn num_rows(&self) -> usize {
        if self.data.is_empty() {
            0
        } else {
            self.data.len() / self.last_dim()
        }
    }

    pub fn item(&self) -> T {
        assert!(self.is_scalar(), "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn reshaped(&self, shape: &[usize]) -> Result<Self, TensorError> {
        let expect: usize = shape.iter().product();
        if expect != self.data.len() {
            return Err(TensorError::shape(
                "reshape",
                format!("cannot view {:?} as {shape:?}", self.shape),
            ));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += *b;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|x| x.to_f64()).collect()
    }

    pub fn from_f64_slice(shape: &[usize], values: &[f64]) -> Result<Self, TensorError> {
        Self::new(shape.to_vec(), values.iter().map(|&x| T::from_f64(x)).collect())
    }
}

/// Writes the `CY2T` dump format: magic, u32 rank, u32 dims, f64
/// little-endian row-major payload.
pub fn write_cy2t<T: Scalar>(path: &Path, t: &Tensor<T>) -> Result<(), TensorError> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(TENSOR_MAGIC)?;
    out.write_all(&(t.rank() as u32).to_le_bytes())?;
    for &d in t.shape() {
        out.write_all(&(d as u32).to_le_bytes())?;
    }
    for &x in t.data() {
        out.write_all(&x.to_f64().to_le_bytes())?;
    }
    Ok(())
}

pub fn read_cy2t<T: Scalar>(path: &Path) -> Result<Tensor<T>, TensorError> {
    let mut input = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != TENSOR_MAGIC {
        return Err(TensorError::Format(format!(
            "bad tensor magic {magic:?}, expected CY2T"
        )));
    }
    let mut word = [0u8; 4];
    input.read_exact(&mut word)?;
    let rank = u32::from_le_bytes(word) as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        input.read_exact(&mut word)?;
        shape.push(u32::from_le_bytes(word) as usize);
    }
    let len: usize = shape.iter().product();
    let mut data = Vec::with_capacity(len);
    let mut buf = [0u8; 8];
    for _ in 0..len {
        input.read_exact(&mut buf)?;
        data.push(T::from_f64(f64::from_le_bytes(buf)));
    }
    Tensor::new(shape, data)
}
