//! Binary tensor files: the bytes `CSTN`, a version byte, an axis-count
//! byte, each axis length as a little-endian `u64`, then the entries as
//! little-endian `f64` in row-major order. Complex tensors carry a trailing
//! axis of length 2 (real, imaginary).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayBase, ArrayD, Data, Dimension, IxDyn};
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CSTN";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected = element_count(&shape)?;
        if expected != data.len() {
            return Err(Error::shape("tensor data", expected, data.len()));
        }
        Ok(Self { shape, data })
    }

    pub fn from_array<S: Data<Elem = f64>, D: Dimension>(a: &ArrayBase<S, D>) -> Self {
        Self {
            shape: a.shape().to_vec(),
            data: a.iter().copied().collect(),
        }
    }

    pub fn from_complex(a: &Array2<Complex64>) -> Self {
        let (r, c) = a.dim();
        let mut data = Vec::with_capacity(r * c * 2);
        for z in a.iter() {
            data.push(z.re);
            data.push(z.im);
        }
        Self {
            shape: vec![r, c, 2],
            data,
        }
    }

    pub fn into_array(self) -> ArrayD<f64> {
        ArrayD::from_shape_vec(IxDyn(&self.shape), self.data).expect("shape checked on construction")
    }

    /// Interprets a `rows x cols x 2` tensor as a complex matrix.
    pub fn into_complex(self) -> Result<Array2<Complex64>> {
        match self.shape[..] {
            [r, c, 2] => {
                let values = self.data.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
                Ok(Array2::from_shape_vec((r, c), values).expect("shape checked"))
            }
            _ => Err(Error::Format(format!(
                "expected a rows x cols x 2 complex tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    pub fn into_matrix(self) -> Result<Array2<f64>> {
        match self.shape[..] {
            [r, c] => Ok(Array2::from_shape_vec((r, c), self.data).expect("shape checked")),
            _ => Err(Error::Format(format!("expected a matrix, got shape {:?}", self.shape))),
        }
    }
}

fn element_count(shape: &[usize]) -> Result<usize> {
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .filter(|n| n.checked_mul(8).is_some())
        .ok_or_else(|| Error::Format(format!("tensor shape {shape:?} is too large")))
}

pub fn encode_tensor(t: &Tensor) -> Result<Vec<u8>> {
    if t.shape.len() > u8::MAX as usize {
        return Err(Error::Format(format!(
            "{} axes exceed the format's limit",
            t.shape.len()
        )));
    }
    if element_count(&t.shape)? != t.data.len() {
        return Err(Error::shape("tensor data", element_count(&t.shape)?, t.data.len()));
    }
    if t.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format("tensor has non-finite entries".into()));
    }
    let mut out = Vec::with_capacity(6 + 8 * t.shape.len() + 8 * t.data.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(t.shape.len() as u8);
    for &d in &t.shape {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in &t.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor> {
    let truncated = || Error::Format("truncated tensor file".into());
    if bytes.len() < 6 {
        return Err(truncated());
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format("not a tensor file (bad magic)".into()));
    }
    if bytes[4] != VERSION {
        return Err(Error::Format(format!("unsupported tensor version {}", bytes[4])));
    }
    let axes = bytes[5] as usize;
    let mut pos = 6;
    let mut shape = Vec::with_capacity(axes);
    for _ in 0..axes {
        let chunk = bytes.get(pos..pos + 8).ok_or_else(truncated)?;
        let d = u64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        shape.push(usize::try_from(d).map_err(|_| Error::Format("axis length overflows".into()))?);
        pos += 8;
    }
    let count = element_count(&shape)?;
    let body = &bytes[pos..];
    if body.len() < count * 8 {
        return Err(truncated());
    }
    if body.len() > count * 8 {
        return Err(Error::Format(format!(
            "{} trailing bytes after tensor data",
            body.len() - count * 8
        )));
    }
    let data: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format("tensor has non-finite entries".into()));
    }
    Ok(Tensor { shape, data })
}

pub fn dump_tensor(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    std::fs::write(path, encode_tensor(t)?)?;
    Ok(())
}

/// Writes an array in the tensor format without an intermediate copy.
pub fn dump_array<S, D>(path: impl AsRef<Path>, a: &ArrayBase<S, D>) -> Result<()>
where
    S: Data<Elem = f64>,
    D: Dimension,
{
    if a.ndim() > u8::MAX as usize {
        return Err(Error::Format(format!("{} axes exceed the format's limit", a.ndim())));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format("tensor has non-finite entries".into()));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION, a.ndim() as u8])?;
    for &d in a.shape() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for v in a.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    decode_tensor(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let t = Tensor::new(vec![2, 1], vec![1.0, -0.5]).unwrap();
        let b = encode_tensor(&t).unwrap();
        assert_eq!(&b[..6], b"CSTN\x01\x02");
        assert_eq!(&b[6..14], &2u64.to_le_bytes());
        assert_eq!(&b[22..30], &1.0f64.to_le_bytes());
        assert_eq!(b.len(), 6 + 16 + 16);
    }

    #[test]
    fn empty_axis_round_trips() {
        let t = Tensor::new(vec![3, 0, 4], vec![]).unwrap();
        assert_eq!(decode_tensor(&encode_tensor(&t).unwrap()).unwrap(), t);
    }

    #[test]
    fn corrupt_inputs_are_errors() {
        let t = Tensor::new(vec![2], vec![1.0, 2.0]).unwrap();
        let good = encode_tensor(&t).unwrap();
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(decode_tensor(&bad_magic).is_err());
        assert!(decode_tensor(&good[..good.len() - 1]).is_err());
        let mut extra = good.clone();
        extra.push(0);
        assert!(decode_tensor(&extra).is_err());
        // a huge declared shape must not allocate
        let mut huge = b"CSTN\x01\x02".to_vec();
        huge.extend_from_slice(&u64::MAX.to_le_bytes());
        huge.extend_from_slice(&u64::MAX.to_le_bytes());
        assert!(decode_tensor(&huge).is_err());
    }

    #[test]
    fn streamed_dump_matches_encoding() {
        let a = ndarray::Array3::from_shape_fn((2, 3, 4), |(i, j, k)| (i * 12 + j * 4 + k) as f64 - 0.25);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.cstn");
        dump_array(&path, &a.t()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes, encode_tensor(&Tensor::from_array(&a.t())).unwrap());
        let back = load_tensor(&path).unwrap().into_array();
        assert_eq!(back, a.t().into_dyn());
    }

    #[test]
    fn complex_round_trip() {
        let a = Array2::from_shape_fn((2, 3), |(i, j)| Complex64::new(i as f64, -(j as f64)));
        let t = Tensor::from_complex(&a);
        assert_eq!(t.shape, vec![2, 3, 2]);
        assert_eq!(t.into_complex().unwrap(), a);
    }
}
