//! In-memory vector collections. Object identity is the row index.

use crate::error::{Error, Result};
use crate::neighbor::SENTINEL_ID;

/// A contiguous row-major collection of `n` vectors of dimension `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    d: usize,
    data: Vec<f32>,
}

impl Dataset {
    /// Builds a dataset from a flat row-major buffer. Every component must be
    /// finite and the buffer length a multiple of `d`.
    pub fn new(d: usize, data: Vec<f32>) -> Result<Self> {
        if d == 0 {
            return Err(Error::usage("dataset dimension must be at least 1"));
        }
        if data.is_empty() || data.len() % d != 0 {
            return Err(Error::usage(format!(
                "dataset buffer length {} is not a positive multiple of d={}",
                data.len(),
                d
            )));
        }
        let n = data.len() / d;
        if n as u64 >= SENTINEL_ID as u64 {
            return Err(Error::usage(format!("dataset too large: {n} objects")));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::usage(format!(
                "non-finite component at row {} column {}",
                pos / d,
                pos % d
            )));
        }
        Ok(Dataset { d, data })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let d = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::usage("rows have inconsistent dimensions"));
        }
        Dataset::new(d, rows.concat())
    }

    /// Concatenates two datasets of equal dimension; rows of `b` follow rows
    /// of `a`, so `b`'s object ids shift up by `a.len()`.
    pub fn concat(a: &Dataset, b: &Dataset) -> Result<Self> {
        if a.d != b.d {
            return Err(Error::usage(format!(
                "cannot combine datasets of dimension {} and {}",
                a.d, b.d
            )));
        }
        let mut data = Vec::with_capacity(a.data.len() + b.data.len());
        data.extend_from_slice(&a.data);
        data.extend_from_slice(&b.data);
        Dataset::new(a.d, data)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len() / self.d
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.d)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_ragged() {
        assert!(Dataset::new(2, vec![]).is_err());
        assert!(Dataset::new(2, vec![1.0, 2.0, 3.0]).is_err());
        assert!(Dataset::new(0, vec![1.0]).is_err());
        assert!(Dataset::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }

    #[test]
    fn rejects_non_finite() {
        assert!(Dataset::new(2, vec![1.0, f32::NAN]).is_err());
        assert!(Dataset::new(1, vec![f32::INFINITY]).is_err());
    }

    #[test]
    fn concat_shifts_rows() {
        let a = Dataset::new(2, vec![0.0, 1.0]).unwrap();
        let b = Dataset::new(2, vec![2.0, 3.0, 4.0, 5.0]).unwrap();
        let c = Dataset::concat(&a, &b).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.row(1), &[2.0, 3.0]);
        assert_eq!(c.row(2), &[4.0, 5.0]);
    }
}
