//! Dense order-N tensors with mode-k unfolding and mode products.
//!
//! Storage is first-index-fastest: element `(i_0, …, i_{N-1})` lives at
//! `i_0 + I_0·(i_1 + I_1·(i_2 + …))`. Modes are 0-based.
//!
//! The mode-k unfolding is the `I_k × Π_{j≠k} I_j` matrix whose column index
//! enumerates the remaining modes in increasing order, earliest mode fastest:
//! `col = Σ_{j≠k} i_j · Π_{l<j, l≠k} I_l`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "tensor shape must be non-empty with positive dims, got {shape:?}"
            )));
        }
        let len: usize = shape.iter().product();
        if data.len() != len {
            return Err(Error::DimMismatch {
                what: format!("tensor data for shape {shape:?}"),
                expected: len.to_string(),
                found: data.len().to_string(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        assert!(!shape.is_empty() && !shape.contains(&0), "bad shape {shape:?}");
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    /// Fills the tensor by calling `f` on every multi-index, in storage order.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let mut t = Self::zeros(shape);
        let mut idx = vec![0usize; shape.len()];
        for slot in t.data.iter_mut() {
            *slot = f(&idx);
            for (i, &n) in idx.iter_mut().zip(shape) {
                *i += 1;
                if *i < n {
                    break;
                }
                *i = 0;
            }
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut off = 0;
        for (&i, &n) in idx.iter().zip(&self.shape).rev() {
            debug_assert!(i < n);
            off = off * n + i;
        }
        off
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| alpha * v).collect(),
        }
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::DimMismatch {
                what: "tensor difference".into(),
                expected: format!("{:?}", self.shape),
                found: format!("{:?}", other.shape),
            });
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    fn check_mode(&self, k: usize) -> Result<()> {
        if k >= self.shape.len() {
            return Err(Error::InvalidArgument(format!(
                "mode {k} out of range for order-{} tensor",
                self.shape.len()
            )));
        }
        Ok(())
    }

    /// `(Π_{j<k} I_j, I_k, Π_{j>k} I_j)`.
    fn split(&self, k: usize) -> (usize, usize, usize) {
        let before = self.shape[..k].iter().product();
        let after = self.shape[k + 1..].iter().product();
        (before, self.shape[k], after)
    }

    /// Mode-k unfolding (see module docs for the column order).
    pub fn unfold(&self, k: usize) -> Result<DMatrix<f64>> {
        self.check_mode(k)?;
        let (a, n, b) = self.split(k);
        let mut m = DMatrix::zeros(n, a * b);
        for hi in 0..b {
            for i in 0..n {
                let src = &self.data[a * (i + n * hi)..][..a];
                for (lo, &v) in src.iter().enumerate() {
                    m[(i, lo + a * hi)] = v;
                }
            }
        }
        Ok(m)
    }

    /// Inverse of [`Tensor::unfold`]: rebuilds a tensor of `shape` from its mode-k unfolding.
    pub fn refold(m: &DMatrix<f64>, k: usize, shape: &[usize]) -> Result<Tensor> {
        let mut t = Tensor::zeros(shape);
        t.check_mode(k)?;
        let (a, n, b) = t.split(k);
        if m.nrows() != n || m.ncols() != a * b {
            return Err(Error::DimMismatch {
                what: format!("mode-{k} unfolding of shape {shape:?}"),
                expected: format!("{n}x{}", a * b),
                found: format!("{}x{}", m.nrows(), m.ncols()),
            });
        }
        for hi in 0..b {
            for i in 0..n {
                let dst = &mut t.data[a * (i + n * hi)..][..a];
                for (lo, v) in dst.iter_mut().enumerate() {
                    *v = m[(i, lo + a * hi)];
                }
            }
        }
        Ok(t)
    }

    /// Mode-k product `t ×_k A` with `A` of shape `J × I_k`; mode k becomes `J`.
    pub fn mode_product(&self, a_mat: &DMatrix<f64>, k: usize) -> Result<Tensor> {
        self.check_mode(k)?;
        let (a, n, b) = self.split(k);
        if a_mat.ncols() != n {
            return Err(Error::DimMismatch {
                what: format!("mode-{k} product matrix columns"),
                expected: n.to_string(),
                found: a_mat.ncols().to_string(),
            });
        }
        let j_dim = a_mat.nrows();
        let mut shape = self.shape.clone();
        shape[k] = j_dim;
        let mut out = vec![0.0; a * j_dim * b];
        for hi in 0..b {
            for j in 0..j_dim {
                let dst = &mut out[a * (j + j_dim * hi)..][..a];
                for i in 0..n {
                    let coef = a_mat[(j, i)];
                    if coef == 0.0 {
                        continue;
                    }
                    let src = &self.data[a * (i + n * hi)..][..a];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += coef * s;
                    }
                }
            }
        }
        Ok(Tensor { shape, data: out })
    }

    /// Applies `Wᵀ` along every mode that has a matrix, skipping `None` entries.
    pub fn project_modes(&self, bases: &[Option<&DMatrix<f64>>]) -> Result<Tensor> {
        if bases.len() != self.order() {
            return Err(Error::DimMismatch {
                what: "number of projection matrices".into(),
                expected: self.order().to_string(),
                found: bases.len().to_string(),
            });
        }
        let mut cur = std::borrow::Cow::Borrowed(self);
        for (k, w) in bases.iter().enumerate() {
            if let Some(w) = w {
                cur = std::borrow::Cow::Owned(cur.mode_product(&w.transpose(), k)?);
            }
        }
        Ok(cur.into_owned())
    }
}
