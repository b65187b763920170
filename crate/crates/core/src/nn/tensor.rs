use crate::error::{Error, Result};

use super::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    pub shape: Vec<usize>,
    pub data: Vec<F>,
}

impl<F: Real> Tensor<F> {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![F::zero(); shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<F>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn cast<G: Real>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|v| G::from_f64_lossy(v.as_f64()))
                .collect(),
        }
    }
}

/// Ordered collection of named tensors. Order is significant: it fixes the
/// serialization layout and the iteration order of optimizers.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<F> {
    names: Vec<String>,
    tensors: Vec<Tensor<F>>,
}

impl<F> Default for ParamSet<F> {
    fn default() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }
}

impl<F: Real> ParamSet<F> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a tensor and returns its index.
    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor<F>) -> usize {
        self.names.push(name.into());
        self.tensors.push(tensor);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensor(&self, idx: usize) -> &Tensor<F> {
        &self.tensors[idx]
    }

    pub fn tensor_mut(&mut self, idx: usize) -> &mut Tensor<F> {
        &mut self.tensors[idx]
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<F>> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.tensors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<F>)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter())
    }

    pub fn tensors(&self) -> &[Tensor<F>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<F>] {
        &mut self.tensors
    }

    pub fn num_elements(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| Tensor::zeros(&t.shape)).collect(),
        }
    }

    pub fn cast<G: Real>(&self) -> ParamSet<G> {
        ParamSet {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }

    /// Checks that names and shapes agree with `other`.
    pub fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.names != other.names {
            return Err(Error::ShapeMismatch(
                "parameter sets have different tensor names".into(),
            ));
        }
        for ((name, a), b) in self.names.iter().zip(&self.tensors).zip(&other.tensors) {
            if a.shape != b.shape {
                return Err(Error::ShapeMismatch(format!(
                    "{name}: {:?} vs {:?}",
                    a.shape, b.shape
                )));
            }
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, &y) in a.data.iter_mut().zip(&b.data) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: F) {
        for t in &mut self.tensors {
            for x in &mut t.data {
                *x *= s;
            }
        }
    }

    pub fn fill_zero(&mut self) {
        for t in &mut self.tensors {
            t.data.fill(F::zero());
        }
    }

    /// Global L2 norm over all entries, accumulated in f64.
    pub fn global_norm(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.data.iter())
            .map(|v| {
                let v = v.as_f64();
                v * v
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors
            .iter()
            .all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.data.iter())
            .fold(0.0f64, |m, v| m.max(v.as_f64().abs()))
    }

    /// Flat entry access across all tensors, in order.
    pub fn flat_get(&self, mut i: usize) -> F {
        for t in &self.tensors {
            if i < t.len() {
                return t.data[i];
            }
            i -= t.len();
        }
        panic!("flat index out of range")
    }

    pub fn flat_set(&mut self, mut i: usize, v: F) {
        for t in &mut self.tensors {
            if i < t.len() {
                t.data[i] = v;
                return;
            }
            i -= t.len();
        }
        panic!("flat index out of range")
    }
}
