//! Two-layer MLP predictor `d → hidden → d` applied to backbone embeddings.

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::nn::{linear_backward, linear_forward, relu_inplace, ParamSet, Real, Tensor};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorParams {
    pub dim: usize,
    pub hidden: usize,
    pub tensors: ParamSet<f32>,
}

/// Hidden activation kept for the backward pass.
#[derive(Debug, Clone)]
pub struct PredictorCache<F> {
    hidden: Vec<F>,
}

const FC1_W: usize = 0;
const FC1_B: usize = 1;
const FC2_W: usize = 2;
const FC2_B: usize = 3;

impl PredictorParams {
    pub fn init(dim: usize, hidden: usize, master_seed: u64) -> Result<Self> {
        if dim == 0 || hidden == 0 {
            return Err(Error::InvalidArgument(
                "predictor widths must be > 0".into(),
            ));
        }
        let mut tensors = ParamSet::new();
        for (idx, (name, shape)) in [
            ("fc1.weight", vec![hidden, dim]),
            ("fc1.bias", vec![hidden]),
            ("fc2.weight", vec![dim, hidden]),
            ("fc2.bias", vec![dim]),
        ]
        .into_iter()
        .enumerate()
        {
            let n: usize = shape.iter().product();
            let data = if name.ends_with("bias") {
                vec![0.0f32; n]
            } else {
                let dist = Normal::new(0.0, (2.0 / shape[1] as f64).sqrt()).expect("std");
                let mut rng = seed::rng_for(master_seed, &[0x7072_6564, idx as u64]);
                (0..n).map(|_| dist.sample(&mut rng) as f32).collect()
            };
            tensors.push(name, Tensor::from_vec(&shape, data)?);
        }
        Ok(Self {
            dim,
            hidden,
            tensors,
        })
    }

    /// Identity-initialized layers with zero bias; requires `hidden == dim`.
    pub fn identity(dim: usize) -> Self {
        let mut p = Self::init(dim, dim, 0).expect("dims");
        for idx in [FC1_W, FC2_W] {
            let t = p.tensors.tensor_mut(idx);
            t.data.fill(0.0);
            for i in 0..dim {
                t.data[i * dim + i] = 1.0;
            }
        }
        p
    }

    pub fn forward(&self, z: &[f32]) -> Result<Vec<f32>> {
        self.forward_mode(z, true)
    }

    /// `activation = false` bypasses the hidden ReLU (test mode).
    pub fn forward_mode(&self, z: &[f32], activation: bool) -> Result<Vec<f32>> {
        if z.len() != self.dim {
            return Err(Error::ShapeMismatch(format!(
                "predictor expects length {}, got {}",
                self.dim,
                z.len()
            )));
        }
        Ok(forward(&self.tensors, z, activation).0)
    }
}

pub(crate) fn forward<F: Real>(
    p: &ParamSet<F>,
    z: &[F],
    activation: bool,
) -> (Vec<F>, PredictorCache<F>) {
    let mut hidden = linear_forward(&p.tensor(FC1_W).data, &p.tensor(FC1_B).data, z);
    if activation {
        relu_inplace(&mut hidden);
    }
    let out = linear_forward(&p.tensor(FC2_W).data, &p.tensor(FC2_B).data, &hidden);
    (out, PredictorCache { hidden })
}

/// Accumulates predictor gradients; returns the gradient w.r.t. the input.
pub(crate) fn backward<F: Real>(
    p: &ParamSet<F>,
    z: &[F],
    cache: &PredictorCache<F>,
    dout: &[F],
    grads: &mut ParamSet<F>,
) -> Vec<F> {
    let mut dh = {
        let ts = grads.tensors_mut();
        let (lo, hi) = ts.split_at_mut(FC2_B);
        linear_backward(
            &p.tensor(FC2_W).data,
            &cache.hidden,
            dout,
            &mut lo[FC2_W].data,
            &mut hi[0].data,
        )
    };
    for (d, &h) in dh.iter_mut().zip(&cache.hidden) {
        if h <= F::zero() {
            *d = F::zero();
        }
    }
    let ts = grads.tensors_mut();
    let (lo, hi) = ts.split_at_mut(FC1_B);
    linear_backward(&p.tensor(FC1_W).data, z, &dh, &mut lo[FC1_W].data, &mut hi[0].data)
}
