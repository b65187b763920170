//! The simple CNN backbone: four blocks of (3×3 conv → group norm → ReLU),
//! stride-2 downsampling at the first conv of blocks 2–4, global average
//! pooling and a linear head. The final conv unit skips its ReLU so pooled
//! features are signed. Embeddings are L2-normalized head outputs.

use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::glyph::{Bitmap, CANVAS};
use crate::nn::{
    conv2d_backward, conv2d_forward, global_avg_pool, global_avg_pool_backward,
    group_norm_backward, group_norm_forward, l2_norm, l2_normalize_backward, linear_backward,
    linear_forward, ConvGeom, GroupNormCache, ParamSet, Real, Tensor,
};
use crate::{parallel, seed};

use super::EncoderConfig;

/// Images per gradient-accumulation chunk. Fixed so the reduction order
/// does not depend on the thread count.
const GRAD_CHUNK: usize = 8;

/// Activation memory allowed for keeping forward tapes across a batch;
/// above this the backward pass recomputes each forward.
const TAPE_BUDGET_BYTES: usize = 768 << 20;

#[derive(Debug, Clone)]
struct ConvUnit {
    geom: ConvGeom,
    groups: usize,
    weight: usize,
    gamma: usize,
    beta: usize,
    relu: bool,
}

/// Layer plan of the backbone; parameters live in a separate [`ParamSet`].
#[derive(Debug, Clone)]
pub struct Network {
    units: Vec<ConvUnit>,
    head_w: usize,
    head_b: usize,
    head_in: usize,
    dim: usize,
    names: Vec<(String, Vec<usize>)>,
}

/// Saved activations of one forward pass.
#[derive(Debug, Clone)]
pub struct Tape<F> {
    acts: Vec<Vec<F>>,
    norms: Vec<GroupNormCache<F>>,
    pooled: Vec<F>,
    pub z: Vec<F>,
    pub norm: F,
    pub fallback: bool,
}

/// Output of an inference pass.
#[derive(Debug, Clone)]
pub struct Forward<F> {
    pub z: Vec<F>,
    pub fallback: bool,
}

fn largest_divisor_at_most(n: usize, cap: usize) -> usize {
    (1..=cap.min(n)).rev().find(|g| n.is_multiple_of(*g)).unwrap_or(1)
}

pub(crate) fn bitmap_input<F: Real>(img: &Bitmap) -> Vec<F> {
    img.to_f32().into_iter().map(|v| F::from_f32(v).unwrap()).collect()
}

impl Network {
    pub fn new(cfg: &EncoderConfig) -> Result<Self> {
        cfg.validate()?;
        let mut units = Vec::new();
        let mut names = Vec::new();
        let (mut cin, mut h) = (1usize, CANVAS);
        for (b, &cout) in cfg.widths.iter().enumerate() {
            for i in 0..cfg.convs_per_block {
                let stride = if b > 0 && i == 0 { 2 } else { 1 };
                let geom = ConvGeom {
                    cin,
                    cout,
                    h,
                    w: h,
                    stride,
                };
                let base = names.len();
                names.push((format!("block{b}.conv{i}.weight"), vec![cout, cin, 3, 3]));
                names.push((format!("block{b}.norm{i}.gamma"), vec![cout]));
                names.push((format!("block{b}.norm{i}.beta"), vec![cout]));
                units.push(ConvUnit {
                    geom,
                    groups: largest_divisor_at_most(cout, cfg.norm_groups),
                    weight: base,
                    gamma: base + 1,
                    beta: base + 2,
                    relu: true,
                });
                cin = cout;
                h = geom.out_h();
            }
        }
        // the last unit feeds the pooling layer without a ReLU
        if let Some(u) = units.last_mut() {
            u.relu = false;
        }
        let head_w = names.len();
        names.push(("head.weight".into(), vec![cfg.embedding_dim, cin]));
        names.push(("head.bias".into(), vec![cfg.embedding_dim]));
        Ok(Self {
            units,
            head_w,
            head_b: head_w + 1,
            head_in: cin,
            dim: cfg.embedding_dim,
            names,
        })
    }

    pub fn embedding_dim(&self) -> usize {
        self.dim
    }

    /// Tensor names and shapes in storage order.
    pub fn layout(&self) -> &[(String, Vec<usize>)] {
        &self.names
    }

    pub fn init_params(&self, master_seed: u64) -> ParamSet<f32> {
        let mut ps = ParamSet::new();
        for (idx, (name, shape)) in self.names.iter().enumerate() {
            let n: usize = shape.iter().product();
            let data: Vec<f32> = if name.ends_with(".gamma") {
                vec![1.0; n]
            } else if name.ends_with(".beta") || name.ends_with(".bias") {
                vec![0.0; n]
            } else {
                let fan_in: usize = shape[1..].iter().product();
                let std = if name.starts_with("head") {
                    (1.0 / fan_in as f64).sqrt()
                } else {
                    (2.0 / fan_in as f64).sqrt()
                };
                let dist = Normal::new(0.0, std).expect("valid std");
                let mut rng = seed::rng_for(master_seed, &[idx as u64]);
                (0..n).map(|_| dist.sample(&mut rng) as f32).collect()
            };
            ps.push(name.clone(), Tensor::from_vec(shape, data).expect("shape"));
        }
        ps
    }

    /// Rough activation bytes a tape holds for one image.
    pub fn tape_bytes<F>(&self) -> usize {
        let per_unit: usize = self
            .units
            .iter()
            .map(|u| 2 * u.geom.cout * u.geom.out_h() * u.geom.out_w())
            .sum();
        (per_unit + CANVAS * CANVAS) * std::mem::size_of::<F>()
    }

    fn run<F: Real>(&self, p: &ParamSet<F>, input: Vec<F>, keep: bool) -> Tape<F> {
        let mut acts = vec![input];
        let mut norms = Vec::with_capacity(self.units.len());
        for u in &self.units {
            let x = acts.last().expect("input");
            let pre = conv2d_forward(&u.geom, x, &p.tensor(u.weight).data);
            let (y, cache) = group_norm_forward(
                &pre,
                u.geom.cout,
                u.groups,
                &p.tensor(u.gamma).data,
                &p.tensor(u.beta).data,
                u.relu,
            );
            if keep {
                norms.push(cache);
            } else {
                acts.clear();
            }
            acts.push(y);
        }
        let last = acts.last().expect("activation");
        let pooled = global_avg_pool(last, self.head_in);
        let raw = linear_forward(&p.tensor(self.head_w).data, &p.tensor(self.head_b).data, &pooled);
        let norm = l2_norm(&raw);
        let tiny = F::from_f64_lossy(1e-12);
        let (z, fallback) = if norm > tiny && norm.is_finite() {
            (raw.iter().map(|&v| v / norm).collect(), false)
        } else {
            let mut e = vec![F::zero(); raw.len()];
            e[0] = F::one();
            (e, true)
        };
        if !keep {
            acts.clear();
        }
        Tape {
            acts,
            norms,
            pooled,
            z,
            norm,
            fallback,
        }
    }

    /// Forward pass that records everything needed by [`Network::backward`].
    pub fn forward<F: Real>(&self, p: &ParamSet<F>, img: &Bitmap) -> Tape<F> {
        self.run(p, bitmap_input(img), true)
    }

    pub fn forward_input<F: Real>(&self, p: &ParamSet<F>, input: Vec<F>) -> Tape<F> {
        self.run(p, input, true)
    }

    pub fn infer<F: Real>(&self, p: &ParamSet<F>, img: &Bitmap) -> Forward<F> {
        let t = self.run(p, bitmap_input(img), false);
        Forward {
            z: t.z,
            fallback: t.fallback,
        }
    }

    pub fn embed_batch<F: Real>(&self, p: &ParamSet<F>, images: &[&Bitmap]) -> Vec<Forward<F>> {
        parallel::map(images, |img| self.infer(p, img))
    }

    /// Accumulates parameter gradients given `dz`, the gradient with respect
    /// to the normalized embedding.
    pub fn backward<F: Real>(
        &self,
        p: &ParamSet<F>,
        tape: &Tape<F>,
        dz: &[F],
        grads: &mut ParamSet<F>,
    ) {
        if tape.fallback {
            return;
        }
        let draw = l2_normalize_backward(&tape.z, tape.norm, dz);
        let (dw, db) = split_two(grads, self.head_w, self.head_b);
        let dpooled = linear_backward(&p.tensor(self.head_w).data, &tape.pooled, &draw, dw, db);
        let last = self.units.last().expect("units");
        let spatial = last.geom.out_h() * last.geom.out_w();
        let mut dy = global_avg_pool_backward(&dpooled, spatial);
        for (k, u) in self.units.iter().enumerate().rev() {
            let y = &tape.acts[k + 1];
            let (dgamma, dbeta) = split_two(grads, u.gamma, u.beta);
            let dpre = group_norm_backward(
                &dy,
                y,
                &tape.norms[k],
                u.geom.cout,
                u.groups,
                &p.tensor(u.gamma).data,
                dgamma,
                dbeta,
                u.relu,
            );
            let dx = conv2d_backward(
                &u.geom,
                &tape.acts[k],
                &p.tensor(u.weight).data,
                &dpre,
                &mut grads.tensor_mut(u.weight).data,
                k > 0,
            );
            if let Some(dx) = dx {
                dy = dx;
            }
        }
    }

    /// One differentiable pass over a batch: forward every image, hand the
    /// normalized embeddings to `loss`, which returns the scalar loss and
    /// `dL/dz` per image, then backpropagate. Gradients are summed in a
    /// thread-count-independent order.
    pub fn loss_and_grads<F, L>(
        &self,
        p: &ParamSet<F>,
        images: &[&Bitmap],
        loss: L,
    ) -> Result<(f64, ParamSet<F>)>
    where
        F: Real,
        L: FnOnce(&[Vec<F>]) -> Result<(f64, Vec<Vec<F>>)>,
    {
        let keep = self.tape_bytes::<F>() * images.len() <= TAPE_BUDGET_BYTES;
        let tapes: Vec<Tape<F>> = if keep {
            parallel::map(images, |img| self.forward(p, img))
        } else {
            parallel::map(images, |img| self.run(p, bitmap_input(img), false))
        };
        let zs: Vec<Vec<F>> = tapes.iter().map(|t| t.z.clone()).collect();
        let (value, dz) = loss(&zs)?;
        let n_chunks = images.len().div_ceil(GRAD_CHUNK);
        let partial = parallel::map_indexed(n_chunks, |c| {
            let mut g = p.zeros_like();
            let lo = c * GRAD_CHUNK;
            let hi = (lo + GRAD_CHUNK).min(images.len());
            for i in lo..hi {
                if keep {
                    self.backward(p, &tapes[i], &dz[i], &mut g);
                } else {
                    let t = self.forward(p, images[i]);
                    self.backward(p, &t, &dz[i], &mut g);
                }
            }
            g
        });
        let mut total = p.zeros_like();
        for g in &partial {
            total.add_assign(g);
        }
        Ok((value, total))
    }
}

fn split_two<F: Real>(ps: &mut ParamSet<F>, a: usize, b: usize) -> (&mut [F], &mut [F]) {
    assert!(a < b);
    let ts = ps.tensors_mut();
    let (lo, hi) = ts.split_at_mut(b);
    (&mut lo[a].data, &mut hi[0].data)
}
