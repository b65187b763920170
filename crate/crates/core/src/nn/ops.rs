//! Single-sample layer kernels. Activations are stored channel-major
//! (`[C, H, W]` flattened row-major).

use super::{gemm, Layout, Real};

/// Spatial geometry of a 3×3, padding-1 convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub cin: usize,
    pub cout: usize,
    pub h: usize,
    pub w: usize,
    pub stride: usize,
}

impl ConvGeom {
    pub const KERNEL: usize = 3;

    pub fn out_h(&self) -> usize {
        (self.h + 2 - Self::KERNEL) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.w + 2 - Self::KERNEL) / self.stride + 1
    }

    pub fn patch(&self) -> usize {
        self.cin * Self::KERNEL * Self::KERNEL
    }

    pub fn weight_len(&self) -> usize {
        self.cout * self.patch()
    }
}

fn im2col<F: Real>(g: &ConvGeom, input: &[F], cols: &mut [F]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let hw = oh * ow;
    for ci in 0..g.cin {
        let plane = &input[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[((ci * 3 + ky) * 3 + kx) * hw..][..hw];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky) as isize - 1;
                    let dst = &mut row[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= g.h as isize {
                        dst.fill(F::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - 1;
                        *d = if ix < 0 || ix >= g.w as isize {
                            F::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im<F: Real>(g: &ConvGeom, cols: &[F], dinput: &mut [F]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let hw = oh * ow;
    for ci in 0..g.cin {
        let plane = &mut dinput[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[((ci * 3 + ky) * 3 + kx) * hw..][..hw];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky) as isize - 1;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..ow {
                        let ix = (ox * g.stride + kx) as isize - 1;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += row[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Bias-free 3×3 convolution. Returns `[cout, out_h, out_w]`.
pub fn conv2d_forward<F: Real>(g: &ConvGeom, input: &[F], weight: &[F]) -> Vec<F> {
    debug_assert_eq!(input.len(), g.cin * g.h * g.w);
    debug_assert_eq!(weight.len(), g.weight_len());
    let hw = g.out_h() * g.out_w();
    let k = g.patch();
    let mut cols = vec![F::zero(); k * hw];
    im2col(g, input, &mut cols);
    let mut out = vec![F::zero(); g.cout * hw];
    gemm(
        g.cout,
        k,
        hw,
        weight,
        Layout::rm(k),
        &cols,
        Layout::rm(hw),
        F::zero(),
        &mut out,
        Layout::rm(hw),
    );
    out
}

/// Accumulates the weight gradient into `dweight` and returns the input
/// gradient when `want_dinput` is set.
pub fn conv2d_backward<F: Real>(
    g: &ConvGeom,
    input: &[F],
    weight: &[F],
    dout: &[F],
    dweight: &mut [F],
    want_dinput: bool,
) -> Option<Vec<F>> {
    let hw = g.out_h() * g.out_w();
    let k = g.patch();
    let mut cols = vec![F::zero(); k * hw];
    im2col(g, input, &mut cols);
    gemm(
        g.cout,
        hw,
        k,
        dout,
        Layout::rm(hw),
        &cols,
        Layout::rm_t(hw),
        F::one(),
        dweight,
        Layout::rm(k),
    );
    if !want_dinput {
        return None;
    }
    gemm(
        k,
        g.cout,
        hw,
        weight,
        Layout::rm_t(k),
        dout,
        Layout::rm(hw),
        F::zero(),
        &mut cols,
        Layout::rm(hw),
    );
    let mut dinput = vec![F::zero(); input.len()];
    col2im(g, &cols, &mut dinput);
    Some(dinput)
}

pub const GROUP_NORM_EPS: f64 = 1e-5;

/// Saved state of a group-norm forward pass.
#[derive(Debug, Clone)]
pub struct GroupNormCache<F> {
    pub xhat: Vec<F>,
    pub inv_std: Vec<F>,
}

/// Group normalization followed by an affine map and, optionally, ReLU.
pub fn group_norm_forward<F: Real>(
    x: &[F],
    channels: usize,
    groups: usize,
    gamma: &[F],
    beta: &[F],
    relu: bool,
) -> (Vec<F>, GroupNormCache<F>) {
    let spatial = x.len() / channels;
    let per_group = channels / groups;
    let n = per_group * spatial;
    let eps = F::from_f64_lossy(GROUP_NORM_EPS);
    let nf = F::from_usize(n).unwrap();
    let mut xhat = vec![F::zero(); x.len()];
    let mut inv_std = vec![F::zero(); groups];
    let mut y = vec![F::zero(); x.len()];
    for gi in 0..groups {
        let range = gi * n..(gi + 1) * n;
        let xs = &x[range.clone()];
        let mean = xs.iter().copied().sum::<F>() / nf;
        let var = xs.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / nf;
        let is = F::one() / (var + eps).sqrt();
        inv_std[gi] = is;
        for (j, &v) in xs.iter().enumerate() {
            let idx = range.start + j;
            let c = idx / spatial;
            let xh = (v - mean) * is;
            xhat[idx] = xh;
            let out = gamma[c] * xh + beta[c];
            y[idx] = if relu && out < F::zero() { F::zero() } else { out };
        }
    }
    (y, GroupNormCache { xhat, inv_std })
}

/// Backward of [`group_norm_forward`]. `y` is the forward output, used for
/// the ReLU mask when `relu` is set.
#[allow(clippy::too_many_arguments)]
pub fn group_norm_backward<F: Real>(
    dy: &[F],
    y: &[F],
    cache: &GroupNormCache<F>,
    channels: usize,
    groups: usize,
    gamma: &[F],
    dgamma: &mut [F],
    dbeta: &mut [F],
    relu: bool,
) -> Vec<F> {
    let spatial = dy.len() / channels;
    let n = channels / groups * spatial;
    let nf = F::from_usize(n).unwrap();
    let mut dx = vec![F::zero(); dy.len()];
    let mut dxhat = vec![F::zero(); n];
    for gi in 0..groups {
        let base = gi * n;
        let mut s1 = F::zero();
        let mut s2 = F::zero();
        for j in 0..n {
            let idx = base + j;
            let c = idx / spatial;
            let g = if relu && y[idx] <= F::zero() {
                F::zero()
            } else {
                dy[idx]
            };
            dgamma[c] += g * cache.xhat[idx];
            dbeta[c] += g;
            let d = g * gamma[c];
            dxhat[j] = d;
            s1 += d;
            s2 += d * cache.xhat[idx];
        }
        let is = cache.inv_std[gi];
        for j in 0..n {
            let idx = base + j;
            dx[idx] = is * (dxhat[j] - s1 / nf - cache.xhat[idx] * s2 / nf);
        }
    }
    dx
}

pub fn global_avg_pool<F: Real>(x: &[F], channels: usize) -> Vec<F> {
    let spatial = x.len() / channels;
    let sf = F::from_usize(spatial).unwrap();
    x.chunks_exact(spatial)
        .map(|c| c.iter().copied().sum::<F>() / sf)
        .collect()
}

pub fn global_avg_pool_backward<F: Real>(dy: &[F], spatial: usize) -> Vec<F> {
    let sf = F::from_usize(spatial).unwrap();
    dy.iter()
        .flat_map(|&d| std::iter::repeat_n(d / sf, spatial))
        .collect()
}

/// `y = W x + b` with `W` shaped `[out, in]`.
pub fn linear_forward<F: Real>(w: &[F], b: &[F], x: &[F]) -> Vec<F> {
    let n_in = x.len();
    w.chunks_exact(n_in)
        .zip(b)
        .map(|(row, &bias)| row.iter().zip(x).map(|(&a, &v)| a * v).sum::<F>() + bias)
        .collect()
}

/// Accumulates `dW`, `db`; returns `dx`.
pub fn linear_backward<F: Real>(
    w: &[F],
    x: &[F],
    dy: &[F],
    dw: &mut [F],
    db: &mut [F],
) -> Vec<F> {
    let n_in = x.len();
    let mut dx = vec![F::zero(); n_in];
    for (o, &g) in dy.iter().enumerate() {
        db[o] += g;
        let row = &w[o * n_in..(o + 1) * n_in];
        let drow = &mut dw[o * n_in..(o + 1) * n_in];
        for i in 0..n_in {
            drow[i] += g * x[i];
            dx[i] += g * row[i];
        }
    }
    dx
}

pub fn relu_inplace<F: Real>(x: &mut [F]) {
    for v in x {
        if *v < F::zero() {
            *v = F::zero();
        }
    }
}

pub fn l2_norm<F: Real>(x: &[F]) -> F {
    x.iter().map(|&v| v * v).sum::<F>().sqrt()
}

/// Gradient of `z = h / |h|` given `dz`, using the normalized output `z`.
pub fn l2_normalize_backward<F: Real>(z: &[F], norm: F, dz: &[F]) -> Vec<F> {
    let dot: F = z.iter().zip(dz).map(|(&a, &b)| a * b).sum();
    z.iter()
        .zip(dz)
        .map(|(&zi, &gi)| (gi - zi * dot) / norm)
        .collect()
}
