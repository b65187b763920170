//! Training objectives: the many-positive supervised contrastive loss and the
//! symmetrized BYOL prediction loss. Both return analytic gradients.

use crate::error::{Error, Result};

/// Accepted deviation of an embedding norm from 1 (f32 round-off).
pub const UNIT_NORM_TOL: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct SupConBatch<'a> {
    pub embeddings: &'a [Vec<f64>],
    pub labels: &'a [u32],
    pub temperature: f64,
}

#[derive(Debug, Clone)]
pub struct SupConOutput {
    pub loss: f64,
    pub grads: Vec<Vec<f64>>,
    /// Number of anchors that have at least one positive.
    pub anchors: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn validate_supcon(batch: &SupConBatch<'_>) -> Result<Vec<usize>> {
    let z = batch.embeddings;
    if !(batch.temperature > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "temperature must be positive, got {}",
            batch.temperature
        )));
    }
    if z.len() < 2 || z.len() != batch.labels.len() {
        return Err(Error::InvalidArgument(
            "need at least two embeddings with one label each".into(),
        ));
    }
    let d = z[0].len();
    for v in z {
        if v.len() != d {
            return Err(Error::ShapeMismatch("embeddings differ in length".into()));
        }
        if (norm(v) - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::InvalidArgument(format!(
                "embedding norm {} is not 1",
                norm(v)
            )));
        }
    }
    let anchors: Vec<usize> = (0..z.len())
        .filter(|&i| (0..z.len()).any(|j| j != i && batch.labels[j] == batch.labels[i]))
        .collect();
    if anchors.is_empty() {
        return Err(Error::NoPositivePairs);
    }
    Ok(anchors)
}

pub fn supcon_loss(batch: &SupConBatch<'_>) -> Result<f64> {
    supcon_loss_and_grad(batch).map(|o| o.loss)
}

/// Mean over anchors `i ∈ I` of
/// `-1/|P(i)| Σ_p log( exp(z_i·z_p/τ) / Σ_{a∈A(i)} exp(z_i·z_a/τ) )`
/// with `A(i) = I \ {i}`: anchors without positives take part in neither
/// numerator nor contrast set.
pub fn supcon_loss_and_grad(batch: &SupConBatch<'_>) -> Result<SupConOutput> {
    let anchors = validate_supcon(batch)?;
    let z = batch.embeddings;
    let y = batch.labels;
    let tau = batch.temperature;
    let d = z[0].len();
    let mut grads = vec![vec![0.0; d]; z.len()];
    let mut total = 0.0;
    let scale = 1.0 / anchors.len() as f64;

    let mut logits = Vec::with_capacity(anchors.len());
    for &i in &anchors {
        logits.clear();
        logits.extend(
            anchors
                .iter()
                .filter(|&&a| a != i)
                .map(|&a| (a, dot(&z[i], &z[a]) / tau)),
        );
        let max = logits.iter().map(|&(_, l)| l).fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = logits.iter().map(|&(_, l)| (l - max).exp()).sum();
        let log_denom = max + sum_exp.ln();
        let n_pos = logits.iter().filter(|&&(a, _)| y[a] == y[i]).count() as f64;

        let mut li = 0.0;
        for &(a, l) in &logits {
            let positive = y[a] == y[i];
            if positive {
                li -= (l - log_denom) / n_pos;
            }
            // dℓ_i/ds_ia, with s_ia = z_i·z_a
            let q = (l - log_denom).exp();
            let coef = scale * (q - if positive { 1.0 / n_pos } else { 0.0 }) / tau;
            for k in 0..d {
                grads[i][k] += coef * z[a][k];
                grads[a][k] += coef * z[i][k];
            }
        }
        total += li;
    }
    Ok(SupConOutput {
        loss: total * scale,
        grads,
        anchors: anchors.len(),
    })
}

/// `2 − 2·cos(p, z)`, in [0, 4].
pub fn cosine_prediction_distance(p: &[f64], z: &[f64]) -> Result<f64> {
    if p.len() != z.len() {
        return Err(Error::ShapeMismatch("vectors differ in length".into()));
    }
    let (np, nz) = (norm(p), norm(z));
    if np == 0.0 || nz == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(2.0 - 2.0 * dot(p, z) / (np * nz))
}

/// Student predictions `p1, p2` and stop-gradient target outputs `z1, z2`.
#[derive(Debug, Clone)]
pub struct ByolViewBatch<'a> {
    pub p1: &'a [Vec<f64>],
    pub p2: &'a [Vec<f64>],
    pub z1: &'a [Vec<f64>],
    pub z2: &'a [Vec<f64>],
}

#[derive(Debug, Clone)]
pub struct ByolOutput {
    pub loss: f64,
    pub dp1: Vec<Vec<f64>>,
    pub dp2: Vec<Vec<f64>>,
    /// Always zero: target outputs sit behind a stop-gradient.
    pub dz1: Vec<Vec<f64>>,
    pub dz2: Vec<Vec<f64>>,
}

pub fn byol_loss(batch: &ByolViewBatch<'_>) -> Result<f64> {
    byol_loss_and_grad(batch).map(|o| o.loss)
}

fn distance_grad_p(p: &[f64], z: &[f64]) -> Vec<f64> {
    let (np, nz) = (norm(p), norm(z));
    let c = dot(p, z);
    p.iter()
        .zip(z)
        .map(|(&pi, &zi)| -2.0 * (zi / (np * nz) - c * pi / (np * np * np * nz)))
        .collect()
}

/// `1/B' Σ_i [D(p1_i, z2_i) + D(p2_i, z1_i)]`, in [0, 8].
pub fn byol_loss_and_grad(batch: &ByolViewBatch<'_>) -> Result<ByolOutput> {
    let n = batch.p1.len();
    if n == 0 || batch.p2.len() != n || batch.z1.len() != n || batch.z2.len() != n {
        return Err(Error::InvalidArgument(
            "BYOL batch needs four equal-length, non-empty lists".into(),
        ));
    }
    let inv = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut dp1 = Vec::with_capacity(n);
    let mut dp2 = Vec::with_capacity(n);
    for i in 0..n {
        loss += cosine_prediction_distance(&batch.p1[i], &batch.z2[i])?;
        loss += cosine_prediction_distance(&batch.p2[i], &batch.z1[i])?;
        dp1.push(
            distance_grad_p(&batch.p1[i], &batch.z2[i])
                .into_iter()
                .map(|g| g * inv)
                .collect(),
        );
        dp2.push(
            distance_grad_p(&batch.p2[i], &batch.z1[i])
                .into_iter()
                .map(|g| g * inv)
                .collect(),
        );
    }
    let zeros = |zs: &[Vec<f64>]| zs.iter().map(|z| vec![0.0; z.len()]).collect();
    Ok(ByolOutput {
        loss: loss * inv,
        dp1,
        dp2,
        dz1: zeros(batch.z1),
        dz2: zeros(batch.z2),
    })
}
