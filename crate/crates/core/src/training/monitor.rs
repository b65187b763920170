//! Collapse diagnostics over a batch of embeddings.

use nalgebra::DMatrix;

/// Mean cosine over all unordered pairs. Values near 1 indicate collapse.
pub fn mean_pairwise_cosine(zs: &[Vec<f32>]) -> f64 {
    let n = zs.len();
    if n < 2 {
        return 0.0;
    }
    let unit: Vec<Vec<f64>> = zs
        .iter()
        .map(|z| {
            let n = z.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>().sqrt();
            z.iter().map(|&v| f64::from(v) / n.max(f64::MIN_POSITIVE)).collect()
        })
        .collect();
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            sum += unit[i].iter().zip(&unit[j]).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    sum / (n * (n - 1) / 2) as f64
}

/// Eigenvalues of the embedding covariance, largest first.
pub fn covariance_spectrum(zs: &[Vec<f32>]) -> Vec<f64> {
    let n = zs.len();
    if n == 0 {
        return Vec::new();
    }
    let d = zs[0].len();
    let x = DMatrix::from_fn(n, d, |i, j| f64::from(zs[i][j]));
    let mean = x.row_mean();
    let centered = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / n.max(2).saturating_sub(1) as f64;
    let mut ev: Vec<f64> = cov.symmetric_eigen().eigenvalues.iter().map(|v| v.max(0.0)).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Count of eigenvalues above `rel` times the largest one.
pub fn effective_rank(spectrum: &[f64], rel: f64) -> usize {
    match spectrum.first() {
        Some(&top) if top > 0.0 => spectrum.iter().filter(|&&v| v > rel * top).count(),
        _ => 0,
    }
}
