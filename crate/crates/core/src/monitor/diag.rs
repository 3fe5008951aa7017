use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{config, Result};
use crate::nn::{last_layer_gradient, MlpModel};
use crate::scalar::Scalar;

/// Pairwise statistics of the hidden-layer outputs `Y` within one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HlStats {
    pub class: usize,
    pub samples: usize,
    /// Mean cosine similarity over pairs where both vectors are nonzero.
    pub mean_cs: f64,
    /// Standard deviation over mean of the pairwise dot products.
    pub cov: f64,
}

fn pair_stats(ys: &[Vec<f64>]) -> (f64, f64) {
    let norms: Vec<f64> = ys.iter().map(|y| y.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let mut cs_sum = 0.0;
    let mut cs_n = 0usize;
    let mut dots = Vec::new();
    for a in 0..ys.len() {
        for b in a + 1..ys.len() {
            let dot: f64 = ys[a].iter().zip(&ys[b]).map(|(x, y)| x * y).sum();
            dots.push(dot);
            if norms[a] > 0.0 && norms[b] > 0.0 {
                cs_sum += (dot / (norms[a] * norms[b])).clamp(-1.0, 1.0);
                cs_n += 1;
            }
        }
    }
    let mean_cs = if cs_n > 0 { cs_sum / cs_n as f64 } else { f64::NAN };
    if dots.is_empty() {
        return (mean_cs, f64::NAN);
    }
    let n = dots.len() as f64;
    let mean = dots.iter().sum::<f64>() / n;
    let var = dots.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
    let cov = if mean != 0.0 { var.sqrt() / mean.abs() } else { f64::NAN };
    (mean_cs, cov)
}

/// Per class, statistics over the first `per_class` samples of that class in `data`.
pub fn hl_similarity_diagnostic<F: Scalar>(
    model: &MlpModel<F>,
    data: &Dataset<F>,
    per_class: usize,
) -> Result<Vec<HlStats>> {
    if per_class < 2 {
        return Err(config("need at least two samples per class for pairwise statistics"));
    }
    if data.dim() != model.input_dim() {
        return Err(config("dataset and model dimensions differ"));
    }
    Ok(data
        .indices_by_class()
        .iter()
        .enumerate()
        .map(|(class, idx)| {
            let ys: Vec<Vec<f64>> = idx
                .iter()
                .take(per_class)
                .map(|&i| {
                    model
                        .forward_unchecked(data.sample(i))
                        .hl_output()
                        .iter()
                        .map(|v| v.f64())
                        .collect()
                })
                .collect();
            let (mean_cs, cov) = pair_stats(&ys);
            HlStats {
                class,
                samples: ys.len(),
                mean_cs,
                cov,
            }
        })
        .collect())
}

/// Counts of (majority A, minority B, probe class C) triples for which the last-layer
/// gradient on row A, averaged over C's samples, outweighs the one on row B.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DominanceStats {
    pub triples: usize,
    pub holding: usize,
}

impl DominanceStats {
    pub fn fraction(&self) -> f64 {
        self.holding as f64 / self.triples.max(1) as f64
    }
}

/// Compares row-gradient norms over every (A, B, C) triple with `C ∉ {A, B}`, using the first
/// `per_class` samples of each probe class.
pub fn gradient_dominance<F: Scalar>(
    model: &MlpModel<F>,
    data: &Dataset<F>,
    minority: &[usize],
    per_class: usize,
) -> Result<DominanceStats> {
    let q = model.class_count();
    if data.dim() != model.input_dim() || data.class_count() != q {
        return Err(config("dataset and model shapes differ"));
    }
    if minority.is_empty() || minority.len() >= q || minority.iter().any(|&b| b >= q) {
        return Err(config("minority set must be a non-empty proper subset of the classes"));
    }
    let majority: Vec<usize> = (0..q).filter(|c| !minority.contains(c)).collect();
    let mut stats = DominanceStats { triples: 0, holding: 0 };
    for (c, idx) in data.indices_by_class().iter().enumerate() {
        let idx: Vec<usize> = idx.iter().copied().take(per_class).collect();
        if idx.is_empty() {
            continue;
        }
        let mut rows = vec![vec![0.0; model.hidden_width()]; q];
        for &i in &idx {
            let g = last_layer_gradient(&model.forward_unchecked(data.sample(i)), c)?;
            for (k, row) in rows.iter_mut().enumerate() {
                for (acc, v) in row.iter_mut().zip(g.row(k)) {
                    *acc += v.f64();
                }
            }
        }
        let norms: Vec<f64> = rows.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
        for &a in majority.iter().filter(|&&a| a != c) {
            for &b in minority.iter().filter(|&&b| b != c) {
                stats.triples += 1;
                if norms[a] > norms[b] {
                    stats.holding += 1;
                }
            }
        }
    }
    Ok(stats)
}
