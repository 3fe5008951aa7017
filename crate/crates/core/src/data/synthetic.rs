use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::error::{config, Result};
use crate::scalar::Scalar;

/// Gaussian-blob dataset description; the dataset is a pure function of these fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub class_count: usize,
    pub dim: usize,
    pub per_class: usize,
    /// Minimum pairwise distance between class means.
    pub separation: f64,
    /// Per-coordinate standard deviation around each mean.
    #[serde(default = "one")]
    pub noise_std: f64,
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

/// Unit-variance Gaussian blobs whose means are pairwise at least `separation` apart.
pub fn make_synthetic<F: Scalar>(
    class_count: usize,
    dim: usize,
    per_class: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset<F>> {
    make_synthetic_from(&SyntheticSpec {
        class_count,
        dim,
        per_class,
        separation,
        noise_std: 1.0,
        seed,
    })
}

pub fn make_synthetic_from<F: Scalar>(spec: &SyntheticSpec) -> Result<Dataset<F>> {
    let SyntheticSpec {
        class_count: q,
        dim,
        per_class,
        separation,
        noise_std,
        seed,
    } = *spec;
    if q < 2 {
        return Err(config("synthetic data needs at least two classes"));
    }
    if !(separation > 0.0 && separation.is_finite()) {
        return Err(config(format!("separation must be > 0, got {separation}")));
    }
    if per_class == 0 {
        return Err(config("per_class must be >= 1"));
    }
    if dim == 0 {
        return Err(config("dim must be >= 1"));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(config("noise_std must be >= 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means = class_means(q, dim, separation, &mut rng)?;
    let mut features = Vec::with_capacity(q * per_class * dim);
    let mut labels = Vec::with_capacity(q * per_class);
    // interleave classes so a prefix of the dataset is balanced
    for _ in 0..per_class {
        for (class, mean) in means.iter().enumerate() {
            for &m in mean {
                let z: f64 = StandardNormal.sample(&mut rng);
                features.push(F::of(m + noise_std * z));
            }
            labels.push(class);
        }
    }
    Dataset::new(features, dim, labels, q)
}

fn class_means(q: usize, dim: usize, separation: f64, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    if dim >= q {
        // scaled basis vectors: every pair is exactly `separation` apart
        let a = separation / std::f64::consts::SQRT_2;
        return Ok((0..q)
            .map(|p| (0..dim).map(|k| if k == p { a } else { 0.0 }).collect())
            .collect());
    }
    // fewer dimensions than classes: rejection-sample means in a growing cube
    let mut side = separation * (q as f64).powf(1.0 / dim as f64) * 2.0;
    for _ in 0..64 {
        let mut means: Vec<Vec<f64>> = Vec::with_capacity(q);
        let mut attempts = 0;
        while means.len() < q && attempts < 10_000 {
            attempts += 1;
            let cand: Vec<f64> = (0..dim)
                .map(|_| (rand::Rng::random::<f64>(rng) - 0.5) * side)
                .collect();
            let ok = means.iter().all(|m| {
                m.iter()
                    .zip(&cand)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
                    >= separation
            });
            if ok {
                means.push(cand);
            }
        }
        if means.len() == q {
            return Ok(means);
        }
        side *= 1.5;
    }
    Err(config("could not place class means at the requested separation"))
}
