use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{config, structural, Result};
use crate::scalar::Scalar;

/// Labelled samples stored as a flat row-major `N × d` feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<F: Scalar> {
    features: Vec<F>,
    dim: usize,
    labels: Vec<usize>,
    class_count: usize,
}

impl<F: Scalar> Dataset<F> {
    pub fn new(features: Vec<F>, dim: usize, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(structural("dataset needs at least one sample"));
        }
        if dim == 0 || features.len() != labels.len() * dim {
            return Err(structural(format!(
                "{} feature values for {} samples of width {dim}",
                features.len(),
                labels.len()
            )));
        }
        if class_count < 2 {
            return Err(config("dataset needs at least two classes"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(structural(format!("label {bad} outside 0..{class_count}")));
        }
        Ok(Self {
            features,
            dim,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    #[inline]
    pub fn sample(&self, i: usize) -> &[F] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Sample indices grouped by class, ascending within each class.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.class_count];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    /// Copies the given samples into a new dataset with the same class count.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(crate::Error::Index {
                    what: "sample",
                    index: i,
                    len: self.len(),
                });
            }
            features.extend_from_slice(self.sample(i));
            labels.push(self.labels[i]);
        }
        Self::new(features, self.dim, labels, self.class_count)
    }

    /// Draws `per_class` random samples of every class (seeded) and returns
    /// `(drawn, remaining)` index lists, both ascending.
    pub fn stratified_split(&self, per_class: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut drawn = Vec::new();
        let mut rest = Vec::new();
        for (class, mut pool) in self.indices_by_class().into_iter().enumerate() {
            if pool.len() < per_class {
                return Err(config(format!(
                    "class {class} has {} samples, {per_class} requested",
                    pool.len()
                )));
            }
            pool.shuffle(&mut rng);
            drawn.extend_from_slice(&pool[..per_class]);
            rest.extend_from_slice(&pool[per_class..]);
        }
        drawn.sort_unstable();
        rest.sort_unstable();
        Ok((drawn, rest))
    }
}
