//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ratiofl::data::ClientShard;
use ratiofl::federation::RoundDelta;
use ratiofl::losses::ce_loss;
use ratiofl::monitor::{estimate_counts, EstimateScale, ProbeResult, RatioMatrix};
use ratiofl::nn::{init_model, last_layer_gradient, Activation, DenseLayer, GradientSet, Matrix, MlpModel, ModelSpec};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

/// A small model with random shape, activation and weights.
pub fn random_model(seed: u64) -> MlpModel<f64> {
    let mut r = rng(seed);
    let depth = r.random_range(1..=2);
    let spec = ModelSpec {
        input_dim: r.random_range(3..=7),
        hidden: (0..depth).map(|_| r.random_range(2..=6)).collect(),
        activation: if r.random_bool(0.5) { Activation::Relu } else { Activation::Sigmoid },
        class_count: r.random_range(2..=5),
    };
    let mut m = init_model(&spec, seed).unwrap();
    // Random biases so logits are not all near zero.
    let mut bump = GradientSet::zeros_like(&m);
    for v in bump.values_mut() {
        *v = r.random_range(-0.5..0.5);
    }
    m.apply_scaled(&bump, 1.0).unwrap();
    m
}

fn ce_at(model: &MlpModel<f64>, x: &[f64], y: usize) -> f64 {
    let t = model.forward(x).unwrap();
    ce_loss(&t.probs, y).unwrap().loss
}

/// Largest relative gap between backprop and central differences of the CE loss over
/// every parameter, for one random input.
pub fn fd_relative_error(model: &MlpModel<f64>, seed: u64) -> f64 {
    let mut r = rng(seed ^ 0xfd);
    let x = random_vec(&mut r, model.input_dim());
    let y = r.random_range(0..model.class_count());
    let trace = model.forward(&x).unwrap();
    let g = model.backward(&trace, &ce_loss(&trace.probs, y).unwrap().grad_logits).unwrap();
    let analytic: Vec<f64> = g.values().collect();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (j, &a) in analytic.iter().enumerate() {
        let mut e = GradientSet::zeros_like(model);
        *e.values_mut().nth(j).unwrap() = 1.0;
        let mut plus = model.clone();
        plus.apply_scaled(&e, h).unwrap();
        let mut minus = model.clone();
        minus.apply_scaled(&e, -h).unwrap();
        let n = (ce_at(&plus, &x, y) - ce_at(&minus, &x, y)) / (2.0 * h);
        worst = worst.max((a - n).abs() / (a.abs() + n.abs()).max(1e-6));
    }
    worst
}

/// Builds two different inputs that the model maps to the same hidden output by zeroing
/// the first-layer column of input 0, then returns the largest gap between the two
/// last-layer gradients.
pub fn identical_hidden_gap(seed: u64) -> f64 {
    let mut r = rng(seed);
    let base = random_model(seed);
    let mut layers: Vec<DenseLayer<f64>> = base.layers().to_vec();
    for row in 0..layers[0].weights.rows() {
        layers[0].weights.set(row, 0, 0.0);
    }
    let m = MlpModel::new(layers).unwrap();
    let x1 = random_vec(&mut r, m.input_dim());
    let mut x2 = x1.clone();
    x2[0] += 5.0;
    let y = r.random_range(0..m.class_count());
    let (t1, t2) = (m.forward(&x1).unwrap(), m.forward(&x2).unwrap());
    assert_eq!(t1.hl_output(), t2.hl_output());
    let g1 = last_layer_gradient(&t1, y).unwrap();
    let g2 = last_layer_gradient(&t2, y).unwrap();
    g1.max_abs_diff(&g2)
}

/// Plants counts, probe deltas and ratios, synthesizes the aggregated update from the
/// forward relation and returns the largest relative error of the recovered counts.
pub fn planted_roundtrip(seed: u64) -> f64 {
    let mut r = rng(seed);
    let q = r.random_range(2..=12);
    let s = r.random_range(1..=8);
    let k = r.random_range(1..=30);
    let scale = if r.random_bool(0.5) {
        EstimateScale::Literal { aux_per_class: r.random_range(1..=64) }
    } else {
        EstimateScale::StepMatched { batch_size: r.random_range(1..=64), local_epochs: r.random_range(1..=5) }
    };
    let counts: Vec<f64> = (0..q).map(|_| r.random_range(1..=2000) as f64).collect();
    let total: f64 = counts.iter().sum();
    let signed = |r: &mut ChaCha8Rng, lo: f64, hi: f64| {
        let v = r.random_range(lo..hi);
        if r.random_bool(0.5) { v } else { -v }
    };
    let per_class: Vec<Matrix<f64>> = (0..q)
        .map(|_| Matrix::from_vec(q, s, (0..q * s).map(|_| signed(&mut r, 0.01, 1.0)).collect()).unwrap())
        .collect();
    let ra = Matrix::from_vec(q, s, (0..q * s).map(|_| signed(&mut r, 1.5, 20.0)).collect()).unwrap();
    let factor = scale.factor(k).unwrap();
    let mut last = Matrix::zeros(q, s);
    for p in 0..q {
        for i in 0..s {
            let dw = per_class[p].get(p, i);
            let other = dw / ra.get(p, i);
            last.set(p, i, (dw * counts[p] + (total - counts[p]) * other) / factor);
        }
    }
    let probe = ProbeResult { per_class };
    let ratio = RatioMatrix { values: ra, valid: vec![true; q * s] };
    let surviving: Vec<Vec<usize>> = (0..q).map(|_| (0..s).collect()).collect();
    let delta = RoundDelta { round: 1, last_layer: last, sum_total_samples: total as usize, clients: k };
    let est = estimate_counts(&probe, &ratio, &surviving, &delta, scale).unwrap();
    est.counts.iter().zip(&counts).map(|(e, c)| (e - c).abs() / c).fold(0.0, f64::max)
}

pub fn shard_counts(shards: &[ClientShard]) -> Vec<usize> {
    shards.iter().map(|s| s.total).collect()
}
