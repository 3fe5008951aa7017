use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::RoundConfig;
use crate::data::{ClientShard, Dataset};
use crate::error::{config, Error, Result};
use crate::losses::{batch_loss, GhmcState, LossConfig, RatioVector};
use crate::nn::{GradientSet, MlpModel};
use crate::scalar::Scalar;
use crate::seed::{derive, stream};

/// What a client sends back to the server. Only the sample total travels with the
/// weights; per-class counts never leave the client.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate<F: Scalar> {
    pub client_id: usize,
    /// Local model minus the broadcast global model.
    pub weight_delta: GradientSet<F>,
    /// `Σ_p N_p^j`.
    pub total_samples: usize,
}

/// Client-side training statistics. Kept by the simulator for logging only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalStats {
    /// Mean of the batch objectives over all steps (0 when no step was taken).
    pub mean_loss: f64,
    pub steps: usize,
    /// Some `f_p` hit the probability floor.
    pub clamped: bool,
}

/// `N_ep` epochs of mini-batch SGD on the client's shard, starting from `global`.
pub fn local_train<F: Scalar>(
    global: &MlpModel<F>,
    data: &Dataset<F>,
    shard: &ClientShard,
    loss_cfg: &LossConfig,
    ratios: Option<&RatioVector<F>>,
    cfg: &RoundConfig,
    round: usize,
) -> Result<ClientUpdate<F>> {
    local_train_with_stats(global, data, shard, loss_cfg, ratios, cfg, round).map(|(u, _)| u)
}

pub fn local_train_with_stats<F: Scalar>(
    global: &MlpModel<F>,
    data: &Dataset<F>,
    shard: &ClientShard,
    loss_cfg: &LossConfig,
    ratios: Option<&RatioVector<F>>,
    cfg: &RoundConfig,
    round: usize,
) -> Result<(ClientUpdate<F>, LocalStats)> {
    if shard.indices.is_empty() {
        return Err(config(format!("client {} has an empty shard", shard.client_id)));
    }
    if cfg.batch_size == 0 {
        return Err(config("batch_size must be >= 1"));
    }
    let diverged = |batch: usize, msg: String| Error::Diverged {
        round,
        client: shard.client_id,
        batch,
        msg,
    };
    let lr = F::of(cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(derive(
        cfg.seed,
        &[stream::LOCAL, round as u64, shard.client_id as u64],
    ));
    let mut local = global.clone();
    let mut grads = GradientSet::zeros_like(&local);
    let mut ghmc = GhmcState::default();
    let mut order = shard.indices.clone();
    let mut loss_sum = 0.0;
    let mut steps = 0;
    let mut clamped = false;
    let mut batch_no = 0;
    for _ in 0..cfg.local_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let traces: Vec<_> = batch
                .iter()
                .map(|&i| local.forward_unchecked(data.sample(i)))
                .collect();
            let probs: Vec<Vec<F>> = traces.iter().map(|t| t.probs.clone()).collect();
            let labels: Vec<usize> = batch.iter().map(|&i| data.label(i)).collect();
            let bl = batch_loss(loss_cfg, &probs, &labels, ratios, Some(&mut ghmc))?;
            if !bl.loss.is_finite() {
                return Err(diverged(batch_no, format!("non-finite loss {}", bl.loss)));
            }
            for g in grads.values_mut() {
                *g = F::zero();
            }
            grads.batch_size = 0;
            for (t, lg) in traces.iter().zip(&bl.grads) {
                local.backward_accumulate(t, lg, &mut grads)?;
            }
            local
                .apply_sgd(&grads, lr)
                .map_err(|e| diverged(batch_no, e.to_string()))?;
            loss_sum += bl.loss.f64();
            clamped |= bl.clamped;
            steps += 1;
            batch_no += 1;
        }
    }
    let update = ClientUpdate {
        client_id: shard.client_id,
        weight_delta: local.delta_from(global)?,
        total_samples: shard.total,
    };
    let stats = LocalStats {
        mean_loss: if steps > 0 { loss_sum / steps as f64 } else { 0.0 },
        steps,
        clamped,
    };
    Ok((update, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{ce_loss, LossKind};
    use crate::nn::{init_model, ModelSpec};

    fn setup() -> (MlpModel<f64>, Dataset<f64>) {
        let spec = ModelSpec {
            input_dim: 3,
            hidden: vec![5],
            activation: crate::nn::Activation::Relu,
            class_count: 3,
        };
        let m = init_model(&spec, 2).unwrap();
        let d = Dataset::new(
            vec![0.5, -0.1, 0.3, 0.2, 0.9, -0.4, -0.6, 0.1, 0.8],
            3,
            vec![0, 1, 2],
            3,
        )
        .unwrap();
        (m, d)
    }

    fn cfg(epochs: usize) -> RoundConfig {
        RoundConfig {
            clients_total: 2,
            clients_selected: 1,
            local_epochs: epochs,
            batch_size: 32,
            learning_rate: 0.05,
            ..RoundConfig::default()
        }
    }

    #[test]
    fn zero_epochs_zero_delta() {
        let (m, d) = setup();
        let shard = ClientShard::from_indices(0, vec![0, 1], &d);
        let u = local_train(&m, &d, &shard, &LossConfig::default(), None, &cfg(0), 1).unwrap();
        assert!(u.weight_delta.is_zero());
        assert_eq!(u.total_samples, 2);
    }

    #[test]
    fn single_sample_single_step() {
        let (m, d) = setup();
        let shard = ClientShard::from_indices(0, vec![1], &d);
        let u = local_train(&m, &d, &shard, &LossConfig::default(), None, &cfg(1), 1).unwrap();
        let t = m.forward(d.sample(1)).unwrap();
        let g = m.backward(&t, &ce_loss(&t.probs, 1).unwrap().grad_logits).unwrap();
        let mut expected = g.clone();
        expected.scale(-0.05);
        assert!(u.weight_delta.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn identical_shards_identical_updates() {
        let (m, d) = setup();
        let a = ClientShard::from_indices(3, vec![0, 1, 2], &d);
        let c = cfg(3);
        let u1 = local_train(&m, &d, &a, &LossConfig::default(), None, &c, 4).unwrap();
        let u2 = local_train(&m, &d, &a, &LossConfig::default(), None, &c, 4).unwrap();
        assert_eq!(u1, u2);
    }

    #[test]
    fn ratio_loss_without_vector_is_config_error() {
        let (m, d) = setup();
        let a = ClientShard::from_indices(0, vec![0], &d);
        let loss = LossConfig::of_kind(LossKind::Ratio);
        assert!(matches!(
            local_train(&m, &d, &a, &loss, None, &cfg(1), 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn divergence_reports_location() {
        let (m, d) = setup();
        let a = ClientShard::from_indices(5, vec![0, 1, 2], &d);
        let mut c = cfg(50);
        c.learning_rate = 1e300;
        c.batch_size = 1;
        match local_train(&m, &d, &a, &LossConfig::default(), None, &c, 7) {
            Err(Error::Diverged { round, client, .. }) => assert_eq!((round, client), (7, 5)),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
