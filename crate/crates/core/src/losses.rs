//! Loss functions on softmax outputs.
//!
//! Every loss reports its value together with the gradient with respect to the
//! *logits*, which is what [`MlpModel::backward`](crate::nn::MlpModel::backward) consumes.

use serde::{Deserialize, Serialize};

use crate::error::{config, structural, Error, Result};
use crate::scalar::Scalar;

/// Floor applied to `f_p` before taking its logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[serde(alias = "crossentropy")]
    Ce,
    Ratio,
    Focal,
    Ghmc,
    Mse,
    Mfe,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Ce => "ce",
            LossKind::Ratio => "ratio",
            LossKind::Focal => "focal",
            LossKind::Ghmc => "ghmc",
            LossKind::Mse => "mse",
            LossKind::Mfe => "mfe",
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ce" | "crossentropy" => Ok(LossKind::Ce),
            "ratio" => Ok(LossKind::Ratio),
            "focal" => Ok(LossKind::Focal),
            "ghmc" => Ok(LossKind::Ghmc),
            "mse" => Ok(LossKind::Mse),
            "mfe" => Ok(LossKind::Mfe),
            other => Err(config(format!("unknown loss kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub kind: LossKind,
    pub alpha: f64,
    pub beta: f64,
    pub focal_gamma: f64,
    pub ghmc_bins: usize,
    /// EMA momentum of the GHMC bin counts; 0 disables the moving average.
    pub ghmc_momentum: f64,
    /// Classes treated as positives by MFE.
    pub minority_set: Option<Vec<usize>>,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            kind: LossKind::Ce,
            alpha: 1.0,
            beta: 0.1,
            focal_gamma: 2.0,
            ghmc_bins: 10,
            ghmc_momentum: 0.75,
            minority_set: None,
        }
    }
}

impl LossConfig {
    pub fn of_kind(kind: LossKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self, class_count: usize) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(config(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(config(format!("beta must be >= 0, got {}", self.beta)));
        }
        if !(self.focal_gamma >= 0.0 && self.focal_gamma.is_finite()) {
            return Err(config("focal_gamma must be >= 0"));
        }
        if self.ghmc_bins == 0 {
            return Err(config("ghmc_bins must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.ghmc_momentum) {
            return Err(config("ghmc_momentum must lie in [0, 1)"));
        }
        if self.kind == LossKind::Mfe {
            let set = self
                .minority_set
                .as_ref()
                .ok_or_else(|| config("MFE needs a minority_set"))?;
            if !set.iter().any(|&c| c < class_count) {
                return Err(config(format!(
                    "minority_set {set:?} shares no class with 0..{class_count}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-class absolute mean ratios `[Ra_1 … Ra_Q]` broadcast with the global model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct RatioVector<F: Scalar> {
    pub ra: Vec<F>,
    pub round_updated: usize,
}

impl<F: Scalar> RatioVector<F> {
    pub fn new(ra: Vec<F>, round_updated: usize) -> Result<Self> {
        if let Some(bad) = ra.iter().find(|v| !(v.is_finite() && **v >= F::zero())) {
            return Err(Error::Numeric(format!("ratio entry {bad} is not finite and >= 0")));
        }
        Ok(Self { ra, round_updated })
    }

    pub fn uniform(class_count: usize, value: F) -> Self {
        Self {
            ra: vec![value; class_count],
            round_updated: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.ra.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ra.is_empty()
    }
}

/// Value and logit-gradient of a single-sample loss.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue<F: Scalar> {
    pub loss: F,
    pub grad_logits: Vec<F>,
    /// `f_p` fell below [`PROB_FLOOR`] and was clamped inside the logarithm.
    pub clamped: bool,
}

/// Batch objective with per-sample logit gradients of that objective.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchLoss<F: Scalar> {
    /// The objective being minimised (a mean for per-sample losses).
    pub loss: F,
    /// `∂loss/∂z_i` for every sample `i`, already carrying the batch reduction.
    pub grads: Vec<Vec<F>>,
    pub clamped: bool,
}

fn check_target<F: Scalar>(probs: &[F], p: usize) -> Result<()> {
    if p >= probs.len() {
        return Err(Error::Index {
            what: "class",
            index: p,
            len: probs.len(),
        });
    }
    Ok(())
}

fn neg_log<F: Scalar>(fp: F) -> (F, bool) {
    let floor = F::of(PROB_FLOOR);
    if fp < floor {
        (-floor.ln(), true)
    } else {
        (-(fp.min(F::one())).ln(), false)
    }
}

/// `−log f_p`, gradient `S − onehot(p)`.
pub fn ce_loss<F: Scalar>(probs: &[F], p: usize) -> Result<LossValue<F>> {
    check_target(probs, p)?;
    let (loss, clamped) = neg_log(probs[p]);
    let mut grad_logits = probs.to_vec();
    grad_logits[p] -= F::one();
    Ok(LossValue {
        loss,
        grad_logits,
        clamped,
    })
}

/// `−(α + β·Ra_p) log f_p`.
pub fn ratio_loss<F: Scalar>(
    probs: &[F],
    p: usize,
    ratios: &RatioVector<F>,
    cfg: &LossConfig,
) -> Result<LossValue<F>> {
    if ratios.len() != probs.len() {
        return Err(structural(format!(
            "ratio vector has {} entries for {} classes",
            ratios.len(),
            probs.len()
        )));
    }
    let mut v = ce_loss(probs, p)?;
    let factor = F::of(cfg.alpha) + F::of(cfg.beta) * ratios.ra[p];
    v.loss *= factor;
    for g in &mut v.grad_logits {
        *g *= factor;
    }
    Ok(v)
}

/// `−(1 − f_p)^γ log f_p`.
pub fn focal_loss<F: Scalar>(probs: &[F], p: usize, gamma: f64) -> Result<LossValue<F>> {
    check_target(probs, p)?;
    let g = F::of(gamma);
    let f = probs[p];
    let (nll, clamped) = neg_log(f);
    let one_minus = (F::one() - f).max(F::zero());
    let modulator = one_minus.powf(g);
    let loss = modulator * nll;
    // dL/df · f, so that dL/dz_k = coef · (δ_pk − f_k)
    let focus_term = if gamma == 0.0 || one_minus == F::zero() {
        F::zero()
    } else {
        // γ (1−f)^{γ−1} f log f
        g * one_minus.powf(g - F::one()) * f * (-nll)
    };
    let coef = focus_term - modulator;
    let grad_logits = probs
        .iter()
        .enumerate()
        .map(|(k, &fk)| {
            let delta = if k == p { F::one() } else { F::zero() };
            coef * (delta - fk)
        })
        .collect();
    Ok(LossValue {
        loss,
        grad_logits,
        clamped,
    })
}

/// Pulls a probability-space gradient back through the softmax Jacobian.
fn through_softmax<F: Scalar>(probs: &[F], grad_probs: &[F]) -> Vec<F> {
    let dot: F = probs.iter().zip(grad_probs).map(|(&s, &g)| s * g).sum();
    probs
        .iter()
        .zip(grad_probs)
        .map(|(&s, &g)| s * (g - dot))
        .collect()
}

/// `‖S − onehot(p)‖²`.
pub fn mse_loss<F: Scalar>(probs: &[F], p: usize) -> Result<LossValue<F>> {
    check_target(probs, p)?;
    let two = F::of(2.0);
    let mut loss = F::zero();
    let grad_probs: Vec<F> = probs
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let d = if k == p { s - F::one() } else { s };
            loss += d * d;
            two * d
        })
        .collect();
    Ok(LossValue {
        loss,
        grad_logits: through_softmax(probs, &grad_probs),
        clamped: false,
    })
}

fn check_batch<F: Scalar>(probs: &[Vec<F>], labels: &[usize]) -> Result<()> {
    if probs.is_empty() {
        return Err(structural("empty batch"));
    }
    if probs.len() != labels.len() {
        return Err(structural(format!(
            "{} probability rows for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    Ok(())
}

/// Mean false-positive error plus mean false-negative error.
///
/// Samples whose label lies in `minority_set` are the positives; the squared error of
/// each group is averaged over that group. An absent group contributes 0.
pub fn mfe_loss<F: Scalar>(
    probs: &[Vec<F>],
    labels: &[usize],
    minority_set: &[usize],
) -> Result<BatchLoss<F>> {
    check_batch(probs, labels)?;
    let q = probs[0].len();
    if !minority_set.iter().any(|&c| c < q) {
        return Err(config(format!(
            "minority_set {minority_set:?} shares no class with 0..{q}"
        )));
    }
    let positive: Vec<bool> = labels.iter().map(|l| minority_set.contains(l)).collect();
    let n_pos = positive.iter().filter(|&&b| b).count();
    let n_neg = positive.len() - n_pos;
    let mut loss = F::zero();
    let mut grads = Vec::with_capacity(probs.len());
    for ((row, &label), &pos) in probs.iter().zip(labels).zip(&positive) {
        let v = mse_loss(row, label)?;
        let weight = F::one() / F::of_usize(if pos { n_pos } else { n_neg });
        loss += weight * v.loss;
        grads.push(v.grad_logits.into_iter().map(|g| g * weight).collect());
    }
    Ok(BatchLoss {
        loss,
        grads,
        clamped: false,
    })
}

/// Running per-bin sample counts for GHMC's moving-average density.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GhmcState {
    acc: Vec<f64>,
}

/// GHMC per-sample weights.
///
/// Each sample's gradient norm `g = 1 − f_p` is binned into `bins` equal-width bins on
/// `[0, 1]`; its weight is `N / (nonempty_bins · count_in_bin)` (counts optionally
/// smoothed by `state`), renormalised so that the batch mean weight is 1.
pub fn ghmc_weights<F: Scalar>(
    probs: &[Vec<F>],
    labels: &[usize],
    bins: usize,
    momentum: f64,
    state: Option<&mut GhmcState>,
) -> Result<Vec<f64>> {
    check_batch(probs, labels)?;
    if bins == 0 {
        return Err(config("ghmc bins must be >= 1"));
    }
    let n = probs.len();
    let mut bin_of = Vec::with_capacity(n);
    let mut counts = vec![0usize; bins];
    for (row, &label) in probs.iter().zip(labels) {
        check_target(row, label)?;
        let g = (F::one() - row[label]).abs().min(F::one()).f64();
        let b = ((g * bins as f64) as usize).min(bins - 1);
        counts[b] += 1;
        bin_of.push(b);
    }
    let density: Vec<f64> = match state {
        Some(st) if momentum > 0.0 => {
            if st.acc.len() != bins {
                st.acc = vec![0.0; bins];
            }
            for (acc, &c) in st.acc.iter_mut().zip(&counts) {
                if c > 0 {
                    *acc = if *acc == 0.0 {
                        c as f64
                    } else {
                        momentum * *acc + (1.0 - momentum) * c as f64
                    };
                }
            }
            st.acc.clone()
        }
        _ => counts.iter().map(|&c| c as f64).collect(),
    };
    let nonempty = counts.iter().filter(|&&c| c > 0).count() as f64;
    let raw: Vec<f64> = bin_of
        .iter()
        .map(|&b| n as f64 / (nonempty * density[b]))
        .collect();
    let mean = raw.iter().sum::<f64>() / n as f64;
    Ok(raw.into_iter().map(|w| w / mean).collect())
}

/// Gradient-harmonised cross entropy: batch mean of [`ghmc_weights`]-weighted CE.
/// Weights are treated as constants in the gradient.
pub fn ghmc_loss<F: Scalar>(
    probs: &[Vec<F>],
    labels: &[usize],
    bins: usize,
    momentum: f64,
    state: Option<&mut GhmcState>,
) -> Result<BatchLoss<F>> {
    let weights = ghmc_weights(probs, labels, bins, momentum, state)?;
    let inv_n = F::one() / F::of_usize(probs.len());
    let mut loss = F::zero();
    let mut clamped = false;
    let mut grads = Vec::with_capacity(probs.len());
    for ((row, &label), w) in probs.iter().zip(labels).zip(weights) {
        let v = ce_loss(row, label)?;
        let w = F::of(w);
        loss += w * v.loss * inv_n;
        clamped |= v.clamped;
        grads.push(v.grad_logits.into_iter().map(|g| g * w * inv_n).collect());
    }
    Ok(BatchLoss {
        loss,
        grads,
        clamped,
    })
}

/// Evaluates the configured loss over a batch.
///
/// `ratios` is required for [`LossKind::Ratio`]; `ghmc` carries the GHMC moving average
/// across batches of one local training run.
pub fn batch_loss<F: Scalar>(
    cfg: &LossConfig,
    probs: &[Vec<F>],
    labels: &[usize],
    ratios: Option<&RatioVector<F>>,
    ghmc: Option<&mut GhmcState>,
) -> Result<BatchLoss<F>> {
    check_batch(probs, labels)?;
    match cfg.kind {
        LossKind::Ghmc => return ghmc_loss(probs, labels, cfg.ghmc_bins, cfg.ghmc_momentum, ghmc),
        LossKind::Mfe => {
            let set = cfg
                .minority_set
                .as_deref()
                .ok_or_else(|| config("MFE needs a minority_set"))?;
            return mfe_loss(probs, labels, set);
        }
        _ => {}
    }
    let inv_n = F::one() / F::of_usize(probs.len());
    let mut loss = F::zero();
    let mut clamped = false;
    let mut grads = Vec::with_capacity(probs.len());
    for (row, &label) in probs.iter().zip(labels) {
        let v = match cfg.kind {
            LossKind::Ce => ce_loss(row, label)?,
            LossKind::Ratio => {
                let r = ratios.ok_or_else(|| config("ratio loss needs a ratio vector"))?;
                ratio_loss(row, label, r, cfg)?
            }
            LossKind::Focal => focal_loss(row, label, cfg.focal_gamma)?,
            LossKind::Mse => mse_loss(row, label)?,
            LossKind::Ghmc | LossKind::Mfe => unreachable!("handled above"),
        };
        loss += v.loss * inv_n;
        clamped |= v.clamped;
        grads.push(v.grad_logits.into_iter().map(|g| g * inv_n).collect());
    }
    Ok(BatchLoss {
        loss,
        grads,
        clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::softmax;
    use proptest::prelude::*;

    const LN10: f64 = std::f64::consts::LN_10;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn ce_uniform_and_one_hot() {
        let v = ce_loss(&[0.1f64; 10], 3).unwrap();
        assert!(close(v.loss, LN10, 1e-12));
        let v = ce_loss(&[0.0f64, 1.0, 0.0], 1).unwrap();
        assert_eq!(v.loss, 0.0);
        assert!(v.grad_logits.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn ce_two_class_substitution() {
        let v = ce_loss(&[0.9f64, 0.1], 1).unwrap();
        assert!(close(v.loss, LN10, 1e-12));
        assert!(close(v.grad_logits[0], 0.9, 1e-15));
        assert!(close(v.grad_logits[1], -0.9, 1e-15));
    }

    #[test]
    fn ce_clamps_zero_probability_with_flag() {
        let v = ce_loss(&[1.0f64, 0.0], 1).unwrap();
        assert!(v.clamped);
        assert!(close(v.loss, -(PROB_FLOOR.ln()), 1e-9));
        assert!(v.loss.is_finite());
    }

    #[test]
    fn ce_rejects_out_of_range_class() {
        assert!(matches!(ce_loss(&[0.5f64, 0.5], 2), Err(Error::Index { .. })));
    }

    #[test]
    fn ratio_with_zero_beta_is_scaled_ce() {
        let cfg = LossConfig {
            alpha: 1.7,
            beta: 0.0,
            ..LossConfig::of_kind(LossKind::Ratio)
        };
        let r = RatioVector::new(vec![3.0, 9.0, 0.5], 1).unwrap();
        let probs = [0.2f64, 0.5, 0.3];
        for p in 0..3 {
            let ce = ce_loss(&probs, p).unwrap();
            let rl = ratio_loss(&probs, p, &r, &cfg).unwrap();
            assert!(close(rl.loss, 1.7 * ce.loss, 1e-14));
        }
    }

    #[test]
    fn ratio_substitution() {
        // alpha 1, beta 0.1, Ra_p 5, ce 2 -> 3
        let fp = (-2.0f64).exp();
        let probs = [fp, 1.0 - fp];
        let r = RatioVector::new(vec![5.0, 1.0], 0).unwrap();
        let v = ratio_loss(&probs, 0, &r, &LossConfig::of_kind(LossKind::Ratio)).unwrap();
        assert!(close(v.loss, 3.0, 1e-12));
    }

    #[test]
    fn ratio_vector_length_mismatch() {
        let r = RatioVector::new(vec![1.0], 0).unwrap();
        assert!(ratio_loss(&[0.5f64, 0.5], 0, &r, &LossConfig::default()).is_err());
    }

    #[test]
    fn ratio_vector_rejects_negative() {
        assert!(RatioVector::new(vec![1.0f64, -0.1], 0).is_err());
    }

    #[test]
    fn focal_cases() {
        let probs = [0.5f64, 0.3, 0.2];
        let ce = ce_loss(&probs, 0).unwrap();
        let f0 = focal_loss(&probs, 0, 0.0).unwrap();
        assert_eq!(f0.loss, ce.loss);
        assert_eq!(f0.grad_logits, ce.grad_logits);
        let f2 = focal_loss(&probs, 0, 2.0).unwrap();
        assert!(close(f2.loss, 0.25 * std::f64::consts::LN_2, 1e-15));
        let perfect = focal_loss(&[1.0f64, 0.0], 0, 2.0).unwrap();
        assert_eq!(perfect.loss, 0.0);
        assert!(perfect.grad_logits.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn mse_cases() {
        let v = mse_loss(&[0.6f64, 0.4], 0).unwrap();
        assert!(close(v.loss, 0.32, 1e-15));
        let v = mse_loss(&[0.0f64, 1.0], 1).unwrap();
        assert_eq!(v.loss, 0.0);
    }

    #[test]
    fn mfe_without_minority_samples_is_fpe_only() {
        let probs = vec![vec![0.6f64, 0.4, 0.0], vec![0.2, 0.8, 0.0]];
        let labels = [0, 1];
        let b = mfe_loss(&probs, &labels, &[2]).unwrap();
        let expected = (0.32 + 0.08) / 2.0;
        assert!(close(b.loss, expected, 1e-15));
    }

    #[test]
    fn mfe_splits_groups() {
        let probs = vec![
            vec![0.6f64, 0.4],
            vec![0.5, 0.5],
            vec![0.3, 0.7],
        ];
        let labels = [0, 0, 1];
        let b = mfe_loss(&probs, &labels, &[1]).unwrap();
        // FPE over {0,1}: (0.32 + 0.5)/2; FNE over {2}: 0.18
        assert!(close(b.loss, 0.41 + 0.18, 1e-14));
    }

    #[test]
    fn mfe_rejects_disjoint_minority_set() {
        let probs = vec![vec![0.5f64, 0.5]];
        assert!(matches!(
            mfe_loss(&probs, &[0], &[5, 7]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn ghmc_single_bin_equals_ce() {
        let probs = vec![vec![0.91f64, 0.09], vec![0.95, 0.05], vec![0.92, 0.08]];
        let labels = [0, 0, 0];
        let b = ghmc_loss(&probs, &labels, 10, 0.0, None).unwrap();
        let ce: f64 = probs
            .iter()
            .map(|r| ce_loss(r, 0).unwrap().loss)
            .sum::<f64>()
            / 3.0;
        assert!(close(b.loss, ce, 1e-15));
        let w = ghmc_weights(&probs, &labels, 10, 0.0, None).unwrap();
        assert!(w.iter().all(|&x| close(x, 1.0, 1e-12)));
    }

    #[test]
    fn ghmc_two_samples_two_bins() {
        let probs = vec![vec![0.95f64, 0.05], vec![0.3, 0.7]];
        let labels = [0, 0];
        let w = ghmc_weights(&probs, &labels, 10, 0.0, None).unwrap();
        assert!(close(w[0], 1.0, 1e-12) && close(w[1], 1.0, 1e-12));
    }

    #[test]
    fn ghmc_downweights_crowded_bin() {
        // three easy samples share a bin, one hard sample is alone
        let probs = vec![
            vec![0.95f64, 0.05],
            vec![0.96, 0.04],
            vec![0.97, 0.03],
            vec![0.2, 0.8],
        ];
        let labels = [0, 0, 0, 0];
        let w = ghmc_weights(&probs, &labels, 10, 0.0, None).unwrap();
        assert!(w[3] > w[0]);
        assert!(close(w.iter().sum::<f64>() / 4.0, 1.0, 1e-12));
        assert!(w.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn ghmc_empty_batch_is_structural() {
        let probs: Vec<Vec<f64>> = vec![];
        assert!(matches!(
            ghmc_loss(&probs, &[], 10, 0.0, None),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn config_defaults() {
        let c = LossConfig::default();
        assert_eq!((c.alpha, c.beta), (1.0, 0.1));
        assert_eq!(c.focal_gamma, 2.0);
        assert_eq!(c.ghmc_bins, 10);
        assert_eq!(c.ghmc_momentum, 0.75);
    }

    #[test]
    fn config_validation() {
        let c = LossConfig {
            alpha: 0.0,
            ..LossConfig::default()
        };
        assert!(c.validate(10).is_err());
        let c = LossConfig {
            minority_set: Some(vec![11]),
            ..LossConfig::of_kind(LossKind::Mfe)
        };
        assert!(c.validate(10).is_err());
    }

    /// Central-difference derivative of `loss(softmax(z))` w.r.t. every logit.
    fn fd_grad(z: &[f64], f: &dyn Fn(&[f64]) -> f64) -> Vec<f64> {
        let h = 1e-6;
        (0..z.len())
            .map(|k| {
                let mut up = z.to_vec();
                let mut dn = z.to_vec();
                up[k] += h;
                dn[k] -= h;
                (f(&up) - f(&dn)) / (2.0 * h)
            })
            .collect()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs() / (x.abs().max(y.abs()).max(1e-6)))
            .fold(0.0, f64::max)
    }

    fn logits() -> impl Strategy<Value = (Vec<f64>, usize)> {
        (2usize..7).prop_flat_map(|q| (prop::collection::vec(-3.0f64..3.0, q), 0..q))
    }

    proptest! {
        #[test]
        fn single_sample_losses_match_finite_differences((z, p) in logits(), gamma in 0.0f64..3.0) {
            let ratios = RatioVector::new((0..z.len()).map(|k| 0.5 + k as f64).collect(), 0).unwrap();
            let cfg = LossConfig::of_kind(LossKind::Ratio);
            type L = Box<dyn Fn(&[f64]) -> LossValue<f64>>;
            let cases: Vec<L> = vec![
                Box::new(move |s| ce_loss(s, p).unwrap()),
                Box::new(move |s| focal_loss(s, p, gamma).unwrap()),
                Box::new(move |s| mse_loss(s, p).unwrap()),
                Box::new(move |s| ratio_loss(s, p, &ratios, &cfg).unwrap()),
            ];
            for loss in &cases {
                let analytic = loss(&softmax(&z)).grad_logits;
                let numeric = fd_grad(&z, &|zz| loss(&softmax(zz)).loss);
                prop_assert!(rel_err(&analytic, &numeric) < 1e-4, "{analytic:?} vs {numeric:?}");
            }
        }

        #[test]
        fn mfe_matches_finite_differences(
            zs in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 3), 1..5),
            labels_seed in prop::collection::vec(0usize..3, 5),
        ) {
            let labels: Vec<usize> = labels_seed[..zs.len()].to_vec();
            let eval = |batch: &[Vec<f64>]| {
                let probs: Vec<Vec<f64>> = batch.iter().map(|z| softmax(z)).collect();
                mfe_loss(&probs, &labels, &[2]).unwrap()
            };
            let b = eval(&zs);
            for i in 0..zs.len() {
                let numeric = fd_grad(&zs[i], &|zi| {
                    let mut batch = zs.clone();
                    batch[i] = zi.to_vec();
                    eval(&batch).loss
                });
                prop_assert!(rel_err(&b.grads[i], &numeric) < 1e-4);
            }
        }

        #[test]
        fn uniform_ratio_is_exactly_scaled_ce((z, p) in logits(), c in 0.0f64..20.0) {
            let probs = softmax(&z);
            let cfg = LossConfig::of_kind(LossKind::Ratio);
            let r = RatioVector::uniform(z.len(), c);
            let ce = ce_loss(&probs, p).unwrap();
            let rl = ratio_loss(&probs, p, &r, &cfg).unwrap();
            let k = cfg.alpha + cfg.beta * c;
            for (a, b) in rl.grad_logits.iter().zip(&ce.grad_logits) {
                prop_assert!((a - k * b).abs() <= 1e-12);
            }
        }

        #[test]
        fn ratio_loss_increases_with_ra((z, p) in logits(), a in 0.0f64..10.0, d in 0.01f64..10.0) {
            let probs = softmax(&z);
            prop_assume!(probs[p] < 1.0 - 1e-9);
            let cfg = LossConfig::of_kind(LossKind::Ratio);
            let mut lo = RatioVector::uniform(z.len(), 1.0);
            let mut hi = lo.clone();
            lo.ra[p] = a;
            hi.ra[p] = a + d;
            prop_assert!(ratio_loss(&probs, p, &hi, &cfg).unwrap().loss > ratio_loss(&probs, p, &lo, &cfg).unwrap().loss);
        }

        #[test]
        fn losses_are_non_negative((z, p) in logits()) {
            let probs = softmax(&z);
            prop_assert!(ce_loss(&probs, p).unwrap().loss >= 0.0);
            prop_assert!(focal_loss(&probs, p, 2.0).unwrap().loss >= 0.0);
            prop_assert!(mse_loss(&probs, p).unwrap().loss >= 0.0);
            let g = ghmc_loss(std::slice::from_ref(&probs), &[p], 10, 0.0, None).unwrap();
            prop_assert!(g.loss >= 0.0);
        }
    }
}
