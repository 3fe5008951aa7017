//! Evaluation metrics on a held-out set.

use crate::data::Dataset;
use crate::error::{config, Result};
use crate::nn::{argmax, MlpModel};
use crate::scalar::Scalar;

/// Class probabilities for every sample, row per sample.
pub fn predict_all<F: Scalar>(model: &MlpModel<F>, data: &Dataset<F>) -> Result<Vec<Vec<f64>>> {
    if model.input_dim() != data.dim() {
        return Err(config("dataset and model dimensions differ"));
    }
    Ok((0..data.len())
        .map(|i| {
            model
                .forward_unchecked(data.sample(i))
                .probs
                .iter()
                .map(|p| p.f64())
                .collect()
        })
        .collect())
}

/// Percentage of each class's samples predicted correctly.
pub fn per_class_accuracy(scores: &[Vec<f64>], labels: &[usize], class_count: usize) -> Vec<Option<f64>> {
    let mut hit = vec![0usize; class_count];
    let mut tot = vec![0usize; class_count];
    for (s, &y) in scores.iter().zip(labels) {
        tot[y] += 1;
        if argmax(s) == y {
            hit[y] += 1;
        }
    }
    hit.iter()
        .zip(&tot)
        .map(|(&h, &t)| (t > 0).then(|| 100.0 * h as f64 / t as f64))
        .collect()
}

/// Overall accuracy in percent.
pub fn accuracy(scores: &[Vec<f64>], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hit = scores.iter().zip(labels).filter(|(s, &y)| argmax(s) == y).count();
    100.0 * hit as f64 / labels.len() as f64
}

/// Mean per-class accuracy (percent) over `classes`. Classes absent from `labels` are skipped.
pub fn class_set_accuracy(scores: &[Vec<f64>], labels: &[usize], classes: &[usize]) -> Result<f64> {
    if classes.is_empty() {
        return Err(config("class set is empty"));
    }
    let q = scores.first().map_or(0, |s| s.len());
    let per = per_class_accuracy(scores, labels, q);
    let present: Vec<f64> = classes
        .iter()
        .filter_map(|&c| per.get(c).copied().flatten())
        .collect();
    if present.is_empty() {
        return Err(config("none of the classes occurs in the labels"));
    }
    Ok(present.iter().sum::<f64>() / present.len() as f64)
}

/// Ac.M: mean accuracy over the minority classes.
pub fn ac_minority(scores: &[Vec<f64>], labels: &[usize], minority: &[usize]) -> Result<f64> {
    class_set_accuracy(scores, labels, minority)
}

/// Mean accuracy over every class not in `minority`.
pub fn ac_majority(scores: &[Vec<f64>], labels: &[usize], minority: &[usize]) -> Result<f64> {
    let q = scores.first().map_or(0, |s| s.len());
    let majority: Vec<usize> = (0..q).filter(|c| !minority.contains(c)).collect();
    class_set_accuracy(scores, labels, &majority)
}

/// Rank-statistic AUC of `scores` separating `positive` from the rest; ties count ½.
/// `None` without both a positive and a negative.
pub fn auc_binary(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // average 1-based ranks over tie groups
    let mut rank_sum_pos = 0.0;
    let mut k = 0;
    while k < order.len() {
        let mut end = k + 1;
        while end < order.len() && scores[order[end]] == scores[order[k]] {
            end += 1;
        }
        let avg = (k + 1 + end) as f64 / 2.0;
        rank_sum_pos += avg * order[k..end].iter().filter(|&&i| positive[i]).count() as f64;
        k = end;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// Macro one-vs-rest AUC and the classes that had to be skipped.
pub fn auc_macro_ovr(scores: &[Vec<f64>], labels: &[usize]) -> Result<(f64, Vec<usize>)> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(config("scores and labels must be non-empty and equally long"));
    }
    let q = scores[0].len();
    let mut sum = 0.0;
    let mut used = 0;
    let mut skipped = Vec::new();
    for c in 0..q {
        let col: Vec<f64> = scores.iter().map(|s| s[c]).collect();
        let pos: Vec<bool> = labels.iter().map(|&y| y == c).collect();
        match auc_binary(&col, &pos) {
            Some(a) => {
                sum += a;
                used += 1;
            }
            None => skipped.push(c),
        }
    }
    if used == 0 {
        return Err(config("no class has both positives and negatives"));
    }
    Ok((sum / used as f64, skipped))
}
