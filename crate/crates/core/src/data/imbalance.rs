use super::partition::ClientShard;
use crate::error::{structural, Error, Result};
use crate::scalar::Scalar;

/// `max / min` over the counts; `+∞` when some class is absent.
pub fn imbalance_ratio(counts: &[usize]) -> f64 {
    let max = counts.iter().copied().max().unwrap_or(0);
    let min = counts.iter().copied().min().unwrap_or(0);
    if min == 0 {
        f64::INFINITY
    } else {
        max as f64 / min as f64
    }
}

/// Local imbalance `γ_j` of one client over all `Q` classes.
pub fn local_imbalance(shard: &ClientShard) -> f64 {
    imbalance_ratio(&shard.per_class_counts)
}

/// Ground-truth global composition `V = [Σ_j N_1^j, …, Σ_j N_Q^j]`.
pub fn composition<'a>(shards: impl IntoIterator<Item = &'a ClientShard>) -> Result<Vec<usize>> {
    let mut it = shards.into_iter();
    let first = it.next().ok_or_else(|| structural("no shards"))?;
    let mut total = first.per_class_counts.clone();
    for s in it {
        if s.per_class_counts.len() != total.len() {
            return Err(structural("shards disagree on the class count"));
        }
        for (t, &c) in total.iter_mut().zip(&s.per_class_counts) {
            *t += c;
        }
    }
    Ok(total)
}

/// Global imbalance `Γ = max_p V_p / min_p V_p`.
pub fn global_imbalance<'a>(shards: impl IntoIterator<Item = &'a ClientShard>) -> Result<f64> {
    Ok(imbalance_ratio(&composition(shards)?))
}

/// `(u · v) / (‖u‖ ‖v‖)`.
pub fn cosine_similarity<F: Scalar>(u: &[F], v: &[F]) -> Result<F> {
    if u.len() != v.len() {
        return Err(structural(format!(
            "cosine of vectors of length {} and {}",
            u.len(),
            v.len()
        )));
    }
    let dot: F = u.iter().zip(v).map(|(&a, &b)| a * b).sum();
    let nu: F = u.iter().map(|&a| a * a).sum::<F>().sqrt();
    let nv: F = v.iter().map(|&b| b * b).sum::<F>().sqrt();
    if nu == F::zero() || nv == F::zero() {
        return Err(Error::Undefined("cosine similarity of a zero vector".into()));
    }
    Ok((dot / (nu * nv)).max(-F::one()).min(F::one()))
}
