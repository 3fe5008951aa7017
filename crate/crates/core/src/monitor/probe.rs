use serde::{Deserialize, Serialize};

use super::aux::AuxiliaryData;
use crate::error::{config, Result};
use crate::losses::RatioVector;
use crate::nn::{last_layer_gradient, Matrix, MlpModel};
use crate::scalar::Scalar;

/// Denominators of the ratio below this magnitude mark the entry invalid.
pub const DENOM_EPS: f64 = 1e-12;

/// One averaged CE step per class on the output link weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult<F: Scalar> {
    /// `ΔW^(p)`, each Q×s.
    pub per_class: Vec<Matrix<F>>,
}

impl<F: Scalar> ProbeResult<F> {
    pub fn class_count(&self) -> usize {
        self.per_class.len()
    }

    pub fn width(&self) -> usize {
        self.per_class[0].cols()
    }
}

/// `ΔW^(p) = −(λ / n_a^p) Σ_x ∇_W L_CE(x, p)` for every class `p`. The model is only read.
pub fn probe<F: Scalar>(g_t: &MlpModel<F>, aux: &AuxiliaryData<F>, learning_rate: f64) -> Result<ProbeResult<F>> {
    let q = g_t.class_count();
    if aux.class_count() != q {
        return Err(config(format!(
            "auxiliary data covers {} classes, model has {q}",
            aux.class_count()
        )));
    }
    if aux.dim() != g_t.input_dim() {
        return Err(config(format!(
            "auxiliary samples are {}-dimensional, model expects {}",
            aux.dim(),
            g_t.input_dim()
        )));
    }
    let s = g_t.hidden_width();
    let per_class = (0..q)
        .map(|p| {
            let mut acc = Matrix::zeros(q, s);
            for x in aux.samples(p) {
                let g = last_layer_gradient(&g_t.forward_unchecked(x), p)?;
                for (a, &v) in acc.as_mut_slice().iter_mut().zip(g.as_slice()) {
                    *a += v;
                }
            }
            let k = -F::of(learning_rate) / F::of_usize(aux.count(p));
            for a in acc.as_mut_slice() {
                *a *= k;
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProbeResult { per_class })
}

/// `Ra` with a validity mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct RatioMatrix<F: Scalar> {
    pub values: Matrix<F>,
    /// Row-major Q×s; `false` where the denominator vanished.
    pub valid: Vec<bool>,
}

impl<F: Scalar> RatioMatrix<F> {
    pub fn is_valid(&self, p: usize, i: usize) -> bool {
        self.valid[p * self.values.cols() + i]
    }

    pub fn get(&self, p: usize, i: usize) -> F {
        self.values.get(p, i)
    }

    pub fn valid_in_row(&self, p: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.values.cols()).filter(move |&i| self.is_valid(p, i))
    }
}

/// `Ra_{p,i} = (Q−1)·ΔW^(p)_{p,i} / (Σ_j ΔW^(j)_{p,i} − ΔW^(p)_{p,i})`:
/// own-class update over the mean update of the other classes on weight `(p, i)`.
pub fn ratio_matrix<F: Scalar>(probe: &ProbeResult<F>) -> Result<RatioMatrix<F>> {
    let q = probe.class_count();
    if q < 2 {
        return Err(config("ratio needs at least two classes"));
    }
    let s = probe.width();
    let qm1 = F::of_usize(q - 1);
    let mut values = Matrix::zeros(q, s);
    let mut valid = vec![false; q * s];
    for p in 0..q {
        for i in 0..s {
            let own = probe.per_class[p].get(p, i);
            let others = (0..q)
                .filter(|&j| j != p)
                .fold(F::zero(), |acc, j| acc + probe.per_class[j].get(p, i));
            if others.abs() >= F::of(DENOM_EPS) {
                values.set(p, i, qm1 * own / others);
                valid[p * s + i] = true;
            }
        }
    }
    Ok(RatioMatrix { values, valid })
}

/// Per class, the valid indices `i` with `|Ra_{p,i}| > threshold`, ascending.
///
/// With non-negative hidden outputs the own-class update and the other classes' updates
/// on row `p` have opposite signs, so the ratio is compared by magnitude.
pub fn filter_weights<F: Scalar>(ra: &RatioMatrix<F>, threshold: f64) -> Vec<Vec<usize>> {
    let t = F::of(threshold);
    (0..ra.values.rows())
        .map(|p| {
            ra.valid_in_row(p)
                .filter(|&i| ra.get(p, i).abs() > t)
                .collect()
        })
        .collect()
}

/// Which entries feed the broadcast ratio vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RatioSource {
    #[default]
    AllValid,
    Surviving,
}

/// `Ra_p = |mean_i Ra_{p,i}|` over the selected entries of each row; rows with no entry
/// get 0.
pub fn ratio_vector_from<F: Scalar>(
    ra: &RatioMatrix<F>,
    surviving: Option<&[Vec<usize>]>,
    round: usize,
) -> Result<RatioVector<F>> {
    let q = ra.values.rows();
    let vals = (0..q)
        .map(|p| {
            let idx: Vec<usize> = match surviving {
                Some(s) => s[p].clone(),
                None => ra.valid_in_row(p).collect(),
            };
            if idx.is_empty() {
                return F::zero();
            }
            let sum = idx.iter().fold(F::zero(), |a, &i| a + ra.get(p, i));
            (sum / F::of_usize(idx.len())).abs()
        })
        .collect();
    RatioVector::new(vals, round)
}
