use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::error::{config, Result};
use crate::scalar::Scalar;

/// One client's slice of the training data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientShard {
    pub client_id: usize,
    /// Indices into the source dataset, ascending.
    pub indices: Vec<usize>,
    /// `N_p^j` for every class `p`.
    pub per_class_counts: Vec<usize>,
    /// `Σ_p N_p^j`.
    pub total: usize,
}

impl ClientShard {
    pub fn from_indices<F: Scalar>(client_id: usize, mut indices: Vec<usize>, data: &Dataset<F>) -> Self {
        indices.sort_unstable();
        let mut per_class_counts = vec![0; data.class_count()];
        for &i in &indices {
            per_class_counts[data.label(i)] += 1;
        }
        Self {
            client_id,
            total: indices.len(),
            indices,
            per_class_counts,
        }
    }

    /// Classes with at least one sample on this client.
    pub fn classes(&self) -> Vec<usize> {
        (0..self.per_class_counts.len())
            .filter(|&p| self.per_class_counts[p] > 0)
            .collect()
    }
}

/// Inclusive range for the number of classes a client holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassRange {
    pub min: usize,
    pub max: usize,
}

impl ClassRange {
    pub fn new(min: usize, max: usize) -> Self {
        Self { min, max }
    }

    pub fn fixed(n: usize) -> Self {
        Self { min: n, max: n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionPlan {
    pub num_clients: usize,
    pub classes_per_client: ClassRange,
    /// Samples a client receives for each (non-minority) class it holds.
    pub samples_per_class: usize,
    /// Target global ratio `Γ`; only meaningful with a non-empty minority set.
    #[serde(default = "unit_ratio")]
    pub global_ratio: f64,
    #[serde(default)]
    pub minority_classes: Vec<usize>,
    /// Shrink majority allocations that exceed what the dataset holds instead of failing.
    #[serde(default)]
    pub trim_to_available: bool,
    pub seed: u64,
}

fn unit_ratio() -> f64 {
    1.0
}

impl PartitionPlan {
    pub fn validate(&self, class_count: usize) -> Result<()> {
        let r = self.classes_per_client;
        if self.num_clients == 0 {
            return Err(config("num_clients must be >= 1"));
        }
        if !(1 <= r.min && r.min <= r.max && r.max <= class_count) {
            return Err(config(format!(
                "classes_per_client [{}, {}] must satisfy 1 <= min <= max <= {class_count}",
                r.min, r.max
            )));
        }
        if self.samples_per_class == 0 {
            return Err(config("samples_per_class must be >= 1"));
        }
        if !(self.global_ratio >= 1.0 && self.global_ratio.is_finite()) {
            return Err(config(format!(
                "global_ratio must be >= 1, got {}",
                self.global_ratio
            )));
        }
        if let Some(&bad) = self.minority_classes.iter().find(|&&c| c >= class_count) {
            return Err(config(format!("minority class {bad} outside 0..{class_count}")));
        }
        if self.minority_classes.len() >= class_count {
            return Err(config("at least one class must be a majority class"));
        }
        if self.minority_classes.is_empty() && self.global_ratio != 1.0 {
            return Err(config("a global_ratio other than 1 needs minority_classes"));
        }
        Ok(())
    }
}

/// Splits `data` into disjoint client shards following `plan`.
///
/// Every client draws a class count from the plan's range and then that many distinct
/// classes. Each held majority class contributes `samples_per_class` samples. With a
/// minority set, the largest majority total `M` fixes a per-minority-class total
/// `m = min(⌊M / Γ⌋, smallest majority total)` which is spread over that class's holders,
/// and majority totals above
/// `round(m·Γ)` are trimmed, so the realized ratio is `round(m·Γ) / m`.
/// Samples are handed out without replacement.
pub fn partition<F: Scalar>(data: &Dataset<F>, plan: &PartitionPlan) -> Result<Vec<ClientShard>> {
    let q = data.class_count();
    plan.validate(q)?;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let all: Vec<usize> = (0..q).collect();
    let mut holdings: Vec<Vec<usize>> = (0..plan.num_clients)
        .map(|_| {
            let c = rng.random_range(plan.classes_per_client.min..=plan.classes_per_client.max);
            let mut classes: Vec<usize> = all.choose_multiple(&mut rng, c).copied().collect();
            classes.sort_unstable();
            classes
        })
        .collect();
    ensure_minorities_held(&mut holdings, &plan.minority_classes, &mut rng)?;

    let mut holders: Vec<Vec<usize>> = vec![Vec::new(); q];
    for (client, classes) in holdings.iter().enumerate() {
        for &c in classes {
            holders[c].push(client);
        }
    }
    // counts[client][class]
    let mut counts = vec![vec![0usize; q]; plan.num_clients];
    let is_minority = |c: usize| plan.minority_classes.contains(&c);
    let available = data.class_counts();
    for c in (0..q).filter(|&c| !is_minority(c)) {
        for &j in &holders[c] {
            counts[j][c] = plan.samples_per_class;
        }
        if plan.trim_to_available {
            trim_class(&mut counts, &holders[c], c, available[c]);
        }
    }
    if !plan.minority_classes.is_empty() {
        let major_totals: Vec<usize> = (0..q)
            .filter(|&c| !is_minority(c))
            .map(|c| counts.iter().map(|row| row[c]).sum::<usize>())
            .collect();
        let max_major = major_totals.iter().copied().max().unwrap_or(0);
        let min_major = major_totals.iter().copied().min().unwrap_or(0);
        let per_minority = ((max_major as f64 / plan.global_ratio).floor() as usize).min(min_major);
        if per_minority == 0 {
            return Err(config(format!(
                "largest majority total {max_major} is too small for a {}:1 ratio",
                plan.global_ratio
            )));
        }
        let cap = (per_minority as f64 * plan.global_ratio).round() as usize;
        for c in (0..q).filter(|&c| !is_minority(c)) {
            trim_class(&mut counts, &holders[c], c, cap);
        }
        for &c in &plan.minority_classes {
            let h = &holders[c];
            for (k, &j) in h.iter().enumerate() {
                counts[j][c] = per_minority / h.len() + usize::from(k < per_minority % h.len());
            }
        }
        fix_empty_clients(&mut counts, &holdings, &holders);
    }

    let need: Vec<usize> = (0..q).map(|c| counts.iter().map(|row| row[c]).sum()).collect();
    let shortfall: Vec<String> = (0..q)
        .filter(|&c| need[c] > available[c])
        .map(|c| format!("class {c}: need {}, have {}", need[c], available[c]))
        .collect();
    if !shortfall.is_empty() {
        return Err(config(format!(
            "partition plan is infeasible ({})",
            shortfall.join("; ")
        )));
    }

    let mut pools = data.indices_by_class();
    for pool in &mut pools {
        pool.shuffle(&mut rng);
    }
    let mut cursor = vec![0usize; q];
    let shards = counts
        .iter()
        .enumerate()
        .map(|(j, row)| {
            let mut idx = Vec::with_capacity(row.iter().sum());
            for (c, &n) in row.iter().enumerate() {
                idx.extend_from_slice(&pools[c][cursor[c]..cursor[c] + n]);
                cursor[c] += n;
            }
            ClientShard::from_indices(j, idx, data)
        })
        .collect();
    Ok(shards)
}

/// Lowers class `c`'s total to at most `cap`, one sample per holder in turn, never taking
/// a holder below one sample.
fn trim_class(counts: &mut [Vec<usize>], holders: &[usize], c: usize, cap: usize) {
    let total: usize = holders.iter().map(|&j| counts[j][c]).sum();
    let floor = holders.len();
    let mut excess = total.saturating_sub(cap.max(floor));
    let mut k = 0;
    while excess > 0 {
        let j = holders[k % holders.len()];
        if counts[j][c] > 1 {
            counts[j][c] -= 1;
            excess -= 1;
        }
        k += 1;
    }
}

/// Swaps unheld minority classes into some client's set in place of a class that
/// another client also holds.
fn ensure_minorities_held(holdings: &mut [Vec<usize>], minority: &[usize], rng: &mut ChaCha8Rng) -> Result<()> {
    for &m in minority {
        if holdings.iter().any(|h| h.contains(&m)) {
            continue;
        }
        let mut order: Vec<usize> = (0..holdings.len()).collect();
        order.shuffle(rng);
        let mut placed = false;
        'clients: for &j in &order {
            for slot in 0..holdings[j].len() {
                let c = holdings[j][slot];
                if minority.contains(&c) {
                    continue;
                }
                let shared = holdings
                    .iter()
                    .enumerate()
                    .any(|(k, h)| k != j && h.contains(&c));
                if shared {
                    holdings[j][slot] = m;
                    holdings[j].sort_unstable();
                    placed = true;
                    break 'clients;
                }
            }
        }
        if !placed {
            return Err(config(format!(
                "no client can take minority class {m} without dropping a class entirely"
            )));
        }
    }
    Ok(())
}

/// A client holding only minority classes can end up with zero samples; move one
/// sample of its first held class over from the best-stocked holder.
fn fix_empty_clients(counts: &mut [Vec<usize>], holdings: &[Vec<usize>], holders: &[Vec<usize>]) {
    for j in 0..counts.len() {
        if counts[j].iter().sum::<usize>() > 0 {
            continue;
        }
        for &c in &holdings[j] {
            let donor = holders[c]
                .iter()
                .copied()
                .filter(|&k| counts[k][c] > 1 || (counts[k][c] == 1 && counts[k].iter().sum::<usize>() > 1))
                .max_by_key(|&k| (counts[k][c], std::cmp::Reverse(k)));
            if let Some(k) = donor {
                counts[k][c] -= 1;
                counts[j][c] += 1;
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{composition, global_imbalance, make_synthetic};
    use std::collections::HashSet;

    fn data(per_class: usize) -> Dataset<f64> {
        make_synthetic(10, 10, per_class, 4.0, 1).unwrap()
    }

    fn assert_disjoint(shards: &[ClientShard]) {
        let mut seen = HashSet::new();
        for s in shards {
            for &i in &s.indices {
                assert!(seen.insert(i), "index {i} appears twice");
            }
        }
    }

    #[test]
    fn balanced_full_clients() {
        let d = data(100);
        let plan = PartitionPlan {
            num_clients: 5,
            classes_per_client: ClassRange::fixed(10),
            samples_per_class: 8,
            global_ratio: 1.0,
            minority_classes: vec![],
            trim_to_available: false,
            seed: 4,
        };
        let shards = partition(&d, &plan).unwrap();
        for s in &shards {
            assert_eq!(s.per_class_counts, vec![8; 10]);
        }
        assert_eq!(global_imbalance(&shards).unwrap(), 1.0);
        assert_disjoint(&shards);
    }

    #[test]
    fn ten_to_one_scheme() {
        // 20 clients, 3-6 classes each, 250 per majority class, minority {2,4,7}
        let d = data(3000);
        let plan = PartitionPlan {
            num_clients: 20,
            classes_per_client: ClassRange::new(3, 6),
            samples_per_class: 250,
            global_ratio: 10.0,
            minority_classes: vec![2, 4, 7],
            trim_to_available: false,
            seed: 11,
        };
        let shards = partition(&d, &plan).unwrap();
        assert_disjoint(&shards);
        let gamma = global_imbalance(&shards).unwrap();
        assert!((gamma - 10.0).abs() <= 1.0, "realized {gamma}");
        let v = composition(&shards).unwrap();
        let min = *v.iter().min().unwrap();
        for c in [2, 4, 7] {
            assert_eq!(v[c], min);
        }
        assert!(shards.iter().all(|s| s.total > 0));
    }

    #[test]
    fn hundred_to_one_hits_ratio() {
        let d = data(1000);
        let plan = PartitionPlan {
            num_clients: 20,
            classes_per_client: ClassRange::new(3, 6),
            samples_per_class: 40,
            global_ratio: 100.0,
            minority_classes: vec![2, 4, 7],
            trim_to_available: false,
            seed: 2,
        };
        let shards = partition(&d, &plan).unwrap();
        let gamma = global_imbalance(&shards).unwrap();
        assert!((gamma - 100.0).abs() <= 10.0, "realized {gamma}");
    }

    #[test]
    fn infeasible_plan_lists_shortfall() {
        let d = data(5);
        let plan = PartitionPlan {
            num_clients: 4,
            classes_per_client: ClassRange::fixed(10),
            samples_per_class: 3,
            global_ratio: 1.0,
            minority_classes: vec![],
            trim_to_available: false,
            seed: 0,
        };
        let err = partition(&d, &plan).unwrap_err().to_string();
        assert!(err.contains("need 12, have 5"), "{err}");
    }

    #[test]
    fn invalid_ranges_rejected() {
        let d = data(5);
        let mut plan = PartitionPlan {
            num_clients: 2,
            classes_per_client: ClassRange::new(3, 2),
            samples_per_class: 1,
            global_ratio: 1.0,
            minority_classes: vec![],
            trim_to_available: false,
            seed: 0,
        };
        assert!(partition(&d, &plan).is_err());
        plan.classes_per_client = ClassRange::new(1, 11);
        assert!(partition(&d, &plan).is_err());
        plan.classes_per_client = ClassRange::new(1, 2);
        plan.global_ratio = 0.5;
        assert!(partition(&d, &plan).is_err());
    }

    #[test]
    fn conservation_and_determinism() {
        let d = data(200);
        let plan = PartitionPlan {
            num_clients: 30,
            classes_per_client: ClassRange::new(1, 10),
            samples_per_class: 5,
            global_ratio: 1.0,
            minority_classes: vec![],
            trim_to_available: false,
            seed: 8,
        };
        let a = partition(&d, &plan).unwrap();
        assert_eq!(a, partition(&d, &plan).unwrap());
        let v = composition(&a).unwrap();
        for (c, &n) in d.class_counts().iter().enumerate() {
            assert!(v[c] <= n);
        }
        for s in &a {
            let recount = ClientShard::from_indices(s.client_id, s.indices.clone(), &d);
            assert_eq!(&recount, s);
        }
    }

    #[test]
    fn trimming_keeps_ratio_within_availability() {
        let d = data(300);
        let mut plan = PartitionPlan {
            num_clients: 20,
            classes_per_client: ClassRange::new(3, 6),
            samples_per_class: 60,
            global_ratio: 100.0,
            minority_classes: vec![2, 4, 7],
            trim_to_available: false,
            seed: 3,
        };
        assert!(partition(&d, &plan).is_err());
        plan.trim_to_available = true;
        let shards = partition(&d, &plan).unwrap();
        let v = composition(&shards).unwrap();
        assert!(v.iter().all(|&n| n <= 300));
        assert_eq!(global_imbalance(&shards).unwrap(), 100.0);
        assert_disjoint(&shards);
    }
}
