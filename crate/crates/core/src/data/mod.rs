//! Datasets, client partitioning and imbalance measures.

mod dataset;
mod idx;
mod imbalance;
mod partition;
mod synthetic;

pub use dataset::Dataset;
pub use idx::{load_mnist_idx, parse_idx_images, parse_idx_labels, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use imbalance::{composition, cosine_similarity, global_imbalance, imbalance_ratio, local_imbalance};
pub use partition::{partition, ClassRange, ClientShard, PartitionPlan};
pub use synthetic::{make_synthetic, make_synthetic_from, SyntheticSpec};
