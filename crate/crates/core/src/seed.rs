//! Deterministic derivation of independent sub-seeds from a master seed.

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the stream labelled by `path` under `base`.
pub fn derive(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix(base), |acc, &p| mix(acc ^ mix(p)))
}

/// Stream labels.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const PARTITION: u64 = 2;
    pub const SELECTION: u64 = 3;
    pub const LOCAL: u64 = 4;
    pub const SPLIT: u64 = 5;
    pub const DATA: u64 = 6;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinct_paths_distinct_seeds() {
        let a = derive(7, &[1, 2]);
        assert_eq!(a, derive(7, &[1, 2]));
        assert_ne!(a, derive(7, &[2, 1]));
        assert_ne!(a, derive(8, &[1, 2]));
        assert_ne!(derive(7, &[]), derive(7, &[0]));
    }
}
