//! Deterministic seed derivation.
//!
//! Every random decision in a run is driven by a seed derived from the master
//! experiment seed, a purpose tag, and zero or more integer coordinates
//! (round index, sample id, ...). Derivation is a splitmix64 chain over the
//! FNV-1a hash of the tag followed by the coordinates, so ablations that share
//! a master seed share initialization while per-purpose streams stay
//! independent.

/// Purpose tags used by the experiment loop. Kept in one place so the
/// derivation scheme is auditable.
pub mod tag {
    pub const DATASET: &str = "dataset";
    pub const SPLIT: &str = "split";
    pub const INIT_POOL: &str = "init-pool";
    pub const STD_TRAIN: &str = "std-train";
    pub const ADV_TRAIN: &str = "adv-train";
    pub const SELECTION: &str = "selection";
    pub const SCORE_ATTACK: &str = "score-attack";
    pub const EVAL_ATTACK: &str = "eval-attack";
}

fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Derive a child seed from `master` for the given purpose tag and
/// coordinates. Identical inputs always yield the identical seed.
pub fn derive(master: u64, purpose: &str, coords: &[u64]) -> u64 {
    let mut state = splitmix64(master ^ fnv1a(purpose.as_bytes()));
    for &c in coords {
        state = splitmix64(state ^ c);
    }
    state
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivation_is_stable() {
        let a = derive(42, tag::ADV_TRAIN, &[3]);
        let b = derive(42, tag::ADV_TRAIN, &[3]);
        assert_eq!(a, b);
    }

    #[test]
    fn purposes_and_coords_separate_streams() {
        let base = derive(42, tag::ADV_TRAIN, &[0]);
        assert_ne!(base, derive(42, tag::STD_TRAIN, &[0]));
        assert_ne!(base, derive(42, tag::ADV_TRAIN, &[1]));
        assert_ne!(base, derive(43, tag::ADV_TRAIN, &[0]));
    }
}
