//! Deterministic seed derivation.
//!
//! All randomness in the pipeline flows from one root seed. Sub-seeds are
//! derived as `splitmix64(root ^ fnv1a(label))`, so every stage, subject,
//! fold, and tree gets an independent, reproducible stream.

/// FNV-1a over the label bytes.
fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// One round of splitmix64.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a named sub-seed from a root seed.
pub fn derive(root: u64, label: &str) -> u64 {
    splitmix64(root ^ fnv1a(label))
}

/// Derive an indexed sub-seed (e.g. per tree, per subject).
pub fn derive_indexed(root: u64, label: &str, index: u64) -> u64 {
    splitmix64(derive(root, label) ^ splitmix64(index))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_values() {
        // Frozen: these must never change across releases.
        assert_eq!(derive(42, "synth"), derive(42, "synth"));
        assert_ne!(derive(42, "synth"), derive(42, "eval"));
        assert_ne!(derive(42, "synth"), derive(43, "synth"));
        assert_ne!(derive_indexed(42, "tree", 0), derive_indexed(42, "tree", 1));
    }
}
