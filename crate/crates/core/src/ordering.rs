//! Reproducible per-participant picture ordering.
//!
//! The permutation for a participant is a Fisher-Yates shuffle driven by
//! SplitMix64, seeded with the 64-bit FNV-1a hash of
//! `"<experiment_id>|<participant_id>"`. Swap indices are drawn as
//! `next_u64() % (i + 1)`. All three pieces are fixed so other
//! implementations can reproduce the same order.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a hash.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME)
    })
}

/// SplitMix64 generator.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
}

/// Seed for a participant's ordering within an experiment.
pub fn ordering_seed(experiment_id: &str, participant_id: &str) -> u64 {
    let key = format!("{experiment_id}|{participant_id}");
    fnv1a64(key.as_bytes())
}

/// In-place Fisher-Yates shuffle.
pub fn shuffle<T>(items: &mut [T], rng: &mut SplitMix64) {
    for i in (1..items.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        items.swap(i, j);
    }
}

/// The participant-specific permutation of `items`.
pub fn participant_permutation<T: Clone>(
    experiment_id: &str,
    participant_id: &str,
    items: &[T],
) -> Vec<T> {
    let mut out = items.to_vec();
    let mut rng = SplitMix64::new(ordering_seed(experiment_id, participant_id));
    shuffle(&mut out, &mut rng);
    out
}
