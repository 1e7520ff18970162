/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-task seed `base ^ hash(coords)`.
///
/// Seeds depend only on a task's coordinates (e.g. size, grid index, sample
/// index), never on scheduling order.
pub fn derive_seed(base: u64, coords: &[u64]) -> u64 {
    let h = coords.iter().fold(0x5851_f42d_4c95_7f2d, |acc, &c| mix(acc ^ mix(c)));
    base ^ h
}
