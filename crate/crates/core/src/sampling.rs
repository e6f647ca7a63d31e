//! Deterministic low-discrepancy point sets.

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Radical inverse of `index` in the given base, a value in `[0, 1)`.
pub fn radical_inverse(mut index: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while index > 0 {
        r += (index % b) as f64 * f;
        index /= b;
        f *= inv;
    }
    r
}

/// Point `index` of the Halton sequence in `[0, 1)^dim`. Dimensions beyond
/// the built-in prime table reuse it with a scrambled index.
pub fn halton(index: u64, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|k| {
            let base = PRIMES[k % PRIMES.len()];
            let idx = index + 1 + (k / PRIMES.len()) as u64 * 7919;
            radical_inverse(idx, base)
        })
        .collect()
}
