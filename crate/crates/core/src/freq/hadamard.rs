//! Walsh–Hadamard transform and the Hadamard-response entry.

/// `H[r, x] = (−1)^{popcount(r & x)}`.
#[inline]
pub fn entry(r: u64, x: u64) -> f64 {
    if (r & x).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// In-place unnormalized transform: afterwards `a[x] = Σ_r a_in[r]·H[r, x]`.
///
/// # Panics
/// If the length is not a power of two.
pub fn fwht(a: &mut [f64]) {
    let n = a.len();
    assert!(n.is_power_of_two(), "length must be a power of two");
    let mut h = 1;
    while h < n {
        for block in a.chunks_exact_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                let (u, v) = (*x, *y);
                *x = u + v;
                *y = u - v;
            }
        }
        h *= 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn matches_direct_sum() {
        let input: Vec<f64> = (0..16).map(|i| (i * 7 % 5) as f64 - 2.0).collect();
        let mut a = input.clone();
        fwht(&mut a);
        for x in 0..16u64 {
            let direct: f64 = (0..16u64).map(|r| input[r as usize] * entry(r, x)).sum();
            assert_eq!(a[x as usize], direct);
        }
    }

    #[test]
    fn twice_scales_by_length() {
        let mut a = [1.0, -2.0, 0.5, 3.0];
        fwht(&mut a);
        fwht(&mut a);
        assert_eq!(a, [4.0, -8.0, 2.0, 12.0]);
    }
}
