//! Exact integer bookkeeping for the mapping optimizers.
//!
//! Influence is scaled by `lcm(1..=l)` so `psi = 1/j` becomes the integer
//! `lcm / j`. Column sums fix the total influence at `l`, hence
//! `gap = l·Σ I² − l²` and minimising the gap is minimising `Σ I²`.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;

pub(crate) struct Units {
    pub l: usize,
    pub scale: i128,
    /// `step[c]` = scale / (c + 1).
    pub step: Vec<i128>,
}

impl Units {
    pub fn new(l: usize) -> Self {
        let scale = (1..=l as i128).fold(1i128, |acc, k| acc.lcm(&k));
        let step = (1..=l as i128).map(|w| scale / w).collect();
        Self { l, scale, step }
    }

    pub fn rows(&self, cols: &[u64]) -> (Vec<i128>, Vec<usize>) {
        let mut units = vec![0i128; self.l];
        let mut counts = vec![0usize; self.l];
        for (c, &mask) in cols.iter().enumerate() {
            for i in 0..self.l {
                if mask >> i & 1 == 1 {
                    units[i] += self.step[c];
                    counts[i] += 1;
                }
            }
        }
        (units, counts)
    }

    pub fn sum_sq(units: &[i128]) -> i128 {
        units.iter().map(|u| u * u).sum()
    }

    /// Pairwise gap scaled by `scale²`.
    pub fn scaled_gap(&self, units: &[i128]) -> i128 {
        let total: i128 = units.iter().sum();
        self.l as i128 * Self::sum_sq(units) - total * total
    }

    #[allow(dead_code)]
    pub fn gap_f64(&self, units: &[i128]) -> f64 {
        let s = self.scale as f64;
        self.scaled_gap(units) as f64 / (s * s)
    }

    #[allow(dead_code)]
    pub fn gap_exact(&self, units: &[i128]) -> BigRational {
        let s = BigInt::from(self.scale);
        BigRational::new(BigInt::from(self.scaled_gap(units)), &s * &s)
    }
}

/// Contiguous run of `width` groups starting at `start`, modulo `l`.
pub(crate) fn window(l: usize, start: usize, width: usize) -> u64 {
    (0..width).fold(0u64, |acc, k| acc | 1 << ((start + k) % l))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::{build_ordinal, metrics};
    use num_rational::BigRational;

    #[test]
    fn scaled_gap_matches_pairwise_route() {
        for l in 1..=16 {
            let m = build_ordinal(l).unwrap();
            let u = Units::new(l);
            let (units, counts) = u.rows(&m.beta().column_masks());
            assert_eq!(counts, m.training_counts());
            let exact = metrics::<BigRational>(&m).influence_gap;
            assert_eq!(u.gap_exact(&units), exact, "l={l}");
        }
    }

    #[test]
    fn window_wraps() {
        assert_eq!(window(5, 3, 3), 0b11001);
        assert_eq!(window(4, 0, 4), 0b1111);
    }
}
