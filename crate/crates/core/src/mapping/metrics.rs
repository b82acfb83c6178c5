use serde::Serialize;

use super::{BetaMatrix, ChannelMapping};
use crate::scalar::Scalar;

/// `psi[group][width]`: fractional contribution of a used group inside a
/// width-`j` candidate, `1/j`, and zero on unused cells.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceMatrix<T> {
    l: usize,
    psi: Vec<T>,
}

impl<T: Scalar> InfluenceMatrix<T> {
    pub fn from_beta(beta: &BetaMatrix) -> Self {
        let l = beta.l();
        let mut psi = Vec::with_capacity(l * l);
        for i in 0..l {
            for w in 1..=l {
                psi.push(if beta.get(i, w) { T::from_ratio(1, w as i64) } else { T::zero() });
            }
        }
        Self { l, psi }
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn get(&self, group: usize, width: usize) -> &T {
        &self.psi[group * self.l + width - 1]
    }

    /// Summed influence of `group` over all widths.
    pub fn row_sum(&self, group: usize) -> T {
        self.psi[group * self.l..(group + 1) * self.l].iter().fold(T::zero(), |acc, v| acc + v.clone())
    }
}

/// Training counts, per-group influence and the influence gap of a mapping.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MappingMetrics<T> {
    pub training_counts: Vec<usize>,
    pub influence: Vec<T>,
    pub influence_gap: T,
}

impl<T: Scalar> MappingMetrics<T> {
    pub fn to_f64(&self) -> MappingMetrics<f64> {
        MappingMetrics {
            training_counts: self.training_counts.clone(),
            influence: self.influence.iter().map(Scalar::as_f64).collect(),
            influence_gap: self.influence_gap.as_f64(),
        }
    }
}

/// One influence matrix per block.
pub fn influence_matrices<T: Scalar>(mapping: &ChannelMapping) -> Vec<InfluenceMatrix<T>> {
    mapping.blocks().iter().map(InfluenceMatrix::from_beta).collect()
}

/// Sum over unordered pairs of squared differences.
pub(crate) fn pairwise_gap<T: Scalar>(values: &[T]) -> T {
    let mut gap = T::zero();
    for (a, x) in values.iter().enumerate() {
        for y in &values[a + 1..] {
            let d = x.clone() - y.clone();
            gap = gap + d.clone() * d;
        }
    }
    gap
}

/// Scores a mapping. Bilateral influence sums both blocks.
pub fn metrics<T: Scalar>(mapping: &ChannelMapping) -> MappingMetrics<T> {
    let l = mapping.l();
    let mut influence = vec![T::zero(); l];
    for psi in influence_matrices::<T>(mapping) {
        for (i, acc) in influence.iter_mut().enumerate() {
            *acc = acc.clone() + psi.row_sum(i);
        }
    }
    let influence_gap = pairwise_gap(&influence);
    MappingMetrics { training_counts: mapping.training_counts(), influence, influence_gap }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::{build_bilateral, build_ordinal};
    use num_rational::{BigRational, Ratio};

    fn q(n: i64, d: i64) -> Ratio<i64> {
        Ratio::new(n, d)
    }

    fn harmonic(n: usize) -> Ratio<i64> {
        (1..=n as i64).fold(q(0, 1), |acc, k| acc + q(1, k))
    }

    #[test]
    fn ordinal_three_exact() {
        let m = metrics::<Ratio<i64>>(&build_ordinal(3).unwrap());
        assert_eq!(m.influence, vec![q(11, 6), q(5, 6), q(1, 3)]);
        assert_eq!(m.influence_gap, q(7, 2));
        assert_eq!(m.training_counts, vec![3, 2, 1]);
    }

    #[test]
    fn bilateral_three_matches_harmonic_oracle() {
        let m = metrics::<Ratio<i64>>(&build_bilateral(3).unwrap());
        let h3 = harmonic(3);
        for i in 1..=3usize {
            let expected = (h3 - harmonic(i - 1)) + (h3 - harmonic(3 - i));
            assert_eq!(m.influence[i - 1], expected);
        }
    }

    #[test]
    fn uniform_rows_have_zero_gap() {
        // l=1 and bilateral l=2 both give identical row influence
        let m = metrics::<BigRational>(&build_ordinal(1).unwrap());
        assert_eq!(m.influence_gap, BigRational::from_integer(0.into()));
        let m = metrics::<Ratio<i64>>(&build_bilateral(2).unwrap());
        assert_eq!(m.influence_gap, q(0, 1));
    }

    #[test]
    fn psi_constant_within_column_and_monotone_in_rows() {
        let mapping = build_ordinal(6).unwrap();
        let psi = &influence_matrices::<f64>(&mapping)[0];
        for w in 1..=6 {
            let used: Vec<f64> = (0..6).filter(|&i| mapping.beta().get(i, w)).map(|i| *psi.get(i, w)).collect();
            assert!(used.iter().all(|&v| v == used[0]));
        }
        for i in 0..6 {
            let row: Vec<f64> = (1..=6).filter(|&w| mapping.beta().get(i, w)).map(|w| *psi.get(i, w)).collect();
            assert!(row.windows(2).all(|p| p[0] >= p[1]));
        }
    }

    #[test]
    fn f32_and_f64_agree() {
        let m64 = metrics::<f64>(&build_ordinal(8).unwrap());
        let m32 = metrics::<f32>(&build_ordinal(8).unwrap());
        assert!((m64.influence_gap - m32.influence_gap as f64).abs() < 1e-4);
    }
}
