use super::units::Units;
use super::{check_l, BetaMatrix, ChannelMapping, MappingKind};
use crate::error::{Error, Result};

/// Largest `l` accepted by [`enumerate_optimal`].
pub const MAX_ENUMERATION_GROUPS: usize = 6;

fn masks_with_popcount(l: usize, k: usize) -> Vec<u64> {
    (0u64..1 << l).filter(|m| m.count_ones() as usize == k).collect()
}

/// Row-major bit sequence used for tie-breaking.
fn row_major_key(l: usize, cols: &[u64]) -> Vec<bool> {
    let mut key = Vec::with_capacity(l * l);
    for i in 0..l {
        for mask in cols {
            key.push(mask >> i & 1 == 1);
        }
    }
    key
}

struct Enumeration<'a> {
    units: &'a Units,
    choices: Vec<Vec<u64>>,
    cap: usize,
    cols: Vec<u64>,
    best: Option<(i128, Vec<bool>, Vec<u64>)>,
}

impl Enumeration<'_> {
    fn visit(&mut self, c: usize, counts: &mut [usize], units: &mut [i128]) {
        let l = self.units.l;
        if c == l {
            let min = counts.iter().min().copied().unwrap_or(0);
            let max = counts.iter().max().copied().unwrap_or(0);
            if max - min > 1 {
                return;
            }
            let gap = self.units.scaled_gap(units);
            let better = match &self.best {
                None => true,
                Some((g, key, _)) => gap < *g || gap == *g && row_major_key(l, &self.cols) < *key,
            };
            if better {
                self.best = Some((gap, row_major_key(l, &self.cols), self.cols.clone()));
            }
            return;
        }
        let step = self.units.step[c];
        for idx in 0..self.choices[c].len() {
            let mask = self.choices[c][idx];
            let mut ok = true;
            for i in 0..l {
                if mask >> i & 1 == 1 {
                    counts[i] += 1;
                    units[i] += step;
                    ok &= counts[i] <= self.cap;
                }
            }
            if ok {
                self.cols[c] = mask;
                self.visit(c + 1, counts, units);
            }
            for i in 0..l {
                if mask >> i & 1 == 1 {
                    counts[i] -= 1;
                    units[i] -= step;
                }
            }
        }
    }
}

/// Exhaustive minimum of the influence gap over all matrices with exact
/// column sums and row-count spread at most one.
///
/// Ties resolve to the lexicographically smallest matrix in row-major order.
pub fn enumerate_optimal(l: usize) -> Result<ChannelMapping> {
    check_l(l)?;
    if l > MAX_ENUMERATION_GROUPS {
        return Err(Error::UnsupportedSize { what: "l", got: l, limit: MAX_ENUMERATION_GROUPS });
    }
    let units = Units::new(l);
    let mut search = Enumeration {
        units: &units,
        choices: (1..=l).map(|w| masks_with_popcount(l, w)).collect(),
        // no row may exceed ceil((l + 1) / 2) once spread <= 1 holds
        cap: (l + 2) / 2,
        cols: vec![0; l],
        best: None,
    };
    let mut counts = vec![0usize; l];
    let mut row_units = vec![0i128; l];
    search.visit(0, &mut counts, &mut row_units);
    let (_, _, cols) = search.best.expect("round-robin windows are always feasible");
    Ok(ChannelMapping::from_parts(MappingKind::Custom, vec![BetaMatrix::from_column_masks(l, &cols)]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::{build_cyclic, metrics};
    use num_rational::Ratio;

    #[test]
    fn single_group() {
        let m = enumerate_optimal(1).unwrap();
        assert!(m.beta().get(0, 1));
        assert_eq!(metrics::<Ratio<i64>>(&m).influence_gap, Ratio::new(0, 1));
    }

    #[test]
    fn two_groups_by_hand() {
        // both feasible matrices have gap (3/2 - 1/2)^2 = 1; row-major
        // tie-break picks group 0 idle at width 1
        let m = enumerate_optimal(2).unwrap();
        assert_eq!(metrics::<Ratio<i64>>(&m).influence_gap, Ratio::new(1, 1));
        assert!(!m.beta().get(0, 1));
        assert!(m.beta().get(1, 1));
    }

    #[test]
    fn known_optima() {
        // frozen from an independent brute force over all column subsets
        let expected = [(3, Ratio::new(1, 2)), (4, Ratio::new(1, 1)), (5, Ratio::new(3, 2)), (6, Ratio::new(1, 1))];
        for (l, gap) in expected {
            let m = enumerate_optimal(l).unwrap();
            assert_eq!(metrics::<Ratio<i64>>(&m).influence_gap, gap, "l={l}");
        }
    }

    #[test]
    fn lower_bounds_cyclic() {
        for l in 1..=6 {
            let opt = metrics::<f64>(&enumerate_optimal(l).unwrap()).influence_gap;
            let cyc = metrics::<f64>(&build_cyclic(l, false).unwrap()).influence_gap;
            assert!(opt <= cyc + 1e-12);
        }
    }

    #[test]
    fn limit() {
        assert!(matches!(enumerate_optimal(7), Err(Error::UnsupportedSize { .. })));
        assert!(matches!(enumerate_optimal(9), Err(Error::UnsupportedSize { .. })));
    }
}
