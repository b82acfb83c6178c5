use super::units::{window, Units};
use super::{check_l, refine_local_search, spread, BetaMatrix, ChannelMapping, MappingKind};
use crate::error::{Error, Result};

/// Largest group count accepted by the cyclic builder and local search.
pub const MAX_OPTIMIZED_GROUPS: usize = 40;

/// Iterations of the local-search pass used by non-contiguous builds.
const REFINE_ITERS: usize = 100_000;
const REFINE_SEED: u64 = 0;

fn evaluate(units: &Units, cols: &[u64]) -> (usize, i128) {
    let (u, counts) = units.rows(cols);
    (spread(&counts), Units::sum_sq(&u))
}

/// Greedy placement, widest first: each width takes the cyclic window that
/// keeps row counts tightest, then keeps partial influence most even.
fn greedy_windows(units: &Units) -> Vec<u64> {
    let l = units.l;
    let mut cols = vec![0u64; l];
    let mut row_units = vec![0i128; l];
    let mut counts = vec![0usize; l];
    for width in (1..=l).rev() {
        let step = units.step[width - 1];
        let mut best: Option<(usize, i128, usize)> = None;
        for start in 0..l {
            let mut c = counts.clone();
            let mut u = row_units.clone();
            for k in 0..width {
                let g = (start + k) % l;
                c[g] += 1;
                u[g] += step;
            }
            let key = (spread(&c), Units::sum_sq(&u), start);
            if best.is_none_or(|b| key < b) {
                best = Some(key);
            }
        }
        let start = best.map(|b| b.2).unwrap_or(0);
        for k in 0..width {
            let g = (start + k) % l;
            counts[g] += 1;
            row_units[g] += step;
        }
        cols[width - 1] = window(l, start, width);
    }
    cols
}

/// Consecutive windows wrapping around the groups; row counts differ by at
/// most one by construction.
fn round_robin(l: usize) -> Vec<u64> {
    let mut cols = vec![0u64; l];
    let mut start = 0;
    for width in (1..=l).rev() {
        cols[width - 1] = window(l, start, width);
        start = (start + width) % l;
    }
    cols
}

/// Re-place one width's window at a time while the gap strictly drops.
fn descend_offsets(units: &Units, cols: &mut [u64]) {
    let l = units.l;
    let (_, mut current) = evaluate(units, cols);
    loop {
        let mut improved = false;
        for c in 0..l.saturating_sub(1) {
            let keep = cols[c];
            let mut best = (current, keep);
            for start in 0..l {
                cols[c] = window(l, start, c + 1);
                let (s, sq) = evaluate(units, cols);
                if s <= 1 && sq < best.0 {
                    best = (sq, cols[c]);
                }
            }
            cols[c] = best.1;
            if best.0 < current {
                current = best.0;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
}

/// Builds a cyclic mapping.
///
/// The result satisfies the column sums exactly and keeps every pair of row
/// counts within one of each other. With `contiguous` each width uses a
/// single run of groups (modulo `l`); otherwise a local-search pass may
/// scatter groups to lower the influence gap further. Deterministic.
pub fn build_cyclic(l: usize, contiguous: bool) -> Result<ChannelMapping> {
    check_l(l)?;
    if l > MAX_OPTIMIZED_GROUPS {
        return Err(Error::UnsupportedSize { what: "l", got: l, limit: MAX_OPTIMIZED_GROUPS });
    }
    let units = Units::new(l);
    let mut cols = greedy_windows(&units);
    if evaluate(&units, &cols).0 > 1 {
        cols = round_robin(l);
    }
    descend_offsets(&units, &mut cols);
    let mapping = ChannelMapping::from_parts(MappingKind::Cyclic, vec![BetaMatrix::from_column_masks(l, &cols)]);
    if contiguous {
        return Ok(mapping);
    }
    refine_local_search(&mapping, REFINE_ITERS, REFINE_SEED)
}
