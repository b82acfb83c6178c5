//! Pearson, Spearman and Kendall coefficients and the grouped-budget ranking
//! protocol.
//!
//! Spearman uses average ranks for ties. Kendall is tau-a: tied pairs count
//! as neither concordant nor discordant and the denominator is all pairs.

use std::cmp::Ordering;

use log::warn;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::RealScalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankStats<T> {
    pub pearson: T,
    pub spearman: T,
    pub kendall: T,
    pub n: usize,
}

fn check_inputs<T: RealScalar>(r: &[T], s: &[T]) -> Result<()> {
    if r.len() != s.len() {
        return Err(Error::LengthMismatch { left: r.len(), right: s.len() });
    }
    if r.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: r.len() });
    }
    if r.iter().chain(s).any(|v| !v.is_finite()) {
        return Err(Error::invalid("inputs must be finite"));
    }
    Ok(())
}

fn cmp<T: RealScalar>(a: &T, b: &T) -> Ordering {
    a.partial_cmp(b).unwrap_or(Ordering::Equal)
}

fn mean<T: RealScalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, &x| acc + x) / T::from_usize(v.len()).unwrap()
}

pub fn pearson<T: RealScalar>(r: &[T], s: &[T]) -> Result<T> {
    check_inputs(r, s)?;
    let (mr, ms) = (mean(r), mean(s));
    let (mut cov, mut vr, mut vs) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in r.iter().zip(s) {
        let (da, db) = (a - mr, b - ms);
        cov = cov + da * db;
        vr = vr + da * da;
        vs = vs + db * db;
    }
    if vr == T::zero() || vs == T::zero() {
        return Err(Error::UndefinedCoefficient("zero variance".into()));
    }
    let rho = cov / (vr * vs).sqrt();
    Ok(rho.max(-T::one()).min(T::one()))
}

/// 1-based ranks; tied values share the average of their positions.
pub fn average_ranks<T: RealScalar>(v: &[T]) -> Vec<T> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| cmp(&v[a], &v[b]));
    let mut ranks = vec![T::zero(); v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end averaged
        let avg = T::from_usize(start + 1 + end).unwrap() / T::from_usize(2).unwrap();
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        start = end;
    }
    ranks
}

pub fn spearman<T: RealScalar>(r: &[T], s: &[T]) -> Result<T> {
    check_inputs(r, s)?;
    pearson(&average_ranks(r), &average_ranks(s))
}

/// `1 − 6 Σ d² / (n (n² − 1))`; only valid when neither input has ties.
pub fn spearman_closed_form<T: RealScalar>(r: &[T], s: &[T]) -> Result<T> {
    check_inputs(r, s)?;
    let (rr, rs) = (average_ranks(r), average_ranks(s));
    let distinct = |ranks: &[T]| ranks.iter().all(|x| x.fract() == T::zero());
    let has_ties = |v: &[T]| {
        let mut sorted = v.to_vec();
        sorted.sort_by(cmp);
        sorted.windows(2).any(|w| w[0] == w[1])
    };
    if has_ties(r) || has_ties(s) || !distinct(&rr) || !distinct(&rs) {
        return Err(Error::invalid("closed-form Spearman needs distinct values"));
    }
    let n = T::from_usize(r.len()).unwrap();
    let d2 = rr.iter().zip(&rs).fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
    Ok(T::one() - T::from_usize(6).unwrap() * d2 / (n * (n * n - T::one())))
}

/// Inversions of `v` (pairs i < j with v[i] > v[j]) by merge sort.
fn count_inversions<T: RealScalar>(v: &mut [T], buf: &mut Vec<T>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut inv = count_inversions(&mut v[..mid], buf) + count_inversions(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            inv += (mid - i) as u64;
            buf.push(v[j]);
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    inv
}

fn tie_pairs<T: RealScalar>(sorted: &[T]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Kendall tau-a, `(n_con − n_discon) / n_all`, in O(n log n).
pub fn kendall<T: RealScalar>(r: &[T], s: &[T]) -> Result<T> {
    check_inputs(r, s)?;
    let n = r.len() as u64;
    let mut order: Vec<usize> = (0..r.len()).collect();
    order.sort_by(|&a, &b| cmp(&r[a], &r[b]).then(cmp(&s[a], &s[b])));

    let n_all = n * (n - 1) / 2;
    let xs: Vec<T> = order.iter().map(|&i| r[i]).collect();
    let tied_x = tie_pairs(&xs);
    // pairs tied in both coordinates are adjacent after the joint sort
    let mut tied_xy = 0u64;
    let mut run = 1u64;
    for w in order.windows(2) {
        if r[w[0]] == r[w[1]] && s[w[0]] == s[w[1]] {
            run += 1;
        } else {
            tied_xy += run * (run - 1) / 2;
            run = 1;
        }
    }
    tied_xy += run * (run - 1) / 2;

    let mut ys: Vec<T> = order.iter().map(|&i| s[i]).collect();
    let mut buf = Vec::with_capacity(ys.len());
    let discordant = count_inversions(&mut ys, &mut buf);
    let tied_y = tie_pairs(&ys);

    let concordant = n_all - tied_x - tied_y + tied_xy - discordant;
    let diff = concordant as f64 - discordant as f64;
    Ok(T::from_f64(diff / n_all as f64).unwrap())
}

pub fn coefficients<T: RealScalar>(r: &[T], s: &[T]) -> Result<RankStats<T>> {
    Ok(RankStats { pearson: pearson(r, s)?, spearman: spearman(r, s)?, kendall: kendall(r, s)?, n: r.len() })
}

/// A FLOPs range `[lo, hi)`; the last range of a list also includes `hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BudgetRange {
    pub lo: f64,
    pub hi: f64,
}

/// `k` equal-width ranges covering `[lo, hi]`.
pub fn uniform_budgets(lo: f64, hi: f64, k: usize) -> Vec<BudgetRange> {
    let width = (hi - lo) / k as f64;
    (0..k)
        .map(|i| BudgetRange {
            lo: lo + width * i as f64,
            hi: if i + 1 == k { hi } else { lo + width * (i + 1) as f64 },
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupStats {
    pub range: BudgetRange,
    pub n: usize,
    pub stats: Option<RankStats<f64>>,
    pub warning: Option<String>,
}

/// Ranks FLOPs against score inside each budget range.
///
/// Every path must fall into exactly one range. Ranges holding fewer than
/// two paths, or constant values, are reported with a warning and no stats.
pub fn grouped_budget_eval(paths: &[(f64, f64)], budgets: &[BudgetRange]) -> Result<Vec<GroupStats>> {
    if budgets.is_empty() {
        return Err(Error::invalid("at least one budget range is required"));
    }
    let last = budgets.len() - 1;
    let contains = |k: usize, f: f64| {
        let b = budgets[k];
        f >= b.lo && (f < b.hi || (k == last && f == b.hi))
    };
    let mut members: Vec<Vec<(f64, f64)>> = vec![Vec::new(); budgets.len()];
    for (p, &(flops, score)) in paths.iter().enumerate() {
        let hits: Vec<usize> = (0..budgets.len()).filter(|&k| contains(k, flops)).collect();
        match hits.as_slice() {
            [k] => members[*k].push((flops, score)),
            [] => return Err(Error::invalid(format!("path {p} with {flops} GFLOPs is outside every budget range"))),
            _ => return Err(Error::invalid(format!("path {p} with {flops} GFLOPs falls in overlapping ranges"))),
        }
    }
    let groups = budgets
        .iter()
        .zip(members)
        .map(|(&range, group)| {
            let (flops, scores): (Vec<f64>, Vec<f64>) = group.iter().copied().unzip();
            let (stats, warning) = if group.len() < 2 {
                (None, Some(format!("{} path(s) in range, need 2", group.len())))
            } else {
                match coefficients(&flops, &scores) {
                    Ok(s) => (Some(s), None),
                    Err(e) => (None, Some(e.to_string())),
                }
            };
            if let Some(w) = &warning {
                warn!("budget range [{}, {}): {w}", range.lo, range.hi);
            }
            GroupStats { range, n: group.len(), stats, warning }
        })
        .collect();
    Ok(groups)
}
