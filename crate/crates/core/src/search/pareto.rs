//! Non-dominated sorting, crowding distance and 2-D hypervolume.
//!
//! Objective vectors are always *maximised*; callers negate anything they
//! want to minimise.

use std::cmp::Ordering;

/// True if `a` is at least as good as `b` everywhere and better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        if x > y {
            strictly = true;
        }
    }
    strictly
}

/// Fast non-dominated sort. Returns fronts of indices; front 0 is the
/// non-dominated set and indices within a front are ascending.
pub fn nondominated_sort(points: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut dominated_by = vec![0usize; n];
    let mut dominates_list: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            if dominates(&points[i], &points[j]) {
                dominates_list[i].push(j);
                dominated_by[j] += 1;
            } else if dominates(&points[j], &points[i]) {
                dominates_list[j].push(i);
                dominated_by[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominates_list[i] {
                dominated_by[j] -= 1;
                if dominated_by[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(std::mem::replace(&mut current, next));
    }
    fronts
}

/// Crowding distance of each member of `front` (aligned with `front`).
/// Boundary points get `f64::INFINITY`.
pub fn crowding_distance(points: &[Vec<f64>], front: &[usize]) -> Vec<f64> {
    let m = front.len();
    let mut dist = vec![0.0; m];
    if m <= 2 {
        return vec![f64::INFINITY; m];
    }
    let n_obj = points[front[0]].len();
    let mut order: Vec<usize> = (0..m).collect();
    for k in 0..n_obj {
        order.sort_by(|&a, &b| {
            points[front[a]][k].partial_cmp(&points[front[b]][k]).unwrap_or(Ordering::Equal).then(a.cmp(&b))
        });
        let lo = points[front[order[0]]][k];
        let hi = points[front[order[m - 1]]][k];
        dist[order[0]] = f64::INFINITY;
        dist[order[m - 1]] = f64::INFINITY;
        let range = hi - lo;
        if range <= 0.0 {
            continue;
        }
        for w in 1..m - 1 {
            let gap = points[front[order[w + 1]]][k] - points[front[order[w - 1]]][k];
            dist[order[w]] += gap / range;
        }
    }
    dist
}

/// Area dominated by `(score, flops)` points — score maximised, flops
/// minimised — inside the box `score ≥ score_ref`, `flops ≤ budget`.
pub fn hypervolume_2d(points: &[(f64, f64)], score_ref: f64, budget: f64) -> f64 {
    let mut pts: Vec<(f64, f64)> = points.iter().copied().filter(|&(s, f)| s > score_ref && f <= budget).collect();
    pts.sort_by(|a, b| {
        a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal).then(b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal))
    });
    let mut best = score_ref;
    let mut area = 0.0;
    for (s, f) in pts {
        if s > best {
            area += (budget - f) * (s - best);
            best = s;
        }
    }
    area
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_fronts() {
        let pts = vec![vec![1.0, 1.0], vec![2.0, 2.0]];
        assert_eq!(nondominated_sort(&pts), vec![vec![1], vec![0]]);
        let pts = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        assert_eq!(nondominated_sort(&pts), vec![vec![0, 1]]);
        assert!(nondominated_sort(&[]).is_empty());
    }

    #[test]
    fn equal_points_share_a_front() {
        let pts = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        assert_eq!(nondominated_sort(&pts), vec![vec![0, 1]]);
    }

    #[test]
    fn crowding_boundaries_are_infinite() {
        let pts = vec![vec![0.0, 3.0], vec![1.0, 2.0], vec![2.0, 1.0], vec![3.0, 0.0]];
        let d = crowding_distance(&pts, &[0, 1, 2, 3]);
        assert!(d[0].is_infinite() && d[3].is_infinite());
        assert!((d[1] - 4.0 / 3.0).abs() < 1e-12);
        assert!((d[2] - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn hypervolume_staircase() {
        // Two steps: (score 2, flops 1) and (score 3, flops 2), budget 4.
        let hv = hypervolume_2d(&[(2.0, 1.0), (3.0, 2.0), (1.0, 3.0)], 0.0, 4.0);
        assert!((hv - (3.0 * 2.0 + 2.0 * 1.0)).abs() < 1e-12);
        assert_eq!(hypervolume_2d(&[(1.0, 5.0)], 0.0, 4.0), 0.0);
    }
}
