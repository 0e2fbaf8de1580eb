//! Linear assignment: Hungarian solver with forbidden entries and Murty's k-best ranking.

use nalgebra::DMatrix;

use crate::{Error, Result};

/// A row-to-column assignment and its total cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Column assigned to each row.
    pub columns: Vec<usize>,
    pub cost: f64,
}

/// Minimum-cost assignment of every row to a distinct column (`rows <= cols`).
///
/// Entries equal to `+inf` are forbidden. Returns [`Error::Infeasible`] when no
/// assignment avoids them.
pub fn hungarian(cost: &DMatrix<f64>) -> Result<Assignment> {
    let (n, m) = cost.shape();
    if n > m {
        return Err(Error::InvalidArgument(format!(
            "assignment needs rows <= columns, got {n}x{m}"
        )));
    }
    if n == 0 {
        return Ok(Assignment { columns: Vec::new(), cost: 0.0 });
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &c in cost.iter() {
        if c.is_nan() || c == f64::NEG_INFINITY {
            return Err(Error::InvalidArgument("assignment cost must be finite or +inf".into()));
        }
        if c.is_finite() {
            lo = lo.min(c);
            hi = hi.max(c);
        }
    }
    if !lo.is_finite() {
        return Err(Error::Infeasible("every assignment entry is forbidden".into()));
    }
    // Forbidden entries become a penalty larger than any all-finite assignment.
    let big = (hi - lo + 1.0) * (n as f64 + 1.0);
    let a = |i: usize, j: usize| {
        let c = cost[(i, j)];
        if c.is_finite() {
            c - lo
        } else {
            big
        }
    };

    // Shortest augmenting path with potentials, 1-based with a virtual column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = a(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut columns = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            columns[p[j] - 1] = j - 1;
        }
    }
    let mut total = 0.0;
    for (i, &j) in columns.iter().enumerate() {
        let c = cost[(i, j)];
        if !c.is_finite() {
            return Err(Error::Infeasible("no assignment avoids forbidden entries".into()));
        }
        total += c;
    }
    Ok(Assignment { columns, cost: total })
}

/// The `k` lowest-cost assignments in non-decreasing cost order (Murty).
///
/// Fewer than `k` are returned when fewer feasible assignments exist.
pub fn murty(cost: &DMatrix<f64>, k: usize) -> Result<Vec<Assignment>> {
    let best = hungarian(cost)?;
    let mut out = Vec::new();
    if k == 0 {
        return Ok(out);
    }
    // Each node: (solution, constrained cost matrix).
    let mut queue: Vec<(Assignment, DMatrix<f64>)> = vec![(best, cost.clone())];
    while out.len() < k && !queue.is_empty() {
        let idx = queue
            .iter()
            .enumerate()
            .min_by(|a, b| a.1 .0.cost.total_cmp(&b.1 .0.cost))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let (sol, mat) = queue.swap_remove(idx);
        let mut node = mat;
        for i in 0..sol.columns.len() {
            // Forbid row i's current column, keep rows < i fixed.
            let mut child = node.clone();
            child[(i, sol.columns[i])] = f64::INFINITY;
            if let Ok(s) = hungarian(&child) {
                queue.push((s, child));
            }
            let j = sol.columns[i];
            for c in 0..node.ncols() {
                if c != j {
                    node[(i, c)] = f64::INFINITY;
                }
            }
            for r in 0..node.nrows() {
                if r != i {
                    node[(r, j)] = f64::INFINITY;
                }
            }
        }
        out.push(sol);
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) fn brute_force(cost: &DMatrix<f64>) -> Vec<(Vec<usize>, f64)> {
    fn rec(
        cost: &DMatrix<f64>,
        row: usize,
        used: &mut Vec<bool>,
        cur: &mut Vec<usize>,
        out: &mut Vec<(Vec<usize>, f64)>,
    ) {
        if row == cost.nrows() {
            let c: f64 = cur.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum();
            if c.is_finite() {
                out.push((cur.clone(), c));
            }
            return;
        }
        for j in 0..cost.ncols() {
            if !used[j] {
                used[j] = true;
                cur.push(j);
                rec(cost, row + 1, used, cur, out);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(cost, 0, &mut vec![false; cost.ncols()], &mut Vec::new(), &mut out);
    out.sort_by(|a, b| a.1.total_cmp(&b.1));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn trivial() {
        let a = hungarian(&DMatrix::from_element(1, 1, 3.5)).unwrap();
        assert_eq!(a.columns, vec![0]);
        assert_eq!(a.cost, 3.5);
    }

    #[test]
    fn forbidden_entries() {
        let inf = f64::INFINITY;
        let c = DMatrix::from_row_slice(2, 2, &[inf, 1.0, 2.0, inf]);
        let a = hungarian(&c).unwrap();
        assert_eq!(a.columns, vec![1, 0]);
        let c = DMatrix::from_row_slice(2, 2, &[inf, 1.0, inf, 2.0]);
        assert!(matches!(hungarian(&c), Err(Error::Infeasible(_))));
    }

    #[test]
    fn second_best_is_distinct_and_not_cheaper() {
        let c = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0]);
        let k = murty(&c, 2).unwrap();
        assert_eq!(k.len(), 2);
        assert_ne!(k[0].columns, k[1].columns);
        assert!(k[1].cost >= k[0].cost);
    }

    proptest! {
        #[test]
        fn matches_enumeration(vals in prop::collection::vec(-5.0f64..5.0, 12), rows in 1usize..4, forbid in 0usize..12) {
            let cols = 3 + (rows == 3) as usize;
            let mut c = DMatrix::from_fn(rows, cols, |i, j| vals[i * 4 + j]);
            if forbid < rows * cols {
                c[(forbid / cols, forbid % cols)] = f64::INFINITY;
            }
            let all = brute_force(&c);
            let best = hungarian(&c).unwrap();
            prop_assert!((best.cost - all[0].1).abs() < 1e-9);
            let ranked = murty(&c, all.len() + 2).unwrap();
            prop_assert_eq!(ranked.len(), all.len());
            for (r, e) in ranked.iter().zip(all.iter()) {
                prop_assert!((r.cost - e.1).abs() < 1e-9);
            }
        }
    }
}
