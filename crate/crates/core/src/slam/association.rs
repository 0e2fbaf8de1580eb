//! Marginal data-association probabilities for detected landmarks.
//!
//! A global hypothesis assigns each landmark `i` either a miss or one
//! measurement `j`, with no measurement used twice; its weight is
//! `prod_i w[i][a_i] * prod_{j unused} u[j]`.

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Largest cluster (in measurements) solved exactly.
pub const MAX_EXACT_MEASUREMENTS: usize = 16;

/// Marginal association probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    /// `I x (M+1)`, column 0 is the missed-detection event.
    pub landmark: DMatrix<f64>,
    /// Probability that each measurement is left to a new landmark or clutter.
    pub unassigned: Vec<f64>,
}

fn check(weights: &DMatrix<f64>, u: &[f64]) -> Result<()> {
    if weights.ncols() != u.len() + 1 {
        return Err(Error::InvalidArgument(
            "association weights need one column per measurement plus the miss column".into(),
        ));
    }
    if weights.iter().chain(u.iter()).any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidArgument("association weights must be finite and >= 0".into()));
    }
    Ok(())
}

/// Marginal association probabilities.
///
/// `weights` is `I x (M+1)` with column 0 holding the miss weight and column
/// `j` the weight of pairing with measurement `j-1`; `u[j]` is the weight of
/// measurement `j` not being assigned to any landmark. Independent clusters are
/// solved separately, exactly when small enough and by loopy belief propagation
/// otherwise.
pub fn marginal_associations(weights: &DMatrix<f64>, u: &[f64]) -> Result<Marginals> {
    check(weights, u)?;
    let n = weights.nrows();
    let m = u.len();
    let mut landmark = DMatrix::zeros(n, m + 1);
    let mut unassigned = vec![1.0; m];
    let mut seen_l = vec![false; n];
    let mut seen_m = vec![false; m];
    for start in 0..n {
        if seen_l[start] {
            continue;
        }
        // Connected component through nonzero pairings.
        let mut ls = vec![start];
        let mut ms = Vec::new();
        seen_l[start] = true;
        let mut k = 0;
        while k < ls.len() {
            let i = ls[k];
            for j in 0..m {
                if weights[(i, j + 1)] > 0.0 && !seen_m[j] {
                    seen_m[j] = true;
                    ms.push(j);
                    for i2 in 0..n {
                        if !seen_l[i2] && weights[(i2, j + 1)] > 0.0 {
                            seen_l[i2] = true;
                            ls.push(i2);
                        }
                    }
                }
            }
            k += 1;
        }
        ls.sort_unstable();
        ms.sort_unstable();
        let sub = DMatrix::from_fn(ls.len(), ms.len() + 1, |a, b| {
            if b == 0 {
                weights[(ls[a], 0)]
            } else {
                weights[(ls[a], ms[b - 1] + 1)]
            }
        });
        let su: Vec<f64> = ms.iter().map(|&j| u[j]).collect();
        let part = if ms.len() <= MAX_EXACT_MEASUREMENTS {
            exact(&sub, &su)?
        } else {
            loopy_bp(&sub, &su, 1e-12, 10_000)?
        };
        for (a, &i) in ls.iter().enumerate() {
            landmark[(i, 0)] = part.landmark[(a, 0)];
            for (b, &j) in ms.iter().enumerate() {
                landmark[(i, j + 1)] = part.landmark[(a, b + 1)];
            }
        }
        for (b, &j) in ms.iter().enumerate() {
            unassigned[j] = part.unassigned[b];
        }
    }
    Ok(Marginals { landmark, unassigned })
}

/// Row and column rescaling; marginals are invariant to both.
fn normalise(weights: &DMatrix<f64>, u: &[f64]) -> (DMatrix<f64>, Vec<f64>) {
    let mut w = weights.clone();
    let mut u = u.to_vec();
    for i in 0..w.nrows() {
        let mx = w.row(i).max();
        if mx > 0.0 {
            w.row_mut(i).scale_mut(1.0 / mx);
        }
    }
    for j in 0..u.len() {
        let mx = w.column(j + 1).max().max(u[j]);
        if mx > 0.0 {
            w.column_mut(j + 1).scale_mut(1.0 / mx);
            u[j] /= mx;
        }
    }
    (w, u)
}

/// Exact marginals by forward/backward recursion over landmarks with a bitmask
/// of used measurements.
pub fn exact(weights: &DMatrix<f64>, u: &[f64]) -> Result<Marginals> {
    check(weights, u)?;
    let n = weights.nrows();
    let m = u.len();
    if m > 24 {
        return Err(Error::InvalidArgument("too many measurements for exact association".into()));
    }
    let (w, u) = normalise(weights, u);
    let size = 1usize << m;
    let mut fwd = vec![vec![0.0; size]; n + 1];
    fwd[0][0] = 1.0;
    for i in 0..n {
        let (head, tail) = fwd.split_at_mut(i + 1);
        let cur = &head[i];
        let next = &mut tail[0];
        for mask in 0..size {
            let f = cur[mask];
            if f == 0.0 {
                continue;
            }
            next[mask] += f * w[(i, 0)];
            for j in 0..m {
                if mask & (1 << j) == 0 {
                    next[mask | (1 << j)] += f * w[(i, j + 1)];
                }
            }
        }
    }
    let mut bwd = vec![vec![0.0; size]; n + 1];
    for mask in 0..size {
        let mut p = 1.0;
        for (j, uj) in u.iter().enumerate() {
            if mask & (1 << j) == 0 {
                p *= uj;
            }
        }
        bwd[n][mask] = p;
    }
    for i in (0..n).rev() {
        for mask in 0..size {
            let mut b = w[(i, 0)] * bwd[i + 1][mask];
            for j in 0..m {
                if mask & (1 << j) == 0 {
                    b += w[(i, j + 1)] * bwd[i + 1][mask | (1 << j)];
                }
            }
            bwd[i][mask] = b;
        }
    }
    let z = bwd[0][0];
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::Infeasible("association hypotheses have zero total weight".into()));
    }
    let mut landmark = DMatrix::zeros(n, m + 1);
    let mut used = vec![0.0; m];
    for i in 0..n {
        for mask in 0..size {
            let f = fwd[i][mask];
            if f == 0.0 {
                continue;
            }
            landmark[(i, 0)] += f * w[(i, 0)] * bwd[i + 1][mask];
            for j in 0..m {
                if mask & (1 << j) == 0 {
                    landmark[(i, j + 1)] += f * w[(i, j + 1)] * bwd[i + 1][mask | (1 << j)];
                }
            }
        }
        for j in 0..=m {
            landmark[(i, j)] /= z;
        }
        for j in 0..m {
            used[j] += landmark[(i, j + 1)];
        }
    }
    let unassigned = used.iter().map(|p| (1.0f64 - p).clamp(0.0, 1.0)).collect();
    Ok(Marginals { landmark, unassigned })
}

/// Approximate marginals by loopy belief propagation on the bipartite
/// landmark/measurement graph.
pub fn loopy_bp(weights: &DMatrix<f64>, u: &[f64], tol: f64, max_iter: usize) -> Result<Marginals> {
    check(weights, u)?;
    let n = weights.nrows();
    let m = u.len();
    let (w, u) = normalise(weights, u);
    // psi[i][j] = w_ij / (w_i0 u_j); infinite ratios are capped.
    let psi = DMatrix::from_fn(n, m, |i, j| {
        let d = w[(i, 0)] * u[j];
        let v = w[(i, j + 1)];
        if v == 0.0 {
            0.0
        } else if d > 0.0 {
            (v / d).min(1e300)
        } else {
            1e300
        }
    });
    let mut nu = DMatrix::from_element(n, m, 1.0);
    let mut mu = DMatrix::zeros(n, m);
    for _ in 0..max_iter {
        for i in 0..n {
            let s: f64 = (0..m).map(|j| psi[(i, j)] * nu[(i, j)]).sum();
            for j in 0..m {
                mu[(i, j)] = psi[(i, j)] / (1.0 + s - psi[(i, j)] * nu[(i, j)]);
            }
        }
        let mut delta: f64 = 0.0;
        for j in 0..m {
            let s: f64 = (0..n).map(|i| mu[(i, j)]).sum();
            for i in 0..n {
                let v = 1.0 / (1.0 + s - mu[(i, j)]);
                delta = delta.max((v - nu[(i, j)]).abs());
                nu[(i, j)] = v;
            }
        }
        if delta < tol {
            break;
        }
    }
    let mut landmark = DMatrix::zeros(n, m + 1);
    for i in 0..n {
        let s: f64 = (0..m).map(|j| psi[(i, j)] * nu[(i, j)]).sum();
        landmark[(i, 0)] = 1.0 / (1.0 + s);
        for j in 0..m {
            landmark[(i, j + 1)] = psi[(i, j)] * nu[(i, j)] / (1.0 + s);
        }
    }
    let unassigned = (0..m)
        .map(|j| {
            let s: f64 = (0..n).map(|i| mu[(i, j)]).sum();
            1.0 / (1.0 + s)
        })
        .collect();
    Ok(Marginals { landmark, unassigned })
}

#[cfg(test)]
pub(crate) fn brute_force(weights: &DMatrix<f64>, u: &[f64]) -> Marginals {
    let n = weights.nrows();
    let m = u.len();
    let mut landmark = DMatrix::zeros(n, m + 1);
    let mut unassigned = vec![0.0; m];
    let mut total = 0.0;
    let mut a = vec![0usize; n];
    loop {
        let mut used = vec![false; m];
        let mut ok = true;
        for &j in &a {
            if j > 0 {
                if used[j - 1] {
                    ok = false;
                }
                used[j - 1] = true;
            }
        }
        if ok {
            let mut wgt = 1.0;
            for (i, &j) in a.iter().enumerate() {
                wgt *= weights[(i, j)];
            }
            for j in 0..m {
                if !used[j] {
                    wgt *= u[j];
                }
            }
            total += wgt;
            for (i, &j) in a.iter().enumerate() {
                landmark[(i, j)] += wgt;
            }
            for j in 0..m {
                if !used[j] {
                    unassigned[j] += wgt;
                }
            }
        }
        let mut k = 0;
        loop {
            if k == n {
                landmark /= total;
                for v in unassigned.iter_mut() {
                    *v /= total;
                }
                return Marginals { landmark, unassigned };
            }
            a[k] += 1;
            if a[k] <= m {
                break;
            }
            a[k] = 0;
            k += 1;
        }
    }
}
