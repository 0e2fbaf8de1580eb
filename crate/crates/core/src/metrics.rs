//! Evaluation metrics: GOSPA for landmark maps and mean absolute errors for the UE state.

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::assignment::hungarian;
use crate::geometry::wrap_angle;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GospaConfig {
    pub p: f64,
    /// Cutoff distance [m].
    pub c: f64,
    pub alpha: f64,
}

impl Default for GospaConfig {
    fn default() -> Self {
        Self { p: 2.0, c: 20.0, alpha: 2.0 }
    }
}

impl GospaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p >= 1.0) || !(self.c > 0.0) || !(self.alpha > 0.0 && self.alpha <= 2.0) {
            return Err(Error::InvalidArgument(
                "GOSPA needs p >= 1, c > 0 and 0 < alpha <= 2".into(),
            ));
        }
        Ok(())
    }
}

/// GOSPA distance and its decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gospa {
    pub distance: f64,
    /// Sum of `d^p` over assigned pairs.
    pub localization: f64,
    pub missed: usize,
    pub false_targets: usize,
}

/// GOSPA distance between a ground-truth and an estimated point set.
pub fn gospa(truth: &[Vector3<f64>], est: &[Vector3<f64>], cfg: &GospaConfig) -> Result<Gospa> {
    cfg.validate()?;
    let n = truth.len();
    let m = est.len();
    let cp = cfg.c.powf(cfg.p);
    let unassigned = cp / cfg.alpha;
    if n == 0 || m == 0 {
        let k = n + m;
        return Ok(Gospa {
            distance: (unassigned * k as f64).powf(1.0 / cfg.p),
            localization: 0.0,
            missed: n,
            false_targets: m,
        });
    }
    // Rows: truth. Columns: estimates, then one "missed" column per truth.
    // Each real pairing saves the false-target penalty of its estimate.
    let pair = |i: usize, j: usize| (truth[i] - est[j]).norm().min(cfg.c).powf(cfg.p);
    let mut cost = DMatrix::from_element(n, m + n, f64::INFINITY);
    for i in 0..n {
        for j in 0..m {
            cost[(i, j)] = pair(i, j) - unassigned;
        }
        cost[(i, m + i)] = unassigned;
    }
    let a = hungarian(&cost)?;
    let mut localization = 0.0;
    let mut matched = 0;
    for (i, &j) in a.columns.iter().enumerate() {
        if j < m {
            let d = (truth[i] - est[j]).norm();
            if d < cfg.c {
                localization += d.powf(cfg.p);
                matched += 1;
            } else {
                // Cut-off pairing: equivalent to one miss plus one false target at alpha = 2.
                localization += cp - 2.0 * unassigned;
            }
        }
    }
    let missed = n - matched;
    let false_targets = m - matched;
    let total = (a.cost + unassigned * m as f64).max(0.0);
    Ok(Gospa {
        distance: total.powf(1.0 / cfg.p),
        localization: localization.max(0.0),
        missed,
        false_targets,
    })
}

/// Mean absolute error of scalar pairs `(estimate, truth)`.
pub fn mae(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("MAE of an empty series".into()));
    }
    Ok(pairs.iter().map(|(e, t)| (e - t).abs()).sum::<f64>() / pairs.len() as f64)
}

/// Mean absolute angular error, wrapping each difference to (-pi, pi] first.
pub fn mae_angle(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("MAE of an empty series".into()));
    }
    Ok(pairs.iter().map(|(e, t)| wrap_angle(e - t).abs()).sum::<f64>() / pairs.len() as f64)
}

/// Mean Euclidean position error.
pub fn mae_position(pairs: &[(Vector3<f64>, Vector3<f64>)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("MAE of an empty series".into()));
    }
    Ok(pairs.iter().map(|(e, t)| (e - t).norm()).sum::<f64>() / pairs.len() as f64)
}

#[cfg(test)]
pub(crate) fn gospa_brute_force(truth: &[Vector3<f64>], est: &[Vector3<f64>], cfg: &GospaConfig) -> f64 {
    // Enumerate every partial injective map truth -> est.
    fn rec(
        i: usize,
        truth: &[Vector3<f64>],
        est: &[Vector3<f64>],
        used: &mut Vec<bool>,
        acc: f64,
        matched: usize,
        cfg: &GospaConfig,
        best: &mut f64,
    ) {
        if i == truth.len() {
            let un = (truth.len() + est.len() - 2 * matched) as f64;
            let v = acc + cfg.c.powf(cfg.p) / cfg.alpha * un;
            *best = best.min(v);
            return;
        }
        rec(i + 1, truth, est, used, acc, matched, cfg, best);
        for j in 0..est.len() {
            if !used[j] {
                let d = (truth[i] - est[j]).norm().min(cfg.c).powf(cfg.p);
                used[j] = true;
                rec(i + 1, truth, est, used, acc + d, matched + 1, cfg, best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    rec(0, truth, est, &mut vec![false; est.len()], 0.0, 0, cfg, &mut best);
    best.powf(1.0 / cfg.p)
}
