//! Gaussian densities and third-degree spherical-radial cubature.

use nalgebra::{DMatrix, DVector};

use crate::geometry::wrap_angle;
use crate::linalg::{gaussian_log_density, psd_sqrt, symmetrize};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDensity {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianDensity {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if cov.shape() != (n, n) {
            return Err(Error::InvalidArgument("covariance shape does not match the mean".into()));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite Gaussian parameters".into()));
        }
        let scale = cov.diagonal().amax().max(1e-300);
        if (&cov - cov.transpose()).amax() > 1e-9 * scale {
            return Err(Error::InvalidArgument("covariance is not symmetric".into()));
        }
        if cov.diagonal().iter().any(|v| *v < 0.0) {
            return Err(Error::InvalidArgument("covariance has a negative variance".into()));
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// The `2n` cubature points `mean ± sqrt(n) L e_i`.
    pub fn cubature_points(&self) -> Vec<DVector<f64>> {
        let n = self.dim();
        let l = psd_sqrt(&self.cov) * (n as f64).sqrt();
        let mut pts = Vec::with_capacity(2 * n);
        for i in 0..n {
            pts.push(&self.mean + l.column(i));
        }
        for i in 0..n {
            pts.push(&self.mean - l.column(i));
        }
        pts
    }

    /// Joint density of two independent blocks.
    pub fn stack(a: &GaussianDensity, b: &GaussianDensity) -> GaussianDensity {
        let (n, m) = (a.dim(), b.dim());
        let mut mean = DVector::zeros(n + m);
        mean.rows_mut(0, n).copy_from(&a.mean);
        mean.rows_mut(n, m).copy_from(&b.mean);
        let mut cov = DMatrix::zeros(n + m, n + m);
        cov.view_mut((0, 0), (n, n)).copy_from(&a.cov);
        cov.view_mut((n, n), (m, m)).copy_from(&b.cov);
        GaussianDensity { mean, cov }
    }

    /// Marginal over a contiguous block.
    pub fn marginal(&self, start: usize, len: usize) -> GaussianDensity {
        GaussianDensity {
            mean: self.mean.rows(start, len).into_owned(),
            cov: self.cov.view((start, start), (len, len)).into_owned(),
        }
    }

    pub fn wrap(&mut self, angles: &[usize]) {
        for &a in angles {
            self.mean[a] = wrap_angle(self.mean[a]);
        }
    }
}

/// Moment-matched single Gaussian of a weighted mixture.
///
/// Weights need not be normalised. Dimensions listed in `angles` are averaged
/// through residuals relative to the heaviest component and wrapped.
pub fn merge(components: &[(f64, &GaussianDensity)], angles: &[usize]) -> Option<GaussianDensity> {
    let total: f64 = components.iter().map(|(w, _)| *w).sum();
    if !(total > 0.0) || !total.is_finite() {
        return None;
    }
    let live: Vec<_> = components.iter().filter(|(w, _)| *w > 0.0).collect();
    if live.len() == 1 {
        return Some(live[0].1.clone());
    }
    let reference = live.iter().max_by(|a, b| a.0.total_cmp(&b.0))?.1.mean.clone();
    let rel = |m: &DVector<f64>| {
        let mut d = m - &reference;
        for &a in angles {
            d[a] = wrap_angle(d[a]);
        }
        d
    };
    let n = reference.len();
    let mut mean = DVector::zeros(n);
    for (w, g) in &live {
        mean += rel(&g.mean) * (*w / total);
    }
    let mut cov = DMatrix::zeros(n, n);
    for (w, g) in &live {
        let d = rel(&g.mean) - &mean;
        cov += (&g.cov + &d * d.transpose()) * (*w / total);
    }
    let mut out = GaussianDensity {
        mean: mean + reference,
        cov: symmetrize(&cov),
    };
    out.wrap(angles);
    Some(out)
}

/// Weighted statistics of propagated cubature points.
#[derive(Debug, Clone)]
pub struct Transformed {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Cross-covariance between the input and the output.
    pub cross: DMatrix<f64>,
}

/// Cubature approximation of the moments of `f(x)` with `x ~ density`.
///
/// Output dimensions in `out_angles` are unwrapped around `reference` (or the
/// first point) before averaging. Returns `None` if `f` fails at any point.
pub fn cubature_transform<F>(
    density: &GaussianDensity,
    f: F,
    out_angles: &[usize],
    reference: Option<&DVector<f64>>,
) -> Option<Transformed>
where
    F: Fn(&DVector<f64>) -> Option<DVector<f64>>,
{
    let pts = density.cubature_points();
    let w = 1.0 / pts.len() as f64;
    let mut outs = Vec::with_capacity(pts.len());
    for p in &pts {
        outs.push(f(p)?);
    }
    let refv = reference.cloned().unwrap_or_else(|| outs[0].clone());
    for o in outs.iter_mut() {
        for &a in out_angles {
            o[a] = refv[a] + wrap_angle(o[a] - refv[a]);
        }
    }
    let m = outs[0].len();
    let n = density.dim();
    let mut mean = DVector::zeros(m);
    for o in &outs {
        mean += o * w;
    }
    let mut cov = DMatrix::zeros(m, m);
    let mut cross = DMatrix::zeros(n, m);
    for (p, o) in pts.iter().zip(outs.iter()) {
        let d = o - &mean;
        cov += &d * d.transpose() * w;
        cross += (p - &density.mean) * d.transpose() * w;
    }
    Some(Transformed { mean, cov: symmetrize(&cov), cross })
}

/// Result of a cubature Kalman measurement update.
#[derive(Debug, Clone)]
pub struct CkfUpdate {
    pub posterior: GaussianDensity,
    /// `log N(z; z_pred, S)`.
    pub log_likelihood: f64,
    /// Squared Mahalanobis distance of the innovation.
    pub mahalanobis: f64,
    pub predicted: DVector<f64>,
    pub innovation_cov: DMatrix<f64>,
}

/// Cubature Kalman update of `prior` with measurement `z = h(x) + r`, `r ~ N(0, R)`.
///
/// `meas_angles` are measurement components whose residuals are wrapped;
/// `state_angles` are state components wrapped after the update.
pub fn ckf_update<F>(
    prior: &GaussianDensity,
    h: F,
    z: &DVector<f64>,
    r: &DMatrix<f64>,
    meas_angles: &[usize],
    state_angles: &[usize],
) -> Option<CkfUpdate>
where
    F: Fn(&DVector<f64>) -> Option<DVector<f64>>,
{
    let t = cubature_transform(prior, h, meas_angles, Some(z))?;
    if t.mean.len() != z.len() || r.shape() != (z.len(), z.len()) {
        return None;
    }
    let s = symmetrize(&(&t.cov + r));
    let mut innov = z - &t.mean;
    for &a in meas_angles {
        innov[a] = wrap_angle(innov[a]);
    }
    let ch = s.clone().cholesky()?;
    let (log_likelihood, mahalanobis) = gaussian_log_density(&innov, &s)?;
    // K = C S^-1 via the Cholesky factor.
    let gain = ch.solve(&t.cross.transpose()).transpose();
    let mean = &prior.mean + &gain * &innov;
    let cov = symmetrize(&(&prior.cov - &gain * &s * gain.transpose()));
    let mut posterior = GaussianDensity { mean, cov };
    posterior.wrap(state_angles);
    Some(CkfUpdate {
        posterior,
        log_likelihood,
        mahalanobis,
        predicted: t.mean,
        innovation_cov: s,
    })
}
