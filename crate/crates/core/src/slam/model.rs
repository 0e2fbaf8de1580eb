//! Measurement and motion models used by the filter.
//!
//! Filter measurements express the delay as the round-trip path length `c·τ`
//! in metres; this keeps all residuals at comparable scales.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::{path_geometry_raw, LandmarkKind, Pose, SPEED_OF_LIGHT};
use crate::{Error, Result};

/// UE state layout `[x, y, z, heading, speed]`.
pub const UE_DIM: usize = 5;
pub const HEADING: usize = 3;
pub const SPEED: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasurementKind {
    /// `[φ_az, φ_el, c·τ, v, θ_az, θ_el]`.
    Ris,
    /// `[c·τ, v, θ_az, θ_el]`.
    NonRis,
}

/// Channel-parameter measurement with its noise covariance.
///
/// Without Doppler the `v` component is absent.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub kind: MeasurementKind,
    pub value: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl Measurement {
    pub fn new(kind: MeasurementKind, value: DVector<f64>, cov: DMatrix<f64>, doppler: bool) -> Result<Self> {
        let dim = measurement_dim(kind, doppler);
        if value.len() != dim || cov.shape() != (dim, dim) {
            return Err(Error::InvalidArgument(format!(
                "{kind:?} measurement must have dimension {dim}"
            )));
        }
        if value.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite measurement".into()));
        }
        if cov.diagonal().iter().any(|v| *v < 0.0) {
            return Err(Error::InvalidArgument("measurement covariance has a negative variance".into()));
        }
        Ok(Self { kind, value, cov })
    }

    /// Converts channel parameters with delay in seconds (full Doppler layout)
    /// to filter units, dropping `v` when Doppler is disabled.
    pub fn from_channel(
        kind: MeasurementKind,
        params_seconds: &DVector<f64>,
        cov_seconds: &DMatrix<f64>,
        doppler: bool,
    ) -> Result<Self> {
        let full = measurement_dim(kind, true);
        if params_seconds.len() != full || cov_seconds.shape() != (full, full) {
            return Err(Error::InvalidArgument("channel parameter dimension mismatch".into()));
        }
        let tau = delay_index(kind);
        let mut scale = DVector::from_element(full, 1.0);
        scale[tau] = SPEED_OF_LIGHT;
        let value = params_seconds.component_mul(&scale);
        let cov = DMatrix::from_fn(full, full, |i, j| cov_seconds[(i, j)] * scale[i] * scale[j]);
        let keep = kept_indices(kind, doppler);
        let value = DVector::from_fn(keep.len(), |i, _| value[keep[i]]);
        let cov = DMatrix::from_fn(keep.len(), keep.len(), |i, j| cov[(keep[i], keep[j])]);
        Self::new(kind, value, cov, doppler)
    }
}

pub fn measurement_dim(kind: MeasurementKind, doppler: bool) -> usize {
    let base = match kind {
        MeasurementKind::Ris => 6,
        MeasurementKind::NonRis => 4,
    };
    base - (!doppler) as usize
}

fn delay_index(kind: MeasurementKind) -> usize {
    match kind {
        MeasurementKind::Ris => 2,
        MeasurementKind::NonRis => 0,
    }
}

/// Indices of the full parameter vector retained with/without Doppler.
pub fn kept_indices(kind: MeasurementKind, doppler: bool) -> Vec<usize> {
    let full = measurement_dim(kind, true);
    let v = delay_index(kind) + 1;
    (0..full).filter(|&i| doppler || i != v).collect()
}

/// Measurement components that are azimuths (wrapped residuals).
pub fn azimuth_indices(kind: MeasurementKind, doppler: bool) -> Vec<usize> {
    let d = !doppler as usize;
    match kind {
        MeasurementKind::Ris => vec![0, 4 - d],
        MeasurementKind::NonRis => vec![2 - d],
    }
}

/// RIS-path measurement function of the UE state.
pub fn ris_measurement(s: &[f64], pose: &Pose, doppler: bool) -> Option<DVector<f64>> {
    let pos = Vector3::new(s[0], s[1], s[2]);
    let g = path_geometry_raw(&pos, s[HEADING], s[SPEED], &pose.position, Some(pose)).ok()?;
    let aod = g.aod_ris?;
    let mut v = vec![aod.az, aod.el, g.toa * SPEED_OF_LIGHT];
    if doppler {
        v.push(g.radial_velocity);
    }
    v.extend([g.aoa_ue.az, g.aoa_ue.el]);
    Some(DVector::from_vec(v))
}

/// Non-RIS measurement function of the UE state and a landmark position.
pub fn landmark_measurement(s: &[f64], x: &[f64], doppler: bool) -> Option<DVector<f64>> {
    let pos = Vector3::new(s[0], s[1], s[2]);
    let lm = Vector3::new(x[0], x[1], x[2]);
    let g = path_geometry_raw(&pos, s[HEADING], s[SPEED], &lm, None).ok()?;
    let mut v = vec![g.toa * SPEED_OF_LIGHT];
    if doppler {
        v.push(g.radial_velocity);
    }
    v.extend([g.aoa_ue.az, g.aoa_ue.el]);
    Some(DVector::from_vec(v))
}

/// Constant-turn motion with known turn rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Dynamics {
    /// Step duration [s].
    pub dt: f64,
    /// Turn rate [rad/s].
    pub turn_rate: f64,
    /// Process noise standard deviations `[x, y, z, heading, speed]`.
    pub sigma: [f64; 5],
}

impl Default for Dynamics {
    fn default() -> Self {
        Self {
            dt: 0.5,
            turn_rate: 2e-6,
            sigma: [0.2, 0.2, 0.0, 1e-3, 0.2],
        }
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

impl Dynamics {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.turn_rate.is_finite() || self.sigma.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::InvalidArgument("invalid dynamics parameters".into()));
        }
        Ok(())
    }

    /// Planar displacement over one step.
    ///
    /// Equal to `v/ρ [sin(α+ρΔ) − sin α, cos α − cos(α+ρΔ)]`, written so that
    /// `ρ → 0` is the straight-line limit.
    pub fn displacement(&self, heading: f64, speed: f64) -> (f64, f64) {
        let half = 0.5 * self.turn_rate * self.dt;
        let k = speed * self.dt * sinc(half);
        (k * (heading + half).cos(), k * (heading + half).sin())
    }

    /// Noise-free transition `m(s)`.
    pub fn transition(&self, s: &[f64]) -> [f64; 5] {
        let (dx, dy) = self.displacement(s[HEADING], s[SPEED]);
        [
            s[0] + dx,
            s[1] + dy,
            s[2],
            s[HEADING] + self.turn_rate * self.dt,
            s[SPEED],
        ]
    }

    pub fn process_cov(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_iterator(5, self.sigma.iter().map(|s| s * s)))
    }
}

/// Landmark types the map estimates; the RIS is known.
pub const MAP_TYPES: [LandmarkKind; 2] = [LandmarkKind::Rp, LandmarkKind::Sp];

pub fn type_index(kind: LandmarkKind) -> Option<usize> {
    MAP_TYPES.iter().position(|k| *k == kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    #[test]
    fn straight_line_limit() {
        let d = Dynamics { turn_rate: 0.0, ..Dynamics::default() };
        let s = d.transition(&[0.0, 0.0, 0.0, 0.0, 10.0]);
        assert_relative_eq!(s[0], 5.0, epsilon = 1e-12);
        assert_relative_eq!(s[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn matches_printed_turn_formulas() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let rho = rng.random_range(0.05..1.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let d = Dynamics { turn_rate: rho, dt: 0.5, ..Dynamics::default() };
            let (a, v) = (rng.random_range(-PI..PI), rng.random_range(0.0..20.0));
            let s = d.transition(&[1.0, 2.0, 0.0, a, v]);
            let dx = v / rho * ((a + rho * 0.5).sin() - a.sin());
            let dy = v / rho * (-(a + rho * 0.5).cos() + a.cos());
            assert_relative_eq!(s[0] - 1.0, dx, epsilon = 1e-10);
            assert_relative_eq!(s[1] - 2.0, dy, epsilon = 1e-10);
            assert_relative_eq!(s[3], a + rho * 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn doppler_free_layouts() {
        assert_eq!(kept_indices(MeasurementKind::Ris, false), vec![0, 1, 2, 4, 5]);
        assert_eq!(azimuth_indices(MeasurementKind::Ris, false), vec![0, 3]);
        assert_eq!(azimuth_indices(MeasurementKind::NonRis, true), vec![2]);
        let s = [50.0, -10.0, 0.0, 1.0, 5.0];
        assert_eq!(landmark_measurement(&s, &[60.0, 5.0, 3.0], false).unwrap().len(), 3);
    }

    #[test]
    fn delay_conversion() {
        let p = DVector::from_vec(vec![1e-7, 2.0, 0.1, 1.2]);
        let c = DMatrix::from_diagonal(&DVector::from_vec(vec![1e-20, 0.01, 1e-4, 1e-4]));
        let m = Measurement::from_channel(MeasurementKind::NonRis, &p, &c, true).unwrap();
        assert_relative_eq!(m.value[0], 30.0, epsilon = 1e-9);
        assert_relative_eq!(m.cov[(0, 0)], 9e-4, epsilon = 1e-15);
        let m = Measurement::from_channel(MeasurementKind::NonRis, &p, &c, false).unwrap();
        assert_eq!(m.value.len(), 3);
        assert_eq!(m.value[1], 0.1);
    }
}
