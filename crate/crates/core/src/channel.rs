//! Array responses, path gains and synthesis of the received OFDM backscatter signal.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector3};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::geometry::{Angles, LandmarkKind, PathGeometry, SPEED_OF_LIGHT};
use crate::profile::RisProfilePlan;
use crate::{Error, Result, C64};

/// Uniform planar array element layout in local coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayLayout {
    positions: Vec<Vector3<f64>>,
    indices: Vec<(usize, usize)>,
    n_az: usize,
    n_el: usize,
    spacing: f64,
}

impl ArrayLayout {
    /// UE array: elements in the local xz-plane, `n_az` along x and `n_el` along z.
    pub fn ue_upa(n_az: usize, n_el: usize, spacing: f64) -> Result<Self> {
        Self::upa(n_az, n_el, spacing, |a, e| Vector3::new(a, 0.0, e))
    }

    /// RIS panel: elements in the local xy-plane, `n_az` along x and `n_el` along y.
    pub fn ris_upa(n_az: usize, n_el: usize, spacing: f64) -> Result<Self> {
        Self::upa(n_az, n_el, spacing, |a, e| Vector3::new(a, e, 0.0))
    }

    fn upa(
        n_az: usize,
        n_el: usize,
        spacing: f64,
        place: impl Fn(f64, f64) -> Vector3<f64>,
    ) -> Result<Self> {
        if n_az == 0 || n_el == 0 || !(spacing > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "array needs positive dimensions and spacing, got {n_az}x{n_el} at {spacing}"
            )));
        }
        let ca = (n_az as f64 - 1.0) / 2.0;
        let ce = (n_el as f64 - 1.0) / 2.0;
        let mut positions = Vec::with_capacity(n_az * n_el);
        let mut indices = Vec::with_capacity(n_az * n_el);
        for ie in 0..n_el {
            for ia in 0..n_az {
                positions.push(place(
                    (ia as f64 - ca) * spacing,
                    (ie as f64 - ce) * spacing,
                ));
                indices.push((ia, ie));
            }
        }
        Ok(Self {
            positions,
            indices,
            n_az,
            n_el,
            spacing,
        })
    }

    /// Single element at the local origin.
    pub fn single() -> Self {
        Self {
            positions: vec![Vector3::zeros()],
            indices: vec![(0, 0)],
            n_az: 1,
            n_el: 1,
            spacing: 1.0,
        }
    }

    /// Arbitrary layout; indices default to a single azimuth row.
    pub fn from_positions(positions: Vec<Vector3<f64>>, spacing: f64) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidArgument("empty array layout".into()));
        }
        let n = positions.len();
        Ok(Self {
            positions,
            indices: (0..n).map(|i| (i, 0)).collect(),
            n_az: n,
            n_el: 1,
            spacing,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn n_az(&self) -> usize {
        self.n_az
    }

    pub fn n_el(&self) -> usize {
        self.n_el
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }

    /// Zero-based (azimuth, elevation) grid index of each element.
    pub fn indices(&self) -> &[(usize, usize)] {
        &self.indices
    }

    /// Phases `X̆ᵀ k` for a wavenumber vector `k`.
    pub fn phases(&self, k: &Vector3<f64>) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.positions.iter().map(|p| p.dot(k)))
    }
}

/// Wavenumber vector g(ϑ) = (2π/λ)[cos az sin el, sin az sin el, cos el].
pub fn wavenumber(angles: Angles, wavelength: f64) -> Vector3<f64> {
    angles.direction() * (2.0 * PI / wavelength)
}

/// Derivatives of g(ϑ) w.r.t. azimuth and elevation.
pub fn wavenumber_derivatives(angles: Angles, wavelength: f64) -> (Vector3<f64>, Vector3<f64>) {
    let k = 2.0 * PI / wavelength;
    let (sa, ca) = angles.az.sin_cos();
    let (se, ce) = angles.el.sin_cos();
    (
        Vector3::new(-sa * se, ca * se, 0.0) * k,
        Vector3::new(ca * ce, sa * ce, -se) * k,
    )
}

fn unit_phasors(phases: &DVector<f64>, factor: f64) -> DVector<C64> {
    phases.map(|p| Complex64::from_polar(1.0, factor * p))
}

/// Array response a(ϑ) = exp(j X̆ᵀ g(ϑ)).
pub fn steering_vector(layout: &ArrayLayout, angles: Angles, wavelength: f64) -> Result<DVector<C64>> {
    if !(wavelength > 0.0) {
        return Err(Error::InvalidArgument("wavelength must be positive".into()));
    }
    Ok(unit_phasors(&layout.phases(&wavenumber(angles, wavelength)), 1.0))
}

/// Combined RIS response b(φ) = a(φ) ⊙ a(φ) = exp(2j X̆ᵀ g(φ)).
pub fn ris_combined_response(layout: &ArrayLayout, aod: Angles, wavelength: f64) -> Result<DVector<C64>> {
    if !(wavelength > 0.0) {
        return Err(Error::InvalidArgument("wavelength must be positive".into()));
    }
    Ok(unit_phasors(&layout.phases(&wavenumber(aod, wavelength)), 2.0))
}

/// OFDM waveform and link budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveformConfig {
    pub carrier_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub n_subcarriers: usize,
    pub cp_overhead: f64,
    /// Pilot energy per subcarrier E_s [J].
    pub pilot_energy: f64,
    /// Per-sample complex noise variance N_0·NF [W/Hz].
    pub noise_psd: f64,
    pub n_transmissions: usize,
}

pub fn dbm_to_watt(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

impl WaveformConfig {
    /// Builds a waveform from total transmit power and noise figures in dB units.
    #[allow(clippy::too_many_arguments)]
    pub fn from_link_budget(
        carrier_hz: f64,
        subcarrier_spacing_hz: f64,
        n_subcarriers: usize,
        cp_overhead: f64,
        tx_power_dbm: f64,
        noise_psd_dbm_hz: f64,
        noise_figure_db: f64,
        n_transmissions: usize,
    ) -> Result<Self> {
        let wf = Self {
            carrier_hz,
            subcarrier_spacing_hz,
            n_subcarriers,
            cp_overhead,
            pilot_energy: dbm_to_watt(tx_power_dbm) / (n_subcarriers as f64 * subcarrier_spacing_hz),
            noise_psd: dbm_to_watt(noise_psd_dbm_hz) * 10f64.powf(noise_figure_db / 10.0),
            n_transmissions,
        };
        wf.validate()?;
        Ok(wf)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.carrier_hz,
            self.subcarrier_spacing_hz,
            self.pilot_energy,
            self.noise_psd,
        ];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument("waveform quantities must be positive".into()));
        }
        if self.n_subcarriers == 0 || !(self.cp_overhead >= 0.0) {
            return Err(Error::InvalidArgument("invalid subcarrier configuration".into()));
        }
        if self.n_transmissions == 0 || self.n_transmissions % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "number of transmissions must be even and positive, got {}",
                self.n_transmissions
            )));
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// T_S = 1/Δf.
    pub fn symbol_duration(&self) -> f64 {
        1.0 / self.subcarrier_spacing_hz
    }

    /// B = N_SC Δf.
    pub fn bandwidth(&self) -> f64 {
        self.n_subcarriers as f64 * self.subcarrier_spacing_hz
    }

    /// T_CP = N_CP / B with N_CP = N_SC ε_CP.
    pub fn cp_duration(&self) -> f64 {
        self.n_subcarriers as f64 * self.cp_overhead / self.bandwidth()
    }

    /// T_o = T_S + T_CP.
    pub fn block_duration(&self) -> f64 {
        self.symbol_duration() + self.cp_duration()
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_psd
    }

    /// Round-trip Doppler shift 2 f_c v / c.
    pub fn doppler_hz(&self, radial_velocity: f64) -> f64 {
        2.0 * self.carrier_hz * radial_velocity / SPEED_OF_LIGHT
    }
}

/// Complex path gain β = amplitude·e^{j phase}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathGain {
    pub amplitude: f64,
    pub phase: f64,
}

impl PathGain {
    pub fn complex(&self) -> C64 {
        Complex64::from_polar(self.amplitude, self.phase)
    }
}

/// Constants of the path-gain model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainModel {
    pub wavelength: f64,
    pub carrier_hz: f64,
    /// RIS element pattern exponent q_0.
    pub ris_q0: f64,
    /// Reflection coefficient Γ_R of large surfaces.
    pub rp_reflection: f64,
    /// Radar cross-section of scatterers [m²].
    pub sp_rcs: f64,
}

/// Path gain for a landmark kind. `nu_g` is the random phase offset ν_G.
///
/// For the RIS, `cos φ_0` is the cosine of the AoD elevation, i.e. the angle to the
/// panel normal; paths behind the panel get zero amplitude.
pub fn path_gain(kind: LandmarkKind, geom: &PathGeometry, model: &GainModel, nu_g: f64) -> Result<PathGain> {
    let d = geom.range;
    if !(d > 0.0) {
        return Err(Error::DegenerateGeometry("zero path length".into()));
    }
    let lam = model.wavelength;
    let base = lam / (4.0 * PI);
    let amplitude = match kind {
        LandmarkKind::Ris => {
            let aod = geom
                .aod_ris
                .ok_or_else(|| Error::InvalidArgument("RIS path without AoD".into()))?;
            let cos0 = aod.el.cos().max(0.0);
            base * lam * cos0.powf(2.0 * model.ris_q0) / (16.0 * d * d)
        }
        LandmarkKind::Rp => base * model.rp_reflection.sqrt() / (2.0 * d),
        LandmarkKind::Sp => base * model.sp_rcs.sqrt() / ((4.0 * PI).sqrt() * d * d),
    };
    Ok(PathGain {
        amplitude,
        phase: -2.0 * PI * model.carrier_hz * geom.toa + nu_g,
    })
}

/// Parameters of one propagation path as they enter the signal model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelPath {
    pub kind: LandmarkKind,
    /// AoD at the RIS, present iff `kind` is RIS.
    pub aod: Option<Angles>,
    pub aoa: Angles,
    /// Delay [s].
    pub toa: f64,
    /// Radial velocity [m/s].
    pub radial_velocity: f64,
    pub gain: C64,
}

impl ChannelPath {
    pub fn from_geometry(kind: LandmarkKind, geom: &PathGeometry, gain: PathGain) -> Self {
        Self {
            kind,
            aod: if kind == LandmarkKind::Ris { geom.aod_ris } else { None },
            aoa: geom.aoa_ue,
            toa: geom.toa,
            radial_velocity: geom.radial_velocity,
            gain: gain.complex(),
        }
    }
}

/// UE and RIS array layouts.
#[derive(Debug, Clone, PartialEq)]
pub struct Arrays {
    pub ue: ArrayLayout,
    pub ris: ArrayLayout,
}

pub(crate) fn check_paths(paths: &[ChannelPath], arrays: &Arrays, plan: &RisProfilePlan, wf: &WaveformConfig) -> Result<()> {
    wf.validate()?;
    if plan.n_transmissions() != wf.n_transmissions {
        return Err(Error::InvalidArgument(format!(
            "plan has {} transmissions, waveform expects {}",
            plan.n_transmissions(),
            wf.n_transmissions
        )));
    }
    if plan.n_ris() != arrays.ris.len() || plan.n_ue() != arrays.ue.len() {
        return Err(Error::InvalidArgument("plan dimensions do not match the arrays".into()));
    }
    let n_ris = paths.iter().filter(|p| p.kind == LandmarkKind::Ris).count();
    if n_ris > 1 {
        return Err(Error::InvalidArgument("more than one RIS path".into()));
    }
    for p in paths {
        if (p.kind == LandmarkKind::Ris) != p.aod.is_some() {
            return Err(Error::InvalidArgument("AoD must be present exactly for the RIS path".into()));
        }
    }
    Ok(())
}

/// Per-transmission spatial coefficient γ_t (wᵗᴴ a)(aᵀ f_t) of a path, without gain,
/// Doppler or delay terms.
pub(crate) fn spatial_coefficients(
    path: &ChannelPath,
    arrays: &Arrays,
    plan: &RisProfilePlan,
    wavelength: f64,
) -> Result<DVector<C64>> {
    let a = steering_vector(&arrays.ue, path.aoa, wavelength)?;
    let b = match path.aod {
        Some(aod) => Some(ris_combined_response(&arrays.ris, aod, wavelength)?),
        None => None,
    };
    let t_count = plan.n_transmissions();
    let mut out = DVector::zeros(t_count);
    for t in 0..t_count {
        let bf = plan.beamformer(t);
        let wa = bf.combiner.dotc(&a);
        let af = a.transpose() * &bf.precoder;
        let gamma = match &b {
            Some(b) => (plan.ris_profile(t).transpose() * b)[(0, 0)],
            None => Complex64::new(1.0, 0.0),
        };
        out[t] = gamma * wa * af[(0, 0)];
    }
    Ok(out)
}

/// Doppler phasors e^{j2π f^D T_o t}, t = 1..T.
pub(crate) fn doppler_phasors(path: &ChannelPath, wf: &WaveformConfig) -> DVector<C64> {
    let fd = wf.doppler_hz(path.radial_velocity);
    let to = wf.block_duration();
    DVector::from_fn(wf.n_transmissions, |t, _| {
        Complex64::from_polar(1.0, 2.0 * PI * fd * to * (t as f64 + 1.0))
    })
}

/// Delay phasors e^{−j2π τ (s−1) Δf}, s = 1..N_SC.
pub(crate) fn delay_phasors(path: &ChannelPath, wf: &WaveformConfig) -> DVector<C64> {
    DVector::from_fn(wf.n_subcarriers, |s, _| {
        Complex64::from_polar(1.0, -2.0 * PI * path.toa * s as f64 * wf.subcarrier_spacing_hz)
    })
}

/// Noiseless received signal, T × N_SC.
pub fn synthesize_rx_noiseless(
    paths: &[ChannelPath],
    arrays: &Arrays,
    plan: &RisProfilePlan,
    wf: &WaveformConfig,
) -> Result<DMatrix<C64>> {
    check_paths(paths, arrays, plan, wf)?;
    let lam = wf.wavelength();
    let amp = wf.pilot_energy.sqrt();
    let mut y = DMatrix::zeros(wf.n_transmissions, wf.n_subcarriers);
    for p in paths {
        let c = spatial_coefficients(p, arrays, plan, lam)?;
        let dop = doppler_phasors(p, wf);
        let del = delay_phasors(p, wf);
        let time = c.component_mul(&dop) * (p.gain * amp);
        y += &time * del.transpose();
    }
    Ok(y)
}

/// Received signal with optional circular complex Gaussian noise of variance σ_N².
pub fn synthesize_rx<R: Rng + ?Sized>(
    paths: &[ChannelPath],
    arrays: &Arrays,
    plan: &RisProfilePlan,
    wf: &WaveformConfig,
    rng: &mut R,
    noise: bool,
) -> Result<DMatrix<C64>> {
    let mut y = synthesize_rx_noiseless(paths, arrays, plan, wf)?;
    if noise {
        let sd = (wf.noise_variance() / 2.0).sqrt();
        for v in y.iter_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *v += Complex64::new(re * sd, im * sd);
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{path_geometry, Landmark, Pose, UeState};
    use crate::profile::{BeamformerPair, RisProfilePlan};
    use crate::rng::{stream_rng, Stream};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const LAM: f64 = 0.01;

    fn small_wf(t: usize, nsc: usize) -> WaveformConfig {
        WaveformConfig::from_link_budget(30e9, 120e3, nsc, 0.07, 20.0, -174.0, 8.0, t).unwrap()
    }

    fn ones_plan(n_ris: usize, n_ue: usize, t: usize) -> RisProfilePlan {
        let w = DVector::from_element(n_ue, Complex64::new(1.0 / (n_ue as f64).sqrt(), 0.0));
        RisProfilePlan::new(
            vec![DVector::from_element(n_ris, Complex64::new(1.0, 0.0)); t / 2],
            vec![BeamformerPair { precoder: w.clone(), combiner: w }; t / 2],
        )
        .unwrap()
    }

    #[test]
    fn single_element_steering() {
        let a = steering_vector(&ArrayLayout::single(), Angles::new(0.3, 1.1), LAM).unwrap();
        assert_eq!(a[0], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn half_wavelength_pair_along_z() {
        let l = ArrayLayout::from_positions(
            vec![Vector3::zeros(), Vector3::new(0.0, 0.0, LAM / 2.0)],
            LAM / 2.0,
        )
        .unwrap();
        let a = steering_vector(&l, Angles::new(0.0, 0.0), LAM).unwrap();
        let dphi = (a[1] / a[0]).arg();
        assert_relative_eq!(dphi.abs(), PI, epsilon = 1e-12);
    }

    #[test]
    fn broadside_combined_response_is_all_ones() {
        let l = ArrayLayout::ris_upa(4, 4, LAM / 4.0).unwrap();
        let b = ris_combined_response(&l, Angles::new(0.7, 0.0), LAM).unwrap();
        for v in b.iter() {
            assert_relative_eq!(v.re, 1.0, epsilon = 1e-12);
            assert_relative_eq!(v.im, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn quarter_wavelength_ris_has_single_mainlobe() {
        let l = ArrayLayout::ris_upa(16, 1, LAM / 4.0).unwrap();
        let target = Angles::new(0.0, 0.6);
        let w = crate::profile::directional_profile(&l, target, LAM);
        let n = 4001;
        let gains: Vec<f64> = (0..n)
            .map(|i| {
                let el = -PI / 2.0 + PI * i as f64 / (n - 1) as f64;
                let ang = Angles::new(0.0, el);
                let b = ris_combined_response(&l, ang, LAM).unwrap();
                (w.transpose() * b)[(0, 0)].norm()
            })
            .collect();
        let peak = gains.iter().cloned().fold(0.0, f64::max);
        let near_peak = gains.iter().filter(|g| **g > 0.9 * peak).count();
        let lobes = gains
            .windows(3)
            .filter(|w| w[1] > 0.9 * peak && w[1] >= w[0] && w[1] >= w[2])
            .count();
        assert_eq!(lobes, 1, "expected a single mainlobe, {near_peak} samples near peak");
        assert_relative_eq!(peak, 16.0, epsilon = 1e-3);
    }

    #[test]
    fn rp_amplitude_from_table_constants() {
        let model = GainModel {
            wavelength: 0.01,
            carrier_hz: 30e9,
            ris_q0: 0.285,
            rp_reflection: 0.7,
            sp_rcs: 50.0,
        };
        let geom = PathGeometry {
            aod_ris: None,
            aoa_ue: Angles::new(0.0, 1.0),
            toa: 60.0 / SPEED_OF_LIGHT,
            radial_velocity: 0.0,
            range: 30.0,
        };
        let g = path_gain(LandmarkKind::Rp, &geom, &model, 0.0).unwrap();
        let expected = 0.01 / (4.0 * PI) * (0.7f64.sqrt() / 60.0);
        assert_relative_eq!(g.amplitude, expected, max_relative = 1e-14);
        assert_relative_eq!(g.amplitude, 1.109e-5, max_relative = 1e-3);
        let far = PathGeometry { range: 60.0, ..geom };
        let sp1 = path_gain(LandmarkKind::Sp, &geom, &model, 0.0).unwrap();
        let sp2 = path_gain(LandmarkKind::Sp, &far, &model, 0.0).unwrap();
        assert_relative_eq!(sp2.amplitude / sp1.amplitude, 0.25, max_relative = 1e-14);
        let ris = PathGeometry {
            aod_ris: Some(Angles::new(0.0, PI / 3.0)),
            ..geom
        };
        let g = path_gain(LandmarkKind::Ris, &ris, &model, 0.0).unwrap();
        let expected = 0.01 / (4.0 * PI) * 0.01 * 0.5f64.powf(0.57) / (16.0 * 900.0);
        assert_relative_eq!(g.amplitude, expected, max_relative = 1e-14);
        let zero = PathGeometry { range: 0.0, ..geom };
        assert!(path_gain(LandmarkKind::Sp, &zero, &model, 0.0).is_err());
    }

    #[test]
    fn waveform_derived_quantities() {
        let wf = small_wf(20, 1600);
        assert_relative_eq!(wf.symbol_duration(), 1.0 / 120e3);
        assert_relative_eq!(wf.bandwidth(), 192e6);
        assert_relative_eq!(wf.block_duration(), 1.07 / 120e3, max_relative = 1e-14);
        assert_relative_eq!(wf.wavelength(), 0.01);
        assert!(WaveformConfig { n_transmissions: 3, ..wf }.validate().is_err());
    }

    fn ris_path(aod: Angles, toa: f64, v: f64, gain: C64) -> ChannelPath {
        ChannelPath {
            kind: LandmarkKind::Ris,
            aod: Some(aod),
            aoa: Angles::new(0.4, 1.2),
            toa,
            radial_velocity: v,
            gain,
        }
    }

    #[test]
    fn empty_scene_is_zero() {
        let arrays = Arrays {
            ue: ArrayLayout::ue_upa(2, 2, LAM / 2.0).unwrap(),
            ris: ArrayLayout::ris_upa(4, 4, LAM / 4.0).unwrap(),
        };
        let wf = small_wf(4, 8);
        let y = synthesize_rx_noiseless(&[], &arrays, &ones_plan(16, 4, 4), &wf).unwrap();
        assert!(y.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn single_ris_path_closed_form() {
        let arrays = Arrays {
            ue: ArrayLayout::single(),
            ris: ArrayLayout::ris_upa(4, 4, LAM / 4.0).unwrap(),
        };
        let wf = small_wf(4, 16);
        let plan = RisProfilePlan::new(
            vec![DVector::from_element(16, Complex64::new(1.0, 0.0)); 2],
            vec![
                BeamformerPair {
                    precoder: DVector::from_element(1, Complex64::new(1.0, 0.0)),
                    combiner: DVector::from_element(1, Complex64::new(1.0, 0.0)),
                };
                2
            ],
        )
        .unwrap();
        let aod = Angles::new(-1.2, 0.7);
        let beta = Complex64::from_polar(2e-9, 0.3);
        let tau = 1.9e-7;
        let y = synthesize_rx_noiseless(&[ris_path(aod, tau, 0.0, beta)], &arrays, &plan, &wf).unwrap();
        let b = ris_combined_response(&arrays.ris, aod, LAM).unwrap();
        let sum_b: C64 = b.iter().sum();
        for t in 0..4 {
            let sign = if t % 2 == 0 { 1.0 } else { -1.0 };
            for s in 0..16 {
                let expect = wf.pilot_energy.sqrt()
                    * beta
                    * sum_b
                    * sign
                    * Complex64::from_polar(1.0, -2.0 * PI * tau * s as f64 * wf.subcarrier_spacing_hz);
                assert_relative_eq!((y[(t, s)] - expect).norm(), 0.0, epsilon = 1e-12 * expect.norm());
            }
        }
    }

    fn demo_scene() -> (Vec<ChannelPath>, Arrays, RisProfilePlan, WaveformConfig) {
        let arrays = Arrays {
            ue: ArrayLayout::ue_upa(2, 2, LAM / 2.0).unwrap(),
            ris: ArrayLayout::ris_upa(4, 4, LAM / 4.0).unwrap(),
        };
        let wf = small_wf(8, 32);
        let mut rng = stream_rng(1, 0, Stream::Plan);
        let plan = crate::profile::random_plan(16, 4, 4, &mut rng).unwrap();
        let model = GainModel {
            wavelength: LAM,
            carrier_hz: 30e9,
            ris_q0: 0.285,
            rp_reflection: 0.7,
            sp_rcs: 50.0,
        };
        let ue = UeState::new(Vector3::new(50.0, 3.0, 0.0), 1.2, 5.0).unwrap();
        let lms = [
            Landmark::ris(Pose::default_ris(Vector3::new(40.0, 0.0, 20.0))),
            Landmark::rp(Vector3::new(100.0, 3.0, 0.0)),
            Landmark::sp(Vector3::new(60.0, 5.0, 4.0)),
        ];
        let paths = lms
            .iter()
            .enumerate()
            .map(|(i, lm)| {
                let g = path_geometry(&ue, lm).unwrap();
                ChannelPath::from_geometry(lm.kind, &g, path_gain(lm.kind, &g, &model, i as f64).unwrap())
            })
            .collect();
        (paths, arrays, plan, wf)
    }

    #[test]
    fn superposition_of_partitioned_scenes() {
        let (paths, arrays, plan, wf) = demo_scene();
        let all = synthesize_rx_noiseless(&paths, &arrays, &plan, &wf).unwrap();
        let a = synthesize_rx_noiseless(&paths[..1], &arrays, &plan, &wf).unwrap();
        let b = synthesize_rx_noiseless(&paths[1..], &arrays, &plan, &wf).unwrap();
        let scale = all.norm();
        assert!((all - a - b).norm() <= 1e-12 * scale);
    }

    #[test]
    fn doubling_energy_scales_by_sqrt2() {
        let (paths, arrays, plan, wf) = demo_scene();
        let y1 = synthesize_rx_noiseless(&paths, &arrays, &plan, &wf).unwrap();
        let wf2 = WaveformConfig { pilot_energy: 2.0 * wf.pilot_energy, ..wf };
        let y2 = synthesize_rx_noiseless(&paths, &arrays, &plan, &wf2).unwrap();
        for (a, b) in y1.iter().zip(y2.iter()) {
            assert_relative_eq!(b.norm(), a.norm() * 2f64.sqrt(), max_relative = 1e-12);
        }
    }

    #[test]
    fn delay_ramp_and_doppler_rotation() {
        let (paths, arrays, plan, wf) = demo_scene();
        let p = paths[2];
        let y = synthesize_rx_noiseless(&[p], &arrays, &plan, &wf).unwrap();
        let inc = -2.0 * PI * p.toa * wf.subcarrier_spacing_hz;
        for s in 1..wf.n_subcarriers {
            let d = (y[(0, s)] / y[(0, s - 1)]).arg();
            assert_relative_eq!(crate::geometry::wrap_angle(d - inc), 0.0, epsilon = 1e-9);
        }
        // with an all-equal plan only the Doppler term changes between transmissions
        let flat = ones_plan(16, 4, wf.n_transmissions);
        let y = synthesize_rx_noiseless(&[p], &arrays, &flat, &wf).unwrap();
        let rot = Complex64::from_polar(1.0, 2.0 * PI * wf.doppler_hz(p.radial_velocity) * wf.block_duration());
        for t in 0..wf.n_transmissions - 1 {
            for s in 0..wf.n_subcarriers {
                assert!((y[(t + 1, s)] - y[(t, s)] * rot).norm() <= 1e-12 * y[(t, s)].norm());
            }
        }
    }

    #[test]
    fn noise_statistics() {
        let (paths, arrays, plan, wf) = demo_scene();
        let wf = WaveformConfig { n_subcarriers: 1280, ..wf };
        let clean = synthesize_rx_noiseless(&paths, &arrays, &plan, &wf).unwrap();
        let mut rng = stream_rng(3, 0, Stream::Measurement);
        let noisy = synthesize_rx(&paths, &arrays, &plan, &wf, &mut rng, true).unwrap();
        let r = noisy - clean;
        let n = r.len() as f64;
        let mean: C64 = r.iter().sum::<C64>() / n;
        let var = r.iter().map(|v| v.norm_sqr()).sum::<f64>() / n;
        let sigma2 = wf.noise_variance();
        assert!(n >= 1e4);
        assert!(mean.norm() < 4.0 * (sigma2 / n).sqrt());
        assert!((var / sigma2 - 1.0).abs() < 0.1);
    }

    proptest! {
        #[test]
        fn responses_are_unit_modulus(az in -PI..PI, el in 0.0..PI) {
            let l = ArrayLayout::ris_upa(5, 3, LAM / 4.0).unwrap();
            let a = steering_vector(&l, Angles::new(az, el), LAM).unwrap();
            let b = ris_combined_response(&l, Angles::new(az, el), LAM).unwrap();
            for (x, y) in a.iter().zip(b.iter()) {
                prop_assert!((x.norm() - 1.0).abs() < 1e-12);
                prop_assert!((x * x - y).norm() < 1e-9);
            }
        }
    }
}
