//! Time-balanced RIS coding, spatial phase profiles and angular uncertainty regions.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector3};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::channel::{ris_combined_response, wavenumber, ArrayLayout, Arrays};
use crate::geometry::{wrap_angle, Angles, Pose};
use crate::linalg::{psd_pinv, psd_sqrt};
use crate::{Error, Result, C64};

/// UE precoder and combiner used for one balanced transmission pair.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerPair {
    pub precoder: DVector<C64>,
    pub combiner: DVector<C64>,
}

/// T/2 spatial RIS profiles, each transmitted as +ω̃ then −ω̃, with one beamformer pair per slot pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RisProfilePlan {
    spatial: Vec<DVector<C64>>,
    beamformers: Vec<BeamformerPair>,
}

const UNIT_TOL: f64 = 1e-9;

impl RisProfilePlan {
    pub fn new(spatial: Vec<DVector<C64>>, beamformers: Vec<BeamformerPair>) -> Result<Self> {
        if spatial.is_empty() || spatial.len() != beamformers.len() {
            return Err(Error::InvalidArgument(format!(
                "need matching non-empty profile and beamformer lists, got {} and {}",
                spatial.len(),
                beamformers.len()
            )));
        }
        let n_ris = spatial[0].len();
        let n_ue = beamformers[0].precoder.len();
        for w in &spatial {
            if w.len() != n_ris || w.iter().any(|v| (v.norm() - 1.0).abs() > UNIT_TOL) {
                return Err(Error::InvalidArgument(
                    "RIS profiles must be unit modulus with equal lengths".into(),
                ));
            }
        }
        for bf in &beamformers {
            if bf.precoder.len() != n_ue || bf.combiner.len() != n_ue {
                return Err(Error::InvalidArgument("beamformer lengths differ".into()));
            }
            if (bf.precoder.norm() - 1.0).abs() > UNIT_TOL || (bf.combiner.norm() - 1.0).abs() > UNIT_TOL {
                return Err(Error::InvalidArgument("beamformers must have unit norm".into()));
            }
        }
        Ok(Self { spatial, beamformers })
    }

    pub fn spatial_profiles(&self) -> &[DVector<C64>] {
        &self.spatial
    }

    pub fn beamformers(&self) -> &[BeamformerPair] {
        &self.beamformers
    }

    /// T, the number of transmissions.
    pub fn n_transmissions(&self) -> usize {
        2 * self.spatial.len()
    }

    pub fn n_ris(&self) -> usize {
        self.spatial[0].len()
    }

    pub fn n_ue(&self) -> usize {
        self.beamformers[0].precoder.len()
    }

    /// RIS profile of transmission `t` (zero-based): ω̃ for even t, −ω̃ for odd t.
    pub fn ris_profile(&self, t: usize) -> DVector<C64> {
        let w = &self.spatial[t / 2];
        if t % 2 == 0 {
            w.clone()
        } else {
            -w
        }
    }

    /// All T expanded profiles.
    pub fn expanded_profiles(&self) -> Vec<DVector<C64>> {
        (0..self.n_transmissions()).map(|t| self.ris_profile(t)).collect()
    }

    pub fn beamformer(&self, t: usize) -> &BeamformerPair {
        &self.beamformers[t / 2]
    }

    /// Plan whose spatial profiles are the first `pairs` of this one.
    pub fn truncated(&self, pairs: usize) -> Result<Self> {
        if pairs == 0 || pairs > self.spatial.len() {
            return Err(Error::InvalidArgument("invalid truncation length".into()));
        }
        Ok(Self {
            spatial: self.spatial[..pairs].to_vec(),
            beamformers: self.beamformers[..pairs].to_vec(),
        })
    }
}

/// Rectangle in (azimuth, elevation) at the RIS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngularBox {
    pub az_min: f64,
    pub az_max: f64,
    pub el_min: f64,
    pub el_max: f64,
}

impl AngularBox {
    pub fn point(a: Angles) -> Self {
        Self {
            az_min: a.az,
            az_max: a.az,
            el_min: a.el,
            el_max: a.el,
        }
    }

    /// Corners in the order south-west, south-east, north-west, north-east.
    pub fn corners(&self) -> [Angles; 4] {
        [
            Angles::new(self.az_min, self.el_min),
            Angles::new(self.az_max, self.el_min),
            Angles::new(self.az_min, self.el_max),
            Angles::new(self.az_max, self.el_max),
        ]
    }

    pub fn az_span(&self) -> f64 {
        self.az_max - self.az_min
    }

    pub fn el_span(&self) -> f64 {
        self.el_max - self.el_min
    }

    pub fn is_degenerate(&self) -> bool {
        self.az_span() == 0.0 && self.el_span() == 0.0
    }

    pub fn contains(&self, a: Angles) -> bool {
        a.az >= self.az_min && a.az <= self.az_max && a.el >= self.el_min && a.el <= self.el_max
    }

    pub fn center(&self) -> Angles {
        Angles::new(0.5 * (self.az_min + self.az_max), 0.5 * (self.el_min + self.el_max))
    }
}

/// Phase-profile design strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileStrategy {
    Random,
    Directional,
    Uniform,
}

impl ProfileStrategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProfileStrategy::Random => "random",
            ProfileStrategy::Directional => "directional",
            ProfileStrategy::Uniform => "uniform",
        }
    }

    pub const ALL: [ProfileStrategy; 3] = [
        ProfileStrategy::Uniform,
        ProfileStrategy::Directional,
        ProfileStrategy::Random,
    ];
}

impl std::str::FromStr for ProfileStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Self::Random),
            "directional" => Ok(Self::Directional),
            "uniform" => Ok(Self::Uniform),
            other => Err(Error::InvalidArgument(format!("unknown strategy `{other}`"))),
        }
    }
}

/// Splits balanced observations: y_ris = (y_odd − y_even)/2, y_nris = (y_odd + y_even)/2.
pub fn separate_paths(y_odd: &DVector<C64>, y_even: &DVector<C64>) -> Result<(DVector<C64>, DVector<C64>)> {
    if y_odd.len() != y_even.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch {} vs {}",
            y_odd.len(),
            y_even.len()
        )));
    }
    let half = Complex64::new(0.5, 0.0);
    Ok(((y_odd - y_even) * half, (y_odd + y_even) * half))
}

/// Separates a full T × N_SC observation into RIS and non-RIS parts, T/2 × N_SC each.
pub fn separate_matrix(y: &DMatrix<C64>) -> Result<(DMatrix<C64>, DMatrix<C64>)> {
    if y.nrows() % 2 != 0 {
        return Err(Error::InvalidArgument("odd number of transmissions".into()));
    }
    let pairs = y.nrows() / 2;
    let mut ris = DMatrix::zeros(pairs, y.ncols());
    let mut nris = DMatrix::zeros(pairs, y.ncols());
    for p in 0..pairs {
        let odd = y.row(2 * p).transpose();
        let even = y.row(2 * p + 1).transpose();
        let (a, b) = separate_paths(&odd, &even)?;
        ris.set_row(p, &a.transpose());
        nris.set_row(p, &b.transpose());
    }
    Ok((ris, nris))
}

/// Random unit-modulus profile with i.i.d. U[0, 2π) phases.
pub fn random_profile<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<C64> {
    DVector::from_fn(n, |_, _| Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI)))
}

/// Unit-norm random-phase beamformer pairs.
pub fn random_beamformers<R: Rng + ?Sized>(n_ue: usize, pairs: usize, rng: &mut R) -> Vec<BeamformerPair> {
    let s = 1.0 / (n_ue as f64).sqrt();
    (0..pairs)
        .map(|_| BeamformerPair {
            precoder: random_profile(n_ue, rng) * Complex64::new(s, 0.0),
            combiner: random_profile(n_ue, rng) * Complex64::new(s, 0.0),
        })
        .collect()
}

/// Plan of random RIS profiles with random beamformers.
pub fn random_plan<R: Rng + ?Sized>(n_ris: usize, n_ue: usize, pairs: usize, rng: &mut R) -> Result<RisProfilePlan> {
    let bf = random_beamformers(n_ue, pairs, rng);
    let spatial = (0..pairs).map(|_| random_profile(n_ris, rng)).collect();
    RisProfilePlan::new(spatial, bf)
}

/// Directional profile ω̃ = exp(−2j X̆ᵀ g(φ)).
pub fn directional_profile(layout: &ArrayLayout, angle: Angles, wavelength: f64) -> DVector<C64> {
    layout
        .phases(&wavenumber(angle, wavelength))
        .map(|p| Complex64::from_polar(1.0, -2.0 * p))
}

/// Chi-square quantile at probability `p` with `dof` degrees of freedom.
pub fn chi_square_quantile(p: f64, dof: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!("probability {p} outside (0, 1)")));
    }
    let d = ChiSquared::new(dof).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(d.inverse_cdf(p))
}

/// Draws from N(mean, cov) for PSD `cov`.
pub fn sample_gaussian<R: Rng + ?Sized>(mean: &Vector3<f64>, sqrt_cov: &DMatrix<f64>, rng: &mut R) -> Vector3<f64> {
    let n = DVector::from_fn(3, |_, _| rng.sample::<f64, _>(StandardNormal));
    let d = sqrt_cov * n;
    mean + Vector3::new(d[0], d[1], d[2])
}

fn aod_of(pose: &Pose, x: &Vector3<f64>) -> Option<Angles> {
    Angles::of_vector(&pose.to_local(x))
}

/// Settings of the uncertainty-region computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxSettings {
    pub p_e: f64,
    pub dof: f64,
    pub n_samples: usize,
}

impl Default for BoxSettings {
    fn default() -> Self {
        Self {
            p_e: 0.99,
            dof: 2.0,
            n_samples: 1000,
        }
    }
}

/// Kept prior samples mapped to AoD, using an explicit sample set.
pub fn uncertainty_box_from_samples(
    prior_mean: &Vector3<f64>,
    prior_cov: &DMatrix<f64>,
    samples: &[Vector3<f64>],
    ris_pose: &Pose,
    p_e: f64,
    dof: f64,
) -> Result<AngularBox> {
    let t_e = chi_square_quantile(p_e, dof)?;
    let pinv = psd_pinv(prior_cov);
    let mut angles = Vec::new();
    for x in samples {
        let mu = DVector::from_column_slice((x - prior_mean).as_slice());
        let m = mu.dot(&(&pinv * &mu));
        if m <= t_e {
            if let Some(a) = aod_of(ris_pose, x) {
                angles.push(a);
            }
        }
    }
    let center = aod_of(ris_pose, prior_mean)
        .ok_or_else(|| Error::DegenerateGeometry("prior mean at the RIS".into()))?;
    if angles.is_empty() {
        return Ok(AngularBox::point(center));
    }
    let (s, c) = angles
        .iter()
        .fold((0.0, 0.0), |(s, c), a| (s + a.az.sin(), c + a.az.cos()));
    let ref_az = if s == 0.0 && c == 0.0 { center.az } else { s.atan2(c) };
    let mut b = AngularBox {
        az_min: f64::INFINITY,
        az_max: f64::NEG_INFINITY,
        el_min: f64::INFINITY,
        el_max: f64::NEG_INFINITY,
    };
    for a in &angles {
        let az = ref_az + wrap_angle(a.az - ref_az);
        b.az_min = b.az_min.min(az);
        b.az_max = b.az_max.max(az);
        b.el_min = b.el_min.min(a.el);
        b.el_max = b.el_max.max(a.el);
    }
    Ok(b)
}

/// Angular uncertainty box of the UE position prior seen from the RIS.
pub fn uncertainty_box<R: Rng + ?Sized>(
    prior_mean: &Vector3<f64>,
    prior_cov: &DMatrix<f64>,
    ris_pose: &Pose,
    settings: &BoxSettings,
    rng: &mut R,
) -> Result<AngularBox> {
    if prior_cov.nrows() != 3 || prior_cov.ncols() != 3 {
        return Err(Error::InvalidArgument("prior covariance must be 3x3".into()));
    }
    let l = psd_sqrt(prior_cov);
    let samples: Vec<_> = (0..settings.n_samples)
        .map(|_| sample_gaussian(prior_mean, &l, rng))
        .collect();
    uncertainty_box_from_samples(prior_mean, prior_cov, &samples, ris_pose, settings.p_e, settings.dof)
}

/// Grid cell (g_az, g_el), one-based, of profile index `t` (one-based).
pub fn grid_cell(t: usize, t_az: usize) -> (usize, usize) {
    let g_el = t.div_ceil(t_az);
    let g_az = t - t_az * (g_el - 1);
    (g_az, g_el)
}

/// Uniform-illumination profile for the `t`-th (one-based) grid cell of `bx`.
///
/// With `strict` the elevation offsets are divided by `t_az` as in the printed
/// formula; otherwise by `t_el`.
pub fn uniform_profile(
    layout: &ArrayLayout,
    bx: &AngularBox,
    t: usize,
    t_az: usize,
    t_el: usize,
    wavelength: f64,
    strict: bool,
) -> Result<DVector<C64>> {
    if t_az == 0 || t_el == 0 || t == 0 || t > t_az * t_el {
        return Err(Error::InvalidArgument(format!(
            "profile index {t} outside grid {t_az}x{t_el}"
        )));
    }
    let (g_az, g_el) = grid_cell(t, t_az);
    let z_az = bx.az_span();
    let z_el = bx.el_span();
    let d_az = t_az as f64;
    let d_el = if strict { t_az as f64 } else { t_el as f64 };
    let frac = |i: usize, n: usize| if n > 1 { i as f64 / (n as f64 - 1.0) } else { 0.0 };
    let out = DVector::from_fn(layout.len(), |n, _| {
        let (ia, ie) = layout.indices()[n];
        let az = bx.az_min + z_az * (g_az as f64 - 1.0) / d_az + z_az * frac(ia, layout.n_az()) / d_az;
        let el = bx.el_min + z_el * (g_el as f64 - 1.0) / d_el + z_el * frac(ie, layout.n_el()) / d_el;
        let p = layout.positions()[n].dot(&wavenumber(Angles::new(az, el), wavelength));
        Complex64::from_polar(1.0, -2.0 * p)
    });
    Ok(out)
}

/// G(φ) = Σ_t |ω_tᵀ b(φ)|².
pub fn beampattern_gain(profiles: &[DVector<C64>], layout: &ArrayLayout, angle: Angles, wavelength: f64) -> Result<f64> {
    if profiles.is_empty() {
        return Err(Error::InvalidArgument("empty profile list".into()));
    }
    let b = ris_combined_response(layout, angle, wavelength)?;
    let mut g = 0.0;
    for w in profiles {
        if w.len() != b.len() {
            return Err(Error::InvalidArgument("profile length differs from the RIS".into()));
        }
        g += (w.transpose() * &b)[(0, 0)].norm_sqr();
    }
    Ok(g)
}

/// Grid factorisation t_az × t_el = `pairs` whose cells are closest to square.
pub fn grid_shape(pairs: usize, bx: &AngularBox) -> (usize, usize) {
    let az = bx.az_span() * bx.center().el.sin().abs();
    let el = bx.el_span();
    if !(az > 0.0) || !(el > 0.0) {
        return if el > az { (1, pairs) } else { (pairs, 1) };
    }
    let mut best = (pairs, 1);
    let mut best_cost = f64::INFINITY;
    for t_az in (1..=pairs).rev() {
        if pairs % t_az != 0 {
            continue;
        }
        let t_el = pairs / t_az;
        let cost = ((az / t_az as f64) / (el / t_el as f64)).ln().abs();
        if cost < best_cost - 1e-12 {
            best_cost = cost;
            best = (t_az, t_el);
        }
    }
    best
}

/// Design options shared by all strategies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignSettings {
    pub boxes: BoxSettings,
    pub strict_paper_formula: bool,
    /// Fixed (t_az, t_el); chosen from the box aspect when absent.
    pub grid: Option<(usize, usize)>,
}

impl Default for DesignSettings {
    fn default() -> Self {
        Self {
            boxes: BoxSettings::default(),
            strict_paper_formula: true,
            grid: None,
        }
    }
}

/// A designed plan together with the uncertainty box used (uniform strategy only).
#[derive(Debug, Clone)]
pub struct DesignedPlan {
    pub plan: RisProfilePlan,
    pub uncertainty: Option<AngularBox>,
}

/// Designs a plan for the given strategy from the UE position prior.
///
/// Beamformers are drawn first so that strategies consuming the same stream share them.
#[allow(clippy::too_many_arguments)]
pub fn design_plan<R: Rng + ?Sized>(
    strategy: ProfileStrategy,
    arrays: &Arrays,
    ris_pose: &Pose,
    prior_mean: &Vector3<f64>,
    prior_cov: &DMatrix<f64>,
    n_transmissions: usize,
    wavelength: f64,
    settings: &DesignSettings,
    rng: &mut R,
) -> Result<DesignedPlan> {
    if n_transmissions == 0 || n_transmissions % 2 != 0 {
        return Err(Error::InvalidArgument("number of transmissions must be even".into()));
    }
    let pairs = n_transmissions / 2;
    let bf = random_beamformers(arrays.ue.len(), pairs, rng);
    let mut uncertainty = None;
    let spatial: Vec<DVector<C64>> = match strategy {
        ProfileStrategy::Random => (0..pairs).map(|_| random_profile(arrays.ris.len(), rng)).collect(),
        ProfileStrategy::Directional => {
            let l = psd_sqrt(prior_cov);
            let center = aod_of(ris_pose, prior_mean)
                .ok_or_else(|| Error::DegenerateGeometry("prior mean at the RIS".into()))?;
            (0..pairs)
                .map(|_| {
                    let x = sample_gaussian(prior_mean, &l, rng);
                    let a = aod_of(ris_pose, &x).unwrap_or(center);
                    directional_profile(&arrays.ris, a, wavelength)
                })
                .collect()
        }
        ProfileStrategy::Uniform => {
            let bx = uncertainty_box(prior_mean, prior_cov, ris_pose, &settings.boxes, rng)?;
            let (t_az, t_el) = match settings.grid {
                Some(g) => g,
                None => grid_shape(pairs, &bx),
            };
            if t_az * t_el != pairs {
                return Err(Error::InvalidArgument(format!(
                    "grid {t_az}x{t_el} does not match {pairs} profile pairs"
                )));
            }
            uncertainty = Some(bx);
            (1..=pairs)
                .map(|t| {
                    uniform_profile(&arrays.ris, &bx, t, t_az, t_el, wavelength, settings.strict_paper_formula)
                })
                .collect::<Result<_>>()?
        }
    };
    Ok(DesignedPlan {
        plan: RisProfilePlan::new(spatial, bf)?,
        uncertainty,
    })
}

/// Beampattern gain over a regular grid, rows `(az, el, gain_db)` with azimuth outermost.
pub fn beampattern_grid(
    profiles: &[DVector<C64>],
    layout: &ArrayLayout,
    wavelength: f64,
    bx: &AngularBox,
    n_az: usize,
    n_el: usize,
) -> Result<Vec<(f64, f64, f64)>> {
    if n_az == 0 || n_el == 0 {
        return Err(Error::InvalidArgument("empty grid".into()));
    }
    let lin = |lo: f64, hi: f64, n: usize, i: usize| {
        if n == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * i as f64 / (n as f64 - 1.0)
        }
    };
    let mut out = Vec::with_capacity(n_az * n_el);
    for i in 0..n_az {
        let az = lin(bx.az_min, bx.az_max, n_az, i);
        for j in 0..n_el {
            let el = lin(bx.el_min, bx.el_max, n_el, j);
            let g = beampattern_gain(profiles, layout, Angles::new(az, el), wavelength)?;
            out.push((az, el, 10.0 * g.max(1e-300).log10()));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const LAM: f64 = 0.01;

    fn ris8() -> ArrayLayout {
        ArrayLayout::ris_upa(8, 8, LAM / 4.0).unwrap()
    }

    #[test]
    fn separation_identities() {
        let a = DVector::from_vec(vec![Complex64::new(1.0, 2.0), Complex64::new(-3.0, 0.5)]);
        let (r, n) = separate_paths(&a, &a).unwrap();
        assert!(r.iter().all(|v| v.norm() == 0.0));
        assert_eq!(n, a);
        let b = DVector::from_vec(vec![Complex64::new(1.0, 0.0)]);
        assert!(separate_paths(&a, &b).is_err());
    }

    #[test]
    fn random_profile_statistics() {
        let mut rng = stream_rng(11, 0, Stream::Plan);
        let w = random_profile(100_000, &mut rng);
        assert!(w.iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
        let mean = w.iter().sum::<C64>() / 1e5;
        assert!(mean.norm() < 0.02);
        let mut rng2 = stream_rng(11, 0, Stream::Plan);
        assert_eq!(random_profile(100_000, &mut rng2), w);
    }

    #[test]
    fn directional_peak_and_conjugacy() {
        let l = ris8();
        let a = Angles::new(-1.3, 0.6);
        let w = directional_profile(&l, a, LAM);
        let b = ris_combined_response(&l, a, LAM).unwrap();
        for (x, y) in w.iter().zip(b.iter()) {
            assert_relative_eq!((x * y).re, 1.0, epsilon = 1e-12);
        }
        let g = beampattern_gain(&[w], &l, a, LAM).unwrap();
        assert_relative_eq!(g, 4096.0, max_relative = 1e-12);
        assert_relative_eq!(10.0 * g.log10(), 36.12, epsilon = 0.01);
    }

    fn half_power_width(n_az: usize) -> f64 {
        // elements along local x; sweep the direction within the local xz-plane
        let l = ArrayLayout::ris_upa(n_az, 4, LAM / 4.0).unwrap();
        let c = Angles::new(0.0, 0.3);
        let w = directional_profile(&l, c, LAM);
        let peak = beampattern_gain(&[w.clone()], &l, c, LAM).unwrap();
        let step = 1e-4;
        let mut d = 0.0;
        while d < 1.0 {
            let g = beampattern_gain(&[w.clone()], &l, Angles::new(0.0, c.el + d), LAM).unwrap();
            if g < 0.5 * peak {
                break;
            }
            d += step;
        }
        2.0 * d
    }

    #[test]
    fn beamwidth_halves_with_aperture() {
        let w8 = half_power_width(8);
        let w16 = half_power_width(16);
        assert!(w16 < w8);
        assert_relative_eq!(w8 / w16, 2.0, max_relative = 0.1);
    }

    #[test]
    fn chi_square_table_value() {
        assert_relative_eq!(chi_square_quantile(0.99, 2.0).unwrap(), 9.2103, epsilon = 1e-4);
        assert_relative_eq!(
            chi_square_quantile(0.99, 2.0).unwrap(),
            -2.0 * (1.0f64 - 0.99).ln(),
            max_relative = 1e-9
        );
        assert!(chi_square_quantile(1.0, 2.0).is_err());
    }

    #[test]
    fn grid_cell_formula() {
        assert_eq!(grid_cell(7, 5), (2, 2));
        assert_eq!(grid_cell(5, 5), (5, 1));
        assert_eq!(grid_cell(1, 2), (1, 1));
        assert_eq!(grid_cell(4, 2), (2, 2));
    }

    #[test]
    fn zero_covariance_gives_point_box() {
        let pose = Pose::default_ris(Vector3::new(40.0, 0.0, 20.0));
        let mean = Vector3::new(50.0, 3.0, 0.0);
        let mut rng = stream_rng(1, 0, Stream::Plan);
        let bx = uncertainty_box(&mean, &DMatrix::zeros(3, 3), &pose, &BoxSettings::default(), &mut rng).unwrap();
        let a = aod_of(&pose, &mean).unwrap();
        assert!(bx.is_degenerate());
        assert_relative_eq!(bx.az_min, a.az, epsilon = 1e-12);
        assert_relative_eq!(bx.el_min, a.el, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_box_reverts_to_pencil_beam() {
        let l = ris8();
        let a = Angles::new(-2.0, 0.9);
        let w = uniform_profile(&l, &AngularBox::point(a), 3, 2, 2, LAM, true).unwrap();
        assert_relative_eq!((w - directional_profile(&l, a, LAM)).norm(), 0.0, epsilon = 1e-9);
        assert!(uniform_profile(&l, &AngularBox::point(a), 5, 2, 2, LAM, true).is_err());
    }

    #[test]
    fn strict_switch_only_matters_for_unequal_grids() {
        let l = ris8();
        let bx = AngularBox {
            az_min: -2.0,
            az_max: -1.5,
            el_min: 0.4,
            el_max: 0.8,
        };
        let a = uniform_profile(&l, &bx, 3, 2, 2, LAM, true).unwrap();
        let b = uniform_profile(&l, &bx, 3, 2, 2, LAM, false).unwrap();
        assert_eq!(a, b);
        let a = uniform_profile(&l, &bx, 3, 2, 3, LAM, true).unwrap();
        let b = uniform_profile(&l, &bx, 3, 2, 3, LAM, false).unwrap();
        assert!((a - b).norm() > 1e-3);
    }

    #[test]
    fn uniform_plan_with_degenerate_prior_equals_directional() {
        let arrays = Arrays {
            ue: ArrayLayout::ue_upa(2, 2, LAM / 2.0).unwrap(),
            ris: ris8(),
        };
        let pose = Pose::default_ris(Vector3::new(40.0, 0.0, 20.0));
        let mean = Vector3::new(52.0, -4.0, 0.0);
        let cov = DMatrix::zeros(3, 3);
        let s = DesignSettings::default();
        let mut r1 = stream_rng(5, 0, Stream::Plan);
        let mut r2 = stream_rng(5, 0, Stream::Plan);
        let u = design_plan(ProfileStrategy::Uniform, &arrays, &pose, &mean, &cov, 8, LAM, &s, &mut r1).unwrap();
        let d = design_plan(ProfileStrategy::Directional, &arrays, &pose, &mean, &cov, 8, LAM, &s, &mut r2).unwrap();
        assert_eq!(u.plan.beamformers(), d.plan.beamformers());
        for (a, b) in u.plan.spatial_profiles().iter().zip(d.plan.spatial_profiles()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn grid_shape_prefers_square_cells() {
        let wide = AngularBox {
            az_min: 0.0,
            az_max: 0.8,
            el_min: 1.0,
            el_max: 1.1,
        };
        let s = grid_shape(4, &wide);
        assert_eq!(s.0 * s.1, 4);
        assert_eq!(s, (4, 1));
        assert_eq!(grid_shape(5, &AngularBox::point(Angles::new(0.0, 1.0))), (5, 1));
    }

    #[test]
    fn expanded_plan_gain_doubles() {
        let l = ris8();
        let mut rng = stream_rng(2, 0, Stream::Plan);
        let plan = random_plan(l.len(), 4, 4, &mut rng).unwrap();
        let a = Angles::new(-1.0, 0.5);
        let g_half = beampattern_gain(plan.spatial_profiles(), &l, a, LAM).unwrap();
        let g_full = beampattern_gain(&plan.expanded_profiles(), &l, a, LAM).unwrap();
        assert_relative_eq!(g_full, 2.0 * g_half, max_relative = 1e-12);
        for t in 0..plan.n_transmissions() {
            let w = plan.ris_profile(t);
            let sign = if t % 2 == 0 { 1.0 } else { -1.0 };
            assert_eq!(w, &plan.spatial_profiles()[t / 2] * Complex64::new(sign, 0.0));
        }
    }

    proptest! {
        #[test]
        fn box_grows_with_probability(seed in 0u64..1000, p1 in 0.5f64..0.9, dp in 0.01f64..0.09) {
            let pose = Pose::default_ris(Vector3::new(40.0, 0.0, 20.0));
            let mean = Vector3::new(50.0, 5.0, 0.0);
            let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![8.0, 8.0, 0.0]));
            let l = psd_sqrt(&cov);
            let mut rng = stream_rng(seed, 0, Stream::Plan);
            let samples: Vec<_> = (0..200).map(|_| sample_gaussian(&mean, &l, &mut rng)).collect();
            let a = uncertainty_box_from_samples(&mean, &cov, &samples, &pose, p1, 2.0).unwrap();
            let b = uncertainty_box_from_samples(&mean, &cov, &samples, &pose, p1 + dp, 2.0).unwrap();
            prop_assert!(b.az_min <= a.az_min + 1e-12 && b.az_max >= a.az_max - 1e-12);
            prop_assert!(b.el_min <= a.el_min + 1e-12 && b.el_max >= a.el_max - 1e-12);
        }

        #[test]
        fn gain_invariant_to_global_phase(seed in 0u64..1000, phase in 0.0f64..6.28, az in -3.0f64..0.0, el in 0.1f64..1.5) {
            let l = ArrayLayout::ris_upa(4, 4, LAM / 4.0).unwrap();
            let mut rng = stream_rng(seed, 1, Stream::Plan);
            let ws: Vec<_> = (0..3).map(|_| random_profile(16, &mut rng)).collect();
            let mut rot = ws.clone();
            rot[1] *= Complex64::from_polar(1.0, phase);
            let a = Angles::new(az, el);
            let g1 = beampattern_gain(&ws, &l, a, LAM).unwrap();
            let g2 = beampattern_gain(&rot, &l, a, LAM).unwrap();
            prop_assert!((g1 - g2).abs() <= 1e-9 * g1.max(1.0));
            prop_assert!(g1 >= 0.0);
        }

        #[test]
        fn uniform_profiles_unit_modulus(t in 1usize..=6, az in -3.0f64..-0.5, span in 0.0f64..0.5) {
            let l = ris8();
            let bx = AngularBox { az_min: az, az_max: az + span, el_min: 0.3, el_max: 0.3 + span };
            let w = uniform_profile(&l, &bx, t, 3, 2, LAM, true).unwrap();
            prop_assert!(w.iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
        }
    }
}
