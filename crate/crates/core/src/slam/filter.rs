//! Marginal Poisson multi-Bernoulli SLAM filter with a known, separable RIS path.

use nalgebra::{DMatrix, DVector, Vector3};

use super::association::marginal_associations;
use super::gaussian::{ckf_update, cubature_transform, merge, GaussianDensity};
use super::model::{
    azimuth_indices, landmark_measurement, measurement_dim, ris_measurement, type_index, Dynamics, Measurement,
    MeasurementKind, HEADING, MAP_TYPES, SPEED, UE_DIM,
};
use crate::assignment::murty;
use crate::geometry::{rotation_from_heading, wrap_angle, Angles, LandmarkKind, Pose};
use crate::linalg::{gaussian_log_density, guarded_inverse, select, select_vec, symmetrize};
use crate::profile::chi_square_quantile;
use crate::{Error, Result};

/// Filter parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    /// Detection probability inside the field of view.
    pub p_d: f64,
    /// Gate probability; 1 disables gating.
    pub gate_probability: f64,
    /// Detection probability used outside the gate or field of view.
    pub p_d_floor: f64,
    /// Factor applied to every measurement covariance.
    pub noise_inflation: f64,
    /// Clutter intensity in filter measurement units.
    pub clutter_intensity: f64,
    pub survival: f64,
    /// Scatterers farther than this from the UE are not detectable [m].
    pub r_fov: f64,
    pub existence_threshold: f64,
    pub prune_bernoulli: f64,
    pub prune_component: f64,
    pub prune_hypothesis: f64,
    pub doppler: bool,
    /// UE covariance trace beyond which the filter is flagged as diverged.
    pub divergence_trace: f64,
    /// Condition the map update on the RIS measurement (UE density after the
    /// RIS update) instead of the predicted UE density.
    pub map_after_ris: bool,
    pub dynamics: Dynamics,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            p_d: 0.95,
            gate_probability: 0.99,
            p_d_floor: 1e-9,
            noise_inflation: 4.0,
            clutter_intensity: 2.1e-6,
            survival: 0.99,
            r_fov: 50.0,
            existence_threshold: 0.4,
            prune_bernoulli: 1e-5,
            prune_component: 5e-10,
            prune_hypothesis: 1e-4,
            doppler: true,
            divergence_trace: 1e6,
            map_after_ris: false,
            dynamics: Dynamics::default(),
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        let prob = |v: f64| (0.0..=1.0).contains(&v);
        if !prob(self.p_d) || !prob(self.survival) || !(self.gate_probability > 0.0 && self.gate_probability <= 1.0) {
            return Err(Error::InvalidArgument("probabilities must lie in [0, 1]".into()));
        }
        if !(self.p_d_floor >= 0.0 && self.p_d_floor < 1.0)
            || !(self.noise_inflation > 0.0)
            || !(self.clutter_intensity >= 0.0)
            || !(self.r_fov > 0.0)
            || !prob(self.existence_threshold)
        {
            return Err(Error::InvalidArgument("invalid filter parameters".into()));
        }
        self.dynamics.validate()
    }
}

/// One Gaussian component of a Poisson intensity.
#[derive(Debug, Clone, PartialEq)]
pub struct PppComponent {
    pub kind: LandmarkKind,
    pub weight: f64,
    pub density: GaussianDensity,
    /// Slot in the birth intensity that feeds this component, if any.
    pub birth_slot: Option<usize>,
}

/// Intensity of undetected landmarks as per-type Gaussian mixtures.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PppIntensity {
    pub components: Vec<PppComponent>,
}

impl PppIntensity {
    /// Mixture approximating a uniform intensity of total `mass` over a box,
    /// one component per grid cell with standard deviation of half a cell.
    pub fn uniform_box(kind: LandmarkKind, min: Vector3<f64>, max: Vector3<f64>, mass: f64, grid: [usize; 3]) -> Result<Self> {
        if grid.iter().any(|g| *g == 0) || (0..3).any(|k| !(max[k] >= min[k])) || !(mass >= 0.0) {
            return Err(Error::InvalidArgument("invalid intensity box".into()));
        }
        let n = grid[0] * grid[1] * grid[2];
        let mut components = Vec::with_capacity(n);
        let cell = Vector3::new(
            (max.x - min.x) / grid[0] as f64,
            (max.y - min.y) / grid[1] as f64,
            (max.z - min.z) / grid[2] as f64,
        );
        let var = DMatrix::from_diagonal(&DVector::from_iterator(3, cell.iter().map(|c| (0.5 * c).powi(2).max(1e-6))));
        for i in 0..grid[0] {
            for j in 0..grid[1] {
                for k in 0..grid[2] {
                    let c = Vector3::new(
                        min.x + (i as f64 + 0.5) * cell.x,
                        min.y + (j as f64 + 0.5) * cell.y,
                        min.z + (k as f64 + 0.5) * cell.z,
                    );
                    components.push(PppComponent {
                        kind,
                        weight: mass / n as f64,
                        density: GaussianDensity {
                            mean: DVector::from_column_slice(c.as_slice()),
                            cov: var.clone(),
                        },
                        birth_slot: None,
                    });
                }
            }
        }
        Ok(Self { components })
    }

    pub fn extend(&mut self, other: PppIntensity) {
        self.components.extend(other.components);
    }

    pub fn mass(&self, kind: LandmarkKind) -> f64 {
        self.components.iter().filter(|c| c.kind == kind).map(|c| c.weight).sum()
    }
}

/// Per-type weight and position density of a Bernoulli component.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeDensity {
    pub weight: f64,
    pub density: GaussianDensity,
}

/// A detected landmark hypothesis. `types` is indexed like [`MAP_TYPES`].
#[derive(Debug, Clone, PartialEq)]
pub struct Bernoulli {
    pub id: u64,
    pub existence: f64,
    pub types: Vec<TypeDensity>,
}

impl Bernoulli {
    pub fn most_likely_type(&self) -> LandmarkKind {
        let i = (0..self.types.len())
            .max_by(|a, b| self.types[*a].weight.total_cmp(&self.types[*b].weight))
            .unwrap_or(0);
        MAP_TYPES[i]
    }

    /// A single-type Bernoulli.
    pub fn of_type(id: u64, existence: f64, kind: LandmarkKind, density: GaussianDensity) -> Result<Self> {
        let t = type_index(kind).ok_or_else(|| Error::InvalidArgument("the RIS is not a map landmark".into()))?;
        let types = (0..MAP_TYPES.len())
            .map(|k| TypeDensity {
                weight: if k == t { 1.0 } else { 0.0 },
                density: density.clone(),
            })
            .collect();
        Ok(Self { id, existence, types })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandmarkEstimate {
    pub id: u64,
    pub kind: LandmarkKind,
    pub existence: f64,
    pub position: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UeEstimate {
    pub position: Vector3<f64>,
    pub heading: f64,
    pub speed: f64,
}

/// What an update did.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateLog {
    /// Most likely association: prior Bernoulli id and its measurement index
    /// among the non-RIS measurements (`None` for a miss).
    pub association: Vec<(u64, Option<usize>)>,
    pub new_landmarks: usize,
    pub ris_used: bool,
}

/// Detection hypothesis of one prior Bernoulli type with one measurement.
#[derive(Debug, Clone)]
struct Detection {
    /// `p_D · N(z; ẑ, S)`.
    rho: f64,
    posterior: GaussianDensity,
}

/// Id 1 is reserved for the RIS, whose Bernoulli is known and never updated.
pub const RIS_ID: u64 = 1;

#[derive(Debug, Clone)]
pub struct MpmbFilter {
    config: FilterConfig,
    ris_pose: Pose,
    ue: GaussianDensity,
    ppp: PppIntensity,
    birth: PppIntensity,
    bernoullis: Vec<Bernoulli>,
    next_id: u64,
}

impl MpmbFilter {
    /// `birth` components are added to the intensity at every prediction; their
    /// `birth_slot` is assigned here.
    pub fn new(config: FilterConfig, ris_pose: Pose, ue_prior: GaussianDensity, ppp: PppIntensity, birth: PppIntensity) -> Result<Self> {
        config.validate()?;
        if ue_prior.dim() != UE_DIM {
            return Err(Error::InvalidArgument("UE prior must be 5-dimensional".into()));
        }
        let all = ppp.components.iter().chain(birth.components.iter());
        for c in all {
            if type_index(c.kind).is_none() || c.density.dim() != 3 || !(c.weight >= 0.0) {
                return Err(Error::InvalidArgument("intensity components must be 3-D RP/SP Gaussians".into()));
            }
        }
        let mut birth = birth;
        for (k, c) in birth.components.iter_mut().enumerate() {
            c.birth_slot = Some(k);
        }
        let mut ue = ue_prior;
        ue.wrap(&[HEADING]);
        Ok(Self {
            config,
            ris_pose,
            ue,
            ppp,
            birth,
            bernoullis: Vec::new(),
            next_id: RIS_ID + 1,
        })
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn ue(&self) -> &GaussianDensity {
        &self.ue
    }

    pub fn ppp(&self) -> &PppIntensity {
        &self.ppp
    }

    pub fn bernoullis(&self) -> &[Bernoulli] {
        &self.bernoullis
    }

    /// Adds a detected landmark with a fresh id, returning the id.
    pub fn insert_bernoulli(&mut self, existence: f64, types: Vec<TypeDensity>) -> Result<u64> {
        if types.len() != MAP_TYPES.len() || !(0.0..=1.0).contains(&existence) {
            return Err(Error::InvalidArgument("invalid Bernoulli component".into()));
        }
        let id = self.next_id;
        self.next_id += 1;
        self.bernoullis.push(Bernoulli { id, existence, types });
        Ok(id)
    }

    pub fn ue_estimate(&self) -> UeEstimate {
        let m = &self.ue.mean;
        UeEstimate {
            position: Vector3::new(m[0], m[1], m[2]),
            heading: wrap_angle(m[HEADING]),
            speed: m[SPEED],
        }
    }

    pub fn diverged(&self) -> bool {
        let tr = self.ue.cov.trace();
        !tr.is_finite() || tr > self.config.divergence_trace || self.ue.mean.iter().any(|v| !v.is_finite())
    }

    fn ue_position(&self) -> Vector3<f64> {
        Vector3::new(self.ue.mean[0], self.ue.mean[1], self.ue.mean[2])
    }

    /// Field-of-view detection probability of a landmark at `x`.
    fn p_d_fov(&self, kind: LandmarkKind, x: &DVector<f64>, ue: &Vector3<f64>) -> f64 {
        match kind {
            LandmarkKind::Sp => {
                let d = (Vector3::new(x[0], x[1], x[2]) - ue).norm();
                if d <= self.config.r_fov {
                    self.config.p_d
                } else {
                    0.0
                }
            }
            _ => self.config.p_d,
        }
    }

    /// Joint cubature update of the UE and a landmark position with one measurement.
    fn joint_update(&self, ue: &GaussianDensity, lm: &GaussianDensity, z: &DVector<f64>, r: &DMatrix<f64>) -> Option<super::gaussian::CkfUpdate> {
        let doppler = self.config.doppler;
        let joint = GaussianDensity::stack(ue, lm);
        ckf_update(
            &joint,
            |x| landmark_measurement(&x.as_slice()[..UE_DIM], &x.as_slice()[UE_DIM..], doppler),
            z,
            r,
            &azimuth_indices(MeasurementKind::NonRis, doppler),
            &[HEADING],
        )
    }

    /// Density and weight of a landmark first detected by `z` (per map type).
    fn birth_hypotheses(&self, ue: &GaussianDensity, z: &DVector<f64>, r: &DMatrix<f64>) -> Vec<Option<(f64, GaussianDensity)>> {
        let none = vec![None; MAP_TYPES.len()];
        let doppler = self.config.doppler;
        let pos_idx: Vec<usize> = if doppler { vec![0, 2, 3] } else { vec![0, 1, 2] };
        let z_pos = select_vec(z, &pos_idx);
        let r_pp = select(r, &pos_idx, &pos_idx);
        // Noise of v conditioned on the position-type components.
        let (gain, r_v) = if doppler {
            let r_vp = select(r, &[1], &pos_idx);
            let inv = match guarded_inverse(&r_pp) {
                Ok(m) => m,
                Err(_) => return none,
            };
            let k = &r_vp * inv;
            let rv = r[(1, 1)] - (&k * r_vp.transpose())[(0, 0)];
            (Some(k), rv.max(0.0))
        } else {
            (None, 0.0)
        };
        let u = GaussianDensity {
            mean: z_pos.clone(),
            cov: r_pp,
        };
        let joint = GaussianDensity::stack(ue, &u);
        let map = |w: &DVector<f64>| -> Option<DVector<f64>> {
            let rot = rotation_from_heading(w[HEADING]).ok()?;
            let dir = Angles::new(w[UE_DIM + 1], w[UE_DIM + 2]).direction();
            let x = Vector3::new(w[0], w[1], w[2]) + rot * dir * (0.5 * w[UE_DIM]);
            let mut out = vec![x.x, x.y, x.z];
            if let Some(k) = &gain {
                let resid = &z_pos - w.rows(UE_DIM, 3);
                let radial = w[SPEED] * w[UE_DIM + 1].cos() * w[UE_DIM + 2].sin();
                out.push(radial + (k * resid)[(0, 0)]);
            }
            Some(DVector::from_vec(out))
        };
        let t = match cubature_transform(&joint, map, &[], None) {
            Some(t) => t,
            None => return none,
        };
        let mut mu = t.mean.rows(0, 3).into_owned();
        let mut p = t.cov.view((0, 0), (3, 3)).into_owned();
        let mut lik_v = 1.0;
        if doppler {
            let s = t.cov[(3, 3)] + r_v;
            if !(s > 0.0) {
                return none;
            }
            let innov = z[1] - t.mean[3];
            lik_v = (-0.5 * innov * innov / s).exp() / (2.0 * std::f64::consts::PI * s).sqrt();
            let c = t.cov.view((0, 3), (3, 1)).into_owned();
            mu += &c * (innov / s);
            p -= &c * c.transpose() / s;
        }
        let p = symmetrize(&p);
        let range = 0.5 * z_pos[0];
        let jac = 0.5 * range * range * z_pos[2].sin().abs();
        let ue_pos = Vector3::new(ue.mean[0], ue.mean[1], ue.mean[2]);
        MAP_TYPES
            .iter()
            .map(|&kind| {
                let pd = self.p_d_fov(kind, &mu, &ue_pos);
                if pd == 0.0 {
                    return None;
                }
                let mut comps = Vec::new();
                let mut total = 0.0;
                for c in self.ppp.components.iter().filter(|c| c.kind == kind && c.weight > 0.0) {
                    let s = symmetrize(&(&c.density.cov + &p));
                    let (ll, _) = gaussian_log_density(&(&mu - &c.density.mean), &s)?;
                    let q = c.weight * ll.exp();
                    if !(q > 0.0) {
                        continue;
                    }
                    let inv = s.cholesky()?.inverse();
                    let k = &c.density.cov * inv;
                    let mean = &c.density.mean + &k * (&mu - &c.density.mean);
                    let cov = symmetrize(&(&c.density.cov - &k * &c.density.cov));
                    total += q;
                    comps.push((q, GaussianDensity { mean, cov }));
                }
                let refs: Vec<(f64, &GaussianDensity)> = comps.iter().map(|(w, g)| (*w, g)).collect();
                let density = merge(&refs, &[])?;
                let rho = pd * jac * lik_v * total;
                (rho > 0.0 && rho.is_finite()).then_some((rho, density))
            })
            .collect()
    }

    /// Update with the measurements of one time step: at most one RIS
    /// measurement plus any number of non-RIS measurements.
    pub fn update(&mut self, measurements: &[Measurement]) -> Result<UpdateLog> {
        let cfg = self.config;
        let doppler = cfg.doppler;
        let mut ris = None;
        let mut nris = Vec::new();
        for m in measurements {
            if m.value.len() != measurement_dim(m.kind, doppler) {
                return Err(Error::InvalidArgument("measurement dimension does not match the Doppler setting".into()));
            }
            match m.kind {
                MeasurementKind::Ris => {
                    if ris.is_some() {
                        return Err(Error::InvalidArgument("more than one RIS measurement".into()));
                    }
                    ris = Some(m);
                }
                MeasurementKind::NonRis => nris.push(m),
            }
        }
        let mut log = UpdateLog::default();
        let mut ris_ue = self.ue.clone();
        if let Some(z) = ris {
            let r = &z.cov * cfg.noise_inflation;
            let pose = self.ris_pose;
            if let Some(u) = ckf_update(
                &ris_ue,
                |x| ris_measurement(x.as_slice(), &pose, doppler),
                &z.value,
                &r,
                &azimuth_indices(MeasurementKind::Ris, doppler),
                &[HEADING],
            ) {
                ris_ue = u.posterior;
                log.ris_used = true;
            }
        }
        let prior_ue = if cfg.map_after_ris { ris_ue.clone() } else { self.ue.clone() };
        let ue_pos = self.ue_position();
        let n_l = self.bernoullis.len();
        let n_m = nris.len();
        let inflated: Vec<DMatrix<f64>> = nris.iter().map(|m| &m.cov * cfg.noise_inflation).collect();
        let gate = if cfg.gate_probability < 1.0 {
            Some(chi_square_quantile(cfg.gate_probability, measurement_dim(MeasurementKind::NonRis, doppler) as f64)?)
        } else {
            None
        };

        // Steps iii and iv: missed and detected hypotheses of prior Bernoullis.
        let mut weights = DMatrix::zeros(n_l, n_m + 1);
        let mut miss_prob = vec![vec![0.0; MAP_TYPES.len()]; n_l];
        let mut detections: Vec<Vec<Vec<Option<Detection>>>> = Vec::with_capacity(n_l);
        for (i, b) in self.bernoullis.iter().enumerate() {
            let mut miss = 0.0;
            for (t, td) in b.types.iter().enumerate() {
                let q = 1.0 - self.p_d_fov(MAP_TYPES[t], &td.density.mean, &ue_pos);
                miss_prob[i][t] = q;
                miss += td.weight * q;
            }
            weights[(i, 0)] = 1.0 - b.existence + b.existence * miss;
            let mut row = Vec::with_capacity(n_m);
            for (j, z) in nris.iter().enumerate() {
                let mut per_type = Vec::with_capacity(MAP_TYPES.len());
                let mut total = 0.0;
                for (t, td) in b.types.iter().enumerate() {
                    if td.weight <= 0.0 {
                        per_type.push(None);
                        continue;
                    }
                    let det = self.joint_update(&prior_ue, &td.density, &z.value, &inflated[j]).map(|u| {
                        let pd = self.p_d_fov(MAP_TYPES[t], &td.density.mean, &ue_pos);
                        let in_gate = gate.is_none_or(|g| u.mahalanobis < g);
                        let p = if pd > 0.0 && in_gate { pd } else { cfg.p_d_floor };
                        Detection {
                            rho: p * u.log_likelihood.exp(),
                            posterior: u.posterior.marginal(UE_DIM, 3),
                        }
                    });
                    if let Some(d) = &det {
                        total += td.weight * d.rho;
                    }
                    per_type.push(det);
                }
                weights[(i, j + 1)] = b.existence * total;
                row.push(per_type);
            }
            if weights.row(i).iter().all(|w| !(*w > 0.0)) {
                weights[(i, 0)] = 1.0;
            }
            detections.push(row);
        }

        // Step ii: landmarks detected for the first time.
        let births: Vec<Vec<Option<(f64, GaussianDensity)>>> = nris
            .iter()
            .zip(inflated.iter())
            .map(|(z, r)| self.birth_hypotheses(&prior_ue, &z.value, r))
            .collect();
        let unassigned_w: Vec<f64> = births
            .iter()
            .map(|b| cfg.clutter_intensity + b.iter().flatten().map(|(r, _)| r).sum::<f64>())
            .collect();

        // Marginal association probabilities; negligible pairings are dropped.
        let mut sparse = weights.clone();
        for i in 0..n_l {
            for j in 0..n_m {
                if sparse[(i, j + 1)] <= 1e-12 * sparse[(i, 0)] * unassigned_w[j] {
                    sparse[(i, j + 1)] = 0.0;
                }
            }
        }
        let marg = marginal_associations(&sparse, &unassigned_w)?;

        // Most likely global association for the UE update.
        let mut best: Vec<Option<usize>> = vec![None; n_l];
        if n_l > 0 {
            let mut cost = DMatrix::from_element(n_l, n_m + n_l, f64::INFINITY);
            for i in 0..n_l {
                for j in 0..n_m {
                    let w = sparse[(i, j + 1)];
                    if w > 0.0 {
                        cost[(i, j)] = -w.ln() + unassigned_w[j].max(1e-300).ln();
                    }
                }
                if sparse[(i, 0)] > 0.0 {
                    cost[(i, n_m + i)] = -sparse[(i, 0)].ln();
                }
            }
            if let Ok(sol) = murty(&cost, 1) {
                if let Some(a) = sol.first() {
                    for (i, &c) in a.columns.iter().enumerate() {
                        best[i] = (c < n_m).then_some(c);
                    }
                }
            }
        }
        log.association = self.bernoullis.iter().zip(best.iter()).map(|(b, a)| (b.id, *a)).collect();

        // UE update: associated landmark measurements after the RIS update.
        let mut ue = ris_ue;
        for (i, a) in best.iter().enumerate() {
            let Some(j) = *a else { continue };
            let b = &self.bernoullis[i];
            let mut comps = Vec::new();
            for (t, td) in b.types.iter().enumerate() {
                let Some(d) = &detections[i][j][t] else { continue };
                let w = td.weight * d.rho;
                if w > 0.0 {
                    if let Some(u) = self.joint_update(&ue, &td.density, &nris[j].value, &inflated[j]) {
                        comps.push((w, u.posterior.marginal(0, UE_DIM)));
                    }
                }
            }
            let refs: Vec<(f64, &GaussianDensity)> = comps.iter().map(|(w, g)| (*w, g)).collect();
            if let Some(m) = merge(&refs, &[HEADING]) {
                ue = m;
            }
        }

        // Map update with the marginal association probabilities.
        let mut updated = Vec::with_capacity(n_l + n_m);
        for (i, b) in self.bernoullis.iter().enumerate() {
            let mut hp: Vec<f64> = marg.landmark.row(i).iter().copied().collect();
            for v in hp.iter_mut() {
                if *v < cfg.prune_hypothesis {
                    *v = 0.0;
                }
            }
            let s: f64 = hp.iter().sum();
            if !(s > 0.0) {
                continue;
            }
            hp.iter_mut().for_each(|v| *v /= s);
            if hp[0] == 1.0 && miss_prob[i].iter().all(|q| *q == 1.0) {
                updated.push(b.clone());
                continue;
            }
            let mut comps: Vec<Vec<(f64, &GaussianDensity)>> = vec![Vec::new(); MAP_TYPES.len()];
            let mut existence = 0.0;
            if hp[0] > 0.0 {
                let miss: f64 = b.types.iter().zip(miss_prob[i].iter()).map(|(td, q)| td.weight * q).sum();
                if miss > 0.0 {
                    let r0 = b.existence * miss / (1.0 - b.existence + b.existence * miss);
                    existence += hp[0] * r0;
                    for (t, td) in b.types.iter().enumerate() {
                        let w = hp[0] * r0 * td.weight * miss_prob[i][t] / miss;
                        if w > 0.0 {
                            comps[t].push((w, &td.density));
                        }
                    }
                }
            }
            for j in 0..n_m {
                if hp[j + 1] == 0.0 {
                    continue;
                }
                let total: f64 = b
                    .types
                    .iter()
                    .zip(detections[i][j].iter())
                    .map(|(td, d)| d.as_ref().map_or(0.0, |d| td.weight * d.rho))
                    .sum();
                if !(total > 0.0) {
                    continue;
                }
                existence += hp[j + 1];
                for (t, td) in b.types.iter().enumerate() {
                    if let Some(d) = &detections[i][j][t] {
                        let w = hp[j + 1] * td.weight * d.rho / total;
                        if w > 0.0 {
                            comps[t].push((w, &d.posterior));
                        }
                    }
                }
            }
            let mass: Vec<f64> = comps.iter().map(|c| c.iter().map(|(w, _)| w).sum()).collect();
            let total: f64 = mass.iter().sum();
            if !(total > 0.0) {
                continue;
            }
            let types = (0..MAP_TYPES.len())
                .map(|t| TypeDensity {
                    weight: mass[t] / total,
                    density: merge(&comps[t], &[]).unwrap_or_else(|| b.types[t].density.clone()),
                })
                .collect();
            updated.push(Bernoulli {
                id: b.id,
                existence: existence.clamp(0.0, 1.0),
                types,
            });
        }
        for (j, hyps) in births.into_iter().enumerate() {
            let rho: f64 = hyps.iter().flatten().map(|(r, _)| r).sum();
            if !(rho > 0.0) {
                continue;
            }
            let r = marg.unassigned[j] * rho / (rho + cfg.clutter_intensity);
            if r < cfg.prune_bernoulli {
                continue;
            }
            let fallback = hyps.iter().flatten().next().map(|(_, d)| d.clone());
            let Some(fallback) = fallback else { continue };
            let types = hyps
                .into_iter()
                .map(|h| match h {
                    Some((w, d)) => TypeDensity { weight: w / rho, density: d },
                    None => TypeDensity { weight: 0.0, density: fallback.clone() },
                })
                .collect();
            updated.push(Bernoulli {
                id: self.next_id,
                existence: r.clamp(0.0, 1.0),
                types,
            });
            self.next_id += 1;
            log.new_landmarks += 1;
        }

        // Step i: undetected landmarks that remain undetected.
        for i in 0..self.ppp.components.len() {
            let c = &self.ppp.components[i];
            let q = 1.0 - self.p_d_fov(c.kind, &c.density.mean, &ue_pos);
            self.ppp.components[i].weight *= q;
        }
        self.bernoullis = updated;
        ue.wrap(&[HEADING]);
        self.ue = ue;
        Ok(log)
    }

    /// Prediction to the next time step.
    pub fn predict(&mut self) {
        let dynamics = self.config.dynamics;
        let dy = cubature_transform(
            &self.ue,
            |s| Some(DVector::from_element(1, dynamics.displacement(s[HEADING], s[SPEED]).1)),
            &[],
            None,
        );
        if let Some(t) = cubature_transform(
            &self.ue,
            |s| Some(DVector::from_row_slice(&dynamics.transition(s.as_slice()))),
            &[HEADING],
            None,
        ) {
            let mut ue = GaussianDensity {
                mean: t.mean,
                cov: symmetrize(&(t.cov + dynamics.process_cov())),
            };
            ue.wrap(&[HEADING]);
            self.ue = ue;
        }
        let rp = type_index(LandmarkKind::Rp).unwrap_or(0);
        let sigma_y = dynamics.sigma[1];
        for b in self.bernoullis.iter_mut() {
            b.existence *= self.config.survival;
            // Reflection points move with the UE along the wall.
            if let Some(t) = &dy {
                let d = &mut b.types[rp].density;
                d.mean[1] += t.mean[0];
                d.cov[(1, 1)] += t.cov[(0, 0)] + sigma_y * sigma_y;
            }
        }
        for c in self.ppp.components.iter_mut() {
            c.weight *= self.config.survival;
        }
        for b in &self.birth.components {
            match self.ppp.components.iter_mut().find(|c| c.birth_slot == b.birth_slot) {
                Some(c) => c.weight += b.weight,
                None => self.ppp.components.push(b.clone()),
            }
        }
    }

    /// Drops low-weight Bernoullis and intensity components.
    pub fn prune(&mut self) {
        let cfg = self.config;
        self.bernoullis.retain(|b| b.existence >= cfg.prune_bernoulli);
        self.ppp.components.retain(|c| c.weight >= cfg.prune_component);
    }

    /// Landmarks whose existence exceeds the reporting threshold.
    pub fn estimates(&self) -> Vec<LandmarkEstimate> {
        self.bernoullis
            .iter()
            .filter(|b| b.existence > self.config.existence_threshold)
            .map(|b| {
                let kind = b.most_likely_type();
                let m = &b.types[type_index(kind).unwrap_or(0)].density.mean;
                LandmarkEstimate {
                    id: b.id,
                    kind,
                    existence: b.existence,
                    position: Vector3::new(m[0], m[1], m[2]),
                }
            })
            .collect()
    }

    pub fn prune_and_extract(&mut self) -> Vec<LandmarkEstimate> {
        self.prune();
        self.estimates()
    }
}
