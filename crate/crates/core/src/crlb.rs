//! Fisher information of the channel parameters, nuisance elimination, per-path
//! measurement covariances and UE-state error bounds.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::channel::{
    check_paths, delay_phasors, doppler_phasors, ris_combined_response, steering_vector,
    wavenumber_derivatives, Arrays, ChannelPath, WaveformConfig,
};
use crate::geometry::{LandmarkKind, SPEED_OF_LIGHT};
use crate::linalg::{guarded_inverse, select, symmetrize, Singular, MAX_CONDITION};
use crate::profile::RisProfilePlan;
use crate::{Error, Result, C64};

/// Channel parameter a derivative is taken with respect to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    AodAz,
    AodEl,
    Delay,
    Velocity,
    AoaAz,
    AoaEl,
    GainRe,
    GainIm,
}

/// ∂ȳ_{t,s}/∂p = time[t] · freq[s] for parameter `kind` of path `path`.
#[derive(Debug, Clone)]
pub struct ParamDerivative {
    pub path: usize,
    pub kind: ParamKind,
    pub time: DVector<C64>,
    pub freq: DVector<C64>,
}

impl ParamDerivative {
    /// Dense T × N_SC derivative.
    pub fn dense(&self) -> DMatrix<C64> {
        &self.time * self.freq.transpose()
    }
}

fn per_path_kinds(kind: LandmarkKind) -> &'static [ParamKind] {
    use ParamKind::*;
    if kind == LandmarkKind::Ris {
        &[AodAz, AodEl, Delay, Velocity, AoaAz, AoaEl]
    } else {
        &[Delay, Velocity, AoaAz, AoaEl]
    }
}

/// Analytic derivatives of the noiseless signal, ordered per path as
/// `[φ_az, φ_el (RIS only), τ, v, θ_az, θ_el, β_re, β_im]`.
pub fn signal_derivatives(
    paths: &[ChannelPath],
    arrays: &Arrays,
    plan: &RisProfilePlan,
    wf: &WaveformConfig,
) -> Result<Vec<ParamDerivative>> {
    check_paths(paths, arrays, plan, wf)?;
    let lam = wf.wavelength();
    let t_count = wf.n_transmissions;
    let sqrt_es = wf.pilot_energy.sqrt();
    let to = wf.block_duration();
    let mut out = Vec::new();
    for (l, p) in paths.iter().enumerate() {
        let a = steering_vector(&arrays.ue, p.aoa, lam)?;
        let (dg_az, dg_el) = wavenumber_derivatives(p.aoa, lam);
        let j = Complex64::new(0.0, 1.0);
        let da_az = a.component_mul(&arrays.ue.phases(&dg_az).map(|v| j * v));
        let da_el = a.component_mul(&arrays.ue.phases(&dg_el).map(|v| j * v));
        let ris = match p.aod {
            Some(aod) => {
                let b = ris_combined_response(&arrays.ris, aod, lam)?;
                let (g_az, g_el) = wavenumber_derivatives(aod, lam);
                let db_az = b.component_mul(&arrays.ris.phases(&g_az).map(|v| 2.0 * j * v));
                let db_el = b.component_mul(&arrays.ris.phases(&g_el).map(|v| 2.0 * j * v));
                Some((b, db_az, db_el))
            }
            None => None,
        };
        let mut c = DVector::<C64>::zeros(t_count);
        let mut dc_th_az = c.clone();
        let mut dc_th_el = c.clone();
        let mut dc_ph_az = c.clone();
        let mut dc_ph_el = c.clone();
        for t in 0..t_count {
            let bf = plan.beamformer(t);
            let wa = bf.combiner.dotc(&a);
            let af = (a.transpose() * &bf.precoder)[(0, 0)];
            let wda_az = bf.combiner.dotc(&da_az);
            let wda_el = bf.combiner.dotc(&da_el);
            let daf_az = (da_az.transpose() * &bf.precoder)[(0, 0)];
            let daf_el = (da_el.transpose() * &bf.precoder)[(0, 0)];
            let (gamma, dg_az, dg_el) = match &ris {
                Some((b, db_az, db_el)) => {
                    let w = plan.ris_profile(t);
                    (
                        (w.transpose() * b)[(0, 0)],
                        (w.transpose() * db_az)[(0, 0)],
                        (w.transpose() * db_el)[(0, 0)],
                    )
                }
                None => (Complex64::new(1.0, 0.0), Complex64::default(), Complex64::default()),
            };
            c[t] = gamma * wa * af;
            dc_th_az[t] = gamma * (wda_az * af + wa * daf_az);
            dc_th_el[t] = gamma * (wda_el * af + wa * daf_el);
            dc_ph_az[t] = dg_az * wa * af;
            dc_ph_el[t] = dg_el * wa * af;
        }
        let dop = doppler_phasors(p, wf);
        let del = delay_phasors(p, wf);
        let unit_gain = dop.map(|v| v * sqrt_es);
        let with_gain = unit_gain.map(|v| v * p.gain);
        let ddel = DVector::from_fn(wf.n_subcarriers, |s, _| {
            del[s] * Complex64::new(0.0, -2.0 * PI * s as f64 * wf.subcarrier_spacing_hz)
        });
        let dv_factor = 2.0 * wf.carrier_hz / SPEED_OF_LIGHT;
        let dvel = DVector::from_fn(t_count, |t, _| {
            Complex64::new(0.0, 2.0 * PI * to * (t as f64 + 1.0) * dv_factor)
        });
        for kind in per_path_kinds(p.kind) {
            let (time, freq) = match kind {
                ParamKind::AodAz => (with_gain.component_mul(&dc_ph_az), del.clone()),
                ParamKind::AodEl => (with_gain.component_mul(&dc_ph_el), del.clone()),
                ParamKind::Delay => (with_gain.component_mul(&c), ddel.clone()),
                ParamKind::Velocity => (with_gain.component_mul(&c).component_mul(&dvel), del.clone()),
                ParamKind::AoaAz => (with_gain.component_mul(&dc_th_az), del.clone()),
                ParamKind::AoaEl => (with_gain.component_mul(&dc_th_el), del.clone()),
                _ => unreachable!(),
            };
            out.push(ParamDerivative { path: l, kind: *kind, time, freq });
        }
        let base = unit_gain.component_mul(&c);
        out.push(ParamDerivative {
            path: l,
            kind: ParamKind::GainRe,
            time: base.clone(),
            freq: del.clone(),
        });
        out.push(ParamDerivative {
            path: l,
            kind: ParamKind::GainIm,
            time: base.map(|v| v * Complex64::new(0.0, 1.0)),
            freq: del,
        });
    }
    Ok(out)
}

/// Channel-parameter EFIM after eliminating the complex gains.
#[derive(Debug, Clone)]
pub struct ChannelFim {
    per_path: DMatrix<f64>,
    kinds: Vec<LandmarkKind>,
}

impl ChannelFim {
    /// Builds from a per-path-ordered matrix.
    pub fn from_per_path(per_path: DMatrix<f64>, kinds: Vec<LandmarkKind>) -> Result<Self> {
        let dim: usize = kinds.iter().map(|k| per_path_kinds(*k).len()).sum();
        if per_path.nrows() != dim || per_path.ncols() != dim {
            return Err(Error::InvalidArgument("FIM dimension does not match the paths".into()));
        }
        Ok(Self { per_path, kinds })
    }

    pub fn n_paths(&self) -> usize {
        self.kinds.len()
    }

    pub fn kinds(&self) -> &[LandmarkKind] {
        &self.kinds
    }

    /// Matrix in per-path order η = [η_0, …, η_L].
    pub fn per_path(&self) -> &DMatrix<f64> {
        &self.per_path
    }

    /// Offsets of each path's block in per-path order.
    pub fn offsets(&self) -> Vec<std::ops::Range<usize>> {
        let mut start = 0;
        self.kinds
            .iter()
            .map(|k| {
                let n = per_path_kinds(*k).len();
                let r = start..start + n;
                start += n;
                r
            })
            .collect()
    }

    /// Permutation from grouped order η̃ = [φ, τ, v, θ] to per-path indices.
    pub fn grouped_order(&self) -> Vec<usize> {
        let offs = self.offsets();
        let mut phi = Vec::new();
        let mut tau = Vec::new();
        let mut vel = Vec::new();
        let mut theta = Vec::new();
        for (k, r) in self.kinds.iter().zip(offs) {
            let s = r.start;
            if *k == LandmarkKind::Ris {
                phi.extend([s, s + 1]);
                tau.push(s + 2);
                vel.push(s + 3);
                theta.extend([s + 4, s + 5]);
            } else {
                tau.push(s);
                vel.push(s + 1);
                theta.extend([s + 2, s + 3]);
            }
        }
        phi.into_iter().chain(tau).chain(vel).chain(theta).collect()
    }

    /// Matrix in grouped order η̃ = [φ, τ, v, θ].
    pub fn matrix(&self) -> DMatrix<f64> {
        let ord = self.grouped_order();
        select(&self.per_path, &ord, &ord)
    }

    /// Sub-FIM of a subset of paths (other paths treated as absent).
    pub fn restrict(&self, paths: &[usize]) -> ChannelFim {
        let offs = self.offsets();
        let idx: Vec<usize> = paths.iter().flat_map(|p| offs[*p].clone()).collect();
        ChannelFim {
            per_path: select(&self.per_path, &idx, &idx),
            kinds: paths.iter().map(|p| self.kinds[*p]).collect(),
        }
    }
}

fn gram(ds: &[ParamDerivative], noise_var: f64) -> DMatrix<f64> {
    let n = ds.len();
    let mut j = DMatrix::zeros(n, n);
    for p in 0..n {
        for q in p..n {
            let tt = ds[p].time.dotc(&ds[q].time);
            let ff = ds[p].freq.dotc(&ds[q].freq);
            let v = 2.0 / noise_var * (tt * ff).re;
            j[(p, q)] = v;
            j[(q, p)] = v;
        }
    }
    j
}

/// Full FIM over all parameters including the gains, in the order of [`signal_derivatives`].
pub fn fim_full(
    paths: &[ChannelPath],
    arrays: &Arrays,
    plan: &RisProfilePlan,
    wf: &WaveformConfig,
) -> Result<(DMatrix<f64>, Vec<ParamDerivative>)> {
    let ds = signal_derivatives(paths, arrays, plan, wf)?;
    let j = gram(&ds, wf.noise_variance());
    Ok((j, ds))
}

/// Schur complement A − B D⁻¹ Bᵀ onto `keep`, eliminating all other indices.
pub fn efim_schur(full: &DMatrix<f64>, keep: &[usize]) -> Result<DMatrix<f64>> {
    let n = full.nrows();
    if full.ncols() != n || keep.iter().any(|k| *k >= n) {
        return Err(Error::InvalidArgument("invalid Schur complement indices".into()));
    }
    let nuis: Vec<usize> = (0..n).filter(|i| !keep.contains(i)).collect();
    let a = select(full, keep, keep);
    if nuis.is_empty() {
        return Ok(a);
    }
    let b = select(full, keep, &nuis);
    let d = select(full, &nuis, &nuis);
    let d_inv = guarded_inverse(&d).map_err(|e| {
        Error::RankDeficient(format!("nuisance block not invertible: {e:?}"))
    })?;
    Ok(symmetrize(&(a - &b * d_inv * b.transpose())))
}

/// Channel EFIM J(η̃) for the given paths; path 0 must be the RIS path if present.
pub fn fim_channel(
    paths: &[ChannelPath],
    arrays: &Arrays,
    plan: &RisProfilePlan,
    wf: &WaveformConfig,
) -> Result<ChannelFim> {
    if paths.iter().skip(1).any(|p| p.kind == LandmarkKind::Ris) {
        return Err(Error::InvalidArgument("the RIS path must come first".into()));
    }
    let (j, ds) = fim_full(paths, arrays, plan, wf)?;
    let keep: Vec<usize> = (0..ds.len())
        .filter(|i| !matches!(ds[*i].kind, ParamKind::GainRe | ParamKind::GainIm))
        .collect();
    let gains: Vec<usize> = (0..ds.len()).filter(|i| !keep.contains(i)).collect();
    let d = select(&j, &gains, &gains);
    if let Err(e) = guarded_inverse(&d) {
        let path = match e {
            Singular::Diagonal(i) => ds[gains[i]].path,
            Singular::Condition(_) => weakest_gain_path(&d, &gains, &ds),
        };
        return Err(Error::RankDeficient(format!(
            "gain block of path {path} is singular"
        )));
    }
    let efim = efim_schur(&j, &keep)?;
    ChannelFim::from_per_path(efim, paths.iter().map(|p| p.kind).collect())
}

fn weakest_gain_path(d: &DMatrix<f64>, gains: &[usize], ds: &[ParamDerivative]) -> usize {
    let mut worst = (f64::INFINITY, 0);
    for k in (0..gains.len()).step_by(2) {
        let v = d[(k, k)] + d[(k + 1, k + 1)];
        if v < worst.0 {
            worst = (v, ds[gains[k]].path);
        }
    }
    worst.1
}

/// Smallest eigenvalue of the Jacobi-scaled block; 0 for a non-positive diagonal.
fn scaled_min_eig(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut s = m.clone();
    for i in 0..n {
        if !(m[(i, i)] > 0.0) {
            return 0.0;
        }
    }
    for i in 0..n {
        for j in 0..n {
            s[(i, j)] = m[(i, j)] / (m[(i, i)] * m[(j, j)]).sqrt();
        }
    }
    SymmetricEigen::new(s).eigenvalues.min()
}

/// Per-path measurement covariances R^j = J(η_j)⁻¹ (inverse of each path's EFIM).
///
/// Paths whose information cannot be inverted are reported as `None` and removed
/// before the remaining covariances are computed.
pub fn measurement_covariances(fim: &ChannelFim) -> Vec<Option<DMatrix<f64>>> {
    let offs = fim.offsets();
    let mut active: Vec<usize> = (0..fim.n_paths()).collect();
    loop {
        if active.is_empty() {
            return vec![None; fim.n_paths()];
        }
        let idx: Vec<usize> = active.iter().flat_map(|p| offs[*p].clone()).collect();
        let sub = select(fim.per_path(), &idx, &idx);
        match guarded_inverse(&sub) {
            Ok(inv) => {
                let mut out = vec![None; fim.n_paths()];
                let mut start = 0;
                for p in &active {
                    let n = offs[*p].len();
                    let r: Vec<usize> = (start..start + n).collect();
                    out[*p] = Some(select(&inv, &r, &r));
                    start += n;
                }
                return out;
            }
            Err(_) => {
                // drop paths with singular own blocks, else the least informative one
                let own: Vec<(usize, f64)> = active
                    .iter()
                    .map(|p| {
                        let r: Vec<usize> = offs[*p].clone().collect();
                        (*p, scaled_min_eig(&select(fim.per_path(), &r, &r)))
                    })
                    .collect();
                let bad: Vec<usize> = own
                    .iter()
                    .filter(|(_, e)| !(*e > 1.0 / MAX_CONDITION))
                    .map(|(p, _)| *p)
                    .collect();
                if !bad.is_empty() {
                    active.retain(|p| !bad.contains(p));
                } else {
                    let weakest = own
                        .iter()
                        .min_by(|a, b| {
                            let ta: f64 = offs[a.0].clone().map(|i| fim.per_path()[(i, i)]).sum();
                            let tb: f64 = offs[b.0].clone().map(|i| fim.per_path()[(i, i)]).sum();
                            ta.total_cmp(&tb)
                        })
                        .map(|(p, _)| *p)
                        .unwrap_or(active[0]);
                    active.retain(|p| *p != weakest);
                }
            }
        }
    }
}

/// UE-state information and error bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct StateBounds {
    pub fim_state: SMatrix<f64, 5, 5>,
    pub peb: f64,
    pub heb: f64,
    pub seb: f64,
    /// Unobservable state direction when J(s) is rank deficient.
    pub null_direction: Option<DVector<f64>>,
}

/// J(s) = Tᵀ J(η_0) T and the derived PEB, HEB and SEB.
pub fn state_bounds(fim_ris_path: &DMatrix<f64>, jac: &SMatrix<f64, 6, 5>) -> Result<StateBounds> {
    if fim_ris_path.nrows() != 6 || fim_ris_path.ncols() != 6 {
        return Err(Error::InvalidArgument("RIS-path FIM must be 6x6".into()));
    }
    let j0 = SMatrix::<f64, 6, 6>::from_fn(|r, c| fim_ris_path[(r, c)]);
    let js = jac.transpose() * j0 * jac;
    let js = (js + js.transpose()) * 0.5;
    let dyn_js = DMatrix::from_fn(5, 5, |r, c| js[(r, c)]);
    match guarded_inverse(&dyn_js) {
        Ok(inv) => Ok(StateBounds {
            fim_state: js,
            peb: (inv[(0, 0)] + inv[(1, 1)] + inv[(2, 2)]).max(0.0).sqrt(),
            heb: inv[(3, 3)].max(0.0).sqrt(),
            seb: inv[(4, 4)].max(0.0).sqrt(),
            null_direction: None,
        }),
        Err(_) => Ok(rank_deficient_bounds(js)),
    }
}

fn rank_deficient_bounds(js: SMatrix<f64, 5, 5>) -> StateBounds {
    let scale: Vec<f64> = (0..5)
        .map(|i| if js[(i, i)] > 0.0 { 1.0 / js[(i, i)].sqrt() } else { 1.0 })
        .collect();
    let s = DMatrix::from_fn(5, 5, |r, c| js[(r, c)] * scale[r] * scale[c]);
    let eig = SymmetricEigen::new(s);
    let max = eig.eigenvalues.amax();
    let tol = max / MAX_CONDITION;
    let mut infinite = [false; 5];
    let mut null_direction = None;
    let mut pinv = DMatrix::zeros(5, 5);
    for k in 0..5 {
        let v = eig.eigenvectors.column(k);
        if eig.eigenvalues[k] > tol {
            pinv += v * v.transpose() / eig.eigenvalues[k];
        } else {
            for i in 0..5 {
                if v[i].abs() > 1e-6 {
                    infinite[i] = true;
                }
            }
            if null_direction.is_none() {
                let mut d = DVector::from_fn(5, |i, _| v[i] * scale[i]);
                d /= d.norm();
                null_direction = Some(d);
            }
        }
    }
    let var = |i: usize| {
        if infinite[i] {
            f64::INFINITY
        } else {
            pinv[(i, i)] * scale[i] * scale[i]
        }
    };
    StateBounds {
        fim_state: js,
        peb: (var(0) + var(1) + var(2)).sqrt(),
        heb: var(3).sqrt(),
        seb: var(4).sqrt(),
        null_direction,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{path_gain, ArrayLayout, GainModel};
    use crate::geometry::{path_geometry, ue_jacobian, Landmark, Pose, UeState};
    use crate::profile::random_plan;
    use crate::rng::{stream_rng, Stream};
    use approx::assert_relative_eq;
    use nalgebra::Vector3;

    const LAM: f64 = 0.01;

    fn model() -> GainModel {
        GainModel {
            wavelength: LAM,
            carrier_hz: 30e9,
            ris_q0: 0.285,
            rp_reflection: 0.7,
            sp_rcs: 50.0,
        }
    }

    fn setup(n_ris: usize, t: usize, power_dbm: f64) -> (Arrays, WaveformConfig, RisProfilePlan) {
        let arrays = Arrays {
            ue: ArrayLayout::ue_upa(2, 2, LAM / 2.0).unwrap(),
            ris: ArrayLayout::ris_upa(n_ris, n_ris, LAM / 4.0).unwrap(),
        };
        let wf = WaveformConfig::from_link_budget(30e9, 120e3, 32, 0.07, power_dbm, -174.0, 8.0, t).unwrap();
        let mut rng = stream_rng(4, 0, Stream::Plan);
        let plan = random_plan(arrays.ris.len(), 4, t / 2, &mut rng).unwrap();
        (arrays, wf, plan)
    }

    fn scene_paths(ue: &UeState, with_nris: bool) -> Vec<ChannelPath> {
        let mut lms = vec![Landmark::ris(Pose::default_ris(Vector3::new(40.0, 0.0, 20.0)))];
        if with_nris {
            lms.push(Landmark::rp(Vector3::new(100.0, ue.position.y, 0.0)));
            lms.push(Landmark::sp(Vector3::new(60.0, 5.0, 3.0)));
        }
        lms.iter()
            .enumerate()
            .map(|(i, lm)| {
                let g = path_geometry(ue, lm).unwrap();
                ChannelPath::from_geometry(lm.kind, &g, path_gain(lm.kind, &g, &model(), 0.5 * i as f64).unwrap())
            })
            .collect()
    }

    fn ue() -> UeState {
        UeState::new(Vector3::new(50.0, 4.0, 0.0), 0.8, 5.0).unwrap()
    }

    #[test]
    fn schur_closed_forms() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 2.0]);
        let e = efim_schur(&m, &[0]).unwrap();
        assert_relative_eq!(e[(0, 0)], 4.0 - 0.5);
        let bd = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 3.0, 0.0, 0.0, 0.0, 7.0]);
        let e = efim_schur(&bd, &[0, 1]).unwrap();
        assert_relative_eq!(e, select(&bd, &[0, 1], &[0, 1]));
        let sing = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(efim_schur(&sing, &[0]).is_err());
    }

    #[test]
    fn single_path_dimension_and_energy_scaling() {
        let (arrays, wf, plan) = setup(4, 4, 50.0);
        let paths = scene_paths(&ue(), false);
        let f1 = fim_channel(&paths, &arrays, &plan, &wf).unwrap();
        assert_eq!(f1.matrix().shape(), (6, 6));
        let wf10 = WaveformConfig { pilot_energy: 10.0 * wf.pilot_energy, ..wf };
        let f10 = fim_channel(&paths, &arrays, &plan, &wf10).unwrap();
        let diff = f10.per_path() - f1.per_path() * 10.0;
        for i in 0..6 {
            for j in 0..6 {
                let scale = (f1.per_path()[(i, i)] * f1.per_path()[(j, j)]).sqrt();
                assert!(diff[(i, j)].abs() <= 1e-8 * scale);
            }
        }
    }

    #[test]
    fn grouped_order_layout() {
        let (arrays, wf, plan) = setup(4, 4, 50.0);
        let f = fim_channel(&scene_paths(&ue(), true), &arrays, &plan, &wf).unwrap();
        assert_eq!(f.matrix().shape(), (14, 14));
        assert_eq!(f.grouped_order(), vec![0, 1, 2, 6, 10, 3, 7, 11, 4, 5, 8, 9, 12, 13]);
        let m = f.matrix();
        assert!((m.clone() - m.transpose()).amax() <= 1e-10 * m.amax());
    }

    #[test]
    fn permuting_paths_permutes_covariances() {
        let (arrays, wf, plan) = setup(4, 16, 50.0);
        let p = scene_paths(&ue(), true);
        let a = measurement_covariances(&fim_channel(&p, &arrays, &plan, &wf).unwrap());
        let swapped = vec![p[0], p[2], p[1]];
        let b = measurement_covariances(&fim_channel(&swapped, &arrays, &plan, &wf).unwrap());
        let (r1, r2) = (a[1].as_ref().unwrap(), b[2].as_ref().unwrap());
        assert_relative_eq!(r1, r2, max_relative = 1e-6);
        assert_eq!(a[0].as_ref().unwrap().shape(), (6, 6));
        assert_eq!(a[1].as_ref().unwrap().shape(), (4, 4));
    }

    fn loewner_leq(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
        let d = symmetrize(&(b - a));
        let scale = b.diagonal().map(|v| v.abs().sqrt().max(1e-300));
        let s = DMatrix::from_fn(d.nrows(), d.ncols(), |i, j| d[(i, j)] / (scale[i] * scale[j]));
        SymmetricEigen::new(s).eigenvalues.min() >= -1e-8
    }

    #[test]
    fn repeating_profiles_shrinks_covariances() {
        let (arrays, wf, plan) = setup(4, 16, 50.0);
        let doubled = RisProfilePlan::new(
            plan.spatial_profiles().iter().chain(plan.spatial_profiles()).cloned().collect(),
            plan.beamformers().iter().chain(plan.beamformers()).cloned().collect(),
        )
        .unwrap();
        let wf2 = WaveformConfig { n_transmissions: 32, ..wf };
        let p = scene_paths(&ue(), true);
        let a = measurement_covariances(&fim_channel(&p, &arrays, &plan, &wf).unwrap());
        let b = measurement_covariances(&fim_channel(&p, &arrays, &doubled, &wf2).unwrap());
        for (ra, rb) in a.iter().zip(&b) {
            assert!(loewner_leq(rb.as_ref().unwrap(), ra.as_ref().unwrap()));
        }
    }

    #[test]
    fn larger_ris_sharpens_angles() {
        let p = scene_paths(&ue(), false);
        let mut vars = Vec::new();
        for n in [4, 8] {
            let (arrays, wf, _) = setup(n, 16, 50.0);
            let mut rng = stream_rng(9, 0, Stream::Plan);
            let plan = random_plan(arrays.ris.len(), 4, 8, &mut rng).unwrap();
            let r = measurement_covariances(&fim_channel(&p, &arrays, &plan, &wf).unwrap());
            let r0 = r[0].clone().unwrap();
            vars.push((r0[(0, 0)], r0[(1, 1)]));
        }
        assert!(vars[1].0 < vars[0].0 && vars[1].1 < vars[0].1);
    }

    #[test]
    fn appending_a_transmission_never_hurts() {
        let (arrays, wf, plan) = setup(4, 18, 50.0);
        let p = scene_paths(&ue(), true);
        let short = plan.truncated(8).unwrap();
        let wf4 = WaveformConfig { n_transmissions: 16, ..wf };
        let a = measurement_covariances(&fim_channel(&p, &arrays, &short, &wf4).unwrap());
        let b = measurement_covariances(&fim_channel(&p, &arrays, &plan, &wf).unwrap());
        for (ra, rb) in a.iter().zip(&b) {
            let (ra, rb) = (ra.as_ref().unwrap(), rb.as_ref().unwrap());
            for i in 0..ra.nrows() {
                assert!(rb[(i, i)] <= ra[(i, i)] * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn silent_paths() {
        let (arrays, wf, plan) = setup(4, 16, 50.0);
        let mut p = scene_paths(&ue(), true);
        p[2].gain = Complex64::new(0.0, 0.0);
        let r = measurement_covariances(&fim_channel(&p, &arrays, &plan, &wf).unwrap());
        assert!(r[0].is_some() && r[1].is_some() && r[2].is_none());

        // two-element RIS with a profile orthogonal to the broadside response
        let arrays = Arrays {
            ue: ArrayLayout::single(),
            ris: ArrayLayout::ris_upa(2, 1, LAM / 4.0).unwrap(),
        };
        let one = DVector::from_element(1, Complex64::new(1.0, 0.0));
        let w = DVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)]);
        let plan = RisProfilePlan::new(
            vec![w; 2],
            vec![crate::profile::BeamformerPair { precoder: one.clone(), combiner: one }; 2],
        )
        .unwrap();
        let wf4 = WaveformConfig { n_transmissions: 4, ..wf };
        let mut ris = p[0];
        ris.aod = Some(crate::geometry::Angles::new(0.3, 0.0));
        let err = fim_channel(&[ris, p[1]], &arrays, &plan, &wf4).unwrap_err();
        assert!(err.to_string().contains("path 0"), "{err}");
    }

    #[test]
    fn bounds_translation_invariant_and_psd() {
        let (arrays, wf, plan) = setup(4, 16, 60.0);
        let ris = Landmark::ris(Pose::default_ris(Vector3::new(40.0, 0.0, 20.0)));
        let u = ue();
        let f = fim_channel(&scene_paths(&u, false), &arrays, &plan, &wf).unwrap();
        let b = state_bounds(f.per_path(), &ue_jacobian(&u, &ris).unwrap()).unwrap();
        assert!(b.peb.is_finite() && b.heb.is_finite() && b.seb.is_finite());
        let shift = Vector3::new(13.0, -7.0, 2.0);
        let ris2 = Landmark::ris(Pose::default_ris(ris.position + shift));
        let u2 = UeState::new(u.position + shift, u.heading, u.speed).unwrap();
        let g = path_geometry(&u2, &ris2).unwrap();
        let p2 = vec![ChannelPath::from_geometry(
            LandmarkKind::Ris,
            &g,
            path_gain(LandmarkKind::Ris, &g, &model(), 0.0).unwrap(),
        )];
        let f2 = fim_channel(&p2, &arrays, &plan, &wf).unwrap();
        let b2 = state_bounds(f2.per_path(), &ue_jacobian(&u2, &ris2).unwrap()).unwrap();
        assert_relative_eq!(b.peb, b2.peb, max_relative = 1e-6);
        assert_relative_eq!(b.seb, b2.seb, max_relative = 1e-6);
        let eig = SymmetricEigen::new(DMatrix::from_fn(5, 5, |r, c| b.fim_state[(r, c)])).eigenvalues;
        assert!(eig.min() >= -1e-10 * eig.sum().abs());
    }

    #[test]
    fn zero_speed_column_gives_infinite_seb() {
        let j0 = DMatrix::<f64>::identity(6, 6);
        let mut t = SMatrix::<f64, 6, 5>::zeros();
        for i in 0..4 {
            t[(i, i)] = 1.0;
        }
        t[(4, 3)] = -1.0;
        let b = state_bounds(&j0, &t).unwrap();
        assert!(b.seb.is_infinite());
        assert!(b.peb.is_finite());
        let d = b.null_direction.unwrap();
        assert_relative_eq!(d[4].abs(), 1.0, epsilon = 1e-9);
    }
}
