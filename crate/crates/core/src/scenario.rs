//! Scene construction, trajectory and measurement synthesis, and the closed-loop
//! Monte Carlo driver.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;

use crate::channel::{path_gain, Arrays, ChannelPath, GainModel, WaveformConfig};
use crate::config::Config;
use crate::crlb::{fim_channel, measurement_covariances, state_bounds};
use crate::geometry::{path_geometry, ue_jacobian, wrap_angle, Landmark, LandmarkKind, Pose, UeState};
use crate::linalg::psd_sqrt;
use crate::metrics::gospa;
use crate::profile::{beampattern_grid, design_plan, uncertainty_box, ProfileStrategy, RisProfilePlan};
use crate::rng::{stream_rng, SimRng, Stream};
use crate::slam::model::{kept_indices, measurement_dim, HEADING, SPEED, UE_DIM};
use crate::slam::{
    GaussianDensity, LandmarkEstimate, Measurement, MeasurementKind, MpmbFilter, PppIntensity, UeEstimate,
};
use crate::{Error, Result};

/// Static landmarks of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub ris: Pose,
    pub sps: Vec<Vector3<f64>>,
    pub wall_x: f64,
}

impl Scene {
    /// Scatterer heights are drawn uniformly from the configured range.
    pub fn generate<R: Rng + ?Sized>(cfg: &Config, rng: &mut R) -> Self {
        let [lo, hi] = cfg.landmarks.sp_z_range;
        let sps = cfg
            .landmarks
            .sp_positions
            .iter()
            .map(|[x, y]| Vector3::new(*x, *y, if hi > lo { rng.random_range(lo..hi) } else { lo }))
            .collect();
        Self {
            ris: cfg.ris_pose(),
            sps,
            wall_x: cfg.environment.wall_x,
        }
    }

    /// Reflection point of the wall seen from `ue`.
    pub fn reflection_point(&self, ue: &Vector3<f64>) -> Vector3<f64> {
        Vector3::new(self.wall_x, ue.y, 0.0)
    }
}

/// Truth trajectory `s_1..s_K` under the constant-turn model with process noise.
///
/// Speed is kept non-negative by reflecting negative draws.
pub fn generate_trajectory<R: Rng + ?Sized>(cfg: &Config, rng: &mut R) -> Result<Vec<UeState>> {
    let d = &cfg.dynamics;
    let mut s = [
        cfg.ue.initial_position[0],
        cfg.ue.initial_position[1],
        cfg.ue.initial_position[2],
        cfg.ue.initial_heading,
        cfg.ue.initial_speed,
    ];
    let mut out = Vec::with_capacity(cfg.steps);
    for k in 0..cfg.steps {
        if k > 0 {
            let m = d.transition(&s);
            for i in 0..UE_DIM {
                let n: f64 = rng.sample(StandardNormal);
                s[i] = m[i] + d.sigma[i] * n;
            }
            s[SPEED] = s[SPEED].abs();
        }
        out.push(UeState::new(Vector3::new(s[0], s[1], s[2]), s[HEADING], s[SPEED])?);
    }
    Ok(out)
}

/// Where a synthesized measurement came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Ris,
    Rp,
    Sp(usize),
    Clutter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub measurements: Vec<Measurement>,
    pub origins: Vec<Origin>,
}

/// Everything derived from a config that measurement synthesis needs.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub cfg: Config,
    pub arrays: Arrays,
    pub waveform: WaveformConfig,
    pub gains: GainModel,
}

impl Simulator {
    pub fn new(cfg: Config) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            arrays: cfg.arrays()?,
            waveform: cfg.waveform()?,
            gains: cfg.gain_model(),
            cfg,
        })
    }

    /// Visible propagation paths at `truth`, RIS first. Scatterers are visible
    /// within the field-of-view distance; the RIS and the wall always are.
    pub fn paths<R: Rng + ?Sized>(&self, scene: &Scene, truth: &UeState, rng: &mut R) -> Result<Vec<(Origin, ChannelPath)>> {
        let mut lms = vec![(Origin::Ris, Landmark::ris(scene.ris))];
        lms.push((Origin::Rp, Landmark::rp(scene.reflection_point(&truth.position))));
        for (i, sp) in scene.sps.iter().enumerate() {
            if (sp - truth.position).norm() <= self.cfg.sensing.r_fov {
                lms.push((Origin::Sp(i), Landmark::sp(*sp)));
            }
        }
        let mut out = Vec::with_capacity(lms.len());
        for (origin, lm) in lms {
            let g = path_geometry(truth, &lm)?;
            let nu = rng.random_range(0.0..2.0 * PI);
            let gain = path_gain(lm.kind, &g, &self.gains, nu)?;
            out.push((origin, ChannelPath::from_geometry(lm.kind, &g, gain)));
        }
        Ok(out)
    }

    /// Measurements drawn from the bound-based covariances of the realized plan,
    /// with missed detections and clutter.
    pub fn measurements<R: Rng + ?Sized>(
        &self,
        scene: &Scene,
        truth: &UeState,
        plan: &RisProfilePlan,
        rng: &mut R,
    ) -> Result<MeasurementSet> {
        let doppler = self.cfg.doppler_enabled;
        let mut paths = self.paths(scene, truth, rng)?;
        // Paths whose gains carry no information (e.g. behind the panel) are undetectable.
        let fim = loop {
            if paths.is_empty() {
                return Ok(MeasurementSet { measurements: vec![], origins: vec![] });
            }
            let cp: Vec<ChannelPath> = paths.iter().map(|p| p.1).collect();
            match fim_channel(&cp, &self.arrays, plan, &self.waveform) {
                Ok(f) => break f,
                Err(Error::RankDeficient(msg)) => {
                    let idx = msg
                        .split_whitespace()
                        .find_map(|w| w.parse::<usize>().ok())
                        .filter(|i| *i < paths.len())
                        .unwrap_or(paths.len() - 1);
                    paths.remove(idx);
                }
                Err(e) => return Err(e),
            }
        };
        let covs = measurement_covariances(&fim);
        let mut set = MeasurementSet { measurements: vec![], origins: vec![] };
        let mut clutter_cov = None;
        for ((origin, path), cov) in paths.iter().zip(covs) {
            let kind = if *origin == Origin::Ris { MeasurementKind::Ris } else { MeasurementKind::NonRis };
            let mut params = Vec::with_capacity(6);
            if let Some(a) = path.aod {
                params.extend([a.az, a.el]);
            }
            params.extend([path.toa, path.radial_velocity, path.aoa.az, path.aoa.el]);
            let params = DVector::from_vec(params);
            // Noise is drawn for every path so that streams stay aligned.
            let noise: Vec<f64> = (0..measurement_dim(kind, true)).map(|_| rng.sample(StandardNormal)).collect();
            let detect: f64 = rng.random();
            let Some(cov) = cov else { continue };
            let full = Measurement::from_channel(kind, &params, &cov, true)?;
            let l = psd_sqrt(&full.cov);
            let mut value = &full.value + l * DVector::from_vec(noise);
            let az: &[usize] = if kind == MeasurementKind::Ris { &[0, 4] } else { &[2] };
            for &a in az {
                value[a] = wrap_angle(value[a]);
            }
            let p_miss = match kind {
                MeasurementKind::Ris => self.cfg.sensing.ris_miss_probability,
                MeasurementKind::NonRis => 1.0 - self.cfg.sensing.p_d,
            };
            if kind == MeasurementKind::NonRis && clutter_cov.is_none() {
                clutter_cov = Some(full.cov.clone());
            }
            if detect < p_miss {
                continue;
            }
            let keep = kept_indices(kind, doppler);
            let v = DVector::from_fn(keep.len(), |i, _| value[keep[i]]);
            let c = DMatrix::from_fn(keep.len(), keep.len(), |i, j| full.cov[(keep[i], keep[j])]);
            set.measurements.push(Measurement::new(kind, v, c, doppler)?);
            set.origins.push(*origin);
        }
        let clutter_cov = clutter_cov.unwrap_or_else(|| DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 1e-4, 1e-4])));
        let n = self.clutter_count(rng)?;
        for _ in 0..n {
            let z = self.clutter_vector(rng);
            let keep = kept_indices(MeasurementKind::NonRis, doppler);
            let v = DVector::from_fn(keep.len(), |i, _| z[keep[i]]);
            let c = DMatrix::from_fn(keep.len(), keep.len(), |i, j| clutter_cov[(keep[i], keep[j])]);
            set.measurements.push(Measurement::new(MeasurementKind::NonRis, v, c, doppler)?);
            set.origins.push(Origin::Clutter);
        }
        Ok(set)
    }

    fn clutter_count<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        let mu = self.cfg.sensing.clutter_mean;
        if mu == 0.0 {
            return Ok(0);
        }
        let p = Poisson::new(mu).map_err(|e| Error::InvalidArgument(format!("clutter mean: {e}")))?;
        Ok(p.sample(rng) as usize)
    }

    /// Uniform clutter in filter units: `[c·τ, v, θ_az, θ_el]` over the
    /// environment's round-trip range, `±v_max`, and the upper hemisphere.
    fn clutter_vector<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 4] {
        let e = &self.cfg.environment;
        let diag = (Vector3::from(e.max) - Vector3::from(e.min)).norm();
        let vmax = self.cfg.sensing.clutter_v_max;
        [
            rng.random_range(0.0..=2.0 * diag),
            if vmax > 0.0 { rng.random_range(-vmax..=vmax) } else { 0.0 },
            wrap_angle(rng.random_range(-PI..PI)),
            rng.random_range(0.0..=PI / 2.0),
        ]
    }
}

/// Errors of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepErrors {
    pub pos: f64,
    pub head: f64,
    pub speed: f64,
    pub gospa_rp: f64,
    pub gospa_sp: f64,
}

/// Filter output at step `k`; `k = 0` is the initial prior.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    pub truth: UeState,
    pub estimate: UeEstimate,
    pub errors: StepErrors,
    pub landmarks: Vec<LandmarkEstimate>,
    /// Most likely association (Bernoulli id, measurement index among non-RIS measurements).
    pub association: Vec<(u64, Option<usize>)>,
    pub n_measurements: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub strategy: ProfileStrategy,
    pub run: u64,
    pub steps: Vec<StepRecord>,
    pub diverged: bool,
}

/// Per-run inputs shared by all strategies: scene, trajectory and initial prior.
#[derive(Debug, Clone)]
pub struct RunSetup {
    pub scene: Scene,
    pub truth: Vec<UeState>,
    pub prior: GaussianDensity,
}

impl RunSetup {
    pub fn new(cfg: &Config, run: u64) -> Result<Self> {
        let mut rng = stream_rng(cfg.seed, run, Stream::Truth);
        let scene = Scene::generate(cfg, &mut rng);
        let truth = generate_trajectory(cfg, &mut rng)?;
        let cov = cfg.ue_prior_cov();
        let l = psd_sqrt(&cov);
        let n = DVector::from_fn(UE_DIM, |_, _| rng.sample::<f64, _>(StandardNormal));
        let t0 = truth[0].to_array();
        let mut mean = DVector::from_column_slice(&t0) + l * n;
        mean[HEADING] = wrap_angle(mean[HEADING]);
        Ok(Self {
            scene,
            truth,
            prior: GaussianDensity::new(mean, cov)?,
        })
    }
}

/// Undetected-landmark intensity at the start and the per-step birth intensity.
pub fn initial_intensities(cfg: &Config) -> Result<(PppIntensity, PppIntensity)> {
    let e = &cfg.environment;
    let f = &cfg.filter;
    let (min, max) = (Vector3::from(e.min), Vector3::from(e.max));
    let mut ppp = PppIntensity::default();
    for kind in [LandmarkKind::Rp, LandmarkKind::Sp] {
        if f.initial_ppp_mass > 0.0 {
            ppp.extend(PppIntensity::uniform_box(kind, min, max, f.initial_ppp_mass, f.initial_ppp_grid)?);
        }
    }
    let mut birth = PppIntensity::default();
    if f.birth_rp_mass > 0.0 {
        let lo = Vector3::new(e.wall_x, e.min[1], 0.0);
        let hi = Vector3::new(e.wall_x, e.max[1], 0.0);
        birth.extend(PppIntensity::uniform_box(LandmarkKind::Rp, lo, hi, f.birth_rp_mass, [1, f.birth_components, 1])?);
    }
    if f.birth_sp_mass > 0.0 {
        birth.extend(PppIntensity::uniform_box(LandmarkKind::Sp, min, max, f.birth_sp_mass, f.initial_ppp_grid)?);
    }
    Ok((ppp, birth))
}

fn step_errors(cfg: &Config, scene: &Scene, truth: &UeState, est: &UeEstimate, lms: &[LandmarkEstimate]) -> Result<StepErrors> {
    let pick = |kind| lms.iter().filter(|l| l.kind == kind).map(|l| l.position).collect::<Vec<_>>();
    let rp_truth = [scene.reflection_point(&truth.position)];
    Ok(StepErrors {
        pos: (est.position - truth.position).norm(),
        head: wrap_angle(est.heading - truth.heading).abs(),
        speed: (est.speed - truth.speed).abs(),
        gospa_rp: gospa(&rp_truth, &pick(LandmarkKind::Rp), &cfg.metrics)?.distance,
        gospa_sp: gospa(&scene.sps, &pick(LandmarkKind::Sp), &cfg.metrics)?.distance,
    })
}

/// Closed loop for one run and strategy: design, measure, update, evaluate, predict.
pub fn run_closed_loop(sim: &Simulator, setup: &RunSetup, strategy: ProfileStrategy, run: u64) -> Result<RunRecord> {
    let cfg = &sim.cfg;
    let mut plan_rng = stream_rng(cfg.seed, run, Stream::Plan);
    let mut meas_rng = stream_rng(cfg.seed, run, Stream::Measurement);
    let (ppp, birth) = initial_intensities(cfg)?;
    let mut filter = MpmbFilter::new(cfg.filter_config(), setup.scene.ris, setup.prior.clone(), ppp, birth)?;
    let lambda = cfg.wavelength();
    let settings = cfg.design_settings();
    let mut steps = Vec::with_capacity(cfg.steps + 1);
    let est = filter.ue_estimate();
    steps.push(StepRecord {
        k: 0,
        truth: setup.truth[0],
        estimate: est,
        errors: step_errors(cfg, &setup.scene, &setup.truth[0], &est, &[])?,
        landmarks: vec![],
        association: vec![],
        n_measurements: 0,
    });
    let mut diverged = false;
    for (i, truth) in setup.truth.iter().enumerate() {
        let k = i + 1;
        let prior = filter.ue().marginal(0, 3);
        let mean = Vector3::new(prior.mean[0], prior.mean[1], prior.mean[2]);
        let designed = design_plan(
            strategy,
            &sim.arrays,
            &setup.scene.ris,
            &mean,
            &prior.cov,
            sim.waveform.n_transmissions,
            lambda,
            &settings,
            &mut plan_rng,
        );
        let set = match designed {
            Ok(d) => sim.measurements(&setup.scene, truth, &d.plan, &mut meas_rng)?,
            Err(Error::DegenerateGeometry(_)) => {
                diverged = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let log = filter.update(&set.measurements)?;
        let landmarks = filter.prune_and_extract();
        if filter.diverged() {
            diverged = true;
            break;
        }
        let est = filter.ue_estimate();
        steps.push(StepRecord {
            k,
            truth: *truth,
            estimate: est,
            errors: step_errors(cfg, &setup.scene, truth, &est, &landmarks)?,
            landmarks,
            association: log.association,
            n_measurements: set.measurements.len(),
        });
        if k < cfg.steps {
            filter.predict();
        }
    }
    Ok(RunRecord { strategy, run, steps, diverged })
}

/// One row of `metrics.csv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub strategy: ProfileStrategy,
    pub k: usize,
    pub mae_pos: f64,
    pub mae_head: f64,
    pub mae_speed: f64,
    pub gospa_rp: f64,
    pub gospa_sp: f64,
}

#[derive(Debug, Clone)]
pub struct MonteCarlo {
    /// `runs[r][s]` is run `r` under strategy `s` of the config.
    pub runs: Vec<Vec<RunRecord>>,
    pub summary: Vec<MetricsRow>,
}

impl MonteCarlo {
    pub fn diverged(&self) -> Vec<(ProfileStrategy, u64)> {
        self.runs
            .iter()
            .flatten()
            .filter(|r| r.diverged)
            .map(|r| (r.strategy, r.run))
            .collect()
    }
}

/// Runs all strategies over `cfg.runs` runs on a pool of `jobs` threads.
///
/// Results do not depend on `jobs`: each run owns its random streams and the
/// reduction is in run order. Diverged runs contribute the steps they completed.
pub fn run_monte_carlo(cfg: &Config, jobs: Option<usize>) -> Result<MonteCarlo> {
    let sim = Simulator::new(cfg.clone())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let runs: Vec<Vec<RunRecord>> = pool.install(|| {
        (0..cfg.runs as u64)
            .into_par_iter()
            .map(|run| {
                let setup = RunSetup::new(cfg, run)?;
                cfg.strategies
                    .iter()
                    .map(|s| run_closed_loop(&sim, &setup, *s, run))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let summary = summarize(cfg, &runs);
    Ok(MonteCarlo { runs, summary })
}

fn summarize(cfg: &Config, runs: &[Vec<RunRecord>]) -> Vec<MetricsRow> {
    let mut rows = Vec::new();
    for (s, strategy) in cfg.strategies.iter().enumerate() {
        for k in 0..=cfg.steps {
            let errs: Vec<&StepErrors> = runs.iter().filter_map(|r| r[s].steps.get(k)).map(|st| &st.errors).collect();
            let mean = |f: fn(&StepErrors) -> f64| {
                if errs.is_empty() {
                    f64::NAN
                } else {
                    errs.iter().map(|e| f(e)).sum::<f64>() / errs.len() as f64
                }
            };
            rows.push(MetricsRow {
                strategy: *strategy,
                k,
                mae_pos: mean(|e| e.pos),
                mae_head: mean(|e| e.head),
                mae_speed: mean(|e| e.speed),
                gospa_rp: mean(|e| e.gospa_rp),
                gospa_sp: mean(|e| e.gospa_sp),
            });
        }
    }
    rows
}

/// Mean PEB, HEB and SEB at the initial state over `cfg.runs` prior and plan draws.
pub fn initial_bounds(cfg: &Config, strategy: ProfileStrategy) -> Result<(f64, f64, f64)> {
    let sim = Simulator::new(cfg.clone())?;
    let cov = cfg.ue_prior_cov().view((0, 0), (3, 3)).into_owned();
    let l = psd_sqrt(&cov);
    let pose = cfg.ris_pose();
    let ris = Landmark::ris(pose);
    let truth = UeState::new(Vector3::from(cfg.ue.initial_position), cfg.ue.initial_heading, cfg.ue.initial_speed)?;
    let geom = path_geometry(&truth, &ris)?;
    let jac = ue_jacobian(&truth, &ris)?;
    let mut sums = [0.0; 3];
    for run in 0..cfg.runs as u64 {
        let mut trng = stream_rng(cfg.seed, run, Stream::Truth);
        let n = DVector::from_fn(3, |_, _| trng.sample::<f64, _>(StandardNormal));
        let d = &l * n;
        let mean = truth.position + Vector3::new(d[0], d[1], d[2]);
        let mut prng = stream_rng(cfg.seed, run, Stream::Plan);
        let plan = design_plan(
            strategy,
            &sim.arrays,
            &pose,
            &mean,
            &cov,
            sim.waveform.n_transmissions,
            cfg.wavelength(),
            &cfg.design_settings(),
            &mut prng,
        )?
        .plan;
        let gain = path_gain(LandmarkKind::Ris, &geom, &sim.gains, 0.0)?;
        let path = ChannelPath::from_geometry(LandmarkKind::Ris, &geom, gain);
        let b = match fim_channel(&[path], &sim.arrays, &plan, &sim.waveform) {
            Ok(f) => state_bounds(f.per_path(), &jac)?,
            Err(Error::RankDeficient(_)) => {
                sums = [f64::INFINITY; 3];
                continue;
            }
            Err(e) => return Err(e),
        };
        sums[0] += b.peb;
        sums[1] += b.heb;
        sums[2] += b.seb;
    }
    let n = cfg.runs as f64;
    Ok((sums[0] / n, sums[1] / n, sums[2] / n))
}

/// Beampattern of the first-step plan over the uniform strategy's uncertainty box,
/// computed from the nominal initial prior.
pub fn initial_beampattern(cfg: &Config, strategy: ProfileStrategy, n_az: usize, n_el: usize) -> Result<Vec<(f64, f64, f64)>> {
    let sim = Simulator::new(cfg.clone())?;
    let cov = cfg.ue_prior_cov().view((0, 0), (3, 3)).into_owned();
    let mean = Vector3::from(cfg.ue.initial_position);
    let pose = cfg.ris_pose();
    let settings = cfg.design_settings();
    let mut box_rng = stream_rng(cfg.seed, 0, Stream::Truth);
    let bx = uncertainty_box(&mean, &cov, &pose, &settings.boxes, &mut box_rng)?;
    let mut rng: SimRng = stream_rng(cfg.seed, 0, Stream::Plan);
    let plan = design_plan(
        strategy,
        &sim.arrays,
        &pose,
        &mean,
        &cov,
        sim.waveform.n_transmissions,
        cfg.wavelength(),
        &settings,
        &mut rng,
    )?
    .plan;
    beampattern_grid(plan.spatial_profiles(), &sim.arrays.ris, cfg.wavelength(), &bx, n_az, n_el)
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub const METRICS_HEADER: [&str; 7] = ["strategy", "k", "mae_pos_m", "mae_head_rad", "mae_speed_mps", "gospa_rp_m", "gospa_sp_m"];
pub const BOUNDS_HEADER: [&str; 4] = ["sweep_value", "peb_m", "heb_rad", "seb_mps"];
pub const BEAMPATTERN_HEADER: [&str; 3] = ["az_rad", "el_rad", "gain_db"];
pub const RUNLOG_HEADER: [&str; 15] = [
    "strategy", "k", "ue_x", "ue_y", "ue_z", "ue_heading", "ue_speed", "true_x", "true_y", "true_z", "true_heading",
    "true_speed", "n_measurements", "landmarks", "association",
];

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let bytes = csv_bytes(
        &METRICS_HEADER,
        rows.iter().map(|r| {
            vec![
                r.strategy.as_str().to_string(),
                r.k.to_string(),
                r.mae_pos.to_string(),
                r.mae_head.to_string(),
                r.mae_speed.to_string(),
                r.gospa_rp.to_string(),
                r.gospa_sp.to_string(),
            ]
        }),
    )?;
    write_atomic(path, &bytes)
}

pub fn write_bounds_csv(path: &Path, rows: &[(f64, f64, f64, f64)]) -> Result<()> {
    let bytes = csv_bytes(
        &BOUNDS_HEADER,
        rows.iter().map(|r| vec![r.0.to_string(), r.1.to_string(), r.2.to_string(), r.3.to_string()]),
    )?;
    write_atomic(path, &bytes)
}

pub fn write_beampattern_csv(path: &Path, rows: &[(f64, f64, f64)]) -> Result<()> {
    let bytes = csv_bytes(
        &BEAMPATTERN_HEADER,
        rows.iter().map(|r| vec![r.0.to_string(), r.1.to_string(), r.2.to_string()]),
    )?;
    write_atomic(path, &bytes)
}

/// Per-step log of one run across strategies. Landmarks are `id:type:r:x:y:z`
/// and associations `id>j` (`id>-` for a miss), both `;`-separated.
pub fn write_runlog_csv(path: &Path, records: &[RunRecord]) -> Result<()> {
    let rows = records.iter().flat_map(|r| {
        r.steps.iter().map(move |s| {
            let lms = s
                .landmarks
                .iter()
                .map(|l| {
                    format!(
                        "{}:{}:{}:{}:{}:{}",
                        l.id,
                        l.kind.as_str(),
                        l.existence,
                        l.position.x,
                        l.position.y,
                        l.position.z
                    )
                })
                .collect::<Vec<_>>()
                .join(";");
            let assoc = s
                .association
                .iter()
                .map(|(id, j)| match j {
                    Some(j) => format!("{id}>{j}"),
                    None => format!("{id}>-"),
                })
                .collect::<Vec<_>>()
                .join(";");
            vec![
                r.strategy.as_str().to_string(),
                s.k.to_string(),
                s.estimate.position.x.to_string(),
                s.estimate.position.y.to_string(),
                s.estimate.position.z.to_string(),
                s.estimate.heading.to_string(),
                s.estimate.speed.to_string(),
                s.truth.position.x.to_string(),
                s.truth.position.y.to_string(),
                s.truth.position.z.to_string(),
                s.truth.heading.to_string(),
                s.truth.speed.to_string(),
                s.n_measurements.to_string(),
                lms,
                assoc,
            ]
        })
    });
    let bytes = csv_bytes(&RUNLOG_HEADER, rows)?;
    write_atomic(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::preset;
    use crate::profile::random_plan;
    use approx::assert_relative_eq;

    fn desk() -> Config {
        preset("desk").unwrap()
    }

    #[test]
    fn straight_track_without_noise() {
        let mut cfg = desk();
        cfg.dynamics.turn_rate = 0.0;
        cfg.dynamics.sigma = [0.0; 5];
        cfg.ue.initial_speed = 8.0;
        cfg.ue.initial_heading = 0.3;
        let tr = generate_trajectory(&cfg, &mut stream_rng(1, 0, Stream::Truth)).unwrap();
        assert_eq!(tr.len(), cfg.steps);
        for w in tr.windows(2) {
            assert_relative_eq!((w[1].position - w[0].position).norm(), 4.0, epsilon = 1e-12);
            assert_relative_eq!(w[1].heading, 0.3, epsilon = 1e-15);
        }
    }

    #[test]
    fn heading_increments_by_turn() {
        let mut cfg = desk();
        cfg.dynamics.turn_rate = 0.05;
        cfg.dynamics.sigma = [0.0; 5];
        let tr = generate_trajectory(&cfg, &mut stream_rng(1, 0, Stream::Truth)).unwrap();
        for w in tr.windows(2) {
            assert_relative_eq!(wrap_angle(w[1].heading - w[0].heading), 0.025, epsilon = 1e-12);
            // |Δx| = v Δ sinc(ρΔ/2) = v Δ (1 - O(ρΔ)²)
            let step = (w[1].position - w[0].position).norm();
            assert!((step - 2.5).abs() <= 2.5 * (0.025f64).powi(2));
        }
    }

    fn noiseless_set(cfg: Config, run: u64) -> (Simulator, RunSetup, MeasurementSet) {
        let sim = Simulator::new(cfg).unwrap();
        let setup = RunSetup::new(&sim.cfg, run).unwrap();
        let mut rng = stream_rng(3, run, Stream::Plan);
        let plan = random_plan(sim.arrays.ris.len(), sim.arrays.ue.len(), sim.waveform.n_transmissions / 2, &mut rng).unwrap();
        let set = sim
            .measurements(&setup.scene, &setup.truth[0], &plan, &mut stream_rng(3, run, Stream::Measurement))
            .unwrap();
        (sim, setup, set)
    }

    #[test]
    fn certain_detection_without_clutter() {
        let mut cfg = desk();
        cfg.sensing.p_d = 1.0;
        cfg.sensing.clutter_mean = 0.0;
        for run in 0..5 {
            let (sim, setup, set) = noiseless_set(cfg.clone(), run);
            let t = &setup.truth[0];
            let visible = setup.scene.sps.iter().filter(|s| (*s - t.position).norm() <= sim.cfg.sensing.r_fov).count() + 1;
            assert_eq!(set.measurements.len(), visible + 1);
            assert_eq!(set.origins[0], Origin::Ris);
            assert!(set.origins.iter().all(|o| *o != Origin::Clutter));
        }
    }

    #[test]
    fn far_scatterers_never_measured() {
        let mut cfg = desk();
        cfg.landmarks.sp_positions = vec![[60.0, 5.0], [40.0, 60.0]];
        cfg.sensing.p_d = 1.0;
        for run in 0..5 {
            let (_, setup, set) = noiseless_set(cfg.clone(), run);
            assert!((setup.scene.sps[1] - setup.truth[0].position).norm() > 50.0);
            assert!(!set.origins.contains(&Origin::Sp(1)));
            assert!(set.origins.contains(&Origin::Sp(0)));
        }
    }

    #[test]
    fn clutter_count_mean() {
        let sim = Simulator::new(desk()).unwrap();
        let mut rng = stream_rng(9, 0, Stream::Measurement);
        let n = 10_000;
        let total: usize = (0..n).map(|_| sim.clutter_count(&mut rng).unwrap()).sum();
        let mean = total as f64 / n as f64;
        assert!((mean - 1.0).abs() <= 0.03, "mean {mean}");
    }

    #[test]
    fn doppler_off_drops_velocity() {
        let mut cfg = desk();
        cfg.doppler_enabled = false;
        let (_, _, set) = noiseless_set(cfg, 0);
        assert_eq!(set.measurements[0].value.len(), 5);
        assert!(set.measurements[1..].iter().all(|m| m.value.len() == 3));
    }

    #[test]
    fn reflection_point_follows_ue() {
        let cfg = desk();
        let setup = RunSetup::new(&cfg, 0).unwrap();
        for t in &setup.truth {
            assert_eq!(setup.scene.reflection_point(&t.position), Vector3::new(100.0, t.position.y, 0.0));
        }
    }

    #[test]
    fn closed_loop_is_deterministic() {
        let mut cfg = desk();
        cfg.steps = 3;
        cfg.runs = 2;
        let a = run_monte_carlo(&cfg, Some(1)).unwrap();
        let b = run_monte_carlo(&cfg, Some(2)).unwrap();
        assert_eq!(a.runs, b.runs);
        assert_eq!(a.summary, b.summary);
        assert_eq!(a.summary.len(), 3 * 4);
        let k0 = a.summary[0];
        assert_relative_eq!(k0.gospa_rp, 20.0 / 2f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(k0.gospa_sp, 20.0 * 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn single_run_summary_equals_record() {
        let mut cfg = desk();
        cfg.steps = 2;
        cfg.runs = 1;
        cfg.strategies = vec![ProfileStrategy::Uniform];
        let mc = run_monte_carlo(&cfg, Some(1)).unwrap();
        for (row, step) in mc.summary.iter().zip(&mc.runs[0][0].steps) {
            assert_eq!(row.mae_pos, step.errors.pos);
            assert_eq!(row.gospa_sp, step.errors.gospa_sp);
        }
    }

    #[test]
    fn atomic_csv_output() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/bounds.csv");
        write_bounds_csv(&p, &[(1.0, 2.0, 3.0, 4.0)]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text, "sweep_value,peb_m,heb_rad,seb_mps\n1,2,3,4\n");
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
