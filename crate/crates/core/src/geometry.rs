//! Frames, rotations and the geometric map from UE/landmark states to channel parameters.

use std::f64::consts::PI;

use nalgebra::{Matrix3, SMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Speed of light [m/s].
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// Wraps an angle to (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

/// Azimuth/elevation pair in radians. Elevation is measured from the local z axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Angles {
    pub az: f64,
    pub el: f64,
}

impl Angles {
    pub fn new(az: f64, el: f64) -> Self {
        Self { az, el }
    }

    /// Unit direction in the local frame.
    pub fn direction(&self) -> Vector3<f64> {
        Vector3::new(
            self.az.cos() * self.el.sin(),
            self.az.sin() * self.el.sin(),
            self.el.cos(),
        )
    }

    /// Angles of a local-frame vector; `None` for the zero vector.
    pub fn of_vector(v: &Vector3<f64>) -> Option<Self> {
        let d = v.norm();
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let az = wrap_angle(v.y.atan2(v.x));
        let el = (v.z / d).clamp(-1.0, 1.0).acos();
        Some(Self { az, el })
    }
}

/// Kinematic UE state: position, heading and longitudinal speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UeState {
    pub position: Vector3<f64>,
    pub heading: f64,
    pub speed: f64,
}

impl UeState {
    /// Builds a state, wrapping the heading. Negative or non-finite speed is rejected.
    pub fn new(position: Vector3<f64>, heading: f64, speed: f64) -> Result<Self> {
        if !position.iter().all(|v| v.is_finite()) || !heading.is_finite() || !speed.is_finite() {
            return Err(Error::InvalidArgument("non-finite UE state".into()));
        }
        if speed < 0.0 {
            return Err(Error::InvalidArgument(format!("negative speed {speed}")));
        }
        Ok(Self {
            position,
            heading: wrap_angle(heading),
            speed,
        })
    }

    /// Velocity vector in the global frame.
    pub fn velocity(&self) -> Vector3<f64> {
        velocity_vector(self.heading, self.speed)
    }

    /// Local-to-global rotation of the UE array.
    pub fn rotation(&self) -> Matrix3<f64> {
        heading_rotation(self.heading)
    }

    /// State as `[x, y, z, α, v]`.
    pub fn to_array(&self) -> [f64; 5] {
        [
            self.position.x,
            self.position.y,
            self.position.z,
            self.heading,
            self.speed,
        ]
    }
}

pub(crate) fn velocity_vector(heading: f64, speed: f64) -> Vector3<f64> {
    Vector3::new(speed * heading.cos(), speed * heading.sin(), 0.0)
}

fn heading_rotation(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Rotation about z by the heading: columns o1 = [cos α, sin α, 0], o2 = [−sin α, cos α, 0], o3 = e_z.
pub fn rotation_from_heading(heading: f64) -> Result<Matrix3<f64>> {
    if !heading.is_finite() {
        return Err(Error::InvalidArgument("non-finite heading".into()));
    }
    Ok(heading_rotation(heading))
}

/// Position plus orthonormal local-to-global rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub rotation: Matrix3<f64>,
}

impl Pose {
    pub fn new(position: Vector3<f64>, rotation: Matrix3<f64>) -> Result<Self> {
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if !(ortho <= 1e-12) || !((rotation.determinant() - 1.0).abs() <= 1e-12) {
            return Err(Error::InvalidArgument(
                "pose rotation must be a proper orthonormal matrix".into(),
            ));
        }
        Ok(Self { position, rotation })
    }

    /// Default RIS frame: panel in the global yz-plane, outward normal +x.
    pub fn default_ris(position: Vector3<f64>) -> Self {
        let rotation = Matrix3::from_columns(&[Vector3::y(), Vector3::z(), Vector3::x()]);
        Self { position, rotation }
    }

    /// Outward normal (third column of the rotation).
    pub fn normal(&self) -> Vector3<f64> {
        self.rotation.column(2).into_owned()
    }

    pub fn to_local(&self, global: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (global - self.position)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LandmarkKind {
    Ris,
    Rp,
    Sp,
}

impl LandmarkKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LandmarkKind::Ris => "RIS",
            LandmarkKind::Rp => "RP",
            LandmarkKind::Sp => "SP",
        }
    }
}

/// Typed map object. For RP/SP the position is the incident point of the path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landmark {
    pub kind: LandmarkKind,
    pub position: Vector3<f64>,
    pub pose: Option<Pose>,
}

impl Landmark {
    pub fn ris(pose: Pose) -> Self {
        Self {
            kind: LandmarkKind::Ris,
            position: pose.position,
            pose: Some(pose),
        }
    }

    pub fn rp(position: Vector3<f64>) -> Self {
        Self {
            kind: LandmarkKind::Rp,
            position,
            pose: None,
        }
    }

    pub fn sp(position: Vector3<f64>) -> Self {
        Self {
            kind: LandmarkKind::Sp,
            position,
            pose: None,
        }
    }
}

/// Channel-parameter geometry of one path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathGeometry {
    /// AoD at the RIS, path 0 only.
    pub aod_ris: Option<Angles>,
    /// AoA at the UE in the UE frame.
    pub aoa_ue: Angles,
    /// Round-trip delay [s].
    pub toa: f64,
    /// Radial velocity of the UE towards the landmark [m/s].
    pub radial_velocity: f64,
    /// UE-landmark distance [m].
    pub range: f64,
}

/// Geometry of one path from raw state components.
pub(crate) fn path_geometry_raw(
    ue_pos: &Vector3<f64>,
    heading: f64,
    speed: f64,
    lm_pos: &Vector3<f64>,
    ris_pose: Option<&Pose>,
) -> Result<PathGeometry> {
    let x_ru = lm_pos - ue_pos;
    let range = x_ru.norm();
    if !(range > 0.0) {
        return Err(Error::DegenerateGeometry(
            "UE and landmark positions coincide".into(),
        ));
    }
    let o_ue = heading_rotation(heading);
    let aoa_ue = Angles::of_vector(&(o_ue.transpose() * x_ru))
        .ok_or_else(|| Error::DegenerateGeometry("zero UE-landmark vector".into()))?;
    let aod_ris = match ris_pose {
        Some(p) => Some(
            Angles::of_vector(&(p.rotation.transpose() * (ue_pos - p.position)))
                .ok_or_else(|| Error::DegenerateGeometry("UE at RIS position".into()))?,
        ),
        None => None,
    };
    let radial_velocity = velocity_vector(heading, speed).dot(&x_ru) / range;
    Ok(PathGeometry {
        aod_ris,
        aoa_ue,
        toa: 2.0 * range / SPEED_OF_LIGHT,
        radial_velocity,
        range,
    })
}

/// Path parameters for the UE and a landmark.
pub fn path_geometry(ue: &UeState, lm: &Landmark) -> Result<PathGeometry> {
    let pose = match lm.kind {
        LandmarkKind::Ris => Some(lm.pose.as_ref().ok_or_else(|| {
            Error::InvalidArgument("RIS landmark without a pose".into())
        })?),
        _ => None,
    };
    path_geometry_raw(&ue.position, ue.heading, ue.speed, &lm.position, pose)
}

/// Jacobian of the RIS-path parameters w.r.t. the UE state.
///
/// Rows: `[φ_az, φ_el, τ, v, θ_az, θ_el]`; columns: `[x, y, z, α, v]`. Delay is in seconds.
pub fn ue_jacobian(ue: &UeState, ris: &Landmark) -> Result<SMatrix<f64, 6, 5>> {
    let pose = ris
        .pose
        .as_ref()
        .filter(|_| ris.kind == LandmarkKind::Ris)
        .ok_or_else(|| Error::InvalidArgument("jacobian requires a RIS landmark".into()))?;
    ue_jacobian_raw(&ue.position, ue.heading, ue.speed, pose)
}

pub(crate) fn ue_jacobian_raw(
    ue_pos: &Vector3<f64>,
    heading: f64,
    speed: f64,
    pose: &Pose,
) -> Result<SMatrix<f64, 6, 5>> {
    let x_ur = ue_pos - pose.position;
    let d = x_ur.norm();
    if !(d > 0.0) {
        return Err(Error::DegenerateGeometry("UE at RIS position".into()));
    }
    let x_ru = -x_ur;
    let r1 = pose.rotation.column(0).into_owned();
    let r2 = pose.rotation.column(1).into_owned();
    let r3 = pose.rotation.column(2).into_owned();
    let xl = pose.rotation.transpose() * x_ur;
    let rho_r2 = xl.x * xl.x + xl.y * xl.y;

    let o_ue = heading_rotation(heading);
    let u1 = o_ue.column(0).into_owned();
    let u2 = o_ue.column(1).into_owned();
    let u3 = o_ue.column(2).into_owned();
    let xu = o_ue.transpose() * x_ru;
    let rho_u2 = xu.x * xu.x + xu.y * xu.y;
    if !(rho_r2 > 0.0) || !(rho_u2 > 0.0) {
        return Err(Error::DegenerateGeometry(
            "azimuth undefined on the array axis".into(),
        ));
    }
    let rho_r = rho_r2.sqrt();
    let rho_u = rho_u2.sqrt();

    let vel = velocity_vector(heading, speed);
    let v0 = vel.dot(&x_ru) / d;
    let e = x_ru / d;

    let d_phi_az = (r2 * xl.x - r1 * xl.y) / rho_r2;
    let d_phi_el = (x_ur * (xl.z / (d * d)) - r3) / rho_r;
    let d_tau = x_ur * (2.0 / (SPEED_OF_LIGHT * d));
    let d_v = e * (v0 / d) - vel / d;
    let d_th_az = (u1 * xu.y - u2 * xu.x) / rho_u2;
    let d_th_el = (u3 - x_ru * (xu.z / (d * d))) / rho_u;

    let dv_dalpha = Vector3::new(-speed * heading.sin(), speed * heading.cos(), 0.0).dot(&e);
    let dv_dspeed = Vector3::new(heading.cos(), heading.sin(), 0.0).dot(&e);

    let mut t = SMatrix::<f64, 6, 5>::zeros();
    for k in 0..3 {
        t[(0, k)] = d_phi_az[k];
        t[(1, k)] = d_phi_el[k];
        t[(2, k)] = d_tau[k];
        t[(3, k)] = d_v[k];
        t[(4, k)] = d_th_az[k];
        t[(5, k)] = d_th_el[k];
    }
    t[(3, 3)] = dv_dalpha;
    t[(3, 4)] = dv_dspeed;
    t[(4, 3)] = -1.0;
    Ok(t)
}
