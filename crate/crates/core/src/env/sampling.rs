//! Episode samplers: initial state, wrench perturbations, pose noise and
//! domain-randomization parameters.

use nalgebra::{DVector, Matrix3, Quaternion, UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collision::{min_signed_distance, query_all, World};
use crate::kinematics::KinematicModel;

#[derive(Debug, Error)]
pub enum SampleError {
    #[error("no collision-free initial state after {0} tries")]
    Exhausted(usize),
    #[error("invalid sampler config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            position: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
        }
    }
}

fn check_range(name: &str, r: [f64; 2]) -> Result<(), SampleError> {
    if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
        return Err(SampleError::Config(format!("{name}: range {r:?} is not ordered")));
    }
    Ok(())
}

fn check_prob(name: &str, p: f64) -> Result<(), SampleError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(SampleError::Config(format!("{name}: probability {p} outside [0, 1]")));
    }
    Ok(())
}

/// Uniformly distributed unit vector.
pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Uniformly distributed rotation (normalized 4-D Gaussian).
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> UnitQuaternion<f64> {
    loop {
        let q = Quaternion::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        if q.norm() > 1e-12 {
            return UnitQuaternion::from_quaternion(q);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialStateConfig {
    pub object_low: [f64; 3],
    pub object_high: [f64; 3],
    pub p_upright: f64,
    /// Half-width of the joint perturbation as a fraction of each joint's range.
    pub joint_fraction: f64,
    pub qd_range: f64,
    pub max_tries: usize,
    /// Bounding radius of the object used in the rejection test.
    pub object_radius: f64,
}

impl Default for InitialStateConfig {
    fn default() -> Self {
        Self {
            object_low: [-0.18125, -0.29, 0.05],
            object_high: [0.18125, 0.29, 0.051],
            p_upright: 0.5,
            joint_fraction: 0.1,
            qd_range: 0.1,
            max_tries: 1000,
            object_radius: 0.05,
        }
    }
}

impl InitialStateConfig {
    pub fn validate(&self) -> Result<(), SampleError> {
        for i in 0..3 {
            check_range("object box", [self.object_low[i], self.object_high[i]])?;
        }
        check_prob("p_upright", self.p_upright)?;
        if !(self.joint_fraction >= 0.0 && self.qd_range >= 0.0 && self.object_radius >= 0.0) {
            return Err(SampleError::Config("negative magnitude".into()));
        }
        if self.max_tries == 0 {
            return Err(SampleError::Config("max_tries must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialState {
    pub object: Pose,
    pub upright: bool,
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
    pub tries: usize,
}

/// Draws object pose and robot state, rejecting samples where a robot sphere
/// penetrates the world or the object's bounding sphere.
///
/// Object coordinates are in the world frame; `object_offset` shifts the
/// sampling box (e.g. to the table center).
pub fn sample_initial_state<R: Rng + ?Sized>(
    rng: &mut R,
    model: &KinematicModel,
    world: &World,
    default_q: &DVector<f64>,
    object_offset: &Vector3<f64>,
    cfg: &InitialStateConfig,
) -> Result<InitialState, SampleError> {
    cfg.validate()?;
    if default_q.len() != model.dof() {
        return Err(SampleError::Config(format!(
            "default posture has {} entries, model has {}",
            default_q.len(),
            model.dof()
        )));
    }
    let lo = model.lower_limits();
    let hi = model.upper_limits();
    for tries in 1..=cfg.max_tries {
        let mut p = Vector3::zeros();
        for i in 0..3 {
            p[i] = if cfg.object_high[i] > cfg.object_low[i] {
                rng.random_range(cfg.object_low[i]..cfg.object_high[i])
            } else {
                cfg.object_low[i]
            };
        }
        let position = p + object_offset;
        let upright = rng.random::<f64>() < cfg.p_upright;
        let orientation = if upright {
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
        } else {
            random_rotation(rng)
        };

        let q = DVector::from_fn(model.dof(), |j, _| {
            let half = cfg.joint_fraction * (hi[j] - lo[j]);
            let v = default_q[j] + if half > 0.0 { rng.random_range(-half..=half) } else { 0.0 };
            v.clamp(lo[j], hi[j])
        });
        let qd = DVector::from_fn(model.dof(), |_, _| {
            if cfg.qd_range > 0.0 {
                rng.random_range(-cfg.qd_range..=cfg.qd_range)
            } else {
                0.0
            }
        });

        let queries = query_all(model, &q, world);
        let clear_world = queries.is_empty() || min_signed_distance(&queries) >= 0.0;
        let clear_object = queries.iter().all(|sq| {
            let r = model.spheres()[sq.sphere].radius;
            (sq.center - position).norm() - r - cfg.object_radius >= 0.0
        });
        if clear_world && clear_object {
            return Ok(InitialState {
                object: Pose { position, orientation },
                upright,
                q,
                qd,
                tries,
            });
        }
    }
    Err(SampleError::Exhausted(cfg.max_tries))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WrenchConfig {
    pub f_scale: f64,
    pub tau_scale: f64,
    pub p: f64,
}

impl Default for WrenchConfig {
    fn default() -> Self {
        Self {
            f_scale: 50.0,
            tau_scale: 100.0,
            p: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wrench {
    pub force: Vector3<f64>,
    pub torque: Vector3<f64>,
}

/// Returns a perturbation wrench with probability `cfg.p`.
pub fn sample_wrench<R: Rng + ?Sized>(
    rng: &mut R,
    mass: f64,
    inertia: &Matrix3<f64>,
    cfg: &WrenchConfig,
) -> Option<Wrench> {
    // Both unit vectors are drawn every call so the stream does not depend on
    // whether the perturbation fires.
    let u_f = random_unit_vector(rng);
    let u_tau = random_unit_vector(rng);
    let fire = rng.random::<f64>() < cfg.p;
    fire.then(|| Wrench {
        force: cfg.f_scale * mass * u_f,
        torque: cfg.tau_scale * inertia * u_tau,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoseNoiseConfig {
    pub sigma_xyz_corr: f64,
    pub sigma_xyz_uncorr: f64,
    pub sigma_rpy_corr: f64,
    pub sigma_rpy_uncorr: f64,
}

impl Default for PoseNoiseConfig {
    fn default() -> Self {
        Self {
            sigma_xyz_corr: 0.02,
            sigma_xyz_uncorr: 0.02,
            sigma_rpy_corr: 0.1,
            sigma_rpy_uncorr: 0.1,
        }
    }
}

/// Noise drawn once per episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseNoiseDraw {
    pub dxyz: Vector3<f64>,
    pub drot: UnitQuaternion<f64>,
}

impl PoseNoiseDraw {
    pub fn zero() -> Self {
        Self {
            dxyz: Vector3::zeros(),
            drot: UnitQuaternion::identity(),
        }
    }
}

fn gaussian3<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> Vector3<f64> {
    Vector3::new(
        sigma * rng.sample::<f64, _>(StandardNormal),
        sigma * rng.sample::<f64, _>(StandardNormal),
        sigma * rng.sample::<f64, _>(StandardNormal),
    )
}

fn draw(rng: &mut (impl Rng + ?Sized), sxyz: f64, srpy: f64) -> PoseNoiseDraw {
    let dxyz = gaussian3(rng, sxyz);
    let rpy = gaussian3(rng, srpy);
    PoseNoiseDraw {
        dxyz,
        drot: UnitQuaternion::from_euler_angles(rpy.x, rpy.y, rpy.z),
    }
}

/// Draws the per-episode correlated component; call on reset.
pub fn sample_correlated_pose_noise<R: Rng + ?Sized>(rng: &mut R, cfg: &PoseNoiseConfig) -> PoseNoiseDraw {
    draw(rng, cfg.sigma_xyz_corr, cfg.sigma_rpy_corr)
}

/// Adds the episode draw plus a fresh per-step draw to `pose`.
pub fn apply_pose_noise<R: Rng + ?Sized>(
    pose: &Pose,
    correlated: &PoseNoiseDraw,
    rng: &mut R,
    cfg: &PoseNoiseConfig,
) -> Pose {
    let step = draw(rng, cfg.sigma_xyz_uncorr, cfg.sigma_rpy_uncorr);
    let rot = correlated.drot * step.drot * pose.orientation;
    Pose {
        position: pose.position + correlated.dxyz + step.dxyz,
        orientation: UnitQuaternion::new_normalize(rot.into_inner()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrDistribution {
    Uniform,
    Loguniform,
    /// `range = [mean, std]`.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrOperation {
    Scaling,
    Additive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrParam {
    pub group: String,
    pub parameter: String,
    pub distribution: DrDistribution,
    pub operation: DrOperation,
    pub range: [f64; 2],
}

impl DrParam {
    fn new(group: &str, parameter: &str, distribution: DrDistribution, operation: DrOperation, range: [f64; 2]) -> Self {
        Self {
            group: group.into(),
            parameter: parameter.into(),
            distribution,
            operation,
            range,
        }
    }

    pub fn validate(&self) -> Result<(), SampleError> {
        let name = format!("{}/{}", self.group, self.parameter);
        match self.distribution {
            DrDistribution::Uniform => check_range(&name, self.range),
            DrDistribution::Loguniform => {
                check_range(&name, self.range)?;
                if self.range[0] <= 0.0 {
                    return Err(SampleError::Config(format!("{name}: loguniform needs a positive range")));
                }
                Ok(())
            }
            DrDistribution::Gaussian => {
                if !(self.range[0].is_finite() && self.range[1].is_finite() && self.range[1] >= 0.0) {
                    return Err(SampleError::Config(format!("{name}: gaussian std must be non-negative")));
                }
                Ok(())
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let [a, b] = self.range;
        match self.distribution {
            DrDistribution::Uniform => {
                if b > a {
                    rng.random_range(a..=b)
                } else {
                    a
                }
            }
            DrDistribution::Loguniform => {
                let (la, lb) = (a.ln(), b.ln());
                let v = if lb > la { rng.random_range(la..=lb) } else { la };
                v.exp().clamp(a, b)
            }
            DrDistribution::Gaussian => Normal::new(a, b).map(|n| n.sample(rng)).unwrap_or(a),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrSpec {
    pub params: Vec<DrParam>,
}

impl Default for DrSpec {
    fn default() -> Self {
        use DrDistribution::*;
        use DrOperation::*;
        Self {
            params: vec![
                DrParam::new("robot", "mass", Uniform, Scaling, [0.3, 3.0]),
                DrParam::new("robot", "friction", Uniform, Scaling, [0.5, 1.1]),
                DrParam::new("robot", "restitution", Uniform, Additive, [0.0, 0.4]),
                DrParam::new("robot", "joint_stiffness", Loguniform, Scaling, [0.5, 2.0]),
                DrParam::new("robot", "joint_damping", Loguniform, Scaling, [0.3, 3.0]),
                DrParam::new("object", "mass", Uniform, Scaling, [0.3, 3.0]),
                DrParam::new("object", "friction", Uniform, Scaling, [0.5, 1.1]),
                DrParam::new("object", "restitution", Uniform, Additive, [0.0, 0.4]),
                DrParam::new("table", "friction", Uniform, Scaling, [0.5, 1.1]),
                DrParam::new("table", "restitution", Uniform, Additive, [0.0, 0.4]),
                DrParam::new("observation", "uncorrelated_noise", Gaussian, Additive, [0.0, 0.005]),
                DrParam::new("observation", "correlated_noise", Gaussian, Additive, [0.0, 0.01]),
                DrParam::new("action", "uncorrelated_noise", Gaussian, Additive, [0.0, 0.05]),
                DrParam::new("action", "correlated_noise", Gaussian, Additive, [0.0, 0.02]),
                DrParam::new("environment", "gravity", Gaussian, Additive, [0.0, 0.5]),
            ],
        }
    }
}

impl DrSpec {
    pub fn validate(&self) -> Result<(), SampleError> {
        self.params.iter().try_for_each(DrParam::validate)
    }

    pub fn group(&self, name: &str) -> DrSpec {
        DrSpec {
            params: self.params.iter().filter(|p| p.group == name).cloned().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrSample {
    pub group: String,
    pub parameter: String,
    pub operation: DrOperation,
    pub value: f64,
}

/// One value per spec row, in spec order.
pub fn sample_domain_randomization<R: Rng + ?Sized>(rng: &mut R, spec: &DrSpec) -> Result<Vec<DrSample>, SampleError> {
    spec.validate()?;
    Ok(spec
        .params
        .iter()
        .map(|p| DrSample {
            group: p.group.clone(),
            parameter: p.parameter.clone(),
            operation: p.operation,
            value: p.sample(rng),
        })
        .collect())
}
