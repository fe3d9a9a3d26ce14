//! Fabric terms. Each produces a task-space priority metric and a desired
//! acceleration; the engine pulls them back into joint space.

use log::warn;
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::collision::{DistanceQuery, DEFAULT_D_MIN};

/// Threshold below which a direction or metric is treated as zero.
pub const EPS_DEGENERATE: f64 = 1e-9;
/// Smallest limit distance fed to the `k_b / x` joint-limit metric.
pub const EPS_LIMIT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct FabricTermOutput {
    pub metric: DMatrix<f64>,
    pub accel: DVector<f64>,
}

impl FabricTermOutput {
    pub fn zero(k: usize) -> Self {
        Self {
            metric: DMatrix::zeros(k, k),
            accel: DVector::zeros(k),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.metric.iter().chain(self.accel.iter()).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CollisionTermConfig {
    pub k_g: f64,
    pub k_f: f64,
    pub damping: f64,
    pub beta: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub d_min: f64,
    /// Queries with `d̲ ≥ d_cutoff` are ignored.
    pub d_cutoff: f64,
}

impl Default for CollisionTermConfig {
    fn default() -> Self {
        Self {
            k_g: 1.0,
            k_f: 5.0,
            damping: 2.5,
            beta: 1.0,
            alpha1: 20.0,
            alpha2: 0.1,
            d_min: DEFAULT_D_MIN,
            d_cutoff: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttractionConfig {
    pub mass: f64,
    pub gain: f64,
    pub sharpness: f64,
    /// Only used by the forced variant.
    pub damping: f64,
}

impl Default for AttractionConfig {
    fn default() -> Self {
        Self {
            mass: 1.0,
            gain: 40.0,
            sharpness: 10.0,
            damping: 2.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JointLimitConfig {
    pub k_b: f64,
    /// Repulsion acceleration, applied to every joint.
    pub repulsion: f64,
    pub damping: f64,
}

impl Default for JointLimitConfig {
    fn default() -> Self {
        Self {
            k_b: 1.0,
            repulsion: 1.0,
            damping: 10.0,
        }
    }
}

/// Velocity gate: near 1 when approaching the body (`v < α₂`), near 0 when receding fast.
pub fn velocity_gate(impact_speed: f64, alpha1: f64, alpha2: f64) -> f64 {
    0.5 * ((-alpha1 * (impact_speed - alpha2)).tanh() + 1.0)
}

struct CollisionBase {
    direction: Option<Vector3<f64>>,
    metric: Matrix3<f64>,
}

fn collision_base(queries: &[DistanceQuery], xd: &Vector3<f64>, cfg: &CollisionTermConfig) -> Option<CollisionBase> {
    let active: Vec<&DistanceQuery> = queries.iter().filter(|q| q.bounded < cfg.d_cutoff).collect();
    if active.is_empty() {
        return None;
    }
    let mut accel = Vector3::zeros();
    let mut base_metric = Matrix3::zeros();
    // same sum with every gate open, used as the normalizer so that closed
    // gates actually shrink the metric
    let mut open_metric = Matrix3::zeros();
    let mut closest = f64::INFINITY;
    for q in active {
        let d = q.bounded.max(cfg.d_min);
        closest = closest.min(d);
        accel -= q.normal / d;
        let s = velocity_gate(-xd.dot(&q.normal), cfg.alpha1, cfg.alpha2);
        let nn = q.normal * q.normal.transpose() / d;
        base_metric += nn * s;
        open_metric += nn;
    }
    let norm = accel.norm();
    let direction = (norm >= EPS_DEGENERATE).then(|| accel / norm);
    let fro = open_metric.norm();
    let metric = if fro < EPS_DEGENERATE || base_metric.norm() < EPS_DEGENERATE {
        Matrix3::zeros()
    } else {
        base_metric * (cfg.beta / (closest * closest) / fro)
    };
    Some(CollisionBase { direction, metric })
}

fn dyn3(m: Matrix3<f64>) -> DMatrix<f64> {
    DMatrix::from_iterator(3, 3, m.iter().copied())
}

fn dvec3(v: Vector3<f64>) -> DVector<f64> {
    DVector::from_column_slice(v.as_slice())
}

/// Speed-squared collision response `k_g ‖ẋ‖² ẍ̂_b`.
pub fn collision_geometric(queries: &[DistanceQuery], xd: &Vector3<f64>, cfg: &CollisionTermConfig) -> FabricTermOutput {
    match collision_base(queries, xd, cfg) {
        Some(CollisionBase {
            direction: Some(dir),
            metric,
        }) => FabricTermOutput {
            metric: dyn3(metric),
            accel: dvec3(dir * (cfg.k_g * xd.norm_squared())),
        },
        _ => FabricTermOutput::zero(3),
    }
}

/// Damped collision push `k_f ẍ̂_b − b ẋ`.
pub fn collision_forcing(queries: &[DistanceQuery], xd: &Vector3<f64>, cfg: &CollisionTermConfig) -> FabricTermOutput {
    match collision_base(queries, xd, cfg) {
        None => FabricTermOutput::zero(3),
        Some(CollisionBase { direction, metric }) => {
            let push = direction.map_or(Vector3::zeros(), |d| d * cfg.k_f);
            FabricTermOutput {
                metric: dyn3(metric),
                accel: dvec3(push - xd * cfg.damping),
            }
        }
    }
}

/// Joint-limit repulsion in a limit-distance space (`x > 0` inside the limits).
pub fn joint_limit_repulsion(x: &DVector<f64>, xd: &DVector<f64>, cfg: &JointLimitConfig) -> FabricTermOutput {
    let n = x.len();
    let mut metric = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut dist = x[j];
        if dist <= EPS_LIMIT {
            warn!("joint {j} at limit distance {dist:e}; clamping to {EPS_LIMIT:e}");
            dist = EPS_LIMIT;
        }
        let gate = if xd[j] < 0.0 { 1.0 } else { 0.0 };
        metric[(j, j)] = gate * cfg.k_b / dist;
    }
    FabricTermOutput {
        metric,
        accel: DVector::from_element(n, cfg.repulsion) - xd * cfg.damping,
    }
}

fn attraction_direction(x: &DVector<f64>, target: &DVector<f64>, sharpness: f64) -> Option<DVector<f64>> {
    let e = x - target;
    let dist = e.norm();
    (dist >= EPS_DEGENERATE).then(|| e * ((sharpness * dist).tanh() / dist))
}

/// `ẍ = −k_a tanh(α_a‖x − x*‖)(x − x*)/‖x − x*‖ − b ẋ`, metric `m I`.
pub fn attraction_forced(
    x: &DVector<f64>,
    xd: &DVector<f64>,
    target: &DVector<f64>,
    cfg: &AttractionConfig,
) -> FabricTermOutput {
    let k = x.len();
    let mut accel = -xd * cfg.damping;
    if let Some(pull) = attraction_direction(x, target, cfg.sharpness) {
        accel -= pull * cfg.gain;
    }
    FabricTermOutput {
        metric: DMatrix::identity(k, k) * cfg.mass,
        accel,
    }
}

/// Speed-squared attractor `ẍ = −k_a ‖ẋ‖² tanh(α_a‖x − x_g‖)(x − x_g)/‖x − x_g‖`.
pub fn attraction_geometric_hd2(
    x: &DVector<f64>,
    xd: &DVector<f64>,
    goal: &DVector<f64>,
    cfg: &AttractionConfig,
) -> FabricTermOutput {
    let k = x.len();
    let accel = match attraction_direction(x, goal, cfg.sharpness) {
        Some(pull) => pull * (-cfg.gain * xd.norm_squared()),
        None => DVector::zeros(k),
    };
    FabricTermOutput {
        metric: DMatrix::identity(k, k) * cfg.mass,
        accel,
    }
}

/// Configuration-space damping on the identity map.
pub fn cspace_damping(qd: &DVector<f64>, damping: f64) -> FabricTermOutput {
    let n = qd.len();
    FabricTermOutput {
        metric: DMatrix::identity(n, n),
        accel: -qd * damping,
    }
}
