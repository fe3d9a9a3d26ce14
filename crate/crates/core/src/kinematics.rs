//! Revolute kinematic trees: forward kinematics of attached points, analytic
//! Jacobians and the velocity-product (curvature) term `J̇q̇`.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Isometry3, Rotation3, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Step of the directional difference in [`KinematicModel::curvature_term`].
pub const CURVATURE_FD_STEP: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown body point id {0}")]
    UnknownPoint(usize),
    #[error("unknown frame `{0}`")]
    UnknownFrame(String),
    #[error("joint `{joint}`: {reason}")]
    InvalidJoint { joint: String, reason: String },
    #[error("{what}: {reason}")]
    Invalid { what: String, reason: String },
    #[error("expected a joint vector of length {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite entry in joint vector")]
    NonFinite,
    #[error("failed to parse robot model: {0}")]
    Json(#[from] serde_json::Error),
    #[error("failed to read robot model {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Frame a point or sphere is rigidly attached to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrameId {
    World,
    /// Child frame of the joint with this index.
    Joint(usize),
}

/// A point fixed in some frame of the robot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttachedPoint {
    pub frame: FrameId,
    pub offset: Vector3<f64>,
}

impl AttachedPoint {
    pub fn new(frame: FrameId, offset: Vector3<f64>) -> Self {
        Self { frame, offset }
    }
}

#[derive(Debug, Clone)]
pub struct Joint {
    pub name: String,
    pub parent: Option<usize>,
    pub axis: Unit<Vector3<f64>>,
    /// Transform from the parent frame to this joint at zero angle.
    pub origin: Isometry3<f64>,
}

#[derive(Debug, Clone)]
pub struct BodyPoint {
    pub name: String,
    pub point: AttachedPoint,
}

#[derive(Debug, Clone)]
pub struct CollisionSphere {
    pub name: String,
    pub point: AttachedPoint,
    pub radius: f64,
}

/// Joint-limit-annotated revolute tree with attached body points and collision spheres.
///
/// Joints are stored in topological order (every parent precedes its children),
/// so a single forward pass computes all frames.
#[derive(Debug, Clone)]
pub struct KinematicModel {
    joints: Vec<Joint>,
    lower: DVector<f64>,
    upper: DVector<f64>,
    accel: DVector<f64>,
    jerk: DVector<f64>,
    body_points: Vec<BodyPoint>,
    spheres: Vec<CollisionSphere>,
    /// For each joint frame, the joints on the path from the root (inclusive).
    chains: Vec<Vec<usize>>,
    frame_index: HashMap<String, usize>,
}

/// Position and velocity of the joints.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
}

impl JointState {
    pub fn new(q: DVector<f64>, qd: DVector<f64>) -> Self {
        Self { q, qd }
    }

    pub fn at_rest(q: DVector<f64>) -> Self {
        let n = q.len();
        Self { q, qd: DVector::zeros(n) }
    }
}

/// World transforms of every joint frame for one configuration.
#[derive(Debug, Clone)]
pub struct FrameCache {
    pub frames: Vec<Isometry3<f64>>,
    axes: Vec<Vector3<f64>>,
    pivots: Vec<Vector3<f64>>,
}

impl FrameCache {
    pub fn transform(&self, frame: FrameId) -> Isometry3<f64> {
        match frame {
            FrameId::World => Isometry3::identity(),
            FrameId::Joint(i) => self.frames[i],
        }
    }
}

// ---------------------------------------------------------------------------
// JSON document
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OriginDoc {
    #[serde(default)]
    pub xyz: [f64; 3],
    #[serde(default)]
    pub rpy: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsDoc {
    pub lower: f64,
    pub upper: f64,
    pub accel: f64,
    pub jerk: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointDoc {
    pub name: String,
    #[serde(default)]
    pub parent: Option<String>,
    #[serde(rename = "type", default = "revolute")]
    pub kind: String,
    pub axis: [f64; 3],
    #[serde(default = "zero_origin")]
    pub origin: OriginDoc,
    pub limits: LimitsDoc,
}

fn revolute() -> String {
    "revolute".to_string()
}

fn zero_origin() -> OriginDoc {
    OriginDoc { xyz: [0.0; 3], rpy: [0.0; 3] }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointDoc {
    pub name: String,
    /// Joint name, or `"world"`.
    pub frame: String,
    pub offset: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SphereDoc {
    pub name: String,
    pub frame: String,
    pub offset: [f64; 3],
    pub radius: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDoc {
    pub joints: Vec<JointDoc>,
    #[serde(default)]
    pub body_points: Vec<PointDoc>,
    #[serde(default)]
    pub collision_spheres: Vec<SphereDoc>,
}

pub fn origin_from_xyz_rpy(xyz: [f64; 3], rpy: [f64; 3]) -> Isometry3<f64> {
    Isometry3::from_parts(
        Translation3::new(xyz[0], xyz[1], xyz[2]),
        UnitQuaternion::from_euler_angles(rpy[0], rpy[1], rpy[2]),
    )
}

impl KinematicModel {
    pub fn from_json_str(s: &str) -> Result<Self, ModelError> {
        let doc: ModelDoc = serde_json::from_str(s)?;
        Self::from_doc(&doc)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&s)
    }

    pub fn from_doc(doc: &ModelDoc) -> Result<Self, ModelError> {
        if doc.joints.is_empty() {
            return Err(ModelError::Invalid {
                what: "model".into(),
                reason: "at least one joint is required".into(),
            });
        }
        let n = doc.joints.len();
        let mut joints = Vec::with_capacity(n);
        let mut frame_index = HashMap::new();
        let mut lower = DVector::zeros(n);
        let mut upper = DVector::zeros(n);
        let mut accel = DVector::zeros(n);
        let mut jerk = DVector::zeros(n);

        for (i, jd) in doc.joints.iter().enumerate() {
            let bad = |reason: &str| ModelError::InvalidJoint {
                joint: jd.name.clone(),
                reason: reason.to_string(),
            };
            if jd.kind != "revolute" {
                return Err(bad(&format!("unsupported joint type `{}` (only revolute)", jd.kind)));
            }
            if frame_index.contains_key(&jd.name) || jd.name == "world" {
                return Err(bad("duplicate or reserved joint name"));
            }
            let parent = match &jd.parent {
                None => None,
                Some(p) if p == "world" => None,
                Some(p) => match frame_index.get(p) {
                    Some(&pi) => Some(pi),
                    None => return Err(bad(&format!("parent `{p}` must be declared before its children"))),
                },
            };
            let axis = Vector3::from(jd.axis);
            if !axis.iter().all(|v| v.is_finite()) || axis.norm() < 1e-12 {
                return Err(bad("axis must be a finite non-zero vector"));
            }
            let l = &jd.limits;
            if !(l.lower.is_finite() && l.upper.is_finite() && l.lower < l.upper) {
                return Err(bad("limits require finite lower < upper"));
            }
            if !(l.accel.is_finite() && l.accel > 0.0 && l.jerk.is_finite() && l.jerk > 0.0) {
                return Err(bad("accel and jerk limits must be finite and positive"));
            }
            if jd.origin.xyz.iter().chain(jd.origin.rpy.iter()).any(|v| !v.is_finite()) {
                return Err(bad("origin must be finite"));
            }
            lower[i] = l.lower;
            upper[i] = l.upper;
            accel[i] = l.accel;
            jerk[i] = l.jerk;
            frame_index.insert(jd.name.clone(), i);
            joints.push(Joint {
                name: jd.name.clone(),
                parent,
                axis: Unit::new_normalize(axis),
                origin: origin_from_xyz_rpy(jd.origin.xyz, jd.origin.rpy),
            });
        }

        let mut chains: Vec<Vec<usize>> = Vec::with_capacity(n);
        for (i, j) in joints.iter().enumerate() {
            let mut chain = match j.parent {
                Some(p) => chains[p].clone(),
                None => Vec::new(),
            };
            chain.push(i);
            chains.push(chain);
        }

        let resolve_frame = |name: &str| -> Result<FrameId, ModelError> {
            if name == "world" {
                Ok(FrameId::World)
            } else {
                frame_index
                    .get(name)
                    .map(|&i| FrameId::Joint(i))
                    .ok_or_else(|| ModelError::UnknownFrame(name.to_string()))
            }
        };

        let mut body_points = Vec::with_capacity(doc.body_points.len());
        for p in &doc.body_points {
            body_points.push(BodyPoint {
                name: p.name.clone(),
                point: AttachedPoint::new(resolve_frame(&p.frame)?, Vector3::from(p.offset)),
            });
        }
        let mut spheres = Vec::with_capacity(doc.collision_spheres.len());
        for s in &doc.collision_spheres {
            if !(s.radius.is_finite() && s.radius > 0.0) {
                return Err(ModelError::Invalid {
                    what: format!("collision sphere `{}`", s.name),
                    reason: "radius must be positive".into(),
                });
            }
            spheres.push(CollisionSphere {
                name: s.name.clone(),
                point: AttachedPoint::new(resolve_frame(&s.frame)?, Vector3::from(s.offset)),
                radius: s.radius,
            });
        }

        Ok(Self {
            joints,
            lower,
            upper,
            accel,
            jerk,
            body_points,
            spheres,
            chains,
            frame_index,
        })
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn lower_limits(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper_limits(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn accel_limits(&self) -> &DVector<f64> {
        &self.accel
    }

    pub fn jerk_limits(&self) -> &DVector<f64> {
        &self.jerk
    }

    pub fn body_points(&self) -> &[BodyPoint] {
        &self.body_points
    }

    pub fn spheres(&self) -> &[CollisionSphere] {
        &self.spheres
    }

    pub fn frame(&self, name: &str) -> Option<FrameId> {
        if name == "world" {
            return Some(FrameId::World);
        }
        self.frame_index.get(name).map(|&i| FrameId::Joint(i))
    }

    pub fn body_point_id(&self, name: &str) -> Option<usize> {
        self.body_points.iter().position(|p| p.name == name)
    }

    /// Whether `ancestor` lies on the path from the root to `frame` (inclusive).
    pub fn is_ancestor(&self, ancestor: usize, frame: FrameId) -> bool {
        match frame {
            FrameId::World => false,
            FrameId::Joint(f) => self.chains[f].contains(&ancestor),
        }
    }

    /// Joints whose motion moves points attached to `frame`.
    pub fn chain(&self, frame: FrameId) -> &[usize] {
        match frame {
            FrameId::World => &[],
            FrameId::Joint(f) => &self.chains[f],
        }
    }

    pub fn check_q(&self, q: &DVector<f64>) -> Result<(), ModelError> {
        if q.len() != self.dof() {
            return Err(ModelError::Dimension {
                expected: self.dof(),
                got: q.len(),
            });
        }
        if !q.iter().all(|v| v.is_finite()) {
            return Err(ModelError::NonFinite);
        }
        Ok(())
    }

    /// World transforms of all joint frames. `q` must have length `dof()`.
    pub fn frames(&self, q: &DVector<f64>) -> FrameCache {
        let n = self.dof();
        let mut frames = Vec::with_capacity(n);
        let mut axes = Vec::with_capacity(n);
        let mut pivots = Vec::with_capacity(n);
        for (i, j) in self.joints.iter().enumerate() {
            let parent = match j.parent {
                Some(p) => frames[p],
                None => Isometry3::identity(),
            };
            let at_zero: Isometry3<f64> = parent * j.origin;
            axes.push(at_zero.rotation * j.axis.into_inner());
            pivots.push(at_zero.translation.vector);
            let rot = UnitQuaternion::from_axis_angle(&j.axis, q[i]);
            frames.push(at_zero * rot);
        }
        FrameCache { frames, axes, pivots }
    }

    pub fn point_position(&self, cache: &FrameCache, p: &AttachedPoint) -> Vector3<f64> {
        cache
            .transform(p.frame)
            .transform_point(&nalgebra::Point3::from(p.offset))
            .coords
    }

    /// Writes the 3×n analytic Jacobian of `p` into rows `row..row+3` of `out`.
    pub fn point_jacobian_into(&self, cache: &FrameCache, p: &AttachedPoint, out: &mut DMatrix<f64>, row: usize) {
        let x = self.point_position(cache, p);
        for &j in self.chain(p.frame) {
            let col = cache.axes[j].cross(&(x - cache.pivots[j]));
            out[(row, j)] = col.x;
            out[(row + 1, j)] = col.y;
            out[(row + 2, j)] = col.z;
        }
    }

    /// Stacked positions of `points` (length 3k).
    pub fn points_position(&self, cache: &FrameCache, points: &[AttachedPoint]) -> DVector<f64> {
        let mut x = DVector::zeros(3 * points.len());
        for (k, p) in points.iter().enumerate() {
            x.fixed_rows_mut::<3>(3 * k).copy_from(&self.point_position(cache, p));
        }
        x
    }

    /// Stacked 3k×n Jacobian of `points`.
    pub fn points_jacobian(&self, cache: &FrameCache, points: &[AttachedPoint]) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(3 * points.len(), self.dof());
        for (k, p) in points.iter().enumerate() {
            self.point_jacobian_into(cache, p, &mut jac, 3 * k);
        }
        jac
    }

    /// `J̇q̇` of one point in closed form. For a revolute column
    /// `J_j = z_j × (x − o_j)`, differentiating gives
    /// `ż_j × (x − o_j) + z_j × (ẋ − ȯ_j)` with `ż_j = ω_j × z_j`, where `ω_j`
    /// and `ȯ_j` come from the joints above `j` only.
    pub fn point_curvature(&self, cache: &FrameCache, p: &AttachedPoint, qd: &DVector<f64>) -> Vector3<f64> {
        let x = self.point_position(cache, p);
        let chain = self.chain(p.frame);
        let xd: Vector3<f64> = chain
            .iter()
            .map(|&k| cache.axes[k].cross(&(x - cache.pivots[k])) * qd[k])
            .sum();
        let mut out = Vector3::zeros();
        for (pos, &j) in chain.iter().enumerate() {
            if qd[j] == 0.0 {
                continue;
            }
            let (z, o) = (cache.axes[j], cache.pivots[j]);
            let mut omega = Vector3::zeros();
            let mut od = Vector3::zeros();
            for &k in &chain[..pos] {
                let wk = cache.axes[k] * qd[k];
                omega += wk;
                od += wk.cross(&(o - cache.pivots[k]));
            }
            out += (omega.cross(&z).cross(&(x - o)) + z.cross(&(xd - od))) * qd[j];
        }
        out
    }

    /// Stacked `J̇q̇` (3k) of `points`.
    pub fn points_curvature(&self, cache: &FrameCache, points: &[AttachedPoint], qd: &DVector<f64>) -> DVector<f64> {
        let mut c = DVector::zeros(3 * points.len());
        if qd.iter().all(|v| *v == 0.0) {
            return c;
        }
        for (k, p) in points.iter().enumerate() {
            c.fixed_rows_mut::<3>(3 * k).copy_from(&self.point_curvature(cache, p, qd));
        }
        c
    }

    fn lookup(&self, ids: &[usize]) -> Result<Vec<AttachedPoint>, ModelError> {
        ids.iter()
            .map(|&id| {
                self.body_points
                    .get(id)
                    .map(|b| b.point)
                    .ok_or(ModelError::UnknownPoint(id))
            })
            .collect()
    }

    /// World positions of the requested body points.
    pub fn forward_points(&self, q: &DVector<f64>, ids: &[usize]) -> Result<Vec<Vector3<f64>>, ModelError> {
        self.check_q(q)?;
        let points = self.lookup(ids)?;
        let cache = self.frames(q);
        Ok(points.iter().map(|p| self.point_position(&cache, p)).collect())
    }

    /// Stacked `∂x/∂q` (3k×n) of the requested body points.
    pub fn jacobian(&self, q: &DVector<f64>, ids: &[usize]) -> Result<DMatrix<f64>, ModelError> {
        self.check_q(q)?;
        let points = self.lookup(ids)?;
        let cache = self.frames(q);
        Ok(self.points_jacobian(&cache, &points))
    }

    /// `J̇q̇` (3k) of the requested body points as the directional difference
    /// `(J(q + εq̇) − J(q))q̇/ε`. The engine uses [`Self::points_curvature`].
    pub fn curvature_term(
        &self,
        q: &DVector<f64>,
        qd: &DVector<f64>,
        ids: &[usize],
    ) -> Result<DVector<f64>, ModelError> {
        self.check_q(q)?;
        self.check_q(qd)?;
        let points = self.lookup(ids)?;
        if qd.iter().all(|v| *v == 0.0) {
            return Ok(DVector::zeros(3 * points.len()));
        }
        let jac = self.points_jacobian(&self.frames(q), &points);
        let shifted = self.points_jacobian(&self.frames(&(q + qd * CURVATURE_FD_STEP)), &points);
        Ok((shifted - jac) * qd / CURVATURE_FD_STEP)
    }

    /// Sum over joints of the distance between consecutive frame origins plus
    /// the largest attached-point offset: a Lipschitz bound for `forward_points`.
    pub fn total_link_length(&self) -> f64 {
        let links: f64 = self.joints.iter().map(|j| j.origin.translation.vector.norm()).sum();
        let reach = self
            .body_points
            .iter()
            .map(|p| p.point.offset.norm())
            .chain(self.spheres.iter().map(|s| s.point.offset.norm()))
            .fold(0.0, f64::max);
        links + reach
    }

    /// Midpoint of the joint range.
    pub fn mid_configuration(&self) -> DVector<f64> {
        (&self.lower + &self.upper) * 0.5
    }
}

/// Rotation from extrinsic XYZ (roll, pitch, yaw) Euler angles.
pub fn rotation_from_euler(rpy: &Vector3<f64>) -> Rotation3<f64> {
    Rotation3::from_euler_angles(rpy.x, rpy.y, rpy.z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn single_z() -> KinematicModel {
        KinematicModel::from_json_str(
            r#"{"joints":[{"name":"j0","axis":[0,0,1],"limits":{"lower":-3,"upper":3,"accel":10,"jerk":1000}}],
                "body_points":[{"name":"p","frame":"j0","offset":[1,0,0]},
                               {"name":"axis","frame":"j0","offset":[0,0,0.5]}]}"#,
        )
        .unwrap()
    }

    #[test]
    fn identity_and_quarter_turn() {
        let m = single_z();
        let x = m.forward_points(&DVector::from_element(1, 0.0), &[0]).unwrap();
        assert!((x[0] - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-15);
        let x = m.forward_points(&DVector::from_element(1, FRAC_PI_2), &[0]).unwrap();
        assert!((x[0] - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn jacobian_column_is_axis_cross_lever() {
        let m = single_z();
        let j = m.jacobian(&DVector::from_element(1, 0.0), &[0, 1]).unwrap();
        assert_eq!(j.shape(), (6, 1));
        assert!((j.column(0).rows(0, 3) - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
        assert!(j.column(0).rows(3, 3).norm() < 1e-15);
    }

    #[test]
    fn centripetal_curvature() {
        let m = single_z();
        let c = m
            .curvature_term(&DVector::from_element(1, 0.0), &DVector::from_element(1, 1.0), &[0])
            .unwrap();
        assert!((c - DVector::from_vec(vec![-1.0, 0.0, 0.0])).norm() < 1e-5);
        let c0 = m
            .curvature_term(&DVector::from_element(1, 0.3), &DVector::zeros(1), &[0])
            .unwrap();
        assert_eq!(c0.norm(), 0.0);
    }

    #[test]
    fn errors() {
        let m = single_z();
        assert!(matches!(
            m.forward_points(&DVector::zeros(1), &[7]),
            Err(ModelError::UnknownPoint(7))
        ));
        assert!(matches!(
            m.jacobian(&DVector::zeros(2), &[0]),
            Err(ModelError::Dimension { expected: 1, got: 2 })
        ));
        let prismatic = r#"{"joints":[{"name":"j0","type":"prismatic","axis":[0,0,1],
            "limits":{"lower":-1,"upper":1,"accel":1,"jerk":1}}]}"#;
        assert!(matches!(
            KinematicModel::from_json_str(prismatic),
            Err(ModelError::InvalidJoint { .. })
        ));
        let bad_frame = r#"{"joints":[{"name":"j0","axis":[0,0,1],
            "limits":{"lower":-1,"upper":1,"accel":1,"jerk":1}}],
            "body_points":[{"name":"p","frame":"nope","offset":[0,0,0]}]}"#;
        assert!(matches!(
            KinematicModel::from_json_str(bad_frame),
            Err(ModelError::UnknownFrame(_))
        ));
        let inverted = r#"{"joints":[{"name":"j0","axis":[0,0,1],
            "limits":{"lower":1,"upper":-1,"accel":1,"jerk":1}}]}"#;
        assert!(KinematicModel::from_json_str(inverted).is_err());
    }
}
