//! Differentiable task spaces `x = φ(q)` in which fabric terms are authored.

use nalgebra::{DMatrix, DVector, Rotation3, Vector3};
use thiserror::Error;

use crate::kinematics::{
    rotation_from_euler, AttachedPoint, FrameCache, FrameId, JointState, KinematicModel, ModelError,
};
use crate::retarget::PcaBasis;

/// Number of palm-fixed points used by the palm pose taskmap.
pub const PALM_POINTS: usize = 7;

#[derive(Debug, Error)]
pub enum TaskmapError {
    #[error("taskmap dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone)]
pub enum Taskmap {
    /// `x = q`.
    Identity,
    /// Affine map `x = A q + offset`.
    Linear { matrix: DMatrix<f64>, offset: DVector<f64> },
    /// Stacked world positions of attached points.
    BodyPoints { points: Vec<AttachedPoint> },
    /// Distance to the upper limits, `x = q̄ − q`.
    JointLimitUpper,
    /// Distance to the lower limits, `x = q − q̲`.
    JointLimitLower,
}

/// A taskmap evaluated at one joint state.
#[derive(Debug, Clone)]
pub struct TaskEval {
    pub x: DVector<f64>,
    pub xd: DVector<f64>,
    pub jac: DMatrix<f64>,
    /// `J̇ q̇`.
    pub curvature: DVector<f64>,
}

/// Frames at `q`, shared by every body-point map in one evaluation.
pub struct TaskContext<'a> {
    pub model: &'a KinematicModel,
    pub state: &'a JointState,
    pub frames: FrameCache,
}

impl<'a> TaskContext<'a> {
    pub fn new(model: &'a KinematicModel, state: &'a JointState) -> Result<Self, ModelError> {
        model.check_q(&state.q)?;
        model.check_q(&state.qd)?;
        let frames = model.frames(&state.q);
        Ok(Self { model, state, frames })
    }
}

impl Taskmap {
    pub fn linear(matrix: DMatrix<f64>) -> Self {
        let k = matrix.nrows();
        Taskmap::Linear {
            matrix,
            offset: DVector::zeros(k),
        }
    }

    pub fn body_points(points: Vec<AttachedPoint>) -> Self {
        Taskmap::BodyPoints { points }
    }

    pub fn dim(&self, n: usize) -> usize {
        match self {
            Taskmap::Identity | Taskmap::JointLimitUpper | Taskmap::JointLimitLower => n,
            Taskmap::Linear { matrix, .. } => matrix.nrows(),
            Taskmap::BodyPoints { points } => 3 * points.len(),
        }
    }

    fn validate(&self, n: usize) -> Result<(), TaskmapError> {
        if let Taskmap::Linear { matrix, offset } = self {
            if matrix.ncols() != n {
                return Err(TaskmapError::Dimension(format!(
                    "linear map has {} columns for {n} joints",
                    matrix.ncols()
                )));
            }
            if matrix.nrows() > n || offset.len() != matrix.nrows() {
                return Err(TaskmapError::Dimension("linear map requires k <= n and a k-offset".into()));
            }
            if !matrix.iter().chain(offset.iter()).all(|v| v.is_finite()) {
                return Err(TaskmapError::Dimension("linear map has non-finite entries".into()));
            }
        }
        Ok(())
    }

    /// `φ(q)` alone.
    pub fn position(&self, model: &KinematicModel, q: &DVector<f64>) -> Result<DVector<f64>, TaskmapError> {
        model.check_q(q)?;
        self.validate(q.len())?;
        Ok(match self {
            Taskmap::Identity => q.clone(),
            Taskmap::Linear { matrix, offset } => matrix * q + offset,
            Taskmap::BodyPoints { points } => model.points_position(&model.frames(q), points),
            Taskmap::JointLimitUpper => model.upper_limits() - q,
            Taskmap::JointLimitLower => q - model.lower_limits(),
        })
    }

    pub fn eval(&self, model: &KinematicModel, state: &JointState) -> Result<TaskEval, TaskmapError> {
        let ctx = TaskContext::new(model, state)?;
        self.eval_in(&ctx)
    }

    pub fn eval_in(&self, ctx: &TaskContext<'_>) -> Result<TaskEval, TaskmapError> {
        let model = ctx.model;
        let q = &ctx.state.q;
        let qd = &ctx.state.qd;
        let n = q.len();
        self.validate(n)?;
        let eval = match self {
            Taskmap::Identity => TaskEval {
                x: q.clone(),
                xd: qd.clone(),
                jac: DMatrix::identity(n, n),
                curvature: DVector::zeros(n),
            },
            Taskmap::Linear { matrix, offset } => TaskEval {
                x: matrix * q + offset,
                xd: matrix * qd,
                jac: matrix.clone(),
                curvature: DVector::zeros(matrix.nrows()),
            },
            Taskmap::JointLimitUpper => TaskEval {
                x: model.upper_limits() - q,
                xd: -qd,
                jac: -DMatrix::identity(n, n),
                curvature: DVector::zeros(n),
            },
            Taskmap::JointLimitLower => TaskEval {
                x: q - model.lower_limits(),
                xd: qd.clone(),
                jac: DMatrix::identity(n, n),
                curvature: DVector::zeros(n),
            },
            Taskmap::BodyPoints { points } => {
                let x = model.points_position(&ctx.frames, points);
                let jac = model.points_jacobian(&ctx.frames, points);
                let xd = &jac * qd;
                let curvature = model.points_curvature(&ctx.frames, points, qd);
                TaskEval { x, xd, jac, curvature }
            }
        };
        Ok(eval)
    }
}

/// Embeds the `k×16` eigengrasp basis into the hand columns of an `n`-joint
/// robot: `x = Ã q − A·mean`, with `Ã = [0, A]`.
pub fn pca_taskmap(basis: &PcaBasis, n: usize, hand_offset: usize) -> Result<Taskmap, TaskmapError> {
    let a = basis.components();
    let hand = a.ncols();
    if hand_offset + hand > n {
        return Err(TaskmapError::Dimension(format!(
            "hand block {hand_offset}..{} exceeds {n} joints",
            hand_offset + hand
        )));
    }
    if a.nrows() > n {
        return Err(TaskmapError::Dimension("more components than joints".into()));
    }
    let mut matrix = DMatrix::zeros(a.nrows(), n);
    matrix.view_mut((0, hand_offset), (a.nrows(), hand)).copy_from(a);
    let offset = -(a * basis.mean());
    Ok(Taskmap::Linear { matrix, offset })
}

/// Seven points rigidly attached to the palm, whose stacked positions encode
/// the full palm pose.
#[derive(Debug, Clone)]
pub struct PalmTaskmap {
    pub frame: FrameId,
    /// Palm origin expressed in `frame`.
    pub origin: Vector3<f64>,
    /// Point offsets relative to the palm origin, in palm axes.
    pub offsets: [Vector3<f64>; PALM_POINTS],
}

impl PalmTaskmap {
    /// Palm origin plus `±spread` along each local axis.
    pub fn new(frame: FrameId, origin: Vector3<f64>, spread: f64) -> Self {
        let mut offsets = [Vector3::zeros(); PALM_POINTS];
        for axis in 0..3 {
            let mut e = Vector3::zeros();
            e[axis] = spread;
            offsets[1 + 2 * axis] = e;
            offsets[2 + 2 * axis] = -e;
        }
        Self { frame, origin, offsets }
    }

    pub fn with_offsets(frame: FrameId, origin: Vector3<f64>, offsets: [Vector3<f64>; PALM_POINTS]) -> Self {
        Self { frame, origin, offsets }
    }

    pub fn from_model(model: &KinematicModel, frame: &str, origin: Vector3<f64>, spread: f64) -> Result<Self, ModelError> {
        let frame = model
            .frame(frame)
            .ok_or_else(|| ModelError::UnknownFrame(frame.to_string()))?;
        Ok(Self::new(frame, origin, spread))
    }

    pub fn points(&self) -> Vec<AttachedPoint> {
        self.offsets
            .iter()
            .map(|o| AttachedPoint::new(self.frame, self.origin + o))
            .collect()
    }

    pub fn taskmap(&self) -> Taskmap {
        Taskmap::body_points(self.points())
    }

    /// The 21-D target obtained by placing the palm at `position` with
    /// extrinsic XYZ Euler angles `euler` (radians).
    pub fn pose_to_targets(&self, position: &Vector3<f64>, euler: &Vector3<f64>) -> DVector<f64> {
        self.targets_for_rotation(position, &rotation_from_euler(euler))
    }

    pub fn targets_for_rotation(&self, position: &Vector3<f64>, rotation: &Rotation3<f64>) -> DVector<f64> {
        let mut x = DVector::zeros(3 * PALM_POINTS);
        for (k, o) in self.offsets.iter().enumerate() {
            x.fixed_rows_mut::<3>(3 * k).copy_from(&(position + rotation * o));
        }
        x
    }

    /// Current palm position and extrinsic XYZ Euler angles.
    pub fn palm_pose(&self, model: &KinematicModel, q: &DVector<f64>) -> (Vector3<f64>, Vector3<f64>) {
        let frames = model.frames(q);
        let t = frames.transform(self.frame);
        let position = t.transform_point(&nalgebra::Point3::from(self.origin)).coords;
        let (r, p, y) = t.rotation.to_rotation_matrix().euler_angles();
        (position, Vector3::new(r, p, y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn planar() -> KinematicModel {
        KinematicModel::from_json_str(crate::assets::PLANAR_3DOF).unwrap()
    }

    #[test]
    fn identity_map() {
        let m = planar();
        let s = JointState::new(DVector::from_vec(vec![0.1, -0.2, 0.3]), DVector::from_vec(vec![1.0, 2.0, 3.0]));
        let e = Taskmap::Identity.eval(&m, &s).unwrap();
        assert_eq!(e.x, s.q);
        assert_eq!(e.xd, s.qd);
        assert_eq!(e.jac, DMatrix::identity(3, 3));
        assert_eq!(e.curvature.norm(), 0.0);
    }

    #[test]
    fn upper_limit_map_is_affine() {
        let m = KinematicModel::from_json_str(
            r#"{"joints":[{"name":"j","axis":[0,0,1],"limits":{"lower":-1,"upper":2,"accel":1,"jerk":1}}]}"#,
        )
        .unwrap();
        let s = JointState::new(DVector::from_element(1, 0.5), DVector::from_element(1, 0.7));
        let e = Taskmap::JointLimitUpper.eval(&m, &s).unwrap();
        assert!((e.x[0] - 1.5).abs() < 1e-15);
        assert!((e.xd[0] + 0.7).abs() < 1e-15);
        let e = Taskmap::JointLimitLower.eval(&m, &s).unwrap();
        assert!((e.x[0] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn pca_map_embeds_hand_block() {
        let a = DMatrix::from_fn(5, 16, |r, c| ((r * 16 + c) as f64).sin());
        let basis = PcaBasis::from_parts(a.clone(), DVector::zeros(16), DVector::from_element(16, 1.0)).unwrap();
        let Taskmap::Linear { matrix, .. } = pca_taskmap(&basis, 23, 7).unwrap() else {
            panic!("expected linear map")
        };
        assert_eq!(matrix.shape(), (5, 23));
        assert!(matrix.columns(0, 7).iter().all(|v| *v == 0.0));
        assert_eq!(matrix.columns(7, 16), a);

        let Taskmap::Linear { matrix, .. } = pca_taskmap(&basis, 16, 0).unwrap() else {
            panic!("expected linear map")
        };
        assert_eq!(matrix, a);
        assert!(pca_taskmap(&basis, 20, 7).is_err());

        let mut q = DVector::zeros(23);
        q.rows_mut(0, 7).fill(0.9);
        let map = pca_taskmap(&basis, 23, 7).unwrap();
        let m23 = KinematicModel::from_json_str(crate::assets::DESK_23DOF).unwrap();
        assert_eq!(map.position(&m23, &q).unwrap().norm(), 0.0);
    }

    #[test]
    fn pose_targets_fixed_point_and_symmetries() {
        let m = planar();
        let palm = PalmTaskmap::from_model(&m, "j2", Vector3::new(0.3, 0.0, 0.0), 0.1).unwrap();
        let q = DVector::from_vec(vec![0.4, -0.3, 0.8]);
        let (p, r) = palm.palm_pose(&m, &q);
        let targets = palm.pose_to_targets(&p, &r);
        let current = palm.taskmap().position(&m, &q).unwrap();
        assert!((targets - current).norm() < 1e-12);

        let t = Vector3::new(0.1, -0.2, 0.3);
        let shifted = palm.pose_to_targets(&t, &Vector3::zeros());
        for (k, o) in palm.offsets.iter().enumerate() {
            assert!((shifted.fixed_rows::<3>(3 * k) - (t + o)).norm() < 1e-15);
        }

        let flipped = palm.pose_to_targets(&Vector3::zeros(), &Vector3::new(0.0, 0.0, PI));
        assert!(flipped.fixed_rows::<3>(0).norm() < 1e-15);
        assert!((flipped.fixed_rows::<3>(3) - Vector3::new(-0.1, 0.0, 0.0)).norm() < 1e-15);
    }
}
