//! Human fingertip traces → robot hand joint trajectories → eigengrasp basis.
//!
//! Each datapoint of a trace is solved for unconstrained joint variables that
//! pass through a tanh saturation into the hand's joint range. The objective
//! blends matching the scaled human fingertips against pulling all fingertips
//! towards a grip-specific focal point, shifting weight to the latter as the
//! trace progresses. Consecutive datapoints warm-start from each other.

mod adam;
mod pca;
pub mod synth;

pub use adam::{adam_minimize, central_gradient, Adam, AdamConfig, Minimum, GRADIENT_FD_STEP};
pub use pca::{fit_pca, read_dataset_csv, write_dataset_csv, PcaBasis, PcaBasisDoc};

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{AttachedPoint, KinematicModel};

#[derive(Debug, Error)]
pub enum RetargetError {
    #[error("loss became non-finite at iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid data: {0}")]
    Format(String),
    #[error("hand model has no body point `{0}`")]
    MissingFingertip(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GripType {
    Power,
    Precision,
}

/// Stacked human fingertip positions (index, middle, ring, thumb) in the palm
/// frame, meters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanGraspTrace {
    pub grip_type: GripType,
    pub points: Vec<[f64; 12]>,
}

impl HumanGraspTrace {
    pub fn validate(&self) -> Result<(), RetargetError> {
        if self.points.len() < 2 {
            return Err(RetargetError::Format("a trace needs at least two datapoints".into()));
        }
        if self.points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(RetargetError::Format("trace has non-finite entries".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetargetConfig {
    /// Human-to-robot fingertip scale.
    pub scale: f64,
    /// Weight of the (unsquared) posture regulariser.
    pub lambda: f64,
    pub q_reg_power: [f64; 16],
    pub q_reg_precision: [f64; 16],
    /// Grip focal points in the palm frame.
    pub focal_power: [f64; 3],
    pub focal_precision: [f64; 3],
    pub fingertips: [String; 4],
    pub adam: AdamConfig,
}

impl Default for RetargetConfig {
    fn default() -> Self {
        Self {
            scale: 1.6,
            lambda: 0.005,
            q_reg_power: [0., 1., 1., 1., 0., 1., 1., 1., 0., 1., 1., 1., 1., 0.75, 0., 0.],
            q_reg_precision: [0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 1., 0.75, 0., 0.],
            focal_power: [0.04, 0.0, 0.07],
            focal_precision: [0.08, 0.01, 0.15],
            fingertips: ["index_tip", "middle_tip", "ring_tip", "thumb_tip"].map(String::from),
            adam: AdamConfig::default(),
        }
    }
}

impl RetargetConfig {
    pub fn q_reg(&self, grip: GripType) -> DVector<f64> {
        match grip {
            GripType::Power => DVector::from_row_slice(&self.q_reg_power),
            GripType::Precision => DVector::from_row_slice(&self.q_reg_precision),
        }
    }

    pub fn focal(&self, grip: GripType) -> Vector3<f64> {
        match grip {
            GripType::Power => Vector3::from(self.focal_power),
            GripType::Precision => Vector3::from(self.focal_precision),
        }
    }
}

/// A hand model with its four fingertip points resolved.
#[derive(Debug, Clone)]
pub struct RetargetHand {
    pub model: KinematicModel,
    tips: Vec<AttachedPoint>,
}

impl RetargetHand {
    pub fn new(model: KinematicModel, cfg: &RetargetConfig) -> Result<Self, RetargetError> {
        let tips = cfg
            .fingertips
            .iter()
            .map(|name| {
                model
                    .body_point_id(name)
                    .map(|id| model.body_points()[id].point)
                    .ok_or_else(|| RetargetError::MissingFingertip(name.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if model.dof() != 16 {
            return Err(RetargetError::Shape(format!("hand model has {} joints, expected 16", model.dof())));
        }
        Ok(Self { model, tips })
    }

    /// Stacked fingertip positions (12).
    pub fn fingertips(&self, q: &DVector<f64>) -> DVector<f64> {
        self.model.points_position(&self.model.frames(q), &self.tips)
    }

    pub fn lower(&self) -> &DVector<f64> {
        self.model.lower_limits()
    }

    pub fn upper(&self) -> &DVector<f64> {
        self.model.upper_limits()
    }
}

/// `½(tanh(q) + 1)(q̄ − q̲) + q̲`: maps any real vector strictly inside the limits.
pub fn saturate(q_free: &DVector<f64>, lower: &DVector<f64>, upper: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(q_free.len(), |i, _| {
        0.5 * (q_free[i].tanh() + 1.0) * (upper[i] - lower[i]) + lower[i]
    })
}

/// Elementwise derivative of [`saturate`].
pub fn saturate_derivative(q_free: &DVector<f64>, lower: &DVector<f64>, upper: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(q_free.len(), |i, _| {
        let t = q_free[i].tanh();
        0.5 * (1.0 - t * t) * (upper[i] - lower[i])
    })
}

/// Unconstrained variables whose saturation is `q`, with `q` first pulled into
/// the central 90% of each joint range so the warm start is not in a flat tail.
pub fn unsaturate(q: &DVector<f64>, lower: &DVector<f64>, upper: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(q.len(), |i, _| {
        let t = 2.0 * (q[i] - lower[i]) / (upper[i] - lower[i]) - 1.0;
        t.clamp(-0.9, 0.9).atanh()
    })
}

/// Blend factor `1 − (i+1)/n` for datapoint `i` of `n`.
pub fn blend_factor(i: usize, n: usize) -> f64 {
    1.0 - (i as f64 + 1.0) / n as f64
}

/// Retargeting objective at unconstrained variables `q_free` for the human
/// fingertips `x_h`.
pub fn retarget_loss(
    q_free: &DVector<f64>,
    x_h: &[f64; 12],
    gamma: f64,
    grip: GripType,
    cfg: &RetargetConfig,
    hand: &RetargetHand,
) -> f64 {
    let q_r = saturate(q_free, hand.lower(), hand.upper());
    let x_r = hand.fingertips(&q_r);
    let target = DVector::from_row_slice(x_h) * cfg.scale;
    let focal = cfg.focal(grip);
    let x_c = DVector::from_fn(12, |i, _| focal[i % 3]);
    gamma * (&x_r - target).norm_squared()
        + (1.0 - gamma) * (&x_r - x_c).norm_squared()
        + cfg.lambda * (q_r - cfg.q_reg(grip)).norm()
}

/// Retargets every datapoint of a trace in order, warm-starting each solve
/// from the previous one. Returns an `n × 16` joint trajectory.
pub fn retarget_trace(trace: &HumanGraspTrace, hand: &RetargetHand, cfg: &RetargetConfig) -> Result<DMatrix<f64>, RetargetError> {
    trace.validate()?;
    let n = trace.points.len();
    let dof = hand.model.dof();
    let mut out = DMatrix::zeros(n, dof);
    let mut q_free = unsaturate(&DVector::zeros(dof), hand.lower(), hand.upper());
    for (i, x_h) in trace.points.iter().enumerate() {
        let gamma = blend_factor(i, n);
        let objective = |v: &[f64]| {
            retarget_loss(&DVector::from_column_slice(v), x_h, gamma, trace.grip_type, cfg, hand)
        };
        let best = adam_minimize(objective, q_free.as_slice(), &cfg.adam)?;
        q_free = DVector::from_vec(best.x);
        let q_r = saturate(&q_free, hand.lower(), hand.upper());
        out.row_mut(i).copy_from(&q_r.transpose());
    }
    Ok(out)
}

/// Stacks trajectories row-wise into one dataset.
pub fn stack_rows(parts: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = parts.iter().map(|p| p.nrows()).sum();
    let cols = parts.first().map_or(0, |p| p.ncols());
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for p in parts {
        out.rows_mut(r, p.nrows()).copy_from(p);
        r += p.nrows();
    }
    out
}
