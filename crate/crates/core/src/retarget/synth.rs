//! Synthetic human grasp traces: parametric open→close motions of a 16-joint
//! hand, expressed as human-scale fingertip positions with jitter.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{GripType, HumanGraspTrace, RetargetConfig, RetargetHand};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub traces_per_grip: usize,
    pub frames: usize,
    /// Fingertip jitter standard deviation, meters (human scale).
    pub jitter: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            traces_per_grip: 6,
            frames: 16,
            jitter: 0.002,
        }
    }
}

const OPEN: [f64; 16] = [0.0, 0.1, 0.1, 0.1, 0.0, 0.1, 0.1, 0.1, 0.0, 0.1, 0.1, 0.1, 0.5, 0.2, 0.1, 0.1];
const POWER: [f64; 16] = [0.0, 1.2, 1.2, 1.1, 0.0, 1.2, 1.2, 1.1, 0.0, 1.2, 1.2, 1.1, 1.1, 0.8, 0.6, 0.6];
const PRECISION: [f64; 16] = [0.05, 0.7, 0.5, 0.4, 0.0, 0.7, 0.5, 0.4, -0.05, 0.6, 0.4, 0.3, 1.2, 0.7, 0.4, 0.5];

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Joint trajectory of one synthetic grasp before conversion to fingertips.
pub fn synthetic_joint_motion<R: Rng + ?Sized>(
    rng: &mut R,
    grip: GripType,
    frames: usize,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
) -> Vec<DVector<f64>> {
    let closed = match grip {
        GripType::Power => POWER,
        GripType::Precision => PRECISION,
    };
    let amplitude: f64 = rng.random_range(0.6..1.0);
    let open_shift: f64 = rng.random_range(-0.05..0.1);
    let open = DVector::from_fn(16, |i, _| OPEN[i] + open_shift);
    let close = DVector::from_fn(16, |i, _| {
        OPEN[i] + amplitude * (closed[i] - OPEN[i]) + rng.random_range(-0.04..0.04)
    });
    (0..frames)
        .map(|f| {
            let s = smoothstep(f as f64 / (frames - 1).max(1) as f64);
            let q = &open + (&close - &open) * s;
            DVector::from_fn(16, |i, _| q[i].clamp(lower[i] + 1e-3, upper[i] - 1e-3))
        })
        .collect()
}

/// Power and precision traces, alternating, with fingertips divided by the
/// retargeting scale so that retargeting recovers robot-sized motions.
pub fn synthetic_traces<R: Rng + ?Sized>(
    rng: &mut R,
    hand: &RetargetHand,
    cfg: &RetargetConfig,
    synth: &SynthConfig,
) -> Vec<HumanGraspTrace> {
    let noise = Normal::new(0.0, synth.jitter.max(0.0)).expect("valid jitter");
    let mut traces = Vec::with_capacity(2 * synth.traces_per_grip);
    for _ in 0..synth.traces_per_grip {
        for grip in [GripType::Power, GripType::Precision] {
            let motion = synthetic_joint_motion(rng, grip, synth.frames.max(2), hand.lower(), hand.upper());
            let points = motion
                .iter()
                .map(|q| {
                    let tips = hand.fingertips(q);
                    let mut p = [0.0; 12];
                    for i in 0..12 {
                        p[i] = tips[i] / cfg.scale + noise.sample(rng);
                    }
                    p
                })
                .collect();
            traces.push(HumanGraspTrace { grip_type: grip, points });
        }
    }
    traces
}
