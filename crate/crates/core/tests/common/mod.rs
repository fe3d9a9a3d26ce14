#![allow(dead_code)]

use fabricore::assets;
use fabricore::kinematics::KinematicModel;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

pub fn planar() -> KinematicModel {
    KinematicModel::from_json_str(assets::PLANAR_3DOF).unwrap()
}

pub fn hand() -> KinematicModel {
    KinematicModel::from_json_str(assets::HAND_16DOF).unwrap()
}

pub fn desk() -> KinematicModel {
    KinematicModel::from_json_str(assets::DESK_23DOF).unwrap()
}

pub fn scenario_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/scenarios").join(name)
}

/// Maps unit-interval draws into the model's joint range.
pub fn within_limits(model: &KinematicModel, u: &[f64]) -> DVector<f64> {
    let (lo, hi) = (model.lower_limits(), model.upper_limits());
    DVector::from_fn(model.dof(), |j, _| lo[j] + u[j] * (hi[j] - lo[j]))
}

pub fn unit_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0f64, n)
}

pub fn sym_vec(n: usize, r: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-r..r, n)
}

/// Central-difference Jacobian of `f` at `q`.
pub fn fd_jacobian(f: impl Fn(&DVector<f64>) -> DVector<f64>, q: &DVector<f64>, h: f64) -> DMatrix<f64> {
    let k = f(q).len();
    let mut jac = DMatrix::zeros(k, q.len());
    for j in 0..q.len() {
        let mut qp = q.clone();
        let mut qm = q.clone();
        qp[j] += h;
        qm[j] -= h;
        jac.set_column(j, &((f(&qp) - f(&qm)) / (2.0 * h)));
    }
    jac
}

/// `J̇q̇ = d²/ds² φ(q + s q̇)` at `s = 0`, by a second central difference.
pub fn fd_curvature(f: impl Fn(&DVector<f64>) -> DVector<f64>, q: &DVector<f64>, qd: &DVector<f64>, h: f64) -> DVector<f64> {
    (f(&(q + qd * h)) - f(q) * 2.0 + f(&(q - qd * h))) / (h * h)
}

pub fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-12)
}

pub fn scenario(name: &str) -> fabricore::scenario::Scenario {
    fabricore::scenario::Scenario::load(scenario_path(name)).unwrap()
}

/// Rebuilds the taskmap behind a contribution from its name alone.
pub fn taskmap_for(scn: &fabricore::scenario::Scenario, name: &str) -> fabricore::taskmaps::Taskmap {
    use fabricore::taskmaps::{pca_taskmap, Taskmap};
    let engine = &scn.engine;
    match name {
        "joint_limit_upper" => Taskmap::JointLimitUpper,
        "joint_limit_lower" => Taskmap::JointLimitLower,
        "cspace_damping" | "posture" | "cspace_attraction" => Taskmap::Identity,
        "palm_attraction" => engine.palm().unwrap().taskmap(),
        "pca_attraction" => {
            let basis = fabricore::retarget::PcaBasis::from_json_str(assets::HAND_BASIS).unwrap();
            pca_taskmap(&basis, engine.model().dof(), scn.file.pca.as_ref().unwrap().hand_offset).unwrap()
        }
        other => {
            let sphere = other
                .split_once('[')
                .and_then(|(_, s)| s.strip_suffix(']'))
                .expect("collision term names carry the sphere");
            let s = engine.model().spheres().iter().find(|s| s.name == sphere).unwrap();
            Taskmap::body_points(vec![s.point])
        }
    }
}

/// Dense resolution with finite-difference Jacobians and curvature, solved by LU.
pub fn oracle_resolve(
    scn: &fabricore::scenario::Scenario,
    q: &DVector<f64>,
    qd: &DVector<f64>,
    action: &fabricore::engine::Action,
) -> DVector<f64> {
    let engine = &scn.engine;
    let model = engine.model();
    let n = model.dof();
    let state = fabricore::kinematics::JointState::new(q.clone(), qd.clone());
    let mut metric = DMatrix::identity(n, n) * engine.config().lambda_reg;
    let mut force = DVector::zeros(n);
    for c in engine.contributions(&state, action).unwrap() {
        let map = taskmap_for(scn, &c.name);
        let pos = |q: &DVector<f64>| map.position(model, q).unwrap();
        let jac = fd_jacobian(pos, q, 1e-6);
        let curv = fd_curvature(pos, q, qd, 1e-4);
        let m = &c.output.metric;
        metric += jac.transpose() * m * &jac;
        force += jac.transpose() * m * (&c.output.accel - curv);
    }
    metric.lu().solve(&force).unwrap()
}
