mod common;

use common::*;
use fabricore::kinematics::{rotation_from_euler, JointState};
use fabricore::retarget::PcaBasis;
use fabricore::taskmaps::{pca_taskmap, PalmTaskmap, Taskmap};
use nalgebra::{DMatrix, DVector, Rotation3, Vector3};
use proptest::prelude::*;

fn palm(m: &fabricore::kinematics::KinematicModel) -> PalmTaskmap {
    PalmTaskmap::from_model(m, "iiwa_7", Vector3::new(0.0, 0.0, 0.11), 0.1).unwrap()
}

fn maps(m: &fabricore::kinematics::KinematicModel, seed: &[f64]) -> Vec<Taskmap> {
    let n = m.dof();
    let linear = DMatrix::from_fn(5, n, |i, j| seed[(i * n + j) % seed.len()] - 0.5);
    vec![
        Taskmap::Identity,
        Taskmap::Linear {
            matrix: linear,
            offset: DVector::from_element(5, 0.3),
        },
        Taskmap::JointLimitUpper,
        Taskmap::JointLimitLower,
        Taskmap::body_points(m.spheres().iter().map(|s| s.point).collect()),
        palm(m).taskmap(),
    ]
}

#[test]
fn pca_map_zero_on_arm_only_motion() {
    let _ = desk();
    let basis = PcaBasis::from_json_str(fabricore::assets::HAND_BASIS).unwrap();
    let map = pca_taskmap(&basis, 23, 7).unwrap();
    let q = DVector::from_fn(23, |j, _| if j < 7 { 0.3 * j as f64 } else { 0.0 });
    if let Taskmap::Linear { matrix, .. } = &map {
        assert_eq!(matrix.columns(0, 7).amax(), 0.0);
        assert_eq!((matrix * &q).amax(), 0.0);
    } else {
        panic!("expected a linear map");
    }
    assert!(pca_taskmap(&basis, 20, 7).is_err());
}

#[test]
fn palm_targets_reproduce_current_pose() {
    let m = desk();
    let p = palm(&m);
    let q = m.mid_configuration();
    let (pos, euler) = p.palm_pose(&m, &q);
    let x = p.taskmap().position(&m, &q).unwrap();
    assert!((p.pose_to_targets(&pos, &euler) - x).amax() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn every_map_jacobian_matches_differences(u in unit_vec(23), v in sym_vec(23, 1.5), seed in unit_vec(17)) {
        let m = desk();
        let q = within_limits(&m, &u);
        let qd = DVector::from_column_slice(&v);
        for map in maps(&m, &seed) {
            let eval = map.eval(&m, &JointState::new(q.clone(), qd.clone())).unwrap();
            let fd = fd_jacobian(|q| map.position(&m, q).unwrap(), &q, 1e-6);
            prop_assert!((&eval.jac - fd).amax() < 1e-5);
            prop_assert!((&eval.xd - &eval.jac * &qd).amax() < 1e-12);
            let curv = fd_curvature(|q| map.position(&m, q).unwrap(), &q, &qd, 1e-4);
            prop_assert!((&eval.curvature - curv).amax() < 1e-5 * (1.0 + eval.curvature.amax()));
        }
    }

    #[test]
    fn pose_targets_equivariant(p in sym_vec(3, 1.0), e in sym_vec(3, 3.0), t in sym_vec(3, 1.0), r in sym_vec(3, 3.0)) {
        let m = desk();
        let palm = palm(&m);
        let (pos, euler) = (Vector3::from_column_slice(&p), Vector3::from_column_slice(&e));
        let rot_t = Rotation3::from_euler_angles(r[0], r[1], r[2]);
        let trans_t = Vector3::from_column_slice(&t);
        let base = palm.pose_to_targets(&pos, &euler);
        let composed = palm.targets_for_rotation(&(rot_t * pos + trans_t), &(rot_t * rotation_from_euler(&euler)));
        for k in 0..7 {
            let moved = rot_t * base.fixed_rows::<3>(3 * k) + trans_t;
            prop_assert!((composed.fixed_rows::<3>(3 * k) - moved).norm() < 1e-12);
        }
    }
}
