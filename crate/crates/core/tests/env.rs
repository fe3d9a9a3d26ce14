mod common;

use common::*;
use fabricore::engine::ActionCommand;
use fabricore::env::*;
use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn wrench_fire_rate_and_magnitude() {
    let mut r = rng(1);
    let cfg = WrenchConfig::default();
    let inertia = Matrix3::from_diagonal(&Vector3::new(1e-4, 2e-4, 3e-4));
    let n = 10_000;
    let mut fired = 0;
    for _ in 0..n {
        if let Some(w) = sample_wrench(&mut r, 0.1, &inertia, &cfg) {
            fired += 1;
            assert!((w.force.norm() - 5.0).abs() < 1e-12);
            let u = inertia.try_inverse().unwrap() * w.torque / cfg.tau_scale;
            assert!((u.norm() - 1.0).abs() < 1e-12);
        }
    }
    let rate = fired as f64 / n as f64;
    assert!((rate - 0.1).abs() <= 0.01, "rate {rate}");
}

#[test]
fn pose_noise_std_and_unit_quaternions() {
    let mut r = rng(2);
    let cfg = PoseNoiseConfig::default();
    let pose = Pose { position: Vector3::new(0.1, 0.2, 0.3), orientation: UnitQuaternion::from_euler_angles(0.3, -0.2, 1.0) };
    let n = 100_000;
    let mut sum = Vector3::zeros();
    let mut sq = Vector3::zeros();
    for _ in 0..n {
        // each draw is its own episode
        let corr = sample_correlated_pose_noise(&mut r, &cfg);
        let noisy = apply_pose_noise(&pose, &corr, &mut r, &cfg);
        assert!((noisy.orientation.into_inner().norm() - 1.0).abs() < 1e-10);
        let d = noisy.position - pose.position;
        sum += d;
        sq += d.component_mul(&d);
    }
    let expected = (0.02f64.powi(2) + 0.02f64.powi(2)).sqrt();
    for i in 0..3 {
        let mean = sum[i] / n as f64;
        let std = (sq[i] / n as f64 - mean * mean).sqrt();
        assert!((std - expected).abs() / expected < 0.02, "axis {i}: {std}");
    }
}

#[test]
fn correlated_draw_is_shared_within_episode() {
    let mut r = rng(3);
    let cfg = PoseNoiseConfig { sigma_xyz_uncorr: 0.0, sigma_rpy_uncorr: 0.0, ..Default::default() };
    let corr = sample_correlated_pose_noise(&mut r, &cfg);
    let a = apply_pose_noise(&Pose::identity(), &corr, &mut r, &cfg);
    let b = apply_pose_noise(&Pose::identity(), &corr, &mut r, &cfg);
    assert_eq!(a.position, b.position);
    assert!(a.orientation.angle_to(&b.orientation) < 1e-12);
}

#[test]
fn dr_samples_within_table() {
    let spec = DrSpec::default();
    let mut r = rng(4);
    let mut stiffness = Vec::new();
    for _ in 0..10_000 {
        let draw = sample_domain_randomization(&mut r, &spec).unwrap();
        assert_eq!(draw.len(), spec.params.len());
        for (p, s) in spec.params.iter().zip(&draw) {
            if p.distribution != DrDistribution::Gaussian {
                assert!(s.value >= p.range[0] && s.value <= p.range[1], "{}/{}", p.group, p.parameter);
            }
            if p.group == "robot" && p.parameter == "joint_stiffness" {
                stiffness.push(s.value);
            }
        }
    }
    stiffness.sort_by(f64::total_cmp);
    let median = stiffness[stiffness.len() / 2];
    let geometric_mean = (0.5f64 * 2.0).sqrt();
    assert!((median / geometric_mean - 1.0).abs() < 0.03, "median {median}");
}

#[test]
fn dr_gaussian_rows_use_mean_and_std() {
    let spec = DrSpec::default().group("environment");
    let mut r = rng(5);
    let vals: Vec<f64> = (0..20_000).map(|_| sample_domain_randomization(&mut r, &spec).unwrap()[0].value).collect();
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64).sqrt();
    assert!(mean.abs() < 0.02);
    assert!((std - 0.5).abs() < 0.02);
}

#[test]
fn dr_empty_group_and_bad_rows() {
    let mut r = rng(6);
    assert!(sample_domain_randomization(&mut r, &DrSpec::default().group("none")).unwrap().is_empty());
    let mut spec = DrSpec::default();
    spec.params[0].range = [3.0, 0.3];
    assert!(sample_domain_randomization(&mut r, &spec).is_err());
}

#[test]
fn depth_dropout_rate() {
    let cfg = DepthAugConfig { p_dropout: 0.003, ..DepthAugConfig::disabled() };
    let mut r = rng(7);
    let px = cfg.width * cfg.height;
    let images = 1_000_000usize.div_ceil(px);
    let mut dropped = 0;
    for _ in 0..images {
        let mut img = vec![1.0; px];
        let rep = depth_augment(&mut img, &mut r, &cfg).unwrap();
        assert_eq!(img.iter().filter(|v| **v == 0.0).count(), rep.dropout);
        dropped += rep.dropout;
    }
    let rate = dropped as f64 / (images * px) as f64;
    assert!((rate - 0.003).abs() <= 0.0005, "rate {rate}");
}

#[test]
fn depth_stick_count() {
    let cfg = DepthAugConfig { p_stick: 0.0025, ..DepthAugConfig::disabled() };
    let mut r = rng(8);
    let px = cfg.width * cfg.height;
    let images = 10_000;
    let mut img = vec![1.0; px];
    let mut sticks = 0;
    for _ in 0..images {
        let rep = depth_augment(&mut img, &mut r, &cfg).unwrap();
        assert!(rep.stick_pixels <= rep.sticks * cfg.stick_max_length * cfg.stick_max_width);
        sticks += rep.sticks;
    }
    let expected = cfg.p_stick * (px * images) as f64;
    assert!((sticks as f64 - expected).abs() / expected < 0.2);
}

#[test]
fn depth_values_stay_in_range() {
    let cfg = DepthAugConfig::default();
    let mut r = rng(9);
    let mut img: Vec<f64> = (0..cfg.width * cfg.height).map(|i| 0.2 + (i % 300) as f64 / 150.0).collect();
    depth_augment(&mut img, &mut r, &cfg).unwrap();
    let [lo, hi] = cfg.depth_range;
    // sensor noise quantizes around the clamped value, randu stays inside its own range
    assert!(img.iter().all(|v| *v == 0.0 || (*v >= lo - 0.05 && *v <= hi + 0.05)));
}

fn desk_setup() -> (fabricore::scenario::Scenario, Vector3<f64>) {
    (scenario("desk_random.json"), Vector3::new(0.7, 0.0, 0.0))
}

#[test]
fn initial_state_bounds_and_upright_fraction() {
    let (scn, offset) = desk_setup();
    let model = scn.engine.model();
    let cfg = InitialStateConfig::default();
    let mut r = rng(10);
    let n = 10_000;
    let mut upright = 0;
    let (lo, hi) = (model.lower_limits(), model.upper_limits());
    for _ in 0..n {
        let s = sample_initial_state(&mut r, model, scn.engine.world(), &scn.initial.q, &offset, &cfg).unwrap();
        let p = s.object.position - offset;
        for i in 0..3 {
            assert!(p[i] >= cfg.object_low[i] && p[i] <= cfg.object_high[i]);
        }
        for j in 0..model.dof() {
            let half = cfg.joint_fraction * (hi[j] - lo[j]);
            assert!(s.q[j] >= lo[j] && s.q[j] <= hi[j]);
            assert!((s.q[j] - scn.initial.q[j]).abs() <= half + 1e-12);
            assert!(s.qd[j].abs() <= cfg.qd_range);
        }
        if s.upright {
            upright += 1;
            let up = s.object.orientation * Vector3::z();
            assert!((up - Vector3::z()).norm() < 1e-12);
        }
    }
    let frac = upright as f64 / n as f64;
    assert!((frac - 0.5).abs() <= 0.02, "upright fraction {frac}");
}

#[test]
fn initial_state_exhaustion() {
    let (scn, offset) = desk_setup();
    let model = scn.engine.model();
    let world = fabricore::collision::World::new(vec![fabricore::collision::Obstacle::Sphere { center: [0.0, 0.0, 0.0], radius: 10.0 }]).unwrap();
    let cfg = InitialStateConfig { max_tries: 50, ..Default::default() };
    let err = sample_initial_state(&mut rng(11), model, &world, &scn.initial.q, &offset, &cfg).unwrap_err();
    assert!(matches!(err, SampleError::Exhausted(50)));
}

#[test]
fn samplers_reproducible() {
    let (scn, offset) = desk_setup();
    let model = scn.engine.model();
    let run = |seed| {
        let mut r = rng(seed);
        let s = sample_initial_state(&mut r, model, scn.engine.world(), &scn.initial.q, &offset, &InitialStateConfig::default()).unwrap();
        let w = sample_wrench(&mut r, 0.2, &Matrix3::identity(), &WrenchConfig { p: 1.0, ..Default::default() });
        let dr = sample_domain_randomization(&mut r, &DrSpec::default()).unwrap();
        let mut img = vec![1.0; 160 * 120];
        depth_augment(&mut img, &mut r, &DepthAugConfig::default()).unwrap();
        (s.q, s.object.position, w.map(|w| w.force), dr, img)
    };
    assert_eq!(run(12), run(12));
    assert_ne!(run(12).0, run(13).0);
}

fn tips_around(c: Vector3<f64>, r: f64) -> Vec<Vector3<f64>> {
    (0..4).map(|k| c + Vector3::new(r * (k as f64).cos(), r * (k as f64).sin(), 0.0)).collect()
}

#[test]
fn success_at_step_100() {
    let cfg = RewardConfig::default();
    let goal = Vector3::new(0.0, 0.0, 0.5);
    let mut state = EpisodeState::new();
    let mut last = RewardTerms::default();
    for t in 0..=100 {
        let object = if t >= 86 { goal } else { Vector3::new(0.0, 0.0, 0.3) };
        last = compute_reward(&RewardObs { fingertips: tips_around(object, 0.02), object, goal, z_table: 0.0 }, &mut state, &cfg);
        if t < 100 {
            assert_eq!(last.success, 0.0);
        }
    }
    assert_eq!(last.success, 5000.0);
    assert!(state.success);
    assert!(check_reset(&goal, 0.0, &state, 100, &cfg));
}

#[test]
fn reset_predicate() {
    let cfg = RewardConfig::default();
    let s = EpisodeState::new();
    assert!(check_reset(&Vector3::new(0.0, 0.0, -0.01), 0.0, &s, 3, &cfg));
    assert!(check_reset(&Vector3::new(0.0, 0.0, 0.1), 0.0, &s, 151, &cfg));
    assert!(!check_reset(&Vector3::new(0.0, 0.0, 0.1), 0.0, &s, 150, &cfg));
}

#[test]
fn unlifted_object_earns_no_goal_reward() {
    let cfg = RewardConfig::default();
    let mut state = EpisodeState::new();
    for k in 0..50 {
        let object = Vector3::new(0.01 * k as f64, 0.0, 0.05);
        let r = compute_reward(&RewardObs { fingertips: tips_around(object, 0.1), object, goal: Vector3::new(0.4, 0.0, 0.05), z_table: 0.0 }, &mut state, &cfg);
        assert_eq!(r.to_goal, 0.0);
    }
}

#[test]
fn synthetic_episode_bounds() {
    let cfg = RewardConfig::default();
    let report = audit_episode(&SyntheticEpisode::default().generate(), &cfg);
    assert!(report.totals.to_obj <= 2.5 + 1e-12);
    assert!(report.totals.lift <= 10.0 + 1e-12);
    assert_eq!(report.totals.lifted, 50.0);
    assert!(report.success_at.is_some());
    assert!(report.totals.success > report.totals.reached);
}

fn obs_strategy() -> impl Strategy<Value = Vec<(Vec<f64>, Vec<f64>)>> {
    prop::collection::vec((sym_vec(12, 0.5), prop::collection::vec(0.0..0.6f64, 3)), 1..160)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn reward_terms_nonnegative_and_bounded(seq in obs_strategy(), goal in unit_vec(3)) {
        let cfg = RewardConfig::default();
        let goal = Vector3::new(goal[0] - 0.5, goal[1] - 0.5, 0.1 + 0.4 * goal[2]);
        let mut state = EpisodeState::new();
        let mut totals = RewardTerms::default();
        let mut first_dist = None;
        let mut first_lift_err = None;
        for (tips, obj) in &seq {
            let object = Vector3::new(obj[0] - 0.3, obj[1] - 0.3, obj[2]);
            let fingertips: Vec<_> = (0..4).map(|k| object + Vector3::new(tips[3 * k], tips[3 * k + 1], tips[3 * k + 2])).collect();
            first_dist.get_or_insert(fingertip_distance(&fingertips, &object, cfg.fingertips));
            first_lift_err.get_or_insert(cfg.lift_height - object.z);
            let r = compute_reward(&RewardObs { fingertips, object, goal, z_table: 0.0 }, &mut state, &cfg);
            for v in [r.to_obj, r.lift, r.lifted, r.to_goal, r.reached, r.success] {
                prop_assert!(v >= 0.0);
            }
            totals.add(&r);
        }
        prop_assert!(totals.to_obj <= cfg.w_to_obj * first_dist.unwrap() + 1e-12);
        prop_assert!(totals.lift <= cfg.w_lift * first_lift_err.unwrap().max(0.0) + 1e-12);
        prop_assert!(totals.lift <= cfg.w_lift * cfg.lift_height + 1e-12);
        prop_assert!(totals.lifted == 0.0 || totals.lifted == cfg.w_lifted);
    }

    #[test]
    fn minimize_telescopes(es in prop::collection::vec(0.0..1.0f64, 1..100)) {
        let mut m = MinTracker::new();
        let total: f64 = es.iter().map(|e| m.minimize(*e)).sum();
        let min = es.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!((total - (es[0] - min)).abs() < 1e-12);
    }

    #[test]
    fn success_outweighs_reached(t in 14usize..150) {
        let cfg = RewardConfig::default();
        let remaining = (cfg.t_max - t) as f64;
        prop_assume!(remaining > 0.0);
        prop_assert!(cfg.w_success * remaining > cfg.w_reached * remaining);
    }

    #[test]
    fn bin_pack_phases_follow_allowed_edges(steps in prop::collection::vec((0.0..0.3f64, 0.2..1.0f64, 0.0..0.6f64), 1..200)) {
        use Phase::*;
        let cfg = BinPackConfig::default();
        let mut s = BinPackState::default();
        let mut clock = 0.0;
        for (z, palm, dt) in steps {
            clock += dt;
            let before = s.phase;
            let input = BinPackInput { object_z: z, palm_height: palm, clock, policy: ActionCommand::from_slice(&[0.5; 11]).unwrap() };
            bin_pack_step(&input, &mut s, &cfg);
            let ok = before == s.phase || matches!(
                (before, s.phase),
                (Grasp, Transport) | (Transport, Release) | (Release, Return) | (Return, Grasp) | (FaultRecover, Grasp) | (_, FaultRecover)
            );
            prop_assert!(ok, "{:?} -> {:?}", before, s.phase);
        }
    }
}

#[test]
fn every_phase_reachable() {
    use Phase::*;
    let cfg = BinPackConfig::default();
    let mut s = BinPackState::default();
    let mut seen = vec![s.phase];
    let policy = ActionCommand::from_slice(&[0.5; 11]).unwrap();
    let script = [(0.0, 0.3, 0.0), (0.2, 0.3, 0.1), (0.2, 0.3, 2.2), (0.0, 0.3, 2.8), (0.0, 0.3, 4.4), (0.0, 0.9, 4.5), (0.0, 0.3, 7.0)];
    for (z, palm, clock) in script {
        bin_pack_step(&BinPackInput { object_z: z, palm_height: palm, clock, policy }, &mut s, &cfg);
        seen.push(s.phase);
    }
    assert_eq!(seen, vec![Grasp, Grasp, Transport, Release, Return, Grasp, FaultRecover, Grasp]);
}
