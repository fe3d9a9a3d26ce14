mod common;

use common::*;
use fabricore::scenario::{Scenario, ScenarioError};
use fabricore::trajectory::Trajectory;

#[test]
fn bundled_scenarios_load() {
    for name in ["planar_3dof.json", "desk_random.json", "desk_adversarial.json", "desk_script.json"] {
        let scn = scenario(name);
        assert_eq!(scn.initial.q.len(), scn.engine.model().dof(), "{name}");
        assert!(scn.file.steps > 0);
    }
}

#[test]
fn unknown_keys_rejected() {
    let text = std::fs::read_to_string(scenario_path("planar_3dof.json")).unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    doc["fabric"]["dampng"] = serde_json::json!(1.0);
    let base = scenario_path("");
    let err = Scenario::from_str_in(&doc.to_string(), &base).unwrap_err();
    assert!(matches!(err, ScenarioError::Schema { .. }));
    assert!(err.to_string().contains("dampng"));
}

#[test]
fn invalid_initial_state_rejected() {
    let text = std::fs::read_to_string(scenario_path("planar_3dof.json")).unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    doc["initial"]["q"] = serde_json::json!([0.0, 0.3]);
    assert!(Scenario::from_str_in(&doc.to_string(), &scenario_path("")).is_err());
}

#[test]
fn trajectory_csv_round_trip() {
    let scn = scenario("desk_random.json");
    let mut src = scn.action_source(1, 0);
    let (traj, err) = scn.engine.run_policy_rate(scn.initial.clone(), |p, _| Ok::<_, String>(src.next_action(p)), 40);
    assert!(err.is_none());
    let csv = traj.to_csv();
    assert_eq!(csv.lines().count(), 42);
    assert!(csv.starts_with("t,q_0,"));
    assert_eq!(Trajectory::from_csv(&csv).unwrap(), traj);
    assert!(Trajectory::from_csv("t,q_0\n1,2\n").is_err());
}

#[test]
fn random_sources_are_seeded() {
    let scn = scenario("desk_random.json");
    let draw = |seed, stream| {
        let mut s = scn.action_source(seed, stream);
        (0..20).map(|p| s.next_action(p)).collect::<Vec<_>>()
    };
    assert_eq!(draw(4, 0), draw(4, 0));
    assert_ne!(draw(4, 0), draw(4, 1));
    assert_ne!(draw(4, 0), draw(5, 0));
}
