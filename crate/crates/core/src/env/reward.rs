//! Stateful grasp-and-lift reward and the episode reset predicate.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FingertipAggregation {
    #[default]
    Mean,
    Max,
    Sum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub w_to_obj: f64,
    pub w_lift: f64,
    pub w_lifted: f64,
    pub w_to_goal: f64,
    pub w_reached: f64,
    pub w_success: f64,
    /// `z_lifted = z_table + lift_height`.
    pub lift_height: f64,
    pub d_success: f64,
    pub t_success: usize,
    pub t_max: usize,
    pub fingertips: FingertipAggregation,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            w_to_obj: 5.0,
            w_lift: 50.0,
            w_lifted: 50.0,
            w_to_goal: 1000.0,
            w_reached: 40.0,
            w_success: 100.0,
            lift_height: 0.2,
            d_success: 0.1,
            t_success: 15,
            t_max: 150,
            fingertips: FingertipAggregation::Mean,
        }
    }
}

/// `minimize(e) = max(e_smallest − e, 0)`, remembering the smallest error so far.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MinTracker {
    smallest: Option<f64>,
}

impl MinTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn smallest(&self) -> Option<f64> {
        self.smallest
    }

    /// The first observation initializes the minimum and pays nothing.
    pub fn minimize(&mut self, e: f64) -> f64 {
        match self.smallest {
            None => {
                self.smallest = Some(e);
                0.0
            }
            Some(s) => {
                let r = (s - e).max(0.0);
                if e < s {
                    self.smallest = Some(e);
                }
                r
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeState {
    pub to_obj: MinTracker,
    pub lift: MinTracker,
    pub to_goal: MinTracker,
    pub lifted: bool,
    pub lifted_rewarded: bool,
    pub consecutive_reached: usize,
    /// Timestep of the next observation.
    pub t: usize,
    pub success: bool,
}

impl EpisodeState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// What the reward needs to see each step.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardObs {
    pub fingertips: Vec<Vector3<f64>>,
    pub object: Vector3<f64>,
    pub goal: Vector3<f64>,
    pub z_table: f64,
}

/// Weighted reward terms of one step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardTerms {
    pub to_obj: f64,
    pub lift: f64,
    pub lifted: f64,
    pub to_goal: f64,
    pub reached: f64,
    pub success: f64,
}

impl RewardTerms {
    pub fn total(&self) -> f64 {
        self.to_obj + self.lift + self.lifted + self.to_goal + self.reached + self.success
    }

    pub fn add(&mut self, other: &RewardTerms) {
        self.to_obj += other.to_obj;
        self.lift += other.lift;
        self.lifted += other.lifted;
        self.to_goal += other.to_goal;
        self.reached += other.reached;
        self.success += other.success;
    }
}

pub fn fingertip_distance(tips: &[Vector3<f64>], object: &Vector3<f64>, how: FingertipAggregation) -> f64 {
    let d = tips.iter().map(|t| (t - object).norm());
    match how {
        FingertipAggregation::Mean => d.sum::<f64>() / tips.len().max(1) as f64,
        FingertipAggregation::Max => d.fold(0.0, f64::max),
        FingertipAggregation::Sum => d.sum(),
    }
}

/// Computes the step reward and advances the episode state.
pub fn compute_reward(obs: &RewardObs, state: &mut EpisodeState, cfg: &RewardConfig) -> RewardTerms {
    let t = state.t;
    let z_lifted = obs.z_table + cfg.lift_height;
    let lifted_now = obs.object.z > z_lifted;
    let goal_dist = (obs.goal - obs.object).norm();

    let to_obj = state
        .to_obj
        .minimize(fingertip_distance(&obs.fingertips, &obs.object, cfg.fingertips));
    let lift = state.lift.minimize(z_lifted - obs.object.z) * if lifted_now { 0.0 } else { 1.0 };
    let to_goal = state.to_goal.minimize(goal_dist) * if lifted_now { 1.0 } else { 0.0 };

    let mut lifted = 0.0;
    if lifted_now {
        state.lifted = true;
        if !state.lifted_rewarded {
            state.lifted_rewarded = true;
            lifted = 1.0;
        }
    }

    let reached = goal_dist < cfg.d_success;
    state.consecutive_reached = if reached { state.consecutive_reached + 1 } else { 0 };
    let mut success = 0.0;
    if reached && state.consecutive_reached == cfg.t_success {
        state.success = true;
        success = cfg.t_max.saturating_sub(t) as f64;
    }
    state.t += 1;

    RewardTerms {
        to_obj: cfg.w_to_obj * to_obj,
        lift: cfg.w_lift * lift,
        lifted: cfg.w_lifted * lifted,
        to_goal: cfg.w_to_goal * to_goal,
        reached: cfg.w_reached * if reached { 1.0 } else { 0.0 },
        success: cfg.w_success * success,
    }
}

/// Object below the table, success awarded, or timestep past the limit.
pub fn check_reset(object: &Vector3<f64>, z_table: f64, state: &EpisodeState, t: usize, cfg: &RewardConfig) -> bool {
    object.z < z_table || state.success || t > cfg.t_max
}
