//! Replays recorded (or synthetic) episodes through the reward and reset
//! logic and keeps a per-term ledger.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::reward::{check_reset, compute_reward, EpisodeState, RewardConfig, RewardObs, RewardTerms};

#[derive(Debug, Error)]
pub enum EpisodeCsvError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unexpected header; expected `{0}`")]
    Header(String),
}

pub const EPISODE_COLUMNS: usize = 12 + 3 + 3 + 1;

pub fn episode_header() -> String {
    let mut cols = Vec::with_capacity(EPISODE_COLUMNS);
    for i in 0..4 {
        for a in ["x", "y", "z"] {
            cols.push(format!("tip{i}_{a}"));
        }
    }
    for p in ["obj", "goal"] {
        for a in ["x", "y", "z"] {
            cols.push(format!("{p}_{a}"));
        }
    }
    cols.push("z_table".into());
    cols.join(",")
}

pub fn write_episode_csv(rows: &[RewardObs]) -> String {
    let mut out = episode_header();
    out.push('\n');
    for r in rows {
        let mut vals: Vec<f64> = r.fingertips.iter().flat_map(|t| t.iter().copied()).collect();
        vals.extend(r.object.iter());
        vals.extend(r.goal.iter());
        vals.push(r.z_table);
        let line: Vec<String> = vals.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn read_episode_csv(text: &str) -> Result<Vec<RewardObs>, EpisodeCsvError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let header = episode_header();
    match lines.next() {
        Some((_, h)) if h.trim() == header => {}
        _ => return Err(EpisodeCsvError::Header(header)),
    }
    lines
        .map(|(i, l)| {
            let vals = l
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| EpisodeCsvError::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            if vals.len() != EPISODE_COLUMNS || vals.iter().any(|v| !v.is_finite()) {
                return Err(EpisodeCsvError::Parse {
                    line: i + 1,
                    message: format!("expected {EPISODE_COLUMNS} finite values"),
                });
            }
            let v3 = |k: usize| Vector3::new(vals[k], vals[k + 1], vals[k + 2]);
            Ok(RewardObs {
                fingertips: (0..4).map(|t| v3(3 * t)).collect(),
                object: v3(12),
                goal: v3(15),
                z_table: vals[18],
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub steps: Vec<RewardTerms>,
    pub totals: RewardTerms,
    /// Step index at which the reset predicate fired, if it did.
    pub reset_at: Option<usize>,
    pub success_at: Option<usize>,
}

/// Runs the reward over `rows` from a fresh episode, stopping at the first reset.
pub fn audit_episode(rows: &[RewardObs], cfg: &RewardConfig) -> AuditReport {
    let mut state = EpisodeState::new();
    let mut steps = Vec::with_capacity(rows.len());
    let mut totals = RewardTerms::default();
    let mut reset_at = None;
    let mut success_at = None;
    for (i, obs) in rows.iter().enumerate() {
        let t = state.t;
        let r = compute_reward(obs, &mut state, cfg);
        if r.success > 0.0 || (state.success && success_at.is_none()) {
            success_at = Some(i);
        }
        totals.add(&r);
        steps.push(r);
        if check_reset(&obs.object, obs.z_table, &state, t, cfg) {
            reset_at = Some(i);
            break;
        }
    }
    AuditReport {
        steps,
        totals,
        reset_at,
        success_at,
    }
}

/// Parameters of a scripted approach, lift, carry and hold episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticEpisode {
    /// Initial mean fingertip-to-object distance (m).
    pub start_distance: f64,
    /// Fingertip spread around the grasp center (m).
    pub tip_radius: f64,
    pub z_table: f64,
    pub object_start: [f64; 3],
    pub goal: [f64; 3],
    pub approach_steps: usize,
    pub lift_steps: usize,
    /// Object height above the table at the end of the lift.
    pub lift_height: f64,
    pub carry_steps: usize,
    pub hold_steps: usize,
}

impl Default for SyntheticEpisode {
    fn default() -> Self {
        Self {
            start_distance: 0.5,
            tip_radius: 0.03,
            z_table: 0.0,
            object_start: [0.0, 0.0, 0.05],
            goal: [0.1, 0.2, 0.45],
            approach_steps: 30,
            lift_steps: 20,
            lift_height: 0.3,
            carry_steps: 25,
            hold_steps: 20,
        }
    }
}

impl SyntheticEpisode {
    /// Produces the observation sequence. The grasp center approaches the
    /// object along +x, then the object rides with the hand.
    pub fn generate(&self) -> Vec<RewardObs> {
        let r = self.tip_radius.min(self.start_distance);
        let c0 = (self.start_distance * self.start_distance - r * r).max(0.0).sqrt();
        let tips_at = |center: Vector3<f64>| -> Vec<Vector3<f64>> {
            (0..4)
                .map(|k| {
                    let a = k as f64 * std::f64::consts::FRAC_PI_2;
                    center + Vector3::new(0.0, r * a.cos(), r * a.sin())
                })
                .collect()
        };
        let goal = Vector3::from(self.goal);
        let start = Vector3::from(self.object_start);
        let lifted = Vector3::new(start.x, start.y, self.z_table + self.lift_height);
        let lerp = |a: Vector3<f64>, b: Vector3<f64>, i: usize, n: usize| a + (b - a) * (i as f64 / n.max(1) as f64);
        let mut rows = Vec::new();
        let mut push = |obj: Vector3<f64>, center: Vector3<f64>| {
            rows.push(RewardObs {
                fingertips: tips_at(center),
                object: obj,
                goal,
                z_table: self.z_table,
            })
        };
        for i in 0..=self.approach_steps {
            let off = c0 * (1.0 - i as f64 / self.approach_steps.max(1) as f64);
            push(start, start + Vector3::new(off, 0.0, 0.0));
        }
        for i in 1..=self.lift_steps {
            let o = lerp(start, lifted, i, self.lift_steps);
            push(o, o);
        }
        for i in 1..=self.carry_steps {
            let o = lerp(lifted, goal, i, self.carry_steps);
            push(o, o);
        }
        for _ in 0..self.hold_steps {
            push(goal, goal);
        }
        rows
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let rows = SyntheticEpisode::default().generate();
        let back = read_episode_csv(&write_episode_csv(&rows)).unwrap();
        assert_eq!(rows, back);
    }

    #[test]
    fn initial_mean_distance_matches_request() {
        let rows = SyntheticEpisode::default().generate();
        let d = super::super::reward::fingertip_distance(&rows[0].fingertips, &rows[0].object, Default::default());
        assert!((d - 0.5).abs() < 1e-12);
    }
}
