//! Phase logic for continuous pick-and-place on top of a grasping policy.

use serde::{Deserialize, Serialize};

use crate::engine::{ActionCommand, PCA_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Grasp,
    Transport,
    Release,
    Return,
    FaultRecover,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BinPackConfig {
    /// Estimated object height above which the grasp counts as lifted (m).
    pub lift_threshold: f64,
    /// Palm height that signals a collapsed policy (m).
    pub fault_palm_height: f64,
    pub transport_duration: f64,
    pub release_duration: f64,
    pub return_duration: f64,
    pub fault_duration: f64,
    pub bin_palm_position: [f64; 3],
    pub bin_palm_euler: [f64; 3],
    pub nominal_palm_position: [f64; 3],
    pub nominal_palm_euler: [f64; 3],
    pub nominal_pca: [f64; PCA_DIM],
    pub open_pca: [f64; PCA_DIM],
}

impl Default for BinPackConfig {
    fn default() -> Self {
        let euler = [std::f64::consts::PI, 0.785, std::f64::consts::PI];
        Self {
            lift_threshold: 0.1,
            fault_palm_height: 0.8,
            transport_duration: 2.0,
            release_duration: 0.5,
            return_duration: 1.5,
            fault_duration: 2.0,
            bin_palm_position: [0.4, -0.55, 0.4],
            bin_palm_euler: euler,
            nominal_palm_position: [0.75, 0.0, 0.35],
            nominal_palm_euler: euler,
            nominal_pca: [0.0; PCA_DIM],
            open_pca: [-1.0, 0.0, 0.0, 0.0, 0.0],
        }
    }
}

impl BinPackConfig {
    fn nominal(&self) -> ActionCommand {
        ActionCommand {
            palm_position: self.nominal_palm_position,
            palm_euler: self.nominal_palm_euler,
            pca: self.nominal_pca,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinPackInput {
    /// Estimated object height above the table (m).
    pub object_z: f64,
    pub palm_height: f64,
    /// Seconds since start.
    pub clock: f64,
    pub policy: ActionCommand,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinPackState {
    pub phase: Phase,
    pub phase_start: f64,
    pub frozen_pca: [f64; PCA_DIM],
    pub last_pca: Option<[f64; PCA_DIM]>,
}

impl Default for BinPackState {
    fn default() -> Self {
        Self {
            phase: Phase::Grasp,
            phase_start: 0.0,
            frozen_pca: [0.0; PCA_DIM],
            last_pca: None,
        }
    }
}

impl BinPackState {
    fn enter(&mut self, phase: Phase, clock: f64) {
        self.phase = phase;
        self.phase_start = clock;
    }
}

/// Advances the machine one tick and returns the command for the fabric.
pub fn bin_pack_step(input: &BinPackInput, state: &mut BinPackState, cfg: &BinPackConfig) -> ActionCommand {
    let t = input.clock;
    let elapsed = t - state.phase_start;

    if state.phase != Phase::FaultRecover && input.palm_height > cfg.fault_palm_height {
        state.enter(Phase::FaultRecover, t);
    } else {
        match state.phase {
            Phase::Grasp if input.object_z > cfg.lift_threshold => {
                state.frozen_pca = state.last_pca.unwrap_or(input.policy.pca);
                state.enter(Phase::Transport, t);
            }
            Phase::Transport if elapsed >= cfg.transport_duration => state.enter(Phase::Release, t),
            Phase::Release if elapsed >= cfg.release_duration => state.enter(Phase::Return, t),
            Phase::Return if elapsed >= cfg.return_duration => state.enter(Phase::Grasp, t),
            Phase::FaultRecover if elapsed >= cfg.fault_duration => state.enter(Phase::Grasp, t),
            _ => {}
        }
    }

    let cmd = match state.phase {
        Phase::Grasp => input.policy,
        Phase::Transport => ActionCommand {
            palm_position: cfg.bin_palm_position,
            palm_euler: cfg.bin_palm_euler,
            pca: state.frozen_pca,
        },
        Phase::Release => ActionCommand {
            palm_position: cfg.bin_palm_position,
            palm_euler: cfg.bin_palm_euler,
            pca: cfg.open_pca,
        },
        Phase::Return | Phase::FaultRecover => cfg.nominal(),
    };
    state.last_pca = Some(cmd.pca);
    cmd
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input(object_z: f64, palm_height: f64, clock: f64, pca0: f64) -> BinPackInput {
        BinPackInput {
            object_z,
            palm_height,
            clock,
            policy: ActionCommand {
                palm_position: [0.7, 0.0, 0.2],
                palm_euler: [0.0; 3],
                pca: [pca0, 0.0, 0.0, 0.0, 0.0],
            },
        }
    }

    #[test]
    fn lift_freezes_last_issued_pca() {
        let cfg = BinPackConfig::default();
        let mut s = BinPackState::default();
        bin_pack_step(&input(0.0, 0.3, 0.0, 0.7), &mut s, &cfg);
        let cmd = bin_pack_step(&input(0.2, 0.3, 0.1, -0.4), &mut s, &cfg);
        assert_eq!(s.phase, Phase::Transport);
        assert_eq!(cmd.pca[0], 0.7);
        assert_eq!(cmd.palm_position, cfg.bin_palm_position);
        // Policy output is ignored while transporting.
        let cmd = bin_pack_step(&input(0.2, 0.3, 0.5, 0.9), &mut s, &cfg);
        assert_eq!(cmd.pca[0], 0.7);
    }

    #[test]
    fn timed_phases_and_fault() {
        let cfg = BinPackConfig::default();
        let mut s = BinPackState::default();
        bin_pack_step(&input(0.2, 0.3, 0.0, 0.0), &mut s, &cfg);
        bin_pack_step(&input(0.2, 0.3, 2.0, 0.0), &mut s, &cfg);
        assert_eq!(s.phase, Phase::Release);
        let cmd = bin_pack_step(&input(0.2, 0.3, 2.2, 0.0), &mut s, &cfg);
        assert_eq!(cmd.pca, cfg.open_pca);
        bin_pack_step(&input(0.0, 0.3, 2.5, 0.0), &mut s, &cfg);
        assert_eq!(s.phase, Phase::Return);
        bin_pack_step(&input(0.0, 0.3, 4.0, 0.0), &mut s, &cfg);
        assert_eq!(s.phase, Phase::Grasp);

        let cmd = bin_pack_step(&input(0.0, 1.0, 4.1, 0.0), &mut s, &cfg);
        assert_eq!(s.phase, Phase::FaultRecover);
        assert_eq!(cmd, cfg.nominal());
        bin_pack_step(&input(0.0, 1.0, 5.0, 0.0), &mut s, &cfg);
        assert_eq!(s.phase, Phase::FaultRecover);
        bin_pack_step(&input(0.0, 0.3, 6.1, 0.0), &mut s, &cfg);
        assert_eq!(s.phase, Phase::Grasp);
    }
}
