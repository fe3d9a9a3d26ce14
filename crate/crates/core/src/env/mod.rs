//! MDP arithmetic for grasp-and-lift training that does not depend on a
//! physics simulator. Callers own all episode state and random generators.

pub mod audit;
pub mod bin_pack;
pub mod depth;
pub mod reward;
pub mod sampling;

pub use audit::{audit_episode, read_episode_csv, write_episode_csv, AuditReport, SyntheticEpisode};
pub use bin_pack::{bin_pack_step, BinPackConfig, BinPackInput, BinPackState, Phase};
pub use depth::{depth_augment, DepthAugConfig, DepthAugReport, DepthError, SensorNoiseConfig};
pub use reward::{
    check_reset, compute_reward, fingertip_distance, EpisodeState, FingertipAggregation, MinTracker, RewardConfig,
    RewardObs, RewardTerms,
};
pub use sampling::{
    apply_pose_noise, random_rotation, random_unit_vector, sample_correlated_pose_noise, sample_domain_randomization,
    sample_initial_state, sample_wrench, DrDistribution, DrOperation, DrParam, DrSample, DrSpec, InitialState,
    InitialStateConfig, Pose, PoseNoiseConfig, PoseNoiseDraw, SampleError, Wrench, WrenchConfig,
};
