//! Geometric-fabric motion generation for arm-hand systems, with an
//! eigengrasp pipeline and simulator-agnostic RL environment arithmetic.

pub mod assets;
pub mod collision;
pub mod kinematics;
pub mod retarget;
pub mod taskmaps;
pub mod terms;
pub mod engine;
pub mod trajectory;
pub mod scenario;
pub mod env;
pub mod api;
