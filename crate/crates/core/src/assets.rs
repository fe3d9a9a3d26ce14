//! Bundled robot models and data, compiled into the library.

pub const PLANAR_3DOF: &str = include_str!("../assets/planar_3dof.json");
pub const DESK_23DOF: &str = include_str!("../assets/desk_23dof.json");
pub const HAND_16DOF: &str = include_str!("../assets/hand_16dof.json");
/// Retargeted synthetic grasps, one 16-joint sample per row.
pub const HAND_DATASET: &str = include_str!("../assets/hand_dataset.csv");
/// 5-component eigengrasp basis fitted to [`HAND_DATASET`].
pub const HAND_BASIS: &str = include_str!("../assets/hand_basis.json");
