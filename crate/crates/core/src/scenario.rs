//! Scenario files: robot, world, fabric gains, actions and outputs.

use std::path::{Path, PathBuf};

use nalgebra::{DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collision::{Obstacle, World, WorldError, DEFAULT_D_MIN};
use crate::engine::{Action, ActionCommand, ActionMode, EngineConfig, EngineError, FabricEngine, FabricState, ACTION_DIM, PCA_DIM};
use crate::kinematics::{KinematicModel, ModelError};
use crate::retarget::{PcaBasis, RetargetError};
use crate::taskmaps::PalmTaskmap;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid scenario {path}: {message}")]
    Schema { path: PathBuf, message: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("pca basis: {0}")]
    Basis(#[from] RetargetError),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldSpec {
    pub obstacles: Vec<Obstacle>,
    /// Self-collision sphere pairs by sphere name.
    pub self_pairs: Vec<[String; 2]>,
    pub d_min: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PalmSpec {
    pub frame: String,
    #[serde(default)]
    pub origin: [f64; 3],
    #[serde(default = "default_spread")]
    pub spread: f64,
}

fn default_spread() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcaSpec {
    pub basis: String,
    pub hand_offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub q: Vec<f64>,
    #[serde(default)]
    pub qd: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedAction {
    /// Time from which this action is issued, seconds.
    pub t: f64,
    pub action: Vec<f64>,
}

/// Uniform random targets, redrawn every `hold_pulls` action pulls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RandomActionConfig {
    pub hold_pulls: usize,
    pub palm_low: [f64; 3],
    pub palm_high: [f64; 3],
    pub euler_center: [f64; 3],
    pub euler_range: [f64; 3],
    pub pca_low: [f64; PCA_DIM],
    pub pca_high: [f64; PCA_DIM],
    /// Fraction of each joint range kept as margin for joint targets.
    pub joint_margin: f64,
}

impl Default for RandomActionConfig {
    fn default() -> Self {
        Self {
            hold_pulls: 15,
            palm_low: [0.4, -0.4, 0.1],
            palm_high: [0.9, 0.4, 0.6],
            euler_center: [0.0, 0.0, 0.0],
            euler_range: [0.5, 0.5, 0.5],
            pca_low: [-1.0; PCA_DIM],
            pca_high: [1.0; PCA_DIM],
            joint_margin: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ActionSpec {
    Script(Vec<ScriptedAction>),
    Random(RandomActionConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub trajectory: String,
    pub summary: String,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            trajectory: "trajectory.csv".into(),
            summary: "summary.json".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    /// Robot model path, relative to the scenario file.
    pub robot: String,
    #[serde(default)]
    pub world: WorldSpec,
    #[serde(default)]
    pub fabric: EngineConfig,
    #[serde(default)]
    pub palm: Option<PalmSpec>,
    #[serde(default)]
    pub pca: Option<PcaSpec>,
    /// Posture attractor goal; defaults to the initial configuration.
    #[serde(default)]
    pub posture: Option<Vec<f64>>,
    #[serde(default)]
    pub initial: Option<InitialSpec>,
    pub actions: ActionSpec,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_steps() -> usize {
    600
}

/// A scenario with every referenced file loaded and validated.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub engine: FabricEngine,
    pub initial: FabricState,
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_str_in(&text, base).map_err(|e| match e {
            ScenarioError::Schema { message, .. } => ScenarioError::Schema {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    /// Parses scenario text, resolving relative paths against `base`.
    pub fn from_str_in(text: &str, base: &Path) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(|e| ScenarioError::Schema {
            path: PathBuf::from("<text>"),
            message: e.to_string(),
        })?;
        Self::from_file(file, base)
    }

    pub fn from_file(file: ScenarioFile, base: &Path) -> Result<Self, ScenarioError> {
        let model = KinematicModel::from_json_file(base.join(&file.robot))?;
        let n = model.dof();

        let mut world = World::new(file.world.obstacles.clone())?;
        world.d_min = file.world.d_min.unwrap_or(DEFAULT_D_MIN);
        if !(world.d_min > 0.0) {
            return Err(ScenarioError::Invalid("world.d_min must be positive".into()));
        }
        let sphere_index = |name: &str| {
            model
                .spheres()
                .iter()
                .position(|s| s.name == name)
                .ok_or_else(|| ScenarioError::Invalid(format!("unknown collision sphere `{name}`")))
        };
        let pairs = file
            .world
            .self_pairs
            .iter()
            .map(|[a, b]| Ok((sphere_index(a)?, sphere_index(b)?)))
            .collect::<Result<Vec<_>, ScenarioError>>()?;
        let world = world.with_self_pairs(&model, pairs)?;

        let vector = |v: &[f64], what: &str| -> Result<DVector<f64>, ScenarioError> {
            if v.len() != n {
                return Err(ScenarioError::Invalid(format!("{what} has {} entries for {n} joints", v.len())));
            }
            Ok(DVector::from_column_slice(v))
        };
        let q0 = match &file.initial {
            Some(init) => vector(&init.q, "initial.q")?,
            None => model.mid_configuration(),
        };
        let qd0 = match file.initial.as_ref().and_then(|i| i.qd.as_ref()) {
            Some(qd) => vector(qd, "initial.qd")?,
            None => DVector::zeros(n),
        };
        model.check_q(&q0)?;
        if q0.iter().zip(model.lower_limits().iter().zip(model.upper_limits().iter())).any(|(q, (lo, hi))| q < lo || q > hi) {
            return Err(ScenarioError::Invalid("initial.q is outside the joint limits".into()));
        }
        let posture = match &file.posture {
            Some(p) => vector(p, "posture")?,
            None => q0.clone(),
        };

        let mut engine = FabricEngine::new(model, world, file.fabric.clone())?.with_posture(posture)?;
        if let Some(palm) = &file.palm {
            let map = PalmTaskmap::from_model(engine.model(), &palm.frame, Vector3::from(palm.origin), palm.spread)?;
            engine = engine.with_palm(map);
        }
        if let Some(pca) = &file.pca {
            let p = base.join(&pca.basis);
            let text = std::fs::read_to_string(&p).map_err(|source| ScenarioError::Io { path: p.clone(), source })?;
            let basis = PcaBasis::from_json_str(&text)?;
            engine = engine.with_pca(&basis, pca.hand_offset)?;
        }
        if file.fabric.mode == ActionMode::PcaPose && engine.palm().is_none() {
            return Err(ScenarioError::Invalid("pca_pose mode needs a `palm` section".into()));
        }
        let expected = match file.fabric.mode {
            ActionMode::PcaPose => ACTION_DIM,
            ActionMode::Cspace => n,
        };
        if let ActionSpec::Script(script) = &file.actions {
            if script.is_empty() {
                return Err(ScenarioError::Invalid("action script is empty".into()));
            }
            for (i, s) in script.iter().enumerate() {
                if s.action.len() != expected || s.action.iter().any(|v| !v.is_finite()) {
                    return Err(ScenarioError::Invalid(format!(
                        "script entry {i} must hold {expected} finite values"
                    )));
                }
            }
        }

        let mut initial = FabricState::at_rest(q0);
        initial.qd = qd0;
        Ok(Self { file, engine, initial })
    }

    /// The action source for one rollout; `stream` separates batch elements.
    pub fn action_source(&self, seed: u64, stream: u64) -> ActionSource {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        ActionSource {
            spec: self.file.actions.clone(),
            mode: self.file.fabric.mode,
            dt_pull: self.file.fabric.dt * self.file.fabric.action_repeat as f64,
            lower: self.engine.model().lower_limits().clone(),
            upper: self.engine.model().upper_limits().clone(),
            rng,
            current: None,
        }
    }
}

/// Produces one action per pull from a script or a seeded generator.
#[derive(Debug, Clone)]
pub struct ActionSource {
    spec: ActionSpec,
    mode: ActionMode,
    dt_pull: f64,
    lower: DVector<f64>,
    upper: DVector<f64>,
    rng: ChaCha8Rng,
    current: Option<Action>,
}

impl ActionSource {
    pub fn next_action(&mut self, pull: usize) -> Action {
        match &self.spec {
            ActionSpec::Script(script) => {
                let t = pull as f64 * self.dt_pull;
                // tolerate rounding in the pull clock
                let entry = script
                    .iter()
                    .rev()
                    .find(|s| s.t <= t + 1e-9)
                    .unwrap_or(&script[0]);
                self.to_action(&entry.action)
            }
            ActionSpec::Random(cfg) => {
                if self.current.is_none() || pull % cfg.hold_pulls.max(1) == 0 {
                    let cfg = cfg.clone();
                    self.current = Some(self.random_action(&cfg));
                }
                self.current.clone().expect("drawn above")
            }
        }
    }

    fn to_action(&self, v: &[f64]) -> Action {
        match self.mode {
            ActionMode::PcaPose => Action::Pose(ActionCommand::from_slice(v).expect("validated at load")),
            ActionMode::Cspace => Action::Joints(DVector::from_column_slice(v)),
        }
    }

    fn random_action(&mut self, cfg: &RandomActionConfig) -> Action {
        let rng = &mut self.rng;
        match self.mode {
            ActionMode::PcaPose => {
                let mut a = [0.0; ACTION_DIM];
                for i in 0..3 {
                    a[i] = uniform(rng, cfg.palm_low[i], cfg.palm_high[i]);
                    a[3 + i] = cfg.euler_center[i] + uniform(rng, -cfg.euler_range[i], cfg.euler_range[i]);
                }
                for i in 0..PCA_DIM {
                    a[6 + i] = uniform(rng, cfg.pca_low[i], cfg.pca_high[i]);
                }
                Action::Pose(ActionCommand::from_slice(&a).expect("finite"))
            }
            ActionMode::Cspace => {
                let target = DVector::from_fn(self.lower.len(), |j, _| {
                    let span = self.upper[j] - self.lower[j];
                    let m = cfg.joint_margin * span;
                    uniform(rng, self.lower[j] + m, self.upper[j] - m)
                });
                Action::Joints(target)
            }
        }
    }
}

fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}
