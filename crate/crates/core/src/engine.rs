//! Fabric composition, acceleration limiting and integration.

use log::warn;
use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collision::{query_with_centers, min_signed_distance, SphereQueries, World};
use crate::kinematics::{AttachedPoint, JointState, KinematicModel, ModelError};
use crate::retarget::PcaBasis;
use crate::taskmaps::{pca_taskmap, PalmTaskmap, TaskContext, TaskEval, Taskmap, TaskmapError};
use crate::terms::{
    attraction_forced, attraction_geometric_hd2, collision_forcing, collision_geometric, cspace_damping,
    joint_limit_repulsion, AttractionConfig, CollisionTermConfig, FabricTermOutput, JointLimitConfig,
};
use crate::trajectory::{Trajectory, TrajectoryRow};

/// Dimension of the pose-plus-eigengrasp action.
pub const ACTION_DIM: usize = 11;
pub const PCA_DIM: usize = 5;
/// Upper end of the α search interval.
pub const ALPHA_MAX: f64 = 1e8;
pub const ALPHA_TOL: f64 = 1e-4;
pub const ALPHA_ITERATIONS: usize = 60;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("fabric term `{term}` produced a non-finite value")]
    NonFiniteTerm { term: String },
    #[error("resolution failed: {0}")]
    Resolve(String),
    #[error("invalid engine configuration: {0}")]
    Config(String),
    #[error("action does not fit the engine: {0}")]
    Action(String),
    #[error("action source failed at pull {pull}: {message}")]
    ActionSource { pull: usize, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Taskmap(#[from] TaskmapError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ActionMode {
    /// Palm pose plus eigengrasp coordinates.
    #[default]
    PcaPose,
    /// Direct joint-position targets.
    Cspace,
}

/// Palm position, palm extrinsic XYZ Euler angles and eigengrasp target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionCommand {
    pub palm_position: [f64; 3],
    pub palm_euler: [f64; 3],
    pub pca: [f64; PCA_DIM],
}

impl ActionCommand {
    pub fn from_slice(a: &[f64]) -> Result<Self, EngineError> {
        if a.len() != ACTION_DIM {
            return Err(EngineError::Action(format!("expected {ACTION_DIM} values, got {}", a.len())));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(EngineError::Action("non-finite action".into()));
        }
        let mut out = Self {
            palm_position: [0.0; 3],
            palm_euler: [0.0; 3],
            pca: [0.0; PCA_DIM],
        };
        out.palm_position.copy_from_slice(&a[0..3]);
        out.palm_euler.copy_from_slice(&a[3..6]);
        out.pca.copy_from_slice(&a[6..11]);
        Ok(out)
    }

    pub fn to_array(&self) -> [f64; ACTION_DIM] {
        let mut a = [0.0; ACTION_DIM];
        a[0..3].copy_from_slice(&self.palm_position);
        a[3..6].copy_from_slice(&self.palm_euler);
        a[6..11].copy_from_slice(&self.pca);
        a
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Pose(ActionCommand),
    Joints(DVector<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TermsConfig {
    pub collision: CollisionTermConfig,
    pub joint_limit: JointLimitConfig,
    pub palm_attraction: AttractionConfig,
    pub pca_attraction: AttractionConfig,
    pub cspace_attraction: AttractionConfig,
    pub posture: AttractionConfig,
}

impl Default for TermsConfig {
    fn default() -> Self {
        Self {
            collision: CollisionTermConfig::default(),
            joint_limit: JointLimitConfig::default(),
            palm_attraction: AttractionConfig {
                mass: 10.0,
                gain: 10.0,
                sharpness: 10.0,
                damping: 5.0,
            },
            pca_attraction: AttractionConfig {
                mass: 1.0,
                gain: 20.0,
                sharpness: 10.0,
                damping: 5.0,
            },
            cspace_attraction: AttractionConfig {
                mass: 1.0,
                gain: 20.0,
                sharpness: 10.0,
                damping: 5.0,
            },
            posture: AttractionConfig {
                mass: 0.2,
                gain: 1.0,
                sharpness: 5.0,
                damping: 0.0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineConfig {
    pub dt: f64,
    pub action_repeat: usize,
    pub lambda_reg: f64,
    pub cspace_damping: f64,
    pub mode: ActionMode,
    pub terms: TermsConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            dt: 1.0 / 60.0,
            action_repeat: 4,
            lambda_reg: 1e-6,
            cspace_damping: 10.0,
            mode: ActionMode::PcaPose,
            terms: TermsConfig::default(),
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(EngineError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.action_repeat == 0 {
            return Err(EngineError::Config("action_repeat must be at least 1".into()));
        }
        if !(self.lambda_reg >= 0.0 && self.cspace_damping >= 0.0) {
            return Err(EngineError::Config("lambda_reg and cspace_damping must be non-negative".into()));
        }
        let c = &self.terms.collision;
        if [c.k_g, c.k_f, c.damping, c.beta, c.alpha1, c.alpha2, c.d_min, c.d_cutoff]
            .iter()
            .any(|v| !(*v > 0.0 && v.is_finite()))
        {
            return Err(EngineError::Config("collision gains must be positive".into()));
        }
        let jl = &self.terms.joint_limit;
        if !(jl.k_b > 0.0 && jl.repulsion > 0.0 && jl.damping >= 0.0) {
            return Err(EngineError::Config("joint-limit gains must be positive".into()));
        }
        let t = &self.terms;
        for (name, a) in [
            ("palm_attraction", &t.palm_attraction),
            ("pca_attraction", &t.pca_attraction),
            ("cspace_attraction", &t.cspace_attraction),
            ("posture", &t.posture),
        ] {
            if !(a.mass > 0.0 && a.gain >= 0.0 && a.sharpness > 0.0 && a.damping >= 0.0) {
                return Err(EngineError::Config(format!("{name}: mass and sharpness must be positive")));
            }
        }
        Ok(())
    }
}

/// Artificial fabric state, streamed out as position targets.
#[derive(Debug, Clone, PartialEq)]
pub struct FabricState {
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
    pub qdd: DVector<f64>,
    pub step: u64,
    pub last_action: Option<Action>,
}

impl FabricState {
    pub fn at_rest(q: DVector<f64>) -> Self {
        let n = q.len();
        Self {
            q,
            qd: DVector::zeros(n),
            qdd: DVector::zeros(n),
            step: 0,
            last_action: None,
        }
    }
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub alpha: f64,
    pub clamped: usize,
    pub min_distance: f64,
}

/// Shape of a taskmap Jacobian, used to skip dense products.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianKind {
    Identity,
    NegIdentity,
    General,
}

/// One pulled-back term, kept separate for inspection.
#[derive(Debug, Clone)]
pub struct Contribution {
    pub name: String,
    pub kind: JacobianKind,
    pub eval: TaskEval,
    pub output: FabricTermOutput,
}

/// Accumulated configuration-space system.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub metric: DMatrix<f64>,
    pub force: DVector<f64>,
    pub qdd: DVector<f64>,
}

/// `min(a, Δt·j/(2a))`: bounds both the acceleration and its change between steps.
pub fn effective_accel_limits(accel: &DVector<f64>, jerk: &DVector<f64>, dt: f64) -> DVector<f64> {
    accel.zip_map(jerk, |a, j| a.min(dt * j / (2.0 * a)))
}

/// Scales `q̈ = (M + αI)⁻¹ f` down until every joint is within `limits`.
/// Returns the limited acceleration and the α used (0 when already feasible).
pub fn limit_accel(qdd_raw: &DVector<f64>, metric: &DMatrix<f64>, force: &DVector<f64>, limits: &DVector<f64>) -> (DVector<f64>, f64) {
    let ratio = |qdd: &DVector<f64>| qdd.iter().zip(limits.iter()).map(|(a, l)| a.abs() / l).fold(0.0, f64::max);
    if ratio(qdd_raw) <= 1.0 {
        return (qdd_raw.clone(), 0.0);
    }
    let eig = SymmetricEigen::new(metric.clone());
    let g = eig.eigenvectors.transpose() * force;
    let solve = |alpha: f64| {
        let scaled = DVector::from_fn(g.len(), |i, _| g[i] / (eig.eigenvalues[i] + alpha));
        &eig.eigenvectors * scaled
    };
    let mut lo = 0.0;
    let mut hi = ALPHA_MAX;
    let mut best = solve(hi);
    if ratio(&best) > 1.0 {
        warn!("acceleration limit not reached at alpha {ALPHA_MAX:e}; clamping per joint");
        let clamped = best.zip_map(limits, |a, l| a.clamp(-l, l));
        return (clamped, hi);
    }
    for _ in 0..ALPHA_ITERATIONS {
        if ratio(&best) >= 1.0 - ALPHA_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let candidate = solve(mid);
        if ratio(&candidate) <= 1.0 {
            hi = mid;
            best = candidate;
        } else {
            lo = mid;
        }
    }
    (best, hi)
}

/// Explicit midpoint step for `q̈ = acc(q, q̇)`; returns `(q', q̇', a₂)`.
pub fn rk2_midpoint<E, F>(q: &DVector<f64>, qd: &DVector<f64>, dt: f64, mut acc: F) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>), E>
where
    F: FnMut(&DVector<f64>, &DVector<f64>) -> Result<DVector<f64>, E>,
{
    let a1 = acc(q, qd)?;
    let q_mid = q + qd * (0.5 * dt);
    let qd_mid = qd + &a1 * (0.5 * dt);
    let a2 = acc(&q_mid, &qd_mid)?;
    let q_next = q + &qd_mid * dt;
    let qd_next = qd + &a2 * dt;
    Ok((q_next, qd_next, a2))
}

/// A model, a world and the terms composed over them.
#[derive(Debug, Clone)]
pub struct FabricEngine {
    model: KinematicModel,
    world: World,
    cfg: EngineConfig,
    palm: Option<PalmTaskmap>,
    palm_map: Option<Taskmap>,
    pca: Option<Taskmap>,
    posture: DVector<f64>,
    accel_limits: DVector<f64>,
}

impl FabricEngine {
    pub fn new(model: KinematicModel, world: World, cfg: EngineConfig) -> Result<Self, EngineError> {
        cfg.validate()?;
        let posture = model.mid_configuration();
        let accel_limits = effective_accel_limits(model.accel_limits(), model.jerk_limits(), cfg.dt);
        Ok(Self {
            model,
            world,
            cfg,
            palm: None,
            palm_map: None,
            pca: None,
            posture,
            accel_limits,
        })
    }

    pub fn with_palm(mut self, palm: PalmTaskmap) -> Self {
        self.palm_map = Some(palm.taskmap());
        self.palm = Some(palm);
        self
    }

    pub fn with_pca(mut self, basis: &PcaBasis, hand_offset: usize) -> Result<Self, EngineError> {
        self.pca = Some(pca_taskmap(basis, self.model.dof(), hand_offset)?);
        Ok(self)
    }

    pub fn with_posture(mut self, posture: DVector<f64>) -> Result<Self, EngineError> {
        self.model.check_q(&posture)?;
        self.posture = posture;
        Ok(self)
    }

    pub fn model(&self) -> &KinematicModel {
        &self.model
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn palm(&self) -> Option<&PalmTaskmap> {
        self.palm.as_ref()
    }

    pub fn posture(&self) -> &DVector<f64> {
        &self.posture
    }

    pub fn effective_limits(&self) -> &DVector<f64> {
        &self.accel_limits
    }

    fn check_action(&self, action: &Action) -> Result<(), EngineError> {
        match (self.cfg.mode, action) {
            (ActionMode::PcaPose, Action::Pose(a)) => {
                if a.to_array().iter().all(|v| v.is_finite()) {
                    Ok(())
                } else {
                    Err(EngineError::Action("non-finite action".into()))
                }
            }
            (ActionMode::Cspace, Action::Joints(t)) => {
                self.model.check_q(t)?;
                Ok(())
            }
            (mode, _) => Err(EngineError::Action(format!("action kind does not match mode {mode:?}"))),
        }
    }

    /// Every active term at `state`, with its taskmap evaluation.
    pub fn contributions(&self, state: &JointState, action: &Action) -> Result<Vec<Contribution>, EngineError> {
        self.check_action(action)?;
        let ctx = TaskContext::new(&self.model, state)?;
        let terms = &self.cfg.terms;
        let mut out = Vec::new();
        use JacobianKind::*;
        let mut push = |name: String, kind: JacobianKind, eval: TaskEval, output: FabricTermOutput| -> Result<(), EngineError> {
            if !output.is_finite() || eval.curvature.iter().any(|v| !v.is_finite()) {
                return Err(EngineError::NonFiniteTerm { term: name });
            }
            out.push(Contribution { name, kind, eval, output });
            Ok(())
        };

        for (name, map, kind) in [
            ("joint_limit_upper", Taskmap::JointLimitUpper, NegIdentity),
            ("joint_limit_lower", Taskmap::JointLimitLower, Identity),
        ] {
            let eval = map.eval_in(&ctx)?;
            let output = joint_limit_repulsion(&eval.x, &eval.xd, &terms.joint_limit);
            push(name.into(), kind, eval, output)?;
        }

        let identity = Taskmap::Identity.eval_in(&ctx)?;
        push("cspace_damping".into(), Identity, identity.clone(), cspace_damping(&state.qd, self.cfg.cspace_damping))?;
        let posture = attraction_geometric_hd2(&identity.x, &identity.xd, &self.posture, &terms.posture);
        push("posture".into(), Identity, identity.clone(), posture)?;

        match action {
            Action::Pose(cmd) => {
                if let (Some(palm), Some(map)) = (&self.palm, &self.palm_map) {
                    let eval = map.eval_in(&ctx)?;
                    let target = palm.pose_to_targets(&Vector3::from(cmd.palm_position), &Vector3::from(cmd.palm_euler));
                    let output = attraction_forced(&eval.x, &eval.xd, &target, &terms.palm_attraction);
                    push("palm_attraction".into(), General, eval, output)?;
                }
                if let Some(map) = &self.pca {
                    let eval = map.eval_in(&ctx)?;
                    let target = DVector::from_column_slice(&cmd.pca);
                    let output = attraction_forced(&eval.x, &eval.xd, &target, &terms.pca_attraction);
                    push("pca_attraction".into(), General, eval, output)?;
                }
            }
            Action::Joints(target) => {
                let output = attraction_forced(&identity.x, &identity.xd, target, &terms.cspace_attraction);
                push("cspace_attraction".into(), Identity, identity, output)?;
            }
        }

        for sq in self.active_queries(&ctx) {
            let sphere = &self.model.spheres()[sq.sphere];
            let map = Taskmap::body_points(vec![sphere.point]);
            let eval = map.eval_in(&ctx)?;
            let xd = Vector3::new(eval.xd[0], eval.xd[1], eval.xd[2]);
            let queries: Vec<_> = sq.queries.iter().map(|(_, q)| *q).collect();
            let geometric = collision_geometric(&queries, &xd, &terms.collision);
            let forcing = collision_forcing(&queries, &xd, &terms.collision);
            push(format!("collision_geometric[{}]", sphere.name), General, eval.clone(), geometric)?;
            push(format!("collision_forcing[{}]", sphere.name), General, eval, forcing)?;
        }
        Ok(out)
    }

    fn sphere_centers(&self, ctx: &TaskContext<'_>) -> Vec<Vector3<f64>> {
        self.model
            .spheres()
            .iter()
            .map(|s| self.model.point_position(&ctx.frames, &s.point))
            .collect()
    }

    /// Spheres with at least one query inside the cutoff.
    fn active_queries(&self, ctx: &TaskContext<'_>) -> Vec<SphereQueries> {
        let cutoff = self.cfg.terms.collision.d_cutoff;
        let mut all = query_with_centers(&self.model, &self.sphere_centers(ctx), &self.world);
        all.retain(|s| s.min_bounded < cutoff);
        all
    }

    /// Smallest signed distance between any sphere and anything it is tested against.
    pub fn min_distance(&self, q: &DVector<f64>) -> f64 {
        let frames = self.model.frames(q);
        let centers: Vec<_> = self
            .model
            .spheres()
            .iter()
            .map(|s| self.model.point_position(&frames, &s.point))
            .collect();
        min_signed_distance(&query_with_centers(&self.model, &centers, &self.world))
    }

    /// Metric-weighted combination of all terms, before limiting.
    pub fn resolve(&self, state: &JointState, action: &Action) -> Result<Resolved, EngineError> {
        let n = self.model.dof();
        let mut metric = DMatrix::identity(n, n) * self.cfg.lambda_reg;
        let mut force = DVector::zeros(n);
        for c in self.contributions(state, action)? {
            let m = &c.output.metric;
            if m.iter().all(|v| *v == 0.0) {
                continue;
            }
            let rhs = &c.output.accel - &c.eval.curvature;
            match c.kind {
                JacobianKind::Identity => {
                    metric += m;
                    force.gemv(1.0, m, &rhs, 1.0);
                }
                JacobianKind::NegIdentity => {
                    metric += m;
                    force.gemv(-1.0, m, &rhs, 1.0);
                }
                JacobianKind::General => {
                    let mj = m * &c.eval.jac;
                    metric.gemm_tr(1.0, &c.eval.jac, &mj, 1.0);
                    force.gemv_tr(1.0, &mj, &rhs, 1.0);
                }
            }
        }
        let chol = Cholesky::new(metric.clone())
            .ok_or_else(|| EngineError::Resolve("system metric is not positive definite".into()))?;
        let qdd = chol.solve(&force);
        if qdd.iter().any(|v| !v.is_finite()) {
            return Err(EngineError::Resolve("non-finite acceleration".into()));
        }
        Ok(Resolved { metric, force, qdd })
    }

    /// Resolved and limited acceleration, with the α used.
    pub fn acceleration(&self, state: &JointState, action: &Action) -> Result<(DVector<f64>, f64), EngineError> {
        let r = self.resolve(state, action)?;
        Ok(limit_accel(&r.qdd, &r.metric, &r.force, &self.accel_limits))
    }

    /// One integration step at `dt`.
    pub fn step(&self, state: &FabricState, action: &Action) -> Result<(FabricState, StepInfo), EngineError> {
        self.model.check_q(&state.q)?;
        self.model.check_q(&state.qd)?;
        let mut alpha = 0.0;
        let (mut q, mut qd, qdd) = rk2_midpoint(&state.q, &state.qd, self.cfg.dt, |q, qd| {
            let js = JointState::new(q.clone(), qd.clone());
            let (a, al) = self.acceleration(&js, action)?;
            alpha = al;
            Ok::<_, EngineError>(a)
        })?;
        let (lower, upper) = (self.model.lower_limits(), self.model.upper_limits());
        let mut clamped = 0;
        for j in 0..q.len() {
            if q[j] < lower[j] || q[j] > upper[j] {
                q[j] = q[j].clamp(lower[j], upper[j]);
                qd[j] = 0.0;
                clamped += 1;
            }
        }
        let min_distance = self.min_distance(&q);
        let next = FabricState {
            q,
            qd,
            qdd,
            step: state.step + 1,
            last_action: Some(action.clone()),
        };
        Ok((
            next,
            StepInfo {
                alpha,
                clamped,
                min_distance,
            },
        ))
    }

    /// Steps every element independently; faults are reported per index.
    pub fn step_batch(&self, states: &[FabricState], actions: &[Action]) -> Vec<Result<(FabricState, StepInfo), EngineError>> {
        assert_eq!(states.len(), actions.len(), "one action per state");
        states.par_iter().zip(actions.par_iter()).map(|(s, a)| self.step(s, a)).collect()
    }

    /// Runs `steps` integration steps, pulling a new action every
    /// `action_repeat` steps. On failure the trajectory so far is returned
    /// together with the error.
    pub fn run_policy_rate<F, E>(&self, state: FabricState, mut source: F, steps: usize) -> (Trajectory, Option<EngineError>)
    where
        F: FnMut(usize, &FabricState) -> Result<Action, E>,
        E: std::fmt::Display,
    {
        let mut traj = Trajectory::new(self.model.dof());
        traj.push(TrajectoryRow::initial(&state, self.min_distance(&state.q)));
        let mut state = state;
        let mut action = None;
        for k in 0..steps {
            if k % self.cfg.action_repeat == 0 {
                let pull = k / self.cfg.action_repeat;
                match source(pull, &state) {
                    Ok(a) => action = Some(a),
                    Err(e) => {
                        return (
                            traj,
                            Some(EngineError::ActionSource {
                                pull,
                                message: e.to_string(),
                            }),
                        )
                    }
                }
            }
            let a = action.as_ref().expect("pulled on the first step");
            match self.step(&state, a) {
                Ok((next, info)) => {
                    traj.push(TrajectoryRow::from_state(&next, self.cfg.dt, &info));
                    state = next;
                }
                Err(e) => return (traj, Some(e)),
            }
        }
        (traj, None)
    }

    /// Holds the current palm pose and the PCA coordinates of the current hand pose.
    pub fn hold_action(&self, q: &DVector<f64>) -> Action {
        match self.cfg.mode {
            ActionMode::Cspace => Action::Joints(q.clone()),
            ActionMode::PcaPose => {
                let (p, r) = self
                    .palm
                    .as_ref()
                    .map(|palm| palm.palm_pose(&self.model, q))
                    .unwrap_or((Vector3::zeros(), Vector3::zeros()));
                let mut pca = [0.0; PCA_DIM];
                if let Some(Taskmap::Linear { matrix, offset }) = &self.pca {
                    let x = matrix * q + offset;
                    pca.iter_mut().zip(x.iter()).for_each(|(d, s)| *d = *s);
                }
                Action::Pose(ActionCommand {
                    palm_position: p.into(),
                    palm_euler: r.into(),
                    pca,
                })
            }
        }
    }

    /// Positions of named body points (for reporting).
    pub fn point_positions(&self, q: &DVector<f64>, points: &[AttachedPoint]) -> DVector<f64> {
        self.model.points_position(&self.model.frames(q), points)
    }
}
