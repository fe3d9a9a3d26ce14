//! Flat-array stepping surface for external training loops.
//!
//! A handle owns one engine and a batch of fabric states. Actions go in as a
//! row-major `batch × action_dim` slice and state comes out as a row-major
//! `batch × 3n` slice holding `(q, q̇, q̈)` per row. No other buffers are
//! allocated per call beyond the engine's own working memory.

use std::path::Path;

use nalgebra::DVector;
use thiserror::Error;

use crate::engine::{Action, ActionCommand, ActionMode, EngineError, FabricEngine, FabricState, ACTION_DIM};
use crate::scenario::{Scenario, ScenarioError};

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("handle is closed")]
    Closed,
    #[error("shape mismatch: expected {expected} values, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("batch size must be positive")]
    EmptyBatch,
    #[error("no actions set")]
    NoActions,
    #[error("invalid action in row {row}: {source}")]
    Action { row: usize, source: EngineError },
    #[error("engine fault in row {row} at substep {substep}: {source}")]
    Fault {
        row: usize,
        substep: usize,
        source: EngineError,
    },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

#[derive(Debug)]
struct Inner {
    engine: FabricEngine,
    states: Vec<FabricState>,
    actions: Option<Vec<Action>>,
}

#[derive(Debug)]
pub struct EngineHandle {
    inner: Option<Inner>,
    batch: usize,
    dof: usize,
    action_dim: usize,
}

impl EngineHandle {
    pub fn create(scenario: impl AsRef<Path>, batch: usize) -> Result<Self, ApiError> {
        Self::from_scenario(Scenario::load(scenario)?, batch)
    }

    /// Every batch row starts from the scenario's initial state.
    pub fn from_scenario(scenario: Scenario, batch: usize) -> Result<Self, ApiError> {
        if batch == 0 {
            return Err(ApiError::EmptyBatch);
        }
        let dof = scenario.engine.model().dof();
        let action_dim = match scenario.engine.config().mode {
            ActionMode::PcaPose => ACTION_DIM,
            ActionMode::Cspace => dof,
        };
        Ok(Self {
            inner: Some(Inner {
                states: vec![scenario.initial.clone(); batch],
                engine: scenario.engine,
                actions: None,
            }),
            batch,
            dof,
            action_dim,
        })
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn state_dim(&self) -> usize {
        3 * self.dof
    }

    pub fn is_closed(&self) -> bool {
        self.inner.is_none()
    }

    fn inner(&self) -> Result<&Inner, ApiError> {
        self.inner.as_ref().ok_or(ApiError::Closed)
    }

    /// Replaces the held actions. Nothing changes unless every row is valid.
    pub fn set_actions(&mut self, actions: &[f64]) -> Result<(), ApiError> {
        let (batch, dim, mode) = (self.batch, self.action_dim, self.inner()?.engine.config().mode);
        if actions.len() != batch * dim {
            return Err(ApiError::Shape {
                expected: batch * dim,
                got: actions.len(),
            });
        }
        let parsed = actions
            .chunks_exact(dim)
            .enumerate()
            .map(|(row, a)| {
                let action = match mode {
                    ActionMode::PcaPose => Action::Pose(ActionCommand::from_slice(a).map_err(|source| ApiError::Action { row, source })?),
                    ActionMode::Cspace => {
                        if a.iter().any(|v| !v.is_finite()) {
                            return Err(ApiError::Action {
                                row,
                                source: EngineError::Action("non-finite joint target".into()),
                            });
                        }
                        Action::Joints(DVector::from_column_slice(a))
                    }
                };
                Ok(action)
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.inner.as_mut().ok_or(ApiError::Closed)?.actions = Some(parsed);
        Ok(())
    }

    /// Advances every row `substeps` integration steps with the held actions.
    /// A fault in any row leaves all rows at their previous state.
    pub fn step(&mut self, substeps: usize) -> Result<(), ApiError> {
        let inner = self.inner.as_mut().ok_or(ApiError::Closed)?;
        let actions = inner.actions.as_ref().ok_or(ApiError::NoActions)?;
        let mut states = inner.states.clone();
        for substep in 0..substeps {
            let results = inner.engine.step_batch(&states, actions);
            for (row, (slot, r)) in states.iter_mut().zip(results).enumerate() {
                *slot = r.map_err(|source| ApiError::Fault { row, substep, source })?.0;
            }
        }
        inner.states = states;
        Ok(())
    }

    /// Writes `batch × 3n` values into `out`.
    pub fn read_state_into(&self, out: &mut [f64]) -> Result<(), ApiError> {
        let inner = self.inner()?;
        let width = self.state_dim();
        if out.len() != self.batch * width {
            return Err(ApiError::Shape {
                expected: self.batch * width,
                got: out.len(),
            });
        }
        let n = self.dof;
        for (row, s) in out.chunks_exact_mut(width).zip(&inner.states) {
            row[..n].copy_from_slice(s.q.as_slice());
            row[n..2 * n].copy_from_slice(s.qd.as_slice());
            row[2 * n..].copy_from_slice(s.qdd.as_slice());
        }
        Ok(())
    }

    pub fn read_state(&self) -> Result<Vec<f64>, ApiError> {
        let mut out = vec![0.0; self.batch * self.state_dim()];
        self.read_state_into(&mut out)?;
        Ok(out)
    }

    /// Releases the engine. Calling it again does nothing.
    pub fn close(&mut self) {
        self.inner = None;
    }
}
