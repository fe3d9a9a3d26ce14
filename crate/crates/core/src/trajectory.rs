//! Recorded fabric trajectories and their CSV form.

use nalgebra::DVector;

use crate::engine::{FabricState, StepInfo};

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
    pub qdd: DVector<f64>,
    pub min_dist: f64,
    pub alpha: f64,
    pub clamped: usize,
}

impl TrajectoryRow {
    pub fn initial(state: &FabricState, min_dist: f64) -> Self {
        Self {
            t: 0.0,
            q: state.q.clone(),
            qd: state.qd.clone(),
            qdd: state.qdd.clone(),
            min_dist,
            alpha: 0.0,
            clamped: 0,
        }
    }

    pub fn from_state(state: &FabricState, dt: f64, info: &StepInfo) -> Self {
        Self {
            t: state.step as f64 * dt,
            q: state.q.clone(),
            qd: state.qd.clone(),
            qdd: state.qdd.clone(),
            min_dist: info.min_distance,
            alpha: info.alpha,
            clamped: info.clamped,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dof: usize,
    pub rows: Vec<TrajectoryRow>,
}

impl Trajectory {
    pub fn new(dof: usize) -> Self {
        Self { dof, rows: Vec::new() }
    }

    pub fn push(&mut self, row: TrajectoryRow) {
        self.rows.push(row);
    }

    /// Completed integration steps (rows after the initial one).
    pub fn steps(&self) -> usize {
        self.rows.len().saturating_sub(1)
    }

    pub fn total_clamps(&self) -> usize {
        self.rows.iter().map(|r| r.clamped).sum()
    }

    pub fn min_distance(&self) -> f64 {
        self.rows.iter().map(|r| r.min_dist).fold(f64::INFINITY, f64::min)
    }

    pub fn header(&self) -> String {
        let n = self.dof;
        let mut cols = vec!["t".to_string()];
        for prefix in ["q", "qd", "qdd"] {
            cols.extend((0..n).map(|j| format!("{prefix}_{j}")));
        }
        cols.extend(["min_dist", "alpha", "clamped"].map(String::from));
        cols.join(",")
    }

    /// Values are written with round-trip precision.
    pub fn to_csv(&self) -> String {
        let mut out = self.header();
        out.push('\n');
        for r in &self.rows {
            let mut cells = vec![fmt(r.t)];
            for v in r.q.iter().chain(r.qd.iter()).chain(r.qdd.iter()) {
                cells.push(fmt(*v));
            }
            cells.push(fmt(r.min_dist));
            cells.push(fmt(r.alpha));
            cells.push(r.clamped.to_string());
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut lines = text.lines().filter(|l| !l.is_empty());
        let header = lines.next().ok_or("empty trajectory")?;
        let cols = header.split(',').count();
        if cols < 4 || (cols - 4) % 3 != 0 {
            return Err(format!("unexpected column count {cols}"));
        }
        let dof = (cols - 4) / 3;
        let mut traj = Trajectory::new(dof);
        if traj.header() != header {
            return Err("header does not match the trajectory layout".into());
        }
        for (i, line) in lines.enumerate() {
            let v: Vec<&str> = line.split(',').collect();
            if v.len() != cols {
                return Err(format!("row {} has {} columns", i + 1, v.len()));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| format!("row {}: {e}", i + 1));
            let vec_at = |start: usize| -> Result<DVector<f64>, String> {
                let vals: Result<Vec<f64>, String> = v[start..start + dof].iter().map(|s| num(s)).collect();
                Ok(DVector::from_vec(vals?))
            };
            traj.push(TrajectoryRow {
                t: num(v[0])?,
                q: vec_at(1)?,
                qd: vec_at(1 + dof)?,
                qdd: vec_at(1 + 2 * dof)?,
                min_dist: num(v[1 + 3 * dof])?,
                alpha: num(v[2 + 3 * dof])?,
                clamped: v[3 + 3 * dof].parse().map_err(|e| format!("row {}: {e}", i + 1))?,
            });
        }
        Ok(traj)
    }
}

fn fmt(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:?}")
    }
}
