//! Signed distances between robot collision spheres and environment primitives.

use nalgebra::{DVector, Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{FrameId, KinematicModel};

/// Default lower bound on distances fed to `1/d` terms (m).
pub const DEFAULT_D_MIN: f64 = 0.015;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("invalid obstacle {index}: {reason}")]
    InvalidObstacle { index: usize, reason: String },
    #[error("invalid self-collision pair ({0}, {1})")]
    InvalidPair(usize, usize),
}

/// Environment primitive. All lengths in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Obstacle {
    Box {
        center: [f64; 3],
        half_extents: [f64; 3],
        /// Extrinsic XYZ Euler angles of the box axes.
        #[serde(default)]
        rpy: [f64; 3],
    },
    Sphere { center: [f64; 3], radius: f64 },
    /// Solid region `(x − point)·normal ≤ 0`; `normal` points into free space.
    Halfspace { point: [f64; 3], normal: [f64; 3] },
}

impl Obstacle {
    pub fn validate(&self, index: usize) -> Result<(), WorldError> {
        let bad = |reason: &str| WorldError::InvalidObstacle {
            index,
            reason: reason.to_string(),
        };
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            Obstacle::Box {
                center,
                half_extents,
                rpy,
            } => {
                if !(finite(center) && finite(half_extents) && finite(rpy)) {
                    return Err(bad("non-finite box"));
                }
                if half_extents.iter().any(|h| *h <= 0.0) {
                    return Err(bad("box half extents must be positive"));
                }
            }
            Obstacle::Sphere { center, radius } => {
                if !finite(center) || !(radius.is_finite() && *radius > 0.0) {
                    return Err(bad("sphere radius must be positive"));
                }
            }
            Obstacle::Halfspace { point, normal } => {
                let n = Vector3::from(*normal);
                if !(finite(point) && finite(normal)) || (n.norm() - 1.0).abs() > 1e-9 {
                    return Err(bad("halfspace normal must be a unit vector"));
                }
            }
        }
        Ok(())
    }
}

/// One sphere-versus-body distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceQuery {
    /// Signed distance between the sphere surface and the body (negative inside).
    pub distance: f64,
    /// Closest point on the body surface.
    pub closest: Vector3<f64>,
    /// Unit direction from the sphere center towards the body; for centers
    /// inside the body it points away from the nearest surface, deeper in.
    pub normal: Vector3<f64>,
    /// `max(d_min, distance)`.
    pub bounded: f64,
    /// The normal is not unique (center on the medial locus); a valid but
    /// arbitrary choice was made.
    pub degenerate: bool,
}

impl DistanceQuery {
    fn new(distance: f64, closest: Vector3<f64>, normal: Vector3<f64>, degenerate: bool, d_min: f64) -> Self {
        Self {
            distance,
            closest,
            normal,
            bounded: distance.max(d_min),
            degenerate,
        }
    }
}

/// Distance from a sphere to an obstacle.
pub fn signed_distance(center: &Vector3<f64>, radius: f64, obstacle: &Obstacle, d_min: f64) -> DistanceQuery {
    match obstacle {
        Obstacle::Sphere { center: c, radius: r } => sphere_sphere(center, radius, &Vector3::from(*c), *r, d_min),
        Obstacle::Halfspace { point, normal } => {
            let n = Vector3::from(*normal);
            let height = (center - Vector3::from(*point)).dot(&n);
            DistanceQuery::new(height - radius, center - n * height, -n, false, d_min)
        }
        Obstacle::Box {
            center: c,
            half_extents,
            rpy,
        } => {
            let rot = Rotation3::from_euler_angles(rpy[0], rpy[1], rpy[2]);
            let h = Vector3::from(*half_extents);
            let local = rot.inverse() * (center - Vector3::from(*c));
            let inside = (0..3).all(|i| local[i].abs() <= h[i]);
            if !inside {
                let clamped = Vector3::new(
                    local.x.clamp(-h.x, h.x),
                    local.y.clamp(-h.y, h.y),
                    local.z.clamp(-h.z, h.z),
                );
                let delta = clamped - local;
                let dist = delta.norm();
                let closest = rot * clamped + Vector3::from(*c);
                DistanceQuery::new(dist - radius, closest, rot * (delta / dist), false, d_min)
            } else {
                // nearest face
                let gaps = [h.x - local.x.abs(), h.y - local.y.abs(), h.z - local.z.abs()];
                let (axis, gap) = gaps
                    .iter()
                    .copied()
                    .enumerate()
                    .fold((0, f64::INFINITY), |best, (i, g)| if g < best.1 { (i, g) } else { best });
                let ties = gaps.iter().filter(|g| (**g - gap).abs() <= 1e-12).count();
                let sign = if local[axis] >= 0.0 { 1.0 } else { -1.0 };
                let mut face = local;
                face[axis] = sign * h[axis];
                let mut outward = Vector3::zeros();
                outward[axis] = sign;
                let degenerate = ties > 1 || local[axis] == 0.0;
                DistanceQuery::new(
                    -gap - radius,
                    rot * face + Vector3::from(*c),
                    rot * (-outward),
                    degenerate,
                    d_min,
                )
            }
        }
    }
}

/// Distance between two spheres; the normal points from the first to the second.
pub fn sphere_sphere(a: &Vector3<f64>, ra: f64, b: &Vector3<f64>, rb: f64, d_min: f64) -> DistanceQuery {
    let delta = b - a;
    let dist = delta.norm();
    if dist < 1e-12 {
        return DistanceQuery::new(-ra - rb, b - Vector3::x() * rb, Vector3::x(), true, d_min);
    }
    let normal = delta / dist;
    DistanceQuery::new(dist - ra - rb, b - normal * rb, normal, false, d_min)
}

/// Obstacles plus the enabled robot self-collision sphere pairs.
#[derive(Debug, Clone, Default)]
pub struct World {
    pub obstacles: Vec<Obstacle>,
    pub self_pairs: Vec<(usize, usize)>,
    pub d_min: f64,
}

impl World {
    pub fn new(obstacles: Vec<Obstacle>) -> Result<Self, WorldError> {
        for (i, o) in obstacles.iter().enumerate() {
            o.validate(i)?;
        }
        Ok(Self {
            obstacles,
            self_pairs: Vec::new(),
            d_min: DEFAULT_D_MIN,
        })
    }

    pub fn empty() -> Self {
        Self {
            obstacles: Vec::new(),
            self_pairs: Vec::new(),
            d_min: DEFAULT_D_MIN,
        }
    }

    /// Sets the allowlist of self-collision pairs. Pairs of spheres on the same
    /// frame never collide with each other and are rejected.
    pub fn with_self_pairs(mut self, model: &KinematicModel, pairs: Vec<(usize, usize)>) -> Result<Self, WorldError> {
        let spheres = model.spheres();
        for &(a, b) in &pairs {
            if a == b || a >= spheres.len() || b >= spheres.len() || spheres[a].point.frame == spheres[b].point.frame {
                return Err(WorldError::InvalidPair(a, b));
            }
        }
        self.self_pairs = pairs;
        Ok(self)
    }

    /// Every pair of spheres on distinct frames that are not parent and child.
    pub fn non_adjacent_pairs(model: &KinematicModel) -> Vec<(usize, usize)> {
        let spheres = model.spheres();
        let parent = |f: FrameId| match f {
            FrameId::World => None,
            FrameId::Joint(i) => Some(model.joints()[i].parent.map_or(FrameId::World, FrameId::Joint)),
        };
        let mut out = Vec::new();
        for a in 0..spheres.len() {
            for b in a + 1..spheres.len() {
                let (fa, fb) = (spheres[a].point.frame, spheres[b].point.frame);
                if fa == fb || parent(fa) == Some(fb) || parent(fb) == Some(fa) {
                    continue;
                }
                out.push((a, b));
            }
        }
        out
    }
}

/// What a query was measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryTarget {
    Obstacle(usize),
    Sphere(usize),
}

#[derive(Debug, Clone)]
pub struct SphereQueries {
    pub sphere: usize,
    pub center: Vector3<f64>,
    pub queries: Vec<(QueryTarget, DistanceQuery)>,
    /// `min_i d̲_i` over this sphere's queries (infinite when there are none).
    pub min_bounded: f64,
}

impl SphereQueries {
    pub fn min_distance(&self) -> f64 {
        self.queries
            .iter()
            .map(|(_, q)| q.distance)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Queries every sphere against every obstacle and every enabled self pair.
/// Spheres with no queries are omitted.
pub fn query_all(model: &KinematicModel, q: &DVector<f64>, world: &World) -> Vec<SphereQueries> {
    let frames = model.frames(q);
    let centers: Vec<Vector3<f64>> = model
        .spheres()
        .iter()
        .map(|s| model.point_position(&frames, &s.point))
        .collect();
    query_with_centers(model, &centers, world)
}

pub fn query_with_centers(model: &KinematicModel, centers: &[Vector3<f64>], world: &World) -> Vec<SphereQueries> {
    let spheres = model.spheres();
    let mut out: Vec<SphereQueries> = Vec::new();
    for (i, s) in spheres.iter().enumerate() {
        let mut queries: Vec<(QueryTarget, DistanceQuery)> = world
            .obstacles
            .iter()
            .enumerate()
            .map(|(k, o)| (QueryTarget::Obstacle(k), signed_distance(&centers[i], s.radius, o, world.d_min)))
            .collect();
        for &(a, b) in &world.self_pairs {
            let other = if a == i {
                b
            } else if b == i {
                a
            } else {
                continue;
            };
            let d = sphere_sphere(&centers[i], s.radius, &centers[other], spheres[other].radius, world.d_min);
            queries.push((QueryTarget::Sphere(other), d));
        }
        if queries.is_empty() {
            continue;
        }
        let min_bounded = queries.iter().map(|(_, q)| q.bounded).fold(f64::INFINITY, f64::min);
        out.push(SphereQueries {
            sphere: i,
            center: centers[i],
            queries,
            min_bounded,
        });
    }
    out
}

/// Smallest signed distance over all queries, `+∞` when there are none.
pub fn min_signed_distance(queries: &[SphereQueries]) -> f64 {
    queries.iter().map(|s| s.min_distance()).fold(f64::INFINITY, f64::min)
}
