//! Classical RK4 particle advection, one simulation cycle per step.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::OwnedRegion;
use crate::fields::{FieldError, TimeField};
use crate::geom::{axpy, Aabb, Point};

#[derive(Debug, Error)]
pub enum StepError {
    /// A stage sample left the region the step is confined to.
    #[error("stage {stage} sample {position:?} left the region")]
    StageOutOfRegion { stage: usize, position: Point },
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParticleStatus {
    Active,
    TerminatedBoundary,
    ExitedDomain,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Particle {
    /// `origin_rank << 32 | seed index`.
    pub id: u64,
    pub seed: Point,
    pub pos: Point,
    pub status: ParticleStatus,
    pub origin_rank: usize,
}

impl Particle {
    pub fn new(origin_rank: usize, index: usize, seed: Point) -> Self {
        Particle { id: particle_id(origin_rank, index), seed, pos: seed, status: ParticleStatus::Active, origin_rank }
    }

    pub fn is_active(&self) -> bool {
        self.status == ParticleStatus::Active
    }
}

pub fn particle_id(origin_rank: usize, index: usize) -> u64 {
    ((origin_rank as u64) << 32) | index as u64
}

/// Where stage samples are allowed to fall.
#[derive(Clone, Copy, Debug)]
pub enum Region<'a> {
    Global(&'a Aabb),
    Block(OwnedRegion),
}

impl Region<'_> {
    pub fn contains(&self, x: &Point) -> bool {
        match self {
            Region::Global(b) => b.contains(x),
            Region::Block(r) => r.contains(x),
        }
    }
}

/// One RK4 step of length `dt` starting at cycle `cycle`. Stage samples are
/// taken at `cycle + {0, dt/2, dt/2, dt}` (as fractions of the cycle) and
/// must all lie in `region`. The candidate position is returned unchecked.
pub fn rk4_step(field: &TimeField, x: &Point, cycle: u64, dt: f64, region: Region<'_>) -> Result<Point, StepError> {
    rk4_step_with(field, x, cycle, dt, |p| region.contains(p))
}

/// [`rk4_step`] with an arbitrary stage predicate.
pub fn rk4_step_with(
    field: &TimeField,
    x: &Point,
    cycle: u64,
    dt: f64,
    mut allowed: impl FnMut(&Point) -> bool,
) -> Result<Point, StepError> {
    let h = dt / field.cycle_dt();
    let mut sample = |stage: usize, p: Point, frac: f64| -> Result<Point, StepError> {
        if !allowed(&p) {
            return Err(StepError::StageOutOfRegion { stage, position: p });
        }
        Ok(field.eval_velocity(&p, cycle, frac)?)
    };
    let k1 = sample(0, *x, 0.0)?;
    let k2 = sample(1, axpy(x, 0.5 * dt, &k1), 0.5 * h)?;
    let k3 = sample(2, axpy(x, 0.5 * dt, &k2), 0.5 * h)?;
    let k4 = sample(3, axpy(x, dt, &k3), h)?;
    Ok(std::array::from_fn(|c| x[c] + dt * ((k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]) / 6.0)))
}

/// Advects `x` for `cycles` whole cycles from `start_cycle` over the global
/// domain, loading each cycle. Returns the final position or the first
/// failure. This is the ground-truth integrator: no decomposition, no resets.
pub fn integrate(field: &mut TimeField, x: &Point, start_cycle: u64, cycles: u64) -> Result<Point, StepError> {
    let domain = *field.domain();
    let dt = field.cycle_dt();
    let mut p = *x;
    for c in start_cycle..start_cycle + cycles {
        field.load_cycle(c)?;
        let next = rk4_step(field, &p, c, dt, Region::Global(&domain))?;
        if !domain.contains(&next) {
            return Err(StepError::StageOutOfRegion { stage: 4, position: next });
        }
        p = next;
    }
    Ok(p)
}
