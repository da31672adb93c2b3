//! Tree and grid structures for interior/exterior cell exploration.
//!
//! Motions live in an arena owned by [`Grid`]; a motion's parent always has a
//! smaller id, so parent chains are acyclic by construction. Each motion
//! records which of its parent's stored states it branched from, so path
//! extraction can cut the parent's control short at that point.

mod grid;

pub use grid::{Cell, CellCoord, Grid};

use serde::{Deserialize, Serialize};

use crate::physics::{Control, Vec2};
use crate::world::WorldState;
use crate::{Error, Result, RngStream};

/// Probability of expanding from the exterior cell set.
pub const EXTERIOR_PROBABILITY: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MotionId(pub usize);

/// A world state reached `step` timesteps into a motion.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredState {
    pub step: u32,
    pub world: WorldState,
}

/// Tree edge. `states` holds intermediate states (at a stride) and always
/// ends with the final state. The start state is the parent's
/// `states[branch]`; the root stores its single state at step 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Motion {
    pub parent: Option<MotionId>,
    pub branch: usize,
    pub control: Control,
    pub belief: f64,
    pub states: Vec<StoredState>,
}

impl Motion {
    /// Zero-duration motion holding the initial state.
    pub fn root(world: WorldState) -> Self {
        Self {
            parent: None,
            branch: 0,
            control: Control::default(),
            belief: 1.0,
            states: vec![StoredState { step: 0, world }],
        }
    }

    pub fn last_state(&self) -> &WorldState {
        &self
            .states
            .last()
            .expect("motion stores at least one state")
            .world
    }

    pub fn is_root(&self) -> bool {
        self.parent.is_none()
    }
}

/// Projection used for the grid: the robot position.
pub fn project(world: &WorldState) -> Vec2 {
    world.robot().pose.position()
}

/// Importance of a cell given the belief bias factor `f`.
///
/// With `f * b_cell == 0` this is the unbiased KPIECE importance.
pub fn importance(cell: &Cell, f: f64) -> f64 {
    importance_value(
        cell.created as f64,
        cell.score,
        cell.selections.max(1) as f64,
        cell.neighbors as f64,
        cell.coverage.max(1) as f64,
        f * cell.belief,
    )
}

/// `((1 + fb) ln(1 + i) score) / (c (1 + neigh) cov)`; the bias term is
/// skipped entirely when `fb == 0`.
pub fn importance_value(i: f64, score: f64, c: f64, neigh: f64, cov: f64, fb: f64) -> f64 {
    let base = (1.0 + i).ln() * score / (c * (1.0 + neigh) * cov);
    if fb == 0.0 {
        base
    } else {
        (1.0 + fb) * base
    }
}

/// How the belief bias factor `f` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum BiasFactor {
    /// `f = 0`: plain importance.
    Off,
    /// `f` equals the current number of cells.
    CellCount,
    Fixed(f64),
}

impl BiasFactor {
    pub fn value(&self, cell_count: usize) -> f64 {
        match self {
            BiasFactor::Off => 0.0,
            BiasFactor::CellCount => cell_count as f64,
            BiasFactor::Fixed(f) => *f,
        }
    }
}

/// Multiplicative score update constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub penalty: f64,
    pub reward: f64,
    /// Propagation time per new cell needed to earn the reward (s).
    pub period: f64,
    pub min: f64,
    pub max: f64,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            penalty: 0.9,
            reward: 1.0 / 0.9,
            period: 0.1,
            min: 1e-3,
            max: 1e3,
        }
    }
}

impl ScoreConfig {
    /// New score after an expansion that created `gain` cells while
    /// propagating for `elapsed` seconds.
    pub fn updated(&self, score: f64, gain: usize, elapsed: f64) -> f64 {
        let progress = gain > 0 && gain as f64 * self.period >= elapsed;
        let factor = if progress { self.reward } else { self.penalty };
        (score * factor).clamp(self.min, self.max)
    }
}

/// Picks a motion of `cell`: with probability `1 - eps_rand` the highest
/// belief (uniform among exact ties), otherwise a half-normal draw over
/// indices that favours the newest motions.
pub fn select_motion_in_cell(
    cell: &Cell,
    motions: &[Motion],
    eps_rand: f64,
    rng: &mut RngStream,
) -> MotionId {
    let list = &cell.motions;
    assert!(!list.is_empty(), "cell without motions");
    let n = list.len();
    if rng.uniform() < eps_rand {
        let sigma = n as f64 / 3.0;
        let i = ((rng.standard_normal().abs() * sigma).floor() as usize).min(n - 1);
        return list[n - 1 - i];
    }
    let best = list
        .iter()
        .map(|m| motions[m.0].belief)
        .fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<MotionId> = list
        .iter()
        .copied()
        .filter(|m| motions[m.0].belief == best)
        .collect();
    ties[rng.index(ties.len())]
}

/// Controls from the root to `goal`, each cut at the state its child
/// branched from. The root itself contributes nothing.
pub fn path_to(motions: &[Motion], goal: MotionId) -> Result<Vec<(MotionId, Control)>> {
    let mut chain = Vec::new();
    let mut cur = goal;
    let mut cut: Option<u32> = None;
    for _ in 0..=motions.len() {
        let m = motions
            .get(cur.0)
            .ok_or_else(|| Error::Structure(format!("dangling motion {}", cur.0)))?;
        let Some(parent) = m.parent else {
            chain.reverse();
            return Ok(chain);
        };
        let mut control = m.control;
        if let Some(s) = cut {
            control.steps = s;
        }
        if control.steps > 0 {
            chain.push((cur, control));
        }
        if parent.0 >= cur.0 {
            return Err(Error::Structure(format!(
                "motion {} has a later parent",
                cur.0
            )));
        }
        let p = motions
            .get(parent.0)
            .ok_or_else(|| Error::Structure(format!("dangling parent {}", parent.0)))?;
        let branch = p.states.get(m.branch).ok_or_else(|| {
            Error::Structure(format!("motion {} branches past its parent", cur.0))
        })?;
        cut = Some(branch.step);
        cur = parent;
    }
    Err(Error::Structure("parent chain does not terminate".into()))
}
