use std::collections::HashMap;

use super::{project, Motion, MotionId, ScoreConfig, EXTERIOR_PROBABILITY};
use crate::physics::Vec2;
use crate::{Error, Result, RngStream};

pub type CellCoord = (i64, i64);

const AXIS_NEIGHBORS: [CellCoord; 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub coord: CellCoord,
    /// Motions whose final state projects here, oldest first.
    pub motions: Vec<MotionId>,
    /// Timesteps of all motions in the cell (the root counts as one).
    pub coverage: u64,
    /// Number of instantiated axis-aligned neighbours.
    pub neighbors: u32,
    /// Iteration at which the cell was created.
    pub created: u64,
    /// Times the cell was selected for expansion.
    pub selections: u64,
    pub score: f64,
    /// Normalized cell belief.
    pub belief: f64,
    belief_sum: f64,
    pub interior: bool,
}

impl Cell {
    pub fn mean_belief(&self) -> f64 {
        if self.motions.is_empty() {
            0.0
        } else {
            self.belief_sum / self.motions.len() as f64
        }
    }
}

/// Projection grid plus the motion arena.
#[derive(Debug, Clone)]
pub struct Grid {
    cell_side: f64,
    cells: Vec<Cell>,
    index: HashMap<CellCoord, usize>,
    motions: Vec<Motion>,
    motion_cell: Vec<usize>,
    iteration: u64,
    total_coverage: u64,
}

impl Grid {
    /// A grid holding only `root`. The iteration counter starts at 1.
    pub fn new(cell_side: f64, root: Motion) -> Result<Self> {
        if !(cell_side.is_finite() && cell_side > 0.0) {
            return Err(Error::InvalidArgument(format!("cell side {cell_side}")));
        }
        if !root.is_root() {
            return Err(Error::InvalidArgument("first motion must be a root".into()));
        }
        let mut g = Self {
            cell_side,
            cells: Vec::new(),
            index: HashMap::new(),
            motions: Vec::new(),
            motion_cell: Vec::new(),
            iteration: 1,
            total_coverage: 0,
        };
        g.insert(root);
        Ok(g)
    }

    pub fn cell_side(&self) -> f64 {
        self.cell_side
    }

    pub fn coord_of(&self, p: Vec2) -> CellCoord {
        (
            (p.x / self.cell_side).floor() as i64,
            (p.y / self.cell_side).floor() as i64,
        )
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn cell(&self, idx: usize) -> &Cell {
        &self.cells[idx]
    }

    pub fn find(&self, coord: CellCoord) -> Option<usize> {
        self.index.get(&coord).copied()
    }

    pub fn motions(&self) -> &[Motion] {
        &self.motions
    }

    pub fn motion(&self, id: MotionId) -> &Motion {
        &self.motions[id.0]
    }

    pub fn cell_of(&self, id: MotionId) -> usize {
        self.motion_cell[id.0]
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn advance_iteration(&mut self) {
        self.iteration += 1;
    }

    pub fn total_coverage(&self) -> u64 {
        self.total_coverage
    }

    /// Inserts `motion` into the cell of its final state, creating the cell
    /// if needed, and renormalizes cell beliefs. Returns the motion id and
    /// whether a new cell was created.
    pub fn add_motion(&mut self, motion: Motion) -> Result<(MotionId, bool)> {
        let parent = motion
            .parent
            .ok_or_else(|| Error::InvalidArgument("only the first motion may be a root".into()))?;
        let p = self
            .motions
            .get(parent.0)
            .ok_or_else(|| Error::Structure(format!("unknown parent {}", parent.0)))?;
        if motion.branch >= p.states.len() {
            return Err(Error::Structure(
                "branch index past the parent's states".into(),
            ));
        }
        if !(0.0..=1.0).contains(&motion.belief) {
            return Err(Error::InvalidArgument(format!("belief {}", motion.belief)));
        }
        if motion.control.steps == 0 || motion.states.is_empty() {
            return Err(Error::InvalidArgument(
                "non-root motions need a positive duration".into(),
            ));
        }
        Ok(self.insert(motion))
    }

    fn insert(&mut self, motion: Motion) -> (MotionId, bool) {
        let coord = self.coord_of(project(motion.last_state()));
        let (idx, created) = match self.index.get(&coord) {
            Some(&i) => (i, false),
            None => (self.create_cell(coord), true),
        };
        let id = MotionId(self.motions.len());
        let cov = u64::from(motion.control.steps.max(1));
        let cell = &mut self.cells[idx];
        cell.motions.push(id);
        cell.coverage += cov;
        cell.belief_sum += motion.belief;
        self.total_coverage += cov;
        self.motions.push(motion);
        self.motion_cell.push(idx);
        self.normalize_beliefs();
        (id, created)
    }

    fn create_cell(&mut self, coord: CellCoord) -> usize {
        let idx = self.cells.len();
        let mut neighbors = 0;
        for (dx, dy) in AXIS_NEIGHBORS {
            if let Some(&n) = self.index.get(&(coord.0 + dx, coord.1 + dy)) {
                neighbors += 1;
                let c = &mut self.cells[n];
                c.neighbors += 1;
                c.interior = c.neighbors as usize == AXIS_NEIGHBORS.len();
            }
        }
        self.cells.push(Cell {
            coord,
            motions: Vec::new(),
            coverage: 0,
            neighbors,
            created: self.iteration,
            selections: 0,
            score: 1.0,
            belief: 0.0,
            belief_sum: 0.0,
            interior: neighbors as usize == AXIS_NEIGHBORS.len(),
        });
        self.index.insert(coord, idx);
        idx
    }

    /// Cell belief = mean motion belief, normalized over all cells; uniform
    /// when every motion belief is zero.
    fn normalize_beliefs(&mut self) {
        let total: f64 = self.cells.iter().map(Cell::mean_belief).sum();
        let n = self.cells.len() as f64;
        for c in &mut self.cells {
            c.belief = if total > 0.0 {
                c.mean_belief() / total
            } else {
                1.0 / n
            };
        }
    }

    /// Chooses the exterior set with probability 0.75 (when both sets are
    /// non-empty), returns its most important cell and counts the selection.
    /// Ties go to the oldest cell, then the smallest coordinate.
    pub fn select_cell(&mut self, f: f64, rng: &mut RngStream) -> usize {
        assert!(!self.cells.is_empty(), "empty grid");
        let want_exterior = rng.uniform() < EXTERIOR_PROBABILITY;
        let has_exterior = self.cells.iter().any(|c| !c.interior);
        let has_interior = self.cells.iter().any(|c| c.interior);
        let exterior = (want_exterior && has_exterior) || !has_interior;
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in self.cells.iter().enumerate() {
            if c.interior == exterior {
                continue;
            }
            let imp = super::importance(c, f);
            let better = match best {
                None => true,
                Some((j, b)) => {
                    let o = &self.cells[j];
                    imp > b || (imp == b && (c.created, c.coord) < (o.created, o.coord))
                }
            };
            if better {
                best = Some((i, imp));
            }
        }
        let (idx, _) = best.expect("chosen set is non-empty");
        self.cells[idx].selections += 1;
        idx
    }

    pub fn update_score(&mut self, cell: usize, gain: usize, elapsed: f64, cfg: &ScoreConfig) {
        let c = &mut self.cells[cell];
        c.score = cfg.updated(c.score, gain, elapsed);
    }
}
