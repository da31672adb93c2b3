//! Tree search driver.
//!
//! Each iteration selects a cell, a motion inside it, asks the motion
//! sampler for a new motion from one of its states, tests the new motion
//! against the goal, adds it to the tree and, in probabilistic mode, refits
//! the pose beliefs of any object the particles moved.
//!
//! Baseline mode uses the same loop with a single nominally checked
//! candidate per iteration, unbiased importance and half-normal motion
//! selection.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::kpiece::{
    path_to, select_motion_in_cell, BiasFactor, Grid, Motion, MotionId, ScoreConfig,
};
use crate::physics::{propagate, Body, Control, PhysicsConfig, Pose, Shape, Trace};
use crate::sampler::{motion_sampler, propagate_nominal, SamplerEnv, SamplerParams};
use crate::uncertainty::{update_pose_uncertainty, Beliefs, NoiseConfig};
use crate::world::{validity_check, ValidityConstraints, WorldState};
use crate::{Error, Result, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Probabilistic,
    Baseline,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Probabilistic => "probabilistic",
            Mode::Baseline => "baseline",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "probabilistic" | "p" => Ok(Mode::Probabilistic),
            "baseline" | "b" => Ok(Mode::Baseline),
            _ => Err(Error::InvalidArgument(format!("unknown mode '{s}'"))),
        }
    }
}

/// Disc of robot positions, optionally with a heading tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalRegion {
    pub center: Pose,
    pub radius: f64,
    pub angle_tolerance: Option<f64>,
}

impl GoalRegion {
    pub fn contains(&self, pose: &Pose) -> bool {
        let d = (pose.x - self.center.x).hypot(pose.y - self.center.y);
        if d > self.radius {
            return false;
        }
        match self.angle_tolerance {
            None => true,
            Some(tol) => crate::physics::wrap_angle(pose.theta - self.center.theta).abs() <= tol,
        }
    }

    fn overlaps_interior(&self, body: &Body) -> bool {
        let local = body.pose;
        let (dx, dy) = (self.center.x - local.x, self.center.y - local.y);
        match body.shape {
            Shape::Disk { radius } => dx.hypot(dy) < radius + self.radius,
            Shape::Box { half_x, half_y } => {
                let (s, c) = local.theta.sin_cos();
                let (lx, ly) = (c * dx + s * dy, -s * dx + c * dy);
                let ex = (lx.abs() - half_x).max(0.0);
                let ey = (ly.abs() - half_y).max(0.0);
                ex.hypot(ey) < self.radius
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerParams {
    /// Candidates per iteration.
    pub k: usize,
    /// Particles per candidate.
    pub n_p: usize,
    /// Probability of keeping a random candidate instead of the best.
    pub bias: f64,
    /// Probability of half-normal instead of greedy motion selection.
    pub eps_rand: f64,
    /// Grid cell side as a percentage of the longer workspace side.
    pub cell_size_percent: f64,
    /// Mixture components used when refitting beliefs.
    pub components: usize,
    pub min_duration: f64,
    pub max_duration: f64,
    pub state_stride: u32,
    /// Wall-clock budget (s).
    pub time_limit: f64,
    /// Optional iteration cap, for runs that must not depend on timing.
    pub max_iterations: Option<u64>,
    pub bias_factor: BiasFactor,
    pub score: ScoreConfig,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            k: 15,
            n_p: 10,
            bias: 0.1,
            eps_rand: 0.1,
            cell_size_percent: 4.0,
            components: 3,
            min_duration: 0.1,
            max_duration: 0.5,
            state_stride: 10,
            time_limit: 60.0,
            max_iterations: None,
            bias_factor: BiasFactor::CellCount,
            score: ScoreConfig::default(),
        }
    }
}

impl PlannerParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.k == 0 {
            return bad("k must be positive");
        }
        if !(0.0..=1.0).contains(&self.bias) || !(0.0..=1.0).contains(&self.eps_rand) {
            return bad("bias and eps_rand must lie in [0, 1]");
        }
        if !(self.cell_size_percent.is_finite() && self.cell_size_percent > 0.0) {
            return bad("cell size must be positive");
        }
        if self.components == 0 {
            return bad("at least one mixture component is needed");
        }
        if !(self.min_duration > 0.0
            && self.min_duration <= self.max_duration
            && self.max_duration.is_finite())
        {
            return bad("durations must satisfy 0 < min <= max");
        }
        if !(self.time_limit > 0.0) {
            return bad("time limit must be positive");
        }
        if self.state_stride == 0 {
            return bad("state stride must be positive");
        }
        if let BiasFactor::Fixed(f) = self.bias_factor {
            if !(f.is_finite() && f >= 0.0) {
                return bad("bias factor must be finite and >= 0");
            }
        }
        Ok(())
    }

    /// Step range for sampled durations.
    pub fn step_range(&self, dt: f64) -> Result<(u32, u32)> {
        let lo = (self.min_duration / dt - 1e-9).ceil().max(1.0) as u32;
        let hi = (self.max_duration / dt + 1e-9).floor() as u32;
        if lo > hi {
            return Err(Error::InvalidArgument(format!(
                "no multiple of {dt} s within [{}, {}]",
                self.min_duration, self.max_duration
            )));
        }
        Ok((lo, hi))
    }
}

/// One planning problem.
#[derive(Debug, Clone)]
pub struct Query {
    pub world: WorldState,
    pub beliefs: Beliefs,
    pub goal: GoalRegion,
    pub constraints: ValidityConstraints,
    pub noise: NoiseConfig,
    pub physics: PhysicsConfig,
    pub params: PlannerParams,
    pub mode: Mode,
}

impl Query {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.constraints.validate()?;
        self.noise.validate()?;
        if self.beliefs.len() != self.world.objects().len() {
            return Err(Error::Structure(
                "one belief slot per object expected".into(),
            ));
        }
        if !(self.goal.radius > 0.0 && self.goal.center.is_finite()) {
            return Err(Error::InvalidArgument(
                "goal radius must be positive".into(),
            ));
        }
        if let Some(o) = self
            .world
            .objects()
            .iter()
            .find(|o| o.is_fixed() && self.goal.overlaps_interior(o))
        {
            return Err(Error::InvalidArgument(format!(
                "goal overlaps fixed body {}",
                o.id.0
            )));
        }
        if !validity_check(&self.world, &self.constraints, &Trace::at_rest(&self.world)) {
            return Err(Error::InvalidArgument(
                "initial world violates the constraints".into(),
            ));
        }
        Ok(())
    }

    fn cell_side(&self) -> f64 {
        let ws = &self.constraints.workspace;
        self.params.cell_size_percent / 100.0 * ws.width().max(ws.height())
    }
}

/// Counters describing one planner run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanStatistics {
    pub iterations: u64,
    /// Motions in the tree, including the root.
    pub states: usize,
    pub cells: usize,
    pub nominal_propagations: usize,
    pub particle_propagations: usize,
    /// Belief refits performed after accepted motions.
    pub belief_updates: usize,
    /// Wall-clock time; excluded from determinism comparisons.
    pub wall_time_s: f64,
}

impl PlanStatistics {
    /// The statistics with wall time zeroed.
    pub fn without_time(mut self) -> Self {
        self.wall_time_s = 0.0;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub control: Control,
    pub belief: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub steps: Vec<PlanStep>,
    /// Total duration (s).
    pub duration: f64,
    pub statistics: PlanStatistics,
}

impl Plan {
    pub fn controls(&self) -> impl Iterator<Item = &Control> {
        self.steps.iter().map(|s| &s.control)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Solved(Plan),
    /// Budget exhausted without reaching the goal.
    Failed(PlanStatistics),
}

impl Outcome {
    pub fn statistics(&self) -> &PlanStatistics {
        match self {
            Outcome::Solved(p) => &p.statistics,
            Outcome::Failed(s) => s,
        }
    }

    pub fn plan(&self) -> Option<&Plan> {
        match self {
            Outcome::Solved(p) => Some(p),
            Outcome::Failed(_) => None,
        }
    }
}

/// Root-first controls leading to `goal`; the root contributes nothing.
pub fn extract_path(
    grid: &Grid,
    goal: MotionId,
    dt: f64,
    statistics: PlanStatistics,
) -> Result<Plan> {
    let chain = path_to(grid.motions(), goal)?;
    let steps: Vec<PlanStep> = chain
        .into_iter()
        .map(|(id, control)| PlanStep {
            control,
            belief: grid.motion(id).belief,
        })
        .collect();
    let duration = steps.iter().map(|s| s.control.duration(dt)).sum();
    Ok(Plan {
        steps,
        duration,
        statistics,
    })
}

/// Executes `plan` from `world` with nominal dynamics. Returns the final
/// world and whether every segment passed the validity check.
pub fn replay_nominal(
    world: &WorldState,
    plan: &Plan,
    noise: &NoiseConfig,
    physics: &PhysicsConfig,
    constraints: &ValidityConstraints,
) -> Result<(WorldState, bool)> {
    let mut w = world.clone();
    let mut valid = true;
    for c in plan.controls() {
        let p = propagate(&w, c, &noise.nominal_contact, physics)?;
        valid &= validity_check(&p.world, constraints, &p.trace);
        w = p.world;
    }
    Ok((w, valid))
}

/// Searches for a control sequence from `query.world` into `query.goal`.
pub fn plan(query: &Query, seed: u64) -> Result<Outcome> {
    query.validate()?;
    let started = Instant::now();
    let params = &query.params;
    let dt = query.physics.dt;
    let (min_steps, max_steps) = params.step_range(dt)?;
    let probabilistic = query.mode == Mode::Probabilistic;
    let sampler = SamplerParams {
        k: if probabilistic { params.k } else { 1 },
        n_p: if probabilistic { params.n_p } else { 0 },
        bias: params.bias,
        min_steps,
        max_steps,
        state_stride: params.state_stride,
    };
    let (eps_rand, bias_factor) = if probabilistic {
        (params.eps_rand, params.bias_factor)
    } else {
        (1.0, BiasFactor::Off)
    };

    let master = RngStream::from_seed(seed);
    let mut select_rng = master.substream(0);
    let mut sample_rng = master.substream(1);
    let mut em_rng = master.substream(2);

    let mut grid = Grid::new(query.cell_side(), Motion::root(query.world.clone()))?;
    let mut beliefs = query.beliefs.clone();
    let mut stats = PlanStatistics::default();
    let finish = |grid: &Grid, mut stats: PlanStatistics| {
        stats.states = grid.motions().len();
        stats.cells = grid.cells().len();
        stats.wall_time_s = started.elapsed().as_secs_f64();
        stats
    };

    if query.goal.contains(&query.world.robot().pose) {
        return Ok(Outcome::Solved(extract_path(
            &grid,
            MotionId(0),
            dt,
            finish(&grid, stats),
        )?));
    }

    loop {
        if started.elapsed().as_secs_f64() >= params.time_limit
            || params.max_iterations.is_some_and(|m| stats.iterations >= m)
        {
            return Ok(Outcome::Failed(finish(&grid, stats)));
        }
        stats.iterations += 1;

        let f = bias_factor.value(grid.cells().len());
        let cell = grid.select_cell(f, &mut select_rng);
        let source =
            select_motion_in_cell(grid.cell(cell), grid.motions(), eps_rand, &mut select_rng);
        let env = SamplerEnv {
            constraints: &query.constraints,
            noise: &query.noise,
            physics: &query.physics,
            beliefs: &beliefs,
        };
        let out = motion_sampler(source, grid.motion(source), &sampler, &env, &mut sample_rng)?;
        stats.nominal_propagations += out.stats.nominal_propagations;
        stats.particle_propagations += out.stats.particle_propagations;

        let Some(mut eval) = out.chosen else {
            grid.update_score(cell, 0, 0.0, &params.score);
            grid.advance_iteration();
            continue;
        };

        let reached = eval
            .nominal
            .robot_path
            .iter()
            .position(|p| query.goal.contains(p))
            .map(|i| i as u32 + 1);
        if let Some(s) = reached {
            if s < eval.nominal.motion.control.steps {
                let m = &eval.nominal.motion;
                let start = &grid.motion(source).states[m.branch].world;
                let mut cut = m.clone();
                cut.control.steps = s;
                cut.states.clear();
                eval.nominal = propagate_nominal(
                    start,
                    cut,
                    &query.noise,
                    &query.physics,
                    params.state_stride,
                )?;
                stats.nominal_propagations += 1;
            }
        }

        let outcomes = std::mem::take(&mut eval.particle_outcomes);
        let motion = eval.into_motion();
        let elapsed = motion.control.duration(dt);
        let (id, new_cell) = grid.add_motion(motion)?;

        if probabilistic && sampler.n_p > 0 {
            let (next, report) =
                update_pose_uncertainty(&beliefs, &outcomes, params.components, &mut em_rng)?;
            stats.belief_updates += report.refitted.len();
            beliefs = next;
        }
        grid.update_score(cell, usize::from(new_cell), elapsed, &params.score);

        if reached.is_some() {
            let stats = finish(&grid, stats);
            return Ok(Outcome::Solved(extract_path(&grid, id, dt, stats)?));
        }
        grid.advance_iteration();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::{BodyClass, ContactParams};
    use crate::uncertainty::initial_beliefs;
    use crate::world::test_support::{constraints, disk, world_with};

    fn query(world: WorldState, goal: Pose, mode: Mode) -> Query {
        let n = world.objects().len();
        let beliefs = initial_beliefs(&world, &vec![[1e-4, 1e-4, 0.01]; n]).unwrap();
        Query {
            world,
            beliefs,
            goal: GoalRegion {
                center: goal,
                radius: 0.04,
                angle_tolerance: None,
            },
            constraints: constraints(),
            noise: NoiseConfig::noiseless(ContactParams::default()),
            physics: PhysicsConfig::default(),
            params: PlannerParams {
                k: 3,
                n_p: 3,
                time_limit: 30.0,
                max_iterations: Some(3000),
                ..PlannerParams::default()
            },
            mode,
        }
    }

    fn empty_world() -> WorldState {
        world_with(vec![disk(BodyClass::Target, 0.45, 0.25, 0.03)])
    }

    #[test]
    fn start_inside_goal_gives_empty_plan() {
        let q = query(
            empty_world(),
            Pose::new(-0.39, 0.0, 0.0),
            Mode::Probabilistic,
        );
        let out = plan(&q, 1).unwrap();
        let p = out.plan().unwrap();
        assert!(p.steps.is_empty());
        assert_eq!(p.duration, 0.0);
        assert_eq!(p.statistics.iterations, 0);
    }

    #[test]
    fn invalid_queries_are_rejected() {
        let mut q = query(empty_world(), Pose::new(0.1, 0.0, 0.0), Mode::Baseline);
        q.params.k = 0;
        assert!(matches!(plan(&q, 0), Err(Error::InvalidArgument(_))));

        let mut w = empty_world();
        w.bodies_mut()[0].pose.x = 0.9;
        let q = query(w, Pose::new(0.1, 0.0, 0.0), Mode::Baseline);
        assert!(matches!(plan(&q, 0), Err(Error::InvalidArgument(_))));

        let mut wall = disk(BodyClass::Fixed, 0.1, 0.0, 0.05);
        wall.mass = 1.0;
        let w = world_with(vec![disk(BodyClass::Target, 0.45, 0.25, 0.03), wall]);
        let q = query(w, Pose::new(0.12, 0.0, 0.0), Mode::Baseline);
        assert!(matches!(plan(&q, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn solves_empty_table_and_replays_into_goal() {
        for mode in [Mode::Probabilistic, Mode::Baseline] {
            let q = query(empty_world(), Pose::new(0.1, 0.0, 0.0), mode);
            let out = plan(&q, 7).unwrap();
            let p = out
                .plan()
                .unwrap_or_else(|| panic!("{mode:?} failed: {:?}", out.statistics()));
            assert!(!p.steps.is_empty());
            let (end, valid) =
                replay_nominal(&q.world, p, &q.noise, &q.physics, &q.constraints).unwrap();
            assert!(valid);
            assert!(q.goal.contains(&end.robot().pose));
            let total: u32 = p.controls().map(|c| c.steps).sum();
            assert!((p.duration - total as f64 * 0.005).abs() < 1e-9);
        }
    }

    #[test]
    fn same_seed_same_plan() {
        let w = world_with(vec![
            disk(BodyClass::Target, 0.45, 0.25, 0.03),
            disk(BodyClass::Movable, -0.2, 0.0, 0.03),
            disk(BodyClass::Movable, -0.1, 0.08, 0.03),
        ]);
        let mut q = query(w, Pose::new(0.1, 0.0, 0.0), Mode::Probabilistic);
        q.noise.control_variance = [0.05, 0.05, 0.0];
        let a = plan(&q, 3).unwrap();
        let b = plan(&q, 3).unwrap();
        assert_eq!(a.statistics().without_time(), b.statistics().without_time());
        assert_eq!(a.plan().map(|p| &p.steps), b.plan().map(|p| &p.steps));
    }

    #[test]
    fn iteration_cap_reports_failure() {
        let mut q = query(empty_world(), Pose::new(0.4, -0.2, 0.0), Mode::Baseline);
        q.params.max_iterations = Some(2);
        match plan(&q, 0).unwrap() {
            Outcome::Failed(s) => {
                assert_eq!(s.iterations, 2);
                assert_eq!(s.nominal_propagations, 2);
            }
            Outcome::Solved(_) => panic!("cannot solve in two short motions"),
        }
    }

    #[test]
    fn noiseless_single_particle_matches_baseline() {
        let w = world_with(vec![
            disk(BodyClass::Target, 0.45, 0.25, 0.03),
            disk(BodyClass::Movable, -0.2, 0.0, 0.03),
        ]);
        let mut p = query(w.clone(), Pose::new(0.2, 0.1, 0.0), Mode::Probabilistic);
        p.params.k = 1;
        p.params.n_p = 1;
        p.params.eps_rand = 1.0;
        p.params.bias_factor = BiasFactor::Off;
        p.beliefs = initial_beliefs(&w, &[[0.0; 3]; 2]).unwrap();
        p.params.max_iterations = Some(300);
        let mut b = p.clone();
        b.mode = Mode::Baseline;
        let (po, bo) = (plan(&p, 5).unwrap(), plan(&b, 5).unwrap());
        let (ps, bs) = (po.statistics(), bo.statistics());
        assert_eq!(ps.iterations, bs.iterations);
        assert_eq!(ps.nominal_propagations, bs.nominal_propagations);
        assert_eq!((ps.states, ps.cells), (bs.states, bs.cells));
        assert_eq!(
            po.plan().map(|p| p.steps.len()),
            bo.plan().map(|p| p.steps.len())
        );
    }
}
