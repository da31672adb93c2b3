//! Candidate and particle motion generation.
//!
//! A call to [`motion_sampler`] picks one stored state of the source motion,
//! draws `k` random controls from it, propagates each nominally, and scores
//! every nominally valid candidate with `n_p` noisy re-executions. The belief
//! of a candidate is the fraction of particles passing the validity check
//! times the fraction passing the displacement check.
//!
//! Random streams are assigned by index: candidate `c` draws from
//! `base.substream(c)` and its particle `p` from a fork of that, so results do
//! not depend on evaluation order.

use crate::kpiece::{Motion, MotionId, StoredState};
use crate::physics::{
    propagate_noisy, propagate_observed, Control, PhysicsConfig, Pose, Trace, Wrench,
};
use crate::uncertainty::{
    sample_contact_params, sample_control_disturbance, sample_particle_world, NoiseConfig,
    ObjectOutcomes, PoseBelief,
};
use crate::world::{
    interaction_evaluator, movable_displacements, validity_check, ControlBounds,
    ValidityConstraints, WorldState,
};
use crate::{Error, Result, RngStream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerParams {
    /// Candidates per call.
    pub k: usize,
    /// Particles per candidate. Zero evaluates candidates nominally only,
    /// giving every valid candidate belief 1.
    pub n_p: usize,
    /// Probability of returning a uniformly random valid candidate instead
    /// of the best one.
    pub bias: f64,
    pub min_steps: u32,
    pub max_steps: u32,
    /// Intermediate states are stored every `state_stride` steps.
    pub state_stride: u32,
}

/// Everything a particle evaluation reads but never modifies.
#[derive(Debug, Clone, Copy)]
pub struct SamplerEnv<'a> {
    pub constraints: &'a ValidityConstraints,
    pub noise: &'a NoiseConfig,
    pub physics: &'a PhysicsConfig,
    pub beliefs: &'a [Option<PoseBelief>],
}

/// Propagation counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SamplerStats {
    pub nominal_propagations: usize,
    pub particle_propagations: usize,
    pub valid_candidates: usize,
}

impl std::ops::AddAssign for SamplerStats {
    fn add_assign(&mut self, o: Self) {
        self.nominal_propagations += o.nominal_propagations;
        self.particle_propagations += o.particle_propagations;
        self.valid_candidates += o.valid_candidates;
    }
}

/// A nominally propagated candidate.
#[derive(Debug, Clone)]
pub struct Nominal {
    /// The candidate with its stored states filled in.
    pub motion: Motion,
    pub trace: Trace,
    /// Robot pose after each step, index `s - 1` for step `s`.
    pub robot_path: Vec<Pose>,
}

impl Nominal {
    pub fn final_state(&self) -> &WorldState {
        self.motion.last_state()
    }
}

#[derive(Debug, Clone)]
pub struct CandidateEvaluation {
    pub nominal: Nominal,
    pub n_p: usize,
    pub valid_state: usize,
    pub valid_interaction: usize,
    pub p_state: f64,
    pub p_int: f64,
    pub belief: f64,
    /// Final poses of every object across the particles, aligned with
    /// `WorldState::objects()`.
    pub particle_outcomes: Vec<ObjectOutcomes>,
}

impl CandidateEvaluation {
    /// Belief from particle counts.
    pub fn from_counts(
        nominal: Nominal,
        n_p: usize,
        valid_state: usize,
        valid_interaction: usize,
    ) -> Result<Self> {
        if n_p == 0 {
            return Err(Error::InvalidArgument("n_p must be positive".into()));
        }
        if valid_state > n_p || valid_interaction > n_p {
            return Err(Error::InvalidArgument("more passes than particles".into()));
        }
        let p_state = valid_state as f64 / n_p as f64;
        let p_int = valid_interaction as f64 / n_p as f64;
        Ok(Self {
            nominal,
            n_p,
            valid_state,
            valid_interaction,
            p_state,
            p_int,
            belief: p_state * p_int,
            particle_outcomes: Vec::new(),
        })
    }

    pub fn into_motion(self) -> Motion {
        let mut m = self.nominal.motion;
        m.belief = self.belief;
        m
    }
}

/// Draws `k` candidates sharing one start state, picked uniformly from the
/// states stored in `source`. Controls are uniform within `bounds`; step
/// counts uniform in `[min_steps, max_steps]`.
pub fn sample_candidates(
    source_id: MotionId,
    source: &Motion,
    k: usize,
    bounds: &ControlBounds,
    min_steps: u32,
    max_steps: u32,
    rng: &mut RngStream,
) -> Result<Vec<Motion>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    if min_steps == 0 || min_steps > max_steps {
        return Err(Error::InvalidArgument(format!(
            "step range [{min_steps}, {max_steps}]"
        )));
    }
    if source.states.is_empty() {
        return Err(Error::Structure("source motion has no states".into()));
    }
    let branch = rng.index(source.states.len());
    let span = (max_steps - min_steps) as usize + 1;
    Ok((0..k)
        .map(|_| {
            let wrench = Wrench::new(
                rng.uniform_in(bounds.fx.lo, bounds.fx.hi),
                rng.uniform_in(bounds.fy.lo, bounds.fy.hi),
                rng.uniform_in(bounds.torque.lo, bounds.torque.hi),
            );
            let steps = min_steps + rng.index(span) as u32;
            Motion {
                parent: Some(source_id),
                branch,
                control: Control::new(wrench, steps),
                belief: 0.0,
                states: Vec::new(),
            }
        })
        .collect())
}

/// Nominal propagation of `candidate` from `start`, storing every
/// `stride`-th state and the final one.
pub fn propagate_nominal(
    start: &WorldState,
    mut candidate: Motion,
    noise: &NoiseConfig,
    physics: &PhysicsConfig,
    stride: u32,
) -> Result<Nominal> {
    let stride = stride.max(1);
    let total = candidate.control.steps;
    let mut states = Vec::new();
    let mut robot_path = Vec::with_capacity(total as usize);
    let prop = propagate_observed(
        start,
        candidate.control.wrench,
        total,
        &noise.nominal_contact,
        physics,
        |k, w| {
            robot_path.push(w.robot().pose);
            if k % stride == 0 && k != total {
                states.push(StoredState {
                    step: k,
                    world: w.clone(),
                });
            }
            true
        },
    )?;
    states.push(StoredState {
        step: total,
        world: prop.world,
    });
    candidate.states = states;
    Ok(Nominal {
        motion: candidate,
        trace: prop.trace,
        robot_path,
    })
}

/// Scores a nominally valid candidate with `n_p` particles.
///
/// Each particle perturbs the movable objects' start poses with their
/// beliefs (re-centred on the start state), draws contact parameters and a
/// control disturbance, and re-executes the control. Displacements are
/// measured from the particle's own start poses.
pub fn evaluate_particles(
    nominal: Nominal,
    start: &WorldState,
    n_p: usize,
    env: &SamplerEnv<'_>,
    rng: &mut RngStream,
    stats: &mut SamplerStats,
) -> Result<CandidateEvaluation> {
    if n_p == 0 {
        return Err(Error::InvalidArgument("n_p must be positive".into()));
    }
    let control = nominal.motion.control;
    let n_obj = start.objects().len();
    let mut outcomes = vec![ObjectOutcomes::default(); n_obj];
    let (mut v_state, mut v_int) = (0, 0);
    let streams = rng.fork();
    for p in 0..n_p {
        let mut prng = streams.substream(p as u64);
        let Ok(perturbed) = sample_particle_world(start, env.beliefs, &mut prng) else {
            continue;
        };
        let params = sample_contact_params(env.noise, &mut prng);
        let eps = sample_control_disturbance(env.noise, &mut prng);
        stats.particle_propagations += 1;
        let Ok(prop) = propagate_noisy(&perturbed, &control, &eps, &params, env.physics) else {
            continue;
        };
        if validity_check(&prop.world, env.constraints, &prop.trace) {
            v_state += 1;
        }
        let disp = movable_displacements(&perturbed, &prop.world)?;
        if interaction_evaluator(&disp, env.constraints.displacement_threshold) {
            v_int += 1;
        }
        for (i, (before, after)) in perturbed
            .objects()
            .iter()
            .zip(prop.world.objects())
            .enumerate()
        {
            let out = &mut outcomes[i];
            out.final_poses.push(after.pose);
            out.max_displacement = out.max_displacement.max(before.pose.distance(&after.pose));
        }
    }
    let mut eval = CandidateEvaluation::from_counts(nominal, n_p, v_state, v_int)?;
    eval.particle_outcomes = outcomes;
    Ok(eval)
}

/// Result of one sampler call.
#[derive(Debug, Clone)]
pub struct SamplerOutcome {
    pub chosen: Option<CandidateEvaluation>,
    pub stats: SamplerStats,
}

/// Samples `k` candidates from `source`, discards those whose nominal
/// propagation is invalid, evaluates the rest with particles and returns
/// the best one (or, with probability `bias`, a random one).
pub fn motion_sampler(
    source_id: MotionId,
    source: &Motion,
    params: &SamplerParams,
    env: &SamplerEnv<'_>,
    rng: &mut RngStream,
) -> Result<SamplerOutcome> {
    let mut base = rng.fork();
    let candidates = sample_candidates(
        source_id,
        source,
        params.k,
        &env.constraints.control_bounds,
        params.min_steps,
        params.max_steps,
        &mut base,
    )?;
    let start = &source.states[candidates[0].branch].world;
    let mut stats = SamplerStats::default();
    let mut valid = Vec::new();
    for (c, cand) in candidates.into_iter().enumerate() {
        stats.nominal_propagations += 1;
        let Ok(nominal) =
            propagate_nominal(start, cand, env.noise, env.physics, params.state_stride)
        else {
            continue;
        };
        if !validity_check(nominal.final_state(), env.constraints, &nominal.trace) {
            continue;
        }
        stats.valid_candidates += 1;
        let eval = if params.n_p == 0 {
            CandidateEvaluation::from_counts(nominal, 1, 1, 1)?
        } else {
            let mut crng = base.substream(c as u64);
            evaluate_particles(nominal, start, params.n_p, env, &mut crng, &mut stats)?
        };
        valid.push(eval);
    }
    let pick = choose(&valid, params.bias, &mut base);
    Ok(SamplerOutcome {
        chosen: pick.map(|i| valid.swap_remove(i)),
        stats,
    })
}

/// Index of the returned candidate: with probability `1 - bias` the highest
/// belief (uniform among ties), otherwise uniform.
fn choose(valid: &[CandidateEvaluation], bias: f64, rng: &mut RngStream) -> Option<usize> {
    if valid.is_empty() {
        return None;
    }
    if rng.uniform() < bias {
        return Some(rng.index(valid.len()));
    }
    let best = valid
        .iter()
        .map(|e| e.belief)
        .fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = (0..valid.len())
        .filter(|&i| valid[i].belief == best)
        .collect();
    Some(ties[rng.index(ties.len())])
}
