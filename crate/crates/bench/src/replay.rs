//! Open-loop execution of plans under sampled uncertainty.

use pkpiece::physics::propagate_noisy;
use pkpiece::planner::{Plan, Query};
use pkpiece::uncertainty::{
    sample_contact_params, sample_control_disturbance, sample_initial_world,
};
use pkpiece::world::validity_check;
use pkpiece::RngStream;

/// Outcome of one noisy execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Success,
    /// The final robot pose is outside the goal region.
    MissedGoal,
    /// Some segment violated the validity constraints.
    Invalid,
    /// Initial poses could not be sampled, or the dynamics diverged.
    Error,
}

/// Runs `plan` once from a freshly sampled world: initial object poses from
/// the query beliefs, one contact-parameter draw per execution and one
/// control disturbance per plan step.
pub fn execute_once(query: &Query, plan: &Plan, rng: &mut RngStream) -> Execution {
    let Ok(mut world) = sample_initial_world(&query.world, &query.beliefs, rng) else {
        return Execution::Error;
    };
    let params = sample_contact_params(&query.noise, rng);
    let mut valid = true;
    for control in plan.controls() {
        let eps = sample_control_disturbance(&query.noise, rng);
        let Ok(p) = propagate_noisy(&world, control, &eps, &params, &query.physics) else {
            return Execution::Error;
        };
        valid &= validity_check(&p.world, &query.constraints, &p.trace);
        world = p.world;
    }
    if !valid {
        Execution::Invalid
    } else if query.goal.contains(&world.robot().pose) {
        Execution::Success
    } else {
        Execution::MissedGoal
    }
}

/// Fraction of `trials` noisy executions that end in the goal without any
/// validity violation. Trial `t` uses substream `t` of `seed`. Zero trials
/// give 0 with a warning.
pub fn replay_open_loop(query: &Query, plan: &Plan, trials: usize, seed: u64) -> f64 {
    if trials == 0 {
        log::warn!("replay with zero trials; reporting success fraction 0");
        return 0.0;
    }
    let master = RngStream::from_seed(seed);
    let ok = (0..trials)
        .filter(|t| {
            execute_once(query, plan, &mut master.substream(*t as u64)) == Execution::Success
        })
        .count();
    ok as f64 / trials as f64
}
