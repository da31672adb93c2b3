//! Planar rigid-body propagator for a tabletop world.
//!
//! Bodies slide on a horizontal table. Gravity acts only through Coulomb
//! friction against the table; body–body interactions go through a
//! sequential-impulse contact solver. Integration is semi-implicit Euler at a
//! fixed timestep, and the whole step is a pure function of its inputs.

pub mod collision;
pub mod solver;

use std::f64::consts::{PI, TAU};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::world::WorldState;
use crate::Error;

pub use solver::{solve_contacts, ContactImpulse};

pub type Vec2 = Vector2<f64>;

/// Wraps an angle to `(-pi, pi]`. Angles already in range are returned untouched.
pub fn wrap_angle(theta: f64) -> f64 {
    if theta > PI || theta <= -PI {
        let r = theta.rem_euclid(TAU);
        if r > PI {
            r - TAU
        } else {
            r
        }
    } else {
        theta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn distance(&self, other: &Pose) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }
}

/// Planar velocity: linear (m/s) and angular (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist {
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
}

impl Twist {
    pub fn linear(&self) -> Vec2 {
        Vec2::new(self.vx, self.vy)
    }

    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }

    pub fn is_finite(&self) -> bool {
        self.vx.is_finite() && self.vy.is_finite() && self.omega.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Disk { radius: f64 },
    Box { half_x: f64, half_y: f64 },
}

impl Shape {
    /// Radius of the circle enclosing the shape.
    pub fn bounding_radius(&self) -> f64 {
        match *self {
            Shape::Disk { radius } => radius,
            Shape::Box { half_x, half_y } => half_x.hypot(half_y),
        }
    }

    /// Radius of the largest inscribed circle.
    pub fn inner_radius(&self) -> f64 {
        match *self {
            Shape::Disk { radius } => radius,
            Shape::Box { half_x, half_y } => half_x.min(half_y),
        }
    }

    /// Moment of inertia of a uniform lamina of the given mass.
    pub fn inertia(&self, mass: f64) -> f64 {
        match *self {
            Shape::Disk { radius } => 0.5 * mass * radius * radius,
            Shape::Box { half_x, half_y } => mass * (half_x * half_x + half_y * half_y) / 3.0,
        }
    }

    /// Mean lever arm of a uniform pressure distribution over the footprint,
    /// used for torsional table friction.
    fn friction_radius(&self) -> f64 {
        match *self {
            Shape::Disk { radius } => 2.0 * radius / 3.0,
            // exact for a square, close enough for moderate aspect ratios
            Shape::Box { half_x, half_y } => 0.54 * half_x.hypot(half_y),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyClass {
    Robot,
    Target,
    Movable,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BodyId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Body {
    pub id: BodyId,
    pub shape: Shape,
    pub pose: Pose,
    pub velocity: Twist,
    pub mass: f64,
    pub inertia: f64,
    pub class: BodyClass,
    /// Coulomb coefficient of sliding friction against the table.
    pub support_friction: f64,
}

impl Body {
    pub fn is_fixed(&self) -> bool {
        self.class == BodyClass::Fixed
    }

    pub fn inv_mass(&self) -> f64 {
        if self.is_fixed() {
            0.0
        } else {
            1.0 / self.mass
        }
    }

    pub fn inv_inertia(&self) -> f64 {
        if self.is_fixed() {
            0.0
        } else {
            1.0 / self.inertia
        }
    }

    pub fn kinetic_energy(&self) -> f64 {
        if self.is_fixed() {
            return 0.0;
        }
        let v = &self.velocity;
        0.5 * self.mass * (v.vx * v.vx + v.vy * v.vy) + 0.5 * self.inertia * v.omega * v.omega
    }

    pub fn momentum(&self) -> Vec2 {
        if self.is_fixed() {
            Vec2::zeros()
        } else {
            self.velocity.linear() * self.mass
        }
    }
}

/// Contact dynamics parameters: friction between bodies, constraint softness
/// (CFM-like) and positional error reduction (ERP-like).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactParams {
    pub mu: f64,
    pub cfm: f64,
    pub erp: f64,
}

impl ContactParams {
    pub fn new(mu: f64, cfm: f64, erp: f64) -> crate::Result<Self> {
        let p = Self { mu, cfm, erp };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> crate::Result<()> {
        let ok = self.mu.is_finite()
            && self.cfm.is_finite()
            && self.erp.is_finite()
            && self.mu >= 0.0
            && self.cfm >= 0.0
            && (0.0..=1.0).contains(&self.erp);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "contact parameters out of range: {self:?}"
            )))
        }
    }

    /// Projects each parameter onto its admissible range.
    pub fn clamped(self) -> Self {
        Self {
            mu: self.mu.max(0.0),
            cfm: self.cfm.max(0.0),
            erp: self.erp.clamp(0.0, 1.0),
        }
    }
}

impl Default for ContactParams {
    fn default() -> Self {
        Self {
            mu: 0.3,
            cfm: 1e-5,
            erp: 0.2,
        }
    }
}

/// Planar wrench: force (N) and torque (N·m).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Wrench {
    pub fx: f64,
    pub fy: f64,
    pub torque: f64,
}

impl Wrench {
    pub fn new(fx: f64, fy: f64, torque: f64) -> Self {
        Self { fx, fy, torque }
    }

    pub fn is_finite(&self) -> bool {
        self.fx.is_finite() && self.fy.is_finite() && self.torque.is_finite()
    }
}

impl std::ops::Add for Wrench {
    type Output = Wrench;
    fn add(self, rhs: Wrench) -> Wrench {
        Wrench::new(self.fx + rhs.fx, self.fy + rhs.fy, self.torque + rhs.torque)
    }
}

/// A wrench held constant on the robot for `steps` physics steps.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Control {
    pub wrench: Wrench,
    pub steps: u32,
}

impl Control {
    pub fn new(wrench: Wrench, steps: u32) -> Self {
        Self { wrench, steps }
    }

    pub fn duration(&self, dt: f64) -> f64 {
        self.steps as f64 * dt
    }
}

/// Additive wrench noise applied for the whole duration of a control.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Disturbance(pub Wrench);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicsConfig {
    pub dt: f64,
    pub gravity: f64,
    pub solver_iterations: u32,
    /// Penetration tolerated before positional correction kicks in (m).
    pub slop: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            dt: 0.005,
            gravity: 9.81,
            solver_iterations: 10,
            slop: 5e-4,
        }
    }
}

/// Axis-aligned extent of a body center over a propagation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extent {
    pub min: Vec2,
    pub max: Vec2,
}

impl Extent {
    fn at(p: Vec2) -> Self {
        Self { min: p, max: p }
    }

    fn include(&mut self, p: Vec2) {
        self.min = self.min.inf(&p);
        self.max = self.max.sup(&p);
    }
}

/// Path summary of one propagation, consumed by the validity checker.
///
/// Index `i` of the per-object vectors refers to `world.objects()[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub steps: u32,
    pub robot_peak_speed: f64,
    pub robot_peak_angular_speed: f64,
    pub robot_extent: Extent,
    pub object_peak_speed: Vec<f64>,
    pub object_extent: Vec<Extent>,
    /// The target touched anything other than a fixed obstacle.
    pub target_contacted: bool,
    pub robot_fixed_contact: bool,
}

impl Trace {
    /// Trace of a zero-length propagation starting (and ending) at `world`.
    pub fn at_rest(world: &WorldState) -> Self {
        let robot = world.robot();
        Self {
            steps: 0,
            robot_peak_speed: robot.velocity.speed(),
            robot_peak_angular_speed: robot.velocity.omega.abs(),
            robot_extent: Extent::at(robot.pose.position()),
            object_peak_speed: world.objects().iter().map(|b| b.velocity.speed()).collect(),
            object_extent: world
                .objects()
                .iter()
                .map(|b| Extent::at(b.pose.position()))
                .collect(),
            target_contacted: false,
            robot_fixed_contact: false,
        }
    }

    fn record_step(&mut self, bodies: &[Body], contacts: &[ContactImpulse]) {
        self.steps += 1;
        let robot = &bodies[0];
        self.robot_peak_speed = self.robot_peak_speed.max(robot.velocity.speed());
        self.robot_peak_angular_speed = self
            .robot_peak_angular_speed
            .max(robot.velocity.omega.abs());
        self.robot_extent.include(robot.pose.position());
        for (i, b) in bodies[1..].iter().enumerate() {
            self.object_peak_speed[i] = self.object_peak_speed[i].max(b.velocity.speed());
            self.object_extent[i].include(b.pose.position());
        }
        for c in contacts {
            let (ca, cb) = (bodies[c.a].class, bodies[c.b].class);
            let has = |k: BodyClass| ca == k || cb == k;
            if has(BodyClass::Target) && !has(BodyClass::Fixed) {
                self.target_contacted = true;
            }
            if has(BodyClass::Robot) && has(BodyClass::Fixed) {
                self.robot_fixed_contact = true;
            }
        }
    }
}

/// Outcome of a propagation: the final world and its path summary.
#[derive(Debug, Clone)]
pub struct Propagation {
    pub world: WorldState,
    pub trace: Trace,
}

/// Advances `bodies` by one timestep with `wrench` applied to the robot
/// (index 0). Returns the contacts that were active during the step.
fn step(
    bodies: &mut [Body],
    wrench: &Wrench,
    params: &ContactParams,
    cfg: &PhysicsConfig,
) -> Vec<ContactImpulse> {
    let dt = cfg.dt;
    for (i, b) in bodies.iter_mut().enumerate() {
        if b.is_fixed() {
            continue;
        }
        if i == 0 {
            b.velocity.vx += dt * wrench.fx / b.mass;
            b.velocity.vy += dt * wrench.fy / b.mass;
            b.velocity.omega += dt * wrench.torque / b.inertia;
        }
        if b.support_friction > 0.0 {
            let speed = b.velocity.speed();
            let dv = b.support_friction * cfg.gravity * dt;
            if speed <= dv {
                b.velocity.vx = 0.0;
                b.velocity.vy = 0.0;
            } else {
                let scale = (speed - dv) / speed;
                b.velocity.vx *= scale;
                b.velocity.vy *= scale;
            }
            let dw = b.support_friction * cfg.gravity * b.shape.friction_radius() * b.mass
                / b.inertia
                * dt;
            if b.velocity.omega.abs() <= dw {
                b.velocity.omega = 0.0;
            } else {
                b.velocity.omega -= dw.copysign(b.velocity.omega);
            }
        }
    }

    let contacts = solver::solve_contacts_in_place(bodies, params, cfg);

    for b in bodies.iter_mut() {
        if b.is_fixed() {
            continue;
        }
        b.pose.x += dt * b.velocity.vx;
        b.pose.y += dt * b.velocity.vy;
        if b.velocity.omega != 0.0 {
            b.pose.theta = wrap_angle(b.pose.theta + dt * b.velocity.omega);
        }
    }

    solver::correct_positions(bodies, &contacts, params, cfg);
    contacts
}

/// Propagates `world` under `wrench` for `steps` steps, calling `observer`
/// after every step with the 1-based step index and the current world. The
/// observer returns `false` to stop early; the trace then covers only the
/// executed steps.
pub fn propagate_observed<F>(
    world: &WorldState,
    wrench: Wrench,
    steps: u32,
    params: &ContactParams,
    cfg: &PhysicsConfig,
    mut observer: F,
) -> crate::Result<Propagation>
where
    F: FnMut(u32, &WorldState) -> bool,
{
    if !wrench.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "non-finite wrench {wrench:?}"
        )));
    }
    let mut current = world.clone();
    let mut trace = Trace::at_rest(world);
    for k in 1..=steps {
        let contacts = step(current.bodies_mut(), &wrench, params, cfg);
        current.time += cfg.dt;
        if !current
            .bodies()
            .iter()
            .all(|b| b.pose.is_finite() && b.velocity.is_finite())
        {
            return Err(Error::Propagation { step: k });
        }
        trace.record_step(current.bodies(), &contacts);
        if !observer(k, &current) {
            break;
        }
    }
    Ok(Propagation {
        world: current,
        trace,
    })
}

/// Deterministic transition: applies `control` from `world` with nominal dynamics.
pub fn propagate(
    world: &WorldState,
    control: &Control,
    params: &ContactParams,
    cfg: &PhysicsConfig,
) -> crate::Result<Propagation> {
    propagate_observed(world, control.wrench, control.steps, params, cfg, |_, _| {
        true
    })
}

/// Stochastic transition: `propagate` with the disturbance added to the
/// control wrench for the whole duration.
pub fn propagate_noisy(
    world: &WorldState,
    control: &Control,
    disturbance: &Disturbance,
    params: &ContactParams,
    cfg: &PhysicsConfig,
) -> crate::Result<Propagation> {
    propagate_observed(
        world,
        control.wrench + disturbance.0,
        control.steps,
        params,
        cfg,
        |_, _| true,
    )
}
