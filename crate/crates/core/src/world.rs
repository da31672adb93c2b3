//! World state, the state-validity checker and the displacement-based
//! interaction evaluator.

use serde::{Deserialize, Serialize};

use crate::physics::{Body, BodyClass, Extent, Pose, Trace};
use crate::{Error, Result};

/// Robot plus objects. The robot is stored first; `objects()[i]` always
/// refers to the same object across propagation.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    bodies: Vec<Body>,
    pub time: f64,
}

impl WorldState {
    pub fn new(robot: Body, objects: Vec<Body>) -> Result<Self> {
        if robot.class != BodyClass::Robot {
            return Err(Error::InvalidArgument(
                "robot body must have class robot".into(),
            ));
        }
        let robots = objects
            .iter()
            .filter(|b| b.class == BodyClass::Robot)
            .count();
        let targets = objects
            .iter()
            .filter(|b| b.class == BodyClass::Target)
            .count();
        if robots != 0 || targets != 1 {
            return Err(Error::InvalidArgument(format!(
                "world needs exactly one robot and one target (found {} robots, {targets} targets)",
                robots + 1
            )));
        }
        for b in std::iter::once(&robot).chain(&objects) {
            if !b.is_fixed() && !(b.mass > 0.0 && b.inertia > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "body {:?} needs positive mass and inertia",
                    b.id
                )));
            }
        }
        let mut bodies = Vec::with_capacity(objects.len() + 1);
        bodies.push(robot);
        bodies.extend(objects);
        Ok(Self { bodies, time: 0.0 })
    }

    pub fn robot(&self) -> &Body {
        &self.bodies[0]
    }

    pub fn objects(&self) -> &[Body] {
        &self.bodies[1..]
    }

    pub fn objects_mut(&mut self) -> &mut [Body] {
        &mut self.bodies[1..]
    }

    /// Robot followed by all objects.
    pub fn bodies(&self) -> &[Body] {
        &self.bodies
    }

    pub fn bodies_mut(&mut self) -> &mut Vec<Body> {
        &mut self.bodies
    }

    pub fn target_index(&self) -> usize {
        self.objects()
            .iter()
            .position(|b| b.class == BodyClass::Target)
            .expect("world invariant: one target")
    }

    pub fn object_poses(&self) -> Vec<Pose> {
        self.objects().iter().map(|b| b.pose).collect()
    }

    pub fn kinetic_energy(&self) -> f64 {
        self.bodies.iter().map(Body::kinetic_energy).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Rect {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Self {
            min_x,
            min_y,
            max_x,
            max_y,
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min_x && x <= self.max_x && y >= self.min_y && y <= self.max_y
    }

    pub fn contains_extent(&self, e: &Extent) -> bool {
        self.contains(e.min.x, e.min.y) && self.contains(e.max.x, e.max.y)
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        self.contains(other.min_x, other.min_y) && self.contains(other.max_x, other.max_y)
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn is_finite(&self) -> bool {
        self.min_x.is_finite()
            && self.min_y.is_finite()
            && self.max_x.is_finite()
            && self.max_y.is_finite()
    }
}

/// Closed interval used for control bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlBounds {
    pub fx: Interval,
    pub fy: Interval,
    pub torque: Interval,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidityConstraints {
    pub workspace: Rect,
    pub table: Rect,
    /// Robot linear speed limit (m/s).
    pub robot_max_speed: f64,
    /// Robot angular speed limit (rad/s).
    pub robot_max_angular_speed: f64,
    /// Peak speed any movable object may reach during an interaction (m/s).
    pub object_max_speed: f64,
    pub control_bounds: ControlBounds,
    /// Largest admissible displacement of a movable object per motion (m).
    pub displacement_threshold: f64,
    pub forbid_target_contact: bool,
}

impl ValidityConstraints {
    pub fn validate(&self) -> Result<()> {
        let thresholds = [
            self.robot_max_speed,
            self.robot_max_angular_speed,
            self.object_max_speed,
            self.displacement_threshold,
        ];
        if !thresholds.iter().all(|t| t.is_finite() && *t >= 0.0) {
            return Err(Error::InvalidArgument(
                "thresholds must be finite and >= 0".into(),
            ));
        }
        if !self.workspace.is_finite() || !self.table.is_finite() {
            return Err(Error::InvalidArgument("bounds must be finite".into()));
        }
        if !self.workspace.contains_rect(&self.table) {
            return Err(Error::InvalidArgument(
                "table must lie inside the workspace".into(),
            ));
        }
        let cb = &self.control_bounds;
        for iv in [cb.fx, cb.fy, cb.torque] {
            if !(iv.lo.is_finite() && iv.hi.is_finite() && iv.lo <= iv.hi) {
                return Err(Error::InvalidArgument(format!(
                    "bad control interval {iv:?}"
                )));
            }
        }
        Ok(())
    }
}

/// State-validity checker.
///
/// `trace` summarizes the propagation that produced `world`; speed limits and
/// containment are checked over the whole path, not only at the final state.
pub fn validity_check(
    world: &WorldState,
    constraints: &ValidityConstraints,
    trace: &Trace,
) -> bool {
    let c = constraints;
    if !c.workspace.contains_extent(&trace.robot_extent) {
        return false;
    }
    let robot = world.robot();
    if !c.workspace.contains(robot.pose.x, robot.pose.y) {
        return false;
    }
    if trace.robot_peak_speed > c.robot_max_speed
        || trace.robot_peak_angular_speed > c.robot_max_angular_speed
    {
        return false;
    }
    if trace.robot_fixed_contact {
        return false;
    }
    if c.forbid_target_contact && trace.target_contacted {
        return false;
    }
    world.objects().iter().enumerate().all(|(i, b)| {
        b.class != BodyClass::Movable
            || (trace.object_peak_speed[i] <= c.object_max_speed
                && c.table.contains_extent(&trace.object_extent[i])
                && c.table.contains(b.pose.x, b.pose.y))
    })
}

/// Per-object translation of body centers between two worlds.
pub fn displacement_of_objects(before: &WorldState, after: &WorldState) -> Result<Vec<f64>> {
    if before.objects().len() != after.objects().len() {
        return Err(Error::Structure(format!(
            "object count mismatch: {} vs {}",
            before.objects().len(),
            after.objects().len()
        )));
    }
    Ok(before
        .objects()
        .iter()
        .zip(after.objects())
        .map(|(a, b)| a.pose.distance(&b.pose))
        .collect())
}

/// True iff every displacement is within `threshold` (inclusive).
pub fn interaction_evaluator(disp: &[f64], threshold: f64) -> bool {
    disp.iter().all(|d| *d <= threshold)
}

/// Displacements of the movable objects only, in object order.
pub fn movable_displacements(before: &WorldState, after: &WorldState) -> Result<Vec<f64>> {
    let all = displacement_of_objects(before, after)?;
    Ok(before
        .objects()
        .iter()
        .zip(all)
        .filter(|(b, _)| b.class == BodyClass::Movable)
        .map(|(_, d)| d)
        .collect())
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use crate::physics::{BodyId, Shape, Twist};

    pub fn disk(class: BodyClass, x: f64, y: f64, radius: f64) -> Body {
        let shape = Shape::Disk { radius };
        let mass = 0.2;
        Body {
            id: BodyId(0),
            shape,
            pose: Pose::new(x, y, 0.0),
            velocity: Twist::default(),
            mass,
            inertia: shape.inertia(mass),
            class,
            support_friction: 0.4,
        }
    }

    pub fn robot() -> Body {
        let shape = Shape::Disk { radius: 0.04 };
        Body {
            id: BodyId(0),
            shape,
            pose: Pose::new(-0.4, 0.0, 0.0),
            velocity: Twist::default(),
            mass: 1.0,
            inertia: shape.inertia(1.0),
            class: BodyClass::Robot,
            support_friction: 0.3,
        }
    }

    pub fn world_with(mut objects: Vec<Body>) -> WorldState {
        for (i, o) in objects.iter_mut().enumerate() {
            o.id = BodyId(i as u32 + 1);
        }
        WorldState::new(robot(), objects).unwrap()
    }

    pub fn constraints() -> ValidityConstraints {
        ValidityConstraints {
            workspace: Rect::new(-0.55, -0.35, 0.55, 0.35),
            table: Rect::new(-0.5, -0.3, 0.5, 0.3),
            robot_max_speed: 1.0,
            robot_max_angular_speed: 5.0,
            object_max_speed: 0.6,
            control_bounds: ControlBounds {
                fx: Interval::new(-4.0, 4.0),
                fy: Interval::new(-4.0, 4.0),
                torque: Interval::new(0.0, 0.0),
            },
            displacement_threshold: 0.05,
            forbid_target_contact: true,
        }
    }
}
