//! Scenario files.
//!
//! A scenario is a TOML document with a `schema_version` field. Every
//! optional field has a default that is written back on save, so a saved
//! file always lists the full configuration used by a run.

use std::path::Path;

use pkpiece::kpiece::{BiasFactor, ScoreConfig};
use pkpiece::physics::{Body, BodyClass, BodyId, ContactParams, PhysicsConfig, Pose, Shape, Twist};
use pkpiece::planner::{GoalRegion, Mode, PlannerParams, Query};
use pkpiece::uncertainty::{initial_beliefs, ContactVariance, NoiseConfig};
use pkpiece::world::{ControlBounds, Interval, Rect, ValidityConstraints, WorldState};
use pkpiece::RngStream;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot access {path}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Validation(String),
}

type Result<T> = std::result::Result<T, ScenarioError>;

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(ScenarioError::Validation(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectClass {
    Target,
    Movable,
    Fixed,
}

impl From<ObjectClass> for BodyClass {
    fn from(c: ObjectClass) -> Self {
        match c {
            ObjectClass::Target => BodyClass::Target,
            ObjectClass::Movable => BodyClass::Movable,
            ObjectClass::Fixed => BodyClass::Fixed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotSpec {
    pub shape: Shape,
    pub pose: Pose,
    pub mass: f64,
    pub support_friction: f64,
}

impl Default for RobotSpec {
    fn default() -> Self {
        Self {
            shape: Shape::Disk { radius: 0.04 },
            pose: Pose::new(-0.4, 0.0, 0.0),
            mass: 1.0,
            support_friction: 0.15,
        }
    }
}

const DEFAULT_POSE_VARIANCE: [f64; 3] = [1e-4, 1e-4, 0.01];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub name: String,
    pub class: ObjectClass,
    pub shape: Shape,
    pub pose: Pose,
    #[serde(default = "default_object_mass")]
    pub mass: f64,
    #[serde(default = "default_object_friction")]
    pub support_friction: f64,
    /// Variances of the initial pose estimate (m², m², rad²). Used for
    /// movable objects only.
    #[serde(default = "default_pose_variance")]
    pub pose_variance: [f64; 3],
}

fn default_object_mass() -> f64 {
    0.2
}

fn default_object_friction() -> f64 {
    0.4
}

fn default_pose_variance() -> [f64; 3] {
    DEFAULT_POSE_VARIANCE
}

/// Movable disks on a seeded, jittered grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClutterSpec {
    pub count: usize,
    pub seed: u64,
    pub region: Rect,
    pub radius: f64,
    pub mass: f64,
    pub support_friction: f64,
    /// Maximum offset from the grid point, as a fraction of the grid pitch.
    pub jitter: f64,
    pub pose_variance: [f64; 3],
}

impl Default for ClutterSpec {
    fn default() -> Self {
        Self {
            count: 10,
            seed: 1,
            region: Rect::new(-0.25, -0.2, 0.2, 0.2),
            radius: 0.03,
            mass: default_object_mass(),
            support_friction: default_object_friction(),
            jitter: 0.2,
            pose_variance: DEFAULT_POSE_VARIANCE,
        }
    }
}

impl ClutterSpec {
    /// Grid points spread over `region`, one per object, in row-major order.
    pub fn generate(&self) -> Vec<ObjectSpec> {
        if self.count == 0 {
            return Vec::new();
        }
        let (w, h) = (self.region.width(), self.region.height());
        let cols = ((self.count as f64 * w / h).sqrt().ceil() as usize).max(1);
        let rows = self.count.div_ceil(cols);
        let (px, py) = (w / cols as f64, h / rows as f64);
        let slots = rows * cols;
        let mut rng = RngStream::from_seed(self.seed);
        (0..self.count)
            .map(|i| {
                let slot = i * slots / self.count;
                let (r, c) = (slot / cols, slot % cols);
                let jx = rng.uniform_in(-self.jitter, self.jitter) * px;
                let jy = rng.uniform_in(-self.jitter, self.jitter) * py;
                let theta = rng.uniform_in(-std::f64::consts::PI, std::f64::consts::PI);
                ObjectSpec {
                    name: format!("clutter-{i}"),
                    class: ObjectClass::Movable,
                    shape: Shape::Disk {
                        radius: self.radius,
                    },
                    pose: Pose::new(
                        self.region.min_x + (c as f64 + 0.5) * px + jx,
                        self.region.min_y + (r as f64 + 0.5) * py + jy,
                        theta,
                    ),
                    mass: self.mass,
                    support_friction: self.support_friction,
                    pose_variance: self.pose_variance,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub control_variance: [f64; 3],
    pub contact_variance: ContactVariance,
    pub nominal_contact: ContactParams,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            control_variance: [1e-4, 1e-4, 0.0],
            contact_variance: ContactVariance {
                mu: 0.005,
                cfm: 0.0,
                erp: 0.001,
            },
            nominal_contact: ContactParams::default(),
        }
    }
}

impl From<&NoiseSpec> for NoiseConfig {
    fn from(n: &NoiseSpec) -> Self {
        NoiseConfig {
            control_variance: n.control_variance,
            contact_variance: n.contact_variance,
            nominal_contact: n.nominal_contact,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstraintSpec {
    pub robot_max_speed: f64,
    pub robot_max_angular_speed: f64,
    pub object_max_speed: f64,
    pub displacement_threshold: f64,
    pub forbid_target_contact: bool,
    pub control_bounds: ControlBounds,
}

impl Default for ConstraintSpec {
    fn default() -> Self {
        Self {
            robot_max_speed: 1.0,
            robot_max_angular_speed: 10.0,
            object_max_speed: 0.6,
            displacement_threshold: 0.02,
            forbid_target_contact: true,
            control_bounds: ControlBounds {
                fx: Interval::new(-3.0, 3.0),
                fy: Interval::new(-3.0, 3.0),
                torque: Interval::new(0.0, 0.0),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalSpec {
    pub center: Pose,
    pub radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle_tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerSpec {
    pub k: usize,
    pub n_p: usize,
    pub bias: f64,
    pub eps_rand: f64,
    pub cell_size_percent: f64,
    pub components: usize,
    pub min_duration: f64,
    pub max_duration: f64,
    pub state_stride: u32,
    pub time_limit: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<u64>,
    pub bias_factor: BiasFactor,
    pub score: ScoreConfig,
}

impl Default for PlannerSpec {
    fn default() -> Self {
        let p = PlannerParams::default();
        Self {
            k: 10,
            n_p: 10,
            bias: p.bias,
            eps_rand: p.eps_rand,
            cell_size_percent: p.cell_size_percent,
            components: p.components,
            min_duration: p.min_duration,
            max_duration: p.max_duration,
            state_stride: p.state_stride,
            time_limit: p.time_limit,
            max_iterations: p.max_iterations,
            bias_factor: p.bias_factor,
            score: p.score,
        }
    }
}

impl From<&PlannerSpec> for PlannerParams {
    fn from(s: &PlannerSpec) -> Self {
        PlannerParams {
            k: s.k,
            n_p: s.n_p,
            bias: s.bias,
            eps_rand: s.eps_rand,
            cell_size_percent: s.cell_size_percent,
            components: s.components,
            min_duration: s.min_duration,
            max_duration: s.max_duration,
            state_stride: s.state_stride,
            time_limit: s.time_limit,
            max_iterations: s.max_iterations,
            bias_factor: s.bias_factor,
            score: s.score,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsSpec {
    pub dt: f64,
    pub gravity: f64,
    pub solver_iterations: u32,
    pub slop: f64,
}

impl Default for PhysicsSpec {
    fn default() -> Self {
        let p = PhysicsConfig::default();
        Self {
            dt: p.dt,
            gravity: p.gravity,
            solver_iterations: p.solver_iterations,
            slop: p.slop,
        }
    }
}

impl From<&PhysicsSpec> for PhysicsConfig {
    fn from(s: &PhysicsSpec) -> Self {
        PhysicsConfig {
            dt: s.dt,
            gravity: s.gravity,
            solver_iterations: s.solver_iterations,
            slop: s.slop,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplaySpec {
    pub trials: usize,
}

impl Default for ReplaySpec {
    fn default() -> Self {
        Self { trials: 100 }
    }
}

fn default_workspace() -> Rect {
    Rect::new(-0.55, -0.35, 0.55, 0.35)
}

fn default_table() -> Rect {
    Rect::new(-0.5, -0.3, 0.5, 0.3)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_workspace")]
    pub workspace: Rect,
    #[serde(default = "default_table")]
    pub table: Rect,
    #[serde(default)]
    pub robot: RobotSpec,
    pub goal: GoalSpec,
    #[serde(default)]
    pub constraints: ConstraintSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub planner: PlannerSpec,
    #[serde(default)]
    pub physics: PhysicsSpec,
    #[serde(default)]
    pub replay: ReplaySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clutter: Option<ClutterSpec>,
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_toml_string())
    }

    /// Explicit objects followed by the generated clutter.
    pub fn all_objects(&self) -> Vec<ObjectSpec> {
        let mut v = self.objects.clone();
        if let Some(c) = &self.clutter {
            v.extend(c.generate());
        }
        v
    }

    pub fn constraints(&self) -> ValidityConstraints {
        let c = &self.constraints;
        ValidityConstraints {
            workspace: self.workspace,
            table: self.table,
            robot_max_speed: c.robot_max_speed,
            robot_max_angular_speed: c.robot_max_angular_speed,
            object_max_speed: c.object_max_speed,
            control_bounds: c.control_bounds,
            displacement_threshold: c.displacement_threshold,
            forbid_target_contact: c.forbid_target_contact,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return invalid(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        self.constraints()
            .validate()
            .or_else(|e| invalid(format!("constraints: {e}")))?;
        PlannerParams::from(&self.planner)
            .validate()
            .or_else(|e| invalid(format!("planner: {e}")))?;
        NoiseConfig::from(&self.noise)
            .validate()
            .or_else(|e| invalid(format!("noise: {e}")))?;
        let ph = &self.physics;
        if !(ph.dt > 0.0 && ph.dt.is_finite() && ph.gravity >= 0.0 && ph.slop >= 0.0) {
            return invalid("physics: dt must be positive, gravity and slop non-negative");
        }
        if !(self.robot.mass > 0.0 && self.robot.support_friction >= 0.0) {
            return invalid("robot: mass must be positive");
        }
        if !self
            .workspace
            .contains(self.robot.pose.x, self.robot.pose.y)
        {
            return invalid("robot starts outside the workspace");
        }
        if !(self.goal.radius > 0.0) {
            return invalid("goal radius must be positive");
        }
        let objects = self.all_objects();
        let mut targets = 0;
        for o in &objects {
            if !(o.mass > 0.0 && o.support_friction >= 0.0) {
                return invalid(format!("object '{}': mass must be positive", o.name));
            }
            if o.pose_variance
                .iter()
                .any(|v| !(v.is_finite() && *v >= 0.0))
            {
                return invalid(format!("object '{}': negative pose variance", o.name));
            }
            let inside = match o.class {
                ObjectClass::Fixed => self.workspace.contains(o.pose.x, o.pose.y),
                _ => self.table.contains(o.pose.x, o.pose.y),
            };
            if !inside {
                return invalid(format!("object '{}' lies outside the table", o.name));
            }
            targets += usize::from(o.class == ObjectClass::Target);
        }
        if targets > 1 {
            return invalid("more than one target object");
        }
        Ok(())
    }

    fn body(id: u32, class: BodyClass, shape: Shape, pose: Pose, mass: f64, friction: f64) -> Body {
        Body {
            id: BodyId(id),
            shape,
            pose,
            velocity: Twist::default(),
            mass,
            inertia: shape.inertia(mass),
            class,
            support_friction: friction,
        }
    }

    pub fn world(&self) -> pkpiece::Result<WorldState> {
        let r = &self.robot;
        let robot = Self::body(
            0,
            BodyClass::Robot,
            r.shape,
            r.pose,
            r.mass,
            r.support_friction,
        );
        let objects = self
            .all_objects()
            .iter()
            .enumerate()
            .map(|(i, o)| {
                Self::body(
                    i as u32 + 1,
                    o.class.into(),
                    o.shape,
                    o.pose,
                    o.mass,
                    o.support_friction,
                )
            })
            .collect();
        WorldState::new(robot, objects)
    }

    pub fn goal(&self) -> GoalRegion {
        GoalRegion {
            center: self.goal.center,
            radius: self.goal.radius,
            angle_tolerance: self.goal.angle_tolerance,
        }
    }

    pub fn query(&self, mode: Mode) -> pkpiece::Result<Query> {
        let world = self.world()?;
        let variances: Vec<[f64; 3]> = self.all_objects().iter().map(|o| o.pose_variance).collect();
        let beliefs = initial_beliefs(&world, &variances)?;
        Ok(Query {
            world,
            beliefs,
            goal: self.goal(),
            constraints: self.constraints(),
            noise: NoiseConfig::from(&self.noise),
            physics: PhysicsConfig::from(&self.physics),
            params: PlannerParams::from(&self.planner),
            mode,
        })
    }

    /// Copy with one parameter changed. Names: `clutter`, `n_p`, `k`,
    /// `cell_size`, `bias`, `eps_rand`, `d_disp`, `time_limit`.
    pub fn with_param(&self, name: &str, value: f64) -> Result<Scenario> {
        let mut s = self.clone();
        let count = || {
            if value >= 0.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                invalid(format!(
                    "{name} must be a non-negative integer, got {value}"
                ))
            }
        };
        match name {
            "clutter" => s.clutter.get_or_insert_with(ClutterSpec::default).count = count()?,
            "n_p" => s.planner.n_p = count()?,
            "k" => s.planner.k = count()?,
            "cell_size" => s.planner.cell_size_percent = value,
            "bias" => s.planner.bias = value,
            "eps_rand" => s.planner.eps_rand = value,
            "d_disp" => s.constraints.displacement_threshold = value,
            "time_limit" => s.planner.time_limit = value,
            _ => return invalid(format!("unknown sweep parameter '{name}'")),
        }
        s.validate()?;
        Ok(s)
    }

    /// Standard tabletop: robot on the left, target can on the right with
    /// the pre-grasp goal just in front of it, and `clutter` movable cans
    /// in between.
    pub fn tabletop(clutter: usize) -> Scenario {
        Scenario {
            schema_version: SCHEMA_VERSION,
            name: format!("tabletop-{clutter}"),
            workspace: default_workspace(),
            table: default_table(),
            robot: RobotSpec::default(),
            goal: GoalSpec {
                center: Pose::new(0.28, 0.0, 0.0),
                radius: 0.04,
                angle_tolerance: None,
            },
            constraints: ConstraintSpec::default(),
            noise: NoiseSpec::default(),
            planner: PlannerSpec::default(),
            physics: PhysicsSpec::default(),
            replay: ReplaySpec::default(),
            clutter: Some(ClutterSpec {
                count: clutter,
                ..ClutterSpec::default()
            }),
            objects: vec![ObjectSpec {
                name: "target".into(),
                class: ObjectClass::Target,
                shape: Shape::Disk { radius: 0.03 },
                pose: Pose::new(0.4, 0.0, 0.0),
                mass: default_object_mass(),
                support_friction: default_object_friction(),
                pose_variance: [0.0; 3],
            }],
        }
    }
}
