//! Stochastic models: initial object-pose Gaussians, control disturbances,
//! contact-parameter noise, and the mixture update of object poses after
//! interactions.

mod em;
mod gaussian;

use serde::{Deserialize, Serialize};

pub use em::{distinct_count, fit_gmm_em, GmmFit, COVARIANCE_FLOOR};
pub use gaussian::{GaussianBelief, MixtureBelief, PoseBelief};

use crate::physics::collision::find_contacts;
use crate::physics::{wrap_angle, BodyClass, ContactParams, Disturbance, Pose, Wrench};
use crate::world::WorldState;
use crate::{Error, Result, RngStream};

/// Per-object pose beliefs aligned with `WorldState::objects()`. Only movable
/// objects carry a belief.
pub type Beliefs = Vec<Option<PoseBelief>>;

/// Minimum translation for an object to count as moved by a particle (m).
pub const MOVED_THRESHOLD: f64 = 1e-4;
pub const MAX_SAMPLING_ATTEMPTS: u32 = 100;
/// Sampled overlaps deeper than this fraction of the smaller inner radius are rejected.
pub const MAX_SAMPLED_OVERLAP: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactVariance {
    pub mu: f64,
    pub cfm: f64,
    pub erp: f64,
}

/// Noise magnitudes. Variances are diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Variances of the additive wrench disturbance `(fx, fy, torque)`.
    pub control_variance: [f64; 3],
    pub contact_variance: ContactVariance,
    /// Nominal contact parameters, the mean of the contact-parameter Gaussian.
    pub nominal_contact: ContactParams,
}

impl NoiseConfig {
    pub fn noiseless(nominal_contact: ContactParams) -> Self {
        Self {
            control_variance: [0.0; 3],
            contact_variance: ContactVariance {
                mu: 0.0,
                cfm: 0.0,
                erp: 0.0,
            },
            nominal_contact,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let v = &self.contact_variance;
        let all = self.control_variance.iter().chain([&v.mu, &v.cfm, &v.erp]);
        if all.clone().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidArgument(
                "variances must be finite and >= 0".into(),
            ));
        }
        self.nominal_contact.validate()
    }
}

/// Zero-mean Gaussian wrench disturbance.
pub fn sample_control_disturbance(cfg: &NoiseConfig, rng: &mut RngStream) -> Disturbance {
    let [vx, vy, vt] = cfg.control_variance;
    let z = [
        rng.standard_normal(),
        rng.standard_normal(),
        rng.standard_normal(),
    ];
    Disturbance(Wrench::new(
        vx.sqrt() * z[0],
        vy.sqrt() * z[1],
        vt.sqrt() * z[2],
    ))
}

/// Contact parameters drawn around the nominal values, then clamped to their
/// admissible ranges.
pub fn sample_contact_params(cfg: &NoiseConfig, rng: &mut RngStream) -> ContactParams {
    let n = &cfg.nominal_contact;
    let v = &cfg.contact_variance;
    let z = [
        rng.standard_normal(),
        rng.standard_normal(),
        rng.standard_normal(),
    ];
    ContactParams {
        mu: n.mu + v.mu.sqrt() * z[0],
        cfm: n.cfm + v.cfm.sqrt() * z[1],
        erp: n.erp + v.erp.sqrt() * z[2],
    }
    .clamped()
}

pub fn sample_object_pose(belief: &PoseBelief, rng: &mut RngStream) -> Pose {
    belief.sample(rng)
}

/// Draws from `belief` shifted so that its mean sits at `nominal`.
///
/// Used for particle start states: the belief supplies the shape of the
/// uncertainty while the tree state supplies where the object nominally is.
pub fn sample_pose_about(belief: &PoseBelief, nominal: &Pose, rng: &mut RngStream) -> Pose {
    let draw = belief.sample(rng);
    let mean = belief.mean();
    Pose::new(
        nominal.x + (draw.x - mean.x),
        nominal.y + (draw.y - mean.y),
        wrap_angle(nominal.theta + wrap_angle(draw.theta - mean.theta)),
    )
}

fn overlap_too_deep(world: &WorldState) -> bool {
    let bodies = world.bodies();
    find_contacts(bodies).iter().any(|m| {
        let (a, b) = (&bodies[m.a], &bodies[m.b]);
        if a.class != BodyClass::Movable && b.class != BodyClass::Movable {
            return false;
        }
        let limit = MAX_SAMPLED_OVERLAP * a.shape.inner_radius().min(b.shape.inner_radius());
        m.points.iter().any(|p| p.penetration > limit)
    })
}

fn resample_world<F>(nominal: &WorldState, rng: &mut RngStream, mut draw: F) -> Result<WorldState>
where
    F: FnMut(usize, &Pose, &mut RngStream) -> Option<Pose>,
{
    for _ in 0..MAX_SAMPLING_ATTEMPTS {
        let mut w = nominal.clone();
        let mut changed = false;
        for (i, obj) in w.objects_mut().iter_mut().enumerate() {
            if obj.class != BodyClass::Movable {
                continue;
            }
            if let Some(p) = draw(i, &obj.pose, rng) {
                changed |= p != obj.pose;
                obj.pose = p;
            }
        }
        if !changed || !overlap_too_deep(&w) {
            return Ok(w);
        }
    }
    Err(Error::Sampling {
        attempts: MAX_SAMPLING_ATTEMPTS,
    })
}

/// Replaces every movable object's pose with a draw from its belief.
/// Target, fixed bodies and all velocities are left untouched.
pub fn sample_initial_world(
    nominal: &WorldState,
    beliefs: &[Option<PoseBelief>],
    rng: &mut RngStream,
) -> Result<WorldState> {
    check_alignment(nominal, beliefs)?;
    resample_world(nominal, rng, |i, _, rng| {
        beliefs[i].as_ref().map(|b| b.sample(rng))
    })
}

/// Perturbs movable objects of a tree state with beliefs re-centred on their
/// nominal poses in that state.
pub fn sample_particle_world(
    nominal: &WorldState,
    beliefs: &[Option<PoseBelief>],
    rng: &mut RngStream,
) -> Result<WorldState> {
    check_alignment(nominal, beliefs)?;
    resample_world(nominal, rng, |i, pose, rng| {
        beliefs[i].as_ref().map(|b| sample_pose_about(b, pose, rng))
    })
}

fn check_alignment(world: &WorldState, beliefs: &[Option<PoseBelief>]) -> Result<()> {
    if beliefs.len() != world.objects().len() {
        return Err(Error::Structure(format!(
            "{} beliefs for {} objects",
            beliefs.len(),
            world.objects().len()
        )));
    }
    Ok(())
}

/// Initial beliefs: one diagonal Gaussian per movable object, centred on its
/// measured pose.
pub fn initial_beliefs(world: &WorldState, variances: &[[f64; 3]]) -> Result<Beliefs> {
    if variances.len() != world.objects().len() {
        return Err(Error::Structure(
            "one variance triple per object expected".into(),
        ));
    }
    world
        .objects()
        .iter()
        .zip(variances)
        .map(|(o, v)| {
            if o.class == BodyClass::Movable {
                GaussianBelief::diagonal(o.pose, *v).map(|g| Some(PoseBelief::Gaussian(g)))
            } else {
                Ok(None)
            }
        })
        .collect()
}

/// Final poses of one object across the particles of a motion.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObjectOutcomes {
    pub final_poses: Vec<Pose>,
    /// Largest translation of the object over the particles (m).
    pub max_displacement: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateReport {
    /// Objects whose belief was refitted.
    pub refitted: Vec<usize>,
    /// Moved objects left unchanged for lack of particle outcomes.
    pub degenerate: Vec<usize>,
}

/// Refits the belief of every object that any particle moved by more than
/// [`MOVED_THRESHOLD`]; the rest keep their current belief.
pub fn update_pose_uncertainty(
    current: &[Option<PoseBelief>],
    outcomes: &[ObjectOutcomes],
    components: usize,
    rng: &mut RngStream,
) -> Result<(Beliefs, UpdateReport)> {
    if current.len() != outcomes.len() {
        return Err(Error::Structure("outcomes not aligned with beliefs".into()));
    }
    let mut next = current.to_vec();
    let mut report = UpdateReport::default();
    for (i, (belief, out)) in current.iter().zip(outcomes).enumerate() {
        if belief.is_none() || out.max_displacement <= MOVED_THRESHOLD {
            continue;
        }
        if out.final_poses.len() < 2 {
            log::warn!(
                "object {i}: {} particle outcome(s), keeping prior belief",
                out.final_poses.len()
            );
            report.degenerate.push(i);
            continue;
        }
        let n = components.min(distinct_count(&out.final_poses)).max(1);
        let fit = fit_gmm_em(&out.final_poses, n, rng)?;
        next[i] = Some(PoseBelief::Mixture(fit.mixture));
        report.refitted.push(i);
    }
    Ok((next, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::test_support::{disk, world_with};

    fn scene() -> WorldState {
        let mut wall = disk(BodyClass::Fixed, 0.0, 0.25, 0.05);
        wall.id = crate::physics::BodyId(9);
        world_with(vec![
            disk(BodyClass::Target, 0.4, 0.0, 0.03),
            disk(BodyClass::Movable, 0.0, 0.0, 0.03),
            disk(BodyClass::Movable, 0.1, 0.1, 0.03),
            wall,
        ])
    }

    fn noisy() -> NoiseConfig {
        NoiseConfig {
            control_variance: [1.0, 1.0, 0.01],
            contact_variance: ContactVariance {
                mu: 0.01,
                cfm: 1e-12,
                erp: 0.01,
            },
            nominal_contact: ContactParams::default(),
        }
    }

    #[test]
    fn zero_covariance_initial_world_is_nominal() {
        let w = scene();
        let b = initial_beliefs(&w, &[[0.0; 3]; 4]).unwrap();
        let mut rng = RngStream::from_seed(4);
        assert_eq!(sample_initial_world(&w, &b, &mut rng).unwrap(), w);
    }

    #[test]
    fn fixed_and_target_are_never_perturbed() {
        let w = scene();
        let b = initial_beliefs(&w, &[[1e-4, 1e-4, 0.01]; 4]).unwrap();
        assert!(b[0].is_none() && b[3].is_none());
        let mut rng = RngStream::from_seed(4);
        for _ in 0..20 {
            let s = sample_initial_world(&w, &b, &mut rng).unwrap();
            assert_eq!(s.objects()[0], w.objects()[0]);
            assert_eq!(s.objects()[3], w.objects()[3]);
            assert_eq!(s.robot(), w.robot());
            assert_ne!(s.objects()[1].pose, w.objects()[1].pose);
        }
    }

    #[test]
    fn deep_overlaps_are_resampled_or_fail() {
        // two movables stacked on top of each other with tiny noise can never separate
        let w = world_with(vec![
            disk(BodyClass::Target, 0.4, 0.0, 0.03),
            disk(BodyClass::Movable, 0.0, 0.0, 0.03),
            disk(BodyClass::Movable, 0.0, 0.001, 0.03),
        ]);
        let b = initial_beliefs(&w, &[[1e-8; 3]; 3]).unwrap();
        let mut rng = RngStream::from_seed(1);
        assert_eq!(
            sample_initial_world(&w, &b, &mut rng),
            Err(Error::Sampling {
                attempts: MAX_SAMPLING_ATTEMPTS
            })
        );
    }

    #[test]
    fn zero_control_variance_gives_zero_disturbance() {
        let cfg = NoiseConfig::noiseless(ContactParams::default());
        let mut rng = RngStream::from_seed(3);
        assert_eq!(
            sample_control_disturbance(&cfg, &mut rng),
            Disturbance::default()
        );
        assert_eq!(sample_contact_params(&cfg, &mut rng), cfg.nominal_contact);
    }

    #[test]
    fn different_streams_give_different_disturbances() {
        let cfg = noisy();
        let a = sample_control_disturbance(&cfg, &mut RngStream::from_seed(1));
        let b = sample_control_disturbance(&cfg, &mut RngStream::from_seed(2));
        assert_ne!(a, b);
    }

    #[test]
    fn erp_is_clamped() {
        let mut cfg = noisy();
        cfg.nominal_contact.erp = 0.99;
        cfg.contact_variance.erp = 4.0;
        let mut rng = RngStream::from_seed(8);
        for _ in 0..1000 {
            let p = sample_contact_params(&cfg, &mut rng);
            assert!(p.validate().is_ok());
        }
    }

    #[test]
    fn unmoved_objects_keep_their_belief_bitwise() {
        let w = scene();
        let b = initial_beliefs(&w, &[[1e-4, 1e-4, 0.01]; 4]).unwrap();
        let outcomes = vec![
            ObjectOutcomes {
                final_poses: vec![Pose::default(); 5],
                max_displacement: 0.0,
            };
            4
        ];
        let mut rng = RngStream::from_seed(0);
        let (next, report) = update_pose_uncertainty(&b, &outcomes, 3, &mut rng).unwrap();
        assert_eq!(next, b);
        assert!(report.refitted.is_empty());
    }

    #[test]
    fn single_particle_keeps_prior() {
        let w = scene();
        let b = initial_beliefs(&w, &[[1e-4, 1e-4, 0.01]; 4]).unwrap();
        let mut outcomes = vec![ObjectOutcomes::default(); 4];
        outcomes[1] = ObjectOutcomes {
            final_poses: vec![Pose::new(0.05, 0.0, 0.0)],
            max_displacement: 0.05,
        };
        let mut rng = RngStream::from_seed(0);
        let (next, report) = update_pose_uncertainty(&b, &outcomes, 3, &mut rng).unwrap();
        assert_eq!(next, b);
        assert_eq!(report.degenerate, vec![1]);
    }

    #[test]
    fn bimodal_outcomes_become_a_mixture() {
        let w = scene();
        let b = initial_beliefs(&w, &[[1e-4, 1e-4, 0.01]; 4]).unwrap();
        let mut rng = RngStream::from_seed(17);
        let clusters = [(0.1, 0.05), (0.05, -0.12)];
        let poses: Vec<Pose> = (0..40)
            .map(|i| {
                let (x, y) = clusters[i % 2];
                Pose::new(
                    x + 0.005 * rng.standard_normal(),
                    y + 0.005 * rng.standard_normal(),
                    0.02 * rng.standard_normal(),
                )
            })
            .collect();
        let mut outcomes = vec![ObjectOutcomes::default(); 4];
        outcomes[1] = ObjectOutcomes {
            final_poses: poses,
            max_displacement: 0.15,
        };
        let (next, report) = update_pose_uncertainty(&b, &outcomes, 3, &mut rng).unwrap();
        assert_eq!(report.refitted, vec![1]);
        let Some(PoseBelief::Mixture(m)) = &next[1] else {
            panic!("expected a mixture");
        };
        for (x, y) in clusters {
            let best = m
                .components()
                .iter()
                .filter(|(w, _)| *w > 0.05)
                .map(|(_, g)| (g.mean().x - x).hypot(g.mean().y - y))
                .fold(f64::INFINITY, f64::min);
            assert!(best < 0.2, "cluster ({x}, {y}) uncovered: {best}");
        }
        assert_eq!(next[2], b[2]);
    }

    #[test]
    fn particle_world_recentres_the_belief() {
        let w = scene();
        let g = GaussianBelief::diagonal(Pose::new(5.0, 5.0, 0.0), [0.0; 3]).unwrap();
        let mut b: Beliefs = vec![None; 4];
        b[1] = Some(PoseBelief::Gaussian(g));
        let mut rng = RngStream::from_seed(0);
        let s = sample_particle_world(&w, &b, &mut rng).unwrap();
        assert_eq!(s, w);
    }
}
