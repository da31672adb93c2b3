//! Sequential-impulse contact solver.
//!
//! Restitution is zero. `cfm` softens each normal row by scaling its
//! effective mass denominator by `1 + cfm`; `erp` is the fraction of
//! penetration (beyond `slop`) removed per step by a direct positional
//! projection that does not touch velocities.

use super::collision::{find_contacts, Manifold};
use super::{Body, ContactParams, PhysicsConfig, Vec2};

/// Accumulated impulse at one contact point after the solver iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactImpulse {
    pub a: usize,
    pub b: usize,
    pub point: Vec2,
    /// Unit normal from `a` to `b`.
    pub normal: Vec2,
    pub penetration: f64,
    pub normal_impulse: f64,
    pub tangent_impulse: f64,
}

struct Row {
    ra: Vec2,
    rb: Vec2,
    normal_mass: f64,
    tangent_mass: f64,
    soft: f64,
}

#[inline]
fn cross(a: &Vec2, b: &Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

#[inline]
fn cross_sv(w: f64, r: &Vec2) -> Vec2 {
    Vec2::new(-w * r.y, w * r.x)
}

fn point_velocity(b: &Body, r: &Vec2) -> Vec2 {
    b.velocity.linear() + cross_sv(b.velocity.omega, r)
}

fn apply(b: &mut Body, impulse: Vec2, r: &Vec2, sign: f64) {
    let im = b.inv_mass();
    let ii = b.inv_inertia();
    b.velocity.vx += sign * im * impulse.x;
    b.velocity.vy += sign * im * impulse.y;
    b.velocity.omega += sign * ii * cross(r, &impulse);
}

fn pair(bodies: &mut [Body], a: usize, b: usize) -> (&mut Body, &mut Body) {
    debug_assert!(a < b);
    let (lo, hi) = bodies.split_at_mut(b);
    (&mut lo[a], &mut hi[0])
}

/// Computes contact impulses for the current poses and velocities of
/// `bodies` without modifying them.
pub fn solve_contacts(
    bodies: &[Body],
    params: &ContactParams,
    cfg: &PhysicsConfig,
) -> Vec<ContactImpulse> {
    let mut scratch = bodies.to_vec();
    solve_contacts_in_place(&mut scratch, params, cfg)
}

pub(crate) fn solve_contacts_in_place(
    bodies: &mut [Body],
    params: &ContactParams,
    cfg: &PhysicsConfig,
) -> Vec<ContactImpulse> {
    let manifolds = find_contacts(bodies);
    if manifolds.is_empty() {
        return Vec::new();
    }
    let mut impulses = Vec::new();
    let mut rows = Vec::new();
    for Manifold {
        a,
        b,
        normal,
        points,
    } in &manifolds
    {
        let (ba, bb) = (&bodies[*a], &bodies[*b]);
        let tangent = Vec2::new(-normal.y, normal.x);
        for p in points {
            let ra = p.point - ba.pose.position();
            let rb = p.point - bb.pose.position();
            let k = |dir: &Vec2| {
                let rna = cross(&ra, dir);
                let rnb = cross(&rb, dir);
                ba.inv_mass()
                    + bb.inv_mass()
                    + rna * rna * ba.inv_inertia()
                    + rnb * rnb * bb.inv_inertia()
            };
            let kn = k(normal);
            let kt = k(&tangent);
            rows.push(Row {
                ra,
                rb,
                normal_mass: kn * (1.0 + params.cfm),
                tangent_mass: kt,
                soft: params.cfm * kn,
            });
            impulses.push(ContactImpulse {
                a: *a,
                b: *b,
                point: p.point,
                normal: *normal,
                penetration: p.penetration,
                normal_impulse: 0.0,
                tangent_impulse: 0.0,
            });
        }
    }

    for _ in 0..cfg.solver_iterations {
        for (c, row) in impulses.iter_mut().zip(&rows) {
            if row.normal_mass <= 0.0 {
                continue;
            }
            let (ba, bb) = pair(bodies, c.a, c.b);
            let tangent = Vec2::new(-c.normal.y, c.normal.x);

            let dv = point_velocity(bb, &row.rb) - point_velocity(ba, &row.ra);
            let vn = dv.dot(&c.normal);
            let lambda = -(vn + row.soft * c.normal_impulse) / row.normal_mass;
            let acc = (c.normal_impulse + lambda).max(0.0);
            let applied = acc - c.normal_impulse;
            c.normal_impulse = acc;
            let pn = c.normal * applied;
            apply(ba, pn, &row.ra, -1.0);
            apply(bb, pn, &row.rb, 1.0);

            if params.mu > 0.0 && row.tangent_mass > 0.0 {
                let dv = point_velocity(bb, &row.rb) - point_velocity(ba, &row.ra);
                let vt = dv.dot(&tangent);
                let lambda = -vt / row.tangent_mass;
                let bound = params.mu * c.normal_impulse;
                let acc = (c.tangent_impulse + lambda).clamp(-bound, bound);
                let applied = acc - c.tangent_impulse;
                c.tangent_impulse = acc;
                let pt = tangent * applied;
                apply(ba, pt, &row.ra, -1.0);
                apply(bb, pt, &row.rb, 1.0);
            }
        }
    }
    impulses
}

/// Removes `erp` of each pair's deepest penetration beyond `slop`, split by
/// inverse mass. Velocities are left untouched.
pub(crate) fn correct_positions(
    bodies: &mut [Body],
    contacts: &[ContactImpulse],
    params: &ContactParams,
    cfg: &PhysicsConfig,
) {
    if params.erp <= 0.0 {
        return;
    }
    let mut i = 0;
    while i < contacts.len() {
        let (a, b) = (contacts[i].a, contacts[i].b);
        let mut depth = 0.0f64;
        let normal = contacts[i].normal;
        while i < contacts.len() && contacts[i].a == a && contacts[i].b == b {
            depth = depth.max(contacts[i].penetration);
            i += 1;
        }
        let excess = depth - cfg.slop;
        if excess <= 0.0 {
            continue;
        }
        let (ba, bb) = pair(bodies, a, b);
        let total = ba.inv_mass() + bb.inv_mass();
        if total <= 0.0 {
            continue;
        }
        let shift = normal * (params.erp * excess / total);
        if !ba.is_fixed() {
            ba.pose.x -= shift.x * ba.inv_mass();
            ba.pose.y -= shift.y * ba.inv_mass();
        }
        if !bb.is_fixed() {
            bb.pose.x += shift.x * bb.inv_mass();
            bb.pose.y += shift.y * bb.inv_mass();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::{BodyClass, BodyId, Pose, Shape, Twist};

    fn disk(class: BodyClass, x: f64, y: f64, r: f64, mass: f64) -> Body {
        let shape = Shape::Disk { radius: r };
        Body {
            id: BodyId(0),
            shape,
            pose: Pose::new(x, y, 0.0),
            velocity: Twist::default(),
            mass,
            inertia: shape.inertia(mass),
            class,
            support_friction: 0.0,
        }
    }

    #[test]
    fn no_overlap_no_impulses() {
        let bodies = [
            disk(BodyClass::Robot, 0.0, 0.0, 0.05, 1.0),
            disk(BodyClass::Movable, 0.2, 0.0, 0.05, 1.0),
        ];
        assert!(solve_contacts(
            &bodies,
            &ContactParams::default(),
            &PhysicsConfig::default()
        )
        .is_empty());
    }

    #[test]
    fn wall_contact_cancels_normal_velocity() {
        let wall_shape = Shape::Box {
            half_x: 0.05,
            half_y: 0.5,
        };
        let wall = Body {
            id: BodyId(1),
            shape: wall_shape,
            pose: Pose::new(0.15, 0.0, 0.0),
            velocity: Twist::default(),
            mass: 1.0,
            inertia: 1.0,
            class: BodyClass::Fixed,
            support_friction: 0.0,
        };
        let mut d = disk(BodyClass::Robot, 0.0, 0.0, 0.101, 1.0);
        d.velocity = Twist {
            vx: 0.3,
            vy: 0.1,
            omega: 0.0,
        };
        let mut bodies = [d, wall];
        let params = ContactParams {
            mu: 0.0,
            cfm: 1e-6,
            erp: 0.0,
        };
        let impulses = solve_contacts_in_place(&mut bodies, &params, &PhysicsConfig::default());
        assert_eq!(impulses.len(), 1);
        assert!(impulses[0].normal_impulse > 0.0);
        assert!(
            bodies[0].velocity.vx.abs() < 1e-6,
            "{}",
            bodies[0].velocity.vx
        );
        assert!((bodies[0].velocity.vy - 0.1).abs() < 1e-12);
    }

    #[test]
    fn normal_impulses_are_non_negative() {
        // separating bodies that overlap receive no pull
        let mut a = disk(BodyClass::Movable, 0.0, 0.0, 0.05, 1.0);
        let mut b = disk(BodyClass::Movable, 0.08, 0.0, 0.05, 1.0);
        a.velocity.vx = -0.2;
        b.velocity.vx = 0.2;
        let out = solve_contacts(
            &[a, b],
            &ContactParams::default(),
            &PhysicsConfig::default(),
        );
        assert!(out.iter().all(|c| c.normal_impulse >= 0.0));
        assert_eq!(out[0].normal_impulse, 0.0);
    }

    #[test]
    fn zero_erp_means_no_positional_correction() {
        let a = disk(BodyClass::Movable, 0.0, 0.0, 0.05, 1.0);
        let b = disk(BodyClass::Movable, 0.08, 0.0, 0.05, 1.0);
        let mut bodies = [a, b];
        let params = ContactParams {
            mu: 0.3,
            cfm: 0.0,
            erp: 0.0,
        };
        let cfg = PhysicsConfig::default();
        let contacts = solve_contacts_in_place(&mut bodies, &params, &cfg);
        correct_positions(&mut bodies, &contacts, &params, &cfg);
        assert_eq!(bodies[0].pose, a.pose);
        assert_eq!(bodies[1].pose, b.pose);
    }
}
