//! Narrow-phase contact generation for disks and oriented boxes.
//!
//! Manifold normals always point from body `a` to body `b`.

use super::{Body, Shape, Vec2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactPoint {
    pub point: Vec2,
    pub penetration: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifold {
    pub a: usize,
    pub b: usize,
    pub normal: Vec2,
    pub points: Vec<ContactPoint>,
}

fn rotation(theta: f64) -> (Vec2, Vec2) {
    let (s, c) = theta.sin_cos();
    (Vec2::new(c, s), Vec2::new(-s, c))
}

/// All overlapping pairs among `bodies`, in ascending `(a, b)` order.
pub fn find_contacts(bodies: &[Body]) -> Vec<Manifold> {
    let mut out = Vec::new();
    for a in 0..bodies.len() {
        for b in (a + 1)..bodies.len() {
            let (ba, bb) = (&bodies[a], &bodies[b]);
            if ba.is_fixed() && bb.is_fixed() {
                continue;
            }
            let reach = ba.shape.bounding_radius() + bb.shape.bounding_radius();
            let dx = bb.pose.x - ba.pose.x;
            let dy = bb.pose.y - ba.pose.y;
            if dx * dx + dy * dy >= reach * reach {
                continue;
            }
            if let Some(m) = collide(a, ba, b, bb) {
                out.push(m);
            }
        }
    }
    out
}

fn collide(ia: usize, a: &Body, ib: usize, b: &Body) -> Option<Manifold> {
    match (a.shape, b.shape) {
        (Shape::Disk { radius: ra }, Shape::Disk { radius: rb }) => {
            disk_disk(a.pose.position(), ra, b.pose.position(), rb).map(|(normal, points)| {
                Manifold {
                    a: ia,
                    b: ib,
                    normal,
                    points,
                }
            })
        }
        (Shape::Disk { radius }, Shape::Box { half_x, half_y }) => {
            disk_box(a.pose.position(), radius, b, half_x, half_y).map(|(n, p)| Manifold {
                a: ia,
                b: ib,
                normal: -n,
                points: vec![p],
            })
        }
        (Shape::Box { half_x, half_y }, Shape::Disk { radius }) => {
            disk_box(b.pose.position(), radius, a, half_x, half_y).map(|(n, p)| Manifold {
                a: ia,
                b: ib,
                normal: n,
                points: vec![p],
            })
        }
        (
            Shape::Box {
                half_x: ax,
                half_y: ay,
            },
            Shape::Box {
                half_x: bx,
                half_y: by,
            },
        ) => box_box(a, Vec2::new(ax, ay), b, Vec2::new(bx, by)).map(|(normal, points)| Manifold {
            a: ia,
            b: ib,
            normal,
            points,
        }),
    }
}

fn disk_disk(pa: Vec2, ra: f64, pb: Vec2, rb: f64) -> Option<(Vec2, Vec<ContactPoint>)> {
    let d = pb - pa;
    let dist = d.norm();
    let penetration = ra + rb - dist;
    if penetration <= 0.0 {
        return None;
    }
    let normal = if dist > 1e-12 {
        d / dist
    } else {
        Vec2::new(1.0, 0.0)
    };
    let point = pa + normal * (ra - 0.5 * penetration);
    Some((normal, vec![ContactPoint { point, penetration }]))
}

/// Disk against an oriented box. The returned normal points from the box
/// toward the disk.
fn disk_box(
    center: Vec2,
    radius: f64,
    bx: &Body,
    half_x: f64,
    half_y: f64,
) -> Option<(Vec2, ContactPoint)> {
    let (ex, ey) = rotation(bx.pose.theta);
    let rel = center - bx.pose.position();
    let local = Vec2::new(rel.dot(&ex), rel.dot(&ey));
    let clamped = Vec2::new(
        local.x.clamp(-half_x, half_x),
        local.y.clamp(-half_y, half_y),
    );
    let (normal_local, penetration, surface_local) = if clamped == local {
        // center inside the box: push out through the nearest face
        let dx = half_x - local.x.abs();
        let dy = half_y - local.y.abs();
        if dx < dy {
            let s = if local.x >= 0.0 { 1.0 } else { -1.0 };
            (
                Vec2::new(s, 0.0),
                radius + dx,
                Vec2::new(s * half_x, local.y),
            )
        } else {
            let s = if local.y >= 0.0 { 1.0 } else { -1.0 };
            (
                Vec2::new(0.0, s),
                radius + dy,
                Vec2::new(local.x, s * half_y),
            )
        }
    } else {
        let d = local - clamped;
        let dist = d.norm();
        if dist >= radius {
            return None;
        }
        (d / dist, radius - dist, clamped)
    };
    let to_world = |v: Vec2| ex * v.x + ey * v.y;
    let normal = to_world(normal_local);
    let point = bx.pose.position() + to_world(surface_local);
    Some((normal, ContactPoint { point, penetration }))
}

#[derive(Clone, Copy)]
enum Axis {
    FaceAX,
    FaceAY,
    FaceBX,
    FaceBY,
}

fn incident_edge(h: Vec2, pos: Vec2, ex: Vec2, ey: Vec2, normal: Vec2) -> [Vec2; 2] {
    let n = -Vec2::new(normal.dot(&ex), normal.dot(&ey));
    let local = if n.x.abs() > n.y.abs() {
        if n.x > 0.0 {
            [Vec2::new(h.x, -h.y), Vec2::new(h.x, h.y)]
        } else {
            [Vec2::new(-h.x, h.y), Vec2::new(-h.x, -h.y)]
        }
    } else if n.y > 0.0 {
        [Vec2::new(h.x, h.y), Vec2::new(-h.x, h.y)]
    } else {
        [Vec2::new(-h.x, -h.y), Vec2::new(h.x, -h.y)]
    };
    local.map(|v| pos + ex * v.x + ey * v.y)
}

fn clip_segment(input: &[Vec2], normal: Vec2, offset: f64) -> Vec<Vec2> {
    let d0 = normal.dot(&input[0]) - offset;
    let d1 = normal.dot(&input[1]) - offset;
    let mut out = Vec::with_capacity(2);
    if d0 <= 0.0 {
        out.push(input[0]);
    }
    if d1 <= 0.0 {
        out.push(input[1]);
    }
    if d0 * d1 < 0.0 {
        let t = d0 / (d0 - d1);
        out.push(input[0] + (input[1] - input[0]) * t);
    }
    out
}

/// Separating-axis test with reference-face clipping (up to two points).
fn box_box(a: &Body, ha: Vec2, b: &Body, hb: Vec2) -> Option<(Vec2, Vec<ContactPoint>)> {
    let pa = a.pose.position();
    let pb = b.pose.position();
    let (ax, ay) = rotation(a.pose.theta);
    let (bx, by) = rotation(b.pose.theta);
    let dp = pb - pa;
    let da = Vec2::new(dp.dot(&ax), dp.dot(&ay));
    let db = Vec2::new(dp.dot(&bx), dp.dot(&by));
    // |C| with C = Ra^T Rb
    let c00 = ax.dot(&bx).abs();
    let c01 = ax.dot(&by).abs();
    let c10 = ay.dot(&bx).abs();
    let c11 = ay.dot(&by).abs();

    let face_a = Vec2::new(
        da.x.abs() - ha.x - (c00 * hb.x + c01 * hb.y),
        da.y.abs() - ha.y - (c10 * hb.x + c11 * hb.y),
    );
    if face_a.x > 0.0 || face_a.y > 0.0 {
        return None;
    }
    let face_b = Vec2::new(
        db.x.abs() - (c00 * ha.x + c10 * ha.y) - hb.x,
        db.y.abs() - (c01 * ha.x + c11 * ha.y) - hb.y,
    );
    if face_b.x > 0.0 || face_b.y > 0.0 {
        return None;
    }

    const REL_TOL: f64 = 0.95;
    const ABS_TOL: f64 = 0.01;
    let sgn = |v: f64, axis: Vec2| if v > 0.0 { axis } else { -axis };
    let mut axis = Axis::FaceAX;
    let mut separation = face_a.x;
    let mut normal = sgn(da.x, ax);
    if face_a.y > REL_TOL * separation + ABS_TOL * ha.y {
        axis = Axis::FaceAY;
        separation = face_a.y;
        normal = sgn(da.y, ay);
    }
    if face_b.x > REL_TOL * separation + ABS_TOL * hb.x {
        axis = Axis::FaceBX;
        separation = face_b.x;
        normal = sgn(db.x, bx);
    }
    if face_b.y > REL_TOL * separation + ABS_TOL * hb.y {
        axis = Axis::FaceBY;
        normal = sgn(db.y, by);
    }

    let (front_normal, front, side_normal, neg_side, pos_side, edge) = match axis {
        Axis::FaceAX => {
            let side = pa.dot(&ay);
            (
                normal,
                pa.dot(&normal) + ha.x,
                ay,
                -side + ha.y,
                side + ha.y,
                incident_edge(hb, pb, bx, by, normal),
            )
        }
        Axis::FaceAY => {
            let side = pa.dot(&ax);
            (
                normal,
                pa.dot(&normal) + ha.y,
                ax,
                -side + ha.x,
                side + ha.x,
                incident_edge(hb, pb, bx, by, normal),
            )
        }
        Axis::FaceBX => {
            let fnorm = -normal;
            let side = pb.dot(&by);
            (
                fnorm,
                pb.dot(&fnorm) + hb.x,
                by,
                -side + hb.y,
                side + hb.y,
                incident_edge(ha, pa, ax, ay, fnorm),
            )
        }
        Axis::FaceBY => {
            let fnorm = -normal;
            let side = pb.dot(&bx);
            (
                fnorm,
                pb.dot(&fnorm) + hb.y,
                bx,
                -side + hb.x,
                side + hb.x,
                incident_edge(ha, pa, ax, ay, fnorm),
            )
        }
    };

    let clip1 = clip_segment(&edge, -side_normal, neg_side);
    if clip1.len() < 2 {
        return None;
    }
    let clip2 = clip_segment(&clip1, side_normal, pos_side);
    if clip2.len() < 2 {
        return None;
    }
    let points: Vec<ContactPoint> = clip2
        .iter()
        .filter_map(|v| {
            let sep = front_normal.dot(v) - front;
            (sep < 0.0).then(|| ContactPoint {
                point: v - front_normal * (0.5 * sep),
                penetration: -sep,
            })
        })
        .collect();
    if points.is_empty() {
        None
    } else {
        Some((normal, points))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::{BodyClass, BodyId, Pose, Twist};

    fn body(shape: Shape, x: f64, y: f64, theta: f64) -> Body {
        Body {
            id: BodyId(0),
            shape,
            pose: Pose::new(x, y, theta),
            velocity: Twist::default(),
            mass: 1.0,
            inertia: shape.inertia(1.0),
            class: BodyClass::Movable,
            support_friction: 0.0,
        }
    }

    #[test]
    fn separated_bodies_have_no_contacts() {
        let bodies = [
            body(Shape::Disk { radius: 0.1 }, 0.0, 0.0, 0.0),
            body(Shape::Disk { radius: 0.1 }, 0.25, 0.0, 0.0),
            body(
                Shape::Box {
                    half_x: 0.05,
                    half_y: 0.05,
                },
                0.0,
                0.3,
                0.4,
            ),
        ];
        assert!(find_contacts(&bodies).is_empty());
    }

    #[test]
    fn touching_disks_are_not_in_contact() {
        let bodies = [
            body(Shape::Disk { radius: 0.5 }, 0.0, 0.0, 0.0),
            body(Shape::Disk { radius: 0.5 }, 1.0, 0.0, 0.0),
        ];
        assert!(find_contacts(&bodies).is_empty());
    }

    #[test]
    fn overlapping_disks() {
        let bodies = [
            body(Shape::Disk { radius: 0.1 }, 0.0, 0.0, 0.0),
            body(Shape::Disk { radius: 0.1 }, 0.0, 0.15, 0.0),
        ];
        let m = &find_contacts(&bodies)[0];
        assert!((m.normal - Vec2::new(0.0, 1.0)).norm() < 1e-12);
        assert!((m.points[0].penetration - 0.05).abs() < 1e-12);
    }

    #[test]
    fn disk_against_box_face() {
        let bodies = [
            body(
                Shape::Box {
                    half_x: 0.1,
                    half_y: 0.5,
                },
                0.0,
                0.0,
                0.0,
            ),
            body(Shape::Disk { radius: 0.05 }, 0.14, 0.1, 0.0),
        ];
        let m = &find_contacts(&bodies)[0];
        assert!((m.normal - Vec2::new(1.0, 0.0)).norm() < 1e-12);
        assert!((m.points[0].penetration - 0.01).abs() < 1e-12);
        // reversed order flips the normal
        let rev = [bodies[1], bodies[0]];
        let m = &find_contacts(&rev)[0];
        assert!((m.normal - Vec2::new(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn stacked_boxes_give_two_points() {
        let bodies = [
            body(
                Shape::Box {
                    half_x: 0.1,
                    half_y: 0.1,
                },
                0.0,
                0.0,
                0.0,
            ),
            body(
                Shape::Box {
                    half_x: 0.1,
                    half_y: 0.1,
                },
                0.05,
                0.19,
                0.0,
            ),
        ];
        let m = &find_contacts(&bodies)[0];
        assert_eq!(m.points.len(), 2);
        assert!((m.normal - Vec2::new(0.0, 1.0)).norm() < 1e-12);
        for p in &m.points {
            assert!((p.penetration - 0.01).abs() < 1e-9);
        }
    }

    #[test]
    fn rotated_box_corner_contact() {
        let q = std::f64::consts::FRAC_PI_4;
        let bodies = [
            body(
                Shape::Box {
                    half_x: 0.1,
                    half_y: 0.1,
                },
                0.0,
                0.0,
                0.0,
            ),
            body(
                Shape::Box {
                    half_x: 0.1,
                    half_y: 0.1,
                },
                0.0,
                0.1 + 0.1 * 2f64.sqrt() - 0.01,
                q,
            ),
        ];
        let m = &find_contacts(&bodies)[0];
        assert_eq!(m.points.len(), 1);
        assert!((m.points[0].penetration - 0.01).abs() < 1e-9);
    }
}
