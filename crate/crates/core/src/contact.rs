//! Vertex/edge contact candidate detection between convex polygons.

use nalgebra::Vector2;

use crate::body::{BodyId, RigidBody2D};
use crate::geometry::perp;

/// Stable identity of a contact candidate across time steps.
///
/// Candidates are regenerated from scratch every step; two candidates from
/// different steps refer to the same physical contact when their feature ids
/// are equal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FeatureId {
    pub body_a: BodyId,
    pub body_b: BodyId,
    pub vertex: usize,
    pub edge: usize,
}

/// A candidate contact between a vertex of `body_a` and an edge of `body_b`.
#[derive(Debug, Clone)]
pub struct ContactCandidate {
    pub id: usize,
    pub body_a: BodyId,
    pub body_b: BodyId,
    pub feature: FeatureId,
    /// World position of the vertex.
    pub point: Vector2<f64>,
    /// Unit normal, pointing from `body_b` into `body_a`.
    pub normal: Vector2<f64>,
    /// Signed gap along the normal; negative means penetration.
    pub gap: f64,
    /// Unit tangent: the normal rotated +90 degrees.
    pub tangent: Vector2<f64>,
    /// Pairwise friction coefficient.
    pub mu: f64,
    /// Known gap rate contributed by scripted (static, moving) bodies.
    pub normal_rate: f64,
    /// Known tangential slip rate contributed by scripted bodies, along `+tangent`.
    pub tangent_rate: f64,
}

/// Finds vertex/edge candidates between all distinct body pairs.
///
/// For each vertex of one body against another body's polygon, the supporting
/// edge (the one maximizing the signed separation) is selected; a candidate is
/// emitted when the vertex projects onto that edge's span and the signed gap
/// is below `margin`. Pairs of static bodies are skipped. Non-convex shapes
/// cannot occur: [`crate::geometry::ConvexPolygon`] rejects them at
/// construction. Output order is deterministic: sorted by
/// `(body_a, body_b, vertex, edge)`.
pub fn detect_contacts(bodies: &[RigidBody2D], margin: f64) -> Vec<ContactCandidate> {
    let mut out = Vec::new();
    for a in bodies {
        for b in bodies {
            if a.id == b.id || (a.is_static && b.is_static) {
                continue;
            }
            vertex_face_candidates(a, b, margin, &mut out);
        }
    }
    out.sort_by_key(|c| c.feature);
    for (i, c) in out.iter_mut().enumerate() {
        c.id = i;
    }
    out
}

/// Candidates of every vertex of `a` against the supporting edge of `b`.
fn vertex_face_candidates(
    a: &RigidBody2D,
    b: &RigidBody2D,
    margin: f64,
    out: &mut Vec<ContactCandidate>,
) {
    let verts_b = b.world_vertices();
    let nb = verts_b.len();
    let normals_b: Vec<Vector2<f64>> = (0..nb).map(|i| {
        let e = verts_b[(i + 1) % nb] - verts_b[i];
        Vector2::new(e.y, -e.x).normalize()
    }).collect();

    for (vi, p) in a.world_vertices().into_iter().enumerate() {
        // supporting edge: the one with maximal signed distance
        let mut best = 0usize;
        let mut best_d = f64::NEG_INFINITY;
        for ei in 0..nb {
            let d = normals_b[ei].dot(&(p - verts_b[ei]));
            if d > best_d {
                best_d = d;
                best = ei;
            }
        }
        if best_d >= margin {
            continue;
        }
        // vertex must project onto the edge span (with a hair of slack)
        let e0 = verts_b[best];
        let e1 = verts_b[(best + 1) % nb];
        let edge = e1 - e0;
        let len2 = edge.norm_squared();
        let s = edge.dot(&(p - e0)) / len2;
        if !(-1e-9..=1.0 + 1e-9).contains(&s) {
            continue;
        }

        let normal = normals_b[best];
        let tangent = perp(normal);
        let mut normal_rate = 0.0;
        let mut tangent_rate = 0.0;
        if a.is_static {
            let va = a.point_velocity(p);
            normal_rate += normal.dot(&va);
            tangent_rate += tangent.dot(&va);
        }
        if b.is_static {
            let vb = b.point_velocity(p);
            normal_rate -= normal.dot(&vb);
            tangent_rate -= tangent.dot(&vb);
        }
        out.push(ContactCandidate {
            id: 0,
            body_a: a.id,
            body_b: b.id,
            feature: FeatureId {
                body_a: a.id,
                body_b: b.id,
                vertex: vi,
                edge: best,
            },
            point: p,
            normal,
            gap: best_d,
            tangent,
            mu: (a.friction_coefficient * b.friction_coefficient).sqrt(),
            normal_rate,
            tangent_rate,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ConvexPolygon;
    use approx::assert_abs_diff_eq;
    use nalgebra::Vector3;

    fn unit_box_on_floor(height: f64) -> Vec<RigidBody2D> {
        let floor = RigidBody2D::new_static(
            0,
            Vector3::new(0.0, -0.5, 0.0),
            ConvexPolygon::centered_box(10.0, 1.0),
            0.5,
        );
        let mut boxb = RigidBody2D::new_dynamic(
            1,
            1.0,
            1.0 / 6.0,
            Vector3::new(0.0, 0.5 + height, 0.0),
            ConvexPolygon::centered_box(1.0, 1.0),
            0.5,
        )
        .unwrap();
        boxb.velocity = Vector3::zeros();
        vec![floor, boxb]
    }

    #[test]
    fn resting_box_has_two_floor_candidates() {
        let bodies = unit_box_on_floor(0.0);
        let cands = detect_contacts(&bodies, 0.01);
        assert_eq!(cands.len(), 2);
        for c in &cands {
            assert_abs_diff_eq!(c.gap, 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(c.normal, Vector2::new(0.0, 1.0), epsilon = 1e-12);
            assert_abs_diff_eq!(c.tangent, Vector2::new(-1.0, 0.0), epsilon = 1e-12);
            assert_eq!(c.body_a, 1);
            assert_eq!(c.body_b, 0);
        }
        // deterministic ordering by feature
        assert!(cands[0].feature < cands[1].feature);
    }

    #[test]
    fn distant_box_yields_no_candidates() {
        let bodies = unit_box_on_floor(1.0);
        assert!(detect_contacts(&bodies, 0.01).is_empty());
    }

    #[test]
    fn triangle_vertex_near_face() {
        // finger face at x = 0 facing +x; triangle vertex 0.005 away
        let finger = RigidBody2D::new_static(
            0,
            Vector3::new(-0.5, 0.0, 0.0),
            ConvexPolygon::centered_box(1.0, 1.0),
            0.5,
        );
        let tri_shape = ConvexPolygon::new(vec![
            Vector2::new(-0.3, 0.0),
            Vector2::new(0.3, -0.2),
            Vector2::new(0.3, 0.2),
        ])
        .unwrap();
        let tri = RigidBody2D::new_dynamic(
            1,
            1.0,
            0.1,
            Vector3::new(0.305, 0.0, 0.0),
            tri_shape,
            0.5,
        )
        .unwrap();
        let cands = detect_contacts(&[finger, tri], 0.01);
        assert_eq!(cands.len(), 1);
        assert_abs_diff_eq!(cands[0].gap, 0.005, epsilon = 1e-9);
        assert_abs_diff_eq!(cands[0].normal, Vector2::new(1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn scripted_body_contributes_gap_rate() {
        let mut bodies = unit_box_on_floor(0.005);
        // floor scripted to rise at 0.1 m/s: gap closes at -0.1 m/s
        bodies[0].velocity = Vector3::new(0.0, 0.1, 0.0);
        let cands = detect_contacts(&bodies, 0.01);
        assert_eq!(cands.len(), 2);
        for c in &cands {
            assert_abs_diff_eq!(c.normal_rate, -0.1, epsilon = 1e-12);
            assert_abs_diff_eq!(c.tangent_rate, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn penetration_reports_negative_gap() {
        let bodies = unit_box_on_floor(-0.002);
        let cands = detect_contacts(&bodies, 0.01);
        assert_eq!(cands.len(), 2);
        for c in &cands {
            assert_abs_diff_eq!(c.gap, -0.002, epsilon = 1e-12);
        }
    }
}
