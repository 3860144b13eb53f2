//! Convex polygon shapes and planar pose transforms.

use nalgebra::{Vector2, Vector3};

use crate::{Error, Result};

/// Rotate a vector by angle `theta`.
pub fn rotate(v: Vector2<f64>, theta: f64) -> Vector2<f64> {
    let (s, c) = theta.sin_cos();
    Vector2::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

/// 2D cross product (z component of the 3D cross).
pub fn cross2(a: Vector2<f64>, b: Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Perpendicular vector: `v` rotated by +90 degrees.
pub fn perp(v: Vector2<f64>) -> Vector2<f64> {
    Vector2::new(-v.y, v.x)
}

/// Map a body-frame point to world coordinates for pose `q = (x, y, theta)`.
pub fn to_world(q: &Vector3<f64>, local: Vector2<f64>) -> Vector2<f64> {
    Vector2::new(q.x, q.y) + rotate(local, q.z)
}

/// A strictly convex polygon with counter-clockwise vertices in body frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon {
    vertices: Vec<Vector2<f64>>,
}

impl ConvexPolygon {
    /// Validates counter-clockwise winding and strict convexity: the cross
    /// product of every pair of consecutive edges must be positive.
    pub fn new(vertices: Vec<Vector2<f64>>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidPolygon);
        }
        let n = vertices.len();
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            if cross2(b - a, c - b) <= 0.0 {
                return Err(Error::InvalidPolygon);
            }
        }
        Ok(Self { vertices })
    }

    /// Axis-aligned box centered on the body origin.
    pub fn centered_box(width: f64, height: f64) -> Self {
        let hw = width / 2.0;
        let hh = height / 2.0;
        Self {
            vertices: vec![
                Vector2::new(-hw, -hh),
                Vector2::new(hw, -hh),
                Vector2::new(hw, hh),
                Vector2::new(-hw, hh),
            ],
        }
    }

    pub fn vertices(&self) -> &[Vector2<f64>] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Outward unit normal of edge `i` (from vertex `i` to vertex `i + 1`).
    pub fn edge_normal(&self, i: usize) -> Vector2<f64> {
        let n = self.vertices.len();
        let e = self.vertices[(i + 1) % n] - self.vertices[i];
        // ccw winding puts the outside on the clockwise side of the edge
        Vector2::new(e.y, -e.x).normalize()
    }

    /// Second moment of area factor: the rotational inertia of this polygon
    /// with uniform density and total mass `mass`, about the body origin.
    pub fn inertia(&self, mass: f64) -> f64 {
        // standard polygon inertia formula via the shoelace decomposition
        let mut num = 0.0;
        let mut den = 0.0;
        let n = self.vertices.len();
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let cr = cross2(a, b);
            num += cr * (a.dot(&a) + a.dot(&b) + b.dot(&b));
            den += cr;
        }
        mass * num / (6.0 * den)
    }
}
