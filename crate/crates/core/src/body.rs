//! Planar rigid bodies.

use nalgebra::{Vector2, Vector3};

use crate::geometry::ConvexPolygon;
use crate::{Error, Result};

/// Identifier of a body within a [`crate::dynamics::World`].
pub type BodyId = u32;

/// A planar rigid body with a convex polygon shape.
///
/// Pose is `q = (x, y, theta)` and velocity `v = (vx, vy, omega)`. Static
/// bodies contribute no degrees of freedom to the dynamics; a static body
/// with a nonzero velocity is treated as kinematically scripted (its motion
/// is prescribed, and the prescribed surface velocity enters the contact
/// equations as a known constant).
#[derive(Debug, Clone)]
pub struct RigidBody2D {
    pub id: BodyId,
    pub mass: f64,
    pub inertia: f64,
    pub pose: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub shape: ConvexPolygon,
    pub is_static: bool,
    pub friction_coefficient: f64,
}

impl RigidBody2D {
    pub fn new_dynamic(
        id: BodyId,
        mass: f64,
        inertia: f64,
        pose: Vector3<f64>,
        shape: ConvexPolygon,
        friction_coefficient: f64,
    ) -> Result<Self> {
        if mass <= 0.0 || inertia <= 0.0 {
            return Err(Error::InvalidMassProperties);
        }
        Ok(Self {
            id,
            mass,
            inertia,
            pose,
            velocity: Vector3::zeros(),
            shape,
            is_static: false,
            friction_coefficient,
        })
    }

    pub fn new_static(
        id: BodyId,
        pose: Vector3<f64>,
        shape: ConvexPolygon,
        friction_coefficient: f64,
    ) -> Self {
        Self {
            id,
            mass: f64::INFINITY,
            inertia: f64::INFINITY,
            pose,
            velocity: Vector3::zeros(),
            shape,
            is_static: true,
            friction_coefficient,
        }
    }

    /// World position of the center of mass (the body origin).
    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.pose.x, self.pose.y)
    }

    /// World velocity of the material point currently at world position `p`.
    pub fn point_velocity(&self, p: Vector2<f64>) -> Vector2<f64> {
        let r = p - self.position();
        Vector2::new(self.velocity.x, self.velocity.y) + self.velocity.z * crate::geometry::perp(r)
    }

    /// Vertices of the shape in world coordinates.
    pub fn world_vertices(&self) -> Vec<Vector2<f64>> {
        self.shape
            .vertices()
            .iter()
            .map(|&v| crate::geometry::to_world(&self.pose, v))
            .collect()
    }
}
