use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::spike::PixelCoord;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        self * (1.0 / self.norm())
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn min(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    pub fn max(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit length.
    pub direction: Vec3,
    pub near: f64,
    pub far: f64,
}

impl Ray {
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

/// Rigid camera-to-world transform. The rotation columns are the camera's
/// right, down and forward axes in world coordinates (x right, y down, z
/// into the scene).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: [[f64; 3]; 3],
    pub translation: Vec3,
}

impl Pose {
    pub fn from_axes(right: Vec3, down: Vec3, forward: Vec3, position: Vec3) -> Self {
        let rotation = [
            [right.x, down.x, forward.x],
            [right.y, down.y, forward.y],
            [right.z, down.z, forward.z],
        ];
        Self {
            rotation,
            translation: position,
        }
    }

    pub fn column(&self, i: usize) -> Vec3 {
        Vec3::new(self.rotation[0][i], self.rotation[1][i], self.rotation[2][i])
    }

    pub fn right(&self) -> Vec3 {
        self.column(0)
    }

    pub fn down(&self) -> Vec3 {
        self.column(1)
    }

    pub fn forward(&self) -> Vec3 {
        self.column(2)
    }

    pub fn rotate(&self, v: Vec3) -> Vec3 {
        let r = &self.rotation;
        Vec3::new(
            r[0][0] * v.x + r[0][1] * v.y + r[0][2] * v.z,
            r[1][0] * v.x + r[1][1] * v.y + r[1][2] * v.z,
            r[2][0] * v.x + r[2][1] * v.y + r[2][2] * v.z,
        )
    }

    /// Largest deviation of `RᵀR` from identity.
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let d = self.column(i).dot(self.column(j)) - if i == j { 1.0 } else { 0.0 };
                worst = worst.max(d.abs());
            }
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub pose: Pose,
    pub focal: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    /// Camera at `eye` looking at `target`, with `world_up` fixing the roll.
    pub fn look_at(eye: Vec3, target: Vec3, world_up: Vec3, focal: f64, width: usize, height: usize) -> Self {
        let forward = (target - eye).normalized();
        let right = forward.cross(world_up).normalized();
        let down = forward.cross(right);
        Self {
            pose: Pose::from_axes(right, down, forward, eye),
            focal,
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal > 0.0) {
            return Err(Error::Invalid(format!("focal {} must be positive", self.focal)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::ZeroDimension);
        }
        if self.pose.orthonormality_error() > 1e-6 {
            return Err(Error::Invalid("camera rotation is not orthonormal".into()));
        }
        Ok(())
    }
}

/// Pinhole ray through the centre of pixel `px`.
pub fn generate_ray(cam: &Camera, px: PixelCoord, near: f64, far: f64) -> Result<Ray> {
    if px.x >= cam.width || px.y >= cam.height {
        return Err(Error::OutOfBounds { x: px.x, y: px.y });
    }
    let local = Vec3::new(
        (px.x as f64 + 0.5 - cam.width as f64 / 2.0) / cam.focal,
        (px.y as f64 + 0.5 - cam.height as f64 / 2.0) / cam.focal,
        1.0,
    );
    Ok(Ray {
        origin: cam.pose.translation,
        direction: cam.pose.rotate(local).normalized(),
        near,
        far,
    })
}
