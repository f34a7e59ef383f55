//! Cornell-box scenes, a G-buffer rasterizer, direct lighting, a diffuse
//! path tracer, and dataset generation.

mod dataset;
pub mod geometry;
mod mesh;
mod raster;
mod render;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use geometry::{facing, intersect_box, intersect_cylinder, intersect_sphere, Hit, Mat3, Quad, Rgb};

pub use dataset::{
    assemble_input, frame_path, gbuffer_to_network, generate_dataset, load_frame, network_to_radiance, radiance_to_network,
    split_dataset, to_display, Axis, DatasetManifest, FrameCoords, FrameRecord, GBufferFrame, Holdout, Split,
    SweepConfig, BUFFER_NAMES, DATASET_VERSION, INPUT_CHANNELS, MANIFEST_FILE, RADIANCE_MAX,
};
pub use geometry::{Ray, Vec3};
pub use mesh::Mesh;
pub use raster::Raster;
pub use render::{
    decode_normal, encode_normal, path_trace, raycast_gbuffers, render_direct, GBuffers, DEFAULT_MAX_BOUNCES,
    ROULETTE_START,
};

/// Angle between the light direction and the view axis during sweeps.
pub const LIGHT_TILT_DEG: f64 = 35.0;
/// Radiance of the swept directional light.
pub const LIGHT_RADIANCE: f64 = 3.0;
/// Height of swept objects' centres above the box centre (negative: below).
pub const OBJECT_HEIGHT: f64 = -0.35;

pub const WHITE: Rgb = Vec3::new(0.725, 0.71, 0.68);
pub const RED: Rgb = Vec3::new(0.63, 0.065, 0.05);
pub const GREEN: Rgb = Vec3::new(0.14, 0.45, 0.091);

/// One diffuse rectangle.
#[derive(Clone, Debug, PartialEq)]
pub struct Wall {
    pub quad: Quad,
    pub albedo: Rgb,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    Sphere { radius: f64 },
    Cube { half_extent: f64 },
    Cylinder { radius: f64, half_height: f64 },
    Mesh(Arc<Mesh>),
}

impl Shape {
    /// Radius of a sphere about the object origin that contains the shape.
    pub fn bounding_radius(&self) -> f64 {
        match self {
            Shape::Sphere { radius } => *radius,
            Shape::Cube { half_extent } => half_extent * 3f64.sqrt(),
            Shape::Cylinder { radius, half_height } => radius.hypot(*half_height),
            Shape::Mesh(m) => m.bounding_radius(),
        }
    }
}

/// A shape with a rigid pose and a diffuse albedo.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneObject {
    shape: Shape,
    rotation_deg: Vec3,
    translation: Vec3,
    albedo: Rgb,
    rotation: Mat3,
}

impl SceneObject {
    /// `rotation_deg` holds angles about x, y and z, applied in that order.
    pub fn new(shape: Shape, rotation_deg: Vec3, translation: Vec3, albedo: Rgb) -> Self {
        SceneObject {
            shape,
            rotation_deg,
            translation,
            albedo,
            rotation: Mat3::from_euler_deg(rotation_deg),
        }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn rotation_deg(&self) -> Vec3 {
        self.rotation_deg
    }

    pub fn translation(&self) -> Vec3 {
        self.translation
    }

    pub fn albedo(&self) -> Rgb {
        self.albedo
    }

    fn intersect(&self, ray: &Ray, t_max: f64) -> Option<(f64, Vec3)> {
        let inv = self.rotation.transpose();
        let local = Ray {
            origin: inv.mul_vec(ray.origin - self.translation),
            dir: inv.mul_vec(ray.dir),
        };
        let (t, n) = match &self.shape {
            Shape::Sphere { radius } => intersect_sphere(&local, *radius, t_max),
            Shape::Cube { half_extent } => intersect_box(&local, Vec3::splat(*half_extent), t_max),
            Shape::Cylinder { radius, half_height } => intersect_cylinder(&local, *radius, *half_height, t_max),
            Shape::Mesh(m) => m.intersect(&local, t_max),
        }?;
        Some((t, self.rotation.mul_vec(n)))
    }
}

/// Light arriving from a single direction, as from a distant sun.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirectionalLight {
    /// Unit vector pointing from the scene toward the light.
    pub direction: Vec3,
    pub radiance: Rgb,
}

impl DirectionalLight {
    pub fn new(direction: Vec3, radiance: Rgb) -> Result<Self> {
        let direction = direction
            .try_normalize()
            .ok_or_else(|| Error::invalid("light direction must be nonzero and finite"))?;
        Ok(DirectionalLight { direction, radiance })
    }

    /// The swept light: it circles the view axis (+z) at a fixed tilt, so
    /// it always shines in through the open front of the box.
    pub fn swept(angle_deg: f64) -> Self {
        let (sa, ca) = angle_deg.to_radians().sin_cos();
        let (st, ct) = LIGHT_TILT_DEG.to_radians().sin_cos();
        DirectionalLight {
            direction: Vec3::new(ca * st, sa * st, ct),
            radiance: Vec3::splat(LIGHT_RADIANCE),
        }
    }
}

/// Diffuse walls, at most one object, an optional directional light and a
/// constant environment radiance seen by rays that leave the scene.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub walls: Vec<Wall>,
    pub object: Option<SceneObject>,
    pub light: Option<DirectionalLight>,
    pub environment: Rgb,
}

impl Scene {
    /// The box `[-1, 1]³` with its front face (+z) open: red left wall,
    /// green right wall, white floor, ceiling and back wall.
    pub fn cornell_box(light: Option<DirectionalLight>, object: Option<SceneObject>) -> Self {
        let wall = |origin: Vec3, u: Vec3, v: Vec3, albedo| Wall {
            quad: Quad { origin, u, v },
            albedo,
        };
        let x2 = Vec3::new(2.0, 0.0, 0.0);
        let y2 = Vec3::new(0.0, 2.0, 0.0);
        let z2 = Vec3::new(0.0, 0.0, 2.0);
        let m = Vec3::splat(-1.0);
        Scene {
            walls: vec![
                wall(m, x2, z2, WHITE),
                wall(Vec3::new(-1.0, 1.0, -1.0), x2, z2, WHITE),
                wall(m, x2, y2, WHITE),
                wall(m, y2, z2, RED),
                wall(Vec3::new(1.0, -1.0, -1.0), y2, z2, GREEN),
            ],
            object,
            light,
            environment: Vec3::ZERO,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |c: Rgb| c.min_component() >= 0.0 && c.max_component() <= 1.0;
        for (i, w) in self.walls.iter().enumerate() {
            if !in_unit(w.albedo) {
                return Err(Error::invalid(format!("wall {i} albedo {:?} outside [0, 1]", w.albedo.to_array())));
            }
            if w.quad.u.cross(w.quad.v).length() < 1e-12 {
                return Err(Error::invalid(format!("wall {i} is degenerate")));
            }
        }
        if let Some(light) = &self.light {
            if (light.direction.length() - 1.0).abs() > 1e-9 {
                return Err(Error::invalid("light direction is not normalized"));
            }
            if light.radiance.min_component() < 0.0 || !light.radiance.is_finite() {
                return Err(Error::invalid("light radiance must be finite and ≥ 0"));
            }
        }
        if self.environment.min_component() < 0.0 || !self.environment.is_finite() {
            return Err(Error::invalid("environment radiance must be finite and ≥ 0"));
        }
        if let Some(obj) = &self.object {
            if !in_unit(obj.albedo) {
                return Err(Error::invalid("object albedo outside [0, 1]"));
            }
            // Only an enclosure (walls spanning a volume) constrains the
            // object; a lone plane does not.
            let enclosure = self
                .wall_bounds()
                .filter(|(lo, hi)| (0..3).all(|a| hi[a] - lo[a] > 1e-9));
            if let Some((lo, hi)) = enclosure {
                let r = obj.shape.bounding_radius();
                let (olo, ohi) = (obj.translation - Vec3::splat(r), obj.translation + Vec3::splat(r));
                let eps = 1e-9;
                for a in 0..3 {
                    if olo[a] < lo[a] - eps || ohi[a] > hi[a] + eps {
                        return Err(Error::invalid("object does not fit inside the box"));
                    }
                }
            }
        }
        Ok(())
    }

    fn wall_bounds(&self) -> Option<(Vec3, Vec3)> {
        let mut corners = self.walls.iter().flat_map(|w| w.quad.corners());
        let first = corners.next()?;
        Some(corners.fold((first, first), |(lo, hi), c| (lo.min_elem(c), hi.max_elem(c))))
    }

    /// Centre and radius of a sphere enclosing all geometry.
    pub fn bounds(&self) -> (Vec3, f64) {
        let mut bb = self.wall_bounds();
        if let Some(obj) = &self.object {
            let r = Vec3::splat(obj.shape.bounding_radius());
            let (lo, hi) = (obj.translation - r, obj.translation + r);
            bb = Some(bb.map_or((lo, hi), |(a, b)| (a.min_elem(lo), b.max_elem(hi))));
        }
        match bb {
            Some((lo, hi)) => ((lo + hi) * 0.5, (hi - lo).length() * 0.5),
            None => (Vec3::ZERO, 1.0),
        }
    }

    /// Distance that maps to depth 1: camera-to-centre distance plus the
    /// bounding radius, an upper bound on any visible hit distance.
    pub fn depth_scale(&self, camera: &Camera) -> f64 {
        let (center, radius) = self.bounds();
        (camera.position - center).length() + radius
    }

    pub fn intersect(&self, ray: &Ray) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        let mut t_max = f64::INFINITY;
        for w in &self.walls {
            if let Some((t, n)) = w.quad.intersect(ray, t_max) {
                t_max = t;
                best = Some(Hit {
                    t,
                    normal: n,
                    albedo: w.albedo,
                });
            }
        }
        if let Some(obj) = &self.object {
            if let Some((t, n)) = obj.intersect(ray, t_max) {
                best = Some(Hit {
                    t,
                    normal: n,
                    albedo: obj.albedo,
                });
            }
        }
        best.map(|h| Hit {
            normal: facing(h.normal, ray.dir),
            ..h
        })
    }

    /// Whether anything blocks the ray (toward a light at infinity).
    pub fn occluded(&self, ray: &Ray) -> bool {
        self.walls.iter().any(|w| w.quad.intersect(ray, f64::INFINITY).is_some())
            || self.object.as_ref().is_some_and(|o| o.intersect(ray, f64::INFINITY).is_some())
    }
}

/// Pinhole camera with a square image.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Camera {
    pub position: Vec3,
    pub look_at: Vec3,
    pub up: Vec3,
    /// Vertical field of view in degrees.
    pub fov_deg: f64,
    /// Image width and height.
    pub resolution: usize,
}

impl Camera {
    pub fn new(position: Vec3, look_at: Vec3, fov_deg: f64, resolution: usize) -> Self {
        Camera {
            position,
            look_at,
            up: Vec3::new(0.0, 1.0, 0.0),
            fov_deg,
            resolution,
        }
    }

    /// The fixed camera in front of the Cornell box's open face.
    pub fn cornell(resolution: usize) -> Self {
        Camera::new(Vec3::new(0.0, 0.0, 3.8), Vec3::ZERO, 30.0, resolution)
    }

    pub fn validate(&self) -> Result<()> {
        self.frame().map(|_| ())
    }

    pub(crate) fn frame(&self) -> Result<CameraFrame> {
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return Err(Error::invalid(format!("field of view {} outside (0, 180)", self.fov_deg)));
        }
        if !self.resolution.is_power_of_two() {
            return Err(Error::invalid(format!("resolution {} is not a power of two", self.resolution)));
        }
        let forward = (self.look_at - self.position)
            .try_normalize()
            .ok_or_else(|| Error::invalid("camera position equals look-at point (zero view vector)"))?;
        let right = forward
            .cross(self.up)
            .try_normalize()
            .ok_or_else(|| Error::invalid("camera up vector is parallel to the view direction"))?;
        let up = right.cross(forward);
        Ok(CameraFrame {
            origin: self.position,
            forward,
            right,
            up,
            tan_half: (self.fov_deg.to_radians() / 2.0).tan(),
            size: self.resolution,
        })
    }
}

pub(crate) struct CameraFrame {
    origin: Vec3,
    forward: Vec3,
    right: Vec3,
    up: Vec3,
    tan_half: f64,
    size: usize,
}

impl CameraFrame {
    /// Ray through the centre of pixel `(px, py)`; row 0 is the top.
    pub(crate) fn ray(&self, px: usize, py: usize) -> Ray {
        let s = self.size as f64;
        let x = ((px as f64 + 0.5) / s * 2.0 - 1.0) * self.tan_half;
        let y = (1.0 - (py as f64 + 0.5) / s * 2.0) * self.tan_half;
        Ray {
            origin: self.origin,
            dir: (self.forward + self.right * x + self.up * y).normalize(),
        }
    }
}

/// Object shapes available to sweeps.
#[derive(Clone, Debug, PartialEq)]
pub enum ObjectKind {
    Sphere,
    Cube,
    Cylinder,
    Mesh(PathBuf),
}

impl ObjectKind {
    /// The canonical sized shape; meshes are centred and scaled to the
    /// same bounding radius as the cube.
    pub fn shape(&self) -> Result<Shape> {
        Ok(match self {
            ObjectKind::Sphere => Shape::Sphere { radius: 0.45 },
            ObjectKind::Cube => Shape::Cube { half_extent: 0.35 },
            ObjectKind::Cylinder => Shape::Cylinder {
                radius: 0.35,
                half_height: 0.45,
            },
            ObjectKind::Mesh(path) => Shape::Mesh(Arc::new(Mesh::load_obj(path)?.normalized(0.35 * 3f64.sqrt()))),
        })
    }
}

impl fmt::Display for ObjectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObjectKind::Sphere => f.write_str("sphere"),
            ObjectKind::Cube => f.write_str("cube"),
            ObjectKind::Cylinder => f.write_str("cylinder"),
            ObjectKind::Mesh(p) => write!(f, "mesh:{}", p.display()),
        }
    }
}

impl FromStr for ObjectKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sphere" => Ok(ObjectKind::Sphere),
            "cube" => Ok(ObjectKind::Cube),
            "cylinder" => Ok(ObjectKind::Cylinder),
            _ => match s.strip_prefix("mesh:") {
                Some(p) if !p.is_empty() => Ok(ObjectKind::Mesh(PathBuf::from(p))),
                _ => Err(Error::invalid(format!(
                    "unknown object '{s}' (expected sphere, cube, cylinder or mesh:<file.obj>)"
                ))),
            },
        }
    }
}
