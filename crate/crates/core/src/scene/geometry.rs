use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub};

/// Three-component vector, also used for linear RGB.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

pub type Rgb = Vec3;

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const ONE: Vec3 = Vec3::new(1.0, 1.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub const fn splat(v: f64) -> Self {
        Vec3::new(v, v, v)
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

    pub fn length(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Unit vector, or `None` for a zero or non-finite input.
    pub fn try_normalize(self) -> Option<Vec3> {
        let len = self.length();
        (len > 1e-12 && len.is_finite()).then(|| self / len)
    }

    pub fn normalize(self) -> Vec3 {
        self.try_normalize().expect("normalize of zero vector")
    }

    /// Component-wise product.
    pub fn mul_elem(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x * o.x, self.y * o.y, self.z * o.z)
    }

    pub fn min_elem(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    pub fn max_elem(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    pub fn max_component(self) -> f64 {
        self.x.max(self.y).max(self.z)
    }

    pub fn min_component(self) -> f64 {
        self.x.min(self.y).min(self.z)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
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

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

/// Row-major 3×3 matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    /// `Rz · Ry · Rx` for angles in degrees: x is applied first.
    pub fn from_euler_deg(angles: Vec3) -> Mat3 {
        let (sx, cx) = angles.x.to_radians().sin_cos();
        let (sy, cy) = angles.y.to_radians().sin_cos();
        let (sz, cz) = angles.z.to_radians().sin_cos();
        let rx = Mat3([[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]]);
        let ry = Mat3([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]]);
        let rz = Mat3([[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]]);
        rz.mul_mat(&ry).mul_mat(&rx)
    }

    pub fn mul_mat(&self, o: &Mat3) -> Mat3 {
        let mut r = [[0.0; 3]; 3];
        for (i, row) in r.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.0[i][k] * o.0[k][j]).sum();
            }
        }
        Mat3(r)
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        let m = &self.0;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.0;
        Mat3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit length.
    pub dir: Vec3,
}

impl Ray {
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.dir * t
    }
}

/// Nearest intersection along a ray. `normal` is unit length and faces the
/// incoming ray.
#[derive(Clone, Copy, Debug)]
pub struct Hit {
    pub t: f64,
    pub normal: Vec3,
    pub albedo: Rgb,
}

/// Orient a geometric normal against the ray direction (two-sided surfaces).
pub(crate) fn facing(n: Vec3, dir: Vec3) -> Vec3 {
    if n.dot(dir) > 0.0 {
        -n
    } else {
        n
    }
}

/// Parallelogram `origin + a·u + b·v`, `a, b ∈ [0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quad {
    pub origin: Vec3,
    pub u: Vec3,
    pub v: Vec3,
}

impl Quad {
    pub fn intersect(&self, ray: &Ray, t_max: f64) -> Option<(f64, Vec3)> {
        let n = self.u.cross(self.v);
        let denom = n.dot(ray.dir);
        if denom.abs() < 1e-14 {
            return None;
        }
        let t = n.dot(self.origin - ray.origin) / denom;
        if !(t > T_MIN && t < t_max) {
            return None;
        }
        let rel = ray.at(t) - self.origin;
        // Barycentric-style coordinates via the dual basis of (u, v).
        let nn = n.dot(n);
        let a = rel.cross(self.v).dot(n) / nn;
        let b = self.u.cross(rel).dot(n) / nn;
        if (0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b) {
            Some((t, n / nn.sqrt()))
        } else {
            None
        }
    }

    pub fn corners(&self) -> [Vec3; 4] {
        [self.origin, self.origin + self.u, self.origin + self.v, self.origin + self.u + self.v]
    }
}

/// Hits closer than this are treated as self-intersections.
pub(crate) const T_MIN: f64 = 1e-7;

/// Ray-sphere intersection for a sphere at the origin.
pub(crate) fn intersect_sphere(ray: &Ray, radius: f64, t_max: f64) -> Option<(f64, Vec3)> {
    // |o + t d|² = r², d unit: t² + 2 b t + c = 0.
    let b = ray.origin.dot(ray.dir);
    let c = ray.origin.dot(ray.origin) - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    let t = [-b - s, -b + s].into_iter().find(|&t| t > T_MIN && t < t_max)?;
    Some((t, ray.at(t) / radius))
}

/// Slab test against the box `[-half, half]`.
pub(crate) fn intersect_box(ray: &Ray, half: Vec3, t_max: f64) -> Option<(f64, Vec3)> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    let mut n0 = Vec3::ZERO;
    let mut n1 = Vec3::ZERO;
    for axis in 0..3 {
        let o = ray.origin[axis];
        let d = ray.dir[axis];
        let h = half[axis];
        let mut e = Vec3::ZERO;
        match axis {
            0 => e.x = 1.0,
            1 => e.y = 1.0,
            _ => e.z = 1.0,
        }
        if d.abs() < 1e-15 {
            if o < -h || o > h {
                return None;
            }
            continue;
        }
        let (mut ta, mut tb) = ((-h - o) / d, (h - o) / d);
        let (mut na, mut nb) = (-e, e);
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
            std::mem::swap(&mut na, &mut nb);
        }
        if ta > t0 {
            t0 = ta;
            n0 = na;
        }
        if tb < t1 {
            t1 = tb;
            n1 = nb;
        }
        if t0 > t1 {
            return None;
        }
    }
    if t0 > T_MIN && t0 < t_max {
        Some((t0, n0))
    } else if t1 > T_MIN && t1 < t_max {
        Some((t1, n1))
    } else {
        None
    }
}

/// Capped cylinder about the y axis.
pub(crate) fn intersect_cylinder(ray: &Ray, radius: f64, half_height: f64, t_max: f64) -> Option<(f64, Vec3)> {
    let mut best: Option<(f64, Vec3)> = None;
    let mut consider = |t: f64, n: Vec3| {
        if t > T_MIN && t < best.map_or(t_max, |b| b.0) {
            best = Some((t, n));
        }
    };
    let (o, d) = (ray.origin, ray.dir);
    let a = d.x * d.x + d.z * d.z;
    if a > 1e-15 {
        let b = o.x * d.x + o.z * d.z;
        let c = o.x * o.x + o.z * o.z - radius * radius;
        let disc = b * b - a * c;
        if disc >= 0.0 {
            let s = disc.sqrt();
            for t in [(-b - s) / a, (-b + s) / a] {
                let p = ray.at(t);
                if p.y.abs() <= half_height {
                    consider(t, Vec3::new(p.x, 0.0, p.z) / radius);
                }
            }
        }
    }
    if d.y.abs() > 1e-15 {
        for (cap, ny) in [(half_height, 1.0), (-half_height, -1.0)] {
            let t = (cap - o.y) / d.y;
            let p = ray.at(t);
            if p.x * p.x + p.z * p.z <= radius * radius {
                consider(t, Vec3::new(0.0, ny, 0.0));
            }
        }
    }
    best
}

/// Möller–Trumbore; returns `t` and the unnormalized geometric normal.
pub(crate) fn intersect_triangle(ray: &Ray, v: &[Vec3; 3], t_max: f64) -> Option<(f64, Vec3)> {
    let e1 = v[1] - v[0];
    let e2 = v[2] - v[0];
    let p = ray.dir.cross(e2);
    let det = e1.dot(p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = ray.origin - v[0];
    let a = s.dot(p) * inv;
    if !(0.0..=1.0).contains(&a) {
        return None;
    }
    let q = s.cross(e1);
    let b = ray.dir.dot(q) * inv;
    if b < 0.0 || a + b > 1.0 {
        return None;
    }
    let t = e2.dot(q) * inv;
    (t > T_MIN && t < t_max).then(|| (t, e1.cross(e2)))
}

/// Whether the ray hits the axis-aligned box `[lo, hi]` before `t_max`.
pub(crate) fn hits_aabb(ray: &Ray, lo: Vec3, hi: Vec3, t_max: f64) -> bool {
    let mut t0 = 0.0f64;
    let mut t1 = t_max;
    for axis in 0..3 {
        let inv = 1.0 / ray.dir[axis];
        let mut ta = (lo[axis] - ray.origin[axis]) * inv;
        let mut tb = (hi[axis] - ray.origin[axis]) * inv;
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
        if t0 > t1 {
            return false;
        }
    }
    true
}
