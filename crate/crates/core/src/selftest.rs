//! Gradient checks and renderer analytics that can run outside the test
//! harness (the `selftest` command).

use crate::error::Result;
use crate::gradcheck::{generator_check, op_suite, GradCheck};
use crate::nn::GeneratorConfig;
use crate::scene::geometry::Quad;
use crate::scene::{
    path_trace, render_direct, Camera, DirectionalLight, Raster, Scene, SceneObject, Shape, Vec3, Wall,
    DEFAULT_MAX_BOUNCES, WHITE,
};

/// Single-precision slack for comparisons that are exact in real arithmetic.
pub const FLOAT_SLACK: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }

    fn from_grad(g: &GradCheck) -> Self {
        Check::new(
            format!("grad {}", g.name),
            g.passed(),
            format!(
                "rel err {:.2e}, forward err {:.2e}, {} coords ({} rejected)",
                g.relative_error, g.forward_error, g.samples, g.rejected
            ),
        )
    }
}

/// Every primitive on `instances` random inputs plus the composed
/// generator loss on a `1×12×16×16` input (depth 4).
pub fn gradient_checks(seed: u64, instances: usize) -> Result<Vec<Check>> {
    let mut out: Vec<Check> = op_suite(seed, instances)?.iter().map(Check::from_grad).collect();
    out.push(Check::from_grad(&generator_check(seed, GeneratorConfig::new(4, 4))?));
    Ok(out)
}

fn wall(origin: Vec3, u: Vec3, v: Vec3, albedo: f64) -> Wall {
    Wall {
        quad: Quad { origin, u, v },
        albedo: Vec3::splat(albedo),
    }
}

/// A white wall in the z = 0 plane lit head-on with unit radiance.
fn lit_wall() -> Scene {
    Scene {
        walls: vec![wall(
            Vec3::new(-5.0, -5.0, 0.0),
            Vec3::new(10.0, 0.0, 0.0),
            Vec3::new(0.0, 10.0, 0.0),
            1.0,
        )],
        object: None,
        light: Some(DirectionalLight::new(Vec3::new(0.0, 0.0, 1.0), Vec3::ONE).expect("unit light")),
        environment: Vec3::ZERO,
    }
}

/// Largest deviation from `1/π` over an unoccluded head-on lit wall.
pub fn lambert_error() -> Result<f64> {
    let img = render_direct(&lit_wall(), &Camera::new(Vec3::new(0.0, 0.0, 3.0), Vec3::ZERO, 30.0, 8))?;
    Ok(img
        .data()
        .iter()
        .map(|&v| (v as f64 - std::f64::consts::FRAC_1_PI).abs())
        .fold(0.0, f64::max))
}

/// Direct radiance at a wall pixel shadowed by a cube between it and the
/// light.
pub fn shadowed_pixel() -> Result<[f32; 3]> {
    let mut scene = lit_wall();
    scene.object = Some(SceneObject::new(
        Shape::Cube { half_extent: 0.5 },
        Vec3::ZERO,
        Vec3::new(0.0, 0.0, 2.0),
        WHITE,
    ));
    let img = render_direct(&scene, &Camera::new(Vec3::new(0.0, -3.0, 1.0), Vec3::ZERO, 10.0, 8))?;
    let p = img.pixel(4, 4);
    Ok([p[0], p[1], p[2]])
}

/// Largest relative deviation from the albedo for a diffuse plane of
/// albedo 0.5 under a uniform sky of radiance 1.
pub fn uniform_sky_error(spp: u32, seed: u64) -> Result<f64> {
    let albedo = 0.5;
    let scene = Scene {
        walls: vec![wall(
            Vec3::new(-1e4, 0.0, -1e4),
            Vec3::new(0.0, 0.0, 2e4),
            Vec3::new(2e4, 0.0, 0.0),
            albedo,
        )],
        object: None,
        light: None,
        environment: Vec3::ONE,
    };
    let img = path_trace(&scene, &Camera::new(Vec3::new(0.0, 1.0, 2.0), Vec3::ZERO, 30.0, 8), spp, DEFAULT_MAX_BOUNCES, seed)?;
    Ok(img
        .data()
        .iter()
        .map(|&v| (v as f64 - albedo).abs() / albedo)
        .fold(0.0, f64::max))
}

/// Single-bounce path tracing against the direct pass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BounceComparison {
    pub mean_abs_diff: f64,
    /// Standard error of the single-bounce estimate, from repeated renders.
    pub sigma: f64,
}

impl BounceComparison {
    /// Within three standard errors, with float slack for a noiseless
    /// estimator.
    pub fn within_noise(&self) -> bool {
        self.mean_abs_diff < (3.0 * self.sigma).max(FLOAT_SLACK)
    }
}

pub fn single_bounce_vs_direct(seed: u64) -> Result<BounceComparison> {
    let object = SceneObject::new(
        Shape::Sphere { radius: 0.45 },
        Vec3::ZERO,
        Vec3::new(0.0, crate::scene::OBJECT_HEIGHT, 0.0),
        WHITE,
    );
    let scene = Scene::cornell_box(Some(DirectionalLight::swept(30.0)), Some(object));
    let camera = Camera::cornell(16);
    let direct = render_direct(&scene, &camera)?;
    let renders: Vec<Raster> = (0..4)
        .map(|i| path_trace(&scene, &camera, 4, 1, seed + i))
        .collect::<Result<_>>()?;
    let n = direct.data().len();
    let mut var = 0.0;
    for i in 0..n {
        let vals: Vec<f64> = renders.iter().map(|r| r.data()[i] as f64).collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        var += vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
    }
    Ok(BounceComparison {
        mean_abs_diff: renders[0].mean_abs_diff(&direct)?,
        sigma: (var / n as f64).sqrt(),
    })
}

/// Renderer checks at the tolerances used by the test suite.
pub fn renderer_checks(seed: u64) -> Result<Vec<Check>> {
    let lambert = lambert_error()?;
    let shadow = shadowed_pixel()?;
    let sky = uniform_sky_error(1024, seed)?;
    let bounce = single_bounce_vs_direct(seed)?;
    Ok(vec![
        Check::new("lambert head-on = 1/π", lambert < 1e-3, format!("max abs err {lambert:.2e}")),
        Check::new("occluded pixel = 0", shadow == [0.0; 3], format!("{shadow:?}")),
        Check::new("plane under uniform sky = albedo", sky <= 0.02, format!("max rel err {sky:.4}")),
        Check::new(
            "single bounce = direct",
            bounce.within_noise(),
            format!("mean abs diff {:.2e}, σ {:.2e}", bounce.mean_abs_diff, bounce.sigma),
        ),
    ])
}

/// Everything above.
pub fn run(seed: u64) -> Result<Vec<Check>> {
    let mut out = gradient_checks(seed, 3)?;
    out.extend(renderer_checks(seed)?);
    Ok(out)
}
