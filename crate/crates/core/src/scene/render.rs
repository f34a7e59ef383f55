use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::geometry::{Hit, Ray, Rgb, Vec3};
use super::{Camera, CameraFrame, Raster, Scene};
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_MAX_BOUNCES: u32 = 8;
/// First path vertex (0-based) at which Russian roulette may end a path.
pub const ROULETTE_START: u32 = 3;
/// Offset along the normal for secondary-ray origins.
const SURFACE_EPS: f64 = 1e-6;

/// Depth, encoded normal and albedo from one pixel-centre ray per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct GBuffers {
    /// One channel, distance over the scene depth scale, in `[0, 1]`.
    pub depth: Raster,
    /// Three channels, `(n + 1) / 2`.
    pub normal: Raster,
    /// Three channels, surface albedo.
    pub diffuse: Raster,
}

pub fn encode_normal(n: Vec3) -> [f32; 3] {
    [((n.x + 1.0) * 0.5) as f32, ((n.y + 1.0) * 0.5) as f32, ((n.z + 1.0) * 0.5) as f32]
}

pub fn decode_normal(e: [f32; 3]) -> Vec3 {
    Vec3::new(e[0] as f64 * 2.0 - 1.0, e[1] as f64 * 2.0 - 1.0, e[2] as f64 * 2.0 - 1.0)
}

fn prepare(scene: &Scene, camera: &Camera) -> Result<CameraFrame> {
    scene.validate()?;
    camera.frame()
}

/// Fill a `size×size×channels` raster row by row in parallel.
fn render_rows(size: usize, channels: usize, pixel: impl Fn(usize, usize, &mut [f32]) + Sync) -> Raster {
    let mut data = vec![0.0f32; size * size * channels];
    data.par_chunks_mut(size * channels).enumerate().for_each(|(y, row)| {
        for (x, px) in row.chunks_exact_mut(channels).enumerate() {
            pixel(x, y, px);
        }
    });
    Raster::new(size, size, channels, data).expect("consistent size")
}

pub fn raycast_gbuffers(scene: &Scene, camera: &Camera) -> Result<GBuffers> {
    let frame = prepare(scene, camera)?;
    let n = camera.resolution;
    let scale = scene.depth_scale(camera);
    let hits: Vec<Option<Hit>> = (0..n * n)
        .into_par_iter()
        .map(|i| scene.intersect(&frame.ray(i % n, i / n)))
        .collect();
    let mut depth = Raster::zeros(n, n, 1);
    let mut normal = Raster::zeros(n, n, 3);
    let mut diffuse = Raster::zeros(n, n, 3);
    for (i, hit) in hits.iter().enumerate() {
        match hit {
            Some(h) => {
                depth.data_mut()[i] = (h.t / scale).min(1.0) as f32;
                normal.data_mut()[3 * i..3 * i + 3].copy_from_slice(&encode_normal(h.normal));
                let a = h.albedo;
                diffuse.data_mut()[3 * i..3 * i + 3].copy_from_slice(&[a.x as f32, a.y as f32, a.z as f32]);
            }
            // Background: depth 1, normal and albedo zero.
            None => depth.data_mut()[i] = 1.0,
        }
    }
    Ok(GBuffers { depth, normal, diffuse })
}

/// Radiance reflected toward the viewer from the directional light alone,
/// with one shadow ray.
fn direct_light(scene: &Scene, p: Vec3, hit: &Hit) -> Rgb {
    let Some(light) = &scene.light else {
        return Vec3::ZERO;
    };
    let cos = hit.normal.dot(light.direction);
    if cos <= 0.0 {
        return Vec3::ZERO;
    }
    let shadow = Ray {
        origin: p + hit.normal * SURFACE_EPS,
        dir: light.direction,
    };
    if scene.occluded(&shadow) {
        return Vec3::ZERO;
    }
    hit.albedo.mul_elem(light.radiance) * (cos / PI)
}

fn write_rgb(px: &mut [f32], c: Rgb) {
    px[0] = c.x as f32;
    px[1] = c.y as f32;
    px[2] = c.z as f32;
}

/// `albedo/π · L · max(0, n·l) · V` per pixel; background pixels are 0.
pub fn render_direct(scene: &Scene, camera: &Camera) -> Result<Raster> {
    let frame = prepare(scene, camera)?;
    Ok(render_rows(camera.resolution, 3, |x, y, px| {
        let ray = frame.ray(x, y);
        if let Some(hit) = scene.intersect(&ray) {
            write_rgb(px, direct_light(scene, ray.at(hit.t), &hit));
        }
    }))
}

/// Cosine-weighted direction about `n`.
fn sample_cosine(n: Vec3, rng: &mut ChaCha8Rng) -> Vec3 {
    let r1: f64 = rng.random();
    let r2: f64 = rng.random();
    let phi = 2.0 * PI * r1;
    let r = r2.sqrt();
    let (t, b) = orthonormal_basis(n);
    (t * (r * phi.cos()) + b * (r * phi.sin()) + n * (1.0 - r2).max(0.0).sqrt()).normalize()
}

/// Branchless basis (Duff et al.) for a unit normal.
fn orthonormal_basis(n: Vec3) -> (Vec3, Vec3) {
    let sign = 1f64.copysign(n.z);
    let a = -1.0 / (sign + n.z);
    let b = n.x * n.y * a;
    (
        Vec3::new(1.0 + sign * n.x * n.x * a, sign * b, -sign * n.x),
        Vec3::new(b, sign + n.y * n.y * a, -n.y),
    )
}

/// One path sample. `max_bounces` bounds the number of surface vertices;
/// the directional light is sampled explicitly at every vertex, and a
/// scattered ray that leaves the scene picks up the environment.
fn trace_path(scene: &Scene, ray: Ray, max_bounces: u32, rng: &mut ChaCha8Rng) -> Rgb {
    let Some(mut hit) = scene.intersect(&ray) else {
        return scene.environment;
    };
    let mut ray = ray;
    let mut radiance = Vec3::ZERO;
    let mut throughput = Vec3::ONE;
    for vertex in 0..max_bounces {
        let p = ray.at(hit.t);
        radiance += throughput.mul_elem(direct_light(scene, p, &hit));
        if vertex >= ROULETTE_START {
            let survive = hit.albedo.max_component();
            if rng.random::<f64>() >= survive {
                break;
            }
            throughput = throughput / survive;
        }
        // Lambertian BRDF × cosine / cosine pdf = albedo.
        throughput = throughput.mul_elem(hit.albedo);
        ray = Ray {
            origin: p + hit.normal * SURFACE_EPS,
            dir: sample_cosine(hit.normal, rng),
        };
        match scene.intersect(&ray) {
            None => {
                radiance += throughput.mul_elem(scene.environment);
                break;
            }
            Some(next) => hit = next,
        }
    }
    radiance
}

/// Monte-Carlo estimate of full diffuse transport. Each sample draws from
/// its own generator seeded by `(seed, pixel, sample)`.
pub fn path_trace(scene: &Scene, camera: &Camera, spp: u32, max_bounces: u32, seed: u64) -> Result<Raster> {
    if spp == 0 {
        return Err(Error::invalid("samples per pixel must be ≥ 1"));
    }
    if max_bounces == 0 {
        return Err(Error::invalid("max bounces must be ≥ 1"));
    }
    let frame = prepare(scene, camera)?;
    let n = camera.resolution;
    Ok(render_rows(n, 3, |x, y, px| {
        let ray = frame.ray(x, y);
        let pixel = (y * n + x) as u64;
        let mut sum = Vec3::ZERO;
        for s in 0..spp {
            let mut rng = rng::stream(seed, &[pixel, s as u64]);
            sum += trace_path(scene, ray, max_bounces, &mut rng);
        }
        write_rgb(px, sum / spp as f64);
    }))
}

#[cfg(test)]
mod tests {
    use super::super::geometry::Quad;
    use super::super::{DirectionalLight, SceneObject, Shape, Wall, WHITE};
    use super::*;
    use proptest::prelude::*;

    fn empty_box(light: Option<DirectionalLight>) -> Scene {
        Scene::cornell_box(light, None)
    }

    #[test]
    fn back_wall_normal_faces_camera() {
        let cam = Camera::cornell(16);
        let g = raycast_gbuffers(&empty_box(None), &cam).unwrap();
        let e = g.normal.pixel(8, 8);
        let n = decode_normal([e[0], e[1], e[2]]);
        assert!((n - Vec3::new(0.0, 0.0, 1.0)).length() < 1e-4, "{n:?}");
    }

    #[test]
    fn floor_depth_monotone_toward_horizon() {
        // Camera above a long floor looking toward the horizon.
        let floor = Wall {
            quad: Quad {
                origin: Vec3::new(-100.0, 0.0, -100.0),
                u: Vec3::new(200.0, 0.0, 0.0),
                v: Vec3::new(0.0, 0.0, 200.0),
            },
            albedo: WHITE,
        };
        let scene = Scene {
            walls: vec![floor],
            object: None,
            light: None,
            environment: Vec3::ZERO,
        };
        let cam = Camera::new(Vec3::new(0.0, 1.0, 10.0), Vec3::new(0.0, 0.5, 0.0), 40.0, 32);
        let g = raycast_gbuffers(&scene, &cam).unwrap();
        let column: Vec<f32> = (0..32).map(|y| g.depth.pixel(16, y)[0]).collect();
        let floor_rows: Vec<f32> = column.iter().rev().take_while(|&&d| d < 1.0).copied().collect();
        assert!(floor_rows.len() > 8);
        for w in floor_rows.windows(2) {
            assert!(w[1] > w[0], "{column:?}");
        }
    }

    #[test]
    fn unit_sphere_hit_distance_matches_closed_form() {
        let sphere = SceneObject::new(Shape::Sphere { radius: 1.0 }, Vec3::ZERO, Vec3::ZERO, WHITE);
        let scene = Scene {
            walls: vec![],
            object: Some(sphere),
            light: None,
            environment: Vec3::ZERO,
        };
        let cam = Camera::cornell(64);
        let g = raycast_gbuffers(&scene, &cam).unwrap();
        // Pixel (32, 32) centre: offset half a pixel right and down.
        let tan_half = (15f64).to_radians().tan();
        let off = (0.5 / 64.0 * 2.0) * tan_half;
        let d = Vec3::new(off, -off, -1.0).normalize();
        let o = cam.position;
        let b = o.dot(d);
        let t = -b - (b * b - (o.dot(o) - 1.0)).sqrt();
        let got = g.depth.pixel(32, 32)[0] as f64 * scene.depth_scale(&cam);
        assert!((got - t).abs() < 1e-5 * t.max(1.0), "{got} vs {t}");
    }

    #[test]
    fn background_convention() {
        let scene = Scene {
            walls: vec![],
            object: None,
            light: None,
            environment: Vec3::ZERO,
        };
        let g = raycast_gbuffers(&scene, &Camera::cornell(4)).unwrap();
        assert!(g.depth.data().iter().all(|&d| d == 1.0));
        assert!(g.normal.data().iter().all(|&v| v == 0.0));
        assert!(g.diffuse.data().iter().all(|&v| v == 0.0));
    }

    fn facing_wall(albedo: f64) -> Scene {
        Scene {
            walls: vec![Wall {
                quad: Quad {
                    origin: Vec3::new(-5.0, -5.0, 0.0),
                    u: Vec3::new(10.0, 0.0, 0.0),
                    v: Vec3::new(0.0, 10.0, 0.0),
                },
                albedo: Vec3::splat(albedo),
            }],
            object: None,
            light: Some(DirectionalLight::new(Vec3::new(0.0, 0.0, 1.0), Vec3::ONE).unwrap()),
            environment: Vec3::ZERO,
        }
    }

    #[test]
    fn lambert_head_on_is_one_over_pi() {
        let cam = Camera::new(Vec3::new(0.0, 0.0, 3.0), Vec3::ZERO, 30.0, 8);
        let img = render_direct(&facing_wall(1.0), &cam).unwrap();
        for &v in img.data() {
            assert!((v as f64 - 1.0 / PI).abs() < 1e-6, "{v}");
        }
    }

    #[test]
    fn occluded_pixel_is_exactly_zero() {
        let mut scene = facing_wall(1.0);
        // A blocker between the wall and the light, outside the view.
        scene.object = Some(SceneObject::new(
            Shape::Cube { half_extent: 0.5 },
            Vec3::ZERO,
            Vec3::new(0.0, 0.0, 2.0),
            WHITE,
        ));
        let cam = Camera::new(Vec3::new(0.0, -3.0, 1.0), Vec3::ZERO, 10.0, 8);
        let img = render_direct(&scene, &cam).unwrap();
        let center = img.pixel(4, 4);
        assert_eq!(center, &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn light_rotation_changes_direct_buffer() {
        let cam = Camera::cornell(16);
        let a = render_direct(&empty_box(Some(DirectionalLight::swept(0.0))), &cam).unwrap();
        let b = render_direct(&empty_box(Some(DirectionalLight::swept(10.0))), &cam).unwrap();
        assert!(a.mean_abs_diff(&b).unwrap() > 0.0);
    }

    #[test]
    fn single_bounce_equals_direct() {
        let obj = SceneObject::new(Shape::Sphere { radius: 0.45 }, Vec3::ZERO, Vec3::new(0.0, -0.35, 0.0), WHITE);
        let scene = Scene::cornell_box(Some(DirectionalLight::swept(30.0)), Some(obj));
        let cam = Camera::cornell(16);
        let direct = render_direct(&scene, &cam).unwrap();
        let pt = path_trace(&scene, &cam, 4, 1, 9).unwrap();
        assert!(direct.mean_abs_diff(&pt).unwrap() < 1e-7);
    }

    #[test]
    fn invalid_sampling_arguments() {
        let cam = Camera::cornell(4);
        let scene = empty_box(None);
        assert!(path_trace(&scene, &cam, 0, 4, 1).is_err());
        assert!(path_trace(&scene, &cam, 4, 0, 1).is_err());
    }

    #[test]
    fn path_trace_deterministic_across_thread_counts() {
        let scene = empty_box(Some(DirectionalLight::swept(45.0)));
        let cam = Camera::cornell(16);
        let a = path_trace(&scene, &cam, 8, 8, 3).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| path_trace(&scene, &cam, 8, 8, 3)).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
    }

    #[test]
    fn plane_under_uniform_sky_reflects_albedo() {
        let scene = Scene {
            walls: vec![Wall {
                quad: Quad {
                    origin: Vec3::new(-1e4, 0.0, -1e4),
                    u: Vec3::new(0.0, 0.0, 2e4),
                    v: Vec3::new(2e4, 0.0, 0.0),
                },
                albedo: Vec3::splat(0.5),
            }],
            object: None,
            light: None,
            environment: Vec3::ONE,
        };
        let cam = Camera::new(Vec3::new(0.0, 1.0, 2.0), Vec3::ZERO, 30.0, 4);
        let img = path_trace(&scene, &cam, 1024, DEFAULT_MAX_BOUNCES, 11).unwrap();
        for &v in img.data() {
            assert!((v as f64 - 0.5).abs() <= 0.02 * 0.5, "{v}");
        }
    }

    fn pixel_variance(spp: u32, renders: u64) -> f64 {
        let scene = empty_box(Some(DirectionalLight::swept(60.0)));
        let cam = Camera::cornell(8);
        let imgs: Vec<Raster> = (0..renders)
            .map(|seed| path_trace(&scene, &cam, spp, DEFAULT_MAX_BOUNCES, 1000 + seed).unwrap())
            .collect();
        let n = imgs[0].data().len();
        let mut total = 0.0;
        for i in 0..n {
            let vals: Vec<f64> = imgs.iter().map(|r| r.data()[i] as f64).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            total += vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
        }
        total / n as f64
    }

    #[test]
    fn doubling_spp_halves_variance() {
        let ratio = pixel_variance(4, 32) / pixel_variance(8, 32);
        assert!((1.6..2.5).contains(&ratio), "variance ratio {ratio}");
    }

    #[test]
    fn indirect_light_only_adds_energy() {
        let obj = SceneObject::new(
            Shape::Cube { half_extent: 0.35 },
            Vec3::new(15.0, 30.0, 0.0),
            Vec3::new(0.0, -0.35, 0.0),
            WHITE,
        );
        let scene = Scene::cornell_box(Some(DirectionalLight::swept(100.0)), Some(obj));
        let cam = Camera::cornell(16);
        let direct = render_direct(&scene, &cam).unwrap();
        let gt = path_trace(&scene, &cam, 16, DEFAULT_MAX_BOUNCES, 4).unwrap();
        let n = gt.data().len() as f64;
        let diff: f64 = gt.data().iter().zip(direct.data()).map(|(g, d)| (g - d) as f64).sum::<f64>() / n;
        assert!(diff >= -0.01, "mean(gt - direct) = {diff}");
    }

    proptest! {
        #[test]
        fn normal_encoding_round_trip(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
            prop_assume!(Vec3::new(x, y, z).length() > 1e-3);
            let n = Vec3::new(x, y, z).normalize();
            let back = decode_normal(encode_normal(n));
            prop_assert!((back - n).length() < 1e-3);
        }

        #[test]
        fn cosine_samples_in_hemisphere(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0, seed in any::<u64>()) {
            prop_assume!(Vec3::new(x, y, z).length() > 1e-3);
            let n = Vec3::new(x, y, z).normalize();
            let mut rng = rng::stream(seed, &[]);
            for _ in 0..16 {
                let d = sample_cosine(n, &mut rng);
                prop_assert!((d.length() - 1.0).abs() < 1e-9);
                prop_assert!(d.dot(n) >= -1e-12);
            }
        }
    }
}
