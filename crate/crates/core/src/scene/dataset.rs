//! Sweeps over light and object configurations, per-frame buffer files and
//! the dataset manifest.
//!
//! Stored buffers are linear. At load time G-buffers in `[0, 1]` map to the
//! network range by `2x − 1`; radiance is clamped to `[0, 4]` and mapped by
//! `x/2 − 1`. Network outputs return to a `[0, 1]` display space by
//! `clamp((y + 1)·2, 0, 1)`.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use sha2::{Digest, Sha256};

use super::render::{path_trace, raycast_gbuffers, render_direct};
use super::{Camera, DirectionalLight, ObjectKind, Raster, Scene, SceneObject, Vec3, OBJECT_HEIGHT, WHITE};
use crate::error::{Error, Result};
use crate::{io, rng};

pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const DATASET_VERSION: u32 = 1;
/// Buffer file suffixes, in manifest column order.
pub const BUFFER_NAMES: [&str; 5] = ["depth", "normal", "diffuse", "direct", "gt"];
/// Upper clamp for radiance before mapping to the network range.
pub const RADIANCE_MAX: f32 = 4.0;

/// Network input channels: depth (expanded to 3), normal, diffuse, direct.
pub const INPUT_CHANNELS: usize = 12;

pub fn gbuffer_to_network(x: f32) -> f32 {
    2.0 * x - 1.0
}

pub fn radiance_to_network(x: f32) -> f32 {
    x.clamp(0.0, RADIANCE_MAX) / 2.0 - 1.0
}

pub fn network_to_radiance(y: f32) -> f32 {
    (y + 1.0) * 2.0
}

/// Network-range value to `[0, 1]` display space.
pub fn to_display(y: f32) -> f32 {
    network_to_radiance(y).clamp(0.0, 1.0)
}

/// Planar `12×S×S` network input from the four input buffers: depth
/// repeated three times, then normal, diffuse and direct.
pub fn assemble_input(depth: &Raster, normal: &Raster, diffuse: &Raster, direct: &Raster) -> Vec<f32> {
    let depth = depth.to_planar();
    let mut out = Vec::with_capacity(INPUT_CHANNELS * depth.len());
    for _ in 0..3 {
        out.extend(depth.iter().map(|&v| gbuffer_to_network(v)));
    }
    out.extend(normal.to_planar().into_iter().map(gbuffer_to_network));
    out.extend(diffuse.to_planar().into_iter().map(gbuffer_to_network));
    out.extend(direct.to_planar().into_iter().map(radiance_to_network));
    out
}

/// Light and object sweep. Both ranges include their end points.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub light_start_deg: f64,
    pub light_end_deg: f64,
    pub light_steps: usize,
    pub object_start_deg: f64,
    pub object_end_deg: f64,
    pub object_steps: usize,
    pub objects: Vec<ObjectKind>,
    pub resolution: usize,
    pub spp: u32,
    pub max_bounces: u32,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            light_start_deg: 0.0,
            light_end_deg: 180.0,
            light_steps: 10,
            object_start_deg: 0.0,
            object_end_deg: 330.0,
            object_steps: 12,
            objects: vec![ObjectKind::Sphere],
            resolution: 64,
            spp: 64,
            max_bounces: super::DEFAULT_MAX_BOUNCES,
            seed: 0,
        }
    }
}

fn linspace(start: f64, end: f64, steps: usize) -> Vec<f64> {
    if steps == 1 {
        return vec![start];
    }
    (0..steps)
        .map(|i| start + (end - start) * i as f64 / (steps - 1) as f64)
        .collect()
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.light_steps == 0 || self.object_steps == 0 {
            return Err(Error::invalid("sweep steps must be ≥ 1"));
        }
        if self.objects.is_empty() {
            return Err(Error::invalid("sweep has no objects: frame count would be 0"));
        }
        if self.spp == 0 {
            return Err(Error::invalid("samples per pixel must be ≥ 1"));
        }
        if self.max_bounces == 0 {
            return Err(Error::invalid("max bounces must be ≥ 1"));
        }
        for v in [self.light_start_deg, self.light_end_deg, self.object_start_deg, self.object_end_deg] {
            if !v.is_finite() {
                return Err(Error::invalid("sweep angles must be finite"));
            }
        }
        Camera::cornell(self.resolution).validate()
    }

    pub fn light_angles(&self) -> Vec<f64> {
        linspace(self.light_start_deg, self.light_end_deg, self.light_steps)
    }

    pub fn object_angles(&self) -> Vec<f64> {
        linspace(self.object_start_deg, self.object_end_deg, self.object_steps)
    }

    pub fn frame_count(&self) -> usize {
        self.light_steps * self.object_steps * self.objects.len()
    }

    /// Frames in sweep order: object kind, then light angle, then object
    /// angle.
    pub fn frames(&self) -> Vec<FrameCoords> {
        let mut out = Vec::with_capacity(self.frame_count());
        for object in &self.objects {
            for &light_deg in &self.light_angles() {
                for &object_deg in &self.object_angles() {
                    out.push(FrameCoords {
                        frame: out.len(),
                        object: object.clone(),
                        light_deg,
                        object_deg,
                    });
                }
            }
        }
        out
    }

    fn description(&self) -> Result<String> {
        let mut s = format!(
            "deepgi-dataset v{DATASET_VERSION}\n{:?}\n{:?}\n{:?}\n",
            Scene::cornell_box(None, None),
            Camera::cornell(self.resolution),
            DirectionalLight::swept(0.0)
        );
        s += &format!(
            "object_height {OBJECT_HEIGHT} light {} {} {} object {} {} {} spp {} bounces {} seed {}\n",
            self.light_start_deg,
            self.light_end_deg,
            self.light_steps,
            self.object_start_deg,
            self.object_end_deg,
            self.object_steps,
            self.spp,
            self.max_bounces,
            self.seed
        );
        for obj in &self.objects {
            s += &format!("{obj}\n");
            if let ObjectKind::Mesh(p) = obj {
                s += &fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            }
        }
        Ok(s)
    }
}

fn hex_digest(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Where a frame sits in the sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameCoords {
    pub frame: usize,
    pub object: ObjectKind,
    pub light_deg: f64,
    /// Sweep angle; the object turns by this about y and half of it about x.
    pub object_deg: f64,
}

impl FrameCoords {
    pub fn object_rotation(&self) -> Vec3 {
        Vec3::new(self.object_deg / 2.0, self.object_deg, 0.0)
    }

    pub fn scene(&self) -> Result<Scene> {
        let object = SceneObject::new(
            self.object.shape()?,
            self.object_rotation(),
            Vec3::new(0.0, OBJECT_HEIGHT, 0.0),
            WHITE,
        );
        let scene = Scene::cornell_box(Some(DirectionalLight::swept(self.light_deg)), Some(object));
        scene.validate()?;
        Ok(scene)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::invalid(format!("unknown split '{s}' (expected train, val or test)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameRecord {
    pub coords: FrameCoords,
    pub split: Split,
    /// Buffer files relative to the dataset directory, in [`BUFFER_NAMES`]
    /// order.
    pub paths: [String; 5],
}

impl FrameRecord {
    fn new(coords: FrameCoords) -> Self {
        let paths = BUFFER_NAMES.map(|b| format!("{:06}_{b}.dib", coords.frame));
        FrameRecord {
            coords,
            split: Split::Train,
            paths,
        }
    }
}

/// Index of a generated dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub version: u32,
    pub scene_hash: String,
    pub seed: u64,
    pub spp: u32,
    pub max_bounces: u32,
    pub resolution: usize,
    pub frames: Vec<FrameRecord>,
}

const COLUMNS: &str = "frame\tobject\tlight_deg\tobject_deg\tsplit\tdepth\tnormal\tdiffuse\tdirect\tgt";

impl DatasetManifest {
    pub fn frames_in(&self, split: Split) -> Vec<&FrameRecord> {
        self.frames.iter().filter(|f| f.split == split).collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.frames.iter().filter(|f| f.split == split).count()
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "# deepgi-dataset {}\n# scene_hash {}\n# seed {}\n# spp {}\n# max_bounces {}\n# resolution {}\n# {COLUMNS}\n",
            self.version, self.scene_hash, self.seed, self.spp, self.max_bounces, self.resolution
        );
        for f in &self.frames {
            let c = &f.coords;
            s += &format!(
                "{:06}\t{}\t{}\t{}\t{}\t{}\n",
                c.frame,
                c.object,
                c.light_deg,
                c.object_deg,
                f.split,
                f.paths.join("\t")
            );
        }
        s
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let bad = |line: usize, why: &str| Error::corrupt(path, format!("line {line}: {why}"));
        let mut header = std::collections::HashMap::new();
        let mut frames = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            if let Some(rest) = line.strip_prefix("# ") {
                if rest == COLUMNS {
                    continue;
                }
                let (k, v) = rest.split_once(' ').ok_or_else(|| bad(lineno, "malformed header"))?;
                header.insert(k.to_string(), v.to_string());
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 10 {
                return Err(bad(lineno, &format!("expected 10 columns, found {}", cols.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(lineno, &format!("bad number '{s}'")));
            let coords = FrameCoords {
                frame: cols[0].parse().map_err(|_| bad(lineno, "bad frame index"))?,
                object: cols[1].parse().map_err(|e: Error| bad(lineno, &e.to_string()))?,
                light_deg: num(cols[2])?,
                object_deg: num(cols[3])?,
            };
            frames.push(FrameRecord {
                coords,
                split: cols[4].parse().map_err(|e: Error| bad(lineno, &e.to_string()))?,
                paths: std::array::from_fn(|k| cols[5 + k].to_string()),
            });
        }
        let get = |k: &str| header.get(k).ok_or_else(|| Error::corrupt(path, format!("missing header '{k}'")));
        let int = |k: &str| -> Result<u64> {
            get(k)?
                .parse()
                .map_err(|_| Error::corrupt(path, format!("bad header '{k}'")))
        };
        let version = int("deepgi-dataset")? as u32;
        if version != DATASET_VERSION {
            return Err(Error::Version {
                found: version,
                expected: DATASET_VERSION,
            });
        }
        let mut seen = HashSet::new();
        for f in &frames {
            if !seen.insert(f.coords.frame) {
                return Err(Error::corrupt(path, format!("duplicate frame {}", f.coords.frame)));
            }
        }
        Ok(DatasetManifest {
            version,
            scene_hash: get("scene_hash")?.clone(),
            seed: int("seed")?,
            spp: int("spp")? as u32,
            max_bounces: int("max_bounces")? as u32,
            resolution: int("resolution")? as usize,
            frames,
        })
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        DatasetManifest::parse(&text, &path)
    }

    /// Write `manifest.tsv` in `dir` atomically.
    pub fn save(&self, dir: &Path) -> Result<()> {
        io::write_atomic(&dir.join(MANIFEST_FILE), self.to_text().as_bytes())
    }
}

/// One training pair plus its configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct GBufferFrame {
    pub depth: Raster,
    pub normal: Raster,
    pub diffuse: Raster,
    pub direct: Raster,
    pub ground_truth: Raster,
    pub coords: FrameCoords,
}

impl GBufferFrame {
    pub fn render(coords: FrameCoords, resolution: usize, spp: u32, max_bounces: u32, seed: u64) -> Result<Self> {
        let scene = coords.scene()?;
        let camera = Camera::cornell(resolution);
        let g = raycast_gbuffers(&scene, &camera)?;
        let direct = render_direct(&scene, &camera)?;
        let ground_truth = path_trace(&scene, &camera, spp, max_bounces, seed)?;
        Ok(GBufferFrame {
            depth: g.depth,
            normal: g.normal,
            diffuse: g.diffuse,
            direct,
            ground_truth,
            coords,
        })
    }

    fn buffers(&self) -> [&Raster; 5] {
        [&self.depth, &self.normal, &self.diffuse, &self.direct, &self.ground_truth]
    }

    pub fn resolution(&self) -> usize {
        self.depth.width()
    }

    /// Planar `12×S×S` network input.
    pub fn network_input(&self) -> Vec<f32> {
        assemble_input(&self.depth, &self.normal, &self.diffuse, &self.direct)
    }

    /// Planar `3×S×S` network target.
    pub fn network_target(&self) -> Vec<f32> {
        self.ground_truth.to_planar().into_iter().map(radiance_to_network).collect()
    }

    /// Load a frame's buffers and check their shapes.
    pub fn load(dir: &Path, record: &FrameRecord) -> Result<Self> {
        let read = |k: usize| Raster::read(&dir.join(&record.paths[k]));
        let frame = GBufferFrame {
            depth: read(0)?,
            normal: read(1)?,
            diffuse: read(2)?,
            direct: read(3)?,
            ground_truth: read(4)?,
            coords: record.coords.clone(),
        };
        let s = frame.depth.width();
        for (k, b) in frame.buffers().iter().enumerate() {
            let want = if k == 0 { 1 } else { 3 };
            if b.width() != s || b.height() != s || b.channels() != want {
                return Err(Error::corrupt(
                    dir.join(&record.paths[k]),
                    format!(
                        "expected {s}×{s}×{want}, found {}×{}×{}",
                        b.width(),
                        b.height(),
                        b.channels()
                    ),
                ));
            }
        }
        Ok(frame)
    }

    fn save(&self, dir: &Path, record: &FrameRecord) -> Result<()> {
        for (b, p) in self.buffers().iter().zip(&record.paths) {
            b.write(&dir.join(p))?;
        }
        Ok(())
    }
}

pub fn load_frame(dir: &Path, record: &FrameRecord) -> Result<GBufferFrame> {
    GBufferFrame::load(dir, record)
}

/// Render every frame of the sweep into `out_dir` and write the manifest
/// last. All frames are labelled train until [`split_dataset`] runs. A
/// manifest left by an earlier run is removed first, so a failure part way
/// through leaves no manifest.
pub fn generate_dataset(config: &SweepConfig, out_dir: &Path) -> Result<DatasetManifest> {
    config.validate()?;
    if config.frame_count() == 0 {
        return Err(Error::invalid("sweep produces 0 frames"));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let manifest_path = out_dir.join(MANIFEST_FILE);
    match fs::remove_file(&manifest_path) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
        Err(e) => return Err(Error::io(&manifest_path, e)),
    }
    let scene_hash = hex_digest(&config.description()?);
    let coords = config.frames();
    let total = coords.len();
    let mut records = Vec::with_capacity(total);
    for c in coords {
        let seed = rng::derive_seed(config.seed, &[c.frame as u64]);
        let frame = GBufferFrame::render(c.clone(), config.resolution, config.spp, config.max_bounces, seed)?;
        let record = FrameRecord::new(c);
        frame.save(out_dir, &record)?;
        log::info!("frame {}/{total} written", record.coords.frame + 1);
        records.push(record);
    }
    let manifest = DatasetManifest {
        version: DATASET_VERSION,
        scene_hash,
        seed: config.seed,
        spp: config.spp,
        max_bounces: config.max_bounces,
        resolution: config.resolution,
        frames: records,
    };
    manifest.save(out_dir)?;
    Ok(manifest)
}

/// Sweep axis a holdout interval applies to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Light,
    Object,
}

/// Closed interval of sweep angles reserved for the test split.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Holdout {
    pub axis: Axis,
    pub lo_deg: f64,
    pub hi_deg: f64,
}

impl Holdout {
    fn contains(&self, c: &FrameCoords) -> bool {
        let v = match self.axis {
            Axis::Light => c.light_deg,
            Axis::Object => c.object_deg,
        };
        const EPS: f64 = 1e-9;
        v >= self.lo_deg - EPS && v <= self.hi_deg + EPS
    }
}

impl fmt::Display for Holdout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let axis = match self.axis {
            Axis::Light => "light",
            Axis::Object => "object",
        };
        write!(f, "{axis}:{}:{}", self.lo_deg, self.hi_deg)
    }
}

impl FromStr for Holdout {
    type Err = Error;

    /// `light:40:60` or `object:90:120`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("bad holdout '{s}' (expected light:<lo>:<hi> or object:<lo>:<hi>)"));
        let parts: Vec<&str> = s.split(':').collect();
        let [axis, lo, hi] = parts[..] else {
            return Err(bad());
        };
        let axis = match axis {
            "light" => Axis::Light,
            "object" => Axis::Object,
            _ => return Err(bad()),
        };
        let lo_deg: f64 = lo.parse().map_err(|_| bad())?;
        let hi_deg: f64 = hi.parse().map_err(|_| bad())?;
        if !(lo_deg <= hi_deg) {
            return Err(bad());
        }
        Ok(Holdout { axis, lo_deg, hi_deg })
    }
}

/// Label frames: inside any holdout interval → test; then
/// `round(val_fraction · remaining)` of the rest → val (at least one frame
/// always stays in train); the remainder → train. The val draw is seeded by
/// the manifest seed.
pub fn split_dataset(manifest: &DatasetManifest, holdout: &[Holdout], val_fraction: f64) -> Result<DatasetManifest> {
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::invalid(format!("val fraction {val_fraction} outside [0, 1)")));
    }
    if manifest.frames.is_empty() {
        return Err(Error::invalid("manifest has no frames"));
    }
    for h in holdout {
        let values = manifest.frames.iter().map(|f| match h.axis {
            Axis::Light => f.coords.light_deg,
            Axis::Object => f.coords.object_deg,
        });
        let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if h.lo_deg < lo - 1e-9 || h.hi_deg > hi + 1e-9 {
            return Err(Error::invalid(format!(
                "holdout [{}, {}] lies outside the sweep range [{lo}, {hi}]",
                h.lo_deg, h.hi_deg
            )));
        }
    }
    let mut out = manifest.clone();
    let mut rest = Vec::new();
    for (i, f) in out.frames.iter_mut().enumerate() {
        if holdout.iter().any(|h| h.contains(&f.coords)) {
            f.split = Split::Test;
        } else {
            f.split = Split::Train;
            rest.push(i);
        }
    }
    if rest.is_empty() {
        return Err(Error::invalid("holdout covers every frame; nothing left to train on"));
    }
    let n_val = ((val_fraction * rest.len() as f64).round() as usize).min(rest.len() - 1);
    let mut rng = rng::stream(manifest.seed, &[0x5E11]);
    rest.shuffle(&mut rng);
    for &i in &rest[..n_val] {
        out.frames[i].split = Split::Val;
    }
    Ok(out)
}

/// Path of a dataset file, for error messages and tools.
pub fn frame_path(dir: &Path, record: &FrameRecord, buffer: usize) -> PathBuf {
    dir.join(&record.paths[buffer])
}
