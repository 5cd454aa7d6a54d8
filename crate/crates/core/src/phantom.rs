//! Deterministic synthetic thigh slices with exact per-muscle ground truth.
//!
//! Geometry is laid out in a canonical frame centred on the bone: a muscle
//! ellipse (offset from the bone so the farthest hull point is well defined)
//! cut into `K` angular compartments around the bone, thin bright septa on
//! the compartment borders, a subcutaneous fat ring and air outside. Each
//! volume gets its own pose, intensities and compartment angles from its
//! seed; consecutive slices vary by a smooth, bounded jitter.
//!
//! All randomness comes from ChaCha8 streams keyed by (seed, slice, tissue),
//! so output is byte-identical for a given spec.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::atlas::Point;
use crate::error::{Error, Result};
use crate::imgio::{
    save_image, save_mask, BitDepth, DatasetManifest, GrayImage, LabelMask, SliceEntry, VolumeEntry,
};

/// Thigh muscle names used for the palette, in compartment order.
pub const MUSCLE_NAMES: [&str; 12] = [
    "vastus_lateralis",
    "vastus_intermedius",
    "vastus_medialis",
    "rectus_femoris",
    "sartorius",
    "gracilis",
    "adductor_magnus",
    "semimembranosus",
    "semitendinosus",
    "biceps_femoris",
    "adductor_longus",
    "tensor_fasciae_latae",
];

/// Inclusive intensity range from which a tissue mean is drawn.
pub type Band = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntensityBands {
    pub bone: Band,
    pub muscle: Band,
    pub fat: Band,
    pub septa: f64,
    pub air: f64,
}

impl Default for IntensityBands {
    fn default() -> Self {
        IntensityBands {
            bone: [0.05, 0.15],
            muscle: [0.35, 0.55],
            fat: [0.75, 0.95],
            septa: 0.8,
            air: 0.02,
        }
    }
}

/// Standard deviation of the additive Gaussian noise per tissue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseLevels {
    pub muscle: f64,
    pub fat: f64,
    pub bone: f64,
    pub air: f64,
}

impl Default for NoiseLevels {
    fn default() -> Self {
        NoiseLevels {
            muscle: 0.03,
            fat: 0.02,
            bone: 0.015,
            air: 0.01,
        }
    }
}

/// Oriented sinusoidal texture inside the muscles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Striation {
    pub amplitude: f64,
    /// Wavelength in pixels.
    pub period: f64,
    /// Random spread (radians) of the per-muscle fibre direction.
    pub orientation_spread: f64,
}

impl Default for Striation {
    fn default() -> Self {
        Striation {
            amplitude: 0.04,
            period: 5.0,
            orientation_spread: 0.6,
        }
    }
}

/// Per-volume pose variation drawn from the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoseJitter {
    /// Max absolute rotation, radians.
    pub rotation: f64,
    /// Max relative scale change.
    pub scale: f64,
    /// Max translation per axis, pixels.
    pub shift: f64,
    /// Max change of each compartment border angle, radians.
    pub compartment_angle: f64,
}

impl Default for PoseJitter {
    fn default() -> Self {
        PoseJitter {
            rotation: 0.15,
            scale: 0.05,
            shift: 6.0,
            compartment_angle: 0.06,
        }
    }
}

/// Everything that defines a phantom volume. Absent JSON fields take the
/// defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomSpec {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub muscles: usize,
    pub slices: usize,
    /// Bone centre before the per-volume shift.
    pub bone_center: [f64; 2],
    pub bone_radius: f64,
    pub marrow_radius: f64,
    /// Direction (radians, image coordinates) of the muscle ellipse's long axis.
    pub orientation: f64,
    pub muscle_semi_axes: [f64; 2],
    /// Muscle ellipse centre relative to the bone, along/across the long axis.
    pub muscle_offset: [f64; 2],
    pub fat_thickness: f64,
    pub septum_width: f64,
    pub bands: IntensityBands,
    pub noise: NoiseLevels,
    pub striation: Striation,
    pub pose: PoseJitter,
    /// Max boundary displacement between slices, pixels.
    pub slice_jitter: f64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            seed: 0,
            width: 256,
            height: 256,
            muscles: 6,
            slices: 5,
            bone_center: [128.0, 140.0],
            bone_radius: 13.0,
            marrow_radius: 8.0,
            orientation: -0.75 * PI,
            muscle_semi_axes: [84.0, 70.0],
            muscle_offset: [18.0, -4.0],
            fat_thickness: 14.0,
            septum_width: 2.0,
            bands: IntensityBands::default(),
            noise: NoiseLevels::default(),
            striation: Striation::default(),
            pose: PoseJitter::default(),
            slice_jitter: 1.5,
        }
    }
}

/// Tissue class of a phantom pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tissue {
    Air,
    Fat,
    Muscle,
    Septum,
    Cortex,
    Marrow,
}

impl Tissue {
    fn stream(self) -> u64 {
        self as u64
    }
}

/// One generated slice with its ground truth and generating parameters.
#[derive(Debug, Clone)]
pub struct PhantomSlice {
    pub index: u32,
    pub image: GrayImage,
    pub mask: LabelMask,
    pub tissue: Vec<Tissue>,
    pub bone_center: Point,
}

/// Per-volume draws shared by all of its slices.
#[derive(Debug, Clone)]
pub struct VolumeParams {
    pub rotation: f64,
    pub scale: f64,
    pub shift: Point,
    pub muscle_means: Vec<f64>,
    pub fat_mean: f64,
    pub bone_mean: f64,
    pub fibre_angles: Vec<f64>,
    pub borders: Vec<f64>,
    pub first_slice: u32,
    phases: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PhantomVolume {
    pub spec: PhantomSpec,
    pub params: VolumeParams,
    pub slices: Vec<PhantomSlice>,
}

/// Slices a volume is assumed to span when picking the first slice.
const VOLUME_DEPTH: u32 = 40;
/// Slices per cycle of the inter-slice jitter.
const JITTER_PERIOD: f64 = 12.0;
const VOLUME_STREAM: u64 = 0;

fn infeasible(msg: impl Into<String>) -> Error {
    Error::Config(format!("infeasible phantom: {}", msg.into()))
}

fn band_ok(b: &Band) -> bool {
    (0.0..=1.0).contains(&b[0]) && (0.0..=1.0).contains(&b[1]) && b[0] <= b[1]
}

fn mid(b: &Band) -> f64 {
    0.5 * (b[0] + b[1])
}

impl PhantomSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn palette(&self) -> BTreeMap<u8, String> {
        (1..=self.muscles)
            .map(|k| (k as u8, MUSCLE_NAMES[k - 1].to_string()))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.muscles < 2 || self.muscles > MUSCLE_NAMES.len() {
            return Err(infeasible(format!(
                "muscle count must be in 2..={}, got {}",
                MUSCLE_NAMES.len(),
                self.muscles
            )));
        }
        if self.slices == 0 {
            return Err(infeasible("need at least one slice"));
        }
        let b = &self.bands;
        if !(band_ok(&b.bone) && band_ok(&b.muscle) && band_ok(&b.fat))
            || !(0.0..=1.0).contains(&b.septa)
            || !(0.0..=1.0).contains(&b.air)
        {
            return Err(infeasible("intensity bands must lie in [0, 1]"));
        }
        if !(mid(&b.bone) < mid(&b.muscle) && mid(&b.muscle) < mid(&b.fat)) {
            return Err(infeasible("bands must order bone < muscle < fat"));
        }
        let n = &self.noise;
        if [n.muscle, n.fat, n.bone, n.air].iter().any(|&s| !(s >= 0.0)) {
            return Err(infeasible("noise levels must be non-negative"));
        }
        if !(self.striation.period > 0.0) {
            return Err(infeasible("striation period must be positive"));
        }
        if !(self.marrow_radius >= 0.0 && self.marrow_radius < self.bone_radius && self.bone_radius > 0.0) {
            return Err(infeasible("need 0 <= marrow radius < bone radius"));
        }
        let [a, bb] = self.muscle_semi_axes;
        let [ou, ov] = self.muscle_offset;
        if !(a > 0.0 && bb > 0.0 && self.fat_thickness >= 0.0 && self.septum_width >= 0.0) {
            return Err(infeasible("axes, fat thickness and septum width must be positive"));
        }
        // bone (plus jitter) must sit inside the muscle ellipse
        let margin = self.bone_radius + 2.0 * self.slice_jitter + 2.0;
        for i in 0..72 {
            let t = i as f64 * PI / 36.0;
            let (u, v) = (margin * t.cos() - ou, margin * t.sin() - ov);
            if (u / a).powi(2) + (v / bb).powi(2) >= 1.0 {
                return Err(infeasible("bone does not fit inside the muscle region"));
            }
        }
        // every compartment must be wider than the septa around the bone
        let arc = 2.0 * PI / self.muscles as f64 - 2.0 * self.pose.compartment_angle;
        if arc * self.bone_radius <= 2.0 * self.septum_width {
            return Err(infeasible("compartments too narrow for the septa"));
        }
        // the whole thigh must stay inside the image under any pose draw
        let grow = 1.0 + self.pose.scale;
        let (fa, fb) = (a + self.fat_thickness + self.slice_jitter, bb + self.fat_thickness + self.slice_jitter);
        let reach = self.pose.shift + self.slice_jitter;
        for i in 0..360 {
            let t = i as f64 * PI / 180.0;
            let local = Point::new(ou + fa * t.cos(), ov + fb * t.sin()) * grow;
            for rot in [-self.pose.rotation, 0.0, self.pose.rotation] {
                let p = local.rotate(self.orientation + rot);
                let x = self.bone_center[0] + p.x;
                let y = self.bone_center[1] + p.y;
                if x - reach < 0.0
                    || y - reach < 0.0
                    || x + reach > self.width as f64 - 1.0
                    || y + reach > self.height as f64 - 1.0
                {
                    return Err(infeasible("thigh does not fit inside the image"));
                }
            }
        }
        Ok(())
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    fn volume_params(&self) -> VolumeParams {
        let mut rng = self.rng(VOLUME_STREAM);
        let sym = |r: &mut ChaCha8Rng, m: f64| if m > 0.0 { r.random_range(-m..=m) } else { 0.0 };
        let rotation = sym(&mut rng, self.pose.rotation);
        let scale = 1.0 + sym(&mut rng, self.pose.scale);
        let shift = Point::new(sym(&mut rng, self.pose.shift), sym(&mut rng, self.pose.shift));
        let draw = |r: &mut ChaCha8Rng, b: &Band| if b[1] > b[0] { r.random_range(b[0]..=b[1]) } else { b[0] };
        let muscle_means = (0..self.muscles).map(|_| draw(&mut rng, &self.bands.muscle)).collect();
        let fat_mean = draw(&mut rng, &self.bands.fat);
        let bone_mean = draw(&mut rng, &self.bands.bone);
        let k = self.muscles;
        let step = 2.0 * PI / k as f64;
        // first border sits across from the distal end
        let borders: Vec<f64> = (0..k)
            .map(|i| PI - step / 2.0 + i as f64 * step + sym(&mut rng, self.pose.compartment_angle))
            .collect();
        let fibre_angles = (0..k)
            .map(|i| borders[i] + step / 2.0 + sym(&mut rng, self.striation.orientation_spread))
            .collect();
        let phases = (0..16).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        let first_slice = rng.random_range(0..=VOLUME_DEPTH.saturating_sub(self.slices as u32));
        VolumeParams {
            rotation,
            scale,
            shift,
            muscle_means,
            fat_mean,
            bone_mean,
            fibre_angles,
            borders,
            first_slice,
            phases,
        }
    }
}

/// Smooth periodic jitter in `[-1, 1]` for slice `t` and phase slot `k`.
fn wave(params: &VolumeParams, k: usize, t: f64) -> f64 {
    (2.0 * PI * t / JITTER_PERIOD + params.phases[k]).sin()
}

/// Angular distance from `a` to `b` going counterclockwise, in `[0, 2π)`.
fn ccw_gap(a: f64, b: f64) -> f64 {
    (b - a).rem_euclid(2.0 * PI)
}

struct SliceGeometry<'a> {
    spec: &'a PhantomSpec,
    params: &'a VolumeParams,
    bone_center: Point,
    frame_rotation: f64,
    scale: f64,
    borders: Vec<f64>,
    wobble: [f64; 3],
    wobble_phase: [f64; 3],
}

impl<'a> SliceGeometry<'a> {
    fn new(spec: &'a PhantomSpec, params: &'a VolumeParams, index: u32) -> Self {
        let t = index as f64;
        let j = spec.slice_jitter;
        let bone_center = Point::new(
            spec.bone_center[0] + params.shift.x + 0.5 * j * wave(params, 0, t),
            spec.bone_center[1] + params.shift.y + 0.5 * j * wave(params, 1, t),
        );
        let reach = spec.muscle_semi_axes[0] + spec.muscle_offset[0].abs();
        let borders = params
            .borders
            .iter()
            .enumerate()
            .map(|(i, &b)| b + 0.5 * j / reach * wave(params, 2 + (i % 6), t))
            .collect();
        SliceGeometry {
            spec,
            params,
            bone_center,
            frame_rotation: spec.orientation + params.rotation,
            scale: params.scale,
            borders,
            wobble: [j / 3.0; 3],
            wobble_phase: [
                params.phases[8] + 2.0 * PI * t / JITTER_PERIOD,
                params.phases[9] - 2.0 * PI * t / JITTER_PERIOD,
                params.phases[10] + 2.0 * PI * t / JITTER_PERIOD,
            ],
        }
    }

    /// Image point → canonical (bone-centred, long axis along +u) coordinates.
    fn canonical(&self, x: f64, y: f64) -> Point {
        (Point::new(x, y) - self.bone_center).rotate(-self.frame_rotation) * (1.0 / self.scale)
    }

    /// Boundary displacement (canonical pixels) at angle `phi` about the
    /// ellipse centre.
    fn boundary_shift(&self, phi: f64) -> f64 {
        let orders = [2.0, 3.0, 5.0];
        (0..3)
            .map(|i| self.wobble[i] * (orders[i] * phi + self.wobble_phase[i]).sin())
            .sum::<f64>()
            / self.scale
    }

    /// Signed "radial" distance outside an ellipse grown by `grow` pixels.
    fn ellipse_excess(&self, p: Point, grow: f64) -> f64 {
        let [a, b] = self.spec.muscle_semi_axes;
        let [ou, ov] = self.spec.muscle_offset;
        let (u, v) = (p.x - ou, p.y - ov);
        let phi = v.atan2(u);
        let d = self.boundary_shift(phi) + grow;
        let (ga, gb) = (a + d, b + d);
        let r = ((u / ga).powi(2) + (v / gb).powi(2)).sqrt();
        (r - 1.0) * 0.5 * (ga + gb)
    }

    fn classify(&self, x: f64, y: f64) -> (Tissue, u8) {
        let p = self.canonical(x, y);
        let r = p.norm();
        if r <= self.spec.marrow_radius {
            return (Tissue::Marrow, 0);
        }
        if r <= self.spec.bone_radius {
            return (Tissue::Cortex, 0);
        }
        if self.ellipse_excess(p, 0.0) <= 0.0 {
            let phi = p.angle();
            let k = self.borders.len();
            let mut label = 0;
            let mut min_dist = f64::INFINITY;
            for i in 0..k {
                let start = self.borders[i];
                let end = self.borders[(i + 1) % k];
                if ccw_gap(start, phi) < ccw_gap(start, end) {
                    label = i + 1;
                }
                // perpendicular distance to the border ray
                let rel = ccw_gap(start, phi);
                let ang = rel.min(2.0 * PI - rel);
                let dist = if ang < PI / 2.0 { r * ang.sin() } else { r };
                min_dist = min_dist.min(dist);
            }
            if min_dist * self.scale < 0.5 * self.spec.septum_width {
                return (Tissue::Septum, 0);
            }
            return (Tissue::Muscle, label as u8);
        }
        if self.ellipse_excess(p, self.spec.fat_thickness) <= 0.0 {
            return (Tissue::Fat, 0);
        }
        (Tissue::Air, 0)
    }

    fn striation(&self, label: u8, x: f64, y: f64) -> f64 {
        let s = &self.spec.striation;
        if s.amplitude == 0.0 {
            return 0.0;
        }
        let p = self.canonical(x, y) * self.scale;
        let dir = self.params.fibre_angles[label as usize - 1];
        // waves run across the fibres
        let phase = 2.0 * PI * (p.y * dir.cos() - p.x * dir.sin()) / s.period;
        s.amplitude * phase.sin()
    }
}

fn generate_slice(spec: &PhantomSpec, params: &VolumeParams, index: u32) -> PhantomSlice {
    let geo = SliceGeometry::new(spec, params, index);
    let (w, h) = (spec.width, spec.height);
    let mut tissue = Vec::with_capacity(w * h);
    let mut labels = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (t, l) = geo.classify(x as f64, y as f64);
            tissue.push(t);
            labels.push(l);
        }
    }
    // one noise stream per (slice, tissue); every stream covers the full raster
    let stream_base = 1 + u64::from(index) * 8;
    let noise_for = |t: Tissue| -> Vec<f64> {
        let mut rng = spec.rng(stream_base + t.stream());
        (0..w * h).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
    };
    let noise: BTreeMap<Tissue, Vec<f64>> = [
        Tissue::Air,
        Tissue::Fat,
        Tissue::Muscle,
        Tissue::Septum,
        Tissue::Cortex,
        Tissue::Marrow,
    ]
    .into_iter()
    .map(|t| (t, noise_for(t)))
    .collect();
    let n = &spec.noise;
    let b = &spec.bands;
    let data: Vec<f64> = (0..w * h)
        .map(|i| {
            let t = tissue[i];
            let z = noise[&t][i];
            let (x, y) = ((i % w) as f64, (i / w) as f64);
            let v = match t {
                Tissue::Air => b.air + n.air * z,
                Tissue::Fat | Tissue::Marrow => params.fat_mean + n.fat * z,
                Tissue::Septum => b.septa + n.fat * z,
                Tissue::Cortex => params.bone_mean + n.bone * z,
                Tissue::Muscle => {
                    let l = labels[i];
                    params.muscle_means[l as usize - 1] + n.muscle * z + geo.striation(l, x, y)
                }
            };
            (v.clamp(0.0, 1.0) * 65535.0).round() / 65535.0
        })
        .collect();
    PhantomSlice {
        index,
        image: GrayImage::new(w, h, data).expect("phantom intensities are clamped"),
        mask: LabelMask::new(w, h, labels)
            .expect("mask matches dimensions")
            .with_palette(spec.palette()),
        tissue,
        bone_center: geo.bone_center,
    }
}

/// Generate every slice of one volume.
pub fn generate_volume(spec: &PhantomSpec) -> Result<PhantomVolume> {
    spec.validate()?;
    let params = spec.volume_params();
    let slices = (0..spec.slices as u32)
        .map(|i| generate_slice(spec, &params, params.first_slice + i))
        .collect();
    Ok(PhantomVolume {
        spec: spec.clone(),
        params,
        slices,
    })
}

/// Volume id used by [`generate_dataset`].
pub fn volume_id(v: usize) -> String {
    format!("vol{:02}", v + 1)
}

/// Write `volumes` phantom volumes under `out_dir` and return (and save) the
/// manifest. Volume `v` uses seed `base_seed ^ v`.
pub fn generate_dataset(
    template: &PhantomSpec,
    base_seed: u64,
    volumes: usize,
    slices_per_volume: usize,
    out_dir: impl AsRef<Path>,
) -> Result<DatasetManifest> {
    let out_dir = out_dir.as_ref();
    if volumes == 0 || slices_per_volume == 0 {
        return Err(Error::Config("need at least one volume and one slice".into()));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut entries = Vec::with_capacity(volumes);
    for v in 0..volumes {
        let spec = PhantomSpec {
            seed: base_seed ^ v as u64,
            slices: slices_per_volume,
            ..template.clone()
        };
        let volume = generate_volume(&spec)?;
        let id = volume_id(v);
        let dir = out_dir.join(&id);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut slices = Vec::with_capacity(slices_per_volume);
        for s in &volume.slices {
            let image = format!("{id}/slice_{:02}.png", s.index);
            let mask = format!("{id}/slice_{:02}_mask.png", s.index);
            save_image(&s.image, out_dir.join(&image), BitDepth::Sixteen)?;
            save_mask(&s.mask, out_dir.join(&mask))?;
            slices.push(SliceEntry {
                index: s.index,
                image: image.into(),
                mask: Some(mask.into()),
            });
        }
        entries.push(VolumeEntry { id, slices });
    }
    let manifest = DatasetManifest::new(entries, out_dir)?;
    manifest.save(out_dir.join("manifest.json"))?;
    let spec_path = out_dir.join("phantom.json");
    let spec_text = serde_json::to_string_pretty(&PhantomSpec {
        seed: base_seed,
        slices: slices_per_volume,
        ..template.clone()
    })?;
    fs::write(&spec_path, spec_text + "\n").map_err(|e| Error::io(&spec_path, e))?;
    Ok(manifest)
}
