//! Raster I/O for grayscale slices and label masks, plus the dataset manifest.
//!
//! Supported rasters are single-channel PNG (8/16 bit) and PGM (`P2`/`P5`).
//! Intensities are normalized by the format maximum, never by the image's own
//! range, so texture statistics stay comparable between slices.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::BufWriter;
use std::ops::Deref;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Luma, Rgb};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major 2-D array of unbounded scalars (filter responses, subbands).
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "plane data length {} does not match {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Plane {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Plane {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Plane {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Sample with coordinates clamped into the plane (replicate border).
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.data[cy * self.width + cx]
    }

    /// Top-left `width`×`height` sub-plane.
    pub fn crop(&self, width: usize, height: usize) -> Plane {
        assert!(width <= self.width && height <= self.height);
        Plane::from_fn(width, height, |x, y| self.get(x, y))
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }
}

/// Grayscale slice with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage(Plane);

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        let plane = Plane::new(width, height, data)?;
        Self::from_plane(plane)
    }

    pub fn from_plane(plane: Plane) -> Result<Self> {
        if plane.width == 0 || plane.height == 0 {
            return Err(Error::InvalidInput("zero-sized image".into()));
        }
        if let Some(bad) = plane
            .data
            .iter()
            .find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0)
        {
            return Err(Error::InvalidInput(format!(
                "intensity {bad} outside [0, 1]"
            )));
        }
        Ok(GrayImage(plane))
    }

    pub fn from_fn(width: usize, height: usize, f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        Self::from_plane(Plane::from_fn(width, height, f))
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn plane(&self) -> &Plane {
        &self.0
    }

    /// Round every intensity onto the `bits`-deep integer lattice.
    pub fn quantized(&self, depth: BitDepth) -> GrayImage {
        let max = depth.max_value();
        GrayImage(Plane {
            width: self.0.width,
            height: self.0.height,
            data: self.0.data.iter().map(|v| (v * max).round() / max).collect(),
        })
    }

    pub fn crop(&self, width: usize, height: usize) -> GrayImage {
        GrayImage(self.0.crop(width, height))
    }
}

impl Deref for GrayImage {
    type Target = Plane;

    fn deref(&self) -> &Plane {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn max_value(self) -> f64 {
        match self {
            BitDepth::Eight => 255.0,
            BitDepth::Sixteen => 65535.0,
        }
    }
}

/// Per-pixel label ids: 0 is background, `k >= 1` a muscle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    width: usize,
    height: usize,
    labels: Vec<u8>,
    pub palette: BTreeMap<u8, String>,
}

impl LabelMask {
    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "mask data length {} does not match {}x{}",
                labels.len(),
                width,
                height
            )));
        }
        Ok(LabelMask {
            width,
            height,
            labels,
            palette: BTreeMap::new(),
        })
    }

    pub fn background(width: usize, height: usize) -> Self {
        LabelMask {
            width,
            height,
            labels: vec![0; width * height],
            palette: BTreeMap::new(),
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut labels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                labels.push(f(x, y));
            }
        }
        LabelMask {
            width,
            height,
            labels,
            palette: BTreeMap::new(),
        }
    }

    /// Binary mask (label 1 where `fg` is set).
    pub fn from_binary(width: usize, height: usize, fg: &[bool]) -> Result<Self> {
        Self::new(width, height, fg.iter().map(|&b| b as u8).collect())
    }

    pub fn with_palette(mut self, palette: BTreeMap<u8, String>) -> Self {
        self.palette = palette;
        self
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, label: u8) {
        self.labels[y * self.width + x] = label;
    }

    pub fn foreground(&self) -> Vec<bool> {
        self.labels.iter().map(|&l| l > 0).collect()
    }

    pub fn foreground_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l > 0).count()
    }

    /// Distinct label ids present, background included when present.
    pub fn label_ids(&self) -> BTreeSet<u8> {
        self.labels.iter().copied().collect()
    }

    /// Muscle ids named by the palette, falling back to ids present.
    pub fn muscle_ids(&self) -> BTreeSet<u8> {
        if self.palette.is_empty() {
            self.label_ids().into_iter().filter(|&l| l > 0).collect()
        } else {
            self.palette.keys().copied().filter(|&l| l > 0).collect()
        }
    }

    pub fn same_dims(&self, width: usize, height: usize) -> bool {
        self.width == width && self.height == height
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";

/// Raw integer samples decoded from a single-channel raster.
struct RawRaster {
    width: usize,
    height: usize,
    max_value: u32,
    samples: Vec<u16>,
}

fn decode_raster(path: &Path) -> Result<RawRaster> {
    let bytes = read_bytes(path)?;
    let raster = if bytes.starts_with(PNG_MAGIC) {
        decode_png(path, &bytes)?
    } else if bytes.starts_with(b"P5") || bytes.starts_with(b"P2") {
        decode_pgm(path, &bytes)?
    } else {
        return Err(Error::format(path, "unsupported raster format (expected PNG or PGM)"));
    };
    if raster.width == 0 || raster.height == 0 {
        return Err(Error::format(path, "zero-sized image"));
    }
    Ok(raster)
}

fn decode_png(path: &Path, bytes: &[u8]) -> Result<RawRaster> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(buf) => Ok(RawRaster {
            width,
            height,
            max_value: 255,
            samples: buf.into_raw().into_iter().map(u16::from).collect(),
        }),
        DynamicImage::ImageLuma16(buf) => Ok(RawRaster {
            width,
            height,
            max_value: 65535,
            samples: buf.into_raw(),
        }),
        other => Err(Error::format(
            path,
            format!("expected single-channel PNG, found {:?}", other.color()),
        )),
    }
}

fn decode_pgm(path: &Path, bytes: &[u8]) -> Result<RawRaster> {
    let binary = bytes[1] == b'5';
    let mut pos = 2;
    let mut header = [0u32; 3];
    for slot in header.iter_mut() {
        // skip whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        *slot = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(path, "malformed PGM header"))?;
    }
    let [width, height, max_value] = header;
    let (width, height) = (width as usize, height as usize);
    if max_value == 0 || max_value > 65535 {
        return Err(Error::format(path, format!("invalid PGM maxval {max_value}")));
    }
    let n = width * height;
    let samples: Vec<u16> = if binary {
        // exactly one whitespace byte separates header from raster
        pos += 1;
        let body = bytes.get(pos..).unwrap_or_default();
        if max_value < 256 {
            if body.len() < n {
                return Err(Error::format(path, "truncated PGM raster"));
            }
            body[..n].iter().map(|&b| u16::from(b)).collect()
        } else {
            if body.len() < 2 * n {
                return Err(Error::format(path, "truncated PGM raster"));
            }
            body[..2 * n]
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]))
                .collect()
        }
    } else {
        let text = std::str::from_utf8(&bytes[pos..])
            .map_err(|_| Error::format(path, "non-ASCII data in plain PGM"))?;
        let values: Vec<u16> = text
            .split_ascii_whitespace()
            .take(n)
            .map(|t| t.parse::<u16>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::format(path, "malformed plain PGM sample"))?;
        if values.len() < n {
            return Err(Error::format(path, "truncated PGM raster"));
        }
        values
    };
    if samples.iter().any(|&s| u32::from(s) > max_value) {
        return Err(Error::format(path, "PGM sample exceeds maxval"));
    }
    Ok(RawRaster {
        width,
        height,
        max_value,
        samples,
    })
}

/// Load a grayscale slice, scaling samples by the format maximum.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let raster = decode_raster(path.as_ref())?;
    let max = f64::from(raster.max_value);
    let data = raster.samples.iter().map(|&s| f64::from(s) / max).collect();
    GrayImage::new(raster.width, raster.height, data)
}

/// Save a grayscale slice as PNG, or as binary PGM when the extension is `.pgm`.
pub fn save_image(image: &GrayImage, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    let max = depth.max_value();
    let samples: Vec<u16> = image
        .data()
        .iter()
        .map(|v| (v * max).round() as u16)
        .collect();
    let (w, h) = (image.width() as u32, image.height() as u32);
    let is_pgm = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    if is_pgm {
        let mut out = format!("P5\n{w} {h}\n{}\n", max as u32).into_bytes();
        match depth {
            BitDepth::Eight => out.extend(samples.iter().map(|&s| s as u8)),
            BitDepth::Sixteen => out.extend(samples.iter().flat_map(|s| s.to_be_bytes())),
        }
        ensure_parent(path)?;
        return fs::write(path, out).map_err(|e| Error::io(path, e));
    }
    let result = match depth {
        BitDepth::Eight => {
            let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
                ImageBuffer::from_raw(w, h, samples.iter().map(|&s| s as u8).collect())
                    .expect("buffer size matches dimensions");
            write_png(path, &DynamicImage::ImageLuma8(buf))
        }
        BitDepth::Sixteen => {
            let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
                ImageBuffer::from_raw(w, h, samples).expect("buffer size matches dimensions");
            write_png(path, &DynamicImage::ImageLuma16(buf))
        }
    };
    result
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

fn write_png(path: &Path, img: &DynamicImage) -> Result<()> {
    ensure_parent(path)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    img.write_to(&mut writer, image::ImageFormat::Png)
        .map_err(|e| Error::format(path, e.to_string()))
}

/// Sidecar palette path: `mask.png` → `mask.json`.
pub fn palette_path(mask_path: &Path) -> PathBuf {
    mask_path.with_extension("json")
}

/// Load a label mask; sample values are taken verbatim as label ids. The
/// palette comes from the JSON sidecar and is empty without one.
pub fn load_mask(path: impl AsRef<Path>) -> Result<LabelMask> {
    let path = path.as_ref();
    let raster = decode_raster(path)?;
    let labels: Vec<u8> = raster
        .samples
        .iter()
        .map(|&s| u8::try_from(s))
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::format(path, "mask label exceeds 255"))?;
    let mut mask = LabelMask::new(raster.width, raster.height, labels)?;
    let sidecar = palette_path(path);
    mask.palette = if sidecar.exists() {
        let text = fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        let raw: BTreeMap<String, String> = serde_json::from_str(&text)?;
        let mut palette = BTreeMap::new();
        for (k, v) in raw {
            let id: u8 = k
                .parse()
                .map_err(|_| Error::format(&sidecar, format!("palette key {k:?} is not a label id")))?;
            palette.insert(id, v);
        }
        if let Some(unknown) = mask
            .label_ids()
            .into_iter()
            .find(|&l| l > 0 && !palette.contains_key(&l))
        {
            return Err(Error::format(
                path,
                format!("label {unknown} missing from palette sidecar"),
            ));
        }
        palette
    } else {
        BTreeMap::new()
    };
    Ok(mask)
}

/// Save a mask as 8-bit PNG; a non-empty palette goes to the JSON sidecar.
pub fn save_mask(mask: &LabelMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_raw(
        mask.width as u32,
        mask.height as u32,
        mask.labels.clone(),
    )
    .expect("buffer size matches dimensions");
    write_png(path, &DynamicImage::ImageLuma8(buf))?;
    if !mask.palette.is_empty() {
        let raw: BTreeMap<String, &String> =
            mask.palette.iter().map(|(k, v)| (k.to_string(), v)).collect();
        let sidecar = palette_path(path);
        let text = serde_json::to_string_pretty(&raw)?;
        fs::write(&sidecar, text).map_err(|e| Error::io(&sidecar, e))?;
    }
    Ok(())
}

const OVERLAY_COLORS: [[u8; 3]; 12] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 190],
    [0, 128, 128],
    [170, 110, 40],
];

/// Overlay color for a muscle label; background has none.
pub fn label_color(label: u8) -> Option<[u8; 3]> {
    (label > 0).then(|| OVERLAY_COLORS[(label as usize - 1) % OVERLAY_COLORS.len()])
}

/// Write an RGB PNG with label colors alpha-blended (α = 0.5) over the slice.
pub fn save_overlay(image: &GrayImage, mask: &LabelMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if !mask.same_dims(image.width(), image.height()) {
        return Err(Error::InvalidInput(format!(
            "overlay mask is {}x{}, image is {}x{}",
            mask.width,
            mask.height,
            image.width(),
            image.height()
        )));
    }
    let buf = ImageBuffer::from_fn(image.width() as u32, image.height() as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        let g = image.get(x, y) * 255.0;
        match label_color(mask.get(x, y)) {
            None => {
                let v = g.round() as u8;
                Rgb([v, v, v])
            }
            Some(c) => Rgb(c.map(|ch| (0.5 * g + 0.5 * f64::from(ch)).round() as u8)),
        }
    });
    write_png(path, &DynamicImage::ImageRgb8(buf))
}

/// One slice of a volume as listed in the manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceEntry {
    pub index: u32,
    pub image: PathBuf,
    pub mask: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VolumeEntry {
    pub id: String,
    pub slices: Vec<SliceEntry>,
}

/// Dataset listing: volumes, each an ordered run of slices.
///
/// Relative paths are resolved against the directory the manifest was loaded
/// from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub volumes: Vec<VolumeEntry>,
    #[serde(skip)]
    base_dir: PathBuf,
}

/// A slice reference with its owning volume.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SliceRef<'a> {
    pub volume: &'a str,
    pub entry: &'a SliceEntry,
}

/// A slice loaded into memory.
#[derive(Debug, Clone)]
pub struct LoadedSlice {
    pub volume: String,
    pub index: u32,
    pub image: GrayImage,
    pub mask: Option<LabelMask>,
}

impl DatasetManifest {
    pub fn new(volumes: Vec<VolumeEntry>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut manifest = DatasetManifest {
            volumes,
            base_dir: base_dir.into(),
        };
        manifest.normalize()?;
        Ok(manifest)
    }

    fn normalize(&mut self) -> Result<()> {
        self.volumes.sort_by(|a, b| a.id.cmp(&b.id));
        for pair in self.volumes.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(Error::InvalidInput(format!(
                    "duplicate volume id {:?}",
                    pair[0].id
                )));
            }
        }
        for vol in &self.volumes {
            if vol.slices.windows(2).any(|w| w[0].index >= w[1].index) {
                return Err(Error::InvalidInput(format!(
                    "slice indices of volume {:?} are not strictly increasing",
                    vol.id
                )));
            }
        }
        Ok(())
    }

    /// Parse a manifest and check that every referenced file exists.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: DatasetManifest =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        manifest
            .normalize()
            .map_err(|e| Error::format(path, e.to_string()))?;
        for s in manifest.slices() {
            let files = std::iter::once(&s.entry.image).chain(s.entry.mask.iter());
            for f in files {
                let resolved = manifest.resolve(f);
                if !resolved.exists() {
                    return Err(Error::format(
                        path,
                        format!("volume {} slice {}: missing {}", s.volume, s.entry.index, resolved.display()),
                    ));
                }
            }
        }
        Ok(manifest)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// All slices sorted by (volume id, slice index).
    pub fn slices(&self) -> impl Iterator<Item = SliceRef<'_>> {
        self.volumes.iter().flat_map(|v| {
            v.slices.iter().map(move |entry| SliceRef {
                volume: &v.id,
                entry,
            })
        })
    }

    pub fn volume_ids(&self) -> Vec<&str> {
        self.volumes.iter().map(|v| v.id.as_str()).collect()
    }

    /// Sub-manifest restricted to the volumes for which `keep` returns true.
    pub fn filtered(&self, mut keep: impl FnMut(&str) -> bool) -> DatasetManifest {
        DatasetManifest {
            volumes: self
                .volumes
                .iter()
                .filter(|v| keep(&v.id))
                .cloned()
                .collect(),
            base_dir: self.base_dir.clone(),
        }
    }

    pub fn load_slice(&self, s: &SliceRef<'_>) -> Result<LoadedSlice> {
        let image = load_image(self.resolve(&s.entry.image))?;
        let mask = match &s.entry.mask {
            Some(p) => {
                let path = self.resolve(p);
                let mask = load_mask(&path)?;
                if !mask.same_dims(image.width(), image.height()) {
                    return Err(Error::format(
                        path,
                        format!(
                            "mask is {}x{} but image is {}x{}",
                            mask.width(),
                            mask.height(),
                            image.width(),
                            image.height()
                        ),
                    ));
                }
                Some(mask)
            }
            None => None,
        };
        Ok(LoadedSlice {
            volume: s.volume.to_string(),
            index: s.entry.index,
            image,
            mask,
        })
    }

    pub fn load_all(&self) -> Result<Vec<LoadedSlice>> {
        self.slices().map(|s| self.load_slice(&s)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn pgm_all_max_loads_as_one() {
        let dir = tmp();
        let p = dir.path().join("a.pgm");
        let mut bytes = b"P5\n4 3\n255\n".to_vec();
        bytes.extend([255u8; 12]);
        fs::write(&p, bytes).unwrap();
        let img = load_image(&p).unwrap();
        assert_eq!((img.width(), img.height()), (4, 3));
        assert!(img.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn png16_zero_loads_as_zero() {
        let dir = tmp();
        let p = dir.path().join("z.png");
        let img = GrayImage::constant(5, 7, 0.0).unwrap();
        save_image(&img, &p, BitDepth::Sixteen).unwrap();
        let back = load_image(&p).unwrap();
        assert_eq!((back.width(), back.height()), (5, 7));
        assert!(back.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn eight_bit_midpoint_divides_by_max() {
        let dir = tmp();
        let p = dir.path().join("m.pgm");
        let mut bytes = b"P5\n1 1\n255\n".to_vec();
        bytes.push(128);
        fs::write(&p, bytes).unwrap();
        let v = load_image(&p).unwrap().get(0, 0);
        assert_eq!(v, 128.0 / 255.0);
        assert!((v - 0.50196).abs() < 1e-5);
    }

    #[test]
    fn plain_pgm_with_comment() {
        let dir = tmp();
        let p = dir.path().join("p.pgm");
        fs::write(&p, "P2\n# comment\n2 2\n15\n0 15\n5 10\n").unwrap();
        let img = load_image(&p).unwrap();
        assert_eq!(img.data(), &[0.0, 1.0, 5.0 / 15.0, 10.0 / 15.0]);
    }

    #[test]
    fn rejects_missing_and_unknown_files() {
        let dir = tmp();
        assert!(matches!(
            load_image(dir.path().join("nope.png")),
            Err(Error::Io { .. })
        ));
        let p = dir.path().join("x.bin");
        fs::write(&p, b"hello").unwrap();
        assert!(matches!(load_image(&p), Err(Error::Format { .. })));
    }

    #[test]
    fn rejects_rgb_png() {
        let dir = tmp();
        let p = dir.path().join("rgb.png");
        let mask = LabelMask::background(3, 3);
        save_overlay(&GrayImage::constant(3, 3, 0.5).unwrap(), &mask, &p).unwrap();
        assert!(matches!(load_image(&p), Err(Error::Format { .. })));
        assert!(matches!(load_mask(&p), Err(Error::Format { .. })));
    }

    #[test]
    fn zero_sized_pgm_rejected() {
        let dir = tmp();
        let p = dir.path().join("e.pgm");
        fs::write(&p, b"P5\n0 0\n255\n").unwrap();
        assert!(load_image(&p).is_err());
    }

    #[test]
    fn mask_roundtrip_with_palette() {
        let dir = tmp();
        let p = dir.path().join("mask.png");
        let mut palette = BTreeMap::new();
        palette.insert(1, "vastus_medialis".to_string());
        palette.insert(2, "vastus_lateralis".to_string());
        let mask = LabelMask::from_fn(6, 4, |x, _| (x % 3) as u8).with_palette(palette);
        save_mask(&mask, &p).unwrap();
        let back = load_mask(&p).unwrap();
        assert_eq!(back, mask);
        assert_eq!(back.label_ids(), [0, 1, 2].into_iter().collect());
    }

    #[test]
    fn mask_without_sidecar_has_empty_palette() {
        let dir = tmp();
        let p = dir.path().join("m.png");
        save_mask(&LabelMask::from_fn(3, 1, |x, _| x as u8), &p).unwrap();
        assert!(!palette_path(&p).exists());
        let back = load_mask(&p).unwrap();
        assert!(back.palette.is_empty());
        assert_eq!(back.labels(), &[0, 1, 2]);
        let empty = LabelMask::background(4, 4);
        save_mask(&empty, dir.path().join("bg.png")).unwrap();
        let back = load_mask(dir.path().join("bg.png")).unwrap();
        assert_eq!(back.label_ids(), [0].into_iter().collect());
    }

    #[test]
    fn background_overlay_is_plain_gray() {
        let dir = tmp();
        let p = dir.path().join("o.png");
        let img = GrayImage::from_fn(8, 8, |x, y| ((x + y) as f64) / 14.0).unwrap();
        save_overlay(&img, &LabelMask::background(8, 8), &p).unwrap();
        let rgb = image::open(&p).unwrap().to_rgb8();
        for (x, y, px) in rgb.enumerate_pixels() {
            let g = (img.get(x as usize, y as usize) * 255.0).round() as u8;
            assert_eq!(px.0, [g, g, g]);
        }
    }

    #[test]
    fn overlay_is_byte_deterministic() {
        let dir = tmp();
        let img = GrayImage::from_fn(16, 16, |x, _| x as f64 / 15.0).unwrap();
        let mask = LabelMask::from_fn(16, 16, |x, y| ((x / 4 + y / 4) % 4) as u8);
        save_overlay(&img, &mask, dir.path().join("a.png")).unwrap();
        save_overlay(&img, &mask, dir.path().join("b.png")).unwrap();
        assert_eq!(
            fs::read(dir.path().join("a.png")).unwrap(),
            fs::read(dir.path().join("b.png")).unwrap()
        );
    }

    #[test]
    fn quantized_save_load_is_idempotent() {
        let dir = tmp();
        let img = GrayImage::from_fn(9, 5, |x, y| ((x * 7 + y * 13) % 17) as f64 / 16.5).unwrap();
        for (depth, name) in [(BitDepth::Eight, "q.png"), (BitDepth::Sixteen, "q.pgm")] {
            let p = dir.path().join(name);
            save_image(&img, &p, depth).unwrap();
            let once = load_image(&p).unwrap();
            assert_eq!(once, img.quantized(depth));
            save_image(&once, &p, depth).unwrap();
            assert_eq!(load_image(&p).unwrap(), once);
        }
    }

    #[test]
    fn manifest_rejects_unsorted_slices_and_missing_files() {
        let dir = tmp();
        let bad = r#"{"volumes":[{"id":"a","slices":[{"index":2,"image":"x.png","mask":null},{"index":1,"image":"y.png","mask":null}]}]}"#;
        let p = dir.path().join("manifest.json");
        fs::write(&p, bad).unwrap();
        assert!(DatasetManifest::load(&p).is_err());

        let missing = r#"{"volumes":[{"id":"a","slices":[{"index":0,"image":"x.png","mask":null}]}]}"#;
        fs::write(&p, missing).unwrap();
        assert!(matches!(DatasetManifest::load(&p), Err(Error::Format { .. })));
    }

    #[test]
    fn manifest_enumerates_sorted_and_checks_dims() {
        let dir = tmp();
        let img = GrayImage::constant(4, 4, 0.5).unwrap();
        save_image(&img, dir.path().join("i.png"), BitDepth::Eight).unwrap();
        save_mask(&LabelMask::background(3, 4), dir.path().join("m.png")).unwrap();
        let text = r#"{"volumes":[
            {"id":"b","slices":[{"index":0,"image":"i.png","mask":null}]},
            {"id":"a","slices":[{"index":3,"image":"i.png","mask":"m.png"},{"index":5,"image":"i.png","mask":null}]}]}"#;
        let p = dir.path().join("manifest.json");
        fs::write(&p, text).unwrap();
        let m = DatasetManifest::load(&p).unwrap();
        let order: Vec<(String, u32)> = m
            .slices()
            .map(|s| (s.volume.to_string(), s.entry.index))
            .collect();
        assert_eq!(
            order,
            vec![("a".into(), 3), ("a".into(), 5), ("b".into(), 0)]
        );
        let first = m.slices().next().unwrap();
        assert!(matches!(m.load_slice(&first), Err(Error::Format { .. })));
    }
}
