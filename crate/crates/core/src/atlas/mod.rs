//! Probabilistic muscle atlas and label transfer.
//!
//! Training masks are brought into the frame of a reference slice with
//! [`compute_alignment`], overlaid into per-muscle count maps, and each map is
//! truncated at half of its peak count. A binary segmentation is labeled by
//! mapping every foreground pixel into the atlas frame and reading the region
//! it falls into.

mod bone;
mod geometry;

pub use bone::{
    bone_centroid, dark_class, filled_regions, histogram, otsu_three_class, otsu_threshold, BoneParams, Region,
};
pub use geometry::{
    compute_alignment, convex_hull, keypoints_from_mask, warp_back, warp_mask, wrap_angle, Alignment, Keypoints,
    Point,
};

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::{load_image, save_image, BitDepth, GrayImage, LabelMask};

/// Keypoints of a slice from its image (bone) and a foreground mask (hull).
pub fn slice_keypoints(image: &GrayImage, mask: &LabelMask, bone: &BoneParams) -> Result<Keypoints> {
    let centroid = bone_centroid(image, bone)?;
    keypoints_from_mask(&mask.foreground(), mask.width(), centroid)
}

/// Minimum count kept by half-peak truncation: `ceil(peak / 2)`.
pub fn truncation_level(peak: u32) -> u32 {
    peak.div_ceil(2)
}

/// Pixels whose count reaches half of the peak (never zero-count pixels).
pub fn truncate_counts(counts: &[u32]) -> Vec<bool> {
    let peak = counts.iter().copied().max().unwrap_or(0);
    let level = truncation_level(peak).max(1);
    counts.iter().map(|&c| c >= level).collect()
}

/// Overlap counts of one muscle in the reference frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MuscleMap {
    pub counts: Vec<u32>,
    pub peak: u32,
    pub region: Vec<bool>,
}

impl MuscleMap {
    fn from_counts(counts: Vec<u32>) -> Self {
        let peak = counts.iter().copied().max().unwrap_or(0);
        let region = truncate_counts(&counts);
        MuscleMap {
            counts,
            peak,
            region,
        }
    }
}

/// Per-muscle truncated probability regions in a common reference frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MuscleAtlas {
    pub width: usize,
    pub height: usize,
    pub contributors: usize,
    pub reference: Keypoints,
    pub palette: BTreeMap<u8, String>,
    pub muscles: BTreeMap<u8, MuscleMap>,
}

/// Atlas plus the contributors that had to be skipped.
#[derive(Debug)]
pub struct AtlasBuild {
    pub atlas: MuscleAtlas,
    pub skipped: Vec<(usize, Error)>,
}

/// Overlay all training masks in the frame of `masks[reference_index]`.
///
/// A contributor whose keypoints cannot be extracted is skipped with a
/// warning; failure on the reference itself is an error.
pub fn build_atlas(
    masks: &[LabelMask],
    images: &[GrayImage],
    reference_index: usize,
    bone: &BoneParams,
) -> Result<AtlasBuild> {
    if masks.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "atlas needs at least 2 masks, got {}",
            masks.len()
        )));
    }
    if masks.len() != images.len() {
        return Err(Error::InvalidInput("masks and images differ in count".into()));
    }
    if reference_index >= masks.len() {
        return Err(Error::InvalidInput(format!(
            "reference index {reference_index} out of range"
        )));
    }
    let mut palette = BTreeMap::new();
    for m in masks {
        for (&id, name) in &m.palette {
            if let Some(prev) = palette.insert(id, name.clone()) {
                if &prev != name {
                    return Err(Error::InvalidInput(format!(
                        "label {id} is {prev:?} in one mask and {name:?} in another"
                    )));
                }
            }
        }
    }
    let mut ids: Vec<u8> = palette.keys().copied().filter(|&l| l > 0).collect();
    for m in masks {
        ids.extend(m.muscle_ids());
    }
    ids.sort_unstable();
    ids.dedup();

    let reference_mask = &masks[reference_index];
    let (width, height) = (reference_mask.width(), reference_mask.height());
    let reference = slice_keypoints(&images[reference_index], reference_mask, bone)?;

    let mut counts: BTreeMap<u8, Vec<u32>> = ids.iter().map(|&id| (id, vec![0; width * height])).collect();
    let mut skipped = Vec::new();
    let mut contributors = 0;
    for (i, (mask, image)) in masks.iter().zip(images).enumerate() {
        let aligned = if i == reference_index {
            mask.clone()
        } else {
            let kp = match slice_keypoints(image, mask, bone)
                .and_then(|kp| compute_alignment(&reference, &kp))
            {
                Ok(a) => a,
                Err(e) => {
                    log::warn!("atlas contributor {i} skipped: {e}");
                    skipped.push((i, e));
                    continue;
                }
            };
            warp_mask(mask, &kp, width, height)
        };
        contributors += 1;
        for (p, &l) in aligned.labels().iter().enumerate() {
            if l > 0 {
                if let Some(c) = counts.get_mut(&l) {
                    c[p] += 1;
                }
            }
        }
    }
    let muscles = counts
        .into_iter()
        .map(|(id, c)| (id, MuscleMap::from_counts(c)))
        .collect();
    Ok(AtlasBuild {
        atlas: MuscleAtlas {
            width,
            height,
            contributors,
            reference,
            palette,
            muscles,
        },
        skipped,
    })
}

impl MuscleAtlas {
    /// Winning label at each atlas pixel: the containing region with the
    /// highest count, ties to the smaller id; 0 outside every region.
    pub fn owner_map(&self) -> Vec<u8> {
        let mut owner = vec![0u8; self.width * self.height];
        let mut best = vec![0u32; self.width * self.height];
        for (&id, m) in &self.muscles {
            for p in 0..owner.len() {
                if m.region[p] && m.counts[p] > best[p] {
                    best[p] = m.counts[p];
                    owner[p] = id;
                }
            }
        }
        owner
    }

    /// Region pixels that touch the outside of their own region.
    fn region_edges(&self) -> Vec<(Point, u8)> {
        let (w, h) = (self.width, self.height);
        let mut edges = Vec::new();
        for (&id, m) in &self.muscles {
            for y in 0..h {
                for x in 0..w {
                    if !m.region[y * w + x] {
                        continue;
                    }
                    let border = x == 0
                        || y == 0
                        || x + 1 == w
                        || y + 1 == h
                        || !m.region[y * w + x - 1]
                        || !m.region[y * w + x + 1]
                        || !m.region[(y - 1) * w + x]
                        || !m.region[(y + 1) * w + x];
                    if border {
                        edges.push((Point::new(x as f64, y as f64), id));
                    }
                }
            }
        }
        edges
    }

    /// Label of the truncated region nearest to `q` (Euclidean, pixel
    /// centres), ties to the smaller id.
    fn nearest_label(edges: &[(Point, u8)], q: Point) -> u8 {
        let mut best = (f64::INFINITY, 0u8);
        for &(p, id) in edges {
            let d = (p - q).dot(p - q);
            if d < best.0 || (d == best.0 && id < best.1) {
                best = (d, id);
            }
        }
        best.1
    }

    /// Label every foreground pixel of `binary` (given in the native frame
    /// of `image`).
    ///
    /// The output has exactly the foreground support of `binary`.
    pub fn label_segmentation(&self, binary: &LabelMask, image: &GrayImage, bone: &BoneParams) -> Result<LabelMask> {
        if !binary.same_dims(image.width(), image.height()) {
            return Err(Error::InvalidInput("binary mask and image differ in size".into()));
        }
        let target = slice_keypoints(image, binary, bone)?;
        let align = compute_alignment(&self.reference, &target)?;
        self.transfer(binary, &align)
    }

    /// Label transfer with a known alignment from the native frame into the
    /// atlas frame.
    pub fn transfer(&self, binary: &LabelMask, align: &Alignment) -> Result<LabelMask> {
        let owner = self.owner_map();
        let edges = self.region_edges();
        if edges.is_empty() {
            return Err(Error::InvalidInput("atlas has no muscle regions".into()));
        }
        let palette = if self.palette.is_empty() {
            self.muscles.keys().map(|&id| (id, id.to_string())).collect()
        } else {
            self.palette.clone()
        };
        let mut out = LabelMask::background(binary.width(), binary.height()).with_palette(palette);
        for y in 0..binary.height() {
            for x in 0..binary.width() {
                if binary.get(x, y) == 0 {
                    continue;
                }
                let q = align.apply(Point::new(x as f64, y as f64));
                let (ix, iy) = ((q.x + 0.5).floor(), (q.y + 0.5).floor());
                let inside = ix >= 0.0 && iy >= 0.0 && ix < self.width as f64 && iy < self.height as f64;
                let direct = if inside {
                    owner[iy as usize * self.width + ix as usize]
                } else {
                    0
                };
                let label = if direct > 0 {
                    direct
                } else {
                    Self::nearest_label(&edges, q)
                };
                out.set(x, y, label);
            }
        }
        Ok(out)
    }

    /// Write `atlas.json` and one 16-bit count PNG per muscle into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        if self.contributors > u16::MAX as usize {
            return Err(Error::InvalidInput("too many contributors for 16-bit counts".into()));
        }
        let mut muscles = BTreeMap::new();
        for (&id, m) in &self.muscles {
            let file = format!("muscle_{id:02}.png");
            let data = m.counts.iter().map(|&c| f64::from(c) / 65535.0).collect();
            save_image(&GrayImage::new(self.width, self.height, data)?, dir.join(&file), BitDepth::Sixteen)?;
            muscles.insert(
                id.to_string(),
                MuscleMeta {
                    peak: m.peak,
                    file,
                    name: self.palette.get(&id).cloned(),
                },
            );
        }
        let meta = AtlasMeta {
            reference_dims: [self.width, self.height],
            contributors: self.contributors,
            muscles,
            reference: self.reference.clone(),
        };
        let path = dir.join("atlas.json");
        fs::write(&path, serde_json::to_string_pretty(&meta)? + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join("atlas.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: AtlasMeta = serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?;
        let [width, height] = meta.reference_dims;
        let mut muscles = BTreeMap::new();
        let mut palette = BTreeMap::new();
        for (key, m) in meta.muscles {
            let id: u8 = key
                .parse()
                .map_err(|_| Error::format(&path, format!("bad muscle id {key:?}")))?;
            let file = dir.join(&m.file);
            let img = load_image(&file)?;
            if (img.width(), img.height()) != (width, height) {
                return Err(Error::format(file, "count map size differs from reference_dims"));
            }
            let counts: Vec<u32> = img.data().iter().map(|v| (v * 65535.0).round() as u32).collect();
            let map = MuscleMap::from_counts(counts);
            if map.peak != m.peak {
                return Err(Error::format(file, format!("peak {} does not match metadata {}", map.peak, m.peak)));
            }
            if let Some(name) = m.name {
                palette.insert(id, name);
            }
            muscles.insert(id, map);
        }
        Ok(MuscleAtlas {
            width,
            height,
            contributors: meta.contributors,
            reference: meta.reference,
            palette,
            muscles,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct MuscleMeta {
    peak: u32,
    file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct AtlasMeta {
    reference_dims: [usize; 2],
    contributors: usize,
    muscles: BTreeMap<String, MuscleMeta>,
    reference: Keypoints,
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Slice with a dark bone disk at (30, 30) and a muscle blob to its right.
    fn slice(shift: usize) -> (GrayImage, LabelMask) {
        let img = GrayImage::from_fn(96, 64, |x, y| {
            let d = ((x as f64 - 30.0).powi(2) + (y as f64 - 30.0).powi(2)).sqrt();
            if d <= 7.0 {
                0.05
            } else {
                0.5
            }
        })
        .unwrap();
        let mask = LabelMask::from_fn(96, 64, |x, y| {
            if (20..40).contains(&y) && (40 + shift..60 + shift).contains(&x) {
                1 + (y >= 30) as u8
            } else {
                0
            }
        });
        (img, mask)
    }

    #[test]
    fn truncation_half_peak() {
        assert_eq!(truncation_level(9), 5);
        assert_eq!(truncation_level(8), 4);
        assert_eq!(truncate_counts(&[0, 1, 4, 5, 9]), vec![false, false, false, true, true]);
        assert_eq!(truncate_counts(&[0, 0]), vec![false, false]);
        assert_eq!(truncate_counts(&[1, 0]), vec![true, false]);
    }

    #[test]
    fn identical_contributors_reproduce_regions() {
        let (img, mask) = slice(0);
        let masks = vec![mask.clone(); 9];
        let images = vec![img.clone(); 9];
        let built = build_atlas(&masks, &images, 4, &BoneParams { min_area: 50, max_area: 3000 }).unwrap();
        assert!(built.skipped.is_empty());
        let atlas = built.atlas;
        assert_eq!(atlas.contributors, 9);
        for (&id, m) in &atlas.muscles {
            assert_eq!(m.peak, 9);
            let want: Vec<bool> = mask.labels().iter().map(|&l| l == id).collect();
            assert_eq!(m.region, want);
        }
        // binary = union of regions with identity alignment
        let labeled = atlas.transfer(&LabelMask::from_binary(96, 64, &mask.foreground()).unwrap(), &Alignment::identity()).unwrap();
        assert_eq!(labeled.labels(), mask.labels());
    }

    #[test]
    fn contributor_without_bone_is_skipped() {
        let (img, mask) = slice(0);
        let flat = GrayImage::constant(96, 64, 0.5).unwrap();
        let built = build_atlas(
            &[mask.clone(), mask.clone(), mask],
            &[img.clone(), flat, img],
            0,
            &BoneParams { min_area: 50, max_area: 3000 },
        )
        .unwrap();
        assert_eq!(built.skipped.len(), 1);
        assert_eq!(built.skipped[0].0, 1);
        assert_eq!(built.atlas.contributors, 2);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (img, mask) = slice(0);
        let bone = BoneParams::default();
        assert!(build_atlas(std::slice::from_ref(&mask), std::slice::from_ref(&img), 0, &bone).is_err());
        assert!(build_atlas(&[mask.clone(), mask.clone()], &[img.clone(), img.clone()], 2, &bone).is_err());
        let mut renamed = mask.clone();
        renamed.palette.insert(1, "a".into());
        let mut other = mask;
        other.palette.insert(1, "b".into());
        assert!(build_atlas(&[renamed, other], &[img.clone(), img], 0, &bone).is_err());
    }

    #[test]
    fn outside_pixels_take_nearest_region() {
        let mut muscles = BTreeMap::new();
        let region = |x0: usize, x1: usize| {
            let counts: Vec<u32> = (0..40 * 20).map(|i| ((x0..x1).contains(&(i % 40)) && (5..15).contains(&(i / 40))) as u32).collect();
            MuscleMap::from_counts(counts)
        };
        muscles.insert(1, region(0, 10));
        muscles.insert(2, region(20, 30));
        let atlas = MuscleAtlas {
            width: 40,
            height: 20,
            contributors: 1,
            reference: Keypoints {
                bone_centroid: Point::default(),
                distal_point: Point::new(1.0, 0.0),
                hull: vec![],
            },
            palette: BTreeMap::new(),
            muscles,
        };
        let mut binary = LabelMask::background(40, 20);
        binary.set(32, 10, 1); // 3 px right of region 2
        binary.set(5, 10, 1);
        let out = atlas.transfer(&binary, &Alignment::identity()).unwrap();
        assert_eq!(out.get(32, 10), 2);
        assert_eq!(out.get(5, 10), 1);
        assert_eq!(out.foreground(), binary.foreground());
    }

    #[test]
    fn save_load_roundtrip() {
        let (img, mask) = slice(0);
        let (img2, mask2) = slice(3);
        let atlas = build_atlas(&[mask, mask2], &[img, img2], 0, &BoneParams { min_area: 50, max_area: 3000 })
            .unwrap()
            .atlas;
        let dir = tempfile::tempdir().unwrap();
        atlas.save(dir.path()).unwrap();
        let back = MuscleAtlas::load(dir.path()).unwrap();
        assert_eq!(back, atlas);
        let text = fs::read_to_string(dir.path().join("atlas.json")).unwrap();
        assert!(text.contains("reference_dims") && text.contains("\"peak\""));
    }
}
