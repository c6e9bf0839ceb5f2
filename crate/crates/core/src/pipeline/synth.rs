//! Deterministic synthetic corpus: Voronoi tissue layouts at 1.25x with
//! 20x tiles of painted nuclei and their ground truth.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::{write_cell_annotations, CellAnnotation, CorpusManifest, ManifestEntry, Split, TileEntry};
use super::seeds::substream;
use crate::cellfeat::CellClass;
use crate::error::{Error, Result};
use crate::imgcore::{save_rgb, Magnification, RasterImage, REGION_DOWNSCALE};
use crate::superpix::{AnnotatedRegion, RegionAnnotations, RegionClass};

/// Generator settings. Per-class arrays follow the region class order
/// (tumour, stroma, epidermis, lumen) unless stated otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub train_images: usize,
    pub test_images: usize,
    /// Image size at 1.25x.
    pub width: usize,
    pub height: usize,
    pub voronoi_seeds: usize,
    /// Class probabilities of Voronoi seeds beyond the first four.
    pub region_mix: [f64; 4],
    pub tiles_per_image: usize,
    /// Tile side at 20x.
    pub tile_size: usize,
    /// Nuclei per 10⁴ tile pixels.
    pub nucleus_density: [f64; 4],
    /// Nucleus-free band along region boundaries, in 1.25x pixels.
    pub boundary_clearance: f64,
    /// Per region class, probabilities of cancer, epidermis, lymphocyte, stromal.
    pub cell_mix: [[f64; 4]; 4],
    pub region_palette: [[u8; 3]; 4],
    pub tile_palette: [[u8; 3]; 4],
    /// Indexed by cell class.
    pub nucleus_palette: [[u8; 3]; 4],
    pub cytoplasm_color: [u8; 3],
    /// Uniform per-channel noise amplitude in gray levels.
    pub noise: f64,
    /// Relative per-image, per-channel stain scaling amplitude.
    pub stain_jitter: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            seed: 7,
            train_images: 8,
            test_images: 8,
            width: 480,
            height: 480,
            voronoi_seeds: 9,
            region_mix: [0.35, 0.35, 0.15, 0.15],
            tiles_per_image: 4,
            tile_size: 320,
            nucleus_density: [8.0, 3.5, 8.0, 0.0],
            boundary_clearance: 4.0,
            cell_mix: [
                [0.8, 0.0, 0.2, 0.0],
                [0.0, 0.0, 0.35, 0.65],
                [0.0, 1.0, 0.0, 0.0],
                [0.0, 0.0, 0.0, 0.0],
            ],
            region_palette: [[200, 140, 190], [235, 175, 205], [175, 115, 170], [245, 242, 245]],
            tile_palette: [[226, 162, 203], [238, 185, 212], [226, 162, 203], [248, 246, 248]],
            nucleus_palette: [[95, 60, 130], [99, 62, 133], [55, 35, 90], [110, 70, 140]],
            cytoplasm_color: [205, 135, 190],
            noise: 8.0,
            stain_jitter: 0.04,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("synthetic spec: {m}")));
        if self.width < 16 || self.height < 16 {
            return bad("image must be at least 16x16");
        }
        if self.voronoi_seeds < 4 {
            return bad("need at least four Voronoi seeds");
        }
        let extent = self.width.min(self.height) * REGION_DOWNSCALE as usize;
        if self.tile_size < 32 || self.tile_size > extent {
            return bad("tile size out of range");
        }
        if self.region_mix.iter().sum::<f64>() <= 0.0 || self.region_mix.iter().any(|&p| p < 0.0) {
            return bad("region mix must be non-negative with positive sum");
        }
        for (r, mix) in self.cell_mix.iter().enumerate() {
            if self.nucleus_density[r] > 0.0 && mix.iter().sum::<f64>() <= 0.0 {
                return bad("cell mix empty for a populated region class");
            }
        }
        if self.nucleus_density.iter().any(|&d| !(d >= 0.0))
            || !(self.noise >= 0.0)
            || !(self.stain_jitter >= 0.0)
            || !(self.boundary_clearance >= 0.0)
        {
            return bad("densities and noise must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct VoronoiSeed {
    x: f64,
    y: f64,
    class: RegionClass,
    /// Fibre orientation for stroma.
    angle: f64,
}

fn nearest_seed(seeds: &[VoronoiSeed], x: f64, y: f64) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, s) in seeds.iter().enumerate() {
        let d = (s.x - x).powi(2) + (s.y - y).powi(2);
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

/// Distance from `(x, y)` to the boundary of the Voronoi cell of `owner`.
fn boundary_distance(seeds: &[VoronoiSeed], owner: usize, x: f64, y: f64) -> f64 {
    let so = &seeds[owner];
    let d_own = (so.x - x).powi(2) + (so.y - y).powi(2);
    seeds
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != owner)
        .map(|(_, s)| {
            let d = (s.x - x).powi(2) + (s.y - y).powi(2);
            (d - d_own) / (2.0 * (s.x - so.x).hypot(s.y - so.y))
        })
        .fold(f64::INFINITY, f64::min)
}

/// Sutherland–Hodgman clip of a convex polygon to `a·p <= c`.
fn clip_half_plane(poly: &[[f64; 2]], a: [f64; 2], c: f64) -> Vec<[f64; 2]> {
    let side = |p: [f64; 2]| a[0] * p[0] + a[1] * p[1] - c;
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        let (sp, sq) = (side(p), side(q));
        if sp <= 0.0 {
            out.push(p);
        }
        if (sp < 0.0 && sq > 0.0) || (sp > 0.0 && sq < 0.0) {
            let t = sp / (sp - sq);
            out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
        }
    }
    out
}

fn voronoi_polygons(seeds: &[VoronoiSeed], width: usize, height: usize) -> Vec<Vec<[f64; 2]>> {
    let (x1, y1) = (width as f64 - 0.5, height as f64 - 0.5);
    seeds
        .iter()
        .enumerate()
        .map(|(i, si)| {
            let mut poly = vec![[-0.5, -0.5], [x1, -0.5], [x1, y1], [-0.5, y1]];
            for (j, sj) in seeds.iter().enumerate() {
                if i == j {
                    continue;
                }
                let a = [2.0 * (sj.x - si.x), 2.0 * (sj.y - si.y)];
                let c = sj.x * sj.x + sj.y * sj.y - si.x * si.x - si.y * si.y;
                poly = clip_half_plane(&poly, a, c);
                if poly.is_empty() {
                    break;
                }
            }
            poly
        })
        .collect()
}

fn pick(rng: &mut ChaCha8Rng, weights: &[f64; 4]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

fn jitter(rng: &mut ChaCha8Rng, amp: f64) -> f64 {
    if amp > 0.0 {
        rng.random_range(-amp..=amp)
    } else {
        0.0
    }
}

fn finish(c: [f64; 3], stain: &[f64; 3]) -> [u8; 3] {
    [0, 1, 2].map(|k| (c[k] * stain[k]).round().clamp(0.0, 255.0) as u8)
}

/// One nucleus painted on a tile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaintedNucleus {
    pub x: f64,
    pub y: f64,
    pub a: f64,
    pub b: f64,
    pub angle: f64,
    pub class: CellClass,
    /// Whether a cytoplasm ring was painted around the nucleus.
    pub halo: bool,
    /// Fraction of dark chromatin pixels.
    pub speckle: f64,
    /// Per-pixel noise amplitude.
    pub grain: f64,
    /// Offset added to every channel of the nucleus color.
    pub tone: f64,
}

impl PaintedNucleus {
    /// Ellipse test with the semi-axes scaled by `scale`.
    pub fn contains(&self, px: f64, py: f64, scale: f64) -> bool {
        let (dx, dy) = (px - self.x, py - self.y);
        let (c, s) = (self.angle.cos(), self.angle.sin());
        let u = (dx * c + dy * s) / (self.a * scale);
        let v = (-dx * s + dy * c) / (self.b * scale);
        u * u + v * v <= 1.0
    }
}

/// Halo outer radius relative to the nucleus axes.
pub const HALO_SCALE: f64 = 1.7;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthTile {
    pub id: String,
    pub origin: [u64; 2],
    pub image: RasterImage,
    pub nuclei: Vec<PaintedNucleus>,
    /// Target class of the tile centre.
    pub target: RegionClass,
    /// Expected nucleus count from the density map.
    pub expected: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthImage {
    pub id: String,
    pub split: Split,
    pub image: RasterImage,
    pub regions: Vec<AnnotatedRegion>,
    pub tiles: Vec<SynthTile>,
}

impl SynthImage {
    pub fn region_annotations(&self) -> RegionAnnotations {
        RegionAnnotations {
            magnification: Magnification::x1_25().tag,
            regions: self.regions.clone(),
        }
    }
}

/// Image identifiers in generation order.
pub fn image_ids(spec: &SyntheticSpec) -> Vec<(String, Split)> {
    (0..spec.train_images)
        .map(|i| (format!("train_{i:02}"), Split::Train))
        .chain((0..spec.test_images).map(|i| (format!("test_{i:02}"), Split::Test)))
        .collect()
}

/// Renders one image with its tiles; independent of every other image.
pub fn render_image(spec: &SyntheticSpec, id: &str, split: Split) -> SynthImage {
    let mut rng = ChaCha8Rng::seed_from_u64(substream(spec.seed, &format!("synth/{id}")));
    let (w, h) = (spec.width, spec.height);

    let min_gap = 0.5 * ((w * h) as f64 / spec.voronoi_seeds as f64).sqrt();
    let mut first = RegionClass::ALL;
    for i in (1..4).rev() {
        first.swap(i, rng.random_range(0..=i));
    }
    let mut seeds: Vec<VoronoiSeed> = Vec::with_capacity(spec.voronoi_seeds);
    let mut attempts = 0;
    while seeds.len() < spec.voronoi_seeds {
        let (x, y) = (rng.random_range(0.0..w as f64 - 1.0), rng.random_range(0.0..h as f64 - 1.0));
        attempts += 1;
        if attempts < 10_000 && seeds.iter().any(|s| (s.x - x).hypot(s.y - y) < min_gap) {
            continue;
        }
        let class = match first.get(seeds.len()) {
            Some(&c) => c,
            None => RegionClass::ALL[pick(&mut rng, &spec.region_mix)],
        };
        seeds.push(VoronoiSeed {
            x,
            y,
            class,
            angle: rng.random_range(0.0..PI),
        });
    }
    let regions = voronoi_polygons(&seeds, w, h)
        .into_iter()
        .zip(&seeds)
        .filter(|(p, _)| p.len() >= 3)
        .map(|(polygon, s)| AnnotatedRegion { class: s.class, polygon })
        .collect();

    let stain = [0; 3].map(|_| 1.0 + jitter(&mut rng, spec.stain_jitter));

    let owner: Vec<usize> = (0..w * h).map(|i| nearest_seed(&seeds, (i % w) as f64, (i / w) as f64)).collect();
    let mut data = Vec::with_capacity(w * h * 3);
    for (i, &o) in owner.iter().enumerate() {
        let (x, y) = ((i % w) as f64, (i / w) as f64);
        let s = &seeds[o];
        let base = spec.region_palette[s.class.index()].map(f64::from);
        let shade = match s.class {
            RegionClass::Tumour => {
                if rng.random::<f64>() < 0.35 {
                    -75.0
                } else {
                    0.0
                }
            }
            RegionClass::Stroma => {
                let fibre = 12.0 * (2.0 * PI * (x * s.angle.cos() + y * s.angle.sin()) / 4.0).sin();
                if rng.random::<f64>() < 0.05 {
                    fibre - 80.0
                } else {
                    fibre
                }
            }
            RegionClass::Epidermis => {
                let band = 15.0 * (2.0 * PI * (x - s.x).hypot(y - s.y) / 3.0).sin();
                if rng.random::<f64>() < 0.2 {
                    band - 60.0
                } else {
                    band
                }
            }
            RegionClass::Lumen => 0.0,
        };
        let px = [0, 1, 2].map(|k| base[k] + shade + jitter(&mut rng, spec.noise));
        data.extend_from_slice(&finish(px, &stain));
    }
    let image = RasterImage::new(w, h, data, Magnification::x1_25()).expect("consistent buffer");

    let targets = [RegionClass::Tumour, RegionClass::Stroma, RegionClass::Epidermis, RegionClass::Tumour];
    let mut tiles: Vec<SynthTile> = Vec::new();
    let mut placed_rects: Vec<[u64; 2]> = Vec::new();
    for t in 0..spec.tiles_per_image {
        let target = targets[t % targets.len()];
        let origin = place_tile(spec, &seeds, &owner, target, &placed_rects, &mut rng);
        placed_rects.push(origin);
        let tile_seed = substream(spec.seed, &format!("synth/{id}/tile{t}"));
        let tile_id = format!("t{t}");
        tiles.push(render_tile(spec, &seeds, origin, target, tile_id, &stain, tile_seed));
    }

    SynthImage {
        id: id.to_string(),
        split,
        image,
        regions,
        tiles,
    }
}

/// Tile origin at 20x: centred near a random pixel of the target class,
/// preferring tiles dominated by that class and not overlapping earlier tiles.
fn place_tile(
    spec: &SyntheticSpec,
    seeds: &[VoronoiSeed],
    owner: &[usize],
    target: RegionClass,
    taken: &[[u64; 2]],
    rng: &mut ChaCha8Rng,
) -> [u64; 2] {
    let f = REGION_DOWNSCALE as usize;
    let (ew, eh) = (spec.width * f, spec.height * f);
    let ts = spec.tile_size;
    let candidates: Vec<usize> = (0..owner.len()).filter(|&i| seeds[owner[i]].class == target).collect();
    let mut best: Option<(f64, [u64; 2])> = None;
    for _ in 0..200 {
        let centre = if candidates.is_empty() {
            rng.random_range(0..owner.len())
        } else {
            candidates[rng.random_range(0..candidates.len())]
        };
        let (cx, cy) = ((centre % spec.width) * f + f / 2, (centre / spec.width) * f + f / 2);
        let ox = cx.saturating_sub(ts / 2).min(ew - ts) as u64;
        let oy = cy.saturating_sub(ts / 2).min(eh - ts) as u64;
        let overlaps = taken
            .iter()
            .any(|o| o[0] < ox + ts as u64 && ox < o[0] + ts as u64 && o[1] < oy + ts as u64 && oy < o[1] + ts as u64);
        let mut hits = 0;
        let mut n = 0;
        for yy in (oy as usize..oy as usize + ts).step_by(8) {
            for xx in (ox as usize..ox as usize + ts).step_by(8) {
                let (u, v) = to_region_coords(xx as f64, yy as f64);
                n += 1;
                if seeds[nearest_seed(seeds, u, v)].class == target {
                    hits += 1;
                }
            }
        }
        let score = hits as f64 / n as f64 - if overlaps { 2.0 } else { 0.0 };
        if best.is_none_or(|(s, _)| score > s) {
            best = Some((score, [ox, oy]));
        }
        if score >= 0.8 {
            break;
        }
    }
    best.expect("at least one attempt").1
}

/// 20x pixel centre to continuous 1.25x coordinates.
fn to_region_coords(x: f64, y: f64) -> (f64, f64) {
    let f = f64::from(REGION_DOWNSCALE);
    ((x + 0.5) / f - 0.5, (y + 0.5) / f - 0.5)
}

/// Speckle fraction, grain and tone of a nucleus. Cancer and epidermis
/// ranges overlap so that appearance alone does not separate them.
fn sample_style(rng: &mut ChaCha8Rng, class: CellClass) -> (f64, f64, f64) {
    match class {
        CellClass::Cancer => (rng.random_range(0.12..0.40), rng.random_range(9.0..15.0), rng.random_range(-10.0..6.0)),
        CellClass::Epidermis => (rng.random_range(0.02..0.28), rng.random_range(6.0..12.0), rng.random_range(-4.0..12.0)),
        CellClass::Lymphocyte => (0.0, 6.0, rng.random_range(-5.0..5.0)),
        CellClass::Stromal => (0.0, 8.0, rng.random_range(-5.0..5.0)),
    }
}

fn sample_shape(rng: &mut ChaCha8Rng, class: CellClass, fibre_angle: f64) -> (f64, f64, f64) {
    match class {
        CellClass::Cancer => {
            let a = rng.random_range(8.0..11.0);
            (a, a * rng.random_range(0.72..0.92), rng.random_range(0.0..PI))
        }
        CellClass::Epidermis => {
            let a = rng.random_range(7.5..10.5);
            (a, a * rng.random_range(0.72..0.92), rng.random_range(0.0..PI))
        }
        CellClass::Lymphocyte => {
            let r = rng.random_range(4.5..6.0);
            (r, r * rng.random_range(0.9..1.0), rng.random_range(0.0..PI))
        }
        CellClass::Stromal => (
            rng.random_range(10.0..14.0),
            rng.random_range(3.5..5.0),
            fibre_angle + rng.random_range(-0.3..0.3),
        ),
    }
}

fn render_tile(
    spec: &SyntheticSpec,
    seeds: &[VoronoiSeed],
    origin: [u64; 2],
    target: RegionClass,
    id: String,
    stain: &[f64; 3],
    seed: u64,
) -> SynthTile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ts = spec.tile_size;
    let (ox, oy) = (origin[0] as f64, origin[1] as f64);
    let owner: Vec<usize> = (0..ts * ts)
        .map(|i| {
            let (u, v) = to_region_coords(ox + (i % ts) as f64, oy + (i / ts) as f64);
            nearest_seed(seeds, u, v)
        })
        .collect();
    let density_at = |x: usize, y: usize| {
        let o = owner[y * ts + x];
        let (u, v) = to_region_coords(ox + x as f64, oy + y as f64);
        if boundary_distance(seeds, o, u, v) < spec.boundary_clearance {
            0.0
        } else {
            spec.nucleus_density[seeds[o].class.index()]
        }
    };

    // Nuclei stay clear of the tile border so the ground truth is whole.
    let margin = 16usize;
    let dmax = spec.nucleus_density.iter().cloned().fold(0.0, f64::max);
    let mut expected = 0.0;
    for y in margin..ts - margin {
        for x in margin..ts - margin {
            expected += density_at(x, y) / 1e4;
        }
    }
    let want = expected.round() as usize;
    let mut nuclei: Vec<PaintedNucleus> = Vec::with_capacity(want);
    let mut attempts = 0;
    while nuclei.len() < want && attempts < 500 * want.max(1) && dmax > 0.0 {
        attempts += 1;
        let x = rng.random_range(margin as f64..(ts - margin) as f64);
        let y = rng.random_range(margin as f64..(ts - margin) as f64);
        let s = &seeds[owner[(y as usize) * ts + x as usize]];
        let density = density_at(x as usize, y as usize);
        if rng.random::<f64>() >= density / dmax {
            continue;
        }
        let class = CellClass::ALL[pick(&mut rng, &spec.cell_mix[s.class.index()])];
        let (a, b, angle) = sample_shape(&mut rng, class, s.angle);
        let (speckle, grain, tone) = sample_style(&mut rng, class);
        let halo = matches!(class, CellClass::Cancer | CellClass::Epidermis);
        let reach = |n: &PaintedNucleus| if n.halo { n.a * HALO_SCALE } else { n.a };
        let cand = PaintedNucleus {
            x,
            y,
            a,
            b,
            angle,
            class,
            halo,
            speckle,
            grain,
            tone,
        };
        if nuclei.iter().any(|n| (n.x - x).hypot(n.y - y) < n.a + a + 3.0)
            || nuclei.iter().any(|n| (n.x - x).hypot(n.y - y) < reach(n).max(reach(&cand)) + a.min(n.a))
        {
            continue;
        }
        nuclei.push(cand);
    }
    // Raster order of centres gives a stable ground-truth ordering.
    nuclei.sort_by(|p, q| (p.y, p.x).partial_cmp(&(q.y, q.x)).expect("finite"));

    let mut data = Vec::with_capacity(ts * ts * 3);
    for (i, &o) in owner.iter().enumerate() {
        let (x, y) = ((i % ts) as f64, (i / ts) as f64);
        let s = &seeds[o];
        let base = spec.tile_palette[s.class.index()].map(f64::from);
        let (gx, gy) = (ox + x, oy + y);
        let shade = match s.class {
            RegionClass::Stroma => 10.0 * (2.0 * PI * (gx * s.angle.cos() + gy * s.angle.sin()) / 14.0).sin(),
            RegionClass::Epidermis => 5.0 * (2.0 * PI * gy / 40.0).sin(),
            _ => 0.0,
        };
        let mut c = base.map(|v| v + shade);
        let mut nucleus_noise = None;
        for n in &nuclei {
            if n.contains(x, y, 1.0) {
                let mut col = spec.nucleus_palette[n.class.index()].map(|v| f64::from(v) + n.tone);
                if n.speckle > 0.0 && rng.random::<f64>() < n.speckle {
                    col = col.map(|v| v - 30.0);
                }
                c = col;
                nucleus_noise = Some(n.grain);
                break;
            }
            if n.halo && n.contains(x, y, HALO_SCALE) {
                c = spec.cytoplasm_color.map(f64::from);
            }
        }
        let amp = nucleus_noise.unwrap_or(spec.noise * 0.75);
        let px = [0, 1, 2].map(|k| c[k] + jitter(&mut rng, amp));
        data.extend_from_slice(&finish(px, stain));
    }
    SynthTile {
        id,
        origin,
        image: RasterImage::new(ts, ts, data, Magnification::x20()).expect("consistent buffer"),
        nuclei,
        target,
        expected,
    }
}

/// Generated nucleus count of one tile against its expected density.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TileCheck {
    pub image: String,
    pub tile: String,
    pub target: RegionClass,
    pub expected: f64,
    pub placed: usize,
}

impl TileCheck {
    pub fn within(&self, tolerance: f64) -> bool {
        (self.placed as f64 - self.expected).abs() <= tolerance * self.expected.max(1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSummary {
    pub manifest_path: PathBuf,
    pub manifest: CorpusManifest,
    pub checks: Vec<TileCheck>,
}

/// Renders the whole corpus in memory, images in manifest order.
pub fn render_corpus(spec: &SyntheticSpec) -> Result<Vec<SynthImage>> {
    spec.validate()?;
    Ok(image_ids(spec)
        .into_par_iter()
        .map(|(id, split)| render_image(spec, &id, split))
        .collect())
}

/// Writes images, region JSON, tiles, cell CSVs and `manifest.json` under `out`.
pub fn generate_synthetic(spec: &SyntheticSpec, out: &Path) -> Result<SynthSummary> {
    let images = render_corpus(spec)?;
    for sub in ["images", "regions", "tiles", "cells"] {
        let d = out.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let mut entries = Vec::with_capacity(images.len());
    let mut checks = Vec::new();
    for img in &images {
        let image_rel = PathBuf::from(format!("images/{}.png", img.id));
        save_rgb(&out.join(&image_rel), &img.image)?;
        let regions_rel = PathBuf::from(format!("regions/{}.json", img.id));
        let text = serde_json::to_string_pretty(&img.region_annotations()).map_err(|e| Error::Parse(e.to_string()))?;
        let p = out.join(&regions_rel);
        std::fs::write(&p, text + "\n").map_err(|e| Error::io(&p, e))?;
        let mut tiles = Vec::with_capacity(img.tiles.len());
        for t in &img.tiles {
            let path = PathBuf::from(format!("tiles/{}_{}.png", img.id, t.id));
            save_rgb(&out.join(&path), &t.image)?;
            let cells_rel = PathBuf::from(format!("cells/{}_{}.csv", img.id, t.id));
            let cells: Vec<CellAnnotation> = t
                .nuclei
                .iter()
                .map(|n| CellAnnotation {
                    x: n.x,
                    y: n.y,
                    class: n.class,
                })
                .collect();
            write_cell_annotations(&out.join(&cells_rel), &cells)?;
            checks.push(TileCheck {
                image: img.id.clone(),
                tile: t.id.clone(),
                target: t.target,
                expected: t.expected,
                placed: t.nuclei.len(),
            });
            tiles.push(TileEntry {
                id: t.id.clone(),
                path,
                origin: t.origin,
                cells: Some(cells_rel),
            });
        }
        let mag = Magnification::x1_25();
        entries.push(ManifestEntry {
            id: img.id.clone(),
            image: image_rel,
            magnification: mag.tag,
            pixel_size_um: mag.pixel_size_um,
            regions: Some(regions_rel),
            tiles,
            split: img.split,
        });
    }
    for c in checks.iter().filter(|c| !c.within(0.1)) {
        log::warn!(
            "tile {}/{} holds {} nuclei, expected {:.1}",
            c.image,
            c.tile,
            c.placed,
            c.expected
        );
    }
    let manifest = CorpusManifest {
        images: entries,
        root: out.to_path_buf(),
    };
    let manifest_path = out.join("manifest.json");
    manifest.save(&manifest_path)?;
    Ok(SynthSummary {
        manifest_path,
        manifest,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::superpix::class_at;

    fn small() -> SyntheticSpec {
        SyntheticSpec {
            train_images: 1,
            test_images: 1,
            width: 120,
            height: 100,
            voronoi_seeds: 5,
            tiles_per_image: 2,
            tile_size: 128,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn polygons_partition_the_image() {
        let img = render_image(&small(), "a", Split::Train);
        let (w, h) = (img.image.width(), img.image.height());
        let mut covered = 0;
        for y in 0..h {
            for x in 0..w {
                if let Ok(Some(_)) = class_at(&img.regions, [x as f64 + 0.25, y as f64 + 0.25]) {
                    covered += 1;
                }
            }
        }
        assert!(covered as f64 >= 0.99 * (w * h) as f64, "{covered}");
        let area: f64 = img
            .regions
            .iter()
            .map(|r| {
                let p = &r.polygon;
                (0..p.len())
                    .map(|i| {
                        let (a, b) = (p[i], p[(i + 1) % p.len()]);
                        a[0] * b[1] - b[0] * a[1]
                    })
                    .sum::<f64>()
                    .abs()
                    / 2.0
            })
            .sum();
        assert!((area - (w * h) as f64).abs() < 1e-6, "{area}");
    }

    #[test]
    fn all_four_classes_present() {
        let img = render_image(&small(), "b", Split::Test);
        for c in RegionClass::ALL {
            assert!(img.regions.iter().any(|r| r.class == c));
        }
    }

    #[test]
    fn same_seed_same_pixels() {
        let s = small();
        assert_eq!(render_image(&s, "a", Split::Train), render_image(&s, "a", Split::Train));
        let other = SyntheticSpec { seed: 8, ..small() };
        assert_ne!(render_image(&s, "a", Split::Train).image, render_image(&other, "a", Split::Train).image);
    }

    #[test]
    fn nuclei_disjoint_and_inside() {
        let img = render_image(&small(), "c", Split::Train);
        for t in &img.tiles {
            for (i, n) in t.nuclei.iter().enumerate() {
                assert!(n.x - n.a >= 0.0 && n.y - n.a >= 0.0);
                for m in &t.nuclei[i + 1..] {
                    assert!((n.x - m.x).hypot(n.y - m.y) >= n.a + m.a);
                }
            }
        }
    }

    #[test]
    fn clip_square_by_diagonal() {
        let sq = vec![[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]];
        let tri = clip_half_plane(&sq, [1.0, 1.0], 2.0);
        assert_eq!(tri, vec![[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]]);
    }

    #[test]
    fn default_tiles_meet_density() {
        let s = SyntheticSpec::default();
        let img = render_image(&s, "train_00", Split::Train);
        for t in &img.tiles {
            assert!((t.nuclei.len() as f64 - t.expected).abs() <= 0.1 * t.expected.max(1.0), "{} {}", t.nuclei.len(), t.expected);
        }
    }
}
