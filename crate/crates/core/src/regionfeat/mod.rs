//! The 85-value superpixel descriptor: 7 histogram, 12 Haralick, 59 uniform
//! LBP and 7 fractal texture features, in that order.

mod haralick;
mod histogram;
mod lbp;
mod sfta;

pub use haralick::{
    features_from_glcm, glcm, haralick_features, haralick_features_with_levels, DIRECTIONS, GLCM_LEVELS,
    HARALICK_NAMES,
};
pub use histogram::{histogram_features, HISTOGRAM_NAMES};
pub use lbp::{lbp_code, rilbp_features, transitions, uniform_bins, LBP_BINS};
pub use sfta::{border, box_counting_dimension, sfta_features, BOX_SCALES, SFTA_NAMES};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{rgb_to_hsv, to_gray, BinaryMask, GrayImage, HsvPlanes, RasterImage};

pub const REGION_FEATURE_LEN: usize = 85;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureFamily {
    Histogram,
    Haralick,
    Rilbp,
    Sfta,
}

impl FeatureFamily {
    pub const ALL: [FeatureFamily; 4] = [
        FeatureFamily::Histogram,
        FeatureFamily::Haralick,
        FeatureFamily::Rilbp,
        FeatureFamily::Sfta,
    ];

    pub fn len(self) -> usize {
        match self {
            FeatureFamily::Histogram => 7,
            FeatureFamily::Haralick => 12,
            FeatureFamily::Rilbp => LBP_BINS,
            FeatureFamily::Sfta => 7,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureFamily::Histogram => "hist",
            FeatureFamily::Haralick => "haralick",
            FeatureFamily::Rilbp => "rilbp",
            FeatureFamily::Sfta => "sfta",
        }
    }

    fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

/// A subset of feature families, always iterated in schema order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "Vec<FeatureFamily>", from = "Vec<FeatureFamily>")]
pub struct FamilySet(u8);

impl FamilySet {
    pub const ALL: FamilySet = FamilySet(0b1111);

    pub fn of(families: &[FeatureFamily]) -> Self {
        FamilySet(families.iter().fold(0, |acc, f| acc | f.bit()))
    }

    pub fn contains(self, f: FeatureFamily) -> bool {
        self.0 & f.bit() != 0
    }

    pub fn iter(self) -> impl Iterator<Item = FeatureFamily> {
        FeatureFamily::ALL.into_iter().filter(move |f| self.contains(*f))
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Total vector length for this subset.
    pub fn dimension(self) -> usize {
        self.iter().map(FeatureFamily::len).sum()
    }

    /// Parses names such as `hist+haralick`.
    pub fn parse(s: &str) -> Result<Self> {
        let mut set = FamilySet(0);
        for part in s.split('+').map(str::trim) {
            let f = FeatureFamily::ALL
                .into_iter()
                .find(|f| f.name() == part)
                .ok_or_else(|| Error::Parse(format!("unknown feature family {part:?}")))?;
            set.0 |= f.bit();
        }
        Ok(set)
    }
}

impl From<Vec<FeatureFamily>> for FamilySet {
    fn from(v: Vec<FeatureFamily>) -> Self {
        FamilySet::of(&v)
    }
}

impl From<FamilySet> for Vec<FeatureFamily> {
    fn from(s: FamilySet) -> Self {
        s.iter().collect()
    }
}

impl fmt::Display for FamilySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.iter().map(FeatureFamily::name).collect();
        f.write_str(&names.join("+"))
    }
}

/// Per-image planes shared by all superpixels of that image.
#[derive(Debug, Clone)]
pub struct RegionPlanes {
    pub gray: GrayImage,
    pub hsv: HsvPlanes,
}

impl RegionPlanes {
    pub fn new(img: &RasterImage) -> Self {
        RegionPlanes {
            gray: to_gray(img),
            hsv: rgb_to_hsv(img),
        }
    }

    pub fn width(&self) -> usize {
        self.gray.width
    }

    pub fn height(&self) -> usize {
        self.gray.height
    }
}

/// Feature values of one superpixel for a family subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionFeatureVector {
    pub values: Vec<f64>,
    pub families: FamilySet,
    /// Families that were zero-filled because the texture was degenerate.
    pub degenerate: Vec<FeatureFamily>,
    pub schema_version: String,
}

/// Gray patch and mask over the rectangle `[x0,x1) × [y0,y1)`.
fn patch(planes: &RegionPlanes, pixels: &[u32], rect: (usize, usize, usize, usize)) -> (GrayImage, BinaryMask) {
    let (x0, y0, x1, y1) = rect;
    let w = planes.width();
    let (pw, ph) = (x1 - x0, y1 - y0);
    let gray = GrayImage::from_fn(pw, ph, |x, y| planes.gray.get(x0 + x, y0 + y)).expect("non-empty patch");
    let mut mask = BinaryMask::new(pw, ph);
    for &p in pixels {
        let (x, y) = (p as usize % w, p as usize / w);
        mask.set(x - x0, y - y0, true);
    }
    (gray, mask)
}

fn bbox(pixels: &[u32], width: usize) -> (usize, usize, usize, usize) {
    let mut b = (usize::MAX, usize::MAX, 0, 0);
    for &p in pixels {
        let (x, y) = (p as usize % width, p as usize / width);
        b = (b.0.min(x), b.1.min(y), b.2.max(x + 1), b.3.max(y + 1));
    }
    b
}

/// Feature vector of the superpixel made of `pixels` (raster indices).
///
/// Texture families that are degenerate on this superpixel (for example a
/// flat white lumen region) are zero-filled and reported in `degenerate`.
pub fn region_feature_vector(pixels: &[u32], planes: &RegionPlanes, families: FamilySet) -> Result<RegionFeatureVector> {
    region_feature_vector_with_levels(pixels, planes, families, GLCM_LEVELS)
}

/// As [`region_feature_vector`] with a custom GLCM quantization.
pub fn region_feature_vector_with_levels(
    pixels: &[u32],
    planes: &RegionPlanes,
    families: FamilySet,
    glcm_levels: usize,
) -> Result<RegionFeatureVector> {
    if pixels.is_empty() {
        return Err(Error::InvalidArgument("superpixel has no pixels".into()));
    }
    let (w, h) = (planes.width(), planes.height());
    let tight = bbox(pixels, w);
    let mut values = Vec::with_capacity(families.dimension());
    let mut degenerate = Vec::new();
    for family in families.iter() {
        let result: Result<Vec<f64>> = match family {
            FeatureFamily::Histogram => Ok(histogram_features(pixels, planes).to_vec()),
            FeatureFamily::Haralick => {
                let (g, m) = patch(planes, pixels, tight);
                haralick_features_with_levels(&g, &m, glcm_levels).map(|f| f.to_vec())
            }
            FeatureFamily::Rilbp => {
                // One pixel of context so boundary members keep their neighbours.
                let grown = (
                    tight.0.saturating_sub(1),
                    tight.1.saturating_sub(1),
                    (tight.2 + 1).min(w),
                    (tight.3 + 1).min(h),
                );
                let (g, m) = patch(planes, pixels, grown);
                rilbp_features(&g, &m).map(|f| f.to_vec())
            }
            FeatureFamily::Sfta => {
                let (g, m) = patch(planes, pixels, tight);
                sfta_features(&g, &m).map(|f| f.to_vec())
            }
        };
        match result {
            Ok(v) => values.extend(v),
            Err(Error::DegenerateTexture(why)) => {
                log::debug!("zero-filling {} features: {why}", family.name());
                degenerate.push(family);
                values.extend(std::iter::repeat_n(0.0, family.len()));
            }
            Err(e) => return Err(e),
        }
    }
    debug_assert!(values.iter().all(|v| v.is_finite()));
    Ok(RegionFeatureVector {
        values,
        families,
        degenerate,
        schema_version: crate::schema::REGION_SCHEMA_VERSION.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgcore::Magnification;

    #[test]
    fn family_dimensions() {
        assert_eq!(FamilySet::ALL.dimension(), REGION_FEATURE_LEN);
        assert_eq!(FamilySet::of(&[FeatureFamily::Histogram]).dimension(), 7);
        assert_eq!(FamilySet::parse("hist+haralick").unwrap().dimension(), 19);
        assert_eq!(FamilySet::parse("sfta+hist").unwrap().to_string(), "hist+sfta");
        assert!(FamilySet::parse("gabor").is_err());
    }

    #[test]
    fn constant_gray_superpixel_histogram() {
        let img = RasterImage::filled(10, 10, [128, 128, 128], Magnification::x1_25()).unwrap();
        let planes = RegionPlanes::new(&img);
        let px: Vec<u32> = (0..100).collect();
        let f = histogram_features(&px, &planes);
        assert_eq!(f[0], 0.0);
        assert_eq!(f[1], 0.0);
        assert!((f[2] - 0.502).abs() < 1e-3);
        assert_eq!(&f[3..], &[12800.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn two_value_superpixel_histogram() {
        let img = RasterImage::from_fn(10, 10, Magnification::x1_25(), |x, _| if x < 5 { [0; 3] } else { [255; 3] })
            .unwrap();
        let planes = RegionPlanes::new(&img);
        let px: Vec<u32> = (0..100).collect();
        let f = histogram_features(&px, &planes);
        assert_eq!(f[4], 255.0);
        assert!((f[6] - 1.0).abs() < 1e-12);
        assert!((f[5] - 127.5).abs() < 1e-12);
    }

    #[test]
    fn full_vector_length_and_determinism() {
        let img = RasterImage::from_fn(30, 30, Magnification::x1_25(), |x, y| {
            [(x * 7 + y * 3) as u8, (x * y % 200) as u8, 120]
        })
        .unwrap();
        let planes = RegionPlanes::new(&img);
        let px: Vec<u32> = (0..900).filter(|i| i % 30 > 3).collect();
        let a = region_feature_vector(&px, &planes, FamilySet::ALL).unwrap();
        let b = region_feature_vector(&px, &planes, FamilySet::ALL).unwrap();
        assert_eq!(a.values.len(), 85);
        assert_eq!(a, b);
        let lbp: f64 = a.values[19..78].iter().sum();
        assert!((lbp - 1.0).abs() < 1e-12);
    }

    #[test]
    fn flat_superpixel_zero_fills_texture() {
        let img = RasterImage::filled(12, 12, [250, 250, 250], Magnification::x1_25()).unwrap();
        let planes = RegionPlanes::new(&img);
        let px: Vec<u32> = (0..144).collect();
        let v = region_feature_vector(&px, &planes, FamilySet::ALL).unwrap();
        assert_eq!(v.degenerate, vec![FeatureFamily::Sfta]);
        assert!(v.values[78..].iter().all(|&x| x == 0.0));
    }
}
