//! Versioned feature schemas. The markdown rendering is shipped as
//! `docs/feature_schema.md`; its per-task hash is stored in model bundles.

use sha2::{Digest, Sha256};

use crate::cellfeat::{morphology_names, CELL_SCHEMA_VERSION, LOCAL_NAMES};
use crate::regionfeat::{uniform_bins, HARALICK_NAMES, HISTOGRAM_NAMES, SFTA_NAMES};
use crate::superpix::RegionClass;

pub const REGION_SCHEMA_VERSION: &str = "region-1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureDescriptor {
    pub index: usize,
    pub name: String,
    pub family: &'static str,
    pub definition: String,
}

const HISTOGRAM_DEFS: [&str; 7] = [
    "mean HSV hue in degrees over the superpixel",
    "mean HSV saturation",
    "mean HSV value",
    "sum of gray levels",
    "max gray minus min gray",
    "population standard deviation of gray",
    "Shannon entropy (bits) of the 256-bin gray histogram",
];

const HARALICK_DEFS: [&str; 12] = [
    "sum p(i,j)^2",
    "sum over n of n^2 p_{x-y}(n)",
    "(sum ij p(i,j) - mu_x mu_y) / (sigma_x sigma_y); 1 when either marginal has a single level",
    "sum (i - mu)^2 p(i,j)",
    "sum p(i,j) / (1 + (i-j)^2)",
    "sum k p_{x+y}(k)",
    "sum (k - f6)^2 p_{x+y}(k)",
    "-sum p_{x+y}(k) ln p_{x+y}(k)",
    "-sum p(i,j) ln p(i,j)",
    "variance of p_{x-y}",
    "-sum p_{x-y}(n) ln p_{x-y}(n)",
    "(HXY - HXY1) / max(HX, HY); 0 when max(HX, HY) = 0",
];

const SFTA_DEFS: [&str; 7] = [
    "box-counting dimension of the border of the low set (gray <= Otsu t)",
    "mean gray of the low set",
    "pixel count of the low set",
    "box-counting dimension of the border of the high set (gray > Otsu t)",
    "mean gray of the high set",
    "pixel count of the high set",
    "box-counting dimension of the low/high edge map",
];

const HARALICK_NOTE: &str = "32 gray levels, distance 1, mean of 0/45/90/135 degree symmetric GLCMs";

pub fn region_schema() -> Vec<FeatureDescriptor> {
    let mut out = Vec::with_capacity(85);
    let mut push = |name: String, family: &'static str, definition: String| {
        out.push(FeatureDescriptor {
            index: out.len(),
            name,
            family,
            definition,
        })
    };
    for (n, d) in HISTOGRAM_NAMES.iter().zip(HISTOGRAM_DEFS) {
        push(n.to_string(), "hist", d.to_string());
    }
    for (n, d) in HARALICK_NAMES.iter().zip(HARALICK_DEFS) {
        push(n.to_string(), "haralick", format!("{d}; {HARALICK_NOTE}"));
    }
    let bins = uniform_bins();
    for b in 0..58u8 {
        let code = (0..=255u8).find(|&c| bins[c as usize] == b).expect("58 uniform codes");
        push(
            format!("lbp_uniform_{b:02}"),
            "rilbp",
            format!("fraction of interior pixels with LBP code {code:08b}"),
        );
    }
    push(
        "lbp_nonuniform".into(),
        "rilbp",
        "fraction of interior pixels with a code of more than 2 transitions".into(),
    );
    for (n, d) in SFTA_NAMES.iter().zip(SFTA_DEFS) {
        push(n.to_string(), "sfta", d.to_string());
    }
    out
}

fn morphology_definition(name: &str) -> String {
    let geometry = match name {
        "area" => "pixel count of the mask",
        "perimeter" => "length of the outer 8-connected contour (1 axial, sqrt 2 diagonal)",
        "circularity" => "4 pi area / perimeter^2",
        "eccentricity" => "sqrt(1 - l2/l1) of the second central moments",
        "major_axis" => "4 sqrt(l1)",
        "minor_axis" => "4 sqrt(l2)",
        "orientation" => "0.5 atan2(2 mu11, mu20 - mu02) in radians",
        "solidity" => "area / convex_area",
        "extent" => "area / bounding-box area",
        "equivalent_diameter" => "sqrt(4 area / pi)",
        "convex_area" => "area of the convex hull of pixel corners",
        "convex_perimeter" => "perimeter of the convex hull of pixel corners",
        "radius_mean" => "mean centroid distance of border pixels",
        "radius_sd" => "population SD of border-pixel centroid distances",
        "radius_min" => "minimum border-pixel centroid distance",
        "radius_max" => "maximum border-pixel centroid distance",
        "bbox_width" => "bounding-box width",
        "bbox_height" => "bounding-box height",
        "axis_ratio" => "minor_axis / major_axis; 1 for a single pixel",
        "roughness" => "perimeter / convex_perimeter",
        "hu1" => "eta20 + eta02",
        "hu2" => "(eta20 - eta02)^2 + 4 eta11^2",
        "hu3" => "(eta30 - 3 eta12)^2 + (3 eta21 - eta03)^2",
        _ => "",
    };
    if !geometry.is_empty() {
        return geometry.to_string();
    }
    if let Some(h) = name.strip_prefix("nucleus_") {
        let i = HARALICK_NAMES.iter().position(|n| *n == h).expect("haralick name");
        return format!("{} on the gray nucleus patch; {HARALICK_NOTE}", HARALICK_DEFS[i]);
    }
    let (channel, stat) = name.split_once('_').expect("channel_stat");
    let what = match stat {
        "mean" => "mean",
        "sd" => "population SD",
        "min" => "minimum",
        "max" => "maximum",
        "q25" => "25th percentile (linear interpolation)",
        "median" => "median",
        "q75" => "75th percentile (linear interpolation)",
        "iqr" => "q75 - q25",
        "mad" => "median absolute deviation from the median",
        "skewness" => "m3 / m2^1.5; 0 when SD is 0",
        "kurtosis" => "m4 / m2^2; 0 when SD is 0",
        "entropy" => "Shannon entropy (bits) of the 256-bin histogram",
        "boundary_mean" => "mean over border pixels",
        "interior_mean" => "mean over non-border pixels; boundary mean if none",
        _ => unreachable!("unknown statistic {stat}"),
    };
    format!("{what} of {channel} over the nucleus mask")
}

pub fn cell_schema() -> Vec<FeatureDescriptor> {
    let mut out: Vec<FeatureDescriptor> = morphology_names()
        .into_iter()
        .enumerate()
        .map(|(i, n)| FeatureDescriptor {
            index: i,
            definition: morphology_definition(&n),
            family: if i < 23 {
                "geometry"
            } else if i < 79 {
                "intensity"
            } else {
                "texture"
            },
            name: n,
        })
        .collect();
    let local_defs = [
        "other nuclei with centroid within 25 um",
        "Gaussian KDE of centroids (bandwidth 50 um) at this centroid, self included, per um^2",
        "non-nucleus pixels within 25 um whose red is <= the Otsu threshold of red over those pixels",
    ];
    for (n, d) in LOCAL_NAMES.iter().zip(local_defs) {
        out.push(FeatureDescriptor {
            index: out.len(),
            name: n.to_string(),
            family: "local_context",
            definition: d.to_string(),
        });
    }
    for r in RegionClass::ALL {
        out.push(FeatureDescriptor {
            index: out.len(),
            name: format!("region_{}", r.name()),
            family: "global_context",
            definition: format!("1 if the enclosing superpixel is {}, else 0", r.name()),
        });
    }
    out
}

fn table(title: &str, version: &str, rows: &[FeatureDescriptor]) -> String {
    let mut s = format!("## {title}\n\nSchema version `{version}`, {} features.\n\n", rows.len());
    s.push_str("| index | name | family | definition |\n|---:|---|---|---|\n");
    for r in rows {
        s.push_str(&format!("| {} | `{}` | {} | {} |\n", r.index, r.name, r.family, r.definition));
    }
    s
}

fn hash(version: &str, rows: &[FeatureDescriptor]) -> String {
    let mut h = Sha256::new();
    h.update(version.as_bytes());
    h.update(b"\n");
    for r in rows {
        h.update(format!("{}\t{}\t{}\t{}\n", r.index, r.name, r.family, r.definition).as_bytes());
    }
    hex::encode(h.finalize())
}

pub fn region_schema_hash() -> String {
    hash(REGION_SCHEMA_VERSION, &region_schema())
}

/// Hash of the first `dimension` cell features (94 without global context,
/// 98 with it).
pub fn cell_schema_hash(dimension: usize) -> String {
    let rows = cell_schema();
    hash(CELL_SCHEMA_VERSION, &rows[..dimension.min(rows.len())])
}

/// Full markdown document describing both schemas.
pub fn schema_markdown() -> String {
    let mut s = String::from("# Feature schema\n\nGenerated from the library; do not edit by hand.\n\n");
    s.push_str(&table("Superpixel features", REGION_SCHEMA_VERSION, &region_schema()));
    s.push('\n');
    s.push_str(&table("Cell features", CELL_SCHEMA_VERSION, &cell_schema()));
    s.push_str(&format!(
        "\n## Hashes\n\n- superpixel: `{}`\n- cell (94): `{}`\n- cell (98): `{}`\n",
        region_schema_hash(),
        cell_schema_hash(94),
        cell_schema_hash(98)
    ));
    s
}
