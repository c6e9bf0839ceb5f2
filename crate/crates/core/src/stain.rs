//! Reinhard color normalization: per-channel mean and standard deviation
//! matching in lαβ space.

use serde::{Deserialize, Serialize};

use crate::imgcore::{
    lalphabeta_to_rgb, rgb_to_lalphabeta, LalphabetaPlanes, RasterImage,
};

/// Population mean and SD of the three lαβ channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean_l: f64,
    pub mean_alpha: f64,
    pub mean_beta: f64,
    pub sd_l: f64,
    pub sd_alpha: f64,
    pub sd_beta: f64,
}

impl ChannelStats {
    pub fn from_arrays(mean: [f64; 3], sd: [f64; 3]) -> Self {
        ChannelStats {
            mean_l: mean[0],
            mean_alpha: mean[1],
            mean_beta: mean[2],
            sd_l: sd[0],
            sd_alpha: sd[1],
            sd_beta: sd[2],
        }
    }

    pub fn mean(&self) -> [f64; 3] {
        [self.mean_l, self.mean_alpha, self.mean_beta]
    }

    pub fn sd(&self) -> [f64; 3] {
        [self.sd_l, self.sd_alpha, self.sd_beta]
    }
}

fn plane_stats(planes: &LalphabetaPlanes) -> ChannelStats {
    let mut mean = [0.0; 3];
    let mut sd = [0.0; 3];
    for c in 0..3 {
        let p = &planes.planes[c];
        let n = p.len() as f64;
        let m = p.iter().sum::<f64>() / n;
        let var = p.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
        mean[c] = m;
        sd[c] = var.sqrt();
    }
    ChannelStats::from_arrays(mean, sd)
}

/// lαβ statistics of an image over all pixels.
pub fn compute_stats(img: &RasterImage) -> ChannelStats {
    plane_stats(&rgb_to_lalphabeta(img))
}

/// Maps the image's lαβ statistics onto `target`.
///
/// Channels with zero source SD map every pixel to the target mean.
pub fn reinhard_normalize(src: &RasterImage, target: &ChannelStats) -> RasterImage {
    let mut planes = rgb_to_lalphabeta(src);
    let stats = plane_stats(&planes);
    let (sm, ss) = (stats.mean(), stats.sd());
    let (tm, ts) = (target.mean(), target.sd());
    for c in 0..3 {
        let plane = &mut planes.planes[c];
        if ss[c] == 0.0 {
            plane.iter_mut().for_each(|v| *v = tm[c]);
        } else {
            let scale = ts[c] / ss[c];
            plane.iter_mut().for_each(|v| *v = (*v - sm[c]) * scale + tm[c]);
        }
    }
    lalphabeta_to_rgb(&planes, src.magnification.clone())
}
