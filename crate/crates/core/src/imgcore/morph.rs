use super::{BinaryMask, LabelMap};

/// Offsets of a discrete disc: pixels within Euclidean distance `radius`.
fn disc_offsets(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let r2 = r * r;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r2 {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Erosion by a disc. Pixels outside the image count as foreground, so the
/// image border does not erode objects that touch it.
pub fn erode(mask: &BinaryMask, radius: usize) -> BinaryMask {
    let offsets = disc_offsets(radius);
    let (w, h) = (mask.width as isize, mask.height as isize);
    let mut out = BinaryMask::new(mask.width, mask.height);
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x as usize, y as usize) {
                continue;
            }
            let keep = offsets.iter().all(|&(dx, dy)| {
                let (nx, ny) = (x + dx, y + dy);
                nx < 0 || ny < 0 || nx >= w || ny >= h || mask.get(nx as usize, ny as usize)
            });
            if keep {
                out.set(x as usize, y as usize, true);
            }
        }
    }
    out
}

/// Dilation by a disc, clipped to the image.
pub fn dilate(mask: &BinaryMask, radius: usize) -> BinaryMask {
    let offsets = disc_offsets(radius);
    let (w, h) = (mask.width as isize, mask.height as isize);
    let mut out = BinaryMask::new(mask.width, mask.height);
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x as usize, y as usize) {
                continue;
            }
            for &(dx, dy) in &offsets {
                let (nx, ny) = (x + dx, y + dy);
                if nx >= 0 && ny >= 0 && nx < w && ny < h {
                    out.set(nx as usize, ny as usize, true);
                }
            }
        }
    }
    out
}

/// Morphological opening (erosion then dilation) with a disc of `radius`.
pub fn morph_open(mask: &BinaryMask, radius: usize) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    dilate(&erode(mask, radius), radius)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    pub(crate) fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(0, -1), (-1, 0), (1, 0), (0, 1)],
            Connectivity::Eight => &[
                (-1, -1),
                (0, -1),
                (1, -1),
                (-1, 0),
                (1, 0),
                (-1, 1),
                (0, 1),
                (1, 1),
            ],
        }
    }
}

/// Connected components of the foreground. Background is label 0 and
/// components are numbered from 1 in raster order of their first pixel.
pub fn connected_components(mask: &BinaryMask, conn: Connectivity) -> LabelMap {
    let (w, h) = (mask.width, mask.height);
    let mut labels = vec![0u32; w * h];
    let mut next = 1u32;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask.data[start] || labels[start] != 0 {
            continue;
        }
        labels[start] = next;
        stack.push(start);
        while let Some(p) = stack.pop() {
            let (x, y) = ((p % w) as isize, (p / w) as isize);
            for &(dx, dy) in conn.offsets() {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let q = ny as usize * w + nx as usize;
                if mask.data[q] && labels[q] == 0 {
                    labels[q] = next;
                    stack.push(q);
                }
            }
        }
        next += 1;
    }
    LabelMap {
        width: w,
        height: h,
        labels,
        num_labels: next as usize,
    }
}
