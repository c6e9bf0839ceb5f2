//! Simple linear iterative clustering over CIELAB planes.

use super::{SlicParams, Superpixel};
use crate::error::{Error, Result};
use crate::imgcore::{LabPlanes, LabelMap};

#[derive(Debug, Clone, Copy)]
struct Center {
    l: f32,
    a: f32,
    b: f32,
    x: f32,
    y: f32,
}

/// Segments `lab` into roughly `n` superpixels.
///
/// Labels in the returned map are contiguous (`0..K`), numbered in raster
/// order of each superpixel's first pixel, and every superpixel is
/// 4-connected.
pub fn slic_segment(lab: &LabPlanes, n: usize, params: &SlicParams) -> Result<(LabelMap, Vec<Superpixel>)> {
    params.validate()?;
    let (w, h) = (lab.width, lab.height);
    let npix = w * h;
    if n == 0 || n > npix {
        return Err(Error::InvalidArgument(format!(
            "superpixel count {n} must be in 1..={npix}"
        )));
    }
    let step = (npix as f64 / n as f64).sqrt();
    let mut centers = init_centers(lab, step);
    let spatial = (params.compactness / step).powi(2) as f32;
    let radius = step.ceil() as isize;

    let mut labels = initial_labels(w, h, grid_dims(w, h, step));
    let mut dist = vec![f32::INFINITY; npix];
    let mut col_cost: Vec<f32> = Vec::with_capacity(2 * radius as usize + 1);
    for _ in 0..params.iterations {
        dist.iter_mut().for_each(|d| *d = f32::INFINITY);
        for (k, c) in centers.iter().enumerate() {
            let cx = c.x.round() as isize;
            let cy = c.y.round() as isize;
            let x0 = (cx - radius).max(0) as usize;
            let x1 = ((cx + radius + 1).max(0) as usize).min(w);
            let y0 = (cy - radius).max(0) as usize;
            let y1 = ((cy + radius + 1).max(0) as usize).min(h);
            let (cl, ca, cb, kk) = (c.l, c.a, c.b, k as u32);
            col_cost.clear();
            col_cost.extend((x0..x1).map(|x| {
                let dx = x as f32 - c.x;
                dx * dx * spatial
            }));
            for y in y0..y1 {
                let row = y * w;
                let dy = y as f32 - c.y;
                let row_cost = dy * dy * spatial;
                let ls = &lab.l[row + x0..row + x1];
                let as_ = &lab.a[row + x0..row + x1];
                let bs = &lab.b[row + x0..row + x1];
                let ds = &mut dist[row + x0..row + x1];
                let labs = &mut labels[row + x0..row + x1];
                let cells = ls.iter().zip(as_).zip(bs).zip(&col_cost).zip(ds.iter_mut()).zip(labs.iter_mut());
                for (((((&l, &a), &b), &cc), d_best), lab_best) in cells {
                    let dl = l - cl;
                    let da = a - ca;
                    let db = b - cb;
                    let d = dl * dl + da * da + db * db + (cc + row_cost);
                    let take = u32::from(d >= *d_best).wrapping_sub(1);
                    *d_best = d.min(*d_best);
                    *lab_best = (*lab_best & !take) | (kk & take);
                }
            }
        }
        update_centers(lab, &labels, &mut centers);
    }

    let min_size = ((step * step) / 4.0).floor().max(1.0) as usize;
    let map = enforce_connectivity(w, h, &labels, centers.len(), min_size);
    let superpixels = super::superpixels_from_labels(&map);
    Ok((map, superpixels))
}

fn grad_at(lab: &LabPlanes, x: usize, y: usize) -> f32 {
    let (w, h) = (lab.width, lab.height);
    let at = |x: usize, y: usize| {
        let i = y * w + x;
        [lab.l[i], lab.a[i], lab.b[i]]
    };
    let d2 = |p: [f32; 3], q: [f32; 3]| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
    let gx = if x > 0 && x + 1 < w { d2(at(x + 1, y), at(x - 1, y)) } else { 0.0 };
    let gy = if y > 0 && y + 1 < h { d2(at(x, y + 1), at(x, y - 1)) } else { 0.0 };
    gx + gy
}

fn grid_dims(w: usize, h: usize, step: f64) -> (usize, usize) {
    let nx = ((w as f64 / step).round() as usize).clamp(1, w);
    let ny = ((h as f64 / step).round() as usize).clamp(1, h);
    (nx, ny)
}

fn init_centers(lab: &LabPlanes, step: f64) -> Vec<Center> {
    let (w, h) = (lab.width, lab.height);
    let (nx, ny) = grid_dims(w, h, step);
    let sx = w as f64 / nx as f64;
    let sy = h as f64 / ny as f64;
    let mut centers = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let gx = (((i as f64 + 0.5) * sx) as usize).min(w - 1);
            let gy = (((j as f64 + 0.5) * sy) as usize).min(h - 1);
            // Move to the lowest-gradient position of the 3x3 neighbourhood.
            let (mut bx, mut by, mut best) = (gx, gy, grad_at(lab, gx, gy));
            for y in gy.saturating_sub(1)..(gy + 2).min(h) {
                for x in gx.saturating_sub(1)..(gx + 2).min(w) {
                    let g = grad_at(lab, x, y);
                    if g < best {
                        (bx, by, best) = (x, y, g);
                    }
                }
            }
            let idx = by * w + bx;
            centers.push(Center {
                l: lab.l[idx],
                a: lab.a[idx],
                b: lab.b[idx],
                x: bx as f32,
                y: by as f32,
            });
        }
    }
    centers
}

/// Grid-cell labels used for pixels no search window reaches.
fn initial_labels(w: usize, h: usize, grid: (usize, usize)) -> Vec<u32> {
    let (nx, ny) = grid;
    let cols: Vec<u32> = (0..w).map(|x| (x * nx / w).min(nx - 1) as u32).collect();
    let mut labels = Vec::with_capacity(w * h);
    for y in 0..h {
        let j = ((y * ny / h).min(ny - 1) * nx) as u32;
        labels.extend(cols.iter().map(|&i| j + i));
    }
    labels
}

fn update_centers(lab: &LabPlanes, labels: &[u32], centers: &mut [Center]) {
    let w = lab.width;
    let mut sums = vec![[0f64; 6]; centers.len()];
    for (y, row) in labels.chunks_exact(w).enumerate() {
        let base = y * w;
        for (x, &k) in row.iter().enumerate() {
            let i = base + x;
            let s = &mut sums[k as usize];
            s[0] += f64::from(lab.l[i]);
            s[1] += f64::from(lab.a[i]);
            s[2] += f64::from(lab.b[i]);
            s[3] += x as f64;
            s[4] += y as f64;
            s[5] += 1.0;
        }
    }
    for (c, s) in centers.iter_mut().zip(&sums) {
        if s[5] > 0.0 {
            let n = s[5];
            *c = Center {
                l: (s[0] / n) as f32,
                a: (s[1] / n) as f32,
                b: (s[2] / n) as f32,
                x: (s[3] / n) as f32,
                y: (s[4] / n) as f32,
            };
        }
    }
}

/// Merges orphan fragments into their largest adjacent region.
///
/// A fragment is an orphan when it is not the largest 4-connected piece of
/// its cluster or when it is smaller than `min_size`.
pub(crate) fn enforce_connectivity(
    w: usize,
    h: usize,
    labels: &[u32],
    num_clusters: usize,
    min_size: usize,
) -> LabelMap {
    let npix = w * h;
    const UNSET: u32 = u32::MAX;
    let mut comp = vec![UNSET; npix];
    let mut comp_size: Vec<usize> = Vec::new();
    let mut comp_cluster: Vec<u32> = Vec::new();
    let mut stack = Vec::new();
    for start in 0..npix {
        if comp[start] != UNSET {
            continue;
        }
        let id = comp_size.len() as u32;
        let lab = labels[start];
        comp[start] = id;
        stack.push((start % w, start / w));
        let mut size = 0;
        while let Some((x, y)) = stack.pop() {
            size += 1;
            let p = y * w + x;
            let mut visit = |q: usize, qx: usize, qy: usize| {
                if comp[q] == UNSET && labels[q] == lab {
                    comp[q] = id;
                    stack.push((qx, qy));
                }
            };
            if x > 0 {
                visit(p - 1, x - 1, y);
            }
            if x + 1 < w {
                visit(p + 1, x + 1, y);
            }
            if y > 0 {
                visit(p - w, x, y - 1);
            }
            if y + 1 < h {
                visit(p + w, x, y + 1);
            }
        }
        comp_size.push(size);
        comp_cluster.push(lab);
    }
    let ncomp = comp_size.len();

    let mut largest: Vec<Option<usize>> = vec![None; num_clusters];
    for c in 0..ncomp {
        let k = comp_cluster[c] as usize;
        match largest[k] {
            Some(b) if comp_size[b] >= comp_size[c] => {}
            _ => largest[k] = Some(c),
        }
    }
    let orphan: Vec<bool> = (0..ncomp)
        .map(|c| largest[comp_cluster[c] as usize] != Some(c) || comp_size[c] < min_size)
        .collect();

    // Neighbouring components in CSR form; duplicates are harmless.
    let mut offsets = vec![0u32; ncomp + 1];
    let for_each_edge = |f: &mut dyn FnMut(u32, u32)| {
        for y in 0..h {
            let row = &comp[y * w..(y + 1) * w];
            for x in 0..w {
                let a = row[x];
                if x + 1 < w && row[x + 1] != a {
                    f(a, row[x + 1]);
                }
                if y + 1 < h && comp[(y + 1) * w + x] != a {
                    f(a, comp[(y + 1) * w + x]);
                }
            }
        }
    };
    for_each_edge(&mut |a, b| {
        offsets[a as usize + 1] += 1;
        offsets[b as usize + 1] += 1;
    });
    for c in 0..ncomp {
        offsets[c + 1] += offsets[c];
    }
    let mut fill = offsets.clone();
    let mut neighbours = vec![0u32; offsets[ncomp] as usize];
    for_each_edge(&mut |a, b| {
        neighbours[fill[a as usize] as usize] = b;
        fill[a as usize] += 1;
        neighbours[fill[b as usize] as usize] = a;
        fill[b as usize] += 1;
    });
    let adjacent = |c: u32| &neighbours[offsets[c as usize] as usize..offsets[c as usize + 1] as usize];

    const END: u32 = u32::MAX;
    let mut parent: Vec<u32> = (0..ncomp as u32).collect();
    let mut set_size = comp_size.clone();
    // Members of each set as a linked list of components.
    let head: Vec<u32> = (0..ncomp as u32).collect();
    let mut tail: Vec<u32> = (0..ncomp as u32).collect();
    let mut next = vec![END; ncomp];
    let mut anchored: Vec<bool> = orphan.iter().map(|o| !o).collect();
    fn find(parent: &mut [u32], mut x: u32) -> u32 {
        while parent[x as usize] != x {
            parent[x as usize] = parent[parent[x as usize] as usize];
            x = parent[x as usize];
        }
        x
    }

    let mut order: Vec<usize> = (0..ncomp).filter(|&c| orphan[c]).collect();
    order.sort_by_key(|&c| (comp_size[c], c));
    for o in order {
        let r = find(&mut parent, o as u32);
        if anchored[r as usize] {
            continue;
        }
        let mut target: Option<u32> = None;
        let mut m = head[r as usize];
        while m != END {
            for &nb in adjacent(m) {
                let t = find(&mut parent, nb);
                if t == r {
                    continue;
                }
                target = match target {
                    Some(cur)
                        if (set_size[cur as usize], std::cmp::Reverse(cur))
                            >= (set_size[t as usize], std::cmp::Reverse(t)) =>
                    {
                        Some(cur)
                    }
                    _ => Some(t),
                };
            }
            m = next[m as usize];
        }
        let Some(t) = target else { continue };
        parent[r as usize] = t;
        set_size[t as usize] += set_size[r as usize];
        next[tail[t as usize] as usize] = head[r as usize];
        tail[t as usize] = tail[r as usize];
        anchored[t as usize] = anchored[t as usize] || anchored[r as usize];
    }

    let mut out = vec![0u32; npix];
    let mut root_label = vec![UNSET; ncomp];
    let mut next = 0u32;
    for p in 0..npix {
        let r = find(&mut parent, comp[p]) as usize;
        if root_label[r] == UNSET {
            root_label[r] = next;
            next += 1;
        }
        out[p] = root_label[r];
    }
    LabelMap {
        width: w,
        height: h,
        labels: out,
        num_labels: next as usize,
    }
}
