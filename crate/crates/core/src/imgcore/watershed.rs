use std::cmp::Ordering;

use super::{BinaryMask, LabelMap};

/// Default maxima suppression depth, in distance-transform units (pixels).
pub const DEFAULT_H_MIN: f64 = 2.0;

/// Exact Euclidean distance from each foreground pixel to the nearest
/// background pixel. Everything outside the image counts as background.
/// Background pixels get 0.
pub fn distance_transform(mask: &BinaryMask) -> Vec<f64> {
    let (w, h) = (mask.width, mask.height);
    // Pad by one pixel of background on every side.
    let (pw, ph) = (w + 2, h + 2);
    let mut grid = vec![0.0f64; pw * ph];
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                grid[(y + 1) * pw + x + 1] = f64::INFINITY;
            }
        }
    }
    let mut f = vec![0.0; pw.max(ph)];
    let mut d = vec![0.0; pw.max(ph)];
    let mut v = vec![0usize; pw.max(ph)];
    let mut z = vec![0.0; pw.max(ph) + 1];
    for x in 0..pw {
        for y in 0..ph {
            f[y] = grid[y * pw + x];
        }
        dt1d(&f[..ph], &mut d[..ph], &mut v, &mut z);
        for y in 0..ph {
            grid[y * pw + x] = d[y];
        }
    }
    for y in 0..ph {
        f[..pw].copy_from_slice(&grid[y * pw..(y + 1) * pw]);
        dt1d(&f[..pw], &mut d[..pw], &mut v, &mut z);
        grid[y * pw..(y + 1) * pw].copy_from_slice(&d[..pw]);
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = grid[(y + 1) * pw + x + 1].sqrt();
        }
    }
    out
}

/// One-dimensional squared distance transform (lower envelope of parabolas).
fn dt1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    let mut first = None;
    for q in 0..n {
        if f[q].is_finite() {
            first = Some(q);
            break;
        }
    }
    let Some(q0) = first else {
        d.iter_mut().for_each(|x| *x = f64::INFINITY);
        return;
    };
    v[0] = q0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in q0 + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        let s = loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] {
                k -= 1;
            } else {
                break s;
            }
        };
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, dq) in d.iter_mut().enumerate().take(n) {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dx = q as f64 - p as f64;
        *dq = dx * dx + f[p];
    }
}

/// Splits touching objects with a distance-transform watershed.
///
/// Pixels are flooded from the highest distance value downwards over the
/// 8-neighbourhood. When two basins meet, the one whose peak rises less than
/// `h_min` above the meeting level is absorbed by the older (higher) basin;
/// basins deeper than `h_min` stay separate. Every foreground pixel receives
/// exactly one positive label; background is 0.
pub fn watershed_split(mask: &BinaryMask, h_min: f64) -> LabelMap {
    let (w, h) = (mask.width, mask.height);
    let dist = distance_transform(mask);
    let mut order: Vec<u32> = (0..w * h).filter(|&i| mask.data[i]).map(|i| i as u32).collect();
    order.sort_by(|&a, &b| {
        dist[b as usize]
            .partial_cmp(&dist[a as usize])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });

    const NONE: u32 = u32::MAX;
    let mut parent = vec![NONE; w * h];
    // Rank in flooding order of each basin's peak; lower is older.
    let mut peak_rank = vec![0u32; w * h];
    let mut peak_level = vec![0.0f64; w * h];

    fn find(parent: &mut [u32], mut x: u32) -> u32 {
        let mut root = x;
        while parent[root as usize] != root {
            root = parent[root as usize];
        }
        while parent[x as usize] != root {
            let next = parent[x as usize];
            parent[x as usize] = root;
            x = next;
        }
        root
    }

    let offsets = super::Connectivity::Eight.offsets();
    let mut roots: Vec<u32> = Vec::with_capacity(8);
    for (rank, &p) in order.iter().enumerate() {
        let level = dist[p as usize];
        let (x, y) = ((p as usize % w) as isize, (p as usize / w) as isize);
        roots.clear();
        for &(dx, dy) in offsets {
            let (nx, ny) = (x + dx, y + dy);
            if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                continue;
            }
            let q = ny as usize * w + nx as usize;
            if parent[q] == NONE {
                continue;
            }
            let r = find(&mut parent, q as u32);
            if !roots.contains(&r) {
                roots.push(r);
            }
        }
        if roots.is_empty() {
            parent[p as usize] = p;
            peak_rank[p as usize] = rank as u32;
            peak_level[p as usize] = level;
            continue;
        }
        let winner = *roots
            .iter()
            .min_by_key(|&&r| peak_rank[r as usize])
            .expect("non-empty");
        parent[p as usize] = winner;
        for &r in &roots {
            if r != winner && peak_level[r as usize] - level < h_min {
                parent[r as usize] = winner;
            }
        }
    }

    let mut labels = vec![0u32; w * h];
    let mut root_label = vec![0u32; w * h];
    let mut next = 1u32;
    for i in 0..w * h {
        if parent[i] == NONE {
            continue;
        }
        let r = find(&mut parent, i as u32) as usize;
        if root_label[r] == 0 {
            root_label[r] = next;
            next += 1;
        }
        labels[i] = root_label[r];
    }
    LabelMap {
        width: w,
        height: h,
        labels,
        num_labels: next as usize,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn discs(w: usize, h: usize, centers: &[(f64, f64)], r: f64) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| {
            centers
                .iter()
                .any(|&(cx, cy)| (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r)
        })
    }

    #[test]
    fn edt_matches_brute_force() {
        let m = BinaryMask::from_fn(13, 9, |x, y| (x * 7 + y * 5) % 11 != 0);
        let d = distance_transform(&m);
        for y in 0..9isize {
            for x in 0..13isize {
                let mut best = f64::INFINITY;
                for by in -1..=9isize {
                    for bx in -1..=13isize {
                        let inside = (0..13).contains(&bx) && (0..9).contains(&by);
                        if inside && m.get(bx as usize, by as usize) {
                            continue;
                        }
                        best = best.min((((bx - x).pow(2) + (by - y).pow(2)) as f64).sqrt());
                    }
                }
                let expect = if m.get(x as usize, y as usize) { best } else { 0.0 };
                assert!((d[(y * 13 + x) as usize] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_disc_one_label() {
        let m = discs(40, 40, &[(20.0, 20.0)], 12.0);
        let l = watershed_split(&m, DEFAULT_H_MIN);
        assert_eq!(l.num_labels, 2);
    }

    #[test]
    fn overlapping_discs_split_at_waist() {
        let m = discs(60, 40, &[(20.0, 20.0), (36.0, 20.0)], 10.0);
        // Oracle: the distance transform has two maxima (≈10) separated by a
        // saddle at the waist. The waist column keeps |dy| <= 6, so the
        // nearest background pixel there is 7 away, still deeper than h_min.
        let d = distance_transform(&m);
        assert!(d[20 * 60 + 20] >= 9.9 && d[20 * 60 + 36] >= 9.9);
        assert!((d[20 * 60 + 28] - 7.0).abs() < 1e-12);
        let l = watershed_split(&m, DEFAULT_H_MIN);
        assert_eq!(l.num_labels, 3);
        assert_ne!(l.get(20, 20), l.get(36, 20));
        // Split near the waist.
        assert_eq!(l.get(25, 20), l.get(20, 20));
        assert_eq!(l.get(31, 20), l.get(36, 20));
        assert!(m.data.iter().zip(&l.labels).all(|(&f, &lab)| f == (lab > 0)));
    }

    #[test]
    fn empty_mask_no_segments() {
        let l = watershed_split(&BinaryMask::new(10, 10), DEFAULT_H_MIN);
        assert_eq!(l.num_labels, 1);
        assert!(l.labels.iter().all(|&v| v == 0));
    }
}
