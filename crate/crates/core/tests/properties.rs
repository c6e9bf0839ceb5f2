use std::collections::HashMap;

use proptest::prelude::*;

use histoctx::cellfeat::{attach_global_context, morphology_features, CellFeatureVector, MORPHOLOGY_LEN};
use histoctx::cellseg::{segment_nuclei, NeighbourIndex, Nucleus, SegmentParams};
use histoctx::context::{vote, vote_all, VoteInput};
use histoctx::imgcore::{
    connected_components, downscale_box, lalphabeta_to_rgb, lab_planes, morph_open, rgb_to_lalphabeta, watershed_split,
    BinaryMask, Connectivity, GrayImage, LabelMap, Magnification, RasterImage, DEFAULT_H_MIN,
};
use histoctx::regionfeat::{haralick_features, region_feature_vector, rilbp_features, FamilySet, RegionPlanes};
use histoctx::stain::{compute_stats, reinhard_normalize};
use histoctx::superpix::{slic_segment, superpixel_count, RegionClass, SlicParams};
use histoctx::svmkit::{evaluate, svm_train, ClassProbabilities, ConfusionMatrix, SvmParams};
use histoctx::cellfeat::CellClass;

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 64,
        ..ProptestConfig::default()
    }
}

fn rgb_image(max_side: usize) -> impl Strategy<Value = RasterImage> {
    (2..=max_side, 2..=max_side).prop_flat_map(|(w, h)| {
        proptest::collection::vec(any::<u8>(), w * h * 3)
            .prop_map(move |data| RasterImage::new(w, h, data, Magnification::x20()).unwrap())
    })
}

fn gray_image(side: usize) -> impl Strategy<Value = GrayImage> {
    proptest::collection::vec(any::<u8>(), side * side).prop_map(move |d| GrayImage::new(side, side, d).unwrap())
}

fn mask(w: usize, h: usize) -> impl Strategy<Value = BinaryMask> {
    proptest::collection::vec(any::<bool>(), w * h).prop_map(move |bits| BinaryMask::from_fn(w, h, |x, y| bits[y * w + x]))
}

/// Partition of labelled pixels as sets of pixel indices, label-independent.
fn partition(map: &LabelMap, skip_zero: bool) -> Vec<Vec<u32>> {
    let mut groups: HashMap<u32, Vec<u32>> = HashMap::new();
    for (i, &l) in map.labels.iter().enumerate() {
        if !(skip_zero && l == 0) {
            groups.entry(l).or_default().push(i as u32);
        }
    }
    let mut out: Vec<Vec<u32>> = groups.into_values().collect();
    out.sort();
    out
}

fn ranking() -> impl Strategy<Value = [CellClass; 4]> {
    Just(CellClass::ALL.to_vec()).prop_shuffle().prop_map(|v| [v[0], v[1], v[2], v[3]])
}

fn region() -> impl Strategy<Value = RegionClass> {
    prop::sample::select(RegionClass::ALL.to_vec())
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn constant_image_downscales_to_constant(w in 1usize..40, h in 1usize..40, f in 1i64..9, rgb in any::<[u8; 3]>()) {
        let img = RasterImage::filled(w, h, rgb, Magnification::x20()).unwrap();
        let out = downscale_box(&img, f).unwrap();
        prop_assert!(out.pixels().all(|p| p == rgb));
    }

    #[test]
    fn opening_is_idempotent(m in mask(16, 12), r in 0usize..3) {
        let once = morph_open(&m, r);
        prop_assert_eq!(morph_open(&once, r), once);
    }

    #[test]
    fn watershed_keeps_separated_blobs(blobs in proptest::collection::vec((0usize..5, 0usize..5, 1usize..3), 1..6)) {
        // Small squares on a 7-pixel grid never touch, so each is one segment.
        let m = BinaryMask::from_fn(35, 35, |x, y| {
            blobs.iter().any(|&(gx, gy, s)| {
                let (x0, y0) = (gx * 7 + 1, gy * 7 + 1);
                (x0..x0 + 2 * s).contains(&x) && (y0..y0 + 2 * s).contains(&y)
            })
        });
        let ws = watershed_split(&m, DEFAULT_H_MIN);
        let cc = connected_components(&m, Connectivity::Eight);
        prop_assert_eq!(partition(&ws, true), partition(&cc, true));
    }

    #[test]
    fn lalphabeta_round_trip(img in rgb_image(12)) {
        let back = lalphabeta_to_rgb(&rgb_to_lalphabeta(&img), img.magnification.clone());
        let worst = img.data().iter().zip(back.data()).map(|(a, b)| a.abs_diff(*b)).max().unwrap();
        prop_assert!(worst <= 1, "round trip moved a channel by {}", worst);
    }

    #[test]
    fn stain_stats_are_nonnegative_and_normalization_settles(img in rgb_image(10)) {
        let s = compute_stats(&img);
        prop_assert!(s.sd().iter().all(|&v| v >= 0.0));
        let once = reinhard_normalize(&img, &s);
        let twice = reinhard_normalize(&once, &compute_stats(&once));
        let worst = once.data().iter().zip(twice.data()).map(|(a, b)| a.abs_diff(*b)).max().unwrap();
        prop_assert!(worst <= 1);
    }

    #[test]
    fn superpixel_count_is_monotone(s in 1i64..1_000_000, ds in 0i64..10_000, u in 1i64..5000, du in 0i64..100) {
        prop_assert!(superpixel_count(s + ds, u).unwrap() >= superpixel_count(s, u).unwrap());
        prop_assert!(superpixel_count(s, u + du).unwrap() <= superpixel_count(s, u).unwrap());
    }

    #[test]
    fn slic_is_deterministic_with_contiguous_labels(img in rgb_image(40), n in 1usize..12) {
        let lab = lab_planes(&img);
        let params = SlicParams { superpixel_size: 50, ..SlicParams::default() };
        let (a, sa) = slic_segment(&lab, n, &params).unwrap();
        let (b, _) = slic_segment(&lab, n, &params).unwrap();
        prop_assert_eq!(a.to_bytes(), b.to_bytes());
        let max = *a.labels.iter().max().unwrap() as usize;
        prop_assert_eq!(max + 1, a.num_labels);
        prop_assert_eq!(sa.len(), a.num_labels);
        for sp in &sa {
            prop_assert!(sp.pixel_count >= 1 && sp.pixel_count == sp.member_pixels.len());
            prop_assert!(sp.centroid.0 < img.width() && sp.centroid.1 < img.height());
        }
    }

    #[test]
    fn texture_ranges(g in gray_image(9), m in mask(9, 9)) {
        if let Ok(f) = haralick_features(&g, &m) {
            prop_assert!(f.iter().all(|v| v.is_finite()));
            prop_assert!(f[0] > 0.0 && f[0] <= 1.0);
            prop_assert!((-1.0..=1.0).contains(&f[2]));
            prop_assert!(f[8] >= 0.0);
        }
        if let Ok(h) = rilbp_features(&g, &m) {
            prop_assert!((h.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn region_features_are_translation_invariant(img in rgb_image(14), dx in 0usize..5, dy in 0usize..5) {
        let (w, h) = (img.width(), img.height());
        let big = RasterImage::from_fn(w + dx + 3, h + dy + 3, Magnification::x1_25(), |x, y| {
            if x >= dx && y >= dy && x < dx + w && y < dy + h { img.pixel(x - dx, y - dy) } else { [17, 200, 90] }
        }).unwrap();
        // Interior pixels only, so the one-pixel texture context moves with the region.
        prop_assume!(w >= 3 && h >= 3);
        let inner: Vec<u32> = (1..h - 1).flat_map(|y| (1..w - 1).map(move |x| (y * w + x) as u32)).collect();
        let shifted: Vec<u32> = (1..h - 1).flat_map(|y| (1..w - 1).map(move |x| ((y + dy) * (w + dx + 3) + x + dx) as u32)).collect();
        let a = region_feature_vector(&inner, &RegionPlanes::new(&img), FamilySet::ALL).unwrap();
        let b = region_feature_vector(&shifted, &RegionPlanes::new(&big), FamilySet::ALL).unwrap();
        prop_assert_eq!(a.values.len(), 85);
        prop_assert!(a.values.iter().all(|v| v.is_finite()));
        prop_assert_eq!(a.values, b.values);
    }

    #[test]
    fn nuclei_are_disjoint_and_sized(spots in proptest::collection::vec((4usize..60, 4usize..60, 2usize..7), 1..10)) {
        let tile = RasterImage::from_fn(64, 64, Magnification::x20(), |x, y| {
            let dark = spots.iter().any(|&(cx, cy, r)| {
                let (ddx, ddy) = (x as f64 - cx as f64, y as f64 - cy as f64);
                ddx * ddx + ddy * ddy <= (r * r) as f64
            });
            if dark { [70, 40, 110] } else { [235, 190, 220] }
        }).unwrap();
        let params = SegmentParams::default();
        let seg = segment_nuclei(&tile, "t", &params);
        let mut owner = vec![usize::MAX; 64 * 64];
        for n in &seg.nuclei {
            prop_assert!((params.min_area..=params.max_area).contains(&n.area));
            prop_assert_eq!(n.area, n.pixels.len());
            for &p in &n.pixels {
                prop_assert_eq!(owner[p as usize], usize::MAX, "pixel {} in two nuclei", p);
                owner[p as usize] = n.id;
            }
            let f = morphology_features(n, &tile);
            prop_assert_eq!(f.values.len(), MORPHOLOGY_LEN);
            prop_assert_eq!(f.values[0], n.area as f64);
        }
    }

    #[test]
    fn neighbourhoods_are_symmetric(points in proptest::collection::vec((0.0f64..200.0, 0.0f64..200.0), 1..40), r in 1.0f64..60.0) {
        let idx = NeighbourIndex::new(points.clone(), r).unwrap();
        for i in 0..points.len() {
            for j in idx.neighbours(i) {
                prop_assert!(idx.neighbours(j).contains(&i));
            }
        }
    }

    #[test]
    fn morphology_is_translation_invariant(pix in proptest::collection::btree_set((0u32..8, 0u32..8), 1..30), dx in 0u32..6, dy in 0u32..6, seed in any::<u8>()) {
        let tile = RasterImage::from_fn(20, 20, Magnification::x20(), |x, y| {
            let v = (x as u32 * 31 + y as u32 * 17 + seed as u32) % 200;
            [v as u8, (v / 2) as u8, (255 - v) as u8]
        }).unwrap();
        let moved = RasterImage::from_fn(20, 20, Magnification::x20(), |x, y| {
            if x as u32 >= dx && y as u32 >= dy { tile.pixel(x - dx as usize, y - dy as usize) } else { [0, 0, 0] }
        }).unwrap();
        let a = Nucleus::from_pixels(0, pix.iter().map(|&(x, y)| y * 20 + x).collect(), 20, 20, "t");
        let b = Nucleus::from_pixels(0, pix.iter().map(|&(x, y)| (y + dy) * 20 + x + dx).collect(), 20, 20, "t");
        prop_assert_eq!(morphology_features(&a, &tile).values, morphology_features(&b, &moved).values);
    }

    #[test]
    fn global_context_is_one_hot(r in region()) {
        let v = attach_global_context(CellFeatureVector::new(vec![0.5; MORPHOLOGY_LEN], [1.0, 2.0, 3.0]).unwrap(), r);
        let g = v.global.unwrap();
        prop_assert_eq!(g.iter().filter(|&&x| x == 1.0).count(), 1);
        prop_assert_eq!(g.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn vote_stays_in_admitted_classes(ranking in ranking(), region in region()) {
        let out = vote(&VoteInput { ranking, region });
        match region {
            RegionClass::Tumour => prop_assert!(matches!(out, CellClass::Cancer | CellClass::Lymphocyte)),
            RegionClass::Stroma => prop_assert!(matches!(out, CellClass::Stromal | CellClass::Lymphocyte)),
            RegionClass::Epidermis => prop_assert_eq!(out, CellClass::Epidermis),
            RegionClass::Lumen => prop_assert_eq!(out, ranking[0]),
        }
    }

    #[test]
    fn vote_all_is_pointwise(cells in proptest::collection::vec((proptest::collection::vec(0.0f64..1.0, 4), proptest::option::of(region())), 1..20), rot in 0usize..20) {
        let probs: Vec<ClassProbabilities> = cells.iter().map(|(p, _)| ClassProbabilities { probs: p.clone() }).collect();
        let regions: Vec<Option<RegionClass>> = cells.iter().map(|(_, r)| *r).collect();
        let (labels, missing) = vote_all(&probs, &regions);
        prop_assert_eq!(missing.len(), regions.iter().filter(|r| r.is_none()).count());
        let k = rot % cells.len();
        let mut p2 = probs.clone();
        let mut r2 = regions.clone();
        p2.rotate_left(k);
        r2.rotate_left(k);
        let mut expected = labels.clone();
        expected.rotate_left(k);
        prop_assert_eq!(vote_all(&p2, &r2).0, expected);
    }

    #[test]
    fn accuracy_is_one_minus_off_diagonal(counts in proptest::collection::vec(proptest::collection::vec(0u64..50, 4), 4)) {
        let total: u64 = counts.iter().flatten().sum();
        prop_assume!(total > 0);
        let off: u64 = (0..4).flat_map(|i| (0..4).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| counts[i][j]).sum();
        let cm = ConfusionMatrix::from_counts(vec!["a".into(), "b".into(), "c".into(), "d".into()], counts).unwrap();
        prop_assert!((evaluate(&cm).unwrap().accuracy - (1.0 - off as f64 / total as f64)).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn svm_invariants(rows in proptest::collection::vec((proptest::collection::vec(-3.0f64..3.0, 3), 0usize..3), 6..30), shift in 1usize..29, weights in proptest::collection::vec(0.5f64..4.0, 3)) {
        let x: Vec<Vec<f64>> = rows.iter().map(|(v, c)| v.iter().map(|a| a + 2.0 * *c as f64).collect()).collect();
        let y: Vec<usize> = rows.iter().map(|(_, c)| *c).collect();
        let mut classes = y.clone();
        classes.sort_unstable();
        classes.dedup();
        prop_assume!(classes.len() >= 2);
        let params = SvmParams::default();
        let model = svm_train(&x, &y, 3, &weights, &params, 0).unwrap();
        prop_assert_eq!(model.gamma, 1.0 / 3.0);
        for m in &model.machines {
            prop_assert!(m.kkt_violation <= 1e-3);
            prop_assert!(m.dual_balance().abs() <= 1e-6);
            for (a, l) in m.alphas.iter().zip(&m.labels) {
                let class = if *l > 0.0 { m.pair.0 } else { m.pair.1 };
                prop_assert!(*a >= 0.0 && *a <= weights[class] * params.c + 1e-12);
            }
        }
        let k = shift % x.len();
        let mut x2 = x.clone();
        let mut y2 = y.clone();
        x2.rotate_left(k);
        y2.rotate_left(k);
        let other = svm_train(&x2, &y2, 3, &weights, &params, 0).unwrap();
        for row in &x {
            let p = model.predict(row).unwrap();
            prop_assert!((p.probs.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            prop_assert!(p.probs.iter().all(|&v| v >= 0.0));
            let mut r = p.ranking();
            r.sort_unstable();
            prop_assert_eq!(r, vec![0, 1, 2]);
            prop_assert_eq!(p, other.predict(row).unwrap());
        }
    }
}
