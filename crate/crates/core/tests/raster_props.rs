use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vinenav::raster::{
    depth_binary_mask, fuse_segmentations, load_depth, load_mask, make_ctrl_map, save_depth_f32, save_depth_png,
    save_mask, BinaryMap, DepthMap, RasterBounds, SegMap,
};

fn binary(w: usize, h: usize, cells: Vec<bool>) -> BinaryMap {
    BinaryMap::new(w, h, cells.into_iter().map(u8::from).collect()).unwrap()
}

fn window_strategy() -> impl Strategy<Value = (usize, usize, Vec<Vec<bool>>)> {
    (1usize..12, 1usize..12, 1usize..5).prop_flat_map(|(w, h, s)| {
        (Just(w), Just(h), prop::collection::vec(prop::collection::vec(any::<bool>(), w * h), s))
    })
}

/// Depth grids with a mix of invalid (0) cells and positive values.
fn depth_strategy() -> impl Strategy<Value = (usize, usize, Vec<f32>)> {
    (1usize..10, 1usize..10).prop_flat_map(|(w, h)| {
        let cell = prop_oneof![1 => Just(0.0f32), 6 => 0.05f32..20.0];
        (Just(w), Just(h), prop::collection::vec(cell, w * h))
    })
}

fn subset(a: &BinaryMap, b: &BinaryMap) -> bool {
    a.cells().iter().zip(b.cells()).all(|(&x, &y)| x <= y)
}

proptest! {
    #[test]
    fn fusion_is_cellwise_sum((w, h, masks) in window_strategy()) {
        let maps: Vec<SegMap> =
            masks.iter().enumerate().map(|(i, m)| SegMap::new(i as u64 + 10, binary(w, h, m.clone()))).collect();
        let cum = fuse_segmentations(&maps, maps.len()).unwrap();
        for i in 0..h {
            for j in 0..w {
                let mut expected = 0u32;
                for m in &masks {
                    expected += m[i * w + j] as u32;
                }
                prop_assert_eq!(cum.get(i, j) as u32, expected);
            }
        }
    }

    #[test]
    fn depth_mask_monotone_in_l((w, h, cells) in depth_strategy(), l1 in 0.01f64..1.0, l2 in 0.01f64..1.0) {
        prop_assume!(cells.iter().any(|&c| c > 0.0));
        let (lo, hi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
        let depth = DepthMap::new(w, h, cells).unwrap();
        let a = depth_binary_mask(&depth, lo).unwrap();
        let b = depth_binary_mask(&depth, hi).unwrap();
        prop_assert!(subset(&a, &b));
    }

    #[test]
    fn depth_mask_scale_invariant((w, h, cells) in depth_strategy(), l in 0.01f64..1.0, k in prop::sample::select(vec![0.25f32, 0.5, 2.0, 4.0, 8.0])) {
        prop_assume!(cells.iter().any(|&c| c > 0.0));
        let depth = DepthMap::new(w, h, cells).unwrap();
        // Power-of-two factors scale floats exactly.
        prop_assert_eq!(depth_binary_mask(&depth, l).unwrap(), depth_binary_mask(&depth.scaled(k), l).unwrap());
    }

    #[test]
    fn intersection_bound((w, h, masks) in window_strategy(), dmask in prop::collection::vec(any::<bool>(), 144), t in 1usize..4) {
        let s = masks.len();
        let maps: Vec<SegMap> = masks.into_iter().enumerate().map(|(i, m)| SegMap::new(i as u64, binary(w, h, m))).collect();
        let cum = fuse_segmentations(&maps, s).unwrap();
        let dm = binary(w, h, dmask[..w * h].to_vec());
        let ctrl = make_ctrl_map(&cum, &dm, t).unwrap();
        let thresholded = cum.cells().iter().filter(|&&c| c as usize >= t).count();
        prop_assert!(ctrl.map().popcount() <= thresholded.min(dm.popcount()));
    }

    #[test]
    fn mask_round_trip(w in 1usize..40, h in 1usize..40, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mask = BinaryMap::from_fn(w, h, |_, _| rng.gen_bool(0.5));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask_000042.png");
        save_mask(&path, &mask).unwrap();
        let back = load_mask(&path, &RasterBounds::default()).unwrap();
        prop_assert_eq!(back.frame, 42);
        prop_assert_eq!(back.mask, mask);
    }

    #[test]
    fn depth_round_trip(w in 1usize..30, h in 1usize..30, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<f32> = (0..w * h).map(|_| if rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(0.01f32..50.0) }).collect();
        let mm: Vec<f32> = (0..w * h).map(|_| rng.gen_range(0u16..=65535) as f32 / 1000.0).collect();
        let dir = tempfile::tempdir().unwrap();
        let bounds = RasterBounds::default();

        let depth = DepthMap::new(w, h, raw).unwrap();
        let p = dir.path().join("d.raw");
        save_depth_f32(&p, &depth).unwrap();
        prop_assert_eq!(load_depth(&p, &bounds).unwrap(), depth);

        let depth = DepthMap::new(w, h, mm).unwrap();
        let p = dir.path().join("d.png");
        save_depth_png(&p, &depth).unwrap();
        prop_assert_eq!(load_depth(&p, &bounds).unwrap(), depth);
    }
}

#[test]
fn random_8x8_depth_threshold_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let cells: Vec<f32> =
            (0..64).map(|_| if rng.gen_bool(0.15) { 0.0 } else { rng.gen_range(0.1f32..10.0) }).collect();
        let depth = DepthMap::new(8, 8, cells.clone()).unwrap();
        let mask = depth_binary_mask(&depth, 0.3).unwrap();
        let mut max = 0.0f32;
        for &c in &cells {
            if c > max {
                max = c;
            }
        }
        let limit = 0.3 * max as f64;
        for (k, &c) in cells.iter().enumerate() {
            let expected = c > 0.0 && (c as f64) < limit;
            assert_eq!(mask.cells()[k] == 1, expected, "cell {k} depth {c} limit {limit}");
        }
    }
}

#[test]
fn random_ctrl_map_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let maps: Vec<SegMap> =
            (0..3).map(|i| SegMap::new(i, BinaryMap::from_fn(8, 8, |_, _| rng.gen_bool(0.4)))).collect();
        let dm = BinaryMap::from_fn(8, 8, |_, _| rng.gen_bool(0.6));
        let cum = fuse_segmentations(&maps, 3).unwrap();
        let ctrl = make_ctrl_map(&cum, &dm, 2).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                let count: u8 = maps.iter().map(|m| m.mask.get(i, j)).sum();
                assert_eq!(ctrl.map().get(i, j) == 1, count >= 2 && dm.get(i, j) == 1);
            }
        }
    }
}

#[test]
fn millimeter_depth_conversion() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("depth.png");
    let buf = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(2, 1, vec![1234u16, 0]).unwrap();
    buf.save(&path).unwrap();
    let depth = load_depth(&path, &RasterBounds::default()).unwrap();
    assert_eq!(depth.get(0, 0), 1.234);
    assert_eq!(depth.get(0, 1), DepthMap::INVALID);
}
