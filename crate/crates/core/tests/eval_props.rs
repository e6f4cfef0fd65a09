use nalgebra::Point2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vinenav::eval::{compute_midline, mean_std, orientation_stats, path_mae, ControlSample, OrientationClass};
use vinenav::simworld::{generate_world, CurveDirection, Layout, WorldParams};
use vinenav::spc::control_function;

fn curved(radius: f64, direction: CurveDirection, jitter: f64, row_length: f64) -> WorldParams {
    WorldParams {
        layout: Layout::Curved,
        curve_radius: [radius, radius],
        curve_direction: direction,
        jitter,
        row_length,
        ..Default::default()
    }
}

#[test]
fn concentric_arcs_give_mid_radius_arc() {
    for (radius, dir) in [(25.0, CurveDirection::Left), (30.0, CurveDirection::Right), (40.0, CurveDirection::Left)] {
        let world = generate_world(&curved(radius, dir, 0.0, 30.0), 1).unwrap();
        let midline = compute_midline(&world).unwrap();
        let k = world.curvature;
        let center = Point2::new(0.0, 1.0 / k);
        // Radius of the lane center: the reference arc shifted by the lane offset.
        let lane_radius = (1.0 / k - world.lane_offset()).abs();
        let (a, b) = midline.domain;
        let worst = (0..=600)
            .map(|i| {
                let p = midline.point(a + (b - a) * i as f64 / 600.0);
                ((p - center).norm() - lane_radius).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst <= 0.02, "radius {radius}: deviation {worst}");
    }
}

#[test]
fn jittered_midline_tracks_clean_midline() {
    for seed in 0..10 {
        for layout in [Layout::Straight, Layout::Curved] {
            let clean = WorldParams { layout, jitter: 0.0, row_length: 30.0, ..Default::default() };
            let noisy = WorldParams { jitter: 0.05, ..clean.clone() };
            let a = compute_midline(&generate_world(&clean, seed).unwrap()).unwrap();
            let b = compute_midline(&generate_world(&noisy, seed).unwrap()).unwrap();
            let (lo, hi) = b.domain;
            let sampler = a.sampler();
            let worst =
                (0..=300).map(|i| sampler.distance(b.point(lo + (hi - lo) * i as f64 / 300.0))).fold(0.0, f64::max);
            assert!(worst <= 0.05, "seed {seed} {layout:?}: {worst}");
        }
    }
}

#[test]
fn midline_lies_between_rows() {
    for seed in 0..10 {
        for layout in [Layout::Straight, Layout::Curved] {
            let params = WorldParams { layout, row_length: 30.0, ..Default::default() };
            let world = generate_world(&params, seed).unwrap();
            let midline = compute_midline(&world).unwrap();
            assert!(midline.max_residual <= 0.05, "seed {seed} {layout:?}: residual {}", midline.max_residual);
            let (ia, ib) = world.target_pair;
            let (lo, hi) = midline.domain;
            for i in 0..=200 {
                let p = midline.point(lo + (hi - lo) * i as f64 / 200.0);
                let gap = (world.distance_to_row(ia, p) - world.distance_to_row(ib, p)).abs();
                assert!(gap <= 0.05, "seed {seed} {layout:?}: rows differ by {gap} at {p}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mae_is_translation_invariant(seed in 0u64..1000, dx in -50.0f64..50.0, dy in -50.0f64..50.0, curved in any::<bool>()) {
        let layout = if curved { Layout::Curved } else { Layout::Straight };
        let world = generate_world(&WorldParams { layout, row_length: 20.0, ..Default::default() }, seed).unwrap();
        let moved = world.translated(dx, dy);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let path: Vec<Point2<f64>> = (0..40)
            .map(|i| world.point_at(0.5 + i as f64 * 0.45, world.lane_offset() + rng.gen_range(-0.3..0.3)))
            .collect();
        let shifted: Vec<Point2<f64>> = path.iter().map(|p| Point2::new(p.x + dx, p.y + dy)).collect();
        let a = path_mae(path, &compute_midline(&world).unwrap()).unwrap();
        let b = path_mae(shifted, &compute_midline(&moved).unwrap()).unwrap();
        prop_assert!((a - b).abs() <= 1e-9, "{} vs {}", a, b);
    }

    #[test]
    fn stats_match_two_pass(values in prop::collection::vec(0.0f64..224.0, 1..200)) {
        let got = mean_std(values.iter().copied());
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        prop_assert!((got.mean - mean).abs() <= 1e-12 * mean.abs().max(1.0));
        prop_assert!((got.std - var.sqrt()).abs() <= 1e-12 * var.sqrt().max(1.0));
    }
}

#[test]
fn class_stats_against_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut groups = std::collections::BTreeMap::new();
    let mut pooled: std::collections::BTreeMap<OrientationClass, Vec<f64>> = Default::default();
    for class in OrientationClass::ALL {
        let logs: Vec<Vec<ControlSample>> = (0..3)
            .map(|_| {
                (0..50)
                    .map(|_| {
                        let x = rng.gen_range(0.0..224.0);
                        let raw = control_function(x, 224, 1.0, 1.0);
                        pooled.entry(class).or_default().push(raw.omega_z);
                        ControlSample { x_c: Some(x), raw: Some(raw), published: raw, fault: false }
                    })
                    .collect()
            })
            .collect();
        groups.insert(class, logs);
    }
    let stats = orientation_stats(&groups).unwrap();
    for (class, omegas) in pooled {
        let n = omegas.len() as f64;
        let mean = omegas.iter().sum::<f64>() / n;
        let std = (omegas.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let s = stats[&class].omega_raw;
        assert!((s.mean - mean).abs() <= 1e-12 && (s.std - std).abs() <= 1e-12, "{class}");
    }
}
