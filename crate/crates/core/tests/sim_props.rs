use std::f64::consts::PI;

use proptest::prelude::*;
use vinenav::raster::DepthMap;
use vinenav::simworld::{
    generate_world, normalize_angle, render_views, run_episode, step_kinematics, CameraModel, CurveDirection,
    EpisodeConfig, Layout, Outcome, Pose2D, WorldParams,
};
use vinenav::spc::VelocityCommand;

/// Fine-step integration; the heading is exact at each substep midpoint, so
/// the only error left is the second-order position term.
fn fine_integration(pose: Pose2D, cmd: VelocityCommand, dt: f64, steps: usize) -> (f64, f64, f64) {
    let h = dt / steps as f64;
    let (mut x, mut y, mut th) = (pose.x, pose.y, pose.theta);
    for _ in 0..steps {
        let mid = th + cmd.omega_z * h / 2.0;
        x += cmd.v_x * mid.cos() * h;
        y += cmd.v_x * mid.sin() * h;
        th += cmd.omega_z * h;
    }
    (x, y, th)
}

proptest! {
    #[test]
    fn exact_arc_matches_fine_integration(
        x in -10.0f64..10.0, y in -10.0f64..10.0, th in -PI..PI,
        v in 0.0f64..1.5, w in -1.5f64..1.5, dt in 0.01f64..0.5,
    ) {
        let pose = Pose2D::new(x, y, th);
        let cmd = VelocityCommand::new(v, w);
        let exact = step_kinematics(pose, cmd, dt);
        let (fx, fy, fth) = fine_integration(pose, cmd, dt, 1000);
        prop_assert!((exact.x - fx).abs() <= 1e-6 && (exact.y - fy).abs() <= 1e-6);
        prop_assert!(normalize_angle(exact.theta - fth).abs() <= 1e-9);
    }

    #[test]
    fn rendering_is_deterministic_and_consistent(seed in 0u64..50, s in 1.0f64..30.0, lat in -0.5f64..0.5, head in -0.4f64..0.4, curved in any::<bool>()) {
        let layout = if curved { Layout::Curved } else { Layout::Straight };
        let world = generate_world(&WorldParams { layout, ..Default::default() }, seed).unwrap();
        let camera = CameraModel { width: 64, height: 48, ..Default::default() };
        let pose = world.pose_at(s, world.lane_offset() + lat, head);
        let (seg_a, depth_a) = render_views(&world, &pose, &camera, 3);
        let (seg_b, depth_b) = render_views(&world, &pose, &camera, 3);
        prop_assert_eq!(&seg_a, &seg_b);
        prop_assert_eq!(
            depth_a.cells().iter().map(|d| d.to_bits()).collect::<Vec<_>>(),
            depth_b.cells().iter().map(|d| d.to_bits()).collect::<Vec<_>>()
        );
        for (k, &m) in seg_a.mask.cells().iter().enumerate() {
            if m == 1 {
                let d = depth_a.cells()[k];
                prop_assert!(DepthMap::is_valid(d) && (d as f64) < camera.max_range);
            }
        }
    }
}

#[test]
fn kinematic_reference_cases() {
    let p = step_kinematics(Pose2D::new(0.0, 0.0, 0.0), VelocityCommand::new(1.0, 0.0), 1.0);
    assert_eq!((p.x, p.y, p.theta), (1.0, 0.0, 0.0));
    let p = step_kinematics(Pose2D::new(0.0, 0.0, 0.0), VelocityCommand::new(0.0, PI / 2.0), 1.0);
    assert!(p.x.abs() < 1e-12 && p.y.abs() < 1e-12 && (p.theta - PI / 2.0).abs() < 1e-12);
    let p = step_kinematics(Pose2D::new(0.0, 0.0, 0.0), VelocityCommand::new(1.0, 1.0), PI);
    assert!(p.x.abs() < 1e-12 && (p.y - 2.0).abs() < 1e-12 && (p.theta.abs() - PI).abs() < 1e-12, "{p:?}");
    let (fx, fy, _) = fine_integration(Pose2D::new(0.0, 0.0, 0.0), VelocityCommand::new(1.0, 1.0), PI, 100_000);
    assert!(fx.abs() < 1e-6 && (fy - 2.0).abs() < 1e-6);
}

#[test]
fn mirrored_world_mirrors_the_run() {
    for (seed, layout) in [(2, Layout::Straight), (5, Layout::Curved)] {
        let params = WorldParams { layout, curve_direction: CurveDirection::Left, ..Default::default() };
        let world = generate_world(&params, seed).unwrap();
        let mirror = world.mirrored();
        let config = EpisodeConfig { max_steps: 80, ..Default::default() };
        let start = world.pose_at(0.5, world.lane_offset() + 0.12, 0.05);
        let mirrored_start = Pose2D::new(start.x, -start.y, -start.theta);
        let a = run_episode(&world, &config, start).unwrap();
        let b = run_episode(&mirror, &config, mirrored_start).unwrap();
        assert_eq!(a.records.len(), b.records.len());
        assert_eq!(a.outcome, b.outcome);
        let w = config.camera.width as f64;
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.fault, rb.fault, "step {}", ra.step);
            if let (Some(xa), Some(xb)) = (ra.x_c, rb.x_c) {
                assert!((xa - (w - xb)).abs() < 1e-9, "step {}: {xa} vs {xb}", ra.step);
            }
            assert!((ra.pose.x - rb.pose.x).abs() < 1e-6 && (ra.pose.y + rb.pose.y).abs() < 1e-6, "step {}", ra.step);
            assert!((ra.published.omega_z + rb.published.omega_z).abs() < 1e-9);
        }
    }
}

#[test]
fn straight_world_is_traversed() {
    let world = generate_world(&WorldParams::default(), 9).unwrap();
    let log = run_episode(&world, &EpisodeConfig::default(), world.pose_at(0.5, world.lane_offset(), 0.0)).unwrap();
    assert_eq!(log.outcome, Outcome::Completed);
    assert_eq!(log.fault_count(), 0);
}

#[test]
fn start_in_canopy_collides_immediately() {
    let world = generate_world(&WorldParams { jitter: 0.0, ..Default::default() }, 0).unwrap();
    let plant = world.rows[world.target_pair.0].plants[3].position;
    let log = run_episode(&world, &EpisodeConfig::default(), Pose2D::new(plant.x, plant.y, 0.0)).unwrap();
    assert_eq!(log.outcome, Outcome::Collision);
    assert_eq!(log.records.len(), 1);
    assert_eq!(log.records[0].step, 0);
}

#[test]
fn zero_steps_is_truncated() {
    let world = generate_world(&WorldParams::default(), 0).unwrap();
    let config = EpisodeConfig { max_steps: 0, ..Default::default() };
    let log = run_episode(&world, &config, world.pose_at(0.5, world.lane_offset(), 0.0)).unwrap();
    assert!(log.records.is_empty());
    assert_eq!(log.outcome, Outcome::Truncated);
}

#[test]
fn fusion_warmup_delays_first_command() {
    let world = generate_world(&WorldParams::default(), 1).unwrap();
    let config = EpisodeConfig { max_steps: 20, ..Default::default() };
    let log = run_episode(&world, &config, world.pose_at(0.5, world.lane_offset(), 0.0)).unwrap();
    let s = config.raster.s_window;
    assert_eq!(log.control_steps(), log.records.len() - (s - 1));
    assert!(log.records[..s - 1].iter().all(|r| !r.controlled && r.published == VelocityCommand::ZERO));
}

#[test]
fn curved_world_has_requested_radius() {
    let params = WorldParams { layout: Layout::Curved, curve_radius: [30.0, 30.0], jitter: 0.0, ..Default::default() };
    let world = generate_world(&params, 0).unwrap();
    assert!((1.0 / world.curvature.abs() - 30.0).abs() < 1e-9);
    let center = nalgebra::Point2::new(0.0, 1.0 / world.curvature);
    for row in &world.rows {
        let r = (1.0 / world.curvature - row.offset).abs();
        for p in &row.centerline {
            assert!(((p - center).norm() - r).abs() < 1e-9);
        }
    }
}
