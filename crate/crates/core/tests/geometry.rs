use pndr_core::bvh::{build_bvh, intersect_exhaustive, Bvh};
use pndr_core::gbuffer::raycast_gbuffer;
use pndr_core::math::{Mat3, Pose, Vec3};
use pndr_core::randomize::{light_maps, sample_light};
use pndr_core::rng::{stream_rng, uniform};
use pndr_core::scenegen::{count_sphere_overlaps, place_objects, PlacementConfig, Room, SceneGraph, ShapeSet};
use proptest::prelude::*;

fn random_scene(seed: u64, full_rotation: bool) -> SceneGraph {
    let cfg = PlacementConfig {
        full_rotation,
        ..Default::default()
    };
    let mut scene = place_objects(&ShapeSet::Boxy.meshes(), Room::default(), 1 + (seed % 5) as usize, seed, &cfg).unwrap();
    scene.scene_id = seed as u32;
    scene
}

#[test]
fn bvh_partitions_triangles() {
    for seed in 0..5 {
        let scene = random_scene(seed, seed % 2 == 0);
        let bvh = build_bvh(&scene);
        bvh.validate().unwrap();
        assert_eq!(bvh.leaf_triangle_count(), scene.world_triangles().len());
    }
}

#[test]
fn bvh_matches_exhaustive_intersection() {
    // 10 scenes × 1000 rays from random interior points in random directions
    let mut checked = 0;
    for seed in 0..10u64 {
        let scene = random_scene(seed, true);
        let bvh = build_bvh(&scene);
        let mut rng = stream_rng(seed, 1000, 0);
        for _ in 0..1000 {
            let o = Vec3::new(4.0 * uniform(&mut rng) - 2.0, 4.0 * uniform(&mut rng) - 2.0, 3.0 * uniform(&mut rng));
            let z = 2.0 * uniform(&mut rng) - 1.0;
            let phi = 2.0 * std::f64::consts::PI * uniform(&mut rng);
            let s = (1.0 - z * z).sqrt();
            let d = Vec3::new(s * phi.cos(), s * phi.sin(), z);
            let a = bvh.intersect(o, d, f64::INFINITY);
            let b = intersect_exhaustive(&bvh.triangles, o, d, f64::INFINITY);
            match (a, b) {
                (Some(a), Some(b)) => {
                    assert_eq!(a.triangle, b.triangle);
                    assert!((a.t - b.t).abs() < 1e-6);
                }
                (None, None) => {}
                other => panic!("disagreement {other:?}"),
            }
            checked += 1;
        }
    }
    assert_eq!(checked, 10_000);
}

#[test]
fn room_encloses_every_pixel_and_normals_face_camera() {
    let scene = random_scene(3, false);
    let bvh = build_bvh(&scene);
    let g = raycast_gbuffer(&scene, &bvh, 32, 24);
    assert_eq!(g.valid_count(), 32 * 24);
    for i in 0..g.pixels() {
        let x = g.x(i);
        assert!(x.z > 0.0);
        assert!((g.n(i).norm() - 1.0).abs() < 1e-5);
        assert!(g.n(i).dot(-x.normalize()) >= 0.0);
    }
    assert!(g.instances().len() > 1, "objects should be visible");
}

#[test]
fn gbuffer_is_independent_of_thread_count() {
    let scene = random_scene(4, true);
    let bvh = build_bvh(&scene);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| raycast_gbuffer(&scene, &bvh, 40, 32))
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn light_maps_reconstruct_the_light_position() {
    for seed in 0..10u64 {
        let scene = random_scene(seed, false);
        let g = raycast_gbuffer(&scene, &build_bvh(&scene), 32, 32);
        let light = sample_light(seed * 31 + 1, &scene.world_to_camera());
        let maps = light_maps(&g, &light).unwrap();
        for i in (0..g.pixels()).filter(|&i| g.valid[i]) {
            let dir = Vec3::from_slice(maps.dir.pixel(i));
            assert!((dir.norm() - 1.0).abs() < 1e-5);
            assert!(maps.dist.data[i] > 0.0);
            let p = g.x(i) + dir * maps.dist.data[i] as f64;
            assert!((p - light.position_camera).norm() < 1e-4, "seed {seed} pixel {i}");
        }
    }
}

#[test]
fn placement_is_collision_free_for_many_seeds() {
    for seed in 0..40u64 {
        let scene = random_scene(seed, seed % 3 == 0);
        assert_eq!(count_sphere_overlaps(&scene), 0);
        let room = scene.room.unwrap();
        for (c, r) in scene.bounding_spheres() {
            assert!(c.x.abs() + r <= room.width / 2.0 && c.y.abs() + r <= room.depth / 2.0);
            assert!(c.z - r >= -1e-12 && c.z + r <= room.height);
        }
    }
}

#[test]
fn empty_bvh_never_hits() {
    let bvh = Bvh::build(vec![]);
    assert!(bvh.intersect(Vec3::ZERO, Vec3::new(0.0, 0.0, 1.0), f64::INFINITY).is_none());
}

proptest! {
    #[test]
    fn composed_rotations_stay_orthonormal(axes in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, 0.1f64..1.0, -3.2f64..3.2), 1..20)) {
        let mut pose = Pose::IDENTITY;
        for (x, y, z, angle) in axes {
            let step = Pose::new(Mat3::axis_angle(Vec3::new(x, y, z), angle), Vec3::new(x, y, z));
            pose = step.compose(&pose);
        }
        prop_assert!(pose.rotation.orthonormality_error() < 1e-6);
        prop_assert!((pose.rotation.determinant() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn placement_is_pure(seed in any::<u64>(), count in 1usize..4) {
        let meshes = ShapeSet::Cylinders.meshes();
        let cfg = PlacementConfig::default();
        let a = place_objects(&meshes, Room::default(), count, seed, &cfg).unwrap();
        let b = place_objects(&meshes, Room::default(), count, seed, &cfg).unwrap();
        prop_assert_eq!(a, b);
    }
}
