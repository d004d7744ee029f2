//! Physical sanity checks on the shading oracle, each against an
//! independently computed expectation.

use std::f64::consts::PI;

use pndr_core::bvh::{build_bvh, Bvh};
use pndr_core::gbuffer::{raycast_gbuffer, GBuffer};
use pndr_core::math::{Pose, Vec3};
use pndr_core::oracle::{ggx_specular, lambert_factor, oren_nayar_vectors, render_buffers, shade_direct, ShadeConfig};
use pndr_core::randomize::{light_maps, LightMaps, LightSample, MaterialMaps, MaterialSample};
use pndr_core::rng::{stream_rng, uniform};
use pndr_core::scenegen::{Camera, Intrinsics, Mesh, SceneGraph, SceneObject};
use pndr_core::Map;

/// Axis-aligned square: `axis` is the constant coordinate.
fn square(axis: usize, at: f64, center: (f64, f64), half: f64) -> Mesh {
    let corner = |a: f64, b: f64| {
        let (u, v) = (center.0 + a * half, center.1 + b * half);
        match axis {
            0 => Vec3::new(at, u, v),
            1 => Vec3::new(u, at, v),
            _ => Vec3::new(u, v, at),
        }
    };
    let vs = vec![corner(-1.0, -1.0), corner(1.0, -1.0), corner(1.0, 1.0), corner(-1.0, 1.0)];
    Mesh::new(vs, vec![[0, 1, 2], [0, 2, 3]], None, None).unwrap()
}

fn scene(meshes: Vec<Mesh>, world_to_camera: Pose, w: usize, h: usize) -> SceneGraph {
    let objects = (0..meshes.len())
        .map(|i| SceneObject {
            mesh: i,
            pose: Pose::IDENTITY,
            object_id: i as i32 + 1,
        })
        .collect();
    SceneGraph {
        scene_id: 0,
        room: None,
        meshes,
        objects,
        camera: Camera {
            intrinsics: Intrinsics::default_for(w, h),
            world_to_camera,
        },
    }
}

fn uniform_maps(g: &GBuffer, albedo: f32, roughness: f32, specularity: f32) -> MaterialMaps {
    let mask = |v: f32, c: usize| {
        let mut m = Map::zeros(g.width, g.height, c);
        for i in (0..g.pixels()).filter(|&i| g.valid[i]) {
            m.pixel_mut(i).fill(v);
        }
        m
    };
    MaterialMaps {
        albedo: mask(albedo, 3),
        roughness: mask(roughness, 1),
        specularity: mask(specularity, 1),
    }
}

fn materials(scene: &SceneGraph, albedo: f64, roughness: f64) -> Vec<MaterialSample> {
    scene
        .instance_ids()
        .into_iter()
        .map(|object_id| MaterialSample {
            object_id,
            albedo: [albedo; 3],
            roughness,
            specularity: 0.5,
        })
        .collect()
}

struct Setup {
    scene: SceneGraph,
    bvh: Bvh,
    g: GBuffer,
    light: LightSample,
    lights: LightMaps,
}

fn setup(scene: SceneGraph, light_world: Vec3, intensity: f64) -> Setup {
    let bvh = build_bvh(&scene);
    let k = scene.camera.intrinsics;
    let g = raycast_gbuffer(&scene, &bvh, k.width, k.height);
    let light = LightSample::from_scene_position(light_world, &scene.world_to_camera(), intensity);
    let lights = light_maps(&g, &light).unwrap();
    Setup {
        scene,
        bvh,
        g,
        light,
        lights,
    }
}

fn direct(s: &Setup, roughness: f32) -> (Map, Map) {
    let maps = uniform_maps(&s.g, 1.0, roughness, 0.5);
    shade_direct(
        &s.g,
        &maps,
        &s.lights,
        &s.light,
        &s.scene.world_to_camera(),
        &s.bvh,
        &ShadeConfig::default(),
    )
    .unwrap()
}

fn random_unit(rng: &mut rand_chacha::ChaCha8Rng) -> Vec3 {
    let z = 2.0 * uniform(rng) - 1.0;
    let phi = 2.0 * PI * uniform(rng);
    let s = (1.0 - z * z).sqrt();
    Vec3::new(s * phi.cos(), s * phi.sin(), z)
}

#[test]
fn smooth_oren_nayar_is_exactly_lambert() {
    let mut rng = stream_rng(5, 900, 0);
    for _ in 0..10_000 {
        let n = random_unit(&mut rng);
        let (mut wi, mut wo) = (random_unit(&mut rng), random_unit(&mut rng));
        if n.dot(wi) < 0.0 {
            wi = -wi;
        }
        if n.dot(wo) < 0.0 {
            wo = -wo;
        }
        assert_eq!(oren_nayar_vectors(n, wi, wo, 0.0), lambert_factor());
    }
}

#[test]
fn lambert_white_furnace() {
    // uniform hemisphere sampling, pdf 1/(2π): ∫ f cos dω = 1 for a white surface
    let n = Vec3::new(0.0, 0.0, 1.0);
    let wo = Vec3::new(0.3, 0.0, 0.9).normalize();
    let mut rng = stream_rng(1, 901, 0);
    let samples = 100_000;
    let mut sum = 0.0;
    for _ in 0..samples {
        let z = uniform(&mut rng);
        let phi = 2.0 * PI * uniform(&mut rng);
        let s = (1.0 - z * z).sqrt();
        let wi = Vec3::new(s * phi.cos(), s * phi.sin(), z);
        sum += oren_nayar_vectors(n, wi, wo, 0.0) / PI * z * 2.0 * PI;
    }
    let albedo = sum / samples as f64;
    assert!((albedo - 1.0).abs() < 0.01, "white furnace albedo {albedo}");
}

#[test]
fn ggx_directional_albedo_is_bounded() {
    // θ-φ midpoint quadrature with 10⁵ cells; no Fresnel term, so the only
    // loss is masking-shadowing and the result must not exceed one.
    let n = Vec3::new(0.0, 0.0, 1.0);
    let (nt, np) = (1000, 100);
    for alpha in [0.1, 0.3, 0.8] {
        for view_deg in [0.0f64, 30.0, 60.0, 80.0] {
            let t = view_deg.to_radians();
            let wo = Vec3::new(t.sin(), 0.0, t.cos());
            let mut total = 0.0;
            for i in 0..nt {
                let theta = (i as f64 + 0.5) / nt as f64 * PI / 2.0;
                for j in 0..np {
                    let phi = (j as f64 + 0.5) / np as f64 * 2.0 * PI;
                    let wi = Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
                    total += ggx_specular(n, wi, wo, alpha) * theta.cos() * theta.sin();
                }
            }
            total *= (PI / 2.0 / nt as f64) * (2.0 * PI / np as f64);
            assert!(total <= 1.02, "α={alpha} view {view_deg}°: {total}");
            assert!(total > 0.3, "α={alpha} view {view_deg}°: {total}");
        }
    }
}

#[test]
fn flat_plate_under_overhead_light_gives_inverse_pi() {
    // camera 2 m above a plate at z = 0, unit light 1 m above the plate center
    let eye = Vec3::new(0.0, 0.0, 2.0);
    let w2c = Pose::look_at(eye, Vec3::ZERO, Vec3::new(0.0, 1.0, 0.0));
    let s = setup(scene(vec![square(2, 0.0, (0.0, 0.0), 1.0)], w2c, 9, 9), Vec3::new(0.0, 0.0, 1.0), 1.0);
    let (d, _) = direct(&s, 0.0);
    let center = 4 * 9 + 4;
    assert!(s.g.x(center).norm() > 1.99);
    let value = d.data[center * 3] as f64;
    assert!((value - 1.0 / PI).abs() < 1e-5, "got {value}");
}

#[test]
fn smooth_direct_matches_closed_form_everywhere() {
    let eye = Vec3::new(0.4, -0.3, 1.5);
    let w2c = Pose::look_at(eye, Vec3::ZERO, Vec3::new(0.0, 0.0, 1.0));
    let light = Vec3::new(-0.3, 0.2, 0.8);
    let s = setup(scene(vec![square(2, 0.0, (0.0, 0.0), 3.0)], w2c, 16, 12), light, 2.5);
    let (d, _) = direct(&s, 0.0);
    let c2w = w2c.inverse();
    for i in (0..s.g.pixels()).filter(|&i| s.g.valid[i]) {
        let p = c2w.transform_point(s.g.x(i));
        let to_light = light - p;
        let expected = 2.5 * to_light.z / to_light.norm().powi(3) / PI;
        let got = d.data[i * 3] as f64;
        assert!((got - expected).abs() < 1e-5 * expected.max(1.0), "pixel {i}: {got} vs {expected}");
    }
}

#[test]
fn light_below_the_surface_contributes_nothing() {
    let eye = Vec3::new(0.0, 0.0, 2.0);
    let w2c = Pose::look_at(eye, Vec3::ZERO, Vec3::new(0.0, 1.0, 0.0));
    let s = setup(scene(vec![square(2, 0.0, (0.0, 0.0), 5.0)], w2c, 12, 12), Vec3::new(0.2, 0.1, -1.0), 3.0);
    assert_eq!(s.g.valid_count(), 144);
    let (d, g) = direct(&s, 0.3);
    assert!(d.data.iter().chain(&g.data).all(|&v| v == 0.0));
}

#[test]
fn umbra_is_exactly_dark_and_penumbra_free() {
    // camera frame = world frame; receiver at z = 3, square blocker of half
    // size 0.25 at z = 2, light at z = 1. The umbra on the receiver is the
    // blocker scaled by (3 − 1)/(2 − 1) = 2.
    let (w, h) = (48, 48);
    let receiver = square(2, 3.0, (0.0, 0.0), 10.0);
    let blocker = square(2, 2.0, (0.0, 0.0), 0.25);
    let s = setup(scene(vec![receiver, blocker], Pose::IDENTITY, w, h), Vec3::new(0.0, 0.0, 1.0), 3.0);
    let (d, _) = direct(&s, 0.2);
    let (mut dark, mut lit) = (0, 0);
    for i in (0..s.g.pixels()).filter(|&i| s.g.instance[i] == 1) {
        let x = s.g.x(i);
        let m = x.x.abs().max(x.y.abs());
        let v = d.data[i * 3];
        if m < 0.5 - 1e-3 {
            assert_eq!(v, 0.0, "pixel {i} at {x:?} should be in umbra");
            dark += 1;
        } else if m > 0.5 + 1e-3 {
            assert!(v > 0.0, "pixel {i} at {x:?} should be lit");
            lit += 1;
        }
    }
    assert!(dark > 20 && lit > 100, "dark {dark} lit {lit}");
}

#[test]
fn indirect_vanishes_without_anything_to_bounce_off() {
    let eye = Vec3::new(0.0, -1.0, 2.0);
    let w2c = Pose::look_at(eye, Vec3::ZERO, Vec3::new(0.0, 0.0, 1.0));
    let s = setup(scene(vec![square(2, 0.0, (0.0, 0.0), 4.0)], w2c, 12, 12), Vec3::new(0.0, 0.0, 1.0), 3.0);
    let maps = uniform_maps(&s.g, 0.8, 0.4, 0.5);
    let mats = materials(&s.scene, 0.8, 0.4);
    let cfg = ShadeConfig {
        indirect_samples: 32,
        indirect_glossy_samples: 32,
        ..Default::default()
    };
    let b = render_buffers(&s.g, &maps, &s.lights, &s.light, &mats, &w2c, &s.bvh, &cfg).unwrap();
    assert!(b.diffuse_direct.data.iter().any(|&v| v > 0.0));
    assert!(b.diffuse_indirect.data.iter().chain(&b.glossy_indirect.data).all(|&v| v == 0.0));
}

fn corner_scene() -> Setup {
    // white floor and back wall meeting at y = 0.5
    let floor = square(2, 0.0, (0.0, 0.0), 1.0);
    let wall = square(1, 0.5, (0.0, 1.0), 1.0);
    let eye = Vec3::new(0.0, -1.5, 1.2);
    let w2c = Pose::look_at(eye, Vec3::new(0.0, 0.2, 0.2), Vec3::new(0.0, 0.0, 1.0));
    setup(scene(vec![floor, wall], w2c, 16, 16), Vec3::new(0.3, -0.4, 0.9), 3.0)
}

fn corner_indirect(s: &Setup, samples: usize, seed: u64) -> (f64, f64) {
    let maps = uniform_maps(&s.g, 1.0, 0.5, 0.5);
    let mats = materials(&s.scene, 1.0, 0.5);
    let cfg = ShadeConfig {
        indirect_samples: samples,
        indirect_glossy_samples: samples,
        seed,
        ..Default::default()
    };
    let b = render_buffers(&s.g, &maps, &s.lights, &s.light, &mats, &s.scene.world_to_camera(), &s.bvh, &cfg).unwrap();
    let mean = |m: &Map| m.data.iter().map(|&v| v as f64).sum::<f64>() / m.data.len() as f64;
    (mean(&b.diffuse_indirect), mean(&b.glossy_indirect))
}

#[test]
fn indirect_estimates_converge_with_more_samples() {
    let s = corner_scene();
    let stats = |samples: usize| {
        let runs: Vec<(f64, f64)> = (0..8).map(|seed| corner_indirect(&s, samples, seed)).collect();
        let summarize = |vals: Vec<f64>| {
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
            (m, (var / vals.len() as f64).sqrt())
        };
        (
            summarize(runs.iter().map(|r| r.0).collect()),
            summarize(runs.iter().map(|r| r.1).collect()),
        )
    };
    let (d64, g64) = stats(64);
    let (d256, g256) = stats(256);
    for ((m1, se1), (m2, se2)) in [(d64, d256), (g64, g256)] {
        assert!(m1 > 0.0 && m2 > 0.0);
        let se = (se1 * se1 + se2 * se2).sqrt();
        assert!((m1 - m2).abs() <= 4.0 * se + 1e-9, "{m1} vs {m2} (se {se})");
    }
    // the spread shrinks roughly as 1/sqrt(samples)
    assert!(d256.1 < d64.1);
}

#[test]
fn oracle_is_deterministic_across_thread_counts() {
    let s = corner_scene();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| corner_indirect(&s, 16, 3))
    };
    assert_eq!(run(1), run(4));
    assert_eq!(corner_indirect(&s, 16, 3), corner_indirect(&s, 16, 3));
}
