use std::path::Path;

use pndr_core::bvh::build_bvh;
use pndr_core::compose::render_ldr;
use pndr_core::gbuffer::{raycast_gbuffer, GBuffer};
use pndr_core::oracle::{render_buffers, LightBuffers, ShadeConfig};
use pndr_core::randomize::{compose_material_maps, light_maps, sample_light, sample_materials, LightMaps, MaterialMaps};
use pndr_core::scenegen::{place_objects, PlacementConfig, Room, ShapeSet};
use pndr_net::rendernet::{
    assemble_input, buffers_to_field, decode_checkpoint, encode_checkpoint, field_to_buffers, forward, infer_render, l1_loss, load_checkpoint,
    save_checkpoint, train, ArchConfig, Field, NetParams, TrainConfig, TrainSample, IN_CHANNELS, NORM_RADIUS, OUT_CHANNELS,
};
use pndr_net::Error;

struct View {
    gbuffer: GBuffer,
    maps: MaterialMaps,
    lights: LightMaps,
    buffers: LightBuffers,
}

fn view(seed: u64, size: usize) -> View {
    let cfg = PlacementConfig {
        resolution: (size, size),
        ..Default::default()
    };
    let scene = place_objects(&ShapeSet::Boxy.meshes(), Room::default(), 2, seed, &cfg).unwrap();
    let bvh = build_bvh(&scene);
    let gbuffer = raycast_gbuffer(&scene, &bvh, size, size);
    let w2c = scene.world_to_camera();
    let light = sample_light(seed, &w2c);
    let materials = sample_materials(&scene.instance_ids(), seed).unwrap();
    let maps = compose_material_maps(&gbuffer, &materials).unwrap();
    let lights = light_maps(&gbuffer, &light).unwrap();
    let shade = ShadeConfig {
        indirect_samples: 4,
        indirect_glossy_samples: 4,
        seed,
        ..Default::default()
    };
    let buffers = render_buffers(&gbuffer, &maps, &lights, &light, &materials, &w2c, &bvh, &shade).unwrap();
    View {
        gbuffer,
        maps,
        lights,
        buffers,
    }
}

fn default_arch() -> ArchConfig {
    ArchConfig {
        levels: 3,
        base_channels: 16,
    }
}

#[test]
fn input_field_layout() {
    let v = view(1, 32);
    let f = assemble_input(&v.gbuffer, &v.maps, &v.lights).unwrap();
    assert_eq!(f.channels, IN_CHANNELS);
    let x = f.to_map(0, 3);
    for i in 0..v.gbuffer.pixels() {
        for c in 0..3 {
            let expect = if v.gbuffer.valid[i] {
                (v.gbuffer.position.pixel(i)[c] as f64 / NORM_RADIUS) as f32
            } else {
                0.0
            };
            assert_eq!(x.pixel(i)[c], expect);
        }
    }

    let mut empty = v.gbuffer.clone();
    empty.valid.iter_mut().for_each(|b| *b = false);
    let z = assemble_input(&empty, &v.maps, &v.lights).unwrap();
    assert!(z.data.iter().all(|&x| x == 0.0));
}

#[test]
fn forward_shape_and_determinism() {
    let v = view(2, 64);
    let params = NetParams::init(default_arch(), 3).unwrap();
    let input = assemble_input(&v.gbuffer, &v.maps, &v.lights).unwrap();
    let a = forward(&params, &input).unwrap();
    let b = forward(&params, &input).unwrap();
    assert_eq!((a.channels, a.height, a.width), (OUT_CHANNELS, 64, 64));
    assert!(a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert!(a.data.iter().all(|x| x.is_finite() && *x >= 0.0));
}

#[test]
fn forward_is_resolution_polymorphic() {
    let params = NetParams::init(default_arch(), 4).unwrap();
    for size in [64, 128] {
        let v = view(5, size);
        let out = forward(&params, &assemble_input(&v.gbuffer, &v.maps, &v.lights).unwrap()).unwrap();
        assert_eq!((out.height, out.width), (size, size));
    }
    let bad = Field::zeros(IN_CHANNELS, 36, 36);
    assert!(matches!(forward(&params, &bad), Err(Error::BadResolution { .. })));
}

#[test]
fn l1_loss_cases() {
    let v = view(6, 16);
    let mask = &v.gbuffer.valid;
    let gt = buffers_to_field(&v.buffers);
    assert_eq!(l1_loss(&gt, &v.buffers, mask).unwrap(), 0.0);

    let shifted = Field {
        data: gt.data.iter().map(|x| x + 0.1).collect(),
        ..gt.clone()
    };
    assert!((l1_loss(&shifted, &v.buffers, mask).unwrap() - 0.4).abs() < 1e-6);

    // reverse the pixel order of prediction, target and mask together
    let hw = 16 * 16;
    let flip = |f: &Field| {
        let mut out = f.clone();
        for c in 0..f.channels {
            for p in 0..hw {
                out.data[c * hw + p] = f.data[c * hw + hw - 1 - p];
            }
        }
        out
    };
    let pred = Field {
        data: gt.data.iter().enumerate().map(|(i, x)| x + (i % 7) as f32 * 0.03).collect(),
        ..gt.clone()
    };
    let flipped_mask: Vec<bool> = mask.iter().rev().copied().collect();
    let a = l1_loss(&pred, &v.buffers, mask).unwrap();
    let b = l1_loss(&flip(&pred), &field_to_buffers(&flip(&gt)), &flipped_mask).unwrap();
    assert!((a - b).abs() < 1e-9);
}

#[test]
fn checkpoint_round_trip() {
    let params = NetParams::init(default_arch(), 7).unwrap();
    let bytes = encode_checkpoint(&params);
    let back = decode_checkpoint(&bytes, Path::new("mem")).unwrap();
    assert_eq!(encode_checkpoint(&back), bytes);
    assert_eq!(back.arch, params.arch);
    for (a, b) in params.tensors.iter().zip(&back.tensors) {
        assert_eq!(a.name, b.name);
        assert!(a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.ckpt");
    save_checkpoint(&path, &params).unwrap();
    assert_eq!(encode_checkpoint(&load_checkpoint(&path).unwrap()), bytes);

    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(decode_checkpoint(&bad, Path::new("mem")), Err(Error::Checkpoint { .. })));
}

#[test]
fn single_sample_overfits() {
    let v = view(8, 32);
    let sample = TrainSample::new(&v.gbuffer, &v.maps, &v.lights, &v.buffers).unwrap();
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 1,
        epochs: 200,
        seed: 1,
    };
    let out = train(std::slice::from_ref(&sample), default_arch(), &cfg, |_, _, _| Ok(())).unwrap();
    let (first, last) = (out.loss_history[0], *out.loss_history.last().unwrap());
    assert!(last <= 0.1 * first, "loss {first} → {last}");
}

#[test]
fn training_is_reproducible_and_zero_lr_is_inert() {
    let samples: Vec<TrainSample> = (0..3)
        .map(|s| {
            let v = view(10 + s, 16);
            TrainSample::new(&v.gbuffer, &v.maps, &v.lights, &v.buffers).unwrap()
        })
        .collect();
    let arch = ArchConfig { levels: 2, base_channels: 4 };
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 2,
        epochs: 3,
        seed: 9,
    };
    let a = train(&samples, arch, &cfg, |_, _, _| Ok(())).unwrap();
    let b = train(&samples, arch, &cfg, |_, _, _| Ok(())).unwrap();
    assert_eq!(
        a.loss_history.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
        b.loss_history.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
    );
    assert_eq!(encode_checkpoint(&a.params), encode_checkpoint(&b.params));

    let frozen = train(&samples, arch, &TrainConfig { learning_rate: 0.0, ..cfg }, |_, _, _| Ok(())).unwrap();
    assert_eq!(
        encode_checkpoint(&frozen.params),
        encode_checkpoint(&NetParams::init(arch, cfg.seed).unwrap())
    );

    assert!(matches!(train(&[], arch, &cfg, |_, _, _| Ok(())), Err(Error::EmptyDataset)));
    let other = view(20, 32);
    let mixed = vec![
        samples[0].clone(),
        TrainSample::new(&other.gbuffer, &other.maps, &other.lights, &other.buffers).unwrap(),
    ];
    assert!(matches!(
        train(&mixed, arch, &cfg, |_, _, _| Ok(())),
        Err(Error::ResolutionMismatch { index: 1, .. })
    ));
}

#[test]
fn pipeline_factorization() {
    let v = view(11, 32);
    let via_compose = render_ldr(&v.buffers, &v.maps).unwrap();
    let round_tripped = render_ldr(&field_to_buffers(&buffers_to_field(&v.buffers)), &v.maps).unwrap();
    assert_eq!(via_compose, round_tripped);

    // a net whose head has zero weights and a very negative bias emits ~0
    let mut params = NetParams::init(default_arch(), 12).unwrap();
    let head_w = params.tensors.iter().position(|t| t.name == "head.w").unwrap();
    params.tensors[head_w].data.iter_mut().for_each(|x| *x = 0.0);
    params.get_mut("head.b").unwrap().data.iter_mut().for_each(|x| *x = -200.0);
    let img = infer_render(&params, &v.gbuffer, &v.maps, &v.lights).unwrap();
    assert!(img.0.data.iter().all(|&x| x == 0.0));
}
