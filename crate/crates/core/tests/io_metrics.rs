use pndr_core::compose::LdrImage;
use pndr_core::dataio::{load_png, load_tensor, save_png, save_tensor, Tensor, TensorData};
use pndr_core::math::{Mat3, Pose, Vec3};
use pndr_core::metrics::{add, add_auc, psnr, ssim, PSNR_CAP_DB, SSIM_C1, SSIM_C2, SSIM_SIGMA, SSIM_WINDOW};
use pndr_core::Map;
use proptest::prelude::*;
use sha2::{Digest, Sha256};

/// Byte layout written out field by field, independent of `Tensor::encode`.
fn reference_encoding(dims: &[usize], data: &[f32]) -> Vec<u8> {
    let mut out = b"PNDRTNSR".to_vec();
    for v in [1u32, 1, dims.len() as u32] {
        out.extend(v.to_le_bytes());
    }
    for &d in dims {
        out.extend((d as u64).to_le_bytes());
    }
    for &x in data {
        out.extend(x.to_le_bytes());
    }
    out
}

#[test]
fn network_input_sized_tensor_has_stable_bytes() {
    let dims = vec![64, 64, 15];
    let data: Vec<f32> = (0..64 * 64 * 15).map(|i| ((i * 7919) % 1000) as f32 / 997.0 - 0.5).collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("input.tensor");
    save_tensor(&path, &Tensor::f32(dims.clone(), data.clone())).unwrap();
    let on_disk = std::fs::read(&path).unwrap();
    assert_eq!(Sha256::digest(&on_disk), Sha256::digest(reference_encoding(&dims, &data)));
    assert_eq!(load_tensor(&path).unwrap(), Tensor::f32(dims, data));
}

#[test]
fn png_round_trip_is_exact_on_the_quantization_grid() {
    let data: Vec<f32> = (0..20 * 10 * 3).map(|i| (i % 256) as f32 / 255.0).collect();
    let img = LdrImage(Map::from_vec(20, 10, 3, data).unwrap());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.png");
    save_png(&img, &path).unwrap();
    assert_eq!(load_png(&path).unwrap(), img);
}

fn naive_ssim(a: &Map, b: &Map) -> f64 {
    let r = SSIM_WINDOW / 2;
    let mut w = vec![vec![0.0; SSIM_WINDOW]; SSIM_WINDOW];
    let mut s = 0.0;
    for (i, row) in w.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - r as f64, j as f64 - r as f64);
            *v = (-(di * di + dj * dj) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            s += *v;
        }
    }
    let mut total = 0.0;
    let mut count = 0;
    for c in 0..a.channels {
        for y0 in 0..=a.height - SSIM_WINDOW {
            for x0 in 0..=a.width - SSIM_WINDOW {
                let (mut ma, mut mb, mut aa, mut bb, mut ab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..SSIM_WINDOW {
                    for j in 0..SSIM_WINDOW {
                        let k = w[i][j] / s;
                        let p = a.at(x0 + j, y0 + i)[c] as f64;
                        let q = b.at(x0 + j, y0 + i)[c] as f64;
                        ma += k * p;
                        mb += k * q;
                        aa += k * p * p;
                        bb += k * q * q;
                        ab += k * p * q;
                    }
                }
                let (va, vb, cov) = (aa - ma * ma, bb - mb * mb, ab - ma * mb);
                total += (2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2) / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
                count += 1;
            }
        }
    }
    total / count as f64
}

fn image(values: Vec<f32>) -> Map {
    Map::from_vec(16, 16, 3, values).unwrap()
}

#[test]
fn identical_images_score_perfectly() {
    let a = image((0..768).map(|i| (i % 17) as f32 / 16.0).collect());
    assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP_DB);
    assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn tensor_round_trip(dims in prop::collection::vec(1usize..6, 0..4), seed in any::<u32>()) {
        let n: usize = dims.iter().product();
        let data: Vec<i32> = (0..n).map(|i| (i as i32).wrapping_mul(seed as i32)).collect();
        let t = Tensor { dims: dims.clone(), data: TensorData::I32(data) };
        let bytes = t.encode();
        let (back, used) = Tensor::decode(&bytes, std::path::Path::new("mem")).unwrap();
        prop_assert_eq!(used, bytes.len());
        prop_assert_eq!(back, t);
    }

    #[test]
    fn metrics_match_naive_loops(a in prop::collection::vec(0.0f32..1.0, 768), b in prop::collection::vec(0.0f32..1.0, 768)) {
        let (ma, mb) = (image(a.clone()), image(b.clone()));
        let mse: f64 = a.iter().zip(&b).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum::<f64>() / 768.0;
        prop_assert!((psnr(&ma, &mb).unwrap() - 10.0 * (1.0 / mse).log10()).abs() < 1e-9);
        prop_assert!((ssim(&ma, &mb).unwrap() - naive_ssim(&ma, &mb)).abs() < 1e-9);
    }

    #[test]
    fn add_auc_is_monotone_in_errors(values in prop::collection::vec(0.0f64..0.2, 1..40), bump in 0.0f64..0.05, idx in any::<prop::sample::Index>()) {
        let before = add_auc(&values, 0.3).unwrap();
        let mut worse = values.clone();
        worse[idx.index(values.len())] += bump;
        prop_assert!(add_auc(&worse, 0.3).unwrap() <= before);
        prop_assert!((0.0..=1.0).contains(&before));
    }

    #[test]
    fn add_is_invariant_under_a_common_rigid_motion(
        angles in (-3.0f64..3.0, -3.0f64..3.0), offset in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0),
        pts in prop::collection::vec((-0.2f64..0.2, -0.2f64..0.2, -0.2f64..0.2), 1..30),
    ) {
        let vertices: Vec<Vec3> = pts.into_iter().map(|(x, y, z)| Vec3::new(x, y, z)).collect();
        let gt = Pose::new(Mat3::rotation_z(angles.0), Vec3::new(0.1, 0.0, 1.0));
        let pred = Pose::new(Mat3::axis_angle(Vec3::new(1.0, 1.0, 0.0), 0.2), Vec3::new(0.12, -0.01, 1.05));
        let motion = Pose::new(Mat3::axis_angle(Vec3::new(0.3, -0.5, 1.0), angles.1), Vec3::new(offset.0, offset.1, offset.2));
        let base = add(&vertices, &gt, &pred);
        let moved = add(&vertices, &motion.compose(&gt), &motion.compose(&pred));
        prop_assert!((base - moved).abs() < 1e-9);
    }
}
