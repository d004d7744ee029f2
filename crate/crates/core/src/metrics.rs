//! Evaluation metrics: image quality, 6D pose, segmentation, correspondences
//! and monocular depth.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::Map;
use crate::math::{Pose, Vec3};

/// Reported in place of +∞ when two images are identical.
pub const PSNR_CAP_DB: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;
/// ADD thresholds as percent of the object diameter.
pub const ADD_THRESHOLDS_PERCENT: [f64; 10] = [5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metrics: BTreeMap<String, f64>,
    pub samples: usize,
    pub config: BTreeMap<String, String>,
}

impl MetricReport {
    pub fn csv_header(&self) -> String {
        let mut cols = vec!["samples".to_string()];
        cols.extend(self.metrics.keys().cloned());
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut cols = vec![self.samples.to_string()];
        cols.extend(self.metrics.values().map(|v| format!("{v}")));
        cols.join(",")
    }
}

fn ensure_same(a: &Map, b: &Map) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

pub fn mse(a: &Map, b: &Map) -> Result<f64> {
    ensure_same(a, b)?;
    let sum: f64 = a.data.iter().zip(&b.data).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum();
    Ok(sum / a.data.len() as f64)
}

/// `10·log10(1 / MSE)` for signals in `[0, 1]`, capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &Map, b: &Map) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / m).log10()).min(PSNR_CAP_DB))
}

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let w: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let d = i as f64 - r;
            (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Mean SSIM over all valid 11×11 windows and channels (Gaussian σ = 1.5).
pub fn ssim(a: &Map, b: &Map) -> Result<f64> {
    ensure_same(a, b)?;
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(Error::TooSmallImage(format!(
            "{}x{} is below {SSIM_WINDOW}x{SSIM_WINDOW}",
            a.width, a.height
        )));
    }
    let g = gaussian_window();
    let (w, h, ch) = (a.width, a.height, a.channels);
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut total = 0.0;
    for c in 0..ch {
        let get = |m: &Map, x: usize, y: usize| m.data[(y * w + x) * ch + c] as f64;
        // separable blur of x, y, x², y², xy: horizontal pass then vertical
        let mut horiz = vec![[0.0f64; 5]; h * ow];
        for y in 0..h {
            for x in 0..ow {
                let mut acc = [0.0; 5];
                for (k, &gk) in g.iter().enumerate() {
                    let (p, q) = (get(a, x + k, y), get(b, x + k, y));
                    acc[0] += gk * p;
                    acc[1] += gk * q;
                    acc[2] += gk * p * p;
                    acc[3] += gk * q * q;
                    acc[4] += gk * p * q;
                }
                horiz[y * ow + x] = acc;
            }
        }
        for y in 0..oh {
            for x in 0..ow {
                let mut s = [0.0; 5];
                for (k, &gk) in g.iter().enumerate() {
                    let v = horiz[(y + k) * ow + x];
                    for j in 0..5 {
                        s[j] += gk * v[j];
                    }
                }
                total += ssim_from_moments(s);
            }
        }
    }
    Ok(total / (ch * ow * oh) as f64)
}

fn ssim_from_moments([mu_a, mu_b, aa, bb, ab]: [f64; 5]) -> f64 {
    let var_a = aa - mu_a * mu_a;
    let var_b = bb - mu_b * mu_b;
    let cov = ab - mu_a * mu_b;
    ((2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2)) / ((mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2))
}

/// Mean distance between model points under the two poses (model units).
pub fn add(vertices: &[Vec3], gt: &Pose, pred: &Pose) -> f64 {
    assert!(!vertices.is_empty(), "ADD needs at least one vertex");
    let sum: f64 = vertices.iter().map(|&x| (gt.transform_point(x) - pred.transform_point(x)).norm()).sum();
    sum / vertices.len() as f64
}

/// Fraction of ADD values below each threshold in [`ADD_THRESHOLDS_PERCENT`].
pub fn add_accuracies(add_values: &[f64], diameter: f64) -> [f64; 10] {
    ADD_THRESHOLDS_PERCENT.map(|pct| {
        if add_values.is_empty() {
            return 0.0;
        }
        let limit = pct / 100.0 * diameter;
        add_values.iter().filter(|&&v| v < limit).count() as f64 / add_values.len() as f64
    })
}

/// Area under the ADD accuracy curve as the mean of the ten accuracies.
pub fn add_auc(add_values: &[f64], diameter: f64) -> Result<f64> {
    if !(diameter > 0.0) {
        return Err(Error::InvalidParameter(format!("diameter must be positive, got {diameter}")));
    }
    Ok(add_accuracies(add_values, diameter).iter().sum::<f64>() / 10.0)
}

/// Intersection over union; two empty masks score 1.
pub fn iou(a: &[bool], b: &[bool]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!("masks of {} and {} pixels", a.len(), b.len())));
    }
    let inter = a.iter().zip(b).filter(|(&x, &y)| x && y).count();
    let union = a.iter().zip(b).filter(|(&x, &y)| x || y).count();
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Mean paired Euclidean distance; inputs and output in millimeters.
pub fn correspondence_error(gt: &[Vec3], pred: &[Vec3]) -> Result<f64> {
    if gt.len() != pred.len() {
        return Err(Error::LengthMismatch(gt.len(), pred.len()));
    }
    if gt.is_empty() {
        return Err(Error::InvalidParameter("no correspondences".into()));
    }
    Ok(gt.iter().zip(pred).map(|(&a, &b)| (a - b).norm()).sum::<f64>() / gt.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthMetrics {
    pub abs_rel: f64,
    pub rmse: f64,
    pub delta1: f64,
}

/// AbsRel, RMSE (squared residuals) and δ1 (`max(d/d*, d*/d) < 1.25`) over the mask.
pub fn depth_metrics(pred: &[f64], gt: &[f64], mask: &[bool]) -> Result<DepthMetrics> {
    if pred.len() != gt.len() || gt.len() != mask.len() {
        return Err(Error::LengthMismatch(pred.len(), gt.len()));
    }
    let (mut n, mut abs_rel, mut sq, mut good) = (0usize, 0.0, 0.0, 0usize);
    for ((&d, &t), _) in pred.iter().zip(gt).zip(mask).filter(|(_, &m)| m) {
        n += 1;
        abs_rel += (d - t).abs() / t;
        sq += (d - t) * (d - t);
        if (d / t).max(t / d) < 1.25 {
            good += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(DepthMetrics {
        abs_rel: abs_rel / n as f64,
        rmse: (sq / n as f64).sqrt(),
        delta1: good as f64 / n as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Mat3;

    #[test]
    fn psnr_cases() {
        let a = Map::filled(4, 4, 3, 0.3);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP_DB);
        let b = Map::filled(4, 4, 3, 0.4);
        // uniform difference 0.1 → MSE 0.01 → 20 dB
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-5);
        assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        assert!(psnr(&a, &Map::zeros(4, 3, 3)).is_err());
    }

    #[test]
    fn ssim_cases() {
        let a = Map::from_vec(12, 12, 1, (0..144).map(|i| ((i * 7919) % 13) as f32 / 13.0).collect()).unwrap();
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let c1 = Map::filled(12, 12, 3, 0.4);
        assert!((ssim(&c1, &c1.clone()).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(
            ssim(&Map::zeros(10, 12, 1), &Map::zeros(10, 12, 1)),
            Err(Error::TooSmallImage(_))
        ));
    }

    #[test]
    fn ssim_of_binary_negative_is_low() {
        let a = Map::from_vec(16, 16, 1, (0..256).map(|i| ((i / 16 + i % 16) % 2) as f32).collect()).unwrap();
        let neg = Map {
            data: a.data.iter().map(|v| 1.0 - v).collect(),
            ..a.clone()
        };
        assert!(ssim(&a, &neg).unwrap() < 0.1);
    }

    #[test]
    fn add_cases() {
        let verts = vec![Vec3::new(0.1, 0.0, 0.0), Vec3::new(0.0, 0.2, 0.0), Vec3::new(0.0, 0.0, 0.3)];
        let gt = Pose::new(Mat3::rotation_z(0.3), Vec3::new(0.0, 0.0, 1.0));
        assert_eq!(add(&verts, &gt, &gt), 0.0);
        let shifted = Pose::new(gt.rotation, gt.translation + Vec3::new(0.01, 0.0, 0.0));
        assert!((add(&verts, &gt, &shifted) - 0.010).abs() < 1e-12);
    }

    #[test]
    fn add_auc_cases() {
        assert_eq!(add_auc(&[0.0, 0.0], 1.0).unwrap(), 1.0);
        assert_eq!(add_auc(&[0.6, 0.51], 1.0).unwrap(), 0.0);
        assert_eq!(add_accuracies(&[0.12], 1.0), [0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        assert!((add_auc(&[0.12], 1.0).unwrap() - 0.8).abs() < 1e-12);
        assert!(add_auc(&[0.1], 0.0).is_err());
    }

    #[test]
    fn iou_cases() {
        let a = vec![true, true, false, false];
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &[false, false, true, true]).unwrap(), 0.0);
        assert_eq!(iou(&[false; 3], &[false; 3]).unwrap(), 1.0);
        // two 2×4 rectangles in a 6×4 grid offset by 2 columns: overlap 4, union 12
        let rect = |x0: usize| (0..24).map(|i| (x0..x0 + 4).contains(&(i % 6))).collect::<Vec<_>>();
        assert!((iou(&rect(0), &rect(2)).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn correspondence_cases() {
        let a = vec![Vec3::new(1.0, 2.0, 3.0), Vec3::new(-4.0, 0.0, 8.0)];
        assert_eq!(correspondence_error(&a, &a).unwrap(), 0.0);
        let b: Vec<Vec3> = a.iter().map(|&p| p + Vec3::new(3.0, 4.0, 0.0)).collect();
        assert!((correspondence_error(&a, &b).unwrap() - 5.0).abs() < 1e-12);
        assert!(matches!(correspondence_error(&a, &b[..1]), Err(Error::LengthMismatch(2, 1))));
    }

    #[test]
    fn depth_cases() {
        let gt = vec![1.0, 2.0, 4.0];
        let mask = vec![true; 3];
        let m = depth_metrics(&gt, &gt, &mask).unwrap();
        assert_eq!((m.abs_rel, m.rmse, m.delta1), (0.0, 0.0, 1.0));
        let p12: Vec<f64> = gt.iter().map(|d| 1.2 * d).collect();
        let m = depth_metrics(&p12, &gt, &mask).unwrap();
        assert!((m.abs_rel - 0.2).abs() < 1e-12 && m.delta1 == 1.0);
        let p13: Vec<f64> = gt.iter().map(|d| 1.3 * d).collect();
        assert_eq!(depth_metrics(&p13, &gt, &mask).unwrap().delta1, 0.0);
        assert!(matches!(depth_metrics(&gt, &gt, &[false; 3]), Err(Error::EmptyMask)));
    }
}
