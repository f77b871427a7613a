//! Image and depth metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{DepthMap, Image};

pub const PSNR_CAP: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

/// Label of the two-term aggregate in every report.
pub const AGGREGATE_LABEL: &str = "aggregate-2";
pub const AGGREGATE_NOTE: &str = "geometric mean of MSE and sqrt(1 - SSIM); LPIPS is not included";

fn check_dims(a: &Image, b: &Image) -> Result<()> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    check_dims(a, b)?;
    let sum: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.data.len().max(1) as f64)
}

/// `−10·log₁₀(mse)`, capped at [`PSNR_CAP`].
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP;
    }
    (-10.0 * mse.log10()).min(PSNR_CAP)
}

pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

/// Normalized 1-D Gaussian taps.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let taps: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Valid-region separable filtering of a `w×h` plane.
fn filter(plane: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (ow, oh) = (w - k + 1, h - k + 1);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM over all fully-contained 11×11 Gaussian windows of the
/// channel-mean grayscale images.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_dims(a, b)?;
    let (w, h) = (a.width, a.height);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            window: SSIM_WINDOW,
        });
    }
    let ga = a.grayscale();
    let gb = b.grayscale();
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let product = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).collect::<Vec<_>>();
    let mu_a = filter(&ga, w, h, &taps);
    let mu_b = filter(&gb, w, h, &taps);
    let aa = filter(&product(&ga, &ga), w, h, &taps);
    let bb = filter(&product(&gb, &gb), w, h, &taps);
    let ab = filter(&product(&ga, &gb), w, h, &taps);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        total += ((2.0 * ma * mb + C1) * (2.0 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
    }
    Ok(total / mu_a.len() as f64)
}

/// Geometric mean of `mse` and `sqrt(1 − ssim)`.
pub fn aggregate_metric(mse: f64, ssim: f64) -> f64 {
    (mse * (1.0 - ssim).max(0.0).sqrt()).sqrt()
}

/// Mean absolute depth error over pixels whose oracle opacity exceeds
/// `threshold`.
pub fn depth_mae(pred: &DepthMap, oracle: &DepthMap, threshold: f64) -> Result<f64> {
    if (pred.width, pred.height) != (oracle.width, oracle.height) {
        return Err(Error::DimensionMismatch("depth maps differ in size".into()));
    }
    let (sum, count) = pred
        .depth
        .iter()
        .zip(&oracle.depth)
        .zip(&oracle.opacity)
        .filter(|(_, o)| **o > threshold)
        .fold((0.0, 0usize), |(s, c), ((p, q), _)| (s + (p - q).abs(), c + 1));
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(sum / count as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub psnr: f64,
    pub ssim: f64,
    /// Always `10^(−psnr/10)`.
    pub mse: f64,
    #[serde(rename = "aggregate-2")]
    pub aggregate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth_mae: Option<f64>,
}

impl MetricsReport {
    pub fn from_psnr_ssim(psnr: f64, ssim: f64, depth_mae: Option<f64>) -> Self {
        let mse = 10f64.powf(-psnr / 10.0);
        Self {
            psnr,
            ssim,
            mse,
            aggregate: aggregate_metric(mse, ssim),
            depth_mae,
        }
    }

    pub fn compare(pred: &Image, truth: &Image, depth: Option<(&DepthMap, &DepthMap)>) -> Result<Self> {
        let p = psnr(pred, truth)?;
        let s = ssim(pred, truth)?;
        let mae = match depth {
            Some((d, o)) => match depth_mae(d, o, 0.5) {
                Ok(v) => Some(v),
                Err(Error::EmptyMask) => None,
                Err(e) => return Err(e),
            },
            None => None,
        };
        Ok(Self::from_psnr_ssim(p, s, mae))
    }

    /// Mean PSNR and SSIM over views; MSE is then the geometric mean of the
    /// per-view MSEs.
    pub fn mean(reports: &[MetricsReport]) -> Option<Self> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        let psnr = reports.iter().map(|r| r.psnr).sum::<f64>() / n;
        let ssim = reports.iter().map(|r| r.ssim).sum::<f64>() / n;
        let maes: Vec<f64> = reports.iter().filter_map(|r| r.depth_mae).collect();
        let mae = (!maes.is_empty()).then(|| maes.iter().sum::<f64>() / maes.len() as f64);
        Some(Self::from_psnr_ssim(psnr, ssim, mae))
    }

    /// `|mse − 10^(−psnr/10)|`.
    pub fn consistency_error(&self) -> f64 {
        (self.mse - 10f64.powf(-self.psnr / 10.0)).abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(w: usize, h: usize, f: impl Fn(usize, usize, usize) -> f64) -> Image {
        let mut img = Image::new(w, h);
        for y in 0..h {
            for x in 0..w {
                img.set_pixel(x, y, [f(x, y, 0), f(x, y, 1), f(x, y, 2)]);
            }
        }
        img
    }

    #[test]
    fn psnr_values() {
        assert_eq!(psnr_from_mse(0.0), 99.0);
        assert!((psnr_from_mse(0.01) - 20.0).abs() < 1e-12);
        assert_eq!(psnr_from_mse(1.0), 0.0);
    }

    #[test]
    fn ssim_identity_and_luminance_shift() {
        let a = image(16, 16, |x, y, c| ((x * 7 + y * 3 + c) % 11) as f64 / 10.0);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let flat = image(16, 16, |_, _, _| 0.2);
        let shifted = image(16, 16, |_, _, _| 0.7);
        assert!(ssim(&flat, &shifted).unwrap() < 1.0);
    }

    #[test]
    fn ssim_too_small() {
        let a = Image::new(10, 20);
        assert!(matches!(ssim(&a, &a), Err(Error::ImageTooSmall { .. })));
    }

    #[test]
    fn aggregate_values() {
        assert!((aggregate_metric(0.01, 0.75) - (0.005f64).sqrt()).abs() < 1e-15);
        assert_eq!(aggregate_metric(0.0, 0.5), 0.0);
        let (m, s): (f64, f64) = (0.02, 0.6);
        let logs = (m.ln() + (1.0 - s).sqrt().ln()) / 2.0;
        assert!((aggregate_metric(m, s) - logs.exp()).abs() < 1e-12);
    }

    #[test]
    fn depth_mae_values() {
        let mut a = DepthMap::new(2, 2);
        a.depth = vec![1.0, 2.0, 3.0, 4.0];
        a.opacity = vec![1.0; 4];
        assert_eq!(depth_mae(&a, &a, 0.5).unwrap(), 0.0);
        let mut b = a.clone();
        b.depth.iter_mut().for_each(|d| *d += 0.1);
        assert!((depth_mae(&b, &a, 0.5).unwrap() - 0.1).abs() < 1e-12);
        a.opacity = vec![0.0; 4];
        assert!(matches!(depth_mae(&b, &a, 0.5), Err(Error::EmptyMask)));
    }

    #[test]
    fn report_consistency_and_label() {
        let r = MetricsReport::from_psnr_ssim(27.3, 0.8, None);
        assert!(r.consistency_error() < 1e-12);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"aggregate-2\""));
        let capped = MetricsReport::from_psnr_ssim(99.0, 1.0, None);
        assert!(capped.consistency_error() < 1e-9);
    }
}
