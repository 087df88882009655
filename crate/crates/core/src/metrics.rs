//! Image quality metrics: SSIM and relative ℓ² error.

use crate::error::{EitError, Result};
use crate::image::ConductivityImage;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimConfig {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self { window: 11, sigma: 1.5, k1: 0.01, k2: 0.03 }
    }
}

fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let mut w: Vec<f64> = (0..size * size)
        .map(|i| {
            let (y, x) = ((i / size) as f64 - c, (i % size) as f64 - c);
            (-(x * x + y * y) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Mean SSIM over all fully-contained windows. The dynamic range is that of
/// `truth`; a flat truth image falls back to a range of 1.
pub fn ssim(a: &ConductivityImage, truth: &ConductivityImage) -> Result<f64> {
    ssim_with(a, truth, &SsimConfig::default())
}

pub fn ssim_with(a: &ConductivityImage, truth: &ConductivityImage, cfg: &SsimConfig) -> Result<f64> {
    if a.size != truth.size {
        return Err(EitError::DimensionMismatch(format!("{} vs {} pixel images", a.size, truth.size)));
    }
    let n = a.size;
    let win = cfg.window.min(n);
    let w = gaussian_window(win, cfg.sigma);
    let range = truth.max() - truth.min();
    let l = if range > 0.0 { range } else { 1.0 };
    let c1 = (cfg.k1 * l).powi(2);
    let c2 = (cfg.k2 * l).powi(2);
    let mut total = 0.0;
    let mut count = 0usize;
    for r0 in 0..=n - win {
        for c0 in 0..=n - win {
            let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..win {
                for j in 0..win {
                    let g = w[i * win + j];
                    let x = a.get(r0 + i, c0 + j);
                    let y = truth.get(r0 + i, c0 + j);
                    mx += g * x;
                    my += g * y;
                    xx += g * x * x;
                    yy += g * y * y;
                    xy += g * x * y;
                }
            }
            let (vx, vy, cxy) = (xx - mx * mx, yy - my * my, xy - mx * my);
            total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// ‖x − truth‖₂ / ‖truth‖₂.
pub fn rel_l2_error(x: &ConductivityImage, truth: &ConductivityImage) -> Result<f64> {
    if x.size != truth.size {
        return Err(EitError::DimensionMismatch(format!("{} vs {} pixel images", x.size, truth.size)));
    }
    let den = truth.values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if den == 0.0 {
        return Err(EitError::Degenerate("truth image has zero norm".into()));
    }
    let num = x.values.iter().zip(&truth.values).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    Ok(num / den)
}
