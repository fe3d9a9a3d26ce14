//! Depth-image augmentation for rendered 160×120 depth maps (meters).

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DepthError {
    #[error("image has {got} pixels, expected {width}x{height}")]
    Shape { got: usize, width: usize, height: usize },
    #[error("invalid depth config: {0}")]
    Config(String),
}

/// Kinect-style quantization noise in disparity space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorNoiseConfig {
    pub enabled: bool,
    /// Std of the per-pixel bilinear lookup shift (pixels).
    pub shift_sigma_px: f64,
    /// Disparity numerator in depth units of `1/scale` meters.
    pub baseline: f64,
    pub scale: f64,
    pub disparity_sigma: f64,
}

impl Default for SensorNoiseConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            shift_sigma_px: 0.5,
            baseline: 35130.0,
            scale: 100.0,
            disparity_sigma: 1.0 / 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DepthAugConfig {
    pub width: usize,
    pub height: usize,
    pub depth_range: [f64; 2],
    pub noise: SensorNoiseConfig,
    /// Per anchor pixel.
    pub p_stick: f64,
    pub stick_max_length: usize,
    pub stick_max_width: usize,
    pub p_randu: f64,
    pub randu_range: [f64; 2],
    pub p_dropout: f64,
}

impl Default for DepthAugConfig {
    fn default() -> Self {
        Self {
            width: 160,
            height: 120,
            depth_range: [0.5, 1.5],
            noise: SensorNoiseConfig::default(),
            p_stick: 0.0025,
            stick_max_length: 18,
            stick_max_width: 3,
            p_randu: 0.003,
            randu_range: [0.5, 1.3],
            p_dropout: 0.003,
        }
    }
}

impl DepthAugConfig {
    /// Every augmentation switched off.
    pub fn disabled() -> Self {
        Self {
            noise: SensorNoiseConfig {
                enabled: false,
                ..Default::default()
            },
            p_stick: 0.0,
            p_randu: 0.0,
            p_dropout: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), DepthError> {
        let bad = |m: &str| Err(DepthError::Config(m.into()));
        for p in [self.p_stick, self.p_randu, self.p_dropout] {
            if !(0.0..=1.0).contains(&p) {
                return bad("probabilities must lie in [0, 1]");
            }
        }
        for r in [self.depth_range, self.randu_range] {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
                return bad("ranges must be ordered");
            }
        }
        if self.width == 0 || self.height == 0 {
            return bad("image must be non-empty");
        }
        if self.stick_max_length == 0 || self.stick_max_width == 0 {
            return bad("stick dimensions must be positive");
        }
        if self.noise.enabled && !(self.noise.baseline > 0.0 && self.noise.scale > 0.0 && self.depth_range[0] > 0.0) {
            return bad("sensor noise needs positive baseline, scale and minimum depth");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DepthAugReport {
    pub sticks: usize,
    pub stick_pixels: usize,
    pub randu: usize,
    pub dropout: usize,
}

fn bilinear(img: &[f64], w: usize, h: usize, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let at = |xx: usize, yy: usize| img[yy * w + xx];
    (1.0 - fy) * ((1.0 - fx) * at(x0, y0) + fx * at(x1, y0)) + fy * ((1.0 - fx) * at(x0, y1) + fx * at(x1, y1))
}

fn sensor_noise<R: Rng + ?Sized>(img: &mut [f64], w: usize, h: usize, cfg: &SensorNoiseConfig, rng: &mut R) {
    let src = img.to_vec();
    for y in 0..h {
        for x in 0..w {
            let dx = cfg.shift_sigma_px * rng.sample::<f64, _>(StandardNormal);
            let dy = cfg.shift_sigma_px * rng.sample::<f64, _>(StandardNormal);
            let d = bilinear(&src, w, h, x as f64 + dx, y as f64 + dy);
            let units = (d * cfg.scale).round().max(1.0);
            let disp = (cfg.baseline / units + cfg.disparity_sigma * rng.sample::<f64, _>(StandardNormal) + 0.5).round();
            img[y * w + x] = if disp > 0.0 { cfg.baseline / disp / cfg.scale } else { 0.0 };
        }
    }
}

/// Paints a thick line segment starting at the anchor with one random depth.
fn stick<R: Rng + ?Sized>(img: &mut [f64], w: usize, h: usize, ax: usize, ay: usize, cfg: &DepthAugConfig, rng: &mut R) -> usize {
    let len = rng.random_range(1..=cfg.stick_max_length);
    let width = rng.random_range(1..=cfg.stick_max_width);
    let theta = rng.random_range(0.0..std::f64::consts::PI);
    let depth = rng.random_range(cfg.depth_range[0]..=cfg.depth_range[1]);
    let (c, s) = (theta.cos(), theta.sin());
    // Perpendicular offsets centered on the segment.
    let half = (width as f64 - 1.0) / 2.0;
    let mut painted = 0;
    for i in 0..len {
        for k in 0..width {
            let off = k as f64 - half;
            let x = (ax as f64 + i as f64 * c - off * s).round();
            let y = (ay as f64 + i as f64 * s + off * c).round();
            if x >= 0.0 && y >= 0.0 && (x as usize) < w && (y as usize) < h {
                img[y as usize * w + x as usize] = depth;
                painted += 1;
            }
        }
    }
    painted
}

/// Applies, in order: clamping, sensor noise, sticks, random-value
/// replacement and dropout.
pub fn depth_augment<R: Rng + ?Sized>(img: &mut [f64], rng: &mut R, cfg: &DepthAugConfig) -> Result<DepthAugReport, DepthError> {
    cfg.validate()?;
    let (w, h) = (cfg.width, cfg.height);
    if img.len() != w * h {
        return Err(DepthError::Shape {
            got: img.len(),
            width: w,
            height: h,
        });
    }
    let [lo, hi] = cfg.depth_range;
    for v in img.iter_mut() {
        *v = if v.is_nan() { lo } else { v.clamp(lo, hi) };
    }
    let mut report = DepthAugReport::default();

    if cfg.noise.enabled {
        sensor_noise(img, w, h, &cfg.noise, rng);
    }
    if cfg.p_stick > 0.0 {
        for y in 0..h {
            for x in 0..w {
                if rng.random::<f64>() < cfg.p_stick {
                    report.sticks += 1;
                    report.stick_pixels += stick(img, w, h, x, y, cfg, rng);
                }
            }
        }
    }
    if cfg.p_randu > 0.0 {
        let [a, b] = cfg.randu_range;
        for v in img.iter_mut() {
            if rng.random::<f64>() < cfg.p_randu {
                *v = if b > a { rng.random_range(a..b) } else { a };
                report.randu += 1;
            }
        }
    }
    if cfg.p_dropout > 0.0 {
        for v in img.iter_mut() {
            if rng.random::<f64>() < cfg.p_dropout {
                *v = 0.0;
                report.dropout += 1;
            }
        }
    }
    Ok(report)
}
