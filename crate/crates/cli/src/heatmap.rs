//! Minimal grid-to-PNG rasterizer. Time runs along x, site along y with the
//! first site at the bottom.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{invalid, CliResult};

const TARGET_PIXELS: usize = 600;

/// Colormap choice, decided from the value range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Palette {
    /// Values in `[0, 1]`: white to dark blue.
    Unit,
    /// Signed values: blue, white at zero, red; symmetric about zero.
    Diverging { max_abs: f64 },
}

impl Palette {
    pub fn for_values(values: &[f64]) -> Palette {
        let finite = values.iter().filter(|v| v.is_finite());
        let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
        if lo >= 0.0 && hi <= 1.0 {
            Palette::Unit
        } else {
            let max_abs = lo.abs().max(hi.abs());
            Palette::Diverging { max_abs: if max_abs > 0.0 && max_abs.is_finite() { max_abs } else { 1.0 } }
        }
    }

    pub fn color(&self, v: f64) -> Rgb<u8> {
        if !v.is_finite() {
            return Rgb([128, 128, 128]);
        }
        let lerp = |a: u8, b: u8, t: f64| (a as f64 + (b as f64 - a as f64) * t).round() as u8;
        match *self {
            Palette::Unit => {
                let t = v.clamp(0.0, 1.0);
                Rgb([lerp(255, 8, t), lerp(255, 48, t), lerp(255, 107, t)])
            }
            Palette::Diverging { max_abs } => {
                let t = (v / max_abs).clamp(-1.0, 1.0);
                if t >= 0.0 {
                    Rgb([lerp(255, 178, t), lerp(255, 24, t), lerp(255, 43, t)])
                } else {
                    Rgb([lerp(255, 33, -t), lerp(255, 102, -t), lerp(255, 172, -t)])
                }
            }
        }
    }
}

/// Render a row-major `times x sites` grid.
pub fn render(values: &[f64], times: usize, sites: usize) -> RgbImage {
    assert_eq!(values.len(), times * sites);
    let palette = Palette::for_values(values);
    let cell = (TARGET_PIXELS / times.max(sites).max(1)).clamp(1, 16) as u32;
    let (w, h) = (times as u32 * cell, sites as u32 * cell);
    RgbImage::from_fn(w.max(1), h.max(1), |x, y| {
        let t = (x / cell) as usize;
        let s = sites.saturating_sub(1 + (y / cell) as usize);
        if t < times && s < sites {
            palette.color(values[t * sites + s])
        } else {
            Rgb([128, 128, 128])
        }
    })
}

pub fn write_png(path: &Path, values: &[f64], times: usize, sites: usize) -> CliResult<()> {
    render(values, times, sites)
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| invalid(format!("{}: {e}", path.display())))
}
