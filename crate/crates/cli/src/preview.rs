//! 8-bit grayscale previews of detector images.

use std::path::Path;

use anyhow::Context;
use image::GrayImage;

/// Parses `LO:HI`.
pub fn parse_window(s: &str) -> Result<(f32, f32), String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("expected LO:HI, got '{s}'"))?;
    let lo: f32 = lo.trim().parse().map_err(|_| format!("bad lower bound '{lo}'"))?;
    let hi: f32 = hi.trim().parse().map_err(|_| format!("bad upper bound '{hi}'"))?;
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(format!("window needs finite LO < HI, got {lo}:{hi}"));
    }
    Ok((lo, hi))
}

/// Maps `image` (row-major `[v][u]`) to gray levels. Row `v = n_v - 1` is
/// drawn at the top so +z points up. Without a window the image's own
/// min/max is used; a constant image maps to black.
pub fn to_gray(image: &[f32], n_v: usize, n_u: usize, window: Option<(f32, f32)>) -> GrayImage {
    let (lo, hi) = window.unwrap_or_else(|| {
        image
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)))
    });
    let span = hi - lo;
    GrayImage::from_fn(n_u as u32, n_v as u32, |x, y| {
        let v = n_v - 1 - y as usize;
        let value = image[v * n_u + x as usize];
        let level = if span > 0.0 {
            ((value - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8
        } else {
            0
        };
        image::Luma([level])
    })
}

pub fn write_png(
    path: &Path,
    image: &[f32],
    n_v: usize,
    n_u: usize,
    window: Option<(f32, f32)>,
) -> anyhow::Result<()> {
    to_gray(image, n_v, n_u, window)
        .save(path)
        .with_context(|| format!("writing {}", path.display()))
}
