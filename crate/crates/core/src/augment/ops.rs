//! Raster transforms used by the view generators. All operate on RGB8.

use image::imageops::{self, FilterType};
use image::{Rgb, RgbImage};

pub fn crop(image: &RgbImage, x: u32, y: u32, width: u32, height: u32) -> RgbImage {
    imageops::crop_imm(image, x, y, width.max(1), height.max(1)).to_image()
}

/// Centered crop keeping `fraction` of each side.
pub fn center_crop(image: &RgbImage, fraction: f64) -> RgbImage {
    let (w, h) = image.dimensions();
    let cw = ((w as f64 * fraction).round() as u32).clamp(1, w);
    let ch = ((h as f64 * fraction).round() as u32).clamp(1, h);
    crop(image, (w - cw) / 2, (h - ch) / 2, cw, ch)
}

pub fn resize(image: &RgbImage, side: u32) -> RgbImage {
    crate::backend::resize_square(image, side, FilterType::Triangle)
}

pub fn grayscale(image: &RgbImage) -> RgbImage {
    let mut out = image.clone();
    for p in out.pixels_mut() {
        let l = luma(p);
        let v = l.round().clamp(0.0, 255.0) as u8;
        *p = Rgb([v, v, v]);
    }
    out
}

fn luma(p: &Rgb<u8>) -> f64 {
    0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64
}

fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Multiplies every channel by `factor`.
pub fn adjust_brightness(image: &RgbImage, factor: f64) -> RgbImage {
    let mut out = image.clone();
    for p in out.pixels_mut() {
        for c in p.0.iter_mut() {
            *c = clamp_u8(*c as f64 * factor);
        }
    }
    out
}

/// Blends each pixel with the image's mean luminance.
pub fn adjust_contrast(image: &RgbImage, factor: f64) -> RgbImage {
    let n = (image.width() as f64 * image.height() as f64).max(1.0);
    let mean = image.pixels().map(luma).sum::<f64>() / n;
    let mut out = image.clone();
    for p in out.pixels_mut() {
        for c in p.0.iter_mut() {
            *c = clamp_u8(factor * *c as f64 + (1.0 - factor) * mean);
        }
    }
    out
}

/// Blends each pixel with its own luminance.
pub fn adjust_saturation(image: &RgbImage, factor: f64) -> RgbImage {
    let mut out = image.clone();
    for p in out.pixels_mut() {
        let l = luma(p);
        for c in p.0.iter_mut() {
            *c = clamp_u8(factor * *c as f64 + (1.0 - factor) * l);
        }
    }
    out
}

pub fn blur(image: &RgbImage, sigma: f32) -> RgbImage {
    if sigma <= 0.0 {
        return image.clone();
    }
    imageops::blur(image, sigma)
}

/// Rotates by `degrees` about the image center with bilinear sampling.
/// Pixels that fall outside the source are black.
pub fn rotate(image: &RgbImage, degrees: f64) -> RgbImage {
    let (w, h) = image.dimensions();
    let (sin, cos) = degrees.to_radians().sin_cos();
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let sample = |x: f64, y: f64, c: usize| -> Option<f64> {
        const EPS: f64 = 1e-9;
        let (xmax, ymax) = ((w - 1) as f64, (h - 1) as f64);
        if x < -EPS || y < -EPS || x > xmax + EPS || y > ymax + EPS {
            return None;
        }
        let (x, y) = (x.clamp(0.0, xmax), y.clamp(0.0, ymax));
        let (x0, y0) = (x.floor() as u32, y.floor() as u32);
        let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let px = |xx, yy| image.get_pixel(xx, yy)[c] as f64;
        let top = px(x0, y0) * (1.0 - fx) + px(x1, y0) * fx;
        let bottom = px(x0, y1) * (1.0 - fx) + px(x1, y1) * fx;
        Some(top * (1.0 - fy) + bottom * fy)
    };
    RgbImage::from_fn(w, h, |x, y| {
        // inverse mapping: destination pixel back into the source
        let dx = x as f64 - cx;
        let dy = y as f64 - cy;
        let sx = cos * dx - sin * dy + cx;
        let sy = sin * dx + cos * dy + cy;
        let mut px = [0u8; 3];
        for (c, v) in px.iter_mut().enumerate() {
            *v = sample(sx, sy, c).map_or(0, clamp_u8);
        }
        Rgb(px)
    })
}
