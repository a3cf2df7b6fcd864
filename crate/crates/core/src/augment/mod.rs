//! Multi-view image embeddings.
//!
//! Each candidate image is expanded into a family of views by six
//! strategies, applied in a fixed order:
//!
//! | strategy      | views (default) | kind          |
//! |---------------|-----------------|---------------|
//! | `tta`         | 5               | deterministic |
//! | `geometric`   | 3               | seeded        |
//! | `photometric` | 3               | seeded        |
//! | `multicrop`   | 4               | deterministic |
//! | `grid`        | 9               | deterministic |
//! | `midquadrant` | 4               | deterministic |
//!
//! Views are produced at the backend's input resolution. The view
//! embeddings are averaged, scaled by `1 / tau` and L2-normalized. Because
//! normalization follows the scaling, `tau` never changes the result.

pub mod ops;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backend::{stable_hash, EmbeddingBackend};
use crate::embedding::{self, Embedding};
use crate::error::{Result, VwsdError};

/// Smallest accepted input side.
pub const MIN_IMAGE_SIDE: u32 = 32;
/// Grid patches narrower than this fall back to whole-image copies.
pub const MIN_PATCH_SIDE: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Tta,
    Geometric,
    Photometric,
    Multicrop,
    Grid,
    Midquadrant,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Tta,
        Strategy::Geometric,
        Strategy::Photometric,
        Strategy::Multicrop,
        Strategy::Grid,
        Strategy::Midquadrant,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Tta => "tta",
            Strategy::Geometric => "geometric",
            Strategy::Photometric => "photometric",
            Strategy::Multicrop => "multicrop",
            Strategy::Grid => "grid",
            Strategy::Midquadrant => "midquadrant",
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, Strategy::Geometric | Strategy::Photometric)
    }

    pub fn default_count(self) -> usize {
        match self {
            Strategy::Tta => 5,
            Strategy::Geometric | Strategy::Photometric => 3,
            Strategy::Multicrop | Strategy::Midquadrant => 4,
            Strategy::Grid => 9,
        }
    }

    /// Upper bound on the view count, for strategies with a fixed menu.
    fn max_count(self) -> Option<usize> {
        match self {
            Strategy::Tta => Some(5),
            Strategy::Multicrop | Strategy::Midquadrant => Some(4),
            _ => None,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = VwsdError;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| VwsdError::Config(format!("unknown augmentation strategy `{s}`")))
    }
}

/// Parameters of the photometric jitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterStrengths {
    /// Brightness factor drawn from `[1 - b, 1 + b]`.
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    /// Gaussian blur sigma in pixels.
    pub blur_sigma: f64,
}

impl Default for JitterStrengths {
    fn default() -> Self {
        JitterStrengths {
            brightness: 0.2,
            contrast: 0.2,
            saturation: 0.2,
            blur_sigma: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationProfile {
    pub strategy_counts: BTreeMap<Strategy, usize>,
    pub seed: u64,
    pub rotation_range_degrees: (f64, f64),
    pub jitter: JitterStrengths,
    /// Side fraction kept by the tta center crop.
    pub center_crop_fraction: f64,
    /// Side fraction kept by the tta zoom-in before rescaling.
    pub zoom_fraction: f64,
    /// Lower bound of the random slight crop's side fraction.
    pub slight_crop_min: f64,
}

impl Default for AugmentationProfile {
    fn default() -> Self {
        AugmentationProfile {
            strategy_counts: Strategy::ALL.iter().map(|&s| (s, s.default_count())).collect(),
            seed: 0,
            rotation_range_degrees: (-7.0, 7.0),
            jitter: JitterStrengths::default(),
            center_crop_fraction: 0.875,
            zoom_fraction: 0.75,
            slight_crop_min: 0.9,
        }
    }
}

impl AugmentationProfile {
    /// Only the original image.
    pub fn single_view() -> Self {
        AugmentationProfile {
            strategy_counts: BTreeMap::from([(Strategy::Tta, 1)]),
            ..AugmentationProfile::default()
        }
    }

    /// A profile that runs a single strategy at its default count.
    pub fn only(strategy: Strategy) -> Self {
        AugmentationProfile {
            strategy_counts: BTreeMap::from([(strategy, strategy.default_count())]),
            ..AugmentationProfile::default()
        }
    }

    pub fn count(&self, strategy: Strategy) -> usize {
        self.strategy_counts.get(&strategy).copied().unwrap_or(0)
    }

    pub fn total_views(&self) -> usize {
        self.strategy_counts.values().sum()
    }

    pub fn is_single_view(&self) -> bool {
        self.total_views() == 1 && self.count(Strategy::Tta) == 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_views() == 0 {
            return Err(VwsdError::Config("augmentation profile has no views".into()));
        }
        for (&s, &n) in &self.strategy_counts {
            if let Some(max) = s.max_count() {
                if n > max {
                    return Err(VwsdError::Config(format!(
                        "strategy `{s}` supports at most {max} views, got {n}"
                    )));
                }
            }
            if s == Strategy::Grid && n > 0 && grid_side(n).is_none() {
                return Err(VwsdError::Config(format!(
                    "grid view count must be a perfect square, got {n}"
                )));
            }
        }
        let (lo, hi) = self.rotation_range_degrees;
        if lo.partial_cmp(&hi).is_none_or(|o| o.is_gt()) {
            return Err(VwsdError::Config("rotation range is empty".into()));
        }
        let fraction_ok = |f: f64| f > 0.0 && f <= 1.0;
        if !fraction_ok(self.center_crop_fraction)
            || !fraction_ok(self.zoom_fraction)
            || !fraction_ok(self.slight_crop_min)
        {
            return Err(VwsdError::Config("crop fractions must lie in (0, 1]".into()));
        }
        let j = &self.jitter;
        if [j.brightness, j.contrast, j.saturation].iter().any(|v| !(0.0..1.0).contains(v))
            || j.blur_sigma < 0.0
        {
            return Err(VwsdError::Config("jitter strengths out of range".into()));
        }
        Ok(())
    }
}

fn grid_side(n: usize) -> Option<u32> {
    let g = (n as f64).sqrt().round() as usize;
    (g * g == n).then_some(g as u32)
}

/// Where a view came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewLabel {
    pub strategy: Strategy,
    pub kind: String,
    /// Sampled or fixed parameters, `key=value` separated by commas.
    pub params: String,
}

impl ViewLabel {
    fn new(strategy: Strategy, kind: impl Into<String>, params: impl Into<String>) -> Self {
        ViewLabel {
            strategy,
            kind: kind.into(),
            params: params.into(),
        }
    }

    /// File-name friendly label, e.g. `geometric_rotate`.
    pub fn slug(&self) -> String {
        format!("{}_{}", self.strategy, self.kind)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewSet {
    pub views: Vec<RgbImage>,
    pub provenance: Vec<ViewLabel>,
}

impl ViewSet {
    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }

    fn push(&mut self, view: RgbImage, label: ViewLabel) {
        self.views.push(view);
        self.provenance.push(label);
    }
}

fn strategy_rng(profile: &AugmentationProfile, image_key: &str, strategy: Strategy) -> ChaCha8Rng {
    let mut bytes = image_key.as_bytes().to_vec();
    bytes.push(0);
    bytes.extend_from_slice(strategy.name().as_bytes());
    ChaCha8Rng::seed_from_u64(stable_hash(profile.seed, b"augment", &bytes))
}

/// Expands `image` into the views described by `profile`, each resized to
/// `resolution x resolution`. `image_key` (normally the image reference)
/// salts the random draws so different images get different jitter.
pub fn generate_views(
    image: &RgbImage,
    profile: &AugmentationProfile,
    image_key: &str,
    resolution: u32,
) -> Result<ViewSet> {
    profile.validate()?;
    let (w, h) = image.dimensions();
    if w.min(h) < MIN_IMAGE_SIDE {
        return Err(VwsdError::image(
            image_key,
            format!("{w}x{h} is below the {MIN_IMAGE_SIDE}px minimum side"),
        ));
    }
    let out = |img: &RgbImage| ops::resize(img, resolution);
    let mut set = ViewSet {
        views: Vec::with_capacity(profile.total_views()),
        provenance: Vec::with_capacity(profile.total_views()),
    };

    for strategy in Strategy::ALL {
        let n = profile.count(strategy);
        if n == 0 {
            continue;
        }
        match strategy {
            Strategy::Tta => {
                let kinds = ["original", "mirror", "center_crop", "zoom", "grayscale"];
                for kind in &kinds[..n] {
                    let (view, params) = match *kind {
                        "original" => (out(image), String::new()),
                        "mirror" => (out(&image::imageops::flip_horizontal(image)), String::new()),
                        "center_crop" => (
                            out(&ops::center_crop(image, profile.center_crop_fraction)),
                            format!("fraction={}", profile.center_crop_fraction),
                        ),
                        "zoom" => (
                            out(&ops::center_crop(image, profile.zoom_fraction)),
                            format!("fraction={}", profile.zoom_fraction),
                        ),
                        _ => (out(&ops::grayscale(image)), String::new()),
                    };
                    set.push(view, ViewLabel::new(strategy, *kind, params));
                }
            }
            Strategy::Geometric => {
                let mut rng = strategy_rng(profile, image_key, strategy);
                for i in 0..n {
                    let (view, label) = match i % 3 {
                        0 => {
                            let flipped = rng.random_bool(0.5);
                            let v = if flipped {
                                image::imageops::flip_horizontal(image)
                            } else {
                                image.clone()
                            };
                            (v, ViewLabel::new(strategy, "flip", format!("flipped={flipped}")))
                        }
                        1 => {
                            let (lo, hi) = profile.rotation_range_degrees;
                            let angle = if lo < hi { rng.random_range(lo..hi) } else { lo };
                            (
                                ops::rotate(image, angle),
                                ViewLabel::new(strategy, "rotate", format!("degrees={angle:.4}")),
                            )
                        }
                        _ => {
                            let lo = profile.slight_crop_min;
                            let f = if lo < 1.0 { rng.random_range(lo..=1.0) } else { 1.0 };
                            let cw = ((w as f64 * f).round() as u32).clamp(1, w);
                            let ch = ((h as f64 * f).round() as u32).clamp(1, h);
                            let x = rng.random_range(0..=w - cw);
                            let y = rng.random_range(0..=h - ch);
                            (
                                ops::crop(image, x, y, cw, ch),
                                ViewLabel::new(
                                    strategy,
                                    "crop",
                                    format!("fraction={f:.4},x={x},y={y}"),
                                ),
                            )
                        }
                    };
                    set.push(out(&view), label);
                }
            }
            Strategy::Photometric => {
                let mut rng = strategy_rng(profile, image_key, strategy);
                let j = profile.jitter;
                let mut factor = |strength: f64| {
                    if strength > 0.0 {
                        rng.random_range(1.0 - strength..=1.0 + strength)
                    } else {
                        1.0
                    }
                };
                for i in 0..n {
                    let (view, label) = match i % 3 {
                        0 => {
                            let b = factor(j.brightness);
                            (
                                ops::adjust_brightness(image, b),
                                ViewLabel::new(strategy, "brightness", format!("factor={b:.4}")),
                            )
                        }
                        1 => {
                            let c = factor(j.contrast);
                            let s = factor(j.saturation);
                            (
                                ops::adjust_saturation(&ops::adjust_contrast(image, c), s),
                                ViewLabel::new(
                                    strategy,
                                    "contrast_saturation",
                                    format!("contrast={c:.4},saturation={s:.4}"),
                                ),
                            )
                        }
                        _ => (
                            ops::blur(image, j.blur_sigma as f32),
                            ViewLabel::new(strategy, "blur", format!("sigma={}", j.blur_sigma)),
                        ),
                    };
                    set.push(out(&view), label);
                }
            }
            Strategy::Multicrop => {
                let (hw, hh) = (w / 2, h / 2);
                let quadrants = [
                    ("top_left", 0, 0),
                    ("top_right", w - hw, 0),
                    ("bottom_left", 0, h - hh),
                    ("bottom_right", w - hw, h - hh),
                ];
                for (kind, x, y) in &quadrants[..n] {
                    set.push(
                        out(&ops::crop(image, *x, *y, hw, hh)),
                        ViewLabel::new(strategy, *kind, format!("x={x},y={y}")),
                    );
                }
            }
            Strategy::Grid => {
                let g = grid_side(n).expect("validated perfect square");
                let (pw, ph) = (w / g, h / g);
                if pw.min(ph) < MIN_PATCH_SIDE {
                    log::warn!(
                        "{image_key}: {w}x{h} too small for a {g}x{g} grid, using whole-image copies"
                    );
                    let whole = out(image);
                    for _ in 0..n {
                        set.push(whole.clone(), ViewLabel::new(strategy, "fallback", ""));
                    }
                    continue;
                }
                for row in 0..g {
                    for col in 0..g {
                        // the last row and column absorb the remainder
                        let x = col * pw;
                        let y = row * ph;
                        let cw = if col + 1 == g { w - x } else { pw };
                        let ch = if row + 1 == g { h - y } else { ph };
                        set.push(
                            out(&ops::crop(image, x, y, cw, ch)),
                            ViewLabel::new(strategy, format!("r{row}c{col}"), format!("x={x},y={y}")),
                        );
                    }
                }
            }
            Strategy::Midquadrant => {
                let (hw, hh) = (w / 2, h / 2);
                let (qx, qy) = ((w - hw) / 2, (h - hh) / 2);
                let crops = [
                    ("left", 0, qy),
                    ("right", w - hw, qy),
                    ("top", qx, 0),
                    ("bottom", qx, h - hh),
                ];
                for (kind, x, y) in &crops[..n] {
                    set.push(
                        out(&ops::crop(image, *x, *y, hw, hh)),
                        ViewLabel::new(strategy, *kind, format!("x={x},y={y}")),
                    );
                }
            }
        }
    }
    Ok(set)
}

/// Encodes every view, averages, scales by `1 / tau` and normalizes.
/// Views that fail to encode are dropped; if all fail the error of the
/// last one is returned.
pub fn aggregate_image_embedding(
    views: &ViewSet,
    backend: &dyn EmbeddingBackend,
    tau: f64,
) -> Result<Embedding> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(VwsdError::Config(format!("tau must be positive, got {tau}")));
    }
    if views.is_empty() {
        return Err(VwsdError::EmptyInput("view set"));
    }
    let mut encoded = Vec::with_capacity(views.len());
    let mut last_err = None;
    for (view, label) in views.views.iter().zip(&views.provenance) {
        match backend.encode_image(view) {
            Ok(e) => encoded.push(e),
            Err(e) => {
                log::warn!("dropping view {}: {e}", label.slug());
                last_err = Some(e);
            }
        }
    }
    if encoded.is_empty() {
        return Err(last_err.expect("at least one view failed"));
    }
    embedding::mean(&encoded)?
        .scaled(1.0 / tau)
        .normalize("view aggregation")
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    fn picture(w: u32, h: u32) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| Rgb([(x * 3) as u8, (y * 2) as u8, ((x + y) % 256) as u8]))
    }

    #[test]
    fn default_profile_has_28_views_in_documented_split() {
        let p = AugmentationProfile::default();
        assert_eq!(p.total_views(), 28);
        let counts: Vec<usize> = Strategy::ALL.iter().map(|&s| p.count(s)).collect();
        assert_eq!(counts, vec![5, 3, 3, 4, 9, 4]);
        let set = generate_views(&picture(96, 80), &p, "img", 32).unwrap();
        assert_eq!(set.len(), 28);
        assert!(set.views.iter().all(|v| v.dimensions() == (32, 32)));
        let mut per = BTreeMap::new();
        for l in &set.provenance {
            *per.entry(l.strategy).or_insert(0) += 1;
        }
        assert_eq!(per.values().copied().collect::<Vec<_>>(), counts);
    }

    #[test]
    fn tta_only_first_view_is_resized_input() {
        let img = picture(64, 48);
        let set = generate_views(&img, &AugmentationProfile::only(Strategy::Tta), "x", 40).unwrap();
        assert_eq!(set.len(), 5);
        assert_eq!(set.views[0], ops::resize(&img, 40));
        assert_eq!(set.provenance[0].kind, "original");
    }

    #[test]
    fn seed_only_moves_stochastic_views() {
        let img = picture(64, 64);
        let a = generate_views(&img, &AugmentationProfile::default(), "k", 32).unwrap();
        let p = AugmentationProfile {
            seed: 99,
            ..AugmentationProfile::default()
        };
        let b = generate_views(&img, &p, "k", 32).unwrap();
        let mut changed = 0;
        for ((va, vb), l) in a.views.iter().zip(&b.views).zip(&a.provenance) {
            if l.strategy.is_stochastic() {
                changed += usize::from(va != vb);
            } else {
                assert_eq!(va, vb, "{} moved", l.slug());
            }
        }
        assert!(changed > 0);
    }

    #[test]
    fn image_key_salts_stochastic_views() {
        let img = picture(64, 64);
        let p = AugmentationProfile::only(Strategy::Geometric);
        let a = generate_views(&img, &p, "a.jpg", 32).unwrap();
        let b = generate_views(&img, &p, "b.jpg", 32).unwrap();
        assert_ne!(a.provenance, b.provenance);
    }

    #[test]
    fn too_small_image_is_rejected() {
        let err = generate_views(&picture(31, 64), &AugmentationProfile::default(), "tiny", 32);
        assert!(err.is_err());
    }

    #[test]
    fn small_image_grid_falls_back_to_copies() {
        let img = picture(40, 40);
        let set = generate_views(&img, &AugmentationProfile::only(Strategy::Grid), "s", 32).unwrap();
        assert_eq!(set.len(), 9);
        assert!(set.provenance.iter().all(|l| l.kind == "fallback"));
        assert!(set.views.iter().all(|v| *v == ops::resize(&img, 32)));
    }

    #[test]
    fn rotation_stays_in_range() {
        let img = picture(64, 64);
        let mut p = AugmentationProfile::only(Strategy::Geometric);
        p.strategy_counts.insert(Strategy::Geometric, 30);
        let set = generate_views(&img, &p, "r", 32).unwrap();
        for l in set.provenance.iter().filter(|l| l.kind == "rotate") {
            let deg: f64 = l.params.trim_start_matches("degrees=").parse().unwrap();
            assert!((-7.0..7.0).contains(&deg));
        }
    }

    #[test]
    fn profile_validation() {
        let mut p = AugmentationProfile::default();
        p.strategy_counts.insert(Strategy::Grid, 8);
        assert!(p.validate().is_err());
        let mut p = AugmentationProfile::default();
        p.strategy_counts.insert(Strategy::Tta, 6);
        assert!(p.validate().is_err());
        let mut p = AugmentationProfile::default();
        p.strategy_counts.insert(Strategy::Grid, 16);
        assert!(p.validate().is_ok());
        let p = AugmentationProfile {
            strategy_counts: BTreeMap::new(),
            ..AugmentationProfile::default()
        };
        assert!(p.validate().is_err());
        assert!("mosaic".parse::<Strategy>().is_err());
        assert_eq!("midquadrant".parse::<Strategy>().unwrap(), Strategy::Midquadrant);
    }

    #[test]
    fn single_view_profile() {
        let p = AugmentationProfile::single_view();
        assert!(p.is_single_view());
        assert_eq!(p.total_views(), 1);
    }
}
