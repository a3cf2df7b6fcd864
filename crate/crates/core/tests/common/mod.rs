//! Synthetic datasets for integration tests.
//!
//! Images are procedural 48x48 PNGs. The gold image of every sample is
//! anchored in the mock backend to either the context phrase or the first
//! photo prompt, with a per-sample weight, so both the vanilla and the
//! prompted pipelines see some signal and neither is perfect.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TARGETS: [&str; 20] = [
    "bank", "router", "bass", "crane", "mouse", "pitcher", "seal", "bat", "spring", "pen", "match",
    "mole", "palm", "jam", "kite", "club", "bow", "organ", "nail", "bolt",
];
pub const CONTEXTS: [&str; 20] = [
    "erosion", "internet", "fish", "construction", "computer", "baseball", "animal", "cave",
    "water", "pig", "fire", "skin", "tree", "traffic", "bird", "golf", "violin", "church", "finger",
    "lightning",
];

pub const IMAGE_SIDE: u32 = 48;

pub struct Fixture {
    pub dir: PathBuf,
    pub data: PathBuf,
    pub gold: PathBuf,
    pub images: PathBuf,
    pub anchors: PathBuf,
    pub lexicon: PathBuf,
    /// Base config: mock backend, 64 dims, 32 px, anchors, timing off.
    pub config: PathBuf,
}

pub fn procedural_image(rng: &mut ChaCha8Rng) -> RgbImage {
    let base: [f64; 3] = [rng.random(), rng.random(), rng.random()];
    let grad: [f64; 3] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
    let rects: Vec<(u32, u32, u32, u32, [u8; 3])> = (0..3)
        .map(|_| {
            let x = rng.random_range(0..IMAGE_SIDE - 8);
            let y = rng.random_range(0..IMAGE_SIDE - 8);
            let w = rng.random_range(4..=IMAGE_SIDE - x);
            let h = rng.random_range(4..=IMAGE_SIDE - y);
            (x, y, w, h, [rng.random(), rng.random(), rng.random()])
        })
        .collect();
    RgbImage::from_fn(IMAGE_SIDE, IMAGE_SIDE, |x, y| {
        for &(rx, ry, rw, rh, c) in &rects {
            if x >= rx && x < rx + rw && y >= ry && y < ry + rh && (x + y) % 3 != 0 {
                return Rgb(c);
            }
        }
        let t = (x + y) as f64 / (2 * IMAGE_SIDE) as f64;
        let ch = |i: usize| ((base[i] + grad[i] * t).clamp(0.0, 1.0) * 255.0).round() as u8;
        Rgb([ch(0), ch(1), ch(2)])
    })
}

pub struct GeneratedSample {
    pub target: String,
    pub phrase: String,
    pub candidates: Vec<String>,
    pub gold: usize,
}

/// Writes an `n`-sample fixture into `dir`.
pub fn write_fixture(dir: &Path, n: usize, seed: u64) -> Fixture {
    let images = dir.join("images");
    fs::create_dir_all(&images).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = String::from("target\tphrase\t1\t2\t3\t4\t5\t6\t7\t8\t9\t10\n");
    let mut gold = String::new();
    let mut anchors = String::new();
    for i in 0..n {
        let s = generate_sample(&mut rng, i, &images);
        let _ = writeln!(data, "{}\t{}\t{}", s.target, s.phrase, s.candidates.join("\t"));
        let _ = writeln!(gold, "{}", s.candidates[s.gold]);
        let weight = rng.random_range(0.25..0.65);
        let context = s.phrase.split(' ').find(|w| *w != s.target).unwrap_or("");
        let text = if i % 2 == 0 {
            s.phrase.clone()
        } else {
            format!("a photo of {} {}", s.target, context)
        };
        let _ = writeln!(anchors, "{}\t{}\t{:.4}", s.candidates[s.gold], text, weight);
    }

    let mut lexicon = String::new();
    for t in TARGETS {
        let _ = writeln!(
            lexicon,
            "{t}\t{t}_alt|{t}_variant\tfirst sense of {t}|second sense of {t}|third sense of {t}"
        );
        let _ = writeln!(lexicon, "{t}_alt\t\tan alternative {t}");
    }
    for c in CONTEXTS {
        let _ = writeln!(lexicon, "{c}\t{c}_like\tthings about {c}");
    }

    let fixture = Fixture {
        dir: dir.to_path_buf(),
        data: dir.join("data.tsv"),
        gold: dir.join("gold.txt"),
        images: images.clone(),
        anchors: images.join("anchors.tsv"),
        lexicon: dir.join("lexicon.tsv"),
        config: dir.join("base.toml"),
    };
    fs::write(&fixture.data, data).unwrap();
    fs::write(&fixture.gold, gold).unwrap();
    fs::write(&fixture.anchors, anchors).unwrap();
    fs::write(&fixture.lexicon, lexicon).unwrap();
    fs::write(&fixture.config, base_config()).unwrap();
    fixture
}

fn generate_sample(rng: &mut ChaCha8Rng, i: usize, images: &Path) -> GeneratedSample {
    let target = TARGETS[rng.random_range(0..TARGETS.len())].to_string();
    let context = CONTEXTS[rng.random_range(0..CONTEXTS.len())];
    let phrase = if rng.random_bool(0.5) {
        format!("{context} {target}")
    } else {
        format!("{target} {context}")
    };
    let candidates: Vec<String> = (0..10)
        .map(|j| {
            let name = format!("s{i:03}_c{j}.png");
            procedural_image(rng).save(images.join(&name)).unwrap();
            name
        })
        .collect();
    GeneratedSample {
        target,
        phrase,
        candidates,
        gold: rng.random_range(0..10),
    }
}

pub fn base_config() -> String {
    "backend = \"mock\"\n\
     mock_dim = 64\n\
     mock_resolution = 32\n\
     mock_anchors = \"images/anchors.tsv\"\n\
     data = \"data.tsv\"\n\
     gold = \"gold.txt\"\n\
     images = \"images\"\n\
     lexicon = \"lexicon.tsv\"\n\
     timing = false\n"
        .to_string()
}

/// Writes `base + extra` as `name.toml` in the fixture directory.
pub fn variant(fixture: &Fixture, name: &str, extra: &str) -> PathBuf {
    let path = fixture.dir.join(format!("{name}.toml"));
    fs::write(&path, format!("{}{}", base_config(), extra)).unwrap();
    path
}

pub const VANILLA: &str = "prompting = false\naugmentation = \"single-view\"\ntau = 1.0\n";
pub const PROMPTING_ONLY: &str = "augmentation = \"single-view\"\ntau = 0.7\nbeta_p = 0.6\nbeta_s = 0.4\n";
pub const AUGMENTATION_ONLY: &str = "prompting = false\ntau = 0.7\n";
pub const FULL: &str = "tau = 0.7\nbeta_p = 0.6\nbeta_s = 0.4\nsynonym_prompts = true\n";
