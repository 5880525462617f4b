//! Procedural shape scenes with templated captions, one shape per scene.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::images::{ImageData, ImageStore};
use super::{AnnotationSet, CaptionRecord, Category, CategoryId, CategoryLabel, ImageRecord, Pool};
use crate::error::{Error, Result};

/// Shape names; the category id of `SHAPES[i]` is `i + 1`.
pub const SHAPES: [&str; 12] = [
    "square", "circle", "triangle", "cross", "diamond", "ring", "bar", "pillar", "frame", "hourglass", "crescent",
    "star",
];

pub const COLORS: [(&str, [u8; 3]); 4] = [
    ("red", [220, 40, 40]),
    ("green", [40, 200, 60]),
    ("blue", [50, 80, 235]),
    ("yellow", [235, 215, 40]),
];

pub const SIZES: [(&str, f32); 2] = [("small", 0.17), ("large", 0.25)];

pub const POSITIONS: [(&str, (f32, f32)); 5] = [
    ("center", (0.5, 0.5)),
    ("left", (0.27, 0.5)),
    ("right", (0.73, 0.5)),
    ("top", (0.5, 0.27)),
    ("bottom", (0.5, 0.73)),
];

// {n} noun, {c} color, {s} size, {p} position, {x} shape-specific phrase
const SKELETONS: [&str; 8] = [
    "a {s} {c} {n} on the {p}",
    "there is a {c} {n} in the {p} {x}",
    "a {c} {n} {x} that looks {s}",
    "the {n} is {c} and {s}",
    "a {s} {n} painted {c} at the {p}",
    "{c} {n} near the {p} side {x}",
    "one {s} {c} {n} sits at the {p}",
    "an image of a {c} {n} {x}",
];

struct ShapeInfo {
    phrase: &'static str,
    skeletons: [usize; 3],
}

const SHAPE_INFO: [ShapeInfo; 12] = [
    ShapeInfo { phrase: "with four corners", skeletons: [0, 1, 6] },
    ShapeInfo { phrase: "perfectly round", skeletons: [0, 3, 1] },
    ShapeInfo { phrase: "with three sides", skeletons: [1, 6, 3] },
    ShapeInfo { phrase: "shaped like a plus", skeletons: [0, 6, 1] },
    ShapeInfo { phrase: "standing on its tip", skeletons: [3, 1, 0] },
    ShapeInfo { phrase: "with a hole", skeletons: [6, 0, 1] },
    ShapeInfo { phrase: "lying flat", skeletons: [2, 4, 5] },
    ShapeInfo { phrase: "standing tall", skeletons: [4, 7, 2] },
    ShapeInfo { phrase: "with an empty middle", skeletons: [5, 2, 7] },
    ShapeInfo { phrase: "pinched in the middle", skeletons: [7, 4, 5] },
    ShapeInfo { phrase: "like the moon", skeletons: [2, 5, 4] },
    ShapeInfo { phrase: "with five points", skeletons: [4, 7, 5] },
];

pub fn shape_category_id(name: &str) -> Option<CategoryId> {
    SHAPES.iter().position(|s| *s == name).map(|i| i as CategoryId + 1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub width: u32,
    pub height: u32,
    /// Upper bound of the uniform background noise (0-255 scale).
    pub background_noise: u8,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            width: 24,
            height: 24,
            background_noise: 40,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScene {
    pub image: ImageData,
    pub shape_class: CategoryId,
    pub color: &'static str,
    pub size: &'static str,
    pub position: &'static str,
    pub references: Vec<String>,
}

impl SyntheticScene {
    /// Channels-first canvas in `[0, 1]`.
    pub fn canvas(&self) -> Vec<f32> {
        self.image.to_chw()
    }
}

fn inside(shape: usize, dx: f32, dy: f32) -> bool {
    let (ax, ay) = (dx.abs(), dy.abs());
    let rho = (dx * dx + dy * dy).sqrt();
    match SHAPES[shape] {
        "square" => ax <= 0.8 && ay <= 0.8,
        "circle" => rho <= 1.0,
        "triangle" => (-0.9..=0.8).contains(&dy) && ax <= (dy + 0.9) * 0.6,
        "cross" => (ax <= 0.3 && ay <= 1.0) || (ay <= 0.3 && ax <= 1.0),
        "diamond" => ax + ay <= 1.0,
        "ring" => (0.5..=1.0).contains(&rho),
        "bar" => ax <= 1.0 && ay <= 0.35,
        "pillar" => ax <= 0.35 && ay <= 1.0,
        "frame" => (0.5..=0.9).contains(&ax.max(ay)),
        "hourglass" => ay <= 0.9 && ax <= ay,
        "crescent" => rho <= 1.0 && (dx - 0.45).powi(2) + dy * dy > 0.5,
        "star" => {
            let theta = dy.atan2(dx) + std::f32::consts::FRAC_PI_2;
            rho <= 0.4 + 0.6 * (5.0 * theta).cos().max(0.0)
        }
        _ => unreachable!("shape table and mask table agree"),
    }
}

fn render(config: &SynthConfig, shape: usize, rgb: [u8; 3], radius: f32, center: (f32, f32), rng: &mut ChaCha8Rng) -> ImageData {
    let mut img = ImageData::new(config.width, config.height);
    let scale = config.width.min(config.height) as f32;
    let (cx, cy) = (center.0 * config.width as f32, center.1 * config.height as f32);
    let r = radius * scale;
    for y in 0..config.height {
        for x in 0..config.width {
            let dx = (x as f32 + 0.5 - cx) / r;
            let dy = (y as f32 + 0.5 - cy) / r;
            let px = if inside(shape, dx, dy) {
                rgb.map(|v| v.saturating_add(rng.gen_range(0..16)).saturating_sub(8))
            } else {
                let hi = config.background_noise.max(1);
                [rng.gen_range(0..hi), rng.gen_range(0..hi), rng.gen_range(0..hi)]
            };
            img.put(x, y, px);
        }
    }
    img
}

fn fill_template(skeleton: &str, noun: &str, color: &str, size: &str, position: &str, phrase: &str) -> String {
    let text = skeleton
        .replace("{n}", noun)
        .replace("{c}", color)
        .replace("{s}", size)
        .replace("{p}", position)
        .replace("{x}", phrase);
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Renders `n_per_class` scenes per class, in class order.
pub fn generate_scenes(config: &SynthConfig, class_list: &[&str], n_per_class: usize, seed: u64) -> Result<Vec<SyntheticScene>> {
    if n_per_class < 3 {
        return Err(Error::Config(format!("need at least 3 scenes per class, got {n_per_class}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scenes = Vec::with_capacity(class_list.len() * n_per_class);
    for name in class_list {
        let shape = SHAPES
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| Error::Config(format!("unknown shape {name:?}")))?;
        let info = &SHAPE_INFO[shape];
        for _ in 0..n_per_class {
            let &(color, rgb) = COLORS.choose(&mut rng).expect("non-empty");
            let &(size, radius) = SIZES.choose(&mut rng).expect("non-empty");
            let &(position, center) = POSITIONS.choose(&mut rng).expect("non-empty");
            let image = render(config, shape, rgb, radius, center, &mut rng);
            let references = info
                .skeletons
                .iter()
                .map(|&k| fill_template(SKELETONS[k], SHAPES[shape], color, size, position, info.phrase))
                .collect();
            scenes.push(SyntheticScene {
                image,
                shape_class: shape as CategoryId + 1,
                color,
                size,
                position,
                references,
            });
        }
    }
    Ok(scenes)
}

/// Synthetic dataset as annotations plus pixels. Within each class, scenes
/// with index ≡ 1 or 3 (mod 5) form the validation pool, the rest train.
pub fn generate_synthetic(class_list: &[&str], n_per_class: usize, seed: u64) -> Result<(AnnotationSet, ImageStore)> {
    generate_synthetic_with(&SynthConfig::default(), class_list, n_per_class, seed)
}

pub fn generate_synthetic_with(
    config: &SynthConfig,
    class_list: &[&str],
    n_per_class: usize,
    seed: u64,
) -> Result<(AnnotationSet, ImageStore)> {
    let scenes = generate_scenes(config, class_list, n_per_class, seed)?;
    let mut ann = AnnotationSet {
        categories: SHAPES
            .iter()
            .enumerate()
            .map(|(i, s)| Category {
                id: i as CategoryId + 1,
                name: s.to_string(),
            })
            .collect(),
        ..Default::default()
    };
    let mut store = ImageStore::default();
    for (k, scene) in scenes.into_iter().enumerate() {
        let id = k as u64 + 1;
        let pool = if matches!((k % n_per_class) % 5, 1 | 3) { Pool::Val } else { Pool::Train };
        ann.images.push(ImageRecord {
            id,
            width: config.width,
            height: config.height,
            file_name: format!("images/{id:06}.ppm"),
            split: Some(pool),
        });
        ann.labels.push(CategoryLabel {
            image_id: id,
            category_id: scene.shape_class,
        });
        ann.captions.extend(scene.references.into_iter().map(|caption| CaptionRecord { image_id: id, caption }));
        store.insert(id, scene.image);
    }
    Ok((ann, store))
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::dataio::filter_clear_images;

    #[test]
    fn three_squares() {
        let (ann, store) = generate_synthetic(&["square"], 3, 7).unwrap();
        assert_eq!(ann.images.len(), 3);
        assert_eq!(store.len(), 3);
        assert!(ann.labels.iter().all(|l| l.category_id == shape_category_id("square").unwrap()));
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_synthetic(&["square", "ring"], 5, 7).unwrap();
        let b = generate_synthetic(&["square", "ring"], 5, 7).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&["square", "ring"], 5, 8).unwrap();
        assert_ne!(a.1, c.1);
    }

    #[test]
    fn clear_by_construction() {
        let (ann, _) = generate_synthetic(&["square", "circle"], 100, 1).unwrap();
        let universe: BTreeSet<u32> = ann.categories.iter().map(|c| c.id).collect();
        let filtered = filter_clear_images(&ann, &universe);
        assert_eq!(filtered.images.len(), ann.images.len());
    }

    #[test]
    fn references_mention_the_shape() {
        let scenes = generate_scenes(&SynthConfig::default(), &SHAPES, 4, 3).unwrap();
        for s in &scenes {
            let noun = SHAPES[s.shape_class as usize - 1];
            assert!(s.references.len() >= 2);
            assert!(s.references.iter().all(|r| r.split(' ').any(|w| w == noun)), "{:?}", s.references);
            assert!(s.canvas().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn every_shape_draws_pixels() {
        let cfg = SynthConfig { background_noise: 1, ..Default::default() };
        for s in generate_scenes(&cfg, &SHAPES, 3, 11).unwrap() {
            let lit = s.image.pixels.chunks(3).filter(|p| p.iter().any(|&v| v > 30)).count();
            assert!(lit >= 8, "{} has only {lit} pixels", s.shape_class);
        }
    }

    #[test]
    fn unknown_shape_is_config_error() {
        assert!(matches!(generate_synthetic(&["blob"], 3, 0), Err(Error::Config(_))));
        assert!(matches!(generate_synthetic(&["square"], 2, 0), Err(Error::Config(_))));
    }
}
