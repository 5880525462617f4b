//! Annotation ingestion, class-incremental split construction and the
//! synthetic shape-captioning dataset.

mod annotations;
mod images;
mod source;
mod split;
mod synthetic;

pub use annotations::{
    filter_clear_images, load_annotations, AnnotationSet, CaptionRecord, Category, CategoryLabel, ImageRecord, Pool,
};
pub use images::{load_image_file, ImageData, ImageStore, ResizeFilter};
pub use source::{DataSource, Dataset};
pub use split::{build_split, manifest_path, read_manifest, write_manifests, SplitOutcome, TaskSpec};
pub use synthetic::{
    generate_synthetic, generate_synthetic_with, shape_category_id, SynthConfig, SyntheticScene, COLORS, POSITIONS,
    SHAPES, SIZES,
};

pub type ImageId = u64;
pub type CategoryId = u32;
