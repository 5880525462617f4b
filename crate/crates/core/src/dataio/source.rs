use std::collections::BTreeMap;
use std::path::PathBuf;

use super::images::{load_image_file, ImageStore, ResizeFilter};
use super::{AnnotationSet, ImageId};
use crate::error::{Error, Result};

/// Read access to images and reference captions by image id.
pub trait DataSource: Sync {
    /// Channels-first RGB in `[0, 1]`, resized to the model input size.
    fn image(&self, id: ImageId) -> Result<Vec<f32>>;

    fn captions(&self, id: ImageId) -> Result<Vec<String>>;
}

enum Backend {
    Memory(ImageStore),
    Disk { root: PathBuf, filter: ResizeFilter },
}

/// Annotations plus pixels, either held in memory or decoded from disk.
pub struct Dataset {
    annotations: AnnotationSet,
    captions: BTreeMap<ImageId, Vec<String>>,
    file_names: BTreeMap<ImageId, String>,
    backend: Backend,
    input_size: (u32, u32),
}

impl Dataset {
    pub fn in_memory(annotations: AnnotationSet, images: ImageStore, input_size: (u32, u32)) -> Self {
        Self::build(annotations, Backend::Memory(images), input_size)
    }

    /// Images are read from `root/<file_name>` and resized on every load.
    pub fn on_disk(annotations: AnnotationSet, root: PathBuf, filter: ResizeFilter, input_size: (u32, u32)) -> Self {
        Self::build(annotations, Backend::Disk { root, filter }, input_size)
    }

    fn build(annotations: AnnotationSet, backend: Backend, input_size: (u32, u32)) -> Self {
        Self {
            captions: annotations.captions_by_image(),
            file_names: annotations.images.iter().map(|i| (i.id, i.file_name.clone())).collect(),
            annotations,
            backend,
            input_size,
        }
    }

    pub fn annotations(&self) -> &AnnotationSet {
        &self.annotations
    }
}

impl DataSource for Dataset {
    fn image(&self, id: ImageId) -> Result<Vec<f32>> {
        let (w, h) = self.input_size;
        let data = match &self.backend {
            Backend::Memory(store) => store
                .get(id)
                .ok_or_else(|| Error::Validation(format!("no pixels for image {id}")))?
                .resized(w, h, ResizeFilter::Nearest),
            Backend::Disk { root, filter } => {
                let name = self
                    .file_names
                    .get(&id)
                    .ok_or_else(|| Error::Validation(format!("unknown image {id}")))?;
                load_image_file(&root.join(name), Some((w, h)), *filter)?
            }
        };
        Ok(data.to_chw())
    }

    fn captions(&self, id: ImageId) -> Result<Vec<String>> {
        self.captions
            .get(&id)
            .cloned()
            .ok_or_else(|| Error::Validation(format!("no captions for image {id}")))
    }
}
