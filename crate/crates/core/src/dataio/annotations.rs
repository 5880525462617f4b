use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{CategoryId, ImageId};
use crate::error::{Error, Result};

/// Which original pool an image came from: training images stay training
/// images, the validation pool is halved into validation and test.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pool {
    #[default]
    Train,
    Val,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: ImageId,
    #[serde(default)]
    pub width: u32,
    #[serde(default)]
    pub height: u32,
    #[serde(default)]
    pub file_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Pool>,
}

impl ImageRecord {
    /// Explicit `split` field first; otherwise COCO's `val2014`-style file names.
    pub fn pool(&self) -> Pool {
        self.split.unwrap_or_else(|| {
            if self.file_name.contains("val") {
                Pool::Val
            } else {
                Pool::Train
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub image_id: ImageId,
    pub caption: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryLabel {
    pub image_id: ImageId,
    pub category_id: CategoryId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: CategoryId,
    #[serde(default)]
    pub name: String,
}

/// Images, their captions and their category labels, cross-checked.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AnnotationSet {
    pub images: Vec<ImageRecord>,
    pub captions: Vec<CaptionRecord>,
    pub labels: Vec<CategoryLabel>,
    pub categories: Vec<Category>,
}

#[derive(Deserialize)]
struct RawAnnotation {
    image_id: ImageId,
    #[serde(default)]
    caption: Option<String>,
    #[serde(default)]
    category_id: Option<CategoryId>,
}

fn parse_records<T: serde::de::DeserializeOwned>(root: &Value, key: &str, required: bool) -> Result<Vec<T>> {
    let Some(value) = root.get(key) else {
        return if required {
            Err(Error::parse(key, "missing array"))
        } else {
            Ok(Vec::new())
        };
    };
    let items = value
        .as_array()
        .ok_or_else(|| Error::parse(key, "expected an array"))?;
    items
        .iter()
        .enumerate()
        .map(|(i, item)| T::deserialize(item).map_err(|e| Error::parse(format!("{key}[{i}]"), e)))
        .collect()
}

/// Reads a COCO-style file with `images`, `annotations` and `categories`.
/// Annotation records may carry a `caption`, a `category_id`, or both.
pub fn load_annotations(path: &Path) -> Result<AnnotationSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    AnnotationSet::from_json_str(&text)
}

impl AnnotationSet {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let root: Value = serde_json::from_str(text).map_err(|e| Error::parse("annotation file", e))?;
        let images: Vec<ImageRecord> = parse_records(&root, "images", true)?;
        let raw: Vec<RawAnnotation> = parse_records(&root, "annotations", false)?;
        let categories: Vec<Category> = parse_records(&root, "categories", false)?;

        let mut set = AnnotationSet {
            images,
            categories,
            ..Default::default()
        };
        for a in raw {
            if let Some(caption) = a.caption {
                set.captions.push(CaptionRecord {
                    image_id: a.image_id,
                    caption,
                });
            }
            if let Some(category_id) = a.category_id {
                set.labels.push(CategoryLabel {
                    image_id: a.image_id,
                    category_id,
                });
            }
        }
        set.validate()?;
        Ok(set)
    }

    pub fn to_json_value(&self) -> Value {
        let mut annotations: Vec<Value> = Vec::with_capacity(self.captions.len() + self.labels.len());
        let mut next_id = 1u64;
        for c in &self.captions {
            annotations.push(serde_json::json!({"id": next_id, "image_id": c.image_id, "caption": c.caption}));
            next_id += 1;
        }
        for l in &self.labels {
            annotations.push(serde_json::json!({"id": next_id, "image_id": l.image_id, "category_id": l.category_id}));
            next_id += 1;
        }
        serde_json::json!({
            "images": self.images,
            "annotations": annotations,
            "categories": self.categories,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_json_value()).expect("annotation json serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Unique image ids, no dangling references, labels inside the declared
    /// categories (when any are declared).
    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::with_capacity(self.images.len());
        for img in &self.images {
            if !ids.insert(img.id) {
                return Err(Error::Validation(format!("duplicate image id {}", img.id)));
            }
        }
        for (i, c) in self.captions.iter().enumerate() {
            if !ids.contains(&c.image_id) {
                return Err(Error::Validation(format!(
                    "caption {i} references missing image_id {}",
                    c.image_id
                )));
            }
        }
        let universe: HashSet<CategoryId> = self.categories.iter().map(|c| c.id).collect();
        for (i, l) in self.labels.iter().enumerate() {
            if !ids.contains(&l.image_id) {
                return Err(Error::Validation(format!(
                    "category label {i} references missing image_id {}",
                    l.image_id
                )));
            }
            if !universe.is_empty() && !universe.contains(&l.category_id) {
                return Err(Error::Validation(format!(
                    "category label {i} uses undeclared category_id {}",
                    l.category_id
                )));
            }
        }
        Ok(())
    }

    /// Concatenates two sets (e.g. a captions file and an instances file).
    /// Images present in both are kept once.
    pub fn merge(mut self, other: AnnotationSet) -> Result<Self> {
        let known: HashSet<ImageId> = self.images.iter().map(|i| i.id).collect();
        self.images.extend(other.images.into_iter().filter(|i| !known.contains(&i.id)));
        self.captions.extend(other.captions);
        self.labels.extend(other.labels);
        let cats: HashSet<CategoryId> = self.categories.iter().map(|c| c.id).collect();
        self.categories
            .extend(other.categories.into_iter().filter(|c| !cats.contains(&c.id)));
        self.validate()?;
        Ok(self)
    }

    pub fn image(&self, id: ImageId) -> Option<&ImageRecord> {
        self.images.iter().find(|i| i.id == id)
    }

    /// Distinct labeled classes per image.
    pub fn classes_by_image(&self) -> BTreeMap<ImageId, BTreeSet<CategoryId>> {
        let mut out: BTreeMap<ImageId, BTreeSet<CategoryId>> =
            self.images.iter().map(|i| (i.id, BTreeSet::new())).collect();
        for l in &self.labels {
            out.entry(l.image_id).or_default().insert(l.category_id);
        }
        out
    }

    pub fn captions_by_image(&self) -> BTreeMap<ImageId, Vec<String>> {
        let mut out: BTreeMap<ImageId, Vec<String>> = BTreeMap::new();
        for c in &self.captions {
            out.entry(c.image_id).or_default().push(c.caption.clone());
        }
        out
    }

    /// Keeps only the listed images (and their captions and labels).
    pub fn retain_images(&self, keep: &HashSet<ImageId>) -> AnnotationSet {
        AnnotationSet {
            images: self.images.iter().filter(|i| keep.contains(&i.id)).cloned().collect(),
            captions: self
                .captions
                .iter()
                .filter(|c| keep.contains(&c.image_id))
                .cloned()
                .collect(),
            labels: self.labels.iter().filter(|l| keep.contains(&l.image_id)).cloned().collect(),
            categories: self.categories.clone(),
        }
    }
}

/// Keeps images with exactly one labeled class from `class_universe`; labels
/// outside the universe do not count.
pub fn filter_clear_images(ann: &AnnotationSet, class_universe: &BTreeSet<CategoryId>) -> AnnotationSet {
    let keep: HashSet<ImageId> = ann
        .classes_by_image()
        .into_iter()
        .filter(|(_, classes)| classes.intersection(class_universe).count() == 1)
        .map(|(id, _)| id)
        .collect();
    ann.retain_images(&keep)
}
