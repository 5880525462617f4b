use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AnnotationSet, CategoryId, ImageId, Pool};
use crate::error::{Error, Result};

/// One task of a class-incremental sequence. Field order is the manifest's
/// key order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: u32,
    pub class_set: BTreeSet<CategoryId>,
    pub train: Vec<ImageId>,
    pub val: Vec<ImageId>,
    pub test: Vec<ImageId>,
    /// `(width, height)` applied when images are loaded.
    pub resize_to: Option<(u32, u32)>,
}

impl TaskSpec {
    /// Union of several tasks, e.g. classes added together in one stage.
    pub fn merge(task_id: u32, tasks: &[TaskSpec]) -> TaskSpec {
        let union = |f: fn(&TaskSpec) -> &Vec<ImageId>| -> Vec<ImageId> {
            let set: BTreeSet<ImageId> = tasks.iter().flat_map(|t| f(t).iter().copied()).collect();
            set.into_iter().collect()
        };
        TaskSpec {
            task_id,
            class_set: tasks.iter().flat_map(|t| t.class_set.iter().copied()).collect(),
            train: union(|t| &t.train),
            val: union(|t| &t.val),
            test: union(|t| &t.test),
            resize_to: tasks.first().and_then(|t| t.resize_to),
        }
    }

    pub fn train_and_val(&self) -> impl Iterator<Item = ImageId> + '_ {
        self.train.iter().chain(&self.val).copied()
    }

    pub fn check_disjoint(&self) -> Result<()> {
        let train: BTreeSet<_> = self.train.iter().collect();
        let val: BTreeSet<_> = self.val.iter().collect();
        let test: BTreeSet<_> = self.test.iter().collect();
        if !train.is_disjoint(&val) || !train.is_disjoint(&test) || !val.is_disjoint(&test) {
            return Err(Error::Validation(format!(
                "task {} has overlapping train/val/test lists",
                self.task_id
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SplitOutcome {
    pub tasks: Vec<TaskSpec>,
    pub warnings: Vec<String>,
}

/// One task per class in `class_ordering`. Training-pool images become the
/// task's train list; the validation pool is sorted by id and its first
/// ⌈n/2⌉ images go to val, the rest to test.
///
/// `ann` must already be clear-filtered; an image labeled with two classes of
/// the ordering is rejected. Task ids are positions in `class_ordering`.
pub fn build_split(
    ann: &AnnotationSet,
    class_ordering: &[CategoryId],
    resize_to: Option<(u32, u32)>,
) -> Result<SplitOutcome> {
    let ordering: BTreeSet<CategoryId> = class_ordering.iter().copied().collect();
    if ordering.len() != class_ordering.len() {
        return Err(Error::Config("class ordering lists a class twice".into()));
    }
    let pools: BTreeMap<ImageId, Pool> = ann.images.iter().map(|i| (i.id, i.pool())).collect();

    let mut by_class: BTreeMap<CategoryId, (Vec<ImageId>, Vec<ImageId>)> = BTreeMap::new();
    for (image_id, classes) in ann.classes_by_image() {
        let mut hits = classes.intersection(&ordering);
        let Some(&class) = hits.next() else { continue };
        if hits.next().is_some() {
            return Err(Error::Contract(format!(
                "image {image_id} carries more than one ordered class; run filter_clear_images first"
            )));
        }
        let entry = by_class.entry(class).or_default();
        match pools[&image_id] {
            Pool::Train => entry.0.push(image_id),
            Pool::Val => entry.1.push(image_id),
        }
    }

    let mut outcome = SplitOutcome::default();
    for (position, &class) in class_ordering.iter().enumerate() {
        let (mut train, mut val_pool) = by_class.remove(&class).unwrap_or_default();
        if train.is_empty() && val_pool.is_empty() {
            let warning = format!("class {class} has no images; skipped");
            log::warn!("{warning}");
            outcome.warnings.push(warning);
            continue;
        }
        train.sort_unstable();
        val_pool.sort_unstable();
        let test = val_pool.split_off(val_pool.len().div_ceil(2));
        outcome.tasks.push(TaskSpec {
            task_id: position as u32,
            class_set: [class].into(),
            train,
            val: val_pool,
            test,
            resize_to,
        });
    }
    Ok(outcome)
}

pub fn manifest_path(dir: &Path, task_id: u32) -> PathBuf {
    dir.join(format!("task_{task_id:03}.json"))
}

/// Writes `task_NNN.json` per task (pretty JSON, fixed key order).
pub fn write_manifests(tasks: &[TaskSpec], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    tasks
        .iter()
        .map(|t| {
            let path = manifest_path(dir, t.task_id);
            let mut text = serde_json::to_string_pretty(t).expect("task spec serializes");
            text.push('\n');
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            Ok(path)
        })
        .collect()
}

pub fn read_manifest(path: &Path) -> Result<TaskSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let task: TaskSpec = serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))?;
    task.check_disjoint()?;
    Ok(task)
}
