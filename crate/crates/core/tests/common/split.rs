//! Split builder against golden manifests, and the optional full-COCO count
//! check.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use capcl::dataio::{build_split, filter_clear_images, load_annotations, manifest_path, write_manifests, AnnotationSet, CategoryId};

/// Directory holding the COCO 2014 `captions_*` and `instances_*` files.
pub const COCO_ENV: &str = "CAPCL_COCO_ANNOTATIONS";
/// Train / val / test image totals over all 80 classes.
pub const COCO_COUNTS: (usize, usize, usize) = (47_547, 11_722, 11_687);

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/split")
}

fn split_all(ann: &AnnotationSet, ordering: &[CategoryId], out: &Path) -> Result<Vec<PathBuf>, String> {
    let universe: BTreeSet<CategoryId> = ann.categories.iter().map(|c| c.id).collect();
    let clear = filter_clear_images(ann, &universe);
    let outcome = build_split(&clear, ordering, Some((224, 224))).map_err(|e| e.to_string())?;
    write_manifests(&outcome.tasks, out).map_err(|e| e.to_string())
}

/// Manifests for class order dog, cat, frisbee must equal the golden files
/// byte for byte.
pub fn check_golden() -> Result<String, String> {
    let dir = fixture_dir();
    let ann = load_annotations(&dir.join("annotations.json")).map_err(|e| e.to_string())?;
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let written = split_all(&ann, &[18, 17, 34], out.path())?;
    let golden: Vec<PathBuf> = (0..3).map(|t| manifest_path(&dir.join("expected"), t)).collect();
    if written.len() != golden.len() {
        return Err(format!("{} manifests written, {} expected", written.len(), golden.len()));
    }
    for (got, want) in written.iter().zip(&golden) {
        let g = std::fs::read(got).map_err(|e| e.to_string())?;
        let w = std::fs::read(want).map_err(|e| e.to_string())?;
        if g != w {
            return Err(format!(
                "{} differs from golden:\n{}",
                want.display(),
                String::from_utf8_lossy(&g)
            ));
        }
    }
    Ok(format!("{} manifests match the golden files", golden.len()))
}

/// `None` when the annotations are not available locally.
pub fn check_coco() -> Option<Result<String, String>> {
    let dir = PathBuf::from(std::env::var_os(COCO_ENV)?);
    Some((|| {
        let mut ann = AnnotationSet::default();
        for name in ["captions_train2014", "captions_val2014", "instances_train2014", "instances_val2014"] {
            let part = load_annotations(&dir.join(format!("{name}.json"))).map_err(|e| e.to_string())?;
            ann = ann.merge(part).map_err(|e| e.to_string())?;
        }
        let ordering: Vec<CategoryId> = ann.categories.iter().map(|c| c.id).collect();
        let universe: BTreeSet<CategoryId> = ordering.iter().copied().collect();
        let clear = filter_clear_images(&ann, &universe);
        let outcome = build_split(&clear, &ordering, None).map_err(|e| e.to_string())?;
        let sum = |f: fn(&capcl::dataio::TaskSpec) -> usize| outcome.tasks.iter().map(f).sum::<usize>();
        let got = (sum(|t| t.train.len()), sum(|t| t.val.len()), sum(|t| t.test.len()));
        if got == COCO_COUNTS {
            Ok(format!("COCO 2014 totals {got:?}"))
        } else {
            Err(format!("COCO 2014 totals {got:?}, expected {COCO_COUNTS:?}"))
        }
    })())
}
