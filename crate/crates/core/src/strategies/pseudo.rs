use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataio::{DataSource, ImageId};
use crate::error::{Error, Result};
use crate::model::{checkpoint_bytes, ModelState};
use crate::scalar::{cast_slice, Scalar};
use crate::vocab::{END, START};

/// Greedy captions of the previous model on the new task's images, as
/// `[start, …, end]` index sequences, tagged with the checksum of the model
/// that produced them.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoLabels {
    pub model_checksum: String,
    pub labels: BTreeMap<ImageId, Vec<usize>>,
}

/// SHA-256 of the model's checkpoint encoding (without RNG state).
pub fn model_checksum<T: Scalar>(state: &ModelState<T>) -> String {
    hex::encode(Sha256::digest(checkpoint_bytes(state, None)))
}

/// Runs the old model over every image. Indices refer to the old model's
/// vocabulary and stay valid in any later one.
pub fn generate_pseudo_labels<T: Scalar>(
    old_state: &ModelState<T>,
    image_ids: &[ImageId],
    data: &dyn DataSource,
    max_len: usize,
) -> Result<PseudoLabels> {
    let mut labels = BTreeMap::new();
    for &id in image_ids {
        let image: Vec<T> = cast_slice(&data.image(id)?);
        let words = old_state.generate(&old_state.encode(&image)?, max_len)?;
        let mut seq = Vec::with_capacity(words.len() + 2);
        seq.push(START);
        seq.extend(words);
        seq.push(END);
        labels.insert(id, seq);
    }
    Ok(PseudoLabels {
        model_checksum: model_checksum(old_state),
        labels,
    })
}

impl PseudoLabels {
    pub fn get(&self, id: ImageId) -> Option<&[usize]> {
        self.labels.get(&id).map(Vec::as_slice)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).expect("pseudo labels serialize");
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
    }

    /// Reuses the cache at `path` when it was produced by the same model and
    /// covers every image; otherwise regenerates and overwrites it.
    pub fn load_or_generate<T: Scalar>(
        path: &Path,
        old_state: &ModelState<T>,
        image_ids: &[ImageId],
        data: &dyn DataSource,
        max_len: usize,
    ) -> Result<Self> {
        if path.exists() {
            if let Ok(cached) = Self::load(path) {
                let checksum = model_checksum(old_state);
                if cached.model_checksum == checksum && image_ids.iter().all(|id| cached.labels.contains_key(id)) {
                    return Ok(cached);
                }
                log::info!("pseudo-label cache {} is stale, regenerating", path.display());
            }
        }
        let fresh = generate_pseudo_labels(old_state, image_ids, data, max_len)?;
        fresh.save(path)?;
        Ok(fresh)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, ParamId};

    struct Flat(usize);

    impl DataSource for Flat {
        fn image(&self, id: ImageId) -> Result<Vec<f32>> {
            Ok(vec![id as f32 / 10.0; self.0])
        }
        fn captions(&self, _: ImageId) -> Result<Vec<String>> {
            Ok(vec!["a b".into()])
        }
    }

    fn small() -> ModelState<f32> {
        let cfg = ModelConfig {
            height: 8,
            width: 8,
            conv1_channels: 2,
            conv2_channels: 3,
            feature_dim: 4,
            embed_dim: 4,
            hidden_dim: 6,
            ..ModelConfig::default()
        };
        ModelState::new(cfg, 9, 1, 3)
    }

    #[test]
    fn rigged_end_gives_empty_caption() {
        let mut m = small();
        m.params[ParamId::OutB].data_mut()[END] = 1e6;
        let data = Flat(m.config.image_len());
        let p = generate_pseudo_labels(&m, &[1, 2], &data, 10).unwrap();
        assert_eq!(p.get(1).unwrap(), &[START, END]);
    }

    #[test]
    fn labels_equal_greedy_generation() {
        let m = small();
        let data = Flat(m.config.image_len());
        let p = generate_pseudo_labels(&m, &[1, 5, 9], &data, 6).unwrap();
        for id in [1, 5, 9] {
            let img = cast_slice::<f32, f32>(&data.image(id).unwrap());
            let g = m.generate(&m.encode(&img).unwrap(), 6).unwrap();
            assert_eq!(&p.get(id).unwrap()[1..=g.len()], &g[..]);
        }
    }

    #[test]
    fn cache_round_trip_and_invalidation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pseudo.json");
        let m = small();
        let data = Flat(m.config.image_len());
        let a = PseudoLabels::load_or_generate(&path, &m, &[1, 2], &data, 6).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let b = PseudoLabels::load_or_generate(&path, &m, &[1, 2], &data, 6).unwrap();
        assert_eq!(a, b);
        assert_eq!(std::fs::read(&path).unwrap(), bytes);

        let mut other = m.clone();
        other.params[ParamId::OutB].data_mut()[END] = 1e6;
        let c = PseudoLabels::load_or_generate(&path, &other, &[1, 2], &data, 6).unwrap();
        assert_ne!(c.model_checksum, a.model_checksum);
        assert_eq!(c.get(2).unwrap(), &[START, END]);
    }
}
