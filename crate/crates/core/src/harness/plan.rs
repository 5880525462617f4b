use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataio::{
    build_split, filter_clear_images, generate_synthetic, load_annotations, AnnotationSet, CategoryId, Dataset,
    ImageStore, ResizeFilter, TaskSpec,
};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::strategies::{StrategyConfig, Variant};

/// Environment variable that overrides the data seed and the run seeds.
pub const SEED_ENV: &str = "CAPCL_SEED";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// One class added in a single stage.
    AddOne,
    /// Several classes merged into one stage.
    AddMultiOnce,
    /// Several classes, one stage each, in listed order.
    AddSequential,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataPlan {
    Synthetic {
        #[serde(default = "default_n_per_class")]
        n_per_class: usize,
        #[serde(default = "default_data_seed")]
        seed: u64,
    },
    Coco {
        /// One or more COCO-style files, merged.
        annotations: Vec<PathBuf>,
        image_root: PathBuf,
    },
}

fn default_n_per_class() -> usize {
    200
}

fn default_data_seed() -> u64 {
    1
}

/// Training hyperparameters shared by every strategy of a plan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingPlan {
    pub beta: f64,
    pub lambda: f64,
    pub epochs: usize,
    /// Epochs for the base task; defaults to `epochs`.
    pub base_epochs: Option<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Zero disables early stopping.
    pub patience: usize,
    /// Zero disables clipping.
    pub clip_norm: f64,
    pub max_len: usize,
    pub fd_reinit_decoder: bool,
    /// Vocabulary frequency threshold per task.
    pub min_count: usize,
}

impl Default for TrainingPlan {
    fn default() -> Self {
        let s = StrategyConfig::default();
        Self {
            beta: s.beta,
            lambda: s.lambda,
            epochs: s.epochs,
            base_epochs: Some(40),
            learning_rate: s.learning_rate,
            batch_size: s.batch_size,
            patience: s.patience.unwrap_or(0),
            clip_norm: s.clip_norm.unwrap_or(0.0),
            max_len: s.max_len,
            fd_reinit_decoder: s.fd_reinit_decoder,
            min_count: 1,
        }
    }
}

impl TrainingPlan {
    pub fn strategy(&self, variant: Variant, seed: u64) -> StrategyConfig {
        StrategyConfig {
            variant,
            beta: self.beta,
            lambda: self.lambda,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            seed,
            patience: (self.patience > 0).then_some(self.patience),
            clip_norm: (self.clip_norm > 0.0).then_some(self.clip_norm),
            max_len: self.max_len,
            fd_reinit_decoder: self.fd_reinit_decoder,
        }
    }

    /// Fine-tuning configuration used to train the base model.
    pub fn base(&self, seed: u64) -> StrategyConfig {
        StrategyConfig {
            epochs: self.base_epochs.unwrap_or(self.epochs),
            ..self.strategy(Variant::FineTune, seed)
        }
    }
}

/// The plan file as written by the user.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanFile {
    pub mode: Mode,
    /// Category names or numeric ids.
    pub base_classes: Vec<String>,
    pub additions: Vec<String>,
    #[serde(default = "all_variants")]
    pub strategies: Vec<Variant>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Base models are cached here and shared with other plans using the
    /// same base task, seed and settings. Defaults to `output_dir/base`.
    #[serde(default)]
    pub base_dir: Option<PathBuf>,
    pub data: DataPlan,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub training: TrainingPlan,
}

fn all_variants() -> Vec<Variant> {
    Variant::ALL.to_vec()
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

impl PlanFile {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("plan: {e}")))
    }

    /// Reads a plan; relative paths are resolved against the plan's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut plan = Self::from_toml_str(&text)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        fix(&mut plan.output_dir);
        if let Some(b) = plan.base_dir.as_mut() {
            fix(b);
        }
        if let DataPlan::Coco { annotations, image_root } = &mut plan.data {
            annotations.iter_mut().for_each(fix);
            fix(image_root);
        }
        Ok(plan)
    }

    /// Replaces the data seed with `s` and the run seeds with `s, s+1, …`
    /// (same count).
    pub fn override_seed(&mut self, s: u64) {
        if let DataPlan::Synthetic { seed, .. } = &mut self.data {
            *seed = s;
        }
        let n = self.seeds.len() as u64;
        self.seeds = (0..n).map(|i| s.wrapping_add(i)).collect();
    }

    /// Applies the seed environment variable when set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            let s = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV} must be an unsigned integer, got {v:?}")))?;
            self.override_seed(s);
        }
        Ok(())
    }
}

/// A validated scenario: tasks resolved against the data.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioPlan {
    pub mode: Mode,
    pub base_task: TaskSpec,
    /// One task per added class, in listed order.
    pub additions: Vec<TaskSpec>,
    pub strategies: Vec<Variant>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub base_dir: PathBuf,
    pub model: ModelConfig,
    pub training: TrainingPlan,
    /// Identifies the data behind the task lists (source settings), so cached
    /// base models are not reused across different data.
    pub data_key: String,
}

impl ScenarioPlan {
    pub fn validate(&self) -> Result<()> {
        if self.additions.is_empty() {
            return Err(Error::Config("plan adds no classes".into()));
        }
        if self.mode == Mode::AddOne && self.additions.len() != 1 {
            return Err(Error::Config(format!(
                "add_one needs exactly one added class, got {}",
                self.additions.len()
            )));
        }
        if self.strategies.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("plan needs at least one strategy and one seed".into()));
        }
        let unique: BTreeSet<_> = self.strategies.iter().collect();
        if unique.len() != self.strategies.len() {
            return Err(Error::Config("strategies are listed more than once".into()));
        }
        let seeds: BTreeSet<_> = self.seeds.iter().collect();
        if seeds.len() != self.seeds.len() {
            return Err(Error::Config("seeds are listed more than once".into()));
        }
        let mut seen = self.base_task.class_set.clone();
        for t in &self.additions {
            if !t.class_set.is_disjoint(&seen) {
                return Err(Error::Config(format!(
                    "added classes {:?} overlap earlier tasks",
                    t.class_set
                )));
            }
            seen.extend(t.class_set.iter().copied());
        }
        self.training.strategy(Variant::FineTune, 0).validate()?;
        Ok(())
    }

    /// Training stages after the base task, per mode.
    pub fn stages(&self) -> Vec<TaskSpec> {
        match self.mode {
            Mode::AddOne | Mode::AddSequential => self.additions.clone(),
            Mode::AddMultiOnce => vec![TaskSpec::merge(self.additions[0].task_id, &self.additions)],
        }
    }

    /// All added classes as one evaluation task.
    pub fn new_task(&self) -> TaskSpec {
        TaskSpec::merge(self.additions[0].task_id, &self.additions)
    }
}

fn resolve_class(ann: &AnnotationSet, name: &str) -> Result<CategoryId> {
    if let Some(c) = ann.categories.iter().find(|c| c.name == name) {
        return Ok(c.id);
    }
    match name.parse::<CategoryId>() {
        Ok(id) if ann.categories.is_empty() || ann.categories.iter().any(|c| c.id == id) => Ok(id),
        _ => Err(Error::Config(format!("unknown class {name:?}"))),
    }
}

/// Builds the dataset and tasks a plan refers to.
pub fn prepare(plan: &PlanFile) -> Result<(ScenarioPlan, Dataset)> {
    let input = (plan.model.width as u32, plan.model.height as u32);
    let names: Vec<&str> = plan.base_classes.iter().chain(&plan.additions).map(String::as_str).collect();
    let (ann, data) = match &plan.data {
        DataPlan::Synthetic { n_per_class, seed } => {
            let (ann, store): (AnnotationSet, ImageStore) = generate_synthetic(&names, *n_per_class, *seed)?;
            (ann.clone(), Dataset::in_memory(ann, store, input))
        }
        DataPlan::Coco { annotations, image_root } => {
            let mut merged = AnnotationSet::default();
            for path in annotations {
                merged = merged.merge(load_annotations(path)?)?;
            }
            let universe: BTreeSet<CategoryId> = merged.categories.iter().map(|c| c.id).collect();
            let clear = filter_clear_images(&merged, &universe);
            (clear.clone(), Dataset::on_disk(clear, image_root.clone(), ResizeFilter::Bilinear, input))
        }
    };
    let ordering = names
        .iter()
        .map(|n| resolve_class(&ann, n))
        .collect::<Result<Vec<_>>>()?;
    let split = build_split(&ann, &ordering, Some(input))?;
    for w in &split.warnings {
        log::warn!("{w}");
    }
    let by_class = |c: CategoryId| split.tasks.iter().find(|t| t.class_set.contains(&c)).cloned();
    let base_parts: Vec<TaskSpec> = ordering[..plan.base_classes.len()].iter().filter_map(|&c| by_class(c)).collect();
    if base_parts.is_empty() {
        return Err(Error::Config("no base class has any images".into()));
    }
    let additions: Vec<TaskSpec> = ordering[plan.base_classes.len()..]
        .iter()
        .enumerate()
        .filter_map(|(i, &c)| {
            by_class(c).map(|mut t| {
                t.task_id = i as u32 + 1;
                t
            })
        })
        .collect();
    let scenario = ScenarioPlan {
        mode: plan.mode,
        base_task: TaskSpec::merge(0, &base_parts),
        additions,
        strategies: plan.strategies.clone(),
        seeds: plan.seeds.clone(),
        output_dir: plan.output_dir.clone(),
        base_dir: plan.base_dir.clone().unwrap_or_else(|| plan.output_dir.join("base")),
        model: plan.model.clone(),
        training: plan.training.clone(),
        data_key: serde_json::to_string(&plan.data).expect("data plan serializes"),
    };
    scenario.validate()?;
    Ok((scenario, data))
}
