use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::access::AccessLog;
use super::plan::ScenarioPlan;
use super::record::{forgetting_delta, read_json, run_dir, write_json, RunFailure, RunRecord, StageRecord};
use super::table::{emit_table, ResultTable};
use crate::dataio::{DataSource, TaskSpec};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, MetricReport};
use crate::model::{load_checkpoint, save_checkpoint, ModelConfig, ModelState, RngState};
use crate::scalar::Scalar;
use crate::strategies::{train_task, PseudoLabels, StrategyConfig, TrainContext, Variant};
use crate::vocab::{build_task_vocab, Vocabulary};

/// Records of the runs that finished, failures of those that did not, and
/// the table over the finished ones.
#[derive(Clone, Debug)]
pub struct ScenarioOutcome {
    pub records: Vec<RunRecord>,
    pub failures: Vec<RunFailure>,
    pub table: Option<ResultTable>,
}

/// The model trained on the base task for one seed, shared by every
/// strategy of that seed.
#[derive(Clone, Debug)]
pub struct BaseModel<T> {
    pub state: ModelState<T>,
    pub vocab: Vocabulary,
    pub report: MetricReport,
    pub checkpoint: PathBuf,
}

/// Everything that determines a base model; a cached base is reused only
/// when this matches exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct BaseKey {
    seed: u64,
    data: String,
    scalar_width: u8,
    model: ModelConfig,
    training: StrategyConfig,
    min_count: usize,
    task: TaskSpec,
}

#[derive(Serialize, Deserialize)]
struct BaseInfo {
    key: BaseKey,
    report: MetricReport,
}

/// Independent RNG stream per (seed, purpose): 0 for the base model, one per
/// strategy after that.
fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn variant_stream(v: Variant) -> u64 {
    1 + Variant::ALL.iter().position(|&x| x == v).expect("listed") as u64
}

fn task_words(task: &TaskSpec, data: &dyn DataSource, min_count: usize) -> Result<std::collections::BTreeSet<String>> {
    let mut captions = Vec::new();
    for &id in &task.train {
        captions.extend(data.captions(id)?);
    }
    Ok(build_task_vocab(&captions, min_count))
}

fn file_checksum(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Trains (or reloads from `plan.base_dir`) the base model for `seed`.
pub fn train_base<T: Scalar>(plan: &ScenarioPlan, seed: u64, data: &dyn DataSource) -> Result<BaseModel<T>> {
    let dir = plan.base_dir.join(format!("seed{seed}"));
    let ckpt = dir.join("base.ckpt");
    let vocab_path = dir.join("base.vocab");
    let info_path = dir.join("base.json");
    let key = BaseKey {
        seed,
        data: plan.data_key.clone(),
        scalar_width: T::WIDTH,
        model: plan.model.clone(),
        training: plan.training.base(seed),
        min_count: plan.training.min_count,
        task: plan.base_task.clone(),
    };
    if info_path.is_file() && ckpt.is_file() && vocab_path.is_file() {
        let cached = read_json::<BaseInfo>(&info_path).and_then(|info| {
            let vocab = Vocabulary::load(&vocab_path)?;
            let ck = load_checkpoint::<T>(&ckpt, &vocab)?;
            Ok((info, vocab, ck))
        });
        match cached {
            Ok((info, vocab, ck)) if info.key == key => {
                log::info!("seed {seed}: reusing base model {}", ckpt.display());
                return Ok(BaseModel {
                    state: ck.state,
                    vocab,
                    report: info.report,
                    checkpoint: ckpt,
                });
            }
            Ok(_) => log::info!("seed {seed}: cached base model has different settings, retraining"),
            Err(e) => log::warn!("seed {seed}: cached base model unusable ({e}), retraining"),
        }
    }
    log::info!("seed {seed}: training base model on {} images", plan.base_task.train.len());
    let mut rng = stream_rng(seed, 0);
    let vocab = Vocabulary::new().accumulate(&task_words(&plan.base_task, data, plan.training.min_count)?);
    let init = ModelState::<T>::new(plan.model.clone(), vocab.len(), vocab.version(), rng.gen());
    let outcome = {
        let mut ctx = TrainContext {
            data,
            vocab: &vocab,
            pseudo: None,
            rng: &mut rng,
        };
        train_task(&init, &plan.base_task, &key.training, None, &mut ctx)?
    };
    let report = evaluate(&outcome.state, &plan.base_task, &vocab, data, plan.training.max_len)?;
    vocab.save(&vocab_path)?;
    save_checkpoint(&ckpt, &outcome.state, Some(&RngState::capture(&rng)))?;
    write_json(&info_path, &BaseInfo { key, report })?;
    Ok(BaseModel {
        state: outcome.state,
        vocab,
        report,
        checkpoint: ckpt,
    })
}

fn relative(path: &Path, root: &Path) -> PathBuf {
    path.strip_prefix(root).map(Path::to_path_buf).unwrap_or_else(|_| path.to_path_buf())
}

/// Runs every stage of one strategy from the shared base model. Stages whose
/// checkpoint already exists are restored instead of retrained, together
/// with the RNG position, so an interrupted run resumes where it stopped.
pub fn run_strategy<T: Scalar>(
    plan: &ScenarioPlan,
    seed: u64,
    variant: Variant,
    base: &BaseModel<T>,
    data: &dyn DataSource,
) -> Result<RunRecord> {
    let started = Instant::now();
    let cfg = plan.training.strategy(variant, seed);
    let max_len = cfg.max_len;
    let dir = run_dir(&plan.output_dir, variant, seed);
    let log = AccessLog::new(data);
    let mut rng = stream_rng(seed, variant_stream(variant));
    let mut state = base.state.clone();
    let mut vocab = base.vocab.clone();
    let mut prior: Vec<u64> = plan.base_task.train_and_val().collect();
    let mut stages = Vec::new();
    let mut checkpoints = vec![relative(&base.checkpoint, &plan.output_dir)];

    for (k, task) in plan.stages().iter().enumerate() {
        let n = k as u32 + 1;
        log.begin_stage(n, prior.iter().copied());
        let ckpt = dir.join(format!("stage{n}.ckpt"));
        let vocab_path = dir.join(format!("stage{n}.vocab"));
        let (next_vocab, epochs_run, best_epoch, checksum) = if ckpt.is_file() && vocab_path.is_file() {
            let next_vocab = Vocabulary::load(&vocab_path)?;
            let ck = load_checkpoint::<T>(&ckpt, &next_vocab)?;
            state = ck.state;
            rng = ck
                .rng
                .ok_or_else(|| Error::Checkpoint(format!("{} has no RNG state", ckpt.display())))?
                .restore()?;
            log::info!("{variant} seed {seed}: restored stage {n}");
            (next_vocab, None, None, file_checksum(&ckpt)?)
        } else {
            log::info!("{variant} seed {seed}: stage {n}, classes {:?}", task.class_set);
            let next_vocab = vocab.accumulate(&task_words(task, &log, plan.training.min_count)?);
            let grown = state.expand_decoder(&next_vocab, rng.gen())?;
            let pseudo = match variant {
                Variant::PseudoLabel => Some(PseudoLabels::load_or_generate(
                    &dir.join(format!("pseudo_stage{n}.json")),
                    &state,
                    &task.train,
                    &log,
                    max_len,
                )?),
                _ => None,
            };
            let teacher = (variant == Variant::FeatureDistill).then_some(&state);
            let outcome = {
                let mut ctx = TrainContext {
                    data: &log,
                    vocab: &next_vocab,
                    pseudo: pseudo.as_ref(),
                    rng: &mut rng,
                };
                train_task(&grown, task, &cfg, teacher, &mut ctx)?
            };
            state = outcome.state;
            next_vocab.save(&vocab_path)?;
            let checksum = save_checkpoint(&ckpt, &state, Some(&RngState::capture(&rng)))?;
            (next_vocab, Some(outcome.epoch_losses.len()), outcome.best_epoch, checksum)
        };
        if next_vocab.version() != vocab.version() + 1 || next_vocab.len() < vocab.len() {
            return Err(Error::Contract(format!(
                "stage {n}: vocabulary went from version {} ({} tokens) to {} ({} tokens)",
                vocab.version(),
                vocab.len(),
                next_vocab.version(),
                next_vocab.len()
            )));
        }
        vocab = next_vocab;
        let test = evaluate(&state, task, &vocab, &log, max_len)?;
        checkpoints.push(relative(&ckpt, &plan.output_dir));
        stages.push(StageRecord {
            task_id: task.task_id,
            classes: task.class_set.clone(),
            vocab_version: vocab.version(),
            vocab_size: vocab.len(),
            epochs_run,
            best_epoch,
            test,
            checkpoint: relative(&ckpt, &plan.output_dir),
            checksum,
        });
        prior.extend(task.train_and_val());
    }

    log.begin_stage(stages.len() as u32 + 1, prior.iter().copied());
    let old = evaluate(&state, &plan.base_task, &vocab, &log, max_len)?;
    let new = evaluate(&state, &plan.new_task(), &vocab, &log, max_len)?;
    let mut new_by_class = std::collections::BTreeMap::new();
    for task in &plan.additions {
        let report = evaluate(&state, task, &vocab, &log, max_len)?;
        for &c in &task.class_set {
            new_by_class.insert(c, report);
        }
    }
    let record = RunRecord {
        strategy: variant,
        seed,
        mode: plan.mode,
        base: base.report,
        old,
        new,
        new_by_class,
        forgetting: forgetting_delta(&base.report, &old),
        stages,
        access: log.summary(),
        wall_clock_secs: started.elapsed().as_secs_f64(),
        checkpoints,
    };
    record.save(&dir.join("record.json"))?;
    Ok(record)
}

/// Runs every (strategy, seed) pair of the plan. A failing run is recorded
/// and the others continue. The table over finished runs is written to
/// `output_dir/table.csv` and `output_dir/table.txt`.
pub fn run_scenario<T: Scalar>(plan: &ScenarioPlan, data: &dyn DataSource) -> Result<ScenarioOutcome> {
    plan.validate()?;
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for &seed in &plan.seeds {
        let base = match train_base::<T>(plan, seed, data) {
            Ok(b) => b,
            Err(e) => {
                log::error!("seed {seed}: base model failed: {e}");
                failures.extend(plan.strategies.iter().map(|&strategy| RunFailure {
                    strategy,
                    seed,
                    error: format!("base model: {e}"),
                }));
                continue;
            }
        };
        for &variant in &plan.strategies {
            match run_strategy(plan, seed, variant, &base, data) {
                Ok(r) => {
                    log::info!("{variant} seed {seed}: old {} | new {}", r.old, r.new);
                    records.push(r);
                }
                Err(e) => {
                    log::error!("{variant} seed {seed}: {e}");
                    failures.push(RunFailure {
                        strategy: variant,
                        seed,
                        error: e.to_string(),
                    });
                }
            }
        }
    }
    let failures_path = plan.output_dir.join("failures.json");
    if failures.is_empty() {
        if failures_path.exists() {
            std::fs::remove_file(&failures_path).map_err(|e| Error::io(&failures_path, e))?;
        }
    } else {
        write_json(&failures_path, &failures)?;
    }
    let table = if records.is_empty() {
        None
    } else {
        let t = emit_table(&records)?;
        t.write(&plan.output_dir)?;
        Some(t)
    };
    Ok(ScenarioOutcome {
        records,
        failures,
        table,
    })
}
