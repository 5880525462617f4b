//! Scenario runner: trains a base model per seed, applies the added classes
//! under each strategy, evaluates old and new classes and tabulates results.
//!
//! Output layout under a plan's `output_dir`:
//!
//! ```text
//! base/seed{S}/base.ckpt, base.vocab, base.json
//! runs/{strategy}_seed{S}/stage{N}.ckpt, stage{N}.vocab, pseudo_stage{N}.json, record.json
//! table.csv, table.txt, failures.json (only when a run failed)
//! ```

mod access;
mod plan;
mod record;
mod run;
mod table;

pub use access::{AccessLog, AccessSummary};
pub use plan::{prepare, DataPlan, Mode, PlanFile, ScenarioPlan, TrainingPlan, SEED_ENV};
pub use record::{forgetting_delta, load_records, run_dir, RunFailure, RunRecord, StageRecord};
pub use run::{run_scenario, run_strategy, train_base, BaseModel, ScenarioOutcome};
pub use table::{emit_table, ResultTable, TableRow};
