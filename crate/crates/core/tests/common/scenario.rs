//! Running the shipped scenario plans in scratch directories.

use std::path::{Path, PathBuf};

use capcl::harness::{prepare, run_scenario, PlanFile, ScenarioOutcome};
use capcl::metrics::MetricReport;
use capcl::strategies::Variant;

pub fn plans_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../plans")
}

/// A shipped plan with its outputs redirected.
pub fn shipped_plan(name: &str, output_dir: &Path, base_dir: &Path) -> PlanFile {
    let mut plan = PlanFile::load(&plans_dir().join(format!("{name}.toml"))).expect("shipped plan loads");
    plan.output_dir = output_dir.to_path_buf();
    plan.base_dir = Some(base_dir.to_path_buf());
    plan
}

pub fn run(plan: &PlanFile) -> Result<ScenarioOutcome, String> {
    let (scenario, data) = prepare(plan).map_err(|e| e.to_string())?;
    let outcome = run_scenario::<f32>(&scenario, &data).map_err(|e| e.to_string())?;
    if let Some(f) = outcome.failures.first() {
        return Err(format!("{} seed {} failed: {}", f.strategy, f.seed, f.error));
    }
    Ok(outcome)
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

/// Seed-averaged reports of one strategy: (base, old, new).
pub fn averages(outcome: &ScenarioOutcome, v: Variant) -> (MetricReport, MetricReport, MetricReport) {
    let rs: Vec<_> = outcome.records.iter().filter(|r| r.strategy == v).collect();
    let avg = |f: &dyn Fn(&capcl::harness::RunRecord) -> MetricReport| {
        let mut out = [0.0; 5];
        for (i, o) in out.iter_mut().enumerate() {
            *o = mean(rs.iter().map(|r| f(r).values()[i]));
        }
        MetricReport::from_values(out)
    };
    (avg(&|r| r.base), avg(&|r| r.old), avg(&|r| r.new))
}

/// Forgetting trend on the add-one scenario. Each clause is reported on its
/// own; all must hold.
pub fn forgetting_trend(outcome: &ScenarioOutcome) -> (bool, String) {
    let (base, f_old, f_new) = averages(outcome, Variant::FineTune);
    let clause1 = f_old.cider <= 0.5 * base.cider;
    let mut lines = vec![format!(
        "F old CIDEr {:.1} vs base {:.1} (limit {:.1}): {}",
        f_old.cider,
        base.cider,
        0.5 * base.cider,
        verdict(clause1)
    )];
    let mut best = (Variant::PseudoLabel, f64::MIN);
    for v in [Variant::PseudoLabel, Variant::FreezeEncoder, Variant::FreezeDecoder] {
        let old = averages(outcome, v).1.cider;
        if old > best.1 {
            best = (v, old);
        }
    }
    let clause2 = best.1 >= 1.5 * f_old.cider;
    lines.push(format!(
        "best of P/E_F/D_F old CIDEr {} {:.1} vs 1.5 x F {:.1}: {}",
        best.0,
        best.1,
        1.5 * f_old.cider,
        verdict(clause2)
    ));
    let fd_new = averages(outcome, Variant::FeatureDistill).2.cider;
    let clause3 = fd_new >= f_new.cider - 5.0;
    lines.push(format!(
        "FD new CIDEr {fd_new:.1} vs F {:.1} - 5: {}",
        f_new.cider,
        verdict(clause3)
    ));
    (clause1 && clause2 && clause3, lines.join("; "))
}

/// Sequential old-task CIDEr below the all-at-once run for every strategy.
pub fn sequential_trend(multi: &ScenarioOutcome, sequential: &ScenarioOutcome) -> (bool, String) {
    let mut ok = true;
    let mut lines = Vec::new();
    for v in Variant::ALL {
        let at_once = averages(multi, v).1.cider;
        let seq = averages(sequential, v).1.cider;
        let below = seq < at_once;
        ok &= below;
        lines.push(format!("{v} {seq:.1} vs {at_once:.1} ({})", if below { "ok" } else { "no" }));
    }
    (ok, lines.join(", "))
}

/// No run read a prior task's training or validation data.
pub fn no_old_data(outcomes: &[&ScenarioOutcome]) -> Result<String, String> {
    let mut runs = 0;
    let mut reads = 0;
    for o in outcomes {
        for r in &o.records {
            runs += 1;
            reads += r.access.image_reads;
            if let Some((stage, id)) = r.access.forbidden.first() {
                return Err(format!("{} seed {}: stage {stage} read old image {id}", r.strategy, r.seed));
            }
            if r.access.image_reads == 0 {
                return Err(format!("{} seed {}: access log saw no reads", r.strategy, r.seed));
            }
        }
    }
    Ok(format!("{runs} runs, {reads} logged image reads, none from prior tasks"))
}

pub fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAILS"
    }
}
