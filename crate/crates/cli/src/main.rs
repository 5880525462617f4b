//! Command-line front end: scenario runs, tables, splits, synthetic data and
//! caption scoring.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Deserialize;

use capcl::dataio::{
    build_split, filter_clear_images, generate_synthetic, load_annotations, write_manifests, AnnotationSet, CategoryId,
    ImageId,
};
use capcl::harness::{emit_table, load_records, prepare, run_scenario, PlanFile};
use capcl::metrics::{score_pairs, EvalPair};

#[derive(Parser)]
#[command(name = "capcl", version, about = "Class-incremental image captioning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (strategy, seed) pair of a plan and write the result table.
    Run {
        #[arg(long)]
        plan: PathBuf,
        /// Train in double precision.
        #[arg(long)]
        f64: bool,
    },
    /// Rebuild the result table from the run records in an output directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
    /// Build per-class task manifests from COCO-style annotation files.
    Split {
        /// Annotation file; repeat to merge several.
        #[arg(long, required = true)]
        annotations: Vec<PathBuf>,
        /// Comma-separated category names or ids, in task order.
        #[arg(long, value_delimiter = ',', required = true)]
        classes: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        /// Image size recorded in each manifest, as WIDTHxHEIGHT.
        #[arg(long, default_value = "224x224")]
        resize: String,
    },
    /// Generate the synthetic shape dataset (annotations plus PPM images).
    Synth {
        /// Comma-separated shape names.
        #[arg(long, value_delimiter = ',', required = true)]
        classes: Vec<String>,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score candidate captions against references.
    Score {
        /// JSON array of {"image_id", "caption"} records.
        #[arg(long)]
        candidates: PathBuf,
        /// COCO-style annotation file holding the reference captions.
        #[arg(long)]
        references: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run { plan, f64 } => run(&plan, f64),
        Command::Report { dir } => {
            let records = load_records(&dir)?;
            let table = emit_table(&records)?;
            table.write(&dir)?;
            print!("{}", table.to_text());
            Ok(ExitCode::SUCCESS)
        }
        Command::Split {
            annotations,
            classes,
            out,
            resize,
        } => split(&annotations, &classes, &out, &resize),
        Command::Synth { classes, n, seed, out } => synth(&classes, n, seed, &out),
        Command::Score { candidates, references } => score(&candidates, &references),
    }
}

fn run(path: &Path, double: bool) -> Result<ExitCode> {
    let mut plan = PlanFile::load(path)?;
    plan.apply_env()?;
    let (scenario, data) = prepare(&plan)?;
    let outcome = if double {
        run_scenario::<f64>(&scenario, &data)?
    } else {
        run_scenario::<f32>(&scenario, &data)?
    };
    if let Some(table) = &outcome.table {
        print!("{}", table.to_text());
    }
    for f in &outcome.failures {
        eprintln!("run {} seed {} failed: {}", f.strategy, f.seed, f.error);
    }
    Ok(if outcome.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn parse_size(text: &str) -> Result<(u32, u32)> {
    let (w, h) = text
        .split_once(['x', 'X'])
        .with_context(|| format!("size {text:?} is not WIDTHxHEIGHT"))?;
    Ok((w.trim().parse()?, h.trim().parse()?))
}

fn resolve_classes(ann: &AnnotationSet, names: &[String]) -> Result<Vec<CategoryId>> {
    names
        .iter()
        .map(|n| {
            if let Some(c) = ann.categories.iter().find(|c| &c.name == n) {
                return Ok(c.id);
            }
            match n.parse::<CategoryId>() {
                Ok(id) if ann.categories.iter().any(|c| c.id == id) => Ok(id),
                _ => bail!("unknown class {n:?}"),
            }
        })
        .collect()
}

fn split(paths: &[PathBuf], classes: &[String], out: &Path, resize: &str) -> Result<ExitCode> {
    let mut ann = AnnotationSet::default();
    for p in paths {
        ann = ann.merge(load_annotations(p)?)?;
    }
    let universe: BTreeSet<CategoryId> = ann.categories.iter().map(|c| c.id).collect();
    let clear = filter_clear_images(&ann, &universe);
    let ordering = resolve_classes(&clear, classes)?;
    let outcome = build_split(&clear, &ordering, Some(parse_size(resize)?))?;
    for w in &outcome.warnings {
        log::warn!("{w}");
    }
    let written = write_manifests(&outcome.tasks, out)?;
    let total = |f: fn(&capcl::dataio::TaskSpec) -> usize| outcome.tasks.iter().map(f).sum::<usize>();
    println!(
        "{} manifests in {}: {} train / {} val / {} test images",
        written.len(),
        out.display(),
        total(|t| t.train.len()),
        total(|t| t.val.len()),
        total(|t| t.test.len())
    );
    Ok(ExitCode::SUCCESS)
}

fn synth(classes: &[String], n: usize, seed: u64, out: &Path) -> Result<ExitCode> {
    let names: Vec<&str> = classes.iter().map(String::as_str).collect();
    let (ann, store) = generate_synthetic(&names, n, seed)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let files: BTreeMap<ImageId, String> = ann.images.iter().map(|i| (i.id, i.file_name.clone())).collect();
    store.save_all(out, &files)?;
    let path = out.join("annotations.json");
    ann.save(&path)?;
    println!("{} scenes, annotations in {}", ann.images.len(), path.display());
    Ok(ExitCode::SUCCESS)
}

#[derive(Deserialize)]
struct Candidate {
    image_id: ImageId,
    caption: String,
}

fn score(candidates: &Path, references: &Path) -> Result<ExitCode> {
    let text = std::fs::read_to_string(candidates).with_context(|| format!("reading {}", candidates.display()))?;
    let cands: Vec<Candidate> =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", candidates.display()))?;
    let refs = load_annotations(references)?.captions_by_image();
    let pairs = cands
        .iter()
        .map(|c| {
            let r = refs
                .get(&c.image_id)
                .with_context(|| format!("no reference captions for image {}", c.image_id))?;
            Ok(EvalPair::from_text(&c.caption, r))
        })
        .collect::<Result<Vec<_>>>()?;
    if pairs.is_empty() {
        bail!("no candidate captions in {}", candidates.display());
    }
    println!("{}", score_pairs(&pairs)?);
    Ok(ExitCode::SUCCESS)
}
