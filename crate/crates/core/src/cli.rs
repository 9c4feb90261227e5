//! Command-line entry point. Each stage reads and writes files, so any one
//! of them can be rerun or swapped out on its own.
//!
//! Exit codes: 0 success, 1 invalid input or arguments, 2 runtime failure.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::baselines::{highest_confidence_choice, random_choice};
use crate::choice::{Extracted, ParseStatus};
use crate::clock::{Clock, SystemClock};
use crate::config::Config;
use crate::dataset::{
    assign_overlap, build_assignments, consolidate, dedup, sample_pairs, split, AnnotationRecord,
    GroundTruth, ItemImagePair, PairSource, SplitRule,
};
use crate::error::{Error, Result};
use crate::eval::{
    build_kappa_matrix, render_csv, render_text, score_prediction, significance, summarize,
    threshold_analysis, EvalRecord, KappaMode, PairInfo, QualityScoredRecord, DEFAULT_THRESHOLDS,
};
use crate::features::featurize;
use crate::gateway::{EndpointConfig, Gateway, ReqwestTransport};
use crate::io::{read_jsonl, write_json, write_jsonl};
use crate::pipeline::{
    make_record, run_predictions, PredictionRecord, Predictor, RunConfig, RunPaths,
};
use crate::prompts::{build_prompt, PromptStrategy};
use crate::scene::{ContainerTable, DetectionsDoc, GlobalIds, TableSet};
use crate::verbalize::describe_scene;

#[derive(Debug, Parser)]
#[command(
    name = "storebench",
    version,
    about = "Hidden-item storage prediction benchmark"
)]
pub struct Cli {
    /// Settings file (TOML, or JSON by extension).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Stamp every record with this time (RFC 3339) so reruns are
    /// byte-identical.
    #[arg(long, global = true, value_name = "TIME")]
    pub fixed_clock: Option<DateTime<Utc>>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build container tables from detector output.
    Ingest(IngestArgs),
    /// Compute spatial features for every table.
    Features(FeaturesArgs),
    /// Print the container descriptions of one image.
    Describe(DescribeArgs),
    /// Print the prompt for one image and item.
    Prompt(PromptArgs),
    /// Query a language model for every pair.
    Predict(PredictArgs),
    /// Run a non-language-model baseline.
    Baseline(BaselineArgs),
    /// Clean annotations and reduce them to one ground-truth label per pair.
    Consolidate(ConsolidateArgs),
    /// Fleiss' kappa over triple-labelled pairs.
    Agreement(AgreementArgs),
    /// Score predictions against ground truth.
    Evaluate(EvaluateArgs),
    /// Relate IoU to human quality grades.
    AnalyzeThresholds(AnalyzeThresholdsArgs),
    /// ANOVA and Bonferroni-corrected pairwise tests across strategies.
    Significance(SignificanceArgs),
    /// Accuracy and average IoU table per strategy.
    Report(ReportArgs),
    /// Sample item-image pairs, mark triple-labelled ones, assign annotators.
    SamplePairs(SamplePairsArgs),
    /// Run the annotation HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Detections JSON files, or directories of them.
    #[arg(required = true, value_name = "PATH")]
    pub detections: Vec<PathBuf>,
    /// Output table set.
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    /// Table set from `ingest`.
    #[arg(long)]
    pub tables: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SceneSource {
    /// Featurized table set.
    #[arg(
        long,
        conflicts_with = "detections",
        required_unless_present = "detections"
    )]
    pub tables: Option<PathBuf>,
    /// Image to use from the table set. Optional when it holds one table.
    #[arg(long, requires = "tables")]
    pub image_id: Option<String>,
    /// A single detections JSON, ingested and featurized on the fly.
    #[arg(long)]
    pub detections: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DescribeArgs {
    #[command(flatten)]
    pub scene: SceneSource,
}

#[derive(Debug, Args)]
pub struct PromptArgs {
    #[command(flatten)]
    pub scene: SceneSource,
    #[arg(long)]
    pub strategy: PromptStrategy,
    #[arg(long)]
    pub item: String,
    /// Print the prompt bundle as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub strategy: PromptStrategy,
    /// Endpoint settings (JSON or TOML). The API key comes from the
    /// environment variable it names.
    #[arg(long)]
    pub endpoint_config: PathBuf,
    /// Featurized table set.
    #[arg(long)]
    pub tables: PathBuf,
    /// Item-image pairs (JSONL).
    #[arg(long)]
    pub pairs: PathBuf,
    /// Predictions output (JSONL). The checkpoint sits beside it.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Continue an interrupted run instead of starting over.
    #[arg(long)]
    pub resume: bool,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, default_value_t = crate::pipeline::DEFAULT_CHECKPOINT_EVERY)]
    pub checkpoint_every: usize,
    /// Root for the tables' image paths (image strategies only).
    #[arg(long)]
    pub images_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum BaselineKind {
    /// Uniform random container.
    Random,
    /// Top-confidence box of the item-conditioned detector run.
    GdinoItem,
    /// Top-confidence box of the item-free detector run.
    GdinoNoItem,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long)]
    pub kind: BaselineKind,
    #[arg(long)]
    pub tables: PathBuf,
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Seed for `random`; defaults to the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Detector output: `{pair_id}.json` per pair for `gdino_item`,
    /// `{image_id}.json` per image for `gdino_no_item`.
    #[arg(long, required_if_eq_any = [("kind", "gdino_item"), ("kind", "gdino_no_item")])]
    pub detections_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConsolidateArgs {
    /// Raw annotations (JSONL).
    #[arg(long)]
    pub annotations: PathBuf,
    /// Pairs expected to have annotations (JSONL).
    #[arg(long)]
    pub pairs: PathBuf,
    /// Ground truth output (JSONL).
    #[arg(long, short)]
    pub out: PathBuf,
    /// Resubmission conflicts (JSONL).
    #[arg(long)]
    pub conflicts_out: Option<PathBuf>,
    /// Pair ids with no annotations, one per line.
    #[arg(long)]
    pub excluded_out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct AgreementArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub tables: PathBuf,
    /// One kappa per item instead of one overall.
    #[arg(long)]
    pub per_item: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Predictions (JSONL); several files may be given.
    #[arg(long, required = true, num_args = 1..)]
    pub predictions: Vec<PathBuf>,
    /// Ground truth (JSONL).
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub tables: PathBuf,
    /// IoU cutoffs; repeat for several. Defaults to 1, 0.95 and 0.5.
    #[arg(long = "threshold")]
    pub thresholds: Vec<f64>,
    /// Per-pair scores (JSONL).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeThresholdsArgs {
    /// Quality-scored records (JSONL of pair_id, iou, human_score).
    #[arg(long)]
    pub records: PathBuf,
}

#[derive(Debug, Args)]
pub struct SignificanceArgs {
    /// Scores from `evaluate --out`.
    #[arg(long, required = true, num_args = 1..)]
    pub eval: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Csv,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, required = true, num_args = 1..)]
    pub eval: Vec<PathBuf>,
    #[arg(long = "threshold")]
    pub thresholds: Vec<f64>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    pub format: ReportFormat,
}

#[derive(Debug, Args)]
pub struct SamplePairsArgs {
    #[arg(long)]
    pub tables: PathBuf,
    #[arg(long)]
    pub per_item: usize,
    /// Pairs output (JSONL).
    #[arg(long, short)]
    pub out: PathBuf,
    /// Items to sample; defaults to the configured vocabulary.
    #[arg(long, value_delimiter = ',')]
    pub items: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Images whose pairs come from the real-world collection.
    #[arg(long, value_delimiter = ',')]
    pub real_world: Vec<String>,
    /// Evaluation share for a seeded fractional split; by default real-world
    /// pairs are evaluation and the rest development.
    #[arg(long)]
    pub eval_fraction: Option<f64>,
    /// Share of pairs per item labelled three times; defaults to the config.
    #[arg(long)]
    pub overlap_fraction: Option<f64>,
    /// Annotator ids; with `--assignments-out` writes the batch queues.
    #[arg(long, value_delimiter = ',')]
    pub annotators: Vec<String>,
    #[arg(long, requires = "annotators")]
    pub assignments_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Batch directory (tables.json, pairs.jsonl, assignments.json, images/).
    #[arg(long, env = "STOREBENCH_DATA_DIR")]
    pub data_dir: PathBuf,
    #[arg(long, env = "STOREBENCH_ADDR", default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
}

struct Ctx {
    config: Config,
    clock: Arc<dyn Clock>,
}

fn load_tables(path: &Path) -> Result<TableSet> {
    let text = std::fs::read_to_string(path).map_err(|e| crate::io::with_path(e, path))?;
    TableSet::parse(&text, path)
}

fn featurized_tables(path: &Path) -> Result<TableSet> {
    let set = load_tables(path)?;
    if let Some(t) = set.tables.iter().find(|t| !t.featurized) {
        return Err(Error::InvalidInput(format!(
            "{}: table {} is not featurized; run `features` first",
            path.display(),
            t.image_id
        )));
    }
    Ok(set)
}

fn load_detections(path: &Path) -> Result<DetectionsDoc> {
    let text = std::fs::read_to_string(path).map_err(|e| crate::io::with_path(e, path))?;
    DetectionsDoc::parse(&text, path)
}

fn detection_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut inner: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| crate::io::with_path(e, p))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "json"))
                .collect();
            inner.sort();
            files.extend(inner);
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

fn scene_table(src: &SceneSource, ctx: &Ctx) -> Result<ContainerTable> {
    if let Some(det) = &src.detections {
        let table = load_detections(det)?
            .into_table(&ctx.config.anchor_vocabulary(), &mut GlobalIds::new())?;
        return featurize(table, &ctx.config.features);
    }
    let path = src.tables.as_ref().expect("clap enforces a scene source");
    let set = featurized_tables(path)?;
    match &src.image_id {
        Some(id) => set
            .tables
            .into_iter()
            .find(|t| &t.image_id == id)
            .ok_or_else(|| Error::InvalidInput(format!("no table for image {id}"))),
        None if set.tables.len() == 1 => Ok(set.tables.into_iter().next().unwrap()),
        None => Err(Error::InvalidInput(
            "table set holds several images; pass --image-id".into(),
        )),
    }
}

fn thresholds_or_default(t: &[f64]) -> Result<Vec<f64>> {
    if t.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidInput("thresholds must lie in [0, 1]".into()));
    }
    Ok(if t.is_empty() {
        DEFAULT_THRESHOLDS.to_vec()
    } else {
        t.to_vec()
    })
}

fn ingest(a: &IngestArgs, ctx: &Ctx) -> Result<()> {
    let vocab = ctx.config.anchor_vocabulary();
    let mut ids = GlobalIds::new();
    let mut tables = Vec::new();
    let mut seen = BTreeSet::new();
    for f in detection_files(&a.detections)? {
        let doc = load_detections(&f)?;
        if !seen.insert(doc.image_id.clone()) {
            return Err(Error::InvalidInput(format!(
                "{}: duplicate image_id {}",
                f.display(),
                doc.image_id
            )));
        }
        let t = doc.into_table(&vocab, &mut ids)?;
        if !t.is_benchmark_eligible() {
            log::info!(
                "{}: {} containers, not benchmark-eligible",
                t.image_id,
                t.len()
            );
        }
        tables.push(t);
    }
    write_json(&a.out, &TableSet::new(tables))
}

fn features(a: &FeaturesArgs, ctx: &Ctx) -> Result<()> {
    let set = load_tables(&a.tables)?;
    let tables = set
        .tables
        .into_iter()
        .map(|t| featurize(t, &ctx.config.features))
        .collect::<Result<Vec<_>>>()?;
    write_json(&a.out, &TableSet::new(tables))
}

fn describe(a: &DescribeArgs, ctx: &Ctx, out: &mut dyn Write) -> Result<()> {
    for line in describe_scene(&scene_table(&a.scene, ctx)?)? {
        writeln!(out, "{line}")?;
    }
    Ok(())
}

fn prompt(a: &PromptArgs, ctx: &Ctx, out: &mut dyn Write) -> Result<()> {
    let table = scene_table(&a.scene, ctx)?;
    let descriptions = describe_scene(&table)?;
    let bundle = build_prompt(a.strategy, &a.item, &descriptions)?;
    if a.json {
        serde_json::to_writer_pretty(&mut *out, &bundle)?;
        writeln!(out)?;
    } else {
        if let Some(s) = &bundle.system_text {
            write!(out, "{s}")?;
            if !s.ends_with('\n') {
                writeln!(out)?;
            }
            writeln!(out)?;
        }
        write!(out, "{}", bundle.user_text)?;
        if !bundle.user_text.ends_with('\n') {
            writeln!(out)?;
        }
    }
    Ok(())
}

fn predict(a: &PredictArgs, ctx: &Ctx, out: &mut dyn Write) -> Result<()> {
    crate::pipeline::check_strategy(a.strategy)?;
    let endpoint = EndpointConfig::load(&a.endpoint_config)?;
    let gateway = Gateway::new(
        endpoint,
        Box::new(ReqwestTransport::new()?),
        ctx.clock.clone(),
    )?;
    let set = featurized_tables(&a.tables)?;
    let tables = set.by_image();
    let pairs: Vec<ItemImagePair> = read_jsonl(&a.pairs)?;
    let cfg = RunConfig {
        strategy: a.strategy,
        workers: a.workers.max(1),
        checkpoint_every: a.checkpoint_every.max(1),
        images_dir: a.images_dir.clone(),
        stop_after: None,
    };
    let predictor = Predictor {
        tables: &tables,
        responder: &gateway,
        clock: ctx.clock.as_ref(),
        config: &cfg,
    };
    let s = run_predictions(&pairs, &predictor, &RunPaths::beside(&a.out), a.resume)?;
    writeln!(
        out,
        "processed {} skipped {} errors {} of {}",
        s.processed, s.skipped, s.errors, s.total
    )?;
    Ok(())
}

fn baseline(a: &BaselineArgs, ctx: &Ctx, out: &mut dyn Write) -> Result<()> {
    let set = featurized_tables(&a.tables)?;
    let tables = set.by_image();
    let pairs: Vec<ItemImagePair> = read_jsonl(&a.pairs)?;
    let seed = a.seed.unwrap_or(ctx.config.seed);
    let tag = match a.kind {
        BaselineKind::Random => "random",
        BaselineKind::GdinoItem => "gdino_item",
        BaselineKind::GdinoNoItem => "gdino_no_item",
    };
    let mut records = Vec::with_capacity(pairs.len());
    let mut errors = 0;
    for pair in &pairs {
        let table = tables.get(pair.image_id.as_str()).copied();
        let choice = match (a.kind, table) {
            (_, None) => Err(Error::NotFound(format!(
                "container table for image {}",
                pair.image_id
            ))),
            (BaselineKind::Random, Some(t)) => random_choice(t, seed, &pair.pair_id),
            (kind, Some(_)) => {
                let dir = a
                    .detections_dir
                    .as_ref()
                    .expect("clap requires detections_dir");
                let name = if kind == BaselineKind::GdinoItem {
                    &pair.pair_id
                } else {
                    &pair.image_id
                };
                load_detections(&dir.join(format!("{name}.json")))
                    .and_then(|d| d.container_detections())
                    .map(|d| highest_confidence_choice(&d))
            }
        };
        let record = match choice {
            Ok(choice) => make_record(
                pair,
                table,
                tag,
                Extracted {
                    choice,
                    status: ParseStatus::Format,
                },
                String::new(),
                ctx.clock.wall(),
            ),
            Err(e) => {
                errors += 1;
                let mut r = make_record(
                    pair,
                    table,
                    tag,
                    Extracted {
                        choice: crate::choice::ContainerChoice::None,
                        status: ParseStatus::Format,
                    },
                    String::new(),
                    ctx.clock.wall(),
                );
                r.error = Some(e.to_string());
                r
            }
        };
        records.push(record);
    }
    write_jsonl(&a.out, &records)?;
    writeln!(out, "wrote {} records ({errors} errors)", records.len())?;
    Ok(())
}

fn consolidate_cmd(a: &ConsolidateArgs, ctx: &Ctx, out: &mut dyn Write) -> Result<()> {
    let anns: Vec<AnnotationRecord> = read_jsonl(&a.annotations)?;
    let pairs: Vec<ItemImagePair> = read_jsonl(&a.pairs)?;
    let cleaned = dedup(&anns);
    let ids: Vec<String> = pairs.iter().map(|p| p.pair_id.clone()).collect();
    let c = consolidate(&cleaned.records, &ids, a.seed.unwrap_or(ctx.config.seed))?;
    write_jsonl(&a.out, &c.truths)?;
    if let Some(p) = &a.conflicts_out {
        write_jsonl(p, &cleaned.conflicts)?;
    }
    if let Some(p) = &a.excluded_out {
        let mut text = c.excluded.join("\n");
        if !text.is_empty() {
            text.push('\n');
        }
        std::fs::write(p, text).map_err(|e| crate::io::with_path(e, p))?;
    }
    writeln!(
        out,
        "{} ground-truth labels, {} duplicates or conflicts removed, {} conflicts, {} pairs without annotations",
        c.truths.len(),
        anns.len() - cleaned.records.len(),
        cleaned.conflicts.len(),
        c.excluded.len()
    )?;
    Ok(())
}

fn agreement(a: &AgreementArgs, _ctx: &Ctx, out: &mut dyn Write) -> Result<()> {
    let anns: Vec<AnnotationRecord> = read_jsonl(&a.annotations)?;
    let pairs: Vec<ItemImagePair> = read_jsonl(&a.pairs)?;
    let set = load_tables(&a.tables)?;
    let tables = set.by_image();
    let mut info = BTreeMap::new();
    for p in &pairs {
        let t = tables
            .get(p.image_id.as_str())
            .ok_or_else(|| Error::DataIntegrity(format!("no table for image {}", p.image_id)))?;
        info.insert(
            p.pair_id.clone(),
            PairInfo {
                item: p.item.clone(),
                container_count: t.len() as u32,
            },
        );
    }
    let mode = if a.per_item {
        KappaMode::PerItem
    } else {
        KappaMode::Global
    };
    let matrices = build_kappa_matrix(&dedup(&anns).records, &info, mode)?;
    for (key, m) in &matrices {
        match m.kappa() {
            Ok(k) => writeln!(out, "{key}\tsubjects={}\tkappa={k:.4}", m.counts.len())?,
            Err(e) => writeln!(
                out,
                "{key}\tsubjects={}\tkappa=undefined ({e})",
                m.counts.len()
            )?,
        }
    }
    Ok(())
}

fn evaluate(a: &EvaluateArgs, _ctx: &Ctx, out: &mut dyn Write) -> Result<()> {
    let thresholds = thresholds_or_default(&a.thresholds)?;
    let set = load_tables(&a.tables)?;
    let tables = set.by_image();
    let truths: BTreeMap<String, GroundTruth> = read_jsonl::<GroundTruth>(&a.truth)?
        .into_iter()
        .map(|t| (t.pair_id.clone(), t))
        .collect();
    let mut records = Vec::new();
    for path in &a.predictions {
        for pred in read_jsonl::<PredictionRecord>(path)? {
            let Some(truth) = truths.get(&pred.pair_id) else {
                log::warn!("no ground truth for pair {}; skipped", pred.pair_id);
                continue;
            };
            let table = tables.get(pred.image_id.as_str()).ok_or_else(|| {
                Error::DataIntegrity(format!("no table for image {}", pred.image_id))
            })?;
            records.push(score_prediction(&pred, truth, table, &thresholds)?);
        }
    }
    if let Some(p) = &a.out {
        write_jsonl(p, &records)?;
    }
    write!(
        out,
        "{}",
        render_text(&summarize(&records, &thresholds), &thresholds)
    )?;
    Ok(())
}

fn analyze_thresholds(a: &AnalyzeThresholdsArgs, out: &mut dyn Write) -> Result<()> {
    let recs: Vec<QualityScoredRecord> = read_jsonl(&a.records)?;
    serde_json::to_writer_pretty(&mut *out, &threshold_analysis(&recs)?)?;
    writeln!(out)?;
    Ok(())
}

fn read_evals(paths: &[PathBuf]) -> Result<Vec<EvalRecord>> {
    let mut all = Vec::new();
    for p in paths {
        all.extend(read_jsonl::<EvalRecord>(p)?);
    }
    Ok(all)
}

fn significance_cmd(a: &SignificanceArgs, out: &mut dyn Write) -> Result<()> {
    let records = read_evals(&a.eval)?;
    let mut by: BTreeMap<String, BTreeMap<String, bool>> = BTreeMap::new();
    for r in &records {
        by.entry(r.strategy.clone())
            .or_default()
            .insert(r.pair_id.clone(), r.iou >= a.threshold);
    }
    let first: BTreeSet<&String> = by
        .values()
        .next()
        .map(|m| m.keys().collect())
        .unwrap_or_default();
    if by
        .values()
        .any(|m| m.keys().collect::<BTreeSet<_>>() != first)
    {
        return Err(Error::InvalidInput(
            "every strategy must be scored on the same pairs".into(),
        ));
    }
    let vectors: BTreeMap<String, Vec<bool>> = by
        .into_iter()
        .map(|(k, m)| (k, m.into_values().collect()))
        .collect();
    serde_json::to_writer_pretty(&mut *out, &significance(&vectors)?)?;
    writeln!(out)?;
    Ok(())
}

fn report(a: &ReportArgs, out: &mut dyn Write) -> Result<()> {
    let thresholds = thresholds_or_default(&a.thresholds)?;
    let rows = summarize(&read_evals(&a.eval)?, &thresholds);
    let text = match a.format {
        ReportFormat::Text => render_text(&rows, &thresholds),
        ReportFormat::Csv => render_csv(&rows, &thresholds),
    };
    write!(out, "{text}")?;
    Ok(())
}

fn sample_pairs_cmd(a: &SamplePairsArgs, ctx: &Ctx, out: &mut dyn Write) -> Result<()> {
    let set = load_tables(&a.tables)?;
    let items = if a.items.is_empty() {
        ctx.config.items.clone()
    } else {
        a.items.clone()
    };
    let seed = a.seed.unwrap_or(ctx.config.seed);
    let mut pairs = sample_pairs(&set.tables, &items, a.per_item, seed)?;
    let real: BTreeSet<&str> = a.real_world.iter().map(String::as_str).collect();
    for p in &mut pairs {
        if real.contains(p.image_id.as_str()) {
            p.source = PairSource::RealWorld;
        }
    }
    let rule = match a.eval_fraction {
        Some(f) => SplitRule::Fraction(f),
        None => SplitRule::BySource,
    };
    let pairs = split(&pairs, rule, seed)?;
    write_jsonl(&a.out, &pairs)?;
    let overlap = assign_overlap(
        &pairs,
        a.overlap_fraction.unwrap_or(ctx.config.overlap_fraction),
        seed,
    )?;
    if let Some(path) = &a.assignments_out {
        write_json(path, &build_assignments(&pairs, &overlap, &a.annotators)?)?;
    }
    writeln!(
        out,
        "{} pairs, {} triple-labelled",
        pairs.len(),
        overlap.len()
    )?;
    Ok(())
}

fn serve_cmd(a: &ServeArgs, ctx: &Ctx) -> Result<()> {
    let store = Arc::new(crate::service::AnnotationStore::open(
        &a.data_dir,
        ctx.clock.clone(),
    )?);
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    rt.block_on(crate::service::serve(store, a.addr))
}

/// Runs one parsed command, writing user-facing output to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let clock: Arc<dyn Clock> = match cli.fixed_clock {
        Some(t) => Arc::new(SystemClock::with_fixed_wall(t)),
        None => Arc::new(SystemClock::new()),
    };
    let ctx = Ctx { config, clock };
    match &cli.command {
        Command::Ingest(a) => ingest(a, &ctx),
        Command::Features(a) => features(a, &ctx),
        Command::Describe(a) => describe(a, &ctx, out),
        Command::Prompt(a) => prompt(a, &ctx, out),
        Command::Predict(a) => predict(a, &ctx, out),
        Command::Baseline(a) => baseline(a, &ctx, out),
        Command::Consolidate(a) => consolidate_cmd(a, &ctx, out),
        Command::Agreement(a) => agreement(a, &ctx, out),
        Command::Evaluate(a) => evaluate(a, &ctx, out),
        Command::AnalyzeThresholds(a) => analyze_thresholds(a, out),
        Command::Significance(a) => significance_cmd(a, out),
        Command::Report(a) => report(a, out),
        Command::SamplePairs(a) => sample_pairs_cmd(a, &ctx, out),
        Command::Serve(a) => serve_cmd(a, &ctx),
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_validation() {
        1
    } else {
        2
    }
}

/// Parses `std::env::args`, runs, and returns the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match execute(&cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
