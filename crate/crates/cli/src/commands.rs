use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, bail, Context as _, Result};
use iragent::agent::{
    bench_complexity as run_bench, greedy_restore, restore_end_to_end, run_strategy,
    tasks_from_vector, AgentOptions, RestorationTrace, StrategyKind,
};
use iragent::calibration::{calibrate_dir, Calibration, CalibrationOptions};
use iragent::degrade::{
    generate_dataset, list_images, read_manifest, DatasetOptions, Manifest, ManifestRecord,
};
use iragent::evaluate::{
    assemble_compare_report, assemble_perception_report, compare_row, pair_score, perception_row,
    CompareOptions, CompareRow, PerceptionRow, StrategyCell, StrategyOutcome, TaskSource,
};
use iragent::imagecore::{load_image, save_image};
use iragent::iqa::{IqaContext, QualityMode};
use iragent::perceive::{ExternalPerceiver, InternalPerceiver, Perceiver};
use iragent::restore::{default_registry, TaskLabel, ToolRegistry};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::Config;
use crate::output::{Document, Timer, Warning};
use crate::GlobalArgs;

/// Effective settings after applying flags over the config file.
pub struct Context {
    pub cfg: Config,
    pub seed: u64,
    pub agent: AgentOptions,
    calibration_path: Option<PathBuf>,
    strategy: Option<String>,
    jobs: Option<usize>,
    endpoint: Option<String>,
    timer: Option<Timer>,
    registry: ToolRegistry,
}

impl Context {
    pub fn new(cfg: Config, flags: GlobalArgs) -> Result<Self> {
        let quality_mode = match flags.quality_mode.as_deref() {
            Some(m) => m.parse::<QualityMode>()?,
            None => cfg.quality_mode,
        };
        let eps = flags.epsilon.unwrap_or(cfg.epsilon);
        if !(eps >= 0.0 && eps.is_finite()) {
            bail!("epsilon must be a finite non-negative number");
        }
        if flags.jobs == Some(0) {
            bail!("--jobs must be at least 1");
        }
        let registry = if cfg.registry.is_empty() {
            default_registry()
        } else {
            default_registry().with_overrides(cfg.registry.clone())?
        };
        Ok(Self {
            seed: flags.seed.unwrap_or(cfg.seed),
            agent: AgentOptions { eps, quality_mode },
            calibration_path: flags.calibration.or_else(|| cfg.calibration.clone()),
            strategy: flags.strategy.or_else(|| cfg.strategy.clone()),
            jobs: flags.jobs.or(cfg.jobs),
            endpoint: flags
                .perceiver_endpoint
                .or_else(|| cfg.perceiver.endpoint.clone()),
            timer: flags.record_timing.then(Timer::start),
            registry,
            cfg,
        })
    }

    fn record_timing(&self) -> bool {
        self.timer.is_some()
    }

    fn calibration(&self) -> Result<Calibration> {
        Ok(Calibration::resolve(self.calibration_path.as_deref())?)
    }

    fn perceiver(&self, cal: &Calibration) -> Result<Box<dyn Perceiver>> {
        let internal = InternalPerceiver::new(cal.thresholds.clone());
        Ok(match &self.endpoint {
            Some(ep) => Box::new(ExternalPerceiver::from_endpoint(
                ep,
                Duration::from_millis(self.cfg.perceiver.timeout_ms),
                internal,
            )?),
            None => Box::new(internal),
        })
    }

    /// Strategy text to kind; a bare `random` takes the root seed.
    fn parse_strategy(&self, s: &str) -> Result<StrategyKind> {
        if s.trim().eq_ignore_ascii_case("random") {
            return Ok(StrategyKind::Random { seed: self.seed });
        }
        Ok(s.parse()?)
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        Ok(rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs.unwrap_or(0))
            .build()?)
    }

    fn metadata(&self, extra: Value) -> Value {
        let mut m = json!({
            "version": env!("CARGO_PKG_VERSION"),
            "seed": self.seed,
            "epsilon": self.agent.eps,
            "quality_mode": self.agent.quality_mode,
        });
        if let (Value::Object(m), Value::Object(x)) = (&mut m, extra) {
            m.extend(x);
        }
        m
    }

    fn write<T: Serialize>(
        &self,
        command: &str,
        out: &Path,
        extra: Value,
        warnings: Vec<Warning>,
        result: &T,
    ) -> Result<()> {
        Document {
            command,
            metadata: self.metadata(extra),
            warnings,
            result,
        }
        .write(out, self.timer.as_ref())
    }
}

/// A manifest file, or a directory holding `manifest.jsonl`.
fn open_manifest(path: &Path) -> Result<Manifest> {
    let file = if path.is_dir() {
        path.join("manifest.jsonl")
    } else {
        path.to_path_buf()
    };
    let m = read_manifest(&file).with_context(|| format!("reading manifest {}", file.display()))?;
    if m.is_empty() {
        bail!(iragent::Error::Empty("manifest"));
    }
    Ok(m)
}

fn is_image_file(path: &Path) -> bool {
    path.is_file()
        && path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "image".into(), |s| s.to_string_lossy().into_owned())
}

pub fn calibrate(
    ctx: &Context,
    dir: &Path,
    out: &Path,
    singles: Option<usize>,
    mixes: Option<usize>,
) -> Result<()> {
    if !dir.is_dir() {
        bail!(iragent::Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("pristine directory {} not found", dir.display()),
        )));
    }
    let defaults = CalibrationOptions::default();
    let opts = CalibrationOptions {
        seed: ctx.seed,
        singles_per_image: singles.unwrap_or(defaults.singles_per_image),
        mixes_per_image: mixes.unwrap_or(defaults.mixes_per_image),
        ..defaults
    };
    let images = list_images(dir)?.len();
    let cal = calibrate_dir(dir, &opts)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    cal.save(out)?;
    println!(
        "{}",
        json!({
            "digest": cal.digest(),
            "images": images,
            "sweep_size": cal.diagnostics.sweep_size,
            "out": out,
        })
    );
    Ok(())
}

fn parse_resolution(s: &str) -> Result<Option<(usize, usize)>> {
    if s.eq_ignore_ascii_case("native") {
        return Ok(None);
    }
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| anyhow!("resolution must look like 256x256, got {s:?}"))?;
    let (w, h): (usize, usize) = (w.trim().parse()?, h.trim().parse()?);
    if w == 0 || h == 0 {
        bail!("resolution must be positive");
    }
    Ok(Some((w, h)))
}

pub fn degrade(
    ctx: &Context,
    src: &Path,
    out: &Path,
    n: Option<usize>,
    resolution: Option<&str>,
) -> Result<()> {
    let resolution = match resolution {
        Some(r) => parse_resolution(r)?,
        None => Some(ctx.cfg.resolution),
    };
    let opts = DatasetOptions {
        variants_per_source: n.unwrap_or(ctx.cfg.variants_per_source),
        seed: ctx.seed,
        resolution,
    };
    let manifest = generate_dataset(src, out, &opts)?;
    println!(
        "{}",
        json!({
            "records": manifest.len(),
            "manifest": out.join("manifest.jsonl"),
        })
    );
    Ok(())
}

pub fn perceive(ctx: &Context, input: &Path, out: &Path) -> Result<()> {
    let cal = ctx.calibration()?;
    let perceiver = ctx.perceiver(&cal)?;
    let extra = json!({ "calibration_digest": cal.digest() });
    if is_image_file(input) {
        let img = load_image(input)?;
        let outcome = perceiver.perceive(&img, Some(input))?;
        let result = json!({ "id": file_stem(input), "outcome": outcome });
        return ctx.write("perceive", out, extra, Vec::new(), &result);
    }
    let manifest = open_manifest(input)?;
    let mut rows: Vec<PerceptionRow> = ctx.pool()?.install(|| {
        manifest
            .records
            .par_iter()
            .map(|r| perception_row(r, &manifest.root, perceiver.as_ref()))
            .collect()
    });
    rows.sort_by(|a, b| a.id.cmp(&b.id));
    let report = assemble_perception_report(rows)?;
    let warnings = report
        .failures
        .iter()
        .map(|f| Warning {
            id: f.id.clone(),
            message: f.error.clone(),
        })
        .collect();
    ctx.write("perceive", out, extra, warnings, &report)?;
    print!("{}", report.to_table());
    Ok(())
}

/// One `restore` summary line.
#[derive(Serialize)]
struct RestoreRow {
    id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    strategy: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tasks: Option<Vec<TaskLabel>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    order: Option<Vec<TaskLabel>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eval_count: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_quality: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

struct RestoreJob<'a> {
    id: String,
    input: PathBuf,
    record: Option<&'a ManifestRecord>,
}

struct Restorer<'a> {
    ctx: &'a Context,
    iqa: IqaContext,
    perceiver: Box<dyn Perceiver>,
    strategy: Option<StrategyKind>,
    oracle_tasks: bool,
    out_dir: &'a Path,
}

impl Restorer<'_> {
    fn run(&self, job: &RestoreJob<'_>) -> Result<RestorationTrace> {
        let img = load_image(&job.input)?;
        let ctx = self.ctx;
        let label = job.record.filter(|_| self.oracle_tasks).map(|r| r.label);
        let recipe = job.record.map(ManifestRecord::recipe);
        let mut restoration = match (&self.strategy, label) {
            (None, None) => restore_end_to_end(
                &img,
                &self.iqa,
                &ctx.registry,
                self.perceiver.as_ref(),
                Some(&job.input),
                &ctx.agent,
            )?,
            (None, Some(l)) => greedy_restore(
                &img,
                &tasks_from_vector(&l),
                &ctx.registry,
                &self.iqa,
                &ctx.agent,
            )?,
            (Some(s), label) => {
                let (tasks, perception) = match label {
                    Some(l) => (tasks_from_vector(&l), None),
                    None => {
                        let p = self.perceiver.perceive(&img, Some(&job.input))?;
                        (tasks_from_vector(&p.vector), Some(p))
                    }
                };
                let mut r = run_strategy(
                    &img,
                    s,
                    &tasks,
                    recipe.as_ref(),
                    &ctx.registry,
                    &self.iqa,
                    &ctx.agent,
                )?;
                if let Some(p) = perception {
                    r.trace.perception = Some(p.vector);
                    r.trace.perception_report = p.report;
                    r.trace.perception_fallback = p.fallback;
                }
                r
            }
        };
        let trace = &mut restoration.trace;
        if trace.recipe_id.is_none() {
            trace.recipe_id = recipe.map(|r| r.source_id);
        }
        if !ctx.record_timing() {
            trace.wall_time_ms = 0.0;
        }
        let rel = format!("images/{}.png", job.id);
        let image_path = self.out_dir.join(&rel);
        let png_input = job
            .input
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if trace.steps.is_empty() && png_input {
            // nothing was applied: hand back the input file untouched
            fs::copy(&job.input, &image_path)?;
        } else {
            save_image(&restoration.image, &image_path)?;
        }
        trace.final_image = Some(rel);
        fs::write(
            self.out_dir.join(format!("traces/{}.json", job.id)),
            trace.to_json()? + "\n",
        )?;
        Ok(restoration.trace)
    }
}

pub fn restore(ctx: &Context, input: &Path, out_dir: &Path, oracle_tasks: bool) -> Result<()> {
    let cal = ctx.calibration()?;
    let strategy = ctx
        .strategy
        .as_deref()
        .map(|s| ctx.parse_strategy(s))
        .transpose()?;
    let single = is_image_file(input);
    let manifest = if single {
        None
    } else {
        Some(open_manifest(input)?)
    };
    if oracle_tasks && single {
        bail!("--oracle-tasks needs a manifest input");
    }
    fs::create_dir_all(out_dir.join("images"))?;
    fs::create_dir_all(out_dir.join("traces"))?;
    let restorer = Restorer {
        ctx,
        iqa: cal.iqa_context()?,
        perceiver: ctx.perceiver(&cal)?,
        strategy: strategy.clone(),
        oracle_tasks,
        out_dir,
    };
    let mut jobs: Vec<RestoreJob<'_>> = match &manifest {
        None => vec![RestoreJob {
            id: file_stem(input),
            input: input.to_path_buf(),
            record: None,
        }],
        Some(m) => m
            .records
            .iter()
            .map(|r| RestoreJob {
                id: r.id.clone(),
                input: r.degraded_path(&m.root),
                record: Some(r),
            })
            .collect(),
    };
    jobs.sort_by(|a, b| a.id.cmp(&b.id));
    let results: Vec<Result<RestorationTrace>> = ctx
        .pool()?
        .install(|| jobs.par_iter().map(|j| restorer.run(j)).collect());

    let mut warnings = Vec::new();
    let mut rows = Vec::new();
    for (job, res) in jobs.iter().zip(results) {
        match res {
            Ok(t) => rows.push(RestoreRow {
                id: job.id.clone(),
                strategy: Some(t.strategy.clone()),
                order: Some(t.applied_tasks()),
                tasks: Some(t.tasks),
                eval_count: Some(t.eval_count),
                final_quality: Some(t.final_quality),
                error: None,
            }),
            Err(e) if !single => {
                let message = format!("{e:#}");
                log::warn!("restore failed for {}: {message}", job.id);
                warnings.push(Warning {
                    id: job.id.clone(),
                    message: message.clone(),
                });
                rows.push(RestoreRow {
                    id: job.id.clone(),
                    strategy: None,
                    tasks: None,
                    order: None,
                    eval_count: None,
                    final_quality: None,
                    error: Some(message),
                });
            }
            Err(e) => return Err(e),
        }
    }
    let extra = json!({
        "calibration_digest": cal.digest(),
        "strategy": strategy.map_or_else(|| "perceive+greedy".to_string(), |s| s.label()),
        "oracle_tasks": oracle_tasks,
    });
    let ok = rows.iter().filter(|r| r.error.is_none()).count();
    ctx.write(
        "restore",
        &out_dir.join("restore.json"),
        extra,
        warnings,
        &rows,
    )?;
    println!(
        "{}",
        json!({ "restored": ok, "failed": rows.len() - ok, "out": out_dir })
    );
    Ok(())
}

#[derive(Serialize)]
struct EvaluateResult {
    restoration: iragent::evaluate::CompareReport,
    /// Perception accuracy, when the traces carry perception vectors.
    #[serde(skip_serializing_if = "Option::is_none")]
    perception: Option<iragent::evaluate::PerceptionReport>,
}

/// Scores the restored output recorded in one trace.
fn evaluate_row(
    record: &ManifestRecord,
    root: &Path,
    traces: &Path,
) -> (CompareRow, Option<RestorationTrace>) {
    let mut row = CompareRow {
        id: record.id.clone(),
        tasks: Vec::new(),
        input: None,
        cells: Vec::new(),
    };
    let trace_path = traces.join("traces").join(format!("{}.json", record.id));
    let run = || -> Result<(RestorationTrace, StrategyOutcome, iragent::evaluate::PairScore)> {
        let reference = load_image(record.source_path(root))?;
        let degraded = load_image(record.degraded_path(root))?;
        let input = pair_score(&degraded, &reference)?;
        let text = fs::read_to_string(&trace_path).with_context(|| format!("reading {}", trace_path.display()))?;
        let trace = RestorationTrace::from_json(&text)?;
        let rel = trace
            .final_image
            .clone()
            .ok_or_else(|| anyhow!("trace {} names no output image", trace_path.display()))?;
        let score = pair_score(&load_image(traces.join(rel))?, &reference)?;
        let outcome = StrategyOutcome {
            psnr_db: score.psnr_db,
            ssim: score.ssim,
            eval_count: trace.eval_count,
            stages: trace.steps.len(),
            rollbacks: trace.rollbacks,
            final_quality: trace.final_quality,
            termination: trace.termination,
            order: trace.applied_tasks(),
            wall_time_ms: trace.wall_time_ms,
        };
        Ok((trace, outcome, input))
    };
    match run() {
        Ok((trace, outcome, input)) => {
            row.tasks = trace.tasks.clone();
            row.input = Some(input);
            row.cells.push(StrategyCell {
                strategy: trace.strategy.clone(),
                outcome: Some(outcome),
                error: None,
            });
            (row, Some(trace))
        }
        Err(e) => {
            row.cells
                .push(StrategyCell::failed(String::new(), format!("{e:#}")));
            (row, None)
        }
    }
}

pub fn evaluate(ctx: &Context, manifest: &Path, traces: &Path, out: &Path) -> Result<()> {
    let manifest = open_manifest(manifest)?;
    if !traces.is_dir() {
        bail!(iragent::Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("trace directory {} not found", traces.display()),
        )));
    }
    let mut records: Vec<&ManifestRecord> = manifest.records.iter().collect();
    records.sort_by(|a, b| a.id.cmp(&b.id));
    let scored: Vec<(CompareRow, Option<RestorationTrace>)> = ctx.pool()?.install(|| {
        records
            .par_iter()
            .map(|r| evaluate_row(r, &manifest.root, traces))
            .collect()
    });

    let mut labels: Vec<String> = Vec::new();
    for t in scored.iter().filter_map(|(_, t)| t.as_ref()) {
        if !labels.contains(&t.strategy) {
            labels.push(t.strategy.clone());
        }
    }
    let fallback_label = labels.first().cloned().unwrap_or_else(|| "unknown".into());
    let mut rows = Vec::with_capacity(scored.len());
    let mut perception_rows = Vec::new();
    for (record, (mut row, trace)) in records.iter().zip(scored) {
        for c in &mut row.cells {
            if c.strategy.is_empty() {
                c.strategy = fallback_label.clone();
            }
        }
        if let Some(v) = trace.as_ref().and_then(|t| t.perception) {
            perception_rows.push(PerceptionRow {
                id: record.id.clone(),
                label: record.label,
                predicted: Some(v),
                fallback: trace.as_ref().and_then(|t| t.perception_fallback.clone()),
                error: None,
            });
        }
        rows.push(row);
    }
    if labels.is_empty() {
        labels.push(fallback_label);
    }
    let report = assemble_compare_report(&labels, rows);
    let perception = if perception_rows.is_empty() {
        None
    } else {
        assemble_perception_report(perception_rows).ok()
    };
    let warnings = report
        .failures
        .iter()
        .map(|f| Warning {
            id: f.id.clone(),
            message: f.error.clone(),
        })
        .collect();
    let table = report.to_table();
    let result = EvaluateResult {
        restoration: report,
        perception,
    };
    ctx.write("evaluate", out, json!({}), warnings, &result)?;
    print!("{table}");
    Ok(())
}

pub fn compare(
    ctx: &Context,
    manifest: &Path,
    out: &Path,
    strategies: Option<Vec<String>>,
    perceived_tasks: bool,
    csv: Option<&Path>,
) -> Result<()> {
    let cal = ctx.calibration()?;
    let iqa = cal.iqa_context()?;
    let names = strategies.unwrap_or_else(|| ctx.cfg.compare_strategies.clone());
    let kinds: Vec<StrategyKind> = names
        .iter()
        .filter(|s| !s.trim().is_empty())
        .map(|s| ctx.parse_strategy(s))
        .collect::<Result<_>>()?;
    if kinds.is_empty() {
        bail!("no strategies given");
    }
    let labels: Vec<String> = kinds.iter().map(StrategyKind::label).collect();
    let unique: BTreeSet<&String> = labels.iter().collect();
    if unique.len() != labels.len() {
        bail!("duplicate strategy in {labels:?}");
    }
    let manifest = open_manifest(manifest)?;
    let perceiver = ctx.perceiver(&cal)?;
    let source = if perceived_tasks {
        TaskSource::Perceiver(perceiver.as_ref())
    } else {
        TaskSource::Labels
    };
    let opts = CompareOptions {
        agent: ctx.agent,
        record_timing: ctx.record_timing(),
    };
    let mut records: Vec<&ManifestRecord> = manifest.records.iter().collect();
    records.sort_by(|a, b| a.id.cmp(&b.id));
    let rows: Vec<CompareRow> = ctx.pool()?.install(|| {
        records
            .par_iter()
            .map(|r| {
                compare_row(
                    r,
                    &manifest.root,
                    &kinds,
                    &ctx.registry,
                    &iqa,
                    source,
                    &opts,
                )
            })
            .collect()
    });
    let report = assemble_compare_report(&labels, rows);
    let warnings = report
        .failures
        .iter()
        .map(|f| Warning {
            id: f.id.clone(),
            message: match &f.strategy {
                Some(s) => format!("{s}: {}", f.error),
                None => f.error.clone(),
            },
        })
        .collect();
    let extra = json!({
        "calibration_digest": cal.digest(),
        "tasks_from": if perceived_tasks { "perception" } else { "labels" },
    });
    ctx.write("compare", out, extra, warnings, &report)?;
    if let Some(csv) = csv {
        fs::write(csv, report.to_csv()).with_context(|| format!("writing {}", csv.display()))?;
    }
    print!("{}", report.to_table());
    Ok(())
}

/// Inclusive range such as `2..6`, `2..=6` or `2-6`; a single number is a
/// one-element range.
pub fn parse_range(s: &str) -> Result<std::ops::RangeInclusive<usize>> {
    let s = s.trim();
    let (a, b) = if let Some((a, b)) = s.split_once("..=") {
        (a, b)
    } else if let Some((a, b)) = s.split_once("..") {
        (a, b)
    } else if let Some((a, b)) = s.split_once('-') {
        (a, b)
    } else {
        (s, s)
    };
    let (a, b): (usize, usize) = (
        a.trim()
            .parse()
            .with_context(|| format!("bad range {s:?}"))?,
        b.trim()
            .parse()
            .with_context(|| format!("bad range {s:?}"))?,
    );
    if a == 0 || a > b || b > TaskLabel::ALL.len() {
        bail!(
            "range {s:?} must satisfy 1 <= start <= end <= {}",
            TaskLabel::ALL.len()
        );
    }
    Ok(a..=b)
}

pub fn bench_complexity(
    ctx: &Context,
    range: &str,
    out: &Path,
    trials: Option<usize>,
    max_rollbacks: Option<usize>,
    all_tools: bool,
) -> Result<()> {
    let range = parse_range(range)?;
    let registry = if all_tools {
        ctx.registry.clone()
    } else {
        ctx.registry.primaries_only()
    };
    let trials = trials.unwrap_or(ctx.cfg.bench_trials).max(1);
    let max_rollbacks = max_rollbacks.or(ctx.cfg.bench_max_rollbacks);
    let rows = run_bench(range, trials, ctx.seed, &registry, max_rollbacks)?;
    let extra = json!({ "trials": trials, "all_tools": all_tools });
    ctx.write("bench-complexity", out, extra, Vec::new(), &rows)?;
    for r in &rows {
        println!(
            "n={} greedy_mean={} law={} rollback_mean={:.2} rollback_max={}",
            r.n, r.greedy_mean, r.triangular_law, r.rollback_mean, r.rollback_max
        );
    }
    Ok(())
}
