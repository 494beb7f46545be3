//! Full-reference scoring and dataset-level reports.
//!
//! [`compare_strategies`] restores every manifest row with each strategy and
//! scores the result against the row's pristine source; [`perception_report`]
//! tabulates detector accuracy against ground-truth labels. Both reports are
//! folds over per-row records that are kept in the report, so every summary
//! number can be recomputed from them.

mod metrics;

pub use metrics::{pair_score, psnr, ssim, PairScore, PSNR_CAP, SSIM_SIGMA, SSIM_WINDOW};

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::agent::{run_strategy, tasks_from_vector, AgentOptions, StrategyKind, Termination};
use crate::degrade::{Manifest, ManifestRecord};
use crate::error::{Error, Result};
use crate::imagecore::load_image;
use crate::iqa::IqaContext;
use crate::labels::{LabelBit, LabelVector, PerceptionVector, LABEL_NAMES};
use crate::perceive::Perceiver;
use crate::perceive::{dacc, macc, precision};
use crate::restore::{TaskLabel, ToolRegistry};

/// Where the task set of a row comes from.
#[derive(Clone, Copy)]
pub enum TaskSource<'a> {
    /// Ground-truth label of the manifest row.
    Labels,
    Perceiver(&'a dyn Perceiver),
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CompareOptions {
    pub agent: AgentOptions,
    /// Keep measured wall times; off for byte-reproducible reports.
    pub record_timing: bool,
}

/// One strategy's result on one row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyOutcome {
    pub psnr_db: f64,
    pub ssim: f64,
    pub eval_count: u64,
    pub stages: usize,
    pub rollbacks: usize,
    pub final_quality: f64,
    pub termination: Termination,
    pub order: Vec<TaskLabel>,
    pub wall_time_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyCell {
    pub strategy: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<StrategyOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl StrategyCell {
    pub fn failed(strategy: impl Into<String>, err: impl ToString) -> Self {
        Self {
            strategy: strategy.into(),
            outcome: None,
            error: Some(err.to_string()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub id: String,
    pub tasks: Vec<TaskLabel>,
    /// The degraded input scored against the source.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PairScore>,
    pub cells: Vec<StrategyCell>,
}

/// Restores one manifest row with every strategy. Failures are recorded in
/// the row instead of being returned.
pub fn compare_row(
    record: &ManifestRecord,
    root: &std::path::Path,
    strategies: &[StrategyKind],
    registry: &ToolRegistry,
    ctx: &IqaContext,
    source: TaskSource<'_>,
    opts: &CompareOptions,
) -> CompareRow {
    let fail_all = |tasks: Vec<TaskLabel>, e: &Error| CompareRow {
        id: record.id.clone(),
        tasks,
        input: None,
        cells: strategies
            .iter()
            .map(|s| StrategyCell::failed(s.label(), e))
            .collect(),
    };
    let degraded_path = record.degraded_path(root);
    let loaded =
        load_image(record.source_path(root)).and_then(|s| Ok((s, load_image(&degraded_path)?)));
    let (reference, degraded) = match loaded {
        Ok(pair) => pair,
        Err(e) => return fail_all(Vec::new(), &e),
    };
    let tasks: BTreeSet<TaskLabel> = match source {
        TaskSource::Labels => tasks_from_vector(&record.label),
        TaskSource::Perceiver(p) => match p.perceive(&degraded, Some(&degraded_path)) {
            Ok(o) => tasks_from_vector(&o.vector),
            Err(e) => return fail_all(Vec::new(), &e),
        },
    };
    let task_list: Vec<TaskLabel> = tasks.iter().copied().collect();
    let input = match pair_score(&degraded, &reference) {
        Ok(s) => s,
        Err(e) => return fail_all(task_list, &e),
    };
    let recipe = record.recipe();
    let cells = strategies
        .iter()
        .map(|s| {
            let run = run_strategy(
                &degraded,
                s,
                &tasks,
                Some(&recipe),
                registry,
                ctx,
                &opts.agent,
            )
            .and_then(|r| Ok((pair_score(&r.image, &reference)?, r.trace)));
            match run {
                Ok((score, trace)) => StrategyCell {
                    strategy: s.label(),
                    outcome: Some(StrategyOutcome {
                        psnr_db: score.psnr_db,
                        ssim: score.ssim,
                        eval_count: trace.eval_count,
                        stages: trace.steps.len(),
                        rollbacks: trace.rollbacks,
                        final_quality: trace.final_quality,
                        termination: trace.termination,
                        order: trace.applied_tasks(),
                        wall_time_ms: if opts.record_timing {
                            trace.wall_time_ms
                        } else {
                            0.0
                        },
                    }),
                    error: None,
                },
                Err(e) => StrategyCell::failed(s.label(), e),
            }
        })
        .collect();
    CompareRow {
        id: record.id.clone(),
        tasks: task_list,
        input: Some(input),
        cells,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: String,
    pub n_ok: usize,
    pub n_failed: usize,
    pub mean_psnr: Option<f64>,
    pub mean_ssim: Option<f64>,
    /// Learned perceptual metrics are not computed; kept as explicit nulls.
    pub lpips: Option<f64>,
    pub dists: Option<f64>,
    pub mean_eval_count: Option<f64>,
    pub max_eval_count: Option<u64>,
    pub mean_stages: Option<f64>,
    pub mean_wall_time_ms: Option<f64>,
}

/// Paired comparison of the reference strategy against one baseline on rows
/// where both succeeded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WinRate {
    pub reference: String,
    pub baseline: String,
    pub pairs: usize,
    /// Rows where the reference PSNR is at least the baseline's.
    pub wins: usize,
    pub rate: Option<f64>,
    pub mean_psnr_gap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowFailure {
    pub id: String,
    pub strategy: Option<String>,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub rows: usize,
    pub psnr_cap: f64,
    pub input_mean_psnr: Option<f64>,
    pub input_mean_ssim: Option<f64>,
    pub strategies: Vec<StrategySummary>,
    pub win_rates: Vec<WinRate>,
    pub failures: Vec<RowFailure>,
    pub records: Vec<CompareRow>,
}

fn mean(v: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for x in v {
        s += x;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

/// Folds per-row records into the report. The strategy order of the report is
/// `strategies`; the reference for win rates is the greedy strategy if
/// present, else the first one.
pub fn assemble_compare_report(strategies: &[String], records: Vec<CompareRow>) -> CompareReport {
    let outcome = |row: &CompareRow, s: &str| -> Option<StrategyOutcome> {
        row.cells
            .iter()
            .find(|c| c.strategy == s)
            .and_then(|c| c.outcome.clone())
    };
    let summaries = strategies
        .iter()
        .map(|s| {
            let oks: Vec<StrategyOutcome> = records.iter().filter_map(|r| outcome(r, s)).collect();
            StrategySummary {
                strategy: s.clone(),
                n_ok: oks.len(),
                n_failed: records.len() - oks.len(),
                mean_psnr: mean(oks.iter().map(|o| o.psnr_db)),
                mean_ssim: mean(oks.iter().map(|o| o.ssim)),
                lpips: None,
                dists: None,
                mean_eval_count: mean(oks.iter().map(|o| o.eval_count as f64)),
                max_eval_count: oks.iter().map(|o| o.eval_count).max(),
                mean_stages: mean(oks.iter().map(|o| o.stages as f64)),
                mean_wall_time_ms: mean(oks.iter().map(|o| o.wall_time_ms)),
            }
        })
        .collect();
    let reference = strategies
        .iter()
        .find(|s| s.as_str() == StrategyKind::Greedy.name())
        .or(strategies.first());
    let win_rates = reference
        .map(|r| {
            strategies
                .iter()
                .filter(|b| *b != r)
                .map(|b| {
                    let gaps: Vec<f64> = records
                        .iter()
                        .filter_map(|row| Some(outcome(row, r)?.psnr_db - outcome(row, b)?.psnr_db))
                        .collect();
                    let wins = gaps.iter().filter(|g| **g >= 0.0).count();
                    WinRate {
                        reference: r.clone(),
                        baseline: b.clone(),
                        pairs: gaps.len(),
                        wins,
                        rate: (!gaps.is_empty()).then(|| wins as f64 / gaps.len() as f64),
                        mean_psnr_gap: mean(gaps.iter().copied()),
                    }
                })
                .collect()
        })
        .unwrap_or_default();
    let failures = records
        .iter()
        .flat_map(|row| {
            row.cells.iter().filter_map(|c| {
                c.error.as_ref().map(|e| RowFailure {
                    id: row.id.clone(),
                    strategy: Some(c.strategy.clone()),
                    error: e.clone(),
                })
            })
        })
        .collect();
    CompareReport {
        rows: records.len(),
        psnr_cap: PSNR_CAP,
        input_mean_psnr: mean(records.iter().filter_map(|r| r.input.map(|s| s.psnr_db))),
        input_mean_ssim: mean(records.iter().filter_map(|r| r.input.map(|s| s.ssim))),
        strategies: summaries,
        win_rates,
        failures,
        records,
    }
}

/// Runs every strategy on every manifest row, sequentially and in manifest
/// order.
pub fn compare_strategies(
    manifest: &Manifest,
    strategies: &[StrategyKind],
    registry: &ToolRegistry,
    ctx: &IqaContext,
    source: TaskSource<'_>,
    opts: &CompareOptions,
) -> Result<CompareReport> {
    if manifest.is_empty() {
        return Err(Error::Empty("manifest"));
    }
    let rows = manifest
        .records
        .iter()
        .map(|r| compare_row(r, &manifest.root, strategies, registry, ctx, source, opts))
        .collect();
    let labels: Vec<String> = strategies.iter().map(StrategyKind::label).collect();
    Ok(assemble_compare_report(&labels, rows))
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

impl CompareReport {
    /// Aligned text table, one line per strategy.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<18} {:>9} {:>7} {:>6} {:>6} {:>8} {:>7} {:>8}",
            "strategy", "PSNR", "SSIM", "LPIPS", "DISTS", "evals", "stages", "win"
        );
        let _ = writeln!(
            out,
            "{:<18} {:>9} {:>7} {:>6} {:>6} {:>8} {:>7} {:>8}",
            "input",
            fmt_opt(self.input_mean_psnr, 4),
            fmt_opt(self.input_mean_ssim, 4),
            "-",
            "-",
            "-",
            "-",
            "-"
        );
        for s in &self.strategies {
            let win = self
                .win_rates
                .iter()
                .find(|w| w.baseline == s.strategy)
                .and_then(|w| w.rate);
            let _ = writeln!(
                out,
                "{:<18} {:>9} {:>7} {:>6} {:>6} {:>8} {:>7} {:>8}",
                s.strategy,
                fmt_opt(s.mean_psnr, 4),
                fmt_opt(s.mean_ssim, 4),
                "-",
                "-",
                fmt_opt(s.mean_eval_count, 2),
                fmt_opt(s.mean_stages, 2),
                fmt_opt(win, 3)
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("strategy,n_ok,n_failed,psnr,ssim,lpips,dists,mean_eval_count,max_eval_count,mean_stages,win_rate\n");
        let cell = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
        for s in &self.strategies {
            let win = self
                .win_rates
                .iter()
                .find(|w| w.baseline == s.strategy)
                .and_then(|w| w.rate);
            let _ = writeln!(
                out,
                "{},{},{},{},{},,,{},{},{},{}",
                s.strategy,
                s.n_ok,
                s.n_failed,
                cell(s.mean_psnr),
                cell(s.mean_ssim),
                cell(s.mean_eval_count),
                s.max_eval_count.map_or(String::new(), |v| v.to_string()),
                cell(s.mean_stages),
                cell(win)
            );
        }
        out
    }

    pub fn summary(&self, strategy: &str) -> Option<&StrategySummary> {
        self.strategies.iter().find(|s| s.strategy == strategy)
    }
}

/// Accuracy figures for one label bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelAccuracy {
    pub label: String,
    /// Rows carrying the label.
    pub support: usize,
    pub dacc: Option<f64>,
    pub precision: Option<f64>,
    /// Share of pristine rows flagged with this label.
    pub pristine_fpr: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerceptionRow {
    pub id: String,
    pub label: LabelVector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted: Option<PerceptionVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerceptionReport {
    pub rows: usize,
    pub scored: usize,
    pub pristine_rows: usize,
    pub macc: f64,
    /// MACC of a predictor that never flags anything.
    pub all_zero_macc: f64,
    pub labels: Vec<LabelAccuracy>,
    pub failures: Vec<RowFailure>,
    pub records: Vec<PerceptionRow>,
}

/// Folds per-row predictions. Rows without a prediction are counted as
/// failures and left out of every accuracy figure.
pub fn assemble_perception_report(records: Vec<PerceptionRow>) -> Result<PerceptionReport> {
    let (preds, labels): (Vec<PerceptionVector>, Vec<LabelVector>) = records
        .iter()
        .filter_map(|r| Some((r.predicted?, r.label)))
        .unzip();
    if preds.is_empty() {
        return Err(Error::Empty("perception rows with a prediction"));
    }
    let zeros = vec![PerceptionVector::empty(); labels.len()];
    let pristine: Vec<&PerceptionVector> = preds
        .iter()
        .zip(&labels)
        .filter(|(_, l)| l.is_empty())
        .map(|(p, _)| p)
        .collect();
    let label_rows = LabelBit::ALL
        .iter()
        .map(|&bit| {
            let i = bit.index();
            Ok(LabelAccuracy {
                label: LABEL_NAMES[i].to_string(),
                support: labels.iter().filter(|l| l.get(bit)).count(),
                dacc: match dacc(&preds, &labels, i) {
                    Ok(v) => Some(v),
                    Err(Error::EmptyClass(_)) => None,
                    Err(e) => return Err(e),
                },
                precision: precision(&preds, &labels, i)?,
                pristine_fpr: (!pristine.is_empty()).then(|| {
                    pristine.iter().filter(|p| p.get(bit)).count() as f64 / pristine.len() as f64
                }),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let failures = records
        .iter()
        .filter_map(|r| {
            r.error.as_ref().map(|e| RowFailure {
                id: r.id.clone(),
                strategy: None,
                error: e.clone(),
            })
        })
        .collect();
    Ok(PerceptionReport {
        rows: records.len(),
        scored: preds.len(),
        pristine_rows: pristine.len(),
        macc: macc(&preds, &labels)?,
        all_zero_macc: macc(&zeros, &labels)?,
        labels: label_rows,
        failures,
        records,
    })
}

/// Perceives one manifest row's degraded image.
pub fn perception_row(
    record: &ManifestRecord,
    root: &std::path::Path,
    perceiver: &dyn Perceiver,
) -> PerceptionRow {
    let path = record.degraded_path(root);
    let outcome = load_image(&path).and_then(|img| perceiver.perceive(&img, Some(&path)));
    let (predicted, fallback, error) = match outcome {
        Ok(o) => (Some(o.vector), o.fallback, None),
        Err(e) => {
            log::warn!("perception failed for {}: {e}", record.id);
            (None, None, Some(e.to_string()))
        }
    };
    PerceptionRow {
        id: record.id.clone(),
        label: record.label,
        predicted,
        fallback,
        error,
    }
}

pub fn perception_report(
    manifest: &Manifest,
    perceiver: &dyn Perceiver,
) -> Result<PerceptionReport> {
    if manifest.is_empty() {
        return Err(Error::Empty("manifest"));
    }
    let rows = manifest
        .records
        .iter()
        .map(|r| perception_row(r, &manifest.root, perceiver))
        .collect();
    assemble_perception_report(rows)
}

impl PerceptionReport {
    /// Aligned table with one column per label plus MACC.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let mut header = format!("{:<10}", "");
        for l in &self.labels {
            let _ = write!(header, " {:>6}", l.label);
        }
        let _ = writeln!(out, "{header} {:>6}", "MACC");
        for (name, pick) in [
            (
                "DACC",
                (|l: &LabelAccuracy| l.dacc) as fn(&LabelAccuracy) -> Option<f64>,
            ),
            ("precision", |l: &LabelAccuracy| l.precision),
            ("FPR", |l: &LabelAccuracy| l.pristine_fpr),
        ] {
            let mut line = format!("{name:<10}");
            for l in &self.labels {
                let _ = write!(line, " {:>6}", fmt_opt(pick(l), 3));
            }
            let macc = if name == "DACC" {
                format!("{:.3}", self.macc)
            } else {
                String::new()
            };
            let _ = writeln!(out, "{line} {macc:>6}");
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,support,dacc,precision,pristine_fpr\n");
        let cell = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
        for l in &self.labels {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                l.label,
                l.support,
                cell(l.dacc),
                cell(l.precision),
                cell(l.pristine_fpr)
            );
        }
        let _ = writeln!(out, "MACC,{},{},,", self.scored, self.macc);
        out
    }

    pub fn dacc_of(&self, bit: LabelBit) -> Option<f64> {
        self.labels[bit.index()].dacc
    }
}
