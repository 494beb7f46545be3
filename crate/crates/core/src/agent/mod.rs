//! Quality-driven restoration scheduling.
//!
//! Given the set of perceived degradations, the agent decides which tool to
//! run next by trying every remaining candidate and keeping the one with the
//! best no-reference quality. Baseline orderings (random, reversed recipe,
//! fixed, greedy with undo) and an exhaustive oracle share the same trace
//! format.
//!
//! The search code is generic over [`RestorationEnv`]; [`ToolboxEnv`] binds it
//! to real images, the restoration toolbox and a calibrated [`IqaContext`].

mod bench;
mod search;

pub use bench::{bench_complexity, triangular_law, ComplexityRow, SyntheticEnv};
pub use search::{
    exhaustive_search, fixed_order_search, greedy_search, rollback_search, ExhaustiveResult,
    SearchOutcome, EXHAUSTIVE_MAX_TASKS,
};

use std::collections::BTreeSet;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::degrade::Recipe;
use crate::error::{Error, Result};
use crate::iqa::{quality_score, IqaContext, MetricVector, QualityMode, SLOT_NAMES};
use crate::labels::{LabelBit, PerceptionVector};
use crate::perceive::{DetectorReport, Perceiver};
use crate::restore::{apply_tool, TaskLabel, ToolRegistry, ToolSpec};
use crate::ImageF;

/// Minimum quality gain, in normalised quality units, that counts as an
/// improvement.
pub const DEFAULT_EPSILON: f64 = 1e-4;
/// Safety net on the number of stages of one path. Each task is applied at
/// most once, so with ten task labels this never fires.
pub const STAGE_CAP: usize = 10;

/// Quality of a state plus the metric slots it came from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub quality: f64,
    pub metrics: MetricVector,
}

/// What the scheduler needs from the world: a way to run a tool and a way to
/// score the result.
pub trait RestorationEnv {
    type State: Clone;

    fn apply(&self, state: &Self::State, spec: &ToolSpec) -> Result<Self::State>;
    fn assess(&self, state: &Self::State) -> Result<Assessment>;
}

/// Scheduler settings shared by every strategy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentOptions {
    /// Minimum quality gain that counts as an improvement.
    pub eps: f64,
    pub quality_mode: QualityMode,
}

impl Default for AgentOptions {
    fn default() -> Self {
        Self {
            eps: DEFAULT_EPSILON,
            quality_mode: QualityMode::Normalized,
        }
    }
}

/// Real images scored with the quality of a calibrated context.
#[derive(Clone, Copy, Debug)]
pub struct ToolboxEnv<'a> {
    ctx: &'a IqaContext,
    mode: QualityMode,
}

impl<'a> ToolboxEnv<'a> {
    /// Normalised quality. Fails with `CalibrationMissing` unless the
    /// context's percentile table covers every metric slot.
    pub fn new(ctx: &'a IqaContext) -> Result<Self> {
        Self::with_mode(ctx, QualityMode::Normalized)
    }

    pub fn with_mode(ctx: &'a IqaContext, mode: QualityMode) -> Result<Self> {
        let table = &ctx.model.percentile_table;
        if let Some(missing) = SLOT_NAMES.iter().find(|k| !table.contains_key(**k)) {
            return Err(Error::CalibrationMissing(format!(
                "no percentile range for slot {missing}"
            )));
        }
        Ok(Self { ctx, mode })
    }
}

impl RestorationEnv for ToolboxEnv<'_> {
    type State = ImageF;

    fn apply(&self, state: &ImageF, spec: &ToolSpec) -> Result<ImageF> {
        apply_tool(state, spec, self.ctx)
    }

    fn assess(&self, state: &ImageF) -> Result<Assessment> {
        let metrics = self.ctx.measure(state)?;
        let quality = quality_score(&metrics, self.mode)?.value;
        Ok(Assessment { quality, metrics })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Termination {
    AllTasksDone,
    NoImprovement,
    StageCap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcceptedStep {
    /// 1-based.
    pub stage: usize,
    pub spec: ToolSpec,
    pub quality_before: f64,
    pub quality_after: f64,
    pub metric_vector_after: MetricVector,
}

/// Scheduling policy.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrategyKind {
    Greedy,
    Rollback {
        max_rollbacks: usize,
    },
    Random {
        seed: u64,
    },
    /// Reverse of the recipe's degradation order; evaluation only.
    ReverseOrder,
    FixedOrder {
        order: Vec<TaskLabel>,
    },
}

impl StrategyKind {
    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::Greedy => "greedy",
            StrategyKind::Rollback { .. } => "rollback",
            StrategyKind::Random { .. } => "random",
            StrategyKind::ReverseOrder => "reverse_order",
            StrategyKind::FixedOrder { .. } => "fixed_order",
        }
    }

    /// Display label including the parameter, e.g. `rollback:3`.
    pub fn label(&self) -> String {
        match self {
            StrategyKind::Rollback { max_rollbacks } => format!("rollback:{max_rollbacks}"),
            StrategyKind::Random { seed } => format!("random:{seed}"),
            StrategyKind::FixedOrder { order } => {
                let names: Vec<&str> = order.iter().map(|t| t.name()).collect();
                format!("fixed:{}", names.join(","))
            }
            other => other.name().to_string(),
        }
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

/// Parses `greedy`, `rollback[:N]`, `random[:SEED]`, `reverse` and
/// `fixed:DN_M,DH,...`.
impl std::str::FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        let bad = || Error::ParamOutOfRange(format!("unknown strategy {s:?}"));
        let num = |default: u64| -> Result<u64> {
            arg.map_or(Ok(default), |a| a.parse().map_err(|_| bad()))
        };
        match head.to_ascii_lowercase().as_str() {
            "greedy" if arg.is_none() => Ok(StrategyKind::Greedy),
            "rollback" => Ok(StrategyKind::Rollback {
                max_rollbacks: num(3)? as usize,
            }),
            "random" => Ok(StrategyKind::Random { seed: num(0)? }),
            "reverse" | "reverse_order" if arg.is_none() => Ok(StrategyKind::ReverseOrder),
            "fixed" | "fixed_order" => {
                let order = arg
                    .ok_or_else(bad)?
                    .split(',')
                    .filter(|t| !t.trim().is_empty())
                    .map(|t| t.trim().parse())
                    .collect::<Result<Vec<TaskLabel>>>()?;
                Ok(StrategyKind::FixedOrder { order })
            }
            _ => Err(bad()),
        }
    }
}

/// Full record of one restoration run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestorationTrace {
    pub strategy: String,
    pub tasks: Vec<TaskLabel>,
    pub steps: Vec<AcceptedStep>,
    pub termination: Termination,
    /// Tool applications, including those that were ranked but not kept.
    pub eval_count: u64,
    pub rollbacks: usize,
    pub initial_quality: f64,
    pub initial_metrics: MetricVector,
    pub final_quality: f64,
    /// Milliseconds. Left at zero when traces must be byte-reproducible.
    pub wall_time_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perception: Option<PerceptionVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perception_report: Option<DetectorReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perception_fallback: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipe_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_image: Option<String>,
}

impl RestorationTrace {
    fn from_outcome<S>(
        strategy: &StrategyKind,
        tasks: &BTreeSet<TaskLabel>,
        o: &SearchOutcome<S>,
        started: Instant,
    ) -> Self {
        Self {
            strategy: strategy.label(),
            tasks: tasks.iter().copied().collect(),
            steps: o.steps.clone(),
            termination: o.termination,
            eval_count: o.eval_count,
            rollbacks: o.rollbacks,
            initial_quality: o.initial.quality,
            initial_metrics: o.initial.metrics,
            final_quality: o.final_quality(),
            wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
            perception: None,
            perception_report: None,
            perception_fallback: None,
            recipe_id: None,
            final_image: None,
        }
    }

    /// Order in which tasks were applied.
    pub fn applied_tasks(&self) -> Vec<TaskLabel> {
        self.steps.iter().map(|s| s.spec.task).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Restored image together with its trace.
#[derive(Clone, Debug)]
pub struct Restoration {
    pub image: ImageF,
    pub trace: RestorationTrace,
}

/// Restoration task for one perception bit.
pub fn task_for_bit(bit: LabelBit) -> TaskLabel {
    match bit {
        LabelBit::NoiseLow => TaskLabel::DnL,
        LabelBit::NoiseMid => TaskLabel::DnM,
        LabelBit::NoiseHigh => TaskLabel::DnH,
        LabelBit::Jpeg => TaskLabel::Dj,
        LabelBit::Rain => TaskLabel::Dr,
        LabelBit::Haze => TaskLabel::Dh,
        LabelBit::MotionBlur => TaskLabel::Mdb,
        LabelBit::DefocusBlur => TaskLabel::Ddb,
        LabelBit::LowLight => TaskLabel::Le,
        LabelBit::LowRes => TaskLabel::Sr,
    }
}

pub fn tasks_from_vector(v: &PerceptionVector) -> BTreeSet<TaskLabel> {
    v.iter_set().map(task_for_bit).collect()
}

/// Tasks of a recipe in degradation order.
pub fn recipe_tasks(recipe: &Recipe) -> Vec<TaskLabel> {
    recipe
        .steps
        .iter()
        .map(|s| task_for_bit(s.label_bit()))
        .collect()
}

fn finish(
    strategy: &StrategyKind,
    tasks: &BTreeSet<TaskLabel>,
    o: SearchOutcome<ImageF>,
    started: Instant,
) -> Restoration {
    let trace = RestorationTrace::from_outcome(strategy, tasks, &o, started);
    Restoration {
        image: o.state,
        trace,
    }
}

pub fn greedy_restore(
    img: &ImageF,
    tasks: &BTreeSet<TaskLabel>,
    registry: &ToolRegistry,
    ctx: &IqaContext,
    opts: &AgentOptions,
) -> Result<Restoration> {
    run_strategy(img, &StrategyKind::Greedy, tasks, None, registry, ctx, opts)
}

pub fn rollback_restore(
    img: &ImageF,
    tasks: &BTreeSet<TaskLabel>,
    registry: &ToolRegistry,
    ctx: &IqaContext,
    opts: &AgentOptions,
    max_rollbacks: usize,
) -> Result<Restoration> {
    run_strategy(
        img,
        &StrategyKind::Rollback { max_rollbacks },
        tasks,
        None,
        registry,
        ctx,
        opts,
    )
}

/// Task order a non-adaptive strategy would use. `None` for the adaptive ones.
pub fn planned_order(
    strategy: &StrategyKind,
    tasks: &BTreeSet<TaskLabel>,
    recipe: Option<&Recipe>,
) -> Result<Option<Vec<TaskLabel>>> {
    Ok(match strategy {
        StrategyKind::Greedy | StrategyKind::Rollback { .. } => None,
        StrategyKind::Random { seed } => {
            let mut order: Vec<TaskLabel> = tasks.iter().copied().collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(*seed));
            Some(order)
        }
        StrategyKind::ReverseOrder => {
            let mut order = recipe_tasks(recipe.ok_or(Error::MissingRecipe)?);
            order.reverse();
            Some(order)
        }
        StrategyKind::FixedOrder { order } => Some(order.clone()),
    })
}

/// Runs one strategy on a real image.
///
/// Greedy and rollback search over `tasks`. Random permutes `tasks` with its
/// seed. ReverseOrder takes its tasks from the recipe, last degradation first.
/// FixedOrder applies its own list. The non-adaptive strategies use each
/// task's primary tool and keep every step.
pub fn run_strategy(
    img: &ImageF,
    strategy: &StrategyKind,
    tasks: &BTreeSet<TaskLabel>,
    recipe: Option<&Recipe>,
    registry: &ToolRegistry,
    ctx: &IqaContext,
    opts: &AgentOptions,
) -> Result<Restoration> {
    let started = Instant::now();
    let env = ToolboxEnv::with_mode(ctx, opts.quality_mode)?;
    let outcome = match (strategy, planned_order(strategy, tasks, recipe)?) {
        (_, Some(order)) => {
            let set: BTreeSet<TaskLabel> = order.iter().copied().collect();
            let o = fixed_order_search(&env, img, &order, registry)?;
            let mut r = finish(strategy, &set, o, started);
            r.trace.recipe_id = recipe.map(|r| r.source_id.clone());
            return Ok(r);
        }
        (StrategyKind::Rollback { max_rollbacks }, None) => {
            rollback_search(&env, img, tasks, registry, opts.eps, *max_rollbacks)?
        }
        (_, None) => greedy_search(&env, img, tasks, registry, opts.eps)?,
    };
    let mut r = finish(strategy, tasks, outcome, started);
    r.trace.recipe_id = recipe.map(|r| r.source_id.clone());
    Ok(r)
}

/// Perception followed by greedy restoration of the perceived tasks.
pub fn restore_end_to_end(
    img: &ImageF,
    ctx: &IqaContext,
    registry: &ToolRegistry,
    perceiver: &dyn Perceiver,
    image_ref: Option<&std::path::Path>,
    opts: &AgentOptions,
) -> Result<Restoration> {
    let started = Instant::now();
    let perception = perceiver.perceive(img, image_ref)?;
    let tasks = tasks_from_vector(&perception.vector);
    let mut r = greedy_restore(img, &tasks, registry, ctx, opts)?;
    r.trace.perception = Some(perception.vector);
    r.trace.perception_report = perception.report;
    r.trace.perception_fallback = perception.fallback;
    r.trace.wall_time_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok(r)
}

/// Best order over all permutations of at most four tasks, primary tools only.
pub fn exhaustive_best_order(
    img: &ImageF,
    tasks: &BTreeSet<TaskLabel>,
    registry: &ToolRegistry,
    ctx: &IqaContext,
    opts: &AgentOptions,
) -> Result<ExhaustiveResult> {
    if tasks.len() > EXHAUSTIVE_MAX_TASKS {
        return Err(Error::TooManyTasks(tasks.len()));
    }
    exhaustive_search(
        &ToolboxEnv::with_mode(ctx, opts.quality_mode)?,
        img,
        tasks,
        registry,
    )
}
