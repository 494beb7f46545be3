//! Evaluation-count benchmark on synthetic task sets.
//!
//! The synthetic environment replaces images with the sequence of applied
//! tasks and defines quality as a sum of position-discounted gains plus small
//! pairwise interactions. Every application raises quality, so greedy accepts
//! every stage and its count follows the triangular law exactly.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{greedy_search, rollback_search, Assessment, RestorationEnv, DEFAULT_EPSILON};
use crate::error::Result;
use crate::iqa::MetricVector;
use crate::restore::{TaskLabel, ToolRegistry, ToolSpec};

const DECAY: f64 = 0.9;
const GAIN_RANGE: (f64, f64) = (0.05, 0.15);
/// Nine interactions of this size stay below the smallest discounted gain,
/// `0.05 * 0.9^9`, so every application improves quality for any set size.
const INTERACTION: f64 = 0.002;

/// Quality model over task sequences.
#[derive(Clone, Debug)]
pub struct SyntheticEnv {
    gains: BTreeMap<TaskLabel, f64>,
    interaction: BTreeMap<(TaskLabel, TaskLabel), f64>,
}

impl SyntheticEnv {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let gains = TaskLabel::ALL
            .into_iter()
            .map(|t| (t, rng.gen_range(GAIN_RANGE.0..GAIN_RANGE.1)))
            .collect();
        let mut interaction = BTreeMap::new();
        for a in TaskLabel::ALL {
            for b in TaskLabel::ALL {
                if a != b {
                    interaction.insert((a, b), rng.gen_range(-INTERACTION..INTERACTION));
                }
            }
        }
        Self { gains, interaction }
    }

    pub fn quality_of(&self, seq: &[TaskLabel]) -> f64 {
        let mut q = 0.0;
        for (i, t) in seq.iter().enumerate() {
            q += self.gains[t] * DECAY.powi(i as i32);
            for earlier in &seq[..i] {
                q += self.interaction[&(*earlier, *t)];
            }
        }
        q
    }
}

impl RestorationEnv for SyntheticEnv {
    type State = Vec<TaskLabel>;

    fn apply(&self, state: &Vec<TaskLabel>, spec: &ToolSpec) -> Result<Vec<TaskLabel>> {
        let mut next = state.clone();
        next.push(spec.task);
        Ok(next)
    }

    fn assess(&self, state: &Vec<TaskLabel>) -> Result<Assessment> {
        Ok(Assessment {
            quality: self.quality_of(state),
            metrics: MetricVector::raw(0.0, 0.0, 0.0, 0.0, 0.0),
        })
    }
}

/// Mean evaluation counts for one task-set size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityRow {
    pub n: usize,
    pub trials: usize,
    /// `n (n + 1) / 2` times the number of tools per task.
    pub triangular_law: u64,
    pub greedy_mean: f64,
    pub greedy_max: u64,
    /// Every greedy run accepted all stages and hit the law exactly.
    pub greedy_matches_law: bool,
    pub max_rollbacks: usize,
    pub rollback_mean: f64,
    pub rollback_max: u64,
    pub greedy_stages_mean: f64,
}

/// Runs greedy and rollback (with `max_rollbacks = n` unless overridden) on
/// `trials` random environments and task subsets per size.
pub fn bench_complexity(
    sizes: impl IntoIterator<Item = usize>,
    trials: usize,
    seed: u64,
    registry: &ToolRegistry,
    max_rollbacks: Option<usize>,
) -> Result<Vec<ComplexityRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for n in sizes {
        let n = n.min(TaskLabel::ALL.len());
        let rb = max_rollbacks.unwrap_or(n);
        let (mut g_sum, mut r_sum, mut stages) = (0u64, 0u64, 0usize);
        let (mut g_max, mut r_max) = (0u64, 0u64);
        let mut law_ok = true;
        let mut law = 0u64;
        for _ in 0..trials.max(1) {
            let env = SyntheticEnv::random(&mut rng);
            let mut all = TaskLabel::ALL.to_vec();
            all.shuffle(&mut rng);
            let tasks: BTreeSet<TaskLabel> = all[..n].iter().copied().collect();
            law = triangular_law(registry, &tasks);
            let g = greedy_search(&env, &Vec::new(), &tasks, registry, DEFAULT_EPSILON)?;
            let r = rollback_search(&env, &Vec::new(), &tasks, registry, DEFAULT_EPSILON, rb)?;
            law_ok &= g.eval_count == law && g.steps.len() == n;
            g_sum += g.eval_count;
            r_sum += r.eval_count;
            g_max = g_max.max(g.eval_count);
            r_max = r_max.max(r.eval_count);
            stages += g.steps.len();
        }
        let t = trials.max(1) as f64;
        rows.push(ComplexityRow {
            n,
            trials: trials.max(1),
            triangular_law: law,
            greedy_mean: g_sum as f64 / t,
            greedy_max: g_max,
            greedy_matches_law: law_ok,
            max_rollbacks: rb,
            rollback_mean: r_sum as f64 / t,
            rollback_max: r_max,
            greedy_stages_mean: stages as f64 / t,
        });
    }
    Ok(rows)
}

/// Candidate applications of an all-accepting greedy run with `m` tools per
/// task: `m * n (n + 1) / 2`. Only meaningful when every task has the same
/// number of tools; `m` is taken from the first task.
pub fn triangular_law(registry: &ToolRegistry, tasks: &BTreeSet<TaskLabel>) -> u64 {
    let n = tasks.len() as u64;
    let m = tasks
        .iter()
        .next()
        .map_or(1, |t| registry.tools(*t).len() as u64);
    m * n * (n + 1) / 2
}
