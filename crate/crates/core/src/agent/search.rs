//! Search procedures, generic over the state being restored so that the
//! scheduling logic can be exercised without running image operators.

use std::collections::BTreeSet;

use super::{AcceptedStep, Assessment, RestorationEnv, Termination, STAGE_CAP};
use crate::error::{Error, Result};
use crate::restore::{TaskLabel, ToolRegistry, ToolSpec};

/// Result of one search before it is wrapped into a trace.
#[derive(Clone, Debug)]
pub struct SearchOutcome<S> {
    pub state: S,
    pub initial: Assessment,
    pub steps: Vec<AcceptedStep>,
    pub termination: Termination,
    pub eval_count: u64,
    pub rollbacks: usize,
}

impl<S> SearchOutcome<S> {
    pub fn final_quality(&self) -> f64 {
        self.steps
            .last()
            .map_or(self.initial.quality, |s| s.quality_after)
    }
}

struct Candidate<S> {
    spec: ToolSpec,
    state: S,
    assessment: Assessment,
}

/// Applies every tool of every remaining task to `state`. The result is sorted
/// by quality, best first; ties keep enumeration order, which is ascending
/// task label, then ascending tool id.
fn rank_candidates<E: RestorationEnv>(
    env: &E,
    state: &E::State,
    remaining: &BTreeSet<TaskLabel>,
    registry: &ToolRegistry,
    evals: &mut u64,
) -> Result<Vec<Candidate<E::State>>> {
    let mut out = Vec::new();
    for &task in remaining {
        let mut tools: Vec<&ToolSpec> = registry.tools(task).iter().collect();
        tools.sort_by(|a, b| a.tool_id.cmp(&b.tool_id));
        for spec in tools {
            let next = env.apply(state, spec)?;
            *evals += 1;
            let assessment = env.assess(&next)?;
            out.push(Candidate {
                spec: spec.clone(),
                state: next,
                assessment,
            });
        }
    }
    out.sort_by(|a, b| b.assessment.quality.total_cmp(&a.assessment.quality));
    Ok(out)
}

fn accept<S>(steps: &mut Vec<AcceptedStep>, before: f64, c: &Candidate<S>) {
    steps.push(AcceptedStep {
        stage: steps.len() + 1,
        spec: c.spec.clone(),
        quality_before: before,
        quality_after: c.assessment.quality,
        metric_vector_after: c.assessment.metrics,
    });
}

/// Quality-driven greedy scheduling: at each stage the best candidate over all
/// remaining tasks and tools is kept if it beats the current quality by more
/// than `eps`.
pub fn greedy_search<E: RestorationEnv>(
    env: &E,
    start: &E::State,
    tasks: &BTreeSet<TaskLabel>,
    registry: &ToolRegistry,
    eps: f64,
) -> Result<SearchOutcome<E::State>> {
    rollback_search(env, start, tasks, registry, eps, 0)
}

/// One accepted stage on the current path, with the alternatives that were
/// ranked below the accepted candidate.
struct Frame<S> {
    before_state: S,
    before_quality: f64,
    before_remaining: BTreeSet<TaskLabel>,
    ranked: Vec<Candidate<S>>,
    chosen: usize,
}

/// Greedy scheduling with undo.
///
/// A forward pass runs exactly like the greedy search. When it ends, the most
/// recent step is undone and the next-best candidate of that stage is tried,
/// provided it still improves on the stage's starting quality; a stage with no
/// such candidate is undone as well. Every undone step uses one unit of
/// `max_rollbacks`. The best final quality over all completed paths is
/// returned, the earliest path winning ties. With `max_rollbacks == 0` this is
/// the greedy search.
pub fn rollback_search<E: RestorationEnv>(
    env: &E,
    start: &E::State,
    tasks: &BTreeSet<TaskLabel>,
    registry: &ToolRegistry,
    eps: f64,
    max_rollbacks: usize,
) -> Result<SearchOutcome<E::State>> {
    let initial = env.assess(start)?;
    let mut evals = 0u64;
    let mut rollbacks = 0usize;
    let mut frames: Vec<Frame<E::State>> = Vec::new();
    let mut steps: Vec<AcceptedStep> = Vec::new();
    let mut state = start.clone();
    let mut quality = initial.quality;
    let mut remaining = tasks.clone();
    let mut best: Option<(E::State, Vec<AcceptedStep>, Termination)> = None;

    loop {
        let termination = loop {
            if remaining.is_empty() {
                break Termination::AllTasksDone;
            }
            if steps.len() >= STAGE_CAP {
                break Termination::StageCap;
            }
            let ranked = rank_candidates(env, &state, &remaining, registry, &mut evals)?;
            let Some(top) = ranked.first() else {
                break Termination::NoImprovement;
            };
            if top.assessment.quality <= quality + eps {
                break Termination::NoImprovement;
            }
            accept(&mut steps, quality, top);
            let next_state = top.state.clone();
            let next_quality = top.assessment.quality;
            let mut next_remaining = remaining.clone();
            next_remaining.remove(&top.spec.task);
            frames.push(Frame {
                before_state: std::mem::replace(&mut state, next_state),
                before_quality: quality,
                before_remaining: std::mem::replace(&mut remaining, next_remaining),
                ranked,
                chosen: 0,
            });
            quality = next_quality;
        };

        let path_quality = steps.last().map_or(initial.quality, |s| s.quality_after);
        let improves = match &best {
            None => true,
            Some((_, s, _)) => path_quality > s.last().map_or(initial.quality, |s| s.quality_after),
        };
        if improves {
            best = Some((state.clone(), steps.clone(), termination));
        }

        // Undo steps until a stage offers an improving alternative.
        let mut resumed = false;
        while rollbacks < max_rollbacks {
            let Some(mut frame) = frames.pop() else { break };
            steps.pop();
            rollbacks += 1;
            let alt = (frame.chosen + 1..frame.ranked.len())
                .find(|&i| frame.ranked[i].assessment.quality > frame.before_quality + eps);
            match alt {
                Some(i) => {
                    frame.chosen = i;
                    let c = &frame.ranked[i];
                    accept(&mut steps, frame.before_quality, c);
                    state = c.state.clone();
                    quality = c.assessment.quality;
                    remaining = frame.before_remaining.clone();
                    remaining.remove(&c.spec.task);
                    frames.push(frame);
                    resumed = true;
                    break;
                }
                None => {
                    state = frame.before_state;
                    quality = frame.before_quality;
                    remaining = frame.before_remaining;
                }
            }
        }
        if !resumed {
            break;
        }
    }

    let (state, steps, termination) = best.expect("at least one path");
    Ok(SearchOutcome {
        state,
        initial,
        steps,
        termination,
        eval_count: evals,
        rollbacks,
    })
}

/// Applies the primary tool of each task in the given order, without any
/// acceptance test. Every application is recorded as a step.
pub fn fixed_order_search<E: RestorationEnv>(
    env: &E,
    start: &E::State,
    order: &[TaskLabel],
    registry: &ToolRegistry,
) -> Result<SearchOutcome<E::State>> {
    let mut seen = BTreeSet::new();
    if let Some(dup) = order.iter().find(|t| !seen.insert(**t)) {
        return Err(Error::ParamOutOfRange(format!(
            "task {dup} repeated in order"
        )));
    }
    let initial = env.assess(start)?;
    let mut state = start.clone();
    let mut quality = initial.quality;
    let mut steps = Vec::with_capacity(order.len());
    for &task in order {
        let spec = registry.primary(task).clone();
        let next = env.apply(&state, &spec)?;
        let assessment = env.assess(&next)?;
        accept(
            &mut steps,
            quality,
            &Candidate {
                spec,
                state: (),
                assessment,
            },
        );
        state = next;
        quality = assessment.quality;
    }
    Ok(SearchOutcome {
        state,
        initial,
        eval_count: order.len() as u64,
        steps,
        termination: Termination::AllTasksDone,
        rollbacks: 0,
    })
}

/// Best order found by trying every permutation.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ExhaustiveResult {
    /// The winning permutation.
    pub order: Vec<TaskLabel>,
    /// How many leading tasks of `order` produce `quality`; the best point of
    /// a permutation may lie before its end.
    pub applied: usize,
    pub quality: f64,
    pub orders_evaluated: usize,
    pub eval_count: u64,
}

pub const EXHAUSTIVE_MAX_TASKS: usize = 4;

/// Runs every permutation of `tasks` with the primary tool of each task and
/// scores every prefix. Permutations are visited in lexicographic order and a
/// later result must be strictly better to win, so ties go to the
/// lexicographically first order and the shortest prefix.
///
/// Prefixes are included so that the result bounds the greedy search from
/// above even when greedy stops before all tasks are applied.
pub fn exhaustive_search<E: RestorationEnv>(
    env: &E,
    start: &E::State,
    tasks: &BTreeSet<TaskLabel>,
    registry: &ToolRegistry,
) -> Result<ExhaustiveResult> {
    if tasks.len() > EXHAUSTIVE_MAX_TASKS {
        return Err(Error::TooManyTasks(tasks.len()));
    }
    let initial = env.assess(start)?.quality;
    let mut perm: Vec<TaskLabel> = tasks.iter().copied().collect();
    let mut best = ExhaustiveResult {
        order: perm.clone(),
        applied: 0,
        quality: initial,
        orders_evaluated: 0,
        eval_count: 0,
    };
    loop {
        let mut state = start.clone();
        for (i, &task) in perm.iter().enumerate() {
            state = env.apply(&state, registry.primary(task))?;
            best.eval_count += 1;
            let q = env.assess(&state)?.quality;
            if q > best.quality {
                best.quality = q;
                best.order = perm.clone();
                best.applied = i + 1;
            }
        }
        best.orders_evaluated += 1;
        if !next_permutation(&mut perm) {
            break;
        }
    }
    Ok(best)
}

/// Advances to the next lexicographic permutation; false after the last one.
fn next_permutation<T: Ord>(v: &mut [T]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let Some(i) = (0..v.len() - 1).rev().find(|&i| v[i] < v[i + 1]) else {
        return false;
    };
    let j = (i + 1..v.len())
        .rev()
        .find(|&j| v[j] > v[i])
        .expect("pivot has a successor");
    v.swap(i, j);
    v[i + 1..].reverse();
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permutations_in_lexicographic_order() {
        let mut v = vec![1, 2, 3];
        let mut seen = vec![v.clone()];
        while next_permutation(&mut v) {
            seen.push(v.clone());
        }
        assert_eq!(
            seen,
            vec![
                vec![1, 2, 3],
                vec![1, 3, 2],
                vec![2, 1, 3],
                vec![2, 3, 1],
                vec![3, 1, 2],
                vec![3, 2, 1]
            ]
        );
        let mut one = vec![7];
        assert!(!next_permutation(&mut one));
    }
}
