//! The online invention loop: explore with the current model, track bests
//! lexicographically on (solve rate, -failed plans), propose new predicates
//! when progress stalls, re-select the predicate set, and relearn
//! operators until an iteration completes with zero failed plans.

use crate::abstraction::abstract_state;
use crate::domain::{Environment, Task};
use crate::dsl::{PredicateDecl, PredicateSet, PredicateTable};
use crate::envs::{DomainSpec, GeneratedTask};
use crate::learner::{
    abstract_dataset, learn_operators, select_predicates, PrecondMode, SatisficingPlan,
    SelectConfig, TransitionDataset,
};
use crate::model::Operator;
use crate::perceive::{PerceptionContext, Perceiver};
use crate::planner::{
    execute_hierarchically, Heuristic, OutcomeKind, PlanStream, PlannerConfig,
};
use crate::proposer::{
    canonical_keys, external_propose, propose, EndpointConfig, ProposalRequest, StrategySchedule,
};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::Instant;

#[derive(Debug, Clone)]
pub enum ProposerMode {
    Scripted,
    External(EndpointConfig),
}

#[derive(Debug, Clone)]
pub struct OnlineConfig {
    pub n_max_ite: usize,
    pub n_abstract: usize,
    pub node_budget: usize,
    pub alpha: f64,
    pub alpha_sel: f64,
    pub k_switch: usize,
    pub heuristic: Heuristic,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        OnlineConfig {
            n_max_ite: 15,
            n_abstract: 8,
            node_budget: 100_000,
            alpha: -0.01,
            alpha_sel: -0.01,
            k_switch: 1,
            heuristic: Heuristic::GoalCount,
        }
    }
}

/// One row of the learning trace.
#[derive(Debug, Clone, serde::Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub solve_rate: f64,
    pub failed_plans: usize,
    pub psi_size: usize,
    pub candidate_count: usize,
    pub operator_count: usize,
    pub proposed: bool,
    pub nodes_expanded: usize,
    pub wall_time_ms: u128,
}

#[derive(Debug, Default)]
pub struct ExploreResult {
    pub data: TransitionDataset,
    pub solve_rate: f64,
    pub failed_plans: usize,
    pub satisficing: Vec<(usize, SatisficingPlan)>,
    pub nodes_expanded: usize,
}

/// Plans and executes on every training task with the given model,
/// collecting positive segments, negative tuples, and satisficing plans.
pub fn explore(
    psi: &PredicateSet,
    ops: &[Arc<Operator>],
    env: &mut Environment,
    tasks: &[Task],
    perceiver: &Perceiver,
    domain: &DomainSpec,
    cfg: &OnlineConfig,
) -> ExploreResult {
    let mut result = ExploreResult::default();
    let mut solved = 0usize;
    for (task_index, task) in tasks.iter().enumerate() {
        let objects = task.objects_vec();
        let init =
            abstract_state(&task.init, psi, perceiver, &PerceptionContext::empty(), &domain.types);
        let mut stream = PlanStream::new(
            psi,
            ops,
            &objects,
            init,
            &task.goal,
            PlannerConfig {
                node_budget: cfg.node_budget,
                max_plans: cfg.n_abstract,
                heuristic: cfg.heuristic,
            },
        );
        while let Some(plan) = stream.next_plan() {
            let outcome =
                execute_hierarchically(&plan, env, task, psi, perceiver, &domain.types);
            let satisficing = outcome.kind == OutcomeKind::Satisficing;
            if satisficing {
                let mut states = vec![task.init.clone()];
                let mut ctxs = vec![PerceptionContext::empty()];
                let mut skills = Vec::new();
                for p in &outcome.positives {
                    states.push(p.post.clone());
                    ctxs.push(p.post_ctx.clone());
                    skills.push(p.skill.clone());
                }
                result.satisficing.push((
                    task_index,
                    SatisficingPlan {
                        goal: task.goal.clone(),
                        states,
                        ctxs,
                        skills,
                        objects: objects.clone(),
                    },
                ));
            }
            result.data.positives.extend(outcome.positives);
            result.data.negatives.extend(outcome.negatives);
            if satisficing {
                solved += 1;
                break;
            }
            result.failed_plans += 1;
        }
        result.nodes_expanded += stream.stats.nodes_expanded;
    }
    result.solve_rate = if tasks.is_empty() {
        0.0
    } else {
        solved as f64 / tasks.len() as f64
    };
    result
}

#[derive(Debug)]
pub struct RunResult {
    pub psi_best: PredicateSet,
    pub ops_best: Vec<Arc<Operator>>,
    pub solve_rate_best: f64,
    pub failed_plans_best: usize,
    pub dataset: TransitionDataset,
    pub trace: Vec<IterationRecord>,
    pub candidate_count: usize,
}

/// Runs the full online invention loop and returns the best model found,
/// bound to the iteration that earned its score.
pub fn run_online(
    env: &mut Environment,
    tasks: &[Task],
    psi0: PredicateSet,
    ops0: Vec<Arc<Operator>>,
    d0: TransitionDataset,
    domain: &DomainSpec,
    perceiver: &Perceiver,
    cfg: &OnlineConfig,
    mode: &ProposerMode,
) -> RunResult {
    let mut rho_best = f64::NEG_INFINITY;
    let mut nu_best = usize::MAX;
    let mut psi_best = psi0.clone();
    let mut ops_best = ops0.clone();
    let mut psi_prev = psi0.clone();
    let mut ops_prev = ops0;
    let mut dataset = d0;
    let mut candidate_decls: Vec<PredicateDecl> = Vec::new();
    let mut candidate_table: PredicateTable = psi0.table.clone();
    let mut rho_prev = f64::NEG_INFINITY;
    let mut nu_prev = usize::MAX;
    let mut schedule = StrategySchedule::default();
    let mut trace = Vec::new();
    let mut plan_store: BTreeMap<usize, Vec<SatisficingPlan>> = BTreeMap::new();
    let mut plan_keys: BTreeSet<(usize, Vec<crate::domain::GroundSkill>)> = BTreeSet::new();

    let select_cfg = SelectConfig {
        alpha_pre: cfg.alpha,
        alpha_sel: cfg.alpha_sel,
        k_switch: cfg.k_switch,
    };

    for iteration in 1..=cfg.n_max_ite {
        let started = Instant::now();
        let explored = explore(&psi_prev, &ops_prev, env, tasks, perceiver, domain, cfg);
        let rho_i = explored.solve_rate;
        let nu_i = explored.failed_plans;

        if rho_i > rho_best || (rho_i == rho_best && nu_i < nu_best) {
            psi_best = psi_prev.clone();
            ops_best = ops_prev.clone();
            rho_best = rho_i;
            nu_best = nu_i;
        }
        for (task_index, plan) in &explored.satisficing {
            if plan_keys.insert((*task_index, plan.skills.clone())) {
                plan_store.entry(*task_index).or_default().push(plan.clone());
            }
        }

        if nu_i == 0 {
            trace.push(IterationRecord {
                iteration,
                solve_rate: rho_i,
                failed_plans: nu_i,
                psi_size: psi_prev.len(),
                candidate_count: candidate_table.len(),
                operator_count: ops_prev.len(),
                proposed: false,
                nodes_expanded: explored.nodes_expanded,
                wall_time_ms: started.elapsed().as_millis(),
            });
            break;
        }

        dataset.extend(explored.data);

        let stalled = rho_i <= rho_prev || (rho_i == rho_prev && nu_i > nu_prev);
        if stalled {
            let known: BTreeSet<String> = candidate_table.names().cloned().collect();
            let known_keys = canonical_keys(candidate_table.decls());
            let mut fresh: Vec<PredicateDecl> = Vec::new();
            for strategy in schedule.next_round() {
                let req = ProposalRequest {
                    strategy,
                    iteration,
                    dataset: &dataset,
                    known: &known,
                    known_keys: &known_keys,
                };
                let batch = match mode {
                    ProposerMode::Scripted => propose(&req, &domain.pool),
                    ProposerMode::External(endpoint) => {
                        let sources: Vec<PredicateDecl> =
                            candidate_table.decls().cloned().collect();
                        external_propose(&req, &sources, endpoint)
                    }
                };
                for decl in batch {
                    if !fresh.iter().any(|d: &PredicateDecl| d.name == decl.name) {
                        fresh.push(decl);
                    }
                }
            }
            // Keep only proposals that typecheck against the growing table.
            for decl in fresh {
                let mut trial = candidate_decls.clone();
                trial.push(decl.clone());
                match psi0
                    .table
                    .merged_with(&trial, &domain.types, &domain.skills)
                {
                    Ok(table) => {
                        candidate_decls = trial;
                        candidate_table = table;
                    }
                    Err(e) => log::warn!("dropping proposal '{}': {e}", decl.name),
                }
            }
        }

        let sat_plans: Vec<SatisficingPlan> =
            plan_store.values().flatten().cloned().collect();
        let psi_i = select_predicates(
            &candidate_table,
            &dataset,
            &domain.goal_predicates,
            &select_cfg,
            &sat_plans,
            perceiver,
            &domain.types,
        );
        let abstract_d = abstract_dataset(&dataset, &psi_i, perceiver, &domain.types);
        let ops_i = learn_operators(
            &abstract_d,
            &psi_i,
            PrecondMode::Optimistic { alpha: cfg.alpha },
        )
        .unwrap_or_default()
        .into_iter()
        .map(Arc::new)
        .collect::<Vec<_>>();

        trace.push(IterationRecord {
            iteration,
            solve_rate: rho_i,
            failed_plans: nu_i,
            psi_size: psi_prev.len(),
            candidate_count: candidate_table.len(),
            operator_count: ops_prev.len(),
            proposed: stalled,
            nodes_expanded: explored.nodes_expanded,
            wall_time_ms: started.elapsed().as_millis(),
        });

        psi_prev = psi_i;
        ops_prev = ops_i;
        rho_prev = rho_i;
        nu_prev = nu_i;
    }

    RunResult {
        psi_best,
        ops_best,
        solve_rate_best: rho_best,
        failed_plans_best: nu_best,
        dataset,
        trace,
        candidate_count: candidate_table.len(),
    }
}

/// One evaluation task's outcome.
#[derive(Debug, Clone, serde::Serialize)]
pub struct TaskEval {
    pub solved: bool,
    pub plans_executed: usize,
    pub no_plan_found: bool,
    pub unreachable: bool,
    pub nodes_expanded: usize,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct EvalResult {
    pub tasks: usize,
    pub solved: usize,
    pub solve_rate: f64,
    /// Mean executed plans per solved (reachable) task; 1.0 is the floor.
    pub plans_used_mean: f64,
    /// plans_used_mean as a fraction of the plan budget.
    pub budget_fraction: f64,
    pub nodes_expanded_mean: f64,
    pub per_task: Vec<TaskEval>,
}

/// Frozen-model evaluation. A reachable task counts as solved when some
/// executed plan satisfices; an unreachable task counts as solved when the
/// planner determines the goal cannot be reached (the stream is empty).
pub fn evaluate(
    psi: &PredicateSet,
    ops: &[Arc<Operator>],
    env: &mut Environment,
    tasks: &[GeneratedTask],
    perceiver: &Perceiver,
    domain: &DomainSpec,
    cfg: &OnlineConfig,
) -> EvalResult {
    let mut per_task = Vec::new();
    for gt in tasks {
        let task = &gt.task;
        let objects = task.objects_vec();
        let init =
            abstract_state(&task.init, psi, perceiver, &PerceptionContext::empty(), &domain.types);
        let mut stream = PlanStream::new(
            psi,
            ops,
            &objects,
            init,
            &task.goal,
            PlannerConfig {
                node_budget: cfg.node_budget,
                max_plans: cfg.n_abstract,
                heuristic: cfg.heuristic,
            },
        );
        let mut plans_executed = 0usize;
        let mut satisficed = false;
        while let Some(plan) = stream.next_plan() {
            plans_executed += 1;
            let outcome =
                execute_hierarchically(&plan, env, task, psi, perceiver, &domain.types);
            if outcome.kind == OutcomeKind::Satisficing {
                satisficed = true;
                break;
            }
        }
        let no_plan_found = plans_executed == 0;
        let solved = if gt.unreachable {
            no_plan_found
        } else {
            satisficed
        };
        per_task.push(TaskEval {
            solved,
            plans_executed,
            no_plan_found,
            unreachable: gt.unreachable,
            nodes_expanded: stream.stats.nodes_expanded,
        });
    }
    let solved = per_task.iter().filter(|t| t.solved).count();
    let solved_reachable: Vec<&TaskEval> = per_task
        .iter()
        .filter(|t| t.solved && !t.unreachable)
        .collect();
    let plans_used_mean = if solved_reachable.is_empty() {
        0.0
    } else {
        solved_reachable
            .iter()
            .map(|t| t.plans_executed as f64)
            .sum::<f64>()
            / solved_reachable.len() as f64
    };
    EvalResult {
        tasks: tasks.len(),
        solved,
        solve_rate: if tasks.is_empty() {
            0.0
        } else {
            solved as f64 / tasks.len() as f64
        },
        plans_used_mean,
        budget_fraction: plans_used_mean / cfg.n_abstract.max(1) as f64,
        nodes_expanded_mean: if tasks.is_empty() {
            0.0
        } else {
            per_task.iter().map(|t| t.nodes_expanded as f64).sum::<f64>() / tasks.len() as f64
        },
        per_task,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::make_domain;

    #[test]
    fn oracle_model_explores_cover_with_zero_failures() {
        let (domain, mut env, generator) = make_domain("cover", 0).unwrap();
        let perceiver = domain.perceiver(0.0, 0);
        let tasks: Vec<Task> = generator.train_tasks(0).into_iter().map(|t| t.task).collect();
        let cfg = OnlineConfig {
            n_abstract: domain.n_abstract,
            ..Default::default()
        };
        let psi = domain.oracle_psi();
        let explored = explore(
            &psi,
            &domain.oracle_operators,
            &mut env,
            &tasks,
            &perceiver,
            &domain,
            &cfg,
        );
        assert_eq!(explored.solve_rate, 1.0);
        assert_eq!(explored.failed_plans, 0);
        assert_eq!(explored.satisficing.len(), tasks.len());
    }

    #[test]
    fn initial_model_explores_cover_with_failures_but_data() {
        let (domain, mut env, generator) = make_domain("cover", 0).unwrap();
        let perceiver = domain.perceiver(0.0, 0);
        let tasks: Vec<Task> = generator.train_tasks(0).into_iter().map(|t| t.task).collect();
        let cfg = OnlineConfig {
            n_abstract: domain.n_abstract,
            ..Default::default()
        };
        let psi = domain.initial_psi();
        let explored = explore(
            &psi,
            &domain.initial_operators,
            &mut env,
            &tasks,
            &perceiver,
            &domain,
            &cfg,
        );
        assert!(explored.failed_plans > 0, "underspecified model must fail");
        assert!(!explored.data.negatives.is_empty());
        assert!(!explored.data.positives.is_empty());
    }

    #[test]
    fn oracle_as_initial_model_breaks_immediately_leaving_data_untouched() {
        let (domain, mut env, generator) = make_domain("cover", 0).unwrap();
        let perceiver = domain.perceiver(0.0, 0);
        let tasks: Vec<Task> = generator.train_tasks(0).into_iter().map(|t| t.task).collect();
        let cfg = OnlineConfig {
            n_abstract: domain.n_abstract,
            ..Default::default()
        };
        let result = run_online(
            &mut env,
            &tasks,
            domain.oracle_psi(),
            domain.oracle_operators.clone(),
            TransitionDataset::default(),
            &domain,
            &perceiver,
            &cfg,
            &ProposerMode::Scripted,
        );
        assert_eq!(result.trace.len(), 1);
        assert_eq!(result.trace[0].failed_plans, 0);
        assert!(result.dataset.is_empty(), "break happens before the data merge");
        assert_eq!(result.failed_plans_best, 0);
    }
}
