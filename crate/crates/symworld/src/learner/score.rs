//! Predicate-set scoring and greedy selection.
//!
//! The base score is classification accuracy of the operators learned under
//! Ψ, plus a simplicity penalty. Once enough satisficing plans are
//! recorded, the score additionally requires those plans to stay valid
//! under the Ψ-model (the plan-consistency term).

use super::{
    abstract_dataset, learn_operators, AbstractDataset, AbstractNegative, AbstractPositive,
    PrecondMode, TransitionDataset,
};
use crate::abstraction::{abstract_state, AbstractState, GroundAtom};
use crate::domain::{FeatureState, GroundSkill, ObjectRef};
use crate::dsl::{PredicateSet, PredicateTable, TypeTable};
use crate::model::Operator;
use crate::perceive::{Oracle, PerceptionContext};
use std::collections::BTreeSet;

#[derive(Debug, Clone, Copy)]
pub struct SelectConfig {
    /// Precondition complexity penalty (negative).
    pub alpha_pre: f64,
    /// Predicate-set complexity penalty (negative).
    pub alpha_sel: f64,
    /// Number of recorded satisficing plans that triggers the
    /// plan-consistency term.
    pub k_switch: usize,
}

impl Default for SelectConfig {
    fn default() -> Self {
        SelectConfig {
            alpha_pre: -0.01,
            alpha_sel: -0.01,
            k_switch: 1,
        }
    }
}

/// A satisficing plan recorded during exploration: the low-level state
/// trajectory, contexts, executed skills, and the goal it achieved.
#[derive(Debug, Clone)]
pub struct SatisficingPlan {
    pub goal: BTreeSet<GroundAtom>,
    pub states: Vec<FeatureState>,
    pub ctxs: Vec<PerceptionContext>,
    pub skills: Vec<GroundSkill>,
    pub objects: Vec<ObjectRef>,
}

/// Enumerates operator groundings whose skill grounding equals `skill`,
/// calling `f` with each full binding until it returns true.
fn any_binding(
    op: &Operator,
    skill: &GroundSkill,
    objects: &[ObjectRef],
    f: &mut dyn FnMut(&[ObjectRef]) -> bool,
) -> bool {
    if op.skill_name != skill.name || op.skill_args.len() != skill.args.len() {
        return false;
    }
    let n = op.params.len();
    let mut binding: Vec<Option<ObjectRef>> = vec![None; n];
    for (pos, &p) in op.skill_args.iter().enumerate() {
        let obj = &skill.args[pos];
        if &*obj.type_name != op.params[p].ty {
            return false;
        }
        match &binding[p] {
            Some(existing) if existing != obj => return false,
            _ => binding[p] = Some(obj.clone()),
        }
    }
    fn rec(
        op: &Operator,
        binding: &mut Vec<Option<ObjectRef>>,
        objects: &[ObjectRef],
        f: &mut dyn FnMut(&[ObjectRef]) -> bool,
    ) -> bool {
        match binding.iter().position(Option::is_none) {
            None => {
                let full: Vec<ObjectRef> = binding.iter().cloned().map(Option::unwrap).collect();
                f(&full)
            }
            Some(i) => {
                for obj in objects {
                    if &*obj.type_name != op.params[i].ty {
                        continue;
                    }
                    let clash = !op.allow_shared_binding
                        && (0..binding.len()).any(|j| {
                            op.params[j].ty == op.params[i].ty
                                && binding[j].as_ref() == Some(obj)
                        });
                    if clash {
                        continue;
                    }
                    binding[i] = Some(obj.clone());
                    if rec(op, binding, objects, f) {
                        return true;
                    }
                    binding[i] = None;
                }
                false
            }
        }
    }
    rec(op, &mut binding, objects, f)
}

fn ground_set(op: &Operator, atoms: &BTreeSet<crate::model::LiftedAtom>, binding: &[ObjectRef]) -> BTreeSet<GroundAtom> {
    let _ = op;
    atoms.iter().map(|a| a.ground(binding)).collect()
}

/// A positive transition is modeled correctly iff some skill-matching
/// grounding's precondition holds with exactly the observed effects, and
/// every grounding whose precondition holds predicts those effects.
fn positive_correct(ops: &[Operator], d: &AbstractPositive, psi: &PredicateSet) -> bool {
    let (add, del) = AbstractDataset::delta(d, psi);
    let mut exists_correct = false;
    let mut all_correct = true;
    for op in ops {
        any_binding(op, &d.skill, &d.objects, &mut |binding| {
            let pre_holds = op
                .pre
                .iter()
                .all(|a| d.pre.atoms.contains(&a.ground(binding)));
            if pre_holds {
                let effects_match = ground_set(op, &op.add, binding) == add
                    && ground_set(op, &op.del, binding) == del;
                if effects_match {
                    exists_correct = true;
                } else {
                    all_correct = false;
                }
            }
            false // visit every binding
        });
    }
    exists_correct && all_correct
}

/// A negative tuple is modeled correctly iff no skill-matching grounding's
/// precondition holds in its state.
fn negative_correct(ops: &[Operator], d: &AbstractNegative) -> bool {
    for op in ops {
        let matched = any_binding(op, &d.skill, &d.objects, &mut |binding| {
            op.pre
                .iter()
                .all(|a| d.pre.atoms.contains(&a.ground(binding)))
        });
        if matched {
            return false;
        }
    }
    true
}

/// Classification accuracy of a learned model on its abstract dataset.
pub fn classification_accuracy(ops: &[Operator], d: &AbstractDataset, psi: &PredicateSet) -> f64 {
    if d.is_empty() {
        return 1.0;
    }
    let mut correct = 0usize;
    for p in &d.positives {
        if positive_correct(ops, p, psi) {
            correct += 1;
        }
    }
    for n in &d.negatives {
        if negative_correct(ops, n) {
            correct += 1;
        }
    }
    correct as f64 / d.len() as f64
}

/// Scores a predicate set: learns operators from the dataset under Ψ, then
/// returns classification accuracy plus the simplicity penalty.
pub fn score_predicate_set(
    psi: &PredicateSet,
    d: &TransitionDataset,
    alpha_sel: f64,
    alpha_pre: f64,
    oracle: &dyn Oracle,
    types: &TypeTable,
) -> f64 {
    let abstract_d = abstract_dataset(d, psi, oracle, types);
    let ops = learn_operators(&abstract_d, psi, PrecondMode::Optimistic { alpha: alpha_pre })
        .unwrap_or_default();
    classification_accuracy(&ops, &abstract_d, psi) + alpha_sel * psi.exposed.len() as f64
}

/// Whether a recorded satisficing plan stays valid under a model: each
/// recorded step has a skill-matching grounding whose precondition holds in
/// the re-abstracted state, and the final state entails the goal.
pub fn plan_valid_under(
    plan: &SatisficingPlan,
    psi: &PredicateSet,
    ops: &[Operator],
    oracle: &dyn Oracle,
    types: &TypeTable,
) -> bool {
    let states: Vec<AbstractState> = plan
        .states
        .iter()
        .zip(&plan.ctxs)
        .map(|(x, ctx)| abstract_state(x, psi, oracle, ctx, types))
        .collect();
    plan_valid_projected(&plan.skills, &plan.goal, &states, &plan.objects, ops)
}

fn plan_valid_projected(
    skills: &[GroundSkill],
    goal: &BTreeSet<GroundAtom>,
    states: &[AbstractState],
    objects: &[ObjectRef],
    ops: &[Operator],
) -> bool {
    if states.len() != skills.len() + 1 {
        return false;
    }
    for (i, skill) in skills.iter().enumerate() {
        let s = &states[i];
        let applicable = ops.iter().any(|op| {
            any_binding(op, skill, objects, &mut |binding| {
                op.pre.iter().all(|a| s.atoms.contains(&a.ground(binding)))
            })
        });
        if !applicable {
            return false;
        }
    }
    states.last().map(|s| s.satisfies(goal)).unwrap_or(false)
}

/// Everything abstracted once under the full candidate table; candidate
/// subsets then project by predicate name instead of re-running the
/// perceiver.
struct StateIndex {
    positives: Vec<(BTreeSet<GroundAtom>, BTreeSet<GroundAtom>)>,
    negatives: Vec<BTreeSet<GroundAtom>>,
    plan_states: Vec<Vec<BTreeSet<GroundAtom>>>,
}

fn build_index(
    d: &TransitionDataset,
    plans: &[SatisficingPlan],
    table: &PredicateTable,
    oracle: &dyn Oracle,
    types: &TypeTable,
) -> StateIndex {
    let full = PredicateSet::full(table.clone());
    let positives = d
        .positives
        .iter()
        .map(|s| {
            (
                abstract_state(&s.pre, &full, oracle, &s.pre_ctx, types).atoms,
                abstract_state(&s.post, &full, oracle, &s.post_ctx, types).atoms,
            )
        })
        .collect();
    let negatives = d
        .negatives
        .iter()
        .map(|s| abstract_state(&s.pre, &full, oracle, &s.pre_ctx, types).atoms)
        .collect();
    let plan_states = plans
        .iter()
        .map(|p| {
            p.states
                .iter()
                .zip(&p.ctxs)
                .map(|(x, ctx)| abstract_state(x, &full, oracle, ctx, types).atoms)
                .collect()
        })
        .collect();
    StateIndex {
        positives,
        negatives,
        plan_states,
    }
}

fn project(atoms: &BTreeSet<GroundAtom>, psi: &PredicateSet) -> AbstractState {
    AbstractState::closed(
        atoms
            .iter()
            .filter(|a| psi.contains(&a.predicate))
            .cloned()
            .collect(),
    )
}

fn project_dataset(
    d: &TransitionDataset,
    index: &StateIndex,
    psi: &PredicateSet,
) -> AbstractDataset {
    let positives = d
        .positives
        .iter()
        .zip(&index.positives)
        .map(|(s, (pre, post))| AbstractPositive {
            pre: project(pre, psi),
            skill: s.skill.clone(),
            post: project(post, psi),
            objects: s.pre.objects().cloned().collect(),
        })
        .collect();
    let negatives = d
        .negatives
        .iter()
        .zip(&index.negatives)
        .map(|(s, pre)| AbstractNegative {
            pre: project(pre, psi),
            skill: s.skill.clone(),
            objects: s.pre.objects().cloned().collect(),
        })
        .collect();
    AbstractDataset {
        positives,
        negatives,
    }
}

fn score_projected(
    names: &BTreeSet<String>,
    table: &PredicateTable,
    d: &TransitionDataset,
    index: &StateIndex,
    plans: &[SatisficingPlan],
    cfg: &SelectConfig,
) -> f64 {
    let psi = PredicateSet::closed_over(table.clone(), names);
    let abstract_d = project_dataset(d, index, &psi);
    let ops = learn_operators(
        &abstract_d,
        &psi,
        PrecondMode::Optimistic {
            alpha: cfg.alpha_pre,
        },
    )
    .unwrap_or_default();
    let mut score = classification_accuracy(&ops, &abstract_d, &psi)
        + cfg.alpha_sel * psi.exposed.len() as f64;
    if plans.len() >= cfg.k_switch && !plans.is_empty() {
        let valid = plans
            .iter()
            .zip(&index.plan_states)
            .filter(|(plan, states)| {
                let projected: Vec<AbstractState> =
                    states.iter().map(|s| project(s, &psi)).collect();
                plan_valid_projected(&plan.skills, &plan.goal, &projected, &plan.objects, &ops)
            })
            .count();
        score += valid as f64 / plans.len() as f64;
    }
    score
}

/// Greedy best-first selection: starting from the goal predicates,
/// repeatedly add the candidate (together with its dependency closure)
/// that maximizes the score; stop when no addition strictly improves it.
pub fn select_predicates(
    table: &PredicateTable,
    d: &TransitionDataset,
    goal_predicates: &BTreeSet<String>,
    cfg: &SelectConfig,
    plans: &[SatisficingPlan],
    oracle: &dyn Oracle,
    types: &TypeTable,
) -> PredicateSet {
    let index = build_index(d, plans, table, oracle, types);
    let mut names: BTreeSet<String> = goal_predicates
        .iter()
        .filter(|n| table.contains(n))
        .cloned()
        .collect();
    let mut best = score_projected(&names, table, d, &index, plans, cfg);
    loop {
        let current_closure = table.dependency_closure(&names);
        let mut step: Option<(f64, String)> = None;
        for candidate in table.names() {
            if current_closure.contains(candidate) {
                continue;
            }
            let mut trial = names.clone();
            trial.insert(candidate.clone());
            let s = score_projected(&trial, table, d, &index, plans, cfg);
            if s > best + 1e-12 && step.as_ref().map(|(bs, _)| s > bs + 1e-12).unwrap_or(true) {
                step = Some((s, candidate.clone()));
            }
        }
        match step {
            Some((s, candidate)) => {
                names.insert(candidate);
                best = s;
            }
            None => break,
        }
    }
    PredicateSet::closed_over(table.clone(), &names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Fact, ObjectType};
    use crate::dsl::{parse, typecheck};
    use crate::learner::{NegativeSample, PositiveSample};
    use crate::perceive::{Perceiver, PerceiverConfig};
    use std::collections::BTreeMap;

    fn types() -> TypeTable {
        let mut t = TypeTable::new();
        t.insert(
            "robot".into(),
            ObjectType::new("robot", vec![("fingers", (0.0, 1.0))]),
        );
        t.insert("block".into(), ObjectType::new("block", vec![]));
        t.insert("target".into(), ObjectType::new("target", vec![]));
        t
    }

    fn perceiver() -> Perceiver {
        let mut cfg = PerceiverConfig::default();
        cfg.registry
            .insert("{0} is holding {1}".into(), "held".into());
        cfg.registry.insert("{0} covers {1}".into(), "covers".into());
        cfg.registry.insert("{0} is red".into(), "red".into());
        Perceiver::new(cfg)
    }

    const COVER_PREDS: &str = "\
        (primitive Covers (?b block ?t target) (assert \"{0} covers {1}\" ?b ?t))\n\
        (primitive GripperOpen (?r robot) (> (feat ?r fingers) 0.5))\n\
        (primitive Holding (?r robot ?b block) (assert \"{0} is holding {1}\" ?r ?b))\n\
        (primitive IsRed (?b block) (assert \"{0} is red\" ?b))";

    fn table() -> PredicateTable {
        typecheck(&parse(COVER_PREDS).unwrap(), &types(), &BTreeMap::new()).unwrap()
    }

    fn robot() -> ObjectRef {
        ObjectRef::new("robot", "robot", 0)
    }

    fn block(id: u32) -> ObjectRef {
        ObjectRef::new("block", "block", id)
    }

    fn target() -> ObjectRef {
        ObjectRef::new("target", "target", 9)
    }

    /// A tiny cover-style dataset: picks succeed with the gripper open and
    /// fail otherwise; places succeed while holding and fail otherwise.
    fn dataset() -> TransitionDataset {
        let mk_state = |fingers: f64, held: Option<u32>, covered: Option<u32>| {
            let mut s = FeatureState::new();
            s.features.insert(robot(), vec![fingers]);
            s.features.insert(block(1), vec![]);
            s.features.insert(block(2), vec![]);
            s.features.insert(target(), vec![]);
            if let Some(b) = held {
                s.scene.insert(Fact::new("held", vec![robot(), block(b)]));
            }
            if let Some(b) = covered {
                s.scene
                    .insert(Fact::new("covers", vec![block(b), target()]));
            }
            s
        };
        let pick = |b: u32| GroundSkill {
            name: "Pick".into(),
            args: vec![block(b)],
        };
        let place = |b: u32| GroundSkill {
            name: "Place".into(),
            args: vec![block(b), target()],
        };
        let ctx = PerceptionContext::empty();
        TransitionDataset {
            positives: vec![
                PositiveSample {
                    pre: mk_state(1.0, None, None),
                    pre_ctx: ctx.clone(),
                    skill: pick(1),
                    post: mk_state(0.0, Some(1), None),
                    post_ctx: ctx.clone(),
                },
                PositiveSample {
                    pre: mk_state(0.0, Some(1), None),
                    pre_ctx: ctx.clone(),
                    skill: place(1),
                    post: mk_state(1.0, None, Some(1)),
                    post_ctx: ctx.clone(),
                },
                PositiveSample {
                    pre: mk_state(1.0, None, Some(1)),
                    pre_ctx: ctx.clone(),
                    skill: pick(2),
                    post: mk_state(0.0, Some(2), Some(1)),
                    post_ctx: ctx.clone(),
                },
            ],
            negatives: vec![
                NegativeSample {
                    pre: mk_state(0.0, Some(1), None),
                    pre_ctx: ctx.clone(),
                    skill: pick(2),
                },
                NegativeSample {
                    pre: mk_state(1.0, None, None),
                    pre_ctx: ctx.clone(),
                    skill: place(2),
                },
            ],
        }
    }

    fn psi_of(names: &[&str]) -> PredicateSet {
        let set: BTreeSet<String> = names.iter().map(|s| s.to_string()).collect();
        PredicateSet::closed_over(table(), &set)
    }

    #[test]
    fn empty_abstraction_cannot_separate() {
        let d = dataset();
        let psi = psi_of(&[]);
        let score = score_predicate_set(&psi, &d, -0.01, -0.01, &perceiver(), &types());
        assert!(score < 1.0, "score {score}");
    }

    #[test]
    fn full_cover_predicates_classify_perfectly() {
        let d = dataset();
        let psi = psi_of(&["Covers", "GripperOpen", "Holding"]);
        let score = score_predicate_set(&psi, &d, -0.01, -0.01, &perceiver(), &types());
        assert!((score - (1.0 - 0.03)).abs() < 1e-9, "score {score}");
    }

    #[test]
    fn distractor_lowers_score_via_penalty() {
        let d = dataset();
        let with = score_predicate_set(
            &psi_of(&["Covers", "GripperOpen", "Holding", "IsRed"]),
            &d,
            -0.01,
            -0.01,
            &perceiver(),
            &types(),
        );
        let without = score_predicate_set(
            &psi_of(&["Covers", "GripperOpen", "Holding"]),
            &d,
            -0.01,
            -0.01,
            &perceiver(),
            &types(),
        );
        assert!(without > with);
    }

    #[test]
    fn greedy_selection_finds_the_useful_predicates() {
        let d = dataset();
        let goal: BTreeSet<String> = ["Covers".to_string()].into();
        let selected = select_predicates(
            &table(),
            &d,
            &goal,
            &SelectConfig::default(),
            &[],
            &perceiver(),
            &types(),
        );
        assert!(selected.contains("Covers"));
        assert!(selected.contains("GripperOpen"));
        assert!(selected.contains("Holding"));
        assert!(!selected.contains("IsRed"));
    }

    #[test]
    fn goal_only_candidates_select_goal_only() {
        let d = dataset();
        let decls = parse(
            "(primitive Covers (?b block ?t target) (assert \"{0} covers {1}\" ?b ?t))",
        )
        .unwrap();
        let table = typecheck(&decls, &types(), &BTreeMap::new()).unwrap();
        let goal: BTreeSet<String> = ["Covers".to_string()].into();
        let selected = select_predicates(
            &table,
            &d,
            &goal,
            &SelectConfig::default(),
            &[],
            &perceiver(),
            &types(),
        );
        assert_eq!(selected.exposed, goal);
    }
}
