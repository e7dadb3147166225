//! Precondition learning. The optimistic learner maximizes a classification
//! objective with a small complexity penalty over subsets of the classical
//! intersection set; the plain intersection learner (shipped for
//! comparison) returns the full intersection.

use super::{AbstractDataset, EffectPartition};
use crate::abstraction::GroundAtom;
use crate::domain::{GroundSkill, ObjectRef};
use crate::dsl::PredicateSet;
use crate::model::{LiftedAtom, Operator, Variable};
use std::collections::BTreeSet;

/// Above this many candidate atoms, exhaustive subset search gives way to
/// greedy backward elimination.
pub const EXHAUSTIVE_LIMIT: usize = 12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LearnError {
    #[error("cannot learn preconditions for an empty partition")]
    EmptyPartition,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PrecondMode {
    /// Maximize J(Pre) = classification accuracy + alpha * |Pre|, with
    /// alpha < 0 acting as a complexity penalty.
    Optimistic { alpha: f64 },
    /// The classical cluster-and-intersect precondition: every lifted atom
    /// true in all member pre-states.
    Intersection,
}

/// Lifted atoms true in every member pre-state, projected onto the
/// partition's parameters (atoms mentioning other objects cannot appear in
/// an objects-only precondition).
pub fn intersection_atoms(
    partition: &EffectPartition,
    d: &AbstractDataset,
) -> BTreeSet<LiftedAtom> {
    let mut result: Option<BTreeSet<LiftedAtom>> = None;
    for (idx, binding) in &partition.members {
        let state = &d.positives[*idx].pre;
        let mut lifted = BTreeSet::new();
        for atom in &state.atoms {
            let params: Option<Vec<usize>> = atom
                .args
                .iter()
                .map(|o| binding.iter().position(|b| b == o))
                .collect();
            if let Some(params) = params {
                lifted.insert(LiftedAtom {
                    predicate: atom.predicate.clone(),
                    params,
                });
            }
        }
        result = Some(match result {
            None => lifted,
            Some(acc) => acc.intersection(&lifted).cloned().collect(),
        });
    }
    result.unwrap_or_default()
}

/// True iff some grounding of `pre` consistent with the ground skill (and
/// the distinct-binding rule) holds in `state`.
pub fn pre_satisfiable(
    pre: &BTreeSet<LiftedAtom>,
    params: &[Variable],
    skill_args: &[usize],
    skill: &GroundSkill,
    state: &BTreeSet<GroundAtom>,
    objects: &[ObjectRef],
) -> bool {
    let n = params.len();
    let mut binding: Vec<Option<ObjectRef>> = vec![None; n];
    for (pos, &p) in skill_args.iter().enumerate() {
        match (&binding[p], skill.args.get(pos)) {
            (_, None) => return false,
            (Some(existing), Some(obj)) if existing != obj => return false,
            (_, Some(obj)) => binding[p] = Some(obj.clone()),
        }
    }
    // Only parameters the precondition mentions need assignments.
    let free: Vec<usize> = (0..n)
        .filter(|&i| binding[i].is_none() && pre.iter().any(|a| a.params.contains(&i)))
        .collect();

    fn atoms_hold(
        pre: &BTreeSet<LiftedAtom>,
        binding: &[Option<ObjectRef>],
        state: &BTreeSet<GroundAtom>,
    ) -> bool {
        pre.iter().all(|atom| {
            let args: Option<Vec<ObjectRef>> =
                atom.params.iter().map(|&p| binding[p].clone()).collect();
            match args {
                Some(args) => state.contains(&GroundAtom {
                    predicate: atom.predicate.clone(),
                    args,
                }),
                None => true, // not fully bound yet
            }
        })
    }

    fn rec(
        pre: &BTreeSet<LiftedAtom>,
        params: &[Variable],
        binding: &mut Vec<Option<ObjectRef>>,
        free: &[usize],
        depth: usize,
        state: &BTreeSet<GroundAtom>,
        objects: &[ObjectRef],
    ) -> bool {
        if !atoms_hold(pre, binding, state) {
            return false;
        }
        if depth == free.len() {
            return true;
        }
        let i = free[depth];
        for obj in objects {
            if &*obj.type_name != params[i].ty {
                continue;
            }
            let clash = (0..binding.len()).any(|j| {
                params[j].ty == params[i].ty && binding[j].as_ref() == Some(obj)
            });
            if clash {
                continue;
            }
            binding[i] = Some(obj.clone());
            if rec(pre, params, binding, free, depth + 1, state, objects) {
                return true;
            }
            binding[i] = None;
        }
        false
    }

    rec(pre, params, &mut binding, &free, 0, state, objects)
}

/// The classification terms of J for a given precondition: members count
/// when their own binding satisfies it, non-members when no grounding does.
pub fn j_value(
    pre: &BTreeSet<LiftedAtom>,
    partition: &EffectPartition,
    d: &AbstractDataset,
    alpha: f64,
) -> f64 {
    let member_indices: BTreeSet<usize> = partition.members.iter().map(|(i, _)| *i).collect();
    let mut correct = 0usize;
    let mut total = 0usize;
    for (idx, binding) in &partition.members {
        total += 1;
        let state = &d.positives[*idx].pre;
        let holds = pre.iter().all(|atom| {
            let args: Vec<ObjectRef> = atom.params.iter().map(|&p| binding[p].clone()).collect();
            state.atoms.contains(&GroundAtom {
                predicate: atom.predicate.clone(),
                args,
            })
        });
        if holds {
            correct += 1;
        }
    }
    for (idx, positive) in d.positives.iter().enumerate() {
        if positive.skill.name != partition.skill_name || member_indices.contains(&idx) {
            continue;
        }
        total += 1;
        if !pre_satisfiable(
            pre,
            &partition.params,
            &partition.skill_args,
            &positive.skill,
            &positive.pre.atoms,
            &positive.objects,
        ) {
            correct += 1;
        }
    }
    for negative in &d.negatives {
        if negative.skill.name != partition.skill_name {
            continue;
        }
        total += 1;
        if !pre_satisfiable(
            pre,
            &partition.params,
            &partition.skill_args,
            &negative.skill,
            &negative.pre.atoms,
            &negative.objects,
        ) {
            correct += 1;
        }
    }
    if total == 0 {
        return alpha * pre.len() as f64;
    }
    correct as f64 / total as f64 + alpha * pre.len() as f64
}

fn better(
    candidate: (f64, &Vec<LiftedAtom>),
    incumbent: (f64, &Vec<LiftedAtom>),
) -> bool {
    let (cj, cset) = candidate;
    let (ij, iset) = incumbent;
    if (cj - ij).abs() > 1e-12 {
        return cj > ij;
    }
    if cset.len() != iset.len() {
        return cset.len() < iset.len();
    }
    cset < iset
}

/// Learns the partition's precondition. In optimistic mode the result is
/// the J-optimal subset of the intersection atoms (exhaustive up to
/// [`EXHAUSTIVE_LIMIT`] candidates, greedy backward elimination past it);
/// ties break toward fewer atoms, then lexicographic order.
pub fn learn_preconditions(
    partition: &EffectPartition,
    d: &AbstractDataset,
    mode: PrecondMode,
) -> Result<BTreeSet<LiftedAtom>, LearnError> {
    if partition.members.is_empty() {
        return Err(LearnError::EmptyPartition);
    }
    let candidates: Vec<LiftedAtom> = intersection_atoms(partition, d).into_iter().collect();
    let alpha = match mode {
        PrecondMode::Intersection => return Ok(candidates.into_iter().collect()),
        PrecondMode::Optimistic { alpha } => alpha,
    };

    if candidates.len() <= EXHAUSTIVE_LIMIT {
        let mut best: Option<(f64, Vec<LiftedAtom>)> = None;
        for mask in 0u32..(1u32 << candidates.len()) {
            let subset: Vec<LiftedAtom> = candidates
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, a)| a.clone())
                .collect();
            let set: BTreeSet<LiftedAtom> = subset.iter().cloned().collect();
            let j = j_value(&set, partition, d, alpha);
            match &best {
                Some((bj, bset)) if !better((j, &subset), (*bj, bset)) => {}
                _ => best = Some((j, subset)),
            }
        }
        Ok(best.unwrap().1.into_iter().collect())
    } else {
        // Greedy backward elimination from the full intersection.
        let mut current: Vec<LiftedAtom> = candidates;
        let mut current_j = j_value(
            &current.iter().cloned().collect(),
            partition,
            d,
            alpha,
        );
        loop {
            let mut best_step: Option<(f64, Vec<LiftedAtom>)> = None;
            for drop in 0..current.len() {
                let trial: Vec<LiftedAtom> = current
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != drop)
                    .map(|(_, a)| a.clone())
                    .collect();
                let j = j_value(&trial.iter().cloned().collect(), partition, d, alpha);
                match &best_step {
                    Some((bj, bset)) if !better((j, &trial), (*bj, bset)) => {}
                    _ => best_step = Some((j, trial)),
                }
            }
            match best_step {
                Some((j, set)) if better((j, &set), (current_j, &current)) => {
                    current = set;
                    current_j = j;
                }
                _ => break,
            }
        }
        Ok(current.into_iter().collect())
    }
}

/// The full pipeline: cluster the abstract dataset into effect partitions
/// and learn each partition's precondition. Operators are named
/// `{Skill}-{k}` in partition discovery order per skill.
pub fn learn_operators(
    d: &AbstractDataset,
    psi: &PredicateSet,
    mode: PrecondMode,
) -> Result<Vec<Operator>, LearnError> {
    let partitions = super::cluster_effects(d, psi);
    let mut per_skill_counter: std::collections::BTreeMap<String, usize> = Default::default();
    let mut ops = Vec::new();
    for partition in &partitions {
        let pre = learn_preconditions(partition, d, mode)?;
        let k = per_skill_counter
            .entry(partition.skill_name.clone())
            .or_insert(0);
        let name = format!("{}-{}", partition.skill_name, k);
        *k += 1;
        ops.push(Operator {
            name,
            params: partition.params.clone(),
            skill_name: partition.skill_name.clone(),
            skill_args: partition.skill_args.clone(),
            pre,
            add: partition.add.clone(),
            del: partition.del.clone(),
            ignore: BTreeSet::new(),
            allow_shared_binding: false,
        });
    }
    Ok(ops)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abstraction::AbstractState;
    use crate::domain::ObjectType;
    use crate::dsl::{parse, typecheck, TypeTable};
    use crate::learner::AbstractPositive;
    use std::collections::BTreeMap;

    fn types() -> TypeTable {
        let mut t = TypeTable::new();
        t.insert(
            "robot".into(),
            ObjectType::new("robot", vec![("fingers", (0.0, 1.0))]),
        );
        t.insert("block".into(), ObjectType::new("block", vec![]));
        t
    }

    fn psi() -> PredicateSet {
        let src = "\
            (primitive GripperOpen (?r robot) (> (feat ?r fingers) 0.5))\n\
            (primitive OnTable (?b block) (assert \"{0} on table\" ?b))\n\
            (primitive Holding (?r robot ?b block) (assert \"{0} holds {1}\" ?r ?b))";
        PredicateSet::full(typecheck(&parse(src).unwrap(), &types(), &BTreeMap::new()).unwrap())
    }

    fn robot() -> ObjectRef {
        ObjectRef::new("robot", "robot", 0)
    }

    fn block(id: u32) -> ObjectRef {
        ObjectRef::new("block", "block", id)
    }

    fn atom(p: &str, args: Vec<ObjectRef>) -> GroundAtom {
        GroundAtom::new(p, args)
    }

    fn pick_dataset() -> AbstractDataset {
        // Successful picks happen with the gripper open (and the block on
        // the table); failures happen with the gripper closed.
        let mk_pos = |b: u32| AbstractPositive {
            pre: AbstractState::closed(
                [
                    atom("GripperOpen", vec![robot()]),
                    atom("OnTable", vec![block(b)]),
                ]
                .into(),
            ),
            skill: GroundSkill {
                name: "Pick".into(),
                args: vec![block(b)],
            },
            post: AbstractState::closed([atom("Holding", vec![robot(), block(b)])].into()),
            objects: vec![robot(), block(1), block(2)],
        };
        let neg = super::super::AbstractNegative {
            pre: AbstractState::closed([atom("OnTable", vec![block(2)])].into()),
            skill: GroundSkill {
                name: "Pick".into(),
                args: vec![block(2)],
            },
            objects: vec![robot(), block(1), block(2)],
        };
        AbstractDataset {
            positives: vec![mk_pos(1), mk_pos(2)],
            negatives: vec![neg],
        }
    }

    #[test]
    fn no_negatives_gives_empty_precondition() {
        let mut d = pick_dataset();
        d.negatives.clear();
        let psi = psi();
        let parts = super::super::cluster_effects(&d, &psi);
        assert_eq!(parts.len(), 1);
        let pre =
            learn_preconditions(&parts[0], &d, PrecondMode::Optimistic { alpha: -0.01 }).unwrap();
        assert!(pre.is_empty(), "penalty favors the empty set: {pre:?}");
    }

    #[test]
    fn negative_forces_discriminating_atom() {
        let d = pick_dataset();
        let psi = psi();
        let parts = super::super::cluster_effects(&d, &psi);
        let pre =
            learn_preconditions(&parts[0], &d, PrecondMode::Optimistic { alpha: -0.01 }).unwrap();
        // GripperOpen separates the failure; OnTable does not (the failure
        // state has the block on the table too).
        assert_eq!(pre.len(), 1);
        assert_eq!(pre.iter().next().unwrap().predicate, "GripperOpen");
    }

    #[test]
    fn intersection_baseline_returns_superset() {
        let d = pick_dataset();
        let psi = psi();
        let parts = super::super::cluster_effects(&d, &psi);
        let optimistic =
            learn_preconditions(&parts[0], &d, PrecondMode::Optimistic { alpha: -0.01 }).unwrap();
        let intersection = learn_preconditions(&parts[0], &d, PrecondMode::Intersection).unwrap();
        assert!(optimistic.is_subset(&intersection));
        assert!(intersection.len() > optimistic.len());
        let preds: BTreeSet<&str> = intersection
            .iter()
            .map(|a| a.predicate.as_str())
            .collect();
        assert!(preds.contains("OnTable"));
    }

    #[test]
    fn learned_operator_models_its_training_data() {
        let d = pick_dataset();
        let psi = psi();
        let ops =
            learn_operators(&d, &psi, PrecondMode::Optimistic { alpha: -0.01 }).unwrap();
        assert_eq!(ops.len(), 1);
        let op = &ops[0];
        assert_eq!(op.skill_name, "Pick");
        assert_eq!(op.add.len(), 1);
        // (a) every member satisfied, (b) the negative excluded.
        for positive in &d.positives {
            assert!(pre_satisfiable(
                &op.pre,
                &op.params,
                &op.skill_args,
                &positive.skill,
                &positive.pre.atoms,
                &positive.objects
            ));
        }
        for negative in &d.negatives {
            assert!(!pre_satisfiable(
                &op.pre,
                &op.params,
                &op.skill_args,
                &negative.skill,
                &negative.pre.atoms,
                &negative.objects
            ));
        }
    }
}
