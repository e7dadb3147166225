//! Partitions transitions by unifiable lifted effects: two transitions of
//! the same skill share a partition iff their effect deltas are isomorphic
//! under a variable binding extending the skill's argument binding.

use super::{AbstractDataset, AbstractPositive};
use crate::abstraction::GroundAtom;
use crate::domain::ObjectRef;
use crate::dsl::PredicateSet;
use crate::model::{LiftedAtom, Variable};
use std::collections::{BTreeMap, BTreeSet};

/// One effect cluster: a lifted add/delete pair over parameters (skill
/// arguments first, then extra effect variables in first-occurrence order),
/// with every member transition and its parameter binding.
#[derive(Debug, Clone)]
pub struct EffectPartition {
    pub skill_name: String,
    pub params: Vec<Variable>,
    /// Parameter indices bound by the skill's arguments, in order.
    pub skill_args: Vec<usize>,
    pub add: BTreeSet<LiftedAtom>,
    pub del: BTreeSet<LiftedAtom>,
    /// (index into `AbstractDataset::positives`, binding per parameter)
    pub members: Vec<(usize, Vec<ObjectRef>)>,
}

/// Lifts one transition's delta: skill arguments take the first variables,
/// then extra effect objects are assigned in first-occurrence order over
/// the sorted atom lists.
fn lift_transition(
    positive: &AbstractPositive,
    add: &BTreeSet<GroundAtom>,
    del: &BTreeSet<GroundAtom>,
) -> (Vec<Variable>, Vec<usize>, BTreeSet<LiftedAtom>, BTreeSet<LiftedAtom>, Vec<ObjectRef>) {
    let mut binding: Vec<ObjectRef> = Vec::new();
    let mut var_of: BTreeMap<ObjectRef, usize> = BTreeMap::new();
    let mut skill_args = Vec::new();
    for obj in &positive.skill.args {
        let idx = *var_of.entry(obj.clone()).or_insert_with(|| {
            binding.push(obj.clone());
            binding.len() - 1
        });
        skill_args.push(idx);
    }
    let mut intern = |obj: &ObjectRef, binding: &mut Vec<ObjectRef>,
                      var_of: &mut BTreeMap<ObjectRef, usize>| {
        *var_of.entry(obj.clone()).or_insert_with(|| {
            binding.push(obj.clone());
            binding.len() - 1
        })
    };
    let mut lift_set = |atoms: &BTreeSet<GroundAtom>,
                        binding: &mut Vec<ObjectRef>,
                        var_of: &mut BTreeMap<ObjectRef, usize>| {
        atoms
            .iter()
            .map(|a| LiftedAtom {
                predicate: a.predicate.clone(),
                params: a.args.iter().map(|o| intern(o, binding, var_of)).collect(),
            })
            .collect::<BTreeSet<_>>()
    };
    let lifted_add = lift_set(add, &mut binding, &mut var_of);
    let lifted_del = lift_set(del, &mut binding, &mut var_of);
    let params = binding
        .iter()
        .enumerate()
        .map(|(i, o)| Variable::new(&format!("?v{}", i), &o.type_name))
        .collect();
    (params, skill_args, lifted_add, lifted_del, binding)
}

/// Tries to bind a partition's parameters to a transition so the lifted
/// effects ground exactly to the transition's delta. Skill arguments pin
/// the prefix; extras are matched by backtracking over the delta's
/// remaining objects.
fn try_unify(
    partition: &EffectPartition,
    positive: &AbstractPositive,
    add: &BTreeSet<GroundAtom>,
    del: &BTreeSet<GroundAtom>,
) -> Option<Vec<ObjectRef>> {
    if partition.skill_name != positive.skill.name {
        return None;
    }
    let n = partition.params.len();
    let mut binding: Vec<Option<ObjectRef>> = vec![None; n];
    for (pos, &p) in partition.skill_args.iter().enumerate() {
        let obj = &positive.skill.args[pos];
        match &binding[p] {
            Some(existing) if existing != obj => return None,
            _ => binding[p] = Some(obj.clone()),
        }
    }
    // Candidate objects for extras: anything mentioned by the delta.
    let mut delta_objects: Vec<ObjectRef> = add
        .iter()
        .chain(del.iter())
        .flat_map(|a| a.args.iter().cloned())
        .collect();
    delta_objects.sort();
    delta_objects.dedup();

    fn ground_matches(
        partition: &EffectPartition,
        binding: &[Option<ObjectRef>],
        add: &BTreeSet<GroundAtom>,
        del: &BTreeSet<GroundAtom>,
    ) -> bool {
        let ground = |atoms: &BTreeSet<LiftedAtom>| -> Option<BTreeSet<GroundAtom>> {
            atoms
                .iter()
                .map(|a| {
                    let args: Option<Vec<ObjectRef>> =
                        a.params.iter().map(|&p| binding[p].clone()).collect();
                    args.map(|args| GroundAtom {
                        predicate: a.predicate.clone(),
                        args,
                    })
                })
                .collect()
        };
        match (ground(&partition.add), ground(&partition.del)) {
            (Some(ga), Some(gd)) => &ga == add && &gd == del,
            _ => false,
        }
    }

    fn rec(
        partition: &EffectPartition,
        binding: &mut Vec<Option<ObjectRef>>,
        candidates: &[ObjectRef],
        next: usize,
        add: &BTreeSet<GroundAtom>,
        del: &BTreeSet<GroundAtom>,
    ) -> bool {
        match (next..binding.len()).find(|&i| binding[i].is_none()) {
            None => ground_matches(partition, binding, add, del),
            Some(i) => {
                for obj in candidates {
                    if &*obj.type_name != partition.params[i].ty {
                        continue;
                    }
                    if binding.iter().flatten().any(|b| b == obj) {
                        continue;
                    }
                    binding[i] = Some(obj.clone());
                    if rec(partition, binding, candidates, i + 1, add, del) {
                        return true;
                    }
                    binding[i] = None;
                }
                false
            }
        }
    }

    if rec(partition, &mut binding, &delta_objects, 0, add, del) {
        Some(binding.into_iter().map(Option::unwrap).collect())
    } else {
        None
    }
}

/// Greedy clustering in dataset order: each transition joins the first
/// partition its delta unifies with, or founds a new one.
pub fn cluster_effects(d: &AbstractDataset, psi: &PredicateSet) -> Vec<EffectPartition> {
    let mut partitions: Vec<EffectPartition> = Vec::new();
    for (idx, positive) in d.positives.iter().enumerate() {
        let (add, del) = AbstractDataset::delta(positive, psi);
        let mut joined = false;
        for partition in partitions.iter_mut() {
            if let Some(binding) = try_unify(partition, positive, &add, &del) {
                partition.members.push((idx, binding));
                joined = true;
                break;
            }
        }
        if !joined {
            let (params, skill_args, lifted_add, lifted_del, binding) =
                lift_transition(positive, &add, &del);
            partitions.push(EffectPartition {
                skill_name: positive.skill.name.clone(),
                params,
                skill_args,
                add: lifted_add,
                del: lifted_del,
                members: vec![(idx, binding)],
            });
        }
    }
    partitions
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abstraction::AbstractState;
    use crate::domain::GroundSkill;
    use crate::dsl::{parse, typecheck, PredicateSet, TypeTable};
    use crate::domain::ObjectType;
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
            (primitive Holding (?r robot ?b block) (assert \"{0} holds {1}\" ?r ?b))";
        PredicateSet::full(typecheck(&parse(src).unwrap(), &types(), &BTreeMap::new()).unwrap())
    }

    fn robot() -> ObjectRef {
        ObjectRef::new("robot", "robot", 0)
    }

    fn block(id: u32) -> ObjectRef {
        ObjectRef::new("block", "block", id)
    }

    fn pick_positive(b: u32) -> AbstractPositive {
        let pre = AbstractState::closed(
            [GroundAtom::new("GripperOpen", vec![robot()])].into(),
        );
        let post = AbstractState::closed(
            [GroundAtom::new("Holding", vec![robot(), block(b)])].into(),
        );
        AbstractPositive {
            pre,
            skill: GroundSkill {
                name: "Pick".into(),
                args: vec![block(b)],
            },
            post,
            objects: vec![robot(), block(1), block(2)],
        }
    }

    #[test]
    fn alpha_equivalent_deltas_share_a_partition() {
        let d = AbstractDataset {
            positives: vec![pick_positive(1), pick_positive(2)],
            negatives: vec![],
        };
        let parts = cluster_effects(&d, &psi());
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0].members.len(), 2);
        // Skill arg (block) is ?v0, the robot shows up as an extra var.
        assert_eq!(parts[0].params.len(), 2);
        assert_eq!(parts[0].skill_args, vec![0]);
        assert_eq!(parts[0].add.len(), 1);
        assert_eq!(parts[0].del.len(), 1);
    }

    #[test]
    fn different_deltas_split_partitions() {
        let mut without_release = pick_positive(1);
        // Same skill, but nothing was deleted this time.
        without_release.pre = AbstractState::closed(BTreeSet::new());
        let d = AbstractDataset {
            positives: vec![pick_positive(2), without_release],
            negatives: vec![],
        };
        let parts = cluster_effects(&d, &psi());
        assert_eq!(parts.len(), 2);
    }

    #[test]
    fn different_skills_never_merge() {
        let mut other = pick_positive(1);
        other.skill = GroundSkill {
            name: "Grab".into(),
            args: vec![block(1)],
        };
        let d = AbstractDataset {
            positives: vec![pick_positive(1), other],
            negatives: vec![],
        };
        let parts = cluster_effects(&d, &psi());
        assert_eq!(parts.len(), 2);
    }
}
