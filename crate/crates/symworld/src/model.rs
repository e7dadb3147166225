//! Lifted operators, grounding, and the abstract transition function.

use crate::abstraction::{close_derived, AbstractState, GroundAtom};
use crate::domain::{GroundSkill, ObjectRef};
use crate::dsl::{PredicateKind, PredicateSet};
use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Variable {
    pub name: String,
    pub ty: String,
}

impl Variable {
    pub fn new(name: &str, ty: &str) -> Self {
        Variable {
            name: name.to_string(),
            ty: ty.to_string(),
        }
    }
}

/// A predicate over operator parameters, stored as parameter indices.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct LiftedAtom {
    pub predicate: String,
    pub params: Vec<usize>,
}

impl LiftedAtom {
    pub fn new(predicate: &str, params: Vec<usize>) -> Self {
        LiftedAtom {
            predicate: predicate.to_string(),
            params,
        }
    }

    pub fn ground(&self, binding: &[ObjectRef]) -> GroundAtom {
        GroundAtom {
            predicate: self.predicate.clone(),
            args: self.params.iter().map(|&i| binding[i].clone()).collect(),
        }
    }

    pub fn display<'a>(&'a self, params: &'a [Variable]) -> LiftedAtomDisplay<'a> {
        LiftedAtomDisplay { atom: self, params }
    }
}

pub struct LiftedAtomDisplay<'a> {
    atom: &'a LiftedAtom,
    params: &'a [Variable],
}

impl fmt::Display for LiftedAtomDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let args: Vec<String> = self
            .atom
            .params
            .iter()
            .map(|&i| format!("{}:{}", self.params[i].name, self.params[i].ty))
            .collect();
        write!(f, "{}({})", self.atom.predicate, args.join(", "))
    }
}

/// A lifted operator: typed parameters, a bound skill, a precondition, and
/// add/delete effects over primitive predicates. `ignore` is inert metadata
/// kept for listing fidelity; no operator ever populates it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Operator {
    pub name: String,
    pub params: Vec<Variable>,
    pub skill_name: String,
    /// Parameter indices, one per skill argument.
    pub skill_args: Vec<usize>,
    pub pre: BTreeSet<LiftedAtom>,
    pub add: BTreeSet<LiftedAtom>,
    pub del: BTreeSet<LiftedAtom>,
    pub ignore: BTreeSet<String>,
    /// When true, distinct parameters of the same type may bind the same
    /// object. Off by default.
    pub allow_shared_binding: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("operator '{0}': add and delete effects overlap")]
    OverlappingEffects(String),
    #[error("operator '{op}': effect atom uses derived predicate '{predicate}'")]
    DerivedEffect { op: String, predicate: String },
    #[error("operator '{op}': unknown predicate '{predicate}'")]
    UnknownPredicate { op: String, predicate: String },
    #[error("operator '{0}': atom parameter out of range")]
    BadParamIndex(String),
}

impl Operator {
    /// Checks the structural invariants: disjoint effects, parameters in
    /// range, and derived predicates never in the postcondition.
    pub fn validate(&self, psi: &PredicateSet) -> Result<(), ModelError> {
        if self.add.intersection(&self.del).next().is_some() {
            return Err(ModelError::OverlappingEffects(self.name.clone()));
        }
        for atom in self.pre.iter().chain(&self.add).chain(&self.del) {
            if atom.params.iter().any(|&i| i >= self.params.len()) {
                return Err(ModelError::BadParamIndex(self.name.clone()));
            }
        }
        for atom in self.add.iter().chain(&self.del) {
            match psi.table.get(&atom.predicate) {
                None => {
                    return Err(ModelError::UnknownPredicate {
                        op: self.name.clone(),
                        predicate: atom.predicate.clone(),
                    })
                }
                Some(d) if d.kind == PredicateKind::Derived => {
                    return Err(ModelError::DerivedEffect {
                        op: self.name.clone(),
                        predicate: atom.predicate.clone(),
                    })
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// True when some type-respecting bijection of parameters maps this
    /// operator onto `other` (same skill binding, preconditions, and
    /// effects).
    pub fn isomorphic(&self, other: &Operator) -> bool {
        if self.skill_name != other.skill_name
            || self.params.len() != other.params.len()
            || self.pre.len() != other.pre.len()
            || self.add.len() != other.add.len()
            || self.del.len() != other.del.len()
        {
            return false;
        }
        let n = self.params.len();
        let mut mapping: Vec<Option<usize>> = vec![None; n];
        let mut used = vec![false; n];
        fn rec(
            a: &Operator,
            b: &Operator,
            i: usize,
            mapping: &mut Vec<Option<usize>>,
            used: &mut Vec<bool>,
        ) -> bool {
            if i == a.params.len() {
                let map = |atom: &LiftedAtom| LiftedAtom {
                    predicate: atom.predicate.clone(),
                    params: atom.params.iter().map(|&p| mapping[p].unwrap()).collect(),
                };
                let pre: BTreeSet<_> = a.pre.iter().map(map).collect();
                let add: BTreeSet<_> = a.add.iter().map(map).collect();
                let del: BTreeSet<_> = a.del.iter().map(map).collect();
                let skill: Vec<usize> = a.skill_args.iter().map(|&p| mapping[p].unwrap()).collect();
                return pre == b.pre && add == b.add && del == b.del && skill == b.skill_args;
            }
            for j in 0..b.params.len() {
                if used[j] || a.params[i].ty != b.params[j].ty {
                    continue;
                }
                mapping[i] = Some(j);
                used[j] = true;
                if rec(a, b, i + 1, mapping, used) {
                    return true;
                }
                mapping[i] = None;
                used[j] = false;
            }
            false
        }
        rec(self, other, 0, &mut mapping, &mut used)
    }
}

/// An operator bound to concrete objects.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundOperator {
    pub op: Arc<Operator>,
    pub binding: Vec<ObjectRef>,
}

impl GroundOperator {
    pub fn ground_skill(&self) -> GroundSkill {
        GroundSkill {
            name: self.op.skill_name.clone(),
            args: self
                .op
                .skill_args
                .iter()
                .map(|&i| self.binding[i].clone())
                .collect(),
        }
    }

    pub fn ground_pre(&self) -> BTreeSet<GroundAtom> {
        self.op.pre.iter().map(|a| a.ground(&self.binding)).collect()
    }

    pub fn ground_add(&self) -> BTreeSet<GroundAtom> {
        self.op.add.iter().map(|a| a.ground(&self.binding)).collect()
    }

    pub fn ground_del(&self) -> BTreeSet<GroundAtom> {
        self.op.del.iter().map(|a| a.ground(&self.binding)).collect()
    }
}

impl fmt::Display for GroundOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let args: Vec<String> = self.binding.iter().map(|o| o.label()).collect();
        write!(f, "{}[{}]", self.op.name, args.join(", "))
    }
}

/// Enumerates all type-consistent bindings of an operator over the objects,
/// in lexicographic object order per parameter. Distinct parameters of the
/// same type bind distinct objects unless the operator opts out.
pub fn ground_operator(op: &Arc<Operator>, objects: &[ObjectRef]) -> Vec<GroundOperator> {
    let mut sorted: Vec<ObjectRef> = objects.to_vec();
    sorted.sort();
    let mut out = Vec::new();
    let mut binding: Vec<ObjectRef> = Vec::with_capacity(op.params.len());
    fn rec(
        op: &Arc<Operator>,
        sorted: &[ObjectRef],
        binding: &mut Vec<ObjectRef>,
        out: &mut Vec<GroundOperator>,
    ) {
        let i = binding.len();
        if i == op.params.len() {
            out.push(GroundOperator {
                op: op.clone(),
                binding: binding.clone(),
            });
            return;
        }
        for obj in sorted.iter().filter(|o| &*o.type_name == op.params[i].ty) {
            if !op.allow_shared_binding {
                let dup = binding
                    .iter()
                    .enumerate()
                    .any(|(j, prev)| op.params[j].ty == op.params[i].ty && prev == obj);
                if dup {
                    continue;
                }
            }
            binding.push(obj.clone());
            rec(op, sorted, binding, out);
            binding.pop();
        }
    }
    rec(op, &sorted, &mut binding, &mut out);
    out
}

/// Grounds every operator in order.
pub fn ground_all(ops: &[Arc<Operator>], objects: &[ObjectRef]) -> Vec<GroundOperator> {
    ops.iter()
        .flat_map(|op| ground_operator(op, objects))
        .collect()
}

/// The abstract transition function: defined iff the ground precondition
/// holds, in which case the primitive atoms are updated by the effects and
/// the derived closure is recomputed.
pub fn apply(
    s: &AbstractState,
    g: &GroundOperator,
    psi: &PredicateSet,
    objects: &[ObjectRef],
) -> Option<AbstractState> {
    debug_assert!(s.closed, "apply requires a closed abstract state");
    if !g.ground_pre().is_subset(&s.atoms) {
        return None;
    }
    let mut primitive = s.primitive_atoms(psi);
    for atom in g.ground_del() {
        primitive.remove(&atom);
    }
    for atom in g.ground_add() {
        primitive.insert(atom);
    }
    Some(AbstractState::closed(close_derived(
        &primitive, psi, objects,
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::ObjectType;
    use crate::dsl::{parse, typecheck, TypeTable};
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
            (primitive Holding (?r robot ?b block) (assert \"{0} holds {1}\" ?r ?b))\n\
            (primitive On (?a block ?b block) (assert \"{0} on {1}\" ?a ?b))\n\
            (derived Clear (?b block) (not (exists (?x block) (holds On ?x ?b))))";
        PredicateSet::full(typecheck(&parse(src).unwrap(), &types(), &BTreeMap::new()).unwrap())
    }

    fn robot() -> ObjectRef {
        ObjectRef::new("robot", "robot", 0)
    }

    fn block(id: u32) -> ObjectRef {
        ObjectRef::new("block", "block", id)
    }

    fn pick_op() -> Arc<Operator> {
        Arc::new(Operator {
            name: "Pick-0".into(),
            params: vec![Variable::new("?x0", "block"), Variable::new("?x1", "robot")],
            skill_name: "Pick".into(),
            skill_args: vec![0],
            pre: [LiftedAtom::new("GripperOpen", vec![1])].into(),
            add: [LiftedAtom::new("Holding", vec![1, 0])].into(),
            del: [LiftedAtom::new("GripperOpen", vec![1])].into(),
            ignore: BTreeSet::new(),
            allow_shared_binding: false,
        })
    }

    #[test]
    fn grounding_counts_match_enumeration() {
        let one_block = Arc::new(Operator {
            name: "P".into(),
            params: vec![Variable::new("?b", "block")],
            skill_name: "Pick".into(),
            skill_args: vec![0],
            pre: BTreeSet::new(),
            add: BTreeSet::new(),
            del: BTreeSet::new(),
            ignore: BTreeSet::new(),
            allow_shared_binding: false,
        });
        let objects = vec![block(0), block(1), block(2), robot()];
        assert_eq!(ground_operator(&one_block, &objects).len(), 3);

        // Two same-type parameters bind ordered pairs without repetition.
        let stack = Arc::new(Operator {
            name: "S".into(),
            params: vec![Variable::new("?b", "block"), Variable::new("?ob", "block")],
            skill_name: "Stack".into(),
            skill_args: vec![1],
            pre: BTreeSet::new(),
            add: BTreeSet::new(),
            del: BTreeSet::new(),
            ignore: BTreeSet::new(),
            allow_shared_binding: false,
        });
        let two_blocks = vec![block(0), block(1)];
        assert_eq!(ground_operator(&stack, &two_blocks).len(), 2);

        // No robot objects: no groundings.
        let needs_robot = Arc::new(Operator {
            name: "R".into(),
            params: vec![Variable::new("?r", "robot")],
            skill_name: "Wave".into(),
            skill_args: vec![0],
            pre: BTreeSet::new(),
            add: BTreeSet::new(),
            del: BTreeSet::new(),
            ignore: BTreeSet::new(),
            allow_shared_binding: false,
        });
        assert!(ground_operator(&needs_robot, &two_blocks).is_empty());
    }

    #[test]
    fn apply_with_empty_effects_is_identity() {
        let noop = Arc::new(Operator {
            name: "N".into(),
            params: vec![Variable::new("?b", "block")],
            skill_name: "Pick".into(),
            skill_args: vec![0],
            pre: BTreeSet::new(),
            add: BTreeSet::new(),
            del: BTreeSet::new(),
            ignore: BTreeSet::new(),
            allow_shared_binding: false,
        });
        let objects = vec![block(0), robot()];
        let psi = psi();
        let mut atoms = BTreeSet::new();
        atoms.insert(GroundAtom::new("GripperOpen", vec![robot()]));
        let s = AbstractState::closed(close_derived(&atoms, &psi, &objects));
        let g = &ground_operator(&noop, &objects)[0];
        assert_eq!(apply(&s, g, &psi, &objects), Some(s.clone()));
    }

    #[test]
    fn apply_pick_produces_holding() {
        let objects = vec![block(0), robot()];
        let psi = psi();
        let mut atoms = BTreeSet::new();
        atoms.insert(GroundAtom::new("GripperOpen", vec![robot()]));
        let s = AbstractState::closed(close_derived(&atoms, &psi, &objects));
        let g = GroundOperator {
            op: pick_op(),
            binding: vec![block(0), robot()],
        };
        let next = apply(&s, &g, &psi, &objects).unwrap();
        assert!(next.contains(&GroundAtom::new("Holding", vec![robot(), block(0)])));
        assert!(!next.contains(&GroundAtom::new("GripperOpen", vec![robot()])));
    }

    #[test]
    fn apply_is_undefined_without_precondition() {
        let objects = vec![block(0), robot()];
        let psi = psi();
        let s = AbstractState::closed(close_derived(&BTreeSet::new(), &psi, &objects));
        let g = GroundOperator {
            op: pick_op(),
            binding: vec![block(0), robot()],
        };
        assert_eq!(apply(&s, &g, &psi, &objects), None);
    }

    #[test]
    fn validate_rejects_derived_effects() {
        let bad = Operator {
            name: "Bad".into(),
            params: vec![Variable::new("?b", "block")],
            skill_name: "Pick".into(),
            skill_args: vec![0],
            pre: BTreeSet::new(),
            add: [LiftedAtom::new("Clear", vec![0])].into(),
            del: BTreeSet::new(),
            ignore: BTreeSet::new(),
            allow_shared_binding: false,
        };
        assert!(matches!(
            bad.validate(&psi()),
            Err(ModelError::DerivedEffect { .. })
        ));
    }

    #[test]
    fn isomorphism_ignores_parameter_order_and_names() {
        let a = pick_op();
        let b = Operator {
            name: "Other".into(),
            params: vec![Variable::new("?r", "robot"), Variable::new("?b", "block")],
            skill_name: "Pick".into(),
            skill_args: vec![1],
            pre: [LiftedAtom::new("GripperOpen", vec![0])].into(),
            add: [LiftedAtom::new("Holding", vec![0, 1])].into(),
            del: [LiftedAtom::new("GripperOpen", vec![0])].into(),
            ignore: BTreeSet::new(),
            allow_shared_binding: false,
        };
        assert!(a.isomorphic(&b));
        let mut c = b.clone();
        c.pre = BTreeSet::new();
        assert!(!a.isomorphic(&c));
    }
}
