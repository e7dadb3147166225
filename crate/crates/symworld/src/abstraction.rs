//! State abstraction: evaluates every exposed primitive predicate on every
//! type-compatible object tuple, then closes the atom set under derived
//! predicates with a stratified least fixpoint.

use crate::domain::{FeatureState, ObjectRef};
use crate::dsl::{
    eval_derived, eval_primitive, PredicateDecl, PredicateKind, PredicateSet, TypeTable,
};
use crate::perceive::{Oracle, PerceptionContext};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

/// A predicate applied to concrete objects. Ordering is lexicographic by
/// (predicate, argument ids), the deterministic iteration order used
/// everywhere downstream.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroundAtom {
    pub predicate: String,
    pub args: Vec<ObjectRef>,
}

impl GroundAtom {
    pub fn new(predicate: &str, args: Vec<ObjectRef>) -> Self {
        GroundAtom {
            predicate: predicate.to_string(),
            args,
        }
    }
}

impl fmt::Display for GroundAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let args: Vec<String> = self
            .args
            .iter()
            .map(|o| format!("{}:{}", o.label(), o.type_name))
            .collect();
        write!(f, "{}({})", self.predicate, args.join(", "))
    }
}

/// A set of ground atoms; `closed` records whether the derived closure has
/// been computed.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AbstractState {
    pub atoms: BTreeSet<GroundAtom>,
    pub closed: bool,
}

impl AbstractState {
    pub fn closed(atoms: BTreeSet<GroundAtom>) -> Self {
        AbstractState {
            atoms,
            closed: true,
        }
    }

    pub fn contains(&self, atom: &GroundAtom) -> bool {
        self.atoms.contains(atom)
    }

    pub fn satisfies(&self, goal: &BTreeSet<GroundAtom>) -> bool {
        goal.iter().all(|g| self.atoms.contains(g))
    }

    /// Atoms of primitive predicates only.
    pub fn primitive_atoms(&self, psi: &PredicateSet) -> BTreeSet<GroundAtom> {
        self.atoms
            .iter()
            .filter(|a| {
                psi.table
                    .get(&a.predicate)
                    .map(|d| d.kind == PredicateKind::Primitive)
                    .unwrap_or(false)
            })
            .cloned()
            .collect()
    }
}

/// Enumerates all type-compatible argument tuples for a declaration over the
/// given objects, in lexicographic object-id order. Tuples that repeat an
/// object across distinct same-type parameters are skipped (they evaluate
/// to false by the distinctness rule).
pub fn argument_tuples(decl: &PredicateDecl, objects: &[ObjectRef]) -> Vec<Vec<ObjectRef>> {
    let mut sorted: Vec<ObjectRef> = objects.to_vec();
    sorted.sort();
    let mut out = Vec::new();
    let mut current: Vec<ObjectRef> = Vec::with_capacity(decl.arity());
    fn rec(
        decl: &PredicateDecl,
        sorted: &[ObjectRef],
        current: &mut Vec<ObjectRef>,
        out: &mut Vec<Vec<ObjectRef>>,
    ) {
        let i = current.len();
        if i == decl.arity() {
            out.push(current.clone());
            return;
        }
        let (_, want_ty) = &decl.params[i];
        for obj in sorted.iter().filter(|o| &*o.type_name == *want_ty) {
            let dup = current.iter().enumerate().any(|(j, prev)| {
                decl.params[j].1 == decl.params[i].1 && prev == obj
            });
            if dup {
                continue;
            }
            current.push(obj.clone());
            rec(decl, sorted, current, out);
            current.pop();
        }
    }
    rec(decl, &sorted, &mut current, &mut out);
    out
}

/// Closes a primitive atom set under the exposed derived predicates,
/// stratum by stratum. Within a stratum the fixpoint is evaluated
/// semi-naively: a tuple is only re-examined while the stratum still
/// produced new atoms its body can read, and atoms already derived are
/// never re-checked (monotone within a stratum).
pub fn close_derived(
    atoms: &BTreeSet<GroundAtom>,
    psi: &PredicateSet,
    objects: &[ObjectRef],
) -> BTreeSet<GroundAtom> {
    let mut all = atoms.clone();
    for stratum in psi.exposed_strata() {
        let candidates: Vec<(&PredicateDecl, Vec<Vec<ObjectRef>>)> = stratum
            .iter()
            .map(|d| (*d, argument_tuples(d, objects)))
            .collect();
        let mut pending: Vec<(usize, usize)> = candidates
            .iter()
            .enumerate()
            .flat_map(|(di, (_, tuples))| (0..tuples.len()).map(move |ti| (di, ti)))
            .collect();
        loop {
            let mut derived_now = Vec::new();
            let mut still_pending = Vec::new();
            for (di, ti) in pending {
                let (decl, tuples) = &candidates[di];
                let args = &tuples[ti];
                if eval_derived(decl, args, &all, objects) {
                    derived_now.push(GroundAtom {
                        predicate: decl.name.clone(),
                        args: args.clone(),
                    });
                } else {
                    still_pending.push((di, ti));
                }
            }
            if derived_now.is_empty() {
                break;
            }
            all.extend(derived_now);
            pending = still_pending;
            if pending.is_empty() {
                break;
            }
        }
    }
    all
}

/// Reference fixpoint: re-evaluates every candidate tuple from scratch each
/// round until nothing changes. Slower than [`close_derived`] but obviously
/// correct; kept for equivalence testing.
pub fn close_derived_naive(
    atoms: &BTreeSet<GroundAtom>,
    psi: &PredicateSet,
    objects: &[ObjectRef],
) -> BTreeSet<GroundAtom> {
    let mut all = atoms.clone();
    for stratum in psi.exposed_strata() {
        loop {
            let mut next = all.clone();
            for decl in &stratum {
                for args in argument_tuples(decl, objects) {
                    if eval_derived(decl, &args, &all, objects) {
                        next.insert(GroundAtom {
                            predicate: decl.name.clone(),
                            args,
                        });
                    }
                }
            }
            if next == all {
                break;
            }
            all = next;
        }
    }
    all
}

/// Computes the abstract state of `x` under Ψ: every exposed primitive
/// predicate evaluated on every type-compatible tuple, then the derived
/// closure. The result is always closed.
pub fn abstract_state(
    x: &FeatureState,
    psi: &PredicateSet,
    oracle: &dyn Oracle,
    ctx: &PerceptionContext,
    types: &TypeTable,
) -> AbstractState {
    let objects: Vec<ObjectRef> = x.objects().cloned().collect();
    let mut atoms = BTreeSet::new();
    for decl in psi.exposed_decls() {
        if decl.kind != PredicateKind::Primitive {
            continue;
        }
        for args in argument_tuples(decl, &objects) {
            if eval_primitive(decl, &args, x, oracle, ctx, types) {
                atoms.insert(GroundAtom {
                    predicate: decl.name.clone(),
                    args,
                });
            }
        }
    }
    AbstractState::closed(close_derived(&atoms, psi, &objects))
}
