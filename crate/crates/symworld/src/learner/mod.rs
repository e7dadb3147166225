//! Operator learning from interaction data: effect clustering, the
//! optimistic precondition objective, and predicate-set scoring/selection.

mod cluster;
mod precond;
mod score;

pub use cluster::{cluster_effects, EffectPartition};
pub use precond::{learn_operators, learn_preconditions, LearnError, PrecondMode};
pub use score::{
    plan_valid_under, score_predicate_set, select_predicates, SatisficingPlan, SelectConfig,
};

use crate::abstraction::{abstract_state, AbstractState, GroundAtom};
use crate::domain::{FeatureState, GroundSkill, ObjectRef};
use crate::dsl::{PredicateSet, TypeTable};
use crate::perceive::{Oracle, PerceptionContext};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// A successfully executed skill segment, with the perception contexts
/// needed to re-abstract both endpoints under any candidate predicate set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PositiveSample {
    pub pre: FeatureState,
    #[serde(skip)]
    pub pre_ctx: PerceptionContext,
    pub skill: GroundSkill,
    pub post: FeatureState,
    #[serde(skip)]
    pub post_ctx: PerceptionContext,
}

/// A skill that failed to execute: the state it was attempted in.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NegativeSample {
    pub pre: FeatureState,
    #[serde(skip)]
    pub pre_ctx: PerceptionContext,
    pub skill: GroundSkill,
}

/// Append-only dataset of positive segments and negative tuples.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TransitionDataset {
    pub positives: Vec<PositiveSample>,
    pub negatives: Vec<NegativeSample>,
}

impl TransitionDataset {
    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn extend(&mut self, other: TransitionDataset) {
        self.positives.extend(other.positives);
        self.negatives.extend(other.negatives);
    }
}

#[derive(Debug, Clone)]
pub struct AbstractPositive {
    pub pre: AbstractState,
    pub skill: GroundSkill,
    pub post: AbstractState,
    pub objects: Vec<ObjectRef>,
}

#[derive(Debug, Clone)]
pub struct AbstractNegative {
    pub pre: AbstractState,
    pub skill: GroundSkill,
    pub objects: Vec<ObjectRef>,
}

/// The dataset transformed into an abstract state space: every state
/// abstracted and closed; negatives keep only the pre-state.
#[derive(Debug, Clone, Default)]
pub struct AbstractDataset {
    pub positives: Vec<AbstractPositive>,
    pub negatives: Vec<AbstractNegative>,
}

impl AbstractDataset {
    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Observed primitive-atom delta of a positive transition.
    pub fn delta(
        positive: &AbstractPositive,
        psi: &PredicateSet,
    ) -> (BTreeSet<GroundAtom>, BTreeSet<GroundAtom>) {
        let pre = positive.pre.primitive_atoms(psi);
        let post = positive.post.primitive_atoms(psi);
        let add = post.difference(&pre).cloned().collect();
        let del = pre.difference(&post).cloned().collect();
        (add, del)
    }
}

/// Elementwise abstraction of the dataset under Ψ.
pub fn abstract_dataset(
    d: &TransitionDataset,
    psi: &PredicateSet,
    oracle: &dyn Oracle,
    types: &TypeTable,
) -> AbstractDataset {
    let positives = d
        .positives
        .iter()
        .map(|s| AbstractPositive {
            pre: abstract_state(&s.pre, psi, oracle, &s.pre_ctx, types),
            skill: s.skill.clone(),
            post: abstract_state(&s.post, psi, oracle, &s.post_ctx, types),
            objects: s.pre.objects().cloned().collect(),
        })
        .collect();
    let negatives = d
        .negatives
        .iter()
        .map(|s| AbstractNegative {
            pre: abstract_state(&s.pre, psi, oracle, &s.pre_ctx, types),
            skill: s.skill.clone(),
            objects: s.pre.objects().cloned().collect(),
        })
        .collect();
    AbstractDataset {
        positives,
        negatives,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Fact, ObjectType};
    use crate::dsl::{parse, typecheck};
    use crate::perceive::{Perceiver, PerceiverConfig};
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
            (primitive Holding (?r robot ?b block) (assert \"{0} is holding {1}\" ?r ?b))";
        PredicateSet::full(typecheck(&parse(src).unwrap(), &types(), &BTreeMap::new()).unwrap())
    }

    fn perceiver() -> Perceiver {
        let mut cfg = PerceiverConfig::default();
        cfg.registry
            .insert("{0} is holding {1}".into(), "held".into());
        Perceiver::new(cfg)
    }

    #[test]
    fn empty_dataset_abstracts_to_empty() {
        let d = TransitionDataset::default();
        let a = abstract_dataset(&d, &psi(), &perceiver(), &types());
        assert!(a.is_empty());
    }

    #[test]
    fn pick_segment_abstracts_to_holding() {
        let r0 = ObjectRef::new("robot", "robot", 0);
        let b0 = ObjectRef::new("block", "block", 1);
        let mut pre = FeatureState::new();
        pre.features.insert(r0.clone(), vec![1.0]);
        pre.features.insert(b0.clone(), vec![]);
        let mut post = pre.clone();
        post.features.insert(r0.clone(), vec![0.0]);
        post.scene
            .insert(Fact::new("held", vec![r0.clone(), b0.clone()]));
        let skill = GroundSkill {
            name: "Pick".into(),
            args: vec![b0.clone()],
        };
        let d = TransitionDataset {
            positives: vec![PositiveSample {
                pre,
                pre_ctx: PerceptionContext::empty(),
                skill: skill.clone(),
                post,
                post_ctx: PerceptionContext::empty(),
            }],
            negatives: vec![],
        };
        let psi = psi();
        let a = abstract_dataset(&d, &psi, &perceiver(), &types());
        let s0 = &a.positives[0].pre;
        let s1 = &a.positives[0].post;
        assert!(s0.contains(&GroundAtom::new("GripperOpen", vec![r0.clone()])));
        assert!(s1.contains(&GroundAtom::new("Holding", vec![r0.clone(), b0.clone()])));
        let (add, del) = AbstractDataset::delta(&a.positives[0], &psi);
        assert_eq!(add.len(), 1);
        assert_eq!(del.len(), 1);
    }
}
