//! Foundational domain types: object types, objects, low-level states, skills,
//! tasks, and the environment interface shared by every other module.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

/// An object type with an ordered feature schema.
///
/// Feature names are unique within a type; the numeric range is declarative
/// (used for validation and documentation, not enforcement at runtime).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectType {
    pub name: String,
    pub feature_schema: Vec<(String, (f64, f64))>,
}

impl ObjectType {
    pub fn new(name: &str, feature_schema: Vec<(&str, (f64, f64))>) -> Self {
        ObjectType {
            name: name.to_string(),
            feature_schema: feature_schema
                .into_iter()
                .map(|(n, r)| (n.to_string(), r))
                .collect(),
        }
    }

    pub fn feature_index(&self, feature: &str) -> Option<usize> {
        self.feature_schema.iter().position(|(n, _)| n == feature)
    }
}

/// A concrete object in a task. `id` is unique within a task, which makes it
/// the primary sort key for all deterministic orderings downstream.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObjectRef {
    pub name: Arc<str>,
    pub type_name: Arc<str>,
    pub id: u32,
}

impl ObjectRef {
    pub fn new(name: &str, type_name: &str, id: u32) -> Self {
        ObjectRef {
            name: Arc::from(name),
            type_name: Arc::from(type_name),
            id,
        }
    }

    /// Display label used in logs and the external-proposer protocol:
    /// `"{name}{id}"` is bijective because ids are unique within a task.
    pub fn label(&self) -> String {
        format!("{}{}", self.name, self.id)
    }
}

impl Ord for ObjectRef {
    fn cmp(&self, other: &Self) -> Ordering {
        self.id
            .cmp(&other.id)
            .then_with(|| self.name.cmp(&other.name))
            .then_with(|| self.type_name.cmp(&other.type_name))
    }
}

impl PartialOrd for ObjectRef {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for ObjectRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)
    }
}

/// A ground relational fact in the scene graph, e.g. `held(robot, block2)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Fact {
    pub relation: String,
    pub args: Vec<ObjectRef>,
}

impl Fact {
    pub fn new(relation: &str, args: Vec<ObjectRef>) -> Self {
        Fact {
            relation: relation.to_string(),
            args,
        }
    }
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let args: Vec<String> = self.args.iter().map(|o| o.label()).collect();
        write!(f, "{}({})", self.relation, args.join(", "))
    }
}

/// The ground-truth relational facts an oracle can answer questions about.
/// Facts listed in `occluded` are true but not directly observable; the
/// perceiver must fall back on context to resolve them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub facts: BTreeSet<Fact>,
    pub occluded: BTreeSet<Fact>,
}

impl SceneGraph {
    pub fn insert(&mut self, fact: Fact) {
        self.facts.insert(fact);
    }

    pub fn insert_occluded(&mut self, fact: Fact) {
        self.occluded.insert(fact.clone());
        self.facts.insert(fact);
    }

    pub fn remove(&mut self, fact: &Fact) {
        self.facts.remove(fact);
        self.occluded.remove(fact);
    }

    pub fn holds(&self, fact: &Fact) -> bool {
        self.facts.contains(fact)
    }

    pub fn is_occluded(&self, fact: &Fact) -> bool {
        self.occluded.contains(fact)
    }
}

/// Low-level environment state: per-object numeric features plus the scene
/// graph. `step_index` lets the perceiver key its noise stream without a
/// global clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureState {
    pub features: BTreeMap<ObjectRef, Vec<f64>>,
    pub scene: SceneGraph,
    pub step_index: u32,
}

impl FeatureState {
    pub fn new() -> Self {
        FeatureState {
            features: BTreeMap::new(),
            scene: SceneGraph::default(),
            step_index: 0,
        }
    }

    pub fn objects(&self) -> impl Iterator<Item = &ObjectRef> {
        self.features.keys()
    }

    pub fn objects_of_type(&self, type_name: &str) -> Vec<ObjectRef> {
        self.features
            .keys()
            .filter(|o| &*o.type_name == type_name)
            .cloned()
            .collect()
    }

    pub fn feature(&self, obj: &ObjectRef, index: usize) -> Option<f64> {
        self.features.get(obj).and_then(|v| v.get(index)).copied()
    }

    pub fn set_feature(&mut self, obj: &ObjectRef, index: usize, value: f64) {
        if let Some(v) = self.features.get_mut(obj) {
            v[index] = value;
        }
    }
}

impl Default for FeatureState {
    fn default() -> Self {
        Self::new()
    }
}

/// An environment-provided skill with typed object parameters.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SkillSpec {
    pub name: String,
    pub param_types: Vec<String>,
}

impl SkillSpec {
    pub fn new(name: &str, param_types: &[&str]) -> Self {
        SkillSpec {
            name: name.to_string(),
            param_types: param_types.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// A skill applied to concrete objects.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroundSkill {
    pub name: String,
    pub args: Vec<ObjectRef>,
}

impl fmt::Display for GroundSkill {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let args: Vec<String> = self.args.iter().map(|o| o.label()).collect();
        write!(f, "{}({})", self.name, args.join(", "))
    }
}

/// Errors from grounding a skill onto objects. Callers treat these as an
/// immediately-failing skill rather than a fault.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GroundingError {
    #[error("arity mismatch: skill expects {expected} arguments, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("type mismatch at position {0}")]
    TypeMismatch(usize),
}

/// Binds a skill to arguments, checking arity and types.
pub fn ground_skill(spec: &SkillSpec, args: &[ObjectRef]) -> Result<GroundSkill, GroundingError> {
    if args.len() != spec.param_types.len() {
        return Err(GroundingError::ArityMismatch {
            expected: spec.param_types.len(),
            got: args.len(),
        });
    }
    for (i, (arg, want)) in args.iter().zip(&spec.param_types).enumerate() {
        if &*arg.type_name != want {
            return Err(GroundingError::TypeMismatch(i));
        }
    }
    Ok(GroundSkill {
        name: spec.name.clone(),
        args: args.to_vec(),
    })
}

/// A goal atom: a predicate name applied to task objects. This mirrors
/// `abstraction::GroundAtom` but lives here so `Task` has no upward
/// dependency.
pub type GoalAtom = crate::abstraction::GroundAtom;

/// A task: objects, an initial low-level state, and a goal over goal
/// predicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub objects: BTreeSet<ObjectRef>,
    pub init: FeatureState,
    pub goal: BTreeSet<GoalAtom>,
}

impl Task {
    pub fn objects_vec(&self) -> Vec<ObjectRef> {
        self.objects.iter().cloned().collect()
    }
}

/// Result of executing one skill.
#[derive(Debug, Clone, PartialEq)]
pub enum ExecutionResult {
    Success(FeatureState),
    Failure,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EnvError {
    #[error("no active task: call reset first")]
    NoActiveTask,
}

/// Per-domain skill semantics. `step` returns the successor state on
/// success (with `step_index` not yet advanced) or `None` on skill failure.
pub trait Simulator: Send {
    fn step(&self, state: &FeatureState, skill: &GroundSkill) -> Option<FeatureState>;
}

/// A deterministic, episodic environment around a [`Simulator`]. Failed
/// skills are no-ops on the observable state, so negative tuples stay
/// well-defined.
pub struct Environment {
    sim: Box<dyn Simulator>,
    skills: BTreeMap<String, SkillSpec>,
    current: Option<FeatureState>,
}

impl Environment {
    pub fn new(sim: Box<dyn Simulator>, skills: Vec<SkillSpec>) -> Self {
        Environment {
            sim,
            skills: skills.into_iter().map(|s| (s.name.clone(), s)).collect(),
            current: None,
        }
    }

    pub fn reset(&mut self, task: &Task) {
        self.current = Some(task.init.clone());
    }

    pub fn state(&self) -> Option<&FeatureState> {
        self.current.as_ref()
    }

    /// Executes a ground skill on the current state. Deterministic given
    /// (state, skill); wrong-typed groundings fail immediately.
    pub fn execute(&mut self, skill: &GroundSkill) -> Result<ExecutionResult, EnvError> {
        let state = self.current.as_ref().ok_or(EnvError::NoActiveTask)?;
        // A skill applied to wrong-typed objects terminates immediately
        // with failure.
        let ok = match self.skills.get(&skill.name) {
            Some(spec) => ground_skill(spec, &skill.args).is_ok(),
            None => false,
        };
        if !ok {
            return Ok(ExecutionResult::Failure);
        }
        match self.sim.step(state, skill) {
            Some(mut next) => {
                next.step_index = state.step_index + 1;
                self.current = Some(next.clone());
                Ok(ExecutionResult::Success(next))
            }
            None => Ok(ExecutionResult::Failure),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block_type() -> ObjectType {
        ObjectType::new("block", vec![("width", (0.0, 1.0))])
    }

    #[test]
    fn ground_skill_matches_arity_and_types() {
        let pick = SkillSpec::new("Pick", &["block"]);
        let b0 = ObjectRef::new("block", "block", 0);
        let g = ground_skill(&pick, &[b0.clone()]).unwrap();
        assert_eq!(g.name, "Pick");
        assert_eq!(g.args, vec![b0]);
    }

    #[test]
    fn ground_skill_rejects_wrong_type() {
        let pick = SkillSpec::new("Pick", &["block"]);
        let t0 = ObjectRef::new("target", "target", 0);
        assert_eq!(
            ground_skill(&pick, &[t0]),
            Err(GroundingError::TypeMismatch(0))
        );
    }

    #[test]
    fn ground_skill_rejects_wrong_arity() {
        let stack = SkillSpec::new("Stack", &["robot", "block"]);
        let r0 = ObjectRef::new("robot", "robot", 0);
        assert_eq!(
            ground_skill(&stack, &[r0]),
            Err(GroundingError::ArityMismatch {
                expected: 2,
                got: 1
            })
        );
    }

    #[test]
    fn object_labels_are_bijective() {
        let b0 = ObjectRef::new("block", "block", 0);
        let b1 = ObjectRef::new("block", "block", 1);
        let jug = ObjectRef::new("jug", "jug", 3);
        assert_eq!(b0.label(), "block0");
        assert_eq!(jug.label(), "jug3");
        assert_ne!(b0.label(), b1.label());
    }

    #[test]
    fn feature_schema_lookup() {
        let ty = block_type();
        assert_eq!(ty.feature_index("width"), Some(0));
        assert_eq!(ty.feature_index("mass"), None);
    }

    struct Noop;
    impl Simulator for Noop {
        fn step(&self, _: &FeatureState, _: &GroundSkill) -> Option<FeatureState> {
            None
        }
    }

    #[test]
    fn execute_without_reset_is_an_error() {
        let mut env = Environment::new(Box::new(Noop), vec![SkillSpec::new("Pick", &["block"])]);
        let skill = GroundSkill {
            name: "Pick".into(),
            args: vec![ObjectRef::new("block", "block", 0)],
        };
        assert_eq!(env.execute(&skill), Err(EnvError::NoActiveTask));
    }
}
