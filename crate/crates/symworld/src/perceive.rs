//! Deterministic perceptual oracle: answers templated assertions about
//! object subsets from the scene graph, with context conditioning for
//! occluded facts and an optional seeded noise stream.

use crate::domain::{Fact, FeatureState, GroundSkill, ObjectRef};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};

/// A natural-language-keyed query about specific objects. `focus` is the
/// crop analog: the object subset the oracle is allowed to look at.
#[derive(Debug, Clone, PartialEq)]
pub struct AssertionQuery {
    pub template: String,
    pub args: Vec<ObjectRef>,
    pub focus: BTreeSet<ObjectRef>,
}

impl AssertionQuery {
    pub fn new(template: &str, args: Vec<ObjectRef>) -> Self {
        let focus = args.iter().cloned().collect();
        AssertionQuery {
            template: template.to_string(),
            args,
            focus,
        }
    }

    /// Rendered form with display labels, used in logs and the external
    /// proposer protocol.
    pub fn rendered(&self) -> String {
        let mut out = self.template.clone();
        for (i, arg) in self.args.iter().enumerate() {
            out = out.replace(&format!("{{{}}}", i), &arg.label());
        }
        out
    }
}

/// What the oracle knows about the step immediately preceding the current
/// state: the executed skill, the previous state, and the assertion answers
/// it gave there.
#[derive(Debug, Clone, Default)]
pub struct PerceptionContext {
    pub prev_skill: Option<GroundSkill>,
    pub prev_state: Option<FeatureState>,
    pub prev_atoms: Option<BTreeMap<Fact, bool>>,
}

impl PerceptionContext {
    pub fn empty() -> Self {
        Self::default()
    }
}

/// Raw answer before context resolution. `Unknown` is only produced when
/// the scene graph marks the queried fact occluded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleAnswer {
    True,
    False,
    Unknown,
}

/// A declared nominal effect of a skill on a scene relation: on success,
/// `relation(args[arg_indices])` takes `value`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NominalEffect {
    pub relation: String,
    pub arg_indices: Vec<usize>,
    pub value: bool,
}

/// Per-domain oracle configuration: the assertion vocabulary (template →
/// scene relation) and the nominal skill effects used to resolve occluded
/// queries.
#[derive(Debug, Clone, Default)]
pub struct PerceiverConfig {
    pub registry: BTreeMap<String, String>,
    pub nominal_effects: BTreeMap<String, Vec<NominalEffect>>,
    pub noise_p: f64,
    pub seed: u64,
}

/// Interface the predicate evaluator sees. Implementations must be pure
/// given (query, state, ctx) and their own configuration.
pub trait Oracle {
    fn evaluate(&self, q: &AssertionQuery, state: &FeatureState, ctx: &PerceptionContext) -> bool;
}

#[derive(Debug, Clone, Default)]
pub struct Perceiver {
    pub cfg: PerceiverConfig,
}

impl Perceiver {
    pub fn new(cfg: PerceiverConfig) -> Self {
        Perceiver { cfg }
    }

    /// Looks the fact up in the scene graph without consulting context.
    pub fn raw_answer(&self, q: &AssertionQuery, state: &FeatureState) -> OracleAnswer {
        let relation = match self.cfg.registry.get(&q.template) {
            Some(r) => r.clone(),
            None => return OracleAnswer::False,
        };
        let fact = Fact {
            relation,
            args: q.args.clone(),
        };
        if state.scene.is_occluded(&fact) {
            OracleAnswer::Unknown
        } else if state.scene.holds(&fact) {
            OracleAnswer::True
        } else {
            OracleAnswer::False
        }
    }

    fn resolve_occluded(
        &self,
        fact: &Fact,
        ctx: &PerceptionContext,
    ) -> bool {
        if let Some(skill) = &ctx.prev_skill {
            for eff in self.cfg.nominal_effects.get(&skill.name).into_iter().flatten() {
                if eff.relation != fact.relation {
                    continue;
                }
                let nominal_args: Option<Vec<&ObjectRef>> =
                    eff.arg_indices.iter().map(|&i| skill.args.get(i)).collect();
                if let Some(nominal_args) = nominal_args {
                    if nominal_args.len() == fact.args.len()
                        && nominal_args.iter().zip(&fact.args).all(|(a, b)| *a == b)
                    {
                        return eff.value;
                    }
                }
            }
        }
        if let Some(prev) = &ctx.prev_atoms {
            if let Some(&v) = prev.get(fact) {
                return v;
            }
        }
        false
    }

    fn query_hash(q: &AssertionQuery) -> u64 {
        // FNV-1a over the rendered query; stable across runs and platforms.
        let mut h: u64 = 0xcbf29ce484222325;
        for b in q.rendered().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }

    fn apply_noise(&self, answer: bool, state: &FeatureState, q: &AssertionQuery) -> bool {
        if self.cfg.noise_p <= 0.0 {
            return answer;
        }
        let mix = self
            .cfg
            .seed
            .wrapping_mul(0x9e3779b97f4a7c15)
            .wrapping_add(state.step_index as u64)
            .wrapping_mul(0x85ebca77c2b2ae63)
            ^ Self::query_hash(q);
        let mut rng = ChaCha8Rng::seed_from_u64(mix);
        if rng.gen::<f64>() < self.cfg.noise_p {
            !answer
        } else {
            answer
        }
    }
}

impl Oracle for Perceiver {
    /// Total: visible facts answer directly; occluded facts consult the
    /// previous skill's nominal effect, then the previous answers, then
    /// default to false. Noise (if enabled) flips the final boolean with a
    /// stream keyed by (seed, step index, query) so runs are reproducible.
    fn evaluate(&self, q: &AssertionQuery, state: &FeatureState, ctx: &PerceptionContext) -> bool {
        let answer = match self.raw_answer(q, state) {
            OracleAnswer::True => true,
            OracleAnswer::False => false,
            OracleAnswer::Unknown => {
                let relation = self.cfg.registry.get(&q.template).cloned().unwrap_or_default();
                let fact = Fact {
                    relation,
                    args: q.args.clone(),
                };
                self.resolve_occluded(&fact, ctx)
            }
        };
        self.apply_noise(answer, state, q)
    }
}

/// Wraps an oracle and records every answer keyed by the queried fact, so
/// callers can thread "previous truth values" into the next step's context.
pub struct RecordingOracle<'a> {
    inner: &'a Perceiver,
    answers: RefCell<BTreeMap<Fact, bool>>,
}

impl<'a> RecordingOracle<'a> {
    pub fn new(inner: &'a Perceiver) -> Self {
        RecordingOracle {
            inner,
            answers: RefCell::new(BTreeMap::new()),
        }
    }

    pub fn into_answers(self) -> BTreeMap<Fact, bool> {
        self.answers.into_inner()
    }
}

impl Oracle for RecordingOracle<'_> {
    fn evaluate(&self, q: &AssertionQuery, state: &FeatureState, ctx: &PerceptionContext) -> bool {
        let answer = self.inner.evaluate(q, state, ctx);
        if let Some(relation) = self.inner.cfg.registry.get(&q.template) {
            self.answers.borrow_mut().insert(
                Fact {
                    relation: relation.clone(),
                    args: q.args.clone(),
                },
                answer,
            );
        }
        answer
    }
}

/// Bijective display labels for every object in the state.
pub fn label_objects(state: &FeatureState) -> BTreeMap<ObjectRef, String> {
    state.objects().map(|o| (o.clone(), o.label())).collect()
}

/// Context for the state reached by executing `skill` from `prev`: the
/// skill, the previous state, and the previous truth values (all facts of
/// the previous scene, occluded ones included — the agent's step-old
/// memory).
pub fn context_after(skill: &GroundSkill, prev: &FeatureState) -> PerceptionContext {
    let prev_atoms = prev.scene.facts.iter().map(|f| (f.clone(), true)).collect();
    PerceptionContext {
        prev_skill: Some(skill.clone()),
        prev_state: Some(prev.clone()),
        prev_atoms: Some(prev_atoms),
    }
}
