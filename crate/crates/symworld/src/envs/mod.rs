//! The five benchmark domains: deterministic kinematic simulators with
//! their domain-spec files, initial/oracle models, proposal pools, and
//! seeded task generators.

mod balance;
mod blocks;
mod coffee;
mod cover;

use crate::domain::{Environment, ObjectType, SkillSpec, Task};
use crate::dsl::{parse, typecheck, PredicateSet, PredicateTable, TypeTable};
use crate::listing::parse_operators;
use crate::model::Operator;
use crate::perceive::{NominalEffect, Perceiver, PerceiverConfig};
use crate::proposer::PoolEntry;
use serde::Deserialize;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

#[derive(Debug, thiserror::Error)]
pub enum EnvsError {
    #[error("unknown domain '{0}'")]
    UnknownDomain(String),
    #[error("domain asset error: {0}")]
    Asset(String),
}

#[derive(Debug, Deserialize)]
struct RawType {
    name: String,
    features: Vec<(String, f64, f64)>,
}

#[derive(Debug, Deserialize)]
struct RawSkill {
    name: String,
    params: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct RawNominal {
    skill: String,
    relation: String,
    args: Vec<usize>,
    value: bool,
}

/// Task-generator parameters, as declared in the domain-spec file.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind")]
pub enum GenParams {
    #[serde(rename = "cover")]
    Cover {
        train_blocks: usize,
        train_targets: usize,
        test_blocks: usize,
        test_targets: usize,
        heavy: bool,
        impossible_rate: f64,
    },
    #[serde(rename = "blocks")]
    Blocks {
        train_blocks: Vec<usize>,
        test_blocks: Vec<usize>,
    },
    #[serde(rename = "coffee")]
    Coffee {
        train_cups: Vec<usize>,
        test_cups: Vec<usize>,
    },
    #[serde(rename = "balance")]
    Balance {
        train_blocks: Vec<usize>,
        test_blocks: Vec<usize>,
    },
}

#[derive(Debug, Deserialize)]
struct RawDomain {
    name: String,
    n_abstract: usize,
    train_tasks: usize,
    goal_predicates: Vec<String>,
    types: Vec<RawType>,
    skills: Vec<RawSkill>,
    #[serde(default)]
    registry: BTreeMap<String, String>,
    #[serde(default)]
    nominal_effects: Vec<RawNominal>,
    generator: GenParams,
}

#[derive(Debug, Deserialize)]
struct RawPool {
    #[serde(default)]
    entry: Vec<RawPoolEntry>,
}

#[derive(Debug, Deserialize)]
struct RawPoolEntry {
    dsl: String,
    strategies: Vec<String>,
    #[serde(default)]
    requires_positive_skill: Option<String>,
    #[serde(default)]
    requires_failure_skill: Option<String>,
    #[serde(default)]
    requires_predicate: Option<String>,
}

/// Everything a run needs to know about a domain: types, skills, goal
/// predicates, the oracle vocabulary, the initial and oracle models, the
/// scripted proposal pool, and planner defaults.
#[derive(Debug, Clone)]
pub struct DomainSpec {
    pub name: String,
    pub types: TypeTable,
    pub skills: BTreeMap<String, SkillSpec>,
    pub goal_predicates: BTreeSet<String>,
    pub n_abstract: usize,
    pub train_tasks: usize,
    pub registry: BTreeMap<String, String>,
    pub nominal_effects: BTreeMap<String, Vec<NominalEffect>>,
    pub initial_predicates: PredicateTable,
    pub oracle_predicates: PredicateTable,
    pub initial_operators: Vec<Arc<Operator>>,
    pub oracle_operators: Vec<Arc<Operator>>,
    pub pool: Vec<PoolEntry>,
    pub generator: GenParams,
}

impl DomainSpec {
    pub fn perceiver(&self, noise_p: f64, seed: u64) -> Perceiver {
        Perceiver::new(PerceiverConfig {
            registry: self.registry.clone(),
            nominal_effects: self.nominal_effects.clone(),
            noise_p,
            seed,
        })
    }

    pub fn initial_psi(&self) -> PredicateSet {
        PredicateSet::full(self.initial_predicates.clone())
    }

    pub fn oracle_psi(&self) -> PredicateSet {
        PredicateSet::full(self.oracle_predicates.clone())
    }

    /// All predicates the proposer can ever surface, merged with the
    /// initial set into one typechecked table.
    pub fn candidate_table(&self) -> PredicateTable {
        let extra: Vec<_> = self.pool.iter().map(|e| e.decl.clone()).collect();
        self.initial_predicates
            .merged_with(&extra, &self.types, &self.skills)
            .expect("pool entries typecheck against the domain")
    }
}

/// A generated task plus whether its goal is unreachable by construction
/// (used by the impossible-task evaluation protocol).
#[derive(Debug, Clone)]
pub struct GeneratedTask {
    pub task: Task,
    pub unreachable: bool,
}

/// Seeded task sampler matching the domain's train/test distributions.
#[derive(Debug, Clone)]
pub struct TaskGenerator {
    params: GenParams,
    train_count: usize,
}

/// Splitmix-style seed mixing, stable across platforms.
pub(crate) fn mix_seed(seed: u64, salt: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_mul(0x9e3779b97f4a7c15)
        .wrapping_add(salt.wrapping_mul(0xbf58476d1ce4e5b9))
        .wrapping_add(index.wrapping_mul(0x94d049bb133111eb));
    z ^= z >> 30;
    z = z.wrapping_mul(0xbf58476d1ce4e5b9);
    z ^= z >> 27;
    z
}

impl TaskGenerator {
    pub fn train_tasks(&self, seed: u64) -> Vec<GeneratedTask> {
        (0..self.train_count)
            .map(|i| self.sample(mix_seed(seed, 0x7261, i as u64), false))
            .collect()
    }

    pub fn test_tasks(&self, seed: u64, count: usize) -> Vec<GeneratedTask> {
        (0..count)
            .map(|i| self.sample(mix_seed(seed, 0x7465, i as u64), true))
            .collect()
    }

    fn sample(&self, seed: u64, test: bool) -> GeneratedTask {
        match &self.params {
            GenParams::Cover { .. } => cover::sample_task(&self.params, seed, test),
            GenParams::Blocks { .. } => blocks::sample_task(&self.params, seed, test),
            GenParams::Coffee { .. } => coffee::sample_task(&self.params, seed, test),
            GenParams::Balance { .. } => balance::sample_task(&self.params, seed, test),
        }
    }
}

struct Assets {
    domain: &'static str,
    initial: &'static str,
    oracle: &'static str,
    initial_ops: &'static str,
    oracle_ops: &'static str,
    pool: &'static str,
}

fn assets_for(name: &str) -> Option<Assets> {
    macro_rules! bundle {
        ($dir:literal) => {
            Assets {
                domain: include_str!(concat!("assets/", $dir, "/domain.toml")),
                initial: include_str!(concat!("assets/", $dir, "/initial.lisp")),
                oracle: include_str!(concat!("assets/", $dir, "/oracle.lisp")),
                initial_ops: include_str!(concat!("assets/", $dir, "/initial_ops.txt")),
                oracle_ops: include_str!(concat!("assets/", $dir, "/oracle_ops.txt")),
                pool: include_str!(concat!("assets/", $dir, "/pool.toml")),
            }
        };
    }
    match name {
        "cover" => Some(bundle!("cover")),
        "cover_heavy" => Some(bundle!("cover_heavy")),
        "blocks" => Some(bundle!("blocks")),
        "coffee" => Some(bundle!("coffee")),
        "balance" => Some(bundle!("balance")),
        _ => None,
    }
}

pub const DOMAIN_NAMES: [&str; 5] = ["cover", "blocks", "coffee", "cover_heavy", "balance"];

fn load_table(
    src: &str,
    types: &TypeTable,
    skills: &BTreeMap<String, SkillSpec>,
) -> Result<PredicateTable, EnvsError> {
    let decls = parse(src).map_err(|e| EnvsError::Asset(e.to_string()))?;
    typecheck(&decls, types, skills).map_err(|e| EnvsError::Asset(e.to_string()))
}

fn load_ops(src: &str, psi: &PredicateSet) -> Result<Vec<Arc<Operator>>, EnvsError> {
    let ops = parse_operators(src).map_err(|e| EnvsError::Asset(e.to_string()))?;
    for op in &ops {
        op.validate(psi)
            .map_err(|e| EnvsError::Asset(e.to_string()))?;
    }
    Ok(ops.into_iter().map(Arc::new).collect())
}

/// Builds a domain: its spec, a fresh environment, and the task generator.
pub fn make_domain(
    name: &str,
    _seed: u64,
) -> Result<(DomainSpec, Environment, TaskGenerator), EnvsError> {
    let assets = assets_for(name).ok_or_else(|| EnvsError::UnknownDomain(name.to_string()))?;
    let raw: RawDomain =
        toml::from_str(assets.domain).map_err(|e| EnvsError::Asset(e.to_string()))?;
    let types: TypeTable = raw
        .types
        .iter()
        .map(|t| {
            (
                t.name.clone(),
                ObjectType {
                    name: t.name.clone(),
                    feature_schema: t
                        .features
                        .iter()
                        .map(|(n, lo, hi)| (n.clone(), (*lo, *hi)))
                        .collect(),
                },
            )
        })
        .collect();
    let skills: BTreeMap<String, SkillSpec> = raw
        .skills
        .iter()
        .map(|s| {
            (
                s.name.clone(),
                SkillSpec {
                    name: s.name.clone(),
                    param_types: s.params.clone(),
                },
            )
        })
        .collect();
    let mut nominal_effects: BTreeMap<String, Vec<NominalEffect>> = BTreeMap::new();
    for ne in &raw.nominal_effects {
        nominal_effects
            .entry(ne.skill.clone())
            .or_default()
            .push(NominalEffect {
                relation: ne.relation.clone(),
                arg_indices: ne.args.clone(),
                value: ne.value,
            });
    }

    let initial_predicates = load_table(assets.initial, &types, &skills)?;
    let oracle_predicates = load_table(assets.oracle, &types, &skills)?;
    let goal_predicates: BTreeSet<String> = raw.goal_predicates.iter().cloned().collect();
    for g in &goal_predicates {
        if !initial_predicates.contains(g) {
            return Err(EnvsError::Asset(format!(
                "goal predicate '{}' missing from initial predicates",
                g
            )));
        }
    }
    let initial_operators = load_ops(
        assets.initial_ops,
        &PredicateSet::full(initial_predicates.clone()),
    )?;
    let oracle_operators = load_ops(
        assets.oracle_ops,
        &PredicateSet::full(oracle_predicates.clone()),
    )?;
    for op in initial_operators.iter().chain(&oracle_operators) {
        if !skills.contains_key(&op.skill_name) {
            return Err(EnvsError::Asset(format!(
                "operator '{}' references undeclared skill '{}'",
                op.name, op.skill_name
            )));
        }
    }

    let raw_pool: RawPool =
        toml::from_str(assets.pool).map_err(|e| EnvsError::Asset(e.to_string()))?;
    let mut pool = Vec::new();
    for entry in raw_pool.entry {
        let decls = parse(&entry.dsl).map_err(|e| EnvsError::Asset(e.to_string()))?;
        if decls.len() != 1 {
            return Err(EnvsError::Asset("pool entry must be one decl".into()));
        }
        pool.push(PoolEntry {
            decl: decls.into_iter().next().unwrap(),
            strategies: entry
                .strategies
                .iter()
                .map(|s| match s.as_str() {
                    "s1" => Ok(crate::proposer::Strategy::S1),
                    "s2" => Ok(crate::proposer::Strategy::S2),
                    "s3" => Ok(crate::proposer::Strategy::S3),
                    other => Err(EnvsError::Asset(format!("unknown strategy '{}'", other))),
                })
                .collect::<Result<BTreeSet<_>, _>>()?,
            requires_positive_skill: entry.requires_positive_skill,
            requires_failure_skill: entry.requires_failure_skill,
            requires_predicate: entry.requires_predicate,
        });
    }

    let spec = DomainSpec {
        name: raw.name.clone(),
        types,
        skills: skills.clone(),
        goal_predicates,
        n_abstract: raw.n_abstract,
        train_tasks: raw.train_tasks,
        registry: raw.registry,
        nominal_effects,
        initial_predicates,
        oracle_predicates,
        initial_operators,
        oracle_operators,
        pool,
        generator: raw.generator.clone(),
    };
    // The pool must typecheck together with the initial predicates.
    let _ = spec.candidate_table();

    let skills_vec: Vec<SkillSpec> = skills.values().cloned().collect();
    let sim: Box<dyn crate::domain::Simulator> = match name {
        "cover" | "cover_heavy" => Box::new(cover::CoverSim),
        "blocks" => Box::new(blocks::BlocksSim),
        "coffee" => Box::new(coffee::CoffeeSim),
        "balance" => Box::new(balance::BalanceSim),
        _ => unreachable!(),
    };
    let env = Environment::new(sim, skills_vec);
    let generator = TaskGenerator {
        params: raw.generator,
        train_count: raw.train_tasks,
    };
    Ok((spec, env, generator))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_domains_load() {
        for name in DOMAIN_NAMES {
            let (spec, _env, generator) = make_domain(name, 0).expect(name);
            assert_eq!(spec.name, name);
            assert!(!spec.initial_operators.is_empty());
            assert!(!spec.oracle_operators.is_empty());
            assert!(spec.pool.len() >= 3, "{name} pool too small");
            let train = generator.train_tasks(0);
            assert_eq!(train.len(), spec.train_tasks);
            let test = generator.test_tasks(0, 5);
            assert_eq!(test.len(), 5);
        }
    }

    #[test]
    fn unknown_domain_is_an_error() {
        assert!(matches!(
            make_domain("warehouse", 0),
            Err(EnvsError::UnknownDomain(_))
        ));
    }

    #[test]
    fn generators_are_seed_deterministic() {
        for name in DOMAIN_NAMES {
            let (_, _, g) = make_domain(name, 0).unwrap();
            let a = g.test_tasks(7, 10);
            let b = g.test_tasks(7, 10);
            for (x, y) in a.iter().zip(&b) {
                assert_eq!(x.task, y.task);
                assert_eq!(x.unreachable, y.unreachable);
            }
        }
    }
}
