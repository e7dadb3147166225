//! Predicate proposal sources: a scripted per-domain pool (the default
//! stand-in for a vision-language model) and an adapter speaking a
//! line-delimited JSON wire protocol to an external proposer process.

use crate::domain::GroundSkill;
use crate::dsl::{canonical_key, parse, pretty_decl, PredicateDecl};
use crate::learner::TransitionDataset;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::time::Duration;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    /// Discrimination: predicates that separate states where a skill
    /// succeeded from states where it failed.
    S1,
    /// Transition modeling: predicates describing properties that changed
    /// across successful segments.
    S2,
    /// Unconditional generation: logical extensions of existing
    /// predicates.
    S3,
}

/// One scripted pool entry with its availability gates: which strategies
/// surface it and what data or vocabulary must exist first.
#[derive(Debug, Clone)]
pub struct PoolEntry {
    pub decl: PredicateDecl,
    pub strategies: BTreeSet<Strategy>,
    pub requires_positive_skill: Option<String>,
    pub requires_failure_skill: Option<String>,
    pub requires_predicate: Option<String>,
}

/// What a proposal round gets to see.
#[derive(Debug, Clone)]
pub struct ProposalRequest<'a> {
    pub strategy: Strategy,
    pub iteration: usize,
    pub dataset: &'a TransitionDataset,
    /// Names already in Ψ or the candidate set.
    pub known: &'a BTreeSet<String>,
    /// Canonical bodies of known predicates, for alpha-equivalence dedup.
    pub known_keys: &'a BTreeSet<String>,
}

impl PoolEntry {
    fn available(&self, req: &ProposalRequest) -> bool {
        if !self.strategies.contains(&req.strategy) {
            return false;
        }
        if let Some(skill) = &self.requires_positive_skill {
            if !req.dataset.positives.iter().any(|s| &s.skill.name == skill) {
                return false;
            }
        }
        if let Some(skill) = &self.requires_failure_skill {
            if !req.dataset.negatives.iter().any(|s| &s.skill.name == skill) {
                return false;
            }
        }
        if let Some(pred) = &self.requires_predicate {
            if !req.known.contains(pred) {
                return false;
            }
        }
        true
    }
}

/// Scripted proposal: pool entries whose strategy tags match and whose
/// availability gates pass, deduplicated against the known predicates both
/// by name and by alpha-equivalent body.
pub fn propose(req: &ProposalRequest, pool: &[PoolEntry]) -> Vec<PredicateDecl> {
    let mut out = Vec::new();
    let mut emitted_keys = BTreeSet::new();
    for entry in pool {
        if !entry.available(req) {
            continue;
        }
        if req.known.contains(&entry.decl.name) {
            continue;
        }
        let key = canonical_key(&entry.decl);
        if req.known_keys.contains(&key) || !emitted_keys.insert(key) {
            continue;
        }
        out.push(entry.decl.clone());
    }
    out
}

// ---------------------------------------------------------------------------
// External proposer protocol
// ---------------------------------------------------------------------------

/// One labeled exemplar in the external protocol: a skill application with
/// the display-labeled objects involved.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WireExemplar {
    pub skill: String,
    pub arguments: Vec<String>,
    pub outcome: String,
}

/// Request document: strategy, iteration, current predicate sources, and
/// labeled exemplars of successes and failures.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WireRequest {
    pub strategy: String,
    pub iteration: usize,
    pub current_predicates: Vec<String>,
    pub exemplars: Vec<WireExemplar>,
    pub max_candidates: usize,
}

/// Response document: predicate declaration sources in the DSL.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WireResponse {
    pub declarations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EndpointConfig {
    pub address: String,
    pub timeout: Duration,
    pub max_candidates: usize,
}

impl EndpointConfig {
    pub fn new(address: &str) -> Self {
        EndpointConfig {
            address: address.to_string(),
            timeout: Duration::from_secs(10),
            max_candidates: 10,
        }
    }
}

fn exemplar(skill: &GroundSkill, outcome: &str) -> WireExemplar {
    WireExemplar {
        skill: skill.name.clone(),
        arguments: skill.args.iter().map(|o| o.label()).collect(),
        outcome: outcome.to_string(),
    }
}

pub fn build_wire_request(
    req: &ProposalRequest,
    known_sources: &[PredicateDecl],
    max_candidates: usize,
) -> WireRequest {
    let exemplars = match req.strategy {
        Strategy::S1 => req
            .dataset
            .positives
            .iter()
            .map(|s| exemplar(&s.skill, "success"))
            .chain(req.dataset.negatives.iter().map(|s| exemplar(&s.skill, "failure")))
            .collect(),
        Strategy::S2 => req
            .dataset
            .positives
            .iter()
            .map(|s| exemplar(&s.skill, "success"))
            .collect(),
        Strategy::S3 => Vec::new(),
    };
    WireRequest {
        strategy: format!("{:?}", req.strategy).to_lowercase(),
        iteration: req.iteration,
        current_predicates: known_sources.iter().map(pretty_decl).collect(),
        exemplars,
        max_candidates,
    }
}

/// Sends one request over TCP (one JSON line each way) and parses the
/// response declarations. Transport errors and timeouts yield no
/// proposals; malformed declarations are dropped with a diagnostic. A
/// declaration whose name collides with a known predicate but whose body
/// differs is renamed with a numeric suffix.
pub fn external_propose(
    req: &ProposalRequest,
    known_sources: &[PredicateDecl],
    cfg: &EndpointConfig,
) -> Vec<PredicateDecl> {
    let wire = build_wire_request(req, known_sources, cfg.max_candidates);
    let response = match call_endpoint(&wire, cfg) {
        Ok(r) => r,
        Err(e) => {
            log::warn!("external proposer unavailable: {e}");
            return Vec::new();
        }
    };
    let mut out = Vec::new();
    let mut names: BTreeSet<String> = req.known.clone();
    let mut keys: BTreeSet<String> = req.known_keys.clone();
    for source in response.declarations.into_iter().take(cfg.max_candidates) {
        let mut decl = match parse(&source) {
            Ok(mut decls) if decls.len() == 1 => decls.remove(0),
            Ok(_) => {
                log::warn!("dropping multi-decl proposal");
                continue;
            }
            Err(e) => {
                log::warn!("dropping malformed proposal: {e}");
                continue;
            }
        };
        let key = canonical_key(&decl);
        if keys.contains(&key) {
            continue; // alpha-equivalent to something known
        }
        if names.contains(&decl.name) {
            let mut k = 2;
            while names.contains(&format!("{}{}", decl.name, k)) {
                k += 1;
            }
            decl.name = format!("{}{}", decl.name, k);
        }
        names.insert(decl.name.clone());
        keys.insert(key);
        out.push(decl);
    }
    out
}

fn call_endpoint(wire: &WireRequest, cfg: &EndpointConfig) -> std::io::Result<WireResponse> {
    let mut stream = TcpStream::connect(&cfg.address)?;
    stream.set_read_timeout(Some(cfg.timeout))?;
    stream.set_write_timeout(Some(cfg.timeout))?;
    let mut line = serde_json::to_string(wire)?;
    line.push('\n');
    stream.write_all(line.as_bytes())?;
    stream.flush()?;
    let mut reader = BufReader::new(stream);
    let mut buf = String::new();
    reader.read_line(&mut buf)?;
    serde_json::from_str(&buf).map_err(std::io::Error::other)
}

/// Tracks which strategy a proposing iteration uses: S3 always runs, and
/// S1/S2 alternate across proposing iterations.
#[derive(Debug, Clone, Copy, Default)]
pub struct StrategySchedule {
    proposing_rounds: usize,
}

impl StrategySchedule {
    /// Strategies for the next proposing round, S3 first.
    pub fn next_round(&mut self) -> [Strategy; 2] {
        let conditioned = if self.proposing_rounds % 2 == 0 {
            Strategy::S1
        } else {
            Strategy::S2
        };
        self.proposing_rounds += 1;
        [Strategy::S3, conditioned]
    }
}

/// Convenience map from declarations to canonical body keys.
pub fn canonical_keys<'a>(decls: impl Iterator<Item = &'a PredicateDecl>) -> BTreeSet<String> {
    decls.map(canonical_key).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{FeatureState, ObjectRef};
    use crate::learner::PositiveSample;
    use crate::perceive::PerceptionContext;
    use std::net::TcpListener;

    fn decl(src: &str) -> PredicateDecl {
        parse(src).unwrap().remove(0)
    }

    fn entry(src: &str, strategy: Strategy) -> PoolEntry {
        PoolEntry {
            decl: decl(src),
            strategies: [strategy].into(),
            requires_positive_skill: None,
            requires_failure_skill: None,
            requires_predicate: None,
        }
    }

    fn dataset_with_pick_positive() -> TransitionDataset {
        let b = ObjectRef::new("block", "block", 1);
        TransitionDataset {
            positives: vec![PositiveSample {
                pre: FeatureState::new(),
                pre_ctx: PerceptionContext::empty(),
                skill: GroundSkill {
                    name: "Pick".into(),
                    args: vec![b],
                },
                post: FeatureState::new(),
                post_ctx: PerceptionContext::empty(),
            }],
            negatives: vec![],
        }
    }

    #[test]
    fn pool_unlocks_on_positive_segment() {
        let mut e = entry(
            "(primitive Gripping (?r robot ?b block) (assert \"{0} grips {1}\" ?r ?b))",
            Strategy::S2,
        );
        e.requires_positive_skill = Some("Pick".into());
        let empty = TransitionDataset::default();
        let known = BTreeSet::new();
        let keys = BTreeSet::new();
        let req = ProposalRequest {
            strategy: Strategy::S2,
            iteration: 1,
            dataset: &empty,
            known: &known,
            known_keys: &keys,
        };
        assert!(propose(&req, &[e.clone()]).is_empty());
        let with_data = dataset_with_pick_positive();
        let req = ProposalRequest {
            strategy: Strategy::S2,
            iteration: 2,
            dataset: &with_data,
            known: &known,
            known_keys: &keys,
        };
        assert_eq!(propose(&req, &[e]).len(), 1);
    }

    #[test]
    fn dedup_is_by_alpha_equivalence_not_name() {
        let pool = vec![entry(
            "(primitive Fresh (?r robot) (> (feat ?r fingers) 0.5))",
            Strategy::S3,
        )];
        let known: BTreeSet<String> = ["Other".to_string()].into();
        // Known body is alpha-equivalent under a different name.
        let keys = canonical_keys(
            [decl("(primitive Other (?z robot) (> (feat ?z fingers) 0.5))")].iter(),
        );
        let empty = TransitionDataset::default();
        let req = ProposalRequest {
            strategy: Strategy::S3,
            iteration: 1,
            dataset: &empty,
            known: &known,
            known_keys: &keys,
        };
        assert!(propose(&req, &pool).is_empty());
    }

    #[test]
    fn exhausted_pool_returns_nothing() {
        let pool = vec![entry(
            "(primitive P (?r robot) (> (feat ?r fingers) 0.5))",
            Strategy::S1,
        )];
        let known: BTreeSet<String> = ["P".to_string()].into();
        let keys = BTreeSet::new();
        let empty = TransitionDataset::default();
        let req = ProposalRequest {
            strategy: Strategy::S1,
            iteration: 1,
            dataset: &empty,
            known: &known,
            known_keys: &keys,
        };
        assert!(propose(&req, &pool).is_empty());
    }

    #[test]
    fn schedule_alternates_conditioned_strategies() {
        let mut s = StrategySchedule::default();
        assert_eq!(s.next_round(), [Strategy::S3, Strategy::S1]);
        assert_eq!(s.next_round(), [Strategy::S3, Strategy::S2]);
        assert_eq!(s.next_round(), [Strategy::S3, Strategy::S1]);
    }

    #[test]
    fn external_adapter_filters_and_renames() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        let server = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let _req: WireRequest = serde_json::from_str(&line).unwrap();
            let resp = WireResponse {
                declarations: vec![
                    // Well-formed, but collides with a known name.
                    "(primitive Known (?r robot) (< (feat ?r fingers) 0.25))".into(),
                    // Malformed: dropped.
                    "(primitive Broken (?r robot) (holds X ?r))".into(),
                    // Fresh.
                    "(primitive NewOne (?r robot) (> (feat ?r fingers) 0.75))".into(),
                ],
            };
            let mut stream = stream;
            let mut line = serde_json::to_string(&resp).unwrap();
            line.push('\n');
            stream.write_all(line.as_bytes()).unwrap();
        });
        let empty = TransitionDataset::default();
        let known: BTreeSet<String> = ["Known".to_string()].into();
        let known_decls = vec![decl(
            "(primitive Known (?r robot) (> (feat ?r fingers) 0.5))",
        )];
        let keys = canonical_keys(known_decls.iter());
        let req = ProposalRequest {
            strategy: Strategy::S1,
            iteration: 3,
            dataset: &empty,
            known: &known,
            known_keys: &keys,
        };
        let got = external_propose(&req, &known_decls, &EndpointConfig::new(&addr));
        server.join().unwrap();
        let names: Vec<&str> = got.iter().map(|d| d.name.as_str()).collect();
        assert_eq!(names, vec!["Known2", "NewOne"]);
    }

    #[test]
    fn unreachable_endpoint_yields_no_proposals() {
        let empty = TransitionDataset::default();
        let known = BTreeSet::new();
        let keys = BTreeSet::new();
        let req = ProposalRequest {
            strategy: Strategy::S1,
            iteration: 0,
            dataset: &empty,
            known: &known,
            known_keys: &keys,
        };
        let mut cfg = EndpointConfig::new("127.0.0.1:1");
        cfg.timeout = Duration::from_millis(200);
        assert!(external_propose(&req, &[], &cfg).is_empty());
    }
}
