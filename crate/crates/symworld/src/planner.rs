//! Abstract-level search producing a stream of distinct high-level plans,
//! plus hierarchical execution with failure classification.
//!
//! The stream is a best-first search over (abstract state, plan prefix)
//! nodes. Nodes are never merged on state: predicted no-op actions must
//! stay enumerable because executing them is how the agent gathers data
//! under an underspecified model. Every node whose state entails the goal
//! emits its prefix (deduplicated by ground-skill sequence) and the search
//! continues until the plan cap or the node budget is hit.

use crate::abstraction::{abstract_state, argument_tuples, AbstractState, GroundAtom};
use crate::domain::{Environment, ExecutionResult, GroundSkill, ObjectRef, Task};
use crate::dsl::{CountArg, Expr, PredicateKind, PredicateSet, TypeTable};
use crate::learner::{NegativeSample, PositiveSample};
use crate::model::{apply, ground_all, GroundOperator, Operator};
use crate::perceive::{context_after, Oracle, PerceptionContext};
use std::cmp::Reverse;
use std::collections::{BinaryHeap, BTreeMap, BTreeSet};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Heuristic {
    /// Number of unsatisfied goal atoms. Works with derived predicates.
    GoalCount,
    /// Additive delete-relaxation estimate. Falls back to goal count when
    /// the exposed predicate set contains derived predicates, whose truth
    /// changes outside action effects.
    Additive,
}

#[derive(Debug, Clone, Copy)]
pub struct PlannerConfig {
    pub node_budget: usize,
    pub max_plans: usize,
    pub heuristic: Heuristic,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            node_budget: 100_000,
            max_plans: 8,
            heuristic: Heuristic::GoalCount,
        }
    }
}

/// |{g in goal : g not in s}|
pub fn goal_count_h(s: &AbstractState, goal: &BTreeSet<GroundAtom>) -> usize {
    goal.iter().filter(|g| !s.atoms.contains(*g)).count()
}

// ---------------------------------------------------------------------------
// Compiled ground task: interned atoms, bitset states, ground formulas.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Bits(Vec<u64>);

impl Bits {
    fn zeros(words: usize) -> Self {
        Bits(vec![0; words])
    }
    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }
    fn clear(&mut self, i: usize) {
        self.0[i / 64] &= !(1 << (i % 64));
    }
    fn get(&self, i: usize) -> bool {
        self.0[i / 64] & (1 << (i % 64)) != 0
    }
    fn contains_all(&self, other: &Bits) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a & b == *b)
    }
    fn and_not_or(&self, mask: &Bits, del: &Bits, add: &Bits) -> Bits {
        Bits(
            self.0
                .iter()
                .zip(&mask.0)
                .zip(&del.0)
                .zip(&add.0)
                .map(|(((s, m), d), a)| (s & m & !d) | a)
                .collect(),
        )
    }
}

#[derive(Debug, Clone)]
enum GroundFormula {
    Const(bool),
    Atom(usize),
    And(Vec<GroundFormula>),
    Or(Vec<GroundFormula>),
    Not(Box<GroundFormula>),
    CountEq(Vec<usize>, Vec<usize>),
}

impl GroundFormula {
    fn eval(&self, bits: &Bits) -> bool {
        match self {
            GroundFormula::Const(b) => *b,
            GroundFormula::Atom(i) => bits.get(*i),
            GroundFormula::And(fs) => fs.iter().all(|f| f.eval(bits)),
            GroundFormula::Or(fs) => fs.iter().any(|f| f.eval(bits)),
            GroundFormula::Not(f) => !f.eval(bits),
            GroundFormula::CountEq(a, b) => {
                let ca = a.iter().filter(|&&i| bits.get(i)).count();
                let cb = b.iter().filter(|&&i| bits.get(i)).count();
                ca == cb
            }
        }
    }
}

struct CompiledAction {
    pre: Bits,
    add: Bits,
    del: Bits,
    ground: GroundOperator,
}

/// A derived ground atom together with its compiled body.
struct DerivedRule {
    atom: usize,
    body: GroundFormula,
}

pub(crate) struct CompiledTask {
    atoms: Vec<GroundAtom>,
    atom_ids: BTreeMap<GroundAtom, usize>,
    words: usize,
    primitive_mask: Bits,
    actions: Vec<CompiledAction>,
    /// Derived rules grouped by stratum.
    strata: Vec<Vec<DerivedRule>>,
    goal: Option<Bits>,
}

impl CompiledTask {
    fn compile(
        psi: &PredicateSet,
        ops: &[Arc<Operator>],
        objects: &[ObjectRef],
        goal: &BTreeSet<GroundAtom>,
    ) -> CompiledTask {
        let mut atoms = Vec::new();
        for decl in psi.exposed_decls() {
            for args in argument_tuples(decl, objects) {
                atoms.push(GroundAtom {
                    predicate: decl.name.clone(),
                    args,
                });
            }
        }
        atoms.sort();
        atoms.dedup();
        let atom_ids: BTreeMap<GroundAtom, usize> = atoms
            .iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), i))
            .collect();
        let words = atoms.len().div_ceil(64).max(1);

        let mut primitive_mask = Bits::zeros(words);
        for (i, atom) in atoms.iter().enumerate() {
            if psi
                .table
                .get(&atom.predicate)
                .map(|d| d.kind == PredicateKind::Primitive)
                .unwrap_or(false)
            {
                primitive_mask.set(i);
            }
        }

        let mut compiled = CompiledTask {
            atoms,
            atom_ids,
            words,
            primitive_mask,
            actions: Vec::new(),
            strata: Vec::new(),
            goal: None,
        };

        compiled.goal = compiled.to_bits_checked(goal);

        for g in ground_all(ops, objects) {
            let pre = compiled.to_bits_checked(&g.ground_pre());
            let add = compiled.to_bits_checked(&g.ground_add());
            let del = compiled.to_bits_checked(&g.ground_del());
            if let (Some(pre), Some(add), Some(del)) = (pre, add, del) {
                compiled.actions.push(CompiledAction {
                    pre,
                    add,
                    del,
                    ground: g,
                });
            }
            // Groundings whose atoms fall outside the universe (e.g. a
            // precondition over a predicate not in Ψ) can never fire.
        }

        for stratum in psi.exposed_strata() {
            let mut rules = Vec::new();
            for decl in stratum {
                for args in argument_tuples(decl, objects) {
                    let atom = GroundAtom {
                        predicate: decl.name.clone(),
                        args: args.clone(),
                    };
                    let id = compiled.atom_ids[&atom];
                    let env: BTreeMap<String, ObjectRef> = decl
                        .params
                        .iter()
                        .map(|(v, _)| v.clone())
                        .zip(args.iter().cloned())
                        .collect();
                    let body = compiled.compile_expr(&decl.body, &env, objects);
                    rules.push(DerivedRule { atom: id, body });
                }
            }
            compiled.strata.push(rules);
        }
        compiled
    }

    fn to_bits_checked(&self, atoms: &BTreeSet<GroundAtom>) -> Option<Bits> {
        let mut bits = Bits::zeros(self.words);
        for a in atoms {
            bits.set(*self.atom_ids.get(a)?);
        }
        Some(bits)
    }

    fn to_bits(&self, atoms: &BTreeSet<GroundAtom>) -> Bits {
        let mut bits = Bits::zeros(self.words);
        for a in atoms {
            if let Some(&i) = self.atom_ids.get(a) {
                bits.set(i);
            }
        }
        bits
    }

    fn to_atoms(&self, bits: &Bits) -> BTreeSet<GroundAtom> {
        self.atoms
            .iter()
            .enumerate()
            .filter(|(i, _)| bits.get(*i))
            .map(|(_, a)| a.clone())
            .collect()
    }

    fn compile_expr(
        &self,
        e: &Expr,
        env: &BTreeMap<String, ObjectRef>,
        objects: &[ObjectRef],
    ) -> GroundFormula {
        match e {
            Expr::Holds { predicate, args } => {
                let objs: Option<Vec<ObjectRef>> =
                    args.iter().map(|v| env.get(v).cloned()).collect();
                match objs {
                    Some(objs) => {
                        let atom = GroundAtom {
                            predicate: predicate.clone(),
                            args: objs,
                        };
                        match self.atom_ids.get(&atom) {
                            Some(&i) => GroundFormula::Atom(i),
                            None => GroundFormula::Const(false),
                        }
                    }
                    None => GroundFormula::Const(false),
                }
            }
            Expr::And(subs) => GroundFormula::And(
                subs.iter()
                    .map(|s| self.compile_expr(s, env, objects))
                    .collect(),
            ),
            Expr::Or(subs) => GroundFormula::Or(
                subs.iter()
                    .map(|s| self.compile_expr(s, env, objects))
                    .collect(),
            ),
            Expr::Not(sub) => GroundFormula::Not(Box::new(self.compile_expr(sub, env, objects))),
            Expr::Exists { var, ty, body } | Expr::Forall { var, ty, body } => {
                let mut parts = Vec::new();
                for obj in objects.iter().filter(|o| &*o.type_name == ty) {
                    let mut inner = env.clone();
                    inner.insert(var.clone(), obj.clone());
                    parts.push(self.compile_expr(body, &inner, objects));
                }
                if matches!(e, Expr::Exists { .. }) {
                    GroundFormula::Or(parts)
                } else {
                    GroundFormula::And(parts)
                }
            }
            Expr::CountEq(a, b) => {
                let list = |spec: &crate::dsl::CountSpec| -> Vec<usize> {
                    self.atoms
                        .iter()
                        .enumerate()
                        .filter(|(_, atom)| {
                            atom.predicate == spec.predicate
                                && atom.args.len() == spec.args.len()
                                && atom.args.iter().zip(&spec.args).all(|(got, want)| {
                                    match want {
                                        CountArg::Counted => true,
                                        CountArg::Var(v) => {
                                            env.get(v).map(|o| o == got).unwrap_or(false)
                                        }
                                    }
                                })
                        })
                        .map(|(i, _)| i)
                        .collect()
                };
                GroundFormula::CountEq(list(a), list(b))
            }
            // Feature access and assertions never appear in derived bodies.
            Expr::Compare { .. } | Expr::Assert { .. } => GroundFormula::Const(false),
        }
    }

    /// Stratified closure over the bitset state. Within a stratum only
    /// still-false tuples are re-examined while the stratum keeps deriving.
    fn close(&self, mut bits: Bits) -> Bits {
        for stratum in &self.strata {
            let mut pending: Vec<&DerivedRule> = stratum.iter().collect();
            loop {
                let mut changed = false;
                let mut still = Vec::with_capacity(pending.len());
                for rule in pending {
                    if rule.body.eval(&bits) {
                        bits.set(rule.atom);
                        changed = true;
                    } else {
                        still.push(rule);
                    }
                }
                if !changed || still.is_empty() {
                    break;
                }
                pending = still;
            }
        }
        bits
    }

    fn strip_derived(&self, bits: &Bits) -> Bits {
        Bits(
            bits.0
                .iter()
                .zip(&self.primitive_mask.0)
                .map(|(b, m)| b & m)
                .collect(),
        )
    }

    fn h_add(&self, bits: &Bits, goal: &Bits) -> Option<usize> {
        const INF: usize = usize::MAX / 4;
        let n = self.atoms.len();
        let mut cost = vec![INF; n];
        for i in 0..n {
            if bits.get(i) {
                cost[i] = 0;
            }
        }
        loop {
            let mut changed = false;
            for action in &self.actions {
                let mut pre_cost = 0usize;
                let mut reachable = true;
                for i in 0..n {
                    if action.pre.get(i) {
                        if cost[i] >= INF {
                            reachable = false;
                            break;
                        }
                        pre_cost = pre_cost.saturating_add(cost[i]);
                    }
                }
                if !reachable {
                    continue;
                }
                for i in 0..n {
                    if action.add.get(i) {
                        let c = pre_cost.saturating_add(1);
                        if c < cost[i] {
                            cost[i] = c;
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let mut total = 0usize;
        for i in 0..n {
            if goal.get(i) {
                if cost[i] >= INF {
                    return None;
                }
                total = total.saturating_add(cost[i]);
            }
        }
        Some(total)
    }
}

// ---------------------------------------------------------------------------
// Plan stream
// ---------------------------------------------------------------------------

/// A high-level plan with its predicted abstract trajectory.
#[derive(Debug, Clone)]
pub struct HighLevelPlan {
    pub steps: Vec<GroundOperator>,
    pub skills: Vec<GroundSkill>,
    pub predicted: Vec<AbstractState>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PlanStats {
    pub nodes_expanded: usize,
    pub plans_emitted: usize,
    pub plans_validated: usize,
}

struct Node {
    bits: Bits,
    parent: usize,
    action: usize,
    g: u32,
    f: u32,
    /// No-op children may re-expand an already-closed state.
    reopened: bool,
}

struct HeapEntry {
    f: u32,
    seq: u64,
    node: usize,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.f == other.f && self.seq == other.seq
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Min-heap on (f, seq): FIFO among equal-f nodes.
        Reverse(self.f)
            .cmp(&Reverse(other.f))
            .then_with(|| Reverse(self.seq).cmp(&Reverse(other.seq)))
    }
}

/// Lazy sequence of distinct high-level plans for one task.
pub struct PlanStream<'a> {
    compiled: CompiledTask,
    psi: &'a PredicateSet,
    objects: Vec<ObjectRef>,
    init: AbstractState,
    goal: BTreeSet<GroundAtom>,
    cfg: PlannerConfig,
    use_additive: bool,
    nodes: Vec<Node>,
    heap: BinaryHeap<HeapEntry>,
    seq: u64,
    emitted: BTreeSet<Vec<GroundSkill>>,
    closed: std::collections::HashSet<Bits>,
    pub stats: PlanStats,
    dead: bool,
}

impl<'a> PlanStream<'a> {
    /// Builds the stream from a closed initial abstract state. The stream
    /// is empty when the goal mentions atoms outside the ground universe.
    pub fn new(
        psi: &'a PredicateSet,
        ops: &[Arc<Operator>],
        objects: &[ObjectRef],
        init: AbstractState,
        goal: &BTreeSet<GroundAtom>,
        cfg: PlannerConfig,
    ) -> PlanStream<'a> {
        debug_assert!(init.closed);
        let compiled = CompiledTask::compile(psi, ops, objects, goal);
        let use_additive = cfg.heuristic == Heuristic::Additive
            && psi
                .exposed_decls()
                .all(|d| d.kind == PredicateKind::Primitive);
        let mut stream = PlanStream {
            compiled,
            psi,
            objects: objects.to_vec(),
            init: init.clone(),
            goal: goal.clone(),
            cfg,
            use_additive,
            nodes: Vec::new(),
            heap: BinaryHeap::new(),
            seq: 0,
            emitted: BTreeSet::new(),
            closed: std::collections::HashSet::new(),
            stats: PlanStats::default(),
            dead: false,
        };
        if stream.compiled.goal.is_none() {
            stream.dead = true;
            return stream;
        }
        let bits = stream.compiled.to_bits(&init.atoms);
        let h = stream.h(&bits);
        match h {
            Some(h) => {
                stream.nodes.push(Node {
                    bits,
                    parent: usize::MAX,
                    action: usize::MAX,
                    g: 0,
                    f: h as u32,
                    reopened: false,
                });
                stream.heap.push(HeapEntry {
                    f: h as u32,
                    seq: 0,
                    node: 0,
                });
                stream.seq = 1;
            }
            None => stream.dead = true,
        }
        stream
    }

    fn h(&self, bits: &Bits) -> Option<usize> {
        let goal = self.compiled.goal.as_ref().unwrap();
        if self.use_additive {
            self.compiled.h_add(bits, goal)
        } else {
            let mut count = 0;
            for i in 0..self.compiled.atoms.len() {
                if goal.get(i) && !bits.get(i) {
                    count += 1;
                }
            }
            Some(count)
        }
    }

    fn reconstruct(&self, node: usize) -> Vec<usize> {
        let mut actions = Vec::new();
        let mut cur = node;
        while self.nodes[cur].parent != usize::MAX {
            actions.push(self.nodes[cur].action);
            cur = self.nodes[cur].parent;
        }
        actions.reverse();
        actions
    }

    /// Re-walks an emitted plan through the reference transition function
    /// and checks goal entailment: every plan leaving the stream is sound
    /// by construction, and this asserts it on the independent path.
    fn validate(&mut self, actions: &[usize]) -> HighLevelPlan {
        let mut steps = Vec::new();
        let mut skills = Vec::new();
        let mut predicted = vec![self.init.clone()];
        let mut current = self.init.clone();
        for &ai in actions {
            let g = self.compiled.actions[ai].ground.clone();
            let next = apply(&current, &g, self.psi, &self.objects)
                .expect("emitted plan must be applicable step by step");
            skills.push(g.ground_skill());
            steps.push(g);
            predicted.push(next.clone());
            current = next;
        }
        assert!(
            current.satisfies(&self.goal),
            "emitted plan must entail the goal"
        );
        self.stats.plans_validated += 1;
        HighLevelPlan {
            steps,
            skills,
            predicted,
        }
    }

    /// Next distinct plan in nondecreasing f order, or `None` when the
    /// stream is exhausted (no plan found, plan cap, or node budget).
    pub fn next_plan(&mut self) -> Option<HighLevelPlan> {
        if self.dead || self.stats.plans_emitted >= self.cfg.max_plans {
            return None;
        }
        let goal_bits = self.compiled.goal.clone().unwrap();
        while let Some(entry) = self.heap.pop() {
            if self.stats.nodes_expanded >= self.cfg.node_budget {
                self.dead = true;
                return None;
            }
            self.stats.nodes_expanded += 1;
            let node_id = entry.node;
            let (bits, g, f) = {
                let n = &self.nodes[node_id];
                (n.bits.clone(), n.g, n.f)
            };
            // Goal nodes emit and stay terminal: extending a plan that
            // already entails the goal only re-executes the same prefix.
            if bits.contains_all(&goal_bits) {
                let actions = self.reconstruct(node_id);
                let skills: Vec<GroundSkill> = actions
                    .iter()
                    .map(|&ai| self.compiled.actions[ai].ground.ground_skill())
                    .collect();
                if self.emitted.insert(skills) {
                    let plan = self.validate(&actions);
                    self.stats.plans_emitted += 1;
                    return Some(plan);
                }
                continue;
            }
            // Expand once per state. Predicted no-op edges (child state
            // equals parent state) bypass the closed list: they are how an
            // underspecified model explores actions it knows nothing
            // about. Goal-entailing children also bypass it so every
            // distinct goal-reaching prefix still emits.
            if !self.closed.insert(bits.clone()) && !self.nodes[node_id].reopened {
                continue;
            }
            for (ai, action) in self.compiled.actions.iter().enumerate() {
                if !bits.contains_all(&action.pre) {
                    continue;
                }
                let raw = bits.and_not_or(&self.compiled.primitive_mask, &action.del, &action.add);
                let child_bits = self.compiled.close(raw);
                let is_noop = child_bits == bits;
                let is_goal = child_bits.contains_all(&goal_bits);
                if !is_noop && !is_goal && self.closed.contains(&child_bits) {
                    continue;
                }
                if let Some(h) = self.h(&child_bits) {
                    let child_g = g + 1;
                    // Pathmax keeps f nondecreasing along paths.
                    let child_f = (child_g + h as u32).max(f);
                    let child_id = self.nodes.len();
                    self.nodes.push(Node {
                        bits: child_bits,
                        parent: node_id,
                        action: ai,
                        g: child_g,
                        f: child_f,
                        reopened: is_noop,
                    });
                    self.heap.push(HeapEntry {
                        f: child_f,
                        seq: self.seq,
                        node: child_id,
                    });
                    self.seq += 1;
                }
            }
        }
        self.dead = true;
        None
    }

    /// Predicted abstract state after a prefix, for inspection.
    pub fn to_abstract(&self, bits_atoms: &BTreeSet<GroundAtom>) -> AbstractState {
        AbstractState::closed(self.compiled.to_atoms(&self.compiled.to_bits(bits_atoms)))
    }
}

// ---------------------------------------------------------------------------
// Hierarchical execution
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OutcomeKind {
    Satisficing,
    Infeasible(usize),
    NotSatisficing,
}

/// What executing one high-level plan produced: the outcome class plus all
/// collected positive segments and negative tuples.
#[derive(Debug, Clone)]
pub struct ExecutionOutcome {
    pub kind: OutcomeKind,
    pub positives: Vec<PositiveSample>,
    pub negatives: Vec<NegativeSample>,
}

/// Executes each step's bound skill in the environment, recording positive
/// segments for successes and a negative tuple on the first failure. After
/// full execution the goal is checked on the re-abstracted final state.
pub fn execute_hierarchically(
    plan: &HighLevelPlan,
    env: &mut Environment,
    task: &Task,
    psi: &PredicateSet,
    oracle: &dyn Oracle,
    types: &TypeTable,
) -> ExecutionOutcome {
    env.reset(task);
    let mut current = task.init.clone();
    let mut ctx = PerceptionContext::empty();
    let mut positives = Vec::new();
    for (i, step) in plan.steps.iter().enumerate() {
        let skill = step.ground_skill();
        match env.execute(&skill) {
            Ok(ExecutionResult::Success(next)) => {
                let post_ctx = context_after(&skill, &current);
                positives.push(PositiveSample {
                    pre: current.clone(),
                    pre_ctx: ctx.clone(),
                    skill: skill.clone(),
                    post: next.clone(),
                    post_ctx: post_ctx.clone(),
                });
                current = next;
                ctx = post_ctx;
            }
            Ok(ExecutionResult::Failure) | Err(_) => {
                return ExecutionOutcome {
                    kind: OutcomeKind::Infeasible(i),
                    positives,
                    negatives: vec![NegativeSample {
                        pre: current,
                        pre_ctx: ctx,
                        skill,
                    }],
                };
            }
        }
    }
    let final_abstract = abstract_state(&current, psi, oracle, &ctx, types);
    let kind = if final_abstract.satisfies(&task.goal) {
        OutcomeKind::Satisficing
    } else {
        OutcomeKind::NotSatisficing
    };
    ExecutionOutcome {
        kind,
        positives,
        negatives: Vec::new(),
    }
}
