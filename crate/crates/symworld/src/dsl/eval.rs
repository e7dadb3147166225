//! Evaluation of predicate bodies: primitive predicates against the
//! low-level state, derived predicates against ground-atom sets.

use super::{CmpOp, CountArg, CountSpec, Expr, NumExpr, PredicateDecl, PredicateKind, TypeTable};
use crate::abstraction::GroundAtom;
use crate::domain::{FeatureState, ObjectRef};
use crate::perceive::{AssertionQuery, Oracle, PerceptionContext};
use std::collections::{BTreeMap, BTreeSet};

/// Comparison tolerance for `=` on features; the paper-style classifiers
/// use raw thresholds everywhere else.
const EQ_EPSILON: f64 = 1e-9;

/// Distinct parameter variables of the same type must bind distinct
/// objects (the declared guard for symmetric predicates).
pub fn respects_distinct_params(params: &[(String, String)], args: &[ObjectRef]) -> bool {
    for i in 0..args.len() {
        for j in (i + 1)..args.len() {
            if params[i].1 == params[j].1 && args[i] == args[j] {
                return false;
            }
        }
    }
    true
}

fn args_well_typed(decl: &PredicateDecl, args: &[ObjectRef]) -> bool {
    args.len() == decl.arity()
        && args
            .iter()
            .zip(&decl.params)
            .all(|(a, (_, t))| &*a.type_name == t)
        && respects_distinct_params(&decl.params, args)
}

struct PrimitiveEnv<'a> {
    state: &'a FeatureState,
    oracle: &'a dyn Oracle,
    ctx: &'a PerceptionContext,
    types: &'a TypeTable,
}

impl PrimitiveEnv<'_> {
    fn num(&self, e: &NumExpr, env: &BTreeMap<String, ObjectRef>) -> Option<f64> {
        match e {
            NumExpr::Const(c) => Some(*c),
            NumExpr::Feature { var, feature } => {
                let obj = env.get(var)?;
                let ty = self.types.get(&*obj.type_name)?;
                let idx = ty.feature_index(feature)?;
                self.state.feature(obj, idx)
            }
        }
    }

    fn eval(&self, e: &Expr, env: &mut BTreeMap<String, ObjectRef>) -> bool {
        match e {
            Expr::Compare { op, lhs, rhs } => {
                let (l, r) = match (self.num(lhs, env), self.num(rhs, env)) {
                    (Some(l), Some(r)) => (l, r),
                    _ => return false,
                };
                match op {
                    CmpOp::Lt => l < r,
                    CmpOp::Le => l <= r,
                    CmpOp::Eq => (l - r).abs() <= EQ_EPSILON,
                    CmpOp::Ge => l >= r,
                    CmpOp::Gt => l > r,
                }
            }
            Expr::Assert { template, args } => {
                let objs: Option<Vec<ObjectRef>> =
                    args.iter().map(|v| env.get(v).cloned()).collect();
                match objs {
                    Some(objs) => {
                        let q = AssertionQuery::new(template, objs);
                        self.oracle.evaluate(&q, self.state, self.ctx)
                    }
                    None => false,
                }
            }
            Expr::And(subs) => subs.iter().all(|s| self.eval(s, env)),
            Expr::Or(subs) => subs.iter().any(|s| self.eval(s, env)),
            Expr::Not(sub) => !self.eval(sub, env),
            Expr::Exists { var, ty, body } => self.quantify(var, ty, body, env, false),
            Expr::Forall { var, ty, body } => self.quantify(var, ty, body, env, true),
            // Typechecking keeps these out of primitive bodies.
            Expr::Holds { .. } | Expr::CountEq(..) => false,
        }
    }

    fn quantify(
        &self,
        var: &str,
        ty: &str,
        body: &Expr,
        env: &mut BTreeMap<String, ObjectRef>,
        forall: bool,
    ) -> bool {
        let domain = self.state.objects_of_type(ty);
        let shadowed = env.get(var).cloned();
        let mut result = forall;
        for obj in domain {
            env.insert(var.to_string(), obj);
            let v = self.eval(body, env);
            if forall && !v {
                result = false;
                break;
            }
            if !forall && v {
                result = true;
                break;
            }
        }
        match shadowed {
            Some(o) => {
                env.insert(var.to_string(), o);
            }
            None => {
                env.remove(var);
            }
        }
        result
    }
}

/// Evaluates a primitive predicate on concrete arguments. Total: wrong
/// arity, wrong types, or repeated objects for distinct same-type
/// parameters all yield `false`.
pub fn eval_primitive(
    decl: &PredicateDecl,
    args: &[ObjectRef],
    state: &FeatureState,
    oracle: &dyn Oracle,
    ctx: &PerceptionContext,
    types: &TypeTable,
) -> bool {
    debug_assert_eq!(decl.kind, PredicateKind::Primitive);
    if !args_well_typed(decl, args) {
        return false;
    }
    let mut env: BTreeMap<String, ObjectRef> = decl
        .params
        .iter()
        .map(|(v, _)| v.clone())
        .zip(args.iter().cloned())
        .collect();
    let penv = PrimitiveEnv {
        state,
        oracle,
        ctx,
        types,
    };
    penv.eval(&decl.body, &mut env)
}

struct DerivedEnv<'a> {
    atoms: &'a BTreeSet<GroundAtom>,
    objects: &'a [ObjectRef],
}

impl DerivedEnv<'_> {
    fn count(&self, spec: &CountSpec, env: &BTreeMap<String, ObjectRef>) -> usize {
        self.atoms
            .iter()
            .filter(|a| {
                a.predicate == spec.predicate
                    && a.args.len() == spec.args.len()
                    && a.args.iter().zip(&spec.args).all(|(got, want)| match want {
                        CountArg::Counted => true,
                        CountArg::Var(v) => env.get(v).map(|o| o == got).unwrap_or(false),
                    })
            })
            .count()
    }

    fn eval(&self, e: &Expr, env: &mut BTreeMap<String, ObjectRef>) -> bool {
        match e {
            Expr::Holds { predicate, args } => {
                let objs: Option<Vec<ObjectRef>> =
                    args.iter().map(|v| env.get(v).cloned()).collect();
                match objs {
                    Some(objs) => self.atoms.contains(&GroundAtom {
                        predicate: predicate.clone(),
                        args: objs,
                    }),
                    None => false,
                }
            }
            Expr::And(subs) => subs.iter().all(|s| self.eval(s, env)),
            Expr::Or(subs) => subs.iter().any(|s| self.eval(s, env)),
            Expr::Not(sub) => !self.eval(sub, env),
            Expr::Exists { var, ty, body } => self.quantify(var, ty, body, env, false),
            Expr::Forall { var, ty, body } => self.quantify(var, ty, body, env, true),
            Expr::CountEq(a, b) => self.count(a, env) == self.count(b, env),
            // Typechecking keeps these out of derived bodies.
            Expr::Compare { .. } | Expr::Assert { .. } => false,
        }
    }

    fn quantify(
        &self,
        var: &str,
        ty: &str,
        body: &Expr,
        env: &mut BTreeMap<String, ObjectRef>,
        forall: bool,
    ) -> bool {
        let shadowed = env.get(var).cloned();
        let mut result = forall;
        for obj in self.objects.iter().filter(|o| &*o.type_name == ty) {
            env.insert(var.to_string(), obj.clone());
            let v = self.eval(body, env);
            if forall && !v {
                result = false;
                break;
            }
            if !forall && v {
                result = true;
                break;
            }
        }
        match shadowed {
            Some(o) => {
                env.insert(var.to_string(), o);
            }
            None => {
                env.remove(var);
            }
        }
        result
    }
}

/// Evaluates a derived predicate body against a ground-atom set. Quantifiers
/// range over `objects` (the task's object set).
pub fn eval_derived(
    decl: &PredicateDecl,
    args: &[ObjectRef],
    atoms: &BTreeSet<GroundAtom>,
    objects: &[ObjectRef],
) -> bool {
    debug_assert_eq!(decl.kind, PredicateKind::Derived);
    if !args_well_typed(decl, args) {
        return false;
    }
    let mut env: BTreeMap<String, ObjectRef> = decl
        .params
        .iter()
        .map(|(v, _)| v.clone())
        .zip(args.iter().cloned())
        .collect();
    let denv = DerivedEnv { atoms, objects };
    denv.eval(&decl.body, &mut env)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Fact, ObjectType};
    use crate::dsl::parse;
    use crate::perceive::{Perceiver, PerceiverConfig};
    use std::cell::Cell;

    fn types() -> TypeTable {
        let mut t = TypeTable::new();
        t.insert(
            "robot".into(),
            ObjectType::new("robot", vec![("fingers", (0.0, 1.0))]),
        );
        t.insert("block".into(), ObjectType::new("block", vec![]));
        t
    }

    fn state(fingers: f64) -> (FeatureState, ObjectRef, ObjectRef) {
        let r0 = ObjectRef::new("robot", "robot", 0);
        let b0 = ObjectRef::new("block", "block", 1);
        let mut s = FeatureState::new();
        s.features.insert(r0.clone(), vec![fingers]);
        s.features.insert(b0.clone(), vec![]);
        (s, r0, b0)
    }

    struct CountingOracle<'a> {
        inner: &'a Perceiver,
        calls: Cell<usize>,
    }

    impl Oracle for CountingOracle<'_> {
        fn evaluate(
            &self,
            q: &AssertionQuery,
            state: &FeatureState,
            ctx: &PerceptionContext,
        ) -> bool {
            self.calls.set(self.calls.get() + 1);
            self.inner.evaluate(q, state, ctx)
        }
    }

    #[test]
    fn gripper_open_threshold() {
        let decls = parse("(primitive GripperOpen (?r robot) (> (feat ?r fingers) 0.5))").unwrap();
        let (s, r0, b0) = state(0.7);
        let p = Perceiver::default();
        let ctx = PerceptionContext::empty();
        assert!(eval_primitive(&decls[0], &[r0], &s, &p, &ctx, &types()));
        // Applied to a block: wrong type, false without error.
        assert!(!eval_primitive(&decls[0], &[b0], &s, &p, &ctx, &types()));
    }

    #[test]
    fn and_short_circuits_before_oracle() {
        let decls = parse(
            "(primitive Holding (?r robot ?b block) \
             (and (<= (feat ?r fingers) 0.5) (assert \"{0} is holding {1}\" ?r ?b)))",
        )
        .unwrap();
        let (mut s, r0, b0) = state(0.8);
        s.scene
            .insert(Fact::new("held", vec![r0.clone(), b0.clone()]));
        let mut cfg = PerceiverConfig::default();
        cfg.registry
            .insert("{0} is holding {1}".into(), "held".into());
        let p = Perceiver::new(cfg);
        let counting = CountingOracle {
            inner: &p,
            calls: Cell::new(0),
        };
        let ctx = PerceptionContext::empty();
        assert!(!eval_primitive(
            &decls[0],
            &[r0, b0],
            &s,
            &counting,
            &ctx,
            &types()
        ));
        assert_eq!(counting.calls.get(), 0, "gripper-open guard must short-circuit");
    }

    #[test]
    fn quantifiers_match_brute_force_expansion() {
        let decls = parse(
            "(derived Clear (?b block) (not (exists (?x block) (holds On ?x ?b))))",
        )
        .unwrap();
        let b0 = ObjectRef::new("block", "block", 0);
        let b1 = ObjectRef::new("block", "block", 1);
        let b2 = ObjectRef::new("block", "block", 2);
        let objects = vec![b0.clone(), b1.clone(), b2.clone()];
        let mut atoms = BTreeSet::new();
        atoms.insert(GroundAtom {
            predicate: "On".into(),
            args: vec![b2.clone(), b1.clone()],
        });
        // Brute force: Clear(b) iff no On(x, b) among all blocks x.
        for b in &objects {
            let brute = !objects.iter().any(|x| {
                atoms.contains(&GroundAtom {
                    predicate: "On".into(),
                    args: vec![x.clone(), b.clone()],
                })
            });
            assert_eq!(
                eval_derived(&decls[0], &[b.clone()], &atoms, &objects),
                brute,
                "mismatch for {b:?}"
            );
        }
    }

    #[test]
    fn count_eq_counts_matching_atoms() {
        let decls = parse(
            "(derived Even (?p block ?q block) (count= (OnPlate _ ?p) (OnPlate _ ?q)))",
        )
        .unwrap();
        let p0 = ObjectRef::new("block", "block", 0);
        let p1 = ObjectRef::new("block", "block", 1);
        let a = ObjectRef::new("block", "block", 2);
        let b = ObjectRef::new("block", "block", 3);
        let objects = vec![p0.clone(), p1.clone(), a.clone(), b.clone()];
        let mut atoms = BTreeSet::new();
        atoms.insert(GroundAtom {
            predicate: "OnPlate".into(),
            args: vec![a.clone(), p0.clone()],
        });
        atoms.insert(GroundAtom {
            predicate: "OnPlate".into(),
            args: vec![b.clone(), p1.clone()],
        });
        assert!(eval_derived(
            &decls[0],
            &[p0.clone(), p1.clone()],
            &atoms,
            &objects
        ));
        atoms.insert(GroundAtom {
            predicate: "OnPlate".into(),
            args: vec![b, p0.clone()],
        });
        assert!(!eval_derived(&decls[0], &[p0.clone(), p1], &atoms, &objects));
        // Repeated argument for distinct same-type parameters is false.
        assert!(!eval_derived(&decls[0], &[p0.clone(), p0], &atoms, &objects));
    }
}
