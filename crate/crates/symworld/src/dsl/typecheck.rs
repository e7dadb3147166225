//! Name/type resolution and stratification for predicate declarations.

use super::{CountArg, Expr, NumExpr, PredicateDecl, PredicateKind, PredicateTable, TypeTable};
use crate::domain::SkillSpec;
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TypeError {
    #[error("unknown type '{0}'")]
    UnknownType(String),
    #[error("type '{ty}' has no feature '{feature}'")]
    UnknownFeature { ty: String, feature: String },
    #[error("unknown predicate '{0}'")]
    UnknownPredicate(String),
    #[error("negation is not stratified through {}", .0.join(" -> "))]
    UnstratifiedNegation(Vec<String>),
    #[error("predicate '{predicate}' applied with wrong arity (expected {expected}, got {got})")]
    ArityMismatch {
        predicate: String,
        expected: usize,
        got: usize,
    },
    #[error("argument {position} of '{predicate}' has type '{got}', expected '{expected}'")]
    ArgTypeMismatch {
        predicate: String,
        position: usize,
        expected: String,
        got: String,
    },
    #[error("assertion template {template:?} has {placeholders} placeholders but {args} arguments")]
    TemplateArity {
        template: String,
        placeholders: usize,
        args: usize,
    },
    #[error("predicate '{0}' collides with a skill name")]
    SkillNameCollision(String),
}

/// Number of distinct `{i}` placeholders a template mentions; they must be
/// exactly `{0}..{n-1}`.
pub fn template_placeholders(template: &str) -> Option<usize> {
    let mut seen = BTreeSet::new();
    let bytes = template.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            let end = template[i..].find('}')? + i;
            let idx: usize = template[i + 1..end].parse().ok()?;
            seen.insert(idx);
            i = end + 1;
        } else {
            i += 1;
        }
    }
    let n = seen.len();
    if (0..n).all(|k| seen.contains(&k)) {
        Some(n)
    } else {
        None
    }
}

/// Polarity of a dependency occurrence. `count=` dependencies are
/// non-monotone, so they are treated like negative edges for
/// stratification.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Polarity {
    Positive,
    Negative,
}

struct Checker<'a> {
    types: &'a TypeTable,
    decls: &'a BTreeMap<String, PredicateDecl>,
}

impl Checker<'_> {
    fn check_decl(&self, decl: &PredicateDecl) -> Result<Vec<(String, Polarity)>, TypeError> {
        for (_, ty) in &decl.params {
            if !self.types.contains_key(ty) {
                return Err(TypeError::UnknownType(ty.clone()));
            }
        }
        let mut scope: BTreeMap<String, String> = decl
            .params
            .iter()
            .map(|(v, t)| (v.clone(), t.clone()))
            .collect();
        let mut deps = Vec::new();
        self.check_expr(&decl.body, &mut scope, Polarity::Positive, &mut deps)?;
        Ok(deps)
    }

    fn check_expr(
        &self,
        expr: &Expr,
        scope: &mut BTreeMap<String, String>,
        polarity: Polarity,
        deps: &mut Vec<(String, Polarity)>,
    ) -> Result<(), TypeError> {
        match expr {
            Expr::Compare { lhs, rhs, .. } => {
                self.check_num(lhs, scope)?;
                self.check_num(rhs, scope)
            }
            Expr::Assert { template, args } => {
                match template_placeholders(template) {
                    Some(n) if n == args.len() => Ok(()),
                    _ => Err(TypeError::TemplateArity {
                        template: template.clone(),
                        placeholders: template_placeholders(template).unwrap_or(usize::MAX),
                        args: args.len(),
                    }),
                }
            }
            Expr::And(subs) | Expr::Or(subs) => {
                for s in subs {
                    self.check_expr(s, scope, polarity, deps)?;
                }
                Ok(())
            }
            Expr::Not(sub) => {
                let flipped = match polarity {
                    Polarity::Positive => Polarity::Negative,
                    Polarity::Negative => Polarity::Positive,
                };
                self.check_expr(sub, scope, flipped, deps)
            }
            Expr::Holds { predicate, args } => {
                let target = self
                    .decls
                    .get(predicate)
                    .ok_or_else(|| TypeError::UnknownPredicate(predicate.clone()))?;
                if target.arity() != args.len() {
                    return Err(TypeError::ArityMismatch {
                        predicate: predicate.clone(),
                        expected: target.arity(),
                        got: args.len(),
                    });
                }
                for (i, (arg, (_, want))) in args.iter().zip(&target.params).enumerate() {
                    let got = scope
                        .get(arg)
                        .ok_or_else(|| TypeError::UnknownPredicate(arg.clone()))?;
                    if got != want {
                        return Err(TypeError::ArgTypeMismatch {
                            predicate: predicate.clone(),
                            position: i,
                            expected: want.clone(),
                            got: got.clone(),
                        });
                    }
                }
                deps.push((predicate.clone(), polarity));
                Ok(())
            }
            Expr::Exists { var, ty, body } | Expr::Forall { var, ty, body } => {
                if !self.types.contains_key(ty) {
                    return Err(TypeError::UnknownType(ty.clone()));
                }
                let shadowed = scope.insert(var.clone(), ty.clone());
                let r = self.check_expr(body, scope, polarity, deps);
                match shadowed {
                    Some(old) => {
                        scope.insert(var.clone(), old);
                    }
                    None => {
                        scope.remove(var);
                    }
                }
                r
            }
            Expr::CountEq(a, b) => {
                for spec in [a, b] {
                    let target = self
                        .decls
                        .get(&spec.predicate)
                        .ok_or_else(|| TypeError::UnknownPredicate(spec.predicate.clone()))?;
                    if target.arity() != spec.args.len() {
                        return Err(TypeError::ArityMismatch {
                            predicate: spec.predicate.clone(),
                            expected: target.arity(),
                            got: spec.args.len(),
                        });
                    }
                    for (i, (arg, (_, want))) in spec.args.iter().zip(&target.params).enumerate() {
                        if let CountArg::Var(v) = arg {
                            let got = scope
                                .get(v)
                                .ok_or_else(|| TypeError::UnknownPredicate(v.clone()))?;
                            if got != want {
                                return Err(TypeError::ArgTypeMismatch {
                                    predicate: spec.predicate.clone(),
                                    position: i,
                                    expected: want.clone(),
                                    got: got.clone(),
                                });
                            }
                        }
                    }
                    deps.push((spec.predicate.clone(), Polarity::Negative));
                }
                Ok(())
            }
        }
    }

    fn check_num(
        &self,
        num: &NumExpr,
        scope: &BTreeMap<String, String>,
    ) -> Result<(), TypeError> {
        if let NumExpr::Feature { var, feature } = num {
            let ty_name = scope
                .get(var)
                .ok_or_else(|| TypeError::UnknownType(var.clone()))?;
            let ty = self
                .types
                .get(ty_name)
                .ok_or_else(|| TypeError::UnknownType(ty_name.clone()))?;
            if ty.feature_index(feature).is_none() {
                return Err(TypeError::UnknownFeature {
                    ty: ty_name.clone(),
                    feature: feature.clone(),
                });
            }
        }
        Ok(())
    }
}

/// Resolves all references, verifies stratified negation among derived
/// declarations, and assembles the table.
pub fn typecheck(
    decls: &[PredicateDecl],
    types: &TypeTable,
    skills: &BTreeMap<String, SkillSpec>,
) -> Result<PredicateTable, TypeError> {
    let by_name: BTreeMap<String, PredicateDecl> = decls
        .iter()
        .map(|d| (d.name.clone(), d.clone()))
        .collect();
    for d in decls {
        if skills.contains_key(&d.name) {
            return Err(TypeError::SkillNameCollision(d.name.clone()));
        }
    }
    let checker = Checker {
        types,
        decls: &by_name,
    };

    // deps[p] = referenced predicates; neg_deps only among derived decls.
    let mut deps: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut pos_edges: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut neg_edges: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for decl in by_name.values() {
        let refs = checker.check_decl(decl)?;
        if decl.kind == PredicateKind::Derived {
            let mut all = BTreeSet::new();
            for (target, polarity) in refs {
                all.insert(target.clone());
                if by_name
                    .get(&target)
                    .map(|t| t.kind == PredicateKind::Derived)
                    .unwrap_or(false)
                {
                    match polarity {
                        Polarity::Positive => {
                            pos_edges.entry(decl.name.clone()).or_default().insert(target);
                        }
                        Polarity::Negative => {
                            neg_edges.entry(decl.name.clone()).or_default().insert(target);
                        }
                    }
                }
            }
            deps.insert(decl.name.clone(), all);
        }
    }

    let strata = stratify(&by_name, &pos_edges, &neg_edges)?;
    Ok(PredicateTable::from_parts(by_name, strata, deps))
}

/// Assigns each derived predicate a stratum: `stratum(p) >= stratum(q)` for
/// positive dependencies and `stratum(p) > stratum(q)` for negative ones.
/// A fixpoint that fails to settle within |derived| rounds has a negative
/// cycle.
fn stratify(
    decls: &BTreeMap<String, PredicateDecl>,
    pos: &BTreeMap<String, BTreeSet<String>>,
    neg: &BTreeMap<String, BTreeSet<String>>,
) -> Result<Vec<Vec<String>>, TypeError> {
    let derived: Vec<&String> = decls
        .iter()
        .filter(|(_, d)| d.kind == PredicateKind::Derived)
        .map(|(n, _)| n)
        .collect();
    let mut stratum: BTreeMap<&String, usize> = derived.iter().map(|n| (*n, 0usize)).collect();
    let rounds = derived.len() + 1;
    for round in 0..=rounds {
        let mut changed = false;
        for name in &derived {
            let mut s = stratum[name];
            for dep in pos.get(*name).into_iter().flatten() {
                if let Some(&ds) = stratum.get(dep) {
                    s = s.max(ds);
                }
            }
            for dep in neg.get(*name).into_iter().flatten() {
                if let Some(&ds) = stratum.get(dep) {
                    s = s.max(ds + 1);
                }
            }
            if s != stratum[name] {
                stratum.insert(name, s);
                changed = true;
            }
        }
        if !changed {
            break;
        }
        if round == rounds {
            // Still rising after |derived| rounds: a negation cycle exists.
            let cycle: Vec<String> = derived
                .iter()
                .filter(|n| stratum[**n] >= rounds)
                .map(|n| (*n).clone())
                .collect();
            return Err(TypeError::UnstratifiedNegation(cycle));
        }
    }
    let max = stratum.values().copied().max().unwrap_or(0);
    let mut strata = vec![Vec::new(); if derived.is_empty() { 0 } else { max + 1 }];
    for name in derived {
        strata[stratum[&name]].push(name.clone());
    }
    Ok(strata)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::ObjectType;
    use crate::dsl::parse;

    fn types() -> TypeTable {
        let mut t = TypeTable::new();
        t.insert(
            "robot".into(),
            ObjectType::new("robot", vec![("fingers", (0.0, 1.0))]),
        );
        t.insert("block".into(), ObjectType::new("block", vec![]));
        t.insert("plate".into(), ObjectType::new("plate", vec![]));
        t
    }

    fn check(src: &str) -> Result<PredicateTable, TypeError> {
        typecheck(&parse(src).unwrap(), &types(), &BTreeMap::new())
    }

    #[test]
    fn accepts_recursive_positive_predicate() {
        let table = check(
            "(primitive DirectlyOn (?a block ?b block) (assert \"{0} on {1}\" ?a ?b))\n\
             (primitive DirectlyOnPlate (?a block ?p plate) (assert \"{0} on plate {1}\" ?a ?p))\n\
             (derived OnPlate (?b block ?p plate)\n\
               (or (holds DirectlyOnPlate ?b ?p)\n\
                   (exists (?o block) (and (holds DirectlyOn ?b ?o) (holds OnPlate ?o ?p)))))",
        )
        .unwrap();
        assert_eq!(table.strata().len(), 1);
    }

    #[test]
    fn rejects_negative_self_cycle() {
        let e = check("(derived P (?b block) (not (holds P ?b)))").unwrap_err();
        match e {
            TypeError::UnstratifiedNegation(cycle) => assert!(cycle.contains(&"P".to_string())),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_feature() {
        let e = check("(primitive P (?b block) (> (feat ?b mass) 0.5))").unwrap_err();
        assert_eq!(
            e,
            TypeError::UnknownFeature {
                ty: "block".into(),
                feature: "mass".into()
            }
        );
    }

    #[test]
    fn rejects_unknown_predicate() {
        let e = check("(derived P (?b block) (holds Q ?b))").unwrap_err();
        assert_eq!(e, TypeError::UnknownPredicate("Q".into()));
    }

    #[test]
    fn rejects_unknown_type() {
        let e = check("(primitive P (?b gizmo) (> 1 0))").unwrap_err();
        assert_eq!(e, TypeError::UnknownType("gizmo".into()));
    }

    #[test]
    fn count_eq_forces_a_higher_stratum() {
        let table = check(
            "(primitive DirectlyOnPlate (?a block ?p plate) (assert \"{0} on {1}\" ?a ?p))\n\
             (derived OnPlate (?b block ?p plate) (holds DirectlyOnPlate ?b ?p))\n\
             (derived Even (?p plate ?q plate) (count= (OnPlate _ ?p) (OnPlate _ ?q)))",
        )
        .unwrap();
        assert_eq!(table.strata().len(), 2);
        assert_eq!(table.strata()[0], vec!["OnPlate".to_string()]);
        assert_eq!(table.strata()[1], vec!["Even".to_string()]);
    }

    #[test]
    fn rejects_bad_template_arity() {
        let e = check("(primitive P (?a block ?b block) (assert \"{0} on\" ?a ?b))").unwrap_err();
        assert!(matches!(e, TypeError::TemplateArity { .. }));
    }

    #[test]
    fn dependency_closure_tracks_references() {
        let table = check(
            "(primitive DirectlyOnPlate (?a block ?p plate) (assert \"{0} on {1}\" ?a ?p))\n\
             (derived OnPlate (?b block ?p plate) (holds DirectlyOnPlate ?b ?p))\n\
             (derived Even (?p plate ?q plate) (count= (OnPlate _ ?p) (OnPlate _ ?q)))",
        )
        .unwrap();
        let mut want = BTreeSet::new();
        want.insert("Even".to_string());
        let closure = table.dependency_closure(&want);
        assert!(closure.contains("OnPlate"));
        assert!(closure.contains("DirectlyOnPlate"));
    }
}
