//! The predicate language: s-expression surface syntax, typed AST, and a
//! table of declarations with stratified derived predicates.
//!
//! Primitive predicates evaluate on the low-level state through features and
//! oracle assertions; derived predicates evaluate purely over ground-atom
//! sets of other predicates.

mod eval;
mod parser;
mod typecheck;

pub use eval::{eval_derived, eval_primitive};
pub use parser::{parse, ParseError};
pub use typecheck::{typecheck, TypeError};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::domain::ObjectType;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
}

impl CmpOp {
    pub fn token(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Eq => "=",
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NumExpr {
    Const(f64),
    /// `(feat ?var name)` — a feature of a bound object.
    Feature { var: String, feature: String },
}

/// One side of `count=`: a predicate with fixed arguments and exactly one
/// counted position (written `_`).
#[derive(Debug, Clone, PartialEq)]
pub struct CountSpec {
    pub predicate: String,
    pub args: Vec<CountArg>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CountArg {
    Var(String),
    Counted,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Compare {
        op: CmpOp,
        lhs: NumExpr,
        rhs: NumExpr,
    },
    /// `(assert "template" ?a ?b)` — a perceptual oracle assertion.
    Assert {
        template: String,
        args: Vec<String>,
    },
    And(Vec<Expr>),
    Or(Vec<Expr>),
    Not(Box<Expr>),
    /// `(holds P ?a ?b)` — truth of another predicate's ground atom.
    Holds {
        predicate: String,
        args: Vec<String>,
    },
    Exists {
        var: String,
        ty: String,
        body: Box<Expr>,
    },
    Forall {
        var: String,
        ty: String,
        body: Box<Expr>,
    },
    /// `(count= (P _ ?x) (Q _ ?y))` — equality of two ground-atom counts.
    CountEq(CountSpec, CountSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PredicateKind {
    Primitive,
    Derived,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredicateDecl {
    pub name: String,
    /// Ordered `(variable, type)` parameters.
    pub params: Vec<(String, String)>,
    pub kind: PredicateKind,
    pub body: Expr,
}

impl PredicateDecl {
    pub fn arity(&self) -> usize {
        self.params.len()
    }

    pub fn param_types(&self) -> Vec<&str> {
        self.params.iter().map(|(_, t)| t.as_str()).collect()
    }
}

/// Table of object types keyed by name.
pub type TypeTable = BTreeMap<String, ObjectType>;

/// A typechecked set of predicate declarations with derived predicates
/// arranged into strata: every predicate a stratum references negatively (or
/// through `count=`) lives in a strictly lower stratum.
#[derive(Debug, Clone, Default)]
pub struct PredicateTable {
    decls: BTreeMap<String, PredicateDecl>,
    strata: Vec<Vec<String>>,
    deps: BTreeMap<String, BTreeSet<String>>,
}

impl PredicateTable {
    pub(crate) fn from_parts(
        decls: BTreeMap<String, PredicateDecl>,
        strata: Vec<Vec<String>>,
        deps: BTreeMap<String, BTreeSet<String>>,
    ) -> Self {
        PredicateTable {
            decls,
            strata,
            deps,
        }
    }

    pub fn get(&self, name: &str) -> Option<&PredicateDecl> {
        self.decls.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.decls.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.decls.keys()
    }

    pub fn decls(&self) -> impl Iterator<Item = &PredicateDecl> {
        self.decls.values()
    }

    pub fn len(&self) -> usize {
        self.decls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decls.is_empty()
    }

    /// Derived predicate names in stratum order.
    pub fn strata(&self) -> &[Vec<String>] {
        &self.strata
    }

    /// Direct dependencies of a derived predicate.
    pub fn deps_of(&self, name: &str) -> Option<&BTreeSet<String>> {
        self.deps.get(name)
    }

    /// All predicates (primitive and derived) that `names` transitively
    /// depend on, including `names` themselves where declared.
    pub fn dependency_closure(&self, names: &BTreeSet<String>) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut stack: Vec<String> = names.iter().cloned().collect();
        while let Some(n) = stack.pop() {
            if !self.decls.contains_key(&n) || !out.insert(n.clone()) {
                continue;
            }
            if let Some(ds) = self.deps.get(&n) {
                stack.extend(ds.iter().cloned());
            }
        }
        out
    }

    /// Merges another table's declarations into a fresh typechecked table.
    pub fn merged_with(
        &self,
        extra: &[PredicateDecl],
        types: &TypeTable,
        skills: &BTreeMap<String, crate::domain::SkillSpec>,
    ) -> Result<PredicateTable, TypeError> {
        let mut all: Vec<PredicateDecl> = self.decls.values().cloned().collect();
        all.extend(extra.iter().cloned());
        typecheck(&all, types, skills)
    }
}

/// A predicate set Ψ: the full typechecked table plus the exposed subset.
/// Derived predicates evaluate over their dependency closure, but abstract
/// states only expose atoms of `exposed` predicates.
#[derive(Debug, Clone, Default)]
pub struct PredicateSet {
    pub table: PredicateTable,
    pub exposed: BTreeSet<String>,
}

impl PredicateSet {
    /// Exposes every declaration in the table.
    pub fn full(table: PredicateTable) -> Self {
        let exposed = table.names().cloned().collect();
        PredicateSet { table, exposed }
    }

    /// Exposes `names` together with their dependency closure, so the
    /// abstract transition model can track everything the derived
    /// predicates read.
    pub fn closed_over(table: PredicateTable, names: &BTreeSet<String>) -> Self {
        let exposed = table.dependency_closure(names);
        PredicateSet { table, exposed }
    }

    pub fn len(&self) -> usize {
        self.exposed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exposed.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.exposed.contains(name)
    }

    pub fn exposed_decls(&self) -> impl Iterator<Item = &PredicateDecl> {
        self.exposed.iter().filter_map(|n| self.table.get(n))
    }

    /// Exposed derived predicates grouped by stratum, lowest first.
    pub fn exposed_strata(&self) -> Vec<Vec<&PredicateDecl>> {
        self.table
            .strata()
            .iter()
            .map(|stratum| {
                stratum
                    .iter()
                    .filter(|n| self.exposed.contains(*n))
                    .filter_map(|n| self.table.get(n))
                    .collect::<Vec<_>>()
            })
            .filter(|s| !s.is_empty())
            .collect()
    }
}

fn pretty_num(n: &NumExpr, out: &mut String, rename: &BTreeMap<String, String>) {
    match n {
        NumExpr::Const(c) => {
            let _ = write!(out, "{}", c);
        }
        NumExpr::Feature { var, feature } => {
            let v = rename.get(var).cloned().unwrap_or_else(|| var.clone());
            let _ = write!(out, "(feat {} {})", v, feature);
        }
    }
}

fn pretty_expr(e: &Expr, out: &mut String, rename: &mut BTreeMap<String, String>, fresh: &mut u32) {
    match e {
        Expr::Compare { op, lhs, rhs } => {
            let _ = write!(out, "({} ", op.token());
            pretty_num(lhs, out, rename);
            out.push(' ');
            pretty_num(rhs, out, rename);
            out.push(')');
        }
        Expr::Assert { template, args } => {
            let _ = write!(out, "(assert {:?}", template);
            for a in args {
                let v = rename.get(a).cloned().unwrap_or_else(|| a.clone());
                let _ = write!(out, " {}", v);
            }
            out.push(')');
        }
        Expr::And(es) | Expr::Or(es) => {
            out.push_str(if matches!(e, Expr::And(_)) {
                "(and"
            } else {
                "(or"
            });
            for sub in es {
                out.push(' ');
                pretty_expr(sub, out, rename, fresh);
            }
            out.push(')');
        }
        Expr::Not(sub) => {
            out.push_str("(not ");
            pretty_expr(sub, out, rename, fresh);
            out.push(')');
        }
        Expr::Holds { predicate, args } => {
            let _ = write!(out, "(holds {}", predicate);
            for a in args {
                let v = rename.get(a).cloned().unwrap_or_else(|| a.clone());
                let _ = write!(out, " {}", v);
            }
            out.push(')');
        }
        Expr::Exists { var, ty, body } | Expr::Forall { var, ty, body } => {
            let kw = if matches!(e, Expr::Exists { .. }) {
                "exists"
            } else {
                "forall"
            };
            let fresh_name = if rename.is_empty() {
                var.clone()
            } else {
                let n = format!("?q{}", fresh);
                *fresh += 1;
                n
            };
            let shadowed = rename.insert(var.clone(), fresh_name.clone());
            let _ = write!(out, "({} ({} {}) ", kw, fresh_name, ty);
            pretty_expr(body, out, rename, fresh);
            out.push(')');
            match shadowed {
                Some(old) => {
                    rename.insert(var.clone(), old);
                }
                None => {
                    rename.remove(var);
                }
            }
        }
        Expr::CountEq(a, b) => {
            out.push_str("(count= ");
            pretty_count(a, out, rename);
            out.push(' ');
            pretty_count(b, out, rename);
            out.push(')');
        }
    }
}

fn pretty_count(c: &CountSpec, out: &mut String, rename: &BTreeMap<String, String>) {
    let _ = write!(out, "({}", c.predicate);
    for a in &c.args {
        match a {
            CountArg::Counted => out.push_str(" _"),
            CountArg::Var(v) => {
                let v = rename.get(v).cloned().unwrap_or_else(|| v.clone());
                let _ = write!(out, " {}", v);
            }
        }
    }
    out.push(')');
}

/// Canonical textual form of a declaration: one line per decl, parameters
/// flattened.
pub fn pretty_decl(decl: &PredicateDecl) -> String {
    let kw = match decl.kind {
        PredicateKind::Primitive => "primitive",
        PredicateKind::Derived => "derived",
    };
    let params: Vec<String> = decl
        .params
        .iter()
        .map(|(v, t)| format!("{} {}", v, t))
        .collect();
    let mut body = String::new();
    let mut rename = BTreeMap::new();
    let mut fresh = 0;
    pretty_expr(&decl.body, &mut body, &mut rename, &mut fresh);
    format!("({} {} ({}) {})", kw, decl.name, params.join(" "), body)
}

pub fn pretty_decls(decls: &[PredicateDecl]) -> String {
    decls
        .iter()
        .map(pretty_decl)
        .collect::<Vec<_>>()
        .join("\n")
}

/// Alpha-equivalence key for a declaration body: parameters renamed
/// positionally and quantifier variables renamed by order of introduction.
/// Two decls with equal keys differ at most in variable names.
pub fn canonical_key(decl: &PredicateDecl) -> String {
    let mut rename: BTreeMap<String, String> = BTreeMap::new();
    for (i, (v, _)) in decl.params.iter().enumerate() {
        rename.insert(v.clone(), format!("?p{}", i));
    }
    let types: Vec<String> = decl.params.iter().map(|(_, t)| t.clone()).collect();
    let mut body = String::new();
    let mut fresh = 0;
    pretty_expr(&decl.body, &mut body, &mut rename, &mut fresh);
    format!(
        "{:?} ({}) {}",
        decl.kind,
        types.join(" "),
        body
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_key_ignores_variable_names() {
        let a = parse("(primitive P (?r robot) (> (feat ?r fingers) 0.5))").unwrap();
        let b = parse("(primitive Q (?z robot) (> (feat ?z fingers) 0.5))").unwrap();
        assert_eq!(canonical_key(&a[0]), canonical_key(&b[0]));
    }

    #[test]
    fn canonical_key_distinguishes_bodies() {
        let a = parse("(primitive P (?r robot) (> (feat ?r fingers) 0.5))").unwrap();
        let b = parse("(primitive P (?r robot) (< (feat ?r fingers) 0.5))").unwrap();
        assert_ne!(canonical_key(&a[0]), canonical_key(&b[0]));
    }
}
