//! S-expression reader and declaration parser for the predicate language.

use super::{CmpOp, CountArg, CountSpec, Expr, NumExpr, PredicateDecl, PredicateKind};
use std::collections::BTreeSet;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("parse error at {line}:{col}: {msg}")]
pub struct ParseError {
    pub line: u32,
    pub col: u32,
    pub msg: String,
}

fn err<T>(line: u32, col: u32, msg: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError {
        line,
        col,
        msg: msg.into(),
    })
}

#[derive(Debug, Clone, PartialEq)]
enum Sexp {
    Sym(String, u32, u32),
    Num(f64, u32, u32),
    Str(String, u32, u32),
    List(Vec<Sexp>, u32, u32),
}

impl Sexp {
    fn pos(&self) -> (u32, u32) {
        match self {
            Sexp::Sym(_, l, c) | Sexp::Num(_, l, c) | Sexp::Str(_, l, c) | Sexp::List(_, l, c) => {
                (*l, *c)
            }
        }
    }

    fn as_sym(&self) -> Option<&str> {
        match self {
            Sexp::Sym(s, _, _) => Some(s),
            _ => None,
        }
    }
}

struct Reader<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: u32,
    col: u32,
}

impl<'a> Reader<'a> {
    fn new(text: &'a str) -> Self {
        Reader {
            chars: text.chars().peekable(),
            line: 1,
            col: 1,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn skip_ws(&mut self) {
        loop {
            match self.chars.peek() {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some(';') => {
                    while let Some(c) = self.bump() {
                        if c == '\n' {
                            break;
                        }
                    }
                }
                _ => return,
            }
        }
    }

    fn read_all(&mut self) -> Result<Vec<Sexp>, ParseError> {
        let mut out = Vec::new();
        loop {
            self.skip_ws();
            if self.chars.peek().is_none() {
                return Ok(out);
            }
            out.push(self.read()?);
        }
    }

    fn read(&mut self) -> Result<Sexp, ParseError> {
        self.skip_ws();
        let (line, col) = (self.line, self.col);
        match self.chars.peek() {
            None => err(line, col, "unexpected end of input"),
            Some('(') => {
                self.bump();
                let mut items = Vec::new();
                loop {
                    self.skip_ws();
                    match self.chars.peek() {
                        Some(')') => {
                            self.bump();
                            return Ok(Sexp::List(items, line, col));
                        }
                        None => return err(line, col, "unclosed '('"),
                        _ => items.push(self.read()?),
                    }
                }
            }
            Some(')') => err(line, col, "unexpected ')'"),
            Some('"') => {
                self.bump();
                let mut s = String::new();
                loop {
                    match self.bump() {
                        None => return err(line, col, "unterminated string"),
                        Some('"') => return Ok(Sexp::Str(s, line, col)),
                        Some('\\') => match self.bump() {
                            Some('n') => s.push('\n'),
                            Some(c) => s.push(c),
                            None => return err(line, col, "unterminated escape"),
                        },
                        Some(c) => s.push(c),
                    }
                }
            }
            Some(_) => {
                let mut tok = String::new();
                while let Some(&c) = self.chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == ';' || c == '"' {
                        break;
                    }
                    tok.push(c);
                    self.bump();
                }
                if let Ok(n) = tok.parse::<f64>() {
                    Ok(Sexp::Num(n, line, col))
                } else {
                    Ok(Sexp::Sym(tok, line, col))
                }
            }
        }
    }
}

/// Parses a source file into declarations, checking well-formedness rules
/// that need no type tables: variables bound before use, bodies closed over
/// parameters, primitive/derived construct restrictions, and duplicate
/// names.
pub fn parse(text: &str) -> Result<Vec<PredicateDecl>, ParseError> {
    let sexps = Reader::new(text).read_all()?;
    let mut decls = Vec::new();
    let mut seen = BTreeSet::new();
    for sexp in &sexps {
        let decl = parse_decl(sexp)?;
        if !seen.insert(decl.name.clone()) {
            let (l, c) = sexp.pos();
            return err(l, c, format!("duplicate declaration of '{}'", decl.name));
        }
        decls.push(decl);
    }
    Ok(decls)
}

fn parse_decl(sexp: &Sexp) -> Result<PredicateDecl, ParseError> {
    let (line, col) = sexp.pos();
    let items = match sexp {
        Sexp::List(items, _, _) => items,
        _ => return err(line, col, "expected a declaration list"),
    };
    if items.len() != 4 {
        return err(
            line,
            col,
            "expected (primitive|derived Name (params) body)",
        );
    }
    let kind = match items[0].as_sym() {
        Some("primitive") => PredicateKind::Primitive,
        Some("derived") => PredicateKind::Derived,
        _ => return err(line, col, "expected 'primitive' or 'derived'"),
    };
    let name = match items[1].as_sym() {
        Some(s) => s.to_string(),
        None => return err(line, col, "expected predicate name"),
    };
    let params = parse_params(&items[2])?;
    let mut bound: BTreeSet<String> = params.iter().map(|(v, _)| v.clone()).collect();
    if bound.len() != params.len() {
        return err(line, col, "duplicate parameter variable");
    }
    let body = parse_expr(&items[3], kind, &mut bound)?;
    Ok(PredicateDecl {
        name,
        params,
        kind,
        body,
    })
}

/// Accepts both flat `(?a ta ?b tb)` and nested `((?a ta) (?b tb))` forms.
fn parse_params(sexp: &Sexp) -> Result<Vec<(String, String)>, ParseError> {
    let (line, col) = sexp.pos();
    let items = match sexp {
        Sexp::List(items, _, _) => items,
        _ => return err(line, col, "expected parameter list"),
    };
    let mut params = Vec::new();
    if items.iter().all(|i| matches!(i, Sexp::List(..))) && !items.is_empty() {
        for item in items {
            if let Sexp::List(pair, l, c) = item {
                match (pair.first().and_then(Sexp::as_sym), pair.get(1).and_then(Sexp::as_sym)) {
                    (Some(v), Some(t)) if pair.len() == 2 && v.starts_with('?') => {
                        params.push((v.to_string(), t.to_string()));
                    }
                    _ => return err(*l, *c, "expected (?var type)"),
                }
            }
        }
        return Ok(params);
    }
    if items.len() % 2 != 0 {
        return err(line, col, "parameter list must pair variables with types");
    }
    for pair in items.chunks(2) {
        match (pair[0].as_sym(), pair[1].as_sym()) {
            (Some(v), Some(t)) if v.starts_with('?') => {
                params.push((v.to_string(), t.to_string()));
            }
            _ => return err(line, col, "expected ?var followed by a type name"),
        }
    }
    Ok(params)
}

fn expect_var(sexp: &Sexp, bound: &BTreeSet<String>) -> Result<String, ParseError> {
    let (l, c) = sexp.pos();
    match sexp.as_sym() {
        Some(v) if v.starts_with('?') => {
            if bound.contains(v) {
                Ok(v.to_string())
            } else {
                err(l, c, format!("unbound variable '{}'", v))
            }
        }
        _ => err(l, c, "expected a variable"),
    }
}

fn parse_num(sexp: &Sexp, kind: PredicateKind, bound: &BTreeSet<String>) -> Result<NumExpr, ParseError> {
    let (l, c) = sexp.pos();
    match sexp {
        Sexp::Num(n, _, _) => Ok(NumExpr::Const(*n)),
        Sexp::List(items, _, _)
            if items.first().and_then(Sexp::as_sym) == Some("feat") && items.len() == 3 =>
        {
            if kind == PredicateKind::Derived {
                return err(l, c, "derived predicates may not access features");
            }
            let var = expect_var(&items[1], bound)?;
            let feature = items[2]
                .as_sym()
                .ok_or_else(|| ParseError {
                    line: l,
                    col: c,
                    msg: "expected feature name".into(),
                })?
                .to_string();
            Ok(NumExpr::Feature { var, feature })
        }
        _ => err(l, c, "expected a number or (feat ?var name)"),
    }
}

fn parse_count(sexp: &Sexp, bound: &BTreeSet<String>) -> Result<CountSpec, ParseError> {
    let (l, c) = sexp.pos();
    let items = match sexp {
        Sexp::List(items, _, _) if !items.is_empty() => items,
        _ => return err(l, c, "expected (Predicate args...)"),
    };
    let predicate = items[0]
        .as_sym()
        .ok_or_else(|| ParseError {
            line: l,
            col: c,
            msg: "expected predicate name".into(),
        })?
        .to_string();
    let mut args = Vec::new();
    let mut counted = 0;
    for item in &items[1..] {
        match item.as_sym() {
            Some("_") => {
                counted += 1;
                args.push(CountArg::Counted);
            }
            Some(v) if v.starts_with('?') => {
                let v = expect_var(item, bound)?;
                args.push(CountArg::Var(v));
            }
            _ => return err(l, c, "count argument must be '_' or a variable"),
        }
    }
    if counted != 1 {
        return err(l, c, "count spec needs exactly one counted position '_'");
    }
    Ok(CountSpec { predicate, args })
}

fn parse_expr(
    sexp: &Sexp,
    kind: PredicateKind,
    bound: &mut BTreeSet<String>,
) -> Result<Expr, ParseError> {
    let (l, c) = sexp.pos();
    let items = match sexp {
        Sexp::List(items, _, _) if !items.is_empty() => items,
        _ => return err(l, c, "expected an expression"),
    };
    let head = items[0].as_sym().unwrap_or("");
    match head {
        "<" | "<=" | "=" | ">=" | ">" => {
            if items.len() != 3 {
                return err(l, c, format!("'{}' takes two operands", head));
            }
            let op = match head {
                "<" => CmpOp::Lt,
                "<=" => CmpOp::Le,
                "=" => CmpOp::Eq,
                ">=" => CmpOp::Ge,
                _ => CmpOp::Gt,
            };
            if kind == PredicateKind::Derived {
                return err(l, c, "derived predicates may not compare features");
            }
            Ok(Expr::Compare {
                op,
                lhs: parse_num(&items[1], kind, bound)?,
                rhs: parse_num(&items[2], kind, bound)?,
            })
        }
        "assert" => {
            if kind == PredicateKind::Derived {
                return err(l, c, "derived predicates may not use oracle assertions");
            }
            let template = match items.get(1) {
                Some(Sexp::Str(s, _, _)) => s.clone(),
                _ => return err(l, c, "assert needs a template string"),
            };
            let mut args = Vec::new();
            for item in &items[2..] {
                args.push(expect_var(item, bound)?);
            }
            Ok(Expr::Assert { template, args })
        }
        "and" | "or" => {
            let mut subs = Vec::new();
            for item in &items[1..] {
                subs.push(parse_expr(item, kind, bound)?);
            }
            if subs.is_empty() {
                return err(l, c, format!("'{}' needs at least one operand", head));
            }
            Ok(if head == "and" {
                Expr::And(subs)
            } else {
                Expr::Or(subs)
            })
        }
        "not" => {
            if items.len() != 2 {
                return err(l, c, "'not' takes one operand");
            }
            Ok(Expr::Not(Box::new(parse_expr(&items[1], kind, bound)?)))
        }
        "holds" => {
            if kind == PredicateKind::Primitive {
                return err(l, c, "primitive predicates may not reference other predicates");
            }
            let predicate = match items.get(1).and_then(Sexp::as_sym) {
                Some(p) => p.to_string(),
                None => return err(l, c, "holds needs a predicate name"),
            };
            let mut args = Vec::new();
            for item in &items[2..] {
                args.push(expect_var(item, bound)?);
            }
            Ok(Expr::Holds { predicate, args })
        }
        "exists" | "forall" => {
            if items.len() != 3 {
                return err(l, c, format!("'{}' takes (?var type) and a body", head));
            }
            let (var, ty) = match &items[1] {
                Sexp::List(pair, ..) if pair.len() == 2 => {
                    match (pair[0].as_sym(), pair[1].as_sym()) {
                        (Some(v), Some(t)) if v.starts_with('?') => {
                            (v.to_string(), t.to_string())
                        }
                        _ => return err(l, c, "expected (?var type)"),
                    }
                }
                _ => return err(l, c, "expected (?var type)"),
            };
            let added = bound.insert(var.clone());
            let body = parse_expr(&items[2], kind, bound)?;
            if added {
                bound.remove(&var);
            }
            let body = Box::new(body);
            Ok(if head == "exists" {
                Expr::Exists { var, ty, body }
            } else {
                Expr::Forall { var, ty, body }
            })
        }
        "count=" => {
            if kind == PredicateKind::Primitive {
                return err(l, c, "primitive predicates may not count atoms");
            }
            if items.len() != 3 {
                return err(l, c, "'count=' takes two count specs");
            }
            Ok(Expr::CountEq(
                parse_count(&items[1], bound)?,
                parse_count(&items[2], bound)?,
            ))
        }
        other => err(l, c, format!("unknown construct '{}'", other)),
    }
}
