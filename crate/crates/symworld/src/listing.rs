//! Text listing format for learned models: one block per operator with
//! Parameters / Preconditions / Add Effects / Delete Effects / Ignore
//! Effects / Option Spec fields. Round-trips through [`parse_operators`].

use crate::model::{LiftedAtom, Operator, Variable};
use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt::Write as _;

/// Renames parameters to `?x0..?xN`, ordered by (type, occurrence
/// signature, original index), so structurally equal operators print
/// identically regardless of how the learner named its variables.
pub fn canonicalize(op: &Operator) -> Operator {
    let n = op.params.len();
    let mut signature = vec![String::new(); n];
    let mut record = |tag: &str, atoms: &BTreeSet<LiftedAtom>, signature: &mut Vec<String>| {
        for atom in atoms {
            for (pos, &p) in atom.params.iter().enumerate() {
                let _ = write!(signature[p], "{}:{}:{};", tag, atom.predicate, pos);
            }
        }
    };
    record("p", &op.pre, &mut signature);
    record("a", &op.add, &mut signature);
    record("d", &op.del, &mut signature);
    for (pos, &p) in op.skill_args.iter().enumerate() {
        let _ = write!(signature[p], "s:{};", pos);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        op.params[a]
            .ty
            .cmp(&op.params[b].ty)
            .then_with(|| signature[a].cmp(&signature[b]))
            .then_with(|| a.cmp(&b))
    });
    // old index -> new index
    let mut remap = vec![0usize; n];
    for (new_idx, &old_idx) in order.iter().enumerate() {
        remap[old_idx] = new_idx;
    }
    let map_atoms = |atoms: &BTreeSet<LiftedAtom>| {
        atoms
            .iter()
            .map(|a| LiftedAtom {
                predicate: a.predicate.clone(),
                params: a.params.iter().map(|&p| remap[p]).collect(),
            })
            .collect::<BTreeSet<_>>()
    };
    Operator {
        name: op.name.clone(),
        params: order
            .iter()
            .enumerate()
            .map(|(new_idx, &old_idx)| Variable {
                name: format!("?x{}", new_idx),
                ty: op.params[old_idx].ty.clone(),
            })
            .collect(),
        skill_name: op.skill_name.clone(),
        skill_args: op.skill_args.iter().map(|&p| remap[p]).collect(),
        pre: map_atoms(&op.pre),
        add: map_atoms(&op.add),
        del: map_atoms(&op.del),
        ignore: op.ignore.clone(),
        allow_shared_binding: op.allow_shared_binding,
    }
}

fn fmt_atom_list(atoms: &BTreeSet<LiftedAtom>, params: &[Variable]) -> String {
    let mut items: Vec<String> = atoms
        .iter()
        .map(|a| a.display(params).to_string())
        .collect();
    items.sort();
    format!("[{}]", items.join(", "))
}

pub fn format_operator(op: &Operator) -> String {
    let op = canonicalize(op);
    let params: Vec<String> = op
        .params
        .iter()
        .map(|v| format!("{}:{}", v.name, v.ty))
        .collect();
    let skill_args: Vec<String> = op
        .skill_args
        .iter()
        .map(|&i| format!("{}:{}", op.params[i].name, op.params[i].ty))
        .collect();
    let mut ignore: Vec<&String> = op.ignore.iter().collect();
    ignore.sort();
    format!(
        "{}:\n    Parameters: [{}]\n    Preconditions: {}\n    Add Effects: {}\n    Delete Effects: {}\n    Ignore Effects: [{}]\n    Option Spec: {}({})\n",
        op.name,
        params.join(", "),
        fmt_atom_list(&op.pre, &op.params),
        fmt_atom_list(&op.add, &op.params),
        fmt_atom_list(&op.del, &op.params),
        ignore
            .iter()
            .map(|s| s.as_str())
            .collect::<Vec<_>>()
            .join(", "),
        op.skill_name,
        skill_args.join(", ")
    )
}

pub fn format_operators(ops: &[Operator]) -> String {
    ops.iter().map(format_operator).collect::<Vec<_>>().join("")
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("listing parse error at line {line}: {msg}")]
pub struct ListingError {
    pub line: usize,
    pub msg: String,
}

fn err<T>(line: usize, msg: impl Into<String>) -> Result<T, ListingError> {
    Err(ListingError {
        line,
        msg: msg.into(),
    })
}

/// Splits `"A(?x:t, ?y:t), B(?z:t)"` on top-level commas.
fn split_items(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0;
    let mut current = String::new();
    for c in s.chars() {
        match c {
            '(' => {
                depth += 1;
                current.push(c);
            }
            ')' => {
                depth -= 1;
                current.push(c);
            }
            ',' if depth == 0 => {
                out.push(current.trim().to_string());
                current.clear();
            }
            _ => current.push(c),
        }
    }
    if !current.trim().is_empty() {
        out.push(current.trim().to_string());
    }
    out
}

fn parse_typed_var(s: &str, line: usize) -> Result<Variable, ListingError> {
    match s.split_once(':') {
        Some((name, ty)) if name.starts_with('?') => Ok(Variable::new(name.trim(), ty.trim())),
        _ => err(line, format!("expected ?var:type, got '{}'", s)),
    }
}

fn parse_atom(
    s: &str,
    params: &BTreeMap<String, usize>,
    line: usize,
) -> Result<LiftedAtom, ListingError> {
    let open = match s.find('(') {
        Some(i) => i,
        None => return err(line, format!("expected Pred(args), got '{}'", s)),
    };
    if !s.ends_with(')') {
        return err(line, format!("unterminated atom '{}'", s));
    }
    let predicate = s[..open].trim().to_string();
    let inner = &s[open + 1..s.len() - 1];
    let mut indices = Vec::new();
    for item in split_items(inner) {
        let var = parse_typed_var(&item, line)?;
        match params.get(&var.name) {
            Some(&i) => indices.push(i),
            None => return err(line, format!("unknown parameter '{}'", var.name)),
        }
    }
    Ok(LiftedAtom {
        predicate,
        params: indices,
    })
}

fn bracket_contents<'a>(s: &'a str, label: &str, line: usize) -> Result<&'a str, ListingError> {
    let rest = s.trim();
    if !rest.starts_with('[') || !rest.ends_with(']') {
        return err(line, format!("{} must be a [...] list", label));
    }
    Ok(&rest[1..rest.len() - 1])
}

/// Parses a listing produced by [`format_operators`] (or hand-written in
/// the same shape) back into operators.
pub fn parse_operators(text: &str) -> Result<Vec<Operator>, ListingError> {
    let mut ops = Vec::new();
    let mut lines = text.lines().enumerate().peekable();
    while let Some((ln, raw)) = lines.next() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if !line.ends_with(':') || line.contains("Effects") {
            return err(ln + 1, format!("expected operator header, got '{}'", line));
        }
        let name = line[..line.len() - 1].to_string();
        let mut fields: BTreeMap<String, String> = BTreeMap::new();
        while let Some(&(_, peek)) = lines.peek() {
            let trimmed = peek.trim();
            if trimmed.is_empty() || !trimmed.contains(':') || trimmed.ends_with(':') {
                break;
            }
            let (_, row) = lines.next().unwrap();
            let (key, value) = row.trim().split_once(':').unwrap();
            fields.insert(key.trim().to_string(), value.trim().to_string());
        }
        let get = |key: &str| -> Result<&String, ListingError> {
            fields
                .get(key)
                .ok_or_else(|| ListingError {
                    line: ln + 1,
                    msg: format!("operator '{}' is missing '{}'", name, key),
                })
        };
        let params_src = bracket_contents(get("Parameters")?, "Parameters", ln + 1)?;
        let mut params = Vec::new();
        let mut param_index = BTreeMap::new();
        for item in split_items(params_src) {
            let v = parse_typed_var(&item, ln + 1)?;
            param_index.insert(v.name.clone(), params.len());
            params.push(v);
        }
        let parse_set = |key: &str| -> Result<BTreeSet<LiftedAtom>, ListingError> {
            let src = bracket_contents(get(key)?, key, ln + 1)?;
            split_items(src)
                .iter()
                .map(|item| parse_atom(item, &param_index, ln + 1))
                .collect()
        };
        let pre = parse_set("Preconditions")?;
        let add = parse_set("Add Effects")?;
        let del = parse_set("Delete Effects")?;
        let ignore_src = bracket_contents(get("Ignore Effects")?, "Ignore Effects", ln + 1)?;
        let ignore: BTreeSet<String> = split_items(ignore_src).into_iter().collect();
        let option = get("Option Spec")?;
        let open = option.find('(').ok_or_else(|| ListingError {
            line: ln + 1,
            msg: "Option Spec must be Skill(args)".into(),
        })?;
        if !option.ends_with(')') {
            return err(ln + 1, "unterminated Option Spec");
        }
        let skill_name = option[..open].trim().to_string();
        let mut skill_args = Vec::new();
        for item in split_items(&option[open + 1..option.len() - 1]) {
            let v = parse_typed_var(&item, ln + 1)?;
            match param_index.get(&v.name) {
                Some(&i) => skill_args.push(i),
                None => return err(ln + 1, format!("unknown skill argument '{}'", v.name)),
            }
        }
        ops.push(Operator {
            name,
            params,
            skill_name,
            skill_args,
            pre,
            add,
            del,
            ignore,
            allow_shared_binding: false,
        });
    }
    Ok(ops)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pick_op() -> Operator {
        Operator {
            name: "Pick-0".into(),
            params: vec![
                Variable::new("?robot", "robot"),
                Variable::new("?block", "block"),
            ],
            skill_name: "Pick".into(),
            skill_args: vec![1],
            pre: [LiftedAtom::new("GripperOpen", vec![0])].into(),
            add: [LiftedAtom::new("Holding", vec![0, 1])].into(),
            del: [LiftedAtom::new("GripperOpen", vec![0])].into(),
            ignore: BTreeSet::new(),
            allow_shared_binding: false,
        }
    }

    #[test]
    fn format_uses_canonical_parameter_names() {
        let text = format_operator(&pick_op());
        assert!(text.contains("Parameters: [?x0:block, ?x1:robot]"), "{text}");
        assert!(text.contains("Option Spec: Pick(?x0:block)"), "{text}");
        assert!(text.contains("Preconditions: [GripperOpen(?x1:robot)]"), "{text}");
    }

    #[test]
    fn round_trips_through_parse() {
        let ops = vec![pick_op()];
        let text = format_operators(&ops);
        let parsed = parse_operators(&text).unwrap();
        assert_eq!(parsed.len(), 1);
        assert!(parsed[0].isomorphic(&ops[0]));
        assert_eq!(format_operators(&parsed), text);
    }

    #[test]
    fn parses_hand_written_listing() {
        let text = "\
Op1:
    Parameters: [?x0:block, ?x1:robot, ?x2:target]
    Preconditions: [Holding(?x1:robot, ?x0:block)]
    Add Effects: [Covers(?x0:block, ?x2:target), GripperOpen(?x1:robot)]
    Delete Effects: [Holding(?x1:robot, ?x0:block)]
    Ignore Effects: []
    Option Spec: Place(?x0:block, ?x2:target)
";
        let ops = parse_operators(text).unwrap();
        assert_eq!(ops[0].name, "Op1");
        assert_eq!(ops[0].params.len(), 3);
        assert_eq!(ops[0].add.len(), 2);
        assert_eq!(ops[0].skill_args, vec![0, 2]);
    }

    #[test]
    fn reports_missing_fields() {
        let text = "Op1:\n    Parameters: [?x0:block]\n";
        let e = parse_operators(text).unwrap_err();
        assert!(e.msg.contains("Preconditions"), "{}", e.msg);
    }
}
