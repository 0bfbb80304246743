//! Propositional expressions shared by cross-tree constraints, transition
//! guards and presence conditions.
//!
//! The serialized form is an expression tree of `{op, args, name}` objects.
//! `requires` and `excludes` are accepted on input and desugared into
//! `implies` and `not(and(..))`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

/// A boolean expression over named atoms (feature ids or guard variables).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "ExprDoc", into = "ExprDoc")]
pub enum Expr {
    Const(bool),
    Var(String),
    Not(Box<Expr>),
    And(Vec<Expr>),
    Or(Vec<Expr>),
    Implies(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(name: impl Into<String>) -> Self {
        Expr::Var(name.into())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(e: Expr) -> Self {
        Expr::Not(Box::new(e))
    }

    pub fn implies(a: Expr, b: Expr) -> Self {
        Expr::Implies(Box::new(a), Box::new(b))
    }

    /// `a` requires `b`.
    pub fn requires(a: impl Into<String>, b: impl Into<String>) -> Self {
        Expr::implies(Expr::var(a), Expr::var(b))
    }

    /// `a` and `b` are mutually exclusive.
    pub fn excludes(a: impl Into<String>, b: impl Into<String>) -> Self {
        Expr::not(Expr::And(vec![Expr::var(a), Expr::var(b)]))
    }

    /// Conjunction that folds to a single operand or `true` when possible.
    pub fn all(mut parts: Vec<Expr>) -> Self {
        match parts.len() {
            0 => Expr::Const(true),
            1 => parts.pop().unwrap(),
            _ => Expr::And(parts),
        }
    }

    /// Disjunction that folds to a single operand or `false` when possible.
    pub fn any(mut parts: Vec<Expr>) -> Self {
        match parts.len() {
            0 => Expr::Const(false),
            1 => parts.pop().unwrap(),
            _ => Expr::Or(parts),
        }
    }

    /// Two-valued evaluation; `lookup` must know every atom.
    pub fn eval(&self, lookup: &impl Fn(&str) -> bool) -> bool {
        match self {
            Expr::Const(b) => *b,
            Expr::Var(v) => lookup(v),
            Expr::Not(e) => !e.eval(lookup),
            Expr::And(es) => es.iter().all(|e| e.eval(lookup)),
            Expr::Or(es) => es.iter().any(|e| e.eval(lookup)),
            Expr::Implies(a, b) => !a.eval(lookup) || b.eval(lookup),
        }
    }

    /// Kleene three-valued evaluation. `None` means the value depends on an
    /// unbound atom.
    pub fn eval_partial(&self, lookup: &impl Fn(&str) -> Option<bool>) -> Option<bool> {
        match self {
            Expr::Const(b) => Some(*b),
            Expr::Var(v) => lookup(v),
            Expr::Not(e) => e.eval_partial(lookup).map(|b| !b),
            Expr::And(es) => {
                let mut unknown = false;
                for e in es {
                    match e.eval_partial(lookup) {
                        Some(false) => return Some(false),
                        None => unknown = true,
                        Some(true) => {}
                    }
                }
                if unknown {
                    None
                } else {
                    Some(true)
                }
            }
            Expr::Or(es) => {
                let mut unknown = false;
                for e in es {
                    match e.eval_partial(lookup) {
                        Some(true) => return Some(true),
                        None => unknown = true,
                        Some(false) => {}
                    }
                }
                if unknown {
                    None
                } else {
                    Some(false)
                }
            }
            Expr::Implies(a, b) => match (a.eval_partial(lookup), b.eval_partial(lookup)) {
                (Some(false), _) | (_, Some(true)) => Some(true),
                (Some(true), Some(false)) => Some(false),
                _ => None,
            },
        }
    }

    /// Evaluate under a (possibly partial) variable assignment.
    pub fn eval_assignment(&self, assignment: &Assignment) -> Option<bool> {
        self.eval_partial(&|v| assignment.get(v))
    }

    /// All atoms referenced by the expression.
    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => {
                out.insert(v.clone());
            }
            Expr::Not(e) => e.collect_vars(out),
            Expr::And(es) | Expr::Or(es) => es.iter().for_each(|e| e.collect_vars(out)),
            Expr::Implies(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    /// Replace atoms. Atoms for which `f` returns `None` are kept.
    pub fn substitute(&self, f: &impl Fn(&str) -> Option<Expr>) -> Expr {
        match self {
            Expr::Const(b) => Expr::Const(*b),
            Expr::Var(v) => f(v).unwrap_or_else(|| Expr::Var(v.clone())),
            Expr::Not(e) => Expr::not(e.substitute(f)),
            Expr::And(es) => Expr::And(es.iter().map(|e| e.substitute(f)).collect()),
            Expr::Or(es) => Expr::Or(es.iter().map(|e| e.substitute(f)).collect()),
            Expr::Implies(a, b) => Expr::implies(a.substitute(f), b.substitute(f)),
        }
    }

    /// Rename atoms through a total mapping function.
    pub fn rename(&self, f: &impl Fn(&str) -> String) -> Expr {
        self.substitute(&|v| Some(Expr::Var(f(v))))
    }

    /// Constant folding plus flattening of nested conjunctions/disjunctions
    /// and removal of duplicate operands. Preserves semantics.
    pub fn simplify(&self) -> Expr {
        match self {
            Expr::Const(_) | Expr::Var(_) => self.clone(),
            Expr::Not(e) => match e.simplify() {
                Expr::Const(b) => Expr::Const(!b),
                Expr::Not(inner) => *inner,
                other => Expr::not(other),
            },
            Expr::And(es) => {
                let mut parts: Vec<Expr> = Vec::new();
                for e in es {
                    match e.simplify() {
                        Expr::Const(true) => {}
                        Expr::Const(false) => return Expr::Const(false),
                        Expr::And(inner) => {
                            for i in inner {
                                if !parts.contains(&i) {
                                    parts.push(i);
                                }
                            }
                        }
                        other => {
                            if !parts.contains(&other) {
                                parts.push(other);
                            }
                        }
                    }
                }
                Expr::all(parts)
            }
            Expr::Or(es) => {
                let mut parts: Vec<Expr> = Vec::new();
                for e in es {
                    match e.simplify() {
                        Expr::Const(false) => {}
                        Expr::Const(true) => return Expr::Const(true),
                        Expr::Or(inner) => {
                            for i in inner {
                                if !parts.contains(&i) {
                                    parts.push(i);
                                }
                            }
                        }
                        other => {
                            if !parts.contains(&other) {
                                parts.push(other);
                            }
                        }
                    }
                }
                Expr::any(parts)
            }
            Expr::Implies(a, b) => match (a.simplify(), b.simplify()) {
                (Expr::Const(false), _) | (_, Expr::Const(true)) => Expr::Const(true),
                (Expr::Const(true), b) => b,
                (a, Expr::Const(false)) => Expr::not(a).simplify(),
                (a, b) => Expr::implies(a, b),
            },
        }
    }

    pub fn is_true(&self) -> bool {
        matches!(self, Expr::Const(true))
    }

    pub fn is_false(&self) -> bool {
        matches!(self, Expr::Const(false))
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Implies(..) => 1,
            Expr::Or(_) => 2,
            Expr::And(_) => 3,
            Expr::Not(_) => 4,
            Expr::Const(_) | Expr::Var(_) => 5,
        }
    }

    fn fmt_child(&self, child: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if child.precedence() <= self.precedence() && !matches!(child, Expr::Not(_)) {
            write!(f, "({child})")
        } else {
            write!(f, "{child}")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(b) => write!(f, "{b}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Not(e) => {
                write!(f, "!")?;
                if e.precedence() < 5 {
                    write!(f, "({e})")
                } else {
                    write!(f, "{e}")
                }
            }
            Expr::And(es) | Expr::Or(es) => {
                let sep = if matches!(self, Expr::And(_)) { " & " } else { " | " };
                for (i, e) in es.iter().enumerate() {
                    if i > 0 {
                        f.write_str(sep)?;
                    }
                    self.fmt_child(e, f)?;
                }
                Ok(())
            }
            Expr::Implies(a, b) => {
                self.fmt_child(a, f)?;
                f.write_str(" -> ")?;
                self.fmt_child(b, f)
            }
        }
    }
}

/// Wire form of [`Expr`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExprDoc {
    pub op: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub args: Vec<ExprDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl TryFrom<ExprDoc> for Expr {
    type Error = String;

    fn try_from(doc: ExprDoc) -> Result<Self, Self::Error> {
        let arity = |n: usize| -> Result<(), String> {
            if doc.args.len() == n {
                Ok(())
            } else {
                Err(format!(
                    "operator `{}` takes {n} argument(s), got {}",
                    doc.op,
                    doc.args.len()
                ))
            }
        };
        if doc.op != "var" && doc.name.is_some() {
            return Err(format!("operator `{}` does not take a name", doc.op));
        }
        let op = doc.op.as_str();
        match op {
            "var" => {
                arity(0)?;
                match doc.name {
                    Some(n) if !n.is_empty() => Ok(Expr::Var(n)),
                    _ => Err("`var` requires a non-empty `name`".into()),
                }
            }
            "true" | "false" => {
                arity(0)?;
                Ok(Expr::Const(op == "true"))
            }
            "not" => {
                arity(1)?;
                let mut args = convert_args(doc.args)?;
                Ok(Expr::not(args.pop().unwrap()))
            }
            "and" | "or" => {
                let args = convert_args(doc.args)?;
                Ok(if op == "and" {
                    Expr::And(args)
                } else {
                    Expr::Or(args)
                })
            }
            "implies" | "requires" | "excludes" => {
                arity(2)?;
                let mut args = convert_args(doc.args)?;
                let b = args.pop().unwrap();
                let a = args.pop().unwrap();
                Ok(if op == "excludes" {
                    Expr::not(Expr::And(vec![a, b]))
                } else {
                    Expr::implies(a, b)
                })
            }
            other => Err(format!("unknown operator `{other}`")),
        }
    }
}

fn convert_args(args: Vec<ExprDoc>) -> Result<Vec<Expr>, String> {
    args.into_iter().map(Expr::try_from).collect()
}

impl From<Expr> for ExprDoc {
    fn from(e: Expr) -> Self {
        let node = |op: &str, args: Vec<Expr>| ExprDoc {
            op: op.to_string(),
            args: args.into_iter().map(ExprDoc::from).collect(),
            name: None,
        };
        match e {
            Expr::Const(b) => node(if b { "true" } else { "false" }, vec![]),
            Expr::Var(v) => ExprDoc {
                op: "var".into(),
                args: vec![],
                name: Some(v),
            },
            Expr::Not(e) => node("not", vec![*e]),
            Expr::And(es) => node("and", es),
            Expr::Or(es) => node("or", es),
            Expr::Implies(a, b) => node("implies", vec![*a, *b]),
        }
    }
}

/// A partial or total assignment of boolean variables. Serialized as a map
/// from variable name to `0` or `1`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Assignment(BTreeMap<String, bool>);

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, var: &str) -> Option<bool> {
        self.0.get(var).copied()
    }

    pub fn set(&mut self, var: impl Into<String>, value: bool) {
        self.0.insert(var.into(), value);
    }

    pub fn with(mut self, var: impl Into<String>, value: bool) -> Self {
        self.set(var, value);
        self
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, bool)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn contains(&self, var: &str) -> bool {
        self.0.contains_key(var)
    }

    /// True when no variable is bound to different values in the two.
    pub fn is_consistent_with(&self, other: &Assignment) -> bool {
        self.iter()
            .all(|(k, v)| other.get(k).is_none_or(|w| w == v))
    }

    /// Union of two consistent assignments; `None` on conflict.
    pub fn union(&self, other: &Assignment) -> Option<Assignment> {
        if !self.is_consistent_with(other) {
            return None;
        }
        let mut out = self.clone();
        for (k, v) in other.iter() {
            out.set(k, v);
        }
        Some(out)
    }

    /// Keep only the listed variables.
    pub fn restrict<'a>(&self, vars: impl IntoIterator<Item = &'a String>) -> Assignment {
        let mut out = Assignment::new();
        for v in vars {
            if let Some(b) = self.get(v) {
                out.set(v.clone(), b);
            }
        }
        out
    }
}

impl FromIterator<(String, bool)> for Assignment {
    fn from_iter<I: IntoIterator<Item = (String, bool)>>(iter: I) -> Self {
        Assignment(iter.into_iter().collect())
    }
}

impl Serialize for Assignment {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut m = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            m.serialize_entry(k, &u8::from(*v))?;
        }
        m.end()
    }
}

impl<'de> Deserialize<'de> for Assignment {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = BTreeMap::<String, u8>::deserialize(d)?;
        raw.into_iter()
            .map(|(k, v)| match v {
                0 => Ok((k, false)),
                1 => Ok((k, true)),
                other => Err(serde::de::Error::custom(format!(
                    "variable `{k}` must be 0 or 1, got {other}"
                ))),
            })
            .collect()
    }
}
