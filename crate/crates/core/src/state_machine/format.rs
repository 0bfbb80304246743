//! JSON document format and DOT export for state machines.

use std::collections::BTreeSet;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{GuardVariable, State, StateKind, StateMachine, StateMachineError, Transition};
use crate::expr::Expr;

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct MachineDoc {
    name: String,
    initial: String,
    states: Vec<StateDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    variables: Vec<VariableDoc>,
    transitions: Vec<TransitionDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    constraint: Option<Expr>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum KindDoc {
    Simple,
    Composite,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct StateDoc {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kind: Option<KindDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    substates: Vec<StateDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    initial_substate: Option<String>,
    #[serde(default, rename = "final", skip_serializing_if = "std::ops::Not::not")]
    is_final: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VariableDoc {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    initial: Option<u8>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransitionDoc {
    id: String,
    source: String,
    target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    trigger: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    guard: Option<Expr>,
    #[serde(default)]
    tags: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    origin: Option<String>,
}

fn state_from_doc(d: StateDoc) -> Result<State, StateMachineError> {
    let composite = match d.kind {
        Some(KindDoc::Composite) => true,
        Some(KindDoc::Simple) => {
            if !d.substates.is_empty() || d.initial_substate.is_some() {
                return Err(StateMachineError::SubstatesOnSimple(d.id));
            }
            false
        }
        None => !d.substates.is_empty() || d.initial_substate.is_some(),
    };
    let kind = if composite {
        if d.substates.is_empty() {
            return Err(StateMachineError::EmptyComposite(d.id));
        }
        let initial = d
            .initial_substate
            .ok_or_else(|| StateMachineError::BadInitialSubstate {
                state: d.id.clone(),
                initial: String::new(),
            })?;
        StateKind::Composite {
            substates: d
                .substates
                .into_iter()
                .map(state_from_doc)
                .collect::<Result<_, _>>()?,
            initial,
        }
    } else {
        StateKind::Simple
    };
    Ok(State {
        id: d.id,
        kind,
        is_final: d.is_final,
    })
}

fn state_to_doc(s: &State) -> StateDoc {
    match &s.kind {
        StateKind::Simple => StateDoc {
            id: s.id.clone(),
            kind: None,
            substates: vec![],
            initial_substate: None,
            is_final: s.is_final,
        },
        StateKind::Composite { substates, initial } => StateDoc {
            id: s.id.clone(),
            kind: Some(KindDoc::Composite),
            substates: substates.iter().map(state_to_doc).collect(),
            initial_substate: Some(initial.clone()),
            is_final: s.is_final,
        },
    }
}

impl StateMachine {
    pub fn from_json(text: &str) -> Result<StateMachine, StateMachineError> {
        let doc: MachineDoc =
            serde_json::from_str(text).map_err(|e| StateMachineError::Syntax(e.to_string()))?;
        let states = doc
            .states
            .into_iter()
            .map(state_from_doc)
            .collect::<Result<Vec<_>, _>>()?;
        let variables = doc
            .variables
            .into_iter()
            .map(|v| match v.initial {
                None => Ok(GuardVariable {
                    name: v.name,
                    initial: None,
                }),
                Some(b @ (0 | 1)) => Ok(GuardVariable {
                    name: v.name,
                    initial: Some(b == 1),
                }),
                Some(other) => Err(StateMachineError::Syntax(format!(
                    "initial value of `{}` must be 0 or 1, got {other}",
                    v.name
                ))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let transitions = doc
            .transitions
            .into_iter()
            .map(|t| Transition {
                id: t.id,
                source: t.source,
                target: t.target,
                trigger: t.trigger,
                guard: t.guard,
                tags: t.tags,
                origin: t.origin,
            })
            .collect();
        StateMachine::new(doc.name, doc.initial, states, transitions, variables, doc.constraint)
    }

    pub fn to_json(&self) -> String {
        let doc = MachineDoc {
            name: self.name().to_string(),
            initial: self.initial().to_string(),
            states: self.states().iter().map(state_to_doc).collect(),
            variables: self
                .variables()
                .iter()
                .map(|v| VariableDoc {
                    name: v.name.clone(),
                    initial: v.initial.map(u8::from),
                })
                .collect(),
            transitions: self
                .transitions()
                .iter()
                .map(|t| TransitionDoc {
                    id: t.id.clone(),
                    source: t.source.clone(),
                    target: t.target.clone(),
                    trigger: t.trigger.clone(),
                    guard: t.guard.clone(),
                    tags: t.tags.clone(),
                    origin: t.origin.clone(),
                })
                .collect(),
            constraint: self.constraint().cloned(),
        };
        serde_json::to_string_pretty(&doc).expect("machine serializes")
    }

    /// Graphviz rendering. Composite states become clusters; every
    /// transition is one `source -> target [label="trigger [guard]"]` line.
    pub fn to_dot(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "digraph {} {{", quote(self.name()));
        let _ = writeln!(out, "  __start [shape=point];");
        let _ = writeln!(out, "  __start -> {};", quote(self.initial()));
        for s in self.states() {
            self.dot_state(s, 1, &mut out);
        }
        for t in self.transitions() {
            let mut label = t.trigger.clone().unwrap_or_default();
            if let Some(g) = &t.guard {
                if !label.is_empty() {
                    label.push(' ');
                }
                let _ = write!(label, "[{g}]");
            }
            let _ = writeln!(
                out,
                "  {} -> {} [label={}];",
                quote(&t.source),
                quote(&t.target),
                quote(&label)
            );
        }
        out.push_str("}\n");
        out
    }

    fn dot_state(&self, s: &State, depth: usize, out: &mut String) {
        let pad = "  ".repeat(depth);
        match &s.kind {
            StateKind::Simple => {
                let shape = if s.is_final { "doublecircle" } else { "box" };
                let _ = writeln!(out, "{pad}{} [shape={shape}];", quote(&s.id));
            }
            StateKind::Composite { substates, .. } => {
                let _ = writeln!(out, "{pad}subgraph {} {{", quote(&format!("cluster_{}", s.id)));
                let _ = writeln!(out, "{pad}  label={};", quote(&s.id));
                let _ = writeln!(out, "{pad}  {} [shape=point];", quote(&s.id));
                for c in substates {
                    self.dot_state(c, depth + 1, out);
                }
                let _ = writeln!(out, "{pad}}}");
            }
        }
    }
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}
