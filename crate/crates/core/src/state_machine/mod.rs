//! Hierarchical state machines used both as 150% and 100% test models.
//!
//! A machine is immutable once built; [`StateMachine::new`] checks every
//! structural invariant and all transformations go through it again.

mod flatten;
mod format;
mod replay;

use std::collections::{BTreeSet, HashMap, HashSet};

use thiserror::Error;

use crate::expr::Expr;

pub use replay::{canonicalize_events, EventAliases, ReplayError, Trace, TraceStep};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StateMachineError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("duplicate state id `{0}`")]
    DuplicateState(String),
    #[error("duplicate transition id `{0}`")]
    DuplicateTransition(String),
    #[error("duplicate variable `{0}`")]
    DuplicateVariable(String),
    #[error("initial state `{0}` does not exist")]
    UnknownInitial(String),
    #[error("transition `{transition}` refers to unknown state `{state}`")]
    DanglingReference { transition: String, state: String },
    #[error("composite state `{0}` has no substates")]
    EmptyComposite(String),
    #[error("composite state `{state}` has no valid initial substate (`{initial}`)")]
    BadInitialSubstate { state: String, initial: String },
    #[error("state `{0}` declares substates but is not composite")]
    SubstatesOnSimple(String),
    #[error("{context} refers to undeclared variable `{variable}`")]
    UnknownVariable { context: String, variable: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StateKind {
    Simple,
    Composite {
        substates: Vec<State>,
        initial: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct State {
    pub id: String,
    pub kind: StateKind,
    pub is_final: bool,
}

impl State {
    pub fn simple(id: impl Into<String>) -> Self {
        State {
            id: id.into(),
            kind: StateKind::Simple,
            is_final: false,
        }
    }

    pub fn composite(id: impl Into<String>, initial: impl Into<String>, substates: Vec<State>) -> Self {
        State {
            id: id.into(),
            kind: StateKind::Composite {
                substates,
                initial: initial.into(),
            },
            is_final: false,
        }
    }

    pub fn is_composite(&self) -> bool {
        matches!(self.kind, StateKind::Composite { .. })
    }

    pub fn substates(&self) -> &[State] {
        match &self.kind {
            StateKind::Simple => &[],
            StateKind::Composite { substates, .. } => substates,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub id: String,
    pub source: String,
    pub target: String,
    /// `None` marks a completion transition, fired without an event.
    pub trigger: Option<String>,
    pub guard: Option<Expr>,
    pub tags: BTreeSet<String>,
    /// Id of the transition this one was derived from by flattening.
    pub origin: Option<String>,
}

impl Transition {
    pub fn new(
        id: impl Into<String>,
        source: impl Into<String>,
        target: impl Into<String>,
        trigger: impl Into<String>,
    ) -> Self {
        Transition {
            id: id.into(),
            source: source.into(),
            target: target.into(),
            trigger: Some(trigger.into()),
            guard: None,
            tags: BTreeSet::new(),
            origin: None,
        }
    }

    pub fn guarded(mut self, guard: Expr) -> Self {
        self.guard = Some(guard);
        self
    }

    /// The identity under which coverage of this transition is counted.
    pub fn coverage_id(&self) -> &str {
        self.origin.as_deref().unwrap_or(&self.id)
    }

    pub fn is_triggered(&self) -> bool {
        self.trigger.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GuardVariable {
    pub name: String,
    pub initial: Option<bool>,
}

impl GuardVariable {
    pub fn new(name: impl Into<String>) -> Self {
        GuardVariable {
            name: name.into(),
            initial: None,
        }
    }
}

#[derive(Debug, Clone)]
struct StateInfo {
    parent: Option<String>,
    is_final: bool,
    composite_initial: Option<String>,
    children: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct StateMachine {
    name: String,
    initial: String,
    states: Vec<State>,
    transitions: Vec<Transition>,
    variables: Vec<GuardVariable>,
    constraint: Option<Expr>,
    index: HashMap<String, StateInfo>,
    order: Vec<String>,
}

impl PartialEq for StateMachine {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.initial == other.initial
            && self.states == other.states
            && self.transitions == other.transitions
            && self.variables == other.variables
            && self.constraint == other.constraint
    }
}

impl StateMachine {
    pub fn new(
        name: impl Into<String>,
        initial: impl Into<String>,
        states: Vec<State>,
        transitions: Vec<Transition>,
        variables: Vec<GuardVariable>,
        constraint: Option<Expr>,
    ) -> Result<StateMachine, StateMachineError> {
        let initial = initial.into();
        let mut index = HashMap::new();
        let mut order = Vec::new();
        for s in &states {
            register(s, None, &mut index, &mut order)?;
        }
        if !index.contains_key(&initial) {
            return Err(StateMachineError::UnknownInitial(initial));
        }
        let mut vars = HashSet::new();
        for v in &variables {
            if !vars.insert(v.name.as_str()) {
                return Err(StateMachineError::DuplicateVariable(v.name.clone()));
            }
        }
        let mut ids = HashSet::new();
        for t in &transitions {
            if !ids.insert(t.id.as_str()) {
                return Err(StateMachineError::DuplicateTransition(t.id.clone()));
            }
            for end in [&t.source, &t.target] {
                if !index.contains_key(end) {
                    return Err(StateMachineError::DanglingReference {
                        transition: t.id.clone(),
                        state: end.clone(),
                    });
                }
            }
            if let Some(g) = &t.guard {
                if let Some(v) = g.vars().into_iter().find(|v| !vars.contains(v.as_str())) {
                    return Err(StateMachineError::UnknownVariable {
                        context: format!("guard of transition `{}`", t.id),
                        variable: v,
                    });
                }
            }
        }
        if let Some(c) = &constraint {
            if let Some(v) = c.vars().into_iter().find(|v| !vars.contains(v.as_str())) {
                return Err(StateMachineError::UnknownVariable {
                    context: "machine constraint".into(),
                    variable: v,
                });
            }
        }
        Ok(StateMachine {
            name: name.into(),
            initial,
            states,
            transitions,
            variables,
            constraint,
            index,
            order,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// The declared initial state (possibly composite).
    pub fn initial(&self) -> &str {
        &self.initial
    }

    /// Top-level states.
    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn transition(&self, id: &str) -> Option<&Transition> {
        self.transitions.iter().find(|t| t.id == id)
    }

    pub fn variables(&self) -> &[GuardVariable] {
        &self.variables
    }

    /// Admissibility predicate over the variables: only assignments that
    /// satisfy it may be chosen before a run.
    pub fn constraint(&self) -> Option<&Expr> {
        self.constraint.as_ref()
    }

    /// Every state id, parents before children, in declaration order.
    pub fn state_ids(&self) -> impl Iterator<Item = &str> {
        self.order.iter().map(String::as_str)
    }

    pub fn has_state(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn is_composite(&self, id: &str) -> bool {
        self.index
            .get(id)
            .is_some_and(|i| i.composite_initial.is_some())
    }

    pub fn is_final(&self, id: &str) -> bool {
        self.index.get(id).is_some_and(|i| i.is_final)
    }

    pub fn parent(&self, id: &str) -> Option<&str> {
        self.index.get(id).and_then(|i| i.parent.as_deref())
    }

    /// Proper ancestors from the innermost outwards.
    pub fn ancestors(&self, id: &str) -> Vec<&str> {
        let mut out = Vec::new();
        let mut cur = self.parent(id);
        while let Some(p) = cur {
            out.push(p);
            cur = self.parent(p);
        }
        out
    }

    /// Initial substate of a composite state.
    pub fn initial_substate(&self, id: &str) -> Option<&str> {
        self.index.get(id).and_then(|i| i.composite_initial.as_deref())
    }

    /// The leaf state actually entered when `id` is the target.
    pub fn entry_leaf<'a>(&'a self, id: &'a str) -> &'a str {
        let mut cur = id;
        while let Some(init) = self.index.get(cur).and_then(|i| i.composite_initial.as_deref()) {
            cur = init;
        }
        cur
    }

    /// Leaf states contained in `id` (itself when simple), in declaration order.
    pub fn leaves_under(&self, id: &str) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_leaves(id, &mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, id: &str, out: &mut Vec<&'a str>) {
        if let Some((key, info)) = self.index.get_key_value(id) {
            if info.children.is_empty() {
                out.push(key);
            } else {
                for c in &info.children {
                    self.collect_leaves(c, out);
                }
            }
        }
    }

    pub fn leaf_states(&self) -> Vec<&str> {
        self.order
            .iter()
            .filter(|s| self.index[*s].children.is_empty())
            .map(String::as_str)
            .collect()
    }

    pub fn is_flat(&self) -> bool {
        self.states.iter().all(|s| !s.is_composite())
    }

    /// Coverage identities of all triggered transitions.
    pub fn coverage_targets(&self) -> BTreeSet<String> {
        self.transitions
            .iter()
            .filter(|t| t.is_triggered())
            .map(|t| t.coverage_id().to_string())
            .collect()
    }

    /// Event alphabet derived from transition triggers.
    pub fn events(&self) -> BTreeSet<String> {
        self.transitions
            .iter()
            .filter_map(|t| t.trigger.clone())
            .collect()
    }

    /// Variables referenced by any guard.
    pub fn guard_variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for t in &self.transitions {
            if let Some(g) = &t.guard {
                g.collect_vars(&mut out);
            }
        }
        out
    }

    /// Declared initial values of variables.
    pub fn initial_values(&self) -> crate::expr::Assignment {
        self.variables
            .iter()
            .filter_map(|v| v.initial.map(|b| (v.name.clone(), b)))
            .collect()
    }

    /// Transition indices grouped by source state, each group sorted by id.
    pub(crate) fn outgoing(&self) -> HashMap<&str, Vec<usize>> {
        let mut out: HashMap<&str, Vec<usize>> = HashMap::new();
        for (i, t) in self.transitions.iter().enumerate() {
            out.entry(t.source.as_str()).or_default().push(i);
        }
        for v in out.values_mut() {
            v.sort_by(|&a, &b| self.transitions[a].id.cmp(&self.transitions[b].id));
        }
        out
    }

    /// Copy of this machine with a different name.
    pub fn renamed(&self, name: impl Into<String>) -> StateMachine {
        let mut m = self.clone();
        m.name = name.into();
        m
    }
}

fn register(
    s: &State,
    parent: Option<&str>,
    index: &mut HashMap<String, StateInfo>,
    order: &mut Vec<String>,
) -> Result<(), StateMachineError> {
    if index.contains_key(&s.id) {
        return Err(StateMachineError::DuplicateState(s.id.clone()));
    }
    let (composite_initial, children) = match &s.kind {
        StateKind::Simple => (None, vec![]),
        StateKind::Composite { substates, initial } => {
            if substates.is_empty() {
                return Err(StateMachineError::EmptyComposite(s.id.clone()));
            }
            if !substates.iter().any(|c| &c.id == initial) {
                return Err(StateMachineError::BadInitialSubstate {
                    state: s.id.clone(),
                    initial: initial.clone(),
                });
            }
            (
                Some(initial.clone()),
                substates.iter().map(|c| c.id.clone()).collect(),
            )
        }
    };
    index.insert(
        s.id.clone(),
        StateInfo {
            parent: parent.map(str::to_string),
            is_final: s.is_final,
            composite_initial,
            children,
        },
    );
    order.push(s.id.clone());
    for c in s.substates() {
        register(c, Some(&s.id), index, order)?;
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn two_state() -> StateMachine {
        StateMachine::new(
            "toy",
            "A",
            vec![State::simple("A"), State::simple("B")],
            vec![Transition::new("t1", "A", "B", "go")],
            vec![],
            None,
        )
        .unwrap()
    }

    #[test]
    fn well_formed_machine() {
        let sm = two_state();
        assert!(sm.is_flat());
        assert_eq!(sm.coverage_targets().len(), 1);
        assert_eq!(sm.events().into_iter().collect::<Vec<_>>(), vec!["go"]);
    }

    #[test]
    fn structural_errors() {
        let dangling = StateMachine::new(
            "m",
            "A",
            vec![State::simple("A")],
            vec![Transition::new("t1", "A", "X", "go")],
            vec![],
            None,
        );
        assert_eq!(
            dangling.unwrap_err(),
            StateMachineError::DanglingReference {
                transition: "t1".into(),
                state: "X".into()
            }
        );
        let dup = StateMachine::new(
            "m",
            "A",
            vec![State::simple("A"), State::composite("C", "A", vec![State::simple("A")])],
            vec![],
            vec![],
            None,
        );
        assert_eq!(dup.unwrap_err(), StateMachineError::DuplicateState("A".into()));
        let bad_init = StateMachine::new(
            "m",
            "C",
            vec![State::composite("C", "zz", vec![State::simple("c1")])],
            vec![],
            vec![],
            None,
        );
        assert!(matches!(
            bad_init.unwrap_err(),
            StateMachineError::BadInitialSubstate { .. }
        ));
        let unknown_var = StateMachine::new(
            "m",
            "A",
            vec![State::simple("A")],
            vec![Transition::new("t", "A", "A", "e").guarded(Expr::var("x"))],
            vec![],
            None,
        );
        assert!(matches!(
            unknown_var.unwrap_err(),
            StateMachineError::UnknownVariable { .. }
        ));
    }

    #[test]
    fn hierarchy_queries() {
        let sm = StateMachine::new(
            "m",
            "C",
            vec![
                State::composite(
                    "C",
                    "c1",
                    vec![
                        State::simple("c1"),
                        State::composite("D", "d1", vec![State::simple("d1"), State::simple("d2")]),
                    ],
                ),
                State::simple("E"),
            ],
            vec![],
            vec![],
            None,
        )
        .unwrap();
        assert_eq!(sm.entry_leaf("C"), "c1");
        assert_eq!(sm.entry_leaf("D"), "d1");
        assert_eq!(sm.leaves_under("C"), vec!["c1", "d1", "d2"]);
        assert_eq!(sm.ancestors("d2"), vec!["D", "C"]);
        assert_eq!(sm.leaf_states(), vec!["c1", "d1", "d2", "E"]);
        assert!(!sm.is_flat());
    }
}
