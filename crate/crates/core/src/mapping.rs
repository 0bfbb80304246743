//! Presence conditions linking features to 150% machine elements, and
//! derivation of 100% models by pruning.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::Expr;
use crate::feature_model::{feature_variable, Configuration, FeatureModel};
use crate::state_machine::{State, StateKind, StateMachine, StateMachineError, Transition};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MappingError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("entries[{entry}]: unknown feature `{feature}`")]
    UnknownFeature { entry: usize, feature: String },
    #[error("entries[{entry}]: unknown element `{element}`")]
    UnknownElement { entry: usize, element: String },
    #[error("entries[{entry}]: element `{element}` already has a presence condition")]
    DuplicateElement { entry: usize, element: String },
    #[error("entries[{entry}]: `{element}` names both a state and a transition")]
    AmbiguousElement { entry: usize, element: String },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PruneError {
    #[error("initial state `{0}` is not present in this configuration")]
    InitialPruned(String),
    #[error("initial substate `{initial}` of present composite state `{state}` is pruned")]
    InitialSubstatePruned { state: String, initial: String },
    #[error("the machine constraint is false for this configuration")]
    ConstraintViolated,
    #[error("no triggered transition is reachable after pruning")]
    NoReachableTransition,
    #[error("pruned machine is malformed: {0}")]
    Machine(#[from] StateMachineError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MappingEntry {
    pub presence: Expr,
    pub elements: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MappingDoc {
    #[serde(default)]
    entries: Vec<MappingEntry>,
}

/// Mapping model checked against a feature model and a 150% machine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappingModel {
    entries: Vec<MappingEntry>,
    presence: BTreeMap<String, Expr>,
    features: BTreeSet<String>,
}

/// A 100% model with the notes produced while cleaning it up.
#[derive(Debug, Clone, PartialEq)]
pub struct Pruned {
    pub machine: StateMachine,
    pub warnings: Vec<String>,
}

impl MappingModel {
    pub fn new(
        entries: Vec<MappingEntry>,
        fm: &FeatureModel,
        sm: &StateMachine,
    ) -> Result<MappingModel, MappingError> {
        let transitions: HashSet<&str> = sm.transitions().iter().map(|t| t.id.as_str()).collect();
        let mut presence = BTreeMap::new();
        for (i, e) in entries.iter().enumerate() {
            if let Some(f) = e.presence.vars().into_iter().find(|f| !fm.contains(f)) {
                return Err(MappingError::UnknownFeature { entry: i, feature: f });
            }
            for el in &e.elements {
                let is_state = sm.has_state(el);
                let is_transition = transitions.contains(el.as_str());
                if is_state && is_transition {
                    return Err(MappingError::AmbiguousElement {
                        entry: i,
                        element: el.clone(),
                    });
                }
                if !is_state && !is_transition {
                    return Err(MappingError::UnknownElement {
                        entry: i,
                        element: el.clone(),
                    });
                }
                if presence.insert(el.clone(), e.presence.clone()).is_some() {
                    return Err(MappingError::DuplicateElement {
                        entry: i,
                        element: el.clone(),
                    });
                }
            }
        }
        Ok(MappingModel {
            entries,
            presence,
            features: fm.feature_ids().map(str::to_string).collect(),
        })
    }

    /// A mapping without entries: every element is always present.
    pub fn empty(fm: &FeatureModel) -> MappingModel {
        MappingModel {
            entries: vec![],
            presence: BTreeMap::new(),
            features: fm.feature_ids().map(str::to_string).collect(),
        }
    }

    pub fn from_json(
        text: &str,
        fm: &FeatureModel,
        sm: &StateMachine,
    ) -> Result<MappingModel, MappingError> {
        let doc: MappingDoc =
            serde_json::from_str(text).map_err(|e| MappingError::Syntax(e.to_string()))?;
        MappingModel::new(doc.entries, fm, sm)
    }

    pub fn to_json(&self) -> String {
        let doc = MappingDoc {
            entries: self.entries.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("mapping serializes")
    }

    pub fn entries(&self) -> &[MappingEntry] {
        &self.entries
    }

    /// Presence condition of an element; unmapped elements yield `true`.
    pub fn presence(&self, element: &str) -> Expr {
        self.presence
            .get(element)
            .cloned()
            .unwrap_or(Expr::Const(true))
    }

    pub fn is_mapped(&self, element: &str) -> bool {
        self.presence.contains_key(element)
    }

    pub fn is_present(&self, element: &str, cfg: &Configuration) -> bool {
        self.presence
            .get(element)
            .is_none_or(|p| p.eval(&|f| cfg.contains(f)))
    }

    /// Feature ids of the feature model the mapping was checked against.
    pub fn features(&self) -> &BTreeSet<String> {
        &self.features
    }

    /// Derive the flat 100% model of `cfg`.
    ///
    /// Elements whose presence condition is false are deleted (a state
    /// together with its substates and incident transitions), guard atoms
    /// naming feature variables are replaced by constants, the result is
    /// flattened and finally states and transitions no longer reachable from
    /// the initial state are removed with a warning each.
    pub fn prune(&self, sm: &StateMachine, cfg: &Configuration) -> Result<Pruned, PruneError> {
        if !self.is_present(sm.initial(), cfg) {
            return Err(PruneError::InitialPruned(sm.initial().to_string()));
        }
        let mut removed = HashSet::new();
        let mut states = Vec::new();
        for s in sm.states() {
            if let Some(kept) = self.prune_state(s, cfg, &mut removed)? {
                states.push(kept);
            }
        }
        if removed.contains(sm.initial()) {
            return Err(PruneError::InitialPruned(sm.initial().to_string()));
        }

        let values: BTreeMap<String, bool> = self
            .features
            .iter()
            .map(|f| (feature_variable(f), cfg.contains(f)))
            .collect();
        let resolve = |e: &Expr| {
            e.substitute(&|v| values.get(v).map(|&b| Expr::Const(b)))
                .simplify()
        };

        let mut transitions = Vec::new();
        for t in sm.transitions() {
            if !self.is_present(&t.id, cfg)
                || removed.contains(t.source.as_str())
                || removed.contains(t.target.as_str())
            {
                continue;
            }
            let guard = match t.guard.as_ref().map(&resolve) {
                Some(Expr::Const(false)) => continue,
                Some(Expr::Const(true)) | None => None,
                Some(g) => Some(g),
            };
            transitions.push(Transition {
                guard,
                ..t.clone()
            });
        }
        let variables = sm
            .variables()
            .iter()
            .filter(|v| !values.contains_key(&v.name))
            .cloned()
            .collect();
        let constraint = match sm.constraint().map(&resolve) {
            Some(Expr::Const(false)) => return Err(PruneError::ConstraintViolated),
            Some(Expr::Const(true)) | None => None,
            Some(c) => Some(c),
        };
        let machine = StateMachine::new(
            sm.name(),
            sm.initial(),
            states,
            transitions,
            variables,
            constraint,
        )?
        .flatten()?;
        let (machine, warnings) = remove_unreachable(machine)?;
        if !machine.transitions().iter().any(Transition::is_triggered) {
            return Err(PruneError::NoReachableTransition);
        }
        Ok(Pruned { machine, warnings })
    }

    fn prune_state(
        &self,
        s: &State,
        cfg: &Configuration,
        removed: &mut HashSet<String>,
    ) -> Result<Option<State>, PruneError> {
        if !self.is_present(&s.id, cfg) {
            mark_removed(s, removed);
            return Ok(None);
        }
        let StateKind::Composite { substates, initial } = &s.kind else {
            return Ok(Some(s.clone()));
        };
        let mut kept = Vec::new();
        for c in substates {
            if let Some(k) = self.prune_state(c, cfg, removed)? {
                kept.push(k);
            }
        }
        if !kept.iter().any(|k| &k.id == initial) {
            return Err(PruneError::InitialSubstatePruned {
                state: s.id.clone(),
                initial: initial.clone(),
            });
        }
        Ok(Some(State {
            id: s.id.clone(),
            kind: StateKind::Composite {
                substates: kept,
                initial: initial.clone(),
            },
            is_final: s.is_final,
        }))
    }
}

fn mark_removed(s: &State, removed: &mut HashSet<String>) {
    removed.insert(s.id.clone());
    for c in s.substates() {
        mark_removed(c, removed);
    }
}

/// Drop states unreachable from the initial state of a flat machine, and the
/// transitions leaving them. Guards over remaining variables are assumed
/// satisfiable.
fn remove_unreachable(sm: StateMachine) -> Result<(StateMachine, Vec<String>), StateMachineError> {
    let mut seen = HashSet::new();
    let mut queue = VecDeque::from([sm.initial().to_string()]);
    seen.insert(sm.initial().to_string());
    while let Some(s) = queue.pop_front() {
        for t in sm.transitions().iter().filter(|t| t.source == s) {
            if seen.insert(t.target.clone()) {
                queue.push_back(t.target.clone());
            }
        }
    }
    if seen.len() == sm.states().len() {
        return Ok((sm, vec![]));
    }
    let mut warnings = Vec::new();
    let states = sm
        .states()
        .iter()
        .filter(|s| {
            let keep = seen.contains(&s.id);
            if !keep {
                warnings.push(format!("state `{}` is unreachable after pruning; removed", s.id));
            }
            keep
        })
        .cloned()
        .collect();
    let transitions = sm
        .transitions()
        .iter()
        .filter(|t| {
            let keep = seen.contains(&t.source);
            if !keep {
                warnings.push(format!(
                    "transition `{}` is unreachable after pruning; removed",
                    t.id
                ));
            }
            keep
        })
        .cloned()
        .collect();
    let m = StateMachine::new(
        sm.name(),
        sm.initial(),
        states,
        transitions,
        sm.variables().to_vec(),
        sm.constraint().cloned(),
    )?;
    Ok((m, warnings))
}
