//! Deterministic replay of event sequences on flat machines.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::StateMachine;
use crate::expr::Assignment;

/// Event-name rewrites applied before replay (misspelled or renamed events).
pub type EventAliases = BTreeMap<String, String>;

pub fn canonicalize_events(events: &[String], aliases: &EventAliases) -> Vec<String> {
    events
        .iter()
        .map(|e| aliases.get(e).cloned().unwrap_or_else(|| e.clone()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    /// `None` for completion transitions.
    pub event: Option<String>,
    pub transition: String,
    pub origin: String,
    pub source: String,
    pub state: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Trace {
    pub steps: Vec<TraceStep>,
}

impl Trace {
    /// Each step starts where the previous one ended, the first one at
    /// `initial`.
    pub fn is_chained(&self, initial: &str) -> bool {
        let mut at = initial;
        for s in &self.steps {
            if s.source != at {
                return false;
            }
            at = &s.state;
        }
        true
    }

    pub fn final_state<'a>(&'a self, initial: &'a str) -> &'a str {
        self.steps.last().map_or(initial, |s| s.state.as_str())
    }

    /// Coverage identities of the triggered steps, in order.
    pub fn covered(&self) -> impl Iterator<Item = &str> {
        self.steps
            .iter()
            .filter(|s| s.event.is_some())
            .map(|s| s.origin.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReplayError {
    #[error("replay requires a flat machine; flatten it first")]
    NotFlat,
    #[error("step {step}: no enabled transition for event `{event}` in state `{state}`")]
    NoEnabledTransition {
        step: usize,
        event: String,
        state: String,
    },
    #[error("step {step}: event `{event}` enables several transitions: {}", candidates.join(", "))]
    NondeterministicChoice {
        step: usize,
        event: String,
        candidates: Vec<String>,
    },
    #[error("step {step}: guard of `{transition}` depends on unassigned variable(s) {}", variables.join(", "))]
    UnboundVariable {
        step: usize,
        transition: String,
        variables: Vec<String>,
    },
    #[error("step {step}: completion transitions loop from state `{state}`")]
    CompletionLoop { step: usize, state: String },
}

impl ReplayError {
    /// Variant name, for machine-readable diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            ReplayError::NotFlat => "NotFlat",
            ReplayError::NoEnabledTransition { .. } => "NoEnabledTransition",
            ReplayError::NondeterministicChoice { .. } => "NondeterministicChoice",
            ReplayError::UnboundVariable { .. } => "UnboundVariable",
            ReplayError::CompletionLoop { .. } => "CompletionLoop",
        }
    }

    pub fn step(&self) -> Option<usize> {
        match self {
            ReplayError::NotFlat => None,
            ReplayError::NoEnabledTransition { step, .. }
            | ReplayError::NondeterministicChoice { step, .. }
            | ReplayError::UnboundVariable { step, .. }
            | ReplayError::CompletionLoop { step, .. } => Some(*step),
        }
    }
}

impl StateMachine {
    /// Replay `events` from the initial state under a static variable
    /// assignment (fixed before the first step). Variables missing from
    /// `assignment` fall back to their declared initial value. After every
    /// step, enabled completion transitions fire until none is enabled.
    pub fn replay<S: AsRef<str>>(
        &self,
        events: &[S],
        assignment: &Assignment,
    ) -> Result<Trace, ReplayError> {
        if !self.is_flat() {
            return Err(ReplayError::NotFlat);
        }
        let mut values = self.initial_values();
        for (k, v) in assignment.iter() {
            values.set(k, v);
        }
        let outgoing = self.outgoing();
        let mut trace = Trace::default();
        let mut state = self.initial().to_string();
        self.complete(&outgoing, &values, 0, &mut state, &mut trace)?;
        for (step, event) in events.iter().enumerate() {
            let event = event.as_ref();
            let fired = self.pick(&outgoing, &values, step, &state, Some(event))?;
            let Some(i) = fired else {
                return Err(ReplayError::NoEnabledTransition {
                    step,
                    event: event.to_string(),
                    state,
                });
            };
            self.push_step(i, &mut state, &mut trace);
            self.complete(&outgoing, &values, step, &mut state, &mut trace)?;
        }
        Ok(trace)
    }

    fn push_step(&self, i: usize, state: &mut String, trace: &mut Trace) {
        let t = &self.transitions()[i];
        trace.steps.push(TraceStep {
            event: t.trigger.clone(),
            transition: t.id.clone(),
            origin: t.coverage_id().to_string(),
            source: t.source.clone(),
            state: t.target.clone(),
        });
        *state = t.target.clone();
    }

    fn complete(
        &self,
        outgoing: &std::collections::HashMap<&str, Vec<usize>>,
        values: &Assignment,
        step: usize,
        state: &mut String,
        trace: &mut Trace,
    ) -> Result<(), ReplayError> {
        let limit = self.state_ids().count() + 1;
        for _ in 0..limit {
            match self.pick(outgoing, values, step, state, None)? {
                Some(i) => self.push_step(i, state, trace),
                None => return Ok(()),
            }
        }
        Err(ReplayError::CompletionLoop {
            step,
            state: state.clone(),
        })
    }

    /// The unique enabled transition for `trigger` from `state`, if any.
    fn pick(
        &self,
        outgoing: &std::collections::HashMap<&str, Vec<usize>>,
        values: &Assignment,
        step: usize,
        state: &str,
        trigger: Option<&str>,
    ) -> Result<Option<usize>, ReplayError> {
        let mut enabled = Vec::new();
        for &i in outgoing.get(state).map(Vec::as_slice).unwrap_or(&[]) {
            let t = &self.transitions()[i];
            if t.trigger.as_deref() != trigger {
                continue;
            }
            let on = match &t.guard {
                None => true,
                Some(g) => match g.eval_assignment(values) {
                    Some(b) => b,
                    None => {
                        return Err(ReplayError::UnboundVariable {
                            step,
                            transition: t.id.clone(),
                            variables: g
                                .vars()
                                .into_iter()
                                .filter(|v| !values.contains(v))
                                .collect(),
                        })
                    }
                },
            };
            if on {
                enabled.push(i);
            }
        }
        match enabled.len() {
            0 => Ok(None),
            1 => Ok(Some(enabled[0])),
            _ => Err(ReplayError::NondeterministicChoice {
                step,
                event: trigger.unwrap_or("").to_string(),
                candidates: enabled
                    .iter()
                    .map(|&i| self.transitions()[i].id.clone())
                    .collect(),
            }),
        }
    }
}
