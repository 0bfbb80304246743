//! All-Transitions test generation and coverage measurement.

mod engine;
mod greedy;
mod postman;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::Assignment;
use crate::state_machine::{
    canonicalize_events, EventAliases, ReplayError, StateMachine, StateMachineError, Trace,
};
use engine::{Cube, Engine};
use greedy::Walk;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenError {
    #[error("test generation requires a flat machine; flatten it first")]
    NotFlat,
    #[error("transitions not coverable under any admissible assignment: {}", .0.join(", "))]
    UncoverableTransitions(Vec<String>),
    #[error("the given assignment violates the machine constraint")]
    InadmissibleAssignment,
    #[error("{count} variables exceed the supported limit of {limit}")]
    TooManyVariables { count: usize, limit: usize },
    #[error("guards competing with `{transition}` depend on {variables} unbound variables")]
    GuardTooWide { transition: String, variables: usize },
    #[error("search explored more than {0} nodes")]
    BudgetExceeded(usize),
    #[error("generated case `{case}` does not replay: {error}")]
    Replay { case: String, error: ReplayError },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CoverageError {
    #[error(transparent)]
    Machine(#[from] StateMachineError),
    #[error("case `{case}`: {error}")]
    Replay { case: String, error: ReplayError },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Greedy,
    #[default]
    FewestCases,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Greedy => "greedy",
            Strategy::FewestCases => "fewest-cases",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "greedy" => Ok(Strategy::Greedy),
            "fewest-cases" | "fewest_cases" => Ok(Strategy::FewestCases),
            other => Err(format!("unknown strategy `{other}` (expected greedy or fewest-cases)")),
        }
    }
}

/// How guard variables are bound during generation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AssignmentMode {
    /// One assignment shared by every case.
    Fixed(Assignment),
    /// Each case picks its own static assignment, recorded in its prolog.
    Free,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub id: String,
    #[serde(default)]
    pub prolog: Assignment,
    pub events: Vec<String>,
    #[serde(default)]
    pub trace: Trace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CoverageReport {
    pub targets: BTreeSet<String>,
    pub covered: BTreeSet<String>,
    pub ratio: f64,
    pub hit_counts: BTreeMap<String, usize>,
}

impl CoverageReport {
    /// Count hits of `targets` in the triggered steps of `traces`.
    pub fn from_traces<'a>(
        targets: BTreeSet<String>,
        traces: impl IntoIterator<Item = &'a Trace>,
    ) -> CoverageReport {
        let mut hit_counts: BTreeMap<String, usize> =
            targets.iter().map(|t| (t.clone(), 0)).collect();
        for trace in traces {
            for id in trace.covered() {
                if let Some(n) = hit_counts.get_mut(id) {
                    *n += 1;
                }
            }
        }
        let covered: BTreeSet<String> = hit_counts
            .iter()
            .filter(|(_, &n)| n > 0)
            .map(|(k, _)| k.clone())
            .collect();
        let ratio = if targets.is_empty() {
            0.0
        } else {
            covered.len() as f64 / targets.len() as f64
        };
        CoverageReport {
            targets,
            covered,
            ratio,
            hit_counts,
        }
    }

    pub fn is_complete(&self) -> bool {
        !self.targets.is_empty() && self.covered.len() == self.targets.len()
    }

    /// Hits beyond the first, summed over targets.
    pub fn redundancy(&self) -> usize {
        self.hit_counts.values().map(|&n| n.saturating_sub(1)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSuite {
    pub model: String,
    #[serde(default)]
    pub strategy: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub aliases: EventAliases,
    pub cases: Vec<TestCase>,
    #[serde(default = "CoverageReport::empty")]
    pub coverage: CoverageReport,
}

impl CoverageReport {
    fn empty() -> CoverageReport {
        CoverageReport::from_traces(BTreeSet::new(), [])
    }
}

impl TestSuite {
    pub fn from_json(text: &str) -> Result<TestSuite, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("suite serializes")
    }

    pub fn event_count(&self) -> usize {
        self.cases.iter().map(|c| c.events.len()).sum()
    }

    /// Events of every case with the suite's aliases applied.
    pub fn canonical_events(&self, case: &TestCase) -> Vec<String> {
        canonicalize_events(&case.events, &self.aliases)
    }
}

/// Replay every case on `sm` (flattened first if needed) and count hits of
/// its triggered transitions. Targets are taken from `sm` itself, so a
/// transition that flattening drops as permanently shadowed stays a target.
pub fn check_coverage(
    sm: &StateMachine,
    cases: &[TestCase],
    aliases: &EventAliases,
) -> Result<CoverageReport, CoverageError> {
    let flat = sm.flatten()?;
    let traces = replay_cases(&flat, cases, aliases)?;
    Ok(CoverageReport::from_traces(sm.coverage_targets(), &traces))
}

/// Replay a suite, returning the trace of every case.
pub fn replay_cases(
    flat: &StateMachine,
    cases: &[TestCase],
    aliases: &EventAliases,
) -> Result<Vec<Trace>, CoverageError> {
    cases
        .iter()
        .map(|c| {
            flat.replay(&canonicalize_events(&c.events, aliases), &c.prolog)
                .map_err(|error| CoverageError::Replay {
                    case: c.id.clone(),
                    error,
                })
        })
        .collect()
}

/// Generate a suite covering every triggered transition of the flat machine
/// `sm` that is coverable at all.
///
/// `Greedy` walks to the nearest uncovered transition and starts a new case
/// whenever nothing uncovered is reachable. `FewestCases` first looks for a
/// single covering walk under one total assignment (candidates ordered by
/// fewest variables set, then lexicographically) and falls back to greedy.
pub fn generate_all_transitions(
    sm: &StateMachine,
    mode: &AssignmentMode,
    strategy: Strategy,
) -> Result<TestSuite, GenError> {
    let engine = Engine::new(sm, mode)?;
    let targets = sm.coverage_targets();
    let coverable = engine.coverable()?;
    let missing: Vec<String> = targets.difference(&coverable).cloned().collect();
    if !missing.is_empty() {
        return Err(GenError::UncoverableTransitions(missing));
    }

    let keep = match mode {
        AssignmentMode::Fixed(_) => u64::MAX,
        AssignmentMode::Free => engine.guard_mask,
    };
    let mut walks: Vec<(Walk, Cube)> = Vec::new();
    if strategy == Strategy::FewestCases && !targets.is_empty() {
        for cube in candidates(&engine, mode).into_iter().take(MAX_ROUTE_ATTEMPTS) {
            if let Some(w) = postman::route(&engine, cube, &targets)? {
                walks.push((w, cube));
                break;
            }
        }
    }
    if walks.is_empty() {
        for w in greedy::greedy(&engine, &targets)? {
            let cube = w.cube(engine.start);
            walks.push((w, cube));
        }
    }

    let mut cases = Vec::new();
    for (i, (walk, cube)) in walks.into_iter().enumerate() {
        let id = format!("tc-{}", i + 1);
        let events: Vec<String> = walk
            .moves
            .iter()
            .map(|m| engine.event(m.transition).to_string())
            .collect();
        let prolog = engine.assignment(cube, keep);
        let trace = sm
            .replay(&events, &prolog)
            .map_err(|error| GenError::Replay {
                case: id.clone(),
                error,
            })?;
        cases.push(TestCase {
            id,
            prolog,
            events,
            trace,
        });
    }
    let coverage = CoverageReport::from_traces(targets, cases.iter().map(|c| &c.trace));
    Ok(TestSuite {
        model: sm.name().to_string(),
        strategy: strategy.as_str().to_string(),
        aliases: EventAliases::new(),
        cases,
        coverage,
    })
}

/// Largest number of relevant variables for which total assignments are
/// enumerated when looking for a single covering walk.
const MAX_CANDIDATE_VARIABLES: usize = 20;
/// Candidate assignments tried before falling back to greedy.
const MAX_ROUTE_ATTEMPTS: usize = 4096;

/// Admissible total assignments over the relevant variables, fewest set
/// first, then lexicographic in variable order.
fn candidates(engine: &Engine, mode: &AssignmentMode) -> Vec<Cube> {
    if let AssignmentMode::Fixed(_) = mode {
        return vec![engine.start];
    }
    let free = engine.relevant_mask() & !engine.start.mask;
    let idx: Vec<usize> = (0..64).filter(|i| free >> i & 1 == 1).collect();
    if idx.len() > MAX_CANDIDATE_VARIABLES {
        return vec![];
    }
    let mut out: Vec<(u32, Vec<bool>, Cube)> = Vec::new();
    for bits in 0u64..1 << idx.len() {
        let mut cube = engine.start;
        let mut key = Vec::with_capacity(idx.len());
        for (k, &i) in idx.iter().enumerate() {
            let b = bits >> k & 1 == 1;
            cube.mask |= 1 << i;
            if b {
                cube.val |= 1 << i;
            }
            key.push(b);
        }
        if engine.is_admissible(cube) {
            out.push((bits.count_ones(), key, cube));
        }
    }
    out.sort_by(|a, b| (a.0, &a.1).cmp(&(b.0, &b.1)));
    out.into_iter().map(|(_, _, c)| c).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::state_machine::tests::two_state;
    use crate::state_machine::{GuardVariable, State, Transition};

    #[test]
    fn two_state_machine_needs_one_event() {
        let sm = two_state();
        for strategy in [Strategy::Greedy, Strategy::FewestCases] {
            let suite = generate_all_transitions(&sm, &AssignmentMode::Free, strategy).unwrap();
            assert_eq!(suite.cases.len(), 1);
            assert_eq!(suite.cases[0].events, vec!["go"]);
            assert_eq!(suite.coverage.ratio, 1.0);
        }
    }

    #[test]
    fn empty_suite_has_zero_ratio() {
        let report = check_coverage(&two_state(), &[], &EventAliases::new()).unwrap();
        assert_eq!(report.ratio, 0.0);
        assert_eq!(report.hit_counts["t1"], 0);
    }

    fn diamond() -> StateMachine {
        StateMachine::new(
            "d",
            "A",
            vec![State::simple("A"), State::simple("B"), State::simple("C"), State::simple("D")],
            vec![
                Transition::new("t1", "A", "B", "left").guarded(Expr::var("x")),
                Transition::new("t2", "A", "C", "right").guarded(Expr::not(Expr::var("x"))),
                Transition::new("t3", "B", "D", "on"),
                Transition::new("t4", "C", "D", "on"),
            ],
            vec![GuardVariable::new("x")],
            None,
        )
        .unwrap()
    }

    #[test]
    fn free_assignment_splits_conflicting_paths() {
        for strategy in [Strategy::Greedy, Strategy::FewestCases] {
            let suite = generate_all_transitions(&diamond(), &AssignmentMode::Free, strategy).unwrap();
            assert_eq!(suite.cases.len(), 2, "{strategy}");
            assert_eq!(suite.coverage.ratio, 1.0);
            let prologs: Vec<Option<bool>> = suite.cases.iter().map(|c| c.prolog.get("x")).collect();
            assert_eq!(prologs, vec![Some(true), Some(false)]);
        }
    }

    #[test]
    fn fixed_assignment_reports_uncoverable_transitions() {
        let err = generate_all_transitions(
            &diamond(),
            &AssignmentMode::Fixed(Assignment::new().with("x", true)),
            Strategy::Greedy,
        )
        .unwrap_err();
        assert_eq!(
            err,
            GenError::UncoverableTransitions(vec!["t2".into(), "t4".into()])
        );
    }

    #[test]
    fn replay_errors_name_the_case() {
        let case = TestCase {
            id: "broken".into(),
            prolog: Assignment::new(),
            events: vec!["go".into(), "go".into()],
            trace: Trace::default(),
        };
        let err = check_coverage(&two_state(), &[case], &EventAliases::new()).unwrap_err();
        assert!(matches!(err, CoverageError::Replay { ref case, error: ReplayError::NoEnabledTransition { step: 1, .. } } if case == "broken"));
    }

    #[test]
    fn redundancy_counts_repeated_hits() {
        let sm = StateMachine::new(
            "loop",
            "A",
            vec![State::simple("A")],
            vec![Transition::new("t", "A", "A", "e")],
            vec![],
            None,
        )
        .unwrap();
        let case = TestCase {
            id: "c".into(),
            prolog: Assignment::new(),
            events: vec!["e".into(); 3],
            trace: Trace::default(),
        };
        let r = check_coverage(&sm, &[case], &EventAliases::new()).unwrap();
        assert_eq!(r.redundancy(), 2);
        assert_eq!(r.ratio, 1.0);
    }

    #[test]
    fn strategy_names() {
        assert_eq!("fewest-cases".parse::<Strategy>().unwrap(), Strategy::FewestCases);
        assert_eq!(Strategy::Greedy.to_string(), "greedy");
        assert!("bfs".parse::<Strategy>().is_err());
    }
}
