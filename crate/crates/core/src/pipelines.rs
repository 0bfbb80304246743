//! End-to-end product-line test pipelines.
//!
//! Top-down derives a representative set of variants, prunes one 100% model
//! per variant and covers each. Bottom-up enriches the 150% model with one
//! guard variable per feature, covers it once and extracts from every test
//! case the configuration it needs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::ControlFlow;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Assignment, Expr};
use crate::feature_model::{
    feature_variable, Configuration, CoverageCriterion, FeatureModel, FeatureModelError,
};
use crate::mapping::{MappingModel, PruneError};
use crate::state_machine::{GuardVariable, StateMachine, StateMachineError, Transition};
use crate::test_gen::{
    generate_all_transitions, replay_cases, AssignmentMode, CoverageError, CoverageReport, GenError,
    Strategy, TestCase, TestSuite,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error(transparent)]
    FeatureModel(#[from] FeatureModelError),
    #[error(transparent)]
    Prune(#[from] PruneError),
    #[error(transparent)]
    Machine(#[from] StateMachineError),
    #[error(transparent)]
    Generation(#[from] GenError),
    #[error(transparent)]
    Coverage(#[from] CoverageError),
    #[error("variant {index} {configuration}: {source}")]
    Variant {
        index: usize,
        configuration: Configuration,
        source: Box<PipelineError>,
    },
    #[error("variable `{0}` of the state machine clashes with a feature variable")]
    VariableClash(String),
    #[error("no valid configuration is consistent with prolog {0}")]
    NoValidCompletion(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PipelineKind {
    TopDown,
    BottomUp,
}

impl PipelineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PipelineKind::TopDown => "top-down",
            PipelineKind::BottomUp => "bottom-up",
        }
    }
}

impl fmt::Display for PipelineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PipelineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "top-down" => Ok(PipelineKind::TopDown),
            "bottom-up" => Ok(PipelineKind::BottomUp),
            other => Err(format!("unknown pipeline `{other}` (expected top-down or bottom-up)")),
        }
    }
}

/// One product variant with the suite that tests it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub name: String,
    pub configuration: Configuration,
    pub suite: TestSuite,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    /// The flat model the suite was generated on and replays against.
    #[serde(skip)]
    pub machine: Option<StateMachine>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProductLineTestPlan {
    pub kind: PipelineKind,
    pub product_line: String,
    pub model: String,
    pub strategy: String,
    /// Coverage identities of the 150% model.
    pub targets: BTreeSet<String>,
    pub features: BTreeSet<String>,
    /// Features absent from at least one valid configuration.
    pub deselectable: BTreeSet<String>,
    pub variants: Vec<Variant>,
}

impl ProductLineTestPlan {
    fn empty(
        kind: PipelineKind,
        fm: &FeatureModel,
        sm150: &StateMachine,
        strategy: &str,
    ) -> Result<ProductLineTestPlan, PipelineError> {
        Ok(ProductLineTestPlan {
            kind,
            product_line: fm.name().to_string(),
            model: sm150.name().to_string(),
            strategy: strategy.to_string(),
            targets: sm150.coverage_targets(),
            features: fm.feature_ids().map(str::to_string).collect(),
            deselectable: fm.deselectable_features()?,
            variants: Vec::new(),
        })
    }

    pub fn from_json(text: &str) -> Result<ProductLineTestPlan, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn cases(&self) -> impl Iterator<Item = &TestCase> {
        self.variants.iter().flat_map(|v| v.suite.cases.iter())
    }

    pub fn configurations(&self) -> BTreeSet<&Configuration> {
        self.variants.iter().map(|v| &v.configuration).collect()
    }
}

fn annotate(index: usize, configuration: &Configuration, e: PipelineError) -> PipelineError {
    PipelineError::Variant {
        index,
        configuration: configuration.clone(),
        source: Box::new(e),
    }
}

fn test_variant(
    index: usize,
    cfg: &Configuration,
    sm150: &StateMachine,
    map: &MappingModel,
    strategy: Strategy,
) -> Result<Variant, PipelineError> {
    let name = format!("variant-{}", index + 1);
    let run = || -> Result<Variant, PipelineError> {
        let pruned = map.prune(sm150, cfg)?;
        let machine = pruned.machine.renamed(format!("{}/{name}", sm150.name()));
        let suite = generate_all_transitions(&machine, &AssignmentMode::Free, strategy)?;
        Ok(Variant {
            name: name.clone(),
            configuration: cfg.clone(),
            suite,
            warnings: pruned.warnings,
            machine: Some(machine),
        })
    };
    run().map_err(|e| annotate(index + 1, cfg, e))
}

/// Derive variants for `criteria`, prune a 100% model for each and cover it.
/// With `jobs > 1` variants are generated on that many threads; results are
/// merged in variant order.
pub fn top_down(
    fm: &FeatureModel,
    sm150: &StateMachine,
    map: &MappingModel,
    criteria: &[CoverageCriterion],
    strategy: Strategy,
    jobs: usize,
) -> Result<ProductLineTestPlan, PipelineError> {
    let mut plan = ProductLineTestPlan::empty(PipelineKind::TopDown, fm, sm150, strategy.as_str())?;
    let configs = fm.derive_variants(criteria)?;
    let jobs = jobs.clamp(1, configs.len().max(1));
    let results: Vec<Result<Variant, PipelineError>> = if jobs == 1 {
        configs
            .iter()
            .enumerate()
            .map(|(i, c)| test_variant(i, c, sm150, map, strategy))
            .collect()
    } else {
        let mut slots: Vec<Option<Result<Variant, PipelineError>>> = vec![None; configs.len()];
        std::thread::scope(|scope| {
            let chunk = configs.len().div_ceil(jobs);
            for (k, out) in slots.chunks_mut(chunk).enumerate() {
                let configs = &configs;
                scope.spawn(move || {
                    for (j, slot) in out.iter_mut().enumerate() {
                        let i = k * chunk + j;
                        *slot = Some(test_variant(i, &configs[i], sm150, map, strategy));
                    }
                });
            }
        });
        slots.into_iter().map(|s| s.expect("every slot filled")).collect()
    };
    for r in results {
        plan.variants.push(r?);
    }
    Ok(plan)
}

fn presence_vars(map: &MappingModel, element: &str) -> Expr {
    map.presence(element).rename(&feature_variable)
}

/// Presence of a state together with all its ancestors.
fn state_chain(sm: &StateMachine, map: &MappingModel, state: &str) -> Vec<Expr> {
    std::iter::once(state)
        .chain(sm.ancestors(state))
        .map(|s| presence_vars(map, s))
        .collect()
}

/// Presence of the states entered when `state` is a target: its ancestors,
/// itself and the initial-substate chain below it.
fn entry_chain(sm: &StateMachine, map: &MappingModel, state: &str) -> Vec<Expr> {
    let mut parts = state_chain(sm, map, state);
    let mut cur = state;
    while let Some(next) = sm.initial_substate(cur) {
        parts.push(presence_vars(map, next));
        cur = next;
    }
    parts
}

/// Add one guard variable per feature to the 150% model and conjoin every
/// transition's guard with the presence conditions it depends on: its own,
/// those of its source and target states with their ancestors, and those of
/// the states entered below a composite target. The machine constraint
/// becomes feature-model validity over the variables, so only valid
/// configurations are admissible. The result keeps the hierarchy.
pub fn enrich(
    sm150: &StateMachine,
    fm: &FeatureModel,
    map: &MappingModel,
) -> Result<StateMachine, PipelineError> {
    fm.variable_map()?;
    let feature_vars: BTreeSet<String> = fm.feature_ids().map(feature_variable).collect();
    if let Some(v) = sm150
        .variables()
        .iter()
        .find(|v| feature_vars.contains(&v.name))
    {
        return Err(PipelineError::VariableClash(v.name.clone()));
    }
    let transitions = sm150
        .transitions()
        .iter()
        .map(|t| {
            let mut parts: Vec<Expr> = t.guard.iter().cloned().collect();
            parts.push(presence_vars(map, &t.id));
            parts.extend(state_chain(sm150, map, &t.source));
            parts.extend(entry_chain(sm150, map, &t.target));
            let guard = match Expr::all(parts).simplify() {
                Expr::Const(true) => None,
                g => Some(g),
            };
            Transition { guard, ..t.clone() }
        })
        .collect();
    let mut variables = sm150.variables().to_vec();
    variables.extend(fm.feature_ids().map(|f| GuardVariable::new(feature_variable(f))));
    let mut constraint = vec![fm.validity_expr(&feature_variable)];
    constraint.extend(sm150.constraint().cloned());
    constraint.extend(entry_chain(sm150, map, sm150.initial()));
    let constraint = Expr::all(constraint).simplify();
    Ok(StateMachine::new(
        format!("{}+enriched", sm150.name()),
        sm150.initial(),
        sm150.states().to_vec(),
        transitions,
        variables,
        Some(constraint),
    )?)
}

/// The valid configuration with the fewest selected features (ties broken
/// lexicographically) that agrees with every feature variable bound in
/// `prolog`. Other prolog variables are ignored.
pub fn complete_prolog(prolog: &Assignment, fm: &FeatureModel) -> Result<Configuration, PipelineError> {
    let vars = fm.variable_map()?;
    let bound: Vec<(usize, bool)> = prolog
        .iter()
        .filter_map(|(v, b)| {
            vars.get(v)
                .map(|f| (fm.index_of(f).expect("feature of the model"), b))
        })
        .collect();
    let mut best: Option<(usize, Configuration)> = None;
    fm.for_each_valid(&mut |sel: &[bool]| {
        if bound.iter().all(|&(i, b)| sel[i] == b) {
            let cfg = fm.config_of(sel);
            let key = (cfg.len(), cfg);
            if best.as_ref().is_none_or(|b| key < *b) {
                best = Some(key);
            }
        }
        ControlFlow::Continue(())
    })?;
    best.map(|(_, c)| c)
        .ok_or_else(|| PipelineError::NoValidCompletion(prolog_string(prolog)))
}

fn prolog_string(prolog: &Assignment) -> String {
    let parts: Vec<String> = prolog
        .iter()
        .map(|(k, v)| format!("{k}={}", u8::from(v)))
        .collect();
    format!("{{{}}}", parts.join(", "))
}

/// The configuration a bottom-up test case needs.
pub fn extract_configuration(case: &TestCase, fm: &FeatureModel) -> Result<Configuration, PipelineError> {
    complete_prolog(&case.prolog, fm)
}

/// Group cases by configuration in first-appearance order.
fn group_cases(
    cases: Vec<(Configuration, TestCase)>,
) -> Vec<(Configuration, Vec<TestCase>)> {
    let mut groups: Vec<(Configuration, Vec<TestCase>)> = Vec::new();
    for (cfg, case) in cases {
        match groups.iter_mut().find(|(c, _)| *c == cfg) {
            Some((_, cs)) => cs.push(case),
            None => groups.push((cfg, vec![case])),
        }
    }
    groups
}

fn suite_of(model: &str, strategy: &str, targets: &BTreeSet<String>, cases: Vec<TestCase>) -> TestSuite {
    let coverage = CoverageReport::from_traces(targets.clone(), cases.iter().map(|c| &c.trace));
    TestSuite {
        model: model.to_string(),
        strategy: strategy.to_string(),
        aliases: BTreeMap::new(),
        cases,
        coverage,
    }
}

fn variants_from_groups(
    groups: Vec<(Configuration, Vec<TestCase>)>,
    machine: Option<&StateMachine>,
    model: &str,
    strategy: &str,
    targets: &BTreeSet<String>,
) -> Vec<Variant> {
    groups
        .into_iter()
        .enumerate()
        .map(|(i, (configuration, cases))| Variant {
            name: format!("variant-{}", i + 1),
            configuration,
            suite: suite_of(model, strategy, targets, cases),
            warnings: vec![],
            machine: machine.cloned(),
        })
        .collect()
}

/// Cover the enriched 150% model with free per-case assignments and group
/// the cases by the configuration extracted from their prologs.
pub fn bottom_up(
    fm: &FeatureModel,
    sm150: &StateMachine,
    map: &MappingModel,
    strategy: Strategy,
) -> Result<ProductLineTestPlan, PipelineError> {
    let mut plan = ProductLineTestPlan::empty(PipelineKind::BottomUp, fm, sm150, strategy.as_str())?;
    let enriched = enrich(sm150, fm, map)?.flatten()?;
    let suite = generate_all_transitions(&enriched, &AssignmentMode::Free, strategy)?;
    let mut tagged = Vec::new();
    for case in suite.cases {
        tagged.push((extract_configuration(&case, fm)?, case));
    }
    let targets = enriched.coverage_targets();
    plan.variants = variants_from_groups(
        group_cases(tagged),
        Some(&enriched),
        enriched.name(),
        strategy.as_str(),
        &targets,
    );
    Ok(plan)
}

/// Regroup the cases of a bottom-up plan under as few configurations as
/// first-fit merging finds: a case joins the first group whose prolog union
/// stays consistent and still extends to a valid configuration. Each group
/// is then completed with [`complete_prolog`]. Top-down plans are returned
/// unchanged.
pub fn minimize_variants(
    plan: &ProductLineTestPlan,
    fm: &FeatureModel,
) -> Result<ProductLineTestPlan, PipelineError> {
    if plan.kind == PipelineKind::TopDown {
        return Ok(plan.clone());
    }
    let mut groups: Vec<(Assignment, Vec<TestCase>)> = Vec::new();
    for case in plan.cases() {
        let mut placed = false;
        for (union, cases) in groups.iter_mut() {
            let Some(merged) = union.union(&case.prolog) else {
                continue;
            };
            if complete_prolog(&merged, fm).is_ok() {
                *union = merged;
                cases.push(case.clone());
                placed = true;
                break;
            }
        }
        if !placed {
            groups.push((case.prolog.clone(), vec![case.clone()]));
        }
    }
    let mut completed = Vec::new();
    for (union, cases) in groups {
        completed.push((complete_prolog(&union, fm)?, cases));
    }
    let first = plan.variants.first();
    let machine = first.and_then(|v| v.machine.as_ref());
    let model = first.map_or(plan.model.as_str(), |v| v.suite.model.as_str());
    let targets = first.map_or(plan.targets.clone(), |v| v.suite.coverage.targets.clone());
    let mut out = plan.clone();
    out.variants = variants_from_groups(completed, machine, model, &plan.strategy, &targets);
    Ok(out)
}

/// Build a plan from hand-written suites, one per configuration. Each suite
/// is replayed on the model the pipeline would test: the pruned 100% model
/// for top-down, the enriched 150% model for bottom-up.
pub fn reference_plan(
    kind: PipelineKind,
    fm: &FeatureModel,
    sm150: &StateMachine,
    map: &MappingModel,
    entries: Vec<(Configuration, TestSuite)>,
) -> Result<ProductLineTestPlan, PipelineError> {
    let mut plan = ProductLineTestPlan::empty(kind, fm, sm150, "reference")?;
    let enriched = match kind {
        PipelineKind::BottomUp => Some(enrich(sm150, fm, map)?.flatten()?),
        PipelineKind::TopDown => None,
    };
    for (i, (configuration, mut suite)) in entries.into_iter().enumerate() {
        let name = format!("variant-{}", i + 1);
        let run = || -> Result<(StateMachine, Vec<String>), PipelineError> {
            Ok(match &enriched {
                Some(m) => (m.clone(), vec![]),
                None => {
                    let p = map.prune(sm150, &configuration)?;
                    (p.machine.renamed(format!("{}/{name}", sm150.name())), p.warnings)
                }
            })
        };
        let (machine, warnings) = run().map_err(|e| annotate(i + 1, &configuration, e))?;
        let traces = replay_cases(&machine, &suite.cases, &suite.aliases)
            .map_err(|e| annotate(i + 1, &configuration, e.into()))?;
        for (case, trace) in suite.cases.iter_mut().zip(&traces) {
            case.trace = trace.clone();
        }
        suite.model = machine.name().to_string();
        suite.coverage = CoverageReport::from_traces(machine.coverage_targets(), &traces);
        plan.variants.push(Variant {
            name,
            configuration,
            suite,
            warnings,
            machine: Some(machine),
        });
    }
    Ok(plan)
}
