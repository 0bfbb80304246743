//! Model-based test generation for software product lines.
//!
//! A product line is described by a [`FeatureModel`], a 150% [`StateMachine`]
//! holding the behavior of every variant, and a [`MappingModel`] attaching
//! presence conditions to machine elements. Two pipelines produce test
//! plans: [`pipelines::top_down`] derives variants first and tests each
//! pruned 100% model; [`pipelines::bottom_up`] tests the guard-enriched 150%
//! model and extracts the configuration each test case needs.

pub mod expr;
pub mod feature_model;
pub mod mapping;
pub mod pipelines;
pub mod report;
pub mod state_machine;
pub mod test_gen;

pub use expr::{Assignment, Expr};
pub use feature_model::{
    feature_variable, Configuration, CoverageCriterion, FeatureModel, FeatureModelBuilder,
    FeatureModelError,
};
pub use mapping::{MappingError, MappingModel, PruneError};
pub use pipelines::{PipelineError, PipelineKind, ProductLineTestPlan};
pub use report::{compare, summarize, ComparisonReport, PlanSummary, ReportError};
pub use state_machine::{
    canonicalize_events, EventAliases, GuardVariable, ReplayError, State, StateKind, StateMachine,
    StateMachineError, Trace, TraceStep, Transition,
};
pub use test_gen::{AssignmentMode, CoverageReport, GenError, Strategy, TestCase, TestSuite};
