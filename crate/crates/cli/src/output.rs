use std::io::IsTerminal;
use std::path::Path;

use clap::ValueEnum;
use pltgen_core::test_gen::CoverageError;
use pltgen_core::{
    FeatureModelError, GenError, MappingError, PipelineError, PruneError, ReportError,
    StateMachineError,
};
use serde_json::{json, Map, Value};

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ColorChoice {
    Auto,
    Never,
    Always,
}

pub struct Painter {
    on: bool,
}

impl Painter {
    pub fn new(choice: ColorChoice) -> Painter {
        let on = match choice {
            ColorChoice::Always => true,
            ColorChoice::Never => false,
            ColorChoice::Auto => std::io::stdout().is_terminal(),
        };
        Painter { on }
    }

    fn paint(&self, code: &str, s: &str) -> String {
        if self.on {
            format!("\x1b[{code}m{s}\x1b[0m")
        } else {
            s.to_string()
        }
    }

    pub fn ok(&self, s: &str) -> String {
        self.paint("32", s)
    }

    pub fn fail(&self, s: &str) -> String {
        self.paint("31", s)
    }
}

fn classify(e: &anyhow::Error, out: &mut Map<String, Value>) -> &'static str {
    for cause in e.chain() {
        if let Some(CoverageError::Replay { case, error }) = cause.downcast_ref::<CoverageError>() {
            out.insert("case".into(), json!(case));
            if let Some(step) = error.step() {
                out.insert("step".into(), json!(step));
            }
            return error.kind();
        }
        if let Some(e) = cause.downcast_ref::<FeatureModelError>() {
            return match e {
                FeatureModelError::Unsatisfiable => "unsatisfiable",
                FeatureModelError::Syntax(_) => "syntax",
                _ => "feature-model",
            };
        }
        if let Some(e) = cause.downcast_ref::<MappingError>() {
            return match e {
                MappingError::UnknownFeature { feature, .. } => {
                    out.insert("feature".into(), json!(feature));
                    "unknown-feature"
                }
                MappingError::Syntax(_) => "syntax",
                _ => "mapping",
            };
        }
        if cause.is::<StateMachineError>() {
            return "state-machine";
        }
        if cause.is::<PruneError>() {
            return "prune";
        }
        if cause.is::<GenError>() {
            return "generation";
        }
        if cause.is::<PipelineError>() {
            return "pipeline";
        }
        if cause.is::<ReportError>() {
            return "report";
        }
        if cause.is::<serde_json::Error>() {
            return "syntax";
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
    }
    "error"
}

/// One JSON line describing `e`, for standard error.
pub fn diagnostic(path: Option<&Path>, document: &str, e: &anyhow::Error) -> String {
    let mut out = Map::new();
    out.insert("document".into(), json!(document));
    if let Some(p) = path {
        out.insert("path".into(), json!(p.display().to_string()));
    }
    let kind = classify(e, &mut out);
    out.insert("kind".into(), json!(kind));
    out.insert("message".into(), json!(format!("{e:#}")));
    Value::Object(out).to_string()
}
