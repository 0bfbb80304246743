//! Side-by-side metrics for product-line test plans.
//!
//! Efficiency is measured by total event calls, redundancy index and variant
//! count; thoroughness by transition coverage over the 150% model and by
//! feature-selection coverage of the tested configurations.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipelines::{PipelineKind, ProductLineTestPlan};
use crate::test_gen::CoverageReport;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReportError {
    #[error("plan {index} is for {found}, expected {expected}")]
    Mismatch {
        index: usize,
        expected: String,
        found: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PlanRow {
    pub pipeline: PipelineKind,
    pub strategy: String,
    pub variants: usize,
    pub cases: usize,
    pub events: usize,
    pub targets: usize,
    pub covered: usize,
    pub transition_coverage: f64,
    pub features_selected: f64,
    pub features_unselected: f64,
    /// Hits beyond the first, summed over targets and over all suites.
    pub redundancy: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ComparisonReport {
    pub product_line: String,
    pub model: String,
    pub rows: Vec<PlanRow>,
}

/// One variant of a plan, measured against the model its suite was
/// generated for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VariantRow {
    pub name: String,
    pub configuration: Vec<String>,
    pub cases: usize,
    pub events: usize,
    pub covered: usize,
    pub targets: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PlanSummary {
    pub product_line: String,
    pub model: String,
    pub plan: PlanRow,
    pub variants: Vec<VariantRow>,
}

fn ratio(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

fn row(plan: &ProductLineTestPlan) -> PlanRow {
    let traces = plan.cases().map(|c| &c.trace);
    let coverage = CoverageReport::from_traces(plan.targets.clone(), traces);
    let configs = plan.configurations();
    let selected = plan
        .features
        .iter()
        .filter(|f| configs.iter().any(|c| c.contains(f)))
        .count();
    let unselected = plan
        .deselectable
        .iter()
        .filter(|f| configs.iter().any(|c| !c.contains(f)))
        .count();
    PlanRow {
        pipeline: plan.kind,
        strategy: plan.strategy.clone(),
        variants: configs.len(),
        cases: plan.cases().count(),
        events: plan.cases().map(|c| c.events.len()).sum(),
        targets: coverage.targets.len(),
        covered: coverage.covered.len(),
        transition_coverage: coverage.ratio,
        features_selected: ratio(selected, plan.features.len()),
        features_unselected: ratio(unselected, plan.deselectable.len()),
        redundancy: coverage.redundancy(),
    }
}

/// One row per plan, in input order. Every plan must come from the same
/// feature model and 150% model.
pub fn compare(plans: &[ProductLineTestPlan]) -> Result<ComparisonReport, ReportError> {
    let (product_line, model) = plans
        .first()
        .map(|p| (p.product_line.clone(), p.model.clone()))
        .unwrap_or_default();
    for (i, p) in plans.iter().enumerate() {
        for (expected, found) in [(&product_line, &p.product_line), (&model, &p.model)] {
            if expected != found {
                return Err(ReportError::Mismatch {
                    index: i + 1,
                    expected: expected.clone(),
                    found: found.clone(),
                });
            }
        }
    }
    Ok(ComparisonReport {
        product_line,
        model,
        rows: plans.iter().map(row).collect(),
    })
}

/// The plan's comparison row plus one row per variant.
pub fn summarize(plan: &ProductLineTestPlan) -> PlanSummary {
    let variants = plan
        .variants
        .iter()
        .map(|v| VariantRow {
            name: v.name.clone(),
            configuration: v.configuration.iter().map(str::to_string).collect(),
            cases: v.suite.cases.len(),
            events: v.suite.event_count(),
            covered: v.suite.coverage.covered.len(),
            targets: v.suite.coverage.targets.len(),
            ratio: v.suite.coverage.ratio,
        })
        .collect();
    PlanSummary {
        product_line: plan.product_line.clone(),
        model: plan.model.clone(),
        plan: row(plan),
        variants,
    }
}

fn render(title: &str, header: &[&str], body: &[Vec<String>], left: usize) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for line in body {
        for (w, cell) in widths.iter_mut().zip(line) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let _ = writeln!(out, "{title}");
    let mut emit = |cells: Vec<&str>| {
        let line: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i < left { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    };
    emit(header.to_vec());
    for line in body {
        emit(line.iter().map(String::as_str).collect());
    }
    out
}

fn pct(r: f64) -> String {
    format!("{:.1}%", r * 100.0)
}

impl PlanSummary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    /// The comparison row followed by a per-variant table.
    pub fn to_table(&self) -> String {
        let head = ComparisonReport {
            product_line: self.product_line.clone(),
            model: self.model.clone(),
            rows: vec![self.plan.clone()],
        };
        let body: Vec<Vec<String>> = self
            .variants
            .iter()
            .map(|v| {
                vec![
                    v.name.clone(),
                    v.cases.to_string(),
                    v.events.to_string(),
                    format!("{}/{} ({})", v.covered, v.targets, pct(v.ratio)),
                    v.configuration.join(","),
                ]
            })
            .collect();
        let variants = render(
            "variants",
            &["variant", "cases", "events", "coverage", "configuration"],
            &body,
            1,
        );
        format!("{}\n{}", head.to_table(), variants)
    }
}

impl ComparisonReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<ComparisonReport, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Aligned-column text table, one line per plan.
    pub fn to_table(&self) -> String {
        let header = [
            "pipeline",
            "strategy",
            "variants",
            "cases",
            "events",
            "transitions",
            "selected",
            "unselected",
            "redundancy",
        ];
        let body: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.pipeline.to_string(),
                    r.strategy.clone(),
                    r.variants.to_string(),
                    r.cases.to_string(),
                    r.events.to_string(),
                    format!("{}/{} ({})", r.covered, r.targets, pct(r.transition_coverage)),
                    pct(r.features_selected),
                    pct(r.features_unselected),
                    r.redundancy.to_string(),
                ]
            })
            .collect();
        render(&format!("{} / {}", self.product_line, self.model), &header, &body, 2)
    }
}
