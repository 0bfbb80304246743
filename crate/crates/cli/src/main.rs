//! `pltgen`: product-line test generation from the command line.

mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pltgen_core::pipelines::{bottom_up, enrich, minimize_variants, top_down};
use pltgen_core::test_gen::check_coverage;
use pltgen_core::{
    compare, summarize, Configuration, CoverageCriterion, FeatureModel, FeatureModelError,
    MappingModel,
    PipelineKind, ProductLineTestPlan, StateMachine, Strategy, TestSuite,
};

use output::{diagnostic, ColorChoice, Painter};

#[derive(Parser)]
#[command(name = "pltgen", version, about = "Model-based test generation for software product lines")]
struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,

    /// Colored table output.
    #[arg(long, global = true, env = "PLTGEN_COLOR", value_enum, default_value_t = ColorChoice::Auto)]
    color: ColorChoice,

    /// Print pruning warnings and stage progress to standard error.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Table,
    Dot,
}

#[derive(Args)]
struct Models {
    /// Feature model document.
    #[arg(long)]
    fm: Option<PathBuf>,
    /// 150% state machine document.
    #[arg(long)]
    sm: Option<PathBuf>,
    /// Mapping model document.
    #[arg(long)]
    map: Option<PathBuf>,
}

#[derive(Args)]
struct MachineArgs {
    /// 150% state machine document.
    #[arg(long)]
    sm: PathBuf,
    /// Feature model document.
    #[arg(long)]
    fm: Option<PathBuf>,
    /// Mapping model document.
    #[arg(long)]
    map: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse the documents and cross-check the mapping against them.
    #[command(group = clap::ArgGroup::new("docs").args(["fm", "sm", "map"]).required(true).multiple(true))]
    Validate {
        #[command(flatten)]
        models: Models,
    },
    /// Derive, enumerate or count configurations of a feature model.
    Variants {
        #[arg(long)]
        fm: PathBuf,
        /// Coverage criteria for derivation: all-selected, all-unselected.
        #[arg(long, value_delimiter = ',', default_values = ["all-selected", "all-unselected"])]
        criteria: Vec<CoverageCriterion>,
        /// List every valid configuration.
        #[arg(long, conflicts_with = "count")]
        enumerate: bool,
        /// Print the number of valid configurations.
        #[arg(long)]
        count: bool,
    },
    /// Run a pipeline and write plan, suites and report.
    Generate {
        #[arg(long)]
        fm: PathBuf,
        #[arg(long)]
        sm: PathBuf,
        #[arg(long)]
        map: PathBuf,
        /// top-down or bottom-up.
        #[arg(long)]
        pipeline: PipelineKind,
        /// Criteria for top-down variant derivation.
        #[arg(long, value_delimiter = ',', default_values = ["all-selected", "all-unselected"])]
        criteria: Vec<CoverageCriterion>,
        /// greedy or fewest-cases.
        #[arg(long, default_value = "fewest-cases")]
        strategy: Strategy,
        /// Merge bottom-up variants with compatible prologs.
        #[arg(long)]
        minimize_variants: bool,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Worker threads for per-variant generation.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
        jobs: u16,
    },
    /// Replay a suite and report transition coverage.
    ///
    /// The suite is replayed on the 150% machine, on the 100% model of
    /// `--configuration`, or with `--enriched` on the guard-enriched machine.
    Check {
        suite: PathBuf,
        #[command(flatten)]
        models: MachineArgs,
        /// Comma-separated selected features; prunes the machine first.
        #[arg(long, value_delimiter = ',', conflicts_with = "enriched", requires_all = ["fm", "map"])]
        configuration: Option<Vec<String>>,
        /// Replay on the enriched 150% machine.
        #[arg(long, requires_all = ["fm", "map"])]
        enriched: bool,
    },
    /// Compare plans written by `generate`.
    Report {
        #[arg(required = true)]
        plans: Vec<PathBuf>,
    },
    /// Render a state machine in Graphviz DOT.
    ExportDot {
        #[command(flatten)]
        models: MachineArgs,
        /// Comma-separated selected features; prunes the machine first.
        #[arg(long, value_delimiter = ',', conflicts_with = "enriched", requires_all = ["fm", "map"])]
        configuration: Option<Vec<String>>,
        /// Render the enriched 150% machine.
        #[arg(long, requires_all = ["fm", "map"])]
        enriched: bool,
        /// Flatten before rendering.
        #[arg(long)]
        flat: bool,
    },
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load_fm(path: &Path) -> Result<FeatureModel> {
    FeatureModel::from_json(&read(path)?).with_context(|| format!("in {}", path.display()))
}

fn load_sm(path: &Path) -> Result<StateMachine> {
    StateMachine::from_json(&read(path)?).with_context(|| format!("in {}", path.display()))
}

fn load_map(path: &Path, fm: &FeatureModel, sm: &StateMachine) -> Result<MappingModel> {
    MappingModel::from_json(&read(path)?, fm, sm).with_context(|| format!("in {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    let mut text = text.to_string();
    if !text.ends_with('\n') {
        text.push('\n');
    }
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

struct Ctx {
    format: Format,
    paint: Painter,
    verbose: u8,
}

impl Ctx {
    fn table_or_json(&self, table: impl FnOnce() -> String, json: impl FnOnce() -> String) -> Result<()> {
        match self.format {
            Format::Table => print!("{}", table()),
            Format::Json => println!("{}", json()),
            Format::Dot => bail!("--format dot is only supported by export-dot"),
        }
        Ok(())
    }
}

fn validate(ctx: &Ctx, models: &Models) -> Result<bool> {
    let mut results: Vec<(&str, PathBuf, Result<String, String>)> = Vec::new();
    let mut diagnostics = Vec::new();
    let mut record = |what: &'static str, path: &Path, r: Result<String, &anyhow::Error>| {
        let r = r.map_err(|e| {
            diagnostics.push(diagnostic(Some(path), what, e));
            format!("{e:#}")
        });
        results.push((what, path.to_path_buf(), r));
    };
    let fm = models.fm.as_deref().map(|p| {
        let r = load_fm(p).and_then(|fm| {
            let n = fm.count_configurations()?;
            if n == 0 {
                return Err(FeatureModelError::Unsatisfiable.into());
            }
            Ok((fm, n))
        });
        (p, r)
    });
    let sm = models.sm.as_deref().map(|p| (p, load_sm(p)));
    if let Some((p, r)) = &fm {
        let status = r.as_ref().map(|(fm, n)| format!("{} features, {n} configurations", fm.len()));
        record("feature model", p, status);
    }
    if let Some((p, r)) = &sm {
        let status = r
            .as_ref()
            .map(|sm| format!("{} states, {} transitions", sm.state_ids().count(), sm.transitions().len()));
        record("state machine", p, status);
    }
    if let Some(p) = models.map.as_deref() {
        let r = match (&fm, &sm) {
            (Some((_, Ok((fm, _)))), Some((_, Ok(sm)))) => {
                load_map(p, fm, sm).map(|m| format!("{} entries", m.entries().len()))
            }
            (None, _) | (_, None) => Err(anyhow::anyhow!("mapping needs --fm and --sm to be checked")),
            _ => Err(anyhow::anyhow!("not checked: feature model or state machine is invalid")),
        };
        record("mapping", p, r.as_ref().map(String::clone));
    }
    for d in &diagnostics {
        eprintln!("{d}");
    }

    let ok = results.iter().all(|(_, _, r)| r.is_ok());
    match ctx.format {
        Format::Json => {
            let docs: Vec<serde_json::Value> = results
                .iter()
                .map(|(what, path, r)| {
                    serde_json::json!({
                        "document": what,
                        "path": path.display().to_string(),
                        "valid": r.is_ok(),
                        "detail": match r { Ok(s) | Err(s) => s },
                    })
                })
                .collect();
            let v = serde_json::json!({ "valid": ok, "documents": docs });
            println!("{}", serde_json::to_string_pretty(&v)?);
        }
        Format::Table => {
            let w = results.iter().map(|(_, p, _)| p.display().to_string().len()).max().unwrap_or(0);
            for (what, path, r) in &results {
                let (label, detail) = match r {
                    Ok(s) => (ctx.paint.ok("OK"), s.clone()),
                    Err(e) => (ctx.paint.fail("error"), e.clone()),
                };
                println!("{what:<13}  {:<w$}  {label}  {detail}", path.display().to_string());
            }
            let n = results.len();
            if ok {
                println!("{n} document{} valid", if n == 1 { "" } else { "s" });
            } else {
                let bad = results.iter().filter(|r| r.2.is_err()).count();
                println!("{bad} of {n} documents invalid");
            }
        }
        Format::Dot => bail!("--format dot is only supported by export-dot"),
    }
    Ok(ok)
}

fn variants(ctx: &Ctx, fm: &Path, criteria: &[CoverageCriterion], enumerate: bool, count: bool) -> Result<()> {
    let fm = load_fm(fm)?;
    if count {
        let n = fm.count_configurations()?;
        return ctx.table_or_json(|| format!("{n}\n"), || n.to_string());
    }
    let configs = if enumerate {
        fm.enumerate_configurations(usize::MAX)?
    } else {
        fm.derive_variants(criteria)?
    };
    let lists: Vec<Vec<&str>> = configs.iter().map(|c| c.iter().collect()).collect();
    ctx.table_or_json(
        || lists.iter().map(|l| format!("{}\n", l.join(","))).collect(),
        || serde_json::to_string_pretty(&lists).expect("lists serialize"),
    )
}

#[allow(clippy::too_many_arguments)]
fn generate(
    ctx: &Ctx,
    paths: (&Path, &Path, &Path),
    pipeline: PipelineKind,
    criteria: &[CoverageCriterion],
    strategy: Strategy,
    minimize: bool,
    out: &Path,
    jobs: usize,
) -> Result<()> {
    if minimize && pipeline == PipelineKind::TopDown {
        bail!("--minimize-variants applies to the bottom-up pipeline only");
    }
    let fm = load_fm(paths.0)?;
    let sm = load_sm(paths.1)?;
    let map = load_map(paths.2, &fm, &sm)?;
    let mut plan = match pipeline {
        PipelineKind::TopDown => top_down(&fm, &sm, &map, criteria, strategy, jobs)?,
        PipelineKind::BottomUp => bottom_up(&fm, &sm, &map, strategy)?,
    };
    if minimize {
        let before = plan.variants.len();
        plan = minimize_variants(&plan, &fm)?;
        if ctx.verbose > 0 {
            eprintln!("merged {before} variants into {}", plan.variants.len());
        }
    }
    if ctx.verbose > 0 {
        for v in &plan.variants {
            for w in &v.warnings {
                eprintln!("{}: {w}", v.name);
            }
        }
    }
    let suites = out.join("suites");
    fs::create_dir_all(&suites).with_context(|| format!("cannot create {}", suites.display()))?;
    for v in &plan.variants {
        write(&suites.join(format!("{}.json", v.name)), &v.suite.to_json())?;
    }
    let summary = summarize(&plan);
    write(&out.join("plan.json"), &plan.to_json())?;
    write(&out.join("report.json"), &summary.to_json())?;
    write(&out.join("report.txt"), &summary.to_table())?;
    ctx.table_or_json(|| summary.to_table(), || summary.to_json())
}

fn configuration(ids: &[String], fm: &FeatureModel) -> Result<Configuration> {
    let cfg: Configuration = ids.iter().map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    if let Some(bad) = cfg.iter().find(|f| !fm.contains(f)) {
        bail!("unknown feature `{bad}` in --configuration");
    }
    if !fm.is_valid(&cfg)? {
        bail!("configuration {} is not valid", cfg.iter().collect::<Vec<_>>().join(","));
    }
    Ok(cfg)
}

/// The machine selected by `--configuration` / `--enriched`, or the 150%
/// machine itself.
fn target_machine(models: &MachineArgs, cfg: &Option<Vec<String>>, enriched: bool, verbose: u8) -> Result<StateMachine> {
    let sm = load_sm(&models.sm)?;
    let (Some(fm), Some(map)) = (&models.fm, &models.map) else {
        return Ok(sm);
    };
    if cfg.is_none() && !enriched {
        return Ok(sm);
    }
    let fm = load_fm(fm)?;
    let map = load_map(map, &fm, &sm)?;
    if enriched {
        return Ok(enrich(&sm, &fm, &map)?);
    }
    let cfg = configuration(cfg.as_deref().unwrap_or_default(), &fm)?;
    let pruned = map.prune(&sm, &cfg)?;
    if verbose > 0 {
        for w in &pruned.warnings {
            eprintln!("{w}");
        }
    }
    Ok(pruned.machine)
}

fn check(ctx: &Ctx, suite: &Path, models: &MachineArgs, cfg: &Option<Vec<String>>, enriched: bool) -> Result<()> {
    let text = read(suite)?;
    let suite = TestSuite::from_json(&text).with_context(|| format!("in {}", suite.display()))?;
    let machine = target_machine(models, cfg, enriched, ctx.verbose)?;
    let report = check_coverage(&machine, &suite.cases, &suite.aliases)?;
    let events = suite.event_count();
    ctx.table_or_json(
        || {
            let mut s = format!(
                "model     {}\ncases     {}\nevents    {events}\ncoverage  {}/{} ({:.1}%)\n",
                machine.name(),
                suite.cases.len(),
                report.covered.len(),
                report.targets.len(),
                report.ratio * 100.0,
            );
            let missing: Vec<&str> = report.targets.difference(&report.covered).map(String::as_str).collect();
            if !missing.is_empty() {
                s.push_str(&format!("uncovered {}\n", missing.join(", ")));
            }
            s
        },
        || {
            let v = serde_json::json!({
                "model": machine.name(),
                "cases": suite.cases.len(),
                "events": events,
                "coverage": report,
            });
            serde_json::to_string_pretty(&v).expect("report serializes")
        },
    )
}

fn report(ctx: &Ctx, paths: &[PathBuf]) -> Result<()> {
    let mut plans = Vec::new();
    for p in paths {
        plans.push(ProductLineTestPlan::from_json(&read(p)?).with_context(|| format!("in {}", p.display()))?);
    }
    let cmp = compare(&plans)?;
    ctx.table_or_json(|| cmp.to_table(), || cmp.to_json())
}

fn export_dot(ctx: &Ctx, models: &MachineArgs, cfg: &Option<Vec<String>>, enriched: bool, flat: bool) -> Result<()> {
    let mut sm = target_machine(models, cfg, enriched, ctx.verbose)?;
    if flat {
        sm = sm.flatten()?;
    }
    match ctx.format {
        Format::Json => println!("{}", sm.to_json()),
        Format::Dot | Format::Table => print!("{}", sm.to_dot()),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    let ctx = Ctx {
        format: cli.format,
        paint: Painter::new(cli.color),
        verbose: cli.verbose,
    };
    match &cli.command {
        Command::Validate { models } => return validate(&ctx, models),
        Command::Variants {
            fm,
            criteria,
            enumerate,
            count,
        } => variants(&ctx, fm, criteria, *enumerate, *count)?,
        Command::Generate {
            fm,
            sm,
            map,
            pipeline,
            criteria,
            strategy,
            minimize_variants,
            out,
            jobs,
        } => generate(
            &ctx,
            (fm, sm, map),
            *pipeline,
            criteria,
            *strategy,
            *minimize_variants,
            out,
            usize::from(*jobs),
        )?,
        Command::Check {
            suite,
            models,
            configuration,
            enriched,
        } => check(&ctx, suite, models, configuration, *enriched)?,
        Command::Report { plans } => report(&ctx, plans)?,
        Command::ExportDot {
            models,
            configuration,
            enriched,
            flat,
        } => export_dot(&ctx, models, configuration, *enriched, *flat)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("{}", diagnostic(None, "error", &e));
            ExitCode::from(1)
        }
    }
}
