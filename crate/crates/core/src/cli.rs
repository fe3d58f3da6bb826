//! Command-line front end: `validate`, `recode`, `rules`, `tree` and `eval`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::assoc::{frequent_itemsets, generate_rules, itemize, AssocError, AssociationRule};
use crate::eval::{cross_validate, EvalError, EvalReport};
use crate::ingest::{parse_csv, validate_schema, Fingerprint, IngestError, ValidationSummary};
use crate::recode::{project_analysis, recode_table, AnalysisId, RecodedTable, Token, TARGET};
use crate::reptree::{fit, render_tree, TreeError, TreeParams};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_PARAM: i32 = 3;

pub const DEFAULT_MIN_SUPPORT: f64 = 0.05;
pub const DEFAULT_MIN_CONFIDENCE: f64 = 0.9;
pub const DEFAULT_FOLDS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Text,
    Structured,
}

fn parse_analysis(s: &str) -> Result<AnalysisId, String> {
    s.parse().map_err(|e: crate::recode::RecodeError| e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "evalmine", version, about = "Mine the student evaluation table")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Io {
    /// Evaluation CSV
    #[arg(long)]
    input: PathBuf,
    /// Write the report here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Debug, Args)]
struct TreeArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    min_leaf: usize,
    #[arg(long, default_value_t = 3)]
    prune_folds: usize,
    #[arg(long)]
    max_depth: Option<usize>,
}

impl TreeArgs {
    fn params(&self) -> TreeParams {
        TreeParams {
            min_leaf: self.min_leaf,
            prune_folds: self.prune_folds,
            seed: self.seed,
            max_depth: self.max_depth,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load the CSV and report per-column ranges
    Validate {
        #[command(flatten)]
        io: Io,
    },
    /// Emit the recoded nominal table
    Recode {
        #[command(flatten)]
        io: Io,
        #[arg(long, value_parser = parse_analysis)]
        analysis: Option<AnalysisId>,
    },
    /// Apriori association rules
    Rules {
        #[command(flatten)]
        io: Io,
        #[arg(long, value_parser = parse_analysis, default_value = "course-instructor")]
        analysis: AnalysisId,
        #[arg(long, default_value_t = DEFAULT_MIN_SUPPORT)]
        min_support: f64,
        #[arg(long, default_value_t = DEFAULT_MIN_CONFIDENCE)]
        min_confidence: f64,
        /// Restrict consequents to one item on this attribute
        #[arg(long, default_value = TARGET, conflicts_with = "any_consequent")]
        consequent: String,
        /// Allow any consequent
        #[arg(long)]
        any_consequent: bool,
    },
    /// Fit a pruned decision tree on the whole table and print it
    Tree {
        #[command(flatten)]
        io: Io,
        #[arg(long, value_parser = parse_analysis, default_value = "course-features")]
        analysis: AnalysisId,
        #[command(flatten)]
        tree: TreeArgs,
    },
    /// Stratified cross-validation of the tree learner
    Eval {
        #[command(flatten)]
        io: Io,
        #[arg(long, value_parser = parse_analysis, default_value = "course-features")]
        analysis: AnalysisId,
        #[arg(long, default_value_t = DEFAULT_FOLDS)]
        folds: usize,
        #[command(flatten)]
        tree: TreeArgs,
    },
}

/// Effective configuration echoed in every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: &'static str,
    pub input: String,
    pub format: Format,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analysis: Option<AnalysisId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_support: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_confidence: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub consequent: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub folds: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tree: Option<TreeParams>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Tool {
    pub name: &'static str,
    pub version: &'static str,
}

impl Default for Tool {
    fn default() -> Self {
        Tool {
            name: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
        }
    }
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

#[derive(Debug, Clone, Serialize)]
pub struct RuleRecord {
    pub line: String,
    pub antecedent: Vec<String>,
    pub consequent: Vec<String>,
    pub support: f64,
    pub confidence: f64,
    pub lift: f64,
    pub count: u32,
    pub antecedent_count: u32,
    pub consequent_count: u32,
}

impl From<&AssociationRule> for RuleRecord {
    fn from(r: &AssociationRule) -> Self {
        RuleRecord {
            line: r.to_string(),
            antecedent: r.antecedent.iter().map(|i| i.to_string()).collect(),
            consequent: r.consequent.iter().map(|i| i.to_string()).collect(),
            support: round4(r.support()),
            confidence: round4(r.confidence()),
            lift: round4(r.lift()),
            count: r.count,
            antecedent_count: r.antecedent_count,
            consequent_count: r.consequent_count,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RecodedPayload {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Token>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TreePayload {
    pub rendering: String,
    pub root: Option<String>,
    pub nodes: usize,
    pub leaves: usize,
    pub depth: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalPayload {
    pub accuracy: f64,
    pub weighted_f: f64,
    pub correct: u64,
    pub total: u64,
    pub confusion: [[u64; 2]; 2],
    pub per_class: Vec<crate::eval::ClassMetrics>,
    pub folds: usize,
    pub seed: u64,
    pub tree: TreeParams,
}

impl From<&EvalReport> for EvalPayload {
    fn from(r: &EvalReport) -> Self {
        EvalPayload {
            accuracy: r.metrics.accuracy,
            weighted_f: r.metrics.weighted_f,
            correct: r.confusion.correct(),
            total: r.confusion.total(),
            confusion: r.confusion.counts,
            per_class: r.metrics.per_class.clone(),
            folds: r.folds,
            seed: r.seed,
            tree: r.tree,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    Validation(ValidationSummary),
    Recoded(RecodedPayload),
    Rules(Vec<RuleRecord>),
    Tree(TreePayload),
    Eval(EvalPayload),
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub tool: Tool,
    pub config: RunConfig,
    pub dataset: Fingerprint,
    pub payload: Payload,
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn data(message: impl ToString) -> Self {
        CliError {
            code: EXIT_DATA,
            message: message.to_string(),
        }
    }

    fn param(message: impl ToString) -> Self {
        CliError {
            code: EXIT_PARAM,
            message: message.to_string(),
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        CliError::data(e)
    }
}

impl From<crate::recode::RecodeError> for CliError {
    fn from(e: crate::recode::RecodeError) -> Self {
        CliError::data(e)
    }
}

impl From<AssocError> for CliError {
    fn from(e: AssocError) -> Self {
        match e {
            AssocError::MinSupport(_) | AssocError::MinConfidence(_) | AssocError::UnknownAttribute(_) => {
                CliError::param(e)
            }
            _ => CliError::data(e),
        }
    }
}

impl From<TreeError> for CliError {
    fn from(e: TreeError) -> Self {
        match e {
            TreeError::InvalidParams(_) => CliError::param(e),
            _ => CliError::data(e),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Folds { .. } => CliError::param(e),
            EvalError::Tree(t) => t.into(),
            EvalError::EmptyMatrix => CliError::data(e),
        }
    }
}

fn check_fraction(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(CliError::param(format!("--{name} {v} outside (0, 1]")))
    }
}

struct Loaded {
    fingerprint: Fingerprint,
    table: crate::ingest::RawTable,
}

fn load(path: &Path) -> Result<Loaded, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    let table = parse_csv(&bytes)?;
    Ok(Loaded {
        fingerprint: Fingerprint::of(&bytes, &table),
        table,
    })
}

fn analysis_table(loaded: &Loaded, analysis: AnalysisId) -> Result<RecodedTable, CliError> {
    let recoded = recode_table(&loaded.table)?;
    Ok(project_analysis(&recoded, analysis)?)
}

fn base_config(command: &'static str, io: &Io) -> RunConfig {
    RunConfig {
        command,
        input: io.input.display().to_string(),
        format: io.format,
        analysis: None,
        min_support: None,
        min_confidence: None,
        consequent: None,
        folds: None,
        seed: None,
        tree: None,
    }
}

/// Output destination and format chosen on the command line.
pub struct Output {
    pub format: Format,
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first) and runs the pipeline, returning the
/// report and where it should go. Clap help/version requests surface as
/// `Err` with exit code 0.
pub fn execute<I, T>(args: I) -> Result<(Report, Output), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| {
        let code = match e.kind() {
            clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
            _ => EXIT_USAGE,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    })?;

    let (config, io, payload_fn): (RunConfig, &Io, Box<dyn Fn(&Loaded) -> Result<Payload, CliError>>) =
        match &cli.command {
            Command::Validate { io } => (
                base_config("validate", io),
                io,
                Box::new(|l: &Loaded| Ok(Payload::Validation(validate_schema(&l.table)))),
            ),
            Command::Recode { io, analysis } => {
                let analysis = *analysis;
                let config = RunConfig {
                    analysis,
                    ..base_config("recode", io)
                };
                (
                    config,
                    io,
                    Box::new(move |l: &Loaded| {
                        let recoded = recode_table(&l.table)?;
                        let table = match analysis {
                            Some(a) => project_analysis(&recoded, a)?,
                            None => recoded,
                        };
                        Ok(Payload::Recoded(RecodedPayload {
                            columns: table.columns().iter().map(|c| c.name.clone()).collect(),
                            rows: table.rows().map(|r| r.to_vec()).collect(),
                        }))
                    }),
                )
            }
            Command::Rules {
                io,
                analysis,
                min_support,
                min_confidence,
                consequent,
                any_consequent,
            } => {
                check_fraction("min-support", *min_support)?;
                check_fraction("min-confidence", *min_confidence)?;
                let (analysis, min_support, min_confidence) = (*analysis, *min_support, *min_confidence);
                let consequent = (!any_consequent).then(|| consequent.clone());
                let config = RunConfig {
                    analysis: Some(analysis),
                    min_support: Some(min_support),
                    min_confidence: Some(min_confidence),
                    consequent: consequent.clone(),
                    ..base_config("rules", io)
                };
                (
                    config,
                    io,
                    Box::new(move |l: &Loaded| {
                        let table = analysis_table(l, analysis)?;
                        let frequent = frequent_itemsets(&itemize(&table), min_support)?;
                        let rules = generate_rules(&frequent, min_confidence, consequent.as_deref())?;
                        Ok(Payload::Rules(rules.iter().map(RuleRecord::from).collect()))
                    }),
                )
            }
            Command::Tree { io, analysis, tree } => {
                let params = tree.params();
                params.validate()?;
                let analysis = *analysis;
                let config = RunConfig {
                    analysis: Some(analysis),
                    tree: Some(params),
                    ..base_config("tree", io)
                };
                (
                    config,
                    io,
                    Box::new(move |l: &Loaded| {
                        let table = analysis_table(l, analysis)?;
                        let tree = fit(&table, &params)?;
                        Ok(Payload::Tree(TreePayload {
                            rendering: render_tree(&tree),
                            root: tree.root_attribute().map(str::to_string),
                            nodes: tree.node_count(),
                            leaves: tree.leaf_count(),
                            depth: tree.depth(),
                        }))
                    }),
                )
            }
            Command::Eval {
                io,
                analysis,
                folds,
                tree,
            } => {
                let params = tree.params();
                params.validate()?;
                if *folds < 2 {
                    return Err(CliError::param(format!("--folds {folds} must be >= 2")));
                }
                let (analysis, folds, seed) = (*analysis, *folds, tree.seed);
                let config = RunConfig {
                    analysis: Some(analysis),
                    folds: Some(folds),
                    seed: Some(seed),
                    tree: Some(params),
                    ..base_config("eval", io)
                };
                (
                    config,
                    io,
                    Box::new(move |l: &Loaded| {
                        let table = analysis_table(l, analysis)?;
                        let report = cross_validate(&table, &params, folds, seed)?;
                        Ok(Payload::Eval(EvalPayload::from(&report)))
                    }),
                )
            }
        };

    let loaded = load(&io.input)?;
    let payload = payload_fn(&loaded)?;
    let output = Output {
        format: io.format,
        out: io.out.clone(),
    };
    Ok((
        Report {
            tool: Tool::default(),
            config,
            dataset: loaded.fingerprint,
            payload,
        },
        output,
    ))
}

fn echo_config(c: &RunConfig, out: &mut String) {
    let _ = writeln!(out, "# {} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "# command: {}", c.command);
    let _ = writeln!(out, "# input: {}", c.input);
    if let Some(a) = c.analysis {
        let _ = writeln!(out, "# analysis: {a}");
    }
    if let Some(s) = c.min_support {
        let _ = writeln!(out, "# min_support: {s}");
    }
    if let Some(s) = c.min_confidence {
        let _ = writeln!(out, "# min_confidence: {s}");
    }
    if c.command == "rules" {
        let _ = writeln!(out, "# consequent: {}", c.consequent.as_deref().unwrap_or("any"));
    }
    if let Some(k) = c.folds {
        let _ = writeln!(out, "# folds: {k}");
    }
    if let Some(s) = c.seed {
        let _ = writeln!(out, "# seed: {s}");
    }
}

fn echo_tree_params(p: &TreeParams, out: &mut String) {
    let _ = writeln!(out, "seed: {}", p.seed);
    let _ = writeln!(out, "prune_folds: {}", p.prune_folds);
    let _ = writeln!(out, "min_leaf: {}", p.min_leaf);
    match p.max_depth {
        Some(d) => {
            let _ = writeln!(out, "max_depth: {d}");
        }
        None => out.push_str("max_depth: unlimited\n"),
    }
}

/// Human-readable rendering of a report.
pub fn render_text(report: &Report) -> String {
    let mut out = String::new();
    if let Payload::Recoded(r) = &report.payload {
        // plain CSV so the output can be fed to other tools
        out.push_str(&r.columns.join(","));
        out.push('\n');
        for row in &r.rows {
            let cells: Vec<&str> = row.iter().map(|t| t.as_str()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        return out;
    }
    echo_config(&report.config, &mut out);
    let _ = writeln!(out, "# rows: {}", report.dataset.rows);
    let _ = writeln!(out, "# sha256: {}", report.dataset.sha256);
    out.push('\n');
    match &report.payload {
        Payload::Validation(v) => {
            let _ = writeln!(out, "{:<12} {:>5} {:>5} {:>8}  status  values", "column", "min", "max", "distinct");
            for c in &v.columns {
                let fmt_opt = |x: Option<i64>| x.map_or("-".to_string(), |v| v.to_string());
                let values: Vec<String> = c.values.iter().map(|(v, n)| format!("{v}:{n}")).collect();
                let _ = writeln!(
                    out,
                    "{:<12} {:>5} {:>5} {:>8}  {:<6}  {}",
                    c.name,
                    fmt_opt(c.min),
                    fmt_opt(c.max),
                    c.distinct(),
                    if c.within_range { "ok" } else { "RANGE" },
                    values.join(" ")
                );
            }
        }
        Payload::Rules(rules) => {
            if rules.is_empty() {
                out.push_str("no rules\n");
            }
            for (i, r) in rules.iter().enumerate() {
                let _ = writeln!(out, "{:>3}. {}", i + 1, r.line);
            }
        }
        Payload::Tree(t) => {
            out.push_str("REPTree\n=======\n\n");
            out.push_str(&t.rendering);
            let _ = writeln!(out, "\nSize of the tree : {}", t.nodes);
            if let Some(p) = &report.config.tree {
                echo_tree_params(p, &mut out);
            }
        }
        Payload::Eval(e) => {
            let _ = writeln!(
                out,
                "Correctly Classified Instances  {:>6}  {:.4} %",
                e.correct,
                100.0 * e.accuracy
            );
            let _ = writeln!(out, "Avg. F-Measure  {:.3}", e.weighted_f);
            out.push_str("\n=== Confusion Matrix ===\n");
            let _ = writeln!(out, "{:>6} {:>6}   <-- classified as", "No", "Yes");
            for (label, row) in ["No", "Yes"].iter().zip(&e.confusion) {
                let _ = writeln!(out, "{:>6} {:>6} | {label}", row[0], row[1]);
            }
            out.push('\n');
            for c in &e.per_class {
                let _ = writeln!(
                    out,
                    "{:<4} precision={:.4} recall={:.4} f1={:.4} support={}",
                    c.label.as_str(),
                    c.precision,
                    c.recall,
                    c.f1,
                    c.support
                );
            }
            out.push('\n');
            let _ = writeln!(out, "folds: {}", e.folds);
            echo_tree_params(&e.tree, &mut out);
        }
        Payload::Recoded(_) => unreachable!(),
    }
    out
}

/// Serializes the report. Structured output is a single pretty-printed
/// JSON document with field order fixed by the report types.
pub fn render_report(report: &Report, format: Format) -> String {
    match format {
        Format::Text => render_text(report),
        Format::Structured => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
    }
}

pub fn write_report(
    report: &Report,
    format: Format,
    destination: Option<&Path>,
    stdout: &mut dyn Write,
) -> std::io::Result<()> {
    let text = render_report(report, format);
    match destination {
        Some(path) => std::fs::write(path, text),
        None => stdout.write_all(text.as_bytes()),
    }
}

/// Runs the tool, writing the report and any diagnostic to the given
/// streams. Returns the process exit status.
pub fn run_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match execute(args) {
        Ok((report, output)) => {
            match write_report(&report, output.format, output.out.as_deref(), stdout) {
                Ok(()) => EXIT_OK,
                Err(e) => {
                    let dest = output
                        .out
                        .as_ref()
                        .map_or("stdout".to_string(), |p| p.display().to_string());
                    let _ = writeln!(stderr, "error: cannot write report to {dest}: {e}");
                    EXIT_DATA
                }
            }
        }
        Err(e) if e.code == EXIT_OK => {
            let _ = write!(stdout, "{}", e.message);
            EXIT_OK
        }
        Err(e) => {
            let msg = e.message.trim_end();
            if msg.starts_with("error:") {
                let _ = writeln!(stderr, "{msg}");
            } else {
                let _ = writeln!(stderr, "error: {msg}");
            }
            e.code
        }
    }
}

/// Runs the tool against the process's stdout and stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}
