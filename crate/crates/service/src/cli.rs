//! Command-line front end. Results go to stdout as canonical JSON (or
//! indented with `--pretty`); errors go to stderr as an error body.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;

use prokno_core::canonical::{to_canonical_json, to_pretty_json};
use prokno_core::food::{parse_recipes, MealSlot, Profile, Quantity};
use prokno_core::metrics::{parse_jsonl, AnnotatedSample, BenefitDenominator, GenerationLog, GoldRule, RiskConfig};
use prokno_core::pk::{load_pk, PkError, ProcessKnowledgeDoc, ValidationReport};
use prokno_core::qgen::{parse_candidates, EntailmentConfig, TagRuleSet};
use prokno_core::kg::TreeConfig;
use prokno_core::triage::{self, Position};
use prokno_core::PhraseMatcher;

use crate::artifacts::{self, Artifacts, LoadError};
use crate::config::ServiceConfig;
use crate::error::ApiError;
use crate::http::{self, AppState};
use crate::ops;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "prokno", version, about = "Process-knowledge triage, safety metrics and explanations")]
pub struct Cli {
    /// Indent JSON output
    #[arg(long, global = true)]
    pub pretty: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a process-knowledge document and print its validation report
    Validate { file: PathBuf },
    /// Pre-fill a session from cues found in text
    Classify {
        #[arg(long)]
        pk: PathBuf,
        #[arg(long)]
        lexicon: PathBuf,
        /// The text itself, a file holding it, or - for stdin
        #[arg(long)]
        text: String,
    },
    /// Answer a document's questions interactively
    Triage {
        #[arg(long)]
        pk: PathBuf,
    },
    /// Filter and rank candidate follow-up questions
    Candidates {
        /// Candidate questions, one JSON object per line
        #[arg(long = "in")]
        input: PathBuf,
        /// Questions already asked, one JSON object per line
        #[arg(long)]
        history: Option<PathBuf>,
        /// Tag transition rules (defaults to the built-in four)
        #[arg(long)]
        rules: Option<PathBuf>,
        #[command(flatten)]
        entailment: EntailmentArgs,
    },
    /// Compute a safety metric
    Metrics {
        #[command(subcommand)]
        kind: MetricCommand,
    },
    /// Check recipes against cooking-action and dietary rules
    Recipes {
        #[command(subcommand)]
        action: RecipeCommand,
    },
    /// Build an explanation tree over a knowledge graph
    Explain {
        #[arg(long)]
        kg: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        phrases: Vec<String>,
        #[arg(long, default_value_t = TreeConfig::default().theta_anchor)]
        theta_anchor: f64,
        #[arg(long, default_value_t = TreeConfig::default().theta_stop)]
        theta_stop: f64,
        #[arg(long, default_value_t = TreeConfig::default().max_depth)]
        max_depth: usize,
    },
    /// Run the HTTP service
    Serve {
        #[arg(long, env = "PROKNO_CONFIG")]
        config: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct EntailmentArgs {
    #[arg(long, default_value_t = EntailmentConfig::default().theta_e)]
    pub theta_e: f64,
    #[arg(long, default_value_t = EntailmentConfig::default().theta_n)]
    pub theta_n: f64,
    #[arg(long, default_value_t = EntailmentConfig::default().theta_c)]
    pub theta_c: f64,
}

impl EntailmentArgs {
    fn config(&self) -> EntailmentConfig {
        EntailmentConfig {
            theta_e: self.theta_e,
            theta_n: self.theta_n,
            theta_c: self.theta_c,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GoldRuleArg {
    Plurality,
    AnyAnnotator,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DenominatorArg {
    Verbatim,
    PerSample,
}

#[derive(Debug, Subcommand)]
pub enum MetricCommand {
    /// Average harmful-lexicon matches per generation, one report per log line
    Unsafe {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        lexicon: PathBuf,
        /// JSON array of harmful concept labels
        #[arg(long)]
        concepts: Option<PathBuf>,
    },
    /// Perceived risk over annotated samples
    Risk {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "plurality")]
        gold_rule: GoldRuleArg,
        #[arg(long, value_enum, default_value = "verbatim")]
        benefit_denominator: DenominatorArg,
    },
    /// Share of generations related to the query, one report per log line
    Semantic {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
    /// Entailment between consecutive generations, one report per log line
    Logical {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        entailment: EntailmentArgs,
    },
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    /// Recipes, one JSON object per line
    #[arg(long)]
    pub recipes: PathBuf,
    /// Rule directories or .actions.json / .diet.json files
    #[arg(long, num_args = 1.., required = true)]
    pub rules: Vec<PathBuf>,
    #[arg(long)]
    pub condition: String,
    /// Nutrient limit such as carbohydrate=45g (repeatable)
    #[arg(long = "limit", value_parser = parse_limit)]
    pub limits: Vec<(String, Quantity)>,
    #[arg(long)]
    pub cuisine: Option<String>,
    #[arg(long, value_parser = parse_meal_slot)]
    pub meal_slot: Option<MealSlot>,
}

impl ProfileArgs {
    fn profile(&self) -> Profile {
        Profile {
            condition: self.condition.clone(),
            cuisine: self.cuisine.clone(),
            meal_slot: self.meal_slot,
            limits: self.limits.iter().cloned().collect(),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum RecipeCommand {
    /// One verdict per recipe, one JSON object per line
    Evaluate(ProfileArgs),
    /// Recommended and rejected recipes
    Recommend(ProfileArgs),
}

fn parse_limit(raw: &str) -> Result<(String, Quantity), String> {
    let (name, value) = raw
        .split_once('=')
        .ok_or_else(|| format!("expected nutrient=amount+unit, got {raw:?}"))?;
    let split = value
        .find(|c: char| !(c.is_ascii_digit() || c == '.'))
        .ok_or_else(|| format!("limit {raw:?} has no unit"))?;
    let amount: f64 = value[..split]
        .parse()
        .map_err(|_| format!("limit {raw:?} has no amount"))?;
    let name = name.trim();
    if name.is_empty() {
        return Err(format!("limit {raw:?} names no nutrient"));
    }
    Ok((
        name.to_string(),
        Quantity {
            amount,
            unit: value[split..].trim().to_string(),
        },
    ))
}

fn parse_meal_slot(raw: &str) -> Result<MealSlot, String> {
    serde_json::from_value(serde_json::Value::String(raw.to_string()))
        .map_err(|_| format!("unknown meal slot {raw:?} (breakfast, lunch, dinner)"))
}

impl From<LoadError> for ApiError {
    fn from(e: LoadError) -> Self {
        ApiError::bad_request("load_error", e.to_string())
    }
}

fn read_string(path: &Path) -> Result<String, ApiError> {
    Ok(artifacts::read_string(path)?)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ApiError> {
    serde_json::from_str(&read_string(path)?)
        .map_err(|e| ApiError::bad_request("parse_error", format!("{}: {e}", path.display())))
}

fn load_doc(path: &Path) -> Result<ProcessKnowledgeDoc, ApiError> {
    Ok(load_pk(&artifacts::read(path)?)?)
}

/// Standard streams, swappable in tests.
pub struct Io<'a> {
    pub stdin: &'a mut dyn BufRead,
    pub stdout: &'a mut dyn Write,
    pub stderr: &'a mut dyn Write,
}

struct Output<'a, 'b> {
    pretty: bool,
    out: &'a mut Io<'b>,
}

impl Output<'_, '_> {
    fn json<T: Serialize>(&mut self, value: &T) -> Result<(), ApiError> {
        let text = if self.pretty {
            to_pretty_json(value)
        } else {
            to_canonical_json(value)
        }
        .map_err(|e| ApiError::bad_request("internal", e.to_string()))?;
        writeln!(self.out.stdout, "{text}").map_err(|e| ApiError::bad_request("io_error", e.to_string()))
    }

    /// One canonical JSON object per line, regardless of `--pretty`.
    fn jsonl<T: Serialize>(&mut self, values: &[T]) -> Result<(), ApiError> {
        for v in values {
            let text = to_canonical_json(v).map_err(|e| ApiError::bad_request("internal", e.to_string()))?;
            writeln!(self.out.stdout, "{text}").map_err(|e| ApiError::bad_request("io_error", e.to_string()))?;
        }
        Ok(())
    }
}

/// Parse `args` and run the command, returning the process exit code.
pub fn run<I, T>(args: I, io: &mut Io<'_>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { io.stderr } else { io.stdout };
            let _ = write!(sink, "{rendered}");
            return code;
        }
    };
    let pretty = cli.pretty;
    let mut out = Output { pretty, out: io };
    match execute(cli.command, &mut out) {
        Ok(code) => code,
        Err(e) => {
            let body = to_canonical_json(&e.body).unwrap_or_else(|_| e.to_string());
            let _ = writeln!(out.out.stderr, "{body}");
            EXIT_FAILURE
        }
    }
}

fn execute(command: Command, out: &mut Output<'_, '_>) -> Result<i32, ApiError> {
    match command {
        Command::Validate { file } => validate(&file, out),
        Command::Classify { pk, lexicon, text } => {
            let doc = load_doc(&pk)?;
            let lexicon = artifacts::load_lexicon_file(&lexicon)?;
            let text = resolve_text(&text, out.out.stdin)?;
            let (_, result) = triage::classify_session(&doc, &PhraseMatcher::new(&lexicon), &text, "classify")?;
            out.json(&result)?;
            Ok(EXIT_OK)
        }
        Command::Triage { pk } => {
            let doc = load_doc(&pk)?;
            let trace = interactive(&doc, out.out.stdin, out.out.stderr)?;
            out.json(&trace)?;
            Ok(EXIT_OK)
        }
        Command::Candidates {
            input,
            history,
            rules,
            entailment,
        } => {
            let candidates = parse_candidates(&read_string(&input)?)?;
            let history = match history {
                Some(p) => parse_candidates(&read_string(&p)?)?,
                None => Vec::new(),
            };
            let rules: Option<TagRuleSet> = match rules {
                Some(p) => Some(TagRuleSet::from_json(&artifacts::read(&p)?)?),
                None => None,
            };
            out.json(&ops::validate_candidates(
                &history,
                &candidates,
                rules.as_ref(),
                entailment.config(),
            ))?;
            Ok(EXIT_OK)
        }
        Command::Metrics { kind } => metrics(kind, out),
        Command::Recipes { action } => recipes(action, out),
        Command::Explain {
            kg,
            phrases,
            theta_anchor,
            theta_stop,
            max_depth,
        } => {
            let kg = artifacts::load_kg_file(&kg)?;
            let config = TreeConfig {
                theta_anchor,
                theta_stop,
                max_depth,
            };
            out.json(&ops::explain(&phrases, &kg, &config)?)?;
            Ok(EXIT_OK)
        }
        Command::Serve { config } => {
            let config = ServiceConfig::from_file(&config).map_err(|e| ApiError::bad_request("config_error", e.to_string()))?;
            let artifacts = Artifacts::load(&config.pk_dir, &config.lexicon_dir, &config.kg_dir, &config.rules_dir)?;
            let state = Arc::new(AppState::new(artifacts, config.metrics, config.idle_timeout()));
            let runtime = tokio::runtime::Runtime::new().map_err(|e| ApiError::bad_request("io_error", e.to_string()))?;
            runtime
                .block_on(http::serve(state, config.bind))
                .map_err(|e| ApiError::bad_request("io_error", e.to_string()))?;
            Ok(EXIT_OK)
        }
    }
}

/// Prints the report on stdout. A document that cannot be parsed at all gets
/// an error body there instead.
fn validate(file: &Path, out: &mut Output<'_, '_>) -> Result<i32, ApiError> {
    match load_pk(&artifacts::read(file)?) {
        Ok(_) => {
            out.json(&ValidationReport::default())?;
            Ok(EXIT_OK)
        }
        Err(PkError::Validation(report)) => {
            out.json(&report)?;
            Ok(EXIT_FAILURE)
        }
        Err(e) => {
            out.json(&ApiError::from(e).body)?;
            Ok(EXIT_FAILURE)
        }
    }
}

fn resolve_text(arg: &str, stdin: &mut dyn BufRead) -> Result<String, ApiError> {
    if arg == "-" {
        let mut text = String::new();
        stdin
            .read_to_string(&mut text)
            .map_err(|e| ApiError::bad_request("io_error", e.to_string()))?;
        return Ok(text);
    }
    let path = Path::new(arg);
    if path.is_file() {
        return read_string(path);
    }
    Ok(arg.to_string())
}

fn logs(path: &Path) -> Result<Vec<GenerationLog>, ApiError> {
    Ok(parse_jsonl(&read_string(path)?)?)
}

fn metrics(kind: MetricCommand, out: &mut Output<'_, '_>) -> Result<i32, ApiError> {
    match kind {
        MetricCommand::Unsafe {
            input,
            lexicon,
            concepts,
        } => {
            let lexicon = artifacts::load_lexicon_file(&lexicon)?;
            let concepts: Option<BTreeSet<String>> = concepts.map(|p| read_json(&p)).transpose()?;
            let reports = logs(&input)?
                .iter()
                .map(|log| ops::unsafe_matches(log, &lexicon, concepts.as_ref()))
                .collect::<Result<Vec<_>, _>>()?;
            out.jsonl(&reports)?;
        }
        MetricCommand::Risk {
            input,
            gold_rule,
            benefit_denominator,
        } => {
            let samples: Vec<AnnotatedSample> = parse_jsonl(&read_string(&input)?)?;
            let config = RiskConfig {
                gold_rule: match gold_rule {
                    GoldRuleArg::Plurality => GoldRule::Plurality,
                    GoldRuleArg::AnyAnnotator => GoldRule::AnyAnnotator,
                },
                benefit_denominator: match benefit_denominator {
                    DenominatorArg::Verbatim => BenefitDenominator::Verbatim,
                    DenominatorArg::PerSample => BenefitDenominator::PerSample,
                },
            };
            out.json(&ops::risk(&samples, config)?)?;
        }
        MetricCommand::Semantic { input, threshold } => {
            let reports = logs(&input)?
                .iter()
                .map(|log| ops::semantic(log, threshold))
                .collect::<Result<Vec<_>, _>>()?;
            out.jsonl(&reports)?;
        }
        MetricCommand::Logical { input, entailment } => {
            let config = entailment.config();
            let reports = logs(&input)?
                .iter()
                .map(|log| ops::logical(log, config))
                .collect::<Result<Vec<_>, _>>()?;
            out.jsonl(&reports)?;
        }
    }
    Ok(EXIT_OK)
}

fn recipes(action: RecipeCommand, out: &mut Output<'_, '_>) -> Result<i32, ApiError> {
    let (args, evaluate) = match &action {
        RecipeCommand::Evaluate(a) => (a, true),
        RecipeCommand::Recommend(a) => (a, false),
    };
    let recipes = parse_recipes(&read_string(&args.recipes)?)?;
    let rules = artifacts::load_rules(&args.rules)?;
    let profile = args.profile();
    if evaluate {
        let verdicts = recipes
            .iter()
            .map(|r| ops::evaluate(r, &profile, &rules))
            .collect::<Result<Vec<_>, _>>()?;
        out.jsonl(&verdicts)?;
    } else {
        out.json(&ops::recommend(&recipes, &profile, &rules)?)?;
    }
    Ok(EXIT_OK)
}

/// Ask each question on `prompt` and read answers from `input` until an
/// outcome is reached. `?value` previews an answer without committing it.
pub fn interactive(
    doc: &ProcessKnowledgeDoc,
    input: &mut dyn BufRead,
    prompt: &mut dyn Write,
) -> Result<prokno_core::ExplanationTrace, ApiError> {
    let io_err = |e: std::io::Error| ApiError::bad_request("io_error", e.to_string());
    let mut session = triage::start_session(doc, "terminal")?;
    let mut line = String::new();
    while let Position::Question(id) = session.position.clone() {
        let node = doc
            .node(&id)
            .ok_or_else(|| ApiError::bad_request("invalid_document", format!("unknown question {id}")))?;
        let choices: Vec<String> = node.domain().iter().map(|v| v.key()).collect();
        write!(prompt, "{} [{}]: ", node.text, choices.join("/")).map_err(io_err)?;
        prompt.flush().map_err(io_err)?;

        line.clear();
        if input.read_line(&mut line).map_err(io_err)? == 0 {
            return Err(ApiError::bad_request("incomplete", format!("input ended at question {id}")));
        }
        let raw = line.trim();
        let (preview, raw) = match raw.strip_prefix('?') {
            Some(rest) => (true, rest.trim()),
            None => (false, raw),
        };
        let Some(value) = node.parse_answer(raw) else {
            writeln!(prompt, "expected one of {}", choices.join(", ")).map_err(io_err)?;
            continue;
        };
        if preview {
            let p = triage::what_if(doc, &session, &value)?;
            writeln!(prompt, "{}", to_canonical_json(&p).unwrap_or_default()).map_err(io_err)?;
        } else {
            triage::submit_answer(doc, &mut session, value)?;
        }
    }
    if let Some(label) = session.outcome() {
        writeln!(prompt, "outcome: {label}").map_err(io_err)?;
    }
    Ok(triage::explanation_trace(doc, &session))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn limits_parse() {
        let (name, q) = parse_limit("carbohydrate=45g").unwrap();
        assert_eq!(name, "carbohydrate");
        assert_eq!(q.amount, 45.0);
        assert_eq!(q.unit, "g");
        assert_eq!(parse_limit("sodium=0.6 g").unwrap().1.unit, "g");
        assert!(parse_limit("carbohydrate").is_err());
        assert!(parse_limit("carbohydrate=45").is_err());
        assert!(parse_limit("=45g").is_err());
    }

    #[test]
    fn interactive_walk_reprompts_and_previews() {
        let doc = prokno_core::fixtures::toy_flow();
        let mut input: &[u8] = b"yes\nmaybe\n?no\nyes\nno\n";
        let mut prompt = Vec::new();
        let trace = interactive(&doc, &mut input, &mut prompt).unwrap();
        assert_eq!(trace.outcome.as_deref(), Some("level 2"));
        assert_eq!(trace.steps.len(), 3);
        let shown = String::from_utf8(prompt).unwrap();
        assert!(shown.contains("expected one of yes, no"));
        assert!(shown.contains(r#"{"kind":"outcome","label":"level 1"}"#));
    }

    #[test]
    fn interactive_eof_is_an_error() {
        let doc = prokno_core::fixtures::toy_flow();
        let mut input: &[u8] = b"yes\n";
        let err = interactive(&doc, &mut input, &mut Vec::new()).unwrap_err();
        assert_eq!(err.body.error_code, "incomplete");
    }

    #[test]
    fn usage_errors_exit_2() {
        let mut stdin: &[u8] = b"";
        let (mut o, mut e) = (Vec::new(), Vec::new());
        let mut io = Io {
            stdin: &mut stdin,
            stdout: &mut o,
            stderr: &mut e,
        };
        assert_eq!(run(["prokno", "classify", "--pk"], &mut io), EXIT_USAGE);
        assert_eq!(run(["prokno", "frobnicate"], &mut io), EXIT_USAGE);
        assert!(!e.is_empty());
    }
}
