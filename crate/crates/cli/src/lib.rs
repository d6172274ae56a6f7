//! Subcommands of the `cotreward` binary.
//!
//! Each command writes JSONL to its output and returns an [`Outcome`];
//! `main` maps that to the process exit status.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use cotreward::batch::{
    advantage_lines, ReferenceFields, RewardGroup, RewardReportLine, ScoreSummary,
};
use cotreward::config::{AppConfig, ClientSettings, ConfigError};
use cotreward::curation::http::ChatEndpoint;
use cotreward::curation::mock::ScriptedClient;
use cotreward::curation::{
    run_curation, Clients, CurationError, EvaluatorClient, GeneratorClient, ReferenceRecord,
    RunOptions,
};
use cotreward::toy::{run_training, run_training_grid, TrainError, TrainMetrics};
use cotreward::{RewardWeights, Scorer, ScoringTarget};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Input {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Curation(#[from] CurationError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

/// How a command that did not fail outright went.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// Some inputs were rejected; the rest were processed.
    PartialRejects,
}

impl Outcome {
    pub fn exit_code(self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::PartialRejects => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "cotreward",
    version,
    about = "Rewards, advantages, curation and toy training for structured CoT output"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score predictions against references.
    Score(ScoreArgs),
    /// Standardize rewards within each group.
    Advantage(AdvantageArgs),
    /// Run the verified-CoT curation loop.
    Curate(CurateArgs),
    /// Train the toy policy and write metrics files.
    TrainToy(TrainToyArgs),
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// JSONL of `{"id", "output"}`.
    #[arg(long)]
    pub predictions: PathBuf,
    /// JSONL of curated reference records, or flat
    /// `{"id", "language", "text_segments", "objects", "answer"}` lines.
    #[arg(long)]
    pub references: PathBuf,
    /// `alpha,beta,gamma,delta`; overrides the config.
    #[arg(long)]
    pub weights: Option<RewardWeights>,
    /// Comma-separated tag names; overrides the config.
    #[arg(long, value_delimiter = ',')]
    pub tags: Option<Vec<String>>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Report lines go here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AdvantageArgs {
    /// JSONL of `{"id"?, "rewards": [...]}`.
    #[arg(long)]
    pub input: PathBuf,
    /// Denominator stabilizer; overrides the config.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CurateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Continue an existing output, skipping completed ids.
    #[arg(long)]
    pub resume: bool,
    /// Curate at most this many pending samples.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainToyArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Run the five-configuration weight grid.
    #[arg(long)]
    pub grid: bool,
    /// Overrides `toy.out_dir`.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<Outcome, CliError> {
    match cli.command {
        Command::Score(a) => cmd_score(&a, out, err),
        Command::Advantage(a) => cmd_advantage(&a, out),
        Command::Curate(a) => cmd_curate(&a, out),
        Command::TrainToy(a) => cmd_train_toy(&a, out),
    }
}

fn load_config(path: &Path) -> Result<AppConfig, CliError> {
    if !path.is_file() {
        return Err(CliError::Usage(format!(
            "config file {} does not exist",
            path.display()
        )));
    }
    Ok(AppConfig::load(path)?)
}

fn optional_config(path: Option<&PathBuf>) -> Result<AppConfig, CliError> {
    path.map_or_else(|| Ok(AppConfig::default()), |p| load_config(p))
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Non-blank lines with their 1-based line numbers.
fn read_lines(path: &Path) -> Result<Vec<(usize, String)>, CliError> {
    let file = File::open(path).map_err(io_error(path))?;
    let mut lines = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_error(path))?;
        if !line.trim().is_empty() {
            lines.push((i + 1, line));
        }
    }
    Ok(lines)
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    read_lines(path)?
        .into_iter()
        .map(|(line, text)| {
            serde_json::from_str(&text).map_err(|e| CliError::Input {
                path: path.to_path_buf(),
                line,
                message: e.to_string(),
            })
        })
        .collect()
}

fn open_output<'a>(
    path: Option<&PathBuf>,
    stdout: &'a mut dyn Write,
) -> Result<Box<dyn Write + 'a>, CliError> {
    match path {
        Some(p) => {
            let file = File::create(p).map_err(io_error(p))?;
            Ok(Box::new(BufWriter::new(file)))
        }
        None => Ok(Box::new(stdout)),
    }
}

fn write_json_line(w: &mut dyn Write, value: &impl Serialize) -> std::io::Result<()> {
    let text = serde_json::to_string(value).map_err(std::io::Error::other)?;
    writeln!(w, "{text}")
}

#[derive(Debug, Deserialize)]
struct FlatReference {
    id: String,
    #[serde(flatten)]
    fields: ReferenceFields,
}

/// Reads references keyed by id; duplicate ids are fatal.
pub fn read_references(path: &Path) -> Result<HashMap<String, ScoringTarget>, CliError> {
    let mut targets = HashMap::new();
    for (line, text) in read_lines(path)? {
        let bad = |message: String| CliError::Input {
            path: path.to_path_buf(),
            line,
            message,
        };
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        let (id, target) = if value.get("sample").is_some() {
            let record: ReferenceRecord =
                serde_json::from_value(value).map_err(|e| bad(e.to_string()))?;
            (record.id().to_string(), ScoringTarget::from(&record))
        } else {
            let flat: FlatReference =
                serde_json::from_value(value).map_err(|e| bad(e.to_string()))?;
            (flat.id, flat.fields.to_target().map_err(bad)?)
        };
        if targets.insert(id.clone(), target).is_some() {
            return Err(bad(format!("duplicate reference id {id}")));
        }
    }
    Ok(targets)
}

#[derive(Debug, Serialize)]
struct SummaryLine<'a> {
    summary: &'a ScoreSummary,
}

/// Report lines go to the output in prediction order; the summary (with
/// any unmatched ids) goes to `err` as one JSON line.
pub fn cmd_score(
    args: &ScoreArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<Outcome, CliError> {
    let mut config = optional_config(args.config.as_ref())?;
    if let Some(w) = args.weights {
        config.weights = w;
    }
    if let Some(tags) = &args.tags {
        config.scoring.tags = tags.clone();
    }
    let scorer: Scorer = config.scorer()?;

    #[derive(Deserialize)]
    struct Prediction {
        id: String,
        output: String,
    }
    let predictions: Vec<Prediction> = read_jsonl(&args.predictions)?;
    let references = read_references(&args.references)?;

    let mut lines = Vec::with_capacity(predictions.len());
    let mut rejects = Vec::new();
    for p in &predictions {
        match references.get(&p.id) {
            Some(target) => lines.push(RewardReportLine::new(
                &p.id,
                scorer.score(&p.output, target),
            )),
            None => rejects.push(p.id.clone()),
        }
    }

    let path = args
        .output
        .clone()
        .unwrap_or_else(|| PathBuf::from("<stdout>"));
    let mut w = open_output(args.output.as_ref(), out)?;
    for line in &lines {
        write_json_line(&mut *w, line).map_err(io_error(&path))?;
    }
    w.flush().map_err(io_error(&path))?;

    let summary = ScoreSummary::from_lines(&lines, rejects);
    write_json_line(err, &SummaryLine { summary: &summary })
        .map_err(io_error(Path::new("<stderr>")))?;
    Ok(if summary.rejects.is_empty() {
        Outcome::Success
    } else {
        Outcome::PartialRejects
    })
}

/// One output line per input group; short or invalid groups get an
/// `error` field instead of advantages.
pub fn cmd_advantage(args: &AdvantageArgs, out: &mut dyn Write) -> Result<Outcome, CliError> {
    let config = optional_config(args.config.as_ref())?;
    let epsilon = args.epsilon.unwrap_or(config.grpo.advantage_epsilon);
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(CliError::Usage(format!(
            "--epsilon must be finite and non-negative, got {epsilon}"
        )));
    }
    let groups: Vec<RewardGroup> = read_jsonl(&args.input)?;
    let lines = advantage_lines(&groups, epsilon);

    let path = args
        .output
        .clone()
        .unwrap_or_else(|| PathBuf::from("<stdout>"));
    let mut w = open_output(args.output.as_ref(), out)?;
    for line in &lines {
        write_json_line(&mut *w, line).map_err(io_error(&path))?;
    }
    w.flush().map_err(io_error(&path))?;
    Ok(if lines.iter().any(|l| l.error.is_some()) {
        Outcome::PartialRejects
    } else {
        Outcome::Success
    })
}

enum Client {
    Mock(ScriptedClient),
    Http(ChatEndpoint),
}

impl Client {
    fn build(settings: &ClientSettings, role: &str) -> Result<Self, CliError> {
        match settings {
            ClientSettings::Mock { script: None } => Ok(Client::Mock(ScriptedClient::default())),
            ClientSettings::Mock { script: Some(path) } => {
                let text = std::fs::read_to_string(path).map_err(io_error(path))?;
                ScriptedClient::from_json(&text)
                    .map(Client::Mock)
                    .map_err(|e| {
                        CliError::Other(format!("curation.{role}.script {}: {e}", path.display()))
                    })
            }
            ClientSettings::Http(endpoint) => ChatEndpoint::new(endpoint.clone())
                .map(Client::Http)
                .map_err(|e| CliError::Other(format!("curation.{role}: {e}"))),
        }
    }

    fn generator(&self) -> &dyn GeneratorClient {
        match self {
            Client::Mock(c) => c,
            Client::Http(c) => c,
        }
    }

    fn evaluator(&self) -> &dyn EvaluatorClient {
        match self {
            Client::Mock(c) => c,
            Client::Http(c) => c,
        }
    }
}

/// Runs curation per the config and prints the run statistics as JSON.
pub fn cmd_curate(args: &CurateArgs, out: &mut dyn Write) -> Result<Outcome, CliError> {
    let config = load_config(&args.config)?;
    let section = &config.curation;
    let input = section.input.as_ref().ok_or_else(|| {
        CliError::Config(ConfigError::Invalid("curation.input is not set".into()))
    })?;
    let output = section.output.as_ref().ok_or_else(|| {
        CliError::Config(ConfigError::Invalid("curation.output is not set".into()))
    })?;

    let generator = Client::build(&section.generator, "generator")?;
    // Identical settings share one client, as a single endpoint would.
    let separate = if section.evaluator == section.generator {
        None
    } else {
        Some(Client::build(&section.evaluator, "evaluator")?)
    };
    let clients = Clients {
        generator: generator.generator(),
        evaluator: separate.as_ref().unwrap_or(&generator).evaluator(),
    };
    let options = RunOptions {
        resume: args.resume,
        limit: args.limit,
    };
    let stats = run_curation(input, output, &section.params(), clients, options)?;
    write_json_line(out, &stats).map_err(io_error(Path::new("<stdout>")))?;
    Ok(if stats.rejected == 0 {
        Outcome::Success
    } else {
        Outcome::PartialRejects
    })
}

#[derive(Debug, Serialize)]
struct RunSummary {
    weights: [f64; 4],
    steps: usize,
    final_smoothed_total: f64,
    /// Same, scored under balanced weights.
    final_smoothed_eval_total: f64,
    files: Vec<PathBuf>,
}

impl RunSummary {
    fn new(metrics: &TrainMetrics, weights: [f64; 4], files: Vec<PathBuf>) -> Self {
        Self {
            weights,
            steps: metrics.rows.len(),
            final_smoothed_total: metrics.smoothed(|r| r.total).last().copied().unwrap_or(0.0),
            final_smoothed_eval_total: metrics
                .smoothed(|r| r.eval_total)
                .last()
                .copied()
                .unwrap_or(0.0),
            files,
        }
    }
}

/// Trains once (or over the weight grid) and prints one summary line per
/// run.
pub fn cmd_train_toy(args: &TrainToyArgs, out: &mut dyn Write) -> Result<Outcome, CliError> {
    let config = load_config(&args.config)?;
    let out_dir = args
        .out_dir
        .clone()
        .unwrap_or_else(|| config.toy.out_dir.clone());
    let toy = config.toy_config();
    let runs = if args.grid || config.toy.grid {
        run_training_grid(&toy, &out_dir)?
    } else {
        vec![run_training(&toy, &out_dir)?]
    };
    for (metrics, files) in runs {
        let weights = metrics.weights.as_array();
        write_json_line(out, &RunSummary::new(&metrics, weights, files))
            .map_err(io_error(Path::new("<stdout>")))?;
    }
    Ok(Outcome::Success)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_parses_weights_and_tags() {
        let cli = Cli::try_parse_from([
            "cotreward",
            "score",
            "--predictions",
            "p.jsonl",
            "--references",
            "r.jsonl",
            "--weights",
            "0,0.5,0.5,0",
            "--tags",
            "think,answer,check",
        ])
        .unwrap();
        let Command::Score(a) = cli.command else {
            panic!("wrong subcommand")
        };
        assert_eq!(a.weights.unwrap().as_array(), [0.0, 0.5, 0.5, 0.0]);
        assert_eq!(a.tags.unwrap().len(), 3);
    }

    #[test]
    fn bad_weights_are_a_parse_error() {
        let r = Cli::try_parse_from([
            "cotreward",
            "score",
            "--predictions",
            "p",
            "--references",
            "r",
            "--weights",
            "1,2",
        ]);
        assert!(r.is_err());
    }

    #[test]
    fn train_toy_requires_config() {
        assert!(Cli::try_parse_from(["cotreward", "train-toy"]).is_err());
    }

    #[test]
    fn exit_codes_are_distinct() {
        let codes = [
            Outcome::Success.exit_code(),
            Outcome::PartialRejects.exit_code(),
            CliError::Other(String::new()).exit_code(),
            CliError::Usage(String::new()).exit_code(),
        ];
        let mut sorted = codes.to_vec();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 4);
    }
}
