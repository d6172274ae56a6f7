//! Resumable JSONL curation runs.
//!
//! Accepted records go to the output file and rejected samples to a sibling
//! `*.rejects.jsonl`, one JSON object per line, written in input order and
//! flushed line by line. The output file doubles as the checkpoint: on resume
//! every id already present is skipped, as are non-retryable rejects.

use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};

use super::{curate_sample, Clients, CurationConfig, RawSample, ReferenceRecord, RejectedSample};

#[derive(Debug, thiserror::Error)]
pub enum CurationError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    InvalidInput {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{0} already exists and is not empty; pass resume to continue it")]
    OutputExists(PathBuf),
    #[error(transparent)]
    Config(#[from] super::InvalidCurationConfig),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CurationError + '_ {
    move |source| CurationError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Continue an existing output instead of refusing to overwrite it.
    pub resume: bool,
    /// Curate at most this many pending samples in this run.
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurationStats {
    pub input_samples: usize,
    /// Already completed by an earlier run.
    pub skipped: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub rejected_by_reason: BTreeMap<String, usize>,
    /// Total correction cycles per accepted sample → number of samples.
    pub cycle_histogram: BTreeMap<usize, usize>,
}

/// `out/records.jsonl` → `out/records.rejects.jsonl`.
pub fn rejects_path(output: &Path) -> PathBuf {
    let stem = output
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "output".into());
    output.with_file_name(format!("{stem}.rejects.jsonl"))
}

/// Reads and validates a JSONL file of samples; ids must be unique.
pub fn read_samples(path: &Path) -> Result<Vec<RawSample>, CurationError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut samples = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let invalid = |message: String| CurationError::InvalidInput {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let sample: RawSample = serde_json::from_str(&line).map_err(|e| invalid(e.to_string()))?;
        sample.validate().map_err(invalid)?;
        if !seen.insert(sample.id.clone()) {
            return Err(invalid(format!("duplicate sample id {}", sample.id)));
        }
        samples.push(sample);
    }
    Ok(samples)
}

/// Drops an unterminated trailing line left by an interrupted write and
/// returns the complete lines.
fn complete_lines(path: &Path) -> Result<Vec<String>, CurationError> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
    if keep < bytes.len() {
        let file = OpenOptions::new()
            .write(true)
            .open(path)
            .map_err(io_err(path))?;
        file.set_len(keep as u64).map_err(io_err(path))?;
    }
    let text = String::from_utf8_lossy(&bytes[..keep]);
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(str::to_string)
        .collect())
}

fn completed_ids(output: &Path, rejects: &Path) -> Result<HashSet<String>, CurationError> {
    let mut done = HashSet::new();
    for (i, line) in complete_lines(output)?.iter().enumerate() {
        let record: ReferenceRecord =
            serde_json::from_str(line).map_err(|e| CurationError::InvalidInput {
                path: output.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
        done.insert(record.sample.id);
    }
    let mut final_rejects: BTreeMap<String, bool> = BTreeMap::new();
    for (i, line) in complete_lines(rejects)?.iter().enumerate() {
        let rejected: RejectedSample =
            serde_json::from_str(line).map_err(|e| CurationError::InvalidInput {
                path: rejects.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
        final_rejects.insert(rejected.id, rejected.retryable);
    }
    done.extend(
        final_rejects
            .into_iter()
            .filter(|(_, retryable)| !retryable)
            .map(|(id, _)| id),
    );
    Ok(done)
}

fn is_nonempty(path: &Path) -> bool {
    std::fs::metadata(path)
        .map(|m| m.len() > 0)
        .unwrap_or(false)
}

fn append_line<T: Serialize>(file: &mut File, path: &Path, value: &T) -> Result<(), CurationError> {
    let mut line = serde_json::to_string(value).expect("records serialize");
    line.push('\n');
    file.write_all(line.as_bytes()).map_err(io_err(path))?;
    file.flush().map_err(io_err(path))
}

/// Curates every sample of `input` not yet completed in `output`.
///
/// At most `config.concurrency` samples are in flight; results are written
/// in input order regardless of completion order.
pub fn run_curation(
    input: &Path,
    output: &Path,
    config: &CurationConfig,
    clients: Clients<'_>,
    options: RunOptions,
) -> Result<CurationStats, CurationError> {
    config.validate()?;
    let samples = read_samples(input)?;
    let rejects = rejects_path(output);

    let done = if options.resume {
        completed_ids(output, &rejects)?
    } else {
        if is_nonempty(output) {
            return Err(CurationError::OutputExists(output.to_path_buf()));
        }
        HashSet::new()
    };

    let mut stats = CurationStats {
        input_samples: samples.len(),
        ..Default::default()
    };
    let mut pending: Vec<&RawSample> = samples.iter().filter(|s| !done.contains(&s.id)).collect();
    stats.skipped = samples.len() - pending.len();
    if let Some(limit) = options.limit {
        pending.truncate(limit);
    }

    let open = |path: &Path| {
        OpenOptions::new()
            .create(true)
            .append(options.resume)
            .write(true)
            .truncate(!options.resume)
            .open(path)
            .map_err(io_err(path))
    };
    let mut out_file = open(output)?;
    let mut rejects_file = open(&rejects)?;

    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let workers = config.concurrency.min(pending.len());
    let (tx, rx) = mpsc::channel::<(usize, Result<ReferenceRecord, RejectedSample>)>();

    let mut failure = None;
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, abort, pending) = (&next, &abort, &pending);
            scope.spawn(move || loop {
                if abort.load(Ordering::Relaxed) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(sample) = pending.get(i) else { break };
                let outcome = curate_sample(sample, clients, config);
                if tx.send((i, outcome)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        let mut buffered = BTreeMap::new();
        let mut write_pos = 0;
        for (i, outcome) in rx {
            if failure.is_some() {
                continue;
            }
            buffered.insert(i, outcome);
            while let Some(outcome) = buffered.remove(&write_pos) {
                let written = match &outcome {
                    Ok(record) => {
                        stats.accepted += 1;
                        *stats
                            .cycle_histogram
                            .entry(record.trace.total_cycles())
                            .or_default() += 1;
                        append_line(&mut out_file, output, record)
                    }
                    Err(rejected) => {
                        stats.rejected += 1;
                        *stats
                            .rejected_by_reason
                            .entry(rejected.reason.label().to_string())
                            .or_default() += 1;
                        append_line(&mut rejects_file, &rejects, rejected)
                    }
                };
                if let Err(e) = written {
                    abort.store(true, Ordering::Relaxed);
                    failure = Some(e);
                    break;
                }
                write_pos += 1;
            }
        }
    });

    match failure {
        Some(e) => Err(e),
        None => Ok(stats),
    }
}
