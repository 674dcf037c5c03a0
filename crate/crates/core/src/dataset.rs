//! Instruction-tuning dataset construction.
//!
//! The teacher sees the full prompt, ground-truth label included, and writes
//! the reference analysis; the stored prompt is the ground-truth-stripped
//! render of the same bundle. Unparseable completions are retried up to a
//! cap and then skipped with a logged reason, never dropped silently.
//!
//! Export is JSONL with one `{"instruction", "output", "meta"}` object per
//! line, UTF-8, ordered by `(ticker, target window)`, so the file is
//! byte-identical across replayed runs.

use std::io::{BufRead, Write};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::{parse_analysis, EvalError};
use crate::labeling::MovementLabel;
use crate::llm::{LlmClient, LlmError, LlmRequest};
use crate::prompting::{
    render, strip_ground_truth, PromptBundle, PromptMode, RenderError, TemplateSet, TokenEstimator,
};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("bundle has no ground-truth label; the teacher flow requires one")]
    MissingGroundTruth,
    #[error("teacher failed after {attempts} attempts: {last}")]
    TeacherFailed { attempts: u32, last: LlmError },
    #[error("completion unparseable after {attempts} attempts: {last}")]
    Unparseable { attempts: u32, last: EvalError },
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad jsonl at {path}:{line}: {message}")]
    BadJsonl {
        path: String,
        line: usize,
        message: String,
    },
}

/// Identifies where an example came from and what actually happened.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleMeta {
    pub ticker: String,
    /// The week whose movement the prompt asks about.
    pub window_start: chrono::NaiveDate,
    /// The observed week the prompt's prices and news come from.
    pub input_week_start: chrono::NaiveDate,
    pub mode: PromptMode,
    pub actual_label: MovementLabel,
}

/// One instruction-tuning pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionExample {
    /// Ground-truth-stripped prompt text.
    pub instruction: String,
    /// Teacher analysis, validated against the output parser.
    pub output: String,
    pub meta: ExampleMeta,
}

/// A week the build skipped, and why. Always logged, never silent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedExample {
    pub ticker: String,
    pub window_start: chrono::NaiveDate,
    pub reason: String,
}

/// Teacher decoding knobs; temperature 0 keeps the artifact reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherParams {
    pub temperature: f64,
    pub max_tokens: u32,
    /// Attempts per example before the example is skipped.
    pub retry_cap: u32,
}

impl Default for TeacherParams {
    fn default() -> Self {
        TeacherParams {
            temperature: 0.0,
            max_tokens: 1024,
            retry_cap: 2,
        }
    }
}

/// Generate one example: teacher sees ground truth, the stored prompt does
/// not, and the completion must parse into the three-section schema.
pub fn generate_example(
    bundle: &PromptBundle,
    meta: ExampleMeta,
    teacher: &dyn LlmClient,
    params: &TeacherParams,
    budget: usize,
    estimator: &dyn TokenEstimator,
    templates: &TemplateSet,
) -> Result<InstructionExample, DatasetError> {
    if bundle.ground_truth_label.is_none() {
        return Err(DatasetError::MissingGroundTruth);
    }
    let teacher_prompt = render(bundle, budget, estimator, templates)?;
    let request = LlmRequest {
        prompt: teacher_prompt.text,
        temperature: params.temperature,
        max_tokens: params.max_tokens,
    };

    let attempts = params.retry_cap.max(1);
    let mut completion = None;
    let mut last_llm: Option<LlmError> = None;
    let mut last_parse: Option<EvalError> = None;
    for _ in 0..attempts {
        match teacher.complete(&request) {
            Ok(response) => match parse_analysis(&response.text) {
                Ok(_) => {
                    completion = Some(response.text);
                    break;
                }
                Err(e) => last_parse = Some(e),
            },
            Err(e) => last_llm = Some(e),
        }
    }
    let output = match completion {
        Some(text) => text,
        None => {
            if let Some(last) = last_llm {
                return Err(DatasetError::TeacherFailed { attempts, last });
            }
            return Err(DatasetError::Unparseable {
                attempts,
                last: last_parse.expect("either llm or parse error recorded"),
            });
        }
    };

    let student_prompt = render(&strip_ground_truth(bundle), budget, estimator, templates)?;
    Ok(InstructionExample {
        instruction: student_prompt.text,
        output,
        meta,
    })
}

/// A unit of teacher work: the bundle plus its meta.
pub struct ExampleJob {
    pub bundle: PromptBundle,
    pub meta: ExampleMeta,
}

/// Offline stand-in teacher for dry runs and cassette recording: reads the
/// ground-truth label out of the teacher prompt and emits a schema-valid
/// analysis consistent with it. Deterministic per prompt.
pub struct StubTeacher;

impl crate::llm::LlmClient for StubTeacher {
    fn complete(
        &self,
        request: &LlmRequest,
    ) -> Result<crate::llm::LlmResponse, crate::llm::LlmError> {
        use crate::evaluation::{CONCERNS_HEADER, POSITIVE_HEADER, PREDICTION_HEADER};
        let truth_at = request.prompt.find("[Ground Truth]").ok_or_else(|| {
            crate::llm::LlmError::MalformedResponse(
                "stub teacher needs a ground-truth section in the prompt".to_string(),
            )
        })?;
        let label = crate::evaluation::find_label_tokens(&request.prompt[truth_at..])
            .into_iter()
            .next()
            .ok_or_else(|| {
                crate::llm::LlmError::MalformedResponse(
                    "stub teacher found no label in the ground-truth section".to_string(),
                )
            })?;
        let (lean, horizon) = match label.direction {
            crate::labeling::Direction::Up => ("constructive", "long-term"),
            crate::labeling::Direction::Down => ("cautious", "short-term"),
        };
        let text = format!(
            "{POSITIVE_HEADER}\n- Broadly disseminated coverage of the main story\n- Steady demand signals in the weekly tape\n\n{CONCERNS_HEADER}\n- Open regulatory review\n- Supplier schedule risk\n\n{PREDICTION_HEADER}\nThe {horizon} impact of the widest-spread topic dominates and the balance of factors is {lean}; expecting {label} for the target week."
        );
        Ok(crate::llm::LlmResponse {
            text,
            finish_reason: crate::llm::FinishReason::Stop,
        })
    }
}

/// Run teacher generation over jobs with at most `max_in_flight` concurrent
/// calls. Results come back ordered by `(ticker, window_start)`; failures
/// become skip records.
pub fn generate_examples(
    jobs: Vec<ExampleJob>,
    teacher: &dyn LlmClient,
    params: &TeacherParams,
    budget: usize,
    estimator: &dyn TokenEstimator,
    templates: &TemplateSet,
    max_in_flight: usize,
) -> (Vec<InstructionExample>, Vec<SkippedExample>) {
    let queue = Mutex::new(jobs);
    let examples = Mutex::new(Vec::new());
    let skips = Mutex::new(Vec::new());
    let workers = max_in_flight.max(1);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let job = {
                    let mut q = queue.lock().expect("job queue lock");
                    q.pop()
                };
                let Some(job) = job else { break };
                match generate_example(
                    &job.bundle,
                    job.meta.clone(),
                    teacher,
                    params,
                    budget,
                    estimator,
                    templates,
                ) {
                    Ok(example) => examples.lock().expect("examples lock").push(example),
                    Err(e) => skips.lock().expect("skips lock").push(SkippedExample {
                        ticker: job.meta.ticker.clone(),
                        window_start: job.meta.window_start,
                        reason: e.to_string(),
                    }),
                }
            });
        }
    });

    let mut examples = examples.into_inner().expect("examples lock");
    examples.sort_by(|a, b| {
        (&a.meta.ticker, a.meta.window_start).cmp(&(&b.meta.ticker, b.meta.window_start))
    });
    let mut skips = skips.into_inner().expect("skips lock");
    skips.sort_by(|a, b| (&a.ticker, a.window_start).cmp(&(&b.ticker, b.window_start)));
    (examples, skips)
}

/// Write examples as JSONL, ordered by `(ticker, window_start)`.
pub fn export_jsonl<W: Write>(
    mut out: W,
    examples: &[InstructionExample],
) -> Result<(), DatasetError> {
    let mut ordered: Vec<&InstructionExample> = examples.iter().collect();
    ordered.sort_by(|a, b| {
        (&a.meta.ticker, a.meta.window_start).cmp(&(&b.meta.ticker, b.meta.window_start))
    });
    for example in ordered {
        let line = serde_json::to_string(example).expect("example serializes");
        writeln!(out, "{line}").map_err(|e| DatasetError::Io {
            path: "<writer>".to_string(),
            source: e,
        })?;
    }
    Ok(())
}

pub fn export_jsonl_file(
    path: &std::path::Path,
    examples: &[InstructionExample],
) -> Result<(), DatasetError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| DatasetError::Io {
            path: dir.display().to_string(),
            source: e,
        })?;
    }
    let mut buf = Vec::new();
    export_jsonl(&mut buf, examples)?;
    std::fs::write(path, buf).map_err(|e| DatasetError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Read a JSONL export back into memory.
pub fn import_jsonl<R: BufRead>(reader: R) -> Result<Vec<InstructionExample>, DatasetError> {
    let mut examples = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| DatasetError::Io {
            path: "<reader>".to_string(),
            source: e,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let example: InstructionExample =
            serde_json::from_str(&line).map_err(|e| DatasetError::BadJsonl {
                path: "<reader>".to_string(),
                line: idx + 1,
                message: e.to_string(),
            })?;
        examples.push(example);
    }
    Ok(examples)
}

pub fn import_jsonl_file(path: &std::path::Path) -> Result<Vec<InstructionExample>, DatasetError> {
    let file = std::fs::File::open(path).map_err(|e| DatasetError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    import_jsonl(std::io::BufReader::new(file))
}

/// Audit an export: an example leaks if its prompt contains its own
/// target-week label token. Returns the offending `(ticker, window)` pairs.
pub fn leakage_violations(
    examples: &[InstructionExample],
) -> Vec<(String, chrono::NaiveDate)> {
    examples
        .iter()
        .filter(|e| {
            crate::evaluation::find_label_tokens(&e.instruction).contains(&e.meta.actual_label)
        })
        .map(|e| (e.meta.ticker.clone(), e.meta.window_start))
        .collect()
}
