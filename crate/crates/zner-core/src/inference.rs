//! Inference orchestration: the (chunk x tag) call plan, robust parsing of
//! raw generations, per-chunk merging, and a resumable concurrent runner
//! backed by a content-addressed call cache.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chunking::{self, ChunkError, ChunkPlan};
use crate::llm::{LlmClient, RetryPolicy};
use crate::model::{AnnotatedDoc, DefGuidelines, ParseStatus, Prediction};
use crate::prompting::{render_task_prompt, PromptError, PromptTemplate, TemplateVariant};

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("no tags to run")]
    NoTags,
    #[error("missing definition and guidelines for tags: {0}")]
    MissingDg(String),
    #[error(transparent)]
    Chunk(#[from] ChunkError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("call cache error at {path}: {source}")]
    Cache {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One inference job: a document chunk paired with a tag.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CallJob {
    pub doc_id: String,
    pub chunk_index: usize,
    pub tag: String,
}

/// The full cartesian plan of chunks x tags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallPlan {
    pub jobs: Vec<CallJob>,
    pub chunk_plans: BTreeMap<String, ChunkPlan>,
    pub n_docs: usize,
    pub n_tags: usize,
    pub n_calls: usize,
}

/// Plans every (doc chunk, tag) call in canonical order
/// (doc id, chunk index, tag name).
pub fn build_call_plan(
    docs: &[AnnotatedDoc],
    tags: &BTreeSet<String>,
    window_words: usize,
    overlap_words: usize,
) -> Result<CallPlan, InferenceError> {
    if tags.is_empty() {
        return Err(InferenceError::NoTags);
    }
    let mut sorted: Vec<&AnnotatedDoc> = docs.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));

    let mut jobs = Vec::new();
    let mut chunk_plans = BTreeMap::new();
    for doc in &sorted {
        let plan = chunking::plan_chunks(doc, window_words, overlap_words)?;
        for chunk_index in 0..plan.n_chunks() {
            for tag in tags {
                jobs.push(CallJob {
                    doc_id: doc.id.clone(),
                    chunk_index,
                    tag: tag.clone(),
                });
            }
        }
        chunk_plans.insert(doc.id.clone(), plan);
    }
    let n_calls = jobs.len();
    Ok(CallPlan {
        jobs,
        chunk_plans,
        n_docs: sorted.len(),
        n_tags: tags.len(),
        n_calls,
    })
}

fn coerce_to_text(value: &serde_json::Value) -> Option<String> {
    match value {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        serde_json::Value::Bool(b) => Some(b.to_string()),
        serde_json::Value::Null => None,
        serde_json::Value::Object(map) => {
            // a single string field is usually the span; anything else is
            // kept as its JSON text
            let strings: Vec<&String> = map
                .values()
                .filter_map(|v| match v {
                    serde_json::Value::String(s) => Some(s),
                    _ => None,
                })
                .collect();
            match strings.as_slice() {
                [only] => Some((*only).clone()),
                _ => Some(value.to_string()),
            }
        }
        serde_json::Value::Array(_) => Some(value.to_string()),
    }
}

/// Finds bracketed `[...]` candidates in free text, outermost first,
/// respecting string literals of both quote styles.
fn array_candidates(raw: &str) -> Vec<&str> {
    let bytes = raw.as_bytes();
    let mut candidates = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'[' {
            let mut depth = 0usize;
            let mut in_string: Option<u8> = None;
            let mut escaped = false;
            let mut end = None;
            for (j, &b) in bytes[i..].iter().enumerate() {
                if let Some(quote) = in_string {
                    if escaped {
                        escaped = false;
                    } else if b == b'\\' {
                        escaped = true;
                    } else if b == quote {
                        in_string = None;
                    }
                    continue;
                }
                match b {
                    b'"' | b'\'' => in_string = Some(b),
                    b'[' => depth += 1,
                    b']' => {
                        depth -= 1;
                        if depth == 0 {
                            end = Some(i + j);
                            break;
                        }
                    }
                    _ => {}
                }
            }
            match end {
                Some(end) => {
                    candidates.push(&raw[i..=end]);
                    i = end + 1;
                }
                None => i += 1,
            }
        } else {
            i += 1;
        }
    }
    candidates
}

/// Splits the inside of a balanced `[...]` on top-level commas and reads each
/// item as a quoted string (either quote style) or a bare token. Used when a
/// candidate is not valid JSON.
fn lenient_array_items(candidate: &str) -> Option<Vec<String>> {
    let inner = candidate.strip_prefix('[')?.strip_suffix(']')?;
    let bytes = inner.as_bytes();
    let mut items = Vec::new();
    let mut start = 0;
    let mut depth = 0usize;
    let mut in_string: Option<u8> = None;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate() {
        if let Some(quote) = in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == quote {
                in_string = None;
            }
            continue;
        }
        match b {
            b'"' | b'\'' => in_string = Some(b),
            b'[' | b'{' => depth += 1,
            b']' | b'}' => depth = depth.checked_sub(1)?,
            b',' if depth == 0 => {
                items.push(&inner[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    if in_string.is_some() {
        return None;
    }
    items.push(&inner[start..]);

    let mut out = Vec::new();
    for item in items {
        let item = item.trim();
        if item.is_empty() {
            continue;
        }
        let unquoted = if (item.starts_with('"') && item.ends_with('"') && item.len() >= 2)
            || (item.starts_with('\'') && item.ends_with('\'') && item.len() >= 2)
        {
            let inner = &item[1..item.len() - 1];
            inner.replace("\\\"", "\"").replace("\\'", "'").replace("\\\\", "\\")
        } else {
            item.to_string()
        };
        if !unquoted.trim().is_empty() {
            out.push(unquoted);
        }
    }
    Some(out)
}

fn parse_json_array(text: &str) -> Option<(BTreeSet<String>, bool)> {
    let value: serde_json::Value = serde_json::from_str(text).ok()?;
    let items = value.as_array()?;
    let all_strings = items.iter().all(|v| v.is_string());
    let spans: BTreeSet<String> = items.iter().filter_map(coerce_to_text).collect();
    Some((spans, all_strings))
}

/// Extracts a span set from untrusted model output. Never fails: status
/// `clean` when the output is exactly a JSON array of strings, `recovered`
/// when an array had to be salvaged (fences, prose, non-string elements,
/// relaxed quoting), `failed` with an empty set otherwise.
pub fn parse_model_output(raw: &str) -> (BTreeSet<String>, ParseStatus) {
    let trimmed = raw.trim();
    if let Some((spans, all_strings)) = parse_json_array(trimmed) {
        let status = if all_strings {
            ParseStatus::Clean
        } else {
            ParseStatus::Recovered
        };
        return (spans, status);
    }
    for candidate in array_candidates(raw) {
        if let Some((spans, _)) = parse_json_array(candidate) {
            return (spans, ParseStatus::Recovered);
        }
    }
    for candidate in array_candidates(raw) {
        if let Some(items) = lenient_array_items(candidate) {
            return (items.into_iter().collect(), ParseStatus::Recovered);
        }
    }
    (BTreeSet::new(), ParseStatus::Failed)
}

/// Union of per-chunk span sets for one (doc, tag) pair.
pub fn merge_chunk_predictions(per_chunk: &[BTreeSet<String>]) -> BTreeSet<String> {
    per_chunk.iter().flatten().cloned().collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InferConfig {
    pub window_words: usize,
    pub overlap_words: usize,
    pub concurrency: usize,
    /// Stop dispatching after this many jobs; used for call budgeting and
    /// exercised by the resume tests.
    pub max_jobs: Option<usize>,
    /// Content-addressed cache of raw outputs keyed by prompt hash; a job
    /// whose prompt is cached is not re-sent.
    pub cache_dir: Option<PathBuf>,
}

impl Default for InferConfig {
    fn default() -> Self {
        Self {
            window_words: chunking::DEFAULT_WINDOW_WORDS,
            overlap_words: 0,
            concurrency: 4,
            max_jobs: None,
            cache_dir: None,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CacheRecord {
    prompt_hash: String,
    raw: String,
}

fn cache_path(dir: &Path, hash: &str) -> PathBuf {
    dir.join(format!("{hash}.json"))
}

fn cache_read(dir: &Path, hash: &str) -> Option<String> {
    let text = std::fs::read_to_string(cache_path(dir, hash)).ok()?;
    serde_json::from_str::<CacheRecord>(&text).ok().map(|r| r.raw)
}

/// Write-then-rename so concurrent writers of the same key are safe.
fn cache_write(dir: &Path, hash: &str, raw: &str) -> Result<(), InferenceError> {
    let to_err = |source: std::io::Error| InferenceError::Cache {
        path: dir.display().to_string(),
        source,
    };
    std::fs::create_dir_all(dir).map_err(to_err)?;
    let record = CacheRecord {
        prompt_hash: hash.to_string(),
        raw: raw.to_string(),
    };
    let tmp = dir.join(format!(".{hash}.{}.tmp", std::process::id()));
    std::fs::write(&tmp, serde_json::to_string(&record).expect("serializable")).map_err(to_err)?;
    std::fs::rename(&tmp, cache_path(dir, hash)).map_err(to_err)?;
    Ok(())
}

struct JobOutcome {
    job: CallJob,
    raw: String,
    transport_failed: bool,
}

/// Runs the call plan against `client`, merging per-chunk results into one
/// Prediction per (doc, tag). Transport failures after retries become
/// `failed` predictions carrying the error note; the run continues. Already
/// cached prompts are not re-sent, which makes interrupted runs resumable.
pub fn run_inference(
    docs: &[AnnotatedDoc],
    tags: &BTreeSet<String>,
    template: &PromptTemplate,
    dg_by_tag: &BTreeMap<String, DefGuidelines>,
    client: &dyn LlmClient,
    retry: &RetryPolicy,
    config: &InferConfig,
) -> Result<Vec<Prediction>, InferenceError> {
    if template.variant == TemplateVariant::WithDg {
        let missing: Vec<&String> = tags.iter().filter(|t| !dg_by_tag.contains_key(*t)).collect();
        if !missing.is_empty() {
            return Err(InferenceError::MissingDg(
                missing
                    .iter()
                    .map(|s| s.as_str())
                    .collect::<Vec<_>>()
                    .join(", "),
            ));
        }
    }
    let plan = build_call_plan(docs, tags, config.window_words, config.overlap_words)?;
    let docs_by_id: BTreeMap<&str, &AnnotatedDoc> =
        docs.iter().map(|d| (d.id.as_str(), d)).collect();

    // render all prompts up front; rendering is cheap and failures should
    // surface before any network call
    let mut prepared = Vec::with_capacity(plan.jobs.len());
    for job in &plan.jobs {
        let doc = docs_by_id[job.doc_id.as_str()];
        let window = plan.chunk_plans[&job.doc_id].windows[job.chunk_index];
        let chunk = chunking::chunk_text(doc, window);
        let dg = match template.variant {
            TemplateVariant::WithDg => Some(&dg_by_tag[&job.tag]),
            TemplateVariant::WithoutDg => None,
        };
        let prompt =
            render_task_prompt(template, &chunk, &job.tag, &job.doc_id, job.chunk_index, dg)?;
        prepared.push((job.clone(), prompt));
    }
    let job_limit = config.max_jobs.unwrap_or(prepared.len()).min(prepared.len());
    let prepared = &prepared[..job_limit];

    let next = AtomicUsize::new(0);
    let outcomes: Mutex<Vec<JobOutcome>> = Mutex::new(Vec::with_capacity(prepared.len()));
    let cache_error: Mutex<Option<InferenceError>> = Mutex::new(None);
    let workers = config.concurrency.max(1).min(prepared.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::SeqCst);
                let Some((job, prompt)) = prepared.get(idx) else {
                    break;
                };
                let hash = prompt.hash();
                let cached = config
                    .cache_dir
                    .as_deref()
                    .and_then(|dir| cache_read(dir, &hash));
                let (raw, transport_failed) = match cached {
                    Some(raw) => (raw, false),
                    None => match retry.run(|| client.complete(&prompt.text)) {
                        Ok(raw) => {
                            if let Some(dir) = config.cache_dir.as_deref() {
                                if let Err(e) = cache_write(dir, &hash, &raw) {
                                    *cache_error.lock().unwrap() = Some(e);
                                    break;
                                }
                            }
                            (raw, false)
                        }
                        Err(e) => (format!("ERROR: {e}"), true),
                    },
                };
                outcomes.lock().unwrap().push(JobOutcome {
                    job: job.clone(),
                    raw,
                    transport_failed,
                });
            });
        }
    });
    if let Some(e) = cache_error.into_inner().unwrap() {
        return Err(e);
    }

    // canonical assembly order regardless of completion order
    let mut outcomes = outcomes.into_inner().unwrap();
    outcomes.sort_by(|a, b| a.job.cmp(&b.job));

    let mut grouped: BTreeMap<(String, String), Vec<JobOutcome>> = BTreeMap::new();
    for outcome in outcomes {
        grouped
            .entry((outcome.job.doc_id.clone(), outcome.job.tag.clone()))
            .or_default()
            .push(outcome);
    }

    let mut predictions = Vec::new();
    for ((doc_id, tag), chunk_outcomes) in grouped {
        let mut sets = Vec::new();
        let mut worst = ParseStatus::Clean;
        let mut raws = Vec::new();
        for outcome in &chunk_outcomes {
            let (spans, status) = if outcome.transport_failed {
                (BTreeSet::new(), ParseStatus::Failed)
            } else {
                parse_model_output(&outcome.raw)
            };
            worst = worst.max(status);
            sets.push(spans);
            raws.push(outcome.raw.clone());
        }
        let spans = merge_chunk_predictions(&sets);
        // a failed chunk degrades the pair to `recovered` when other chunks
        // still produced spans; `failed` requires an empty span set
        let parse_status = if worst == ParseStatus::Failed && !spans.is_empty() {
            ParseStatus::Recovered
        } else {
            worst
        };
        predictions.push(Prediction {
            doc_id,
            tag,
            spans,
            raw_output: raws.join("\n--- chunk ---\n"),
            parse_status,
        });
    }
    Ok(predictions)
}
