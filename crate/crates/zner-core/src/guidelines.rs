//! Definition-and-guidelines generation via an external LLM, with
//! validation, recovery parsing and a per-tag cache.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{self, CorpusError};
use crate::llm::{LlmClient, LlmError, RetryPolicy};
use crate::model::{AnnotatedDoc, DefGuidelines, DgOrigin};
use crate::prompting::{render_guideline_prompt, sample_guideline_examples, PromptError};

#[derive(Debug, Error)]
pub enum GuidelineError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    File(#[from] CorpusError),
    #[error("response for tag {tag:?} is missing a non-empty Definition and Guidelines; raw response: {raw}")]
    InvalidResponse { tag: String, raw: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DgProvenance {
    pub model_id: String,
    pub timestamp_unix: u64,
    pub prompt_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct CacheEntry {
    dg: DefGuidelines,
    provenance: Option<DgProvenance>,
}

/// One validated D&G entry per tag, with generation provenance.
///
/// Handwritten entries take precedence: `insert_if_absent` never overwrites,
/// so importing handwritten guidelines before generating pins them.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DgCache {
    entries: BTreeMap<String, CacheEntry>,
}

impl DgCache {
    pub fn get(&self, tag: &str) -> Option<&DefGuidelines> {
        self.entries.get(tag).map(|e| &e.dg)
    }

    pub fn provenance(&self, tag: &str) -> Option<&DgProvenance> {
        self.entries.get(tag).and_then(|e| e.provenance.as_ref())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Inserts unless the tag already has an entry; returns whether inserted.
    pub fn insert_if_absent(&mut self, dg: DefGuidelines, provenance: Option<DgProvenance>) -> bool {
        if self.entries.contains_key(&dg.tag) {
            return false;
        }
        self.entries.insert(dg.tag.clone(), CacheEntry { dg, provenance });
        true
    }

    pub fn by_tag(&self) -> BTreeMap<String, DefGuidelines> {
        self.entries
            .iter()
            .map(|(t, e)| (t.clone(), e.dg.clone()))
            .collect()
    }
}

/// Loads a D&G file into a cache, validating every entry.
pub fn import_dg(path: &Path) -> Result<DgCache, GuidelineError> {
    let mut cache = DgCache::default();
    for dg in corpus::load_dg_file(path)? {
        cache.insert_if_absent(dg, None);
    }
    Ok(cache)
}

/// Writes the cache back as a D&G file; import is the inverse on entries.
pub fn export_dg(cache: &DgCache, path: &Path, header: &[String]) -> Result<(), GuidelineError> {
    let entries: Vec<DefGuidelines> = cache.entries.values().map(|e| e.dg.clone()).collect();
    corpus::save_dg_file(&entries, path, header)?;
    Ok(())
}

fn balanced_object_candidates(raw: &str) -> Vec<&str> {
    let bytes = raw.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            let mut depth = 0usize;
            let mut in_string = false;
            let mut escaped = false;
            let mut end = None;
            for (j, &b) in bytes[i..].iter().enumerate() {
                if in_string {
                    if escaped {
                        escaped = false;
                    } else if b == b'\\' {
                        escaped = true;
                    } else if b == b'"' {
                        in_string = false;
                    }
                    continue;
                }
                match b {
                    b'"' => in_string = true,
                    b'{' => depth += 1,
                    b'}' => {
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
                    out.push(&raw[i..=end]);
                    i = end + 1;
                }
                None => i += 1,
            }
        } else {
            i += 1;
        }
    }
    out
}

fn field_case_insensitive(map: &serde_json::Map<String, serde_json::Value>, name: &str) -> Option<String> {
    map.iter()
        .find(|(k, _)| k.eq_ignore_ascii_case(name))
        .and_then(|(_, v)| v.as_str())
        .map(|s| s.to_string())
}

/// Labeled-text fallback: `Definition: ... Guidelines: ...` in plain prose.
fn parse_labeled_text(raw: &str) -> Option<(String, String)> {
    let def_pos = raw.find("Definition:")?;
    let guide_pos = raw[def_pos..].find("Guidelines:")? + def_pos;
    if guide_pos <= def_pos {
        return None;
    }
    let definition = raw[def_pos + "Definition:".len()..guide_pos]
        .trim()
        .trim_end_matches(',')
        .to_string();
    let guidelines = raw[guide_pos + "Guidelines:".len()..].trim().to_string();
    Some((definition, guidelines))
}

/// Extracts (definition, guidelines) from a raw generation: an exact JSON
/// object, a JSON object embedded in prose or fences, or labeled plain text.
pub fn parse_dg_response(raw: &str) -> Option<(String, String)> {
    let try_object = |text: &str| -> Option<(String, String)> {
        let value: serde_json::Value = serde_json::from_str(text).ok()?;
        let map = value.as_object()?;
        let definition = field_case_insensitive(map, "definition")?;
        let guidelines = field_case_insensitive(map, "guidelines")?;
        Some((definition, guidelines))
    };
    if let Some(found) = try_object(raw.trim()) {
        return Some(found);
    }
    for candidate in balanced_object_candidates(raw) {
        if let Some(found) = try_object(candidate) {
            return Some(found);
        }
    }
    parse_labeled_text(raw)
}

fn prompt_hash(prompt: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(prompt.as_bytes());
    hex::encode(hasher.finalize())
}

const FORMAT_REMINDER: &str = "\n\nRemember: answer with exactly one JSON object of the form {\"Definition\": \"...\", \"Guidelines\": \"...\"} with both fields non-empty.";

/// Generates a validated D&G entry for `tag`, caching the result. A cached
/// tag issues no LLM call. Transport errors are retried per `retry`; a
/// response that fails validation is re-prompted once with a format
/// reminder, then fails carrying the raw response.
pub fn generate_dg(
    tag: &str,
    corpus: &[AnnotatedDoc],
    template_body: &str,
    client: &dyn LlmClient,
    retry: &RetryPolicy,
    rng_seed: u64,
    cache: &Mutex<DgCache>,
) -> Result<DefGuidelines, GuidelineError> {
    if let Some(dg) = cache.lock().unwrap().get(tag) {
        return Ok(dg.clone());
    }
    let examples = sample_guideline_examples(corpus, tag, rng_seed)?;
    let prompt = render_guideline_prompt(template_body, tag, &examples);

    let mut raw = retry.run(|| client.complete(&prompt))?;
    let mut parsed = parse_dg_response(&raw).and_then(|(d, g)| {
        DefGuidelines::new(tag, d, g, DgOrigin::Generated).ok()
    });
    if parsed.is_none() {
        // one re-prompt with an explicit format reminder
        let reminded = format!("{prompt}{FORMAT_REMINDER}");
        raw = retry.run(|| client.complete(&reminded))?;
        parsed = parse_dg_response(&raw).and_then(|(d, g)| {
            DefGuidelines::new(tag, d, g, DgOrigin::Generated).ok()
        });
    }
    let dg = parsed.ok_or_else(|| GuidelineError::InvalidResponse {
        tag: tag.to_string(),
        raw: raw.clone(),
    })?;

    let provenance = DgProvenance {
        model_id: client.model_id(),
        timestamp_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        prompt_hash: prompt_hash(&prompt),
    };
    let mut guard = cache.lock().unwrap();
    guard.insert_if_absent(dg.clone(), Some(provenance));
    // another thread may have won the race; return the cached entry
    Ok(guard.get(tag).cloned().expect("just inserted"))
}
