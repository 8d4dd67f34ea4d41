//! Shared domain types: tags, definition-and-guidelines, annotated documents,
//! model predictions and evaluation reports.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("tag name is empty after trimming")]
    EmptyTagName,
    #[error("alias {0:?} duplicates the canonical name")]
    AliasEqualsCanonical(String),
    #[error("definition for tag {0:?} is empty")]
    EmptyDefinition(String),
    #[error("guidelines for tag {0:?} are empty")]
    EmptyGuidelines(String),
    #[error("doc {doc_id:?}: span {span:?} for tag {tag:?} is not a substring of the text")]
    SpanNotInText {
        doc_id: String,
        tag: String,
        span: String,
    },
    #[error("prediction for doc {0:?} tag {1:?} has parse_status=failed but non-empty spans")]
    FailedWithSpans(String, String),
}

/// Canonical entity tag plus its spelling variants and provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityTag {
    pub canonical: String,
    #[serde(default)]
    pub aliases: BTreeSet<String>,
    #[serde(default)]
    pub source: String,
}

impl EntityTag {
    pub fn new(canonical: impl Into<String>, source: impl Into<String>) -> Result<Self, ModelError> {
        let canonical = canonical.into().trim().to_string();
        if canonical.is_empty() {
            return Err(ModelError::EmptyTagName);
        }
        Ok(Self {
            canonical,
            aliases: BTreeSet::new(),
            source: source.into(),
        })
    }

    /// Adds a spelling variant. The canonical name itself is rejected.
    pub fn add_alias(&mut self, alias: impl Into<String>) -> Result<(), ModelError> {
        let alias = alias.into().trim().to_string();
        if alias == self.canonical {
            return Err(ModelError::AliasEqualsCanonical(alias));
        }
        if !alias.is_empty() {
            self.aliases.insert(alias);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DgOrigin {
    Generated,
    Handwritten,
}

/// The definition sentence and annotation guidelines attached to one tag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefGuidelines {
    pub tag: String,
    pub definition: String,
    pub guidelines: String,
    pub origin: DgOrigin,
}

impl DefGuidelines {
    pub fn new(
        tag: impl Into<String>,
        definition: impl Into<String>,
        guidelines: impl Into<String>,
        origin: DgOrigin,
    ) -> Result<Self, ModelError> {
        let dg = Self {
            tag: tag.into(),
            definition: definition.into(),
            guidelines: guidelines.into(),
            origin,
        };
        dg.validate()?;
        Ok(dg)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.definition.trim().is_empty() {
            return Err(ModelError::EmptyDefinition(self.tag.clone()));
        }
        if self.guidelines.trim().is_empty() {
            return Err(ModelError::EmptyGuidelines(self.tag.clone()));
        }
        Ok(())
    }
}

/// An input text with per-tag gold span sets, ordered by first occurrence.
///
/// Span identity is the verbatim string: two identical mentions count once.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedDoc {
    pub id: String,
    pub text: String,
    /// tag -> unique spans, sorted by first-occurrence offset in `text`.
    pub gold: BTreeMap<String, Vec<String>>,
}

impl AnnotatedDoc {
    /// Builds a doc, deduplicating and re-sorting each gold list by first
    /// occurrence. A span absent from the text is a hard error.
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        gold: BTreeMap<String, Vec<String>>,
    ) -> Result<Self, ModelError> {
        let id = id.into();
        let text = text.into();
        let mut normalized = BTreeMap::new();
        for (tag, spans) in gold {
            let mut with_offset: Vec<(usize, String)> = Vec::new();
            for span in spans {
                match text.find(&span) {
                    Some(offset) => {
                        if !with_offset.iter().any(|(_, s)| *s == span) {
                            with_offset.push((offset, span));
                        }
                    }
                    None => {
                        return Err(ModelError::SpanNotInText {
                            doc_id: id,
                            tag,
                            span,
                        })
                    }
                }
            }
            with_offset.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
            normalized.insert(tag, with_offset.into_iter().map(|(_, s)| s).collect());
        }
        Ok(Self {
            id,
            text,
            gold: normalized,
        })
    }

    /// Gold spans for `tag`, empty when the tag is unannotated.
    pub fn gold_spans(&self, tag: &str) -> &[String] {
        self.gold.get(tag).map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseStatus {
    /// Raw output was exactly a JSON array of strings.
    Clean,
    /// An array was salvaged from surrounding prose or fences.
    Recovered,
    /// Nothing parsable; spans are empty.
    Failed,
}

/// The parsed, deduplicated span set a model returned for one (doc, tag) pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub doc_id: String,
    pub tag: String,
    pub spans: BTreeSet<String>,
    pub raw_output: String,
    pub parse_status: ParseStatus,
}

impl Prediction {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.parse_status == ParseStatus::Failed && !self.spans.is_empty() {
            return Err(ModelError::FailedWithSpans(
                self.doc_id.clone(),
                self.tag.clone(),
            ));
        }
        Ok(())
    }
}

/// Strict-match counts for one tag (or one pooled total).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl MatchCounts {
    pub fn add(&mut self, other: MatchCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    pub fn gold_total(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn pred_total(&self) -> u64 {
        self.tp + self.fp
    }
}

/// Precision/recall/F1 triple in [0,1].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PrfMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl PrfMetrics {
    /// P (resp. R) is 0 when its denominator is 0; F1 is 0 when P+R = 0.
    pub fn from_counts(c: MatchCounts) -> Self {
        let precision = if c.pred_total() == 0 {
            0.0
        } else {
            c.tp as f64 / c.pred_total() as f64
        };
        let recall = if c.gold_total() == 0 {
            0.0
        } else {
            c.tp as f64 / c.gold_total() as f64
        };
        Self {
            precision,
            recall,
            f1: harmonic_mean(precision, recall),
        }
    }
}

/// 2PR/(P+R), 0 when both are 0.
pub fn harmonic_mean(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Per-tag scores for one evaluated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagReport {
    pub counts: MatchCounts,
    pub metrics: PrfMetrics,
    /// True when the tag had neither gold nor predicted spans; such tags are
    /// excluded from macro averaging.
    pub no_instances: bool,
}

/// Per-tag counts and P/R/F1 plus micro and macro aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_tag: BTreeMap<String, TagReport>,
    pub micro: PrfMetrics,
    pub micro_counts: MatchCounts,
    pub macro_: PrfMetrics,
    pub n_docs: u64,
    pub n_tags: u64,
}

/// Mean and population standard deviation of one metric over runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub n_runs: u64,
}

impl RunStats {
    pub fn from_values(metric: impl Into<String>, values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self {
            metric: metric.into(),
            mean,
            std: var.sqrt(),
            n_runs: values.len() as u64,
        })
    }

    /// Percent-scale display used in the result tables, e.g. "54.0 ± 0.5".
    pub fn display_pm(&self) -> String {
        format!("{:.1} ± {:.1}", self.mean * 100.0, self.std * 100.0)
    }
}
