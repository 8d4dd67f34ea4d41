//! Prompt rendering: the per-tag extraction instruction, the one-shot
//! guideline-generation prompt, and the JSON training target.
//!
//! Template texts are configuration, not code: the defaults below are
//! embedded copies of the files under `templates/` and can be overridden
//! by pointing the CLI at a template directory.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{AnnotatedDoc, DefGuidelines};

pub const DEFAULT_TASK_WITH_DG: &str = include_str!("../templates/task_with_dg.txt");
pub const DEFAULT_TASK_WITHOUT_DG: &str = include_str!("../templates/task_without_dg.txt");
pub const DEFAULT_GUIDELINE_GEN: &str = include_str!("../templates/guideline_gen.txt");

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("template {name:?}: unknown placeholder {placeholder:?}")]
    UnknownPlaceholder { name: String, placeholder: String },
    #[error("template {name:?}: placeholder {placeholder:?} must occur exactly {expected} time(s), found {found}")]
    PlaceholderCount {
        name: String,
        placeholder: String,
        expected: usize,
        found: usize,
    },
    #[error("template variant {0:?} requires definition and guidelines")]
    MissingGuidelines(String),
    #[error("template variant {0:?} takes no definition and guidelines")]
    UnexpectedGuidelines(String),
    #[error("tag {tag:?} has only {available} positive example(s); 3 are required")]
    TooFewExamples { tag: String, available: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateVariant {
    WithDg,
    WithoutDg,
}

const TASK_PLACEHOLDERS: [&str; 4] = ["input_text", "tag", "definition", "guidelines"];

/// An extraction-instruction template with named placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub name: String,
    pub body: String,
    pub variant: TemplateVariant,
}

fn count_placeholder(body: &str, name: &str) -> usize {
    body.matches(&format!("{{{name}}}")).count()
}

/// Scans for `{identifier}` tokens in a template body.
fn placeholders_in(body: &str) -> Vec<String> {
    let mut found = Vec::new();
    let bytes = body.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            if let Some(end) = body[i + 1..].find(['}', '{']) {
                let inner = &body[i + 1..i + 1 + end];
                if body.as_bytes()[i + 1 + end] == b'}'
                    && !inner.is_empty()
                    && inner.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
                {
                    found.push(inner.to_string());
                    i += end + 2;
                    continue;
                }
            }
        }
        i += 1;
    }
    found
}

impl PromptTemplate {
    pub fn new(
        name: impl Into<String>,
        body: impl Into<String>,
        variant: TemplateVariant,
    ) -> Result<Self, PromptError> {
        let t = Self {
            name: name.into(),
            body: body.into(),
            variant,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn default_for(variant: TemplateVariant) -> Self {
        match variant {
            TemplateVariant::WithDg => {
                Self::new("task_with_dg", DEFAULT_TASK_WITH_DG, variant).expect("default template")
            }
            TemplateVariant::WithoutDg => {
                Self::new("task_without_dg", DEFAULT_TASK_WITHOUT_DG, variant)
                    .expect("default template")
            }
        }
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        for p in placeholders_in(&self.body) {
            if !TASK_PLACEHOLDERS.contains(&p.as_str()) {
                return Err(PromptError::UnknownPlaceholder {
                    name: self.name.clone(),
                    placeholder: p,
                });
            }
        }
        let expect = |placeholder: &str, expected: usize| -> Result<(), PromptError> {
            let found = count_placeholder(&self.body, placeholder);
            if found != expected {
                return Err(PromptError::PlaceholderCount {
                    name: self.name.clone(),
                    placeholder: placeholder.to_string(),
                    expected,
                    found,
                });
            }
            Ok(())
        };
        expect("input_text", 1)?;
        expect("tag", 1)?;
        let dg_count = match self.variant {
            TemplateVariant::WithDg => 1,
            TemplateVariant::WithoutDg => 0,
        };
        expect("definition", dg_count)?;
        expect("guidelines", dg_count)?;
        Ok(())
    }
}

/// A fully substituted prompt for one (document chunk, tag) job.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    pub tag: String,
    pub doc_id: String,
    pub chunk_index: usize,
}

impl RenderedPrompt {
    /// Content hash used to key the call cache.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.text.as_bytes());
        hex::encode(hasher.finalize())
    }
}

/// Substitutes every placeholder of `template`; the D&G presence must match
/// the template variant.
pub fn render_task_prompt(
    template: &PromptTemplate,
    chunk_text: &str,
    tag: &str,
    doc_id: &str,
    chunk_index: usize,
    dg: Option<&DefGuidelines>,
) -> Result<RenderedPrompt, PromptError> {
    template.validate()?;
    let mut text = template.body.clone();
    match (template.variant, dg) {
        (TemplateVariant::WithDg, Some(dg)) => {
            text = text.replace("{definition}", &dg.definition);
            text = text.replace("{guidelines}", &dg.guidelines);
        }
        (TemplateVariant::WithDg, None) => {
            return Err(PromptError::MissingGuidelines(template.name.clone()))
        }
        (TemplateVariant::WithoutDg, None) => {}
        (TemplateVariant::WithoutDg, Some(_)) => {
            return Err(PromptError::UnexpectedGuidelines(template.name.clone()))
        }
    }
    text = text.replace("{tag}", tag);
    // last, so braces inside the document cannot collide with placeholders
    text = text.replace("{input_text}", chunk_text);
    Ok(RenderedPrompt {
        text,
        tag: tag.to_string(),
        doc_id: doc_id.to_string(),
        chunk_index,
    })
}

/// Picks 3 sentences containing a gold span of `tag`, deterministically
/// under `rng_seed`.
pub fn sample_guideline_examples(
    corpus: &[AnnotatedDoc],
    tag: &str,
    rng_seed: u64,
) -> Result<[String; 3], PromptError> {
    let mut positives: Vec<&AnnotatedDoc> = corpus
        .iter()
        .filter(|d| !d.gold_spans(tag).is_empty())
        .collect();
    positives.sort_by(|a, b| a.id.cmp(&b.id));
    if positives.len() < 3 {
        return Err(PromptError::TooFewExamples {
            tag: tag.to_string(),
            available: positives.len(),
        });
    }
    let mut hasher = Sha256::new();
    hasher.update(rng_seed.to_le_bytes());
    hasher.update(tag.as_bytes());
    let mut key = [0u8; 32];
    key.copy_from_slice(&hasher.finalize());
    let mut rng = ChaCha8Rng::from_seed(key);
    positives.shuffle(&mut rng);
    Ok([
        positives[0].text.clone(),
        positives[1].text.clone(),
        positives[2].text.clone(),
    ])
}

/// Renders the one-shot guideline-generation prompt: an exemplar round plus
/// the target tag and its three sampled sentences.
pub fn render_guideline_prompt(template_body: &str, tag: &str, examples: &[String; 3]) -> String {
    template_body
        .replace("{tag}", tag)
        .replace("{example_1}", &examples[0])
        .replace("{example_2}", &examples[1])
        .replace("{example_3}", &examples[2])
}

/// Renders the training target: a JSON array of the gold spans in
/// first-occurrence order.
pub fn render_target(gold_spans: &[String]) -> String {
    serde_json::to_string(gold_spans).expect("strings serialize")
}
