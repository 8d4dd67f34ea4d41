//! Training-set construction: support filtering, alias merging, catch-all
//! removal, train/test overlap exclusion, seeded pos/neg sampling and
//! dataset-size sweeps.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{AnnotatedDoc, EntityTag};

#[derive(Debug, Error)]
pub enum CurationError {
    #[error("invalid curation config: {0}")]
    InvalidConfig(String),
    #[error("alias chain: {alias:?} maps to {target:?}, which is itself an alias")]
    AliasChain { alias: String, target: String },
    #[error("sweep steps must be strictly increasing, got {0:?}")]
    StepsNotIncreasing(Vec<usize>),
}

fn default_min_support() -> usize {
    100
}
fn default_k() -> usize {
    5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurationConfig {
    #[serde(default = "default_min_support")]
    pub min_support: usize,
    #[serde(default)]
    pub alias_map: BTreeMap<String, String>,
    #[serde(default)]
    pub blocklist: BTreeSet<String>,
    /// benchmark name -> tags in its test set.
    #[serde(default)]
    pub test_tags: BTreeMap<String, BTreeSet<String>>,
    /// Tags retained even when they appear in a test set.
    #[serde(default)]
    pub keep_despite_overlap: BTreeSet<String>,
    #[serde(default = "default_k")]
    pub k_pos: usize,
    #[serde(default = "default_k")]
    pub k_neg: usize,
    #[serde(default)]
    pub rng_seed: u64,
}

impl Default for CurationConfig {
    fn default() -> Self {
        Self {
            min_support: default_min_support(),
            alias_map: BTreeMap::new(),
            blocklist: BTreeSet::new(),
            test_tags: BTreeMap::new(),
            keep_despite_overlap: BTreeSet::new(),
            k_pos: default_k(),
            k_neg: default_k(),
            rng_seed: 0,
        }
    }
}

impl CurationConfig {
    pub fn validate(&self) -> Result<(), CurationError> {
        if self.min_support < 1 {
            return Err(CurationError::InvalidConfig("min_support must be >= 1".into()));
        }
        if self.k_pos + self.k_neg < 1 {
            return Err(CurationError::InvalidConfig(
                "k_pos + k_neg must be >= 1".into(),
            ));
        }
        if let Some(tag) = self.blocklist.intersection(&self.keep_despite_overlap).next() {
            return Err(CurationError::InvalidConfig(format!(
                "tag {tag:?} is both blocklisted and kept"
            )));
        }
        Ok(())
    }
}

/// Support of a tag: unique gold spans summed over documents.
pub fn tag_support(corpus: &[AnnotatedDoc]) -> BTreeMap<String, usize> {
    let mut support: BTreeMap<String, usize> = BTreeMap::new();
    for doc in corpus {
        for (tag, spans) in &doc.gold {
            *support.entry(tag.clone()).or_default() += spans.len();
        }
    }
    support
}

/// Tags with at least `min_support` gold instances.
pub fn filter_by_support(corpus: &[AnnotatedDoc], min_support: usize) -> BTreeSet<String> {
    tag_support(corpus)
        .into_iter()
        .filter(|(_, n)| *n >= min_support)
        .map(|(tag, _)| tag)
        .collect()
}

/// Folds spelling variants into canonical tags and drops catch-all labels.
///
/// `alias_map` values must themselves be canonical; a value that is also a
/// key is a configuration error.
pub fn canonicalize_tags(
    tags: &BTreeSet<String>,
    alias_map: &BTreeMap<String, String>,
    blocklist: &BTreeSet<String>,
) -> Result<BTreeMap<String, EntityTag>, CurationError> {
    for (alias, target) in alias_map {
        if alias_map.contains_key(target) {
            return Err(CurationError::AliasChain {
                alias: alias.clone(),
                target: target.clone(),
            });
        }
    }
    let mut out: BTreeMap<String, EntityTag> = BTreeMap::new();
    for name in tags {
        if blocklist.contains(name) {
            continue;
        }
        let canonical = alias_map.get(name).unwrap_or(name);
        if blocklist.contains(canonical) {
            continue;
        }
        let entry = out
            .entry(canonical.clone())
            .or_insert_with(|| EntityTag::new(canonical.clone(), "curation").expect("non-empty"));
        if name != canonical {
            entry.add_alias(name.clone()).expect("alias != canonical");
        }
    }
    Ok(out)
}

/// Folds a tag name through the alias map (identity when unmapped).
pub fn canonical_name<'a>(name: &'a str, alias_map: &'a BTreeMap<String, String>) -> &'a str {
    alias_map.get(name).map(String::as_str).unwrap_or(name)
}

/// Rewrites every gold tag of every document through the alias map, merging
/// span lists of variants that fold to the same canonical name. Ordering and
/// dedup of merged lists are re-derived from the text.
pub fn fold_corpus_aliases(
    corpus: &[AnnotatedDoc],
    alias_map: &BTreeMap<String, String>,
) -> Vec<AnnotatedDoc> {
    corpus
        .iter()
        .map(|doc| {
            let mut folded: BTreeMap<String, Vec<String>> = BTreeMap::new();
            for (tag, spans) in &doc.gold {
                folded
                    .entry(canonical_name(tag, alias_map).to_string())
                    .or_default()
                    .extend(spans.iter().cloned());
            }
            AnnotatedDoc::new(doc.id.clone(), doc.text.clone(), folded)
                .expect("spans already verified against text")
        })
        .collect()
}

/// Removes every tag present in any benchmark's test set, except the keep list.
pub fn exclude_test_overlap(
    tags: &BTreeSet<String>,
    test_tags: &BTreeMap<String, BTreeSet<String>>,
    keep: &BTreeSet<String>,
) -> BTreeSet<String> {
    let all_test: BTreeSet<&String> = test_tags.values().flatten().collect();
    tags.iter()
        .filter(|t| keep.contains(*t) || !all_test.contains(t))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

/// One curated training example: a (tag, document) pair with the document's
/// gold spans for that tag (empty for negatives).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TrainingExample {
    pub tag: String,
    pub doc_id: String,
    pub text: String,
    pub polarity: Polarity,
    pub spans: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShortfallEntry {
    pub tag: String,
    pub polarity: String,
    pub requested: usize,
    pub available: usize,
}

/// Machine-readable record of tags with fewer eligible docs than requested.
pub type ShortfallReport = Vec<ShortfallEntry>;

fn tag_rng(seed: u64, tag: &str, salt: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(salt.as_bytes());
    hasher.update(tag.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

/// Samples `k_pos` positive and `k_neg` negative documents per tag.
///
/// A positive has >= 1 gold span of the tag, a negative has none (it may
/// carry other tags). Candidates are ordered by doc id and shuffled with a
/// per-tag seeded RNG, so results are deterministic and prefixes are stable
/// as k grows. Tags short on candidates get what exists plus a shortfall
/// entry.
pub fn sample_training_set(
    corpus: &[AnnotatedDoc],
    tags: &BTreeSet<String>,
    k_pos: usize,
    k_neg: usize,
    rng_seed: u64,
) -> (Vec<TrainingExample>, ShortfallReport) {
    let mut sorted: Vec<&AnnotatedDoc> = corpus.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));

    let mut examples = Vec::new();
    let mut shortfall = Vec::new();
    for tag in tags {
        let mut positives: Vec<&AnnotatedDoc> = sorted
            .iter()
            .copied()
            .filter(|d| !d.gold_spans(tag).is_empty())
            .collect();
        let mut negatives: Vec<&AnnotatedDoc> = sorted
            .iter()
            .copied()
            .filter(|d| d.gold_spans(tag).is_empty())
            .collect();
        positives.shuffle(&mut tag_rng(rng_seed, tag, "pos"));
        negatives.shuffle(&mut tag_rng(rng_seed, tag, "neg"));

        if positives.len() < k_pos {
            shortfall.push(ShortfallEntry {
                tag: tag.clone(),
                polarity: "positive".into(),
                requested: k_pos,
                available: positives.len(),
            });
        }
        if negatives.len() < k_neg {
            shortfall.push(ShortfallEntry {
                tag: tag.clone(),
                polarity: "negative".into(),
                requested: k_neg,
                available: negatives.len(),
            });
        }
        for doc in positives.iter().take(k_pos) {
            examples.push(TrainingExample {
                tag: tag.clone(),
                doc_id: doc.id.clone(),
                text: doc.text.clone(),
                polarity: Polarity::Positive,
                spans: doc.gold_spans(tag).to_vec(),
            });
        }
        for doc in negatives.iter().take(k_neg) {
            examples.push(TrainingExample {
                tag: tag.clone(),
                doc_id: doc.id.clone(),
                text: doc.text.clone(),
                polarity: Polarity::Negative,
                spans: Vec::new(),
            });
        }
    }
    (examples, shortfall)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapRow {
    pub overlapping: usize,
    pub total: usize,
    pub fraction: f64,
    /// True when the benchmark's test set is empty (fraction reported as 0).
    pub undefined: bool,
}

impl OverlapRow {
    fn new(overlapping: usize, total: usize) -> Self {
        Self {
            overlapping,
            total,
            fraction: if total == 0 {
                0.0
            } else {
                overlapping as f64 / total as f64
            },
            undefined: total == 0,
        }
    }

    /// Integer percent, rounded half away from zero.
    pub fn percent(&self) -> u32 {
        (self.fraction * 100.0).round() as u32
    }
}

/// Per-benchmark counts of training tags that also appear in the test set,
/// plus an aggregate row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub per_benchmark: BTreeMap<String, OverlapRow>,
    pub total: OverlapRow,
}

pub fn compute_overlap(
    train_tags: &BTreeSet<String>,
    test_tags: &BTreeMap<String, BTreeSet<String>>,
) -> OverlapReport {
    let mut per_benchmark = BTreeMap::new();
    let mut sum_overlap = 0;
    let mut sum_total = 0;
    for (bench, tags) in test_tags {
        let overlapping = tags.iter().filter(|t| train_tags.contains(*t)).count();
        sum_overlap += overlapping;
        sum_total += tags.len();
        per_benchmark.insert(bench.clone(), OverlapRow::new(overlapping, tags.len()));
    }
    OverlapReport {
        per_benchmark,
        total: OverlapRow::new(sum_overlap, sum_total),
    }
}

/// Renders the overlap report as a fixed-width two-row table
/// (counts row, percent row).
pub fn render_overlap_table(report: &OverlapReport) -> String {
    let mut names = vec![];
    let mut counts = vec![];
    let mut percents = vec![];
    for (bench, row) in &report.per_benchmark {
        names.push(bench.clone());
        counts.push(format!("{}/{}", row.overlapping, row.total));
        percents.push(format!("{}%", row.percent()));
    }
    names.push("TOT".into());
    counts.push(format!("{}/{}", report.total.overlapping, report.total.total));
    percents.push(format!("{}%", report.total.percent()));

    let widths: Vec<usize> = names
        .iter()
        .zip(&counts)
        .zip(&percents)
        .map(|((n, c), p)| n.len().max(c.len()).max(p.len()))
        .collect();
    let fmt_row = |cells: &[String]| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect::<Vec<_>>()
            .join("  ")
    };
    format!(
        "{}\n{}\n{}\n",
        fmt_row(&names),
        fmt_row(&counts),
        fmt_row(&percents)
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    NTags,
    NExamplesPerTag,
}

/// Examples per polarity on the fixed axis of a sweep.
pub const SWEEP_FIXED_K: usize = 5;
/// Distinct tags used when sweeping examples-per-tag.
pub const SWEEP_FIXED_TAGS: usize = 50;

#[derive(Debug, Clone)]
pub struct SweepStep {
    pub step: usize,
    pub examples: Vec<TrainingExample>,
    pub shortfall: ShortfallReport,
    pub truncated: bool,
}

/// Builds nested training sets of growing size along one axis.
///
/// Tags are put in a seeded shuffled order once; each step extends the
/// previous step's tag prefix (tag axis) or per-tag sample prefix (example
/// axis), so dataset(step_i) is a subset of dataset(step_{i+1}).
pub fn build_sweep(
    corpus: &[AnnotatedDoc],
    tags: &BTreeSet<String>,
    axis: SweepAxis,
    steps: &[usize],
    rng_seed: u64,
) -> Result<Vec<SweepStep>, CurationError> {
    if steps.windows(2).any(|w| w[0] >= w[1]) || steps.is_empty() {
        return Err(CurationError::StepsNotIncreasing(steps.to_vec()));
    }
    let mut tag_order: Vec<String> = tags.iter().cloned().collect();
    tag_order.shuffle(&mut tag_rng(rng_seed, "", "tag-order"));

    let mut out = Vec::new();
    for &step in steps {
        let (selected, k, truncated) = match axis {
            SweepAxis::NTags => {
                let n = step.min(tag_order.len());
                (tag_order[..n].to_vec(), SWEEP_FIXED_K, n < step)
            }
            SweepAxis::NExamplesPerTag => {
                let n = SWEEP_FIXED_TAGS.min(tag_order.len());
                (tag_order[..n].to_vec(), step, false)
            }
        };
        let selected: BTreeSet<String> = selected.into_iter().collect();
        let (examples, shortfall) = sample_training_set(corpus, &selected, k, k, rng_seed);
        let truncated = truncated || !shortfall.is_empty();
        out.push(SweepStep {
            step,
            examples,
            shortfall,
            truncated,
        });
    }
    Ok(out)
}
