//! Strict span-level scoring: exact-extent unique-span matching, per-tag and
//! micro/macro P/R/F1, multi-run statistics and table rendering.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::model::{
    AnnotatedDoc, EvalReport, MatchCounts, Prediction, PrfMetrics, RunStats, TagReport,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no runs to aggregate")]
    NoRuns,
    #[error("prediction/gold doc-id mismatch; only in predictions: {only_pred:?}, only in gold: {only_gold:?}")]
    DocIdMismatch {
        only_pred: Vec<String>,
        only_gold: Vec<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanNormalize {
    None,
    TrimAndNfc,
}

/// How gold and predicted spans are compared. Applied symmetrically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchPolicy {
    pub case_sensitive: bool,
    pub normalize: SpanNormalize,
}

impl Default for MatchPolicy {
    fn default() -> Self {
        Self {
            case_sensitive: true,
            normalize: SpanNormalize::TrimAndNfc,
        }
    }
}

impl MatchPolicy {
    pub fn apply(&self, span: &str) -> String {
        let mut s = match self.normalize {
            SpanNormalize::None => span.to_string(),
            SpanNormalize::TrimAndNfc => span.trim().nfc().collect::<String>(),
        };
        if !self.case_sensitive {
            s = s.to_lowercase();
        }
        s
    }

    fn apply_set(&self, spans: &BTreeSet<String>) -> BTreeSet<String> {
        spans.iter().map(|s| self.apply(s)).collect()
    }
}

/// Strict counts for one (gold, predicted) span-set pair.
pub fn score_pair(
    gold: &BTreeSet<String>,
    pred: &BTreeSet<String>,
    policy: &MatchPolicy,
) -> MatchCounts {
    let gold = policy.apply_set(gold);
    let pred = policy.apply_set(pred);
    let tp = gold.intersection(&pred).count() as u64;
    MatchCounts {
        tp,
        fp: pred.len() as u64 - tp,
        fn_: gold.len() as u64 - tp,
    }
}

/// Scores predictions against gold documents, counting per (tag, doc) pair
/// and summing per tag. Every gold (doc, tag) pair with no prediction counts
/// its spans as misses; predictions for unannotated pairs count as false
/// positives. Doc-id mismatches between the two sides are an error reporting
/// the symmetric difference.
pub fn score_corpus(
    gold_docs: &[AnnotatedDoc],
    predictions: &[Prediction],
    policy: &MatchPolicy,
) -> Result<EvalReport, EvalError> {
    let gold_ids: BTreeSet<&str> = gold_docs.iter().map(|d| d.id.as_str()).collect();
    let pred_ids: BTreeSet<&str> = predictions.iter().map(|p| p.doc_id.as_str()).collect();
    if !pred_ids.is_subset(&gold_ids) {
        return Err(EvalError::DocIdMismatch {
            only_pred: pred_ids
                .difference(&gold_ids)
                .map(|s| s.to_string())
                .collect(),
            only_gold: gold_ids
                .difference(&pred_ids)
                .map(|s| s.to_string())
                .collect(),
        });
    }

    let mut by_pair: BTreeMap<(&str, &str), &Prediction> = BTreeMap::new();
    for p in predictions {
        by_pair.insert((p.tag.as_str(), p.doc_id.as_str()), p);
    }
    let tags: BTreeSet<&str> = gold_docs
        .iter()
        .flat_map(|d| d.gold.keys().map(String::as_str))
        .chain(predictions.iter().map(|p| p.tag.as_str()))
        .collect();

    let empty = BTreeSet::new();
    let mut per_tag_counts: BTreeMap<String, MatchCounts> = BTreeMap::new();
    for tag in &tags {
        let mut counts = MatchCounts::default();
        for doc in gold_docs {
            let gold: BTreeSet<String> = doc.gold_spans(tag).iter().cloned().collect();
            let pred = by_pair
                .get(&(*tag, doc.id.as_str()))
                .map(|p| &p.spans)
                .unwrap_or(&empty);
            counts.add(score_pair(&gold, pred, policy));
        }
        per_tag_counts.insert(tag.to_string(), counts);
    }
    Ok(aggregate(&per_tag_counts, gold_docs.len() as u64))
}

/// Builds the report from per-tag summed counts: per-tag P/R/F1, micro from
/// globally summed counts, macro as the unweighted mean over tags with at
/// least one gold or predicted span.
pub fn aggregate(per_tag_counts: &BTreeMap<String, MatchCounts>, n_docs: u64) -> EvalReport {
    let mut per_tag = BTreeMap::new();
    let mut micro_counts = MatchCounts::default();
    let mut macro_sum = PrfMetrics::default();
    let mut macro_n = 0u64;
    for (tag, &counts) in per_tag_counts {
        micro_counts.add(counts);
        let no_instances = counts.gold_total() == 0 && counts.pred_total() == 0;
        let metrics = PrfMetrics::from_counts(counts);
        if !no_instances {
            macro_sum.precision += metrics.precision;
            macro_sum.recall += metrics.recall;
            macro_sum.f1 += metrics.f1;
            macro_n += 1;
        }
        per_tag.insert(
            tag.clone(),
            TagReport {
                counts,
                metrics,
                no_instances,
            },
        );
    }
    let macro_ = if macro_n == 0 {
        PrfMetrics::default()
    } else {
        PrfMetrics {
            precision: macro_sum.precision / macro_n as f64,
            recall: macro_sum.recall / macro_n as f64,
            f1: macro_sum.f1 / macro_n as f64,
        }
    };
    EvalReport {
        micro: PrfMetrics::from_counts(micro_counts),
        micro_counts,
        macro_,
        n_docs,
        n_tags: per_tag.len() as u64,
        per_tag,
    }
}

/// Mean and population standard deviation of every headline metric across
/// runs, keyed by metric name.
pub fn aggregate_runs(reports: &[EvalReport]) -> Result<BTreeMap<String, RunStats>, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::NoRuns);
    }
    let metrics: [(&str, fn(&EvalReport) -> f64); 6] = [
        ("micro_precision", |r| r.micro.precision),
        ("micro_recall", |r| r.micro.recall),
        ("micro_f1", |r| r.micro.f1),
        ("macro_precision", |r| r.macro_.precision),
        ("macro_recall", |r| r.macro_.recall),
        ("macro_f1", |r| r.macro_.f1),
    ];
    let mut out = BTreeMap::new();
    for (name, get) in metrics {
        let values: Vec<f64> = reports.iter().map(get).collect();
        let stats = RunStats::from_values(name, &values).expect("non-empty");
        out.insert(name.to_string(), stats);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportLayout {
    /// One F1 column per benchmark plus an AVG column, 1 decimal.
    OodTable,
    /// Micro and macro precision/recall/F1 columns, 2 decimals.
    BusterTable,
}

/// Renders per-benchmark F1 rows in the OOD layout: benchmark columns plus
/// an AVG column, percent values at 1 decimal.
pub fn render_ood_table(rows: &[(String, BTreeMap<String, f64>)]) -> String {
    let mut benchmarks: BTreeSet<&String> = BTreeSet::new();
    for (_, cells) in rows {
        benchmarks.extend(cells.keys());
    }
    let mut header = vec!["model".to_string()];
    header.extend(benchmarks.iter().map(|b| (*b).clone()));
    header.push("AVG".to_string());

    let mut lines = vec![header.join("\t")];
    for (model, cells) in rows {
        let mut line = vec![model.clone()];
        let mut sum = 0.0;
        for b in &benchmarks {
            let v = cells.get(*b).copied().unwrap_or(0.0);
            sum += v;
            line.push(format!("{:.1}", v * 100.0));
        }
        let avg = if benchmarks.is_empty() {
            0.0
        } else {
            sum / benchmarks.len() as f64
        };
        line.push(format!("{:.1}", avg * 100.0));
        lines.push(line.join("\t"));
    }
    lines.join("\n") + "\n"
}

/// Renders one report in the requested layout, with the match policy in the
/// header for auditability.
pub fn render_report(report: &EvalReport, layout: ReportLayout, policy: &MatchPolicy) -> String {
    let policy_line = format!(
        "# match policy: case_sensitive={}, normalize={}",
        policy.case_sensitive,
        match policy.normalize {
            SpanNormalize::None => "none",
            SpanNormalize::TrimAndNfc => "trim_and_nfc",
        }
    );
    match layout {
        ReportLayout::BusterTable => {
            let header = "u-Precision\tu-Recall\tu-F1\tM-Precision\tM-Recall\tM-F1";
            let row = format!(
                "{:.2}\t{:.2}\t{:.2}\t{:.2}\t{:.2}\t{:.2}",
                report.micro.precision * 100.0,
                report.micro.recall * 100.0,
                report.micro.f1 * 100.0,
                report.macro_.precision * 100.0,
                report.macro_.recall * 100.0,
                report.macro_.f1 * 100.0,
            );
            format!("{policy_line}\n{header}\n{row}\n")
        }
        ReportLayout::OodTable => {
            let mut lines = vec![policy_line, "tag\ttp\tfp\tfn\tP\tR\tF1".to_string()];
            for (tag, tr) in &report.per_tag {
                let flag = if tr.no_instances { "\t(no instances)" } else { "" };
                lines.push(format!(
                    "{tag}\t{}\t{}\t{}\t{:.1}\t{:.1}\t{:.1}{flag}",
                    tr.counts.tp,
                    tr.counts.fp,
                    tr.counts.fn_,
                    tr.metrics.precision * 100.0,
                    tr.metrics.recall * 100.0,
                    tr.metrics.f1 * 100.0,
                ));
            }
            lines.push(format!(
                "micro\t{}\t{}\t{}\t{:.1}\t{:.1}\t{:.1}",
                report.micro_counts.tp,
                report.micro_counts.fp,
                report.micro_counts.fn_,
                report.micro.precision * 100.0,
                report.micro.recall * 100.0,
                report.micro.f1 * 100.0,
            ));
            lines.push(format!(
                "macro\t-\t-\t-\t{:.1}\t{:.1}\t{:.1}",
                report.macro_.precision * 100.0,
                report.macro_.recall * 100.0,
                report.macro_.f1 * 100.0,
            ));
            lines.join("\n") + "\n"
        }
    }
}
