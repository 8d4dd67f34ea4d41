//! Implementations of the four pipeline subcommands.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;

use zner_core::curation::{
    canonicalize_tags, compute_overlap, exclude_test_overlap, filter_by_support,
    fold_corpus_aliases, render_overlap_table, sample_training_set,
};
use zner_core::evaluation::{aggregate_runs, render_report, score_corpus, ReportLayout};
use zner_core::guidelines::{export_dg, generate_dg, import_dg, DgCache};
use zner_core::inference::{build_call_plan, run_inference, InferConfig};
use zner_core::llm::{HttpChatClient, LlmClient, RetryPolicy};
use zner_core::model::{AnnotatedDoc, EvalReport, ParseStatus, Prediction, RunStats};
use zner_core::prompting::{
    PromptTemplate, TemplateVariant, DEFAULT_GUIDELINE_GEN, DEFAULT_TASK_WITHOUT_DG,
    DEFAULT_TASK_WITH_DG,
};
use zner_core::corpus;

use crate::config::{template_body, RunConfig};
use crate::error::{CliError, ErrorKind};

fn write_jsonl<T: Serialize>(
    path: &Path,
    header: &[String],
    records: &[T],
) -> Result<(), CliError> {
    let to_err = |e: std::io::Error| {
        CliError::new(
            ErrorKind::Data,
            format!("cannot write {}: {e}", path.display()),
        )
    };
    let mut out = String::new();
    for line in header {
        out.push_str(&format!("# {line}\n"));
    }
    for record in records {
        out.push_str(&serde_json::to_string(record).expect("serializable record"));
        out.push('\n');
    }
    let mut file = std::fs::File::create(path).map_err(to_err)?;
    file.write_all(out.as_bytes()).map_err(to_err)
}

fn write_text(path: &Path, header: &[String], body: &str) -> Result<(), CliError> {
    let mut out = String::new();
    for line in header {
        out.push_str(&format!("# {line}\n"));
    }
    out.push_str(body);
    if !out.ends_with('\n') {
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| {
        CliError::new(
            ErrorKind::Data,
            format!("cannot write {}: {e}", path.display()),
        )
    })
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| {
        CliError::new(
            ErrorKind::Data,
            format!("cannot create {}: {e}", dir.display()),
        )
    })
}

fn load_nonempty_corpus(path: &Path) -> Result<Vec<AnnotatedDoc>, CliError> {
    let docs = corpus::load_corpus(path)?;
    if docs.is_empty() {
        return Err(CliError::new(
            ErrorKind::Data,
            format!("corpus {} contains no documents", path.display()),
        ));
    }
    Ok(docs)
}

/// Builds the HTTP client from the `[endpoint]` config section. The API key
/// is read from the environment variable the config names; an empty
/// `api_key_env` means a keyless (local) endpoint.
fn make_client(config: &RunConfig) -> Result<HttpChatClient, CliError> {
    let endpoint = config.endpoint()?.clone();
    let client = if endpoint.api_key_env.is_empty() {
        HttpChatClient::with_key(endpoint, None)?
    } else {
        HttpChatClient::new(endpoint)?
    };
    Ok(client)
}

#[derive(Serialize)]
struct OverlapRecord<'a> {
    benchmark: &'a str,
    overlapping: usize,
    total: usize,
    percent: u32,
    undefined: bool,
}

pub fn cmd_curate(
    config: &RunConfig,
    corpus_path: &Path,
    out_dir: &Path,
) -> Result<(), CliError> {
    let docs = load_nonempty_corpus(corpus_path)?;
    ensure_dir(out_dir)?;
    let cur = &config.curation;

    let supported = filter_by_support(&docs, cur.min_support);
    let registry = canonicalize_tags(&supported, &cur.alias_map, &cur.blocklist)?;
    let canonical: BTreeSet<String> = registry.keys().cloned().collect();
    let kept = exclude_test_overlap(&canonical, &cur.test_tags, &cur.keep_despite_overlap);

    let folded = fold_corpus_aliases(&docs, &cur.alias_map);
    let (examples, shortfall) =
        sample_training_set(&folded, &kept, cur.k_pos, cur.k_neg, cur.rng_seed);
    let overlap = compute_overlap(&canonical, &cur.test_tags);

    let header = config.header();
    write_jsonl(&out_dir.join("training_set.jsonl"), &header, &examples)?;
    let tags: Vec<_> = kept.iter().map(|t| &registry[t]).collect();
    write_jsonl(&out_dir.join("tags.jsonl"), &header, &tags)?;

    let mut overlap_records: Vec<OverlapRecord> = overlap
        .per_benchmark
        .iter()
        .map(|(name, row)| OverlapRecord {
            benchmark: name,
            overlapping: row.overlapping,
            total: row.total,
            percent: row.percent(),
            undefined: row.undefined,
        })
        .collect();
    overlap_records.push(OverlapRecord {
        benchmark: "TOTAL",
        overlapping: overlap.total.overlapping,
        total: overlap.total.total,
        percent: overlap.total.percent(),
        undefined: overlap.total.undefined,
    });
    write_jsonl(&out_dir.join("overlap_report.jsonl"), &header, &overlap_records)?;
    write_text(
        &out_dir.join("overlap_table.txt"),
        &header,
        &render_overlap_table(&overlap),
    )?;
    write_jsonl(&out_dir.join("shortfall.jsonl"), &header, &shortfall)?;

    println!(
        "curated: {} raw tags >= support {}, {} after merge/blocklist, {} after test-set exclusion",
        supported.len(),
        cur.min_support,
        canonical.len(),
        kept.len()
    );
    println!(
        "wrote {} training examples to {} ({} shortfall entries)",
        examples.len(),
        out_dir.join("training_set.jsonl").display(),
        shortfall.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct SkipRecord {
    tag: String,
    reason: String,
}

pub fn cmd_guidelines(
    config: &RunConfig,
    corpus_path: &Path,
    out_path: &Path,
    tag_filter: &[String],
) -> Result<(), CliError> {
    let docs = load_nonempty_corpus(corpus_path)?;
    let folded = fold_corpus_aliases(&docs, &config.curation.alias_map);

    let tags: BTreeSet<String> = if tag_filter.is_empty() {
        folded.iter().flat_map(|d| d.gold.keys().cloned()).collect()
    } else {
        tag_filter.iter().cloned().collect()
    };

    // an existing output file is re-imported, so interrupted generation
    // resumes without repeating calls, and handwritten entries are pinned
    let cache = if out_path.exists() {
        Mutex::new(import_dg(out_path)?)
    } else {
        Mutex::new(DgCache::default())
    };
    let already = cache.lock().unwrap().len();

    let mut skipped = Vec::new();
    let mut todo = Vec::new();
    for tag in &tags {
        if cache.lock().unwrap().get(tag).is_some() {
            continue;
        }
        let positives = folded.iter().filter(|d| !d.gold_spans(tag).is_empty()).count();
        if positives < 3 {
            skipped.push(SkipRecord {
                tag: tag.clone(),
                reason: format!("only {positives} positive document(s), need 3"),
            });
        } else {
            todo.push(tag.clone());
        }
    }

    let mut generated = 0;
    let mut first_error: Option<CliError> = None;
    if !todo.is_empty() {
        let client = make_client(config)?;
        let retry = RetryPolicy::default();
        let template = template_body(
            config.template_dir.as_deref(),
            "guideline_gen.txt",
            DEFAULT_GUIDELINE_GEN,
        )?;
        let next = AtomicUsize::new(0);
        let errors: Mutex<Vec<CliError>> = Mutex::new(Vec::new());
        let done = AtomicUsize::new(0);
        let workers = config.inference.concurrency.max(1).min(todo.len());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let idx = next.fetch_add(1, Ordering::SeqCst);
                    let Some(tag) = todo.get(idx) else { break };
                    match generate_dg(
                        tag,
                        &folded,
                        &template,
                        &client,
                        &retry,
                        config.rng_seed,
                        &cache,
                    ) {
                        Ok(_) => {
                            done.fetch_add(1, Ordering::SeqCst);
                        }
                        Err(e) => errors.lock().unwrap().push(e.into()),
                    }
                });
            }
        });
        generated = done.load(Ordering::SeqCst);
        first_error = errors.into_inner().unwrap().into_iter().next();
    }

    // export whatever succeeded even on failure, so a rerun resumes
    export_dg(&cache.lock().unwrap(), out_path, &config.header())?;
    if !skipped.is_empty() {
        let skip_path = out_path.with_extension("skipped.jsonl");
        write_jsonl(&skip_path, &config.header(), &skipped)?;
    }
    println!(
        "guidelines: {generated} generated, {already} already present, {} skipped -> {}",
        skipped.len(),
        out_path.display()
    );
    match first_error {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

pub struct InferArgs {
    pub corpus: PathBuf,
    pub dg: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub tags: Vec<String>,
    pub yes: bool,
    pub max_calls: Option<usize>,
    pub no_guidelines: bool,
    pub no_resume: bool,
}

pub fn cmd_infer(config: &RunConfig, args: &InferArgs) -> Result<(), CliError> {
    let docs = load_nonempty_corpus(&args.corpus)?;
    let folded = fold_corpus_aliases(&docs, &config.curation.alias_map);
    ensure_dir(&args.out_dir)?;

    let tags: BTreeSet<String> = if args.tags.is_empty() {
        folded.iter().flat_map(|d| d.gold.keys().cloned()).collect()
    } else {
        args.tags.iter().cloned().collect()
    };

    let variant = if args.no_guidelines {
        TemplateVariant::WithoutDg
    } else {
        config.inference.template_variant
    };
    let (file_name, default_body) = match variant {
        TemplateVariant::WithDg => ("task_with_dg.txt", DEFAULT_TASK_WITH_DG),
        TemplateVariant::WithoutDg => ("task_without_dg.txt", DEFAULT_TASK_WITHOUT_DG),
    };
    let body = template_body(config.template_dir.as_deref(), file_name, default_body)?;
    let template = PromptTemplate::new(file_name.trim_end_matches(".txt"), body, variant)?;

    let dg_by_tag = match variant {
        TemplateVariant::WithDg => {
            let dg_path = args.dg.as_deref().ok_or_else(|| {
                CliError::new(
                    ErrorKind::Config,
                    "definitions file required: pass --dg <file> or --no-guidelines".to_string(),
                )
            })?;
            corpus::load_dg_file(dg_path)?
                .into_iter()
                .map(|dg| (dg.tag.clone(), dg))
                .collect()
        }
        TemplateVariant::WithoutDg => BTreeMap::new(),
    };

    let plan = build_call_plan(
        &folded,
        &tags,
        config.chunking.window_words,
        config.chunking.overlap_words,
    )?;
    println!(
        "{} calls planned ({} documents x {} tags, chunked at {} words)",
        plan.n_calls, plan.n_docs, plan.n_tags, config.chunking.window_words
    );
    if plan.n_calls > config.inference.call_budget && !args.yes {
        return Err(CliError::new(
            ErrorKind::Config,
            format!(
                "planned {} calls exceeds the call budget of {}; rerun with --yes to proceed",
                plan.n_calls, config.inference.call_budget
            ),
        ));
    }

    let client = make_client(config)?;
    let cache_dir = if args.no_resume {
        None
    } else {
        Some(
            config
                .inference
                .cache_dir
                .clone()
                .unwrap_or_else(|| args.out_dir.join("call_cache")),
        )
    };
    let infer_config = InferConfig {
        window_words: config.chunking.window_words,
        overlap_words: config.chunking.overlap_words,
        concurrency: config.inference.concurrency,
        max_jobs: args.max_calls,
        cache_dir,
    };
    let predictions = run_inference(
        &folded,
        &tags,
        &template,
        &dg_by_tag,
        &client as &dyn LlmClient,
        &RetryPolicy::default(),
        &infer_config,
    )?;

    let partial = args.max_calls.map(|m| m < plan.n_calls).unwrap_or(false);
    let file = if partial {
        "predictions.partial.jsonl"
    } else {
        "predictions.jsonl"
    };
    let path = args.out_dir.join(file);
    corpus::save_predictions(&predictions, &path, &config.header())?;

    let mut clean = 0;
    let mut recovered = 0;
    let mut failed = 0;
    for p in &predictions {
        match p.parse_status {
            ParseStatus::Clean => clean += 1,
            ParseStatus::Recovered => recovered += 1,
            ParseStatus::Failed => failed += 1,
        }
    }
    println!(
        "wrote {} predictions to {} ({clean} clean, {recovered} recovered, {failed} failed)",
        predictions.len(),
        path.display()
    );
    if partial {
        println!(
            "partial run: {} of {} calls dispatched; rerun without --max-calls to finish (cached calls are free)",
            args.max_calls.unwrap_or(0).min(plan.n_calls),
            plan.n_calls
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct ReportRecord<'a> {
    kind: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    tag: Option<&'a str>,
    tp: u64,
    fp: u64,
    #[serde(rename = "fn")]
    fn_: u64,
    precision: f64,
    recall: f64,
    f1: f64,
}

fn report_records(report: &EvalReport) -> Vec<ReportRecord<'_>> {
    let mut records = Vec::new();
    for (tag, tr) in &report.per_tag {
        records.push(ReportRecord {
            kind: "tag",
            tag: Some(tag),
            tp: tr.counts.tp,
            fp: tr.counts.fp,
            fn_: tr.counts.fn_,
            precision: tr.metrics.precision,
            recall: tr.metrics.recall,
            f1: tr.metrics.f1,
        });
    }
    records.push(ReportRecord {
        kind: "micro",
        tag: None,
        tp: report.micro_counts.tp,
        fp: report.micro_counts.fp,
        fn_: report.micro_counts.fn_,
        precision: report.micro.precision,
        recall: report.micro.recall,
        f1: report.micro.f1,
    });
    records.push(ReportRecord {
        kind: "macro",
        tag: None,
        tp: report.micro_counts.tp,
        fp: report.micro_counts.fp,
        fn_: report.micro_counts.fn_,
        precision: report.macro_.precision,
        recall: report.macro_.recall,
        f1: report.macro_.f1,
    });
    records
}

pub struct EvalArgs {
    pub gold: PathBuf,
    pub runs: Vec<PathBuf>,
    pub out_dir: PathBuf,
    pub strict: bool,
    pub layout: ReportLayout,
}

pub fn cmd_eval(config: &RunConfig, args: &EvalArgs) -> Result<(), CliError> {
    if args.runs.is_empty() {
        return Err(CliError::new(
            ErrorKind::Config,
            "at least one predictions file is required".to_string(),
        ));
    }
    let gold = load_nonempty_corpus(&args.gold)?;
    ensure_dir(&args.out_dir)?;
    let policy = config.eval.policy();
    let header = config.header();

    let mut reports = Vec::new();
    let mut failed_predictions = 0usize;
    for (i, run) in args.runs.iter().enumerate() {
        let predictions: Vec<Prediction> = corpus::load_predictions(run)?;
        failed_predictions += predictions
            .iter()
            .filter(|p| p.parse_status == ParseStatus::Failed)
            .count();
        let report = score_corpus(&gold, &predictions, &policy)?;

        let stem = if args.runs.len() == 1 {
            "report".to_string()
        } else {
            format!("report_run{}", i + 1)
        };
        write_jsonl(
            &args.out_dir.join(format!("{stem}.jsonl")),
            &header,
            &report_records(&report),
        )?;
        write_text(
            &args.out_dir.join(format!("{stem}.txt")),
            &header,
            &render_report(&report, args.layout, &policy),
        )?;
        println!(
            "{}: micro F1 {:.2}, macro F1 {:.2} ({} docs, {} tags)",
            run.display(),
            report.micro.f1 * 100.0,
            report.macro_.f1 * 100.0,
            report.n_docs,
            report.n_tags
        );
        reports.push(report);
    }

    if reports.len() > 1 {
        let stats = aggregate_runs(&reports)?;
        let records: Vec<&RunStats> = stats.values().collect();
        write_jsonl(&args.out_dir.join("stats.jsonl"), &header, &records)?;
        let mut lines = String::new();
        for (metric, stat) in &stats {
            lines.push_str(&format!("{metric}: {}\n", stat.display_pm()));
        }
        write_text(&args.out_dir.join("stats.txt"), &header, &lines)?;
        println!(
            "across {} runs: micro_f1 {}",
            reports.len(),
            stats["micro_f1"].display_pm()
        );
    }

    if args.strict && failed_predictions > 0 {
        return Err(CliError::new(
            ErrorKind::Validation,
            format!("{failed_predictions} prediction(s) have failed parse status"),
        ));
    }
    Ok(())
}
