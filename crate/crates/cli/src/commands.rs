use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use priorscrub::corpus::{read_reports, write_jsonl, ReportRecord};
use priorscrub::detect::{DetectionRecord, LexiconFlagger, SentenceFlagger};
use priorscrub::diff::score_corpus;
use priorscrub::metrics::{evaluate_run, read_entities, read_token_dir, Sidecars};
use priorscrub::retrieval::{
    batch_retrieve, load_store, retrieve_sentences_ordered, CompositeOrder,
    RetrievalError, RetrievalMode, RetrievalResult,
};
use priorscrub::rewrite::{
    assemble, estimate_cost, rewrite_report, transport_by_name, CostInputs, RewriteConfig,
    RewriteResult,
};
use priorscrub::stats::{
    before_after, format_before_after, format_keyword_rows, keyword_counts, shared_patients, split,
    CountMode, SplitSummary,
};
use priorscrub::subword::{subword_split, SubwordVocab};
use priorscrub::{scrub_corpus, Detector, Lexicon};

use crate::cli::*;

pub fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Scrub(a) => scrub(a),
        Command::Detect(a) => detect(a).map(|_| ExitCode::SUCCESS),
        Command::Rewrite(a) => rewrite(a),
        Command::ScoreF1(a) => score(a).map(|_| ExitCode::SUCCESS),
        Command::Stats(a) => match a.command {
            StatsCommand::Count(a) => count(a),
            StatsCommand::Diff(a) => diff(a),
            StatsCommand::Split(a) => split_cmd(a),
        }
        .map(|_| ExitCode::SUCCESS),
        Command::Retrieve(a) => retrieve(a),
        Command::Metrics(a) => metrics(a).map(|_| ExitCode::SUCCESS),
        Command::Split(a) => split_cmd(a).map(|_| ExitCode::SUCCESS),
        Command::Serve(a) => crate::server::serve_blocking(a).map(|_| ExitCode::SUCCESS),
    }
}

pub fn detector(arg: &LexiconArg) -> Result<Detector> {
    match &arg.lexicon {
        None => Ok(Detector::bundled()),
        Some(path) => {
            let lexicon = Lexicon::load(path).with_context(|| format!("loading {}", path.display()))?;
            Ok(Detector::new(lexicon)?)
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn write_lines<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = create(path)?;
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn scrub(a: ScrubArgs) -> Result<ExitCode> {
    let det = detector(&a.lexicon)?;
    let input = File::open(&a.input).with_context(|| format!("opening {}", a.input.display()))?;
    let stats = scrub_corpus(BufReader::new(input), &det, create(&a.output)?)?;
    eprintln!(
        "scrubbed {} reports: {} tokens removed, {} sentences dropped, {} lines skipped",
        stats.reports_out, stats.tokens_removed, stats.sentences_dropped, stats.lines_skipped
    );
    if let Some(path) = &a.stats {
        write_json(path, &stats)?;
    }
    // skipped lines are reported through the exit status
    Ok(if stats.lines_skipped > 0 { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

#[derive(Serialize)]
struct SubwordRecord {
    id: String,
    #[serde(flatten)]
    sequence: priorscrub::subword::SubwordSequence,
}

fn detect(a: DetectArgs) -> Result<()> {
    let det = detector(&a.lexicon)?;
    let records = read_reports(&a.input)?;
    let vocab = match &a.subword_vocab {
        Some(p) => Some(SubwordVocab::load(p).with_context(|| format!("loading {}", p.display()))?),
        None => None,
    };
    let mut w = create(&a.output)?;
    for rec in &records {
        let labeled = det.detect(&rec.to_report());
        match &vocab {
            None => serde_json::to_writer(&mut w, &DetectionRecord::from(&labeled))?,
            Some(v) => serde_json::to_writer(
                &mut w,
                &SubwordRecord {
                    id: rec.id.clone(),
                    sequence: subword_split(&labeled, v),
                },
            )?,
        }
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn rewrite(a: RewriteArgs) -> Result<ExitCode> {
    let config: RewriteConfig = match &a.config {
        Some(p) => toml::from_str(
            &std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        )
        .with_context(|| format!("parsing {}", p.display()))?,
        None => RewriteConfig::default(),
    };
    config.validate()?;
    let det = detector(&a.lexicon)?;
    let transport = transport_by_name(if a.mock { "mock" } else { "http" }, &config, &det)?;
    let flagger = LexiconFlagger::new(det);
    let records = read_reports(&a.input)?;

    let mut out = Vec::with_capacity(records.len());
    let mut all_results: Vec<RewriteResult> = Vec::new();
    let (mut total, mut flagged, mut tokens, mut failed) = (0u64, 0u64, 0u64, 0usize);
    for rec in &records {
        let report = rec.to_report();
        let flags = flagger.flag(&report, a.threshold);
        total += report.sentences.len() as u64;
        flagged += flags.iter().filter(|f| f.flagged).count() as u64;
        tokens += report.token_count() as u64;
        let results = rewrite_report(&report, &flags, &config, transport.as_ref())?;
        failed += results.iter().filter(|r| r.error.is_some()).count();
        out.push(ReportRecord {
            id: rec.id.clone(),
            text: assemble(&results),
            patient_id: rec.patient_id.clone(),
        });
        all_results.extend(results);
    }
    write_jsonl(&a.output, &out)?;
    if let Some(p) = &a.results {
        write_lines(p, &all_results)?;
    }
    let cost = estimate_cost(
        &CostInputs {
            total_sentences: total,
            flagged_sentences: flagged,
            avg_tokens_per_sentence: if total == 0 { 0.0 } else { tokens as f64 / total as f64 },
        },
        &config,
    );
    eprintln!(
        "{} reports, {flagged}/{total} sentences flagged, {failed} failed; \
         estimated cost {:.2} filtered vs {:.2} unfiltered",
        records.len(),
        cost.filtered_cost,
        cost.unfiltered_cost
    );
    Ok(if failed > 0 { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

fn score(a: ScoreArgs) -> Result<()> {
    let result = score_corpus(
        &read_reports(&a.original)?,
        &read_reports(&a.modified)?,
        &read_reports(&a.ground_truth)?,
    )?;
    let headline = serde_json::json!({
        "micro": result.micro,
        "macro": { "f1": result.macro_f1 },
        "reports": result.reports,
        "note": result.note,
    });
    println!("{}", serde_json::to_string_pretty(&headline)?);
    if let Some(p) = &a.report {
        write_json(p, &result)?;
    }
    Ok(())
}

fn mode(raw: bool) -> CountMode {
    if raw {
        CountMode::Raw
    } else {
        CountMode::Detector
    }
}

fn count(a: CountArgs) -> Result<()> {
    let det = detector(&a.lexicon)?;
    let table = keyword_counts(&read_reports(&a.input)?, &det, mode(a.raw));
    let rows = table.rows(a.denominator);
    print!("{}", format_keyword_rows(&rows));
    if let Some(p) = &a.json {
        write_json(
            p,
            &serde_json::json!({
                "mode": mode(a.raw),
                "reports_read": table.reports_read,
                "denominator": a.denominator.unwrap_or(table.reports_read),
                "rows": rows,
            }),
        )?;
    }
    Ok(())
}

fn diff(a: DiffArgs) -> Result<()> {
    let det = detector(&a.lexicon)?;
    let t = before_after(&read_reports(&a.before)?, &read_reports(&a.after)?, &det, mode(a.raw));
    print!("{}", format_before_after(&t));
    if let Some(p) = &a.json {
        write_json(p, &t)?;
    }
    Ok(())
}

fn split_cmd(a: SplitArgs) -> Result<()> {
    let records = read_reports(&a.input)?;
    let (train, test) = split(&records, a.fraction, a.seed)?;
    write_jsonl(&a.train, &train)?;
    write_jsonl(&a.test, &test)?;
    let summary = SplitSummary {
        train: train.len(),
        test: test.len(),
        shared_patients: shared_patients(&train, &test),
        seed: a.seed,
        train_fraction: a.fraction,
    };
    println!("{}", serde_json::to_string(&summary)?);
    if !summary.shared_patients.is_empty() {
        bail!("patients on both sides: {:?}", summary.shared_patients);
    }
    Ok(())
}

#[derive(Serialize)]
struct RetrieveLine {
    query_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    result: Option<RetrievalResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn retrieve(a: RetrieveArgs) -> Result<ExitCode> {
    let store = load_store(&a.store)?;
    let queries = load_store(&a.queries)?;
    let qs: Vec<Vec<f32>> = (0..queries.count()).map(|i| queries.row(i).to_vec()).collect();
    let results: Vec<Result<RetrievalResult, RetrievalError>> = match (a.mode, a.composite_order) {
        (ModeArg::Report, _) => batch_retrieve(&qs, &store, RetrievalMode::Report, 1),
        (ModeArg::Sentences, OrderArg::Score) => {
            batch_retrieve(&qs, &store, RetrievalMode::Sentences, a.k)
        }
        (ModeArg::Sentences, OrderArg::Corpus) => qs
            .iter()
            .map(|q| retrieve_sentences_ordered(q, &store, a.k, CompositeOrder::Corpus))
            .collect(),
    };
    let mut errors = 0;
    let lines: Vec<RetrieveLine> = results
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let query_id = queries.id(i).to_string();
            match r {
                Ok(result) => RetrieveLine {
                    query_id,
                    result: Some(result),
                    error: None,
                },
                Err(e) => {
                    errors += 1;
                    RetrieveLine {
                        query_id,
                        result: None,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();
    write_lines(&a.output, lines)?;
    if errors > 0 {
        eprintln!("{errors} queries failed");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn pair(paths: &Option<Vec<std::path::PathBuf>>) -> Option<(&Path, &Path)> {
    paths.as_ref().map(|v| (v[0].as_path(), v[1].as_path()))
}

fn metrics(a: MetricsArgs) -> Result<()> {
    let pred = read_reports(&a.pred)?;
    let truth = read_reports(&a.truth)?;
    let ids: Vec<&str> = pred.iter().map(|r| r.id.as_str()).collect();
    let mut sidecars = Sidecars::default();
    if let Some((p, t)) = pair(&a.semb_store) {
        sidecars.report_vectors = Some((load_store(p)?, load_store(t)?));
    }
    if let Some(dir) = &a.token_emb_dir {
        sidecars.token_embeddings = Some((
            read_token_dir(&dir.join("pred"), &ids)?,
            read_token_dir(&dir.join("truth"), &ids)?,
        ));
    }
    if let Some((p, t)) = pair(&a.entities) {
        sidecars.entities = Some((read_entities(p)?, read_entities(t)?));
    }
    let report = evaluate_run(&pred, &truth, &sidecars)?;
    write_json(&a.output, &report)?;
    let show = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
    println!(
        "pairs {}  bertscore {}  s_emb {}  entity_f1 {}",
        report.mean.pairs,
        show(report.mean.bertscore),
        show(report.mean.s_emb),
        show(report.mean.entity_f1)
    );
    Ok(())
}
