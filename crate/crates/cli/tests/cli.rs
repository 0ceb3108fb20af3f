use std::path::Path;
use std::process::Command;

use priorscrub::corpus::{read_reports, write_jsonl, ReportRecord};
use priorscrub::retrieval::{save_store, EmbeddingStore};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_priorscrub"))
}

fn run_ok(args: &[&str]) -> String {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn help_lists_all_subcommands() {
    let help = run_ok(&["--help"]);
    for cmd in [
        "scrub", "detect", "rewrite", "score-f1", "stats", "retrieve", "metrics", "split", "serve",
    ] {
        assert!(
            help.lines().any(|l| l.trim_start().starts_with(cmd)),
            "missing {cmd} in\n{help}"
        );
    }
}

fn corpus(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("in.jsonl");
    write_jsonl(
        &path,
        &[
            ReportRecord::new("a", "Comparison made to prior study from ___."),
            ReportRecord::new("b", "Heart size is stable. Lungs are clear."),
            ReportRecord::new("c", "Degenerative changes of the spine."),
        ],
    )
    .unwrap();
    path
}

#[test]
fn scrub_detect_rewrite_and_score() {
    let dir = tempfile::tempdir().unwrap();
    let input = corpus(dir.path());
    let (scrubbed, stats) = (dir.path().join("out.jsonl"), dir.path().join("stats.json"));
    run_ok(&["scrub", "--input", p(&input), "--output", p(&scrubbed), "--stats", p(&stats)]);
    let out = read_reports(&scrubbed).unwrap();
    assert_eq!(out.len(), 3);
    assert_eq!(out[0].text, "");
    assert_eq!(out[1].text, "Heart size. Lungs are clear.");
    assert_eq!(out[2].text, "Degenerative changes of the spine.");
    let stats: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&stats).unwrap()).unwrap();
    assert_eq!(stats["reports_in"], 3);
    assert_eq!(stats["reports_out"], 3);

    let labels = dir.path().join("labels.jsonl");
    run_ok(&["detect", "--input", p(&input), "--output", p(&labels)]);
    let first: serde_json::Value =
        serde_json::from_str(std::fs::read_to_string(&labels).unwrap().lines().next().unwrap()).unwrap();
    let row: Vec<u64> = first["labels"][0].as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).collect();
    assert_eq!(row, [1, 1, 1, 1, 1, 1, 1, 0]);
    assert_eq!(first["spans"][0]["keyword"], "prior");

    let rewritten = dir.path().join("rw.jsonl");
    run_ok(&["rewrite", "--input", p(&input), "--output", p(&rewritten), "--mock"]);
    assert_eq!(read_reports(&rewritten).unwrap(), out);

    let report = dir.path().join("f1.json");
    let stdout = run_ok(&[
        "score-f1",
        "--original", p(&input),
        "--modified", p(&rewritten),
        "--ground-truth", p(&scrubbed),
        "--report", p(&report),
    ]);
    let v: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(v["micro"]["f1"], 1.0);
    assert_eq!(v["macro"]["f1"], 1.0);
}

#[test]
fn scrub_exit_status_reflects_skipped_lines() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.jsonl");
    std::fs::write(&input, "{\"id\":\"a\",\"text\":\"Stable.\"}\nnot json\n").unwrap();
    let out = bin()
        .args(["scrub", "--input", p(&input), "--output", p(&dir.path().join("o.jsonl"))])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stats_and_split() {
    let dir = tempfile::tempdir().unwrap();
    let input = corpus(dir.path());
    let table = run_ok(&["stats", "count", "--input", p(&input)]);
    assert!(table.lines().nth(1).unwrap().starts_with("Total"));
    let raw = dir.path().join("raw.json");
    run_ok(&["stats", "count", "--input", p(&input), "--raw", "--json", p(&raw)]);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&raw).unwrap()).unwrap();
    assert_eq!(v["rows"][0]["instance_count"], 3);

    let scrubbed = dir.path().join("out.jsonl");
    run_ok(&["scrub", "--input", p(&input), "--output", p(&scrubbed)]);
    let diff = run_ok(&["stats", "diff", "--before", p(&input), "--after", p(&scrubbed)]);
    assert!(diff.contains("reduction: 1.0000"));

    let (train, test) = (dir.path().join("train.jsonl"), dir.path().join("test.jsonl"));
    for cmd in [vec!["split"], vec!["stats", "split"]] {
        let mut args = cmd.clone();
        args.extend(["--input", p(&input), "--train", p(&train), "--test", p(&test), "--seed", "4"]);
        run_ok(&args);
        assert_eq!(read_reports(&train).unwrap().len() + read_reports(&test).unwrap().len(), 3);
    }
}

#[test]
fn retrieve_then_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let store = EmbeddingStore::new(
        2,
        vec![1.0, 0.0, 0.0, 1.0, 0.6, 0.8],
        vec!["s0".into(), "s1".into(), "s2".into()],
        vec!["Lungs clear.".into(), "No effusion.".into(), "Heart normal.".into()],
        true,
    )
    .unwrap();
    let queries = EmbeddingStore::new(2, vec![0.0, 1.0], vec!["q".into()], vec![String::new()], false).unwrap();
    let (sp, qp) = (dir.path().join("s.embs"), dir.path().join("q.embs"));
    save_store(&store, &sp).unwrap();
    save_store(&queries, &qp).unwrap();
    let out = dir.path().join("r.jsonl");
    run_ok(&["retrieve", "--store", p(&sp), "--queries", p(&qp), "--mode", "sentences", "--k", "2", "--output", p(&out)]);
    let line: serde_json::Value = serde_json::from_str(std::fs::read_to_string(&out).unwrap().trim()).unwrap();
    assert_eq!(line["query_id"], "q");
    assert_eq!(line["result"]["composite_text"], "No effusion. Heart normal.");

    let pred = dir.path().join("pred.jsonl");
    write_jsonl(&pred, &[ReportRecord::new("q", "No effusion. Heart normal.")]).unwrap();
    let ents = dir.path().join("e.jsonl");
    std::fs::write(&ents, "{\"id\":\"q\",\"entities\":[{\"surface\":\"effusion\",\"label\":\"OBS\"}]}\n").unwrap();
    let m = dir.path().join("m.json");
    run_ok(&["metrics", "--pred", p(&pred), "--truth", p(&pred), "--entities", p(&ents), p(&ents), "--output", p(&m)]);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&m).unwrap()).unwrap();
    assert_eq!(v["mean"]["entity_f1"], 1.0);
    assert!(v["rows"][0]["s_emb"].is_null());
}
