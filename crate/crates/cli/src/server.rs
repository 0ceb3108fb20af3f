//! Review API under `/api/v1`. The corpus is read-only; every decision is
//! appended to the session log and synced before the request is acknowledged.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use anyhow::{Context, Result};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use priorscrub::corpus::{read_reports, write_jsonl, ReportRecord};
use priorscrub::lexicon::HEADS;
use priorscrub::review::{apply_decisions, export_ground_truth, Decision, ExportSummary, ReviewSession};
use priorscrub::stats::{keyword_counts, CountMode};
use priorscrub::{Detector, Label, LabeledReport};

use crate::cli::ServeArgs;

/// One color per lexicon head, in head order.
pub const HEAD_COLORS: [&str; 18] = [
    "#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4", "#46f0f0", "#f032e6", "#bcf60c",
    "#fabebe", "#008080", "#e6beff", "#9a6324", "#fffac8", "#800000", "#aaffc3", "#808000",
    "#ffd8b1", "#000075",
];

pub fn head_color(head: &str) -> &'static str {
    HEADS
        .iter()
        .position(|h| *h == head)
        .map_or("#808080", |i| HEAD_COLORS[i])
}

pub struct AppState {
    records: Vec<ReportRecord>,
    index: HashMap<String, usize>,
    detector: Detector,
    cache: Mutex<HashMap<String, Arc<LabeledReport>>>,
    session: Mutex<ReviewSession>,
    export_path: PathBuf,
}

impl AppState {
    pub fn new(
        records: Vec<ReportRecord>,
        detector: Detector,
        session: ReviewSession,
        export_path: PathBuf,
    ) -> Self {
        let index = records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.id.clone(), i))
            .collect();
        AppState {
            records,
            index,
            detector,
            cache: Mutex::new(HashMap::new()),
            session: Mutex::new(session),
            export_path,
        }
    }

    /// Detection for one report, computed on first use.
    fn labeled(&self, id: &str) -> Option<Arc<LabeledReport>> {
        if let Some(l) = self.cache.lock().unwrap().get(id) {
            return Some(l.clone());
        }
        let rec = &self.records[*self.index.get(id)?];
        let labeled = Arc::new(self.detector.detect(&rec.to_report()));
        self.cache
            .lock()
            .unwrap()
            .insert(id.to_string(), labeled.clone());
        Some(labeled)
    }
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

fn not_found(what: String) -> ApiError {
    ApiError(StatusCode::NOT_FOUND, what)
}

fn internal(e: impl std::fmt::Display) -> ApiError {
    ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
}

pub fn router(state: Arc<AppState>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/corpus", get(corpus))
        .route("/reports/{id}", get(report))
        .route("/reports/{id}/spans/{key}/decision", post(decide))
        .route("/export", post(export))
        .route("/stats", get(stats))
        .with_state(state);
    let app = Router::new().nest("/api/v1", api);
    match static_dir {
        Some(dir) => app.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => app,
    }
}

#[derive(Serialize)]
struct CorpusEntry {
    id: String,
    spans: usize,
    pending: usize,
}

async fn corpus(State(st): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let entries: Vec<(String, Arc<LabeledReport>)> = st
        .records
        .iter()
        .map(|r| (r.id.clone(), st.labeled(&r.id).expect("id is indexed")))
        .collect();
    let session = st.session.lock().unwrap();
    let reports: Vec<CorpusEntry> = entries
        .into_iter()
        .map(|(id, l)| CorpusEntry {
            spans: l.spans.len(),
            pending: l
                .spans
                .iter()
                .filter(|s| session.decision(&id, &s.key()) == Decision::Pending)
                .count(),
            id,
        })
        .collect();
    Json(json!({ "count": reports.len(), "reports": reports }))
}

#[derive(Serialize)]
struct TokenView<'a> {
    text: &'a str,
    kind: priorscrub::TokenKind,
    start: usize,
    end: usize,
    remove: bool,
}

#[derive(Serialize)]
struct SentenceView<'a> {
    index: usize,
    text: &'a str,
    tokens: Vec<TokenView<'a>>,
}

#[derive(Serialize)]
struct SpanView {
    key: String,
    sentence: usize,
    start: usize,
    end: usize,
    text: String,
    keyword: String,
    rule_id: String,
    color: &'static str,
    #[serde(flatten)]
    decision: Decision,
}

async fn report(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let labeled = st.labeled(&id).ok_or_else(|| not_found(format!("report {id}")))?;
    let offsets = labeled.report.sentence_offsets();
    let sentences: Vec<SentenceView> = labeled
        .report
        .sentences
        .iter()
        .enumerate()
        .map(|(si, s)| SentenceView {
            index: s.index,
            text: &s.text,
            tokens: s
                .tokens
                .iter()
                .enumerate()
                .map(|(ti, t)| TokenView {
                    text: &t.text,
                    kind: t.kind,
                    start: t.char_start,
                    end: t.char_end,
                    remove: labeled.labels[offsets[si] + ti] == Label::Remove,
                })
                .collect(),
        })
        .collect();
    let session = st.session.lock().unwrap();
    let spans: Vec<SpanView> = labeled
        .spans
        .iter()
        .map(|s| {
            let sentence = &labeled.report.sentences[s.sentence_index];
            let (a, b) = (
                sentence.tokens[s.token_start].char_start,
                sentence.tokens[s.token_end - 1].char_end,
            );
            SpanView {
                key: s.key(),
                sentence: s.sentence_index,
                start: s.token_start,
                end: s.token_end,
                text: sentence.text[a..b].to_string(),
                keyword: s.keyword.clone(),
                rule_id: s.rule_id.clone(),
                color: head_color(&s.keyword),
                decision: session.decision(&id, &s.key()),
            }
        })
        .collect();
    let mut summary = ExportSummary::default();
    let preview = apply_decisions(&labeled, |k| session.decision(&id, k), &mut summary);
    Ok(Json(json!({
        "id": id,
        "text": labeled.report.text,
        "sentences": sentences,
        "spans": spans,
        "preview": preview,
        "pending": summary.pending,
    })))
}

#[derive(Debug, Deserialize)]
struct DecisionBody {
    decision: String,
    replacement: Option<String>,
}

async fn decide(
    State(st): State<Arc<AppState>>,
    Path((id, key)): Path<(String, String)>,
    Json(body): Json<DecisionBody>,
) -> Result<StatusCode, ApiError> {
    let labeled = st.labeled(&id).ok_or_else(|| not_found(format!("report {id}")))?;
    if !labeled.spans.iter().any(|s| s.key() == key) {
        return Err(not_found(format!("span {key} in report {id}")));
    }
    let decision = match (body.decision.as_str(), body.replacement) {
        ("accept", _) => Decision::Accept,
        ("reject", _) => Decision::Reject,
        ("replace", Some(replacement)) => Decision::Replaced { replacement },
        ("replace", None) => {
            return Err(ApiError(
                StatusCode::UNPROCESSABLE_ENTITY,
                "replace needs a replacement".into(),
            ))
        }
        (other, _) => {
            return Err(ApiError(
                StatusCode::UNPROCESSABLE_ENTITY,
                format!("unknown decision `{other}`"),
            ))
        }
    };
    let state = st.clone();
    tokio::task::spawn_blocking(move || state.session.lock().unwrap().record(&id, &key, decision))
        .await
        .map_err(internal)?
        .map_err(internal)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn export(State(st): State<Arc<AppState>>) -> Result<Json<serde_json::Value>, ApiError> {
    let state = st.clone();
    let (records, summary) = tokio::task::spawn_blocking(move || {
        let session = state.session.lock().unwrap();
        let out = export_ground_truth(&state.records, &state.detector, &session);
        write_jsonl(&state.export_path, &out.0).map(|_| out)
    })
    .await
    .map_err(internal)?
    .map_err(internal)?;
    let corpus = std::fs::read_to_string(&st.export_path).map_err(internal)?;
    if summary.pending > 0 {
        log::warn!("export with {} pending spans", summary.pending);
    }
    Ok(Json(json!({
        "path": st.export_path.display().to_string(),
        "reports": records.len(),
        "pending": summary.pending,
        "summary": summary,
        "corpus": corpus,
    })))
}

async fn stats(State(st): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let state = st.clone();
    let table = tokio::task::spawn_blocking(move || {
        keyword_counts(&state.records, &state.detector, CountMode::Detector)
    })
    .await
    .expect("counting does not panic");
    Json(json!({
        "mode": CountMode::Detector,
        "reports_read": table.reports_read,
        "rows": table.rows(None),
    }))
}

/// Loads the corpus and session and builds the shared state.
pub fn state_from_args(args: &ServeArgs) -> Result<Arc<AppState>> {
    let records = read_reports(&args.corpus)?;
    let detector = crate::commands::detector(&args.lexicon)?;
    let session = ReviewSession::open(
        &args.session,
        &args.corpus.display().to_string(),
        &args.annotator,
    )?;
    let export_path = args.export.clone().unwrap_or_else(|| {
        let mut p = args.session.clone().into_os_string();
        p.push(".export.jsonl");
        PathBuf::from(p)
    });
    Ok(Arc::new(AppState::new(records, detector, session, export_path)))
}

pub fn serve_blocking(args: ServeArgs) -> Result<()> {
    let state = state_from_args(&args)?;
    let app = router(state, args.static_dir.clone());
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(args.bind)
            .await
            .with_context(|| format!("binding {}", args.bind))?;
        eprintln!("serving on http://{}", listener.local_addr()?);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
