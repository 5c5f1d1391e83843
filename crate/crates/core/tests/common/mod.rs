//! Independent oracles, synthetic corpus generators and a scripted remote
//! reader shared by the integration tests.
#![allow(dead_code)]

use std::collections::{HashMap, HashSet};
use std::sync::{Arc, Mutex};

use asksport::corpus::Document;
use asksport::reader::{ReadRequest, ReadResponse, WireSpan};
use asksport::textproc::{normalize_answer, QUESTION_STOPWORDS};
use axum::http::StatusCode;
use axum::response::IntoResponse;
use axum::routing::post;
use axum::{Json, Router};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;
pub type TestRng = ChaCha8Rng;

pub fn rng(seed: u64) -> TestRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn doc(id: &str, title: &str, url: &str, body: &str) -> Document {
    Document {
        doc_id: id.into(),
        title: title.into(),
        url: url.into(),
        body: body.into(),
        source_tag: "basketball".into(),
    }
}

pub fn three_doc_corpus() -> Vec<Document> {
    vec![
        doc("d1", "Warriors win", "https://example.org/d1", "warriors win title"),
        doc(
            "d2",
            "Warriors titles",
            "https://example.org/d2",
            "warriors warriors titles",
        ),
        doc("d3", "Basketball", "https://example.org/d3", "basketball game"),
    ]
}

// ---------------------------------------------------------------------------
// Oracles
// ---------------------------------------------------------------------------

/// (char_start, char_end, byte_start, byte_end, lowercase text), written
/// without the library tokenizer.
pub type OracleToken = (usize, usize, usize, usize, String);

pub fn oracle_tokens(text: &str) -> Vec<OracleToken> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].1.is_alphanumeric() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && chars[i].1.is_alphanumeric() {
            i += 1;
        }
        let b0 = chars[start].0;
        let b1 = if i < chars.len() { chars[i].0 } else { text.len() };
        out.push((start, i, b0, b1, text[b0..b1].to_lowercase()));
    }
    out
}

pub fn oracle_content_terms(question: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for (.., t) in oracle_tokens(question) {
        if !QUESTION_STOPWORDS.contains(&t.as_str()) && !out.contains(&t) {
            out.push(t);
        }
    }
    out
}

fn oracle_idf(df: f64, n: f64) -> f64 {
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

/// Scores every document by direct evaluation of the BM25 sum and sorts by
/// (score desc, doc_id asc), keeping positive scores only.
pub fn bm25_oracle(docs: &[Document], k1: f64, b: f64, question: &str, k: usize) -> Vec<(String, f64)> {
    let terms = oracle_content_terms(question);
    let tokenized: Vec<Vec<String>> = docs
        .iter()
        .map(|d| oracle_tokens(&d.body).into_iter().map(|t| t.4).collect())
        .collect();
    let n = docs.len() as f64;
    let avgdl = tokenized.iter().map(|t| t.len()).sum::<usize>() as f64 / n;
    let mut scored: Vec<(String, f64)> = docs
        .iter()
        .zip(&tokenized)
        .map(|(d, toks)| {
            let dl = toks.len() as f64;
            let mut score = 0.0;
            for term in &terms {
                let tf = toks.iter().filter(|t| *t == term).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let df = tokenized.iter().filter(|ts| ts.contains(term)).count() as f64;
                score += oracle_idf(df, n) * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl));
            }
            (d.doc_id.clone(), score)
        })
        .filter(|(_, s)| *s > 0.0)
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

/// IDF of every term in a corpus by brute-force counting.
pub fn oracle_idf_table(docs: &[Document]) -> HashMap<String, f64> {
    let n = docs.len() as f64;
    let sets: Vec<HashSet<String>> = docs
        .iter()
        .map(|d| oracle_tokens(&d.body).into_iter().map(|t| t.4).collect())
        .collect();
    let mut df: HashMap<String, usize> = HashMap::new();
    for s in &sets {
        for t in s {
            *df.entry(t.clone()).or_default() += 1;
        }
    }
    df.into_iter().map(|(t, c)| (t, oracle_idf(c as f64, n))).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSpan {
    pub text: String,
    pub char_start: usize,
    pub char_end: usize,
    pub confidence: f64,
}

pub struct OracleReaderParams {
    pub max_span_tokens: usize,
    pub window_radius: usize,
    pub overlap_penalty: f64,
    pub length_penalty: f64,
    pub spans_per_doc: usize,
    pub min_confidence: f64,
}

impl Default for OracleReaderParams {
    fn default() -> Self {
        Self {
            max_span_tokens: 8,
            window_radius: 30,
            overlap_penalty: 1.0,
            length_penalty: 0.01,
            spans_per_doc: 3,
            min_confidence: 0.0,
        }
    }
}

/// Enumerates every span and evaluates the baseline scoring directly by
/// scanning the window for each question term.
pub fn reader_oracle(
    question: &str,
    body: &str,
    weight: &dyn Fn(&str) -> f64,
    p: &OracleReaderParams,
) -> Vec<OracleSpan> {
    let query = oracle_content_terms(question);
    let total: f64 = query.iter().map(|t| weight(t)).sum();
    if query.is_empty() || total <= 0.0 {
        return Vec::new();
    }
    let toks = oracle_tokens(body);
    let n = toks.len();
    let is_stop = |i: usize| QUESTION_STOPWORDS.contains(&toks[i].4.as_str());
    let mut all = Vec::new();
    for i in 0..n {
        for j in i..n {
            let len = j - i + 1;
            if len > p.max_span_tokens || is_stop(i) || is_stop(j) {
                continue;
            }
            let lo = i.saturating_sub(p.window_radius);
            let hi = (j + p.window_radius).min(n - 1);
            let mut cov = 0.0;
            let mut ov = 0.0;
            for q in &query {
                if (lo..=hi).any(|x| toks[x].4 == *q) {
                    cov += weight(q);
                }
                if (i..=j).any(|x| toks[x].4 == *q) {
                    ov += weight(q);
                }
            }
            let raw = (cov - p.overlap_penalty * ov) / total - p.length_penalty * (len - 1) as f64;
            let conf = raw.clamp(0.0, 1.0);
            if conf > p.min_confidence {
                all.push((conf, i, j));
            }
        }
    }
    all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (conf, i, j) in all {
        let text = &body[toks[i].2..toks[j].3];
        if seen.insert(normalize_answer(text)) {
            out.push(OracleSpan {
                text: text.to_string(),
                char_start: toks[i].0,
                char_end: toks[j].1,
                confidence: conf,
            });
        }
        if out.len() == p.spans_per_doc {
            break;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

const SYLLABLES: [&str; 16] = [
    "ka", "lo", "mi", "ne", "ru", "ta", "vo", "zi", "be", "do", "fu", "ga", "pi", "so", "we", "xa",
];

pub fn pseudo_word(rng: &mut TestRng, syllables: usize) -> String {
    (0..syllables).map(|_| *SYLLABLES.choose(rng).unwrap()).collect()
}

pub fn vocabulary(rng: &mut TestRng, size: usize) -> Vec<String> {
    let mut set = HashSet::new();
    let mut out = Vec::new();
    while out.len() < size {
        let w = pseudo_word(rng, 2);
        if set.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

/// Random corpus of `n_docs` documents with 1..=max_tokens tokens drawn from
/// `vocab` (plus a few stopwords and punctuation). Doc ids are unique and
/// emitted in shuffled order.
pub fn random_corpus(rng: &mut TestRng, vocab: &[String], n_docs: usize, max_tokens: usize) -> Vec<Document> {
    let mut ids: Vec<usize> = (0..n_docs).collect();
    ids.shuffle(rng);
    ids.into_iter()
        .map(|i| {
            let len = rng.gen_range(1..=max_tokens);
            let body = random_text(rng, vocab, len);
            doc(
                &format!("g/{i:04}"),
                &format!("Doc {i}"),
                &format!("https://example.org/{i}"),
                &body,
            )
        })
        .collect()
}

pub fn random_text(rng: &mut TestRng, vocab: &[String], len: usize) -> String {
    let mut words = Vec::with_capacity(len);
    for _ in 0..len {
        let w = if rng.gen_bool(0.15) {
            QUESTION_STOPWORDS.choose(rng).unwrap().to_string()
        } else {
            vocab.choose(rng).unwrap().clone()
        };
        let w = if rng.gen_bool(0.1) { w.to_uppercase() } else { w };
        words.push(w);
    }
    let mut text = String::new();
    for (i, w) in words.iter().enumerate() {
        if i > 0 {
            text.push_str(match rng.gen_range(0..10) {
                0 => ", ",
                1 => " - ",
                2 => ".  ",
                _ => " ",
            });
        }
        text.push_str(w);
    }
    text
}

/// Question built from 1..=4 vocabulary words, a stopword, and sometimes a
/// word outside the vocabulary.
pub fn random_question(rng: &mut TestRng, vocab: &[String]) -> String {
    let mut parts = vec!["how".to_string(), "many".to_string()];
    for _ in 0..rng.gen_range(1..=4) {
        parts.push(vocab.choose(rng).unwrap().clone());
        if rng.gen_bool(0.3) {
            parts.push(QUESTION_STOPWORDS.choose(rng).unwrap().to_string());
        }
    }
    if rng.gen_bool(0.2) {
        parts.push("qqzzyx".into());
    }
    format!("{}?", parts.join(" "))
}

/// One corpus with a planted answer: the answer token sits exactly
/// `radius` tokens after the first question term and before the second,
/// so it is the only token whose window holds all three terms.
pub struct PlantedCase {
    pub corpus: Vec<Document>,
    pub question: String,
    pub answer: String,
    pub answer_doc: String,
}

pub fn planted_case(rng: &mut TestRng, radius: usize, n_distractors: usize) -> PlantedCase {
    let filler = vocabulary(rng, 120);
    let terms: Vec<String> = (0..3).map(|_| pseudo_word(rng, 3)).collect();
    let answer = format!("{}{}", pseudo_word(rng, 2), rng.gen_range(10..99));
    let question = format!("What is the {} of {} {}?", terms[0], terms[1], terms[2]);

    let len = 2 * radius + 40;
    let p = rng.gen_range(radius..len - radius - 1);
    let mut words: Vec<String> = (0..len).map(|_| filler.choose(rng).unwrap().clone()).collect();
    words[p - radius] = terms[0].clone();
    words[p + radius] = terms[1].clone();
    let mut off = rng.gen_range(1..radius);
    if rng.gen_bool(0.5) {
        off = radius - off;
        words[p - off] = terms[2].clone();
    } else {
        words[p + off] = terms[2].clone();
    }
    words[p] = answer.clone();
    let mut corpus = vec![doc(
        "p/0000",
        "Planted",
        "https://example.org/planted",
        &words.join(" "),
    )];

    for d in 0..n_distractors {
        // terms spread further apart than any span window can reach
        let gap = 2 * radius + 10;
        let len = 3 * gap;
        let mut words: Vec<String> = (0..len).map(|_| filler.choose(rng).unwrap().clone()).collect();
        for (slot, term) in terms.iter().enumerate() {
            if rng.gen_bool(0.6) {
                words[slot * gap + rng.gen_range(0..5)] = term.clone();
            }
        }
        corpus.push(doc(
            &format!("x/{d:04}"),
            &format!("Distractor {d}"),
            "",
            &words.join(" "),
        ));
    }
    corpus.shuffle(rng);
    PlantedCase {
        corpus,
        question,
        answer,
        answer_doc: "p/0000".into(),
    }
}

// ---------------------------------------------------------------------------
// Scripted remote reader
// ---------------------------------------------------------------------------

#[derive(Clone)]
pub enum StubBehavior {
    /// Return these (text, score) answers, located in the sent contexts.
    Answers(Vec<(String, f64)>),
    /// Return these spans verbatim.
    Raw(Vec<WireSpan>),
    Status(u16),
    Garbage,
}

pub struct StubReader {
    pub base_url: String,
    pub requests: Arc<Mutex<Vec<ReadRequest>>>,
    _server: tokio::task::JoinHandle<()>,
}

/// Finds `needle` in the first context containing it and returns its char
/// offsets.
pub fn locate(req: &ReadRequest, needle: &str) -> Option<WireSpan> {
    req.contexts.iter().find_map(|c| {
        let byte = c.text.find(needle)?;
        let start = c.text[..byte].chars().count();
        Some(WireSpan {
            doc_id: c.doc_id.clone(),
            text: needle.to_string(),
            char_start: start,
            char_end: start + needle.chars().count(),
            score: 0.0,
        })
    })
}

pub async fn spawn_stub_reader(behavior: StubBehavior) -> StubReader {
    let requests: Arc<Mutex<Vec<ReadRequest>>> = Arc::default();
    let log = requests.clone();
    let app = Router::new().route(
        "/read",
        post(move |Json(req): Json<ReadRequest>| {
            let behavior = behavior.clone();
            let log = log.clone();
            async move {
                log.lock().unwrap().push(req.clone());
                match behavior {
                    StubBehavior::Answers(answers) => {
                        let spans = answers
                            .iter()
                            .filter_map(|(text, score)| locate(&req, text).map(|s| WireSpan { score: *score, ..s }))
                            .collect();
                        Json(ReadResponse { spans }).into_response()
                    }
                    StubBehavior::Raw(spans) => Json(ReadResponse { spans }).into_response(),
                    StubBehavior::Status(code) => StatusCode::from_u16(code).unwrap().into_response(),
                    StubBehavior::Garbage => (StatusCode::OK, "{\"spans\": 42").into_response(),
                }
            }
        }),
    );
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let server = tokio::spawn(async move {
        axum::serve(listener, app).await.unwrap();
    });
    StubReader {
        base_url: format!("http://{addr}"),
        requests,
        _server: server,
    }
}

/// Small hand-written basketball corpus holding the rookie-of-the-year
/// answers used by the scripted reader.
pub fn scenario_corpus() -> Vec<Document> {
    vec![
        doc(
            "basketball/0000000",
            "1989 PBA season",
            "https://example.org/wiki/1989_PBA_season",
            "After a strong first season, Lastimosa was eventually called the rookie of the year by the league.",
        ),
        doc(
            "basketball/0000001",
            "LeBron James",
            "https://example.org/wiki/LeBron_James",
            "As a first-year player, James was named rookie of the year in 2004.",
        ),
        doc(
            "basketball/0000002",
            "Glenn Robinson",
            "https://example.org/wiki/Glenn_Robinson",
            "The top draft pick Glenn Robinson finished second in rookie of the year voting.",
        ),
        doc(
            "basketball/0000003",
            "Golden State Warriors",
            "https://example.org/wiki/Golden_State_Warriors",
            "The NBA Warriors have seven titles in total, three times in the last decade.",
        ),
        doc(
            "basketball/0000004",
            "Wilt Chamberlain",
            "https://example.org/wiki/Wilt_Chamberlain",
            "Wilton Norman Chamberlain is considered by many the best basketball player in history.",
        ),
    ]
}

/// Replaces the value of `"elapsed_ms"` in a JSON body with `0`.
pub fn strip_elapsed(body: &str) -> String {
    let key = "\"elapsed_ms\":";
    let Some(at) = body.find(key) else {
        return body.to_string();
    };
    let value_start = at + key.len();
    let rest = &body[value_start..];
    let value_len = rest.find([',', '}', '\n']).unwrap_or(rest.len());
    format!("{}0{}", &body[..value_start], &rest[value_len..])
}
