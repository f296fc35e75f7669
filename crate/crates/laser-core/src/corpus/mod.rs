//! Dataset ingestion: line corpora, retrieval collections, STS pair files,
//! sentence segmentation, and anchor selection.

pub mod synthetic;

use crate::error::{Error, Result};
use crate::util::stable_seed;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::collections::HashSet;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

/// A raw text unit. `text` is non-empty after trimming; `id` is unique
/// within a loaded collection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title: Option<String>,
    pub text: String,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self> {
        let id = id.into();
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::EmptyInput(format!("document {id} has empty text")));
        }
        Ok(Document {
            id,
            title: None,
            text,
        })
    }

    pub fn with_title(mut self, title: impl Into<String>) -> Self {
        let title = title.into();
        self.title = if title.is_empty() { None } else { Some(title) };
        self
    }

    /// Text used for embedding: `"title. text"` when a title exists and
    /// titles are enabled, plain text otherwise.
    pub fn embedding_text(&self, use_title: bool) -> String {
        match (&self.title, use_title) {
            (Some(title), true) => format!("{title}. {}", self.text),
            _ => self.text.clone(),
        }
    }
}

/// Byte spans (aligned to char boundaries) of the sentences in a text.
/// Spans are ordered, non-overlapping, and cover every non-separator
/// character; separators are the whitespace runs between sentences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceSplit {
    pub spans: Vec<(usize, usize)>,
}

impl SentenceSplit {
    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn sentences<'a>(&self, text: &'a str) -> Vec<&'a str> {
        self.spans.iter().map(|&(s, e)| &text[s..e]).collect()
    }
}

/// How the anchor sentence of a document is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorStrategy {
    First,
    Random,
}

impl std::str::FromStr for AnchorStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first" => Ok(AnchorStrategy::First),
            "random" => Ok(AnchorStrategy::Random),
            other => Err(Error::InvalidArgument(format!(
                "unknown anchor strategy {other:?} (expected first|random)"
            ))),
        }
    }
}

/// One sentence of a document chosen as the anchor, plus the remaining
/// sentences joined in original order. Anchor and remainder partition the
/// document's sentence spans.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorSelection {
    pub anchor_text: String,
    pub remainder_text: String,
    pub strategy: AnchorStrategy,
    pub seed: u64,
}

/// Relevance judgments: query id -> (document id -> grade >= 0).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QRels {
    pub judgments: BTreeMap<String, BTreeMap<String, u32>>,
}

impl QRels {
    pub fn insert(&mut self, query_id: impl Into<String>, doc_id: impl Into<String>, grade: u32) {
        self.judgments
            .entry(query_id.into())
            .or_default()
            .insert(doc_id.into(), grade);
    }

    pub fn grades(&self, query_id: &str) -> Option<&BTreeMap<String, u32>> {
        self.judgments.get(query_id)
    }

    pub fn n_queries(&self) -> usize {
        self.judgments.len()
    }

    pub fn n_judgments(&self) -> usize {
        self.judgments.values().map(|m| m.len()).sum()
    }

    /// Drop queries whose grades are all zero, returning how many were
    /// removed. Keeps the "at least one positive grade per retained query"
    /// invariant.
    pub fn prune_unjudged(&mut self) -> usize {
        let before = self.judgments.len();
        self.judgments
            .retain(|_, grades| grades.values().any(|&g| g > 0));
        before - self.judgments.len()
    }
}

/// A parsed retrieval collection (corpus + queries + qrels).
#[derive(Debug, Clone)]
pub struct RetrievalCollection {
    pub corpus: Vec<Document>,
    pub queries: Vec<Document>,
    pub qrels: QRels,
}

// ---------------------------------------------------------------------------
// Line corpora
// ---------------------------------------------------------------------------

/// Iterate a UTF-8 line corpus without materializing it: one document per
/// non-blank line, ids are zero-based line indices rendered as strings.
pub fn line_corpus_iter(
    path: &Path,
) -> Result<impl Iterator<Item = Result<Document>> + Send + 'static> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let path: PathBuf = path.to_path_buf();
    Ok(LineCorpusIter {
        reader,
        path,
        line_index: 0,
        byte_offset: 0,
        done: false,
    })
}

struct LineCorpusIter {
    reader: BufReader<std::fs::File>,
    path: PathBuf,
    line_index: usize,
    byte_offset: u64,
    done: bool,
}

impl Iterator for LineCorpusIter {
    type Item = Result<Document>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        loop {
            let mut raw = Vec::new();
            let n = match self.reader.read_until(b'\n', &mut raw) {
                Ok(n) => n,
                Err(e) => {
                    self.done = true;
                    return Some(Err(Error::io(&self.path, e)));
                }
            };
            if n == 0 {
                self.done = true;
                return None;
            }
            let line_start = self.byte_offset;
            self.byte_offset += n as u64;
            let index = self.line_index;
            self.line_index += 1;

            if raw.last() == Some(&b'\n') {
                raw.pop();
            }
            if raw.last() == Some(&b'\r') {
                raw.pop();
            }
            let text = match String::from_utf8(raw) {
                Ok(t) => t,
                Err(e) => {
                    self.done = true;
                    let offset = line_start + e.utf8_error().valid_up_to() as u64;
                    return Some(Err(Error::InvalidUtf8 {
                        path: self.path.clone(),
                        offset,
                    }));
                }
            };
            if text.trim().is_empty() {
                continue;
            }
            return Some(Ok(Document {
                id: index.to_string(),
                title: None,
                text,
            }));
        }
    }
}

/// Load a full line corpus into memory. Blank lines are skipped; their line
/// indices are not reused.
pub fn load_line_corpus(path: &Path) -> Result<Vec<Document>> {
    line_corpus_iter(path)?.collect()
}

// ---------------------------------------------------------------------------
// Retrieval collections (JSON-lines corpus/queries + TSV qrels)
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
struct CorpusLine {
    _id: serde_json::Value,
    #[serde(default)]
    title: Option<String>,
    text: String,
}

#[derive(Deserialize)]
struct QueryLine {
    _id: serde_json::Value,
    text: String,
}

fn id_string(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Load a retrieval collection from a directory holding `corpus.jsonl`,
/// `queries.jsonl`, and a qrels table at `qrels.tsv` or `qrels/test.tsv`
/// (header row, then `query-id <tab> corpus-id <tab> score`).
///
/// Qrels rows whose ids are absent from the corpus or queries are dropped
/// with a logged count, as are queries left without a positive grade.
pub fn load_retrieval_collection(dir: &Path) -> Result<RetrievalCollection> {
    let corpus = load_jsonl_corpus(&dir.join("corpus.jsonl"))?;
    let queries = load_jsonl_queries(&dir.join("queries.jsonl"))?;

    let qrels_path = ["qrels.tsv", "qrels/test.tsv"]
        .iter()
        .map(|p| dir.join(p))
        .find(|p| p.exists())
        .ok_or_else(|| {
            Error::InvalidArgument(format!(
                "no qrels table found under {} (expected qrels.tsv or qrels/test.tsv)",
                dir.display()
            ))
        })?;

    let corpus_ids: HashSet<&str> = corpus.iter().map(|d| d.id.as_str()).collect();
    let query_ids: HashSet<&str> = queries.iter().map(|d| d.id.as_str()).collect();

    let mut qrels = QRels::default();
    let mut dropped = 0usize;
    let file = std::fs::File::open(&qrels_path).map_err(|e| Error::io(&qrels_path, e))?;
    for (line_no, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&qrels_path, e))?;
        if line_no == 0 || line.trim().is_empty() {
            continue; // header row
        }
        let mut fields = line.split('\t');
        let (qid, did, score) = match (fields.next(), fields.next(), fields.next()) {
            (Some(q), Some(d), Some(s)) => (q.trim(), d.trim(), s.trim()),
            _ => {
                return Err(Error::parse(
                    &qrels_path,
                    line_no + 1,
                    "expected 3 tab-separated fields",
                ))
            }
        };
        let grade: u32 = score.parse().map_err(|_| {
            Error::parse(
                &qrels_path,
                line_no + 1,
                format!("non-integer relevance score {score:?}"),
            )
        })?;
        if !corpus_ids.contains(did) || !query_ids.contains(qid) {
            dropped += 1;
            continue;
        }
        qrels.insert(qid, did, grade);
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} qrels entries with ids absent from corpus/queries");
    }
    let unjudged = qrels.prune_unjudged();
    if unjudged > 0 {
        log::warn!("dropped {unjudged} queries without a positive relevance grade");
    }

    Ok(RetrievalCollection {
        corpus,
        queries,
        qrels,
    })
}

fn load_jsonl_corpus(path: &Path) -> Result<Vec<Document>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (line_no, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: CorpusLine = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, line_no + 1, format!("malformed JSON: {e}")))?;
        let id = id_string(&parsed._id);
        if !seen.insert(id.clone()) {
            return Err(Error::parse(
                path,
                line_no + 1,
                format!("duplicate document id {id:?}"),
            ));
        }
        let mut doc = Document::new(id, parsed.text)
            .map_err(|e| Error::parse(path, line_no + 1, e.to_string()))?;
        if let Some(title) = parsed.title {
            doc = doc.with_title(title);
        }
        docs.push(doc);
    }
    Ok(docs)
}

fn load_jsonl_queries(path: &Path) -> Result<Vec<Document>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (line_no, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: QueryLine = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, line_no + 1, format!("malformed JSON: {e}")))?;
        let id = id_string(&parsed._id);
        if !seen.insert(id.clone()) {
            return Err(Error::parse(
                path,
                line_no + 1,
                format!("duplicate query id {id:?}"),
            ));
        }
        docs.push(
            Document::new(id, parsed.text)
                .map_err(|e| Error::parse(path, line_no + 1, e.to_string()))?,
        );
    }
    Ok(docs)
}

// ---------------------------------------------------------------------------
// STS pair files
// ---------------------------------------------------------------------------

/// A sentence pair with a gold similarity score in [0, 5].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StsPair {
    pub sentence1: String,
    pub sentence2: String,
    pub score: f64,
}

/// Load a tab-separated STS pair file with columns
/// `sentence1 <tab> sentence2 <tab> score`. A first line whose third column
/// does not parse as a number is treated as a header.
pub fn load_sts_pairs(path: &Path) -> Result<Vec<StsPair>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (line_no, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                path,
                line_no + 1,
                format!("expected 3 tab-separated fields, got {}", fields.len()),
            ));
        }
        let score: f64 = match fields[2].trim().parse() {
            Ok(s) => s,
            Err(_) if line_no == 0 => continue, // header
            Err(_) => {
                return Err(Error::parse(
                    path,
                    line_no + 1,
                    format!("non-numeric score {:?}", fields[2]),
                ))
            }
        };
        if !(0.0..=5.0).contains(&score) {
            return Err(Error::parse(
                path,
                line_no + 1,
                format!("score {score} outside [0, 5]"),
            ));
        }
        pairs.push(StsPair {
            sentence1: fields[0].to_string(),
            sentence2: fields[1].to_string(),
            score,
        });
    }
    Ok(pairs)
}

// ---------------------------------------------------------------------------
// Sentence splitting
// ---------------------------------------------------------------------------

/// Fixed, versioned abbreviation guard list: a period directly after one of
/// these words never ends a sentence. Bump the name if the list changes so
/// run manifests stay meaningful.
pub const ABBREVIATIONS_V1: &[&str] = &[
    "dr", "mr", "mrs", "ms", "prof", "sr", "jr", "st", "vs", "etc", "fig", "eq", "al", "inc",
    "ltd", "dept", "univ", "approx", "resp",
];

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

/// Deterministic rule-based sentence splitter: splits after a run of
/// terminal punctuation (`.`, `!`, `?`) followed by whitespace and an
/// uppercase letter or digit, with [`ABBREVIATIONS_V1`] guarding periods.
/// Text without terminal punctuation yields one span.
pub fn split_sentences(text: &str) -> SentenceSplit {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let n = chars.len();
    let mut spans = Vec::new();

    // First non-whitespace character starts the first span.
    let mut start = match chars.iter().find(|(_, c)| !c.is_whitespace()) {
        Some(&(i, _)) => i,
        None => return SentenceSplit { spans },
    };

    let mut i = 0;
    while i < n {
        let (_, c) = chars[i];
        if !is_terminal(c) {
            i += 1;
            continue;
        }
        // Extend over the whole terminal run.
        let run_start = i;
        let mut run_end = i;
        while run_end + 1 < n && is_terminal(chars[run_end + 1].1) {
            run_end += 1;
        }

        // Abbreviation guard applies to a lone period only.
        let lone_period = run_start == run_end && chars[run_start].1 == '.';
        if lone_period && preceding_word_is_abbreviation(&chars, run_start) {
            i = run_end + 1;
            continue;
        }

        // Boundary requires whitespace then uppercase/digit.
        let mut j = run_end + 1;
        let mut saw_ws = false;
        while j < n && chars[j].1.is_whitespace() {
            saw_ws = true;
            j += 1;
        }
        let next_starts_sentence =
            j < n && saw_ws && (chars[j].1.is_uppercase() || chars[j].1.is_ascii_digit());
        if next_starts_sentence {
            let end = chars[run_end].0 + chars[run_end].1.len_utf8();
            spans.push((start, end));
            start = chars[j].0;
            i = j;
        } else {
            i = run_end + 1;
        }
    }

    // Close the final span at the last non-whitespace character.
    if let Some(&(idx, c)) = chars.iter().rev().find(|(_, c)| !c.is_whitespace()) {
        let end = idx + c.len_utf8();
        if end > start {
            spans.push((start, end));
        }
    }

    SentenceSplit { spans }
}

fn preceding_word_is_abbreviation(chars: &[(usize, char)], period_idx: usize) -> bool {
    let mut word = String::new();
    let mut k = period_idx;
    while k > 0 {
        let c = chars[k - 1].1;
        if c.is_alphabetic() {
            word.push(c);
            k -= 1;
        } else {
            break;
        }
    }
    if word.is_empty() {
        return false;
    }
    let word: String = word.chars().rev().flat_map(|c| c.to_lowercase()).collect();
    ABBREVIATIONS_V1.contains(&word.as_str())
}

// ---------------------------------------------------------------------------
// Anchor selection
// ---------------------------------------------------------------------------

/// Pick the anchor sentence of a document. `First` takes span 0; `Random`
/// draws uniformly over spans from a generator seeded by `(seed, doc.id)`,
/// so the choice is a pure function of its inputs. The remainder is the
/// concatenation of all other sentences in original order, space-joined.
pub fn select_anchor(doc: &Document, strategy: AnchorStrategy, seed: u64) -> AnchorSelection {
    let split = split_sentences(&doc.text);
    let sentences = split.sentences(&doc.text);
    assert!(
        !sentences.is_empty(),
        "document {} has no sentences; Document invariants guarantee non-blank text",
        doc.id
    );
    let idx = match strategy {
        AnchorStrategy::First => 0,
        AnchorStrategy::Random => {
            let mut rng =
                ChaCha8Rng::seed_from_u64(stable_seed(seed, &[b"anchor", doc.id.as_bytes()]));
            rng.gen_range(0..sentences.len())
        }
    };
    let anchor_text = sentences[idx].to_string();
    let remainder_text = sentences
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != idx)
        .map(|(_, s)| *s)
        .collect::<Vec<_>>()
        .join(" ");
    AnchorSelection {
        anchor_text,
        remainder_text,
        strategy,
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &[u8]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn line_corpus_skips_blank_lines_and_keeps_indices() {
        let f = write_temp(b"a b\n\nc\n");
        let docs = load_line_corpus(f.path()).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].id, "0");
        assert_eq!(docs[0].text, "a b");
        assert_eq!(docs[1].id, "2");
        assert_eq!(docs[1].text, "c");
    }

    #[test]
    fn line_corpus_empty_file_is_empty() {
        let f = write_temp(b"");
        assert!(load_line_corpus(f.path()).unwrap().is_empty());
    }

    #[test]
    fn line_corpus_missing_file_is_fatal() {
        let err = load_line_corpus(Path::new("/nonexistent/corpus.txt")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn line_corpus_reports_utf8_byte_offset() {
        let f = write_temp(b"ok\nbad\xff\xfeline\n");
        let err = load_line_corpus(f.path()).unwrap_err();
        match err {
            Error::InvalidUtf8 { offset, .. } => assert_eq!(offset, 6), // "ok\n" + "bad"
            other => panic!("expected InvalidUtf8, got {other:?}"),
        }
    }

    #[test]
    fn split_two_questions() {
        let s = split_sentences("What is NLP? It is fun.");
        assert_eq!(s.len(), 2);
        assert_eq!(
            s.sentences("What is NLP? It is fun."),
            vec!["What is NLP?", "It is fun."]
        );
    }

    #[test]
    fn split_without_punctuation_is_one_span() {
        let s = split_sentences("no punctuation here");
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn abbreviation_guard_suppresses_split() {
        let text = "Dr. Smith arrived. He left.";
        let s = split_sentences(text);
        assert_eq!(s.len(), 2);
        assert_eq!(
            s.sentences(text),
            vec!["Dr. Smith arrived.", "He left."]
        );
    }

    #[test]
    fn guard_list_oracle_every_entry_suppresses() {
        // Independent check: each guard word followed by a period must not
        // produce an extra boundary.
        for word in ABBREVIATIONS_V1 {
            let cap: String = {
                let mut cs = word.chars();
                let first = cs.next().unwrap().to_uppercase().to_string();
                format!("{first}{}", cs.as_str())
            };
            let text = format!("{cap}. Smith arrived. He left.");
            let s = split_sentences(&text);
            assert_eq!(s.len(), 2, "guard {word:?} failed on {text:?}");
        }
    }

    #[test]
    fn spans_cover_non_separator_characters() {
        let text = "  One two.   Next thing!  ";
        let s = split_sentences(text);
        assert_eq!(s.sentences(text), vec!["One two.", "Next thing!"]);
        // Characters outside spans must all be whitespace.
        let mut covered = vec![false; text.len()];
        for &(a, b) in &s.spans {
            for c in covered.iter_mut().take(b).skip(a) {
                *c = true;
            }
        }
        for (i, ch) in text.char_indices() {
            if !ch.is_whitespace() {
                assert!(covered[i], "char {ch:?} at {i} not covered");
            }
        }
    }

    #[test]
    fn select_anchor_first_and_degenerate() {
        let doc = Document::new("d", "A. B. C.").unwrap();
        let sel = select_anchor(&doc, AnchorStrategy::First, 0);
        assert_eq!(sel.anchor_text, "A.");
        assert_eq!(sel.remainder_text, "B. C.");

        let single = Document::new("s", "only sentence").unwrap();
        let sel = select_anchor(&single, AnchorStrategy::Random, 9);
        assert_eq!(sel.anchor_text, "only sentence");
        assert_eq!(sel.remainder_text, "");
    }

    #[test]
    fn select_anchor_random_is_deterministic() {
        let doc = Document::new("doc-7", "One here. Two there. Three more.").unwrap();
        let a = select_anchor(&doc, AnchorStrategy::Random, 7);
        let b = select_anchor(&doc, AnchorStrategy::Random, 7);
        assert_eq!(a, b);
        // Anchor + remainder partition the sentences.
        let split = split_sentences(&doc.text);
        let sentences = split.sentences(&doc.text);
        assert!(sentences.contains(&a.anchor_text.as_str()));
        for s in sentences {
            assert!(a.anchor_text == s || a.remainder_text.contains(s));
        }
    }

    #[test]
    fn retrieval_collection_round_trip_with_dropped_qrels() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("corpus.jsonl"),
            concat!(
                "{\"_id\": \"d1\", \"title\": \"T1\", \"text\": \"doc one\"}\n",
                "{\"_id\": \"d2\", \"title\": \"\", \"text\": \"doc two\"}\n",
                "{\"_id\": \"d3\", \"text\": \"doc three\"}\n",
            ),
        )
        .unwrap();
        std::fs::write(
            dir.path().join("queries.jsonl"),
            "{\"_id\": \"q1\", \"text\": \"a query\"}\n",
        )
        .unwrap();
        std::fs::write(
            dir.path().join("qrels.tsv"),
            "query-id\tcorpus-id\tscore\nq1\td1\t1\nq1\tdX\t1\n",
        )
        .unwrap();

        let coll = load_retrieval_collection(dir.path()).unwrap();
        assert_eq!(coll.corpus.len(), 3);
        assert_eq!(coll.queries.len(), 1);
        assert_eq!(coll.qrels.n_judgments(), 1);
        assert_eq!(coll.corpus[0].title.as_deref(), Some("T1"));
        assert_eq!(coll.corpus[1].title, None);
    }

    #[test]
    fn qrels_with_non_integer_score_errors() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("corpus.jsonl"),
            "{\"_id\": \"d1\", \"text\": \"x\"}\n",
        )
        .unwrap();
        std::fs::write(
            dir.path().join("queries.jsonl"),
            "{\"_id\": \"q1\", \"text\": \"y\"}\n",
        )
        .unwrap();
        std::fs::write(
            dir.path().join("qrels.tsv"),
            "query-id\tcorpus-id\tscore\nq1\td1\thigh\n",
        )
        .unwrap();
        let err = load_retrieval_collection(dir.path()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn malformed_json_line_names_line_number() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("corpus.jsonl"),
            "{\"_id\": \"d1\", \"text\": \"x\"}\n{not json}\n",
        )
        .unwrap();
        std::fs::write(dir.path().join("queries.jsonl"), "").unwrap();
        std::fs::write(dir.path().join("qrels.tsv"), "q\td\ts\n").unwrap();
        let err = load_retrieval_collection(dir.path()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn sts_pairs_parse_with_and_without_header() {
        let f = write_temp(b"sentence1\tsentence2\tscore\na cat\ta feline\t4.5\nx\ty\t0\n");
        let pairs = load_sts_pairs(f.path()).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].score, 4.5);

        let f = write_temp(b"a\tb\t5.0\n");
        assert_eq!(load_sts_pairs(f.path()).unwrap().len(), 1);

        let f = write_temp(b"a\tb\t9.0\n");
        assert!(load_sts_pairs(f.path()).is_err());
    }
}
