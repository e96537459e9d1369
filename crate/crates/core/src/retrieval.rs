//! BM25 retrieval over a line-delimited document corpus.
//!
//! ```text
//! score(d) = sum_j idf(k_j) * tf(k_j, d) * (k1 + 1) / (tf(k_j, d) + k1 * (1 - b + b * |d| / avgdl))
//! idf(k)   = ln((N - df + 0.5) / (df + 0.5) + 1)
//! ```
//!
//! Index file format, UTF-8 text:
//!
//! ```text
//! tableqa-bm25 1
//! k1 <float>
//! b <float>
//! docs <N>
//! avgdl <float>
//! terms <M>
//! <N lines: {"id": .., "len": .., "text": .., "title": ..} JSON, in corpus order>
//! <M lines: term TAB df TAB doc:tf doc:tf ..., terms sorted, doc = 0-based line of the doc block>
//! ```
//!
//! Floats use the shortest representation that parses back to the same value.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::tokenize::tokenize;

const FORMAT_TAG: &str = "tableqa-bm25";
const FORMAT_VERSION: u32 = 1;

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "did", "do", "does", "for", "from", "how", "in", "is", "it",
    "of", "on", "or", "that", "the", "to", "was", "were", "what", "when", "where", "which", "who", "whom", "why",
    "with",
];

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("duplicate document id {0}")]
    DuplicateId(String),
    #[error("unknown document id {0}")]
    UnknownDoc(String),
    #[error("invalid BM25 parameters: {0}")]
    Params(String),
    #[error("corpus line {line}: {message}")]
    CorpusLine { line: usize, message: String },
    #[error("index file line {line}: {message}")]
    IndexFormat { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 0.9, b: 0.4 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        if !(self.k1 >= 0.0 && self.k1.is_finite()) {
            return Err(RetrievalError::Params(format!("k1 must be >= 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(RetrievalError::Params(format!("b must lie in [0, 1], got {}", self.b)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoredDoc {
    id: String,
    len: usize,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    title: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    params: Bm25Params,
    docs: Vec<StoredDoc>,
    postings: BTreeMap<String, Vec<Posting>>,
    avg_len: f64,
    by_id: HashMap<String, usize>,
}

/// Reads `{id, text, title?}` records, one per line; blank lines are skipped.
pub fn parse_corpus<R: BufRead>(reader: R) -> Result<Vec<Document>, RetrievalError> {
    let mut docs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(&line).map_err(|e| RetrievalError::CorpusLine {
            line: idx + 1,
            message: e.to_string(),
        })?;
        docs.push(doc);
    }
    Ok(docs)
}

pub fn write_corpus<W: Write>(docs: &[Document], mut w: W) -> std::io::Result<()> {
    for d in docs {
        writeln!(w, "{}", serde_json::to_string(d)?)?;
    }
    Ok(())
}

/// Query keywords; optionally drops a small English stopword list.
pub fn query_tokens(text: &str, drop_stopwords: bool) -> Vec<String> {
    let tokens = tokenize(text);
    if !drop_stopwords {
        return tokens;
    }
    let stop: HashSet<&str> = STOPWORDS.iter().copied().collect();
    tokens.into_iter().filter(|t| !stop.contains(t.as_str())).collect()
}

pub fn build_index<I>(corpus: I, params: Bm25Params) -> Result<InvertedIndex, RetrievalError>
where
    I: IntoIterator<Item = Document>,
{
    params.validate()?;
    let mut docs = Vec::new();
    let mut by_id = HashMap::new();
    let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
    for doc in corpus {
        if by_id.contains_key(&doc.id) {
            return Err(RetrievalError::DuplicateId(doc.id));
        }
        let idx = docs.len();
        let tokens = tokenize(&doc.text);
        let mut tf: BTreeMap<String, u32> = BTreeMap::new();
        for t in &tokens {
            *tf.entry(t.clone()).or_default() += 1;
        }
        for (term, count) in tf {
            postings.entry(term).or_default().push(Posting {
                doc: idx as u32,
                tf: count,
            });
        }
        by_id.insert(doc.id.clone(), idx);
        docs.push(StoredDoc {
            id: doc.id,
            len: tokens.len(),
            text: doc.text,
            title: doc.title,
        });
    }
    if docs.is_empty() {
        return Err(RetrievalError::EmptyCorpus);
    }
    let avg_len = mean_length(&docs);
    Ok(InvertedIndex {
        params,
        docs,
        postings,
        avg_len,
        by_id,
    })
}

fn mean_length(docs: &[StoredDoc]) -> f64 {
    docs.iter().map(|d| d.len as f64).sum::<f64>() / docs.len() as f64
}

impl InvertedIndex {
    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    pub fn term_count(&self) -> usize {
        self.postings.len()
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_len
    }

    pub fn doc_len(&self, doc_id: &str) -> Option<usize> {
        self.by_id.get(doc_id).map(|&i| self.docs[i].len)
    }

    pub fn doc_text(&self, doc_id: &str) -> Option<&str> {
        self.by_id.get(doc_id).map(|&i| self.docs[i].text.as_str())
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Document id at an internal position.
    pub fn doc_id(&self, idx: u32) -> &str {
        &self.docs[idx as usize].id
    }

    pub fn doc_frequency(&self, term: &str) -> usize {
        self.postings(term).len()
    }

    pub fn idf(&self, term: &str) -> f64 {
        idf(self.docs.len(), self.doc_frequency(term))
    }

    fn term_weight(&self, idf: f64, tf: f64, len: f64) -> f64 {
        let Bm25Params { k1, b } = self.params;
        idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len / self.avg_len))
    }

    pub fn bm25_score(&self, query: &[String], doc_id: &str) -> Result<f64, RetrievalError> {
        let &idx = self
            .by_id
            .get(doc_id)
            .ok_or_else(|| RetrievalError::UnknownDoc(doc_id.to_string()))?;
        let len = self.docs[idx].len as f64;
        let mut score = 0.0;
        for term in query {
            let postings = self.postings(term);
            if let Ok(p) = postings.binary_search_by_key(&(idx as u32), |p| p.doc) {
                score += self.term_weight(self.idf(term), postings[p].tf as f64, len);
            }
        }
        Ok(score)
    }

    /// Scores every document containing a query term.
    fn score_all(&self, query: &[String]) -> Vec<f64> {
        let mut scores = vec![0.0; self.docs.len()];
        for term in query {
            let idf = self.idf(term);
            for p in self.postings(term) {
                scores[p.doc as usize] += self.term_weight(idf, p.tf as f64, self.docs[p.doc as usize].len as f64);
            }
        }
        scores
    }

    /// Top `k` documents with positive score, best first; ties by ascending id.
    pub fn search_tokens(&self, query: &[String], k: usize) -> Vec<(String, f64)> {
        let scores = self.score_all(query);
        let mut hits: Vec<(usize, f64)> = scores
            .into_iter()
            .enumerate()
            .filter(|&(_, s)| s > 0.0)
            .collect();
        hits.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| self.docs[a.0].id.cmp(&self.docs[b.0].id)));
        hits.truncate(k);
        hits.into_iter().map(|(i, s)| (self.docs[i].id.clone(), s)).collect()
    }

    pub fn search(&self, query: &str, k: usize) -> Vec<(String, f64)> {
        self.search_tokens(&query_tokens(query, false), k)
    }

    /// First sentence of the best-matching document, or "" when nothing matches.
    pub fn retrieve_context(&self, question: &str, drop_stopwords: bool) -> String {
        match self.search_tokens(&query_tokens(question, drop_stopwords), 1).first() {
            Some((id, _)) => first_sentence(self.doc_text(id).unwrap_or_default()).to_string(),
            None => String::new(),
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{FORMAT_TAG} {FORMAT_VERSION}")?;
        writeln!(w, "k1 {:?}", self.params.k1)?;
        writeln!(w, "b {:?}", self.params.b)?;
        writeln!(w, "docs {}", self.docs.len())?;
        writeln!(w, "avgdl {:?}", self.avg_len)?;
        writeln!(w, "terms {}", self.postings.len())?;
        for d in &self.docs {
            writeln!(w, "{}", serde_json::to_string(d)?)?;
        }
        for (term, list) in &self.postings {
            write!(w, "{term}\t{}\t", list.len())?;
            for (i, p) in list.iter().enumerate() {
                if i > 0 {
                    w.write_all(b" ")?;
                }
                write!(w, "{}:{}", p.doc, p.tf)?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(reader: R) -> Result<Self, RetrievalError> {
        let mut lines = reader.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, String), RetrievalError> {
            match lines.next() {
                Some((i, l)) => Ok((i + 1, l?)),
                None => Err(RetrievalError::IndexFormat {
                    line: 0,
                    message: format!("unexpected end of file, expected {what}"),
                }),
            }
        };
        let bad = |line: usize, message: String| RetrievalError::IndexFormat { line, message };

        let (n, header) = next("header")?;
        if header != format!("{FORMAT_TAG} {FORMAT_VERSION}") {
            return Err(bad(n, format!("unsupported header {header:?}")));
        }
        let mut field = |key: &str| -> Result<(usize, String), RetrievalError> {
            let (n, line) = next(key)?;
            match line.split_once(' ') {
                Some((k, v)) if k == key => Ok((n, v.to_string())),
                _ => Err(bad(n, format!("expected `{key} <value>`"))),
            }
        };
        let parse_f = |(n, v): (usize, String)| v.parse::<f64>().map_err(|e| bad(n, e.to_string()));
        let parse_u = |(n, v): (usize, String)| v.parse::<usize>().map_err(|e| bad(n, e.to_string()));
        let params = Bm25Params {
            k1: parse_f(field("k1")?)?,
            b: parse_f(field("b")?)?,
        };
        params.validate()?;
        let n_docs = parse_u(field("docs")?)?;
        let avg_len = parse_f(field("avgdl")?)?;
        let n_terms = parse_u(field("terms")?)?;

        let mut docs = Vec::with_capacity(n_docs);
        let mut by_id = HashMap::new();
        for i in 0..n_docs {
            let (n, line) = next("document")?;
            let doc: StoredDoc = serde_json::from_str(&line).map_err(|e| bad(n, e.to_string()))?;
            if by_id.insert(doc.id.clone(), i).is_some() {
                return Err(RetrievalError::DuplicateId(doc.id));
            }
            docs.push(doc);
        }
        if docs.is_empty() {
            return Err(RetrievalError::EmptyCorpus);
        }
        let mut postings = BTreeMap::new();
        for _ in 0..n_terms {
            let (n, line) = next("postings")?;
            let mut parts = line.splitn(3, '\t');
            let (Some(term), Some(df), Some(list)) = (parts.next(), parts.next(), parts.next()) else {
                return Err(bad(n, "expected term, df and postings".into()));
            };
            let df: usize = df.parse().map_err(|_| bad(n, "bad df".into()))?;
            let list = list
                .split(' ')
                .filter(|s| !s.is_empty())
                .map(|p| {
                    let (d, tf) = p.split_once(':')?;
                    Some(Posting {
                        doc: d.parse().ok()?,
                        tf: tf.parse().ok()?,
                    })
                })
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| bad(n, "bad posting".into()))?;
            if list.len() != df
                || list.iter().any(|p| p.doc as usize >= docs.len() || p.tf == 0)
                || list.windows(2).any(|w| w[0].doc >= w[1].doc)
            {
                return Err(bad(n, format!("inconsistent postings for {term:?}")));
            }
            postings.insert(term.to_string(), list);
        }
        if mean_length(&docs) != avg_len {
            return Err(bad(5, "avgdl does not match stored document lengths".into()));
        }
        Ok(Self {
            params,
            docs,
            postings,
            avg_len,
            by_id,
        })
    }
}

pub fn idf(n_docs: usize, df: usize) -> f64 {
    let (n, df) = (n_docs as f64, df as f64);
    ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
}

/// Text up to and including the first `.`, `?` or `!` that is followed by whitespace or
/// ends the text; the whole (trimmed) text when there is no such boundary.
pub fn first_sentence(text: &str) -> &str {
    let text = text.trim();
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '?' | '!') {
            match chars.peek() {
                None => return text,
                Some(&(_, next)) if next.is_whitespace() => return &text[..i + c.len_utf8()],
                _ => {}
            }
        }
    }
    text
}
