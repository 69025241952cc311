//! Structured documents, query topics, tokenization and corpus statistics.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One metadata field of a document with its assigned values.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Facet {
    pub name: String,
    pub values: Vec<String>,
}

impl Facet {
    pub fn new(name: impl Into<String>, values: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Facet {
            name: name.into(),
            values: values.into_iter().map(Into::into).collect(),
        }
    }
}

/// The retrieval unit: an identifier, its facets and optional free text.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    #[serde(default)]
    pub facets: Vec<Facet>,
    #[serde(default, rename = "text", skip_serializing_if = "Option::is_none")]
    pub free_text: Option<String>,
}

impl Document {
    pub fn new(id: impl Into<String>, facets: Vec<Facet>, free_text: Option<String>) -> Self {
        Document {
            id: id.into(),
            facets,
            free_text,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: &str| Error::InvalidDocument {
            id: self.id.clone(),
            reason: reason.to_string(),
        };
        if self.id.is_empty() {
            return Err(invalid("empty id"));
        }
        for facet in &self.facets {
            if facet.name.trim().is_empty() {
                return Err(invalid("empty facet name"));
            }
            if facet.values.iter().any(|v| v.trim().is_empty()) {
                return Err(invalid(&format!("empty value in facet `{}`", facet.name)));
            }
        }
        Ok(())
    }
}

/// A keyword query. Only the title feeds the ranking features.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryTopic {
    pub qid: String,
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub narrative: Option<String>,
}

impl QueryTopic {
    pub fn new(qid: impl Into<String>, title: impl Into<String>) -> Self {
        QueryTopic {
            qid: qid.into(),
            title: title.into(),
            description: None,
            narrative: None,
        }
    }

    pub fn title_tokens(&self) -> Vec<String> {
        tokenize(&self.title)
    }
}

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Flattens a document to unstructured text: facet values in facet order,
/// then the free text, space separated.
pub fn plain_text(doc: &Document) -> String {
    let mut parts: Vec<&str> = doc
        .facets
        .iter()
        .flat_map(|f| f.values.iter().map(String::as_str))
        .collect();
    if let Some(text) = doc.free_text.as_deref() {
        parts.push(text);
    }
    parts.join(" ")
}

/// Document-level term statistics shared by every IDF-bearing feature.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorpusStats {
    pub num_docs: usize,
    pub doc_freq: HashMap<String, usize>,
    pub total_tokens_per_doc: HashMap<String, usize>,
    pub avg_doc_len: f64,
}

impl CorpusStats {
    pub fn from_documents(docs: &[Document]) -> Self {
        let mut doc_freq: HashMap<String, usize> = HashMap::new();
        let mut total_tokens_per_doc = HashMap::with_capacity(docs.len());
        let mut total: usize = 0;
        for doc in docs {
            let tokens = tokenize(&plain_text(doc));
            total += tokens.len();
            total_tokens_per_doc.insert(doc.id.clone(), tokens.len());
            let distinct: HashSet<String> = tokens.into_iter().collect();
            for term in distinct {
                *doc_freq.entry(term).or_insert(0) += 1;
            }
        }
        let avg_doc_len = if docs.is_empty() {
            0.0
        } else {
            total as f64 / docs.len() as f64
        };
        CorpusStats {
            num_docs: docs.len(),
            doc_freq,
            total_tokens_per_doc,
            avg_doc_len,
        }
    }

    pub fn df(&self, term: &str) -> usize {
        self.doc_freq.get(term).copied().unwrap_or(0)
    }

    pub fn idf(&self, term: &str) -> f64 {
        idf_from_counts(self.num_docs, self.df(term))
    }
}

/// Smoothed term IDF, `ln((N + 1) / (df + 1))`.
pub fn idf(term: &str, stats: &CorpusStats) -> f64 {
    stats.idf(term)
}

pub fn idf_from_counts(num_docs: usize, df: usize) -> f64 {
    ((num_docs as f64 + 1.0) / (df as f64 + 1.0)).ln()
}

fn read_jsonl<T, R>(reader: R, source_name: &str) -> Result<Vec<T>>
where
    T: for<'de> Deserialize<'de>,
    R: Read,
{
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::parse(source_name, line_no, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| Error::parse(source_name, line_no, e))?;
        if !value.is_object() {
            return Err(Error::parse(source_name, line_no, "expected a JSON object"));
        }
        let item = T::deserialize(value).map_err(|e| Error::parse(source_name, line_no, e))?;
        out.push(item);
    }
    Ok(out)
}

pub fn read_documents<R: Read>(reader: R, source_name: &str) -> Result<Vec<Document>> {
    let docs: Vec<Document> = read_jsonl(reader, source_name)?;
    let mut seen = HashSet::with_capacity(docs.len());
    for doc in &docs {
        doc.validate()?;
        if !seen.insert(doc.id.as_str()) {
            return Err(Error::DuplicateId(doc.id.clone()));
        }
    }
    Ok(docs)
}

/// Reads `corpus.jsonl` and computes statistics over each document's plain text.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<(Vec<Document>, CorpusStats)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let docs = read_documents(file, &path.display().to_string())?;
    let stats = CorpusStats::from_documents(&docs);
    Ok((docs, stats))
}

pub fn read_topics<R: Read>(reader: R, source_name: &str) -> Result<Vec<QueryTopic>> {
    let topics: Vec<QueryTopic> = read_jsonl(reader, source_name)?;
    let mut seen = HashSet::with_capacity(topics.len());
    for topic in &topics {
        if topic.title.trim().is_empty() {
            return Err(Error::InvalidConfig(format!("topic `{}` has an empty title", topic.qid)));
        }
        if !seen.insert(topic.qid.as_str()) {
            return Err(Error::DuplicateId(topic.qid.clone()));
        }
    }
    Ok(topics)
}

pub fn load_topics(path: impl AsRef<Path>) -> Result<Vec<QueryTopic>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_topics(file, &path.display().to_string())
}

/// Serializes one value per line.
pub fn to_jsonl<T: Serialize>(items: &[T]) -> Result<String> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item)?);
        out.push('\n');
    }
    Ok(out)
}
