//! Inverted index over document plain text and BM25 retrieval.
//!
//! Documents are numbered by ascending id, so ordinal order and id order
//! agree everywhere: in posting lists, and in the tie rule of a ranking.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{plain_text, tokenize, Document};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    /// Saturated, length-normalized term weight (without the idf factor).
    pub fn tf_factor(&self, tf: f64, doc_len: f64, avg_doc_len: f64) -> f64 {
        if tf <= 0.0 {
            return 0.0;
        }
        let rel_len = if avg_doc_len > 0.0 { doc_len / avg_doc_len } else { 1.0 };
        tf * (self.k1 + 1.0) / (tf + self.k1 * (1.0 - self.b + self.b * rel_len))
    }
}

/// Non-negative BM25 idf, `ln(1 + (N - df + 0.5) / (df + 0.5))`.
pub fn bm25_idf(num_docs: usize, df: usize) -> f64 {
    let n = num_docs as f64;
    let df = df as f64;
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvertedIndex {
    postings: HashMap<String, Vec<Posting>>,
    doc_ids: Vec<String>,
    doc_len: Vec<u32>,
    ordinals: HashMap<String, u32>,
    num_docs: usize,
    avg_doc_len: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoredDoc {
    pub doc: u32,
    pub score: f64,
}

/// Documents matching at least one query token, best first.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RankedDocList {
    pub entries: Vec<ScoredDoc>,
}

impl RankedDocList {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn docs(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.iter().map(|e| e.doc)
    }
}

pub fn build_index(corpus: &[Document]) -> InvertedIndex {
    let mut order: Vec<&Document> = corpus.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));

    let mut postings: HashMap<String, Vec<Posting>> = HashMap::new();
    let mut doc_ids = Vec::with_capacity(order.len());
    let mut doc_len = Vec::with_capacity(order.len());
    let mut total: u64 = 0;
    for (ordinal, doc) in order.iter().enumerate() {
        let tokens = tokenize(&plain_text(doc));
        let mut counts: HashMap<String, u32> = HashMap::new();
        for t in &tokens {
            *counts.entry(t.clone()).or_insert(0) += 1;
        }
        for (term, tf) in counts {
            postings.entry(term).or_default().push(Posting {
                doc: ordinal as u32,
                tf,
            });
        }
        doc_ids.push(doc.id.clone());
        doc_len.push(tokens.len() as u32);
        total += tokens.len() as u64;
    }
    // Each list was filled in ordinal order already.
    InvertedIndex::from_parts(postings, doc_ids, doc_len, total)
}

pub fn bm25_score(query_tokens: &[String], doc_id: &str, index: &InvertedIndex) -> Result<f64> {
    let doc = index
        .ordinal(doc_id)
        .ok_or_else(|| Error::UnknownDocument(doc_id.to_string()))?;
    Ok(index.score_ordinal(query_tokens, doc, &Bm25Params::default()))
}

/// Scores every document sharing a token with the query. `limit = None`
/// keeps the whole list ("all retrieved").
pub fn retrieve(query_tokens: &[String], index: &InvertedIndex, limit: Option<usize>) -> RankedDocList {
    index.retrieve_with(query_tokens, limit, &Bm25Params::default())
}

impl InvertedIndex {
    fn from_parts(
        postings: HashMap<String, Vec<Posting>>,
        doc_ids: Vec<String>,
        doc_len: Vec<u32>,
        total_len: u64,
    ) -> Self {
        let num_docs = doc_ids.len();
        let avg_doc_len = if num_docs == 0 {
            0.0
        } else {
            total_len as f64 / num_docs as f64
        };
        let ordinals = doc_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i as u32))
            .collect();
        InvertedIndex {
            postings,
            doc_ids,
            doc_len,
            ordinals,
            num_docs,
            avg_doc_len,
        }
    }

    pub fn num_docs(&self) -> usize {
        self.num_docs
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn num_terms(&self) -> usize {
        self.postings.len()
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn df(&self, term: &str) -> usize {
        self.postings(term).len()
    }

    pub fn doc_id(&self, ordinal: u32) -> &str {
        &self.doc_ids[ordinal as usize]
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn ordinal(&self, doc_id: &str) -> Option<u32> {
        self.ordinals.get(doc_id).copied()
    }

    pub fn doc_len(&self, ordinal: u32) -> u32 {
        self.doc_len[ordinal as usize]
    }

    pub fn tf(&self, term: &str, ordinal: u32) -> u32 {
        let list = self.postings(term);
        match list.binary_search_by_key(&ordinal, |p| p.doc) {
            Ok(i) => list[i].tf,
            Err(_) => 0,
        }
    }

    pub fn score_ordinal(&self, query_tokens: &[String], ordinal: u32, params: &Bm25Params) -> f64 {
        let dl = self.doc_len(ordinal) as f64;
        query_tokens
            .iter()
            .map(|t| {
                let tf = self.tf(t, ordinal);
                if tf == 0 {
                    0.0
                } else {
                    bm25_idf(self.num_docs, self.df(t)) * params.tf_factor(tf as f64, dl, self.avg_doc_len)
                }
            })
            .sum()
    }

    pub fn retrieve_with(
        &self,
        query_tokens: &[String],
        limit: Option<usize>,
        params: &Bm25Params,
    ) -> RankedDocList {
        let mut scores: HashMap<u32, f64> = HashMap::new();
        for term in query_tokens {
            let list = self.postings(term);
            if list.is_empty() {
                continue;
            }
            let idf = bm25_idf(self.num_docs, list.len());
            for p in list {
                let w = idf * params.tf_factor(p.tf as f64, self.doc_len(p.doc) as f64, self.avg_doc_len);
                *scores.entry(p.doc).or_insert(0.0) += w;
            }
        }
        let mut entries: Vec<ScoredDoc> = scores
            .into_iter()
            .map(|(doc, score)| ScoredDoc { doc, score })
            .collect();
        entries.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.doc.cmp(&b.doc)));
        if let Some(limit) = limit {
            entries.truncate(limit);
        }
        RankedDocList { entries }
    }
}

const MANIFEST: &str = "manifest.json";
const POSTINGS: &str = "postings.tsv";
const DOCS: &str = "docs.tsv";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    num_docs: usize,
    avg_doc_len: f64,
    num_terms: usize,
}

impl InvertedIndex {
    /// Flat on-disk form:
    ///
    /// * `manifest.json`: `{"num_docs", "avg_doc_len", "num_terms"}`
    /// * `postings.tsv`: `term TAB docid:tf,docid:tf,...`, terms sorted
    /// * `docs.tsv`: `docid TAB length`, in ordinal order
    pub fn to_files(&self) -> Result<Vec<(&'static str, String)>> {
        for id in &self.doc_ids {
            if id.contains(['\t', '\n', '\r', ',']) {
                return Err(Error::IndexFormat(format!(
                    "document id `{id}` cannot be stored (contains tab, newline or comma)"
                )));
            }
        }
        let manifest = Manifest {
            num_docs: self.num_docs,
            avg_doc_len: self.avg_doc_len,
            num_terms: self.postings.len(),
        };
        let mut terms: Vec<&String> = self.postings.keys().collect();
        terms.sort();
        let mut postings = String::new();
        for term in terms {
            postings.push_str(term);
            postings.push('\t');
            for (i, p) in self.postings[term].iter().enumerate() {
                if i > 0 {
                    postings.push(',');
                }
                let _ = write!(postings, "{}:{}", self.doc_ids[p.doc as usize], p.tf);
            }
            postings.push('\n');
        }
        let mut docs = String::new();
        for (id, len) in self.doc_ids.iter().zip(&self.doc_len) {
            let _ = writeln!(docs, "{id}\t{len}");
        }
        Ok(vec![
            (MANIFEST, serde_json::to_string_pretty(&manifest)? + "\n"),
            (POSTINGS, postings),
            (DOCS, docs),
        ])
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in self.to_files()? {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(|e| Error::io(&path, e))
        };
        let manifest: Manifest = serde_json::from_str(&read(MANIFEST)?)?;

        let mut doc_ids = Vec::new();
        let mut doc_len = Vec::new();
        let mut total: u64 = 0;
        for (i, line) in read(DOCS)?.lines().enumerate() {
            let (id, len) = line
                .rsplit_once('\t')
                .ok_or_else(|| Error::parse(DOCS, i + 1, "expected `docid TAB length`"))?;
            let len: u32 = len.parse().map_err(|e| Error::parse(DOCS, i + 1, e))?;
            if doc_ids.last().is_some_and(|prev: &String| prev.as_str() >= id) {
                return Err(Error::parse(DOCS, i + 1, "document ids must be strictly ascending"));
            }
            doc_ids.push(id.to_string());
            doc_len.push(len);
            total += len as u64;
        }
        let ordinals: HashMap<&str, u32> = doc_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i as u32))
            .collect();

        let mut postings = HashMap::new();
        for (i, line) in read(POSTINGS)?.lines().enumerate() {
            let line_no = i + 1;
            let (term, list) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(POSTINGS, line_no, "expected `term TAB postings`"))?;
            let mut entries = Vec::new();
            for item in list.split(',') {
                let (id, tf) = item
                    .rsplit_once(':')
                    .ok_or_else(|| Error::parse(POSTINGS, line_no, "expected `docid:tf`"))?;
                let doc = *ordinals
                    .get(id)
                    .ok_or_else(|| Error::parse(POSTINGS, line_no, format!("unknown document `{id}`")))?;
                let tf: u32 = tf.parse().map_err(|e| Error::parse(POSTINGS, line_no, e))?;
                if entries.last().is_some_and(|p: &Posting| p.doc >= doc) {
                    return Err(Error::parse(POSTINGS, line_no, "postings must be sorted by document id"));
                }
                entries.push(Posting { doc, tf });
            }
            if postings.insert(term.to_string(), entries).is_some() {
                return Err(Error::parse(POSTINGS, line_no, format!("duplicate term `{term}`")));
            }
        }

        let index = InvertedIndex::from_parts(postings, doc_ids, doc_len, total);
        if index.num_docs != manifest.num_docs
            || index.postings.len() != manifest.num_terms
            || index.avg_doc_len.to_bits() != manifest.avg_doc_len.to_bits()
        {
            return Err(Error::IndexFormat(
                "manifest disagrees with postings and document table".into(),
            ));
        }
        Ok(index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Facet;
    use proptest::prelude::*;

    fn text_doc(id: &str, text: &str) -> Document {
        Document::new(id, vec![], Some(text.to_string()))
    }

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn single_document_index() {
        let idx = build_index(&[text_doc("d1", "action movie")]);
        assert_eq!(idx.postings("action"), &[Posting { doc: 0, tf: 1 }]);
        assert_eq!(idx.postings("movie"), &[Posting { doc: 0, tf: 1 }]);
        assert_eq!(idx.doc_len(0), 2);
        assert_eq!(idx.num_docs(), 1);
    }

    #[test]
    fn shared_term_sorted_by_id() {
        let idx = build_index(&[text_doc("d2", "action"), text_doc("d1", "action hero")]);
        let list = idx.postings("action");
        assert_eq!(list.len(), 2);
        assert_eq!(idx.doc_id(list[0].doc), "d1");
        assert_eq!(idx.doc_id(list[1].doc), "d2");
    }

    #[test]
    fn empty_corpus() {
        let idx = build_index(&[]);
        assert_eq!(idx.num_docs(), 0);
        assert_eq!(idx.num_terms(), 0);
        assert!(retrieve(&toks("anything"), &idx, None).is_empty());
    }

    #[test]
    fn bm25_hand_example() {
        let idx = build_index(&[text_doc("a", "action hero"), text_doc("b", "quiet slow long drama")]);
        let expected = 2f64.ln() * 2.2 / (1.0 + 1.2 * (0.25 + 0.75 * (2.0 / 3.0)));
        let got = bm25_score(&toks("action"), "a", &idx).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.8026).abs() < 1e-4);
        assert_eq!(bm25_score(&toks("action"), "b", &idx).unwrap(), 0.0);
        assert_eq!(bm25_score(&[], "a", &idx).unwrap(), 0.0);
        assert!(matches!(bm25_score(&toks("action"), "zz", &idx), Err(Error::UnknownDocument(_))));
    }

    #[test]
    fn retrieve_rules() {
        let idx = build_index(&[
            text_doc("c", "action"),
            text_doc("a", "action"),
            text_doc("b", "drama"),
        ]);
        let all = retrieve(&toks("action"), &idx, None);
        assert_eq!(all.len(), 2);
        // identical scores: id ascending
        assert_eq!(idx.doc_id(all.entries[0].doc), "a");
        assert_eq!(idx.doc_id(all.entries[1].doc), "c");
        let top = retrieve(&toks("action"), &idx, Some(1));
        assert_eq!(top.entries, all.entries[..1]);
    }

    #[test]
    fn repeated_query_tokens_count_per_occurrence() {
        let idx = build_index(&[text_doc("a", "action hero"), text_doc("b", "drama")]);
        let once = bm25_score(&toks("action"), "a", &idx).unwrap();
        let twice = bm25_score(&toks("action action"), "a", &idx).unwrap();
        assert!((twice - 2.0 * once).abs() < 1e-12);
    }

    #[test]
    fn persisted_index_roundtrips_bit_exact() {
        let docs = vec![
            Document::new("m1", vec![Facet::new("genre", ["Action", "Sci-Fi"])], Some("a b c".into())),
            Document::new("m2", vec![Facet::new("genre", ["Drama"])], Some("x y".into())),
            Document::new("m0", vec![], Some("action action drama".into())),
        ];
        let idx = build_index(&docs);
        let dir = tempfile::tempdir().unwrap();
        idx.save(dir.path()).unwrap();
        let loaded = InvertedIndex::load(dir.path()).unwrap();
        assert_eq!(loaded, idx);
        assert_eq!(loaded.to_files().unwrap(), idx.to_files().unwrap());
        let postings = std::fs::read_to_string(dir.path().join("postings.tsv")).unwrap();
        assert!(postings.contains("action\tm0:2,m1:1\n"), "{postings}");
    }

    #[test]
    fn unstorable_ids_are_rejected() {
        let idx = build_index(&[text_doc("a,b", "x")]);
        assert!(matches!(idx.to_files(), Err(Error::IndexFormat(_))));
    }

    fn arb_corpus() -> impl Strategy<Value = Vec<Document>> {
        prop::collection::vec(prop::collection::vec(0u8..8, 0..12), 1..20).prop_map(|docs| {
            docs.into_iter()
                .enumerate()
                .map(|(i, words)| {
                    let text: Vec<String> = words.iter().map(|w| format!("w{w}")).collect();
                    text_doc(&format!("d{i:02}"), &text.join(" "))
                })
                .collect()
        })
    }

    fn arb_query() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(0u8..10, 0..5).prop_map(|ws| ws.into_iter().map(|w| format!("w{w}")).collect())
    }

    proptest! {
        #[test]
        fn additivity(docs in arb_corpus(), q1 in arb_query(), q2 in arb_query()) {
            let idx = build_index(&docs);
            let joined: Vec<String> = q1.iter().chain(&q2).cloned().collect();
            for id in idx.doc_ids().to_vec() {
                let a = bm25_score(&q1, &id, &idx).unwrap();
                let b = bm25_score(&q2, &id, &idx).unwrap();
                let ab = bm25_score(&joined, &id, &idx).unwrap();
                prop_assert!((ab - (a + b)).abs() < 1e-9);
            }
        }

        #[test]
        fn truncation_is_prefix(docs in arb_corpus(), q in arb_query(), n in 0usize..25) {
            let idx = build_index(&docs);
            let all = retrieve(&q, &idx, None);
            let top = retrieve(&q, &idx, Some(n));
            prop_assert_eq!(&top.entries[..], &all.entries[..top.len()]);
            prop_assert!(all.entries.windows(2).all(|w| w[0].score >= w[1].score));
            prop_assert!(all.entries.iter().all(|e| e.score > 0.0));
        }

        #[test]
        fn retrieve_matches_direct_scoring(docs in arb_corpus(), q in arb_query()) {
            let idx = build_index(&docs);
            let all = retrieve(&q, &idx, None);
            for e in &all.entries {
                let direct = bm25_score(&q, idx.doc_id(e.doc), &idx).unwrap();
                prop_assert!((direct - e.score).abs() < 1e-9);
            }
            let matching = idx.doc_ids().iter().filter(|id| {
                let ord = idx.ordinal(id).unwrap();
                q.iter().any(|t| idx.tf(t, ord) > 0)
            }).count();
            prop_assert_eq!(matching, all.len());
        }
    }

    #[test]
    fn longer_document_never_scores_higher() {
        let params = Bm25Params::default();
        let mut prev = f64::INFINITY;
        for dl in 1..50 {
            let s = params.tf_factor(1.0, dl as f64, 5.0);
            assert!(s <= prev);
            prev = s;
        }
    }
}
