//! Facet-value pair enumeration and per-query candidate pools.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::corpus::{tokenize, CorpusStats, Document, QueryTopic};
use crate::features::qv_bm25;

/// Candidate pool depth used when none is given.
pub const DEFAULT_POOL_SIZE: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct FacetValuePair {
    pub facet: String,
    pub value: String,
    pub value_tokens: Vec<String>,
    /// Documents carrying this pair (P.NumDocs).
    pub num_docs: usize,
    /// `ln(N / num_docs)` (P.IDF).
    pub idf: f64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FacetStats {
    pub facet: String,
    pub num_values: usize,
    pub num_occurrences: usize,
}

/// Every distinct pair in a corpus, sorted by `(facet, value)`.
#[derive(Clone, Debug, Default)]
pub struct FvpTable {
    pub fvps: Vec<FacetValuePair>,
    pub facet_stats: BTreeMap<String, FacetStats>,
    /// Pair ids carried by each document, in the order documents were given.
    pub doc_fvps: Vec<Vec<u32>>,
    pub num_docs: usize,
    lookup: HashMap<(String, String), u32>,
    value_avgdl: f64,
}

pub fn fvp_idf(fvp_num_docs: usize, num_docs_in_corpus: usize) -> f64 {
    (num_docs_in_corpus as f64 / fvp_num_docs as f64).ln()
}

pub fn enumerate_fvps(corpus: &[Document]) -> FvpTable {
    // (facet, value) -> ordered set of document positions
    let mut carriers: BTreeMap<(String, String), BTreeSet<usize>> = BTreeMap::new();
    for (pos, doc) in corpus.iter().enumerate() {
        for facet in &doc.facets {
            let name = facet.name.trim();
            for value in &facet.values {
                carriers
                    .entry((name.to_string(), value.trim().to_string()))
                    .or_default()
                    .insert(pos);
            }
        }
    }

    let n = corpus.len();
    let mut fvps = Vec::with_capacity(carriers.len());
    let mut facet_stats: BTreeMap<String, FacetStats> = BTreeMap::new();
    let mut doc_fvps = vec![Vec::new(); n];
    let mut lookup = HashMap::with_capacity(carriers.len());
    for (id, ((facet, value), docs)) in carriers.into_iter().enumerate() {
        let stats = facet_stats.entry(facet.clone()).or_insert_with(|| FacetStats {
            facet: facet.clone(),
            num_values: 0,
            num_occurrences: 0,
        });
        stats.num_values += 1;
        stats.num_occurrences += docs.len();
        for &pos in &docs {
            doc_fvps[pos].push(id as u32);
        }
        lookup.insert((facet.clone(), value.clone()), id as u32);
        fvps.push(FacetValuePair {
            value_tokens: tokenize(&value),
            num_docs: docs.len(),
            idf: fvp_idf(docs.len(), n),
            facet,
            value,
        });
    }
    let value_avgdl = if fvps.is_empty() {
        0.0
    } else {
        fvps.iter().map(|f| f.value_tokens.len()).sum::<usize>() as f64 / fvps.len() as f64
    };
    FvpTable {
        fvps,
        facet_stats,
        doc_fvps,
        num_docs: n,
        lookup,
        value_avgdl,
    }
}

impl FvpTable {
    pub fn len(&self) -> usize {
        self.fvps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fvps.is_empty()
    }

    pub fn get(&self, id: u32) -> &FacetValuePair {
        &self.fvps[id as usize]
    }

    pub fn find(&self, facet: &str, value: &str) -> Option<u32> {
        self.lookup.get(&(facet.to_string(), value.to_string())).copied()
    }

    /// Mean token length over all distinct values; BM25 `avgdl` for QV.BM25.
    pub fn value_avgdl(&self) -> f64 {
        self.value_avgdl
    }

    /// Facet names in one-hot layout order.
    pub fn facet_names(&self) -> Vec<String> {
        self.facet_stats.keys().cloned().collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub fvp: u32,
    /// QV.BM25 between the query title and the value.
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CandidatePool {
    pub qid: String,
    pub candidates: Vec<Candidate>,
    pub pool_size: usize,
}

/// Top-`k` pairs by QV.BM25 against the query title. Ties, including the
/// zero-score backfill, go by `(facet, value)` ascending.
pub fn generate_candidates(
    query: &QueryTopic,
    table: &FvpTable,
    stats: &CorpusStats,
    k: usize,
) -> CandidatePool {
    let tokens = query.title_tokens();
    let idfs: Vec<f64> = tokens.iter().map(|t| stats.idf(t)).collect();
    let avgdl = table.value_avgdl();
    let mut scored: Vec<Candidate> = table
        .fvps
        .iter()
        .enumerate()
        .map(|(id, fvp)| Candidate {
            fvp: id as u32,
            score: qv_bm25(&tokens, &idfs, &fvp.value_tokens, avgdl),
        })
        .collect();
    // ids already follow (facet, value) order
    scored.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.fvp.cmp(&b.fvp)));
    scored.truncate(k);
    CandidatePool {
        qid: query.qid.clone(),
        candidates: scored,
        pool_size: k,
    }
}
