//! End-to-end stages: index a corpus, pool candidates, extract features.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::corpus::{read_documents, to_jsonl, CorpusStats, Document, QueryTopic};
use crate::dataset::{FeatureTable, Instance};
use crate::error::{Error, Result};
use crate::eval::{cross_validate, CvConfig, CvReport, Qrels};
use crate::facets::{enumerate_fvps, generate_candidates, Candidate, CandidatePool, FvpTable};
use crate::features::{FeatureContext, FeatureLayout, QueryFeatures};
use crate::retrieval::{build_index, retrieve, InvertedIndex};
use crate::tsv;

const CORPUS_FILE: &str = "corpus.jsonl";

/// A corpus with everything derived from it. Documents are kept in id
/// order so positions match index ordinals.
pub struct Collection {
    pub docs: Vec<Document>,
    pub stats: CorpusStats,
    pub index: InvertedIndex,
    pub fvps: FvpTable,
    pub layout: FeatureLayout,
}

impl Collection {
    pub fn new(mut docs: Vec<Document>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(docs.len());
        for doc in &docs {
            doc.validate()?;
            if !seen.insert(doc.id.as_str()) {
                return Err(Error::DuplicateId(doc.id.clone()));
            }
        }
        docs.sort_by(|a, b| a.id.cmp(&b.id));
        let index = build_index(&docs);
        Ok(Self::assemble(docs, index))
    }

    fn assemble(docs: Vec<Document>, index: InvertedIndex) -> Self {
        let stats = CorpusStats::from_documents(&docs);
        let fvps = enumerate_fvps(&docs);
        let layout = FeatureLayout::from_table(&fvps);
        Collection {
            docs,
            stats,
            index,
            fvps,
            layout,
        }
    }

    /// Index files plus the corpus itself, which facet statistics need.
    pub fn files(&self) -> Result<Vec<(&'static str, String)>> {
        let mut files = self.index.to_files()?;
        files.push((CORPUS_FILE, to_jsonl(&self.docs)?));
        Ok(files)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in self.files()? {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let index = InvertedIndex::load(dir)?;
        let path = dir.join(CORPUS_FILE);
        let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut docs = read_documents(file, &path.display().to_string())?;
        docs.sort_by(|a, b| a.id.cmp(&b.id));
        if docs.len() != index.num_docs() || docs.iter().zip(index.doc_ids()).any(|(d, id)| &d.id != id) {
            return Err(Error::IndexFormat(format!(
                "{CORPUS_FILE} does not match the indexed documents"
            )));
        }
        Ok(Self::assemble(docs, index))
    }

    pub fn feature_context(&self) -> FeatureContext<'_> {
        FeatureContext {
            stats: &self.stats,
            table: &self.fvps,
            layout: &self.layout,
            doc_fvps: &self.fvps.doc_fvps,
        }
    }

    pub fn candidates(&self, topics: &[QueryTopic], k: usize) -> Vec<CandidatePool> {
        crate::exec::map(topics, |t| generate_candidates(t, &self.fvps, &self.stats, k))
    }

    /// One instance per pooled candidate, ordered by query then pool rank.
    /// Pairs judged relevant in `qrels` get label 1.
    pub fn extract(&self, topics: &[QueryTopic], pools: &[CandidatePool], qrels: Option<&Qrels>) -> Result<FeatureTable> {
        let by_qid: BTreeMap<&str, &CandidatePool> = pools.iter().map(|p| (p.qid.as_str(), p)).collect();
        let work: Vec<(&QueryTopic, &CandidatePool)> = topics
            .iter()
            .filter_map(|t| by_qid.get(t.qid.as_str()).map(|p| (t, *p)))
            .collect();
        let ctx = self.feature_context();
        let per_query = crate::exec::map(&work, |(topic, pool)| -> Result<Vec<Instance>> {
            let tokens = topic.title_tokens();
            let ranked = retrieve(&tokens, &self.index, None);
            let q = QueryFeatures::new(tokens, &ranked, &ctx);
            pool.candidates
                .iter()
                .map(|c| {
                    let fvp = self.fvps.get(c.fvp);
                    let label = qrels.is_some_and(|qr| qr.is_relevant(&topic.qid, &fvp.facet, &fvp.value));
                    Ok(Instance {
                        qid: topic.qid.clone(),
                        facet: fvp.facet.clone(),
                        value: fvp.value.clone(),
                        label: u8::from(label),
                        features: q.extract(c.fvp, &ctx)?.to_row(),
                    })
                })
                .collect()
        });
        let mut instances = Vec::new();
        for part in per_query {
            instances.extend(part?);
        }
        Ok(FeatureTable {
            feature_names: self.layout.names(),
            instances,
        })
    }
}

/// `qid TAB facet TAB value TAB rank TAB qv_bm25_score`, rank from 1.
pub fn candidates_to_tsv(pools: &[CandidatePool], table: &FvpTable) -> Result<String> {
    let mut out = String::new();
    for pool in pools {
        for (rank, c) in pool.candidates.iter().enumerate() {
            let fvp = table.get(c.fvp);
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                tsv::field(&pool.qid)?,
                tsv::field(&fvp.facet)?,
                tsv::field(&fvp.value)?,
                rank + 1,
                tsv::format_g9(c.score)
            );
        }
    }
    Ok(out)
}

/// Reads pools back, resolving pairs against `table`. Pool order follows
/// first appearance; candidates follow their rank column.
pub fn candidates_from_tsv(text: &str, source: &str, table: &FvpTable) -> Result<Vec<CandidatePool>> {
    let mut order: Vec<String> = Vec::new();
    let mut rows: BTreeMap<String, Vec<(usize, Candidate)>> = BTreeMap::new();
    for (line_no, line) in tsv::rows(text) {
        let f = tsv::split_row(line, 5, source, line_no)?;
        let fvp = table
            .find(f[1], f[2])
            .ok_or_else(|| Error::parse(source, line_no, format!("unknown pair `{}: {}`", f[1], f[2])))?;
        let rank: usize = tsv::parse_field(f[3], "rank", source, line_no)?;
        let score: f64 = tsv::parse_field(f[4], "score", source, line_no)?;
        if !rows.contains_key(f[0]) {
            order.push(f[0].to_string());
        }
        rows.entry(f[0].to_string()).or_default().push((rank, Candidate { fvp, score }));
    }
    Ok(order
        .into_iter()
        .map(|qid| {
            let mut list = rows.remove(&qid).unwrap_or_default();
            list.sort_by_key(|(rank, _)| *rank);
            let candidates: Vec<Candidate> = list.into_iter().map(|(_, c)| c).collect();
            CandidatePool {
                pool_size: candidates.len(),
                qid,
                candidates,
            }
        })
        .collect())
}

/// Pools, features and cross-validation in one pass.
pub fn run_cv(
    collection: &Collection,
    topics: &[QueryTopic],
    qrels: &Qrels,
    pool_size: usize,
    config: &CvConfig,
) -> Result<(FeatureTable, CvReport)> {
    let pools = collection.candidates(topics, pool_size);
    let table = collection.extract(topics, &pools, Some(qrels))?;
    let report = cross_validate(&table, qrels, config)?;
    Ok((table, report))
}
