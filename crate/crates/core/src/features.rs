//! The per-instance feature vector for a (query, facet-value pair).
//!
//! Query, facet, value and pair features are static; QF and QV compare the
//! query title with the facet name and the value string; QP counts how often
//! the pair shows up among the documents BM25 retrieves for the title.

use std::collections::HashMap;

use crate::corpus::{tokenize, CorpusStats};
use crate::error::{Error, Result};
use crate::facets::{FacetValuePair, FvpTable};
use crate::retrieval::{Bm25Params, RankedDocList};

/// Retrieval depths for the QP features; the last one is the whole list.
pub const QP_DEPTHS: [usize; 3] = [10, 100, 1000];

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub q_length: usize,
    pub q_avg_idf: f64,
    /// Index of this pair's facet in the one-hot layout.
    pub f_type: usize,
    pub f_type_width: usize,
    pub f_num_values: usize,
    pub f_num_occrs: usize,
    pub v_length: usize,
    pub v_avg_idf: f64,
    pub p_num_docs: usize,
    pub p_idf: f64,
    pub qf_tfidf: f64,
    pub qv_tfidf: f64,
    pub qv_bm25: f64,
    pub qv_sidf: f64,
    pub qv_cossim: f64,
    pub qp: QpFeatures,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct QpFeatures {
    pub df10: f64,
    pub dfidf10: f64,
    pub df100: f64,
    pub dfidf100: f64,
    pub df1000: f64,
    pub dfidf1000: f64,
    pub df_all: f64,
    pub dfidf_all: f64,
}

impl QpFeatures {
    pub fn from_counts(counts: [u32; 4], p_idf: f64) -> Self {
        let [d10, d100, d1000, dall] = counts.map(f64::from);
        QpFeatures {
            df10: d10,
            dfidf10: d10 * p_idf,
            df100: d100,
            dfidf100: d100 * p_idf,
            df1000: d1000,
            dfidf1000: d1000 * p_idf,
            df_all: dall,
            dfidf_all: dall * p_idf,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct QvScores {
    pub tfidf: f64,
    pub bm25: f64,
    pub sidf: f64,
    pub cossim: f64,
}

/// Column layout: one-hot facet indicators in sorted facet-name order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureLayout {
    facets: Vec<String>,
}

/// Named columns that rank well on their own (the single-feature baselines).
pub const SINGLE_FEATURE_RANKERS: [&str; 12] = [
    "QV.TFIDF",
    "QV.SIDF",
    "QP.DF10",
    "QP.DFIDF10",
    "QP.DFAll",
    "QP.DFIDFAll",
    "QV.CosSim",
    "QV.BM25",
    "QP.DF1000",
    "QP.DFIDF1000",
    "QP.DFIDF100",
    "QP.DF100",
];

impl FeatureLayout {
    pub fn new(mut facets: Vec<String>) -> Self {
        facets.sort();
        facets.dedup();
        FeatureLayout { facets }
    }

    pub fn from_table(table: &FvpTable) -> Self {
        FeatureLayout::new(table.facet_names())
    }

    pub fn facets(&self) -> &[String] {
        &self.facets
    }

    pub fn facet_index(&self, facet: &str) -> Result<usize> {
        self.facets
            .binary_search_by(|f| f.as_str().cmp(facet))
            .map_err(|_| Error::UnknownFacet(facet.to_string()))
    }

    pub fn names(&self) -> Vec<String> {
        let mut names = vec!["Q.Length".to_string(), "Q.AvgIDF".to_string()];
        names.extend(self.facets.iter().map(|f| format!("F.Type={f}")));
        names.extend(
            [
                "F.NumValues",
                "F.NumOccrs",
                "V.Length",
                "V.AvgIDF",
                "P.NumDocs",
                "P.IDF",
                "QF.TFIDF",
                "QV.TFIDF",
                "QV.BM25",
                "QV.SIDF",
                "QV.CosSim",
                "QP.DF10",
                "QP.DFIDF10",
                "QP.DF100",
                "QP.DFIDF100",
                "QP.DF1000",
                "QP.DFIDF1000",
                "QP.DFAll",
                "QP.DFIDFAll",
            ]
            .map(str::to_string),
        );
        names
    }

    pub fn width(&self) -> usize {
        self.facets.len() + 21
    }
}

impl FeatureVector {
    /// Flattens to columns in [`FeatureLayout::names`] order.
    pub fn to_row(&self) -> Vec<f64> {
        let mut row = Vec::with_capacity(self.f_type_width + 21);
        row.push(self.q_length as f64);
        row.push(self.q_avg_idf);
        row.extend((0..self.f_type_width).map(|i| if i == self.f_type { 1.0 } else { 0.0 }));
        row.extend([
            self.f_num_values as f64,
            self.f_num_occrs as f64,
            self.v_length as f64,
            self.v_avg_idf,
            self.p_num_docs as f64,
            self.p_idf,
            self.qf_tfidf,
            self.qv_tfidf,
            self.qv_bm25,
            self.qv_sidf,
            self.qv_cossim,
            self.qp.df10,
            self.qp.dfidf10,
            self.qp.df100,
            self.qp.dfidf100,
            self.qp.df1000,
            self.qp.dfidf1000,
            self.qp.df_all,
            self.qp.dfidf_all,
        ]);
        row
    }
}

fn mean(xs: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = xs.len();
    if n == 0 {
        0.0
    } else {
        xs.sum::<f64>() / n as f64
    }
}

fn term_counts(tokens: &[String]) -> HashMap<&str, usize> {
    let mut counts = HashMap::new();
    for t in tokens {
        *counts.entry(t.as_str()).or_insert(0) += 1;
    }
    counts
}

/// Q.Length and Q.AvgIDF.
pub fn query_features(title_tokens: &[String], stats: &CorpusStats) -> (usize, f64) {
    (
        title_tokens.len(),
        mean(title_tokens.iter().map(|t| stats.idf(t))),
    )
}

/// BM25 with the value string as the document. `query_idfs[i]` is the
/// corpus idf of `query_tokens[i]`.
pub fn qv_bm25(query_tokens: &[String], query_idfs: &[f64], value_tokens: &[String], value_avgdl: f64) -> f64 {
    if value_tokens.is_empty() {
        return 0.0;
    }
    let params = Bm25Params::default();
    let dl = value_tokens.len() as f64;
    query_tokens
        .iter()
        .zip(query_idfs)
        .map(|(t, idf)| {
            let tf = value_tokens.iter().filter(|v| *v == t).count();
            if tf == 0 {
                0.0
            } else {
                idf * params.tf_factor(tf as f64, dl, value_avgdl)
            }
        })
        .sum()
}

pub fn qv_scores(title_tokens: &[String], fvp: &FacetValuePair, stats: &CorpusStats, value_avgdl: f64) -> QvScores {
    let idfs: Vec<f64> = title_tokens.iter().map(|t| stats.idf(t)).collect();
    qv_scores_with_idfs(title_tokens, &idfs, &fvp.value_tokens, stats, value_avgdl)
}

fn qv_scores_with_idfs(
    title_tokens: &[String],
    idfs: &[f64],
    value_tokens: &[String],
    stats: &CorpusStats,
    value_avgdl: f64,
) -> QvScores {
    let value_tf = term_counts(value_tokens);
    let tf_of = |t: &str| value_tf.get(t).copied().unwrap_or(0) as f64;

    let tfidf = title_tokens
        .iter()
        .zip(idfs)
        .map(|(t, idf)| tf_of(t) * idf)
        .sum();

    let query_tf = term_counts(title_tokens);
    let mut shared: Vec<&str> = query_tf.keys().filter(|t| value_tf.contains_key(*t)).copied().collect();
    shared.sort_unstable();
    let sidf = shared.iter().map(|t| stats.idf(t)).sum();

    let mut dot = 0.0;
    for t in &shared {
        let w = stats.idf(t);
        dot += (query_tf[t] as f64 * w) * (value_tf[t] as f64 * w);
    }
    let norm = |counts: &HashMap<&str, usize>| {
        let mut terms: Vec<(&&str, &usize)> = counts.iter().collect();
        terms.sort_unstable();
        terms
            .into_iter()
            .map(|(t, &c)| (c as f64 * stats.idf(t)).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let denom = norm(&query_tf) * norm(&value_tf);
    let cossim = if denom > 0.0 { (dot / denom).clamp(0.0, 1.0) } else { 0.0 };

    QvScores {
        tfidf,
        bm25: qv_bm25(title_tokens, idfs, value_tokens, value_avgdl),
        sidf,
        cossim,
    }
}

/// TF-IDF between the title and the facet name.
pub fn qf_tfidf(title_tokens: &[String], facet_name: &str, stats: &CorpusStats) -> f64 {
    let facet_tokens = tokenize(facet_name);
    let facet_tf = term_counts(&facet_tokens);
    title_tokens
        .iter()
        .map(|t| facet_tf.get(t.as_str()).copied().unwrap_or(0) as f64 * stats.idf(t))
        .sum()
}

/// How many of the first 10, 100, 1000 and all `ranked` documents carry
/// each pair. `doc_fvps[ordinal]` lists the pair ids of a document.
pub fn qp_counts(ranked: &RankedDocList, doc_fvps: &[Vec<u32>]) -> HashMap<u32, [u32; 4]> {
    let mut counts: HashMap<u32, [u32; 4]> = HashMap::new();
    for (rank, doc) in ranked.docs().enumerate() {
        for &fvp in &doc_fvps[doc as usize] {
            let c = counts.entry(fvp).or_insert([0; 4]);
            for (slot, depth) in QP_DEPTHS.iter().enumerate() {
                if rank < *depth {
                    c[slot] += 1;
                }
            }
            c[3] += 1;
        }
    }
    counts
}

/// The eight QP values of one pair.
pub fn qp_features(ranked: &RankedDocList, fvp_id: u32, fvp: &FacetValuePair, doc_fvps: &[Vec<u32>]) -> QpFeatures {
    let mut counts = [0u32; 4];
    for (rank, doc) in ranked.docs().enumerate() {
        if doc_fvps[doc as usize].binary_search(&fvp_id).is_ok() {
            for (slot, depth) in QP_DEPTHS.iter().enumerate() {
                if rank < *depth {
                    counts[slot] += 1;
                }
            }
            counts[3] += 1;
        }
    }
    QpFeatures::from_counts(counts, fvp.idf)
}

/// Shared, read-only inputs for extracting a query's feature vectors.
pub struct FeatureContext<'a> {
    pub stats: &'a CorpusStats,
    pub table: &'a FvpTable,
    pub layout: &'a FeatureLayout,
    /// Pair ids per document ordinal of the retrieval index.
    pub doc_fvps: &'a [Vec<u32>],
}

/// Per-query state reused across all of the query's candidates.
pub struct QueryFeatures {
    tokens: Vec<String>,
    idfs: Vec<f64>,
    q_length: usize,
    q_avg_idf: f64,
    qp: HashMap<u32, [u32; 4]>,
}

impl QueryFeatures {
    /// `ranked` must be the untruncated retrieval list for the title.
    pub fn new(title_tokens: Vec<String>, ranked: &RankedDocList, ctx: &FeatureContext<'_>) -> Self {
        let (q_length, q_avg_idf) = query_features(&title_tokens, ctx.stats);
        QueryFeatures {
            idfs: title_tokens.iter().map(|t| ctx.stats.idf(t)).collect(),
            tokens: title_tokens,
            q_length,
            q_avg_idf,
            qp: qp_counts(ranked, ctx.doc_fvps),
        }
    }

    pub fn extract(&self, fvp_id: u32, ctx: &FeatureContext<'_>) -> Result<FeatureVector> {
        let fvp = ctx.table.get(fvp_id);
        let f_type = ctx.layout.facet_index(&fvp.facet)?;
        let facet = ctx
            .table
            .facet_stats
            .get(&fvp.facet)
            .ok_or_else(|| Error::UnknownFacet(fvp.facet.clone()))?;
        let qv = qv_scores_with_idfs(&self.tokens, &self.idfs, &fvp.value_tokens, ctx.stats, ctx.table.value_avgdl());
        let counts = self.qp.get(&fvp_id).copied().unwrap_or([0; 4]);
        Ok(FeatureVector {
            q_length: self.q_length,
            q_avg_idf: self.q_avg_idf,
            f_type,
            f_type_width: ctx.layout.facets().len(),
            f_num_values: facet.num_values,
            f_num_occrs: facet.num_occurrences,
            v_length: fvp.value_tokens.len(),
            v_avg_idf: mean(fvp.value_tokens.iter().map(|t| ctx.stats.idf(t))),
            p_num_docs: fvp.num_docs,
            p_idf: fvp.idf,
            qf_tfidf: qf_tfidf(&self.tokens, &fvp.facet, ctx.stats),
            qv_tfidf: qv.tfidf,
            qv_bm25: qv.bm25,
            qv_sidf: qv.sidf,
            qv_cossim: qv.cossim,
            qp: QpFeatures::from_counts(counts, fvp.idf),
        })
    }
}

/// Assembles the full vector for one (query, pair) instance.
pub fn extract_vector(
    title_tokens: &[String],
    fvp_id: u32,
    ranked: &RankedDocList,
    ctx: &FeatureContext<'_>,
) -> Result<FeatureVector> {
    QueryFeatures::new(title_tokens.to_vec(), ranked, ctx).extract(fvp_id, ctx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, Facet};
    use crate::facets::enumerate_fvps;
    use crate::retrieval::{build_index, retrieve};

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    fn stats_with(n: usize, dfs: &[(&str, usize)]) -> CorpusStats {
        CorpusStats {
            num_docs: n,
            doc_freq: dfs.iter().map(|(t, d)| (t.to_string(), *d)).collect(),
            ..Default::default()
        }
    }

    fn fvp(value: &str) -> FacetValuePair {
        FacetValuePair {
            facet: "director".into(),
            value: value.into(),
            value_tokens: toks(value),
            num_docs: 1,
            idf: 0.0,
        }
    }

    #[test]
    fn query_feature_examples() {
        let stats = stats_with(4, &[("a", 2)]);
        assert_eq!(query_features(&toks("Comedy Woody Allen Scarlett Johansson"), &stats).0, 5);
        let (_, avg) = query_features(&toks("a b"), &stats);
        let expected = ((5f64 / 3.0).ln() + 5f64.ln()) / 2.0;
        assert!((avg - expected).abs() < 1e-12);
        assert!((avg - 1.06014).abs() < 1e-5);
        assert_eq!(query_features(&[], &stats), (0, 0.0));
    }

    #[test]
    fn qv_examples() {
        let stats = stats_with(4, &[("woody", 1), ("allen", 1)]);
        let s = qv_scores(&toks("woody allen"), &fvp("Woody Allen"), &stats, 2.0);
        assert!((s.cossim - 1.0).abs() < 1e-12);
        let two_idf = 2.0 * 2.5f64.ln();
        assert!((s.sidf - two_idf).abs() < 1e-12);
        assert!((s.sidf - 1.83258).abs() < 1e-5);
        assert!((s.tfidf - two_idf).abs() < 1e-12);
        assert!(s.bm25 > 0.0);

        let none = qv_scores(&toks("steven spielberg"), &fvp("Woody Allen"), &stats, 2.0);
        assert_eq!(none, QvScores::default());
    }

    #[test]
    fn sidf_counts_shared_terms_once() {
        let stats = stats_with(4, &[("woody", 1)]);
        let once = qv_scores(&toks("woody"), &fvp("Woody Allen"), &stats, 2.0);
        let twice = qv_scores(&toks("woody woody"), &fvp("Woody Allen"), &stats, 2.0);
        assert_eq!(once.sidf, twice.sidf);
        assert!((twice.tfidf - 2.0 * once.tfidf).abs() < 1e-12);
    }

    #[test]
    fn qf_examples() {
        let stats = stats_with(4, &[("genre", 1)]);
        assert_eq!(qf_tfidf(&toks("movies directed by James Cameron"), "director", &stats), 0.0);
        assert!((qf_tfidf(&toks("genre comedy"), "genre", &stats) - stats.idf("genre")).abs() < 1e-15);
        assert_eq!(qf_tfidf(&toks("genre"), "--", &stats), 0.0);
    }

    #[test]
    fn length_normalization_contrast() {
        let stats = stats_with(10, &[("woody", 2), ("allen", 3)]);
        let short = fvp("Woody Allen");
        let long = fvp("Woody Allen Woody Allen");
        let q = toks("woody");
        let a = qv_scores(&q, &short, &stats, 3.0);
        let b = qv_scores(&q, &long, &stats, 3.0);
        assert!((a.cossim - b.cossim).abs() < 1e-12);
        assert!(b.tfidf > a.tfidf);
        let params = Bm25Params::default();
        assert!(params.tf_factor(1.0, 4.0, 3.0) < params.tf_factor(1.0, 2.0, 3.0));
    }

    fn movie_corpus() -> Vec<Document> {
        let mut docs = Vec::new();
        for i in 0..12 {
            let genre = if i % 3 == 0 { "Comedy" } else { "Drama" };
            docs.push(Document::new(
                format!("m{i:02}"),
                vec![Facet::new("genre", [genre]), Facet::new("year", [format!("{}", 1990 + i % 4)])],
                Some(if i < 7 { "funny story".into() } else { "sad story".into() }),
            ));
        }
        docs
    }

    #[test]
    fn qp_counts_match_membership_scan() {
        let docs = movie_corpus();
        let index = build_index(&docs);
        let table = enumerate_fvps(&docs);
        let ranked = retrieve(&toks("funny"), &index, None);
        assert_eq!(ranked.len(), 7);
        let comedy = table.find("genre", "Comedy").unwrap();
        let qp = qp_features(&ranked, comedy, table.get(comedy), &table.doc_fvps);
        // m00, m03, m06 are the funny comedies
        assert_eq!(qp.df10, 3.0);
        assert_eq!(qp.df10, qp.df100);
        assert_eq!(qp.df100, qp.df1000);
        assert_eq!(qp.df1000, qp.df_all);
        assert_eq!(qp.dfidf100, qp.df100 * table.get(comedy).idf);

        let batch = qp_counts(&ranked, &table.doc_fvps);
        assert_eq!(batch[&comedy], [3, 3, 3, 3]);

        let none = retrieve(&toks("zzz"), &index, None);
        assert_eq!(qp_features(&none, comedy, table.get(comedy), &table.doc_fvps), QpFeatures::default());
    }

    #[test]
    fn extract_populates_static_features_without_overlap() {
        let docs = movie_corpus();
        let index = build_index(&docs);
        let table = enumerate_fvps(&docs);
        let stats = CorpusStats::from_documents(&docs);
        let layout = FeatureLayout::from_table(&table);
        let ctx = FeatureContext {
            stats: &stats,
            table: &table,
            layout: &layout,
            doc_fvps: &table.doc_fvps,
        };
        let q = toks("unrelated words");
        let ranked = retrieve(&q, &index, None);
        let drama = table.find("genre", "Drama").unwrap();
        let v = extract_vector(&q, drama, &ranked, &ctx).unwrap();
        assert_eq!(v.qv_bm25, 0.0);
        assert_eq!(v.qv_cossim, 0.0);
        assert_eq!(v.qp, QpFeatures::default());
        assert_eq!(v.f_num_values, 2);
        assert_eq!(v.f_num_occrs, 12);
        assert_eq!(v.p_num_docs, 8);
        assert_eq!(v.v_length, 1);
        let row = v.to_row();
        assert_eq!(row.len(), layout.width());
        assert_eq!(layout.names().len(), layout.width());
        let genre_col = layout.names().iter().position(|n| n == "F.Type=genre").unwrap();
        assert_eq!(row[genre_col], 1.0);
        assert_eq!(row[genre_col + 1], 0.0);

        let narrow = FeatureLayout::new(vec!["year".into()]);
        let bad = FeatureContext { layout: &narrow, ..ctx };
        assert!(matches!(extract_vector(&q, drama, &ranked, &bad), Err(Error::UnknownFacet(_))));
    }

    #[test]
    fn single_facet_one_hot() {
        let layout = FeatureLayout::new(vec!["genre".into()]);
        assert_eq!(layout.facet_index("genre").unwrap(), 0);
        assert_eq!(layout.width(), 22);
    }
}
