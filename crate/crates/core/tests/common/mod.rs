//! Random fixtures and a brute-force feature oracle computed straight from
//! the raw documents, sharing no code with the library beyond `tokenize`.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::prelude::*;

use facetrank::corpus::{tokenize, Document, Facet, QueryTopic};

const WORDS: [&str; 12] = [
    "action", "movie", "woody", "allen", "comedy", "drama", "new", "york", "love", "war", "genre", "actor",
];
const FACETS: [&str; 5] = ["genre", "director", "actor", "country", "year"];

pub fn random_corpus(rng: &mut impl Rng, max_docs: usize, max_facets: usize) -> Vec<Document> {
    let n = rng.gen_range(1..=max_docs);
    let facet_pool = &FACETS[..rng.gen_range(1..=max_facets.min(FACETS.len()))];
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(rng);
    ids.into_iter()
        .map(|i| {
            let mut names: Vec<&str> = facet_pool.to_vec();
            names.shuffle(rng);
            names.truncate(rng.gen_range(0..=names.len()));
            let facets = names
                .into_iter()
                .map(|name| {
                    let mut values: Vec<String> = Vec::new();
                    for _ in 0..rng.gen_range(1..=3) {
                        let words: Vec<&str> = (0..rng.gen_range(1..=2)).map(|_| WORDS[rng.gen_range(0..6)]).collect();
                        let mut v = words.join(" ");
                        if rng.gen_bool(0.5) {
                            v = v.to_uppercase();
                        }
                        if !values.iter().any(|x| x.trim() == v) {
                            values.push(if rng.gen_bool(0.1) { format!(" {v} ") } else { v });
                        }
                    }
                    Facet::new(name, values)
                })
                .collect();
            let text = rng.gen_bool(0.7).then(|| {
                (0..rng.gen_range(0..6))
                    .map(|_| WORDS[rng.gen_range(0..WORDS.len())])
                    .collect::<Vec<_>>()
                    .join(" ")
            });
            Document::new(format!("d{i:02}"), facets, text)
        })
        .collect()
}

pub fn random_query(rng: &mut impl Rng, qid: &str) -> QueryTopic {
    let words: Vec<&str> = (0..rng.gen_range(0..=5))
        .map(|_| {
            if rng.gen_bool(0.1) {
                "unseen"
            } else {
                WORDS[rng.gen_range(0..WORDS.len())]
            }
        })
        .collect();
    QueryTopic::new(qid, words.join(" "))
}

fn doc_tokens(doc: &Document) -> Vec<String> {
    let mut text = String::new();
    for f in &doc.facets {
        for v in &f.values {
            text.push_str(v);
            text.push(' ');
        }
    }
    text.push_str(doc.free_text.as_deref().unwrap_or(""));
    tokenize(&text)
}

fn count(tokens: &[String], t: &str) -> f64 {
    tokens.iter().filter(|x| *x == t).count() as f64
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn carries(doc: &Document, facet: &str, value: &str) -> bool {
    doc.facets
        .iter()
        .any(|f| f.name.trim() == facet && f.values.iter().any(|v| v.trim() == value))
}

/// Every feature of `(title, facet, value)` as `(column name, value)`, in
/// the library's column order.
pub fn brute_features(docs: &[Document], title: &str, facet: &str, value: &str) -> Vec<(String, f64)> {
    let (k1, b) = (1.2, 0.75);
    let n = docs.len() as f64;
    let tokens: Vec<Vec<String>> = docs.iter().map(doc_tokens).collect();
    let idf = |t: &str| {
        let df = tokens.iter().filter(|d| d.iter().any(|x| x == t)).count() as f64;
        ((n + 1.0) / (df + 1.0)).ln()
    };
    let q = tokenize(title);

    let mut pairs: BTreeSet<(String, String)> = BTreeSet::new();
    let mut occurrences: BTreeMap<String, usize> = BTreeMap::new();
    for d in docs {
        for f in &d.facets {
            for v in &f.values {
                pairs.insert((f.name.trim().to_string(), v.trim().to_string()));
                *occurrences.entry(f.name.trim().to_string()).or_default() += 1;
            }
        }
    }
    let facet_names: Vec<&String> = occurrences.keys().collect();
    let num_values = pairs.iter().filter(|(f, _)| f == facet).count() as f64;
    let value_avgdl = mean(&pairs.iter().map(|(_, v)| tokenize(v).len() as f64).collect::<Vec<_>>());

    let v = tokenize(value);
    let num_docs = docs.iter().filter(|d| carries(d, facet, value)).count() as f64;
    let p_idf = (n / num_docs).ln();

    let facet_tokens = tokenize(facet);
    let qf_tfidf: f64 = q.iter().map(|t| count(&facet_tokens, t) * idf(t)).sum();
    let qv_tfidf: f64 = q.iter().map(|t| count(&v, t) * idf(t)).sum();
    let dl = v.len() as f64;
    let qv_bm25: f64 = q
        .iter()
        .map(|t| {
            let tf = count(&v, t);
            if tf == 0.0 {
                0.0
            } else {
                idf(t) * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / value_avgdl))
            }
        })
        .sum();
    let shared: BTreeSet<&String> = q.iter().filter(|t| v.contains(t)).collect();
    let qv_sidf: f64 = shared.iter().map(|t| idf(t)).sum();
    let terms: BTreeSet<&String> = q.iter().chain(&v).collect();
    let (mut dot, mut nq, mut nv) = (0.0, 0.0, 0.0);
    for t in terms {
        let wq = count(&q, t) * idf(t);
        let wv = count(&v, t) * idf(t);
        dot += wq * wv;
        nq += wq * wq;
        nv += wv * wv;
    }
    let cossim = if nq > 0.0 && nv > 0.0 { dot / (nq.sqrt() * nv.sqrt()) } else { 0.0 };

    // retrieval over the document text, ties by id
    let avgdl = tokens.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let mut ranked: Vec<(f64, &str, usize)> = Vec::new();
    for (i, d) in tokens.iter().enumerate() {
        if !q.iter().any(|t| d.contains(t)) {
            continue;
        }
        let dl = d.len() as f64;
        let mut score = 0.0;
        for t in &q {
            let tf = count(d, t);
            if tf > 0.0 {
                let df = tokens.iter().filter(|x| x.contains(t)).count() as f64;
                let w = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                score += w * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl));
            }
        }
        ranked.push((score, docs[i].id.as_str(), i));
    }
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
    let df_at = |depth: usize| {
        ranked
            .iter()
            .take(depth)
            .filter(|(_, _, i)| carries(&docs[*i], facet, value))
            .count() as f64
    };

    let mut out = vec![
        ("Q.Length".to_string(), q.len() as f64),
        ("Q.AvgIDF".to_string(), mean(&q.iter().map(|t| idf(t)).collect::<Vec<_>>())),
    ];
    for f in &facet_names {
        out.push((format!("F.Type={f}"), if f.as_str() == facet { 1.0 } else { 0.0 }));
    }
    let mut push = |name: &str, x: f64| out.push((name.to_string(), x));
    push("F.NumValues", num_values);
    push("F.NumOccrs", occurrences[facet] as f64);
    push("V.Length", v.len() as f64);
    push("V.AvgIDF", mean(&v.iter().map(|t| idf(t)).collect::<Vec<_>>()));
    push("P.NumDocs", num_docs);
    push("P.IDF", p_idf);
    push("QF.TFIDF", qf_tfidf);
    push("QV.TFIDF", qv_tfidf);
    push("QV.BM25", qv_bm25);
    push("QV.SIDF", qv_sidf);
    push("QV.CosSim", cossim);
    for (label, depth) in [("10", 10), ("100", 100), ("1000", 1000), ("All", usize::MAX)] {
        let df = df_at(depth);
        push(&format!("QP.DF{label}"), df);
        push(&format!("QP.DFIDF{label}"), df * p_idf);
    }
    out
}
