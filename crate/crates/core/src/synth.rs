//! Synthetic movie-like corpora with planted query intents.
//!
//! Each query picks a few facet-value pairs as its intent, writes their
//! values into the title (plus optional noise tokens) and plants those pairs
//! into a subset of documents. Planted documents also pick up "decoy" pairs:
//! values that share a token with the title and co-occur with the intent,
//! so neither text match nor co-occurrence alone separates the intent.

use std::collections::{BTreeSet, HashSet};

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Facet, QueryTopic};
use crate::error::{Error, Result};
use crate::eval::Qrels;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValueKind {
    /// One pseudo-word, or a curated word list when one exists for the facet.
    Word,
    /// "First Last" from shared first- and last-name pools.
    Person,
    /// Four-digit year.
    Year,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FacetSchema {
    pub name: String,
    pub kind: ValueKind,
    pub vocab_size: usize,
    pub min_values: usize,
    pub max_values: usize,
}

impl FacetSchema {
    pub fn new(name: &str, kind: ValueKind, vocab_size: usize, min_values: usize, max_values: usize) -> Self {
        FacetSchema {
            name: name.to_string(),
            kind,
            vocab_size,
            min_values,
            max_values,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_docs: usize,
    pub num_queries: usize,
    pub facets: Vec<FacetSchema>,
    pub min_relevant: usize,
    pub max_relevant: usize,
    /// Chance of a noise token after each intent value in a title.
    pub noise: f64,
    pub seed: u64,
    pub min_planted: usize,
    pub max_planted: usize,
    /// Chance a planted document receives each intent pair.
    pub plant_rate: f64,
    /// Decoy pairs planted alongside each intent.
    pub decoys_per_query: usize,
    /// Chance a planted document receives each decoy pair.
    pub decoy_rate: f64,
    /// Zipf exponent for value popularity.
    pub zipf_exponent: f64,
    /// Documents that carry an intent value under a different facet.
    pub min_misplaced_docs: usize,
    pub max_misplaced_docs: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_docs: 5000,
            num_queries: 30,
            facets: vec![
                FacetSchema::new("genre", ValueKind::Word, GENRES.len(), 1, 3),
                FacetSchema::new("director", ValueKind::Person, 900, 1, 1),
                FacetSchema::new("actor", ValueKind::Person, 3000, 2, 5),
                FacetSchema::new("country", ValueKind::Word, 40, 1, 2),
                FacetSchema::new("language", ValueKind::Word, 30, 1, 1),
                FacetSchema::new("year", ValueKind::Year, 60, 1, 1),
                FacetSchema::new("keyword", ValueKind::Word, 200, 0, 3),
            ],
            min_relevant: 2,
            max_relevant: 4,
            noise: 0.3,
            seed: 7,
            min_planted: 8,
            max_planted: 60,
            plant_rate: 0.75,
            decoys_per_query: 5,
            decoy_rate: 1.0,
            zipf_exponent: 1.0,
            min_misplaced_docs: 2,
            max_misplaced_docs: 6,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.num_queries < 10 {
            return bad(format!("need at least 10 queries for cross-validation, got {}", self.num_queries));
        }
        if self.num_docs == 0 {
            return bad("need at least one document".into());
        }
        if !(0.0..1.0).contains(&self.noise) {
            return bad(format!("noise {} not in [0, 1)", self.noise));
        }
        if self.min_relevant == 0 || self.min_relevant > self.max_relevant {
            return bad("relevant pairs per query must be a non-empty range starting at 1 or more".into());
        }
        if self.max_relevant > self.facets.len() {
            return bad(format!(
                "{} relevant pairs per query need as many facets, schema has {}",
                self.max_relevant,
                self.facets.len()
            ));
        }
        if self.min_planted == 0 || self.min_planted > self.max_planted || self.max_planted > self.num_docs {
            return bad("planted document range must be non-empty and fit the corpus".into());
        }
        for f in &self.facets {
            if f.vocab_size == 0 || f.min_values > f.max_values || f.max_values == 0 {
                return bad(format!("facet `{}` has an empty vocabulary or value range", f.name));
            }
            if f.kind == ValueKind::Person && f.vocab_size > FIRST_SYLLABLES.len().pow(2) * LAST_SYLLABLES.len().pow(2) {
                return bad(format!("facet `{}` asks for more distinct people than the name pools hold", f.name));
            }
        }
        if self.min_misplaced_docs > self.max_misplaced_docs || self.max_misplaced_docs > self.num_docs {
            return bad("misplaced document range must be ordered and fit the corpus".into());
        }
        for p in [self.plant_rate, self.decoy_rate] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("rate {p} not in [0, 1]"));
            }
        }
        Ok(())
    }
}

pub struct SynthData {
    pub docs: Vec<Document>,
    pub topics: Vec<QueryTopic>,
    pub qrels: Qrels,
}

const GENRES: [&str; 24] = [
    "Drama", "Comedy", "Thriller", "Action", "Romance", "Crime", "Horror", "Adventure", "Documentary", "Family",
    "Mystery", "Fantasy", "Animation", "Western", "Musical", "War", "Biography", "History", "Sport", "Music",
    "Noir", "Satire", "Melodrama", "Superhero",
];
const FIRST_SYLLABLES: [&str; 8] = ["an", "bel", "cor", "dan", "el", "fra", "gio", "ha"];
const LAST_SYLLABLES: [&str; 10] = ["berg", "son", "vik", "mar", "lo", "ten", "rey", "quist", "dal", "ford"];
const WORD_SYLLABLES: [&str; 16] = [
    "ka", "lu", "mo", "ri", "sa", "te", "vo", "zi", "pa", "ne", "do", "gu", "shi", "ra", "fe", "tor",
];

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Deterministic pseudo-word for `index`, from `syllables`.
fn pseudo_word(mut index: usize, syllables: &[&str], min_len: usize) -> String {
    let base = syllables.len();
    let mut out = String::new();
    let mut parts = 0;
    loop {
        out.push_str(syllables[index % base]);
        index /= base;
        parts += 1;
        if index == 0 && parts >= min_len {
            break;
        }
        if index > 0 {
            index -= 1;
        }
    }
    out
}

/// Value vocabulary for one facet; entry 0 is the most popular.
fn vocabulary(schema: &FacetSchema, facet_index: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    match schema.kind {
        ValueKind::Year => (0..schema.vocab_size).map(|i| format!("{}", 1950 + i)).collect(),
        ValueKind::Word if schema.name == "genre" && schema.vocab_size <= GENRES.len() => {
            GENRES[..schema.vocab_size].iter().map(|s| s.to_string()).collect()
        }
        ValueKind::Word => (0..schema.vocab_size)
            .map(|i| capitalize(&pseudo_word(i * 7 + facet_index, &WORD_SYLLABLES, 3)))
            .collect(),
        ValueKind::Person => {
            // shared name pools: the same person may direct and act
            let firsts: Vec<String> = (0..FIRST_SYLLABLES.len().pow(2))
                .map(|i| capitalize(&pseudo_word(i, &FIRST_SYLLABLES, 2)))
                .collect();
            let lasts: Vec<String> = (0..LAST_SYLLABLES.len().pow(2))
                .map(|i| capitalize(&pseudo_word(i, &LAST_SYLLABLES, 2)))
                .collect();
            let mut people: Vec<String> = firsts
                .iter()
                .flat_map(|f| lasts.iter().map(move |l| format!("{f} {l}")))
                .collect();
            people.shuffle(&mut ChaCha8Rng::seed_from_u64(0x5eed));
            people.truncate(schema.vocab_size);
            let _ = rng;
            people
        }
    }
}

struct Zipf {
    dist: WeightedIndex<f64>,
}

impl Zipf {
    fn new(n: usize, exponent: f64) -> Self {
        let weights: Vec<f64> = (0..n).map(|r| 1.0 / ((r + 1) as f64).powf(exponent)).collect();
        Zipf {
            dist: WeightedIndex::new(weights).expect("non-empty vocabulary"),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        self.dist.sample(rng)
    }
}

/// Adds `value` to the document's facet. Single-valued facets get their
/// value replaced unless it is some query's intent.
fn plant(doc: &mut Document, schema: &FacetSchema, value: &str, intents: &HashSet<(String, String)>) {
    match doc.facets.iter_mut().find(|f| f.name == schema.name) {
        Some(f) if f.values.iter().any(|v| v == value) => {}
        Some(f)
            if schema.max_values == 1
                && !f.values.is_empty()
                && !intents.contains(&(schema.name.clone(), f.values[0].clone())) =>
        {
            f.values[0] = value.to_string()
        }
        Some(f) => f.values.push(value.to_string()),
        None => doc.facets.push(Facet::new(schema.name.clone(), [value])),
    }
}

fn tokens_of(value: &str) -> BTreeSet<String> {
    crate::corpus::tokenize(value).into_iter().collect()
}

pub fn generate_synthetic(config: &SynthConfig) -> Result<SynthData> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let vocabs: Vec<Vec<String>> = config
        .facets
        .iter()
        .enumerate()
        .map(|(i, f)| vocabulary(f, i, &mut rng))
        .collect();
    let zipfs: Vec<Zipf> = vocabs.iter().map(|v| Zipf::new(v.len(), config.zipf_exponent)).collect();

    // free text: filler words plus a sprinkling of facet-value tokens
    let filler: Vec<String> = (0..2000).map(|i| pseudo_word(i + 101, &WORD_SYLLABLES, 2)).collect();
    let filler_zipf = Zipf::new(filler.len(), config.zipf_exponent);
    let value_tokens: Vec<String> = vocabs
        .iter()
        .flatten()
        .flat_map(|v| crate::corpus::tokenize(v))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let width = config.num_docs.to_string().len().max(5);
    let mut docs: Vec<Document> = (0..config.num_docs)
        .map(|i| {
            let facets = config
                .facets
                .iter()
                .zip(&vocabs)
                .zip(&zipfs)
                .filter_map(|((schema, vocab), zipf)| {
                    let n = rng.gen_range(schema.min_values..=schema.max_values);
                    let mut picked: Vec<usize> = Vec::with_capacity(n);
                    for _ in 0..n * 4 {
                        if picked.len() == n {
                            break;
                        }
                        let v = zipf.sample(&mut rng);
                        if !picked.contains(&v) {
                            picked.push(v);
                        }
                    }
                    (!picked.is_empty()).then(|| Facet::new(schema.name.clone(), picked.iter().map(|&v| vocab[v].clone())))
                })
                .collect();
            let len = rng.gen_range(8..=25);
            let text: Vec<&str> = (0..len)
                .map(|_| {
                    if rng.gen_bool(0.15) {
                        value_tokens[rng.gen_range(0..value_tokens.len())].as_str()
                    } else {
                        filler[filler_zipf.sample(&mut rng)].as_str()
                    }
                })
                .collect();
            Document::new(format!("m{i:0width$}"), facets, Some(text.join(" ")))
        })
        .collect();

    let mut topics = Vec::with_capacity(config.num_queries);
    let mut qrels = Qrels::new();
    let mut intents_so_far: HashSet<(String, String)> = HashSet::new();
    let qwidth = config.num_queries.to_string().len().max(2);
    for q in 0..config.num_queries {
        let qid = format!("q{:0qwidth$}", q + 1);
        let n_rel = rng.gen_range(config.min_relevant..=config.max_relevant);
        // lead with a person when the schema has one: names are where
        // partial matches, and so decoys, come from
        let people: Vec<usize> = (0..config.facets.len())
            .filter(|&f| config.facets[f].kind == ValueKind::Person)
            .collect();
        let mut facet_ids: Vec<usize> = people.choose(&mut rng).copied().into_iter().collect();
        let mut rest: Vec<usize> = (0..config.facets.len()).filter(|f| !facet_ids.contains(f)).collect();
        rest.shuffle(&mut rng);
        facet_ids.extend(rest.into_iter().take(n_rel - facet_ids.len()));
        facet_ids.sort();

        let intent: Vec<(usize, String)> = facet_ids
            .iter()
            .map(|&f| (f, vocabs[f][zipfs[f].sample(&mut rng)].clone()))
            .collect();
        intents_so_far.extend(intent.iter().map(|(f, v)| (config.facets[*f].name.clone(), v.clone())));

        let mut title_parts: Vec<String> = Vec::new();
        let mut order: Vec<usize> = (0..intent.len()).collect();
        order.shuffle(&mut rng);
        for &i in &order {
            title_parts.push(intent[i].1.clone());
            if rng.gen_bool(config.noise) {
                title_parts.push(noise_token(&vocabs, &config.facets, &mut rng));
            }
        }
        let title = title_parts.join(" ");
        let title_tokens = tokens_of(&title);

        // decoys share a title token with the intent but are not part of it
        let mut decoys: Vec<(usize, String)> = Vec::new();
        let mut attempts = 0;
        while decoys.len() < config.decoys_per_query && attempts < 200 {
            attempts += 1;
            let f = rng.gen_range(0..config.facets.len());
            let value = &vocabs[f][rng.gen_range(0..vocabs[f].len())];
            if intent.iter().any(|(fi, v)| *fi == f && v == value) || decoys.iter().any(|(fi, v)| *fi == f && v == value) {
                continue;
            }
            let tokens = tokens_of(value);
            if tokens.is_disjoint(&title_tokens) || tokens.is_subset(&title_tokens) {
                continue;
            }
            decoys.push((f, value.clone()));
        }

        // the same value under another facet, in a few unrelated documents
        if config.max_misplaced_docs > 0 {
            for (f, value) in &intent {
                let kind = config.facets[*f].kind;
                let others: Vec<usize> = (0..config.facets.len())
                    .filter(|&g| g != *f && (config.facets[g].kind == kind || config.facets[g].name == "keyword"))
                    .collect();
                let Some(&g) = others.choose(&mut rng) else { continue };
                let n = rng.gen_range(config.min_misplaced_docs..=config.max_misplaced_docs);
                for d in rand::seq::index::sample(&mut rng, docs.len(), n) {
                    plant(&mut docs[d], &config.facets[g], value, &intents_so_far);
                }
            }
        }

        let n_planted = rng.gen_range(config.min_planted..=config.max_planted);
        let planted: Vec<usize> = rand::seq::index::sample(&mut rng, docs.len(), n_planted).into_vec();
        for &d in &planted {
            for (f, value) in &intent {
                if rng.gen_bool(config.plant_rate) {
                    plant(&mut docs[d], &config.facets[*f], value, &intents_so_far);
                }
            }
            for (f, value) in &decoys {
                if rng.gen_bool(config.decoy_rate) {
                    plant(&mut docs[d], &config.facets[*f], value, &intents_so_far);
                }
            }
        }

        let description = intent
            .iter()
            .map(|(f, v)| format!("{}: {v}", config.facets[*f].name))
            .collect::<Vec<_>>()
            .join("; ");
        for (f, value) in &intent {
            qrels.insert(&qid, &config.facets[*f].name, value, 1)?;
        }
        topics.push(QueryTopic {
            qid,
            title,
            description: Some(description),
            narrative: None,
        });
    }

    Ok(SynthData { docs, topics, qrels })
}

fn noise_token(vocabs: &[Vec<String>], schemas: &[FacetSchema], rng: &mut ChaCha8Rng) -> String {
    let f = rng.gen_range(0..schemas.len());
    let value = &vocabs[f][rng.gen_range(0..vocabs[f].len())];
    let tokens = crate::corpus::tokenize(value);
    let tok = &tokens[rng.gen_range(0..tokens.len())];
    capitalize(tok)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokenize, to_jsonl};

    fn small() -> SynthConfig {
        SynthConfig {
            num_docs: 300,
            num_queries: 12,
            max_planted: 30,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_synthetic(&small()).unwrap();
        let b = generate_synthetic(&small()).unwrap();
        assert_eq!(to_jsonl(&a.docs).unwrap(), to_jsonl(&b.docs).unwrap());
        assert_eq!(to_jsonl(&a.topics).unwrap(), to_jsonl(&b.topics).unwrap());
        assert_eq!(a.qrels.to_tsv().unwrap(), b.qrels.to_tsv().unwrap());
        let c = generate_synthetic(&SynthConfig { seed: 8, ..small() }).unwrap();
        assert_ne!(to_jsonl(&a.topics).unwrap(), to_jsonl(&c.topics).unwrap());
    }

    #[test]
    fn noiseless_titles_are_exactly_the_intent() {
        let data = generate_synthetic(&SynthConfig { noise: 0.0, ..small() }).unwrap();
        for topic in &data.topics {
            let mut expected: Vec<String> = data
                .qrels
                .relevant(&topic.qid)
                .iter()
                .flat_map(|(_, v)| tokenize(v))
                .collect();
            let mut got = topic.title_tokens();
            expected.sort();
            got.sort();
            assert_eq!(got, expected, "{}", topic.title);
        }
    }

    #[test]
    fn qrels_row_bounds() {
        let data = generate_synthetic(&SynthConfig {
            num_queries: 30,
            ..small()
        })
        .unwrap();
        assert!((60..=120).contains(&data.qrels.len()));
        for t in &data.topics {
            let n = data.qrels.num_relevant(&t.qid);
            assert!((2..=4).contains(&n));
        }
    }

    #[test]
    fn relevant_pairs_exist_in_the_corpus() {
        let data = generate_synthetic(&small()).unwrap();
        for t in &data.topics {
            for (facet, value) in data.qrels.relevant(&t.qid) {
                let carriers = data
                    .docs
                    .iter()
                    .filter(|d| d.facets.iter().any(|f| f.name == facet && f.values.contains(&value)))
                    .count();
                assert!(carriers > 0, "{facet}: {value}");
            }
        }
        for d in &data.docs {
            d.validate().unwrap();
        }
    }

    #[test]
    fn infeasible_configs() {
        assert!(generate_synthetic(&SynthConfig { num_queries: 9, ..small() }).is_err());
        assert!(generate_synthetic(&SynthConfig { max_relevant: 8, ..small() }).is_err());
        assert!(generate_synthetic(&SynthConfig { noise: 1.0, ..small() }).is_err());
        assert!(generate_synthetic(&SynthConfig { max_planted: 301, ..small() }).is_err());
    }
}
