//! IR metrics over per-query rankings of facet-value pairs, relevance
//! judgments and runs, by-query cross-validation and the paired t-test.
//!
//! Unjudged items count as non-relevant. Queries without a relevant item
//! are left out of every average.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureTable, Instance};
use crate::error::{Error, Result};
use crate::features::SINGLE_FEATURE_RANKERS;
use crate::gbt::{self, GbtConfig, RankingGroup};
use crate::stats::{paired_t_test_slices, TTest};
use crate::tsv;

/// Default number of cross-validation folds.
pub const DEFAULT_FOLDS: usize = 10;
pub const DEFAULT_VALIDATION_FRACTION: f64 = 0.2;

/// Average precision of a ranking given as relevance flags by rank.
/// Relevant items missing from the ranking contribute zero.
pub fn average_precision(ranking: &[bool], num_relevant: usize) -> f64 {
    if num_relevant == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, &rel) in ranking.iter().enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    sum / num_relevant as f64
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub ap: f64,
    pub r_prec: f64,
    pub p5: f64,
    pub p_r1: f64,
}

fn precision_at(ranking: &[bool], k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    ranking.iter().take(k).filter(|&&r| r).count() as f64 / k as f64
}

pub fn query_metrics(ranking: &[bool], num_relevant: usize) -> QueryMetrics {
    let retrieved = ranking.iter().filter(|&&r| r).count();
    // P@R=1: precision at the last retrieved relevant item
    let p_r1 = match ranking.iter().rposition(|&r| r) {
        Some(last) => retrieved as f64 / (last + 1) as f64,
        None => 0.0,
    };
    QueryMetrics {
        ap: average_precision(ranking, num_relevant),
        r_prec: precision_at(ranking, num_relevant),
        p5: precision_at(ranking, 5),
        p_r1,
    }
}

/// Mean metrics over queries, with the per-query values they came from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub map: f64,
    pub r_prec: f64,
    pub p5: f64,
    pub p_r1: f64,
    pub per_query: BTreeMap<String, QueryMetrics>,
}

impl Metrics {
    pub fn from_per_query(per_query: BTreeMap<String, QueryMetrics>) -> Self {
        let n = per_query.len().max(1) as f64;
        let mean = |f: fn(&QueryMetrics) -> f64| per_query.values().map(f).sum::<f64>() / n;
        Metrics {
            map: mean(|m| m.ap),
            r_prec: mean(|m| m.r_prec),
            p5: mean(|m| m.p5),
            p_r1: mean(|m| m.p_r1),
            per_query,
        }
    }

    pub fn per_query_ap(&self) -> BTreeMap<String, f64> {
        self.per_query.iter().map(|(q, m)| (q.clone(), m.ap)).collect()
    }

    /// Mean of several metric sets (e.g. one per fold); per-query values
    /// are pooled.
    pub fn mean_of(parts: &[Metrics]) -> Self {
        let n = parts.len().max(1) as f64;
        let mut per_query = BTreeMap::new();
        for p in parts {
            per_query.extend(p.per_query.iter().map(|(k, v)| (k.clone(), *v)));
        }
        Metrics {
            map: parts.iter().map(|m| m.map).sum::<f64>() / n,
            r_prec: parts.iter().map(|m| m.r_prec).sum::<f64>() / n,
            p5: parts.iter().map(|m| m.p5).sum::<f64>() / n,
            p_r1: parts.iter().map(|m| m.p_r1).sum::<f64>() / n,
            per_query,
        }
    }
}

pub type FvpKey = (String, String);

/// Binary judgments on (query, facet, value).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Qrels {
    judgments: BTreeMap<String, BTreeMap<FvpKey, u8>>,
}

impl Qrels {
    pub fn new() -> Self {
        Qrels::default()
    }

    pub fn insert(&mut self, qid: &str, facet: &str, value: &str, relevance: u8) -> Result<()> {
        let judged = self.judgments.entry(qid.to_string()).or_default();
        match judged.entry((facet.to_string(), value.to_string())) {
            std::collections::btree_map::Entry::Occupied(_) => {
                Err(Error::DuplicateId(format!("{qid}\t{facet}\t{value}")))
            }
            std::collections::btree_map::Entry::Vacant(slot) => {
                slot.insert(relevance.min(1));
                Ok(())
            }
        }
    }

    pub fn relevance(&self, qid: &str, facet: &str, value: &str) -> Option<u8> {
        self.judgments
            .get(qid)?
            .get(&(facet.to_string(), value.to_string()))
            .copied()
    }

    pub fn is_relevant(&self, qid: &str, facet: &str, value: &str) -> bool {
        self.relevance(qid, facet, value) == Some(1)
    }

    pub fn num_relevant(&self, qid: &str) -> usize {
        self.judgments
            .get(qid)
            .map_or(0, |j| j.values().filter(|&&r| r == 1).count())
    }

    pub fn relevant(&self, qid: &str) -> BTreeSet<FvpKey> {
        self.judgments.get(qid).map_or_else(BTreeSet::new, |j| {
            j.iter().filter(|(_, &r)| r == 1).map(|(k, _)| k.clone()).collect()
        })
    }

    pub fn qids(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.judgments.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `qid TAB facet TAB value TAB relevance`, one judgment per row.
    pub fn to_tsv(&self) -> Result<String> {
        let mut out = String::new();
        for (qid, judged) in &self.judgments {
            for ((facet, value), rel) in judged {
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{rel}",
                    tsv::field(qid)?,
                    tsv::field(facet)?,
                    tsv::field(value)?
                );
            }
        }
        Ok(out)
    }

    pub fn from_tsv(text: &str, source: &str) -> Result<Self> {
        let mut qrels = Qrels::new();
        for (line_no, line) in tsv::rows(text) {
            let f = tsv::split_row(line, 4, source, line_no)?;
            let rel: u8 = tsv::parse_field(f[3], "relevance", source, line_no)?;
            qrels
                .insert(f[0], f[1], f[2], rel)
                .map_err(|_| Error::parse(source, line_no, "duplicate judgment"))?;
        }
        Ok(qrels)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunEntry {
    pub qid: String,
    pub facet: String,
    pub value: String,
    pub rank: usize,
    pub score: f64,
    pub tag: String,
}

/// Ranked pairs per query: `qid TAB facet TAB value TAB rank TAB score TAB tag`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Run {
    pub entries: Vec<RunEntry>,
}

impl Run {
    pub fn to_tsv(&self) -> Result<String> {
        let mut out = String::new();
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                tsv::field(&e.qid)?,
                tsv::field(&e.facet)?,
                tsv::field(&e.value)?,
                e.rank,
                tsv::format_g9(e.score),
                tsv::field(&e.tag)?
            );
        }
        Ok(out)
    }

    pub fn from_tsv(text: &str, source: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (line_no, line) in tsv::rows(text) {
            let f = tsv::split_row(line, 6, source, line_no)?;
            entries.push(RunEntry {
                qid: f[0].to_string(),
                facet: f[1].to_string(),
                value: f[2].to_string(),
                rank: tsv::parse_field(f[3], "rank", source, line_no)?,
                score: tsv::parse_field(f[4], "score", source, line_no)?,
                tag: f[5].to_string(),
            });
        }
        Ok(Run { entries })
    }

    /// Per-query rankings ordered by rank.
    pub fn rankings(&self) -> BTreeMap<&str, Vec<&RunEntry>> {
        let mut by_query: BTreeMap<&str, Vec<&RunEntry>> = BTreeMap::new();
        for e in &self.entries {
            by_query.entry(e.qid.as_str()).or_default().push(e);
        }
        for list in by_query.values_mut() {
            list.sort_by(|a, b| {
                a.rank
                    .cmp(&b.rank)
                    .then_with(|| (&a.facet, &a.value).cmp(&(&b.facet, &b.value)))
            });
        }
        by_query
    }
}

/// Scores every query in the run that has at least one relevant judgment.
pub fn evaluate_run(run: &Run, qrels: &Qrels) -> Metrics {
    let mut per_query = BTreeMap::new();
    for (qid, ranking) in run.rankings() {
        let num_relevant = qrels.num_relevant(qid);
        if num_relevant == 0 {
            continue;
        }
        let flags: Vec<bool> = ranking
            .iter()
            .map(|e| qrels.is_relevant(qid, &e.facet, &e.value))
            .collect();
        per_query.insert(qid.to_string(), query_metrics(&flags, num_relevant));
    }
    Metrics::from_per_query(per_query)
}

/// Orders instances by score descending, ties by `(facet, value)`.
pub fn rank_instances(instances: &[&Instance], scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..instances.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b].total_cmp(&scores[a]).then_with(|| {
            (&instances[a].facet, &instances[a].value).cmp(&(&instances[b].facet, &instances[b].value))
        })
    });
    order
}

fn ranking_flags(instances: &[&Instance], scores: &[f64], qrels: &Qrels) -> Vec<bool> {
    rank_instances(instances, scores)
        .into_iter()
        .map(|i| {
            let inst = instances[i];
            qrels.is_relevant(&inst.qid, &inst.facet, &inst.value)
        })
        .collect()
}

/// Per-query AP maps must cover the same queries.
pub fn paired_t_test(per_query_a: &BTreeMap<String, f64>, per_query_b: &BTreeMap<String, f64>) -> Result<TTest> {
    if per_query_a.len() != per_query_b.len() || per_query_a.keys().any(|q| !per_query_b.contains_key(q)) {
        return Err(Error::DegenerateComparison("the two systems cover different queries".into()));
    }
    let a: Vec<f64> = per_query_a.values().copied().collect();
    let b: Vec<f64> = per_query_a.keys().map(|q| per_query_b[q]).collect();
    paired_t_test_slices(&a, &b)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    pub seed: u64,
    pub validation_fraction: f64,
    pub gbt: GbtConfig,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: DEFAULT_FOLDS,
            seed: 0,
            validation_fraction: DEFAULT_VALIDATION_FRACTION,
            gbt: GbtConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub test_queries: Vec<String>,
    pub train_queries: Vec<String>,
    pub validation_queries: Vec<String>,
    pub best_iteration: usize,
    pub gbt: Metrics,
    pub baselines: BTreeMap<String, Metrics>,
    pub relative_influence: Vec<(String, f64)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<FoldReport>,
    /// Fold-averaged GBT metrics; `per_query` pools every test query.
    pub gbt: Metrics,
    pub baselines: BTreeMap<String, Metrics>,
    /// Relative influence averaged over folds.
    pub relative_influence: Vec<(String, f64)>,
}

impl CvReport {
    /// The single-feature ranker with the highest MAP (name order on ties).
    pub fn best_baseline(&self) -> Option<(&str, &Metrics)> {
        self.baselines
            .iter()
            .fold(None, |acc: Option<(&str, &Metrics)>, (name, m)| match acc {
                Some((_, best)) if best.map >= m.map => acc,
                _ => Some((name.as_str(), m)),
            })
    }
}

/// Splits `items` into validation (last `ceil(frac * n)`, at least one)
/// and training parts.
fn validation_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64).ceil() as usize).max(1)
}

/// Trains on a labeled table: queries with at least one relevant instance
/// are shuffled by `config.seed` and the last `validation_fraction` of them
/// (at least one) picks the stopping iteration.
pub fn train_from_table(table: &FeatureTable, validation_fraction: f64, config: &GbtConfig) -> Result<gbt::TrainOutcome> {
    if !(validation_fraction > 0.0 && validation_fraction < 1.0) {
        return Err(Error::InvalidConfig("validation fraction must be in (0, 1)".into()));
    }
    let groups = table.groups();
    let mut qids: Vec<&str> = groups
        .iter()
        .filter(|g| g.instances.iter().any(|i| i.label == 1))
        .map(|g| g.qid)
        .collect();
    qids.sort();
    if qids.len() < 2 {
        return Err(Error::TooFewQueries { need: 2, have: qids.len() });
    }
    qids.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let n_valid = validation_count(qids.len(), validation_fraction).min(qids.len() - 1);
    let validation_ids: BTreeSet<&str> = qids[qids.len() - n_valid..].iter().copied().collect();
    let train_ids: BTreeSet<&str> = qids[..qids.len() - n_valid].iter().copied().collect();

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut validation = Vec::new();
    for g in &groups {
        if train_ids.contains(g.qid) {
            for i in &g.instances {
                rows.push(i.features.clone());
                labels.push(i.label);
            }
        } else if validation_ids.contains(g.qid) {
            let group_labels: Vec<u8> = g.instances.iter().map(|i| i.label).collect();
            validation.push(RankingGroup::new(
                g.instances.iter().map(|i| i.features.clone()).collect(),
                group_labels,
            ));
        }
    }
    log::info!("training on {} queries, validating on {}", train_ids.len(), validation_ids.len());
    gbt::train(&rows, &labels, &validation, table.feature_names.clone(), config)
}

/// Assigns each query to a fold: shuffled by `seed`, then dealt round-robin.
pub fn assign_folds(qids: &[String], folds: usize, seed: u64) -> Vec<Vec<String>> {
    let mut shuffled: Vec<String> = qids.to_vec();
    shuffled.sort();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![Vec::new(); folds];
    for (i, q) in shuffled.into_iter().enumerate() {
        out[i % folds].push(q);
    }
    out
}

fn sorted_instances<'a>(table: &'a FeatureTable, qid: &str) -> Vec<&'a Instance> {
    let mut v: Vec<&Instance> = table.instances.iter().filter(|i| i.qid == qid).collect();
    v.sort_by(|a, b| (&a.facet, &a.value).cmp(&(&b.facet, &b.value)));
    v
}

/// By-query k-fold cross-validation of the boosted ranker, with the
/// single-feature rankers scored on the same test folds.
pub fn cross_validate(table: &FeatureTable, qrels: &Qrels, config: &CvConfig) -> Result<CvReport> {
    config.gbt.validate()?;
    if config.folds < 2 {
        return Err(Error::InvalidConfig(format!(
            "cross-validation needs at least 2 folds, got {}",
            config.folds
        )));
    }
    if !(config.validation_fraction > 0.0 && config.validation_fraction < 1.0) {
        return Err(Error::InvalidConfig("validation fraction must be in (0, 1)".into()));
    }
    let qualifying: Vec<String> = table
        .groups()
        .into_iter()
        .filter(|g| qrels.num_relevant(g.qid) > 0)
        .map(|g| g.qid.to_string())
        .collect();
    // each fold's remainder must still hold a training and a validation query
    let need = config.folds.max(3);
    if qualifying.len() < need {
        return Err(Error::TooFewQueries {
            need,
            have: qualifying.len(),
        });
    }

    let by_query: BTreeMap<&str, Vec<&Instance>> = qualifying
        .iter()
        .map(|q| (q.as_str(), sorted_instances(table, q)))
        .collect();
    let baseline_columns: Vec<(String, usize)> = SINGLE_FEATURE_RANKERS
        .iter()
        .filter_map(|name| table.feature_index(name).map(|i| (name.to_string(), i)))
        .collect();

    let assignment = assign_folds(&qualifying, config.folds, config.seed);
    let folds = crate::exec::map_range(config.folds, |fold| {
        run_fold(fold, &assignment, &by_query, table, qrels, &baseline_columns, config)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let gbt = Metrics::mean_of(&folds.iter().map(|f| f.gbt.clone()).collect::<Vec<_>>());
    let baselines = baseline_columns
        .iter()
        .map(|(name, _)| {
            let parts: Vec<Metrics> = folds.iter().map(|f| f.baselines[name].clone()).collect();
            (name.clone(), Metrics::mean_of(&parts))
        })
        .collect();
    let mut relative_influence: Vec<(String, f64)> =
        table.feature_names.iter().map(|n| (n.clone(), 0.0)).collect();
    for f in &folds {
        for (slot, (_, v)) in relative_influence.iter_mut().zip(&f.relative_influence) {
            slot.1 += v / folds.len() as f64;
        }
    }
    Ok(CvReport {
        folds,
        gbt,
        baselines,
        relative_influence,
    })
}

fn run_fold(
    fold: usize,
    assignment: &[Vec<String>],
    by_query: &BTreeMap<&str, Vec<&Instance>>,
    table: &FeatureTable,
    qrels: &Qrels,
    baseline_columns: &[(String, usize)],
    config: &CvConfig,
) -> Result<FoldReport> {
    let test = assignment[fold].clone();
    let mut rest: Vec<String> = assignment
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != fold)
        .flat_map(|(_, qs)| qs.iter().cloned())
        .collect();
    rest.sort();
    rest.shuffle(&mut ChaCha8Rng::seed_from_u64(
        config.seed ^ (fold as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15),
    ));
    let n_valid = validation_count(rest.len(), config.validation_fraction);
    if n_valid >= rest.len() {
        return Err(Error::TooFewQueries {
            need: n_valid + 1,
            have: rest.len(),
        });
    }
    let validation_queries = rest.split_off(rest.len() - n_valid);
    let train_queries = rest;

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for q in &train_queries {
        for inst in &by_query[q.as_str()] {
            rows.push(inst.features.clone());
            labels.push(inst.label);
        }
    }
    let validation: Vec<RankingGroup> = validation_queries
        .iter()
        .map(|q| {
            let insts = &by_query[q.as_str()];
            RankingGroup {
                rows: insts.iter().map(|i| i.features.clone()).collect(),
                labels: insts
                    .iter()
                    .map(|i| u8::from(qrels.is_relevant(q, &i.facet, &i.value)))
                    .collect(),
                num_relevant: qrels.num_relevant(q),
            }
        })
        .collect();
    let outcome = gbt::train(&rows, &labels, &validation, table.feature_names.clone(), &config.gbt)?;
    let model = outcome.model;
    log::info!(
        "fold {fold}: {} train / {} validation / {} test queries, best iteration {}",
        train_queries.len(),
        validation_queries.len(),
        test.len(),
        model.best_iteration
    );

    let mut gbt_per_query = BTreeMap::new();
    let mut baseline_per_query: Vec<BTreeMap<String, QueryMetrics>> = vec![BTreeMap::new(); baseline_columns.len()];
    for q in &test {
        let insts = &by_query[q.as_str()];
        let num_relevant = qrels.num_relevant(q);
        let scores = insts
            .iter()
            .map(|i| model.raw_score(&i.features, None))
            .collect::<Result<Vec<f64>>>()?;
        gbt_per_query.insert(q.clone(), query_metrics(&ranking_flags(insts, &scores, qrels), num_relevant));
        for (slot, (_, col)) in baseline_per_query.iter_mut().zip(baseline_columns) {
            let scores: Vec<f64> = insts.iter().map(|i| i.features[*col]).collect();
            slot.insert(q.clone(), query_metrics(&ranking_flags(insts, &scores, qrels), num_relevant));
        }
    }
    Ok(FoldReport {
        fold,
        test_queries: test,
        train_queries,
        validation_queries,
        best_iteration: model.best_iteration,
        gbt: Metrics::from_per_query(gbt_per_query),
        baselines: baseline_columns
            .iter()
            .zip(baseline_per_query)
            .map(|((name, _), pq)| (name.clone(), Metrics::from_per_query(pq)))
            .collect(),
        relative_influence: if model.best_iteration > 0 {
            model.relative_influence(None)
        } else {
            table.feature_names.iter().map(|n| (n.clone(), 0.0)).collect()
        },
    })
}
