use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use facetrank::corpus::{load_topics, read_documents, to_jsonl};
use facetrank::dataset::FeatureTable;
use facetrank::eval::{
    evaluate_run, paired_t_test, rank_instances, train_from_table, CvConfig, CvReport, Metrics, Qrels, Run, RunEntry,
    DEFAULT_FOLDS, DEFAULT_VALIDATION_FRACTION,
};
use facetrank::facets::DEFAULT_POOL_SIZE;
use facetrank::gbt::{top_influences, GbtConfig, GbtModel};
use facetrank::pipeline::{candidates_from_tsv, candidates_to_tsv, run_cv, Collection};
use facetrank::synth::{generate_synthetic, SynthConfig};

#[derive(Parser)]
#[command(name = "facetrank", version, about = "Rank facet-value pairs for keyword queries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Index a corpus.jsonl into a directory.
    BuildIndex {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pool the top-k facet-value pairs per topic.
    Candidates {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        topics: PathBuf,
        #[arg(long, default_value_t = DEFAULT_POOL_SIZE)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute features for pooled candidates.
    Extract {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        topics: PathBuf,
        #[arg(long)]
        candidates: PathBuf,
        /// Labels instances; without it every label is 0.
        #[arg(long)]
        qrels: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a boosted-tree model on labeled features.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value_t = DEFAULT_VALIDATION_FRACTION)]
        val_frac: f64,
        #[command(flatten)]
        gbt: GbtArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score features with a model and write a run.
    Rank {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a run against qrels; prints JSON.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
    },
    /// Cross-validate the ranker against the single-feature rankers; prints JSON.
    Cv {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        topics: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        #[arg(long, default_value_t = DEFAULT_FOLDS)]
        folds: usize,
        #[arg(long, default_value_t = DEFAULT_POOL_SIZE)]
        k: usize,
        #[command(flatten)]
        gbt: GbtArgs,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the resolved configuration and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Paired t-test over two per-query score files; prints JSON.
    Ttest {
        #[arg(long)]
        per_query_a: PathBuf,
        #[arg(long)]
        per_query_b: PathBuf,
    },
    /// Write a synthetic corpus, topics and qrels.
    Synth {
        #[arg(long, default_value_t = 5000)]
        docs: usize,
        #[arg(long, default_value_t = 30)]
        queries: usize,
        #[arg(long, default_value_t = 0.3)]
        noise: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Args)]
struct GbtArgs {
    #[arg(long, default_value_t = GbtConfig::default().seed)]
    seed: u64,
    #[arg(long, default_value_t = GbtConfig::default().max_trees)]
    trees: usize,
    #[arg(long, default_value_t = GbtConfig::default().interaction_depth)]
    depth: usize,
    #[arg(long, default_value_t = GbtConfig::default().min_obs_per_node)]
    min_obs: usize,
    #[arg(long, default_value_t = GbtConfig::default().shrinkage)]
    shrinkage: f64,
}

impl GbtArgs {
    fn config(&self) -> GbtConfig {
        GbtConfig {
            max_trees: self.trees,
            interaction_depth: self.depth,
            min_obs_per_node: self.min_obs,
            shrinkage: self.shrinkage,
            seed: self.seed,
        }
    }
}

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn init_logging() {
    let level = std::env::var("FACETRANK_LOG").unwrap_or_else(|_| "error".into());
    let filter = match level.as_str() {
        "error" | "info" | "debug" => level.as_str(),
        other => {
            eprintln!("warning: FACETRANK_LOG={other} not one of error, info, debug; using error");
            "error"
        }
    };
    env_logger::Builder::new()
        .parse_filters(filter)
        .format_timestamp(None)
        .init();
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::BuildIndex { corpus, out } => {
            let file = fs::File::open(&corpus).with_context(|| format!("opening {}", corpus.display()))?;
            let docs = read_documents(file, &corpus.display().to_string())?;
            let collection = Collection::new(docs)?;
            log::info!(
                "indexed {} documents, {} facet-value pairs",
                collection.docs.len(),
                collection.fvps.len()
            );
            let files: Vec<(String, String)> = collection
                .files()?
                .into_iter()
                .map(|(name, body)| (name.to_string(), body))
                .collect();
            write_dir_atomic(&out, &files)
        }
        Command::Candidates { index, topics, k, out } => {
            if k == 0 {
                bail!("--k must be at least 1");
            }
            let collection = Collection::load(&index)?;
            let topics = load_topics(&topics)?;
            let pools = collection.candidates(&topics, k);
            write_atomic(&out, candidates_to_tsv(&pools, &collection.fvps)?.as_bytes())
        }
        Command::Extract {
            index,
            topics,
            candidates,
            qrels,
            out,
        } => {
            let collection = Collection::load(&index)?;
            let topics = load_topics(&topics)?;
            let pools = candidates_from_tsv(&read(&candidates)?, &candidates.display().to_string(), &collection.fvps)?;
            let qrels = qrels.map(|p| load_qrels(&p)).transpose()?;
            let table = collection.extract(&topics, &pools, qrels.as_ref())?;
            write_atomic(&out, table.to_tsv()?.as_bytes())
        }
        Command::Train {
            features,
            val_frac,
            gbt,
            out,
        } => {
            let table = load_features(&features)?;
            let outcome = train_from_table(&table, val_frac, &gbt.config())?;
            let model = outcome.model;
            log::info!("best iteration {} of {}", model.best_iteration, model.trees.len());
            for (name, share) in top_influences(&model.relative_influence(None), 5) {
                log::info!("influence {name}: {share:.2}");
            }
            write_atomic(&out, model.to_json()?.as_bytes())
        }
        Command::Rank { model, features, out } => {
            let model = GbtModel::load(&model)?;
            let table = load_features(&features)?;
            if table.feature_names != model.feature_names {
                bail!("feature columns in {} do not match the model", features.display());
            }
            let mut run = Run::default();
            for group in table.groups() {
                let scores = group
                    .instances
                    .iter()
                    .map(|i| model.raw_score(&i.features, None))
                    .collect::<facetrank::Result<Vec<f64>>>()?;
                for (rank, idx) in rank_instances(&group.instances, &scores).into_iter().enumerate() {
                    let inst = group.instances[idx];
                    run.entries.push(RunEntry {
                        qid: inst.qid.clone(),
                        facet: inst.facet.clone(),
                        value: inst.value.clone(),
                        rank: rank + 1,
                        score: scores[idx],
                        tag: "gbt".into(),
                    });
                }
            }
            write_atomic(&out, run.to_tsv()?.as_bytes())
        }
        Command::Eval { run, qrels } => {
            let run_table = Run::from_tsv(&read(&run)?, &run.display().to_string())?;
            let qrels = load_qrels(&qrels)?;
            let metrics = evaluate_run(&run_table, &qrels);
            print_json(&metrics_json(&metrics, Vec::new()))
        }
        Command::Cv {
            index,
            topics,
            qrels,
            folds,
            k,
            gbt,
            out,
            print_config,
        } => {
            let config = CvConfig {
                folds,
                seed: gbt.seed,
                validation_fraction: DEFAULT_VALIDATION_FRACTION,
                gbt: gbt.config(),
            };
            if print_config {
                return print_json(&json!({ "pool_size": k, "cv": config }));
            }
            let collection = Collection::load(&index)?;
            let topics = load_topics(&topics)?;
            let qrels = load_qrels(&qrels)?;
            let (_, report) = run_cv(&collection, &topics, &qrels, k, &config)?;
            let body = cv_json(&report)?;
            if let Some(out) = out {
                write_atomic(&out, format!("{}\n", serde_json::to_string_pretty(&body)?).as_bytes())?;
            }
            print_json(&body)
        }
        Command::Ttest { per_query_a, per_query_b } => {
            let a = load_per_query(&per_query_a)?;
            let b = load_per_query(&per_query_b)?;
            let t = paired_t_test(&a, &b)?;
            print_json(&json!({
                "t": t.t,
                "p_two_sided": t.p_two_sided,
                "df": t.df,
                "mean_difference": t.mean_difference,
                "queries": a.len(),
            }))
        }
        Command::Synth {
            docs,
            queries,
            noise,
            seed,
            out_dir,
        } => {
            let config = SynthConfig {
                num_docs: docs,
                num_queries: queries,
                noise,
                seed,
                max_planted: SynthConfig::default().max_planted.min(docs),
                min_planted: SynthConfig::default().min_planted.min(docs),
                max_misplaced_docs: SynthConfig::default().max_misplaced_docs.min(docs),
                min_misplaced_docs: SynthConfig::default().min_misplaced_docs.min(docs),
                ..SynthConfig::default()
            };
            let data = generate_synthetic(&config)?;
            let files = vec![
                ("corpus.jsonl".to_string(), to_jsonl(&data.docs)?),
                ("topics.jsonl".to_string(), to_jsonl(&data.topics)?),
                ("qrels.tsv".to_string(), data.qrels.to_tsv()?),
            ];
            write_dir_atomic(&out_dir, &files)
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_qrels(path: &Path) -> Result<Qrels> {
    Ok(Qrels::from_tsv(&read(path)?, &path.display().to_string())?)
}

fn load_features(path: &Path) -> Result<FeatureTable> {
    Ok(FeatureTable::from_tsv(&read(path)?, &path.display().to_string())?)
}

/// Per-query scores from either an eval report (`per_query` object whose
/// entries are numbers or carry an `ap` field) or `qid TAB score` lines.
fn load_per_query(path: &Path) -> Result<BTreeMap<String, f64>> {
    let text = read(path)?;
    let mut out = BTreeMap::new();
    if text.trim_start().starts_with('{') {
        let report: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let Some(per_query) = report.get("per_query").and_then(Value::as_object) else {
            bail!("{}: no `per_query` object", path.display());
        };
        for (qid, v) in per_query {
            let score = v
                .as_f64()
                .or_else(|| v.get("ap").and_then(Value::as_f64))
                .with_context(|| format!("{}: query {qid} has no score", path.display()))?;
            out.insert(qid.clone(), score);
        }
        return Ok(out);
    }
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || (i == 0 && line.starts_with("qid\t")) {
            continue;
        }
        let mut fields = line.split('\t');
        let (Some(qid), Some(score), None) = (fields.next(), fields.next(), fields.next()) else {
            bail!("{}:{}: expected `qid TAB score`", path.display(), i + 1);
        };
        let score: f64 = score
            .trim()
            .parse()
            .with_context(|| format!("{}:{}: bad score `{score}`", path.display(), i + 1))?;
        if out.insert(qid.to_string(), score).is_some() {
            bail!("{}:{}: duplicate query {qid}", path.display(), i + 1);
        }
    }
    Ok(out)
}

fn metrics_summary(m: &Metrics) -> Value {
    json!({ "map": m.map, "r_prec": m.r_prec, "p5": m.p5, "p_r1": m.p_r1 })
}

fn metrics_json(m: &Metrics, folds: Vec<Value>) -> Value {
    let mut body = metrics_summary(m);
    body["per_query"] = serde_json::to_value(&m.per_query).expect("metrics serialize");
    body["folds"] = Value::Array(folds);
    body
}

fn cv_json(report: &CvReport) -> Result<Value> {
    let folds = report
        .folds
        .iter()
        .map(|f| {
            let mut v = metrics_summary(&f.gbt);
            v["fold"] = json!(f.fold);
            v["best_iteration"] = json!(f.best_iteration);
            v["test_queries"] = json!(f.test_queries);
            v
        })
        .collect();
    let mut body = metrics_json(&report.gbt, folds);
    body["baselines"] = report
        .baselines
        .iter()
        .map(|(name, m)| (name.clone(), metrics_summary(m)))
        .collect::<serde_json::Map<_, _>>()
        .into();
    if let Some((name, best)) = report.best_baseline() {
        let mut entry = json!({ "name": name, "map": best.map });
        match paired_t_test(&report.gbt.per_query_ap(), &best.per_query_ap()) {
            Ok(t) => {
                entry["t"] = json!(t.t);
                entry["p_two_sided"] = json!(t.p_two_sided);
            }
            Err(e) => log::info!("no t-test against {name}: {e}"),
        }
        body["best_baseline"] = entry;
    }
    body["relative_influence"] = top_influences(&report.relative_influence, report.relative_influence.len())
        .into_iter()
        .map(|(n, v)| json!([n, v]))
        .collect();
    Ok(body)
}

fn print_json(v: &Value) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut stdout, v)?;
    writeln!(stdout)?;
    Ok(())
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Writes to a temp file beside `path`, then renames it into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = parent_dir(path);
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Fills a temp directory beside `dir`, then swaps it into place.
fn write_dir_atomic(dir: &Path, files: &[(String, String)]) -> Result<()> {
    let parent = parent_dir(dir);
    fs::create_dir_all(&parent).with_context(|| format!("creating {}", parent.display()))?;
    let staging = tempfile::Builder::new()
        .prefix(".facetrank-")
        .tempdir_in(&parent)
        .with_context(|| format!("creating temp dir in {}", parent.display()))?;
    for (name, body) in files {
        fs::write(staging.path().join(name), body)?;
    }
    if dir.exists() {
        if !dir.is_dir() {
            bail!("{} exists and is not a directory", dir.display());
        }
        let old = tempfile::Builder::new().prefix(".facetrank-old-").tempdir_in(&parent)?;
        fs::rename(dir, old.path().join("previous"))?;
    }
    // once renamed, dropping `staging` finds nothing left to clean up
    fs::rename(staging.path(), dir).with_context(|| format!("moving output into {}", dir.display()))?;
    Ok(())
}
