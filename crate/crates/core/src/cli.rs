//! Command-line front end.
//!
//! Every subcommand writes one run manifest: beside its output artifact as
//! `<artifact>.manifest.json`, or on standard error when the result goes to
//! standard output. Exit codes: 0 success, 1 usage error, 2 data or
//! configuration error.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::baselines::{naive_predict, rule_predict, RuleSet};
use crate::candidates::CandidateConfig;
use crate::dialog::dstc2::{convert_dstc2, Dstc2Options, ReferenceMapping};
use crate::dialog::synth::{generate_synthetic, GeneratorConfig};
use crate::dialog::{build_schema_catalog, load_corpus, write_corpus, Dialog, SchemaCatalog, Slot};
use crate::embeddings::{EmbeddingTable, LabelEmbeddings, OovPolicy};
use crate::error::{Error, Result};
use crate::eval::{domain_breakdown, parse_grid, score, sweep};
use crate::model::checkpoint::{label_file_hash, Checkpoint};
use crate::model::{CarryoverModel, ModelConfig};
use crate::pipeline::{corpus_references, predict_corpus, Pipeline};
use crate::training::{train_with, TrainConfig};
use crate::util;

#[derive(Debug, Parser)]
#[command(name = "carryover", version, about = "Contextual slot carryover across dialog domains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert DSTC2 session directories to a dialog corpus.
    Convert(ConvertArgs),
    /// Generate a synthetic multi-domain corpus.
    Gen(GenArgs),
    /// Build slot-key and dialog-act label embeddings from a corpus.
    BuildLabels(BuildLabelsArgs),
    /// Write the labelled candidates of every user turn.
    Candidates(CandidatesArgs),
    /// Train a carryover model.
    Train(TrainArgs),
    /// Predict carried slots for every user turn.
    Predict(PredictArgs),
    /// Score predictions against gold references.
    Eval(EvalArgs),
    /// Grid-search the decision threshold and the similarity threshold.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct ConvertArgs {
    #[arg(long)]
    dstc2_dir: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = MappingArg::GoalCarried)]
    mapping: MappingArg,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MappingArg {
    GoalCarried,
    GoalMinusCurrent,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write the generated token embedding table.
    #[arg(long)]
    emb_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EmbeddingArgs {
    #[arg(long)]
    emb: PathBuf,
    #[arg(long, value_enum, default_value_t = OovArg::Zero)]
    oov: OovArg,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OovArg {
    Zero,
    Mean,
}

impl From<OovArg> for OovPolicy {
    fn from(a: OovArg) -> Self {
        match a {
            OovArg::Zero => OovPolicy::ZeroVector,
            OovArg::Mean => OovPolicy::MeanVector,
        }
    }
}

#[derive(Debug, Args)]
struct BuildLabelsArgs {
    #[command(flatten)]
    emb: EmbeddingArgs,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CandidateArgs {
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    window: Option<usize>,
    /// Ignore system turns as candidate sources.
    #[arg(long)]
    dstc2_mode: bool,
}

impl CandidateArgs {
    fn apply(&self, mut config: CandidateConfig) -> Result<CandidateConfig> {
        if let Some(b) = self.beta {
            config.beta = b;
        }
        if let Some(w) = self.window {
            config.window = w;
        }
        if self.dstc2_mode {
            config.include_system_candidates = false;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Args)]
struct CandidatesArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[command(flatten)]
    cand: CandidateArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    #[command(flatten)]
    emb: EmbeddingArgs,
    #[arg(long)]
    labels: PathBuf,
    /// TOML file with optional [model], [train] and [candidates] tables.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum)]
enum Baseline {
    Naive,
    Rule,
    Model,
}

#[derive(Debug, Args)]
struct PredictorArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum, default_value_t = Baseline::Model)]
    baseline: Baseline,
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    emb: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OovArg::Zero)]
    oov: OovArg,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    #[command(flatten)]
    cand: CandidateArgs,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[command(flatten)]
    predictor: PredictorArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    predictor: PredictorArgs,
    /// Also split counts into within-domain and cross-domain carryover.
    #[arg(long)]
    breakdown: bool,
    /// Write the report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    ckpt: PathBuf,
    #[command(flatten)]
    emb: EmbeddingArgs,
    #[arg(long)]
    labels: PathBuf,
    /// Grid such as `tau=0.3,0.5,0.7;beta=0.2,0.5`.
    #[arg(long)]
    grid: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Structured record of one run.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: Value,
    pub inputs: BTreeMap<String, FileDigest>,
    pub seed: Option<u64>,
    pub artifacts: BTreeMap<String, FileDigest>,
    pub duration_secs: f64,
}

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

struct Run {
    subcommand: &'static str,
    started: Instant,
    config: Value,
    inputs: BTreeMap<String, FileDigest>,
    seed: Option<u64>,
    artifacts: BTreeMap<String, FileDigest>,
}

fn digest(path: &Path) -> Result<FileDigest> {
    Ok(FileDigest { path: path.display().to_string(), sha256: util::sha256_file(path)? })
}

impl Run {
    fn new(subcommand: &'static str) -> Self {
        Run {
            subcommand,
            started: Instant::now(),
            config: Value::Null,
            inputs: BTreeMap::new(),
            seed: None,
            artifacts: BTreeMap::new(),
        }
    }

    fn input(&mut self, name: &str, path: &Path) -> Result<()> {
        self.inputs.insert(name.into(), digest(path)?);
        Ok(())
    }

    fn artifact(&mut self, name: &str, path: &Path) -> Result<()> {
        self.artifacts.insert(name.into(), digest(path)?);
        Ok(())
    }

    /// Write the manifest beside `primary`, or to standard error.
    fn finish(self, primary: Option<&Path>) -> Result<()> {
        let manifest = RunManifest {
            subcommand: self.subcommand.into(),
            config: self.config,
            inputs: self.inputs,
            seed: self.seed,
            artifacts: self.artifacts,
            duration_secs: self.started.elapsed().as_secs_f64(),
        };
        match primary {
            Some(p) => {
                let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
                util::write_bytes(&manifest_path(p), format!("{text}\n").as_bytes())
            }
            None => {
                eprintln!("{}", serde_json::to_string(&manifest).expect("manifest serializes"));
                Ok(())
            }
        }
    }
}

pub fn manifest_path(artifact: &Path) -> PathBuf {
    let mut s = artifact.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

pub fn log_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".log.jsonl");
    PathBuf::from(s)
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Convert(a) => convert(a),
        Command::Gen(a) => gen(a),
        Command::BuildLabels(a) => build_labels(a),
        Command::Candidates(a) => candidates(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep_cmd(a),
    }
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn convert(a: ConvertArgs) -> Result<()> {
    let mut run = Run::new("convert");
    let options = Dstc2Options {
        reference_mapping: match a.mapping {
            MappingArg::GoalCarried => ReferenceMapping::GoalCarried,
            MappingArg::GoalMinusCurrent => ReferenceMapping::GoalMinusCurrent,
        },
        ..Default::default()
    };
    let summary = convert_dstc2(&a.dstc2_dir, &a.out, &options)?;
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    run.config = json!({ "dstc2_dir": a.dstc2_dir, "options": options, "summary": summary });
    run.artifact("corpus", &a.out)?;
    run.finish(Some(&a.out))
}

fn gen(a: GenArgs) -> Result<()> {
    let mut run = Run::new("gen");
    run.input("config", &a.config)?;
    let config = GeneratorConfig::load(&a.config)?;
    let corpus = generate_synthetic(&config, a.seed)?;
    write_corpus(&a.out, &corpus.dialogs)?;
    run.artifact("corpus", &a.out)?;
    if let Some(p) = &a.emb_out {
        util::write_bytes(p, corpus.embeddings.to_text().as_bytes())?;
        run.artifact("embeddings", p)?;
    }
    println!("{}", serde_json::to_string_pretty(&corpus.stats).expect("stats serialize"));
    run.seed = Some(a.seed);
    run.config = json!({ "generator": config, "calibration": corpus.calibration, "stats": corpus.stats });
    run.finish(Some(&a.out))
}

fn load_table(run: &mut Run, path: &Path, oov: OovArg) -> Result<EmbeddingTable> {
    run.input("embeddings", path)?;
    EmbeddingTable::load(path, oov.into())
}

fn load_dialogs(run: &mut Run, name: &str, path: &Path) -> Result<Vec<Dialog>> {
    run.input(name, path)?;
    load_corpus(path)
}

fn load_labels(run: &mut Run, path: &Path, dim: usize) -> Result<LabelEmbeddings> {
    run.input("labels", path)?;
    let labels = LabelEmbeddings::load(path)?;
    if labels.dim() != dim {
        return Err(Error::DimensionMismatch {
            what: "label embedding dimension".into(),
            expected: dim,
            found: labels.dim(),
        });
    }
    Ok(labels)
}

fn build_labels(a: BuildLabelsArgs) -> Result<()> {
    let mut run = Run::new("build-labels");
    let table = load_table(&mut run, &a.emb.emb, a.emb.oov)?;
    let dialogs = load_dialogs(&mut run, "corpus", &a.corpus)?;
    let labels = LabelEmbeddings::build(&table, &dialogs);
    labels.save(&a.out)?;
    run.config = json!({ "oov_policy": OovPolicy::from(a.emb.oov), "keys": labels.keys().count(), "acts": labels.acts().count() });
    run.artifact("labels", &a.out)?;
    run.finish(Some(&a.out))
}

fn candidates(a: CandidatesArgs) -> Result<()> {
    let mut run = Run::new("candidates");
    let dialogs = load_dialogs(&mut run, "corpus", &a.corpus)?;
    run.input("labels", &a.labels)?;
    let labels = LabelEmbeddings::load(&a.labels)?;
    let config = a.cand.apply(CandidateConfig::default())?;
    let catalog = build_schema_catalog(&dialogs);
    // Candidate generation only reads label embeddings.
    let table = EmbeddingTable::from_entries(labels.dim(), Vec::<(String, Vec<f64>)>::new(), OovPolicy::ZeroVector)?;
    let pipe = Pipeline { table: &table, labels: &labels, catalog: &catalog, config: &config };
    let mut out = String::new();
    let mut skipped = 0;
    for d in &dialogs {
        for t in d.user_turns() {
            let tc = pipe.candidates(d, t)?;
            skipped += tc.skipped;
            let cands = crate::candidates::label_candidates(tc.candidates, &d.turns[t].references);
            for c in cands {
                let mut v = to_json(&c);
                v["dialog_id"] = json!(d.dialog_id);
                v["turn"] = json!(t);
                out.push_str(&serde_json::to_string(&v).expect("candidate serializes"));
                out.push('\n');
            }
        }
    }
    util::write_bytes(&a.out, out.as_bytes())?;
    run.config = json!({ "candidates": config, "skipped_missing_embedding": skipped });
    run.artifact("candidates", &a.out)?;
    run.finish(Some(&a.out))
}

/// Contents of a `train --config` file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainFile {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub candidates: CandidateConfig,
}

impl TrainFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("train config: {e}")))
    }
}

fn train(a: TrainArgs) -> Result<()> {
    let mut run = Run::new("train");
    let mut file = match &a.config {
        Some(p) => {
            run.input("config", p)?;
            TrainFile::parse(&util::read_to_string(p)?)?
        }
        None => TrainFile::default(),
    };
    file.model.seed = a.seed;
    file.train.seed = a.seed;
    file.candidates.validate()?;
    if file.model.context_window != file.candidates.window {
        return Err(Error::Config(format!(
            "model context_window {} differs from candidate window {}",
            file.model.context_window, file.candidates.window
        )));
    }
    let table = load_table(&mut run, &a.emb.emb, a.emb.oov)?;
    if table.dim() != file.model.embedding_dim {
        return Err(Error::DimensionMismatch {
            what: "embedding table dimension (model config embedding_dim)".into(),
            expected: file.model.embedding_dim,
            found: table.dim(),
        });
    }
    let labels = load_labels(&mut run, &a.labels, table.dim())?;
    let train_set = load_dialogs(&mut run, "train", &a.corpus)?;
    let dev_set = load_dialogs(&mut run, "dev", &a.dev)?;
    let mut catalog = build_schema_catalog(&train_set);
    catalog.merge(&build_schema_catalog(&dev_set));
    let pipe = Pipeline { table: &table, labels: &labels, catalog: &catalog, config: &file.candidates };
    let model = CarryoverModel::new(file.model.clone())?;
    let log = log_path(&a.out);
    let mut lines = String::new();
    let outcome = train_with(model, &train_set, &dev_set, &pipe, &file.train, |r| {
        let line = serde_json::to_string(r).expect("record serializes");
        eprintln!("{line}");
        lines.push_str(&line);
        lines.push('\n');
    })?;
    let ckpt = Checkpoint {
        model: outcome.model,
        candidates: file.candidates.clone(),
        catalog,
        oov_policy: a.emb.oov.into(),
        label_hash: label_file_hash(&a.labels)?,
    };
    ckpt.save(&a.out)?;
    util::write_bytes(&log, lines.as_bytes())?;
    run.seed = Some(a.seed);
    run.config = json!({
        "model": file.model,
        "train": file.train,
        "candidates": file.candidates,
        "class_weights": outcome.weights,
        "best_epoch": outcome.best_epoch,
        "examples": outcome.examples,
    });
    run.artifact("checkpoint", &a.out)?;
    run.artifact("log", &log)?;
    run.finish(Some(&a.out))
}

/// Everything needed to produce hypotheses for a corpus.
struct Predictor {
    dialogs: Vec<Dialog>,
    kind: Baseline,
    rules: Option<RuleSet>,
    checkpoint: Option<Checkpoint>,
    table: Option<EmbeddingTable>,
    labels: Option<LabelEmbeddings>,
    catalog: SchemaCatalog,
    config: CandidateConfig,
    tau: f64,
}

fn need<'a>(v: &'a Option<PathBuf>, flag: &str, baseline: &str) -> Result<&'a PathBuf> {
    v.as_ref().ok_or_else(|| Error::Config(format!("--{flag} is required for the {baseline} predictor")))
}

impl Predictor {
    fn load(run: &mut Run, a: &PredictorArgs) -> Result<Self> {
        let dialogs = load_dialogs(run, "corpus", &a.corpus)?;
        let mut catalog = build_schema_catalog(&dialogs);
        let mut p = Predictor {
            dialogs,
            kind: a.baseline,
            rules: None,
            checkpoint: None,
            table: None,
            labels: None,
            catalog: SchemaCatalog::default(),
            config: CandidateConfig::default(),
            tau: a.tau,
        };
        match a.baseline {
            Baseline::Naive => {
                p.config = a.cand.apply(CandidateConfig::default())?;
            }
            Baseline::Rule => {
                let rules = need(&a.rules, "rules", "rule")?;
                run.input("rules", rules)?;
                p.rules = Some(RuleSet::load(rules)?);
                let table = load_table(run, need(&a.emb, "emb", "rule")?, a.oov)?;
                p.labels = Some(load_labels(run, need(&a.labels, "labels", "rule")?, table.dim())?);
                p.table = Some(table);
                p.config = a.cand.apply(CandidateConfig::default())?;
            }
            Baseline::Model => {
                let ckpt_path = need(&a.ckpt, "ckpt", "model")?;
                run.input("checkpoint", ckpt_path)?;
                let ckpt = Checkpoint::load(ckpt_path)?;
                let labels_path = need(&a.labels, "labels", "model")?;
                let hash = label_file_hash(labels_path)?;
                if hash != ckpt.label_hash {
                    return Err(Error::Checkpoint(format!(
                        "label embeddings {} (sha256 {}) differ from the ones used in training (sha256 {})",
                        labels_path.display(),
                        hex::encode(hash),
                        ckpt.label_hash_hex()
                    )));
                }
                let table = load_table(run, need(&a.emb, "emb", "model")?, a.oov)?;
                if table.dim() != ckpt.model.config.embedding_dim {
                    return Err(Error::DimensionMismatch {
                        what: "embedding table dimension (checkpoint embedding_dim)".into(),
                        expected: ckpt.model.config.embedding_dim,
                        found: table.dim(),
                    });
                }
                p.labels = Some(load_labels(run, labels_path, table.dim())?);
                p.table = Some(table);
                p.config = a.cand.apply(ckpt.candidates.clone())?;
                if p.config.window != ckpt.model.config.context_window {
                    return Err(Error::Config(format!(
                        "--window {} differs from the checkpoint context window {}",
                        p.config.window, ckpt.model.config.context_window
                    )));
                }
                let mut merged = ckpt.catalog.clone();
                merged.merge(&catalog);
                catalog = merged;
                p.checkpoint = Some(ckpt);
            }
        }
        p.catalog = catalog;
        Ok(p)
    }

    fn config_json(&self) -> Value {
        json!({
            "baseline": format!("{:?}", self.kind).to_lowercase(),
            "candidates": self.config,
            "tau": (self.kind == Baseline::Model).then_some(self.tau),
            "model": self.checkpoint.as_ref().map(|c| to_json(&c.model.config)),
        })
    }

    fn hypotheses(&self) -> Result<Vec<BTreeSet<Slot>>> {
        if let (Some(ckpt), Some(table), Some(labels)) = (&self.checkpoint, &self.table, &self.labels) {
            let pipe = Pipeline { table, labels, catalog: &self.catalog, config: &self.config };
            return predict_corpus(&ckpt.model, &pipe, &self.dialogs, self.tau);
        }
        let mut out = Vec::new();
        for d in &self.dialogs {
            for t in d.user_turns() {
                out.push(match (&self.rules, &self.table, &self.labels) {
                    (Some(rules), Some(table), Some(labels)) => {
                        let pipe = Pipeline { table, labels, catalog: &self.catalog, config: &self.config };
                        rule_predict(d, t, rules, &pipe)?
                    }
                    _ => naive_predict(d, t, &self.config)?,
                });
            }
        }
        Ok(out)
    }
}

fn predict(a: PredictArgs) -> Result<()> {
    let mut run = Run::new("predict");
    let p = Predictor::load(&mut run, &a.predictor)?;
    let hyps = p.hypotheses()?;
    let mut out = String::new();
    let turns = p.dialogs.iter().flat_map(|d| d.user_turns().map(move |t| (d, t)));
    for ((d, t), h) in turns.zip(&hyps) {
        let line = json!({ "dialog_id": d.dialog_id, "turn": t, "slots": h });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    util::write_bytes(&a.out, out.as_bytes())?;
    run.config = p.config_json();
    run.artifact("predictions", &a.out)?;
    run.finish(Some(&a.out))
}

fn emit(run: &mut Run, name: &str, report: &Value, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(report).expect("report serializes");
    match out {
        Some(p) => {
            util::write_bytes(p, format!("{text}\n").as_bytes())?;
            run.artifact(name, p)
        }
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn eval(a: EvalArgs) -> Result<()> {
    let mut run = Run::new("eval");
    let p = Predictor::load(&mut run, &a.predictor)?;
    let hyps = p.hypotheses()?;
    let refs = corpus_references(&p.dialogs);
    let report = if a.breakdown {
        to_json(&domain_breakdown(&p.dialogs, &hyps, &refs)?)
    } else {
        let mut r = score(&hyps, &refs)?;
        if p.kind == Baseline::Model {
            r.tau = Some(p.tau);
        }
        if p.kind != Baseline::Naive {
            r.beta = Some(p.config.beta);
        }
        to_json(&r)
    };
    emit(&mut run, "report", &report, a.out.as_deref())?;
    run.config = p.config_json();
    run.finish(a.out.as_deref())
}

fn sweep_cmd(a: SweepArgs) -> Result<()> {
    let mut run = Run::new("sweep");
    let (taus, betas) = parse_grid(&a.grid)?;
    let args = PredictorArgs {
        corpus: a.corpus,
        baseline: Baseline::Model,
        rules: None,
        ckpt: Some(a.ckpt),
        emb: Some(a.emb.emb),
        oov: a.emb.oov,
        labels: Some(a.labels),
        tau: 0.5,
        cand: CandidateArgs { beta: None, window: None, dstc2_mode: false },
    };
    let p = Predictor::load(&mut run, &args)?;
    let (Some(ckpt), Some(table), Some(labels)) = (&p.checkpoint, &p.table, &p.labels) else {
        unreachable!("model predictor")
    };
    let pipe = Pipeline { table, labels, catalog: &p.catalog, config: &p.config };
    let result = sweep(&ckpt.model, &pipe, &p.dialogs, &taus, &betas)?;
    emit(&mut run, "report", &to_json(&result), a.out.as_deref())?;
    run.config = json!({ "grid": a.grid, "taus": taus, "betas": betas, "candidates": p.config });
    run.finish(a.out.as_deref())
}
