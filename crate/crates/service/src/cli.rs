//! `avarchive` subcommands. Exit codes: 0 success, 1 failure, 2 usage.

use std::ffi::OsString;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context};
use avarchive_core::classifier::{evaluate_accuracy, fit, rule_based_detect, accuracy_of, ClassifierModel, Hyperparams};
use avarchive_core::corpus::{load_corpus, load_corpus_with, save_corpus, LoadOptions, Split};
use avarchive_core::datafication::{
    format_timestamp, DescriptorFacets, DescriptorRecord, DescriptorStore, InteractionLog, ProvenanceRef,
    TrainingDataRef,
};
use avarchive_core::dataset::{
    augment_training_captions, build_classifier_corpus, build_mixed_test_set, AugmentOptions, EvalPair, LabeledText,
};
use avarchive_core::engine::{ClassifierMode, QueryEmbedder};
use avarchive_core::eval::synth::{generate_synthetic_corpus, synthetic_classifier_sources, SynthParams, SyntheticSet};
use avarchive_core::eval::{percent, Comparison, RoutingMode, DEFAULT_K_LIST, MIXED_TEST_SET, VISUAL_TEST_SET};
use avarchive_core::fulltext::Bm25Params;
use avarchive_core::jsonl::{read_jsonl, write_jsonl};
use avarchive_core::vector::load_embeddings;
use chrono::Utc;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::api::{AppState, RunningServer};
use crate::artifacts::{self, transcript_index};
use crate::config::ServiceConfig;

#[derive(Debug, Parser)]
#[command(name = "avarchive", version, about = "Hybrid text-to-video retrieval for AV archives")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a corpus file and print a summary.
    Ingest(IngestArgs),
    /// Build the BM25 snapshot over corpus transcripts.
    Index(IndexArgs),
    /// Train the speech/quote vs visual query classifier.
    TrainClassifier(TrainArgs),
    /// Replace training captions with transcripts.
    Augment(AugmentArgs),
    /// Build a mixed visual + speech test set from the test split.
    BuildTestset(TestsetArgs),
    /// Run the method x test-set comparison and write a report.
    Eval(EvalArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Write a synthetic corpus with embeddings, classifier data and config.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Reject unknown fields and warn on caption counts other than 20.
    #[arg(long)]
    pub strict: bool,
    /// Descriptor file to check against the corpus.
    #[arg(long)]
    pub descriptors: Option<PathBuf>,
    /// Write the validated corpus here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1.2)]
    pub k1: f64,
    #[arg(long, default_value_t = 0.75)]
    pub b: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON Lines of {"text", "label"} training examples.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Held-out examples to report accuracy on.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub replace_min: usize,
    #[arg(long, default_value_t = 5)]
    pub replace_max: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Copy the corpus unchanged.
    #[arg(long)]
    pub no_op: bool,
}

#[derive(Debug, Args)]
pub struct TestsetArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Share of pairs whose query is a transcript.
    #[arg(long, default_value_t = 0.5)]
    pub fraction: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RoutingArg {
    Classifier,
    RuleBased,
    Oracle,
}

impl From<RoutingArg> for RoutingMode {
    fn from(r: RoutingArg) -> Self {
        match r {
            RoutingArg::Classifier => RoutingMode::Classifier,
            RoutingArg::RuleBased => RoutingMode::RuleBased,
            RoutingArg::Oracle => RoutingMode::Oracle,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Baseline clip embeddings (captions only).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Customised clip embeddings (captions and transcripts).
    #[arg(long)]
    pub customised_embeddings: Option<PathBuf>,
    #[arg(long)]
    pub classifier: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = RoutingArg::Classifier)]
    pub routing: RoutingArg,
    /// Named test set file, `name=path`; repeatable. Without any, a visual
    /// and a mixed set are built from the corpus.
    #[arg(long = "testset", value_parser = parse_named_path)]
    pub testsets: Vec<(String, PathBuf)>,
    #[arg(long, default_value_t = 0.5)]
    pub mixed_fraction: f64,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_K_LIST)]
    pub k: Vec<usize>,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_named_path(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_owned(), path.into())),
        _ => Err(format!("expected name=path, got {s:?}")),
    }
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// JSON config file; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub listen: Option<String>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub fulltext: Option<PathBuf>,
    #[arg(long)]
    pub classifier: Option<PathBuf>,
    #[arg(long)]
    pub descriptors: Option<PathBuf>,
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub k_default: Option<usize>,
    /// Route with the reporting-verb rules instead of the trained model.
    #[arg(long)]
    pub rule_based: bool,
    /// Return empty results instead of falling back to vector search.
    #[arg(long)]
    pub no_fallback: bool,
}

impl ServeArgs {
    pub fn resolve(&self) -> anyhow::Result<ServiceConfig> {
        let mut cfg = match &self.config {
            Some(p) => ServiceConfig::load(p)?,
            None => ServiceConfig::default(),
        };
        if let Some(l) = &self.listen {
            cfg.listen = l.clone();
        }
        for (slot, flag) in [
            (&mut cfg.corpus, &self.corpus),
            (&mut cfg.embeddings, &self.embeddings),
            (&mut cfg.fulltext, &self.fulltext),
            (&mut cfg.classifier, &self.classifier),
            (&mut cfg.descriptors, &self.descriptors),
            (&mut cfg.interaction_log, &self.log),
        ] {
            if flag.is_some() {
                slot.clone_from(flag);
            }
        }
        if let Some(t) = self.threshold {
            cfg.engine.threshold = t;
        }
        if let Some(k) = self.k_default {
            cfg.engine.k_default = k;
        }
        if self.rule_based {
            cfg.engine.classifier_mode = ClassifierMode::RuleBased;
        }
        if self.no_fallback {
            cfg.engine.fallback_on_empty = false;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    pub n_clips: usize,
    #[arg(long, default_value_t = 0.5)]
    pub transcript_fraction: f64,
    #[arg(long, default_value_t = 256)]
    pub dim: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Skip training the classifier (the config then routes by rules).
    #[arg(long)]
    pub no_classifier: bool,
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

pub fn execute(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Ingest(a) => ingest(&a),
        Command::Index(a) => index(&a),
        Command::TrainClassifier(a) => train_classifier(&a),
        Command::Augment(a) => augment(&a),
        Command::BuildTestset(a) => build_testset(&a),
        Command::Eval(a) => eval(&a),
        Command::Serve(a) => serve(a.resolve()?),
        Command::Synth(a) => synth(&a),
    }
}

fn ingest(a: &IngestArgs) -> anyhow::Result<()> {
    let (corpus, warnings) = load_corpus_with(&a.corpus, LoadOptions { strict: a.strict })?;
    for w in &warnings {
        eprintln!("warning: line {}: {}", w.line, w.message);
    }
    let violations = corpus.validate();
    for v in &violations {
        eprintln!("invalid: {v}");
    }
    if !violations.is_empty() {
        bail!("{} invariant violations in {}", violations.len(), a.corpus.display());
    }
    if let Some(p) = &a.descriptors {
        let store = DescriptorStore::load(p)?;
        if let Some(d) = store
            .records()
            .iter()
            .find(|d| d.clip_id.as_deref().is_some_and(|id| corpus.get(id).is_none()))
        {
            bail!("descriptor {} refers to a clip that is not in the corpus", d.descriptor_id);
        }
        println!("{} descriptors", store.len());
    }
    let train = corpus.split(Split::Train).count();
    let speech = corpus.clips.iter().filter(|c| c.speech().is_some()).count();
    println!(
        "{} clips ({} train, {} test), {} with transcripts",
        corpus.len(),
        train,
        corpus.len() - train,
        speech
    );
    if let Some(out) = &a.out {
        save_corpus(&corpus, out)?;
    }
    Ok(())
}

fn index(a: &IndexArgs) -> anyhow::Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let idx = transcript_index(&corpus, Bm25Params { k1: a.k1, b: a.b })?;
    idx.save(&a.out)?;
    println!("indexed {} transcripts, avgdl {:.2}", idx.len(), idx.avgdl());
    Ok(())
}

fn train_classifier(a: &TrainArgs) -> anyhow::Result<()> {
    let train: Vec<LabeledText> = read_jsonl(&a.data)?;
    let mut hp = Hyperparams::with_seed(a.seed);
    if let Some(e) = a.epochs {
        hp.epochs = e;
    }
    if let Some(lr) = a.learning_rate {
        hp.learning_rate = lr;
    }
    let mut model = fit(&train, &hp)?;
    if let Some(t) = a.threshold {
        model = model.with_threshold(t);
    }
    model.save(&a.out)?;
    println!("trained on {} examples, vocabulary {}", train.len(), model.vocabulary().len());
    if let Some(p) = &a.test {
        let test: Vec<LabeledText> = read_jsonl(p)?;
        let acc = evaluate_accuracy(&model, &test).context("test set is empty")?;
        let rules = accuracy_of(&test, rule_based_detect).expect("non-empty");
        println!("held-out accuracy {acc:.4} (rule-based {rules:.4}) on {} examples", test.len());
    }
    Ok(())
}

fn augment(a: &AugmentArgs) -> anyhow::Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let opts = AugmentOptions {
        no_op: a.no_op,
        ..AugmentOptions::new(a.replace_min, a.replace_max, a.seed)
    };
    let out = augment_training_captions(&corpus, opts)?;
    save_corpus(&out, &a.out)?;
    Ok(())
}

fn build_testset(a: &TestsetArgs) -> anyhow::Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let pairs = build_mixed_test_set(&corpus, a.fraction, a.seed)?;
    write_jsonl(&a.out, &pairs)?;
    println!("{} pairs", pairs.len());
    Ok(())
}

fn eval(a: &EvalArgs) -> anyhow::Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let baseline = a.embeddings.as_ref().map(load_embeddings).transpose()?;
    let customised = a.customised_embeddings.as_ref().map(load_embeddings).transpose()?;
    let Some(dim) = baseline.as_ref().or(customised.as_ref()).map(|m| m.dim()) else {
        bail!("eval needs --embeddings or --customised-embeddings");
    };
    let model = a.classifier.as_ref().map(ClassifierModel::load).transpose()?;
    let test_sets = if a.testsets.is_empty() {
        vec![
            (VISUAL_TEST_SET.to_owned(), build_mixed_test_set(&corpus, 0.0, a.seed)?),
            (MIXED_TEST_SET.to_owned(), build_mixed_test_set(&corpus, a.mixed_fraction, a.seed)?),
        ]
    } else {
        a.testsets
            .iter()
            .map(|(name, p)| Ok((name.clone(), read_jsonl::<EvalPair>(p)?)))
            .collect::<anyhow::Result<_>>()?
    };
    let report = Comparison {
        corpus: &corpus,
        baseline: baseline.as_ref(),
        customised: customised.as_ref(),
        embedder: &QueryEmbedder::Hash { dim },
        model: model.as_ref(),
        test_sets,
        k_list: a.k.clone(),
        routing_mode: a.routing.into(),
        threshold: a.threshold,
        seed: a.seed,
    }
    .run(format_timestamp(&Utc::now()))?;
    std::fs::write(&a.out, report.to_json() + "\n").with_context(|| format!("writing {}", a.out.display()))?;
    for row in &report.rows {
        let cells: Vec<String> = row
            .recall
            .iter()
            .map(|(k, r)| format!("R@{k} {:>5.1}", percent(*r)))
            .collect();
        match &row.error {
            Some(e) => println!("{:<18} {:<8} error: {e}", format!("{:?}", row.method), row.test_set),
            None => println!(
                "{:<18} {:<8} {}  MedR {}",
                format!("{:?}", row.method),
                row.test_set,
                cells.join("  "),
                row.median_rank.unwrap_or(f64::NAN)
            ),
        }
    }
    Ok(())
}

fn serve(cfg: ServiceConfig) -> anyhow::Result<()> {
    cfg.check()?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let log = InteractionLog::open(cfg.interaction_log.as_ref().expect("checked"))?;
        let state = Arc::new(AppState::new(log));
        let listener = tokio::net::TcpListener::bind(&cfg.listen)
            .await
            .with_context(|| format!("binding {}", cfg.listen))?;
        let server = RunningServer::spawn(listener, state.clone())?;
        eprintln!("listening on {}", server.addr);
        // requests get 503 until the indexes are in memory
        let loaded = tokio::task::spawn_blocking(move || artifacts::load(&cfg)).await??;
        state.set_loaded(loaded);
        eprintln!("indexes loaded");
        tokio::signal::ctrl_c().await?;
        server.stop().await
    })
}

/// Facets shared by every automatically extracted synthetic descriptor.
fn facets(level: &str, form: &str, retrieval: &str, modality: &str) -> DescriptorFacets {
    DescriptorFacets {
        level: level.to_owned(),
        automation: "automatic".to_owned(),
        extraction_time: "ingest".to_owned(),
        form: form.to_owned(),
        retrieval: retrieval.to_owned(),
        modality: modality.to_owned(),
    }
}

/// Transcript, baseline and customised embedding descriptors for every clip.
/// The customised embedding of a clip with speech derives from its
/// transcript descriptor.
pub fn synthetic_descriptors(set: &SyntheticSet) -> anyhow::Result<DescriptorStore> {
    let version = env!("CARGO_PKG_VERSION");
    let mut store = DescriptorStore::new();
    store.attach_corpus(set.corpus.clips.iter().map(|c| c.clip_id.as_str()));
    for clip in &set.corpus.clips {
        let id = &clip.clip_id;
        let asr = clip.speech().map(|_| format!("asr:{id}"));
        if let Some(asr) = &asr {
            let mut prov = ProvenanceRef::new("synthetic-asr", version);
            prov.training_data_ref = Some(TrainingDataRef::External("synthetic speech vocabulary".into()));
            store.register_descriptor(DescriptorRecord {
                descriptor_id: asr.clone(),
                clip_id: Some(id.clone()),
                kind: "transcript".into(),
                payload_ref: format!("corpus.jsonl#{id}"),
                facets: facets("content", "text", "fulltext", "audio"),
                provenance: prov,
            })?;
        }
        let mut prov = ProvenanceRef::new("hash-embed", version);
        prov.training_data_ref = Some(TrainingDataRef::External("captions".into()));
        store.register_descriptor(DescriptorRecord {
            descriptor_id: format!("emb-baseline:{id}"),
            clip_id: Some(id.clone()),
            kind: "embedding".into(),
            payload_ref: format!("baseline.avem#{id}"),
            facets: facets("content", "vector", "vector", "visual"),
            provenance: prov,
        })?;
        let prov = match &asr {
            Some(asr) => ProvenanceRef::new("hash-embed", version).derived_from(asr.clone()),
            None => {
                let mut p = ProvenanceRef::new("hash-embed", version);
                p.training_data_ref = Some(TrainingDataRef::External("captions".into()));
                p
            }
        };
        store.register_descriptor(DescriptorRecord {
            descriptor_id: format!("emb-customised:{id}"),
            clip_id: Some(id.clone()),
            kind: "embedding".into(),
            payload_ref: format!("customised.avem#{id}"),
            facets: facets("content", "vector", "vector", "audiovisual"),
            provenance: prov,
        })?;
    }
    Ok(store)
}

fn synth(a: &SynthArgs) -> anyhow::Result<()> {
    let out = &a.out;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let params = SynthParams::new(a.n_clips, a.transcript_fraction, a.dim, a.seed);
    let set = generate_synthetic_corpus(&params)?;
    save_corpus(&set.corpus, out.join("corpus.jsonl"))?;
    set.baseline.save(out.join("baseline.avem"))?;
    set.customised.save(out.join("customised.avem"))?;

    let sources = synthetic_classifier_sources(&set, 1000, 2000, a.seed);
    let split = build_classifier_corpus(&sources, 0.8, a.seed)?;
    write_jsonl(out.join("classifier_train.jsonl"), &split.train)?;
    write_jsonl(out.join("classifier_test.jsonl"), &split.test)?;
    write_jsonl(out.join("testset_visual.jsonl"), &build_mixed_test_set(&set.corpus, 0.0, a.seed)?)?;
    write_jsonl(out.join("testset_mixed.jsonl"), &build_mixed_test_set(&set.corpus, 0.5, a.seed)?)?;

    let mut store = synthetic_descriptors(&set)?;
    let mut cfg = ServiceConfig {
        corpus: Some("corpus.jsonl".into()),
        embeddings: Some("baseline.avem".into()),
        descriptors: Some("descriptors.jsonl".into()),
        interaction_log: Some("interactions.jsonl".into()),
        ..ServiceConfig::default()
    };
    if a.no_classifier {
        cfg.engine.classifier_mode = ClassifierMode::RuleBased;
    } else {
        let model = fit(&split.train, &Hyperparams::with_seed(a.seed))?;
        model.save(out.join("classifier.avqc"))?;
        let mut prov = ProvenanceRef::new("avarchive train-classifier", env!("CARGO_PKG_VERSION"));
        prov.training_data_ref = Some(TrainingDataRef::External("classifier_train.jsonl".into()));
        store.register_descriptor(DescriptorRecord {
            descriptor_id: "classifier".into(),
            clip_id: None,
            kind: "query-classifier".into(),
            payload_ref: "classifier.avqc".into(),
            facets: DescriptorFacets {
                level: "conceptual".into(),
                automation: "automatic".into(),
                extraction_time: "training".into(),
                form: "model".into(),
                retrieval: "routing".into(),
                modality: "text".into(),
            },
            provenance: prov,
        })?;
        cfg.classifier = Some("classifier.avqc".into());
        if let Some(acc) = evaluate_accuracy(&model, &split.test) {
            println!("classifier held-out accuracy {acc:.4}");
        }
    }
    store.save(out.join("descriptors.jsonl"))?;
    cfg.save(&out.join("service.json"))?;
    println!(
        "wrote {} clips ({} with transcripts) to {}",
        set.corpus.len(),
        set.corpus.clips.iter().filter(|c| c.speech().is_some()).count(),
        out.display()
    );
    Ok(())
}
