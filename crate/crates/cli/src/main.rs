mod setup;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pgmr::generation::{record_prompts, PromptMode, ReplayProvider};
use pgmr::harness::dataset::write_samples;
use pgmr::harness::pipeline::{prepare_prompt, Resources};
use pgmr::harness::{
    benchmark_lookup, build_unknown_uri_split, load_dataset, measure_latency, oracle_fixture,
    run_memory_scaling, run_pipeline, run_refusal_experiment, write_json, write_jsonl,
    DatasetFormat, ExperimentConfig, SplitOptions, Split,
};
use pgmr::kg::{open_memory, save_snapshot, write_metadata, Memory, UriKind};
use pgmr::synth::corpus::{generate_corpus, CorpusOptions};
use pgmr::transform::{render_pgmr, sparql_to_pgmr, TransformedRecord};

use setup::Loaded;

#[derive(Parser)]
#[command(name = "pgmr", version, about = "Intermediate-query generation with post-hoc URI grounding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Entity,
    Relation,
}

impl From<Kind> for UriKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Entity => UriKind::Entity,
            Kind::Relation => UriKind::Relation,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Direct,
    Rag,
    Pgmr,
}

impl From<Mode> for PromptMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Direct => PromptMode::Direct,
            Mode::Rag => PromptMode::Rag,
            Mode::Pgmr => PromptMode::Pgmr,
        }
    }
}

/// Flags that override keys of the config file.
#[derive(Args, Default)]
struct Overrides {
    #[arg(long, value_enum)]
    pipeline: Option<Mode>,
    #[arg(long)]
    threshold: Option<f32>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    ablation_fraction: Option<f64>,
    #[arg(long)]
    memory_factor: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    restrict_ties: bool,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Replay fixture file.
    #[arg(long)]
    fixtures: Option<PathBuf>,
    /// Call the configured chat service instead of replaying.
    #[arg(long)]
    live: bool,
    #[arg(long)]
    simulated_latency_ms: Option<f64>,
}

impl Overrides {
    fn apply(&self, c: &mut ExperimentConfig) {
        if let Some(v) = self.pipeline {
            c.pipeline = v.into();
        }
        if let Some(v) = self.threshold {
            c.threshold = v;
        }
        if let Some(v) = self.k {
            c.k = v;
        }
        if let Some(v) = self.ablation_fraction {
            c.ablation_fraction = v;
        }
        if let Some(v) = self.memory_factor {
            c.memory_factor = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.workers {
            c.workers = v;
        }
        if self.restrict_ties {
            c.restrict_ties = true;
        }
        if let Some(v) = &self.output_dir {
            c.output_dir = v.clone();
        }
        if let Some(v) = &self.fixtures {
            c.generation.fixtures = Some(v.clone());
        }
        if self.live {
            c.generation.live = true;
        }
        if let Some(v) = self.simulated_latency_ms {
            c.generation.simulated_latency_ms = v;
        }
    }
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (TOML).
    config: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

impl ConfigArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut c = ExperimentConfig::load(&self.config)?;
        self.overrides.apply(&mut c);
        if self.overrides.live {
            c.apply_env();
        }
        c.validate()?;
        Ok(c)
    }

    fn load(&self) -> Result<Loaded> {
        let c = self.config()?;
        let provider = setup::provider(&c)?;
        Loaded::new(c, provider)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Rewrite a dataset's gold queries into the intermediate format.
    Transform {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "jsonl")]
        format: DatasetFormat,
        #[arg(long)]
        entities: PathBuf,
        #[arg(long)]
        relations: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate a metadata file and store it as a binary snapshot.
    BuildMemory {
        #[arg(long)]
        metadata: PathBuf,
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Embed a memory (metadata or snapshot) with the configured encoder.
    EmbedMemory {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        out: PathBuf,
        /// Dimension of the offline hashed encoder.
        #[arg(long, default_value_t = pgmr::retrieval::DEFAULT_DIMENSION, conflicts_with = "config")]
        dimension: usize,
        /// Take the encoder settings from this experiment config instead.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Split a dataset so every test question has a URI unseen in training.
    SplitUnknownUri {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "jsonl")]
        format: DatasetFormat,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 0.1)]
        test_fraction: f64,
        #[arg(long, default_value_t = 0.1)]
        valid_fraction: f64,
        /// Fail unless the requested test size is reached.
        #[arg(long)]
        require_full: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one pipeline over the dataset and score it.
    Run(ConfigArgs),
    /// Refusal accuracy and answerable SQM over ablation × threshold.
    RefusalSweep(ConfigArgs),
    /// SQM as the entity memory is inflated with distractors.
    MemoryScale(ConfigArgs),
    /// Per-question timing and the lookup benchmark.
    Latency {
        #[command(flatten)]
        args: ConfigArgs,
        /// Skip the large-memory lookup benchmark.
        #[arg(long)]
        no_benchmark: bool,
    },
    /// Send every prompt to the live model and store the answers.
    RecordFixtures {
        #[command(flatten)]
        args: ConfigArgs,
        /// Fixture path; defaults to generation.fixtures.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic corpus, memories, oracle fixture and config.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        duplicate_labels: f64,
        /// Share of bindings given a label typo in the oracle fixture.
        #[arg(long, default_value_t = 0.3)]
        label_noise: f64,
        #[arg(long, value_enum, default_value = "pgmr")]
        pipeline: Mode,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Transform {
            dataset,
            format,
            entities,
            relations,
            out,
        } => transform(&dataset, format, &entities, &relations, &out),
        Command::BuildMemory {
            metadata,
            kind,
            out,
        } => {
            let m = Memory::load_metadata(&metadata, kind.into())?;
            save_snapshot(&m, &out)?;
            log::info!("{} records -> {}", m.len(), out.display());
            Ok(())
        }
        Command::EmbedMemory {
            input,
            kind,
            out,
            dimension,
            config,
        } => {
            let embedder = match config {
                Some(p) => setup::embedder(&ExperimentConfig::load(&p)?.embedder),
                None => setup::embedder(&pgmr::harness::EmbedderConfig::Hashed { dimension }),
            };
            let m = open_memory(&input, kind.into())?.embed(embedder.as_ref())?;
            save_snapshot(&m, &out)?;
            log::info!("{} records embedded -> {}", m.len(), out.display());
            Ok(())
        }
        Command::SplitUnknownUri {
            dataset,
            format,
            seed,
            test_fraction,
            valid_fraction,
            require_full,
            out,
        } => {
            let loaded = load_dataset(&dataset, format, Split::Train)?;
            let split = build_unknown_uri_split(
                &loaded.samples,
                seed,
                SplitOptions {
                    test_fraction,
                    valid_fraction,
                    require_full,
                },
            )?;
            std::fs::create_dir_all(&out)?;
            write_samples(out.join("train.jsonl"), &split.train)?;
            write_samples(out.join("valid.jsonl"), &split.valid)?;
            write_samples(out.join("test.jsonl"), &split.test)?;
            write_json(&out.join("split.json"), &split.report)?;
            log::info!(
                "train {}, valid {}, test {} (requested {})",
                split.report.train,
                split.report.valid,
                split.report.test,
                split.report.requested_test
            );
            Ok(())
        }
        Command::Run(args) => run(&args.load()?),
        Command::RefusalSweep(args) => {
            let l = args.load()?;
            let mut ablations = l.config.sweep.ablations.clone();
            if let Some(a) = args.overrides.ablation_fraction {
                ablations = vec![a];
            }
            let report = run_refusal_experiment(
                &l.samples,
                &l.settings,
                &l.resources(),
                &ablations,
                &l.config.sweep.thresholds,
                l.config.seed,
            )?;
            for r in &report.rows {
                log::info!(
                    "ablation {:.2} threshold {:.2}: refusal {:?}, answerable SQM {:?}",
                    r.ablation,
                    r.threshold,
                    r.refusal_accuracy,
                    r.answerable_sqm
                );
            }
            emit(&l.config.output_dir.join("refusal.json"), &report)
        }
        Command::MemoryScale(args) => {
            let l = args.load()?;
            let factors = &l.config.scaling.factors;
            let max = factors.iter().copied().max().unwrap_or(1);
            let pool = l.distractors(l.entities.len() * (max - 1))?;
            let report = run_memory_scaling(&l.samples, &l.settings, &l.resources(), factors, &pool)?;
            for r in &report.rows {
                log::info!("factor {}: SQM {:.2}", r.factor, r.eval.sqm);
            }
            emit(&l.config.output_dir.join("scaling.json"), &report)
        }
        Command::Latency { args, no_benchmark } => {
            let l = args.load()?;
            let (mut report, timings) = measure_latency(&l.samples, &l.settings, &l.resources());
            if !no_benchmark {
                let c = &l.config.latency;
                report.lookup_benchmark = Some(benchmark_lookup(
                    c.memory_size,
                    l.embedder.dimension(),
                    c.probes,
                    c.budget_ms / 1e3,
                    l.config.seed,
                )?);
            }
            let t = &report.run.timing;
            log::info!(
                "pipeline {:.4}s vs {:.4}s + {:.2} x {:.6}s (error {:.1}%)",
                t.t_pipeline_mean,
                t.t_generation_mean,
                t.k_mean,
                t.t_retrieval_mean,
                t.relative_error * 100.0
            );
            write_jsonl(&l.config.output_dir.join("latency_timings.jsonl"), &timings)?;
            emit(&l.config.output_dir.join("latency.json"), &report)
        }
        Command::RecordFixtures { mut args, out } => {
            args.overrides.live = true;
            let l = args.load()?;
            let path = out
                .or_else(|| l.config.generation.fixtures.clone())
                .context("no fixture path: pass --out or set generation.fixtures")?;
            record(&l, &path)
        }
        Command::Synth {
            out,
            samples,
            seed,
            duplicate_labels,
            label_noise,
            pipeline,
        } => synth(&out, samples, seed, duplicate_labels, label_noise, pipeline.into()),
    }
}

fn emit<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    write_json(path, value).with_context(|| format!("writing {}", path.display()))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn transform(
    dataset: &Path,
    format: DatasetFormat,
    entities: &Path,
    relations: &Path,
    out: &Path,
) -> Result<()> {
    let ents = open_memory(entities, UriKind::Entity)?;
    let rels = open_memory(relations, UriKind::Relation)?;
    let loaded = load_dataset(dataset, format, Split::Train)?;
    let mut records = Vec::new();
    let mut failed = 0;
    for s in &loaded.samples {
        match sparql_to_pgmr(&s.gold_sparql, &ents, &rels) {
            Ok(t) => records.push(TransformedRecord {
                question: s.question.clone(),
                pgmr_text: render_pgmr(&t.query),
                gold_sparql: s.gold_sparql.clone(),
            }),
            Err(e) => {
                failed += 1;
                log::warn!("{}: {e}", s.id);
            }
        }
    }
    write_jsonl(out, &records)?;
    log::info!(
        "{} transformed, {failed} skipped, {} quarantined -> {}",
        records.len(),
        loaded.quarantined.len(),
        out.display()
    );
    Ok(())
}

fn run(l: &Loaded) -> Result<()> {
    let c = &l.config;
    let mut entities = None;
    if c.ablation_fraction > 0.0 {
        let (ablated, removed) = l.entities.ablate(c.ablation_fraction, c.seed)?;
        log::info!("ablated {} entity records", removed.len());
        entities = Some(ablated);
    }
    if c.memory_factor > 1 {
        let base = entities.as_ref().unwrap_or(&l.entities);
        let pool = l.distractors(base.len() * (c.memory_factor - 1))?;
        let pool = Memory::from_records(UriKind::Entity, pool)?.embed(l.embedder.as_ref())?;
        entities = Some(base.augment_with_distractors(pool.records(), c.memory_factor)?);
    }
    let res = Resources {
        entity_mem: entities.as_ref().unwrap_or(&l.entities),
        ..l.resources()
    };
    let report = run_pipeline(&l.samples, &l.settings, &res);
    let dir = &c.output_dir;
    write_jsonl(&dir.join("records.jsonl"), &report.records)?;
    write_jsonl(&dir.join("timings.jsonl"), &report.timings)?;
    let summary = serde_json::json!({
        "config": c,
        "summary": report.summary,
    });
    let e = &report.summary.eval;
    log::info!(
        "n {} SQM {:.2} BLEU {:.2} Qid EM {:.2} Pid EM {:.2} hallucination {:.2} refusals {}",
        e.n,
        e.sqm,
        e.bleu,
        e.qid_em,
        e.pid_em,
        e.uri_hallucination,
        e.refusals
    );
    emit(&dir.join("summary.json"), &summary)
}

fn record(l: &Loaded, path: &Path) -> Result<()> {
    let res = l.resources();
    let prompts = l
        .samples
        .iter()
        .map(|s| prepare_prompt(&s.question, &l.settings.spec, &res).map(|p| p.prompt))
        .collect::<Result<Vec<_>, _>>()?;
    let summary = record_prompts(
        &prompts,
        l.provider.as_ref(),
        &l.settings.params,
        path,
        l.config.generation.in_flight,
    )?;
    log::info!(
        "{} entries ({} reused, {} requested, {} failed) -> {}",
        summary.entries,
        summary.reused,
        summary.requested,
        summary.failures,
        path.display()
    );
    if summary.failures > 0 {
        bail!("{} prompts failed; rerun to retry them", summary.failures);
    }
    Ok(())
}

fn synth(
    out: &Path,
    samples: usize,
    seed: u64,
    duplicate_labels: f64,
    label_noise: f64,
    mode: PromptMode,
) -> Result<()> {
    let mut opts = CorpusOptions::new(samples, seed);
    opts.duplicate_labels = duplicate_labels;
    let corpus = generate_corpus(&opts);
    std::fs::create_dir_all(out)?;
    write_metadata(out.join("entities.jsonl"), corpus.entities.records())?;
    write_metadata(out.join("relations.jsonl"), corpus.relations.records())?;
    write_samples(out.join("dataset.jsonl"), &corpus.samples)?;

    let mode_name = match mode {
        PromptMode::Direct => "direct",
        PromptMode::Rag => "rag",
        PromptMode::Pgmr => "pgmr",
    };
    let text = format!(
        "seed = {seed}\npipeline = \"{mode_name}\"\noutput_dir = \"out\"\n\n\
         [data]\ndataset = \"dataset.jsonl\"\nentities = \"entities.jsonl\"\nrelations = \"relations.jsonl\"\n\n\
         [generation]\nfixtures = \"fixtures.jsonl\"\n"
    );
    let config_path = out.join("config.toml");
    std::fs::write(&config_path, text)?;

    let config = ExperimentConfig::load(&config_path)?;
    let l = Loaded::new(config, Box::new(ReplayProvider::default()))?;
    let entries = oracle_fixture(&l.samples, &l.settings.spec, &l.resources(), label_noise, seed)?;
    pgmr::generation::write_fixture(&out.join("fixtures.jsonl"), &entries)?;
    log::info!(
        "{} samples, {} entities, {} relations -> {}",
        corpus.samples.len(),
        corpus.entities.len(),
        corpus.relations.len(),
        out.display()
    );
    Ok(())
}
