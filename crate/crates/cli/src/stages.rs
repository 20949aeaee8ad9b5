use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{Context, Result};
use larm_core::io::{read_corpus, read_log, write_corpus, write_log};
use larm_core::{InteractionEvent, Rng, SemanticCode, Task, ViewHistory};
use larm_nnkit::Checkpoint;
use larm_quantizer::{
    bits_needed, build_codebooks, code_stats, codebook_corpus, quantize_log, read_quantized_log, storage_estimate,
    write_quantized_log, CodeSource, Codebook, QuantizedLogRecord,
};
use larm_ranking::{evaluate_ranking, train_ranking, RankingModel, RankingParams};
use larm_retrieval::{build_index, evaluate_hit_rate, train_retrieval, TwoTowerModel, TwoTowerParams, Variant};
use larm_simgen::{emit_windows, generate_world, simulate_interactions, split_log, UnsortedPolicy, WindowStore};

use crate::config::{PipelineConfig, SECTIONS};
use crate::error::CliError;
use crate::metrics::Metrics;

/// Retrieval models the pipeline trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RetrievalVariant {
    IdOnly,
    LlmOnly,
    GatedFusion,
    /// Gated fusion plus code-pooled user histories; needs the fused codes.
    UserCodes,
}

impl RetrievalVariant {
    pub const BASE: [Self; 3] = [Self::IdOnly, Self::LlmOnly, Self::GatedFusion];
    pub const ALL: [Self; 4] = [Self::IdOnly, Self::LlmOnly, Self::GatedFusion, Self::UserCodes];

    pub fn name(self) -> &'static str {
        match self {
            Self::IdOnly => "id_only",
            Self::LlmOnly => "llm_only",
            Self::GatedFusion => "gated_fusion",
            Self::UserCodes => "user_codes",
        }
    }

    fn model_variant(self) -> Variant {
        match self {
            Self::IdOnly => Variant::IdOnly,
            Self::LlmOnly => Variant::LlmOnly,
            Self::GatedFusion | Self::UserCodes => Variant::GatedFusion,
        }
    }
}

/// Which embedding the codebooks quantize.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodeKind {
    Raw,
    Fused,
}

impl CodeKind {
    pub const ALL: [Self; 2] = [Self::Raw, Self::Fused];

    pub fn name(self) -> &'static str {
        match self {
            Self::Raw => "raw",
            Self::Fused => "fused",
        }
    }
}

/// Ranking models: no codes, raw-embedding codes, fused-embedding codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankingVariant {
    NoCodes,
    Raw,
    Fused,
}

impl RankingVariant {
    pub const ALL: [Self; 3] = [Self::NoCodes, Self::Raw, Self::Fused];

    pub fn name(self) -> &'static str {
        match self {
            Self::NoCodes => "none",
            Self::Raw => "raw",
            Self::Fused => "fused",
        }
    }

    fn codes(self) -> Option<CodeKind> {
        match self {
            Self::NoCodes => None,
            Self::Raw => Some(CodeKind::Raw),
            Self::Fused => Some(CodeKind::Fused),
        }
    }
}

fn parse_name<T: Copy>(all: &[T], name: fn(T) -> &'static str, s: &str, what: &str) -> Result<T, CliError> {
    all.iter().copied().find(|&v| name(v) == s).ok_or_else(|| {
        let names: Vec<&str> = all.iter().map(|&v| name(v)).collect();
        CliError::Usage(format!("unknown {what} variant '{s}' (expected one of: {})", names.join(", ")))
    })
}

impl FromStr for RetrievalVariant {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        parse_name(&Self::ALL, Self::name, s, "retrieval")
    }
}

impl FromStr for CodeKind {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        parse_name(&Self::ALL, Self::name, s, "codebook")
    }
}

impl FromStr for RankingVariant {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        parse_name(&Self::ALL, Self::name, s, "ranking")
    }
}

/// How far down the pipeline an artifact sits; its file name hashes every
/// config section up to that point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Depth {
    Simulate = 2,
    Retrieval = 3,
    Quantizer = 4,
    Ranking = 5,
}

/// An output directory bound to one configuration.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub config: PipelineConfig,
    pub out: PathBuf,
    pub quiet: bool,
}

impl Workspace {
    pub fn new(config: PipelineConfig, out: impl Into<PathBuf>, quiet: bool) -> Result<Self> {
        let out = out.into();
        std::fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
        Ok(Self { config, out, quiet })
    }

    pub fn hash(&self, depth: Depth) -> String {
        self.config.hash_of(&SECTIONS[..depth as usize])
    }

    /// `<out>/<stem>-<hash>.<ext>`
    pub fn artifact(&self, stem: &str, depth: Depth, ext: &str) -> PathBuf {
        self.out.join(format!("{stem}-{}.{ext}", self.hash(depth)))
    }

    pub fn metrics_path(&self, stage: &str, name: &str, depth: Depth) -> PathBuf {
        self.artifact(&format!("metrics-{stage}-{name}"), depth, "txt")
    }

    fn progress(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn log_path(&self) -> PathBuf {
        self.artifact("log", Depth::Simulate, "tsv")
    }

    fn windows_path(&self) -> PathBuf {
        self.artifact("windows", Depth::Simulate, "bin")
    }

    fn retrieval_path(&self, v: RetrievalVariant) -> PathBuf {
        let depth = if v == RetrievalVariant::UserCodes { Depth::Quantizer } else { Depth::Retrieval };
        self.artifact(&format!("retrieval-{}", v.name()), depth, "ckpt")
    }

    fn codebook_path(&self, k: CodeKind) -> PathBuf {
        self.artifact(&format!("codebook-{}", k.name()), Depth::Quantizer, "bin")
    }

    fn quantized_path(&self, k: CodeKind) -> PathBuf {
        self.artifact(&format!("quantized-{}", k.name()), Depth::Quantizer, "tsv")
    }

    fn ranking_path(&self, v: RankingVariant) -> PathBuf {
        self.artifact(&format!("ranking-{}", v.name()), Depth::Ranking, "ckpt")
    }
}

fn require(path: PathBuf, stage: &'static str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::MissingArtifact { stage, path: path.display().to_string() }.into())
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("cannot write {}", path.display()))?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("cannot read {}", path.display()))?))
}

fn format_err(path: &Path, message: impl Into<String>) -> anyhow::Error {
    CliError::Format { path: path.display().to_string(), message: message.into() }.into()
}

fn meta_get<T: FromStr>(ckpt: &Checkpoint, path: &Path, key: &str) -> Result<T> {
    ckpt.metadata
        .get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| format_err(path, format!("checkpoint metadata lacks a valid '{key}'")))
}

fn sizes_string(s: [usize; 3]) -> String {
    format!("{},{},{}", s[0], s[1], s[2])
}

fn parse_sizes(ckpt: &Checkpoint, path: &Path) -> Result<[usize; 3]> {
    let s: String = meta_get(ckpt, path, "code_sizes")?;
    let v: Vec<usize> = s.split(',').filter_map(|p| p.parse().ok()).collect();
    v.try_into().map_err(|_| format_err(path, "bad code_sizes"))
}

struct Simulated {
    windows: WindowStore,
    log: Vec<InteractionEvent>,
}

impl Simulated {
    fn split(&self, config: &PipelineConfig) -> Result<(Vec<InteractionEvent>, Vec<InteractionEvent>)> {
        Ok(split_log(&self.log, config.split_fraction, UnsortedPolicy::Reject)?)
    }
}

fn load_simulated(ws: &Workspace) -> Result<Simulated> {
    let log_path = require(ws.log_path(), "simulate")?;
    let windows_path = require(ws.windows_path(), "simulate")?;
    let log = read_log(open(&log_path)?).with_context(|| format!("reading {}", log_path.display()))?;
    let (_, rows) = read_corpus(open(&windows_path)?).with_context(|| format!("reading {}", windows_path.display()))?;
    let w = &ws.config.world;
    let windows = WindowStore::from_embeddings(w.n_authors, w.sessions_per_author, w.windows_per_session, rows)
        .ok_or_else(|| format_err(&windows_path, "window count does not match the world config"))?;
    Ok(Simulated { windows, log })
}

/// Generates the world, its windows and the interaction log.
pub fn simulate(ws: &Workspace) -> Result<()> {
    let wc = ws.config.world_config();
    ws.progress(format!("simulate: {} users, {} authors", wc.n_users, wc.n_authors));
    let world = generate_world(&wc)?;
    let windows = emit_windows(&world);
    let (log, _) = simulate_interactions(&world, &windows)?;
    let mut w = create(&ws.log_path())?;
    write_log(&mut w, &log)?;
    w.flush()?;
    let mut w = create(&ws.windows_path())?;
    write_corpus(&mut w, windows.dim(), &windows.mm_rows())?;
    w.flush()?;

    // Metrics describe the stored artifacts, so read them back.
    let sim = load_simulated(ws)?;
    let (train, eval) = sim.split(&ws.config)?;
    let mut m = Metrics::new("simulate");
    m.int("events", sim.log.len());
    m.int("train_events", train.len());
    m.int("eval_events", eval.len());
    m.int("users", wc.n_users);
    m.int("authors", wc.n_authors);
    m.int("windows", sim.windows.len());
    for t in Task::ALL {
        let n = sim.log.iter().filter(|e| e.label(t)).count();
        m.float(&format!("{}_rate", t.name()), n as f64 / sim.log.len().max(1) as f64)?;
    }
    m.save(&ws.metrics_path("simulate", "world", Depth::Simulate))
}

fn load_quantized(ws: &Workspace, kind: CodeKind, expected: usize) -> Result<Vec<QuantizedLogRecord>> {
    let path = require(ws.quantized_path(kind), "quantize")?;
    let records = read_quantized_log(open(&path)?).with_context(|| format!("reading {}", path.display()))?;
    if records.len() != expected {
        return Err(format_err(&path, format!("{} records for a log of {expected} events", records.len())));
    }
    Ok(records)
}

fn code_history(records: &[QuantizedLogRecord]) -> ViewHistory {
    ViewHistory::build(records.iter().map(|r| (&r.event, r.code)))
}

pub fn train_retrieval_stage(ws: &Workspace, variant: RetrievalVariant) -> Result<()> {
    let sim = load_simulated(ws)?;
    let (train, _) = sim.split(&ws.config)?;
    let mut config = ws.config.retrieval_config();
    config.variant = variant.model_variant();
    config.user_codes = variant == RetrievalVariant::UserCodes;
    let coded = if config.user_codes {
        let records = load_quantized(ws, CodeKind::Fused, sim.log.len())?;
        let cb = load_codebook(ws, CodeKind::Fused)?;
        Some((code_history(&records), cb.sizes()))
    } else {
        None
    };
    ws.progress(format!("train-retrieval: {}", variant.name()));
    let (model, report) = train_retrieval(
        &train,
        &sim.windows,
        ws.config.world.n_users,
        coded.as_ref().map(|(h, s)| (h, *s)),
        &config,
    )?;
    let mut meta = BTreeMap::new();
    meta.insert("variant".to_string(), variant.name().to_string());
    meta.insert("epochs_trained".to_string(), report.epoch_losses.len().to_string());
    meta.insert("best_epoch".to_string(), report.best_epoch.to_string());
    meta.insert("pairs".to_string(), report.pairs.to_string());
    if let Some(loss) = report.epoch_losses.last() {
        meta.insert("final_loss".to_string(), loss.to_string());
    }
    if let Some((_, sizes)) = coded {
        meta.insert("code_sizes".to_string(), sizes_string(sizes));
    }
    Checkpoint::from_params("retrieval", &model.params, meta).save(&ws.retrieval_path(variant))?;
    Ok(())
}

fn load_retrieval(ws: &Workspace, variant: RetrievalVariant, windows: &WindowStore) -> Result<(TwoTowerModel, Checkpoint)> {
    let path = require(ws.retrieval_path(variant), "train-retrieval")?;
    let ckpt = Checkpoint::load(&path).with_context(|| format!("reading {}", path.display()))?;
    let config = ws.config.retrieval_config();
    let codes = if variant == RetrievalVariant::UserCodes {
        Some((parse_sizes(&ckpt, &path)?, config.code_dim))
    } else {
        None
    };
    let mut params = TwoTowerParams::init(ws.config.world.n_users, windows.n_authors, windows.dim(), codes, &mut Rng::new(0));
    ckpt.load_into(&mut params).with_context(|| format!("loading {}", path.display()))?;
    let model = TwoTowerModel {
        params,
        variant: variant.model_variant(),
        tau: config.tau,
        normalize: config.normalize,
        branch_norm: config.branch_norm,
    };
    Ok((model, ckpt))
}

pub fn eval_retrieval_stage(ws: &Workspace, variant: RetrievalVariant) -> Result<()> {
    let sim = load_simulated(ws)?;
    let (model, ckpt) = load_retrieval(ws, variant, &sim.windows)?;
    let ckpt_path = ws.retrieval_path(variant);
    let (_, eval) = sim.split(&ws.config)?;
    let history = if variant == RetrievalVariant::UserCodes {
        Some(code_history(&load_quantized(ws, CodeKind::Fused, sim.log.len())?))
    } else {
        None
    };
    ws.progress(format!("eval-retrieval: {}", variant.name()));
    let config = ws.config.retrieval_config();
    let index = build_index(&model, &sim.windows)?;
    let k = config.hitrate_k.min(index.len());
    let report = evaluate_hit_rate(&model, &index, &eval, history.as_ref(), config.history_len, k)?;

    let mut m = Metrics::new(&format!("retrieval.{}", variant.name()));
    m.int("k", k);
    m.int("users", report.users);
    m.text("denominator", config.hitrate_denominator.name());
    m.float("hitrate", report.value(config.hitrate_denominator))?;
    m.float("hitrate_precision", report.precision)?;
    m.float("hitrate_recall", report.recall)?;
    if model.variant == Variant::GatedFusion {
        let g = model.gate_stats();
        m.float("gate_mean", g.mean)?;
        m.float("gate_p10", g.p10)?;
        m.float("gate_p50", g.p50)?;
        m.float("gate_p90", g.p90)?;
    }
    let epochs: usize = meta_get(&ckpt, &ckpt_path, "epochs_trained")?;
    m.int("epochs_trained", epochs);
    m.int("best_epoch", meta_get::<usize>(&ckpt, &ckpt_path, "best_epoch")?);
    if epochs > 0 {
        m.float("final_loss", meta_get(&ckpt, &ckpt_path, "final_loss")?)?;
    }
    let depth = if variant == RetrievalVariant::UserCodes { Depth::Quantizer } else { Depth::Retrieval };
    m.save(&ws.metrics_path("retrieval", variant.name(), depth))
}

fn load_codebook(ws: &Workspace, kind: CodeKind) -> Result<Codebook> {
    let path = require(ws.codebook_path(kind), "build-codebooks")?;
    Codebook::load(open(&path)?).with_context(|| format!("reading {}", path.display()))
}

pub fn build_codebooks_stage(ws: &Workspace, kind: CodeKind) -> Result<()> {
    let sim = load_simulated(ws)?;
    let fused = match kind {
        CodeKind::Fused => Some(load_retrieval(ws, RetrievalVariant::GatedFusion, &sim.windows)?.0),
        CodeKind::Raw => None,
    };
    let source = fused.as_ref().map_or(CodeSource::RawMm, CodeSource::Fused);
    let q = &ws.config.quantizer;
    ws.progress(format!("build-codebooks: {}", kind.name()));
    let corpus = codebook_corpus(source, &sim.windows, q.scope)?;
    let cb = build_codebooks(&corpus, q.sizes, q.max_iters, ws.config.seed)?;
    let path = ws.codebook_path(kind);
    let mut w = create(&path)?;
    cb.save(&mut w)?;
    w.flush()?;

    let mut m = Metrics::new(&format!("codebooks.{}", kind.name()));
    m.int("corpus_rows", corpus.rows());
    m.text("sizes", &sizes_string(cb.sizes()));
    for l in 0..3 {
        m.float(&format!("level{}_mse", l + 1), cb.level_mse[l])?;
        m.float(&format!("level{}_inertia", l + 1), cb.inertia[l])?;
    }
    m.save(&ws.metrics_path("codebooks", kind.name(), Depth::Quantizer))?;
    storage_metrics(ws)
}

/// The production-scale estimate plus one at this config's scale, with
/// each code stored in the bits its codebook needs.
fn storage_metrics(ws: &Workspace) -> Result<()> {
    let mut m = Metrics::new("storage");
    let prod = storage_estimate(100_000_000, 10_000, 256, 32, 3, 8);
    m.text("production_raw_bytes", &prod.raw_bytes.to_string());
    m.text("production_coded_bytes", &prod.coded_bytes.to_string());
    m.float("production_ratio", prod.ratio)?;
    let c = &ws.config;
    let bits = c.quantizer.sizes.iter().map(|&k| bits_needed(k)).max().unwrap_or(1).max(1);
    let est = storage_estimate(
        c.world.n_users as u64,
        c.ranking.history_len as u64,
        c.world.dim as u64,
        32,
        3,
        bits as u64,
    );
    m.int("code_bits", bits as usize);
    m.text("config_raw_bytes", &est.raw_bytes.to_string());
    m.text("config_coded_bytes", &est.coded_bytes.to_string());
    m.float("config_ratio", est.ratio)?;
    m.save(&ws.metrics_path("codebooks", "storage", Depth::Quantizer))
}

pub fn quantize_stage(ws: &Workspace, kind: CodeKind) -> Result<()> {
    let sim = load_simulated(ws)?;
    let cb = load_codebook(ws, kind)?;
    let fused = match kind {
        CodeKind::Fused => Some(load_retrieval(ws, RetrievalVariant::GatedFusion, &sim.windows)?.0),
        CodeKind::Raw => None,
    };
    let source = fused.as_ref().map_or(CodeSource::RawMm, CodeSource::Fused);
    ws.progress(format!("quantize: {}", kind.name()));
    let records = quantize_log(&sim.log, &sim.windows, source, &cb)?;
    let mut w = create(&ws.quantized_path(kind))?;
    write_quantized_log(&mut w, &records)?;
    w.flush()?;

    let stats = code_stats(&records);
    let mut m = Metrics::new(&format!("quantize.{}", kind.name()));
    m.int("records", records.len());
    for (l, counts) in stats.level_counts.iter().enumerate() {
        m.int(&format!("level{}_codes_used", l + 1), counts.len());
    }
    m.int("prefix_groups", stats.prefix_groups.len());
    let widest = stats.prefix_groups.iter().map(|g| g.authors.len()).max().unwrap_or(0);
    m.int("max_authors_per_prefix", widest);
    m.save(&ws.metrics_path("quantize", kind.name(), Depth::Quantizer))
}

/// Records for ranking: quantized for code variants, zero codes otherwise.
fn ranking_records(ws: &Workspace, sim: &Simulated, variant: RankingVariant) -> Result<(Vec<QuantizedLogRecord>, [usize; 3])> {
    match variant.codes() {
        Some(kind) => {
            let cb = load_codebook(ws, kind)?;
            Ok((load_quantized(ws, kind, sim.log.len())?, cb.sizes()))
        }
        None => {
            let zero = SemanticCode::new(0, 0, 0);
            let records = sim.log.iter().map(|&event| QuantizedLogRecord { event, code: zero }).collect();
            Ok((records, [1, 1, 1]))
        }
    }
}

pub fn train_ranking_stage(ws: &Workspace, variant: RankingVariant) -> Result<()> {
    let sim = load_simulated(ws)?;
    let (records, sizes) = ranking_records(ws, &sim, variant)?;
    let (train, _) = sim.split(&ws.config)?;
    let history = code_history(&records);
    let config = ws.config.ranking_config();
    ws.progress(format!("train-ranking: {}", variant.name()));
    let w = &ws.config.world;
    let (model, report) = train_ranking(
        &records[..train.len()],
        &history,
        w.n_users,
        w.n_authors,
        sizes,
        &config,
        variant != RankingVariant::NoCodes,
    )?;
    let mut meta = BTreeMap::new();
    meta.insert("variant".to_string(), variant.name().to_string());
    meta.insert("epochs_trained".to_string(), report.epoch_losses.len().to_string());
    meta.insert("examples".to_string(), report.examples.to_string());
    meta.insert("code_sizes".to_string(), sizes_string(sizes));
    if let Some(loss) = report.epoch_losses.last() {
        meta.insert("final_loss".to_string(), loss.to_string());
    }
    Checkpoint::from_params("ranking", &model.params, meta).save(&ws.ranking_path(variant))?;
    Ok(())
}

pub fn eval_ranking_stage(ws: &Workspace, variant: RankingVariant) -> Result<()> {
    let sim = load_simulated(ws)?;
    let path = require(ws.ranking_path(variant), "train-ranking")?;
    let ckpt = Checkpoint::load(&path).with_context(|| format!("reading {}", path.display()))?;
    let sizes = parse_sizes(&ckpt, &path)?;
    let (records, _) = ranking_records(ws, &sim, variant)?;
    let (train, _) = sim.split(&ws.config)?;
    let config = ws.config.ranking_config();
    let w = &ws.config.world;
    let mut params = RankingParams::init(
        w.n_users,
        w.n_authors,
        sizes,
        config.dim,
        config.effective_code_dim(),
        config.experts,
        Task::COUNT,
        &mut Rng::new(0),
    );
    ckpt.load_into(&mut params).with_context(|| format!("loading {}", path.display()))?;
    let model = RankingModel { params, tasks: Task::ALL.to_vec(), with_codes: variant != RankingVariant::NoCodes };
    ws.progress(format!("eval-ranking: {}", variant.name()));
    let report = evaluate_ranking(&model, &records[train.len()..], &code_history(&records), config.history_len)?;

    let mut m = Metrics::new(&format!("ranking.{}", variant.name()));
    let epochs: usize = meta_get(&ckpt, &path, "epochs_trained")?;
    m.int("epochs_trained", epochs);
    if epochs > 0 {
        m.float("final_loss", meta_get(&ckpt, &path, "final_loss")?)?;
    }
    for t in &report.tasks {
        let name = t.task.name();
        m.int(&format!("{name}_samples"), t.samples);
        m.int(&format!("{name}_positives"), t.positives);
        m.optional(&format!("{name}_auc"), t.auc)?;
        m.optional(&format!("{name}_gauc"), t.gauc)?;
    }
    m.save(&ws.metrics_path("ranking", variant.name(), Depth::Ranking))
}
