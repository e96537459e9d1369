//! Configuration, stage commands and the end-to-end run.
//!
//! The configuration file is plain text with one `key = value` pair per line. Blank
//! lines and lines starting with `#` are ignored. Relative paths are resolved against
//! the directory holding the file. Command-line flags override file values.
//!
//! | key | default |
//! |-----|---------|
//! | `train`, `dev`, `test` | unset |
//! | `corpus` | unset |
//! | `output_dir` | `out` |
//! | `index` | `{output_dir}/index.bm25` |
//! | `checkpoint` | `{output_dir}/model.ckpt` |
//! | `cell_cap` | 200 |
//! | `layers`, `node_dim`, `msg_dim`, `type_dim` | 3, 200, 200, 40 |
//! | `dropout`, `top_rows`, `top_cols` | 0.2, 3, 3 |
//! | `epochs`, `patience`, `lr`, `weight_decay` | 50, 10, 0.001, 0.01 |
//! | `max_tokens`, `min_count` | 35, 1 |
//! | `bm25_k1`, `bm25_b`, `drop_stopwords` | 0.9, 0.4, false |
//! | `mode` | `template` (or `remote`) |
//! | `endpoint`, `timeout_secs` | unset, 30 |
//! | `beam_size`, `length_penalty`, `gen_max_tokens` | 3, 1.0, 128 |
//! | `predict_split` | `test` |
//! | `seed` | 0 |

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::featurizer::FeaturizerError;
use crate::fusion::{assemble, compose_template_answer, headed_cells, FusionError, GenerationConfig, RemoteGenerator};
use crate::gnn::{
    read_checkpoint, train, write_checkpoint, Checkpoint, CheckpointError, GatConfig, GnnError, RAdam, TrainConfig,
    TrainingMetadata,
};
use crate::metrics::{evaluate_run, EvalReport, MetricsError, Prediction};
use crate::retrieval::{build_index, parse_corpus, Bm25Params, InvertedIndex, RetrievalError};
use crate::table::{linearize_cells, parse_dataset, Dataset, Split, TableError, DEFAULT_CELL_CAP};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{path}: line {line}: {message}")]
    Config { path: String, line: usize, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("configuration key `{0}` is required for this command")]
    Missing(&'static str),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Dataset {
        path: String,
        #[source]
        source: TableError,
    },
    #[error("{path}: file contains no examples")]
    EmptyDataset { path: String },
    #[error("{path}: {source}")]
    Retrieval {
        path: String,
        #[source]
        source: RetrievalError,
    },
    #[error("{path}: {source}")]
    Checkpoint {
        path: String,
        #[source]
        source: CheckpointError,
    },
    #[error("{path}: line {line}: bad prediction record: {message}")]
    Prediction { path: String, line: usize, message: String },
    #[error("example {id}: {source}")]
    Example {
        id: String,
        #[source]
        source: Box<PipelineError>,
    },
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Featurizer(#[from] FeaturizerError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum GenerationMode {
    Template,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub index: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub cell_cap: usize,
    pub gat: GatConfig,
    pub epochs: usize,
    pub patience: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub max_tokens: usize,
    pub min_count: usize,
    pub bm25: Bm25Params,
    pub drop_stopwords: bool,
    pub mode: GenerationMode,
    pub endpoint: Option<String>,
    pub timeout_secs: f64,
    pub generation: GenerationConfig,
    pub predict_split: Split,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            train: None,
            dev: None,
            test: None,
            corpus: None,
            output_dir: PathBuf::from("out"),
            index: None,
            checkpoint: None,
            cell_cap: DEFAULT_CELL_CAP,
            gat: GatConfig::default(),
            epochs: train.epochs,
            patience: train.patience,
            lr: train.optimizer.lr,
            weight_decay: train.optimizer.weight_decay,
            max_tokens: train.max_tokens,
            min_count: train.min_count,
            bm25: Bm25Params::default(),
            drop_stopwords: false,
            mode: GenerationMode::Template,
            endpoint: None,
            timeout_secs: 30.0,
            generation: GenerationConfig::default(),
            predict_split: Split::Test,
            seed: 0,
        }
    }
}

fn parse_value<T: std::str::FromStr>(value: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| format!("cannot parse `{value}`: {e}"))
}

fn parse_split(value: &str) -> Result<Split, String> {
    match value {
        "train" => Ok(Split::Train),
        "dev" => Ok(Split::Dev),
        "test" => Ok(Split::Test),
        _ => Err(format!("unknown split `{value}`")),
    }
}

impl PipelineConfig {
    /// Parses the key/value text. Relative paths are joined onto `base_dir`.
    pub fn parse(text: &str, base_dir: &Path, origin: &str) -> Result<Self, PipelineError> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| PipelineError::Config {
                path: origin.to_string(),
                line: idx + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err("expected `key = value`".to_string()))?;
            cfg.set(key.trim(), value.trim(), base_dir).map_err(err)?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, &path.display().to_string())
    }

    fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<(), String> {
        let path = || base.join(value);
        match key {
            "train" => self.train = Some(path()),
            "dev" => self.dev = Some(path()),
            "test" => self.test = Some(path()),
            "corpus" => self.corpus = Some(path()),
            "output_dir" => self.output_dir = path(),
            "index" => self.index = Some(path()),
            "checkpoint" => self.checkpoint = Some(path()),
            "cell_cap" => self.cell_cap = parse_value(value)?,
            "layers" => self.gat.layers = parse_value(value)?,
            "node_dim" => self.gat.node_dim = parse_value(value)?,
            "msg_dim" => self.gat.msg_dim = parse_value(value)?,
            "type_dim" => self.gat.type_dim = parse_value(value)?,
            "dropout" => self.gat.dropout = parse_value(value)?,
            "top_rows" => self.gat.top_rows = parse_value(value)?,
            "top_cols" => self.gat.top_cols = parse_value(value)?,
            "epochs" => self.epochs = parse_value(value)?,
            "patience" => self.patience = parse_value(value)?,
            "lr" => self.lr = parse_value(value)?,
            "weight_decay" => self.weight_decay = parse_value(value)?,
            "max_tokens" => self.max_tokens = parse_value(value)?,
            "min_count" => self.min_count = parse_value(value)?,
            "bm25_k1" => self.bm25.k1 = parse_value(value)?,
            "bm25_b" => self.bm25.b = parse_value(value)?,
            "drop_stopwords" => self.drop_stopwords = parse_value(value)?,
            "mode" => {
                self.mode = match value {
                    "template" => GenerationMode::Template,
                    "remote" => GenerationMode::Remote,
                    _ => return Err(format!("unknown mode `{value}`")),
                }
            }
            "endpoint" => self.endpoint = Some(value.to_string()),
            "timeout_secs" => self.timeout_secs = parse_value(value)?,
            "beam_size" => self.generation.beam_size = parse_value(value)?,
            "length_penalty" => self.generation.length_penalty = parse_value(value)?,
            "gen_max_tokens" => self.generation.max_tokens = parse_value(value)?,
            "predict_split" => self.predict_split = parse_split(value)?,
            "seed" => self.seed = parse_value(value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.gat.validate()?;
        self.bm25
            .validate()
            .map_err(|e| PipelineError::Invalid(e.to_string()))?;
        if self.mode == GenerationMode::Remote && self.endpoint.as_deref().is_none_or(str::is_empty) {
            return Err(PipelineError::Invalid("mode = remote requires an endpoint".into()));
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(PipelineError::Invalid("timeout_secs must be positive".into()));
        }
        Ok(())
    }

    pub fn index_path(&self) -> PathBuf {
        self.index.clone().unwrap_or_else(|| self.output_dir.join("index.bm25"))
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.output_dir.join("model.ckpt"))
    }

    pub fn vocab_path(&self) -> PathBuf {
        self.output_dir.join("vocab.tsv")
    }

    pub fn train_log_path(&self) -> PathBuf {
        self.output_dir.join("train_log.jsonl")
    }

    pub fn predictions_path(&self, split: Split) -> PathBuf {
        self.output_dir.join(format!("predictions.{split}.jsonl"))
    }

    pub fn report_path(&self, split: Split) -> PathBuf {
        self.output_dir.join(format!("report.{split}.json"))
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.output_dir.join("manifest.json")
    }

    pub fn split_path(&self, split: Split) -> Option<&Path> {
        match split {
            Split::Train => self.train.as_deref(),
            Split::Dev => self.dev.as_deref(),
            Split::Test => self.test.as_deref(),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            patience: self.patience,
            optimizer: RAdam {
                lr: self.lr,
                weight_decay: self.weight_decay,
                ..RAdam::default()
            },
            max_tokens: self.max_tokens,
            min_count: self.min_count,
            seed: self.seed,
            ..TrainConfig::default()
        }
    }
}

/// Writes through a temporary file in the destination directory and renames it into place.
pub fn write_atomic<F>(path: &Path, write: F) -> Result<(), PipelineError>
where
    F: FnOnce(&mut BufWriter<&mut File>) -> std::io::Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        write(&mut w).map_err(io_err(path))?;
        w.flush().map_err(io_err(path))?;
    }
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| PipelineError::Io {
        path: path.display().to_string(),
        source: e.error,
    })?;
    Ok(())
}

pub fn sha256_file(path: &Path) -> Result<String, PipelineError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn load_split(config: &PipelineConfig, split: Split) -> Result<Dataset, PipelineError> {
    let path = config.split_path(split).ok_or(match split {
        Split::Train => PipelineError::Missing("train"),
        Split::Dev => PipelineError::Missing("dev"),
        Split::Test => PipelineError::Missing("test"),
    })?;
    let file = File::open(path).map_err(io_err(path))?;
    let dataset = parse_dataset(BufReader::new(file), split, config.cell_cap).map_err(|source| PipelineError::Dataset {
        path: path.display().to_string(),
        source,
    })?;
    if dataset.is_empty() {
        return Err(PipelineError::EmptyDataset {
            path: path.display().to_string(),
        });
    }
    Ok(dataset)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeSummary {
    pub min: usize,
    pub max: usize,
    pub mean: f64,
}

impl SizeSummary {
    fn of(values: impl Iterator<Item = usize>) -> Self {
        let values: Vec<usize> = values.collect();
        Self {
            min: values.iter().copied().min().unwrap_or(0),
            max: values.iter().copied().max().unwrap_or(0),
            mean: values.iter().sum::<usize>() as f64 / values.len().max(1) as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub split: Split,
    pub examples: usize,
    pub truncated: usize,
    pub rows: SizeSummary,
    pub cols: SizeSummary,
    pub cells: SizeSummary,
}

impl SplitStats {
    pub fn of(dataset: &Dataset) -> Self {
        let tables = || dataset.examples.iter().map(|e| &e.table);
        Self {
            split: dataset.split,
            examples: dataset.len(),
            truncated: dataset.truncated_count(),
            rows: SizeSummary::of(tables().map(|t| t.n_rows())),
            cols: SizeSummary::of(tables().map(|t| t.n_cols())),
            cells: SizeSummary::of(tables().map(|t| t.n_cells())),
        }
    }
}

/// Parses every configured split and writes `ingest.json`.
pub fn cmd_ingest(config: &PipelineConfig) -> Result<Vec<SplitStats>, PipelineError> {
    let mut stats = Vec::new();
    for split in [Split::Train, Split::Dev, Split::Test] {
        if config.split_path(split).is_some() {
            stats.push(SplitStats::of(&load_split(config, split)?));
        }
    }
    if stats.is_empty() {
        return Err(PipelineError::Missing("train"));
    }
    write_atomic(&config.output_dir.join("ingest.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &stats)?;
        writeln!(w)
    })?;
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexStats {
    pub docs: usize,
    pub terms: usize,
    pub avg_doc_len: f64,
}

pub fn cmd_build_index(config: &PipelineConfig) -> Result<IndexStats, PipelineError> {
    let corpus_path = config.corpus.as_deref().ok_or(PipelineError::Missing("corpus"))?;
    let retrieval_err = |source| PipelineError::Retrieval {
        path: corpus_path.display().to_string(),
        source,
    };
    let file = File::open(corpus_path).map_err(io_err(corpus_path))?;
    let docs = parse_corpus(BufReader::new(file)).map_err(retrieval_err)?;
    let index = build_index(docs, config.bm25).map_err(retrieval_err)?;
    write_atomic(&config.index_path(), |w| index.write_to(w))?;
    Ok(IndexStats {
        docs: index.doc_count(),
        terms: index.term_count(),
        avg_doc_len: index.avg_doc_len(),
    })
}

pub fn load_index(path: &Path) -> Result<InvertedIndex, PipelineError> {
    let file = File::open(path).map_err(io_err(path))?;
    InvertedIndex::read_from(BufReader::new(file)).map_err(|source| PipelineError::Retrieval {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, PipelineError> {
    let file = File::open(path).map_err(io_err(path))?;
    read_checkpoint(BufReader::new(file)).map_err(|source| PipelineError::Checkpoint {
        path: path.display().to_string(),
        source,
    })
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<(), PipelineError> {
    let mut result = Ok(());
    write_atomic(path, |w| {
        result = write_checkpoint(checkpoint, &mut *w);
        Ok(())
    })?;
    result.map_err(|source| PipelineError::Checkpoint {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_dev_f1: f64,
}

/// Trains the selector and writes the checkpoint, the vocabulary and the per-epoch log.
pub fn cmd_train(config: &PipelineConfig) -> Result<TrainSummary, PipelineError> {
    let train_set = load_split(config, Split::Train)?;
    let dev_set = load_split(config, Split::Dev)?;
    let outcome = train(&train_set, &dev_set, &config.gat, &config.train_config())?;
    let checkpoint = Checkpoint {
        metadata: TrainingMetadata {
            epoch: outcome.best_epoch,
            dev_f1: outcome.best_dev_f1,
            seed: config.seed,
        },
        model: outcome.model,
    };
    save_checkpoint(&config.checkpoint_path(), &checkpoint)?;
    write_atomic(&config.vocab_path(), |w| checkpoint.model.vocab.write_to(w))?;
    write_atomic(&config.train_log_path(), |w| {
        for entry in &outcome.log {
            serde_json::to_writer(&mut *w, entry)?;
            writeln!(w)?;
        }
        Ok(())
    })?;
    Ok(TrainSummary {
        epochs_run: outcome.log.len(),
        best_epoch: outcome.best_epoch,
        best_dev_f1: outcome.best_dev_f1,
    })
}

/// Selects cells, retrieves context and answers every example of `split`, writing one
/// prediction per line ordered by example id.
pub fn cmd_predict(config: &PipelineConfig, split: Split) -> Result<PathBuf, PipelineError> {
    config.validate()?;
    let dataset = load_split(config, split)?;
    let model = load_checkpoint(&config.checkpoint_path())?.model;
    let index_path = config.index_path();
    let index = if index_path.exists() {
        Some(load_index(&index_path)?)
    } else {
        log::warn!("no index at {}, predicting without retrieval", index_path.display());
        None
    };
    let remote = match config.mode {
        GenerationMode::Template => None,
        GenerationMode::Remote => Some(RemoteGenerator::new(
            config.endpoint.as_deref().ok_or(PipelineError::Missing("endpoint"))?,
            Duration::from_secs_f64(config.timeout_secs),
        )?),
    };

    let mut examples: Vec<_> = dataset.examples.iter().collect();
    examples.sort_by(|a, b| a.id.cmp(&b.id));
    let mut predictions = Vec::with_capacity(examples.len());
    for example in examples {
        let wrap = |source: PipelineError| PipelineError::Example {
            id: example.id.clone(),
            source: Box::new(source),
        };
        let cells = model.select_example(example).map_err(|e| wrap(e.into()))?;
        let retrieved = index
            .as_ref()
            .map(|ix| ix.retrieve_context(&example.question, config.drop_stopwords))
            .unwrap_or_default();
        let answer = match &remote {
            None => match compose_template_answer(&headed_cells(&example.table, &cells), &retrieved) {
                Ok(a) => a,
                Err(FusionError::NothingToSay) => String::new(),
                Err(e) => return Err(wrap(e.into())),
            },
            Some(generator) => {
                let linearized = linearize_cells(&example.table, &cells).map_err(|e| wrap(e.into()))?;
                let input = assemble(&example.question, &linearized, &retrieved).map_err(|e| wrap(e.into()))?;
                generator.generate(&example.id, &input, &config.generation)?
            }
        };
        predictions.push(Prediction {
            id: example.id.clone(),
            selected_cells: cells.iter().map(|c| [c.row, c.col]).collect(),
            retrieved,
            answer,
        });
    }
    let path = config.predictions_path(split);
    write_atomic(&path, |w| {
        for p in &predictions {
            serde_json::to_writer(&mut *w, p)?;
            writeln!(w)?;
        }
        Ok(())
    })?;
    Ok(path)
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| PipelineError::Prediction {
                path: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Scores a predictions file against the gold split and writes `report.{split}.json`.
pub fn cmd_eval(config: &PipelineConfig, predictions: &Path, split: Split) -> Result<EvalReport, PipelineError> {
    let dataset = load_split(config, split)?;
    let predictions = read_predictions(predictions)?;
    let report = evaluate_run(&predictions, &dataset)?;
    write_atomic(&config.report_path(split), |w| {
        serde_json::to_writer_pretty(&mut *w, &report)?;
        writeln!(w)
    })?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Completed,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    pub seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactHash {
    pub name: String,
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config: PipelineConfig,
    pub stages: Vec<StageRecord>,
    pub artifacts: Vec<ArtifactHash>,
    pub report: Option<EvalReport>,
}

impl RunManifest {
    pub fn succeeded(&self) -> bool {
        self.stages.iter().all(|s| s.status != StageStatus::Failed)
    }
}

/// Runs ingest, build-index, train, predict and eval in order. A failing stage marks the
/// remaining ones as skipped; the manifest is written either way.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunManifest, PipelineError> {
    config.validate()?;
    let split = config.predict_split;
    let mut stages = Vec::new();
    let mut failed = false;
    let mut report = None;

    let mut stage = |name: &str, skip: bool, f: &mut dyn FnMut() -> Result<(), PipelineError>| {
        if failed || skip {
            stages.push(StageRecord {
                name: name.to_string(),
                status: StageStatus::Skipped,
                seconds: 0.0,
                error: None,
            });
            return;
        }
        let start = Instant::now();
        let result = f();
        let seconds = start.elapsed().as_secs_f64();
        log::info!("stage {name} finished in {seconds:.2}s");
        let (status, error) = match result {
            Ok(()) => (StageStatus::Completed, None),
            Err(e) => {
                log::error!("stage {name} failed: {e}");
                failed = true;
                (StageStatus::Failed, Some(e.to_string()))
            }
        };
        stages.push(StageRecord {
            name: name.to_string(),
            status,
            seconds,
            error,
        });
    };

    stage("ingest", false, &mut || cmd_ingest(config).map(|_| ()));
    stage("build-index", config.corpus.is_none(), &mut || cmd_build_index(config).map(|_| ()));
    stage("train", false, &mut || cmd_train(config).map(|_| ()));
    stage("predict", false, &mut || cmd_predict(config, split).map(|_| ()));
    stage("eval", false, &mut || {
        report = Some(cmd_eval(config, &config.predictions_path(split), split)?);
        Ok(())
    });

    let mut artifacts = Vec::new();
    for (name, path) in [
        ("checkpoint", config.checkpoint_path()),
        ("index", config.index_path()),
        ("predictions", config.predictions_path(split)),
        ("report", config.report_path(split)),
    ] {
        if path.exists() {
            artifacts.push(ArtifactHash {
                name: name.to_string(),
                sha256: sha256_file(&path)?,
                path,
            });
        }
    }
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        stages,
        artifacts,
        report,
    };
    write_atomic(&config.manifest_path(), |w| {
        serde_json::to_writer_pretty(&mut *w, &manifest)?;
        writeln!(w)
    })?;
    Ok(manifest)
}
