use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::forward::{gat_backward, gat_forward, update_running_stats, ForwardOutput, MessageGraph, Mode};
use super::loss::{selection_loss, selection_loss_grad};
use super::params::{GatBuffers, GatParams};
use super::radam::{RAdam, RAdamState};
use super::select::{select_cells, top_k_indices};
use super::{GatConfig, GnnError};
use crate::featurizer::{build_vocab, node_token_ids, pool, pool_backward, Vocab, DEFAULT_MAX_TOKENS};
use crate::graph::build_graph;
use crate::metrics::selection_prf;
use crate::table::{derive_row_col_labels, CellCoord, Dataset, QaExample, RowColLabels, Table};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub patience: usize,
    pub optimizer: RAdam,
    pub max_tokens: usize,
    pub min_count: usize,
    pub bn_momentum: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            patience: 10,
            optimizer: RAdam::default(),
            max_tokens: DEFAULT_MAX_TOKENS,
            min_count: 1,
            bn_momentum: 0.1,
            seed: 0,
        }
    }
}

/// An example turned into model inputs once, reused every epoch.
#[derive(Debug, Clone)]
pub struct PreparedExample {
    pub id: String,
    pub graph: MessageGraph,
    pub token_ids: Vec<Vec<usize>>,
    pub table: Table,
    pub gold: Vec<CellCoord>,
    pub labels: Option<RowColLabels>,
}

/// Everything needed to score a table: config, vocab, weights and normalization buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectorModel {
    pub config: GatConfig,
    pub max_tokens: usize,
    pub vocab: Vocab,
    pub params: GatParams,
    pub buffers: GatBuffers,
}

impl SelectorModel {
    pub fn init(config: GatConfig, vocab: Vocab, max_tokens: usize, seed: u64) -> Result<Self, GnnError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = GatParams::init(&config, vocab.len(), &mut rng);
        let buffers = GatBuffers::new(&config);
        Ok(Self {
            config,
            max_tokens,
            vocab,
            params,
            buffers,
        })
    }

    pub fn prepare(&self, example: &QaExample) -> Result<PreparedExample, GnnError> {
        let graph = build_graph(&example.table, &example.question)?;
        let token_ids = node_token_ids(&graph, &self.vocab, self.max_tokens);
        Ok(PreparedExample {
            id: example.id.clone(),
            graph: MessageGraph::new(&graph),
            token_ids,
            table: example.table.clone(),
            gold: example.gold_cells.clone(),
            labels: derive_row_col_labels(example).ok(),
        })
    }

    pub fn features(&self, prepared: &PreparedExample) -> Array2<f64> {
        pool(&prepared.token_ids, self.params.featurizer.embedding.view())
    }

    /// Eval-mode row and column logits.
    pub fn logits(&self, prepared: &PreparedExample) -> Result<(Vec<f64>, Vec<f64>), GnnError> {
        let out = gat_forward::<ChaCha8Rng>(
            &self.params,
            &self.buffers,
            &self.config,
            &prepared.graph,
            &self.features(prepared),
            Mode::Eval,
            None,
        )?;
        Ok((out.row_logits, out.col_logits))
    }

    pub fn select(&self, prepared: &PreparedExample) -> Result<Vec<CellCoord>, GnnError> {
        let (rows, cols) = self.logits(prepared)?;
        Ok(select_cells(&rows, &cols, &prepared.table, self.config.top_rows, self.config.top_cols))
    }

    pub fn select_example(&self, example: &QaExample) -> Result<Vec<CellCoord>, GnnError> {
        self.select(&self.prepare(example)?)
    }

    /// Mean per-example cell-selection F1.
    pub fn selection_f1(&self, prepared: &[PreparedExample]) -> Result<f64, GnnError> {
        if prepared.is_empty() {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for p in prepared {
            total += selection_prf(&self.select(p)?, &p.gold).f1;
        }
        Ok(total / prepared.len() as f64)
    }
}

/// Loss, full parameter gradients (embedding included) and the train-mode forward pass.
pub fn gradients(
    model: &SelectorModel,
    prepared: &PreparedExample,
    labels: &RowColLabels,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<(f64, GatParams, ForwardOutput), GnnError> {
    let features = model.features(prepared);
    let forward = gat_forward(
        &model.params,
        &model.buffers,
        &model.config,
        &prepared.graph,
        &features,
        Mode::Train,
        rng,
    )?;
    let loss = selection_loss(&forward.row_logits, &forward.col_logits, &labels.rows, &labels.cols)?;
    let (d_rows, d_cols) = selection_loss_grad(&forward.row_logits, &forward.col_logits, &labels.rows, &labels.cols)?;
    let (mut grads, d_features) = gat_backward(&model.params, &model.config, &prepared.graph, &forward, &d_rows, &d_cols);
    pool_backward(&prepared.token_ids, d_features.view(), &mut grads.featurizer.embedding);
    Ok((loss, grads, forward))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub dev_f1: f64,
    pub best_dev_f1: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: SelectorModel,
    pub best_epoch: usize,
    pub best_dev_f1: f64,
    pub log: Vec<EpochLog>,
}

/// Fraction of gold rows (and columns) ranked within the top-k, averaged over examples.
pub fn hit_rates(model: &SelectorModel, prepared: &[PreparedExample]) -> Result<(f64, f64), GnnError> {
    let mut row_hits = 0.0;
    let mut col_hits = 0.0;
    let mut n = 0usize;
    for p in prepared {
        let Some(labels) = &p.labels else { continue };
        let (rows, cols) = model.logits(p)?;
        let rate = |logits: &[f64], gold: &[bool], k: usize| {
            let top = top_k_indices(logits, k);
            let positives = gold.iter().filter(|&&g| g).count();
            let hit = top.iter().filter(|&&i| gold[i]).count();
            hit as f64 / positives.min(k).max(1) as f64
        };
        row_hits += rate(&rows, &labels.rows, model.config.top_rows);
        col_hits += rate(&cols, &labels.cols, model.config.top_cols);
        n += 1;
    }
    let n = n.max(1) as f64;
    Ok((row_hits / n, col_hits / n))
}

/// Trains with one example per step, shuffled each epoch, keeping the weights with the
/// best mean dev cell-selection F1.
pub fn train(train_set: &Dataset, dev_set: &Dataset, config: &GatConfig, train_config: &TrainConfig) -> Result<TrainOutcome, GnnError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(GnnError::EmptySplit("train"));
    }
    if dev_set.is_empty() {
        return Err(GnnError::EmptySplit("dev"));
    }
    let vocab = build_vocab(train_set, train_config.min_count);
    let mut model = SelectorModel::init(config.clone(), vocab, train_config.max_tokens, train_config.seed)?;
    let train_prepared = train_set
        .examples
        .iter()
        .map(|e| model.prepare(e))
        .collect::<Result<Vec<_>, _>>()?;
    let dev_prepared = dev_set
        .examples
        .iter()
        .map(|e| model.prepare(e))
        .collect::<Result<Vec<_>, _>>()?;
    let trainable: Vec<usize> = (0..train_prepared.len())
        .filter(|&i| train_prepared[i].labels.is_some())
        .collect();
    if trainable.is_empty() {
        return Err(GnnError::EmptySplit("train (no example has gold cells)"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(train_config.seed.wrapping_add(1));
    let mut opt_state = RAdamState::new(&model.params);
    let mut best = model.clone();
    let mut best_f1 = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut log = Vec::new();
    let mut order = trainable.clone();

    for epoch in 1..=train_config.epochs {
        order.shuffle(&mut rng);
        let mut total_loss = 0.0;
        for &i in &order {
            let p = &train_prepared[i];
            let labels = p.labels.as_ref().expect("filtered");
            let (loss, grads, forward) = gradients(&model, p, labels, Some(&mut rng))?;
            update_running_stats(&mut model.buffers, &forward, train_config.bn_momentum);
            train_config.optimizer.step(&mut model.params, &grads, &mut opt_state);
            total_loss += loss;
        }
        let dev_f1 = model.selection_f1(&dev_prepared)?;
        if dev_f1 > best_f1 {
            best_f1 = dev_f1;
            best_epoch = epoch;
            best = model.clone();
        }
        let entry = EpochLog {
            epoch,
            mean_loss: total_loss / order.len() as f64,
            dev_f1,
            best_dev_f1: best_f1,
        };
        log::info!(
            "epoch {} loss {:.5} dev_f1 {:.4} best {:.4}",
            entry.epoch,
            entry.mean_loss,
            entry.dev_f1,
            entry.best_dev_f1
        );
        log.push(entry);
        if epoch - best_epoch >= train_config.patience {
            break;
        }
    }
    Ok(TrainOutcome {
        model: best,
        best_epoch,
        best_dev_f1: best_f1,
        log,
    })
}
