use ndarray::{Array1, Array2};
use rand::Rng;

use super::GatConfig;
use crate::featurizer::FeaturizerParams;
use crate::graph::{NodeKind, RelationKind};

/// Width of the relation encoder input: relation, source kind and target kind one-hots.
pub const RELATION_INPUT: usize = RelationKind::COUNT + 2 * NodeKind::COUNT;

/// Trainable tensors of one attention layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    /// One-hot node kind to `T/2`; row `k` is the projection of kind `k`.
    pub type_proj: Array2<f64>,
    pub rel_w1: Array2<f64>,
    pub rel_b1: Array2<f64>,
    pub rel_w2: Array2<f64>,
    pub rel_b2: Array2<f64>,
    /// Rows are laid out as `[state (D) | kind (T/2) | relation (T)]`.
    pub msg_w: Array2<f64>,
    pub msg_b: Array2<f64>,
    pub query_w: Array2<f64>,
    pub query_b: Array2<f64>,
    pub key_w: Array2<f64>,
    pub key_b: Array2<f64>,
    pub upd_w1: Array2<f64>,
    pub upd_b1: Array2<f64>,
    pub bn_gamma: Array2<f64>,
    pub bn_beta: Array2<f64>,
    pub upd_w2: Array2<f64>,
    pub upd_b2: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatParams {
    pub featurizer: FeaturizerParams,
    pub layers: Vec<LayerParams>,
    pub row_w: Array2<f64>,
    pub row_b: Array2<f64>,
    pub col_w: Array2<f64>,
    pub col_b: Array2<f64>,
}

/// Batch-norm running statistics; updated during training, not by the optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct GatBuffers {
    pub running_mean: Vec<Array1<f64>>,
    pub running_var: Vec<Array1<f64>>,
}

impl GatBuffers {
    pub fn new(config: &GatConfig) -> Self {
        Self {
            running_mean: vec![Array1::zeros(config.node_dim); config.layers],
            running_var: vec![Array1::ones(config.node_dim); config.layers],
        }
    }
}

fn uniform<R: Rng>(rows: usize, cols: usize, fan_in: usize, rng: &mut R) -> Array2<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..=bound))
}

impl LayerParams {
    fn init<R: Rng>(config: &GatConfig, rng: &mut R) -> Self {
        let (d, n, t, th) = (config.node_dim, config.msg_dim, config.type_dim, config.type_dim / 2);
        let input = d + th + t;
        Self {
            type_proj: uniform(NodeKind::COUNT, th, NodeKind::COUNT, rng),
            rel_w1: uniform(RELATION_INPUT, t, 3, rng),
            rel_b1: Array2::zeros((1, t)),
            rel_w2: uniform(t, t, t, rng),
            rel_b2: Array2::zeros((1, t)),
            msg_w: uniform(input, n, input, rng),
            msg_b: Array2::zeros((1, n)),
            query_w: uniform(input, n, input, rng),
            query_b: Array2::zeros((1, n)),
            key_w: uniform(input, n, input, rng),
            key_b: Array2::zeros((1, n)),
            upd_w1: uniform(n, d, n, rng),
            upd_b1: Array2::zeros((1, d)),
            bn_gamma: Array2::ones((1, d)),
            bn_beta: Array2::zeros((1, d)),
            upd_w2: uniform(d, d, d, rng),
            upd_b2: Array2::zeros((1, d)),
        }
    }

    fn fields(&self) -> [(&'static str, &Array2<f64>); 17] {
        [
            ("type_proj", &self.type_proj),
            ("rel_w1", &self.rel_w1),
            ("rel_b1", &self.rel_b1),
            ("rel_w2", &self.rel_w2),
            ("rel_b2", &self.rel_b2),
            ("msg_w", &self.msg_w),
            ("msg_b", &self.msg_b),
            ("query_w", &self.query_w),
            ("query_b", &self.query_b),
            ("key_w", &self.key_w),
            ("key_b", &self.key_b),
            ("upd_w1", &self.upd_w1),
            ("upd_b1", &self.upd_b1),
            ("bn_gamma", &self.bn_gamma),
            ("bn_beta", &self.bn_beta),
            ("upd_w2", &self.upd_w2),
            ("upd_b2", &self.upd_b2),
        ]
    }

    fn fields_mut(&mut self) -> [&mut Array2<f64>; 17] {
        [
            &mut self.type_proj,
            &mut self.rel_w1,
            &mut self.rel_b1,
            &mut self.rel_w2,
            &mut self.rel_b2,
            &mut self.msg_w,
            &mut self.msg_b,
            &mut self.query_w,
            &mut self.query_b,
            &mut self.key_w,
            &mut self.key_b,
            &mut self.upd_w1,
            &mut self.upd_b1,
            &mut self.bn_gamma,
            &mut self.bn_beta,
            &mut self.upd_w2,
            &mut self.upd_b2,
        ]
    }
}

impl GatParams {
    pub fn init<R: Rng>(config: &GatConfig, vocab_size: usize, rng: &mut R) -> Self {
        let featurizer = FeaturizerParams::init(vocab_size, config.node_dim, rng);
        let layers = (0..config.layers).map(|_| LayerParams::init(config, rng)).collect();
        let d = config.node_dim;
        Self {
            featurizer,
            layers,
            row_w: uniform(d, 1, d, rng),
            row_b: Array2::zeros((1, 1)),
            col_w: uniform(d, 1, d, rng),
            col_b: Array2::zeros((1, 1)),
        }
    }

    /// Every tensor with a stable name, in serialization order.
    pub fn named_tensors(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out = vec![("embedding".to_string(), &self.featurizer.embedding)];
        for (l, layer) in self.layers.iter().enumerate() {
            out.extend(layer.fields().into_iter().map(|(n, t)| (format!("layer{l}.{n}"), t)));
        }
        out.push(("row_head.w".into(), &self.row_w));
        out.push(("row_head.b".into(), &self.row_b));
        out.push(("col_head.w".into(), &self.col_w));
        out.push(("col_head.b".into(), &self.col_b));
        out
    }

    /// Same order as [`GatParams::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out = vec![&mut self.featurizer.embedding];
        for layer in &mut self.layers {
            out.extend(layer.fields_mut());
        }
        out.push(&mut self.row_w);
        out.push(&mut self.row_b);
        out.push(&mut self.col_w);
        out.push(&mut self.col_b);
        out
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    pub fn parameter_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.named_tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|x| x.is_finite()))
    }
}
