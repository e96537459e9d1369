//! Forward and backward passes of the relational graph attention network.
//!
//! Each layer computes, for every target node `t` and incoming source `s`
//! (including `t` itself through a self-loop relation):
//!
//! ```text
//! m_st  = f_m([h_s, u_s, r_st])
//! Q_s   = g_q([h_s, u_s, r_st])      K_t = g_k([h_t, u_t, r_st])
//! a_st  = softmax_s(Q_s . K_t / sqrt(N))
//! h_t'  = f_g(sum_s a_st m_st) + h_t
//! ```
//!
//! The three linear maps are split by input block so the state and kind parts
//! are computed once per node and the relation part once per distinct
//! (relation, source kind, target kind) triple.

use std::ops::Range;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::params::{GatBuffers, GatParams, LayerParams};
use super::{GatConfig, GnnError};
use crate::graph::{NodeKind, RelationKind, TableGraph};

pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DirectedEdge {
    pub source: usize,
    pub target: usize,
    pub combo: usize,
}

/// Message-passing view of a [`TableGraph`]: directed edges with self-loops, grouped by target.
#[derive(Debug, Clone)]
pub struct MessageGraph {
    pub kinds: Vec<NodeKind>,
    pub combos: Vec<(RelationKind, NodeKind, NodeKind)>,
    pub edges: Vec<DirectedEdge>,
    pub incoming: Vec<Range<usize>>,
    pub row_header_ids: Vec<usize>,
    pub column_header_ids: Vec<usize>,
}

impl MessageGraph {
    pub fn new(graph: &TableGraph) -> Self {
        let kinds = graph.kinds();
        let mut combos = Vec::new();
        let mut combo_id = |triple: (RelationKind, NodeKind, NodeKind)| match combos
            .iter()
            .position(|c| *c == triple)
        {
            Some(i) => i,
            None => {
                combos.push(triple);
                combos.len() - 1
            }
        };
        let mut edges = Vec::new();
        let mut incoming = Vec::with_capacity(kinds.len());
        for t in 0..kinds.len() {
            let start = edges.len();
            let neighbors = graph.neighborhood(t).expect("node ids are dense");
            let mut sources: Vec<(usize, RelationKind)> = neighbors.to_vec();
            sources.push((t, RelationKind::SelfLoop));
            sources.sort();
            for (s, rel) in sources {
                let combo = combo_id((rel, kinds[s], kinds[t]));
                edges.push(DirectedEdge {
                    source: s,
                    target: t,
                    combo,
                });
            }
            incoming.push(start..edges.len());
        }
        Self {
            kinds,
            combos,
            edges,
            incoming,
            row_header_ids: graph.row_header_ids().to_vec(),
            column_header_ids: graph.column_header_ids().to_vec(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.kinds.len()
    }
}

/// Intermediate values of one layer, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct LayerCache {
    pub h_in: Array2<f64>,
    pub u: Array2<f64>,
    pub rel_pre: Array2<f64>,
    pub rel_hidden: Array2<f64>,
    pub rel: Array2<f64>,
    pub a_msg: Array2<f64>,
    pub a_query: Array2<f64>,
    pub a_key: Array2<f64>,
    pub r_msg: Array2<f64>,
    pub r_query: Array2<f64>,
    pub r_key: Array2<f64>,
    /// Attention weight per directed edge, aligned with `MessageGraph::edges`.
    pub alpha: Vec<f64>,
    pub agg: Array2<f64>,
    pub xhat: Array2<f64>,
    pub inv_std: Array1<f64>,
    pub y: Array2<f64>,
    pub act: Array2<f64>,
    pub batch_mean: Array1<f64>,
    pub batch_var: Array1<f64>,
    pub dropout_mask: Option<Array2<f64>>,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub row_logits: Vec<f64>,
    pub col_logits: Vec<f64>,
    pub states: Array2<f64>,
    pub mode: Mode,
    pub layers: Vec<LayerCache>,
}

impl ForwardOutput {
    /// Sum of attention weights into each target node, per layer.
    pub fn attention_sums(&self, graph: &MessageGraph) -> Vec<Vec<f64>> {
        self.layers
            .iter()
            .map(|c| {
                graph
                    .incoming
                    .iter()
                    .map(|r| c.alpha[r.clone()].iter().sum())
                    .collect()
            })
            .collect()
    }
}

fn split_rows(w: &Array2<f64>, d: usize, th: usize) -> (ArrayView2<'_, f64>, ArrayView2<'_, f64>, ArrayView2<'_, f64>) {
    (
        w.slice(s![..d, ..]),
        w.slice(s![d..d + th, ..]),
        w.slice(s![d + th.., ..]),
    )
}

fn add_row(a: &mut Array2<f64>, b: &Array2<f64>) {
    *a += &b.row(0);
}

#[inline]
fn edge_dot(q_a: &[f64], q_r: &[f64], k_a: &[f64], k_r: &[f64]) -> f64 {
    q_a.iter()
        .zip(q_r)
        .zip(k_a.iter().zip(k_r))
        .map(|((qa, qr), (ka, kr))| (qa + qr) * (ka + kr))
        .sum()
}

fn layer_forward(
    p: &LayerParams,
    config: &GatConfig,
    graph: &MessageGraph,
    h: &Array2<f64>,
    mode: Mode,
    running: (&Array1<f64>, &Array1<f64>),
    dropout_mask: Option<Array2<f64>>,
) -> (Array2<f64>, LayerCache) {
    let n = graph.node_count();
    let (d, th) = (config.node_dim, config.type_dim / 2);
    let scale = 1.0 / (config.msg_dim as f64).sqrt();

    let mut u = Array2::zeros((n, th));
    for (i, kind) in graph.kinds.iter().enumerate() {
        u.row_mut(i).assign(&p.type_proj.row(kind.index()));
    }

    let mut rel_pre = Array2::zeros((graph.combos.len(), config.type_dim));
    for (c, (rel, ks, kt)) in graph.combos.iter().enumerate() {
        let mut row = rel_pre.row_mut(c);
        row += &p.rel_w1.row(rel.index());
        row += &p.rel_w1.row(RelationKind::COUNT + ks.index());
        row += &p.rel_w1.row(RelationKind::COUNT + NodeKind::COUNT + kt.index());
        row += &p.rel_b1.row(0);
    }
    let rel_hidden = rel_pre.mapv(|x| x.max(0.0));
    let mut rel = rel_hidden.dot(&p.rel_w2);
    add_row(&mut rel, &p.rel_b2);

    let project = |w: &Array2<f64>, b: &Array2<f64>| {
        let (wh, wu, wr) = split_rows(w, d, th);
        let mut a = h.dot(&wh) + u.dot(&wu);
        add_row(&mut a, b);
        (a, rel.dot(&wr))
    };
    let (a_msg, r_msg) = project(&p.msg_w, &p.msg_b);
    let (a_query, r_query) = project(&p.query_w, &p.query_b);
    let (a_key, r_key) = project(&p.key_w, &p.key_b);

    let mut alpha = vec![0.0; graph.edges.len()];
    let mut agg = Array2::zeros((n, config.msg_dim));
    for (t, range) in graph.incoming.iter().enumerate() {
        let k_a = a_key.row(t);
        let k_a = k_a.as_slice().expect("standard layout");
        let mut max = f64::NEG_INFINITY;
        for ei in range.clone() {
            let e = graph.edges[ei];
            let g = scale
                * edge_dot(
                    a_query.row(e.source).as_slice().unwrap(),
                    r_query.row(e.combo).as_slice().unwrap(),
                    k_a,
                    r_key.row(e.combo).as_slice().unwrap(),
                );
            alpha[ei] = g;
            max = max.max(g);
        }
        let mut total = 0.0;
        for ei in range.clone() {
            alpha[ei] = (alpha[ei] - max).exp();
            total += alpha[ei];
        }
        let mut out = agg.row_mut(t);
        for ei in range.clone() {
            alpha[ei] /= total;
            let e = graph.edges[ei];
            out.scaled_add(alpha[ei], &a_msg.row(e.source));
            out.scaled_add(alpha[ei], &r_msg.row(e.combo));
        }
    }

    let mut z1 = agg.dot(&p.upd_w1);
    add_row(&mut z1, &p.upd_b1);
    let batch_mean = z1.mean_axis(Axis(0)).expect("non-empty graph");
    let batch_var = z1.var_axis(Axis(0), 0.0);
    let (mean, var) = match mode {
        Mode::Train => (&batch_mean, &batch_var),
        Mode::Eval => running,
    };
    let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
    let xhat = (&z1 - mean) * &inv_std;
    let y = &xhat * &p.bn_gamma.row(0) + p.bn_beta.row(0);
    let act = y.mapv(|x| x.max(0.0));
    let mut out = act.dot(&p.upd_w2);
    add_row(&mut out, &p.upd_b2);
    out += h;
    if let Some(mask) = &dropout_mask {
        out *= mask;
    }

    let cache = LayerCache {
        h_in: h.clone(),
        u,
        rel_pre,
        rel_hidden,
        rel,
        a_msg,
        a_query,
        a_key,
        r_msg,
        r_query,
        r_key,
        alpha,
        agg,
        xhat,
        inv_std,
        y,
        act,
        batch_mean,
        batch_var,
        dropout_mask,
    };
    (out, cache)
}

fn dropout_mask<R: Rng>(rows: usize, cols: usize, rate: f64, rng: &mut R) -> Array2<f64> {
    let keep = 1.0 / (1.0 - rate);
    Array2::from_shape_fn((rows, cols), |_| if rng.random::<f64>() < rate { 0.0 } else { keep })
}

fn head(states: &Array2<f64>, ids: &[usize], w: &Array2<f64>, b: &Array2<f64>) -> Vec<f64> {
    ids.iter()
        .map(|&i| states.row(i).dot(&w.column(0)) + b[[0, 0]])
        .collect()
}

/// Runs all layers. In train mode batch statistics normalize each layer and, when an
/// RNG is supplied and the dropout rate is positive, node states between layers are
/// dropped.
pub fn gat_forward<R: Rng>(
    params: &GatParams,
    buffers: &GatBuffers,
    config: &GatConfig,
    graph: &MessageGraph,
    features: &Array2<f64>,
    mode: Mode,
    rng: Option<&mut R>,
) -> Result<ForwardOutput, GnnError> {
    if features.nrows() != graph.node_count() || features.ncols() != config.node_dim {
        return Err(GnnError::FeatureShape {
            expected: (graph.node_count(), config.node_dim),
            got: (features.nrows(), features.ncols()),
        });
    }
    let mut rng = rng;
    let mut h = features.clone();
    let mut caches = Vec::with_capacity(config.layers);
    for (l, p) in params.layers.iter().enumerate() {
        let last = l + 1 == config.layers;
        let mask = match (&mut rng, mode) {
            (Some(rng), Mode::Train) if !last && config.dropout > 0.0 => Some(dropout_mask(
                h.nrows(),
                h.ncols(),
                config.dropout,
                rng,
            )),
            _ => None,
        };
        let running = (&buffers.running_mean[l], &buffers.running_var[l]);
        let (out, cache) = layer_forward(p, config, graph, &h, mode, running, mask);
        if !out.iter().all(|x| x.is_finite()) {
            return Err(GnnError::NonFinite { layer: l });
        }
        caches.push(cache);
        h = out;
    }
    let row_logits = head(&h, &graph.row_header_ids, &params.row_w, &params.row_b);
    let col_logits = head(&h, &graph.column_header_ids, &params.col_w, &params.col_b);
    Ok(ForwardOutput {
        row_logits,
        col_logits,
        states: h,
        mode,
        layers: caches,
    })
}

fn layer_backward(
    p: &LayerParams,
    g: &mut LayerParams,
    config: &GatConfig,
    graph: &MessageGraph,
    cache: &LayerCache,
    mode: Mode,
    d_out: &Array2<f64>,
) -> Array2<f64> {
    let n = graph.node_count();
    let (d, th) = (config.node_dim, config.type_dim / 2);
    let scale = 1.0 / (config.msg_dim as f64).sqrt();

    let d_out = match &cache.dropout_mask {
        Some(mask) => d_out * mask,
        None => d_out.clone(),
    };
    let mut d_h = d_out.clone();

    g.upd_w2 += &cache.act.t().dot(&d_out);
    g.upd_b2 += &d_out.sum_axis(Axis(0));
    let d_act = d_out.dot(&p.upd_w2.t());
    let mut d_y = d_act;
    d_y.zip_mut_with(&cache.y, |dy, &y| {
        if y <= 0.0 {
            *dy = 0.0;
        }
    });
    g.bn_gamma += &(&d_y * &cache.xhat).sum_axis(Axis(0));
    g.bn_beta += &d_y.sum_axis(Axis(0));
    let d_xhat = &d_y * &p.bn_gamma.row(0);
    let d_z1 = match mode {
        Mode::Eval => &d_xhat * &cache.inv_std,
        Mode::Train => {
            let nf = n as f64;
            let sum_d = d_xhat.sum_axis(Axis(0));
            let sum_dx = (&d_xhat * &cache.xhat).sum_axis(Axis(0));
            let centered = &d_xhat * nf - &sum_d - &(&cache.xhat * &sum_dx);
            centered * &(&cache.inv_std / nf)
        }
    };
    g.upd_w1 += &cache.agg.t().dot(&d_z1);
    g.upd_b1 += &d_z1.sum_axis(Axis(0));
    let d_agg = d_z1.dot(&p.upd_w1.t());

    let n_combos = graph.combos.len();
    let mut d_a_msg = Array2::zeros((n, config.msg_dim));
    let mut d_a_query = Array2::zeros((n, config.msg_dim));
    let mut d_a_key = Array2::zeros((n, config.msg_dim));
    let mut d_r_msg = Array2::zeros((n_combos, config.msg_dim));
    let mut d_r_query = Array2::zeros((n_combos, config.msg_dim));
    let mut d_r_key = Array2::zeros((n_combos, config.msg_dim));
    let mut d_alpha = Vec::new();
    for (t, range) in graph.incoming.iter().enumerate() {
        let da = d_agg.row(t);
        d_alpha.clear();
        let mut weighted = 0.0;
        for ei in range.clone() {
            let e = graph.edges[ei];
            let dot = da.dot(&cache.a_msg.row(e.source)) + da.dot(&cache.r_msg.row(e.combo));
            weighted += cache.alpha[ei] * dot;
            d_alpha.push(dot);
            d_a_msg.row_mut(e.source).scaled_add(cache.alpha[ei], &da);
            d_r_msg.row_mut(e.combo).scaled_add(cache.alpha[ei], &da);
        }
        for (k, ei) in range.clone().enumerate() {
            let e = graph.edges[ei];
            let d_gamma = cache.alpha[ei] * (d_alpha[k] - weighted) * scale;
            if d_gamma == 0.0 {
                continue;
            }
            let q = &cache.a_query.row(e.source) + &cache.r_query.row(e.combo);
            let kv = &cache.a_key.row(t) + &cache.r_key.row(e.combo);
            d_a_query.row_mut(e.source).scaled_add(d_gamma, &kv);
            d_r_query.row_mut(e.combo).scaled_add(d_gamma, &kv);
            d_a_key.row_mut(t).scaled_add(d_gamma, &q);
            d_r_key.row_mut(e.combo).scaled_add(d_gamma, &q);
        }
    }

    let mut d_u = Array2::zeros((n, th));
    let mut d_rel = Array2::zeros((n_combos, config.type_dim));
    for (w, gw, gb, d_a, d_r) in [
        (&p.msg_w, &mut g.msg_w, &mut g.msg_b, &d_a_msg, &d_r_msg),
        (&p.query_w, &mut g.query_w, &mut g.query_b, &d_a_query, &d_r_query),
        (&p.key_w, &mut g.key_w, &mut g.key_b, &d_a_key, &d_r_key),
    ] {
        let (wh, wu, wr) = split_rows(w, d, th);
        {
            let mut gh = gw.slice_mut(s![..d, ..]);
            gh += &cache.h_in.t().dot(d_a);
        }
        {
            let mut gu = gw.slice_mut(s![d..d + th, ..]);
            gu += &cache.u.t().dot(d_a);
        }
        {
            let mut gr = gw.slice_mut(s![d + th.., ..]);
            gr += &cache.rel.t().dot(d_r);
        }
        *gb += &d_a.sum_axis(Axis(0));
        d_h += &d_a.dot(&wh.t());
        d_u += &d_a.dot(&wu.t());
        d_rel += &d_r.dot(&wr.t());
    }

    for (i, kind) in graph.kinds.iter().enumerate() {
        let mut row = g.type_proj.row_mut(kind.index());
        row += &d_u.row(i);
    }

    g.rel_w2 += &cache.rel_hidden.t().dot(&d_rel);
    g.rel_b2 += &d_rel.sum_axis(Axis(0));
    let mut d_pre = d_rel.dot(&p.rel_w2.t());
    d_pre.zip_mut_with(&cache.rel_pre, |dp, &pre| {
        if pre <= 0.0 {
            *dp = 0.0;
        }
    });
    for (c, (rel, ks, kt)) in graph.combos.iter().enumerate() {
        let dp = d_pre.row(c);
        for idx in [
            rel.index(),
            RelationKind::COUNT + ks.index(),
            RelationKind::COUNT + NodeKind::COUNT + kt.index(),
        ] {
            let mut row = g.rel_w1.row_mut(idx);
            row += &dp;
        }
        let mut b = g.rel_b1.row_mut(0);
        b += &dp;
    }
    d_h
}

/// Back-propagates logit gradients. Returns parameter gradients (the embedding entry is
/// left zero) and the gradient with respect to the input node features.
pub fn gat_backward(
    params: &GatParams,
    config: &GatConfig,
    graph: &MessageGraph,
    forward: &ForwardOutput,
    d_row_logits: &[f64],
    d_col_logits: &[f64],
) -> (GatParams, Array2<f64>) {
    let mut grads = params.zeros_like();
    let mut d_h = Array2::zeros(forward.states.raw_dim());
    for (ids, dl, w, gw, gb) in [
        (&graph.row_header_ids, d_row_logits, &params.row_w, &mut grads.row_w, &mut grads.row_b),
        (&graph.column_header_ids, d_col_logits, &params.col_w, &mut grads.col_w, &mut grads.col_b),
    ] {
        for (&id, &g) in ids.iter().zip(dl) {
            gb[[0, 0]] += g;
            gw.column_mut(0).scaled_add(g, &forward.states.row(id));
            d_h.row_mut(id).scaled_add(g, &w.column(0));
        }
    }
    for l in (0..config.layers).rev() {
        d_h = layer_backward(
            &params.layers[l],
            &mut grads.layers[l],
            config,
            graph,
            &forward.layers[l],
            forward.mode,
            &d_h,
        );
    }
    (grads, d_h)
}

/// Moves running batch-norm statistics toward the batch statistics of a train-mode pass.
pub fn update_running_stats(buffers: &mut GatBuffers, forward: &ForwardOutput, momentum: f64) {
    for (l, cache) in forward.layers.iter().enumerate() {
        let n = cache.xhat.nrows() as f64;
        let unbiased = if n > 1.0 {
            &cache.batch_var * (n / (n - 1.0))
        } else {
            cache.batch_var.clone()
        };
        buffers.running_mean[l] = &buffers.running_mean[l] * (1.0 - momentum) + &cache.batch_mean * momentum;
        buffers.running_var[l] = &buffers.running_var[l] * (1.0 - momentum) + unbiased * momentum;
    }
}
