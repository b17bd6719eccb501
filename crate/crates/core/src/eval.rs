//! Accuracy and correlation metrics and the cross-validation driver.
//!
//! Accuracy counts entities whose error, divided by the largest true value
//! of their graph, is below 0.1. Pressure is scored on interior nodes only
//! (boundary nodes are clamped to the prescribed values); flow is scored on
//! magnitudes so the per-graph maximum is positive.

use serde::{Deserialize, Serialize};

use crate::dataset::{derive_seed, Sample, SplitPlan};
use crate::error::{Error, Result};
use crate::flow::FlowState;
use crate::gnn::{
    encode, predict_normalized, to_state, Batch, Checkpoint, History, ModelParams, NormStats,
    TrainConfig,
};
use crate::rng::PortableRng;

pub const ACCURACY_THRESHOLD: f64 = 0.1;

/// Per-entity indicator of `|pred - truth| / max(truth) < 0.1`.
pub fn accuracy_hits(pred: &[f64], truth: &[f64]) -> Result<Vec<bool>> {
    if pred.len() != truth.len() || truth.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "accuracy needs equal non-empty vectors, got {} and {}",
            pred.len(),
            truth.len()
        )));
    }
    let max = truth.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0 && max.is_finite()) {
        return Err(Error::UndefinedMetric(format!(
            "accuracy normalization by max(truth) = {max}"
        )));
    }
    Ok(pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t).abs() / max < ACCURACY_THRESHOLD)
        .collect())
}

fn percent(hits: &[bool]) -> f64 {
    100.0 * hits.iter().filter(|&&h| h).count() as f64 / hits.len().max(1) as f64
}

/// Percentage of entities within 10% of the largest true value.
pub fn accuracy(pred: &[f64], truth: &[f64]) -> Result<f64> {
    Ok(percent(&accuracy_hits(pred, truth)?))
}

/// Sample Pearson correlation.
pub fn pearson(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() || pred.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "pearson needs equal vectors of length >= 2, got {} and {}",
            pred.len(),
            truth.len()
        )));
    }
    let n = pred.len() as f64;
    let mp = pred.iter().sum::<f64>() / n;
    let mt = truth.iter().sum::<f64>() / n;
    let (mut cov, mut vp, mut vt) = (0.0, 0.0, 0.0);
    for (p, t) in pred.iter().zip(truth) {
        let (dp, dt) = (p - mp, t - mt);
        cov += dp * dt;
        vp += dp * dp;
        vt += dt * dt;
    }
    if vp == 0.0 || vt == 0.0 {
        return Err(Error::UndefinedMetric(
            "pearson correlation of a constant vector".into(),
        ));
    }
    Ok((cov / (vp.sqrt() * vt.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy_pressure: f64,
    pub accuracy_flow: f64,
    pub pearson_pressure: f64,
    pub pearson_flow: f64,
    pub n_entities: usize,
    pub n_pressure: usize,
    pub n_flow: usize,
}

/// Averages of per-graph metrics; correlations skip graphs where they are undefined.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerGraphMetrics {
    pub graphs: usize,
    pub accuracy_pressure: f64,
    pub accuracy_flow: f64,
    pub pearson_pressure: Option<f64>,
    pub pearson_flow: Option<f64>,
}

/// Pressure scores with boundary nodes included.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InclusivePressure {
    pub accuracy: f64,
    pub pearson: f64,
}

/// Paired truth/prediction values with per-entity accuracy indicators.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Pairs {
    pub truth: Vec<f64>,
    pub pred: Vec<f64>,
    pub hits: Vec<bool>,
}

impl Pairs {
    fn push_graph(&mut self, pred: Vec<f64>, truth: Vec<f64>) -> Result<()> {
        self.hits.extend(accuracy_hits(&pred, &truth)?);
        self.pred.extend(pred);
        self.truth.extend(truth);
        Ok(())
    }

    fn extend(&mut self, other: &Pairs) {
        self.truth.extend(&other.truth);
        self.pred.extend(&other.pred);
        self.hits.extend(&other.hits);
    }

    pub fn accuracy(&self) -> f64 {
        percent(&self.hits)
    }

    pub fn pearson(&self) -> Result<f64> {
        pearson(&self.pred, &self.truth)
    }

    /// Fixed-seed subsample of at most `count` entities for plotting.
    pub fn subsample(&self, count: usize, seed: u64) -> Vec<(f64, f64)> {
        let mut idx: Vec<usize> = (0..self.truth.len()).collect();
        PortableRng::new(seed).shuffle(&mut idx);
        idx.truncate(count);
        idx.sort_unstable();
        idx.into_iter()
            .map(|i| (self.truth[i], self.pred[i]))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub pooled: Metrics,
    pub per_graph: PerGraphMetrics,
    pub pressure_with_boundary: InclusivePressure,
    #[serde(skip)]
    pub pressure: Pairs,
    #[serde(skip)]
    pub flow: Pairs,
    #[serde(skip)]
    pressure_all: Pairs,
}

fn pooled(pressure: &Pairs, flow: &Pairs) -> Result<Metrics> {
    Ok(Metrics {
        accuracy_pressure: pressure.accuracy(),
        accuracy_flow: flow.accuracy(),
        pearson_pressure: pressure.pearson()?,
        pearson_flow: flow.pearson()?,
        n_entities: pressure.truth.len() + flow.truth.len(),
        n_pressure: pressure.truth.len(),
        n_flow: flow.truth.len(),
    })
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Scores predictions against each sample's truth.
pub fn evaluate_predictions(samples: &[Sample], preds: &[FlowState]) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(Error::InvalidParameter(
            "evaluation needs at least one test sample".into(),
        ));
    }
    if samples.len() != preds.len() {
        return Err(Error::InvalidParameter(
            "one prediction per sample is required".into(),
        ));
    }
    let mut pressure = Pairs::default();
    let mut flow = Pairs::default();
    let mut pressure_all = Pairs::default();
    let (mut acc_p, mut acc_q, mut r_p, mut r_q) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (s, pred) in samples.iter().zip(preds) {
        let lookup_p = |state: &FlowState, id| {
            state
                .node_pressure
                .get(&id)
                .copied()
                .ok_or_else(|| Error::Format(format!("no pressure for node {id}")))
        };
        let lookup_q = |state: &FlowState, id| {
            state
                .edge_flow
                .get(&id)
                .map(|q: &f64| q.abs())
                .ok_or_else(|| Error::Format(format!("no flow for edge {id}")))
        };
        let (mut tp, mut pp, mut tp_all, mut pp_all) =
            (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for n in &s.graph.nodes {
            let (t, p) = (lookup_p(&s.truth, n.id)?, lookup_p(pred, n.id)?);
            tp_all.push(t);
            pp_all.push(p);
            if !s.graph.is_boundary(n.id) {
                tp.push(t);
                pp.push(p);
            }
        }
        let tq: Vec<f64> = s
            .graph
            .edges
            .iter()
            .map(|e| lookup_q(&s.truth, e.id))
            .collect::<Result<_>>()?;
        let pq: Vec<f64> = s
            .graph
            .edges
            .iter()
            .map(|e| lookup_q(pred, e.id))
            .collect::<Result<_>>()?;
        if !tp.is_empty() {
            acc_p.push(accuracy(&pp, &tp)?);
            if let Ok(r) = pearson(&pp, &tp) {
                r_p.push(r);
            }
            pressure.push_graph(pp, tp)?;
        }
        acc_q.push(accuracy(&pq, &tq)?);
        if let Ok(r) = pearson(&pq, &tq) {
            r_q.push(r);
        }
        flow.push_graph(pq, tq)?;
        pressure_all.push_graph(pp_all, tp_all)?;
    }
    finish(
        pressure,
        flow,
        pressure_all,
        PerGraphMetrics {
            graphs: samples.len(),
            accuracy_pressure: mean(&acc_p).unwrap_or(f64::NAN),
            accuracy_flow: mean(&acc_q).unwrap_or(f64::NAN),
            pearson_pressure: mean(&r_p),
            pearson_flow: mean(&r_q),
        },
    )
}

fn finish(
    pressure: Pairs,
    flow: Pairs,
    pressure_all: Pairs,
    per_graph: PerGraphMetrics,
) -> Result<Evaluation> {
    if pressure.truth.is_empty() {
        return Err(Error::UndefinedMetric(
            "no interior nodes to score pressure on".into(),
        ));
    }
    Ok(Evaluation {
        pooled: pooled(&pressure, &flow)?,
        per_graph,
        pressure_with_boundary: InclusivePressure {
            accuracy: pressure_all.accuracy(),
            pearson: pressure_all.pearson()?,
        },
        pressure,
        flow,
        pressure_all,
    })
}

/// Pools several evaluations as if their test sets were one. Per-graph
/// averages are weighted by graph count.
pub fn merge(parts: &[Evaluation]) -> Result<Evaluation> {
    let (mut p, mut q, mut pa) = (Pairs::default(), Pairs::default(), Pairs::default());
    let graphs: usize = parts.iter().map(|e| e.per_graph.graphs).sum();
    let weighted = |f: &dyn Fn(&PerGraphMetrics) -> Option<f64>| -> Option<f64> {
        let (mut s, mut w) = (0.0, 0usize);
        for e in parts {
            if let Some(v) = f(&e.per_graph) {
                s += v * e.per_graph.graphs as f64;
                w += e.per_graph.graphs;
            }
        }
        (w > 0).then(|| s / w as f64)
    };
    for e in parts {
        p.extend(&e.pressure);
        q.extend(&e.flow);
        pa.extend(&e.pressure_all);
    }
    let per_graph = PerGraphMetrics {
        graphs,
        accuracy_pressure: weighted(&|m| Some(m.accuracy_pressure)).unwrap_or(f64::NAN),
        accuracy_flow: weighted(&|m| Some(m.accuracy_flow)).unwrap_or(f64::NAN),
        pearson_pressure: weighted(&|m| m.pearson_pressure),
        pearson_flow: weighted(&|m| m.pearson_flow),
    };
    finish(p, q, pa, per_graph)
}

/// De-normalized model predictions for many samples, batched.
pub fn predict_samples(
    params: &ModelParams,
    stats: &NormStats,
    samples: &[Sample],
) -> Result<Vec<FlowState>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(32) {
        let feats = chunk
            .iter()
            .map(|s| encode(&s.graph, &s.bc, Some(stats)))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<_> = feats.iter().collect();
        let batch = Batch::from_features(&refs);
        let (p, q) = predict_normalized(params, &batch)?
            .pop()
            .expect("at least one pass");
        for (k, s) in chunk.iter().enumerate() {
            let (n0, n1) = (batch.node_offsets[k], batch.node_offsets[k + 1]);
            let (m0, m1) = (batch.edge_offsets[k], batch.edge_offsets[k + 1]);
            out.push(to_state(&s.graph, &s.bc, stats, &p[n0..n1], &q[m0..m1]));
        }
    }
    Ok(out)
}

pub fn evaluate_fold(
    params: &ModelParams,
    stats: &NormStats,
    samples: &[Sample],
) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(Error::InvalidParameter(
            "evaluation needs at least one test sample".into(),
        ));
    }
    evaluate_predictions(samples, &predict_samples(params, stats, samples)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_networks: Vec<usize>,
    pub val_networks: Vec<usize>,
    pub test_networks: Vec<usize>,
    pub best_epoch: Option<usize>,
    pub evaluation: Evaluation,
    #[serde(skip)]
    pub history: History,
    #[serde(skip)]
    pub checkpoint: Option<Checkpoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub folds: Vec<FoldReport>,
    pub aggregate: Evaluation,
}

/// Splits a fold's training networks into (train, validation).
pub fn carve_validation(
    train_networks: &[usize],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "validation fraction {fraction} must lie in (0, 1)"
        )));
    }
    if train_networks.len() < 2 {
        return Err(Error::InvalidParameter(
            "need at least two training networks to hold one out".into(),
        ));
    }
    let mut ids = train_networks.to_vec();
    PortableRng::new(seed).shuffle(&mut ids);
    let n_val = ((fraction * ids.len() as f64).ceil() as usize).clamp(1, ids.len() - 1);
    let mut val = ids.split_off(ids.len() - n_val);
    ids.sort_unstable();
    val.sort_unstable();
    Ok((ids, val))
}

const VALIDATION_STREAM: u64 = 4 << 40;

/// Network assignment and training settings for one fold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub fold: usize,
    pub train_networks: Vec<usize>,
    pub val_networks: Vec<usize>,
    pub test_networks: Vec<usize>,
    pub config: TrainConfig,
}

/// Carves fold `k`'s validation networks out of its training networks and
/// derives the fold's training seed.
pub fn plan_fold(
    plan: &SplitPlan,
    k: usize,
    config: &TrainConfig,
    val_fraction: f64,
) -> Result<FoldPlan> {
    plan.validate()?;
    let fold = plan.folds.get(k).ok_or_else(|| {
        Error::InvalidParameter(format!(
            "fold {k} does not exist; the plan has {} folds",
            plan.folds.len()
        ))
    })?;
    let (tr, va) = carve_validation(
        &fold.train,
        val_fraction,
        derive_seed(config.seed, VALIDATION_STREAM, k as u64),
    )?;
    Ok(FoldPlan {
        fold: k,
        train_networks: tr,
        val_networks: va,
        test_networks: fold.test.clone(),
        config: TrainConfig {
            seed: derive_seed(config.seed, VALIDATION_STREAM + 1, k as u64),
            ..config.clone()
        },
    })
}

/// Samples whose source network is in `ids`, in corpus order.
pub fn select_samples(samples: &[Sample], ids: &[usize]) -> Vec<Sample> {
    samples
        .iter()
        .filter(|s| ids.contains(&s.source_network_id))
        .cloned()
        .collect()
}

/// Trains fold `plan` and scores it on the fold's test networks.
pub fn run_fold(samples: &[Sample], plan: &FoldPlan) -> Result<FoldReport> {
    let train_set = select_samples(samples, &plan.train_networks);
    let val_set = select_samples(samples, &plan.val_networks);
    let test_set = select_samples(samples, &plan.test_networks);
    log::info!(
        "fold {}: {} train / {} validation / {} test samples",
        plan.fold,
        train_set.len(),
        val_set.len(),
        test_set.len()
    );
    let out = crate::gnn::train(&train_set, &val_set, &plan.config)?;
    let evaluation = evaluate_fold(&out.params, &out.stats, &test_set)?;
    Ok(FoldReport {
        fold: plan.fold,
        train_networks: plan.train_networks.clone(),
        val_networks: plan.val_networks.clone(),
        test_networks: plan.test_networks.clone(),
        best_epoch: out.history.best_epoch,
        evaluation,
        history: out.history,
        checkpoint: Some(Checkpoint::new(plan.config.clone(), out.stats, out.params)),
    })
}

/// Trains and scores one model per fold. Validation networks are carved out
/// of each fold's training networks.
pub fn cross_validate(
    samples: &[Sample],
    plan: &SplitPlan,
    config: &TrainConfig,
    val_fraction: f64,
) -> Result<CrossValidation> {
    let folds = (0..plan.folds.len())
        .map(|k| run_fold(samples, &plan_fold(plan, k, config, val_fraction)?))
        .collect::<Result<Vec<_>>>()?;
    let aggregate = merge(
        &folds
            .iter()
            .map(|f| f.evaluation.clone())
            .collect::<Vec<_>>(),
    )?;
    Ok(CrossValidation { folds, aggregate })
}
