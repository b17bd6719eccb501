//! Encoder, message-passing processor, decoder, and refinement passes.

use std::rc::Rc;

use ndarray::Array2;

use super::features::{encode, encode_sample, Batch, NormStats};
use super::params::{MlpSlots, ModelParams};
use super::tape::{Tape, Var};
use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::flow::{BoundaryConditions, FlowState};
use crate::graph::VascularGraph;

/// Normalized node pressure and edge flow of one pass, as tape variables (n x 1, m x 1).
#[derive(Clone, Copy, Debug)]
pub struct PassOutput {
    pub pressure: Var,
    pub flow: Var,
}

fn mlp(tape: &mut Tape, params: &ModelParams, slots: &MlpSlots, mut x: Var) -> Var {
    let last = slots.linear.len() - 1;
    for (i, &(w, b)) in slots.linear.iter().enumerate() {
        let wv = tape.param(w, &params.tensors[w]);
        let bv = tape.param(b, &params.tensors[b]);
        x = tape.matmul(x, wv);
        x = tape.add_row(x, bv);
        if i < last {
            x = tape.silu(x);
        }
    }
    if let Some((g, b)) = slots.norm {
        let gv = tape.param(g, &params.tensors[g]);
        let bv = tape.param(b, &params.tensors[b]);
        x = tape.layer_norm(x, gv, bv);
    }
    x
}

/// Records the full forward computation and returns every pass's output.
pub fn forward(tape: &mut Tape, params: &ModelParams, batch: &Batch) -> Vec<PassOutput> {
    let n = batch.node.nrows();
    let m = batch.edge.nrows();
    let lay = &params.layout;
    let node_in = tape.leaf(batch.node.clone());
    let edge_in = tape.leaf(batch.edge.clone());
    let mut prev_p = tape.leaf(Array2::zeros((n, 1)));
    let mut prev_q = tape.leaf(Array2::zeros((m, 1)));
    let mut outputs = Vec::with_capacity(params.config.passes);
    for _ in 0..params.config.passes {
        let x = tape.concat(&[node_in, prev_p]);
        let mut hv = mlp(tape, params, &lay.node_encoder, x);
        let x = tape.concat(&[edge_in, prev_q]);
        let mut he = mlp(tape, params, &lay.edge_encoder, x);
        for (edge_mlp, node_mlp) in &lay.processor {
            let hu = tape.gather(hv, &batch.src);
            let hw = tape.gather(hv, &batch.dst);
            let x = tape.concat(&[he, hu, hw]);
            let msg = mlp(tape, params, edge_mlp, x);
            he = tape.add(he, msg);
            let incoming = tape.scatter_add(msg, &batch.dst, n);
            let outgoing = tape.scatter_add(msg, &batch.src, n);
            let x = tape.concat(&[hv, incoming, outgoing]);
            let upd = mlp(tape, params, node_mlp, x);
            hv = tape.add(hv, upd);
        }
        let p = mlp(tape, params, &lay.node_decoder, hv);
        let p = tape.keep_rows(p, &batch.keep, &batch.fixed);
        let q = mlp(tape, params, &lay.edge_decoder, he);
        outputs.push(PassOutput {
            pressure: p,
            flow: q,
        });
        prev_p = p;
        prev_q = q;
    }
    outputs
}

/// Half the sum of pressure MAE and flow MAE, in normalized units.
pub fn pass_loss(
    tape: &mut Tape,
    out: PassOutput,
    target_p: &Rc<Array2<f64>>,
    target_q: &Rc<Array2<f64>>,
) -> Var {
    let lp = tape.mae(out.pressure, target_p);
    let lq = tape.mae(out.flow, target_q);
    let sum = tape.add(lp, lq);
    tape.scale(sum, 0.5)
}

/// Training objective on the final pass, plus `aux_weight` times the loss
/// of every earlier pass.
pub fn batch_loss(
    tape: &mut Tape,
    params: &ModelParams,
    batch: &Batch,
    aux_weight: f64,
) -> Result<Var> {
    let (Some(tp), Some(tq)) = (&batch.target_pressure, &batch.target_flow) else {
        return Err(Error::InvalidParameter("batch has no targets".into()));
    };
    let outs = forward(tape, params, batch);
    let (last, earlier) = outs.split_last().expect("at least one pass");
    let mut loss = pass_loss(tape, *last, tp, tq);
    if aux_weight != 0.0 {
        for o in earlier {
            let l = pass_loss(tape, *o, tp, tq);
            let l = tape.scale(l, aux_weight);
            loss = tape.add(loss, l);
        }
    }
    Ok(loss)
}

/// MAE loss between two states of the same graph, in normalized units.
pub fn loss(
    graph: &VascularGraph,
    pred: &FlowState,
    truth: &FlowState,
    stats: &NormStats,
) -> Result<f64> {
    let (pp, pq) = super::features::normalized_targets(graph, pred, stats)?;
    let (tp, tq) = super::features::normalized_targets(graph, truth, stats)?;
    let mae = |a: &[f64], b: &[f64]| {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len().max(1) as f64
    };
    Ok(0.5 * (mae(&pp, &tp) + mae(&pq, &tq)))
}

/// Normalized predictions of every pass for one batch.
pub fn predict_normalized(
    params: &ModelParams,
    batch: &Batch,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let mut tape = Tape::new();
    let outs = forward(&mut tape, params, batch);
    let mut result = Vec::with_capacity(outs.len());
    for (k, o) in outs.iter().enumerate() {
        let p: Vec<f64> = tape.value(o.pressure).iter().copied().collect();
        let q: Vec<f64> = tape.value(o.flow).iter().copied().collect();
        if p.iter().chain(&q).any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                epoch: 0,
                detail: format!("non-finite activation in pass {k} over {} nodes", p.len()),
            });
        }
        result.push((p, q));
    }
    Ok(result)
}

/// De-normalized prediction for one graph. Boundary pressures are the prescribed values.
pub fn predict(
    params: &ModelParams,
    stats: &NormStats,
    graph: &VascularGraph,
    bc: &BoundaryConditions,
) -> Result<FlowState> {
    let feats = encode(graph, bc, Some(stats))?;
    let batch = Batch::from_features(&[&feats]);
    let (p, q) = predict_normalized(params, &batch)?
        .pop()
        .expect("at least one pass");
    Ok(to_state(graph, bc, stats, &p, &q))
}

pub(crate) fn to_state(
    graph: &VascularGraph,
    bc: &BoundaryConditions,
    stats: &NormStats,
    p: &[f64],
    q: &[f64],
) -> FlowState {
    let prescribed = bc.prescribed();
    FlowState {
        node_pressure: graph
            .nodes
            .iter()
            .zip(p)
            .map(|(n, &z)| {
                (
                    n.id,
                    prescribed
                        .get(&n.id)
                        .copied()
                        .unwrap_or_else(|| stats.pressure.unz(z)),
                )
            })
            .collect(),
        edge_flow: graph
            .edges
            .iter()
            .zip(q)
            .map(|(e, &z)| (e.id, stats.flow.unz(z)))
            .collect(),
    }
}

/// Largest relative difference between analytic and central-difference
/// gradients over every parameter entry. Normalization statistics are taken
/// from the sample itself.
pub fn check_gradients(params: &ModelParams, sample: &Sample, epsilon: f64) -> Result<f64> {
    let stats = NormStats::from_samples(std::slice::from_ref(sample))?;
    let enc = encode_sample(sample, &stats)?;
    let batch = Batch::from_samples(&[&enc]);
    let eval = |p: &ModelParams| -> Result<f64> {
        let mut tape = Tape::new();
        let l = batch_loss(&mut tape, p, &batch, 0.0)?;
        Ok(tape.scalar(l))
    };
    let mut tape = Tape::new();
    let l = batch_loss(&mut tape, params, &batch, 0.0)?;
    let grads = tape.backward(l, params.tensors.len());
    let mut work = params.clone();
    let mut worst: f64 = 0.0;
    for k in 0..work.tensors.len() {
        let cols = work.tensors[k].ncols();
        for idx in 0..work.tensors[k].len() {
            let at = [idx / cols, idx % cols];
            let orig = work.tensors[k][at];
            work.tensors[k][at] = orig + epsilon;
            let up = eval(&work)?;
            work.tensors[k][at] = orig - epsilon;
            let down = eval(&work)?;
            work.tensors[k][at] = orig;
            let numeric = (up - down) / (2.0 * epsilon);
            let analytic = grads[k].as_ref().map_or(0.0, |g| g[at]);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
