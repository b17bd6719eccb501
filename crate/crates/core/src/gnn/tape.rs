//! Minimal reverse-mode automatic differentiation over dense matrices.
//!
//! Every operation appends its result to the tape; [`Tape::backward`] walks
//! the tape in reverse and accumulates adjoints. Parameters are registered
//! once per tape by index so gradients can be read back per tensor.

use std::collections::HashMap;
use std::rc::Rc;

use ndarray::{s, Array2, Axis, Zip};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Silu(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Array2<f64>,
        inv_std: Vec<f64>,
    },
    Concat(Vec<Var>),
    Gather(Var, Rc<Vec<usize>>),
    ScatterAdd(Var, Rc<Vec<usize>>),
    KeepRows(Var, Rc<Vec<f64>>),
    Mae(Var, Rc<Array2<f64>>),
    Scale(Var, f64),
}

#[derive(Default)]
pub struct Tape {
    values: Vec<Array2<f64>>,
    ops: Vec<Op>,
    params: HashMap<usize, Var>,
}

pub fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

fn silu_grad(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s * (1.0 + x * (1.0 - s))
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.values.push(value);
        self.ops.push(op);
        Var(self.values.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.values[v.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Constant input; receives no gradient.
    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Trainable tensor `index`. Repeated calls return the same variable.
    pub fn param(&mut self, index: usize, value: &Array2<f64>) -> Var {
        if let Some(&v) = self.params.get(&index) {
            return v;
        }
        let v = self.push(value.clone(), Op::Param(index));
        self.params.insert(index, v);
        v
    }

    pub fn matmul(&mut self, x: Var, w: Var) -> Var {
        let out = self.values[x.0].dot(&self.values[w.0]);
        self.push(out, Op::MatMul(x, w))
    }

    /// Adds a 1-row matrix to every row of `x`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Var {
        let out = &self.values[x.0] + &self.values[b.0];
        self.push(out, Op::AddRow(x, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = &self.values[a.0] + &self.values[b.0];
        self.push(out, Op::Add(a, b))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let out = &self.values[x.0] * c;
        self.push(out, Op::Scale(x, c))
    }

    pub fn silu(&mut self, x: Var) -> Var {
        let out = self.values[x.0].mapv(silu);
        self.push(out, Op::Silu(x))
    }

    /// Per-row normalization followed by elementwise gain and bias (both 1 x c).
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let xv = &self.values[x.0];
        let c = xv.ncols() as f64;
        let mut xhat = xv.clone();
        let mut inv_std = Vec::with_capacity(xv.nrows());
        for mut row in xhat.rows_mut() {
            let mean = row.sum() / c;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            row.mapv_inplace(|v| (v - mean) * is);
            inv_std.push(is);
        }
        let out = &(&xhat * &self.values[gain.0]) + &self.values[bias.0];
        self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
        )
    }

    /// Column-wise concatenation.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.values[p.0].view()).collect();
        let out = ndarray::concatenate(Axis(1), &views).expect("concat row mismatch");
        self.push(out, Op::Concat(parts.to_vec()))
    }

    /// Row `i` of the output is row `idx[i]` of `x`.
    pub fn gather(&mut self, x: Var, idx: &Rc<Vec<usize>>) -> Var {
        let out = self.values[x.0].select(Axis(0), idx);
        self.push(out, Op::Gather(x, Rc::clone(idx)))
    }

    /// Output has `rows` rows; row `idx[i]` accumulates row `i` of `x`.
    pub fn scatter_add(&mut self, x: Var, idx: &Rc<Vec<usize>>, rows: usize) -> Var {
        let xv = &self.values[x.0];
        let mut out = Array2::zeros((rows, xv.ncols()));
        for (i, &j) in idx.iter().enumerate() {
            let mut dst = out.row_mut(j);
            dst += &xv.row(i);
        }
        self.push(out, Op::ScatterAdd(x, Rc::clone(idx)))
    }

    /// `keep[i] * x[i, :] + fixed[i]`, used to clamp rows to known values.
    pub fn keep_rows(&mut self, x: Var, keep: &Rc<Vec<f64>>, fixed: &[f64]) -> Var {
        let mut out = self.values[x.0].clone();
        for (i, mut row) in out.rows_mut().into_iter().enumerate() {
            let (k, f) = (keep[i], fixed[i]);
            row.mapv_inplace(|v| k * v + f);
        }
        self.push(out, Op::KeepRows(x, Rc::clone(keep)))
    }

    /// Mean absolute difference to a constant target, as a 1 x 1 value.
    pub fn mae(&mut self, pred: Var, target: &Rc<Array2<f64>>) -> Var {
        let p = &self.values[pred.0];
        assert_eq!(p.dim(), target.dim(), "mae shape mismatch");
        let n = p.len().max(1) as f64;
        let total: f64 = Zip::from(p)
            .and(&**target)
            .fold(0.0, |acc, a, b| acc + (a - b).abs());
        self.push(
            Array2::from_elem((1, 1), total / n),
            Op::Mae(pred, Rc::clone(target)),
        )
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.values[v.0][[0, 0]]
    }

    /// Gradients of the scalar `loss` with respect to each registered
    /// parameter, indexed by parameter slot (`None` when unused).
    pub fn backward(&self, loss: Var, param_count: usize) -> Vec<Option<Array2<f64>>> {
        let mut adj: Vec<Option<Array2<f64>>> = vec![None; self.values.len()];
        adj[loss.0] = Some(Array2::ones(self.values[loss.0].dim()));
        let mut out = vec![None; param_count];

        fn acc(adj: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
            match &mut adj[v.0] {
                Some(a) => *a += &g,
                slot @ None => *slot = Some(g),
            }
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            match &self.ops[i] {
                Op::Leaf => {}
                Op::Param(k) => out[*k] = Some(g),
                Op::MatMul(x, w) => {
                    let gx = g.dot(&self.values[w.0].t());
                    let gw = self.values[x.0].t().dot(&g);
                    acc(&mut adj, *x, gx);
                    acc(&mut adj, *w, gw);
                }
                Op::AddRow(x, b) => {
                    let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut adj, *b, gb);
                    acc(&mut adj, *x, g);
                }
                Op::Add(a, b) => {
                    acc(&mut adj, *b, g.clone());
                    acc(&mut adj, *a, g);
                }
                Op::Scale(x, c) => acc(&mut adj, *x, g * *c),
                Op::Silu(x) => {
                    let mut gx = g;
                    Zip::from(&mut gx)
                        .and(&self.values[x.0])
                        .for_each(|d, &xv| *d *= silu_grad(xv));
                    acc(&mut adj, *x, gx);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    inv_std,
                } => {
                    let gbias = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    let ggain = (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
                    let dxhat = &g * &self.values[gain.0];
                    let c = xhat.ncols() as f64;
                    let mut gx = Array2::zeros(xhat.dim());
                    for r in 0..xhat.nrows() {
                        let dh = dxhat.row(r);
                        let xh = xhat.row(r);
                        let sum_dh = dh.sum();
                        let sum_dh_xh = dh.dot(&xh);
                        let is = inv_std[r];
                        Zip::from(gx.row_mut(r))
                            .and(&dh)
                            .and(&xh)
                            .for_each(|o, &d, &h| {
                                *o = is / c * (c * d - sum_dh - h * sum_dh_xh);
                            });
                    }
                    acc(&mut adj, *bias, gbias);
                    acc(&mut adj, *gain, ggain);
                    acc(&mut adj, *x, gx);
                }
                Op::Concat(parts) => {
                    let mut col = 0;
                    for p in parts {
                        let w = self.values[p.0].ncols();
                        acc(&mut adj, *p, g.slice(s![.., col..col + w]).to_owned());
                        col += w;
                    }
                }
                Op::Gather(x, idx) => {
                    let xv = &self.values[x.0];
                    let mut gx = Array2::zeros(xv.dim());
                    for (r, &j) in idx.iter().enumerate() {
                        let mut dst = gx.row_mut(j);
                        dst += &g.row(r);
                    }
                    acc(&mut adj, *x, gx);
                }
                Op::ScatterAdd(x, idx) => acc(&mut adj, *x, g.select(Axis(0), idx)),
                Op::KeepRows(x, keep) => {
                    let mut gx = g;
                    for (r, mut row) in gx.rows_mut().into_iter().enumerate() {
                        row *= keep[r];
                    }
                    acc(&mut adj, *x, gx);
                }
                Op::Mae(pred, target) => {
                    let p = &self.values[pred.0];
                    let scale = g[[0, 0]] / p.len().max(1) as f64;
                    let mut gp = Array2::zeros(p.dim());
                    Zip::from(&mut gp)
                        .and(p)
                        .and(&**target)
                        .for_each(|o, &a, &b| {
                            let d = a - b;
                            *o = if d > 0.0 {
                                scale
                            } else if d < 0.0 {
                                -scale
                            } else {
                                0.0
                            };
                        });
                    acc(&mut adj, *pred, gp);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::PortableRng;

    fn random(rng: &mut PortableRng, r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_fn((r, c), |_| rng.normal())
    }

    /// Central-difference check of every entry of every parameter.
    fn check(params: &mut [Array2<f64>], f: impl Fn(&mut Tape, &[Array2<f64>]) -> Var) {
        let mut tape = Tape::new();
        let loss = f(&mut tape, params);
        let grads = tape.backward(loss, params.len());
        let eval = |ps: &[Array2<f64>]| {
            let mut t = Tape::new();
            let l = f(&mut t, ps);
            t.scalar(l)
        };
        let eps = 1e-6;
        for k in 0..params.len() {
            for idx in 0..params[k].len() {
                let (r, c) = (idx / params[k].ncols(), idx % params[k].ncols());
                let orig = params[k][[r, c]];
                params[k][[r, c]] = orig + eps;
                let up = eval(params);
                params[k][[r, c]] = orig - eps;
                let down = eval(params);
                params[k][[r, c]] = orig;
                let numeric = (up - down) / (2.0 * eps);
                let analytic = grads[k].as_ref().map_or(0.0, |g| g[[r, c]]);
                let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
                assert!(
                    err < 1e-5,
                    "param {k} entry ({r},{c}): {analytic} vs {numeric}"
                );
            }
        }
    }

    #[test]
    fn each_op_matches_finite_differences() {
        let mut rng = PortableRng::new(3);
        let target = Rc::new(random(&mut rng, 5, 1).mapv(|v| v + 10.0));
        let idx = Rc::new(vec![0, 2, 2, 1, 4, 3, 0]);
        let keep = Rc::new(vec![1.0, 0.0, 1.0, 1.0, 0.0]);
        let fixed = vec![0.0, 0.3, 0.0, 0.0, -0.2];
        let mut params = vec![
            random(&mut rng, 5, 3),
            random(&mut rng, 3, 4),
            random(&mut rng, 1, 4),
            random(&mut rng, 1, 8),
            random(&mut rng, 1, 8),
            random(&mut rng, 8, 1),
        ];
        check(&mut params, |t, p| {
            let x = t.param(0, &p[0]);
            let w = t.param(1, &p[1]);
            let b = t.param(2, &p[2]);
            let h = t.matmul(x, w);
            let h = t.add_row(h, b);
            let h = t.silu(h);
            let e = t.gather(h, &idx);
            let n = t.scatter_add(e, &idx, 5);
            let cat = t.concat(&[n, h]);
            let g = t.param(3, &p[3]);
            let bb = t.param(4, &p[4]);
            let ln = t.layer_norm(cat, g, bb);
            let sum = t.add(ln, cat);
            let w2 = t.param(5, &p[5]);
            let y = t.matmul(sum, w2);
            let y = t.keep_rows(y, &keep, &fixed);
            let y = t.scale(y, 0.7);
            t.mae(y, &target)
        });
    }

    #[test]
    fn unused_parameter_gets_no_gradient() {
        let mut t = Tape::new();
        let a = Array2::from_elem((1, 1), 2.0);
        let x = t.param(0, &a);
        let _unused = t.param(1, &a);
        let target = Rc::new(Array2::zeros((1, 1)));
        let l = t.mae(x, &target);
        let g = t.backward(l, 2);
        assert_eq!(g[0].as_ref().unwrap()[[0, 0]], 1.0);
        assert!(g[1].is_none());
    }

    #[test]
    fn layer_norm_rows_are_standardized() {
        let mut t = Tape::new();
        let x = t.leaf(
            Array2::from_shape_vec((2, 4), vec![1.0, 2.0, 3.0, 4.0, -5.0, 0.0, 5.0, 10.0]).unwrap(),
        );
        let g = t.leaf(Array2::ones((1, 4)));
        let b = t.leaf(Array2::zeros((1, 4)));
        let y = t.layer_norm(x, g, b);
        for row in t.value(y).rows() {
            assert!(row.sum().abs() < 1e-12);
            let var = row.iter().map(|v| v * v).sum::<f64>() / 4.0;
            assert!((var - 1.0).abs() < 1e-4);
        }
    }
}
