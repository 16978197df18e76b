//! Matrix-valued reverse-mode differentiation tape.
//!
//! Each operation records its inputs and whatever it needs from the forward
//! pass; [`Tape::backward`] walks the nodes in reverse and accumulates
//! gradients for every node that contributes to the output.

use std::borrow::Cow;

use super::tensor::Mat;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    /// The `i`-th node of a tape whose first nodes are the parameter leaves.
    pub(crate) fn param(i: usize) -> Self {
        Var(i)
    }
}

const LN_EPS: f64 = 1e-5;
const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_C: f64 = 0.044_715;

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_K * (x + GELU_C * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_K * (x + GELU_C * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_K * (1.0 + 3.0 * GELU_C * x * x)
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Gelu(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Mat, inv_std: Vec<f64> },
    SoftmaxRows(Var),
    Scale(Var, f64),
    Transpose(Var),
    Cols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    MeanRows(Var),
    /// Mean negative log-likelihood of softmax(logits) at the given class per row.
    SoftmaxNll { logits: Var, targets: Vec<usize>, probs: Mat },
}

struct Node<'a> {
    value: Cow<'a, Mat>,
    op: Op,
}

#[derive(Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.nodes.push(Node { value: Cow::Owned(value), op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    /// Borrowed leaf, used for parameters.
    pub fn leaf_ref(&mut self, m: &'a Mat) -> Var {
        self.nodes.push(Node { value: Cow::Borrowed(m), op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, m: Mat) -> Var {
        self.push(m, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        self.push(v, Op::Add(a, b))
    }

    /// Adds a `1 x c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (x, b) = (self.value(a), self.value(row));
        assert_eq!((b.rows, b.cols), (1, x.cols), "bias shape");
        let mut v = x.clone();
        for r in 0..v.rows {
            for (o, bb) in v.data[r * v.cols..(r + 1) * v.cols].iter_mut().zip(&b.data) {
                *o += bb;
            }
        }
        self.push(v, Op::AddRow(a, row))
    }

    /// `x W + b`
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Var {
        let xw = self.matmul(x, w);
        self.add_row(xw, b)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(gelu);
        self.push(v, Op::Gelu(a))
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = self.value(x);
        let (g, b) = (self.value(gamma), self.value(beta));
        let n = xv.cols as f64;
        let mut xhat = Mat::zeros(xv.rows, xv.cols);
        let mut out = Mat::zeros(xv.rows, xv.cols);
        let mut inv_std = Vec::with_capacity(xv.rows);
        for r in 0..xv.rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let is = 1.0 / (var + LN_EPS).sqrt();
            inv_std.push(is);
            for c in 0..xv.cols {
                let h = (row[c] - mean) * is;
                *xhat.at_mut(r, c) = h;
                *out.at_mut(r, c) = g.data[c] * h + b.data[c];
            }
        }
        self.push(out, Op::LayerNorm { x, gamma, beta, xhat, inv_std })
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut out = x.clone();
        for r in 0..out.rows {
            softmax_in_place(&mut out.data[r * x.cols..(r + 1) * x.cols]);
        }
        self.push(out, Op::SoftmaxRows(a))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).scale(s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a))
    }

    pub fn cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let x = self.value(a);
        let mut v = Mat::zeros(x.rows, len);
        for r in 0..x.rows {
            v.data[r * len..(r + 1) * len].copy_from_slice(&x.row(r)[start..start + len]);
        }
        self.push(v, Op::Cols { x: a, start })
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut v = Mat::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let m = self.value(p);
            assert_eq!(m.rows, rows, "concat row counts");
            for r in 0..rows {
                v.data[r * cols + offset..r * cols + offset + m.cols].copy_from_slice(m.row(r));
            }
            offset += m.cols;
        }
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let v = x.sum_rows().scale(1.0 / x.rows as f64);
        self.push(v, Op::MeanRows(a))
    }

    /// Mean cross-entropy of row-wise softmax against class indices; a `1 x 1` node.
    pub fn softmax_nll(&mut self, logits: Var, targets: &[usize]) -> Var {
        let x = self.value(logits);
        assert_eq!(x.rows, targets.len(), "one target per row");
        let mut probs = x.clone();
        let mut loss = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let row = &x.data[r * x.cols..(r + 1) * x.cols];
            let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[t];
            softmax_in_place(&mut probs.data[r * x.cols..(r + 1) * x.cols]);
        }
        let v = Mat::filled(1, 1, loss / targets.len() as f64);
        self.push(v, Op::SoftmaxNll { logits, targets: targets.to_vec(), probs })
    }

    /// Gradients of the scalar `output` with respect to every node.
    pub fn backward(&self, output: Var) -> Vec<Option<Mat>> {
        let mut grads: Vec<Option<Mat>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Mat::filled(1, 1, 1.0));
        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let mut acc = |v: Var, d: Mat| match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&d),
                slot @ None => *slot = Some(d),
            };
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    acc(*a, g.matmul_t(self.value(*b)));
                    acc(*b, self.value(*a).t_matmul(&g));
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g.clone());
                }
                Op::AddRow(a, row) => {
                    acc(*row, g.sum_rows());
                    acc(*a, g.clone());
                }
                Op::Gelu(a) => {
                    let x = self.value(*a);
                    let d = Mat { data: g.data.iter().zip(&x.data).map(|(gg, &xx)| gg * gelu_grad(xx)).collect(), ..g };
                    acc(*a, d);
                }
                Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                    let gm = self.value(*gamma);
                    let n = xhat.cols as f64;
                    let mut dgamma = Mat::zeros(1, xhat.cols);
                    let mut dx = Mat::zeros(xhat.rows, xhat.cols);
                    for r in 0..xhat.rows {
                        let (gr, hr) = (g.row(r), xhat.row(r));
                        let dh: Vec<f64> = gr.iter().zip(&gm.data).map(|(a, b)| a * b).collect();
                        let mean_dh = dh.iter().sum::<f64>() / n;
                        let mean_dh_h = dh.iter().zip(hr).map(|(a, b)| a * b).sum::<f64>() / n;
                        for c in 0..xhat.cols {
                            dgamma.data[c] += gr[c] * hr[c];
                            *dx.at_mut(r, c) = inv_std[r] * (dh[c] - mean_dh - hr[c] * mean_dh_h);
                        }
                    }
                    acc(*beta, g.sum_rows());
                    acc(*gamma, dgamma);
                    acc(*x, dx);
                }
                Op::SoftmaxRows(a) => {
                    let y = &self.nodes[i].value;
                    let mut d = Mat::zeros(y.rows, y.cols);
                    for r in 0..y.rows {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for c in 0..y.cols {
                            *d.at_mut(r, c) = yr[c] * (gr[c] - dot);
                        }
                    }
                    acc(*a, d);
                }
                Op::Scale(a, s) => acc(*a, g.scale(*s)),
                Op::Transpose(a) => acc(*a, g.transpose()),
                Op::Cols { x, start } => {
                    let src = self.value(*x);
                    let mut d = Mat::zeros(src.rows, src.cols);
                    for r in 0..g.rows {
                        d.data[r * src.cols + start..r * src.cols + start + g.cols].copy_from_slice(g.row(r));
                    }
                    acc(*x, d);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).cols;
                        let mut d = Mat::zeros(g.rows, w);
                        for r in 0..g.rows {
                            d.data[r * w..(r + 1) * w].copy_from_slice(&g.row(r)[offset..offset + w]);
                        }
                        offset += w;
                        acc(p, d);
                    }
                }
                Op::MeanRows(a) => {
                    let rows = self.value(*a).rows;
                    let mut d = Mat::zeros(rows, g.cols);
                    for r in 0..rows {
                        for c in 0..g.cols {
                            *d.at_mut(r, c) = g.data[c] / rows as f64;
                        }
                    }
                    acc(*a, d);
                }
                Op::SoftmaxNll { logits, targets, probs } => {
                    let scale = g.data[0] / targets.len() as f64;
                    let mut d = probs.clone();
                    for (r, &t) in targets.iter().enumerate() {
                        *d.at_mut(r, t) -= 1.0;
                    }
                    acc(*logits, d.scale(scale));
                }
            }
            grads[i] = Some(g);
        }
        grads
    }
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}
