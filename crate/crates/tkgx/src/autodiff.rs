//! A small reverse-mode automatic differentiation tape over f64 vectors.
//!
//! Values are computed eagerly at node creation; `backward` walks the tape
//! in reverse accumulating vector-Jacobian products. Scalars are length-1
//! vectors. Complex vectors use the [re(0..m); im(m..2m)] layout.

use crate::error::{Error, Result};

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// Row `row` of a leaf holding a `width`-column matrix, flattened
    /// row-major.
    Row {
        table: NodeId,
        row: usize,
        width: usize,
    },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Neg(NodeId),
    Scale(NodeId, f64),
    Mul(NodeId, NodeId),
    Sum(NodeId),
    Slice {
        src: NodeId,
        start: usize,
    },
    Concat(Vec<NodeId>),
    /// out = W x, with W flattened row-major (rows x cols).
    MatVec {
        w: NodeId,
        x: NodeId,
        rows: usize,
        cols: usize,
    },
    Tanh(NodeId),
    LogSigmoid(NodeId),
    Mean(Vec<NodeId>),
    /// Elementwise complex product in [re; im] layout.
    CplxMul(NodeId, NodeId),
    CplxConj(NodeId),
    /// Phases theta (len m) -> unit-modulus complex [cos theta; sin theta].
    PhaseToCplx(NodeId),
    /// Scalar L2 norm.
    Norm(NodeId),
}

#[derive(Debug, Clone)]
struct Node {
    value: Vec<f64>,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-node gradients produced by `Tape::backward`.
pub struct Gradients {
    grads: Vec<Vec<f64>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. node `id` (zeros if the node did not
    /// influence the loss).
    pub fn of(&self, id: NodeId) -> &[f64] {
        &self.grads[id]
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id].value.len(), 1);
        self.nodes[id].value[0]
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        self.nodes.len() - 1
    }

    pub fn leaf(&mut self, value: Vec<f64>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn zeros(&mut self, len: usize) -> NodeId {
        self.leaf(vec![0.0; len])
    }

    pub fn row(&mut self, table: NodeId, row: usize, width: usize) -> NodeId {
        let value = self.nodes[table].value[row * width..(row + 1) * width].to_vec();
        self.push(value, Op::Row { table, row, width })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = zip_with(&self.nodes[a].value, &self.nodes[b].value, |x, y| x + y);
        self.push(value, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = zip_with(&self.nodes[a].value, &self.nodes[b].value, |x, y| x - y);
        self.push(value, Op::Sub(a, b))
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a].value.iter().map(|x| -x).collect();
        self.push(value, Op::Neg(a))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let value = self.nodes[a].value.iter().map(|x| c * x).collect();
        self.push(value, Op::Scale(a, c))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = zip_with(&self.nodes[a].value, &self.nodes[b].value, |x, y| x * y);
        self.push(value, Op::Mul(a, b))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let value = vec![self.nodes[a].value.iter().sum()];
        self.push(value, Op::Sum(a))
    }

    pub fn slice(&mut self, src: NodeId, start: usize, len: usize) -> NodeId {
        let value = self.nodes[src].value[start..start + len].to_vec();
        self.push(value, Op::Slice { src, start })
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let mut value = Vec::new();
        for &p in parts {
            value.extend_from_slice(&self.nodes[p].value);
        }
        self.push(value, Op::Concat(parts.to_vec()))
    }

    pub fn matvec(&mut self, w: NodeId, rows: usize, cols: usize, x: NodeId) -> NodeId {
        debug_assert_eq!(self.nodes[w].value.len(), rows * cols);
        debug_assert_eq!(self.nodes[x].value.len(), cols);
        let wv = &self.nodes[w].value;
        let xv = &self.nodes[x].value;
        let mut value = vec![0.0; rows];
        for i in 0..rows {
            let row = &wv[i * cols..(i + 1) * cols];
            value[i] = row.iter().zip(xv).map(|(a, b)| a * b).sum();
        }
        self.push(value, Op::MatVec { w, x, rows, cols })
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a].value.iter().map(|x| x.tanh()).collect();
        self.push(value, Op::Tanh(a))
    }

    /// Elementwise ln(sigmoid(x)), computed overflow-safely.
    pub fn log_sigmoid(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a].value.iter().map(|&x| log_sigmoid(x)).collect();
        self.push(value, Op::LogSigmoid(a))
    }

    /// Mean of same-length vectors.
    pub fn mean(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let len = self.nodes[parts[0]].value.len();
        let mut value = vec![0.0; len];
        for &p in parts {
            for (v, x) in value.iter_mut().zip(&self.nodes[p].value) {
                *v += x;
            }
        }
        let n = parts.len() as f64;
        value.iter_mut().for_each(|v| *v /= n);
        self.push(value, Op::Mean(parts.to_vec()))
    }

    pub fn cplx_mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let av = &self.nodes[a].value;
        let bv = &self.nodes[b].value;
        debug_assert_eq!(av.len(), bv.len());
        debug_assert_eq!(av.len() % 2, 0);
        let m = av.len() / 2;
        let mut value = vec![0.0; 2 * m];
        for k in 0..m {
            value[k] = av[k] * bv[k] - av[m + k] * bv[m + k];
            value[m + k] = av[k] * bv[m + k] + av[m + k] * bv[k];
        }
        self.push(value, Op::CplxMul(a, b))
    }

    pub fn cplx_conj(&mut self, a: NodeId) -> NodeId {
        let av = &self.nodes[a].value;
        let m = av.len() / 2;
        let mut value = av.clone();
        for x in &mut value[m..] {
            *x = -*x;
        }
        self.push(value, Op::CplxConj(a))
    }

    pub fn phase_to_cplx(&mut self, a: NodeId) -> NodeId {
        let av = &self.nodes[a].value;
        let m = av.len();
        let mut value = vec![0.0; 2 * m];
        for k in 0..m {
            value[k] = av[k].cos();
            value[m + k] = av[k].sin();
        }
        self.push(value, Op::PhaseToCplx(a))
    }

    pub fn norm(&mut self, a: NodeId) -> NodeId {
        let n = self.nodes[a].value.iter().map(|x| x * x).sum::<f64>().sqrt();
        self.push(vec![n], Op::Norm(a))
    }

    pub fn check_finite(&self, id: NodeId) -> Result<()> {
        if self.nodes[id].value.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(
                "non-finite value on tape".to_string(),
            ))
        }
    }

    /// Reverse-mode sweep seeding d(loss)/d(loss) = 1 at the scalar `loss`.
    pub fn backward(&self, loss: NodeId) -> Gradients {
        assert_eq!(self.nodes[loss].value.len(), 1, "loss must be scalar");
        let mut grads: Vec<Vec<f64>> = self
            .nodes
            .iter()
            .map(|n| vec![0.0; n.value.len()])
            .collect();
        grads[loss][0] = 1.0;

        for id in (0..=loss).rev() {
            if grads[id].iter().all(|&g| g == 0.0) {
                continue;
            }
            let g = std::mem::take(&mut grads[id]);
            match &self.nodes[id].op {
                Op::Leaf => {}
                Op::Row { table, row, width } => {
                    let dst = &mut grads[*table][row * width..(row + 1) * width];
                    for (d, gi) in dst.iter_mut().zip(&g) {
                        *d += gi;
                    }
                }
                Op::Add(a, b) => {
                    axpy(&mut grads, *a, &g, 1.0);
                    axpy(&mut grads, *b, &g, 1.0);
                }
                Op::Sub(a, b) => {
                    axpy(&mut grads, *a, &g, 1.0);
                    axpy(&mut grads, *b, &g, -1.0);
                }
                Op::Neg(a) => axpy(&mut grads, *a, &g, -1.0),
                Op::Scale(a, c) => axpy(&mut grads, *a, &g, *c),
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    for k in 0..g.len() {
                        grads[a][k] += g[k] * self.nodes[b].value[k];
                    }
                    for k in 0..g.len() {
                        grads[b][k] += g[k] * self.nodes[a].value[k];
                    }
                }
                Op::Sum(a) => {
                    for d in grads[*a].iter_mut() {
                        *d += g[0];
                    }
                }
                Op::Slice { src, start } => {
                    for (k, gi) in g.iter().enumerate() {
                        grads[*src][start + k] += gi;
                    }
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let len = self.nodes[p].value.len();
                        for k in 0..len {
                            grads[p][k] += g[off + k];
                        }
                        off += len;
                    }
                }
                Op::MatVec { w, x, rows, cols } => {
                    let (w, x, rows, cols) = (*w, *x, *rows, *cols);
                    for i in 0..rows {
                        let gi = g[i];
                        if gi == 0.0 {
                            continue;
                        }
                        for j in 0..cols {
                            grads[w][i * cols + j] += gi * self.nodes[x].value[j];
                        }
                    }
                    for j in 0..cols {
                        let mut acc = 0.0;
                        for i in 0..rows {
                            acc += g[i] * self.nodes[w].value[i * cols + j];
                        }
                        grads[x][j] += acc;
                    }
                }
                Op::Tanh(a) => {
                    for k in 0..g.len() {
                        let y = self.nodes[id].value[k];
                        grads[*a][k] += g[k] * (1.0 - y * y);
                    }
                }
                Op::LogSigmoid(a) => {
                    for k in 0..g.len() {
                        let x = self.nodes[*a].value[k];
                        grads[*a][k] += g[k] * sigmoid(-x);
                    }
                }
                Op::Mean(parts) => {
                    let c = 1.0 / parts.len() as f64;
                    for &p in parts {
                        axpy(&mut grads, p, &g, c);
                    }
                }
                Op::CplxMul(a, b) => {
                    let (a, b) = (*a, *b);
                    let m = g.len() / 2;
                    for k in 0..m {
                        let (gr, gi) = (g[k], g[m + k]);
                        let (ar, ai) = (self.nodes[a].value[k], self.nodes[a].value[m + k]);
                        let (br, bi) = (self.nodes[b].value[k], self.nodes[b].value[m + k]);
                        grads[a][k] += gr * br + gi * bi;
                        grads[a][m + k] += -gr * bi + gi * br;
                        grads[b][k] += gr * ar + gi * ai;
                        grads[b][m + k] += -gr * ai + gi * ar;
                    }
                }
                Op::CplxConj(a) => {
                    let m = g.len() / 2;
                    for k in 0..m {
                        grads[*a][k] += g[k];
                        grads[*a][m + k] -= g[m + k];
                    }
                }
                Op::PhaseToCplx(a) => {
                    let m = g.len() / 2;
                    for k in 0..m {
                        let th = self.nodes[*a].value[k];
                        grads[*a][k] += -g[k] * th.sin() + g[m + k] * th.cos();
                    }
                }
                Op::Norm(a) => {
                    let n = self.nodes[id].value[0].max(1e-12);
                    let c = g[0] / n;
                    for k in 0..grads[*a].len() {
                        grads[*a][k] += c * self.nodes[*a].value[k];
                    }
                }
            }
            grads[id] = g;
        }
        Gradients { grads }
    }
}

fn zip_with(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

fn axpy(grads: &mut [Vec<f64>], dst: NodeId, g: &[f64], c: f64) {
    for (d, gi) in grads[dst].iter_mut().zip(g) {
        *d += c * gi;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}
