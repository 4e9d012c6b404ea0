use alloc::vec;
use alloc::vec::Vec;

use super::{Grads, NnError, ParamId, ParamStore, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    Embed {
        table: ParamId,
        index: usize,
    },
    Concat(Vec<Var>),
    Affine {
        x: Var,
        w: ParamId,
        b: Option<ParamId>,
    },
    Relu(Var),
    Gru {
        x: Var,
        h: Var,
        w_ih: ParamId,
        w_hh: ParamId,
        b: ParamId,
        // z, r, n, r*h laid out back to back
        cache: Vec<f64>,
    },
    /// `adj · x` with a constant square matrix.
    Propagate {
        adj: Vec<f64>,
        x: Var,
    },
    MeanRows(Var),
    SumRows(Var),
}

#[derive(Debug, Clone)]
struct Node {
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    op: Op,
}

/// Records one forward pass. The loss is the weighted sum of the terms
/// registered through [`Tape::xent`], [`Tape::squared_error`] and
/// [`Tape::seed`]; [`Tape::backward`] returns its parameter gradients.
#[derive(Debug)]
pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    seeds: Vec<(Var, Vec<f64>)>,
    loss: f64,
    signature: u64,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

/// Log-probabilities over the unmasked categories; masked entries are `-inf`.
pub fn log_softmax(logits: &[f64], mask: Option<&[bool]>) -> Result<Vec<f64>, NnError> {
    let allowed = |k: usize| mask.is_none_or(|m| m[k]);
    let max = (0..logits.len())
        .filter(|&k| allowed(k))
        .map(|k| logits[k])
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(NnError::AllMasked);
    }
    let sum: f64 = (0..logits.len())
        .filter(|&k| allowed(k))
        .map(|k| libm::exp(logits[k] - max))
        .sum();
    let log_z = max + libm::log(sum);
    Ok((0..logits.len())
        .map(|k| if allowed(k) { logits[k] - log_z } else { f64::NEG_INFINITY })
        .collect())
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
            seeds: Vec::new(),
            loss: 0.0,
            signature: 0xcbf2_9ce4_8422_2325,
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(value.len(), rows * cols);
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        let n = &self.nodes[v.0];
        [n.rows, n.cols]
    }

    /// Hash of every ReLU activation pattern so far; two evaluations with equal
    /// signatures lie in the same piecewise-smooth region.
    pub fn signature(&self) -> u64 {
        self.signature
    }

    /// Accumulated loss of all registered terms.
    pub fn loss(&self) -> f64 {
        self.loss
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A constant.
    pub fn input(&mut self, t: Tensor) -> Var {
        let [rows, cols] = t.shape();
        self.push(rows, cols, t.into_data(), Op::Input)
    }

    /// Row `index` of an embedding table as a single-row value.
    pub fn embed(&mut self, table: ParamId, index: usize) -> Var {
        let t = self.params.get(table);
        assert!(index < t.rows(), "embedding index {index} out of range");
        let value = t.row(index).to_vec();
        self.push(1, t.cols(), value, Op::Embed { table, index })
    }

    /// Column-wise concatenation of values with equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let rows = self.nodes[parts[0].0].rows;
        let cols: usize = parts.iter().map(|p| self.nodes[p.0].cols).sum();
        let mut value = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                let n = &self.nodes[p.0];
                assert_eq!(n.rows, rows, "concat row mismatch");
                value.extend_from_slice(&n.value[r * n.cols..(r + 1) * n.cols]);
            }
        }
        self.push(rows, cols, value, Op::Concat(parts.to_vec()))
    }

    /// `x · wᵀ + b` row by row, with `w` shaped `[out, in]` and `b` shaped `[1, out]`.
    pub fn affine(&mut self, x: Var, w: ParamId, b: Option<ParamId>) -> Var {
        let wt = self.params.get(w);
        let (out, inp) = (wt.rows(), wt.cols());
        let xn = &self.nodes[x.0];
        assert_eq!(xn.cols, inp, "affine input width");
        let rows = xn.rows;
        let mut value = vec![0.0; rows * out];
        for r in 0..rows {
            let xr = &xn.value[r * inp..(r + 1) * inp];
            for o in 0..out {
                value[r * out + o] = dot(wt.row(o), xr);
            }
            if let Some(b) = b {
                for (y, bo) in value[r * out..(r + 1) * out].iter_mut().zip(self.params.get(b).data()) {
                    *y += bo;
                }
            }
        }
        self.push(rows, out, value, Op::Affine { x, w, b })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let n = &self.nodes[x.0];
        for &v in &n.value {
            self.signature = (self.signature ^ u64::from(v > 0.0)).wrapping_mul(0x0000_0100_0000_01b3);
        }
        let value = n.value.iter().map(|&v| v.max(0.0)).collect();
        let (rows, cols) = (n.rows, n.cols);
        self.push(rows, cols, value, Op::Relu(x))
    }

    /// One GRU cell update for a single row.
    pub fn gru(&mut self, x: Var, h: Var, w_ih: ParamId, w_hh: ParamId, b: ParamId) -> Var {
        let (wi, wh, bias) = (self.params.get(w_ih), self.params.get(w_hh), self.params.get(b).data());
        let hs = wh.cols();
        let xv = &self.nodes[x.0].value;
        let hv = &self.nodes[h.0].value;
        assert_eq!(hv.len(), hs, "gru hidden width");
        assert_eq!(xv.len(), wi.cols(), "gru input width");
        let mut cache = vec![0.0; 4 * hs];
        let mut out = vec![0.0; hs];
        for k in 0..hs {
            cache[k] = sigmoid(dot(wi.row(k), xv) + dot(wh.row(k), hv) + bias[k]);
            cache[hs + k] = sigmoid(dot(wi.row(hs + k), xv) + dot(wh.row(hs + k), hv) + bias[hs + k]);
            cache[3 * hs + k] = cache[hs + k] * hv[k];
        }
        for k in 0..hs {
            let a = dot(wi.row(2 * hs + k), xv) + dot(wh.row(2 * hs + k), &cache[3 * hs..]) + bias[2 * hs + k];
            let n = libm::tanh(a);
            cache[2 * hs + k] = n;
            let z = cache[k];
            out[k] = (1.0 - z) * hv[k] + z * n;
        }
        self.push(
            1,
            hs,
            out,
            Op::Gru {
                x,
                h,
                w_ih,
                w_hh,
                b,
                cache,
            },
        )
    }

    /// `adj · x` for a constant `[rows × rows]` matrix `adj`.
    pub fn propagate(&mut self, adj: &Tensor, x: Var) -> Var {
        let n = &self.nodes[x.0];
        assert_eq!(adj.shape(), [n.rows, n.rows], "propagation matrix shape");
        let (rows, cols) = (n.rows, n.cols);
        let mut value = vec![0.0; rows * cols];
        for i in 0..rows {
            for j in 0..rows {
                let a = adj.data()[i * rows + j];
                if a != 0.0 {
                    for c in 0..cols {
                        value[i * cols + c] += a * n.value[j * cols + c];
                    }
                }
            }
        }
        self.push(
            rows,
            cols,
            value,
            Op::Propagate {
                adj: adj.data().to_vec(),
                x,
            },
        )
    }

    pub fn mean_rows(&mut self, x: Var) -> Var {
        let mut v = self.sum_values(x);
        let rows = self.nodes[x.0].rows as f64;
        v.iter_mut().for_each(|e| *e /= rows);
        let cols = v.len();
        self.push(1, cols, v, Op::MeanRows(x))
    }

    pub fn sum_rows(&mut self, x: Var) -> Var {
        let v = self.sum_values(x);
        let cols = v.len();
        self.push(1, cols, v, Op::SumRows(x))
    }

    fn sum_values(&self, x: Var) -> Vec<f64> {
        let n = &self.nodes[x.0];
        let mut v = vec![0.0; n.cols];
        for r in 0..n.rows {
            for c in 0..n.cols {
                v[c] += n.value[r * n.cols + c];
            }
        }
        v
    }

    /// Adds `weight · −log softmax(logits)[target]` to the loss, renormalizing
    /// over unmasked categories. Returns the unweighted term.
    pub fn xent(&mut self, logits: Var, target: usize, mask: Option<&[bool]>, weight: f64) -> Result<f64, NnError> {
        let values = &self.nodes[logits.0].value;
        if target >= values.len() {
            return Err(NnError::TargetOutOfRange {
                target,
                categories: values.len(),
            });
        }
        if mask.is_some_and(|m| !m[target]) {
            return Err(NnError::TargetMasked(target));
        }
        let logp = log_softmax(values, mask)?;
        let term = -logp[target];
        if weight != 0.0 {
            let mut grad: Vec<f64> = logp.iter().map(|&l| weight * libm::exp(l)).collect();
            grad[target] -= weight;
            self.seeds.push((logits, grad));
            self.loss += weight * term;
        }
        Ok(term)
    }

    /// Adds `−weight · H(softmax(logits))` to the loss and returns the entropy `H`.
    pub fn entropy(&mut self, logits: Var, mask: Option<&[bool]>, weight: f64) -> Result<f64, NnError> {
        let logp = log_softmax(&self.nodes[logits.0].value, mask)?;
        let h: f64 = -logp
            .iter()
            .filter(|l| l.is_finite())
            .map(|&l| libm::exp(l) * l)
            .sum::<f64>();
        if weight != 0.0 {
            let grad = logp
                .iter()
                .map(|&l| if l.is_finite() { weight * libm::exp(l) * (l + h) } else { 0.0 })
                .collect();
            self.seeds.push((logits, grad));
            self.loss -= weight * h;
        }
        Ok(h)
    }

    /// Adds `weight · (x − target)²` for a single-element value.
    pub fn squared_error(&mut self, x: Var, target: f64, weight: f64) -> f64 {
        let v = &self.nodes[x.0].value;
        assert_eq!(v.len(), 1, "squared error expects a scalar");
        let diff = v[0] - target;
        self.seeds.push((x, vec![2.0 * weight * diff]));
        self.loss += weight * diff * diff;
        diff * diff
    }

    /// Shifts the reported loss by a constant without affecting gradients.
    pub fn offset_loss(&mut self, delta: f64) {
        self.loss += delta;
    }

    /// Adds `Σ grad · x` to the loss.
    pub fn seed(&mut self, x: Var, grad: Vec<f64>) {
        assert_eq!(grad.len(), self.nodes[x.0].value.len(), "seed width");
        self.loss += dot(&grad, &self.nodes[x.0].value);
        self.seeds.push((x, grad));
    }

    pub fn backward(&self) -> Grads {
        let mut pg = Grads::zeros(self.params);
        self.backward_into(&mut pg);
        pg
    }

    /// Accumulates parameter gradients of the loss into `pg`.
    pub fn backward_into(&self, pg: &mut Grads) {
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        for (v, g) in &self.seeds {
            accumulate(&mut grads[v.0], g);
        }
        for idx in (0..self.nodes.len()).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Embed { table, index } => {
                    let cols = node.cols;
                    let dst = &mut pg.get_mut(*table)[index * cols..(index + 1) * cols];
                    add_to(dst, &g);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let pc = self.nodes[p.0].cols;
                        let mut part = vec![0.0; node.rows * pc];
                        for r in 0..node.rows {
                            part[r * pc..(r + 1) * pc]
                                .copy_from_slice(&g[r * node.cols + offset..r * node.cols + offset + pc]);
                        }
                        accumulate(&mut grads[p.0], &part);
                        offset += pc;
                    }
                }
                Op::Affine { x, w, b } => {
                    let wt = self.params.get(*w);
                    let (out, inp) = (wt.rows(), wt.cols());
                    let xv = &self.nodes[x.0].value;
                    let mut gx = vec![0.0; node.rows * inp];
                    for r in 0..node.rows {
                        let gr = &g[r * out..(r + 1) * out];
                        let xr = &xv[r * inp..(r + 1) * inp];
                        let gw = pg.get_mut(*w);
                        for o in 0..out {
                            if gr[o] != 0.0 {
                                axpy(&mut gw[o * inp..(o + 1) * inp], gr[o], xr);
                                axpy(&mut gx[r * inp..(r + 1) * inp], gr[o], wt.row(o));
                            }
                        }
                        if let Some(b) = b {
                            add_to(pg.get_mut(*b), gr);
                        }
                    }
                    accumulate(&mut grads[x.0], &gx);
                }
                Op::Relu(x) => {
                    let gx: Vec<f64> = g
                        .iter()
                        .zip(&self.nodes[x.0].value)
                        .map(|(&gi, &xi)| if xi > 0.0 { gi } else { 0.0 })
                        .collect();
                    accumulate(&mut grads[x.0], &gx);
                }
                Op::Gru {
                    x,
                    h,
                    w_ih,
                    w_hh,
                    b,
                    cache,
                } => {
                    let (wi, wh) = (self.params.get(*w_ih), self.params.get(*w_hh));
                    let hs = node.cols;
                    let inp = wi.cols();
                    let xv = &self.nodes[x.0].value;
                    let hv = &self.nodes[h.0].value;
                    let (z, r, n, hr) = (&cache[..hs], &cache[hs..2 * hs], &cache[2 * hs..3 * hs], &cache[3 * hs..]);
                    // pre-activation gradients for the z, r, n blocks
                    let mut da = vec![0.0; 3 * hs];
                    let mut gh: Vec<f64> = (0..hs).map(|k| g[k] * (1.0 - z[k])).collect();
                    for k in 0..hs {
                        da[k] = g[k] * (n[k] - hv[k]) * z[k] * (1.0 - z[k]);
                        da[2 * hs + k] = g[k] * z[k] * (1.0 - n[k] * n[k]);
                    }
                    let mut ghr = vec![0.0; hs];
                    for k in 0..hs {
                        axpy(&mut ghr, da[2 * hs + k], wh.row(2 * hs + k));
                    }
                    for k in 0..hs {
                        da[hs + k] = ghr[k] * hv[k] * r[k] * (1.0 - r[k]);
                        gh[k] += ghr[k] * r[k];
                    }
                    let mut gx = vec![0.0; inp];
                    {
                        let gwi = pg.get_mut(*w_ih);
                        for (row, &d) in da.iter().enumerate() {
                            if d != 0.0 {
                                axpy(&mut gwi[row * inp..(row + 1) * inp], d, xv);
                                axpy(&mut gx, d, wi.row(row));
                            }
                        }
                    }
                    {
                        let gwh = pg.get_mut(*w_hh);
                        for (row, &d) in da.iter().enumerate() {
                            if d == 0.0 {
                                continue;
                            }
                            let src = if row >= 2 * hs { hr } else { hv.as_slice() };
                            axpy(&mut gwh[row * hs..(row + 1) * hs], d, src);
                            if row < 2 * hs {
                                axpy(&mut gh, d, wh.row(row));
                            }
                        }
                    }
                    add_to(pg.get_mut(*b), &da);
                    accumulate(&mut grads[x.0], &gx);
                    accumulate(&mut grads[h.0], &gh);
                }
                Op::Propagate { adj, x } => {
                    let (rows, cols) = (node.rows, node.cols);
                    let mut gx = vec![0.0; rows * cols];
                    for i in 0..rows {
                        for j in 0..rows {
                            let a = adj[i * rows + j];
                            if a != 0.0 {
                                axpy(&mut gx[j * cols..(j + 1) * cols], a, &g[i * cols..(i + 1) * cols]);
                            }
                        }
                    }
                    accumulate(&mut grads[x.0], &gx);
                }
                Op::MeanRows(x) | Op::SumRows(x) => {
                    let xn = &self.nodes[x.0];
                    let scale = if matches!(node.op, Op::MeanRows(_)) {
                        1.0 / xn.rows as f64
                    } else {
                        1.0
                    };
                    let mut gx = Vec::with_capacity(xn.value.len());
                    for _ in 0..xn.rows {
                        gx.extend(g.iter().map(|v| v * scale));
                    }
                    accumulate(&mut grads[x.0], &gx);
                }
            }
        }
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, g: &[f64]) {
    match slot {
        Some(acc) => add_to(acc, g),
        None => *slot = Some(g.to_vec()),
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn add_to(y: &mut [f64], x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += xi;
    }
}
