use super::tensor::{gemm_nn, gemm_nt, gemm_tn, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Negative slope used by [`Tape::leaky_relu`] callers unless configured otherwise.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Elementwise {
    Add,
    Sub,
    Hadamard,
    Sigmoid,
    Tanh,
    LeakyRelu(f64),
    Relu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduce {
    SumAll,
    /// One sum per row (m×n → m×1).
    SumRows,
    /// One sum per column (m×n → 1×n).
    SumCols,
    L2Norm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Binary {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Unary {
    Sigmoid,
    Tanh,
    Relu,
    LeakyRelu(f64),
    Square,
    Affine { scale: f64 },
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Binary {
        kind: Binary,
        a: Var,
        b: Var,
        broadcast: bool,
    },
    Unary(Unary, Var),
    Reduce(Reduce, Var),
    ConcatCols(Vec<Var>),
    StackRows(Vec<Var>),
    Row(Var, usize),
    Transpose(Var),
    Reshape(Var),
    RepeatRows(Var),
    InstanceNorm {
        x: Var,
        gain: Var,
        bias: Var,
        normed: Tensor,
        inv_std: Vec<f64>,
    },
    NormalizeAdjacency {
        a: Var,
        threshold: f64,
        inv_sqrt_deg: Vec<f64>,
    },
    SruScan {
        inputs: SruInputs,
        reversed: bool,
        f: Tensor,
        r: Tensor,
        c: Tensor,
    },
}

/// Operands of [`Tape::sru_scan`]: four T×h projections and two 1×h
/// peephole weights.
#[derive(Clone, Copy, Debug)]
pub struct SruInputs {
    pub x: Var,
    pub f_pre: Var,
    pub r_pre: Var,
    pub highway: Var,
    pub v_f: Var,
    pub v_r: Var,
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Linear record of primitive operations, replayed in reverse by [`Tape::backward`].
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
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

    /// Drops stored adjoints; recorded values stay.
    pub fn clear_grads(&mut self) {
        self.grads.clear();
    }

    /// Drops every recorded node and adjoint.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.grads.clear();
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Adjoint of `v` from the most recent [`Tape::backward`]; zeros when `v`
    /// was not reached.
    pub fn grad(&self, v: Var) -> Tensor {
        match self.grads.get(v.0) {
            Some(Some(g)) => g.clone(),
            _ => {
                let (r, c) = self.shape(v);
                Tensor::zeros(r, c)
            }
        }
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.rows() {
            return Err(Error::shape("matmul", av.shape(), bv.shape()));
        }
        let mut out = Tensor::zeros(av.rows(), bv.cols());
        gemm_nn(av, bv, &mut out);
        let g = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), g))
    }

    /// `a · bᵀ`, the layout used by linear layers storing `W` as out×in.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.cols() {
            return Err(Error::shape("matmul_nt", av.shape(), bv.shape()));
        }
        let mut out = Tensor::zeros(av.rows(), bv.rows());
        gemm_nt(av, bv, &mut out);
        let g = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::MatMulNt(a, b), g))
    }

    pub fn elementwise(&mut self, kind: Elementwise, a: Var, b: Option<Var>) -> Result<Var> {
        let binary = |k| match b {
            Some(b) => Ok((k, b)),
            None => Err(Error::Contract(format!("{kind:?} needs two operands"))),
        };
        match kind {
            Elementwise::Add => {
                let (k, b) = binary(Binary::Add)?;
                self.binary(k, a, b)
            }
            Elementwise::Sub => {
                let (k, b) = binary(Binary::Sub)?;
                self.binary(k, a, b)
            }
            Elementwise::Hadamard => {
                let (k, b) = binary(Binary::Mul)?;
                self.binary(k, a, b)
            }
            Elementwise::Sigmoid => Ok(self.unary(Unary::Sigmoid, a)),
            Elementwise::Tanh => Ok(self.unary(Unary::Tanh, a)),
            Elementwise::Relu => Ok(self.unary(Unary::Relu, a)),
            Elementwise::LeakyRelu(slope) => Ok(self.unary(Unary::LeakyRelu(slope), a)),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(Unary::Sigmoid, a)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(Unary::Tanh, a)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(Unary::Relu, a)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        self.unary(Unary::LeakyRelu(slope), a)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(Unary::Square, a)
    }

    /// `a * scale + shift`.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let value = self.value(a).map(|x| x * scale + shift);
        let g = self.any_grad(&[a]);
        self.push(value, Op::Unary(Unary::Affine { scale }, a), g)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.affine(a, s, 0.0)
    }

    fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let broadcast = if av.shape() == bv.shape() {
            false
        } else if bv.rows() == 1 && bv.cols() == av.cols() {
            true
        } else {
            let name = match kind {
                Binary::Add => "add",
                Binary::Sub => "sub",
                Binary::Mul => "hadamard",
            };
            return Err(Error::shape(name, av.shape(), bv.shape()));
        };
        let cols = av.cols();
        let f: fn(f64, f64) -> f64 = match kind {
            Binary::Add => |x, y| x + y,
            Binary::Sub => |x, y| x - y,
            Binary::Mul => |x, y| x * y,
        };
        let data = av
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let y = if broadcast {
                    bv.data()[i % cols]
                } else {
                    bv.data()[i]
                };
                f(x, y)
            })
            .collect();
        let out = Tensor::new(av.rows(), cols, data)?;
        let g = self.any_grad(&[a, b]);
        Ok(self.push(
            out,
            Op::Binary {
                kind,
                a,
                b,
                broadcast,
            },
            g,
        ))
    }

    fn unary(&mut self, kind: Unary, a: Var) -> Var {
        let av = self.value(a);
        let value = match kind {
            Unary::Sigmoid => av.map(sigmoid),
            Unary::Tanh => av.map(f64::tanh),
            Unary::Relu => av.map(|x| if x > 0.0 { x } else { 0.0 }),
            Unary::LeakyRelu(s) => av.map(|x| if x > 0.0 { x } else { s * x }),
            Unary::Square => av.map(|x| x * x),
            Unary::Affine { scale } => av.map(|x| x * scale),
        };
        let g = self.any_grad(&[a]);
        self.push(value, Op::Unary(kind, a), g)
    }

    pub fn reduce(&mut self, kind: Reduce, a: Var) -> Var {
        let av = self.value(a);
        let value = match kind {
            Reduce::SumAll => Tensor::scalar(av.sum()),
            Reduce::SumRows => Tensor::from_fn(av.rows(), 1, |r, _| av.row(r).iter().sum()),
            Reduce::SumCols => {
                let mut out = Tensor::zeros(1, av.cols());
                for r in 0..av.rows() {
                    for (o, v) in out.data_mut().iter_mut().zip(av.row(r)) {
                        *o += v;
                    }
                }
                out
            }
            Reduce::L2Norm => Tensor::scalar(av.norm()),
        };
        let g = self.any_grad(&[a]);
        self.push(value, Op::Reduce(kind, a), g)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        self.reduce(Reduce::SumAll, a)
    }

    pub fn l2_norm(&mut self, a: Var) -> Var {
        self.reduce(Reduce::L2Norm, a)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        self.concat_cols_all(&[a, b])
    }

    /// Column-wise concatenation of any number of operands with equal row counts.
    pub fn concat_cols_all(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat_cols of nothing".into()))?;
        let rows = self.value(*first).rows();
        let mut cols = 0;
        for p in parts {
            let pv = self.value(*p);
            if pv.rows() != rows {
                return Err(Error::shape(
                    "concat_cols",
                    self.value(*first).shape(),
                    pv.shape(),
                ));
            }
            cols += pv.cols();
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(self.value(*p).row(r));
            }
        }
        let out = Tensor::new(rows, cols, data)?;
        let g = self.any_grad(parts);
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), g))
    }

    /// Row-wise stacking of operands with equal column counts.
    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("stack_rows of nothing".into()))?;
        let cols = self.value(*first).cols();
        let mut rows = 0;
        let mut data = Vec::new();
        for p in parts {
            let pv = self.value(*p);
            if pv.cols() != cols {
                return Err(Error::shape(
                    "stack_rows",
                    self.value(*first).shape(),
                    pv.shape(),
                ));
            }
            rows += pv.rows();
            data.extend_from_slice(pv.data());
        }
        let out = Tensor::new(rows, cols, data)?;
        let g = self.any_grad(parts);
        Ok(self.push(out, Op::StackRows(parts.to_vec()), g))
    }

    /// Row `r` of `a` as a 1×cols tensor.
    pub fn row(&mut self, a: Var, r: usize) -> Result<Var> {
        let av = self.value(a);
        if r >= av.rows() {
            return Err(Error::Contract(format!(
                "row {r} out of range for {:?}",
                av.shape()
            )));
        }
        let out = Tensor::row_vector(av.row(r).to_vec());
        let g = self.any_grad(&[a]);
        Ok(self.push(out, Op::Row(a, r), g))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        let g = self.any_grad(&[a]);
        self.push(out, Op::Transpose(a), g)
    }

    /// Reinterprets the row-major data of `a` with a new shape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let av = self.value(a);
        if av.len() != rows * cols {
            return Err(Error::shape("reshape", av.shape(), (rows, cols)));
        }
        let out = Tensor::new(rows, cols, av.data().to_vec())?;
        let g = self.any_grad(&[a]);
        Ok(self.push(out, Op::Reshape(a), g))
    }

    /// Repeats a 1×n row `times` times, giving times×n.
    pub fn repeat_rows(&mut self, a: Var, times: usize) -> Result<Var> {
        let av = self.value(a);
        if av.rows() != 1 {
            return Err(Error::shape("repeat_rows", av.shape(), (1, av.cols())));
        }
        let mut data = Vec::with_capacity(times * av.cols());
        for _ in 0..times {
            data.extend_from_slice(av.data());
        }
        let out = Tensor::new(times, av.cols(), data)?;
        let g = self.any_grad(&[a]);
        Ok(self.push(out, Op::RepeatRows(a), g))
    }

    /// Per-row instance normalization: each row is standardized over its own
    /// features (population variance), then scaled by `gain` and shifted by
    /// `bias` (both 1×d).
    pub fn instance_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let xv = self.value(x);
        let (rows, d) = xv.shape();
        for p in [gain, bias] {
            if self.shape(p) != (1, d) {
                return Err(Error::shape("instance_norm", (rows, d), self.shape(p)));
            }
        }
        let mut normed = Tensor::zeros(rows, d);
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std.push(is);
            for (c, v) in row.iter().enumerate() {
                normed.set(r, c, (v - mean) * is);
            }
        }
        let (gv, bv) = (self.value(gain), self.value(bias));
        let out = Tensor::from_fn(rows, d, |r, c| {
            normed.get(r, c) * gv.data()[c] + bv.data()[c]
        });
        let g = self.any_grad(&[x, gain, bias]);
        Ok(self.push(
            out,
            Op::InstanceNorm {
                x,
                gain,
                bias,
                normed,
                inv_std,
            },
            g,
        ))
    }

    /// Thresholded, symmetrically degree-normalized adjacency
    /// `D^{-1/2} A' D^{-1/2}` where `A'` drops entries with `|a| < threshold`
    /// and `d_i = Σ_j |A'_ij|`. Nodes with `d_i < 1e-8` get zero rows/columns.
    pub fn normalize_adjacency(&mut self, a: Var, threshold: f64) -> Result<Var> {
        let av = self.value(a);
        let (n, m) = av.shape();
        if n != m {
            return Err(Error::shape("normalize_adjacency", (n, m), (m, m)));
        }
        let kept = |x: f64| x.abs() >= threshold;
        let inv_sqrt_deg: Vec<f64> = (0..n)
            .map(|i| {
                let d: f64 = av.row(i).iter().filter(|x| kept(**x)).map(|x| x.abs()).sum();
                if d < DEGREE_FLOOR {
                    0.0
                } else {
                    1.0 / d.sqrt()
                }
            })
            .collect();
        let out = Tensor::from_fn(n, n, |i, j| {
            let x = av.get(i, j);
            if kept(x) {
                x * inv_sqrt_deg[i] * inv_sqrt_deg[j]
            } else {
                0.0
            }
        });
        let g = self.any_grad(&[a]);
        Ok(self.push(
            out,
            Op::NormalizeAdjacency {
                a,
                threshold,
                inv_sqrt_deg,
            },
            g,
        ))
    }

    /// Runs the SRU recurrence over the rows of the projections
    /// ```text
    /// f_t = σ(F_t + v_f ⊙ c_{t-1})     r_t = σ(R_t + v_r ⊙ c_{t-1})
    /// c_t = X_t + f_t ⊙ (c_{t-1} − X_t)
    /// h_t = H_t + r_t ⊙ (c_t − H_t)
    /// ```
    /// from `c = 0`, last row first when `reversed`. Returns the T×h hidden
    /// states indexed by input row.
    pub fn sru_scan(&mut self, inputs: SruInputs, reversed: bool) -> Result<Var> {
        let SruInputs { x, f_pre, r_pre, highway, v_f, v_r } = inputs;
        let (steps, h) = self.shape(x);
        for v in [f_pre, r_pre, highway] {
            if self.shape(v) != (steps, h) {
                return Err(Error::shape("sru_scan", (steps, h), self.shape(v)));
            }
        }
        for v in [v_f, v_r] {
            if self.shape(v) != (1, h) {
                return Err(Error::shape("sru_scan", (1, h), self.shape(v)));
            }
        }
        let (xv, fv, rv, hv) = (self.value(x), self.value(f_pre), self.value(r_pre), self.value(highway));
        let (vf, vr) = (self.value(v_f).data(), self.value(v_r).data());
        let mut f = Tensor::zeros(steps, h);
        let mut r = Tensor::zeros(steps, h);
        let mut c = Tensor::zeros(steps, h);
        let mut out = Tensor::zeros(steps, h);
        let mut prev = vec![0.0; h];
        for k in 0..steps {
            let t = if reversed { steps - 1 - k } else { k };
            for j in 0..h {
                let ft = sigmoid(fv.get(t, j) + vf[j] * prev[j]);
                let rt = sigmoid(rv.get(t, j) + vr[j] * prev[j]);
                let xt = xv.get(t, j);
                let ct = xt + ft * (prev[j] - xt);
                let hw = hv.get(t, j);
                f.set(t, j, ft);
                r.set(t, j, rt);
                c.set(t, j, ct);
                out.set(t, j, hw + rt * (ct - hw));
                prev[j] = ct;
            }
        }
        let g = self.any_grad(&[x, f_pre, r_pre, highway, v_f, v_r]);
        Ok(self.push(out, Op::SruScan { inputs, reversed, f, r, c }, g))
    }

    /// Reverse sweep from a 1×1 `loss`. Adjoints from any previous sweep are
    /// discarded first, so repeated calls never accumulate.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Tensor>> = Vec::new();
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        let val = |v: Var| &self.nodes[v.0].value;
        let wants = |v: Var| self.nodes[v.0].needs_grad;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if wants(*a) {
                    let slot = slot(grads, *a, val(*a));
                    gemm_nt(g, val(*b), slot);
                }
                if wants(*b) {
                    let slot = slot(grads, *b, val(*b));
                    gemm_tn(val(*a), g, slot);
                }
            }
            Op::MatMulNt(a, b) => {
                if wants(*a) {
                    let slot = slot(grads, *a, val(*a));
                    gemm_nn(g, val(*b), slot);
                }
                if wants(*b) {
                    let slot = slot(grads, *b, val(*b));
                    gemm_tn(g, val(*a), slot);
                }
            }
            Op::Binary {
                kind,
                a,
                b,
                broadcast,
            } => {
                let cols = g.cols();
                if wants(*a) {
                    let bv = val(*b);
                    let slot = slot(grads, *a, val(*a));
                    for (i, (s, gi)) in slot.data_mut().iter_mut().zip(g.data()).enumerate() {
                        *s += match kind {
                            Binary::Add | Binary::Sub => *gi,
                            Binary::Mul => {
                                gi * if *broadcast {
                                    bv.data()[i % cols]
                                } else {
                                    bv.data()[i]
                                }
                            }
                        };
                    }
                }
                if wants(*b) {
                    let av = val(*a);
                    let slot = slot(grads, *b, val(*b));
                    let sd = slot.data_mut();
                    for (i, (gi, ai)) in g.data().iter().zip(av.data()).enumerate() {
                        let contrib = match kind {
                            Binary::Add => *gi,
                            Binary::Sub => -gi,
                            Binary::Mul => gi * ai,
                        };
                        if *broadcast {
                            sd[i % cols] += contrib;
                        } else {
                            sd[i] += contrib;
                        }
                    }
                }
            }
            Op::Unary(kind, a) => {
                if !wants(*a) {
                    return;
                }
                let x = val(*a);
                let y = &node.value;
                let slot = slot(grads, *a, x);
                let it = slot
                    .data_mut()
                    .iter_mut()
                    .zip(g.data())
                    .zip(x.data().iter().zip(y.data()));
                for ((s, gi), (xi, yi)) in it {
                    *s += gi * match kind {
                        Unary::Sigmoid => yi * (1.0 - yi),
                        Unary::Tanh => 1.0 - yi * yi,
                        Unary::Relu => {
                            if *xi > 0.0 {
                                1.0
                            } else {
                                0.0
                            }
                        }
                        Unary::LeakyRelu(sl) => {
                            if *xi > 0.0 {
                                1.0
                            } else {
                                *sl
                            }
                        }
                        Unary::Square => 2.0 * xi,
                        Unary::Affine { scale } => *scale,
                    };
                }
            }
            Op::Reduce(kind, a) => {
                if !wants(*a) {
                    return;
                }
                let x = val(*a);
                let cols = x.cols();
                let slot = slot(grads, *a, x);
                match kind {
                    Reduce::SumAll => {
                        let gi = g.item();
                        slot.data_mut().iter_mut().for_each(|s| *s += gi);
                    }
                    Reduce::SumRows => {
                        for (i, s) in slot.data_mut().iter_mut().enumerate() {
                            *s += g.data()[i / cols];
                        }
                    }
                    Reduce::SumCols => {
                        for (i, s) in slot.data_mut().iter_mut().enumerate() {
                            *s += g.data()[i % cols];
                        }
                    }
                    Reduce::L2Norm => {
                        let norm = node.value.item();
                        // zero is the minimum-norm subgradient at the origin
                        if norm > 0.0 {
                            let k = g.item() / norm;
                            for (s, xi) in slot.data_mut().iter_mut().zip(x.data()) {
                                *s += k * xi;
                            }
                        }
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let total = g.cols();
                let mut offset = 0;
                for p in parts {
                    let pc = val(*p).cols();
                    if wants(*p) {
                        let slot = slot(grads, *p, val(*p));
                        for r in 0..g.rows() {
                            let src = &g.data()[r * total + offset..r * total + offset + pc];
                            for (s, v) in slot.data_mut()[r * pc..(r + 1) * pc].iter_mut().zip(src)
                            {
                                *s += v;
                            }
                        }
                    }
                    offset += pc;
                }
            }
            Op::StackRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = val(*p).len();
                    if wants(*p) {
                        let slot = slot(grads, *p, val(*p));
                        for (s, v) in slot.data_mut().iter_mut().zip(&g.data()[offset..]) {
                            *s += v;
                        }
                    }
                    offset += len;
                }
            }
            Op::Row(a, r) => {
                if wants(*a) {
                    let x = val(*a);
                    let cols = x.cols();
                    let slot = slot(grads, *a, x);
                    for (s, v) in slot.data_mut()[r * cols..(r + 1) * cols]
                        .iter_mut()
                        .zip(g.data())
                    {
                        *s += v;
                    }
                }
            }
            Op::Transpose(a) => {
                if wants(*a) {
                    let gt = g.transpose();
                    slot(grads, *a, val(*a)).add_assign(&gt);
                }
            }
            Op::Reshape(a) => {
                if wants(*a) {
                    let slot = slot(grads, *a, val(*a));
                    for (s, v) in slot.data_mut().iter_mut().zip(g.data()) {
                        *s += v;
                    }
                }
            }
            Op::RepeatRows(a) => {
                if wants(*a) {
                    let cols = g.cols();
                    let slot = slot(grads, *a, val(*a));
                    for (i, v) in g.data().iter().enumerate() {
                        slot.data_mut()[i % cols] += v;
                    }
                }
            }
            Op::InstanceNorm {
                x,
                gain,
                bias,
                normed,
                inv_std,
            } => {
                let (rows, d) = normed.shape();
                if wants(*bias) {
                    let slot = slot(grads, *bias, val(*bias));
                    for (i, v) in g.data().iter().enumerate() {
                        slot.data_mut()[i % d] += v;
                    }
                }
                if wants(*gain) {
                    let slot = slot(grads, *gain, val(*gain));
                    for (i, (v, n)) in g.data().iter().zip(normed.data()).enumerate() {
                        slot.data_mut()[i % d] += v * n;
                    }
                }
                if wants(*x) {
                    let gv = val(*gain).data().to_vec();
                    let slot = slot(grads, *x, val(*x));
                    for (r, &inv) in inv_std.iter().enumerate().take(rows) {
                        let gr = g.row(r);
                        let nr = normed.row(r);
                        let dxhat: Vec<f64> = gr.iter().zip(&gv).map(|(a, b)| a * b).collect();
                        let mean_d = dxhat.iter().sum::<f64>() / d as f64;
                        let mean_dn =
                            dxhat.iter().zip(nr).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                        for c in 0..d {
                            slot.data_mut()[r * d + c] +=
                                inv * (dxhat[c] - mean_d - nr[c] * mean_dn);
                        }
                    }
                }
            }
            Op::SruScan { inputs, reversed, f, r, c } => {
                let (steps, h) = f.shape();
                let xv = val(inputs.x);
                let hv = val(inputs.highway);
                let (vf, vr) = (val(inputs.v_f).data(), val(inputs.v_r).data());
                let mut dx = Tensor::zeros(steps, h);
                let mut dfp = Tensor::zeros(steps, h);
                let mut drp = Tensor::zeros(steps, h);
                let mut dhw = Tensor::zeros(steps, h);
                let mut dvf = vec![0.0; h];
                let mut dvr = vec![0.0; h];
                let mut carry = vec![0.0; h];
                for k in (0..steps).rev() {
                    let t = if *reversed { steps - 1 - k } else { k };
                    let prev_t = (k > 0).then(|| if *reversed { t + 1 } else { t - 1 });
                    for j in 0..h {
                        let cp = prev_t.map_or(0.0, |p| c.get(p, j));
                        let (ft, rt, ct) = (f.get(t, j), r.get(t, j), c.get(t, j));
                        let (xt, hwt) = (xv.get(t, j), hv.get(t, j));
                        let dh = g.get(t, j);
                        let dr = dh * (ct - hwt);
                        dhw.set(t, j, dh * (1.0 - rt));
                        let dc = carry[j] + dh * rt;
                        let df = dc * (cp - xt);
                        dx.set(t, j, dc * (1.0 - ft));
                        let dfpre = df * ft * (1.0 - ft);
                        let drpre = dr * rt * (1.0 - rt);
                        dfp.set(t, j, dfpre);
                        drp.set(t, j, drpre);
                        dvf[j] += dfpre * cp;
                        dvr[j] += drpre * cp;
                        carry[j] = dc * ft + dfpre * vf[j] + drpre * vr[j];
                    }
                }
                let dvf = Tensor::row_vector(dvf);
                let dvr = Tensor::row_vector(dvr);
                for (v, d) in [
                    (inputs.x, &dx),
                    (inputs.f_pre, &dfp),
                    (inputs.r_pre, &drp),
                    (inputs.highway, &dhw),
                    (inputs.v_f, &dvf),
                    (inputs.v_r, &dvr),
                ] {
                    if wants(v) {
                        slot(grads, v, d).add_assign(d);
                    }
                }
            }
            Op::NormalizeAdjacency {
                a,
                threshold,
                inv_sqrt_deg,
            } => {
                if !wants(*a) {
                    return;
                }
                let av = val(*a);
                let n = av.rows();
                let s = inv_sqrt_deg;
                let kept = |x: f64| x.abs() >= *threshold;
                // dL/ds_i collects every output entry touching row or column i.
                let mut ds = vec![0.0; n];
                for i in 0..n {
                    for j in 0..n {
                        let x = av.get(i, j);
                        if kept(x) {
                            let gij = g.get(i, j);
                            ds[i] += gij * x * s[j];
                            ds[j] += gij * x * s[i];
                        }
                    }
                }
                // s = d^{-1/2} => ds/dd = -s^3 / 2; zero for isolated nodes.
                let dd: Vec<f64> = (0..n)
                    .map(|i| -0.5 * s[i] * s[i] * s[i] * ds[i])
                    .collect();
                let slot = slot(grads, *a, av);
                for i in 0..n {
                    for j in 0..n {
                        let x = av.get(i, j);
                        if kept(x) {
                            let sign = if x > 0.0 { 1.0 } else { -1.0 };
                            slot.data_mut()[i * n + j] += g.get(i, j) * s[i] * s[j] + dd[i] * sign;
                        }
                    }
                }
            }
        }
    }
}

/// Degrees below this are treated as isolated nodes.
pub const DEGREE_FLOOR: f64 = 1e-8;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn slot<'a>(grads: &'a mut [Option<Tensor>], v: Var, like: &Tensor) -> &'a mut Tensor {
    grads[v.0].get_or_insert_with(|| Tensor::zeros(like.rows(), like.cols()))
}
