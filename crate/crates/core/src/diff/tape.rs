//! The recording tape and its primitives.

use super::tensor::{matmul, matmul_nt, matmul_tn, Tensor};
use super::DiffError;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// `b` is either the same shape as `a` or a single row broadcast down `a`.
    Add(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    ScalarMul(Var, f64),
    AddScalar(Var),
    Concat(Vec<Var>),
    Slice { input: Var, start: usize },
    SliceRows { input: Var, start: usize },
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Square(Var),
    Sum(Var),
    SumRows(Var),
    Mean(Var),
    Mse(Var, Var),
    Clamp { input: Var, lo: f64, hi: f64 },
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Records primitive applications in evaluation order.
///
/// Node ids increase monotonically and every op only references earlier nodes,
/// so the node vector is already a topological order.
#[derive(Default, Debug, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar root with respect to every node that needed one.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<[usize; 2]>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`, or zeros of the right shape when the root does not depend on it.
    pub fn wrt(&self, v: Var) -> Tensor {
        match self.get(v) {
            Some(g) => g.clone(),
            None => {
                let [r, c] = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }
}

fn broadcast_ok(a: [usize; 2], b: [usize; 2]) -> bool {
    a == b || (b[0] == 1 && b[1] == a[1])
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A differentiable input.
    pub fn var(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// An input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa[1] != sb[0] {
            return Err(DiffError::Shape {
                op: "matmul",
                left: sa,
                right: sb,
            });
        }
        let out = matmul(self.value(a), self.value(b));
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::MatMul(a, b), ng))
    }

    fn broadcast_binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, DiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if !broadcast_ok(sa, sb) {
            return Err(DiffError::Shape {
                op: name,
                left: sa,
                right: sb,
            });
        }
        let va = self.value(a);
        let vb = self.value(b);
        let out = if sa == sb {
            va.zip_map(vb, f)
        } else {
            let cols = sa[1];
            let bd = vb.data();
            let data = va
                .data()
                .iter()
                .enumerate()
                .map(|(i, &x)| f(x, bd[i % cols]))
                .collect();
            Tensor::new(sa[0], sa[1], data)?
        };
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, op, ng))
    }

    /// Elementwise sum; `b` may be a single row broadcast over the rows of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.broadcast_binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.broadcast_binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product; `b` may be a broadcast row.
    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.broadcast_binary("hadamard", a, b, |x, y| x * y, Op::Hadamard(a, b))
    }

    pub fn scalar_mul(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x * s);
        let ng = self.ng(a);
        self.push(out, Op::ScalarMul(a, s), ng)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x + s);
        let ng = self.ng(a);
        self.push(out, Op::AddScalar(a), ng)
    }

    /// Column-wise concatenation; all parts must have the same row count.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, DiffError> {
        let Some(&first) = parts.first() else {
            return Err(DiffError::Empty("concat"));
        };
        let rows = self.shape(first)[0];
        for &p in parts {
            let s = self.shape(p);
            if s[0] != rows {
                return Err(DiffError::Shape {
                    op: "concat",
                    left: self.shape(first),
                    right: s,
                });
            }
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p)[1]).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        let out = Tensor::new(rows, cols, data)?;
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(out, Op::Concat(parts.to_vec()), ng))
    }

    /// Columns `start..end` of `a`.
    pub fn slice(&mut self, a: Var, start: usize, end: usize) -> Result<Var, DiffError> {
        let s = self.shape(a);
        if start > end || end > s[1] {
            return Err(DiffError::Slice {
                shape: s,
                start,
                end,
            });
        }
        let v = self.value(a);
        let mut data = Vec::with_capacity(s[0] * (end - start));
        for r in 0..s[0] {
            data.extend_from_slice(&v.row_slice(r)[start..end]);
        }
        let out = Tensor::new(s[0], end - start, data)?;
        let ng = self.ng(a);
        Ok(self.push(out, Op::Slice { input: a, start }, ng))
    }

    /// Rows `start..end` of `a`.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var, DiffError> {
        let s = self.shape(a);
        if start > end || end > s[0] {
            return Err(DiffError::Slice {
                shape: s,
                start,
                end,
            });
        }
        let v = self.value(a);
        let data = v.data()[start * s[1]..end * s[1]].to_vec();
        let out = Tensor::new(end - start, s[1], data)?;
        let ng = self.ng(a);
        Ok(self.push(out, Op::SliceRows { input: a, start }, ng))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        let ng = self.ng(a);
        self.push(out, Op::Tanh(a), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        let ng = self.ng(a);
        self.push(out, Op::Sigmoid(a), ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        let ng = self.ng(a);
        self.push(out, Op::Relu(a), ng)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x * x);
        let ng = self.ng(a);
        self.push(out, Op::Square(a), ng)
    }

    /// Sum of all entries, as a `1x1`.
    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        let ng = self.ng(a);
        self.push(out, Op::Sum(a), ng)
    }

    /// Per-row sums, `m x n -> m x 1`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let data = (0..v.rows()).map(|r| v.row_slice(r).iter().sum()).collect();
        let out = Tensor::new(v.rows(), 1, data).expect("row count matches");
        let ng = self.ng(a);
        self.push(out, Op::SumRows(a), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let out = Tensor::scalar(v.sum() / v.len() as f64);
        let ng = self.ng(a);
        self.push(out, Op::Mean(a), ng)
    }

    /// Mean squared error over every entry.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var, DiffError> {
        let (sp, st) = (self.shape(pred), self.shape(target));
        if sp != st {
            return Err(DiffError::Shape {
                op: "mse",
                left: sp,
                right: st,
            });
        }
        let p = self.value(pred);
        let t = self.value(target);
        let n = p.len() as f64;
        let s: f64 = p
            .data()
            .iter()
            .zip(t.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let ng = self.ng(pred) || self.ng(target);
        Ok(self.push(Tensor::scalar(s / n), Op::Mse(pred, target), ng))
    }

    /// Clamp to `[lo, hi]`; the gradient passes through inside the box
    /// and is zero outside it.
    pub fn clamp_stopgrad(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let out = self.value(a).map(|x| x.clamp(lo, hi));
        let ng = self.ng(a);
        self.push(out, Op::Clamp { input: a, lo, hi }, ng)
    }

    /// Reverse accumulation from a scalar `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients, DiffError> {
        let shape = self.shape(root);
        if shape != [1, 1] {
            return Err(DiffError::NonScalarRoot(shape));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Tensor::scalar(1.0));

        for id in (0..=root.0).rev() {
            let Some(g) = grads[id].take() else {
                continue;
            };
            let node = &self.nodes[id];
            if node.needs_grad {
                self.pullback(node, &g, &mut grads);
            }
            grads[id] = Some(g);
        }

        if !self.ng(root) {
            grads[root.0] = None;
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.ng(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    /// Reduce a gradient of `a`'s shape down to `b`'s (possibly broadcast) shape.
    fn unbroadcast(g: &Tensor, target: [usize; 2]) -> Tensor {
        if g.shape() == target {
            return g.clone();
        }
        let cols = target[1];
        let mut out = vec![0.0; cols];
        for r in 0..g.rows() {
            for (o, v) in out.iter_mut().zip(g.row_slice(r)) {
                *o += v;
            }
        }
        Tensor::new(1, cols, out).expect("broadcast row")
    }

    fn pullback(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.ng(*a) {
                    self.accumulate(grads, *a, matmul_nt(g, self.value(*b)));
                }
                if self.ng(*b) {
                    self.accumulate(grads, *b, matmul_tn(self.value(*a), g));
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                if self.ng(*b) {
                    self.accumulate(grads, *b, Self::unbroadcast(g, self.shape(*b)));
                }
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                if self.ng(*b) {
                    let neg = g.map(|x| -x);
                    self.accumulate(grads, *b, Self::unbroadcast(&neg, self.shape(*b)));
                }
            }
            Op::Hadamard(a, b) => {
                let va = self.value(*a);
                let vb = self.value(*b);
                let cols = va.cols();
                if self.ng(*a) {
                    let ga = if va.shape() == vb.shape() {
                        g.zip_map(vb, |x, y| x * y)
                    } else {
                        let bd = vb.data();
                        let data = g
                            .data()
                            .iter()
                            .enumerate()
                            .map(|(i, &x)| x * bd[i % cols])
                            .collect();
                        Tensor::new(g.rows(), cols, data).expect("shape")
                    };
                    self.accumulate(grads, *a, ga);
                }
                if self.ng(*b) {
                    let gb = g.zip_map(va, |x, y| x * y);
                    self.accumulate(grads, *b, Self::unbroadcast(&gb, vb.shape()));
                }
            }
            Op::ScalarMul(a, s) => {
                let s = *s;
                self.accumulate(grads, *a, g.map(|x| x * s));
            }
            Op::AddScalar(a) => self.accumulate(grads, *a, g.clone()),
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let w = self.shape(p)[1];
                    if self.ng(p) {
                        let mut data = Vec::with_capacity(g.rows() * w);
                        for r in 0..g.rows() {
                            data.extend_from_slice(&g.row_slice(r)[offset..offset + w]);
                        }
                        self.accumulate(grads, p, Tensor::new(g.rows(), w, data).expect("shape"));
                    }
                    offset += w;
                }
            }
            Op::Slice { input, start } => {
                let s = self.shape(*input);
                let mut full = Tensor::zeros(s[0], s[1]);
                let w = g.cols();
                for r in 0..s[0] {
                    for c in 0..w {
                        full.set(r, start + c, g.get(r, c));
                    }
                }
                self.accumulate(grads, *input, full);
            }
            Op::SliceRows { input, start } => {
                let s = self.shape(*input);
                let mut full = Tensor::zeros(s[0], s[1]);
                let off = start * s[1];
                full.data_mut()[off..off + g.len()].copy_from_slice(g.data());
                self.accumulate(grads, *input, full);
            }
            Op::Tanh(a) => {
                let d = g.zip_map(&node.value, |x, y| x * (1.0 - y * y));
                self.accumulate(grads, *a, d);
            }
            Op::Sigmoid(a) => {
                let d = g.zip_map(&node.value, |x, y| x * y * (1.0 - y));
                self.accumulate(grads, *a, d);
            }
            Op::Relu(a) => {
                let d = g.zip_map(self.value(*a), |x, v| if v > 0.0 { x } else { 0.0 });
                self.accumulate(grads, *a, d);
            }
            Op::Square(a) => {
                let d = g.zip_map(self.value(*a), |x, v| 2.0 * v * x);
                self.accumulate(grads, *a, d);
            }
            Op::Sum(a) => {
                let s = self.shape(*a);
                self.accumulate(grads, *a, Tensor::full(s[0], s[1], g.item()));
            }
            Op::SumRows(a) => {
                let s = self.shape(*a);
                let mut d = Tensor::zeros(s[0], s[1]);
                for r in 0..s[0] {
                    let gr = g.get(r, 0);
                    for c in 0..s[1] {
                        d.set(r, c, gr);
                    }
                }
                self.accumulate(grads, *a, d);
            }
            Op::Mean(a) => {
                let s = self.shape(*a);
                let n = (s[0] * s[1]) as f64;
                self.accumulate(grads, *a, Tensor::full(s[0], s[1], g.item() / n));
            }
            Op::Mse(p, t) => {
                let vp = self.value(*p);
                let vt = self.value(*t);
                let k = 2.0 * g.item() / vp.len() as f64;
                if self.ng(*p) {
                    self.accumulate(grads, *p, vp.zip_map(vt, |a, b| k * (a - b)));
                }
                if self.ng(*t) {
                    self.accumulate(grads, *t, vp.zip_map(vt, |a, b| k * (b - a)));
                }
            }
            Op::Clamp { input, lo, hi } => {
                let (lo, hi) = (*lo, *hi);
                let d = g.zip_map(self.value(*input), |x, v| {
                    if v >= lo && v <= hi {
                        x
                    } else {
                        0.0
                    }
                });
                self.accumulate(grads, *input, d);
            }
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> Tensor {
        Tensor::scalar(v)
    }

    #[test]
    fn function_values() {
        let mut t = Tape::new();
        let z = t.var(s(0.0));
        let sg = t.sigmoid(z);
        let th = t.tanh(z);
        assert_eq!(t.value(sg).item(), 0.5);
        assert_eq!(t.value(th).item(), 0.0);

        let v = t.var(Tensor::row(&[-2.5, 1.5]));
        let r = t.relu(v);
        assert_eq!(t.value(r).data(), &[0.0, 1.5]);

        let p = t.constant(Tensor::row(&[1.0, 2.0]));
        let q = t.constant(Tensor::row(&[1.0, 4.0]));
        let m = t.mse(p, q).unwrap();
        assert_eq!(t.value(m).item(), 2.0);
    }

    #[test]
    fn tanh_derivative_at_zero() {
        let mut t = Tape::new();
        let x = t.var(s(0.0));
        let y = t.tanh(x);
        let g = t.backward(y).unwrap();
        assert_eq!(g.wrt(x).item(), 1.0);
    }

    #[test]
    fn chain_rule_by_hand() {
        // L = (W x - y)^2 with W = 2, x = 3, y = 5 gives dL/dW = 2 (6 - 5) 3 = 6.
        let mut t = Tape::new();
        let w = t.var(s(2.0));
        let x = t.constant(s(3.0));
        let y = t.constant(s(5.0));
        let wx = t.matmul(w, x).unwrap();
        let e = t.sub(wx, y).unwrap();
        let l = t.square(e);
        let g = t.backward(l).unwrap();
        assert_eq!(g.wrt(w).item(), 6.0);
        assert!(g.get(x).is_none());
    }

    #[test]
    fn relu_subgradient_is_zero_at_kink_side() {
        let mut t = Tape::new();
        let v = t.var(Tensor::row(&[-1.0, 2.0]));
        let r = t.relu(v);
        let sm = t.sum(r);
        let g = t.backward(sm).unwrap();
        assert_eq!(g.wrt(v).data(), &[0.0, 1.0]);

        let mut t = Tape::new();
        let v = t.var(Tensor::row(&[0.0]));
        let r = t.relu(v);
        let sm = t.sum(r);
        assert_eq!(t.backward(sm).unwrap().wrt(v).data(), &[0.0]);
    }

    #[test]
    fn shape_errors_name_both_shapes() {
        let mut t = Tape::new();
        let a = t.var(Tensor::zeros(2, 3));
        let b = t.var(Tensor::zeros(2, 3));
        let err = t.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
        assert!(matches!(err, DiffError::Shape { left: [2, 3], right: [2, 3], .. }));
        let c = t.var(Tensor::zeros(3, 3));
        assert!(t.add(a, c).is_err());
    }

    #[test]
    fn non_scalar_root_is_rejected() {
        let mut t = Tape::new();
        let a = t.var(Tensor::zeros(2, 2));
        assert!(matches!(t.backward(a), Err(DiffError::NonScalarRoot([2, 2]))));
    }

    #[test]
    fn broadcast_row_gradients_sum_over_rows() {
        let mut t = Tape::new();
        let a = t.var(Tensor::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let b = t.var(Tensor::row(&[10.0, 20.0]));
        let c = t.add(a, b).unwrap();
        let h = t.hadamard(c, b).unwrap();
        let sm = t.sum(h);
        let g = t.backward(sm).unwrap();
        // d/db sum((a+b)*b) = sum_rows(a + 2b)
        assert_eq!(g.wrt(b).data(), &[1.0 + 3.0 + 40.0, 2.0 + 4.0 + 80.0]);
        assert_eq!(g.wrt(a).data(), &[10.0, 20.0, 10.0, 20.0]);
    }

    #[test]
    fn clamp_passes_gradient_only_inside() {
        let mut t = Tape::new();
        let v = t.var(Tensor::row(&[-0.5, 0.5, 1.5]));
        let c = t.clamp_stopgrad(v, 0.0, 1.0);
        assert_eq!(t.value(c).data(), &[0.0, 0.5, 1.0]);
        let sm = t.sum(c);
        assert_eq!(t.backward(sm).unwrap().wrt(v).data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn backward_is_repeatable() {
        let mut t = Tape::new();
        let x = t.var(Tensor::row(&[0.3, -0.7, 1.1]));
        let y = t.tanh(x);
        let z = t.hadamard(y, x).unwrap();
        let l = t.sum(z);
        let g1 = t.backward(l).unwrap().wrt(x);
        let g2 = t.backward(l).unwrap().wrt(x);
        assert_eq!(g1, g2);
    }
}
