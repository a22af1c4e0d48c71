//! Minimal dense-tensor reverse-mode differentiation engine.
//!
//! An eager tape: every operation computes its value immediately and records
//! the primitive plus input node ids. `backward` replays the tape in reverse,
//! accumulating vector-Jacobian products. Tensors are 2-D `f64` arrays;
//! vectors are column matrices.

use std::sync::Arc;

use ndarray::{Array2, Axis};

pub type Tensor = Array2<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub usize);

#[derive(Clone)]
enum Op {
    /// Leaf: an input or trainable parameter; no inputs.
    Leaf,
    Matmul(NodeId, NodeId),
    Add(NodeId, NodeId),
    /// Broadcast a column vector across every column of the left input.
    AddBias(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Hadamard(NodeId, NodeId),
    /// Stack vertically: rows of `a` then rows of `b`.
    ConcatRows(NodeId, NodeId),
    SliceRows(NodeId, usize, usize),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Abs(NodeId),
    /// Elementwise sign with sign(0) = +1; zero gradient.
    Sign,
    Recip(NodeId),
    ScalarMul(NodeId, f64),
    /// Elementwise product with a broadcast (1,1) node.
    MulScalarNode(NodeId, NodeId),
    ReduceMean(NodeId),
    /// Unbiased variance over all elements.
    ReduceVar(NodeId),
    ClampMin(NodeId, f64),
    Transpose(NodeId),
    /// Column-wise soft syndrome: per check row i, min |x_j| over the support
    /// times the product of signs. Subgradient flows to the argmin entry.
    SoftSyndrome(NodeId, Arc<Vec<Vec<usize>>>),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Reverse-mode tape. One tape per forward pass; not reused.
pub struct Tape {
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

#[inline]
fn sign_pos(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id.0].value.len(), 1);
        self.nodes[id.0].value[[0, 0]]
    }

    /// Register a leaf (input or trainable parameter).
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    /// Alias of `leaf` for values no gradient will be read from.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::Matmul(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> NodeId {
        let b = self.value(bias);
        debug_assert_eq!(b.ncols(), 1);
        debug_assert_eq!(b.nrows(), self.value(a).nrows());
        let col = b.column(0).to_owned();
        let mut v = self.value(a).clone();
        for mut c in v.columns_mut() {
            c += &col;
        }
        self.push(v, Op::AddBias(a, bias))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b))
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Hadamard(a, b))
    }

    pub fn concat_rows(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (self.value(a), self.value(b));
        debug_assert_eq!(ta.ncols(), tb.ncols());
        let mut v = Tensor::zeros((ta.nrows() + tb.nrows(), ta.ncols()));
        v.slice_mut(ndarray::s![..ta.nrows(), ..]).assign(ta);
        v.slice_mut(ndarray::s![ta.nrows().., ..]).assign(tb);
        self.push(v, Op::ConcatRows(a, b))
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let v = self
            .value(a)
            .slice(ndarray::s![start..start + len, ..])
            .to_owned();
        self.push(v, Op::SliceRows(a, start, len))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(|x| 1.0 / (1.0 + (-x).exp()));
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(f64::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(f64::ln);
        self.push(v, Op::Log(a))
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(f64::abs);
        self.push(v, Op::Abs(a))
    }

    pub fn sign(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(sign_pos);
        self.push(v, Op::Sign)
    }

    pub fn recip(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(f64::recip);
        self.push(v, Op::Recip(a))
    }

    pub fn scalar_mul(&mut self, a: NodeId, k: f64) -> NodeId {
        let v = self.value(a).mapv(|x| k * x);
        self.push(v, Op::ScalarMul(a, k))
    }

    pub fn mul_scalar_node(&mut self, a: NodeId, s: NodeId) -> NodeId {
        let sv = self.scalar(s);
        let v = self.value(a).mapv(|x| sv * x);
        self.push(v, Op::MulScalarNode(a, s))
    }

    pub fn reduce_mean(&mut self, a: NodeId) -> NodeId {
        let t = self.value(a);
        let v = Tensor::from_elem((1, 1), t.sum() / t.len() as f64);
        self.push(v, Op::ReduceMean(a))
    }

    pub fn reduce_var(&mut self, a: NodeId) -> NodeId {
        let t = self.value(a);
        let n = t.len() as f64;
        debug_assert!(n > 1.0);
        let mean = t.sum() / n;
        let var = t.mapv(|x| (x - mean) * (x - mean)).sum() / (n - 1.0);
        let v = Tensor::from_elem((1, 1), var);
        self.push(v, Op::ReduceVar(a))
    }

    pub fn clamp_min(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).mapv(|x| x.max(c));
        self.push(v, Op::ClampMin(a, c))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).t().to_owned();
        self.push(v, Op::Transpose(a))
    }

    pub fn soft_syndrome(&mut self, a: NodeId, supports: Arc<Vec<Vec<usize>>>) -> NodeId {
        let x = self.value(a);
        let cols = x.ncols();
        let mut v = Tensor::zeros((supports.len(), cols));
        for (i, support) in supports.iter().enumerate() {
            debug_assert!(!support.is_empty());
            for b in 0..cols {
                let mut min_abs = f64::INFINITY;
                let mut prod = 1.0f64;
                for &j in support {
                    let xj = x[[j, b]];
                    min_abs = min_abs.min(xj.abs());
                    prod *= sign_pos(xj);
                }
                v[[i, b]] = min_abs * prod;
            }
        }
        self.push(v, Op::SoftSyndrome(a, supports))
    }

    // composite helpers

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.scalar_mul(a, -1.0)
    }

    pub fn ones_like(&mut self, a: NodeId) -> NodeId {
        let shape = self.value(a).raw_dim();
        self.constant(Tensor::ones(shape))
    }

    /// Gradients of a scalar node with respect to every tape node.
    pub fn backward(&self, loss: NodeId) -> Gradients {
        assert_eq!(self.value(loss).len(), 1, "backward seed must be scalar");
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::ones((1, 1)));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.accumulate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn accumulate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let add_to =
            |grads: &mut [Option<Tensor>], id: NodeId, contrib: Tensor| match &mut grads[id.0] {
                Some(acc) => *acc += &contrib,
                slot @ None => *slot = Some(contrib),
            };
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let ga = g.dot(&self.value(*b).t());
                let gb = self.value(*a).t().dot(g);
                add_to(grads, *a, ga);
                add_to(grads, *b, gb);
            }
            Op::Add(a, b) => {
                add_to(grads, *a, g.clone());
                add_to(grads, *b, g.clone());
            }
            Op::AddBias(a, bias) => {
                add_to(grads, *a, g.clone());
                let gb = g.sum_axis(Axis(1)).insert_axis(Axis(1));
                add_to(grads, *bias, gb);
            }
            Op::Sub(a, b) => {
                add_to(grads, *a, g.clone());
                add_to(grads, *b, g.mapv(|x| -x));
            }
            Op::Hadamard(a, b) => {
                add_to(grads, *a, g * self.value(*b));
                add_to(grads, *b, g * self.value(*a));
            }
            Op::ConcatRows(a, b) => {
                let ra = self.value(*a).nrows();
                add_to(grads, *a, g.slice(ndarray::s![..ra, ..]).to_owned());
                add_to(grads, *b, g.slice(ndarray::s![ra.., ..]).to_owned());
            }
            Op::SliceRows(a, start, len) => {
                let mut ga = Tensor::zeros(self.value(*a).raw_dim());
                ga.slice_mut(ndarray::s![*start..*start + *len, ..])
                    .assign(g);
                add_to(grads, *a, ga);
            }
            Op::Sigmoid(a) => {
                let y = &self.nodes[idx].value;
                add_to(grads, *a, g * &y.mapv(|s| s * (1.0 - s)));
            }
            Op::Tanh(a) => {
                let y = &self.nodes[idx].value;
                add_to(grads, *a, g * &y.mapv(|t| 1.0 - t * t));
            }
            Op::Exp(a) => {
                add_to(grads, *a, g * &self.nodes[idx].value);
            }
            Op::Log(a) => {
                add_to(grads, *a, g / self.value(*a));
            }
            Op::Abs(a) => {
                // sign subgradient with sign(0) = 0
                let s = self.value(*a).mapv(|x| {
                    if x > 0.0 {
                        1.0
                    } else if x < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                });
                add_to(grads, *a, g * &s);
            }
            Op::Sign => {}
            Op::Recip(a) => {
                let x = self.value(*a);
                add_to(grads, *a, g * &x.mapv(|v| -1.0 / (v * v)));
            }
            Op::ScalarMul(a, k) => {
                add_to(grads, *a, g.mapv(|x| k * x));
            }
            Op::MulScalarNode(a, s) => {
                let sv = self.scalar(*s);
                add_to(grads, *a, g.mapv(|x| sv * x));
                let gs = (g * self.value(*a)).sum();
                add_to(grads, *s, Tensor::from_elem((1, 1), gs));
            }
            Op::ReduceMean(a) => {
                let n = self.value(*a).len() as f64;
                let gv = g[[0, 0]] / n;
                add_to(grads, *a, Tensor::from_elem(self.value(*a).raw_dim(), gv));
            }
            Op::ReduceVar(a) => {
                let x = self.value(*a);
                let n = x.len() as f64;
                let mean = x.sum() / n;
                let scale = 2.0 * g[[0, 0]] / (n - 1.0);
                add_to(grads, *a, x.mapv(|v| scale * (v - mean)));
            }
            Op::ClampMin(a, c) => {
                let mask = self.value(*a).mapv(|x| if x > *c { 1.0 } else { 0.0 });
                add_to(grads, *a, g * &mask);
            }
            Op::Transpose(a) => {
                add_to(grads, *a, g.t().to_owned());
            }
            Op::SoftSyndrome(a, supports) => {
                let x = self.value(*a);
                let mut ga = Tensor::zeros(x.raw_dim());
                for (i, support) in supports.iter().enumerate() {
                    for b in 0..x.ncols() {
                        let mut min_abs = f64::INFINITY;
                        let mut argmin = support[0];
                        let mut prod = 1.0f64;
                        for &j in support {
                            let xj = x[[j, b]];
                            if xj.abs() < min_abs {
                                min_abs = xj.abs();
                                argmin = j;
                            }
                            prod *= sign_pos(xj);
                        }
                        // out = prod * |x_argmin| -> d/dx_argmin = prod * sign
                        ga[[argmin, b]] += g[[i, b]] * prod * sign_pos(x[[argmin, b]]);
                    }
                }
                add_to(grads, *a, ga);
            }
        }
    }
}

/// Per-node gradients produced by `Tape::backward`.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }

    /// Gradient for a leaf, zeros when the loss does not depend on it.
    pub fn of(&self, id: NodeId, shape: (usize, usize)) -> Tensor {
        self.grads[id.0]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(shape))
    }
}

/// Max relative error between analytic gradients and central finite
/// differences for a scalar-valued function of one parameter tensor.
pub fn grad_check<F>(f: F, theta: &Tensor, eps: f64) -> f64
where
    F: Fn(&mut Tape, NodeId) -> NodeId,
{
    let mut tape = Tape::new();
    let p = tape.leaf(theta.clone());
    let loss = f(&mut tape, p);
    let analytic = tape.backward(loss).of(p, theta.dim());

    let mut max_rel = 0.0f64;
    for idx in 0..theta.len() {
        let (r, c) = (idx / theta.ncols(), idx % theta.ncols());
        let eval = |v: f64| -> f64 {
            let mut t = theta.clone();
            t[[r, c]] = v;
            let mut tape = Tape::new();
            let p = tape.leaf(t);
            let loss = f(&mut tape, p);
            tape.scalar(loss)
        };
        let x = theta[[r, c]];
        let numeric = (eval(x + eps) - eval(x - eps)) / (2.0 * eps);
        let a = analytic[[r, c]];
        let rel = (a - numeric).abs() / a.abs().max(1.0);
        max_rel = max_rel.max(rel);
    }
    max_rel
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn primitive_values() {
        let mut t = Tape::new();
        let z = t.constant(array![[0.0]]);
        let s = t.sigmoid(z);
        assert_eq!(t.scalar(s), 0.5);
        let th = t.tanh(z);
        assert_eq!(t.scalar(th), 0.0);
        let i = t.constant(Tensor::eye(3));
        let x = t.constant(array![[1.0], [2.0], [3.0]]);
        let ix = t.matmul(i, x);
        assert_eq!(t.value(ix), &array![[1.0], [2.0], [3.0]]);
    }

    #[test]
    fn sigmoid_grad_at_zero() {
        let mut t = Tape::new();
        let w = t.leaf(array![[0.0]]);
        let loss = t.sigmoid(w);
        let g = t.backward(loss).of(w, (1, 1));
        assert!((g[[0, 0]] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn mean_of_square_grad() {
        let mut t = Tape::new();
        let a = t.leaf(array![[1.0], [2.0]]);
        let sq = t.hadamard(a, a);
        let loss = t.reduce_mean(sq);
        let g = t.backward(loss).of(a, (2, 1));
        assert_eq!(g, array![[1.0], [2.0]]);
    }

    #[test]
    fn quadratic_grad_check_exact() {
        let theta = array![[0.3, -1.2], [2.0, 0.7]];
        let err = grad_check(
            |t, p| {
                let sq = t.hadamard(p, p);
                t.reduce_mean(sq)
            },
            &theta,
            1e-5,
        );
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn composite_grad_check() {
        let theta = array![[0.4, -0.9, 1.3], [0.2, 0.8, -0.5]];
        let err = grad_check(
            |t, p| {
                let s = t.sigmoid(p);
                let l = t.log(s);
                let e = t.exp(p);
                let prod = t.hadamard(l, e);
                let m = t.reduce_mean(prod);
                let v = t.reduce_var(p);
                t.add(m, v)
            },
            &theta,
            1e-6,
        );
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn matmul_concat_slice_grad_check() {
        let theta = array![[0.5, -0.3], [0.1, 0.9]];
        let err = grad_check(
            |t, p| {
                let c = t.constant(array![[1.0, 2.0], [-1.0, 0.5]]);
                let m = t.matmul(p, c);
                let cat = t.concat_rows(m, p);
                let top = t.slice_rows(cat, 1, 2);
                let tr = t.transpose(top);
                let h = t.hadamard(tr, tr);
                t.reduce_mean(h)
            },
            &theta,
            1e-6,
        );
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn soft_syndrome_forward_and_grad() {
        use std::sync::Arc;
        // H = [[1,1,0],[0,1,1]], gamma = (2,-1,3) -> s = (-1,-1)
        let supports = Arc::new(vec![vec![0, 1], vec![1, 2]]);
        let mut t = Tape::new();
        let x = t.leaf(array![[2.0], [-1.0], [3.0]]);
        let s = t.soft_syndrome(x, supports.clone());
        assert_eq!(t.value(s), &array![[-1.0], [-1.0]]);

        let theta = array![[2.0], [-1.0], [3.0]];
        let err = grad_check(
            |t, p| {
                let s = t.soft_syndrome(p, supports.clone());
                let sq = t.hadamard(s, s);
                t.reduce_mean(sq)
            },
            &theta,
            1e-6,
        );
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn backward_deterministic() {
        let theta = Tensor::from_shape_fn((3, 3), |(i, j)| (i as f64 - j as f64) * 0.37);
        let run = || {
            let mut t = Tape::new();
            let p = t.leaf(theta.clone());
            let s = t.tanh(p);
            let m = t.reduce_mean(s);
            t.backward(m).of(p, (3, 3))
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
    }
}
