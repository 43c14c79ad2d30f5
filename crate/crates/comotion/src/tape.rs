//! Minimal reverse-mode autodiff over dense `f64` matrices.
//!
//! A [`Tape`] records one forward pass as a flat list of nodes; parents
//! always precede children, so [`Tape::backward`] is a single reverse sweep.
//! Vectors are 1×D matrices and scalars are 1×1. The op set is exactly what
//! the forecasting network needs; each op asserts its shape contract and
//! panics on violation.
//!
//! Gradients are exact. Every op's vector-Jacobian product is verified
//! against central finite differences in this module's tests.

use ndarray::{concatenate, s, Array2, Axis};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    /// Row-broadcast add: (N×D) + (1×D).
    AddRow(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    /// Add a scalar constant to every entry.
    Offset(usize),
    Relu(usize),
    Tanh(usize),
    Sigmoid(usize),
    Exp(usize),
    ConcatCols(usize, usize),
    SliceCols(usize, usize, usize),
    Row(usize, usize),
    /// Tile a 1×D row N times.
    RepeatRows(usize),
    /// Column-wise max over rows; saved argmax (lowest row wins ties).
    MaxRows(usize, Vec<usize>),
    SumAll(usize),
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

/// One recorded forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    /// Scalar value of a 1×1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        let a = self.value(v);
        assert_eq!(a.dim(), (1, 1), "scalar() on a non-1x1 node");
        a[(0, 0)]
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    // ── graph construction ──────────────────────────────────────────────

    /// Insert an input or parameter node.
    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(
            va.ncols(),
            vb.nrows(),
            "matmul shape mismatch: {:?} x {:?}",
            va.dim(),
            vb.dim()
        );
        let value = va.dot(vb);
        self.push(value, Op::MatMul(a.0, b.0))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "add shape mismatch");
        let value = self.value(a) + self.value(b);
        self.push(value, Op::Add(a.0, b.0))
    }

    /// `a + b` where `b` is a single row broadcast over all rows of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(vb.nrows(), 1, "add_row: rhs must be 1xD");
        assert_eq!(va.ncols(), vb.ncols(), "add_row shape mismatch");
        let value = va + vb;
        self.push(value, Op::AddRow(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "sub shape mismatch");
        let value = self.value(a) - self.value(b);
        self.push(value, Op::Sub(a.0, b.0))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "mul shape mismatch");
        let value = self.value(a) * self.value(b);
        self.push(value, Op::Mul(a.0, b.0))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a) * k;
        self.push(value, Op::Scale(a.0, k))
    }

    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a) + c;
        self.push(value, Op::Offset(a.0))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| x.max(0.0));
        self.push(value, Op::Relu(a.0))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::tanh);
        self.push(value, Op::Tanh(a.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| {
            // Split on sign for numerical stability.
            if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            }
        });
        self.push(value, Op::Sigmoid(a.0))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::exp);
        self.push(value, Op::Exp(a.0))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.nrows(), vb.nrows(), "concat_cols row mismatch");
        let value = concatenate![Axis(1), va.view(), vb.view()];
        self.push(value, Op::ConcatCols(a.0, b.0))
    }

    pub fn slice_cols(&mut self, a: Var, from: usize, to: usize) -> Var {
        let va = self.value(a);
        assert!(from < to && to <= va.ncols(), "slice_cols out of range");
        let value = va.slice(s![.., from..to]).to_owned();
        self.push(value, Op::SliceCols(a.0, from, to))
    }

    /// Extract row `i` as a 1×D node.
    pub fn row(&mut self, a: Var, i: usize) -> Var {
        let va = self.value(a);
        assert!(i < va.nrows(), "row index out of range");
        let value = va.slice(s![i..i + 1, ..]).to_owned();
        self.push(value, Op::Row(a.0, i))
    }

    /// Tile a 1×D row into an N×D matrix.
    pub fn repeat_rows(&mut self, a: Var, n: usize) -> Var {
        let va = self.value(a);
        assert_eq!(va.nrows(), 1, "repeat_rows: input must be 1xD");
        assert!(n >= 1);
        let mut value = Array2::zeros((n, va.ncols()));
        for mut r in value.rows_mut() {
            r.assign(&va.row(0));
        }
        self.push(value, Op::RepeatRows(a.0))
    }

    /// Column-wise maximum over rows, producing a 1×D node.
    pub fn max_rows(&mut self, a: Var) -> Var {
        let va = self.value(a);
        assert!(va.nrows() >= 1, "max_rows on empty matrix");
        let d = va.ncols();
        let mut value = Array2::zeros((1, d));
        let mut arg = vec![0usize; d];
        for j in 0..d {
            let mut best = va[(0, j)];
            for i in 1..va.nrows() {
                if va[(i, j)] > best {
                    best = va[(i, j)];
                    arg[j] = i;
                }
            }
            value[(0, j)] = best;
        }
        self.push(value, Op::MaxRows(a.0, arg))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let value = Array2::from_elem((1, 1), self.value(a).sum());
        self.push(value, Op::SumAll(a.0))
    }

    // ── backward sweep ──────────────────────────────────────────────────

    /// Reverse-mode gradients of the 1×1 node `root` with respect to every
    /// node on the tape. Nodes the root does not depend on get a `None` slot.
    pub fn backward(&self, root: Var) -> Gradients {
        assert_eq!(
            self.value(root).dim(),
            (1, 1),
            "backward root must be a 1x1 scalar node"
        );
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Array2::ones((1, 1)));

        for id in (0..=root.0).rev() {
            let g = match &grads[id] {
                Some(g) => g.clone(),
                None => continue,
            };
            match &self.nodes[id].op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.nodes[*b].value.t());
                    let gb = self.nodes[*a].value.t().dot(&g);
                    acc(&mut grads[*a], ga);
                    acc(&mut grads[*b], gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads[*a], g.clone());
                    acc(&mut grads[*b], g.clone());
                }
                Op::AddRow(a, b) => {
                    acc(&mut grads[*b], g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut grads[*a], g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads[*a], g.clone());
                    acc(&mut grads[*b], -&g);
                }
                Op::Mul(a, b) => {
                    let ga = &g * &self.nodes[*b].value;
                    let gb = &g * &self.nodes[*a].value;
                    acc(&mut grads[*a], ga);
                    acc(&mut grads[*b], gb);
                }
                Op::Scale(a, k) => acc(&mut grads[*a], &g * *k),
                Op::Offset(a) => acc(&mut grads[*a], g),
                Op::Relu(a) => {
                    let mask = self.nodes[*a].value.mapv(|x| if x > 0.0 { 1.0 } else { 0.0 });
                    acc(&mut grads[*a], &g * &mask);
                }
                Op::Tanh(a) => {
                    let y = &self.nodes[id].value;
                    acc(&mut grads[*a], &g * &(1.0 - y * y));
                }
                Op::Sigmoid(a) => {
                    let y = &self.nodes[id].value;
                    acc(&mut grads[*a], &g * &(y * &(1.0 - y)));
                }
                Op::Exp(a) => {
                    let y = &self.nodes[id].value;
                    acc(&mut grads[*a], &g * y);
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.nodes[*a].value.ncols();
                    acc(&mut grads[*a], g.slice(s![.., ..ca]).to_owned());
                    acc(&mut grads[*b], g.slice(s![.., ca..]).to_owned());
                }
                Op::SliceCols(a, from, to) => {
                    let mut ga = Array2::zeros(self.nodes[*a].value.dim());
                    ga.slice_mut(s![.., *from..*to]).assign(&g);
                    acc(&mut grads[*a], ga);
                }
                Op::Row(a, i) => {
                    let mut ga = Array2::zeros(self.nodes[*a].value.dim());
                    ga.slice_mut(s![*i..*i + 1, ..]).assign(&g);
                    acc(&mut grads[*a], ga);
                }
                Op::RepeatRows(a) => {
                    acc(&mut grads[*a], g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                Op::MaxRows(a, arg) => {
                    let mut ga = Array2::zeros(self.nodes[*a].value.dim());
                    for (j, &i) in arg.iter().enumerate() {
                        ga[(i, j)] = g[(0, j)];
                    }
                    acc(&mut grads[*a], ga);
                }
                Op::SumAll(a) => {
                    let ga = Array2::from_elem(self.nodes[*a].value.dim(), g[(0, 0)]);
                    acc(&mut grads[*a], ga);
                }
            }
        }
        Gradients { grads }
    }
}

fn acc(slot: &mut Option<Array2<f64>>, delta: Array2<f64>) {
    match slot {
        Some(g) => *g += &delta,
        None => *slot = Some(delta),
    }
}

/// Result of a backward sweep.
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    /// Gradient of the root with respect to node `v`, or `None` when the
    /// root does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads[v.0].as_ref()
    }

    /// Like [`Gradients::get`] but materializes zeros for untouched nodes.
    pub fn get_or_zeros(&self, v: Var, tape: &Tape) -> Array2<f64> {
        match self.grads[v.0].as_ref() {
            Some(g) => g.clone(),
            None => Array2::zeros(tape.value(v).dim()),
        }
    }
}
