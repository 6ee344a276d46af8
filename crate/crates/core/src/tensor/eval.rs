use std::collections::HashMap;

use ndarray::Array2;

use super::graph::{Graph, Node, NodeId, Op};
use super::{Array, Result, TensorError};

/// Values bound to named leaves for one evaluation.
#[derive(Debug, Default, Clone)]
pub struct Bindings {
    values: HashMap<String, Array>,
}

impl Bindings {
    pub fn new() -> Self {
        Bindings::default()
    }

    pub fn bind(&mut self, name: &str, value: Array) -> &mut Self {
        self.values.insert(name.to_string(), value);
        self
    }

    pub fn get(&self, name: &str) -> Option<&Array> {
        self.values.get(name)
    }
}

impl Graph {
    /// Evaluate `output` under `bindings`, computing only the ancestors of
    /// `output`. Every produced value is checked for finiteness.
    pub fn eval(&self, output: NodeId, bindings: &Bindings) -> Result<Array> {
        let mut values = self.eval_many(&[output], bindings)?;
        Ok(values.pop().expect("one output requested"))
    }

    /// Evaluate several outputs in one pass over the graph.
    pub fn eval_many(&self, outputs: &[NodeId], bindings: &Bindings) -> Result<Vec<Array>> {
        let needed = self.ancestors(outputs);
        let mut values: Vec<Option<Array>> = vec![None; self.nodes.len()];
        for (idx, node) in self.nodes.iter().enumerate() {
            if !needed[idx] {
                continue;
            }
            let value = self.eval_node(idx, node, &values, bindings)?;
            if !value.all_finite() {
                return Err(TensorError::NonFinite {
                    node: idx,
                    op: node.op.name().to_string(),
                });
            }
            values[idx] = Some(value);
        }
        Ok(outputs
            .iter()
            .map(|id| values[id.0].clone().expect("ancestor computed"))
            .collect())
    }

    /// Reachability mask: which nodes feed any of `outputs`.
    fn ancestors(&self, outputs: &[NodeId]) -> Vec<bool> {
        let mut needed = vec![false; self.nodes.len()];
        let mut stack: Vec<usize> = outputs.iter().map(|id| id.0).collect();
        while let Some(i) = stack.pop() {
            if needed[i] {
                continue;
            }
            needed[i] = true;
            for input in self.nodes[i].op.inputs() {
                stack.push(input.0);
            }
        }
        needed
    }

    fn eval_node(
        &self,
        idx: usize,
        node: &Node,
        values: &[Option<Array>],
        bindings: &Bindings,
    ) -> Result<Array> {
        let val = |id: NodeId| values[id.0].as_ref().expect("topological order");
        Ok(match &node.op {
            Op::Leaf { name, .. } => {
                let bound = bindings
                    .get(name)
                    .ok_or_else(|| TensorError::UnboundLeaf(name.clone()))?;
                if bound.shape() != node.shape.as_slice() {
                    return Err(TensorError::LeafShapeMismatch {
                        name: name.clone(),
                        expected: node.shape.clone(),
                        got: bound.shape().to_vec(),
                    });
                }
                bound.clone()
            }
            Op::Const(c) => c.clone(),
            Op::MatMul(a, b) => matmul(val(*a), val(*b), false, false),
            Op::MatMulTA(a, b) => matmul(val(*a), val(*b), true, false),
            Op::MatMulTB(a, b) => matmul(val(*a), val(*b), false, true),
            Op::AddRow(m, v) => {
                let (m, v) = (val(*m), val(*v));
                let cols = m.cols();
                let mut out = m.clone();
                for (i, x) in out.data_mut().iter_mut().enumerate() {
                    *x += v.data()[i % cols];
                }
                out
            }
            Op::Add(a, b) => val(*a).zip(val(*b), |x, y| x + y),
            Op::Sub(a, b) => val(*a).zip(val(*b), |x, y| x - y),
            Op::Mul(a, b) => val(*a).zip(val(*b), |x, y| x * y),
            Op::Div(a, b) => val(*a).zip(val(*b), |x, y| x / y),
            Op::Neg(a) => val(*a).map(|x| -x),
            Op::Scale(a, k) => val(*a).map(|x| k * x),
            Op::Shift(a, k) => val(*a).map(|x| k + x),
            Op::Relu(a) => val(*a).map(|x| x.max(0.0)),
            Op::ReluMask(a) => val(*a).map(|x| if x > 0.0 { 1.0 } else { 0.0 }),
            Op::Square(a) => val(*a).map(|x| x * x),
            Op::Sqrt(a) => val(*a).map(f64::sqrt),
            Op::Exp(a) => val(*a).map(f64::exp),
            Op::Log(a) => val(*a).map(f64::ln),
            Op::Sum(a) => Array::scalar(val(*a).sum()),
            Op::Mean(a) => {
                let v = val(*a);
                if v.is_empty() {
                    return Err(TensorError::EmptyReduction(idx));
                }
                Array::scalar(v.sum() / v.len() as f64)
            }
            Op::RowSum(a) => {
                let v = val(*a);
                let n = v.rows();
                let mut out = vec![0.0; n];
                for (i, o) in out.iter_mut().enumerate() {
                    *o = v.row(i).iter().sum();
                }
                Array::vector(out)
            }
            Op::ColSum(a) => {
                let v = val(*a);
                let (n, m) = (v.rows(), v.cols());
                let mut out = vec![0.0; m];
                for i in 0..n {
                    for (j, o) in out.iter_mut().enumerate() {
                        *o += v.get2(i, j);
                    }
                }
                Array::vector(out)
            }
            Op::RowBroadcast(v, n) => {
                let v = val(*v);
                let m = v.len();
                let mut data = Vec::with_capacity(n * m);
                for _ in 0..*n {
                    data.extend_from_slice(v.data());
                }
                Array::matrix(*n, m, data).expect("sized correctly")
            }
            Op::ColBroadcast(v, m) => {
                let v = val(*v);
                let n = v.len();
                let mut data = Vec::with_capacity(n * m);
                for i in 0..n {
                    data.extend(std::iter::repeat_n(v.data()[i], *m));
                }
                Array::matrix(n, *m, data).expect("sized correctly")
            }
            Op::FillLike(s, shape) => {
                let x = val(*s).as_scalar().expect("checked scalar at build");
                let len: usize = shape.iter().product();
                Array::new(shape.clone(), vec![x; len]).expect("sized correctly")
            }
            Op::MinReduce(a) => {
                let v = val(*a);
                if v.is_empty() {
                    return Err(TensorError::EmptyReduction(idx));
                }
                Array::scalar(v.data().iter().copied().fold(f64::INFINITY, f64::min))
            }
            Op::MaxReduce(a) => {
                let v = val(*a);
                if v.is_empty() {
                    return Err(TensorError::EmptyReduction(idx));
                }
                Array::scalar(v.data().iter().copied().fold(f64::NEG_INFINITY, f64::max))
            }
            Op::ArgMinMask(a) => {
                let v = val(*a);
                if v.is_empty() {
                    return Err(TensorError::EmptyReduction(idx));
                }
                let arg = lowest_argext(v.data(), |x, best| x < best);
                let mut out = Array::zeros(v.shape().to_vec());
                out.data_mut()[arg] = 1.0;
                out
            }
            Op::ArgMaxMask(a) => {
                let v = val(*a);
                if v.is_empty() {
                    return Err(TensorError::EmptyReduction(idx));
                }
                let arg = lowest_argext(v.data(), |x, best| x > best);
                let mut out = Array::zeros(v.shape().to_vec());
                out.data_mut()[arg] = 1.0;
                out
            }
            Op::ColMin(a) => {
                let v = val(*a);
                let (n, m) = (v.rows(), v.cols());
                if n == 0 {
                    return Err(TensorError::EmptyReduction(idx));
                }
                let mut out = vec![f64::INFINITY; m];
                for i in 0..n {
                    for (j, o) in out.iter_mut().enumerate() {
                        let x = v.get2(i, j);
                        if x < *o {
                            *o = x;
                        }
                    }
                }
                Array::vector(out)
            }
            Op::ColArgMinMask(a) => {
                let v = val(*a);
                let (n, m) = (v.rows(), v.cols());
                if n == 0 {
                    return Err(TensorError::EmptyReduction(idx));
                }
                let mut out = Array::zeros(vec![n, m]);
                for j in 0..m {
                    let mut best = f64::INFINITY;
                    let mut arg = 0;
                    for i in 0..n {
                        let x = v.get2(i, j);
                        if x < best {
                            best = x;
                            arg = i;
                        }
                    }
                    out.data_mut()[arg * m + j] = 1.0;
                }
                out
            }
            Op::ColLogSumExp(a) => {
                let v = val(*a);
                let (n, m) = (v.rows(), v.cols());
                if n == 0 {
                    return Err(TensorError::EmptyReduction(idx));
                }
                let mut out = vec![0.0; m];
                for (j, o) in out.iter_mut().enumerate() {
                    let mut mx = f64::NEG_INFINITY;
                    for i in 0..n {
                        mx = mx.max(v.get2(i, j));
                    }
                    let mut s = 0.0;
                    for i in 0..n {
                        s += (v.get2(i, j) - mx).exp();
                    }
                    *o = mx + s.ln();
                }
                Array::vector(out)
            }
            Op::Reshape(a, shape) => {
                Array::new(shape.clone(), val(*a).data().to_vec()).expect("length checked at build")
            }
        })
    }
}

/// Index of the first entry that is strictly better than all before it.
fn lowest_argext(data: &[f64], better: impl Fn(f64, f64) -> bool) -> usize {
    let mut arg = 0;
    let mut best = data[0];
    for (i, &x) in data.iter().enumerate().skip(1) {
        if better(x, best) {
            best = x;
            arg = i;
        }
    }
    arg
}

fn matmul(a: &Array, b: &Array, ta: bool, tb: bool) -> Array {
    let av = a.view2();
    let bv = b.view2();
    let out: Array2<f64> = match (ta, tb) {
        (false, false) => av.dot(&bv),
        (true, false) => av.t().dot(&bv),
        (false, true) => av.dot(&bv.t()),
        (true, true) => unreachable!("no op emits a double transpose"),
    };
    let (r, c) = out.dim();
    // dot() may hand back a transposed (Fortran-layout) result; iterate in
    // logical order instead of taking the raw buffer.
    Array::matrix(r, c, out.iter().copied().collect()).expect("dot output is dense")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::LeafKind;

    #[test]
    fn unbound_leaf_is_an_error() {
        let mut g = Graph::new();
        let x = g.leaf("x", LeafKind::Input, vec![]);
        let y = g.square(x);
        let err = g.eval(y, &Bindings::new()).unwrap_err();
        assert!(matches!(err, TensorError::UnboundLeaf(_)));
    }

    #[test]
    fn shape_checked_at_bind() {
        let mut g = Graph::new();
        let x = g.leaf("x", LeafKind::Input, vec![2]);
        let y = g.sum(x);
        let mut b = Bindings::new();
        b.bind("x", Array::vector(vec![1.0, 2.0, 3.0]));
        assert!(matches!(
            g.eval(y, &b),
            Err(TensorError::LeafShapeMismatch { .. })
        ));
    }

    #[test]
    fn log_of_negative_reports_non_finite() {
        let mut g = Graph::new();
        let x = g.leaf("x", LeafKind::Input, vec![]);
        let y = g.log(x);
        let mut b = Bindings::new();
        b.bind("x", Array::scalar(-1.0));
        assert!(matches!(g.eval(y, &b), Err(TensorError::NonFinite { .. })));
    }

    #[test]
    fn shared_graph_evaluates_identically_from_multiple_threads() {
        let mut g = Graph::new();
        let x = g.leaf("x", LeafKind::Input, vec![4]);
        let sq = g.square(x);
        let s = g.sum(sq);
        let out = g.sqrt(s);
        let mut b = Bindings::new();
        b.bind("x", Array::vector(vec![1.0, -2.0, 3.0, -4.0]));
        let reference = g.eval(out, &b).unwrap();
        std::thread::scope(|scope| {
            for _ in 0..4 {
                let (graph, bindings, expect) = (&g, &b, &reference);
                scope.spawn(move || {
                    for _ in 0..50 {
                        let v = graph.eval(out, bindings).unwrap();
                        assert_eq!(
                            v.as_scalar().unwrap().to_bits(),
                            expect.as_scalar().unwrap().to_bits()
                        );
                    }
                });
            }
        });
    }

    #[test]
    fn col_min_takes_lowest_row_on_ties() {
        let mut g = Graph::new();
        let a = g.leaf("a", LeafKind::Input, vec![2, 2]);
        let mask = g.col_argmin_mask(a).unwrap();
        let mins = g.col_min(a).unwrap();
        let mut b = Bindings::new();
        // Column 0 ties between rows; the mask must pick row 0.
        b.bind("a", Array::matrix(2, 2, vec![3.0, 5.0, 3.0, 1.0]).unwrap());
        let out = g.eval_many(&[mins, mask], &b).unwrap();
        assert_eq!(out[0].data(), &[3.0, 1.0]);
        assert_eq!(out[1].data(), &[1.0, 0.0, 0.0, 1.0]);
    }
}
