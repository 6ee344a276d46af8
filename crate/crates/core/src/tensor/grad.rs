use std::collections::BTreeMap;

use super::eval::Bindings;
use super::graph::{Graph, NodeId, Op};
use super::{Array, Result, TensorError};

/// Gradients keyed by leaf name. Iteration order is the leaf-name order,
/// so downstream consumers (optimizers, serializers) are deterministic.
#[derive(Debug, Clone, Default)]
pub struct GradientMap {
    grads: BTreeMap<String, Array>,
}

impl GradientMap {
    pub fn get(&self, name: &str) -> Option<&Array> {
        self.grads.get(name)
    }

    pub fn insert(&mut self, name: String, grad: Array) {
        self.grads.insert(name, grad);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Array)> {
        self.grads.iter()
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

impl Graph {
    /// Extend the graph with nodes computing d`output`/d`node` for every
    /// ancestor of `output`, returning the adjoint node of each requested
    /// target. `output` must be scalar. Targets with no path to `output`
    /// get `None` (their derivative is identically zero).
    pub fn append_adjoints(
        &mut self,
        output: NodeId,
        targets: &[NodeId],
    ) -> Result<Vec<Option<NodeId>>> {
        if !self.shape(output).is_empty() {
            return Err(TensorError::NotScalar(output.0));
        }
        let reachable = self.ancestor_mask(output);
        let mut adjoint: Vec<Option<NodeId>> = vec![None; self.nodes.len()];
        adjoint[output.0] = Some(self.constant_scalar(1.0));

        for i in (0..=output.0).rev() {
            if !reachable[i] {
                continue;
            }
            let g = match adjoint[i] {
                Some(g) => g,
                None => continue, // no differentiable path to the output
            };
            let op = self.nodes[i].op.clone();
            let out_node = NodeId(i);
            for (input, contribution) in self.vjp(&op, out_node, g)? {
                adjoint[input.0] = Some(match adjoint[input.0] {
                    None => contribution,
                    Some(prev) => self.add(prev, contribution)?,
                });
            }
        }
        Ok(targets.iter().map(|t| adjoint[t.0]).collect())
    }

    fn ancestor_mask(&self, output: NodeId) -> Vec<bool> {
        let mut mask = vec![false; self.nodes.len()];
        let mut stack = vec![output.0];
        while let Some(i) = stack.pop() {
            if mask[i] {
                continue;
            }
            mask[i] = true;
            for input in self.nodes[i].op.inputs() {
                stack.push(input.0);
            }
        }
        mask
    }

    /// Emit the vector-Jacobian product of one op as new graph nodes.
    /// `out` is the op's own output node (reused where the derivative is
    /// cheapest in terms of it), `g` the adjoint flowing in.
    fn vjp(&mut self, op: &Op, out: NodeId, g: NodeId) -> Result<Vec<(NodeId, NodeId)>> {
        Ok(match *op {
            Op::Leaf { .. } | Op::Const(_) => vec![],
            // Piecewise-constant masks: derivative zero almost everywhere.
            Op::ReluMask(_) | Op::ArgMinMask(_) | Op::ArgMaxMask(_) | Op::ColArgMinMask(_) => {
                vec![]
            }
            Op::MatMul(a, b) => {
                let da = self.matmul_tb(g, b)?;
                let db = self.matmul_ta(a, g)?;
                vec![(a, da), (b, db)]
            }
            Op::MatMulTA(a, b) => {
                let da = self.matmul_tb(b, g)?;
                let db = self.matmul(a, g)?;
                vec![(a, da), (b, db)]
            }
            Op::MatMulTB(a, b) => {
                let da = self.matmul(g, b)?;
                let db = self.matmul_ta(g, a)?;
                vec![(a, da), (b, db)]
            }
            Op::AddRow(m, v) => {
                let dv = self.col_sum(g)?;
                vec![(m, g), (v, dv)]
            }
            Op::Add(a, b) => vec![(a, g), (b, g)],
            Op::Sub(a, b) => {
                let db = self.neg(g);
                vec![(a, g), (b, db)]
            }
            Op::Mul(a, b) => {
                let da = self.mul(g, b)?;
                let db = self.mul(g, a)?;
                vec![(a, da), (b, db)]
            }
            Op::Div(a, b) => {
                let da = self.div(g, b)?;
                let ratio = self.div(out, b)?;
                let gb = self.mul(g, ratio)?;
                let db = self.neg(gb);
                vec![(a, da), (b, db)]
            }
            Op::Neg(a) => {
                let da = self.neg(g);
                vec![(a, da)]
            }
            Op::Scale(a, k) => {
                let da = self.scale(g, k);
                vec![(a, da)]
            }
            Op::Shift(a, _) => vec![(a, g)],
            Op::Relu(a) => {
                let mask = self.relu_mask(a);
                let da = self.mul(g, mask)?;
                vec![(a, da)]
            }
            Op::Square(a) => {
                let two_a = self.scale(a, 2.0);
                let da = self.mul(g, two_a)?;
                vec![(a, da)]
            }
            Op::Sqrt(a) => {
                let half_g = self.scale(g, 0.5);
                let da = self.div(half_g, out)?;
                vec![(a, da)]
            }
            Op::Exp(a) => {
                let da = self.mul(g, out)?;
                vec![(a, da)]
            }
            Op::Log(a) => {
                let da = self.div(g, a)?;
                vec![(a, da)]
            }
            Op::Sum(a) => {
                let shape = self.shape(a).to_vec();
                let da = self.fill_like(g, shape)?;
                vec![(a, da)]
            }
            Op::Mean(a) => {
                let shape = self.shape(a).to_vec();
                let len: usize = shape.iter().product::<usize>().max(1);
                let fill = self.fill_like(g, shape)?;
                let da = self.scale(fill, 1.0 / len as f64);
                vec![(a, da)]
            }
            Op::RowSum(a) => {
                let m = self.shape(a)[1];
                let da = self.col_broadcast(g, m)?;
                vec![(a, da)]
            }
            Op::ColSum(a) => {
                let n = self.shape(a)[0];
                let da = self.row_broadcast(g, n)?;
                vec![(a, da)]
            }
            Op::RowBroadcast(v, _) => {
                let dv = self.col_sum(g)?;
                vec![(v, dv)]
            }
            Op::ColBroadcast(v, _) => {
                let dv = self.row_sum(g)?;
                vec![(v, dv)]
            }
            Op::FillLike(s, _) => {
                let ds = self.sum(g);
                vec![(s, ds)]
            }
            Op::MinReduce(a) => {
                let shape = self.shape(a).to_vec();
                let fill = self.fill_like(g, shape)?;
                let mask = self.argmin_mask(a);
                let da = self.mul(fill, mask)?;
                vec![(a, da)]
            }
            Op::MaxReduce(a) => {
                let shape = self.shape(a).to_vec();
                let fill = self.fill_like(g, shape)?;
                let mask = self.argmax_mask(a);
                let da = self.mul(fill, mask)?;
                vec![(a, da)]
            }
            Op::ColMin(a) => {
                let n = self.shape(a)[0];
                let spread = self.row_broadcast(g, n)?;
                let mask = self.col_argmin_mask(a)?;
                let da = self.mul(spread, mask)?;
                vec![(a, da)]
            }
            Op::ColLogSumExp(a) => {
                // d lse_j / d a_ij = softmax over the column, written with
                // exp/sub so it stays differentiable for higher orders.
                let n = self.shape(a)[0];
                let lse_rows = self.row_broadcast(out, n)?;
                let centered = self.sub(a, lse_rows)?;
                let softmax = self.exp(centered);
                let spread = self.row_broadcast(g, n)?;
                let da = self.mul(spread, softmax)?;
                vec![(a, da)]
            }
            Op::Reshape(a, _) => {
                let shape = self.shape(a).to_vec();
                let da = self.reshape(g, shape)?;
                vec![(a, da)]
            }
        })
    }
}

/// A graph extended once with its own gradient nodes, ready to be run many
/// times under different bindings.
#[derive(Debug, Clone)]
pub struct GradProgram {
    graph: Graph,
    output: NodeId,
    aux: Vec<NodeId>,
    /// (leaf name, adjoint node if connected, leaf shape)
    grads: Vec<(String, Option<NodeId>, Vec<usize>)>,
}

impl GradProgram {
    /// Compile gradients of scalar `output` with respect to the named leaves.
    pub fn compile(graph: &Graph, output: NodeId, wanted: &[&str]) -> Result<Self> {
        Self::compile_with_aux(graph, output, wanted, &[])
    }

    /// Also report the forward values of `aux` nodes on every run.
    pub fn compile_with_aux(
        graph: &Graph,
        output: NodeId,
        wanted: &[&str],
        aux: &[NodeId],
    ) -> Result<Self> {
        let mut extended = graph.clone();
        let mut targets = Vec::with_capacity(wanted.len());
        for name in wanted {
            let id = extended
                .find_leaf(name)
                .ok_or_else(|| TensorError::UnknownLeaf(name.to_string()))?;
            targets.push(id);
        }
        let adjoints = extended.append_adjoints(output, &targets)?;
        let grads = wanted
            .iter()
            .zip(targets.iter())
            .zip(adjoints)
            .map(|((name, leaf), adj)| {
                (name.to_string(), adj, extended.shape(*leaf).to_vec())
            })
            .collect();
        Ok(GradProgram {
            graph: extended,
            output,
            aux: aux.to_vec(),
            grads,
        })
    }

    pub fn run(&self, bindings: &Bindings) -> Result<(f64, GradientMap)> {
        let (value, grads, _) = self.run_with_aux(bindings)?;
        Ok((value, grads))
    }

    /// Evaluate forward value, gradients, and any auxiliary nodes in one pass.
    pub fn run_with_aux(&self, bindings: &Bindings) -> Result<(f64, GradientMap, Vec<Array>)> {
        let mut outputs = vec![self.output];
        for (_, adj, _) in &self.grads {
            if let Some(adj) = adj {
                outputs.push(*adj);
            }
        }
        outputs.extend_from_slice(&self.aux);
        let mut values = self.graph.eval_many(&outputs, bindings)?;
        let aux_values = values.split_off(values.len() - self.aux.len());
        let mut values = values.into_iter();
        let value = values
            .next()
            .expect("output evaluated")
            .as_scalar()
            .expect("output checked scalar at compile");
        let mut map = GradientMap::default();
        for (name, adj, shape) in &self.grads {
            let grad = match adj {
                Some(_) => values.next().expect("adjoint evaluated"),
                None => Array::zeros(shape.clone()),
            };
            map.insert(name.clone(), grad);
        }
        Ok((value, map, aux_values))
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }
}

/// One-shot forward value plus exact reverse-mode gradients for the wanted
/// leaves. For repeated evaluation compile a [`GradProgram`] once instead.
pub fn eval_and_grad(
    graph: &Graph,
    output: NodeId,
    bindings: &Bindings,
    wanted: &[&str],
) -> Result<(f64, GradientMap)> {
    GradProgram::compile(graph, output, wanted)?.run(bindings)
}

/// Extend a graph with the penalty `(1 - ||∇_x f(x)||)²`, where `output`
/// is the scalar output of `f` and `input_leaf` names x. Returns the
/// extended graph with the gradient-norm node and the penalty node; the
/// inner gradient is symbolic, so the penalty supports exact further
/// differentiation.
pub fn gradnorm_penalty_graph(
    graph: &Graph,
    output: NodeId,
    input_leaf: &str,
) -> Result<(Graph, NodeId, NodeId)> {
    let mut extended = graph.clone();
    let x = extended
        .find_leaf(input_leaf)
        .ok_or_else(|| TensorError::UnknownLeaf(input_leaf.to_string()))?;
    let gx = extended.append_adjoints(output, &[x])?[0]
        .ok_or_else(|| TensorError::UnknownLeaf(format!("{input_leaf} (no path to output)")))?;
    let norm = extended.euclidean_norm(gx);
    let neg = extended.neg(norm);
    let dev = extended.shift(neg, 1.0);
    let penalty = extended.square(dev);
    Ok((extended, norm, penalty))
}

/// Gradient with respect to the parameter leaves of the penalty
/// `(1 - ||∇_x f(x)||)²` at the bound input point. The inner gradient is a
/// symbolic extension of the graph, so the outer differentiation is exact.
///
/// Errors with [`TensorError::ZeroGradientNorm`] when `||∇_x f|| = 0` at the
/// evaluation point; the square root is not differentiable there.
pub fn grad_of_gradnorm(
    graph: &Graph,
    output: NodeId,
    input_leaf: &str,
    bindings: &Bindings,
    wanted: &[&str],
) -> Result<(f64, GradientMap)> {
    let (extended, norm, penalty) = gradnorm_penalty_graph(graph, output, input_leaf)?;
    let norm_value = extended
        .eval(norm, bindings)?
        .as_scalar()
        .expect("norm is scalar");
    if norm_value == 0.0 {
        return Err(TensorError::ZeroGradientNorm);
    }
    eval_and_grad(&extended, penalty, bindings, wanted)
}

/// Compare reverse-mode gradients of `leaf` against central finite
/// differences with the given step, entry by entry. Returns the worst
/// relative deviation, with denominator `max(|analytic|, |numeric|, 1e-8)`.
pub fn finite_diff_check(
    graph: &Graph,
    output: NodeId,
    bindings: &Bindings,
    leaf: &str,
    step: f64,
) -> Result<f64> {
    if step <= 0.0 {
        return Err(TensorError::BadStep(step));
    }
    let (_, grads) = eval_and_grad(graph, output, bindings, &[leaf])?;
    let analytic = grads.get(leaf).expect("requested leaf present");
    let base = bindings
        .get(leaf)
        .ok_or_else(|| TensorError::UnboundLeaf(leaf.to_string()))?
        .clone();

    let mut worst: f64 = 0.0;
    for k in 0..base.len() {
        let numeric = central_difference(graph, output, bindings, leaf, &base, k, step)?;
        let a = analytic.data()[k];
        let denom = a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}

/// Central difference of the graph output along one coordinate of a leaf.
pub fn central_difference(
    graph: &Graph,
    output: NodeId,
    bindings: &Bindings,
    leaf: &str,
    base: &Array,
    coord: usize,
    step: f64,
) -> Result<f64> {
    let eval_at = |delta: f64| -> Result<f64> {
        let mut perturbed = base.clone();
        perturbed.data_mut()[coord] += delta;
        let mut b = bindings.clone();
        b.bind(leaf, perturbed);
        Ok(graph.eval(output, &b)?.as_scalar().expect("scalar output"))
    };
    let plus = eval_at(step)?;
    let minus = eval_at(-step)?;
    Ok((plus - minus) / (2.0 * step))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::LeafKind;

    fn scalar_graph() -> (Graph, NodeId, NodeId) {
        let mut g = Graph::new();
        let x = g.leaf("x", LeafKind::Input, vec![]);
        let y = g.square(x);
        (g, x, y)
    }

    #[test]
    fn square_value_and_grad() {
        let (g, _, y) = scalar_graph();
        let mut b = Bindings::new();
        b.bind("x", Array::scalar(3.0));
        let (v, grads) = eval_and_grad(&g, y, &b, &["x"]).unwrap();
        assert_eq!(v, 9.0);
        assert_eq!(grads.get("x").unwrap().as_scalar(), Some(6.0));
    }

    #[test]
    fn inactive_relu_has_zero_grad() {
        let mut g = Graph::new();
        let x = g.leaf("x", LeafKind::Input, vec![]);
        let r = g.relu(x);
        let out = g.sum(r);
        let mut b = Bindings::new();
        b.bind("x", Array::scalar(-2.0));
        let (v, grads) = eval_and_grad(&g, out, &b, &["x"]).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(grads.get("x").unwrap().as_scalar(), Some(0.0));
    }

    #[test]
    fn exp_grad_matches_finite_differences() {
        let mut g = Graph::new();
        let x = g.leaf("x", LeafKind::Input, vec![]);
        let y = g.exp(x);
        let mut b = Bindings::new();
        b.bind("x", Array::scalar(1.0));
        let dev = finite_diff_check(&g, y, &b, "x", 1e-5).unwrap();
        assert!(dev < 1e-5, "relative deviation {dev}");
    }

    #[test]
    fn square_fd_at_three() {
        let (g, _, y) = scalar_graph();
        let mut b = Bindings::new();
        b.bind("x", Array::scalar(3.0));
        let dev = finite_diff_check(&g, y, &b, "x", 1e-4).unwrap();
        assert!(dev < 1e-6, "relative deviation {dev}");
    }

    #[test]
    fn gradnorm_penalty_linear_scalar_case() {
        // f(x) = a*x: penalty (1-|a|)², d/da = -2(1-|a|)sign(a).
        let mut g = Graph::new();
        let a = g.leaf("a", LeafKind::Param, vec![]);
        let x = g.leaf("x", LeafKind::Input, vec![]);
        let y = g.mul(a, x).unwrap();
        let mut b = Bindings::new();
        b.bind("a", Array::scalar(0.5));
        b.bind("x", Array::scalar(2.0));
        let (penalty, grads) = grad_of_gradnorm(&g, y, "x", &b, &["a"]).unwrap();
        assert!((penalty - 0.25).abs() < 1e-12);
        assert!((grads.get("a").unwrap().as_scalar().unwrap() - (-1.0)).abs() < 1e-12);

        // a = 1: constraint satisfied exactly, derivative zero.
        b.bind("a", Array::scalar(1.0));
        let (penalty, grads) = grad_of_gradnorm(&g, y, "x", &b, &["a"]).unwrap();
        assert_eq!(penalty, 0.0);
        assert_eq!(grads.get("a").unwrap().as_scalar(), Some(0.0));
    }

    #[test]
    fn gradnorm_zero_is_an_error() {
        let mut g = Graph::new();
        let a = g.leaf("a", LeafKind::Param, vec![]);
        let x = g.leaf("x", LeafKind::Input, vec![]);
        let y = g.mul(a, x).unwrap();
        let mut b = Bindings::new();
        b.bind("a", Array::scalar(0.0));
        b.bind("x", Array::scalar(2.0));
        assert!(matches!(
            grad_of_gradnorm(&g, y, "x", &b, &["a"]),
            Err(TensorError::ZeroGradientNorm)
        ));
    }

    #[test]
    fn disconnected_leaf_gets_zero_gradient() {
        let mut g = Graph::new();
        let x = g.leaf("x", LeafKind::Input, vec![]);
        let _unused = g.leaf("u", LeafKind::Input, vec![3]);
        let y = g.square(x);
        let mut b = Bindings::new();
        b.bind("x", Array::scalar(2.0));
        b.bind("u", Array::vector(vec![1.0, 2.0, 3.0]));
        let (_, grads) = eval_and_grad(&g, y, &b, &["u"]).unwrap();
        assert_eq!(grads.get("u").unwrap().data(), &[0.0, 0.0, 0.0]);
    }
}
