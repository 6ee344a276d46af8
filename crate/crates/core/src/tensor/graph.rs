use super::{Array, Result, TensorError};

/// Handle to a node inside a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Whether a leaf holds trainable parameters or per-evaluation inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeafKind {
    Param,
    Input,
}

/// Primitive operations. Matrix ops are strictly rank-2; broadcasts are
/// explicit nodes so the adjoint of every op is again expressible in ops.
#[derive(Debug, Clone)]
pub(crate) enum Op {
    Leaf { name: String, kind: LeafKind },
    Const(Array),
    /// (n,k)·(k,m)
    MatMul(NodeId, NodeId),
    /// aᵀ·b for a:(k,n), b:(k,m)
    MatMulTA(NodeId, NodeId),
    /// a·bᵀ for a:(n,k), b:(m,k)
    MatMulTB(NodeId, NodeId),
    /// matrix (n,m) + row vector (m), broadcast over rows
    AddRow(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Neg(NodeId),
    Scale(NodeId, f64),
    Shift(NodeId, f64),
    Relu(NodeId),
    /// 1 where x > 0 else 0; derivative treated as zero everywhere
    ReluMask(NodeId),
    Square(NodeId),
    Sqrt(NodeId),
    Exp(NodeId),
    Log(NodeId),
    /// sum of all entries -> scalar
    Sum(NodeId),
    /// mean of all entries -> scalar
    Mean(NodeId),
    /// (n,m) -> (n): sum along each row
    RowSum(NodeId),
    /// (n,m) -> (m): sum along each column
    ColSum(NodeId),
    /// (m) -> (n,m): repeat a row vector n times
    RowBroadcast(NodeId, usize),
    /// (n) -> (n,m): repeat a column vector across m columns
    ColBroadcast(NodeId, usize),
    /// scalar -> given shape, every entry the scalar
    FillLike(NodeId, Vec<usize>),
    /// min over all entries -> scalar; subgradient at the lowest flat argmin
    MinReduce(NodeId),
    MaxReduce(NodeId),
    /// one-hot of the lowest flat argmin/argmax; derivative treated as zero
    ArgMinMask(NodeId),
    ArgMaxMask(NodeId),
    /// (n,m) -> (m): min over rows per column; lowest-row-index subgradient
    ColMin(NodeId),
    /// (n,m) 0/1 matrix with a single 1 per column at the lowest argmin row
    ColArgMinMask(NodeId),
    /// (n,m) -> (m): log(sum_i exp(B_ij)) per column, max-stabilized
    ColLogSumExp(NodeId),
    /// reinterpret data under a new shape of equal length
    Reshape(NodeId, Vec<usize>),
}

impl Op {
    pub(crate) fn name(&self) -> &'static str {
        match self {
            Op::Leaf { .. } => "leaf",
            Op::Const(_) => "const",
            Op::MatMul(..) => "matmul",
            Op::MatMulTA(..) => "matmul_ta",
            Op::MatMulTB(..) => "matmul_tb",
            Op::AddRow(..) => "add_row",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Neg(..) => "neg",
            Op::Scale(..) => "scale",
            Op::Shift(..) => "shift",
            Op::Relu(..) => "relu",
            Op::ReluMask(..) => "relu_mask",
            Op::Square(..) => "square",
            Op::Sqrt(..) => "sqrt",
            Op::Exp(..) => "exp",
            Op::Log(..) => "log",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::RowSum(..) => "row_sum",
            Op::ColSum(..) => "col_sum",
            Op::RowBroadcast(..) => "row_broadcast",
            Op::ColBroadcast(..) => "col_broadcast",
            Op::FillLike(..) => "fill_like",
            Op::MinReduce(..) => "min_reduce",
            Op::MaxReduce(..) => "max_reduce",
            Op::ArgMinMask(..) => "argmin_mask",
            Op::ArgMaxMask(..) => "argmax_mask",
            Op::ColMin(..) => "col_min",
            Op::ColArgMinMask(..) => "col_argmin_mask",
            Op::ColLogSumExp(..) => "col_logsumexp",
            Op::Reshape(..) => "reshape",
        }
    }

    pub(crate) fn inputs(&self) -> Vec<NodeId> {
        match *self {
            Op::Leaf { .. } | Op::Const(_) => vec![],
            Op::MatMul(a, b)
            | Op::MatMulTA(a, b)
            | Op::MatMulTB(a, b)
            | Op::AddRow(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::Div(a, b) => vec![a, b],
            Op::Neg(a)
            | Op::Scale(a, _)
            | Op::Shift(a, _)
            | Op::Relu(a)
            | Op::ReluMask(a)
            | Op::Square(a)
            | Op::Sqrt(a)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::RowSum(a)
            | Op::ColSum(a)
            | Op::RowBroadcast(a, _)
            | Op::ColBroadcast(a, _)
            | Op::FillLike(a, _)
            | Op::MinReduce(a)
            | Op::MaxReduce(a)
            | Op::ArgMinMask(a)
            | Op::ArgMaxMask(a)
            | Op::ColMin(a)
            | Op::ColArgMinMask(a)
            | Op::ColLogSumExp(a)
            | Op::Reshape(a, _) => vec![a],
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Node {
    pub op: Op,
    pub shape: Vec<usize>,
}

/// An append-only DAG of primitive operations. Nodes are stored in
/// topological order by construction: an op can only reference nodes that
/// already exist. Once built, a graph is immutable and can be evaluated
/// from any number of threads; all evaluation state lives in per-call
/// buffers.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    pub(crate) nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    /// Names and kinds of every leaf in the graph.
    pub fn leaves(&self) -> Vec<(String, LeafKind, Vec<usize>)> {
        self.nodes
            .iter()
            .filter_map(|n| match &n.op {
                Op::Leaf { name, kind } => Some((name.clone(), *kind, n.shape.clone())),
                _ => None,
            })
            .collect()
    }

    pub fn find_leaf(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| match &n.op {
            Op::Leaf { name: n, .. } => n == name,
            _ => false,
        }).map(NodeId)
    }

    fn push(&mut self, op: Op, shape: Vec<usize>) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op, shape });
        id
    }

    fn mismatch(op: &'static str, detail: String) -> TensorError {
        TensorError::ShapeMismatch {
            op,
            detail,
        }
    }

    // ---- leaves and constants ----

    /// Leaves are unique by name: asking for an existing leaf again returns
    /// the original node, which is how parameters are shared between
    /// several applications of the same network in one graph.
    pub fn leaf(&mut self, name: &str, kind: LeafKind, shape: Vec<usize>) -> NodeId {
        if let Some(existing) = self.find_leaf(name) {
            assert_eq!(
                self.shape(existing),
                shape.as_slice(),
                "leaf `{name}` redeclared with a different shape"
            );
            return existing;
        }
        self.push(
            Op::Leaf {
                name: name.to_string(),
                kind,
            },
            shape,
        )
    }

    pub fn constant(&mut self, value: Array) -> NodeId {
        let shape = value.shape().to_vec();
        self.push(Op::Const(value), shape)
    }

    pub fn constant_scalar(&mut self, v: f64) -> NodeId {
        self.constant(Array::scalar(v))
    }

    // ---- linear algebra ----

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Self::mismatch("matmul", format!("{sa:?} x {sb:?}")));
        }
        Ok(self.push(Op::MatMul(a, b), vec![sa[0], sb[1]]))
    }

    pub fn matmul_ta(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[0] != sb[0] {
            return Err(Self::mismatch("matmul_ta", format!("{sa:?}ᵀ x {sb:?}")));
        }
        Ok(self.push(Op::MatMulTA(a, b), vec![sa[1], sb[1]]))
    }

    pub fn matmul_tb(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[1] {
            return Err(Self::mismatch("matmul_tb", format!("{sa:?} x {sb:?}ᵀ")));
        }
        Ok(self.push(Op::MatMulTB(a, b), vec![sa[0], sb[0]]))
    }

    /// matrix + row-vector bias, broadcast over rows.
    pub fn add_row(&mut self, m: NodeId, v: NodeId) -> Result<NodeId> {
        let (sm, sv) = (self.shape(m).to_vec(), self.shape(v).to_vec());
        if sm.len() != 2 || sv.len() != 1 || sm[1] != sv[0] {
            return Err(Self::mismatch("add_row", format!("{sm:?} + row {sv:?}")));
        }
        Ok(self.push(Op::AddRow(m, v), sm))
    }

    // ---- elementwise ----

    fn binary_same_shape(
        &mut self,
        opname: &'static str,
        a: NodeId,
        b: NodeId,
        make: impl Fn(NodeId, NodeId) -> Op,
    ) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa != sb {
            return Err(Self::mismatch(opname, format!("{sa:?} vs {sb:?}")));
        }
        Ok(self.push(make(a, b), sa))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape("add", a, b, Op::Add)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape("sub", a, b, Op::Sub)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape("mul", a, b, Op::Mul)
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape("div", a, b, Op::Div)
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        let s = self.shape(a).to_vec();
        self.push(Op::Neg(a), s)
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> NodeId {
        let s = self.shape(a).to_vec();
        self.push(Op::Scale(a, k), s)
    }

    pub fn shift(&mut self, a: NodeId, k: f64) -> NodeId {
        let s = self.shape(a).to_vec();
        self.push(Op::Shift(a, k), s)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let s = self.shape(a).to_vec();
        self.push(Op::Relu(a), s)
    }

    pub fn relu_mask(&mut self, a: NodeId) -> NodeId {
        let s = self.shape(a).to_vec();
        self.push(Op::ReluMask(a), s)
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        let s = self.shape(a).to_vec();
        self.push(Op::Square(a), s)
    }

    pub fn sqrt(&mut self, a: NodeId) -> NodeId {
        let s = self.shape(a).to_vec();
        self.push(Op::Sqrt(a), s)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let s = self.shape(a).to_vec();
        self.push(Op::Exp(a), s)
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        let s = self.shape(a).to_vec();
        self.push(Op::Log(a), s)
    }

    // ---- reductions and broadcasts ----

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Sum(a), vec![])
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Mean(a), vec![])
    }

    pub fn row_sum(&mut self, a: NodeId) -> Result<NodeId> {
        let s = self.shape(a).to_vec();
        if s.len() != 2 {
            return Err(Self::mismatch("row_sum", format!("{s:?}")));
        }
        Ok(self.push(Op::RowSum(a), vec![s[0]]))
    }

    pub fn col_sum(&mut self, a: NodeId) -> Result<NodeId> {
        let s = self.shape(a).to_vec();
        if s.len() != 2 {
            return Err(Self::mismatch("col_sum", format!("{s:?}")));
        }
        Ok(self.push(Op::ColSum(a), vec![s[1]]))
    }

    pub fn row_broadcast(&mut self, v: NodeId, n: usize) -> Result<NodeId> {
        let s = self.shape(v).to_vec();
        if s.len() != 1 {
            return Err(Self::mismatch("row_broadcast", format!("{s:?}")));
        }
        Ok(self.push(Op::RowBroadcast(v, n), vec![n, s[0]]))
    }

    pub fn col_broadcast(&mut self, v: NodeId, m: usize) -> Result<NodeId> {
        let s = self.shape(v).to_vec();
        if s.len() != 1 {
            return Err(Self::mismatch("col_broadcast", format!("{s:?}")));
        }
        Ok(self.push(Op::ColBroadcast(v, m), vec![s[0], m]))
    }

    pub fn fill_like(&mut self, s: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        if !self.shape(s).is_empty() {
            return Err(Self::mismatch("fill_like", "source is not scalar".into()));
        }
        Ok(self.push(Op::FillLike(s, shape.clone()), shape))
    }

    pub fn min_reduce(&mut self, a: NodeId) -> NodeId {
        self.push(Op::MinReduce(a), vec![])
    }

    pub fn max_reduce(&mut self, a: NodeId) -> NodeId {
        self.push(Op::MaxReduce(a), vec![])
    }

    pub fn argmin_mask(&mut self, a: NodeId) -> NodeId {
        let s = self.shape(a).to_vec();
        self.push(Op::ArgMinMask(a), s)
    }

    pub fn argmax_mask(&mut self, a: NodeId) -> NodeId {
        let s = self.shape(a).to_vec();
        self.push(Op::ArgMaxMask(a), s)
    }

    pub fn col_min(&mut self, a: NodeId) -> Result<NodeId> {
        let s = self.shape(a).to_vec();
        if s.len() != 2 {
            return Err(Self::mismatch("col_min", format!("{s:?}")));
        }
        Ok(self.push(Op::ColMin(a), vec![s[1]]))
    }

    pub fn col_argmin_mask(&mut self, a: NodeId) -> Result<NodeId> {
        let s = self.shape(a).to_vec();
        if s.len() != 2 {
            return Err(Self::mismatch("col_argmin_mask", format!("{s:?}")));
        }
        Ok(self.push(Op::ColArgMinMask(a), s))
    }

    pub fn col_logsumexp(&mut self, a: NodeId) -> Result<NodeId> {
        let s = self.shape(a).to_vec();
        if s.len() != 2 {
            return Err(Self::mismatch("col_logsumexp", format!("{s:?}")));
        }
        Ok(self.push(Op::ColLogSumExp(a), vec![s[1]]))
    }

    pub fn reshape(&mut self, a: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let old: usize = self.shape(a).iter().product();
        let new: usize = shape.iter().product();
        if old != new {
            return Err(Self::mismatch(
                "reshape",
                format!("{:?} -> {shape:?}", self.shape(a)),
            ));
        }
        Ok(self.push(Op::Reshape(a, shape.clone()), shape))
    }

    // ---- composites ----

    /// sqrt(sum(x²)) as a subgraph; errors at zero arise during evaluation
    /// of the adjoint (division by the norm).
    pub fn euclidean_norm(&mut self, a: NodeId) -> NodeId {
        let sq = self.square(a);
        let s = self.sum(sq);
        self.sqrt(s)
    }

    /// Dot product of two same-shape nodes.
    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let p = self.mul(a, b)?;
        Ok(self.sum(p))
    }
}
