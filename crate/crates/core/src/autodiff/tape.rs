use std::borrow::Cow;
use std::cell::RefCell;
use std::rc::Rc;

use super::{AutodiffError, Result, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(super) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub(super) enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    MulRow(usize, usize),
    MulCol(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Concat {
        inputs: Vec<usize>,
        axis: usize,
    },
    SliceCols {
        a: usize,
        start: usize,
    },
    GatherRows {
        a: usize,
        index: Rc<[usize]>,
    },
    SegmentSum {
        a: usize,
        segments: Rc<[usize]>,
    },
    SegmentSoftmax {
        a: usize,
        segments: Rc<[usize]>,
        count: usize,
    },
    /// Source row of every output element (first maximum on ties).
    SegmentMax {
        a: usize,
        argmax: Vec<usize>,
    },
    LeakyRelu(usize, f64),
    Relu(usize),
    Tanh(usize),
    Exp(usize),
    Log(usize),
    Square(usize),
    LayerNorm {
        a: usize,
        inv_std: Vec<f64>,
    },
    MeanRows(usize),
    SumAll(usize),
    RowSum(usize),
    LogSoftmaxRows(usize),
    SelectPerRow {
        a: usize,
        index: Rc<[usize]>,
    },
    Clamp {
        a: usize,
        lo: f64,
        hi: f64,
    },
    Minimum(usize, usize),
    Maximum(usize, usize),
    BlockSumCols {
        a: usize,
        blocks: usize,
    },
    RepeatCols {
        a: usize,
        times: usize,
    },
    Attend {
        values: usize,
        weights: usize,
        src: Rc<[usize]>,
        dst: Rc<[usize]>,
    },
}

pub(super) struct Node<'p> {
    pub rows: usize,
    pub cols: usize,
    pub value: Cow<'p, [f64]>,
    pub op: Op,
    pub needs_grad: bool,
}

/// Records operations for one forward pass.
///
/// Leaves borrowed with [`Tape::param`] live as long as `'p`. Gradients of
/// leaves accumulate across calls to [`Tape::backward`] until
/// [`Tape::zero_grad`].
#[derive(Default)]
pub struct Tape<'p> {
    pub(super) nodes: RefCell<Vec<Node<'p>>>,
    pub(super) leaf_grads: RefCell<Vec<Option<Vec<f64>>>>,
}

fn shape_err(op: &'static str, detail: String) -> AutodiffError {
    AutodiffError::Shape { op, detail }
}

fn index_err(op: &'static str, detail: String) -> AutodiffError {
    AutodiffError::Index { op, detail }
}

pub(super) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: (&[f64], isize, isize),
    b: (&[f64], isize, isize),
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.0.len() >= m * k && b.0.len() >= k * n && c.len() >= m * n);
    // SAFETY: the assertion above bounds every index the kernel touches for
    // row-major or transposed views of the given buffers, and `c` does not
    // alias `a` or `b` because it is uniquely borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.0.as_ptr(),
            a.1,
            a.2,
            b.0.as_ptr(),
            b.1,
            b.2,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl<'p> Tape<'p> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, rows: usize, cols: usize, value: Cow<'p, [f64]>, op: Op, needs_grad: bool) -> Var {
        debug_assert_eq!(value.len(), rows * cols);
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            rows,
            cols,
            value,
            op,
            needs_grad,
        });
        Var(nodes.len() - 1)
    }

    /// Trainable leaf borrowing `tensor`.
    pub fn param(&self, tensor: &'p Tensor) -> Var {
        self.push(tensor.rows, tensor.cols, Cow::Borrowed(&tensor.data), Op::Leaf, true)
    }

    /// Leaf that owns its data; `requires_grad` decides whether gradients reach it.
    pub fn leaf(&self, tensor: Tensor, requires_grad: bool) -> Var {
        self.push(
            tensor.rows,
            tensor.cols,
            Cow::Owned(tensor.data),
            Op::Leaf,
            requires_grad,
        )
    }

    pub fn constant(&self, tensor: Tensor) -> Var {
        self.leaf(tensor, false)
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let nodes = self.nodes.borrow();
        (nodes[v.0].rows, nodes[v.0].cols)
    }

    pub fn value(&self, v: Var) -> Tensor {
        let nodes = self.nodes.borrow();
        let n = &nodes[v.0];
        Tensor {
            rows: n.rows,
            cols: n.cols,
            data: n.value.to_vec(),
        }
    }

    /// Runs `f` on the raw value without copying it.
    pub fn with_value<R>(&self, v: Var, f: impl FnOnce(&[f64]) -> R) -> R {
        f(&self.nodes.borrow()[v.0].value)
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.with_value(v, |d| d[0])
    }

    /// Accumulated gradient of a leaf, `None` if nothing reached it.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let grads = self.leaf_grads.borrow();
        let (rows, cols) = self.shape(v);
        grads.get(v.0).and_then(|g| g.as_ref()).map(|g| Tensor {
            rows,
            cols,
            data: g.clone(),
        })
    }

    pub fn zero_grad(&self) {
        self.leaf_grads.borrow_mut().clear();
    }

    fn needs(&self, vars: &[Var]) -> bool {
        let nodes = self.nodes.borrow();
        vars.iter().any(|v| nodes[v.0].needs_grad)
    }

    fn unary(&self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let (rows, cols, value) = {
            let nodes = self.nodes.borrow();
            let n = &nodes[a.0];
            (n.rows, n.cols, n.value.iter().map(|&x| f(x)).collect::<Vec<_>>())
        };
        let needs = self.needs(&[a]);
        self.push(rows, cols, Cow::Owned(value), op, needs)
    }

    fn binary_same(&self, name: &'static str, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        let (rows, cols, value) = {
            let nodes = self.nodes.borrow();
            let (x, y) = (&nodes[a.0], &nodes[b.0]);
            if (x.rows, x.cols) != (y.rows, y.cols) {
                return Err(shape_err(
                    name,
                    format!("{}x{} vs {}x{}", x.rows, x.cols, y.rows, y.cols),
                ));
            }
            let value: Vec<f64> = x.value.iter().zip(y.value.iter()).map(|(&p, &q)| f(p, q)).collect();
            (x.rows, x.cols, value)
        };
        let needs = self.needs(&[a, b]);
        Ok(self.push(rows, cols, Cow::Owned(value), op, needs))
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let (m, n, value) = {
            let nodes = self.nodes.borrow();
            let (x, y) = (&nodes[a.0], &nodes[b.0]);
            if x.cols != y.rows {
                return Err(shape_err(
                    "matmul",
                    format!("{}x{} · {}x{}", x.rows, x.cols, y.rows, y.cols),
                ));
            }
            let (m, k, n) = (x.rows, x.cols, y.cols);
            let mut out = vec![0.0; m * n];
            gemm(
                m,
                k,
                n,
                (&x.value, k as isize, 1),
                (&y.value, n as isize, 1),
                0.0,
                &mut out,
            );
            (m, n, out)
        };
        let needs = self.needs(&[a, b]);
        Ok(self.push(m, n, Cow::Owned(value), Op::MatMul(a.0, b.0), needs))
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        self.binary_same("add", a, b, Op::Add(a.0, b.0), |x, y| x + y)
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        self.binary_same("sub", a, b, Op::Sub(a.0, b.0), |x, y| x - y)
    }

    /// Elementwise product.
    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        self.binary_same("mul", a, b, Op::Mul(a.0, b.0), |x, y| x * y)
    }

    pub fn minimum(&self, a: Var, b: Var) -> Result<Var> {
        self.binary_same("minimum", a, b, Op::Minimum(a.0, b.0), |x, y| if y < x { y } else { x })
    }

    pub fn maximum(&self, a: Var, b: Var) -> Result<Var> {
        self.binary_same("maximum", a, b, Op::Maximum(a.0, b.0), |x, y| if y > x { y } else { x })
    }

    fn broadcast(
        &self,
        name: &'static str,
        a: Var,
        v: Var,
        along_rows: bool,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var> {
        let (rows, cols, value) = {
            let nodes = self.nodes.borrow();
            let (x, y) = (&nodes[a.0], &nodes[v.0]);
            let ok = if along_rows {
                y.rows == 1 && y.cols == x.cols
            } else {
                y.cols == 1 && y.rows == x.rows
            };
            if !ok {
                return Err(shape_err(
                    name,
                    format!("{}x{} with {}x{}", x.rows, x.cols, y.rows, y.cols),
                ));
            }
            let cols = x.cols;
            let value: Vec<f64> = x
                .value
                .iter()
                .enumerate()
                .map(|(i, &p)| {
                    let q = if along_rows {
                        y.value[i % cols]
                    } else {
                        y.value[i / cols.max(1)]
                    };
                    f(p, q)
                })
                .collect();
            (x.rows, x.cols, value)
        };
        let needs = self.needs(&[a, v]);
        Ok(self.push(rows, cols, Cow::Owned(value), op, needs))
    }

    /// Adds the `1×n` row `r` to every row of `a`.
    pub fn add_row(&self, a: Var, r: Var) -> Result<Var> {
        self.broadcast("add_row", a, r, true, Op::AddRow(a.0, r.0), |x, y| x + y)
    }

    /// Multiplies every row of `a` elementwise by the `1×n` row `r`.
    pub fn mul_row(&self, a: Var, r: Var) -> Result<Var> {
        self.broadcast("mul_row", a, r, true, Op::MulRow(a.0, r.0), |x, y| x * y)
    }

    /// Scales row `i` of `a` by entry `i` of the `m×1` column `c`.
    pub fn mul_col(&self, a: Var, c: Var) -> Result<Var> {
        self.broadcast("mul_col", a, c, false, Op::MulCol(a.0, c.0), |x, y| x * y)
    }

    pub fn scale(&self, a: Var, s: f64) -> Var {
        self.unary(a, Op::Scale(a.0, s), |x| x * s)
    }

    pub fn add_scalar(&self, a: Var, s: f64) -> Var {
        self.unary(a, Op::AddScalar(a.0), |x| x + s)
    }

    /// Concatenates along rows (`axis = 0`) or columns (`axis = 1`).
    pub fn concat(&self, parts: &[Var], axis: usize) -> Result<Var> {
        if parts.is_empty() {
            return Err(shape_err("concat", "no inputs".into()));
        }
        let (rows, cols, value) = {
            let nodes = self.nodes.borrow();
            let first = &nodes[parts[0].0];
            match axis {
                0 => {
                    let cols = first.cols;
                    let mut rows = 0;
                    let mut value = Vec::new();
                    for p in parts {
                        let n = &nodes[p.0];
                        if n.cols != cols {
                            return Err(shape_err("concat", format!("column count {} vs {cols}", n.cols)));
                        }
                        rows += n.rows;
                        value.extend_from_slice(&n.value);
                    }
                    (rows, cols, value)
                }
                1 => {
                    let rows = first.rows;
                    let mut cols = 0;
                    for p in parts {
                        let n = &nodes[p.0];
                        if n.rows != rows {
                            return Err(shape_err("concat", format!("row count {} vs {rows}", n.rows)));
                        }
                        cols += n.cols;
                    }
                    let mut value = Vec::with_capacity(rows * cols);
                    for r in 0..rows {
                        for p in parts {
                            let n = &nodes[p.0];
                            value.extend_from_slice(&n.value[r * n.cols..(r + 1) * n.cols]);
                        }
                    }
                    (rows, cols, value)
                }
                _ => return Err(shape_err("concat", format!("axis {axis} not in {{0, 1}}"))),
            }
        };
        let needs = self.needs(parts);
        Ok(self.push(
            rows,
            cols,
            Cow::Owned(value),
            Op::Concat {
                inputs: parts.iter().map(|p| p.0).collect(),
                axis,
            },
            needs,
        ))
    }

    pub fn slice_cols(&self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (rows, value) = {
            let nodes = self.nodes.borrow();
            let n = &nodes[a.0];
            if start + len > n.cols {
                return Err(index_err("slice_cols", format!("{start}+{len} > {}", n.cols)));
            }
            let mut value = Vec::with_capacity(n.rows * len);
            for r in 0..n.rows {
                value.extend_from_slice(&n.value[r * n.cols + start..r * n.cols + start + len]);
            }
            (n.rows, value)
        };
        let needs = self.needs(&[a]);
        Ok(self.push(rows, len, Cow::Owned(value), Op::SliceCols { a: a.0, start }, needs))
    }

    /// Row `i` of the result is row `index[i]` of `a`.
    pub fn gather_rows(&self, a: Var, index: Rc<[usize]>) -> Result<Var> {
        let (cols, value) = {
            let nodes = self.nodes.borrow();
            let n = &nodes[a.0];
            let mut value = Vec::with_capacity(index.len() * n.cols);
            for &i in index.iter() {
                if i >= n.rows {
                    return Err(index_err("gather_rows", format!("row {i} of {}", n.rows)));
                }
                value.extend_from_slice(&n.value[i * n.cols..(i + 1) * n.cols]);
            }
            (n.cols, value)
        };
        let needs = self.needs(&[a]);
        Ok(self.push(
            index.len(),
            cols,
            Cow::Owned(value),
            Op::GatherRows { a: a.0, index },
            needs,
        ))
    }

    fn check_segments(&self, name: &'static str, a: Var, segments: &[usize], count: usize) -> Result<(usize, usize)> {
        let (rows, cols) = self.shape(a);
        if segments.len() != rows {
            return Err(shape_err(
                name,
                format!("{} segment ids for {rows} rows", segments.len()),
            ));
        }
        if let Some(&bad) = segments.iter().find(|&&s| s >= count) {
            return Err(index_err(name, format!("segment {bad} of {count}")));
        }
        Ok((rows, cols))
    }

    /// `count×d` sums of the rows of `a` grouped by `segments`.
    pub fn segment_sum(&self, a: Var, segments: Rc<[usize]>, count: usize) -> Result<Var> {
        let (_, cols) = self.check_segments("segment_sum", a, &segments, count)?;
        let value = {
            let nodes = self.nodes.borrow();
            let src = &nodes[a.0].value;
            let mut out = vec![0.0; count * cols];
            for (r, &s) in segments.iter().enumerate() {
                let dst = &mut out[s * cols..(s + 1) * cols];
                for (d, x) in dst.iter_mut().zip(&src[r * cols..(r + 1) * cols]) {
                    *d += x;
                }
            }
            out
        };
        let needs = self.needs(&[a]);
        Ok(self.push(
            count,
            cols,
            Cow::Owned(value),
            Op::SegmentSum { a: a.0, segments },
            needs,
        ))
    }

    /// Column-wise softmax of the rows of `a` within each segment.
    pub fn segment_softmax(&self, a: Var, segments: Rc<[usize]>, count: usize) -> Result<Var> {
        let (rows, cols) = self.check_segments("segment_softmax", a, &segments, count)?;
        let value = {
            let nodes = self.nodes.borrow();
            let src = &nodes[a.0].value;
            let mut max = vec![f64::NEG_INFINITY; count * cols];
            for (r, &s) in segments.iter().enumerate() {
                for c in 0..cols {
                    let m = &mut max[s * cols + c];
                    *m = m.max(src[r * cols + c]);
                }
            }
            let mut out = vec![0.0; rows * cols];
            let mut sum = vec![0.0; count * cols];
            for (r, &s) in segments.iter().enumerate() {
                for c in 0..cols {
                    let e = (src[r * cols + c] - max[s * cols + c]).exp();
                    out[r * cols + c] = e;
                    sum[s * cols + c] += e;
                }
            }
            for (r, &s) in segments.iter().enumerate() {
                for c in 0..cols {
                    out[r * cols + c] /= sum[s * cols + c];
                }
            }
            out
        };
        let needs = self.needs(&[a]);
        Ok(self.push(
            rows,
            cols,
            Cow::Owned(value),
            Op::SegmentSoftmax {
                a: a.0,
                segments,
                count,
            },
            needs,
        ))
    }

    /// Column-wise maximum within each segment; every segment must be non-empty.
    pub fn segment_max(&self, a: Var, segments: Rc<[usize]>, count: usize) -> Result<Var> {
        let (_, cols) = self.check_segments("segment_max", a, &segments, count)?;
        let (value, argmax) = {
            let nodes = self.nodes.borrow();
            let src = &nodes[a.0].value;
            let mut value = vec![f64::NEG_INFINITY; count * cols];
            let mut argmax = vec![usize::MAX; count * cols];
            for (r, &s) in segments.iter().enumerate() {
                for c in 0..cols {
                    let x = src[r * cols + c];
                    let slot = s * cols + c;
                    if argmax[slot] == usize::MAX || x > value[slot] {
                        value[slot] = x;
                        argmax[slot] = r;
                    }
                }
            }
            if cols > 0 {
                if let Some(empty) = (0..count).find(|&s| argmax[s * cols] == usize::MAX) {
                    return Err(index_err("segment_max", format!("segment {empty} is empty")));
                }
            }
            (value, argmax)
        };
        let needs = self.needs(&[a]);
        Ok(self.push(count, cols, Cow::Owned(value), Op::SegmentMax { a: a.0, argmax }, needs))
    }

    pub fn leaky_relu(&self, a: Var, slope: f64) -> Var {
        self.unary(a, Op::LeakyRelu(a.0, slope), |x| if x > 0.0 { x } else { slope * x })
    }

    pub fn relu(&self, a: Var) -> Var {
        self.unary(a, Op::Relu(a.0), |x| x.max(0.0))
    }

    pub fn tanh(&self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a.0), f64::tanh)
    }

    pub fn exp(&self, a: Var) -> Var {
        self.unary(a, Op::Exp(a.0), f64::exp)
    }

    pub fn log(&self, a: Var) -> Var {
        self.unary(a, Op::Log(a.0), f64::ln)
    }

    pub fn square(&self, a: Var) -> Var {
        self.unary(a, Op::Square(a.0), |x| x * x)
    }

    /// Elementwise clamp; the gradient passes only where `lo <= x <= hi`.
    pub fn clamp(&self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, Op::Clamp { a: a.0, lo, hi }, |x| x.clamp(lo, hi))
    }

    /// Normalizes each row to zero mean and unit variance (no affine part).
    pub fn layer_norm(&self, a: Var, eps: f64) -> Var {
        let (rows, cols, value, inv_std) = {
            let nodes = self.nodes.borrow();
            let n = &nodes[a.0];
            let mut value = Vec::with_capacity(n.value.len());
            let mut inv_std = Vec::with_capacity(n.rows);
            for r in 0..n.rows {
                let row = &n.value[r * n.cols..(r + 1) * n.cols];
                let mean = row.iter().sum::<f64>() / n.cols as f64;
                let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n.cols as f64;
                let inv = 1.0 / (var + eps).sqrt();
                value.extend(row.iter().map(|x| (x - mean) * inv));
                inv_std.push(inv);
            }
            (n.rows, n.cols, value, inv_std)
        };
        let needs = self.needs(&[a]);
        self.push(rows, cols, Cow::Owned(value), Op::LayerNorm { a: a.0, inv_std }, needs)
    }

    /// `1×n` column means.
    pub fn mean_rows(&self, a: Var) -> Var {
        let (cols, value) = {
            let nodes = self.nodes.borrow();
            let n = &nodes[a.0];
            let mut out = vec![0.0; n.cols];
            for r in 0..n.rows {
                for (o, x) in out.iter_mut().zip(&n.value[r * n.cols..(r + 1) * n.cols]) {
                    *o += x;
                }
            }
            let inv = 1.0 / n.rows as f64;
            out.iter_mut().for_each(|o| *o *= inv);
            (n.cols, out)
        };
        let needs = self.needs(&[a]);
        self.push(1, cols, Cow::Owned(value), Op::MeanRows(a.0), needs)
    }

    /// `1×n` column maxima, gradient to the first maximal row.
    pub fn max_rows(&self, a: Var) -> Result<Var> {
        let (rows, _) = self.shape(a);
        if rows == 0 {
            return Err(shape_err("max_rows", "no rows".into()));
        }
        self.segment_max(a, vec![0; rows].into(), 1)
    }

    pub fn sum_all(&self, a: Var) -> Var {
        let value = self.with_value(a, |d| d.iter().sum::<f64>());
        let needs = self.needs(&[a]);
        self.push(1, 1, Cow::Owned(vec![value]), Op::SumAll(a.0), needs)
    }

    pub fn mean_all(&self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let s = self.sum_all(a);
        self.scale(s, 1.0 / (r * c) as f64)
    }

    /// `m×1` row sums.
    pub fn row_sum(&self, a: Var) -> Var {
        let (rows, value) = {
            let nodes = self.nodes.borrow();
            let n = &nodes[a.0];
            let value = (0..n.rows)
                .map(|r| n.value[r * n.cols..(r + 1) * n.cols].iter().sum())
                .collect();
            (n.rows, value)
        };
        let needs = self.needs(&[a]);
        self.push(rows, 1, Cow::Owned(value), Op::RowSum(a.0), needs)
    }

    pub fn log_softmax_rows(&self, a: Var) -> Var {
        let (rows, cols, value) = {
            let nodes = self.nodes.borrow();
            let n = &nodes[a.0];
            let mut value = Vec::with_capacity(n.value.len());
            for r in 0..n.rows {
                let row = &n.value[r * n.cols..(r + 1) * n.cols];
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
                value.extend(row.iter().map(|x| x - lse));
            }
            (n.rows, n.cols, value)
        };
        let needs = self.needs(&[a]);
        self.push(rows, cols, Cow::Owned(value), Op::LogSoftmaxRows(a.0), needs)
    }

    /// `m×1` column holding `a[i, index[i]]`.
    pub fn select_per_row(&self, a: Var, index: Rc<[usize]>) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let n = &nodes[a.0];
            if index.len() != n.rows {
                return Err(shape_err(
                    "select_per_row",
                    format!("{} indices for {} rows", index.len(), n.rows),
                ));
            }
            let mut value = Vec::with_capacity(n.rows);
            for (r, &c) in index.iter().enumerate() {
                if c >= n.cols {
                    return Err(index_err("select_per_row", format!("column {c} of {}", n.cols)));
                }
                value.push(n.value[r * n.cols + c]);
            }
            value
        };
        let rows = index.len();
        let needs = self.needs(&[a]);
        Ok(self.push(rows, 1, Cow::Owned(value), Op::SelectPerRow { a: a.0, index }, needs))
    }

    /// Sums each of `blocks` equal-width column groups: `m×(blocks·d) → m×blocks`.
    pub fn block_sum_cols(&self, a: Var, blocks: usize) -> Result<Var> {
        let (rows, cols) = self.shape(a);
        if blocks == 0 || cols % blocks != 0 {
            return Err(shape_err(
                "block_sum_cols",
                format!("{cols} columns into {blocks} blocks"),
            ));
        }
        let width = cols / blocks;
        let value = self.with_value(a, |d| {
            let mut out = Vec::with_capacity(rows * blocks);
            for r in 0..rows {
                for b in 0..blocks {
                    out.push(d[r * cols + b * width..r * cols + (b + 1) * width].iter().sum());
                }
            }
            out
        });
        let needs = self.needs(&[a]);
        Ok(self.push(
            rows,
            blocks,
            Cow::Owned(value),
            Op::BlockSumCols { a: a.0, blocks },
            needs,
        ))
    }

    /// Repeats every column `times` times in place: `m×k → m×(k·times)`.
    pub fn repeat_cols(&self, a: Var, times: usize) -> Var {
        let (rows, cols) = self.shape(a);
        let value = self.with_value(a, |d| {
            let mut out = Vec::with_capacity(rows * cols * times);
            for x in d {
                out.extend(std::iter::repeat_n(*x, times));
            }
            out
        });
        let needs = self.needs(&[a]);
        self.push(
            rows,
            cols * times,
            Cow::Owned(value),
            Op::RepeatCols { a: a.0, times },
            needs,
        )
    }

    /// Weighted message passing: for every edge `e` and head `k`, adds
    /// `weights[e, k] · values[src[e], k-th block]` into row `dst[e]` of a
    /// `count×(K·d)` output. Equivalent to gathering, scaling by repeated
    /// weights and segment-summing, without the edge-sized intermediates.
    pub fn attend(&self, values: Var, weights: Var, src: Rc<[usize]>, dst: Rc<[usize]>, count: usize) -> Result<Var> {
        let (n, cols) = self.shape(values);
        let (edges, heads) = self.shape(weights);
        if src.len() != edges || dst.len() != edges {
            return Err(shape_err(
                "attend",
                format!(
                    "{edges} weight rows for {} sources and {} destinations",
                    src.len(),
                    dst.len()
                ),
            ));
        }
        if heads == 0 || cols % heads != 0 {
            return Err(shape_err("attend", format!("{cols} value columns for {heads} heads")));
        }
        if let Some(&bad) = src.iter().find(|&&s| s >= n) {
            return Err(index_err("attend", format!("source {bad} of {n}")));
        }
        if let Some(&bad) = dst.iter().find(|&&d| d >= count) {
            return Err(index_err("attend", format!("destination {bad} of {count}")));
        }
        let width = cols / heads;
        let value = {
            let nodes = self.nodes.borrow();
            let (v, w) = (&nodes[values.0].value, &nodes[weights.0].value);
            let mut out = vec![0.0; count * cols];
            for e in 0..edges {
                let (s, d) = (src[e], dst[e]);
                for k in 0..heads {
                    let a = w[e * heads + k];
                    let from = &v[s * cols + k * width..s * cols + (k + 1) * width];
                    let to = &mut out[d * cols + k * width..d * cols + (k + 1) * width];
                    for (o, x) in to.iter_mut().zip(from) {
                        *o += a * x;
                    }
                }
            }
            out
        };
        let needs = self.needs(&[values, weights]);
        let op = Op::Attend {
            values: values.0,
            weights: weights.0,
            src,
            dst,
        };
        Ok(self.push(count, cols, Cow::Owned(value), op, needs))
    }
}
