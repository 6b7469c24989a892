use super::tape::{gemm, Node, Op, Tape};
use super::{AutodiffError, Result, Var};

fn slot<'g>(grads: &'g mut [Option<Vec<f64>>], nodes: &[Node<'_>], i: usize) -> &'g mut Vec<f64> {
    grads[i].get_or_insert_with(|| vec![0.0; nodes[i].value.len()])
}

fn add_into(grads: &mut [Option<Vec<f64>>], nodes: &[Node<'_>], i: usize, f: impl Fn(usize) -> f64) {
    if !nodes[i].needs_grad {
        return;
    }
    let g = slot(grads, nodes, i);
    for (k, gk) in g.iter_mut().enumerate() {
        *gk += f(k);
    }
}

impl Tape<'_> {
    /// Back-propagates from the scalar `out`, adding `d out / d leaf` into
    /// every leaf that requires a gradient.
    pub fn backward(&self, out: Var) -> Result<()> {
        let nodes = self.nodes.borrow();
        let root = &nodes[out.0];
        if root.rows != 1 || root.cols != 1 {
            return Err(AutodiffError::NonScalar {
                rows: root.rows,
                cols: root.cols,
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; out.0 + 1];
        grads[out.0] = Some(vec![1.0]);
        let mut leaf_grads = self.leaf_grads.borrow_mut();
        if leaf_grads.len() < nodes.len() {
            leaf_grads.resize(nodes.len(), None);
        }

        for i in (0..=out.0).rev() {
            let node = &nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let y = &node.value;
            let cols = node.cols;
            match &node.op {
                Op::Leaf => {
                    let acc = leaf_grads[i].get_or_insert_with(|| vec![0.0; g.len()]);
                    for (a, x) in acc.iter_mut().zip(&g) {
                        *a += x;
                    }
                }
                &Op::MatMul(a, b) => {
                    let (m, k, n) = (nodes[a].rows, nodes[a].cols, nodes[b].cols);
                    if nodes[a].needs_grad {
                        let bv = &nodes[b].value;
                        let ga = slot(&mut grads, &nodes, a);
                        gemm(m, n, k, (&g, n as isize, 1), (bv, 1, n as isize), 1.0, ga);
                    }
                    if nodes[b].needs_grad {
                        let av = &nodes[a].value;
                        let gb = slot(&mut grads, &nodes, b);
                        gemm(k, m, n, (av, 1, k as isize), (&g, n as isize, 1), 1.0, gb);
                    }
                }
                &Op::Add(a, b) => {
                    add_into(&mut grads, &nodes, a, |k| g[k]);
                    add_into(&mut grads, &nodes, b, |k| g[k]);
                }
                &Op::Sub(a, b) => {
                    add_into(&mut grads, &nodes, a, |k| g[k]);
                    add_into(&mut grads, &nodes, b, |k| -g[k]);
                }
                &Op::Mul(a, b) => {
                    let (av, bv) = (&nodes[a].value, &nodes[b].value);
                    add_into(&mut grads, &nodes, a, |k| g[k] * bv[k]);
                    add_into(&mut grads, &nodes, b, |k| g[k] * av[k]);
                }
                &Op::Minimum(a, b) | &Op::Maximum(a, b) => {
                    // Ties route to the first operand.
                    let (av, bv) = (&nodes[a].value, &nodes[b].value);
                    let takes_b = |k: usize| match node.op {
                        Op::Minimum(..) => bv[k] < av[k],
                        _ => bv[k] > av[k],
                    };
                    add_into(&mut grads, &nodes, a, |k| if takes_b(k) { 0.0 } else { g[k] });
                    add_into(&mut grads, &nodes, b, |k| if takes_b(k) { g[k] } else { 0.0 });
                }
                &Op::AddRow(a, r) => {
                    add_into(&mut grads, &nodes, a, |k| g[k]);
                    if nodes[r].needs_grad {
                        let gr = slot(&mut grads, &nodes, r);
                        for (k, x) in g.iter().enumerate() {
                            gr[k % cols] += x;
                        }
                    }
                }
                &Op::MulRow(a, r) => {
                    let (av, rv) = (&nodes[a].value, &nodes[r].value);
                    add_into(&mut grads, &nodes, a, |k| g[k] * rv[k % cols]);
                    if nodes[r].needs_grad {
                        let gr = slot(&mut grads, &nodes, r);
                        for (k, x) in g.iter().enumerate() {
                            gr[k % cols] += x * av[k];
                        }
                    }
                }
                &Op::MulCol(a, c) => {
                    let (av, cv) = (&nodes[a].value, &nodes[c].value);
                    add_into(&mut grads, &nodes, a, |k| g[k] * cv[k / cols]);
                    if nodes[c].needs_grad {
                        let gc = slot(&mut grads, &nodes, c);
                        for (k, x) in g.iter().enumerate() {
                            gc[k / cols] += x * av[k];
                        }
                    }
                }
                &Op::Scale(a, s) => add_into(&mut grads, &nodes, a, |k| g[k] * s),
                &Op::AddScalar(a) => add_into(&mut grads, &nodes, a, |k| g[k]),
                Op::Concat { inputs, axis } => {
                    let mut offset = 0;
                    for &p in inputs {
                        let (pr, pc) = (nodes[p].rows, nodes[p].cols);
                        if *axis == 0 {
                            add_into(&mut grads, &nodes, p, |k| g[offset + k]);
                            offset += pr * pc;
                        } else {
                            add_into(&mut grads, &nodes, p, |k| g[(k / pc) * cols + offset + k % pc]);
                            offset += pc;
                        }
                    }
                }
                &Op::SliceCols { a, start } => {
                    let src_cols = nodes[a].cols;
                    if nodes[a].needs_grad {
                        let ga = slot(&mut grads, &nodes, a);
                        for (k, x) in g.iter().enumerate() {
                            ga[(k / cols) * src_cols + start + k % cols] += x;
                        }
                    }
                }
                Op::GatherRows { a, index } => {
                    if nodes[*a].needs_grad {
                        let ga = slot(&mut grads, &nodes, *a);
                        for (r, &src) in index.iter().enumerate() {
                            for c in 0..cols {
                                ga[src * cols + c] += g[r * cols + c];
                            }
                        }
                    }
                }
                Op::SegmentSum { a, segments } => {
                    add_into(&mut grads, &nodes, *a, |k| g[segments[k / cols] * cols + k % cols]);
                }
                Op::SegmentSoftmax { a, segments, count } => {
                    let mut dot = vec![0.0; count * cols];
                    for (r, &s) in segments.iter().enumerate() {
                        for c in 0..cols {
                            dot[s * cols + c] += y[r * cols + c] * g[r * cols + c];
                        }
                    }
                    add_into(&mut grads, &nodes, *a, |k| {
                        y[k] * (g[k] - dot[segments[k / cols] * cols + k % cols])
                    });
                }
                Op::SegmentMax { a, argmax } => {
                    if nodes[*a].needs_grad {
                        let ga = slot(&mut grads, &nodes, *a);
                        for (k, &src) in argmax.iter().enumerate() {
                            ga[src * cols + k % cols] += g[k];
                        }
                    }
                }
                &Op::LeakyRelu(a, slope) => {
                    let av = &nodes[a].value;
                    add_into(&mut grads, &nodes, a, |k| if av[k] > 0.0 { g[k] } else { slope * g[k] });
                }
                &Op::Relu(a) => {
                    let av = &nodes[a].value;
                    add_into(&mut grads, &nodes, a, |k| if av[k] > 0.0 { g[k] } else { 0.0 });
                }
                &Op::Tanh(a) => add_into(&mut grads, &nodes, a, |k| g[k] * (1.0 - y[k] * y[k])),
                &Op::Exp(a) => add_into(&mut grads, &nodes, a, |k| g[k] * y[k]),
                &Op::Log(a) => {
                    let av = &nodes[a].value;
                    add_into(&mut grads, &nodes, a, |k| g[k] / av[k]);
                }
                &Op::Square(a) => {
                    let av = &nodes[a].value;
                    add_into(&mut grads, &nodes, a, |k| 2.0 * av[k] * g[k]);
                }
                &Op::Clamp { a, lo, hi } => {
                    let av = &nodes[a].value;
                    add_into(&mut grads, &nodes, a, |k| {
                        if av[k] >= lo && av[k] <= hi {
                            g[k]
                        } else {
                            0.0
                        }
                    });
                }
                Op::LayerNorm { a, inv_std } => {
                    let rows = node.rows;
                    let mut dx = vec![0.0; g.len()];
                    for r in 0..rows {
                        let gy = &g[r * cols..(r + 1) * cols];
                        let xh = &y[r * cols..(r + 1) * cols];
                        let mean_g = gy.iter().sum::<f64>() / cols as f64;
                        let mean_gx = gy.iter().zip(xh).map(|(p, q)| p * q).sum::<f64>() / cols as f64;
                        for c in 0..cols {
                            dx[r * cols + c] = inv_std[r] * (gy[c] - mean_g - xh[c] * mean_gx);
                        }
                    }
                    add_into(&mut grads, &nodes, *a, |k| dx[k]);
                }
                &Op::MeanRows(a) => {
                    let inv = 1.0 / nodes[a].rows as f64;
                    add_into(&mut grads, &nodes, a, |k| g[k % cols] * inv);
                }
                &Op::SumAll(a) => add_into(&mut grads, &nodes, a, |_| g[0]),
                &Op::RowSum(a) => {
                    let src_cols = nodes[a].cols;
                    add_into(&mut grads, &nodes, a, |k| g[k / src_cols]);
                }
                &Op::LogSoftmaxRows(a) => {
                    let sums: Vec<f64> = (0..node.rows)
                        .map(|r| g[r * cols..(r + 1) * cols].iter().sum())
                        .collect();
                    add_into(&mut grads, &nodes, a, |k| g[k] - y[k].exp() * sums[k / cols]);
                }
                Op::SelectPerRow { a, index } => {
                    if nodes[*a].needs_grad {
                        let src_cols = nodes[*a].cols;
                        let ga = slot(&mut grads, &nodes, *a);
                        for (r, &c) in index.iter().enumerate() {
                            ga[r * src_cols + c] += g[r];
                        }
                    }
                }
                &Op::BlockSumCols { a, blocks } => {
                    let src_cols = nodes[a].cols;
                    let width = src_cols / blocks;
                    add_into(&mut grads, &nodes, a, |k| {
                        g[(k / src_cols) * blocks + (k % src_cols) / width]
                    });
                }
                &Op::RepeatCols { a, times } => {
                    if nodes[a].needs_grad {
                        let ga = slot(&mut grads, &nodes, a);
                        for (k, x) in g.iter().enumerate() {
                            ga[k / times] += x;
                        }
                    }
                }
                Op::Attend {
                    values,
                    weights,
                    src,
                    dst,
                } => {
                    let (values, weights) = (*values, *weights);
                    let heads = nodes[weights].cols;
                    let width = cols / heads;
                    let (v, w) = (&nodes[values].value, &nodes[weights].value);
                    if nodes[values].needs_grad {
                        let gv = slot(&mut grads, &nodes, values);
                        for (e, (&s, &d)) in src.iter().zip(dst.iter()).enumerate() {
                            for k in 0..heads {
                                let a = w[e * heads + k];
                                let from = &g[d * cols + k * width..d * cols + (k + 1) * width];
                                let to = &mut gv[s * cols + k * width..s * cols + (k + 1) * width];
                                for (o, x) in to.iter_mut().zip(from) {
                                    *o += a * x;
                                }
                            }
                        }
                    }
                    if nodes[weights].needs_grad {
                        let gw = slot(&mut grads, &nodes, weights);
                        for (e, (&s, &d)) in src.iter().zip(dst.iter()).enumerate() {
                            for k in 0..heads {
                                let gd = &g[d * cols + k * width..d * cols + (k + 1) * width];
                                let vs = &v[s * cols + k * width..s * cols + (k + 1) * width];
                                gw[e * heads + k] += gd.iter().zip(vs).map(|(x, y)| x * y).sum::<f64>();
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
