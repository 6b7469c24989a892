//! Multi-head graph attention with edge features.
//!
//! For head `k`, edge `j → i` scores `aₖᵀ[Wₖhᵢ ‖ Wₖhⱼ ‖ W_eₖ eᵢⱼ]`. The three
//! parts of `aₖ` are applied separately (destination, source, edge), which is
//! the same linear form evaluated without materialising the concatenation.

use rand::Rng;

use crate::autodiff::{Result, Tape, Tensor, Var};
use crate::graph::EDGE_FEATURES;

use super::batch::GraphBatch;
use super::params::{glorot, Bound, ParamId, ParamStore};

pub const LEAKY_SLOPE: f64 = 0.2;
pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadCombine {
    Concat,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AttentionOptions {
    /// Replace learned attention with `1/deg` weights.
    pub uniform: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatLayer {
    pub heads: usize,
    pub head_dim: usize,
    pub combine: HeadCombine,
    pub w: ParamId,
    pub w_e: ParamId,
    pub att_dst: ParamId,
    pub att_src: ParamId,
    pub att_edge: ParamId,
    pub gain: ParamId,
    pub bias: ParamId,
}

/// Layer output plus the `E×K` attention coefficients.
pub struct GatOutput {
    pub h: Var,
    pub alpha: Var,
}

impl GatLayer {
    /// Registers a layer mapping `d_in` to `d_out` under `prefix`.
    ///
    /// Concatenating layers use `d_out / heads` per head; averaging layers use
    /// `d_out` per head.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        prefix: &str,
        d_in: usize,
        d_out: usize,
        heads: usize,
        combine: HeadCombine,
    ) -> Self {
        let head_dim = match combine {
            HeadCombine::Concat => {
                assert_eq!(
                    d_out % heads,
                    0,
                    "{prefix}: width {d_out} not divisible by {heads} heads"
                );
                d_out / heads
            }
            HeadCombine::Mean => d_out,
        };
        let wide = heads * head_dim;
        let w = store.add(format!("{prefix}.w"), glorot(rng, d_in, wide, d_in, head_dim, 1.0));
        let w_e = store.add(
            format!("{prefix}.w_e"),
            glorot(rng, EDGE_FEATURES, wide, EDGE_FEATURES, head_dim, 1.0),
        );
        let mut att = |part: &str| {
            let t = glorot(rng, 1, wide, 3 * head_dim, 1, 1.0);
            store.add(format!("{prefix}.att_{part}"), t)
        };
        let att_dst = att("dst");
        let att_src = att("src");
        let att_edge = att("edge");
        let gain = store.add(format!("{prefix}.ln_gain"), Tensor::filled(1, d_out, 1.0));
        let bias = store.add(format!("{prefix}.ln_bias"), Tensor::zeros(1, d_out));
        Self {
            heads,
            head_dim,
            combine,
            w,
            w_e,
            att_dst,
            att_src,
            att_edge,
            gain,
            bias,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self.combine {
            HeadCombine::Concat => self.heads * self.head_dim,
            HeadCombine::Mean => self.head_dim,
        }
    }

    pub fn forward(
        &self,
        tape: &Tape<'_>,
        p: &Bound,
        h: Var,
        batch: &GraphBatch,
        e: Var,
        options: AttentionOptions,
    ) -> Result<GatOutput> {
        let n = batch.node_count();
        let k = self.heads;
        let wh = tape.matmul(h, p.var(self.w))?;

        let alpha = if options.uniform {
            let zeros = tape.constant(Tensor::zeros(batch.src.len(), k));
            tape.segment_softmax(zeros, batch.dst.clone(), n)?
        } else {
            let s_dst = tape.block_sum_cols(tape.mul_row(wh, p.var(self.att_dst))?, k)?;
            let s_src = tape.block_sum_cols(tape.mul_row(wh, p.var(self.att_src))?, k)?;
            let edge_proj = tape.block_sum_cols(tape.mul_row(p.var(self.w_e), p.var(self.att_edge))?, k)?;
            let s_edge = tape.matmul(e, edge_proj)?;
            let score = tape.add(
                tape.add(
                    tape.gather_rows(s_dst, batch.dst.clone())?,
                    tape.gather_rows(s_src, batch.src.clone())?,
                )?,
                s_edge,
            )?;
            let score = tape.leaky_relu(score, LEAKY_SLOPE);
            tape.segment_softmax(score, batch.dst.clone(), n)?
        };

        let mut m = tape.attend(wh, alpha, batch.src.clone(), batch.dst.clone(), n)?;
        if self.combine == HeadCombine::Mean && k > 1 {
            let mut acc = tape.slice_cols(m, 0, self.head_dim)?;
            for head in 1..k {
                acc = tape.add(acc, tape.slice_cols(m, head * self.head_dim, self.head_dim)?)?;
            }
            m = tape.scale(acc, 1.0 / k as f64);
        }
        let out = tape.layer_norm(tape.relu(m), LAYER_NORM_EPS);
        let out = tape.add_row(tape.mul_row(out, p.var(self.gain))?, p.var(self.bias))?;
        Ok(GatOutput { h: out, alpha })
    }
}
