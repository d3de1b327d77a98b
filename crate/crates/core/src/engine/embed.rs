//! Embedding of the cube C_{2^{k-l}} into disjoint dyadic blocks of I_{2^k}.

use crate::error::{Error, Result};
use crate::indexing::{dyadic_blocks, visit_cube, BlockRange};
use crate::model::Kernel;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockEmbedding {
    pub k: u32,
    pub l: u32,
    pub d: usize,
    pub blocks: Vec<BlockRange>,
}

impl BlockEmbedding {
    /// Side length 2^{k-l} of the embedded cube.
    pub fn side(&self) -> usize {
        1usize << (self.k - self.l)
    }

    /// (j_1, …, j_d) ↦ (j_1, j_2 + w, …, j_d + (d-1)w) with w = 2^{k-l}.
    pub fn map(&self, j: &[usize]) -> Vec<usize> {
        let w = self.side();
        j.iter().enumerate().map(|(m, &v)| v + m * w).collect()
    }
}

pub fn decoupled_block_embed(k: u32, l: u32, d: usize) -> Result<BlockEmbedding> {
    if k <= l {
        return Err(Error::InvalidArgument(format!("need k > l, got k={k}, l={l}")));
    }
    let blocks = dyadic_blocks(k, l, d)?;
    Ok(BlockEmbedding { k, l, d, blocks })
}

/// Σ_{j ∈ C_{2^{k-l}}} h²(X_{embed(j)}) for one array X of length ≥ d·2^{k-l}.
pub fn blocked_sum_of_squares(kernel: &dyn Kernel, xs: &[f64], embed: &BlockEmbedding) -> Result<f64> {
    if kernel.arity() != embed.d {
        return Err(Error::ArityMismatch { expected: embed.d, found: kernel.arity() });
    }
    let need = embed.d * embed.side();
    if xs.len() < need {
        return Err(Error::InvalidArgument(format!("need {need} samples, got {}", xs.len())));
    }
    let mut point = vec![0.0; embed.d];
    let mut total = 0.0;
    visit_cube(embed.side(), embed.d, |j| {
        for (r, i) in embed.map(j).into_iter().enumerate() {
            point[r] = xs[i - 1];
        }
        total += kernel.eval(&point).powi(2);
        true
    });
    Ok(total)
}
