use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{kmeans, DEFAULT_MAX_ITER};
use crate::error::{LdlError, Result};
use crate::numeric::ceil_count;

/// Disjoint grouping of cluster centers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockStructure {
    pub block_of: Vec<usize>,
    pub block_count: usize,
}

impl BlockStructure {
    pub fn single(k: usize) -> Self {
        Self {
            block_of: vec![0; k],
            block_count: usize::from(k > 0),
        }
    }

    /// Center indices of each block, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.block_count];
        for (c, &b) in self.block_of.iter().enumerate() {
            out[b].push(c);
        }
        out
    }
}

/// Groups `centers` into `ceil(k / target_size)` blocks with a secondary
/// k-means. `None`, or `k <= target_size`, yields one block.
pub fn form_blocks(
    centers: ArrayView2<f64>,
    target_size: Option<usize>,
    seed: u64,
) -> Result<BlockStructure> {
    let k = centers.nrows();
    if k == 0 {
        return Ok(BlockStructure::single(0));
    }
    let target = match target_size {
        None => return Ok(BlockStructure::single(k)),
        Some(0) => {
            return Err(LdlError::InvalidArgument(
                "target block size must be positive".into(),
            ))
        }
        Some(t) => t,
    };
    if k <= target {
        return Ok(BlockStructure::single(k));
    }
    let block_count = ceil_count(k as f64 / target as f64);
    let r = kmeans(centers, block_count, seed, DEFAULT_MAX_ITER)?;
    Ok(BlockStructure {
        block_of: r.assignment,
        block_count,
    })
}
