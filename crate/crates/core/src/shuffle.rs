//! Shufflings: order-preserving interleavings of several blocks.
//!
//! A shuffling is stored as the block index of every output position; the order
//! inside each block is implied by occurrence order.

use std::ops::Range;

use num_bigint::BigUint;
use num_traits::One;
use thiserror::Error;

/// Largest total size accepted by [`enumerate`].
pub const ENUMERATE_LIMIT: usize = 14;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ShuffleError {
    #[error("assignment does not match block sizes {0:?}")]
    BadAssignment(Vec<usize>),
    #[error("refusing to enumerate shufflings of total size {0} (limit {ENUMERATE_LIMIT})")]
    TooLarge(usize),
    #[error("block {0} out of range")]
    BadPosition(usize),
    #[error("inner shuffling has length {inner}, block has size {block}")]
    LengthMismatch { inner: usize, block: usize },
    #[error("grouping {0:?} is not a block range")]
    BadGrouping(Range<usize>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Shuffling {
    blocks: Vec<usize>,
    assignment: Vec<usize>,
}

impl Shuffling {
    pub fn new(blocks: Vec<usize>, assignment: Vec<usize>) -> Result<Self, ShuffleError> {
        let mut seen = vec![0usize; blocks.len()];
        for &a in &assignment {
            match seen.get_mut(a) {
                Some(c) => *c += 1,
                None => return Err(ShuffleError::BadAssignment(blocks)),
            }
        }
        if seen != blocks {
            return Err(ShuffleError::BadAssignment(blocks));
        }
        Ok(Shuffling { blocks, assignment })
    }

    /// The trivial shuffling of a single block.
    pub fn identity(n: usize) -> Self {
        Shuffling {
            blocks: vec![n],
            assignment: vec![0; n],
        }
    }

    /// Blocks laid out one after another.
    pub fn concatenation(blocks: &[usize]) -> Self {
        let assignment = blocks
            .iter()
            .enumerate()
            .flat_map(|(i, &b)| std::iter::repeat_n(i, b))
            .collect();
        Shuffling {
            blocks: blocks.to_vec(),
            assignment,
        }
    }

    pub fn blocks(&self) -> &[usize] {
        &self.blocks
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    /// For every output position, the pair (block, offset inside the block).
    pub fn sources(&self) -> Vec<(usize, usize)> {
        let mut next = vec![0usize; self.blocks.len()];
        self.assignment
            .iter()
            .map(|&b| {
                next[b] += 1;
                (b, next[b] - 1)
            })
            .collect()
    }

    /// Substitutes `inner` into block `position`.
    pub fn compose(&self, position: usize, inner: &Shuffling) -> Result<Shuffling, ShuffleError> {
        let block = *self.blocks.get(position).ok_or(ShuffleError::BadPosition(position))?;
        if block != inner.len() {
            return Err(ShuffleError::LengthMismatch {
                inner: inner.len(),
                block,
            });
        }
        let shift = inner.blocks.len();
        let mut blocks = self.blocks[..position].to_vec();
        blocks.extend_from_slice(&inner.blocks);
        blocks.extend_from_slice(&self.blocks[position + 1..]);
        let mut it = inner.assignment.iter();
        let assignment = self
            .assignment
            .iter()
            .map(|&a| {
                if a < position {
                    a
                } else if a == position {
                    position + it.next().unwrap()
                } else {
                    a + shift - 1
                }
            })
            .collect();
        Ok(Shuffling { blocks, assignment })
    }

    /// Splits off the contiguous block range `group`: `outer.compose(group.start, &inner) == self`.
    pub fn factor(&self, group: Range<usize>) -> Result<(Shuffling, Shuffling), ShuffleError> {
        if group.start > group.end || group.end > self.blocks.len() || group.is_empty() {
            return Err(ShuffleError::BadGrouping(group));
        }
        let inner = Shuffling {
            blocks: self.blocks[group.clone()].to_vec(),
            assignment: self
                .assignment
                .iter()
                .filter(|a| group.contains(a))
                .map(|a| a - group.start)
                .collect(),
        };
        let width = group.end - group.start;
        let mut blocks = self.blocks[..group.start].to_vec();
        blocks.push(inner.len());
        blocks.extend_from_slice(&self.blocks[group.end..]);
        let assignment = self
            .assignment
            .iter()
            .map(|&a| {
                if a < group.start {
                    a
                } else if a < group.end {
                    group.start
                } else {
                    a + 1 - width
                }
            })
            .collect();
        Ok((Shuffling { blocks, assignment }, inner))
    }
}

/// The multinomial coefficient `(Σ p)! / Π p!`.
pub fn count(blocks: &[usize]) -> BigUint {
    // Product of binomials avoids large intermediate factorials.
    let mut total = 0usize;
    let mut acc = BigUint::one();
    for &b in blocks {
        for i in 1..=b {
            acc = acc * BigUint::from(total + i) / BigUint::from(i);
        }
        total += b;
    }
    acc
}

/// Every shuffling of the given blocks, lexicographic by assignment.
pub fn enumerate(blocks: &[usize]) -> Result<Vec<Shuffling>, ShuffleError> {
    let total: usize = blocks.iter().sum();
    if total > ENUMERATE_LIMIT {
        return Err(ShuffleError::TooLarge(total));
    }
    let mut out = vec![];
    let mut left = blocks.to_vec();
    let mut prefix = Vec::with_capacity(total);
    fn go(left: &mut [usize], prefix: &mut Vec<usize>, total: usize, blocks: &[usize], out: &mut Vec<Shuffling>) {
        if prefix.len() == total {
            out.push(Shuffling {
                blocks: blocks.to_vec(),
                assignment: prefix.clone(),
            });
            return;
        }
        for b in 0..left.len() {
            if left[b] > 0 {
                left[b] -= 1;
                prefix.push(b);
                go(left, prefix, total, blocks, out);
                prefix.pop();
                left[b] += 1;
            }
        }
    }
    go(&mut left, &mut prefix, total, blocks, &mut out);
    Ok(out)
}
