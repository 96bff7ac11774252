//! Binary Huffman tree over the vocabulary, used by hierarchical softmax.
//!
//! Inner nodes are numbered `0..V-1` in creation order and index the rows of
//! the inner-unit output matrix. Each word's [`PathSpec`] lists the inner
//! nodes from the root down to (but excluding) its leaf, with one direction
//! bit per node: `true` means the next step goes to the left child, which
//! is the `t_j = 1` label of the hierarchical-softmax gradient.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::Serialize;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Child {
    Leaf(usize),
    Inner(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PathSpec {
    pub nodes: Vec<usize>,
    /// `true` = left child = label 1.
    pub directions: Vec<bool>,
}

impl PathSpec {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn steps(&self) -> impl Iterator<Item = (usize, bool)> + '_ {
        self.nodes.iter().copied().zip(self.directions.iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HuffmanTree {
    /// `(left, right)` per inner node, in creation order.
    children: Vec<(Child, Child)>,
    paths: Vec<PathSpec>,
}

impl HuffmanTree {
    /// Repeatedly merges the two lightest nodes, ordering by
    /// `(weight, creation order)`. Leaves are created first in word-id
    /// order; of the two merged nodes the earlier-created one goes left.
    pub fn build(counts: &[u64]) -> Result<Self> {
        let v = counts.len();
        if v < 2 {
            return Err(Error::InvalidCounts(format!("need at least 2 words, got {v}")));
        }
        if let Some(w) = counts.iter().position(|&c| c == 0) {
            return Err(Error::InvalidCounts(format!("word {w} has count 0")));
        }

        // creation order: leaves 0..V, inner node k gets V + k
        let mut heap: BinaryHeap<Reverse<(u64, usize)>> =
            counts.iter().enumerate().map(|(i, &c)| Reverse((c, i))).collect();
        let mut children = Vec::with_capacity(v - 1);
        let as_child = |order: usize| {
            if order < v {
                Child::Leaf(order)
            } else {
                Child::Inner(order - v)
            }
        };
        while heap.len() > 1 {
            let Reverse((wa, a)) = heap.pop().unwrap();
            let Reverse((wb, b)) = heap.pop().unwrap();
            let (left, right) = if a < b { (a, b) } else { (b, a) };
            children.push((as_child(left), as_child(right)));
            heap.push(Reverse((wa + wb, v + children.len() - 1)));
        }

        let mut paths = vec![PathSpec { nodes: Vec::new(), directions: Vec::new() }; v];
        let root = children.len() - 1;
        let mut stack = vec![(root, Vec::new(), Vec::new())];
        while let Some((node, nodes, dirs)) = stack.pop() {
            let (left, right) = children[node];
            for (child, bit) in [(left, true), (right, false)] {
                let mut n = nodes.clone();
                let mut d = dirs.clone();
                n.push(node);
                d.push(bit);
                match child {
                    Child::Leaf(w) => paths[w] = PathSpec { nodes: n, directions: d },
                    Child::Inner(k) => stack.push((k, n, d)),
                }
            }
        }
        Ok(Self { children, paths })
    }

    pub fn vocab_size(&self) -> usize {
        self.paths.len()
    }

    pub fn inner_count(&self) -> usize {
        self.children.len()
    }

    pub fn root(&self) -> usize {
        self.children.len() - 1
    }

    pub fn children(&self, inner: usize) -> (Child, Child) {
        self.children[inner]
    }

    /// Root-to-leaf path of `word`. Panics if `word >= V`.
    pub fn path(&self, word: usize) -> &PathSpec {
        &self.paths[word]
    }

    pub fn paths(&self) -> &[PathSpec] {
        &self.paths
    }

    /// Code length `L(w) - 1` for each word.
    pub fn code_lengths(&self) -> Vec<usize> {
        self.paths.iter().map(PathSpec::len).collect()
    }

    /// Follows a path's direction bits from the root and returns where it lands.
    pub fn walk(&self, path: &PathSpec) -> Option<Child> {
        let mut at = Child::Inner(self.root());
        for (node, left) in path.steps() {
            match at {
                Child::Inner(k) if k == node => {
                    let (l, r) = self.children[k];
                    at = if left { l } else { r };
                }
                _ => return None,
            }
        }
        Some(at)
    }

    pub fn weighted_path_length(&self, counts: &[u64]) -> u64 {
        counts
            .iter()
            .zip(&self.paths)
            .map(|(&c, p)| c * p.len() as u64)
            .sum()
    }
}
