//! Exact nearest neighbours by Euclidean distance.
//!
//! Results are ordered by `(squared distance, row index)`, so equidistant
//! rows come back lowest index first.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{LagpError, Result};
use crate::gp::Design;
use crate::linalg::sq_dist;

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Neighbor {
    dist: f64,
    index: usize,
}

impl Eq for Neighbor {}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn check_query(design: &Design, x_ref: &[f64], m: usize) -> Result<()> {
    if x_ref.len() != design.dim() {
        return Err(LagpError::Dimension {
            expected: design.dim(),
            got: x_ref.len(),
        });
    }
    if m == 0 || m > design.len() {
        return Err(LagpError::Parameter(format!(
            "asked for {m} neighbours from a design of {} rows",
            design.len()
        )));
    }
    Ok(())
}

/// The `m` rows closest to `x_ref` by linear scan and partial selection.
pub fn nearest_neighbors(design: &Design, x_ref: &[f64], m: usize) -> Result<Vec<usize>> {
    check_query(design, x_ref, m)?;
    let mut all: Vec<Neighbor> = (0..design.len())
        .map(|index| Neighbor {
            dist: sq_dist(design.row(index), x_ref),
            index,
        })
        .collect();
    if m < all.len() {
        all.select_nth_unstable(m - 1);
        all.truncate(m);
    }
    all.sort_unstable();
    Ok(all.into_iter().map(|n| n.index).collect())
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: usize, right: usize },
}

/// A k-d tree over the rows of a design, for repeated exact queries.
#[derive(Debug, Clone)]
pub struct KdTree<'a> {
    design: &'a Design,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl<'a> KdTree<'a> {
    pub fn new(design: &'a Design) -> Self {
        let mut tree = KdTree {
            design,
            order: (0..design.len()).collect(),
            nodes: Vec::new(),
        };
        tree.build(0, design.len());
        tree
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let p = self.design.dim();
        // split on the widest coordinate
        let mut dim = 0;
        let mut widest = f64::NEG_INFINITY;
        for d in 0..p {
            let (lo, hi) = self.order[start..end].iter().fold(
                (f64::INFINITY, f64::NEG_INFINITY),
                |(lo, hi), &i| {
                    let v = self.design.row(i)[d];
                    (lo.min(v), hi.max(v))
                },
            );
            if hi - lo > widest {
                widest = hi - lo;
                dim = d;
            }
        }
        if widest <= 0.0 {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let design = self.design;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            design.row(a)[dim].total_cmp(&design.row(b)[dim])
        });
        let value = design.row(self.order[mid])[dim];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split {
            dim,
            value,
            left,
            right,
        };
        id
    }

    /// Same contract as [`nearest_neighbors`].
    pub fn nearest(&self, x_ref: &[f64], m: usize) -> Result<Vec<usize>> {
        check_query(self.design, x_ref, m)?;
        let mut heap = BinaryHeap::with_capacity(m + 1);
        self.search(0, x_ref, m, &mut heap);
        Ok(heap
            .into_sorted_vec()
            .into_iter()
            .map(|n| n.index)
            .collect())
    }

    fn search(&self, node: usize, x: &[f64], m: usize, heap: &mut BinaryHeap<Neighbor>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &index in &self.order[start..end] {
                    let cand = Neighbor {
                        dist: sq_dist(self.design.row(index), x),
                        index,
                    };
                    if heap.len() < m {
                        heap.push(cand);
                    } else if cand < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = x[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, x, m, heap);
                // equality keeps going so index ties are resolved exactly
                if heap.len() < m || diff * diff <= heap.peek().map_or(f64::INFINITY, |n| n.dist) {
                    self.search(far, x, m, heap);
                }
            }
        }
    }
}
