//! Exact k-nearest-neighbor distances: a brute-force scan and a k-d tree that
//! returns bit-identical answers.

use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const LEAF_SIZE: usize = 16;

/// Squared Euclidean distance, accumulated in coordinate order.
#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_query(dim: usize, n: usize, query: &[f64], k: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Config("reference set is empty".into()));
    }
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::Config(format!("k = {k} exceeds the reference set size {n}")));
    }
    if query.len() != dim {
        return Err(Error::Data(format!("dimension mismatch: query has {} values, reference has {dim}", query.len())));
    }
    Ok(())
}

/// Distance from `query` to its `k`th nearest point in `reference`, by full sort.
pub fn knn_distance<P: AsRef<[f64]>>(query: &[f64], reference: &[P], k: usize) -> Result<f64> {
    let dim = reference.first().map_or(query.len(), |p| p.as_ref().len());
    check_query(dim, reference.len(), query, k)?;
    let mut d2 = Vec::with_capacity(reference.len());
    for p in reference {
        let p = p.as_ref();
        if p.len() != dim {
            return Err(Error::Data("reference points have inconsistent dimensions".into()));
        }
        d2.push(squared_distance(query, p));
    }
    d2.sort_by(f64::total_cmp);
    Ok(d2[k - 1].sqrt())
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: Box<Node>, right: Box<Node> },
}

/// Static k-d tree over a flat point buffer.
#[derive(Debug, Clone)]
pub struct KdTree {
    dim: usize,
    points: Vec<f64>,
    order: Vec<usize>,
    root: Node,
}

impl KdTree {
    pub fn build<P: AsRef<[f64]>>(points: &[P]) -> Result<Self> {
        let first = points.first().ok_or_else(|| Error::Config("cannot index an empty point set".into()))?;
        let dim = first.as_ref().len();
        if dim == 0 {
            return Err(Error::Data("points must have at least one coordinate".into()));
        }
        let mut flat = Vec::with_capacity(points.len() * dim);
        for p in points {
            let p = p.as_ref();
            if p.len() != dim {
                return Err(Error::Data("points have inconsistent dimensions".into()));
            }
            flat.extend_from_slice(p);
        }
        let mut order: Vec<usize> = (0..points.len()).collect();
        let root = Self::build_node(&flat, dim, &mut order, 0, points.len());
        Ok(Self { dim, points: flat, order, root })
    }

    fn build_node(flat: &[f64], dim: usize, order: &mut [usize], start: usize, end: usize) -> Node {
        if end - start <= LEAF_SIZE {
            return Node::Leaf { start, end };
        }
        // split on the axis of largest spread
        let mut axis = 0;
        let mut best = -1.0;
        for a in 0..dim {
            let (lo, hi) = order[start..end].iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                let v = flat[i * dim + a];
                (lo.min(v), hi.max(v))
            });
            if hi - lo > best {
                best = hi - lo;
                axis = a;
            }
        }
        if best <= 0.0 {
            return Node::Leaf { start, end };
        }
        let mid = start + (end - start) / 2;
        order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            flat[a * dim + axis].total_cmp(&flat[b * dim + axis])
        });
        let value = flat[order[mid] * dim + axis];
        let left = Box::new(Self::build_node(flat, dim, order, start, mid));
        let right = Box::new(Self::build_node(flat, dim, order, mid, end));
        Node::Split { axis, value, left, right }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// Distance to the `k`th nearest indexed point.
    pub fn knn_distance(&self, query: &[f64], k: usize) -> Result<f64> {
        check_query(self.dim, self.len(), query, k)?;
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        self.search(&self.root, query, k, &mut heap);
        let worst = heap.peek().map(|c| c.0).ok_or_else(|| Error::Internal("empty k-d search".into()))?;
        Ok(worst.sqrt())
    }

    fn search(&self, node: &Node, query: &[f64], k: usize, heap: &mut BinaryHeap<Candidate>) {
        match node {
            Node::Leaf { start, end } => {
                for &i in &self.order[*start..*end] {
                    let d = squared_distance(query, self.point(i));
                    if heap.len() < k {
                        heap.push(Candidate(d));
                    } else if d < heap.peek().map_or(f64::INFINITY, |c| c.0) {
                        heap.pop();
                        heap.push(Candidate(d));
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = query[*axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, query, k, heap);
                // Any point across the plane has a squared distance of at least diff².
                let worst = if heap.len() < k { f64::INFINITY } else { heap.peek().map_or(f64::INFINITY, |c| c.0) };
                if diff * diff <= worst {
                    self.search(far, query, k, heap);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate(f64);

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}
