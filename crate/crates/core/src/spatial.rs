//! Exact nearest-neighbour distance queries.
//!
//! Small sets are scanned linearly; larger ones go through a k-d tree. Both
//! paths compute squared distances with the same [`sq_dist`] and the tree only
//! prunes a subtree when its splitting-plane bound strictly exceeds the best
//! distance found, so the returned minimum is bit-identical to the scan.

/// Sets with more points than this are indexed with a k-d tree.
pub(crate) const LINEAR_SCAN_LIMIT: usize = 1024;

const LEAF_SIZE: usize = 8;

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let t = x - y;
        s += t * t;
    }
    s
}

pub(crate) fn linear_min_sq(points: &[f64], dim: usize, q: &[f64]) -> f64 {
    points
        .chunks_exact(dim)
        .map(|p| sq_dist(p, q))
        .fold(f64::INFINITY, f64::min)
}

enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

pub(crate) struct KdTree<'a> {
    points: &'a [f64],
    dim: usize,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl<'a> KdTree<'a> {
    pub(crate) fn new(points: &'a [f64], dim: usize) -> Self {
        let n = points.len() / dim;
        let mut tree = Self {
            points,
            dim,
            order: (0..n).collect(),
            nodes: Vec::new(),
        };
        tree.build(0, n);
        tree
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        // split the widest axis at the median
        let mut axis = 0;
        let mut widest = -1.0;
        for k in 0..self.dim {
            let (lo, hi) = self.order[start..end]
                .iter()
                .map(|&i| self.points[i * self.dim + k])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                });
            if hi - lo > widest {
                widest = hi - lo;
                axis = k;
            }
        }
        let mid = start + (end - start) / 2;
        let (points, dim) = (self.points, self.dim);
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a * dim + axis].total_cmp(&points[b * dim + axis])
        });
        let value = self.points[self.order[mid] * self.dim + axis];
        self.nodes.push(Node::Split {
            axis,
            value,
            left: 0,
            right: 0,
        });
        // left holds coordinates <= value, right holds >= value
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        if let Node::Split {
            left: l, right: r, ..
        } = &mut self.nodes[id]
        {
            *l = left;
            *r = right;
        }
        id
    }

    pub(crate) fn nearest_sq(&self, q: &[f64]) -> f64 {
        let mut best = f64::INFINITY;
        self.search(0, q, &mut best);
        best
    }

    fn search(&self, node: usize, q: &[f64], best: &mut f64) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d = sq_dist(self.point(i), q);
                    if d < *best {
                        *best = d;
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let t = q[axis] - value;
                let (near, far) = if t <= 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                if t * t <= *best {
                    self.search(far, q, best);
                }
            }
        }
    }
}

/// Nearest-neighbour squared distances from each query to `targets`.
pub(crate) enum NearestIndex<'a> {
    Linear { points: &'a [f64], dim: usize },
    Tree(KdTree<'a>),
}

impl<'a> NearestIndex<'a> {
    pub(crate) fn new(points: &'a [f64], dim: usize) -> Self {
        if points.len() / dim > LINEAR_SCAN_LIMIT {
            NearestIndex::Tree(KdTree::new(points, dim))
        } else {
            NearestIndex::Linear { points, dim }
        }
    }

    pub(crate) fn nearest_sq(&self, q: &[f64]) -> f64 {
        match self {
            NearestIndex::Linear { points, dim } => linear_min_sq(points, *dim, q),
            NearestIndex::Tree(t) => t.nearest_sq(q),
        }
    }
}
