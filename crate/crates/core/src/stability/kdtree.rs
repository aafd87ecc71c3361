//! Exact nearest-neighbour search over a fixed point set.
//!
//! Ties in distance are broken by the smaller point index so results match an
//! exhaustive scan exactly.

/// Points stored row-major, `dim` coordinates each.
#[derive(Debug, Clone)]
pub struct KdTree<'a> {
    points: &'a [f64],
    dim: usize,
    nodes: Vec<Node>,
    root: Option<usize>,
}

#[derive(Debug, Clone, Copy)]
struct Node {
    index: usize,
    axis: usize,
    left: Option<usize>,
    right: Option<usize>,
}

/// Best candidate so far: (squared distance, point index).
type Best = Option<(f64, usize)>;

fn better(d2: f64, idx: usize, best: Best) -> bool {
    match best {
        None => true,
        Some((bd, bi)) => d2 < bd || (d2 == bd && idx < bi),
    }
}

impl<'a> KdTree<'a> {
    pub fn new(points: &'a [f64], dim: usize) -> Self {
        assert!(dim > 0 && points.len().is_multiple_of(dim), "point buffer not a multiple of dim");
        let n = points.len() / dim;
        let mut tree = Self {
            points,
            dim,
            nodes: Vec::with_capacity(n),
            root: None,
        };
        let mut idx: Vec<usize> = (0..n).collect();
        tree.root = tree.build(&mut idx, 0);
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    fn build(&mut self, idx: &mut [usize], depth: usize) -> Option<usize> {
        if idx.is_empty() {
            return None;
        }
        let axis = depth % self.dim;
        let mid = idx.len() / 2;
        let pts = self.points;
        let dim = self.dim;
        idx.select_nth_unstable_by(mid, |&a, &b| {
            pts[a * dim + axis].total_cmp(&pts[b * dim + axis]).then(a.cmp(&b))
        });
        let index = idx[mid];
        let slot = self.nodes.len();
        self.nodes.push(Node { index, axis, left: None, right: None });
        let (lo, rest) = idx.split_at_mut(mid);
        let left = self.build(lo, depth + 1);
        let right = self.build(&mut rest[1..], depth + 1);
        self.nodes[slot].left = left;
        self.nodes[slot].right = right;
        Some(slot)
    }

    /// Nearest point to `query` among those for which `accept(index)` holds.
    /// Returns `(index, squared distance)`.
    pub fn nearest<F: Fn(usize) -> bool>(&self, query: &[f64], accept: F) -> Option<(usize, f64)> {
        debug_assert_eq!(query.len(), self.dim);
        let mut best = None;
        if let Some(root) = self.root {
            self.search(root, query, &accept, &mut best);
        }
        best.map(|(d2, i)| (i, d2))
    }

    fn search<F: Fn(usize) -> bool>(&self, node: usize, q: &[f64], accept: &F, best: &mut Best) {
        let n = self.nodes[node];
        if accept(n.index) {
            let d2 = sq_dist(q, self.point(n.index));
            if better(d2, n.index, *best) {
                *best = Some((d2, n.index));
            }
        }
        let diff = q[n.axis] - self.points[n.index * self.dim + n.axis];
        let (near, far) = if diff < 0.0 { (n.left, n.right) } else { (n.right, n.left) };
        if let Some(c) = near {
            self.search(c, q, accept, best);
        }
        if let Some(c) = far {
            // Equal-distance candidates on the far side may still win the
            // index tie-break, so the bound is inclusive.
            if best.is_none_or(|(bd, _)| diff * diff <= bd) {
                self.search(c, q, accept, best);
            }
        }
    }
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
