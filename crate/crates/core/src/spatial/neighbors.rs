//! Nearest-neighbour queries restricted to the units that are still unresolved.

use std::collections::BinaryHeap;

use rand::seq::index;
use rand::Rng;

use super::distance::{squared, DistanceContext};

/// Above this many units queries go through a k-d tree instead of a linear scan.
pub const LINEAR_SCAN_MAX_UNITS: usize = 10_000;

const LEAF_SIZE: usize = 8;

/// A shrinking set of units supporting uniform random picks and nearest-neighbour queries.
pub(crate) struct ActiveSet<'a> {
    ctx: &'a DistanceContext,
    list: Vec<usize>,
    position: Vec<usize>,
    tree: Option<KdTree>,
}

impl<'a> ActiveSet<'a> {
    pub fn new(ctx: &'a DistanceContext, units: Vec<usize>) -> Self {
        let tree = (ctx.len() > LINEAR_SCAN_MAX_UNITS).then(|| KdTree::build(ctx, &units));
        Self::with_tree(ctx, units, tree)
    }

    #[cfg(test)]
    pub fn with_kd_tree(ctx: &'a DistanceContext, units: Vec<usize>) -> Self {
        let tree = KdTree::build(ctx, &units);
        Self::with_tree(ctx, units, Some(tree))
    }

    fn with_tree(ctx: &'a DistanceContext, list: Vec<usize>, tree: Option<KdTree>) -> Self {
        let mut position = vec![usize::MAX; ctx.len()];
        for (i, &k) in list.iter().enumerate() {
            position[k] = i;
        }
        Self {
            ctx,
            list,
            position,
            tree,
        }
    }

    pub fn len(&self) -> usize {
        self.list.len()
    }

    pub fn units(&self) -> &[usize] {
        &self.list
    }

    pub fn contains(&self, k: usize) -> bool {
        self.position[k] != usize::MAX
    }

    pub fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.list[rng.random_range(0..self.list.len())]
    }

    pub fn remove(&mut self, k: usize) {
        let i = self.position[k];
        if i == usize::MAX {
            return;
        }
        self.list.swap_remove(i);
        if i < self.list.len() {
            self.position[self.list[i]] = i;
        }
        self.position[k] = usize::MAX;
        if let Some(tree) = &mut self.tree {
            tree.remove(k);
        }
    }

    /// The `m` active units other than `k` closest to `k`, ties at the
    /// boundary distance broken uniformly at random. Fewer are returned when
    /// fewer are available.
    pub fn nearest<R: Rng + ?Sized>(&self, k: usize, m: usize, rng: &mut R) -> Vec<usize> {
        let m = m.min(self.list.len() - usize::from(self.contains(k)));
        if m == 0 {
            return Vec::new();
        }
        let q = self.ctx.point(k);
        let radius = match &self.tree {
            Some(tree) => tree.kth_distance(self.ctx, q, k, m),
            None => {
                let mut d: Vec<f64> = self
                    .list
                    .iter()
                    .filter(|&&l| l != k)
                    .map(|&l| squared(q, self.ctx.point(l)))
                    .collect();
                *d.select_nth_unstable_by(m - 1, f64::total_cmp).1
            }
        };
        let mut inside = Vec::with_capacity(m);
        let mut boundary = Vec::new();
        let mut visit = |l: usize, d: f64| {
            if d < radius {
                inside.push(l);
            } else if d == radius {
                boundary.push(l);
            }
        };
        match &self.tree {
            Some(tree) => tree.within(self.ctx, q, k, radius, &mut visit),
            None => {
                for &l in &self.list {
                    if l != k {
                        visit(l, squared(q, self.ctx.point(l)));
                    }
                }
            }
        }
        // Sort so the result does not depend on the internal list order.
        boundary.sort_unstable();
        let need = m - inside.len();
        for i in index::sample(rng, boundary.len(), need) {
            inside.push(boundary[i]);
        }
        inside
    }
}

struct Node {
    start: usize,
    end: usize,
    /// Bounding box of the node's points.
    lo: Vec<f64>,
    hi: Vec<f64>,
    children: Option<(usize, usize)>,
    parent: usize,
    active: usize,
}

struct KdTree {
    order: Vec<usize>,
    nodes: Vec<Node>,
    leaf_of: Vec<usize>,
    alive: Vec<bool>,
}

impl KdTree {
    fn build(ctx: &DistanceContext, units: &[usize]) -> Self {
        let mut tree = KdTree {
            order: units.to_vec(),
            nodes: Vec::new(),
            leaf_of: vec![usize::MAX; ctx.len()],
            alive: vec![false; ctx.len()],
        };
        for &k in units {
            tree.alive[k] = true;
        }
        if !units.is_empty() {
            tree.split(ctx, 0, units.len(), usize::MAX);
        }
        tree
    }

    fn split(&mut self, ctx: &DistanceContext, start: usize, end: usize, parent: usize) -> usize {
        let dim = ctx.dim();
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for &k in &self.order[start..end] {
            for (j, &x) in ctx.point(k).iter().enumerate() {
                lo[j] = lo[j].min(x);
                hi[j] = hi[j].max(x);
            }
        }
        let id = self.nodes.len();
        let widest = (0..dim).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])));
        self.nodes.push(Node {
            start,
            end,
            lo,
            hi,
            children: None,
            parent,
            active: end - start,
        });
        match widest {
            Some(axis) if end - start > LEAF_SIZE && self.nodes[id].hi[axis] > self.nodes[id].lo[axis] => {
                let mid = start + (end - start) / 2;
                self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
                    ctx.point(a)[axis].total_cmp(&ctx.point(b)[axis])
                });
                let left = self.split(ctx, start, mid, id);
                let right = self.split(ctx, mid, end, id);
                self.nodes[id].children = Some((left, right));
            }
            _ => {
                for i in start..end {
                    self.leaf_of[self.order[i]] = id;
                }
            }
        }
        id
    }

    fn remove(&mut self, k: usize) {
        if !self.alive[k] {
            return;
        }
        self.alive[k] = false;
        let mut node = self.leaf_of[k];
        while node != usize::MAX {
            self.nodes[node].active -= 1;
            node = self.nodes[node].parent;
        }
    }

    fn box_distance(node: &Node, q: &[f64]) -> f64 {
        q.iter()
            .enumerate()
            .map(|(j, &x)| {
                let d = (node.lo[j] - x).max(x - node.hi[j]).max(0.0);
                d * d
            })
            .sum()
    }

    /// Squared distance from `q` to its `m`-th nearest active point other than `skip`.
    fn kth_distance(&self, ctx: &DistanceContext, q: &[f64], skip: usize, m: usize) -> f64 {
        let mut heap: BinaryHeap<OrdF64> = BinaryHeap::with_capacity(m + 1);
        self.knn(ctx, 0, q, skip, m, &mut heap);
        heap.peek().map_or(f64::INFINITY, |d| d.0)
    }

    fn knn(&self, ctx: &DistanceContext, id: usize, q: &[f64], skip: usize, m: usize, heap: &mut BinaryHeap<OrdF64>) {
        let node = &self.nodes[id];
        if node.active == 0 {
            return;
        }
        if heap.len() == m && Self::box_distance(node, q) > heap.peek().unwrap().0 {
            return;
        }
        match node.children {
            Some((a, b)) => {
                let (da, db) = (
                    Self::box_distance(&self.nodes[a], q),
                    Self::box_distance(&self.nodes[b], q),
                );
                let (first, second) = if da <= db { (a, b) } else { (b, a) };
                self.knn(ctx, first, q, skip, m, heap);
                self.knn(ctx, second, q, skip, m, heap);
            }
            None => {
                for &l in &self.order[node.start..node.end] {
                    if l == skip || !self.alive[l] {
                        continue;
                    }
                    let d = squared(q, ctx.point(l));
                    if heap.len() < m {
                        heap.push(OrdF64(d));
                    } else if d < heap.peek().unwrap().0 {
                        heap.pop();
                        heap.push(OrdF64(d));
                    }
                }
            }
        }
    }

    fn within(&self, ctx: &DistanceContext, q: &[f64], skip: usize, radius: f64, visit: &mut dyn FnMut(usize, f64)) {
        let mut stack = vec![0];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if node.active == 0 || Self::box_distance(node, q) > radius {
                continue;
            }
            match node.children {
                Some((a, b)) => stack.extend([a, b]),
                None => {
                    for &l in &self.order[node.start..node.end] {
                        if l != skip && self.alive[l] {
                            let d = squared(q, ctx.point(l));
                            if d <= radius {
                                visit(l, d);
                            }
                        }
                    }
                }
            }
        }
    }
}

#[derive(PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::replicate::replicate_rng;
    use nalgebra::DMatrix;
    use rand::Rng;

    fn random_points(n: usize, seed: u64) -> DistanceContext {
        let mut rng = replicate_rng(seed, 0);
        let coords = DMatrix::from_fn(n, 2, |_, _| rng.random::<f64>());
        DistanceContext::euclidean(&coords).unwrap()
    }

    #[test]
    fn kd_tree_agrees_with_scan() {
        let ctx = random_points(500, 1);
        let units: Vec<usize> = (0..500).collect();
        let mut scan = ActiveSet::new(&ctx, units.clone());
        let mut tree = ActiveSet::with_kd_tree(&ctx, units);
        let mut rng = replicate_rng(2, 0);
        for step in 0..480 {
            let k = scan.pick(&mut rng);
            for m in [1, 3, 7] {
                let mut a = scan.nearest(k, m, &mut rng);
                let mut b = tree.nearest(k, m, &mut rng);
                a.sort_unstable();
                b.sort_unstable();
                assert_eq!(a, b, "step {step}, m {m}");
            }
            scan.remove(k);
            tree.remove(k);
        }
    }

    #[test]
    fn ties_are_broken_at_random() {
        // Unit 0 at the centre of four equidistant neighbours.
        let coords = DMatrix::from_row_slice(5, 2, &[0.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
        let ctx = DistanceContext::euclidean(&coords).unwrap();
        for kd in [false, true] {
            let set = if kd {
                ActiveSet::with_kd_tree(&ctx, (0..5).collect())
            } else {
                ActiveSet::new(&ctx, (0..5).collect())
            };
            let mut counts = [0usize; 5];
            let mut rng = replicate_rng(3, 0);
            for _ in 0..4000 {
                counts[set.nearest(0, 1, &mut rng)[0]] += 1;
            }
            assert_eq!(counts[0], 0);
            for &c in &counts[1..] {
                assert!((c as f64 - 1000.0).abs() < 4.0 * (4000.0f64 * 0.25 * 0.75).sqrt());
            }
        }
    }

    #[test]
    fn removal_and_exhaustion() {
        let ctx = random_points(4, 5);
        let mut set = ActiveSet::new(&ctx, vec![0, 1, 2, 3]);
        set.remove(2);
        set.remove(2);
        assert_eq!(set.len(), 3);
        let mut rng = replicate_rng(4, 0);
        let mut all = set.nearest(0, 10, &mut rng);
        all.sort_unstable();
        assert_eq!(all, vec![1, 3]);
    }
}
