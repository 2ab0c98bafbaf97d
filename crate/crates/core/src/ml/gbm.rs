//! Least-squares gradient boosting over depth-limited regression trees.
//!
//! Split search is exact: every midpoint between consecutive distinct
//! values of every feature is evaluated. Equal gains keep the earlier
//! candidate, so ties go to the lowest feature index and then the lowest
//! threshold.

use serde::{Deserialize, Serialize};

use super::{GbmHyper, ModelParams};
use crate::dataset::Dataset;
use crate::scalar::Scalar;

/// Serialized as `{feature, threshold, left, right}` or `{leaf}`.
/// Samples with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node<T> {
    Split {
        feature: usize,
        threshold: T,
        left: Box<Node<T>>,
        right: Box<Node<T>>,
    },
    Leaf {
        leaf: T,
    },
}

impl<T: Scalar> Node<T> {
    pub fn eval(&self, x: &[T]) -> T {
        let mut node = self;
        loop {
            match node {
                Node::Leaf { leaf } => return *leaf,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Split { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }
}

/// Training sum of squared errors: `sse[0]` for the initial constant, then
/// one entry per boosting round.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GbmTrace<T> {
    pub sse: Vec<T>,
}

pub(super) fn predict<T: Scalar>(init: T, shrinkage: T, trees: &[Node<T>], x: &[T]) -> T {
    trees
        .iter()
        .fold(init, |acc, tree| acc + shrinkage * tree.eval(x))
}

fn sse<T: Scalar>(y: &[T], f: &[T]) -> T {
    y.iter()
        .zip(f)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum()
}

/// Fits the ensemble; returns the parameters and the final in-sample fit.
pub(super) fn fit<T: Scalar>(
    ds: &Dataset<T>,
    h: &GbmHyper,
    mut trace: Option<&mut GbmTrace<T>>,
) -> (ModelParams<T>, Vec<T>) {
    let n = ds.n_rows();
    let d = ds.n_features();
    let cols: Vec<Vec<T>> = (0..d)
        .map(|j| (0..n).map(|i| ds.value(i, j)).collect())
        .collect();
    let orders: Vec<Vec<u32>> = cols
        .iter()
        .map(|c| {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| {
                c[a as usize]
                    .partial_cmp(&c[b as usize])
                    .expect("finite features")
                    .then(a.cmp(&b))
            });
            idx
        })
        .collect();

    let y = ds.y();
    let init = y.iter().copied().sum::<T>() / T::from_usize_lossy(n);
    let nu = T::lit(h.shrinkage);
    let mut fit = vec![init; n];
    if let Some(t) = trace.as_deref_mut() {
        t.sse.push(sse(y, &fit));
    }

    let mut builder = TreeBuilder::new(&cols, &orders, h.max_depth, h.min_samples_leaf);
    let mut residual = vec![T::zero(); n];
    let mut trees = Vec::with_capacity(h.rounds);
    for _ in 0..h.rounds {
        for ((r, &yi), &fi) in residual.iter_mut().zip(y).zip(&fit) {
            *r = yi - fi;
        }
        let tree = builder.build(&residual);
        for (i, f) in fit.iter_mut().enumerate() {
            *f = *f + nu * builder.leaf_value_of(i);
        }
        trees.push(tree);
        if let Some(t) = trace.as_deref_mut() {
            t.sse.push(sse(y, &fit));
        }
    }

    (
        ModelParams::Gbm {
            init,
            shrinkage: h.shrinkage,
            max_depth: h.max_depth,
            min_samples_leaf: h.min_samples_leaf,
            trees,
        },
        fit,
    )
}

const NONE: u32 = u32::MAX;

#[derive(Clone, Copy)]
struct ArenaNode<T> {
    count: usize,
    sum: T,
    sum_sq: T,
    split: Option<(usize, T, u32, u32)>,
}

#[derive(Clone, Copy)]
struct ScanState<T> {
    count: usize,
    sum: T,
    last: T,
    seen: bool,
}

#[derive(Clone, Copy)]
struct Best<T> {
    gain: T,
    feature: usize,
    threshold: T,
}

struct TreeBuilder<'a, T> {
    cols: &'a [Vec<T>],
    orders: &'a [Vec<u32>],
    max_depth: usize,
    min_leaf: usize,
    node_of: Vec<u32>,
    arena: Vec<ArenaNode<T>>,
}

impl<'a, T: Scalar> TreeBuilder<'a, T> {
    fn new(cols: &'a [Vec<T>], orders: &'a [Vec<u32>], max_depth: usize, min_leaf: usize) -> Self {
        let n = orders.first().map_or(0, Vec::len);
        Self {
            cols,
            orders,
            max_depth,
            min_leaf,
            node_of: vec![0; n],
            arena: Vec::new(),
        }
    }

    fn leaf_value_of(&self, i: usize) -> T {
        let node = &self.arena[self.node_of[i] as usize];
        node.sum / T::from_usize_lossy(node.count)
    }

    fn build(&mut self, r: &[T]) -> Node<T> {
        let n = r.len();
        self.node_of.iter_mut().for_each(|v| *v = 0);
        self.arena.clear();
        self.arena.push(ArenaNode {
            count: n,
            sum: r.iter().copied().sum(),
            sum_sq: r.iter().map(|&v| v * v).sum(),
            split: None,
        });

        let mut frontier: Vec<u32> = vec![0];
        for _ in 0..self.max_depth {
            let candidates: Vec<u32> = frontier
                .iter()
                .copied()
                .filter(|&id| self.arena[id as usize].count >= 2 * self.min_leaf)
                .collect();
            if candidates.is_empty() {
                break;
            }
            let best = self.search(r, &candidates);

            let mut next = Vec::new();
            let mut split_of = vec![NONE; self.arena.len()];
            for (slot, (&id, b)) in candidates.iter().zip(&best).enumerate() {
                let Some(b) = b else { continue };
                let left = self.arena.len() as u32;
                let right = left + 1;
                let empty = ArenaNode {
                    count: 0,
                    sum: T::zero(),
                    sum_sq: T::zero(),
                    split: None,
                };
                self.arena.push(empty);
                self.arena.push(empty);
                self.arena[id as usize].split = Some((b.feature, b.threshold, left, right));
                split_of[id as usize] = slot as u32;
                next.push(left);
                next.push(right);
            }
            if next.is_empty() {
                break;
            }
            for i in 0..n {
                let id = self.node_of[i] as usize;
                if split_of.get(id).copied().unwrap_or(NONE) == NONE {
                    continue;
                }
                let (f, thr, left, right) = self.arena[id].split.expect("split recorded");
                let child = if self.cols[f][i] <= thr { left } else { right };
                self.node_of[i] = child;
                let c = &mut self.arena[child as usize];
                c.count += 1;
                c.sum = c.sum + r[i];
                c.sum_sq = c.sum_sq + r[i] * r[i];
            }
            frontier = next;
        }
        self.to_tree(0)
    }

    /// Best split per candidate node, or `None` when no split has positive gain.
    fn search(&self, r: &[T], candidates: &[u32]) -> Vec<Option<Best<T>>> {
        let mut slot_of = vec![NONE; self.arena.len()];
        for (s, &id) in candidates.iter().enumerate() {
            slot_of[id as usize] = s as u32;
        }
        let floor = |node: &ArenaNode<T>| T::epsilon() * T::lit(64.0) * node.sum_sq;
        let mut best: Vec<Option<Best<T>>> = vec![None; candidates.len()];
        let fresh = ScanState {
            count: 0,
            sum: T::zero(),
            last: T::zero(),
            seen: false,
        };
        let mut states = vec![fresh; candidates.len()];
        for (j, order) in self.orders.iter().enumerate() {
            states.iter_mut().for_each(|s| *s = fresh);
            let col = &self.cols[j];
            for &i in order {
                let i = i as usize;
                let slot = slot_of[self.node_of[i] as usize];
                if slot == NONE {
                    continue;
                }
                let slot = slot as usize;
                let node = &self.arena[candidates[slot] as usize];
                let v = col[i];
                let st = &mut states[slot];
                if st.seen && v > st.last {
                    let right_count = node.count - st.count;
                    if st.count >= self.min_leaf && right_count >= self.min_leaf {
                        let nl = T::from_usize_lossy(st.count);
                        let nr = T::from_usize_lossy(right_count);
                        let nt = T::from_usize_lossy(node.count);
                        let sr = node.sum - st.sum;
                        let gain = st.sum * st.sum / nl + sr * sr / nr - node.sum * node.sum / nt;
                        let beats = match &best[slot] {
                            Some(b) => gain > b.gain,
                            None => gain > floor(node),
                        };
                        if beats {
                            best[slot] = Some(Best {
                                gain,
                                feature: j,
                                threshold: midpoint(st.last, v),
                            });
                        }
                    }
                }
                st.count += 1;
                st.sum = st.sum + r[i];
                st.last = v;
                st.seen = true;
            }
        }
        best
    }

    fn to_tree(&self, id: u32) -> Node<T> {
        let node = &self.arena[id as usize];
        match node.split {
            Some((feature, threshold, left, right)) => Node::Split {
                feature,
                threshold,
                left: Box::new(self.to_tree(left)),
                right: Box::new(self.to_tree(right)),
            },
            None => Node::Leaf {
                leaf: node.sum / T::from_usize_lossy(node.count),
            },
        }
    }
}

/// Midpoint of `a < b` that still separates them after rounding.
fn midpoint<T: Scalar>(a: T, b: T) -> T {
    let m = a + (b - a) / T::lit(2.0);
    if m >= b {
        a
    } else {
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ml::{train, train_gbm_traced, Hyper};

    fn names(d: usize) -> Vec<String> {
        (0..d).map(|i| format!("x{i}")).collect()
    }

    #[test]
    fn single_split_finds_step() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![f64::from(i)]).collect();
        let y: Vec<f64> = (0..20).map(|i| if i < 10 { 1.0 } else { 5.0 }).collect();
        let ds = Dataset::from_rows(names(1), rows, y).unwrap();
        let h = GbmHyper {
            rounds: 1,
            max_depth: 1,
            shrinkage: 1.0,
            min_samples_leaf: 1,
        };
        let m = train(&ds, &Hyper::Gbm(h), 0).unwrap();
        let ModelParams::Gbm { trees, init, .. } = &m.params else {
            panic!()
        };
        assert_eq!(*init, 3.0);
        match &trees[0] {
            Node::Split {
                feature, threshold, ..
            } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 9.5);
            }
            Node::Leaf { .. } => panic!("expected a split"),
        }
        assert_eq!(m.predict(&[3.0]).unwrap(), 1.0);
        assert_eq!(m.predict(&[12.0]).unwrap(), 5.0);
    }

    #[test]
    fn equal_gain_prefers_lowest_feature() {
        // Both columns separate y identically.
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![f64::from(i), f64::from(i) * 2.0]).collect();
        let y: Vec<f64> = (0..10).map(|i| if i < 5 { 0.0 } else { 1.0 }).collect();
        let ds = Dataset::from_rows(names(2), rows, y).unwrap();
        let h = GbmHyper {
            rounds: 1,
            max_depth: 1,
            shrinkage: 1.0,
            min_samples_leaf: 1,
        };
        let m = train(&ds, &Hyper::Gbm(h), 0).unwrap();
        let ModelParams::Gbm { trees, .. } = &m.params else {
            panic!()
        };
        assert!(matches!(trees[0], Node::Split { feature: 0, .. }));
    }

    #[test]
    fn constant_target_yields_leaves() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![f64::from(i % 7)]).collect();
        let ds = Dataset::from_rows(names(1), rows, vec![2.5; 30]).unwrap();
        let (m, trace) = train_gbm_traced(&ds, &GbmHyper::default(), 0).unwrap();
        let ModelParams::Gbm { trees, .. } = &m.params else {
            panic!()
        };
        assert_eq!(trees.len(), 300);
        assert!(trees.iter().all(|t| matches!(t, Node::Leaf { .. })));
        assert!(trace.sse.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn respects_depth_and_leaf_size() {
        let rows: Vec<Vec<f64>> = (0..200).map(|i| vec![f64::from(i), f64::from((i * 37) % 11)]).collect();
        let y: Vec<f64> = (0..200).map(|i| f64::from((i * 13) % 17)).collect();
        let ds = Dataset::from_rows(names(2), rows, y).unwrap();
        let h = GbmHyper {
            rounds: 20,
            max_depth: 2,
            shrinkage: 0.3,
            min_samples_leaf: 7,
        };
        let m = train(&ds, &Hyper::Gbm(h), 0).unwrap();
        let ModelParams::Gbm { trees, .. } = &m.params else {
            panic!()
        };
        assert_eq!(trees.len(), 20);
        assert!(trees.iter().all(|t| t.depth() <= 2 && t.leaf_count() <= 4));
    }

    #[test]
    fn in_sample_fit_matches_prediction() {
        let rows: Vec<Vec<f64>> = (0..60).map(|i| vec![f64::from(i).sin(), f64::from(i % 5)]).collect();
        let y: Vec<f64> = (0..60).map(|i| f64::from(i % 9)).collect();
        let ds = Dataset::from_rows(names(2), rows.clone(), y).unwrap();
        let h = GbmHyper {
            rounds: 15,
            ..GbmHyper::default()
        };
        let (params, fitted) = fit(&ds, &h, None);
        let ModelParams::Gbm {
            init,
            shrinkage,
            trees,
            ..
        } = params
        else {
            panic!()
        };
        for (row, f) in rows.iter().zip(fitted) {
            assert_eq!(predict(init, shrinkage, &trees, row), f);
        }
    }

    #[test]
    fn midpoint_separates_adjacent_floats() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let m = midpoint(a, b);
        assert!(a <= m && m < b);
        assert_eq!(midpoint(1.0, 2.0), 1.5);
    }
}
