//! Payoff sources for the online game.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::polytope::ProblemDims;
use crate::reduction::ClusterPartition;

/// One round's payoff: the queried pair and an `L x L` block in `[-1, 1]`.
/// `block[(a, b)]` is the payoff for label `a` on the first item and label
/// `b` on the second.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffFunction {
    pair: (usize, usize),
    block: Arc<DMatrix<f64>>,
}

impl PayoffFunction {
    pub fn new(pair: (usize, usize), block: DMatrix<f64>) -> Result<Self> {
        if pair.0 == pair.1 {
            return Err(Error::InvalidArgument(format!(
                "payoff pair must have distinct items, got {pair:?}"
            )));
        }
        if block.nrows() != block.ncols() || block.nrows() == 0 {
            return Err(Error::InvalidArgument(format!(
                "payoff block must be square and nonempty, got {}x{}",
                block.nrows(),
                block.ncols()
            )));
        }
        if let Some(v) = block.iter().find(|v| !(v.abs() <= 1.0)) {
            return Err(Error::InvalidArgument(format!("payoff entry {v} outside [-1, 1]")));
        }
        Ok(Self {
            pair,
            block: Arc::new(block),
        })
    }

    pub fn pair(&self) -> (usize, usize) {
        self.pair
    }

    pub fn block(&self) -> &DMatrix<f64> {
        &self.block
    }

    pub fn n_labels(&self) -> usize {
        self.block.nrows()
    }

    /// Payoff of replying with labels `(a, b)`.
    pub fn value(&self, labels: (usize, usize)) -> f64 {
        self.block[labels]
    }
}

/// A full-information round source. Each round the learner is shown
/// [`Environment::next_pair`], replies, and is then shown the whole payoff
/// block through [`Environment::reveal`]. Adaptive sources may look at the
/// reply; the ones shipped here are oblivious.
pub trait Environment {
    /// Declared number of rounds `T`.
    fn total_rounds(&self) -> usize;

    /// Pair for the next round, or `None` once all rounds are played.
    fn next_pair(&mut self) -> Option<(usize, usize)>;

    /// Payoff for the round opened by the last [`Environment::next_pair`].
    fn reveal(&mut self, reply: (usize, usize)) -> Result<PayoffFunction>;
}

/// Replays a fixed payoff sequence.
#[derive(Debug, Clone)]
pub struct SequenceEnv {
    rounds: Vec<PayoffFunction>,
    cursor: usize,
    open: bool,
}

impl SequenceEnv {
    pub fn new(rounds: Vec<PayoffFunction>) -> Self {
        Self {
            rounds,
            cursor: 0,
            open: false,
        }
    }

    /// The whole sequence, for hindsight computations.
    pub fn rounds(&self) -> &[PayoffFunction] {
        &self.rounds
    }

    pub fn reset(&mut self) {
        self.cursor = 0;
        self.open = false;
    }
}

impl Environment for SequenceEnv {
    fn total_rounds(&self) -> usize {
        self.rounds.len()
    }

    fn next_pair(&mut self) -> Option<(usize, usize)> {
        if self.open {
            self.cursor += 1;
        }
        let round = self.rounds.get(self.cursor)?;
        self.open = true;
        Some(round.pair())
    }

    fn reveal(&mut self, _reply: (usize, usize)) -> Result<PayoffFunction> {
        if !self.open {
            return Err(Error::InvalidArgument("reveal called before next_pair".into()));
        }
        let round = self.rounds[self.cursor].clone();
        self.cursor += 1;
        self.open = false;
        Ok(round)
    }
}

/// Online max cut: one round per listed edge, paying 1 when the endpoints get
/// different labels. Requires `L = 2`.
pub fn maxcut_env(graph: &Graph, order: &[(usize, usize)], n_labels: usize) -> Result<SequenceEnv> {
    if n_labels != 2 {
        return Err(Error::InvalidArgument(format!(
            "max cut needs L = 2, got L = {n_labels}"
        )));
    }
    let cut = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    let rounds = order
        .iter()
        .map(|&(u, v)| {
            if u >= graph.n() || v >= graph.n() || !graph.has_edge(u, v) {
                return Err(Error::InvalidArgument(format!("({u}, {v}) is not an edge")));
            }
            PayoffFunction::new((u, v), cut.clone())
        })
        .collect::<Result<_>>()?;
    Ok(SequenceEnv::new(rounds))
}

/// `rounds` edges formed by back-to-back independently shuffled passes over
/// the edge list.
pub fn shuffled_edge_order<R: Rng + ?Sized>(graph: &Graph, rounds: usize, rng: &mut R) -> Result<Vec<(usize, usize)>> {
    let edges = graph.edges();
    if edges.is_empty() && rounds > 0 {
        return Err(Error::InvalidArgument("graph has no edges".into()));
    }
    let mut out = Vec::with_capacity(rounds);
    while out.len() < rounds {
        let mut pass = edges.clone();
        pass.shuffle(rng);
        out.extend(pass.into_iter().take(rounds - out.len()));
    }
    Ok(out)
}

/// The reduction's game: one round per unordered cluster pair in
/// lexicographic order, paying 1 when the vertex labelled `a` in the first
/// cluster is adjacent to the vertex labelled `b` in the second.
pub fn cluster_edge_env(graph: &Graph, partition: &ClusterPartition) -> Result<SequenceEnv> {
    partition.validate(graph.n())?;
    let clusters = partition.clusters();
    let l = partition.cluster_size();
    let mut rounds = Vec::with_capacity(clusters.len() * clusters.len().saturating_sub(1) / 2);
    for i in 0..clusters.len() {
        for j in i + 1..clusters.len() {
            let block = DMatrix::from_fn(l, l, |a, b| {
                f64::from(u8::from(graph.has_edge(clusters[i][a], clusters[j][b])))
            });
            rounds.push(PayoffFunction::new((i, j), block)?);
        }
    }
    Ok(SequenceEnv::new(rounds))
}

/// Oblivious random adversary: uniformly random pair `i < j` and i.i.d.
/// uniform `[-1, 1]` entries each round, all drawn before play.
pub fn random_env<R: Rng + ?Sized>(dims: ProblemDims, rounds: usize, rng: &mut R) -> Result<SequenceEnv> {
    let n = dims.n_items();
    let l = dims.n_labels();
    if n < 2 {
        return Err(Error::InvalidArgument("random pairs need at least two items".into()));
    }
    if rounds == 0 {
        return Err(Error::InvalidArgument("random environment needs T >= 1".into()));
    }
    let seq = (0..rounds)
        .map(|_| {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            let pair = (i.min(j), i.max(j));
            let block = DMatrix::from_fn(l, l, |_, _| rng.random_range(-1.0..=1.0));
            PayoffFunction::new(pair, block)
        })
        .collect::<Result<_>>()?;
    Ok(SequenceEnv::new(seq))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{labeling_payoff, Labeling};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn payoff_validation() {
        assert!(PayoffFunction::new((1, 1), DMatrix::zeros(2, 2)).is_err());
        assert!(PayoffFunction::new((0, 1), DMatrix::from_element(2, 2, 1.5)).is_err());
        assert!(PayoffFunction::new((0, 1), DMatrix::from_element(2, 2, f64::NAN)).is_err());
        assert!(PayoffFunction::new((0, 1), DMatrix::from_element(2, 2, -1.0)).is_ok());
    }

    #[test]
    fn maxcut_triangle_fixed_labeling() {
        let g = Graph::complete(3);
        let env = maxcut_env(&g, &g.edges(), 2).unwrap();
        assert_eq!(env.total_rounds(), 3);
        let total = labeling_payoff(env.rounds(), &Labeling(vec![0, 0, 1])).unwrap();
        assert_eq!(total, 2.0);
    }

    #[test]
    fn maxcut_single_edge_and_errors() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let env = maxcut_env(&g, &g.edges(), 2).unwrap();
        assert_eq!(env.rounds()[0].value((0, 1)), 1.0);
        assert_eq!(env.rounds()[0].value((1, 1)), 0.0);
        assert!(maxcut_env(&g, &g.edges(), 3).is_err());
        assert!(maxcut_env(&Graph::empty(3), &[(0, 1)], 2).is_err());
        assert_eq!(maxcut_env(&Graph::empty(3), &[], 2).unwrap().total_rounds(), 0);
    }

    #[test]
    fn sequence_env_protocol() {
        let g = Graph::complete(3);
        let mut env = maxcut_env(&g, &g.edges(), 2).unwrap();
        assert!(env.reveal((0, 0)).is_err());
        let mut seen = Vec::new();
        while let Some(pair) = env.next_pair() {
            let p = env.reveal((0, 1)).unwrap();
            assert_eq!(p.pair(), pair);
            seen.push(pair);
        }
        assert_eq!(seen, g.edges());
    }

    #[test]
    fn path_graph_cluster_block() {
        let g = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let part = ClusterPartition::new(vec![vec![0, 1], vec![2, 3]]).unwrap();
        let env = cluster_edge_env(&g, &part).unwrap();
        assert_eq!(env.total_rounds(), 1);
        let expect = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        assert_eq!(env.rounds()[0].block(), &expect);
    }

    #[test]
    fn complete_graph_cluster_block_is_all_ones() {
        let g = Graph::complete(4);
        let part = ClusterPartition::new(vec![vec![3, 0], vec![1, 2]]).unwrap();
        let env = cluster_edge_env(&g, &part).unwrap();
        assert!(env.rounds()[0].block().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn ten_clusters_give_45_rounds_each_pair_once() {
        let g = Graph::empty(20);
        let clusters = (0..10).map(|c| vec![2 * c, 2 * c + 1]).collect();
        let env = cluster_edge_env(&g, &ClusterPartition::new(clusters).unwrap()).unwrap();
        assert_eq!(env.total_rounds(), 45);
        let mut pairs: Vec<_> = env.rounds().iter().map(|p| p.pair()).collect();
        pairs.dedup();
        assert_eq!(pairs.len(), 45);
    }

    #[test]
    fn random_env_is_seeded_and_boxed() {
        let d = ProblemDims::new(4, 3).unwrap();
        let a = random_env(d, 50, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = random_env(d, 50, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a.rounds(), b.rounds());
        for p in a.rounds() {
            let (i, j) = p.pair();
            assert!(i < j && j < 4);
            assert!(p.block().iter().all(|v| v.abs() <= 1.0));
        }
        assert!(random_env(d, 0, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn random_env_fixed_labeling_has_zero_mean() {
        let d = ProblemDims::new(3, 2).unwrap();
        let env = random_env(d, 10_000, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        let mean = labeling_payoff(env.rounds(), &Labeling(vec![0, 1, 1])).unwrap() / 10_000.0;
        assert!(mean.abs() <= 4.0 / 100.0, "mean {mean}");
    }

    #[test]
    fn shuffled_order_covers_edges_evenly() {
        let g = Graph::complete(4);
        let order = shuffled_edge_order(&g, 12, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        for e in g.edges() {
            assert_eq!(order.iter().filter(|&&x| x == e).count(), 2);
        }
    }
}
