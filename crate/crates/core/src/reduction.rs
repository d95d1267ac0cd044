//! Planted clique / planted dense subgraph to online local learning.
//!
//! A graph is cut into `n' = n / l` random clusters of `l = 10 n / k`
//! vertices. Each cluster is an item and each vertex inside it a label, so a
//! learner that finds planted vertices in many clusters collects edges. The
//! distinguisher thresholds the learner's average payoff over `R` games.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use rayon::prelude::*;

use crate::environments::{cluster_edge_env, Environment, PayoffFunction};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::learner::OnlineLearner;
use crate::rng::stream;

/// `n'` disjoint clusters of equal size `l`. The label of a vertex is its
/// position inside its cluster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterPartition {
    clusters: Vec<Vec<usize>>,
}

impl ClusterPartition {
    pub fn new(clusters: Vec<Vec<usize>>) -> Result<Self> {
        let Some(first) = clusters.first() else {
            return Err(Error::InvalidArgument("partition has no clusters".into()));
        };
        let l = first.len();
        if l == 0 {
            return Err(Error::InvalidArgument("clusters must be nonempty".into()));
        }
        let mut seen = BTreeSet::new();
        for (c, cluster) in clusters.iter().enumerate() {
            if cluster.len() != l {
                return Err(Error::InvalidArgument(format!(
                    "cluster {c} has {} vertices, expected {l}",
                    cluster.len()
                )));
            }
            for &v in cluster {
                if !seen.insert(v) {
                    return Err(Error::InvalidArgument(format!(
                        "vertex {v} appears in more than one cluster slot"
                    )));
                }
            }
        }
        Ok(Self { clusters })
    }

    /// Check that every vertex exists in a graph on `n` vertices.
    pub fn validate(&self, n: usize) -> Result<()> {
        match self.clusters.iter().flatten().find(|&&v| v >= n) {
            Some(v) => Err(Error::InvalidArgument(format!(
                "vertex {v} out of range for a graph on {n} vertices"
            ))),
            None => Ok(()),
        }
    }

    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn cluster_size(&self) -> usize {
        self.clusters[0].len()
    }

    /// `(cluster, label)` of vertex `v`, or `None` if it was discarded.
    pub fn label_of(&self, v: usize) -> Option<(usize, usize)> {
        self.clusters
            .iter()
            .enumerate()
            .find_map(|(c, cl)| cl.iter().position(|&u| u == v).map(|a| (c, a)))
    }

    /// For each cluster, the label of its smallest-label planted vertex.
    pub fn planted_labels(&self, planted: &[usize]) -> Vec<Option<usize>> {
        let set: BTreeSet<usize> = planted.iter().copied().collect();
        self.clusters
            .iter()
            .map(|cl| cl.iter().position(|v| set.contains(v)))
            .collect()
    }

    /// Number of clusters holding at least one planted vertex.
    pub fn covered_clusters(&self, planted: &[usize]) -> usize {
        self.planted_labels(planted).iter().flatten().count()
    }
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must lie in [0, 1], got {p}")))
    }
}

/// Erdos-Renyi `G(n, p)`.
pub fn gen_gnp<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Result<Graph> {
    check_probability("p", p)?;
    let mut g = Graph::empty(n);
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(p) {
                g.set_edge(u, v);
            }
        }
    }
    Ok(g)
}

/// `G(n, p)` with a `G(k, q)` forced on a uniformly random `k`-set `S`.
/// Returns the graph and `S` sorted.
pub fn gen_planted<R: Rng + ?Sized>(n: usize, p: f64, k: usize, q: f64, rng: &mut R) -> Result<(Graph, Vec<usize>)> {
    check_probability("p", p)?;
    check_probability("q", q)?;
    if p > q {
        return Err(Error::InvalidArgument(format!("need p <= q, got p = {p}, q = {q}")));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!("planted size k = {k} exceeds n = {n}")));
    }
    let mut planted = sample(rng, n, k).into_vec();
    planted.sort_unstable();
    let mut inside = vec![false; n];
    for &v in &planted {
        inside[v] = true;
    }
    let mut g = Graph::empty(n);
    for u in 0..n {
        for v in u + 1..n {
            let prob = if inside[u] && inside[v] { q } else { p };
            if rng.random_bool(prob) {
                g.set_edge(u, v);
            }
        }
    }
    Ok((g, planted))
}

/// `l = round(10 n / k)` and `n' = floor(n / l)`; rejects `n' < 2`.
pub fn cluster_dims(n: usize, k: usize) -> Result<(usize, usize)> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    let l = ((10 * n) as f64 / k as f64).round() as usize;
    if l == 0 {
        return Err(Error::InvalidArgument(format!(
            "cluster size 10n/k rounds to 0 for n = {n}, k = {k}"
        )));
    }
    let n_prime = n / l;
    if n_prime < 2 {
        return Err(Error::InvalidArgument(format!(
            "n = {n}, k = {k} gives l = {l} and only {n_prime} cluster(s); need at least 2, so k must be roughly 20 or more"
        )));
    }
    Ok((l, n_prime))
}

/// Uniformly random equipartition of `n'` clusters of size `l`; surplus
/// vertices are dropped at random. Only `graph.n()` is consulted.
pub fn random_partition<R: Rng + ?Sized>(graph: &Graph, k: usize, rng: &mut R) -> Result<ClusterPartition> {
    let n = graph.n();
    let (l, n_prime) = cluster_dims(n, k)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let clusters = order[..l * n_prime].chunks(l).map(<[usize]>::to_vec).collect();
    ClusterPartition::new(clusters)
}

/// `x (x - 1) / 2` for real `x`.
pub fn choose2(x: f64) -> f64 {
    x * (x - 1.0) / 2.0
}

/// Which hardness source the distinguisher targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regime {
    /// `G(n, 1/2)` against a planted `k`-clique.
    Clique,
    /// `G(n, p_s)` against a planted `G(k, p_d)`.
    Dense { p_s: f64, p_d: f64 },
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::Clique => "clique",
            Regime::Dense { .. } => "dense",
        }
    }

    /// `(p, q)` for graph generation.
    pub fn densities(&self) -> (f64, f64) {
        match *self {
            Regime::Clique => (0.5, 1.0),
            Regime::Dense { p_s, p_d } => (p_s, p_d),
        }
    }
}

/// Planted or random, used both for ground truth and for verdicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Case {
    Random,
    Planted,
}

impl Case {
    pub fn name(&self) -> &'static str {
        match self {
            Case::Random => "random",
            Case::Planted => "planted",
        }
    }
}

/// Sizes, repetition count and threshold of one distinguisher.
#[derive(Debug, Clone, PartialEq)]
pub struct DistinguisherConfig {
    pub n: usize,
    pub k: usize,
    pub l: usize,
    pub n_prime: usize,
    pub rounds: usize,
    pub repetitions: usize,
    pub threshold: f64,
    pub regime: Regime,
}

fn formula_repetitions(value: f64) -> Result<usize> {
    if !value.is_finite() || value > 1e15 {
        return Err(Error::TooLarge(format!(
            "default repetition count {value:.3e} is not runnable; pass an explicit count"
        )));
    }
    Ok((value.ceil() as usize).max(1))
}

impl DistinguisherConfig {
    /// Clique regime: threshold `1.01 * C(k/10, 2) / 2`, default
    /// `R = ceil(n^4 / k^3.7)`.
    pub fn clique(n: usize, k: usize, repetitions: Option<usize>) -> Result<Self> {
        let (l, n_prime) = cluster_dims(n, k)?;
        let repetitions = match repetitions {
            Some(r) => r,
            None => formula_repetitions((n as f64).powi(4) / (k as f64).powf(3.7))?,
        };
        Self::finish(
            n,
            k,
            l,
            n_prime,
            repetitions,
            1.01 * 0.5 * choose2(k as f64 / 10.0),
            Regime::Clique,
        )
    }

    /// Dense regime: threshold `C(2k/25, 2) p_d / 2`, default
    /// `R = ceil(n^4 / (k^3.7 p_d^2))`.
    pub fn dense(n: usize, k: usize, p_s: f64, p_d: f64, repetitions: Option<usize>) -> Result<Self> {
        check_probability("p_s", p_s)?;
        check_probability("p_d", p_d)?;
        if p_d == 0.0 || p_s > p_d {
            return Err(Error::InvalidArgument(format!(
                "need 0 <= p_s <= p_d with p_d > 0, got p_s = {p_s}, p_d = {p_d}"
            )));
        }
        let (l, n_prime) = cluster_dims(n, k)?;
        let repetitions = match repetitions {
            Some(r) => r,
            None => formula_repetitions((n as f64).powi(4) / ((k as f64).powf(3.7) * p_d * p_d))?,
        };
        let threshold = 0.5 * choose2(2.0 * k as f64 / 25.0) * p_d;
        Self::finish(n, k, l, n_prime, repetitions, threshold, Regime::Dense { p_s, p_d })
    }

    fn finish(
        n: usize,
        k: usize,
        l: usize,
        n_prime: usize,
        repetitions: usize,
        threshold: f64,
        regime: Regime,
    ) -> Result<Self> {
        if repetitions == 0 {
            return Err(Error::InvalidArgument("R must be at least 1".into()));
        }
        if !(threshold > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "threshold {threshold} is not positive for k = {k}; k must exceed 25/2"
            )));
        }
        Ok(Self {
            n,
            k,
            l,
            n_prime,
            rounds: n_prime * (n_prime - 1) / 2,
            repetitions,
            threshold,
            regime,
        })
    }

    pub fn verdict(&self, avg_payoff: f64) -> Case {
        if avg_payoff >= self.threshold {
            Case::Planted
        } else {
            Case::Random
        }
    }
}

/// Outcome of one distinguisher call.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub avg_payoff: f64,
    pub threshold: f64,
    pub verdict: Case,
    /// Realized total payoff of each repetition, in repetition order.
    pub payoffs: Vec<f64>,
    pub partition: ClusterPartition,
}

/// Builds a fresh learner for one repetition on the given partition.
pub type LearnerFactory<'a> = dyn Fn(&ClusterPartition) -> Result<Box<dyn OnlineLearner>> + Sync + 'a;

/// Draw one partition, then play `R` independent games on it, each with a
/// fresh learner and its own random stream, and threshold the mean payoff.
pub fn run_distinguisher(
    graph: &Graph,
    cfg: &DistinguisherConfig,
    factory: &LearnerFactory<'_>,
    seed: u64,
) -> Result<Verdict> {
    if graph.n() != cfg.n {
        return Err(crate::error::mismatch(
            format!("graph on {} vertices", cfg.n),
            graph.n(),
        ));
    }
    if cfg.repetitions == 0 || cfg.rounds == 0 {
        return Err(Error::InvalidArgument("R and T must both be positive".into()));
    }
    let partition = random_partition(graph, cfg.k, &mut stream(seed, "partition", 0))?;
    let env = cluster_edge_env(graph, &partition)?;
    let payoffs = (0..cfg.repetitions)
        .into_par_iter()
        .map(|r| {
            let mut learner = factory(&partition)?;
            let mut env = env.clone();
            let mut rng = stream(seed, "repetition", r as u64);
            realized_total(learner.as_mut(), &mut env, &mut rng)
        })
        .collect::<Result<Vec<f64>>>()?;
    let avg_payoff = payoffs.iter().sum::<f64>() / payoffs.len() as f64;
    Ok(Verdict {
        avg_payoff,
        threshold: cfg.threshold,
        verdict: cfg.verdict(avg_payoff),
        payoffs,
        partition,
    })
}

/// Total realized payoff of one game, skipping the per-round bookkeeping
/// of [`crate::learner::run_game`].
fn realized_total(learner: &mut dyn OnlineLearner, env: &mut dyn Environment, rng: &mut dyn RngCore) -> Result<f64> {
    let mut total = 0.0;
    while let Some(pair) = env.next_pair() {
        let predicted = learner.predict(pair, rng)?;
        let payoff = env.reveal(predicted)?;
        total += payoff.value(predicted);
        learner.observe(&payoff)?;
    }
    Ok(total)
}

fn block_mean(block: &nalgebra::DMatrix<f64>) -> f64 {
    block.mean()
}

/// Plays uniformly random labels.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformLearner {
    n_labels: usize,
}

impl UniformLearner {
    pub fn new(n_labels: usize) -> Result<Self> {
        if n_labels == 0 {
            return Err(Error::InvalidArgument("need at least one label".into()));
        }
        Ok(Self { n_labels })
    }
}

impl OnlineLearner for UniformLearner {
    fn predict(&mut self, _pair: (usize, usize), rng: &mut dyn RngCore) -> Result<(usize, usize)> {
        Ok((rng.random_range(0..self.n_labels), rng.random_range(0..self.n_labels)))
    }

    fn expected_payoff(&self, payoff: &PayoffFunction) -> f64 {
        block_mean(payoff.block())
    }

    fn observe(&mut self, _payoff: &PayoffFunction) -> Result<()> {
        Ok(())
    }
}

/// Test learner that knows the planted set: in a cluster holding a planted
/// vertex it plays that vertex's label, elsewhere a uniform label.
#[derive(Debug, Clone)]
pub struct CheatingOracleLearner {
    choice: Vec<Option<usize>>,
    n_labels: usize,
}

impl CheatingOracleLearner {
    pub fn new(partition: &ClusterPartition, planted: &[usize]) -> Self {
        Self {
            choice: partition.planted_labels(planted),
            n_labels: partition.cluster_size(),
        }
    }

    /// The fixed label per cluster, `None` where it plays at random.
    pub fn choices(&self) -> &[Option<usize>] {
        &self.choice
    }

    fn label<R: RngCore + ?Sized>(&self, cluster: usize, rng: &mut R) -> usize {
        match self.choice.get(cluster).copied().flatten() {
            Some(a) => a,
            None => rng.random_range(0..self.n_labels),
        }
    }
}

impl OnlineLearner for CheatingOracleLearner {
    fn predict(&mut self, pair: (usize, usize), rng: &mut dyn RngCore) -> Result<(usize, usize)> {
        for c in [pair.0, pair.1] {
            if c >= self.choice.len() {
                return Err(Error::InvalidArgument(format!("cluster {c} out of range")));
            }
        }
        Ok((self.label(pair.0, rng), self.label(pair.1, rng)))
    }

    fn expected_payoff(&self, payoff: &PayoffFunction) -> f64 {
        let (i, j) = payoff.pair();
        let b = payoff.block();
        match (self.choice[i], self.choice[j]) {
            (Some(a), Some(c)) => b[(a, c)],
            (Some(a), None) => b.row(a).mean(),
            (None, Some(c)) => b.column(c).mean(),
            (None, None) => block_mean(b),
        }
    }

    fn observe(&mut self, _payoff: &PayoffFunction) -> Result<()> {
        Ok(())
    }
}

/// Parameters of a lower-bound regime; `slack` stands in for the
/// vanishing correction term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegimeParams {
    Clique {
        n: usize,
        eps: f64,
        slack: f64,
    },
    Dense {
        n: usize,
        alpha: f64,
        eps: f64,
        eps_prime: f64,
        slack: f64,
    },
}

/// Exponent `beta` and the induced instance it implies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegretTarget {
    pub beta: f64,
    /// Planted size `n^(1/2 - eps)` or `n^(1/2 - eps')`.
    pub k: f64,
    pub l: f64,
    pub n_prime: f64,
    pub rounds: f64,
    /// `p_s`, `p_d` in the dense regime.
    pub densities: Option<(f64, f64)>,
    /// `sqrt(n' l^beta T)`.
    pub target_regret: f64,
    /// `target_regret / k^2` (clique) or `target_regret / (k^2 p_d)` (dense);
    /// below 1 means the reduction separates.
    pub separation_ratio: f64,
}

fn check_unit_half(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x <= 0.5 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must lie in (0, 1/2], got {x}")))
    }
}

fn check_slack(slack: f64) -> Result<()> {
    if slack >= 0.0 && slack.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "slack must be a finite nonnegative number, got {slack}"
        )))
    }
}

/// `beta = (1 - slack) / (1/2 + eps) - 1`.
pub fn clique_beta(eps: f64, slack: f64) -> Result<f64> {
    check_unit_half("eps", eps)?;
    check_slack(slack)?;
    Ok((1.0 - slack) / (0.5 + eps) - 1.0)
}

/// `beta = 2 (1/2 - (1/2 - eps') (alpha + eps) - slack) / (1/2 + eps') - 1`.
pub fn dense_beta(alpha: f64, eps: f64, eps_prime: f64, slack: f64) -> Result<f64> {
    check_unit_half("alpha", alpha)?;
    check_unit_half("eps", eps)?;
    check_unit_half("eps'", eps_prime)?;
    check_slack(slack)?;
    Ok(2.0 * (0.5 - (0.5 - eps_prime) * (alpha + eps) - slack) / (0.5 + eps_prime) - 1.0)
}

/// `beta` plus the target regret of the induced instance at size `n`.
pub fn regret_target(params: RegimeParams) -> Result<RegretTarget> {
    let (n, beta, k, densities) = match params {
        RegimeParams::Clique { n, eps, slack } => {
            let beta = clique_beta(eps, slack)?;
            (n, beta, (n as f64).powf(0.5 - eps), None)
        }
        RegimeParams::Dense {
            n,
            alpha,
            eps,
            eps_prime,
            slack,
        } => {
            let beta = dense_beta(alpha, eps, eps_prime, slack)?;
            let k = (n as f64).powf(0.5 - eps_prime);
            let p_s = (n as f64).powf(-alpha);
            let p_d = k.powf(-alpha - eps);
            (n, beta, k, Some((p_s, p_d)))
        }
    };
    if n < 2 {
        return Err(Error::InvalidArgument(format!("n must be at least 2, got {n}")));
    }
    let l = 10.0 * n as f64 / k;
    let n_prime = k / 10.0;
    let rounds = choose2(n_prime);
    let target_regret = (n_prime * l.powf(beta) * rounds.max(0.0)).sqrt();
    let scale = k * k * densities.map_or(1.0, |(_, p_d)| p_d);
    Ok(RegretTarget {
        beta,
        k,
        l,
        n_prime,
        rounds,
        densities,
        target_regret,
        separation_ratio: target_regret / scale,
    })
}

/// Planted-clique corollary: regret exponent `1 - eps` suffices against
/// planted size `n^(1/2 - eps/6)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CliqueCorollary {
    pub eps_tilde: f64,
    /// Exponent of `n` in the planted size.
    pub k_exponent: f64,
    pub beta: f64,
    pub required_beta: f64,
    pub holds: bool,
    pub target: RegretTarget,
}

pub fn clique_corollary(n: usize, eps: f64) -> Result<CliqueCorollary> {
    check_unit_half("eps", eps)?;
    let eps_tilde = eps / 6.0;
    let target = regret_target(RegimeParams::Clique {
        n,
        eps: eps_tilde,
        slack: eps_tilde,
    })?;
    let required_beta = 1.0 - eps;
    Ok(CliqueCorollary {
        eps_tilde,
        k_exponent: 0.5 - eps_tilde,
        beta: target.beta,
        required_beta,
        holds: target.beta >= required_beta - 1e-12,
        target,
    })
}

/// Dense-subgraph corollary: regret exponent `1 - eps' - alpha - eps`
/// suffices with `alpha/8`, `eps/8`, `eps'/4` in the instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenseCorollary {
    pub alpha_tilde: f64,
    pub eps_tilde: f64,
    pub eps_prime_tilde: f64,
    pub k_exponent: f64,
    pub slack: f64,
    pub beta: f64,
    pub required_beta: f64,
    pub holds: bool,
    pub target: RegretTarget,
}

pub fn dense_corollary(n: usize, alpha: f64, eps: f64, eps_prime: f64) -> Result<DenseCorollary> {
    check_unit_half("alpha", alpha)?;
    check_unit_half("eps", eps)?;
    check_unit_half("eps'", eps_prime)?;
    if alpha < eps {
        return Err(Error::InvalidArgument(format!(
            "need alpha >= eps, got alpha = {alpha}, eps = {eps}"
        )));
    }
    let alpha_tilde = alpha / 8.0;
    let eps_tilde = eps / 8.0;
    let eps_prime_tilde = eps_prime / 4.0;
    let slack = (0.5 + 3.0 * eps_prime_tilde) * (alpha_tilde + eps_tilde);
    let target = regret_target(RegimeParams::Dense {
        n,
        alpha: alpha_tilde,
        eps: eps_tilde,
        eps_prime: eps_prime_tilde,
        slack,
    })?;
    let required_beta = 1.0 - eps_prime - alpha - eps;
    Ok(DenseCorollary {
        alpha_tilde,
        eps_tilde,
        eps_prime_tilde,
        k_exponent: 0.5 - eps_prime_tilde,
        slack,
        beta: target.beta,
        required_beta,
        holds: target.beta >= required_beta - 1e-12,
        target,
    })
}

/// Planted total of the cheating learner: pairs of covered clusters whose
/// chosen vertices are adjacent.
pub fn oracle_labeling_payoff(graph: &Graph, partition: &ClusterPartition, planted: &[usize]) -> usize {
    let chosen: Vec<usize> = partition
        .planted_labels(planted)
        .iter()
        .enumerate()
        .filter_map(|(c, a)| a.map(|a| partition.clusters()[c][a]))
        .collect();
    let mut count = 0;
    for (x, &u) in chosen.iter().enumerate() {
        for &v in &chosen[x + 1..] {
            count += usize::from(graph.has_edge(u, v));
        }
    }
    count
}
