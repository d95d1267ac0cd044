//! Seeded experiment runners behind the command-line tool.
//!
//! Every runner is a pure function of its config: all randomness comes from
//! streams derived from the config's seed, and parallel work is collected in
//! index order, so repeated runs produce identical reports.

use std::fmt::Write as _;
use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use crate::environments::{cluster_edge_env, maxcut_env, random_env, shuffled_edge_order, SequenceEnv};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::learner::{choose_nu, run_game, FtrlState, InnerSolverConfig, OnlineLearner, RoundRecord};
use crate::oracles::{brute_force_opt, fd_gradient, logdet_shifted_general, MAX_LABELINGS};
use crate::polytope::{
    check_feasibility, is_feasible, project, sample_feasible, FeasibilityTolerance, ProblemDims, ProjectionOptions,
    PseudoMomentMatrix,
};
use crate::reduction::{
    gen_gnp, gen_planted, random_partition, run_distinguisher, Case, CheatingOracleLearner, ClusterPartition,
    DistinguisherConfig, UniformLearner,
};
use crate::regularizer::{
    self, hessian_inverse_identity_check, inv_hessian_quadform, max_symmetric_curvature, FD_GRADIENT_STEP,
    MAX_DENSE_HESSIAN_SIDE,
};
use crate::rng::{derive_seed, stream};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Constant `c` in the reported bound `c * sqrt(n L T)`.
pub const REGRET_BOUND_CONSTANT: f64 = 8.0;

/// Adversary used by a regret run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    Maxcut,
    Random,
    Cluster,
}

impl EnvKind {
    pub fn name(&self) -> &'static str {
        match self {
            EnvKind::Maxcut => "maxcut",
            EnvKind::Random => "random",
            EnvKind::Cluster => "cluster",
        }
    }
}

/// Learner plugged into the distinguisher.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LearnerKind {
    Ftrl,
    Oracle,
    Uniform,
}

impl LearnerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LearnerKind::Ftrl => "ftrl",
            LearnerKind::Oracle => "oracle",
            LearnerKind::Uniform => "uniform",
        }
    }
}

/// Ordered `key = value` lines written at the top of every output.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metadata(Vec<(String, String)>);

impl Metadata {
    pub fn new(command: &str) -> Self {
        let mut m = Self::default();
        m.push("tool", format!("local-regret {VERSION}"));
        m.push("command", command);
        m
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.0.push((key.to_string(), value.to_string()));
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.0
    }

    pub fn write<W: Write + ?Sized>(&self, out: &mut W) -> Result<()> {
        for (k, v) in &self.0 {
            writeln!(out, "# {k} = {v}")?;
        }
        Ok(())
    }
}

fn opt_f64(v: Option<f64>) -> String {
    v.map_or_else(|| "auto".to_string(), |x| x.to_string())
}

/// Settings shared by everything that builds an FTRL learner.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FtrlSettings {
    /// `None` picks `sqrt(nL / (4T))`.
    pub nu: Option<f64>,
    pub inner_iters: Option<usize>,
    pub grad_tol: Option<f64>,
}

impl FtrlSettings {
    pub fn inner_config(&self, n_labels: usize) -> InnerSolverConfig {
        let mut cfg = InnerSolverConfig::for_labels(n_labels);
        if let Some(it) = self.inner_iters {
            cfg.max_iters = it;
        }
        if let Some(tol) = self.grad_tol {
            cfg.grad_tol = tol;
        }
        cfg
    }

    pub fn resolve_nu(&self, dims: ProblemDims, rounds: usize) -> Result<f64> {
        match self.nu {
            Some(nu) => Ok(nu),
            None => choose_nu(dims, rounds.max(1)),
        }
    }

    pub fn build(&self, dims: ProblemDims, rounds: usize) -> Result<FtrlState> {
        FtrlState::init(dims, self.resolve_nu(dims, rounds)?, self.inner_config(dims.n_labels()))
    }

    fn describe(&self, meta: &mut Metadata, n_labels: usize) {
        let inner = self.inner_config(n_labels);
        meta.push("nu", opt_f64(self.nu));
        meta.push("inner_iters", inner.max_iters);
        meta.push("grad_tol", inner.grad_tol);
        meta.push("inner_step", inner.step_size);
        meta.push("projection_tol", inner.projection.tol);
        meta.push("projection_max_iters", inner.projection.max_iters);
    }
}

/// A regret experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretConfig {
    pub n: usize,
    pub labels: usize,
    pub rounds: usize,
    pub seed: u64,
    pub env: EnvKind,
    /// Max cut defaults to the complete graph; the cluster game needs one.
    pub graph: Option<Graph>,
    /// Planted size used to cut the graph in the cluster game.
    pub k: Option<usize>,
    pub ftrl: FtrlSettings,
    pub compute_opt: bool,
}

impl RegretConfig {
    pub fn new(n: usize, labels: usize, rounds: usize, seed: u64, env: EnvKind) -> Self {
        Self {
            n,
            labels,
            rounds,
            seed,
            env,
            graph: None,
            k: None,
            ftrl: FtrlSettings::default(),
            compute_opt: true,
        }
    }
}

/// Result of [`run_regret`].
#[derive(Debug, Clone, PartialEq)]
pub struct RegretReport {
    pub metadata: Metadata,
    pub dims: ProblemDims,
    pub nu: f64,
    pub records: Vec<RoundRecord>,
    pub opt: Option<f64>,
    pub total_expected_payoff: f64,
    pub total_realized_payoff: f64,
    pub regret: Option<f64>,
    pub bound: f64,
}

fn build_regret_env(cfg: &RegretConfig) -> Result<(ProblemDims, SequenceEnv)> {
    match cfg.env {
        EnvKind::Maxcut => {
            let dims = ProblemDims::new(cfg.n, cfg.labels)?;
            let graph = cfg.graph.clone().unwrap_or_else(|| Graph::complete(cfg.n));
            if graph.n() != cfg.n {
                return Err(crate::error::mismatch(
                    format!("graph on {} vertices", cfg.n),
                    graph.n(),
                ));
            }
            let order = shuffled_edge_order(&graph, cfg.rounds, &mut stream(cfg.seed, "edge-order", 0))?;
            Ok((dims, maxcut_env(&graph, &order, cfg.labels)?))
        }
        EnvKind::Random => {
            let dims = ProblemDims::new(cfg.n, cfg.labels)?;
            if cfg.rounds == 0 {
                return Ok((dims, SequenceEnv::new(Vec::new())));
            }
            Ok((
                dims,
                random_env(dims, cfg.rounds, &mut stream(cfg.seed, "environment", 0))?,
            ))
        }
        EnvKind::Cluster => {
            let graph = cfg
                .graph
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("the cluster game needs a graph file".into()))?;
            let k = cfg
                .k
                .ok_or_else(|| Error::InvalidArgument("the cluster game needs --k".into()))?;
            let partition = random_partition(graph, k, &mut stream(cfg.seed, "partition", 0))?;
            let dims = ProblemDims::new(partition.n_clusters(), partition.cluster_size())?;
            Ok((dims, cluster_edge_env(graph, &partition)?))
        }
    }
}

/// Play FTRL against the configured adversary and compare with the best
/// fixed labeling in hindsight.
pub fn run_regret(cfg: &RegretConfig) -> Result<RegretReport> {
    let (dims, mut env) = build_regret_env(cfg)?;
    let rounds = env.rounds().len();
    if cfg.compute_opt {
        let count = (dims.n_labels() as f64).powi(dims.n_items() as i32);
        if count > MAX_LABELINGS as f64 {
            return Err(Error::TooLarge(format!(
                "OPT needs {count:.3e} labelings (limit {MAX_LABELINGS}); disable OPT to report payoff only"
            )));
        }
    }
    let nu = cfg.ftrl.resolve_nu(dims, rounds)?;
    let mut meta = Metadata::new("regret");
    meta.push("seed", cfg.seed);
    meta.push("env", cfg.env.name());
    meta.push("n", dims.n_items());
    meta.push("L", dims.n_labels());
    meta.push("T", rounds);
    if let Some(k) = cfg.k {
        meta.push("k", k);
    }
    if let Some(g) = &cfg.graph {
        meta.push("graph_vertices", g.n());
        meta.push("graph_edges", g.edge_count());
    }
    cfg.ftrl.describe(&mut meta, dims.n_labels());
    meta.push("nu_resolved", nu);
    meta.push("opt", if cfg.compute_opt { "exhaustive" } else { "disabled" });

    let records = if rounds == 0 {
        Vec::new()
    } else {
        let mut learner = FtrlState::init(dims, nu, cfg.ftrl.inner_config(dims.n_labels()))?;
        run_game(&mut learner, &mut env, &mut stream(cfg.seed, "learner", 0))?
    };
    let total_expected_payoff: f64 = records.iter().map(|r| r.expected_payoff).sum();
    let total_realized_payoff: f64 = records.iter().map(|r| r.payoff_received).sum();
    let opt = if cfg.compute_opt {
        Some(if rounds == 0 {
            0.0
        } else {
            brute_force_opt(env.rounds(), dims)?.opt_value
        })
    } else {
        None
    };
    let bound = REGRET_BOUND_CONSTANT * (dims.side() as f64 * rounds as f64).sqrt();
    Ok(RegretReport {
        metadata: meta,
        dims,
        nu,
        regret: opt.map(|o| o - total_expected_payoff),
        opt,
        total_expected_payoff,
        total_realized_payoff,
        records,
        bound,
    })
}

impl RegretReport {
    /// Round trace: `t,i,j,a,b,payoff,expected_payoff,inner_iters,inner_residual`.
    pub fn write_trace<W: Write + ?Sized>(&self, out: &mut W) -> Result<()> {
        self.metadata.write(out)?;
        writeln!(out, "t,i,j,a,b,payoff,expected_payoff,inner_iters,inner_residual")?;
        for r in &self.records {
            let (iters, resid) = r.solve.map_or((String::new(), String::new()), |s| {
                (s.iterations.to_string(), s.residual.to_string())
            });
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.t,
                r.pair.0,
                r.pair.1,
                r.predicted.0,
                r.predicted.1,
                r.payoff_received,
                r.expected_payoff,
                iters,
                resid
            )?;
        }
        Ok(())
    }

    /// `opt,total_expected_payoff,regret,bound`; OPT and regret are empty
    /// when OPT was disabled.
    pub fn write_summary<W: Write + ?Sized>(&self, out: &mut W) -> Result<()> {
        self.metadata.write(out)?;
        writeln!(out, "# bound = {REGRET_BOUND_CONSTANT}*sqrt(nLT)")?;
        writeln!(out, "opt,total_expected_payoff,regret,bound")?;
        writeln!(
            out,
            "{},{},{},{}",
            self.opt.map_or(String::new(), |v| v.to_string()),
            self.total_expected_payoff,
            self.regret.map_or(String::new(), |v| v.to_string()),
            self.bound
        )?;
        Ok(())
    }
}

/// Lower-bound regime of a distinguisher experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegimeChoice {
    Clique,
    Dense { p: f64, q: f64 },
}

/// A distinguisher experiment over several graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct DistinguishConfig {
    pub n: usize,
    pub k: usize,
    pub regime: RegimeChoice,
    /// `None` uses the formula for `R`.
    pub repetitions: Option<usize>,
    pub trials: usize,
    pub learner: LearnerKind,
    pub seed: u64,
    pub ftrl: FtrlSettings,
    /// Force every trial to one case instead of alternating.
    pub only_case: Option<Case>,
}

impl DistinguishConfig {
    pub fn new(n: usize, k: usize, regime: RegimeChoice, trials: usize, learner: LearnerKind, seed: u64) -> Self {
        Self {
            n,
            k,
            regime,
            repetitions: None,
            trials,
            learner,
            seed,
            ftrl: FtrlSettings::default(),
            only_case: None,
        }
    }

    pub fn distinguisher(&self) -> Result<DistinguisherConfig> {
        match self.regime {
            RegimeChoice::Clique => DistinguisherConfig::clique(self.n, self.k, self.repetitions),
            RegimeChoice::Dense { p, q } => DistinguisherConfig::dense(self.n, self.k, p, q, self.repetitions),
        }
    }

    /// Ground truth of trial `t`: alternating random / planted.
    pub fn case_of(&self, trial: usize) -> Case {
        self.only_case.unwrap_or(if trial.is_multiple_of(2) {
            Case::Random
        } else {
            Case::Planted
        })
    }
}

/// One row of the verdict table.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub trial: usize,
    pub case: Case,
    pub avg_payoff: f64,
    pub verdict: Case,
    pub seed: u64,
    /// Clusters holding a planted vertex, planted trials only.
    pub covered_clusters: Option<usize>,
}

/// Confusion counts indexed `[truth][verdict]` with random first.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion(pub [[usize; 2]; 2]);

impl Confusion {
    fn slot(c: Case) -> usize {
        match c {
            Case::Random => 0,
            Case::Planted => 1,
        }
    }

    pub fn add(&mut self, truth: Case, verdict: Case) {
        self.0[Self::slot(truth)][Self::slot(verdict)] += 1;
    }

    pub fn count(&self, truth: Case, verdict: Case) -> usize {
        self.0[Self::slot(truth)][Self::slot(verdict)]
    }

    pub fn total(&self) -> usize {
        self.0.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            return 0.0;
        }
        (self.0[0][0] + self.0[1][1]) as f64 / self.total() as f64
    }
}

/// Result of [`run_distinguish`].
#[derive(Debug, Clone, PartialEq)]
pub struct DistinguishReport {
    pub metadata: Metadata,
    pub config: DistinguisherConfig,
    pub rows: Vec<TrialRow>,
    pub confusion: Confusion,
}

fn make_learner(
    kind: LearnerKind,
    partition: &ClusterPartition,
    planted: Option<&[usize]>,
    ftrl: &FtrlSettings,
    rounds: usize,
) -> Result<Box<dyn OnlineLearner>> {
    Ok(match kind {
        LearnerKind::Uniform => Box::new(UniformLearner::new(partition.cluster_size())?),
        LearnerKind::Oracle => Box::new(CheatingOracleLearner::new(partition, planted.unwrap_or(&[]))),
        LearnerKind::Ftrl => {
            let dims = ProblemDims::new(partition.n_clusters(), partition.cluster_size())?;
            Box::new(ftrl.build(dims, rounds)?)
        }
    })
}

/// Run the distinguisher on `trials` fresh graphs.
pub fn run_distinguish(cfg: &DistinguishConfig) -> Result<DistinguishReport> {
    let dcfg = cfg.distinguisher()?;
    let (p, q) = dcfg.regime.densities();
    let mut meta = Metadata::new("distinguish");
    meta.push("seed", cfg.seed);
    meta.push("regime", dcfg.regime.name());
    meta.push("n", dcfg.n);
    meta.push("k", dcfg.k);
    meta.push("p", p);
    meta.push("q", q);
    meta.push("l", dcfg.l);
    meta.push("n_prime", dcfg.n_prime);
    meta.push("T", dcfg.rounds);
    meta.push("R", dcfg.repetitions);
    meta.push(
        "R_source",
        if cfg.repetitions.is_some() {
            "override"
        } else {
            "formula"
        },
    );
    meta.push("threshold", dcfg.threshold);
    meta.push("trials", cfg.trials);
    meta.push("cases", cfg.only_case.map_or("alternating", |c| c.name()));
    meta.push("learner", cfg.learner.name());
    if cfg.learner == LearnerKind::Ftrl {
        cfg.ftrl.describe(&mut meta, dcfg.l);
    }

    let rows = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let case = cfg.case_of(trial);
            let mut grng = stream(cfg.seed, "graph", trial as u64);
            let (graph, planted) = match case {
                Case::Random => (gen_gnp(dcfg.n, p, &mut grng)?, None),
                Case::Planted => {
                    let (g, s) = gen_planted(dcfg.n, p, dcfg.k, q, &mut grng)?;
                    (g, Some(s))
                }
            };
            let seed = derive_seed(cfg.seed, "distinguisher", trial as u64);
            let factory =
                |part: &ClusterPartition| make_learner(cfg.learner, part, planted.as_deref(), &cfg.ftrl, dcfg.rounds);
            let v = run_distinguisher(&graph, &dcfg, &factory, seed)?;
            Ok(TrialRow {
                trial,
                case,
                avg_payoff: v.avg_payoff,
                verdict: v.verdict,
                seed,
                covered_clusters: planted.as_deref().map(|s| v.partition.covered_clusters(s)),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut confusion = Confusion::default();
    for r in &rows {
        confusion.add(r.case, r.verdict);
    }
    Ok(DistinguishReport {
        metadata: meta,
        config: dcfg,
        rows,
        confusion,
    })
}

impl DistinguishReport {
    /// `trial,case,regime,n,k,l,n_prime,T,R,avg_payoff,threshold,verdict,seed`.
    pub fn write_rows<W: Write + ?Sized>(&self, out: &mut W) -> Result<()> {
        self.metadata.write(out)?;
        writeln!(
            out,
            "trial,case,regime,n,k,l,n_prime,T,R,avg_payoff,threshold,verdict,seed"
        )?;
        let c = &self.config;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.trial,
                r.case.name(),
                c.regime.name(),
                c.n,
                c.k,
                c.l,
                c.n_prime,
                c.rounds,
                c.repetitions,
                r.avg_payoff,
                c.threshold,
                r.verdict.name(),
                r.seed
            )?;
        }
        Ok(())
    }

    pub fn write_summary<W: Write + ?Sized>(&self, out: &mut W) -> Result<()> {
        self.metadata.write(out)?;
        writeln!(
            out,
            "random_as_random,random_as_planted,planted_as_random,planted_as_planted,accuracy"
        )?;
        let m = &self.confusion;
        writeln!(
            out,
            "{},{},{},{},{}",
            m.count(Case::Random, Case::Random),
            m.count(Case::Random, Case::Planted),
            m.count(Case::Planted, Case::Random),
            m.count(Case::Planted, Case::Planted),
            m.accuracy()
        )?;
        Ok(())
    }
}

/// Gradient under test in the verification suite.
pub type GradientFn = fn(&PseudoMomentMatrix) -> Result<DMatrix<f64>>;

/// `L (I + L M)^{-1}`.
pub fn analytic_gradient(m: &PseudoMomentMatrix) -> Result<DMatrix<f64>> {
    Ok(regularizer::eval(m)?.gradient)
}

/// Settings of [`run_verify`].
#[derive(Debug, Clone)]
pub struct VerifyConfig {
    pub seed: u64,
    /// `(n, L)` pairs for the curvature and diameter sweeps.
    pub sweep: Vec<(usize, usize)>,
    pub gamma_samples: usize,
    pub gradient_samples: usize,
    pub diameter_samples: usize,
    pub projection_samples: usize,
    pub hessian_samples: usize,
    pub gradient: GradientFn,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        let mut sweep = Vec::new();
        for n in [2, 3, 4] {
            for l in [2, 3, 5] {
                sweep.push((n, l));
            }
        }
        Self {
            seed: 0,
            sweep,
            gamma_samples: 1008,
            gradient_samples: 20,
            diameter_samples: 100,
            projection_samples: 50,
            hessian_samples: 12,
            gradient: analytic_gradient,
        }
    }
}

/// One suite's verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub samples: usize,
    pub worst: f64,
    pub limit: f64,
    pub passed: bool,
    pub skipped: bool,
}

/// Result of [`run_verify`].
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub metadata: Metadata,
    pub suites: Vec<SuiteResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed || s.skipped)
    }

    pub fn suite(&self, name: &str) -> Option<&SuiteResult> {
        self.suites.iter().find(|s| s.name == name)
    }

    /// `suite,samples,worst,limit,status`.
    pub fn write_table<W: Write + ?Sized>(&self, out: &mut W) -> Result<()> {
        self.metadata.write(out)?;
        writeln!(out, "suite,samples,worst,limit,status")?;
        for s in &self.suites {
            let status = if s.skipped {
                "skip"
            } else if s.passed {
                "pass"
            } else {
                "fail"
            };
            writeln!(out, "{},{},{},{},{}", s.name, s.samples, s.worst, s.limit, status)?;
        }
        Ok(())
    }
}

fn suite(name: &'static str, samples: usize, worst: f64, limit: f64) -> SuiteResult {
    SuiteResult {
        name,
        samples,
        worst,
        limit,
        passed: worst <= limit,
        skipped: false,
    }
}

fn sweep_dims(sweep: &[(usize, usize)], idx: usize) -> Result<ProblemDims> {
    let (n, l) = sweep[idx % sweep.len()];
    ProblemDims::new(n, l)
}

/// Largest `|P^T H^{-1} P|` over random feasible `M` and payoffs `P` in
/// `[-1, 1]` on random off-diagonal blocks.
pub fn gamma_suite(cfg: &VerifyConfig) -> Result<SuiteResult> {
    let worst = (0..cfg.gamma_samples)
        .into_par_iter()
        .map(|s| {
            let dims = sweep_dims(&cfg.sweep, s)?;
            let mut rng = stream(cfg.seed, "verify-gamma", s as u64);
            let m = sample_feasible(dims, &mut rng);
            let l = dims.n_labels();
            let n = dims.n_items();
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            let p = DMatrix::from_fn(l, l, |_, _| rng.random_range(-1.0..=1.0));
            Ok(inv_hessian_quadform(&m, i, j, &p)?.value.abs())
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(suite("gamma", cfg.gamma_samples, worst, 4.0))
}

const GRADIENT_DIMS: [(usize, usize); 6] = [(2, 2), (3, 3), (2, 4), (4, 2), (3, 2), (1, 9)];
const HESSIAN_DIMS: [(usize, usize); 6] = [(2, 2), (2, 3), (3, 2), (2, 4), (4, 2), (1, 8)];

/// `max |g - g_fd| / max |g_fd|` over random feasible matrices.
pub fn gradient_suite(cfg: &VerifyConfig) -> Result<SuiteResult> {
    let mut worst = 0.0f64;
    for s in 0..cfg.gradient_samples {
        let dims = sweep_dims(&GRADIENT_DIMS, s)?;
        let m = sample_feasible(dims, &mut stream(cfg.seed, "verify-gradient", s as u64));
        let l = dims.n_labels();
        let fd = fd_gradient(|x| logdet_shifted_general(x, l), m.entries(), FD_GRADIENT_STEP)?;
        let g = (cfg.gradient)(&m)?;
        worst = worst.max((&g - &fd).amax() / fd.amax());
    }
    Ok(suite("gradient", cfg.gradient_samples, worst, 1e-4))
}

/// Closed-form `H H~` against the identity, and `H` against second
/// differences, for `nL <= 8`.
pub fn hessian_suites(cfg: &VerifyConfig) -> Result<(SuiteResult, SuiteResult)> {
    let checks = (0..cfg.hessian_samples)
        .into_par_iter()
        .map(|s| {
            let dims = sweep_dims(&HESSIAN_DIMS, s)?;
            debug_assert!(dims.side() <= MAX_DENSE_HESSIAN_SIDE);
            let m = sample_feasible(dims, &mut stream(cfg.seed, "verify-hessian", s as u64));
            hessian_inverse_identity_check(&m)
        })
        .collect::<Result<Vec<_>>>()?;
    let dev = checks.iter().map(|c| c.identity_deviation).fold(0.0, f64::max);
    let fd = checks.iter().map(|c| c.fd_relative_error).fold(0.0, f64::max);
    Ok((
        suite("hessian_identity", checks.len(), dev, 1e-6),
        suite("hessian_fd", checks.len(), fd, 1e-3),
    ))
}

/// Largest curvature of `R` along symmetric directions, scaled by the
/// Hessian's magnitude; concavity means it is not positive.
pub fn concavity_suite(cfg: &VerifyConfig) -> Result<SuiteResult> {
    let mut worst = f64::NEG_INFINITY;
    for s in 0..cfg.hessian_samples {
        let dims = sweep_dims(&HESSIAN_DIMS, s)?;
        let m = sample_feasible(dims, &mut stream(cfg.seed, "verify-concavity", s as u64));
        let scale = (dims.n_labels() as f64).powi(2);
        worst = worst.max(max_symmetric_curvature(&m)? / scale);
    }
    Ok(suite("concavity", cfg.hessian_samples, worst, 1e-10))
}

/// `|log det(I + L M)| <= nL` on random feasible matrices.
pub fn diameter_suite(cfg: &VerifyConfig) -> Result<SuiteResult> {
    let mut worst = f64::NEG_INFINITY;
    for s in 0..cfg.diameter_samples {
        let dims = sweep_dims(&cfg.sweep, s)?;
        let m = sample_feasible(dims, &mut stream(cfg.seed, "verify-diameter", s as u64));
        let v = regularizer::eval(&m)?.value.abs();
        worst = worst.max(v - regularizer::diameter_bound(dims));
    }
    Ok(suite("diameter", cfg.diameter_samples, worst, 0.0))
}

/// A raw symmetric matrix near the polytope, for projection tests.
pub fn random_projection_input<R: Rng + ?Sized>(dims: ProblemDims, rng: &mut R) -> DMatrix<f64> {
    let side = dims.side();
    let base = sample_feasible(dims, rng).into_entries();
    let noise = DMatrix::from_fn(side, side, |_, _| rng.random_range(-0.6..0.6));
    base + (&noise + noise.transpose()) * 0.5
}

/// Worst feasibility violation of sampled points and of projected points.
pub fn feasibility_suite(cfg: &VerifyConfig) -> Result<SuiteResult> {
    let tol = FeasibilityTolerance::default();
    let mut worst = 0.0f64;
    let samples = cfg.diameter_samples;
    for s in 0..samples {
        let dims = sweep_dims(&cfg.sweep, s)?;
        let mut rng = stream(cfg.seed, "verify-feasibility", s as u64);
        let m = sample_feasible(dims, &mut rng);
        worst = worst.max(is_feasible(&m, tol)?.worst());
        if dims.side() <= 10 {
            let raw = random_projection_input(dims, &mut rng);
            let p = project(dims, &raw, ProjectionOptions::default())?;
            worst = worst.max(check_feasibility(dims, p.matrix.entries(), tol)?.worst());
        }
    }
    Ok(suite("feasibility", samples, worst, tol.scaled(10.0).value()))
}

/// Frobenius distance between the alternating projection and a conic
/// solver on `nL = 4`.
#[cfg(feature = "qp-oracle")]
pub fn projection_suite(cfg: &VerifyConfig) -> Result<SuiteResult> {
    let dims_list = [ProblemDims::new(2, 2)?, ProblemDims::new(1, 4)?];
    let worst = (0..cfg.projection_samples)
        .into_par_iter()
        .map(|s| {
            let dims = dims_list[s % 2];
            let raw = random_projection_input(dims, &mut stream(cfg.seed, "verify-projection", s as u64));
            let ours = project(dims, &raw, ProjectionOptions::default())?.matrix;
            let reference = crate::oracles::qp_projection(dims, &raw)?;
            Ok((ours.entries() - reference).norm())
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(suite("projection", cfg.projection_samples, worst, 1e-4))
}

#[cfg(not(feature = "qp-oracle"))]
pub fn projection_suite(_cfg: &VerifyConfig) -> Result<SuiteResult> {
    Ok(SuiteResult {
        name: "projection",
        samples: 0,
        worst: f64::NAN,
        limit: 1e-4,
        passed: false,
        skipped: true,
    })
}

/// Run every numerical suite.
pub fn run_verify(cfg: &VerifyConfig) -> Result<VerifyReport> {
    if cfg.sweep.is_empty() || cfg.sweep.iter().any(|&(n, _)| n < 2) {
        return Err(Error::InvalidArgument(
            "verification sweep needs n >= 2 everywhere".into(),
        ));
    }
    let mut meta = Metadata::new("verify");
    meta.push("seed", cfg.seed);
    let mut sweep = String::new();
    for (n, l) in &cfg.sweep {
        let _ = write!(sweep, "{n}x{l} ");
    }
    meta.push("sweep", sweep.trim_end());
    meta.push("gamma_samples", cfg.gamma_samples);
    meta.push("gradient_samples", cfg.gradient_samples);
    meta.push("diameter_samples", cfg.diameter_samples);
    meta.push("projection_samples", cfg.projection_samples);
    meta.push("hessian_samples", cfg.hessian_samples);
    let (identity, fd) = hessian_suites(cfg)?;
    let suites = vec![
        gradient_suite(cfg)?,
        identity,
        fd,
        gamma_suite(cfg)?,
        projection_suite(cfg)?,
        feasibility_suite(cfg)?,
        diameter_suite(cfg)?,
        concavity_suite(cfg)?,
    ];
    Ok(VerifyReport { metadata: meta, suites })
}
