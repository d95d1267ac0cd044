//! Follow-the-regularized-leader over the pseudo-moment polytope.
//!
//! The iterate after `t` rounds maximizes
//! `nu * <sum_s P_s, M> + log det(I + L M)` over the polytope. The inner
//! maximization is solved by projected gradient ascent with backtracking,
//! warm-started from the previous iterate.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::RngCore;

use crate::environments::{Environment, PayoffFunction};
use crate::error::{Error, Result};
use crate::polytope::{project, sample_block, uniform_matrix, ProblemDims, ProjectionOptions, PseudoMomentMatrix};
use crate::regularizer;

/// Settings for the per-round maximization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerSolverConfig {
    /// Initial ascent step; backtracking halves it.
    pub step_size: f64,
    pub max_iters: usize,
    /// Stop once the gradient-mapping norm drops below this.
    pub grad_tol: f64,
    pub projection: ProjectionOptions,
}

impl InnerSolverConfig {
    /// `step_size = 0.1 / L`, 500 iterations, `grad_tol = 1e-6`.
    pub fn for_labels(n_labels: usize) -> Self {
        Self {
            step_size: 0.1 / n_labels as f64,
            max_iters: 500,
            grad_tol: 1e-6,
            projection: ProjectionOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.step_size > 0.0
            && self.step_size.is_finite()
            && self.max_iters > 0
            && self.grad_tol > 0.0
            && self.projection.tol > 0.0
            && self.projection.max_iters > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "inner solver settings must be positive: {self:?}"
            )))
        }
    }
}

/// Convergence record of one inner solve.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveStats {
    pub iterations: usize,
    /// Final gradient-mapping norm.
    pub residual: f64,
    pub converged: bool,
}

/// Output of [`inner_solve`].
#[derive(Debug, Clone)]
pub struct InnerSolution {
    pub matrix: PseudoMomentMatrix,
    pub objective: f64,
    pub stats: SolveStats,
}

/// `<C, M> + log det(I + L M)`.
pub fn objective(linear: &DMatrix<f64>, m: &PseudoMomentMatrix) -> Result<f64> {
    Ok(linear.dot(m.entries()) + regularizer::eval(m)?.value)
}

/// Maximize `<C, M> + log det(I + L M)` over the polytope, starting at
/// `warm`.
///
/// Each iteration tries `M+ = project(M + eta * grad)` from
/// `eta = cfg.step_size` and halves `eta` until the sufficient-ascent test
/// `F(M+) >= F(M) + <grad, M+ - M> - |M+ - M|^2 / (2 eta)` passes. The best
/// iterate seen is returned even without convergence.
pub fn inner_solve(linear: &DMatrix<f64>, warm: &PseudoMomentMatrix, cfg: &InnerSolverConfig) -> Result<InnerSolution> {
    cfg.validate()?;
    let dims = warm.dims();
    dims.check_shape(linear)?;
    let l = dims.n_labels();

    let mut x = warm.clone();
    let mut ev = regularizer::eval(&x)?;
    let mut fx = linear.dot(x.entries()) + ev.value;
    let mut stats = SolveStats {
        iterations: 0,
        residual: f64::INFINITY,
        converged: false,
    };
    for it in 1..=cfg.max_iters {
        stats.iterations = it;
        let grad = linear + &ev.gradient;
        let mut eta = cfg.step_size;
        let accepted = loop {
            let trial = x.entries() + &grad * eta;
            let cand = project(dims, &trial, cfg.projection)?.matrix;
            let step = cand.entries() - x.entries();
            let step_norm = step.norm();
            let cand_eval = regularizer::eval_raw(cand.entries(), l);
            if let Ok(cand_eval) = cand_eval {
                let fc = linear.dot(cand.entries()) + cand_eval.value;
                let model = fx + grad.dot(&step) - step_norm * step_norm / (2.0 * eta);
                if fc >= model - 1e-12 * (1.0 + fx.abs()) {
                    break Some((cand, cand_eval, fc, step_norm / eta));
                }
            }
            eta *= 0.5;
            if eta < cfg.step_size * 1e-12 {
                break None;
            }
        };
        let Some((cand, cand_eval, fc, mapping_norm)) = accepted else {
            break;
        };
        stats.residual = mapping_norm;
        if fc >= fx {
            x = cand;
            ev = cand_eval;
            fx = fc;
        }
        if mapping_norm < cfg.grad_tol {
            stats.converged = true;
            break;
        }
    }
    Ok(InnerSolution {
        matrix: x,
        objective: fx,
        stats,
    })
}

/// `nu = sqrt(D / (gamma T))` with `D = nL` and `gamma = 4`.
pub fn choose_nu(dims: ProblemDims, rounds: usize) -> Result<f64> {
    if rounds == 0 {
        return Err(Error::InvalidArgument("T must be at least 1".into()));
    }
    Ok((dims.side() as f64 / (4.0 * rounds as f64)).sqrt())
}

/// Cumulative payoff, one block per unordered pair stored with the smaller
/// item first and symmetrized on read.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PayoffAccumulator {
    blocks: BTreeMap<(usize, usize), DMatrix<f64>>,
}

impl PayoffAccumulator {
    pub fn add(&mut self, payoff: &PayoffFunction) {
        let (i, j) = payoff.pair();
        let l = payoff.n_labels();
        let (key, block) = if i < j {
            ((i, j), payoff.block().clone())
        } else {
            ((j, i), payoff.block().transpose())
        };
        *self.blocks.entry(key).or_insert_with(|| DMatrix::zeros(l, l)) += block;
    }

    pub fn block(&self, i: usize, j: usize) -> Option<DMatrix<f64>> {
        if i < j {
            self.blocks.get(&(i, j)).cloned()
        } else {
            self.blocks.get(&(j, i)).map(|b| b.transpose())
        }
    }

    /// Symmetric `C` with `<C, M>` equal to the payoff of `M`: half of each
    /// block goes to `(i, j)` and half (transposed) to `(j, i)`.
    pub fn symmetric_matrix(&self, dims: ProblemDims) -> DMatrix<f64> {
        let l = dims.n_labels();
        let mut c = DMatrix::zeros(dims.side(), dims.side());
        for (&(i, j), block) in &self.blocks {
            for a in 0..l {
                for b in 0..l {
                    let v = 0.5 * block[(a, b)];
                    c[(i * l + a, j * l + b)] += v;
                    c[(j * l + b, i * l + a)] += v;
                }
            }
        }
        c
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks.values().map(|b| b.amax()).fold(0.0, f64::max)
    }
}

/// Learner state: cumulative payoffs and the current iterate.
#[derive(Debug, Clone)]
pub struct FtrlState {
    dims: ProblemDims,
    nu: f64,
    payoffs: PayoffAccumulator,
    current: PseudoMomentMatrix,
    inner_cfg: InnerSolverConfig,
    last_solve: SolveStats,
    rounds_seen: usize,
}

impl FtrlState {
    /// Start at the maximizer of the regularizer alone.
    pub fn init(dims: ProblemDims, nu: f64, inner_cfg: InnerSolverConfig) -> Result<Self> {
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(Error::InvalidArgument(format!("nu must be positive, got {nu}")));
        }
        inner_cfg.validate()?;
        let linear = DMatrix::zeros(dims.side(), dims.side());
        let sol = inner_solve(&linear, &uniform_matrix(dims), &inner_cfg)?;
        Ok(Self {
            dims,
            nu,
            payoffs: PayoffAccumulator::default(),
            current: sol.matrix,
            inner_cfg,
            last_solve: sol.stats,
            rounds_seen: 0,
        })
    }

    pub fn dims(&self) -> ProblemDims {
        self.dims
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn current(&self) -> &PseudoMomentMatrix {
        &self.current
    }

    pub fn payoffs(&self) -> &PayoffAccumulator {
        &self.payoffs
    }

    pub fn inner_cfg(&self) -> &InnerSolverConfig {
        &self.inner_cfg
    }

    pub fn last_solve(&self) -> SolveStats {
        self.last_solve
    }

    pub fn rounds_seen(&self) -> usize {
        self.rounds_seen
    }

    /// Sample labels for the queried pair from the current iterate.
    pub fn predict<R: RngCore + ?Sized>(&self, i: usize, j: usize, rng: &mut R) -> Result<(usize, usize)> {
        Ok(sample_block(&self.current, i, j, rng)?.labels)
    }

    /// `<P block, M block>` under the current iterate.
    pub fn expected_payoff(&self, payoff: &PayoffFunction) -> f64 {
        let (i, j) = payoff.pair();
        payoff.block().dot(&self.current.block(i, j))
    }

    /// Add the round's payoff and move to the new regularized leader.
    pub fn update(&mut self, payoff: &PayoffFunction) -> Result<()> {
        let (i, j) = payoff.pair();
        self.dims.check_item(i)?;
        self.dims.check_item(j)?;
        if payoff.n_labels() != self.dims.n_labels() {
            return Err(crate::error::mismatch(
                format!("{} labels", self.dims.n_labels()),
                payoff.n_labels(),
            ));
        }
        self.payoffs.add(payoff);
        self.rounds_seen += 1;
        let linear = self.payoffs.symmetric_matrix(self.dims) * self.nu;
        let sol = inner_solve(&linear, &self.current, &self.inner_cfg)?;
        self.current = sol.matrix;
        self.last_solve = sol.stats;
        Ok(())
    }
}

/// Anything that can play the online game.
pub trait OnlineLearner {
    fn predict(&mut self, pair: (usize, usize), rng: &mut dyn RngCore) -> Result<(usize, usize)>;

    /// Expected payoff of this round's reply under the learner's own
    /// randomness.
    fn expected_payoff(&self, payoff: &PayoffFunction) -> f64;

    fn observe(&mut self, payoff: &PayoffFunction) -> Result<()>;

    fn last_solve(&self) -> Option<SolveStats> {
        None
    }
}

impl OnlineLearner for FtrlState {
    fn predict(&mut self, pair: (usize, usize), rng: &mut dyn RngCore) -> Result<(usize, usize)> {
        FtrlState::predict(self, pair.0, pair.1, rng)
    }

    fn expected_payoff(&self, payoff: &PayoffFunction) -> f64 {
        FtrlState::expected_payoff(self, payoff)
    }

    fn observe(&mut self, payoff: &PayoffFunction) -> Result<()> {
        self.update(payoff)
    }

    fn last_solve(&self) -> Option<SolveStats> {
        Some(self.last_solve)
    }
}

/// One played round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    /// 1-based round index.
    pub t: usize,
    pub pair: (usize, usize),
    pub predicted: (usize, usize),
    pub payoff_received: f64,
    pub expected_payoff: f64,
    /// Statistics of the update that followed this round, if any.
    pub solve: Option<SolveStats>,
}

/// Play every round of `env`.
pub fn run_game(
    learner: &mut dyn OnlineLearner,
    env: &mut dyn Environment,
    rng: &mut dyn RngCore,
) -> Result<Vec<RoundRecord>> {
    let mut records = Vec::with_capacity(env.total_rounds());
    while let Some(pair) = env.next_pair() {
        let predicted = learner.predict(pair, rng)?;
        let payoff = env.reveal(predicted)?;
        let expected_payoff = learner.expected_payoff(&payoff);
        let payoff_received = payoff.value(predicted);
        learner.observe(&payoff)?;
        records.push(RoundRecord {
            t: records.len() + 1,
            pair,
            predicted,
            payoff_received,
            expected_payoff,
            solve: learner.last_solve(),
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polytope::{is_feasible, FeasibilityTolerance};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dims(n: usize, l: usize) -> ProblemDims {
        ProblemDims::new(n, l).unwrap()
    }

    #[test]
    fn choose_nu_values() {
        assert!((choose_nu(dims(4, 2), 8).unwrap() - 0.5).abs() < 1e-15);
        assert!((choose_nu(dims(1, 1), 1).unwrap() - 0.5).abs() < 1e-15);
        let d = dims(3, 5);
        let a = choose_nu(d, 10).unwrap();
        let b = choose_nu(d, 40).unwrap();
        assert!((a / 2.0 - b).abs() < 1e-15);
        assert!(choose_nu(d, 0).is_err());
    }

    #[test]
    fn accumulator_symmetrizes() {
        let mut acc = PayoffAccumulator::default();
        let block = DMatrix::from_row_slice(2, 2, &[1.0, -0.5, 0.25, 0.0]);
        acc.add(&PayoffFunction::new((1, 0), block.clone()).unwrap());
        acc.add(&PayoffFunction::new((0, 1), block.transpose()).unwrap());
        assert_eq!(acc.block(1, 0).unwrap(), &block * 2.0);
        let d = dims(2, 2);
        let c = acc.symmetric_matrix(d);
        assert_eq!(c, c.transpose());
        // <C, M> equals the pair payoff for any M
        let m = uniform_matrix(d);
        let direct: f64 = (acc.block(0, 1).unwrap()).dot(&m.block(0, 1));
        assert!((c.dot(m.entries()) - direct).abs() < 1e-15);
    }

    #[test]
    fn init_single_item_two_labels_is_half_identity() {
        let st = FtrlState::init(dims(1, 2), 1.0, InnerSolverConfig::for_labels(2)).unwrap();
        let m = st.current().entries();
        assert!((m[(0, 0)] - 0.5).abs() < 1e-4, "{m}");
        assert!((m[(1, 1)] - 0.5).abs() < 1e-4, "{m}");
        assert!(m[(0, 1)].abs() < 1e-4, "{m}");
    }

    #[test]
    fn init_does_not_depend_on_nu() {
        let cfg = InnerSolverConfig::for_labels(2);
        let a = FtrlState::init(dims(2, 2), 0.1, cfg).unwrap();
        let b = FtrlState::init(dims(2, 2), 10.0, cfg).unwrap();
        assert_eq!(a.current(), b.current());
        assert!(FtrlState::init(dims(2, 2), 0.0, cfg).is_err());
    }

    #[test]
    fn zero_payoff_keeps_iterate() {
        let cfg = InnerSolverConfig::for_labels(2);
        let mut st = FtrlState::init(dims(2, 2), 1.0, cfg).unwrap();
        let before = st.current().clone();
        st.update(&PayoffFunction::new((0, 1), DMatrix::zeros(2, 2)).unwrap())
            .unwrap();
        let moved = (st.current().entries() - before.entries()).norm();
        assert!(moved <= 2.0 * cfg.grad_tol, "moved {moved}");
    }

    #[test]
    fn repeated_payoff_concentrates_mass() {
        let d = dims(2, 2);
        let cfg = InnerSolverConfig::for_labels(2);
        let mut st = FtrlState::init(d, 1.0, cfg).unwrap();
        let mut block = DMatrix::from_element(2, 2, -1.0);
        block[(1, 0)] = 1.0;
        let p = PayoffFunction::new((0, 1), block).unwrap();
        for _ in 0..60 {
            st.update(&p).unwrap();
        }
        assert!(st.current().get(0, 1, 1, 0) >= 0.9, "{}", st.current().entries());
        let rep = is_feasible(st.current(), FeasibilityTolerance::default().scaled(10.0)).unwrap();
        assert!(rep.feasible, "{rep:?}");
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let hits = (0..1000)
            .filter(|_| st.predict(0, 1, &mut rng).unwrap() == (1, 0))
            .count();
        assert!(hits >= 900, "hits {hits}");
    }

    #[test]
    fn predictions_are_seed_deterministic() {
        let st = FtrlState::init(dims(3, 2), 1.0, InnerSolverConfig::for_labels(2)).unwrap();
        let a = st.predict(0, 2, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let b = st.predict(0, 2, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(a, b);
        assert!(st.predict(1, 1, &mut ChaCha8Rng::seed_from_u64(42)).is_err());
    }

    #[test]
    fn inner_solve_is_monotone_from_warm_start() {
        let d = dims(2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let warm = crate::polytope::sample_feasible(d, &mut rng);
        let c = DMatrix::from_fn(6, 6, |r, k| ((r * 7 + k * 3) as f64).sin());
        let c = (&c + c.transpose()) * 0.5;
        let f0 = objective(&c, &warm).unwrap();
        let sol = inner_solve(&c, &warm, &InnerSolverConfig::for_labels(3)).unwrap();
        assert!(sol.objective >= f0 - 1e-9);
        assert!((objective(&c, &sol.matrix).unwrap() - sol.objective).abs() < 1e-12);
    }

    #[test]
    fn bad_config_is_rejected() {
        let mut cfg = InnerSolverConfig::for_labels(2);
        cfg.max_iters = 0;
        assert!(FtrlState::init(dims(2, 2), 1.0, cfg).is_err());
    }
}
