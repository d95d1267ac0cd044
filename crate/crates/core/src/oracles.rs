//! Brute-force and derivative-free reference computations.
//!
//! Nothing in here shares a code path with the quantities it is used to
//! check: OPT is found by enumeration, derivatives by central differences
//! through an LU determinant, projections by a conic interior-point solver,
//! and regularized maxima by derivative-free search.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use crate::environments::PayoffFunction;
use crate::error::{mismatch, Error, Result};
use crate::polytope::{check_feasibility, FeasibilityTolerance, ProblemDims, PseudoMomentMatrix};

/// Largest number of labelings [`brute_force_opt`] will enumerate.
pub const MAX_LABELINGS: u64 = 1_000_000;

/// One label per item.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Labeling(pub Vec<usize>);

impl Labeling {
    pub fn labels(&self) -> &[usize] {
        &self.0
    }
}

/// Best fixed labeling in hindsight.
#[derive(Debug, Clone, PartialEq)]
pub struct OptResult {
    pub opt_value: f64,
    /// Lexicographically smallest maximizer.
    pub argmax_labeling: Labeling,
    /// Number of labelings attaining the maximum (within `1e-9` relative).
    pub ties: u64,
}

/// Total payoff `sum_t P^t(l(i_t), l(j_t))` of a fixed labeling.
pub fn labeling_payoff(seq: &[PayoffFunction], labeling: &Labeling) -> Result<f64> {
    let labels = labeling.labels();
    let mut total = 0.0;
    for p in seq {
        let (i, j) = p.pair();
        let (Some(&a), Some(&b)) = (labels.get(i), labels.get(j)) else {
            return Err(Error::InvalidArgument(format!(
                "labeling of length {} does not cover pair ({i}, {j})",
                labels.len()
            )));
        };
        let l = p.block().nrows();
        if a >= l || b >= l {
            return Err(Error::InvalidArgument(format!(
                "label out of range for L={l}: ({a}, {b})"
            )));
        }
        total += p.block()[(a, b)];
    }
    Ok(total)
}

/// Exhaustive maximum over all `L^n` labelings.
pub fn brute_force_opt(seq: &[PayoffFunction], dims: ProblemDims) -> Result<OptResult> {
    let n = dims.n_items();
    let l = dims.n_labels();
    let count = (l as u64)
        .checked_pow(n as u32)
        .filter(|&c| c <= MAX_LABELINGS)
        .ok_or_else(|| {
            Error::TooLarge(format!(
                "L^n = {l}^{n} labelings exceeds the {MAX_LABELINGS} guard; \
                 bound OPT by sampling labelings instead"
            ))
        })?;

    // Sum of payoff blocks per unordered pair, oriented (i, j) with i < j.
    let mut pair_blocks: Vec<((usize, usize), DMatrix<f64>)> = Vec::new();
    let mut slot = std::collections::BTreeMap::new();
    for p in seq {
        let (i, j) = p.pair();
        dims.check_item(i)?;
        dims.check_item(j)?;
        if p.block().nrows() != l {
            return Err(mismatch(format!("{l}x{l} block"), p.block().nrows()));
        }
        let (key, block) = if i < j {
            ((i, j), p.block().clone())
        } else {
            ((j, i), p.block().transpose())
        };
        let idx = *slot.entry(key).or_insert_with(|| {
            pair_blocks.push((key, DMatrix::zeros(l, l)));
            pair_blocks.len() - 1
        });
        pair_blocks[idx].1 += block;
    }

    let decode = |mut code: u64| -> Vec<usize> {
        let mut labels = vec![0usize; n];
        for slot in labels.iter_mut().rev() {
            *slot = (code % l as u64) as usize;
            code /= l as u64;
        }
        labels
    };
    let values: Vec<f64> = (0..count)
        .into_par_iter()
        .map(|code| {
            let labels = decode(code);
            pair_blocks.iter().map(|((i, j), b)| b[(labels[*i], labels[*j])]).sum()
        })
        .collect();

    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let eps = 1e-9 * best.abs().max(1.0);
    let mut ties = 0u64;
    let mut first = None;
    for (code, &v) in values.iter().enumerate() {
        if v >= best - eps {
            ties += 1;
            first.get_or_insert(code as u64);
        }
    }
    let argmax_labeling = Labeling(decode(first.unwrap_or(0)));
    let opt_value = labeling_payoff(seq, &argmax_labeling)?;
    Ok(OptResult {
        opt_value,
        argmax_labeling,
        ties,
    })
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// Central-difference gradient of a scalar function of a matrix, one entry
/// at a time, symmetrized at the end.
pub fn fd_gradient<F>(f: F, m: &DMatrix<f64>, step: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&DMatrix<f64>) -> Result<f64>,
{
    let mut x = m.clone();
    let mut g = DMatrix::zeros(m.nrows(), m.ncols());
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            let orig = x[(r, c)];
            x[(r, c)] = orig + step;
            let fp = finite(f(&x)?, "finite-difference evaluation")?;
            x[(r, c)] = orig - step;
            let fm = finite(f(&x)?, "finite-difference evaluation")?;
            x[(r, c)] = orig;
            g[(r, c)] = (fp - fm) / (2.0 * step);
        }
    }
    Ok((&g + g.transpose()) * 0.5)
}

/// Central second differences over all entry pairs of a square matrix.
/// Rows and columns of the result follow the `(r, c) -> r * side + c`
/// flattening.
pub fn fd_hessian<F>(f: F, m: &DMatrix<f64>, step: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&DMatrix<f64>) -> Result<f64>,
{
    let side = m.nrows();
    if m.ncols() != side {
        return Err(mismatch("square matrix", format!("{}x{}", m.nrows(), m.ncols())));
    }
    let n2 = side * side;
    let coord = |k: usize| (k / side, k % side);
    let mut h = DMatrix::zeros(n2, n2);
    let mut x = m.clone();
    for p in 0..n2 {
        for q in p..n2 {
            let mut eval = |sp: f64, sq: f64| -> Result<f64> {
                x[coord(p)] += sp;
                x[coord(q)] += sq;
                let v = f(&x);
                x[coord(p)] -= sp;
                x[coord(q)] -= sq;
                finite(v?, "finite-difference evaluation")
            };
            let v = (eval(step, step)? - eval(step, -step)? - eval(-step, step)? + eval(-step, -step)?)
                / (4.0 * step * step);
            h[(p, q)] = v;
            h[(q, p)] = v;
        }
    }
    Ok(h)
}

/// `log det(I + L X)` through an LU factorization, defined for any square
/// `X` whose shifted determinant is positive.
pub fn logdet_shifted_general(x: &DMatrix<f64>, n_labels: usize) -> Result<f64> {
    let side = x.nrows();
    let b = DMatrix::<f64>::identity(side, side) + x * n_labels as f64;
    let det = b.lu().determinant();
    if !(det > 0.0) {
        return Err(Error::NonFinite(format!("log of non-positive determinant {det}")));
    }
    Ok(det.ln())
}

/// Settings for [`search_maximum`].
#[derive(Debug, Clone, Copy)]
pub struct SearchOptions {
    pub initial_step: f64,
    pub final_step: f64,
    /// Consecutive failed trial moves before the step is halved.
    pub patience: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            initial_step: 1e-2,
            final_step: 1e-8,
            patience: 400,
        }
    }
}

/// Derivative-free maximization of `f` over the polytope starting from a
/// feasible point.
///
/// Trial moves are random symmetric directions with zero block sums (so the
/// marginal constraints are preserved exactly), normalized to the current
/// step length; a move is kept when it stays feasible and improves `f`. The
/// step starts at `initial_step` and halves after `patience` consecutive
/// failures until it reaches `final_step`.
pub fn search_maximum<F, R>(
    f: F,
    start: &PseudoMomentMatrix,
    opts: SearchOptions,
    rng: &mut R,
) -> Result<(PseudoMomentMatrix, f64)>
where
    F: Fn(&DMatrix<f64>) -> Result<f64>,
    R: Rng + ?Sized,
{
    let dims = start.dims();
    let side = dims.side();
    let l = dims.n_labels();
    let tight = FeasibilityTolerance::new(1e-12)?;
    let mut x = start.entries().clone();
    let mut fx = f(&x)?;
    let mut step = opts.initial_step;
    let mut failures = 0usize;
    while step >= opts.final_step {
        let mut d = DMatrix::from_fn(side, side, |_, _| rng.random_range(-1.0..1.0));
        // Sparse directions help along faces where many entries sit at zero.
        if rng.random_bool(0.5) {
            for v in d.iter_mut() {
                if rng.random_bool(0.7) {
                    *v = 0.0;
                }
            }
        }
        d = (&d + d.transpose()) * 0.5;
        for i in 0..dims.n_items() {
            for j in 0..dims.n_items() {
                let mean = d.view((i * l, j * l), (l, l)).sum() / (l * l) as f64;
                d.view_mut((i * l, j * l), (l, l)).add_scalar_mut(-mean);
            }
        }
        let norm = d.norm();
        if norm == 0.0 {
            continue;
        }
        let cand = &x + d * (step / norm);
        let improved = check_feasibility(dims, &cand, tight)?.feasible
            && match f(&cand) {
                Ok(fc) if fc > fx => {
                    fx = fc;
                    true
                }
                _ => false,
            };
        if improved {
            x = cand;
            failures = 0;
        } else {
            failures += 1;
            if failures >= opts.patience {
                step *= 0.5;
                failures = 0;
            }
        }
    }
    Ok((PseudoMomentMatrix::new(dims, x)?, fx))
}

/// Frobenius projection onto the polytope computed by the Clarabel conic
/// solver.
///
/// Every feasible `M` annihilates the differences of item indicator
/// vectors, so the problem is posed over `M = Q S Q^T` with `Q` an
/// orthonormal basis of their complement. The reduced problem has strictly
/// feasible points, which the interior-point method needs for full accuracy:
/// minimize `|S - Q^T X Q|^2 / 2` subject to one block-sum equality, entry
/// bounds on `Q S Q^T`, and `S` PSD.
#[cfg(feature = "qp-oracle")]
pub fn qp_projection(dims: ProblemDims, raw: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    use clarabel::algebra::CscMatrix;
    use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};

    dims.check_shape(raw)?;
    let side = dims.side();
    let l = dims.n_labels();
    let raw = (raw + raw.transpose()) * 0.5;

    // Basis of vectors whose per-item label sums agree.
    let mut w = DMatrix::<f64>::zeros(side, dims.n_items().saturating_sub(1));
    for i in 1..dims.n_items() {
        for a in 0..l {
            w[(a, i - 1)] = 1.0;
            w[(i * l + a, i - 1)] = -1.0;
        }
    }
    let basis = if w.ncols() == 0 {
        DMatrix::<f64>::identity(side, side)
    } else {
        let svd = w.clone().svd(true, false);
        let u = svd.u.ok_or_else(|| Error::Oracle("SVD failed".into()))?;
        let proj = DMatrix::<f64>::identity(side, side) - &u * u.transpose();
        let eig = nalgebra::SymmetricEigen::new(proj);
        let keep: Vec<usize> = (0..side).filter(|&k| eig.eigenvalues[k] > 0.5).collect();
        DMatrix::from_fn(side, keep.len(), |r, c| eig.eigenvectors[(r, keep[c])])
    };
    let d = basis.ncols();
    let y = basis.transpose() * &raw * &basis;
    let nv = d * (d + 1) / 2;
    let var = |r: usize, c: usize| {
        let (r, c) = if r <= c { (r, c) } else { (c, r) };
        c * (c + 1) / 2 + r
    };
    // Coefficients of entry (r, c) of Q S Q^T in the S variables.
    let entry_row = |r: usize, c: usize| -> Vec<f64> {
        let mut coef = vec![0.0; nv];
        for b in 0..d {
            for a in 0..=b {
                coef[var(a, b)] += if a == b {
                    basis[(r, a)] * basis[(c, a)]
                } else {
                    basis[(r, a)] * basis[(c, b)] + basis[(r, b)] * basis[(c, a)]
                };
            }
        }
        coef
    };

    let mut p_diag = vec![0.0; nv];
    let mut q = vec![0.0; nv];
    for c in 0..d {
        for r in 0..=c {
            let k = var(r, c);
            let weight = if r == c { 1.0 } else { 2.0 };
            p_diag[k] = weight;
            q[k] = -weight * y[(r, c)];
        }
    }

    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    let mut b = Vec::new();
    let push_row = |triplets: &mut Vec<(usize, usize, f64)>, row: usize, coef: &[f64], sign: f64| {
        for (k, &v) in coef.iter().enumerate() {
            if v.abs() > 1e-15 {
                triplets.push((row, k, sign * v));
            }
        }
    };
    // Block (0, 0) sums to one; the rest follow from the parametrization.
    let mut sum_coef = vec![0.0; nv];
    for a in 0..l {
        for bb in 0..l {
            for (k, v) in entry_row(a, bb).into_iter().enumerate() {
                sum_coef[k] += v;
            }
        }
    }
    push_row(&mut triplets, 0, &sum_coef, 1.0);
    b.push(1.0);
    let mut row = 1;
    let entries: Vec<(usize, usize)> = (0..side).flat_map(|c| (0..=c).map(move |r| (r, c))).collect();
    let rows: Vec<Vec<f64>> = entries.iter().map(|&(r, c)| entry_row(r, c)).collect();
    for coef in &rows {
        push_row(&mut triplets, row, coef, -1.0);
        b.push(0.0);
        row += 1;
    }
    for coef in &rows {
        push_row(&mut triplets, row, coef, 1.0);
        b.push(1.0);
        row += 1;
    }
    for c in 0..d {
        for r in 0..=c {
            let scale = if r == c { 1.0 } else { std::f64::consts::SQRT_2 };
            triplets.push((row + var(r, c), var(r, c), -scale));
        }
    }
    b.extend(std::iter::repeat_n(0.0, nv));
    let m_rows = row + nv;

    let to_csc = |rows: usize, cols: usize, mut t: Vec<(usize, usize, f64)>| {
        t.sort_by_key(|&(r, c, _)| (c, r));
        let mut colptr = vec![0usize; cols + 1];
        for &(_, c, _) in &t {
            colptr[c + 1] += 1;
        }
        for c in 0..cols {
            colptr[c + 1] += colptr[c];
        }
        let rowval = t.iter().map(|&(r, _, _)| r).collect();
        let nzval = t.iter().map(|&(_, _, v)| v).collect();
        CscMatrix::new(rows, cols, colptr, rowval, nzval)
    };
    let p_mat = to_csc(nv, nv, p_diag.iter().enumerate().map(|(k, &v)| (k, k, v)).collect());
    let a_mat = to_csc(m_rows, nv, triplets);
    let cones = [
        SupportedConeT::ZeroConeT(1),
        SupportedConeT::NonnegativeConeT(2 * entries.len()),
        SupportedConeT::PSDTriangleConeT(d),
    ];
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .tol_gap_abs(1e-12)
        .tol_gap_rel(1e-12)
        .tol_feas(1e-12)
        .build()
        .map_err(|e| Error::Oracle(format!("{e:?}")))?;
    let mut solver =
        DefaultSolver::new(&p_mat, &q, &a_mat, &b, &cones, settings).map_err(|e| Error::Oracle(format!("{e:?}")))?;
    solver.solve();
    match solver.solution.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {}
        other => return Err(Error::Oracle(format!("solver status {other:?}"))),
    }
    let x = &solver.solution.x;
    let s_mat = DMatrix::from_fn(d, d, |r, c| x[var(r, c)]);
    Ok(&basis * s_mat * basis.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::PayoffFunction;

    fn maxcut_triangle() -> Vec<PayoffFunction> {
        let cut = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        [(0, 1), (0, 2), (1, 2)]
            .into_iter()
            .map(|pair| PayoffFunction::new(pair, cut.clone()).unwrap())
            .collect()
    }

    #[test]
    fn empty_sequence_pays_zero() {
        assert_eq!(labeling_payoff(&[], &Labeling(vec![0, 1])).unwrap(), 0.0);
    }

    #[test]
    fn single_round_indicator() {
        let mut block = DMatrix::zeros(2, 2);
        block[(0, 1)] = 1.0;
        let seq = vec![PayoffFunction::new((0, 1), block).unwrap()];
        assert_eq!(labeling_payoff(&seq, &Labeling(vec![0, 1])).unwrap(), 1.0);
        assert_eq!(labeling_payoff(&seq, &Labeling(vec![1, 0])).unwrap(), 0.0);
        assert!(labeling_payoff(&seq, &Labeling(vec![0, 2])).is_err());
        assert!(labeling_payoff(&seq, &Labeling(vec![0])).is_err());
    }

    #[test]
    fn triangle_opt_and_ties() {
        let seq = maxcut_triangle();
        assert_eq!(labeling_payoff(&seq, &Labeling(vec![0, 0, 1])).unwrap(), 2.0);
        let opt = brute_force_opt(&seq, ProblemDims::new(3, 2).unwrap()).unwrap();
        assert_eq!(opt.opt_value, 2.0);
        assert_eq!(opt.ties, 6);
        assert_eq!(opt.argmax_labeling, Labeling(vec![0, 0, 1]));
    }

    #[test]
    fn single_round_opt_is_max_entry() {
        let block = DMatrix::from_row_slice(3, 3, &[0.1, -0.5, 0.7, 0.2, 0.9, -1.0, 0.0, 0.3, 0.4]);
        let seq = vec![PayoffFunction::new((2, 0), block).unwrap()];
        let opt = brute_force_opt(&seq, ProblemDims::new(3, 3).unwrap()).unwrap();
        assert_eq!(opt.opt_value, 0.9);
        // pair (2, 0) takes label 1 on item 2 and label 1 on item 0
        assert_eq!(opt.argmax_labeling.labels()[2], 1);
        assert_eq!(opt.argmax_labeling.labels()[0], 1);
    }

    #[test]
    fn guard_rejects_large_enumeration() {
        assert!(matches!(
            brute_force_opt(&[], ProblemDims::new(21, 2).unwrap()),
            Err(Error::TooLarge(_))
        ));
        assert!(brute_force_opt(&[], ProblemDims::new(12, 3).unwrap()).is_ok());
    }

    #[test]
    fn fd_gradient_of_trace_and_square() {
        let m = DMatrix::from_fn(3, 3, |r, c| ((r + 2 * c) as f64).cos());
        let m = (&m + m.transpose()) * 0.5;
        let g = fd_gradient(|x| Ok(x.trace()), &m, 1e-5).unwrap();
        assert!((g - DMatrix::<f64>::identity(3, 3)).amax() < 1e-10);
        let g = fd_gradient(|x| Ok(x.dot(x)), &m, 1e-5).unwrap();
        assert!((g - &m * 2.0).amax() < 1e-6);
    }

    #[test]
    fn fd_gradient_of_logdet_at_zero() {
        let g = fd_gradient(|x| logdet_shifted_general(x, 3), &DMatrix::zeros(3, 3), 1e-5).unwrap();
        assert!((g - DMatrix::<f64>::identity(3, 3) * 3.0).amax() < 1e-6);
    }

    #[test]
    fn fd_rejects_non_finite() {
        let r = fd_gradient(|_| Ok(f64::NAN), &DMatrix::zeros(1, 1), 1e-5);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }
}
