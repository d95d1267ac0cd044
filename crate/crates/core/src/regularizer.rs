//! The log-determinant regularizer `R(M) = log det(I + L M)`.
//!
//! Every inverse and log-determinant goes through one symmetric
//! eigendecomposition of `I + L M`.

use nalgebra::{DMatrix, DVector};

use crate::error::{mismatch, Error, Result};
use crate::oracles;
use crate::polytope::{symmetric_eigen, symmetrize, ProblemDims, PseudoMomentMatrix};

/// Largest `nL` for which the dense `(nL)^2 x (nL)^2` Hessian is assembled.
pub const MAX_DENSE_HESSIAN_SIDE: usize = 8;
/// Step used for finite-difference gradients.
pub const FD_GRADIENT_STEP: f64 = 1e-5;
/// Step used for finite-difference Hessians.
pub const FD_HESSIAN_STEP: f64 = 1e-4;

/// Value and gradient of the regularizer.
#[derive(Debug, Clone)]
pub struct RegularizerEval {
    /// `log det(I + L M)` in nats.
    pub value: f64,
    /// `L (I + L M)^{-1}`, symmetric.
    pub gradient: DMatrix<f64>,
}

/// Eigendecomposition of `B = I + L M` for symmetric `M`.
#[derive(Debug, Clone)]
pub struct ShiftedFactor {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl ShiftedFactor {
    pub fn new(m: &DMatrix<f64>, n_labels: usize) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(mismatch("square matrix", format!("{}x{}", m.nrows(), m.ncols())));
        }
        let side = m.nrows();
        let b = DMatrix::<f64>::identity(side, side) + m * n_labels as f64;
        let eig = symmetric_eigen(&b);
        let min = eig.eigenvalues.min();
        if !(min > 0.0) {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
        }
        Ok(Self {
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
        })
    }

    pub fn log_det(&self) -> f64 {
        self.eigenvalues.iter().map(|v| v.ln()).sum()
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let inv = self.eigenvalues.map(|v| 1.0 / v);
        let v = &self.eigenvectors;
        symmetrize(&(v * DMatrix::from_diagonal(&inv) * v.transpose()))
    }
}

/// `log det(I + L M)` and its gradient for a raw symmetric matrix.
pub fn eval_raw(m: &DMatrix<f64>, n_labels: usize) -> Result<RegularizerEval> {
    let factor = ShiftedFactor::new(m, n_labels)?;
    Ok(RegularizerEval {
        value: factor.log_det(),
        gradient: factor.inverse() * n_labels as f64,
    })
}

pub fn eval(m: &PseudoMomentMatrix) -> Result<RegularizerEval> {
    eval_raw(m.entries(), m.dims().n_labels())
}

/// Upper bound `nL` on `|R|` over the polytope.
pub fn diameter_bound(dims: ProblemDims) -> f64 {
    (dims.n_items() * dims.n_labels()) as f64
}

/// Payoff-direction quadratic form of the inverse Hessian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadFormResult {
    pub value: f64,
    /// Sum of the `(i, j)` block of `I + L M`.
    pub block_sum: f64,
}

/// `P^T [Hess R(M)]^{-1} P` for a payoff supported on block `(i, j)`.
///
/// With `X` the `(i, j)` block of `I + L M`, the closed-form inverse gives
/// `-(1/L^2) sum_{abcd} P_ab P_cd X_cb X_ad = -(1/L^2) tr(P X^T P X^T)`.
pub fn inv_hessian_quadform(
    m: &PseudoMomentMatrix,
    i: usize,
    j: usize,
    payoff: &DMatrix<f64>,
) -> Result<QuadFormResult> {
    let dims = m.dims();
    dims.check_item(i)?;
    dims.check_item(j)?;
    let l = dims.n_labels();
    if payoff.nrows() != l || payoff.ncols() != l {
        return Err(mismatch(
            format!("{l}x{l} payoff block"),
            format!("{}x{}", payoff.nrows(), payoff.ncols()),
        ));
    }
    let lf = l as f64;
    let mut x = m.block(i, j) * lf;
    if i == j {
        for a in 0..l {
            x[(a, a)] += 1.0;
        }
    }
    let px = payoff * x.transpose();
    let value = -(&px * &px).trace() / (lf * lf);
    Ok(QuadFormResult {
        value,
        block_sum: x.sum(),
    })
}

/// Closed-form Hessian with respect to the entries of `M` treated as
/// independent: `H_{(w,x),(y,z)} = -L^2 B^{-1}_{x,y} B^{-1}_{z,w}`, where the
/// pair `(w, x)` maps to row `w * nL + x`.
pub fn hessian_closed_form(m: &PseudoMomentMatrix) -> Result<DMatrix<f64>> {
    let side = check_dense_size(m)?;
    let l = m.dims().n_labels() as f64;
    let binv = ShiftedFactor::new(m.entries(), m.dims().n_labels())?.inverse();
    let n2 = side * side;
    Ok(DMatrix::from_fn(n2, n2, |r, c| {
        let (w, x) = (r / side, r % side);
        let (y, z) = (c / side, c % side);
        -l * l * binv[(x, y)] * binv[(z, w)]
    }))
}

/// Claimed inverse `H~_{(w,x),(y,z)} = -(1/L^2) B_{x,y} B_{w,z}`.
pub fn inverse_hessian_closed_form(m: &PseudoMomentMatrix) -> Result<DMatrix<f64>> {
    let side = check_dense_size(m)?;
    let l = m.dims().n_labels() as f64;
    let b = DMatrix::<f64>::identity(side, side) + m.entries() * l;
    let n2 = side * side;
    Ok(DMatrix::from_fn(n2, n2, |r, c| {
        let (w, x) = (r / side, r % side);
        let (y, z) = (c / side, c % side);
        -b[(x, y)] * b[(w, z)] / (l * l)
    }))
}

fn check_dense_size(m: &PseudoMomentMatrix) -> Result<usize> {
    let side = m.dims().side();
    if side > MAX_DENSE_HESSIAN_SIDE {
        return Err(Error::TooLarge(format!(
            "dense Hessian needs nL <= {MAX_DENSE_HESSIAN_SIDE}, got {side}"
        )));
    }
    Ok(side)
}

/// Outcome of [`hessian_inverse_identity_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HessianCheck {
    /// `max |H H~ - Id|`.
    pub identity_deviation: f64,
    /// `max |H - H_fd| / max |H|`.
    pub fd_relative_error: f64,
}

/// Multiply the closed-form Hessian by its claimed inverse and compare the
/// Hessian against central second differences of `log det(I + L M)`.
///
/// The finite differences perturb single entries, so the value is taken
/// through an LU determinant that accepts non-symmetric arguments.
pub fn hessian_inverse_identity_check(m: &PseudoMomentMatrix) -> Result<HessianCheck> {
    let h = hessian_closed_form(m)?;
    let h_inv = inverse_hessian_closed_form(m)?;
    let n2 = h.nrows();
    let identity_deviation = (&h * &h_inv - DMatrix::<f64>::identity(n2, n2)).amax();
    let l = m.dims().n_labels();
    let fd = oracles::fd_hessian(
        |x: &DMatrix<f64>| oracles::logdet_shifted_general(x, l),
        m.entries(),
        FD_HESSIAN_STEP,
    )?;
    let fd_relative_error = (&fd - &h).amax() / h.amax();
    Ok(HessianCheck {
        identity_deviation,
        fd_relative_error,
    })
}

/// Largest eigenvalue of the closed-form Hessian restricted to symmetric
/// directions. Nonpositive (up to round-off) exactly when `R` is concave at
/// `M` along the space the polytope lives in.
pub fn max_symmetric_curvature(m: &PseudoMomentMatrix) -> Result<f64> {
    let h = hessian_closed_form(m)?;
    let side = m.dims().side();
    let n2 = side * side;
    // Orthogonal projector onto symmetric matrices: (v + v^T) / 2.
    let sym = DMatrix::from_fn(n2, n2, |r, c| {
        let t = (r % side) * side + r / side;
        0.5 * (f64::from(u8::from(r == c)) + f64::from(u8::from(t == c)))
    });
    let restricted = &sym * h * &sym;
    Ok(symmetric_eigen(&restricted).eigenvalues.max())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polytope::{sample_feasible, uniform_matrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dims(n: usize, l: usize) -> ProblemDims {
        ProblemDims::new(n, l).unwrap()
    }

    #[test]
    fn zero_matrix_value_and_gradient() {
        let e = eval_raw(&DMatrix::zeros(2, 2), 2).unwrap();
        assert_eq!(e.value, 0.0);
        assert!((e.gradient - DMatrix::<f64>::identity(2, 2) * 2.0).amax() < 1e-15);
    }

    #[test]
    fn uniform_value_is_log_one_plus_n() {
        for &(n, l) in &[(1, 1), (2, 2), (3, 4), (4, 3)] {
            let e = eval(&uniform_matrix(dims(n, l))).unwrap();
            assert!((e.value - (1.0 + n as f64).ln()).abs() < 1e-12, "n={n} L={l}");
        }
    }

    #[test]
    fn scalar_diameter_example() {
        let d = dims(1, 1);
        assert_eq!(diameter_bound(d), 1.0);
        let v = eval(&uniform_matrix(d)).unwrap().value;
        assert!((v - 2f64.ln()).abs() < 1e-15);
        assert!(v <= 1.0);
        assert_eq!(diameter_bound(dims(4, 3)), 12.0);
        let v = eval(&uniform_matrix(dims(2, 2))).unwrap().value;
        assert!((v - 3f64.ln()).abs() < 1e-12 && v <= 4.0);
    }

    #[test]
    fn indefinite_shift_is_an_error() {
        let m = DMatrix::from_diagonal_element(2, 2, -1.0);
        match eval_raw(&m, 2) {
            Err(Error::NotPositiveDefinite { min_eigenvalue }) => {
                assert!((min_eigenvalue + 1.0).abs() < 1e-12)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn gradient_is_exactly_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = sample_feasible(dims(3, 2), &mut rng);
        let g = eval(&m).unwrap().gradient;
        assert_eq!(g, g.transpose());
    }

    #[test]
    fn quadform_all_ones_on_uniform() {
        for l in 1..=4 {
            let m = uniform_matrix(dims(3, l));
            let p = DMatrix::from_element(l, l, 1.0);
            let q = inv_hessian_quadform(&m, 0, 2, &p).unwrap();
            assert!((q.value + 1.0).abs() < 1e-12);
            assert!((q.block_sum - l as f64).abs() < 1e-12);
            let z = inv_hessian_quadform(&m, 0, 2, &DMatrix::zeros(l, l)).unwrap();
            assert_eq!(z.value, 0.0);
        }
    }

    #[test]
    fn quadform_matches_quadruple_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = dims(3, 3);
        let m = sample_feasible(d, &mut rng);
        let p = DMatrix::from_fn(3, 3, |a, b| ((a * 3 + b) as f64 * 0.37).sin());
        let (i, j) = (2, 0);
        let b = DMatrix::<f64>::identity(9, 9) + m.entries() * 3.0;
        let mut direct = 0.0;
        for a in 0..3 {
            for bb in 0..3 {
                for c in 0..3 {
                    for dd in 0..3 {
                        direct += p[(a, bb)]
                            * p[(c, dd)]
                            * b[(d.index(i, c), d.index(j, bb))]
                            * b[(d.index(i, a), d.index(j, dd))];
                    }
                }
            }
        }
        direct *= -1.0 / 9.0;
        let q = inv_hessian_quadform(&m, i, j, &p).unwrap();
        assert!((q.value - direct).abs() < 1e-12);
    }

    #[test]
    fn hessian_identity_on_uniform() {
        for &(n, l) in &[(1, 2), (2, 2), (2, 4)] {
            let chk = hessian_inverse_identity_check(&uniform_matrix(dims(n, l))).unwrap();
            assert!(chk.identity_deviation <= 1e-8, "{chk:?}");
            assert!(chk.fd_relative_error <= 1e-3, "{chk:?}");
        }
    }

    #[test]
    fn dense_hessian_refuses_large_problems() {
        assert!(matches!(
            hessian_inverse_identity_check(&uniform_matrix(dims(3, 3))),
            Err(Error::TooLarge(_))
        ));
    }

    #[test]
    fn symmetric_curvature_is_nonpositive() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..5 {
            let m = sample_feasible(dims(2, 3), &mut rng);
            assert!(max_symmetric_curvature(&m).unwrap() <= 1e-10);
        }
    }
}
