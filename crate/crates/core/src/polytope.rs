//! The pseudo-moment polytope.
//!
//! A point is a symmetric `(nL)x(nL)` matrix indexed by `(item, label)` pairs
//! whose every `L x L` block sums to one, whose entries lie in `[0, 1]`, and
//! which is positive semidefinite. Rows and columns are laid out item-major:
//! `(i, a)` lives at index `i * L + a`.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{mismatch, Error, Result};

/// Default tolerance for feasibility checks.
pub const DEFAULT_FEASIBILITY_TOL: f64 = 1e-7;
/// Default convergence tolerance for [`project`].
pub const DEFAULT_PROJECTION_TOL: f64 = 1e-9;
/// Default iteration cap for [`project`].
pub const DEFAULT_PROJECTION_MAX_ITERS: usize = 20_000;

/// Number of items `n` and number of labels `L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ProblemDims {
    n_items: usize,
    n_labels: usize,
}

impl ProblemDims {
    pub fn new(n_items: usize, n_labels: usize) -> Result<Self> {
        if n_items == 0 || n_labels == 0 {
            return Err(Error::InvalidDims(format!(
                "n_items and n_labels must be positive (got n={n_items}, L={n_labels})"
            )));
        }
        Ok(Self { n_items, n_labels })
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn n_labels(&self) -> usize {
        self.n_labels
    }

    /// Side length `n * L` of the moment matrix.
    pub fn side(&self) -> usize {
        self.n_items * self.n_labels
    }

    /// Row/column index of `(item, label)`.
    #[inline]
    pub fn index(&self, item: usize, label: usize) -> usize {
        item * self.n_labels + label
    }

    pub(crate) fn check_item(&self, item: usize) -> Result<()> {
        if item >= self.n_items {
            return Err(Error::InvalidArgument(format!(
                "item {item} out of range for n={}",
                self.n_items
            )));
        }
        Ok(())
    }

    pub(crate) fn check_shape(&self, m: &DMatrix<f64>) -> Result<()> {
        let side = self.side();
        if m.nrows() != side || m.ncols() != side {
            return Err(mismatch(
                format!("{side}x{side}"),
                format!("{}x{}", m.nrows(), m.ncols()),
            ));
        }
        Ok(())
    }
}

/// Nonnegative tolerance used by [`is_feasible`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityTolerance(f64);

impl FeasibilityTolerance {
    pub fn new(tol: f64) -> Result<Self> {
        if !(tol >= 0.0) || !tol.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "tolerance must be finite and nonnegative, got {tol}"
            )));
        }
        Ok(Self(tol))
    }

    pub fn value(&self) -> f64 {
        self.0
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0 * factor)
    }
}

impl Default for FeasibilityTolerance {
    fn default() -> Self {
        Self(DEFAULT_FEASIBILITY_TOL)
    }
}

/// A candidate point of the polytope together with its dimensions.
///
/// Construction only checks the shape; use [`is_feasible`] to check
/// membership.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoMomentMatrix {
    dims: ProblemDims,
    entries: DMatrix<f64>,
}

impl PseudoMomentMatrix {
    pub fn new(dims: ProblemDims, entries: DMatrix<f64>) -> Result<Self> {
        dims.check_shape(&entries)?;
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("moment matrix entry".into()));
        }
        Ok(Self { dims, entries })
    }

    pub fn dims(&self) -> ProblemDims {
        self.dims
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }

    /// Entry `M_{(i,a),(j,b)}`.
    pub fn get(&self, i: usize, a: usize, j: usize, b: usize) -> f64 {
        self.entries[(self.dims.index(i, a), self.dims.index(j, b))]
    }

    /// The `L x L` block for items `(i, j)`.
    pub fn block(&self, i: usize, j: usize) -> DMatrix<f64> {
        let l = self.dims.n_labels;
        self.entries.view((i * l, j * l), (l, l)).into_owned()
    }

    /// Write the plain-text form: a header line `n L`, then `nL` rows of
    /// `nL` space-separated values with 17 significant digits after the
    /// leading one.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{} {}", self.dims.n_items, self.dims.n_labels)?;
        let side = self.dims.side();
        let mut line = String::new();
        for r in 0..side {
            line.clear();
            for c in 0..side {
                if c > 0 {
                    line.push(' ');
                }
                write!(line, "{:.17e}", self.entries[(r, c)]).expect("write to string");
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    /// Parse the format produced by [`PseudoMomentMatrix::write_text`].
    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input
            .lines()
            .enumerate()
            .filter(|(_, l)| l.as_ref().map(|s| !s.trim().is_empty()).unwrap_or(true));
        let (hdr_no, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "missing header".into(),
        })?;
        let header = header?;
        let mut fields = header.split_whitespace();
        let mut next_usize = |what: &str| -> Result<usize> {
            fields
                .next()
                .ok_or_else(|| Error::Parse {
                    line: hdr_no + 1,
                    msg: format!("missing {what}"),
                })?
                .parse::<usize>()
                .map_err(|e| Error::Parse {
                    line: hdr_no + 1,
                    msg: format!("bad {what}: {e}"),
                })
        };
        let dims = ProblemDims::new(next_usize("n")?, next_usize("L")?)?;
        let side = dims.side();
        let mut entries = DMatrix::zeros(side, side);
        for r in 0..side {
            let (no, line) = lines.next().ok_or(Error::Parse {
                line: hdr_no + 2 + r,
                msg: format!("expected {side} matrix rows, found {r}"),
            })?;
            let line = line?;
            let values: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse {
                    line: no + 1,
                    msg: e.to_string(),
                })?;
            if values.len() != side {
                return Err(Error::Parse {
                    line: no + 1,
                    msg: format!("expected {side} values, found {}", values.len()),
                });
            }
            for (c, v) in values.into_iter().enumerate() {
                entries[(r, c)] = v;
            }
        }
        Self::new(dims, entries)
    }
}

/// The all-`1/L^2` matrix: rank one and feasible.
pub fn uniform_matrix(dims: ProblemDims) -> PseudoMomentMatrix {
    let side = dims.side();
    let l = dims.n_labels as f64;
    PseudoMomentMatrix {
        dims,
        entries: DMatrix::from_element(side, side, 1.0 / (l * l)),
    }
}

/// Worst violation per constraint class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityReport {
    pub feasible: bool,
    /// `max |M - M^T|`.
    pub symmetry: f64,
    /// Largest distance of an entry outside `[0, 1]`.
    pub entry_box: f64,
    /// `max_{i,j} |sum of block (i,j) - 1|`.
    pub marginal: f64,
    /// `max(0, -lambda_min)`.
    pub psd: f64,
    pub min_eigenvalue: f64,
}

impl FeasibilityReport {
    pub fn worst(&self) -> f64 {
        self.symmetry.max(self.entry_box).max(self.marginal).max(self.psd)
    }
}

/// Check membership of a raw matrix.
pub fn check_feasibility(dims: ProblemDims, m: &DMatrix<f64>, tol: FeasibilityTolerance) -> Result<FeasibilityReport> {
    dims.check_shape(m)?;
    let side = dims.side();
    let l = dims.n_labels;
    let mut symmetry = 0.0f64;
    let mut entry_box = 0.0f64;
    for r in 0..side {
        for c in 0..side {
            let v = m[(r, c)];
            symmetry = symmetry.max((v - m[(c, r)]).abs());
            entry_box = entry_box.max(-v).max(v - 1.0);
        }
    }
    let mut marginal = 0.0f64;
    for i in 0..dims.n_items {
        for j in 0..dims.n_items {
            let s: f64 = m.view((i * l, j * l), (l, l)).sum();
            marginal = marginal.max((s - 1.0).abs());
        }
    }
    let min_eigenvalue = symmetric_eigen(m).eigenvalues.min();
    let psd = (-min_eigenvalue).max(0.0);
    let t = tol.value();
    let feasible = symmetry <= t && entry_box <= t && marginal <= t && psd <= t;
    Ok(FeasibilityReport {
        feasible,
        symmetry,
        entry_box: entry_box.max(0.0),
        marginal,
        psd,
        min_eigenvalue,
    })
}

/// Check membership of `m` in the polytope within `tol`.
pub fn is_feasible(m: &PseudoMomentMatrix, tol: FeasibilityTolerance) -> Result<FeasibilityReport> {
    check_feasibility(m.dims, &m.entries, tol)
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub(crate) fn symmetric_eigen(m: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    SymmetricEigen::new(symmetrize(m))
}

/// Nearest positive semidefinite matrix in Frobenius norm.
pub fn project_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = symmetric_eigen(m);
    let clamped = eig.eigenvalues.map(|v| v.max(0.0));
    let vecs = &eig.eigenvectors;
    let out = vecs * DMatrix::from_diagonal(&clamped) * vecs.transpose();
    symmetrize(&out)
}

/// Orthogonal projector onto the vectors whose per-item label sums are all
/// equal.
///
/// A PSD matrix with every block sum equal to one annihilates each
/// difference `u_i - u_j` of item indicator vectors, so the whole polytope
/// lives in `{P X P}`. Inside that subspace the PSD cone has interior points
/// of the polytope, which keeps the alternating projection fast.
pub fn marginal_subspace_projector(dims: ProblemDims) -> DMatrix<f64> {
    let l = dims.n_labels();
    let side = dims.side();
    let inv_l = 1.0 / l as f64;
    let inv_side = 1.0 / side as f64;
    DMatrix::from_fn(side, side, |r, c| {
        let same_item = r / l == c / l;
        f64::from(u8::from(r == c)) - if same_item { inv_l } else { 0.0 } + inv_side
    })
}

/// Nearest PSD matrix of the form `P X P`, with `P` from
/// [`marginal_subspace_projector`].
pub fn project_psd_subspace(projector: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    project_psd(&(projector * m * projector))
}

/// Shift `tau` such that `sum_k clamp(v_k - tau, 0, 1) == 1`.
///
/// The map `tau -> sum clamp(v - tau, 0, 1)` is piecewise linear and
/// nonincreasing with breakpoints at `v_k - 1` and `v_k`; the root is found
/// on the bracketing segment by exact interpolation.
fn capped_simplex_shift(v: &[f64]) -> f64 {
    let mass = |tau: f64| -> f64 { v.iter().map(|&x| (x - tau).clamp(0.0, 1.0)).sum() };
    let mut bps: Vec<f64> = v.iter().flat_map(|&x| [x - 1.0, x]).collect();
    bps.sort_by(f64::total_cmp);
    let mut lo = bps[0];
    let mut g_lo = mass(lo);
    if g_lo <= 1.0 {
        return lo;
    }
    for &hi in &bps[1..] {
        let g_hi = mass(hi);
        if g_hi <= 1.0 {
            if g_lo == g_hi {
                return hi;
            }
            return lo + (g_lo - 1.0) * (hi - lo) / (g_lo - g_hi);
        }
        lo = hi;
        g_lo = g_hi;
    }
    lo
}

/// Euclidean projection onto the set of symmetric matrices whose blocks
/// sum to one and whose entries lie in `[0, 1]` (the polytope without the
/// PSD constraint). Blocks are disjoint, so each is projected onto the
/// capped simplex independently; block `(j, i)` is written as the transpose
/// of block `(i, j)`.
pub fn project_box_marginals(dims: ProblemDims, m: &DMatrix<f64>) -> DMatrix<f64> {
    let l = dims.n_labels;
    let n = dims.n_items;
    let mut out = DMatrix::zeros(dims.side(), dims.side());
    let mut buf = vec![0.0; l * l];
    for i in 0..n {
        for j in i..n {
            for a in 0..l {
                for b in 0..l {
                    buf[a * l + b] = if i == j {
                        0.5 * (m[(i * l + a, j * l + b)] + m[(j * l + b, i * l + a)])
                    } else {
                        m[(i * l + a, j * l + b)]
                    };
                }
            }
            let tau = capped_simplex_shift(&buf);
            for a in 0..l {
                for b in 0..l {
                    let v = (buf[a * l + b] - tau).clamp(0.0, 1.0);
                    out[(i * l + a, j * l + b)] = v;
                    out[(j * l + b, i * l + a)] = v;
                }
            }
        }
    }
    out
}

/// Settings for [`project`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionOptions {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_PROJECTION_TOL,
            max_iters: DEFAULT_PROJECTION_MAX_ITERS,
        }
    }
}

/// Result of [`project`].
#[derive(Debug, Clone)]
pub struct ProjectionOutcome {
    pub matrix: PseudoMomentMatrix,
    pub iterations: usize,
    /// Max of the last iterate change and the PSD/marginal-set gap, both in
    /// Frobenius norm.
    pub residual: f64,
    pub converged: bool,
}

/// Frobenius projection of a symmetric matrix onto the polytope.
///
/// Dykstra's scheme alternating between the PSD cone (restricted to the
/// subspace every feasible matrix lies in, see
/// [`marginal_subspace_projector`]) and the box/marginal set. Stops once successive iterates move less than `tol` and the two
/// partial projections agree to `tol`. The returned matrix is the last
/// box/marginal iterate; if that still misses the polytope (typically
/// after hitting `max_iters`) the last PSD iterate is pulled back inside
/// instead, so the output is always feasible.
pub fn project(dims: ProblemDims, raw: &DMatrix<f64>, opts: ProjectionOptions) -> Result<ProjectionOutcome> {
    dims.check_shape(raw)?;
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("projection input".into()));
    }
    let side = dims.side();
    let projector = marginal_subspace_projector(dims);
    let mut x = symmetrize(raw);
    let mut p = DMatrix::<f64>::zeros(side, side);
    let mut q = DMatrix::<f64>::zeros(side, side);
    let mut y = DMatrix::<f64>::zeros(side, side);
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    for it in 1..=opts.max_iters.max(1) {
        iterations = it;
        let xp = &x + &p;
        y = project_psd_subspace(&projector, &xp);
        p = xp - &y;
        let yq = &y + &q;
        let x_next = project_box_marginals(dims, &yq);
        q = yq - &x_next;
        let change = (&x_next - &x).norm();
        let gap = (&x_next - &y).norm();
        x = x_next;
        residual = change.max(gap);
        if residual < opts.tol {
            converged = true;
            break;
        }
    }
    if !check_feasibility(dims, &x, FeasibilityTolerance::default())?.feasible {
        x = repair(dims, &y);
    }
    Ok(ProjectionOutcome {
        matrix: PseudoMomentMatrix { dims, entries: x },
        iterations,
        residual,
        converged,
    })
}

/// Feasible point near a PSD matrix `y` of the form `P y P`: rescale so the
/// common block sum is one, then blend toward the uniform matrix just
/// enough to bring every entry into `[0, 1]`.
fn repair(dims: ProblemDims, y: &DMatrix<f64>) -> DMatrix<f64> {
    let n = dims.n_items() as f64;
    let inner = uniform_matrix(dims).into_entries();
    let mass = y.sum() / (n * n);
    if !(mass > 0.0) {
        return inner;
    }
    let y = symmetrize(&(y / mass));
    let mut theta = 0.0f64;
    for (&v, &w) in y.iter().zip(inner.iter()) {
        if v < 0.0 {
            theta = theta.max(-v / (w - v));
        } else if v > 1.0 {
            theta = theta.max((v - 1.0) / (v - w));
        }
    }
    let theta = (theta * (1.0 + 1e-9)).min(1.0);
    let mut out = y * (1.0 - theta) + inner * theta;
    out.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    out
}

/// A label pair drawn by [`sample_block`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockSample {
    pub labels: (usize, usize),
    /// The clamped block had no positive mass and a uniform draw was used.
    pub fallback: bool,
}

/// Normalized sampling distribution of block `(i, j)`: negative entries are
/// clamped to zero and the rest renormalized. Returns `None` when nothing
/// positive remains.
pub fn block_distribution(m: &PseudoMomentMatrix, i: usize, j: usize) -> Option<DMatrix<f64>> {
    let mut block = m.block(i, j).map(|v| v.max(0.0));
    let total = block.sum();
    if !(total > 0.0) {
        return None;
    }
    block /= total;
    Some(block)
}

/// Draw labels `(a, b)` for the queried items from block `(i, j)`.
pub fn sample_block<R: Rng + ?Sized>(m: &PseudoMomentMatrix, i: usize, j: usize, rng: &mut R) -> Result<BlockSample> {
    let dims = m.dims;
    dims.check_item(i)?;
    dims.check_item(j)?;
    if i == j {
        return Err(Error::InvalidArgument(format!(
            "queried pair must have distinct items, got ({i}, {j})"
        )));
    }
    let l = dims.n_labels;
    let weights: Vec<f64> = (0..l)
        .flat_map(|a| (0..l).map(move |b| (a, b)))
        .map(|(a, b)| m.get(i, a, j, b).max(0.0))
        .collect();
    match WeightedIndex::new(&weights) {
        Ok(dist) => {
            let k = dist.sample(rng);
            Ok(BlockSample {
                labels: (k / l, k % l),
                fallback: false,
            })
        }
        Err(_) => {
            let k = rng.random_range(0..l * l);
            Ok(BlockSample {
                labels: (k / l, k % l),
                fallback: true,
            })
        }
    }
}

/// A random feasible point: a Dirichlet-weighted mixture of the moment
/// matrices of a few uniformly random labelings, optionally blended with the
/// uniform matrix. Every such mixture is exactly feasible.
pub fn sample_feasible<R: Rng + ?Sized>(dims: ProblemDims, rng: &mut R) -> PseudoMomentMatrix {
    let side = dims.side();
    let l = dims.n_labels;
    let components = rng.random_range(1..=4usize);
    let mut weights: Vec<f64> = (0..components).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let uniform_weight = if rng.random_bool(0.5) { rng.random::<f64>() } else { 0.0 };
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w *= (1.0 - uniform_weight) / total;
    }
    let mut entries = DMatrix::from_element(side, side, uniform_weight / (l * l) as f64);
    for w in weights {
        let labels: Vec<usize> = (0..dims.n_items).map(|_| rng.random_range(0..l)).collect();
        for (i, &a) in labels.iter().enumerate() {
            for (j, &b) in labels.iter().enumerate() {
                entries[(dims.index(i, a), dims.index(j, b))] += w;
            }
        }
    }
    PseudoMomentMatrix { dims, entries }
}
