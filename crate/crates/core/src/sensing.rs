//! Sensing matrices and the exact quantities that describe them.
//!
//! A [`SenseMatrix`] is a dense `m x n` real matrix whose columns all have unit
//! Euclidean norm. On top of it this module provides mutual incoherence, exact
//! restricted isometry constants by subset enumeration, and the least-squares
//! refit used by the solver.
//!
//! Random generation uses ChaCha8 (`rand_chacha` 0.9) seeded through
//! `SeedableRng::seed_from_u64`, with normal deviates from `rand_distr` 0.5's
//! `StandardNormal`. Entries are drawn column by column, top to bottom, so a
//! seed reproduces the same matrix bit-for-bit on every platform.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest allowed deviation of a column norm from 1.
pub const NORM_TOLERANCE: f64 = 1e-10;
/// Column norms below this are treated as zero by [`normalize_columns`].
pub const ZERO_COLUMN_TOLERANCE: f64 = 1e-14;
/// Relative pivot size below which a least-squares support is rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-12;
/// Default cap on the number of subsets [`rip_exact`] may enumerate.
pub const DEFAULT_RIP_BUDGET: u64 = 10_000_000;

/// Numerical tolerances with the library defaults.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub norm: f64,
    pub rank: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            norm: NORM_TOLERANCE,
            rank: RANK_TOLERANCE,
        }
    }
}

/// A measurement matrix with unit-norm columns.
#[derive(Clone, Debug, PartialEq)]
pub struct SenseMatrix {
    entries: DMatrix<f64>,
}

impl SenseMatrix {
    /// Wraps a matrix whose columns are already unit norm (within [`NORM_TOLERANCE`]).
    pub fn from_unit_columns(entries: DMatrix<f64>) -> Result<Self> {
        Self::from_unit_columns_with(entries, Tolerances::default())
    }

    pub fn from_unit_columns_with(entries: DMatrix<f64>, tol: Tolerances) -> Result<Self> {
        if entries.nrows() == 0 || entries.ncols() == 0 {
            return Err(Error::InvalidArgument("matrix must be at least 1x1".into()));
        }
        for (j, col) in entries.column_iter().enumerate() {
            let dev = (col.norm() - 1.0).abs();
            if !(dev <= tol.norm) {
                return Err(Error::InvalidArgument(format!(
                    "column {j} has norm {} (deviation {dev:e} > {:e})",
                    col.norm(),
                    tol.norm
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn m(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n(&self) -> usize {
        self.entries.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn column(&self, j: usize) -> nalgebra::DVectorView<'_, f64> {
        self.entries.column(j)
    }

    /// Columns indexed by `support`, in the given order.
    pub fn columns(&self, support: &[usize]) -> DMatrix<f64> {
        self.entries.select_columns(support)
    }

    /// `A^T A`.
    pub fn gram(&self) -> DMatrix<f64> {
        self.entries.tr_mul(&self.entries)
    }

    /// `A x` for a dense `n`-vector.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.entries * x
    }

    /// `A^T r` for an `m`-vector.
    pub fn adjoint_apply(&self, r: &DVector<f64>) -> DVector<f64> {
        self.entries.tr_mul(r)
    }

    pub fn max_column_norm_deviation(&self) -> f64 {
        self.entries
            .column_iter()
            .map(|c| (c.norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Mutual incoherence `max_{i != j} |<A_i, A_j>|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherenceValue {
    pub mu: f64,
}

/// Exact restricted isometry constant of a matrix at one order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RipCertificate {
    pub order: usize,
    pub delta: f64,
    pub subsets_examined: u64,
    /// Zero-based column indices, increasing.
    pub extremal_subset: Vec<usize>,
}

fn standard_normal_column(rng: &mut ChaCha8Rng, m: usize) -> DVector<f64> {
    DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// I.i.d. standard normal entries, each column rescaled to unit norm.
pub fn gen_gaussian_matrix(m: usize, n: usize, seed: u64) -> Result<SenseMatrix> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidArgument("m and n must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = DMatrix::zeros(m, n);
    for j in 0..n {
        let col = loop {
            let c = standard_normal_column(&mut rng, m);
            let norm = c.norm();
            if norm >= ZERO_COLUMN_TOLERANCE {
                break c / norm;
            }
        };
        entries.set_column(j, &col);
    }
    Ok(SenseMatrix { entries })
}

/// A randomly rotated spikes-and-signs frame.
///
/// The first `min(m, n)` columns are an orthonormal basis; the remaining
/// `n - m` columns are `Q s / sqrt(m)` for random sign vectors `s` whose pairwise
/// overlaps satisfy `|<s, t>| <= 2` (`<= 3` for odd `m`). `Q` is a Haar rotation.
/// Unlike i.i.d. Gaussian matrices at `m ~ n`, these have coherence `1/sqrt(m)`
/// and small low-order isometry constants, so theorem hypotheses can be
/// certified at moderate sizes.
///
/// Sign vectors are drawn by rejection, so `n - m` must stay small relative
/// to `m` (e.g. `50 x 60`); otherwise construction gives up with
/// [`Error::FrameConstruction`].
pub fn gen_incoherent_frame(m: usize, n: usize, seed: u64) -> Result<SenseMatrix> {
    const MAX_ATTEMPTS: usize = 2_000_000;
    if m == 0 || n == 0 {
        return Err(Error::InvalidArgument("m and n must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let gauss = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = gauss.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..m {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }

    let max_overlap: i64 = if m.is_multiple_of(2) { 2 } else { 3 };
    let mut signs: Vec<Vec<i64>> = Vec::new();
    let mut attempts = 0;
    while signs.len() < n.saturating_sub(m) {
        attempts += 1;
        if attempts > MAX_ATTEMPTS {
            return Err(Error::FrameConstruction(MAX_ATTEMPTS));
        }
        let s: Vec<i64> = (0..m)
            .map(|_| if rng.random::<bool>() { 1 } else { -1 })
            .collect();
        let ok = signs.iter().all(|t| {
            let dot: i64 = s.iter().zip(t).map(|(a, b)| a * b).sum();
            dot.abs() <= max_overlap
        });
        if ok {
            signs.push(s);
        }
    }

    let scale = 1.0 / (m as f64).sqrt();
    let mut base = DMatrix::zeros(m, n);
    for j in 0..n.min(m) {
        base[(j, j)] = 1.0;
    }
    for (k, s) in signs.iter().enumerate() {
        for (i, &v) in s.iter().enumerate() {
            base[(i, m + k)] = v as f64 * scale;
        }
    }
    normalize_columns(&q * base)
}

/// Divides every column by its Euclidean norm.
pub fn normalize_columns(raw: DMatrix<f64>) -> Result<SenseMatrix> {
    if raw.nrows() == 0 || raw.ncols() == 0 {
        return Err(Error::InvalidArgument("matrix must be at least 1x1".into()));
    }
    let mut entries = raw;
    for (j, mut col) in entries.column_iter_mut().enumerate() {
        let norm = col.norm();
        if !(norm >= ZERO_COLUMN_TOLERANCE) {
            return Err(Error::ZeroColumn(j));
        }
        col /= norm;
    }
    Ok(SenseMatrix { entries })
}

/// Largest absolute inner product between distinct columns. Zero when `n < 2`.
pub fn mutual_incoherence(a: &SenseMatrix) -> CoherenceValue {
    let g = a.gram();
    let n = a.n();
    let mut mu: f64 = 0.0;
    for j in 0..n {
        for i in 0..j {
            mu = mu.max(g[(i, j)].abs());
        }
    }
    CoherenceValue { mu }
}

/// `K * mu`, the coherence bound on `delta_K` used as the contractual invariant.
pub fn coherence_rip_bound(mu: CoherenceValue, order: usize) -> f64 {
    order as f64 * mu.mu
}

/// `(K - 1) * mu`, the Gershgorin bound. Tighter than [`coherence_rip_bound`].
pub fn gershgorin_rip_bound(mu: CoherenceValue, order: usize) -> f64 {
    order.saturating_sub(1) as f64 * mu.mu
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Advances `idx` to the next k-subset of `0..n` in lexicographic order.
/// Returns `false` when `idx` was the last subset.
pub(crate) fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Extreme eigenvalues `(min, max)` of a small symmetric matrix.
pub fn symmetric_extreme_eigenvalues(g: &DMatrix<f64>) -> (f64, f64) {
    match g.nrows() {
        0 => (1.0, 1.0),
        1 => (g[(0, 0)], g[(0, 0)]),
        2 => {
            let (a, b, d) = (g[(0, 0)], g[(0, 1)], g[(1, 1)]);
            let mean = 0.5 * (a + d);
            let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
            (mean - rad, mean + rad)
        }
        _ => {
            let ev = g.clone().symmetric_eigenvalues();
            let lo = ev.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        }
    }
}

#[derive(Clone, Debug)]
struct Extremum {
    delta: f64,
    subset: Vec<usize>,
    count: u64,
}

impl Extremum {
    fn merge(self, other: Extremum) -> Extremum {
        let count = self.count + other.count;
        let keep_self =
            self.delta > other.delta || (self.delta == other.delta && self.subset <= other.subset);
        let mut best = if keep_self { self } else { other };
        best.count = count;
        best
    }
}

/// Enumerates every k-subset whose smallest index is `first`.
fn scan_from(gram: &DMatrix<f64>, k: usize, first: usize) -> Extremum {
    let n = gram.nrows();
    let mut idx: Vec<usize> = (first..first + k).collect();
    let mut sub = DMatrix::zeros(k, k);
    let mut best = Extremum {
        delta: f64::NEG_INFINITY,
        subset: idx.clone(),
        count: 0,
    };
    loop {
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                sub[(a, b)] = gram[(i, j)];
            }
        }
        let (lo, hi) = symmetric_extreme_eigenvalues(&sub);
        let delta = (hi - 1.0).max(1.0 - lo);
        best.count += 1;
        // strict comparison keeps the lexicographically first maximizer
        if delta > best.delta {
            best.delta = delta;
            best.subset.copy_from_slice(&idx);
        }
        if !next_combination(&mut idx, n) || idx[0] != first {
            break;
        }
    }
    best
}

/// Exact `delta_K` by enumerating every K-subset of columns.
///
/// For each subset `T` the Gram block `A_T^T A_T` is formed from the full Gram
/// matrix and its extreme eigenvalues give `max(lambda_max - 1, 1 - lambda_min)`.
/// The reported subset is the lexicographically first maximizer regardless of
/// how the enumeration is scheduled.
pub fn rip_exact(a: &SenseMatrix, order: usize, budget: u64) -> Result<RipCertificate> {
    let n = a.n();
    if order == 0 || order > n {
        return Err(Error::InvalidArgument(format!(
            "order {order} must lie in 1..={n}"
        )));
    }
    let required = binomial(n, order);
    if required > budget as u128 {
        return Err(Error::BudgetExceeded {
            required,
            budget: budget as u128,
        });
    }
    let gram = a.gram();
    let firsts = 0..=n - order;

    #[cfg(feature = "parallel")]
    let best = {
        use rayon::prelude::*;
        firsts
            .into_par_iter()
            .map(|f| scan_from(&gram, order, f))
            .reduce_with(Extremum::merge)
    };
    #[cfg(not(feature = "parallel"))]
    let best = firsts
        .map(|f| scan_from(&gram, order, f))
        .reduce(Extremum::merge);

    let best = best.expect("at least one subset exists");
    Ok(RipCertificate {
        order,
        delta: best.delta.max(0.0),
        subsets_examined: best.count,
        extremal_subset: best.subset,
    })
}

/// Least-squares coefficients on `support`: argmin_c ||A_support c - y||_2.
///
/// Solved through a Householder QR of `A_support`; never forms an inverse.
pub fn least_squares(a: &SenseMatrix, support: &[usize], y: &DVector<f64>) -> Result<DVector<f64>> {
    least_squares_with(a, support, y, RANK_TOLERANCE)
}

pub fn least_squares_with(
    a: &SenseMatrix,
    support: &[usize],
    y: &DVector<f64>,
    rank_tol: f64,
) -> Result<DVector<f64>> {
    if y.len() != a.m() {
        return Err(Error::Dimension(format!(
            "y has length {}, expected {}",
            y.len(),
            a.m()
        )));
    }
    if let Some(&bad) = support.iter().find(|&&i| i >= a.n()) {
        return Err(Error::InvalidArgument(format!("index {bad} out of range")));
    }
    if support.is_empty() {
        return Ok(DVector::zeros(0));
    }
    if support.len() > a.m() {
        return Err(Error::RankDeficient(support.to_vec()));
    }
    let sub = a.columns(support);
    let qr = sub.qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..support.len()).map(|i| r[(i, i)].abs()).collect();
    let max = diag.iter().copied().fold(0.0, f64::max);
    let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || min < rank_tol * max {
        return Err(Error::RankDeficient(support.to_vec()));
    }
    let qty = qr.q().tr_mul(y);
    r.solve_upper_triangular(&qty)
        .ok_or_else(|| Error::RankDeficient(support.to_vec()))
}

/// `v - A_T A_T^+ v`: the component of `v` orthogonal to the span of columns `T`.
pub fn project_out(a: &SenseMatrix, support: &[usize], v: &DVector<f64>) -> Result<DVector<f64>> {
    let coeffs = least_squares(a, support, v)?;
    let mut out = v.clone();
    for (c, &j) in coeffs.iter().zip(support) {
        out.axpy(-c, &a.column(j), 1.0);
    }
    Ok(out)
}
