//! Brute-force references and numerical witnesses for the isometry lemmas.
//!
//! Each verifier evaluates both sides of one inequality on a concrete instance
//! and reports whether it holds within [`SLACK`]. Empty index sets contribute
//! zero-norm vectors, so a degenerate case such as `0 <= 0` counts as holding.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::guarantees::rip_order_for;
use crate::omp::residual;
use crate::seed::{derive_seed, stream_seed, Stream};
use crate::sensing::{
    binomial, gen_gaussian_matrix, least_squares, next_combination, project_out, rip_exact,
    SenseMatrix,
};
use crate::signal::SparseSignal;

/// Additive slack for every lemma check.
pub const SLACK: f64 = 1e-10;

/// Outcome of one inequality `lhs <= rhs`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub lhs: f64,
    pub rhs: f64,
}

impl Check {
    pub fn new(lhs: f64, rhs: f64) -> Self {
        Self { lhs, rhs }
    }

    /// `rhs - lhs`; negative values are violations.
    pub fn margin(&self) -> f64 {
        self.rhs - self.lhs
    }

    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs + SLACK
    }

    /// The tighter of two checks, used for two-sided bounds.
    fn worse(self, other: Check) -> Check {
        if other.margin() < self.margin() {
            other
        } else {
            self
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestSupport {
    pub support: Vec<usize>,
    pub coefficients: Vec<f64>,
    pub residual_l2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExhaustiveResult {
    /// Best support of size at most `K`.
    pub best: BestSupport,
    /// Best support of size at most `K - 1` (the strict-inequality reading).
    pub best_below: Option<BestSupport>,
    pub subsets_examined: u64,
    pub rank_deficient_skipped: u64,
}

/// Minimizes `||A x - y||_2` over all supports of size at most `k`.
///
/// Sizes are scanned in increasing order and subsets lexicographically within
/// a size; a later candidate replaces the incumbent only with a strictly
/// smaller residual. Rank-deficient subsets are skipped and counted.
pub fn exhaustive_best_support(
    a: &SenseMatrix,
    y: &DVector<f64>,
    k: usize,
    budget: u64,
) -> Result<ExhaustiveResult> {
    if k > a.n() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds n = {}",
            a.n()
        )));
    }
    let required = binomial(a.n(), k);
    if required > budget as u128 {
        return Err(Error::BudgetExceeded {
            required,
            budget: budget as u128,
        });
    }
    let mut best = BestSupport {
        support: Vec::new(),
        coefficients: Vec::new(),
        residual_l2: y.norm(),
    };
    let mut best_below = None;
    let mut examined = 1;
    let mut skipped = 0;
    for size in 1..=k {
        if size == k {
            best_below = Some(best.clone());
        }
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            examined += 1;
            match least_squares(a, &idx, y) {
                Ok(c) => {
                    let res = residual(a, y, &idx, &c).norm();
                    if res < best.residual_l2 {
                        best = BestSupport {
                            support: idx.clone(),
                            coefficients: c.iter().copied().collect(),
                            residual_l2: res,
                        };
                    }
                }
                Err(Error::RankDeficient(_)) => skipped += 1,
                Err(e) => return Err(e),
            }
            if !next_combination(&mut idx, a.n()) {
                break;
            }
        }
    }
    if k == 0 {
        best_below = None;
    }
    Ok(ExhaustiveResult {
        best,
        best_below,
        subsets_examined: examined,
        rank_deficient_skipped: skipped,
    })
}

fn check_subset(x: &SparseSignal, t: &[usize]) -> Result<()> {
    if t.iter().any(|i| !x.support().contains(i)) {
        return Err(Error::InvalidArgument(
            "T must be a subset of supp(x)".into(),
        ));
    }
    Ok(())
}

fn complement<'a>(x: &'a SparseSignal, t: &'a [usize]) -> impl Iterator<Item = usize> + 'a {
    x.support().iter().copied().filter(move |i| !t.contains(i))
}

/// `x - A_T^+ A x` with the `T`-coefficients embedded in `R^n`.
fn beta(a: &SenseMatrix, x: &SparseSignal, t: &[usize]) -> Result<DVector<f64>> {
    let dense = x.to_dense();
    let ax = a.apply(&dense);
    let c = least_squares(a, t, &ax)?;
    let mut out = dense;
    for (&i, v) in t.iter().zip(c.iter()) {
        out[i] -= v;
    }
    Ok(out)
}

/// `||A_T^T A_{T^c} x||_2 <= d ||x_{T^c}||_2` and
/// `||(A_T^T A_T)^{-1} x_T||_2 <= ||x_T||_2 / (1 - d)`.
pub fn verify_lemma_21(
    a: &SenseMatrix,
    x: &SparseSignal,
    t: &[usize],
    delta: f64,
) -> Result<(Check, Check)> {
    check_subset(x, t)?;
    let tc: Vec<usize> = complement(x, t).collect();
    let x_tc = x.restrict_dense(&tc);
    let v = a.apply(&x_tc);
    let at = a.columns(t);
    let part1 = Check::new((at.tr_mul(&v)).norm(), delta * x_tc.norm());

    let x_t = DVector::from_iterator(t.len(), t.iter().map(|i| x.to_dense()[*i]));
    let part2 = if t.is_empty() {
        Check::new(0.0, 0.0)
    } else {
        let gram: DMatrix<f64> = at.tr_mul(&at);
        let chol = gram
            .cholesky()
            .ok_or_else(|| Error::RankDeficient(t.to_vec()))?;
        Check::new(chol.solve(&x_t).norm(), x_t.norm() / (1.0 - delta))
    };
    Ok((part1, part2))
}

/// Part 1: `(1 - d1) ||x_D|| <= ||A_D^T (I - P_T) A_D x_D|| <= (1 + d1) ||x_D||`
/// with `D = supp(x) \ T`. Part 2: `(1 - d2) ||x_{T^c}|| <= ||A (I - A_T^+ A) x||`.
pub fn verify_lemma_22(
    a: &SenseMatrix,
    x: &SparseSignal,
    t: &[usize],
    delta_part1: f64,
    delta_part2: f64,
) -> Result<(Check, Check)> {
    check_subset(x, t)?;
    let d: Vec<usize> = complement(x, t).collect();
    let x_d = x.restrict_dense(&d);
    let x_d_norm = x_d.norm();
    let w = project_out(a, t, &a.apply(&x_d))?;
    let middle = a.columns(&d).tr_mul(&w).norm();
    let part1 = Check::new((1.0 - delta_part1) * x_d_norm, middle)
        .worse(Check::new(middle, (1.0 + delta_part1) * x_d_norm));

    let ax = a.apply(&x.to_dense());
    let lower = project_out(a, t, &ax)?.norm();
    let part2 = Check::new((1.0 - delta_part2) * x.norm_outside(t), lower);
    Ok((part1, part2))
}

/// `||(I - A_T^+ A) x||_2 <= ||x_{T^c}||_2 / (1 - d)`.
pub fn verify_lemma_23(
    a: &SenseMatrix,
    x: &SparseSignal,
    t: &[usize],
    delta: f64,
) -> Result<Check> {
    check_subset(x, t)?;
    let b = beta(a, x, t)?;
    Ok(Check::new(b.norm(), x.norm_outside(t) / (1.0 - delta)))
}

/// `max_{i not in supp(v)} |<A_i, A v>| <= d ||v||_2`, with `d` of order `||v||_0 + 1`.
pub fn verify_offsupport_correlation(a: &SenseMatrix, v: &SparseSignal, delta_kp1: f64) -> Check {
    let av = a.apply(&v.to_dense());
    let corr = a.adjoint_apply(&av);
    let lhs = (0..a.n())
        .filter(|i| !v.support().contains(i))
        .map(|i| corr[i].abs())
        .fold(0.0, f64::max);
    Check::new(lhs, delta_kp1 * v.norm())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Lemma {
    #[serde(rename = "2.1")]
    NeedellTropp,
    #[serde(rename = "2.2")]
    Projection,
    #[serde(rename = "2.3")]
    ResidualSplit,
    #[serde(rename = "offsupport")]
    OffSupport,
}

impl Lemma {
    pub const ALL: [Lemma; 4] = [
        Lemma::NeedellTropp,
        Lemma::Projection,
        Lemma::ResidualSplit,
        Lemma::OffSupport,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Lemma::NeedellTropp => "2.1",
            Lemma::Projection => "2.2",
            Lemma::ResidualSplit => "2.3",
            Lemma::OffSupport => "offsupport",
        }
    }

    pub fn parse(s: &str) -> Option<Lemma> {
        Lemma::ALL.into_iter().find(|l| l.label() == s)
    }
}

/// Suite result: how many checks ran, how many failed, and the smallest
/// `rhs - lhs` seen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub lemma: Lemma,
    pub checks_run: u64,
    pub violations: u64,
    pub worst_margin: f64,
    /// Instances redrawn because the needed isometry constant was `>= 1`.
    pub skipped_instances: u64,
    /// Projection check, part 2, evaluated with the order-K constant instead of K+1.
    /// Informational only.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub alternate_reading_violations: Option<u64>,
}

/// Random instance for the lemma suites: `n <= 14`, `K <= 4`.
#[derive(Clone, Debug)]
pub struct LemmaInstance {
    pub a: SenseMatrix,
    pub x: SparseSignal,
    pub t: Vec<usize>,
    pub delta_k: f64,
    pub delta_kp1: f64,
}

pub fn lemma_instance(seed: u64) -> Result<LemmaInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, Stream::Signal));
    let k = rng.random_range(1..=4usize);
    let n = rng.random_range(k + 2..=14usize);
    let m = rng.random_range(k + 1..=n);
    let a = gen_gaussian_matrix(m, n, stream_seed(seed, Stream::Matrix))?;

    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
    }
    let mut support = pool[..k].to_vec();
    support.sort_unstable();
    let values: Vec<f64> = (0..k)
        .map(|_| loop {
            let v: f64 = rng.sample(StandardNormal);
            if v != 0.0 {
                break v;
            }
        })
        .collect();
    let x = SparseSignal::new(n, support.clone(), values)?;

    let mut subset_rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, Stream::Subset));
    let t: Vec<usize> = support
        .into_iter()
        .filter(|_| subset_rng.random::<bool>())
        .collect();

    let delta_k = rip_exact(&a, k, u64::MAX)?.delta;
    let delta_kp1 = rip_exact(&a, rip_order_for(k), u64::MAX)?.delta;
    Ok(LemmaInstance {
        a,
        x,
        t,
        delta_k,
        delta_kp1,
    })
}

struct Tally {
    checks: u64,
    violations: u64,
    worst: f64,
    alt_violations: u64,
}

impl Tally {
    fn empty() -> Self {
        Self {
            checks: 0,
            violations: 0,
            worst: f64::INFINITY,
            alt_violations: 0,
        }
    }

    fn add(&mut self, c: Check) {
        self.checks += 1;
        if !c.holds() {
            self.violations += 1;
        }
        self.worst = self.worst.min(c.margin());
    }

    fn merge(mut self, o: Tally) -> Tally {
        self.checks += o.checks;
        self.violations += o.violations;
        self.worst = self.worst.min(o.worst);
        self.alt_violations += o.alt_violations;
        self
    }
}

fn evaluate_instance(lemma: Lemma, inst: &LemmaInstance) -> Result<Tally> {
    let mut tally = Tally::empty();
    match lemma {
        Lemma::NeedellTropp => {
            let (p1, p2) = verify_lemma_21(&inst.a, &inst.x, &inst.t, inst.delta_k)?;
            tally.add(p1);
            tally.add(p2);
        }
        Lemma::Projection => {
            let (p1, p2) =
                verify_lemma_22(&inst.a, &inst.x, &inst.t, inst.delta_k, inst.delta_kp1)?;
            tally.add(p1);
            tally.add(p2);
            let (_, alt) = verify_lemma_22(&inst.a, &inst.x, &inst.t, inst.delta_k, inst.delta_k)?;
            if !alt.holds() {
                tally.alt_violations += 1;
            }
        }
        Lemma::ResidualSplit => {
            tally.add(verify_lemma_23(&inst.a, &inst.x, &inst.t, inst.delta_k)?)
        }
        Lemma::OffSupport => tally.add(verify_offsupport_correlation(
            &inst.a,
            &inst.x,
            inst.delta_kp1,
        )),
    }
    Ok(tally)
}

/// Runs `samples` random instances through one lemma verifier.
///
/// Instance `i` is built from `derive_seed(seed, i)`. Instances whose relevant
/// isometry constant is `>= 1` make the bounds vacuous; they are counted as
/// skipped and replaced by further indices until `samples` have been checked.
pub fn run_lemma_suite(lemma: Lemma, samples: u64, seed: u64) -> Result<SuiteSummary> {
    let evaluate = |i: u64| -> Result<Option<Tally>> {
        let inst = lemma_instance(derive_seed(seed, i))?;
        let needed = match lemma {
            Lemma::NeedellTropp | Lemma::ResidualSplit => inst.delta_k,
            Lemma::Projection | Lemma::OffSupport => inst.delta_kp1,
        };
        if needed >= 1.0 {
            return Ok(None);
        }
        match evaluate_instance(lemma, &inst) {
            Ok(t) => Ok(Some(t)),
            Err(Error::RankDeficient(_)) => Ok(None),
            Err(e) => Err(e),
        }
    };

    let mut total = Tally::empty();
    let mut accepted = 0u64;
    let mut next = 0u64;
    let mut skipped = 0u64;
    while accepted < samples {
        let batch: Vec<u64> = (next..next + (samples - accepted)).collect();
        next += batch.len() as u64;

        #[cfg(feature = "parallel")]
        let results: Vec<Result<Option<Tally>>> = {
            use rayon::prelude::*;
            batch.par_iter().map(|&i| evaluate(i)).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let results: Vec<Result<Option<Tally>>> = batch.iter().map(|&i| evaluate(i)).collect();

        for r in results {
            match r? {
                Some(t) => {
                    accepted += 1;
                    total = total.merge(t);
                }
                None => skipped += 1,
            }
        }
        if next > samples.saturating_mul(50).max(1000) {
            return Err(Error::InvalidArgument(format!(
                "only {accepted} of {samples} instances were usable"
            )));
        }
    }

    Ok(SuiteSummary {
        lemma,
        checks_run: total.checks,
        violations: total.violations,
        worst_margin: total.worst,
        skipped_instances: skipped,
        alternate_reading_violations: (lemma == Lemma::Projection).then_some(total.alt_violations),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::normalize_columns;

    fn orthonormal(m: usize, seed: u64) -> SenseMatrix {
        normalize_columns(
            gen_gaussian_matrix(m, m, seed)
                .unwrap()
                .into_matrix()
                .qr()
                .q(),
        )
        .unwrap()
    }

    #[test]
    fn exhaustive_single_column() {
        let a = gen_gaussian_matrix(6, 9, 4).unwrap();
        let y = (a.column(5) * 3.0).into_owned();
        let r = exhaustive_best_support(&a, &y, 1, 100).unwrap();
        assert_eq!(r.best.support, vec![5]);
        assert!((r.best.coefficients[0] - 3.0).abs() < 1e-12);
        assert!(r.best.residual_l2 < 1e-12);
        assert_eq!(r.best_below.unwrap().support, Vec::<usize>::new());
        assert_eq!(r.subsets_examined, 10);
    }

    #[test]
    fn exhaustive_noiseless_sparse() {
        let a = gen_gaussian_matrix(7, 10, 8).unwrap();
        let x = SparseSignal::new(10, vec![1, 4, 9], vec![1.0, -0.5, 2.0]).unwrap();
        let y = a.apply(&x.to_dense());
        let r = exhaustive_best_support(&a, &y, 3, 1000).unwrap();
        assert_eq!(r.best.support, vec![1, 4, 9]);
        assert!(r.best.residual_l2 < 1e-10);
        assert!(r.best_below.unwrap().residual_l2 > 1e-3);
        assert!(exhaustive_best_support(&a, &y, 3, 100).is_err());
    }

    #[test]
    fn lemma_21_orthonormal() {
        let a = orthonormal(6, 1);
        let x = SparseSignal::new(6, vec![0, 2, 5], vec![1.0, 2.0, -3.0]).unwrap();
        let (p1, p2) = verify_lemma_21(&a, &x, &[0, 5], 0.0).unwrap();
        assert!(p1.lhs < 1e-14 && p1.holds());
        assert!((p2.lhs - p2.rhs).abs() < 1e-12 && p2.holds());
        let (p1, _) = verify_lemma_21(&a, &x, &[0, 2, 5], 0.0).unwrap();
        assert_eq!((p1.lhs, p1.rhs), (0.0, 0.0));
        assert!(verify_lemma_21(&a, &x, &[1], 0.0).is_err());
    }

    #[test]
    fn lemma_22_degenerate_and_orthonormal() {
        let a = gen_gaussian_matrix(6, 8, 2).unwrap();
        let x = SparseSignal::new(8, vec![1, 3], vec![1.0, -2.0]).unwrap();
        let (p1, _) = verify_lemma_22(&a, &x, &[1, 3], 0.3, 0.3).unwrap();
        assert_eq!((p1.lhs, p1.rhs), (0.0, 0.0));

        let q = orthonormal(6, 5);
        let x = SparseSignal::new(6, vec![0, 2, 4], vec![1.0, 2.0, 2.0]).unwrap();
        let (p1, p2) = verify_lemma_22(&q, &x, &[2], 0.0, 0.0).unwrap();
        // middle term equals ||x_D|| = sqrt(5)
        assert!((p1.lhs - 5f64.sqrt()).abs() < 1e-12 || (p1.rhs - 5f64.sqrt()).abs() < 1e-12);
        assert!(p1.holds() && p2.holds());
    }

    #[test]
    fn lemma_23_examples() {
        let a = gen_gaussian_matrix(6, 8, 3).unwrap();
        let x = SparseSignal::new(8, vec![0, 6], vec![1.5, -1.0]).unwrap();
        let full = verify_lemma_23(&a, &x, &[0, 6], 0.4).unwrap();
        assert!(full.lhs < 1e-12 && full.rhs == 0.0 && full.holds());
        let empty = verify_lemma_23(&a, &x, &[], 0.4).unwrap();
        assert!((empty.lhs - x.norm()).abs() < 1e-15);
        assert!((empty.rhs - x.norm() / 0.6).abs() < 1e-15);
    }

    #[test]
    fn offsupport_examples() {
        let q = orthonormal(5, 9);
        let v = SparseSignal::new(5, vec![1, 2], vec![1.0, 1.0]).unwrap();
        assert!(verify_offsupport_correlation(&q, &v, 0.0).lhs < 1e-14);
        let a = gen_gaussian_matrix(5, 9, 9).unwrap();
        let c = verify_offsupport_correlation(&a, &SparseSignal::zero(9), 0.5);
        assert_eq!((c.lhs, c.rhs), (0.0, 0.0));
    }

    #[test]
    fn small_suites_have_no_violations() {
        for lemma in Lemma::ALL {
            let s = run_lemma_suite(lemma, 200, 17).unwrap();
            assert_eq!(s.violations, 0, "{s:?}");
            assert!(s.checks_run >= 200);
        }
    }

    #[test]
    fn lemma_labels_round_trip() {
        for l in Lemma::ALL {
            assert_eq!(Lemma::parse(l.label()), Some(l));
            assert_eq!(
                serde_json::to_string(&l).unwrap(),
                format!("\"{}\"", l.label())
            );
        }
        assert_eq!(Lemma::parse("3.1"), None);
    }
}
