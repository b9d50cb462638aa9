//! Orthogonal Matching Pursuit with fixed-count, residual-norm and
//! correlation stopping rules.
//!
//! Starting from an empty support and `x_0 = 0`, each pass forms the residual
//! `r_k = y - A_{S_{k-1}} x_{k-1}`, evaluates the stopping rule on it, adds the
//! column most correlated with `r_k`, and refits all coefficients on the
//! enlarged support by least squares.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sensing::{least_squares, SenseMatrix};

/// Relative tolerance for residual orthogonality, scaled by `||y||_2`.
pub const ORTHOGONALITY_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum StoppingRule {
    /// Stop after `k` selections.
    FixedIterations { k: usize },
    /// Stop once `||r_k||_2 <= b2`.
    ResidualL2 { b2: f64 },
    /// Stop once `||A^T r_k||_inf <= binf`.
    CorrelationLInf { binf: f64 },
}

impl StoppingRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            StoppingRule::FixedIterations { k: 0 } => Err(Error::InvalidArgument(
                "fixed iteration count must be positive".into(),
            )),
            StoppingRule::ResidualL2 { b2: t } | StoppingRule::CorrelationLInf { binf: t }
                if !(t >= 0.0 && t.is_finite()) =>
            {
                Err(Error::InvalidArgument(format!(
                    "threshold {t} must be finite and >= 0"
                )))
            }
            _ => Ok(()),
        }
    }

    fn halt_reason(&self) -> HaltReason {
        match self {
            StoppingRule::FixedIterations { .. } => HaltReason::FixedIterations,
            StoppingRule::ResidualL2 { .. } => HaltReason::ResidualL2,
            StoppingRule::CorrelationLInf { .. } => HaltReason::CorrelationLinf,
        }
    }
}

/// Parses `fixed:K`, `l2:B2` or `linf:Binf`.
impl FromStr for StoppingRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::InvalidArgument(format!(
                "bad stopping rule {s:?}; expected fixed:K, l2:B2 or linf:Binf"
            ))
        };
        let (kind, value) = s.split_once(':').ok_or_else(bad)?;
        let rule = match kind {
            "fixed" => StoppingRule::FixedIterations {
                k: value.parse().map_err(|_| bad())?,
            },
            "l2" => StoppingRule::ResidualL2 {
                b2: value.parse().map_err(|_| bad())?,
            },
            "linf" => StoppingRule::CorrelationLInf {
                binf: value.parse().map_err(|_| bad())?,
            },
            _ => return Err(bad()),
        };
        rule.validate()?;
        Ok(rule)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HaltReason {
    FixedIterations,
    ResidualL2,
    CorrelationLinf,
    MaxIterations,
}

impl fmt::Display for HaltReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HaltReason::FixedIterations => "fixed_iterations",
            HaltReason::ResidualL2 => "residual_l2",
            HaltReason::CorrelationLinf => "correlation_linf",
            HaltReason::MaxIterations => "max_iterations",
        })
    }
}

/// One selection step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub selected_index: usize,
    /// `||r_k||_2` of the residual the index was selected from.
    pub residual_l2: f64,
    /// `||A^T r_k||_inf` of that residual.
    pub correlation_linf: f64,
    /// Refit coefficients, aligned with the selection order so far.
    pub coefficients: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OmpTrace {
    pub iterations: Vec<IterationRecord>,
    /// Selected indices, ascending.
    pub final_support: Vec<usize>,
    /// Dense estimate: refit coefficients on the support, zero elsewhere.
    pub estimate: Vec<f64>,
    pub halt_reason: HaltReason,
    /// Norms of the residual the halting decision was made on.
    pub final_residual_l2: f64,
    pub final_correlation_linf: f64,
}

impl OmpTrace {
    /// Selected indices in the order they were chosen.
    pub fn selection_order(&self) -> Vec<usize> {
        self.iterations.iter().map(|it| it.selected_index).collect()
    }
}

/// `A^T r`, entry `i` being `<A_i, r>`.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationVector(pub DVector<f64>);

impl CorrelationVector {
    pub fn linf(&self) -> f64 {
        self.0.amax()
    }
}

pub fn correlations(a: &SenseMatrix, r: &DVector<f64>) -> Result<CorrelationVector> {
    if r.len() != a.m() {
        return Err(Error::Dimension(format!(
            "residual has length {}, expected {}",
            r.len(),
            a.m()
        )));
    }
    Ok(CorrelationVector(a.adjoint_apply(r)))
}

fn argmax_abs(values: impl Iterator<Item = (usize, f64)>) -> Option<(usize, f64)> {
    // strict > keeps the smallest index on exact ties
    values.fold(None, |best, (i, v)| match best {
        Some((_, b)) if !(v.abs() > b) => best,
        _ => Some((i, v.abs())),
    })
}

/// Index of the largest `|c_i|`, smallest index on exact ties.
///
/// A correct residual is orthogonal to every selected column, so the global
/// argmax should never be selected already. If it is, and its magnitude beats
/// the best unselected candidate by more than `tolerance`, the residual has lost
/// orthogonality and [`Error::OrthogonalityViolated`] is returned; otherwise
/// the best unselected index is used.
pub fn select_index(
    c: &CorrelationVector,
    already_selected: &[usize],
    tolerance: f64,
) -> Result<usize> {
    let values = &c.0;
    let (free, free_val) = argmax_abs(
        values
            .iter()
            .copied()
            .enumerate()
            .filter(|(i, _)| !already_selected.contains(i)),
    )
    .ok_or(Error::AllSelected)?;
    let (best, best_val) = argmax_abs(values.iter().copied().enumerate()).expect("non-empty");
    if best == free || !already_selected.contains(&best) {
        return Ok(free);
    }
    if best_val - free_val > tolerance {
        return Err(Error::OrthogonalityViolated {
            index: best,
            value: best_val,
        });
    }
    Ok(free)
}

/// `y - A_support coeffs`.
pub fn residual(
    a: &SenseMatrix,
    y: &DVector<f64>,
    support: &[usize],
    coeffs: &DVector<f64>,
) -> DVector<f64> {
    let mut r = y.clone();
    for (&j, &c) in support.iter().zip(coeffs.iter()) {
        r.axpy(-c, &a.column(j), 1.0);
    }
    r
}

/// Runs OMP until `rule` fires or `max_iterations` indices have been selected.
///
/// The rule is checked on `r_k` before the k-th selection, so data that is
/// already explained yields an empty support. `max_iterations` must not exceed
/// `m`; hitting it is reported as [`HaltReason::MaxIterations`].
pub fn omp_run(
    a: &SenseMatrix,
    y: &DVector<f64>,
    rule: StoppingRule,
    max_iterations: usize,
) -> Result<OmpTrace> {
    rule.validate()?;
    if y.len() != a.m() {
        return Err(Error::Dimension(format!(
            "y has length {}, expected {}",
            y.len(),
            a.m()
        )));
    }
    if max_iterations == 0 || max_iterations > a.m() {
        return Err(Error::InvalidArgument(format!(
            "max_iterations {max_iterations} must lie in 1..={}",
            a.m()
        )));
    }
    let limit = max_iterations.min(a.n());
    let tol = ORTHOGONALITY_TOLERANCE * y.norm();

    let mut support: Vec<usize> = Vec::new();
    let mut coeffs = DVector::zeros(0);
    let mut r = y.clone();
    let mut iterations = Vec::new();

    let (halt_reason, final_residual_l2, final_correlation_linf) = loop {
        let c = correlations(a, &r)?;
        let r_norm = r.norm();
        let c_inf = c.linf();
        let fired = match rule {
            StoppingRule::FixedIterations { k } => support.len() >= k,
            StoppingRule::ResidualL2 { b2 } => r_norm <= b2,
            StoppingRule::CorrelationLInf { binf } => c_inf <= binf,
        };
        if fired {
            break (rule.halt_reason(), r_norm, c_inf);
        }
        if support.len() >= limit {
            break (HaltReason::MaxIterations, r_norm, c_inf);
        }
        let idx = select_index(&c, &support, tol)?;
        support.push(idx);
        coeffs = least_squares(a, &support, y)?;
        r = residual(a, y, &support, &coeffs);
        iterations.push(IterationRecord {
            selected_index: idx,
            residual_l2: r_norm,
            correlation_linf: c_inf,
            coefficients: coeffs.iter().copied().collect(),
        });
    };

    let mut estimate = vec![0.0; a.n()];
    for (&j, &v) in support.iter().zip(coeffs.iter()) {
        estimate[j] = v;
    }
    let mut final_support = support;
    final_support.sort_unstable();
    Ok(OmpTrace {
        iterations,
        final_support,
        estimate,
        halt_reason,
        final_residual_l2,
        final_correlation_linf,
    })
}

/// Invariant measurements over a finished trace.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceInvariants {
    pub distinct_indices: bool,
    /// Largest increase between consecutive residual norms (<= 0 when monotone).
    pub max_residual_increase: f64,
    /// Largest `|<A_i, r_{k+1}>|` over selected `i`, across all iterations.
    pub max_selected_correlation: f64,
}

impl TraceInvariants {
    /// Distinct indices, residuals non-increasing within `1e-12`, and
    /// post-fit orthogonality within `1e-8 ||y||_2`.
    pub fn hold(&self, y_norm: f64) -> bool {
        self.distinct_indices
            && self.max_residual_increase <= 1e-12
            && self.max_selected_correlation <= ORTHOGONALITY_TOLERANCE * y_norm
    }
}

pub fn trace_invariants(a: &SenseMatrix, y: &DVector<f64>, trace: &OmpTrace) -> TraceInvariants {
    let order = trace.selection_order();
    let mut sorted = order.clone();
    sorted.sort_unstable();
    sorted.dedup();
    let distinct_indices = sorted.len() == order.len();

    let mut norms: Vec<f64> = trace.iterations.iter().map(|it| it.residual_l2).collect();
    norms.push(trace.final_residual_l2);
    let max_residual_increase = norms
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);

    let mut max_selected_correlation: f64 = 0.0;
    for (k, it) in trace.iterations.iter().enumerate() {
        let support = &order[..=k];
        let coeffs = DVector::from_column_slice(&it.coefficients);
        let r = residual(a, y, support, &coeffs);
        for &i in support {
            max_selected_correlation = max_selected_correlation.max(a.column(i).dot(&r).abs());
        }
    }
    TraceInvariants {
        distinct_indices,
        max_residual_increase,
        max_selected_correlation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::{gen_gaussian_matrix, normalize_columns};
    use nalgebra::{dvector, DMatrix};

    fn cv(v: Vec<f64>) -> CorrelationVector {
        CorrelationVector(DVector::from_vec(v))
    }

    #[test]
    fn correlation_examples() {
        let a = gen_gaussian_matrix(5, 9, 4).unwrap();
        let c = correlations(&a, &DVector::zeros(5)).unwrap();
        assert!(c.0.iter().all(|v| *v == 0.0));

        let id = normalize_columns(DMatrix::identity(4, 4)).unwrap();
        let e3 = dvector![0.0, 0.0, 1.0, 0.0];
        assert_eq!(correlations(&id, &e3).unwrap().0, e3);

        let r = dvector![0.3, -1.0, 2.0, 0.5, 0.1];
        let c = correlations(&a, &r).unwrap();
        for j in 0..9 {
            let naive: f64 = (0..5).map(|i| a.as_matrix()[(i, j)] * r[i]).sum();
            assert!((c.0[j] - naive).abs() < 1e-12);
        }
        assert!(correlations(&a, &DVector::zeros(4)).is_err());
    }

    #[test]
    fn select_examples() {
        assert_eq!(
            select_index(&cv(vec![0.1, -0.9, 0.3]), &[], 0.0).unwrap(),
            1
        );
        assert_eq!(select_index(&cv(vec![0.5, -0.5]), &[], 0.0).unwrap(), 0);
        let eps = 0.5f64.next_up();
        assert_eq!(select_index(&cv(vec![0.5, -eps]), &[], 0.0).unwrap(), 1);
        assert!(matches!(
            select_index(&cv(vec![0.5, 0.2]), &[0, 1], 0.0),
            Err(Error::AllSelected)
        ));
        assert!(matches!(
            select_index(&cv(vec![0.9, 0.2]), &[0], 1e-8),
            Err(Error::OrthogonalityViolated { index: 0, .. })
        ));
        // numerically-zero correlation on a selected index falls through to the best free one
        assert_eq!(
            select_index(&cv(vec![1e-17, 0.0, 0.0]), &[0], 1e-12).unwrap(),
            1
        );
    }

    #[test]
    fn rule_parsing() {
        assert_eq!(
            "fixed:3".parse::<StoppingRule>().unwrap(),
            StoppingRule::FixedIterations { k: 3 }
        );
        assert_eq!(
            "l2:0.5".parse::<StoppingRule>().unwrap(),
            StoppingRule::ResidualL2 { b2: 0.5 }
        );
        assert_eq!(
            "linf:1e-3".parse::<StoppingRule>().unwrap(),
            StoppingRule::CorrelationLInf { binf: 1e-3 }
        );
        for bad in ["fixed:0", "l2:-1", "linf:abc", "foo:1", "l2"] {
            assert!(bad.parse::<StoppingRule>().is_err(), "{bad}");
        }
    }

    #[test]
    fn orthonormal_recovery() {
        let q = gen_gaussian_matrix(8, 8, 21)
            .unwrap()
            .into_matrix()
            .qr()
            .q();
        let a = normalize_columns(q).unwrap();
        let mut x = DVector::zeros(8);
        x[1] = 2.0;
        x[4] = -1.0;
        x[6] = 0.5;
        let y = a.apply(&x);
        let t = omp_run(&a, &y, StoppingRule::FixedIterations { k: 3 }, 8).unwrap();
        assert_eq!(t.final_support, vec![1, 4, 6]);
        assert_eq!(t.selection_order(), vec![1, 4, 6]);
        for (e, w) in t.estimate.iter().zip(x.iter()) {
            assert!((e - w).abs() < 1e-10);
        }
        assert!(t.final_residual_l2 < 1e-10);
        assert_eq!(t.halt_reason, HaltReason::FixedIterations);
        assert!(trace_invariants(&a, &y, &t).hold(y.norm()));
    }

    #[test]
    fn zero_data_halts_immediately() {
        let a = gen_gaussian_matrix(6, 10, 2).unwrap();
        let t = omp_run(
            &a,
            &DVector::zeros(6),
            StoppingRule::ResidualL2 { b2: 0.1 },
            6,
        )
        .unwrap();
        assert!(t.iterations.is_empty());
        assert!(t.final_support.is_empty());
        assert_eq!(t.halt_reason, HaltReason::ResidualL2);
        assert!(t.estimate.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn max_iterations_and_preconditions() {
        let a = gen_gaussian_matrix(6, 10, 3).unwrap();
        let y = DVector::from_fn(6, |i, _| (i as f64) - 2.5);
        let t = omp_run(&a, &y, StoppingRule::ResidualL2 { b2: 0.0 }, 2).unwrap();
        assert_eq!(t.halt_reason, HaltReason::MaxIterations);
        assert_eq!(t.iterations.len(), 2);
        assert!(omp_run(&a, &y, StoppingRule::FixedIterations { k: 1 }, 7).is_err());
        assert!(omp_run(&a, &y, StoppingRule::FixedIterations { k: 1 }, 0).is_err());
        assert!(omp_run(
            &a,
            &DVector::zeros(5),
            StoppingRule::FixedIterations { k: 1 },
            3
        )
        .is_err());
    }

    #[test]
    fn correlation_rule_halts_on_linf() {
        let a = gen_gaussian_matrix(10, 20, 8).unwrap();
        let y = DVector::from_fn(10, |i, _| ((i * 7) % 5) as f64 - 2.0);
        let binf = 0.5;
        let t = omp_run(&a, &y, StoppingRule::CorrelationLInf { binf }, 10).unwrap();
        assert_eq!(t.halt_reason, HaltReason::CorrelationLinf);
        assert!(t.final_correlation_linf <= binf);
        assert!(t.iterations.iter().all(|it| it.correlation_linf > binf));
    }

    #[test]
    fn residual_examples() {
        let a = gen_gaussian_matrix(4, 6, 1).unwrap();
        let y = dvector![1.0, 2.0, 3.0, 4.0];
        assert_eq!(residual(&a, &y, &[], &DVector::zeros(0)), y);
        let support = [0, 1, 2, 3];
        let c = least_squares(&a, &support, &y).unwrap();
        assert!(residual(&a, &y, &support, &c).norm() < 1e-10);
        let c = least_squares(&a, &[2, 5], &y).unwrap();
        let r = residual(&a, &y, &[2, 5], &c);
        for j in [2, 5] {
            assert!(a.column(j).dot(&r).abs() <= 1e-8 * y.norm());
        }
    }

    #[test]
    fn halt_reason_strings() {
        let names: Vec<String> = [
            HaltReason::FixedIterations,
            HaltReason::ResidualL2,
            HaltReason::CorrelationLinf,
            HaltReason::MaxIterations,
        ]
        .iter()
        .map(|h| serde_json::to_string(h).unwrap())
        .collect();
        assert_eq!(
            names,
            [
                "\"fixed_iterations\"",
                "\"residual_l2\"",
                "\"correlation_linf\"",
                "\"max_iterations\""
            ]
        );
        assert_eq!(HaltReason::CorrelationLinf.to_string(), "correlation_linf");
    }
}
