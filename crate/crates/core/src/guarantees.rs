//! Closed-form sufficient conditions for OMP support recovery under noise.
//!
//! Every condition is phrased through the isometry constant of order `K + 1`
//! for a `K`-sparse signal; [`rip_order_for`] is the single place that fixes
//! this. All comparisons are strict: a value sitting exactly on a threshold
//! does not satisfy it.
//!
//! The Gaussian bound uses the natural logarithm.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sensing::{project_out, SenseMatrix};
use crate::signal::SparseSignal;

/// Order of the isometry constant the conditions are stated in, for a
/// `sparsity`-sparse signal.
pub const fn rip_order_for(sparsity: usize) -> usize {
    sparsity + 1
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    /// `||z||_2 < b2`.
    L2Ball { b2: f64 },
    /// `||A^T z||_inf < binf`.
    LinfCorrelation { binf: f64 },
    /// `z ~ N(0, sigma^2 I)`.
    Gaussian { sigma: f64 },
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        let (name, v, strict) = match *self {
            NoiseSpec::L2Ball { b2 } => ("b2", b2, false),
            NoiseSpec::LinfCorrelation { binf } => ("binf", binf, false),
            NoiseSpec::Gaussian { sigma } => ("sigma", sigma, true),
        };
        let ok = v.is_finite() && if strict { v > 0.0 } else { v >= 0.0 };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "noise parameter {name} = {v} is out of range"
            )))
        }
    }
}

/// `1 / (sqrt(K) + 3)`.
pub fn delta_threshold(sparsity: usize) -> f64 {
    1.0 / ((sparsity as f64).sqrt() + 3.0)
}

/// `(1 - d)^2 - d (1 + sqrt(K))`, positive whenever `d < delta_threshold(K)`.
pub fn lemma31_gap(delta: f64, sparsity: usize) -> f64 {
    gap(delta, (sparsity as f64).sqrt())
}

fn gap(delta: f64, root: f64) -> f64 {
    (1.0 - delta) * (1.0 - delta) - delta * (1.0 + root)
}

fn checked_gap(delta: f64, root: f64) -> Result<f64> {
    let g = gap(delta, root);
    if g > 0.0 {
        Ok(g)
    } else {
        Err(Error::DegenerateDenominator { gap: g })
    }
}

/// Right-hand side of the per-iteration selection condition: OMP picks a
/// support index at step `iteration + 1` when `||x_{S^c}||_2` exceeds
/// `2 (1 - d) E sqrt(K - k) / ((1 - d)^2 - d (1 + sqrt(K - k)))`.
pub fn selection_condition_rhs(
    delta: f64,
    sparsity: usize,
    iteration: usize,
    noise_e: f64,
) -> Result<f64> {
    if iteration >= sparsity {
        return Err(Error::InvalidArgument(format!(
            "iteration {iteration} must be below sparsity {sparsity}"
        )));
    }
    let root = ((sparsity - iteration) as f64).sqrt();
    let g = checked_gap(delta, root)?;
    Ok(2.0 * (1.0 - delta) * noise_e * root / g)
}

/// `||A^T (I - P_S) z||_inf`, where `P_S` projects onto the span of columns `S`.
pub fn noise_projection_e(a: &SenseMatrix, z: &DVector<f64>, support: &[usize]) -> Result<f64> {
    let zk = project_out(a, support, z)?;
    Ok(a.adjoint_apply(&zk).amax())
}

/// Minimum coefficient magnitude for recovery with `||z||_2 < b2` and
/// residual-norm stopping at `b2`.
pub fn thm_l2_min_coeff(delta: f64, sparsity: usize, b2: f64) -> Result<f64> {
    let g = checked_gap(delta, (sparsity as f64).sqrt())?;
    Ok(2.0 * (1.0 - delta) * b2 / g)
}

/// Minimum coefficient magnitude for recovery with `||A^T z||_inf < binf`
/// and correlation stopping: the l2 form times `1 + sqrt(K) / sqrt(1 - d)`.
pub fn thm_linf_min_coeff(delta: f64, sparsity: usize, binf: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::InvalidArgument(format!(
            "delta {delta} must lie in [0, 1)"
        )));
    }
    let base = thm_l2_min_coeff(delta, sparsity, binf)?;
    Ok(base * (1.0 + (sparsity as f64).sqrt() / (1.0 - delta).sqrt()))
}

/// `sigma sqrt(m + 2 sqrt(m ln m))`; a `N(0, sigma^2 I_m)` draw lies inside
/// this radius with probability at least `1 - 1/m`.
pub fn gaussian_l2_bound(m: usize, sigma: f64) -> f64 {
    let mf = m as f64;
    sigma * (mf + 2.0 * (mf * mf.ln()).sqrt()).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaSource {
    /// Exact constant from subset enumeration.
    Exact,
    /// Any upper bound, e.g. `K mu`; conservative.
    UpperBound,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputsEcho {
    pub delta: f64,
    pub delta_order: usize,
    pub delta_source: DeltaSource,
    pub sparsity: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub iteration: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub noise_bound: Option<f64>,
}

/// One evaluated condition. `satisfied` iff `margin = lhs - rhs > 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuaranteeReport {
    pub condition_name: String,
    #[serde(with = "nonfinite_as_null")]
    pub lhs: f64,
    #[serde(with = "nonfinite_as_null")]
    pub rhs: f64,
    pub satisfied: bool,
    #[serde(with = "nonfinite_as_null")]
    pub margin: f64,
    /// The condition's denominator was not positive; the theorem does not apply.
    pub degenerate: bool,
    pub inputs_echo: InputsEcho,
}

impl GuaranteeReport {
    fn compare(name: &str, lhs: f64, rhs: f64, echo: InputsEcho) -> Self {
        let margin = lhs - rhs;
        Self {
            condition_name: name.to_string(),
            lhs,
            rhs,
            satisfied: margin > 0.0,
            margin,
            degenerate: false,
            inputs_echo: echo,
        }
    }

    fn inapplicable(name: &str, lhs: f64, echo: InputsEcho) -> Self {
        Self {
            condition_name: name.to_string(),
            lhs,
            rhs: f64::INFINITY,
            satisfied: false,
            margin: f64::NEG_INFINITY,
            degenerate: true,
            inputs_echo: echo,
        }
    }
}

mod nonfinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

pub mod names {
    pub const DELTA: &str = "delta_condition";
    pub const THM_L2: &str = "l2_min_coefficient";
    pub const THM_GAUSSIAN: &str = "gaussian_min_coefficient";
    pub const THM_LINF: &str = "linf_min_coefficient";
}

/// Reports for the isometry condition and the coefficient condition matching
/// `noise`. `delta` is the constant of order `rip_order_for(K)`.
pub fn evaluate_guarantees(
    delta: f64,
    delta_source: DeltaSource,
    signal: &SparseSignal,
    noise: &NoiseSpec,
    m: usize,
) -> Vec<GuaranteeReport> {
    let k = signal.sparsity();
    let echo = |bound: Option<f64>| InputsEcho {
        delta,
        delta_order: rip_order_for(k),
        delta_source,
        sparsity: k,
        iteration: None,
        noise_bound: bound,
    };

    let mut reports = vec![GuaranteeReport::compare(
        names::DELTA,
        delta_threshold(k),
        delta,
        echo(None),
    )];

    let min_abs = signal.min_abs();
    let (name, bound, threshold) = match *noise {
        NoiseSpec::L2Ball { b2 } => (names::THM_L2, b2, thm_l2_min_coeff(delta, k, b2)),
        NoiseSpec::Gaussian { sigma } => {
            let b2 = gaussian_l2_bound(m, sigma);
            (names::THM_GAUSSIAN, b2, thm_l2_min_coeff(delta, k, b2))
        }
        NoiseSpec::LinfCorrelation { binf } => {
            (names::THM_LINF, binf, thm_linf_min_coeff(delta, k, binf))
        }
    };
    reports.push(match threshold {
        Ok(t) => GuaranteeReport::compare(name, min_abs, t, echo(Some(bound))),
        Err(_) => GuaranteeReport::inapplicable(name, min_abs, echo(Some(bound))),
    });
    reports
}

pub fn all_satisfied(reports: &[GuaranteeReport]) -> bool {
    reports.iter().all(|r| r.satisfied)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn threshold_examples() {
        close(delta_threshold(1), 0.25, 1e-15);
        close(delta_threshold(4), 0.2, 1e-15);
        close(delta_threshold(2), 0.226_540_919, 1e-9);
    }

    #[test]
    fn gap_examples() {
        close(lemma31_gap(0.0, 7), 1.0, 0.0);
        close(lemma31_gap(0.2, 4), 0.04, 1e-15);
        for k in 1..=100 {
            assert!(lemma31_gap(delta_threshold(k) - 1e-6, k) > 0.0, "k={k}");
        }
    }

    #[test]
    fn selection_rhs_examples() {
        close(selection_condition_rhs(0.2, 4, 0, 0.0).unwrap(), 0.0, 0.0);
        close(
            selection_condition_rhs(0.2, 4, 0, 1.0).unwrap(),
            80.0,
            1e-11,
        );
        close(
            selection_condition_rhs(0.2, 4, 3, 1.0).unwrap(),
            1.6 / 0.24,
            1e-12,
        );
        assert!(matches!(
            selection_condition_rhs(0.5, 4, 0, 1.0),
            Err(Error::DegenerateDenominator { .. })
        ));
        assert!(selection_condition_rhs(0.1, 2, 2, 1.0).is_err());
    }

    #[test]
    fn min_coeff_examples() {
        close(thm_l2_min_coeff(0.2, 4, 0.0).unwrap(), 0.0, 0.0);
        close(thm_l2_min_coeff(0.2, 4, 0.01).unwrap(), 0.4, 1e-13);
        close(thm_l2_min_coeff(0.1, 4, 1.0).unwrap(), 1.8 / 0.51, 1e-13);
        close(thm_linf_min_coeff(0.1, 4, 0.0).unwrap(), 0.0, 0.0);
        close(thm_linf_min_coeff(0.0, 4, 1.0).unwrap(), 6.0, 1e-14);
        close(
            thm_linf_min_coeff(0.2, 4, 0.01).unwrap(),
            0.4 * (1.0 + 2.0 / 0.8f64.sqrt()),
            1e-13,
        );
        close(
            thm_linf_min_coeff(0.2, 4, 0.01).unwrap(),
            1.294_427_190_999_916,
            1e-13,
        );
        assert!(thm_l2_min_coeff(0.3, 4, 1.0).is_err());
        assert!(thm_linf_min_coeff(1.0, 1, 1.0).is_err());
    }

    #[test]
    fn gaussian_bound_examples() {
        // sqrt(2 + 2 sqrt(2 ln 2)) and 2 sqrt(64 + 2 sqrt(64 ln 64)), evaluated with mpmath at 30 digits
        close(gaussian_l2_bound(2, 1.0), 2.086_820_558_895_984_6, 1e-14);
        close(gaussian_l2_bound(64, 2.0), 19.660_045_135_797_82, 1e-12);
        assert!(gaussian_l2_bound(100, 1e-300) < 1e-297);
    }

    #[test]
    fn noiseless_reports_all_satisfied() {
        let x = SparseSignal::new(10, vec![2, 7], vec![1e-3, -5.0]).unwrap();
        let r = evaluate_guarantees(
            0.1,
            DeltaSource::Exact,
            &x,
            &NoiseSpec::L2Ball { b2: 0.0 },
            8,
        );
        assert_eq!(r.len(), 2);
        assert!(all_satisfied(&r));
        assert_eq!(r[0].inputs_echo.delta_order, 3);
    }

    #[test]
    fn boundary_delta_is_unsatisfied() {
        let x = SparseSignal::new(10, vec![2, 7], vec![1.0, 1.0]).unwrap();
        let d = delta_threshold(2);
        let r = evaluate_guarantees(d, DeltaSource::Exact, &x, &NoiseSpec::L2Ball { b2: 0.0 }, 8);
        assert!(!r[0].satisfied);
        assert_eq!(r[0].margin, 0.0);
    }

    #[test]
    fn degenerate_reports_flag_and_serialize() {
        let x = SparseSignal::new(10, vec![2, 7], vec![1.0, 1.0]).unwrap();
        let r = evaluate_guarantees(
            0.6,
            DeltaSource::UpperBound,
            &x,
            &NoiseSpec::LinfCorrelation { binf: 0.1 },
            8,
        );
        assert!(r[1].degenerate && !r[1].satisfied);
        assert_eq!(r[1].margin, f64::NEG_INFINITY);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"margin\":null"));
        let back: Vec<GuaranteeReport> = serde_json::from_str(&json).unwrap();
        assert_eq!(back[1].margin, f64::NEG_INFINITY);
    }

    #[test]
    fn noise_projection_examples() {
        use crate::sensing::gen_gaussian_matrix;
        let a = gen_gaussian_matrix(6, 10, 3).unwrap();
        assert_eq!(
            noise_projection_e(&a, &DVector::zeros(6), &[1, 2]).unwrap(),
            0.0
        );
        let z = DVector::from_fn(6, |i, _| (i as f64 * 0.7).sin());
        close(
            noise_projection_e(&a, &z, &[]).unwrap(),
            a.adjoint_apply(&z).amax(),
            1e-15,
        );
        let inside = a.column(3) * 0.4 - a.column(8) * 1.3;
        assert!(noise_projection_e(&a, &inside.into_owned(), &[3, 8]).unwrap() < 1e-10);
    }

    #[test]
    fn noise_spec_validation() {
        assert!(NoiseSpec::Gaussian { sigma: 0.0 }.validate().is_err());
        assert!(NoiseSpec::L2Ball { b2: 0.0 }.validate().is_ok());
        assert!(NoiseSpec::LinfCorrelation { binf: -1.0 }
            .validate()
            .is_err());
    }
}
