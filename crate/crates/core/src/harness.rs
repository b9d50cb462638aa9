//! Monte Carlo experiments relating the recovery conditions to what OMP does.
//!
//! A trial draws a matrix (or reuses a fixed one), a sparse signal and a noise
//! vector, optionally certifies the order `K + 1` isometry constant exactly,
//! evaluates the recovery conditions, runs OMP and records whether the support
//! came back. Trial `i` uses the seed `derive_seed(master_seed, i)` split into
//! independent matrix/signal/noise streams, so results do not depend on the
//! order trials are executed in. A fixed matrix is drawn from
//! `stream_seed(master_seed, Matrix)`.

use std::fs;
use std::path::Path;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::guarantees::{
    all_satisfied, delta_threshold, evaluate_guarantees, gaussian_l2_bound, names, rip_order_for,
    DeltaSource, GuaranteeReport, NoiseSpec,
};
use crate::io::{fmt_f64, write_text};
use crate::omp::{omp_run, trace_invariants, HaltReason, OmpTrace, StoppingRule};
use crate::seed::{derive_seed, stream_seed, Stream};
use crate::sensing::{
    gen_gaussian_matrix, gen_incoherent_frame, rip_exact, SenseMatrix, DEFAULT_RIP_BUDGET,
};
use crate::signal::SparseSignal;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Magnitude {
    /// Every `|x_i|` equals the minimum.
    FixedAtMin,
    /// `|x_i|` uniform in `[min, max_factor * min]`.
    Uniform { max_factor: f64 },
    /// `|x_i| = min + |g|` with `g ~ N(0, 1)`; usable with `min = 0`.
    ShiftedNormal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoeffPolicy {
    pub min_magnitude: f64,
    pub magnitude: Magnitude,
}

/// Stopping rule of an experiment. A missing threshold is taken from the noise
/// model: `b2` for an l2 ball, `sigma sqrt(m + 2 sqrt(m ln m))` for Gaussian
/// noise, `binf` for correlation-bounded noise. A missing count is `k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum StoppingSpec {
    FixedIterations {
        #[serde(default)]
        k: Option<usize>,
    },
    ResidualL2 {
        #[serde(default)]
        b2: Option<f64>,
    },
    CorrelationLInf {
        #[serde(default)]
        binf: Option<f64>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixMode {
    FreshPerTrial,
    Fixed,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixFamily {
    #[default]
    Gaussian,
    IncoherentFrame,
}

impl MatrixFamily {
    pub fn generate(self, m: usize, n: usize, seed: u64) -> Result<SenseMatrix> {
        match self {
            MatrixFamily::Gaussian => gen_gaussian_matrix(m, n, seed),
            MatrixFamily::IncoherentFrame => gen_incoherent_frame(m, n, seed),
        }
    }
}

fn default_budget() -> u64 {
    DEFAULT_RIP_BUDGET
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub trials: u64,
    pub noise: NoiseSpec,
    pub coeff_policy: CoeffPolicy,
    pub stopping: StoppingSpec,
    pub master_seed: u64,
    pub certify: bool,
    pub matrix_mode: MatrixMode,
    #[serde(default)]
    pub matrix_family: MatrixFamily,
    #[serde(default = "default_budget")]
    pub rip_budget: u64,
    /// Defaults to `m`.
    #[serde(default)]
    pub max_iterations: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.k <= self.m && self.m <= self.n) {
            return bad(format!(
                "need k <= m <= n, got k={}, m={}, n={}",
                self.k, self.m, self.n
            ));
        }
        if self.m == 0 {
            return bad("m must be positive".into());
        }
        if self.trials == 0 {
            return bad("trials must be positive".into());
        }
        let min = self.coeff_policy.min_magnitude;
        if !(min >= 0.0 && min.is_finite()) {
            return bad(format!("min_magnitude {min} must be finite and >= 0"));
        }
        match self.coeff_policy.magnitude {
            Magnitude::Uniform { max_factor } if !(max_factor >= 1.0 && max_factor.is_finite()) => {
                return bad(format!("max_factor {max_factor} must be >= 1"));
            }
            Magnitude::FixedAtMin | Magnitude::Uniform { .. } if min == 0.0 && self.k > 0 => {
                return bad("min_magnitude 0 needs the shifted_normal magnitude policy".into());
            }
            _ => {}
        }
        self.noise.validate()?;
        if self.certify && rip_order_for(self.k) > self.n {
            return bad(format!("certification needs k + 1 <= n, got k={}", self.k));
        }
        if let Some(mi) = self.max_iterations {
            if mi == 0 || mi > self.m {
                return bad(format!("max_iterations {mi} must lie in 1..={}", self.m));
            }
        }
        self.stopping_rule()?.validate()
    }

    /// The concrete stopping rule after filling thresholds from the noise model.
    pub fn stopping_rule(&self) -> Result<StoppingRule> {
        let missing = |what: &str| {
            Error::InvalidArgument(format!(
                "no {what} threshold given and none implied by the noise model"
            ))
        };
        Ok(match self.stopping {
            StoppingSpec::FixedIterations { k } => StoppingRule::FixedIterations {
                k: k.unwrap_or(self.k),
            },
            StoppingSpec::ResidualL2 { b2 } => StoppingRule::ResidualL2 {
                b2: match (b2, self.noise) {
                    (Some(b), _) => b,
                    (None, NoiseSpec::L2Ball { b2 }) => b2,
                    (None, NoiseSpec::Gaussian { sigma }) => gaussian_l2_bound(self.m, sigma),
                    (None, NoiseSpec::LinfCorrelation { .. }) => return Err(missing("l2")),
                },
            },
            StoppingSpec::CorrelationLInf { binf } => StoppingRule::CorrelationLInf {
                binf: match (binf, self.noise) {
                    (Some(b), _) => b,
                    (None, NoiseSpec::LinfCorrelation { binf }) => binf,
                    (None, _) => return Err(missing("correlation")),
                },
            },
        })
    }
}

/// Uniformly random support of size `k` with signs and magnitudes from `policy`.
pub fn gen_sparse_signal(
    n: usize,
    k: usize,
    policy: &CoeffPolicy,
    seed: u64,
) -> Result<SparseSignal> {
    if k > n {
        return Err(Error::InvalidArgument(format!("k = {k} exceeds n = {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
    }
    let mut support = pool[..k].to_vec();
    support.sort_unstable();
    let min = policy.min_magnitude;
    let values = (0..k)
        .map(|_| {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let mag = match policy.magnitude {
                Magnitude::FixedAtMin => min,
                Magnitude::Uniform { max_factor } => rng.random_range(min..=max_factor * min),
                Magnitude::ShiftedNormal => loop {
                    let g: f64 = rng.sample(StandardNormal);
                    let v = min + g.abs();
                    if v > 0.0 {
                        break v;
                    }
                },
            };
            sign * mag
        })
        .collect();
    SparseSignal::new(n, support, values)
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseDraw {
    pub z: DVector<f64>,
    pub realized_l2: f64,
    pub realized_corr_inf: f64,
}

impl NoiseDraw {
    fn new(a: &SenseMatrix, z: DVector<f64>) -> Self {
        Self {
            realized_l2: z.norm(),
            realized_corr_inf: a.adjoint_apply(&z).amax(),
            z,
        }
    }

    /// Whether the draw honours the bound it was sampled under. Zero bounds
    /// admit only `z = 0`.
    pub fn satisfies(&self, spec: &NoiseSpec) -> bool {
        match *spec {
            NoiseSpec::L2Ball { b2 } => {
                self.realized_l2 < b2 || (b2 == 0.0 && self.realized_l2 == 0.0)
            }
            NoiseSpec::LinfCorrelation { binf } => {
                self.realized_corr_inf < binf || (binf == 0.0 && self.realized_corr_inf == 0.0)
            }
            NoiseSpec::Gaussian { .. } => true,
        }
    }
}

/// Draws `z` under `spec`.
///
/// - l2 ball: a Gaussian direction scaled to radius `u * b2`, `u` uniform in `[0, 1)`.
/// - correlation bound: a standard Gaussian vector, rescaled once by
///   `binf / (||A^T z||_inf (1 + 1e-9))` when it violates the bound.
/// - Gaussian: i.i.d. `N(0, sigma^2)` entries.
pub fn sample_noise(spec: &NoiseSpec, a: &SenseMatrix, seed: u64) -> Result<NoiseDraw> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = a.m();
    let mut gaussian = || DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let z = match *spec {
        NoiseSpec::L2Ball { b2: 0.0 } => DVector::zeros(m),
        NoiseSpec::L2Ball { b2 } => {
            let g = loop {
                let g = gaussian();
                if g.norm() > 0.0 {
                    break g;
                }
            };
            let u: f64 = rng.random_range(0.0..1.0);
            let norm = g.norm();
            g * (u * b2 / norm)
        }
        NoiseSpec::LinfCorrelation { binf: 0.0 } => DVector::zeros(m),
        NoiseSpec::LinfCorrelation { binf } => {
            let g = gaussian();
            let c = a.adjoint_apply(&g).amax();
            if c >= binf {
                g * (binf / (c * (1.0 + 1e-9)))
            } else {
                g
            }
        }
        NoiseSpec::Gaussian { sigma } => gaussian() * sigma,
    };
    Ok(NoiseDraw::new(a, z))
}

/// Per-condition outcomes; `None` when the condition was not evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Hypotheses {
    pub delta_condition: Option<bool>,
    /// l2-ball (or Gaussian-radius) coefficient condition together with the delta condition.
    pub l2_theorem: Option<bool>,
    /// Correlation-bound coefficient condition together with the delta condition.
    pub linf_theorem: Option<bool>,
}

impl Hypotheses {
    fn from_reports(reports: &[GuaranteeReport]) -> Self {
        let get = |name: &str| {
            reports
                .iter()
                .find(|r| r.condition_name == name)
                .map(|r| r.satisfied)
        };
        let delta = get(names::DELTA);
        let both = |c: Option<bool>| c.map(|c| c && delta.unwrap_or(false));
        Self {
            delta_condition: delta,
            l2_theorem: both(get(names::THM_L2).or(get(names::THM_GAUSSIAN))),
            linf_theorem: both(get(names::THM_LINF)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_index: u64,
    pub delta_kp1: Option<f64>,
    pub hypotheses: Hypotheses,
    /// Every evaluated condition held (false when nothing was certified).
    pub hypotheses_satisfied: bool,
    pub recovered_support: Vec<usize>,
    pub exact_support_match: bool,
    /// The first `K` selections are exactly `supp(x)`.
    pub support_found: bool,
    pub iterations_used: usize,
    pub final_residual_l2: f64,
    pub halt_reason: HaltReason,
    pub trace_invariants_hold: bool,
}

/// Everything one trial produced.
#[derive(Clone, Debug)]
pub struct TrialOutcome {
    pub record: TrialRecord,
    pub trace: OmpTrace,
    pub reports: Vec<GuaranteeReport>,
    pub a: SenseMatrix,
    pub x: SparseSignal,
    pub noise: NoiseDraw,
    pub y: DVector<f64>,
}

/// A validated configuration plus the shared matrix in fixed mode.
pub struct Experiment {
    config: ExperimentConfig,
    rule: StoppingRule,
    fixed: Option<(SenseMatrix, Option<f64>)>,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let rule = config.stopping_rule()?;
        let fixed = match config.matrix_mode {
            MatrixMode::FreshPerTrial => None,
            MatrixMode::Fixed => {
                let a = config.matrix_family.generate(
                    config.m,
                    config.n,
                    stream_seed(config.master_seed, Stream::Matrix),
                )?;
                let delta = certify(&config, &a)?;
                Some((a, delta))
            }
        };
        Ok(Self {
            config,
            rule,
            fixed,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn run_trial(&self, trial_index: u64) -> Result<TrialOutcome> {
        let cfg = &self.config;
        let seed = derive_seed(cfg.master_seed, trial_index);
        let (a, delta_kp1) = match &self.fixed {
            Some((a, d)) => (a.clone(), *d),
            None => {
                let a =
                    cfg.matrix_family
                        .generate(cfg.m, cfg.n, stream_seed(seed, Stream::Matrix))?;
                let d = certify(cfg, &a)?;
                (a, d)
            }
        };
        let x = gen_sparse_signal(
            cfg.n,
            cfg.k,
            &cfg.coeff_policy,
            stream_seed(seed, Stream::Signal),
        )?;
        let noise = sample_noise(&cfg.noise, &a, stream_seed(seed, Stream::Noise))?;
        if !noise.satisfies(&cfg.noise) {
            return Err(Error::InvalidArgument(format!(
                "noise draw for trial {trial_index} violates its bound ({:?})",
                cfg.noise
            )));
        }
        let y = a.apply(&x.to_dense()) + &noise.z;

        let reports = match delta_kp1 {
            Some(d) => evaluate_guarantees(d, DeltaSource::Exact, &x, &cfg.noise, cfg.m),
            None => Vec::new(),
        };
        let hypotheses = Hypotheses::from_reports(&reports);
        let hypotheses_satisfied = !reports.is_empty() && all_satisfied(&reports);

        let trace = omp_run(&a, &y, self.rule, cfg.max_iterations.unwrap_or(cfg.m))?;
        let order = trace.selection_order();
        let mut first_k: Vec<usize> = order.iter().take(cfg.k).copied().collect();
        first_k.sort_unstable();
        let trace_invariants_hold = trace_invariants(&a, &y, &trace).hold(y.norm());

        let record = TrialRecord {
            trial_index,
            delta_kp1,
            hypotheses,
            hypotheses_satisfied,
            exact_support_match: trace.final_support == x.support(),
            support_found: first_k == x.support(),
            recovered_support: trace.final_support.clone(),
            iterations_used: trace.iterations.len(),
            final_residual_l2: trace.final_residual_l2,
            halt_reason: trace.halt_reason,
            trace_invariants_hold,
        };
        Ok(TrialOutcome {
            record,
            trace,
            reports,
            a,
            x,
            noise,
            y,
        })
    }

    /// Runs every trial, in parallel when the `parallel` feature is on.
    /// Records come back in trial order.
    pub fn run(&self) -> Result<Vec<TrialRecord>> {
        self.run_range(0, self.config.trials)
    }

    fn run_range(&self, start: u64, end: u64) -> Result<Vec<TrialRecord>> {
        let one = |i: u64| self.run_trial(i).map(|o| o.record);
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            (start..end).into_par_iter().map(one).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            (start..end).map(one).collect()
        }
    }

    /// Runs trials `0, 1, 2, ...` until `target` of them satisfy every
    /// hypothesis, or `max_trials` have run. Trials that miss the hypotheses
    /// (e.g. failed certification) stay in the returned list so they can be
    /// counted. The list is truncated right after the `target`-th hypothesis
    /// trial, so its length does not depend on batching.
    pub fn run_until_hypotheses(&self, target: u64, max_trials: u64) -> Result<Vec<TrialRecord>> {
        let mut records: Vec<TrialRecord> = Vec::new();
        let mut found = 0u64;
        while found < target && (records.len() as u64) < max_trials {
            let start = records.len() as u64;
            let end = (start + (target - found).max(16)).min(max_trials);
            for r in self.run_range(start, end)? {
                if found >= target {
                    break;
                }
                found += r.hypotheses_satisfied as u64;
                records.push(r);
            }
        }
        Ok(records)
    }
}

fn certify(cfg: &ExperimentConfig, a: &SenseMatrix) -> Result<Option<f64>> {
    if !cfg.certify {
        return Ok(None);
    }
    Ok(Some(
        rip_exact(a, rip_order_for(cfg.k), cfg.rip_budget)?.delta,
    ))
}

pub fn run_trial(config: &ExperimentConfig, trial_index: u64) -> Result<TrialRecord> {
    Ok(Experiment::new(config.clone())?
        .run_trial(trial_index)?
        .record)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub trials: u64,
    pub recovery_rate_overall: f64,
    /// `None` when no trial satisfied the hypotheses.
    pub recovery_rate_given_hypotheses: Option<f64>,
    pub hypothesis_rate: f64,
    /// Trials where every hypothesis held but the support was not recovered exactly.
    pub counterexample_count: u64,
    pub hypothesis_trials: u64,
    /// Certified trials whose isometry constant missed `1/(sqrt(K)+3)`.
    pub certification_failures: u64,
    /// Among hypothesis trials, fraction whose first `K` selections were `supp(x)`.
    pub support_found_rate_given_hypotheses: Option<f64>,
    pub trace_invariant_violations: u64,
}

pub fn summarize(config: &ExperimentConfig, records: &[TrialRecord]) -> ExperimentSummary {
    let total = records.len() as u64;
    let rate = |num: usize, den: usize| {
        if den == 0 {
            None
        } else {
            Some(num as f64 / den as f64)
        }
    };
    let hyp: Vec<&TrialRecord> = records.iter().filter(|r| r.hypotheses_satisfied).collect();
    let threshold = delta_threshold(config.k);
    ExperimentSummary {
        trials: total,
        recovery_rate_overall: rate(
            records.iter().filter(|r| r.exact_support_match).count(),
            records.len(),
        )
        .unwrap_or(0.0),
        recovery_rate_given_hypotheses: rate(
            hyp.iter().filter(|r| r.exact_support_match).count(),
            hyp.len(),
        ),
        hypothesis_rate: rate(hyp.len(), records.len()).unwrap_or(0.0),
        counterexample_count: hyp.iter().filter(|r| !r.exact_support_match).count() as u64,
        hypothesis_trials: hyp.len() as u64,
        certification_failures: records
            .iter()
            .filter(|r| r.delta_kp1.is_some_and(|d| !(d < threshold)))
            .count() as u64,
        support_found_rate_given_hypotheses: rate(
            hyp.iter().filter(|r| r.support_found).count(),
            hyp.len(),
        ),
        trace_invariant_violations: records.iter().filter(|r| !r.trace_invariants_hold).count()
            as u64,
    }
}

pub const CSV_HEADER: &str =
    "trial_index,delta_kp1,thm33_hyp,thm35_hyp,recovered,match,iterations,residual";

/// One header line, then one row per trial in trial order.
pub fn records_to_csv(records: &[TrialRecord]) -> String {
    let opt_bool = |b: Option<bool>| b.map(|v| v.to_string()).unwrap_or_default();
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        let recovered: Vec<String> = r.recovered_support.iter().map(|i| i.to_string()).collect();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.trial_index,
            r.delta_kp1.map(fmt_f64).unwrap_or_default(),
            opt_bool(r.hypotheses.l2_theorem),
            opt_bool(r.hypotheses.linf_theorem),
            recovered.join(";"),
            r.exact_support_match,
            r.iterations_used,
            fmt_f64(r.final_residual_l2),
        ));
    }
    out
}

pub fn summary_to_json(summary: &ExperimentSummary) -> Result<String> {
    let mut s = serde_json::to_string_pretty(summary)?;
    s.push('\n');
    Ok(s)
}

/// Runs the experiment; with `out_dir`, writes `trials.csv` and `summary.json` there.
pub fn run_experiment(
    config: &ExperimentConfig,
    out_dir: Option<&Path>,
) -> Result<(ExperimentSummary, Vec<TrialRecord>)> {
    let exp = Experiment::new(config.clone())?;
    let records = exp.run()?;
    let summary = summarize(config, &records);
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        write_text(&dir.join("trials.csv"), &records_to_csv(&records))?;
        write_text(&dir.join("summary.json"), &summary_to_json(&summary)?)?;
    }
    Ok((summary, records))
}
