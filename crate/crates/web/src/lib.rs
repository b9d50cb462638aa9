//! Browser bindings for the interactive demo page in `www/`.
//!
//! Each export takes plain numbers and returns a JSON string; the page draws
//! the result on a canvas. The same functions are callable natively, which is
//! how the tests exercise them.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use omp_recovery::guarantees::{
    delta_threshold, gaussian_l2_bound, rip_order_for, thm_l2_min_coeff, thm_linf_min_coeff,
    NoiseSpec,
};
use omp_recovery::harness::{
    gen_sparse_signal, sample_noise, CoeffPolicy, Magnitude, MatrixFamily,
};
use omp_recovery::omp::{omp_run, StoppingRule};
use omp_recovery::seed::{stream_seed, Stream};
use omp_recovery::sensing::{
    binomial, coherence_rip_bound, gershgorin_rip_bound, mutual_incoherence, rip_exact, SenseMatrix,
};
use omp_recovery::Error;

/// Largest number of subsets the page may enumerate for one order.
const PAGE_RIP_BUDGET: u64 = 2_000_000;

fn family(name: &str) -> Result<MatrixFamily, Error> {
    match name {
        "gaussian" => Ok(MatrixFamily::Gaussian),
        "frame" => Ok(MatrixFamily::IncoherentFrame),
        _ => Err(Error::InvalidArgument(format!(
            "unknown matrix family {name:?}"
        ))),
    }
}

fn matrix(m: usize, n: usize, family_name: &str, seed: u64) -> Result<SenseMatrix, Error> {
    family(family_name)?.generate(m, n, stream_seed(seed, Stream::Matrix))
}

/// Draws `A`, a K-sparse `x` and Gaussian noise, then runs OMP.
/// `rule` is `"l2"` (stop at the Gaussian noise radius) or `"fixed"` (K steps).
pub fn recovery_demo(
    m: usize,
    n: usize,
    k: usize,
    sigma: f64,
    rule: &str,
    family_name: &str,
    seed: u64,
) -> Result<Value, Error> {
    let a = matrix(m, n, family_name, seed)?;
    let policy = CoeffPolicy {
        min_magnitude: 1.0,
        magnitude: Magnitude::Uniform { max_factor: 2.0 },
    };
    let x = gen_sparse_signal(n, k, &policy, stream_seed(seed, Stream::Signal))?;
    let noise = sample_noise(
        &NoiseSpec::Gaussian { sigma },
        &a,
        stream_seed(seed, Stream::Noise),
    )?;
    let y = a.apply(&x.to_dense()) + &noise.z;
    let stopping = match rule {
        "l2" => StoppingRule::ResidualL2 {
            b2: gaussian_l2_bound(m, sigma).max(f64::MIN_POSITIVE),
        },
        "fixed" => StoppingRule::FixedIterations { k },
        _ => return Err(Error::InvalidArgument(format!("unknown rule {rule:?}"))),
    };
    let trace = omp_run(&a, &y, stopping, m)?;
    Ok(json!({
        "x": x.to_dense().as_slice(),
        "true_support": x.support(),
        "noise_l2": noise.realized_l2,
        "trace": trace,
        "exact": trace.final_support == x.support(),
    }))
}

/// Exact `delta_K` for `K = 1..=max_order` next to the coherence bounds and
/// the recovery threshold each order must beat.
pub fn rip_profile(
    m: usize,
    n: usize,
    max_order: usize,
    family_name: &str,
    seed: u64,
) -> Result<Value, Error> {
    let a = matrix(m, n, family_name, seed)?;
    let mu = mutual_incoherence(&a);
    let mut orders = Vec::new();
    for order in 1..=max_order.min(n) {
        if binomial(n, order) > PAGE_RIP_BUDGET as u128 {
            break;
        }
        let cert = rip_exact(&a, order, PAGE_RIP_BUDGET)?;
        // delta_order certifies sparsity order - 1.
        let sparsity = order.saturating_sub(1);
        orders.push(json!({
            "order": order,
            "delta": cert.delta,
            "extremal_subset": cert.extremal_subset,
            "coherence_bound": coherence_rip_bound(mu, order),
            "gershgorin_bound": gershgorin_rip_bound(mu, order),
            "threshold": (sparsity >= 1 && rip_order_for(sparsity) == order).then(|| delta_threshold(sparsity)),
        }));
    }
    Ok(json!({ "mu": mu.mu, "orders": orders }))
}

/// Minimum coefficient magnitude required by each noise model as `delta`
/// sweeps `[0, threshold(K))`.
pub fn threshold_curves(k: usize, noise: f64, m: usize, points: usize) -> Result<Value, Error> {
    if k == 0 || points < 2 {
        return Err(Error::InvalidArgument(
            "need k >= 1 and at least two points".into(),
        ));
    }
    let limit = delta_threshold(k);
    let deltas: Vec<f64> = (0..points)
        .map(|i| limit * i as f64 / points as f64)
        .collect();
    let curve = |b: f64, f: fn(f64, usize, f64) -> omp_recovery::Result<f64>| {
        deltas
            .iter()
            .map(|&d| f(d, k, b))
            .collect::<Result<Vec<f64>, Error>>()
    };
    Ok(json!({
        "delta_threshold": limit,
        "delta": deltas,
        "l2": curve(noise, thm_l2_min_coeff)?,
        "gaussian": curve(gaussian_l2_bound(m, noise), thm_l2_min_coeff)?,
        "linf": curve(noise, thm_linf_min_coeff)?,
    }))
}

fn to_js(result: Result<Value, Error>) -> Result<String, JsError> {
    result
        .map(|v| v.to_string())
        .map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = recoveryDemo)]
pub fn recovery_demo_js(
    m: usize,
    n: usize,
    k: usize,
    sigma: f64,
    rule: &str,
    family_name: &str,
    seed: u32,
) -> Result<String, JsError> {
    to_js(recovery_demo(
        m,
        n,
        k,
        sigma,
        rule,
        family_name,
        seed as u64,
    ))
}

#[wasm_bindgen(js_name = ripProfile)]
pub fn rip_profile_js(
    m: usize,
    n: usize,
    max_order: usize,
    family_name: &str,
    seed: u32,
) -> Result<String, JsError> {
    to_js(rip_profile(m, n, max_order, family_name, seed as u64))
}

#[wasm_bindgen(js_name = thresholdCurves)]
pub fn threshold_curves_js(
    k: usize,
    noise: f64,
    m: usize,
    points: usize,
) -> Result<String, JsError> {
    to_js(threshold_curves(k, noise, m, points))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovery_demo_recovers_with_small_noise() {
        let v = recovery_demo(50, 60, 2, 1e-4, "l2", "frame", 3).unwrap();
        assert_eq!(v["exact"], true);
        assert_eq!(v["x"].as_array().unwrap().len(), 60);
        assert!(recovery_demo(40, 60, 2, 0.1, "sometimes", "frame", 3).is_err());
        assert!(recovery_demo(40, 60, 2, 0.1, "l2", "circulant", 3).is_err());
    }

    #[test]
    fn rip_profile_orders() {
        let v = rip_profile(12, 16, 3, "gaussian", 1).unwrap();
        let orders = v["orders"].as_array().unwrap();
        assert_eq!(orders.len(), 3);
        assert!(orders[0]["delta"].as_f64().unwrap() < 1e-12);
        assert!((orders[1]["delta"].as_f64().unwrap() - v["mu"].as_f64().unwrap()).abs() < 1e-10);
        assert!(orders[0]["threshold"].is_null());
        assert_eq!(orders[1]["threshold"].as_f64().unwrap(), delta_threshold(1));
    }

    #[test]
    fn threshold_curves_shape() {
        let v = threshold_curves(2, 0.01, 64, 5).unwrap();
        assert_eq!(v["delta"].as_array().unwrap().len(), 5);
        let l2 = v["l2"].as_array().unwrap();
        assert!(l2[0].as_f64().unwrap() < l2[4].as_f64().unwrap());
        assert!(threshold_curves(0, 0.01, 64, 5).is_err());
    }
}
