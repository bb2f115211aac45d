//! Numeric cross-check for the closed-form contract, compiled only with the
//! `oracle` feature (the test builds enable it; release binaries do not).
//!
//! Nothing here reuses the closed-form solution helpers. The objectives are
//! spelled out from the model primitives and optimized by golden-section
//! search, so a sign slip or dropped factor in the analytical layer shows up
//! as a disagreement instead of being copied into the check.

use super::EconParams;

/// Interval tolerance for the golden-section searches.
pub const TOL: f64 = 1e-9;

/// Golden-section maximizer of a unimodal function on `[lo, hi]`.
///
/// Returns the argument; the interval shrinks below [`TOL`] before the
/// midpoint is taken.
pub fn golden_max(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > TOL {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    0.5 * (lo + hi)
}

/// Maximizer for a smooth concave objective: golden-section narrows the
/// bracket, then bisection on a central-difference slope polishes the
/// argument. Near a flat peak the value differences golden-section compares
/// sink below evaluation noise, which caps its argument accuracy at a
/// square-root-of-noise floor; the slope's sign stays resolvable much closer
/// in. The polish matters because these oracles nest: an outer objective
/// inherits the inner search's argument error linearly unless the inner
/// argument sits at the outer objective's own stationary point.
fn concave_max(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let seed = golden_max(lo, hi, &f);
    let scale = seed.abs().max(1.0);
    let h = 1e-3 * scale;
    let width = 1e-2 * scale;
    let (mut a, mut b) = ((seed - width).max(lo + h), (seed + width).min(hi - h));
    if a >= b {
        return seed;
    }
    let slope = |x: f64| f(x + h) - f(x - h);
    if !(slope(a) > 0.0) || !(slope(b) < 0.0) {
        // the peak sits at or beyond the bracket edge; golden-section already
        // handled that case as well as the noise allows
        return seed;
    }
    for _ in 0..48 {
        let mid = 0.5 * (a + b);
        if slope(mid) > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// Expected verifier utility written out from the task mixture: with
/// probability `p` the task consumes the full effort `s`, otherwise the
/// fraction `epsilon * s`, each paying `r` per realized unit and costing
/// `alpha / 2` per squared realized unit.
fn verifier_objective(params: &EconParams, r: f64, s: f64) -> f64 {
    let deep = r * s - 0.5 * params.alpha * s * s;
    let es = params.epsilon * s;
    let shallow = r * es - 0.5 * params.alpha * es * es;
    params.p * deep + (1.0 - params.p) * shallow
}

/// Expected social welfare for effort `s`, written out the same way.
fn welfare_objective(params: &EconParams, s: f64) -> f64 {
    let deep = params.beta * s - 0.5 * params.alpha * s * s;
    let es = params.epsilon * s;
    let shallow = params.beta * es - 0.5 * params.alpha * es * es;
    params.p * deep + (1.0 - params.p) * shallow
}

/// The verifier's effort choice for reward `r`, found numerically.
pub fn numeric_best_response(params: &EconParams, r: f64) -> f64 {
    concave_max(0.0, params.s_max, |s| verifier_objective(params, r, s))
}

/// The welfare-optimal reward and its induced effort, found by nesting the
/// numeric best response inside an outer search over the reward rate.
pub fn numeric_optimal_contract(params: &EconParams) -> (f64, f64) {
    let r_hi = 4.0 * params.beta;
    let r = concave_max(0.0, r_hi, |r| {
        welfare_objective(params, numeric_best_response(params, r))
    });
    (r, numeric_best_response(params, r))
}

/// The benchmark reward, found by maximizing the VI's own payoff against a
/// full-depth best response.
pub fn numeric_stackelberg_reward(params: &EconParams) -> f64 {
    let full_depth = EconParams {
        p: 1.0,
        ..*params
    };
    concave_max(0.0, 4.0 * params.beta, |r| {
        let s = numeric_best_response(&full_depth, r);
        (params.beta - r) * s
    })
}
