//! Incentive model for outsourced flow verification.
//!
//! A verification intermediary (VI) pays an independent verifier per unit of
//! inspection effort. The verifier privately picks an effort level `s` before
//! knowing how deep each verification task turns out to be: a share `p` of
//! tasks demand a full-depth check that consumes the whole effort `s`, while
//! the remaining share only needs a shallow pass that consumes `epsilon * s`.
//! Effort is costly for the verifier (quadratic, scaled by `alpha`) and
//! valuable to the VI (linear, scaled by `beta`), and the VI cannot observe
//! effort directly, only the per-task reward rate `r` it has promised.
//!
//! Working back from the verifier's best response, the reward that makes the
//! induced effort maximize expected social welfare is simply `r = beta`, and
//! the induced effort is `beta` times the leverage factor
//! `A = u / (alpha * v)` where `u` and `v` are the first and second moments
//! of the per-task effort fraction. [`optimal_contract`] evaluates that
//! contract; [`stackelberg`] evaluates the classical full-information
//! benchmark used for comparison.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod sweep;

pub use sweep::{sweep, sweep_seq, SweepPoint, VaryParam};
#[cfg(feature = "parallel")]
pub use sweep::sweep_par;

#[cfg(feature = "oracle")]
pub mod oracle;

/// Model parameters for one verification market.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EconParams {
    /// Probability that a task requires full-depth verification.
    pub p: f64,
    /// Effort fraction consumed by a shallow task, in `[0, 1]`.
    pub epsilon: f64,
    /// Verifier cost curvature; cost of effort `s` is `alpha * s^2 / 2`.
    pub alpha: f64,
    /// VI benefit per unit of realized verification effort.
    pub beta: f64,
    /// Participation floor: the verifier walks away unless its expected
    /// utility reaches this value.
    #[serde(default)]
    pub sigma: f64,
    /// Hard cap on chosen effort, standing in for a protocol-level bound on
    /// how much verification fits into one batch interval.
    #[serde(default = "default_s_max")]
    pub s_max: f64,
}

fn default_s_max() -> f64 {
    1.0e6
}

impl Default for EconParams {
    fn default() -> Self {
        EconParams {
            p: 0.5,
            epsilon: 0.5,
            alpha: 0.5,
            beta: 10.0,
            sigma: 0.0,
            s_max: default_s_max(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EconError {
    #[error("parameter {name} = {value} is outside its domain ({requirement})")]
    InvalidParam {
        name: &'static str,
        value: f64,
        requirement: &'static str,
    },
    #[error("participation floor {required} exceeds achievable verifier utility {achievable}")]
    ParticipationUnmet { required: f64, achievable: f64 },
    #[error("{0} has no interior optimum on the requested domain")]
    NoInteriorOptimum(&'static str),
}

impl EconParams {
    pub fn validate(&self) -> Result<(), EconError> {
        fn check(
            name: &'static str,
            value: f64,
            ok: bool,
            requirement: &'static str,
        ) -> Result<(), EconError> {
            if ok && value.is_finite() {
                Ok(())
            } else {
                Err(EconError::InvalidParam {
                    name,
                    value,
                    requirement,
                })
            }
        }
        check("p", self.p, (0.0..=1.0).contains(&self.p), "0 <= p <= 1")?;
        check(
            "epsilon",
            self.epsilon,
            (0.0..=1.0).contains(&self.epsilon),
            "0 <= epsilon <= 1",
        )?;
        check("alpha", self.alpha, self.alpha > 0.0, "alpha > 0")?;
        check("beta", self.beta, self.beta > 0.0, "beta > 0")?;
        check("sigma", self.sigma, self.sigma >= 0.0, "sigma >= 0")?;
        check("s_max", self.s_max, self.s_max > 0.0, "s_max > 0")?;
        // With p = 0 and epsilon = 0 no task ever consumes effort and the
        // reward rate has nothing to act on.
        check(
            "p",
            self.p,
            self.p > 0.0 || self.epsilon > 0.0,
            "p and epsilon must not both be zero",
        )
    }

    /// First moment of the per-task effort fraction: `p + (1 - p) * epsilon`.
    pub fn mixture_mean(&self) -> f64 {
        self.p + (1.0 - self.p) * self.epsilon
    }

    /// Second moment of the per-task effort fraction:
    /// `p + (1 - p) * epsilon^2`.
    pub fn mixture_mean_sq(&self) -> f64 {
        self.p + (1.0 - self.p) * self.epsilon * self.epsilon
    }

    /// Effort induced per unit of reward: `A = u / (alpha * v)`.
    pub fn leverage(&self) -> f64 {
        self.mixture_mean() / (self.alpha * self.mixture_mean_sq())
    }

    /// The verifier's effort choice for reward rate `r`, capped at `s_max`.
    pub fn best_response(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        (self.leverage() * r).min(self.s_max)
    }

    /// Expected verifier utility for reward `r` and effort `s`:
    /// reward income on realized effort minus quadratic cost.
    pub fn expected_verifier_utility(&self, r: f64, s: f64) -> f64 {
        r * self.mixture_mean() * s
            - 0.5 * self.alpha * self.mixture_mean_sq() * s * s
    }

    /// Expected VI utility for reward `r` and effort `s`: verification value
    /// net of reward spend, both on realized effort.
    pub fn expected_vi_utility(&self, r: f64, s: f64) -> f64 {
        (self.beta - r) * self.mixture_mean() * s
    }

    /// Expected social welfare for effort `s`; the reward transfer cancels.
    pub fn expected_welfare(&self, s: f64) -> f64 {
        self.beta * self.mixture_mean() * s
            - 0.5 * self.alpha * self.mixture_mean_sq() * s * s
    }
}

/// A reward rate together with the behavior and payoffs it induces.
///
/// All utility fields are expectations over the task mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedContract {
    pub reward: f64,
    pub effort: f64,
    /// True when the effort cap bound the verifier's best response.
    pub clamped: bool,
    /// False when the participation floor made the verifier opt out; every
    /// other field is zeroed then except the reward and leverage.
    pub participating: bool,
    pub leverage: f64,
    pub verifier_utility: f64,
    pub vi_utility: f64,
    pub welfare: f64,
}

/// Payoffs of the full-information benchmark game.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StackelbergOutcome {
    pub reward: f64,
    pub effort: f64,
    pub verifier_utility: f64,
    pub vi_utility: f64,
    pub welfare: f64,
}

/// How the reward rate is set in a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mechanism {
    /// Welfare-optimal contract under unobservable effort.
    Contract,
    /// Full-information benchmark: the VI keeps the reward that maximizes
    /// its own payoff and task depth is ignored.
    Stackelberg,
    /// An exogenous reward rate, useful for off-equilibrium experiments.
    FixedReward(f64),
}

/// Evaluates the behavior induced by an arbitrary reward rate `r`.
///
/// The verifier best-responds to `r`; if the resulting expected utility
/// misses the participation floor it opts out entirely and every quantity is
/// zero.
pub fn contract_for_reward(params: &EconParams, r: f64) -> Result<DerivedContract, EconError> {
    params.validate()?;
    if !(r.is_finite() && r >= 0.0) {
        return Err(EconError::InvalidParam {
            name: "r",
            value: r,
            requirement: "r >= 0",
        });
    }
    let leverage = params.leverage();
    let mut effort = params.best_response(r);
    let clamped = effort < leverage * r;
    let mut verifier_utility = params.expected_verifier_utility(r, effort);
    let participating = verifier_utility >= params.sigma;
    if !participating {
        effort = 0.0;
        verifier_utility = 0.0;
    }
    Ok(DerivedContract {
        reward: r,
        effort,
        clamped: clamped && participating,
        participating,
        leverage,
        verifier_utility,
        vi_utility: if participating {
            params.expected_vi_utility(r, effort)
        } else {
            0.0
        },
        welfare: if participating {
            params.expected_welfare(effort)
        } else {
            0.0
        },
    })
}

/// The welfare-optimal contract under unobservable effort.
///
/// Unconstrained, the optimum is `r = beta` with induced effort
/// `s = A * beta`. When that effort exceeds `s_max`, the best feasible
/// outcome is effort pinned at the cap; among the reward rates reaching the
/// cap this returns the smallest, `s_max / A`, which also leaves the VI the
/// largest share of the (cap-limited) surplus.
///
/// Errors with [`EconError::ParticipationUnmet`] when even this contract
/// cannot clear the verifier's participation floor.
pub fn optimal_contract(params: &EconParams) -> Result<DerivedContract, EconError> {
    params.validate()?;
    let leverage = params.leverage();
    let unconstrained = leverage * params.beta;
    let (reward, effort, clamped) = if unconstrained <= params.s_max {
        (params.beta, unconstrained, false)
    } else {
        (params.s_max / leverage, params.s_max, true)
    };
    let verifier_utility = params.expected_verifier_utility(reward, effort);
    if verifier_utility < params.sigma {
        return Err(EconError::ParticipationUnmet {
            required: params.sigma,
            achievable: verifier_utility,
        });
    }
    Ok(DerivedContract {
        reward,
        effort,
        clamped,
        participating: true,
        leverage,
        verifier_utility,
        vi_utility: params.expected_vi_utility(reward, effort),
        welfare: params.expected_welfare(effort),
    })
}

/// Full-information benchmark: the VI proposes the reward that maximizes its
/// own payoff, every task is treated as full depth, and the verifier
/// best-responds with `s = r / alpha`.
///
/// The outcome depends only on `beta` and `alpha`: reward `beta / 2`, effort
/// `beta / (2 alpha)`, and a welfare of `3 beta^2 / (8 alpha)` split 2:1
/// between VI and verifier.
pub fn stackelberg(params: &EconParams) -> Result<StackelbergOutcome, EconError> {
    params.validate()?;
    let reward = params.beta / 2.0;
    let effort = (params.beta / (2.0 * params.alpha)).min(params.s_max);
    let cost = 0.5 * params.alpha * effort * effort;
    Ok(StackelbergOutcome {
        reward,
        effort,
        verifier_utility: reward * effort - cost,
        vi_utility: (params.beta - reward) * effort,
        welfare: params.beta * effort - cost,
    })
}

/// Ratio of contract welfare to benchmark welfare, `(4/3) * u^2 / v`.
///
/// Both welfares scale as `beta^2 / alpha`, so the ratio depends only on the
/// task mixture `(p, epsilon)`.
pub fn welfare_ratio(params: &EconParams) -> Result<f64, EconError> {
    params.validate()?;
    let u = params.mixture_mean();
    let v = params.mixture_mean_sq();
    Ok(4.0 / 3.0 * u * u / v)
}

/// The shallow-task effort fraction that maximizes induced effort (and with
/// it the expected verification batch size) for a given `p`:
/// `(sqrt(p) - p) / (1 - p)`.
///
/// Only interior task mixtures `0 < p < 1` admit an interior maximizer.
pub fn argmax_epsilon_blocksize(p: f64) -> Result<f64, EconError> {
    if !(p.is_finite() && 0.0 < p && p < 1.0) {
        return Err(EconError::NoInteriorOptimum("effort in epsilon"));
    }
    Ok((p.sqrt() - p) / (1.0 - p))
}

/// The full-depth task share that minimizes expected welfare for a given
/// `epsilon`: `epsilon / (1 + epsilon)`.
///
/// Welfare is proportional to `u^2 / v`, which equals its boundary value 1
/// at `p = 0` and `p = 1` and dips to `4 epsilon / (1 + epsilon)^2` in
/// between, so mixing task depths is strictly worse than either pure fleet.
/// Only `0 < epsilon < 1` gives an interior minimizer.
pub fn argmin_p_welfare(epsilon: f64) -> Result<f64, EconError> {
    if !(epsilon.is_finite() && 0.0 < epsilon && epsilon < 1.0) {
        return Err(EconError::NoInteriorOptimum("welfare in p"));
    }
    Ok(epsilon / (1.0 + epsilon))
}

/// Default curvature grid used by the bundled figures: 0.2 to 2.0 in steps
/// of 0.1.
pub fn default_alpha_grid() -> Vec<f64> {
    (2..=20).map(|i| f64::from(i) / 10.0).collect()
}

/// Default probability/fraction grid: 0.05 to 0.95 in steps of 0.05.
pub fn default_share_grid() -> Vec<f64> {
    (1..=19).map(|i| f64::from(i) * 0.05).collect()
}

/// Benefit levels the bundled figures are drawn at.
pub fn default_beta_levels() -> [f64; 3] {
    [5.0, 10.0, 15.0]
}
