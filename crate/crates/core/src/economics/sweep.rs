//! Grid evaluation of the contract and its benchmark over one parameter.
//!
//! Each grid point is independent, so the sweep is embarrassingly parallel;
//! with the `parallel` feature the points are evaluated on the rayon thread
//! pool, otherwise sequentially. Both paths produce identical results.

use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use super::{optimal_contract, stackelberg, DerivedContract, EconError, EconParams, StackelbergOutcome};

/// Which parameter the sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VaryParam {
    P,
    Epsilon,
    Alpha,
    Beta,
}

impl VaryParam {
    pub fn apply(self, base: &EconParams, value: f64) -> EconParams {
        let mut params = *base;
        match self {
            VaryParam::P => params.p = value,
            VaryParam::Epsilon => params.epsilon = value,
            VaryParam::Alpha => params.alpha = value,
            VaryParam::Beta => params.beta = value,
        }
        params
    }

    pub fn name(self) -> &'static str {
        match self {
            VaryParam::P => "p",
            VaryParam::Epsilon => "epsilon",
            VaryParam::Alpha => "alpha",
            VaryParam::Beta => "beta",
        }
    }
}

/// Contract and benchmark outcomes at one grid value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub contract: DerivedContract,
    pub stackelberg: StackelbergOutcome,
}

fn eval_point(base: &EconParams, vary: VaryParam, value: f64) -> Result<SweepPoint, EconError> {
    let params = vary.apply(base, value);
    Ok(SweepPoint {
        value,
        contract: optimal_contract(&params)?,
        stackelberg: stackelberg(&params)?,
    })
}

/// Sequential sweep, available regardless of features.
pub fn sweep_seq(
    base: &EconParams,
    vary: VaryParam,
    grid: &[f64],
) -> Result<Vec<SweepPoint>, EconError> {
    grid.iter().map(|&v| eval_point(base, vary, v)).collect()
}

/// Parallel sweep over the rayon thread pool.
#[cfg(feature = "parallel")]
pub fn sweep_par(
    base: &EconParams,
    vary: VaryParam,
    grid: &[f64],
) -> Result<Vec<SweepPoint>, EconError> {
    grid.par_iter().map(|&v| eval_point(base, vary, v)).collect()
}

/// Sweeps the grid with the best implementation the build carries.
pub fn sweep(
    base: &EconParams,
    vary: VaryParam,
    grid: &[f64],
) -> Result<Vec<SweepPoint>, EconError> {
    #[cfg(feature = "parallel")]
    {
        sweep_par(base, vary, grid)
    }
    #[cfg(not(feature = "parallel"))]
    {
        sweep_seq(base, vary, grid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::economics::default_share_grid;

    #[test]
    fn sweep_preserves_grid_order_and_values() {
        let base = EconParams::default();
        let grid = default_share_grid();
        let points = sweep(&base, VaryParam::Epsilon, &grid).unwrap();
        assert_eq!(points.len(), grid.len());
        for (point, &value) in points.iter().zip(&grid) {
            assert_eq!(point.value, value);
            assert_eq!(point.contract.reward, base.beta);
        }
    }

    #[test]
    fn sweep_rejects_invalid_grid_values() {
        let base = EconParams::default();
        assert!(sweep(&base, VaryParam::P, &[0.5, 1.5]).is_err());
        assert!(sweep(&base, VaryParam::Alpha, &[0.0]).is_err());
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn parallel_and_sequential_sweeps_agree_bitwise() {
        let base = EconParams::default();
        let grid = crate::economics::default_alpha_grid();
        let seq = sweep_seq(&base, VaryParam::Alpha, &grid).unwrap();
        let par = sweep_par(&base, VaryParam::Alpha, &grid).unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn varying_beta_moves_both_mechanisms() {
        let base = EconParams::default();
        let points = sweep(&base, VaryParam::Beta, &[5.0, 10.0, 15.0]).unwrap();
        assert!(points[0].contract.welfare < points[2].contract.welfare);
        assert!(points[0].stackelberg.welfare < points[2].stackelberg.welfare);
        for point in &points {
            assert!(point.contract.welfare > point.stackelberg.welfare);
        }
    }
}
