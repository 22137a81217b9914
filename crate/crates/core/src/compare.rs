//! Full-backlog, one-sided and no-backlog welfare side by side for
//! symmetric arrivals, with ordering classification and parameter sweeps.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{welfare_fb, welfare_nb, welfare_ob, welfare_of_system, Mode, System};
use crate::error::{Error, Result};
use crate::params::{MarketParams, RawParams};

/// Absolute slack for ordering comparisons.
pub const ORDER_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeThresholds {
    pub alpha1: f64,
    pub alpha2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    /// `alpha <= alpha1`: more backlog raises welfare.
    PatienceHelps,
    /// `alpha >= alpha2`: more backlog lowers welfare.
    PatienceHurts,
    /// In between, the direction depends on `h`.
    DependsOnCost,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::PatienceHelps => "patience-helps",
            Regime::PatienceHurts => "patience-hurts",
            Regime::DependsOnCost => "depends-on-cost",
        })
    }
}

impl RegimeThresholds {
    pub fn classify(&self, alpha: f64) -> Regime {
        if alpha <= self.alpha1 {
            Regime::PatienceHelps
        } else if alpha >= self.alpha2 {
            Regime::PatienceHurts
        } else {
            Regime::DependsOnCost
        }
    }
}

/// `alpha1 = (1-p) r / (2 (r_HH - r_HL))`, `alpha2 = 2 alpha1`.
pub fn regime_thresholds(params: &MarketParams) -> Result<RegimeThresholds> {
    if !params.is_symmetric() {
        return Err(Error::AsymmetricArrivals {
            p: params.p(),
            q: params.q(),
        });
    }
    let r = params.payoffs();
    let sep = r.h_separation();
    if sep <= 0.0 {
        return Err(Error::NoSeparation);
    }
    let alpha2 = (1.0 - params.p()) * r.gap() / sep;
    Ok(RegimeThresholds {
        alpha1: alpha2 / 2.0,
        alpha2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Ordering {
    /// `W_FB >= W_OB >= W_NB`.
    FbGeObGeNb,
    /// `W_FB <= W_OB <= W_NB`.
    FbLeObLeNb,
    Mixed,
}

impl fmt::Display for Ordering {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ordering::FbGeObGeNb => "fb>=ob>=nb",
            Ordering::FbLeObLeNb => "fb<=ob<=nb",
            Ordering::Mixed => "mixed",
        })
    }
}

/// Classifies three welfare values; ties satisfy both weak orderings and
/// are reported as `FbGeObGeNb` with `all_equal` set.
pub fn classify(w_fb: f64, w_ob: f64, w_nb: f64) -> (Ordering, bool) {
    let ge = |a: f64, b: f64| a >= b - ORDER_SLACK;
    let all_equal = (w_fb - w_ob).abs() <= ORDER_SLACK && (w_ob - w_nb).abs() <= ORDER_SLACK;
    let ordering = if ge(w_fb, w_ob) && ge(w_ob, w_nb) {
        Ordering::FbGeObGeNb
    } else if ge(w_ob, w_fb) && ge(w_nb, w_ob) {
        Ordering::FbLeObLeNb
    } else {
        Ordering::Mixed
    };
    (ordering, all_equal)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub params: RawParams,
    pub mode: Mode,
    pub k_fb: u32,
    pub k_ob: u32,
    pub w_fb: f64,
    pub w_ob: f64,
    pub w_nb: f64,
    pub ordering: Ordering,
    pub all_equal: bool,
}

impl ComparisonRow {
    /// `W_FB - W_OB <= W_OB - W_NB` within the ordering slack.
    pub fn diminishing_returns(&self) -> bool {
        self.w_fb - self.w_ob <= self.w_ob - self.w_nb + ORDER_SLACK
    }
}

pub fn compare_systems(params: &MarketParams, mode: Mode) -> Result<ComparisonRow> {
    let fb = welfare_fb(params, mode)?;
    let ob = welfare_ob(params, mode)?;
    let nb = welfare_nb(params)?;
    let (ordering, all_equal) = classify(fb.welfare, ob.welfare, nb.welfare);
    Ok(ComparisonRow {
        params: params.to_raw(),
        mode,
        k_fb: fb.threshold,
        k_ob: ob.threshold,
        w_fb: fb.welfare,
        w_ob: ob.welfare,
        w_nb: nb.welfare,
        ordering,
        all_equal,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweepVariable {
    H,
    Alpha,
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepVariable::H => "h",
            SweepVariable::Alpha => "alpha",
        })
    }
}

/// `params` with `variable` set to `value`, revalidated.
pub fn with_variable(params: &MarketParams, variable: SweepVariable, value: f64) -> Result<MarketParams> {
    match variable {
        SweepVariable::H => params.with_h(value),
        SweepVariable::Alpha => params.with_alpha(value),
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::RangeError {
            name: "grid",
            value: 0.0,
            expected: "a nonempty grid",
        });
    }
    if let Some(w) = grid.windows(2).find(|w| !(w[1] > w[0])) {
        return Err(Error::RangeError {
            name: "grid",
            value: w[1],
            expected: "strictly increasing values",
        });
    }
    Ok(())
}

/// One comparison row per grid value, in grid order.
pub fn sweep(params: &MarketParams, variable: SweepVariable, grid: &[f64], mode: Mode) -> Result<Vec<ComparisonRow>> {
    check_grid(grid)?;
    grid.par_iter()
        .map(|&v| compare_systems(&with_variable(params, variable, v)?, mode))
        .collect()
}

/// `steps` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, steps: usize) -> Result<Vec<f64>> {
    if !(lo < hi) || steps < 2 {
        return Err(Error::RangeError {
            name: "steps",
            value: steps as f64,
            expected: "lo < hi and at least 2 steps",
        });
    }
    let last = (steps - 1) as f64;
    Ok((0..steps)
        .map(|i| if i == steps - 1 { hi } else { lo + (hi - lo) * i as f64 / last })
        .collect())
}

/// One long-format sweep record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub variable: SweepVariable,
    pub value: f64,
    pub system: System,
    pub mode: Mode,
    pub threshold: u32,
    pub welfare: f64,
}

/// Welfare of each of `systems` at every grid value, grid-major.
pub fn sweep_systems(
    params: &MarketParams,
    variable: SweepVariable,
    grid: &[f64],
    mode: Mode,
    systems: &[System],
) -> Result<Vec<SweepRow>> {
    check_grid(grid)?;
    let rows: Vec<Vec<SweepRow>> = grid
        .par_iter()
        .map(|&value| {
            let at = with_variable(params, variable, value)?;
            systems
                .iter()
                .map(|&system| {
                    let w = welfare_of_system(&at, system)?;
                    Ok(SweepRow {
                        variable,
                        value,
                        system,
                        mode,
                        threshold: w.threshold,
                        welfare: w.welfare,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}
