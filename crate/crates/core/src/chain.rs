//! Stationary analysis of the supply-queue chain induced by a threshold
//! policy. On its recurrent class the chain holds exactly `k` supply agents
//! and only the split between H and L moves.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::analytic::k_decentralized;
use crate::error::{Error, Result};
use crate::params::{DerivedScalars, MarketParams, DELTA_ONE_TOL};
use crate::state::{Action, MatchRule, Quality, State, ThresholdPolicy};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryDistribution {
    /// `(x_H, x_L)` states, ordered `(k,0), (k-1,1), ..., (0,k)`.
    pub support: Vec<(u32, u32)>,
    pub probs: Vec<f64>,
}

impl StationaryDistribution {
    pub fn prob_of(&self, state: (u32, u32)) -> f64 {
        self.support
            .iter()
            .position(|&s| s == state)
            .map_or(0.0, |i| self.probs[i])
    }
}

/// Recurrent states of the threshold-`k` chain in canonical order.
pub fn threshold_support(k: u32) -> Vec<(u32, u32)> {
    (0..=k).map(|j| (k - j, j)).collect()
}

/// Tridiagonal transition matrix over the recurrent class. Index `j` is the
/// state with `j` L-type agents; an L-for-H swap (prob `q(1-p)`) moves up,
/// an H-for-L swap (prob `p(1-q)`) moves down.
pub fn build_threshold_chain(params: &MarketParams, k: u32) -> DMatrix<f64> {
    let (p, q) = (params.p(), params.q());
    let up = q * (1.0 - p);
    let down = p * (1.0 - q);
    let n = k as usize + 1;
    let mut m = DMatrix::zeros(n, n);
    if n == 1 {
        m[(0, 0)] = 1.0;
        return m;
    }
    for j in 0..n {
        if j == 0 {
            m[(0, 0)] = 1.0 - up;
            m[(0, 1)] = up;
        } else if j == n - 1 {
            m[(j, j - 1)] = down;
            m[(j, j)] = 1.0 - down;
        } else {
            m[(j, j - 1)] = down;
            m[(j, j)] = p * q + (1.0 - p) * (1.0 - q);
            m[(j, j + 1)] = up;
        }
    }
    m
}

/// Solves `pi P = pi`, `sum(pi) = 1` by LU with the last balance equation
/// replaced by the normalization row.
pub fn stationary(matrix: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = matrix.nrows();
    if n == 0 || matrix.ncols() != n {
        return Err(Error::SingularSystem);
    }
    let mut a = matrix.transpose() - DMatrix::identity(n, n);
    for c in 0..n {
        a[(n - 1, c)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let x = a.lu().solve(&b).ok_or(Error::SingularSystem)?;
    let pi: Vec<f64> = x.iter().copied().collect();
    if pi.iter().any(|v| !v.is_finite() || *v < -1e-12) {
        return Err(Error::SingularSystem);
    }
    let row = DVector::from_row_slice(&pi).transpose() * matrix;
    let residual = row
        .iter()
        .zip(&pi)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if residual > 1e-10 {
        return Err(Error::SingularSystem);
    }
    Ok(pi.into_iter().map(|v| v.max(0.0)).collect())
}

/// Power iteration from the uniform vector. Returns `None` when the sup-norm
/// change has not dropped below `tol` within `max_sweeps`.
pub fn stationary_power(matrix: &DMatrix<f64>, max_sweeps: usize, tol: f64) -> Option<Vec<f64>> {
    let n = matrix.nrows();
    let mut v = DVector::from_element(n, 1.0 / n as f64).transpose();
    for _ in 0..max_sweeps {
        let next = &v * matrix;
        let change = (&next - &v).amax();
        v = next;
        if change < tol {
            return Some(v.iter().copied().collect());
        }
    }
    None
}

/// Linear-solve stationary distribution of the threshold-`k` chain.
pub fn stationary_threshold_chain(params: &MarketParams, k: u32) -> Result<StationaryDistribution> {
    Ok(StationaryDistribution {
        support: threshold_support(k),
        probs: stationary(&build_threshold_chain(params, k))?,
    })
}

/// Geometric closed form on the threshold-`k` class:
/// `phi(i, k-i) = (1-delta) delta^(k-i) / (1 - delta^(k+1))`, uniform when
/// `delta` is 1.
pub fn stationary_threshold_analytic(params: &MarketParams, k: u32) -> Result<StationaryDistribution> {
    let support = threshold_support(k);
    let n = support.len();
    if k == 0 {
        return Ok(StationaryDistribution {
            support,
            probs: vec![1.0],
        });
    }
    let uniform = || vec![1.0 / n as f64; n];
    if params.is_symmetric() {
        return Ok(StationaryDistribution {
            support,
            probs: uniform(),
        });
    }
    let (p, q) = (params.p(), params.q());
    let delta = crate::params::derived_scalars(params)?.delta;
    if (delta - 1.0).abs() < DELTA_ONE_TOL {
        return Ok(StationaryDistribution {
            support,
            probs: uniform(),
        });
    }
    let ln_d = DerivedScalars::ln_delta(p, q);
    let kf = f64::from(k);
    let probs = (0..n)
        .map(|j| {
            let jf = j as f64;
            if ln_d < 0.0 {
                // (1 - delta) delta^j / (1 - delta^(k+1))
                (jf * ln_d).exp() * ln_d.exp_m1() / ((kf + 1.0) * ln_d).exp_m1()
            } else {
                // (delta - 1) delta^(j-k-1) / (1 - delta^-(k+1))
                ((jf - kf - 1.0) * ln_d).exp() * ln_d.exp_m1() / -(-(kf + 1.0) * ln_d).exp_m1()
            }
        })
        .collect();
    Ok(StationaryDistribution { support, probs })
}

/// Closed-form steady state of the equilibrium queue (threshold `k^de`).
pub fn stationary_decentralized_analytic(params: &MarketParams) -> Result<StationaryDistribution> {
    stationary_threshold_analytic(params, k_decentralized(params))
}

/// Expected one-period welfare from pre-arrival queue `(x_h, x_l)` under
/// `rule`, enumerating the four arrival outcomes.
pub fn expected_period_welfare<R: MatchRule>(
    params: &MarketParams,
    rule: &R,
    (x_h, x_l): (u32, u32),
) -> f64 {
    let (p, q, h) = (params.p(), params.q(), params.h());
    let mut total = 0.0;
    for (s, ps) in [(Quality::H, p), (Quality::L, 1.0 - p)] {
        for (d, pd) in [(Quality::H, q), (Quality::L, 1.0 - q)] {
            let w = ps * pd;
            if w == 0.0 {
                continue;
            }
            let state = match s {
                Quality::H => State::new(x_h + 1, x_l, Some(d)),
                Quality::L => State::new(x_h, x_l + 1, Some(d)),
            };
            let action = rule.decide(&state);
            let (a, b) = state.after(action);
            let pay = match action {
                Action::Match(i, j) => params.payoffs().get(i, j),
                Action::NoMatch => 0.0,
            };
            total += w * (pay - h * f64::from(a + b));
        }
    }
    total
}

/// Long-run welfare of the threshold-`k` policy from its stationary law.
pub fn welfare_from_chain(params: &MarketParams, k: u32) -> Result<f64> {
    let dist = stationary_threshold_chain(params, k)?;
    let rule = ThresholdPolicy { k };
    Ok(dist
        .support
        .iter()
        .zip(&dist.probs)
        .map(|(&s, &pi)| pi * expected_period_welfare(params, &rule, s))
        .sum())
}
