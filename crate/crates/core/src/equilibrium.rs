//! Decentralized matching game: waiting costs of L-type supply, position
//! thresholds, the equilibrium strategy profile and a one-shot deviation
//! checker.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::analytic::k_decentralized;
use crate::error::{Error, Result};
use crate::params::{derived_scalars, DerivedScalars, MarketParams, DELTA_ONE_TOL};
use crate::state::{Action, MatchRule, Quality, State};

use Quality::{H, L};

/// Relative slack under which a waiting cost counts as equal to the benefit.
pub const INDIFFERENCE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaitingCostProfile {
    pub k_de: u32,
    /// `EW_L^1(z)` for `z = 0..=k_de`: expected waiting cost, from the moment
    /// of declining, of the first L supply agent when `z` H agents wait.
    pub ew_first: Vec<f64>,
    /// First differences, `a[0] = ew_first[0]`.
    pub a: Vec<f64>,
}

impl WaitingCostProfile {
    /// `EW_L^k(z) = (k-1) EW_L^1(0) + EW_L^1(z)`; `z` saturates at `k_de`.
    pub fn ew(&self, k: u32, z: u32) -> f64 {
        let z = z.min(self.k_de) as usize;
        (f64::from(k) - 1.0) * self.ew_first[0] + self.ew_first[z]
    }
}

/// Solves the waiting-cost system directly. Per period the first L agent
/// pays `h`; an H-for-L swap (prob `p(1-q)`) raises `z` unless `z = k_de`,
/// an L-for-H swap (prob `q(1-p)`) lowers it, and at `z = 0` that swap is
/// the agent's own match.
///
/// The unknowns are the differences `a(z)`, which turns the system upper
/// bidiagonal: `q(1-p) a(z) - p(1-q) a(z+1) = h` and `q(1-p) a(k_de) = h`.
/// `EW_L^1` itself can span many orders of magnitude when `p > q`, so
/// solving for it directly would lose the small differences near `k_de`.
pub fn waiting_cost_profile(params: &MarketParams) -> Result<WaitingCostProfile> {
    derived_scalars(params)?;
    let (p, q, h) = (params.p(), params.q(), params.h());
    let k = k_decentralized(params) as usize;
    let up = p * (1.0 - q);
    let down = q * (1.0 - p);
    let n = k + 1;
    let mut m = DMatrix::zeros(n, n);
    let b = DVector::from_element(n, h);
    for z in 0..n {
        m[(z, z)] = down;
        if z < k {
            m[(z, z + 1)] = -up;
        }
    }
    let a: Vec<f64> = m.lu().solve(&b).ok_or(Error::SingularSystem)?.iter().copied().collect();
    let ew_first = a
        .iter()
        .scan(0.0, |acc, x| {
            *acc += x;
            Some(*acc)
        })
        .collect();
    Ok(WaitingCostProfile {
        k_de: k as u32,
        ew_first,
        a,
    })
}

/// Closed form of `EW_L^1(0)`:
/// `(h/(q(1-p))) (1 - delta^(k+1)) / (delta^k (1 - delta))`, or
/// `k h/(p(1-q)) + h/(q(1-p))` when `delta = 1`.
pub fn ew_first_closed_form(params: &MarketParams) -> Result<f64> {
    let d = derived_scalars(params)?;
    let (p, q, h) = (params.p(), params.q(), params.h());
    let k = f64::from(k_decentralized(params));
    let unit = h / (q * (1.0 - p));
    if params.is_symmetric() || (d.delta - 1.0).abs() < DELTA_ONE_TOL {
        return Ok(k * h / (p * (1.0 - q)) + unit);
    }
    let ln_d = DerivedScalars::ln_delta(p, q);
    let sum = if ln_d > 0.0 {
        // (delta - delta^-k) / (delta - 1)
        (ln_d.exp() - (-k * ln_d).exp()) / ln_d.exp_m1()
    } else {
        ((k + 1.0) * ln_d).exp_m1() * (-k * ln_d).exp() / ln_d.exp_m1()
    };
    Ok(unit * sum)
}

/// Deepest L-supply queue position that holds out for H demand when `z` H
/// agents wait: the largest `k` with `EW_L^k(z) <= alpha (r_LH - r_LL)`,
/// searched upward and capped at `k_de - z`.
pub fn k_l(params: &MarketParams, z: u32) -> Result<u32> {
    let prof = waiting_cost_profile(params)?;
    k_l_from(params, &prof, z)
}

fn k_l_from(params: &MarketParams, prof: &WaitingCostProfile, z: u32) -> Result<u32> {
    if z > prof.k_de {
        return Err(Error::RangeError {
            name: "z",
            value: f64::from(z),
            expected: "0 ..= k_de",
        });
    }
    let r = params.payoffs();
    let benefit = params.alpha() * (r.r_lh - r.r_ll);
    // Exact indifference means waiting; absorb rounding in the cost sums.
    let limit = benefit + INDIFFERENCE_TOL * benefit.abs().max(1.0);
    let mut best = 0;
    for k in 1..=prof.k_de - z {
        if prof.ew(k, z) <= limit {
            best = k;
        } else {
            break;
        }
    }
    Ok(best)
}

/// What an agent asks for this period: a match with the given demand type
/// (supply side) or supply type (demand side), or to wait.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Request {
    Match(Quality),
    Wait,
}

/// Replaces the rule of the supply agent at `position` of type `supply`
/// whenever the present demand is of type `demand`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RuleOverride {
    pub demand: Quality,
    pub supply: Quality,
    pub position: u32,
    pub request: Request,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Agent {
    Supply { quality: Quality, position: u32 },
    Demand,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumProfile {
    pub k_de: u32,
    /// `k_L(z)` for `z = 0..=k_de`.
    pub k_l: Vec<u32>,
    pub waiting: WaitingCostProfile,
    /// Deliberate departures from the equilibrium rules (empty for the
    /// equilibrium itself).
    pub overrides: Vec<RuleOverride>,
}

pub fn equilibrium_profile(params: &MarketParams) -> Result<EquilibriumProfile> {
    let waiting = waiting_cost_profile(params)?;
    let k_l = (0..=waiting.k_de)
        .map(|z| k_l_from(params, &waiting, z))
        .collect::<Result<_>>()?;
    Ok(EquilibriumProfile {
        k_de: waiting.k_de,
        k_l,
        waiting,
        overrides: Vec::new(),
    })
}

impl EquilibriumProfile {
    pub fn with_override(mut self, o: RuleOverride) -> Self {
        self.overrides.push(o);
        self
    }

    fn k_l_at(&self, z: u32) -> u32 {
        self.k_l.get(z as usize).copied().unwrap_or(0)
    }

    /// Supply rule: everyone takes H demand; for L demand, the first `k_de`
    /// H agents and the first `k_L(x_H)` L agents hold out.
    pub fn supply_request(&self, s: &State, quality: Quality, position: u32) -> Request {
        let Some(d) = s.demand else {
            return Request::Wait;
        };
        if let Some(o) = self
            .overrides
            .iter()
            .find(|o| o.demand == d && o.supply == quality && o.position == position)
        {
            return o.request;
        }
        match (d, quality) {
            (H, _) => Request::Match(H),
            (L, H) if position <= self.k_de => Request::Match(H),
            (L, L) if position <= self.k_l_at(s.x_h) => Request::Match(H),
            (L, _) => Request::Match(L),
        }
    }

    /// Demand rule: H demand asks for H supply when any waits; L demand asks
    /// for H supply only beyond `k_de` waiting H agents.
    pub fn demand_request(&self, s: &State) -> Request {
        match s.demand {
            None => Request::Wait,
            Some(H) if s.x_h > 0 => Request::Match(H),
            Some(H) => Request::Match(L),
            Some(L) if s.x_h > self.k_de => Request::Match(H),
            Some(L) => Request::Match(L),
        }
    }

    /// Matched supply `(type, queue position)`, with `deviant` replacing one
    /// agent's request. Demand takes the earliest willing agent of the type
    /// it asks for.
    pub fn outcome(&self, s: &State, deviant: Option<(Agent, Request)>) -> Option<(Quality, u32)> {
        let d = s.demand?;
        let ask = match deviant {
            Some((Agent::Demand, r)) => r,
            _ => self.demand_request(s),
        };
        let Request::Match(ty) = ask else {
            return None;
        };
        (1..=s.supply(ty))
            .find(|&n| {
                let req = match deviant {
                    Some((Agent::Supply { quality, position }, r)) if quality == ty && position == n => r,
                    _ => self.supply_request(s, ty, n),
                };
                req == Request::Match(d)
            })
            .map(|n| (ty, n))
    }
}

impl MatchRule for EquilibriumProfile {
    fn decide(&self, s: &State) -> Action {
        match (self.outcome(s, None), s.demand) {
            (Some((ty, _)), Some(d)) => Action::Match(ty, d),
            _ => Action::NoMatch,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub state: State,
    pub agent: Agent,
    pub prescribed: Request,
    pub deviation: Request,
    pub prescribed_payoff: f64,
    pub deviation_payoff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViolationReport {
    pub states_checked: usize,
    pub violations: Vec<Violation>,
}

impl ViolationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Value to a supply agent of declining now and holding out for H demand
/// from queue position `m` with `z` H agents waiting next period.
fn holdout_value(params: &MarketParams, prof: &EquilibriumProfile, quality: Quality, m: u32, z: u32) -> f64 {
    let r = params.payoffs();
    let alpha = params.alpha();
    match quality {
        H if params.q() > 0.0 => alpha * r.r_hh - params.h() * f64::from(m) / params.q(),
        H => f64::NEG_INFINITY,
        L => alpha * r.r_lh - prof.waiting.ew(m, z),
    }
}

/// Searches every post-arrival state with at most `state_bound` waiting
/// supply for a profitable one-shot deviation by any supply agent or by the
/// demand agent. Supply continuation values come from the waiting-cost
/// recursions; demand compares its one-period payoffs.
pub fn best_response_check(
    params: &MarketParams,
    profile: &EquilibriumProfile,
    state_bound: u32,
) -> Result<ViolationReport> {
    if state_bound < profile.k_de {
        return Err(Error::RangeError {
            name: "state_bound",
            value: f64::from(state_bound),
            expected: ">= k_de",
        });
    }
    let r = params.payoffs();
    let alpha = params.alpha();
    let tol = 1e-9 * (1.0 + r.r_hh);
    let mut violations = Vec::new();
    let mut states_checked = 0;
    for t in 0..=state_bound {
        for x_l in 0..=t {
            for d in [H, L] {
                let s = State::new(t - x_l, x_l, Some(d));
                states_checked += 1;
                let base = profile.outcome(&s, None);

                for quality in [H, L] {
                    for n in 1..=s.supply(quality) {
                        let agent = Agent::Supply { quality, position: n };
                        let prescribed = profile.supply_request(&s, quality, n);
                        let deviation = if prescribed == Request::Match(d) {
                            Request::Wait
                        } else {
                            Request::Match(d)
                        };
                        let alt = profile.outcome(&s, Some((agent, deviation)));
                        if alt == base {
                            continue;
                        }
                        let value = |o: Option<(Quality, u32)>| -> f64 {
                            if o == Some((quality, n)) {
                                return alpha * r.get(quality, d);
                            }
                            let ahead = matches!(o, Some((ty, m)) if ty == quality && m < n);
                            let m = n - u32::from(ahead);
                            let z = s.x_h - u32::from(matches!(o, Some((H, _))));
                            holdout_value(params, profile, quality, m, z)
                        };
                        let (pv, dv) = (value(base), value(alt));
                        if dv > pv + tol {
                            violations.push(Violation {
                                state: s,
                                agent,
                                prescribed,
                                deviation,
                                prescribed_payoff: pv,
                                deviation_payoff: dv,
                            });
                        }
                    }
                }

                let prescribed = profile.demand_request(&s);
                let demand_value = |o: Option<(Quality, u32)>| {
                    o.map_or(0.0, |(ty, _)| (1.0 - alpha) * r.get(ty, d))
                };
                let pv = demand_value(base);
                for deviation in [Request::Match(H), Request::Match(L), Request::Wait] {
                    if deviation == prescribed {
                        continue;
                    }
                    let dv = demand_value(profile.outcome(&s, Some((Agent::Demand, deviation))));
                    if dv > pv + tol {
                        violations.push(Violation {
                            state: s,
                            agent: Agent::Demand,
                            prescribed,
                            deviation,
                            prescribed_payoff: pv,
                            deviation_payoff: dv,
                        });
                    }
                }
            }
        }
    }
    Ok(ViolationReport {
        states_checked,
        violations,
    })
}
