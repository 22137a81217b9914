//! Finite average-reward MDP over post-arrival states, solved by relative
//! value iteration, with policy extraction and structural checks.
//!
//! The total supply count can never fall: each period brings one supply
//! agent and removes at most one. Every level of total supply that the
//! policy never leaves is therefore its own closed class with its own gain,
//! and levels above the optimal recurrent level earn strictly less than the
//! reference state. Convergence is measured on the reference state's gain
//! class (the levels up to the first one where the policy always matches)
//! and separately within each higher level, whose values drift linearly
//! relative to the reference.

use serde::Serialize;

use crate::analytic::{k_centralized_argmax, welfare_of_threshold};
use crate::error::{Error, Result};
use crate::params::{floor_nudged, MarketParams};
use crate::state::{Action, Quality, State};

use Quality::{H, L};

/// Smallest cap strictly above `2(r_HH - r_HL)/h - 1`.
pub fn holding_cap_bound(params: &MarketParams) -> u32 {
    let x = 2.0 * params.payoffs().h_separation() / params.h() - 1.0;
    if x < 0.0 {
        1
    } else {
        (x.floor() as u32).saturating_add(1).max(1)
    }
}

/// Steady-state revenue bound. With a constant queue level, supply leaves at
/// the arrival rate, so revenue is capped by the assortative transport plan,
/// while holding `k` agents costs `k h`. A level can only be optimal if that
/// cap, less its holding cost, reaches the welfare of some known policy: the
/// best threshold policy, or matching greedily with no holding at all.
pub fn flow_cap_bound(params: &MarketParams) -> u32 {
    let (p, q) = (params.p(), params.q());
    let r = params.payoffs();
    let rev_max = if p <= q {
        p * r.r_hh + (q - p) * r.r_lh + (1.0 - q) * r.r_ll
    } else {
        q * r.r_hh + (p - q) * r.r_hl + (1.0 - p) * r.r_ll
    };
    let rev_0 = p * q * r.r_hh
        + p * (1.0 - q) * r.r_hl
        + (1.0 - p) * q * r.r_lh
        + (1.0 - p) * (1.0 - q) * r.r_ll;
    let best = k_centralized_argmax(params)
        .and_then(|k| welfare_of_threshold(params, k))
        .map_or(rev_0, |w| w.max(rev_0));
    floor_nudged(((rev_max - best) / params.h()).max(0.0)).saturating_add(1)
}

/// Smallest cap accepted by [`build_mdp`]: either sufficient condition.
pub fn required_cap(params: &MarketParams) -> u32 {
    holding_cap_bound(params).min(flow_cap_bound(params))
}

#[derive(Debug, Clone, Copy)]
struct Choice {
    action: Action,
    reward: f64,
    post: usize,
}

#[derive(Debug, Clone)]
pub struct MdpModel {
    params: MarketParams,
    cap: u32,
    states: Vec<State>,
    choices: Vec<Vec<Choice>>,
}

/// Index of the queue pair `(x_h, x_l)` among pairs ordered by total then `x_l`.
fn pair_index(x_h: u32, x_l: u32) -> usize {
    let n = (x_h + x_l) as usize;
    n * (n + 1) / 2 + x_l as usize
}

fn pair_count(max_total: u32) -> usize {
    let n = max_total as usize + 1;
    n * (n + 1) / 2
}

fn state_index(s: &State) -> usize {
    2 * pair_index(s.x_h, s.x_l) + usize::from(s.demand == Some(L))
}

/// Legal actions in preference order for ties: matches before `NoMatch`,
/// same-type before cross-type.
fn ordered_actions(s: &State, cap: u32) -> Vec<Action> {
    let d = s.demand.expect("model states always carry demand");
    let (same, cross) = match d {
        H => (H, L),
        L => (L, H),
    };
    let mut out = Vec::with_capacity(3);
    for a in [Action::Match(same, d), Action::Match(cross, d)] {
        if s.is_legal(a) {
            out.push(a);
        }
    }
    if s.total() < cap || out.is_empty() {
        out.push(Action::NoMatch);
    }
    out
}

/// Builds the model with supply capped at `cap`. `NoMatch` is removed at the
/// cap so the state space is closed.
pub fn build_mdp(params: &MarketParams, cap: u32) -> Result<MdpModel> {
    let required = required_cap(params);
    if cap < required {
        return Err(Error::CapTooSmall { cap, required });
    }
    let mut states = Vec::with_capacity(2 * pair_count(cap));
    for n in 0..=cap {
        for x_l in 0..=n {
            for d in [H, L] {
                states.push(State::new(n - x_l, x_l, Some(d)));
            }
        }
    }
    let h = params.h();
    let choices = states
        .iter()
        .map(|s| {
            ordered_actions(s, cap)
                .into_iter()
                .map(|a| {
                    let (x_h, x_l) = s.after(a);
                    let pay = match a {
                        Action::Match(i, j) => params.payoffs().get(i, j),
                        Action::NoMatch => 0.0,
                    };
                    Choice {
                        action: a,
                        reward: pay - h * f64::from(x_h + x_l),
                        post: pair_index(x_h, x_l),
                    }
                })
                .collect()
        })
        .collect();
    Ok(MdpModel {
        params: *params,
        cap,
        states,
        choices,
    })
}

impl MdpModel {
    pub fn cap(&self) -> u32 {
        self.cap
    }

    pub fn params(&self) -> &MarketParams {
        &self.params
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn index_of(&self, s: &State) -> Option<usize> {
        (s.demand.is_some() && s.total() <= self.cap).then(|| state_index(s))
    }

    pub fn actions(&self, i: usize) -> Vec<Action> {
        self.choices[i].iter().map(|c| c.action).collect()
    }

    /// `R(s, a)`: match payoff less the holding cost of supply left waiting.
    pub fn reward(&self, i: usize, a: Action) -> Option<f64> {
        self.choices[i].iter().find(|c| c.action == a).map(|c| c.reward)
    }

    /// Successor distribution of `(s, a)`: one supply and one demand arrive.
    pub fn transition(&self, i: usize, a: Action) -> Option<Vec<(usize, f64)>> {
        let s = self.states[i];
        self.reward(i, a)?;
        let (x_h, x_l) = s.after(a);
        Some(self.arrivals(x_h, x_l))
    }

    fn arrivals(&self, x_h: u32, x_l: u32) -> Vec<(usize, f64)> {
        let (p, q) = (self.params.p(), self.params.q());
        let mut out = Vec::with_capacity(4);
        for (sh, sl, ps) in [(1, 0, p), (0, 1, 1.0 - p)] {
            for (d, pd) in [(H, q), (L, 1.0 - q)] {
                out.push((state_index(&State::new(x_h + sh, x_l + sl, Some(d))), ps * pd));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RviOptions {
    pub tol: f64,
    pub max_iter: u64,
}

impl Default for RviOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MdpSolution {
    pub gain: f64,
    /// Relative values, zero at the reference state `(0, 0, 1, 0)`. Levels
    /// above the reference gain class carry their linear drift.
    pub bias: Vec<f64>,
    /// Value of state `(t, 0, 1, 0)` for each total-supply level `t`.
    pub level_offsets: Vec<f64>,
    /// Value relative to the state's own level offset.
    pub relative: Vec<f64>,
    pub policy: Vec<Action>,
    pub states: Vec<State>,
    pub cap: u32,
    pub iterations: u64,
    /// Largest span of the last value update, over the reference gain class
    /// and within each higher level.
    pub span: f64,
    /// Lowest total-supply level at which the policy always matches.
    pub recurrent_level: u32,
}

/// The reference state `(0, 0, 1, 0)`.
pub const REFERENCE_STATE: State = State::new(0, 0, Some(H));

/// Index of the state `(t, 0, 1, 0)`, the first state of level `t`.
fn level_start(t: usize) -> usize {
    t * (t + 1)
}

/// Relative value iteration. Values are stored as a per-level offset plus a
/// within-level remainder so that levels drifting away from the reference
/// class keep full precision in their internal differences.
pub fn relative_value_iteration(model: &MdpModel, opts: RviOptions) -> Result<MdpSolution> {
    let n = model.states.len();
    let levels = model.cap as usize + 1;
    let level_of: Vec<usize> = model.states.iter().map(|s| s.total() as usize).collect();
    let posts = pair_count(model.cap.saturating_sub(1));
    let (p, q) = (model.params.p(), model.params.q());
    let w = [p * q, p * (1.0 - q), (1.0 - p) * q, (1.0 - p) * (1.0 - q)];
    // Successor indices of every post-decision pair.
    let succ: Vec<[usize; 4]> = (0..=model.cap.saturating_sub(1))
        .flat_map(|t| (0..=t).map(move |x_l| (t - x_l, x_l)))
        .map(|(x_h, x_l)| {
            let i = 2 * pair_index(x_h + 1, x_l);
            let j = 2 * pair_index(x_h, x_l + 1);
            [i, i + 1, j, j + 1]
        })
        .collect();

    let mut off = vec![0.0; levels];
    let mut rel = vec![0.0; n];
    let mut next_off = vec![0.0; levels];
    let mut next_rel = vec![0.0; n];
    let mut raw = vec![0.0; n];
    let mut v = vec![0.0; posts];
    let mut policy = vec![Action::NoMatch; n];
    let mut prev_policy = vec![Action::NoMatch; n];
    let mut span = f64::INFINITY;

    for iter in 1..=opts.max_iter {
        for (vi, s) in v.iter_mut().zip(&succ) {
            *vi = w[0] * rel[s[0]] + w[1] * rel[s[1]] + w[2] * rel[s[2]] + w[3] * rel[s[3]];
        }
        for i in 0..n {
            let t = level_of[i];
            // Waiting moves the state up one level.
            let lift = if t + 1 < levels { off[t + 1] - off[t] } else { 0.0 };
            let ch = &model.choices[i];
            let value = |c: &Choice| {
                let up = if c.action == Action::NoMatch { lift } else { 0.0 };
                c.reward + up + v[c.post]
            };
            let best = ch.iter().map(value).fold(f64::NEG_INFINITY, f64::max);
            let eps = 1e-11 * (1.0 + best.abs());
            let pick = ch.iter().find(|c| value(c) >= best - eps).expect("nonempty action set");
            raw[i] = best;
            policy[i] = pick.action;
        }
        for t in 0..levels {
            let lo = level_start(t);
            let hi = level_start(t + 1);
            let base = raw[lo];
            next_off[t] = off[t] + base;
            for i in lo..hi {
                next_rel[i] = raw[i] - base;
            }
        }
        let gain = next_off[0];
        for o in next_off.iter_mut() {
            *o -= gain;
        }

        let level = recurrent_level(&model.states, &policy, model.cap) as usize;
        let mut class_lo = f64::INFINITY;
        let mut class_hi = f64::NEG_INFINITY;
        for i in 0..level_start(level + 1) {
            let t = level_of[i];
            let d = (next_off[t] - off[t]) + (next_rel[i] - rel[i]);
            class_lo = class_lo.min(d);
            class_hi = class_hi.max(d);
        }
        span = class_hi - class_lo;
        for t in level + 1..levels {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for i in level_start(t)..level_start(t + 1) {
                let d = next_rel[i] - rel[i];
                lo = lo.min(d);
                hi = hi.max(d);
            }
            span = span.max(hi - lo);
        }

        std::mem::swap(&mut off, &mut next_off);
        std::mem::swap(&mut rel, &mut next_rel);
        let stable = policy == prev_policy;
        prev_policy.copy_from_slice(&policy);
        if span < opts.tol && stable && iter > 1 {
            let bias = (0..n).map(|i| off[level_of[i]] + rel[i]).collect();
            return Ok(MdpSolution {
                gain,
                bias,
                level_offsets: off,
                relative: rel,
                policy,
                states: model.states.clone(),
                cap: model.cap,
                iterations: iter,
                span,
                recurrent_level: level as u32,
            });
        }
    }
    Err(Error::NoConvergence {
        max_iter: opts.max_iter,
        span,
    })
}

fn recurrent_level(states: &[State], policy: &[Action], cap: u32) -> u32 {
    let mut holds = vec![false; cap as usize + 1];
    holds[0] = true;
    for (s, a) in states.iter().zip(policy) {
        if *a == Action::NoMatch {
            holds[s.total() as usize] = true;
        }
    }
    (1..=cap).find(|&t| !holds[t as usize]).unwrap_or(cap)
}

/// Checks the solved policy against the threshold shape and returns the
/// threshold `k` such that an (H,L) match is made exactly when `x_H > k`.
pub fn extract_threshold(sol: &MdpSolution) -> Result<u32> {
    let k = sol
        .states
        .iter()
        .zip(&sol.policy)
        .filter(|(s, a)| s.demand == Some(L) && s.x_l == 0 && s.x_h > 0 && **a == Action::NoMatch)
        .map(|(s, _)| s.x_h)
        .max()
        .unwrap_or(0);
    for (s, &found) in sol.states.iter().zip(&sol.policy) {
        let expected = match s.demand {
            Some(H) if s.x_h > 0 => Action::Match(H, H),
            Some(H) if s.x_l > 0 => Action::Match(L, H),
            Some(L) if s.x_l > 0 => Action::Match(L, L),
            Some(L) if s.x_h > k => Action::Match(H, L),
            _ => Action::NoMatch,
        };
        if found != expected {
            return Err(Error::StructureViolation {
                state: *s,
                expected,
                found,
            });
        }
    }
    Ok(k)
}

/// Expected next-period value of a pre-arrival queue, split into the offset
/// of the level it arrives at and the remainder.
fn post_value(model: &MdpModel, sol: &MdpSolution, x_h: u32, x_l: u32) -> (f64, f64) {
    let rem = model
        .arrivals(x_h, x_l)
        .iter()
        .map(|&(j, pr)| pr * sol.relative[j])
        .sum();
    (sol.level_offsets[(x_h + x_l) as usize + 1], rem)
}

/// Expected next-period relative value `V(x_h, x_l)` for every pre-arrival
/// queue with total below the cap, keyed by `(x_h, x_l)`.
pub fn post_decision_values(model: &MdpModel, sol: &MdpSolution) -> Vec<((u32, u32), f64)> {
    let mut out = Vec::new();
    for t in 0..model.cap {
        for x_l in 0..=t {
            let (o, r) = post_value(model, sol, t - x_l, x_l);
            out.push(((t - x_l, x_l), o + r));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasViolation {
    pub property: &'static str,
    pub x_h: u32,
    pub x_l: u32,
    pub value: f64,
    pub bound: f64,
}

/// Pointwise checks on `V`: the two marginal-value caps, the bracket on the
/// H-for-L swap value, and concavity in `x_H`.
pub fn check_bias_structure(model: &MdpModel, sol: &MdpSolution, tol: f64) -> Vec<BiasViolation> {
    let v = |x_h: u32, x_l: u32| (x_h + x_l < model.cap).then(|| post_value(model, sol, x_h, x_l));
    // Offsets and remainders are differenced separately.
    let diff = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0) + (a.1 - b.1);
    let r = model.params.payoffs();
    let h = model.params.h();
    let mut out = Vec::new();
    let mut check = |property, x_h, x_l, value: f64, bound: f64, upper: bool| {
        let bad = if upper { value > bound + tol } else { value < bound - tol };
        if bad {
            out.push(BiasViolation {
                property,
                x_h,
                x_l,
                value,
                bound,
            });
        }
    };
    for t in 0..model.cap {
        for x_l in 0..=t {
            let x_h = t - x_l;
            let here = v(x_h, x_l).expect("in range");
            if let Some(up_h) = v(x_h + 1, x_l) {
                check("dV/dxH <= r_HH + h", x_h, x_l, diff(up_h, here), r.r_hh + h, true);
            }
            if let Some(up_l) = v(x_h, x_l + 1) {
                check("dV/dxL <= r_LL + h", x_h, x_l, diff(up_l, here), r.r_ll + h, true);
            }
            if let (Some(a), Some(b)) = (v(x_h + 1, x_l), v(x_h, x_l + 1)) {
                let swap = diff(a, b);
                check("swap >= r_HL - r_LL", x_h, x_l, swap, r.r_hl - r.r_ll, false);
                check("swap <= r_HH - r_LH", x_h, x_l, swap, r.r_hh - r.r_lh, true);
            }
            if let (Some(a), Some(b)) = (v(x_h + 1, x_l), v(x_h + 2, x_l)) {
                check("concave in xH", x_h, x_l, diff(b, a) - diff(a, here), 0.0, true);
            }
        }
    }
    out
}
