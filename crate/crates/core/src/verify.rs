//! Cross-module oracle suites on a seeded random parameter grid.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::analytic::{k_centralized_argmax, k_decentralized, welfare_of_threshold};
use crate::chain::{stationary_decentralized_analytic, stationary_threshold_chain, welfare_from_chain};
use crate::equilibrium::{best_response_check, equilibrium_profile, ew_first_closed_form};
use crate::error::{Error, Result};
use crate::mdp::{build_mdp, extract_threshold, holding_cap_bound, relative_value_iteration, RviOptions};
use crate::params::{MarketParams, PayoffMatrix, RawParams};
use crate::sim::{empirical_vs_analytic, simulate_observed, SimConfig};
use crate::state::{Action, Quality};

/// Tolerances of the individual checks.
pub const FORMULA_CHAIN_TOL: f64 = 1e-10;
pub const FORMULA_MDP_TOL: f64 = 1e-6;
pub const STATIONARY_TOL: f64 = 1e-10;
pub const EW_TOL: f64 = 1e-9;
pub const TV_TOL: f64 = 0.01;
pub const OFF_CLASS_TOL: f64 = 1e-3;
pub const STDERR_MULTIPLE: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Suite {
    /// Formula and argmax thresholds and welfare against the MDP.
    Mdp,
    /// Formula welfare and closed-form stationary laws against the chain.
    Chain,
    /// Chain against simulation of the equilibrium profile.
    Sim,
    /// Best-response certification, waiting costs and `k_L`.
    Equilibrium,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Mdp, Suite::Chain, Suite::Sim, Suite::Equilibrium];
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Mdp => "mdp",
            Suite::Chain => "chain",
            Suite::Sim => "sim",
            Suite::Equilibrium => "equilibrium",
        })
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.to_string() == s)
            .ok_or_else(|| Error::Inconsistent(format!("unknown suite {s:?}")))
    }
}

pub type ThresholdFn = fn(&MarketParams) -> Result<u32>;

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub grid_size: usize,
    pub seed: u64,
    pub suites: Vec<Suite>,
    /// Threshold under test; replaceable to exercise failure reporting.
    pub k_centralized: ThresholdFn,
    /// Simulated runs use the first grid sets whose equilibrium threshold is
    /// at most `sim_max_threshold`, up to `sim_sets` of them.
    pub sim_sets: usize,
    pub sim_max_threshold: u32,
    pub sim_horizon: u64,
    pub sim_burn_in: u64,
    pub sim_replications: u32,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            grid_size: 50,
            seed: 42,
            suites: Suite::ALL.to_vec(),
            k_centralized: crate::analytic::k_centralized,
            sim_sets: 10,
            sim_max_threshold: 8,
            sim_horizon: 2_000_000,
            sim_burn_in: 10_000,
            sim_replications: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub suite: Suite,
    pub check: &'static str,
    pub set: usize,
    pub params: RawParams,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub grid_size: usize,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Seeded parameter grid: thirds with `p > q`, `p = q` and `p < q` drawn
/// from `[0.25, 0.75]`; `h` log-uniform over three decades around
/// `r_HH - r_HL`.
pub fn random_grid(size: usize, seed: u64) -> Vec<MarketParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(size);
    while out.len() < size {
        let (a, b): (f64, f64) = (rng.random_range(0.25..0.75), rng.random_range(0.25..0.75));
        let (p, q) = match out.len() % 3 {
            0 => (a.max(b), a.min(b)),
            1 => (a, a),
            _ => (a.min(b), a.max(b)),
        };
        if out.len() % 3 != 1 && (p - q).abs() < 0.02 {
            continue;
        }
        let r_ll = rng.random_range(0.0..50.0);
        let span = rng.random_range(200.0..1000.0);
        let r_hh = r_ll + span;
        // Cross payoffs split the span so that the gap stays positive.
        let s1 = rng.random_range(0.0..0.5);
        let s2 = rng.random_range(0.0..0.5);
        let r_hl = r_ll + s1 * span;
        let r_lh = r_ll + s2 * span;
        let alpha = rng.random_range(0.05..0.95);
        let sep = r_hh - r_hl;
        let h = sep * 10f64.powf(rng.random_range(-1.5..1.5));
        match MarketParams::new(p, q, alpha, h, PayoffMatrix::new(r_hh, r_hl, r_lh, r_ll)) {
            Ok(m) => out.push(m),
            Err(_) => continue,
        }
    }
    out
}

struct Ctx<'a> {
    opts: &'a VerifyOptions,
}

fn check(suite: Suite, name: &'static str, set: usize, params: &MarketParams, outcome: Result<String>, ok: bool) -> CheckResult {
    let (passed, detail) = match outcome {
        Ok(d) => (ok, d),
        Err(e) => (false, e.to_string()),
    };
    CheckResult {
        suite,
        check: name,
        set,
        params: params.to_raw(),
        passed,
        detail,
    }
}

/// Builds a check from a fallible computation returning `(passed, detail)`.
fn run(suite: Suite, name: &'static str, set: usize, params: &MarketParams, f: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    match f() {
        Ok((ok, d)) => check(suite, name, set, params, Ok(d), ok),
        Err(e) => check(suite, name, set, params, Err(e), false),
    }
}

impl Ctx<'_> {
    fn mdp(&self, set: usize, m: &MarketParams) -> Vec<CheckResult> {
        let s = Suite::Mdp;
        let mut out = Vec::new();
        let solved = (|| {
            let k = (self.opts.k_centralized)(m)?;
            let arg = k_centralized_argmax(m)?;
            let cap = holding_cap_bound(m).max(k + 5);
            let model = build_mdp(m, cap)?;
            let sol = relative_value_iteration(&model, RviOptions::default())?;
            let k_mdp = extract_threshold(&sol)?;
            Ok((k, arg, k_mdp, sol.gain))
        })();
        match solved {
            Err(e) => out.push(check(s, "threshold", set, m, Err(e), false)),
            Ok((k, arg, k_mdp, gain)) => {
                out.push(check(
                    s,
                    "threshold",
                    set,
                    m,
                    Ok(format!("k_centralized={k} argmax={arg} mdp={k_mdp}")),
                    k == arg && k == k_mdp,
                ));
                out.push(run(s, "gain", set, m, || {
                    let w = welfare_of_threshold(m, k)?;
                    let err = (w - gain).abs();
                    Ok((err <= FORMULA_MDP_TOL, format!("formula={w} gain={gain} err={err:e}")))
                }));
            }
        }
        out
    }

    fn chain(&self, set: usize, m: &MarketParams) -> Vec<CheckResult> {
        let s = Suite::Chain;
        vec![
            run(s, "welfare", set, m, || {
                let k = (self.opts.k_centralized)(m)?;
                let w = welfare_of_threshold(m, k)?;
                let c = welfare_from_chain(m, k)?;
                let err = (w - c).abs();
                Ok((err <= FORMULA_CHAIN_TOL, format!("k={k} formula={w} chain={c} err={err:e}")))
            }),
            run(s, "stationary", set, m, || {
                let k = k_decentralized(m);
                let a = stationary_decentralized_analytic(m)?;
                let c = stationary_threshold_chain(m, k)?;
                let err = a
                    .probs
                    .iter()
                    .zip(&c.probs)
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max);
                Ok((err <= STATIONARY_TOL, format!("k_de={k} max_err={err:e}")))
            }),
        ]
    }

    fn sim(&self, set: usize, m: &MarketParams) -> Vec<CheckResult> {
        let s = Suite::Sim;
        let o = self.opts;
        let result = (|| {
            let profile = equilibrium_profile(m)?;
            let k = profile.k_de;
            let config = SimConfig::new(o.sim_horizon, o.sim_burn_in, o.seed ^ set as u64, o.sim_replications)?;
            let bad = std::sync::atomic::AtomicU64::new(0);
            let observe = |st: &crate::State, a: Action| {
                let wrong = match a {
                    Action::Match(Quality::L, Quality::H) => st.x_h > 0,
                    Action::Match(Quality::H, Quality::L) => st.x_h <= k,
                    _ => false,
                };
                if wrong {
                    bad.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                }
            };
            let res = simulate_observed(m, &profile, &config, &observe);
            Ok((k, res, bad.into_inner()))
        })();
        let (k, res, bad) = match result {
            Ok(v) => v,
            Err(e) => return vec![check(s, "simulation", set, m, Err(e), false)],
        };
        vec![
            check(s, "match-pattern", set, m, Ok(format!("k_de={k} wrong_matches={bad}")), bad == 0),
            run(s, "histogram", set, m, || {
                let d = empirical_vs_analytic(&res, &stationary_decentralized_analytic(m)?)?;
                Ok((
                    d.tv <= TV_TOL && d.off_class_mass <= OFF_CLASS_TOL,
                    format!("k_de={k} tv={:.6} off_class={:e}", d.tv, d.off_class_mass),
                ))
            }),
            run(s, "welfare", set, m, || {
                let w = welfare_of_threshold(m, k)?;
                let z = (res.mean_welfare - w).abs() / res.welfare_stderr;
                Ok((
                    z <= STDERR_MULTIPLE,
                    format!("formula={w} simulated={} stderr={} z={z:.3}", res.mean_welfare, res.welfare_stderr),
                ))
            }),
        ]
    }

    fn equilibrium(&self, set: usize, m: &MarketParams) -> Vec<CheckResult> {
        let s = Suite::Equilibrium;
        vec![
            run(s, "best-response", set, m, || {
                let profile = equilibrium_profile(m)?;
                let report = best_response_check(m, &profile, profile.k_de + 3)?;
                let first = report
                    .violations
                    .first()
                    .map(|v| format!(" first: {:?} at {} ({:?} -> {:?})", v.agent, v.state, v.prescribed, v.deviation))
                    .unwrap_or_default();
                Ok((
                    report.is_empty(),
                    format!(
                        "k_de={} states={} violations={}{first}",
                        profile.k_de,
                        report.states_checked,
                        report.violations.len()
                    ),
                ))
            }),
            run(s, "k_l", set, m, || {
                let profile = equilibrium_profile(m)?;
                let k = profile.k_de;
                let kl = &profile.k_l;
                let monotone = kl.windows(2).all(|w| w[1] <= w[0]);
                let bounded = kl.iter().enumerate().all(|(z, &v)| v <= k - z as u32);
                let zero = m.p() < m.q() || kl.iter().all(|&v| v == 0);
                Ok((
                    monotone && bounded && zero,
                    format!("k_l={kl:?} nonincreasing={monotone} bounded={bounded} zero_when_p_ge_q={zero}"),
                ))
            }),
            run(s, "waiting-cost", set, m, || {
                let profile = equilibrium_profile(m)?;
                let solved = profile.waiting.ew_first[0];
                let closed = ew_first_closed_form(m)?;
                let err = (solved - closed).abs();
                Ok((
                    err <= EW_TOL * solved.abs().max(1.0),
                    format!("linear={solved} closed={closed} err={err:e}"),
                ))
            }),
        ]
    }
}

/// Runs the selected suites over `random_grid(grid_size, seed)`. Checks are
/// evaluated in parallel and reported in (set, suite) order.
pub fn run_verify(opts: &VerifyOptions) -> VerifyReport {
    let grid = random_grid(opts.grid_size, opts.seed);
    let ctx = Ctx { opts };
    let mut sim_targets = Vec::new();
    if opts.suites.contains(&Suite::Sim) {
        sim_targets = grid
            .iter()
            .enumerate()
            .filter(|(_, m)| k_decentralized(m) <= opts.sim_max_threshold)
            .map(|(i, _)| i)
            .take(opts.sim_sets)
            .collect();
    }
    let mut suites = opts.suites.clone();
    suites.sort();
    suites.dedup();
    let checks: Vec<Vec<CheckResult>> = grid
        .par_iter()
        .enumerate()
        .map(|(i, m)| {
            let mut out = Vec::new();
            for s in &suites {
                match s {
                    Suite::Mdp => out.extend(ctx.mdp(i, m)),
                    Suite::Chain => out.extend(ctx.chain(i, m)),
                    Suite::Sim if sim_targets.contains(&i) => out.extend(ctx.sim(i, m)),
                    Suite::Sim => {}
                    Suite::Equilibrium => out.extend(ctx.equilibrium(i, m)),
                }
            }
            out
        })
        .collect();
    VerifyReport {
        seed: opts.seed,
        grid_size: opts.grid_size,
        checks: checks.into_iter().flatten().collect(),
    }
}
