//! Seeded Monte Carlo simulation of the arrival-and-matching process.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::chain::StationaryDistribution;
use crate::error::{Error, Result};
use crate::params::MarketParams;
use crate::state::{Action, MatchRule, Quality, State};

pub const DEFAULT_BURN_IN: u64 = 10_000;

/// Batches used for the standard error of a single replication.
const BATCHES: u64 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SimConfig {
    horizon: u64,
    burn_in: u64,
    seed: u64,
    replications: u32,
}

impl SimConfig {
    pub fn new(horizon: u64, burn_in: u64, seed: u64, replications: u32) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::RangeError {
                name: "horizon",
                value: 0.0,
                expected: "a positive integer",
            });
        }
        if burn_in >= horizon {
            return Err(Error::RangeError {
                name: "burn_in",
                value: burn_in as f64,
                expected: "less than horizon",
            });
        }
        if replications == 0 {
            return Err(Error::RangeError {
                name: "replications",
                value: 0.0,
                expected: "a positive integer",
            });
        }
        Ok(Self {
            horizon,
            burn_in,
            seed,
            replications,
        })
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn burn_in(&self) -> u64 {
        self.burn_in
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn replications(&self) -> u32 {
        self.replications
    }

    pub fn retained_per_replication(&self) -> u64 {
        self.horizon - self.burn_in
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct MatchCounts {
    pub hh: u64,
    pub hl: u64,
    pub lh: u64,
    pub ll: u64,
    pub none: u64,
}

impl MatchCounts {
    fn record(&mut self, a: Action) {
        use Quality::{H, L};
        match a {
            Action::Match(H, H) => self.hh += 1,
            Action::Match(H, L) => self.hl += 1,
            Action::Match(L, H) => self.lh += 1,
            Action::Match(L, L) => self.ll += 1,
            Action::NoMatch => self.none += 1,
        }
    }

    fn merge(&mut self, o: &MatchCounts) {
        self.hh += o.hh;
        self.hl += o.hl;
        self.lh += o.lh;
        self.ll += o.ll;
        self.none += o.none;
    }

    pub fn total(&self) -> u64 {
        self.hh + self.hl + self.lh + self.ll + self.none
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub mean_welfare: f64,
    pub welfare_stderr: f64,
    /// Frequencies of the pre-arrival queue `(x_H, x_L)` over retained
    /// periods, sorted by state.
    pub queue_histogram: Vec<((u32, u32), f64)>,
    pub match_counts: MatchCounts,
    pub retained_periods: u64,
    pub replication_means: Vec<f64>,
}

impl SimResult {
    pub fn frequency(&self, state: (u32, u32)) -> f64 {
        self.queue_histogram
            .iter()
            .find(|(s, _)| *s == state)
            .map_or(0.0, |(_, f)| *f)
    }
}

struct Replication {
    welfare_sum: f64,
    batch_sums: Vec<f64>,
    histogram: BTreeMap<(u32, u32), u64>,
    counts: MatchCounts,
}

fn run_replication<R, F>(params: &MarketParams, rule: &R, config: &SimConfig, rep: u32, observe: &F) -> Replication
where
    R: MatchRule + ?Sized,
    F: Fn(&State, Action) + ?Sized,
{
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(u64::from(rep));
    let (p, q, h) = (params.p(), params.q(), params.h());
    let r = params.payoffs();
    let retained = config.retained_per_replication();
    let batch_len = retained.div_ceil(BATCHES).max(1);
    let mut out = Replication {
        welfare_sum: 0.0,
        batch_sums: vec![0.0; BATCHES as usize],
        histogram: BTreeMap::new(),
        counts: MatchCounts::default(),
    };
    let (mut x_h, mut x_l) = (0u32, 0u32);
    for t in 0..config.horizon {
        let keep = t >= config.burn_in;
        if keep {
            *out.histogram.entry((x_h, x_l)).or_insert(0) += 1;
        }
        let supply_h = rng.random::<f64>() < p;
        let demand_h = rng.random::<f64>() < q;
        let demand = if demand_h { Quality::H } else { Quality::L };
        let state = if supply_h {
            State::new(x_h + 1, x_l, Some(demand))
        } else {
            State::new(x_h, x_l + 1, Some(demand))
        };
        let action = rule.decide(&state);
        (x_h, x_l) = state.after(action);
        if keep {
            observe(&state, action);
            let pay = match action {
                Action::Match(i, j) => r.get(i, j),
                Action::NoMatch => 0.0,
            };
            let w = pay - h * f64::from(x_h + x_l);
            out.welfare_sum += w;
            out.batch_sums[((t - config.burn_in) / batch_len) as usize] += w;
            out.counts.record(action);
        }
    }
    out
}

/// Simulates `config.replications` independent runs from the empty state.
/// Replication `i` draws from stream `i` of a ChaCha8 generator keyed by the
/// seed, so results do not depend on scheduling.
pub fn simulate<R>(params: &MarketParams, rule: &R, config: &SimConfig) -> SimResult
where
    R: MatchRule + Sync + ?Sized,
{
    simulate_observed(params, rule, config, &|_: &State, _: Action| {})
}

/// As [`simulate`], calling `observe` with every retained post-arrival state
/// and the action taken in it.
pub fn simulate_observed<R, F>(params: &MarketParams, rule: &R, config: &SimConfig, observe: &F) -> SimResult
where
    R: MatchRule + Sync + ?Sized,
    F: Fn(&State, Action) + Sync + ?Sized,
{
    let reps: Vec<Replication> = (0..config.replications)
        .into_par_iter()
        .map(|rep| run_replication(params, rule, config, rep, observe))
        .collect();

    let per_rep = config.retained_per_replication();
    let retained = per_rep * u64::from(config.replications);
    let replication_means: Vec<f64> = reps.iter().map(|r| r.welfare_sum / per_rep as f64).collect();
    let mean_welfare = replication_means.iter().sum::<f64>() / replication_means.len() as f64;

    let welfare_stderr = if reps.len() >= 2 {
        std_error(&replication_means)
    } else {
        // Batch means of the single run; the last batch may be short.
        let batch_len = per_rep.div_ceil(BATCHES).max(1);
        let means: Vec<f64> = reps[0]
            .batch_sums
            .iter()
            .enumerate()
            .filter_map(|(b, s)| {
                let start = b as u64 * batch_len;
                let len = per_rep.saturating_sub(start).min(batch_len);
                (len > 0).then(|| s / len as f64)
            })
            .collect();
        std_error(&means)
    };

    let mut histogram: BTreeMap<(u32, u32), u64> = BTreeMap::new();
    let mut match_counts = MatchCounts::default();
    for r in &reps {
        for (s, c) in &r.histogram {
            *histogram.entry(*s).or_insert(0) += c;
        }
        match_counts.merge(&r.counts);
    }
    let queue_histogram = histogram
        .into_iter()
        .map(|(s, c)| (s, c as f64 / retained as f64))
        .collect();

    SimResult {
        mean_welfare,
        welfare_stderr,
        queue_histogram,
        match_counts,
        retained_periods: retained,
        replication_means,
    }
}

fn std_error(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmpiricalDiagnostic {
    /// Total variation between the histogram restricted to the analytic
    /// support (renormalized) and the analytic distribution.
    pub tv: f64,
    pub off_class_mass: f64,
}

/// Compares a simulated queue histogram with a stationary distribution.
/// Fails with `SupportMismatch` when less than half the observed mass lies
/// on the analytic support.
pub fn empirical_vs_analytic(result: &SimResult, analytic: &StationaryDistribution) -> Result<EmpiricalDiagnostic> {
    let in_class: f64 = analytic.support.iter().map(|&s| result.frequency(s)).sum();
    if in_class < 0.5 {
        return Err(Error::SupportMismatch { in_class_mass: in_class });
    }
    let tv = 0.5
        * analytic
            .support
            .iter()
            .zip(&analytic.probs)
            .map(|(&s, &pi)| (result.frequency(s) / in_class - pi).abs())
            .sum::<f64>();
    Ok(EmpiricalDiagnostic {
        tv,
        off_class_mass: (1.0 - in_class).max(0.0),
    })
}
