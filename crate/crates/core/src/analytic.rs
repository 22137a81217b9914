//! Closed-form thresholds and long-run welfare of the threshold policies,
//! together with the full-backlog and no-backlog benchmarks.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{derived_scalars, floor_nudged, DerivedScalars, MarketParams, DELTA_ONE_TOL};

/// Which market design a welfare figure refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum System {
    CentralizedOb,
    DecentralizedOb,
    CentralizedFb,
    DecentralizedFb,
    Nb,
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            System::CentralizedOb => "ce-ob",
            System::DecentralizedOb => "de-ob",
            System::CentralizedFb => "ce-fb",
            System::DecentralizedFb => "de-fb",
            System::Nb => "nb",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    Centralized,
    Decentralized,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Centralized => "centralized",
            Mode::Decentralized => "decentralized",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WelfareReport {
    pub system: System,
    /// Governing threshold; 0 for the no-backlog system.
    pub threshold: u32,
    /// Long-run average welfare per period.
    pub welfare: f64,
}

/// Payoff shares `alpha` in `[lo, hi)` make the equilibrium threshold equal
/// the planner's.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoordinationInterval {
    pub lo: f64,
    pub hi: f64,
}

impl CoordinationInterval {
    pub fn contains(&self, alpha: f64) -> bool {
        alpha >= self.lo && alpha < self.hi
    }
}

/// Branch selector shared by the threshold formulas.
enum Shape {
    /// `delta` is (numerically) 1; the value is `p(1-q)`.
    Flat(f64),
    /// General case; the value is `ln(delta)`.
    Tilted(f64),
}

fn shape(params: &MarketParams) -> Result<Shape> {
    let (p, q) = (params.p(), params.q());
    if params.is_symmetric() {
        return Ok(Shape::Flat(p * (1.0 - q)));
    }
    let d = derived_scalars(params)?;
    if (d.delta - 1.0).abs() < DELTA_ONE_TOL {
        Ok(Shape::Flat(p * (1.0 - q)))
    } else {
        Ok(Shape::Tilted(DerivedScalars::ln_delta(p, q)))
    }
}

/// Long-run average welfare of the threshold-`k` policy.
///
/// For `delta != 1` this is
/// `q r_HH + (1-q) r_LL + p(1-q)(r_HH - r_LH)(1-delta) - p(1-q) r (1-delta)/(1-delta^(k+1)) - k h`,
/// evaluated through the identity `p(1-q)(1-delta) = p - q` and `expm1` so
/// that neither tail of `delta` loses precision. The symmetric form is
/// `p r_HH + (1-p) r_LL - p(1-p) r/(k+1) - k h`.
pub fn welfare_of_threshold(params: &MarketParams, k: u32) -> Result<f64> {
    let (p, q, h) = (params.p(), params.q(), params.h());
    let r = params.payoffs();
    let gap = r.gap();
    let kf = f64::from(k);
    let base = q * r.r_hh + (1.0 - q) * r.r_ll;
    match shape(params)? {
        Shape::Flat(pq) => Ok(base - pq * gap / (kf + 1.0) - kf * h),
        Shape::Tilted(ln_delta) => {
            let dpq = p - q;
            // (p - q)/(1 - delta^(k+1)) written with expm1.
            let cross = -dpq / ((kf + 1.0) * ln_delta).exp_m1();
            Ok(base + dpq * (r.r_hh - r.r_lh) - gap * cross - kf * h)
        }
    }
}

/// Planner threshold from the logarithmic closed form (or the square-root
/// form when `delta = 1`).
pub fn k_centralized_closed_form(params: &MarketParams) -> Result<u32> {
    derived_scalars(params)?;
    let h = params.h();
    let gap = params.payoffs().gap();
    match shape(params)? {
        Shape::Flat(pq) => {
            let c = pq * gap;
            // (-h + sqrt(h^2 + 4hc)) / (2h) without the subtraction.
            let x = 2.0 * c / (h + (h * h + 4.0 * h * c).sqrt());
            Ok(floor_nudged(x))
        }
        Shape::Tilted(ln_delta) => {
            let (p, q) = (params.p(), params.q());
            let delta = ln_delta.exp();
            let c = p * (1.0 - q) * gap;
            let one_minus_delta = -ln_delta.exp_m1();
            let a = h * (1.0 + delta) + c * one_minus_delta * one_minus_delta;
            let root_delta = delta.sqrt();
            let lo = h * (1.0 - root_delta).powi(2) + c * one_minus_delta * one_minus_delta;
            let disc = (lo * (a + 2.0 * h * root_delta)).sqrt();
            // Roots of h delta u^2 - a u + h = 0 in u = delta^k; their product is 1/delta.
            let x = if delta < 1.0 {
                let u_minus = 2.0 * h / (a + disc);
                u_minus.ln() / ln_delta
            } else {
                let u_plus = (a + disc) / (2.0 * h * delta);
                u_plus.ln() / ln_delta
            };
            if !x.is_finite() {
                return Err(Error::Inconsistent(format!(
                    "closed-form threshold is not finite for {:?}",
                    params.to_raw()
                )));
            }
            Ok(floor_nudged(x))
        }
    }
}

/// Largest maximizer of `welfare_of_threshold` over `k >= 0`. `W` is concave
/// in `k`, so the scan stops at the first strict decrease past the search
/// horizon `ceil(p(1-q) r / h) + 2`.
pub fn k_centralized_argmax(params: &MarketParams) -> Result<u32> {
    let h = params.h();
    let r = params.payoffs();
    let horizon = (params.p() * (1.0 - params.q()) * r.gap() / h).ceil() + 2.0;
    let horizon = if horizon.is_finite() && horizon < 1e7 {
        horizon as u32
    } else {
        10_000_000
    };
    let mut best = 0u32;
    let mut best_w = welfare_of_threshold(params, 0)?;
    let mut prev_w = best_w;
    let mut k = 1u32;
    loop {
        let w = welfare_of_threshold(params, k)?;
        let tol = 1e-12 * (1.0 + r.r_hh + f64::from(k) * h);
        if w >= best_w - tol {
            best = k;
            best_w = best_w.max(w);
        }
        if k >= horizon && w < prev_w - tol {
            return Ok(best);
        }
        if k == u32::MAX - 1 || k > 10_000_000 {
            return Err(Error::Inconsistent("argmax scan did not terminate".into()));
        }
        prev_w = w;
        k += 1;
    }
}

/// Optimal planner threshold `k^ce`. Both the closed form and the argmax are
/// evaluated; the argmax is returned and a disagreement is an error.
pub fn k_centralized(params: &MarketParams) -> Result<u32> {
    let closed = k_centralized_closed_form(params)?;
    let arg = k_centralized_argmax(params)?;
    if closed != arg {
        return Err(Error::Inconsistent(format!(
            "closed-form threshold {closed} != argmax {arg} for {:?}",
            params.to_raw()
        )));
    }
    Ok(arg)
}

pub fn welfare_centralized_ob(params: &MarketParams) -> Result<WelfareReport> {
    let k = k_centralized(params)?;
    Ok(WelfareReport {
        system: System::CentralizedOb,
        threshold: k,
        welfare: welfare_of_threshold(params, k)?,
    })
}

/// Equilibrium bound on the H supply queue, `floor(q alpha (r_HH - r_HL) / h)`.
pub fn k_decentralized(params: &MarketParams) -> u32 {
    floor_nudged(params.q() * params.alpha() * params.payoffs().h_separation() / params.h())
}

pub fn welfare_decentralized_ob(params: &MarketParams) -> Result<WelfareReport> {
    let k = k_decentralized(params);
    Ok(WelfareReport {
        system: System::DecentralizedOb,
        threshold: k,
        welfare: welfare_of_threshold(params, k)?,
    })
}

/// Range of `alpha` for which `k_decentralized == k_centralized`.
pub fn coordination_interval(params: &MarketParams) -> Result<CoordinationInterval> {
    let sep = params.payoffs().h_separation();
    if sep <= 0.0 {
        return Err(Error::NoSeparation);
    }
    let k = f64::from(k_centralized(params)?);
    let scale = params.h() / (params.q() * sep);
    Ok(CoordinationInterval {
        lo: scale * k,
        hi: scale * (k + 1.0),
    })
}

fn require_symmetric(params: &MarketParams) -> Result<()> {
    if params.is_symmetric() {
        Ok(())
    } else {
        Err(Error::AsymmetricArrivals {
            p: params.p(),
            q: params.q(),
        })
    }
}

/// Planner threshold under full backlog, `floor(sqrt(p(1-p) r / (2h)))`.
pub fn k_fb_centralized(params: &MarketParams) -> Result<u32> {
    require_symmetric(params)?;
    let p = params.p();
    Ok(floor_nudged(
        (p * (1.0 - p) * params.payoffs().gap() / (2.0 * params.h())).sqrt(),
    ))
}

/// Full-backlog welfare with threshold `k`.
pub fn welfare_fb_at(params: &MarketParams, k: u32) -> Result<f64> {
    require_symmetric(params)?;
    let p = params.p();
    let r = params.payoffs();
    let kf = f64::from(k);
    let denom = 2.0 * kf + 1.0;
    Ok(p * r.r_hh + (1.0 - p) * r.r_ll
        - p * (1.0 - p) * r.gap() / denom
        - 2.0 * kf * (kf + 1.0) * params.h() / denom)
}

pub fn welfare_fb(params: &MarketParams, mode: Mode) -> Result<WelfareReport> {
    let (system, k) = match mode {
        Mode::Centralized => (System::CentralizedFb, k_fb_centralized(params)?),
        Mode::Decentralized => {
            require_symmetric(params)?;
            (System::DecentralizedFb, k_decentralized(params))
        }
    };
    Ok(WelfareReport {
        system,
        threshold: k,
        welfare: welfare_fb_at(params, k)?,
    })
}

pub fn welfare_nb(params: &MarketParams) -> Result<WelfareReport> {
    require_symmetric(params)?;
    let p = params.p();
    let r = params.payoffs();
    Ok(WelfareReport {
        system: System::Nb,
        threshold: 0,
        welfare: p * r.r_hh + (1.0 - p) * r.r_ll - p * (1.0 - p) * r.gap(),
    })
}

/// One-sided welfare for a mode: the planner's optimum or the equilibrium.
pub fn welfare_ob(params: &MarketParams, mode: Mode) -> Result<WelfareReport> {
    match mode {
        Mode::Centralized => welfare_centralized_ob(params),
        Mode::Decentralized => welfare_decentralized_ob(params),
    }
}

pub fn welfare_of_system(params: &MarketParams, system: System) -> Result<WelfareReport> {
    match system {
        System::CentralizedOb => welfare_centralized_ob(params),
        System::DecentralizedOb => welfare_decentralized_ob(params),
        System::CentralizedFb => welfare_fb(params, Mode::Centralized),
        System::DecentralizedFb => welfare_fb(params, Mode::Decentralized),
        System::Nb => welfare_nb(params),
    }
}

impl System {
    pub const ALL: [System; 5] = [
        System::CentralizedOb,
        System::DecentralizedOb,
        System::CentralizedFb,
        System::DecentralizedFb,
        System::Nb,
    ];

    /// Systems reported for a mode: its one-sided and full-backlog
    /// variants plus the no-backlog baseline.
    pub fn for_mode(mode: Mode) -> [System; 3] {
        match mode {
            Mode::Centralized => [System::CentralizedOb, System::CentralizedFb, System::Nb],
            Mode::Decentralized => [System::DecentralizedOb, System::DecentralizedFb, System::Nb],
        }
    }
}

impl std::str::FromStr for System {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        System::ALL
            .into_iter()
            .find(|sys| sys.to_string() == s)
            .ok_or_else(|| Error::Inconsistent(format!("unknown system {s:?}")))
    }
}
