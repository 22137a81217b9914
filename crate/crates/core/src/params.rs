//! Market primitives: payoffs, arrival probabilities, payoff split and
//! waiting cost, plus the two derived scalars every formula is built on.

use serde::{Deserialize, Serialize};

use crate::error::{Assumption, Error, Result};

/// Arrival probabilities closer than this are treated as equal when choosing
/// between the symmetric and asymmetric branches of a formula.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Ratios `delta` within this distance of 1 use the symmetric limit forms.
pub const DELTA_ONE_TOL: f64 = 1e-9;

/// Match payoffs indexed supply type first: `r_hl` pairs an H supply agent
/// with an L demand agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayoffMatrix {
    pub r_hh: f64,
    pub r_hl: f64,
    pub r_lh: f64,
    pub r_ll: f64,
}

impl PayoffMatrix {
    pub const fn new(r_hh: f64, r_hl: f64, r_lh: f64, r_ll: f64) -> Self {
        Self {
            r_hh,
            r_hl,
            r_lh,
            r_ll,
        }
    }

    /// Checks nonnegativity, homogeneous preferences and supermodularity.
    /// Comparisons are exact: the inputs are user constants.
    pub fn check(&self) -> Result<()> {
        for (name, v) in [
            ("r_HH", self.r_hh),
            ("r_HL", self.r_hl),
            ("r_LH", self.r_lh),
            ("r_LL", self.r_ll),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::RangeError {
                    name,
                    value: v,
                    expected: "finite and >= 0",
                });
            }
        }
        let pairs = [
            (self.r_hh >= self.r_hl, "r_HH >= r_HL fails"),
            (self.r_hl >= self.r_ll, "r_HL >= r_LL fails"),
            (self.r_hh >= self.r_lh, "r_HH >= r_LH fails"),
            (self.r_lh >= self.r_ll, "r_LH >= r_LL fails"),
        ];
        if let Some((_, detail)) = pairs.iter().find(|(ok, _)| !ok) {
            return Err(Error::AssumptionViolation {
                assumption: Assumption::HomogeneousPreferences,
                detail: (*detail).to_string(),
            });
        }
        if self.r_hh + self.r_ll < self.r_hl + self.r_lh {
            return Err(Error::AssumptionViolation {
                assumption: Assumption::Supermodularity,
                detail: format!(
                    "r_HH + r_LL = {} < r_HL + r_LH = {}",
                    self.r_hh + self.r_ll,
                    self.r_hl + self.r_lh
                ),
            });
        }
        Ok(())
    }

    /// Supermodularity gap `r_HH + r_LL - r_LH - r_HL`.
    pub fn gap(&self) -> f64 {
        self.r_hh + self.r_ll - self.r_lh - self.r_hl
    }

    /// `r_HH - r_HL`, the H supply agent's gain from holding out for H demand.
    pub fn h_separation(&self) -> f64 {
        self.r_hh - self.r_hl
    }

    /// Payoff of matching a `supply`-type agent with a `demand`-type agent.
    pub fn get(&self, supply: crate::Quality, demand: crate::Quality) -> f64 {
        use crate::Quality::{H, L};
        match (supply, demand) {
            (H, H) => self.r_hh,
            (H, L) => self.r_hl,
            (L, H) => self.r_lh,
            (L, L) => self.r_ll,
        }
    }
}

/// Unvalidated parameter tuple as read from flags or a config file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawParams {
    pub p: f64,
    pub q: f64,
    pub alpha: f64,
    pub h: f64,
    #[serde(rename = "rHH")]
    pub r_hh: f64,
    #[serde(rename = "rHL")]
    pub r_hl: f64,
    #[serde(rename = "rLH")]
    pub r_lh: f64,
    #[serde(rename = "rLL")]
    pub r_ll: f64,
}

impl RawParams {
    pub fn payoffs(&self) -> PayoffMatrix {
        PayoffMatrix::new(self.r_hh, self.r_hl, self.r_lh, self.r_ll)
    }
}

/// Validated market parameters. Construction goes through [`validate`], so
/// every value of this type satisfies the range and payoff assumptions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarketParams {
    p: f64,
    q: f64,
    alpha: f64,
    h: f64,
    payoffs: PayoffMatrix,
}

impl MarketParams {
    pub fn new(p: f64, q: f64, alpha: f64, h: f64, payoffs: PayoffMatrix) -> Result<Self> {
        validate(&RawParams {
            p,
            q,
            alpha,
            h,
            r_hh: payoffs.r_hh,
            r_hl: payoffs.r_hl,
            r_lh: payoffs.r_lh,
            r_ll: payoffs.r_ll,
        })
    }

    /// Probability that arriving supply is H-type.
    pub fn p(&self) -> f64 {
        self.p
    }

    /// Probability that arriving demand is H-type.
    pub fn q(&self) -> f64 {
        self.q
    }

    /// Supply agent's share of the match payoff.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Per-period waiting cost of one supply agent.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn payoffs(&self) -> &PayoffMatrix {
        &self.payoffs
    }

    pub fn is_symmetric(&self) -> bool {
        (self.p - self.q).abs() <= SYMMETRY_TOL
    }

    pub fn to_raw(&self) -> RawParams {
        RawParams {
            p: self.p,
            q: self.q,
            alpha: self.alpha,
            h: self.h,
            r_hh: self.payoffs.r_hh,
            r_hl: self.payoffs.r_hl,
            r_lh: self.payoffs.r_lh,
            r_ll: self.payoffs.r_ll,
        }
    }

    pub fn with_h(&self, h: f64) -> Result<Self> {
        validate(&RawParams { h, ..self.to_raw() })
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        validate(&RawParams {
            alpha,
            ..self.to_raw()
        })
    }

    pub fn with_payoffs(&self, payoffs: PayoffMatrix) -> Result<Self> {
        Self::new(self.p, self.q, self.alpha, self.h, payoffs)
    }

    pub fn with_arrivals(&self, p: f64, q: f64) -> Result<Self> {
        validate(&RawParams { p, q, ..self.to_raw() })
    }
}

impl From<MarketParams> for RawParams {
    fn from(m: MarketParams) -> Self {
        m.to_raw()
    }
}

/// Validates a raw tuple. Range problems are reported before payoff
/// assumptions.
pub fn validate(raw: &RawParams) -> Result<MarketParams> {
    for (name, v) in [("p", raw.p), ("q", raw.q), ("alpha", raw.alpha)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::RangeError {
                name,
                value: v,
                expected: "[0, 1]",
            });
        }
    }
    if !(raw.h > 0.0 && raw.h.is_finite()) {
        return Err(Error::RangeError {
            name: "h",
            value: raw.h,
            expected: "finite and > 0",
        });
    }
    let payoffs = raw.payoffs();
    payoffs.check()?;
    Ok(MarketParams {
        p: raw.p,
        q: raw.q,
        alpha: raw.alpha,
        h: raw.h,
        payoffs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedScalars {
    /// `q(1-p) / (p(1-q))`.
    pub delta: f64,
    /// Supermodularity gap `r`.
    pub gap_r: f64,
}

impl DerivedScalars {
    /// `ln(delta)` computed from the four factors to keep precision near 1.
    pub fn ln_delta(p: f64, q: f64) -> f64 {
        q.ln() + (-p).ln_1p() - p.ln() - (-q).ln_1p()
    }
}

/// Computes `delta` and the gap `r`. Requires `0 < p, q < 1`.
pub fn derived_scalars(params: &MarketParams) -> Result<DerivedScalars> {
    let (p, q) = (params.p, params.q);
    if !(p > 0.0 && p < 1.0 && q > 0.0 && q < 1.0) {
        return Err(Error::DegenerateArrivals { p, q });
    }
    let delta = if params.is_symmetric() {
        1.0
    } else {
        q * (1.0 - p) / (p * (1.0 - q))
    };
    Ok(DerivedScalars {
        delta,
        gap_r: params.payoffs.gap(),
    })
}

/// `floor(x)` after a relative nudge of 1e-9, so exact ratios such as 75/10
/// that land a hair below an integer are not truncated down.
pub fn floor_nudged(x: f64) -> u32 {
    let y = (x + 1e-9 * x.abs().max(1.0)).floor();
    if y <= 0.0 {
        0
    } else if y >= u32::MAX as f64 {
        u32::MAX
    } else {
        y as u32
    }
}
