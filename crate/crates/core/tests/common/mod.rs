#![allow(dead_code)]

use std::collections::HashMap;

use dynmatch::{MarketParams, PayoffMatrix};
use proptest::prelude::*;

/// `p = q = 0.5`, `r = (800, 50, 50, 0)`, `alpha = 0.2`, `h = 10`.
pub fn reference() -> MarketParams {
    market(0.5, 0.5, 0.2, 10.0, (800.0, 50.0, 50.0, 0.0))
}

pub fn market(p: f64, q: f64, alpha: f64, h: f64, r: (f64, f64, f64, f64)) -> MarketParams {
    MarketParams::new(p, q, alpha, h, PayoffMatrix::new(r.0, r.1, r.2, r.3)).unwrap()
}

/// Valid markets with interior arrival rates. `h` is scaled to the H-type
/// separation so thresholds stay in a moderate range.
pub fn arb_market() -> impl Strategy<Value = MarketParams> {
    (
        0.05f64..0.95,
        0.05f64..0.95,
        any::<bool>(),
        0.0f64..1.0,
        0.0f64..50.0,
        50.0f64..1000.0,
        0.0f64..0.5,
        0.0f64..0.5,
        -1.3f64..1.3,
    )
        .prop_map(|(p, q, sym, alpha, r_ll, span, a, b, lh)| {
            let q = if sym { p } else { q };
            let r = (r_ll + span, r_ll + a * span, r_ll + b * span, r_ll);
            let h = (r.0 - r.1) * 10f64.powf(lh);
            market(p, q, alpha, h, r)
        })
}

pub fn arb_symmetric_market() -> impl Strategy<Value = MarketParams> {
    arb_market().prop_map(|m| m.with_arrivals(m.p(), m.p()).unwrap())
}

/// Long-run welfare of the threshold-`k` rule by propagating the exact queue
/// distribution from the empty state until the per-period expected welfare
/// settles. Written independently of the library's chain code.
pub fn propagated_welfare(m: &MarketParams, k: u32) -> f64 {
    let (p, q, h) = (m.p(), m.q(), m.h());
    let r = m.payoffs();
    let mut dist: HashMap<(u32, u32), f64> = HashMap::from([((0, 0), 1.0)]);
    let mut history: Vec<f64> = Vec::new();
    for t in 0..2_000_000 {
        let mut next: HashMap<(u32, u32), f64> = HashMap::new();
        let mut w = 0.0;
        for (&(xh, xl), &pr) in &dist {
            for (sup_h, ps) in [(true, p), (false, 1.0 - p)] {
                for (dem_h, pd) in [(true, q), (false, 1.0 - q)] {
                    let (mut a, mut b) = if sup_h { (xh + 1, xl) } else { (xh, xl + 1) };
                    let pay = if dem_h {
                        if a > 0 {
                            a -= 1;
                            r.r_hh
                        } else {
                            b -= 1;
                            r.r_lh
                        }
                    } else if b > 0 {
                        b -= 1;
                        r.r_ll
                    } else if a > k {
                        a -= 1;
                        r.r_hl
                    } else {
                        0.0
                    };
                    let mass = pr * ps * pd;
                    w += mass * (pay - h * f64::from(a + b));
                    *next.entry((a, b)).or_insert(0.0) += mass;
                }
            }
        }
        dist = next;
        // Settled once the value has not moved over a long window.
        if t >= 2000 && (w - history[t - 2000]).abs() < 1e-12 * (1.0 + w.abs()) {
            return w;
        }
        history.push(w);
    }
    panic!("propagation did not settle");
}

/// Stationary law on `{(k-j, j)}` by the detailed-balance ratio
/// `phi(j+1)/phi(j) = q(1-p) / (p(1-q))`.
pub fn balance_stationary(m: &MarketParams, k: u32) -> Vec<f64> {
    let ratio = m.q() * (1.0 - m.p()) / (m.p() * (1.0 - m.q()));
    let mut w = vec![1.0];
    for _ in 0..k {
        let last = *w.last().unwrap();
        w.push(last * ratio);
    }
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// `EW_L^1(z)` from the undifferenced system
/// `(u+d) E(z) - u E(z+1) - d E(z-1) = h`, `d E(k) - d E(k-1) = h`
/// (`u = p(1-q)`, `d = q(1-p)`), by the Thomas algorithm.
pub fn thomas_waiting_costs(m: &MarketParams, k_de: u32) -> Vec<f64> {
    let u = m.p() * (1.0 - m.q());
    let d = m.q() * (1.0 - m.p());
    let n = k_de as usize + 1;
    let (mut sub, mut diag, mut sup) = (vec![-d; n], vec![u + d; n], vec![-u; n]);
    sub[0] = 0.0;
    sup[n - 1] = 0.0;
    diag[n - 1] = d;
    let mut rhs = vec![m.h(); n];
    for i in 1..n {
        let w = sub[i] / diag[i - 1];
        diag[i] -= w * sup[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    let mut x = vec![0.0; n];
    x[n - 1] = rhs[n - 1] / diag[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = (rhs[i] - sup[i] * x[i + 1]) / diag[i];
    }
    x
}
