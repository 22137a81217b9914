//! Shared fixtures for the benchmarks.

use dynmatch::{MarketParams, PayoffMatrix};

/// The symmetric reference market: `p = q = 0.5`, `alpha = 0.2`, `h = 10`.
pub fn reference_market() -> MarketParams {
    MarketParams::new(0.5, 0.5, 0.2, 10.0, PayoffMatrix::new(800.0, 50.0, 50.0, 0.0))
        .expect("reference parameters are valid")
}

/// An asymmetric market with `p < q`.
pub fn skewed_market() -> MarketParams {
    MarketParams::new(0.4, 0.6, 0.5, 2.0, PayoffMatrix::new(900.0, 300.0, 200.0, 20.0))
        .expect("skewed parameters are valid")
}
