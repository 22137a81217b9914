//! Market parameters from a JSON file and flags; flags win.

use std::path::PathBuf;

use clap::Args;
use dynmatch::{validate, MarketParams, RawParams};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Default, Args)]
pub struct ParamArgs {
    /// JSON file with any of p, q, alpha, h, rHH, rHL, rLH, rLL
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Probability that arriving supply is H-type
    #[arg(long)]
    pub p: Option<f64>,
    /// Probability that arriving demand is H-type
    #[arg(long)]
    pub q: Option<f64>,
    /// Supply's share of the match payoff
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Waiting cost per supply agent per period
    #[arg(long)]
    pub h: Option<f64>,
    /// Match payoff of an (H supply, H demand) pair
    #[arg(long = "rHH")]
    pub r_hh: Option<f64>,
    /// Match payoff of an (H supply, L demand) pair
    #[arg(long = "rHL")]
    pub r_hl: Option<f64>,
    /// Match payoff of an (L supply, H demand) pair
    #[arg(long = "rLH")]
    pub r_lh: Option<f64>,
    /// Match payoff of an (L supply, L demand) pair
    #[arg(long = "rLL")]
    pub r_ll: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileParams {
    p: Option<f64>,
    q: Option<f64>,
    alpha: Option<f64>,
    h: Option<f64>,
    #[serde(rename = "rHH")]
    r_hh: Option<f64>,
    #[serde(rename = "rHL")]
    r_hl: Option<f64>,
    #[serde(rename = "rLH")]
    r_lh: Option<f64>,
    #[serde(rename = "rLL")]
    r_ll: Option<f64>,
}

impl ParamArgs {
    pub fn resolve(&self) -> Result<MarketParams, CliError> {
        let file = match &self.config {
            None => FileParams::default(),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Invalid(format!("cannot read {}: {e}", path.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Invalid(format!("bad config {}: {e}", path.display())))?
            }
        };
        let pick = |name: &str, flag: Option<f64>, from_file: Option<f64>| {
            flag.or(from_file)
                .ok_or_else(|| CliError::Invalid(format!("missing parameter {name} (give --{name} or set it in --config)")))
        };
        let raw = RawParams {
            p: pick("p", self.p, file.p)?,
            q: pick("q", self.q, file.q)?,
            alpha: pick("alpha", self.alpha, file.alpha)?,
            h: pick("h", self.h, file.h)?,
            r_hh: pick("rHH", self.r_hh, file.r_hh)?,
            r_hl: pick("rHL", self.r_hl, file.r_hl)?,
            r_lh: pick("rLH", self.r_lh, file.r_lh)?,
            r_ll: pick("rLL", self.r_ll, file.r_ll)?,
        };
        Ok(validate(&raw)?)
    }
}
