use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    /// Capacity with and without the cap, one versus four transmit antennas.
    #[serde(rename = "fig2-capacity", alias = "fig2")]
    Capacity,
    /// Direct versus projected SVD precoding against capacity.
    #[serde(rename = "fig3-svd", alias = "fig3")]
    Svd,
    /// Hybrid precoding for each number of projected directions.
    #[serde(rename = "fig4-hybrid-b", alias = "fig4")]
    HybridB,
    /// Structured precoders as the number of primary receivers grows.
    #[serde(rename = "fig5-vs-K", alias = "fig5")]
    VersusK,
    /// Parallel tones under one power budget.
    #[serde(rename = "fig6-multitone", alias = "fig6")]
    Multitone,
    #[serde(rename = "custom")]
    Custom,
}

impl Scenario {
    pub const ALL: [Scenario; 6] =
        [Scenario::Capacity, Scenario::Svd, Scenario::HybridB, Scenario::VersusK, Scenario::Multitone, Scenario::Custom];

    pub fn id(self) -> &'static str {
        match self {
            Scenario::Capacity => "fig2-capacity",
            Scenario::Svd => "fig3-svd",
            Scenario::HybridB => "fig4-hybrid-b",
            Scenario::VersusK => "fig5-vs-K",
            Scenario::Multitone => "fig6-multitone",
            Scenario::Custom => "custom",
        }
    }

    fn short(self) -> &'static str {
        match self {
            Scenario::Capacity => "fig2",
            Scenario::Svd => "fig3",
            Scenario::HybridB => "fig4",
            Scenario::VersusK => "fig5",
            Scenario::Multitone => "fig6",
            Scenario::Custom => "custom",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.id().eq_ignore_ascii_case(s) || sc.short().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown scenario {s:?}")))
    }
}

/// `n` powers spaced evenly in dB from `min` to `max`.
pub fn log_grid(min: f64, max: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![min],
        _ => {
            let (a, b) = (min.log10(), max.log10());
            (0..n).map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64)).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub mts: usize,
    pub mrs: usize,
    /// Number of primary receivers.
    pub k: usize,
    /// Receive antennas per primary receiver.
    pub mk: usize,
    pub pt_grid: Vec<f64>,
    /// Interference cap at every primary receiver (per tone for multitone runs).
    pub gamma: f64,
    pub trials: usize,
    pub seed: u64,
    pub var_g: f64,
    pub var_h: f64,
    pub tones: usize,
    pub taps: usize,
    /// Primary-receiver counts swept by the versus-K scenario.
    pub k_values: Vec<usize>,
}

impl ScenarioConfig {
    pub fn preset(scenario: Scenario) -> Self {
        let mut c = ScenarioConfig {
            scenario,
            mts: 2,
            mrs: 2,
            k: 1,
            mk: 1,
            pt_grid: log_grid(1.0, 100.0, 5),
            gamma: 0.1,
            trials: 200,
            seed: 42,
            var_g: 0.1,
            var_h: 1.0,
            tones: 64,
            taps: 4,
            k_values: (2..=10).collect(),
        };
        match scenario {
            Scenario::Capacity => {
                c.mts = 4;
                c.mrs = 1;
                c.gamma = 0.01;
            }
            Scenario::HybridB => {
                c.mts = 4;
                c.mrs = 4;
                c.k = 2;
            }
            Scenario::VersusK => {
                c.mts = 4;
                c.mrs = 4;
                c.gamma = 0.01;
                c.pt_grid = vec![10.0];
            }
            Scenario::Svd | Scenario::Multitone | Scenario::Custom => {}
        }
        c
    }

    /// Preset for the named scenario overlaid with whatever fields the JSON sets.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut given: serde_json::Value = serde_json::from_str(text)?;
        let obj = given
            .as_object_mut()
            .ok_or_else(|| Error::InvalidArgument("config must be a JSON object".into()))?;
        let scenario = match obj.get("scenario") {
            Some(v) => serde_json::from_value(v.clone())?,
            None => Scenario::Custom,
        };
        let mut merged = serde_json::to_value(Self::preset(scenario))?;
        let base = merged.as_object_mut().expect("config serializes to an object");
        for (k, v) in std::mem::take(obj) {
            if k != "scenario" {
                base.insert(k, v);
            }
        }
        let cfg: Self = serde_json::from_value(merged)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.pt_grid.is_empty() || self.pt_grid.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
            return bad(format!("power grid must be non-empty, positive and finite: {:?}", self.pt_grid));
        }
        if self.pt_grid.windows(2).any(|w| w[1] <= w[0]) {
            return bad(format!("power grid must be strictly increasing: {:?}", self.pt_grid));
        }
        if self.mts == 0 || self.mrs == 0 || self.mk == 0 {
            return bad("antenna counts must be positive".into());
        }
        if !(self.gamma >= 0.0) || !(self.var_g > 0.0) || !(self.var_h > 0.0) {
            return bad("gamma must be non-negative and channel variances positive".into());
        }
        match self.scenario {
            Scenario::Multitone if self.taps == 0 || self.taps > self.tones => {
                bad(format!("need 1 <= taps <= tones, got {} and {}", self.taps, self.tones))
            }
            Scenario::Multitone if self.mts < 2 => bad("multitone runs need at least two transmit antennas".into()),
            Scenario::VersusK if self.k_values.is_empty() || self.k_values.contains(&0) => {
                bad("k_values must be non-empty and positive".into())
            }
            _ => Ok(()),
        }
    }
}
