use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::fitness::DEFAULT_SEARCH_BUDGET;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackMode {
    /// A fixed "not correct yet" sentence.
    #[default]
    Coarse,
    /// A table of the key fields that still differ.
    Fine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ClockMode {
    #[default]
    Wall,
    /// Every backend call costs [`LOGICAL_CALL_COST`] and nothing else takes
    /// time; sessions become reproducible down to their timestamps.
    Logical,
}

pub const LOGICAL_CALL_COST: Duration = Duration::from_secs(1);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepairConfig {
    /// Maximum Repairer rounds.
    pub loop_budget: u32,
    #[serde(with = "duration_text")]
    pub time_budget: Duration,
    pub runs_k: u32,
    pub temperature: f64,
    pub feedback: FeedbackMode,
    /// Values tried per candidate attribute.
    pub search_budget: usize,
    /// Draws made by the combination fallback.
    pub n_samples: usize,
    pub seed: u64,
    /// Row label in reports.
    pub method: String,
    pub clock: ClockMode,
}

impl Default for RepairConfig {
    fn default() -> Self {
        Self {
            loop_budget: 10,
            time_budget: Duration::from_secs(120 * 60),
            runs_k: 5,
            temperature: 0.7,
            feedback: FeedbackMode::Coarse,
            search_budget: DEFAULT_SEARCH_BUDGET,
            n_samples: 10,
            seed: 0,
            method: "compat-repair".into(),
            clock: ClockMode::Wall,
        }
    }
}

impl RepairConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.loop_budget == 0 {
            return Err("loop budget must be positive".into());
        }
        if self.runs_k == 0 {
            return Err("k must be positive".into());
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(format!(
                "temperature {} is outside [0, 2]",
                self.temperature
            ));
        }
        if self.search_budget == 0 || self.n_samples == 0 {
            return Err("search budget and sample count must be positive".into());
        }
        Ok(())
    }
}

pub(crate) mod duration_text {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(&humantime::format_duration(*d))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let s = String::deserialize(d)?;
        humantime::parse_duration(&s).map_err(serde::de::Error::custom)
    }
}

/// Elapsed time for budget checks and log timestamps.
#[derive(Debug, Clone)]
pub(crate) enum Clock {
    Wall(Instant),
    Logical(Duration),
}

impl Clock {
    pub fn start(mode: ClockMode) -> Self {
        match mode {
            ClockMode::Wall => Clock::Wall(Instant::now()),
            ClockMode::Logical => Clock::Logical(Duration::ZERO),
        }
    }

    pub fn elapsed(&self) -> Duration {
        match self {
            Clock::Wall(t) => t.elapsed(),
            Clock::Logical(d) => *d,
        }
    }

    pub fn backend_call(&mut self) {
        if let Clock::Logical(d) = self {
            *d += LOGICAL_CALL_COST;
        }
    }
}
