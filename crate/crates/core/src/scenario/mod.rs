//! Scenario files: network, OD demand, disruption, costs and time grid.

mod demand;
mod duration;

use std::collections::BTreeMap;
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{self, LineSpec, NetworkSpec, OdPair, TransitNetwork};

pub use demand::{demand_density, integrate_demand, DemandPattern, DemandShape};
pub use duration::{build_distribution, conditional_mean_duration, steps, DurationDistribution, DurationKind, TIME_TOL};

/// Named relocation cost totals in $.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CostPreset {
    /// Bus line transfer.
    #[serde(rename = "BLT")]
    Blt,
    /// Bus backup transfer.
    #[serde(rename = "BBT")]
    Bbt,
    /// Metro line transfer.
    #[serde(rename = "MLT")]
    Mlt,
    /// Metro short-turn.
    #[serde(rename = "MST")]
    Mst,
}

impl CostPreset {
    pub fn total(self) -> f64 {
        match self {
            Self::Blt => 100.0,
            Self::Bbt => 300.0,
            Self::Mlt => 200.0,
            Self::Mst => 0.0,
        }
    }
}

/// Cost components of moving one vehicle between lines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostComponents {
    #[serde(default)]
    pub c0: f64,
    #[serde(default)]
    pub c_bar: f64,
    #[serde(default)]
    pub gamma_d: f64,
    /// Diversion travel time in minutes.
    #[serde(default)]
    pub t_d: f64,
}

impl CostComponents {
    pub fn total(&self) -> f64 {
        self.c0 + self.c_bar + self.gamma_d * self.t_d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RelocationCost {
    Preset(CostPreset),
    Components(CostComponents),
}

impl RelocationCost {
    pub fn total(&self) -> f64 {
        match self {
            Self::Preset(p) => p.total(),
            Self::Components(c) => c.total(),
        }
    }

    pub fn diversion_time(&self) -> f64 {
        match self {
            Self::Preset(_) => 0.0,
            Self::Components(c) => c.t_d,
        }
    }

    fn validate(&self) -> Result<()> {
        if let Self::Components(c) = self {
            if [c.c0, c.c_bar, c.gamma_d, c.t_d].iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::InvalidParameter("relocation cost components must be nonnegative".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArcClass {
    /// A regular line feeding one of its own short-turn lines.
    ShortTurn,
    /// Any other line-to-line move.
    LineTransfer,
    /// Vehicles leaving a backup depot.
    BackupTransfer,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeCosts {
    #[serde(default)]
    pub short_turn: Option<RelocationCost>,
    #[serde(default)]
    pub line_transfer: Option<RelocationCost>,
    #[serde(default)]
    pub backup_transfer: Option<RelocationCost>,
}

impl ModeCosts {
    pub fn get(&self, class: ArcClass) -> Option<RelocationCost> {
        match class {
            ArcClass::ShortTurn => self.short_turn.or(self.line_transfer),
            ArcClass::LineTransfer => self.line_transfer,
            ArcClass::BackupTransfer => self.backup_transfer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    /// Operator-cost weight.
    pub alpha: f64,
    /// Value of time in $ per minute.
    pub beta: f64,
    /// Wait penalty multiplier.
    pub gamma: f64,
    /// Per-mode relocation costs.
    #[serde(default)]
    pub relocation: BTreeMap<String, ModeCosts>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub t_bar: f64,
    pub delta: f64,
    pub itm_interval: f64,
    pub sim_interval: f64,
    #[serde(default)]
    pub deterministic_t: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdSpec {
    pub origin: String,
    pub destination: String,
    pub pattern: DemandShape,
    pub q_min: f64,
    pub q_max: f64,
    #[serde(default, rename = "q0")]
    pub initial_queue: f64,
}

fn both() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrokenLink {
    pub line: String,
    pub from: String,
    pub to: String,
    #[serde(default = "both")]
    pub both_directions: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisruptionSpec {
    #[serde(default)]
    pub broken: Vec<BrokenLink>,
    #[serde(default)]
    pub emergency_lines: Vec<LineSpec>,
    pub duration: DurationKind,
}

fn default_epsilon() -> f64 {
    0.01
}

/// The on-disk scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub network: NetworkSpec,
    pub odpairs: Vec<OdSpec>,
    pub disruption: DisruptionSpec,
    pub costs: CostSpec,
    pub time: TimeSpec,
    /// Smallest fleet a served line may carry.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

/// Undisrupted and disrupted networks of a scenario.
#[derive(Debug, Clone)]
pub struct Networks {
    pub normal: TransitNetwork,
    pub disrupted: TransitNetwork,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let scenario: Scenario = serde_json::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: impl AsRef<FsPath>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.costs;
        if !(c.alpha > 0.0 && c.beta > 0.0 && c.gamma > 0.0) {
            return Err(Error::InvalidParameter("alpha, beta and gamma must be positive".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter("epsilon must be positive".into()));
        }
        let t = &self.time;
        steps(t.t_bar, t.delta, "time.delta")?;
        steps(t.t_bar, t.itm_interval, "time.itm_interval")?;
        steps(t.t_bar, t.sim_interval, "time.sim_interval")?;
        if let Some(dt) = t.deterministic_t {
            if !(dt > 0.0 && dt <= t.t_bar) {
                return Err(Error::InvalidParameter("time.deterministic_t must lie in (0, t_bar]".into()));
            }
        }
        if self.odpairs.is_empty() {
            return Err(Error::InvalidParameter("scenario lists no OD pairs".into()));
        }
        for od in &self.odpairs {
            if od.origin == od.destination {
                return Err(Error::DegenerateOd(od.origin.clone()));
            }
            self.pattern_of(od).validate()?;
        }
        for costs in self.costs.relocation.values() {
            for class in [ArcClass::ShortTurn, ArcClass::LineTransfer, ArcClass::BackupTransfer] {
                if let Some(rc) = costs.get(class) {
                    rc.validate()?;
                }
            }
        }
        self.duration()?;
        Ok(())
    }

    fn pattern_of(&self, od: &OdSpec) -> DemandPattern {
        DemandPattern::new(od.pattern, od.q_min, od.q_max).with_initial_queue(od.initial_queue)
    }

    pub fn od_pairs(&self) -> Vec<OdPair> {
        self.odpairs.iter().map(|o| OdPair::new(&o.origin, &o.destination)).collect()
    }

    pub fn patterns(&self) -> Vec<DemandPattern> {
        self.odpairs.iter().map(|o| self.pattern_of(o)).collect()
    }

    /// `Q_w(t1, t2)` for every OD, on the scenario horizon.
    pub fn demand(&self, t1: f64, t2: f64) -> Vec<f64> {
        self.patterns()
            .iter()
            .map(|p| integrate_demand(p, t1, t2, self.time.t_bar).expect("ordered window"))
            .collect()
    }

    pub fn duration(&self) -> Result<DurationDistribution> {
        build_distribution(&self.disruption.duration, self.time.t_bar, self.time.delta)
    }

    pub fn broken_segment_ids(&self) -> Vec<String> {
        let mut ids = Vec::new();
        for b in &self.disruption.broken {
            ids.push(network::segment_id(&b.line, &b.from, &b.to));
            if b.both_directions {
                ids.push(network::segment_id(&b.line, &b.to, &b.from));
            }
        }
        ids
    }

    pub fn networks(&self) -> Result<Networks> {
        let normal = network::build_network(&self.network, &self.od_pairs())?;
        let disrupted =
            network::apply_disruption(&normal, &self.broken_segment_ids(), &self.disruption.emergency_lines)?;
        Ok(Networks { normal, disrupted })
    }

    /// Copy with every OD switched to `shape`.
    pub fn with_demand_shape(&self, shape: DemandShape) -> Self {
        let mut out = self.clone();
        out.odpairs.iter_mut().for_each(|o| o.pattern = shape);
        out
    }

    /// Copy with a new duration distribution; a declared planning duration
    /// is dropped so the fixed-duration model plans for the new pmf's mean.
    pub fn with_duration(&self, kind: DurationKind) -> Self {
        let mut out = self.clone();
        out.disruption.duration = kind;
        out.time.deterministic_t = None;
        out
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.costs.alpha = alpha;
        out
    }

    /// Duration the fixed-duration model plans for: the declared value, else the pmf mean.
    pub fn planning_duration(&self) -> Result<f64> {
        match self.time.deterministic_t {
            Some(t) => Ok(t),
            None => Ok(self.duration()?.mean()),
        }
    }
}
