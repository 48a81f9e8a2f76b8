use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemandShape {
    Uniform,
    Increasing,
    Decreasing,
    Concave,
    Convex,
}

impl DemandShape {
    pub const ALL: [DemandShape; 5] =
        [Self::Uniform, Self::Increasing, Self::Decreasing, Self::Concave, Self::Convex];

    pub fn name(self) -> &'static str {
        match self {
            Self::Uniform => "uniform",
            Self::Increasing => "increasing",
            Self::Decreasing => "decreasing",
            Self::Concave => "concave",
            Self::Convex => "convex",
        }
    }
}

/// Demand density over `[0, horizon]` in passengers per minute, plus an
/// initial queue released at time zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemandPattern {
    pub shape: DemandShape,
    pub q_min: f64,
    pub q_max: f64,
    #[serde(default)]
    pub initial_queue: f64,
}

impl DemandPattern {
    pub fn new(shape: DemandShape, q_min: f64, q_max: f64) -> Self {
        Self { shape, q_min, q_max, initial_queue: 0.0 }
    }

    pub fn with_initial_queue(mut self, q0: f64) -> Self {
        self.initial_queue = q0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q_min >= 0.0 && self.q_min <= self.q_max && self.q_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "demand needs 0 <= q_min <= q_max, got {} and {}",
                self.q_min, self.q_max
            )));
        }
        if !(self.initial_queue >= 0.0) {
            return Err(Error::InvalidParameter("initial queue must be nonnegative".into()));
        }
        Ok(())
    }

    /// Density at `t`, with `t` clamped into the horizon.
    pub fn density(&self, t: f64, horizon: f64) -> f64 {
        let s = (t / horizon).clamp(0.0, 1.0);
        let d = self.q_max - self.q_min;
        match self.shape {
            DemandShape::Uniform => 0.5 * (self.q_min + self.q_max),
            DemandShape::Increasing => self.q_min + d * s,
            DemandShape::Decreasing => self.q_max - d * s,
            DemandShape::Concave => self.q_min + 4.0 * d * s * (1.0 - s),
            DemandShape::Convex => self.q_max - 4.0 * d * s * (1.0 - s),
        }
    }

    fn antiderivative(&self, t: f64, horizon: f64) -> f64 {
        let t = t.clamp(0.0, horizon);
        let s = t / horizon;
        let d = self.q_max - self.q_min;
        let bump = horizon * 4.0 * d * (s * s / 2.0 - s * s * s / 3.0);
        match self.shape {
            DemandShape::Uniform => 0.5 * (self.q_min + self.q_max) * t,
            DemandShape::Increasing => self.q_min * t + d * horizon * s * s / 2.0,
            DemandShape::Decreasing => self.q_max * t - d * horizon * s * s / 2.0,
            DemandShape::Concave => self.q_min * t + bump,
            DemandShape::Convex => self.q_max * t - bump,
        }
    }

    /// Passengers arriving over `[t1, t2]` from the density alone.
    pub fn flow(&self, t1: f64, t2: f64, horizon: f64) -> f64 {
        self.antiderivative(t2, horizon) - self.antiderivative(t1, horizon)
    }
}

pub fn demand_density(pattern: &DemandPattern, t: f64, horizon: f64) -> f64 {
    pattern.density(t, horizon)
}

/// `Q(t1, t2)`: the exact integral of the density, plus the initial queue
/// when the window starts at zero.
pub fn integrate_demand(pattern: &DemandPattern, t1: f64, t2: f64, horizon: f64) -> Result<f64> {
    if t1 > t2 {
        return Err(Error::InvalidParameter(format!("demand window [{t1}, {t2}] is reversed")));
    }
    let q0 = if t1 == 0.0 { pattern.initial_queue } else { 0.0 };
    Ok(pattern.flow(t1, t2, horizon) + q0)
}
