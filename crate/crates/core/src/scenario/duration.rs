use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for comparing durations on the discretized time grid.
pub const TIME_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", deny_unknown_fields)]
pub enum DurationKind {
    Dirac0,
    DiracTbar,
    BiDirac,
    Uniform,
    NormalLike {
        #[serde(default)]
        mean: Option<f64>,
        #[serde(default)]
        sd: Option<f64>,
    },
    ExponentialLike {
        #[serde(default)]
        mean: Option<f64>,
    },
    Custom {
        pmf: Vec<f64>,
    },
}

impl DurationKind {
    pub fn normal_like() -> Self {
        Self::NormalLike { mean: None, sd: None }
    }

    pub fn exponential_like() -> Self {
        Self::ExponentialLike { mean: None }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Dirac0 => "dirac0",
            Self::DiracTbar => "diracTbar",
            Self::BiDirac => "biDirac",
            Self::Uniform => "uniform",
            Self::NormalLike { .. } => "normalLike",
            Self::ExponentialLike { .. } => "exponentialLike",
            Self::Custom { .. } => "custom",
        }
    }
}

/// Discrete pmf over disruption lengths `Δ, 2Δ, …, T̄`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationDistribution {
    pub support: Vec<f64>,
    pub pmf: Vec<f64>,
}

/// Number of whole `step`s in `span`, or an error when `step` does not divide it.
pub fn steps(span: f64, step: f64, what: &str) -> Result<usize> {
    if !(step > 0.0 && span > 0.0) {
        return Err(Error::InvalidParameter(format!("{what}: nonpositive interval")));
    }
    let n = (span / step).round();
    if (n * step - span).abs() > 1e-9 * span.max(1.0) || n < 1.0 {
        return Err(Error::InvalidParameter(format!("{what}: {step} does not divide {span}")));
    }
    Ok(n as usize)
}

pub fn build_distribution(kind: &DurationKind, t_bar: f64, delta: f64) -> Result<DurationDistribution> {
    let n = steps(t_bar, delta, "duration support")?;
    let support: Vec<f64> = (1..=n).map(|k| k as f64 * delta).collect();
    let mut pmf = vec![0.0; n];
    match kind {
        DurationKind::Dirac0 => pmf[0] = 1.0,
        DurationKind::DiracTbar => pmf[n - 1] = 1.0,
        DurationKind::BiDirac => {
            pmf[0] += 0.5;
            pmf[n - 1] += 0.5;
        }
        DurationKind::Uniform => pmf.iter_mut().for_each(|g| *g = 1.0 / n as f64),
        DurationKind::NormalLike { mean, sd } => {
            let mu = mean.unwrap_or(t_bar / 2.0);
            let sigma = sd.unwrap_or(t_bar / 6.0);
            if !(sigma > 0.0) {
                return Err(Error::InvalidParameter("normalLike needs sd > 0".into()));
            }
            for (g, t) in pmf.iter_mut().zip(&support) {
                let z = (t - mu) / sigma;
                *g = (-0.5 * z * z).exp();
            }
        }
        DurationKind::ExponentialLike { mean } => {
            let m = mean.unwrap_or(t_bar / 4.0);
            let rho = delta / m;
            if !(rho > 0.0 && rho <= 1.0) {
                return Err(Error::InvalidParameter(format!("exponentialLike mean {m} must be at least {delta}")));
            }
            for (k, g) in pmf.iter_mut().enumerate() {
                *g = (1.0 - rho).powi(k as i32) * rho;
            }
        }
        DurationKind::Custom { pmf: given } => {
            if given.len() != n {
                return Err(Error::InvalidParameter(format!("custom pmf has {} entries, expected {n}", given.len())));
            }
            if given.iter().any(|g| !(*g >= 0.0)) {
                return Err(Error::InvalidParameter("custom pmf has negative mass".into()));
            }
            let total: f64 = given.iter().sum();
            if (total - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidParameter(format!("custom pmf sums to {total}")));
            }
            pmf.copy_from_slice(given);
        }
    }
    let total: f64 = pmf.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidParameter("duration pmf has no mass on the support".into()));
    }
    pmf.iter_mut().for_each(|g| *g /= total);
    Ok(DurationDistribution { support, pmf })
}

impl DurationDistribution {
    /// A single atom at `t`.
    pub fn point(t: f64) -> Self {
        Self { support: vec![t], pmf: vec![1.0] }
    }

    /// Atoms with positive mass.
    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.support.iter().copied().zip(self.pmf.iter().copied()).filter(|(_, g)| *g > 0.0)
    }

    pub fn mean(&self) -> f64 {
        self.atoms().map(|(t, g)| t * g).sum()
    }

    pub fn max_support(&self) -> f64 {
        self.atoms().map(|(t, _)| t).fold(0.0, f64::max)
    }

    /// `P(T ≥ z)`.
    pub fn survival(&self, z: f64) -> f64 {
        self.atoms().filter(|(t, _)| *t >= z - TIME_TOL).map(|(_, g)| g).sum()
    }

    /// `P(T > z)`.
    pub fn survival_strict(&self, z: f64) -> f64 {
        self.atoms().filter(|(t, _)| *t > z + TIME_TOL).map(|(_, g)| g).sum()
    }

    /// `E[T | T > z]`, when the event has positive probability.
    pub fn conditional_mean_after(&self, z: f64) -> Option<f64> {
        let mass = self.survival_strict(z);
        (mass > 0.0).then(|| self.atoms().filter(|(t, _)| *t > z + TIME_TOL).map(|(t, g)| t * g).sum::<f64>() / mass)
    }

    pub fn total_mass(&self) -> f64 {
        self.pmf.iter().sum()
    }
}

/// `E[T | T ≥ z]`.
pub fn conditional_mean_duration(dist: &DurationDistribution, z: f64) -> Result<f64> {
    let mass = dist.survival(z);
    if mass <= 0.0 {
        return Err(Error::InitiationBeyondSupport(z));
    }
    Ok(dist.atoms().filter(|(t, _)| *t >= z - TIME_TOL).map(|(t, g)| t * g).sum::<f64>() / mass)
}
