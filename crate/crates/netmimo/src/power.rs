//! Transmit power constraint structures.
//!
//! All three constraint families bound linear functions of the per-antenna
//! transmit powers: individual antennas, whole base stations, or the cluster
//! total. Each kind carries one dual multiplier per bounded quantity; this
//! module translates between that reduced multiplier vector and the full
//! per-antenna diagonal it represents.

use crate::error::{Error, Result};
use crate::linalg::RVec;

#[derive(Clone, Debug, PartialEq)]
pub enum PowerConstraint {
    /// One budget per transmit antenna across the cluster.
    PerAntenna { budgets: RVec },
    /// One budget per base station; `n_t` antennas per base station.
    PerBs { budgets: RVec, n_t: usize },
    /// A single budget on the total transmit power.
    Sum { budget: f64 },
}

impl PowerConstraint {
    /// Uniform per-antenna budgets with `bs_power` total at each of the `b`
    /// base stations.
    pub fn uniform_per_antenna(b: usize, n_t: usize, bs_power: f64) -> Self {
        PowerConstraint::PerAntenna {
            budgets: RVec::from_element(b * n_t, bs_power / n_t as f64),
        }
    }

    pub fn per_bs(b: usize, n_t: usize, bs_power: f64) -> Self {
        PowerConstraint::PerBs {
            budgets: RVec::from_element(b, bs_power),
            n_t,
        }
    }

    pub fn sum(b: usize, bs_power: f64) -> Self {
        PowerConstraint::Sum {
            budget: b as f64 * bs_power,
        }
    }

    pub fn validate(&self, n_t_total: usize) -> Result<()> {
        match self {
            PowerConstraint::PerAntenna { budgets } => {
                if budgets.len() != n_t_total {
                    return Err(Error::Config(format!(
                        "per-antenna budget length {} does not match {} antennas",
                        budgets.len(),
                        n_t_total
                    )));
                }
            }
            PowerConstraint::PerBs { budgets, n_t } => {
                if *n_t == 0 || budgets.len() * n_t != n_t_total {
                    return Err(Error::Config(format!(
                        "per-BS structure {}x{} does not match {} antennas",
                        budgets.len(),
                        n_t,
                        n_t_total
                    )));
                }
            }
            PowerConstraint::Sum { .. } => {}
        }
        if self.reduced_budgets().iter().any(|&p| !(p > 0.0)) {
            return Err(Error::Config("power budgets must be positive".into()));
        }
        Ok(())
    }

    /// Number of dual multipliers for this kind.
    pub fn reduced_len(&self) -> usize {
        match self {
            PowerConstraint::PerAntenna { budgets } => budgets.len(),
            PowerConstraint::PerBs { budgets, .. } => budgets.len(),
            PowerConstraint::Sum { .. } => 1,
        }
    }

    /// Budget vector in the reduced (multiplier) space.
    pub fn reduced_budgets(&self) -> RVec {
        match self {
            PowerConstraint::PerAntenna { budgets } => budgets.clone(),
            PowerConstraint::PerBs { budgets, .. } => budgets.clone(),
            PowerConstraint::Sum { budget } => RVec::from_element(1, *budget),
        }
    }

    pub fn total_budget(&self) -> f64 {
        self.reduced_budgets().sum()
    }

    /// Expands reduced multipliers into the full per-antenna diagonal.
    pub fn expand(&self, reduced: &RVec, n_t_total: usize) -> RVec {
        match self {
            PowerConstraint::PerAntenna { .. } => reduced.clone(),
            PowerConstraint::PerBs { n_t, .. } => {
                RVec::from_fn(n_t_total, |i, _| reduced[i / n_t])
            }
            PowerConstraint::Sum { .. } => RVec::from_element(n_t_total, reduced[0]),
        }
    }

    /// Collapses a per-antenna vector into the reduced space by summing over
    /// each multiplier's antennas (adjoint of `expand`).
    pub fn reduce(&self, per_antenna: &RVec) -> RVec {
        match self {
            PowerConstraint::PerAntenna { .. } => per_antenna.clone(),
            PowerConstraint::PerBs { budgets, n_t } => RVec::from_fn(budgets.len(), |b, _| {
                (0..*n_t).map(|t| per_antenna[b * n_t + t]).sum()
            }),
            PowerConstraint::Sum { .. } => RVec::from_element(1, per_antenna.sum()),
        }
    }

    /// Per-constraint slack (budget minus usage) for given antenna powers.
    pub fn slack(&self, antenna_powers: &RVec) -> RVec {
        self.reduced_budgets() - self.reduce(antenna_powers)
    }

    /// Most negative slack, as a nonnegative violation magnitude.
    pub fn max_violation(&self, antenna_powers: &RVec) -> f64 {
        -self
            .slack(antenna_powers)
            .iter()
            .fold(f64::INFINITY, |acc, &s| acc.min(s))
            .min(0.0)
    }

    pub fn kind_label(&self) -> &'static str {
        match self {
            PowerConstraint::PerAntenna { .. } => "per-antenna",
            PowerConstraint::PerBs { .. } => "per-bs",
            PowerConstraint::Sum { .. } => "sum",
        }
    }
}
