//! Experiment configuration: a flat TOML file with documented keys.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::FadingParams;
use crate::dual::SolveOptions;
use crate::error::{Error, Result};
use crate::linalg::RVec;
use crate::power::PowerConstraint;

/// Precoding schemes a run can compare side by side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Water-filling BD under a sum budget, uniformly scaled down when the
    /// run's constraint kind demands it.
    Conventional,
    OptimalPerAntenna,
    OptimalPerBs,
    OptimalSum,
}

impl Scheme {
    pub fn label(&self) -> &'static str {
        match self {
            Scheme::Conventional => "conventional",
            Scheme::OptimalPerAntenna => "optimal-per-antenna",
            Scheme::OptimalPerBs => "optimal-per-bs",
            Scheme::OptimalSum => "optimal-sum",
        }
    }
}

/// Constraint kind the conventional scheme is made feasible for (and the
/// default kind for single-scheme tooling).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintKind {
    PerAntenna,
    PerBs,
    Sum,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedulerKind {
    Msr,
    Pf,
}

/// Rate evaluator the greedy selection stage uses per candidate subset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GreedyEvaluator {
    /// Fast conventional-BD water-filling rates.
    Conventional,
    /// Full dual solve per candidate; slow, for cross-checking selection.
    Optimal,
}

fn default_cluster_size() -> usize {
    3
}
fn default_n_t() -> usize {
    4
}
fn default_n_r() -> usize {
    2
}
fn default_users_per_cell() -> usize {
    10
}
fn default_bs_power() -> f64 {
    1.0
}
fn default_constraint() -> ConstraintKind {
    ConstraintKind::PerAntenna
}
fn default_schemes() -> Vec<Scheme> {
    vec![Scheme::OptimalPerAntenna]
}
fn default_scheduler() -> SchedulerKind {
    SchedulerKind::Msr
}
fn default_pf_window_slots() -> f64 {
    10.0
}
fn default_slots_per_drop() -> usize {
    100
}
fn default_drops() -> usize {
    100
}
fn default_master_seed() -> u64 {
    1
}
fn default_workers() -> usize {
    0
}
fn default_path_loss_exponent() -> f64 {
    3.8
}
fn default_shadowing_std_db() -> f64 {
    8.0
}
fn default_reference_snr_db() -> f64 {
    20.0
}
fn default_cell_radius_km() -> f64 {
    1.0
}
fn default_solver_max_iter() -> usize {
    500
}
fn default_solver_tol_kkt() -> f64 {
    1e-6
}
fn default_solver_tol_gap() -> f64 {
    1e-5
}
fn default_greedy_evaluator() -> GreedyEvaluator {
    GreedyEvaluator::Conventional
}
fn default_trace_drops() -> usize {
    0
}
fn default_output_dir() -> String {
    "results".to_string()
}

/// One Monte Carlo experiment. Every key has a default; see
/// `configs/example.toml` for a commented file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Cells per coordinated cluster: 1, 3 or 7.
    #[serde(default = "default_cluster_size")]
    pub cluster_size: usize,
    /// Transmit antennas per base station.
    #[serde(default = "default_n_t")]
    pub n_t: usize,
    /// Receive antennas per user.
    #[serde(default = "default_n_r")]
    pub n_r: usize,
    #[serde(default = "default_users_per_cell")]
    pub users_per_cell: usize,
    /// Noise-normalized power budget per base station.
    #[serde(default = "default_bs_power")]
    pub bs_power: f64,
    /// Constraint kind the conventional scheme must satisfy.
    #[serde(default = "default_constraint")]
    pub constraint: ConstraintKind,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<Scheme>,
    #[serde(default = "default_scheduler")]
    pub scheduler: SchedulerKind,
    /// Proportional-fair averaging window, in slots.
    #[serde(default = "default_pf_window_slots")]
    pub pf_window_slots: f64,
    /// Scheduling slots per drop (PF only; MSR runs one slot).
    #[serde(default = "default_slots_per_drop")]
    pub slots_per_drop: usize,
    #[serde(default = "default_drops")]
    pub drops: usize,
    #[serde(default = "default_master_seed")]
    pub master_seed: u64,
    /// Parallel drop workers; 0 picks the machine default.
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_path_loss_exponent")]
    pub path_loss_exponent: f64,
    #[serde(default = "default_shadowing_std_db")]
    pub shadowing_std_db: f64,
    #[serde(default = "default_reference_snr_db")]
    pub reference_snr_db: f64,
    #[serde(default = "default_cell_radius_km")]
    pub cell_radius_km: f64,
    #[serde(default = "default_solver_max_iter")]
    pub solver_max_iter: usize,
    #[serde(default = "default_solver_tol_kkt")]
    pub solver_tol_kkt: f64,
    #[serde(default = "default_solver_tol_gap")]
    pub solver_tol_gap: f64,
    #[serde(default = "default_greedy_evaluator")]
    pub greedy_evaluator: GreedyEvaluator,
    /// Record solver convergence traces for the first N drops (MSR runs).
    #[serde(default = "default_trace_drops")]
    pub trace_drops: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config populates every default")
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if ![1, 3, 7].contains(&self.cluster_size) {
            return Err(Error::Config(format!(
                "cluster_size must be 1, 3 or 7, got {}",
                self.cluster_size
            )));
        }
        for (name, value) in [
            ("n_t", self.n_t),
            ("n_r", self.n_r),
            ("users_per_cell", self.users_per_cell),
            ("drops", self.drops),
        ] {
            if value == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if !(self.bs_power > 0.0) {
            return Err(Error::Config(format!(
                "bs_power must be positive, got {}",
                self.bs_power
            )));
        }
        if self.schemes.is_empty() {
            return Err(Error::Config("schemes must not be empty".into()));
        }
        let mut seen = Vec::new();
        for s in &self.schemes {
            if seen.contains(s) {
                return Err(Error::Config(format!(
                    "schemes lists {} twice",
                    s.label()
                )));
            }
            seen.push(*s);
        }
        if self.k_max() == 0 {
            return Err(Error::Config(format!(
                "n_r = {} exceeds the {} transmit antennas of the cluster",
                self.n_r,
                self.n_t_total()
            )));
        }
        if self.scheduler == SchedulerKind::Pf {
            if self.slots_per_drop == 0 {
                return Err(Error::Config("slots_per_drop must be at least 1".into()));
            }
            if !(self.pf_window_slots >= 1.0) {
                return Err(Error::Config(format!(
                    "pf_window_slots must be at least 1, got {}",
                    self.pf_window_slots
                )));
            }
        }
        if self.solver_max_iter == 0 {
            return Err(Error::Config("solver_max_iter must be at least 1".into()));
        }
        if !(self.solver_tol_kkt > 0.0) || !(self.solver_tol_gap > 0.0) {
            return Err(Error::Config(
                "solver_tol_kkt and solver_tol_gap must be positive".into(),
            ));
        }
        if self.trace_drops > self.drops {
            return Err(Error::Config(format!(
                "trace_drops = {} exceeds drops = {}",
                self.trace_drops, self.drops
            )));
        }
        self.fading().validate()?;
        Ok(())
    }

    pub fn fading(&self) -> FadingParams {
        FadingParams {
            path_loss_exponent: self.path_loss_exponent,
            shadowing_std_db: self.shadowing_std_db,
            reference_snr_db: self.reference_snr_db,
            cell_radius_km: self.cell_radius_km,
        }
    }

    pub fn n_t_total(&self) -> usize {
        self.cluster_size * self.n_t
    }

    pub fn k_max(&self) -> usize {
        self.n_t_total() / self.n_r
    }

    pub fn total_budget(&self) -> f64 {
        self.cluster_size as f64 * self.bs_power
    }

    /// Full per-antenna budget vector; also the worst-case interference
    /// power assumed by whitening.
    pub fn per_antenna_budget(&self) -> RVec {
        RVec::from_element(self.n_t_total(), self.bs_power / self.n_t as f64)
    }

    pub fn constraint_of_kind(&self, kind: ConstraintKind) -> PowerConstraint {
        match kind {
            ConstraintKind::PerAntenna => {
                PowerConstraint::uniform_per_antenna(self.cluster_size, self.n_t, self.bs_power)
            }
            ConstraintKind::PerBs => {
                PowerConstraint::per_bs(self.cluster_size, self.n_t, self.bs_power)
            }
            ConstraintKind::Sum => PowerConstraint::sum(self.cluster_size, self.bs_power),
        }
    }

    /// The constraint an optimal scheme solves under; `None` for the
    /// conventional scheme, which natively handles only a sum budget.
    pub fn scheme_constraint(&self, scheme: Scheme) -> Option<PowerConstraint> {
        match scheme {
            Scheme::Conventional => None,
            Scheme::OptimalPerAntenna => Some(self.constraint_of_kind(ConstraintKind::PerAntenna)),
            Scheme::OptimalPerBs => Some(self.constraint_of_kind(ConstraintKind::PerBs)),
            Scheme::OptimalSum => Some(self.constraint_of_kind(ConstraintKind::Sum)),
        }
    }

    pub fn solver_options(&self) -> SolveOptions {
        SolveOptions {
            max_iter: self.solver_max_iter,
            tol_kkt: self.solver_tol_kkt,
            tol_gap: self.solver_tol_gap,
            record_trace: false,
        }
    }
}
