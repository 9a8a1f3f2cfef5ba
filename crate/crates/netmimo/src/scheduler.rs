//! Greedy user selection and proportional-fair bookkeeping.
//!
//! Selection and precoder optimization run as separate stages: the greedy
//! pass ranks candidate subsets with a cheap rate evaluator, then the caller
//! optimizes precoders for the final set only.

/// Floor on average throughput so never-served users keep finite weight.
pub const THROUGHPUT_FLOOR: f64 = 1e-6;

/// Per-user proportional-fair state: exponentially averaged throughput over
/// a sliding window of `window` slots, and the resulting scheduling weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleState {
    pub avg_throughput: Vec<f64>,
    pub weights: Vec<f64>,
    pub window: f64,
    pub slot: u64,
}

impl ScheduleState {
    pub fn new(num_users: usize, window: f64) -> Self {
        ScheduleState {
            avg_throughput: vec![0.0; num_users],
            weights: vec![1.0 / THROUGHPUT_FLOOR; num_users],
            window,
            slot: 0,
        }
    }

    /// Folds one slot's achieved rates (zero for unscheduled users) into the
    /// averages and refreshes the weights.
    pub fn pf_update(&mut self, slot_rates: &[f64]) {
        assert_eq!(slot_rates.len(), self.avg_throughput.len());
        let forget = 1.0 - 1.0 / self.window;
        for (avg, &rate) in self.avg_throughput.iter_mut().zip(slot_rates) {
            *avg = forget * *avg + rate / self.window;
        }
        for (w, &avg) in self.weights.iter_mut().zip(&self.avg_throughput) {
            *w = 1.0 / avg.max(THROUGHPUT_FLOOR);
        }
        self.slot += 1;
    }
}

/// Greedily grows a user subset, each round adding the user that most
/// increases the weighted sum rate. The evaluator returns per-user rates for
/// a candidate subset (in subset order); `weights` are indexed by user id.
/// Stops at `k_max` users or when no candidate improves the objective.
/// Ties break toward the lowest user index.
pub fn greedy_select<F>(pool: &[usize], k_max: usize, weights: &[f64], evaluator: F) -> Vec<usize>
where
    F: Fn(&[usize]) -> Option<Vec<f64>>,
{
    let mut selected: Vec<usize> = Vec::new();
    let mut best_objective = 0.0;
    while selected.len() < k_max {
        let mut round_best: Option<(usize, f64)> = None;
        for &candidate in pool {
            if selected.contains(&candidate) {
                continue;
            }
            let mut trial = selected.clone();
            trial.push(candidate);
            let Some(rates) = evaluator(&trial) else {
                continue;
            };
            let objective: f64 = trial
                .iter()
                .zip(&rates)
                .map(|(&u, &r)| weights[u] * r)
                .sum();
            let improves = match round_best {
                None => objective > best_objective,
                Some((_, best)) => objective > best,
            };
            if improves {
                round_best = Some((candidate, objective));
            }
        }
        match round_best {
            Some((user, objective)) => {
                selected.push(user);
                best_objective = objective;
            }
            None => break,
        }
    }
    selected
}
